//! Arm graphs and Bernoulli environments.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kl_bernoulli, Probability};

/// Rejected ER draws after which generation gives up.
pub const MAX_ER_ATTEMPTS: u64 = 1_000_000;

/// Mean of the optimal arm in distance-based environments.
pub const DISTANCE_MU_MAX: f64 = 0.9;
/// Mean of the farthest arm in distance-based environments.
pub const DISTANCE_MU_MIN: f64 = 0.1;

/// Undirected, connected arm graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UmabGraph {
    adjacency: Vec<Vec<usize>>,
}

impl UmabGraph {
    /// Builds a graph from 0-based edges, rejecting self-loops, duplicate
    /// edges, out-of-range endpoints and disconnected results.
    pub fn from_edges(num_arms: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let graph = Self::from_edges_unchecked(num_arms, edges)?;
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    fn from_edges_unchecked(num_arms: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::InvalidGraph("a graph needs at least one arm".into()));
        }
        let mut adjacency = vec![Vec::new(); num_arms];
        for &(i, j) in edges {
            if i >= num_arms || j >= num_arms {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references an arm outside 1..={num_arms}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on arm {}", i + 1)));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            if list.len() != before {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge at arm {}",
                    i + 1
                )));
            }
        }
        Ok(UmabGraph { adjacency })
    }

    /// Path graph `0 - 1 - ... - (K-1)`.
    pub fn line(num_arms: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_arms).map(|i| (i - 1, i)).collect();
        Self::from_edges(num_arms, &edges)
    }

    /// Complete graph on `num_arms` arms.
    pub fn complete(num_arms: usize) -> Result<Self> {
        let edges: Vec<_> = (0..num_arms)
            .flat_map(|i| (i + 1..num_arms).map(move |j| (i, j)))
            .collect();
        Self::from_edges(num_arms, &edges)
    }

    pub fn num_arms(&self) -> usize {
        self.adjacency.len()
    }

    /// `N(arm)`, sorted ascending.
    #[inline]
    pub fn neighbors(&self, arm: usize) -> &[usize] {
        &self.adjacency[arm]
    }

    pub fn degree(&self, arm: usize) -> usize {
        self.adjacency[arm].len()
    }

    /// `|N+(arm)|`, the neighborhood including the arm itself.
    #[inline]
    pub fn closed_degree(&self, arm: usize) -> usize {
        self.adjacency[arm].len() + 1
    }

    /// `gamma = max_i |N(i)|`.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(Option::is_some)
    }

    /// BFS hop distances from `source`; `None` for unreachable arms.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_arms()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or_default() + 1;
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// A connected Erdős–Rényi draw `G(K, p)`.
///
/// The `K(K-1)/2` edge indicators are drawn in lexicographic order of `(i, j)`.
/// Disconnected draws are discarded and the whole graph is resampled, up to
/// [`MAX_ER_ATTEMPTS`] times.
pub fn build_er_graph<R: Rng + ?Sized>(
    num_arms: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Result<UmabGraph> {
    if num_arms < 2 {
        return Err(Error::InvalidGraph(format!(
            "Erdos-Renyi graphs need at least 2 arms, got {num_arms}"
        )));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::InvalidGraph(format!(
            "edge probability {edge_prob} is outside (0, 1]"
        )));
    }
    let mut edges = Vec::new();
    for _ in 0..MAX_ER_ATTEMPTS {
        edges.clear();
        for i in 0..num_arms {
            for j in i + 1..num_arms {
                if rng.gen::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        let graph = UmabGraph::from_edges_unchecked(num_arms, &edges)?;
        if graph.is_connected() {
            return Ok(graph);
        }
    }
    Err(Error::ConnectivityAbort {
        num_arms,
        edge_prob,
        attempts: MAX_ER_ATTEMPTS,
    })
}

/// True iff the maximum of `means` is attained by exactly one arm and every
/// other arm has a neighbor with a strictly larger mean.
pub fn verify_unimodal(graph: &UmabGraph, means: &[f64]) -> bool {
    unimodality_violation(graph, means).is_none()
}

fn unimodality_violation(graph: &UmabGraph, means: &[f64]) -> Option<String> {
    if means.len() != graph.num_arms() {
        return Some(format!(
            "{} means for {} arms",
            means.len(),
            graph.num_arms()
        ));
    }
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let maxima: Vec<_> = (0..means.len()).filter(|&i| means[i] == best).collect();
    if maxima.len() != 1 {
        let arms: Vec<_> = maxima.iter().map(|i| (i + 1).to_string()).collect();
        return Some(format!(
            "maximum mean {best} is shared by arms {}",
            arms.join(", ")
        ));
    }
    (0..means.len())
        .filter(|&i| i != maxima[0])
        .find(|&i| graph.neighbors(i).iter().all(|&j| means[j] <= means[i]))
        .map(|i| format!("arm {} (mean {}) is a local maximum", i + 1, means[i]))
}

/// An arm graph with a Bernoulli reward distribution on every arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliEnvironment {
    graph: UmabGraph,
    means: Vec<Probability>,
    optimal_index: usize,
    seed: u64,
}

impl BernoulliEnvironment {
    /// Validates that `means` are probabilities and unimodal on `graph`.
    pub fn new(graph: UmabGraph, means: Vec<f64>, seed: u64) -> Result<Self> {
        let means = means
            .into_iter()
            .map(Probability::new)
            .collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = means.iter().map(|p| p.get()).collect();
        if let Some(reason) = unimodality_violation(&graph, &raw) {
            return Err(Error::NotUnimodal(reason));
        }
        let optimal_index = (0..raw.len())
            .max_by(|&a, &b| raw[a].total_cmp(&raw[b]))
            .expect("graph has at least one arm");
        Ok(BernoulliEnvironment {
            graph,
            means,
            optimal_index,
            seed,
        })
    }

    pub fn graph(&self) -> &UmabGraph {
        &self.graph
    }

    pub fn num_arms(&self) -> usize {
        self.graph.num_arms()
    }

    #[inline]
    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm].get()
    }

    pub fn means(&self) -> Vec<f64> {
        self.means.iter().map(|p| p.get()).collect()
    }

    pub fn optimal_index(&self) -> usize {
        self.optimal_index
    }

    pub fn optimal_mean(&self) -> f64 {
        self.mean(self.optimal_index)
    }

    /// `mu* - mu_arm`.
    #[inline]
    pub fn gap(&self, arm: usize) -> f64 {
        self.optimal_mean() - self.mean(arm)
    }

    /// Seed that generated this environment (0 for deterministic builders).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Bernoulli draw from `arm`: 1 with probability `mu_arm`.
    #[inline]
    pub fn draw_reward<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> u32 {
        u32::from(rng.gen::<f64>() < self.mean(arm))
    }

    /// Coefficient of `log T` in the asymptotic regret lower bound:
    /// the sum over neighbors `i` of the optimal arm of
    /// `(mu* - mu_i) / KL(mu_i, mu*)`.
    pub fn lower_bound_constant(&self) -> f64 {
        let best = self.optimal_mean();
        self.graph
            .neighbors(self.optimal_index)
            .iter()
            .map(|&i| {
                let mu = self.mean(i);
                let kl = kl_bernoulli(mu, best);
                if kl.is_infinite() {
                    0.0
                } else {
                    (best - mu) / kl
                }
            })
            .sum()
    }

    pub fn to_file(&self) -> EnvironmentFile {
        EnvironmentFile {
            num_arms: self.num_arms(),
            edges: self.graph.edges().map(|(i, j)| [i + 1, j + 1]).collect(),
            means: self.means(),
            optimal_index: self.optimal_index + 1,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.to_file()).expect("environment serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnvironmentFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<environment>".into(),
            message: e.to_string(),
        })?;
        file.try_into()
    }
}

/// On-disk form of an environment, with 1-based arm indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFile {
    pub num_arms: usize,
    pub edges: Vec<[usize; 2]>,
    pub means: Vec<f64>,
    pub optimal_index: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TryFrom<EnvironmentFile> for BernoulliEnvironment {
    type Error = Error;

    fn try_from(file: EnvironmentFile) -> Result<Self> {
        let mut edges = Vec::with_capacity(file.edges.len());
        for [i, j] in file.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph(
                    "arm indices in files are 1-based".into(),
                ));
            }
            edges.push((i - 1, j - 1));
        }
        let graph = UmabGraph::from_edges(file.num_arms, &edges)?;
        let env = BernoulliEnvironment::new(graph, file.means, file.seed)?;
        if file.optimal_index != env.optimal_index + 1 {
            return Err(Error::InvalidEnvironment(format!(
                "optimal_index {} does not match the best arm {}",
                file.optimal_index,
                env.optimal_index + 1
            )));
        }
        Ok(env)
    }
}

/// Line graph with a triangular mean profile peaking at the middle arm.
///
/// Means decrease linearly from `mu_max` at the center to `mu_min` at both
/// endpoints, so consecutive arms differ by `(mu_max - mu_min) / ((K-1)/2)`.
pub fn build_line_graph(num_arms: usize, mu_min: f64, mu_max: f64) -> Result<BernoulliEnvironment> {
    if num_arms < 3 || num_arms.is_multiple_of(2) {
        return Err(Error::InvalidEnvironment(format!(
            "line graphs need an odd number of arms >= 3, got {num_arms}"
        )));
    }
    Probability::new(mu_min)?;
    Probability::new(mu_max)?;
    if mu_min >= mu_max {
        return Err(Error::InvalidEnvironment(format!(
            "mu_min {mu_min} must be below mu_max {mu_max}"
        )));
    }
    let center = (num_arms - 1) / 2;
    let step = (mu_max - mu_min) / center as f64;
    let means = (0..num_arms)
        .map(|i| {
            let offset = i.abs_diff(center);
            if offset == center {
                mu_min
            } else {
                mu_max - offset as f64 * step
            }
        })
        .collect();
    BernoulliEnvironment::new(UmabGraph::line(num_arms)?, means, 0)
}

/// Picks the optimal arm uniformly at random and sets
/// `mu_i = 0.9 - d_i * (0.9 - 0.1) / d_max`, where `d_i` is the hop distance
/// from arm `i` to the optimal arm.
pub fn assign_rewards_by_distance<R: Rng + ?Sized>(
    graph: UmabGraph,
    rng: &mut R,
) -> Result<BernoulliEnvironment> {
    let num_arms = graph.num_arms();
    if num_arms < 2 {
        return Err(Error::InvalidEnvironment(
            "distance-based rewards need at least 2 arms".into(),
        ));
    }
    let optimum = rng.gen_range(0..num_arms);
    let dist = graph
        .hop_distances(optimum)
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidGraph("graph is not connected".into()))?;
    let d_max = dist.iter().copied().max().unwrap_or(0);
    let means = dist.iter().map(|&d| distance_mean(d, d_max)).collect();
    BernoulliEnvironment::new(graph, means, 0)
}

#[inline]
fn distance_mean(distance: usize, d_max: usize) -> f64 {
    if distance == d_max {
        return DISTANCE_MU_MIN;
    }
    DISTANCE_MU_MAX - (DISTANCE_MU_MAX - DISTANCE_MU_MIN) * (distance as f64 / d_max as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line17_profile() {
        let env = build_line_graph(17, 0.1, 0.9).unwrap();
        assert_eq!(env.optimal_index(), 8);
        assert_eq!(env.mean(8), 0.9);
        assert_eq!(env.mean(0), 0.1);
        assert_eq!(env.mean(16), 0.1);
        for i in 0..16 {
            assert_abs_diff_eq!((env.mean(i) - env.mean(i + 1)).abs(), 0.1, epsilon = 1e-12);
        }
        assert_eq!(env.graph().num_edges(), 16);
    }

    #[test]
    fn line3_is_smallest_instance() {
        let env = build_line_graph(3, 0.1, 0.9).unwrap();
        assert_eq!(
            env.graph().edges().collect::<Vec<_>>(),
            vec![(0, 1), (1, 2)]
        );
        assert_eq!(env.means(), vec![0.1, 0.9, 0.1]);
    }

    #[test]
    fn small_gap_line() {
        let env = build_line_graph(17, 0.1, 0.108).unwrap();
        for i in 0..16 {
            assert_abs_diff_eq!(
                (env.mean(i) - env.mean(i + 1)).abs(),
                0.001,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn line_rejects_bad_parameters() {
        assert!(build_line_graph(16, 0.1, 0.9).is_err());
        assert!(build_line_graph(1, 0.1, 0.9).is_err());
        assert!(build_line_graph(17, 0.9, 0.9).is_err());
        assert!(build_line_graph(17, 0.5, 0.2).is_err());
        assert!(build_line_graph(17, 0.1, 1.2).is_err());
    }

    #[test]
    fn er_complete_when_p_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = build_er_graph(5, 1.0, &mut rng).unwrap();
        assert_eq!(g.num_edges(), 10);
        assert_eq!(g, UmabGraph::complete(5).unwrap());
    }

    #[test]
    fn er_sparse_graphs_are_connected_and_reproducible() {
        let p = 50f64.ln() / 50.0;
        for seed in 0..20 {
            let g = build_er_graph(50, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(g.is_connected());
            let again = build_er_graph(50, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(g, again);
        }
    }

    #[test]
    fn er_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_er_graph(1, 0.5, &mut rng).is_err());
        assert!(build_er_graph(5, 0.0, &mut rng).is_err());
        assert!(build_er_graph(5, 1.5, &mut rng).is_err());
    }

    #[test]
    fn distance_mean_formula() {
        assert_eq!(distance_mean(0, 4), 0.9);
        assert_eq!(distance_mean(4, 4), 0.1);
        assert_abs_diff_eq!(distance_mean(1, 4), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn distance_rewards_on_a_star() {
        // star centered on arm 0: optimum anywhere gives d_max <= 2
        let edges: Vec<_> = (1..6).map(|i| (0, i)).collect();
        let graph = UmabGraph::from_edges(6, &edges).unwrap();
        for seed in 0..10 {
            let env =
                assign_rewards_by_distance(graph.clone(), &mut ChaCha8Rng::seed_from_u64(seed))
                    .unwrap();
            let opt = env.optimal_index();
            assert_eq!(env.optimal_mean(), 0.9);
            for i in 0..6 {
                if i == opt {
                    continue;
                }
                let expected = if opt != 0 && i == 0 { 0.5 } else { 0.1 };
                assert_abs_diff_eq!(env.mean(i), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn distance_rewards_reject_single_arm() {
        let graph = UmabGraph::from_edges(1, &[]).unwrap();
        assert!(assign_rewards_by_distance(graph, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn unimodality_examples() {
        let line = UmabGraph::line(3).unwrap();
        assert!(!verify_unimodal(&line, &[0.9, 0.1, 0.8]));
        assert!(!verify_unimodal(&line, &[0.9, 0.9, 0.1]));
        assert!(verify_unimodal(&line, &[0.1, 0.9, 0.8]));
        let env = build_line_graph(17, 0.1, 0.9).unwrap();
        assert!(verify_unimodal(env.graph(), &env.means()));
        // equal neighbors are fine as long as each has a better neighbor
        let kite = UmabGraph::from_edges(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap();
        assert!(verify_unimodal(&kite, &[0.5, 0.5, 0.9, 0.1]));
        let path = UmabGraph::line(4).unwrap();
        assert!(!verify_unimodal(&path, &[0.5, 0.5, 0.9, 0.1]));
    }

    #[test]
    fn graph_validation() {
        assert!(UmabGraph::from_edges(3, &[(0, 1)]).is_err());
        assert!(UmabGraph::from_edges(3, &[(0, 1), (1, 1), (1, 2)]).is_err());
        assert!(UmabGraph::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).is_err());
        assert!(UmabGraph::from_edges(3, &[(0, 1), (1, 3)]).is_err());
        let g = UmabGraph::from_edges(4, &[(2, 0), (0, 1), (3, 0)]).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!(g.max_degree(), 3);
        assert_eq!(g.closed_degree(1), 2);
    }

    #[test]
    fn lower_bound_constants() {
        let env = build_line_graph(17, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(
            env.lower_bound_constant(),
            4.504_199_397_049_058,
            epsilon = 1e-9
        );
        let two =
            BernoulliEnvironment::new(UmabGraph::line(2).unwrap(), vec![0.9, 0.1], 0).unwrap();
        assert_abs_diff_eq!(
            two.lower_bound_constant(),
            0.455_119_613_313_418_7,
            epsilon = 1e-9
        );
    }

    #[test]
    fn lower_bound_on_complete_graph_sums_all_arms() {
        let means = vec![0.9, 0.5, 0.3, 0.7, 0.2];
        let env =
            BernoulliEnvironment::new(UmabGraph::complete(5).unwrap(), means.clone(), 0).unwrap();
        let expected: f64 = means[1..]
            .iter()
            .map(|&m| (0.9 - m) / kl_bernoulli(m, 0.9))
            .sum();
        assert_abs_diff_eq!(env.lower_bound_constant(), expected, epsilon = 1e-12);
    }

    #[test]
    fn draw_reward_extremes_and_frequency() {
        let env =
            BernoulliEnvironment::new(UmabGraph::line(3).unwrap(), vec![0.0, 1.0, 0.9], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(env.draw_reward(0, &mut rng), 0);
            assert_eq!(env.draw_reward(1, &mut rng), 1);
        }
        let n = 100_000;
        let hits: u32 = (0..n).map(|_| env.draw_reward(2, &mut rng)).sum();
        assert_abs_diff_eq!(hits as f64 / n as f64, 0.9, epsilon = 0.01);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let graph = build_er_graph(12, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let env = assign_rewards_by_distance(graph, &mut ChaCha8Rng::seed_from_u64(10))
            .unwrap()
            .with_seed(77);
        let text = env.to_json();
        let back = BernoulliEnvironment::from_json(&text).unwrap();
        assert_eq!(back, env);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn json_rejects_wrong_optimum_and_non_unimodal() {
        let bad_opt = r#"{"num_arms":3,"edges":[[1,2],[2,3]],"means":[0.1,0.9,0.5],"optimal_index":1,"seed":0}"#;
        assert!(matches!(
            BernoulliEnvironment::from_json(bad_opt),
            Err(Error::InvalidEnvironment(_))
        ));
        let local_max = r#"{"num_arms":3,"edges":[[1,2],[2,3]],"means":[0.9,0.1,0.8],"optimal_index":1,"seed":0}"#;
        assert!(matches!(
            BernoulliEnvironment::from_json(local_max),
            Err(Error::NotUnimodal(_))
        ));
        let zero_based =
            r#"{"num_arms":2,"edges":[[0,1]],"means":[0.9,0.1],"optimal_index":1,"seed":0}"#;
        assert!(BernoulliEnvironment::from_json(zero_based).is_err());
    }
}
