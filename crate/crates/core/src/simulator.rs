//! Seeded trials, ensembles and the regret figures of merit.

use std::path::Path;

use rayon::prelude::*;

use crate::environment::BernoulliEnvironment;
use crate::error::{Error, Result};
use crate::policies::{ArmStatistics, Policy, PolicyKind};
use crate::seed::{trial_seed, trial_streams};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Nominal number of log-spaced checkpoints.
pub const NUM_CHECKPOINTS: usize = 200;

/// Cumulative pseudo-regret of one trial at every round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub horizon: u64,
    /// `cumulative_regret[t - 1]` is the regret after round `t`.
    pub cumulative_regret: Vec<f64>,
    pub pull_counts: Vec<u64>,
    pub seed: u64,
}

impl TrialTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Runs `horizon` rounds and calls `record(t, regret_after_t)` every round.
fn simulate<P, F>(
    env: &BernoulliEnvironment,
    policy: &mut P,
    horizon: u64,
    seed: u64,
    mut record: F,
) -> Result<ArmStatistics>
where
    P: Policy + ?Sized,
    F: FnMut(u64, f64),
{
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let (mut reward_rng, mut policy_rng) = trial_streams(seed);
    let mut stats = ArmStatistics::new(env.num_arms());
    let mut regret = 0.0;
    for round in 1..=horizon {
        let decision = policy.decide(env.graph(), &stats, round, &mut policy_rng);
        let arm = decision.chosen_arm;
        if arm >= env.num_arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                num_arms: env.num_arms(),
            });
        }
        let reward = env.draw_reward(arm, &mut reward_rng);
        stats.update(decision, reward)?;
        regret += env.gap(arm);
        record(round, regret);
    }
    Ok(stats)
}

/// One seeded trial with the full per-round regret trajectory.
///
/// The trial draws rewards and policy randomness from two independent
/// streams derived from `seed`, so identical inputs give identical traces.
pub fn run_trial<P: Policy + ?Sized>(
    env: &BernoulliEnvironment,
    policy: &mut P,
    horizon: u64,
    seed: u64,
) -> Result<TrialTrace> {
    let mut cumulative_regret = Vec::with_capacity(horizon as usize);
    let stats = simulate(env, policy, horizon, seed, |_, r| cumulative_regret.push(r))?;
    Ok(TrialTrace {
        horizon,
        cumulative_regret,
        pull_counts: stats.pull_counts().to_vec(),
        seed,
    })
}

/// Regret of one trial sampled at a checkpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTrace {
    pub graph_index: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub values: Vec<f64>,
    pub pull_counts: Vec<u64>,
}

impl CheckpointTrace {
    pub fn final_regret(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Like [`run_trial`] but only keeps the regret at `checkpoints`, which must
/// be strictly increasing and end at `horizon`.
pub fn run_trial_at<P: Policy + ?Sized>(
    env: &BernoulliEnvironment,
    policy: &mut P,
    checkpoints: &[u64],
    seed: u64,
) -> Result<(Vec<f64>, Vec<u64>)> {
    let horizon = checkpoints.last().copied().ok_or(Error::ZeroHorizon)?;
    let mut values = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let stats = simulate(env, policy, horizon, seed, |t, r| {
        if checkpoints.get(next) == Some(&t) {
            values.push(r);
            next += 1;
        }
    })?;
    Ok((values, stats.pull_counts().to_vec()))
}

/// About [`NUM_CHECKPOINTS`] log-spaced rounds in `[1, horizon]`, rounded,
/// deduplicated and always ending at `horizon`.
pub fn checkpoint_grid(horizon: u64) -> Vec<u64> {
    if horizon == 0 {
        return Vec::new();
    }
    let log_h = (horizon as f64).ln();
    let mut grid: Vec<u64> = (0..NUM_CHECKPOINTS)
        .map(|k| {
            let x = log_h * k as f64 / (NUM_CHECKPOINTS - 1) as f64;
            (x.exp().round() as u64).clamp(1, horizon)
        })
        .collect();
    grid.push(horizon);
    grid.dedup();
    grid
}

/// Ensemble parameters shared by every policy of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub horizon: u64,
    pub num_trials: usize,
    pub base_seed: u64,
}

/// Mean cumulative regret with 95% half-widths on a checkpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub checkpoints: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub half_width_95: Vec<f64>,
    /// Number of traces aggregated; 0 when read back from CSV.
    pub num_trials: usize,
}

impl EnsembleSummary {
    /// Aggregates traces in the given order: mean and `1.96 s / sqrt(n)`
    /// with the unbiased sample standard deviation.
    pub fn from_traces(checkpoints: Vec<u64>, traces: &[Vec<f64>]) -> Result<Self> {
        let n = traces.len();
        if n < 2 {
            return Err(Error::TooFewTrials(n));
        }
        if let Some(bad) = traces.iter().find(|t| t.len() != checkpoints.len()) {
            return Err(Error::MismatchedSummaries(format!(
                "trace of length {} for {} checkpoints",
                bad.len(),
                checkpoints.len()
            )));
        }
        let mut mean_regret = Vec::with_capacity(checkpoints.len());
        let mut half_width_95 = Vec::with_capacity(checkpoints.len());
        for k in 0..checkpoints.len() {
            let mean = traces.iter().map(|t| t[k]).sum::<f64>() / n as f64;
            let var = traces.iter().map(|t| (t[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            mean_regret.push(mean);
            half_width_95.push(Z_95 * var.sqrt() / (n as f64).sqrt());
        }
        Ok(EnsembleSummary {
            checkpoints,
            mean_regret,
            half_width_95,
            num_trials: n,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.checkpoints.last().copied().unwrap_or(0)
    }

    pub fn final_mean(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_half_width(&self) -> f64 {
        self.half_width_95.last().copied().unwrap_or(0.0)
    }

    /// CSV text with header `round,mean_regret,half_width_95`.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["round", "mean_regret", "half_width_95"])
            .expect("in-memory write");
        for k in 0..self.checkpoints.len() {
            writer
                .write_record([
                    self.checkpoints[k].to_string(),
                    self.mean_regret[k].to_string(),
                    self.half_width_95[k].to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: origin.to_string(),
            message,
        };
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["round", "mean_regret", "half_width_95"] {
            return Err(parse_err(format!(
                "expected header `round,mean_regret,half_width_95`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut summary = EnsembleSummary {
            checkpoints: Vec::new(),
            mean_regret: Vec::new(),
            half_width_95: Vec::new(),
            num_trials: 0,
        };
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let bad = |what: &str| parse_err(format!("line {}: invalid {what}", line + 2));
            summary
                .checkpoints
                .push(field(0).parse().map_err(|_| bad("round"))?);
            summary
                .mean_regret
                .push(field(1).parse().map_err(|_| bad("mean_regret"))?);
            summary
                .half_width_95
                .push(field(2).parse().map_err(|_| bad("half_width_95"))?);
        }
        if summary.checkpoints.is_empty() {
            return Err(parse_err("no data rows".into()));
        }
        Ok(summary)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }
}

/// Summary plus the per-trial checkpoint values it was computed from,
/// ordered by `(graph_index, trial_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub summary: EnsembleSummary,
    pub trials: Vec<CheckpointTrace>,
}

/// Runs `num_trials` trials on each environment and aggregates all of them.
///
/// Trial `i` on environment `g` uses seed `trial_seed(base_seed, g, i)`, so
/// every policy of an experiment faces the same reward streams. Trials run
/// on the current rayon pool; results are reduced in `(g, i)` order, so the
/// summary does not depend on the thread count.
pub fn run_ensemble_on<P, F>(
    envs: &[BernoulliEnvironment],
    make_policy: F,
    config: &EnsembleConfig,
) -> Result<Ensemble>
where
    P: Policy,
    F: Fn(&BernoulliEnvironment) -> P + Sync,
{
    if config.num_trials < 2 {
        return Err(Error::TooFewTrials(config.num_trials));
    }
    if config.horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    if envs.is_empty() {
        return Err(Error::InvalidEnvironment("no environments to run".into()));
    }
    let checkpoints = checkpoint_grid(config.horizon);
    let jobs: Vec<(usize, usize)> = (0..envs.len())
        .flat_map(|g| (0..config.num_trials).map(move |i| (g, i)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(g, i)| {
            let env = &envs[g];
            let seed = trial_seed(config.base_seed, g as u64, i as u64);
            let mut policy = make_policy(env);
            let (values, pull_counts) = run_trial_at(env, &mut policy, &checkpoints, seed)?;
            Ok(CheckpointTrace {
                graph_index: g,
                trial_index: i,
                seed,
                values,
                pull_counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Vec<f64>> = trials.iter().map(|t| t.values.clone()).collect();
    let summary = EnsembleSummary::from_traces(checkpoints, &values)?;
    Ok(Ensemble { summary, trials })
}

/// [`run_ensemble_on`] for a built-in policy.
pub fn run_ensemble(
    envs: &[BernoulliEnvironment],
    policy: PolicyKind,
    config: &EnsembleConfig,
) -> Result<Ensemble> {
    run_ensemble_on(envs, |env| policy.instantiate(env.graph()), config)
}

/// A ratio with a 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub half_width_95: f64,
}

/// `R_T(a) / R_T(b)` at the final checkpoint.
///
/// The half-width is propagated to first order from the two final
/// half-widths, treating the ensembles as independent.
pub fn regret_ratio(a: &EnsembleSummary, b: &EnsembleSummary) -> Result<RatioEstimate> {
    if a.checkpoints != b.checkpoints {
        return Err(Error::MismatchedSummaries(format!(
            "checkpoint grids differ ({} vs {} rounds, horizons {} vs {})",
            a.checkpoints.len(),
            b.checkpoints.len(),
            a.horizon(),
            b.horizon()
        )));
    }
    let (num, den) = (a.final_mean(), b.final_mean());
    if den.is_nan() || den <= 0.0 {
        return Err(Error::NonPositiveDenominator(den));
    }
    let ratio = num / den;
    let (hn, hd) = (a.final_half_width(), b.final_half_width());
    let half_width_95 = ((hn / den).powi(2) + (num * hd / (den * den)).powi(2)).sqrt();
    Ok(RatioEstimate {
        ratio,
        half_width_95,
    })
}

/// Growth of the fitted log-slope between the two halves of the last decade
/// above which regret is reported as linear rather than logarithmic.
pub const LINEAR_GROWTH_THRESHOLD: f64 = 2.0;

/// Least-squares fit of `mean_regret(t) = slope * ln t + intercept` over the
/// last decade of rounds, compared with the asymptotic lower-bound constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeDiagnostic {
    pub slope: f64,
    pub intercept: f64,
    pub lower_bound_constant: f64,
    /// `slope / lower_bound_constant`.
    pub ratio_to_bound: f64,
    /// Slope over the second half of the decade divided by the slope over the
    /// first half; near 1 for logarithmic regret, near `sqrt(10)` for linear.
    pub slope_growth: f64,
    pub finite_positive: bool,
    pub linear_trend: bool,
}

fn fit_log_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Log-regret diagnostic over `[T/10, T]`; needs `T >= 10^4`.
pub fn log_slope_check(
    summary: &EnsembleSummary,
    env: &BernoulliEnvironment,
) -> Result<SlopeDiagnostic> {
    let horizon = summary.horizon();
    if horizon < 10_000 {
        return Err(Error::Config(format!(
            "log-slope diagnostic needs a horizon of at least 10^4, got {horizon}"
        )));
    }
    let points: Vec<(f64, f64)> = summary
        .checkpoints
        .iter()
        .zip(&summary.mean_regret)
        .filter(|(&t, _)| t * 10 >= horizon)
        .map(|(&t, &r)| ((t as f64).ln(), r))
        .collect();
    let (slope, intercept) = fit_log_line(&points)
        .ok_or_else(|| Error::Config("too few checkpoints in the last decade".into()))?;
    let split = (horizon as f64).ln() - 0.5 * 10f64.ln();
    let (early, late): (Vec<_>, Vec<_>) = points.iter().partition(|p| p.0 < split);
    let slope_growth = match (fit_log_line(&early), fit_log_line(&late)) {
        (Some((s1, _)), Some((s2, _))) if s1 > 0.0 => s2 / s1,
        _ => f64::NAN,
    };
    let lower_bound_constant = env.lower_bound_constant();
    Ok(SlopeDiagnostic {
        slope,
        intercept,
        lower_bound_constant,
        ratio_to_bound: slope / lower_bound_constant,
        slope_growth,
        finite_positive: slope.is_finite() && slope > 0.0,
        linear_trend: slope_growth > LINEAR_GROWTH_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{build_line_graph, UmabGraph};
    use crate::policies::FixedArm;

    fn constant_summary(value: f64, horizon: u64) -> EnsembleSummary {
        let grid = checkpoint_grid(horizon);
        let traces = vec![vec![value; grid.len()]; 5];
        EnsembleSummary::from_traces(grid, &traces).unwrap()
    }

    #[test]
    fn grid_shape() {
        let grid = checkpoint_grid(100_000);
        assert_eq!(grid[0], 1);
        assert_eq!(*grid.last().unwrap(), 100_000);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid.len() > 150 && grid.len() <= NUM_CHECKPOINTS);
        assert_eq!(checkpoint_grid(1), vec![1]);
        assert_eq!(checkpoint_grid(3), vec![1, 2, 3]);
    }

    #[test]
    fn single_arm_has_no_regret() {
        let env = BernoulliEnvironment::new(UmabGraph::from_edges(1, &[]).unwrap(), vec![0.4], 0)
            .unwrap();
        for kind in [
            PolicyKind::Uts,
            PolicyKind::Ts,
            PolicyKind::Klucb { c: 3.0 },
            PolicyKind::Osub { c: 3.0 },
        ] {
            let mut policy = kind.instantiate(env.graph());
            let trace = run_trial(&env, &mut policy, 200, 1).unwrap();
            assert!(trace.cumulative_regret.iter().all(|&r| r == 0.0));
            assert_eq!(trace.pull_counts, vec![200]);
        }
    }

    #[test]
    fn fixed_arm_regret() {
        let env =
            BernoulliEnvironment::new(UmabGraph::line(2).unwrap(), vec![0.9, 0.8], 0).unwrap();
        let trace = run_trial(&env, &mut FixedArm(1), 10, 0).unwrap();
        assert!((trace.final_regret() - 1.0).abs() < 1e-12);
        let oracle = run_trial(&env, &mut FixedArm(0), 10, 0).unwrap();
        assert!(oracle.cumulative_regret.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn trial_rejects_zero_horizon_and_bad_arms() {
        let env = build_line_graph(3, 0.1, 0.9).unwrap();
        assert!(matches!(
            run_trial(&env, &mut FixedArm(0), 0, 0),
            Err(Error::ZeroHorizon)
        ));
        assert!(matches!(
            run_trial(&env, &mut FixedArm(5), 3, 0),
            Err(Error::ArmOutOfRange { .. })
        ));
    }

    #[test]
    fn checkpoint_trial_matches_full_trace() {
        let env = build_line_graph(9, 0.1, 0.9).unwrap();
        let grid = checkpoint_grid(3000);
        let mut p1 = PolicyKind::Uts.instantiate(env.graph());
        let mut p2 = PolicyKind::Uts.instantiate(env.graph());
        let full = run_trial(&env, &mut p1, 3000, 17).unwrap();
        let (values, pulls) = run_trial_at(&env, &mut p2, &grid, 17).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            assert_eq!(values[k], full.cumulative_regret[t as usize - 1]);
        }
        assert_eq!(pulls, full.pull_counts);
    }

    #[test]
    fn constant_traces_have_zero_width() {
        let s = constant_summary(5.0, 1000);
        assert!(s.mean_regret.iter().all(|&m| m == 5.0));
        assert!(s.half_width_95.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn summary_statistics() {
        let traces = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 10.0]];
        let s = EnsembleSummary::from_traces(vec![1, 2], &traces).unwrap();
        assert_eq!(s.mean_regret, vec![3.0, 6.0]);
        assert!((s.half_width_95[0] - 1.96 * 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((s.half_width_95[1] - 1.96 * 4.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            EnsembleSummary::from_traces(vec![1], &[vec![1.0]]),
            Err(Error::TooFewTrials(1))
        ));
    }

    #[test]
    fn ensemble_rejects_single_trial() {
        let env = build_line_graph(3, 0.1, 0.9).unwrap();
        let cfg = EnsembleConfig {
            horizon: 10,
            num_trials: 1,
            base_seed: 0,
        };
        assert!(matches!(
            run_ensemble(&[env], PolicyKind::Ts, &cfg),
            Err(Error::TooFewTrials(1))
        ));
    }

    #[test]
    fn ratio_of_identical_summaries() {
        let s = constant_summary(5.0, 100);
        let r = regret_ratio(&s, &s).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.half_width_95, 0.0);
    }

    #[test]
    fn ratio_propagates_uncertainty() {
        let a = EnsembleSummary {
            checkpoints: vec![10],
            mean_regret: vec![2.0],
            half_width_95: vec![0.2],
            num_trials: 10,
        };
        let b = EnsembleSummary {
            checkpoints: vec![10],
            mean_regret: vec![4.0],
            half_width_95: vec![0.4],
            num_trials: 10,
        };
        let r = regret_ratio(&a, &b).unwrap();
        assert_eq!(r.ratio, 0.5);
        // relative errors 10% and 10% add in quadrature
        assert!((r.half_width_95 - 0.5 * (0.02f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ratio_guards() {
        let zero = constant_summary(0.0, 100);
        let five = constant_summary(5.0, 100);
        assert!(matches!(
            regret_ratio(&five, &zero),
            Err(Error::NonPositiveDenominator(_))
        ));
        let other = constant_summary(5.0, 200);
        assert!(matches!(
            regret_ratio(&five, &other),
            Err(Error::MismatchedSummaries(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let traces = vec![vec![0.0, 1.5, 2.25], vec![0.1, 1.0 / 3.0, 7.0]];
        let s = EnsembleSummary::from_traces(vec![1, 5, 9], &traces).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("round,mean_regret,half_width_95\n1,"));
        let back = EnsembleSummary::from_csv(&text, "mem").unwrap();
        assert_eq!(back.checkpoints, s.checkpoints);
        assert_eq!(back.mean_regret, s.mean_regret);
        assert_eq!(back.half_width_95, s.half_width_95);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let err = EnsembleSummary::from_csv("round,mean\n1,2\n", "bad.csv").unwrap_err();
        assert!(err.to_string().contains("bad.csv"));
        assert!(
            EnsembleSummary::from_csv("round,mean_regret,half_width_95\n1,x,0\n", "x").is_err()
        );
    }

    #[test]
    fn slope_of_oracle_is_zero() {
        let env = build_line_graph(17, 0.1, 0.9).unwrap();
        let d = log_slope_check(&constant_summary(0.0, 100_000), &env).unwrap();
        assert_eq!(d.slope, 0.0);
        assert!(!d.finite_positive);
        assert!(!d.linear_trend);
        assert!(log_slope_check(&constant_summary(0.0, 1000), &env).is_err());
    }

    #[test]
    fn slope_recovers_log_and_flags_linear() {
        let env = build_line_graph(17, 0.1, 0.9).unwrap();
        let grid = checkpoint_grid(100_000);
        let make = |f: &dyn Fn(f64) -> f64| EnsembleSummary {
            mean_regret: grid.iter().map(|&t| f(t as f64)).collect(),
            half_width_95: vec![0.0; grid.len()],
            checkpoints: grid.clone(),
            num_trials: 2,
        };
        let log = log_slope_check(&make(&|t| 4.5 * t.ln() + 3.0), &env).unwrap();
        assert!((log.slope - 4.5).abs() < 1e-9);
        assert!((log.intercept - 3.0).abs() < 1e-7);
        assert!(!log.linear_trend);
        let lin = log_slope_check(&make(&|t| 0.4 * t), &env).unwrap();
        assert!(lin.linear_trend, "growth = {}", lin.slope_growth);
    }
}
