//! File-driven experiments.
//!
//! An experiment is a TOML file naming the environments, the policies and the
//! ensemble parameters:
//!
//! ```toml
//! horizon = 100000
//! num_trials = 100
//! base_seed = 1
//! policies = ["uts", "ts", "klucb", "osub"]
//! klucb_c = 3.0
//! initial_sweep = false   # optional: pull every arm once first
//!
//! [[environments]]
//! name = "line17"
//! kind = "line"
//! num_arms = 17
//! mu_min = 0.1
//! mu_max = 0.9
//!
//! [[environments]]
//! name = "er_k10_log"
//! kind = "erdos_renyi"
//! num_arms = 10
//! edge_prob = "log"   # a number, "log" (ln K / K), "line", or "<c>/K"
//! num_graphs = 10
//! ```
//!
//! Running it writes one `round,mean_regret,half_width_95` CSV per
//! (environment, policy) pair, a `table.csv` of final regrets, every
//! environment instance as JSON, and a `manifest.json` that embeds the
//! resolved configuration and can itself be passed back to [`load_config`]
//! to replay the experiment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::environment::{
    assign_rewards_by_distance, build_er_graph, build_line_graph, BernoulliEnvironment, UmabGraph,
};
use crate::error::{Error, Result};
use crate::policies::{PolicyId, PolicyKind, DEFAULT_KLUCB_C};
use crate::seed::{graph_seed, rng_from_seed};
use crate::simulator::{run_ensemble_on, EnsembleConfig, EnsembleSummary};

/// Edge probability of a generated graph, possibly relative to `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeProb {
    Value(f64),
    /// `ln K / K`.
    LogOverK,
    /// `c / K`.
    PerArm(f64),
    /// A line graph instead of an Erdős–Rényi draw.
    Line,
}

impl EdgeProb {
    /// Probability for `num_arms` arms; `None` for [`EdgeProb::Line`].
    pub fn resolve(&self, num_arms: usize) -> Option<f64> {
        let k = num_arms as f64;
        match *self {
            EdgeProb::Value(p) => Some(p),
            EdgeProb::LogOverK => Some(k.ln() / k),
            EdgeProb::PerArm(c) => Some(c / k),
            EdgeProb::Line => None,
        }
    }
}

impl fmt::Display for EdgeProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeProb::Value(p) => write!(f, "{p}"),
            EdgeProb::LogOverK => f.write_str("log"),
            EdgeProb::PerArm(c) => write!(f, "{c}/K"),
            EdgeProb::Line => f.write_str("line"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeProbRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<EdgeProbRepr> for EdgeProb {
    type Error = String;

    fn try_from(repr: EdgeProbRepr) -> std::result::Result<Self, String> {
        match repr {
            EdgeProbRepr::Number(p) => Ok(EdgeProb::Value(p)),
            EdgeProbRepr::Text(text) => match text.trim() {
                "log" | "log(K)/K" => Ok(EdgeProb::LogOverK),
                "line" => Ok(EdgeProb::Line),
                other => other
                    .strip_suffix("/K")
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .map(EdgeProb::PerArm)
                    .ok_or_else(|| {
                        format!(
                            "edge_prob `{other}` must be a number, \"log\", \"line\" or \"<c>/K\""
                        )
                    }),
            },
        }
    }
}

impl From<EdgeProb> for EdgeProbRepr {
    fn from(p: EdgeProb) -> Self {
        match p {
            EdgeProb::Value(v) => EdgeProbRepr::Number(v),
            other => EdgeProbRepr::Text(other.to_string()),
        }
    }
}

impl Serialize for EdgeProb {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        EdgeProbRepr::from(*self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EdgeProb {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        EdgeProbRepr::deserialize(deserializer)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// How to obtain the environment instances of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    /// Triangular line graph.
    Line {
        num_arms: usize,
        mu_min: f64,
        mu_max: f64,
    },
    /// `num_graphs` connected random graphs with distance-based means.
    ErdosRenyi {
        num_arms: usize,
        edge_prob: EdgeProb,
        num_graphs: usize,
    },
    /// A pinned environment file.
    File { path: PathBuf },
}

impl EnvironmentSpec {
    pub fn num_graphs(&self) -> usize {
        match self {
            EnvironmentSpec::ErdosRenyi { num_graphs, .. } => *num_graphs,
            _ => 1,
        }
    }

    /// Instance `graph_index`; generated graphs use `graph_seed(base_seed, graph_index)`.
    pub fn instance(&self, base_seed: u64, graph_index: usize) -> Result<BernoulliEnvironment> {
        match self {
            EnvironmentSpec::Line {
                num_arms,
                mu_min,
                mu_max,
            } => build_line_graph(*num_arms, *mu_min, *mu_max),
            EnvironmentSpec::ErdosRenyi {
                num_arms,
                edge_prob,
                ..
            } => {
                let seed = graph_seed(base_seed, graph_index as u64);
                let mut rng = rng_from_seed(seed);
                let graph = match edge_prob.resolve(*num_arms) {
                    Some(p) => build_er_graph(*num_arms, p, &mut rng)?,
                    None => UmabGraph::line(*num_arms)?,
                };
                Ok(assign_rewards_by_distance(graph, &mut rng)?.with_seed(seed))
            }
            EnvironmentSpec::File { path } => BernoulliEnvironment::load(path),
        }
    }

    pub fn instances(&self, base_seed: u64) -> Result<Vec<BernoulliEnvironment>> {
        (0..self.num_graphs())
            .map(|g| self.instance(base_seed, g))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EnvironmentKind {
    Line,
    ErdosRenyi,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironmentEntry {
    name: String,
    kind: EnvironmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_prob: Option<EdgeProb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_graphs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<PathBuf>,
}

/// A named environment of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironmentEntry", into = "RawEnvironmentEntry")]
pub struct EnvironmentEntry {
    pub name: String,
    pub spec: EnvironmentSpec,
}

impl TryFrom<RawEnvironmentEntry> for EnvironmentEntry {
    type Error = String;

    fn try_from(raw: RawEnvironmentEntry) -> std::result::Result<Self, String> {
        let name = raw.name.clone();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(format!(
                "environment name `{name}` must be non-empty and use only [A-Za-z0-9_.-]"
            ));
        }
        let fail = |msg: String| format!("environment `{name}`: {msg}");
        let unexpected = |fields: &[(&str, bool)]| -> std::result::Result<(), String> {
            match fields.iter().find(|(_, present)| *present) {
                Some((field, _)) => Err(fail(format!(
                    "field `{field}` does not apply to kind {:?}",
                    raw.kind
                ))),
                None => Ok(()),
            }
        };
        let need = |value: Option<usize>, field: &str| {
            value.ok_or_else(|| fail(format!("missing `{field}`")))
        };
        let spec = match raw.kind {
            EnvironmentKind::Line => {
                unexpected(&[
                    ("edge_prob", raw.edge_prob.is_some()),
                    ("num_graphs", raw.num_graphs.is_some()),
                    ("path", raw.path.is_some()),
                ])?;
                let spec = EnvironmentSpec::Line {
                    num_arms: need(raw.num_arms, "num_arms")?,
                    mu_min: raw.mu_min.unwrap_or(0.1),
                    mu_max: raw.mu_max.unwrap_or(0.9),
                };
                spec.instance(0, 0).map_err(|e| fail(e.to_string()))?;
                spec
            }
            EnvironmentKind::ErdosRenyi => {
                unexpected(&[
                    ("mu_min", raw.mu_min.is_some()),
                    ("mu_max", raw.mu_max.is_some()),
                    ("path", raw.path.is_some()),
                ])?;
                let num_arms = need(raw.num_arms, "num_arms")?;
                let edge_prob = raw
                    .edge_prob
                    .ok_or_else(|| fail("missing `edge_prob`".into()))?;
                let num_graphs = raw.num_graphs.unwrap_or(1);
                if num_arms < 2 {
                    return Err(fail(format!("num_arms must be at least 2, got {num_arms}")));
                }
                if num_graphs == 0 {
                    return Err(fail("num_graphs must be at least 1".into()));
                }
                if let Some(p) = edge_prob.resolve(num_arms) {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(fail(format!(
                            "edge_prob {edge_prob} gives p = {p}, outside (0, 1]"
                        )));
                    }
                }
                EnvironmentSpec::ErdosRenyi {
                    num_arms,
                    edge_prob,
                    num_graphs,
                }
            }
            EnvironmentKind::File => {
                unexpected(&[
                    ("num_arms", raw.num_arms.is_some()),
                    ("mu_min", raw.mu_min.is_some()),
                    ("mu_max", raw.mu_max.is_some()),
                    ("edge_prob", raw.edge_prob.is_some()),
                    ("num_graphs", raw.num_graphs.is_some()),
                ])?;
                EnvironmentSpec::File {
                    path: raw.path.ok_or_else(|| fail("missing `path`".into()))?,
                }
            }
        };
        Ok(EnvironmentEntry { name, spec })
    }
}

impl From<EnvironmentEntry> for RawEnvironmentEntry {
    fn from(entry: EnvironmentEntry) -> Self {
        let mut raw = RawEnvironmentEntry {
            name: entry.name,
            kind: EnvironmentKind::File,
            num_arms: None,
            mu_min: None,
            mu_max: None,
            edge_prob: None,
            num_graphs: None,
            path: None,
        };
        match entry.spec {
            EnvironmentSpec::Line {
                num_arms,
                mu_min,
                mu_max,
            } => {
                raw.kind = EnvironmentKind::Line;
                raw.num_arms = Some(num_arms);
                raw.mu_min = Some(mu_min);
                raw.mu_max = Some(mu_max);
            }
            EnvironmentSpec::ErdosRenyi {
                num_arms,
                edge_prob,
                num_graphs,
            } => {
                raw.kind = EnvironmentKind::ErdosRenyi;
                raw.num_arms = Some(num_arms);
                raw.edge_prob = Some(edge_prob);
                raw.num_graphs = Some(num_graphs);
            }
            EnvironmentSpec::File { path } => raw.path = Some(path),
        }
        raw
    }
}

fn validated<T, E: fmt::Display>(value: T, ok: bool, message: E) -> std::result::Result<T, String> {
    if ok {
        Ok(value)
    } else {
        Err(message.to_string())
    }
}

/// Rounds per trial, at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Horizon(u64);

impl TryFrom<u64> for Horizon {
    type Error = String;
    fn try_from(v: u64) -> std::result::Result<Self, String> {
        validated(Horizon(v), v >= 1, "horizon must be at least 1")
    }
}

impl From<Horizon> for u64 {
    fn from(h: Horizon) -> u64 {
        h.0
    }
}

/// Trials per environment instance, at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TrialCount(usize);

impl TryFrom<usize> for TrialCount {
    type Error = String;
    fn try_from(v: usize) -> std::result::Result<Self, String> {
        validated(
            TrialCount(v),
            v >= 2,
            format!("num_trials must be at least 2, got {v}"),
        )
    }
}

impl From<TrialCount> for usize {
    fn from(n: TrialCount) -> usize {
        n.0
    }
}

/// Log-log coefficient of the KL-UCB exploration function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KlucbC(f64);

impl Default for KlucbC {
    fn default() -> Self {
        KlucbC(DEFAULT_KLUCB_C)
    }
}

impl TryFrom<f64> for KlucbC {
    type Error = String;
    fn try_from(v: f64) -> std::result::Result<Self, String> {
        validated(
            KlucbC(v),
            v.is_finite() && v >= 0.0,
            format!("klucb_c must be finite and >= 0, got {v}"),
        )
    }
}

impl From<KlucbC> for f64 {
    fn from(c: KlucbC) -> f64 {
        c.0
    }
}

/// A complete experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub horizon: Horizon,
    pub num_trials: TrialCount,
    #[serde(default)]
    pub base_seed: u64,
    pub policies: Vec<PolicyId>,
    #[serde(default)]
    pub klucb_c: KlucbC,
    /// Pull every arm once before any policy rule applies. Off by default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub initial_sweep: bool,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub environments: Vec<EnvironmentEntry>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.check().map_err(|message| Error::Parse {
            path: origin.to_string(),
            message,
        })?;
        Ok(config)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.policies.is_empty() {
            return Err("`policies` must name at least one policy".into());
        }
        if self.environments.is_empty() {
            return Err("at least one [[environments]] table is required".into());
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(format!("policy `{p}` is listed twice"));
            }
        }
        for (i, e) in self.environments.iter().enumerate() {
            if self.environments[..i].iter().any(|o| o.name == e.name) {
                return Err(format!("environment name `{}` is used twice", e.name));
            }
        }
        Ok(())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            horizon: self.horizon.into(),
            num_trials: self.num_trials.into(),
            base_seed: self.base_seed,
        }
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.policies
            .iter()
            .map(|&id| {
                PolicyKind::new(id, Some(self.klucb_c.into())).expect("klucb_c validated on load")
            })
            .collect()
    }

    /// Rewrites relative `file` environment paths against `base`.
    fn resolve_paths(&mut self, base: &Path) {
        for entry in &mut self.environments {
            if let EnvironmentSpec::File { path } = &mut entry.spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}

/// Loads a TOML experiment, or the configuration embedded in a
/// `manifest.json` written by a previous run.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut config = if path.extension().is_some_and(|ext| ext == "json") {
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: origin.clone(),
            message: e.to_string(),
        })?;
        manifest.config.check().map_err(|message| Error::Parse {
            path: origin.clone(),
            message,
        })?;
        manifest.config
    } else {
        ExperimentConfig::from_toml(&text, &origin)?
    };
    if config.name.is_none() {
        config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}

/// Content hash in git's blob format: `sha1("blob <len>\0" + content)`.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut hasher = Sha1::new();
    hasher.update(format!("blob {}\0", content.len()).as_bytes());
    hasher.update(content);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Seed derivation recorded in manifests.
pub const SEED_SCHEME: &str =
    "splitmix64 fold: graph = split(base, [1, g]), trial = split(base, [2, g, i]), \
rewards = split(trial, [3]), policy = split(trial, [4]); streams are ChaCha8Rng::seed_from_u64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub graph_index: usize,
    pub seed: u64,
    pub file: String,
    pub sha1: String,
    pub lower_bound_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEnvironment {
    pub name: String,
    pub instances: Vec<ManifestInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOutput {
    pub environment: String,
    pub policy: PolicyId,
    pub csv: String,
    pub sha1: String,
    pub final_mean_regret: f64,
    pub final_half_width_95: f64,
}

/// Everything needed to audit or replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: ExperimentConfig,
    pub seed_scheme: String,
    pub checkpoints: usize,
    pub environments: Vec<ManifestEnvironment>,
    pub outputs: Vec<ManifestOutput>,
    pub table: String,
}

/// Final regret of every (environment, policy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub environment: String,
    pub policy: PolicyId,
    pub summary: EnsembleSummary,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub results: Vec<ExperimentResult>,
    pub manifest: Manifest,
}

impl ExperimentReport {
    pub fn summary(&self, environment: &str, policy: PolicyId) -> Option<&EnsembleSummary> {
        self.results
            .iter()
            .find(|r| r.environment == environment && r.policy == policy)
            .map(|r| &r.summary)
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// `table.csv`: one row per environment, mean and half-width per policy.
pub fn final_regret_table(config: &ExperimentConfig, results: &[ExperimentResult]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["environment".to_string()];
    for p in &config.policies {
        header.push(format!("{p}_mean"));
        header.push(format!("{p}_half_width_95"));
    }
    writer.write_record(&header).expect("in-memory write");
    for env in &config.environments {
        let mut row = vec![env.name.clone()];
        for &p in &config.policies {
            match results
                .iter()
                .find(|r| r.environment == env.name && r.policy == p)
            {
                Some(r) => {
                    row.push(r.summary.final_mean().to_string());
                    row.push(r.summary.final_half_width().to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Runs every (environment, policy) pair of `config` and writes the CSVs,
/// `table.csv`, the environment instances and `manifest.json` under
/// `output_dir`.
///
/// With a single environment the policy CSVs sit directly in `output_dir`;
/// otherwise each environment gets its own subdirectory. Every environment
/// is generated and validated before any trial runs.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path) -> Result<ExperimentReport> {
    config.check().map_err(Error::Config)?;
    let ensemble = config.ensemble();
    let mut instances = Vec::with_capacity(config.environments.len());
    for entry in &config.environments {
        let envs = entry
            .spec
            .instances(config.base_seed)
            .map_err(|e| Error::Config(format!("environment `{}`: {e}", entry.name)))?;
        instances.push(envs);
    }

    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let nested = config.environments.len() > 1;
    let mut manifest_envs = Vec::new();
    let mut outputs = Vec::new();
    let mut results = Vec::new();
    for (entry, envs) in config.environments.iter().zip(&instances) {
        let mut manifest_instances = Vec::new();
        for (g, env) in envs.iter().enumerate() {
            let file_name = if envs.len() == 1 {
                format!("{}.json", entry.name)
            } else {
                format!("{}_g{g}.json", entry.name)
            };
            let path = output_dir.join("environments").join(file_name);
            let json = env.to_json();
            write_file(&path, &json)?;
            manifest_instances.push(ManifestInstance {
                graph_index: g,
                seed: env.seed(),
                file: relative(&path, output_dir),
                sha1: git_blob_hash(json.as_bytes()),
                lower_bound_constant: env.lower_bound_constant(),
            });
        }
        manifest_envs.push(ManifestEnvironment {
            name: entry.name.clone(),
            instances: manifest_instances,
        });

        let dir = if nested {
            output_dir.join(&entry.name)
        } else {
            output_dir.to_path_buf()
        };
        for kind in config.policy_kinds() {
            let started = Instant::now();
            let sweep = config.initial_sweep;
            let run = run_ensemble_on(
                envs,
                |env| kind.instantiate(env.graph()).with_initial_sweep(sweep),
                &ensemble,
            )?;
            log::info!(
                "{} / {}: final regret {:.2} +/- {:.2} ({} trials, {:.1}s)",
                entry.name,
                kind.id(),
                run.summary.final_mean(),
                run.summary.final_half_width(),
                run.summary.num_trials,
                started.elapsed().as_secs_f64()
            );
            let csv_path = dir.join(format!("{}.csv", kind.id()));
            let csv = run.summary.to_csv();
            write_file(&csv_path, &csv)?;
            outputs.push(ManifestOutput {
                environment: entry.name.clone(),
                policy: kind.id(),
                csv: relative(&csv_path, output_dir),
                sha1: git_blob_hash(csv.as_bytes()),
                final_mean_regret: run.summary.final_mean(),
                final_half_width_95: run.summary.final_half_width(),
            });
            results.push(ExperimentResult {
                environment: entry.name.clone(),
                policy: kind.id(),
                summary: run.summary,
            });
        }
    }

    let table_path = output_dir.join("table.csv");
    write_file(&table_path, &final_regret_table(config, &results))?;
    let manifest = Manifest {
        tool: format!("umab {}", env!("CARGO_PKG_VERSION")),
        config: config.clone(),
        seed_scheme: SEED_SCHEME.to_string(),
        checkpoints: results.first().map_or(0, |r| r.summary.checkpoints.len()),
        environments: manifest_envs,
        outputs,
        table: "table.csv".into(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_json.push('\n');
    write_file(&output_dir.join("manifest.json"), &manifest_json)?;
    Ok(ExperimentReport {
        output_dir: output_dir.to_path_buf(),
        results,
        manifest,
    })
}
