use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::am::{FeatureMap, FeatureMapConfig, LossSpec, LossVariant};
use crate::analytics::NmseMode;
use crate::datagen::{EmbedConfig, PeriodicTrafficConfig, SyntheticConfig};
use crate::error::{Error, Result};
use crate::protocols::protocol_registry;
use crate::topology::{weights_from_rows, LogicalWeights, PhysicalGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Synthetic,
    Traffic,
    PeriodicTraffic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// The bundled approximate 20-node topology.
    #[serde(rename = "reference_20")]
    Reference20,
    ErdosRenyi { n: usize, p: f64, seed: u64 },
    Path { n: usize },
    Star { n: usize, center: usize },
    Complete { n: usize },
    /// `[i, j, delay]` triples.
    Edges { n: usize, edges: Vec<[u64; 3]> },
    Csv { path: PathBuf, n: Option<usize> },
}

impl GraphSource {
    pub fn build(&self, base: &Path) -> Result<PhysicalGraph> {
        match self {
            GraphSource::Reference20 => Ok(PhysicalGraph::reference_20()),
            GraphSource::ErdosRenyi { n, p, seed } => PhysicalGraph::erdos_renyi(*n, *p, *seed),
            GraphSource::Path { n } => PhysicalGraph::path(*n),
            GraphSource::Star { n, center } => PhysicalGraph::star(*n, *center),
            GraphSource::Complete { n } => PhysicalGraph::complete(*n),
            GraphSource::Edges { n, edges } => {
                let mut list = Vec::with_capacity(edges.len());
                for &[i, j, d] in edges {
                    let d = u32::try_from(d).map_err(|_| Error::Config(format!("edge delay {d} too large")))?;
                    list.push((i as usize, j as usize, d));
                }
                PhysicalGraph::new(*n, list)
            }
            GraphSource::Csv { path, n } => PhysicalGraph::from_csv(&base.join(path), *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsSource {
    /// Rows drawn from `Dirichlet(y0, …, y1, …, y0)` per seed.
    Dirichlet,
    Identity,
    Uniform,
    Rows { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRate {
    /// The closed-form rate of each protocol's corollary.
    Corollary,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Gating vector, used by gated variants.
    pub gating: Option<Vec<f64>>,
    /// Feature map, used by softmax variants.
    pub feature_map: Option<FeatureMapConfig>,
    pub grad_bound: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::DeltaNet,
            gating: None,
            feature_map: None,
            grad_bound: None,
        }
    }
}

impl LossConfig {
    pub fn spec(&self, key_dim: usize) -> Result<LossSpec> {
        let mut spec = LossSpec::new(self.variant);
        if let Some(g) = &self.gating {
            spec = spec.with_gating(g.clone());
        }
        if let Some(fm) = &self.feature_map {
            spec = spec.with_feature_map(FeatureMap::new(fm.clone(), key_dim)?);
        }
        if let Some(g) = self.grad_bound {
            spec = spec.with_grad_bound(g);
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Synthetic-scenario parameters not covered by the sweep axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub n_agents: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub noise_var: f64,
    pub y1: f64,
    /// Every model flips sign after this step when set.
    pub switch_at: Option<usize>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            n_agents: d.n_agents,
            d_k: d.d_k,
            d_v: d.d_v,
            noise_var: d.noise_var,
            y1: d.y1,
            switch_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub path: PathBuf,
    #[serde(default)]
    pub embed: EmbedConfig,
}

/// `[periodic.traffic]` and `[periodic.embed]`; the traffic seed is replaced
/// by each run seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodicSection {
    pub traffic: PeriodicTrafficConfig,
    pub embed: EmbedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub horizons: Vec<usize>,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "default_y0")]
    pub y0: Vec<f64>,
    /// Window lengths of the dynamic comparator. Without it the dynamic
    /// comparator is the static hindsight optimum.
    #[serde(default)]
    pub omega: Vec<usize>,
}

fn default_rho() -> Vec<f64> {
    vec![SyntheticConfig::default().rho]
}

fn default_y0() -> Vec<f64> {
    vec![SyntheticConfig::default().y0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Figure {
    #[serde(rename = "fig3_regret_vs_T")]
    Fig3RegretVsT,
    #[serde(rename = "fig4_vs_rho")]
    Fig4VsRho,
    #[serde(rename = "fig5_vs_y0")]
    Fig5VsY0,
    #[serde(rename = "fig7_pl_tracking")]
    Fig7PlTracking,
    #[serde(rename = "fig8_dynregret")]
    Fig8Dynregret,
    #[serde(rename = "fig10_nmse")]
    Fig10Nmse,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig3RegretVsT,
        Figure::Fig4VsRho,
        Figure::Fig5VsY0,
        Figure::Fig7PlTracking,
        Figure::Fig8Dynregret,
        Figure::Fig10Nmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig3RegretVsT => "fig3_regret_vs_T",
            Figure::Fig4VsRho => "fig4_vs_rho",
            Figure::Fig5VsY0 => "fig5_vs_y0",
            Figure::Fig7PlTracking => "fig7_pl_tracking",
            Figure::Fig8Dynregret => "fig8_dynregret",
            Figure::Fig10Nmse => "fig10_nmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub protocols: Vec<String>,
    pub seeds: Vec<u64>,
    /// Domain diameter `B`.
    #[serde(default = "default_diameter")]
    pub diameter: f64,
    /// Run delayed protocols for `⌊T/C_max⌋` steps.
    #[serde(default = "default_true")]
    pub fair_horizon: bool,
    #[serde(default)]
    pub nmse: NmseMode,
    /// Figures to emit; every figure whose axes are present when absent.
    #[serde(default)]
    pub figures: Option<Vec<Figure>>,
    pub learning_rate: LearningRate,
    pub graph: GraphSource,
    pub weights: WeightsSource,
    #[serde(default)]
    pub loss: LossConfig,
    pub sweep: Sweep,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub traffic: Option<TrafficSection>,
    #[serde(default)]
    pub periodic: PeriodicSection,
    /// Directory relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_diameter() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(Error::Config("protocols must list at least one protocol".into()));
        }
        let registry = protocol_registry();
        for (i, p) in self.protocols.iter().enumerate() {
            registry.get(p)?;
            if self.protocols[..i].contains(p) {
                return Err(Error::Config(format!("protocol {p} listed twice")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        positive("diameter", self.diameter)?;
        if let LearningRate::Fixed { value } = self.learning_rate {
            positive("learning_rate.value", value)?;
        }
        let s = &self.sweep;
        if s.horizons.is_empty() || s.horizons.contains(&0) {
            return Err(Error::Config("sweep.horizons must be a nonempty list of positive integers".into()));
        }
        if s.rho.is_empty() || s.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("sweep.rho values must lie in [0,1]".into()));
        }
        if s.y0.is_empty() || s.y0.iter().any(|y| !(*y >= 0.0 && *y <= self.synthetic.y1)) {
            return Err(Error::Config(format!(
                "sweep.y0 values must lie in [0, y1 = {}]",
                self.synthetic.y1
            )));
        }
        if s.omega.contains(&0) {
            return Err(Error::Config("sweep.omega values must be positive".into()));
        }
        if self.synthetic.switch_at == Some(0) {
            return Err(Error::Config("synthetic.switch_at must be positive".into()));
        }
        if self.scenario == Scenario::Traffic && self.traffic.is_none() {
            return Err(Error::Config("the traffic scenario needs a [traffic] section with a path".into()));
        }
        self.synthetic_config(1, s.rho[0], s.y0[0])?.validate()?;
        let graph = self.graph.build(&self.base_dir)?;
        if let Some(n) = self.known_agent_count() {
            if graph.n_nodes() != n {
                return Err(Error::Config(format!(
                    "graph has {} nodes but the scenario has {n} agents",
                    graph.n_nodes()
                )));
            }
            if let WeightsSource::Rows { rows } = &self.weights {
                weights_from_rows(rows, Some(n))?;
            }
        }
        Ok(())
    }

    /// Agent count implied by the scenario, when it is known without
    /// reading data files.
    pub fn known_agent_count(&self) -> Option<usize> {
        match self.scenario {
            Scenario::Synthetic => Some(self.synthetic.n_agents),
            Scenario::PeriodicTraffic => Some(
                self.periodic
                    .embed
                    .aps
                    .as_ref()
                    .map_or(self.periodic.traffic.n_aps, Vec::len),
            ),
            Scenario::Traffic => self.traffic.as_ref().and_then(|t| t.embed.aps.as_ref().map(Vec::len)),
        }
    }

    pub fn synthetic_config(&self, seed: u64, rho: f64, y0: f64) -> Result<SyntheticConfig> {
        let s = &self.synthetic;
        Ok(SyntheticConfig {
            n_agents: s.n_agents,
            d_k: s.d_k,
            d_v: s.d_v,
            rho,
            noise_var: s.noise_var,
            seed,
            y0,
            y1: s.y1,
        })
    }

    pub fn build_weights(&self, n: usize, seed: u64, y0: f64) -> Result<LogicalWeights> {
        match &self.weights {
            WeightsSource::Dirichlet => {
                let cfg = SyntheticConfig {
                    n_agents: n,
                    seed,
                    y0,
                    y1: self.synthetic.y1,
                    ..Default::default()
                };
                crate::datagen::gen_weights(&cfg)
            }
            WeightsSource::Identity => Ok(LogicalWeights::identity(n)),
            WeightsSource::Uniform => Ok(LogicalWeights::uniform(n)),
            WeightsSource::Rows { rows } => weights_from_rows(rows, Some(n)),
        }
    }

    /// Canonical JSON form used for hashing and the metadata sidecar.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        serde_json::to_value(self).map_err(|e| Error::Emission(e.to_string()))
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Emission(e.to_string()))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// `a.b.c=value`. A comma-separated value becomes a list, and a scalar
/// replacing a list is wrapped in one.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let parse_scalar = |s: &str| -> toml::Value {
        format!("v = {s}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(s.to_string()))
    };
    let value = if raw.contains(',') && !raw.starts_with('[') {
        toml::Value::Array(raw.split(',').map(|s| parse_scalar(s.trim())).collect())
    } else {
        parse_scalar(raw)
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a section")))?;
    }
    let last = parts[parts.len() - 1].to_string();
    let value = match (table.get(&last), value) {
        (Some(toml::Value::Array(_)), v @ toml::Value::Array(_)) => v,
        (Some(toml::Value::Array(_)), v) => toml::Value::Array(vec![v]),
        (_, v) => v,
    };
    table.insert(last, value);
    Ok(())
}

/// Parses config text, applies overrides, then validates.
pub fn parse_config(text: &str, path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let parse_err = |e: toml::de::Error| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().to_string(),
    };
    let mut doc: toml::Table = text.parse().map_err(parse_err)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut cfg: ExperimentConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(parse_err)?
    } else {
        ExperimentConfig::deserialize(doc).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
    };
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path, overrides)
}
