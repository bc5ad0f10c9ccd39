use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::rng::{chi_squared_2, normal, standard_normal, stream_rng, uniform, Stream};
use crate::am::{AgentId, KeyValuePair, TimeStep};
use crate::error::{Error, Result};
use crate::topology::{validate_weights, LogicalWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_agents: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub rho: f64,
    pub noise_var: f64,
    pub seed: u64,
    pub y0: f64,
    pub y1: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_agents: 20,
            d_k: 4,
            d_v: 4,
            rho: 0.75,
            noise_var: 1.0,
            seed: 1,
            y0: 2.0,
            y1: 10.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.d_k == 0 || self.d_v == 0 {
            return Err(Error::Config("n_agents, d_k and d_v must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} outside [0,1]", self.rho)));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!("noise_var = {} must be >= 0", self.noise_var)));
        }
        check_dirichlet(self.y0, self.y1)
    }
}

fn check_dirichlet(y0: f64, y1: f64) -> Result<()> {
    if !(y0 >= 0.0 && y1 >= y0 && y1.is_finite()) {
        return Err(Error::Config(format!("need y1 >= y0 >= 0, got y0={y0}, y1={y1}")));
    }
    if y1 == 0.0 {
        return Err(Error::Config("Dirichlet parameters y0 and y1 cannot both be 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub m_com: DMatrix<f64>,
    pub m_n: Vec<DMatrix<f64>>,
    pub mu_n: Vec<f64>,
    pub sigma2_n: Vec<f64>,
}

impl GroundTruth {
    /// `(1−ρ)M_n + ρM_com`
    pub fn model(&self, n: AgentId, rho: f64) -> DMatrix<f64> {
        &self.m_n[n] * (1.0 - rho) + &self.m_com * rho
    }
}

pub fn gen_ground_truth(cfg: &SyntheticConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::GroundTruth);
    let m_com = DMatrix::from_fn(cfg.d_v, cfg.d_k, |_, _| chi_squared_2(&mut rng));
    let mu_n: Vec<f64> = (0..cfg.n_agents).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
    let sigma2_n: Vec<f64> = (0..cfg.n_agents).map(|_| uniform(&mut rng, 0.0, 50.0)).collect();
    let m_n = mu_n
        .iter()
        .zip(&sigma2_n)
        .map(|(&mu, &s2)| DMatrix::from_fn(cfg.d_v, cfg.d_k, |_, _| normal(&mut rng, mu, s2.sqrt())))
        .collect();
    Ok(GroundTruth {
        m_com,
        m_n,
        mu_n,
        sigma2_n,
    })
}

/// Per-agent sample sequences, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    per_agent: Vec<Vec<KeyValuePair>>,
}

impl Streams {
    pub fn new(per_agent: Vec<Vec<KeyValuePair>>) -> Result<Self> {
        let horizon = per_agent.first().map_or(0, Vec::len);
        for (n, s) in per_agent.iter().enumerate() {
            if s.len() != horizon {
                return Err(Error::Data(format!(
                    "agent {n} has {} samples, expected {horizon}",
                    s.len()
                )));
            }
            for (i, kv) in s.iter().enumerate() {
                if kv.agent != n || kv.time != i + 1 {
                    return Err(Error::Data(format!(
                        "sample {i} of agent {n} is labelled (agent {}, t={})",
                        kv.agent, kv.time
                    )));
                }
            }
        }
        Ok(Self { per_agent })
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn horizon(&self) -> usize {
        self.per_agent.first().map_or(0, Vec::len)
    }

    pub fn agent(&self, n: AgentId) -> &[KeyValuePair] {
        &self.per_agent[n]
    }

    pub fn sample(&self, n: AgentId, t: TimeStep) -> Result<&KeyValuePair> {
        if t == 0 {
            return Err(Error::Data("time steps start at 1".into()));
        }
        self.per_agent
            .get(n)
            .ok_or_else(|| Error::Data(format!("no stream for agent {n}")))?
            .get(t - 1)
            .ok_or_else(|| Error::Data(format!("stream of agent {n} exhausted at t={t}")))
    }

    /// All agents' samples at step `t`, indexed by agent.
    pub fn at(&self, t: TimeStep) -> Result<Vec<&KeyValuePair>> {
        (0..self.n_agents()).map(|n| self.sample(n, t)).collect()
    }

    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon() {
            return Err(Error::Data(format!(
                "cannot truncate a {}-step stream to {horizon}",
                self.horizon()
            )));
        }
        Ok(Self {
            per_agent: self.per_agent.iter().map(|s| s[..horizon].to_vec()).collect(),
        })
    }

    pub fn key_dim(&self) -> usize {
        self.per_agent.first().and_then(|s| s.first()).map_or(0, |kv| kv.key.len())
    }

    pub fn value_dim(&self) -> usize {
        self.per_agent.first().and_then(|s| s.first()).map_or(0, |kv| kv.value.len())
    }
}

/// Samples are drawn time-major, so a shorter horizon is a prefix of a longer
/// one for the same seed.
fn gen_stream_with(
    cfg: &SyntheticConfig,
    gt: &GroundTruth,
    horizon: usize,
    sign: impl Fn(TimeStep) -> f64,
) -> Result<Streams> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::Config("stream horizon must be at least 1".into()));
    }
    if gt.m_n.len() != cfg.n_agents || gt.m_com.shape() != (cfg.d_v, cfg.d_k) {
        return Err(Error::Config("ground truth does not match the configuration".into()));
    }
    let models: Vec<DMatrix<f64>> = (0..cfg.n_agents).map(|n| gt.model(n, cfg.rho)).collect();
    let sd = cfg.noise_var.sqrt();
    let mut rng = stream_rng(cfg.seed, Stream::Samples);
    let mut per_agent: Vec<Vec<KeyValuePair>> = vec![Vec::with_capacity(horizon); cfg.n_agents];
    for t in 1..=horizon {
        let s = sign(t);
        for (n, model) in models.iter().enumerate() {
            let k = DVector::from_fn(cfg.d_k, |_, _| uniform(&mut rng, -1.0, 1.0));
            let noise = DVector::from_fn(cfg.d_v, |_, _| sd * standard_normal(&mut rng));
            let v = model * &k * s + noise;
            per_agent[n].push(KeyValuePair::new(k, v, n, t)?);
        }
    }
    Streams::new(per_agent)
}

pub fn gen_stream(cfg: &SyntheticConfig, gt: &GroundTruth, horizon: usize) -> Result<Streams> {
    gen_stream_with(cfg, gt, horizon, |_| 1.0)
}

/// As [`gen_stream`], but every agent's model changes sign after step
/// `switch_at`.
pub fn gen_drifting_stream(
    cfg: &SyntheticConfig,
    gt: &GroundTruth,
    horizon: usize,
    switch_at: TimeStep,
) -> Result<Streams> {
    gen_stream_with(cfg, gt, horizon, |t| if t <= switch_at { 1.0 } else { -1.0 })
}

/// Rows drawn independently from `Dirichlet(y0, …, y1, …, y0)` with `y1` on
/// the diagonal.
pub fn gen_weights(cfg: &SyntheticConfig) -> Result<LogicalWeights> {
    check_dirichlet(cfg.y0, cfg.y1)?;
    let n = cfg.n_agents;
    let mut rng = stream_rng(cfg.seed, Stream::Weights);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = dirichlet_row(&mut rng, n, i, cfg.y0, cfg.y1)?;
        for (j, x) in row.into_iter().enumerate() {
            w[(i, j)] = x;
        }
    }
    validate_weights(&w, Some(n))
}

fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, n: usize, diag: usize, y0: f64, y1: f64) -> Result<Vec<f64>> {
    let mut draws = Vec::with_capacity(n);
    for j in 0..n {
        let shape = if j == diag { y1 } else { y0 };
        draws.push(if shape == 0.0 {
            0.0
        } else {
            Gamma::new(shape, 1.0)
                .map_err(|e| Error::Config(format!("gamma({shape}): {e}")))?
                .sample(rng)
        });
    }
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        // Every gamma draw underflowed; all mass goes to the diagonal.
        draws.iter_mut().enumerate().for_each(|(j, x)| *x = f64::from(u8::from(j == diag)));
        return Ok(draws);
    }
    Ok(draws.into_iter().map(|x| x / sum).collect())
}
