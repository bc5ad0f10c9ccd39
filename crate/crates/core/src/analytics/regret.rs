use serde::{Deserialize, Serialize};

use super::comparator::ComparatorSequence;
use crate::am::{loss_with_features, LossSpec, MemoryMatrix};
use crate::datagen::Streams;
use crate::error::{Error, Result};
use crate::protocols::Trajectory;
use crate::topology::LogicalWeights;

/// Cumulative losses of agent `n` summed time-minor, `Σ_t Σ_m w_{n,m} f_{m,t}`.
fn cumulative_loss<'a>(
    n: usize,
    iterates: impl Iterator<Item = &'a MemoryMatrix>,
    streams: &Streams,
    w: &LogicalWeights,
    specs: &[LossSpec],
) -> Result<f64> {
    let support = w.support(n);
    let mut total = 0.0;
    for (i, x) in iterates.enumerate() {
        let t = i + 1;
        for &m in &support {
            let kv = streams.sample(m, t)?;
            let z = specs[m].features(&kv.key)?;
            total += w.get(n, m) * loss_with_features(&specs[m], x.matrix(), &z, &kv.value);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretBreakdown {
    pub learner_loss: Vec<f64>,
    pub comparator_loss: Vec<f64>,
    /// `Σ_n (L_n(X) − L_n(U))`, summed agent-major.
    pub total: f64,
}

/// Regret of `traj` against a per-agent comparator sequence over the
/// trajectory's steps. Static and dynamic regret both go through here.
pub fn regret(
    traj: &Trajectory,
    streams: &Streams,
    w: &LogicalWeights,
    specs: &[LossSpec],
    comparator: &ComparatorSequence,
) -> Result<RegretBreakdown> {
    let steps = traj.steps();
    if comparator.horizon() != steps || comparator.n_agents() != traj.n_agents() {
        return Err(Error::Analytics(format!(
            "comparator covers {} agents x {} steps, trajectory {} x {steps}",
            comparator.n_agents(),
            comparator.horizon(),
            traj.n_agents()
        )));
    }
    if w.n_agents() != traj.n_agents() || specs.len() != traj.n_agents() {
        return Err(Error::Analytics("weights, specs and trajectory disagree on the agent count".into()));
    }
    let mut learner = Vec::with_capacity(traj.n_agents());
    let mut comp = Vec::with_capacity(traj.n_agents());
    let mut total = 0.0;
    for n in 0..traj.n_agents() {
        let lx = cumulative_loss(n, traj.agent(n).iter(), streams, w, specs)?;
        let lu = cumulative_loss(n, (1..=steps).map(|t| comparator.at(n, t)), streams, w, specs)?;
        total += lx - lu;
        learner.push(lx);
        comp.push(lu);
    }
    Ok(RegretBreakdown {
        learner_loss: learner,
        comparator_loss: comp,
        total,
    })
}

/// Regret against one fixed matrix per agent.
pub fn static_regret(
    traj: &Trajectory,
    streams: &Streams,
    w: &LogicalWeights,
    specs: &[LossSpec],
    u: &[MemoryMatrix],
) -> Result<f64> {
    let c = ComparatorSequence::constant(traj.steps(), u.to_vec());
    Ok(regret(traj, streams, w, specs, &c)?.total)
}

pub fn dynamic_regret(
    traj: &Trajectory,
    streams: &Streams,
    w: &LogicalWeights,
    specs: &[LossSpec],
    u: &ComparatorSequence,
) -> Result<f64> {
    Ok(regret(traj, streams, w, specs, u)?.total)
}

/// `Σ_{t≥2} ‖U_{t−1} − U_t‖_F`
pub fn path_length(seq: &[MemoryMatrix]) -> f64 {
    seq.windows(2).map(|p| (p[0].matrix() - p[1].matrix()).norm()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseMode {
    /// Each step's iterate predicts that step's sample.
    #[default]
    PerStep,
    /// The last iterate predicts every sample.
    FinalIterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nmse {
    /// Agents predicting their own values.
    pub self_nmse: f64,
    /// Agents predicting the other agents in their support; `None` when no
    /// agent has remote support.
    pub cross_nmse: Option<f64>,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::Analytics(format!("{what} NMSE has an all-zero value set")));
    }
    Ok(num / den)
}

pub fn nmse(traj: &Trajectory, streams: &Streams, w: &LogicalWeights, specs: &[LossSpec], mode: NmseMode) -> Result<Nmse> {
    let steps = traj.steps();
    if steps == 0 {
        return Err(Error::Analytics("empty trajectory".into()));
    }
    let (mut self_num, mut self_den, mut cross_num, mut cross_den) = (0.0, 0.0, 0.0, 0.0);
    let mut any_cross = false;
    for n in 0..traj.n_agents() {
        for t in 1..=steps {
            let x = match mode {
                NmseMode::PerStep => traj.at(n, t),
                NmseMode::FinalIterate => traj.at(n, steps),
            };
            let err = |m: usize| -> Result<(f64, f64)> {
                let kv = streams.sample(m, t)?;
                let z = specs[m].features(&kv.key)?;
                Ok(((x.matrix() * z.as_ref() - &kv.value).norm_squared(), kv.value.norm_squared()))
            };
            let (e, v) = err(n)?;
            self_num += e;
            self_den += v;
            for m in w.remote_support(n) {
                let (e, v) = err(m)?;
                any_cross = true;
                cross_num += e;
                cross_den += v;
            }
        }
    }
    Ok(Nmse {
        self_nmse: ratio(self_num, self_den, "self")?,
        cross_nmse: if any_cross { Some(ratio(cross_num, cross_den, "cross")?) } else { None },
    })
}
