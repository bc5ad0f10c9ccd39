use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::rates::Etas;
use super::state::{weighted_sum, AgentState, Environment, Trajectory};
use crate::am::AgentId;
use crate::error::{Error, Result};
use crate::topology::check_doubly_stochastic;

/// Full-information update `X ← Π[X − η Σ_m w_{n,m} ∇f_{m,t}(X)]`.
pub fn ogd_step(
    state: &mut AgentState,
    grads: &BTreeMap<AgentId, DMatrix<f64>>,
    weights: &[f64],
    diameter: f64,
) -> Result<()> {
    let mut terms = Vec::new();
    for (m, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            let g = grads.get(&m).ok_or_else(|| {
                Error::Protocol(format!("agent {} is missing the gradient of agent {m}", state.agent))
            })?;
            terms.push((w, g));
        }
    }
    let g = weighted_sum(terms);
    let base = state.x.matrix().clone();
    state.descend_from(&base, g.as_ref(), diameter)
}

/// One synchronous consensus round:
/// `X_n ← Π[Σ_m a_{nm} X_m − η_n ∇f_{n,t}(X_n)]` for all `n` at once.
pub fn cdogd_step(
    states: &mut [AgentState],
    a: &DMatrix<f64>,
    local_grads: &[DMatrix<f64>],
    diameter: f64,
) -> Result<()> {
    check_doubly_stochastic(a)?;
    if a.nrows() != states.len() || local_grads.len() != states.len() {
        return Err(Error::Config("mixing matrix, states and gradients disagree in size".into()));
    }
    let mixed: Vec<DMatrix<f64>> = (0..states.len())
        .map(|n| {
            let own = (a[(n, n)], states[n].x.matrix());
            let others = (0..states.len())
                .filter(|&m| m != n)
                .map(|m| (a[(n, m)], states[m].x.matrix()));
            weighted_sum(std::iter::once(own).chain(others))
                .unwrap_or_else(|| DMatrix::zeros(states[n].x.dims().0, states[n].x.dims().1))
        })
        .collect();
    for ((s, base), g) in states.iter_mut().zip(&mixed).zip(local_grads) {
        s.descend_from(base, Some(g), diameter)?;
    }
    Ok(())
}

pub fn run_ogd(env: &Environment<'_>, steps: usize, etas: &Etas) -> Result<Trajectory> {
    env.validate()?;
    etas.validate(env.n_agents())?;
    let n_agents = env.n_agents();
    let mut states: Vec<AgentState> = (0..n_agents).map(|n| env.initial_state(n, etas.at(n, 1))).collect();
    let mut traj = Trajectory::start(&states);
    let rows: Vec<Vec<f64>> = env.weights.rows();
    for t in 1..steps {
        for (n, state) in states.iter_mut().enumerate() {
            state.eta = etas.at(n, t);
            let mut grads = BTreeMap::new();
            for m in env.weights.support(n) {
                grads.insert(m, env.grad(m, t, state.x.matrix())?);
            }
            ogd_step(state, &grads, &rows[n], env.diameter)?;
        }
        traj.record(&states);
    }
    Ok(traj.finish(steps))
}

pub fn run_cdogd(env: &Environment<'_>, a: &DMatrix<f64>, steps: usize, etas: &Etas) -> Result<Trajectory> {
    env.validate()?;
    etas.validate(env.n_agents())?;
    check_doubly_stochastic(a)?;
    let n_agents = env.n_agents();
    let mut states: Vec<AgentState> = (0..n_agents).map(|n| env.initial_state(n, etas.at(n, 1))).collect();
    let mut traj = Trajectory::start(&states);
    for t in 1..steps {
        let grads = states
            .iter_mut()
            .enumerate()
            .map(|(n, s)| {
                s.eta = etas.at(n, t);
                env.grad(n, t, s.x.matrix())
            })
            .collect::<Result<Vec<_>>>()?;
        cdogd_step(&mut states, a, &grads, env.diameter)?;
        traj.record(&states);
    }
    Ok(traj.finish(steps))
}
