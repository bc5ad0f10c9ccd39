use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::am::{eval_grad_raw, project, project_in_place, AgentId, LossSpec, LossVariant, MemoryMatrix, RowRegularizer, TimeStep};
use crate::datagen::Streams;
use crate::error::{Error, Result};

/// Window of steps `[start, end]`, 1-based and inclusive.
pub type Window = RangeInclusive<TimeStep>;

/// The objective `Σ_{s∈window} Σ_m w_m f_{m,s}(U)` written row-wise as
/// `Σ_i ½ u_iᵀ(S + γ_i I)u_i − p_iᵀu_i + const`.
struct Quadratic {
    s: DMatrix<f64>,
    p: DMatrix<f64>,
    gamma: DVector<f64>,
}

fn check_window(streams: &Streams, window: &Window) -> Result<()> {
    if window.is_empty() || *window.start() == 0 || *window.end() > streams.horizon() {
        return Err(Error::Analytics(format!(
            "window {}..={} is empty or outside 1..={}",
            window.start(),
            window.end(),
            streams.horizon()
        )));
    }
    Ok(())
}

fn memory_shape(streams: &Streams, row: &[f64], specs: &[LossSpec]) -> Result<(usize, usize)> {
    let first = row
        .iter()
        .position(|&w| w > 0.0)
        .ok_or_else(|| Error::Analytics("weight row has no positive entry".into()))?;
    Ok((streams.value_dim(), specs[first].feature_dim(streams.key_dim())))
}

fn assemble(streams: &Streams, row: &[f64], specs: &[LossSpec], window: &Window) -> Result<Quadratic> {
    let (d_v, d_k) = memory_shape(streams, row, specs)?;
    let mut s = DMatrix::zeros(d_k, d_k);
    let mut p = DMatrix::zeros(d_v, d_k);
    let mut gamma = DVector::zeros(d_v);
    for (m, &w) in row.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let spec = &specs[m];
        if spec.feature_dim(streams.key_dim()) != d_k {
            return Err(Error::Analytics("agents in one support use different feature dimensions".into()));
        }
        let count = window.clone().count() as f64;
        match spec.regularizer() {
            RowRegularizer::None => {}
            RowRegularizer::Uniform => gamma.add_scalar_mut(w * count),
            RowRegularizer::Gated(c) => {
                for (g, ci) in gamma.iter_mut().zip(c) {
                    *g += w * count * ci;
                }
            }
        }
        for t in window.clone() {
            let kv = streams.sample(m, t)?;
            let z = spec.features(&kv.key)?;
            if spec.variant == LossVariant::DeltaNet {
                s.ger(w, &z, &z, 1.0);
            }
            p.ger(w, &kv.value, &z, 1.0);
        }
    }
    Ok(Quadratic { s, p, gamma })
}

#[cfg(test)]
use crate::am::eval_loss_raw;

#[cfg(test)]
fn objective(streams: &Streams, row: &[f64], specs: &[LossSpec], window: &Window, u: &DMatrix<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (m, &w) in row.iter().enumerate() {
        if w > 0.0 {
            for t in window.clone() {
                total += w * eval_loss_raw(&specs[m], u, streams.sample(m, t)?)?;
            }
        }
    }
    Ok(total)
}

fn gradient(streams: &Streams, row: &[f64], specs: &[LossSpec], window: &Window, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(u.nrows(), u.ncols());
    for (m, &w) in row.iter().enumerate() {
        if w > 0.0 {
            for t in window.clone() {
                g += eval_grad_raw(&specs[m], u, streams.sample(m, t)?)? * w;
            }
        }
    }
    Ok(g)
}

/// `‖U − Π[U − s∇F(U)]‖ / s`
fn gradient_mapping(u: &DMatrix<f64>, grad: &DMatrix<f64>, step: f64, diameter: f64) -> Result<f64> {
    let mut moved = u - grad * step;
    project_in_place(&mut moved, diameter)?;
    Ok((u - moved).norm() / step)
}

/// Minimiser of the weighted windowed loss of agent `n` over the ball of
/// diameter `B`.
///
/// The objective is a separable quadratic in the rows of `U`, so the
/// constrained minimiser solves `u_i(S + (γ_i + μ)I) = p_i` with the smallest
/// `μ ≥ 0` that keeps `‖U‖ ≤ B/2`; `μ` is found by bisection on an
/// eigendecomposition of `S`.
pub fn hindsight_optimum(
    n: AgentId,
    streams: &Streams,
    row: &[f64],
    specs: &[LossSpec],
    diameter: f64,
    window: &Window,
) -> Result<MemoryMatrix> {
    check_window(streams, window)?;
    if row.len() != streams.n_agents() || specs.len() != streams.n_agents() {
        return Err(Error::Analytics(format!("agent {n}: weight row, specs and streams disagree in size")));
    }
    let radius = 0.5 * diameter;
    let q = assemble(streams, row, specs, window)?;
    let eig = SymmetricEigen::new(q.s.clone());
    let lambda = eig.eigenvalues.map(|l| l.max(0.0));
    let v = eig.eigenvectors;
    // rows of P in the eigenbasis
    let pv = &q.p * &v;
    let scale = lambda.max().max(q.gamma.max()).max(1.0);
    let tol = 1e-12 * scale;

    let solve = |mu: f64| -> (DMatrix<f64>, bool) {
        let mut unbounded = false;
        let coords = DMatrix::from_fn(pv.nrows(), pv.ncols(), |i, j| {
            let curv = lambda[j] + q.gamma[i] + mu;
            if curv > tol {
                pv[(i, j)] / curv
            } else {
                if pv[(i, j)].abs() > 1e-12 * (1.0 + pv.norm()) {
                    unbounded = true;
                }
                0.0
            }
        });
        (coords * v.transpose(), unbounded)
    };

    let (free, unbounded) = solve(0.0);
    let u = if !unbounded && free.norm() <= radius {
        free
    } else {
        let mut lo = 0.0;
        let mut hi = q.p.norm() / radius + tol;
        while solve(hi).0.norm() > radius {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if solve(mid).0.norm() > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        solve(hi).0
    };
    let u = project(u, diameter)?;

    let grad = gradient(streams, row, specs, window, u.matrix())?;
    let curvature = lambda.max() + q.gamma.max();
    let step = 1.0 / curvature.max(1e-12);
    let gm = gradient_mapping(u.matrix(), &grad, step, diameter)?;
    let size = q.p.norm() + curvature * radius + 1.0;
    if gm > 1e-6 * size {
        return Err(Error::Optimization { grad_norm: gm });
    }
    Ok(u)
}

/// Projected gradient descent on the same objective, stopped when the
/// gradient-mapping norm drops below `1e-8`.
pub fn hindsight_optimum_pgd(
    n: AgentId,
    streams: &Streams,
    row: &[f64],
    specs: &[LossSpec],
    diameter: f64,
    window: &Window,
    max_iter: usize,
) -> Result<MemoryMatrix> {
    check_window(streams, window)?;
    let _ = n;
    let (d_v, d_k) = memory_shape(streams, row, specs)?;
    let q = assemble(streams, row, specs, window)?;
    let lipschitz = SymmetricEigen::new(q.s).eigenvalues.max().max(0.0) + q.gamma.max();
    let step = if lipschitz > 1e-12 {
        1.0 / lipschitz
    } else {
        diameter / (q.p.norm() + 1e-12)
    };
    let mut u = DMatrix::zeros(d_v, d_k);
    let mut gm = f64::INFINITY;
    for _ in 0..max_iter {
        let g = gradient(streams, row, specs, window, &u)?;
        let mut next = &u - &g * step;
        project_in_place(&mut next, diameter)?;
        gm = (&u - &next).norm() / step;
        u = next;
        if gm < 1e-8 {
            return MemoryMatrix::new(u);
        }
    }
    Err(Error::Optimization { grad_norm: gm })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorMode {
    StaticHindsight,
    Windowed(usize),
}

/// Per-agent comparator, constant on each window.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSequence {
    pub mode: ComparatorMode,
    horizon: usize,
    /// `windows[n]` lists `(window, U)` in time order.
    windows: Vec<Vec<(Window, MemoryMatrix)>>,
}

impl ComparatorSequence {
    /// A constant comparator `U_n` for every agent.
    pub fn constant(horizon: usize, u: Vec<MemoryMatrix>) -> Self {
        Self {
            mode: ComparatorMode::StaticHindsight,
            horizon,
            windows: u.into_iter().map(|x| vec![(1..=horizon, x)]).collect(),
        }
    }

    /// Hindsight optima over `1..=horizon` (static) or over consecutive
    /// windows of length `Ω` (the last one possibly shorter).
    pub fn build(
        mode: ComparatorMode,
        streams: &Streams,
        weights: &crate::topology::LogicalWeights,
        specs: &[LossSpec],
        diameter: f64,
        horizon: usize,
    ) -> Result<Self> {
        let omega = match mode {
            ComparatorMode::StaticHindsight => horizon,
            ComparatorMode::Windowed(0) => return Err(Error::Config("window length must be positive".into())),
            ComparatorMode::Windowed(w) => w,
        };
        let mut windows = Vec::with_capacity(weights.n_agents());
        for n in 0..weights.n_agents() {
            let row = weights.row(n);
            let mut seq = Vec::new();
            let mut start = 1;
            while start <= horizon {
                let end = (start + omega - 1).min(horizon);
                let win = start..=end;
                let u = hindsight_optimum(n, streams, &row, specs, diameter, &win)?;
                seq.push((win, u));
                start = end + 1;
            }
            windows.push(seq);
        }
        Ok(Self { mode, horizon, windows })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_agents(&self) -> usize {
        self.windows.len()
    }

    pub fn windows(&self, n: AgentId) -> &[(Window, MemoryMatrix)] {
        &self.windows[n]
    }

    pub fn at(&self, n: AgentId, t: TimeStep) -> &MemoryMatrix {
        let seq = &self.windows[n];
        let i = seq.partition_point(|(w, _)| *w.end() < t);
        &seq[i.min(seq.len() - 1)].1
    }

    /// The full sequence `U_{n,1..=T}`.
    pub fn expand(&self, n: AgentId) -> Vec<MemoryMatrix> {
        (1..=self.horizon).map(|t| self.at(n, t).clone()).collect()
    }

    /// Per-agent path length, summing only the jumps between windows.
    pub fn path_lengths(&self) -> Vec<f64> {
        self.windows
            .iter()
            .map(|seq| {
                seq.windows(2)
                    .map(|p| (p[0].1.matrix() - p[1].1.matrix()).norm())
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::am::{FeatureMap, FeatureMapConfig, FeatureMapKind, KeyValuePair};
    use crate::datagen::rng::{stream_rng, uniform, Stream};
    use rand::Rng;

    fn random_streams(seed: u64, n: usize, t: usize, d_k: usize, d_v: usize, truth: Option<&DMatrix<f64>>) -> Streams {
        let mut rng = stream_rng(seed, Stream::Samples);
        Streams::new(
            (0..n)
                .map(|a| {
                    (1..=t)
                        .map(|s| {
                            let k = DVector::from_fn(d_k, |_, _| uniform(&mut rng, -1.0, 1.0));
                            let v = match truth {
                                Some(m) => m * &k,
                                None => DVector::from_fn(d_v, |_, _| uniform(&mut rng, -2.0, 2.0)),
                            };
                            KeyValuePair::new(k, v, a, s).unwrap()
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn recovers_noiseless_truth() {
        let truth = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 0.2, 0.3, 0.8, -0.4]);
        let s = random_streams(1, 2, 10, 3, 2, Some(&truth));
        let specs = vec![LossSpec::deltanet(); 2];
        let u = hindsight_optimum(0, &s, &[0.4, 0.6], &specs, 10.0, &(1..=10)).unwrap();
        assert!((u.matrix() - &truth).norm() < 1e-6);
    }

    #[test]
    fn linear_objective_hits_boundary_along_p() {
        let s = random_streams(2, 2, 8, 3, 2, None);
        let specs = vec![LossSpec::new(LossVariant::LinearAttention); 2];
        let row = [0.3, 0.7];
        let u = hindsight_optimum(0, &s, &row, &specs, 4.0, &(1..=8)).unwrap();
        let mut p = DMatrix::zeros(2, 3);
        for (m, w) in row.iter().enumerate() {
            for kv in s.agent(m) {
                p += &kv.value * kv.key.transpose() * *w;
            }
        }
        assert!((u.norm() - 2.0).abs() < 1e-9);
        assert!((u.matrix() - &p * (2.0 / p.norm())).norm() < 1e-6);
    }

    #[test]
    fn beats_random_feasible_points() {
        let s = random_streams(3, 1, 20, 2, 2, None);
        let specs = vec![LossSpec::deltanet()];
        let win = 1..=20;
        let u = hindsight_optimum(0, &s, &[1.0], &specs, 1.0, &win).unwrap();
        let best = objective(&s, &[1.0], &specs, &win, u.matrix()).unwrap();
        let mut rng = stream_rng(9, Stream::Samples);
        for _ in 0..10_000 {
            let x = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let x = project(x, 1.0).unwrap();
            assert!(best <= objective(&s, &[1.0], &specs, &win, x.matrix()).unwrap() + 1e-12);
        }
    }

    #[test]
    fn agrees_with_projected_gradient_for_every_variant() {
        let s = random_streams(4, 2, 12, 4, 2, None);
        let fm = FeatureMap::new(
            FeatureMapConfig {
                output_dim: 4,
                kind: FeatureMapKind::RandomFourier,
                seed: 5,
            },
            4,
        )
        .unwrap();
        for variant in LossVariant::ALL {
            let mut spec = LossSpec::new(variant);
            if variant.is_gated() {
                spec = spec.with_gating(vec![1.0, 0.0]);
            }
            if variant.uses_feature_map() {
                spec = spec.with_feature_map(fm.clone());
            }
            let specs = vec![spec; 2];
            for diameter in [0.5, 3.0, 40.0] {
                let win = 2..=11;
                let exact = hindsight_optimum(0, &s, &[0.5, 0.5], &specs, diameter, &win);
                let pgd = hindsight_optimum_pgd(0, &s, &[0.5, 0.5], &specs, diameter, &win, 100_000);
                match (exact, pgd) {
                    (Ok(a), Ok(b)) => {
                        let fa = objective(&s, &[0.5, 0.5], &specs, &win, a.matrix()).unwrap();
                        let fb = objective(&s, &[0.5, 0.5], &specs, &win, b.matrix()).unwrap();
                        assert!(fa <= fb + 1e-7 * (1.0 + fb.abs()), "{variant:?} B={diameter}: {fa} vs {fb}");
                    }
                    (a, b) => panic!("{variant:?} B={diameter}: {a:?} / {b:?}"),
                }
            }
        }
    }

    #[test]
    fn windowed_sequence_structure() {
        let s = random_streams(5, 2, 10, 2, 2, None);
        let specs = vec![LossSpec::deltanet(); 2];
        let w = crate::topology::LogicalWeights::uniform(2);
        let c = ComparatorSequence::build(ComparatorMode::Windowed(4), &s, &w, &specs, 3.0, 10).unwrap();
        assert_eq!(c.windows(0).len(), 3);
        assert_eq!(c.at(0, 4), &c.windows(0)[0].1);
        assert_eq!(c.at(0, 5), &c.windows(0)[1].1);
        assert_eq!(c.at(0, 10), &c.windows(0)[2].1);
        let direct: f64 = (2..=10).map(|t| (c.at(1, t - 1).matrix() - c.at(1, t).matrix()).norm()).sum();
        assert!((c.path_lengths()[1] - direct).abs() < 1e-12);
        let stat = ComparatorSequence::build(ComparatorMode::StaticHindsight, &s, &w, &specs, 3.0, 10).unwrap();
        assert_eq!(stat.path_lengths(), vec![0.0, 0.0]);
        let full = ComparatorSequence::build(ComparatorMode::Windowed(10), &s, &w, &specs, 3.0, 10).unwrap();
        assert_eq!(full.windows(0), stat.windows(0));
    }

    #[test]
    fn bad_windows_are_rejected() {
        let s = random_streams(6, 1, 5, 2, 2, None);
        let specs = vec![LossSpec::deltanet()];
        assert!(hindsight_optimum(0, &s, &[1.0], &specs, 1.0, &(0..=3)).is_err());
        assert!(hindsight_optimum(0, &s, &[1.0], &specs, 1.0, &(2..=6)).is_err());
    }
}
