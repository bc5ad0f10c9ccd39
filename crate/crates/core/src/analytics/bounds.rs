use serde::Serialize;

use crate::am::{ball_grad_bound, LossSpec};
use crate::datagen::Streams;
use crate::error::{Error, Result};
use crate::protocols::{theoretical_bound, BoundConstants, BoundInputs, BoundKind};

/// `G_n` per agent: the configured bound if any, otherwise the supremum of
/// `‖∇f_{n,t}‖` over the ball of diameter `B` and the agent's samples.
pub fn grad_bounds(specs: &[LossSpec], streams: &Streams, diameter: f64) -> Result<Vec<f64>> {
    if specs.len() != streams.n_agents() {
        return Err(Error::Config("one loss spec per agent is required".into()));
    }
    specs
        .iter()
        .enumerate()
        .map(|(n, spec)| match spec.grad_bound {
            Some(g) => Ok(g),
            None => ball_grad_bound(spec, streams.agent(n), 0.5 * diameter),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    pub steps: usize,
    /// Network path length `Σ_n PL_n`.
    pub path_length: f64,
    /// `(1 + PL) / √T`
    pub scaled_pl: f64,
    pub bound: f64,
}

/// Bound values along a sequence of horizons, each with its per-agent path
/// lengths.
pub fn bound_trajectory(
    kind: BoundKind,
    constants: &[BoundConstants],
    b: f64,
    points: &[(usize, Vec<f64>)],
    etas: Option<&[f64]>,
    alpha: Option<f64>,
) -> Result<Vec<BoundPoint>> {
    points
        .iter()
        .map(|(steps, pls)| {
            if *steps == 0 {
                return Err(Error::Config("bound horizon must be positive".into()));
            }
            let bound = theoretical_bound(
                kind,
                BoundInputs {
                    constants,
                    b,
                    horizon: *steps,
                    path_lengths: pls,
                    etas,
                    alpha,
                },
            )?;
            let pl: f64 = pls.iter().sum();
            Ok(BoundPoint {
                steps: *steps,
                path_length: pl,
                scaled_pl: scaled_path_length(pl, *steps),
                bound,
            })
        })
        .collect()
}

pub fn scaled_path_length(pl: f64, steps: usize) -> f64 {
    (1.0 + pl) / (steps as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::am::KeyValuePair;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn constants(q: f64, delta_tau: f64, j: f64, h: f64) -> Vec<BoundConstants> {
        vec![BoundConstants {
            g: 1.0,
            k: 1.0,
            q,
            j,
            h,
            c: 0.0,
            g_bar: 1.0,
            delta_tau,
            tau_max: delta_tau,
        }]
    }

    #[test]
    fn scaled_path_length_values() {
        assert_eq!(scaled_path_length(0.0, 4), 0.5);
        assert_eq!(scaled_path_length(8.0, 9), 3.0);
    }

    #[test]
    fn zero_path_length_matches_static_bound() {
        let c = constants(2.0, 3.0, 5.0, 1.5);
        for etas in [None, Some(&[0.2][..])] {
            let d = bound_trajectory(BoundKind::TogdDynamic, &c, 4.0, &[(100, vec![0.0])], etas, None).unwrap();
            let s = bound_trajectory(BoundKind::TogdStatic, &c, 4.0, &[(100, vec![7.0])], etas, None).unwrap();
            assert_eq!(d[0].bound, s[0].bound);
        }
    }

    #[test]
    fn undelayed_bound_scales_with_root_horizon() {
        let c = constants(2.0, 0.0, 0.0, 0.0);
        let p = bound_trajectory(BoundKind::TogdDynamic, &c, 4.0, &[(100, vec![0.0]), (400, vec![0.0])], None, None)
            .unwrap();
        assert!((p[1].bound / p[0].bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_rejected() {
        let c = constants(1.0, 0.0, 0.0, 0.0);
        assert!(bound_trajectory(BoundKind::TogdDynamic, &c, 1.0, &[(0, vec![0.0])], None, None).is_err());
    }

    #[test]
    fn configured_grad_bound_wins() {
        let kv = |n| KeyValuePair::new(DVector::from_element(2, 1.0), DVector::from_element(2, 1.0), n, 1).unwrap();
        let streams = Streams::new(vec![vec![kv(0)], vec![kv(1)]]).unwrap();
        let specs = vec![LossSpec::deltanet().with_grad_bound(3.5), LossSpec::deltanet()];
        let g = grad_bounds(&specs, &streams, 2.0).unwrap();
        assert_eq!(g[0], 3.5);
        // ‖k‖(R‖k‖ + ‖v‖) with R = 1
        assert!((g[1] - 2f64.sqrt() * (2f64.sqrt() + 2f64.sqrt())).abs() < 1e-12);
        assert!(grad_bounds(&specs[..1], &streams, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn corollary_bound_grows_sublinearly(
            q in 0.1f64..10.0, dt in 0.0f64..20.0, j in 0.0f64..50.0, h in 0.0f64..5.0,
            pl in 0.0f64..10.0, t in 1usize..5000,
        ) {
            let c = constants(q, dt, j, h);
            let p = bound_trajectory(BoundKind::TogdDynamic, &c, 3.0, &[(t, vec![pl]), (2 * t, vec![pl])], None, None).unwrap();
            prop_assert!(p[1].bound >= p[0].bound);
            prop_assert!(p[1].bound <= 2f64.sqrt() * p[0].bound * (1.0 + 1e-12));
        }

        #[test]
        fn bound_is_monotone_in_path_length(pl in 0.0f64..10.0, extra in 0.0f64..10.0, eta in 0.01f64..1.0) {
            let c = constants(1.0, 2.0, 3.0, 0.5);
            let e = [eta];
            let p = bound_trajectory(BoundKind::TogdDynamic, &c, 2.0, &[(50, vec![pl]), (50, vec![pl + extra])], Some(&e), None).unwrap();
            prop_assert!(p[1].bound >= p[0].bound);
        }
    }
}
