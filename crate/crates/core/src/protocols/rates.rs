use serde::{Deserialize, Serialize};

use crate::am::TimeStep;
use crate::error::{Error, Result};
use crate::topology::{DelaySummary, LogicalWeights};

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be nonnegative, got {x}")))
    }
}

/// `B√7 / (Ḡ√(2T))`
pub fn lr_ogd(b: f64, g_bar: f64, horizon: usize) -> Result<f64> {
    positive("B", b)?;
    positive("G-bar", g_bar)?;
    positive("T", horizon as f64)?;
    Ok(b * 7f64.sqrt() / (g_bar * (2.0 * horizon as f64).sqrt()))
}

/// `1 / (2√T)`
pub fn lr_cdogd(horizon: usize) -> Result<f64> {
    positive("T", horizon as f64)?;
    Ok(1.0 / (2.0 * (horizon as f64).sqrt()))
}

/// `√(7B² / (4(Q(T+Δτ) + J)))`
pub fn lr_togd(b: f64, q: f64, j: f64, delta_tau: f64, horizon: usize) -> Result<f64> {
    positive("B", b)?;
    positive("Q", q)?;
    positive("T", horizon as f64)?;
    nonnegative("J", j)?;
    nonnegative("delta tau", delta_tau)?;
    Ok((7.0 * b * b / (4.0 * (q * (horizon as f64 + delta_tau) + j))).sqrt())
}

/// Per-agent learning rates, constant by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Etas {
    pub base: Vec<f64>,
    #[serde(default)]
    pub decay: Decay,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    #[default]
    Constant,
    /// `η_t = η / √t`
    InvSqrt,
}

impl Etas {
    pub fn constant(base: Vec<f64>) -> Self {
        Self {
            base,
            decay: Decay::Constant,
        }
    }

    pub fn uniform(n: usize, eta: f64) -> Self {
        Self::constant(vec![eta; n])
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if self.base.len() != n_agents {
            return Err(Error::Config(format!(
                "{} learning rates for {n_agents} agents",
                self.base.len()
            )));
        }
        for &e in &self.base {
            nonnegative("learning rate", e)?;
        }
        Ok(())
    }

    pub fn at(&self, n: usize, t: TimeStep) -> f64 {
        match self.decay {
            Decay::Constant => self.base[n],
            Decay::InvSqrt => self.base[n] / (t.max(1) as f64).sqrt(),
        }
    }
}

/// Per-agent constants of the delayed-feedback regret bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BoundConstants {
    /// `G_n`
    pub g: f64,
    pub k: f64,
    pub q: f64,
    pub j: f64,
    pub h: f64,
    pub c: f64,
    pub g_bar: f64,
    pub delta_tau: f64,
    pub tau_max: f64,
}

pub fn bound_constants(
    w: &LogicalWeights,
    grad_bounds: &[f64],
    summaries: &[DelaySummary],
    b: f64,
) -> Result<Vec<BoundConstants>> {
    let n_agents = w.n_agents();
    if grad_bounds.len() != n_agents || summaries.len() != n_agents {
        return Err(Error::Config("bound constants need one G and one delay summary per agent".into()));
    }
    Ok((0..n_agents)
        .map(|n| {
            let support = w.support(n);
            let size = support.len() as f64;
            let k = support
                .iter()
                .map(|&m| w.get(n, m) * grad_bounds[m])
                .fold(0.0, f64::max);
            let g_sum: f64 = support.iter().map(|&m| grad_bounds[m]).sum();
            let g_bar: f64 = support.iter().map(|&m| w.get(n, m) * grad_bounds[m]).sum();
            let s = summaries[n];
            let (tau_sum, tau_max, delta) = (s.tau_sum as f64, s.tau_max as f64, s.delta_tau as f64);
            BoundConstants {
                g: grad_bounds[n],
                k,
                q: 0.5 * k * g_sum + size * k * k * tau_sum,
                j: size * size * k * k * tau_max * tau_max,
                h: k * tau_sum,
                c: k * delta * size * b,
                g_bar,
                delta_tau: delta,
                tau_max,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    OgdDynamic,
    CdogdStatic,
    TogdDynamic,
    TogdStatic,
}

/// Inputs of [`theoretical_bound`]. When `etas` is `None` the rates of the
/// matching corollary are substituted.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub constants: &'a [BoundConstants],
    pub b: f64,
    pub horizon: usize,
    pub path_lengths: &'a [f64],
    pub etas: Option<&'a [f64]>,
    pub alpha: Option<f64>,
}

pub fn theoretical_bound(kind: BoundKind, inp: BoundInputs<'_>) -> Result<f64> {
    positive("B", inp.b)?;
    let t = inp.horizon as f64;
    let n = inp.constants.len();
    let pl = |i: usize| -> Result<f64> {
        match kind {
            BoundKind::TogdStatic | BoundKind::CdogdStatic => Ok(0.0),
            _ => {
                let p = *inp
                    .path_lengths
                    .get(i)
                    .ok_or_else(|| Error::Config("one path length per agent is required".into()))?;
                nonnegative("path length", p)?;
                Ok(p)
            }
        }
    };
    let eta = |i: usize| -> Option<Result<f64>> {
        inp.etas.map(|e| {
            let x = *e
                .get(i)
                .ok_or_else(|| Error::Config("one learning rate per agent is required".into()))?;
            positive("learning rate", x)?;
            Ok(x)
        })
    };
    let b = inp.b;
    let mut total = 0.0;
    match kind {
        BoundKind::OgdDynamic => {
            for (i, c) in inp.constants.iter().enumerate() {
                let e = match eta(i) {
                    Some(e) => e?,
                    None => lr_ogd(b, c.g_bar, inp.horizon)?,
                };
                total += 7.0 * b * b / (4.0 * e) + e * t * c.g_bar * c.g_bar / 2.0 + b / e * pl(i)?;
            }
        }
        BoundKind::CdogdStatic => {
            let alpha = inp
                .alpha
                .ok_or_else(|| Error::Config("the consensus bound needs alpha".into()))?;
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::Config(format!("alpha = {alpha} must lie in [0,1)")));
            }
            let g_max = inp.constants.iter().map(|c| c.g).fold(0.0, f64::max);
            total = n as f64 * (b + (5.0 - alpha) / (1.0 - alpha) * g_max * g_max) * t.sqrt();
        }
        BoundKind::TogdDynamic | BoundKind::TogdStatic => {
            for (i, c) in inp.constants.iter().enumerate() {
                let p = pl(i)?;
                total += match eta(i) {
                    Some(e) => {
                        let e = e?;
                        c.q * e * (t + c.delta_tau) + c.j * e + 7.0 * b * b / (4.0 * e) + (b / e + c.h) * p + c.c
                    }
                    None => {
                        let root = (c.q * (t + c.delta_tau) + c.j).sqrt();
                        7f64.sqrt() * b * root + (c.h + 2.0 / 7f64.sqrt() * root) * p
                    }
                };
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(lr_cdogd(4).unwrap(), 0.25);
        assert!((lr_ogd(1.0, 1.0, 2).unwrap() - 7f64.sqrt() / 2.0).abs() < 1e-15);
        let (b, q, t) = (2.0, 3.0, 50);
        let want = (7.0 * b * b / (4.0 * q * t as f64)).sqrt();
        assert!((lr_togd(b, q, 0.0, 0.0, t).unwrap() - want).abs() < 1e-15);
        assert!(lr_ogd(0.0, 1.0, 2).is_err());
        assert!(lr_cdogd(0).is_err());
        assert!(lr_togd(1.0, 0.0, 0.0, 0.0, 3).is_err());
    }

    #[test]
    fn single_agent_constants() {
        let w = LogicalWeights::identity(1);
        let c = bound_constants(&w, &[1.0], &[DelaySummary::default()], 1.0).unwrap()[0];
        assert_eq!((c.k, c.q, c.j, c.h, c.c), (1.0, 0.5, 0.0, 0.0, 0.0));
    }

    /// Second evaluator: the formulas written out term by term.
    fn by_hand(w: &[f64], g: &[f64], tau_sum: f64, tau_max: f64, delta: f64, b: f64) -> [f64; 5] {
        let k = w.iter().zip(g).map(|(a, b)| a * b).fold(0.0, f64::max);
        let size = w.iter().filter(|&&x| x > 0.0).count() as f64;
        let gs: f64 = w.iter().zip(g).filter(|(a, _)| **a > 0.0).map(|(_, b)| b).sum();
        [
            k,
            k * gs / 2.0 + size * k.powi(2) * tau_sum,
            (size * k * tau_max).powi(2),
            k * tau_sum,
            k * delta * size * b,
        ]
    }

    #[test]
    fn two_agent_uniform_constants() {
        let w = LogicalWeights::uniform(2);
        let s = DelaySummary {
            tau_min: 0,
            tau_max: 2,
            delta_tau: 2,
            tau_sum: 2,
        };
        let c = bound_constants(&w, &[1.0, 1.0], &[s, s], 1.0).unwrap()[0];
        assert_eq!(c.k, 0.5);
        assert_eq!(c.q, 1.5);
        assert_eq!(c.j, 4.0);
        assert_eq!(c.h, 1.0);
        // K Δτ |W| B = 0.5 · 2 · 2 · 1
        assert_eq!(c.c, 2.0);
        let hand = by_hand(&[0.5, 0.5], &[1.0, 1.0], 2.0, 2.0, 2.0, 1.0);
        assert_eq!([c.k, c.q, c.j, c.h, c.c], hand);
    }

    #[test]
    fn zero_spread_means_zero_c() {
        let w = LogicalWeights::uniform(3);
        let s = DelaySummary {
            tau_min: 4,
            tau_max: 4,
            delta_tau: 0,
            tau_sum: 8,
        };
        let c = bound_constants(&w, &[1.0, 2.0, 3.0], &[s; 3], 5.0).unwrap();
        assert!(c.iter().all(|c| c.c == 0.0));
    }

    fn inputs<'a>(c: &'a [BoundConstants], t: usize, pl: &'a [f64], eta: Option<&'a [f64]>) -> BoundInputs<'a> {
        BoundInputs {
            constants: c,
            b: 2.0,
            horizon: t,
            path_lengths: pl,
            etas: eta,
            alpha: Some(0.5),
        }
    }

    #[test]
    fn static_is_dynamic_without_path_length() {
        let c = [BoundConstants {
            q: 1.0,
            j: 2.0,
            h: 3.0,
            c: 1.0,
            delta_tau: 2.0,
            ..Default::default()
        }];
        let s = theoretical_bound(BoundKind::TogdStatic, inputs(&c, 100, &[5.0], None)).unwrap();
        let d = theoretical_bound(BoundKind::TogdDynamic, inputs(&c, 100, &[0.0], None)).unwrap();
        assert_eq!(s, d);
    }

    #[test]
    fn ogd_with_only_b() {
        let c = [BoundConstants::default(); 2];
        let v = theoretical_bound(BoundKind::OgdDynamic, inputs(&c, 10, &[0.0, 0.0], Some(&[0.5, 0.25]))).unwrap();
        assert!((v - (7.0 * 4.0 / 2.0 + 7.0 * 4.0 / 1.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_must_be_below_one() {
        let c = [BoundConstants::default()];
        let mut i = inputs(&c, 10, &[0.0], None);
        i.alpha = Some(1.0);
        assert!(matches!(theoretical_bound(BoundKind::CdogdStatic, i), Err(Error::Config(_))));
    }

    fn constants() -> impl Strategy<Value = BoundConstants> {
        (0.01f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..4.0, 0.1f64..3.0).prop_map(
            |(q, j, h, c, g_bar, delta, g)| BoundConstants {
                q,
                j,
                h,
                c,
                g_bar: g_bar + 0.1,
                g,
                delta_tau: delta.floor(),
                ..Default::default()
            },
        )
    }

    proptest! {
        #[test]
        fn bounds_are_monotone_in_horizon_and_path_length(
            c in prop::collection::vec(constants(), 1..4),
            pl in 0.0f64..10.0,
            extra in 0.0f64..10.0,
            eta in 0.01f64..1.0,
        ) {
            let n = c.len();
            let pls = vec![pl; n];
            let more = vec![pl + extra; n];
            let etas = vec![eta; n];
            for kind in [BoundKind::OgdDynamic, BoundKind::CdogdStatic, BoundKind::TogdDynamic, BoundKind::TogdStatic] {
                for e in [None, Some(etas.as_slice())] {
                    let a = theoretical_bound(kind, inputs(&c, 100, &pls, e)).unwrap();
                    let b = theoretical_bound(kind, inputs(&c, 400, &pls, e)).unwrap();
                    let p = theoretical_bound(kind, inputs(&c, 100, &more, e)).unwrap();
                    prop_assert!(a <= b);
                    prop_assert!(a <= p);
                }
            }
        }
    }
}
