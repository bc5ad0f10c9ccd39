use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::baseline::{run_cdogd, run_ogd};
use super::rates::{bound_constants, lr_cdogd, lr_ogd, lr_togd, BoundKind, Etas};
use super::state::{Environment, Trajectory};
use super::togd::run_togd;
use crate::am::AgentId;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::topology::{
    delay_summaries, design_trees, link_capacity, metropolis_mixing, mixing_alpha, DelaySummary, RoutingTree,
    SteinerDesigner, SumDelayDesigner, TreeDesigner, CDOGD_LINK_CAPACITY,
};

/// Protocol-specific structures built once per environment.
#[derive(Debug, Clone, Default)]
pub struct Setup {
    /// Maximum per-link load per step; 0 when nothing crosses the network.
    pub link_capacity: u64,
    pub trees: BTreeMap<AgentId, RoutingTree>,
    /// Per-agent delay summaries; all zero for protocols without delays.
    pub summaries: Vec<DelaySummary>,
    pub mixing: Option<DMatrix<f64>>,
    pub alpha: Option<f64>,
}

/// An online protocol selectable by name.
pub trait Protocol: Named + Send + Sync {
    fn setup(&self, env: &Environment<'_>) -> Result<Setup>;

    /// Steps this protocol runs when the baselines run `horizon` steps.
    fn fair_steps(&self, _setup: &Setup, horizon: usize) -> Result<usize> {
        Ok(horizon)
    }

    /// Learning rates of the matching corollary for a run of `steps` steps.
    fn corollary_etas(
        &self,
        env: &Environment<'_>,
        setup: &Setup,
        steps: usize,
        grad_bounds: &[f64],
    ) -> Result<Etas>;

    fn run(&self, env: &Environment<'_>, setup: &Setup, steps: usize, etas: &Etas) -> Result<Trajectory>;

    fn bound_kind(&self) -> BoundKind;
}

pub struct Ogd;

impl Named for Ogd {
    fn name(&self) -> &'static str {
        "ogd"
    }
}

impl Protocol for Ogd {
    fn setup(&self, env: &Environment<'_>) -> Result<Setup> {
        Ok(Setup {
            summaries: vec![DelaySummary::default(); env.n_agents()],
            ..Default::default()
        })
    }

    fn corollary_etas(&self, env: &Environment<'_>, setup: &Setup, steps: usize, g: &[f64]) -> Result<Etas> {
        let c = bound_constants(env.weights, g, &setup.summaries, env.diameter)?;
        Ok(Etas::constant(
            c.iter()
                .map(|c| lr_ogd(env.diameter, c.g_bar, steps))
                .collect::<Result<_>>()?,
        ))
    }

    fn run(&self, env: &Environment<'_>, _setup: &Setup, steps: usize, etas: &Etas) -> Result<Trajectory> {
        run_ogd(env, steps, etas)
    }

    fn bound_kind(&self) -> BoundKind {
        BoundKind::OgdDynamic
    }
}

pub struct Cdogd;

impl Named for Cdogd {
    fn name(&self) -> &'static str {
        "cdogd"
    }
}

impl Protocol for Cdogd {
    fn setup(&self, env: &Environment<'_>) -> Result<Setup> {
        let a = metropolis_mixing(env.graph);
        Ok(Setup {
            link_capacity: CDOGD_LINK_CAPACITY,
            summaries: vec![DelaySummary::default(); env.n_agents()],
            alpha: Some(mixing_alpha(&a)),
            mixing: Some(a),
            ..Default::default()
        })
    }

    fn corollary_etas(&self, env: &Environment<'_>, _setup: &Setup, steps: usize, _g: &[f64]) -> Result<Etas> {
        Ok(Etas::uniform(env.n_agents(), lr_cdogd(steps)?))
    }

    fn run(&self, env: &Environment<'_>, setup: &Setup, steps: usize, etas: &Etas) -> Result<Trajectory> {
        let a = setup
            .mixing
            .as_ref()
            .ok_or_else(|| Error::Config("consensus protocol needs a mixing matrix".into()))?;
        run_cdogd(env, a, steps, etas)
    }

    fn bound_kind(&self) -> BoundKind {
        BoundKind::CdogdStatic
    }
}

/// Delayed tree-routed feedback with a pluggable tree designer.
pub struct Togd {
    name: &'static str,
    designer: Box<dyn TreeDesigner>,
}

impl Togd {
    pub fn new(name: &'static str, designer: Box<dyn TreeDesigner>) -> Self {
        Self { name, designer }
    }
}

impl Named for Togd {
    fn name(&self) -> &'static str {
        self.name
    }
}

impl Protocol for Togd {
    fn setup(&self, env: &Environment<'_>) -> Result<Setup> {
        let trees = design_trees(env.graph, env.weights, self.designer.as_ref())?;
        let summaries = delay_summaries(&trees, env.weights)?;
        Ok(Setup {
            link_capacity: link_capacity(env.graph, &trees, env.weights)?,
            trees,
            summaries,
            ..Default::default()
        })
    }

    /// `⌊T / C_max⌋`, or `T` when no message crosses a link.
    fn fair_steps(&self, setup: &Setup, horizon: usize) -> Result<usize> {
        let steps = match setup.link_capacity {
            0 => horizon,
            c => horizon / c as usize,
        };
        if steps == 0 {
            return Err(Error::Config(format!(
                "horizon {horizon} is shorter than the link capacity {}; no step would run",
                setup.link_capacity
            )));
        }
        Ok(steps)
    }

    fn corollary_etas(&self, env: &Environment<'_>, setup: &Setup, steps: usize, g: &[f64]) -> Result<Etas> {
        let c = bound_constants(env.weights, g, &setup.summaries, env.diameter)?;
        Ok(Etas::constant(
            c.iter()
                .map(|c| lr_togd(env.diameter, c.q, c.j, c.delta_tau, steps))
                .collect::<Result<_>>()?,
        ))
    }

    fn run(&self, env: &Environment<'_>, setup: &Setup, steps: usize, etas: &Etas) -> Result<Trajectory> {
        run_togd(env, &setup.trees, steps, etas)
    }

    fn bound_kind(&self) -> BoundKind {
        BoundKind::TogdDynamic
    }
}

/// `ogd`, `cdogd`, `togd_steiner` and `togd_star` (sum-delay optimal trees).
pub fn protocol_registry() -> Registry<dyn Protocol> {
    let mut r: Registry<dyn Protocol> = Registry::new("protocol");
    r.register(Box::new(Ogd))
        .register(Box::new(Cdogd))
        .register(Box::new(Togd::new("togd_steiner", Box::new(SteinerDesigner))))
        .register(Box::new(Togd::new("togd_star", Box::new(SumDelayDesigner::default()))));
    r
}
