use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{ExperimentConfig, LearningRate, Scenario, WeightsSource};
use crate::am::LossSpec;
use crate::analytics::{
    grad_bounds, nmse, regret, scaled_path_length, ComparatorMode, ComparatorSequence, RegretRow, RunMetadata, RunRecord,
};
use crate::datagen::{
    build_kv, gen_drifting_stream, gen_ground_truth, gen_periodic_traffic_with, gen_stream, load_traffic, Streams,
};
use crate::error::{Error, Result};
use crate::protocols::{bound_constants, protocol_registry, theoretical_bound, BoundInputs, Environment, Etas, Setup};
use crate::topology::{LogicalWeights, PhysicalGraph};

/// Everything that depends on `(rho, y0, seed)` but not on the protocol.
struct Dataset {
    rho: Option<f64>,
    y0: Option<f64>,
    seed: u64,
    streams: Streams,
    weights: LogicalWeights,
    specs: Vec<LossSpec>,
    setups: BTreeMap<String, Setup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<RegretRow>,
    pub runs: Vec<RunRecord>,
    pub metadata: RunMetadata,
}

fn coords(d: &Dataset, protocol: &str, horizon: Option<usize>, omega: Option<usize>) -> String {
    let mut s = format!("protocol={protocol} seed={}", d.seed);
    if let Some(r) = d.rho {
        s += &format!(" rho={r}");
    }
    if let Some(y) = d.y0 {
        s += &format!(" y0={y}");
    }
    if let Some(w) = omega {
        s += &format!(" omega={w}");
    }
    if let Some(t) = horizon {
        s += &format!(" T={t}");
    }
    s
}

fn wrap(coords: String) -> impl FnOnce(Error) -> Error {
    move |e| Error::Sweep {
        coords,
        source: Box::new(e),
    }
}

/// Key-value streams for one seed, long enough for the largest horizon.
fn build_streams(cfg: &ExperimentConfig, seed: u64, rho: f64, y0: f64, horizon: usize) -> Result<Streams> {
    match cfg.scenario {
        Scenario::Synthetic => {
            let sc = cfg.synthetic_config(seed, rho, y0)?;
            let gt = gen_ground_truth(&sc)?;
            match cfg.synthetic.switch_at {
                Some(at) => gen_drifting_stream(&sc, &gt, horizon, at),
                None => gen_stream(&sc, &gt, horizon),
            }
        }
        Scenario::PeriodicTraffic => {
            let mut p = cfg.periodic.traffic.clone();
            p.seed = seed;
            let records = gen_periodic_traffic_with(&p)?;
            Ok(build_kv(&records, &cfg.periodic.embed)?.streams)
        }
        Scenario::Traffic => {
            let t = cfg
                .traffic
                .as_ref()
                .ok_or_else(|| Error::Config("traffic scenario without a [traffic] section".into()))?;
            let records = load_traffic(&cfg.base_dir.join(&t.path))?;
            Ok(build_kv(&records, &t.embed)?.streams)
        }
    }
}

fn build_dataset(cfg: &ExperimentConfig, graph: &PhysicalGraph, seed: u64, rho: Option<f64>, y0: Option<f64>) -> Result<Dataset> {
    let horizon = *cfg.sweep.horizons.iter().max().expect("validated");
    let default_rho = cfg.sweep.rho[0];
    let default_y0 = cfg.sweep.y0[0];
    let streams = build_streams(cfg, seed, rho.unwrap_or(default_rho), y0.unwrap_or(default_y0), horizon)?;
    if streams.horizon() < horizon {
        return Err(Error::Data(format!(
            "the data covers {} steps but the sweep asks for {horizon}",
            streams.horizon()
        )));
    }
    let n = streams.n_agents();
    let weights = cfg.build_weights(n, seed, y0.unwrap_or(default_y0))?;
    let spec = cfg.loss.spec(streams.key_dim())?;
    let specs = vec![spec; n];
    let mut d = Dataset {
        rho,
        y0,
        seed,
        streams,
        weights,
        specs,
        setups: BTreeMap::new(),
    };
    let env = Environment {
        graph,
        weights: &d.weights,
        specs: &d.specs,
        streams: &d.streams,
        diameter: cfg.diameter,
    };
    env.validate()?;
    let registry = protocol_registry();
    let mut setups = BTreeMap::new();
    for name in &cfg.protocols {
        let setup = registry
            .get(name)?
            .setup(&env)
            .map_err(wrap(coords(&d, name, None, None)))?;
        setups.insert(name.clone(), setup);
    }
    d.setups = setups;
    Ok(d)
}

fn run_point(
    cfg: &ExperimentConfig,
    graph: &PhysicalGraph,
    d: &Dataset,
    protocol: &str,
    horizon: usize,
    omega: Option<usize>,
) -> Result<(RegretRow, RunRecord)> {
    let registry = protocol_registry();
    let proto = registry.get(protocol)?;
    let setup = &d.setups[protocol];
    let steps = if cfg.fair_horizon {
        proto.fair_steps(setup, horizon)?
    } else {
        horizon
    };
    let streams = d.streams.truncated(steps)?;
    let env = Environment {
        graph,
        weights: &d.weights,
        specs: &d.specs,
        streams: &streams,
        diameter: cfg.diameter,
    };
    let g = grad_bounds(&d.specs, &streams, cfg.diameter)?;
    let etas = match cfg.learning_rate {
        LearningRate::Corollary => proto.corollary_etas(&env, setup, steps, &g)?,
        LearningRate::Fixed { value } => Etas::uniform(env.n_agents(), value),
    };
    let traj = proto.run(&env, setup, steps, &etas)?;

    let static_cmp =
        ComparatorSequence::build(ComparatorMode::StaticHindsight, &streams, &d.weights, &d.specs, cfg.diameter, steps)?;
    let dyn_cmp = match omega {
        Some(w) => ComparatorSequence::build(ComparatorMode::Windowed(w), &streams, &d.weights, &d.specs, cfg.diameter, steps)?,
        None => static_cmp.clone(),
    };
    let static_regret = regret(&traj, &streams, &d.weights, &d.specs, &static_cmp)?.total;
    let dynamic_regret = regret(&traj, &streams, &d.weights, &d.specs, &dyn_cmp)?.total;
    let pls = dyn_cmp.path_lengths();
    let pl: f64 = pls.iter().sum();
    let constants = bound_constants(&d.weights, &g, &setup.summaries, cfg.diameter)?;
    let bound = theoretical_bound(
        proto.bound_kind(),
        BoundInputs {
            constants: &constants,
            b: cfg.diameter,
            horizon: steps,
            path_lengths: &pls,
            etas: Some(&etas.base),
            alpha: setup.alpha,
        },
    )?;
    let err = nmse(&traj, &streams, &d.weights, &d.specs, cfg.nmse)?;
    let row = RegretRow {
        horizon,
        protocol: protocol.to_string(),
        static_regret,
        dynamic_regret,
        avg_regret: static_regret / steps as f64,
        pl,
        bound,
        self_nmse: err.self_nmse,
        cross_nmse: err.cross_nmse,
        c_max: setup.link_capacity,
        seed: d.seed,
        steps,
        avg_dynamic_regret: dynamic_regret / steps as f64,
        scaled_pl: scaled_path_length(pl, steps),
        rho: d.rho,
        y0: d.y0,
        omega,
    };
    let record = RunRecord {
        protocol: protocol.to_string(),
        horizon,
        steps,
        seed: d.seed,
        etas: etas.base.clone(),
        grad_bounds: g,
    };
    Ok((row, record))
}

/// Runs every `(protocol, sweep point, seed)` combination. Points run in
/// parallel; rows come back sorted by protocol, `rho`, `y0`, `omega`, `T`
/// and seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let graph = cfg.graph.build(&cfg.base_dir)?;
    let rhos: Vec<Option<f64>> = match cfg.scenario {
        Scenario::Synthetic => cfg.sweep.rho.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let y0s: Vec<Option<f64>> = match (cfg.scenario, &cfg.weights) {
        (Scenario::Synthetic, _) | (_, WeightsSource::Dirichlet) => cfg.sweep.y0.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut groups = Vec::new();
    for &rho in &rhos {
        for &y0 in &y0s {
            for &seed in &cfg.seeds {
                groups.push((rho, y0, seed));
            }
        }
    }
    let datasets: Vec<Dataset> = groups
        .par_iter()
        .map(|&(rho, y0, seed)| {
            let mut c = format!("seed={seed}");
            if let Some(r) = rho {
                c += &format!(" rho={r}");
            }
            if let Some(y) = y0 {
                c += &format!(" y0={y}");
            }
            build_dataset(cfg, &graph, seed, rho, y0).map_err(|e| match e {
                e @ Error::Sweep { .. } => e,
                e => wrap(c)(e),
            })
        })
        .collect::<Result<_>>()?;

    let omegas: Vec<Option<usize>> = if cfg.sweep.omega.is_empty() {
        vec![None]
    } else {
        cfg.sweep.omega.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for d in &datasets {
        for p in &cfg.protocols {
            for &omega in &omegas {
                for &t in &cfg.sweep.horizons {
                    jobs.push((d, p.as_str(), t, omega));
                }
            }
        }
    }
    let mut results: Vec<(RegretRow, RunRecord)> = jobs
        .par_iter()
        .map(|&(d, p, t, omega)| run_point(cfg, &graph, d, p, t, omega).map_err(wrap(coords(d, p, Some(t), omega))))
        .collect::<Result<_>>()?;

    results.sort_by(|a, b| row_order(&a.0, &b.0));
    for w in results.windows(2) {
        if row_order(&w[0].0, &w[1].0).is_eq() {
            return Err(Error::Invariant(format!(
                "duplicate report row for protocol {} at T={} seed={}",
                w[0].0.protocol, w[0].0.horizon, w[0].0.seed
            )));
        }
    }
    let (rows, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let metadata = RunMetadata::new(cfg.to_json()?, runs.clone());
    Ok(ExperimentReport { rows, runs, metadata })
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

fn row_order(a: &RegretRow, b: &RegretRow) -> Ordering {
    a.protocol
        .cmp(&b.protocol)
        .then(cmp_opt(a.rho, b.rho))
        .then(cmp_opt(a.y0, b.y0))
        .then(a.omega.cmp(&b.omega))
        .then(a.horizon.cmp(&b.horizon))
        .then(a.seed.cmp(&b.seed))
}
