use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::rates::Etas;
use super::state::{weighted_sum, AgentState, Environment, InFlightMessage, MessageKind, Trajectory};
use crate::am::{AgentId, TimeStep};
use crate::error::{Error, Result};
use crate::topology::RoutingTree;

/// One message event, recorded when logging is enabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageEvent {
    pub t: TimeStep,
    pub action: &'static str,
    pub kind: MessageKind,
    pub source: AgentId,
    pub dest: AgentId,
    pub origin: TimeStep,
    pub arrives_at: TimeStep,
}

/// The delayed-feedback network: every agent broadcasts its parameters down
/// its routing tree, every interested agent answers with a gradient on its own
/// data, and each update uses the latest gradient per source.
pub struct TogdNetwork<'e> {
    env: Environment<'e>,
    etas: Etas,
    /// One-way delay `τ̃_{n,m}` for every `m ∈ W_n \ {n}`.
    hops: Vec<BTreeMap<AgentId, u64>>,
    states: Vec<AgentState>,
    pending: BTreeMap<(TimeStep, u64), InFlightMessage>,
    seq: u64,
    log: Option<Vec<MessageEvent>>,
}

impl<'e> TogdNetwork<'e> {
    pub fn new(env: Environment<'e>, trees: &BTreeMap<AgentId, RoutingTree>, etas: Etas) -> Result<Self> {
        env.validate()?;
        etas.validate(env.n_agents())?;
        let mut hops = Vec::with_capacity(env.n_agents());
        for n in 0..env.n_agents() {
            let mut h = BTreeMap::new();
            let remote = env.weights.remote_support(n);
            if !remote.is_empty() {
                let tree = trees
                    .get(&n)
                    .ok_or_else(|| Error::Config(format!("no routing tree for agent {n}")))?;
                for m in remote {
                    let d = tree
                        .hop_count(m)
                        .ok_or_else(|| Error::Config(format!("tree of agent {n} does not reach agent {m}")))?;
                    if d == 0 {
                        return Err(Error::Config(format!("zero delay between agents {n} and {m}")));
                    }
                    h.insert(m, d);
                }
            }
            hops.push(h);
        }
        let states = (0..env.n_agents()).map(|n| env.initial_state(n, etas.at(n, 1))).collect();
        Ok(Self {
            env,
            etas,
            hops,
            states,
            pending: BTreeMap::new(),
            seq: 0,
            log: None,
        })
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn log(&self) -> &[MessageEvent] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    fn record(&mut self, t: TimeStep, action: &'static str, msg: &InFlightMessage) {
        if let Some(log) = self.log.as_mut() {
            log.push(MessageEvent {
                t,
                action,
                kind: msg.kind,
                source: msg.source,
                dest: msg.dest,
                origin: msg.origin,
                arrives_at: msg.arrives_at,
            });
        }
    }

    fn enqueue(&mut self, t: TimeStep, msg: InFlightMessage) -> Result<()> {
        if msg.arrives_at <= t {
            return Err(Error::Invariant(format!(
                "message {:?} {}→{} sent at {t} scheduled for {}",
                msg.kind, msg.source, msg.dest, msg.arrives_at
            )));
        }
        self.record(t, "send", &msg);
        self.seq += 1;
        self.pending.insert((msg.arrives_at, self.seq), msg);
        Ok(())
    }

    /// Runs step `t`: deliver, reply, broadcast, update. Afterwards each
    /// state holds `X_{n,t+1}`.
    pub fn step(&mut self, t: TimeStep) -> Result<()> {
        if t == 0 {
            return Err(Error::Invariant("steps start at 1".into()));
        }
        // (i) deliver
        if let Some((&(due, _), msg)) = self.pending.iter().next() {
            if due < t {
                return Err(Error::Invariant(format!(
                    "message {}→{} due at {due} was never delivered (now {t})",
                    msg.source, msg.dest
                )));
            }
        }
        let later = self.pending.split_off(&(t + 1, 0));
        let due = std::mem::replace(&mut self.pending, later);
        for (_, msg) in due {
            self.record(t, "deliver", &msg);
            let dest = msg.dest;
            match msg.kind {
                MessageKind::ParamSnapshot => self.states[dest].inbox.push_back(msg),
                MessageKind::GradientReply => {
                    let slot = self.states[dest].latest_grad.entry(msg.source);
                    match slot {
                        std::collections::btree_map::Entry::Occupied(mut e) => {
                            if e.get().1 < msg.origin {
                                e.insert((msg.payload, msg.origin));
                            }
                        }
                        std::collections::btree_map::Entry::Vacant(e) => {
                            e.insert((msg.payload, msg.origin));
                        }
                    }
                }
            }
        }

        // (ii) reply to delivered snapshots
        for m in 0..self.states.len() {
            while let Some(snap) = self.states[m].inbox.pop_front() {
                let n = snap.source;
                let back = self.hops[n][&m];
                let g = self.env.grad(m, snap.origin, &snap.payload)?;
                self.enqueue(
                    t,
                    InFlightMessage {
                        kind: MessageKind::GradientReply,
                        source: m,
                        dest: n,
                        payload: g,
                        sent_at: t,
                        arrives_at: t + back as usize,
                        origin: snap.origin,
                    },
                )?;
            }
        }

        // (iii) broadcast current parameters
        for n in 0..self.states.len() {
            let targets: Vec<(AgentId, u64)> = self.hops[n].iter().map(|(&m, &d)| (m, d)).collect();
            for (m, d) in targets {
                let payload = self.states[n].x.matrix().clone();
                self.enqueue(
                    t,
                    InFlightMessage {
                        kind: MessageKind::ParamSnapshot,
                        source: n,
                        dest: m,
                        payload,
                        sent_at: t,
                        arrives_at: t + d as usize,
                        origin: t,
                    },
                )?;
            }
        }

        // (iv) update
        let mut next = Vec::with_capacity(self.states.len());
        for n in 0..self.states.len() {
            let state = &self.states[n];
            let mut local = None;
            if self.env.weights.get(n, n) > 0.0 {
                local = Some(self.env.grad(n, t, state.x.matrix())?);
            }
            let mut terms: Vec<(f64, &DMatrix<f64>)> = Vec::new();
            for m in self.env.weights.support(n) {
                let w = self.env.weights.get(n, m);
                if m == n {
                    terms.push((w, local.as_ref().expect("local gradient computed")));
                    continue;
                }
                let tau = 2 * self.hops[n][&m] as usize;
                if t <= tau {
                    continue;
                }
                let (g, origin) = state.latest_grad.get(&m).ok_or_else(|| {
                    Error::Invariant(format!("agent {n} has no gradient from {m} at t={t}"))
                })?;
                if *origin != t - tau {
                    return Err(Error::Invariant(format!(
                        "agent {n} holds a gradient from {m} for step {origin}, expected {}",
                        t - tau
                    )));
                }
                terms.push((w, g));
            }
            next.push(weighted_sum(terms));
        }
        for (n, g) in next.into_iter().enumerate() {
            let state = &mut self.states[n];
            state.eta = self.etas.at(n, t);
            let base = state.x.matrix().clone();
            state.descend_from(&base, g.as_ref(), self.env.diameter)?;
        }
        Ok(())
    }
}

pub fn run_togd(
    env: &Environment<'_>,
    trees: &BTreeMap<AgentId, RoutingTree>,
    steps: usize,
    etas: &Etas,
) -> Result<Trajectory> {
    let mut net = TogdNetwork::new(*env, trees, etas.clone())?;
    let mut traj = Trajectory::start(net.states());
    for t in 1..steps {
        net.step(t)?;
        traj.record(net.states());
    }
    Ok(traj.finish(steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::am::{KeyValuePair, LossSpec, MemoryMatrix};
    use crate::datagen::Streams;
    use crate::protocols::baseline::run_ogd;
    use crate::topology::{design_trees, LogicalWeights, PhysicalGraph, SteinerDesigner};
    use nalgebra::DVector;

    fn scalar_streams(keys: &[[f64; 6]; 2], values: &[[f64; 6]; 2]) -> Streams {
        Streams::new(
            (0..2)
                .map(|n| {
                    (0..6)
                        .map(|i| {
                            KeyValuePair::new(
                                DVector::from_element(1, keys[n][i]),
                                DVector::from_element(1, values[n][i]),
                                n,
                                i + 1,
                            )
                            .unwrap()
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    /// Two agents on one edge, mutual interest with weights 1/2, d = 1,
    /// DeltaNet, η = 0.1, no projection. Round trip τ = 2.
    ///
    /// Schedule (each agent n, remote agent m):
    ///   t=1: send X_1 → arrives 2.              update: local only.
    ///   t=2: deliver snap(1), reply g(X^m_1; data_n,1) → arrives 3.
    ///        send X_2.                           update: local only (t ≤ τ).
    ///   t=3: deliver reply(1), snap(2); reply → 4. update: local + reply(1).
    ///   t=4: deliver reply(2), snap(3); ...        update: local + reply(2).
    ///   t=5: update: local + reply(3).
    #[test]
    fn hand_unrolled_two_agent_schedule() {
        let keys = [[1.0, 0.5, -1.0, 2.0, 0.3, 1.5], [0.7, -0.2, 1.1, 0.4, -1.3, 0.9]];
        let values = [[2.0, -1.0, 0.5, 1.0, 0.0, 3.0], [-0.5, 1.5, 2.5, -2.0, 1.0, 0.2]];
        let streams = scalar_streams(&keys, &values);
        let g = PhysicalGraph::path(2).unwrap();
        let w = LogicalWeights::uniform(2);
        let specs = vec![LossSpec::deltanet(); 2];
        let env = Environment {
            graph: &g,
            weights: &w,
            specs: &specs,
            streams: &streams,
            diameter: 1e6,
        };
        let trees = design_trees(&g, &w, &SteinerDesigner).unwrap();
        let eta = 0.1;
        let mut net = TogdNetwork::new(env, &trees, Etas::uniform(2, eta)).unwrap().with_log();

        // independent scalar unrolling
        let grad = |x: f64, k: f64, v: f64| (x * k - v) * k;
        let mut xs = vec![[0.0f64; 2]];
        for t in 1..=5usize {
            let prev = xs[t - 1];
            let mut next = [0.0; 2];
            for n in 0..2 {
                let m = 1 - n;
                let mut gsum = 0.5 * grad(prev[n], keys[n][t - 1], values[n][t - 1]);
                if t > 2 {
                    let s = t - 2;
                    gsum += 0.5 * grad(xs[s - 1][n], keys[m][s - 1], values[m][s - 1]);
                }
                next[n] = prev[n] - eta * gsum;
            }
            xs.push(next);
        }

        for t in 1..=5 {
            net.step(t).unwrap();
            for n in 0..2 {
                let got = net.states()[n].x.matrix()[(0, 0)];
                assert!((got - xs[t][n]).abs() < 1e-14, "t={t} n={n}: {got} vs {}", xs[t][n]);
            }
        }

        let sends: Vec<_> = net
            .log()
            .iter()
            .filter(|e| e.action == "send" && e.source == 0)
            .map(|e| (e.t, e.kind, e.origin, e.arrives_at))
            .collect();
        assert_eq!(
            sends,
            vec![
                (1, MessageKind::ParamSnapshot, 1, 2),
                (2, MessageKind::GradientReply, 1, 3),
                (2, MessageKind::ParamSnapshot, 2, 3),
                (3, MessageKind::GradientReply, 2, 4),
                (3, MessageKind::ParamSnapshot, 3, 4),
                (4, MessageKind::GradientReply, 3, 5),
                (4, MessageKind::ParamSnapshot, 4, 5),
                (5, MessageKind::GradientReply, 4, 6),
                (5, MessageKind::ParamSnapshot, 5, 6),
            ]
        );
    }

    #[test]
    fn remote_terms_wait_for_round_trip() {
        let keys = [[1.0; 6], [1.0; 6]];
        let values = [[0.0; 6], [5.0; 6]];
        let streams = scalar_streams(&keys, &values);
        let g = PhysicalGraph::path(2).unwrap();
        let rows = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let w = crate::topology::weights_from_rows(&rows, None).unwrap();
        let specs = vec![LossSpec::deltanet(); 2];
        let env = Environment {
            graph: &g,
            weights: &w,
            specs: &specs,
            streams: &streams,
            diameter: 1e6,
        };
        let trees = design_trees(&g, &w, &SteinerDesigner).unwrap();
        let mut net = TogdNetwork::new(env, &trees, Etas::uniform(2, 0.1)).unwrap();
        net.step(1).unwrap();
        net.step(2).unwrap();
        assert_eq!(net.states()[0].x, MemoryMatrix::zeros(1, 1));
        net.step(3).unwrap();
        assert!(net.states()[0].x.matrix()[(0, 0)] > 0.0);
    }

    #[test]
    fn identity_weights_reduce_to_ogd() {
        let cfg = crate::datagen::SyntheticConfig {
            n_agents: 4,
            d_k: 3,
            d_v: 2,
            ..Default::default()
        };
        let gt = crate::datagen::gen_ground_truth(&cfg).unwrap();
        let streams = crate::datagen::gen_stream(&cfg, &gt, 50).unwrap();
        let g = PhysicalGraph::path(4).unwrap();
        let w = LogicalWeights::identity(4);
        let specs = vec![LossSpec::deltanet(); 4];
        let env = Environment {
            graph: &g,
            weights: &w,
            specs: &specs,
            streams: &streams,
            diameter: 6.0,
        };
        let etas = Etas::uniform(4, 0.07);
        let a = run_togd(&env, &BTreeMap::new(), 50, &etas).unwrap();
        let b = run_ogd(&env, 50, &etas).unwrap();
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn missing_tree_is_a_config_error() {
        let streams = scalar_streams(&[[1.0; 6]; 2], &[[1.0; 6]; 2]);
        let g = PhysicalGraph::path(2).unwrap();
        let w = LogicalWeights::uniform(2);
        let specs = vec![LossSpec::deltanet(); 2];
        let env = Environment {
            graph: &g,
            weights: &w,
            specs: &specs,
            streams: &streams,
            diameter: 1.0,
        };
        assert!(matches!(
            TogdNetwork::new(env, &BTreeMap::new(), Etas::uniform(2, 0.1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn exhausted_stream_is_a_data_error() {
        let streams = scalar_streams(&[[1.0; 6]; 2], &[[1.0; 6]; 2]);
        let g = PhysicalGraph::path(2).unwrap();
        let w = LogicalWeights::identity(2);
        let specs = vec![LossSpec::deltanet(); 2];
        let env = Environment {
            graph: &g,
            weights: &w,
            specs: &specs,
            streams: &streams,
            diameter: 1.0,
        };
        assert!(matches!(
            run_togd(&env, &BTreeMap::new(), 9, &Etas::uniform(2, 0.1)),
            Err(Error::Data(_))
        ));
    }
}
