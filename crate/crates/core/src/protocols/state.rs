use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::am::{project_in_place, AgentId, LossSpec, MemoryMatrix, TimeStep};
use crate::datagen::Streams;
use crate::error::{Error, Result};
use crate::topology::{LogicalWeights, PhysicalGraph};

/// Everything a protocol run reads.
#[derive(Debug, Clone, Copy)]
pub struct Environment<'a> {
    pub graph: &'a PhysicalGraph,
    pub weights: &'a LogicalWeights,
    pub specs: &'a [LossSpec],
    pub streams: &'a Streams,
    /// Domain diameter `B`; iterates live in the ball of radius `B/2`.
    pub diameter: f64,
}

impl Environment<'_> {
    pub fn n_agents(&self) -> usize {
        self.weights.n_agents()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents();
        if self.graph.n_nodes() != n || self.specs.len() != n || self.streams.n_agents() != n {
            return Err(Error::Config(format!(
                "graph ({}), weights ({n}), specs ({}) and streams ({}) disagree on the agent count",
                self.graph.n_nodes(),
                self.specs.len(),
                self.streams.n_agents()
            )));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(Error::Config(format!("diameter B must be positive, got {}", self.diameter)));
        }
        for s in self.specs {
            s.validate()?;
        }
        Ok(())
    }

    /// Memory shape `(d_v, feature dim)` of agent `n`.
    pub fn memory_dims(&self, n: AgentId) -> (usize, usize) {
        (
            self.streams.value_dim(),
            self.specs[n].feature_dim(self.streams.key_dim()),
        )
    }

    pub fn initial_state(&self, n: AgentId, eta: f64) -> AgentState {
        let (d_v, d_k) = self.memory_dims(n);
        AgentState::new(n, MemoryMatrix::zeros(d_v, d_k), eta)
    }

    /// `∇f_{m,s}(X)` on agent `m`'s own sample at step `s`.
    pub fn grad(&self, m: AgentId, s: TimeStep, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        crate::am::eval_grad_raw(&self.specs[m], x, self.streams.sample(m, s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MessageKind {
    ParamSnapshot,
    GradientReply,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlightMessage {
    pub kind: MessageKind,
    pub source: AgentId,
    pub dest: AgentId,
    pub payload: DMatrix<f64>,
    pub sent_at: TimeStep,
    pub arrives_at: TimeStep,
    /// Step whose parameters (and data) the payload was computed from.
    pub origin: TimeStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent: AgentId,
    pub x: MemoryMatrix,
    pub eta: f64,
    pub inbox: VecDeque<InFlightMessage>,
    /// Latest gradient per source with the step it originated from.
    pub latest_grad: BTreeMap<AgentId, (DMatrix<f64>, TimeStep)>,
}

impl AgentState {
    pub fn new(agent: AgentId, x: MemoryMatrix, eta: f64) -> Self {
        Self {
            agent,
            x,
            eta,
            inbox: VecDeque::new(),
            latest_grad: BTreeMap::new(),
        }
    }

    /// `X ← Π[base − η g]`.
    pub(crate) fn descend_from(&mut self, base: &DMatrix<f64>, g: Option<&DMatrix<f64>>, diameter: f64) -> Result<()> {
        let mut next = match g {
            Some(g) => base - g * self.eta,
            None => base.clone(),
        };
        project_in_place(&mut next, diameter)?;
        self.x = MemoryMatrix::from_finite(next);
        Ok(())
    }
}

/// `Σ w_i M_i` over the nonzero weights, accumulated in the given order and
/// starting from the first term (so a single unit weight is exact).
pub(crate) fn weighted_sum<'a>(terms: impl IntoIterator<Item = (f64, &'a DMatrix<f64>)>) -> Option<DMatrix<f64>> {
    let mut acc: Option<DMatrix<f64>> = None;
    for (w, m) in terms {
        if w == 0.0 {
            continue;
        }
        match acc.as_mut() {
            None => acc = Some(m * w),
            Some(a) => *a += m * w,
        }
    }
    acc
}

/// Iterates `X_{n,t}` for `t = 1..=steps`; `X_{n,1}` is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    iterates: Vec<Vec<MemoryMatrix>>,
}

impl Trajectory {
    pub fn new(iterates: Vec<Vec<MemoryMatrix>>) -> Self {
        Self { iterates }
    }

    pub(crate) fn start(states: &[AgentState]) -> Self {
        Self {
            iterates: states.iter().map(|s| vec![s.x.clone()]).collect(),
        }
    }

    pub(crate) fn record(&mut self, states: &[AgentState]) {
        for (seq, s) in self.iterates.iter_mut().zip(states) {
            seq.push(s.x.clone());
        }
    }

    pub(crate) fn finish(mut self, steps: usize) -> Self {
        for seq in &mut self.iterates {
            seq.truncate(steps);
        }
        self
    }

    pub fn n_agents(&self) -> usize {
        self.iterates.len()
    }

    pub fn steps(&self) -> usize {
        self.iterates.first().map_or(0, Vec::len)
    }

    pub fn agent(&self, n: AgentId) -> &[MemoryMatrix] {
        &self.iterates[n]
    }

    /// `X_{n,t}`, 1-based.
    pub fn at(&self, n: AgentId, t: TimeStep) -> &MemoryMatrix {
        &self.iterates[n][t - 1]
    }

    pub fn truncated(&self, steps: usize) -> Self {
        Self {
            iterates: self.iterates.iter().map(|s| s[..steps.min(s.len())].to_vec()).collect(),
        }
    }

    /// True when every entry of every iterate has identical bits.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.iterates.len() == other.iterates.len()
            && self.iterates.iter().zip(&other.iterates).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| {
                        x.dims() == y.dims()
                            && x.matrix().iter().zip(y.matrix().iter()).all(|(p, q)| p.to_bits() == q.to_bits())
                    })
            })
    }
}
