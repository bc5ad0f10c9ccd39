use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Index of an agent in `0..N`.
pub type AgentId = usize;

/// Discrete time step, 1-based.
pub type TimeStep = usize;

/// Parameters of one agent's linear associative memory, a `d_v × d_k` matrix.
///
/// Construction rejects non-finite entries. Feasibility (norm at most `B/2`)
/// is established by [`project`], which is the only way the protocols produce
/// new iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMatrix(DMatrix<f64>);

impl MemoryMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("memory matrix has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn zeros(d_v: usize, d_k: usize) -> Self {
        Self(DMatrix::zeros(d_v, d_k))
    }

    /// Wraps a matrix the caller already knows to be finite.
    pub(crate) fn from_finite(entries: DMatrix<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite()));
        Self(entries)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `(d_v, d_k)`
    pub fn dims(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Recall: `X z` for an (already feature-mapped) key `z`.
    pub fn recall(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.0 * z
    }
}

impl AsRef<DMatrix<f64>> for MemoryMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// One streamed sample `(k_{n,t}, v_{n,t})`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyValuePair {
    pub key: DVector<f64>,
    pub value: DVector<f64>,
    pub agent: AgentId,
    pub time: TimeStep,
}

impl KeyValuePair {
    pub fn new(key: DVector<f64>, value: DVector<f64>, agent: AgentId, time: TimeStep) -> Result<Self> {
        if key.iter().chain(value.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite entry in sample of agent {agent} at t={time}"
            )));
        }
        if time == 0 {
            return Err(Error::Data("time steps are 1-based".into()));
        }
        Ok(Self {
            key,
            value,
            agent,
            time,
        })
    }
}

/// Radial projection onto the Frobenius ball of radius `B/2`.
///
/// The ball has diameter `B` and contains the origin.
pub fn project(x: DMatrix<f64>, diameter: f64) -> Result<MemoryMatrix> {
    let mut x = x;
    project_in_place(&mut x, diameter)?;
    Ok(MemoryMatrix(x))
}

pub(crate) fn project_in_place(x: &mut DMatrix<f64>, diameter: f64) -> Result<()> {
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::Config(format!("domain diameter must be positive, got {diameter}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cannot project a matrix with non-finite entries".into()));
    }
    let radius = 0.5 * diameter;
    let norm = x.norm();
    if norm > radius {
        *x *= radius / norm;
        // Rounding can leave the result a few ulps outside the ball.
        while x.norm() > radius {
            *x *= 1.0 - f64::EPSILON;
        }
    }
    Ok(())
}
