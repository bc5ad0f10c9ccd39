use nalgebra::DMatrix;

use super::graph::PhysicalGraph;
use crate::am::AgentId;
use crate::error::{Error, Result};

pub const ROW_SUM_TOL: f64 = 1e-9;

/// Row-stochastic logical weight matrix `W`. The support `W_n` is always
/// derived from the stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalWeights {
    w: DMatrix<f64>,
}

impl LogicalWeights {
    pub fn identity(n: usize) -> Self {
        Self { w: DMatrix::identity(n, n) }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            w: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n_agents(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, n: AgentId, m: AgentId) -> f64 {
        self.w[(n, m)]
    }

    pub fn row(&self, n: AgentId) -> Vec<f64> {
        self.w.row(n).iter().copied().collect()
    }

    /// `W_n = {m : w_nm > 0}` in ascending order.
    pub fn support(&self, n: AgentId) -> Vec<AgentId> {
        (0..self.w.ncols()).filter(|&m| self.w[(n, m)] > 0.0).collect()
    }

    /// `W_n \ {n}`.
    pub fn remote_support(&self, n: AgentId) -> Vec<AgentId> {
        self.support(n).into_iter().filter(|&m| m != n).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_agents()).map(|n| self.row(n)).collect()
    }
}

/// Accepts a square, nonnegative, row-stochastic matrix. Rows that are off by
/// at most the tolerance are renormalised.
pub fn validate_weights(w: &DMatrix<f64>, n_agents: Option<usize>) -> Result<LogicalWeights> {
    if w.nrows() != w.ncols() {
        return Err(Error::Validation(format!(
            "weight matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if let Some(n) = n_agents {
        if w.nrows() != n {
            return Err(Error::Validation(format!(
                "weight matrix has {} rows but the graph has {n} nodes",
                w.nrows()
            )));
        }
    }
    let mut out = w.clone();
    for (n, mut row) in out.row_iter_mut().enumerate() {
        if let Some(m) = row.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Validation(format!(
                "w[{n},{m}] = {} is not a nonnegative number",
                row[m]
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!("row {n} sums to {sum}, not 1")));
        }
        row /= sum;
    }
    if out.iter().any(|&x| x > 1.0) {
        return Err(Error::Validation("weight entries must lie in [0,1]".into()));
    }
    Ok(LogicalWeights { w: out })
}

pub fn weights_from_rows(rows: &[Vec<f64>], n_agents: Option<usize>) -> Result<LogicalWeights> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Validation("weight rows must all have length N".into()));
    }
    validate_weights(&DMatrix::from_fn(n, n, |i, j| rows[i][j]), n_agents)
}

/// Metropolis–Hastings mixing matrix on the graph's edges.
pub fn metropolis_mixing(g: &PhysicalGraph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let mut a = DMatrix::zeros(n, n);
    for e in g.edges() {
        let w = 1.0 / (1.0 + g.degree(e.a).max(g.degree(e.b)) as f64);
        a[(e.a, e.b)] = w;
        a[(e.b, e.a)] = w;
    }
    for i in 0..n {
        let off: f64 = a.row(i).iter().sum();
        a[(i, i)] = 1.0 - off;
    }
    a
}

/// Checks that `A` is nonnegative and doubly stochastic within the tolerance.
pub fn check_doubly_stochastic(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Config("mixing matrix must be square".into()));
    }
    if a.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Config("mixing matrix has a negative or non-finite entry".into()));
    }
    for i in 0..a.nrows() {
        let r: f64 = a.row(i).iter().sum();
        let c: f64 = a.column(i).iter().sum();
        if (r - 1.0).abs() > ROW_SUM_TOL || (c - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Config(format!(
                "mixing matrix row/column {i} sums to {r}/{c}, not 1"
            )));
        }
    }
    Ok(())
}

/// Second-largest singular value of `A`, i.e. `‖A − 11ᵀ/N‖₂` for a doubly
/// stochastic `A`.
pub fn mixing_alpha(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n <= 1 {
        return 0.0;
    }
    let centered = a - DMatrix::from_element(n, n, 1.0 / n as f64);
    centered.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_uniform_supports() {
        let w = validate_weights(&DMatrix::identity(4, 4), Some(4)).unwrap();
        for n in 0..4 {
            assert_eq!(w.support(n), vec![n]);
        }
        let w = validate_weights(&DMatrix::from_element(3, 3, 1.0 / 3.0), None).unwrap();
        assert_eq!(w.support(1), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = 0.5;
        assert!(matches!(validate_weights(&m, None), Err(Error::Validation(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.0, 1.0]);
        assert!(validate_weights(&m, None).is_err());
        assert!(validate_weights(&DMatrix::identity(2, 2), Some(3)).is_err());
    }

    #[test]
    fn renormalises_tiny_deviation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5 + 5e-10, 0.0, 1.0]);
        let w = validate_weights(&m, None).unwrap();
        assert!((w.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metropolis_is_doubly_stochastic() {
        let g = PhysicalGraph::erdos_renyi(9, 0.4, 2).unwrap();
        let a = metropolis_mixing(&g);
        check_doubly_stochastic(&a).unwrap();
        assert!(a == a.transpose());
        let alpha = mixing_alpha(&a);
        assert!((0.0..1.0).contains(&alpha));
    }

    #[test]
    fn alpha_of_averaging_is_zero() {
        assert!(mixing_alpha(&DMatrix::from_element(4, 4, 0.25)) < 1e-12);
        assert!((mixing_alpha(&DMatrix::identity(4, 4)) - 1.0).abs() < 1e-12);
    }
}
