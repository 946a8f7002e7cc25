//! Inverse Hessian-vector products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::HessianOperator;
use crate::model::DEFAULT_PARAMETER_LIMIT;
use crate::util;

/// A symmetric linear map `v ↦ A v`.
pub trait LinearOperator {
    fn dimension(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for HessianOperator<'_> {
    fn dimension(&self) -> usize {
        HessianOperator::dimension(self)
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        HessianOperator::apply(self, v)
    }
}

/// An explicit matrix, mostly for tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dimension(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.0 * DVector::from_column_slice(v)).as_slice().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IhvpMethod {
    /// Dense solve of the materialized damped Hessian.
    Exact,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhvpConfig {
    pub method: IhvpMethod,
    pub damping: f64,
    /// Relative residual `|b - A u| / |b|` at which CG stops.
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for IhvpConfig {
    fn default() -> Self {
        IhvpConfig {
            method: IhvpMethod::ConjugateGradient,
            damping: 0.01,
            cg_tolerance: 1e-6,
            cg_max_iterations: 1000,
        }
    }
}

impl IhvpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(Error::Config("damping must be finite and >= 0".into()));
        }
        if !(self.cg_tolerance > 0.0) {
            return Err(Error::Config("CG tolerance must be > 0".into()));
        }
        if self.cg_max_iterations == 0 {
            return Err(Error::Config("CG max iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradient for `A u = b`, starting from zero.
pub fn conjugate_gradient(
    op: &dyn LinearOperator,
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<CgOutcome> {
    if b.len() != op.dimension() {
        return Err(Error::Config(format!(
            "right-hand side has length {}, operator dimension is {}",
            b.len(),
            op.dimension()
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("CG right-hand side is not finite".into()));
    }
    let b_norm = util::norm2(b);
    let mut u = vec![0.0; b.len()];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: u,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = util::dot(&r, &r);
    let mut residual = 1.0;
    for it in 1..=max_iterations {
        let ap = op.apply(&p)?;
        let pap = util::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "CG met non-positive curvature ({pap:.3e}) at iteration {it}; the damped Hessian is not positive definite, raise the damping or use the exact method"
            )));
        }
        let alpha = rr / pap;
        for k in 0..u.len() {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_next = util::dot(&r, &r);
        residual = rr_next.sqrt() / b_norm;
        if residual <= tolerance {
            return Ok(CgOutcome {
                solution: u,
                iterations: it,
                relative_residual: residual,
            });
        }
        let beta = rr_next / rr;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_next;
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Materializes the operator column by column.
pub fn dense_matrix(op: &dyn LinearOperator) -> Result<DMatrix<f64>> {
    let p = op.dimension();
    if p > DEFAULT_PARAMETER_LIMIT {
        return Err(Error::HessianGuard {
            count: p,
            limit: DEFAULT_PARAMETER_LIMIT,
        });
    }
    let mut cols = Vec::with_capacity(p * p);
    let mut e = vec![0.0; p];
    for j in 0..p {
        e[j] = 1.0;
        cols.extend(op.apply(&e)?);
        e[j] = 0.0;
    }
    let mut a = DMatrix::from_vec(p, p, cols);
    // Symmetrize away rounding asymmetry.
    let at = a.transpose();
    a = (a + at) * 0.5;
    Ok(a)
}

/// Dense solve: Cholesky when positive definite, LU otherwise.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&rhs).as_slice().to_vec());
    }
    a.clone()
        .lu()
        .solve(&rhs)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::Numerical("damped Hessian is singular".into()))
}

/// Solves `A u = v` with the configured method.
pub fn solve_with(op: &dyn LinearOperator, v: &[f64], cfg: &IhvpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let u = match cfg.method {
        IhvpMethod::Exact => dense_solve(&dense_matrix(op)?, v)?,
        IhvpMethod::ConjugateGradient => {
            conjugate_gradient(op, v, cfg.cg_tolerance, cfg.cg_max_iterations)?.solution
        }
    };
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("inverse-HVP result is not finite".into()));
    }
    Ok(u)
}
