//! Hessian of the mean training objective: matrix-free products and a
//! guarded dense form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::backprop::instance_bce_grad;
use crate::grad::scalar::Dual;
use crate::model::{objective, EncodedSet, Layer, TrainedModel, DEFAULT_PARAMETER_LIMIT};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMethod {
    /// Forward-over-reverse: a backward pass over dual numbers.
    Exact,
    /// Central differences of the mean gradient, `h = 1e-3 / (1 + |v|_inf)`.
    FiniteDifference,
}

/// Exact `H v` for the mean objective `(1/n) Σ L(z_i)` (regularizer included).
pub(crate) fn exact_hvp(layers: &[Layer], params: &[f64], set: &EncodedSet, l2: f64, v: &[f64]) -> Vec<f64> {
    let dual: Vec<Dual> = params.iter().zip(v).map(|(&p, &d)| Dual::new(p, d)).collect();
    let mut out = vec![0.0; params.len()];
    for (x, &y) in set.rows.iter().zip(&set.labels) {
        let (_, g) = instance_bce_grad(layers, &dual, x, y);
        for (o, gk) in out.iter_mut().zip(&g) {
            *o += gk.eps;
        }
    }
    let n = set.len() as f64;
    for (o, vk) in out.iter_mut().zip(v) {
        *o = *o / n + l2 * vk;
    }
    out
}

/// Column-major dense Hessian of the mean objective.
pub(crate) fn dense_hessian_rows(layers: &[Layer], params: &[f64], set: &EncodedSet, l2: f64) -> Vec<f64> {
    let p = params.len();
    let mut out = Vec::with_capacity(p * p);
    let mut e = vec![0.0; p];
    for j in 0..p {
        e[j] = 1.0;
        out.extend(exact_hvp(layers, params, set, l2, &e));
        e[j] = 0.0;
    }
    out
}

/// `v ↦ (H + damping·I) v` over a model's training split.
#[derive(Debug, Clone)]
pub struct HessianOperator<'a> {
    model: &'a TrainedModel,
    layers: Vec<Layer>,
    set: EncodedSet,
    pub damping: f64,
    pub method: HessianMethod,
}

impl<'a> HessianOperator<'a> {
    /// Exact products by default.
    pub fn new(model: &'a TrainedModel, ds: &Dataset, damping: f64) -> Result<Self> {
        if !(damping >= 0.0) || !damping.is_finite() {
            return Err(Error::Config("damping must be finite and >= 0".into()));
        }
        let set = EncodedSet::train(&model.encoder, ds)?;
        if set.len() == 0 {
            return Err(Error::Data("training split is empty".into()));
        }
        Ok(HessianOperator {
            model,
            layers: model.layers(),
            set,
            damping,
            method: HessianMethod::Exact,
        })
    }

    pub fn with_method(mut self, method: HessianMethod) -> Self {
        self.method = method;
        self
    }

    pub fn dimension(&self) -> usize {
        self.model.parameter_count()
    }

    pub fn train_size(&self) -> usize {
        self.set.len()
    }

    pub fn model(&self) -> &TrainedModel {
        self.model
    }

    fn mean_gradient(&self, params: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.set.len()).collect();
        objective(&self.layers, params, &self.set, &all, self.model.l2()).1
    }

    /// `(H + damping·I) v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dimension() {
            return Err(Error::Config(format!(
                "vector has length {}, model has {} parameters",
                v.len(),
                self.dimension()
            )));
        }
        let theta = &self.model.parameters.values;
        let mut out = match self.method {
            HessianMethod::Exact => exact_hvp(&self.layers, theta, &self.set, self.model.l2(), v),
            HessianMethod::FiniteDifference => {
                let h = 1e-3 / (1.0 + util::norm_inf(v));
                let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + h * d).collect();
                let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - h * d).collect();
                let gp = self.mean_gradient(&plus);
                let gm = self.mean_gradient(&minus);
                gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            }
        };
        for (o, vk) in out.iter_mut().zip(v) {
            *o += self.damping * vk;
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("Hessian-vector product is not finite".into()));
        }
        Ok(out)
    }
}

pub fn hvp(op: &HessianOperator<'_>, v: &[f64]) -> Result<Vec<f64>> {
    op.apply(v)
}

/// Dense undamped Hessian of the mean training objective, guarded at
/// [`DEFAULT_PARAMETER_LIMIT`] parameters.
pub fn exact_hessian(m: &TrainedModel, ds: &Dataset) -> Result<DMatrix<f64>> {
    exact_hessian_with_limit(m, ds, DEFAULT_PARAMETER_LIMIT)
}

pub fn exact_hessian_with_limit(m: &TrainedModel, ds: &Dataset, limit: usize) -> Result<DMatrix<f64>> {
    let p = m.parameter_count();
    if p > limit {
        return Err(Error::HessianGuard { count: p, limit });
    }
    let set = EncodedSet::train(&m.encoder, ds)?;
    if set.len() == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let cols = dense_hessian_rows(&m.layers(), &m.parameters.values, &set, m.l2());
    let h = DMatrix::from_vec(p, p, cols);
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("Hessian is not finite".into()));
    }
    Ok(h)
}
