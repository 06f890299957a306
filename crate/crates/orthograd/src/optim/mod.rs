//! Gradient transforms and first-order optimisers, composed so any
//! transform can precede any optimiser: the transform replaces a layer's
//! component-matrix gradient before the step.

mod driver;
mod steps;

pub use driver::{Optimizer, OptimizerKind, StepTimings};
pub use steps::{adam_step, lars_step, sgdm_step, AdamState, SgdmState};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::linalg::{self, Matrix};

#[derive(Debug)]
pub enum OptimError {
    InvalidHyperParam { name: &'static str, value: f64 },
    NonFiniteUpdate { param: String },
    Linalg { param: String, source: linalg::LinalgError },
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimError::InvalidHyperParam { name, value } => {
                write!(f, "invalid hyper-parameter {name} = {value}")
            }
            OptimError::NonFiniteUpdate { param } => {
                write!(f, "non-finite update for parameter '{param}'")
            }
            OptimError::Linalg { param, source } => {
                write!(f, "gradient transform failed for '{param}': {source}")
            }
        }
    }
}

impl std::error::Error for OptimError {}

/// Validated optimiser hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lars_trust: f64,
}

impl HyperParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        lars_trust: f64,
    ) -> Result<Self, OptimError> {
        let hp = Self {
            lr,
            momentum,
            weight_decay,
            beta1,
            beta2,
            eps,
            lars_trust,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let checks: [(&'static str, f64, bool); 7] = [
            ("lr", self.lr, self.lr > 0.0),
            ("momentum", self.momentum, (0.0..1.0).contains(&self.momentum)),
            ("weight_decay", self.weight_decay, self.weight_decay >= 0.0),
            ("beta1", self.beta1, (0.0..1.0).contains(&self.beta1)),
            ("beta2", self.beta2, (0.0..1.0).contains(&self.beta2)),
            ("eps", self.eps, self.eps > 0.0),
            ("lars_trust", self.lars_trust, self.lars_trust > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(OptimError::InvalidHyperParam { name, value });
            }
        }
        Ok(())
    }
}

impl Default for HyperParams {
    /// The protocol defaults: lr 1e-2, momentum 0.9, weight decay 5e-4,
    /// Adam betas (0.9, 0.99), eps 1e-8, LARS trust 1e-3.
    fn default() -> Self {
        Self {
            lr: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            lars_trust: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Orthogonalise,
    NormaliseLayer,
    NormaliseColumns,
}

impl TransformKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Self::Identity),
            "orth" | "orthogonalise" => Some(Self::Orthogonalise),
            "norm" | "normalise_layer" => Some(Self::NormaliseLayer),
            "colnorm" | "normalise_columns" => Some(Self::NormaliseColumns),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Orthogonalise => "orth",
            Self::NormaliseLayer => "norm",
            Self::NormaliseColumns => "colnorm",
        }
    }
}

/// A named, pure, shape-preserving mapping applied to each eligible
/// layer's component-matrix gradient before the optimiser step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradTransform {
    pub kind: TransformKind,
    /// Leave dense-layer gradients untouched (orthogonalise only the
    /// convolutional filters).
    pub skip_dense: bool,
}

impl GradTransform {
    pub fn identity() -> Self {
        Self {
            kind: TransformKind::Identity,
            skip_dense: false,
        }
    }

    pub fn new(kind: TransformKind, skip_dense: bool) -> Self {
        Self { kind, skip_dense }
    }

    /// Apply to one gradient matrix. All-zero input passes through
    /// unchanged for every kind; dead layers must not fail the step.
    pub fn apply(&self, g: &Matrix, is_dense_layer: bool) -> Result<Matrix, linalg::LinalgError> {
        if self.skip_dense && is_dense_layer {
            return Ok(g.clone());
        }
        match self.kind {
            TransformKind::Identity => Ok(g.clone()),
            _ if linalg::frobenius_norm(g) == 0.0 => Ok(g.clone()),
            TransformKind::Orthogonalise => linalg::nearest_orthonormal(g),
            TransformKind::NormaliseLayer => Ok(g.scaled(1.0 / linalg::frobenius_norm(g))),
            TransformKind::NormaliseColumns => Ok(linalg::normalise_columns(g)),
        }
    }
}
