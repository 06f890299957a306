//! Composition of transform and optimiser across a model's parameters.
//!
//! Eligible parameters (rank ≥ 2, so a component matrix exists) have their
//! gradient reshaped to P×N, transformed, reshaped back, and stepped;
//! rank-1 tensors (biases, batch-norm scale/shift) are stepped with the
//! raw gradient. Transforms run in parallel across parameters; parameter
//! writes happen in declaration order.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::steps::{adam_step, lars_step, sgdm_step, AdamState, SgdmState};
use super::{GradTransform, HyperParams, OptimError, TransformKind};
use crate::linalg::Matrix;
use crate::nn::ParamTensor;
use crate::parallel;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgdm,
    Adam,
    Lars,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgdm" | "sgd" => Some(Self::Sgdm),
            "adam" => Some(Self::Adam),
            "lars" => Some(Self::Lars),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Sgdm => "sgdm",
            Self::Adam => "adam",
            Self::Lars => "lars",
        }
    }
}

#[derive(Debug, Clone)]
enum ParamState<T> {
    Sgdm(SgdmState<T>),
    Adam(AdamState<T>),
}

/// Wall time spent inside the decomposition during one step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepTimings {
    pub svd_time: Duration,
}

/// A first-order optimiser with a gradient transform in front of it.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    hp: HyperParams,
    transform: GradTransform,
    /// Apply weight decay to the gradient before the transform instead of
    /// after (the default transforms the raw loss gradient first).
    decay_before_transform: bool,
    states: Vec<ParamState<T>>,
    svd_time_total: Duration,
}

impl<T: Real> Optimizer<T> {
    pub fn new(
        kind: OptimizerKind,
        hp: HyperParams,
        transform: GradTransform,
        params: &[ParamTensor<T>],
    ) -> Result<Self, OptimError> {
        hp.validate()?;
        let states = params
            .iter()
            .map(|p| match kind {
                OptimizerKind::Sgdm | OptimizerKind::Lars => {
                    ParamState::Sgdm(SgdmState::zeros(p.data.shape()))
                }
                OptimizerKind::Adam => ParamState::Adam(AdamState::zeros(p.data.shape())),
            })
            .collect();
        Ok(Self {
            kind,
            hp,
            transform,
            decay_before_transform: false,
            states,
            svd_time_total: Duration::ZERO,
        })
    }

    pub fn with_decay_before_transform(mut self, enabled: bool) -> Self {
        self.decay_before_transform = enabled;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn transform(&self) -> GradTransform {
        self.transform
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    /// Cumulative wall time spent in the decomposition since construction.
    pub fn svd_time_total(&self) -> Duration {
        self.svd_time_total
    }

    /// Transform every eligible gradient, then step every parameter in
    /// declaration order.
    pub fn step(&mut self, params: &mut [ParamTensor<T>]) -> Result<StepTimings, OptimError> {
        assert_eq!(params.len(), self.states.len(), "one state per parameter");

        let decay_first = self.decay_before_transform && self.hp.weight_decay > 0.0;
        if decay_first {
            for p in params.iter_mut() {
                if p.reshape.is_some() {
                    let lambda = T::from_f64(self.hp.weight_decay);
                    let theta = p.data.data().to_vec();
                    for (g, t) in p.grad.data_mut().iter_mut().zip(theta) {
                        *g += lambda * t;
                    }
                }
            }
        }

        // Transform component matrices in parallel; results land in
        // parameter order.
        let transform = self.transform;
        let timed = transform.kind == TransformKind::Orthogonalise;
        type Transformed = Option<(Matrix, Duration)>;
        let results: Vec<Result<Transformed, OptimError>> =
            parallel::map_indexed(params.len(), |i| {
                let p = &params[i];
                if p.reshape.is_none() {
                    return Ok(None);
                }
                let g = p.grad_component_matrix().expect("eligible parameter");
                let started = Instant::now();
                let out = transform.apply(&g, p.is_dense).map_err(|source| {
                    OptimError::Linalg {
                        param: p.name.clone(),
                        source,
                    }
                })?;
                let elapsed = if timed && !(transform.skip_dense && p.is_dense) {
                    started.elapsed()
                } else {
                    Duration::ZERO
                };
                Ok(Some((out, elapsed)))
            });

        let mut timings = StepTimings::default();
        for (i, result) in results.into_iter().enumerate() {
            if let Some((matrix, elapsed)) = result? {
                params[i].set_grad_from_component_matrix(&matrix);
                timings.svd_time += elapsed;
            }
        }
        self.svd_time_total += timings.svd_time;

        for (p, state) in params.iter_mut().zip(&mut self.states) {
            // Decay already folded into eligible gradients when the switch
            // is on; rank-1 tensors always decay inside the step.
            let decay = if decay_first && p.reshape.is_some() {
                0.0
            } else {
                self.hp.weight_decay
            };
            step_one(self.kind, &self.hp, p, state, decay)?;
        }
        Ok(timings)
    }

    /// The untransformed baseline: step every parameter with its raw
    /// gradient, no component-matrix machinery at all.
    pub fn step_raw(&mut self, params: &mut [ParamTensor<T>]) -> Result<(), OptimError> {
        assert_eq!(params.len(), self.states.len(), "one state per parameter");
        for (p, state) in params.iter_mut().zip(&mut self.states) {
            step_one(self.kind, &self.hp, p, state, self.hp.weight_decay)?;
        }
        Ok(())
    }
}

fn step_one<T: Real>(
    kind: OptimizerKind,
    hp: &HyperParams,
    p: &mut ParamTensor<T>,
    state: &mut ParamState<T>,
    weight_decay: f64,
) -> Result<(), OptimError> {
    let theta = p.data.data_mut();
    let grad = p.grad.data();
    match (kind, state) {
        (OptimizerKind::Sgdm, ParamState::Sgdm(s)) => {
            sgdm_step(theta, grad, s, hp, weight_decay, &p.name)
        }
        (OptimizerKind::Lars, ParamState::Sgdm(s)) => {
            lars_step(theta, grad, s, hp, weight_decay, &p.name)
        }
        (OptimizerKind::Adam, ParamState::Adam(s)) => {
            adam_step(theta, grad, s, hp, weight_decay, &p.name)
        }
        _ => unreachable!("state kind matches optimiser kind by construction"),
    }
}
