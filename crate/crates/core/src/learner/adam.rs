//! Bias-corrected Adam.

use super::{LearnerError, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(param_len: usize) -> OptimizerState {
        OptimizerState {
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.998,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
        }
    }

    pub fn with_lr(param_len: usize, lr: f64) -> OptimizerState {
        OptimizerState { lr, ..OptimizerState::new(param_len) }
    }
}

/// One Adam update; returns the new parameters and advanced state.
pub fn adam_step(
    params: &ParamVector,
    grad: &ParamVector,
    opt: &OptimizerState,
) -> Result<(ParamVector, OptimizerState), LearnerError> {
    let mut new_params = params.clone();
    let mut new_opt = opt.clone();
    adam_step_in_place(&mut new_params, grad, &mut new_opt)?;
    Ok((new_params, new_opt))
}

pub(crate) fn adam_step_in_place(
    params: &mut ParamVector,
    grad: &ParamVector,
    opt: &mut OptimizerState,
) -> Result<(), LearnerError> {
    if params.len() != grad.len() || params.len() != opt.first_moment.len() {
        return Err(LearnerError::LengthMismatch(params.len(), grad.len()));
    }
    if !params.same_layout(grad) {
        return Err(LearnerError::LayoutMismatch);
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bias1 = 1.0 - opt.beta1.powi(t);
    let bias2 = 1.0 - opt.beta2.powi(t);
    let p = params.values_mut();
    let g = grad.values();
    for i in 0..p.len() {
        let gi = g[i];
        opt.first_moment[i] = opt.beta1 * opt.first_moment[i] + (1.0 - opt.beta1) * gi;
        opt.second_moment[i] = opt.beta2 * opt.second_moment[i] + (1.0 - opt.beta2) * gi * gi;
        let m_hat = opt.first_moment[i] / bias1;
        let v_hat = opt.second_moment[i] / bias2;
        p[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.epsilon);
    }
    Ok(())
}
