use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(numel: usize) -> Self {
        AdamState {
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` from its accumulated gradient.
/// A parameter without a gradient buffer is left untouched.
pub fn adam_step(param: &mut Tensor, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let Some(grad) = param.grad.as_ref() else {
        return Ok(());
    };
    if state.m.len() != param.data.len() || state.v.len() != param.data.len() {
        return Err(AutodiffError::shape(
            "adam_step",
            &param.shape,
            &[state.m.len()],
        ));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(AutodiffError::NonFinite { op: "adam_step" });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..param.data.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        param.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// L2 norm of all gradients taken together as one flat vector.
pub fn global_grad_norm<'t>(params: impl IntoIterator<Item = &'t Tensor>) -> f64 {
    params
        .into_iter()
        .filter_map(|p| p.grad.as_ref())
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the factor applied (1 when no clipping happened).
pub fn clip_grad_norm(params: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = global_grad_norm(params.iter().map(|p| &**p));
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for p in params.iter_mut() {
        if let Some(g) = p.grad.as_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 3.0])
            .unwrap()
            .with_grad();
        p.grad = Some(vec![0.0; 3]);
        let mut st = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.data, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap().with_grad();
        p.grad = Some(vec![0.5, -3.0]);
        let mut st = AdamState::new(2);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &mut st, &cfg).unwrap();
        assert!((p.data[0] + cfg.lr).abs() < 1e-9);
        assert!((p.data[1] - cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn clip_is_noop_under_threshold() {
        let mut a = Tensor::new(vec![2], vec![0.0; 2]).unwrap().with_grad();
        a.grad = Some(vec![0.3, 0.4]);
        let s = clip_grad_norm(&mut [&mut a], 1.0);
        assert_eq!(s, 1.0);
        assert_eq!(a.grad.unwrap(), vec![0.3, 0.4]);
    }
}
