//! Adam optimizer with bias correction.

use super::{ParamStore, Parameter, Tensor};

/// Per-parameter Adam moments and hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(shape: Vec<usize>, learning_rate: f64) -> Self {
        AdamState {
            first_moment: Tensor::zeros(shape.clone()),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate,
        }
    }
}

/// One bias-corrected Adam step, in place. The parameter's gradient is left
/// untouched; callers zero it when they want a fresh accumulation window.
pub fn adam_update(param: &mut Parameter, state: &mut AdamState) {
    assert_eq!(
        state.first_moment.shape(),
        param.value.shape(),
        "adam state shape mismatch for {}",
        param.name
    );
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    let g = param.grad.data();
    let x = param.value.data_mut();
    for i in 0..x.len() {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        x[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
    }
}

/// Adam over every parameter of one store.
#[derive(Clone, Debug)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let states = store
            .iter()
            .map(|p| AdamState::new(p.value.shape().to_vec(), learning_rate))
            .collect();
        Adam { states }
    }

    /// Applies one Adam step to every parameter from its accumulated
    /// gradient, then zeroes the gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        for (param, state) in store.iter_mut().zip(self.states.iter_mut()) {
            adam_update(param, state);
        }
        store.zero_grad();
    }
}
