//! Adam with bias correction over the trainable entries of a parameter
//! store.

use crate::tensor::ParamStore;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moment estimates, indexed like the store.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let m = store
            .ids()
            .map(|id| {
                if store.is_trainable(id) {
                    vec![0.0; store.value(id).len()]
                } else {
                    Vec::new()
                }
            })
            .collect::<Vec<_>>();
        AdamState {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update from the gradients currently held in the store.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for id in store.trainable_ids() {
        let ix = id.index();
        let n = store.value(id).len();
        for k in 0..n {
            let g = store.grad(id)[k];
            let m = &mut state.m[ix][k];
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            let v = &mut state.v[ix][k];
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            store.value_mut(id)[k] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}
