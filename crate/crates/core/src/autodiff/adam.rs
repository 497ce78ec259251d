use super::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        AdamState { config, step: 0, first: zeros.clone(), second: zeros }
    }
}

/// One bias-corrected Adam update; gradients are cleared afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, m), v) in store.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let grads = p.grad.data();
        let values = p.value.data_mut();
        for (((w, &g), m), v) in values.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    store.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(value)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut s = single(1.0);
            let mut st = AdamState::new(&s, AdamConfig::default());
            s.iter_mut().next().unwrap().grad = Tensor::scalar(g);
            adam_step(&mut s, &mut st, 0.01);
            let moved = s.iter().next().unwrap().1.value.data()[0] - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-7, "g={g} moved={moved}");
            assert_eq!(s.flat_grads(), vec![0.0]);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = single(2.5);
        let mut st = AdamState::new(&s, AdamConfig::default());
        adam_step(&mut s, &mut st, 0.1);
        assert_eq!(s.iter().next().unwrap().1.value.data()[0], 2.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn minimizes_square() {
        let mut s = single(1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        for _ in 0..100 {
            let w = s.iter().next().unwrap().1.value.data()[0];
            s.iter_mut().next().unwrap().grad = Tensor::scalar(2.0 * w);
            adam_step(&mut s, &mut st, 0.1);
        }
        let w = s.iter().next().unwrap().1.value.data()[0];
        assert!(w.abs() < 0.1, "w = {w}");
    }
}
