use super::param::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Gradients are zeroed afterwards.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    for p in store.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let value = p.value.data_mut();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        for (i, g) in p.grad.data().iter().enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.zero_grad();
    }
}
