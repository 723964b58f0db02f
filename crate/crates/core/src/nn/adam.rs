use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates. Moment buffers are created on
/// the first update and mirror the parameter list order thereafter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: Vec<&mut Matrix>, grads: Vec<&Matrix>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(|g| g.zeros_like()).collect();
            self.second_moment = self.first_moment.clone();
        }
        assert_eq!(self.first_moment.len(), params.len(), "parameter list changed");
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            assert_eq!(p.shape(), m.shape(), "moment shape mismatch");
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / correction1;
                let v_hat = *vv / correction2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: Vec<&mut Matrix>, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads {
            g.scale(k);
        }
    }
    norm
}
