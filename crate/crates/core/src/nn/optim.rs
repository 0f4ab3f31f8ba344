use super::layers::LayerParams;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// NAdam moment estimates for a list of layers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: NadamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: NadamConfig, params: &[LayerParams]) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .flat_map(|p| p.tensors())
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One NAdam update of `params` from `grads`.
    pub fn nadam_step(&mut self, params: &mut [LayerParams], grads: &[LayerParams]) {
        self.step += 1;
        let NadamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);

        let params = params.iter_mut().flat_map(|p| p.tensors_mut());
        let grads = grads.iter().flat_map(|g| g.tensors());
        for (((theta, g), m), v) in params
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            debug_assert_eq!(theta.shape(), g.shape());
            for (((th, &g), m), v) in theta
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *th -= lr * (b1 * m_hat + (1.0 - b1) * g / c1) / (v_hat.sqrt() + eps);
            }
        }
    }
}
