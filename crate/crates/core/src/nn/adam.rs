use super::MlpParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Adam moment estimates for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: MlpParams,
    second: MlpParams,
    step_count: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn second_moment(&self) -> &MlpParams {
        &self.second
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::Shape(
                "gradient or optimizer state shape does not match parameters".into(),
            ));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (((p, &g), m), v) in params
            .values_mut()
            .zip(grads.values())
            .zip(self.first.values_mut())
            .zip(self.second.values_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer, MlpSpec};

    fn scalar(w: f64) -> MlpParams {
        let spec = MlpSpec::new(1, &[], 1, Activation::Linear, 0.0).unwrap();
        MlpParams::from_layers(
            spec,
            vec![Layer {
                weights: vec![w],
                biases: vec![0.0],
            }],
        )
        .unwrap()
    }

    fn weight(p: &MlpParams) -> f64 {
        p.layers()[0].weights[0]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.5);
        let mut g = p.zeros_like();
        g.layers_mut()[0].weights[0] = 2.0;
        let mut state = AdamState::new(&p, AdamConfig::default());
        state.step(&mut p, &g).unwrap();
        let delta = weight(&p) - 0.5;
        assert!(delta < 0.0);
        assert!((delta.abs() - 0.001).abs() < 1e-9, "delta {delta}");
        assert_eq!(state.step_count(), 1);
        // bias stays because its gradient is zero
        assert_eq!(p.layers()[0].biases[0], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.5);
        let g = p.zeros_like();
        let mut state = AdamState::new(&p, AdamConfig::default());
        state.step(&mut p, &g).unwrap();
        assert_eq!(weight(&p), 0.5);
    }

    #[test]
    fn quadratic_descends() {
        // Reference scalar recursion for f(w) = w^2.
        let (mut m, mut v, mut w_ref) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=100 {
            let g = 2.0 * w_ref;
            m = 0.9 * m + (1.0 - 0.9) * g;
            v = 0.999 * v + (1.0 - 0.999) * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w_ref -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }

        let mut p = scalar(1.0);
        let mut state = AdamState::new(
            &p,
            AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
        );
        for _ in 0..100 {
            let mut g = p.zeros_like();
            g.layers_mut()[0].weights[0] = 2.0 * weight(&p);
            state.step(&mut p, &g).unwrap();
        }
        assert!(weight(&p).abs() < 1.0);
        assert_eq!(weight(&p), w_ref);
        assert!(state.second_moment().values().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(1.0);
        let spec = MlpSpec::new(2, &[], 1, Activation::Linear, 0.0).unwrap();
        let other = MlpParams::zeros(spec).unwrap();
        let mut state = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(state.step(&mut p, &other), Err(Error::Shape(_))));
    }
}
