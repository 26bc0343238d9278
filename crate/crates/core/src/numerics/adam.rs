use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.first.len()
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Non-finite gradients leave both parameters and state untouched.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], rate: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::config(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::config(format!("adam: invalid rate {rate}")));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient at parameter {i}")));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form: returns updated copies of the parameters and state.
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    rate: f64,
) -> Result<(Vec<f64>, AdamState)> {
    let mut p = params.to_vec();
    let mut s = state.clone();
    s.update(&mut p, grads, rate)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_rate_against_gradient_sign() {
        for &g in &[3.7, -0.02, 1e-3] {
            let state = AdamState::new(1, AdamConfig::default());
            let (p, s) = adam_step(&[1.0], &[g], &state, 0.01).unwrap();
            // m_hat = g, v_hat = g^2, step = r * g / (|g| + eps)
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!(((1.0 - p[0]).abs() - 0.01).abs() < 2e-7);
            assert_eq!(s.step, 1);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let state = AdamState::new(3, AdamConfig::default());
        let (p, s) = adam_step(&[1.0, -2.0, 0.5], &[0.0; 3], &state, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn second_identical_step_has_rate_magnitude() {
        let g = 0.7;
        let r = 0.001;
        let state = AdamState::new(1, AdamConfig::default());
        let (p1, s1) = adam_step(&[0.0], &[g], &state, r).unwrap();
        let (p2, s2) = adam_step(&p1, &[g], &s1, r).unwrap();
        // m_hat = g and v_hat = g^2 after bias correction for constant gradients
        assert!(((p1[0] - p2[0]) - r).abs() < 1e-10);
        assert_eq!(s2.step, 2);
    }

    #[test]
    fn rejects_nonfinite_and_mismatched() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            s.update(&mut p, &[f64::NAN, 0.0], 0.1),
            Err(Error::Training(_))
        ));
        assert_eq!(s.step, 0);
        assert!(s.update(&mut p, &[0.0], 0.1).is_err());
    }
}
