//! AdamW: Adam with bias correction and decoupled weight decay.

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    /// Betas `(0.9, 0.999)`, `eps = 1e-8`.
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - self.lr * self.weight_decay;
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] = theta[i] * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_without_decay_is_identity() {
        let mut opt = AdamW::new(3, 2e-4, 0.0);
        let mut theta = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            opt.step(&mut theta, &[0.0; 3]);
        }
        assert_eq!(theta, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.steps(), 5);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let lr = 2e-4;
        let mut opt = AdamW::new(4, lr, 0.0);
        let mut theta = vec![0.0; 4];
        opt.step(&mut theta, &[3.0, -0.01, 250.0, -7.0]);
        // m_hat = g, v_hat = g^2, so the step is -lr g / (|g| + eps)
        for (t, g) in theta.iter().zip([3.0f64, -0.01, 250.0, -7.0]) {
            assert!((t + lr * g.signum()).abs() < lr * 1e-5, "{t}");
        }
    }

    #[test]
    fn decoupled_decay_shrinks_weights() {
        let mut opt = AdamW::new(1, 0.1, 0.5);
        let mut theta = vec![2.0];
        opt.step(&mut theta, &[0.0]);
        assert!((theta[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_trajectories() {
        let (mut a, mut b) = (AdamW::new(2, 1e-3, 1e-4), AdamW::new(2, 1e-3, 1e-4));
        let (mut ta, mut tb) = (vec![0.3, -0.2], vec![0.3, -0.2]);
        for k in 0..50 {
            let g = [(k as f64).sin(), (k as f64 * 0.7).cos()];
            a.step(&mut ta, &g);
            b.step(&mut tb, &g);
        }
        assert_eq!(ta, tb);
        assert_eq!(a, b);
    }
}
