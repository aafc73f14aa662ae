use crate::nn::model::Parameter;
use crate::nn::tensor::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update at step `t >= 1`; gradients are zeroed afterwards.
pub fn adam_step<T: Scalar>(params: &mut [Parameter<T>], lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64) {
    assert!(t >= 1, "Adam step counter starts at 1");
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
    let (lr_t, c1_t, c2_t, eps_t) = (T::from_f64(lr), T::from_f64(c1), T::from_f64(c2), T::from_f64(eps));
    for p in params.iter_mut() {
        let Parameter { value, grad, m, v, .. } = p;
        for (((w, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / c1_t;
            let v_hat = *v / c2_t;
            *w = *w - lr_t * m_hat / (v_hat.sqrt() + eps_t);
        }
        p.zero_grad();
        p.touch();
    }
}

/// Adam with default moment coefficients and an internal step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<T: Scalar>(&mut self, params: &mut [Parameter<T>]) {
        self.t += 1;
        adam_step(params, self.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, self.t);
    }
}

/// Reduce-on-plateau schedule: after `patience` epochs without an improvement
/// of at least `threshold`, multiply the rate by `factor` (floored at `min_lr`).
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    num_bad: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self::new(0.5, 5, 1e-6)
    }
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Self {
        Self { factor, patience, min_lr, threshold: 1e-6, best: f64::INFINITY, num_bad: 0 }
    }

    pub fn step(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.num_bad = 0;
            return lr;
        }
        self.num_bad += 1;
        if self.num_bad >= self.patience {
            self.num_bad = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

/// Replays the plateau schedule over `history` starting from `initial_lr`.
pub fn lr_on_plateau(history: &[f64], initial_lr: f64, factor: f64, patience: usize, min_lr: f64) -> f64 {
    let mut s = PlateauScheduler::new(factor, patience, min_lr);
    history.iter().fold(initial_lr, |lr, &l| s.step(l, lr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn param(value: f64, grad: f64) -> Parameter<f64> {
        let mut p = Parameter::new("p".into(), Tensor::from_f64(vec![1], &[value]).unwrap());
        p.grad.data_mut()[0] = grad;
        p
    }

    #[test]
    fn adam_single_steps() {
        let mut ps = vec![param(0.3, 0.0)];
        adam_step(&mut ps, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 1);
        assert_eq!(ps[0].value.data()[0], 0.3);

        let mut ps = vec![param(0.0, 1.0)];
        adam_step(&mut ps, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 1);
        // m_hat = v_hat = 1 after bias correction
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((ps[0].value.data()[0] - want).abs() < 1e-15);
        assert_eq!(ps[0].grad.data()[0], 0.0);
        assert_eq!(ps[0].version(), 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut ps = vec![param(1.0, 0.0)];
            let mut opt = Adam::new(1e-2);
            for k in 0..50 {
                ps[0].grad.data_mut()[0] = ((k * 7) % 5) as f64 - 2.0 + ps[0].value.data()[0];
                opt.step(&mut ps);
            }
            ps[0].value.data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn plateau_rules() {
        let dec: Vec<f64> = (0..30).map(|k| 1.0 / (k + 1) as f64).collect();
        assert_eq!(lr_on_plateau(&dec, 1e-3, 0.5, 5, 1e-6), 1e-3);
        assert_eq!(lr_on_plateau(&[0.5; 6], 1e-3, 0.5, 5, 1e-6), 5e-4);
        assert_eq!(lr_on_plateau(&[0.5; 5], 1e-3, 0.5, 5, 1e-6), 1e-3);
        assert_eq!(lr_on_plateau(&[0.5; 400], 1e-3, 0.5, 5, 1e-6), 1e-6);
        let mut s = PlateauScheduler::default();
        let mut lr = 1.0;
        for l in [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9] {
            lr = s.step(l, lr);
        }
        assert_eq!(lr, 0.5);
    }
}
