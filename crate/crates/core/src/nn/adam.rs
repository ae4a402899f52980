use super::layers::Param;
use crate::scalar::Scalar;

/// Adam with bias correction; no weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    /// Apply one update. `params` must be passed in the same order every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.step));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.step));
        let lr = T::from_f64_lossy(self.lr);
        let eps = T::from_f64_lossy(self.eps);
        let one = T::one();
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] = p.value[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * sign(g).
        let mut p = Param::new(vec![2], vec![1.0f64, -1.0]);
        p.grad = vec![3.0, -0.5];
        let mut opt = Adam::new(0.001);
        opt.step(&mut [&mut p]);
        assert!((p.value[0] - 0.999).abs() < 1e-9);
        assert!((p.value[1] + 0.999).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Param::new(vec![1], vec![5.0f64]);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            p.grad = vec![2.0 * (p.value[0] - 2.0)];
            opt.step(&mut [&mut p]);
        }
        assert!((p.value[0] - 2.0).abs() < 1e-2);
    }
}
