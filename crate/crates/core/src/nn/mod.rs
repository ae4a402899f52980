//! Minimal CPU neural-network toolkit: convolutions, batch norm, dense layers,
//! manual backpropagation and Adam. Generic over [`Scalar`](crate::Scalar).

mod adam;
pub mod conv;
mod layers;
mod sequential;
mod tensor;

pub use adam::Adam;
pub use layers::{BatchNorm2d, Cache, Conv2d, ConvTranspose2d, Layer, Linear, Mode, Param, Residual};
pub use sequential::Sequential;
pub use tensor::{Dims, Tensor};

use crate::scalar::Scalar;

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Row-wise softmax cross-entropy on logits; returns mean loss and `dL/dlogits`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (T, Tensor<T>) {
    let Dims::Dense { n, f } = logits.dims else { panic!("logits must be dense") };
    assert_eq!(labels.len(), n);
    let nf = T::from_usize(n).expect("batch");
    let mut grad = vec![T::zero(); n * f];
    let mut loss = T::zero();
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|v| (*v - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        loss = loss - (exps[labels[i]] / z).ln();
        for j in 0..f {
            let p = exps[j] / z;
            let target = if j == labels[i] { T::one() } else { T::zero() };
            grad[i * f + j] = (p - target) / nf;
        }
    }
    (loss / nf, Tensor::dense(n, f, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(dims: Dims, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::new(dims, (0..dims.numel()).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Compare analytic parameter and input gradients of `sum(w ⊙ net(x))`
    /// against central finite differences.
    fn check_gradients(mut net: Sequential<f64>, x: Tensor<f64>, mode: Mode) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (y, caches) = net.forward_cached(&x, mode);
        let w = rand_tensor(y.dims, &mut rng);
        let objective = |net: &Sequential<f64>, x: &Tensor<f64>| -> f64 {
            let y = net.forward_cached(x, mode).0;
            y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
        };
        net.zero_grad();
        let gx = net.backward(&caches, &w);
        let h = 1e-5;
        for i in (0..x.data.len()).step_by(7) {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            assert!((fd - gx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()), "input grad {i}: fd {fd} vs {}", gx.data[i]);
        }
        let n_params = net.params_mut().len();
        for pi in 0..n_params {
            let len = net.params_mut()[pi].1.value.len();
            for j in (0..len).step_by(5) {
                let analytic = net.params_mut()[pi].1.grad[j];
                let orig = net.params_mut()[pi].1.value[j];
                net.params_mut()[pi].1.value[j] = orig + h;
                let fp = objective(&net, &x);
                net.params_mut()[pi].1.value[j] = orig - h;
                let fm = objective(&net, &x);
                net.params_mut()[pi].1.value[j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let name = net.params_mut()[pi].0.clone();
                assert!((fd - analytic).abs() < 1e-6 * (1.0 + fd.abs()), "{name}[{j}]: fd {fd} vs {analytic}");
            }
        }
    }

    #[test]
    fn conv_bn_relu_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Sequential::new(vec![
            Layer::Conv2d(Conv2d::new(2, 3, 3, 1, 1, &mut rng)),
            Layer::BatchNorm2d(BatchNorm2d::new(3)),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Conv2d(Conv2d::new(3, 4, 3, 2, 1, &mut rng)),
            Layer::Flatten,
            Layer::Linear(Linear::new(4 * 2 * 2, 3, &mut rng)),
        ]);
        let x = rand_tensor(Dims::Spatial { c: 2, n: 3, h: 8, w: 8 }, &mut rng);
        check_gradients(net, x, Mode::Train);
    }

    #[test]
    fn transposed_conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Sequential::new(vec![
            Layer::Linear(Linear::new(3, 4 * 2 * 2, &mut rng)),
            Layer::Unflatten { c: 4, h: 2, w: 2 },
            Layer::ConvTranspose2d(ConvTranspose2d::new(4, 3, 3, 2, 1, 1, &mut rng)),
            Layer::BatchNorm2d(BatchNorm2d::new(3)),
            Layer::Relu,
            Layer::Conv2d(Conv2d::new(3, 2, 3, 1, 1, &mut rng)),
        ]);
        let x = rand_tensor(Dims::Dense { n: 2, f: 3 }, &mut rng);
        check_gradients(net, x, Mode::Train);
    }

    #[test]
    fn residual_and_average_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = Residual {
            main: Sequential::new(vec![
                Layer::Conv2d(Conv2d::new(2, 3, 3, 2, 1, &mut rng)),
                Layer::BatchNorm2d(BatchNorm2d::new(3)),
                Layer::Relu,
                Layer::Conv2d(Conv2d::new(3, 3, 3, 1, 1, &mut rng)),
            ]),
            shortcut: Some(Sequential::new(vec![Layer::Conv2d(Conv2d::new(2, 3, 1, 2, 0, &mut rng))])),
        };
        let net = Sequential::new(vec![Layer::Residual(Box::new(block)), Layer::GlobalAvgPool]);
        let x = rand_tensor(Dims::Spatial { c: 2, n: 2, h: 6, w: 6 }, &mut rng);
        check_gradients(net, x, Mode::Train);
    }

    #[test]
    fn transposed_conv_doubles_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = Layer::ConvTranspose2d(ConvTranspose2d::<f32>::new(2, 1, 3, 2, 1, 1, &mut rng));
        let x = Tensor::zeros(Dims::Spatial { c: 2, n: 1, h: 4, w: 4 });
        let (y, _) = layer.forward(&x, Mode::Eval);
        assert_eq!(y.dims, Dims::Spatial { c: 1, n: 1, h: 8, w: 8 });
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let mut bn = Sequential::new(vec![Layer::<f64>::BatchNorm2d(BatchNorm2d::new(1))]);
        let x = Tensor::new(Dims::Spatial { c: 1, n: 2, h: 1, w: 2 }, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(bn.infer(&x).data, x.data.iter().map(|v| v / (1.0f64 + 1e-5).sqrt()).collect::<Vec<_>>());
        let (_, caches) = bn.forward_cached(&x, Mode::Train);
        bn.absorb(&caches);
        let Layer::BatchNorm2d(l) = &bn.layers[0] else { unreachable!() };
        assert!((l.running_mean[0] - 0.25).abs() < 1e-12);
        // unbiased variance of {1,2,3,4} = 5/3
        assert!((l.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Tensor::dense(2, 3, vec![0.1f64, -0.4, 2.0, 1.0, 1.0, 1.0]);
        let labels = [2usize, 0];
        let (_, g) = softmax_cross_entropy(&logits, &labels);
        for i in 0..6 {
            let mut p = logits.clone();
            p.data[i] += 1e-6;
            let mut m = logits.clone();
            m.data[i] -= 1e-6;
            let fd = (softmax_cross_entropy(&p, &labels).0 - softmax_cross_entropy(&m, &labels).0) / 2e-6;
            assert!((fd - g.data[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn stable_activations() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((softplus(1000.0f64) - 1000.0).abs() < 1e-12);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }
}
