use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::conv::{col2im, conv_out, im2col, Window};
use super::sequential::Sequential;
use super::tensor::{Dims, Tensor};
use crate::scalar::Scalar;

/// A trainable tensor plus its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Param { shape, value, grad }
    }

    /// PyTorch-style default init, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    fn uniform<R: Rng>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let n = shape.iter().product();
        let value = (0..n).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
        Self::new(shape, value)
    }

    fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![T::from_f64_lossy(v); n])
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out_c × (in_c·k·k)`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    /// `in_c × (out_c·k·k)`, the PyTorch layout.
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub in_f: usize,
    pub out_f: usize,
    /// `out_f × in_f`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

/// `relu(main(x) + shortcut(x))`; identity shortcut when `shortcut` is `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual<T> {
    pub main: Sequential<T>,
    pub shortcut: Option<Sequential<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    ConvTranspose2d(ConvTranspose2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Linear(Linear<T>),
    Relu,
    /// 2×2 max pooling, stride 2.
    MaxPool2,
    /// Spatial average over `H×W`, producing a dense `N×C` tensor.
    GlobalAvgPool,
    /// Spatial `C×N×H×W` to dense `N×(C·H·W)`.
    Flatten,
    /// Dense `N×(C·H·W)` to spatial.
    Unflatten {
        c: usize,
        h: usize,
        w: usize,
    },
    Residual(Box<Residual<T>>),
}

/// Saved forward state needed by the backward pass.
#[derive(Debug)]
pub enum Cache<T> {
    Empty,
    Conv { col: Vec<T>, window: Window },
    ConvT { input: Tensor<T>, window: Window },
    Bn { xhat: Vec<T>, inv_std: Vec<T>, batch_mean: Vec<T>, batch_var: Vec<T> },
    Linear { input: Tensor<T> },
    Relu { output: Tensor<T> },
    Pool { argmax: Vec<usize>, in_dims: Dims },
    Avg { in_dims: Dims },
    Reshape { in_dims: Dims },
    Residual { main: Vec<Cache<T>>, shortcut: Vec<Cache<T>>, output: Tensor<T> },
}

fn spatial(d: Dims) -> (usize, usize, usize, usize) {
    match d {
        Dims::Spatial { c, n, h, w } => (c, n, h, w),
        Dims::Dense { .. } => panic!("expected spatial activation, got {d:?}"),
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        let fan_in = in_c * k * k;
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::uniform(vec![out_c, in_c * k * k], fan_in, rng),
            bias: Param::uniform(vec![out_c], fan_in, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Cache<T>) {
        let (c, n, h, w) = spatial(x.dims);
        assert_eq!(c, self.in_c, "conv input channels");
        let window = Window {
            c,
            n,
            h,
            w,
            k: self.k,
            stride: self.stride,
            pad: self.pad,
            oh: conv_out(h, self.k, self.stride, self.pad),
            ow: conv_out(w, self.k, self.stride, self.pad),
        };
        let col = im2col(&x.data, &window);
        let p = window.cols();
        let kk = window.rows();
        let mut y = vec![T::zero(); self.out_c * p];
        for (o, chunk) in y.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = self.bias.value[o]);
        }
        T::gemm(
            self.out_c,
            kk,
            p,
            T::one(),
            &self.weight.value,
            kk as isize,
            1,
            &col,
            p as isize,
            1,
            T::one(),
            &mut y,
            p as isize,
            1,
        );
        let dims = Dims::Spatial { c: self.out_c, n, h: window.oh, w: window.ow };
        (Tensor::new(dims, y), Cache::Conv { col, window })
    }

    fn backward(&mut self, cache: &Cache<T>, gy: &Tensor<T>) -> Tensor<T> {
        let Cache::Conv { col, window } = cache else { unreachable!("conv cache") };
        let p = window.cols();
        let kk = window.rows();
        T::gemm(
            self.out_c,
            p,
            kk,
            T::one(),
            &gy.data,
            p as isize,
            1,
            col,
            1,
            p as isize,
            T::one(),
            &mut self.weight.grad,
            kk as isize,
            1,
        );
        for (o, chunk) in gy.data.chunks(p).enumerate() {
            self.bias.grad[o] = self.bias.grad[o] + chunk.iter().copied().sum();
        }
        let mut gcol = vec![T::zero(); kk * p];
        T::gemm(
            kk,
            self.out_c,
            p,
            T::one(),
            &self.weight.value,
            1,
            kk as isize,
            &gy.data,
            p as isize,
            1,
            T::zero(),
            &mut gcol,
            p as isize,
            1,
        );
        let gx = col2im(&gcol, window);
        Tensor::new(Dims::Spatial { c: window.c, n: window.n, h: window.h, w: window.w }, gx)
    }
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng>(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = out_c * k * k;
        ConvTranspose2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            output_pad,
            weight: Param::uniform(vec![in_c, out_c * k * k], fan_in, rng),
            bias: Param::uniform(vec![out_c], fan_in, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Cache<T>) {
        let (c, n, h, w) = spatial(x.dims);
        assert_eq!(c, self.in_c, "transposed conv input channels");
        let oh = (h - 1) * self.stride + self.k + self.output_pad - 2 * self.pad;
        let ow = (w - 1) * self.stride + self.k + self.output_pad - 2 * self.pad;
        // The transposed conv is the adjoint of a conv mapping (oh, ow) to (h, w).
        let window =
            Window { c: self.out_c, n, h: oh, w: ow, k: self.k, stride: self.stride, pad: self.pad, oh: h, ow: w };
        let p = n * h * w;
        let rows = window.rows();
        let mut col = vec![T::zero(); rows * p];
        T::gemm(
            rows,
            self.in_c,
            p,
            T::one(),
            &self.weight.value,
            1,
            rows as isize,
            &x.data,
            p as isize,
            1,
            T::zero(),
            &mut col,
            p as isize,
            1,
        );
        let mut y = col2im(&col, &window);
        let plane = n * oh * ow;
        for (o, chunk) in y.chunks_mut(plane).enumerate() {
            let b = self.bias.value[o];
            chunk.iter_mut().for_each(|v| *v = *v + b);
        }
        let dims = Dims::Spatial { c: self.out_c, n, h: oh, w: ow };
        (Tensor::new(dims, y), Cache::ConvT { input: x.clone(), window })
    }

    fn backward(&mut self, cache: &Cache<T>, gy: &Tensor<T>) -> Tensor<T> {
        let Cache::ConvT { input, window } = cache else { unreachable!("convT cache") };
        let rows = window.rows();
        let p = window.cols();
        let plane = window.n * window.h * window.w;
        for (o, chunk) in gy.data.chunks(plane).enumerate() {
            self.bias.grad[o] = self.bias.grad[o] + chunk.iter().copied().sum();
        }
        let gcol = im2col(&gy.data, window);
        T::gemm(
            self.in_c,
            p,
            rows,
            T::one(),
            &input.data,
            p as isize,
            1,
            &gcol,
            1,
            p as isize,
            T::one(),
            &mut self.weight.grad,
            rows as isize,
            1,
        );
        let mut gx = vec![T::zero(); self.in_c * p];
        T::gemm(
            self.in_c,
            rows,
            p,
            T::one(),
            &self.weight.value,
            rows as isize,
            1,
            &gcol,
            p as isize,
            1,
            T::zero(),
            &mut gx,
            p as isize,
            1,
        );
        Tensor::new(input.dims, gx)
    }
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Param::filled(vec![channels], 1.0),
            beta: Param::filled(vec![channels], 0.0),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> (Tensor<T>, Cache<T>) {
        let (c, n, h, w) = spatial(x.dims);
        assert_eq!(c, self.channels, "batch norm channels");
        let m = n * h * w;
        let eps = T::from_f64_lossy(self.eps);
        let mut y = vec![T::zero(); x.data.len()];
        match mode {
            Mode::Eval => {
                for ch in 0..c {
                    let inv = T::one() / (self.running_var[ch] + eps).sqrt();
                    let (g, b, mu) = (self.gamma.value[ch], self.beta.value[ch], self.running_mean[ch]);
                    for (o, v) in y[ch * m..(ch + 1) * m].iter_mut().zip(&x.data[ch * m..(ch + 1) * m]) {
                        *o = g * (*v - mu) * inv + b;
                    }
                }
                (Tensor::new(x.dims, y), Cache::Empty)
            }
            Mode::Train => {
                let mf = T::from_usize(m).expect("count");
                let mut xhat = vec![T::zero(); x.data.len()];
                let mut inv_std = vec![T::zero(); c];
                let mut batch_mean = vec![T::zero(); c];
                let mut batch_var = vec![T::zero(); c];
                for ch in 0..c {
                    let xs = &x.data[ch * m..(ch + 1) * m];
                    let mean = xs.iter().copied().sum::<T>() / mf;
                    let var = xs.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / mf;
                    let inv = T::one() / (var + eps).sqrt();
                    let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                    for i in 0..m {
                        let xh = (xs[i] - mean) * inv;
                        xhat[ch * m + i] = xh;
                        y[ch * m + i] = g * xh + b;
                    }
                    inv_std[ch] = inv;
                    batch_mean[ch] = mean;
                    batch_var[ch] = var;
                }
                (Tensor::new(x.dims, y), Cache::Bn { xhat, inv_std, batch_mean, batch_var })
            }
        }
    }

    fn update_running(&mut self, cache: &Cache<T>, count: usize) {
        let Cache::Bn { batch_mean, batch_var, .. } = cache else { return };
        let mom = T::from_f64_lossy(self.momentum);
        let keep = T::one() - mom;
        // Running variance uses the unbiased estimate.
        let correction = if count > 1 { T::from_f64_lossy(count as f64 / (count - 1) as f64) } else { T::one() };
        for ch in 0..self.channels {
            self.running_mean[ch] = keep * self.running_mean[ch] + mom * batch_mean[ch];
            self.running_var[ch] = keep * self.running_var[ch] + mom * batch_var[ch] * correction;
        }
    }

    fn backward(&mut self, cache: &Cache<T>, gy: &Tensor<T>) -> Tensor<T> {
        let Cache::Bn { xhat, inv_std, .. } = cache else { unreachable!("bn cache") };
        let (c, n, h, w) = spatial(gy.dims);
        let m = n * h * w;
        let mf = T::from_usize(m).expect("count");
        let mut gx = vec![T::zero(); gy.data.len()];
        for ch in 0..c {
            let g = &gy.data[ch * m..(ch + 1) * m];
            let xh = &xhat[ch * m..(ch + 1) * m];
            let sum_g: T = g.iter().copied().sum();
            let sum_gx: T = g.iter().zip(xh).map(|(a, b)| *a * *b).sum();
            self.beta.grad[ch] = self.beta.grad[ch] + sum_g;
            self.gamma.grad[ch] = self.gamma.grad[ch] + sum_gx;
            let scale = self.gamma.value[ch] * inv_std[ch] / mf;
            for i in 0..m {
                gx[ch * m + i] = scale * (mf * g[i] - sum_g - xh[i] * sum_gx);
            }
        }
        Tensor::new(gy.dims, gx)
    }
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(in_f: usize, out_f: usize, rng: &mut R) -> Self {
        Linear {
            in_f,
            out_f,
            weight: Param::uniform(vec![out_f, in_f], in_f, rng),
            bias: Param::uniform(vec![out_f], in_f, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Cache<T>) {
        let Dims::Dense { n, f } = x.dims else { panic!("linear expects dense input") };
        assert_eq!(f, self.in_f, "linear input width");
        let mut y = Vec::with_capacity(n * self.out_f);
        for _ in 0..n {
            y.extend_from_slice(&self.bias.value);
        }
        T::gemm(
            n,
            f,
            self.out_f,
            T::one(),
            &x.data,
            f as isize,
            1,
            &self.weight.value,
            1,
            f as isize,
            T::one(),
            &mut y,
            self.out_f as isize,
            1,
        );
        (Tensor::dense(n, self.out_f, y), Cache::Linear { input: x.clone() })
    }

    pub fn backward(&mut self, cache: &Cache<T>, gy: &Tensor<T>) -> Tensor<T> {
        let Cache::Linear { input } = cache else { unreachable!("linear cache") };
        let n = input.batch();
        let (fi, fo) = (self.in_f, self.out_f);
        T::gemm(
            fo,
            n,
            fi,
            T::one(),
            &gy.data,
            1,
            fo as isize,
            &input.data,
            fi as isize,
            1,
            T::one(),
            &mut self.weight.grad,
            fi as isize,
            1,
        );
        for row in gy.data.chunks(fo) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b = *b + *g;
            }
        }
        let mut gx = vec![T::zero(); n * fi];
        T::gemm(
            n,
            fo,
            fi,
            T::one(),
            &gy.data,
            fo as isize,
            1,
            &self.weight.value,
            fi as isize,
            1,
            T::zero(),
            &mut gx,
            fi as isize,
            1,
        );
        Tensor::dense(n, fi, gx)
    }
}

fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::new(x.dims, x.data.iter().map(|v| v.max(T::zero())).collect())
}

fn relu_backward<T: Scalar>(output: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let data = output.data.iter().zip(&gy.data).map(|(y, g)| if *y > T::zero() { *g } else { T::zero() }).collect();
    Tensor::new(gy.dims, data)
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> (Tensor<T>, Cache<T>) {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::ConvTranspose2d(l) => l.forward(x),
            Layer::BatchNorm2d(l) => l.forward(x, mode),
            Layer::Linear(l) => l.forward(x),
            Layer::Relu => {
                let y = relu_forward(x);
                let cache = if mode == Mode::Train { Cache::Relu { output: y.clone() } } else { Cache::Empty };
                (y, cache)
            }
            Layer::MaxPool2 => {
                let (c, n, h, w) = spatial(x.dims);
                let (oh, ow) = (h / 2, w / 2);
                let mut y = Vec::with_capacity(c * n * oh * ow);
                let mut argmax = Vec::with_capacity(c * n * oh * ow);
                for cn in 0..c * n {
                    let base = cn * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + 2 * oy * w + 2 * ox;
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                                if x.data[idx] > x.data[best] {
                                    best = idx;
                                }
                            }
                            y.push(x.data[best]);
                            argmax.push(best);
                        }
                    }
                }
                let dims = Dims::Spatial { c, n, h: oh, w: ow };
                (Tensor::new(dims, y), Cache::Pool { argmax, in_dims: x.dims })
            }
            Layer::GlobalAvgPool => {
                let (c, n, h, w) = spatial(x.dims);
                let plane = h * w;
                let denom = T::from_usize(plane).expect("plane");
                let mut y = vec![T::zero(); n * c];
                for ch in 0..c {
                    for b in 0..n {
                        let s: T = x.data[(ch * n + b) * plane..(ch * n + b + 1) * plane].iter().copied().sum();
                        y[b * c + ch] = s / denom;
                    }
                }
                (Tensor::dense(n, c, y), Cache::Avg { in_dims: x.dims })
            }
            Layer::Flatten => {
                let (c, n, h, w) = spatial(x.dims);
                let plane = h * w;
                let f = c * plane;
                let mut y = vec![T::zero(); n * f];
                for ch in 0..c {
                    for b in 0..n {
                        y[b * f + ch * plane..b * f + (ch + 1) * plane]
                            .copy_from_slice(&x.data[(ch * n + b) * plane..(ch * n + b + 1) * plane]);
                    }
                }
                (Tensor::dense(n, f, y), Cache::Reshape { in_dims: x.dims })
            }
            Layer::Unflatten { c, h, w } => {
                let Dims::Dense { n, f } = x.dims else { panic!("unflatten expects dense input") };
                let (c, h, w) = (*c, *h, *w);
                assert_eq!(f, c * h * w, "unflatten width");
                let plane = h * w;
                let mut y = vec![T::zero(); n * f];
                for ch in 0..c {
                    for b in 0..n {
                        y[(ch * n + b) * plane..(ch * n + b + 1) * plane]
                            .copy_from_slice(&x.data[b * f + ch * plane..b * f + (ch + 1) * plane]);
                    }
                }
                (Tensor::new(Dims::Spatial { c, n, h, w }, y), Cache::Reshape { in_dims: x.dims })
            }
            Layer::Residual(r) => {
                let (main_y, main_c) = r.main.forward_cached(x, mode);
                let (short_y, short_c) = match &r.shortcut {
                    Some(s) => s.forward_cached(x, mode),
                    None => (x.clone(), Vec::new()),
                };
                assert_eq!(main_y.dims, short_y.dims, "residual branch shapes differ");
                let sum =
                    Tensor::new(main_y.dims, main_y.data.iter().zip(&short_y.data).map(|(a, b)| *a + *b).collect());
                let out = relu_forward(&sum);
                let cache = Cache::Residual { main: main_c, shortcut: short_c, output: out.clone() };
                (out, cache)
            }
        }
    }

    /// Fold batch statistics from a training-mode forward into running buffers.
    pub fn absorb(&mut self, cache: &Cache<T>) {
        match (self, cache) {
            (Layer::BatchNorm2d(bn), c @ Cache::Bn { xhat, .. }) => {
                let count = xhat.len() / bn.channels;
                bn.update_running(c, count);
            }
            (Layer::Residual(r), Cache::Residual { main, shortcut, .. }) => {
                r.main.absorb(main);
                if let Some(s) = r.shortcut.as_mut() {
                    s.absorb(shortcut);
                }
            }
            _ => {}
        }
    }

    pub fn backward(&mut self, cache: &Cache<T>, gy: &Tensor<T>) -> Tensor<T> {
        match self {
            Layer::Conv2d(l) => l.backward(cache, gy),
            Layer::ConvTranspose2d(l) => l.backward(cache, gy),
            Layer::BatchNorm2d(l) => l.backward(cache, gy),
            Layer::Linear(l) => l.backward(cache, gy),
            Layer::Relu => {
                let Cache::Relu { output } = cache else { unreachable!("relu cache") };
                relu_backward(output, gy)
            }
            Layer::MaxPool2 => {
                let Cache::Pool { argmax, in_dims } = cache else { unreachable!("pool cache") };
                let mut gx = Tensor::zeros(*in_dims);
                for (g, idx) in gy.data.iter().zip(argmax) {
                    gx.data[*idx] = gx.data[*idx] + *g;
                }
                gx
            }
            Layer::GlobalAvgPool => {
                let Cache::Avg { in_dims } = cache else { unreachable!("avg cache") };
                let (c, n, h, w) = spatial(*in_dims);
                let plane = h * w;
                let denom = T::from_usize(plane).expect("plane");
                let mut gx = Tensor::zeros(*in_dims);
                for ch in 0..c {
                    for b in 0..n {
                        let g = gy.data[b * c + ch] / denom;
                        gx.data[(ch * n + b) * plane..(ch * n + b + 1) * plane].iter_mut().for_each(|v| *v = g);
                    }
                }
                gx
            }
            Layer::Flatten => {
                let Cache::Reshape { in_dims } = cache else { unreachable!("reshape cache") };
                let (c, _, h, w) = spatial(*in_dims);
                let unflatten: Layer<T> = Layer::Unflatten { c, h, w };
                unflatten.forward(gy, Mode::Eval).0
            }
            Layer::Unflatten { .. } => Layer::<T>::Flatten.forward(gy, Mode::Eval).0,
            Layer::Residual(r) => {
                let Cache::Residual { main, shortcut, output } = cache else { unreachable!("residual cache") };
                let g_sum = relu_backward(output, gy);
                let g_main = r.main.backward(main, &g_sum);
                let g_short = match r.shortcut.as_mut() {
                    Some(s) => s.backward(shortcut, &g_sum),
                    None => g_sum,
                };
                Tensor::new(g_main.dims, g_main.data.iter().zip(&g_short.data).map(|(a, b)| *a + *b).collect())
            }
        }
    }

    /// Trainable parameters with stable relative names.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight".into(), &mut l.weight), ("bias".into(), &mut l.bias)],
            Layer::ConvTranspose2d(l) => vec![("weight".into(), &mut l.weight), ("bias".into(), &mut l.bias)],
            Layer::BatchNorm2d(l) => vec![("gamma".into(), &mut l.gamma), ("beta".into(), &mut l.beta)],
            Layer::Linear(l) => vec![("weight".into(), &mut l.weight), ("bias".into(), &mut l.bias)],
            Layer::Residual(r) => {
                let mut out: Vec<(String, &mut Param<T>)> =
                    r.main.params_mut().into_iter().map(|(n, p)| (format!("main.{n}"), p)).collect();
                if let Some(s) = r.shortcut.as_mut() {
                    out.extend(s.params_mut().into_iter().map(|(n, p)| (format!("shortcut.{n}"), p)));
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        match self {
            Layer::BatchNorm2d(l) => {
                vec![("running_mean".into(), &mut l.running_mean), ("running_var".into(), &mut l.running_var)]
            }
            Layer::Residual(r) => {
                let mut out: Vec<(String, &mut Vec<T>)> =
                    r.main.buffers_mut().into_iter().map(|(n, p)| (format!("main.{n}"), p)).collect();
                if let Some(s) = r.shortcut.as_mut() {
                    out.extend(s.buffers_mut().into_iter().map(|(n, p)| (format!("shortcut.{n}"), p)));
                }
                out
            }
            _ => Vec::new(),
        }
    }
}
