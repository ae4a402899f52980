use super::layers::{Cache, Layer, Mode, Param};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// A chain of layers with layer-by-layer backpropagation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    /// Inference pass; never touches parameters or buffers.
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, Mode::Eval).0;
        }
        cur
    }

    pub fn forward_cached(&self, x: &Tensor<T>, mode: Mode) -> (Tensor<T>, Vec<Cache<T>>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, c) = layer.forward(&cur, mode);
            caches.push(c);
            cur = y;
        }
        (cur, caches)
    }

    /// Fold batch-norm statistics from a training forward into running buffers.
    pub fn absorb(&mut self, caches: &[Cache<T>]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            layer.absorb(cache);
        }
    }

    /// Backpropagate `grad` through the chain, accumulating parameter gradients.
    pub fn backward(&mut self, caches: &[Cache<T>], grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = layer.backward(cache, &g);
        }
        g
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.params_mut().into_iter().map(move |(n, p)| (format!("{i}.{n}"), p)))
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.buffers_mut().into_iter().map(move |(n, p)| (format!("{i}.{n}"), p)))
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|(_, p)| p.value.len()).sum()
    }
}
