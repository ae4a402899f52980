use crate::scalar::Scalar;

/// Activation layout.
///
/// Spatial activations are stored channel-major across the batch (`C×N×H×W`)
/// so a convolution over the whole batch is a single matrix product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    Spatial { c: usize, n: usize, h: usize, w: usize },
    Dense { n: usize, f: usize },
}

impl Dims {
    pub fn numel(&self) -> usize {
        match *self {
            Dims::Spatial { c, n, h, w } => c * n * h * w,
            Dims::Dense { n, f } => n * f,
        }
    }

    pub fn batch(&self) -> usize {
        match *self {
            Dims::Spatial { n, .. } | Dims::Dense { n, .. } => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub dims: Dims,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Self {
        assert_eq!(dims.numel(), data.len(), "tensor data does not match dims {dims:?}");
        Tensor { dims, data }
    }

    pub fn zeros(dims: Dims) -> Self {
        Tensor { dims, data: vec![T::zero(); dims.numel()] }
    }

    pub fn dense(n: usize, f: usize, data: Vec<T>) -> Self {
        Self::new(Dims::Dense { n, f }, data)
    }

    pub fn batch(&self) -> usize {
        self.dims.batch()
    }

    /// Build a spatial tensor from a batch of `H×W×C` interleaved images.
    pub fn from_hwc_batch(images: &[&[T]], h: usize, w: usize, c: usize) -> Self {
        let n = images.len();
        let mut data = vec![T::zero(); c * n * h * w];
        let plane = h * w;
        for (i, img) in images.iter().enumerate() {
            assert_eq!(img.len(), plane * c, "image {i} has wrong size");
            for p in 0..plane {
                for ch in 0..c {
                    data[(ch * n + i) * plane + p] = img[p * c + ch];
                }
            }
        }
        Tensor::new(Dims::Spatial { c, n, h, w }, data)
    }

    /// Split a spatial tensor back into `H×W×C` interleaved images.
    pub fn to_hwc_batch(&self) -> Vec<Vec<T>> {
        let Dims::Spatial { c, n, h, w } = self.dims else {
            panic!("to_hwc_batch on dense tensor");
        };
        let plane = h * w;
        (0..n)
            .map(|i| {
                let mut out = vec![T::zero(); plane * c];
                for ch in 0..c {
                    let src = &self.data[(ch * n + i) * plane..(ch * n + i + 1) * plane];
                    for (p, v) in src.iter().enumerate() {
                        out[p * c + ch] = *v;
                    }
                }
                out
            })
            .collect()
    }

    /// Row `i` of a dense tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let Dims::Dense { f, .. } = self.dims else {
            panic!("row on spatial tensor");
        };
        &self.data[i * f..(i + 1) * f]
    }
}
