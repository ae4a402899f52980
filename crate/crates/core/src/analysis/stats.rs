use log::warn;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn sorted<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in samples"));
    s
}

/// Exact 1-Wasserstein distance between two empirical 1-D distributions.
///
/// Integrates `|F_a⁻¹(q) − F_b⁻¹(q)|` over `q ∈ [0,1]`; both quantile
/// functions are step functions, so the integral is a finite sum over the
/// merged breakpoints `i/n` and `k/m`.
pub fn wasserstein1<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("wasserstein1 needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::contract("wasserstein1 samples contain NaN"));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len(), b.len());
    let (nf, mf) = (T::from_usize(n).unwrap(), T::from_usize(m).unwrap());
    let (mut i, mut k) = (0usize, 0usize);
    let mut q = T::zero();
    let mut acc = T::zero();
    while i < n && k < m {
        // compare (i+1)/n with (k+1)/m exactly in integers
        let lhs = (i + 1) * m;
        let rhs = (k + 1) * n;
        let next = if lhs <= rhs { T::from_usize(i + 1).unwrap() / nf } else { T::from_usize(k + 1).unwrap() / mf };
        acc = acc + (next - q) * (a[i] - b[k]).abs();
        q = next;
        if lhs <= rhs {
            i += 1;
        }
        if rhs <= lhs {
            k += 1;
        }
    }
    Ok(acc)
}

/// Group `values` by `labels` (0-based); classes with no samples get an empty vec.
pub fn by_class<T: Scalar>(values: &[T], labels: &[usize], n_classes: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new(); n_classes];
    for (v, l) in values.iter().zip(labels) {
        out[*l].push(*v);
    }
    out
}

/// Maximum pairwise W₁ over unordered pairs of the non-empty groups.
pub fn max_pairwise_wasserstein<T: Scalar>(groups: &[Vec<T>]) -> Result<T> {
    let present: Vec<&Vec<T>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::contract(format!("MPWD needs at least 2 classes with samples, found {}", present.len())));
    }
    let mut best = T::zero();
    for x in 0..present.len() {
        for y in x + 1..present.len() {
            best = best.max(wasserstein1(present[x], present[y])?);
        }
    }
    Ok(best)
}

/// Gaussian kernel density estimate of `samples` evaluated at every grid point:
/// `(1/(n·h)) Σ φ((z − s)/h)`.
pub fn kde<T: Scalar>(samples: &[T], grid: &[T], h: T) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::contract(format!("KDE bandwidth must be positive, got {h}")));
    }
    if samples.is_empty() {
        return Err(Error::contract("KDE needs at least one sample"));
    }
    let norm = T::one() / (T::from_usize(samples.len()).unwrap() * h * (T::TAU()).sqrt());
    let half = T::from_f64_lossy(0.5);
    Ok(grid
        .iter()
        .map(|z| {
            let s: T = samples
                .iter()
                .map(|x| {
                    let u = (*z - *x) / h;
                    (-half * u * u).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Linear-interpolation quantile (the common "type 7" definition) of sorted data.
pub(crate) fn quantile_sorted<T: Scalar>(s: &[T], q: f64) -> T {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::from_f64_lossy(pos - lo as f64);
    s[lo] + (s[hi] - s[lo]) * frac
}

/// Silverman's rule of thumb `0.9·min(std, IQR/1.34)·n^(−1/5)`, floored at 1e-6.
///
/// When the IQR is zero but the standard deviation is not, the standard
/// deviation alone is used so that heavy ties do not collapse the bandwidth.
pub fn bandwidth<T: Scalar>(samples: &[T]) -> T {
    let floor = T::from_f64_lossy(BANDWIDTH_FLOOR);
    let n = samples.len();
    if n < 2 {
        warn!("bandwidth of {n} sample(s); using floor {BANDWIDTH_FLOOR}");
        return floor;
    }
    let nf = T::from_usize(n).unwrap();
    let mean = samples.iter().copied().sum::<T>() / nf;
    let var = samples.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / (nf - T::one());
    let std = var.sqrt();
    let s = sorted(samples);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > T::zero() { std.min(iqr / T::from_f64_lossy(1.34)) } else { std };
    let h = T::from_f64_lossy(0.9) * spread * nf.powf(T::from_f64_lossy(-0.2));
    if !(h > floor) {
        if !(spread > T::zero()) {
            warn!("samples have zero spread; using bandwidth floor {BANDWIDTH_FLOOR}");
        }
        return floor;
    }
    h
}

/// Population mean and variance.
pub fn mean_variance<T: Scalar>(v: &[T]) -> (T, T) {
    if v.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_usize(v.len()).unwrap();
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / n;
    (mean, var)
}

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub fn median<T: Scalar>(v: &[T]) -> T {
    let s = sorted(v);
    quantile_sorted(&s, 0.5)
}

/// Indices sorted by score descending; ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    idx
}
