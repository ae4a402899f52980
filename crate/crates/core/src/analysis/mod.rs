//! Latent statistics: dataset encoding, per-dimension class separation
//! (Wasserstein distances), density estimates and the dimension scoreboard.

mod scoreboard;
mod stats;
mod table;

pub use scoreboard::{rank_by_mpwd, rank_by_predictiveness, DimensionRecord, DimensionScoreboard};
pub use stats::{
    bandwidth, by_class, kde, max_pairwise_wasserstein, mean_variance, median, rank_descending, wasserstein1,
    BANDWIDTH_FLOOR,
};
pub use table::{encode_dataset, LatentTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// MPWD of latent dimension `j` (0-based): the largest W₁ distance between the
/// class-conditional samples of `μ_j`, over all unordered class pairs.
pub fn mpwd<T: Scalar>(latents: &LatentTable<T>, j: usize) -> Result<T> {
    if j >= latents.dim() {
        return Err(Error::contract(format!("dimension {j} out of range for d = {}", latents.dim())));
    }
    let col = latents.mu_column(j);
    max_pairwise_wasserstein(&by_class(&col, &latents.labels, latents.n_classes()))
}

/// MPWD of every dimension.
pub fn mpwd_all<T: Scalar>(latents: &LatentTable<T>) -> Result<Vec<T>> {
    (0..latents.dim()).map(|j| mpwd(latents, j)).collect()
}

/// Class-conditional density of one latent coordinate, as serialized to
/// `kde/dim_<j>.json`. `dim` and `class` are 1-based there and 0-based here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub dim: usize,
    pub class: usize,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub h: f64,
}

/// Default number of grid points for density curves.
pub const KDE_GRID_POINTS: usize = 200;

/// One density curve per class for dimension `j`, over a shared grid spanning
/// `[min − 3h, max + 3h]` where `h` is the largest per-class bandwidth.
pub fn kde_plot_data<T: Scalar>(latents: &LatentTable<T>, j: usize, points: usize) -> Result<Vec<KdeCurve>> {
    if j >= latents.dim() {
        return Err(Error::contract(format!("dimension {j} out of range for d = {}", latents.dim())));
    }
    let col: Vec<f64> = latents.mu_column(j).iter().map(|v| v.as_f64()).collect();
    let groups = by_class(&col, &latents.labels, latents.n_classes());
    let hs: Vec<f64> = groups.iter().map(|g| if g.is_empty() { 0.0 } else { bandwidth(g) }).collect();
    let h_max = hs.iter().copied().fold(0.0, f64::max);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h_max;
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h_max;
    let points = points.max(2);
    let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    groups
        .iter()
        .zip(&hs)
        .enumerate()
        .filter(|(_, (g, _))| !g.is_empty())
        .map(|(c, (g, h))| Ok(KdeCurve { dim: j, class: c, grid: grid.clone(), density: kde(g, &grid, *h)?, h: *h }))
        .collect()
}
