use serde::{Deserialize, Serialize};

use crate::analysis::{mean_variance, LatentTable};
use crate::scalar::Scalar;

/// Variance of μ below which a dimension counts as uninformative.
pub const VARIANCE_FLOOR: f64 = 0.05;
/// Relative deviation of mean σ from 1 that is reported.
pub const SIGMA_DEVIATION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    /// Dimensions collapse even without extra KL pressure: too many latents.
    DecreaseLatentDim,
    /// Dimensions collapse at this β: back off toward the last β without collapse.
    DecreaseBeta,
    /// Every dimension is informative: β can be raised further.
    IncreaseBeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionVariance {
    /// 1-based.
    pub dim: usize,
    pub variance: f64,
    pub mean_sigma: f64,
    pub uninformative: bool,
    pub sigma_deviates: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionVarianceReport {
    pub beta: f64,
    pub dims: Vec<DimensionVariance>,
    /// 0-based indices of uninformative dimensions.
    pub flagged: Vec<usize>,
    pub recommendation: Recommendation,
}

/// Per-dimension variance of μ over the training latents, with the collapse
/// flags and the resulting β / d recommendation.
pub fn suggest_hyperparams<T: Scalar>(beta: f64, latents: &LatentTable<T>) -> DimensionVarianceReport {
    let dims: Vec<DimensionVariance> = (0..latents.dim())
        .map(|j| {
            let mu: Vec<f64> = latents.mu_column(j).iter().map(|v| v.as_f64()).collect();
            let sigma: Vec<f64> = latents.sigma_column(j).iter().map(|v| v.as_f64()).collect();
            let (_, variance) = mean_variance(&mu);
            let (mean_sigma, _) = mean_variance(&sigma);
            DimensionVariance {
                dim: j + 1,
                variance,
                mean_sigma,
                uninformative: variance < VARIANCE_FLOOR,
                sigma_deviates: (mean_sigma - 1.0).abs() > SIGMA_DEVIATION,
            }
        })
        .collect();
    let flagged: Vec<usize> = dims.iter().filter(|d| d.uninformative).map(|d| d.dim - 1).collect();
    let recommendation = match (flagged.is_empty(), beta <= 1.0) {
        (true, _) => Recommendation::IncreaseBeta,
        (false, true) => Recommendation::DecreaseLatentDim,
        (false, false) => Recommendation::DecreaseBeta,
    };
    DimensionVarianceReport { beta, dims, flagged, recommendation }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[Vec<f64>], sigma: f64) -> LatentTable<f64> {
        let n = cols[0].len();
        let d = cols.len();
        let mu: Vec<f64> = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        LatentTable::new((0..n).map(|i| i.to_string()).collect(), vec![0; n], mu, vec![sigma; n * d], d, 1).unwrap()
    }

    #[test]
    fn unit_variance_means_increase_beta() {
        let col: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = suggest_hyperparams(1.0, &table(&[col.clone(), col], 1.0));
        assert!(r.flagged.is_empty());
        assert_eq!(r.recommendation, Recommendation::IncreaseBeta);
        assert!(r.dims.iter().all(|d| !d.sigma_deviates));
    }

    #[test]
    fn collapsed_dim_is_flagged() {
        let good: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let flat: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let r = suggest_hyperparams(1.0, &table(&[good.clone(), flat.clone()], 1.0));
        assert_eq!(r.flagged, vec![1]);
        assert!((r.dims[1].variance - 1e-4).abs() < 1e-12);
        assert_eq!(r.recommendation, Recommendation::DecreaseLatentDim);
        assert_eq!(suggest_hyperparams(4.0, &table(&[good, flat], 1.0)).recommendation, Recommendation::DecreaseBeta);
    }
}
