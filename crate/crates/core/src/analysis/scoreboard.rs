use serde::{Deserialize, Serialize};

use super::stats::rank_descending;
use crate::error::{Error, Result};

/// Scores of one latent dimension. `dim` and ranks are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionRecord {
    pub dim: usize,
    pub mpwd: f64,
    /// `None` until a probe has been trained.
    pub predictiveness: Option<f64>,
    pub variance: f64,
    pub mpwd_rank: usize,
    pub pred_rank: Option<usize>,
}

/// Per-dimension scores and ranks; serialized as a JSON array of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimensionScoreboard {
    pub records: Vec<DimensionRecord>,
}

fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut r = vec![0; scores.len()];
    for (pos, j) in rank_descending(scores).into_iter().enumerate() {
        r[j] = pos + 1;
    }
    r
}

impl DimensionScoreboard {
    pub fn new(mpwd: &[f64], variance: &[f64], predictiveness: Option<&[f64]>) -> Result<Self> {
        let d = mpwd.len();
        if variance.len() != d || predictiveness.is_some_and(|p| p.len() != d) {
            return Err(Error::contract("scoreboard columns have different lengths"));
        }
        let mr = ranks(mpwd);
        let pr = predictiveness.map(ranks);
        let records = (0..d)
            .map(|j| DimensionRecord {
                dim: j + 1,
                mpwd: mpwd[j],
                predictiveness: predictiveness.map(|p| p[j]),
                variance: variance[j],
                mpwd_rank: mr[j],
                pred_rank: pr.as_ref().map(|r| r[j]),
            })
            .collect();
        Ok(DimensionScoreboard { records })
    }

    pub fn dim(&self) -> usize {
        self.records.len()
    }

    pub fn mpwd(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mpwd).collect()
    }

    pub fn predictiveness(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.predictiveness).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.variance).collect()
    }

    /// Copy with predictiveness scores and ranks filled in.
    pub fn with_predictiveness(&self, pred: &[f64]) -> Result<Self> {
        Self::new(&self.mpwd(), &self.variance(), Some(pred))
    }

    /// Dimensions (0-based) whose MPWD exceeds `factor` × the median MPWD.
    pub fn mpwd_outliers(&self, factor: f64) -> Vec<usize> {
        let m = self.mpwd();
        if m.is_empty() {
            return Vec::new();
        }
        let med = super::stats::median(&m);
        (0..m.len()).filter(|j| m[*j] > factor * med).collect()
    }
}

fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::contract(format!("k = {k} exceeds d = {}", scores.len())));
    }
    Ok(rank_descending(scores).into_iter().take(k).collect())
}

/// The `k` dimensions (0-based) with the largest MPWD; ties by lower index.
pub fn rank_by_mpwd(board: &DimensionScoreboard, k: usize) -> Result<Vec<usize>> {
    top_k(&board.mpwd(), k)
}

/// The `k` dimensions (0-based) with the largest predictiveness.
pub fn rank_by_predictiveness(board: &DimensionScoreboard, k: usize) -> Result<Vec<usize>> {
    let p = board.predictiveness().ok_or_else(|| Error::State("predictiveness not computed; run the probe".into()))?;
    top_k(&p, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_and_ties() {
        let b = DimensionScoreboard::new(&[0.1, 0.9, 0.9], &[1.0; 3], Some(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(rank_by_mpwd(&b, 2).unwrap(), vec![1, 2]);
        assert_eq!(rank_by_mpwd(&b, 3).unwrap(), vec![1, 2, 0]);
        assert_eq!(rank_by_predictiveness(&b, 1).unwrap(), vec![0]);
        assert!(rank_by_mpwd(&b, 4).is_err());
        let r: Vec<usize> = b.records.iter().map(|r| r.mpwd_rank).collect();
        assert_eq!(r, vec![3, 1, 2]);
    }

    #[test]
    fn json_is_an_array_of_records() {
        let b = DimensionScoreboard::new(&[0.5], &[1.0], None).unwrap();
        let v = serde_json::to_value(&b).unwrap();
        assert_eq!(v[0]["dim"], 1);
        assert_eq!(v[0]["mpwd_rank"], 1);
        assert!(v[0]["predictiveness"].is_null());
        assert!(rank_by_predictiveness(&b, 1).is_err());
    }
}
