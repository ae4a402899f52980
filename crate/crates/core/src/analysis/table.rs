use std::io::{Read, Write};
use std::path::Path;

use crate::data::LabeledImageSet;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;
use crate::vae::BetaVae;

/// Posterior means and standard deviations of every sample, row-aligned with
/// the source dataset. Labels are 0-based class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTable<T> {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Row-major `N×d`.
    pub mu: Vec<T>,
    /// Row-major `N×d`, strictly positive.
    pub sigma: Vec<T>,
    d: usize,
    n_classes: usize,
}

impl<T: Scalar> LatentTable<T> {
    pub fn new(
        ids: Vec<String>,
        labels: Vec<usize>,
        mu: Vec<T>,
        sigma: Vec<T>,
        d: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let n = ids.len();
        if labels.len() != n || mu.len() != n * d || sigma.len() != n * d {
            return Err(Error::contract(format!(
                "latent table parts disagree: {n} ids, {} labels, {} mu, {} sigma for d = {d}",
                labels.len(),
                mu.len(),
                sigma.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l >= n_classes) {
            return Err(Error::contract(format!("label {l} out of range for {n_classes} classes")));
        }
        Ok(LatentTable { ids, labels, mu, sigma, d, n_classes })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn mu_row(&self, i: usize) -> &[T] {
        &self.mu[i * self.d..(i + 1) * self.d]
    }

    pub fn sigma_row(&self, i: usize) -> &[T] {
        &self.sigma[i * self.d..(i + 1) * self.d]
    }

    pub fn mu_column(&self, j: usize) -> Vec<T> {
        (0..self.len()).map(|i| self.mu[i * self.d + j]).collect()
    }

    pub fn sigma_column(&self, j: usize) -> Vec<T> {
        (0..self.len()).map(|i| self.sigma[i * self.d + j]).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |v: &[T]| rows.iter().flat_map(|r| v[r * self.d..(r + 1) * self.d].iter().copied()).collect();
        LatentTable {
            ids: rows.iter().map(|r| self.ids[*r].clone()).collect(),
            labels: rows.iter().map(|r| self.labels[*r]).collect(),
            mu: pick(&self.mu),
            sigma: pick(&self.sigma),
            d: self.d,
            n_classes: self.n_classes,
        }
    }

    /// CSV with header `id,label,mu_1..mu_d,sigma_1..sigma_d`; labels and
    /// dimensions are 1-based, floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((1..=self.d).map(|j| format!("mu_{j}")));
        header.extend((1..=self.d).map(|j| format!("sigma_{j}")));
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), (self.labels[i] + 1).to_string()];
            rec.extend(self.mu_row(i).iter().map(|v| v.to_string()));
            rec.extend(self.sigma_row(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(path, &buf)
    }

    /// Parse a latent CSV. `n_classes` is taken from the largest label unless given.
    pub fn read_csv<R: Read>(r: R, n_classes: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols = header.len();
        if cols < 4 || (cols - 2) % 2 != 0 || &header[0] != "id" || &header[1] != "label" {
            return Err(Error::contract("latent CSV header must be id,label,mu_1..mu_d,sigma_1..sigma_d"));
        }
        let d = (cols - 2) / 2;
        for j in 0..d {
            if header[2 + j] != format!("mu_{}", j + 1) || header[2 + d + j] != format!("sigma_{}", j + 1) {
                return Err(Error::contract(format!("unexpected latent CSV column order near dimension {}", j + 1)));
            }
        }
        let (mut ids, mut labels, mut mu, mut sigma) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::contract(format!("latent CSV row {}: bad {what}", row + 1));
            ids.push(rec[0].to_string());
            let label: usize = rec[1].parse().map_err(|_| bad("label"))?;
            if label == 0 {
                return Err(bad("label (labels are 1-based)"));
            }
            labels.push(label - 1);
            for k in 0..2 * d {
                let v: T = rec[2 + k].parse().map_err(|_| bad("number"))?;
                if k < d {
                    mu.push(v);
                } else {
                    sigma.push(v);
                }
            }
        }
        let n_classes = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(ids, labels, mu, sigma, d, n_classes)
    }

    pub fn load_csv(path: &Path, n_classes: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f), n_classes)
    }
}

/// Encode every sample of `dataset` in order (inference mode).
pub fn encode_dataset<T: Scalar>(model: &BetaVae<T>, dataset: &LabeledImageSet) -> Result<LatentTable<T>> {
    let d = model.latent_dim();
    let mut mu = Vec::with_capacity(dataset.len() * d);
    let mut sigma = Vec::with_capacity(dataset.len() * d);
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(256) {
        let imgs: Vec<Vec<T>> =
            chunk.iter().map(|i| dataset.image(*i).iter().map(|v| T::from_f64_lossy(*v as f64)).collect()).collect();
        let refs: Vec<&[T]> = imgs.iter().map(|v| v.as_slice()).collect();
        for p in model.encode_batch(&refs)? {
            mu.extend(p.mu);
            sigma.extend(p.sigma);
        }
    }
    LatentTable::new(dataset.ids.clone(), dataset.labels.clone(), mu, sigma, d, dataset.n_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            rows in proptest::collection::vec((0usize..4, proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)), 1..20),
        ) {
            let d = 3;
            let ids: Vec<String> = (0..rows.len()).map(|i| format!("s,{i}\"q")).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let mu: Vec<f64> = rows.iter().flat_map(|r| r.1[..d].to_vec()).collect();
            let sigma: Vec<f64> = rows.iter().flat_map(|r| r.1[d..].iter().map(|v| v.abs() + 1e-300).collect::<Vec<_>>()).collect();
            let t = LatentTable::new(ids, labels, mu, sigma, d, 4).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = LatentTable::<f64>::read_csv(buf.as_slice(), Some(4)).unwrap();
            prop_assert_eq!(back, t);
        }
    }

    #[test]
    fn header_layout() {
        let t = LatentTable::new(vec!["a".into()], vec![1], vec![0.5f32, -1.0], vec![1.0, 2.0], 2, 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,label,mu_1,mu_2,sigma_1,sigma_2\na,2,0.5,-1,1,2\n");
    }
}
