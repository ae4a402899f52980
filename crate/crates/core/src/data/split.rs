use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledImageSet;
use crate::error::{Error, Result};

/// Disjoint, covering index sets into the source dataset (each sorted ascending).
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Largest-remainder apportionment of `n` by `ratios`; ties go to the earlier split.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for k in 0..3 {
        counts[k] = exact[k].floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| (exact[*b] - exact[*b].floor()).total_cmp(&(exact[*a] - exact[*a].floor())).then(a.cmp(b)));
    let mut left = n - counts.iter().sum::<usize>();
    for k in order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified train/val/test split with a seeded shuffle.
///
/// Split sizes equal the largest-remainder apportionment of `N`, and each
/// class's share of every split is within one sample of its exact proportion.
pub fn split(dataset: &LabeledImageSet, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n_splits = ratios.iter().filter(|r| **r > 0.0).count();
    let n_classes = dataset.n_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        members[l].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < n_splits {
            return Err(Error::Stratification(format!(
                "class `{}` has {} samples, fewer than {n_splits} splits",
                dataset.class_names[c],
                m.len()
            )));
        }
    }

    // Per-class floors, then hand out each class's leftovers (at most one per
    // split) to the splits with the largest unmet global demand.
    let totals = apportion(dataset.len(), &ratios);
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(n_classes);
    let mut fracs: Vec<[f64; 3]> = Vec::with_capacity(n_classes);
    for m in &members {
        let exact: Vec<f64> = ratios.iter().map(|r| r * m.len() as f64).collect();
        alloc.push([exact[0].floor() as usize, exact[1].floor() as usize, exact[2].floor() as usize]);
        fracs.push([exact[0] - exact[0].floor(), exact[1] - exact[1].floor(), exact[2] - exact[2].floor()]);
    }
    let mut demand: [i64; 3] = [0; 3];
    for k in 0..3 {
        demand[k] = totals[k] as i64 - alloc.iter().map(|a| a[k] as i64).sum::<i64>();
    }
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    let leftover = |c: usize, alloc: &[[usize; 3]]| members[c].len() - alloc[c].iter().sum::<usize>();
    class_order.sort_by_key(|&c| (std::cmp::Reverse(leftover(c, &alloc)), c));
    for c in class_order {
        let extra = leftover(c, &alloc);
        let mut ks: Vec<usize> = (0..3).filter(|k| ratios[*k] > 0.0).collect();
        ks.sort_by(|a, b| demand[*b].cmp(&demand[*a]).then(fracs[c][*b].total_cmp(&fracs[c][*a])).then(a.cmp(b)));
        for &k in ks.iter().take(extra) {
            alloc[c][k] += 1;
            demand[k] -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Splits { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (c, m) in members.iter().enumerate() {
        let mut idx = m.clone();
        idx.shuffle(&mut rng);
        let [a, b, _] = alloc[c];
        out.train.extend_from_slice(&idx[..a]);
        out.val.extend_from_slice(&idx[a..a + b]);
        out.test.extend_from_slice(&idx[a + b..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
