//! Posterior sampling, the closed-form Gaussian KL and reconstruction terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softplus;
use crate::scalar::Scalar;

/// Diagonal Gaussian posterior `N(mu, diag(sigma²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Scalar> PosteriorParams<T> {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `z = mu + sigma ⊙ eps`.
pub fn reparameterize<T: Scalar>(p: &PosteriorParams<T>, eps: &[T]) -> Result<Vec<T>> {
    if eps.len() != p.dim() || p.sigma.len() != p.dim() {
        return Err(Error::contract(format!("eps has length {}, posterior has d = {}", eps.len(), p.dim())));
    }
    Ok(p.mu.iter().zip(&p.sigma).zip(eps).map(|((m, s), e)| *m + *s * *e).collect())
}

/// `KL(N(mu, sigma²) || N(0, I)) = -½ Σ (1 + ln sigma² − sigma² − mu²)`.
pub fn kl_divergence<T: Scalar>(p: &PosteriorParams<T>) -> Result<T> {
    if p.sigma.len() != p.mu.len() {
        return Err(Error::contract("mu and sigma differ in length"));
    }
    if let Some(s) = p.sigma.iter().find(|s| !(**s > T::zero())) {
        return Err(Error::contract(format!("sigma must be positive, got {s}")));
    }
    Ok(kl_from_logvar(&p.mu, &p.sigma.iter().map(|s| (*s * *s).ln()).collect::<Vec<_>>()))
}

/// KL in terms of the log-variance head output.
pub(crate) fn kl_from_logvar<T: Scalar>(mu: &[T], logvar: &[T]) -> T {
    let half = T::from_f64_lossy(0.5);
    mu.iter().zip(logvar).map(|(m, lv)| half * (lv.exp() + *m * *m - T::one() - *lv)).sum()
}

/// Reconstruction likelihood of the decoder output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconLoss {
    /// Per-pixel Bernoulli negative log-likelihood (binary cross-entropy).
    #[default]
    Bce,
    /// Summed squared error.
    Sse,
}

/// Summed Bernoulli NLL of targets `x` under probabilities `x_hat`, with the
/// `0·ln 0 = 0` convention.
pub fn bernoulli_nll<T: Scalar>(x: &[T], x_hat: &[T]) -> T {
    let term = |a: T, p: T| if a == T::zero() { T::zero() } else { -a * p.ln() };
    x.iter().zip(x_hat).map(|(a, p)| term(*a, *p) + term(T::one() - *a, T::one() - *p)).sum()
}

/// Reconstruction loss and its gradient with respect to the decoder logits.
pub(crate) fn recon_from_logits<T: Scalar>(kind: ReconLoss, x: T, logit: T) -> (T, T) {
    let p = crate::nn::sigmoid(logit);
    match kind {
        // softplus(l) − x·l is the BCE of x under sigmoid(l)
        ReconLoss::Bce => (softplus(logit) - x * logit, p - x),
        ReconLoss::Sse => {
            let d = p - x;
            (d * d, (d + d) * p * (T::one() - p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn post(mu: &[f64], sigma: &[f64]) -> PosteriorParams<f64> {
        PosteriorParams { mu: mu.to_vec(), sigma: sigma.to_vec() }
    }

    #[test]
    fn kl_closed_form_cases() {
        assert_eq!(kl_divergence(&post(&[0.0, 0.0], &[1.0, 1.0])).unwrap(), 0.0);
        assert!((kl_divergence(&post(&[1.0], &[1.0])).unwrap() - 0.5).abs() < 1e-15);
        let expected = -0.5 * (1.0 + 4f64.ln() - 4.0);
        assert!((kl_divergence(&post(&[0.0], &[2.0])).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.806_852_819_440_054_3).abs() < 1e-12);
    }

    #[test]
    fn kl_rejects_nonpositive_sigma() {
        assert!(kl_divergence(&post(&[0.0], &[0.0])).is_err());
        assert!(kl_divergence(&post(&[0.0], &[-1.0])).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo_for_wide_posterior() {
        // E_q[ln q(z) − ln p(z)] with z ~ N(0, 4)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let (mu, s) = (0.0f64, 2.0f64);
        let mut acc = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = mu + s * e;
            let log_q = -0.5 * e * e - s.ln();
            let log_p = -0.5 * z * z;
            acc += log_q - log_p;
        }
        let mc = acc / n as f64;
        let exact = kl_divergence(&post(&[mu], &[s])).unwrap();
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} exact {exact}");
    }

    #[test]
    fn reparameterize_cases() {
        let p = post(&[0.5, -1.0], &[0.3, 2.0]);
        assert_eq!(reparameterize(&p, &[0.0, 0.0]).unwrap(), p.mu);
        assert_eq!(reparameterize(&post(&[3.0], &[2.0]), &[1.0]).unwrap(), vec![5.0]);
        assert!(reparameterize(&p, &[0.0]).is_err());
    }

    #[test]
    fn reparameterized_standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 3;
        let p = post(&vec![0.0; d], &vec![1.0; d]);
        let n = 100_000;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..n {
            let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let z = reparameterize(&p, &eps).unwrap();
            for j in 0..d {
                sum[j] += z[j];
                sq[j] += z[j] * z[j];
            }
        }
        for j in 0..d {
            let mean = sum[j] / n as f64;
            let std = (sq[j] / n as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((0.98..=1.02).contains(&std), "std {std}");
        }
    }

    #[test]
    fn perfect_binary_reconstruction_has_zero_nll() {
        let x = [0.0f64, 1.0, 1.0, 0.0];
        assert_eq!(bernoulli_nll(&x, &x), 0.0);
        assert!(bernoulli_nll(&x, &[0.1, 0.9, 0.9, 0.1]) > 0.0);
    }

    #[test]
    fn logit_bce_matches_probability_bce() {
        for (x, l) in [(0.3f64, 1.2f64), (1.0, -0.7), (0.0, 3.0)] {
            let (v, _) = recon_from_logits(ReconLoss::Bce, x, l);
            let p = crate::nn::sigmoid(l);
            let direct = -(x * p.ln() + (1.0 - x) * (1.0 - p).ln());
            assert!((v - direct).abs() < 1e-12);
        }
    }
}
