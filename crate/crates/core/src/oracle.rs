//! Exact posterior over configurations for small continuous-outcome
//! instances, independent of the sampler.
//!
//! The coefficients `(alpha, beta)` have independent `N(0, V)` priors and
//! `sigma^2 ~ IG(a, b)`. Given `sigma^2` the coefficients integrate out in
//! closed form through an eigendecomposition of `X'X`. The remaining
//! one-dimensional integral over `log sigma^2` uses composite Simpson on a
//! bracket located around the integrand's peak. `p_z` and `pi_j` integrate
//! out as Beta-Bernoulli and Dirichlet-categorical factors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::design::{OrdinalDesign, OutcomeData, TransformConfig};
use crate::error::{Error, Result};
use crate::priors::{Penalty, PriorConfig};

pub const DEFAULT_CONFIG_CAP: usize = 4096;

/// Simpson intervals over the located `log sigma^2` bracket.
const SIMPSON_INTERVALS: usize = 4000;
/// Log-density drop defining the bracket edges.
const BRACKET_DROP: f64 = 60.0;

#[derive(Clone, Debug, Serialize)]
pub struct ExactPosterior {
    /// One entry per predictor for each configuration.
    pub configs: Vec<Vec<TransformConfig>>,
    pub probs: Vec<f64>,
    /// Posterior mean of `beta` within each configuration.
    pub beta_mean: Vec<Vec<f64>>,
    /// `P(Z_j = 1)`.
    pub p_z1: Vec<f64>,
    /// `P(tau_j = k, Z_j = 0)` for each admissible cutoff.
    pub p_tau: Vec<Vec<(u32, f64)>>,
    /// Log evidence of each configuration (data and configuration prior).
    pub log_weights: Vec<f64>,
}

impl ExactPosterior {
    pub fn p_tau(&self, j: usize, k: u32) -> f64 {
        self.p_tau[j]
            .iter()
            .find(|(c, _)| *c == k)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    /// Index of a configuration, if present.
    pub fn find(&self, config: &[TransformConfig]) -> Option<usize> {
        self.configs.iter().position(|c| c == config)
    }
}

/// Every configuration in lexicographic order of per-predictor config
/// indices (linear first).
fn all_configs(design: &OrdinalDesign, cap: usize) -> Result<Vec<Vec<usize>>> {
    let mut count: usize = 1;
    for j in 0..design.n_predictors() {
        count = count.saturating_mul(design.n_configs(j));
    }
    if count > cap {
        return Err(Error::TooManyConfigurations { count, cap });
    }
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; design.n_predictors()];
    loop {
        out.push(idx.clone());
        let mut j = idx.len();
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < design.n_configs(j) {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Log prior of a configuration with `p_z` and `pi_j` integrated out.
fn log_config_prior(design: &OrdinalDesign, idx: &[usize], priors: &PriorConfig) -> f64 {
    let linear = idx.iter().filter(|&&c| c == 0).count() as f64;
    let threshold = idx.len() as f64 - linear;
    let mut lp = ln_beta(priors.pz_a + linear, priors.pz_b + threshold)
        - ln_beta(priors.pz_a, priors.pz_b);
    for (j, &c) in idx.iter().enumerate() {
        if c > 0 {
            // symmetric Dirichlet: each cutoff has prior mass 1 / |C_j|
            lp -= (design.cutoffs(j).len() as f64).ln();
        }
    }
    lp
}

/// Spectral pieces of one configuration's design needed for every `sigma^2`.
struct Spectral {
    eig: DVector<f64>,
    vectors: DMatrix<f64>,
    /// `Q' X' y`.
    proj: DVector<f64>,
    yty: f64,
    n: f64,
}

impl Spectral {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let se = SymmetricEigen::new(x.tr_mul(x));
        let proj = se.eigenvectors.tr_mul(&x.tr_mul(y));
        Spectral {
            eig: se.eigenvalues.map(|v| v.max(0.0)),
            vectors: se.eigenvectors,
            proj,
            yty: y.dot(y),
            n: x.nrows() as f64,
        }
    }

    /// `log p(y | sigma^2)` with the coefficients integrated out.
    fn log_lik(&self, sigma2: f64, v: f64) -> f64 {
        let p = self.eig.len() as f64;
        let mut log_det = 0.0;
        let mut quad = 0.0;
        for (lam, b) in self.eig.iter().zip(self.proj.iter()) {
            let d = lam / sigma2 + 1.0 / v;
            log_det += d.ln();
            quad += (b / sigma2).powi(2) / d;
        }
        -0.5 * self.n * (2.0 * std::f64::consts::PI * sigma2).ln()
            - 0.5 * p * v.ln()
            - 0.5 * log_det
            - 0.5 * (self.yty / sigma2 - quad)
    }

    /// Conditional posterior mean of the coefficients given `sigma^2`.
    fn coef_mean(&self, sigma2: f64, v: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.eig.len(),
            self.eig
                .iter()
                .zip(self.proj.iter())
                .map(|(lam, b)| (b / sigma2) / (lam / sigma2 + 1.0 / v)),
        );
        &self.vectors * scaled
    }
}

/// `log` of the inverse-gamma density of `sigma^2 = e^u` times the Jacobian.
fn log_prior_u(u: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - shape * u - rate * (-u).exp()
}

/// `(log evidence, E[beta | y])` for one configuration design.
fn integrate_sigma2(sp: &Spectral, priors: &PriorConfig) -> Result<(f64, Vec<f64>)> {
    let v = priors.beta_variance;
    let f = |u: f64| sp.log_lik(u.exp(), v) + log_prior_u(u, priors.sigma2_shape, priors.sigma2_rate);
    // coarse scan for the peak and the bracket
    let (lo, hi, step) = (-60.0, 60.0, 0.05);
    let n_coarse = ((hi - lo) / step) as usize;
    let coarse: Vec<(f64, f64)> = (0..=n_coarse)
        .map(|i| {
            let u = lo + i as f64 * step;
            (u, f(u))
        })
        .collect();
    let peak = coarse
        .iter()
        .filter(|(_, l)| l.is_finite())
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::numerical("oracle", "sigma^2 integrand has no finite value"));
    }
    let inside: Vec<f64> = coarse
        .iter()
        .filter(|(_, l)| *l > peak - BRACKET_DROP)
        .map(|(u, _)| *u)
        .collect();
    let a = inside.first().copied().unwrap_or(lo) - step;
    let b = inside.last().copied().unwrap_or(hi) + step;
    let h = (b - a) / SIMPSON_INTERVALS as f64;
    let mut logs = Vec::with_capacity(SIMPSON_INTERVALS + 1);
    let mut weights = Vec::with_capacity(SIMPSON_INTERVALS + 1);
    for i in 0..=SIMPSON_INTERVALS {
        let u = a + i as f64 * h;
        let w = if i == 0 || i == SIMPSON_INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        logs.push(f(u));
        weights.push(w * h / 3.0);
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut mean = DVector::<f64>::zeros(sp.eig.len());
    for (i, (l, w)) in logs.iter().zip(&weights).enumerate() {
        let mass = w * (l - m).exp();
        if mass == 0.0 {
            continue;
        }
        total += mass;
        let u = a + i as f64 * h;
        mean += sp.coef_mean(u.exp(), v) * mass;
    }
    mean /= total;
    Ok((m + total.ln(), mean.iter().skip(1).copied().collect()))
}

/// Exact posterior over all `(z, tau)` configurations.
pub fn enumerate_posterior(
    design: &OrdinalDesign,
    outcome: &OutcomeData,
    priors: &PriorConfig,
) -> Result<ExactPosterior> {
    enumerate_posterior_capped(design, outcome, priors, DEFAULT_CONFIG_CAP)
}

pub fn enumerate_posterior_capped(
    design: &OrdinalDesign,
    outcome: &OutcomeData,
    priors: &PriorConfig,
    cap: usize,
) -> Result<ExactPosterior> {
    let OutcomeData::Continuous(y) = outcome else {
        return Err(Error::invalid("oracle outcome", "only continuous outcomes are supported"));
    };
    if priors.penalty != Penalty::None {
        return Err(Error::UnsupportedPenalty);
    }
    priors.validate()?;
    outcome.validate(design.n())?;
    let idxs = all_configs(design, cap)?;
    let yv = DVector::from_column_slice(y);
    let n = design.n();
    let results: Vec<(f64, Vec<f64>)> = idxs
        .par_iter()
        .map(|idx| {
            let mut x = DMatrix::<f64>::zeros(n, idx.len() + 1);
            x.column_mut(0).fill(1.0);
            for (j, &c) in idx.iter().enumerate() {
                x.column_mut(j + 1).copy_from_slice(design.transformed(j, c));
            }
            let (le, mean) = integrate_sigma2(&Spectral::new(&x, &yv), priors)?;
            Ok((le + log_config_prior(design, idx, priors), mean))
        })
        .collect::<Result<_>>()?;
    let log_weights: Vec<f64> = results.iter().map(|r| r.0).collect();
    let probs = crate::dist::normalize_log_weights(&log_weights)?;
    let configs: Vec<Vec<TransformConfig>> = idxs
        .iter()
        .map(|idx| idx.iter().enumerate().map(|(j, &c)| design.config(j, c)).collect())
        .collect();
    let jn = design.n_predictors();
    let mut p_z1 = vec![0.0; jn];
    let mut p_tau: Vec<Vec<(u32, f64)>> = (0..jn)
        .map(|j| design.cutoffs(j).iter().map(|&k| (k, 0.0)).collect())
        .collect();
    for (idx, p) in idxs.iter().zip(&probs) {
        for (j, &c) in idx.iter().enumerate() {
            if c == 0 {
                p_z1[j] += p;
            } else {
                p_tau[j][c - 1].1 += p;
            }
        }
    }
    Ok(ExactPosterior {
        configs,
        probs,
        beta_mean: results.into_iter().map(|r| r.1).collect(),
        p_z1,
        p_tau,
        log_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::default_priors;
    use crate::design::OutcomeKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn levels(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
        // every level present so all three cutoffs are admissible
        (0..n).map(|i| if i < 4 { i as u32 } else { rng.random_range(0..4) }).collect()
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn brute_force_evidence() {
        // n = 10, one predictor; compare one configuration's evidence with a
        // 3-D Simpson integral over (alpha, beta, log sigma^2)
        let x = vec![0u32, 1, 2, 3, 0, 1, 2, 3, 1, 2];
        let y = vec![0.3, 0.9, 2.1, 2.2, -0.4, 1.1, 1.8, 3.1, 0.2, 2.4];
        let design = OrdinalDesign::new(vec!["x".into()], vec![x], 1).unwrap();
        let mut priors = default_priors(OutcomeKind::Continuous);
        priors.beta_variance = 4.0;
        priors.sigma2_shape = 2.0;
        priors.sigma2_rate = 1.0;
        let exact = enumerate_posterior(&design, &OutcomeData::Continuous(y.clone()), &priors).unwrap();
        let c = exact.find(&[TransformConfig::Threshold(2)]).unwrap();
        let f = design.transformed(0, 2).to_vec();
        let prior_lp = log_config_prior(&design, &[2], &priors);

        let simpson = |lo: f64, hi: f64, m: usize| -> Vec<(f64, f64)> {
            let h = (hi - lo) / m as f64;
            (0..=m)
                .map(|i| {
                    let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    (lo + i as f64 * h, w * h / 3.0)
                })
                .collect()
        };
        let ga = simpson(-4.0, 6.0, 200);
        let gb = simpson(-6.0, 6.0, 240);
        let gu = simpson(-6.0, 2.5, 340);
        let v = priors.beta_variance;
        let norm_lp = |t: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * t * t / v;
        let mut total = 0.0;
        let shift = -5.0;
        for &(u, wu) in &gu {
            let s2 = f64::exp(u);
            let lpu = log_prior_u(u, priors.sigma2_shape, priors.sigma2_rate);
            for &(a, wa) in &ga {
                for &(b, wb) in &gb {
                    let mut ll = -0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI * s2).ln();
                    let mut rss = 0.0;
                    for (yi, fi) in y.iter().zip(&f) {
                        let r = yi - a - b * fi;
                        rss += r * r;
                    }
                    ll -= 0.5 * rss / s2;
                    total += wu * wa * wb * (ll + lpu + norm_lp(a) + norm_lp(b) - shift).exp();
                }
            }
        }
        let brute = total.ln() + shift + prior_lp;
        let rel = ((exact.log_weights[c] - brute).exp() - 1.0).abs();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn noise_only_is_near_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = levels(&mut rng, 20);
        let y = noise(&mut rng, 20);
        let design = OrdinalDesign::new(vec!["x".into()], vec![x], 1).unwrap();
        let post = enumerate_posterior(
            &design,
            &OutcomeData::Continuous(y),
            &default_priors(OutcomeKind::Continuous),
        )
        .unwrap();
        assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((post.p_z1[0] - 0.5).abs() < 0.1, "{}", post.p_z1[0]);
    }

    #[test]
    fn strong_jump_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = levels(&mut rng, 40);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 5.0 * f64::from(u8::from(v < 2)) + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = OrdinalDesign::new(vec!["x".into()], vec![x], 1).unwrap();
        let post = enumerate_posterior(
            &design,
            &OutcomeData::Continuous(y),
            &default_priors(OutcomeKind::Continuous),
        )
        .unwrap();
        assert!(post.p_tau(0, 2) > 0.95, "{:?}", post.p_tau);
        let c = post.find(&[TransformConfig::Threshold(2)]).unwrap();
        assert!((post.beta_mean[c][0] - 5.0).abs() < 1.0);
    }

    #[test]
    fn duplicate_columns_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = levels(&mut rng, 20);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| f64::from(v) * 0.6 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design =
            OrdinalDesign::new(vec!["a".into(), "b".into()], vec![x.clone(), x], 1).unwrap();
        let post = enumerate_posterior(
            &design,
            &OutcomeData::Continuous(y),
            &default_priors(OutcomeKind::Continuous),
        )
        .unwrap();
        for (cfg, p) in post.configs.iter().zip(&post.probs) {
            let swapped = post.find(&[cfg[1], cfg[0]]).unwrap();
            assert!((post.probs[swapped] - p).abs() < 1e-10);
        }
        assert!((post.p_z1[0] - post.p_z1[1]).abs() < 1e-10);
    }

    #[test]
    fn affine_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = levels(&mut rng, 20);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| f64::from(u8::from(v < 3)) + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = OrdinalDesign::new(vec!["x".into()], vec![x], 1).unwrap();
        let priors = default_priors(OutcomeKind::Continuous);
        let base = enumerate_posterior(&design, &OutcomeData::Continuous(y.clone()), &priors).unwrap();
        let c = 7.5;
        let mut scaled = priors.clone();
        scaled.beta_variance *= c * c;
        scaled.sigma2_rate *= c * c;
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        let post = enumerate_posterior(&design, &OutcomeData::Continuous(yc), &scaled).unwrap();
        for (a, b) in base.probs.iter().zip(&post.probs) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        for (a, b) in base.beta_mean.iter().zip(&post.beta_mean) {
            assert!((a[0] * c - b[0]).abs() < 1e-6 * c.max(b[0].abs()));
        }
    }

    #[test]
    fn contract_errors() {
        let design = OrdinalDesign::new(
            (0..7).map(|j| format!("x{j}")).collect(),
            (0..7).map(|j| (0..8).map(|i| ((i + j) % 4) as u32).collect()).collect(),
            1,
        )
        .unwrap();
        let y = OutcomeData::Continuous((0..8).map(f64::from).collect());
        let priors = default_priors(OutcomeKind::Continuous);
        // 4^7 = 16384 configurations
        assert!(matches!(
            enumerate_posterior(&design, &y, &priors),
            Err(Error::TooManyConfigurations { count: 16384, cap: 4096 })
        ));
        let small = OrdinalDesign::new(vec!["x".into()], vec![vec![0, 1, 2, 3]], 1).unwrap();
        let mut lasso = priors.clone();
        lasso.penalty = Penalty::Lasso { lambda: 1.0 };
        assert!(matches!(
            enumerate_posterior(&small, &OutcomeData::Continuous(vec![0.0, 1.0, 0.5, 2.0]), &lasso),
            Err(Error::UnsupportedPenalty)
        ));
    }
}
