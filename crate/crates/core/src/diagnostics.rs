//! Gelman–Rubin diagnostic and posterior summaries.

use serde::Serialize;

use crate::design::{OrdinalDesign, OutcomeKind};
use crate::error::{Error, Result};
use crate::sampler::DrawStore;
use crate::stats::{mean, quantile_sorted, variance};

/// Potential scale reduction factor of one scalar over several chains.
///
/// `sqrt(((n - 1) / n W + B / n) / W)` with `W` the mean within-chain
/// variance and `B` equal to `n` times the variance of the chain means.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientChains(chains.len()));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if let Some(c) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "chain length",
            expected: n,
            got: c.len(),
        });
    }
    let nf = n as f64;
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = nf * variance(&means);
    if !(w > 0.0) {
        return Err(Error::numerical(
            "gelman-rubin",
            "zero within-chain variance",
        ));
    }
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5% quantile.
    pub ci_low: f64,
    /// 97.5% quantile.
    pub ci_high: f64,
    /// `None` with fewer than two chains or when undefined.
    pub rhat: Option<f64>,
}

impl ParamSummary {
    fn from_chains(name: impl Into<String>, chains: &[&[f64]]) -> Result<Self> {
        let mut pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
        if pooled.is_empty() {
            return Err(Error::EmptyDraws);
        }
        pooled.sort_by(f64::total_cmp);
        let rhat = if chains.len() >= 2 {
            gelman_rubin(chains).ok()
        } else {
            None
        };
        Ok(ParamSummary {
            name: name.into(),
            mean: mean(&pooled),
            sd: variance(&pooled).sqrt(),
            ci_low: quantile_sorted(&pooled, 0.025),
            ci_high: quantile_sorted(&pooled, 0.975),
            rhat,
        })
    }

    /// The 95% interval excludes zero.
    pub fn excludes_zero(&self) -> bool {
        !(self.ci_low <= 0.0 && 0.0 <= self.ci_high)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictorSummary {
    pub name: String,
    pub beta: ParamSummary,
    /// Credible interval of `beta` excludes 0.
    pub selected: bool,
    /// `P(Z = 1)`.
    pub p_z1: f64,
    /// `P(tau = k, Z = 0)` for each admissible cutoff `k`.
    pub p_tau: Vec<(u32, f64)>,
    /// `P(Z = 1)` within each chain, for cross-chain agreement.
    pub p_z1_by_chain: Vec<f64>,
}

impl PredictorSummary {
    /// `P(tau = k, Z = 0)`, zero when `k` is not an admissible cutoff.
    pub fn p_tau(&self, k: u32) -> f64 {
        self.p_tau
            .iter()
            .find(|(c, _)| *c == k)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorSummary {
    /// Absent for the survival model, which has no intercept.
    pub alpha: Option<ParamSummary>,
    /// Continuous outcome only.
    pub sigma2: Option<ParamSummary>,
    pub predictors: Vec<PredictorSummary>,
    pub n_chains: usize,
    pub draws_per_chain: usize,
}

impl PosteriorSummary {
    /// Every continuous scalar with its name, in report order.
    pub fn scalars(&self) -> impl Iterator<Item = &ParamSummary> {
        self.alpha
            .iter()
            .chain(self.predictors.iter().map(|p| &p.beta))
            .chain(self.sigma2.iter())
    }
}

/// Pools the chains into per-parameter summaries; R-hat is computed when
/// there are at least two chains.
pub fn summarize(
    chains: &[DrawStore],
    design: &OrdinalDesign,
    kind: OutcomeKind,
) -> Result<PosteriorSummary> {
    if chains.is_empty() || chains.iter().all(|c| c.is_empty()) {
        return Err(Error::EmptyDraws);
    }
    let j = design.n_predictors();
    if let Some(c) = chains.iter().find(|c| c.n_predictors() != j) {
        return Err(Error::DimensionMismatch {
            what: "predictors in draw store",
            expected: j,
            got: c.n_predictors(),
        });
    }
    let slices = |f: &dyn Fn(&DrawStore) -> &[f64]| chains.iter().map(f).collect::<Vec<_>>();

    let alpha = match kind {
        OutcomeKind::Survival => None,
        _ => Some(ParamSummary::from_chains("alpha", &slices(&|c| &c.alpha))?),
    };
    let sigma2 = match kind {
        OutcomeKind::Continuous => Some(ParamSummary::from_chains("sigma2", &slices(&|c| &c.sigma2))?),
        _ => None,
    };
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut predictors = Vec::with_capacity(j);
    for (k, name) in design.names().iter().enumerate() {
        let beta = ParamSummary::from_chains(
            format!("beta_{name}"),
            &chains.iter().map(|c| c.beta[k].as_slice()).collect::<Vec<_>>(),
        )?;
        let linear: usize = chains
            .iter()
            .map(|c| c.z[k].iter().filter(|&&z| z == 1).count())
            .sum();
        let p_tau = design
            .cutoffs(k)
            .iter()
            .map(|&cut| {
                let count: usize = chains
                    .iter()
                    .map(|c| {
                        c.z[k]
                            .iter()
                            .zip(&c.tau[k])
                            .filter(|(&z, &t)| z == 0 && t == cut)
                            .count()
                    })
                    .sum();
                (cut, count as f64 / total as f64)
            })
            .collect();
        let p_z1_by_chain = chains
            .iter()
            .map(|c| c.z[k].iter().filter(|&&z| z == 1).count() as f64 / c.len() as f64)
            .collect();
        predictors.push(PredictorSummary {
            name: name.clone(),
            selected: beta.excludes_zero(),
            beta,
            p_z1: linear as f64 / total as f64,
            p_tau,
            p_z1_by_chain,
        });
    }
    Ok(PosteriorSummary {
        alpha,
        sigma2,
        predictors,
        n_chains: chains.len(),
        draws_per_chain: chains[0].len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ConvergenceStatus {
    Passed,
    /// Parameters whose R-hat reached the threshold (NaN when undefined).
    Failed { offenders: Vec<(String, f64)> },
    /// Fewer than two chains.
    NotAssessable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub threshold: f64,
    pub status: ConvergenceStatus,
    pub rhats: Vec<(String, Option<f64>)>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.status == ConvergenceStatus::Passed
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.status {
            ConvergenceStatus::Passed => {
                out.push_str(&format!("convergence: passed (all R-hat < {})\n", self.threshold))
            }
            ConvergenceStatus::Failed { offenders } => {
                out.push_str(&format!(
                    "convergence: FAILED ({} parameter(s) with R-hat >= {})\n",
                    offenders.len(),
                    self.threshold
                ));
                for (name, r) in offenders {
                    out.push_str(&format!("  {name}: {r:.4}\n"));
                }
            }
            ConvergenceStatus::NotAssessable => {
                out.push_str("convergence: not assessable (R-hat needs at least two chains)\n")
            }
        }
        for (name, r) in &self.rhats {
            match r {
                Some(r) => out.push_str(&format!("rhat {name} {r:.6}\n")),
                None => out.push_str(&format!("rhat {name} NA\n")),
            }
        }
        out
    }
}

/// Passes iff every listed R-hat is below `threshold`.
pub fn check_rhats(rhats: Vec<(String, Option<f64>)>, n_chains: usize, threshold: f64) -> ConvergenceReport {
    let status = if n_chains < 2 {
        ConvergenceStatus::NotAssessable
    } else {
        let offenders: Vec<(String, f64)> = rhats
            .iter()
            .filter_map(|(name, r)| match r {
                Some(r) if *r < threshold => None,
                Some(r) => Some((name.clone(), *r)),
                None => Some((name.clone(), f64::NAN)),
            })
            .collect();
        if offenders.is_empty() {
            ConvergenceStatus::Passed
        } else {
            ConvergenceStatus::Failed { offenders }
        }
    };
    ConvergenceReport {
        threshold,
        status,
        rhats,
    }
}

/// R-hat check over the continuous scalars (intercept, coefficients,
/// `sigma^2`); the discrete `z` and `tau` are reported through
/// `p_z1_by_chain` instead.
pub fn check_convergence(summary: &PosteriorSummary, threshold: f64) -> ConvergenceReport {
    let rhats = summary
        .scalars()
        .map(|p| (p.name.clone(), p.rhat))
        .collect();
    check_rhats(rhats, summary.n_chains, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::DrawStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_chains_hit_the_floor() {
        let a = [1.0, 2.0, 3.0];
        let r = gelman_rubin(&[&a, &a]).unwrap();
        assert!((r - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.8165).abs() < 1e-4);
        for n in [2usize, 10, 1000] {
            let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let r = gelman_rubin(&[&c, &c]).unwrap();
            assert!((r - ((n as f64 - 1.0) / n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_chains_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..1000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let b: Vec<f64> = (0..1000)
            .map(|_| 5.0 + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let r = gelman_rubin(&[&a, &b]).unwrap();
        // oracle: direct formula on the generated data
        let n = 1000.0;
        let w = (variance(&a) + variance(&b)) / 2.0;
        let means = [mean(&a), mean(&b)];
        let bb = n * variance(&means);
        let expected = (((n - 1.0) / n * w + bb / n) / w).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!(r > 2.0, "{r}");
    }

    #[test]
    fn gelman_rubin_errors() {
        let a = [1.0, 2.0];
        assert!(matches!(
            gelman_rubin(&[&a]),
            Err(Error::InsufficientChains(1))
        ));
        let z = [3.0, 3.0];
        assert!(matches!(gelman_rubin(&[&z, &z]), Err(Error::Numerical { .. })));
    }

    fn one_predictor_design() -> OrdinalDesign {
        OrdinalDesign::new(vec!["x".into()], vec![vec![0, 1, 2, 3, 0, 1, 2, 3]], 1).unwrap()
    }

    fn store(beta: Vec<f64>, z: Vec<u8>, tau: Vec<u32>) -> DrawStore {
        let n = beta.len();
        DrawStore {
            iteration: (0..n).collect(),
            alpha: vec![0.0; n],
            beta: vec![beta],
            sigma2: vec![1.0; n],
            pz: vec![0.5; n],
            z: vec![z],
            tau: vec![tau],
            ..Default::default()
        }
    }

    #[test]
    fn constant_draws() {
        let d = one_predictor_design();
        let s = summarize(
            &[store(vec![0.7; 4], vec![1; 4], vec![0; 4])],
            &d,
            OutcomeKind::Continuous,
        )
        .unwrap();
        let b = &s.predictors[0].beta;
        assert_eq!((b.mean, b.sd, b.ci_low, b.ci_high), (0.7, 0.0, 0.7, 0.7));
        assert!(s.predictors[0].selected);
        let s0 = summarize(
            &[store(vec![0.0; 4], vec![1; 4], vec![0; 4])],
            &d,
            OutcomeKind::Continuous,
        )
        .unwrap();
        assert!(!s0.predictors[0].selected);
    }

    #[test]
    fn counting_probabilities() {
        let d = one_predictor_design();
        let s = summarize(
            &[store(vec![0.1, 0.2, 0.3, 0.4], vec![1, 1, 0, 0], vec![0, 0, 2, 2])],
            &d,
            OutcomeKind::Binary,
        )
        .unwrap();
        let p = &s.predictors[0];
        assert_eq!(p.p_z1, 0.5);
        assert_eq!(p.p_tau(2), 0.5);
        assert_eq!(p.p_tau(1), 0.0);
        assert!(s.sigma2.is_none());
        assert!(summarize(&[], &d, OutcomeKind::Binary).is_err());
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        let d = one_predictor_design();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws: Vec<f64> = (0..1001)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let s = summarize(
            &[store(draws.clone(), vec![1; 1001], vec![0; 1001])],
            &d,
            OutcomeKind::Continuous,
        )
        .unwrap();
        // with 1001 draws, positions 25 and 975 are exact order statistics
        let mut sorted = draws;
        sorted.sort_by(f64::total_cmp);
        assert_eq!(s.predictors[0].beta.ci_low, sorted[25]);
        assert_eq!(s.predictors[0].beta.ci_high, sorted[975]);
    }

    #[test]
    fn convergence_thresholds() {
        let ok = check_rhats(vec![("a".into(), Some(1.0)), ("b".into(), Some(1.0))], 2, 1.1);
        assert!(ok.passed());
        let bad = check_rhats(vec![("a".into(), Some(1.0)), ("b".into(), Some(1.5))], 2, 1.1);
        match &bad.status {
            ConvergenceStatus::Failed { offenders } => {
                assert_eq!(offenders, &vec![("b".to_string(), 1.5)])
            }
            other => panic!("{other:?}"),
        }
        let loose = check_rhats(vec![("a".into(), Some(1.0)), ("b".into(), Some(1.5))], 2, 2.0);
        assert!(loose.passed());
        let single = check_rhats(vec![("a".into(), None)], 1, 1.1);
        assert_eq!(single.status, ConvergenceStatus::NotAssessable);
        assert!(single.render().contains("not assessable"));
    }

    mod props {
        use super::super::*;
        use super::store;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_and_reorder_invariance(
                draws in prop::collection::vec((-3.0f64..3.0, 0usize..4), 2..60),
                seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let d = super::one_predictor_design();
                let beta: Vec<f64> = draws.iter().map(|x| x.0).collect();
                let z: Vec<u8> = draws.iter().map(|x| u8::from(x.1 == 0)).collect();
                let tau: Vec<u32> = draws.iter().map(|x| x.1 as u32).collect();
                let s = summarize(&[store(beta.clone(), z.clone(), tau.clone())], &d, OutcomeKind::Continuous).unwrap();
                let p = &s.predictors[0];
                let total = p.p_z1 + p.p_tau.iter().map(|x| x.1).sum::<f64>();
                prop_assert!((total - 1.0).abs() < 1e-12);

                let mut idx: Vec<usize> = (0..beta.len()).collect();
                idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let s2 = summarize(&[store(
                    idx.iter().map(|&i| beta[i]).collect(),
                    idx.iter().map(|&i| z[i]).collect(),
                    idx.iter().map(|&i| tau[i]).collect(),
                )], &d, OutcomeKind::Continuous).unwrap();
                let (a, b) = (&s.predictors[0], &s2.predictors[0]);
                prop_assert!((a.beta.mean - b.beta.mean).abs() < 1e-12);
                prop_assert!((a.beta.sd - b.beta.sd).abs() < 1e-12);
                prop_assert_eq!(a.beta.ci_low, b.beta.ci_low);
                prop_assert_eq!(a.beta.ci_high, b.beta.ci_high);
                prop_assert_eq!(a.p_z1, b.p_z1);
                prop_assert_eq!(&a.p_tau, &b.p_tau);
            }

            #[test]
            fn rhat_affine_invariant(
                a in prop::collection::vec(-5.0f64..5.0, 5..40),
                shift in -10.0f64..10.0,
                scale in 0.1f64..10.0,
            ) {
                let b: Vec<f64> = a.iter().rev().map(|x| x * 0.5 + 1.0).collect();
                prop_assume!(variance(&a) > 1e-6 && variance(&b) > 1e-6);
                let r1 = gelman_rubin(&[&a, &b]).unwrap();
                let ta: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
                let tb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
                let r2 = gelman_rubin(&[&ta, &tb]).unwrap();
                prop_assert!((r1 - r2).abs() < 1e-9 * r1.max(1.0));
            }
        }
    }
}
