//! Prior configuration and the shrinkage hierarchies.
//!
//! Lasso: `beta_j | s_j ~ N(0, s_j)`, `s_j ~ Exp(rate r^2 / 2)`, which
//! marginally gives `beta_j ~ DE(0, rate r)` with `r = lambda * v`. Here `v`
//! is the residual precision `1 / sigma^2` for a continuous outcome and 1
//! otherwise.
//!
//! Horseshoe: `beta_j ~ N(0, lambda * g^2 * l_j^2)` with `g, l_j ~ C+(0, 1)`.
//! Each half-Cauchy scale is carried through the two-level inverse-gamma
//! expansion `l^2 | a ~ IG(1/2, 1/a)`, `a ~ IG(1/2, 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::OutcomeKind;
use crate::dist;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Penalty {
    None,
    Lasso { lambda: f64 },
    Horseshoe { lambda: f64 },
}

impl Penalty {
    pub fn name(&self) -> &'static str {
        match self {
            Penalty::None => "none",
            Penalty::Lasso { .. } => "lasso",
            Penalty::Horseshoe { .. } => "horseshoe",
        }
    }
}

/// Gamma-process prior on the cumulative baseline hazard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPrior {
    /// Confidence `c0` in the prior mean.
    pub c0: f64,
    /// Baseline rate `r`; the prior mean increment over `[t_m, t_m+1)` is
    /// `r * (t_m+1 - t_m)`.
    pub r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior variance of the intercept, and of every coefficient when
    /// unpenalized.
    pub beta_variance: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
    pub pz_a: f64,
    pub pz_b: f64,
    pub dirichlet_weight: f64,
    pub penalty: Penalty,
    pub survival: SurvivalPrior,
}

/// Vague defaults. Only the survival hyperparameters and the Beta/Dirichlet
/// weights depend on nothing but the outcome family.
pub fn default_priors(_kind: OutcomeKind) -> PriorConfig {
    PriorConfig {
        beta_variance: 1000.0,
        sigma2_shape: 0.01,
        sigma2_rate: 0.01,
        pz_a: 0.5,
        pz_b: 0.5,
        dirichlet_weight: 1.0,
        penalty: Penalty::None,
        survival: SurvivalPrior { c0: 0.001, r: 0.01 },
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_variance", self.beta_variance),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("pz_a", self.pz_a),
            ("pz_b", self.pz_b),
            ("dirichlet_weight", self.dirichlet_weight),
            ("c0", self.survival.c0),
            ("r", self.survival.r),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("prior", format!("{name} = {v} must be positive")));
            }
        }
        match self.penalty {
            Penalty::None => {}
            Penalty::Lasso { lambda } | Penalty::Horseshoe { lambda } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid(
                        "prior",
                        format!("lambda = {lambda} must be positive"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-chain shrinkage state.
#[derive(Clone, Debug, PartialEq)]
pub enum PenaltyAuxiliaries {
    None,
    Lasso {
        /// Conditional prior variance `s_j` of each coefficient.
        local_scale: Vec<f64>,
    },
    Horseshoe {
        /// Half-Cauchy local scales `l_j`.
        local: Vec<f64>,
        /// Expansion variables `a_j` for the local scales.
        local_aux: Vec<f64>,
        /// Half-Cauchy global scale `g`.
        global: f64,
        global_aux: f64,
    },
}

impl PenaltyAuxiliaries {
    /// All auxiliaries set to 1.
    pub fn init(penalty: &Penalty, n_predictors: usize) -> Self {
        match penalty {
            Penalty::None => PenaltyAuxiliaries::None,
            Penalty::Lasso { .. } => PenaltyAuxiliaries::Lasso {
                local_scale: vec![1.0; n_predictors],
            },
            Penalty::Horseshoe { .. } => PenaltyAuxiliaries::Horseshoe {
                local: vec![1.0; n_predictors],
                local_aux: vec![1.0; n_predictors],
                global: 1.0,
                global_aux: 1.0,
            },
        }
    }

    pub fn all_positive(&self) -> bool {
        let ok = |x: &f64| x.is_finite() && *x > 0.0;
        match self {
            PenaltyAuxiliaries::None => true,
            PenaltyAuxiliaries::Lasso { local_scale } => local_scale.iter().all(ok),
            PenaltyAuxiliaries::Horseshoe {
                local,
                local_aux,
                global,
                global_aux,
            } => {
                local.iter().all(ok) && local_aux.iter().all(ok) && ok(global) && ok(global_aux)
            }
        }
    }
}

/// Conditional prior variance of coefficient `j` given the auxiliaries.
pub fn beta_prior_variance(j: usize, aux: &PenaltyAuxiliaries, config: &PriorConfig) -> f64 {
    match (aux, config.penalty) {
        (PenaltyAuxiliaries::Lasso { local_scale }, Penalty::Lasso { .. }) => local_scale[j],
        (
            PenaltyAuxiliaries::Horseshoe { local, global, .. },
            Penalty::Horseshoe { lambda },
        ) => lambda * global * global * local[j] * local[j],
        _ => config.beta_variance,
    }
}

/// Double-exponential rate `lambda * precision`.
pub fn lasso_rate(lambda: f64, precision: f64) -> f64 {
    lambda * precision
}

/// Draws each `s_j` from its full conditional: `1 / s_j` is inverse-Gaussian
/// with mean `r / |beta_j|` and shape `r^2`.
pub fn update_lasso_auxiliaries<R: Rng + ?Sized>(
    aux: &mut PenaltyAuxiliaries,
    beta: &[f64],
    precision: f64,
    config: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    let lambda = match config.penalty {
        Penalty::Lasso { lambda } => lambda,
        _ => return Err(Error::invalid("penalty", "lasso update without lasso prior")),
    };
    let PenaltyAuxiliaries::Lasso { local_scale } = aux else {
        return Err(Error::invalid("penalty", "auxiliaries are not lasso"));
    };
    let r = lasso_rate(lambda, precision);
    for (s, &b) in local_scale.iter_mut().zip(beta) {
        if !b.is_finite() {
            return Err(Error::numerical("lasso auxiliary", format!("beta = {b}")));
        }
        let mean = if b == 0.0 { f64::INFINITY } else { r / b.abs() };
        let w = dist::inverse_gaussian(rng, mean, r * r)?;
        *s = (1.0 / w).clamp(f64::MIN_POSITIVE, f64::MAX);
    }
    Ok(())
}

/// Draws the local scales, then the global scale, each with its expansion
/// variable, from their inverse-gamma full conditionals.
pub fn update_horseshoe_auxiliaries<R: Rng + ?Sized>(
    aux: &mut PenaltyAuxiliaries,
    beta: &[f64],
    config: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    let lambda = match config.penalty {
        Penalty::Horseshoe { lambda } => lambda,
        _ => {
            return Err(Error::invalid(
                "penalty",
                "horseshoe update without horseshoe prior",
            ))
        }
    };
    let PenaltyAuxiliaries::Horseshoe {
        local,
        local_aux,
        global,
        global_aux,
    } = aux
    else {
        return Err(Error::invalid("penalty", "auxiliaries are not horseshoe"));
    };
    if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
        return Err(Error::numerical("horseshoe auxiliary", format!("beta = {b}")));
    }
    let g2 = *global * *global;
    for ((l, a), &b) in local.iter_mut().zip(local_aux.iter_mut()).zip(beta) {
        let l2 = dist::inv_gamma(rng, 1.0, 1.0 / *a + b * b / (2.0 * lambda * g2))?;
        *a = dist::inv_gamma(rng, 1.0, 1.0 + 1.0 / l2)?;
        *l = l2.sqrt();
    }
    let ss: f64 = beta
        .iter()
        .zip(local.iter())
        .map(|(&b, &l)| b * b / (2.0 * lambda * l * l))
        .sum();
    let shape = (beta.len() as f64 + 1.0) / 2.0;
    let new_g2 = dist::inv_gamma(rng, shape, 1.0 / *global_aux + ss)?;
    *global_aux = dist::inv_gamma(rng, 1.0, 1.0 + 1.0 / new_g2)?;
    *global = new_g2.sqrt();
    Ok(())
}

/// One half-Cauchy(0, 1) draw through the same two-level expansion the
/// sampler conditions on.
pub fn sample_half_cauchy_expansion<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    let a = dist::inv_gamma(rng, 0.5, 1.0)?;
    let x2 = dist::inv_gamma(rng, 0.5, 1.0 / a)?;
    Ok(x2.sqrt())
}

/// One draw of `beta` from the lasso hierarchy with rate `r`.
pub fn sample_lasso_hierarchy<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<f64> {
    let s = dist::gamma(rng, 1.0, rate * rate / 2.0)?;
    Ok(s.sqrt() * dist::std_normal(rng))
}
