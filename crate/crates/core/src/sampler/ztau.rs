//! Joint update of `(z_j, tau_j)` by enumerating every configuration of one
//! predictor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::glm::GlmFamily;
use super::{MixtureState, Model};
use crate::dist;
use crate::error::{Error, Result};
use crate::priors::beta_prior_variance;

/// How the coefficients are handled while enumerating configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZtauMode {
    /// Continuous outcome only: the intercept and all coefficients are
    /// integrated out under their conditional normal priors, given `sigma^2`.
    Collapsed,
    /// Coefficients held at their current values.
    FixedBeta,
}

/// `log p_z` for the linear form, `log (1 - p_z) + log pi_jk` for cutoff k.
pub fn config_log_prior(j: usize, c: usize, state: &MixtureState) -> f64 {
    if c == 0 {
        state.pz.ln()
    } else {
        (1.0 - state.pz).ln() + state.pi[j][c - 1].ln()
    }
}

/// Unnormalized log full-conditional weight of every configuration of
/// predictor `j`, indexed as in [`crate::design::OrdinalDesign::config`].
pub fn ztau_log_weights(
    j: usize,
    state: &MixtureState,
    model: &Model<'_>,
    mode: ZtauMode,
) -> Result<Vec<f64>> {
    let loglik = match mode {
        ZtauMode::Collapsed => collapsed_log_marginals(j, state, model)?,
        ZtauMode::FixedBeta => fixed_beta_log_likelihoods(j, state, model)?,
    };
    Ok(loglik
        .into_iter()
        .enumerate()
        .map(|(c, l)| l + config_log_prior(j, c, state))
        .collect())
}

/// Draws a new configuration for predictor `j` and returns the normalized
/// probabilities it was drawn from.
pub fn update_ztau<R: Rng + ?Sized>(
    j: usize,
    state: &mut MixtureState,
    model: &Model<'_>,
    mode: ZtauMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let weights = ztau_log_weights(j, state, model, mode)?;
    let (c, probs) = dist::categorical_from_log(rng, &weights).map_err(|e| {
        Error::numerical(
            format!("(z, tau) update of predictor {}", model.design.names()[j]),
            e.to_string(),
        )
    })?;
    state.configs[j] = model.design.config(j, c);
    Ok(probs)
}

fn fixed_beta_log_likelihoods(
    j: usize,
    state: &MixtureState,
    model: &Model<'_>,
) -> Result<Vec<f64>> {
    let design = model.design;
    let family = GlmFamily::from_model(model, state);
    let mut eta = state.eta(design)?;
    let current = design
        .config_index(j, state.configs[j])
        .expect("state config admissible");
    let b = state.beta[j];
    for (e, f) in eta.iter_mut().zip(design.transformed(j, current)) {
        *e -= b * f;
    }
    let offset = eta;
    let mut trial = offset.clone();
    (0..design.n_configs(j))
        .map(|c| {
            for ((t, o), f) in trial.iter_mut().zip(&offset).zip(design.transformed(j, c)) {
                *t = o + b * f;
            }
            let l = family.log_likelihood(&trial);
            if l.is_nan() {
                Err(Error::numerical("fixed-beta enumeration", "NaN log likelihood"))
            } else {
                Ok(l)
            }
        })
        .collect()
}

/// Log marginal likelihood of `y` for each configuration of predictor `j`,
/// up to a constant shared by all of them, with `(alpha, beta)` integrated
/// out and `sigma^2` fixed.
///
/// With `X = [X_-j, f]` and posterior precision `P = X'X / s2 + D`, the
/// config-dependent part is `-log|P| / 2 + b' P^-1 b / 2`, `b = X'y / s2`.
/// Both pieces are computed from one factorization of the `X_-j` block via
/// the Schur complement of the `f` column.
fn collapsed_log_marginals(
    j: usize,
    state: &MixtureState,
    model: &Model<'_>,
) -> Result<Vec<f64>> {
    let y = match model.outcome {
        crate::design::OutcomeData::Continuous(y) => y,
        _ => {
            return Err(Error::invalid(
                "(z, tau) update",
                "collapsed enumeration needs a continuous outcome",
            ))
        }
    };
    let design = model.design;
    let n = design.n();
    let s2 = state.sigma2;
    let ones = vec![1.0; n];

    let mut cols: Vec<&[f64]> = Vec::with_capacity(design.n_predictors());
    let mut prior_prec: Vec<f64> = Vec::with_capacity(design.n_predictors());
    cols.push(&ones);
    prior_prec.push(1.0 / model.priors.beta_variance);
    for k in (0..design.n_predictors()).filter(|&k| k != j) {
        let c = design
            .config_index(k, state.configs[k])
            .expect("state config admissible");
        cols.push(design.transformed(k, c));
        prior_prec.push(1.0 / beta_prior_variance(k, &state.penalty_aux, model.priors));
    }
    let p = cols.len();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let v = dot(cols[a], cols[b]) / s2;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        gram[(a, a)] += prior_prec[a];
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::numerical("collapsed (z, tau) update", "posterior precision not positive definite")
    })?;
    let l = chol.l();
    let xty = DVector::from_iterator(p, cols.iter().map(|c| dot(c, y) / s2));
    let q = l
        .solve_lower_triangular(&xty)
        .ok_or_else(|| Error::numerical("collapsed (z, tau) update", "triangular solve"))?;

    let var_j = beta_prior_variance(j, &state.penalty_aux, model.priors);
    (0..design.n_configs(j))
        .map(|c| {
            let f = design.transformed(j, c);
            let u = DVector::from_iterator(p, cols.iter().map(|col| dot(col, f) / s2));
            let w = l
                .solve_lower_triangular(&u)
                .ok_or_else(|| Error::numerical("collapsed (z, tau) update", "triangular solve"))?;
            let schur = dot(f, f) / s2 + 1.0 / var_j - w.dot(&w);
            if !(schur > 0.0) {
                return Err(Error::numerical(
                    "collapsed (z, tau) update",
                    format!("non-positive Schur complement {schur}"),
                ));
            }
            let resid = dot(f, y) / s2 - w.dot(&q);
            Ok(-0.5 * schur.ln() + 0.5 * resid * resid / schur)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
