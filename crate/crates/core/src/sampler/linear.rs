//! Conjugate updates for the continuous outcome.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::{MixtureState, Model};
use crate::design::OutcomeData;
use crate::dist;
use crate::error::{Error, Result};
use crate::priors::{beta_prior_variance, Penalty};

/// Multivariate-normal full conditional of `(alpha, beta_1..beta_J)`.
pub struct LinearConditional {
    pub mean: DVector<f64>,
    /// Factorization of the posterior precision.
    pub precision: Cholesky<f64, Dyn>,
}

impl LinearConditional {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision.inverse()
    }
}

fn continuous_y<'a>(model: &Model<'a>) -> Result<&'a [f64]> {
    match model.outcome {
        OutcomeData::Continuous(y) => Ok(y),
        _ => Err(Error::invalid("linear update", "outcome is not continuous")),
    }
}

/// Posterior of the coefficients given the configurations, `sigma^2` and the
/// per-coefficient prior variances.
pub fn linear_conditional(state: &MixtureState, model: &Model<'_>) -> Result<LinearConditional> {
    let y = continuous_y(model)?;
    let design = model.design;
    let n = design.n();
    let p = design.n_predictors() + 1;
    let mut x = DMatrix::<f64>::zeros(n, p);
    x.column_mut(0).fill(1.0);
    for j in 0..design.n_predictors() {
        let c = design
            .config_index(j, state.configs[j])
            .expect("state config admissible");
        x.column_mut(j + 1)
            .copy_from_slice(design.transformed(j, c));
    }
    let s2 = state.sigma2;
    let mut prec = x.tr_mul(&x) / s2;
    prec[(0, 0)] += 1.0 / model.priors.beta_variance;
    for j in 0..design.n_predictors() {
        prec[(j + 1, j + 1)] += 1.0 / beta_prior_variance(j, &state.penalty_aux, model.priors);
    }
    let rhs = x.tr_mul(&DVector::from_column_slice(y)) / s2;
    let chol = prec.cholesky().ok_or_else(|| {
        Error::numerical("linear update", "posterior precision is not positive definite")
    })?;
    let mean = chol.solve(&rhs);
    Ok(LinearConditional {
        mean,
        precision: chol,
    })
}

/// Inverse-gamma shape and rate of the `sigma^2` full conditional.
///
/// Without a lasso prior this is `(a + n/2, b + RSS/2)`. Under the lasso the
/// double-exponential rate scales with `1 / sigma^2`, adding `J` to the shape
/// and `lambda * sum |beta_j|` to the rate.
pub fn sigma2_conditional(state: &MixtureState, model: &Model<'_>) -> Result<(f64, f64)> {
    let y = continuous_y(model)?;
    let eta = state.eta(model.design)?;
    let rss: f64 = y.iter().zip(&eta).map(|(a, b)| (a - b) * (a - b)).sum();
    let priors = model.priors;
    let mut shape = priors.sigma2_shape + y.len() as f64 / 2.0;
    let mut rate = priors.sigma2_rate + rss / 2.0;
    if let Penalty::Lasso { lambda } = priors.penalty {
        shape += state.beta.len() as f64;
        rate += lambda * state.beta.iter().map(|b| b.abs()).sum::<f64>();
    }
    Ok((shape, rate))
}

/// Joint draw of `(alpha, beta)` followed by `sigma^2`.
pub fn update_linear_params<R: Rng + ?Sized>(
    state: &mut MixtureState,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let cond = linear_conditional(state, model)?;
    let p = cond.mean.len();
    let z = DVector::from_iterator(p, (0..p).map(|_| dist::std_normal(rng)));
    // P = L L', so L'^-1 z has covariance P^-1
    let dev = cond
        .precision
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::numerical("linear update", "triangular solve failed"))?;
    let draw = &cond.mean + dev;
    state.alpha = draw[0];
    for (b, d) in state.beta.iter_mut().zip(draw.iter().skip(1)) {
        *b = *d;
    }
    let (shape, rate) = sigma2_conditional(state, model)?;
    state.sigma2 = dist::inv_gamma(rng, shape, rate)?;
    Ok(())
}
