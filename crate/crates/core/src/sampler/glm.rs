//! Metropolis updates for the logistic and gamma-process Cox likelihoods.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::survival::SurvivalGrid;
use super::ztau::config_log_prior;
use super::{MixtureState, Model};
use crate::design::OutcomeData;
use crate::dist;
use crate::error::{Error, Result};
use crate::priors::beta_prior_variance;

/// Log likelihood as a function of the linear predictor.
pub enum GlmFamily<'m> {
    Gaussian { y: &'m [f64], sigma2: f64 },
    Logistic { y: &'m [bool] },
    /// Gamma-process Cox likelihood with the baseline increments integrated
    /// out: `sum_i delta_i eta_i - sum_m w_m log(c0 + S_m(eta))`, where
    /// `w_m = c0 dΛ*_m + d_m` and `S_m` is the risk-set sum of `exp(eta)`.
    /// Invariant to adding a constant to `eta` up to the `c0` terms.
    CoxMarginal {
        grid: &'m SurvivalGrid,
        event: &'m [bool],
        c0: f64,
        shapes: Vec<f64>,
    },
}

impl<'m> GlmFamily<'m> {
    pub fn from_model(model: &'m Model<'_>, state: &MixtureState) -> Self {
        match model.outcome {
            OutcomeData::Continuous(y) => GlmFamily::Gaussian {
                y,
                sigma2: state.sigma2,
            },
            OutcomeData::Binary(y) => GlmFamily::Logistic { y },
            OutcomeData::Survival { event, .. } => {
                let grid = model.grid().expect("survival model has a grid");
                let c0 = model.priors.survival.c0;
                GlmFamily::CoxMarginal {
                    grid,
                    event,
                    c0,
                    shapes: grid.posterior_shapes(c0),
                }
            }
        }
    }

    pub fn log_likelihood(&self, eta: &[f64]) -> f64 {
        match self {
            GlmFamily::Gaussian { y, sigma2 } => eta
                .iter()
                .zip(*y)
                .map(|(&e, &yi)| -(yi - e) * (yi - e) / (2.0 * sigma2))
                .sum(),
            GlmFamily::Logistic { y } => eta
                .iter()
                .zip(*y)
                .map(|(&e, &yi)| if yi { e } else { 0.0 } - softplus(e))
                .sum(),
            GlmFamily::CoxMarginal {
                grid,
                event,
                c0,
                shapes,
            } => {
                let linear: f64 = eta.iter().zip(*event).filter(|(_, &d)| d).map(|(&e, _)| e).sum();
                let sums = grid.risk_sums(eta);
                linear
                    - sums
                        .iter()
                        .zip(shapes)
                        .map(|(&s, &w)| w * (c0 + s).ln())
                        .sum::<f64>()
            }
        }
    }

    /// Log likelihood with its gradient and negative Hessian along the
    /// directions `dirs`, i.e. in `theta` for `eta + sum_k theta_k dirs_k`
    /// at `theta = 0`.
    pub fn evaluate(&self, eta: &[f64], dirs: &[&[f64]]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = dirs.len();
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        let mut value = 0.0;
        // per-subject first and negative second derivatives
        let mut separable = |a: &[f64], b: &[f64]| {
            for p in 0..k {
                g[p] = dot(a, dirs[p]);
                for q in 0..=p {
                    h[(p, q)] = dirs[p]
                        .iter()
                        .zip(dirs[q])
                        .zip(b)
                        .map(|((x, y), w)| x * y * w)
                        .sum();
                }
            }
        };
        match self {
            GlmFamily::Gaussian { y, sigma2 } => {
                let a: Vec<f64> = eta.iter().zip(*y).map(|(&e, &yi)| (yi - e) / sigma2).collect();
                value = -a.iter().map(|r| r * r).sum::<f64>() * sigma2 / 2.0;
                separable(&a, &vec![1.0 / sigma2; eta.len()]);
            }
            GlmFamily::Logistic { y } => {
                let mut a = Vec::with_capacity(eta.len());
                let mut b = Vec::with_capacity(eta.len());
                for (&e, &yi) in eta.iter().zip(*y) {
                    let t = (-e.abs()).exp();
                    let p = if e >= 0.0 { 1.0 / (1.0 + t) } else { t / (1.0 + t) };
                    let obs = f64::from(u8::from(yi));
                    value += obs * e - (e.max(0.0) + t.ln_1p());
                    a.push(obs - p);
                    b.push(p * (1.0 - p));
                }
                separable(&a, &b);
            }
            GlmFamily::CoxMarginal {
                grid,
                event,
                c0,
                shapes,
            } => {
                let w: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
                let denom: Vec<f64> = grid.risk_totals(w.iter().copied()).iter().map(|s| c0 + s).collect();
                value = eta.iter().zip(*event).filter(|(_, &d)| d).map(|(&e, _)| e).sum::<f64>()
                    - denom.iter().zip(shapes).map(|(&d, &s)| s * d.ln()).sum::<f64>();
                let first: Vec<Vec<f64>> = dirs
                    .iter()
                    .map(|d| grid.risk_totals(w.iter().zip(*d).map(|(a, b)| a * b)))
                    .collect();
                for p in 0..k {
                    let observed: f64 = dirs[p].iter().zip(*event).filter(|(_, &d)| d).map(|(f, _)| f).sum();
                    g[p] = observed
                        - (0..grid.len())
                            .map(|m| shapes[m] * first[p][m] / denom[m])
                            .sum::<f64>();
                    for q in 0..=p {
                        let second = grid.risk_totals(
                            w.iter().zip(dirs[p]).zip(dirs[q]).map(|((a, b), c)| a * b * c),
                        );
                        h[(p, q)] = (0..grid.len())
                            .map(|m| {
                                shapes[m]
                                    * (second[m] / denom[m]
                                        - first[p][m] * first[q][m] / (denom[m] * denom[m]))
                            })
                            .sum();
                    }
                }
            }
        }
        for p in 0..k {
            for q in 0..p {
                h[(q, p)] = h[(p, q)];
            }
        }
        (value, g, h)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Robbins–Monro step-size adaptation for single-site random-walk
/// Metropolis, one scale per coefficient (index 0 is the intercept).
#[derive(Clone, Debug)]
pub struct Adaptation {
    log_step: Vec<f64>,
    target: f64,
    proposed: Vec<usize>,
    accepted: Vec<usize>,
    updates: Vec<usize>,
}

impl Adaptation {
    pub fn new(n: usize, initial_step: f64, target: f64) -> Self {
        Adaptation {
            log_step: vec![initial_step.ln(); n],
            target,
            proposed: vec![0; n],
            accepted: vec![0; n],
            updates: vec![0; n],
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.log_step[k].exp()
    }

    fn record(&mut self, k: usize, accepted: bool, adapting: bool) {
        self.proposed[k] += 1;
        self.accepted[k] += usize::from(accepted);
        if adapting {
            self.updates[k] += 1;
            let gain = (self.updates[k] as f64).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_step[k] = (self.log_step[k] + gain * (a - self.target)).clamp(-12.0, 6.0);
        }
    }

    pub fn reset_counts(&mut self) {
        self.proposed.iter_mut().for_each(|x| *x = 0);
        self.accepted.iter_mut().for_each(|x| *x = 0);
    }

    /// Acceptance rate since the last reset; NaN for never-proposed entries.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { f64::NAN } else { a as f64 / p as f64 })
            .collect()
    }
}

/// Random-walk Metropolis on one coefficient whose column in the linear
/// predictor is `column`. `loglik` holds the log likelihood at `eta` and is
/// kept in step with it.
#[allow(clippy::too_many_arguments)]
fn rw_coefficient<R: Rng + ?Sized>(
    k: usize,
    current: f64,
    prior_var: f64,
    column: &[f64],
    eta: &mut [f64],
    loglik: &mut f64,
    family: &GlmFamily<'_>,
    adaptation: &mut Adaptation,
    adapting: bool,
    rng: &mut R,
) -> Result<f64> {
    let proposal = current + adaptation.step(k) * dist::std_normal(rng);
    let delta = proposal - current;
    let trial: Vec<f64> = eta.iter().zip(column).map(|(&e, &f)| e + delta * f).collect();
    let trial_ll = family.log_likelihood(&trial);
    let diff = trial_ll - *loglik + (current * current - proposal * proposal) / (2.0 * prior_var);
    if diff.is_nan() {
        return Err(Error::numerical(
            "random-walk Metropolis",
            format!("NaN log-posterior difference for coefficient {k}"),
        ));
    }
    let u: f64 = rng.random();
    let accept = u.ln() < diff;
    adaptation.record(k, accept, adapting);
    if accept {
        eta.copy_from_slice(&trial);
        *loglik = trial_ll;
        Ok(proposal)
    } else {
        Ok(current)
    }
}

fn check_eta(eta: &[f64], context: &str) -> Result<()> {
    if let Some(i) = eta.iter().position(|e| !e.is_finite()) {
        return Err(Error::numerical(
            context,
            format!("non-finite linear predictor {} at subject {}", eta[i], i + 1),
        ));
    }
    Ok(())
}

/// Single-site random-walk Metropolis on `alpha` and each `beta_j` under the
/// Bernoulli-logit likelihood. Step sizes adapt only while `adapting`.
pub fn update_logistic_params<R: Rng + ?Sized>(
    state: &mut MixtureState,
    model: &Model<'_>,
    adaptation: &mut Adaptation,
    adapting: bool,
    rng: &mut R,
) -> Result<()> {
    if !matches!(model.outcome, OutcomeData::Binary(_)) {
        return Err(Error::invalid("logistic update", "outcome is not binary"));
    }
    let design = model.design;
    let family = GlmFamily::from_model(model, state);
    let mut eta = state.eta(design)?;
    check_eta(&eta, "logistic update")?;
    let mut loglik = family.log_likelihood(&eta);
    let ones = vec![1.0; design.n()];
    state.alpha = rw_coefficient(
        0,
        state.alpha,
        model.priors.beta_variance,
        &ones,
        &mut eta,
        &mut loglik,
        &family,
        adaptation,
        adapting,
        rng,
    )?;
    update_coefficients(state, model, &family, &mut eta, &mut loglik, adaptation, adapting, rng)
}

/// Random-walk Metropolis on each `beta_j` under the Cox likelihood with the
/// baseline hazard integrated out, then a conjugate gamma draw of every
/// baseline hazard increment given the new coefficients. The intercept stays
/// at 0.
pub fn update_survival_params<R: Rng + ?Sized>(
    state: &mut MixtureState,
    model: &Model<'_>,
    adaptation: &mut Adaptation,
    adapting: bool,
    rng: &mut R,
) -> Result<()> {
    let grid = model
        .grid()
        .ok_or_else(|| Error::invalid("survival update", "outcome is not survival"))?;
    let family = GlmFamily::from_model(model, state);
    let mut eta = state.eta(model.design)?;
    check_eta(&eta, "survival update")?;
    let mut loglik = family.log_likelihood(&eta);
    update_coefficients(state, model, &family, &mut eta, &mut loglik, adaptation, adapting, rng)?;
    check_eta(&eta, "survival update")?;
    let c0 = model.priors.survival.c0;
    for (inc, (shape, rate)) in state
        .hazard_increments
        .iter_mut()
        .zip(grid.increment_conditionals(&eta, c0))
    {
        *inc = dist::gamma(rng, shape, rate)?.max(f64::MIN_POSITIVE);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_coefficients<R: Rng + ?Sized>(
    state: &mut MixtureState,
    model: &Model<'_>,
    family: &GlmFamily<'_>,
    eta: &mut [f64],
    loglik: &mut f64,
    adaptation: &mut Adaptation,
    adapting: bool,
    rng: &mut R,
) -> Result<()> {
    let design = model.design;
    for j in 0..design.n_predictors() {
        let c = design
            .config_index(j, state.configs[j])
            .expect("state config admissible");
        let var = beta_prior_variance(j, &state.penalty_aux, model.priors);
        state.beta[j] = rw_coefficient(
            j + 1,
            state.beta[j],
            var,
            design.transformed(j, c),
            eta,
            loglik,
            family,
            adaptation,
            adapting,
            rng,
        )?;
    }
    Ok(())
}

/// Gaussian approximation to `theta -> l(offset + sum_k theta_k dirs_k) -
/// sum_k theta_k^2 / (2 vars_k)` at its mode, found by damped Newton.
struct Laplace {
    mode: DVector<f64>,
    /// Negative Hessian at the mode.
    precision: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_target_at_mode: f64,
}

impl Laplace {
    fn fit(
        family: &GlmFamily<'_>,
        offset: &[f64],
        dirs: &[&[f64]],
        vars: &[f64],
        start: DVector<f64>,
    ) -> Result<Self> {
        let k = dirs.len();
        let eval = |theta: &DVector<f64>| {
            let eta = shifted(offset, dirs, theta);
            let (mut v, mut g, mut h) = family.evaluate(&eta, dirs);
            for p in 0..k {
                v -= theta[p] * theta[p] / (2.0 * vars[p]);
                g[p] -= theta[p] / vars[p];
                h[(p, p)] += 1.0 / vars[p];
            }
            (v, g, h)
        };
        let fail = |what: String| Error::numerical("Laplace proposal", what);
        let mut theta = start;
        let (mut value, mut grad, mut precision) = eval(&theta);
        for _ in 0..100 {
            let mut step = precision
                .clone()
                .cholesky()
                .ok_or_else(|| fail("curvature not positive definite".into()))?
                .solve(&grad);
            // Newton decrement: the predicted gain of a full step, times 2
            if !(grad.dot(&step) > 1e-14) {
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &theta + &step;
                let (v, g, h) = eval(&cand);
                if v.is_finite() && v >= value - 1e-12 * value.abs() {
                    theta = cand;
                    value = v;
                    grad = g;
                    precision = h;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !theta.iter().all(|t| t.is_finite()) || !value.is_finite() {
            return Err(fail(format!("non-finite mode {theta:?}")));
        }
        let chol_l = precision
            .clone()
            .cholesky()
            .ok_or_else(|| fail("curvature at mode not positive definite".into()))?
            .l();
        Ok(Laplace {
            mode: theta,
            precision,
            chol_l,
            log_target_at_mode: value,
        })
    }

    /// Log of the approximate block marginal, `log T(mode) + log det(2 pi H^-1) / 2`.
    fn log_marginal(&self) -> f64 {
        let k = self.mode.len() as f64;
        let log_det: f64 = self.chol_l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        self.log_target_at_mode + 0.5 * k * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det
    }

    /// Log Gaussian density up to the `2 pi` constant shared by all fits of
    /// the same dimension.
    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mode;
        let log_det: f64 = self.chol_l.diagonal().iter().map(|x| x.ln()).sum();
        log_det - 0.5 * d.dot(&(&self.precision * &d))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.mode.len(), (0..self.mode.len()).map(|_| dist::std_normal(rng)));
        let x = self
            .chol_l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mode + x
    }
}

fn shifted(offset: &[f64], dirs: &[&[f64]], theta: &DVector<f64>) -> Vec<f64> {
    let mut eta = offset.to_vec();
    for (d, &t) in dirs.iter().zip(theta.iter()) {
        eta.iter_mut().zip(*d).for_each(|(e, &f)| *e += t * f);
    }
    eta
}

fn log_block_target(
    family: &GlmFamily<'_>,
    offset: &[f64],
    dirs: &[&[f64]],
    vars: &[f64],
    theta: &DVector<f64>,
) -> f64 {
    family.log_likelihood(&shifted(offset, dirs, theta))
        - theta
            .iter()
            .zip(vars)
            .map(|(t, v)| t * t / (2.0 * v))
            .sum::<f64>()
}

/// Metropolis–Hastings move on `(z_j, tau_j, beta_j)` jointly, together with
/// the intercept for a binary outcome.
///
/// For every configuration the conditional of the block coefficients is
/// approximated by a Gaussian at its mode; a configuration is proposed with
/// probability proportional to its prior weight times the Laplace
/// approximation of its marginal, and the coefficients from that Gaussian.
/// The proposal depends only on the rest of the state, so the move is an
/// independence sampler within the block and leaves the exact full
/// conditional invariant. Refitting the intercept lets the chain move between
/// forms that differ mostly by a level shift, such as a linear term and a
/// cutoff with the opposite sign.
///
/// Returns whether the move was accepted.
pub fn laplace_joint_move<R: Rng + ?Sized>(
    j: usize,
    state: &mut MixtureState,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<bool> {
    let design = model.design;
    let family = GlmFamily::from_model(model, state);
    let with_intercept = matches!(model.outcome, OutcomeData::Binary(_));
    let mut offset = state.eta(design)?;
    let current = design
        .config_index(j, state.configs[j])
        .expect("state config admissible");
    let b_cur = state.beta[j];
    for (o, f) in offset.iter_mut().zip(design.transformed(j, current)) {
        *o -= b_cur * f + if with_intercept { state.alpha } else { 0.0 };
    }
    check_eta(&offset, "joint configuration move")?;
    let var = beta_prior_variance(j, &state.penalty_aux, model.priors);
    let ones = vec![1.0; design.n()];
    let vars: Vec<f64> = if with_intercept {
        vec![model.priors.beta_variance, var]
    } else {
        vec![var]
    };
    let dirs_for = |c: usize| -> Vec<&[f64]> {
        if with_intercept {
            vec![&ones, design.transformed(j, c)]
        } else {
            vec![design.transformed(j, c)]
        }
    };
    let theta_cur = if with_intercept {
        DVector::from_vec(vec![state.alpha, b_cur])
    } else {
        DVector::from_vec(vec![b_cur])
    };

    // Newton start from the rest of the state only: the intercept matching
    // the observed event rate, and a zero coefficient.
    let start = if let OutcomeData::Binary(y) = model.outcome {
        let n = y.len() as f64;
        let rate = (y.iter().filter(|&&v| v).count() as f64 + 0.5) / (n + 1.0);
        let mean_offset = offset.iter().sum::<f64>() / n;
        DVector::from_vec(vec![(rate / (1.0 - rate)).ln() - mean_offset, 0.0])
    } else {
        DVector::zeros(1)
    };
    let n_cfg = design.n_configs(j);
    let mut fits = Vec::with_capacity(n_cfg);
    let mut log_q = Vec::with_capacity(n_cfg);
    for c in 0..n_cfg {
        let fit = Laplace::fit(&family, &offset, &dirs_for(c), &vars, start.clone())?;
        log_q.push(config_log_prior(j, c, state) + fit.log_marginal());
        fits.push(fit);
    }
    let (proposed, probs) = dist::categorical_from_log(rng, &log_q)?;
    let theta_new = fits[proposed].sample(rng);

    let target_new = log_block_target(&family, &offset, &dirs_for(proposed), &vars, &theta_new)
        + config_log_prior(j, proposed, state);
    let target_cur = log_block_target(&family, &offset, &dirs_for(current), &vars, &theta_cur)
        + config_log_prior(j, current, state);
    let q_new = probs[proposed].ln() + fits[proposed].log_density(&theta_new);
    let q_cur = probs[current].ln() + fits[current].log_density(&theta_cur);
    let log_ratio = (target_new - target_cur) - (q_new - q_cur);
    if log_ratio.is_nan() {
        return Err(Error::numerical(
            "joint configuration move",
            "NaN acceptance ratio",
        ));
    }
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        state.configs[j] = design.config(j, proposed);
        let k = theta_new.len();
        state.beta[j] = theta_new[k - 1];
        if with_intercept {
            state.alpha = theta_new[0];
        }
        Ok(true)
    } else {
        Ok(false)
    }
}
