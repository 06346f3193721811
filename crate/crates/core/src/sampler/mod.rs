//! Metropolis-within-Gibbs sampler for the ordinal mixture model.
//!
//! One sweep, in fixed order:
//!
//! 1. shrinkage auxiliaries (lasso or horseshoe);
//! 2. `(z_j, tau_j)` for each predictor by exact enumeration of its
//!    `1 + |cutoffs_j|` configurations;
//! 3. regression coefficients;
//! 4. `sigma^2` (continuous) or the baseline hazard increments (survival);
//! 5. `p_z` and `pi_j`.
//!
//! Chains are pure functions of their inputs and seed.

mod glm;
mod hyper;
mod linear;
mod survival;
mod ztau;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{linear_predictor, OrdinalDesign, OutcomeData, TransformConfig};
use crate::error::{Error, Result};
use crate::priors::{
    update_horseshoe_auxiliaries, update_lasso_auxiliaries, PenaltyAuxiliaries, Penalty,
    PriorConfig,
};

pub use glm::{
    laplace_joint_move, update_logistic_params, update_survival_params, Adaptation, GlmFamily,
};
pub use hyper::update_pz_pi;
pub use linear::{linear_conditional, sigma2_conditional, update_linear_params, LinearConditional};
pub use survival::SurvivalGrid;
pub use ztau::{config_log_prior, update_ztau, ztau_log_weights, ZtauMode};

/// Data, design and priors for one fit.
#[derive(Clone, Debug)]
pub struct Model<'a> {
    pub design: &'a OrdinalDesign,
    pub outcome: &'a OutcomeData,
    pub priors: &'a PriorConfig,
    grid: Option<SurvivalGrid>,
}

impl<'a> Model<'a> {
    pub fn new(
        design: &'a OrdinalDesign,
        outcome: &'a OutcomeData,
        priors: &'a PriorConfig,
    ) -> Result<Self> {
        outcome.validate(design.n())?;
        priors.validate()?;
        let grid = match outcome {
            OutcomeData::Survival { time, event } => {
                Some(SurvivalGrid::new(time, event, priors.survival.r)?)
            }
            _ => None,
        };
        Ok(Model {
            design,
            outcome,
            priors,
            grid,
        })
    }

    pub fn grid(&self) -> Option<&SurvivalGrid> {
        self.grid.as_ref()
    }

    /// Residual precision entering the lasso rate: `1 / sigma^2` for a
    /// continuous outcome, 1 otherwise.
    pub(crate) fn penalty_precision(&self, state: &MixtureState) -> f64 {
        match self.outcome {
            OutcomeData::Continuous(_) => 1.0 / state.sigma2,
            _ => 1.0,
        }
    }
}

/// One state of the Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    /// `(z_j, tau_j)` per predictor.
    pub configs: Vec<TransformConfig>,
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// Residual variance; stays 1 for binary and survival outcomes.
    pub sigma2: f64,
    pub pz: f64,
    /// `pi[j][k]`: prior probability of the k-th admissible cutoff of
    /// predictor j.
    pub pi: Vec<Vec<f64>>,
    pub penalty_aux: PenaltyAuxiliaries,
    /// Baseline hazard increment per survival grid point; empty otherwise.
    pub hazard_increments: Vec<f64>,
}

impl MixtureState {
    pub fn z(&self, j: usize) -> u8 {
        self.configs[j].z()
    }

    pub fn tau(&self, j: usize) -> u32 {
        self.configs[j].tau()
    }

    /// Current linear predictor, including the intercept.
    pub fn eta(&self, design: &OrdinalDesign) -> Result<Vec<f64>> {
        linear_predictor(design, &self.configs, self.alpha, &self.beta)
    }

    /// Checks the state invariants.
    pub fn check(&self, design: &OrdinalDesign) -> Result<()> {
        if !(self.pz > 0.0 && self.pz < 1.0) {
            return Err(Error::numerical("state", format!("pz = {}", self.pz)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::numerical("state", format!("sigma2 = {}", self.sigma2)));
        }
        for (j, p) in self.pi.iter().enumerate() {
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-12 || p.len() != design.cutoffs(j).len() {
                return Err(Error::numerical("state", format!("pi[{j}] = {p:?}")));
            }
        }
        for (j, &cfg) in self.configs.iter().enumerate() {
            design.check_config(j, cfg)?;
        }
        if self.hazard_increments.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::numerical("state", "non-positive hazard increment"));
        }
        if !self.penalty_aux.all_positive() {
            return Err(Error::numerical("state", "non-positive shrinkage auxiliary"));
        }
        Ok(())
    }
}

/// Starting state: every predictor linear, coefficients zero, `sigma^2 = 1`,
/// `p_z = 0.5`, uniform `pi`, auxiliaries 1 and hazard increments at their
/// prior means. Deterministic.
pub fn init_state(model: &Model<'_>) -> MixtureState {
    let design = model.design;
    let j = design.n_predictors();
    MixtureState {
        configs: vec![TransformConfig::Linear; j],
        alpha: 0.0,
        beta: vec![0.0; j],
        sigma2: 1.0,
        pz: 0.5,
        pi: (0..j)
            .map(|k| {
                let m = design.cutoffs(k).len();
                vec![1.0 / m as f64; m]
            })
            .collect(),
        penalty_aux: PenaltyAuxiliaries::init(&model.priors.penalty, j),
        hazard_increments: model
            .grid()
            .map(|g| g.prior_increments().to_vec())
            .unwrap_or_default(),
    }
}

/// Run length, thinning and Metropolis tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Initial random-walk step size for every Metropolis-updated coefficient.
    pub initial_step: f64,
    /// Acceptance rate targeted by burn-in adaptation.
    pub target_acceptance: f64,
    /// Adds a joint `(z_j, tau_j, beta_j)` Metropolis move with a Laplace
    /// proposal for binary and survival outcomes.
    pub joint_moves: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 10_000,
            burn_in: 2_000,
            thin: 1,
            n_chains: 2,
            seed: 1,
            initial_step: 0.5,
            target_acceptance: 0.44,
            joint_moves: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::invalid(
                "chain config",
                format!("burn_in {} must be below n_iter {}", self.burn_in, self.n_iter),
            ));
        }
        if self.n_chains == 0 {
            return Err(Error::invalid("chain config", "n_chains must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("chain config", "thin must be at least 1"));
        }
        if !(self.initial_step > 0.0) || !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0)
        {
            return Err(Error::invalid("chain config", "bad Metropolis tuning"));
        }
        Ok(())
    }

    /// Number of draws each chain stores.
    pub fn kept_draws(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }

    /// RNG seed of chain `index`.
    pub fn chain_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Thinned post-burn-in draws of one chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrawStore {
    /// Iteration number of each stored draw.
    pub iteration: Vec<usize>,
    pub alpha: Vec<f64>,
    /// `beta[j][d]`.
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub pz: Vec<f64>,
    pub z: Vec<Vec<u8>>,
    /// Threshold of each draw, 0 when the draw is linear.
    pub tau: Vec<Vec<u32>>,
    /// Horseshoe global scale, when that prior is active.
    pub global_scale: Vec<f64>,
    /// Cumulative baseline hazard at the end of follow-up (survival only).
    pub cumulative_hazard: Vec<f64>,
    /// Metropolis acceptance rate after burn-in, per coefficient
    /// (intercept first); empty for the conjugate linear sampler.
    pub acceptance: Vec<f64>,
    /// Acceptance rate of the joint configuration moves after burn-in.
    pub joint_acceptance: Option<f64>,
}

impl DrawStore {
    fn new(n_predictors: usize, capacity: usize) -> Self {
        DrawStore {
            beta: vec![Vec::with_capacity(capacity); n_predictors],
            z: vec![Vec::with_capacity(capacity); n_predictors],
            tau: vec![Vec::with_capacity(capacity); n_predictors],
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn n_predictors(&self) -> usize {
        self.beta.len()
    }

    fn record(&mut self, iteration: usize, state: &MixtureState, model: &Model<'_>) {
        self.iteration.push(iteration);
        self.alpha.push(state.alpha);
        for (j, cfg) in state.configs.iter().enumerate() {
            self.beta[j].push(state.beta[j]);
            self.z[j].push(cfg.z());
            self.tau[j].push(cfg.tau());
        }
        self.sigma2.push(state.sigma2);
        self.pz.push(state.pz);
        if let PenaltyAuxiliaries::Horseshoe { global, .. } = &state.penalty_aux {
            self.global_scale.push(*global);
        }
        if model.grid().is_some() {
            self.cumulative_hazard
                .push(state.hazard_increments.iter().sum());
        }
    }
}

/// Per-chain mutable machinery that is not part of the model state.
struct ChainRunner<'m, 'a> {
    model: &'m Model<'a>,
    config: &'m ChainConfig,
    state: MixtureState,
    rng: ChaCha8Rng,
    adaptation: Adaptation,
    joint_accepted: usize,
    joint_proposed: usize,
}

impl<'m, 'a> ChainRunner<'m, 'a> {
    fn sweep(&mut self, iteration: usize) -> Result<()> {
        let model = self.model;
        let adapting = iteration < self.config.burn_in;
        if iteration == self.config.burn_in {
            self.adaptation.reset_counts();
            self.joint_accepted = 0;
            self.joint_proposed = 0;
        }

        let precision = model.penalty_precision(&self.state);
        match model.priors.penalty {
            Penalty::None => {}
            Penalty::Lasso { .. } => update_lasso_auxiliaries(
                &mut self.state.penalty_aux,
                &self.state.beta,
                precision,
                model.priors,
                &mut self.rng,
            )?,
            Penalty::Horseshoe { .. } => update_horseshoe_auxiliaries(
                &mut self.state.penalty_aux,
                &self.state.beta,
                model.priors,
                &mut self.rng,
            )?,
        }

        match model.outcome {
            OutcomeData::Continuous(_) => {
                for j in 0..model.design.n_predictors() {
                    update_ztau(j, &mut self.state, model, ZtauMode::Collapsed, &mut self.rng)?;
                }
                update_linear_params(&mut self.state, model, &mut self.rng)?;
            }
            OutcomeData::Binary(_) | OutcomeData::Survival { .. } => {
                for j in 0..model.design.n_predictors() {
                    update_ztau(j, &mut self.state, model, ZtauMode::FixedBeta, &mut self.rng)?;
                    if self.config.joint_moves {
                        let accepted = laplace_joint_move(j, &mut self.state, model, &mut self.rng)?;
                        self.joint_proposed += 1;
                        self.joint_accepted += usize::from(accepted);
                    }
                }
                if let OutcomeData::Binary(_) = model.outcome {
                    update_logistic_params(
                        &mut self.state,
                        model,
                        &mut self.adaptation,
                        adapting,
                        &mut self.rng,
                    )?;
                } else {
                    update_survival_params(
                        &mut self.state,
                        model,
                        &mut self.adaptation,
                        adapting,
                        &mut self.rng,
                    )?;
                }
            }
        }

        update_pz_pi(&mut self.state, model, &mut self.rng)?;
        Ok(())
    }
}

/// Runs chain `chain_index` (seeded with `config.seed + chain_index`).
pub fn run_chain(model: &Model<'_>, config: &ChainConfig, chain_index: usize) -> Result<DrawStore> {
    config.validate()?;
    let n_coef = model.design.n_predictors() + 1;
    let mut runner = ChainRunner {
        model,
        config,
        state: init_state(model),
        rng: ChaCha8Rng::seed_from_u64(config.chain_seed(chain_index)),
        adaptation: Adaptation::new(n_coef, config.initial_step, config.target_acceptance),
        joint_accepted: 0,
        joint_proposed: 0,
    };
    let mut draws = DrawStore::new(model.design.n_predictors(), config.kept_draws());
    for iteration in 0..config.n_iter {
        runner.sweep(iteration).map_err(|e| Error::Chain {
            chain: chain_index,
            iteration,
            source: Box::new(e),
        })?;
        if iteration >= config.burn_in && (iteration - config.burn_in) % config.thin == 0 {
            draws.record(iteration, &runner.state, model);
        }
    }
    if !matches!(model.outcome, OutcomeData::Continuous(_)) {
        draws.acceptance = runner.adaptation.acceptance_rates();
        if runner.joint_proposed > 0 {
            draws.joint_acceptance =
                Some(runner.joint_accepted as f64 / runner.joint_proposed as f64);
        }
    }
    Ok(draws)
}

/// Runs `config.n_chains` independent chains in parallel.
pub fn run_chains(model: &Model<'_>, config: &ChainConfig) -> Result<Vec<DrawStore>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, c))
        .collect()
}
