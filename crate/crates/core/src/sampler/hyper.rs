use rand::Rng;

use super::{MixtureState, Model};
use crate::design::TransformConfig;
use crate::dist;
use crate::error::Result;

/// `p_z ~ Beta(a + #linear, b + #threshold)`; `pi_j ~ Dirichlet(w + onehot(tau_j))`
/// when predictor j is dichotomized, the prior `Dirichlet(w)` otherwise.
pub fn update_pz_pi<R: Rng + ?Sized>(
    state: &mut MixtureState,
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let priors = model.priors;
    let n_linear = state.configs.iter().filter(|c| c.is_linear()).count();
    let n_threshold = state.configs.len() - n_linear;
    state.pz = dist::beta(
        rng,
        priors.pz_a + n_linear as f64,
        priors.pz_b + n_threshold as f64,
    )?;
    for (j, pi) in state.pi.iter_mut().enumerate() {
        let cutoffs = model.design.cutoffs(j);
        let mut weights = vec![priors.dirichlet_weight; cutoffs.len()];
        if let TransformConfig::Threshold(k) = state.configs[j] {
            if let Some(pos) = cutoffs.iter().position(|&c| c == k) {
                weights[pos] += 1.0;
            }
        }
        *pi = dist::dirichlet(rng, &weights)?;
    }
    Ok(())
}
