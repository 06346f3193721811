//! Random variate helpers in the shape/rate parameterizations used by the
//! full conditionals.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::numerical(
            "gamma draw",
            format!("shape {shape}, rate {rate}"),
        ));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::numerical("gamma draw", e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = gamma(rng, shape, 1.0)?;
    let x = rate / g;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::numerical(
            "inverse-gamma draw",
            format!("shape {shape}, rate {rate} gave {x}"),
        ))
    }
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    // clamped so callers can always take log(p) and log(1 - p)
    let x = gamma(rng, a, 1.0)?;
    let y = gamma(rng, b, 1.0)?;
    let p = x / (x + y);
    if p.is_nan() {
        return Err(Error::numerical("beta draw", format!("Beta({a}, {b}) gave NaN")));
    }
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<Vec<f64>> {
    let mut g = weights
        .iter()
        .map(|&w| gamma(rng, w, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = g.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::numerical("dirichlet draw", format!("gamma sum {total}")));
    }
    g.iter_mut().for_each(|x| *x /= total);
    // renormalize so the components sum to one within rounding of a single add
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= s);
    Ok(g)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Inverse-Gaussian draw with the given mean and shape. `mean = inf` gives the
/// Lévy limit `shape / z^2`.
///
/// Michael–Schucany–Haas, with the smaller root computed in a form that does
/// not cancel when `mean` is huge.
pub fn inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && mean > 0.0) {
        return Err(Error::numerical(
            "inverse-gaussian draw",
            format!("mean {mean}, shape {shape}"),
        ));
    }
    let z = std_normal(rng);
    let y = z * z;
    if mean.is_infinite() {
        return Ok(shape / y);
    }
    let q = mean * y / (2.0 * shape);
    let x1 = mean / (1.0 + q + q.sqrt() * (2.0 + q).sqrt());
    let u: f64 = rng.random();
    let x = if u <= mean / (mean + x1) {
        x1
    } else {
        mean * mean / x1
    };
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::numerical(
            "inverse-gaussian draw",
            format!("mean {mean}, shape {shape} gave {x}"),
        ))
    }
}

/// Index drawn proportionally to `exp(log_weights)`. Returns the normalized
/// probabilities alongside the index.
pub fn categorical_from_log<R: Rng + ?Sized>(
    rng: &mut R,
    log_weights: &[f64],
) -> Result<(usize, Vec<f64>)> {
    let probs = normalize_log_weights(log_weights)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok((i, probs));
        }
    }
    // u landed in the rounding gap at the top
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok((last, probs))
}

/// Softmax of log weights, stable under adding a constant.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::numerical(
            "configuration weights",
            format!("log weights {log_weights:?}"),
        ));
    }
    let mut p: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mean, shape) = (2.0, 3.0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| inverse_gaussian(&mut rng, mean, shape).unwrap())
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - mean).abs() < 0.02, "mean {m}");
        let var = mean.powi(3) / shape;
        assert!((v - var).abs() / var < 0.05, "var {v} vs {var}");
    }

    #[test]
    fn inverse_gaussian_huge_mean_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = inverse_gaussian(&mut rng, 1e200, 0.5).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = normalize_log_weights(&[0.1, -2.0, 3.0]).unwrap();
        let b = normalize_log_weights(&[1000.1, 998.0, 1003.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
    }
}
