//! Closed forms for a single CAPO step with `alpha = log(1/pi)` and the
//! constants of the convergence-rate bounds.

use crate::error::{Error, Result};
use crate::policy::Sign;

/// Per-action probability change at the updated state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDelta {
    pub deltas: Vec<f64>,
}

impl WeightDelta {
    /// `|delta(a_m)|`, the weight moved onto or off the updated action.
    pub fn moved(&self, a_m: usize) -> f64 {
        self.deltas[a_m].abs()
    }

    pub fn apply(&self, pi_row: &[f64]) -> Vec<f64> {
        pi_row.iter().zip(&self.deltas).map(|(p, d)| p + d).collect()
    }
}

fn check_row(pi_row: &[f64], a_m: usize) -> Result<()> {
    if a_m >= pi_row.len() {
        return Err(Error::Precondition(format!("action {a_m} out of range")));
    }
    let total: f64 = pi_row.iter().sum();
    if pi_row.iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition("pi_row must be a strictly positive distribution".into()));
    }
    Ok(())
}

/// `W+ / (1 - p)` or `W- / (1 - p)`: the fraction of `|A|` a single step
/// converts into improvement before the visitation factor.
fn moved_fraction(p: f64, sign: Sign) -> f64 {
    match sign {
        Sign::Pos => (1.0 - p) / (2.0 - p),
        Sign::Neg => p * (1.0 - p) / (p * p - p + 1.0),
        Sign::Zero => 0.0,
    }
}

/// Probability change from one update of `a_m` with `alpha = log(1/p)`.
pub fn predicted_weight_delta(pi_row: &[f64], a_m: usize, sign: Sign) -> Result<WeightDelta> {
    check_row(pi_row, a_m)?;
    if sign == Sign::Zero {
        return Err(Error::Precondition("weight delta needs a nonzero sign".into()));
    }
    let p = pi_row[a_m];
    let (own, scale) = match sign {
        Sign::Pos => ((1.0 - p).powi(2) / (2.0 - p), -(1.0 - p) / (2.0 - p)),
        _ => (
            -p * (1.0 - p).powi(2) / (p * p - p + 1.0),
            p * (1.0 - p) / (p * p - p + 1.0),
        ),
    };
    let deltas = pi_row
        .iter()
        .enumerate()
        .map(|(a, pa)| if a == a_m { own } else { scale * pa })
        .collect();
    Ok(WeightDelta { deltas })
}

/// Row after a full-batch update with `alpha = log(1/pi)`: weights
/// proportional to `1`, `pi` and `pi^2` for signs `+`, `0` and `-`.
pub fn batch_capo_weights(pi_row: &[f64], signs: &[Sign]) -> Result<Vec<f64>> {
    if pi_row.len() != signs.len() || pi_row.is_empty() {
        return Err(Error::Precondition("one sign per action required".into()));
    }
    check_row(pi_row, 0)?;
    let raw: Vec<f64> = pi_row
        .iter()
        .zip(signs)
        .map(|(p, s)| match s {
            Sign::Pos => 1.0,
            Sign::Zero => *p,
            Sign::Neg => p * p,
        })
        .collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / z).collect())
}

/// `V^{m+1}(s) - V^m(s)` after one fixed-step update of `(s_m, a_m)`.
///
/// `d_next` is `d^{pi_{m+1}}_s(s_m)`, the visitation of `s_m` from `s`
/// under the updated policy.
pub fn fixed_lr_one_step_improvement(d_next: f64, pi_am: f64, adv_am: f64, eta: f64, gamma: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::Precondition(format!("eta {eta} must be positive")));
    }
    if adv_am == 0.0 {
        return Ok(0.0);
    }
    let p = pi_am;
    let frac = if adv_am > 0.0 {
        let g = eta.exp_m1();
        g * p / (g * p + 1.0)
    } else {
        let g = -(-eta).exp_m1();
        g * p / (1.0 - g * p)
    };
    Ok(d_next / (1.0 - gamma) * frac * adv_am.abs())
}

/// `V^{m+1}(s) - V^m(s)` after one update with `alpha = log(1/p)`:
/// `(d / (1 - gamma)) (W / (1 - p)) |A|`.
pub fn capo_one_step_improvement(d_next: f64, pi_am: f64, adv_am: f64, gamma: f64) -> f64 {
    d_next / (1.0 - gamma) * moved_fraction(pi_am, Sign::of(adv_am, 0.0)) * adv_am.abs()
}

/// Lower bound on [`capo_one_step_improvement`] for rewards in `[0, 1]`:
/// `(d/2) A^2` when `A > 0`, `d p A^2` when `A < 0`.
pub fn capo_one_step_lower_bound(d_next: f64, pi_am: f64, adv_am: f64) -> f64 {
    let a2 = adv_am * adv_am;
    match Sign::of(adv_am, 0.0) {
        Sign::Pos => d_next / 2.0 * a2,
        Sign::Neg => d_next * pi_am * a2,
        Sign::Zero => 0.0,
    }
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

fn check_mu(mu: &[f64]) -> Result<f64> {
    let m = min_of(mu.iter().copied());
    if mu.is_empty() || !(m > 0.0) {
        return Err(Error::Precondition("rate constants need a strictly positive mu".into()));
    }
    Ok(m)
}

/// Cyclic CAPO:
/// `c = ((1-gamma)^4 / 2) ||1/mu||_inf^{-1} min{min mu / 2, (1-gamma)/(|S||A|)}`.
/// The gap after `m` iterations is at most `|S||A| / (c m)`.
pub fn cyclic_rate_constant(mu: &[f64], n_actions: usize, gamma: f64) -> Result<f64> {
    let min_mu = check_mu(mu)?;
    let sa = (mu.len() * n_actions) as f64;
    Ok((1.0 - gamma).powi(4) / 2.0 * min_mu * (min_mu / 2.0).min((1.0 - gamma) / sa))
}

/// Batch CAPO: `c = ((1-gamma)^4 / |A|) ||1/mu||_inf^{-1} min mu`;
/// the gap is at most `1 / (c m)`.
pub fn batch_rate_constant(mu: &[f64], n_actions: usize, gamma: f64) -> Result<f64> {
    let min_mu = check_mu(mu)?;
    Ok((1.0 - gamma).powi(4) / n_actions as f64 * min_mu * min_mu)
}

/// Randomized CAPO: `c = ((1-gamma)^4 / 2) ||1/mu||_inf^{-1} min d_gen(s,a) mu(s)`;
/// the expected gap is at most `1 / (c m)`. `d_gen` is row-major over `S x A`.
pub fn randomized_rate_constant(mu: &[f64], d_gen: &[f64], gamma: f64) -> Result<f64> {
    let min_mu = check_mu(mu)?;
    if d_gen.is_empty() || !d_gen.len().is_multiple_of(mu.len()) {
        return Err(Error::Precondition("d_gen must cover S x A".into()));
    }
    let n_actions = d_gen.len() / mu.len();
    let min_prod = min_of(d_gen.iter().enumerate().map(|(k, d)| d * mu[k / n_actions]));
    Ok((1.0 - gamma).powi(4) / 2.0 * min_mu * min_prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_delta_at_one_half() {
        let up = predicted_weight_delta(&[0.5, 0.5], 0, Sign::Pos).unwrap();
        assert!((up.deltas[0] - 1.0 / 6.0).abs() < 1e-15);
        let down = predicted_weight_delta(&[0.5, 0.5], 0, Sign::Neg).unwrap();
        assert!((down.deltas[0] + 1.0 / 6.0).abs() < 1e-15);
        for d in [up, down] {
            assert!(d.deltas.iter().sum::<f64>().abs() < 1e-15);
        }
        assert!(predicted_weight_delta(&[0.5, 0.5], 0, Sign::Zero).is_err());
    }

    #[test]
    fn weight_delta_vanishes_near_one() {
        let p = 1.0 - 1e-9;
        let d = predicted_weight_delta(&[p, 1.0 - p], 0, Sign::Pos).unwrap();
        assert!(d.deltas[0] < 1e-17);
    }

    #[test]
    fn batch_weights_example() {
        let w = batch_capo_weights(&[0.5, 0.3, 0.2], &[Sign::Pos, Sign::Neg, Sign::Neg]).unwrap();
        for (x, e) in w.iter().zip([1.0, 0.09, 0.04]) {
            assert!((x - e / 1.13).abs() < 1e-15);
        }
        let same = batch_capo_weights(&[0.5, 0.3, 0.2], &[Sign::Zero; 3]).unwrap();
        assert!((same[1] - 0.3).abs() < 1e-15);
        let uni = batch_capo_weights(&[0.25; 4], &[Sign::Pos; 4]).unwrap();
        assert!(uni.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fixed_lr_limits() {
        assert_eq!(fixed_lr_one_step_improvement(0.3, 0.4, 0.0, 1.0, 0.9).unwrap(), 0.0);
        let big = fixed_lr_one_step_improvement(0.3, 0.4, 2.0, 60.0, 0.9).unwrap();
        assert!((big - 0.3 / 0.1 * 2.0).abs() < 1e-9);
        let tiny = fixed_lr_one_step_improvement(0.3, 1e-300, 2.0, 1.0, 0.9).unwrap();
        assert!(tiny < 1e-290);
        assert!(fixed_lr_one_step_improvement(0.3, 0.4, 1.0, 0.0, 0.9).is_err());
    }

    #[test]
    fn fixed_lr_with_log_step_matches_capo_identity() {
        for (p, adv) in [(0.3, 0.7), (0.6, -0.2), (0.05, 1.5)] {
            let eta = (1.0f64 / p).ln();
            let a = fixed_lr_one_step_improvement(0.4, p, adv, eta, 0.9).unwrap();
            let b = capo_one_step_improvement(0.4, p, adv, 0.9);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rate_constants_by_hand() {
        let mu = [1.0 / 3.0; 3];
        let g: f64 = 0.9;
        let k = g.mul_add(-1.0, 1.0).powi(4);
        let c = cyclic_rate_constant(&mu, 2, g).unwrap();
        assert!((c - k / 2.0 / 3.0 * (1.0f64 / 6.0).min(0.1 / 6.0)).abs() < 1e-18);
        let b = batch_rate_constant(&mu, 2, g).unwrap();
        assert!((b - k / 2.0 / 9.0).abs() < 1e-18);
        let r = randomized_rate_constant(&mu, &[1.0 / 6.0; 6], g).unwrap();
        assert!((r - k / 2.0 / 3.0 / 18.0).abs() < 1e-18);
        assert!(cyclic_rate_constant(&[1.0, 0.0], 2, g).is_err());
    }
}
