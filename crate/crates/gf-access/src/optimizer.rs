//! Maximum-rate search under a reliability target and spectral-efficiency
//! reporting, including the orthogonal-allocation baseline.

use crate::combinatorics::ActivationLaw;
use crate::numerics::{gamma_quantile, GammaParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("the curves do not cross inside the sampled traffic range")]
    NoCrossover,
    #[error("solution curve needs at least one sampled point")]
    EmptyCurve,
}

/// Result of the maximum-rate search at one traffic intensity.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RateSolution {
    /// maximum rate meeting the target (bits per channel use)
    pub r_star: f64,
    /// aggregate spectral efficiency bN * R* / M
    pub spectral_efficiency: f64,
    /// false when even the smallest positive rate violates the target
    pub feasible: bool,
    /// true when the constraint never binds inside the bracket (e.g. b = 0
    /// or epsilon_tar = 1): R* is only limited by the bracket top
    pub unbounded: bool,
    pub epsilon_target: f64,
    /// mean number of active users bN
    pub traffic_intensity: f64,
}

/// Largest rate whose marginalized outage stays within `epsilon_tar`,
/// found by bisection over [0, R_orth + 1].
///
/// `outage_fn(rate)` must be monotone non-decreasing in the rate; it is the
/// activation-marginalized outage of the chosen receiver model.
pub fn max_rate(
    outage_fn: impl Fn(f64) -> f64,
    activation: &ActivationLaw,
    k: u32,
    m: u32,
    theta: f64,
    epsilon_tar: f64,
    tolerance: f64,
) -> RateSolution {
    assert!(tolerance > 0.0);
    let bn = activation.mean_active();
    let r_upper = orthogonal_rate(k, theta, epsilon_tar) + 1.0;
    let solution = |r_star: f64, feasible: bool, unbounded: bool| RateSolution {
        r_star,
        spectral_efficiency: bn * r_star / m as f64,
        feasible,
        unbounded,
        epsilon_target: epsilon_tar,
        traffic_intensity: bn,
    };
    // degenerate constraint: nobody transmits, or the target never binds
    if outage_fn(r_upper) <= epsilon_tar {
        return solution(r_upper, true, true);
    }
    if outage_fn(tolerance) > epsilon_tar {
        return solution(0.0, false, false);
    }
    let (mut lo, mut hi) = (tolerance, r_upper);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if outage_fn(mid) <= epsilon_tar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solution(lo, true, false)
}

/// Maximum rate of an orthogonal allocation with K repetitions at SNR theta:
/// log2 of 1 plus the epsilon_tar quantile of the K-fold gamma. The target is
/// capped just below 1 to keep the quantile finite.
pub fn orthogonal_rate(k: u32, theta: f64, epsilon_tar: f64) -> f64 {
    assert!(epsilon_tar > 0.0 && epsilon_tar <= 1.0);
    let eps = epsilon_tar.min(1.0 - 1e-12);
    let q = gamma_quantile(eps, GammaParams::new(k as f64, theta));
    (1.0 + q).log2()
}

/// One sampled point of a solution curve: traffic intensity and achieved R*.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub bn: f64,
    pub r_star: f64,
}

/// Smallest traffic intensity beyond which orthogonal allocation over
/// M_orth = C*K slots is more spectrally efficient than the shared-slot
/// scheme over M slots, i.e. where R*/M drops below R_orth/(C*K).
/// Linear interpolation between the two bracketing grid points.
pub fn crossover_traffic(
    curve: &[CurvePoint],
    k: u32,
    theta: f64,
    epsilon_tar: f64,
    m: u32,
    c: u64,
) -> Result<f64, OptimizerError> {
    if curve.is_empty() {
        return Err(OptimizerError::EmptyCurve);
    }
    let r_orth = orthogonal_rate(k, theta, epsilon_tar);
    let threshold = r_orth * m as f64 / (c as f64 * k as f64);
    let margin = |p: &CurvePoint| p.r_star - threshold;
    if margin(&curve[0]) < 0.0 {
        return Ok(curve[0].bn);
    }
    for w in curve.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ma, mb) = (margin(a), margin(b));
        if ma >= 0.0 && mb < 0.0 {
            return Ok(a.bn + ma / (ma - mb) * (b.bn - a.bn));
        }
    }
    Err(OptimizerError::NoCrossover)
}
