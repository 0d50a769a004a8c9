//! Closed-form and semi-analytic outage evaluations: the collision model,
//! the collision+SIC approximation with stopping-set corrections, the
//! full-MRC convolution model and its gamma approximation, and the
//! pilot-contamination lower bound.
//!
//! All rates are in bits per channel use and all SNRs are linear.

use thiserror::Error;

use crate::combinatorics::{binom, binomial_pmf, AccessLaw, ActivationLaw, CombinatoricsError};
use crate::numerics::{
    adaptive_simpson, cdf_of_convolution, gamma_cdf, gamma_pdf, kummer_1f1, truncated_gamma_mean,
    DiscretizedPdf, GammaParams, NumericsError, DEFAULT_GRID_POINTS,
};

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("operation requires a Steiner access law")]
    RandomLawUnsupported,
    #[error("no interfered slot is possible under the given conditioning")]
    DegenerateConditioning,
    #[error("gamma fit did not converge; best iterate shape={shape}, scale={scale}, objective={objective}")]
    OptimizerFailed {
        shape: f64,
        scale: f64,
        objective: f64,
    },
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Channel operating point: mean received SNR θ (linear, noise folded in)
/// and transmission rate R in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub theta: f64,
    pub rate: f64,
}

impl ChannelParams {
    pub fn new(theta: f64, rate: f64) -> Self {
        assert!(theta > 0.0 && rate > 0.0);
        Self { theta, rate }
    }

    /// Decoding threshold 2^R - 1.
    pub fn threshold(&self) -> f64 {
        (2f64).powf(self.rate) - 1.0
    }
}

/// Stopping-set context for the SIC approximation: the orders used (the
/// smallest existing order and, when nonempty, the next) with their
/// exhaustive counts, plus the codebook size C.
#[derive(Debug, Clone)]
pub struct SicContext {
    /// (order n, |T^(n)|) pairs, ascending in n, all counts exhaustive.
    pub orders: Vec<(u32, u64)>,
    pub codebook_size: u64,
}

impl SicContext {
    /// Selects the default orders from a per-order count table: the smallest
    /// n with a nonzero count, and n+1 when its count is also nonzero.
    pub fn from_counts(counts: &[(u32, u64)], codebook_size: u64) -> Self {
        let mut orders = Vec::new();
        let mut sorted: Vec<_> = counts.to_vec();
        sorted.sort_unstable();
        for &(n, count) in &sorted {
            if count == 0 {
                if !orders.is_empty() {
                    break;
                }
                continue;
            }
            orders.push((n, count));
            if orders.len() == 2 {
                break;
            }
        }
        Self {
            orders,
            codebook_size,
        }
    }
}

/// Pilot pool description for the contamination bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotMode {
    RandomPilotDraw,
    SteinerScheduled,
}

#[derive(Debug, Clone, Copy)]
pub struct PilotModel {
    pub q: u32,
    pub mode: PilotMode,
}

/// Collision-model outage: every interfered replica is lost, the K'
/// collision-free replicas are combined by MRC into a gamma(K', θ) SNR.
pub fn outage_collision(ch: ChannelParams, u: u64, law: &AccessLaw) -> Result<f64, AnalyticError> {
    let z = ch.threshold();
    let mut acc = 0.0;
    for k_free in 0..=law.repetitions() {
        let p = law.p_cf(k_free, u)?;
        if p > 0.0 {
            acc += p * gamma_cdf(z, GammaParams::new(k_free as f64, ch.theta));
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// Mean residual SNR of a user that failed the first decoding round:
/// the gap between the threshold and the mean of its truncated accumulated
/// SNR, marginalized over K'.
pub fn residual_snr(ch: ChannelParams, u: u64, law: &AccessLaw) -> Result<f64, AnalyticError> {
    let z = ch.threshold();
    let mut acc = 0.0;
    for k_free in 0..=law.repetitions() {
        let p = law.p_cf(k_free, u)?;
        if p > 0.0 {
            acc += p * (z - truncated_gamma_mean(z, k_free as f64, ch.theta));
        }
    }
    Ok(acc.clamp(0.0, z))
}

/// Outage probability of a second SIC round after l1 users were cancelled:
/// the newly released slots contribute a gamma SNR with mean-count shape
/// K̂(U - l1) - K̂(U), which must exceed the residual SNR.
pub fn outage_sic_round2(
    l1: u64,
    ch: ChannelParams,
    u: u64,
    law: &AccessLaw,
) -> Result<f64, AnalyticError> {
    assert!(l1 >= 1 && l1 <= u - 1);
    let rho = residual_snr(ch, u, law)?;
    if rho <= 0.0 {
        return Ok(0.0);
    }
    let gain = law.expected_free_slots(u - l1)? - law.expected_free_slots(u)?;
    if gain <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_cdf(rho, GammaParams::new(gain, ch.theta)))
}

/// Three-round SIC outage conditioned on S non-cancelable users: round
/// decode counts are approximated as binomial, the reference user is
/// decoded against the residual population.
pub fn outage_sic_conditional(
    ch: ChannelParams,
    u: u64,
    s: u64,
    law: &AccessLaw,
) -> Result<f64, AnalyticError> {
    assert!(s <= u - 1);
    let p1 = outage_collision(ch, u, law)?;
    let peers = u - 1 - s;
    let mut total = p1.powi((u - s) as i32);
    for l1 in 1..=peers {
        let w1 = binomial_pmf(l1, peers, 1.0 - p1);
        if w1 == 0.0 {
            continue;
        }
        let p2 = outage_sic_round2(l1, ch, u, law)?;
        for l2 in 0..=(peers - l1) {
            let w2 = binomial_pmf(l2, peers - l1, 1.0 - p2);
            if w2 == 0.0 {
                continue;
            }
            total += w1 * w2 * outage_collision(ch, u - l1 - l2, law)?;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Probability of exactly one stopping set of order n among U active users,
/// treating the C(U, n) pattern tuples as independent trials.
pub fn q1_stopping(n: u32, u: u64, count: u64, codebook_size: u64) -> f64 {
    if count == 0 || u < n as u64 {
        return 0.0;
    }
    let trials = binom(u as i64, n as i64);
    let p = count as f64 / binom(codebook_size as i64, n as i64);
    if trials <= 1.0 {
        return (trials * p).min(1.0);
    }
    // f_bin(1; trials, p) in log space; trials can exceed integer range
    (trials.ln() + p.ln() + (trials - 1.0) * (-p).ln_1p()).exp()
}

/// Collision+SIC outage approximation: mixture over the dominant stopping-set
/// orders of the conditional three-round outage. Steiner-only.
pub fn outage_collision_sic(
    ch: ChannelParams,
    u: u64,
    law: &AccessLaw,
    ctx: &SicContext,
) -> Result<f64, AnalyticError> {
    if !matches!(law, AccessLaw::Steiner { .. }) {
        return Err(AnalyticError::RandomLawUnsupported);
    }
    let mut q_total = 0.0;
    let mut acc = 0.0;
    for &(n, count) in &ctx.orders {
        let q1 = q1_stopping(n, u, count, ctx.codebook_size);
        if q1 == 0.0 {
            continue;
        }
        q_total += q1;
        let n = n as u64;
        let mut term = n as f64 / u as f64;
        if u > n {
            term += (u - n) as f64 / u as f64 * outage_sic_conditional(ch, u, n, law)?;
        }
        acc += q1 * term;
    }
    acc += (1.0 - q_total) * outage_sic_conditional(ch, u, 0, law)?;
    Ok(acc.clamp(0.0, 1.0))
}

/// SINR density of one replica given L interferers in its slot,
/// f(z) = e^{-z/θ}(θL + z + 1) / (θ (z+1)^{L+1}); L = 0 is exponential.
pub fn sinr_pdf_given_l(z: f64, theta: f64, l: u64) -> f64 {
    assert!(z >= 0.0 && theta > 0.0);
    let lf = l as f64;
    (-z / theta).exp() * (theta * lf + z + 1.0) / (theta * (z + 1.0).powi(l as i32 + 1))
}

/// SINR density of a known-interfered slot: mixture of the per-L densities
/// with the conditional interferer pmf renormalized to L >= 1.
pub fn i_sinr_pdf(
    z: f64,
    theta: f64,
    u: u64,
    k_free: u64,
    law: &AccessLaw,
) -> Result<f64, AnalyticError> {
    let p0 = law.p_int_cond(0, k_free, u);
    let norm = 1.0 - p0;
    if norm <= 0.0 {
        return Err(AnalyticError::DegenerateConditioning);
    }
    let mut acc = 0.0;
    for l in 1..u {
        let w = law.p_int_cond(l, k_free, u);
        if w > 0.0 {
            acc += w / norm * sinr_pdf_given_l(z, theta, l);
        }
    }
    Ok(acc)
}

/// Full-MRC outage: the total SINR is the gamma(K', θ) contribution of the
/// collision-free slots plus K - K' i.i.d. interfered-slot SINRs, evaluated
/// by grid convolution at the threshold.
pub fn outage_full_mrc(ch: ChannelParams, u: u64, law: &AccessLaw) -> Result<f64, AnalyticError> {
    outage_full_mrc_grid(ch, u, law, DEFAULT_GRID_POINTS)
}

/// As `outage_full_mrc` with an explicit grid resolution (refinement checks).
pub fn outage_full_mrc_grid(
    ch: ChannelParams,
    u: u64,
    law: &AccessLaw,
    grid_points: usize,
) -> Result<f64, AnalyticError> {
    let z = ch.threshold();
    let k = law.repetitions();
    let mut acc = 0.0;
    for k_free in 0..=k {
        let p = law.p_cf(k_free, u)?;
        if p == 0.0 {
            continue;
        }
        let gamma = GammaParams::new(k_free as f64, ch.theta);
        let term = if k_free == k {
            gamma_cdf(z, gamma)
        } else {
            let pdf = DiscretizedPdf::sample(
                |s| i_sinr_pdf(s, ch.theta, u, k_free, law).unwrap_or(0.0),
                z,
                grid_points,
            );
            let parts = vec![pdf; (k - k_free) as usize];
            cdf_of_convolution(&parts, |x| gamma_cdf(x, gamma), z)?
        };
        acc += p * term;
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// Least-squares gamma fit to an arbitrary density over [0, upper]:
/// moment-matched initialization polished by Nelder–Mead on the integrated
/// squared error (64-interval quadrature).
pub fn fit_gamma_density(
    target: impl Fn(f64) -> f64,
    upper: f64,
) -> Result<GammaParams, AnalyticError> {
    assert!(upper > 0.0);
    const QUAD: usize = 64;
    let step = upper / QUAD as f64;
    let nodes: Vec<(f64, f64)> = (0..=QUAD)
        .map(|i| {
            let w = if i == 0 || i == QUAD {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (i as f64 * step, w * step / 3.0)
        })
        .collect();
    let samples: Vec<(f64, f64, f64)> = nodes.iter().map(|&(x, w)| (x, w, target(x))).collect();

    // moment-matched start restricted to the fit window
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &(x, w, f) in &samples {
        m0 += w * f;
        m1 += w * x * f;
        m2 += w * x * x * f;
    }
    let mean = (m1 / m0.max(1e-300)).max(1e-6);
    let var = (m2 / m0.max(1e-300) - mean * mean).max(1e-9);
    // start inside the feasible region: shapes below 1 put a pole of the pdf
    // at the x = 0 quadrature node, which the objective treats as infeasible
    let init = [
        (mean * mean / var).max(1.0).ln(),
        (var / mean).max(1e-6).ln(),
    ];

    let objective = |p: &[f64; 2]| -> f64 {
        let params = GammaParams::new(p[0].exp(), p[1].exp());
        let sum: f64 = samples
            .iter()
            .map(|&(x, w, f)| {
                let d = gamma_pdf(x, params) - f;
                w * d * d
            })
            .sum();
        if sum.is_finite() {
            sum
        } else {
            f64::MAX
        }
    };

    // Nelder-Mead in log-parameter space
    let mut simplex = [init, [init[0] + 0.2, init[1]], [init[0], init[1] + 0.2]];
    let mut fv = [
        objective(&simplex[0]),
        objective(&simplex[1]),
        objective(&simplex[2]),
    ];
    for _ in 0..2000 {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap());
        let (lo, mid, hi) = (idx[0], idx[1], idx[2]);
        if (fv[hi] - fv[lo]).abs() <= 1e-8 * fv[lo].abs().max(1e-300) {
            break;
        }
        let centroid = [
            0.5 * (simplex[lo][0] + simplex[mid][0]),
            0.5 * (simplex[lo][1] + simplex[mid][1]),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - simplex[hi][0]),
            centroid[1] + (centroid[1] - simplex[hi][1]),
        ];
        let fr = objective(&reflect);
        if fr < fv[lo] {
            let expand = [
                centroid[0] + 2.0 * (centroid[0] - simplex[hi][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[hi][1]),
            ];
            let fe = objective(&expand);
            if fe < fr {
                simplex[hi] = expand;
                fv[hi] = fe;
            } else {
                simplex[hi] = reflect;
                fv[hi] = fr;
            }
        } else if fr < fv[mid] {
            simplex[hi] = reflect;
            fv[hi] = fr;
        } else {
            let contract = [
                centroid[0] + 0.5 * (simplex[hi][0] - centroid[0]),
                centroid[1] + 0.5 * (simplex[hi][1] - centroid[1]),
            ];
            let fc = objective(&contract);
            if fc < fv[hi] {
                simplex[hi] = contract;
                fv[hi] = fc;
            } else {
                for i in [mid, hi] {
                    simplex[i] = [
                        0.5 * (simplex[lo][0] + simplex[i][0]),
                        0.5 * (simplex[lo][1] + simplex[i][1]),
                    ];
                    fv[i] = objective(&simplex[i]);
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap())
        .unwrap();
    let params = GammaParams::new(simplex[best][0].exp(), simplex[best][1].exp());
    if !fv[best].is_finite() {
        return Err(AnalyticError::OptimizerFailed {
            shape: params.shape,
            scale: params.scale,
            objective: fv[best],
        });
    }
    Ok(params)
}

/// Gamma approximation of the interfered-slot SINR density over the outage
/// window [0, 2^R - 1].
pub fn gamma_fit(
    theta: f64,
    u: u64,
    k_free: u64,
    law: &AccessLaw,
    rate: f64,
) -> Result<GammaParams, AnalyticError> {
    let p0 = law.p_int_cond(0, k_free, u);
    if 1.0 - p0 <= 0.0 {
        return Err(AnalyticError::DegenerateConditioning);
    }
    let upper = (2f64).powf(rate) - 1.0;
    fit_gamma_density(
        |z| i_sinr_pdf(z, theta, u, k_free, law).unwrap_or(0.0),
        upper,
    )
}

/// CDF at z of the sum of two independent gamma variables with arbitrary
/// shapes and scales, by adaptive quadrature of the Kummer-form density of
/// gamma(shape1, scale1) + gamma(shape2, scale2).
pub fn gamma_sum_cdf(
    z: f64,
    shape1: f64,
    scale1: f64,
    shape2: f64,
    scale2: f64,
) -> Result<f64, AnalyticError> {
    if z <= 0.0 {
        return Ok(0.0);
    }
    if shape1 == 0.0 {
        return Ok(gamma_cdf(z, GammaParams::new(shape2, scale2)));
    }
    if shape2 == 0.0 {
        return Ok(gamma_cdf(z, GammaParams::new(shape1, scale1)));
    }
    let kappa = shape1 + shape2;
    let ln_gamma_kappa = statrs::function::gamma::ln_gamma(kappa);
    let pdf = |x: f64| -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let ln = shape1 * (scale2 / scale1).ln() + (kappa - 1.0) * x.ln()
            - x / scale2
            - kappa * scale2.ln()
            - ln_gamma_kappa;
        let f1 = kummer_1f1(shape1, kappa, x / scale2 - x / scale1).unwrap_or(f64::NAN);
        ln.exp() * f1
    };
    Ok(adaptive_simpson(&pdf, 0.0, z, 1e-10).clamp(0.0, 1.0))
}

/// Full-MRC outage via the gamma approximation: each interfered slot is
/// replaced by its fitted gamma, the K - K' slots collapse by gamma closure,
/// and the final sum cdf is evaluated in Kummer form.
pub fn outage_full_mrc_gamma(
    ch: ChannelParams,
    u: u64,
    law: &AccessLaw,
) -> Result<f64, AnalyticError> {
    let z = ch.threshold();
    let k = law.repetitions();
    let mut acc = 0.0;
    for k_free in 0..=k {
        let p = law.p_cf(k_free, u)?;
        if p == 0.0 {
            continue;
        }
        let term = if k_free == k {
            gamma_cdf(z, GammaParams::new(k as f64, ch.theta))
        } else {
            let fit = gamma_fit(ch.theta, u, k_free, law, ch.rate)?;
            gamma_sum_cdf(
                z,
                k_free as f64,
                ch.theta,
                (k - k_free) as f64 * fit.shape,
                fit.scale,
            )?
        };
        acc += p * term;
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// Per-slot pilot-collision event probabilities: type I (an interferer picked
/// the reference user's pilot, replica lost) and type II (the reference pilot
/// is intact but interferers collide among themselves).
pub fn pilot_event_probs(u: u64, q: u32, law: &AccessLaw) -> (f64, f64) {
    assert!(q >= 1);
    let qf = q as f64;
    let mut p1 = 0.0;
    let mut p2 = 0.0;
    for l in 1..u {
        let w = law.p_int(l, u);
        if w == 0.0 {
            continue;
        }
        let miss_user = (1.0 - 1.0 / qf).powi(l as i32);
        p1 += w * (1.0 - miss_user);
        if l >= 2 {
            // all L interferers distinct among themselves and from the
            // reference pilot; the complement within the no-hit event is a
            // type-II collision
            let mut no_hit_distinct = 1.0;
            for i in 1..=l {
                no_hit_distinct *= (qf - i as f64).max(0.0) / qf;
            }
            p2 += w * (miss_user - no_hit_distinct);
        }
    }
    (p1.clamp(0.0, 1.0), p2.clamp(0.0, 1.0))
}

/// High-SNR lower bound on the SIC outage with a finite pilot pool: replicas
/// hit by type-I collisions are lost, type-II collisions cap the replica SINR
/// at a beta-prime(n, 2) sum.
pub fn pilot_bound(ch: ChannelParams, u: u64, q: u32, law: &AccessLaw) -> f64 {
    let (p1, p2) = pilot_event_probs(u, q, law);
    let z = ch.threshold();
    let k = law.repetitions();
    let mut acc = p1.powi(k as i32);
    for n in 1..=k {
        acc += binom(k as i64, n as i64)
            * p1.powi((k - n) as i32)
            * p2.powi(n as i32)
            * crate::numerics::beta_prime_cdf(z, n as f64, 2.0);
    }
    acc.clamp(0.0, 1.0)
}

/// Marginalize a per-U outage function over the binomial activation law,
/// truncating once the remaining tail mass is below `tail_cut` (the skipped
/// terms contribute at most that much). The U = 0 term contributes 0.
pub fn marginalize_over_u(
    point_fn: impl Fn(u64) -> f64,
    activation: &ActivationLaw,
    tail_cut: f64,
) -> f64 {
    let mut acc = 0.0;
    let mut mass_seen = activation.pmf(0);
    for u in 1..=activation.population {
        let w = activation.pmf(u);
        mass_seen += w;
        if w > 0.0 {
            acc += w * point_fn(u);
        }
        if 1.0 - mass_seen < tail_cut {
            break;
        }
    }
    acc
}

/// Sensitivity-check variant of [`marginalize_over_u`]: conditions on the
/// reference user being active, so U - 1 peers follow Binomial(N - 1, b)
/// and the weight of U = u is f_bin(u - 1; N - 1, b).
pub fn marginalize_over_u_peers(
    point_fn: impl Fn(u64) -> f64,
    activation: &ActivationLaw,
    tail_cut: f64,
) -> f64 {
    if activation.population == 0 {
        return 0.0;
    }
    let peers = ActivationLaw::new(activation.population - 1, activation.activation_prob);
    let mut acc = 0.0;
    let mut mass_seen = 0.0;
    for u in 1..=activation.population {
        let w = peers.pmf(u - 1);
        mass_seen += w;
        if w > 0.0 {
            acc += w * point_fn(u);
        }
        if 1.0 - mass_seen < tail_cut {
            break;
        }
    }
    acc
}
