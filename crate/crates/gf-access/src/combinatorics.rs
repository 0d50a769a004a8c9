//! Exact probability mass functions for collision-free slot counts and
//! interferer counts, for random and Steiner access patterns, plus the
//! binomial activation law.
//!
//! Binomials with negative or undersized upper index evaluate to 0 so the
//! lemma sums truncate naturally. Evaluation is done in log space with an
//! exact integer fast path for small arguments.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CombinatoricsError {
    #[error("U = {u} exceeds codebook size C = {c}")]
    UTooLarge { u: u64, c: u64 },
}

/// Access-pattern law: the parameters of the pattern selection process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccessLaw {
    /// Uniform selection of a K-subset of the M slots, independently per user.
    Random { m: u64, k: u64 },
    /// Distinct patterns from a Steiner system S(t, K, M) with C patterns,
    /// every slot covered by exactly D of them.
    Steiner {
        m: u64,
        k: u64,
        t: u64,
        c: u64,
        d: u64,
    },
}

impl AccessLaw {
    pub fn repetitions(&self) -> u64 {
        match *self {
            AccessLaw::Random { k, .. } | AccessLaw::Steiner { k, .. } => k,
        }
    }

    pub fn slots(&self) -> u64 {
        match *self {
            AccessLaw::Random { m, .. } | AccessLaw::Steiner { m, .. } => m,
        }
    }

    /// Number of users the law can support simultaneously.
    pub fn max_users(&self) -> Option<u64> {
        match *self {
            AccessLaw::Random { .. } => None,
            AccessLaw::Steiner { c, .. } => Some(c),
        }
    }

    /// P(K' collision-free slots | U active users).
    pub fn p_cf(&self, k_free: u64, u: u64) -> Result<f64, CombinatoricsError> {
        match *self {
            AccessLaw::Random { m, k } => Ok(p_cf_random(k_free, u, m, k)),
            AccessLaw::Steiner { k, c, d, .. } => p_cf_steiner(k_free, u, c, d, k),
        }
    }

    /// P(L interferers in a given slot of the reference user | U active users).
    pub fn p_int(&self, l: u64, u: u64) -> f64 {
        match *self {
            AccessLaw::Random { m, k } => p_int_random(l, u, m, k),
            AccessLaw::Steiner { c, d, .. } => p_int_steiner(l, u, c, d),
        }
    }

    /// Interferer pmf conditioned on the reference user having K' collision-free
    /// slots; evaluated in one of its remaining (potentially interfered) slots.
    pub fn p_int_cond(&self, l: u64, k_free: u64, u: u64) -> f64 {
        match *self {
            AccessLaw::Random { m, k } => p_int_random_cond(l, k_free, u, m, k),
            AccessLaw::Steiner { c, d, .. } => p_int_steiner_cond(l, k_free, u, c, d),
        }
    }

    /// Expected number of collision-free slots K̂(U).
    pub fn expected_free_slots(&self, u: u64) -> Result<f64, CombinatoricsError> {
        let k = self.repetitions();
        let mut acc = 0.0;
        for k_free in 1..=k {
            acc += k_free as f64 * self.p_cf(k_free, u)?;
        }
        Ok(acc)
    }
}

/// ln C(a, b), or None when the binomial is 0 (b > a or negative a).
pub(crate) fn ln_binom(a: i64, b: i64) -> Option<f64> {
    if b < 0 || a < b {
        return None;
    }
    if b == 0 || b == a {
        return Some(0.0);
    }
    Some(ln_gamma(a as f64 + 1.0) - ln_gamma(b as f64 + 1.0) - ln_gamma((a - b) as f64 + 1.0))
}

/// Exact C(a, b) when it fits in u128.
fn binom_u128(a: i64, b: i64) -> Option<u128> {
    if b < 0 || a < b {
        return Some(0);
    }
    let b = b.min(a - b) as u128;
    let a = a as u128;
    let mut acc: u128 = 1;
    for i in 0..b {
        acc = acc.checked_mul(a - i)?;
        acc /= i + 1; // divides exactly: acc is C(a-i+..., i+1) * remaining
    }
    Some(acc)
}

/// Ratio C(a1, b) / C(a2, b) with the zero convention, exact when both fit
/// in u128 and within ~1e-13 relative error otherwise.
fn binom_ratio(a1: i64, a2: i64, b: i64) -> f64 {
    debug_assert!(a2 >= b && b >= 0);
    if a1 < b {
        return 0.0;
    }
    if let (Some(n), Some(d)) = (binom_u128(a1, b), binom_u128(a2, b)) {
        return n as f64 / d as f64;
    }
    // ln-space fallback for large arguments
    (ln_binom(a1, b).unwrap() - ln_binom(a2, b).unwrap()).exp()
}

/// C(a, b) as f64 with the zero convention.
pub(crate) fn binom(a: i64, b: i64) -> f64 {
    match binom_u128(a, b) {
        Some(v) => v as f64,
        None => match ln_binom(a, b) {
            None => 0.0,
            Some(l) => l.exp(),
        },
    }
}

/// Lemma 1: collision-free slot pmf under random selection.
pub fn p_cf_random(k_free: u64, u: u64, m: u64, k: u64) -> f64 {
    assert!(u >= 1 && k_free <= k && k <= m);
    if u == 1 {
        return if k_free == k { 1.0 } else { 0.0 };
    }
    let (m, k, kf) = (m as i64, k as i64, k_free as i64);
    let mut sum = 0.0;
    for n in 0..=(k - kf) {
        let a_n = binom(k - kf, n);
        let v_n = binom_ratio(m - kf - n, m, k).powi(u as i32 - 1);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * a_n * v_n;
    }
    (binom(k, kf) * sum).clamp(0.0, 1.0)
}

/// Lemma 2: collision-free slot pmf under Steiner patterns.
pub fn p_cf_steiner(
    k_free: u64,
    u: u64,
    c: u64,
    d: u64,
    k: u64,
) -> Result<f64, CombinatoricsError> {
    assert!(u >= 1 && k_free <= k);
    if u > c {
        return Err(CombinatoricsError::UTooLarge { u, c });
    }
    if u == 1 {
        return Ok(if k_free == k { 1.0 } else { 0.0 });
    }
    let (c, d, k, kf) = (c as i64, d as i64, k as i64, k_free as i64);
    let mut sum = 0.0;
    for n in 0..=(k - kf) {
        let a_n = binom(k - kf, n);
        let w_n = binom_ratio(c - 1 - (d - 1) * (n + kf), c - 1, u as i64 - 1);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * a_n * w_n;
    }
    Ok((binom(k, kf) * sum).clamp(0.0, 1.0))
}

/// Interferer-count pmf in a slot of the reference user, random selection.
pub fn p_int_random(l: u64, u: u64, m: u64, k: u64) -> f64 {
    assert!(u >= 1 && k <= m);
    if l > u - 1 {
        return 0.0;
    }
    // C(M-1,K-1)/C(M,K) = K/M and C(M-1,K)/C(M,K) = (M-K)/M collapse the
    // expression to a binomial pmf with per-slot hit probability K/M.
    let p_hit = k as f64 / m as f64;
    binomial_pmf(l, u - 1, p_hit)
}

/// Binomial pmf with the exact fast path when C(n, x) fits in u128.
pub(crate) fn binomial_pmf(x: u64, n: u64, p: f64) -> f64 {
    if x > n {
        return 0.0;
    }
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let c = binom(n as i64, x as i64);
    if c.is_finite() && n <= 1_000 {
        c * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32)
    } else {
        (ln_binom(n as i64, x as i64).unwrap()
            + x as f64 * p.ln()
            + (n - x) as f64 * (1.0 - p).ln())
        .exp()
    }
}

/// Interferer-count pmf in a slot of the reference user, Steiner patterns.
/// Zero for L >= D (at most D-1 other patterns cover the slot).
pub fn p_int_steiner(l: u64, u: u64, c: u64, d: u64) -> f64 {
    assert!(u >= 1);
    if l > u - 1 || l >= d {
        return 0.0;
    }
    let (c, d, l, u) = (c as i64, d as i64, l as i64, u as i64);
    hypergeometric(d - 1, l, c - d, u - 1 - l, c - 1, u - 1)
}

/// C(a1,b1) * C(a2,b2) / C(a3,b3), exact in u128 when possible.
fn hypergeometric(a1: i64, b1: i64, a2: i64, b2: i64, a3: i64, b3: i64) -> f64 {
    if b1 < 0 || a1 < b1 || b2 < 0 || a2 < b2 {
        return 0.0;
    }
    if let (Some(n1), Some(n2), Some(den)) =
        (binom_u128(a1, b1), binom_u128(a2, b2), binom_u128(a3, b3))
    {
        if let Some(num) = n1.checked_mul(n2) {
            return num as f64 / den as f64;
        }
    }
    (ln_binom(a1, b1).unwrap() + ln_binom(a2, b2).unwrap() - ln_binom(a3, b3).unwrap()).exp()
}

/// Conditional interferer pmf given K' collision-free slots, random selection.
/// K' = 0 recovers the unconditional law.
pub fn p_int_random_cond(l: u64, k_free: u64, u: u64, m: u64, k: u64) -> f64 {
    assert!(u >= 1 && k_free <= k && k <= m);
    if l > u - 1 {
        return 0.0;
    }
    if m - k_free < k {
        // restricted pattern universe is empty; conditioning context impossible
        return 0.0;
    }
    // same collapse as in the unconditional case, with M replaced by M - K'
    let p_hit = k as f64 / (m - k_free) as f64;
    binomial_pmf(l, u - 1, p_hit)
}

/// Conditional interferer pmf given K' collision-free slots, Steiner patterns.
pub fn p_int_steiner_cond(l: u64, k_free: u64, u: u64, c: u64, d: u64) -> f64 {
    assert!(u >= 1);
    if l > u - 1 || l >= d {
        return 0.0;
    }
    let (c, d, kf, l, u) = (c as i64, d as i64, k_free as i64, l as i64, u as i64);
    let den_upper = c - 1 - (d - 1) * kf;
    if den_upper < u - 1 {
        // conditioning event impossible for this K'
        return 0.0;
    }
    hypergeometric(
        d - 1,
        l,
        c - 1 - (d - 1) * (kf + 1),
        u - 1 - l,
        den_upper,
        u - 1,
    )
}

/// Population activation: U ~ Binomial(N, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationLaw {
    pub population: u64,
    pub activation_prob: f64,
}

impl ActivationLaw {
    pub fn new(population: u64, activation_prob: f64) -> Self {
        assert!((0.0..=1.0).contains(&activation_prob));
        Self {
            population,
            activation_prob,
        }
    }

    /// Mean traffic intensity bN.
    pub fn mean_active(&self) -> f64 {
        self.population as f64 * self.activation_prob
    }

    /// Binomial pmf f_bin(u; b, N), evaluated in log space.
    pub fn pmf(&self, u: u64) -> f64 {
        activation_pmf(u, self)
    }
}

pub fn activation_pmf(u: u64, law: &ActivationLaw) -> f64 {
    let (n, b) = (law.population, law.activation_prob);
    if u > n {
        return 0.0;
    }
    if b == 0.0 {
        return if u == 0 { 1.0 } else { 0.0 };
    }
    if b == 1.0 {
        return if u == n { 1.0 } else { 0.0 };
    }
    let ln_p =
        ln_binom(n as i64, u as i64).unwrap() + u as f64 * b.ln() + (n - u) as f64 * (1.0 - b).ln();
    ln_p.exp()
}
