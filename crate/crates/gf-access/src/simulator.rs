//! Monte Carlo frame-level simulation of grant-free access with K-repetition
//! coding, for four receiver models (collision, collision + SIC, full MRC,
//! full MRC + SIC) and the pilot / exact-combiner impairment variants.
//!
//! The simulation is SINR-level: no baseband symbols are synthesized, since
//! outage under the Gaussian model is a deterministic function of the
//! per-slot SINRs. Channel gains are drawn as complex circular Gaussians
//! with unit-mean power, so |g|^2 is exactly a unit-mean exponential; the
//! power-based models use |g|^2, and the exact-combiner model additionally
//! uses the phases. Drawing complex gains unconditionally keeps the random
//! stream identical across receiver models for a given seed, which makes
//! paired-seed comparisons meaningful.
//!
//! Every frame uses an independent random stream derived from the master
//! seed and the frame index, so results are bit-identical for any worker
//! count and any scheduling order.

use crate::codebook::{
    assign_pilots, sample_random_pattern, CodebookMode, Pattern, PatternCodebook, PilotSchedule,
};
use crate::combinatorics::ActivationLaw;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Receiver processing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiverModel {
    /// Only collision-free replicas are combined; interfered replicas are erased.
    Collision,
    /// Collision model plus successive interference cancellation.
    CollisionSic,
    /// All replicas combined, interference treated as noise (idealized
    /// sum-of-SINRs combiner).
    FullMrc,
    /// Full MRC plus successive interference cancellation.
    FullMrcSic,
}

impl ReceiverModel {
    pub fn uses_sic(self) -> bool {
        matches!(
            self,
            ReceiverModel::CollisionSic | ReceiverModel::FullMrcSic
        )
    }

    pub fn uses_mrc(self) -> bool {
        matches!(self, ReceiverModel::FullMrc | ReceiverModel::FullMrcSic)
    }
}

/// Receiver model plus impairment switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub model: ReceiverModel,
    /// Finite pilot pool of size Q. Random law: each active user draws one
    /// pilot per activation; Steiner law: the deterministic collision-free
    /// schedule is used (requires Q >= D).
    pub pilots: Option<u32>,
    /// Experimental variant: redraw the pilot independently in every slot
    /// (Random law only; the per-activation draw is the default reading).
    pub pilot_per_slot: bool,
    /// Use the exact combiner SINR (complex weights) instead of the
    /// idealized sum of per-slot SINRs.
    pub correlated_mrc: bool,
}

impl ReceiverSpec {
    pub fn new(model: ReceiverModel) -> Self {
        Self {
            model,
            pilots: None,
            pilot_per_slot: false,
            correlated_mrc: false,
        }
    }

    pub fn with_pilots(mut self, q: u32) -> Self {
        self.pilots = Some(q);
        self
    }

    pub fn with_correlated_mrc(mut self) -> Self {
        self.correlated_mrc = true;
        self
    }
}

/// Outcome of a simulation run, with per-activation outage frequency and a
/// Wilson score interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutageEstimate {
    /// outage_events / activations (NaN when no user was ever active)
    pub estimate: f64,
    pub outage_events: u64,
    pub activations: u64,
    /// Wilson score interval at 95%
    pub ci_low: f64,
    pub ci_high: f64,
    /// interval method identifier
    pub ci_method: String,
    pub master_seed: u64,
    pub frames: u64,
}

impl OutageEstimate {
    /// Wilson interval at an arbitrary normal quantile (e.g. 2.5758 for 99%).
    pub fn wilson_ci(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.outage_events, self.activations, z)
    }
}

/// Normal quantile for the default 95% interval.
pub const Z_95: f64 = 1.959963984540054;
/// Normal quantile for a 99% interval.
pub const Z_99: f64 = 2.5758293035489004;

/// Wilson score interval for `events` successes in `trials` Bernoulli trials.
/// Returns (NaN, NaN) when `trials` is 0.
pub fn wilson_interval(events: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One frame: the set of active users with their access patterns, complex
/// channel gains per own slot, and (optionally) pilot indices per own slot.
#[derive(Debug, Clone)]
pub struct FrameRealization {
    /// access pattern of each active user
    pub patterns: Vec<Pattern>,
    /// complex gain [re, im] per (active user, own-slot position); the power
    /// gain is re^2 + im^2 and is a unit-mean exponential
    pub gains: Vec<Vec<[f64; 2]>>,
    /// pilot index per (active user, own-slot position), if pilots are modeled
    pub pilots: Option<Vec<Vec<u32>>>,
}

impl FrameRealization {
    pub fn active_users(&self) -> usize {
        self.patterns.len()
    }
}

/// Derive the independent random stream of one frame from the master seed.
fn frame_rng(master_seed: u64, frame_idx: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over a distinct word per frame
    let mut x = master_seed ^ frame_idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&next().to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Draw one frame: per-user Bernoulli(b) activation, pattern assignment
/// (Steiner: distinct patterns without replacement; Random: i.i.d. uniform
/// K-subsets), unit-mean complex gains, and pilot draws when applicable.
pub fn sample_frame(
    codebook: &PatternCodebook,
    activation: &ActivationLaw,
    pilots: Option<(u32, bool)>,
    schedule: Option<&PilotSchedule>,
    rng: &mut ChaCha8Rng,
) -> FrameRealization {
    let mut u = 0usize;
    for _ in 0..activation.population {
        if rng.gen::<f64>() < activation.activation_prob {
            u += 1;
        }
    }
    let k = codebook.k as usize;
    let (patterns, pattern_ids): (Vec<Pattern>, Vec<usize>) = match codebook.mode {
        CodebookMode::Steiner => {
            assert!(
                u <= codebook.size(),
                "more active users than Steiner patterns; population must be <= C"
            );
            let ids = rand::seq::index::sample(rng, codebook.size(), u);
            let pats = ids.iter().map(|i| codebook.patterns()[i].clone()).collect();
            (pats, ids.iter().collect())
        }
        CodebookMode::Random => {
            let pats: Vec<Pattern> = (0..u)
                .map(|_| sample_random_pattern(codebook.m, codebook.k, rng))
                .collect();
            let ids = vec![usize::MAX; u];
            (pats, ids)
        }
    };
    let gains: Vec<Vec<[f64; 2]>> = (0..u)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let re: f64 =
                        rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
                    let im: f64 =
                        rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
                    [re, im]
                })
                .collect()
        })
        .collect();
    let pilots = pilots.map(|(q, per_slot)| {
        (0..u)
            .map(|i| match schedule {
                Some(sched) => (0..k).map(|pos| sched.pilot(pattern_ids[i], pos)).collect(),
                None => {
                    if per_slot {
                        (0..k).map(|_| rng.gen_range(0..q)).collect()
                    } else {
                        let p = rng.gen_range(0..q);
                        vec![p; k]
                    }
                }
            })
            .collect()
    });
    FrameRealization {
        patterns,
        gains,
        pilots,
    }
}

/// Precomputed per-frame decoding state: slot occupancy and pilot
/// contamination flags.
pub struct DecodingContext<'a> {
    pub frame: &'a FrameRealization,
    /// per slot: (user index, own-slot position) of each occupant
    pub occupants: Vec<Vec<(u32, u32)>>,
    /// contaminated[user][position]: the replica shares its pilot with a
    /// co-slot user, so it is unusable for combining and non-cancelable
    pub contaminated: Vec<Vec<bool>>,
}

impl<'a> DecodingContext<'a> {
    pub fn new(frame: &'a FrameRealization, m: u32) -> Self {
        let mut occupants = vec![Vec::new(); m as usize];
        for (i, p) in frame.patterns.iter().enumerate() {
            for (pos, &s) in p.slots().iter().enumerate() {
                occupants[s as usize].push((i as u32, pos as u32));
            }
        }
        let mut contaminated: Vec<Vec<bool>> = frame
            .patterns
            .iter()
            .map(|p| vec![false; p.len()])
            .collect();
        if let Some(pilots) = &frame.pilots {
            for occ in &occupants {
                for a in 0..occ.len() {
                    for b in a + 1..occ.len() {
                        let (ia, pa) = occ[a];
                        let (ib, pb) = occ[b];
                        if pilots[ia as usize][pa as usize] == pilots[ib as usize][pb as usize] {
                            contaminated[ia as usize][pa as usize] = true;
                            contaminated[ib as usize][pb as usize] = true;
                        }
                    }
                }
            }
        }
        Self {
            frame,
            occupants,
            contaminated,
        }
    }

    fn power(&self, user: u32, pos: u32) -> f64 {
        let [re, im] = self.frame.gains[user as usize][pos as usize];
        re * re + im * im
    }

    /// A decoded user's replica can be removed from a slot unless its channel
    /// estimate there is contaminated (pilot type-II event).
    fn cancelable(&self, user: u32, pos: u32) -> bool {
        !self.contaminated[user as usize][pos as usize]
    }
}

/// Collision-model SNR: MRC over the user's replicas that are alone in their
/// slot once `removed` users are cancelled.
fn collision_snr(ctx: &DecodingContext, user: usize, theta: f64, removed: &[bool]) -> f64 {
    let pattern = &ctx.frame.patterns[user];
    let mut acc = 0.0;
    'slots: for (pos, &s) in pattern.slots().iter().enumerate() {
        for &(j, jpos) in &ctx.occupants[s as usize] {
            if j as usize != user && !(removed[j as usize] && ctx.cancelable(j, jpos)) {
                continue 'slots;
            }
        }
        if !ctx.contaminated[user][pos] {
            acc += ctx.power(user as u32, pos as u32);
        }
    }
    theta * acc
}

/// Idealized full-MRC SINR: sum over usable replicas of the per-slot SINR,
/// treating residual interference as noise.
pub fn idealized_mrc_sinr(ctx: &DecodingContext, user: usize, theta: f64, removed: &[bool]) -> f64 {
    let pattern = &ctx.frame.patterns[user];
    let mut acc = 0.0;
    for (pos, &s) in pattern.slots().iter().enumerate() {
        if ctx.contaminated[user][pos] {
            continue;
        }
        let mut interference = 0.0;
        for &(j, jpos) in &ctx.occupants[s as usize] {
            if j as usize != user && !(removed[j as usize] && ctx.cancelable(j, jpos)) {
                interference += ctx.power(j, jpos);
            }
        }
        acc += theta * ctx.power(user as u32, pos as u32) / (1.0 + theta * interference);
    }
    acc
}

/// Exact combiner SINR with weights w_j = conj(g_j) / (1 + theta I_j):
/// interference from a user present in several of the reference user's slots
/// adds coherently across those slots.
pub fn exact_mrc_sinr(ctx: &DecodingContext, user: usize, theta: f64, removed: &[bool]) -> f64 {
    let pattern = &ctx.frame.patterns[user];
    // per usable own slot: (slot, position, weight as complex [re, im])
    let mut signal = 0.0; // sum of |g_j|^2 / (1 + theta I_j), real by construction
    let mut noise = 0.0; // sum of |w_j|^2
    let mut weights: Vec<(u32, [f64; 2])> = Vec::with_capacity(pattern.len());
    for (pos, &s) in pattern.slots().iter().enumerate() {
        if ctx.contaminated[user][pos] {
            continue;
        }
        let mut interference = 0.0;
        for &(j, jpos) in &ctx.occupants[s as usize] {
            if j as usize != user && !(removed[j as usize] && ctx.cancelable(j, jpos)) {
                interference += ctx.power(j, jpos);
            }
        }
        let [re, im] = ctx.frame.gains[user][pos];
        let denom = 1.0 + theta * interference;
        let w = [re / denom, -im / denom]; // conj(g) / (1 + theta I)
        signal += (re * re + im * im) / denom;
        noise += w[0] * w[0] + w[1] * w[1];
        weights.push((s, w));
    }
    if weights.is_empty() {
        return 0.0;
    }
    // coherent interference: for each residual interferer, sum w_j * g_{j,k}
    // over the shared slots (accumulated per user index for determinism)
    let mut acc = vec![[0.0f64; 2]; ctx.frame.active_users()];
    let mut touched = vec![false; ctx.frame.active_users()];
    for &(s, w) in &weights {
        for &(j, jpos) in &ctx.occupants[s as usize] {
            if j as usize == user || (removed[j as usize] && ctx.cancelable(j, jpos)) {
                continue;
            }
            let [gre, gim] = ctx.frame.gains[j as usize][jpos as usize];
            acc[j as usize][0] += w[0] * gre - w[1] * gim;
            acc[j as usize][1] += w[0] * gim + w[1] * gre;
            touched[j as usize] = true;
        }
    }
    let mut interference_total = 0.0;
    for (j, [re, im]) in acc.iter().enumerate() {
        if touched[j] {
            interference_total += re * re + im * im;
        }
    }
    theta * signal * signal / (theta * interference_total + noise)
}

/// Achieved SINR (or SNR) of one user under the given receiver spec.
fn achieved_sinr(
    ctx: &DecodingContext,
    user: usize,
    theta: f64,
    spec: &ReceiverSpec,
    removed: &[bool],
) -> f64 {
    if spec.model.uses_mrc() {
        if spec.correlated_mrc {
            exact_mrc_sinr(ctx, user, theta, removed)
        } else {
            idealized_mrc_sinr(ctx, user, theta, removed)
        }
    } else {
        collision_snr(ctx, user, theta, removed)
    }
}

/// Decode every user of a frame. Returns per-user success flags. With SIC,
/// rounds are simultaneous: all users passing the threshold in a round are
/// removed together; the loop ends when a round decodes nobody (at most U
/// iterations). A tie at the threshold counts as success.
pub fn decode_frame(ctx: &DecodingContext, theta: f64, z: f64, spec: &ReceiverSpec) -> Vec<bool> {
    let u = ctx.frame.active_users();
    let mut decoded = vec![false; u];
    loop {
        let mut newly = Vec::new();
        for i in 0..u {
            if decoded[i] {
                continue;
            }
            if achieved_sinr(ctx, i, theta, spec, &decoded) >= z {
                newly.push(i);
            }
        }
        if !spec.model.uses_sic() {
            for i in newly {
                decoded[i] = true;
            }
            return decoded;
        }
        if newly.is_empty() {
            return decoded;
        }
        for i in newly {
            decoded[i] = true;
        }
    }
}

/// Run `frames` Monte Carlo frames and estimate the per-activation outage
/// probability. Deterministic for fixed inputs and master seed, independent
/// of the rayon worker count.
pub fn simulate(
    codebook: &PatternCodebook,
    activation: &ActivationLaw,
    theta: f64,
    rate: f64,
    spec: &ReceiverSpec,
    frames: u64,
    master_seed: u64,
) -> OutageEstimate {
    assert!(frames >= 1);
    let z = 2f64.powf(rate) - 1.0;
    let schedule = match (spec.pilots, codebook.mode) {
        (Some(q), CodebookMode::Steiner) => {
            Some(assign_pilots(codebook, q).expect("pilot pool smaller than slot degree D"))
        }
        _ => None,
    };
    let pilot_cfg = spec.pilots.map(|q| (q, spec.pilot_per_slot));
    let (outage_events, activations) = (0..frames)
        .into_par_iter()
        .map(|idx| {
            let mut rng = frame_rng(master_seed, idx);
            let frame = sample_frame(codebook, activation, pilot_cfg, schedule.as_ref(), &mut rng);
            let ctx = DecodingContext::new(&frame, codebook.m);
            let decoded = decode_frame(&ctx, theta, z, spec);
            #[cfg(debug_assertions)]
            if spec.model == ReceiverModel::CollisionSic {
                let plain =
                    decode_frame(&ctx, theta, z, &ReceiverSpec::new(ReceiverModel::Collision));
                for i in 0..decoded.len() {
                    debug_assert!(
                        !plain[i] || decoded[i],
                        "SIC lost a collision-model success"
                    );
                }
            }
            let u = decoded.len() as u64;
            let fails = decoded.iter().filter(|&&d| !d).count() as u64;
            (fails, u)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let estimate = if activations == 0 {
        f64::NAN
    } else {
        outage_events as f64 / activations as f64
    };
    let (ci_low, ci_high) = wilson_interval(outage_events, activations, Z_95);
    OutageEstimate {
        estimate,
        outage_events,
        activations,
        ci_low,
        ci_high,
        ci_method: "wilson-95".to_string(),
        master_seed,
        frames,
    }
}
