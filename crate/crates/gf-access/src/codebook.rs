//! Access-pattern codebooks: Steiner systems and random-selection descriptors.
//!
//! Covers loading and verifying bundled or external codebook files,
//! stopping-set enumeration, pilot scheduling and uniform pattern sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::AccessLaw;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(InvariantViolation),
    #[error("M = {0} is not congruent to 3 mod 6")]
    UnsupportedM(u32),
    #[error("C({m},{t}) is not divisible by C({k},{t}): no S({t},{k},{m}) exists")]
    NonIntegralDesign { t: u32, k: u32, m: u32 },
    #[error("pilot pool Q = {q} is smaller than D = {d}")]
    InsufficientPilots { q: u32, d: u32 },
    #[error("stopping-set search budget of {0} visited subsets exceeded")]
    BudgetExceeded(u64),
    #[error("operation requires a Steiner-mode codebook")]
    NotSteiner,
    #[error("unknown bundled system '{0}'")]
    UnknownSystem(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvariantViolation {
    /// Two patterns share more than t-1 slots.
    PairIntersection {
        first: usize,
        second: usize,
        shared: usize,
    },
    /// A slot is covered by a number of patterns different from D.
    SlotCoverage {
        slot: u32,
        count: usize,
        expected: u32,
    },
    /// Pattern count differs from C.
    PatternCount { found: usize, expected: u64 },
    /// A pattern does not consist of K distinct in-range slots.
    BadPattern { index: usize },
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvariantViolation::PairIntersection {
                first,
                second,
                shared,
            } => write!(f, "patterns {first} and {second} share {shared} slots"),
            InvariantViolation::SlotCoverage {
                slot,
                count,
                expected,
            } => {
                write!(
                    f,
                    "slot {slot} covered by {count} patterns, expected {expected}"
                )
            }
            InvariantViolation::PatternCount { found, expected } => {
                write!(f, "{found} patterns, expected C = {expected}")
            }
            InvariantViolation::BadPattern { index } => {
                write!(f, "pattern {index} is not K distinct in-range slots")
            }
        }
    }
}

/// One access pattern: K distinct slot indices in [0, M), sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    slots: Vec<u32>,
}

impl Pattern {
    pub fn new(mut slots: Vec<u32>) -> Self {
        slots.sort_unstable();
        Self { slots }
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, slot: u32) -> bool {
        self.slots.binary_search(&slot).is_ok()
    }

    fn intersection_size(&self, other: &Pattern) -> usize {
        let mut n = 0;
        let mut it = other.slots.iter().peekable();
        for &s in &self.slots {
            while let Some(&&o) = it.peek() {
                if o < s {
                    it.next();
                } else {
                    break;
                }
            }
            if it.peek() == Some(&&s) {
                n += 1;
            }
        }
        n
    }
}

/// A uniform K-subset of the M slots.
pub fn sample_random_pattern<R: Rng + ?Sized>(m: u32, k: u32, rng: &mut R) -> Pattern {
    assert!(k <= m);
    let idx = rand::seq::index::sample(rng, m as usize, k as usize);
    Pattern::new(idx.iter().map(|i| i as u32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodebookMode {
    Steiner,
    Random,
}

/// The access-pattern set: a verified Steiner system S(t,K,M), or a
/// random-selection descriptor (M, K) whose conceptual codebook is all
/// C(M,K) subsets.
#[derive(Debug, Clone)]
pub struct PatternCodebook {
    pub mode: CodebookMode,
    /// Strength parameter; Steiner mode only.
    pub t: u32,
    pub k: u32,
    pub m: u32,
    /// Steiner patterns (empty in random mode).
    patterns: Vec<Pattern>,
    /// Patterns covering any given slot; Steiner mode only.
    pub d: u32,
    /// Human-readable identifier, e.g. "S(2,4,25)" or "random(25,4)".
    pub name: String,
}

impl PatternCodebook {
    /// Random-selection descriptor.
    pub fn random(m: u32, k: u32) -> Self {
        assert!(k >= 1 && k <= m);
        Self {
            mode: CodebookMode::Random,
            t: 0,
            k,
            m,
            patterns: Vec::new(),
            d: 0,
            name: format!("random({m},{k})"),
        }
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    /// Number of patterns C (Steiner mode).
    pub fn size(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_steiner(&self) -> bool {
        self.mode == CodebookMode::Steiner
    }

    /// Analytic lower bound on the smallest stopping-set order,
    /// n' >= ceil(K/(t-1)) + 1.
    pub fn stopping_order_bound(&self) -> u32 {
        assert!(self.is_steiner());
        self.k.div_ceil(self.t - 1) + 1
    }

    /// The matching access law for the combinatorics module.
    pub fn law(&self) -> AccessLaw {
        match self.mode {
            CodebookMode::Random => AccessLaw::Random {
                m: self.m as u64,
                k: self.k as u64,
            },
            CodebookMode::Steiner => AccessLaw::Steiner {
                m: self.m as u64,
                k: self.k as u64,
                t: self.t as u64,
                c: self.patterns.len() as u64,
                d: self.d as u64,
            },
        }
    }

    /// Parse and fully verify a Steiner codebook from the text format:
    /// header `steiner t K M`, then C lines of K slot indices; `#` comments.
    pub fn load(source: &str) -> Result<Self, CodebookError> {
        let mut header: Option<(u32, u32, u32)> = None;
        let mut patterns = Vec::new();
        for (lineno, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse = |tok: &str| {
                tok.parse::<u32>().map_err(|e| CodebookError::Parse {
                    line: lineno + 1,
                    msg: format!("bad integer '{tok}': {e}"),
                })
            };
            match header {
                None => {
                    let mut it = line.split_whitespace();
                    if it.next() != Some("steiner") {
                        return Err(CodebookError::Parse {
                            line: lineno + 1,
                            msg: "expected header 'steiner t K M'".into(),
                        });
                    }
                    let nums: Vec<&str> = it.collect();
                    if nums.len() != 3 {
                        return Err(CodebookError::Parse {
                            line: lineno + 1,
                            msg: "expected header 'steiner t K M'".into(),
                        });
                    }
                    header = Some((parse(nums[0])?, parse(nums[1])?, parse(nums[2])?));
                }
                Some((_, k, _)) => {
                    let slots: Vec<u32> = line
                        .split_whitespace()
                        .map(parse)
                        .collect::<Result<_, _>>()?;
                    if slots.len() != k as usize {
                        return Err(CodebookError::Parse {
                            line: lineno + 1,
                            msg: format!("expected {k} slot indices, found {}", slots.len()),
                        });
                    }
                    patterns.push(Pattern::new(slots));
                }
            }
        }
        let (t, k, m) = header.ok_or(CodebookError::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Self::from_patterns(t, k, m, patterns)
    }

    /// Build and verify a Steiner codebook from explicit patterns.
    pub fn from_patterns(
        t: u32,
        k: u32,
        m: u32,
        patterns: Vec<Pattern>,
    ) -> Result<Self, CodebookError> {
        let (c, d, _) = derive_params(t, k, m)?;
        let mut cb = Self {
            mode: CodebookMode::Steiner,
            t,
            k,
            m,
            patterns,
            d,
            name: format!("S({t},{k},{m})"),
        };
        cb.verify(c, d)?;
        cb.patterns.sort_by(|a, b| a.slots.cmp(&b.slots));
        Ok(cb)
    }

    /// Exhaustive invariant check: pattern shape, pattern count, all pairwise
    /// intersections <= t-1, every slot covered exactly D times.
    fn verify(&self, c: u64, d: u32) -> Result<(), CodebookError> {
        use InvariantViolation as V;
        for (i, p) in self.patterns.iter().enumerate() {
            let distinct = p.slots.windows(2).all(|w| w[0] < w[1]);
            let in_range = p.slots.iter().all(|&s| s < self.m);
            if p.len() != self.k as usize || !distinct || !in_range {
                return Err(CodebookError::InvariantViolation(V::BadPattern {
                    index: i,
                }));
            }
        }
        if self.patterns.len() as u64 != c {
            return Err(CodebookError::InvariantViolation(V::PatternCount {
                found: self.patterns.len(),
                expected: c,
            }));
        }
        for i in 0..self.patterns.len() {
            for j in (i + 1)..self.patterns.len() {
                let shared = self.patterns[i].intersection_size(&self.patterns[j]);
                if shared > (self.t - 1) as usize {
                    return Err(CodebookError::InvariantViolation(V::PairIntersection {
                        first: i,
                        second: j,
                        shared,
                    }));
                }
            }
        }
        let mut coverage = vec![0usize; self.m as usize];
        for p in &self.patterns {
            for &s in p.slots() {
                coverage[s as usize] += 1;
            }
        }
        for (slot, &count) in coverage.iter().enumerate() {
            if count != d as usize {
                return Err(CodebookError::InvariantViolation(V::SlotCoverage {
                    slot: slot as u32,
                    count,
                    expected: d,
                }));
            }
        }
        Ok(())
    }
}

/// Design parameters (C, D, n') for S(t, K, M):
/// C = C(M,t)/C(K,t), D = C(M-1,t-1)/C(K-1,t-1), n' >= ceil(K/(t-1)) + 1.
pub fn derive_params(t: u32, k: u32, m: u32) -> Result<(u64, u32, u32), CodebookError> {
    assert!(t >= 2 && k >= t && m >= k);
    let choose = |a: u64, b: u64| -> u64 {
        let mut acc = 1u64;
        for i in 0..b {
            acc = acc * (a - i) / (i + 1);
        }
        acc
    };
    let (ct, kt) = (choose(m as u64, t as u64), choose(k as u64, t as u64));
    let (ct1, kt1) = (
        choose(m as u64 - 1, t as u64 - 1),
        choose(k as u64 - 1, t as u64 - 1),
    );
    if ct % kt != 0 || ct1 % kt1 != 0 {
        return Err(CodebookError::NonIntegralDesign { t, k, m });
    }
    let bound = k.div_ceil(t - 1) + 1;
    Ok((ct / kt, (ct1 / kt1) as u32, bound))
}

/// Bose construction of S(2,3,M) for M = 3n with n odd (M ≡ 3 mod 6).
/// Points are Z_n x {0,1,2}, mapped to i*n + x.
pub fn construct_triple_system(m: u32) -> Result<PatternCodebook, CodebookError> {
    if m % 6 != 3 {
        return Err(CodebookError::UnsupportedM(m));
    }
    let n = m / 3;
    let inv2 = (n + 1) / 2; // inverse of 2 mod n for odd n
    let mut patterns = Vec::new();
    for x in 0..n {
        patterns.push(Pattern::new(vec![x, n + x, 2 * n + x]));
    }
    for i in 0..3u32 {
        for x in 0..n {
            for y in (x + 1)..n {
                let z = ((x + y) * inv2) % n;
                patterns.push(Pattern::new(vec![
                    i * n + x,
                    i * n + y,
                    ((i + 1) % 3) * n + z,
                ]));
            }
        }
    }
    PatternCodebook::from_patterns(2, 3, m, patterns)
}

/// Names of the bundled Steiner systems.
pub const BUNDLED_SYSTEMS: &[&str] = &[
    "S(2,3,7)",
    "S(2,3,9)",
    "S(2,3,25)",
    "S(2,3,33)",
    "S(2,3,39)",
    "S(2,4,25)",
    "S(2,4,28)",
    "S(2,4,37)",
    "S(2,5,25)",
    "S(2,5,41)",
];

fn bundled_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "S(2,3,7)" => include_str!("../data/s_2_3_7.txt"),
        "S(2,3,9)" => include_str!("../data/s_2_3_9.txt"),
        "S(2,3,25)" => include_str!("../data/s_2_3_25.txt"),
        "S(2,3,33)" => include_str!("../data/s_2_3_33.txt"),
        "S(2,3,39)" => include_str!("../data/s_2_3_39.txt"),
        "S(2,4,25)" => include_str!("../data/s_2_4_25.txt"),
        "S(2,4,28)" => include_str!("../data/s_2_4_28.txt"),
        "S(2,4,37)" => include_str!("../data/s_2_4_37.txt"),
        "S(2,5,25)" => include_str!("../data/s_2_5_25.txt"),
        "S(2,5,41)" => include_str!("../data/s_2_5_41.txt"),
        _ => return None,
    })
}

/// Load a bundled system by name, e.g. "S(2,4,25)". The GF_ACCESS_DATA
/// environment variable overrides the bundled data with a directory of
/// codebook files named like `s_2_4_25.txt`.
pub fn load_named(name: &str) -> Result<PatternCodebook, CodebookError> {
    if let Ok(dir) = std::env::var("GF_ACCESS_DATA") {
        let file = name
            .trim_start_matches("S(")
            .trim_end_matches(')')
            .replace(',', "_");
        let path = std::path::Path::new(&dir).join(format!("s_{file}.txt"));
        if path.exists() {
            return PatternCodebook::load(&std::fs::read_to_string(path)?);
        }
    }
    let src = bundled_source(name).ok_or_else(|| CodebookError::UnknownSystem(name.into()))?;
    PatternCodebook::load(src)
}

/// Per-order stopping-set inventory for one codebook.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingSetCatalog {
    pub system: String,
    pub entries: BTreeMap<u32, CatalogEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub n: u32,
    pub count: u64,
    pub exhaustive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<u32>>>,
}

impl StoppingSetCatalog {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Smallest order with a nonzero exhaustive count, if known.
    pub fn min_order(&self) -> Option<u32> {
        self.entries
            .values()
            .find(|e| e.exhaustive && e.count > 0)
            .map(|e| e.n)
    }
}

/// True iff the slot-wise union of the given patterns leaves no slot with
/// exactly one occupant.
pub fn is_stopping_set(codebook: &PatternCodebook, indices: &[u32]) -> bool {
    let mut counts = vec![0u32; codebook.m as usize];
    for &i in indices {
        for &s in codebook.patterns[i as usize].slots() {
            counts[s as usize] += 1;
        }
    }
    counts.iter().all(|&c| c != 1)
}

/// Exhaustively count the stopping sets of order `n`: subsets of `n`
/// patterns whose union covers every slot 0 or >= 2 times.
///
/// Depth-first subset extension over pattern indices with slot-occupancy
/// counters. A branch is abandoned when some slot has exactly one occupant
/// and no remaining candidate pattern covers it, or when the number of
/// singleton slots exceeds what the remaining picks could repair.
pub fn enumerate_stopping_sets(
    codebook: &PatternCodebook,
    n: u32,
    collect_sets: bool,
    budget: Option<u64>,
) -> Result<CatalogEntry, CodebookError> {
    if !codebook.is_steiner() {
        return Err(CodebookError::NotSteiner);
    }
    let c = codebook.size();
    let m = codebook.m as usize;
    // patterns as slot lists plus, per slot, the highest pattern index covering it
    let slot_lists: Vec<&[u32]> = codebook.patterns.iter().map(|p| p.slots()).collect();
    let mut max_cover = vec![0u32; m];
    for (i, slots) in slot_lists.iter().enumerate() {
        for &s in *slots {
            max_cover[s as usize] = i as u32;
        }
    }
    let visited = AtomicU64::new(0);
    let budget = budget.unwrap_or(u64::MAX);

    struct Ctx<'a> {
        slot_lists: &'a [&'a [u32]],
        max_cover: &'a [u32],
        k: u32,
        n: u32,
        collect: bool,
        visited: &'a AtomicU64,
        budget: u64,
    }

    fn dfs(
        ctx: &Ctx,
        start: usize,
        chosen: &mut Vec<u32>,
        counts: &mut [u16],
        singletons: u32,
        out: &mut (u64, Vec<Vec<u32>>),
    ) -> Result<(), CodebookError> {
        let rem = ctx.n - chosen.len() as u32;
        if rem == 0 {
            if singletons == 0 {
                out.0 += 1;
                if ctx.collect {
                    out.1.push(chosen.clone());
                }
            }
            return Ok(());
        }
        if singletons > ctx.k * rem {
            return Ok(());
        }
        for i in start..ctx.slot_lists.len() {
            if ctx.slot_lists.len() - i < rem as usize {
                break;
            }
            let v = ctx.visited.fetch_add(1, Ordering::Relaxed);
            if v >= ctx.budget {
                return Err(CodebookError::BudgetExceeded(ctx.budget));
            }
            let mut new_singles = singletons;
            for &s in ctx.slot_lists[i] {
                match counts[s as usize] {
                    0 => new_singles += 1,
                    1 => new_singles -= 1,
                    _ => {}
                }
                counts[s as usize] += 1;
            }
            chosen.push(i as u32);
            // abandon when a singleton slot can never be repaired by a
            // higher-index pattern
            let mut viable = new_singles <= ctx.k * (rem - 1);
            if viable && new_singles > 0 {
                'check: for &j in chosen.iter() {
                    for &s in ctx.slot_lists[j as usize] {
                        if counts[s as usize] == 1 && (ctx.max_cover[s as usize] as usize) <= i {
                            viable = false;
                            break 'check;
                        }
                    }
                }
            }
            if viable {
                dfs(ctx, i + 1, chosen, counts, new_singles, out)?;
            }
            chosen.pop();
            for &s in ctx.slot_lists[i] {
                counts[s as usize] -= 1;
            }
        }
        Ok(())
    }

    let ctx = Ctx {
        slot_lists: &slot_lists,
        max_cover: &max_cover,
        k: codebook.k,
        n,
        collect: collect_sets,
        visited: &visited,
        budget,
    };

    // parallel over the first-index choice; counts merged by summation
    let results: Result<Vec<(u64, Vec<Vec<u32>>)>, CodebookError> = (0..c)
        .into_par_iter()
        .map(|first| {
            let mut counts = vec![0u16; m];
            let mut singles = 0;
            for &s in slot_lists[first] {
                counts[s as usize] = 1;
                singles += 1;
            }
            let mut chosen = vec![first as u32];
            let mut out = (0u64, Vec::new());
            dfs(&ctx, first + 1, &mut chosen, &mut counts, singles, &mut out)?;
            Ok(out)
        })
        .collect();
    let results = results?;
    let count = results.iter().map(|r| r.0).sum();
    let sets = collect_sets.then(|| results.into_iter().flat_map(|r| r.1).collect());
    Ok(CatalogEntry {
        n,
        count,
        exhaustive: true,
        sets,
    })
}

/// Pilot index for every (pattern, slot) incidence of a Steiner codebook.
#[derive(Debug, Clone)]
pub struct PilotSchedule {
    pub q: u32,
    /// pilots[pattern_index][position] for the pattern's sorted slots
    pilots: Vec<Vec<u32>>,
}

impl PilotSchedule {
    pub fn pilot(&self, pattern_index: usize, position: usize) -> u32 {
        self.pilots[pattern_index][position]
    }
}

/// Deterministic collision-free pilot schedule: within each slot the covering
/// patterns, sorted by index, get pilot = rank.
pub fn assign_pilots(codebook: &PatternCodebook, q: u32) -> Result<PilotSchedule, CodebookError> {
    if !codebook.is_steiner() {
        return Err(CodebookError::NotSteiner);
    }
    if q < codebook.d {
        return Err(CodebookError::InsufficientPilots { q, d: codebook.d });
    }
    let mut rank = vec![0u32; codebook.m as usize];
    let mut pilots = vec![Vec::new(); codebook.size()];
    // patterns are stored sorted, so iterating in index order assigns ranks
    for (i, p) in codebook.patterns.iter().enumerate() {
        for &s in p.slots() {
            pilots[i].push(rank[s as usize]);
            rank[s as usize] += 1;
        }
    }
    Ok(PilotSchedule { q, pilots })
}
