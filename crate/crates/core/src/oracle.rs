//! Black-box failure oracles.
//!
//! An oracle answers one question: did the system under test fail on this
//! input? Each query costs one inference regardless of the majority-vote
//! ensemble size, because vote resampling draws from a cached generation
//! pool rather than fresh inference. Two oracle families are provided:
//!
//! * [`PlantedModel`] — synthetic Bernoulli failures with designed hot
//!   inputs and an exactly computable failure probability, used as ground
//!   truth in acceptance tests.
//! * [`PoolOracle`] — majority voting over `K` answers resampled with
//!   replacement from a cached generation pool.
//!
//! Every draw is a pure function of `(stream, assignment index, counter)`,
//! so replicate experiments are reproducible and queries parallelize with
//! pre-assigned substreams.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::answer::{normalize_answer, vote_key, AnswerValue};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::space::{Assignment, ParamSpace};

/// Outcome of a single oracle query. `inference_cost` is always 1: majority
/// voting resamples cached generations, it does not re-run inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureOutcome {
    pub failed: bool,
    pub inference_cost: u64,
}

impl FailureOutcome {
    pub fn new(failed: bool) -> Self {
        FailureOutcome {
            failed,
            inference_cost: 1,
        }
    }
}

/// A black-box failure indicator over a parameter space.
pub trait FailureOracle: Sync + Send {
    /// Query the oracle for one assignment. `draw` is the caller-assigned
    /// substream for this query; implementations further derive by the
    /// assignment index so the outcome is a pure function of
    /// `(stream, assignment)`.
    fn query(&self, z_index: u64, z: &Assignment, draw: Stream) -> Result<FailureOutcome>;
}

/// Majority vote with ties counted as failures: the prediction succeeds only
/// when the truth's count strictly exceeds every other distinct value's
/// count. Absent answers occupy unique buckets and can never form a bloc.
pub fn majority_vote(answers: &[AnswerValue], truth: &AnswerValue) -> Result<FailureOutcome> {
    if answers.is_empty() {
        return Err(Error::Contract("majority_vote needs at least one answer".into()));
    }
    let truth_key = vote_key(truth);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut absent_count = 0u64;
    for a in answers {
        match vote_key(a) {
            Some(k) => *counts.entry(k).or_insert(0) += 1,
            None => absent_count += 1,
        }
    }
    let truth_votes = truth_key
        .as_ref()
        .and_then(|k| counts.get(k))
        .copied()
        .unwrap_or(0);
    let best_other = counts
        .iter()
        .filter(|(k, _)| Some(*k) != truth_key.as_ref())
        .map(|(_, &c)| c)
        .max()
        .unwrap_or(0)
        // Each absent is its own wrong value with count 1.
        .max(if absent_count > 0 { 1 } else { 0 });
    Ok(FailureOutcome::new(truth_votes <= best_other))
}

// ---------------------------------------------------------------------------
// Planted synthetic failures
// ---------------------------------------------------------------------------

/// One failure-prone pattern: assignments taking `value` in `dim` fail with
/// probability at least `bump`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HotPattern {
    pub dim: usize,
    pub value: usize,
    pub bump: Probability,
}

/// A probability kept in exact rational form alongside its f64 projection.
/// The rational side feeds exact-μ computation; the f64 side drives Bernoulli
/// sampling.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ProbabilityRepr", into = "ProbabilityRepr")]
pub struct Probability {
    exact: BigRational,
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProbabilityRepr {
    Text(String),
    Real(f64),
}

impl Probability {
    pub fn from_f64(x: f64) -> Self {
        // Route through the shortest decimal representation so `0.9` means
        // exactly 9/10 rather than the nearest binary double.
        Probability::parse(&format!("{x}")).expect("finite f64 formats as a decimal")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let exact = parse_probability_text(s)
            .ok_or_else(|| Error::Contract(format!("cannot parse probability '{s}'")))?;
        let zero = BigRational::from_integer(BigInt::from(0));
        let one = BigRational::from_integer(BigInt::from(1));
        if exact < zero || exact > one {
            return Err(Error::Contract(format!("probability '{s}' outside [0, 1]")));
        }
        let value = rational_to_f64(&exact);
        Ok(Probability { exact, value })
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn f64(&self) -> f64 {
        self.value
    }
}

impl TryFrom<ProbabilityRepr> for Probability {
    type Error = String;

    fn try_from(repr: ProbabilityRepr) -> std::result::Result<Self, String> {
        match repr {
            ProbabilityRepr::Text(s) => Probability::parse(&s).map_err(|e| e.to_string()),
            ProbabilityRepr::Real(x) => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(format!("probability {x} outside [0, 1]"));
                }
                Ok(Probability::from_f64(x))
            }
        }
    }
}

impl From<Probability> for ProbabilityRepr {
    fn from(p: Probability) -> Self {
        ProbabilityRepr::Text(format!("{}/{}", p.exact.numer(), p.exact.denom()))
    }
}

/// Parse "a/b", decimal, or scientific-notation text to an exact rational.
fn parse_probability_text(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let num: BigInt = a.trim().parse().ok()?;
        let den: BigInt = b.trim().parse().ok()?;
        if den == BigInt::from(0) {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    // Split off a decimal exponent if present.
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mut numer: BigInt = if int_part.is_empty() {
        BigInt::from(0)
    } else {
        int_part.parse().ok()?
    };
    let mut denom = BigInt::from(1);
    for c in frac_part.chars() {
        numer = numer * 10 + c.to_digit(10).unwrap();
        denom *= 10;
    }
    if neg {
        numer = -numer;
    }
    let ten_pow = BigInt::from(10).pow(exp.unsigned_abs() as u32);
    let r = if exp >= 0 {
        BigRational::new(numer * ten_pow, denom)
    } else {
        BigRational::new(numer, denom * ten_pow)
    };
    Some(r)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Synthetic oracle: Bernoulli failure with per-assignment probability
/// `max(base_rate, bump over matched hot patterns)`. The max combine rule
/// keeps probabilities in [0, 1] when patterns overlap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantedModel {
    pub hot_patterns: Vec<HotPattern>,
    pub base_rate: Probability,
}

impl PlantedModel {
    pub fn validate(&self, space: &ParamSpace) -> Result<()> {
        for p in &self.hot_patterns {
            if p.dim >= space.num_dims() {
                return Err(Error::Contract(format!(
                    "hot pattern dimension {} out of range (space has {} dims)",
                    p.dim,
                    space.num_dims()
                )));
            }
            if p.value >= space.dim_size(p.dim) {
                return Err(Error::Contract(format!(
                    "hot pattern value {} out of range for dimension {} (size {})",
                    p.value,
                    p.dim,
                    space.dim_size(p.dim)
                )));
            }
        }
        Ok(())
    }

    /// Exact failure probability of one assignment.
    pub fn failure_prob_exact(&self, z: &Assignment) -> BigRational {
        let mut p = self.base_rate.exact().clone();
        for pat in &self.hot_patterns {
            if z.indices()[pat.dim] == pat.value && *pat.bump.exact() > p {
                p = pat.bump.exact().clone();
            }
        }
        p
    }

    pub fn failure_prob_f64(&self, z: &Assignment) -> f64 {
        let mut p = self.base_rate.f64();
        for pat in &self.hot_patterns {
            if z.indices()[pat.dim] == pat.value {
                p = p.max(pat.bump.f64());
            }
        }
        p
    }

    /// Exact μ = Σ_z p(z) / |Z| by enumeration, in rational arithmetic.
    /// Refuses when the space exceeds the enumeration budget.
    pub fn exact_mu(&self, space: &ParamSpace, budget: u128) -> Result<BigRational> {
        self.validate(space)?;
        let mut sum = BigRational::from_integer(BigInt::from(0));
        for z in space.enumerate(budget)? {
            sum += self.failure_prob_exact(&z);
        }
        Ok(sum / BigRational::from_integer(BigInt::from(space.total_size())))
    }

    pub fn exact_mu_f64(&self, space: &ParamSpace, budget: u128) -> Result<f64> {
        Ok(rational_to_f64(&self.exact_mu(space, budget)?))
    }
}

impl FailureOracle for PlantedModel {
    fn query(&self, z_index: u64, z: &Assignment, draw: Stream) -> Result<FailureOutcome> {
        let p = self.failure_prob_f64(z);
        let failed = draw.index(z_index).rng().bernoulli(p);
        Ok(FailureOutcome::new(failed))
    }
}

// ---------------------------------------------------------------------------
// Cached generation pools
// ---------------------------------------------------------------------------

/// Majority-vote configuration: ensemble size and the resampling seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VoteConfig {
    pub k: u32,
    pub seed: u64,
}

impl VoteConfig {
    pub fn new(k: u32, seed: u64) -> Result<Self> {
        if k < 1 {
            return Err(Error::Contract("vote ensemble size K must be >= 1".into()));
        }
        Ok(VoteConfig { k, seed })
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct PoolRowFile {
    index: u64,
    truth: String,
    answers: Vec<String>,
}

/// One cached row: interned vote symbols for the truth and each pool slot.
/// Symbol 0 is the truth; absent answers get unique symbols so they cannot
/// pool into a winning bloc.
#[derive(Clone, Debug)]
pub struct PoolRow {
    pub truth: AnswerValue,
    pub answers: Vec<AnswerValue>,
    slots: Vec<u32>,
    num_symbols: u32,
}

impl PoolRow {
    fn build(truth: AnswerValue, answers: Vec<AnswerValue>) -> Result<PoolRow> {
        if answers.is_empty() {
            return Err(Error::Pool("pool row has no answers".into()));
        }
        let truth_key = vote_key(&truth);
        let mut table: BTreeMap<String, u32> = BTreeMap::new();
        if let Some(k) = &truth_key {
            table.insert(k.clone(), 0);
        }
        let mut next = 1u32;
        let slots = answers
            .iter()
            .map(|a| match vote_key(a) {
                Some(k) => *table.entry(k).or_insert_with(|| {
                    let s = next;
                    next += 1;
                    s
                }),
                None => {
                    let s = next;
                    next += 1;
                    s
                }
            })
            .collect();
        Ok(PoolRow {
            truth,
            answers,
            slots,
            num_symbols: next,
        })
    }

    /// Pool composition as (symbol, count) with symbol 0 meaning the truth.
    pub fn symbol_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_symbols as usize];
        for &s in &self.slots {
            counts[s as usize] += 1;
        }
        counts
    }

    pub fn pool_size(&self) -> usize {
        self.slots.len()
    }

    pub fn correct_count(&self) -> u64 {
        self.slots.iter().filter(|&&s| s == 0).count() as u64
    }

    /// Vote once: draw `k` slots with replacement using `rng`, fail unless
    /// the truth is the unique strict plurality winner.
    fn vote(&self, k: u32, rng: &mut crate::rng::Rng) -> bool {
        let n = self.slots.len() as u64;
        let mut counts = vec![0u32; self.num_symbols as usize];
        for _ in 0..k {
            let slot = rng.below(n) as usize;
            counts[self.slots[slot] as usize] += 1;
        }
        let truth_votes = counts[0];
        let best_other = counts[1..].iter().copied().max().unwrap_or(0);
        truth_votes <= best_other
    }
}

/// Cached generations keyed by assignment index.
#[derive(Clone, Debug, Default)]
pub struct GenerationPool {
    rows: BTreeMap<u64, PoolRow>,
    pub template_id: Option<u32>,
}

impl GenerationPool {
    pub fn new() -> Self {
        GenerationPool::default()
    }

    /// Insert a row; duplicate indices are rejected (pool files are
    /// append-only, a duplicate means corruption).
    pub fn insert(&mut self, index: u64, truth: AnswerValue, answers: Vec<AnswerValue>) -> Result<()> {
        if self.rows.contains_key(&index) {
            return Err(Error::Pool(format!("duplicate pool index {index}")));
        }
        self.rows.insert(index, PoolRow::build(truth, answers)?);
        Ok(())
    }

    /// Load JSONL rows `{"index": .., "truth": "..", "answers": [".."]}`.
    /// Answer normalization (boxed extraction included) happens here.
    pub fn load_jsonl(path: &Path) -> Result<GenerationPool> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut pool = GenerationPool::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: PoolRowFile = serde_json::from_str(&line).map_err(|e| {
                Error::Pool(format!("line {}: {e}", lineno + 1))
            })?;
            let truth = normalize_row_answer(&row.truth);
            let answers = row.answers.iter().map(|a| normalize_row_answer(a)).collect();
            pool.insert(row.index, truth, answers)?;
        }
        if pool.rows.is_empty() {
            return Err(Error::Pool("pool file has no rows".into()));
        }
        Ok(pool)
    }

    pub fn row(&self, index: u64) -> Result<&PoolRow> {
        self.rows.get(&index).ok_or(Error::CacheMiss(index))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.keys().copied()
    }
}

/// Raw cache strings may be boxed generations or bare answers.
fn normalize_row_answer(raw: &str) -> AnswerValue {
    if raw.contains("\\boxed") {
        crate::answer::parse_boxed_answer(raw)
    } else {
        normalize_answer(raw)
    }
}

/// Draw `K` answers with replacement from the cached pool for one assignment
/// and apply majority voting. Deterministic given `(z_index, cfg.seed, draw)`.
pub fn bootstrap_vote(
    pool: &GenerationPool,
    z_index: u64,
    cfg: &VoteConfig,
    draw: u64,
) -> Result<FailureOutcome> {
    let row = pool.row(z_index)?;
    let stream = Stream::root(cfg.seed).child("vote").index(draw).index(z_index);
    let failed = row.vote(cfg.k, &mut stream.rng());
    Ok(FailureOutcome::new(failed))
}

/// Pool-backed oracle for the estimation pipeline.
pub struct PoolOracle {
    pool: GenerationPool,
    k: u32,
}

impl PoolOracle {
    pub fn new(pool: GenerationPool, k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::Contract("vote ensemble size K must be >= 1".into()));
        }
        Ok(PoolOracle { pool, k })
    }

    pub fn pool(&self) -> &GenerationPool {
        &self.pool
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Exact probability that a K-vote over this row fails, enumerating
    /// multinomial draw outcomes. Refuses when the composition count is too
    /// large to enumerate (many distinct answers at high K).
    pub fn exact_row_failure_prob(&self, z_index: u64) -> Result<f64> {
        let row = self.pool.row(z_index)?;
        let counts = row.symbol_counts();
        check_enumeration_size(counts.len(), self.k)?;
        Ok(exact_vote_failure_prob(&counts, self.k))
    }

    /// Exact μ at this K: per-row exact vote failure probabilities averaged
    /// under the uniform distribution. The pool must cover the whole space.
    pub fn exact_mu_f64(&self, space: &ParamSpace) -> Result<f64> {
        let total = space.total_size();
        if total > u64::MAX as u128 {
            return Err(Error::ReferenceUnavailable(
                "space too large for exact pool mu".into(),
            ));
        }
        if self.pool.len() as u128 != total {
            return Err(Error::ReferenceUnavailable(format!(
                "pool covers {} of {} assignments; exact mu needs full coverage",
                self.pool.len(),
                total
            )));
        }
        let mut sum = 0.0;
        for idx in self.pool.indices() {
            sum += self.exact_row_failure_prob(idx)?;
        }
        Ok(sum / total as f64)
    }
}

/// Vote enumeration walks C(k + s - 1, s - 1) compositions; refuse sizes
/// that would take unbounded time.
fn check_enumeration_size(symbols: usize, k: u32) -> Result<()> {
    let s = symbols as f64;
    let kf = k as f64;
    let ln_count = crate::stats::ln_gamma(kf + s) - crate::stats::ln_gamma(kf + 1.0)
        - crate::stats::ln_gamma(s);
    if ln_count > (5e6f64).ln() {
        return Err(Error::ReferenceUnavailable(format!(
            "exact vote enumeration over {symbols} distinct answers at K={k} is too large"
        )));
    }
    Ok(())
}

impl FailureOracle for PoolOracle {
    fn query(&self, z_index: u64, _z: &Assignment, draw: Stream) -> Result<FailureOutcome> {
        let row = self.pool.row(z_index)?;
        let failed = row.vote(self.k, &mut draw.index(z_index).rng());
        Ok(FailureOutcome::new(failed))
    }
}

/// Exact majority-vote failure probability for a pool with the given symbol
/// counts (index 0 = truth), drawing `k` with replacement. Enumerates all
/// compositions of `k` over the distinct symbols.
pub fn exact_vote_failure_prob(symbol_counts: &[u64], k: u32) -> f64 {
    let pool: u64 = symbol_counts.iter().sum();
    assert!(pool > 0, "empty pool");
    let probs: Vec<f64> = symbol_counts.iter().map(|&c| c as f64 / pool as f64).collect();
    let mut fail = 0.0;
    let mut counts = vec![0u32; probs.len()];
    // Recursive composition walk with the multinomial weight built up as the
    // log of k! / prod(c_i!) + sum c_i ln p_i.
    fn walk(
        probs: &[f64],
        counts: &mut Vec<u32>,
        dim: usize,
        remaining: u32,
        fail: &mut f64,
        k: u32,
    ) {
        if dim == probs.len() - 1 {
            counts[dim] = remaining;
            let truth = counts[0];
            let best_other = counts[1..].iter().copied().max().unwrap_or(0);
            if truth <= best_other {
                let mut ln_w = crate::stats::ln_gamma(k as f64 + 1.0);
                for (i, &c) in counts.iter().enumerate() {
                    if c > 0 && probs[i] == 0.0 {
                        return;
                    }
                    ln_w -= crate::stats::ln_gamma(c as f64 + 1.0);
                    if c > 0 {
                        ln_w += c as f64 * probs[i].ln();
                    }
                }
                *fail += ln_w.exp();
            }
            return;
        }
        for c in 0..=remaining {
            counts[dim] = c;
            walk(probs, counts, dim + 1, remaining - c, fail, k);
        }
    }
    if probs.len() == 1 {
        // Only the truth exists in the pool: a vote can never fail unless
        // the truth has zero mass (impossible here).
        return 0.0;
    }
    walk(&probs, &mut counts, 0, k, &mut fail, k);
    fail.clamp(0.0, 1.0)
}
