//! Ground-truth-known synthetic experiment generators.
//!
//! Planted models give Bernoulli failure landscapes whose exact failure
//! probability is computable by enumeration. Synthetic generation pools
//! mimic cached model outputs: hot rows carry a systematic wrong mode (a
//! single repeated wrong answer, so majority-vote failure sharpens as K
//! grows) while cold rows scatter their wrong answers across distinct values
//! (so occasional failures wash out under voting). Wrong-answer counts are
//! explicit rather than sampled, which gives sharpening tests a designed
//! effect size.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GenerationPool, HotPattern, PlantedModel, Probability};
use crate::rng::Stream;
use crate::space::ParamSpace;

/// Specification for a planted Bernoulli failure model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantSpec {
    pub shape: Vec<usize>,
    #[serde(default)]
    pub hot: Vec<HotPattern>,
    pub base_rate: Probability,
    #[serde(default)]
    pub seed: u64,
}

/// Deterministically construct the space and model for a plant spec.
pub fn generate_planted(spec: &PlantSpec) -> Result<(ParamSpace, PlantedModel)> {
    if spec.shape.is_empty() || spec.shape.contains(&0) {
        return Err(Error::Contract("plant shape must be positive".into()));
    }
    let space = ParamSpace::from_shape(&spec.shape)?;
    let model = PlantedModel {
        hot_patterns: spec.hot.clone(),
        base_rate: spec.base_rate.clone(),
    };
    model.validate(&space)?;
    Ok((space, model))
}

/// How wrong answers are distributed within a pool row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongMode {
    /// Every wrong slot repeats one wrong value.
    Systematic,
    /// Every wrong slot gets its own distinct wrong value.
    Scattered,
}

/// Hot-row override: assignments matching `(dim, value)` use `correct` as
/// their per-slot correct probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolHot {
    pub dim: usize,
    pub value: usize,
    pub correct: Probability,
}

/// Specification for a synthetic generation pool.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolSpec {
    pub shape: Vec<usize>,
    pub pool_size: u32,
    /// Correct fraction for rows not matched by any hot override.
    pub base_correct: Probability,
    #[serde(default)]
    pub hot: Vec<PoolHot>,
    pub hot_wrong_mode: WrongMode,
    pub cold_wrong_mode: WrongMode,
    #[serde(default)]
    pub seed: u64,
}

/// One emitted pool row in the JSONL wire format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolFileRow {
    pub index: u64,
    pub truth: String,
    pub answers: Vec<String>,
}

impl PoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.contains(&0) {
            return Err(Error::Contract("pool shape must be positive".into()));
        }
        if self.pool_size < 1 {
            return Err(Error::Contract("pool size must be >= 1".into()));
        }
        for h in &self.hot {
            if h.dim >= self.shape.len() || h.value >= self.shape[h.dim] {
                return Err(Error::Contract(format!(
                    "hot override ({}, {}) outside shape {:?}",
                    h.dim, h.value, self.shape
                )));
            }
        }
        Ok(())
    }

    /// Wrong-slot count for a row: pool_size − round(correct · pool_size),
    /// computed in exact arithmetic so the composition is reproducible.
    pub fn row_composition(&self, z: &crate::space::Assignment) -> (u64, u64, WrongMode) {
        let mut correct_p = self.base_correct.exact().clone();
        let mut mode = self.cold_wrong_mode;
        for h in &self.hot {
            if z.indices()[h.dim] == h.value {
                correct_p = h.correct.exact().clone();
                mode = self.hot_wrong_mode;
            }
        }
        let pool = self.pool_size as i64;
        let scaled = correct_p * num_rational::BigRational::from_integer(pool.into());
        let n_correct: u64 = {
            use num_traits::ToPrimitive;
            scaled.round().to_integer().to_u64().unwrap_or(0).min(self.pool_size as u64)
        };
        (n_correct, self.pool_size as u64 - n_correct, mode)
    }
}

/// Build every pool row for a spec, in index order. Truth values are the
/// assignment indices themselves; systematic rows repeat `truth + 1`,
/// scattered rows use `truth + 1 + j` for the j-th wrong slot. Slot order is
/// shuffled per row from the spec seed.
pub fn generate_pool_rows(spec: &PoolSpec) -> Result<Vec<PoolFileRow>> {
    spec.validate()?;
    let space = ParamSpace::from_shape(&spec.shape)?;
    let total = space.total_size();
    if total > 1_000_000 {
        return Err(Error::Contract(format!(
            "pool space of {total} assignments exceeds the synthetic budget"
        )));
    }
    let shuffle_stream = Stream::root(spec.seed).child("pool-shuffle");
    let mut rows = Vec::with_capacity(total as usize);
    for (idx, z) in space.enumerate(total)?.enumerate() {
        let idx = idx as u64;
        let (n_correct, n_wrong, mode) = spec.row_composition(&z);
        let truth = idx.to_string();
        let mut answers: Vec<String> = Vec::with_capacity(spec.pool_size as usize);
        for _ in 0..n_correct {
            answers.push(truth.clone());
        }
        for j in 0..n_wrong {
            let wrong = match mode {
                WrongMode::Systematic => idx + 1,
                WrongMode::Scattered => idx + 1 + j,
            };
            answers.push(wrong.to_string());
        }
        // Deterministic per-row shuffle; layout is cosmetic for bootstrap
        // sampling but keeps files free of artificial ordering.
        let mut rng = shuffle_stream.index(idx).rng();
        for i in (1..answers.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            answers.swap(i, j);
        }
        rows.push(PoolFileRow {
            index: idx,
            truth,
            answers,
        });
    }
    Ok(rows)
}

/// Assemble an in-memory pool from generated rows.
pub fn pool_from_rows(rows: &[PoolFileRow]) -> Result<GenerationPool> {
    let mut pool = GenerationPool::new();
    for r in rows {
        let truth = crate::answer::normalize_answer(&r.truth);
        let answers = r.answers.iter().map(|a| crate::answer::normalize_answer(a)).collect();
        pool.insert(r.index, truth, answers)?;
    }
    Ok(pool)
}

/// Write rows as JSONL (the pool wire format).
pub fn write_pool_jsonl(path: &Path, rows: &[PoolFileRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar carrying the generating spec and its hash for provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolSidecar {
    pub spec: PoolSpec,
    pub spec_hash: String,
}

pub fn pool_sidecar(spec: &PoolSpec) -> Result<PoolSidecar> {
    let canonical = serde_json::to_string(spec)?;
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    Ok(PoolSidecar {
        spec: spec.clone(),
        spec_hash: format!("{h:016x}"),
    })
}
