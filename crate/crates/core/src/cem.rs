//! Cross-entropy refinement of the factorized proposal.
//!
//! Each iteration samples a batch from the current proposal, takes every
//! failing sample as the elite set, refits each dimension's marginal to the
//! importance-weighted elites (weights `P/Q_t`, no defensive mixing inside
//! the loop), and smooths the update with coefficient `zeta`. An empty elite
//! set leaves the proposal unchanged. The defensive mixture with `P` is
//! applied once, after the final iteration.
//!
//! Smoothing from a uniform start guarantees the support floor
//! `Q_t(j) >= (1 - zeta)^t / |Z_i|`, which keeps in-loop weights finite.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::oracle::FailureOracle;
use crate::proposal::{DefensiveProposal, Proposal, SmoothingHistory};
use crate::rng::Stream;
use crate::space::{Assignment, ParamSpace};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CemConfig {
    /// Samples drawn per iteration.
    pub samples_per_iter: u64,
    /// Number of refinement iterations.
    pub iterations: u32,
    /// Smoothing coefficient in (0, 1].
    pub smoothing: f64,
    /// Defensive mixture coefficient in (0, 1], applied after the loop.
    pub lambda: f64,
    /// Keep per-sample records in the trace for pooled reuse.
    pub retain_samples: bool,
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_iter < 1 {
            return Err(Error::Contract("samples_per_iter must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Contract("iterations must be >= 1".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(Error::Contract(format!(
                "smoothing must be in (0, 1], got {}",
                self.smoothing
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Contract(format!(
                "lambda must be in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// One retained sample: assignment index, weight `P/Q_t` under the proposal
/// it was drawn from, and the oracle verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub index: u64,
    pub weight: f64,
    pub failed: bool,
}

/// Per-iteration record. `proposal` is the post-update distribution, so the
/// last entry is the final learned proposal.
#[derive(Clone, Debug)]
pub struct CemIteration {
    pub proposal: Proposal,
    pub elite_count: u64,
    pub weight_sum: f64,
    pub samples: Option<Vec<TraceSample>>,
    /// Dimensions whose update underflowed and were restored; surfaced as a
    /// warning by callers.
    pub degenerate_dims: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct CemTrace {
    pub iterations: Vec<CemIteration>,
    /// Total oracle queries spent in the loop: iterations × samples_per_iter.
    pub oracle_queries: u64,
}

impl CemTrace {
    pub fn final_proposal(&self) -> Option<&Proposal> {
        self.iterations.last().map(|it| &it.proposal)
    }

    pub fn total_samples(&self) -> u64 {
        self.iterations
            .iter()
            .map(|it| it.samples.as_ref().map_or(0, |s| s.len() as u64))
            .sum()
    }
}

/// Elite-weighted empirical marginal for one dimension. Only failed samples
/// contribute; calling this with no failures is a contract violation.
pub fn weighted_update(
    samples: &[(Assignment, f64, bool)],
    dim: usize,
    dim_size: usize,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0f64; dim_size];
    let mut total = 0.0f64;
    for (z, w, failed) in samples {
        if !failed {
            continue;
        }
        acc[z.indices()[dim]] += w;
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::Contract(
            "weighted_update requires at least one failed sample with positive weight".into(),
        ));
    }
    for x in &mut acc {
        *x /= total;
    }
    Ok(acc)
}

/// Run the full refinement loop and wrap the result defensively.
pub fn cem_run(
    space: Arc<ParamSpace>,
    oracle: &dyn FailureOracle,
    cfg: &CemConfig,
    stream: Stream,
) -> Result<(DefensiveProposal, CemTrace)> {
    cfg.validate()?;
    let n = cfg.samples_per_iter as usize;
    let p_uniform = space.uniform_pmf_f64();

    let mut current = Proposal::uniform(&space);
    let mut trace = CemTrace::default();

    for t in 0..cfg.iterations {
        let iter_stream = stream.child("cem").index(t as u64);
        let proposal = &current;
        let space_ref = &space;

        // One substream per sample; draw z, then hand the oracle a derived
        // stream so queries are independent of sampling draws.
        let batch: Vec<Result<(Assignment, u64, f64, bool)>> = exec::map_indexed(n, |i| {
            let s = iter_stream.index(i as u64);
            let z = proposal.sample_one(&mut s.rng());
            let z_index = space_ref.assignment_to_index(&z)? as u64;
            let weight = p_uniform / proposal.pmf(&z)?;
            let outcome = oracle
                .query(z_index, &z, s.child("f"))
                .map_err(|e| Error::Oracle {
                    context: format!("cem iteration {t}, sample {i}"),
                    source: Box::new(e),
                })?;
            Ok((z, z_index, weight, outcome.failed))
        });

        let mut samples: Vec<(Assignment, f64, bool)> = Vec::with_capacity(n);
        let mut records = cfg.retain_samples.then(|| Vec::with_capacity(n));
        for item in batch {
            let (z, z_index, weight, failed) = item?;
            if let Some(rs) = records.as_mut() {
                rs.push(TraceSample {
                    index: z_index,
                    weight,
                    failed,
                });
            }
            samples.push((z, weight, failed));
        }

        let elite_count = samples.iter().filter(|(_, _, f)| *f).count() as u64;
        let weight_sum: f64 = samples
            .iter()
            .filter(|(_, _, f)| *f)
            .map(|(_, w, _)| w)
            .sum();

        let mut degenerate_dims = Vec::new();
        if elite_count > 0 {
            let mut next_probs = Vec::with_capacity(space.num_dims());
            for dim in 0..space.num_dims() {
                let size = space.dim_size(dim);
                let old = current.probs(dim).to_vec();
                let upd = weighted_update(&samples, dim, size)?;
                let mut smoothed: Vec<f64> = upd
                    .iter()
                    .zip(&old)
                    .map(|(u, o)| cfg.smoothing * u + (1.0 - cfg.smoothing) * o)
                    .collect();
                let sum: f64 = smoothed.iter().sum();
                if !(sum > 0.0) || smoothed.iter().any(|x| !x.is_finite()) {
                    // Numeric underflow under extreme weights: keep the
                    // pre-update vector so the support floor survives.
                    degenerate_dims.push(dim);
                    smoothed = old;
                }
                next_probs.push(smoothed);
            }
            let mut next = Proposal::from_probs(&space, next_probs)?;
            next.history = Some(SmoothingHistory {
                zeta: cfg.smoothing,
                iterations: t + 1,
            });
            current = next;
        }

        trace.iterations.push(CemIteration {
            proposal: current.clone(),
            elite_count,
            weight_sum,
            samples: records,
            degenerate_dims,
        });
    }

    trace.oracle_queries = cfg.iterations as u64 * cfg.samples_per_iter;
    let learned = DefensiveProposal::new(current, cfg.lambda, space)?;
    Ok((learned, trace))
}
