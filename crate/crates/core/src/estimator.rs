//! Failure probability estimation with confidence bounds.
//!
//! The importance-weighted estimator draws from the defensive proposal,
//! weights each failure indicator by `P/Q̃`, and applies a normal-theory
//! interval to the weighted values. The uniform-sampling baseline uses the
//! Clopper-Pearson exact binomial interval instead: at zero observed
//! failures the normal interval collapses to a point while the exact upper
//! bound stays positive, which is precisely why the baseline needs it.
//!
//! Reductions use pairwise summation so results do not depend on how a
//! parallel run partitioned the work.

use serde::{Deserialize, Serialize};

use crate::cem::{CemTrace, TraceSample};
use crate::error::{Error, Result};
use crate::exec;
use crate::oracle::FailureOracle;
use crate::proposal::DefensiveProposal;
use crate::rng::Stream;
use crate::stats::{inv_reg_inc_beta, pairwise_sum_by};

pub use crate::stats::inverse_normal_cdf;

/// Fewer weighted failures than this triggers a normal-approximation warning
/// on the estimate (the estimate itself is unchanged).
pub const LOW_FAILURE_THRESHOLD: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "importance-normal")]
    ImportanceNormal,
    #[serde(rename = "binomial-exact")]
    BinomialExact,
}

/// Point estimate with confidence bounds and sample accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub mu_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub se: f64,
    /// Relative standard error; absent when `mu_hat` is zero.
    pub rse: Option<f64>,
    pub n_samples: u64,
    pub n_inferences: u64,
    pub n_failures: u64,
    pub alpha: f64,
    pub method: Method,
    /// True when fewer than [`LOW_FAILURE_THRESHOLD`] failures contributed,
    /// where the normal approximation is shaky.
    pub low_failure_warning: bool,
}

impl Estimate {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, mu: f64) -> bool {
        self.ci_low <= mu && mu <= self.ci_high
    }
}

/// Inference accounting for a CEM + estimation run. With reuse the CEM draws
/// double as evaluation samples, so the total is `max(T×N, M)`; without it
/// the phases are disjoint and costs add.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostLedger {
    pub cem_inferences: u64,
    pub eval_samples: u64,
    pub total: u64,
}

impl CostLedger {
    pub fn new(cem_inferences: u64, eval_samples: u64, reuse: bool) -> Self {
        let total = if reuse {
            cem_inferences.max(eval_samples)
        } else {
            cem_inferences + eval_samples
        };
        CostLedger {
            cem_inferences,
            eval_samples,
            total,
        }
    }
}

/// One evaluation batch: weighted values `f(z)·w(z)`, failure count, and
/// optionally the per-sample records for analysis sidecars.
#[derive(Clone, Debug)]
pub struct EvalBatch {
    pub values: Vec<f64>,
    pub n_failures: u64,
    pub samples: Option<Vec<TraceSample>>,
}

/// Draw `m` evaluation samples from the defensive proposal and query the
/// oracle once per draw. Sample `i` uses substream `stream.index(i)`.
pub fn draw_eval_batch(
    oracle: &dyn FailureOracle,
    q: &DefensiveProposal,
    m: u64,
    stream: Stream,
    retain_samples: bool,
) -> Result<EvalBatch> {
    let space = q.space().clone();
    let rows: Vec<Result<TraceSample>> = exec::map_indexed(m as usize, |i| {
        let s = stream.index(i as u64);
        let z = q.sample_one(&mut s.rng());
        let z_index = space.assignment_to_index(&z)? as u64;
        let weight = q.importance_weight(&z)?;
        let outcome = oracle
            .query(z_index, &z, s.child("f"))
            .map_err(|e| Error::Oracle {
                context: format!("evaluation sample {i}"),
                source: Box::new(e),
            })?;
        Ok(TraceSample {
            index: z_index,
            weight,
            failed: outcome.failed,
        })
    });

    let mut values = Vec::with_capacity(m as usize);
    let mut n_failures = 0u64;
    let mut samples = retain_samples.then(|| Vec::with_capacity(m as usize));
    for row in rows {
        let r = row?;
        n_failures += u64::from(r.failed);
        values.push(if r.failed { r.weight } else { 0.0 });
        if let Some(s) = samples.as_mut() {
            s.push(r);
        }
    }
    Ok(EvalBatch {
        values,
        n_failures,
        samples,
    })
}

/// Normal-approximation interval over weighted values: mean, unbiased sample
/// variance, `mean ± z_{α/2}·σ̂/√M`, clamped to [0, 1].
pub fn estimate_from_values(
    values: &[f64],
    n_failures: u64,
    n_inferences: u64,
    alpha: f64,
) -> Result<Estimate> {
    let m = values.len();
    if m < 2 {
        return Err(Error::Contract(format!(
            "importance estimate needs at least 2 samples, got {m}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let mu_hat = pairwise_sum_by(0, m, &|i| values[i]) / m as f64;
    let ss = pairwise_sum_by(0, m, &|i| {
        let d = values[i] - mu_hat;
        d * d
    });
    let var = ss / (m as f64 - 1.0);
    let se = (var / m as f64).sqrt();
    let z = inverse_normal_cdf(1.0 - alpha / 2.0)?;
    let half = z * se;
    Ok(Estimate {
        mu_hat,
        ci_low: (mu_hat - half).clamp(0.0, 1.0),
        ci_high: (mu_hat + half).clamp(0.0, 1.0),
        se,
        rse: (mu_hat > 0.0).then(|| se / mu_hat),
        n_samples: m as u64,
        n_inferences,
        n_failures,
        alpha,
        method: Method::ImportanceNormal,
        low_failure_warning: n_failures < LOW_FAILURE_THRESHOLD,
    })
}

/// Importance-weighted estimate with fresh draws from `q`.
pub fn compute_estimate(
    oracle: &dyn FailureOracle,
    q: &DefensiveProposal,
    m: u64,
    alpha: f64,
    stream: Stream,
) -> Result<Estimate> {
    if m < 2 {
        return Err(Error::Contract(format!(
            "importance estimate needs at least 2 samples, got {m}"
        )));
    }
    let batch = draw_eval_batch(oracle, q, m, stream, false)?;
    estimate_from_values(&batch.values, batch.n_failures, m, alpha)
}

/// Pool the retained CEM-phase samples with optional extra draws from the
/// final defensive proposal. Each sample keeps the weight of the proposal it
/// was actually drawn from, so the pooled mean is a sample-count-weighted
/// average of per-batch unbiased estimators and stays unbiased. The variance
/// treats the pooled values as one sample set; the mild correlation across
/// batches is accepted as an approximation.
pub fn pooled_reuse_estimate(
    trace: &CemTrace,
    extra: &EvalBatch,
    alpha: f64,
) -> Result<Estimate> {
    let mut values = Vec::new();
    let mut n_failures = 0u64;
    for (t, it) in trace.iterations.iter().enumerate() {
        let samples = it.samples.as_ref().ok_or_else(|| {
            Error::ReuseUnavailable(format!("iteration {t} did not retain samples"))
        })?;
        for s in samples {
            n_failures += u64::from(s.failed);
            values.push(if s.failed { s.weight } else { 0.0 });
        }
    }
    if values.is_empty() {
        return Err(Error::ReuseUnavailable("trace holds no samples".into()));
    }
    values.extend_from_slice(&extra.values);
    n_failures += extra.n_failures;
    let n = values.len() as u64;
    estimate_from_values(&values, n_failures, n, alpha)
}

/// Clopper-Pearson exact binomial interval for `failures` out of `n` uniform
/// samples. Closed forms at the edges; interior endpoints invert the
/// regularized incomplete beta by bisection to 1e-12 absolute.
pub fn binomial_exact_ci(failures: u64, n: u64, alpha: f64) -> Result<Estimate> {
    if n < 1 {
        return Err(Error::Contract("binomial interval needs n >= 1".into()));
    }
    if failures > n {
        return Err(Error::Contract(format!(
            "failure count {failures} exceeds sample count {n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let x = failures as f64;
    let nf = n as f64;
    let half_alpha = alpha / 2.0;

    let ci_low = if failures == 0 {
        0.0
    } else if failures == n {
        half_alpha.powf(1.0 / nf)
    } else {
        inv_reg_inc_beta(x, nf - x + 1.0, half_alpha)
    };
    let ci_high = if failures == n {
        1.0
    } else if failures == 0 {
        1.0 - half_alpha.powf(1.0 / nf)
    } else {
        inv_reg_inc_beta(x + 1.0, nf - x, 1.0 - half_alpha)
    };

    let mu_hat = x / nf;
    let se = (mu_hat * (1.0 - mu_hat) / nf).sqrt();
    Ok(Estimate {
        mu_hat,
        ci_low,
        ci_high,
        se,
        rse: (mu_hat > 0.0).then(|| se / mu_hat),
        n_samples: n,
        n_inferences: n,
        n_failures: failures,
        alpha,
        method: Method::BinomialExact,
        low_failure_warning: failures < LOW_FAILURE_THRESHOLD,
    })
}

/// Uniform-sampling size needed to hit a target standard error:
/// `ceil(p(1-p)/eps²)`. For small `p` this is the familiar `p/eps²` rule of
/// thumb, which that expression refines.
pub fn required_uniform_samples(p: f64, eps: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Contract(format!("p must be in (0, 1), got {p}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let n = (p * (1.0 - p) / (eps * eps)).ceil();
    Ok((n as u64).max(1))
}
