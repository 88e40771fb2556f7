//! Analysis over completed runs: failure-concentration histograms and TV
//! distances, coverage verification across replicate sample sets, Pareto
//! frontiers of CI width against inference count, and sampling-efficiency
//! gains against the uniform Clopper-Pearson baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{binomial_exact_ci, Estimate};
use crate::exec;
use crate::space::{Assignment, ParamSpace};
use crate::stats::binomial_ln_pmf;

/// Per-dimension failure counts over the dimension's whole domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub dim: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

/// Count failures by value for every dimension. Returns an empty vector when
/// no sample failed; downstream TV computation refuses that marker.
pub fn failure_histograms(
    samples: &[(Assignment, bool)],
    space: &ParamSpace,
) -> Vec<FailureHistogram> {
    let mut hists: Vec<FailureHistogram> = (0..space.num_dims())
        .map(|dim| FailureHistogram {
            dim,
            counts: vec![0; space.dim_size(dim)],
            total: 0,
        })
        .collect();
    let mut any = false;
    for (z, failed) in samples {
        if !failed {
            continue;
        }
        any = true;
        for (dim, &v) in z.indices().iter().enumerate() {
            hists[dim].counts[v] += 1;
            hists[dim].total += 1;
        }
    }
    if any {
        hists
    } else {
        Vec::new()
    }
}

/// Total variation distance between the normalized failure histogram and the
/// uniform distribution over `m` values: `(1/2)·Σ|c_j/total − 1/m|`.
pub fn tv_distance(h: &FailureHistogram, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::Contract("domain size must be >= 1".into()));
    }
    if h.counts.len() != m {
        return Err(Error::Contract(format!(
            "histogram has {} bins for domain size {m}",
            h.counts.len()
        )));
    }
    if h.total == 0 {
        return Err(Error::EmptyInput(
            "TV distance undefined for a histogram with zero failures".into(),
        ));
    }
    let total = h.total as f64;
    let uniform = 1.0 / m as f64;
    let sum: f64 = h
        .counts
        .iter()
        .map(|&c| (c as f64 / total - uniform).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Rank dimensions by TV distance, descending; ties break by dimension index.
pub fn top_k_dimensions(hists: &[FailureHistogram], k: usize) -> Result<Vec<(usize, f64)>> {
    if hists.is_empty() {
        return Err(Error::EmptyInput("no histograms to rank".into()));
    }
    let mut ranked: Vec<(usize, f64)> = hists
        .iter()
        .map(|h| Ok((h.dim, tv_distance(h, h.counts.len())?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// One experiment row: configuration, achieved interval width, inference
/// cost, and the coverage verdict when a reference value was available.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: u64,
    pub m: u64,
    pub lambda: f64,
    pub seed: u64,
    pub ci_width: f64,
    pub n_inferences: u64,
    pub mu_hat: f64,
    pub covered: Option<bool>,
}

/// Non-dominated records, ascending in inferences and strictly descending in
/// width.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParetoFrontier {
    pub records: Vec<RunRecord>,
}

/// Lower-left envelope over (inferences, width). A record is dominated when
/// another has no more inferences and no more width, with at least one
/// strict; among exact duplicates the first in input order is kept.
pub fn pareto_frontier(records: &[RunRecord]) -> Result<ParetoFrontier> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records for frontier".into()));
    }
    // Sort by inferences, then width, keeping input order for exact ties so
    // the result is independent of the caller's ordering.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .n_inferences
            .cmp(&records[b].n_inferences)
            .then(
                records[a]
                    .ci_width
                    .partial_cmp(&records[b].ci_width)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    let mut frontier: Vec<RunRecord> = Vec::new();
    for idx in order {
        let r = &records[idx];
        match frontier.last() {
            Some(last) => {
                // Equal cost: the earlier, narrower record already wins.
                if r.n_inferences == last.n_inferences {
                    continue;
                }
                if r.ci_width < last.ci_width {
                    frontier.push(r.clone());
                }
            }
            None => frontier.push(r.clone()),
        }
    }
    Ok(ParetoFrontier { records: frontier })
}

/// Coverage verdict over replicate confidence intervals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicates: u64,
    pub covered_count: u64,
    pub coverage: f64,
    pub nominal: f64,
    pub tolerance: f64,
    /// True iff |coverage − nominal| ≤ tolerance. A single replicate cannot
    /// establish coverage, so `replicates == 1` reports false.
    pub pass: bool,
}

/// Run `replicates` independent estimates (disjoint substreams are the
/// caller's responsibility inside `estimate_fn`) and count how many intervals
/// contain the reference value.
pub fn coverage_experiment<F>(
    replicates: u64,
    nominal: f64,
    tolerance: f64,
    reference_mu: f64,
    estimate_fn: F,
) -> Result<CoverageReport>
where
    F: Fn(u64) -> Result<Estimate> + Sync + Send,
{
    if replicates == 0 {
        return Err(Error::Contract("coverage needs at least one replicate".into()));
    }
    if !reference_mu.is_finite() {
        return Err(Error::ReferenceUnavailable(
            "reference mu is not finite".into(),
        ));
    }
    let outcomes: Vec<Result<bool>> = exec::map_indexed(replicates as usize, |r| {
        Ok(estimate_fn(r as u64)?.covers(reference_mu))
    });
    let mut covered_count = 0u64;
    for o in outcomes {
        covered_count += u64::from(o?);
    }
    let coverage = covered_count as f64 / replicates as f64;
    Ok(CoverageReport {
        replicates,
        covered_count,
        coverage,
        nominal,
        tolerance,
        // The tolerance interval is closed; the epsilon keeps coverage 1.00
        // at nominal 0.99 ± 0.01 from failing on float rounding.
        pass: replicates > 1 && (coverage - nominal).abs() <= tolerance + 1e-12,
    })
}

/// Expected Clopper-Pearson interval width for `m` uniform samples at a fixed
/// failure probability: the exact width averaged over the binomial count
/// distribution (tails beyond ±10σ are negligible and skipped).
pub fn expected_cp_width(m: u64, mu: f64, alpha: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Contract(format!("mu must be in (0, 1), got {mu}")));
    }
    let mean = m as f64 * mu;
    let sd = (m as f64 * mu * (1.0 - mu)).sqrt();
    let lo = ((mean - 10.0 * sd - 5.0).floor().max(0.0)) as u64;
    let hi = ((mean + 10.0 * sd + 5.0).ceil() as u64).min(m);
    let mut width = 0.0;
    for x in lo..=hi {
        let w = binomial_ln_pmf(m, x, mu).exp();
        if w < 1e-18 {
            continue;
        }
        let est = binomial_exact_ci(x, m, alpha)?;
        width += w * est.ci_width();
    }
    Ok(width)
}

/// Smallest uniform sample count whose expected Clopper-Pearson width is at
/// most `target_width`, found by doubling then bisection (width is monotone
/// decreasing in `m`).
pub fn uniform_m_for_width(target_width: f64, mu: f64, alpha: f64) -> Result<u64> {
    if !(target_width > 0.0) {
        return Err(Error::Contract("target width must be positive".into()));
    }
    let mut lo = 2u64;
    if expected_cp_width(lo, mu, alpha)? <= target_width {
        return Ok(lo);
    }
    let mut hi = 16u64;
    loop {
        if expected_cp_width(hi, mu, alpha)? <= target_width {
            break;
        }
        if hi > (1u64 << 50) {
            return Err(Error::UnreachableTarget(format!(
                "uniform width {target_width} needs more than 2^50 samples"
            )));
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if expected_cp_width(mid, mu, alpha)? <= target_width {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Efficiency gain of a frontier against the uniform baseline at matched
/// interval width.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainReport {
    pub gain: f64,
    pub target_width: f64,
    pub uniform_m: u64,
    pub frontier_inferences: u64,
    pub frontier_width: f64,
}

/// Cheapest frontier record reaching `target_width`, divided into the
/// uniform-sampling size whose expected Clopper-Pearson width matches the
/// target at `baseline_mu`. Callers building frontiers from coverage-gated
/// sweeps should include only passing records.
pub fn efficiency_gain(
    frontier: &ParetoFrontier,
    target_width: f64,
    baseline_mu: f64,
    alpha: f64,
) -> Result<GainReport> {
    if !(baseline_mu > 0.0) {
        return Err(Error::Contract("baseline mu must be positive".into()));
    }
    let hit = frontier
        .records
        .iter()
        .filter(|r| r.ci_width <= target_width)
        .min_by_key(|r| r.n_inferences)
        .ok_or_else(|| {
            Error::UnreachableTarget(format!(
                "no frontier record reaches width {target_width}"
            ))
        })?;
    let uniform_m = uniform_m_for_width(target_width, baseline_mu, alpha)?;
    Ok(GainReport {
        gain: uniform_m as f64 / hit.n_inferences as f64,
        target_width,
        uniform_m,
        frontier_inferences: hit.n_inferences,
        frontier_width: hit.ci_width,
    })
}
