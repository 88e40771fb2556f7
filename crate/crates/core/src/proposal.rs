//! Factorized categorical proposals and the defensive uniform mixture.
//!
//! A [`Proposal`] holds one probability vector per dimension; sampling draws
//! each dimension independently by inverse CDF over the stored value order.
//! A [`DefensiveProposal`] mixes the proposal with the uniform distribution
//! using coefficient `lambda`, which floors the pmf at `lambda / |Z|` and
//! bounds every importance weight by `1 / lambda`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::space::{Assignment, ParamSpace};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Smoothing lineage of a learned proposal; lets callers check the support
/// floor `(1 - zeta)^iterations / |Z_i|` without replaying the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingHistory {
    pub zeta: f64,
    pub iterations: u32,
}

#[derive(Clone, Debug)]
struct DimProbs {
    name: String,
    probs: Vec<f64>,
    /// Per-value log probabilities, precomputed for the pmf hot path.
    ln_probs: Vec<f64>,
    /// Inclusive-prefix sums for inverse-CDF sampling.
    cum: Vec<f64>,
}

impl DimProbs {
    fn new(name: String, probs: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        let ln_probs = probs.iter().map(|p| p.ln()).collect();
        DimProbs {
            name,
            probs,
            ln_probs,
            cum,
        }
    }

    #[inline]
    fn sample(&self, u: f64) -> usize {
        // partition_point returns the first index with cum > u; rounding can
        // leave cum.last() slightly below 1, so clamp to the final value.
        self.cum
            .partition_point(|&c| c <= u)
            .min(self.probs.len() - 1)
    }
}

/// Fully factorized categorical distribution over a parameter space.
#[derive(Clone, Debug)]
pub struct Proposal {
    dims: Vec<DimProbs>,
    pub history: Option<SmoothingHistory>,
}

impl Proposal {
    /// Build from per-dimension probability vectors. Vectors must be
    /// non-negative and sum to 1 within 1e-12; they are renormalized exactly
    /// once here and never silently adjusted afterwards.
    pub fn from_probs(space: &ParamSpace, probs: Vec<Vec<f64>>) -> Result<Proposal> {
        if probs.len() != space.num_dims() {
            return Err(Error::InvalidProposal(format!(
                "{} probability vectors for {} dimensions",
                probs.len(),
                space.num_dims()
            )));
        }
        let mut dims = Vec::with_capacity(probs.len());
        for (i, (mut p, d)) in probs.into_iter().zip(space.dims()).enumerate() {
            if p.len() != d.size() {
                return Err(Error::InvalidProposal(format!(
                    "dimension {i} has {} entries, domain size is {}",
                    p.len(),
                    d.size()
                )));
            }
            if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::InvalidProposal(format!(
                    "dimension {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = p.iter().sum();
            if !sum.is_finite() || sum <= 0.0 {
                return Err(Error::InvalidProposal(format!(
                    "dimension {i} sums to {sum}; cannot renormalize"
                )));
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                for x in &mut p {
                    *x /= sum;
                }
            }
            dims.push(DimProbs::new(d.name.clone(), p));
        }
        Ok(Proposal { dims, history: None })
    }

    /// Uniform proposal. Entries are written as `1/size` directly (no
    /// renormalization pass), so its pmf reproduces the space's uniform pmf
    /// bit for bit and weights against P are exactly 1.
    pub fn uniform(space: &ParamSpace) -> Proposal {
        let dims = space
            .dims()
            .iter()
            .map(|d| DimProbs::new(d.name.clone(), vec![1.0 / d.size() as f64; d.size()]))
            .collect();
        Proposal { dims, history: None }
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn probs(&self, dim: usize) -> &[f64] {
        &self.dims[dim].probs
    }

    pub fn dim_name(&self, dim: usize) -> &str {
        &self.dims[dim].name
    }

    fn check_assignment(&self, z: &Assignment) -> Result<()> {
        if z.0.len() != self.dims.len() {
            return Err(Error::InvalidAssignment(format!(
                "assignment has {} indices, proposal has {} dimensions",
                z.0.len(),
                self.dims.len()
            )));
        }
        for (i, (&idx, d)) in z.0.iter().zip(&self.dims).enumerate() {
            if idx >= d.probs.len() {
                return Err(Error::InvalidAssignment(format!(
                    "index {idx} out of range in dimension {i}"
                )));
            }
        }
        Ok(())
    }

    /// Log pmf: sum of per-dimension log probabilities.
    pub fn ln_pmf(&self, z: &Assignment) -> Result<f64> {
        self.check_assignment(z)?;
        Ok(self.ln_pmf_unchecked(z))
    }

    #[inline]
    fn ln_pmf_unchecked(&self, z: &Assignment) -> f64 {
        let mut acc = 0.0;
        for (d, &i) in self.dims.iter().zip(&z.0) {
            acc += d.ln_probs[i];
        }
        acc
    }

    /// Pmf computed in log space and exponentiated at the end.
    pub fn pmf(&self, z: &Assignment) -> Result<f64> {
        Ok(self.ln_pmf(z)?.exp())
    }

    /// One independent draw.
    pub fn sample_one(&self, rng: &mut Rng) -> Assignment {
        Assignment(self.dims.iter().map(|d| d.sample(rng.next_f64())).collect())
    }

    /// `n` i.i.d. draws, one substream per draw.
    pub fn sample(&self, n: usize, stream: Stream) -> Vec<Assignment> {
        (0..n)
            .map(|i| self.sample_one(&mut stream.index(i as u64).rng()))
            .collect()
    }

    /// Smallest entry of one dimension; the support-floor invariant bounds
    /// this from below for smoothed proposals.
    pub fn min_prob(&self, dim: usize) -> f64 {
        self.dims[dim].probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn snapshot(&self) -> ProposalSnapshot {
        ProposalSnapshot {
            dims: self
                .dims
                .iter()
                .map(|d| DimSnapshot {
                    name: d.name.clone(),
                    probs: d.probs.clone(),
                })
                .collect(),
            lambda: None,
            history: self.history,
        }
    }
}

/// Defensive mixture `(1 - lambda) * Q + lambda * P` over a shared space.
#[derive(Clone, Debug)]
pub struct DefensiveProposal {
    pub base: Proposal,
    pub lambda: f64,
    space: Arc<ParamSpace>,
    /// Cached `space.uniform_pmf_f64()`; the hot path evaluates it per draw.
    uniform_pmf: f64,
}

impl DefensiveProposal {
    pub fn new(base: Proposal, lambda: f64, space: Arc<ParamSpace>) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidProposal(format!(
                "defensive coefficient lambda must be in (0, 1], got {lambda}"
            )));
        }
        if base.num_dims() != space.num_dims() {
            return Err(Error::InvalidProposal(
                "proposal/space dimension mismatch".into(),
            ));
        }
        let uniform_pmf = space.uniform_pmf_f64();
        Ok(DefensiveProposal {
            base,
            lambda,
            space,
            uniform_pmf,
        })
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    /// Mixture pmf, combined in linear space after exponentiating the
    /// factorized log pmf. Written as `u + (1-λ)(b-u)` so that `b == u`
    /// (uniform base) and `λ == 1` both yield the uniform pmf exactly.
    pub fn pmf(&self, z: &Assignment) -> Result<f64> {
        let b = self.base.pmf(z)?;
        let u = self.uniform_pmf;
        Ok(u + (1.0 - self.lambda) * (b - u))
    }

    /// Importance weight P(z) / Q̃(z); bounded by 1/lambda thanks to the
    /// defensive floor.
    pub fn importance_weight(&self, z: &Assignment) -> Result<f64> {
        let q = self.pmf(z)?;
        Ok(self.uniform_pmf / q)
    }

    /// One draw: Bernoulli(lambda) chooses the uniform component, otherwise
    /// the factorized base samples each dimension by inverse CDF. The draw
    /// order (coin first, then dimensions) is part of the stream contract.
    pub fn sample_one(&self, rng: &mut Rng) -> Assignment {
        if rng.bernoulli(self.lambda) {
            Assignment(
                self.space
                    .dims()
                    .iter()
                    .map(|d| rng.below(d.size() as u64) as usize)
                    .collect(),
            )
        } else {
            self.base.sample_one(rng)
        }
    }

    pub fn sample(&self, n: usize, stream: Stream) -> Vec<Assignment> {
        (0..n)
            .map(|i| self.sample_one(&mut stream.index(i as u64).rng()))
            .collect()
    }

    pub fn snapshot(&self) -> ProposalSnapshot {
        let mut snap = self.base.snapshot();
        snap.lambda = Some(self.lambda);
        snap
    }
}

/// Serialized proposal: `{"dims": [{"name", "probs"}], "lambda", "history"}`.
/// serde_json emits shortest round-trip floats, so snapshots reload losslessly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProposalSnapshot {
    pub dims: Vec<DimSnapshot>,
    pub lambda: Option<f64>,
    pub history: Option<SmoothingHistory>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimSnapshot {
    pub name: String,
    pub probs: Vec<f64>,
}

impl ProposalSnapshot {
    pub fn to_proposal(&self, space: &ParamSpace) -> Result<Proposal> {
        let mut p = Proposal::from_probs(space, self.dims.iter().map(|d| d.probs.clone()).collect())?;
        p.history = self.history;
        Ok(p)
    }

    pub fn to_defensive(&self, space: Arc<ParamSpace>) -> Result<DefensiveProposal> {
        let lambda = self.lambda.ok_or_else(|| {
            Error::InvalidProposal("snapshot has no lambda; not a defensive proposal".into())
        })?;
        DefensiveProposal::new(self.to_proposal(&space)?, lambda, space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(shape: &[usize]) -> Arc<ParamSpace> {
        ParamSpace::from_shape(shape).unwrap().into_arc()
    }

    #[test]
    fn uniform_pmf_matches_space_exactly() {
        let s = space(&[4, 5]);
        let q = Proposal::uniform(&s);
        let z = Assignment(vec![2, 3]);
        assert_eq!(q.pmf(&z).unwrap(), s.uniform_pmf_f64());
        let d = DefensiveProposal::new(q, 0.3, s.clone()).unwrap();
        assert_eq!(d.pmf(&z).unwrap(), s.uniform_pmf_f64());
        assert_eq!(d.importance_weight(&z).unwrap(), 1.0);
    }

    #[test]
    fn defensive_mixture_examples() {
        // Single dimension of size 4, q = (1,0,0,0), lambda = 0.5.
        let s = space(&[4]);
        let q = Proposal::from_probs(&s, vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let d = DefensiveProposal::new(q, 0.5, s).unwrap();
        let p0 = d.pmf(&Assignment(vec![0])).unwrap();
        let p1 = d.pmf(&Assignment(vec![1])).unwrap();
        assert!((p0 - 0.625).abs() < 1e-15, "{p0}");
        assert!((p1 - 0.125).abs() < 1e-15, "{p1}");
        let w0 = d.importance_weight(&Assignment(vec![0])).unwrap();
        let w1 = d.importance_weight(&Assignment(vec![1])).unwrap();
        assert!((w0 - 0.4).abs() < 1e-15);
        assert!((w1 - 2.0).abs() < 1e-15); // attains the 1/lambda bound
    }

    #[test]
    fn pmf_sums_to_one_on_enumerable_spaces() {
        let s = space(&[7, 4, 3]);
        let mut stream = Stream::root(5).child("probs").rng();
        let probs: Vec<Vec<f64>> = s
            .dims()
            .iter()
            .map(|d| {
                let raw: Vec<f64> = (0..d.size()).map(|_| stream.next_f64() + 0.01).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        let q = Proposal::from_probs(&s, probs).unwrap();
        let d = DefensiveProposal::new(q.clone(), 0.25, s.clone()).unwrap();
        let mut sum_q = 0.0;
        let mut sum_d = 0.0;
        for z in s.enumerate(10_000).unwrap() {
            sum_q += q.pmf(&z).unwrap();
            sum_d += d.pmf(&z).unwrap();
        }
        assert!((sum_q - 1.0).abs() < 1e-10, "{sum_q}");
        assert!((sum_d - 1.0).abs() < 1e-10, "{sum_d}");
    }

    #[test]
    fn log_space_pmf_matches_direct_product() {
        let s = space(&[3, 4, 2, 5, 3, 2, 4, 3]); // d = 8
        let mut stream = Stream::root(9).child("probs").rng();
        let probs: Vec<Vec<f64>> = s
            .dims()
            .iter()
            .map(|d| {
                let raw: Vec<f64> = (0..d.size()).map(|_| stream.next_f64() + 0.05).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        let q = Proposal::from_probs(&s, probs.clone()).unwrap();
        for idx in [0u128, 17, 391, 2000, 8639] {
            let z = s.index_to_assignment(idx % s.total_size()).unwrap();
            let direct: f64 = z.0.iter().enumerate().map(|(i, &j)| probs[i][j]).product();
            let lp = q.pmf(&z).unwrap();
            assert!(
                ((lp - direct) / direct).abs() < 1e-12,
                "idx {idx}: {lp} vs {direct}"
            );
        }
    }

    #[test]
    fn sampling_matches_pmf_on_3x3() {
        let s = space(&[3, 3]);
        let q = Proposal::from_probs(
            &s,
            vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3]],
        )
        .unwrap();
        let d = DefensiveProposal::new(q, 0.2, s.clone()).unwrap();
        let n = 1_000_000usize;
        let mut counts = [[0u64; 3]; 3];
        let stream = Stream::root(2024).child("draws");
        for i in 0..n {
            let z = d.sample_one(&mut stream.index(i as u64).rng());
            counts[z.0[0]][z.0[1]] += 1;
        }
        for a in 0..3 {
            for b in 0..3 {
                let z = Assignment(vec![a, b]);
                let p = d.pmf(&z).unwrap();
                let freq = counts[a][b] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!(
                    (freq - p).abs() <= 4.0 * se,
                    "cell ({a},{b}): freq {freq}, pmf {p}"
                );
            }
        }
    }

    #[test]
    fn degenerate_proposal_sampling() {
        let s = space(&[3, 4]);
        let q = Proposal::from_probs(
            &s,
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let stream = Stream::root(8).child("degenerate");
        for i in 0..100 {
            let z = q.sample_one(&mut stream.index(i).rng());
            assert_eq!(z, Assignment(vec![1, 3]));
        }
    }

    #[test]
    fn lambda_one_sampling_is_uniform() {
        // Chi-square goodness of fit on the 20 joint cells at p > 0.001:
        // threshold for 19 dof via the Wilson-Hilferty cube approximation.
        let s = space(&[4, 5]);
        // Deliberately skewed base; lambda = 1 must erase it.
        let q = Proposal::from_probs(
            &s,
            vec![vec![0.97, 0.01, 0.01, 0.01], vec![0.96, 0.01, 0.01, 0.01, 0.01]],
        )
        .unwrap();
        let d = DefensiveProposal::new(q, 1.0, s.clone()).unwrap();
        let n = 100_000usize;
        let mut counts = [0u64; 20];
        let stream = Stream::root(31).child("unif");
        for i in 0..n {
            let z = d.sample_one(&mut stream.index(i as u64).rng());
            counts[s.assignment_to_index(&z).unwrap() as usize] += 1;
        }
        let expected = n as f64 / 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        let dof = 19.0f64;
        let z999 = crate::stats::inverse_normal_cdf(0.999).unwrap();
        let wh = dof * (1.0 - 2.0 / (9.0 * dof) + z999 * (2.0 / (9.0 * dof)).sqrt()).powi(3);
        assert!(chi2 < wh, "chi2 {chi2} exceeds 99.9% threshold {wh}");
    }

    #[test]
    fn snapshot_round_trips_losslessly() {
        let s = space(&[3, 2]);
        let mut q = Proposal::from_probs(
            &s,
            vec![vec![0.123456789012345, 0.5, 0.376543210987655], vec![0.25, 0.75]],
        )
        .unwrap();
        q.history = Some(SmoothingHistory { zeta: 0.1, iterations: 7 });
        let d = DefensiveProposal::new(q, 0.3, s.clone()).unwrap();
        let json = serde_json::to_string(&d.snapshot()).unwrap();
        let parsed: ProposalSnapshot = serde_json::from_str(&json).unwrap();
        let d2 = parsed.to_defensive(s.clone()).unwrap();
        assert_eq!(d.lambda, d2.lambda);
        assert_eq!(d2.base.history, d.base.history);
        for dim in 0..2 {
            assert_eq!(d.base.probs(dim), d2.base.probs(dim));
        }
    }

    #[test]
    fn construction_errors() {
        let s = space(&[3]);
        assert!(Proposal::from_probs(&s, vec![vec![0.5, 0.5]]).is_err());
        assert!(Proposal::from_probs(&s, vec![vec![0.5, 0.6, -0.1]]).is_err());
        assert!(Proposal::from_probs(&s, vec![vec![0.0, 0.0, 0.0]]).is_err());
        let q = Proposal::uniform(&s);
        assert!(DefensiveProposal::new(q.clone(), 0.0, s.clone()).is_err());
        assert!(DefensiveProposal::new(q, 1.5, s.clone()).is_err());
    }
}
