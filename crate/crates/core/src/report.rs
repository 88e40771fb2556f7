//! Serialization of results: JSON payloads, CSV tabulation rows, and the
//! JSONL trace formats. Writers are deterministic — stable field order, no
//! timestamps — so reruns with the same seed produce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{FailureHistogram, RunRecord};
use crate::cem::{CemTrace, TraceSample};
use crate::error::Result;
use crate::estimator::{CostLedger, Estimate};

/// Experiment identity attached to estimate outputs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub template: Option<u32>,
    pub model_tag: Option<String>,
    pub k: Option<u32>,
}

/// Full estimate payload: metadata, the experiment cell, the estimate, and
/// the cost ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub meta: RunMeta,
    pub lambda: Option<f64>,
    pub n: u64,
    pub m: u64,
    pub estimate: Estimate,
    pub cost: CostLedger,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// CSV row form for estimate tabulation:
/// `template,model_tag,k,lambda,n,m,mu_hat,ci_low,ci_high,rse,inferences`.
pub fn write_estimate_csv<W: std::io::Write>(w: W, rows: &[EstimateReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "template", "model_tag", "k", "lambda", "n", "m", "mu_hat", "ci_low", "ci_high", "rse",
        "inferences",
    ])?;
    for row in rows {
        let est = &row.estimate;
        wtr.write_record([
            row.meta.template.map(|t| t.to_string()).unwrap_or_default(),
            row.meta.model_tag.clone().unwrap_or_default(),
            row.meta.k.map(|k| k.to_string()).unwrap_or_default(),
            row.lambda.map(|l| format!("{l}")).unwrap_or_default(),
            row.n.to_string(),
            row.m.to_string(),
            format!("{}", est.mu_hat),
            format!("{}", est.ci_low),
            format!("{}", est.ci_high),
            est.rse.map(|r| format!("{r}")).unwrap_or_default(),
            est.n_inferences.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Sweep results CSV with the RunRecord schema.
pub fn write_run_records_csv<W: std::io::Write>(w: W, records: &[RunRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "n", "m", "lambda", "seed", "ci_width", "n_inferences", "mu_hat", "covered",
    ])?;
    for r in records {
        wtr.write_record([
            r.n.to_string(),
            r.m.to_string(),
            format!("{}", r.lambda),
            r.seed.to_string(),
            format!("{}", r.ci_width),
            r.n_inferences.to_string(),
            format!("{}", r.mu_hat),
            r.covered.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Histogram export: `dimension,value,count,fraction`, plot-tool friendly.
pub fn write_histograms_csv<W: std::io::Write>(
    w: W,
    hists: &[FailureHistogram],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["dimension", "value", "count", "fraction"])?;
    for h in hists {
        for (v, &c) in h.counts.iter().enumerate() {
            wtr.write_record([
                h.dim.to_string(),
                v.to_string(),
                c.to_string(),
                format!("{}", c as f64 / h.total as f64),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// TV report: `dimension,tv_distance,rank` in ranked order.
pub fn write_tv_csv<W: std::io::Write>(w: W, ranked: &[(usize, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["dimension", "tv_distance", "rank"])?;
    for (rank, (dim, dist)) in ranked.iter().enumerate() {
        wtr.write_record([
            dim.to_string(),
            format!("{dist}"),
            (rank + 1).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One trace JSONL record per iteration, referencing its proposal snapshot
/// file by name.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceFileRow {
    pub t: u32,
    pub elite_count: u64,
    pub weight_sum: f64,
    pub proposal: String,
}

pub fn write_trace_jsonl(path: &Path, trace: &CemTrace, snapshot_names: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (t, it) in trace.iterations.iter().enumerate() {
        let row = TraceFileRow {
            t: t as u32,
            elite_count: it.elite_count,
            weight_sum: it.weight_sum,
            proposal: snapshot_names.get(t).cloned().unwrap_or_default(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Samples sidecar: JSONL of `{index, weight, failed}` in draw order.
pub fn write_samples_jsonl(path: &Path, samples: &[TraceSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples_jsonl(path: &Path) -> Result<Vec<TraceSample>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut samples = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    Ok(samples)
}
