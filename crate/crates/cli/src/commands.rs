//! Subcommand implementations. Every command is deterministic given --seed:
//! payload files carry no timestamps and all randomness flows from the master
//! seed through named substreams.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use failprob_core::analysis::{
    coverage_experiment, efficiency_gain, failure_histograms, pareto_frontier, top_k_dimensions,
    CoverageReport, GainReport, ParetoFrontier, RunRecord,
};
use failprob_core::cem::{cem_run, CemConfig, CemTrace};
use failprob_core::estimator::{
    binomial_exact_ci, compute_estimate, draw_eval_batch, estimate_from_values,
    inverse_normal_cdf, pooled_reuse_estimate, CostLedger, Estimate,
};
use failprob_core::proposal::{DefensiveProposal, Proposal};
use failprob_core::report::{
    read_samples_jsonl, write_estimate_csv, write_histograms_csv, write_json,
    write_run_records_csv, write_samples_jsonl, write_trace_jsonl, write_tv_csv, EstimateReport,
};
use failprob_core::rng::Stream;
use failprob_core::space::ParamSpace;
use failprob_core::synth::{
    generate_planted, generate_pool_rows, pool_sidecar, write_pool_jsonl, PlantSpec, PoolSpec,
};
use failprob_core::template::{answer_to_string, Template};
use failprob_core::{Error, Result};

use crate::config::{load_config, CoverageConfig, RunConfig, SweepConfig, EXACT_MU_BUDGET};

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// space
// ---------------------------------------------------------------------------

pub fn cmd_space(template_path: &Path, render: Option<u128>) -> Result<()> {
    let tpl = Template::load(template_path)?;
    let space = tpl.space();
    println!("template {}", tpl.id);
    println!("dimensions: {}", space.num_dims());
    for d in space.dims() {
        println!("  {:<12} size {}", d.name, d.size());
    }
    println!("total_size: {}", space.total_size());
    if let Some(idx) = render {
        let z = space.index_to_assignment(idx)?;
        println!("--- instance {idx} ---");
        println!("{}", tpl.render(&z)?);
        println!("answer: {}", answer_to_string(&tpl.ground_truth(&z)?));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PlantedArtifact {
    spec: PlantSpec,
    exact_mu: Option<String>,
    exact_mu_f64: Option<f64>,
}

pub fn cmd_synth_planted(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: PlantSpec = load_config(spec_path)?;
    let (space, model) = generate_planted(&spec)?;
    let exact = model.exact_mu(&space, EXACT_MU_BUDGET).ok();
    ensure_dir(out)?;
    let artifact = PlantedArtifact {
        spec,
        exact_mu: exact.as_ref().map(|r| format!("{}/{}", r.numer(), r.denom())),
        exact_mu_f64: exact.as_ref().map(failprob_core::oracle::rational_to_f64),
    };
    write_json(&out.join("planted.json"), &artifact)?;
    println!(
        "planted model over {} assignments, exact mu = {}",
        space.total_size(),
        artifact
            .exact_mu_f64
            .map(|m| m.to_string())
            .unwrap_or_else(|| "unavailable".into())
    );
    Ok(())
}

pub fn cmd_synth_pool(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: PoolSpec = load_config(spec_path)?;
    let rows = generate_pool_rows(&spec)?;
    ensure_dir(out)?;
    write_pool_jsonl(&out.join("pool.jsonl"), &rows)?;
    write_json(&out.join("pool_spec.json"), &pool_sidecar(&spec)?)?;
    println!(
        "pool with {} rows of {} answers each -> {}",
        rows.len(),
        spec.pool_size,
        out.join("pool.jsonl").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn cmd_run(config_path: &Path, seed_override: Option<u64>, out: &Path) -> Result<()> {
    let cfg: RunConfig = load_config(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let dir = base_dir(config_path);
    let (space, _) = cfg.space.build(&dir)?;
    let built = cfg.oracle.build(&dir, &space)?;
    let oracle = built.oracle.as_ref();

    let cem_sec = cfg
        .cem
        .ok_or_else(|| Error::Contract("run requires a 'cem' section".into()))?;
    let lambda = cfg
        .lambda
        .ok_or_else(|| Error::Contract("run requires 'lambda'".into()))?;
    let cem_cfg = CemConfig {
        samples_per_iter: cem_sec.n,
        iterations: cem_sec.t,
        smoothing: cem_sec.zeta,
        lambda,
        retain_samples: cfg.retain_samples || cfg.reuse,
    };

    let root = Stream::root(seed);
    let (learned, trace) = cem_run(space.clone(), oracle, &cem_cfg, root)?;
    warn_degenerate(&trace);

    ensure_dir(out)?;
    let mut snapshot_names = Vec::new();
    for (t, it) in trace.iterations.iter().enumerate() {
        let name = format!("proposal_iter_{t:03}.json");
        write_json(&out.join(&name), &it.proposal.snapshot())?;
        snapshot_names.push(name);
    }
    write_json(&out.join("proposal.json"), &learned.snapshot())?;
    write_trace_jsonl(&out.join("trace.jsonl"), &trace, &snapshot_names)?;
    if cem_cfg.retain_samples {
        let all: Vec<_> = trace
            .iterations
            .iter()
            .flat_map(|it| it.samples.clone().unwrap_or_default())
            .collect();
        write_samples_jsonl(&out.join("cem_samples.jsonl"), &all)?;
    }

    let cem_cost = trace.oracle_queries;
    let ledger = CostLedger::new(cem_cost, cfg.m, cfg.reuse);
    let eval_stream = root.child("eval");
    let estimate = if cfg.reuse {
        let extra_m = cfg.m.saturating_sub(cem_cost);
        let extra = draw_eval_batch(oracle, &learned, extra_m, eval_stream, true)?;
        if let Some(samples) = &extra.samples {
            write_samples_jsonl(&out.join("eval_samples.jsonl"), samples)?;
        }
        pooled_reuse_estimate(&trace, &extra, cfg.alpha)?
    } else {
        let batch = draw_eval_batch(oracle, &learned, cfg.m, eval_stream, cfg.retain_samples)?;
        if let Some(samples) = &batch.samples {
            write_samples_jsonl(&out.join("eval_samples.jsonl"), samples)?;
        }
        estimate_from_values(&batch.values, batch.n_failures, ledger.total, cfg.alpha)?
    };
    warn_low_failures(&estimate);

    let report = EstimateReport {
        meta: cfg.meta.clone(),
        lambda: Some(lambda),
        n: cem_sec.n,
        m: cfg.m,
        estimate,
        cost: ledger,
    };
    write_json(&out.join("estimate.json"), &report)?;
    let record = std::fs::File::create(out.join("record.csv"))?;
    write_estimate_csv(record, std::slice::from_ref(&report))?;

    println!(
        "mu_hat = {:.6e}  ci = [{:.6e}, {:.6e}]  inferences = {}",
        report.estimate.mu_hat, report.estimate.ci_low, report.estimate.ci_high, report.cost.total
    );
    Ok(())
}

fn warn_degenerate(trace: &CemTrace) {
    for (t, it) in trace.iterations.iter().enumerate() {
        if !it.degenerate_dims.is_empty() {
            eprintln!(
                "warning: iteration {t}: restored pre-update marginals for dimensions {:?}",
                it.degenerate_dims
            );
        }
    }
}

fn warn_low_failures(est: &Estimate) {
    if est.low_failure_warning {
        eprintln!(
            "warning: only {} failures contributed; the normal-approximation interval may be unreliable",
            est.n_failures
        );
    }
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

pub fn cmd_baseline(config_path: &Path, seed_override: Option<u64>, out: &Path) -> Result<()> {
    let cfg: RunConfig = load_config(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let dir = base_dir(config_path);
    let (space, _) = cfg.space.build(&dir)?;
    let built = cfg.oracle.build(&dir, &space)?;

    // The baseline samples through the same defensive machinery with
    // lambda = 1, which is exactly uniform sampling.
    let uniform = DefensiveProposal::new(Proposal::uniform(&space), 1.0, space.clone())?;
    let root = Stream::root(seed);
    let batch = draw_eval_batch(built.oracle.as_ref(), &uniform, cfg.m, root.child("eval"), true)?;
    let estimate = binomial_exact_ci(batch.n_failures, cfg.m, cfg.alpha)?;
    warn_low_failures(&estimate);

    ensure_dir(out)?;
    if let Some(samples) = &batch.samples {
        write_samples_jsonl(&out.join("eval_samples.jsonl"), samples)?;
    }
    let report = EstimateReport {
        meta: cfg.meta.clone(),
        lambda: None,
        n: 0,
        m: cfg.m,
        estimate,
        cost: CostLedger::new(0, cfg.m, false),
    };
    write_json(&out.join("estimate.json"), &report)?;
    let record = std::fs::File::create(out.join("record.csv"))?;
    write_estimate_csv(record, std::slice::from_ref(&report))?;
    println!(
        "baseline mu_hat = {:.6e}  exact ci = [{:.6e}, {:.6e}]  inferences = {}",
        report.estimate.mu_hat, report.estimate.ci_low, report.estimate.ci_high, report.cost.total
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GainEntry {
    lambda: f64,
    gain: Option<GainReport>,
    error: Option<String>,
}

#[derive(Serialize)]
struct GainsArtifact {
    reference_mu: f64,
    target_rse: f64,
    target_width: f64,
    per_lambda: Vec<GainEntry>,
    best: Option<GainReport>,
    cell_errors: Vec<String>,
}

pub fn cmd_sweep(config_path: &Path, seed_override: Option<u64>, out: &Path) -> Result<()> {
    let cfg: SweepConfig = load_config(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let dir = base_dir(config_path);
    let (space, _) = cfg.space.build(&dir)?;
    let built = cfg.oracle.build(&dir, &space)?;
    let oracle = built.oracle.as_ref();
    let reference_mu = built.reference_mu.ok_or_else(|| {
        Error::ReferenceUnavailable(
            "sweep coverage gating needs an exactly computable reference mu".into(),
        )
    })?;

    let root = Stream::root(seed);
    let mut replicate_records: Vec<RunRecord> = Vec::new();
    let mut cell_records: Vec<RunRecord> = Vec::new();
    let mut cell_errors: Vec<String> = Vec::new();
    let total_cells = cfg.lambda_grid.len() * cfg.n_grid.len() * cfg.m_grid.len();

    for (li, &lambda) in cfg.lambda_grid.iter().enumerate() {
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            let cem_cfg = CemConfig {
                samples_per_iter: n,
                iterations: cfg.cem.t,
                smoothing: cfg.cem.zeta,
                lambda,
                retain_samples: false,
            };
            let cem_stream = root.child("cem").index(li as u64).index(ni as u64);
            let learned = match cem_run(space.clone(), oracle, &cem_cfg, cem_stream) {
                Ok((learned, trace)) => {
                    warn_degenerate(&trace);
                    learned
                }
                Err(e) => {
                    for &m in &cfg.m_grid {
                        cell_errors.push(format!("lambda={lambda} n={n} m={m}: {e}"));
                    }
                    continue;
                }
            };
            let cem_cost = cfg.cem.t as u64 * n;

            for (mi, &m) in cfg.m_grid.iter().enumerate() {
                let cell_stream = root
                    .child("eval")
                    .index(li as u64)
                    .index(ni as u64)
                    .index(mi as u64);
                let n_inferences = if cfg.reuse { cem_cost.max(m) } else { cem_cost + m };

                let results: Vec<Result<Estimate>> =
                    failprob_core::exec::map_indexed(cfg.replicates as usize, |r| {
                        compute_estimate(oracle, &learned, m, cfg.alpha, cell_stream.index(r as u64))
                    });
                let mut estimates = Vec::with_capacity(results.len());
                let mut failed_cell = None;
                for r in results {
                    match r {
                        Ok(est) => estimates.push(est),
                        Err(e) => {
                            failed_cell = Some(format!("lambda={lambda} n={n} m={m}: {e}"));
                            break;
                        }
                    }
                }
                if let Some(err) = failed_cell {
                    cell_errors.push(err);
                    continue;
                }

                let mut covered_count = 0u64;
                let mut width_sum = 0.0;
                let mut mu_sum = 0.0;
                for (r, est) in estimates.iter().enumerate() {
                    let covered = est.covers(reference_mu);
                    covered_count += u64::from(covered);
                    width_sum += est.ci_width();
                    mu_sum += est.mu_hat;
                    replicate_records.push(RunRecord {
                        n,
                        m,
                        lambda,
                        seed: r as u64,
                        ci_width: est.ci_width(),
                        n_inferences,
                        mu_hat: est.mu_hat,
                        covered: Some(covered),
                    });
                }
                let reps = estimates.len() as f64;
                let coverage = covered_count as f64 / reps;
                let pass = estimates.len() > 1
                    && (coverage - cfg.nominal).abs() <= cfg.tolerance + 1e-12;
                cell_records.push(RunRecord {
                    n,
                    m,
                    lambda,
                    seed,
                    ci_width: width_sum / reps,
                    n_inferences,
                    mu_hat: mu_sum / reps,
                    covered: Some(pass),
                });
            }
        }
    }

    if cell_records.is_empty() {
        return Err(Error::Oracle {
            context: format!("all {total_cells} sweep cells failed"),
            source: Box::new(Error::EmptyInput(cell_errors.join("; "))),
        });
    }

    ensure_dir(out)?;
    write_run_records_csv(std::fs::File::create(out.join("records.csv"))?, &replicate_records)?;
    write_run_records_csv(std::fs::File::create(out.join("cells.csv"))?, &cell_records)?;

    let passing: Vec<RunRecord> = cell_records
        .iter()
        .filter(|r| r.covered == Some(true))
        .cloned()
        .collect();
    let frontier = if passing.is_empty() {
        ParetoFrontier::default()
    } else {
        pareto_frontier(&passing)?
    };
    write_json(&out.join("frontier.json"), &frontier)?;

    let z = inverse_normal_cdf(1.0 - cfg.alpha / 2.0)?;
    let target_width = 2.0 * z * cfg.target_rse * reference_mu;
    let mut per_lambda = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let lambda_passing: Vec<RunRecord> = passing
            .iter()
            .filter(|r| r.lambda == lambda)
            .cloned()
            .collect();
        let entry = if lambda_passing.is_empty() {
            GainEntry {
                lambda,
                gain: None,
                error: Some("no passing cells".into()),
            }
        } else {
            match pareto_frontier(&lambda_passing)
                .and_then(|f| efficiency_gain(&f, target_width, reference_mu, cfg.alpha))
            {
                Ok(g) => GainEntry { lambda, gain: Some(g), error: None },
                Err(e) => GainEntry { lambda, gain: None, error: Some(e.to_string()) },
            }
        };
        per_lambda.push(entry);
    }
    let best = if frontier.records.is_empty() {
        None
    } else {
        efficiency_gain(&frontier, target_width, reference_mu, cfg.alpha).ok()
    };

    let gains = GainsArtifact {
        reference_mu,
        target_rse: cfg.target_rse,
        target_width,
        per_lambda,
        best,
        cell_errors,
    };
    write_json(&out.join("gains.json"), &gains)?;

    match &gains.best {
        Some(g) => println!(
            "best gain {:.2}x at target width {:.3e} (uniform m = {}, frontier cost = {})",
            g.gain, g.target_width, g.uniform_m, g.frontier_inferences
        ),
        None => println!("no frontier cell reaches the target width"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// coverage
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CoverageArtifact {
    reference_mu: f64,
    report: CoverageReport,
}

pub fn cmd_coverage(config_path: &Path, seed_override: Option<u64>, out: &Path) -> Result<()> {
    let cfg: CoverageConfig = load_config(config_path)?;
    let seed = seed_override.unwrap_or(cfg.seed);
    let dir = base_dir(config_path);
    let (space, _) = cfg.space.build(&dir)?;
    let built = cfg.oracle.build(&dir, &space)?;
    let oracle = built.oracle.as_ref();
    let reference_mu = built.reference_mu.ok_or_else(|| {
        Error::ReferenceUnavailable(
            "coverage needs an exact reference; synthetic models and fully cached pools provide one"
                .into(),
        )
    })?;

    let root = Stream::root(seed);
    let q = match cfg.cem {
        Some(cem_sec) => {
            let lambda = cfg
                .lambda
                .ok_or_else(|| Error::Contract("coverage with cem requires 'lambda'".into()))?;
            let cem_cfg = CemConfig {
                samples_per_iter: cem_sec.n,
                iterations: cem_sec.t,
                smoothing: cem_sec.zeta,
                lambda,
                retain_samples: false,
            };
            let (learned, trace) = cem_run(space.clone(), oracle, &cem_cfg, root)?;
            warn_degenerate(&trace);
            learned
        }
        None => DefensiveProposal::new(
            Proposal::uniform(&space),
            cfg.lambda.unwrap_or(1.0),
            space.clone(),
        )?,
    };

    let rep_stream = root.child("replicate");
    let report = coverage_experiment(cfg.replicates, cfg.nominal, cfg.tolerance, reference_mu, |r| {
        compute_estimate(oracle, &q, cfg.m, cfg.alpha, rep_stream.index(r))
    })?;

    ensure_dir(out)?;
    write_json(&out.join("coverage.json"), &CoverageArtifact { reference_mu, report: report.clone() })?;
    println!(
        "coverage {}/{} = {:.4} ({})",
        report.covered_count,
        report.replicates,
        report.coverage,
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// tv
// ---------------------------------------------------------------------------

pub fn cmd_tv(
    samples_path: &Path,
    space: Arc<ParamSpace>,
    out: &Path,
) -> Result<()> {
    let samples = read_samples_jsonl(samples_path)?;
    let mut pairs = Vec::with_capacity(samples.len());
    for s in &samples {
        pairs.push((space.index_to_assignment(s.index as u128)?, s.failed));
    }
    let hists = failure_histograms(&pairs, &space);
    if hists.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} holds no failures; TV distances are undefined",
            samples_path.display()
        )));
    }
    let ranked = top_k_dimensions(&hists, space.num_dims())?;
    ensure_dir(out)?;
    write_tv_csv(std::fs::File::create(out.join("tv.csv"))?, &ranked)?;
    write_histograms_csv(std::fs::File::create(out.join("histograms.csv"))?, &hists)?;
    for (rank, (dim, dist)) in ranked.iter().take(3).enumerate() {
        println!("top{} dimension {} tv {:.4}", rank + 1, dim, dist);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn cmd_report(dir: &Path, out: &Path) -> Result<()> {
    let mut paths = Vec::new();
    collect_estimates(dir, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no estimate.json files under {}",
            dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(paths.len());
    for p in &paths {
        let report: EstimateReport = failprob_core::report::read_json(p)?;
        rows.push(report);
    }
    ensure_dir(out)?;
    write_estimate_csv(std::fs::File::create(out.join("report.csv"))?, &rows)?;
    println!("tabulated {} estimates -> {}", rows.len(), out.join("report.csv").display());
    Ok(())
}

fn collect_estimates(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_estimates(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "estimate.json") {
            found.push(path);
        }
    }
    Ok(())
}
