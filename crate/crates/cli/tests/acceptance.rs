//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantity and elapsed time (visible under `--nocapture`).
//! Reference values come from exact enumeration, closed forms, or
//! independent oracles computed in this file.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use failprob_core::analysis::{
    coverage_experiment, failure_histograms, top_k_dimensions, tv_distance,
};
use failprob_core::cem::{cem_run, CemConfig};
use failprob_core::estimator::{
    binomial_exact_ci, compute_estimate, draw_eval_batch, required_uniform_samples,
};
use failprob_core::oracle::{
    bootstrap_vote, HotPattern, PlantedModel, PoolOracle, Probability, VoteConfig,
};
use failprob_core::proposal::{DefensiveProposal, Proposal};
use failprob_core::rng::Stream;
use failprob_core::space::{Assignment, ParamSpace};
use failprob_core::stats::binomial_ln_pmf;
use failprob_core::synth::{generate_pool_rows, pool_from_rows, PoolHot, PoolSpec, WrongMode};
use failprob_core::template::{big_rat, Template};

struct Budget {
    start: Instant,
    limit_s: f64,
}

impl Budget {
    fn new(limit_s: f64) -> Self {
        Budget { start: Instant::now(), limit_s }
    }

    fn finish(self, id: u32, name: &str, detail: &str) {
        let elapsed = self.start.elapsed().as_secs_f64();
        println!(
            "ACCEPTANCE {id:02} {name}: PASS ({detail}; {elapsed:.2}s, budget {}s)",
            self.limit_s
        );
        assert!(
            elapsed < self.limit_s,
            "criterion {id} exceeded its runtime budget: {elapsed:.1}s > {}s",
            self.limit_s
        );
    }
}

/// 4×5 planted acceptance model with exact mu = 0.22575.
fn model_4x5() -> (Arc<ParamSpace>, PlantedModel, f64) {
    let space = ParamSpace::from_shape(&[4, 5]).unwrap().into_arc();
    let model = PlantedModel {
        hot_patterns: vec![HotPattern {
            dim: 0,
            value: 2,
            bump: Probability::from_f64(0.9),
        }],
        base_rate: Probability::from_f64(0.001),
    };
    let mu_exact = model.exact_mu(&space, 100).unwrap();
    assert_eq!(mu_exact, big_rat(22575, 100_000));
    (space, model, 0.22575)
}

fn skewed_q(space: &Arc<ParamSpace>, lambda: f64) -> DefensiveProposal {
    let base = Proposal::from_probs(
        space,
        vec![vec![0.1, 0.1, 0.7, 0.1], vec![0.3, 0.25, 0.2, 0.15, 0.1]],
    )
    .unwrap();
    DefensiveProposal::new(base, lambda, space.clone()).unwrap()
}

#[test]
fn c01_clopper_pearson_zero_failure_bound() {
    let b = Budget::new(1.0);
    let est = binomial_exact_ci(0, 1_000_000, 0.01).unwrap();
    // 5.30e-06 to three significant figures.
    let rounded = (est.ci_high * 1e8).round() / 1e8;
    assert_eq!(est.ci_low, 0.0);
    assert!(
        (5.295e-6..5.305e-6).contains(&est.ci_high),
        "upper bound {}",
        est.ci_high
    );
    b.finish(1, "clopper-pearson-zero-failure", &format!("upper = {rounded:e}"));
}

#[test]
fn c02_planning_rule() {
    let b = Budget::new(1.0);
    let n = required_uniform_samples(1e-5, 1e-6).unwrap();
    let exact = 1e-5 * (1.0 - 1e-5) / 1e-12;
    let rel = ((n as f64) - exact).abs() / exact;
    assert!(rel <= 1e-4, "n = {n}, exact = {exact}, rel err {rel}");
    assert!((9_900_000..=10_000_000).contains(&n), "n = {n} not ~1e7");
    b.finish(2, "planning-rule", &format!("n = {n}"));
}

#[test]
fn c03_unbiasedness() {
    let b = Budget::new(120.0);
    let (space, model, mu) = model_4x5();
    let q = skewed_q(&space, 0.1);
    let replicates = 1_000u64;
    let root = Stream::root(303).child("replicate");
    let estimates: Vec<f64> = (0..replicates)
        .map(|r| {
            compute_estimate(&model, &q, 2_000, 0.01, root.index(r))
                .unwrap()
                .mu_hat
        })
        .collect();
    let mean: f64 = estimates.iter().sum::<f64>() / replicates as f64;
    let var: f64 = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
        / (replicates as f64 - 1.0);
    let pooled_se = (var / replicates as f64).sqrt();
    assert!(
        (mean - mu).abs() <= 3.0 * pooled_se,
        "mean {mean} vs exact {mu}, 3 pooled se {}",
        3.0 * pooled_se
    );
    b.finish(
        3,
        "unbiasedness",
        &format!("mean {mean:.6} vs exact {mu} (3se {:.1e})", 3.0 * pooled_se),
    );
}

#[test]
fn c04_coverage() {
    let b = Budget::new(300.0);
    let (space, model, mu) = model_4x5();
    let q = skewed_q(&space, 0.1);
    let root = Stream::root(404).child("replicate");
    let report = coverage_experiment(500, 0.99, 0.01, mu, |r| {
        compute_estimate(&model, &q, 2_000, 0.01, root.index(r))
    })
    .unwrap();
    assert!(
        report.pass && report.coverage >= 0.98,
        "coverage {} outside [0.98, 1.00]",
        report.coverage
    );
    b.finish(
        4,
        "coverage",
        &format!("{}/{} = {:.3}", report.covered_count, report.replicates, report.coverage),
    );
}

#[test]
fn c05_cem_concentration() {
    let b = Budget::new(180.0);
    let space = ParamSpace::from_shape(&[10, 10, 10]).unwrap().into_arc();
    let model = PlantedModel {
        hot_patterns: vec![HotPattern {
            dim: 0,
            value: 3,
            bump: Probability::from_f64(0.9),
        }],
        base_rate: Probability::parse("1e-3").unwrap(),
    };
    let cfg = CemConfig {
        samples_per_iter: 2_000,
        iterations: 10,
        smoothing: 0.1,
        lambda: 0.1,
        retain_samples: false,
    };
    let mut hits = 0;
    let mut masses = Vec::new();
    for seed in 0..10u64 {
        let (learned, _) = cem_run(space.clone(), &model, &cfg, Stream::root(500 + seed)).unwrap();
        let mass = learned.base.probs(0)[3];
        masses.push(mass);
        if mass >= 0.5 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "hot-value mass >= 0.5 in only {hits}/10 seeds: {masses:?}");
    b.finish(
        5,
        "cem-concentration",
        &format!("{hits}/10 seeds, masses {:.2}..{:.2}",
            masses.iter().cloned().fold(f64::INFINITY, f64::min),
            masses.iter().cloned().fold(0.0, f64::max)),
    );
}

#[test]
fn c06_efficiency_gain() {
    let b = Budget::new(900.0);
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "seed": 606,
        "space": {"shape": [10, 10, 10]},
        "oracle": {"planted": {
            "hot": [{"dim": 0, "value": 3, "bump": "0.0099"}],
            "base_rate": "1e-5"
        }},
        "cem": {"t": 10, "zeta": 0.1},
        "n_grid": [2000],
        "m_grid": [1000000, 2000000, 3000000],
        "lambda_grid": [0.1, 0.3, 0.5],
        "replicates": 100,
        "target_rse": 0.01,
        "reuse": true
    });
    let config_path = dir.path().join("sweep.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_failprob"))
        .args(["sweep", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "sweep exited with {status}");
    let gains: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("gains.json")).unwrap()).unwrap();
    let best = gains["best"]["gain"]
        .as_f64()
        .expect("no frontier cell reached the target width");
    assert!(best >= 3.0, "best-of-grid gain {best} < 3");
    b.finish(6, "efficiency-gain", &format!("best gain {best:.2}x"));
}

#[test]
fn c07_tv_closed_form() {
    let b = Budget::new(60.0);
    let space = ParamSpace::from_shape(&[10]).unwrap();

    // Single-value concentration: TV exactly 0.9.
    let concentrated: Vec<(Assignment, bool)> =
        (0..500).map(|_| (Assignment(vec![4]), true)).collect();
    let hists = failure_histograms(&concentrated, &space);
    let tv = tv_distance(&hists[0], 10).unwrap();
    assert!((tv - 0.9).abs() < 1e-12, "concentrated tv {tv}");

    // 10^4 uniformly spread failures: TV below 0.02.
    let mut rng = Stream::root(707).child("uniform-fails").rng();
    let spread: Vec<(Assignment, bool)> = (0..10_000)
        .map(|_| (Assignment(vec![rng.below(10) as usize]), true))
        .collect();
    let hists = failure_histograms(&spread, &space);
    let tv_uniform = tv_distance(&hists[0], 10).unwrap();
    assert!(tv_uniform < 0.02, "uniform-failure TV {tv_uniform}");
    b.finish(
        7,
        "tv-closed-form",
        &format!("concentrated tv = {tv}, uniform tv = {tv_uniform:.4}"),
    );
}

/// Binomial-tail failure probability for a two-value pool: the vote fails
/// iff wrong draws >= correct draws.
fn binomial_vote_tail(k: u32, p_wrong: f64) -> f64 {
    (0..=k)
        .filter(|&w| w >= k - w)
        .map(|w| binomial_ln_pmf(k as u64, w as u64, p_wrong).exp())
        .sum()
}

#[test]
fn c08_k_sharpening() {
    let b = Budget::new(300.0);
    let spec = PoolSpec {
        shape: vec![10, 10],
        pool_size: 40,
        base_correct: Probability::from_f64(0.9),
        hot: vec![PoolHot {
            dim: 0,
            value: 2,
            correct: Probability::from_f64(0.2),
        }],
        hot_wrong_mode: WrongMode::Systematic,
        cold_wrong_mode: WrongMode::Scattered,
        seed: 808,
    };
    let rows = generate_pool_rows(&spec).unwrap();
    let pool = pool_from_rows(&rows).unwrap();
    let space = ParamSpace::from_shape(&[10, 10]).unwrap();

    let mut exact_tvs = Vec::new();
    let mut empirical_tvs = Vec::new();
    let mut hot_rates = Vec::new();
    let mut hot_exacts = Vec::new();

    for &k in &[4u32, 8, 16] {
        let oracle = PoolOracle::new(pool_from_rows(&rows).unwrap(), k).unwrap();
        // Designed per-group failure probabilities: rows within a dim-0
        // group share their composition exactly.
        let p_hot = oracle.exact_row_failure_prob(20).unwrap();
        let p_cold = oracle.exact_row_failure_prob(0).unwrap();

        // Exact top-1 TV over dimension 0 from the designed probabilities.
        let total = p_hot + 9.0 * p_cold;
        let exact_tv: f64 = 0.5
            * ((p_hot / total - 0.1).abs() + 9.0 * (p_cold / total - 0.1).abs());
        exact_tvs.push(exact_tv);

        // Empirical: bootstrap-vote 20k uniform assignments.
        let draw_stream = Stream::root(809).child("assignments").index(k as u64);
        let cfg = VoteConfig::new(k, 810 + k as u64).unwrap();
        let mut samples = Vec::with_capacity(20_000);
        let mut rng = draw_stream.rng();
        for draw in 0..20_000u64 {
            let idx = rng.below(100);
            let failed = bootstrap_vote(&pool, idx, &cfg, draw).unwrap().failed;
            samples.push((space.index_to_assignment(idx as u128).unwrap(), failed));
        }
        let hists = failure_histograms(&samples, &space);
        let ranked = top_k_dimensions(&hists, 1).unwrap();
        assert_eq!(ranked[0].0, 0, "hot dimension should rank first at K={k}");
        let n_fails = hists[0].total as f64;
        let se_tv = (0.9f64 * 0.1 / n_fails).sqrt();
        assert!(
            (ranked[0].1 - exact_tv).abs() <= 3.0 * se_tv,
            "K={k}: empirical tv {} vs exact {exact_tv} (3se {})",
            ranked[0].1,
            3.0 * se_tv
        );
        empirical_tvs.push(ranked[0].1);

        // Hot-row failure probability against the independent binomial tail.
        let tail = binomial_vote_tail(k, 0.8);
        assert!((p_hot - tail).abs() < 1e-12);
        hot_exacts.push(tail);
        let mut fails = 0u64;
        let n = 10_000u64;
        let hot_cfg = VoteConfig::new(k, 811).unwrap();
        for draw in 0..n {
            fails += u64::from(bootstrap_vote(&pool, 20, &hot_cfg, draw).unwrap().failed);
        }
        let rate = fails as f64 / n as f64;
        let se = (tail * (1.0 - tail) / n as f64).sqrt();
        assert!(
            (rate - tail).abs() <= 3.0 * se + 1e-9,
            "K={k}: hot rate {rate} vs designed {tail}"
        );
        hot_rates.push(rate);
    }

    // Designed values are strictly increasing in K; empirical values follow
    // within the 3-SE slack already asserted above.
    assert!(exact_tvs[0] < exact_tvs[1] && exact_tvs[1] < exact_tvs[2], "{exact_tvs:?}");
    assert!(
        hot_exacts[0] < hot_exacts[1] && hot_exacts[1] < hot_exacts[2],
        "{hot_exacts:?}"
    );
    b.finish(
        8,
        "k-sharpening",
        &format!("tv {empirical_tvs:.3?} (exact {exact_tvs:.3?}), hot rate {hot_rates:.3?}"),
    );
}

#[test]
fn c09_weight_bound() {
    let b = Budget::new(60.0);
    let stream = Stream::root(909).child("random-proposals");
    let lambdas = [0.1, 0.3, 0.5];
    let mut checks = 0u64;
    let mut max_excess = f64::NEG_INFINITY;
    let mut case = 0u64;
    while checks < 100_000 {
        let mut rng = stream.index(case).rng();
        case += 1;
        let d = 1 + (rng.below(3) as usize);
        let shape: Vec<usize> = (0..d).map(|_| 2 + rng.below(7) as usize).collect();
        let space = ParamSpace::from_shape(&shape).unwrap().into_arc();
        let probs: Vec<Vec<f64>> = shape
            .iter()
            .map(|&s| {
                let raw: Vec<f64> = (0..s).map(|_| rng.next_f64()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum.max(1e-12)).collect()
            })
            .collect();
        let q = Proposal::from_probs(&space, probs).unwrap();
        for &lambda in &lambdas {
            let dq = DefensiveProposal::new(q.clone(), lambda, space.clone()).unwrap();
            // A handful of random cells per proposal.
            for _ in 0..4 {
                let idx = rng.below(space.total_size() as u64);
                let z = space.index_to_assignment(idx as u128).unwrap();
                let w = dq.importance_weight(&z).unwrap();
                let bound = 1.0 / lambda + 1e-12;
                assert!(w <= bound, "w = {w} exceeds 1/lambda = {bound}");
                max_excess = max_excess.max(w - 1.0 / lambda);
                checks += 1;
            }
        }
    }
    b.finish(
        9,
        "weight-bound",
        &format!("{checks} checks, max(w - 1/lambda) = {max_excess:.2e}"),
    );
}

#[test]
fn c10_identity_reductions() {
    let b = Budget::new(60.0);
    let (space, model, _) = model_4x5();

    // lambda = 1 with any base equals the uniform baseline draw for draw.
    let skewed = skewed_q(&space, 1.0);
    let uniform = DefensiveProposal::new(Proposal::uniform(&space), 1.0, space.clone()).unwrap();
    let stream = Stream::root(1010).child("eval");
    let a = draw_eval_batch(&model, &skewed, 50_000, stream, true).unwrap();
    let p = draw_eval_batch(&model, &uniform, 50_000, stream, true).unwrap();
    assert_eq!(a.samples.as_ref().unwrap(), p.samples.as_ref().unwrap());
    let plain_mean = a.n_failures as f64 / 50_000.0;
    let est = failprob_core::estimator::estimate_from_values(&a.values, a.n_failures, 50_000, 0.01)
        .unwrap();
    assert_eq!(est.mu_hat, plain_mean);

    // Q = P gives every weight exactly 1 at any lambda.
    for lambda in [0.1, 0.3, 0.5, 1.0] {
        let q = DefensiveProposal::new(Proposal::uniform(&space), lambda, space.clone()).unwrap();
        for z in space.enumerate(100).unwrap() {
            assert_eq!(q.importance_weight(&z).unwrap(), 1.0);
        }
    }
    b.finish(
        10,
        "identity-reductions",
        &format!("f-sequences identical; mc mean {plain_mean:.5}; unit weights exact"),
    );
}

#[test]
fn c11_template_fidelity() {
    let b = Budget::new(60.0);
    let template_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../templates");
    let mut rendered = 0u64;
    for id in 0..9u32 {
        let tpl = Template::load(&template_dir.join(format!("gsm_template_{id}.json"))).unwrap();
        let space = tpl.space().clone();
        let stream = Stream::root(1111).child("sample").index(id as u64);
        let mut rng = stream.rng();
        for _ in 0..2_000 {
            let idx = rng.below(space.total_size() as u64);
            let z = space.index_to_assignment(idx as u128).unwrap();
            tpl.render(&z).unwrap();
            tpl.ground_truth(&z).unwrap();
            rendered += 1;
        }
    }

    // Spot answers from known worked instances.
    let t0 = Template::load(&template_dir.join("gsm_template_0.json")).unwrap();
    let z0 = pick(&t0, &[("ratio", "4")]);
    assert_eq!(t0.ground_truth(&z0).unwrap(), big_rat(25, 1));

    let t6 = Template::load(&template_dir.join("gsm_template_6.json")).unwrap();
    let z6 = pick(&t6, &[("x", "15"), ("k", "47"), ("n", "2")]);
    assert_eq!(t6.ground_truth(&z6).unwrap(), big_rat(4230, 1));

    let t8 = Template::load(&template_dir.join("gsm_template_8.json")).unwrap();
    let z8 = pick(&t8, &[("x", "7"), ("k", "7"), ("leftover", "8"), ("obj", "egg"), ("surface", "table")]);
    assert_eq!(t8.ground_truth(&z8).unwrap(), big_rat(8, 1));
    assert!(t8.render(&z8).unwrap().contains("57 eggs and 7 tables"));

    b.finish(
        11,
        "template-fidelity",
        &format!("{rendered} sampled instances; spot answers 25 / 4230 / 8"),
    );
}

/// Assignment with the given rendered values, defaults elsewhere.
fn pick(tpl: &Template, picks: &[(&str, &str)]) -> Assignment {
    let space = tpl.space();
    let mut idx = vec![0usize; space.num_dims()];
    for (name, rendered) in picks {
        let dim = space
            .dims()
            .iter()
            .position(|d| &d.name == name)
            .unwrap_or_else(|| panic!("no dimension {name}"));
        let v = space.dims()[dim]
            .values
            .iter()
            .position(|v| v.render() == *rendered)
            .unwrap_or_else(|| panic!("no value {rendered} in {name}"));
        idx[dim] = v;
    }
    Assignment(idx)
}

#[test]
fn c12_cli_determinism() {
    let b = Budget::new(120.0);
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_failprob");

    let run_config = serde_json::json!({
        "seed": 1212,
        "space": {"shape": [4, 5]},
        "oracle": {"planted": {"hot": [{"dim": 0, "value": 2, "bump": "0.9"}], "base_rate": "0.001"}},
        "cem": {"n": 500, "t": 4, "zeta": 0.2},
        "lambda": 0.1,
        "m": 20000,
        "reuse": true,
        "meta": {"model_tag": "determinism-check"}
    });
    let run_path = dir.path().join("run.json");
    std::fs::write(&run_path, serde_json::to_string(&run_config).unwrap()).unwrap();

    let sweep_config = serde_json::json!({
        "seed": 1212,
        "space": {"shape": [6, 6]},
        "oracle": {"planted": {"hot": [{"dim": 1, "value": 2, "bump": "0.5"}], "base_rate": "0.01"}},
        "cem": {"t": 3, "zeta": 0.2},
        "n_grid": [200],
        "m_grid": [2000, 5000],
        "lambda_grid": [0.1, 0.5],
        "replicates": 25,
        "target_rse": 0.2,
        "reuse": true
    });
    let sweep_path = dir.path().join("sweep.json");
    std::fs::write(&sweep_path, serde_json::to_string(&sweep_config).unwrap()).unwrap();

    let rerun = |args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "{args:?} exited with {status}");
    };

    let mut compared = 0usize;
    for (label, args) in [
        ("run", vec!["run", "--config", run_path.to_str().unwrap()]),
        ("baseline", vec!["baseline", "--config", run_path.to_str().unwrap()]),
        ("sweep", vec!["sweep", "--config", sweep_path.to_str().unwrap()]),
    ] {
        let out_a = dir.path().join(format!("{label}_a"));
        let out_b = dir.path().join(format!("{label}_b"));
        rerun(&args, &out_a);
        rerun(&args, &out_b);
        compared += assert_dirs_identical(&out_a, &out_b);
    }

    // tv consumes run output; byte-compare its reports too.
    let tv_a = dir.path().join("tv_a");
    let tv_b = dir.path().join("tv_b");
    let samples = dir.path().join("run_a").join("eval_samples.jsonl");
    for out in [&tv_a, &tv_b] {
        let status = Command::new(bin)
            .args(["tv", "--samples", samples.to_str().unwrap(), "--shape", "4,5", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    compared += assert_dirs_identical(&tv_a, &tv_b);

    b.finish(
        12,
        "cli-determinism",
        &format!("{compared} payload files byte-identical across reruns"),
    );
}

/// Compare two output directories file by file; returns the file count.
fn assert_dirs_identical(a: &Path, b: &Path) -> usize {
    let list = |d: &Path| -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    let files_a = list(a);
    let files_b = list(b);
    assert_eq!(files_a.len(), files_b.len());
    assert!(!files_a.is_empty(), "no output files in {}", a.display());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.file_name(), fb.file_name());
        let ca = std::fs::read(fa).unwrap();
        let cb = std::fs::read(fb).unwrap();
        assert_eq!(ca, cb, "{} differs between reruns", fa.display());
    }
    files_a.len()
}
