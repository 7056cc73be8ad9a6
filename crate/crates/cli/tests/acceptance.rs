//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Trained models are cached under the cargo temporary directory, keyed by
//! the full configuration text, so repeated runs only pay for evaluation.
//! Set `ACCEPTANCE_STRICT=1` to exit nonzero when a criterion fails, and
//! `ACCEPTANCE_MANIFEST=PATH` to add the reduced run on event-camera data.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use soel_cli::commands::{knn_summary, load_dataset};
use soel_cli::{run_single_neuron_demo, DatasetSource, DemoConfig, ExperimentConfig};
use soel_core::plasticity::{soel_update, Bindings, SumOfProductsRule};
use soel_core::quant::quantize_weights;
use soel_core::rng::next_unit;
use soel_core::snn::ResetMode;
use soel_core::{QuantizationScheme, RandomSource, WeightMatrix};
use soel_data::{MetaDataset, MetaSplit, Partition};
use soel_diff::{check_smoothed_network, GradCheckSetup};
use soel_meta::{export_json, import_json, load_checkpoint, meta_test, save_checkpoint, Checkpoint, MetaModel, Trainer, TrialSummary};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn single_neuron() -> (Verdict, Verdict) {
    let cfg = DemoConfig::default();
    let start = Instant::now();
    let runs: Vec<_> = (0..100).map(|s| run_single_neuron_demo(&cfg, s).expect("demo runs")).collect();
    let secs = start.elapsed().as_secs_f64();
    let converged = runs.iter().filter(|r| r.converged_after.is_some_and(|w| w <= 50)).count();
    let c1 = verdict(
        converged >= 95 && secs < 5.0,
        format!("{converged}/100 seeds sustain |e| < theta for 5 windows within 50 windows; {secs:.2} s"),
    );

    // Count writes in quiet windows from the counters and, independently,
    // from the weight trajectory.
    let window = cfg.soel.window;
    let mut quiet = 0;
    let mut counted = 0;
    let mut observed = 0;
    for r in runs.iter().filter(|r| r.converged_after.is_some()) {
        counted += r.quiet_window_writes;
        for (k, e) in r.window_errors.iter().enumerate() {
            if *e != 0.0 {
                continue;
            }
            quiet += 1;
            let last = (k + 1) * window - 1;
            let before = if last == 0 {
                cfg.initial_weight
            } else {
                r.trajectory[last - 1].weight
            };
            if r.trajectory[last].weight != before {
                observed += 1;
            }
        }
    }
    let c2 = verdict(
        counted == 0 && observed == 0 && quiet > 0,
        format!("{quiet} quiet windows over converged runs; {counted} counted writes, {observed} observed weight changes"),
    );
    (c1, c2)
}

fn gradients() -> Verdict {
    let setup = GradCheckSetup::default();
    let start = Instant::now();
    let (plain, meta) = check_smoothed_network(&setup).expect("gradient check runs");
    let secs = start.elapsed().as_secs_f64();
    verdict(
        plain.max_rel_error < 1e-4 && meta.max_rel_error < 1e-3 && plain.checked >= 100 && meta.checked >= 100 && secs < 30.0,
        format!(
            "{}-{}-{} net, {} steps: plain {:.2e} over {} weights, meta {:.2e} over {}; {secs:.2} s",
            setup.inputs, setup.hidden, setup.outputs, setup.steps, plain.max_rel_error, plain.checked, meta.max_rel_error, meta.checked
        ),
    )
}

fn quantization() -> Verdict {
    let scheme = QuantizationScheme::default();
    let src = RandomSource::new(4, 4);
    let mut g = src.rng();
    let values: Vec<f64> = (0..1_000_000).map(|_| next_unit(&mut g) * 700.0 - 350.0).collect();
    let mut w = WeightMatrix::from_shadow(1000, 1000, values).expect("shape");
    quantize_weights(&mut w, &scheme, &src.substream(1)).expect("finite values");
    let on_grid = w.quantized().iter().all(|&q| q % 2 == 0 && (-256..=254).contains(&q));

    let mut worst: f64 = 0.0;
    let mut draws = src.substream(2).rng();
    for x in [-255.3, -100.9, -3.5, -0.25, 0.1, 1.0, 7.77, 128.6, 253.99] {
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| f64::from(scheme.round_with(x, next_unit(&mut draws)).expect("finite")))
            .sum();
        worst = worst.max((sum / f64::from(n) - x).abs());
    }
    verdict(
        on_grid && worst < 0.02,
        format!("1e6 roundings on the even grid in [-256, 254]: {on_grid}; worst |mean - x| over 1e5 draws = {worst:.4}"),
    )
}

fn rule_engine() -> Verdict {
    let mut g = RandomSource::new(5, 5).rng();
    let mut mismatches = 0;
    for n in 0..10_000 {
        let eta = next_unit(&mut g) * 8.0 - 4.0;
        let c = 1 + (next_unit(&mut g) * 127.0) as i32;
        let y = if n % 10 == 0 {
            0
        } else {
            (next_unit(&mut g) * f64::from(2 * c)) as u32
        };
        let p = next_unit(&mut g) * 3.0 - 1.0;
        let direct = soel_update(&[p], y, eta, c)[0];
        let ctx = Bindings {
            pre_trace: Some(p),
            post_trace: Some(f64::from(y)),
            pre_spike: Some(0.0),
            post_spike: Some(if y != 0 { 1.0 } else { 0.0 }),
        };
        let via_rule = SumOfProductsRule::soel(eta, c).eval(&ctx).expect("bound");
        if via_rule.to_bits() != direct.to_bits() {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} bit mismatches over 1e4 random bindings"))
}

struct Trained {
    model: MetaModel,
    train_secs: f64,
    cached: bool,
}

fn cache_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn train_cached(name: &str, cfg: &ExperimentConfig, ds: &MetaDataset) -> Trained {
    let mut h = DefaultHasher::new();
    cfg.to_text().hash(&mut h);
    let dir = cache_dir();
    std::fs::create_dir_all(&dir).expect("cache dir");
    let path = dir.join(format!("{name}-{:016x}.ckpt", h.finish()));
    let secs_path = path.with_extension("secs");
    if let (Ok(ck), Ok(secs)) = (load_checkpoint(&path), std::fs::read_to_string(&secs_path)) {
        return Trained {
            model: ck.model,
            train_secs: secs.trim().parse().unwrap_or(f64::NAN),
            cached: true,
        };
    }
    eprintln!("training {name} ({} iterations)...", cfg.outer.iterations);
    let start = Instant::now();
    let model = MetaModel::init(cfg.model.clone(), cfg.seed).expect("valid model");
    let mut trainer = Trainer::new(model, cfg.outer.clone(), cfg.seed, cfg.eval.shot).expect("valid trainer");
    trainer.run(ds, |_| Ok(())).expect("training runs");
    let model = trainer.best_model().expect("best model");
    let train_secs = start.elapsed().as_secs_f64();
    save_checkpoint(
        &path,
        &Checkpoint {
            model: model.clone(),
            training: None,
        },
    )
    .expect("cache write");
    std::fs::write(&secs_path, format!("{train_secs}")).expect("cache write");
    Trained {
        model,
        train_secs,
        cached: false,
    }
}

fn evaluate(model: &MetaModel, ds: &MetaDataset, cfg: &ExperimentConfig) -> TrialSummary {
    meta_test(model, ds, Partition::Test, &cfg.eval, cfg.seed).expect("meta-test runs")
}

fn variant(reset: ResetMode, quantize: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.set_reset_mode(reset);
    cfg.model.quantize = quantize;
    cfg
}

fn describe(reset: ResetMode, quantize: bool) -> String {
    format!(
        "{} reset, {}",
        reset.as_str(),
        if quantize { "quantized" } else { "full precision" }
    )
}

/// Keeps only the first `n` meta-train classes.
fn reduce_train_classes(ds: &MetaDataset, n: usize) -> MetaDataset {
    let split = ds.split();
    let train: Vec<u32> = split.train.iter().copied().take(n).collect();
    let keep: Vec<u32> = train.iter().chain(&split.val).chain(&split.test).copied().collect();
    let classes: BTreeMap<u32, Vec<_>> = ds
        .classes()
        .filter(|(id, _)| keep.contains(id))
        .map(|(id, s)| (id, s.to_vec()))
        .collect();
    let split = MetaSplit::new(train, split.val.clone(), split.test.clone()).expect("valid split");
    MetaDataset::new(classes, split).expect("consistent dataset")
}

fn manifest_run(path: &str) -> (bool, String) {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = DatasetSource::Manifest(PathBuf::from(path));
    cfg.model.inputs = cfg.data_inputs();
    cfg.outer.iterations = 500;
    let ds = match load_dataset(&cfg) {
        Ok(ds) => reduce_train_classes(&ds, 20),
        Err(e) => return (false, format!("manifest run failed to load: {e}")),
    };
    let trained = train_cached("manifest", &cfg, &ds);
    let acc = evaluate(&trained.model, &ds, &cfg).mean;
    let knn = knn_summary(&cfg, &ds).expect("knn runs").mean;
    (
        acc >= knn + 0.20,
        format!("manifest run (20 train classes, 500 iterations): {acc:.4} vs knn {knn:.4}"),
    )
}

fn end_to_end() -> (Verdict, Verdict, Verdict) {
    let cfg = ExperimentConfig::default();
    let ds = load_dataset(&cfg).expect("synthetic family");
    let split = ds.split();
    let untrained = evaluate(&MetaModel::init(cfg.model.clone(), cfg.seed).expect("valid model"), &ds, &cfg);
    let knn = knn_summary(&cfg, &ds).expect("knn runs");

    let mut accs = Vec::new();
    let mut lines = Vec::new();
    let mut main = None;
    for (reset, quantize) in [
        (ResetMode::Hard, true),
        (ResetMode::Soft, true),
        (ResetMode::Hard, false),
        (ResetMode::Soft, false),
    ] {
        let vcfg = variant(reset, quantize);
        let name = format!("{}-{}", reset.as_str(), if quantize { "quantized" } else { "full" });
        let trained = train_cached(&name, &vcfg, &ds);
        let start = Instant::now();
        let summary = evaluate(&trained.model, &ds, &vcfg);
        let eval_secs = start.elapsed().as_secs_f64();
        lines.push(format!(
            "{}: {:.4} ± {:.4}{}",
            describe(reset, quantize),
            summary.mean,
            summary.std,
            if summary.accuracies.len() == cfg.eval.trials {
                ""
            } else {
                " (incomplete)"
            }
        ));
        accs.push((summary.mean, summary.accuracies.len()));
        if main.is_none() {
            main = Some((trained, summary, eval_secs));
        }
    }
    let (trained, summary, eval_secs) = main.expect("main variant trained");
    let total_secs = trained.train_secs + eval_secs;
    let mut detail = format!(
        "{} classes split {}/{}/{}; {} iterations; meta-test {:.4} ± {:.4} over {} trials vs untrained {:.4} and knn {:.4}; {:.0} s{}",
        split.train.len() + split.val.len() + split.test.len(),
        split.train.len(),
        split.val.len(),
        split.test.len(),
        cfg.outer.iterations,
        summary.mean,
        summary.std,
        summary.accuracies.len(),
        untrained.mean,
        knn.mean,
        total_secs,
        if trained.cached { " (training time from cache)" } else { "" }
    );
    let mut pass = summary.mean >= 0.85 && knn.mean < summary.mean && cfg.outer.iterations <= 2000 && total_secs < 1800.0;
    match std::env::var("ACCEPTANCE_MANIFEST") {
        Ok(path) => {
            let (ok, text) = manifest_run(&path);
            pass &= ok;
            detail.push_str("; ");
            detail.push_str(&text);
        }
        Err(_) => detail.push_str("; no manifest supplied"),
    }
    let c6 = verdict(pass, detail);

    // Export, import and re-evaluate; then perturb the shadow weights of the
    // imported model and evaluate again.
    let model = &trained.model;
    let back = import_json(&export_json(model)).expect("import");
    let again = evaluate(&back, &ds, &cfg);
    let mut noisy = back.clone();
    let params: Vec<Vec<f64>> = noisy
        .params()
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, w)| w + 0.9 * ((i % 7) as f64 - 3.0) / 3.0).collect())
        .collect();
    let quantized: Vec<Vec<i16>> = noisy.net.layers().iter().map(|l| l.weights.quantized().to_vec()).collect();
    noisy.set_params(&params).expect("same shapes");
    for (layer, q) in noisy.net.layers_mut().iter_mut().zip(quantized) {
        layer.weights.quantized_mut().copy_from_slice(&q);
    }
    let shadow_moved = noisy.params() != model.params();
    let perturbed = evaluate(&noisy, &ds, &cfg);
    let same = again.accuracies == summary.accuracies && again.inner_updates == summary.inner_updates;
    let blind = perturbed.accuracies == summary.accuracies && perturbed.inner_updates == summary.inner_updates && shadow_moved;
    let c7 = verdict(
        same && blind,
        format!("export/import reproduces all {} trial accuracies: {same}; shadow perturbation leaves the quantized meta-test unchanged: {blind}", summary.accuracies.len()),
    );

    let all = accs.iter().all(|&(a, n)| a > 0.80 && n == cfg.eval.trials);
    let c8 = verdict(all, lines.join("; "));
    (c6, c7, c8)
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let (c1, c2) = single_neuron();
    results.push((1, "single-neuron convergence", c1));
    results.push((2, "error-triggered sparsity", c2));
    results.push((3, "gradient correctness", gradients()));
    results.push((4, "quantization invariants", quantization()));
    results.push((5, "rule-engine equivalence", rule_engine()));
    let (c6, c7, c8) = end_to_end();
    results.push((6, "end-to-end bi-level learning", c6));
    results.push((7, "determinism and deployment fidelity", c7));
    results.push((8, "reset/precision variants", c8));
    results.sort_by_key(|r| r.0);

    println!();
    for (n, name, v) in &results {
        println!("criterion {n} ({name}): {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
