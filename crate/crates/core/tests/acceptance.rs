//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use bmssl_core::augment::AugmentationLevel;
use bmssl_core::bilevel::{
    adapt_values, bootstrap_target, meta_gradient_standard, meta_step_standard, MetaGradientMode,
    QuadraticObjective,
};
use bmssl_core::checkpoint::Checkpoint;
use bmssl_core::config::{RunConfig, RunMode};
use bmssl_core::gradcheck::TINY_DIMS;
use bmssl_core::harness::{
    ablate, ablation_csv, descent_probe, gradcheck, probe_csv, spectral_demo, train, AblationKind, Benchmark,
    GradcheckScale, DELTA_GRID,
};
use bmssl_core::metrics::{read_rows, MetricsWriter};
use bmssl_core::spectral::{self, DiscreteViewSpace};
use bmssl_core::synth;
use bmssl_core::taskgen::{construct_tasks, TaskParams};
use bmssl_core::{rng, Tensor};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let report = match gradcheck(GradcheckScale::Tiny, 0, None) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let worst = report
        .results
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("non-empty");
    let elapsed = start.elapsed();
    let d = TINY_DIMS.param_count();
    outcome(
        report.passed() && elapsed < Duration::from_secs(60) && d <= 200,
        format!(
            "{} checks, worst {} at {:.2e}, d = {d}, {:.1}s",
            report.results.len(),
            worst.name,
            worst.max_rel_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn scalar(v: f64) -> Vec<Tensor> {
    vec![Tensor::new(vec![], vec![v]).expect("finite")]
}

fn quadratic_closed_forms() -> Outcome {
    let mut r = rng::seeded(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let theta = r.random_range(-3.0..3.0);
        let c = r.random_range(-3.0..3.0);
        let alpha: f64 = r.random_range(0.01..0.5);
        let beta = r.random_range(0.001..0.5);
        let l = r.random_range(0..8usize);
        let delta = r.random_range(1..8usize);
        let q = QuadraticObjective::new(c);
        let decay = |n: usize| (1.0 - alpha).powi(n as i32);
        let (w, _) = adapt_values(&q, &scalar(theta), l, alpha).expect("adapt");
        worst = worst.max((w[0].item() - (c + decay(l) * (theta - c))).abs());
        let (g, _, _) = meta_gradient_standard(&[q], &scalar(theta), l, alpha, MetaGradientMode::Exact).expect("grad");
        worst = worst.max((g[0].item() - decay(2 * l) * (theta - c)).abs());
        let step = meta_step_standard(&[q], &scalar(theta), l, alpha, beta, MetaGradientMode::Exact).expect("step");
        worst = worst.max((step.theta_after[0].item() - (theta - beta * decay(2 * l) * (theta - c))).abs());
        let t = bootstrap_target(&q, &scalar(theta), l, delta, alpha).expect("target");
        worst = worst.max((t[0].item() - (c + decay(l + delta) * (theta - c))).abs());
    }
    outcome(worst <= 1e-10, format!("50 instances, max abs error {worst:.2e}"))
}

fn descent_probe_criterion() -> Outcome {
    let start = Instant::now();
    let config = RunConfig::default();
    let bench = Benchmark::default_synthetic(&config).expect("benchmark");
    let betas = [1e-2, 1e-3, 1e-4];
    let probes = match descent_probe(&config, &bench, 100, &betas) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let smallest = betas.len() - 1;
    let descents = probes.iter().filter(|p| p.rows[smallest].change <= 1e-8).count();
    let ratios: Vec<f64> = probes
        .iter()
        .map(|p| p.rows[smallest].change / p.rows[smallest].predicted)
        .collect();
    let within = ratios.iter().filter(|&&r| (0.5..=2.0).contains(&r)).count();
    let elapsed = start.elapsed();
    let _ = std::fs::write(std::env::temp_dir().join("bmssl_probe.csv"), probe_csv(&probes));
    outcome(
        descents >= 95 && within >= 95 && elapsed < Duration::from_secs(300),
        format!(
            "at beta=1e-4: change <= 1e-8 on {descents}/100 episodes, within a factor of 2 of (beta/alpha)*KL on {within}/100 (median ratio {:.3}), {:.1}s",
            median(ratios),
            elapsed.as_secs_f64()
        ),
    )
}

fn spectral_optimality() -> Outcome {
    let mut r = rng::seeded(5);
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut margin = f64::INFINITY;
    for space_id in 0..20u64 {
        let views = r.random_range(4..=12usize);
        let sources = r.random_range(2..=5usize);
        let space = DiscreteViewSpace::random(views, sources, rng::derive(5, &[space_id]));
        let chain = spectral::build_chain(&space).expect("valid chain");
        let d = loop {
            let d = r.random_range(1..views);
            if !spectral::top_eigenfunctions(&chain, d).expect("eigen").degenerate_split {
                break d;
            }
        };
        let eig = spectral::top_eigenfunctions(&chain, d).expect("eigen");
        let start = Instant::now();
        let report =
            spectral::compare_with_random(&chain, d, spectral::default_epsilon(&eig, d), 10_000, space_id)
                .expect("gaps");
        slowest = slowest.max(start.elapsed());
        margin = margin.min(report.min_random_gap() - report.eigen_gap);
        if !report.eigen_is_optimal(1e-9) {
            failures.push(space_id);
        }
    }
    outcome(
        failures.is_empty() && slowest < Duration::from_secs(120),
        format!(
            "20 spaces x 10^4 subspaces, failing spaces {failures:?}, smallest margin {margin:.3e}, slowest {:.1}s",
            slowest.as_secs_f64()
        ),
    )
}

fn task_invariants() -> Outcome {
    let pool = synth::generate(8, 8, 1).expect("pool").images;
    let mut r = rng::seeded(3);
    let mut failures = 0;
    for i in 0..1000u64 {
        let k = r.random_range(1..=6usize);
        let way = r.random_range(1..=6usize);
        let m = r.random_range(2..=8usize);
        let m1 = r.random_range(1..m);
        let level = AugmentationLevel::ALL[r.random_range(0..4)];
        let params = TaskParams {
            n: k * way,
            k,
            m,
            m1,
            level,
        };
        let ok = construct_tasks(&pool[..params.n + r.random_range(0..=64 - params.n)], params, i)
            .and_then(|b| b.check_invariants());
        if ok.is_err() {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("1000 tuples, {failures} violations"))
}

fn mode_ordering() -> Outcome {
    let start = Instant::now();
    let mut medians = Vec::new();
    let mut lines = Vec::new();
    for mode in RunMode::ALL {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let config = RunConfig {
                mode,
                seed,
                wallclock: false,
                ..RunConfig::default()
            };
            let bench = Benchmark::default_synthetic(&config).expect("benchmark");
            match train(&config, &bench, None) {
                Ok(out) => accs.push(out.final_accuracy),
                Err(e) => return outcome(false, format!("{mode} seed {seed}: {e}")),
            }
        }
        let m = median(accs.clone());
        lines.push(format!(
            "{mode} {:.4} [{}]",
            m,
            accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ")
        ));
        medians.push(m);
    }
    let [scratch, metric, meta, boot] = medians[..] else {
        unreachable!()
    };
    let ordered = boot >= meta && meta >= metric && metric >= scratch;
    let gap = boot - scratch;
    let elapsed = start.elapsed();
    outcome(
        ordered && gap >= 0.10 && elapsed < Duration::from_secs(3600),
        format!(
            "medians {}; ordering {}, bmssl - scratch = {:.1} points, {:.0}s",
            lines.join(", "),
            if ordered { "holds" } else { "violated" },
            100.0 * gap,
            elapsed.as_secs_f64()
        ),
    )
}

fn delta_trend() -> Outcome {
    let config = RunConfig::default();
    let bench = Benchmark::default_synthetic(&config).expect("benchmark");
    let cells = match ablate(AblationKind::Delta, &config, &bench) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let sps: Vec<f64> = cells.iter().map(|c| c.steps_per_second.unwrap_or(f64::NAN)).collect();
    let decreasing = sps.windows(2).all(|w| w[1] < w[0]);
    let best = cells.iter().map(|c| c.accuracy).fold(f64::MIN, f64::max);
    let at5 = cells[DELTA_GRID.iter().position(|&d| d == 5).expect("grid has 5")].accuracy;
    let _ = std::fs::write(std::env::temp_dir().join("bmssl_delta.csv"), ablation_csv(AblationKind::Delta, &cells));
    outcome(
        decreasing && best - at5 <= 0.01,
        format!(
            "steps/s {} ({}), accuracy {} (delta=5 is {:.1} points below best)",
            sps.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(" > "),
            if decreasing { "strictly decreasing" } else { "not strictly decreasing" },
            cells.iter().map(|c| format!("{:.3}", c.accuracy)).collect::<Vec<_>>().join(" "),
            100.0 * (best - at5)
        ),
    )
}

fn augmentation_flatness() -> Outcome {
    let config = RunConfig {
        wallclock: false,
        ..RunConfig::default()
    };
    let bench = Benchmark::default_synthetic(&config).expect("benchmark");
    let cells = match ablate(AblationKind::Augmentation, &config, &bench) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let accs: Vec<f64> = cells.iter().map(|c| c.accuracy).collect();
    let spread = accs.iter().copied().fold(f64::MIN, f64::max) - accs.iter().copied().fold(f64::MAX, f64::min);
    outcome(
        spread <= 0.03,
        format!(
            "A1..A4 accuracy {}, spread {:.1} points",
            accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" "),
            100.0 * spread
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let p = |name: &str| dir.path().join(name);
    let mut problems = Vec::new();

    let ds = synth::generate(16, 40, 0).expect("dataset");
    synth::save(&ds, &p("a.bmsd")).expect("save");
    synth::save(&synth::generate(16, 40, 0).expect("dataset"), &p("b.bmsd")).expect("save");
    if std::fs::read(p("a.bmsd")).ok() != std::fs::read(p("b.bmsd")).ok() {
        problems.push("dataset files differ");
    }

    let mut config = RunConfig {
        meta_steps: 15,
        eval_every: 5,
        eval_episodes: 20,
        wallclock: false,
        ..RunConfig::default()
    };
    let bench = Benchmark::from_dataset(&ds, &config).expect("benchmark");
    for mode in RunMode::ALL {
        config.mode = mode;
        let mut outputs = Vec::new();
        for run in ["1", "2"] {
            let metrics = p(&format!("{mode}{run}.csv"));
            let ckpt = p(&format!("{mode}{run}.bmsl"));
            let mut w = MetricsWriter::create(&metrics).expect("metrics");
            let out = train(&config, &bench, Some(&mut w)).expect("train");
            out.checkpoint.save(&ckpt).expect("save");
            let loaded = Checkpoint::load(&ckpt).expect("load");
            if !loaded.params.bitwise_eq(&out.checkpoint.params) || loaded.to_bytes() != out.checkpoint.to_bytes() {
                problems.push("checkpoint roundtrip is not bitwise");
            }
            outputs.push((std::fs::read(&metrics).expect("read"), std::fs::read(&ckpt).expect("read")));
        }
        if outputs[0] != outputs[1] {
            problems.push("training outputs differ between runs");
        }
    }

    // Timed runs agree in every column except elapsed time.
    config.mode = RunMode::Bmssl;
    config.wallclock = true;
    let mut rows = Vec::new();
    for run in ["t1", "t2"] {
        let metrics = p(&format!("{run}.csv"));
        let mut w = MetricsWriter::create(&metrics).expect("metrics");
        train(&config, &bench, Some(&mut w)).expect("train");
        let mut r = read_rows(&metrics).expect("rows");
        r.iter_mut().for_each(|row| row.wallclock_seconds = None);
        rows.push(r);
    }
    if rows[0] != rows[1] {
        problems.push("timed runs differ outside the wallclock column");
    }

    let a = spectral_demo(8, 3, 2, 200, 4).expect("demo");
    let b = spectral_demo(8, 3, 2, 200, 4).expect("demo");
    if a.spectrum_csv() != b.spectrum_csv() || a.gaps_csv() != b.gaps_csv() {
        problems.push("spectral demo differs");
    }

    let probe_config = RunConfig::default();
    let probe_bench = Benchmark::from_dataset(&ds, &probe_config).expect("benchmark");
    let p1 = descent_probe(&probe_config, &probe_bench, 3, &[1e-3]).expect("probe");
    let p2 = descent_probe(&probe_config, &probe_bench, 3, &[1e-3]).expect("probe");
    if probe_csv(&p1) != probe_csv(&p2) {
        problems.push("probe differs");
    }

    config.wallclock = false;
    config.meta_steps = 5;
    let s1 = ablate(AblationKind::Structure, &config, &bench).expect("ablate");
    let s2 = ablate(AblationKind::Structure, &config, &bench).expect("ablate");
    if ablation_csv(AblationKind::Structure, &s1) != ablation_csv(AblationKind::Structure, &s2) {
        problems.push("ablation CSV differs");
    }

    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "dataset, metrics, checkpoints, spectral, probe and ablation outputs byte-identical; checkpoint roundtrips bitwise".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient oracle suite", gradient_oracle),
        ("closed-form bi-level oracle", quadratic_closed_forms),
        ("descent probe", descent_probe_criterion),
        ("spectral optimality", spectral_optimality),
        ("task-construction invariants", task_invariants),
        ("mode ordering", mode_ordering),
        ("delta trend", delta_trend),
        ("augmentation flatness", augmentation_flatness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {id} {verdict} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
