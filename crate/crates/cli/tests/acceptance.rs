//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Run with
//! `cargo test -p adabo-cli --test acceptance`; pass criterion numbers as
//! arguments (`-- 3 7`) to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use adabo::bench::{reference_configs, SyntheticKind};
use adabo::linalg::Cholesky;
use adabo::quality::tll_from_moments;
use adabo::rng::seeded;
use adabo::selection::{candidate_scores, exploitation_score_from, filter_by_score};
use adabo::*;
use adabo_cli::{cmd_benchmark, cmd_optimize, cmd_report, cmd_sensitivity, parse_config_str, with_workers};
use rand::Rng;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sphere(dim: usize) -> SyntheticObjective {
    SyntheticObjective::new(SyntheticKind::Sphere, dim).unwrap()
}

fn gp_exactness() -> Check {
    let obj = sphere(2);
    let doe = bench::initial_doe(&obj, 20, 20).map_err(|e| e.to_string())?;
    let y_std = stats::variance(doe.y()).sqrt();
    let mut worst = (0.0f64, 0.0f64);
    for family in KernelFamily::ALL {
        let spec = KernelSpec::new(family).fix(2, 1e-8).unwrap();
        let rpd = fit_mle(&doe, &spec, 5, &mut seeded(1)).map_err(|e| e.to_string())?;
        let c = rpd.spec().params.c;
        for (x, &y) in doe.x().iter_rows().zip(doe.y()) {
            let (m, v) = rpd.predict(x).unwrap();
            // variance back in the standardized units the kernel lives in
            let v_std = v / (rpd.y_std() * rpd.y_std());
            let mean_err = (m - y).abs() / y_std;
            let var_ratio = v_std / c;
            ensure(mean_err <= 1e-3, || format!("{family}: |mean - y| = {mean_err:e}·std(y)"))?;
            ensure(var_ratio < 1e-4, || format!("{family}: variance = {var_ratio:e}·c"))?;
            worst = (worst.0.max(mean_err), worst.1.max(var_ratio));
        }
    }
    Ok(format!("max |mean-y|/std(y) = {:.1e}, max var/c = {:.1e}", worst.0, worst.1))
}

fn quality_examples() -> Check {
    let lp = -(2.0 * std::f64::consts::PI).ln() / 2.0;
    let t1 = tll_from_moments(&[0.3], &[0.3], &[1.0]).unwrap();
    let te = tll_from_moments(&[0.3], &[0.3], &[std::f64::consts::E]).unwrap();
    ensure((t1 - lp).abs() < 1e-6 && (t1 + 0.918939).abs() < 1e-6, || format!("tll(σ²=1) = {t1}"))?;
    ensure((te - (lp - 0.5)).abs() < 1e-6 && (te + 1.418939).abs() < 1e-6, || format!("tll(σ²=e) = {te}"))?;
    let at = |v: f64| tll_from_moments(&[1.0], &[0.0], &[v]).unwrap();
    ensure(at(1.0) > at(0.9) && at(1.0) > at(1.1), || "tll(residual 1) does not peak at σ²=1".into())?;
    for (y, p, want) in [
        (vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], 0.0),
        (vec![0.0, 2.0], vec![1.0, 1.0], 1.0),
        (vec![0.0, 2.0], vec![0.0, 0.0], 2.0),
    ] {
        let r = relmse(&y, &p).unwrap();
        ensure((r - want).abs() <= 1e-12, || format!("relmse({y:?}, {p:?}) = {r}, want {want}"))?;
    }
    let q = |relmse, tll| QualityScore { relmse, tll };
    ensure(prefer(&q(0.10, -1.0), &q(0.30, 1.0), 0.05) == Preference::First, || "prefer: min RelMSE".into())?;
    ensure(prefer(&q(0.01, -1.0), &q(0.02, 1.0), 0.05) == Preference::Second, || "prefer: TLL zone".into())?;
    ensure(prefer(&q(0.10, 0.0), &q(0.10, 1.0), 0.05) == Preference::Second, || "prefer: tie".into())?;
    Ok(format!("tll = {t1:.6}, {te:.6}; relmse 0/1/2 exact"))
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 80 uniform points in `[0, 1]` with values drawn from a Matérn-3/2 GP.
fn matern_draw(seed: u64) -> Doe {
    let n = 80;
    let mut rng = seeded(1000 + seed);
    let x = Matrix::from_flat(n, 1, (0..n).map(|_| rng.gen::<f64>()).collect());
    let truth = KernelSpec::with_params(KernelFamily::Matern32, KernelParams { c: 1.0, lambda: 0.1, s2: 1e-6, alpha: 1.0 });
    let k = kernel_matrix(&truth, &x).unwrap();
    let ch = Cholesky::factor(&k, 0.0).unwrap();
    let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let y = (0..n).map(|i| (0..=i).map(|j| ch.l.get(i, j) * z[j]).sum()).collect();
    Doe::new(x, y).unwrap()
}

fn kernel_recovery() -> Check {
    let config = GpiConfig { test_fraction: 0.5, accept_relmse: 0.0, ..GpiConfig::default() };
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for seed in 0..20 {
        let doe = matern_draw(seed);
        let mut rng = seeded(2000 + seed);
        let (train, test) = split_train_test(&doe, config.test_fraction, &mut rng).map_err(|e| e.to_string())?;
        let found = gpi_search(&train, &test, &config, None, &mut rng).map_err(|e| e.to_string())?;
        *tally.entry(found.spec.family.name()).or_default() += 1;
    }
    let wins = tally.get("matern32").copied().unwrap_or(0);
    let detail = format!("matern32 chosen in {wins}/20 seeds {tally:?}");
    ensure(wins * 5 >= 20 * 4, || detail.clone())?;
    Ok(detail)
}

fn selection_machinery() -> Check {
    let s = CatState::new(3);
    ensure(s.probabilities() == vec![1.0 / 3.0; 3], || format!("start {:?}", s.probabilities()))?;
    let up = cat_update(&s, 1, true).unwrap();
    ensure(up.probabilities() == vec![0.25, 0.5, 0.25], || format!("after improvement {:?}", up.probabilities()))?;
    let same = cat_update(&up, 0, false).unwrap();
    ensure(same.probabilities() == up.probabilities(), || "a non-improving step changed the state".into())?;

    let design = Matrix::from_rows(&[[0.1, 0.1], [0.9, 0.2], [0.4, 0.8], [0.6, 0.5]]);
    let mut rng = seeded(4);
    for trial in 0..2000 {
        let a = rng.gen_range(1..6);
        let candidates: Vec<Candidate> =
            (0..a).map(|i| Candidate { x: vec![rng.gen(), rng.gen()], acquisition: i }).collect();
        let t = match trial % 4 {
            0 => f64::NEG_INFINITY,
            1 => f64::INFINITY,
            _ => rng.gen_range(-5.0..5.0),
        };
        let kept = filter_candidates(&candidates, &design, t).unwrap();
        ensure(!kept.is_empty(), || format!("empty filter at t = {t}"))?;
        if t == f64::NEG_INFINITY {
            ensure(kept.len() == a, || "t = -inf dropped a candidate".into())?;
        }
        let scores = candidate_scores(&candidates, &design).unwrap();
        ensure(!filter_by_score(&scores, t).is_empty(), || "empty index filter".into())?;
    }
    Ok("(1/3,1/3,1/3) -> (0.25,0.5,0.25); 2000 filters non-empty".into())
}

fn mmd_identities() -> Check {
    let corners = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    let m = mmd(&corners).unwrap();
    ensure(m == 1.0, || format!("corner MMD = {m}"))?;
    for v in [0.05, 0.3, 1.0] {
        let es = exploitation_score_from(v, v);
        ensure(es == 0.0, || format!("ES at d_min = MMD = {v} is {es}"))?;
    }
    let values: Vec<f64> = [32, 64, 128].iter().map(|&n| mmd(&sobol_points(2, n, 0).unwrap()).unwrap()).collect();
    ensure(values.windows(2).all(|w| w[1] < w[0]), || format!("MMD not decreasing: {values:?}"))?;
    Ok(format!("MMD(32/64/128) = {:.4} > {:.4} > {:.4}", values[0], values[1], values[2]))
}

fn desk_table() -> Check {
    let obj = sphere(6);
    let base = OptimizerConfig { iterations: 50, ..OptimizerConfig::default() };
    let mut configs = reference_configs(&base);
    for (sel, tag) in [(SelectionKind::Uniform, "U"), (SelectionKind::Categorical, "Cat")] {
        configs.push(NamedConfig {
            label: format!("bo-gpi-iada-{tag}"),
            config: OptimizerConfig { variant: Variant::BoGpiIAda, selection: sel, ..base.clone() },
        });
    }
    let settings = EnsembleSettings {
        objective_name: obj.label(),
        lower_bound: obj.lower_bound(),
        n_init: 16,
        seeds: (0..5).collect(),
        shared_init: true,
    };
    let ensembles = with_workers(Some(4), || run_ensemble(&obj, &configs, &settings))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let aborted: usize = ensembles.iter().map(RunEnsemble::aborted_runs).sum();
    ensure(aborted == 0, || format!("{aborted} runs aborted"))?;
    let (reference, challenger) = ensembles.split_at(9);
    let reference: Vec<&RunEnsemble> = reference.iter().collect();
    let challenger: Vec<&RunEnsemble> = challenger.iter().collect();
    let mut parts = Vec::new();
    for k in 2..=4 {
        let w = wcri(&reference, &challenger, k, obj.lower_bound()).map_err(|e| e.to_string())?;
        parts.push(format!("WCRI_{k} = {w:.1}%"));
        ensure(w >= 0.0, || parts.join(", "))?;
    }
    Ok(parts.join(", "))
}

fn bo_sanity() -> Check {
    let obj = sphere(2);
    let config = OptimizerConfig { iterations: 30, ..OptimizerConfig::default() };
    let settings = EnsembleSettings {
        objective_name: obj.label(),
        lower_bound: 0.0,
        n_init: 8,
        seeds: (0..5).collect(),
        shared_init: true,
    };
    let named = [NamedConfig { label: "bo".into(), config }];
    let ens = run_ensemble(&obj, &named, &settings).map_err(|e| e.to_string())?;
    let runs = &ens[0].runs;
    ensure(runs.iter().all(|r| r.history.aborted.is_none()), || "a run aborted".into())?;
    let initial = stats::median(&runs.iter().map(|r| r.history.initial_min()).collect::<Vec<_>>());
    let last = stats::median(&runs.iter().map(|r| r.history.final_incumbent()).collect::<Vec<_>>());
    let detail = format!("median final {last:.3e} vs median initial {initial:.3e} (ratio {:.1e})", last / initial);
    ensure(last <= 0.2 * initial, || detail.clone())?;
    Ok(detail)
}

fn ishigami_indices() -> Check {
    let obj = SyntheticObjective::new(SyntheticKind::Ishigami, 3).unwrap();
    let design = saltelli_design(3, 1024).map_err(|e| e.to_string())?;
    let y = evaluate_design(&obj, &design).map_err(|e| e.to_string())?;
    let r = sobol_indices(&design, &y).map_err(|e| e.to_string())?;
    let analytic = [0.3139, 0.4424, 0.0];
    for i in 0..3 {
        ensure((r.s1[i] - analytic[i]).abs() <= 0.05, || format!("S1_{} = {:.4}, analytic {}", i + 1, r.s1[i], analytic[i]))?;
    }
    ensure(r.st[2] > 0.2, || format!("ST_3 = {:.4}", r.st[2]))?;
    Ok(format!("S1 = ({:.4}, {:.4}, {:.4}), ST_3 = {:.4}", r.s1[0], r.s1[1], r.s1[2], r.st[2]))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

const DETERMINISM_CONFIG: &str = r#"
seeds = [1, 2]
n_init = 10
iterations = 4

[objective]
name = "alpinen2"
dim = 2

[defaults]
mle_restarts = 2
gpi = { trial_threshold = 4, mle_restarts = 2 }
gpi_condition = { kind = "periodic", period = 2 }
maximizer = { seed_count = 64, refine_top = 2, refine_steps = 20 }

[[benchmark.reference]]
label = "bo-rbf"
kernel = { family = "rbf" }

[[benchmark.reference]]
label = "bo-rq"
kernel = { family = "rq" }

[[optimizer]]
variant = "bo_gpi_iada"
selection = "uniform"

[[optimizer]]
variant = "bo_gpi_iada"
selection = "categorical"

[[optimizer]]
variant = "bo_ada"

[sensitivity]
n_bases = [32, 64]
resamples = 200
seed = 3
"#;

fn determinism() -> Check {
    let spec = parse_config_str(DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut counted = 0;
    for (name, workers) in [("a", 1), ("b", 3)] {
        let root = tmp.path().join(name);
        with_workers(Some(workers), || -> std::result::Result<(), String> {
            let e = |e: adabo_cli::CliError| e.to_string();
            cmd_optimize(&spec, &root.join("optimize")).map_err(e)?;
            cmd_benchmark(&spec, &root.join("benchmark")).map_err(e)?;
            cmd_report(&root.join("benchmark"), &root.join("report")).map_err(e)?;
            cmd_sensitivity(&spec, &root.join("sensitivity")).map_err(e)?;
            Ok(())
        })
        .map_err(|e| e.to_string())??;
    }
    let a = read_tree(&tmp.path().join("a"));
    let b = read_tree(&tmp.path().join("b"));
    ensure(a.keys().eq(b.keys()), || "reruns wrote different file sets".into())?;
    for (path, bytes) in &a {
        ensure(&b[path] == bytes, || format!("{path} differs between reruns"))?;
        counted += 1;
    }
    for f in ["wcri.tsv", "plotdata.tsv"] {
        ensure(a[&format!("benchmark/{f}")] == a[&format!("report/{f}")], || format!("report/{f} differs from benchmark"))?;
    }
    Ok(format!("{counted} files byte-identical across reruns with 1 and 3 workers"))
}

fn degeneracy() -> Check {
    let mut compared = 0;
    for (kind, dim) in [(SyntheticKind::Sphere, 2), (SyntheticKind::AlpineN2, 3)] {
        let obj = SyntheticObjective::new(kind, dim).unwrap();
        for acq in [AcquisitionKind::LogEi, AcquisitionKind::LogPi, AcquisitionKind::ucb()] {
            for seed in 0..2 {
                let doe = bench::initial_doe(&obj, 8, 8 * (seed + 1)).unwrap();
                let bo = OptimizerConfig { iterations: 12, seed, acquisition: acq, ..OptimizerConfig::default() };
                let ada = OptimizerConfig { variant: Variant::BoAda, acquisition_set: vec![acq], ..bo.clone() };
                let h0 = run_adaptive_bo(&obj, &doe, None, &bo).map_err(|e| e.to_string())?;
                let h1 = run_adaptive_bo(&obj, &doe, None, &ada).map_err(|e| e.to_string())?;
                ensure(h0.records.len() == h1.records.len(), || "trajectory lengths differ".into())?;
                for (r0, r1) in h0.records.iter().zip(&h1.records) {
                    let same = r0.y.to_bits() == r1.y.to_bits()
                        && r0.x.iter().zip(&r1.x).all(|(a, b)| a.to_bits() == b.to_bits())
                        && r0.kernel == r1.kernel;
                    ensure(same, || format!("{} {acq} seed {seed}: iteration {} differs", obj.label(), r0.iteration))?;
                }
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} BO / BO_Ada trajectory pairs bit-identical"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, name: "GP exactness", budget: Duration::from_secs(5), run: gp_exactness },
    Criterion { id: 2, name: "TLL/RelMSE worked examples", budget: Duration::from_secs(1), run: quality_examples },
    Criterion { id: 3, name: "kernel recovery", budget: Duration::from_secs(120), run: kernel_recovery },
    Criterion { id: 4, name: "selection machinery", budget: Duration::from_secs(1), run: selection_machinery },
    Criterion { id: 5, name: "MMD/ES identities", budget: Duration::from_secs(1), run: mmd_identities },
    Criterion { id: 6, name: "desk-scale WCRI sign", budget: Duration::from_secs(1800), run: desk_table },
    Criterion { id: 7, name: "BO sanity", budget: Duration::from_secs(120), run: bo_sanity },
    Criterion { id: 8, name: "Ishigami sensitivity", budget: Duration::from_secs(10), run: ishigami_indices },
    Criterion { id: 9, name: "determinism", budget: Duration::from_secs(600), run: determinism },
    Criterion { id: 10, name: "degeneracy equivalence", budget: Duration::from_secs(60), run: degeneracy },
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over budget {:?}", c.budget)),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{:>2}] {} ({:.2} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
        if result.is_err() {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
