//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each;
//! the process exits non-zero when any criterion fails.
//!
//! Select criteria by number: `cargo test --release --test acceptance -- 2 5`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use excursion_core::conservative::{conservative_level, verify_bound, ConservativeConfig};
use excursion_core::criteria::{bvn_cdf, phi2, CriterionContext};
use excursion_core::excursion::{
    coverage, coverage_at, quantile, type2_uncertainty, vorobev_level, vorobev_uncertainty, CoverageField,
    EstimateKind, ExcursionProblem, IntegrationGrid, Orientation, QuantileEstimate,
};
use excursion_core::gp::{Design, GpPosterior, KernelSpec, MaternNu};
use excursion_core::harness::{aggregate, benchmark_gp, final_rows, load_toml, BenchmarkFile, StrategyKind};
use excursion_core::normal;
use excursion_core::randfield::simulate;
use excursion_core::BoxDomain;

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

fn uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// A model conditioned on a prior draw at `n` uniform points of the unit cube.
fn random_model(rng: &mut ChaCha8Rng, d: usize, n: usize, noise: f64) -> GpPosterior {
    let nu = if rng.random::<bool>() { MaternNu::FiveHalves } else { MaternNu::ThreeHalves };
    let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.15..0.5)).collect();
    let kernel = KernelSpec::new(nu, ls, rng.random_range(0.5..2.0)).unwrap();
    let x = uniform(rng, n, d);
    let prior = GpPosterior::prior(kernel.clone(), 0.0, 0.0).unwrap();
    let path = simulate(&prior, &x, 1, rng.random()).unwrap();
    let eps = Normal::new(0.0, noise.sqrt().max(1e-300)).unwrap();
    let y = DVector::from_fn(n, |i, _| path.values[(0, i)] + if noise > 0.0 { eps.sample(rng) } else { 0.0 });
    GpPosterior::fit(kernel, Design::new(x, y, noise).unwrap(), 0.0).unwrap()
}

fn unit_problem(d: usize, threshold: f64, orientation: Orientation, grid: IntegrationGrid) -> ExcursionProblem {
    ExcursionProblem::new(threshold, orientation, 0.95, BoxDomain::unit(d), grid).unwrap()
}

/// Conditions on simulated batch responses and averages the resulting
/// deviation and type II error: a brute-force version of both criteria.
fn one_step_oracle(
    p: &GpPosterior,
    prob: &ExcursionProblem,
    batch: &DMatrix<f64>,
    rho: f64,
    n: usize,
    seed: u64,
) -> ((f64, f64), (f64, f64)) {
    let ens = simulate(p, batch, n, seed).unwrap();
    let tau2 = p.noise_variance();
    let eps = Normal::new(0.0, tau2.sqrt().max(1e-300)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut dev, mut t2) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for r in 0..n {
        let y = DVector::from_fn(batch.nrows(), |i, _| {
            ens.values[(r, i)] + if tau2 > 0.0 { eps.sample(&mut rng) } else { 0.0 }
        });
        let next = p.update(batch, &y).unwrap();
        let f: CoverageField = coverage_at(&next, prob, &prob.grid.points).unwrap();
        dev.push(vorobev_uncertainty(&f, &prob.grid, rho));
        t2.push(type2_uncertainty(&f, &prob.grid, rho));
    }
    (mean_se(&dev), mean_se(&t2))
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut agree = 0;
    let mut worst = 0.0_f64;
    for case in 0..20 {
        let d = if case < 10 { 1 } else { 2 };
        let q = 1 + case % 3;
        let noise = if case % 4 == 3 { 0.01 } else { 0.0 };
        let n = rng.random_range(4..9);
        let post = random_model(&mut rng, d, n, noise);
        let orient = if rng.random::<bool>() { Orientation::Above } else { Orientation::Below };
        let t = rng.random_range(-0.6..0.6);
        let grid = if d == 1 {
            IntegrationGrid::full_grid(&BoxDomain::unit(1), &[50]).unwrap()
        } else {
            IntegrationGrid::sobol(&BoxDomain::unit(2), 100, None).unwrap()
        };
        let prob = unit_problem(d, t, orient, grid);
        let rho = rng.random_range(0.3..0.99);
        let batch = uniform(&mut rng, q, d);
        let ctx = CriterionContext::new(&post, &prob).unwrap();
        let (jn, jt2) = (ctx.jn(&batch, rho).unwrap(), ctx.jt2(&batch, rho).unwrap());
        let ((ojn, sjn), (ot2, st2)) = one_step_oracle(&post, &prob, &batch, rho, 20_000, 1000 + case as u64);
        let zjn = (jn - ojn).abs() / sjn.max(1e-15);
        let zt2 = (jt2 - ot2).abs() / st2.max(1e-15);
        worst = worst.max(zjn).max(zt2);
        let ok = (jn - ojn).abs() <= 3.0 * sjn + 1e-12 && (jt2 - ot2).abs() <= 3.0 * st2 + 1e-12;
        agree += ok as usize;
        if !ok {
            eprintln!("  case {case} (d={d}, q={q}): J_n {jn:.6e} vs {ojn:.6e}±{sjn:.1e}, J_T2 {jt2:.6e} vs {ot2:.6e}±{st2:.1e}");
        }
    }
    outcome(agree >= 19, format!("{agree}/20 instances within 3 SE (largest |z| {worst:.2})"))
}

fn criterion_2() -> Outcome {
    let mut err_id = 0.0_f64;
    for r in [-0.95, -0.5, 0.0, 0.5, 0.95] {
        let exact = 0.25 + f64::asin(r) / (2.0 * std::f64::consts::PI);
        err_id = err_id.max((bvn_cdf(0.0, 0.0, r) - exact).abs());
        let cov = [[1.0, r], [r, 1.0]];
        err_id = err_id.max((phi2(0.0, 0.0, cov).unwrap() - exact).abs());
    }
    let mut err_lim = 0.0_f64;
    for r in [-0.95, -0.5, 0.0, 0.5, 0.95] {
        for h in [-2.5, -1.0, 0.0, 0.7, 2.0] {
            for k in [40.0, 1e6, f64::INFINITY] {
                err_lim = err_lim.max((bvn_cdf(h, k, r) - normal::cdf(h)).abs());
                err_lim = err_lim.max((bvn_cdf(k, h, r) - normal::cdf(h)).abs());
            }
        }
    }
    outcome(
        err_id <= 1e-7 && err_lim <= 1e-7,
        format!("arcsin identity error {err_id:.1e}, marginal limit error {err_lim:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let grid = IntegrationGrid::sobol(&BoxDomain::unit(2), 400, None).unwrap();
    let (mut bound_ok, mut incl_ok) = (0, 0);
    let mut lines = Vec::new();
    for case in 0..10 {
        let n = rng.random_range(6..13);
        let post = random_model(&mut rng, 2, n, 0.0);
        let t = rng.random_range(-0.5..0.5);
        let prob = unit_problem(2, t, Orientation::Above, grid.clone());
        let field = coverage(&post, &prob).unwrap();
        let cfg = ConservativeConfig {
            seed: 3000 + case,
            ..Default::default()
        };
        let ce = conservative_level(&post, &prob, &field, &prob.grid, &cfg).unwrap();
        let ens = simulate(&post, &prob.grid.points, 500, 4000 + case).unwrap();
        let rep = verify_bound(&ce.estimate, Some(&field), &prob, &prob.grid, &ens).unwrap();
        let incl = rep.inclusion_frequency >= 0.95 - 3.0 * rep.inclusion_std_error;
        bound_ok += rep.passes as usize;
        incl_ok += incl as usize;
        lines.push(format!("{:.3}/{:.2}", rep.ratio, rep.inclusion_frequency));
        if !(rep.passes && incl) {
            eprintln!("  model {case}: {rep:?} level {:.4}", ce.level);
        }
    }
    outcome(
        bound_ok == 10 && incl_ok == 10,
        format!("bound held {bound_ok}/10, inclusion held {incl_ok}/10 (ratio/frequency: {})", lines.join(" ")),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let m = 12;
    let pts = DMatrix::from_fn(m, 1, |i, _| (i as f64 + 0.5) / m as f64);
    let grid = IntegrationGrid::custom(pts, DVector::from_element(m, 1.0 / m as f64)).unwrap();
    let mut violations = 0;
    let mut checked = 0usize;
    for _ in 0..50 {
        let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let field = CoverageField {
            values: p.clone(),
            posterior_id: String::new(),
        };
        let distance = |mask: &[bool]| -> f64 {
            mask.iter().zip(&p).map(|(&inside, &pj)| if inside { 1.0 - pj } else { pj }).sum::<f64>() / m as f64
        };
        for rho in [0.3, 0.5, 0.8] {
            let q = quantile(&field, &grid, rho, EstimateKind::Quantile);
            let best = distance(&q.members);
            for bits in 0u32..(1 << m) {
                if bits.count_ones() as usize != q.member_count() {
                    continue;
                }
                let mask: Vec<bool> = (0..m).map(|j| bits >> j & 1 == 1).collect();
                checked += 1;
                if distance(&mask) < best {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{checked} subsets checked, {violations} strictly better than the quantile"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let test = IntegrationGrid::sobol(&BoxDomain::unit(2), 200, None).unwrap().points;
    let mut worst = 0.0_f64;
    for case in 0..20 {
        let q = if case % 2 == 0 { 1 } else { 3 };
        let noise = if case % 3 == 0 { 0.05 } else { 0.0 };
        let n = rng.random_range(3..15);
        let post = random_model(&mut rng, 2, n, noise);
        let xq = uniform(&mut rng, q, 2);
        let yq = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
        let updated = post.update(&xq, &yq).unwrap();
        let design = post.design().extended(&xq, &yq).unwrap();
        let refit = GpPosterior::fit(post.kernel().clone(), design, post.prior_mean()).unwrap();
        let (m1, v1) = updated.predict(&test).unwrap();
        let (m2, v2) = refit.predict(&test).unwrap();
        worst = worst.max((m1 - m2).amax()).max((v1 - v2).amax());
    }
    outcome(worst <= 1e-8, format!("largest update/refit difference {worst:.1e} over 20 cases"))
}

struct Errors {
    type1: f64,
    type2: f64,
}

fn simulated_errors(est: &QuantileEstimate, prob: &ExcursionProblem, values: &DMatrix<f64>) -> Errors {
    let r = values.nrows() as f64;
    let (mut type1, mut type2) = (0.0, 0.0);
    for i in 0..values.nrows() {
        for (j, w) in prob.grid.weights.iter().enumerate() {
            let inside = prob.contains(values[(i, j)]);
            if est.members[j] && !inside {
                type1 += w / r;
            } else if !est.members[j] && inside {
                type2 += w / r;
            }
        }
    }
    Errors { type1, type2 }
}

/// One-dimensional illustration: Matérn 3/2, lengthscale 0.3, variance 0.3,
/// ten noise-free observations of a prior sample path at uniform locations,
/// threshold 0. The realization is the first seed whose coverage field has
/// the skew of the reference example (Vorob'ev level below one half and a
/// conservative level above alpha); errors come from 100 fresh conditional
/// simulations.
fn criterion_6() -> Outcome {
    let kernel = KernelSpec::new(MaternNu::ThreeHalves, vec![0.3], 0.3).unwrap();
    let dom = BoxDomain::unit(1);
    let grid = IntegrationGrid::full_grid(&dom, &[500]).unwrap();
    let prob = ExcursionProblem::new(0.0, Orientation::Above, 0.95, dom, grid).unwrap();
    let prior = GpPosterior::prior(kernel.clone(), 0.0, 0.0).unwrap();
    for seed in 1..=100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, 10, 1);
        let y = simulate(&prior, &x, 1, seed).unwrap().values.row(0).transpose();
        let post = GpPosterior::fit(kernel.clone(), Design::new(x, y, 0.0).unwrap(), 0.0).unwrap();
        let field = coverage(&post, &prob).unwrap();
        let rho_v = vorobev_level(&field, &prob.grid);
        let cfg = ConservativeConfig {
            seed,
            ..Default::default()
        };
        let ce = conservative_level(&post, &prob, &field, &prob.grid, &cfg).unwrap();
        if !(rho_v < 0.5 && ce.level > prob.alpha) {
            continue;
        }
        let ens = simulate(&post, &prob.grid.points, 100, seed + 10_000).unwrap();
        let sets = [
            ce.estimate.clone(),
            quantile(&field, &prob.grid, 0.95, EstimateKind::Quantile),
            quantile(&field, &prob.grid, 0.5, EstimateKind::Median),
            quantile(&field, &prob.grid, rho_v, EstimateKind::VorobevExpectation),
        ];
        let e: Vec<Errors> = sets.iter().map(|s| simulated_errors(s, &prob, &ens.values)).collect();
        let type1 = e[0].type1 < e[1].type1 && e[1].type1 < e[2].type1 && e[2].type1 <= e[3].type1;
        let type2 = e[0].type2 > e[1].type2 && e[1].type2 > e[2].type2 && e[2].type2 >= e[3].type2;
        let fmt = |f: &dyn Fn(&Errors) -> f64| e.iter().map(|x| format!("{:.2e}", f(x))).collect::<Vec<_>>().join(" ");
        return outcome(
            type1 && type2 && rho_v < 0.5,
            format!(
                "seed {seed}: rho_V {rho_v:.3}, rho_alpha {:.3}; type I [CE Q.95 Q.5 QV] {}; type II {}",
                ce.level,
                fmt(&|x| x.type1),
                fmt(&|x| x.type2)
            ),
        );
    }
    outcome(false, "no realization with a skewed coverage field among 100 seeds")
}

fn benchmark() -> (Vec<(StrategyKind, f64, f64, f64)>, f64) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark_d2.toml");
    let cfg: BenchmarkFile = load_toml(&path).unwrap();
    let start = Instant::now();
    let records = benchmark_gp(&cfg.benchmark).unwrap();
    let rows = final_rows(&aggregate(&records));
    let summary = rows
        .iter()
        .map(|r| (r.strategy, r.expected_type2.mean, r.ce_measure.mean, r.proportion_inside.mean))
        .collect();
    (summary, start.elapsed().as_secs_f64())
}

fn lookup(rows: &[(StrategyKind, f64, f64, f64)], k: StrategyKind) -> (f64, f64, f64) {
    let r = rows.iter().find(|r| r.0 == k).unwrap();
    (r.1, r.2, r.3)
}

fn criterion_7(rows: &[(StrategyKind, f64, f64, f64)]) -> Outcome {
    use StrategyKind::*;
    let t2 = |k| lookup(rows, k).0;
    let ce = |k| lookup(rows, k).1;
    let a = [B, C].iter().all(|&s| t2(s) < t2(Imse) && t2(s) < t2(Timse));
    let largest = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let b = ce(C) >= 0.95 * largest;
    let table = rows
        .iter()
        .map(|r| format!("{}: {:.4}/{:.4}", r.0.as_str(), r.1, r.2))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(a && b, format!("(a) {a} (b) {b}; final mean type II / CE measure: {table}"))
}

fn criterion_8(rows: &[(StrategyKind, f64, f64, f64)]) -> Outcome {
    use StrategyKind::*;
    let pi = |k| lookup(rows, k).2;
    let ok = pi(B) > pi(Imse) && pi(C) > pi(Imse);
    let table = rows.iter().map(|r| format!("{}: {:.3}", r.0.as_str(), r.3)).collect::<Vec<_>>().join(", ");
    outcome(ok, format!("final mean proportion inside: {table}"))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_excursion");
    let mut design = String::from("x1,x2,y\n");
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..12 {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        design.push_str(&format!("{a},{b},{}\n", (4.0 * a).sin() * (3.0 * b).cos()));
    }
    fs::write(dir.path().join("design.csv"), design).unwrap();
    let run = |args: &[&str]| -> bool { Command::new(bin).current_dir(dir.path()).args(args).status().unwrap().success() };
    let mut ok = run(&["fit", "--design", "design.csv", "--lower", "0,0", "--upper", "1,1", "--seed", "1", "--out", "model.json"]);
    let cfg = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/criticality_run.toml")).unwrap();
    fs::write(dir.path().join("run.toml"), cfg.replace("iterations = 10", "iterations = 3")).unwrap();
    let mut maps = Vec::new();
    let mut metrics = Vec::new();
    for k in 0..2 {
        let map = format!("map{k}.csv");
        let problem = ["--threshold", "0.2", "--lower", "0,0", "--upper", "1,1", "--grid-size", "500"];
        let mut args = vec!["criterion-map", "--model", "model.json", "--criterion", "jt2", "--resolution", "25"];
        args.extend(problem);
        args.extend(["--seed", "7", "--out", &map]);
        ok &= run(&args);
        let out = format!("run{k}");
        ok &= run(&["run", "--config", "run.toml", "--out", &out]);
        maps.push(fs::read(dir.path().join(&map)).unwrap_or_default());
        metrics.push(fs::read(dir.path().join(&out).join("metrics.csv")).unwrap_or_default());
    }
    let same = !maps[0].is_empty() && maps[0] == maps[1] && !metrics[0].is_empty() && metrics[0] == metrics[1];
    outcome(
        ok && same,
        format!("criterion map {} bytes, run metrics {} bytes, identical: {same}", maps[0].len(), metrics[0].len()),
    )
}

const NAMES: [&str; 9] = [
    "closed-form criteria vs one-step simulation",
    "bivariate normal CDF",
    "type I bound and inclusion of conservative estimates",
    "quantile optimality by exhaustive search",
    "kriging update vs refit",
    "one-dimensional error orderings",
    "scaled d=2 benchmark: type II error and CE measure",
    "scaled d=2 benchmark: proportion inside",
    "determinism of criterion-map and run outputs",
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut bench: Option<(Vec<(StrategyKind, f64, f64, f64)>, f64)> = None;
    let mut failures = 0;
    for id in 1..=9 {
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let result = match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 | 8 => {
                let (rows, secs) = bench.get_or_insert_with(benchmark);
                eprintln!("  benchmark ran in {secs:.0}s");
                if id == 7 {
                    criterion_7(rows)
                } else {
                    criterion_8(rows)
                }
            }
            _ => criterion_9(),
        };
        failures += !result.passed as usize;
        println!(
            "criterion {id} [{}] {} ({:.1}s): {}",
            if result.passed { "PASS" } else { "FAIL" },
            NAMES[id - 1],
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
