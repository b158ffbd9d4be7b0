use super::*;
use nalgebra::DMatrix;
use crate::conservative::ConservativeConfig;
use crate::domain::BoxDomain;
use crate::error::Error;
use crate::excursion::{ExcursionProblem, IntegrationGrid, Orientation};
use crate::gp::MaternNu;
use crate::optimizer::OptimizerConfig;
use crate::randfield::lhs_maximin;

fn small_cfg(kind: StrategyKind, iterations: usize, q: usize) -> StrategyConfig {
    StrategyConfig {
        kind,
        q,
        iterations,
        seed: 5,
        optimizer: OptimizerConfig {
            starts: 2,
            local_iterations: 30,
            pool_size: 64,
            ..Default::default()
        },
        conservative: ConservativeConfig {
            samples: 2000,
            ..Default::default()
        },
    }
}

fn model() -> ModelConfig {
    ModelConfig {
        nu: MaternNu::ThreeHalves,
        lengthscales: vec![0.2, 0.2],
        variance: 1.0,
        noise_variance: 0.0,
        prior_mean: 0.0,
        estimate: false,
        estimate_noise: false,
        mle_starts: 2,
    }
}

fn problem(threshold: f64, alpha: f64) -> ExcursionProblem {
    let dom = BoxDomain::unit(2);
    let grid = IntegrationGrid::sobol(&dom, 300, None).unwrap();
    ExcursionProblem::new(threshold, Orientation::Above, alpha, dom, grid).unwrap()
}

fn path() -> GpSamplePath {
    GpSamplePath::sample(&model().kernel().unwrap(), &BoxDomain::unit(2), 30, 8).unwrap()
}

fn strip_times(mut r: RunRecord) -> RunRecord {
    r.iterations.iter_mut().for_each(|i| i.wall_time_s = 0.0);
    r
}

#[test]
fn zero_iterations_records_initial_model_only() {
    let prob = problem(1.0, 0.95);
    let init = lhs_maximin(4, 2, 1);
    let r = run_strategy(&path(), &small_cfg(StrategyKind::C, 0, 1), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    assert_eq!(r.iterations.len(), 1);
    assert_eq!(r.evaluations(), 4);
    assert!(r.iterations[0].criterion_value.is_none());
}

#[test]
fn budget_and_design_growth() {
    let prob = problem(0.5, 0.95);
    let init = lhs_maximin(3, 2, 2);
    let r = run_strategy(&path(), &small_cfg(StrategyKind::B, 3, 2), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    assert_eq!(r.evaluations(), 3 + 3 * 2);
    assert_eq!(r.design.len(), r.evaluations());
    for it in &r.iterations {
        assert_eq!(it.n, 3 + it.iteration * 2);
    }
    assert_eq!(r.status, RunStatus::Complete);
}

#[test]
fn imse_ignores_threshold_and_alpha() {
    let init = lhs_maximin(3, 2, 3);
    let cfg = small_cfg(StrategyKind::Imse, 3, 1);
    let a = run_strategy(&path(), &cfg, &model(), &problem(1.0, 0.95), &init, None, RunLabel::default()).unwrap();
    let b = run_strategy(&path(), &cfg, &model(), &problem(-0.3, 0.8), &init, None, RunLabel::default()).unwrap();
    assert_eq!(a.design, b.design);
}

#[test]
fn identical_seeds_reproduce_the_record() {
    let prob = problem(0.8, 0.95);
    let init = lhs_maximin(3, 2, 4);
    let cfg = small_cfg(StrategyKind::A, 2, 1);
    let a = run_strategy(&path(), &cfg, &model(), &prob, &init, None, RunLabel::default()).unwrap();
    let b = run_strategy(&path(), &cfg, &model(), &prob, &init, None, RunLabel::default()).unwrap();
    assert_eq!(strip_times(a), strip_times(b));
}

#[test]
fn strategy_c_beats_the_uninformative_limit() {
    let prob = problem(0.5, 0.95);
    let init = lhs_maximin(4, 2, 5);
    let r = run_strategy(&path(), &small_cfg(StrategyKind::C, 3, 1), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    for it in &r.iterations[..3] {
        assert!(it.criterion_value.unwrap() <= it.expected_type2 + 1e-12, "{it:?}");
    }
}

#[test]
fn objective_failure_keeps_partial_record() {
    let prob = problem(0.5, 0.95);
    let init = lhs_maximin(3, 2, 6);
    let f = FnObjective::new("fragile", BoxDomain::unit(2), |x: &[f64]| {
        if x[0] + x[1] > -1.0 && x.iter().all(|v| (v * 1e6).fract() != 0.0) && x[0] < 2.0 {
            // succeeds on the initial design, fails afterwards via a counter-free rule
            Ok(x[0])
        } else {
            Err(Error::InvalidArgument("unreachable".into()))
        }
    });
    let ok = run_strategy(&f, &small_cfg(StrategyKind::Imse, 1, 1), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    assert_eq!(ok.status, RunStatus::Complete);

    let calls = std::cell::Cell::new(0usize);
    let g = FnObjective::new("failing", BoxDomain::unit(2), |x: &[f64]| {
        calls.set(calls.get() + 1);
        if calls.get() > 3 {
            Err(Error::Objective {
                point: x.to_vec(),
                message: "solver diverged".into(),
            })
        } else {
            Ok(x[1])
        }
    });
    let r = run_strategy(&g, &small_cfg(StrategyKind::Imse, 4, 1), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    assert!(matches!(r.status, RunStatus::Aborted { iteration: 0, .. }));
    assert_eq!(r.iterations.len(), 1);
    assert_eq!(r.evaluations(), 3);
}

fn toy_record(strategy: StrategyKind, doe: usize, replication: usize, observations: Vec<f64>) -> RunRecord {
    let prob = problem(1.0, 0.95);
    let init = lhs_maximin(3, 2, 9);
    let mut r = run_strategy(&path(), &small_cfg(strategy, 1, 1), &model(), &prob, &init, None, RunLabel { doe, replication }).unwrap();
    r.observations = observations;
    r
}

#[test]
fn proportion_inside_matches_hand_count() {
    let prob = problem(1.0, 0.95);
    let init = DMatrix::from_row_slice(4, 2, &[0.1, 0.1, 0.4, 0.8, 0.7, 0.3, 0.9, 0.9]);
    let f = FnObjective::new("table", BoxDomain::unit(2), |x: &[f64]| Ok(if x[0] > 0.5 { 2.0 } else { 0.0 }));
    let r = run_strategy(&f, &small_cfg(StrategyKind::Imse, 0, 1), &model(), &prob, &init, None, RunLabel::default()).unwrap();
    // y = (0, 0, 2, 2): two of four in [1, inf)
    assert_eq!(r.iterations[0].proportion_inside, 0.5);
}

#[test]
fn aggregation_of_identical_records() {
    let r = toy_record(StrategyKind::B, 0, 0, vec![0.0; 4]);
    let rows = aggregate(&[r.clone(), r.clone()]);
    assert_eq!(rows.len(), r.iterations.len());
    for (row, it) in rows.iter().zip(&r.iterations) {
        assert_eq!(row.expected_type2.mean, it.expected_type2);
        assert_eq!(row.expected_type2.median, it.expected_type2);
        assert_eq!(row.ce_measure.mean, it.ce_measure);
        assert_eq!(row.expected_type2.count, 2);
    }
}

#[test]
fn report_files_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let recs = vec![
        toy_record(StrategyKind::C, 1, 0, vec![0.0; 4]),
        toy_record(StrategyKind::Imse, 0, 1, vec![0.0; 4]),
        toy_record(StrategyKind::C, 0, 0, vec![0.0; 4]),
    ];
    let files = report(&recs, dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), METRIC_COLUMNS.join(","));
    let keys: Vec<String> = lines.map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["IMSE,0,1,0", "IMSE,0,1,1", "C,0,0,0", "C,0,0,1", "C,1,0,0", "C,1,0,1"]);

    let one = dir.path().join("one");
    report(&recs[..1], &one).unwrap();
    let rows = std::fs::read_to_string(one.join("metrics.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, recs[0].iterations.len());

    let json = dir.path().join("records.json");
    write_records_json(&recs, &json).unwrap();
    assert_eq!(read_records_json(&json).unwrap(), recs);
    assert!(report(&[], dir.path()).is_err());
}

#[test]
fn tiny_benchmark_runs_every_strategy() {
    let mut cfg = BenchmarkConfig::new(2, 1, 1, 1);
    cfg.grid_size = Some(200);
    cfg.truth_per_axis = Some(20);
    cfg.optimizer = OptimizerConfig {
        starts: 1,
        local_iterations: 10,
        pool_size: 32,
        ..Default::default()
    };
    cfg.conservative.samples = 1000;
    let recs = benchmark_gp(&cfg).unwrap();
    assert_eq!(recs.len(), 5);
    assert!(recs.iter().all(|r| r.evaluations() == 4 && r.last().unwrap().relative_volume_error.is_some()));
    let finals = final_rows(&aggregate(&recs));
    assert_eq!(finals.len(), 5);
    assert!(finals.iter().all(|f| f.iteration == 1));
}
