use proptest::prelude::*;
use scentnav::conditions::Study;
use scentnav::experiments::{
    aggregate_sensitivity, calibrate, regenerate, run_component_ablation, run_gamma_ablation,
    run_parameter_sweeps, run_sensitivity, write_bundle, ExperimentConfig, Lab, ReferenceTrends,
    Report, SearchMode, Variant,
};
use scentnav::memory::MemoryParams;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.train.total_episodes = 256;
    cfg.study.episodes = 4;
    cfg.study.probe_episodes = 2;
    cfg.study.ablation_seeds = 2;
    cfg.study.calibration_trials = 4;
    cfg.study.calibration_init = 2;
    cfg.study.calibration_candidates = 16;
    cfg.study.sensitivity_levels = vec![0.05, 0.25];
    cfg
}

#[test]
fn bundle_regenerates_byte_identically() {
    let cfg = tiny();
    let lab = Lab::new(cfg.clone());
    let cells = lab.run_study(Study::Difficulty).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = write_bundle(dir.path(), Study::Difficulty, &cells, &cfg.hash(), 0, 0).unwrap();
    assert_eq!(report.rows.len(), 3 * 3 * 4);
    let files = ["results.csv", "aggregate.json", "plot_difficulty.csv"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    for f in files {
        std::fs::remove_file(dir.path().join(f)).unwrap();
    }
    let again = regenerate(dir.path(), cfg.env.n_max).unwrap();
    assert_eq!(again, report);
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), b, "{f}");
    }
    let csv = String::from_utf8(before[0].clone()).unwrap();
    assert!(csv.starts_with("condition,goal_index,episode,steps,clicks,success,"));
}

#[test]
fn reruns_are_identical() {
    let a = Lab::new(tiny()).run_study(Study::Depth).unwrap();
    let b = Lab::new(tiny()).with_jobs(3).run_study(Study::Depth).unwrap();
    let ra = Report::from_cells(Study::Depth, &a).unwrap();
    let rb = Report::from_cells(Study::Depth, &b).unwrap();
    assert_eq!(ra.results_csv(), rb.results_csv());
    assert_eq!(ra.aggregate_json(), rb.aggregate_json());
}

#[test]
fn missing_condition_is_reported() {
    let lab = Lab::new(tiny());
    let mut cells = lab.run_study(Study::Position).unwrap();
    cells.retain(|c| c.kind.name() != "top");
    assert!(Report::from_cells(Study::Position, &cells).is_err());
}

#[test]
fn calibration_contract() {
    let mut cfg = tiny();
    let refs = ReferenceTrends::default();
    let lab = Lab::new(cfg.clone());
    let cal = calibrate(&lab, &refs).unwrap();
    assert_eq!(cal.trace.len(), 4);
    assert_eq!(cal.trace[0].params, cfg.memory);
    assert!(cal.best_objective <= cal.trace[0].objective);
    for w in cal.trace.windows(2) {
        assert!(w[1].incumbent <= w[0].incumbent);
    }
    for t in &cal.trace {
        assert!((0.01..=0.1).contains(&t.params.sigma));
        assert!(t.params.validate().is_ok());
    }
    assert!(!cal.pareto.is_empty());

    cfg.study.calibration_trials = 1;
    let one = calibrate(&Lab::new(cfg.clone()), &refs).unwrap();
    assert_eq!(one.trace.len(), 1);
    assert_eq!(one.best, cfg.memory);

    cfg.study.calibration_trials = 3;
    cfg.study.calibration_mode = SearchMode::Random;
    let random = calibrate(&Lab::new(cfg), &refs).unwrap();
    assert_eq!(random.trace.len(), 3);
}

#[test]
fn ablations_and_sweeps_run() {
    let cfg = tiny();
    let lab = Lab::new(cfg.clone());
    let refs = ReferenceTrends::default();
    let comp = run_component_ablation(&lab, &refs).unwrap();
    assert_eq!(comp.rows.len(), 4);
    assert_eq!(comp.row(Variant::NoNoise).params.sigma, 0.0);
    assert!(comp.rows.iter().all(|r| r.scores.trend_distance.is_finite()));

    let gamma = run_gamma_ablation(&lab).unwrap();
    assert_eq!(gamma.rows.len(), 3);
    for k in 0..5 {
        let best = gamma.rows.iter().map(|r| r.radar[k]).fold(0.0, f64::max);
        assert!((best - 1.0).abs() < 1e-12);
    }

    let sweeps = run_parameter_sweeps(&lab).unwrap();
    assert_eq!(sweeps.theta.len(), cfg.study.theta_grid.len());
    // The zero-threshold point is the no-decay variant under the fixed policy.
    let fixed = lab
        .summarize_fixed(&[Study::Difficulty], &Variant::NoDecay.apply(cfg.memory), cfg.study.probe_episodes)
        .unwrap();
    let mean_steps: f64 = Study::Difficulty
        .conditions()
        .into_iter()
        .map(|k| fixed.get(k, "steps").unwrap())
        .sum::<f64>()
        / 3.0;
    assert_eq!(sweeps.theta[0].steps, mean_steps);
}

#[test]
fn sensitivity_baseline_is_zero() {
    let lab = Lab::new(tiny());
    let s = run_sensitivity(&lab, &MemoryParams::default(), &ReferenceTrends::default()).unwrap();
    assert_eq!(s.baseline().score, 0.0);
    assert_eq!(s.rows.len(), 1 + 8 * 2 * 2);
    assert!(s.rows.iter().all(|r| (0.0..=1.0).contains(&r.score)));
}

proptest! {
    #[test]
    fn sensitivity_ignores_metric_order(
        runs in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 3), 2..10),
        perm in prop::sample::select(vec![[0usize, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]),
    ) {
        let base = runs[0].clone();
        let a = aggregate_sensitivity(&base, &runs);
        let permute = |v: &Vec<f64>| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let b = aggregate_sensitivity(&permute(&base), &runs.iter().map(permute).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(a[0], 0.0);
    }
}
