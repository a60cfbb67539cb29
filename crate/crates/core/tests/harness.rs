use knockoff_fdr::experiments::{
    aggregate, run_experiment, run_replication, MethodOutcome, ReplicationRecord, Setting, SimConfig,
    Variant,
};
use knockoff_fdr::io::{emit_results, ingest_csv, write_dataset, Dataset, Preprocessing};
use knockoff_fdr::linalg::{Matrix, Vector};
use knockoff_fdr::testing::{DecisionResult, Procedure, ScoreCard};

fn small() -> SimConfig {
    SimConfig {
        setting: Setting::Ar1(0.4),
        n: 60,
        d: 10,
        k: 3,
        amplitude: 1.0,
        alphas: vec![0.1, 0.2],
        reps: 4,
        seed: 9,
        cv_folds: 5,
        ..SimConfig::default()
    }
}

fn strip_runtime(mut records: Vec<ReplicationRecord>) -> Vec<ReplicationRecord> {
    for r in &mut records {
        r.runtime_ms = 0.0;
    }
    records
}

#[test]
fn same_seed_same_results() {
    let config = small();
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.summaries, b.summaries);
    assert_eq!(strip_runtime(a.records), strip_runtime(b.records));
}

#[test]
fn replication_depends_only_on_seed_and_index() {
    let config = small();
    let all = run_experiment(&config).unwrap();
    let mut one = run_replication(&config, 2).unwrap();
    one.runtime_ms = 0.0;
    let mut from_run = all.records[2].clone();
    from_run.runtime_ms = 0.0;
    assert_eq!(one, from_run);

    let shorter = run_experiment(&SimConfig { reps: 3, ..config.clone() }).unwrap();
    assert_eq!(strip_runtime(shorter.records), strip_runtime(all.records[..3].to_vec()));

    let other = run_experiment(&SimConfig { seed: 10, ..config }).unwrap();
    assert_ne!(other.records[0].truth.len(), 0);
    assert_ne!(other.records[0].tests, all.records[0].tests);
}

#[test]
fn summaries_are_recomputable_from_records() {
    let config = small();
    let res = run_experiment(&config).unwrap();
    assert_eq!(res.summaries.len(), config.methods.len() * config.alphas.len());
    for s in &res.summaries {
        let cards: Vec<&ScoreCard> = res
            .records
            .iter()
            .filter_map(|r| {
                r.outcomes
                    .iter()
                    .find(|o| o.method == s.method && o.alpha == s.alpha)
                    .and_then(|o| o.result.as_ref().ok())
                    .map(|(_, c)| c)
            })
            .collect();
        let m = cards.len() as f64;
        let fdr = cards.iter().map(|c| c.fdp).sum::<f64>() / m;
        let pow = cards.iter().map(|c| c.power).sum::<f64>() / m;
        let var = cards.iter().map(|c| (c.fdp - fdr).powi(2)).sum::<f64>() / (m - 1.0);
        assert_eq!(s.reps_used, cards.len());
        assert!((s.mean_fdr - fdr).abs() < 1e-12);
        assert!((s.mean_power - pow).abs() < 1e-12);
        assert!((s.se_fdr - (var / m).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn global_null_power_is_undefined() {
    let config = SimConfig { k: 0, amplitude: 0.0, reps: 2, ..small() };
    let res = run_experiment(&config).unwrap();
    for rec in &res.records {
        assert!(rec.truth.is_empty());
        for o in &rec.outcomes {
            let (_, card) = o.result.as_ref().unwrap();
            assert!(!card.power_defined);
            assert_eq!(card.power, 0.0);
            assert_eq!(card.fdp, if card.n_rejected > 0 { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn two_stage_reports_original_indices() {
    let config = SimConfig {
        variant: Variant::TwoStage,
        d: 20,
        reps: 6,
        ..small()
    };
    let res = run_experiment(&config).unwrap();
    let mut checked = 0;
    for rec in &res.records {
        let kept = rec.screened.as_ref().expect("two-stage records the screened set");
        assert!(kept.len() >= 2 && kept.windows(2).all(|w| w[0] < w[1]));
        assert!(kept.iter().all(|&j| j < config.d));
        let reachable = rec.truth.iter().filter(|j| kept.contains(j)).count() as f64;
        // a singular joint covariance can make CLIME infeasible; those
        // replications are excluded rather than scored
        for (decision, card) in rec.outcomes.iter().filter_map(|o| o.result.as_ref().ok()) {
            checked += 1;
            assert!(decision.rejected.iter().all(|j| kept.contains(j)));
            assert!(card.power <= reachable / rec.truth.len() as f64 + 1e-12);
        }
    }
    assert!(checked > 0);
}

#[test]
fn forced_screening_keeps_two_columns() {
    let config = SimConfig {
        variant: Variant::TwoStage,
        d: 20,
        reps: 2,
        screen_rho: Some(1e6),
        ..small()
    };
    let res = run_experiment(&config).unwrap();
    for rec in &res.records {
        let kept = rec.screened.as_ref().unwrap();
        assert_eq!(kept.len(), 2);
        for o in &rec.outcomes {
            let (_, card) = o.result.as_ref().unwrap();
            assert!(card.power <= 2.0 / 3.0 + 1e-12);
        }
    }
}

#[test]
fn data_split_runs_on_the_estimation_half() {
    let config = SimConfig {
        variant: Variant::DataSplit { c_tilde: 1.0 },
        n: 80,
        reps: 2,
        methods: vec![Procedure::Bh, Procedure::BonfBh],
        ..small()
    };
    let res = run_experiment(&config).unwrap();
    for s in &res.summaries {
        assert_eq!(s.reps_used, 2, "{:?}", s.exclusions);
    }
}

#[test]
fn failed_methods_are_excluded_and_listed() {
    let config = SimConfig { methods: vec![Procedure::Bh], alphas: vec![0.1], ..small() };
    let ok = |fdp: f64| MethodOutcome {
        method: Procedure::Bh,
        alpha: 0.1,
        result: Ok((
            DecisionResult { rejected: vec![], r_tilde: 0, procedure: Procedure::Bh, threshold: 0.0 },
            ScoreCard { fdp, power: 0.5, power_defined: true, n_rejected: 1, n_true_alt: 2 },
        )),
    };
    let rec = |rep, outcome| ReplicationRecord {
        rep,
        truth: vec![0, 1],
        screened: None,
        tests: None,
        w: None,
        sigma_hat: None,
        outcomes: vec![outcome],
        runtime_ms: 0.0,
    };
    let failed = MethodOutcome { method: Procedure::Bh, alpha: 0.1, result: Err("clime: infeasible".into()) };
    let records = vec![rec(0, ok(0.0)), rec(1, failed), rec(2, ok(1.0))];
    let s = &aggregate(&config, &records)[0];
    assert_eq!(s.reps_used, 2);
    assert_eq!(s.exclusions, vec![(1, "clime: infeasible".to_string())]);
    assert_eq!(s.mean_fdr, 0.5);
    assert!((s.se_fdr - 0.5).abs() < 1e-15);
    assert_eq!(s.mean_power, 0.5);
    assert_eq!(s.se_power, 0.0);
}

#[test]
fn emitted_files_have_expected_shape() {
    let config = small();
    let res = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&res, dir.path(), "{}").unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,alpha,mean_fdr,se_fdr,mean_power,se_power,reps_used");
    assert_eq!(lines.len(), 1 + res.summaries.len());
    let reps = std::fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + config.reps * res.summaries.len());
    for name in ["exclusions.csv", "timings.csv", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn dataset_round_trip() {
    let n = 12;
    let mut x = Matrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.3 * j as f64);
    let mut y = Vector::from_fn(n, |i, _| (i as f64).sin());
    for mut c in x.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    y.add_scalar_mut(-y.mean());
    let data = Dataset {
        x,
        y,
        columns: vec![0, 1, 2],
        names: Some(vec!["a".into(), "b".into(), "c".into()]),
        merged: vec![],
        dropped: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    let (xp, yp) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    write_dataset(&data, &xp, &yp).unwrap();
    let back = ingest_csv(&xp, &yp, Preprocessing::default()).unwrap();
    assert_eq!(back.names, data.names);
    assert_eq!(back.columns, data.columns);
    assert!((&back.x - &data.x).amax() <= 1e-15);
    assert!((&back.y - &data.y).amax() <= 1e-15);
}
