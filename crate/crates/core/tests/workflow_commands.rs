use std::sync::OnceLock;

use autopv::cash::{run_cash, validation_mse, CashConfig, Dataset};
use autopv::ensemble::{read_weight_log, AdaptationKind};
use autopv::evaluation::{EvaluationReport, Method};
use autopv::pipeline::{TrainedPlantModel, TrainingRows};
use autopv::regressors::{fit, EstimatorSpec};
use autopv::synth::FleetSpec;
use autopv::workflow::{
    cmd_evaluate, cmd_generate, cmd_pretrain, cmd_report, cmd_simulate, load_fleet, RunConfig,
};
use autopv::{Error, Execution};
use chrono::{TimeZone, Utc};
use ndarray::Axis;
use tempfile::TempDir;

/// 120-day fleet, 60 days of test data, two-week cycles.
fn small_config(root: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.data_dir = root.join("data");
    cfg.paths.model_dir = root.join("models");
    cfg.paths.report_dir = root.join("reports");
    cfg.fleet.days = 120;
    cfg.run.test_start = Utc.with_ymd_and_hms(2018, 3, 2, 0, 0, 0).unwrap();
    cfg.run.cycle_days = 14;
    cfg.run.window_samples = 14 * 96;
    cfg.run.max_trials = 5;
    cfg.run.max_train_rows = Some(1200);
    cfg
}

/// Generated and pre-trained once for every test in this file.
fn prepared() -> &'static (TempDir, RunConfig) {
    static P: OnceLock<(TempDir, RunConfig)> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        cmd_generate(&cfg).unwrap();
        cmd_pretrain(&cfg).unwrap();
        (dir, cfg)
    })
}

#[test]
fn pretrain_writes_loadable_bundles_and_trial_logs() {
    let (_, cfg) = prepared();
    let (manifest, fleet) = load_fleet(&cfg.paths.data_dir).unwrap();
    assert_eq!(manifest.plants.len(), 11);
    for rec in &fleet {
        let bundle = cfg.paths.model_dir.join(format!("{}.model.json", rec.id));
        let model = TrainedPlantModel::load(&bundle).unwrap();
        assert!(model.training_window.to <= cfg.run.test_start);
        let trials = autopv::cash::SearchState::read_trial_log(
            &cfg.paths.model_dir.join(format!("{}.trials.jsonl", rec.id)),
        )
        .unwrap();
        assert!(!trials.is_empty() && trials.len() <= cfg.run.max_trials);
        let a = model.predict_scaled(&rec.weather).unwrap();
        let b = TrainedPlantModel::load(&bundle).unwrap().predict_scaled(&rec.weather).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn simulate_logs_one_entry_per_cycle_and_starts_from_equal_weights() {
    let (_, cfg) = prepared();
    let out = cmd_simulate(cfg, "pv03").unwrap();
    let test_days = 60;
    assert_eq!(out.entries.len(), test_days / cfg.run.cycle_days);
    assert_eq!(read_weight_log(&out.weight_log).unwrap(), out.entries);
    assert!(out.entries.iter().all(|e| e.weights.len() == 10));
    assert!(out.entries.iter().skip(1).all(|e| e.outcome == AdaptationKind::Updated));

    // first cycle uses 1/N weights
    let (_, fleet) = load_fleet(&cfg.paths.data_dir).unwrap();
    let rec = fleet.iter().find(|r| r.id == "pv03").unwrap();
    let test = rec.slice_time(cfg.run.test_start, rec.power.end()).unwrap();
    let first_day = test.weather.slice(0, 96).unwrap();
    let pool: Vec<TrainedPlantModel> = fleet
        .iter()
        .filter(|r| r.id != "pv03")
        .map(|r| TrainedPlantModel::load(&cfg.paths.model_dir.join(format!("{}.model.json", r.id))).unwrap())
        .collect();
    let mut expected = vec![0.0; 96];
    for m in &pool {
        for (e, v) in expected.iter_mut().zip(m.predict_scaled(&first_day).unwrap().values()) {
            *e += v / 10.0;
        }
    }
    let mut rows = csv::Reader::from_path(&out.forecast).unwrap();
    for (row, e) in rows.records().take(96).zip(&expected) {
        let got: f64 = row.unwrap()[2].parse().unwrap();
        assert!((got - e * rec.p_n).abs() <= 1e-9 * rec.p_n, "{got} vs {}", e * rec.p_n);
    }

    // rerunning replaces rather than appends
    let again = cmd_simulate(cfg, "pv03").unwrap();
    assert_eq!(read_weight_log(&again.weight_log).unwrap().len(), out.entries.len());
}

#[test]
fn evaluate_and_report_agree() {
    let (_, cfg) = prepared();
    let report = cmd_evaluate(cfg).unwrap();
    assert_eq!(report.plants.len(), 11);
    assert_eq!(report.metadata.fleet_seed, Some(cfg.fleet.seed));
    for p in &report.plants {
        for m in Method::ALL {
            let v = p.scores[&m];
            assert!(v.is_finite() && v >= 0.0, "{} {}: {v}", p.plant_id, m.label());
        }
    }
    let stored =
        EvaluationReport::from_json(&std::fs::read_to_string(cfg.paths.report_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(stored, report);
    let text = cmd_report(cfg).unwrap();
    assert!(text.starts_with(&report.to_table()));
    for f in ["report.txt", "daily_curves.csv", "consistency.json", "weights_pv01.csv"] {
        assert!(cfg.paths.report_dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn report_without_evaluation_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(matches!(cmd_report(&cfg), Err(Error::InvalidConfig(_))));
    assert!(cmd_pretrain(&cfg).is_err());
}

#[test]
fn search_beats_a_fixed_ridge_baseline() {
    let fleet = FleetSpec::default_fleet(5).with_days(90).generate(Execution::Parallel).unwrap();
    let rows = TrainingRows::from_record(&fleet[2]).unwrap();
    let cut = rows.len() * 4 / 5;
    let train = Dataset { x: rows.x.slice_axis(Axis(0), (..cut).into()), y: &rows.y[..cut] };
    let val = Dataset { x: rows.x.slice_axis(Axis(0), (cut..).into()), y: &rows.y[cut..] };
    let cfg = CashConfig { max_trials: 20, ..CashConfig::default() };
    let (_, state) = run_cash(&train, &val, 9, &cfg).unwrap();
    let best = state.best_trial().unwrap().validation_mse.unwrap();
    let baseline = validation_mse(&fit(&EstimatorSpec::ridge(1.0), train.x, train.y).unwrap(), &val).unwrap();
    assert!(best <= baseline, "search {best} vs ridge {baseline}");
}
