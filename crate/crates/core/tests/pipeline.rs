use std::fs;
use std::path::PathBuf;

use knh::graphkit::project_views;
use knh::ingest::{save_dense_csv, save_labels, synth_two_view, synth_views, SynthSpec};
use knh::pipeline::*;
use knh_oracles::mean_view_distance;

fn matrix_specs(m: usize) -> Vec<ViewSpec> {
    (0..m)
        .map(|i| ViewSpec {
            path: PathBuf::from(format!("view{i}.csv")),
            kind: ViewKind::Matrix,
            rank: None,
            entity_mode: None,
        })
        .collect()
}

fn synth_inputs(spec: &SynthSpec) -> Inputs {
    let (views, truth) = synth_views(spec).unwrap();
    Inputs {
        views: views.iter().map(|v| ViewData::Matrix(v.values().clone())).collect(),
        truth,
    }
}

#[test]
fn noiseless_synthetic_data_is_classified() {
    let spec = SynthSpec::two_view(200, 4, (30, 40), 0.0, 11);
    let inputs = synth_inputs(&spec);
    let cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 4, 10);
    let report = run_classify(&cfg, &inputs).unwrap();
    assert_eq!(report.runs.len(), 10);
    assert!(report.aggregate.f1.mean >= 0.95, "{:?}", report.aggregate);
}

#[test]
fn three_views_run_through_tcca() {
    let spec = SynthSpec {
        view_dims: vec![30, 40, 25],
        ..SynthSpec::two_view(150, 4, (30, 40), 0.5, 3)
    };
    let inputs = synth_inputs(&spec);
    let mut cfg = PipelineConfig::new(matrix_specs(3), "labels.csv".into(), 4, 10);
    cfg.runs = 3;
    let report = run_classify(&cfg, &inputs).unwrap();
    assert!(report.runs.iter().all(|r| r.projection.as_ref().is_some_and(|p| p.correlations.len() == 4)));
    assert!(report.aggregate.accuracy.mean > 0.6, "{:?}", report.aggregate);
}

#[test]
fn knn_cca_measures_projected_points() {
    let spec = SynthSpec::two_view(60, 4, (20, 25), 0.5, 2);
    let inputs = synth_inputs(&spec);
    let cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 5, 5);
    let (views, _) = decompose_views(&cfg, &inputs, None, 7).unwrap();
    let d = mode_distances(Mode::KnnCca, &views, 5, cfg.ridge, cfg.pair_mode, 7).unwrap();
    let proj = project_views(&views, 5, cfg.ridge, 7).unwrap();
    let rows: Vec<Vec<Vec<f64>>> = proj.projected.iter().map(|p| p.to_rows()).collect();
    for i in 0..60 {
        for j in 0..60 {
            assert!((d.distances.get(i, j) - mean_view_distance(&rows, i, j)).abs() < 1e-12);
        }
    }
    let raw: Vec<Vec<Vec<f64>>> = views.iter().map(|v| v.values().to_rows()).collect();
    let d = mode_distances(Mode::Knn, &views, 5, cfg.ridge, cfg.pair_mode, 7).unwrap();
    assert!(d.projection.is_none());
    assert!((d.distances.get(3, 17) - mean_view_distance(&raw, 3, 17)).abs() < 1e-12);
}

#[test]
fn repeated_runs_are_identical() {
    let spec = SynthSpec::two_view(120, 4, (30, 40), 2.0, 4);
    let inputs = synth_inputs(&spec);
    let mut cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 5, 8);
    cfg.runs = 4;
    let a = run_classify(&cfg, &inputs).unwrap().without_timings();
    let b = run_classify(&cfg, &inputs).unwrap().without_timings();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn sweep_cells_match_single_classifications() {
    let spec = SynthSpec::two_view(100, 4, (30, 40), 1.5, 6);
    let inputs = synth_inputs(&spec);
    let mut cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 5, 10);
    cfg.runs = 3;
    let rows = run_sweep(&cfg, &inputs, &[4, 6], &[5, 10], &Mode::ALL).unwrap();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        assert_eq!(row.status, "ok");
        let single = PipelineConfig {
            r: row.rank,
            k: row.k,
            mode: row.mode,
            ..cfg.clone()
        };
        let report = run_classify(&single, &inputs).unwrap();
        let expected: Vec<_> = report.runs.iter().map(|r| r.metrics).collect();
        assert_eq!(row.runs, expected, "{:?} R={} K={}", row.mode, row.rank, row.k);
    }
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with(SWEEP_CSV_HEADER));
}

#[test]
fn failing_cells_keep_their_row() {
    let spec = SynthSpec::two_view(40, 4, (6, 8), 0.5, 1);
    let inputs = synth_inputs(&spec);
    let mut cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 3, 5);
    cfg.runs = 2;
    let rows = run_sweep(&cfg, &inputs, &[3, 9], &[5], &[Mode::Knh]).unwrap();
    assert_eq!(rows[0].status, "ok");
    assert!(rows[1].summary.is_none());
    assert_ne!(rows[1].status, "ok");
    assert!(sweep_csv(&rows).lines().nth(2).unwrap().starts_with("knh,9,5,,,"));
}

#[test]
fn config_files_match_in_memory_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::two_view(80, 4, (20, 30), 1.0, 8);
    let (views, truth) = synth_two_view(&spec).unwrap();
    for (i, v) in views.iter().enumerate() {
        save_dense_csv(&dir.path().join(format!("view{i}.csv")), v.values()).unwrap();
    }
    save_labels(&dir.path().join("labels.csv"), &truth).unwrap();
    let json = r#"{"views": [{"path": "view0.csv", "type": "matrix"}, {"path": "view1.csv", "type": "matrix"}],
                   "labels": "labels.csv", "R": 4, "K": 6, "runs": 3, "seed": 5, "ridge": "auto"}"#;
    let path = dir.path().join("config.json");
    fs::write(&path, json).unwrap();
    let from_file = cmd_classify(&path).unwrap().without_timings();

    let mut cfg = PipelineConfig::new(matrix_specs(2), "labels.csv".into(), 4, 6);
    cfg.runs = 3;
    cfg.seed = 5;
    let inputs = Inputs {
        views: views.iter().map(|v| ViewData::Matrix(v.values().clone())).collect(),
        truth,
    };
    let in_memory = run_classify(&cfg, &inputs).unwrap().without_timings();
    assert_eq!(from_file.runs, in_memory.runs);

    fs::write(&path, json.replace("\"K\": 6", "\"K\": 6, \"k_typo\": 1")).unwrap();
    assert!(cmd_classify(&path).is_err());
}
