mod common;

use smio_core::config::{ExperimentConfig, StabilityMode};
use smio_core::experiment::{dump_model, run_abstract, run_experiment, run_stability};
use smio_core::model::LearnedInputModel;
use smio_core::stability::{StabilityReport, Verdict};

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn noiseless_identity_measurement_collapses_the_framer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config_with_output(common::NOISELESS_IDENTITY, dir.path());
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.exit_code(), 0);
    for seed in [1, 2] {
        let csv = std::fs::read_to_string(dir.path().join(format!("trace_seed{seed}.csv"))).unwrap();
        let wx = column(&csv, "width_x");
        let wd = column(&csv, "width_d");
        assert!(*wx.last().unwrap() < 1e-6 && *wd.last().unwrap() < 1e-6);
        assert!(column(&csv, "contained").iter().all(|c| *c == 1.0));
        let err = column(&csv, "err_x");
        assert!(err.last().unwrap().abs() < 1e-6);
    }
    assert!(dir.path().join("model_seed1.txt").exists());
    assert!(dir.path().join("stability.toml").exists());
    assert!(dir.path().join("trace_bound.toml").exists());
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = common::CONTRACTIVE_TOY.replace("seed_count = 20", "seeds = [3, 4]");
    run_experiment(&common::config_with_output(&text, a.path())).unwrap();
    run_experiment(&common::config_with_output(&text, b.path())).unwrap();
    for seed in [3, 4] {
        let name = format!("trace_seed{seed}.csv");
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("# noise=uniform"));
    }
    let x = std::fs::read_to_string(a.path().join("trace_seed3.csv")).unwrap();
    let y = std::fs::read_to_string(a.path().join("trace_seed4.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn widths_never_exceed_the_reported_bound() {
    let dir = tempfile::tempdir().unwrap();
    let text = common::CONTRACTIVE_TOY.replace("seed_count = 20", "seeds = [8]");
    run_experiment(&common::config_with_output(&text, dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trace_seed8.csv")).unwrap();
    for (w, b) in column(&csv, "width_x").iter().zip(column(&csv, "bound_x")) {
        assert!(*w <= b + 1e-9);
    }
}

#[test]
fn wrong_lipschitz_constant_is_reported_as_a_fault() {
    // Claiming h is constant lets the learned model exclude the truth.
    let text = common::FULLY_MEASURED_TOY.replace("lipschitz_h = [0.5386]", "lipschitz_h = [0.0]");
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&common::config_with_output(&text, dir.path())).unwrap();
    assert_eq!(summary.exit_code(), 1);
    let csv = std::fs::read_to_string(dir.path().join("trace_seed11.csv")).unwrap();
    let flagged = csv.contains("# fault:") || column(&csv, "contained").contains(&0.0);
    assert!(flagged);
}

#[test]
fn constant_toy_is_certified_with_zero_l_star() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config_with_output(common::CONSTANT_TOY, dir.path());
    let (report, path) = run_stability(&cfg).unwrap();
    assert_eq!(report.l_star, 0.0);
    assert_eq!(report.verdict, Verdict::Certified.as_str());
    let back = StabilityReport::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn two_state_example_is_not_certified_in_oracle_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_with_output(common::DEANGELIS, dir.path());
    cfg.run.horizon = 20;
    let (report, _) = run_stability(&cfg).unwrap();
    assert_eq!(report.verdict, "not certified");
    assert!(report.l_star > 1.0 && report.l_star_state < 1.0);
}

#[test]
fn learned_mode_stability_runs_the_observer_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::config_with_output(common::FULLY_MEASURED_TOY, dir.path());
    cfg.stability.mode = StabilityMode::Learned;
    let (report, _) = run_stability(&cfg).unwrap();
    assert_eq!(report.mode, "learned");
    assert!(report.l_star.is_finite());
}

#[test]
fn abstract_slice_nests_and_contains_the_oracle() {
    let text = format!(
        "{}\n[abstract]\ntarget = \"h\"\nlearn_steps = 200\npoints = 101\n",
        common::DEANGELIS
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let slice = run_abstract(&cfg).unwrap();
    let oracle = slice.oracle.as_ref().unwrap();
    for t in 0..slice.s.len() {
        for j in 0..2 {
            let (ll, lh) = slice.local_band[t][j];
            let (gl, gh) = slice.global_band[t][j];
            let (ql, qh) = slice.q[t][j];
            assert!(gl - 1e-8 <= ll && lh <= gh + 1e-8);
            assert!(ll - 1e-9 <= ql && qh <= lh + 1e-9);
            assert!(ll - 1e-9 <= oracle[t][j] && oracle[t][j] <= lh + 1e-9);
        }
    }
}

#[test]
fn zero_slope_slice_is_horizontal() {
    for target in ["f", "g", "h"] {
        let text = format!(
            "{}\n[abstract]\ntarget = \"{target}\"\nlearn_steps = 10\npoints = 11\nzero_slope = true\n",
            common::DEANGELIS
        );
        let slice = run_abstract(&ExperimentConfig::parse(&text).unwrap()).unwrap();
        assert!(slice.local.slope.iter().all(|v| *v == 0.0));
        let first = &slice.local_band[0];
        assert!(slice.local_band.iter().all(|b| b == first));
        for (t, q) in slice.q.iter().enumerate() {
            for j in 0..q.len() {
                assert!(first[j].0 - 1e-9 <= q[j].0 && q[j].1 <= first[j].1 + 1e-9, "{target} sample {t}");
            }
        }
    }
}

#[test]
fn abstract_box_override_and_axis_check() {
    let base = format!("{}\n[abstract]\ntarget = \"f\"\nlearn_steps = 5\n", common::DEANGELIS);
    let text = format!("{base}lo = [-1, -1, -0.5, -0.5, 0, -0.2, -0.2]\nhi = [1, 1, 0.5, 0.5, 0, 0.2, 0.2]\naxis = 1\n");
    let slice = run_abstract(&ExperimentConfig::parse(&text).unwrap()).unwrap();
    assert_eq!(slice.s.first().copied(), Some(-1.0));
    assert_eq!(slice.s.last().copied(), Some(1.0));
    let bad = format!("{base}axis = 7\n");
    assert!(run_abstract(&ExperimentConfig::parse(&bad).unwrap()).is_err());
}

#[test]
fn dumped_model_parses_back() {
    let mut cfg = common::config(common::DEANGELIS);
    cfg.run.horizon = 15;
    let table = dump_model(&cfg, 0).unwrap();
    let model = LearnedInputModel::from_table(&table).unwrap();
    assert_eq!(model.len(), 15);
    assert_eq!(model.to_table(), table);
}
