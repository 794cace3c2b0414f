use std::process::Command;

fn loadcast(dir: &std::path::Path, args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_loadcast"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn loadcast")
        .status
        .code()
}

#[test]
fn errored_cell_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // 20 days cannot hold the 30-day training slice of case 5
    let spec = r#"{
        "dataset": {"synthetic": {"days": 20, "seed": 1}},
        "models": ["pm"],
        "cases": ["case1", "case5"],
        "horizons_hours": [1],
        "runs_per_model": 1,
        "max_origins": 12
    }"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    assert_eq!(loadcast(dir.path(), &["run", "--spec", "spec.json", "--out", "r"]), Some(2));
    let csv = std::fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("pm,case1,1,")));
    assert!(csv.contains("ERR"));
}

#[test]
fn fatal_error_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loadcast(dir.path(), &["run", "--spec", "missing.json", "--out", "r"]), Some(1));
    assert_eq!(loadcast(dir.path(), &["compare", "--report", "nowhere"]), Some(1));
}

#[test]
fn compare_and_plot_read_a_written_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "dataset": {"synthetic": {"days": 12, "seed": 3}},
        "models": ["pm", "lr"],
        "cases": ["case1"],
        "horizons_hours": [1, 4],
        "runs_per_model": 1,
        "max_origins": 24
    }"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    assert_eq!(loadcast(dir.path(), &["run", "--spec", "spec.json", "--out", "r"]), Some(0));
    assert_eq!(loadcast(dir.path(), &["compare", "--report", "r", "--reference", "lr"]), Some(0));
    assert_eq!(
        loadcast(dir.path(), &["plot", "--cell", "lr:case1:4h", "--report", "r", "--peers", "--out", "p.svg"]),
        Some(0)
    );
    assert!(std::fs::read_to_string(dir.path().join("p.svg")).unwrap().contains("<polyline"));
}
