use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

/// Final RLNE of `recon --model sense` on the bundled dataset, 100
/// iterations, recorded at the first validated build.
const GOLDEN_SENSE_RLNE: f64 = 0.177870322271432735;

fn pfista(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfista"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_trace_row(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().last().unwrap().split(',').map(str::to_string).collect()
}

fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sense_recon_matches_golden() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("r");
    let o = pfista(&["recon", "--model", "sense", "--step-rule", "recommended", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = last_trace_row(&out.join("trace.csv"));
    assert_eq!(row[0], "100");
    let rlne: f64 = row[2].parse().unwrap();
    assert!(rlne <= GOLDEN_SENSE_RLNE + 1e-6, "rlne {rlne}");

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["result"]["stop_reason"], "max-iters");
    assert_eq!(meta["request"]["model"], "sense");
    assert!(meta["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert!(out.join("recon.json").exists() && out.join("recon.bin").exists());
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempdir().unwrap();
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = pfista(&["recon", "--model", "spirit", "--iters", "8", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        traces.push(fs::read_to_string(out.join("trace.csv")).unwrap());
        let bin = fs::read(out.join("recon.bin")).unwrap();
        traces.push(format!("{bin:?}"));
    }
    assert_eq!(strip_wall(&traces[0]), strip_wall(&traces[2]));
    assert_eq!(traces[1], traces[3]);
}

#[test]
fn supercritical_step_exits_two_with_partial_trace() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("div");
    let o = pfista(&["recon", "--gamma", "5", "--model", "sense", "--iters", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows = text.lines().count() - 1;
    assert!(rows >= 2 && rows < 201, "{rows} rows");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert!(meta["result"]["diverged"].is_string());
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("no_such_kspace");
    let o = pfista(&[
        "recon",
        "--kspace",
        missing.to_str().unwrap(),
        "--mask",
        "m",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_kspace"), "{}", stderr(&o));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let o = pfista(&["recon", "--model", "grappa", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grappa"));
}

#[test]
fn file_round_trip_through_phantom_mask_and_bound() {
    let dir = tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let o = pfista(&["phantom", "--rows", "8", "--cols", "8", "--coils", "2", "--seed", "3", "--out", &d("ph")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pfista(&["mask", "--rows", "8", "--cols", "8", "--rate", "1.0", "--acs-lines", "8", "--out", &d("mk")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pfista(&[
        "bound",
        "--kspace",
        &d("ph/kspace"),
        "--mask",
        &d("mk/mask"),
        "--kernel-size",
        "3",
        "--verify-dense",
        "--out",
        &d("b"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b/bound.json")).unwrap()).unwrap();
    assert!(report["slack"].as_f64().unwrap() >= 0.0);
    assert!(report["c_safe"].as_f64().unwrap() >= 1.0);
    assert_eq!(report["z"], 1);
    assert_eq!(report["per_offset_norms"].as_array().unwrap().len(), 2);

    let o = pfista(&["bound", "--kspace", &d("ph/truth"), "--mask", &d("mk/mask")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_coil_zero_kernel_bound_is_one() {
    let dir = tempdir().unwrap();
    let kernels = dir.path().join("kernels");
    // a 1x1x3x3 all-zero kernel set
    fs::write(
        kernels.with_extension("json"),
        r#"{"dims":[1,1,3,3],"dtype":"c128","order":"row-major","role":"spirit-kernels"}"#,
    )
    .unwrap();
    fs::write(kernels.with_extension("bin"), vec![0u8; 9 * 16]).unwrap();
    let o = pfista(&[
        "bound",
        "--coils",
        "1",
        "--rows",
        "16",
        "--cols",
        "16",
        "--acs-lines",
        "4",
        "--kernels",
        kernels.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["c_paper"].as_f64(), Some(1.0));
    assert_eq!(report["c_safe"].as_f64(), Some(2.0));
}

#[test]
fn sweep_writes_summary_and_per_run_dirs() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = pfista(&[
        "sweep",
        "--gammas",
        "0.1,0.5,1.0",
        "--iters",
        "60",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("gamma_mult,gamma,final_objective,final_rlne,iters_to_1.01x_final"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let iters: Vec<usize> = rows.iter().map(|r| r[4].parse().unwrap_or(usize::MAX)).collect();
    assert!(iters.windows(2).all(|w| w[1] <= w[0]), "{iters:?}");
    let dirs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 3);
}

#[test]
fn single_multiplier_sweep_equals_recon() {
    let dir = tempdir().unwrap();
    let sw = dir.path().join("sw");
    let rc = dir.path().join("rc");
    let o = pfista(&["sweep", "--gammas", "1.0", "--iters", "20", "--out", sw.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pfista(&["recon", "--iters", "20", "--out", rc.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read_to_string(sw.join("run_00_x1/trace.csv")).unwrap();
    let b = fs::read_to_string(rc.join("trace.csv")).unwrap();
    assert_eq!(strip_wall(&a), strip_wall(&b));
}

#[test]
fn steprule_comparison_reports_all_rules() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("cs");
    let o = pfista(&["compare-steprules", "--iters", "60", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("steprules.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "recommended");
    assert_eq!(rows[0][2], "0");
    assert!(rows.iter().all(|r| r[6] == "true"));
    let total = |r: &Vec<&str>| r[4].parse::<u64>().unwrap();
    assert!(total(&rows[2]) > total(&rows[0]));
}

#[test]
fn calibrated_kernels_feed_recon() {
    let dir = tempdir().unwrap();
    let cal = dir.path().join("cal");
    let o = pfista(&["calibrate", "--out", cal.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let kern = cal.join("kernels");
    let o = pfista(&["recon", "--model", "spirit", "--iters", "5", "--kernels", kern.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pfista(&["recon", "--model", "spirit", "--iters", "5", "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        strip_wall(&fs::read_to_string(a.join("trace.csv")).unwrap()),
        strip_wall(&fs::read_to_string(b.join("trace.csv")).unwrap())
    );
}
