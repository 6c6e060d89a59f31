use std::path::Path;
use std::process::Command;

use tdspectra::{CorrelationGrid, ExcitationRecord, SpectrumTrace};
use tdspectra_cli::{parse_config_str, run_scenario, Route, RouteOutcome, Scenario};

fn small_bank(dir: &Path) -> String {
    format!(
        r#"
scenario = "analyzer_bank"
output_dir = "{}"
base_seed = 42
readout_times = [5.0, 10.0]

[omega]
min = 3.0
max = 5.0
count = 3

[analyzer]
n_traj = 6
p = 0.1
record_interval = 1.0
"#,
        dir.display()
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_gives_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut cfg = parse_config_str(&small_bank(&a)).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    one.install(|| run_scenario(&cfg)).unwrap();
    cfg.output_dir = b.clone();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    three.install(|| run_scenario(&cfg)).unwrap();
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na == "manifest.txt" {
            // Only the output directory line may differ.
            let strip = |x: &[u8]| {
                String::from_utf8_lossy(x).lines().filter(|l| !l.starts_with("output_dir")).collect::<Vec<_>>().join("\n")
            };
            assert_eq!(strip(ba), strip(bb));
        } else {
            assert_eq!(ba, bb, "{na} differs");
        }
    }

    cfg.base_seed = 43;
    cfg.output_dir = tmp.path().join("c");
    run_scenario(&cfg).unwrap();
    let w0 = |d: &Path| std::fs::read(d.join("excitation_w1.tsv")).unwrap();
    assert_ne!(w0(&a), w0(&tmp.path().join("c")));
}

#[test]
fn emitted_tables_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(&small_bank(tmp.path())).unwrap();
    let report = run_scenario(&cfg).unwrap();
    for t in report.traces(Route::Analyzer).unwrap() {
        let path = tmp.path().join(format!("spectrum_analyzer_t{}.tsv", t.trace.readout_time()));
        assert_eq!(SpectrumTrace::read_tsv(&path).unwrap(), t.trace);
    }
    let rec = ExcitationRecord::read_tsv(tmp.path().join("excitation_w0.tsv")).unwrap();
    assert_eq!(rec.times.len(), 11);
    assert!(rec.p_excited.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(ExcitationRecord::from_tsv(&rec.to_tsv()).unwrap(), rec);

    let physical = format!(
        "scenario = \"physical_scan\"\noutput_dir = \"{}\"\nreadout_times = [2.0, 4.0]\n[physical]\ngrid_n = 32\n",
        tmp.path().join("p").display()
    );
    let report = run_scenario(&parse_config_str(&physical).unwrap()).unwrap();
    let grid = CorrelationGrid::read_tsv(tmp.path().join("p/grid.tsv")).unwrap();
    assert_eq!(grid.n(), 32);
    for t in report.traces(Route::Physical).unwrap() {
        let path = tmp.path().join("p").join(format!("spectrum_physical_t{}.tsv", t.trace.readout_time()));
        assert_eq!(SpectrumTrace::read_tsv(&path).unwrap(), t.trace);
    }
}

#[test]
fn failed_route_is_listed_not_dropped() {
    let tmp = tempfile::tempdir().unwrap();
    // t = 1 falls between grid nodes (spacing 0.75), so the physical route fails.
    let text = format!(
        r#"
output_dir = "{}"
readout_times = [1.0, 3.0]
[source]
rabi = [0.2, 0.2]
[omega]
count = 16
[physical]
grid_n = 4
[analyzer]
method = "master_equation"
"#,
        tmp.path().display()
    );
    let cfg = parse_config_str(&text).unwrap();
    assert_eq!(cfg.scenario, Scenario::CompareAll);
    let report = run_scenario(&cfg).unwrap();
    assert!(report.incomplete());
    assert_eq!(report.routes.len(), 3);
    assert!(matches!(report.routes[1], (Route::Physical, RouteOutcome::Missing(_))));
    let manifest = std::fs::read_to_string(tmp.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("# status: incomplete"));
    assert!(manifest.contains("physical\tmissing"));
    for a in &report.alignments {
        assert!(!a.agrees());
        assert!(a.rows.iter().all(|r| r[1].is_none()));
    }
}

#[test]
fn single_route_failure_is_an_error_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "scenario = \"physical_scan\"\noutput_dir = \"{}\"\nreadout_times = [1.0, 3.0]\n[physical]\ngrid_n = 4\n",
        tmp.path().display()
    );
    let err = run_scenario(&parse_config_str(&text).unwrap()).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("stage physical"), "{msg}");
    assert!(msg.contains("incomplete"), "{msg}");
    let manifest = std::fs::read_to_string(tmp.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("# status: incomplete"));
}

#[test]
fn binary_runs_stationary_weak_drive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("weak.toml");
    std::fs::write(&cfg, "[source]\nrabi = [0.2, 0.2]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tdspectra"))
        .args(["stationary", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .args(["--omega-min", "0", "--omega-max", "12", "--omega-count", "241", "--workers", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("peaks: 2 @ ω≈4.000, 8.000"), "{stdout}");
    let trace = SpectrumTrace::read_tsv(tmp.path().join("o/spectrum_wk_tinf.tsv")).unwrap();
    assert_eq!(trace.len(), 241);
}

#[test]
fn binary_rejects_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[analyzer]\np = 1.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tdspectra"))
        .args(["analyzer", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("analyzer.p"));
}
