use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn scatcalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatcalc")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn passing_run_writes_summary_and_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"ladder": 5}"#);
    let out = tmp.path().join("run");
    let o = scatcalc(&["scatter1d", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_pass"], true);
    assert_eq!(summary["parameters"]["ladder"], 5);
    for t in summary["tables"].as_array().unwrap() {
        let csv = std::fs::read_to_string(out.join(t.as_str().unwrap())).unwrap();
        assert!(csv.lines().count() > 1);
    }
    let ladder = std::fs::read_to_string(out.join("ladder_0_square_barrier.csv")).unwrap();
    // every float carries 17 significant digits
    let cell = ladder.lines().nth(1).unwrap().split(',').next().unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{cell}");
}

#[test]
fn output_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"trajectories": 8}"#);
    let mut dirs = Vec::new();
    for (k, format) in [(0, "csv"), (1, "csv"), (2, "json"), (3, "json")] {
        let d = tmp.path().join(format!("r{k}"));
        let o = scatcalc(&["flow", "--config", &cfg, "--out", d.to_str().unwrap(), "--format", format]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        dirs.push(d);
    }
    for pair in [(0, 1), (2, 3)] {
        let a = &dirs[pair.0];
        let b = &dirs[pair.1];
        let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
        }
    }
    let json = std::fs::read_to_string(dirs[2].join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v["tables"]["trajectories"]["rows"].as_array().unwrap().len() == 8);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"seed": 1, "trajectories": 3}"#);
    let read = |seed: Option<&str>, name: &str| {
        let d = tmp.path().join(name);
        let mut args = vec!["flow", "--config", &cfg, "--out", d.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(scatcalc(&args).status.code(), Some(0));
        std::fs::read_to_string(d.join("summary.json")).unwrap()
    };
    let from_config = read(None, "a");
    assert!(from_config.contains("\"seed\": 1,"));
    let overridden = read(Some("99"), "b");
    assert!(overridden.contains("\"seed\": 99,"));
    assert_ne!(from_config, overridden);
}

#[test]
fn config_errors_exit_two_with_suggestions() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let out = out.to_str().unwrap();
    let cases = [
        (r#"{"lamda": 1}"#, "did you mean `lambda`"),
        (r#"{"grid": {"points": 63}}"#, "grid.points"),
        ("{\"lambda\": 1,}", "not valid JSON"),
        (r#"{"experiment": "radon"}"#, "radon"),
    ];
    for (body, needle) in cases {
        let cfg = write(tmp.path(), "c.json", body);
        let exp = if body.contains("grid") { "var-order" } else { "helmholtz" };
        let o = scatcalc(&[exp, "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{body}: {}", stderr(&o));
    }
    let cfg = write(tmp.path(), "ok.json", "{}");
    let o = scatcalc(&["helmholz", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean `helmholtz`"));
    let o = scatcalc(&["radial", "--config", &cfg, "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(out).exists());
}

#[test]
fn io_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let o = scatcalc(&["radial", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = write(tmp.path(), "c.json", "{}");
    // a regular file where the output directory should go
    let blocker = write(tmp.path(), "blocker", "");
    let o = scatcalc(&["radial", "--config", &cfg, "--out", &format!("{blocker}/sub")]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn failed_criterion_exits_one() {
    let tmp = TempDir::new().unwrap();
    // an impossible tolerance on the outgoing-set distance
    let cfg = write(tmp.path(), "c.json", r#"{"trajectories": 2, "t_final": 1, "sink_tol": 1e-12}"#);
    let out = tmp.path().join("f");
    let o = scatcalc(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"all_pass\": false"));
    assert!(summary.contains("\"status\": \"fail\""));
}

#[test]
fn shipped_configs_spell_out_the_defaults() {
    use scatcalc::runner::{load_config, Experiment, ExperimentConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for e in Experiment::ALL {
        let cfg = load_config(&dir.join(format!("{e}.json")), e).unwrap_or_else(|err| panic!("{e}: {err}"));
        assert_eq!(cfg, ExperimentConfig::defaults(e), "{e}");
    }
}
