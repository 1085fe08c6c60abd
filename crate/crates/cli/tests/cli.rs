use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cookielab::commands::{cmd_simulate, resolve_config, Overrides};
use cookielab::output::{sha256_hex, RunManifest};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cookielab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = "[run]\nhorizon = [200, 400, 800]\nreplicas = 40\nmaster_seed = 7\n";

#[test]
fn validate_reports_constants() {
    let o = run(&["validate"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("K = 1"), "{out}");
    assert!(out.contains("lambda = 0.25"), "{out}");
    assert!(out.contains("(h, r) = (0.25, 0.5)"), "{out}");
}

#[test]
fn validate_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let symmetric = write(t.path(), "a.toml", "[model]\np = 0.5\n");
    let low = write(t.path(), "b.toml", "[model]\np = 0.4\n");
    let broken = write(t.path(), "c.toml", "[model\nd = 2\n");
    let unknown = write(t.path(), "d.toml", "[model]\nflavour = 1\n");
    assert_eq!(code(&run(&["validate", "--config", &symmetric])), 1);
    assert_eq!(code(&run(&["validate", "--config", &low])), 2);
    assert_eq!(code(&run(&["validate", "--config", &broken])), 2);
    assert_eq!(code(&run(&["validate", "--config", &unknown])), 2);
    let missing = t.path().join("absent.toml");
    assert_eq!(
        code(&run(&["validate", "--config", missing.to_str().unwrap()])),
        3
    );
}

#[test]
fn random_environment_reports_kappa() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(
        t.path(),
        "re.toml",
        "[model]\nkind = \"erwre\"\np_lo = 0.6\np_hi = 0.9\n",
    );
    let o = run(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("kappa = 0.0499999"), "{out}");
}

#[test]
fn print_defaults_parses_back() {
    let o = run(&["print-defaults"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = cookielab::config::RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.run.replicas, 200);
}

fn hashes(dir: &Path) -> Value {
    let m: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"].clone()
}

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "s.toml", SMALL);
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| t.path().join(d)).collect();
    for (d, threads) in dirs.iter().zip(["1", "1", "8"]) {
        let o = run(&[
            "simulate",
            "--config",
            &cfg,
            "--threads",
            threads,
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let h = hashes(&dirs[0]);
    assert_eq!(h, hashes(&dirs[1]));
    assert_eq!(h, hashes(&dirs[2]));
    for name in ["stats_h200.json", "stats_h400.csv", "blocks_h800.csv"] {
        let bytes = fs::read(dirs[0].join(name)).unwrap();
        assert_eq!(h[name], sha256_hex(&bytes));
    }
}

#[test]
fn manifest_config_reproduces_hashes() {
    let t = tempfile::tempdir().unwrap();
    let ov = Overrides {
        out: Some(t.path().join("first")),
        threads: Some(2),
        ..Default::default()
    };
    let cfg_path = write(t.path(), "m.toml", "[model]\nkind = \"erwre\"\np_lo = 0.6\np_hi = 0.8\n[run]\nhorizon = 300\nreplicas = 6\nmaster_seed = 3\n");
    let cfg = resolve_config(Some(Path::new(&cfg_path)), &ov).unwrap();
    let first = cmd_simulate(&cfg).unwrap();
    assert_eq!(
        first.manifest.environment_seeds.as_ref().map(Vec::len),
        Some(6)
    );

    let text = fs::read_to_string(t.path().join("first/manifest.json")).unwrap();
    let manifest: RunManifest = serde_json::from_str(&text).unwrap();
    let mut again = manifest.config.clone();
    again.output.dir = t.path().join("second");
    again.run.threads = 1;
    let second = cmd_simulate(&again).unwrap();
    assert_eq!(manifest.outputs, second.manifest.outputs);
}

#[test]
fn checkpoint_files_and_trajectories() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "s.toml", &format!("{SMALL}trajectories = 2\n"));
    let out = t.path().join("o");
    let o = run(&[
        "simulate",
        "--config",
        &cfg,
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    for h in [200, 400, 800] {
        assert!(out.join(format!("stats_h{h}.csv")).exists());
        assert!(!out.join(format!("stats_h{h}.json")).exists());
        assert!(out.join(format!("blocks_h{h}.csv")).exists());
    }
    let path = fs::read_to_string(out.join("trajectories/replica_1.csv")).unwrap();
    assert!(path.starts_with("step,x1,x2,proj,first_visit\n"));
    assert_eq!(path.lines().count(), 802);
    assert!(!out.join("trajectories/replica_2.csv").exists());
}

#[test]
fn analyze_empty_dir_is_missing_input() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--out", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("stats_h10000.json") && err.contains("blocks_h10000.csv"),
        "{err}"
    );
}

#[test]
fn analyze_emits_reports_and_plot_data() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "s.toml", SMALL);
    let out = t.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", o])), 0);
    let a = run(&["analyze", "--config", &cfg, "--out", o]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    for est in [
        "speed",
        "covariance",
        "direct_speed",
        "regen_tail",
        "local_time",
        "escape",
        "clt",
        "autocorrelation",
        "azuma",
        "advance",
        "site_local_time",
    ] {
        let p = out.join(format!("reports/{est}_h800.json"));
        assert!(p.exists(), "{}", p.display());
    }
    for f in [
        "reports/range_exponent.json",
        "reports/submartingale.json",
        "reports/tail_doubling.json",
        "plots/range_loglog.csv",
        "plots/survival_h800.csv",
        "plots/ks_h800.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let speed: Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/speed_h800.json")).unwrap())
            .unwrap();
    assert_eq!(speed["method"], "regeneration_ratio");
    assert!(speed["estimate"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn straight_walk_speed_is_e1() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "s.toml", "[model]\nkind = \"generalized\"\n[[model.table]]\nfirst_visit = true\nin_cookie_set = true\noutcomes = [{ dz = [1, 0], p = 1.0 }]\n[[model.table]]\nfirst_visit = false\nin_cookie_set = true\noutcomes = [{ dz = [1, 0], p = 0.5 }, { dz = [-1, 0], p = 0.5 }]\n[run]\nhorizon = [50, 100, 200]\nreplicas = 5\n[analysis]\nestimators = [\"speed\", \"direct_speed\"]\n");
    let out = t.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", o])), 0);
    assert_eq!(code(&run(&["analyze", "--config", &cfg, "--out", o])), 0);
    let speed: Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/speed_h200.json")).unwrap())
            .unwrap();
    assert_eq!(speed["estimate"], serde_json::json!([1.0, 0.0]));
    let direct: Value = serde_json::from_str(
        &fs::read_to_string(out.join("reports/direct_speed_h200.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(direct["estimate"], 1.0);
}

#[test]
fn quick_checks_write_a_summary() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&[
        "checks",
        "--quick",
        "--threads",
        "2",
        "--out",
        t.path().to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("hand-traced"), "{text}");
    let v: Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("checks.json")).unwrap()).unwrap();
    assert_eq!(v["results"][0]["id"], "1");
    assert_eq!(v["results"][0]["passed"], true);
}
