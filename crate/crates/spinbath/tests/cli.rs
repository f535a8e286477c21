//! End-to-end tests of the `spinbath` binary: exit codes, output schemas
//! and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinbath"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "
[lattice]
n_sites = 3

[dynamics]
t_final = 0.4
n_samples = 3
n_traj = 16
";

#[test]
fn verify_passes_on_the_default_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify", "--quiet", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("identities.jsonl")).unwrap();
    let mut saw = std::collections::HashSet::new();
    for line in text.lines().skip(1) {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["pass"], serde_json::Value::Bool(true), "{line}");
        saw.insert(record["identity"].as_str().unwrap().to_string());
    }
    for required in [
        "lemma1",
        "theorem1_structure",
        "theta0_unitality",
        "predual_duality",
        "kms_ratio",
    ] {
        assert!(saw.contains(required), "missing record {required}");
    }
    // metadata carries hash, rng and tolerances
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_metadata.json")).unwrap())
            .unwrap();
    assert!(meta["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(meta["rng"], "chacha12-streams-v1");
    assert!(meta["tolerances"]["null_tol"].as_f64().is_some());
}

#[test]
fn verify_fails_with_exit_one_on_a_divergent_lamb_shift() {
    // a flat band touching mu = 0 has infrared-divergent Lamb integrals;
    // the convergence record fails and the command exits 1
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[lattice]\nn_sites = 3\n\n[bath]\nspectral = \"flat\"\n",
    );
    let out = bin()
        .args(["verify", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(dir.path().join("identities.jsonl")).unwrap();
    assert!(text.contains("\"identity\":\"lamb_shift_convergence\",\"n_sites\":3"));
}

#[test]
fn invalid_beta_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[bath]\nbeta = -1.0\n");
    let out = bin()
        .args(["verify", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bath.beta"));
}

#[test]
fn unknown_key_exits_two_with_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[bath]\nbetta = 1.0\n");
    let out = bin()
        .args(["rates", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("did you mean `beta`?"), "{stderr}");
}

#[test]
fn rates_csv_has_a_row_per_channel_and_zero_rates_on_null() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = bin()
        .args(["rates", "--classical", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("site"))
        .collect();
    assert_eq!(rows.len(), 12); // 3 sites x 4 neighbourhoods
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols[3] == "null" {
            assert_eq!(cols[4], "0");
            assert_eq!(cols[5], "0");
        }
    }
    assert!(dir.path().join("classical_rates.csv").exists());
}

#[test]
fn evolve_with_zero_horizon_returns_initial_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[lattice]\nn_sites = 3\n\n[dynamics]\nt_final = 0.0\nobservables = [\"magnetization\", \"energy\"]\n",
    );
    let out = bin()
        .args(["evolve", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("time"))
        .collect();
    assert_eq!(rows.len(), 2);
    // all-up initial state on the 3-ring: magnetization 1, energy -3
    assert_eq!(rows[0], "0,magnetization,1,0");
    assert_eq!(rows[1], "0,energy,-3,0");
}

#[test]
fn trajectories_reproduce_byte_for_byte_under_a_fixed_seed() {
    let run = |outdir: &Path, cfgdir: &Path| {
        let config = write_config(cfgdir, SMALL);
        let out = bin()
            .args(["trajectories", "--quiet", "--seed", "123", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(outdir)
            .output()
            .unwrap();
        assert!(out.status.success());
        (
            std::fs::read(outdir.join("series.csv")).unwrap(),
            std::fs::read(outdir.join("config_echo.toml")).unwrap(),
        )
    };
    let c1 = tempfile::tempdir().unwrap();
    let c2 = tempfile::tempdir().unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (s1, e1) = run(d1.path(), c1.path());
    let (s2, e2) = run(d2.path(), c2.path());
    assert_eq!(s1, s2);
    assert_eq!(e1, e2);
}

#[test]
fn kmc_runs_a_large_ring_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[kmc]\nn_sites = 20000\nt_final = 0.01\nn_samples = 5\ninitial = \"random:0.5\"\n",
    );
    let run = |outdir: &Path| {
        let out = bin()
            .args(["kmc", "--quiet", "--seed", "7", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(outdir)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(outdir.join("kmc.csv")).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert_eq!(run(d1.path()), run(d2.path()));
    let text = String::from_utf8(run(d1.path())).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("time"))
        .collect();
    assert_eq!(rows.len(), 5);
    // events actually fire on a hot random start
    let last: Vec<&str> = rows[4].split(',').collect();
    assert!(last[3].parse::<u64>().unwrap() > 0);
}

#[test]
fn steady_reports_the_reducible_sector_structure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = bin()
        .args(["steady", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("steady.json")).unwrap())
            .unwrap();
    assert_eq!(parsed["reducible"], serde_json::Value::Bool(true));
    assert!(!parsed["states"].as_array().unwrap().is_empty());
}
