use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[system]
k = 3
k_prime = 2
n_tx = 6
n_seeds = 2

[sweep]
schemes = ["BEAMWAVE-KING", "RANDOM"]

[[sweep.axis]]
field = "n_tx"
values = [6]
"#;

fn ldm(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ldm"));
    cmd.args(args).env_remove("LDM_MASTER_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut lines = csv_text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn run_writes_results_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out, seed) in [(&out_a, None), (&out_b, Some("0")), (&out_c, Some("77"))] {
        let env: Vec<(&str, &str)> = seed.map(|s| ("LDM_MASTER_SEED", s)).into_iter().collect();
        let o = ldm(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timing"], &env);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read_to_string(out_a.join("results.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("results.csv")).unwrap();
    let c = std::fs::read_to_string(out_c.join("results.csv")).unwrap();
    assert!(a.starts_with("scenario_id,seed,scheme,metric,K,K_prime,N_tx,N_rx,L_rx,"));
    assert_eq!(a.lines().count(), 1 + 2 * 2);
    assert_eq!(a, b, "default master seed is 0");
    assert_ne!(column(&a, "channel_fingerprint"), column(&c, "channel_fingerprint"));
    let resolved = std::fs::read_to_string(out_c.join("config.toml")).unwrap();
    assert!(resolved.contains("master_seed = 77"));
    assert!(out_a.join("aggregate.csv").exists());
}

#[test]
fn invalid_config_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &CONFIG.replace("k_prime = 2", "k_prime = 5"));
    let o = ldm(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("k_prime"));
}

#[test]
fn missing_files_and_bad_seed_override_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldm(&["run", "--config", "/no/such/file.toml", "--out", "/tmp/x"], &[]);
    assert!(!o.status.success());
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let o = ldm(
        &["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()],
        &[("LDM_MASTER_SEED", "not-a-number")],
    );
    assert!(!o.status.success());
    let o = ldm(&["schedule", "--theta", "/no/such.csv", "--k-prime", "2"], &[]);
    assert!(!o.status.success());
}

#[test]
fn schedule_prints_selection_and_objective() {
    let dir = tempfile::tempdir().unwrap();
    let theta = write(
        dir.path(),
        "theta.csv",
        "0,5,1,9\n5,0,7,2\n1,7,0,4\n9,2,4,0\n",
    );
    for extra in [&[][..], &["--exhaustive"][..]] {
        let mut args = vec!["schedule", "--theta", theta.as_str(), "--k-prime", "2"];
        args.extend_from_slice(extra);
        let o = ldm(&args, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("selected: 0,2"), "{text}");
        assert!(text.contains("objective: 1.0"), "{text}");
    }
    let o = ldm(&["schedule", "--theta", &theta, "--k-prime", "9"], &[]);
    assert!(!o.status.success());
}

#[test]
fn channel_dump_feeds_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let dump = dir.path().join("ch.csv");
    let o = ldm(&["channels", "--config", &cfg, "--seed", "1", "--out", dump.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ldm(&["metrics", "--channels", dump.to_str().unwrap(), "--kind", "king"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row[j], 0.0);
        for (l, v) in row.iter().enumerate() {
            assert_eq!(*v, rows[l][j]);
        }
    }
    let o = ldm(&["metrics", "--channels", dump.to_str().unwrap(), "--kind", "nope"], &[]);
    assert!(!o.status.success());
}
