use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mra")).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, json: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn run(config: &Path, sub: &str, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    mra(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn bound_table_rows() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (r#"{"model":"cryo_em","L":4,"R":9}"#, ["225", "165", "60", "0.2667"]),
        (r#"{"model":"cyclic","N":8}"#, ["8", "8", "0", "0.0000"]),
        (r#"{"model":"rotated_images","L":2,"R":4}"#, ["20", "5", "15", "0.7500"]),
    ];
    for (i, (json, want)) in cases.iter().enumerate() {
        let c = write_config(&dir, &format!("b{i}.json"), json);
        let out = run(&c, "bound", &[]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(&row[1..], want, "{text}");
    }
    let c = write_config(&dir, "closed.json", r#"{"model":"cryo_em","L":4,"R":9}"#);
    assert!(stdout(&run(&c, "bound", &[])).contains("closed-form ratio 0.2667"));
}

#[test]
fn bound_writes_provenance_json() {
    let dir = TempDir::new().unwrap();
    let c = write_config(&dir, "b.json", r#"{"model":"cyclic","N":8,"seeds":[4]}"#);
    let out_path = dir.path().join("b.out.json");
    let out = run(&c, "bound", &["--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["seeds"], serde_json::json!([4]));
    assert_eq!(doc["K_max"], 0);
}

#[test]
fn certify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let pass = write_config(&dir, "p.json", r#"{"model":"cryo_em","L":2,"R":5,"K":10,"trials":10,"seeds":[1]}"#);
    let out = run(&pass, "certify", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["verdict"], "pass");

    let fail = write_config(&dir, "f.json", r#"{"model":"cyclic","N":8,"K":2,"trials":10,"seeds":[1]}"#);
    assert_eq!(run(&fail, "certify", &[]).status.code(), Some(2));

    let full = write_config(&dir, "n.json", r#"{"model":"rotated_images","L":1,"R":2,"K":6,"trials":5,"seeds":[1]}"#);
    assert_eq!(run(&full, "certify", &[]).status.code(), Some(2));
}

#[test]
fn config_and_usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let typo = write_config(&dir, "t.json", "{\"model\":\"cyclic\",\n\"N\":8,\n\"sedes\":[1]}");
    let out = run(&typo, "bound", &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sedes") && err.contains("line 3"), "{err}");

    let wrong_type = write_config(&dir, "w.json", r#"{"model":"cyclic","N":"eight"}"#);
    assert_eq!(run(&wrong_type, "bound", &[]).status.code(), Some(1));
    let unknown = write_config(&dir, "u.json", r#"{"model":"torus","N":8}"#);
    assert_eq!(run(&unknown, "bound", &[]).status.code(), Some(1));
    let no_seeds = write_config(&dir, "s.json", r#"{"model":"cyclic","N":8,"K":1}"#);
    assert_eq!(run(&no_seeds, "certify", &[]).status.code(), Some(1));
    assert_eq!(run(&dir.path().join("missing.json"), "bound", &[]).status.code(), Some(1));
    assert_eq!(mra(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mra(&["bound"]).status.code(), Some(1));
    assert_eq!(mra(&["--help"]).status.code(), Some(0));
}

#[test]
fn seed_flag_replaces_the_seed_list() {
    let dir = TempDir::new().unwrap();
    let c = write_config(&dir, "c.json", r#"{"model":"rotated_images","L":1,"R":3,"K":4,"trials":3,"seeds":[1,2]}"#);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&run(&c, "certify", &["--seed", "9"]))).unwrap();
    assert_eq!(doc["seeds"], serde_json::json!([9]));
    assert_eq!(doc["certificates"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_is_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        &dir,
        "s.json",
        r#"{"model":"cyclic","N":8,"K":2,"sigma":[0.5,1.0],"n":[200,800],"seeds":[3,1,2],"success_threshold":0.1}"#,
    );
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let path = dir.path().join(format!("s{threads}.csv"));
        let out = run(&c, "sweep", &["--threads", threads, "--no-timing", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config_hash: "));
    assert_eq!(lines[1], "# seeds: 3 1 2");
    assert_eq!(lines[2], "model,sigma,n,seed,gram_error,recovery_error,success,wall_time_ms");
    assert_eq!(lines.len(), 3 + 2 * 2 * 3);
    // Rows sorted by (sigma, n, seed).
    let keys: Vec<(f64, usize, u64)> = lines[3..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert!(keys.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && (w[0].1, w[0].2) < (w[1].1, w[1].2))));
}

#[test]
fn noiseless_cyclic_sweep_has_exact_grams() {
    let dir = TempDir::new().unwrap();
    let c = write_config(&dir, "z.json", r#"{"model":"cyclic","N":8,"K":2,"sigma":[0.0],"n":[1,5],"seeds":[1,2]}"#);
    let out = run(&c, "sweep", &["--no-timing"]);
    assert_eq!(out.status.code(), Some(0));
    for line in stdout(&out).lines().skip(3) {
        let err: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(err < 1e-10, "{line}");
    }
}

#[test]
fn simulate_writes_batch_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let c = write_config(&dir, "m.json", r#"{"model":"cryo_em","L":1,"R":2,"K":3,"sigma":[0.5],"n":[50],"seeds":[7]}"#);
    let batch = dir.path().join("obs.bin");
    let out = run(&c, "simulate", &["--out", batch.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let read = mra_core::moments::ObservationBatch::read_from(std::fs::File::open(&batch).unwrap()).unwrap();
    assert_eq!(read.len(), 50);
    assert_eq!(read.dim(), 2 * 4);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("obs.bin.json")).unwrap()).unwrap();
    assert_eq!(side["observations"], 50);
    assert_eq!(side["seeds"], serde_json::json!([7]));
    // Same config, same bytes.
    let again = dir.path().join("obs2.bin");
    run(&c, "simulate", &["--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&batch).unwrap(), std::fs::read(&again).unwrap());
    let two_seeds = write_config(&dir, "m2.json", r#"{"model":"cyclic","N":4,"sigma":[0.5],"n":[5],"seeds":[1,2]}"#);
    assert_eq!(run(&two_seeds, "simulate", &["--out", again.to_str().unwrap()]).status.code(), Some(1));
}

fn recover_records(out: &Output) -> Vec<serde_json::Value> {
    let doc: serde_json::Value = serde_json::from_str(&stdout(out)).unwrap();
    doc["records"].as_array().unwrap().clone()
}

#[test]
fn recover_from_exact_grams() {
    let dir = TempDir::new().unwrap();
    let c = write_config(&dir, "r.json", r#"{"model":"rotated_images","L":2,"R":4,"K":12,"seeds":[1,2]}"#);
    let trace = dir.path().join("trace.csv");
    let out = run(&c, "recover", &["--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for r in recover_records(&out) {
        assert_eq!(r["success"], true);
        assert!(r["recovery_error"].as_f64().unwrap() < 1e-6);
    }
    let t = std::fs::read_to_string(trace).unwrap();
    assert!(t.starts_with("seed,iteration,phase,residual,violation\n"));
    assert!(t.lines().count() > 2);
}

#[test]
fn recover_from_many_noisy_samples() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        &dir,
        "e.json",
        r#"{"model":"rotated_images","L":2,"R":4,"K":12,"grams":"empirical","sigma":[1.0],"n":[1000000],"seeds":[1]}"#,
    );
    let out = run(&c, "recover", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &recover_records(&out)[0];
    assert!(r["recovery_error"].as_f64().unwrap() < 1e-2, "{r}");
}

#[test]
fn recover_fails_when_noise_dominates() {
    let dir = TempDir::new().unwrap();
    let c = write_config(
        &dir,
        "f.json",
        r#"{"model":"rotated_images","L":2,"R":4,"K":12,"grams":"empirical","sigma":[4.0],"n":[100],"seeds":[1]}"#,
    );
    let out = run(&c, "recover", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(recover_records(&out)[0]["success"], false);
}
