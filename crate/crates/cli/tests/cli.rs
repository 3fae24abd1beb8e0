use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ordmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordmatch"))
        .args(args)
        .env_remove("ORDMATCH_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let k = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader.records().map(|r| r.unwrap()[k].to_string()).collect()
}

#[test]
fn single_agent_has_distortion_one() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[6]], "distributions": ["iid-uniform"], "mechanisms": ["rs", "rsbs", "hql", "secretary-rs"], "trials": 2000, "complete": true}"#,
    );
    let out = dir.path().join("out.csv");
    let run = ordmatch(&["run", &config, "--output", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let distortions = column(&out, "distortion");
    assert_eq!(distortions.len(), 4);
    for d in distortions {
        assert_eq!(d, "1.00000000000");
    }
}

#[test]
fn malformed_json_exits_two_with_offset() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "bad.json", "{\"trials\": 10,\n \"instances\": [1, 2,]}");
    let run = ordmatch(&["run", &config]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("byte offset"), "{stderr}");
    assert!(stderr.contains("bad.json"), "{stderr}");
}

#[test]
fn unknown_field_and_missing_file_exit_two() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[1]], "distributions": ["iid-uniform"], "mechanisms": ["rs"], "trials": 10, "triels": 3}"#,
    );
    assert_eq!(ordmatch(&["run", &config]).status.code(), Some(2));
    assert_eq!(ordmatch(&["run", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn unit_demand_rs_stays_under_its_bound() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [{"generator": "uniform-quotas", "n": 10, "m": 10}],
            "distributions": ["iid-uniform", {"name": "single-agent", "agent": 3}],
            "mechanisms": "rs", "trials": 100000, "seed": 11}"#,
    );
    let out = dir.path().join("rs.csv");
    let run = ordmatch(&["run", &config, "-o", out.to_str().unwrap()]);
    assert!(run.status.success());
    for d in column(&out, "distortion") {
        let d: f64 = d.parse().unwrap();
        assert!(d <= 1.59, "{d}");
    }
}

#[test]
fn probs_reports_closed_forms() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[3, 2, 1]], "distributions": ["iid-uniform"],
            "mechanisms": ["rs", "rsbs", "hql", "serial-dictator"], "trials": 4000}"#,
    );
    let out = dir.path().join("p.csv");
    let run = ordmatch(&["probs", &config, "-o", out.to_str().unwrap()]);
    assert!(run.status.success());
    let rows = records(&out);
    // 6 (agent, rank) cells per mechanism
    assert_eq!(rows.len(), 24);
    let exact: Vec<&str> = rows.iter().map(|r| &r[4]).collect();
    // HQL gives every rank m / (2m - b_max) = 6/9
    assert!(exact[12..18].iter().all(|q| *q == "0.666666666667"), "{exact:?}");
    assert!(exact[18..].iter().all(|q| q.is_empty()));
    assert!(exact[..18].iter().all(|q| !q.is_empty()));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("# n=3 m=6")).count(), 4);
}

#[test]
fn curve_peaks_at_one_half() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("curve.csv");
    let run = ordmatch(&["curve", "--points", "1000", "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    assert_eq!(records(&out).len(), 1000);
    let text = fs::read_to_string(&out).unwrap();
    let last = text.lines().last().unwrap();
    assert_eq!(last, "# max x=0.500000000000 bound=1.07644994880");
    assert_eq!(ordmatch(&["curve", "--points", "1"]).status.code(), Some(2));
}

#[test]
fn optcheck_exit_codes() {
    let ok = ordmatch(&["optcheck", "--max-m", "7", "--cases", "200", "--seed", "5"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(ordmatch(&["optcheck", "--max-m", "9"]).status.code(), Some(2));
    assert_eq!(ordmatch(&["optcheck", "--cases", "0"]).status.code(), Some(0));
}

#[test]
fn ufaudit_passes_and_rejects_large_instances() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[2, 1, 1]], "distributions": ["iid-uniform", "lower-bound-bernoulli"], "trials": 6000}"#,
    );
    let out = dir.path().join("audit.csv");
    let run = ordmatch(&["ufaudit", &config, "-o", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(column(&out, "pass").iter().all(|p| p == "true"));

    let big = write(&dir, "big.json", r#"{"instances": [[13]], "distributions": ["iid-uniform"], "trials": 10}"#);
    assert_eq!(ordmatch(&["ufaudit", &big]).status.code(), Some(2));
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[3, 2, 1], [1, 1, 1, 1]], "distributions": ["iid-uniform"],
            "mechanisms": ["rs", "rsbs"], "trials": 5000, "seed": 99}"#,
    );
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|threads| {
            let run = Command::new(env!("CARGO_BIN_EXE_ordmatch"))
                .args(["run", &config])
                .env("ORDMATCH_THREADS", threads)
                .output()
                .unwrap();
            assert!(run.status.success());
            run.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(ordmatch(&["run", &config]).stdout, outputs[0]);
}

#[test]
fn emit_flags_need_an_output_path() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "c.json",
        r#"{"instances": [[2, 1]], "distributions": ["iid-uniform"], "mechanisms": ["rs"], "trials": 500}"#,
    );
    assert_eq!(ordmatch(&["run", &config, "--emit-curve"]).status.code(), Some(2));
    let out = dir.path().join("r.csv");
    let run = ordmatch(&["run", &config, "-o", out.to_str().unwrap(), "--emit-probs", "--emit-curve"]);
    assert!(run.status.success());
    assert!(dir.path().join("r.probs.csv").exists());
    assert!(dir.path().join("r.curve.csv").exists());
}
