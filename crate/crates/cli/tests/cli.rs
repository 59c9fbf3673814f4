use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn streamflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamflow"))
        .args(args)
        .env_remove("STREAMFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"
horizon = 40
reps = 2

[workflow.generate]
structure = "cybershake"
size = "small"
seed = 3

[ga]
population_size = 20
generation_limit = 10

[events]
direction = "increase"
range = "medium"
"#;

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_sizes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = streamflow(&["generate", "montage", "small", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(doc["services"].as_array().unwrap().len(), 25);

    let o = streamflow(&["generate", "epigenomics", "medium"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["services"].as_array().unwrap().len(), 46);

    let o = streamflow(&["validate", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Montage_25"));
}

#[test]
fn generate_rejects_unknown_structure() {
    let o = streamflow(&["generate", "ligo", "small"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = streamflow(&["simulate", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let wf = a.join("CyberShake_30");
    for sched in ["adaptive", "ga-replan", "baseline"] {
        for f in ["series.csv", "events.csv", "summary.csv", "summary.json"] {
            assert!(wf.join(sched).join("rep_00").join(f).is_file(), "{sched}/{f}");
            assert!(wf.join(sched).join("mean").join(f).is_file(), "{sched}/mean/{f}");
        }
    }
    assert!(wf.join("lower-bound/mean/summary.csv").is_file());
    assert_eq!(read_tree(&a), read_tree(&b));

    let series = fs::read_to_string(wf.join("adaptive/rep_01/series.csv")).unwrap();
    let first = series.lines().next().unwrap();
    assert!(first.starts_with("# {"));
    let prov: serde_json::Value = serde_json::from_str(&first[2..]).unwrap();
    assert_eq!(prov["rep"], 1);
    assert_eq!(prov["scenario"]["horizon"], 40);
    assert!(prov["rep_seed"].is_u64());
    assert_eq!(series.lines().count(), 2 + 40);
}

#[test]
fn seed_override_changes_results_and_env_applies() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), SMALL);
    let run = |out: &str, extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_streamflow"));
        c.args(["simulate", s.to_str().unwrap(), "--scheduler", "adaptive", "--out"])
            .arg(dir.path().join(out))
            .args(extra)
            .env_remove("STREAMFLOW_SEED");
        if let Some(v) = env {
            c.env("STREAMFLOW_SEED", v);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(dir.path().join(out).join("CyberShake_30/adaptive/mean/summary.csv")).unwrap()
    };
    let by_flag = run("flag", &["--seed", "77"], None);
    let by_env = run("env", &[], Some("77"));
    let default = run("default", &[], None);
    assert_eq!(by_flag, by_env);
    assert_ne!(by_flag, default);
}

#[test]
fn paired_runs_compare_against_each_other() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), SMALL);
    let a = dir.path().join("adaptive");
    let b = dir.path().join("baseline");
    for (out, sched) in [(&a, "adaptive"), (&b, "baseline")] {
        let o = streamflow(&["simulate", s.to_str().unwrap(), "--scheduler", sched, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    // Both runs share the lower bound, so the traces were the same.
    let totals = |d: &Path| {
        let text = fs::read_to_string(d.join("CyberShake_30/lower-bound/mean/summary.csv")).unwrap();
        text.lines().last().unwrap().to_string()
    };
    assert_eq!(totals(&a), totals(&b));
    let o = streamflow(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let adaptive = rows.iter().find(|r| r[1] == "adaptive").unwrap();
    let lb_ratio: f64 = adaptive[5].parse().unwrap();
    assert!(lb_ratio >= 1.0, "{table}");
}

#[test]
fn identical_dirs_compare_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), SMALL);
    let a = dir.path().join("a");
    let o = streamflow(&["simulate", s.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let o = streamflow(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 1 + 2 * 4);
    for l in table.lines().skip(1) {
        assert_eq!(l.split(',').nth(4), Some("1.000000"), "{l}");
    }
}

#[test]
fn missing_catalog_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), &format!("catalog = \"nowhere.toml\"\n{SMALL}"));
    let o = streamflow(&["simulate", s.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("catalog not found"), "{}", stderr(&o));
}

#[test]
fn schema_errors_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), &format!("colour = \"red\"\n{SMALL}"));
    let o = streamflow(&["simulate", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = streamflow(&["simulate", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tiny_offers_are_unschedulable() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = r#"
format_version = 1

[boot]
seed = 1
range = [30, 100]

[network]
seed = 1

[network.ranges]
ingress_bandwidth = { min = 615.0, max = 926.0 }
ingress_latency = { min = 0.00064, max = 0.00086 }
egress_bandwidth = { min = 122.0, max = 218.0 }
egress_latency = { min = 0.021, max = 0.031 }
egress_transfer_cost = { min = 0.013, max = 0.019 }

[[clouds]]
id = "tiny"

[[clouds.offers]]
name = "nano"
mips = 100.0
price = 0.001
"#;
    fs::write(dir.path().join("tiny.toml"), catalog).unwrap();
    let o = streamflow(&["validate", dir.path().join("tiny.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = scenario(dir.path(), &format!("catalog = \"tiny.toml\"\n{SMALL}"));
    let o = streamflow(&["simulate", s.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("unschedulable"));
}

#[test]
fn direction_override_rejects_explicit_lists() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[workflow.generate]
structure = "montage"
size = "small"

[[events.list]]
at_second = 5
source = "ex_0"
direction = "increase"
range = "low"
delta_units = 1
"#;
    let s = scenario(dir.path(), body);
    let o = streamflow(&["simulate", s.to_str().unwrap(), "--direction", "decrease"]);
    assert_eq!(o.status.code(), Some(2));
    let o = streamflow(&["validate", s.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
