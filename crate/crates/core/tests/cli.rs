use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn mslevy(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_mslevy")).args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    mslevy(&args)
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Relative path to contents, for every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn error_line(out: &Path) -> serde_json::Value {
    let text = fs::read_to_string(out.join("error.log")).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn validate_model_builtin_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"model":"example_2_7_linear","validate":{"probes":300}}"#);
    let out = tmp.path().join("out");
    assert_eq!(run("validate-model", &cfg, &out, &[]), 0);
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("assumptions.json")).unwrap()).unwrap();
    assert!(reports.as_array().unwrap().iter().all(|r| r["pass"] == true));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("status: ok"));
}

#[test]
fn malformed_json_writes_only_the_error_log() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"model": "example_2_7_linear", "#);
    let out = tmp.path().join("out");
    assert_eq!(run("strong-order", &cfg, &out, &[]), 2);
    assert_eq!(snapshot(&out).keys().collect::<Vec<_>>(), vec!["error.log"]);
    let e = error_line(&out);
    assert_eq!(e["exit"], 2);
    assert_eq!(e["kind"], "config");
}

#[test]
fn two_levels_are_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model":"example_2_7_linear","table":{"lo":[-2],"hi":[2],"nodes":[9]},"strong":{"epsilon":[0.1,0.05]}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run("strong-order", &cfg, &out, &[]), 2);
    assert!(error_line(&out)["reason"].as_str().unwrap().contains("need >= 3 levels"));
}

#[test]
fn schema_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "a.json", "{}");
    assert_eq!(run("strong-order", &cfg, &out, &[]), 2);
    let reason = error_line(&out)["reason"].as_str().unwrap().to_string();
    assert!(reason.contains("strong.epsilon") && reason.contains("table.nodes"), "{reason}");

    let out = tmp.path().join("out2");
    let cfg = write(tmp.path(), "b.json", r#"{"model":"example_2_7_linear","ergodicity":{"x":[0],"y1":[1],"y2":[-1],"tmax":2}}"#);
    assert_eq!(run("ergodicity", &cfg, &out, &[]), 2);
    assert!(error_line(&out)["reason"].as_str().unwrap().contains("tmax"));

    let out = tmp.path().join("out3");
    let cfg = write(tmp.path(), "c.json", r#"{"model":"example_9_9"}"#);
    assert_eq!(run("validate-model", &cfg, &out, &[]), 2);
}

#[test]
fn failed_check_exits_one_and_rejected_table_exits_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "e.json",
        r#"{"model":"example_2_7_linear","ergodicity":{"x":[0],"y1":[1],"y2":[-1],"n_pairs":20,
            "acceptance":{"min_rate":100.0,"min_r2":0.95}}}"#,
    );
    let out = tmp.path().join("e");
    assert_eq!(run("ergodicity", &cfg, &out, &[]), 1);
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("FAIL decay"));

    // five nodes cannot resolve the averaged drift
    let cfg = write(
        tmp.path(),
        "t.json",
        r#"{"model":"example_2_7_linear","table":{"lo":[-1],"hi":[1],"nodes":[5],
            "invariant":{"burn_in":2,"horizon":20}}}"#,
    );
    let out = tmp.path().join("t");
    assert_eq!(run("avg-table", &cfg, &out, &[]), 3);
    assert_eq!(error_line(&out)["kind"], "numerical");
}

#[test]
fn usage_errors() {
    assert_eq!(mslevy(&["--help"]), 0);
    assert_eq!(mslevy(&["strong-order"]), 2);
    assert_eq!(mslevy(&["no-such-command", "--config", "x.json"]), 2);
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(run("validate-model", &tmp.path().join("missing.json"), &out, &[]), 2);
}

fn assert_replays(cmd: &str, config: &str, extra: &[&str]) {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", config);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(cmd, &cfg, &a, extra), 0, "{cmd}");
    assert_eq!(run(cmd, &a.join("effective_config.json"), &b, &[]), 0, "{cmd} replay");
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{cmd}: {k} differs on replay");
    }
}

#[test]
fn replays_are_bit_identical() {
    assert_replays(
        "frozen-stats",
        r#"{"model":"example_2_7_linear","frozen":{"x":[0.5],"invariant":{"burn_in":2,"horizon":20,"n_chains":4}}}"#,
        &["--seed", "11"],
    );
    assert_replays(
        "ergodicity",
        r#"{"model":"example_2_7_linear","ergodicity":{"x":[0],"y1":[1],"y2":[-1],"n_pairs":20}}"#,
        &[],
    );
    assert_replays(
        "strong-order",
        r#"{"model":"example_2_7_linear","seed":3,
            "table":{"lo":[-3],"hi":[3],"nodes":[25],"validate":false,"invariant":{"burn_in":2,"horizon":20}},
            "strong":{"epsilon":[0.25,0.125,0.0625],"n_paths":40}}"#,
        &[],
    );
    assert_replays(
        "weak-order",
        r#"{"model":"example_2_8","seed":3,
            "table":{"lo":[-4],"hi":[8],"nodes":[25],"validate":false,"invariant":{"burn_in":2,"horizon":20}},
            "weak":{"epsilon":[0.25,0.125,0.0625],"test_function":"square_norm","n_paths":64}}"#,
        &[],
    );
    assert_replays(
        "poisson-check",
        r#"{"model":"example_2_7_linear","poisson":{"x":[0],"y":[[1.0]],"t_cut":4,"n_traj":50,
            "invariant":{"burn_in":2,"horizon":40,"n_chains":4}}}"#,
        &[],
    );
}

#[test]
fn seed_override_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model":"example_2_7_linear","seed":1,"ergodicity":{"x":[0],"y1":[1],"y2":[-1],"n_pairs":10}}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("ergodicity", &cfg, &a, &["--seed", "99"]), 0);
    assert_eq!(run("ergodicity", &cfg, &b, &[]), 0);
    let eff: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(eff["seed"], 99);
    assert_ne!(fs::read(a.join("decay_curve.csv")).unwrap(), fs::read(b.join("decay_curve.csv")).unwrap());
}

#[test]
fn cached_table_is_reused() {
    let tmp = TempDir::new().unwrap();
    let cache = tmp.path().join("cache");
    let text = format!(
        r#"{{"model":"example_2_7_linear","cache_dir":{:?},
            "table":{{"lo":[-2],"hi":[2],"nodes":[9],"validate":false,"invariant":{{"burn_in":2,"horizon":20}}}}}}"#,
        cache.to_str().unwrap()
    );
    let cfg = write(tmp.path(), "c.json", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("avg-table", &cfg, &a, &[]), 0);
    let entries = fs::read_dir(&cache).unwrap().count();
    assert_eq!(entries, 2);
    // poison the cached values; a reload must return them unchanged
    for e in fs::read_dir(&cache).unwrap() {
        let p = e.unwrap().path();
        if p.extension().unwrap() == "csv" {
            let csv = fs::read_to_string(&p).unwrap();
            let mut lines: Vec<String> = csv.lines().map(String::from).collect();
            let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
            cells[1] = format!("{:.16e}", 123.0);
            lines[1] = cells.join(",");
            fs::write(&p, lines.join("\n") + "\n").unwrap();
        }
    }
    assert_eq!(run("avg-table", &cfg, &b, &[]), 0);
    let table = fs::read_to_string(b.join("avg_table.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().contains("1.2300000000000000e2"));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), entries);
}

#[test]
fn custom_model_config_validates() {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/custom_model.json")).unwrap();
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", &text);
    assert_eq!(run("validate-model", &cfg, &tmp.path().join("o"), &[]), 0);
}

#[test]
fn shipped_configs_parse() {
    use mslevy::cli::{parse_config, Command as C};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for (file, cmd) in [
        ("validate.json", C::ValidateModel),
        ("frozen_stats.json", C::FrozenStats),
        ("avg_table.json", C::AvgTable),
        ("poisson_check.json", C::PoissonCheck),
        ("ergodicity.json", C::Ergodicity),
        ("strong_order.json", C::StrongOrder),
        ("weak_order.json", C::WeakOrder),
        ("fast_moments.json", C::FastMoments),
        ("custom_model.json", C::ValidateModel),
    ] {
        let text = fs::read_to_string(dir.join(file)).unwrap();
        parse_config(&text, cmd).unwrap_or_else(|e| panic!("{file}: {e}"));
    }
}
