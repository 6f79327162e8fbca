use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use ropescale::cli::{run, EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_in_process(args: &[&str], env_seed: Option<&str>) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("ropescale").chain(args.iter().copied()),
        env_seed.map(str::to_string),
        &mut out,
        &mut err,
    );
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn binary(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ropescale"));
    cmd.args(args).env_remove("ROPESCALE_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn schema(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, text: &str) {
    let instance: Value = serde_json::from_str(text).unwrap();
    let validator = jsonschema::validator_for(&schema(schema_name)).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&instance)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

#[test]
fn every_command_json_matches_its_schema() {
    let cases: [(&str, &[&str]); 9] = [
        ("predict", &["predict"]),
        (
            "predict",
            &["predict", "--base", "80000", "--tune-len", "16384"],
        ),
        ("angles", &["angles", "--base", "500"]),
        ("coverage", &["coverage", "--context-len", "8192"]),
        ("coverage", &["coverage", "--base", "500"]),
        ("trace", &["trace", "--max-len", "2048", "--samples", "2"]),
        (
            "trace",
            &[
                "trace",
                "--variant",
                "xpos+log-scaled",
                "--max-len",
                "1024",
                "--seed",
                "0",
            ],
        ),
        (
            "compare",
            &[
                "compare",
                "--tune-len",
                "16384",
                "--variants",
                "base:500",
                "base:1e6",
                "ntk-dynamic",
            ],
        ),
        ("compare", &["compare"]),
    ];
    for (name, args) in cases {
        let r = run_in_process(args, None);
        assert_eq!(r.code, EXIT_OK, "{args:?}: {}", r.stderr);
        assert_valid(name, &r.stdout);
    }
}

#[test]
fn run_config_examples_match_schemas() {
    let variants = schema("variant");
    let config = schema("config");
    let v = jsonschema::validator_for(&variants).unwrap();
    for spec in ropescale::list_variants() {
        assert!(
            v.is_valid(&serde_json::to_value(&spec.spec).unwrap()),
            "{}",
            spec.name
        );
    }
    let c = jsonschema::validator_for(&config).unwrap();
    let cfg = ropescale::RopeConfig::default()
        .with_tune_len(16384)
        .unwrap();
    assert!(c.is_valid(&serde_json::to_value(cfg).unwrap()));
}

#[test]
fn binary_separates_data_and_diagnostics() {
    let ok = binary(&["predict", "--format", "table"], &[]);
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(ok.stderr.is_empty());
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.starts_with("critical_dim ") && l.ends_with(" 92")),
        "{text}"
    );

    let bad = binary(&["predict", "--d", "127"], &[]);
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--d"));
}

#[test]
fn exit_codes() {
    let cases: [(&[&str], i32, &str); 7] = [
        (&["predict", "--d", "127"], EXIT_USAGE, "--d"),
        (&["predict", "--base", "0.5"], EXIT_USAGE, "--base"),
        (&["predict", "--bogus"], EXIT_USAGE, "--bogus"),
        (&["trace", "--variant", "warp:3"], EXIT_USAGE, "--variant"),
        (&["compare", "--lengths", "12Q"], EXIT_USAGE, "--lengths"),
        (&["predict", "--train-len", "6"], EXIT_DOMAIN, "train"),
        (
            &["coverage", "--config", "/nonexistent/run.json"],
            EXIT_USAGE,
            "--config",
        ),
    ];
    for (args, code, needle) in cases {
        let r = run_in_process(args, None);
        assert_eq!(r.code, code, "{args:?}: {}", r.stderr);
        assert!(r.stdout.is_empty(), "{args:?} wrote data: {}", r.stdout);
        assert!(r.stderr.contains(needle), "{args:?}: {}", r.stderr);
    }
    let help = run_in_process(&["--help"], None);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("truncated:92") && help.stderr.is_empty());
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.json");
    let r = run_in_process(&["predict", "--output", target.to_str().unwrap()], None);
    assert_eq!(r.code, EXIT_IO);
    assert!(r.stderr.contains("cannot write"));
}

#[test]
fn output_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("predict.json");
    let r = run_in_process(&["predict", "--output", target.to_str().unwrap()], None);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(&target).unwrap(),
        run_in_process(&["predict"], None).stdout
    );
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        r#"{"rope": {"head_dim": 64}, "plotting": true}"#,
    );
    let r = run_in_process(&["predict", "--config", path.to_str().unwrap()], None);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("plotting"), "{}", r.stderr);
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let args = ["trace", "--max-len", "512", "--samples", "1"];
    let from_env: Value =
        serde_json::from_slice(&binary(&args, &[("ROPESCALE_SEED", "7")]).stdout).unwrap();
    assert_eq!(from_env["seed"], 7);
    let default: Value = serde_json::from_slice(&binary(&args, &[]).stdout).unwrap();
    assert_eq!(default["seed"], 42);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--seed", "9"]);
    let flagged: Value =
        serde_json::from_slice(&binary(&with_flag, &[("ROPESCALE_SEED", "7")]).stdout).unwrap();
    assert_eq!(flagged["seed"], 9);

    let bad = binary(&args, &[("ROPESCALE_SEED", "seven")]);
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("ROPESCALE_SEED"));
}

#[derive(Debug, serde::Deserialize)]
struct AngleCsvRow {
    n: usize,
    theta: f64,
    period: f64,
    covered: bool,
}

#[test]
fn angles_csv_round_trips() {
    let json: Value = serde_json::from_str(&run_in_process(&["angles"], None).stdout).unwrap();
    let csv_text = run_in_process(&["angles", "--format", "csv"], None).stdout;
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "theta", "period", "covered"]
    );
    let rows: Vec<AngleCsvRow> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 64);
    for (row, j) in rows.iter().zip(json["rows"].as_array().unwrap()) {
        assert_eq!(row.n as u64, j["n"].as_u64().unwrap());
        assert_eq!(row.theta, j["theta"].as_f64().unwrap());
        assert_eq!(row.period, j["period"].as_f64().unwrap());
        assert_eq!(row.covered, j["covered"].as_bool().unwrap());
    }
    assert_eq!(
        (rows[0].theta, rows[0].period),
        (1.0, std::f64::consts::TAU)
    );
    assert_eq!(rows.iter().filter(|r| r.covered).count(), 46);
}

#[test]
fn coverage_examples() {
    let first = |args: &[&str]| -> Value {
        let v: Value = serde_json::from_str(&run_in_process(args, None).stdout).unwrap();
        v
    };
    let v = first(&["coverage", "--context-len", "4096"]);
    assert_eq!(v["first_uncovered_pair"], 46);
    let v = first(&["coverage", "--base", "500", "--context-len", "4096"]);
    assert!(v["per_dim_class"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c == "full-period"));
    let v = first(&["coverage", "--context-len", "1"]);
    assert!(v["per_dim_class"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c == "partial"));
}

#[test]
fn compare_examples() {
    let r = run_in_process(
        &[
            "compare",
            "--tune-len",
            "16384",
            "--variants",
            "base:40000",
            "base:80000",
            "base:120000",
            "base:1e6",
            "base:500",
        ],
        None,
    );
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let bounds: Vec<f64> = rows[..4]
        .iter()
        .map(|r| r["t_extra"].as_f64().unwrap())
        .collect();
    assert!(bounds.windows(2).all(|w| w[0] < w[1]), "{bounds:?}");
    assert!(rows[4]["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .all(|x| x == "smaller-base-unbounded"));

    let r = run_in_process(
        &[
            "compare",
            "--variants",
            "base:1000000",
            "--lengths",
            "128K,256K",
            "--format",
            "csv",
        ],
        None,
    );
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines[0], "variant,length,t_extra,verdict");
    assert!(
        lines[1].ends_with(",in-bound") && lines[2].ends_with(",out-of-bound"),
        "{lines:?}"
    );
}

#[test]
fn trace_examples() {
    let v: Value = serde_json::from_str(
        &run_in_process(
            &["trace", "--variant", "truncated:92", "--max-len", "4096"],
            None,
        )
        .stdout,
    )
    .unwrap();
    assert!(v["ood_mean"]
        .as_array()
        .unwrap()
        .iter()
        .all(|x| x.as_f64() == Some(0.0)));

    let args = ["trace", "--max-len", "8192", "--format", "csv"];
    assert_eq!(binary(&args, &[]).stdout, binary(&args, &[]).stdout);
}

fn flag_args(head_dim: usize, base: f64, train: u64, tune: Option<u64>) -> Vec<String> {
    let mut args = vec![
        "--d".to_string(),
        head_dim.to_string(),
        "--base".into(),
        base.to_string(),
        "--train-len".into(),
        train.to_string(),
    ];
    if let Some(t) = tune {
        args.extend(["--tune-len".to_string(), t.to_string()]);
    }
    args
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// A file plus overriding flags behaves like the same flags alone.
    #[test]
    fn config_file_then_flags_equals_flags(
        pairs in 1usize..=128,
        base in 2.0f64..1e7,
        train in 8u64..100_000,
        extra in proptest::option::of(0u64..200_000),
        file_pairs in 1usize..=128,
        file_base in 2.0f64..1e7,
        file_train in 8u64..100_000,
        command in prop::sample::select(vec!["predict", "angles", "coverage", "compare"]),
    ) {
        let tune = extra.map(|e| train + e);
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            &format!(
                r#"{{"rope": {{"head_dim": {}, "base": {file_base}, "train_len": {file_train}, "tune_len": {}}}}}"#,
                2 * file_pairs,
                file_train * 4,
            ),
        );
        let flags = flag_args(2 * pairs, base, train, tune.or(Some(train)));
        let mut alone = vec![command.to_string()];
        alone.extend(flags.iter().cloned());
        let mut with_file = alone.clone();
        with_file.extend(["--config".to_string(), path.to_str().unwrap().to_string()]);

        let a = run_in_process(&alone.iter().map(String::as_str).collect::<Vec<_>>(), None);
        let b = run_in_process(&with_file.iter().map(String::as_str).collect::<Vec<_>>(), None);
        prop_assert_eq!(a.code, b.code);
        prop_assert_eq!(a.stdout, b.stdout);
        prop_assert_eq!(a.stderr, b.stderr);
    }
}
