use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn keyscroll(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyscroll")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn gen_is_seed_stable() {
    let a = keyscroll(&["gen", "--distribution", "composite", "--rows", "500", "--seed", "9"]);
    let b = keyscroll(&["gen", "--distribution", "composite", "--rows", "500", "--seed", "9"]);
    let c = keyscroll(&["gen", "--distribution", "composite", "--rows", "500", "--seed", "10"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 501);
    assert!(stdout(&a).starts_with("street,house,seq\n"));
}

#[test]
fn generated_table_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("streets.csv");
    let config = dir.path().join("streets.toml");
    let out = keyscroll(&[
        "gen",
        "--distribution",
        "clustered",
        "--rows",
        "3000",
        "--output",
        csv.to_str().unwrap(),
        "--emit-config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let out = keyscroll(&["verify", "--config", config.to_str().unwrap(), "--samples", "30"]);
    let report = stdout(&out);
    assert!(out.status.success(), "{report}");
    for suite in ["ordering", "round-trip", "seek", "count", "engine", "model"] {
        assert!(report.lines().any(|l| l.starts_with(suite) && l.ends_with("ok")), "{report}");
    }
    assert!(report.contains("3000 rows"));
    assert!(report.ends_with("result: PASS\n"));

    let out = keyscroll(&["verify", "--config", config.to_str().unwrap(), "--samples", "5", "--json"]);
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["suites"][0]["checks"], 2 * 2999);
}

#[test]
fn corrupted_fixtures_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let fields = "[[field]]\nname = \"name\"\nkind = \"string\"\nmax_length = 8\nrules = \"abc.rules\"\n\
                  [[field]]\nname = \"n\"\nkind = \"int32\"\n";
    write(dir.path(), "abc.rules", "<a,A<b,B<c,C");
    let fixtures = [
        ("duplicate.csv", "name,n\nab,1\nba,2\nab,1\n"),
        ("alphabet.csv", "name,n\nab,1\nxy,2\n"),
        ("too-long.csv", "name,n\nabcabcabc,1\n"),
        ("number.csv", "name,n\nab,one\n"),
        ("header.csv", "title,n\nab,1\n"),
    ];
    for (name, text) in fixtures {
        write(dir.path(), name, text);
        let config = write(dir.path(), "c.toml", &format!("dataset = \"{name}\"\n{fields}"));
        let out = keyscroll(&["verify", "--config", &config]);
        assert_eq!(out.status.code(), Some(1), "{name}: {out:?}");
        assert!(stdout(&out).contains("ingest: FAILED"), "{name}");
    }
    write(dir.path(), "good.csv", "name,n,comment\nab,1,x\nAb,1,y\nc,-4,\n");
    let config = write(dir.path(), "c.toml", &format!("dataset = \"good.csv\"\nh = 2\n{fields}"));
    let out = keyscroll(&["verify", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));

    write(dir.path(), "abc.rules", "<a,A<<b");
    let out = keyscroll(&["verify", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors() {
    let out = keyscroll(&["verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
    let out = keyscroll(&["gen", "--distribution", "zipf"]);
    assert!(!out.status.success());
}

fn bench(distribution: &str, rows: usize, script: Option<&str>) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "bench.toml",
        &format!("h = 20\n[synthetic]\ndistribution = \"{distribution}\"\nrows = {rows}\n"),
    );
    let mut args = vec!["bench", "--config", &config, "--json", "--seed", "5"];
    let script_path;
    if let Some(text) = script {
        script_path = write(dir.path(), "script.txt", text);
        args.extend(["--script", &script_path]);
    }
    let out = keyscroll(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn bench_on_uniform_keys() {
    let r = bench("uniform", 10_000, None);
    let lambda_max = r["lambda_max"].as_f64().unwrap();
    assert_eq!(lambda_max, 9_999.0);
    assert_eq!(r["before_warmup"]["samples"], 200);
    let mean = r["before_warmup"]["mean"].as_f64().unwrap();
    assert!(mean < 0.5 * lambda_max.sqrt(), "{r:#}");
    assert!(r["after_warmup"]["max_fraction"].as_f64().unwrap() <= 0.25, "{r:#}");
    assert_eq!(r["steps_checked"], 200);
    assert_eq!(r["adjacency_errors"], 0);
    for op in ["scroll", "small_step", "locate"] {
        assert_eq!(r["operations"][op]["slow_queries"], 0, "{op}");
    }
    assert!(r["background_slow_queries"].as_u64().unwrap() >= 2);
}

#[test]
fn bench_on_clustered_strings() {
    let r = bench("clustered", 20_000, None);
    assert!(r["after_warmup"]["max_fraction"].as_f64().unwrap() <= 0.25, "{r:#}");
    assert!(r["warmup_iterations"].as_u64().unwrap() > 0);
    assert_eq!(r["adjacency_errors"], 0);
}

#[test]
fn bench_script_commands() {
    let r = bench(
        "composite",
        5_000,
        Some("wait\nscroll 50%\nrelease\nstep 1\nstep -3\nstep 40\nlocate Ленина Ба,1\nscroll 100%\nstep 2\n"),
    );
    assert_eq!(r["steps_checked"], 4);
    assert_eq!(r["adjacency_errors"], 0);
    assert_eq!(r["operations"]["release"]["calls"], 1);
    assert_eq!(r["operations"]["locate"]["calls"], 1);
    assert_eq!(r["before_warmup"]["samples"], 3);
}
