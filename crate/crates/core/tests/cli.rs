use std::path::Path;
use std::process::{Command, Output};

use smc::model::{Factorization, Observation, StructureSpec};

fn smc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn smc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn gen_to_stdout_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = smc(
        &["gen", "--family", r#"{"family":"sbm","n":6,"k":2}"#, "--seed", "1"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let f: Factorization = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(f.x.shape(), (6, 2));
    assert_eq!(f.z.shape(), (6, 2));
}

#[test]
fn pipeline_round_trips_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = smc(
        &[
            "gen",
            "--family",
            r#"{"family":"biclustering","n":6,"m":5,"k_n":2,"k_m":2}"#,
            "--seed",
            "4",
            "--out",
            "f.json",
            "--theta-out",
            "t.json",
            "--spec-out",
            "s.json",
        ],
        d,
    );
    assert_eq!(code(&gen), 0);
    let f: Factorization = smc::io::read_json(d.join("f.json")).unwrap();
    let spec: StructureSpec = smc::io::read_json(d.join("s.json")).unwrap();
    assert_eq!((spec.n, spec.m), (6, 5));

    let obs = smc(&["observe", "--theta", "t.json", "--p", "1", "--out", "o.json"], d);
    assert_eq!(code(&obs), 0);
    let o: Observation = smc::io::read_json(d.join("o.json")).unwrap();
    assert_eq!(o.y(), &f.assemble().unwrap());

    let est = smc(
        &[
            "estimate",
            "--obs",
            "o.json",
            "--method",
            "least-squares",
            "--spec",
            "s.json",
            "--out",
            "e.json",
        ],
        d,
    );
    assert_eq!(code(&est), 0, "{}", String::from_utf8_lossy(&est.stderr));
    let e: serde_json::Value = smc::io::read_json(d.join("e.json")).unwrap();
    assert!(e["objective"].as_f64().unwrap() < 1e-20);
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = smc(&["gen", "--family", "{not json"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_parameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = smc(&["gen", "--family", r#"{"family":"sbm","n":0,"k":2}"#], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn refused_enumeration_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = smc(
        &[
            "gen",
            "--family",
            r#"{"family":"sbm","n":30,"k":3}"#,
            "--theta-out",
            "t.json",
            "--spec-out",
            "s.json",
        ],
        d,
    );
    assert_eq!(code(&gen), 0);
    assert_eq!(
        code(&smc(
            &["observe", "--theta", "t.json", "--p", "1", "--out", "o.json"],
            d
        )),
        0
    );
    let out = smc(
        &["estimate", "--obs", "o.json", "--method", "exact", "--spec", "s.json"],
        d,
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("block_coordinate_ls"));
}

#[test]
fn budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("b.json"),
        r#"{"family":{"family":"sbm","n":40,"k":3},"grid":[{}],"p_values":[1.0],
            "noise":{"kind":"gaussian","sigma":1.0},"method":{"name":"bcd"},"replicas":5,"seed":1,"budget":1.0}"#,
    )
    .unwrap();
    let out = smc(&["bench", "--config", "b.json", "--out", "b.csv"], d);
    assert_eq!(code(&out), 3);
    assert!(!d.join("b.csv").exists());
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("b.json"),
        r#"{"family":{"family":"sbm","n":6,"k":2},"grid":[{}],"p_values":[1.0],
            "noise":{"kind":"none"},"method":{"name":"bcd"},"replicas":1,"seed":1,"colour":"red"}"#,
    )
    .unwrap();
    assert_eq!(code(&smc(&["bench", "--config", "b.json"], d)), 2);
}

#[test]
fn infeasible_embedding_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = smc(
        &[
            "packing",
            "--kind",
            "embed",
            "--k",
            "8",
            "--s",
            "1",
            "--r",
            "1",
            "--max-resamples",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_csv_header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("b.json"),
        r#"{"family":{"family":"sbm","n":6,"k":2},"grid":[{}],"p_values":[1.0],
            "noise":{"kind":"gaussian","sigma":0.1},"method":{"name":"bcd"},"replicas":2,"seed":3}"#,
    )
    .unwrap();
    let out = smc(&["bench", "--config", "b.json"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(smc::bench::CSV_HEADER.join(",").as_str()));
    assert_eq!(lines.count(), 2);
}
