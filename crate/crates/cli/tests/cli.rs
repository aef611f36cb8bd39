use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relnav::env::{
    EdgeRecord, EnvironmentFile, EnvironmentGraph, FeatureSpec, NodeRecord, ObjectPlacement, ENV_SCHEMA_VERSION,
};
use relnav::relations::RelationMatrix;
use relnav::train::{SplitConfig, TrainConfig};

fn relnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relnav")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = relnav(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn line<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no `{key}` line in {stdout}"))
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = TrainConfig {
        splits: SplitConfig {
            train_envs: 2,
            val_unseen_envs: 1,
            train_episodes_per_env: 4,
            val_seen_episodes_per_env: 2,
            val_unseen_episodes_per_env: 3,
            ..SplitConfig::default()
        },
        iterations: 4,
        batch_size: 2,
        warmup: 2,
        ..TrainConfig::default()
    };
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_env_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let out = ok(&["gen-env", "--seed", "7", "--out", p(&a)]);
    ok(&["gen-env", "--seed", "7", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(line(&out, "nodes"), "24");

    let text = fs::read_to_string(&a).unwrap();
    let env = EnvironmentGraph::from_json(&text).unwrap();
    assert_eq!(env.to_json().unwrap(), text);
    assert_eq!(line(&out, "edges"), env.edge_count().to_string());
    assert_eq!(line(&out, "objects"), env.objects().len().to_string());
}

#[test]
fn two_nodes_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "gen-env",
        "--nodes",
        "2",
        "--degree",
        "1",
        "--out",
        p(&dir.path().join("e.json")),
    ]);
    assert_eq!(line(&out, "edges"), "1");
}

#[test]
fn invalid_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("e.json");
    assert_eq!(
        relnav(&["gen-env", "--nodes", "1", "--out", p(&target)]).status.code(),
        Some(2)
    );
    assert!(!target.exists());
    assert_eq!(relnav(&["gen-env", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        relnav(&["build-sor", "--envs", "x.json", "--k1", "0", "--out", p(&target)])
            .status
            .code(),
        Some(2)
    );
}

fn two_object_env(path: &Path) {
    let file = EnvironmentFile {
        schema_version: ENV_SCHEMA_VERSION,
        seed: 0,
        vocab_size: 4,
        features: FeatureSpec::default(),
        nodes: vec![
            NodeRecord { id: 0, xyz: [0.0; 3] },
            NodeRecord {
                id: 1,
                xyz: [2.0, 0.0, 0.0],
            },
        ],
        edges: vec![EdgeRecord {
            u: 0,
            v: 1,
            length: 2.0,
        }],
        objects: vec![
            ObjectPlacement {
                node: 0,
                category: 1,
                direction: [1.0, 0.0, 0.0],
                depth: 1.0,
            },
            ObjectPlacement {
                node: 0,
                category: 3,
                direction: [0.0, 1.0, 0.0],
                depth: 2.0,
            },
        ],
    };
    let env = EnvironmentGraph::from_file(file).unwrap();
    fs::write(path, env.to_json().unwrap()).unwrap();
}

#[test]
fn build_sor_reports_one_pair_with_default_constants() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    two_object_env(&env);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let out = ok(&["build-sor", "--envs", p(&env), "--out", p(&a)]);
    ok(&["build-sor", "--envs", p(&env), "--out", p(&b)]);
    assert_eq!(line(&out, "nonzero_pairs"), "1");
    assert_eq!(line(&out, "symmetric"), "yes");
    assert_eq!(line(&out, "nonnegative"), "yes");
    assert_eq!(line(&out, "zero_diagonal"), "yes");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let m = RelationMatrix::from_json(&fs::read_to_string(&a).unwrap()).unwrap();
    let k = m.constants();
    assert_eq!((k.k1, k.k2, k.k3), (2.0, 2.0, 5e-4));
    assert!(m.get(1, 3) > 0.0 && m.get(1, 3) == m.get(3, 1));

    let csv = dir.path().join("e.csv");
    ok(&["export-relations", "--matrix", p(&a), "--out-csv", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("category,0,1,2,3\n"));
}

#[test]
fn missing_environment_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = relnav(&[
        "build-sor",
        "--envs",
        p(&dir.path().join("none.json")),
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn train_eval_and_episode_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (run_a, run_b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    ok(&["train", "--config", p(&cfg), "--out-dir", p(&run_a)]);
    ok(&["train", "--config", p(&cfg), "--out-dir", p(&run_b)]);
    let files = read_dir(&run_a);
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "checkpoint.json",
            "config.json",
            "losses.csv",
            "manifest.json",
            "metrics.csv",
            "metrics.json"
        ]
    );
    assert_eq!(files, read_dir(&run_b));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let ckpt = run_a.join("checkpoint.json");
    let before = fs::read(&ckpt).unwrap();
    let (plain, unit) = (dir.path().join("eval_plain"), dir.path().join("eval_xi1"));
    ok(&["eval", "--params", p(&ckpt), "--out-dir", p(&plain)]);
    ok(&["eval", "--params", p(&ckpt), "--xi", "1", "--out-dir", p(&unit)]);
    for f in ["metrics.json", "traces.jsonl"] {
        assert_eq!(fs::read(plain.join(f)).unwrap(), fs::read(unit.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(&ckpt).unwrap(), before);
    assert_eq!(
        relnav(&["eval", "--params", p(&ckpt), "--xi", "0", "--out-dir", p(&plain)])
            .status
            .code(),
        Some(2)
    );

    let env = dir.path().join("env.json");
    ok(&["gen-env", "--seed", "3", "--out", p(&env)]);
    for episode in ["0", "1", "2"] {
        let out = ok(&[
            "run-episode",
            "--params",
            p(&ckpt),
            "--env",
            p(&env),
            "--episode",
            episode,
            "--mode",
            "teacher",
        ]);
        assert_eq!(line(&out, "path"), line(&out, "shortest"), "{out}");
    }

    let ep_dir = dir.path().join("episode");
    ok(&[
        "run-episode",
        "--params",
        p(&ckpt),
        "--env",
        p(&env),
        "--out-dir",
        p(&ep_dir),
    ]);
    let matrix = dir.path().join("m.json");
    ok(&["build-sor", "--envs", p(&env), "--out", p(&matrix)]);
    let (e_csv, t_csv) = (dir.path().join("e.csv"), dir.path().join("t.csv"));
    ok(&[
        "export-relations",
        "--matrix",
        p(&matrix),
        "--out-csv",
        p(&e_csv),
        "--trace",
        p(&ep_dir.join("trace.jsonl")),
        "--attention-csv",
        p(&t_csv),
    ]);
    assert_eq!(fs::read_to_string(&e_csv).unwrap().lines().count(), 65);
    assert!(fs::read_to_string(&t_csv)
        .unwrap()
        .starts_with("episode,step,node,object,noun,weight\n"));
}

#[test]
fn mismatched_checkpoint_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out-dir", p(&run)]);
    let text = fs::read_to_string(run.join("checkpoint.json")).unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.replacen("\"version\":1", "\"version\":9", 1)).unwrap();
    let out = relnav(&["eval", "--params", p(&bad), "--out-dir", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 9"));
}

#[test]
fn ablate_emits_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("ablation");
    ok(&[
        "ablate",
        "--config",
        p(&cfg),
        "--seeds",
        "0,1",
        "--out-dir",
        p(&out_dir),
    ]);
    let csv = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5 * 3);
    for name in ["baseline", "tor", "sor", "tor+sor", "tor+sor+tbp"] {
        assert_eq!(
            rows.iter().filter(|r| r.split(',').next() == Some(name)).count(),
            3,
            "{name}"
        );
    }
    assert!(out_dir.join("manifest.json").exists());
}
