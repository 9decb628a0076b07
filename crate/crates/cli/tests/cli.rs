mod common;

use std::fs;

use common::{dialsum, manifests, stderr, stdout, write_samples};
use dialsum_core::synthetic::{toy_corpus, worked_example};

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dialsum(dir.path(), &["stats", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(dialsum(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(dialsum(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(dialsum(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(dialsum(dir.path(), &["--version"]).status.code(), Some(0));
    let o = dialsum(dir.path(), &["stats", "--in", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    let o = dialsum(dir.path(), &["stats", "--in", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn stats_prints_table_and_writes_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_samples(&dir.path().join("toy.jsonl"), &toy_corpus(20, 3));
    let before = fs::read(&input).unwrap();
    let o = dialsum(dir.path(), &["stats", "--in", "toy.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .eq(["split", "n", "IW", "OW", "CR"]));
    assert!(out.contains("toy.jsonl") && out.contains(" 20 "));
    assert_eq!(fs::read(&input).unwrap(), before);

    let found = manifests(&dir.path().join("runs"));
    assert_eq!(found.len(), 1);
    let first = fs::read(&found[0]).unwrap();
    let m: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(m["command"], "stats");
    assert_eq!(m["inputs"][0]["blob_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["result"][0]["stats"]["n_samples"], 20);
    assert!(dialsum(dir.path(), &["stats", "--in", "toy.jsonl"]).status.success());
    assert_eq!(fs::read(&found[0]).unwrap(), first);
}

#[test]
fn convert_reads_samsum_json() {
    let dir = tempfile::tempdir().unwrap();
    let raw = r#"[{"id": "s1", "dialogue": "Ann: hi Bob\r\nBob: hello Ann", "summary": "Ann greets Bob."}]"#;
    fs::write(dir.path().join("train.json"), raw).unwrap();
    let o = dialsum(
        dir.path(),
        &[
            "convert",
            "--in",
            "train.json",
            "--format",
            "samsum",
            "--out",
            "c.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let line = fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["turns"][1]["speaker"], "Bob");
    assert_eq!(v["references"][0], "Ann greets Bob.");
    let o = dialsum(
        dir.path(),
        &["convert", "--in", "train.json", "--format", "xml", "--out", "c.jsonl"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn build_data_dialsent_on_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("ex.jsonl"), &[worked_example()]);
    let o = dialsum(
        dir.path(),
        &[
            "build-data",
            "--in",
            "ex.jsonl",
            "--variant",
            "dialsent",
            "--out",
            "p.jsonl",
            "--prefix-policy",
            "ling-noun",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs: Vec<serde_json::Value> = fs::read_to_string(dir.path().join("p.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0]["target"], "Katarina wants to rent a flat from Liz.");
    assert_eq!(pairs[1]["target"], "Katarina will come visit it today after 6 pm.");
    assert_eq!(pairs[0]["prefix_tokens"], 1);
    assert_eq!(pairs[1]["variant"], "dialsent");

    let o = dialsum(
        dir.path(),
        &[
            "build-data",
            "--in",
            "ex.jsonl",
            "--variant",
            "nope",
            "--out",
            "p.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = dialsum(
        dir.path(),
        &[
            "build-data",
            "--in",
            "ex.jsonl",
            "--variant",
            "dsum",
            "--out",
            "ex.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "must refuse to overwrite its input");
}

#[test]
fn external_backend_without_command_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("ex.jsonl"), &[worked_example()]);
    let o = dialsum(
        dir.path(),
        &[
            "--annotator",
            "external",
            "build-data",
            "--in",
            "ex.jsonl",
            "--variant",
            "dialsent",
            "--out",
            "p.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("DIALSUM_ANNOTATOR_CMD"), "{}", stderr(&o));
}

#[test]
fn oracle_extract_writes_indices() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("ex.jsonl"), &[worked_example()]);
    for (flag, want) in [(None, vec![2, 5]), (Some("--modified"), vec![2, 3, 4, 5])] {
        let mut args = vec!["oracle-extract", "--in", "ex.jsonl", "--out", "o.jsonl"];
        args.extend(flag);
        let o = dialsum(dir.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value =
            serde_json::from_str(fs::read_to_string(dir.path().join("o.jsonl")).unwrap().trim()).unwrap();
        let got: Vec<u64> = v["indices"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap())
            .collect();
        assert_eq!(got, want.iter().map(|&x| x as u64).collect::<Vec<_>>());
    }
}

#[test]
fn evaluate_with_baseline_reports_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let samples = toy_corpus(30, 5);
    write_samples(&dir.path().join("test.jsonl"), &samples);
    let gold: Vec<String> = samples.iter().map(|s| s.summary().to_string()).collect();
    fs::write(dir.path().join("a.txt"), gold.join("\n") + "\n").unwrap();
    for (b, name) in [("lead3", "lead.txt"), ("longest3", "long.txt")] {
        let o = dialsum(
            dir.path(),
            &["generate", "--baseline", b, "--in", "test.jsonl", "--out", name],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read_to_string(dir.path().join(name)).unwrap().lines().count(), 30);
    }
    let o = dialsum(
        dir.path(),
        &[
            "evaluate",
            "--candidates",
            "a.txt",
            "--refs",
            "test.jsonl",
            "--baseline",
            "lead.txt",
            "--buckets",
            "deciles",
            "--json",
            "r.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("p(R2)"), "{out}");
    let cand = out.lines().find(|l| l.starts_with("candidates")).unwrap();
    let cols: Vec<&str> = cand.split_whitespace().collect();
    assert_eq!(cols[1..4], ["100.00", "100.00", "100.00"]);
    let p: f64 = cols[5].parse().unwrap();
    assert!(p < 0.001);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["report"]["samples"].as_array().unwrap().len(), 30);
    assert!(r["report"]["significance"]["p_value"].as_f64().unwrap() < 0.001);
    assert!(!r["report"]["buckets"].as_array().unwrap().is_empty());

    fs::write(dir.path().join("short.txt"), "only one line\n").unwrap();
    let o = dialsum(
        dir.path(),
        &["evaluate", "--candidates", "short.txt", "--refs", "test.jsonl"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kappa_reports_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    for s in 0..4 {
        for a in 0..3 {
            lines.push(format!(
                r#"{{"sample_id":"s{s}","annotator":"a{a}","score":{},"mis":{},"red":false,"cor":false,"rea":false}}"#,
                if s % 2 == 0 { 2 } else { -2 },
                s == 1
            ));
        }
    }
    fs::write(dir.path().join("h.jsonl"), lines.join("\n")).unwrap();
    let o = dialsum(dir.path(), &["kappa", "--in", "h.jsonl", "--json", "k.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let k: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
    assert_eq!(k["kappa_score"], 1.0);
    assert_eq!(k["error_rates"]["misred"], 0.25);
    fs::write(
        dir.path().join("bad.jsonl"),
        lines[0].replace("\"score\":2", "\"score\":1"),
    )
    .unwrap();
    assert_eq!(
        dialsum(dir.path(), &["kappa", "--in", "bad.jsonl"]).status.code(),
        Some(2)
    );
}

#[test]
fn training_requires_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    write_samples(&dir.path().join("t.jsonl"), &toy_corpus(4, 1));
    let o = dialsum(dir.path(), &["fine-tune", "--train", "t.jsonl", "--val", "t.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));
    fs::write(
        dir.path().join("cfg.toml"),
        "[trainer]\nbatch_size = 2\nmax_epochs = 1\npatience = 1\n[model]\nwidth = 8\n[generation]\nmax_len = 12\n",
    )
    .unwrap();
    let o = dialsum(
        dir.path(),
        &[
            "--config",
            "cfg.toml",
            "fine-tune",
            "--train",
            "t.jsonl",
            "--val",
            "t.jsonl",
            "--name",
            "ft",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("runs/ft");
    assert!(run.join("checkpoints/best/params.bin").is_file());
    assert!(run.join("val_decodes/epoch-1.txt").is_file());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "completed");
    assert_eq!(m["config"]["batch_size"], 2);
    assert_eq!(m["provenance"]["inputs"].as_array().unwrap().len(), 2);

    let first = fs::read(run.join("manifest.json")).unwrap();
    let params = fs::read(run.join("checkpoints/best/params.bin")).unwrap();
    let o = dialsum(
        dir.path(),
        &[
            "--config",
            "cfg.toml",
            "fine-tune",
            "--train",
            "t.jsonl",
            "--val",
            "t.jsonl",
            "--name",
            "ft",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(run.join("manifest.json")).unwrap(),
        first,
        "rerun must reproduce the manifest"
    );
    assert_eq!(fs::read(run.join("checkpoints/best/params.bin")).unwrap(), params);

    let o = dialsum(
        dir.path(),
        &[
            "--config",
            "cfg.toml",
            "generate",
            "--checkpoint",
            "runs/ft/checkpoints/best",
            "--in",
            "t.jsonl",
            "--out",
            "g.txt",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("g.txt")).unwrap().lines().count(), 4);
}
