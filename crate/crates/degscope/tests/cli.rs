use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn degscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degscope"))
        .args(args)
        .output()
        .expect("spawn degscope")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .unwrap()
}

/// Small synthetic setup that keeps every command under a few seconds.
const SMALL: [&str; 16] = [
    "--set", "synth.entities=200",
    "--set", "kge.dim=16",
    "--set", "kge.epochs=20",
    "--set", "quality.sample_size=20",
    "--set", "sobol.samples=256",
    "--set", "text.dim=16",
    "--set", "mapper.hidden_dims=16",
    "--set", "format=synthetic",
];

fn run_ok(args: &[&str]) -> Output {
    let o = degscope(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(&SMALL);
    v
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn close(a: &Value, b: f64) -> bool {
    (a.as_f64().unwrap() - b).abs() < 1e-12
}

#[test]
fn stats_on_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.tsv");
    fs::write(&g, "a\tr1\tb\nb\tr1\tc\nc\tr2\ta\na\tr2\tc\nd\tr1\ta\n").unwrap();
    let out = dir.path().join("out");
    run_ok(&["stats", "--dataset", path(&g), "--out", path(&out)]);
    let r = json(&out.join("characteristics.json"));
    assert_eq!(r["schema_version"], 1);
    let c = &r["characteristics"];
    // ordered connected pairs a→b, b→c, c→a, a→c, d→a over 4·3
    assert!(close(&c["graph_density"], 5.0 / 12.0));
    // one triangle {a,b,c}; triplets 3 (a) + 1 (b) + 1 (c)
    assert!(close(&c["global_clustering_coefficient"], 0.6));
    assert_eq!(c["num_relation_types"], 2);
    // degrees a=4, b=2, c=3, d=1: ordered |diff| sum 20 over 2·16·2.5
    assert!(close(&c["degree_distribution_index"], 0.25));
    // relation counts 3 and 2: 2 over 2·4·2.5
    assert!(close(&c["relation_type_index"], 0.1));
    // {a,b,c} and {d}
    assert_eq!(c["num_strongly_connected_components"], 2);
    let csv = fs::read_to_string(out.join("characteristics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["exit_code"], 0);
    assert!(out.join("config.txt").is_file());
}

#[test]
fn missing_dataset_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = degscope(&["stats", "--dataset", "no/such/graph.tsv", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/graph.tsv"), "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 2);
    assert!(m["error"].as_str().unwrap().contains("no/such/graph.tsv"));
}

#[test]
fn owe_format_on_a_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.tsv");
    fs::write(&g, "a\tr\tb\n").unwrap();
    let o = degscope(&["stats", "--dataset", path(&g), "--format", "owe-directory", "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
}

#[test]
fn bad_override_and_bad_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = degscope(&["synth", "--set", "kge.bogus=1", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kge.bogus"));
    assert!(out.join("manifest.json").is_file());
    let o = degscope(&["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "synth.entities = 150\nseed = 5\n").unwrap();
    let out = dir.path().join("o");
    run_ok(&["synth", "--config", path(&cfg), "--seed", "9", "--out", path(&out)]);
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(text.contains("synth.entities = 150\n"));
    assert!(text.contains("seed = 9\n"));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 9);
    let lines = fs::read_to_string(out.join("graph.tsv")).unwrap().lines().count();
    assert_eq!(lines, 6 * 7 / 2 + 143 * 6);
}

fn trained(dir: &Path) -> PathBuf {
    let out = dir.join("kge");
    run_ok(&with_small(&["train-kge", "--out", path(&out)]));
    out.join("embeddings")
}

#[test]
fn quality_modes_and_alpha_echo() {
    let dir = tempfile::tempdir().unwrap();
    let emb = trained(dir.path());
    let out = dir.path().join("q");
    run_ok(&with_small(&["quality", "--embeddings", path(&emb), "--alpha", "1.0", "--out", path(&out)]));
    let r = json(&out.join("quality.json"));
    assert_eq!(r["config"]["alpha"], 1.0);
    assert_eq!(r["mode"], "by-degree");
    let csv = fs::read_to_string(out.join("quality.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "graph,entity,degree,stratum,q");
    assert_eq!(csv.lines().count(), 41);

    let o = degscope(&with_small(&[
        "quality", "--mode", "by-distribution", "--subgraphs", "a.tsv", "--embeddings", path(&emb),
        "--out", path(&dir.path().join("q2")),
    ]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("usage error"), "{}", stderr(&o));
}

#[test]
fn quality_by_distribution_on_two_samples() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    run_ok(&with_small(&["sample", "--num-samples", "2", "--out", path(&s)]));
    let mut embs = Vec::new();
    for i in 0..2 {
        let tsv = s.join(format!("samples/sample_000{i}.tsv"));
        let out = dir.path().join(format!("k{i}"));
        run_ok(&with_small(&[
            "train-kge", "--dataset", path(&tsv), "--format", "tsv-triples", "--out", path(&out),
        ]));
        embs.push((tsv, out.join("embeddings")));
    }
    let out = dir.path().join("q");
    run_ok(&with_small(&[
        "quality", "--mode", "by-distribution",
        "--subgraphs", path(&embs[0].0), path(&embs[1].0),
        "--embeddings", path(&embs[0].1), path(&embs[1].1),
        "--out", path(&out),
    ]));
    let r = json(&out.join("quality.json"));
    assert_eq!(r["mode"], "by-distribution");
    let groups: Vec<&str> = r["means"].as_array().unwrap().iter().map(|m| m["group"].as_str().unwrap()).collect();
    assert_eq!(groups, ["g1", "g1_low", "g1_high", "g2", "g2_low", "g2_high"]);
}

#[test]
fn sample_sidecars_carry_characteristics_ratio_start_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    run_ok(&with_small(&["sample", "--num-samples", "3", "--seed", "4", "--out", path(&out)]));
    for i in 0..3 {
        let side = json(&out.join(format!("samples/sample_000{i}.json")));
        for k in [
            "graph_density", "global_clustering_coefficient", "num_relation_types",
            "degree_distribution_index", "relation_type_index", "num_strongly_connected_components",
            "ratio", "start_entity",
        ] {
            assert!(!side[k].is_null(), "{k}");
        }
        assert_eq!(side["seed"], 4);
        let tsv = fs::read_to_string(out.join(format!("samples/sample_000{i}.tsv"))).unwrap();
        assert_eq!(tsv.lines().count() as u64, side["triples"].as_u64().unwrap());
    }
    assert_eq!(fs::read_to_string(out.join("samples.csv")).unwrap().lines().count(), 4);
}

#[test]
fn mapper_single_epoch_trace_has_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let emb = trained(dir.path());
    let out = dir.path().join("m");
    run_ok(&with_small(&["train-mapper", "--embeddings", path(&emb), "--epochs", "1", "--out", path(&out)]));
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        header,
        [
            "epoch", "group", "entities", "samples", "loss", "mrr", "grad_l1", "grad_l2",
            "grad_l1_cumulative", "grad_l2_cumulative", "sum_grad_l1", "sum_grad_l2",
            "align_cosine_mean", "align_cosine_std", "align_euclidean_mean", "align_euclidean_std",
        ]
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let cells: Vec<&str> = r.split(',').collect();
        assert_eq!(cells.len(), header.len());
        assert_eq!(cells[0], "1");
    }
    let groups: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(groups, ["low", "mid", "high", "held-out"]);
    let e = json(&out.join("evaluation.json"));
    assert_eq!(e["best_epoch"], 1);
    assert!(out.join("text_embeddings.emb").is_file());
}

#[test]
fn mapper_missing_embeddings_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = degscope(&with_small(&[
        "train-mapper", "--embeddings", "missing/emb", "--out", path(&dir.path().join("m")),
    ]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing/emb"));
}

#[test]
fn mapper_noise_free_identity_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let emb = trained(dir.path());
    let out = dir.path().join("m");
    run_ok(&with_small(&[
        "train-mapper", "--embeddings", path(&emb), "--text-source", "synthetic", "--noise", "0",
        "--hidden-dims", "", "--learning-rate", "0.5", "--epochs", "30",
        "--set", "text.map=identity", "--set", "mapper.batch_size=32",
        "--out", path(&out),
    ]));
    let e = json(&out.join("evaluation.json"));
    let fin = e["final_ranking"]["mrr"].as_f64().unwrap();
    let reference = e["reference_ranking"]["mrr"].as_f64().unwrap();
    assert!((fin - reference).abs() <= 0.05 * reference, "{fin} vs {reference}");
}

#[test]
fn mapper_file_text_source() {
    let dir = tempfile::tempdir().unwrap();
    let emb = trained(dir.path());
    let first = dir.path().join("m1");
    run_ok(&with_small(&["train-mapper", "--embeddings", path(&emb), "--epochs", "2", "--out", path(&first)]));
    let text = first.join("text_embeddings.emb");
    let second = dir.path().join("m2");
    run_ok(&with_small(&[
        "train-mapper", "--embeddings", path(&emb), "--epochs", "2", "--text-source", "file",
        "--text", path(&text), "--out", path(&second),
    ]));
    assert_eq!(fs::read(first.join("trace.csv")).unwrap(), fs::read(second.join("trace.csv")).unwrap());
    assert_eq!(json(&second.join("evaluation.json"))["text_source"], "file");
}

#[test]
fn eval_and_degree_correlation_on_a_split_directory() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    run_ok(&with_small(&["synth", "--out", path(&syn)]));
    let all = fs::read_to_string(syn.join("graph.tsv")).unwrap();
    let lines: Vec<&str> = all.lines().collect();
    let ds = dir.path().join("owe");
    fs::create_dir(&ds).unwrap();
    let cut = lines.len() * 9 / 10;
    fs::write(ds.join("train.txt"), lines[..cut].join("\n")).unwrap();
    fs::write(ds.join("test.txt"), lines[cut..].join("\n")).unwrap();
    let data = ["--dataset", path(&ds), "--format", "owe-directory"];
    let kge = dir.path().join("kge");
    run_ok(&[&with_small(&["train-kge", "--out", path(&kge)])[..], &data].concat());
    let emb = kge.join("embeddings");
    let ev = dir.path().join("ev");
    run_ok(&[&with_small(&["eval", "--embeddings", path(&emb), "--out", path(&ev)])[..], &data].concat());
    let r = json(&ev.join("evaluation.json"));
    let n = r["queries"].as_u64().unwrap() + r["skipped"].as_u64().unwrap();
    assert_eq!(n as usize, lines.len() - cut);
    let mrr = r["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);
    assert_eq!(fs::read_to_string(ev.join("ranks.csv")).unwrap().lines().count() as u64, r["queries"].as_u64().unwrap() + 1);

    let co = dir.path().join("co");
    run_ok(&[&with_small(&["correlate", "--embeddings", path(&emb), "--out", path(&co)])[..], &data].concat());
    let d = json(&co.join("degree_correlation.json"));
    assert!(d["unbinned"]["spearman_rho"].as_f64().unwrap().abs() <= 1.0);
    assert!(co.join("degree_scatter.csv").is_file());

    // a plain triple file has no test split
    let o = degscope(&with_small(&[
        "eval", "--embeddings", path(&emb), "--dataset", path(&syn.join("graph.tsv")),
        "--format", "tsv-triples", "--out", path(&dir.path().join("ev2")),
    ]));
    assert_eq!(o.status.code(), Some(2));
}

fn primary_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = json(&dir.join("manifest.json"));
    let mut files: Vec<(String, Vec<u8>)> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            let rel = a.as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&rel)).unwrap();
            (rel, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_small_run_is_reproducible_from_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    run_ok(&with_small(&["pipeline", "--num-samples", "5", "--out", path(&a)]));
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    let stages: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(
        stages,
        [
            "load", "characteristics", "sample", "train_eval", "surrogate", "sobol",
            "correlation", "reference_kge", "degree_correlation", "quality",
        ]
    );
    let rows = fs::read_to_string(a.join("labeled_samples.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
    let sobol = json(&a.join("sobol.json"));
    assert_eq!(sobol["names"].as_array().unwrap().len(), 6);
    assert_eq!(sobol["second_order"].as_array().unwrap().len(), 6);
    let corr = json(&a.join("correlations.json"));
    assert_eq!(corr["samples"], 5);
    // n = 5 is small enough for exact permutation p-values
    assert!(corr["correlations"][0]["permutation_p_spearman"].is_number());

    // re-execute from the written config, on more workers
    let b = dir.path().join("b");
    run_ok(&["pipeline", "--config", path(&a.join("config.txt")), "--workers", "3", "--out", path(&b)]);
    assert_eq!(primary_files(&a), primary_files(&b));

    // the standalone commands reproduce the pipeline's analysis files
    let s = dir.path().join("s");
    run_ok(&["sobol", "--config", path(&a.join("config.txt")), "--samples", path(&a.join("labeled_samples.csv")), "--out", path(&s)]);
    assert_eq!(fs::read(a.join("sobol.json")).unwrap(), fs::read(s.join("sobol.json")).unwrap());
    let c = dir.path().join("c");
    run_ok(&["correlate", "--config", path(&a.join("config.txt")), "--samples", path(&a.join("labeled_samples.csv")), "--out", path(&c)]);
    assert_eq!(fs::read(a.join("correlations.json")).unwrap(), fs::read(c.join("correlations.json")).unwrap());
}

#[test]
fn pipeline_with_two_samples_reports_the_surrogate_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = degscope(&with_small(&["pipeline", "--num-samples", "2", "--out", path(&out)]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("surrogate"), "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    let stage = |n: &str| {
        m["stages"].as_array().unwrap().iter().find(|s| s["name"] == n).unwrap_or_else(|| panic!("{n}")).clone()
    };
    assert_eq!(stage("train_eval")["status"], "ok");
    assert_eq!(stage("surrogate")["status"], "failed");
    assert!(!stage("surrogate")["errors"].as_array().unwrap().is_empty());
    for n in ["sobol", "correlation", "reference_kge", "degree_correlation", "quality"] {
        assert_eq!(stage(n)["status"], "skipped", "{n}");
    }
    assert_eq!(fs::read_to_string(out.join("labeled_samples.csv")).unwrap().lines().count(), 3);
    assert!(out.join("samples/sample_0001.tsv").is_file());
    assert!(!out.join("sobol.json").exists());
}
