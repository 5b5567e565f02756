use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use stratasim::harness;
use stratasim::{ExperimentConfig, MeshConfig};

fn stratasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratasim")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"seed": 1, "mesh": {"width": 1, "height": 1, "halt_generations": 10}, "exact_tracking": true}"#,
    );
    let out = dir.path().join("out");
    let status = stratasim(&["run", "--config", p(&config), "--out", p(&out)]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let genomes = fs::read_to_string(out.join("genomes.csv")).unwrap();
    assert_eq!(genomes.lines().count(), 1 + 32);
    assert!(genomes.starts_with("pe_x,pe_y,slot,fitness,depth,annotation_hex,lineage_id\n"));
    let pedigree = fs::read_to_string(out.join("pedigree.csv")).unwrap();
    assert_eq!(pedigree.lines().count(), 1 + 320);
    let summary = json(&out.join("run_summary.json"));
    assert_eq!(summary["pe_generations"], 10);
    assert_eq!(summary["seed"], 1);

    // seed override, no tracking
    let config = write_config(dir.path(), r#"{"seed": 1, "mesh": {"width": 2, "height": 1, "halt_generations": 5}}"#);
    let out = dir.path().join("out2");
    assert!(stratasim(&["run", "--config", p(&config), "--out", p(&out), "--seed", "9"]).status.success());
    assert_eq!(json(&out.join("run_summary.json"))["seed"], 9);
    assert!(!out.join("pedigree.csv").exists());
}

#[test]
fn pe_generation_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        mesh: MeshConfig { width: 16, height: 16, halt_generations: 2000, ..MeshConfig::default() },
        sample_per_pe: Some(1),
        ..ExperimentConfig::with_seed(3)
    };
    let summary = harness::cmd_run(&config, dir.path()).unwrap();
    assert_eq!(summary.pe_generations, 16 * 16 * 2000);
    assert_eq!(summary.total_replications, 16 * 16 * 2000 * 32);
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (body, key) in [
        (r#"{"seed": 1, "mesh": {"width": 0}}"#, "width"),
        (r#"{"seed": 1, "pe": {"popsize": 3}}"#, "popsize"),
        (r#"{"mesh": {}}"#, "seed"),
        (r#"{"seed": 1, "treatment": {"p_deleterious": 1.5}}"#, "p_deleterious"),
    ] {
        let config = write_config(dir.path(), body);
        let o = stratasim(&["run", "--config", p(&config), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(1), "{body}");
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(stderr.contains(key), "{body}: {stderr}");
    }
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(stratasim(&[]).status.code(), Some(1));
    assert_eq!(stratasim(&["run"]).status.code(), Some(1));
    assert_eq!(stratasim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(stratasim(&["--help"]).status.code(), Some(0));
}

#[test]
fn reconstruct_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 4, "mesh": {"width": 2, "height": 2, "halt_generations": 60}, "sample_per_pe": 5}"#);
    let run = dir.path().join("run");
    assert!(stratasim(&["run", "--config", p(&config), "--out", p(&run)]).status.success());
    let genomes = run.join("genomes.csv");

    let phylo = dir.path().join("phylo.csv");
    let o = stratasim(&["reconstruct", p(&genomes), "--out", p(&phylo), "--subsample", "20", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&phylo).unwrap();
    assert!(text.starts_with("id,ancestor_list,origin_time,taxon_label\n0,[none],0,\n"));
    assert_eq!(text.lines().filter(|l| !l.ends_with(',')).count(), 1 + 20);

    // explicit config and conservative descent give a valid table too
    let other = dir.path().join("conservative.csv");
    let o = stratasim(&["reconstruct", p(&genomes), "--out", p(&other), "--config", p(&config), "--descent", "conservative"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let too_many = stratasim(&["reconstruct", p(&genomes), "--out", p(&phylo), "--subsample", "21"]);
    assert_eq!(too_many.status.code(), Some(1));

    let metrics = dir.path().join("m.json");
    assert!(stratasim(&["metrics", p(&phylo), "--out", p(&metrics)]).status.success());
    let first = fs::read(&metrics).unwrap();
    let report = json(&metrics);
    assert_eq!(report["leaf_count"], 20);
    assert_eq!(report["mode"], "exact");
    assert!(report["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert!(stratasim(&["metrics", p(&phylo), "--out", p(&metrics)]).status.success());
    assert_eq!(fs::read(&metrics).unwrap(), first);
}

#[test]
fn reconstruct_without_surface_information_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let genomes = dir.path().join("genomes.csv");
    fs::write(&genomes, "pe_x,pe_y,slot,fitness,depth,annotation_hex,lineage_id\n").unwrap();
    let o = stratasim(&["reconstruct", p(&genomes), "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_annotations_share_a_parent() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1, "surface": {"policy": "ring", "num_sites": 4, "differentia_width": 8}}"#);
    let genomes = dir.path().join("genomes.csv");
    // depth 2, sites hold 0xaa and 0xbb
    fs::write(
        &genomes,
        "pe_x,pe_y,slot,fitness,depth,annotation_hex,lineage_id\n0,0,0,0,2,aabb000002000000,1\n0,0,1,0,2,aabb000002000000,2\n",
    )
    .unwrap();
    let phylo = dir.path().join("phylo.csv");
    let o = stratasim(&["reconstruct", p(&genomes), "--out", p(&phylo), "--config", p(&config)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(&phylo).unwrap(),
        "id,ancestor_list,origin_time,taxon_label\n0,[none],0,\n1,[0],0,\n2,[1],1,\n3,[2],2,0-0-0\n4,[2],2,0-0-1\n"
    );
}

#[test]
fn metrics_fixture_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cherry = dir.path().join("cherry.csv");
    fs::write(&cherry, "id,ancestor_list,origin_time,taxon_label\n0,[none],0,\n1,[0],2,a\n2,[0],2,b\n").unwrap();
    let out = dir.path().join("m.json");
    assert!(stratasim(&["metrics", p(&cherry), "--out", p(&out)]).status.success());
    let m = json(&out);
    for (key, value) in [
        ("colless_like", 0.0),
        ("mean_evolutionary_distinctiveness", 2.0),
        ("mean_pairwise_distance", 4.0),
        ("sum_pairwise_distance", 4.0),
        ("sum_branch_length", 4.0),
    ] {
        assert_eq!(m[key].as_f64().unwrap(), value, "{key}");
    }

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(stratasim(&["metrics", p(&empty), "--out", p(&out)]).status.code(), Some(2));
    let cyclic = dir.path().join("cyclic.csv");
    fs::write(&cyclic, "id,ancestor_list,origin_time,taxon_label\n0,[1],0,\n1,[0],0,\n").unwrap();
    assert_eq!(stratasim(&["metrics", p(&cyclic), "--out", p(&out)]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(stratasim(&["metrics", p(&missing), "--out", p(&out)]).status.code(), Some(2));
}

fn metric_dir(root: &Path, name: &str, values: &[f64]) -> std::path::PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    for (i, v) in values.iter().enumerate() {
        fs::write(dir.join(format!("r{i}.json")), format!(r#"{{"sum_branch_length": {v}}}"#)).unwrap();
    }
    dir
}

#[test]
fn compare_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let a = metric_dir(dir.path(), "a", &[1.0, 2.0, 3.0]);
    let b = metric_dir(dir.path(), "b", &[4.0, 5.0, 6.0]);
    let out = dir.path().join("cmp.json");
    let o = stratasim(&["compare", p(&a), p(&b), "--metric", "sum_branch_length", "--alternative", "A<B", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&out);
    assert_eq!(c["u"], 0.0);
    assert!((c["p_value"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(c["method"], "exact");
    assert_eq!(c["direction"], "A<B");
    assert_eq!(c["median_a"], 2.0);

    let o = stratasim(&["compare", p(&b), p(&a), "--metric", "sum_branch_length", "--alternative", "greater"]);
    let swapped: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(swapped["direction"], "A>B");

    let same = metric_dir(dir.path(), "same", &[1.0, 2.0, 3.0]);
    let o = stratasim(&["compare", p(&a), p(&same), "--metric", "sum_branch_length", "--alternative", "less"]);
    let tie: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(tie["p_value"].as_f64().unwrap() >= 0.5);

    let short = metric_dir(dir.path(), "short", &[1.0, 2.0]);
    assert_eq!(stratasim(&["compare", p(&a), p(&short), "--metric", "sum_branch_length"]).status.code(), Some(2));
    assert_eq!(stratasim(&["compare", p(&a), p(&b), "--metric", "height"]).status.code(), Some(1));
    assert_eq!(stratasim(&["compare", p(&a), p(&b), "--metric", "sum_branch_length", "--alternative", "up"]).status.code(), Some(1));
}

#[test]
fn bench_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 1, "mesh": {"width": 1, "height": 1, "halt_generations": 200}}"#);
    let out = dir.path().join("bench.json");
    assert!(stratasim(&["bench", "--config", p(&config), "--out", p(&out)]).status.success());
    let b = json(&out);
    for key in ["pe_generations_per_sec", "replications_per_sec", "replications_per_day"] {
        let v = b[key].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{key} = {v}");
    }
}

#[test]
fn bench_rates_scale_with_pe_count() {
    let rate = |side: u32| {
        let config = ExperimentConfig {
            mesh: MeshConfig { width: side, height: side, halt_generations: 400, ..MeshConfig::default() },
            ..ExperimentConfig::with_seed(2)
        };
        harness::cmd_bench(&config, None).unwrap().pe_generations_per_sec
    };
    // cost per PE-generation is flat, so wall time grows linearly with PE count
    let small = rate(2);
    let large = rate(6);
    let ratio = small.max(large) / small.min(large);
    assert!(ratio < 3.0, "aggregate rates {small} vs {large}");
}

#[test]
fn surface_check_reports() {
    let o = stratasim(&["surface-check", "--max-depth", "2048"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ")).count(), 11);
}

#[test]
fn determinism_of_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 12, "mesh": {"width": 3, "height": 2, "halt_generations": 80}}"#);
    let mut seen = Vec::new();
    for run in ["x", "y"] {
        let out = dir.path().join(run);
        assert!(stratasim(&["run", "--config", p(&config), "--out", p(&out)]).status.success());
        let phylo = out.join("phylo.csv");
        assert!(stratasim(&["reconstruct", p(&out.join("genomes.csv")), "--out", p(&phylo), "--subsample", "50"]).status.success());
        seen.push((fs::read(out.join("genomes.csv")).unwrap(), fs::read(phylo).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
}
