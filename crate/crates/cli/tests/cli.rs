use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shiftbench_core::graph::load_edge_list;
use shiftbench_core::metrics::{sigma_scores, PageRankConfig, ShiftType};
use shiftbench_core::split::{read_split, Subset};

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/fixture100")
        .join(file)
}

fn shiftbench(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftbench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SHIFTBENCH_OUT")
        .output()
        .expect("binary runs")
}

fn with_data(command: &str, extra: &[&str]) -> Vec<String> {
    let mut args = vec![
        command.to_string(),
        "--name".into(),
        "fixture100".into(),
        "--edges".into(),
        data("edges.txt").display().to_string(),
        "--features".into(),
        data("features.csv").display().to_string(),
        "--labels".into(),
        data("labels.csv").display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn run(command: &str, extra: &[&str], out: &Path) -> Output {
    let args = with_data(command, extra);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    shiftbench(&refs, out)
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn invalid_alpha_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = run("metrics", &["--alpha", "1.5"], &out);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("alpha"));
    assert!(!out.exists());
}

#[test]
fn missing_labels_fail_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = dir.path().join("labels.csv");
    let output = shiftbench(
        &[
            "train-eval",
            "--edges",
            data("edges.txt").to_str().unwrap(),
            "--features",
            data("features.csv").to_str().unwrap(),
            "--labels",
            missing.to_str().unwrap(),
        ],
        &out,
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("labels"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_and_help() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        shiftbench(&["frobnicate"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        shiftbench(&["metrics", "--seeds", "x"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        shiftbench(&["metrics", "--shift", "curvature"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(shiftbench(&["metrics"], dir.path()).status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_shiftbench"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["metrics", "split", "analyze", "train-eval", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn malformed_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    std::fs::write(&edges, "0 1\n1 two\n").unwrap();
    let output = shiftbench(
        &["metrics", "--edges", edges.to_str().unwrap()],
        &dir.path().join("run"),
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("edges.txt:2"));
}

#[test]
fn metrics_match_library_scores() {
    let dir = tempfile::tempdir().unwrap();
    let output = run("metrics", &[], dir.path());
    assert_ok(&output);
    let graph = load_edge_list(data("edges.txt"), false).unwrap();
    for shift in ShiftType::ALL {
        let csv = read(dir.path().join(format!("metrics/{shift}.csv")));
        assert!(csv.starts_with("# config_hash="));
        let rows = data_rows(&csv);
        assert_eq!(rows.len(), 100);
        let expected = sigma_scores(&graph, shift, &PageRankConfig::default()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields[0], i.to_string());
            assert_eq!(fields[1].parse::<f64>().unwrap(), expected.values[i]);
            assert_eq!(fields[2], shift.as_str());
        }
        let sidecar: serde_json::Value =
            serde_json::from_str(&read(dir.path().join(format!("metrics/{shift}.json")))).unwrap();
        assert_eq!(sidecar["provenance"]["shift_type"], shift.as_str());
        assert!(sidecar["config_hash"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn default_split_sizes_and_shared_frontier() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("split", &["--seeds", "3,4"], dir.path()));
    for shift in ShiftType::ALL {
        let a = read_split(
            dir.path().join(format!("splits/{shift}/seed-3.json")),
            Some(100),
        )
        .unwrap();
        let b = read_split(
            dir.path().join(format!("splits/{shift}/seed-4.json")),
            Some(100),
        )
        .unwrap();
        assert_eq!(a.sizes(), [30, 10, 10, 10, 40]);
        assert_eq!(b.sizes(), [30, 10, 10, 10, 40]);
        let set = |v: Vec<usize>| v.into_iter().collect::<BTreeSet<_>>();
        assert_eq!(set(a.ood_nodes()), set(b.ood_nodes()));
        assert_eq!(a.nodes(Subset::ValidOut), b.nodes(Subset::ValidOut));
        assert_ne!(a.nodes(Subset::Train), b.nodes(Subset::Train));
        let csv = read(dir.path().join(format!("splits/{shift}/seed-3.csv")));
        assert_eq!(data_rows(&csv).len(), 100);
    }
}

#[test]
fn id_fraction_ninety_percent() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(
        "split",
        &["--id-fraction", "0.9", "--shift", "density", "--seeds", "0"],
        dir.path(),
    ));
    let split = read_split(dir.path().join("splits/density/seed-0.json"), Some(100)).unwrap();
    assert_eq!(split.ood_nodes().len(), 10);
    assert_eq!(split.id_nodes().len(), 90);
}

#[test]
fn toml_config_with_flag_override_and_env_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data("edges.txt"), dir.path().join("edges.txt")).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "shifts = [\"popularity\"]\nseeds = [1]\n\n[dataset]\nname = \"tiny\"\nedges = \"edges.txt\"\n\n[pagerank]\nalpha = 0.3\n",
    )
    .unwrap();
    let env_out = dir.path().join("from-env");
    let output = Command::new(env!("CARGO_BIN_EXE_shiftbench"))
        .args([
            "metrics",
            "--config",
            config.to_str().unwrap(),
            "--alpha",
            "0.2",
        ])
        .env("SHIFTBENCH_OUT", &env_out)
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_ok(&output);
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(env_out.join("metrics/popularity.json"))).unwrap();
    assert_eq!(sidecar["provenance"]["alpha"], 0.2);
    assert_eq!(sidecar["dataset"], "tiny");
    assert!(!env_out.join("metrics/locality.csv").exists());

    std::fs::write(&config, "[dataset]\nedges = \"edges.txt\"\nsurprise = 1\n").unwrap();
    let output = shiftbench(
        &["metrics", "--config", config.to_str().unwrap()],
        &dir.path().join("x"),
    );
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn lcc_writes_node_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    std::fs::write(&edges, "0 1\n1 2\n3 4\n").unwrap();
    let out = dir.path().join("run");
    let output = shiftbench(
        &[
            "metrics",
            "--edges",
            edges.to_str().unwrap(),
            "--lcc",
            "--shift",
            "density",
        ],
        &out,
    );
    assert_ok(&output);
    let mapping = read(out.join("node_mapping.csv"));
    assert_eq!(data_rows(&mapping), ["0,0", "1,1", "2,2"]);
    assert_eq!(data_rows(&read(out.join("metrics/density.csv"))).len(), 3);
}

#[test]
fn staged_equals_fused_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fused = dir.path().join("fused");
    let staged = dir.path().join("staged");
    let extra = ["--seeds", "0,1", "--max-epochs", "50", "--patience", "10"];
    assert_ok(&run("train-eval", &extra, &fused));
    assert_ok(&run("metrics", &extra, &staged));
    assert_ok(&run("split", &extra, &staged));
    assert_ok(&run("analyze", &extra, &staged));
    assert_ok(&run("train-eval", &extra, &staged));
    for shift in ShiftType::ALL {
        for seed in [0, 1] {
            for file in [
                format!("splits/{shift}/seed-{seed}.json"),
                format!("eval/{shift}/seed-{seed}.json"),
                format!("eval/{shift}/seed-{seed}.model.json"),
            ] {
                assert_eq!(read(fused.join(&file)), read(staged.join(&file)), "{file}");
            }
        }
    }
    assert_eq!(
        read(fused.join("summary.csv")),
        read(staged.join("summary.csv"))
    );

    let before = read(fused.join("runs.csv"));
    assert_ok(&run("train-eval", &extra, &fused));
    assert_eq!(before, read(fused.join("runs.csv")));

    std::fs::remove_file(fused.join("summary.csv")).unwrap();
    assert_ok(&run("report", &extra, &fused));
    assert_eq!(
        read(fused.join("summary.csv")),
        read(staged.join("summary.csv"))
    );

    let output = run("report", &["--seeds", "0,1", "--max-epochs", "60"], &fused);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn five_seed_summary_has_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("train-eval", &["--max-epochs", "100"], dir.path()));
    let runs = read(dir.path().join("runs.csv"));
    assert_eq!(data_rows(&runs).len(), 15);
    let summary = read(dir.path().join("summary.csv"));
    let header = summary.lines().find(|l| !l.starts_with('#')).unwrap();
    for column in [
        "accuracy_id_mean",
        "accuracy_id_std",
        "accuracy_ood_mean",
        "auroc_mean",
        "auroc_std",
    ] {
        assert!(header.split(',').any(|c| c == column), "{column} missing");
    }
    let rows = data_rows(&summary);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("5")));
}

/// Frozen outputs of the default fixture run. Set `SHIFTBENCH_BLESS=1` to
/// rewrite them after an intentional change.
#[test]
fn fixture_run_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/golden/fixture100");
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("train-eval", &[], dir.path()));
    let files = [
        "runs.csv",
        "summary.csv",
        "metrics/popularity.csv",
        "metrics/locality.json",
        "splits/density/seed-2.json",
        "eval/locality/seed-0.json",
    ];
    let bless = std::env::var_os("SHIFTBENCH_BLESS").is_some();
    for file in files {
        let produced = read(dir.path().join(file));
        let expected = golden.join(file);
        if bless {
            std::fs::create_dir_all(expected.parent().unwrap()).unwrap();
            std::fs::write(&expected, &produced).unwrap();
        } else {
            assert_eq!(
                produced,
                read(&expected),
                "{file} differs from the golden copy"
            );
        }
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ["--seeds", "0,1", "--max-epochs", "80", "--patience", "20"];
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    assert_ok(&run(
        "train-eval",
        &[&extra[..], &["--threads", "1"]].concat(),
        &one,
    ));
    assert_ok(&run(
        "train-eval",
        &[&extra[..], &["--threads", "4"]].concat(),
        &four,
    ));
    assert_eq!(read(one.join("runs.csv")), read(four.join("runs.csv")));
    assert_eq!(
        read(one.join("eval/popularity/seed-1.model.json")),
        read(four.join("eval/popularity/seed-1.model.json"))
    );
}
