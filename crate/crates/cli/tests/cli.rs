use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 11

[data]
kernel = { family = "rbf", lengthscale = 0.5 }
count = 2

[bnn]
activation = "relu"
sigma_w2 = 2.0
sigma_b2 = 2.0
widths = [2]

[sampler]
chains = 2
warmup = 60
draws = 40
thin = 1

[spectrum]
n_grid = 32
draws = 20

[ldl]
count = 5
"#;

fn bnnwidth(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnnwidth"))
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_writes_suite_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("count = 2", "count = 3"));
    let out = tmp.path().join("out");
    let o = bnnwidth(&cfg, &out, &["gen"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read(&out.join("data/suite.txt"));
    let ids: Vec<&str> = manifest.lines().filter_map(|l| l.strip_prefix("dataset = ")).collect();
    assert_eq!(ids, ["ds0000", "ds0001", "ds0002"]);
    let first: Vec<String> = ids.iter().map(|id| read(&out.join(format!("data/{id}.csv")))).collect();
    assert!(bnnwidth(&cfg, &out, &["gen"]).status.success());
    let second: Vec<String> = ids.iter().map(|id| read(&out.join(format!("data/{id}.csv")))).collect();
    assert_eq!(first, second);
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &TINY.replace("kernel = { family = \"rbf\", lengthscale = 0.5 }\n", ""));
    let o = bnnwidth(&cfg, &out, &["gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kernel"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &TINY.replace("count = 2", "count = 2\ncuont = 3"));
    let o = bnnwidth(&cfg, &out, &["gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cuont"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &TINY.replace("lengthscale = 0.5", "sigma_w2 = 0.5"));
    let o = bnnwidth(&cfg, &out, &["gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lengthscale"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let o = bnnwidth(&cfg, &blocker.join("out"), &["gen"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn nngp_only_run_never_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace(
        "[bnn]\nactivation = \"relu\"\nsigma_w2 = 2.0\nsigma_b2 = 2.0\nwidths = [2]\n",
        "[nngp]\nkernel = { family = \"arccos\", sigma_w2 = 2.0, sigma_b2 = 2.0 }\n",
    );
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    assert!(bnnwidth(&cfg, &out, &["gen"]).status.success());
    let o = bnnwidth(&cfg, &out, &["fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.lines().skip(1).all(|l| l.contains(",nngp,0,")));
    assert!(!fs::read_dir(out.join("fits/ds0000")).unwrap().any(|e| e.unwrap().path().join("draws.csv").exists()));
    // No BNN rows to pair with.
    assert_eq!(bnnwidth(&cfg, &out, &["report"]).status.code(), Some(3));
}

#[test]
fn pipeline_is_resumable_deterministic_and_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        for cmd in ["gen", "fit", "report"] {
            let o = bnnwidth(&cfg, &out, &[cmd, "--workers", workers]);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for file in ["metrics.csv", "delta.csv", "ldl.csv", "spectrum.csv", "fits/ds0001/bnn_w2_unfiltered/draws.csv"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs");
    }
    assert!(read(&a.join("delta.csv")).starts_with("width,t,delta_nll,delta_nll_se,delta_mse,delta_mse_se,S\n"));
    assert!(read(&a.join("ldl.csv")).starts_with("model,width,sample_id,ldl\n"));
    assert!(read(&a.join("spectrum.csv")).starts_with("phase,model,width,coeff_index,percentile,value\n"));
    let manifest = read(&a.join("fits/ds0000/bnn_w2_unfiltered/manifest.txt"));
    assert!(manifest.contains("width = 2") && manifest.contains("warmup = 60"));

    // A rerun finds every unit in the ledger and recomputes nothing.
    let ledger_before = read(&a.join("progress.ledger"));
    let draws = a.join("fits/ds0000/bnn_w2_unfiltered/draws.csv");
    let original = read(&draws);
    fs::write(&draws, "sentinel").unwrap();
    let o = bnnwidth(&cfg, &a, &["fit"]);
    assert!(o.status.success());
    assert_eq!(read(&draws), "sentinel");
    assert_eq!(read(&a.join("progress.ledger")), ledger_before);
    fs::write(&draws, original).unwrap();

    // Report is idempotent.
    let delta = read(&a.join("delta.csv"));
    assert!(bnnwidth(&cfg, &a, &["report"]).status.success());
    assert_eq!(read(&a.join("delta.csv")), delta);
}

#[test]
fn interrupted_fit_resumes_only_missing_units() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    assert!(bnnwidth(&cfg, &out, &["gen"]).status.success());
    assert!(bnnwidth(&cfg, &out, &["fit"]).status.success());
    let full = read(&out.join("metrics.csv"));
    // Simulate an interruption after the first dataset's units.
    let ledger = read(&out.join("progress.ledger"));
    let kept: String = ledger.lines().filter(|l| l.contains("ds0000/")).map(|l| format!("{l}\n")).collect();
    fs::write(out.join("progress.ledger"), kept).unwrap();
    let o = bnnwidth(&cfg, &out, &["fit"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("2 already complete"), "{}", stderr(&o));
    assert_eq!(read(&out.join("metrics.csv")), full);
}

#[test]
fn zero_threshold_matches_unfiltered_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("widths = [2]", "widths = [2]\nthresholds = [0.0]").replace("warmup = 60\ndraws = 40", "warmup = 300\ndraws = 400");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    for cmd in ["gen", "fit"] {
        assert!(bnnwidth(&cfg, &out, &[cmd]).status.success());
    }
    let plain = tmp.path().join("plain");
    let cfg_plain = write_config(tmp.path(), &text.replace("\nthresholds = [0.0]", ""));
    for cmd in ["gen", "fit"] {
        assert!(bnnwidth(&cfg_plain, &plain, &[cmd]).status.success());
    }
    let mse = |path: &Path| -> Vec<f64> {
        read(path)
            .lines()
            .skip(1)
            .filter(|l| l.contains(",bnn,"))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    for (f, p) in mse(&out.join("metrics.csv")).iter().zip(mse(&plain.join("metrics.csv"))) {
        assert!((f - p).abs() <= 0.5 * p.max(0.01), "filtered {f} vs plain {p}");
    }
}

#[test]
fn report_on_hand_built_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    assert!(bnnwidth(&cfg, &out, &["gen"]).status.success());
    fs::write(
        out.join("metrics.csv"),
        "dataset_id,model,width,t,nll,mse\nds0000,bnn,2,0,1,0.5\nds0001,bnn,2,0,2,0.25\nds0000,nngp,0,0,0,0.25\nds0001,nngp,0,0,1,0.25\n",
    )
    .unwrap();
    let o = bnnwidth(&cfg, &out, &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let delta = read(&out.join("delta.csv"));
    let row: Vec<f64> = delta.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row, [2.0, 0.0, 1.0, 0.0, 0.125, 0.125, 2.0]);

    fs::write(out.join("metrics.csv"), "dataset_id,model,width,t,nll,mse\nds0000,bnn,2,0,1,0.5\nds0001,nngp,0,0,1,0.25\n").unwrap();
    let o = bnnwidth(&cfg, &out, &["report"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ds0000") && stderr(&o).contains("ds0001"), "{}", stderr(&o));
}
