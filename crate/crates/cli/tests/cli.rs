use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use trafficmetric::nn::{load_checkpoint, ModelState};
use trafficmetric::scenario::Category;
use trafficmetric_cli::{RunConfig, METRICS_HEADER, MINE_HEADER, PROJECTION_HEADER};

const TINY: &str = r#"
seed = 11

[generator]
per_template = 2
templates = ["single-lane", "intersection", "roundabout"]
image_size = 16

[network]
image_size = 16
latent_i = 8
latent_t = 4
latent = 8
enc_channels = [4, 4, 4, 4]
dec_channels = [4, 4, 4, 4]
attn_width = 8
heads = 2

[training]
epochs = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trafficmetric"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new(config: &str) -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn gen(&self, name: &str) -> PathBuf {
        let out = self.path(name);
        self.ok(&["gen", "--config", s(&self.path("run.toml")), "--out", s(&out)]);
        out
    }

    fn train(&self, dataset: &Path, name: &str) -> PathBuf {
        let out = self.path(name);
        self.ok(&[
            "train",
            "--config",
            s(&self.path("run.toml")),
            "--dataset",
            s(dataset),
            "--out",
            s(&out),
        ]);
        out
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn gen_writes_manifest_and_group_counts() {
    let w = Work::new(TINY);
    let out = w.path("ds");
    let stdout = w.ok(&["gen", "--config", s(&w.path("run.toml")), "--out", s(&out)]);
    assert!(out.join("manifest.json").is_file());
    for tag in ["C:", "G:", "R:"] {
        assert!(stdout.contains(tag), "{stdout}");
    }
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let w = Work::new(TINY);
    let a = w.gen("a");
    let b = w.gen("b");
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn unwritable_output_names_the_path() {
    let w = Work::new(TINY);
    let blocker = w.path("blocker");
    fs::write(&blocker, "file, not a directory").unwrap();
    let target = blocker.join("ds");
    let out = run(&["gen", "--config", s(&w.path("run.toml")), "--out", s(&target)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&blocker)));
}

#[test]
fn config_problems_exit_with_one() {
    let w = Work::new("[generator]\nper_template = 0\n");
    let out = run(&["gen", "--config", s(&w.path("run.toml")), "--out", s(&w.path("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!w.path("x").exists());

    let out = run(&["gen", "--config", s(&w.path("missing.toml")), "--out", s(&w.path("x"))]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(w.path("typo.toml"), "[trainig]\nepochs = 1\n").unwrap();
    let out = run(&["gen", "--config", s(&w.path("typo.toml")), "--out", s(&w.path("x"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["train", "--out", s(&w.path("x"))]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["mine", "--dataset", "d", "--out", "o", "--strategy", "nearest"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_override_changes_every_sub_seed() {
    let cfg = RunConfig::from_toml(TINY).unwrap().resolve(Some(40), None).unwrap();
    assert_eq!(cfg.seed, Some(40));
    assert_eq!(cfg.generator.seed, 40);
    assert_ne!(cfg.network.seed, cfg.generator.seed);
    assert_ne!(cfg.training.seed, cfg.network.seed);
    let plain = RunConfig::default().resolve(None, None).unwrap();
    assert_eq!(plain.generator.seed, 0);
}

#[test]
fn zero_epochs_store_the_initial_model() {
    let w = Work::new(&TINY.replace("epochs = 2", "epochs = 0"));
    let ds = w.gen("ds");
    let ckpt = w.train(&ds, "m.ckpt");
    let cfg = RunConfig::from_toml(TINY).unwrap().resolve(None, None).unwrap();
    let init = ModelState::init(&cfg.network).unwrap();
    assert_eq!(load_checkpoint(&ckpt).unwrap(), init);
    let rows = csv_rows(&w.path("m.metrics.csv"));
    assert_eq!(rows, vec![METRICS_HEADER.map(String::from).to_vec()]);
}

#[test]
fn training_artifacts_are_reproducible() {
    let w = Work::new(TINY);
    let ds = w.gen("ds");
    let a = w.train(&ds, "a.ckpt");
    let b = w.train(&ds, "b.ckpt");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ma = fs::read(w.path("a.metrics.csv")).unwrap();
    assert_eq!(ma, fs::read(w.path("b.metrics.csv")).unwrap());
    let rows = csv_rows(&w.path("a.metrics.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 7));
    assert_eq!(rows[1][0], "1");
    assert_eq!(load_checkpoint(&a).unwrap().step, 2 * 20);
}

#[test]
fn eval_project_and_mine_outputs() {
    let w = Work::new(TINY);
    let ds = w.gen("ds");
    let ckpt = w.train(&ds, "m.ckpt");
    let cfg = s(&w.path("run.toml")).to_owned();

    let report = w.path("report.json");
    for _ in 0..2 {
        w.ok(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt), "--dataset", s(&ds), "--out", s(&report)]);
    }
    let first = fs::read(&report).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    for key in ["auc_C", "auc_G", "auc_R", "acc_C", "acc_G", "acc_R"] {
        let v = json[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    for key in ["d_i", "d_t", "d_v", "d_a_lon", "d_a_lat", "d_psi"] {
        assert!(json[key].as_f64().unwrap() >= 0.0);
    }
    let report2 = w.path("report2.json");
    w.ok(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt), "--dataset", s(&ds), "--out", s(&report2)]);
    assert_eq!(first, fs::read(&report2).unwrap());

    let proj = w.path("proj.csv");
    w.ok(&["project", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "--out", s(&proj)]);
    let rows = csv_rows(&proj);
    assert_eq!(rows[0], PROJECTION_HEADER.map(String::from).to_vec());
    assert_eq!(rows.len(), 20 + 1);
    let names: Vec<&str> = Category::ALL.iter().map(|c| c.name()).collect();
    assert!(rows[1..].iter().all(|r| names.contains(&r[3].as_str())));
    let proj2 = w.path("proj2.csv");
    w.ok(&["project", "--checkpoint", s(&ckpt), "--dataset", s(&ds), "--out", s(&proj2)]);
    assert_eq!(fs::read(&proj).unwrap(), fs::read(&proj2).unwrap());

    let quads = w.path("quads.csv");
    w.ok(&["mine", "--config", &cfg, "--dataset", s(&ds), "--out", s(&quads), "--strategy", "random-excl"]);
    let rows = csv_rows(&quads);
    assert_eq!(rows[0], MINE_HEADER.map(String::from).to_vec());
    let cats: Vec<String> = csv_rows(&proj)[1..].iter().map(|r| r[3].clone()).collect();
    for r in &rows[1..] {
        let ids: Vec<usize> = r[..4].iter().map(|v| v.parse().unwrap()).collect();
        assert_ne!(cats[ids[0]], cats[ids[3]], "random-excl negative shares the category");
        let s_t: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&s_t));
    }
}

#[test]
fn image_size_mismatch_is_rejected() {
    let w = Work::new(TINY);
    let ds = w.gen("ds");
    let ckpt = w.train(&ds, "m.ckpt");
    let big = TINY.replace("image_size = 16", "image_size = 32");
    fs::write(w.path("big.toml"), big).unwrap();
    let ds32 = w.path("ds32");
    w.ok(&["gen", "--config", s(&w.path("big.toml")), "--out", s(&ds32)]);

    let out = run(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&ds32), "--out", s(&w.path("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!w.path("r.json").exists());
    let out = run(&[
        "train",
        "--config",
        s(&w.path("run.toml")),
        "--dataset",
        s(&ds32),
        "--out",
        s(&w.path("x.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!w.path("x.ckpt").exists());
}

#[test]
fn divergence_keeps_the_last_good_checkpoint() {
    let w = Work::new(&TINY.replace("epochs = 2", "epochs = 3\nlr = 1e300\nlr_schedule = \"constant\""));
    let ds = w.gen("ds");
    let ckpt = w.path("m.ckpt");
    let out = run(&[
        "train",
        "--config",
        s(&w.path("run.toml")),
        "--dataset",
        s(&ds),
        "--out",
        s(&ckpt),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let state = load_checkpoint(&ckpt).unwrap();
    assert!(state.params.iter().all(|p| p.value.data.iter().all(|v| v.is_finite())));
}
