use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn grasplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grasplab"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn grasplab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = r#"
seed = 3

[env]
image_size = 8
horizon = 10
shapes = ["cylinder"]

[train]
total_steps = 120
buffer_capacity = 200
warmup = 40
minibatch = 8
eval_every = 60
eval_episodes = 3

[train.network]
conv_filters = [2]
hidden = [8]
"#;

fn write_config(dir: &Path, name: &str, extra_train: &str) -> PathBuf {
    let text = TINY.replace("[train.network]", &format!("{extra_train}\n[train.network]"));
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_usage_codes() {
    assert_eq!(code(&grasplab(&["--help"])), 0);
    assert_eq!(code(&grasplab(&[])), 2);
    assert_eq!(code(&grasplab(&["fly"])), 2);
}

#[test]
fn mech_calculator_values() {
    let out = grasplab(&["mech", "tension", "--fg", "65", "--r", "53", "--lja", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "689.0 N");

    let out = grasplab(&["mech", "torque", "--d", "23.8", "--t", "-689", "--theta", "90"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "-8199.1 N*mm");

    let out = grasplab(&["mech", "sf", "--stress", "37.8", "--strength", "113.4"]);
    assert_eq!(stdout(&out).trim(), "3.00");
}

#[test]
fn mech_rejects_bad_input() {
    assert_eq!(
        code(&grasplab(&[
            "mech", "tension", "--fg", "10", "--r", "93.5", "--lja", "0"
        ])),
        2
    );
    assert_eq!(
        code(&grasplab(&["mech", "tension", "--fg", "ten", "--r", "1", "--lja", "1"])),
        2
    );
    assert_eq!(code(&grasplab(&["mech", "sf", "--stress", "0", "--strength", "30"])), 2);
}

#[test]
fn mech_report_writes_manifest_only_with_out() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("report");
    let args = [
        "mech",
        "report",
        "--mass",
        "500",
        "--pinch",
        "12",
        "--speed",
        "300",
        "--actuators",
        "6",
    ];
    let out = grasplab(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!stdout(&out).is_empty());
    let mut with_out = vec!["--out", p(&dir)];
    with_out.extend(args);
    assert_eq!(code(&grasplab(&with_out)), 0);
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("mech.txt").exists());
}

#[test]
fn missing_or_invalid_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    let out = grasplab(&["--config", p(&missing), "--out", p(tmp.path()), "train"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.toml"), "{}", stderr(&out));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nbogus_key = 1\n").unwrap();
    let out = grasplab(&["--config", p(&bad), "--out", p(tmp.path()), "train"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus_key"), "{}", stderr(&out));

    let cfg = write_config(tmp.path(), "warm.toml", "warmup = 500");
    assert_eq!(
        code(&grasplab(&["--config", p(&cfg), "--out", p(tmp.path()), "train"])),
        2
    );
}

#[test]
fn zero_step_training_writes_header_only_curve() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", "");
    let cfg_text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("total_steps = 120", "total_steps = 0");
    fs::write(&cfg, cfg_text).unwrap();
    let run = tmp.path().join("run");
    let out = grasplab(&["--config", p(&cfg), "--out", p(&run), "train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(run.join("curve.csv")).unwrap(),
        "step,success_rate,critic_loss\n"
    );
    assert!(run.join("checkpoint.bin").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["started_unix"], 1700000000);
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", "");
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = grasplab(&["--config", p(&cfg), "--seed", seed, "--out", p(&dir), "train"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        dir
    };
    let (a, b, c) = (run("a", "3"), run("b", "3"), run("c", "4"));
    for name in ["curve.csv", "checkpoint.bin", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        fs::read(a.join("checkpoint.bin")).unwrap(),
        fs::read(c.join("checkpoint.bin")).unwrap()
    );
    let curve = fs::read_to_string(a.join("curve.csv")).unwrap();
    let steps: Vec<&str> = curve.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["60", "120"]);
}

#[test]
fn eval_of_zero_initialized_checkpoint_is_all_failures() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", "init = \"zero\"");
    let cfg_text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("total_steps = 120", "total_steps = 0");
    fs::write(&cfg, cfg_text).unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&grasplab(&["--config", p(&cfg), "--out", p(&run), "train"])), 0);
    let ckpt = run.join("checkpoint.bin");

    let ev = tmp.path().join("eval");
    let out = grasplab(&[
        "--out",
        p(&ev),
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--episodes",
        "4",
        "--objects",
        "cuboid,can",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(ev.join("eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "object,episodes,successes,success_rate");
    assert_eq!(
        &lines[1..],
        ["cuboid,4,0,0.0000", "can,4,0,0.0000", "aggregate,8,0,0.0000"]
    );
}

#[test]
fn eval_error_codes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", "");
    let cfg_text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("total_steps = 120", "total_steps = 0");
    fs::write(&cfg, cfg_text).unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&grasplab(&["--config", p(&cfg), "--out", p(&run), "train"])), 0);
    let ckpt = run.join("checkpoint.bin");
    let ev = tmp.path().join("eval");

    let out = grasplab(&["--out", p(&ev), "eval", "--checkpoint", p(&ckpt), "--episodes", "0"]);
    assert_eq!(code(&out), 2);

    let out = grasplab(&["--out", p(&ev), "eval", "--checkpoint", p(&ckpt), "--objects", "teapot"]);
    assert_eq!(code(&out), 2);

    let mut bytes = fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    bytes.truncate(bytes.len() - 3);
    let corrupt = tmp.path().join("corrupt.bin");
    fs::write(&corrupt, bytes).unwrap();
    let out = grasplab(&["--out", p(&ev), "eval", "--checkpoint", p(&corrupt)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("corrupt.bin"), "{}", stderr(&out));

    let out = grasplab(&[
        "--out",
        p(&ev),
        "eval",
        "--checkpoint",
        p(&tmp.path().join("absent.bin")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_argument_validation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", "");
    let out_dir = tmp.path().join("sweep");
    let out = grasplab(&[
        "--config",
        p(&cfg),
        "--out",
        p(&out_dir),
        "sweep",
        "--capacities",
        "100",
    ]);
    assert_eq!(code(&out), 2);
    // Capacity below warmup (40) is rejected before any training.
    let out = grasplab(&[
        "--config",
        p(&cfg),
        "--out",
        p(&out_dir),
        "sweep",
        "--capacities",
        "100,20",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("capacity 20"), "{}", stderr(&out));
}

#[test]
fn sweep_writes_one_leg_per_capacity() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", "");
    let cfg_text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("total_steps = 120", "total_steps = 60");
    fs::write(&cfg, cfg_text).unwrap();
    let dir = tmp.path().join("sweep");
    let out = grasplab(&["--config", p(&cfg), "--out", p(&dir), "sweep", "--capacities", "50,80"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "capacity,final_success_rate");
    assert!(lines[1].starts_with("50,") && lines[2].starts_with("80,"));
    for cap in ["cap50", "cap80"] {
        assert!(dir.join(cap).join("curve.csv").exists());
        assert!(dir.join(cap).join("checkpoint.bin").exists());
    }
}

#[test]
fn render_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene.toml");
    fs::write(
        &scene,
        "[camera]\nwidth = 17\nheight = 17\nposition = [0.0, 0.0, 0.5]\n\n[[objects]]\nshape = \"sphere\"\nradius = 0.05\n",
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&grasplab(&["--out", p(&a), "render", "--scene", p(&scene)])), 0);
    assert_eq!(code(&grasplab(&["--out", p(&b), "render", "--scene", p(&scene)])), 0);
    let img = fs::read(a.join("depth.pgm")).unwrap();
    assert_eq!(img, fs::read(b.join("depth.pgm")).unwrap());
    assert!(img.starts_with(b"P5\n17 17\n65535\n"));
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );

    fs::write(&scene, "[[objects]]\nshape = \"teapot\"\n").unwrap();
    assert_eq!(code(&grasplab(&["--out", p(&a), "render", "--scene", p(&scene)])), 2);
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn augment_is_deterministic_and_counts_samples() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = grasplab(&[
            "--seed",
            "9",
            "--out",
            p(&dir),
            "augment",
            "--synthesize",
            "3",
            "--image-size",
            "32",
            "--multiplier",
            "4",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("3 sources -> 12 samples"), "{}", stdout(&out));
        dir
    };
    let (a, b) = (run("a"), run("b"));
    let snap = dir_snapshot(&a);
    assert_eq!(snap, dir_snapshot(&b));
    // 12 samples x 3 files + manifest.
    assert_eq!(snap.len(), 37);
}

#[test]
fn augment_reports_malformed_rectangle_file_with_line() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("src");
    fs::create_dir_all(&src).unwrap();
    let gen = tmp.path().join("gen");
    let out = grasplab(&[
        "--out",
        p(&gen),
        "augment",
        "--synthesize",
        "1",
        "--image-size",
        "32",
        "--multiplier",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let samples = gen.join("samples");
    let id = fs::read_dir(&samples)
        .unwrap()
        .filter_map(|e| {
            e.unwrap()
                .file_name()
                .to_str()?
                .strip_suffix(".depth.pgm")
                .map(String::from)
        })
        .next()
        .unwrap();
    fs::copy(samples.join(format!("{id}.depth.pgm")), src.join("x.depth.pgm")).unwrap();
    fs::write(src.join("x.cpos.txt"), "1.0 2.0\n3.0 oops\n5.0 6.0\n7.0 8.0\n").unwrap();

    let out = grasplab(&["--out", p(&tmp.path().join("aug")), "augment", "--source", p(&src)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("x.cpos.txt:2"), "{}", stderr(&out));

    let out = grasplab(&["augment"]);
    assert_eq!(code(&out), 2);
}
