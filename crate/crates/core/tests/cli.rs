use std::path::Path;
use std::process::{Command, Output};

fn occusurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occusurf")).args(args).output().unwrap()
}

fn tiny() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml").to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_passes() {
    let o = occusurf(&["--threads", "1", "verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().filter(|l| l.contains("status=PASS")).count(), 9);
}

#[test]
fn untrained_surface_render_shows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = occusurf(&["render", "--config", &tiny(), "--level", "0.5", "--views", "1", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = occusurf::raster::RgbBuffer::load_float(&dir.path().join("view_001.rgbf")).unwrap();
    let env = occusurf::geom::Rgb::new(0.8, 0.8, 0.8);
    assert!((0..img.height).all(|y| (0..img.width).all(|x| (img.get(x, y) - env).norm() < 1e-6)));
}

#[test]
fn user_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = occusurf(&["gen-data", "--config", "/no/such/config.toml", "--out", out]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).starts_with("error: "), "{}", stderr(&missing));
    assert!(stderr(&missing).contains("config.toml"));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "bounds = 3\n").unwrap();
    let o = occusurf(&["train", "--config", bad_cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml"));

    let o = occusurf(&["render", "--config", &tiny(), "--level", "1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("level"));

    let o = occusurf(&["train", "--config", &tiny(), "--strategy", "sideways", "--out", out]);
    assert_eq!(o.status.code(), Some(1));

    let o = occusurf(&["extract", "--config", &tiny(), "--checkpoint", "/no/ck.bin", "--out", "m.obj"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).contains("panicked"));

    let o = occusurf(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn checkpoint_from_another_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train_dir = d.join("t");
    let o = occusurf(&["--threads", "1", "train", "--config", &tiny(), "--iterations", "2", "--out", train_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tiny()).unwrap().replace("resolution = 16", "resolution = 12");
    let other = d.join("other.toml");
    std::fs::write(&other, text).unwrap();
    let ck = train_dir.join("checkpoint.bin");
    let o = occusurf(&["eval", "--config", other.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn train_writes_log_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = occusurf(&[
        "--threads", "1", "train", "--config", &tiny(), "--iterations", "6", "--snapshot-every", "3",
        "--strategy", "color-dep:16", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(out.join("loss.log")).unwrap();
    assert_eq!(log.lines().count(), 6);
    assert!(log.lines().all(|l| l.starts_with("iter=")));
    assert!(out.join("checkpoint_000003.bin").exists());
    assert!(!out.join("checkpoint_000006.bin").exists());
    assert!(out.join("checkpoint.bin").exists());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("record=train iterations=6"));
}
