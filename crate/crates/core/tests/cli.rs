use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use handsynth::config::PipelineConfig;
use handsynth::metrics::MetricsReport;
use handsynth::pipeline;

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn handsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handsynth"))
        .args(args)
        .env_remove("HANDSYNTH_OUT")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn missing_config_is_a_config_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = handsynth(&["--config", "/nonexistent/handsynth.toml", "--out", out.to_str().unwrap(), "run-all"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn stage_before_its_inputs_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = handsynth(&["--out", tmp.path().to_str().unwrap(), "optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_round_trips_with_overrides() {
    let text = ok(&handsynth(&["--seed", "19", "--tolerance-mm", "1.5", "--cameras", "full", "print-config"]));
    let cfg = PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seed, 19);
    assert_eq!(cfg.filter.tolerance_mm, 1.5);
    assert_eq!(cfg.export.cameras, handsynth::scene::CameraSelection::Full);
    assert_eq!(cfg.schedule, PipelineConfig::default().schedule);
}

#[test]
fn out_flag_beats_environment_beats_config() {
    let cfg = smoke_config();
    let c = cfg.to_str().unwrap();
    let env = Command::new(env!("CARGO_BIN_EXE_handsynth"))
        .args(["--config", c, "print-config"])
        .env("HANDSYNTH_OUT", "/tmp/from-env")
        .output()
        .unwrap();
    assert!(ok(&env).contains("out_dir = \"/tmp/from-env\""));
    let flag = Command::new(env!("CARGO_BIN_EXE_handsynth"))
        .args(["--config", c, "--out", "/tmp/from-flag", "print-config"])
        .env("HANDSYNTH_OUT", "/tmp/from-env")
        .output()
        .unwrap();
    assert!(ok(&flag).contains("out_dir = \"/tmp/from-flag\""));
    assert!(ok(&handsynth(&["--config", c, "print-config"])).contains("out_dir = \"out/smoke\""));
}

#[test]
fn stages_one_at_a_time_match_run_all() {
    let tmp = tempfile::tempdir().unwrap();
    let c = smoke_config();
    let c = c.to_str().unwrap();
    let staged = tmp.path().join("staged");
    let all = tmp.path().join("all");
    let s = staged.to_str().unwrap();
    for stage in ["gen-poses", "select-anchors", "train-disc", "optimize", "filter", "export"] {
        ok(&handsynth(&["--config", c, "--out", s, "--workers", "2", stage]));
    }
    ok(&handsynth(&["--config", c, "--out", all.to_str().unwrap(), "run-all"]));
    for f in [
        pipeline::INITIAL_FILE,
        pipeline::ANCHORS_FILE,
        pipeline::DISCRIMINATOR_FILE,
        pipeline::OPTIMIZED_FILE,
        pipeline::LIBRARY_FILE,
        "annotations/manifest.json",
    ] {
        assert_eq!(std::fs::read(staged.join(f)).unwrap(), std::fs::read(all.join(f)).unwrap(), "{f}");
    }

    let ann = all.join(pipeline::ANNOTATIONS_DIR);
    let a = ann.to_str().unwrap();
    let table = ok(&handsynth(&["--config", c, "--out", s, "eval", "--gt", a, "--pred", a]));
    assert!(table.contains("MPJPE"));
    let report: MetricsReport =
        serde_json::from_slice(&std::fs::read(staged.join(pipeline::METRICS_FILE)).unwrap()).unwrap();
    assert!(report.samples > 0);
    assert_eq!(report.mpjpe, 0.0);
    assert_eq!(report.mrrpe, 0.0);
    assert!(report.pampjpe < 1e-9 && report.smpjpe < 1e-9);
    assert!(report.cdev.is_none_or(|c| c == 0.0));
}

#[test]
fn export_writes_meshes_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let c = smoke_config();
    let s = tmp.path().to_str().unwrap();
    ok(&handsynth(&["--config", c.to_str().unwrap(), "--out", s, "run-all"]));
    ok(&handsynth(&["--config", c.to_str().unwrap(), "--out", s, "--cameras", "full", "export", "--obj"]));
    let meshes = tmp.path().join("annotations/meshes");
    let objs: Vec<_> = std::fs::read_dir(&meshes).unwrap().collect();
    let library = pipeline::load_library(tmp.path()).unwrap();
    assert_eq!(objs.len(), library.len());
    let manifest: handsynth::scene::AnnotationManifest =
        serde_json::from_slice(&std::fs::read(tmp.path().join("annotations/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.cameras_per_pose, 40);
}
