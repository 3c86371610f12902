use std::path::Path;
use std::process::{Command, Output};

fn sonoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonoflow")).args(args).output().unwrap()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_CTX: &str = r#"
speed_of_sound = 1540.0
sampling_frequency = 40e6
n_elements = 16
pitch = 0.3e-3
transmit = { scheme = "sta" }
receive = { map = "centered", channels = 8 }
"#;

const PHANTOM: &str = r#"
center_frequency = 5e6
n_cycles = 2

[[scatterer]]
x = 0.0
z = 5e-3
amplitude = 1.0
"#;

#[test]
fn simulate_then_reconstruct_writes_one_pgm_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = write(dir.path(), "ctx.toml", SMALL_CTX);
    let phantom = write(dir.path(), "phantom.toml", PHANTOM);
    let data = dir.path().join("d.wfrf");
    let data = data.to_str().unwrap();
    let o = sonoflow(&[
        "simulate", "--phantom", &phantom, "--ctx", &ctx, "--out", data, "--samples", "512", "--frames", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let out_dir = dir.path().join("img");
    let pipeline = configs().join("bmode.toml");
    let o = sonoflow(&[
        "reconstruct", "--in", data, "--pipeline", pipeline.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    for k in 0..3 {
        let bytes = std::fs::read(out_dir.join(format!("dynamic_adjustment_{k:04}.pgm"))).unwrap();
        let header = b"P5\n16 512\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 16 * 512);
        assert!(bytes[header.len()..].contains(&255));
    }
    assert!(!out_dir.join("dynamic_adjustment_0003.pgm").exists());
}

#[test]
fn missing_input_is_a_processing_error_naming_the_path() {
    let o = sonoflow(&[
        "reconstruct", "--in", "/no/such/data.wfrf", "--pipeline", "p.toml", "--out-dir", "/tmp/unused",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("/no/such/data.wfrf"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sonoflow(&["benchmark"]).status.code(), Some(2));
    assert_eq!(sonoflow(&["benchmark", "--synthetic", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(sonoflow(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn invalid_pipeline_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cyclic = write(
        dir.path(),
        "cycle.toml",
        r#"
outputs = ["a"]

[[node]]
name = "a"
op = "identity"
inputs = ["b"]

[[node]]
name = "b"
op = "identity"
inputs = ["a"]
"#,
    );
    let o = sonoflow(&["benchmark", "--synthetic", "sta-small", "--pipeline", &cyclic]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("cycle") && err.contains("cycle.toml"), "{err}");
}

#[test]
fn benchmark_records_carry_shapes_and_steps() {
    let o = sonoflow(&[
        "benchmark", "--synthetic", "sta-small", "--synthetic", "pwi-small", "--frames", "2", "--warmup", "1", "--format",
        "records",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let summaries: Vec<_> = records.iter().filter(|r| r["record"] == "summary").collect();
    assert_eq!(summaries.len(), 2);
    assert_eq!(summaries[0]["config"], "STAI");
    assert_eq!(summaries[0]["input_shape"], serde_json::json!([16, 8, 1024]));
    assert_eq!(summaries[0]["output_shapes"][0]["shape"], serde_json::json!([1024, 16]));
    assert_eq!(summaries[1]["config"], "PWI");
    assert_eq!(summaries[1]["output_shapes"][0]["shape"], serde_json::json!([512, 128]));
    let steps: Vec<_> = records
        .iter()
        .filter(|r| r["record"] == "step" && r["config"] == "PWI")
        .map(|r| r["step"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(steps, ["Beamforming", "Envelope Detection", "Dynamic Adjustment"]);
}

#[test]
fn benchmark_table_and_dataset_input() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = write(dir.path(), "ctx.toml", SMALL_CTX);
    let phantom = write(dir.path(), "phantom.toml", PHANTOM);
    let data = dir.path().join("wires.wfrf");
    let data = data.to_str().unwrap();
    let o = sonoflow(&["simulate", "--phantom", &phantom, "--ctx", &ctx, "--out", data, "--samples", "512", "--frames", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = sonoflow(&["benchmark", "--in", data, "--frames", "1", "--warmup", "1", "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let first: Vec<&str> = table.lines().map(|l| l.split('|').next().unwrap().trim()).collect();
    assert_eq!(first[0], "Step");
    assert!(table.lines().next().unwrap().contains("wires [ms/frame]"));
    assert_eq!(&first[2..], ["Beamforming", "Envelope Detection", "Dynamic Adjustment", "Total", "FPS"]);

    // a third frame is not available
    let o = sonoflow(&["benchmark", "--in", data, "--frames", "2", "--warmup", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("need 3 frames"), "{}", stderr(&o));
}
