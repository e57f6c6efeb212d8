//! End-to-end checks of the `alignlab` binary: exit codes, output layout,
//! manifest completeness, and sweep determinism at the file level.

use std::fs;
use std::path::Path;
use std::process::Command;

fn alignlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alignlab"))
}

const STUDY_CFG: &str = "\
domain.kind = euclidean
domain.dim = 1
kernel.family = gaussian
kernel.amplitude = 1.0
kernel.width = 1.0
comm.family = cucker_smale
comm.k = 1.0
comm.beta = 0.5
sim.gamma = 10.0
sim.n = 12
sim.t_final = 0.1
sim.dt = 0.002
sim.scheme = imex_exact_damping
sim.seed = 9
init.density = two_cluster
init.separation = 2.0
init.spread = 0.25
study.epsilons = 0.2, 0.1, 0.05
study.p = 2
study.workers = 3
";

fn write_cfg(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("study.cfg");
    fs::write(&path, STUDY_CFG).unwrap();
    path
}

#[test]
fn sweep_produces_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let out = dir.path().join("run");
    let status = alignlab()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    // 3 files per epsilon + rates.json + rates.svg
    assert_eq!(outputs.len(), 3 * 3 + 2);
    for entry in outputs {
        let name = entry["path"].as_str().unwrap();
        assert!(out.join(name).exists(), "missing {name}");
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
    }
    let rates: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    assert_eq!(rates["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_is_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let run = |out: &Path| {
        let status = alignlab()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    };
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    run(&out1);
    run(&out2);
    for name in ["rates.json", "traj_eps_0.1.csv", "entropy_0.05.json"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn exit_codes_follow_contract() {
    let dir = tempfile::tempdir().unwrap();
    // unknown flag -> usage, exit 1
    let status = alignlab().args(["sweep", "--nonsense"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // unknown config key -> exit 1
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, format!("{STUDY_CFG}sim.bogus = 1\n")).unwrap();
    let status = alignlab()
        .args(["verify-energy", "--config"])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // numerical failure (gamma below the contraction threshold) -> exit 2
    let stiff = dir.path().join("stiff.cfg");
    fs::write(&stiff, STUDY_CFG.replace("sim.gamma = 10.0", "sim.gamma = 0.5")).unwrap();
    let status = alignlab()
        .args(["verify-energy", "--config"])
        .arg(&stiff)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn metrics_prints_distance_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "0.0\n1.0\n").unwrap();
    fs::write(&b, "2.0\n3.0\n").unwrap();
    let output = alignlab()
        .args(["metrics", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .args(["--p", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!((json["distance"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn verify_subcommands_pass_on_sane_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let status = alignlab()
        .args(["verify-energy", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let out = dir.path().join("flow");
    let status = alignlab()
        .args(["verify-flow", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--pairs", "20"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("flow_report.json")).unwrap()).unwrap();
    for key in ["p", "T", "grad_sup", "C_min_feasible", "max_ratio_lipschitz"] {
        assert!(report.get(key).is_some(), "flow report missing {key}");
    }

    let coulomb = dir.path().join("coulomb.cfg");
    fs::write(
        &coulomb,
        STUDY_CFG
            .replace("kernel.family = gaussian\nkernel.amplitude = 1.0\nkernel.width = 1.0", "kernel.family = coulomb")
            .replace("sim.t_final = 0.1", "sim.t_final = 0.05")
            .replace("sim.dt = 0.002", "sim.dt = 0.001"),
    )
    .unwrap();
    let status = alignlab()
        .args(["verify-lemma51", "--config"])
        .arg(&coulomb)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let limit_out = dir.path().join("limit");
    let status = alignlab()
        .args(["limit", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&limit_out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(limit_out.join("bounds.json")).unwrap()).unwrap();
    for key in [
        "sup_u",
        "bound_u",
        "sup_grad_u",
        "bound_grad_u",
        "sup_dt_u",
        "bound_dt_u",
        "gamma_threshold",
    ] {
        assert!(bounds.get(key).is_some(), "bounds report missing {key}");
    }
}
