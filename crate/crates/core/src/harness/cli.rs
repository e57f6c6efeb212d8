//! Command-line front end. Exit codes: 0 success, 1 configuration error
//! (including unknown flags), 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::dynamics::{simulate, Trajectory};
use crate::entropy::{entropy_breakdown, material_derivative_field};
use crate::error::{Error, Result};
use crate::flow::{lipschitz_flow_check, VelocityField};
use crate::harness::config::LoadedConfig;
use crate::harness::manifest::Manifest;
use crate::harness::rng::Rng;
use crate::harness::study::{
    assemble_report, sweep_runs, well_prepared_init, EpsilonRun, RateReport,
};
use crate::limit::{simulate_limit, velocity_bounds_report, LimitTrajectory};
use crate::metrics::{wasserstein_1d, wasserstein_assignment, EmpiricalMeasure};

#[derive(Parser)]
#[command(name = "alignlab", version, about = "Damped Euler-alignment particle laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stiff ε-particle system and export trajectory + energy ledger.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the overdamped limit system and export trajectory + a-priori bounds.
    Limit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ε-sweep convergence study with rate fits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wasserstein distance between two point clouds read from CSV files.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Lipschitz-flow and d_p stability checks against the limit field.
    VerifyFlow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
    },
    /// Discrete energy-balance residual check.
    VerifyEnergy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        bound: f64,
    },
    /// Modulated-energy (1-D Coulomb) identity refinement check.
    VerifyLemma51 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1.8)]
        min_ratio: f64,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::Parameter(_)
        | Error::Unsupported(_)
        | Error::DimensionMismatch(_)
        | Error::SizeLimit(_)
        | Error::Io(_)
        | Error::Json(_) => 1,
        _ => 2,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes; anything else is a usage error
            let ok = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if ok { 0 } else { 1 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Limit { config, out } => cmd_limit(&config, &out),
        Command::Sweep { config, out } => cmd_sweep(&config, &out),
        Command::Metrics { a, b, p } => cmd_metrics(&a, &b, p),
        Command::VerifyFlow { config, out, pairs } => cmd_verify_flow(&config, &out, pairs),
        Command::VerifyEnergy { config, bound } => cmd_verify_energy(&config, bound),
        Command::VerifyLemma51 { config, min_ratio } => cmd_verify_lemma51(&config, min_ratio),
    }
}

fn load(path: &Path) -> Result<(LoadedConfig, String)> {
    let text = fs::read_to_string(path)?;
    Ok((crate::harness::config::load_str(&text)?, text))
}

fn eps_label(eps: f64) -> String {
    format!("{eps}")
}

fn write_traj_csv(path: &Path, snapshots: &[(f64, usize, &[f64], &[f64])], dim: usize) -> Result<()> {
    let mut text = String::from("t,particle");
    for k in 0..dim {
        text.push_str(&format!(",x{k}"));
    }
    for k in 0..dim {
        text.push_str(&format!(",v{k}"));
    }
    text.push('\n');
    for (t, n, positions, velocities) in snapshots {
        for i in 0..*n {
            text.push_str(&format!("{t:.17e},{i}"));
            for k in 0..dim {
                text.push_str(&format!(",{:.17e}", positions[i * dim + k]));
            }
            for k in 0..dim {
                text.push_str(&format!(",{:.17e}", velocities[i * dim + k]));
            }
            text.push('\n');
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn traj_rows(traj: &Trajectory) -> Vec<(f64, usize, &[f64], &[f64])> {
    traj.snapshots
        .iter()
        .map(|s| (s.time, s.n(), s.positions.as_slice(), s.velocities.as_slice()))
        .collect()
}

fn limit_rows(traj: &LimitTrajectory) -> Vec<(f64, usize, &[f64], &[f64])> {
    traj.snapshots
        .iter()
        .map(|s| (s.time, s.n(), s.positions.as_slice(), s.velocities.as_slice()))
        .collect()
}

fn write_energy_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut text = String::from("t,kinetic,potential,damping_diss,alignment_diss,residual\n");
    for rec in &traj.energy_ledger {
        text.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            rec.t, rec.kinetic, rec.potential, rec.damping_diss, rec.alignment_diss, rec.residual
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct EntropyRow {
    t: f64,
    rel_kinetic: f64,
    #[serde(rename = "I2")]
    i2: f64,
    #[serde(rename = "I3")]
    i3: f64,
    #[serde(rename = "I4")]
    i4: f64,
    #[serde(rename = "I5")]
    i5: f64,
    align_diss: f64,
}

/// Relative-entropy breakdown along a paired run; ∂_t u at the first/last
/// snapshot uses the one-sided neighbor difference.
fn entropy_rows(run: &EpsilonRun, cfg: &crate::dynamics::SimConfig) -> Result<Vec<EntropyRow>> {
    let snaps = &run.limit.snapshots;
    let h = 1e-5;
    let mut rows = Vec::with_capacity(snaps.len());
    for (idx, (s_eps, s_lim)) in run.trajectory.snapshots.iter().zip(snaps).enumerate() {
        let prev = &snaps[idx.saturating_sub(1)];
        let next = &snaps[(idx + 1).min(snaps.len() - 1)];
        let e_at = material_derivative_field(
            (&prev.positions, &prev.velocities, prev.time),
            (&s_lim.positions, &s_lim.velocities),
            (&next.positions, &next.velocities, next.time),
            cfg,
            h,
        );
        let breakdown =
            entropy_breakdown(s_eps, &s_lim.positions, &s_lim.velocities, &e_at, cfg, h)?;
        rows.push(EntropyRow {
            t: s_eps.time,
            rel_kinetic: breakdown.rel_kinetic,
            i2: breakdown.i2,
            i3: breakdown.i3,
            i4: breakdown.i4,
            i5: breakdown.i5,
            align_diss: breakdown.alignment_rel_diss,
        });
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_simulate(config: &Path, out: &Path) -> Result<i32> {
    let (loaded, text) = load(config)?;
    fs::create_dir_all(out)?;
    let cfg = loaded.sim;
    let (init, _) = well_prepared_init(&loaded.density, cfg.n, cfg.seed, &cfg)?;
    let traj = simulate(&cfg, &init)?;
    let label = eps_label(cfg.epsilon);
    let traj_path = out.join(format!("traj_eps_{label}.csv"));
    let energy_path = out.join(format!("energy_{label}.csv"));
    write_traj_csv(&traj_path, &traj_rows(&traj), cfg.domain.dim())?;
    write_energy_csv(&energy_path, &traj)?;
    let mut manifest = Manifest::new("simulate", cfg.seed, &text);
    manifest.record(out, &traj_path)?;
    manifest.record(out, &energy_path)?;
    manifest.write(out)?;
    Ok(0)
}

fn cmd_limit(config: &Path, out: &Path) -> Result<i32> {
    let (loaded, text) = load(config)?;
    fs::create_dir_all(out)?;
    let cfg = loaded.sim;
    let (_, positions) = well_prepared_init(&loaded.density, cfg.n, cfg.seed, &cfg)?;
    let traj = simulate_limit(&cfg, &positions)?;
    let bounds = velocity_bounds_report(&traj, &cfg)?;
    let traj_path = out.join("traj_limit.csv");
    let bounds_path = out.join("bounds.json");
    write_traj_csv(&traj_path, &limit_rows(&traj), cfg.domain.dim())?;
    write_json(&bounds_path, &bounds)?;
    let mut manifest = Manifest::new("limit", cfg.seed, &text);
    manifest.record(out, &traj_path)?;
    manifest.record(out, &bounds_path)?;
    manifest.write(out)?;
    Ok(0)
}

fn cmd_sweep(config: &Path, out: &Path) -> Result<i32> {
    let (loaded, text) = load(config)?;
    fs::create_dir_all(out)?;
    let study = loaded.study_spec()?;
    let mut manifest = Manifest::new("sweep", study.base.seed, &text);
    let outcomes = sweep_runs(&study);
    let mut runs: Vec<EpsilonRun> = Vec::new();
    let mut first_err: Option<Error> = None;
    for outcome in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(err) if first_err.is_none() => first_err = Some(err),
            Err(_) => {}
        }
    }
    for run in &runs {
        let mut cfg = study.base.clone();
        cfg.epsilon = run.row.epsilon;
        let label = eps_label(run.row.epsilon);
        let traj_path = out.join(format!("traj_eps_{label}.csv"));
        let energy_path = out.join(format!("energy_{label}.csv"));
        let entropy_path = out.join(format!("entropy_{label}.json"));
        write_traj_csv(&traj_path, &traj_rows(&run.trajectory), cfg.domain.dim())?;
        write_energy_csv(&energy_path, &run.trajectory)?;
        write_json(&entropy_path, &entropy_rows(run, &cfg)?)?;
        manifest.record(out, &traj_path)?;
        manifest.record(out, &energy_path)?;
        manifest.record(out, &entropy_path)?;
    }
    if let Some(err) = first_err {
        // persist what succeeded before reporting the failure
        manifest.write(out)?;
        return Err(err);
    }
    let report = assemble_report(&study, &runs)?;
    let rates_path = out.join("rates.json");
    write_json(&rates_path, &report)?;
    manifest.record(out, &rates_path)?;
    let svg_path = out.join("rates.svg");
    fs::write(&svg_path, rates_svg(&report))?;
    manifest.record(out, &svg_path)?;
    manifest.write(out)?;
    Ok(0)
}

/// Minimal log–log plot of every functional over ε.
fn rates_svg(report: &RateReport) -> String {
    let (w, h, m) = (640.0f64, 440.0f64, 60.0f64);
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for key in report.slopes.keys() {
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter_map(|row| {
                let v = *row.values.get(key)?;
                (v > 0.0).then(|| (row.epsilon.ln(), v.ln()))
            })
            .collect();
        if pts.len() >= 2 {
            series.push((key, pts));
        }
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    if series.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\">all functionals exactly zero</text>\n</svg>\n");
        return svg;
    }
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x0, x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| {
        (a.min(*x), b.max(*x))
    });
    let (y0, y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, y)| {
        (a.min(*y), b.max(*y))
    });
    let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * m);
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log eps</text>\n\
         <text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\">log value</text>\n",
        h - m,
        w - m,
        h - m,
        h - m,
        w / 2.0,
        h - 20.0,
        h / 2.0,
        h / 2.0
    ));
    let palette = ["#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#b9770e", "#283747"];
    for (idx, (key, pts)) in series.iter().enumerate() {
        let color = palette[idx % palette.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        for (x, y) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(*x),
                sy(*y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{key}</text>\n",
            w - m + 5.0 - 120.0,
            m + 16.0 * idx as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn read_points_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut dim = 0usize;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        // allow a header row
        if lineno == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let row: Vec<f64> = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "{}:{}: `{f}` is not a number",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if dim == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(Error::InvalidConfig(format!(
                "{}:{}: expected {dim} columns, found {}",
                path.display(),
                lineno + 1,
                row.len()
            )));
        }
        points.extend(row);
    }
    if dim == 0 {
        return Err(Error::InvalidConfig(format!("{}: no points", path.display())));
    }
    Ok((dim, points))
}

fn cmd_metrics(a: &Path, b: &Path, p: f64) -> Result<i32> {
    let (dim_a, pts_a) = read_points_csv(a)?;
    let (dim_b, pts_b) = read_points_csv(b)?;
    if dim_a != dim_b {
        return Err(Error::DimensionMismatch(format!(
            "point clouds have dimensions {dim_a} and {dim_b}"
        )));
    }
    let mu = EmpiricalMeasure::uniform(dim_a, pts_a)?;
    let nu = EmpiricalMeasure::uniform(dim_b, pts_b)?;
    let domain = crate::kernels::Domain::euclidean(dim_a)?;
    let distance = if dim_a == 1 {
        wasserstein_1d(&mu, &nu, p)?
    } else {
        wasserstein_assignment(&mu, &nu, &domain, p)?
    };
    #[derive(Serialize)]
    struct MetricsOut {
        p: f64,
        dim: usize,
        distance: f64,
    }
    println!("{}", serde_json::to_string(&MetricsOut { p, dim: dim_a, distance })?);
    Ok(0)
}

#[derive(Serialize)]
struct FlowReport {
    p: f64,
    #[serde(rename = "T")]
    t_final: f64,
    grad_sup: f64,
    #[serde(rename = "C_min_feasible")]
    c_min_feasible: f64,
    max_ratio_lipschitz: f64,
    lipschitz_passed: bool,
}

fn cmd_verify_flow(config: &Path, out: &Path, pairs: usize) -> Result<i32> {
    let (loaded, text) = load(config)?;
    fs::create_dir_all(out)?;
    let cfg = loaded.sim;
    let p = loaded.study.as_ref().map(|s| s.p).unwrap_or(2.0);
    let (init, positions) = well_prepared_init(&loaded.density, cfg.n, cfg.seed, &cfg)?;
    let limit = simulate_limit(&cfg, &positions)?;
    let mut field = VelocityField::from_limit(&limit);
    let sample_points: Vec<f64> = limit
        .snapshots
        .iter()
        .flat_map(|s| s.positions.iter().copied())
        .collect();
    let times: Vec<f64> = limit.snapshots.iter().map(|s| s.time).collect();
    field.estimate_grad_sup(&sample_points, &times)?;
    let dim = cfg.domain.dim();
    let (lo, hi) = bounding_box(&positions, dim);
    let mut rng = Rng::new(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let sample_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| {
            let draw = |rng: &mut Rng| {
                (0..dim).map(|k| rng.uniform_in(lo[k], hi[k])).collect::<Vec<f64>>()
            };
            (draw(&mut rng), draw(&mut rng))
        })
        .collect();
    let lipschitz = lipschitz_flow_check(&field, &sample_pairs, cfg.t_final)?;
    let traj = simulate(&cfg, &init)?;
    let rho0 = EmpiricalMeasure::uniform(dim, positions.clone())?;
    let stability = crate::flow::stability_inequality_check(&traj, &field, &rho0, p)?;
    let report = FlowReport {
        p,
        t_final: cfg.t_final,
        grad_sup: field.grad_sup(),
        c_min_feasible: stability.c_min_feasible,
        max_ratio_lipschitz: lipschitz.max_ratio,
        lipschitz_passed: lipschitz.passed,
    };
    let report_path = out.join("flow_report.json");
    write_json(&report_path, &report)?;
    let mut manifest = Manifest::new("verify-flow", cfg.seed, &text);
    manifest.record(out, &report_path)?;
    manifest.write(out)?;
    println!("{}", serde_json::to_string(&report)?);
    if report.lipschitz_passed {
        Ok(0)
    } else {
        eprintln!("error: Lipschitz flow bound violated");
        Ok(2)
    }
}

fn bounding_box(points: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for chunk in points.chunks(dim) {
        for k in 0..dim {
            lo[k] = lo[k].min(chunk[k]);
            hi[k] = hi[k].max(chunk[k]);
        }
    }
    for k in 0..dim {
        let margin = 0.1 * (hi[k] - lo[k]).max(1e-3);
        lo[k] -= margin;
        hi[k] += margin;
    }
    (lo, hi)
}

fn cmd_verify_energy(config: &Path, bound: f64) -> Result<i32> {
    let (loaded, _) = load(config)?;
    let cfg = loaded.sim;
    let (init, _) = well_prepared_init(&loaded.density, cfg.n, cfg.seed, &cfg)?;
    let traj = simulate(&cfg, &init)?;
    let max_residual = traj
        .energy_ledger
        .iter()
        .map(|r| r.residual)
        .fold(0.0f64, f64::max);
    #[derive(Serialize)]
    struct EnergyOut {
        max_residual: f64,
        bound: f64,
        steps: usize,
        passed: bool,
    }
    let summary = EnergyOut {
        max_residual,
        bound,
        steps: traj.energy_ledger.len(),
        passed: max_residual <= bound,
    };
    println!("{}", serde_json::to_string(&summary)?);
    if summary.passed {
        Ok(0)
    } else {
        eprintln!("error: energy residual {max_residual} exceeds bound {bound}");
        Ok(2)
    }
}

fn cmd_verify_lemma51(config: &Path, min_ratio: f64) -> Result<i32> {
    let (loaded, _) = load(config)?;
    let run = |dt: f64| -> Result<f64> {
        let mut cfg = loaded.sim.clone();
        cfg.dt = dt;
        let (init, positions) = well_prepared_init(&loaded.density, cfg.n, cfg.seed, &cfg)?;
        let traj = simulate(&cfg, &init)?;
        let limit = simulate_limit(&cfg, &positions)?;
        let residuals = crate::entropy::lemma51_residual(&traj, &limit)?;
        Ok(residuals.iter().fold(0.0f64, |a, b| a.max(*b)))
    };
    let coarse = run(loaded.sim.dt)?;
    let fine = run(loaded.sim.dt / 2.0)?;
    let ratio = if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    #[derive(Serialize)]
    struct Lemma51Out {
        dt: f64,
        max_residual_coarse: f64,
        max_residual_fine: f64,
        refinement_ratio: f64,
        min_ratio: f64,
        passed: bool,
    }
    let summary = Lemma51Out {
        dt: loaded.sim.dt,
        max_residual_coarse: coarse,
        max_residual_fine: fine,
        refinement_ratio: ratio,
        min_ratio,
        passed: ratio >= min_ratio,
    };
    println!("{}", serde_json::to_string(&summary)?);
    if summary.passed {
        Ok(0)
    } else {
        eprintln!("error: refinement ratio {ratio} below {min_ratio}");
        Ok(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM_CFG: &str = "\
domain.kind = euclidean
domain.dim = 1
kernel.family = gaussian
kernel.amplitude = 1.0
kernel.width = 1.0
comm.family = cucker_smale
comm.k = 1.0
comm.beta = 0.5
sim.epsilon = 0.1
sim.gamma = 8.0
sim.n = 8
sim.t_final = 0.1
sim.dt = 0.002
sim.scheme = imex_exact_damping
sim.seed = 7
init.density = uniform
init.lo = -1.0
init.hi = 1.0
";

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("alignlab")
            .chain(list.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn unknown_flag_exits_one() {
        assert_eq!(run(args(&["simulate", "--bogus"])), 1);
        assert_eq!(run(args(&["no-such-subcommand"])), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(args(&["--help"])), 0);
    }

    #[test]
    fn simulate_writes_manifest_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("sim.cfg");
        fs::write(&cfg, SIM_CFG).unwrap();
        let out = dir.path().join("run");
        let code = run(args(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        assert!(out.join("traj_eps_0.1.csv").exists());
        assert!(out.join("energy_0.1.csv").exists());
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
        let header = fs::read_to_string(out.join("traj_eps_0.1.csv")).unwrap();
        assert!(header.starts_with("t,particle,x0,v0\n"));
    }

    #[test]
    fn bad_config_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("sim.cfg");
        fs::write(&cfg, "sim.bogus_key = 1\n").unwrap();
        let code = run(args(&[
            "verify-energy",
            "--config",
            cfg.to_str().unwrap(),
        ]));
        assert_eq!(code, 1);
    }

    #[test]
    fn verify_energy_passes_small_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("sim.cfg");
        fs::write(&cfg, SIM_CFG).unwrap();
        let code = run(args(&["verify-energy", "--config", cfg.to_str().unwrap()]));
        assert_eq!(code, 0);
    }

    #[test]
    fn metrics_known_distance() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        fs::write(&a, "0.0\n1.0\n").unwrap();
        fs::write(&b, "2.0\n3.0\n").unwrap();
        // translation by 2: d_p = 2 for every p
        let code = run(args(&[
            "metrics",
            "--a",
            a.to_str().unwrap(),
            "--b",
            b.to_str().unwrap(),
            "--p",
            "2",
        ]));
        assert_eq!(code, 0);
    }

    #[test]
    fn point_cloud_parser_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        fs::write(&a, "0.0,1.0\n2.0\n").unwrap();
        assert!(read_points_csv(&a).is_err());
    }

    #[test]
    fn rates_svg_has_series() {
        use crate::harness::study::{fit_rate, EpsilonRow, RateReport};
        use std::collections::BTreeMap;
        let rows: Vec<EpsilonRow> = [0.2f64, 0.1, 0.05]
            .iter()
            .map(|&e| {
                let mut values = BTreeMap::new();
                values.insert("wass_sup".to_string(), e * e);
                EpsilonRow { epsilon: e, values }
            })
            .collect();
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.values["wass_sup"])).collect();
        let mut slopes = BTreeMap::new();
        slopes.insert("wass_sup".to_string(), fit_rate(&pts).unwrap());
        let report = RateReport { p: 2.0, seed: 0, rows, slopes };
        let svg = rates_svg(&report);
        assert!(svg.contains("polyline"));
        assert!(svg.contains("wass_sup"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
