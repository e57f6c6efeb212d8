//! Characteristic flow maps X(t; s, x) of a velocity field, push-forwards of
//! empirical measures, and numerical checks of the Lipschitz-flow bound and
//! the p-Wasserstein stability inequality.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::limit::{eval_velocity_field, LimitTrajectory};
use crate::metrics::{wasserstein_1d, wasserstein_assignment, EmpiricalMeasure};

/// A time-dependent velocity field with a certified (sampled) bound on
/// ‖∇u‖_∞. Backed either by an analytic closure or by interpolation of a
/// limit-solver trajectory.
pub struct VelocityField<'a> {
    dim: usize,
    evaluator: Box<dyn Fn(&[f64], f64) -> Result<Vec<f64>> + 'a>,
    grad_sup: f64,
}

impl<'a> VelocityField<'a> {
    pub fn new<F>(dim: usize, grad_sup: f64, evaluator: F) -> Self
    where
        F: Fn(&[f64], f64) -> Result<Vec<f64>> + 'a,
    {
        VelocityField { dim, evaluator: Box::new(evaluator), grad_sup }
    }

    /// Field interpolated from a limit trajectory: the empirical continuum
    /// formula at the two bracketing snapshots, blended linearly in time.
    pub fn from_limit(traj: &'a LimitTrajectory) -> Self {
        let cfg = &traj.config;
        let dim = cfg.domain.dim();
        let snaps = &traj.snapshots;
        let eval = move |x: &[f64], t: f64| -> Result<Vec<f64>> {
            let last = snaps.len() - 1;
            if t <= snaps[0].time {
                return eval_velocity_field(&snaps[0].positions, &snaps[0].velocities, cfg, x);
            }
            if t >= snaps[last].time {
                return eval_velocity_field(&snaps[last].positions, &snaps[last].velocities, cfg, x);
            }
            let hi = snaps.partition_point(|s| s.time < t).min(last);
            let (a, b) = (&snaps[hi - 1], &snaps[hi]);
            let theta = (t - a.time) / (b.time - a.time);
            let ua = eval_velocity_field(&a.positions, &a.velocities, cfg, x)?;
            let ub = eval_velocity_field(&b.positions, &b.velocities, cfg, x)?;
            Ok(ua
                .iter()
                .zip(&ub)
                .map(|(p, q)| (1.0 - theta) * p + theta * q)
                .collect())
        };
        VelocityField { dim, evaluator: Box::new(eval), grad_sup: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (self.evaluator)(x, t)
    }

    /// Estimates ‖∇u‖_∞ by central finite differences on a 64^d lattice over
    /// the bounding box of `points`, inflated by a 20% margin, sampled at the
    /// given times. Stores the estimate and returns it.
    pub fn estimate_grad_sup(&mut self, points: &[f64], times: &[f64]) -> Result<f64> {
        let dim = self.dim;
        let n = points.len() / dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for i in 0..n {
            for k in 0..dim {
                lo[k] = lo[k].min(points[i * dim + k]);
                hi[k] = hi[k].max(points[i * dim + k]);
            }
        }
        for k in 0..dim {
            let margin = 0.2 * (hi[k] - lo[k]).max(1e-3);
            lo[k] -= margin;
            hi[k] += margin;
        }
        let side = 64usize;
        let total = side.pow(dim as u32);
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut x = vec![0.0; dim];
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..dim {
                let idx = rem % side;
                rem /= side;
                x[k] = lo[k] + (hi[k] - lo[k]) * idx as f64 / (side - 1) as f64;
            }
            for &t in times {
                for b in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[b] += h;
                    xm[b] -= h;
                    let up = self.eval(&xp, t)?;
                    let um = self.eval(&xm, t)?;
                    for a in 0..dim {
                        worst = worst.max(((up[a] - um[a]) / (2.0 * h)).abs());
                    }
                }
            }
        }
        self.grad_sup = worst;
        Ok(worst)
    }
}

fn rk4_steps(field: &VelocityField, x0: &[f64], t0: f64, t1: f64, n_steps: usize) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let dt = (t1 - t0) / n_steps as f64;
    let mut t = t0;
    for step in 0..n_steps {
        let k1 = field.eval(&x, t)?;
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k2 = field.eval(&x2, t + 0.5 * dt)?;
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k3 = field.eval(&x3, t + 0.5 * dt)?;
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
        let k4 = field.eval(&x4, t + dt)?;
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = t0 + (step + 1) as f64 * dt;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step, time: t });
        }
    }
    Ok(x)
}

fn step_count(field: &VelocityField, span: f64) -> usize {
    let rate = field.grad_sup.max(1.0);
    ((span.abs() * rate * 64.0).ceil() as usize).clamp(64, 100_000)
}

/// X(t1; t0, x0) by classical RK4 with a step count scaled to the stiffness
/// of the field. Works backwards in time when t1 < t0.
pub fn flow_map_between(field: &VelocityField, x0: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>> {
    if (t1 - t0).abs() == 0.0 {
        return Ok(x0.to_vec());
    }
    rk4_steps(field, x0, t0, t1, step_count(field, t1 - t0))
}

/// X(T; 0, x0).
pub fn flow_map(field: &VelocityField, x0: &[f64], t_final: f64) -> Result<Vec<f64>> {
    flow_map_between(field, x0, 0.0, t_final)
}

/// Transports every atom along the flow; weights are carried over unchanged.
pub fn pushforward(
    measure: &EmpiricalMeasure,
    field: &VelocityField,
    t_final: f64,
) -> Result<EmpiricalMeasure> {
    pushforward_between(measure, field, 0.0, t_final)
}

pub fn pushforward_between(
    measure: &EmpiricalMeasure,
    field: &VelocityField,
    t0: f64,
    t1: f64,
) -> Result<EmpiricalMeasure> {
    let dim = measure.dim();
    let mut points = Vec::with_capacity(measure.points().len());
    for i in 0..measure.len() {
        points.extend(flow_map_between(field, measure.point(i), t0, t1)?);
    }
    EmpiricalMeasure::new(dim, points, measure.weights().to_vec())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub t_final: f64,
    pub grad_sup: f64,
    /// max over pairs of |X(T;x)−X(T;y)| / |x−y|
    pub max_ratio: f64,
    /// e^{grad_sup · T}
    pub bound: f64,
    pub passed: bool,
}

/// Checks the Gronwall bound |X(T;x)−X(T;y)| ≤ e^{‖∇u‖_∞ T}|x−y| on the
/// supplied sample pairs, with 1e-6 relative slack.
pub fn lipschitz_flow_check(
    field: &VelocityField,
    sample_pairs: &[(Vec<f64>, Vec<f64>)],
    t_final: f64,
) -> Result<LipschitzReport> {
    let bound = (field.grad_sup * t_final).exp();
    let mut max_ratio = 0.0f64;
    let mut passed = true;
    for (x, y) in sample_pairs {
        let dist0: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist0 == 0.0 {
            continue;
        }
        let xt = flow_map(field, x, t_final)?;
        let yt = flow_map(field, y, t_final)?;
        let dist_t: f64 = xt
            .iter()
            .zip(&yt)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let ratio = dist_t / dist0;
        max_ratio = max_ratio.max(ratio);
        if ratio > bound * (1.0 + 1e-6) {
            passed = false;
        }
    }
    Ok(LipschitzReport { t_final, grad_sup: field.grad_sup, max_ratio, bound, passed })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub grad_sup: f64,
    /// Smallest C with d_p(ρ̄(t), ρ(t)) ≤ C·[d_p(ρ̄(0), ρ(0)) + (∫∫|ū−u|²dρ̄)^{1/2}]
    /// over all snapshots.
    pub c_min_feasible: f64,
    pub max_ratio_lipschitz: f64,
}

/// Verifies the d_p stability inequality: ρ̄ is the empirical trajectory with
/// its own velocities ū (e.g. an ε-run), ρ(t) the push-forward of `rho0`
/// through the field. The L² form of the velocity-mismatch term restricts
/// p to [1, 2].
pub fn stability_inequality_check(
    rho_bar_traj: &Trajectory,
    field: &VelocityField,
    rho0: &EmpiricalMeasure,
    p: f64,
) -> Result<StabilityReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::Parameter(format!("stability check needs p in [1, 2], got {p}")));
    }
    let domain = &rho_bar_traj.config.domain;
    let dim = domain.dim();
    let d_p = |mu: &EmpiricalMeasure, nu: &EmpiricalMeasure| -> Result<f64> {
        if dim == 1 && !domain.is_torus() {
            wasserstein_1d(mu, nu, p)
        } else {
            wasserstein_assignment(mu, nu, domain, p)
        }
    };
    let bar_measure = |idx: usize| -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::uniform(dim, rho_bar_traj.snapshots[idx].positions.clone())
    };
    // velocity mismatch (1/N) Σ |ū_i − u(x̄_i)|² per snapshot
    let mut mismatch = Vec::with_capacity(rho_bar_traj.snapshots.len());
    for snap in &rho_bar_traj.snapshots {
        let mut acc = 0.0;
        for i in 0..snap.n() {
            let u = field.eval(snap.position(i), snap.time)?;
            acc += snap
                .velocity(i)
                .iter()
                .zip(&u)
                .map(|(v, u)| (v - u) * (v - u))
                .sum::<f64>();
        }
        mismatch.push(acc / snap.n() as f64);
    }
    let d0 = d_p(&bar_measure(0)?, rho0)?;
    let mut pushed = rho0.clone();
    let mut prev_time = rho_bar_traj.snapshots[0].time;
    let mut integral = 0.0;
    let mut c_min = 0.0f64;
    let mut t_final = prev_time;
    for (idx, snap) in rho_bar_traj.snapshots.iter().enumerate() {
        if idx > 0 {
            let dt = snap.time - prev_time;
            integral += 0.5 * dt * (mismatch[idx - 1] + mismatch[idx]);
            pushed = pushforward_between(&pushed, field, prev_time, snap.time)?;
            prev_time = snap.time;
        }
        let lhs = d_p(&bar_measure(idx)?, &pushed)?;
        let rhs = d0 + integral.sqrt();
        if rhs > 0.0 {
            c_min = c_min.max(lhs / rhs);
        } else if lhs > 1e-8 {
            c_min = f64::INFINITY;
        }
        t_final = snap.time;
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..rho0.len().min(8))
        .flat_map(|i| {
            (i + 1..rho0.len().min(8)).map(move |j| (i, j))
        })
        .map(|(i, j)| (rho0.point(i).to_vec(), rho0.point(j).to_vec()))
        .collect();
    let lip = lipschitz_flow_check(field, &pairs, t_final)?;
    Ok(StabilityReport {
        p,
        t_final,
        grad_sup: field.grad_sup,
        c_min_feasible: c_min,
        max_ratio_lipschitz: lip.max_ratio,
    })
}
