//! Overdamped limit of the damped alignment system. Velocities are slaved to
//! positions through the implicit relation
//!
//!   (γ + (1/N) Σ_j φ(x_i−x_j)) v_i = −(1/N) Σ_j ∇W(x_i−x_j)
//!                                    + (1/N) Σ_j φ(x_i−x_j) v_j,
//!
//! solved by Jacobi fixed-point iteration (a contraction for γ > ‖φ‖_∞), and
//! positions follow the first-order dynamics ẋ_i = v_i integrated with RK2.

use serde::{Deserialize, Serialize};

use crate::dynamics::SimConfig;
use crate::error::{Error, Result};
use crate::kernels::{CommWeight, Domain, InteractionKernel};

/// Positions with their slaved velocities and the certificate of the solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitState {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Componentwise sup-norm residual of the implicit system.
    pub residual: f64,
    pub iterations: usize,
}

impl LimitState {
    pub fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitTrajectory {
    pub config: SimConfig,
    pub snapshots: Vec<LimitState>,
}

/// Outcome of one velocity solve, including the sup-norm gaps between
/// successive Jacobi iterates (used to certify the contraction ratio).
#[derive(Debug, Clone)]
pub struct VelocitySolve {
    pub velocities: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub iterate_gaps: Vec<f64>,
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 10_000;

fn require_contraction(gamma: f64, comm: &CommWeight) -> Result<()> {
    let phi_sup = comm.sup();
    if gamma <= phi_sup {
        return Err(Error::ContractionFailure { gamma, phi_sup });
    }
    Ok(())
}

/// Pairwise data reused across Jacobi sweeps: forces f_i, the scaled
/// communication matrix φ_ij/N, and row sums s_i = (1/N) Σ_j φ_ij.
struct ImplicitSystem {
    dim: usize,
    forces: Vec<f64>,
    phi: Vec<f64>, // n*n, already divided by N
    row_sum: Vec<f64>,
}

impl ImplicitSystem {
    fn assemble(
        positions: &[f64],
        dim: usize,
        domain: &Domain,
        kernel: &InteractionKernel,
        comm: &CommWeight,
    ) -> Result<Self> {
        let n = positions.len() / dim;
        let inv_n = 1.0 / n as f64;
        let mut forces = vec![0.0; n * dim];
        let mut phi = vec![0.0; n * n];
        let mut row_sum = vec![0.0; n];
        let mut r = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        let skip_diag = kernel.excludes_diagonal();
        for i in 0..n {
            let xi = &positions[i * dim..(i + 1) * dim];
            for j in 0..n {
                let xj = &positions[j * dim..(j + 1) * dim];
                domain.displacement_into(xi, xj, &mut r);
                let p = inv_n * comm.eval(&r);
                phi[i * n + j] = p;
                row_sum[i] += p;
                if skip_diag && i == j {
                    continue;
                }
                if kernel.is_coulomb() && i != j && r.iter().all(|c| *c == 0.0) {
                    return Err(Error::KernelSingularity { indices: Some((i, j)) });
                }
                kernel.grad_into(&r, &mut g).map_err(|e| match e {
                    Error::KernelSingularity { .. } => {
                        Error::KernelSingularity { indices: Some((i, j)) }
                    }
                    other => other,
                })?;
                for k in 0..dim {
                    forces[i * dim + k] += inv_n * g[k];
                }
            }
        }
        Ok(ImplicitSystem { dim, forces, phi, row_sum })
    }

    fn n(&self) -> usize {
        self.row_sum.len()
    }

    /// One Jacobi sweep: v_i ← [−f_i + Σ_j (φ_ij/N) v_j] / (γ + s_i).
    fn sweep(&self, gamma: f64, v: &[f64], out: &mut [f64]) {
        let (n, dim) = (self.n(), self.dim);
        for i in 0..n {
            for k in 0..dim {
                let mut acc = -self.forces[i * dim + k];
                for j in 0..n {
                    acc += self.phi[i * n + j] * v[j * dim + k];
                }
                out[i * dim + k] = acc / (gamma + self.row_sum[i]);
            }
        }
    }

    /// Componentwise residual of the implicit linear system.
    fn residual(&self, gamma: f64, v: &[f64]) -> f64 {
        let (n, dim) = (self.n(), self.dim);
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in 0..dim {
                let mut rhs = -self.forces[i * dim + k];
                for j in 0..n {
                    rhs += self.phi[i * n + j] * v[j * dim + k];
                }
                let lhs = (gamma + self.row_sum[i]) * v[i * dim + k];
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }
}

/// Solves the implicit velocity relation by fixed-point iteration. `guess`
/// warm-starts the iteration (zeros otherwise).
pub fn solve_velocity(
    positions: &[f64],
    cfg: &SimConfig,
    tol: f64,
    guess: Option<&[f64]>,
) -> Result<VelocitySolve> {
    require_contraction(cfg.gamma, &cfg.comm)?;
    let dim = cfg.domain.dim();
    let system = ImplicitSystem::assemble(positions, dim, &cfg.domain, &cfg.kernel, &cfg.comm)?;
    let m = positions.len();
    let mut v = match guess {
        Some(g) if g.len() == m => g.to_vec(),
        _ => vec![0.0; m],
    };
    let mut next = vec![0.0; m];
    let mut gaps = Vec::new();
    for it in 0..MAX_ITER {
        system.sweep(cfg.gamma, &v, &mut next);
        let gap = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        gaps.push(gap);
        std::mem::swap(&mut v, &mut next);
        let residual = system.residual(cfg.gamma, &v);
        if residual <= tol {
            return Ok(VelocitySolve {
                velocities: v,
                iterations: it + 1,
                residual,
                iterate_gaps: gaps,
            });
        }
    }
    Err(Error::IterationLimit {
        max_iter: MAX_ITER,
        residual: system.residual(cfg.gamma, &v),
    })
}

/// Continuum velocity field evaluated at an arbitrary point from the
/// empirical measure carried by (positions, velocities):
/// u(x) = [−(∇W⋆ρ)(x) + (φ⋆(ρu))(x)] / (γ + (φ⋆ρ)(x)).
/// At a particle position this reproduces that particle's solved velocity.
pub fn eval_velocity_field(
    positions: &[f64],
    velocities: &[f64],
    cfg: &SimConfig,
    x: &[f64],
) -> Result<Vec<f64>> {
    let dim = cfg.domain.dim();
    let n = positions.len() / dim;
    let inv_n = 1.0 / n as f64;
    let mut grad_conv = vec![0.0; dim];
    let mut phi_u = vec![0.0; dim];
    let mut phi_rho = 0.0;
    let mut r = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for j in 0..n {
        let xj = &positions[j * dim..(j + 1) * dim];
        cfg.domain.displacement_into(x, xj, &mut r);
        let phi = cfg.comm.eval(&r);
        phi_rho += inv_n * phi;
        if cfg.kernel.excludes_diagonal() && r.iter().all(|c| *c == 0.0) {
            // evaluation point coincides with a particle: the singular
            // self-term is excluded, matching the particle-side convention
        } else {
            cfg.kernel.grad_into(&r, &mut g)?;
            for k in 0..dim {
                grad_conv[k] += inv_n * g[k];
            }
        }
        for k in 0..dim {
            phi_u[k] += inv_n * phi * velocities[j * dim + k];
        }
    }
    Ok((0..dim)
        .map(|k| (-grad_conv[k] + phi_u[k]) / (cfg.gamma + phi_rho))
        .collect())
}

/// Integrates ẋ = v(x) with explicit midpoint RK2, re-solving the implicit
/// velocity system at each stage (warm-started from the previous solve).
pub fn simulate_limit(cfg: &SimConfig, init_positions: &[f64]) -> Result<LimitTrajectory> {
    cfg.validate()?;
    require_contraction(cfg.gamma, &cfg.comm)?;
    let dim = cfg.domain.dim();
    if init_positions.len() != cfg.n * dim {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates for N = {}, dim = {}",
            init_positions.len(),
            cfg.n,
            dim
        )));
    }
    let tol = DEFAULT_TOL;
    let n_steps = cfg.num_steps();
    let stride = cfg.snapshot_stride_effective();
    let mut positions = init_positions.to_vec();
    for chunk in positions.chunks_mut(dim) {
        cfg.domain.wrap(chunk);
    }
    let mut time = 0.0;
    let mut solve = solve_velocity(&positions, cfg, tol, None)?;
    let mut snapshots = vec![LimitState {
        time,
        dim,
        positions: positions.clone(),
        velocities: solve.velocities.clone(),
        residual: solve.residual,
        iterations: solve.iterations,
    }];
    for k in 0..n_steps {
        let dt = if k + 1 == n_steps { cfg.t_final - time } else { cfg.dt };
        // midpoint stage
        let mut mid: Vec<f64> = positions
            .iter()
            .zip(&solve.velocities)
            .map(|(x, v)| x + 0.5 * dt * v)
            .collect();
        for chunk in mid.chunks_mut(dim) {
            cfg.domain.wrap(chunk);
        }
        let stage = solve_velocity(&mid, cfg, tol, Some(&solve.velocities))?;
        for (x, v) in positions.iter_mut().zip(&stage.velocities) {
            *x += dt * v;
        }
        for chunk in positions.chunks_mut(dim) {
            cfg.domain.wrap(chunk);
        }
        time += dt;
        if positions.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step: k + 1, time });
        }
        solve = solve_velocity(&positions, cfg, tol, Some(&stage.velocities))?;
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            snapshots.push(LimitState {
                time,
                dim,
                positions: positions.clone(),
                velocities: solve.velocities.clone(),
                residual: solve.residual,
                iterations: solve.iterations,
            });
        }
    }
    Ok(LimitTrajectory { config: cfg.clone(), snapshots })
}

/// Empirical sups of u, ∇u, ∂_t u against the closed-form a-priori bounds
/// assembled from the kernel constants (total mass 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VelocityBoundsReport {
    pub sup_u: f64,
    pub bound_u: f64,
    pub sup_grad_u: f64,
    pub bound_grad_u: f64,
    pub sup_dt_u: f64,
    pub bound_dt_u: f64,
    /// The contraction threshold ‖φ‖_∞ ‖ρ‖_{L¹} that γ must exceed.
    pub gamma_threshold: f64,
}

/// Assembles the three a-priori bounds from certified kernel constants:
///   ‖u‖_∞      ≤ sup|∇W| / (γ − ‖φ‖_∞),
///   ‖∇u‖_∞     ≤ (1 + Lip(φ)/γ)(1/γ)[ ‖∇W‖_{W^{1,∞}} + ‖φ‖_{W^{1,∞}} ‖u‖_∞ ],
///   ‖∂_t u‖_∞  ≤ [Lip(∇W)‖u‖_∞ + 2‖φ‖_{W^{1,∞}}‖u‖²_{W^{1,∞}}]/(γ − ‖φ‖_∞)
///               + Lip(φ)‖u‖_∞ (sup|∇W| + ‖φ‖_∞‖u‖_∞)/(γ(γ − ‖φ‖_∞)),
/// with ‖·‖_{W^{1,∞}} taken as sup + Lip.
pub fn assemble_bounds(
    kernel: &InteractionKernel,
    comm: &CommWeight,
    gamma: f64,
) -> Result<(f64, f64, f64)> {
    require_contraction(gamma, comm)?;
    let kc = kernel.grad_constants()?;
    let lip_grad_w = kc
        .lip
        .ok_or(Error::NoFiniteConstant("Lipschitz constant of the kernel gradient"))?;
    let phi_sup = comm.sup();
    let phi_lip = comm.lip();
    let phi_w1 = phi_sup + phi_lip;
    let bound_u = kc.sup / (gamma - phi_sup);
    let grad_w_w1 = kc.sup + lip_grad_w;
    let bound_grad_u = (1.0 + phi_lip / gamma) / gamma * (grad_w_w1 + phi_w1 * bound_u);
    let u_w1 = bound_u + bound_grad_u;
    let bound_dt_u = (lip_grad_w * bound_u + 2.0 * phi_w1 * u_w1 * u_w1) / (gamma - phi_sup)
        + phi_lip * bound_u * (kc.sup + phi_sup * bound_u) / (gamma * (gamma - phi_sup));
    Ok((bound_u, bound_grad_u, bound_dt_u))
}

/// Measures sup |u|, sup |∇u| (spatial finite differences of the interpolated
/// field at particle positions) and sup |∂_t u| (differences between
/// consecutive snapshots at frozen sample points), then compares them with
/// the assembled bounds.
pub fn velocity_bounds_report(traj: &LimitTrajectory, cfg: &SimConfig) -> Result<VelocityBoundsReport> {
    require_contraction(cfg.gamma, &cfg.comm)?;
    let (bound_u, bound_grad_u, bound_dt_u) = assemble_bounds(&cfg.kernel, &cfg.comm, cfg.gamma)?;
    let dim = cfg.domain.dim();
    let h = 1e-5;
    let mut sup_u = 0.0f64;
    let mut sup_grad_u = 0.0f64;
    let mut sup_dt_u = 0.0f64;
    for snap in &traj.snapshots {
        for i in 0..snap.n() {
            for k in 0..dim {
                sup_u = sup_u.max(snap.velocity(i)[k].abs());
            }
            // central finite differences of the continuum field around x_i
            for k in 0..dim {
                let mut xp = snap.position(i).to_vec();
                let mut xm = xp.clone();
                xp[k] += h;
                xm[k] -= h;
                let up = eval_velocity_field(&snap.positions, &snap.velocities, cfg, &xp)?;
                let um = eval_velocity_field(&snap.positions, &snap.velocities, cfg, &xm)?;
                for m in 0..dim {
                    sup_grad_u = sup_grad_u.max(((up[m] - um[m]) / (2.0 * h)).abs());
                }
            }
        }
    }
    for pair in traj.snapshots.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.time - a.time;
        if dt <= 0.0 {
            continue;
        }
        for i in 0..a.n() {
            let x = a.position(i);
            let ua = eval_velocity_field(&a.positions, &a.velocities, cfg, x)?;
            let ub = eval_velocity_field(&b.positions, &b.velocities, cfg, x)?;
            for m in 0..dim {
                sup_dt_u = sup_dt_u.max(((ub[m] - ua[m]) / dt).abs());
            }
        }
    }
    Ok(VelocityBoundsReport {
        sup_u,
        bound_u,
        sup_grad_u,
        bound_grad_u,
        sup_dt_u,
        bound_dt_u,
        gamma_threshold: cfg.comm.sup(),
    })
}
