//! Error functionals between a stiff ε-run and the overdamped limit:
//! relative kinetic energy, the I₂–I₅ terms of the relative-entropy balance,
//! the alignment relative dissipation, and the 1-D Coulomb modulated-energy
//! derivative identity.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ParticleState, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::limit::{eval_velocity_field, LimitTrajectory};
use crate::metrics::{cramer_energy_1d, EmpiricalMeasure};

/// A velocity field sampled pointwise, e.g. the limit solver's continuum
/// formula or an analytic test field.
pub type Field<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// (1/N) Σ_i |v_i^ε − u(x_i^ε)|².
pub fn relative_kinetic(state_eps: &ParticleState, u_field: &Field) -> Result<f64> {
    let n = state_eps.n();
    let mut acc = 0.0;
    for i in 0..n {
        let u = u_field(state_eps.position(i))?;
        acc += state_eps
            .velocity(i)
            .iter()
            .zip(&u)
            .map(|(v, u)| (v - u) * (v - u))
            .sum::<f64>();
    }
    Ok(acc / n as f64)
}

/// Instantaneous integrands of the relative-entropy balance, discretized
/// against the empirical measure ρ^ε (mass 1/N per particle). Signs follow
/// the right-hand side of the balance:
///   I₂ = −(1/N) Σ_i ∇u(x_i) : w_i ⊗ w_i,
///   I₃ = −(1/(εN)) Σ_i w_i · [∇W ⋆ (ρ^ε − ρ)](x_i),
///   I₄ = −(1/N) Σ_i w_i · e(x_i),
///   I₅ = (1/(εN)) Σ_i Σ_y φ(x_i−y)(ρ^ε−ρ)(y) w_i·(u(y)−u(x_i)),
/// with w_i = v_i^ε − u(x_i^ε).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelativeEntropyBreakdown {
    pub rel_kinetic: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub i5: f64,
    pub alignment_rel_diss: f64,
}

/// Evaluates the breakdown at one time slice. The limit solution is carried
/// by its particle discretization (`limit_positions`, `limit_velocities`);
/// u(x) is the continuum interpolation of that data, ∇u comes from central
/// differences with step `h`, and `e_at` supplies e = ∂_t u + (u·∇)u.
pub fn entropy_breakdown(
    state_eps: &ParticleState,
    limit_positions: &[f64],
    limit_velocities: &[f64],
    e_at: &Field,
    cfg: &SimConfig,
    h: f64,
) -> Result<RelativeEntropyBreakdown> {
    if !(h > 0.0) || !h.is_finite() || h < 1e-300 {
        return Err(Error::Parameter(format!("finite-difference step h = {h}")));
    }
    let dim = state_eps.dim;
    let n = state_eps.n();
    let m = limit_positions.len() / dim;
    let inv_n = 1.0 / n as f64;
    let inv_m = 1.0 / m as f64;
    let u_at = |x: &[f64]| eval_velocity_field(limit_positions, limit_velocities, cfg, x);

    // w_i = v_i^ε − u(x_i^ε)
    let mut w = vec![0.0; n * dim];
    let mut u_at_eps = vec![0.0; n * dim];
    for i in 0..n {
        let u = u_at(state_eps.position(i))?;
        for k in 0..dim {
            u_at_eps[i * dim + k] = u[k];
            w[i * dim + k] = state_eps.velocity(i)[k] - u[k];
        }
    }
    let rel_kinetic = inv_n * w.iter().map(|x| x * x).sum::<f64>();

    // I₂: ∇u via central differences; ∇u : w⊗w = Σ_{a,b} ∂_b u_a w_a w_b
    let mut i2 = 0.0;
    for i in 0..n {
        let x = state_eps.position(i);
        for b in 0..dim {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[b] += h;
            xm[b] -= h;
            let up = u_at(&xp)?;
            let um = u_at(&xm)?;
            for a in 0..dim {
                let dub_ua = (up[a] - um[a]) / (2.0 * h);
                i2 -= inv_n * dub_ua * w[i * dim + a] * w[i * dim + b];
            }
        }
    }

    // I₃: ∇W ⋆ (ρ^ε − ρ) at the ε-particles
    let mut i3 = 0.0;
    {
        let mut r = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for i in 0..n {
            let x = state_eps.position(i);
            let mut conv = vec![0.0; dim];
            for j in 0..n {
                cfg.domain.displacement_into(x, state_eps.position(j), &mut r);
                if cfg.kernel.excludes_diagonal() && r.iter().all(|c| *c == 0.0) {
                    continue;
                }
                cfg.kernel.grad_into(&r, &mut g)?;
                for k in 0..dim {
                    conv[k] += inv_n * g[k];
                }
            }
            for j in 0..m {
                cfg.domain
                    .displacement_into(x, &limit_positions[j * dim..(j + 1) * dim], &mut r);
                if cfg.kernel.excludes_diagonal() && r.iter().all(|c| *c == 0.0) {
                    continue;
                }
                cfg.kernel.grad_into(&r, &mut g)?;
                for k in 0..dim {
                    conv[k] -= inv_m * g[k];
                }
            }
            for k in 0..dim {
                i3 -= inv_n / cfg.epsilon * w[i * dim + k] * conv[k];
            }
        }
    }

    // I₄
    let mut i4 = 0.0;
    for i in 0..n {
        let e = e_at(state_eps.position(i))?;
        for k in 0..dim {
            i4 -= inv_n * w[i * dim + k] * e[k];
        }
    }

    // I₅: the (ρ^ε − ρ)(y) pairing, with u evaluated through the field at
    // every quadrature point
    let mut i5 = 0.0;
    {
        // u at the quadrature points of ρ only needs one field evaluation per
        // point, not one per (i, y) pair
        let mut u_at_lim = vec![0.0; m * dim];
        for j in 0..m {
            let u = u_at(&limit_positions[j * dim..(j + 1) * dim])?;
            u_at_lim[j * dim..(j + 1) * dim].copy_from_slice(&u);
        }
        let mut r = vec![0.0; dim];
        for i in 0..n {
            let x = state_eps.position(i);
            let ux = &u_at_eps[i * dim..(i + 1) * dim];
            let wi = &w[i * dim..(i + 1) * dim];
            let mut acc = 0.0;
            for j in 0..n {
                let y = state_eps.position(j);
                cfg.domain.displacement_into(x, y, &mut r);
                let phi = cfg.comm.eval(&r);
                let uy = &u_at_eps[j * dim..(j + 1) * dim];
                acc += inv_n
                    * phi
                    * wi.iter()
                        .zip(uy.iter().zip(ux))
                        .map(|(w, (uy, ux))| w * (uy - ux))
                        .sum::<f64>();
            }
            for j in 0..m {
                let y = &limit_positions[j * dim..(j + 1) * dim];
                cfg.domain.displacement_into(x, y, &mut r);
                let phi = cfg.comm.eval(&r);
                let uy = &u_at_lim[j * dim..(j + 1) * dim];
                acc -= inv_m
                    * phi
                    * wi.iter()
                        .zip(uy.iter().zip(ux))
                        .map(|(w, (uy, ux))| w * (uy - ux))
                        .sum::<f64>();
            }
            i5 += inv_n / cfg.epsilon * acc;
        }
    }

    // alignment relative dissipation (1/2N²) Σ φ_ij |w_i − w_j|²
    let mut alignment_rel_diss = 0.0;
    {
        let mut r = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                cfg.domain
                    .displacement_into(state_eps.position(i), state_eps.position(j), &mut r);
                let phi = cfg.comm.eval(&r);
                let dw2: f64 = (0..dim)
                    .map(|k| {
                        let d = w[i * dim + k] - w[j * dim + k];
                        d * d
                    })
                    .sum();
                alignment_rel_diss += phi * dw2;
            }
        }
        alignment_rel_diss /= 2.0 * (n as f64) * (n as f64);
    }

    Ok(RelativeEntropyBreakdown {
        rel_kinetic,
        i2,
        i3,
        i4,
        i5,
        alignment_rel_diss,
    })
}

/// e = ∂_t u + (u·∇)u assembled from three consecutive limit time slices:
/// a centered difference in time between `prev` and `next`, and central
/// spatial differences of the `cur` slice.
pub fn material_derivative_field<'a>(
    prev: (&'a [f64], &'a [f64], f64),
    cur: (&'a [f64], &'a [f64]),
    next: (&'a [f64], &'a [f64], f64),
    cfg: &'a SimConfig,
    h: f64,
) -> impl Fn(&[f64]) -> Result<Vec<f64>> + 'a {
    move |x: &[f64]| {
        let dim = cfg.domain.dim();
        let span = next.2 - prev.2;
        if !(span > 0.0) {
            return Err(Error::Parameter("non-increasing snapshot times".into()));
        }
        let up = eval_velocity_field(next.0, next.1, cfg, x)?;
        let um = eval_velocity_field(prev.0, prev.1, cfg, x)?;
        let uc = eval_velocity_field(cur.0, cur.1, cfg, x)?;
        let mut e = vec![0.0; dim];
        for k in 0..dim {
            e[k] = (up[k] - um[k]) / span;
        }
        for b in 0..dim {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[b] += h;
            xm[b] -= h;
            let gp = eval_velocity_field(cur.0, cur.1, cfg, &xp)?;
            let gm = eval_velocity_field(cur.0, cur.1, cfg, &xm)?;
            for a in 0..dim {
                e[a] += uc[b] * (gp[a] - gm[a]) / (2.0 * h);
            }
        }
        Ok(e)
    }
}

/// ∇W ⋆ (ρ − ρ^ε) for the 1-D Coulomb kernel W = −|x|/2, with the sgn(0) = 0
/// midpoint convention; equals F_{ρ^ε} − F_ρ at continuity points.
fn coulomb_field_1d(x: f64, eps_positions: &[f64], limit_positions: &[f64]) -> f64 {
    let sgn_mean = |pts: &[f64]| -> f64 {
        pts.iter()
            .map(|&y| {
                if x > y {
                    1.0
                } else if x < y {
                    -1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / pts.len() as f64
    };
    0.5 * (sgn_mean(eps_positions) - sgn_mean(limit_positions))
}

/// Residuals of the 1-D Coulomb modulated-energy identity
///   (1/2) d/dt ∫ |∇W ⋆ (ρ − ρ^ε)|² dx = ∫ ∇W ⋆ (ρ − ρ^ε) · (ρu − ρ^ε u^ε) dx
/// between consecutive shared snapshot times; the right-hand side is the
/// endpoint average over each interval. First-order convergent in Δt.
pub fn lemma51_residual(traj_eps: &Trajectory, traj_limit: &LimitTrajectory) -> Result<Vec<f64>> {
    let cfg = &traj_eps.config;
    if cfg.domain.dim() != 1 || !matches!(cfg.kernel, crate::kernels::InteractionKernel::Coulomb1d) {
        return Err(Error::Unsupported(
            "modulated-energy identity requires d = 1 with the Coulomb kernel".into(),
        ));
    }
    if traj_eps.snapshots.len() != traj_limit.snapshots.len() {
        return Err(Error::SnapshotMismatch(format!(
            "{} vs {} snapshots",
            traj_eps.snapshots.len(),
            traj_limit.snapshots.len()
        )));
    }
    let slices: Vec<(f64, f64, f64)> = traj_eps
        .snapshots
        .iter()
        .zip(&traj_limit.snapshots)
        .map(|(a, b)| {
            if (a.time - b.time).abs() > 1e-9 {
                return Err(Error::SnapshotMismatch(format!(
                    "times {} vs {}",
                    a.time, b.time
                )));
            }
            let energy = 0.5
                * cramer_energy_1d(
                    &EmpiricalMeasure::uniform(1, a.positions.clone())?,
                    &EmpiricalMeasure::uniform(1, b.positions.clone())?,
                )?;
            // ∫ G (ρu − ρ^ε u^ε): limit atoms minus ε atoms
            let mut rhs = 0.0;
            for (y, u) in b.positions.iter().zip(&b.velocities) {
                rhs += coulomb_field_1d(*y, &a.positions, &b.positions) * u / b.positions.len() as f64;
            }
            for (x, v) in a.positions.iter().zip(&a.velocities) {
                rhs -= coulomb_field_1d(*x, &a.positions, &b.positions) * v / a.positions.len() as f64;
            }
            Ok((a.time, energy, rhs))
        })
        .collect::<Result<_>>()?;
    Ok(slices
        .windows(2)
        .map(|pair| {
            let dt = pair[1].0 - pair[0].0;
            let lhs = (pair[1].1 - pair[0].1) / dt;
            let rhs = 0.5 * (pair[0].2 + pair[1].2);
            (lhs - rhs).abs()
        })
        .collect())
}
