//! Interaction potentials, communication weights, and domain geometry.
//!
//! All evaluations are pure functions of immutable specifications, so they can
//! be called concurrently without restriction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Spatial domain: Euclidean space or a flat torus with a common period per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Euclidean { dim: usize },
    Torus { dim: usize, period: f64 },
}

impl Domain {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        Ok(Domain::Euclidean { dim })
    }

    pub fn torus(dim: usize, period: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        if !(period > 0.0) {
            return Err(Error::Parameter("torus period must be > 0".into()));
        }
        Ok(Domain::Torus { dim, period })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Domain::Euclidean { dim } | Domain::Torus { dim, .. } => dim,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Displacement x - y; on the torus the componentwise minimum image in
    /// (-period/2, period/2].
    pub fn displacement_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match *self {
            Domain::Euclidean { .. } => {
                for k in 0..out.len() {
                    out[k] = x[k] - y[k];
                }
            }
            Domain::Torus { period, .. } => {
                for k in 0..out.len() {
                    let mut d = (x[k] - y[k]).rem_euclid(period);
                    if d > period / 2.0 {
                        d -= period;
                    }
                    out[k] = d;
                }
            }
        }
    }

    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.displacement_into(x, y, &mut out);
        out
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        match *self {
            Domain::Euclidean { .. } => {
                for k in 0..x.len() {
                    let d = x[k] - y[k];
                    acc += d * d;
                }
            }
            Domain::Torus { period, .. } => {
                for k in 0..x.len() {
                    let mut d = (x[k] - y[k]).rem_euclid(period);
                    if d > period / 2.0 {
                        d -= period;
                    }
                    acc += d * d;
                }
            }
        }
        acc.sqrt()
    }

    /// Wraps a position into the fundamental cell [0, period) per axis.
    pub fn wrap(&self, x: &mut [f64]) {
        if let Domain::Torus { period, .. } = *self {
            for xi in x.iter_mut() {
                *xi = xi.rem_euclid(period);
            }
        }
    }
}

/// Interaction potential W with certified analytic constants.
///
/// All families are even, W(-x) = W(x). The Coulomb families are the
/// fundamental solutions of -ΔW = δ₀:
///   d=1: W(x) = -|x|/2,  d=2: W(x) = -ln|x|/(2π),  d=3: W(x) = 1/(4π|x|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InteractionKernel {
    /// W(x) = amplitude * exp(-|x|^2 / width^2). Negative amplitude gives an
    /// attractive well at the origin.
    Gaussian { amplitude: f64, width: f64 },
    /// Smooth Morse-type potential: repulsive minus attractive Gaussian bumps,
    /// W(x) = c_rep * exp(-|x|^2/l_rep^2) - c_att * exp(-|x|^2/l_att^2).
    MorseSmoothed {
        c_rep: f64,
        l_rep: f64,
        c_att: f64,
        l_att: f64,
    },
    Coulomb1d,
    Coulomb2d,
    Coulomb3d,
    Zero,
}

/// Certified constants: a sup bound and, when finite, a Lipschitz bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub sup: f64,
    pub lip: Option<f64>,
}

impl InteractionKernel {
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        match *self {
            InteractionKernel::Gaussian { amplitude, width } => {
                if amplitude == 0.0 || !amplitude.is_finite() {
                    return Err(Error::Parameter("gaussian amplitude must be nonzero".into()));
                }
                if !(width > 0.0) {
                    return Err(Error::Parameter("gaussian width must be > 0".into()));
                }
            }
            InteractionKernel::MorseSmoothed { c_rep, l_rep, c_att, l_att } => {
                if !(c_rep >= 0.0 && c_att >= 0.0) {
                    return Err(Error::Parameter("morse coefficients must be >= 0".into()));
                }
                if !(l_rep > 0.0 && l_att > 0.0) {
                    return Err(Error::Parameter("morse length scales must be > 0".into()));
                }
            }
            InteractionKernel::Coulomb1d | InteractionKernel::Coulomb2d | InteractionKernel::Coulomb3d => {
                if domain.is_torus() {
                    return Err(Error::Unsupported(
                        "Coulomb kernels are not defined on the torus".into(),
                    ));
                }
                let want = self.coulomb_dim().unwrap();
                if domain.dim() != want {
                    return Err(Error::DimensionMismatch(format!(
                        "coulomb_{}d requires dimension {}, got {}",
                        want,
                        want,
                        domain.dim()
                    )));
                }
            }
            InteractionKernel::Zero => {}
        }
        Ok(())
    }

    fn coulomb_dim(&self) -> Option<usize> {
        match self {
            InteractionKernel::Coulomb1d => Some(1),
            InteractionKernel::Coulomb2d => Some(2),
            InteractionKernel::Coulomb3d => Some(3),
            _ => None,
        }
    }

    pub fn is_coulomb(&self) -> bool {
        self.coulomb_dim().is_some()
    }

    /// Coulomb in d >= 2 is singular at coincidence; the pair loop must skip
    /// the diagonal for those families.
    pub fn excludes_diagonal(&self) -> bool {
        matches!(self, InteractionKernel::Coulomb2d | InteractionKernel::Coulomb3d)
    }

    /// W(r) for a displacement r.
    pub fn value(&self, r: &[f64]) -> Result<f64> {
        let r2: f64 = r.iter().map(|x| x * x).sum();
        match *self {
            InteractionKernel::Gaussian { amplitude, width } => {
                Ok(amplitude * (-r2 / (width * width)).exp())
            }
            InteractionKernel::MorseSmoothed { c_rep, l_rep, c_att, l_att } => {
                Ok(c_rep * (-r2 / (l_rep * l_rep)).exp() - c_att * (-r2 / (l_att * l_att)).exp())
            }
            InteractionKernel::Coulomb1d => Ok(-r2.sqrt() / 2.0),
            InteractionKernel::Coulomb2d => {
                if r2 == 0.0 {
                    return Err(Error::KernelSingularity { indices: None });
                }
                Ok(-r2.sqrt().ln() / (2.0 * PI))
            }
            InteractionKernel::Coulomb3d => {
                if r2 == 0.0 {
                    return Err(Error::KernelSingularity { indices: None });
                }
                Ok(1.0 / (4.0 * PI * r2.sqrt()))
            }
            InteractionKernel::Zero => Ok(0.0),
        }
    }

    /// ∇W(r), written into `out`. Antisymmetric: ∇W(-r) = -∇W(r).
    ///
    /// coulomb_1d uses the midpoint convention W'(0) = 0 at coincidence; the
    /// singular families (d >= 2) error out there.
    pub fn grad_into(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let r2: f64 = r.iter().map(|x| x * x).sum();
        match *self {
            InteractionKernel::Gaussian { amplitude, width } => {
                let c = -2.0 * amplitude / (width * width) * (-r2 / (width * width)).exp();
                for k in 0..r.len() {
                    out[k] = c * r[k];
                }
            }
            InteractionKernel::MorseSmoothed { c_rep, l_rep, c_att, l_att } => {
                let cr = -2.0 * c_rep / (l_rep * l_rep) * (-r2 / (l_rep * l_rep)).exp();
                let ca = 2.0 * c_att / (l_att * l_att) * (-r2 / (l_att * l_att)).exp();
                for k in 0..r.len() {
                    out[k] = (cr + ca) * r[k];
                }
            }
            InteractionKernel::Coulomb1d => {
                // W = -|x|/2, W' = -sgn(x)/2, with W'(0) := 0.
                out[0] = if r[0] > 0.0 {
                    -0.5
                } else if r[0] < 0.0 {
                    0.5
                } else {
                    0.0
                };
            }
            InteractionKernel::Coulomb2d => {
                if r2 == 0.0 {
                    return Err(Error::KernelSingularity { indices: None });
                }
                for k in 0..r.len() {
                    out[k] = -r[k] / (2.0 * PI * r2);
                }
            }
            InteractionKernel::Coulomb3d => {
                if r2 == 0.0 {
                    return Err(Error::KernelSingularity { indices: None });
                }
                let c = -1.0 / (4.0 * PI * r2 * r2.sqrt());
                for k in 0..r.len() {
                    out[k] = c * r[k];
                }
            }
            InteractionKernel::Zero => out.fill(0.0),
        }
        Ok(())
    }

    /// Certified bounds on |∇W| and Lip(∇W).
    ///
    /// For the Gaussian family the extrema are explicit: |∇W| peaks at
    /// |x| = width/√2 with value √2 |a| e^{-1/2} / width, and the Hessian
    /// operator norm is maximal at the origin, 2|a|/width².
    pub fn grad_constants(&self) -> Result<KernelConstants> {
        match *self {
            InteractionKernel::Gaussian { amplitude, width } => Ok(KernelConstants {
                sup: std::f64::consts::SQRT_2 * amplitude.abs() / width * (-0.5f64).exp(),
                lip: Some(2.0 * amplitude.abs() / (width * width)),
            }),
            InteractionKernel::MorseSmoothed { c_rep, l_rep, c_att, l_att } => {
                let g = |a: f64, w: f64| std::f64::consts::SQRT_2 * a / w * (-0.5f64).exp();
                let l = |a: f64, w: f64| 2.0 * a / (w * w);
                Ok(KernelConstants {
                    sup: g(c_rep, l_rep) + g(c_att, l_att),
                    lip: Some(l(c_rep, l_rep) + l(c_att, l_att)),
                })
            }
            InteractionKernel::Coulomb1d => Ok(KernelConstants { sup: 0.5, lip: None }),
            InteractionKernel::Coulomb2d => Err(Error::NoFiniteConstant("coulomb_2d gradient")),
            InteractionKernel::Coulomb3d => Err(Error::NoFiniteConstant("coulomb_3d gradient")),
            InteractionKernel::Zero => Ok(KernelConstants { sup: 0.0, lip: Some(0.0) }),
        }
    }
}

/// Communication weight φ >= 0, even, with certified sup and Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CommWeight {
    Constant { k: f64 },
    /// φ(x) = K / (1 + |x|^2)^β.
    CuckerSmale { k: f64, beta: f64 },
}

impl CommWeight {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CommWeight::Constant { k } => {
                if !(k >= 0.0) {
                    return Err(Error::Parameter("comm amplitude must be >= 0".into()));
                }
            }
            CommWeight::CuckerSmale { k, beta } => {
                if !(k >= 0.0) {
                    return Err(Error::Parameter("comm amplitude must be >= 0".into()));
                }
                if !(beta >= 0.0) {
                    return Err(Error::Parameter("comm decay exponent must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        match *self {
            CommWeight::Constant { k } => k,
            CommWeight::CuckerSmale { k, beta } => {
                let r2: f64 = r.iter().map(|x| x * x).sum();
                k / (1.0 + r2).powf(beta)
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            CommWeight::Constant { k } => k,
            CommWeight::CuckerSmale { k, .. } => k,
        }
    }

    /// Global Lipschitz constant of x ↦ φ(x). For Cucker–Smale the radial
    /// derivative -2βKr(1+r²)^{-β-1} peaks at r² = 1/(2β+1).
    pub fn lip(&self) -> f64 {
        match *self {
            CommWeight::Constant { .. } => 0.0,
            CommWeight::CuckerSmale { k, beta } => {
                if beta == 0.0 {
                    0.0
                } else {
                    let r2 = 1.0 / (2.0 * beta + 1.0);
                    2.0 * beta * k * r2.sqrt() / (1.0 + r2).powf(beta + 1.0)
                }
            }
        }
    }

    pub fn constants(&self) -> KernelConstants {
        KernelConstants {
            sup: self.sup(),
            lip: Some(self.lip()),
        }
    }
}

/// Free-function form of the module operations, mirroring the public surface
/// used by the harness.
pub fn grad_w(kernel: &InteractionKernel, domain: &Domain, r: &[f64]) -> Result<Vec<f64>> {
    kernel.validate(domain)?;
    let mut out = vec![0.0; r.len()];
    kernel.grad_into(r, &mut out)?;
    Ok(out)
}

pub fn phi_eval(comm: &CommWeight, _domain: &Domain, r: &[f64]) -> f64 {
    comm.eval(r)
}
