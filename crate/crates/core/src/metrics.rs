//! p-Wasserstein distances between empirical measures and the 1-D Coulomb
//! modulated (squared Cramér) energy.
//!
//! The 1-D euclidean case uses the exact quantile formula. Equal-weight clouds
//! in any dimension go through an exact optimal-assignment solver on the
//! p-th-power cost matrix; entropic regularization is deliberately absent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Domain;

/// Weighted point cloud representing a probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Points are row-major, `len = count * dim`. Weights must be positive and
    /// sum to 1 within 1e-12.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} weights in dimension {}",
                points.len(),
                weights.len(),
                dim
            )));
        }
        if weights.is_empty() {
            return Err(Error::Parameter("measure must contain at least one point".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Parameter("all weights must be > 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure { dim, points, weights })
    }

    /// Uniform weights 1/M.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::DimensionMismatch("point buffer not a multiple of dim".into()));
        }
        let m = points.len() / dim;
        let w = 1.0 / m as f64;
        // renormalize the last weight so the sum is exactly 1 in floating point
        let mut weights = vec![w; m];
        let partial: f64 = weights[..m - 1].iter().sum();
        weights[m - 1] = 1.0 - partial;
        EmpiricalMeasure::new(dim, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-12)
    }
}

/// Transport plan between two empirical measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coupling {
    /// (source index, target index, mass), all masses > 0.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl Coupling {
    /// Checks that the marginals reproduce the source and target weights.
    pub fn check_marginals(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, tol: f64) -> bool {
        let mut src = vec![0.0; mu.len()];
        let mut dst = vec![0.0; nu.len()];
        for &(i, j, m) in &self.pairs {
            if !(m > 0.0) {
                return false;
            }
            src[i] += m;
            dst[j] += m;
        }
        src.iter().zip(mu.weights()).all(|(a, b)| (a - b).abs() <= tol)
            && dst.iter().zip(nu.weights()).all(|(a, b)| (a - b).abs() <= tol)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("Wasserstein order p = {p} must be in [1, inf)")));
    }
    Ok(())
}

fn sorted_order(m: &EmpiricalMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.len()).collect();
    idx.sort_by(|&a, &b| m.points()[a].partial_cmp(&m.points()[b]).unwrap());
    idx
}

/// The monotone (co-monotone) coupling of two 1-D measures, which is optimal
/// for every convex ground cost.
pub fn monotone_coupling_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Coupling> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::Unsupported("monotone coupling requires dimension 1".into()));
    }
    let a = sorted_order(mu);
    let b = sorted_order(nu);
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut wa = mu.weights()[a[0]];
    let mut wb = nu.weights()[b[0]];
    loop {
        let m = wa.min(wb);
        if m > 0.0 {
            pairs.push((a[i], b[j], m));
        }
        wa -= m;
        wb -= m;
        if wa <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            wa = mu.weights()[a[i]];
        }
        if wb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            wb = nu.weights()[b[j]];
        }
    }
    Ok(Coupling { pairs })
}

/// Exact 1-D p-Wasserstein distance via monotone rearrangement of the two
/// CDFs: (∫₀¹ |F_μ⁻¹(s) − F_ν⁻¹(s)|^p ds)^{1/p}.
pub fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_p(p)?;
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::Unsupported("quantile formula requires dimension 1".into()));
    }
    let coupling = monotone_coupling_1d(mu, nu)?;
    let mut acc = 0.0;
    for &(i, j, m) in &coupling.pairs {
        let d = (mu.points()[i] - nu.points()[j]).abs();
        acc += m * d.powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

fn require_matched_uniform(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<usize> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch("measures have different dimensions".into()));
    }
    if mu.len() != nu.len() {
        return Err(Error::Unsupported(
            "assignment solver needs equal cardinality; route 1-D cases through wasserstein_1d".into(),
        ));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Unsupported("assignment solver needs uniform weights".into()));
    }
    Ok(mu.len())
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, domain: &Domain, p: f64) -> Vec<Vec<f64>> {
    let m = mu.len();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| domain.distance(mu.point(i), nu.point(j)).powf(p))
                .collect()
        })
        .collect()
}

/// Exact rectangular-free linear sum assignment (Jonker–Volgenant style
/// shortest augmenting paths with dual potentials). Returns row -> column.
fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1]; // column -> assigned row, 1-based, 0 = free
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    assign
}

fn assignment_value(cost: &[Vec<f64>], assign: &[usize], p: f64) -> f64 {
    let m = assign.len() as f64;
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (total / m).powf(1.0 / p)
}

/// Exact p-Wasserstein distance for equal-cardinality uniform-weight clouds,
/// minimized over permutations; torus domains use minimum-image ground cost.
pub fn wasserstein_assignment(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    domain: &Domain,
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    require_matched_uniform(mu, nu)?;
    let cost = cost_matrix(mu, nu, domain, p);
    let assign = solve_assignment(&cost);
    Ok(assignment_value(&cost, &assign, p))
}

/// Exhaustive test oracle: minimum over all M! permutations, M <= 8.
pub fn wasserstein_bruteforce(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    domain: &Domain,
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    let m = require_matched_uniform(mu, nu)?;
    if m > 8 {
        return Err(Error::SizeLimit(format!("brute-force oracle limited to M <= 8, got {m}")));
    }
    let cost = cost_matrix(mu, nu, domain, p);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |sigma| {
        let total: f64 = sigma.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best {
            best = total;
        }
    });
    Ok((best / m as f64).powf(1.0 / p))
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Bottleneck (infinity-Wasserstein) distance: min over permutations of the
/// largest matched distance. Binary search over candidate radii with a
/// bipartite matching feasibility test.
pub fn wasserstein_inf(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, domain: &Domain) -> Result<f64> {
    let m = require_matched_uniform(mu, nu)?;
    let dists: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| domain.distance(mu.point(i), nu.point(j))).collect())
        .collect();
    let mut candidates: Vec<f64> = dists.iter().flatten().copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let feasible = |r: f64, d: &Vec<Vec<f64>>| -> bool {
        // Kuhn's augmenting-path matching on edges with distance <= r
        let mut match_col = vec![usize::MAX; m];
        fn try_augment(
            i: usize,
            r: f64,
            d: &Vec<Vec<f64>>,
            seen: &mut [bool],
            match_col: &mut [usize],
        ) -> bool {
            for j in 0..d.len() {
                if d[i][j] <= r && !seen[j] {
                    seen[j] = true;
                    if match_col[j] == usize::MAX
                        || try_augment(match_col[j], r, d, seen, match_col)
                    {
                        match_col[j] = i;
                        return true;
                    }
                }
            }
            false
        }
        for i in 0..m {
            let mut seen = vec![false; m];
            if !try_augment(i, r, d, &mut seen, &mut match_col) {
                return false;
            }
        }
        true
    };
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    if feasible(candidates[lo], &dists) {
        return Ok(candidates[lo]);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(candidates[mid], &dists) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(candidates[hi])
}

/// 1-D modulated Coulomb energy ∫ (F_μ − F_ν)² dx, computed exactly as a
/// piecewise-constant integral over the merged breakpoints. With the
/// fundamental-solution convention W = −|x|/2 this equals
/// ‖∇W ⋆ (μ − ν)‖²_{L²}.
pub fn cramer_energy_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::Unsupported("Cramér energy requires dimension 1".into()));
    }
    // merged sweep over breakpoints of both CDFs
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for i in 0..mu.len() {
        events.push((mu.points()[i], mu.weights()[i]));
    }
    for j in 0..nu.len() {
        events.push((nu.points()[j], -nu.weights()[j]));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut energy = 0.0;
    let mut diff = 0.0; // F_mu - F_nu on the current interval
    let mut prev_x = events[0].0;
    for (x, jump) in events {
        energy += (x - prev_x) * diff * diff;
        diff += jump;
        prev_x = x;
    }
    Ok(energy)
}
