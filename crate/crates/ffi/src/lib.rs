//! C ABI for the alignment laboratory: opaque handles for configs and
//! trajectories, status codes, and array-based transport metrics. The header
//! is generated into `include/alignlab.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use alignlab::dynamics::simulate;
use alignlab::harness::config::{load_str, LoadedConfig};
use alignlab::harness::study::well_prepared_init;
use alignlab::limit::simulate_limit;
use alignlab::metrics::{
    cramer_energy_1d, wasserstein_1d, wasserstein_assignment, EmpiricalMeasure,
};
use alignlab::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlStatus {
    AlOk = 0,
    AlNullPointer = 1,
    AlInvalidInput = 2,
    AlNumericalFailure = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(err: Error) -> AlStatus {
    let status = match err {
        Error::InvalidConfig(_)
        | Error::Parameter(_)
        | Error::Unsupported(_)
        | Error::DimensionMismatch(_)
        | Error::SizeLimit(_)
        | Error::Io(_)
        | Error::Json(_) => AlStatus::AlInvalidInput,
        _ => AlStatus::AlNumericalFailure,
    };
    set_error(&err.to_string());
    status
}

/// Message for the most recent error on this thread; the pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn al_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parsed run configuration (opaque).
pub struct AlConfig {
    loaded: LoadedConfig,
}

/// Snapshot trajectory of either system (opaque).
pub struct AlTrajectory {
    dim: usize,
    n: usize,
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    max_energy_residual: f64,
}

/// Parses a NUL-terminated config in the flat `section.key = value` format.
/// Returns NULL on failure (see `al_last_error_message`).
#[no_mangle]
pub unsafe extern "C" fn al_config_parse(text: *const c_char) -> *mut AlConfig {
    if text.is_null() {
        set_error("config text is NULL");
        return ptr::null_mut();
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return ptr::null_mut();
        }
    };
    match load_str(text) {
        Ok(loaded) => Box::into_raw(Box::new(AlConfig { loaded })),
        Err(err) => {
            fail(err);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn al_config_free(config: *mut AlConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

fn pack_eps(traj: &alignlab::dynamics::Trajectory) -> AlTrajectory {
    AlTrajectory {
        dim: traj.config.domain.dim(),
        n: traj.config.n,
        times: traj.snapshots.iter().map(|s| s.time).collect(),
        positions: traj.snapshots.iter().map(|s| s.positions.clone()).collect(),
        velocities: traj.snapshots.iter().map(|s| s.velocities.clone()).collect(),
        max_energy_residual: traj
            .energy_ledger
            .iter()
            .map(|r| r.residual)
            .fold(0.0f64, f64::max),
    }
}

/// Runs the stiff ε-particle system from well-prepared initial data.
#[no_mangle]
pub unsafe extern "C" fn al_simulate_run(config: *const AlConfig) -> *mut AlTrajectory {
    let Some(config) = config.as_ref() else {
        set_error("config handle is NULL");
        return ptr::null_mut();
    };
    let cfg = &config.loaded.sim;
    let result = well_prepared_init(&config.loaded.density, cfg.n, cfg.seed, cfg)
        .and_then(|(init, _)| simulate(cfg, &init));
    match result {
        Ok(traj) => Box::into_raw(Box::new(pack_eps(&traj))),
        Err(err) => {
            fail(err);
            ptr::null_mut()
        }
    }
}

/// Runs the overdamped limit system from the same well-prepared positions.
#[no_mangle]
pub unsafe extern "C" fn al_limit_run(config: *const AlConfig) -> *mut AlTrajectory {
    let Some(config) = config.as_ref() else {
        set_error("config handle is NULL");
        return ptr::null_mut();
    };
    let cfg = &config.loaded.sim;
    let result = well_prepared_init(&config.loaded.density, cfg.n, cfg.seed, cfg)
        .and_then(|(_, positions)| simulate_limit(cfg, &positions));
    match result {
        Ok(traj) => Box::into_raw(Box::new(AlTrajectory {
            dim: cfg.domain.dim(),
            n: cfg.n,
            times: traj.snapshots.iter().map(|s| s.time).collect(),
            positions: traj.snapshots.iter().map(|s| s.positions.clone()).collect(),
            velocities: traj.snapshots.iter().map(|s| s.velocities.clone()).collect(),
            max_energy_residual: f64::NAN,
        })),
        Err(err) => {
            fail(err);
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn al_trajectory_free(traj: *mut AlTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

#[no_mangle]
pub unsafe extern "C" fn al_trajectory_snapshot_count(traj: *const AlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.times.len())
}

#[no_mangle]
pub unsafe extern "C" fn al_trajectory_dim(traj: *const AlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.dim)
}

#[no_mangle]
pub unsafe extern "C" fn al_trajectory_particle_count(traj: *const AlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.n)
}

/// Borrows snapshot `index`: time plus row-major position/velocity arrays of
/// length `n·dim`, valid while the trajectory handle lives.
#[no_mangle]
pub unsafe extern "C" fn al_trajectory_snapshot(
    traj: *const AlTrajectory,
    index: usize,
    time_out: *mut f64,
    positions_out: *mut *const f64,
    velocities_out: *mut *const f64,
) -> AlStatus {
    let Some(traj) = traj.as_ref() else {
        set_error("trajectory handle is NULL");
        return AlStatus::AlNullPointer;
    };
    if index >= traj.times.len() {
        set_error("snapshot index out of range");
        return AlStatus::AlInvalidInput;
    }
    if !time_out.is_null() {
        *time_out = traj.times[index];
    }
    if !positions_out.is_null() {
        *positions_out = traj.positions[index].as_ptr();
    }
    if !velocities_out.is_null() {
        *velocities_out = traj.velocities[index].as_ptr();
    }
    AlStatus::AlOk
}

/// Max per-step energy-balance residual (NaN for limit trajectories, which
/// carry no ledger).
#[no_mangle]
pub unsafe extern "C" fn al_trajectory_max_energy_residual(
    traj: *const AlTrajectory,
    out: *mut f64,
) -> AlStatus {
    let Some(traj) = traj.as_ref() else {
        set_error("trajectory handle is NULL");
        return AlStatus::AlNullPointer;
    };
    if out.is_null() {
        set_error("output pointer is NULL");
        return AlStatus::AlNullPointer;
    }
    *out = traj.max_energy_residual;
    AlStatus::AlOk
}

unsafe fn measure_from_raw(
    points: *const f64,
    count: usize,
    dim: usize,
) -> Result<EmpiricalMeasure, AlStatus> {
    if points.is_null() {
        set_error("point array is NULL");
        return Err(AlStatus::AlNullPointer);
    }
    if count == 0 || dim == 0 {
        set_error("point cloud must be non-empty with dim >= 1");
        return Err(AlStatus::AlInvalidInput);
    }
    let data = std::slice::from_raw_parts(points, count * dim).to_vec();
    EmpiricalMeasure::uniform(dim, data).map_err(fail)
}

/// p-Wasserstein distance between two 1-D uniform point clouds (quantile
/// formula; the clouds may have different sizes).
#[no_mangle]
pub unsafe extern "C" fn al_wasserstein_1d(
    a: *const f64,
    a_count: usize,
    b: *const f64,
    b_count: usize,
    p: f64,
    out: *mut f64,
) -> AlStatus {
    if out.is_null() {
        set_error("output pointer is NULL");
        return AlStatus::AlNullPointer;
    }
    let mu = match measure_from_raw(a, a_count, 1) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let nu = match measure_from_raw(b, b_count, 1) {
        Ok(m) => m,
        Err(s) => return s,
    };
    match wasserstein_1d(&mu, &nu, p) {
        Ok(d) => {
            *out = d;
            AlStatus::AlOk
        }
        Err(err) => fail(err),
    }
}

/// p-Wasserstein distance via exact assignment between two equally sized
/// point clouds in R^dim (row-major coordinates).
#[no_mangle]
pub unsafe extern "C" fn al_wasserstein_assignment(
    a: *const f64,
    b: *const f64,
    count: usize,
    dim: usize,
    p: f64,
    out: *mut f64,
) -> AlStatus {
    if out.is_null() {
        set_error("output pointer is NULL");
        return AlStatus::AlNullPointer;
    }
    let mu = match measure_from_raw(a, count, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let nu = match measure_from_raw(b, count, dim) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let domain = match alignlab::kernels::Domain::euclidean(dim) {
        Ok(d) => d,
        Err(err) => return fail(err),
    };
    match wasserstein_assignment(&mu, &nu, &domain, p) {
        Ok(d) => {
            *out = d;
            AlStatus::AlOk
        }
        Err(err) => fail(err),
    }
}

/// Squared Cramér distance ∫(F_a − F_b)² dx between two 1-D uniform point
/// clouds (the modulated Coulomb energy up to a factor of 2).
#[no_mangle]
pub unsafe extern "C" fn al_cramer_energy_1d(
    a: *const f64,
    a_count: usize,
    b: *const f64,
    b_count: usize,
    out: *mut f64,
) -> AlStatus {
    if out.is_null() {
        set_error("output pointer is NULL");
        return AlStatus::AlNullPointer;
    }
    let mu = match measure_from_raw(a, a_count, 1) {
        Ok(m) => m,
        Err(s) => return s,
    };
    let nu = match measure_from_raw(b, b_count, 1) {
        Ok(m) => m,
        Err(s) => return s,
    };
    match cramer_energy_1d(&mu, &nu) {
        Ok(d) => {
            *out = d;
            AlStatus::AlOk
        }
        Err(err) => fail(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const CFG: &str = "\
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
sim.seed = 5
init.density = uniform
init.lo = -1.0
init.hi = 1.0
";

    #[test]
    fn wasserstein_1d_translation() {
        let a = [0.0, 1.0];
        let b = [2.0, 3.0];
        let mut out = f64::NAN;
        let status =
            unsafe { al_wasserstein_1d(a.as_ptr(), 2, b.as_ptr(), 2, 2.0, &mut out) };
        assert_eq!(status, AlStatus::AlOk);
        assert!((out - 2.0).abs() < 1e-15);
    }

    #[test]
    fn assignment_matches_1d() {
        let a = [0.3, -0.7, 1.1, 0.05];
        let b = [0.9, -0.2, 0.4, -1.3];
        let mut d_quantile = f64::NAN;
        let mut d_assign = f64::NAN;
        unsafe {
            assert_eq!(
                al_wasserstein_1d(a.as_ptr(), 4, b.as_ptr(), 4, 2.0, &mut d_quantile),
                AlStatus::AlOk
            );
            assert_eq!(
                al_wasserstein_assignment(a.as_ptr(), b.as_ptr(), 4, 1, 2.0, &mut d_assign),
                AlStatus::AlOk
            );
        }
        assert!((d_quantile - d_assign).abs() < 1e-12);
    }

    #[test]
    fn cramer_identity_is_zero() {
        let a = [0.1, 0.5, -0.4];
        let mut out = f64::NAN;
        let status = unsafe { al_cramer_energy_1d(a.as_ptr(), 3, a.as_ptr(), 3, &mut out) };
        assert_eq!(status, AlStatus::AlOk);
        assert_eq!(out, 0.0);
    }

    #[test]
    fn null_inputs_report_errors() {
        let mut out = f64::NAN;
        let status =
            unsafe { al_wasserstein_1d(std::ptr::null(), 0, std::ptr::null(), 0, 2.0, &mut out) };
        assert_eq!(status, AlStatus::AlNullPointer);
        let msg = unsafe { CStr::from_ptr(al_last_error_message()) };
        assert!(!msg.to_str().unwrap().is_empty());
        assert!(unsafe { al_config_parse(std::ptr::null()) }.is_null());
    }

    #[test]
    fn config_parse_rejects_unknown_key() {
        let text = CString::new(format!("{CFG}sim.bogus = 2\n")).unwrap();
        let handle = unsafe { al_config_parse(text.as_ptr()) };
        assert!(handle.is_null());
        let msg = unsafe { CStr::from_ptr(al_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("bogus"));
    }

    #[test]
    fn simulate_and_limit_round_trip() {
        let text = CString::new(CFG).unwrap();
        let config = unsafe { al_config_parse(text.as_ptr()) };
        assert!(!config.is_null());
        unsafe {
            let eps = al_simulate_run(config);
            let lim = al_limit_run(config);
            assert!(!eps.is_null() && !lim.is_null());
            assert_eq!(al_trajectory_dim(eps), 1);
            assert_eq!(al_trajectory_particle_count(eps), 8);
            let count = al_trajectory_snapshot_count(eps);
            assert!(count >= 2);
            assert_eq!(al_trajectory_snapshot_count(lim), count);
            // shared initial data: first snapshots coincide
            let (mut ta, mut tb) = (f64::NAN, f64::NAN);
            let mut pa: *const f64 = std::ptr::null();
            let mut pb: *const f64 = std::ptr::null();
            assert_eq!(
                al_trajectory_snapshot(eps, 0, &mut ta, &mut pa, std::ptr::null_mut()),
                AlStatus::AlOk
            );
            assert_eq!(
                al_trajectory_snapshot(lim, 0, &mut tb, &mut pb, std::ptr::null_mut()),
                AlStatus::AlOk
            );
            assert_eq!(ta, 0.0);
            assert_eq!(tb, 0.0);
            let xa = std::slice::from_raw_parts(pa, 8);
            let xb = std::slice::from_raw_parts(pb, 8);
            assert_eq!(xa, xb);
            let mut residual = f64::NAN;
            assert_eq!(al_trajectory_max_energy_residual(eps, &mut residual), AlStatus::AlOk);
            assert!(residual.is_finite() && residual < 1e-4, "residual {residual}");
            assert_eq!(
                al_trajectory_snapshot(eps, usize::MAX, std::ptr::null_mut(), std::ptr::null_mut(), std::ptr::null_mut()),
                AlStatus::AlInvalidInput
            );
            al_trajectory_free(eps);
            al_trajectory_free(lim);
        }
        unsafe { al_config_free(config) };
    }

    #[test]
    fn generated_header_exports_api() {
        let header = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/alignlab.h"),
        )
        .unwrap();
        for name in [
            "al_config_parse",
            "al_simulate_run",
            "al_limit_run",
            "al_trajectory_snapshot",
            "al_wasserstein_1d",
            "al_wasserstein_assignment",
            "al_cramer_energy_1d",
            "al_last_error_message",
            "AlStatus",
        ] {
            assert!(header.contains(name), "missing {name}");
        }
        // opaque handles: declared but never defined with fields
        assert!(header.contains("typedef struct AlConfig AlConfig;"));
        assert!(header.contains("typedef struct AlTrajectory AlTrajectory;"));
    }
}
