//! Rank-constraint solvers: the discrimination success curve from a
//! vanishing minor, and the cloning spectrum and rank scan.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{meqsd_cope, sdc_cope, MeqsdParams, SdcParams};
use crate::quantum::CloneCoefficients;

/// Rows/columns `{phi, phi_perp, psi, g_phi}` of the discrimination COPE.
/// The other two rows are complements of kept rows, so this minor carries
/// the full rank-4 structure while the 6x6 determinant vanishes identically.
const MEQSD_MINOR: [usize; 4] = [0, 1, 2, 4];

/// Determinant of the rank-deciding 4x4 principal minor of the
/// discrimination COPE. It vanishes exactly where the COPE has rank <= 3.
/// Both arguments must lie in [0, 1].
pub fn meqsd_det(c_q: f64, s_q: f64) -> f64 {
    let full = meqsd_cope(MeqsdParams { c_q, s_q });
    let minor: DMatrix<f64> = full
        .entries()
        .select_rows(MEQSD_MINOR.iter())
        .select_columns(MEQSD_MINOR.iter());
    minor.lu().determinant()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid_step: f64,
    pub polish_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { grid_step: 1e-3, polish_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurvePoint {
    pub c_q: f64,
    /// Ascending roots in [0, 1].
    pub roots: Vec<f64>,
    pub optimal: f64,
}

/// Closed-form optimum `(1 + sqrt(1 - c_q)) / 2`.
pub fn helstrom(c_q: f64) -> f64 {
    0.5 * (1.0 + (1.0 - c_q).sqrt())
}

/// All `s_q` in [0, 1] where the discrimination COPE drops to rank 3.
///
/// Sign changes of `det / c_q` are bracketed on a uniform grid and polished
/// by bisection. At `c_q = 0` the minor vanishes for every `s_q`; the
/// reduced constraint `4 s (1 - s) = 0` is used there instead.
pub fn solve_success_prob(c_q: f64, cfg: &SolverConfig) -> Result<SuccessCurvePoint> {
    if !(0.0..1.0).contains(&c_q) {
        return Err(Error::InvalidParameter(format!(
            "c_q = {c_q} must lie in [0, 1); identical states are excluded"
        )));
    }
    if !(cfg.grid_step > 0.0 && cfg.grid_step < 1.0 && cfg.polish_tol > 0.0) {
        return Err(Error::InvalidParameter("solver grid step and tolerance must be positive".into()));
    }
    if c_q == 0.0 {
        return Ok(SuccessCurvePoint { c_q, roots: vec![0.0, 1.0], optimal: 1.0 });
    }
    let f = |s: f64| meqsd_det(c_q, s) / c_q;
    let steps = (1.0 / cfg.grid_step).ceil() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (k as f64 * cfg.grid_step).min(1.0)).collect();
    let values: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    let mut roots: Vec<f64> = Vec::new();
    let mut push = |r: f64| {
        if roots.last().is_none_or(|&last| (r - last).abs() > 10.0 * cfg.polish_tol) {
            roots.push(r);
        }
    };
    for k in 0..steps {
        let (a, b) = (grid[k], grid[k + 1]);
        let (fa, fb) = (values[k], values[k + 1]);
        if fa == 0.0 {
            push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            push(bisect(&f, a, b, fa, cfg.polish_tol));
        }
    }
    if values[steps] == 0.0 {
        push(grid[steps]);
    }
    let optimal = *roots.last().ok_or(Error::NoRootFound { c_q })?;
    Ok(SuccessCurvePoint { c_q, roots, optimal })
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// One row of the exported success curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub c_q: f64,
    pub root_low: f64,
    pub root_high: f64,
    pub closed_form: f64,
    pub abs_error: f64,
}

/// Inclusive sweep `start, start + step, ..., end`.
pub fn sweep_values(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || end < start || !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidParameter(format!("bad sweep {start}:{end}:{step}")));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

pub fn success_curve(c_values: &[f64], cfg: &SolverConfig) -> Result<Vec<CurveRow>> {
    c_values
        .par_iter()
        .map(|&c_q| {
            let p = solve_success_prob(c_q, cfg)?;
            let closed_form = helstrom(c_q);
            Ok(CurveRow {
                c_q,
                root_low: p.roots[0],
                root_high: p.optimal,
                closed_form,
                abs_error: (p.optimal - closed_form).abs(),
            })
        })
        .collect()
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Spectrum of the 8x8 cloning COPE for normalized coefficients.
pub fn sdc_spectrum(coeffs: &CloneCoefficients) -> Result<Vec<f64>> {
    Ok(sdc_spectrum_params(SdcParams::from_coefficients(coeffs)?))
}

pub fn sdc_spectrum_params(params: SdcParams) -> Vec<f64> {
    symmetric_spectrum(sdc_cope(params).entries())
}

/// Threshold on the fourth-largest eigenvalue magnitude for rank <= 3.
pub const RANK3_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Points on the normalization ellipse, evenly spaced in its angle.
    pub samples: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { samples: 720 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub t: f64,
    pub c: f64,
    pub d: f64,
    pub fourth_eigenvalue: f64,
    pub rank3: bool,
}

/// Scans the normalization ellipse of `(c, d)` at fixed `phi` and records
/// the fourth-largest eigenvalue magnitude of the cloning COPE at each point.
pub fn sdc_scan(phi: f64, cfg: &ScanConfig) -> Result<Vec<ScanPoint>> {
    if !(phi > 0.0 && phi < FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("phi = {phi} must lie in (0, pi/2)")));
    }
    if cfg.samples == 0 {
        return Err(Error::InvalidParameter("scan needs at least one sample".into()));
    }
    (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let t = 2.0 * PI * k as f64 / cfg.samples as f64;
            let coeffs = CloneCoefficients::on_constraint(phi, t)?;
            let mut mags: Vec<f64> = sdc_spectrum(&coeffs)?.iter().map(|x| x.abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            let fourth = mags[3];
            Ok(ScanPoint { t, c: coeffs.c(), d: coeffs.d(), fourth_eigenvalue: fourth, rank3: fourth < RANK3_TOL })
        })
        .collect()
}

/// Points of [`sdc_scan`] at which the COPE has rank at most 3.
pub fn sdc_rank_search(phi: f64, cfg: &ScanConfig) -> Result<Vec<ScanPoint>> {
    Ok(sdc_scan(phi, cfg)?.into_iter().filter(|p| p.rank3).collect())
}
