//! Nonnegative factorization search `C ~ R E`, used as numerical evidence
//! for or against an equirank factorization.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{Block, CopeMatrix};
use crate::rank::numerical_rank;
use crate::SCHEMA;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Plain,
    /// Keeps response functions of the first block summing to one per ontic
    /// state after every update.
    Ontological,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Multiplicative,
    /// Hierarchical alternating least squares.
    Hals,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub constraint_mode: ConstraintMode,
    pub success_tol: f64,
    pub rule: UpdateRule,
    pub record_history: bool,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            max_iter: 20_000,
            restarts: 50,
            seed: 0,
            constraint_mode: ConstraintMode::Plain,
            success_tol: 1e-6,
            rule: UpdateRule::Multiplicative,
            record_history: false,
        }
    }
}

/// Tolerance on E column sums and R block row sums.
pub const CONSTRAINT_TOL: f64 = 1e-6;

/// Runs stop once the residual falls below this fraction of `|C|_F`.
const STOP_RELATIVE: f64 = 1e-14;

const DENOM_FLOOR: f64 = 1e-300;

pub const NMF_CAVEAT: &str = "numerical evidence only: a failed search does not prove that no \
nonnegative factorization exists, and a small residual is not an exact factorization";

#[derive(Clone, Debug, PartialEq)]
pub struct NmfResult {
    /// Response-function matrix, rows x k.
    pub r: DMatrix<f64>,
    /// Epistemic-state matrix, k x cols.
    pub e: DMatrix<f64>,
    pub k: usize,
    pub residual: f64,
    pub iterations: usize,
    pub seed: u64,
    pub config: NmfConfig,
    pub history: Option<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct NmfExport<'a> {
    schema: &'static str,
    k: usize,
    residual: f64,
    iterations: usize,
    seed: u64,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    e: Vec<Vec<f64>>,
    config: &'a NmfConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<&'a Vec<f64>>,
}

impl Serialize for NmfResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NmfExport {
            schema: SCHEMA,
            k: self.k,
            residual: self.residual,
            iterations: self.iterations,
            seed: self.seed,
            r: rows_of(&self.r),
            e: rows_of(&self.e),
            config: &self.config,
            history: self.history.as_ref(),
        }
        .serialize(s)
    }
}

pub fn frobenius_residual(c: &DMatrix<f64>, r: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    (c - r * e).norm()
}

fn validate(c: &DMatrix<f64>, k: usize) -> Result<()> {
    if c.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("inner dimension k must be at least 1".into()));
    }
    if let Some(x) = c.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidParameter(format!("matrix entry {x} is negative or not finite")));
    }
    Ok(())
}

/// Best-of-restarts factorization of a COPE, using its block structure for
/// the ontological gauge.
pub fn nmf_factorize(c: &CopeMatrix, k: usize, cfg: &NmfConfig) -> Result<NmfResult> {
    nmf_factorize_matrix(c.entries(), Some(c.blocks()), k, cfg)
}

/// Best-of-restarts factorization of a plain nonnegative matrix. Restarts
/// run in parallel; the lowest residual wins, ties going to the lower seed.
pub fn nmf_factorize_matrix(
    c: &DMatrix<f64>,
    blocks: Option<&[Block]>,
    k: usize,
    cfg: &NmfConfig,
) -> Result<NmfResult> {
    validate(c, k)?;
    let restarts = cfg.restarts.max(1);
    let mut runs: Vec<NmfResult> = (0..restarts as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let (r, e) = random_init(c, k, seed);
            run(c, blocks, r, e, seed, cfg)
        })
        .collect();
    if k >= c.nrows().min(c.ncols()) {
        // A factorization at full inner dimension exists trivially.
        let (r, e) = trivial_init(c, k);
        runs.push(run(c, blocks, r, e, cfg.seed, cfg));
    }
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual).then(a.seed.cmp(&b.seed)))
        .expect("at least one restart"))
}

fn random_init(c: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (c.mean() / k as f64).sqrt().max(1e-8);
    let mut draw = |rows: usize, cols: usize| {
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs() * scale
        })
    };
    let r = draw(c.nrows(), k);
    let e = draw(k, c.ncols());
    (r, e)
}

fn trivial_init(c: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = c.shape();
    if cols <= rows {
        let mut r = DMatrix::zeros(rows, k);
        r.columns_mut(0, cols).copy_from(c);
        (r, DMatrix::identity(k, cols))
    } else {
        let mut e = DMatrix::zeros(k, cols);
        e.rows_mut(0, rows).copy_from(c);
        (DMatrix::identity(rows, k), e)
    }
}

/// Rescales ontic states so the first block's responses sum to one.
/// The product `R E` is unchanged.
fn gauge(r: &mut DMatrix<f64>, e: &mut DMatrix<f64>, blocks: Option<&[Block]>) {
    let Some(first) = blocks.and_then(|b| b.first()) else {
        return;
    };
    for l in 0..r.ncols() {
        let d: f64 = first.rows.iter().map(|&row| r[(row, l)]).sum();
        if d > DENOM_FLOOR {
            r.column_mut(l).unscale_mut(d);
            e.row_mut(l).scale_mut(d);
        }
    }
}

fn run(
    c: &DMatrix<f64>,
    blocks: Option<&[Block]>,
    mut r: DMatrix<f64>,
    mut e: DMatrix<f64>,
    seed: u64,
    cfg: &NmfConfig,
) -> NmfResult {
    let stop = STOP_RELATIVE * c.norm().max(1.0);
    let mut residual = frobenius_residual(c, &r, &e);
    let mut history = cfg.record_history.then(|| vec![residual]);
    let mut iterations = 0;
    while iterations < cfg.max_iter && residual > stop {
        match cfg.rule {
            UpdateRule::Multiplicative => multiplicative_step(c, &mut r, &mut e),
            UpdateRule::Hals => hals_step(c, &mut r, &mut e),
        }
        if cfg.constraint_mode == ConstraintMode::Ontological {
            gauge(&mut r, &mut e, blocks);
        }
        iterations += 1;
        residual = frobenius_residual(c, &r, &e);
        if let Some(h) = history.as_mut() {
            h.push(residual);
        }
    }
    gauge(&mut r, &mut e, blocks);
    r.apply(|x| *x = x.max(0.0));
    e.apply(|x| *x = x.max(0.0));
    let residual = frobenius_residual(c, &r, &e);
    NmfResult { k: r.ncols(), r, e, residual, iterations, seed, config: *cfg, history }
}

fn multiplicative_step(c: &DMatrix<f64>, r: &mut DMatrix<f64>, e: &mut DMatrix<f64>) {
    let num = r.transpose() * c;
    let den = (r.transpose() * &*r) * &*e;
    e.zip_zip_apply(&num, &den, |x, n, d| *x *= n / d.max(DENOM_FLOOR));
    let num = c * e.transpose();
    let den = &*r * (&*e * e.transpose());
    r.zip_zip_apply(&num, &den, |x, n, d| *x *= n / d.max(DENOM_FLOOR));
}

fn hals_step(c: &DMatrix<f64>, r: &mut DMatrix<f64>, e: &mut DMatrix<f64>) {
    let k = r.ncols();
    let rtc = r.transpose() * c;
    let rtr = r.transpose() * &*r;
    for l in 0..k {
        if rtr[(l, l)] <= DENOM_FLOOR {
            continue;
        }
        let update = (rtc.row(l) - rtr.row(l) * &*e) / rtr[(l, l)];
        let new_row = (e.row(l) + update).map(|x| x.max(0.0));
        e.row_mut(l).copy_from(&new_row);
    }
    let cet = c * e.transpose();
    let eet = &*e * e.transpose();
    for l in 0..k {
        if eet[(l, l)] <= DENOM_FLOOR {
            continue;
        }
        let update = (cet.column(l) - &*r * eet.column(l)) / eet[(l, l)];
        let new_col = (r.column(l) + update).map(|x| x.max(0.0));
        r.column_mut(l).copy_from(&new_col);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnmfReport {
    pub schema: &'static str,
    pub rank: usize,
    pub k: usize,
    pub found: bool,
    pub success_tol: f64,
    pub caveat: &'static str,
    pub best: NmfResult,
}

/// Factorization search at `k = numerical rank`.
pub fn enmf_search(c: &CopeMatrix, cfg: &NmfConfig, tol: Option<f64>) -> Result<EnmfReport> {
    let rank = numerical_rank(c.entries(), tol)?.rank;
    let best = nmf_factorize(c, rank.max(1), cfg)?;
    Ok(EnmfReport {
        schema: SCHEMA,
        rank,
        k: best.k,
        found: best.residual < cfg.success_tol,
        success_tol: cfg.success_tol,
        caveat: NMF_CAVEAT,
        best,
    })
}

/// Two-ontic-state deterministic model of the discrimination COPE for
/// orthogonal states with perfect success, in the preparation order
/// `phi, phi_perp, psi, psi_perp, g_phi, g_psi`.
pub fn explicit_orthogonal_model() -> NmfResult {
    #[rustfmt::skip]
    let r = DMatrix::from_row_slice(6, 2, &[
        1.0, 0.0,
        0.0, 1.0,
        0.0, 1.0,
        1.0, 0.0,
        1.0, 0.0,
        0.0, 1.0,
    ]);
    #[rustfmt::skip]
    let e = DMatrix::from_row_slice(2, 6, &[
        1.0, 0.0, 0.0, 1.0, 1.0, 0.0,
        0.0, 1.0, 1.0, 0.0, 0.0, 1.0,
    ]);
    let c = crate::fragments::meqsd_cope(crate::fragments::MeqsdParams { c_q: 0.0, s_q: 1.0 });
    let residual = frobenius_residual(c.entries(), &r, &e);
    NmfResult {
        r,
        e,
        k: 2,
        residual,
        iterations: 0,
        seed: 0,
        config: NmfConfig { max_iter: 0, restarts: 0, ..NmfConfig::default() },
        history: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationCheck {
    pub residual: f64,
    pub nonneg_ok: bool,
    pub stochastic_ok: bool,
    pub max_column_sum_error: f64,
    pub max_block_sum_error: f64,
}

/// Recomputes residual, nonnegativity and, when blocks are given,
/// stochasticity of `E` columns and of `R` block row sums.
pub fn verify_factorization(
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    e: &DMatrix<f64>,
    blocks: Option<&[Block]>,
) -> Result<FactorizationCheck> {
    if r.nrows() != c.nrows() || e.ncols() != c.ncols() || r.ncols() != e.nrows() {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{} to match {}x{}",
            r.nrows(),
            r.ncols(),
            e.nrows(),
            e.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let mut residual_sq = 0.0;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            let approx: f64 = (0..r.ncols()).map(|l| r[(i, l)] * e[(l, j)]).sum();
            residual_sq += (c[(i, j)] - approx).powi(2);
        }
    }
    let nonneg_ok = r.iter().chain(e.iter()).all(|&x| x >= -1e-14);
    let (mut col_err, mut block_err) = (0.0f64, 0.0f64);
    if let Some(blocks) = blocks {
        for j in 0..e.ncols() {
            col_err = col_err.max((e.column(j).sum() - 1.0).abs());
        }
        for b in blocks {
            for l in 0..r.ncols() {
                let s: f64 = b.rows.iter().map(|&i| r[(i, l)]).sum();
                block_err = block_err.max((s - 1.0).abs());
            }
        }
    }
    Ok(FactorizationCheck {
        residual: residual_sq.sqrt(),
        nonneg_ok,
        stochastic_ok: col_err <= CONSTRAINT_TOL && block_err <= CONSTRAINT_TOL,
        max_column_sum_error: col_err,
        max_block_sum_error: block_err,
    })
}
