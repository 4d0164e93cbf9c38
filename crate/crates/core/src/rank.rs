//! Ranks (numerical, factored, exact), zero patterns, the central-binomial
//! bound on ontic dimension, and the rank-separation verdict.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{CopeMatrix, FactoredCope};
use crate::SCHEMA;

/// Default zero threshold.
pub const DEFAULT_EPS: f64 = 1e-10;

/// Default relative rank tolerance for a `rows x cols` matrix.
pub fn default_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * 1e-12
}

/// Singular values (descending) and the count above `tol * sigma_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

fn count_above(mut sv: Vec<f64>, tol: f64) -> RankInfo {
    sv.sort_by(|a, b| b.total_cmp(a));
    let cutoff = tol * sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    RankInfo { rank, singular_values: sv }
}

/// SVD rank. `tol` is relative to the largest singular value and defaults
/// to [`default_tol`].
pub fn numerical_rank(m: &DMatrix<f64>, tol: Option<f64>) -> Result<RankInfo> {
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let tol = tol.unwrap_or_else(|| default_tol(m.nrows(), m.ncols()));
    let sv = m.clone().svd(false, false).singular_values;
    Ok(count_above(sv.iter().copied().collect(), tol))
}

const TSQR_CHUNK: usize = 2048;

/// Upper-triangular factor of a tall matrix by tree QR over row chunks.
fn thin_r(a: DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() <= TSQR_CHUNK.max(a.ncols()) {
        return a.qr().r();
    }
    let starts: Vec<usize> = (0..a.nrows()).step_by(TSQR_CHUNK).collect();
    let parts: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let len = TSQR_CHUNK.min(a.nrows() - s);
            a.rows(s, len).into_owned().qr().r()
        })
        .collect();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, a.ncols());
    let mut at = 0;
    for p in &parts {
        stacked.rows_mut(at, p.nrows()).copy_from(p);
        at += p.nrows();
    }
    thin_r(stacked)
}

/// Rank of the block-expanded product from its thin factors alone.
///
/// Complement rows `1 - p` lie in the span of the yes rows and the identity
/// row, so the row space is that of `[L; I] R`. Both factors are reduced to
/// k x k triangles by TSQR and the small product is decomposed.
pub fn factored_rank(fc: &FactoredCope, tol: Option<f64>) -> RankInfo {
    let tol = tol.unwrap_or_else(|| default_tol(fc.n_rows(), fc.n_preparations()));
    let r_left = thin_r(fc.left_with_identity());
    let r_right = thin_r(fc.right().transpose());
    let core = &r_left * r_right.transpose();
    count_above(core.svd(false, false).singular_values.iter().copied().collect(), tol)
}

/// Dense matrix of exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn from_rationals(rows: usize, cols: usize, data: Vec<BigRational>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(RationalMatrix { rows, cols, data })
    }

    /// Exact binary value of every entry; non-finite entries are rejected.
    pub fn from_f64(m: &DMatrix<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let x = m[(r, c)];
                data.push(BigRational::from_float(x).ok_or(Error::NonRationalEntry {
                    row: r,
                    col: c,
                    value: x.to_string(),
                })?);
            }
        }
        RationalMatrix::from_rationals(m.nrows(), m.ncols(), data)
    }

    /// Row-major entries written as integers, fractions `p/q` or decimals.
    pub fn from_strings(rows: usize, cols: usize, entries: &[&str]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: entries.len() });
        }
        let data = entries
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse_rational(s).ok_or(Error::NonRationalEntry {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                    value: s.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        RationalMatrix::from_rationals(rows, cols, data)
    }

    pub fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.cols + c]
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).to_f64().unwrap_or(f64::NAN))
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let (p, q): (BigInt, BigInt) = (p.trim().parse().ok()?, q.trim().parse().ok()?);
        return (!q.is_zero()).then(|| BigRational::new(p, q));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int}{frac}").parse().ok()?;
    let value = BigRational::new(digits, num_traits::pow(BigInt::from(10), frac.len()));
    Some(if neg { -value } else { value })
}

/// Rank by fraction-free (Bareiss) elimination after clearing denominators
/// row by row.
pub fn exact_rank_rational(m: &RationalMatrix) -> usize {
    let mut a: Vec<Vec<BigInt>> = (0..m.rows)
        .map(|r| {
            let row = &m.data[r * m.cols..(r + 1) * m.cols];
            let lcm = row.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            row.iter().map(|x| x.numer() * (&lcm / x.denom())).collect()
        })
        .collect();
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..m.cols {
        if rank == m.rows {
            break;
        }
        let Some(p) = (rank..m.rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(p, rank);
        let pivot_row = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let lead = row[col].clone();
            for j in col + 1..m.cols {
                row[j] = (&row[j] * &pivot_row[col] - &lead * &pivot_row[j]) / &prev;
            }
            row[col] = BigInt::zero();
        }
        prev = pivot_row[col].clone();
        rank += 1;
    }
    rank
}

/// Positions of (near-)zero entries by row and by column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroPattern {
    pub eps: f64,
    pub row_zeros: Vec<Vec<usize>>,
    pub col_zeros: Vec<Vec<usize>>,
}

pub fn zero_pattern(m: &DMatrix<f64>, eps: f64) -> ZeroPattern {
    let mut row_zeros = vec![Vec::new(); m.nrows()];
    let mut col_zeros = vec![Vec::new(); m.ncols()];
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if m[(r, c)].abs() <= eps {
                row_zeros[r].push(c);
                col_zeros[c].push(r);
            }
        }
    }
    ZeroPattern { eps, row_zeros, col_zeros }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

fn antichain(sets: &[Vec<usize>]) -> bool {
    if sets.iter().any(|s| s.is_empty()) {
        return false;
    }
    (0..sets.len()).into_par_iter().all(|i| {
        sets.iter()
            .enumerate()
            .all(|(j, other)| i == j || !is_subset(&sets[i], other))
    })
}

/// Every row has a zero, and no row's zero set is contained in another's;
/// likewise for columns. The zero sets in `zp` determine the result; `m`
/// only fixes the shape.
pub fn antichain_hypothesis(zp: &ZeroPattern, m: &DMatrix<f64>) -> bool {
    debug_assert_eq!(zp.row_zeros.len(), m.nrows());
    debug_assert_eq!(zp.col_zeros.len(), m.ncols());
    antichain(&zp.row_zeros) && antichain(&zp.col_zeros)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisMode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub ok: bool,
    pub mode: HypothesisMode,
    /// Ordered pairs examined per side (rows, then columns).
    pub pairs_checked: u64,
    /// Pairs whose structured witness failed and needed a full search.
    pub fallback_searches: u64,
}

/// Sampling controls for large factored COPEs.
#[derive(Clone, Copy, Debug)]
pub struct SamplingConfig {
    /// Largest size checked exhaustively.
    pub exhaustive_cap: usize,
    /// Ordered pairs sampled per side above the cap.
    pub samples: usize,
    pub seed: u64,
    /// Known zero of each row/column, tried before a full search.
    pub partner: Option<fn(usize) -> usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { exhaustive_cap: 2000, samples: 1_000_000, seed: 0, partner: None }
    }
}

/// Antichain hypothesis on the square yes-row view `effects[rows] x preps[cols]`
/// of a factored COPE, without materializing it above the exhaustive cap.
///
/// Sampled mode first confirms that every row and column has a zero at its
/// structured partner (when one is given), then tests uniformly drawn
/// ordered pairs of distinct indices.
pub fn factored_antichain(
    fc: &FactoredCope,
    rows: &[usize],
    cols: &[usize],
    eps: f64,
    cfg: &SamplingConfig,
) -> HypothesisCheck {
    let size = rows.len().max(cols.len());
    if size <= cfg.exhaustive_cap {
        let dense = DMatrix::from_fn(rows.len(), cols.len(), |r, c| fc.yes_entry(rows[r], cols[c]));
        let zp = zero_pattern(&dense, eps);
        let n = (rows.len() * rows.len().saturating_sub(1) + cols.len() * cols.len().saturating_sub(1)) as u64;
        return HypothesisCheck {
            ok: antichain_hypothesis(&zp, &dense),
            mode: HypothesisMode::Exhaustive,
            pairs_checked: n,
            fallback_searches: 0,
        };
    }
    let all_preps: Vec<usize> = (0..fc.n_preparations()).collect();
    let all_effects: Vec<usize> = (0..fc.n_measurements()).collect();
    let by_row = |r: usize, c: usize| fc.yes_entry(r, c);
    let by_col = |c: usize, r: usize| fc.yes_entry(r, c);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let row_side = sampled_side(rows, &all_preps, &by_row, eps, cfg, &mut rng);
    let col_side = sampled_side(cols, &all_effects, &by_col, eps, cfg, &mut rng);
    HypothesisCheck {
        ok: row_side.0 && col_side.0,
        mode: HypothesisMode::Sampled,
        pairs_checked: row_side.1 + col_side.1,
        fallback_searches: row_side.2 + col_side.2,
    }
}

/// One side of the sampled check. `entry(i, j)` reads line `i` at position
/// `j` of the opposite side, `witnesses` lists all opposite positions.
fn sampled_side<F>(
    lines: &[usize],
    witnesses: &[usize],
    entry: &F,
    eps: f64,
    cfg: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> (bool, u64, u64)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if lines.len() < 2 {
        let ok = lines.iter().all(|&i| witnesses.iter().any(|&j| entry(i, j).abs() <= eps));
        return (ok, 0, 0);
    }
    // Structured partners are hints: out of range or nonzero ones fall back
    // to scanning every witness.
    let n_witness = witnesses.len();
    let hint = |i: usize| cfg.partner.map(|p| p(i)).filter(|&j| j < n_witness);
    let has_zero = |i: usize| -> (bool, bool) {
        if hint(i).is_some_and(|j| entry(i, j).abs() <= eps) {
            return (true, false);
        }
        (witnesses.iter().any(|&j| entry(i, j).abs() <= eps), true)
    };
    let zero_checks: Vec<(bool, bool)> = lines.par_iter().map(|&i| has_zero(i)).collect();
    let zero_fallbacks = zero_checks.iter().filter(|z| z.1).count() as u64;
    if !zero_checks.iter().all(|z| z.0) {
        return (false, 0, zero_fallbacks);
    }
    let pairs: Vec<(usize, usize)> = (0..cfg.samples)
        .map(|_| {
            let a = rng.random_range(0..lines.len());
            let mut b = rng.random_range(0..lines.len() - 1);
            if b >= a {
                b += 1;
            }
            (lines[a], lines[b])
        })
        .collect();
    let outcomes: Vec<(bool, bool)> = pairs
        .par_iter()
        .map(|&(i, other)| {
            let separates = |j: usize| entry(i, j).abs() <= eps && entry(other, j).abs() > eps;
            if hint(i).is_some_and(separates) {
                return (true, false);
            }
            (witnesses.iter().any(|&j| separates(j)), true)
        })
        .collect();
    let ok = outcomes.iter().all(|o| o.0);
    let fallbacks = zero_fallbacks + outcomes.iter().filter(|o| o.1).count() as u64;
    (ok, pairs.len() as u64, fallbacks)
}

/// First index of every distinct vector, comparing coordinates to `tol`.
/// Vectors are bucketed by a coarse quantization and verified exactly
/// inside each bucket.
pub fn distinct_representatives<F>(count: usize, vector: F, tol: f64) -> Vec<usize>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let grid = (tol * 100.0).max(1e-9);
    let vectors: Vec<Vec<f64>> = (0..count).into_par_iter().map(&vector).collect();
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut reps = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let key: Vec<i64> = v.iter().map(|x| (x / grid).round() as i64).collect();
        let bucket = buckets.entry(key).or_default();
        let dup = bucket
            .iter()
            .any(|&j| vectors[j].iter().zip(v).all(|(a, b)| (a - b).abs() <= tol));
        if !dup {
            bucket.push(i);
            reps.push(i);
        }
    }
    reps
}

const DEDUP_TOL: f64 = 1e-9;

/// Largest `l` with `C(l, l/2) <= n` and smallest `s` with `C(s, s/2) >= n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpernerBound {
    pub n: u64,
    pub l: u64,
    pub s_min: u64,
}

/// Central binomial coefficients `C(0,0), C(1,0), C(2,1), ...` as an
/// exact iterator.
pub fn central_binomials() -> impl Iterator<Item = BigUint> {
    let mut l: u64 = 0;
    let mut cur = BigUint::one();
    std::iter::from_fn(move || {
        let out = cur.clone();
        // C(l+1, (l+1)/2) from C(l, l/2).
        cur = if l.is_multiple_of(2) {
            let m = l / 2;
            cur.clone() * (2 * m + 1) / (m + 1)
        } else {
            cur.clone() * 2u32
        };
        l += 1;
        Some(out)
    })
}

pub fn sperner_bound(n: u64) -> SpernerBound {
    let target = BigUint::from(n);
    let mut l = 0;
    let mut s_min = None;
    for (s, b) in central_binomials().enumerate() {
        if s_min.is_none() && b >= target {
            s_min = Some(s as u64);
        }
        if b > target {
            break;
        }
        l = s as u64;
    }
    SpernerBound { n, l, s_min: s_min.unwrap_or(0) }
}

/// Smallest preparation count whose Sperner bound exceeds `rank_cap`:
/// `C(r+1, (r+1)/2)`.
pub fn min_preparations_for_separation(rank_cap: u64) -> BigUint {
    central_binomials()
        .nth(rank_cap as usize + 1)
        .expect("central binomial iterator is infinite")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Contextual,
    Inconclusive,
}

/// Certification result. `Inconclusive` never asserts a noncontextual model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub schema: String,
    pub outcome: Outcome,
    pub rank: usize,
    pub bound_l: u64,
    pub n: u64,
    pub hypothesis_ok: bool,
    pub hypothesis_mode: HypothesisMode,
    pub hypothesis: String,
    pub chain: Vec<String>,
    pub singular_values: Vec<f64>,
}

pub const HYPOTHESIS_STATEMENT: &str = "every row and every column has a zero entry, and no \
row (column) has its zero set contained in the zero set of another row (column)";

pub enum CopeInput<'a> {
    Dense(&'a CopeMatrix),
    Factored(&'a FactoredCope),
}

#[derive(Clone, Copy, Debug)]
pub struct VerdictConfig {
    pub tol: Option<f64>,
    pub eps: f64,
    /// Preparation count to use when it cannot be read off a square view.
    pub n: Option<u64>,
    pub sampling: SamplingConfig,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig { tol: None, eps: DEFAULT_EPS, n: None, sampling: SamplingConfig::default() }
    }
}

fn dedup_lines(m: &DMatrix<f64>, rows: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let r = distinct_representatives(rows.len(), |i| m.row(rows[i]).iter().copied().collect(), DEDUP_TOL);
    let r: Vec<usize> = r.into_iter().map(|i| rows[i]).collect();
    let c = distinct_representatives(m.ncols(), |j| rows.iter().map(|&i| m[(i, j)]).collect(), DEDUP_TOL);
    (r, c)
}

/// Rank-separation verdict.
///
/// Duplicate rows and columns are quotiented first. The Sperner count `n`
/// is read from the square view: all outcome rows if they match the
/// distinct preparations in number, otherwise the first-outcome row of each
/// block. Factored inputs always use the yes-row view. An explicit
/// `cfg.n` overrides the count and keeps all outcome rows.
pub fn rank_separation_verdict(input: CopeInput<'_>, cfg: &VerdictConfig) -> Result<Verdict> {
    let (rank_info, n, check) = match input {
        CopeInput::Dense(c) => {
            let m = c.entries();
            let rank_info = numerical_rank(m, cfg.tol)?;
            let all: Vec<usize> = (0..m.nrows()).collect();
            let (rows_all, cols_all) = dedup_lines(m, &all);
            let (rows, cols) = if cfg.n.is_some() || rows_all.len() == cols_all.len() {
                (rows_all, cols_all)
            } else {
                let (r, c) = dedup_lines(m, &c.yes_rows());
                if r.len() != c.len() {
                    return Err(Error::Shape(format!(
                        "cannot infer n: {} distinct outcome rows, {} distinct yes rows, {} distinct preparations",
                        m.nrows(),
                        r.len(),
                        c.len()
                    )));
                }
                (r, c)
            };
            let view = m.select_rows(rows.iter()).select_columns(cols.iter());
            let zp = zero_pattern(&view, cfg.eps);
            let n = cfg.n.unwrap_or(cols.len() as u64);
            let ok = antichain_hypothesis(&zp, &view);
            let pairs = (rows.len() * rows.len().saturating_sub(1)
                + cols.len() * cols.len().saturating_sub(1)) as u64;
            (rank_info, n, HypothesisCheck { ok, mode: HypothesisMode::Exhaustive, pairs_checked: pairs, fallback_searches: 0 })
        }
        CopeInput::Factored(fc) => {
            if fc.n_measurements() == 0 || fc.n_preparations() == 0 {
                return Err(Error::EmptyMatrix);
            }
            let rank_info = factored_rank(fc, cfg.tol);
            let effects = fc.effect_columns();
            let preps = fc.right();
            let rows = distinct_representatives(fc.n_measurements(), |j| effects.column(j).iter().copied().collect(), DEDUP_TOL);
            let cols = distinct_representatives(fc.n_preparations(), |i| preps.column(i).iter().copied().collect(), DEDUP_TOL);
            let n = match cfg.n {
                Some(n) => n,
                None if rows.len() == cols.len() => cols.len() as u64,
                None => {
                    return Err(Error::Shape(format!(
                        "cannot infer n: {} distinct effects, {} distinct preparations",
                        rows.len(),
                        cols.len()
                    )))
                }
            };
            let check = factored_antichain(fc, &rows, &cols, cfg.eps, &cfg.sampling);
            (rank_info, n, check)
        }
    };
    Ok(assemble(rank_info, n, check))
}

fn assemble(rank_info: RankInfo, n: u64, check: HypothesisCheck) -> Verdict {
    let bound = sperner_bound(n);
    let rank = rank_info.rank;
    let contextual = check.ok && bound.l > rank as u64;
    let mut chain = Vec::new();
    if check.ok {
        chain.push(format!(
            "zero-pattern bound: the {n} preparations have pairwise incomparable zero sets, so by \
             Sperner counting any nonnegative factorization needs an ontic dimension of at least {}",
            bound.l
        ));
    } else {
        chain.push("zero-pattern bound unavailable: the antichain hypothesis fails".to_string());
    }
    if contextual {
        chain.push(format!(
            "fragment: COPE rank {rank} < {}, so no equirank nonnegative factorization exists and \
             every ontological model of the fragment is contextual",
            bound.l
        ));
        chain.push(
            "theory: a fragment without an equirank factorization rules one out for every \
             theory containing it under relative tomographic completeness, so that theory is \
             contextual"
                .to_string(),
        );
    } else {
        chain.push(format!(
            "no separation: rank {rank}, bound {}; this does not establish a noncontextual model",
            bound.l
        ));
    }
    Verdict {
        schema: SCHEMA.to_string(),
        outcome: if contextual { Outcome::Contextual } else { Outcome::Inconclusive },
        rank,
        bound_l: bound.l,
        n,
        hypothesis_ok: check.ok,
        hypothesis_mode: check.mode,
        hypothesis: HYPOTHESIS_STATEMENT.to_string(),
        chain,
        singular_values: rank_info.singular_values,
    }
}
