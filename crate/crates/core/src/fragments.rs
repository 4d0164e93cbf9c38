//! Fragments (labeled preparations and binary projective tests) and their
//! COPE matrices, dense and factored.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    clone_inputs, equatorial_state, ideal_clone_companion, orthogonal_in_span, overlap_prob,
    projector_embed, sd_clone_pair, tensor, CloneCoefficients, HermitianVec, Ket, GRAM_TOL,
};

/// Slack allowed on probabilities and block column sums.
pub const PROB_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub label: String,
    pub ket: Ket,
}

impl Labeled {
    pub fn new(label: impl Into<String>, ket: Ket) -> Self {
        Labeled { label: label.into(), ket }
    }
}

/// Preparations and binary tests `{P, 1 - P}` with `P = |yes><yes|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    dim: usize,
    preparations: Vec<Labeled>,
    measurements: Vec<Labeled>,
}

impl Fragment {
    pub fn new(preparations: Vec<Labeled>, measurements: Vec<Labeled>) -> Result<Self> {
        let dim = preparations
            .first()
            .or(measurements.first())
            .map(|l| l.ket.dim())
            .ok_or_else(|| Error::Shape("fragment with no preparations or measurements".into()))?;
        for item in preparations.iter().chain(&measurements) {
            if item.ket.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: item.ket.dim() });
            }
        }
        for list in [&preparations, &measurements] {
            let mut seen = HashSet::new();
            for item in list.iter() {
                if !seen.insert(item.label.as_str()) {
                    return Err(Error::DuplicateLabel(item.label.clone()));
                }
            }
        }
        Ok(Fragment { dim, preparations, measurements })
    }

    /// Fragment whose tests are the preparations themselves.
    pub fn self_dual(preparations: Vec<Labeled>) -> Result<Self> {
        let measurements = preparations.clone();
        Fragment::new(preparations, measurements)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn preparations(&self) -> &[Labeled] {
        &self.preparations
    }

    pub fn measurements(&self) -> &[Labeled] {
        &self.measurements
    }
}

/// Rows of one measurement, in outcome order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub rows: Vec<usize>,
}

/// Outcome probabilities: rows are measurement outcomes, columns preparations.
#[derive(Clone, Debug, PartialEq)]
pub struct CopeMatrix {
    entries: DMatrix<f64>,
    blocks: Vec<Block>,
    column_labels: Vec<String>,
}

impl CopeMatrix {
    /// Validates entries in [0, 1] and unit column sums inside each block.
    pub fn new(entries: DMatrix<f64>, blocks: Vec<Block>, column_labels: Vec<String>) -> Result<Self> {
        if column_labels.len() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.ncols(),
                found: column_labels.len(),
            });
        }
        let mut covered = vec![false; entries.nrows()];
        for block in &blocks {
            for &r in &block.rows {
                if r >= entries.nrows() || covered[r] {
                    return Err(Error::Shape(format!(
                        "block {:?} references row {r} that is out of range or already assigned",
                        block.label
                    )));
                }
                covered[r] = true;
            }
        }
        if let Some(r) = covered.iter().position(|c| !c) {
            return Err(Error::Shape(format!("row {r} belongs to no measurement block")));
        }
        if let Some((i, &x)) = entries
            .iter()
            .enumerate()
            .find(|(_, x)| !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(*x))
        {
            let (r, c) = (i % entries.nrows(), i / entries.nrows());
            return Err(Error::InvalidParameter(format!(
                "entry ({r}, {c}) = {x} is not a probability"
            )));
        }
        for block in &blocks {
            for c in 0..entries.ncols() {
                let sum: f64 = block.rows.iter().map(|&r| entries[(r, c)]).sum();
                if (sum - 1.0).abs() > PROB_SLACK {
                    return Err(Error::InvalidParameter(format!(
                        "block {:?} column {c} sums to {sum}",
                        block.label
                    )));
                }
            }
        }
        Ok(CopeMatrix { entries, blocks, column_labels })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// `label` for the first outcome of a block, `label~k` for outcome k > 0.
    pub fn row_labels(&self) -> Vec<String> {
        let mut labels = vec![String::new(); self.nrows()];
        for block in &self.blocks {
            for (k, &r) in block.rows.iter().enumerate() {
                labels[r] = if k == 0 {
                    block.label.clone()
                } else {
                    format!("{}~{k}", block.label)
                };
            }
        }
        labels
    }

    /// First-outcome row of every block.
    pub fn yes_rows(&self) -> Vec<usize> {
        self.blocks.iter().filter_map(|b| b.rows.first().copied()).collect()
    }

    /// Maximum of `|C - C^T|` (square matrices only).
    pub fn asymmetry(&self) -> Option<f64> {
        (self.nrows() == self.ncols())
            .then(|| (&self.entries - self.entries.transpose()).abs().max())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeqsdParams {
    pub c_q: f64,
    pub s_q: f64,
}

impl MeqsdParams {
    pub fn new(c_q: f64, s_q: f64) -> Result<Self> {
        Ok(MeqsdParams { c_q: check_prob("c_q", c_q)?, s_q: check_prob("s_q", s_q)? })
    }

    /// Helstrom success probability `(1 + sqrt(1 - c_q)) / 2`.
    pub fn helstrom(c_q: f64) -> Result<Self> {
        let c_q = check_prob("c_q", c_q)?;
        MeqsdParams::new(c_q, 0.5 * (1.0 + (1.0 - c_q).sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdcParams {
    pub p_s: f64,
    pub p_f: f64,
    pub p_i: f64,
    pub delta: f64,
}

impl SdcParams {
    pub fn new(p_s: f64, p_f: f64, p_i: f64, delta: f64) -> Result<Self> {
        Ok(SdcParams {
            p_s: check_prob("p_s", p_s)?,
            p_f: check_prob("p_f", p_f)?,
            p_i: check_prob("p_i", p_i)?,
            delta: check_prob("delta", delta)?,
        })
    }

    /// Closed-form overlaps of `mu|aa> + eta|bb>` with `<aa|bb> = cos^2 phi`.
    pub fn from_coefficients(coeffs: &CloneCoefficients) -> Result<Self> {
        SdcParams::from_raw_coefficients(coeffs.phi(), coeffs.c(), coeffs.d())
    }

    /// As [`SdcParams::from_coefficients`] but without the normalization
    /// check. Only meaningful for diagnosing coefficient sets that fail it.
    pub fn from_raw_coefficients(phi: f64, c: f64, d: f64) -> Result<Self> {
        let (mu, eta) = (c + d, c - d);
        let s = phi.cos().powi(2);
        SdcParams::new(
            (2.0 * mu * eta + s * (mu * mu + eta * eta)).powi(2),
            (mu + eta * s).powi(2),
            (mu * s + eta).powi(2),
            s * s,
        )
    }

    /// Overlaps measured on the constructed clone kets.
    pub fn from_geometry(coeffs: &CloneCoefficients) -> Result<Self> {
        let (a, b) = clone_inputs(coeffs.phi());
        let (aa, bb) = (tensor(&a, &a), tensor(&b, &b));
        let (alpha, beta) = sd_clone_pair(coeffs)?;
        SdcParams::new(
            overlap_prob(&alpha, &beta)?,
            overlap_prob(&alpha, &aa)?,
            overlap_prob(&alpha, &bb)?,
            overlap_prob(&aa, &bb)?,
        )
    }
}

/// Accepts `p` within [`PROB_SLACK`] of `[0, 1]` and snaps it into range.
fn check_prob(name: &str, p: f64) -> Result<f64> {
    if (-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
        Ok(p.clamp(0.0, 1.0))
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")))
    }
}

fn binary_blocks(labels: &[&str]) -> Vec<Block> {
    labels
        .iter()
        .enumerate()
        .map(|(j, l)| Block { label: l.to_string(), rows: vec![2 * j, 2 * j + 1] })
        .collect()
}

fn strings(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

pub const MEQSD_LABELS: [&str; 6] = ["phi", "phi_perp", "psi", "psi_perp", "g_phi", "g_psi"];

/// The 6x6 two-state discrimination COPE; rows and columns ordered as
/// [`MEQSD_LABELS`], blocks `{phi, phi_perp}`, `{psi, psi_perp}`, `{g_phi, g_psi}`.
pub fn meqsd_cope(params: MeqsdParams) -> CopeMatrix {
    let (c, s) = (params.c_q, params.s_q);
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(6, 6, &[
        1.0,     0.0,     c,       1.0 - c, s,       1.0 - s,
        0.0,     1.0,     1.0 - c, c,       1.0 - s, s,
        c,       1.0 - c, 1.0,     0.0,     1.0 - s, s,
        1.0 - c, c,       0.0,     1.0,     s,       1.0 - s,
        s,       1.0 - s, 1.0 - s, s,       1.0,     0.0,
        1.0 - s, s,       s,       1.0 - s, 0.0,     1.0,
    ]);
    CopeMatrix::new(entries, binary_blocks(&["phi", "psi", "g"]), strings(&MEQSD_LABELS))
        .expect("parameters validated by MeqsdParams")
}

/// Equatorial discrimination fragment at confusability `c_q`, with the
/// Helstrom vectors on the axis perpendicular to the bisector of the two
/// states. Preparations follow [`MEQSD_LABELS`]; tests are `phi`, `psi`, `g_phi`.
pub fn meqsd_geometric(c_q: f64) -> Result<Fragment> {
    let c_q = check_prob("c_q", c_q)?;
    // Bloch azimuths +-a give |<phi|psi>|^2 = cos^2 a.
    let a = c_q.sqrt().acos();
    let kets = [
        equatorial_state(a),
        equatorial_state(a + PI),
        equatorial_state(-a),
        equatorial_state(PI - a),
        equatorial_state(FRAC_PI_2),
        equatorial_state(-FRAC_PI_2),
    ];
    let preps: Vec<Labeled> = MEQSD_LABELS
        .iter()
        .zip(kets)
        .map(|(l, k)| Labeled::new(*l, k))
        .collect();
    let tests = vec![preps[0].clone(), preps[2].clone(), preps[4].clone()];
    Fragment::new(preps, tests)
}

pub const SDC_LABELS: [&str; 8] = [
    "aa", "aa_perp", "alpha", "alpha_perp", "bb", "bb_perp", "beta", "beta_perp",
];

/// The 8x8 state-dependent cloning COPE, ordered as [`SDC_LABELS`], with
/// blocks `(aa)`, `(alpha)`, `(bb)`, `(beta)` of two rows each.
pub fn sdc_cope(params: SdcParams) -> CopeMatrix {
    let SdcParams { p_s: ps, p_f: pf, p_i: pi, delta: dl } = params;
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(8, 8, &[
        1.0,      0.0,      pf,       1.0 - pf, dl,       1.0 - dl, pi,       1.0 - pi,
        0.0,      1.0,      1.0 - pf, pf,       1.0 - dl, dl,       1.0 - pi, pi,
        pf,       1.0 - pf, 1.0,      0.0,      pi,       1.0 - pi, ps,       1.0 - ps,
        1.0 - pf, pf,       0.0,      1.0,      1.0 - pi, pi,       1.0 - ps, ps,
        dl,       1.0 - dl, pi,       1.0 - pi, 1.0,      0.0,      pf,       1.0 - pf,
        1.0 - dl, dl,       1.0 - pi, pi,       0.0,      1.0,      1.0 - pf, pf,
        pi,       1.0 - pi, ps,       1.0 - ps, pf,       1.0 - pf, 1.0,      0.0,
        1.0 - pi, pi,       1.0 - ps, ps,       1.0 - pf, pf,       0.0,      1.0,
    ]);
    CopeMatrix::new(entries, binary_blocks(&["aa", "alpha", "bb", "beta"]), strings(&SDC_LABELS))
        .expect("parameters validated by SdcParams")
}

/// Orthogonal to `v` inside span{v, x, y}, using whichever of `x`, `y` is
/// further from `v`. Assumes `v` lies in a 2-dim span with both.
fn orthogonal_in_plane(v: &Ket, x: &Ket, y: &Ket) -> Result<Ket> {
    let partner = if overlap_prob(v, x)? <= overlap_prob(v, y)? { x } else { y };
    orthogonal_in_span(v, partner)
}

/// State-dependent cloning fragment: ideal clones, clones and their
/// orthogonals inside span{|aa>, |bb>}. Preparations follow [`SDC_LABELS`];
/// tests are `aa`, `alpha`, `bb`, `beta`.
pub fn sdc_geometric(coeffs: &CloneCoefficients) -> Result<Fragment> {
    let (a, b) = clone_inputs(coeffs.phi());
    let (aa, bb) = (tensor(&a, &a), tensor(&b, &b));
    let (alpha, beta) = sd_clone_pair(coeffs)?;
    let kets = [
        aa.clone(),
        orthogonal_in_span(&aa, &bb)?,
        alpha.clone(),
        orthogonal_in_plane(&alpha, &aa, &bb)?,
        bb.clone(),
        orthogonal_in_span(&bb, &aa)?,
        beta.clone(),
        orthogonal_in_plane(&beta, &aa, &bb)?,
    ];
    let preps: Vec<Labeled> = SDC_LABELS
        .iter()
        .zip(kets)
        .map(|(l, k)| Labeled::new(*l, k))
        .collect();
    let tests = [0, 2, 4, 6].iter().map(|&i| preps[i].clone()).collect();
    Fragment::new(preps, tests)
}

/// Pairwise ray distinctness threshold for clone inputs.
const DISTINCT_TOL: f64 = 1e-10;

/// Cloning fragment: for each input `a_i`, the preparations `|a_i a_i>`,
/// `|alpha_i>` and their two orthogonals inside span{|a_i a_i>, |alpha_i>},
/// in that order. Tests equal preparations.
///
/// A clone parallel to its ideal clone spans only one direction; the
/// orthogonals are then taken inside span{|aa>, |a a_perp>} and coincide.
pub fn cloning_fragment(inputs: &[Ket], clones: &[Ket]) -> Result<Fragment> {
    if inputs.len() != clones.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), found: clones.len() });
    }
    for k in inputs {
        if k.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: k.dim() });
        }
    }
    for k in clones {
        if k.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: k.dim() });
        }
    }
    if let Some((first, second)) = find_duplicate_ray(inputs) {
        return Err(Error::DuplicateInput { first, second });
    }
    let per_input: Vec<[Labeled; 4]> = inputs
        .par_iter()
        .zip(clones)
        .enumerate()
        .map(|(i, (a, alpha))| -> Result<[Labeled; 4]> {
            let aa = tensor(a, a);
            let gram = 1.0 - overlap_prob(&aa, alpha)?;
            let (aa_perp, alpha_perp) = if gram > GRAM_TOL {
                (orthogonal_in_span(&aa, alpha)?, orthogonal_in_span(alpha, &aa)?)
            } else {
                let companion = ideal_clone_companion(a)?;
                (orthogonal_in_span(&aa, &companion)?, orthogonal_in_span(alpha, &companion)?)
            };
            Ok([
                Labeled::new(format!("aa[{i}]"), aa),
                Labeled::new(format!("alpha[{i}]"), alpha.clone()),
                Labeled::new(format!("aa_perp[{i}]"), aa_perp),
                Labeled::new(format!("alpha_perp[{i}]"), alpha_perp),
            ])
        })
        .collect::<Result<_>>()?;
    let preps: Vec<Labeled> = per_input.into_iter().flatten().collect();
    Fragment::self_dual(preps)
}

/// Index of the in-span orthogonal companion of preparation `p` in a
/// [`cloning_fragment`].
pub fn cloning_partner(p: usize) -> usize {
    4 * (p / 4) + [2, 3, 0, 1][p % 4]
}

fn find_duplicate_ray(kets: &[Ket]) -> Option<(usize, usize)> {
    (0..kets.len()).into_par_iter().find_map_first(|i| {
        kets[i + 1..].iter().enumerate().find_map(|(off, other)| {
            let p = kets[i].inner(other).map(|z| z.norm_sqr()).unwrap_or(0.0);
            (p > 1.0 - DISTINCT_TOL).then_some((i, i + 1 + off))
        })
    })
}

/// Dense block-expanded COPE: `yes` row `|<effect|prep>|^2`, `no` row its
/// complement, per measurement.
pub fn cope_from_fragment(f: &Fragment) -> Result<CopeMatrix> {
    let (m, n) = (f.measurements.len(), f.preparations.len());
    let mut entries = DMatrix::zeros(2 * m, n);
    for (j, effect) in f.measurements.iter().enumerate() {
        for (i, prep) in f.preparations.iter().enumerate() {
            let yes = overlap_prob(&effect.ket, &prep.ket)?;
            entries[(2 * j, i)] = yes;
            entries[(2 * j + 1, i)] = 1.0 - yes;
        }
    }
    let blocks = f
        .measurements
        .iter()
        .enumerate()
        .map(|(j, e)| Block { label: e.label.clone(), rows: vec![2 * j, 2 * j + 1] })
        .collect();
    let labels = f.preparations.iter().map(|p| p.label.clone()).collect();
    CopeMatrix::new(entries, blocks, labels)
}

/// A COPE held as a product of projector embeddings.
///
/// `effects` (k x m) holds one embedded yes-effect per column and `preps`
/// (k x n) one embedded preparation per column, with k = d^2. Logical rows
/// come in (yes, no) pairs per measurement: yes is `effects[:,j] . preps[:,i]`,
/// no is its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredCope {
    inner_dim: usize,
    op_dim: usize,
    effects: DMatrix<f64>,
    preps: DMatrix<f64>,
    row_labels: Vec<String>,
    column_labels: Vec<String>,
}

impl FactoredCope {
    pub fn from_embeddings(
        effects: &[HermitianVec],
        preps: &[HermitianVec],
        row_labels: Vec<String>,
        column_labels: Vec<String>,
    ) -> Result<Self> {
        let op_dim = effects
            .first()
            .or(preps.first())
            .map(|h| h.op_dim)
            .ok_or_else(|| Error::Shape("empty factored COPE".into()))?;
        for h in effects.iter().chain(preps) {
            if h.op_dim != op_dim {
                return Err(Error::DimensionMismatch { expected: op_dim, found: h.op_dim });
            }
        }
        if row_labels.len() != effects.len() || column_labels.len() != preps.len() {
            return Err(Error::Shape("label count does not match factor sizes".into()));
        }
        let k = op_dim * op_dim;
        let stack = |hs: &[HermitianVec]| {
            DMatrix::from_iterator(k, hs.len(), hs.iter().flat_map(|h| h.coords.iter().copied()))
        };
        Ok(FactoredCope {
            inner_dim: k,
            op_dim,
            effects: stack(effects),
            preps: stack(preps),
            row_labels,
            column_labels,
        })
    }

    pub fn inner_dim(&self) -> usize {
        self.inner_dim
    }

    pub fn op_dim(&self) -> usize {
        self.op_dim
    }

    pub fn n_measurements(&self) -> usize {
        self.effects.ncols()
    }

    pub fn n_preparations(&self) -> usize {
        self.preps.ncols()
    }

    /// Logical rows including complements.
    pub fn n_rows(&self) -> usize {
        2 * self.n_measurements()
    }

    /// Whether logical row `r` is a complement (`no`) row.
    pub fn is_complement_row(r: usize) -> bool {
        r % 2 == 1
    }

    /// Left factor, one yes-effect per row (m x k).
    pub fn left(&self) -> DMatrix<f64> {
        self.effects.transpose()
    }

    /// Right factor, one preparation per column (k x n).
    pub fn right(&self) -> &DMatrix<f64> {
        &self.preps
    }

    pub(crate) fn effect_columns(&self) -> &DMatrix<f64> {
        &self.effects
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// `p(yes | prep, measurement)`.
    pub fn yes_entry(&self, measurement: usize, prep: usize) -> f64 {
        self.effects.column(measurement).dot(&self.preps.column(prep))
    }

    pub fn entry(&self, row: usize, prep: usize) -> f64 {
        let yes = self.yes_entry(row / 2, prep);
        if Self::is_complement_row(row) {
            1.0 - yes
        } else {
            yes
        }
    }

    /// Square matrix of yes rows (m x n).
    pub fn dense_yes(&self) -> DMatrix<f64> {
        self.effects.transpose() * &self.preps
    }

    /// Full block-expanded dense matrix (2m x n).
    pub fn dense(&self) -> DMatrix<f64> {
        let yes = self.dense_yes();
        DMatrix::from_fn(self.n_rows(), self.n_preparations(), |r, c| {
            let y = yes[(r / 2, c)];
            if Self::is_complement_row(r) {
                1.0 - y
            } else {
                y
            }
        })
    }

    /// Keeps the listed measurements and preparations, in the given order.
    pub fn restrict(&self, measurements: &[usize], preps: &[usize]) -> FactoredCope {
        let pick = |m: &DMatrix<f64>, idx: &[usize]| m.select_columns(idx.iter());
        FactoredCope {
            inner_dim: self.inner_dim,
            op_dim: self.op_dim,
            effects: pick(&self.effects, measurements),
            preps: pick(&self.preps, preps),
            row_labels: measurements.iter().map(|&j| self.row_labels[j].clone()).collect(),
            column_labels: preps.iter().map(|&i| self.column_labels[i].clone()).collect(),
        }
    }

    /// Left factor for the logical rows: every yes-effect plus the identity,
    /// whose span contains all complement rows.
    pub(crate) fn left_with_identity(&self) -> DMatrix<f64> {
        let m = self.n_measurements();
        let identity = HermitianVec::identity(self.op_dim);
        let mut out = DMatrix::zeros(m + 1, self.inner_dim);
        out.rows_mut(0, m).copy_from(&self.effects.transpose());
        for (k, x) in identity.coords.iter().enumerate() {
            out[(m, k)] = *x;
        }
        out
    }
}

/// Embeds every test and preparation of `f`.
pub fn factored_cope(f: &Fragment) -> Result<FactoredCope> {
    let embed = |list: &[Labeled]| -> Vec<HermitianVec> {
        list.par_iter().map(|l| projector_embed(&l.ket)).collect()
    };
    FactoredCope::from_embeddings(
        &embed(&f.measurements),
        &embed(&f.preparations),
        f.measurements.iter().map(|l| l.label.clone()).collect(),
        f.preparations.iter().map(|l| l.label.clone()).collect(),
    )
}

/// Complex ket from real amplitudes, used by tests and bindings.
pub fn real_ket(amps: &[f64]) -> Result<Ket> {
    Ket::new(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
}
