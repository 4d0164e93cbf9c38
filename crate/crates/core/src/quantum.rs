//! Pure-state linear algebra: kets, overlaps, in-span orthogonals and the
//! real Hermitian-basis embedding of rank-1 projectors.

use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitudes with modulus at or below this are skipped when fixing the
/// global phase.
const PHASE_EPS: f64 = 1e-12;

/// Minimum Gram determinant for two unit kets to count as independent.
pub const GRAM_TOL: f64 = 1e-12;

/// Tolerance of the clone normalization constraint.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// A unit-norm pure state.
///
/// Constructors normalize and fix the global phase so that the first
/// nonvanishing amplitude is real and positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amps: Vec<Complex64>,
}

impl Ket {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidParameter("ket with no amplitudes".into()));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("ket with non-finite amplitude".into()));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::InvalidParameter("ket with zero norm".into()));
        }
        let mut amps: Vec<Complex64> = amps.into_iter().map(|z| z / norm).collect();
        if let Some(lead) = amps.iter().find(|z| z.norm() > PHASE_EPS).copied() {
            let phase = lead.conj() / lead.norm();
            for z in &mut amps {
                *z *= phase;
            }
        }
        Ok(Ket { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Ket::new(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Computational basis state `|k>` of dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[k] = Complex64::new(1.0, 0.0);
        Ket { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Ket) -> Result<Complex64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The orthogonal qubit state, `(-conj b, conj a)` for `(a, b)`.
    pub fn qubit_complement(&self) -> Result<Ket> {
        check_dims(2, self.dim())?;
        let (a, b) = (self.amps[0], self.amps[1]);
        Ket::new(vec![-b.conj(), a.conj()])
    }

    /// Linear combination `x*self + y*other`, renormalized.
    pub fn combine(&self, x: Complex64, other: &Ket, y: Complex64) -> Result<Ket> {
        check_dims(self.dim(), other.dim())?;
        Ket::new(
            self.amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| x * a + y * b)
                .collect(),
        )
    }
}

impl Serialize for Ket {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.amps.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ket {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ket::new(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
            .map_err(de::Error::custom)
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `(cos(theta/2), e^{i phi} sin(theta/2))`.
pub fn bloch_state(theta: f64, phi: f64) -> Ket {
    let (s, c) = (theta / 2.0).sin_cos();
    Ket::new(vec![
        Complex64::new(c, 0.0),
        Complex64::from_polar(s, phi),
    ])
    .expect("Bloch amplitudes are finite with unit norm")
}

pub fn equatorial_state(phi: f64) -> Ket {
    bloch_state(std::f64::consts::FRAC_PI_2, phi)
}

/// Real qubit state `(cos(angle/2), sin(angle/2))`; `<real(x)|real(-x)> = cos x`.
pub fn real_plane_state(angle: f64) -> Ket {
    let (s, c) = (angle / 2.0).sin_cos();
    Ket::from_real(&[c, s]).expect("unit real amplitudes")
}

/// Kronecker product, `a` as the most significant factor.
pub fn tensor(a: &Ket, b: &Ket) -> Ket {
    let amps = a
        .amps
        .iter()
        .flat_map(|x| b.amps.iter().map(move |y| x * y))
        .collect();
    Ket::new(amps).expect("product of unit kets")
}

/// `|a>|a_perp>`: the unit vector orthogonal to the ideal clone `|aa>` along
/// which clone models are rotated. It leaves the symmetric subspace.
pub fn ideal_clone_companion(a: &Ket) -> Result<Ket> {
    Ok(tensor(a, &a.qubit_complement()?))
}

/// `|<a|b>|^2`, clamped to [0, 1].
pub fn overlap_prob(a: &Ket, b: &Ket) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().clamp(0.0, 1.0))
}

/// Unit vector in span{v, u} orthogonal to `v`.
pub fn orthogonal_in_span(v: &Ket, u: &Ket) -> Result<Ket> {
    let proj = v.inner(u)?;
    let gram_det = v.norm_sqr() * u.norm_sqr() - proj.norm_sqr();
    if gram_det <= GRAM_TOL {
        return Err(Error::DegenerateSpan { gram_det });
    }
    u.combine(Complex64::new(1.0, 0.0), v, -proj)
}

/// Real coordinates of a Hermitian operator on a `op_dim`-dimensional space.
///
/// Basis order: the `op_dim` diagonal units `E_kk`, then for each `j < k` in
/// lexicographic order the pair `(E_jk + E_kj)/sqrt2`, `(iE_jk - iE_kj)/sqrt2`.
/// The basis is orthonormal under the Hilbert-Schmidt inner product, so
/// `dot` of two embeddings is `Tr(A B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermitianVec {
    pub op_dim: usize,
    pub coords: Vec<f64>,
}

impl HermitianVec {
    pub fn dot(&self, other: &HermitianVec) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    /// Embedding of the identity operator.
    pub fn identity(op_dim: usize) -> Self {
        let mut coords = vec![0.0; op_dim * op_dim];
        coords[..op_dim].fill(1.0);
        HermitianVec { op_dim, coords }
    }
}

/// Embeds `|v><v|` into the real Hermitian basis described on [`HermitianVec`].
pub fn projector_embed(v: &Ket) -> HermitianVec {
    let d = v.dim();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut coords = Vec::with_capacity(d * d);
    coords.extend(v.amps.iter().map(|z| z.norm_sqr()));
    for j in 0..d {
        for k in (j + 1)..d {
            // P_jk = v_j conj(v_k)
            let p = v.amps[j] * v.amps[k].conj();
            coords.push(sqrt2 * p.re);
            coords.push(sqrt2 * p.im);
        }
    }
    HermitianVec { op_dim: d, coords }
}

/// Coefficients of symmetric two-state clones `|alpha> = mu|aa> + eta|bb>`,
/// `|beta> = eta|aa> + mu|bb>`, with `mu = c + d`, `eta = c - d` and
/// `<a|b> = cos phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CloneCoefficients {
    phi: f64,
    c: f64,
    d: f64,
    mu: f64,
    eta: f64,
}

impl CloneCoefficients {
    /// Validates `(c+d)^2 + (c-d)^2 + 2(c^2-d^2)cos^2(phi) = 1`.
    pub fn new(phi: f64, c: f64, d: f64) -> Result<Self> {
        if !(phi.is_finite() && c.is_finite() && d.is_finite()) {
            return Err(Error::InvalidParameter("non-finite clone coefficient".into()));
        }
        let norm_sq = clone_norm_sq(phi, c, d);
        if (norm_sq - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NormalizationViolation { norm_sq });
        }
        Ok(CloneCoefficients { phi, c, d, mu: c + d, eta: c - d })
    }

    /// Point `t` of the normalization ellipse,
    /// `c = cos t / sqrt(2(1+cos^2 phi))`, `d = sin t / sqrt(2(1-cos^2 phi))`.
    pub fn on_constraint(phi: f64, t: f64) -> Result<Self> {
        let ideal_overlap = phi.cos().powi(2);
        if ideal_overlap >= 1.0 - 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "phi = {phi} makes the ideal clones parallel"
            )));
        }
        let c = t.cos() / (2.0 * (1.0 + ideal_overlap)).sqrt();
        let d = t.sin() / (2.0 * (1.0 - ideal_overlap)).sqrt();
        CloneCoefficients::new(phi, c, d)
    }

    /// The symmetric clones that keep `<alpha|beta> = <a|b>`, the inner
    /// product a unitary cloner with a fixed blank must preserve.
    ///
    /// In the real plane of span{|aa>, |bb>} the ideal clones sit at `-+T`
    /// with `cos 2T = cos^2 phi` and the clones at `-+A` with `cos 2A = cos phi`,
    /// giving `c = cos A / (2 cos T)` and `d = sin A / (2 sin T)`.
    pub fn inner_product_preserving(phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "phi must lie in (0, pi/2], got {phi}"
            )));
        }
        let half_ideal = 0.5 * phi.cos().powi(2).acos();
        let half_clone = 0.5 * phi.cos().acos();
        let c = half_clone.cos() / (2.0 * half_ideal.cos());
        let d = half_clone.sin() / (2.0 * half_ideal.sin());
        CloneCoefficients::new(phi, c, d)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// `|mu|aa> + eta|bb>|^2` for `<aa|bb> = cos^2 phi`.
pub fn clone_norm_sq(phi: f64, c: f64, d: f64) -> f64 {
    let (mu, eta) = (c + d, c - d);
    mu * mu + eta * eta + 2.0 * mu * eta * phi.cos().powi(2)
}

/// The input pair `(|a>, |b>)` with real amplitudes and `<a|b> = cos phi`.
pub fn clone_inputs(phi: f64) -> (Ket, Ket) {
    (real_plane_state(phi), real_plane_state(-phi))
}

/// `(|alpha>, |beta>)` for the given coefficients.
pub fn sd_clone_pair(coeffs: &CloneCoefficients) -> Result<(Ket, Ket)> {
    let norm_sq = clone_norm_sq(coeffs.phi, coeffs.c, coeffs.d);
    if (norm_sq - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NormalizationViolation { norm_sq });
    }
    let (a, b) = clone_inputs(coeffs.phi);
    let (aa, bb) = (tensor(&a, &a), tensor(&b, &b));
    let mu = Complex64::new(coeffs.mu, 0.0);
    let eta = Complex64::new(coeffs.eta, 0.0);
    let alpha = aa.combine(mu, &bb, eta)?;
    let beta = aa.combine(eta, &bb, mu)?;
    Ok((alpha, beta))
}
