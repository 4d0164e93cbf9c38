//! Contextuality of phase-covariant and universal cloning: many-input
//! fragments checked through the factored COPE.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{cloning_fragment, cloning_partner, factored_cope, FactoredCope, Fragment};
use crate::quantum::{bloch_state, equatorial_state, ideal_clone_companion, overlap_prob, tensor, Ket, GRAM_TOL};
use crate::rank::{
    min_preparations_for_separation, rank_separation_verdict, CopeInput,
    HypothesisMode, SamplingConfig, Verdict, VerdictConfig, DEFAULT_EPS,
};
use crate::SCHEMA;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Inputs on the equator of the Bloch sphere.
    PhaseCovariant,
    /// Inputs anywhere on the Bloch sphere.
    Universal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Deterministic,
    Seeded(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum CloneModel {
    /// Clones equal the ideal clones; each input then contributes only two
    /// distinct preparations.
    Ideal,
    /// `cos(t)|aa> + i sin(t)|a a_perp>`. The relative phase `i` matters: with
    /// a real coefficient every preparation of an input lies in `|a> (x) C^2`
    /// and universal families stall at rank 15.
    Rotated(f64),
    Custom(Vec<Ket>),
}

impl fmt::Display for CloneModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CloneModel::Ideal => write!(f, "ideal"),
            CloneModel::Rotated(t) => write!(f, "rotated({t})"),
            CloneModel::Custom(v) => write!(f, "custom({} clones)", v.len()),
        }
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Lower edge (in Bloch `z`) of the cap holding deterministic universal
/// inputs. Keeping every input above it bounds `|<a|b>|^2` away from zero
/// for all pairs, so ideal clones of distinct inputs never overlap below
/// the default zero threshold by accident.
pub const UNIVERSAL_CAP_Z: f64 = 0.01;

/// `n` pairwise distinct qubit inputs.
///
/// Deterministic phase-covariant inputs are evenly spaced on the equator;
/// deterministic universal inputs follow a Fibonacci lattice on the cap
/// `z >= UNIVERSAL_CAP_Z`, which contains no nearly orthogonal pair.
/// Seeded modes draw uniformly (angle, or area on the sphere).
pub fn generate_inputs(task: Task, n: usize, mode: InputMode) -> Result<Vec<Ket>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one input".into()));
    }
    Ok(match (task, mode) {
        (Task::PhaseCovariant, InputMode::Deterministic) => {
            (0..n).map(|k| equatorial_state(2.0 * PI * k as f64 / n as f64)).collect()
        }
        (Task::Universal, InputMode::Deterministic) => (0..n)
            .map(|k| {
                let z = 1.0 - (1.0 - UNIVERSAL_CAP_Z) * (k as f64 + 0.5) / n as f64;
                bloch_state(z.acos(), (k as f64 * GOLDEN_ANGLE) % (2.0 * PI))
            })
            .collect(),
        (Task::PhaseCovariant, InputMode::Seeded(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| equatorial_state(rng.random_range(0.0..2.0 * PI))).collect()
        }
        (Task::Universal, InputMode::Seeded(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let z: f64 = rng.random_range(-1.0..1.0);
                    bloch_state(z.acos(), rng.random_range(0.0..2.0 * PI))
                })
                .collect()
        }
    })
}

/// One two-qubit clone per input.
pub fn clone_outputs(inputs: &[Ket], model: &CloneModel) -> Result<Vec<Ket>> {
    match model {
        CloneModel::Ideal => Ok(inputs.iter().map(|a| tensor(a, a)).collect()),
        CloneModel::Rotated(t) => {
            if t.sin().abs() < 1e-6 {
                return Err(Error::DegenerateClone { index: 0 });
            }
            inputs
                .iter()
                .map(|a| {
                    let companion = ideal_clone_companion(a)?;
                    tensor(a, a).combine(Complex64::new(t.cos(), 0.0), &companion, Complex64::new(0.0, t.sin()))
                })
                .collect()
        }
        CloneModel::Custom(clones) => {
            if clones.len() != inputs.len() {
                return Err(Error::DimensionMismatch { expected: inputs.len(), found: clones.len() });
            }
            for (index, (a, alpha)) in inputs.iter().zip(clones).enumerate() {
                if alpha.dim() != 4 {
                    return Err(Error::DimensionMismatch { expected: 4, found: alpha.dim() });
                }
                if overlap_prob(&tensor(a, a), alpha)? > 1.0 - GRAM_TOL {
                    return Err(Error::DegenerateClone { index });
                }
            }
            Ok(clones.clone())
        }
    }
}

#[derive(Clone, Debug)]
pub struct CloningConfig {
    pub task: Task,
    pub n: usize,
    pub model: CloneModel,
    pub mode: InputMode,
    pub tol: Option<f64>,
    pub eps: f64,
    pub sampling: SamplingConfig,
    pub timing: bool,
}

impl CloningConfig {
    pub fn new(task: Task, n: usize) -> Self {
        CloningConfig {
            task,
            n,
            model: CloneModel::Rotated(0.2),
            mode: InputMode::Deterministic,
            tol: None,
            eps: DEFAULT_EPS,
            sampling: SamplingConfig::default(),
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloningEcho {
    pub clone_model: String,
    pub input_mode: InputMode,
    pub tol: Option<f64>,
    pub eps: f64,
    pub exhaustive_cap: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloningReport {
    pub schema: String,
    pub task: Task,
    pub n_inputs: usize,
    pub n_preparations: usize,
    /// Preparations left after identifying duplicates.
    pub n_distinct: u64,
    pub factored_rank: usize,
    pub hypothesis_ok: bool,
    pub hypothesis_mode: HypothesisMode,
    pub bound_l: u64,
    /// Smallest preparation count that would separate at the measured rank.
    pub min_preparations_for_separation: u64,
    pub verdict: Verdict,
    pub config: CloningEcho,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

/// Builds the fragment for `cfg` in factored form.
pub fn build_cloning_fragment(cfg: &CloningConfig) -> Result<(Fragment, FactoredCope)> {
    let inputs = generate_inputs(cfg.task, cfg.n, cfg.mode)?;
    let clones = clone_outputs(&inputs, &cfg.model)?;
    let fragment = cloning_fragment(&inputs, &clones)?;
    let fc = factored_cope(&fragment)?;
    Ok((fragment, fc))
}

/// Full verification: rank from the thin factors, antichain hypothesis
/// (exhaustive up to the cap, sampled with structured witnesses above it),
/// Sperner count and verdict.
pub fn verify_cloning(cfg: &CloningConfig) -> Result<CloningReport> {
    let start = Instant::now();
    let (_, fc) = build_cloning_fragment(cfg)?;
    report_for(&fc, cfg, start)
}

/// Verification of an already built factored cloning COPE.
pub fn verify_factored(fc: &FactoredCope, cfg: &CloningConfig) -> Result<CloningReport> {
    report_for(fc, cfg, Instant::now())
}

fn report_for(fc: &FactoredCope, cfg: &CloningConfig, start: Instant) -> Result<CloningReport> {
    let sampling = SamplingConfig { partner: Some(cloning_partner), ..cfg.sampling };
    let vcfg = VerdictConfig { tol: cfg.tol, eps: cfg.eps, n: None, sampling };
    let verdict = rank_separation_verdict(CopeInput::Factored(fc), &vcfg)?;
    let rank = verdict.rank;
    let min_prep = min_preparations_for_separation(rank as u64);
    let mut notes = Vec::new();
    if cfg.model == CloneModel::Ideal {
        notes.push("ideal clones: each input contributes two distinct preparations instead of four".into());
    }
    if verdict.n < fc.n_preparations() as u64 {
        notes.push(format!(
            "{} duplicate preparations identified before counting",
            fc.n_preparations() as u64 - verdict.n
        ));
    }
    Ok(CloningReport {
        schema: SCHEMA.to_string(),
        task: cfg.task,
        n_inputs: fc.n_preparations() / 4,
        n_preparations: fc.n_preparations(),
        n_distinct: verdict.n,
        factored_rank: rank,
        hypothesis_ok: verdict.hypothesis_ok,
        hypothesis_mode: verdict.hypothesis_mode,
        bound_l: verdict.bound_l,
        min_preparations_for_separation: big_to_u64(&min_prep),
        config: CloningEcho {
            clone_model: cfg.model.to_string(),
            input_mode: cfg.mode,
            tol: cfg.tol,
            eps: cfg.eps,
            exhaustive_cap: cfg.sampling.exhaustive_cap,
            samples: cfg.sampling.samples,
            seed: cfg.sampling.seed,
        },
        verdict,
        notes,
        runtime_ms: cfg.timing.then(|| start.elapsed().as_millis() as u64),
    })
}

fn big_to_u64(b: &BigUint) -> u64 {
    b.to_u64().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn phase_covariant_four_inputs() {
        let ks = generate_inputs(Task::PhaseCovariant, 4, InputMode::Deterministic).unwrap();
        for (k, angle) in ks.iter().zip([0.0, PI / 2.0, PI, 1.5 * PI]) {
            assert_abs_diff_eq!(overlap_prob(k, &equatorial_state(angle)).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn seeded_universal_inputs_are_distinct_and_reproducible() {
        let a = generate_inputs(Task::Universal, 300, InputMode::Seeded(7)).unwrap();
        let b = generate_inputs(Task::Universal, 300, InputMode::Seeded(7)).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(overlap_prob(&a[i], &a[j]).unwrap() < 1.0 - 1e-10);
            }
        }
        assert!(generate_inputs(Task::Universal, 0, InputMode::Deterministic).is_err());
    }

    #[test]
    fn clone_models() {
        let inputs = generate_inputs(Task::Universal, 5, InputMode::Deterministic).unwrap();
        let ideal = clone_outputs(&inputs, &CloneModel::Ideal).unwrap();
        let rotated = clone_outputs(&inputs, &CloneModel::Rotated(0.1)).unwrap();
        for ((a, i), r) in inputs.iter().zip(&ideal).zip(&rotated) {
            let aa = tensor(a, a);
            assert_abs_diff_eq!(overlap_prob(i, &aa).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(overlap_prob(r, &aa).unwrap(), 0.1f64.cos().powi(2), epsilon = 1e-12);
        }
        let err = clone_outputs(&inputs, &CloneModel::Custom(ideal)).unwrap_err();
        assert!(matches!(err, Error::DegenerateClone { index: 0 }));
        assert!(clone_outputs(&inputs, &CloneModel::Rotated(0.0)).is_err());
        assert!(clone_outputs(&inputs, &CloneModel::Custom(vec![])).is_err());
    }

    #[test]
    fn small_universal_is_inconclusive() {
        let report = verify_cloning(&CloningConfig::new(Task::Universal, 100)).unwrap();
        assert_eq!(report.n_preparations, 400);
        assert_eq!(report.factored_rank, 16);
        assert_eq!(report.bound_l, 10);
        assert!(report.hypothesis_ok);
        assert_eq!(report.verdict.outcome, crate::rank::Outcome::Inconclusive);
        assert_eq!(report.min_preparations_for_separation, 24310);
    }

    #[test]
    fn sampled_check_survives_misleading_partners() {
        let mut cfg = CloningConfig::new(Task::Universal, 30);
        let (_, fc) = build_cloning_fragment(&cfg).unwrap();
        let reversed: Vec<usize> = (0..fc.n_preparations()).rev().collect();
        let unpaired: Vec<usize> = (0..fc.n_preparations()).filter(|&p| p != 2).collect();
        for (set, want) in [(reversed, true), (unpaired, false)] {
            let sub = fc.restrict(&set, &set);
            let exhaustive = verify_factored(&sub, &cfg).unwrap();
            cfg.sampling.exhaustive_cap = 0;
            cfg.sampling.samples = 20_000;
            let sampled = verify_factored(&sub, &cfg).unwrap();
            cfg.sampling = SamplingConfig::default();
            assert_eq!(exhaustive.hypothesis_mode, HypothesisMode::Exhaustive);
            assert_eq!(sampled.hypothesis_mode, HypothesisMode::Sampled);
            assert_eq!((exhaustive.hypothesis_ok, sampled.hypothesis_ok), (want, want));
        }
    }

    #[test]
    fn ideal_mode_halves_distinct_preparations() {
        let mut cfg = CloningConfig::new(Task::PhaseCovariant, 10);
        cfg.model = CloneModel::Ideal;
        let report = verify_cloning(&cfg).unwrap();
        assert_eq!(report.n_distinct, 20);
        assert!(!report.notes.is_empty());
    }

    #[test]
    fn report_is_deterministic_without_timing() {
        let cfg = CloningConfig::new(Task::PhaseCovariant, 30);
        let a = serde_json::to_string(&verify_cloning(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&verify_cloning(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("runtime_ms"));
    }
}
