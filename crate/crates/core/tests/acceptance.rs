//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stdout, past the harness capture, and panics on FAIL.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::io::Write;
use std::time::{Duration, Instant};

use copectx::cloning::{build_cloning_fragment, clone_outputs, verify_cloning, verify_factored, CloneModel, CloningConfig, Task};
use copectx::fragments::{
    cope_from_fragment, factored_cope, meqsd_cope, meqsd_geometric, sdc_cope, CopeMatrix, Fragment, Labeled, MeqsdParams,
    SdcParams,
};
use copectx::nmf::{enmf_search, explicit_orthogonal_model, frobenius_residual, nmf_factorize_matrix, NmfConfig};
use copectx::quantum::{
    clone_norm_sq, orthogonal_in_span, overlap_prob, projector_embed, sd_clone_pair, tensor, CloneCoefficients, Ket,
};
use copectx::rank::{
    exact_rank_rational, factored_rank, min_preparations_for_separation, numerical_rank, rank_separation_verdict,
    sperner_bound, CopeInput, HypothesisMode, Outcome, RationalMatrix, Verdict, VerdictConfig,
};
use copectx::solvers::{helstrom, sdc_spectrum, solve_success_prob, SolverConfig};
use copectx::{Error, Matrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn criterion(id: &str, what: &str, budget: Duration, check: impl FnOnce() -> Check) {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|detail| {
        if elapsed <= budget {
            Ok(detail)
        } else {
            Err(format!("runtime {elapsed:.2?} exceeds {budget:?}"))
        }
    });
    let line = match &outcome {
        Ok(detail) => format!("PASS criterion {id}: {what} [{detail}; {elapsed:.2?}]\n"),
        Err(reason) => format!("FAIL criterion {id}: {what} [{reason}; {elapsed:.2?}]\n"),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    if let Err(reason) = outcome {
        panic!("criterion {id} failed: {reason}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dense_verdict(c: &CopeMatrix) -> Result<Verdict, String> {
    rank_separation_verdict(CopeInput::Dense(c), &VerdictConfig::default()).map_err(|e| e.to_string())
}

/// Exact binomial, independent of the library's recurrence.
fn binom(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn central(l: u64) -> u128 {
    binom(l, l / 2)
}

fn sweep() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[test]
fn criterion_1_meqsd_rank_separation() {
    criterion("1", "MEQSD rank 3 against Sperner bound 4 over c_q = 0.1..0.9", Duration::from_secs(1), || {
        ensure(sperner_bound(6).l == 4, || "sperner_bound(6).l != 4".into())?;
        for c_q in sweep() {
            let cope = meqsd_cope(MeqsdParams::helstrom(c_q).map_err(|e| e.to_string())?);
            let rank = numerical_rank(cope.entries(), Some(1e-9)).map_err(|e| e.to_string())?.rank;
            ensure(rank == 3, || format!("c_q = {c_q}: rank {rank}"))?;
            let v = dense_verdict(&cope)?;
            ensure(
                v.outcome == Outcome::Contextual && v.bound_l == 4 && v.rank == 3,
                || format!("c_q = {c_q}: {:?} rank {} bound {}", v.outcome, v.rank, v.bound_l),
            )?;
        }
        Ok("9 points contextual".into())
    });
}

#[test]
fn criterion_2_helstrom_curve() {
    criterion("2", "rank-drop roots equal (1 -+ sqrt(1 - c_q))/2", Duration::from_secs(5), || {
        let mut worst = 0.0f64;
        for c_q in sweep() {
            let p = solve_success_prob(c_q, &SolverConfig::default()).map_err(|e| e.to_string())?;
            ensure(p.roots.len() == 2, || format!("c_q = {c_q}: roots {:?}", p.roots))?;
            let root = (1.0 - c_q).sqrt();
            let want = [(1.0 - root) / 2.0, (1.0 + root) / 2.0];
            for (r, w) in p.roots.iter().zip(want) {
                worst = worst.max((r - w).abs());
            }
            worst = worst.max((p.optimal - helstrom(c_q)).abs());
            let sum = p.roots[0] + p.roots[1];
            ensure((sum - 1.0).abs() < 1e-8, || format!("c_q = {c_q}: roots sum to {sum}"))?;
        }
        ensure(worst < 1e-8, || format!("max error {worst:e}"))?;
        Ok(format!("max error {worst:.1e}"))
    });
}

#[test]
fn criterion_3_orthogonal_case() {
    criterion("3", "c_q = 0 gives rank 2 and exact two-state models", Duration::from_secs(1), || {
        let cope = meqsd_cope(MeqsdParams::new(0.0, 1.0).map_err(|e| e.to_string())?);
        let rank = numerical_rank(cope.entries(), None).map_err(|e| e.to_string())?.rank;
        ensure(rank == 2, || format!("rank {rank}"))?;
        let explicit = explicit_orthogonal_model();
        let recomputed = frobenius_residual(cope.entries(), &explicit.r, &explicit.e);
        ensure(recomputed < 1e-10, || format!("explicit model residual {recomputed:e}"))?;
        let report = enmf_search(&cope, &NmfConfig::default(), None).map_err(|e| e.to_string())?;
        ensure(report.k == 2 && report.best.residual < 1e-10, || {
            format!("search k = {} residual {:e}", report.k, report.best.residual)
        })?;
        Ok(format!("search residual {:.1e}", report.best.residual))
    });
}

/// 8x8 checks shared by both criterion 4 runs.
fn sdc_checks(coeffs: &CloneCoefficients) -> Check {
    let spectrum = sdc_spectrum(coeffs).map_err(|e| e.to_string())?;
    let want = [4.0, 2.5, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0];
    let err = spectrum.iter().zip(want).map(|(x, w)| (x - w).abs()).fold(0.0, f64::max);
    ensure(err < 1e-9, || format!("spectrum {spectrum:?}"))?;
    let cope = sdc_cope(SdcParams::from_coefficients(coeffs).map_err(|e| e.to_string())?);
    let rank = numerical_rank(cope.entries(), None).map_err(|e| e.to_string())?.rank;
    ensure(rank == 3, || format!("rank {rank}"))?;
    ensure(sperner_bound(8).l == 4, || "sperner_bound(8).l != 4".into())?;
    let v = dense_verdict(&cope)?;
    ensure(v.outcome == Outcome::Contextual, || format!("verdict {:?}", v.outcome))?;
    Ok(format!("spectrum error {err:.1e}, rank 3, contextual"))
}

fn printed_c() -> f64 {
    ((1.0 + FRAC_1_SQRT_2) / 6.0).sqrt()
}

#[test]
fn criterion_4_sdc_printed_coefficients() {
    let d = ((1.0 - FRAC_1_SQRT_2) / 6.0).sqrt();
    criterion("4", "SDC spectrum {4, 2.5, 1.5, 0 x5} at phi = pi/4 with d = sqrt((1 - 1/sqrt2)/6)", Duration::from_secs(1), || {
        match CloneCoefficients::new(FRAC_PI_4, printed_c(), d) {
            Ok(coeffs) => sdc_checks(&coeffs),
            Err(e) => {
                let raw = sdc_cope(SdcParams::from_raw_coefficients(FRAC_PI_4, printed_c(), d).map_err(|e| e.to_string())?);
                let eig = copectx::solvers::symmetric_spectrum(raw.entries());
                Err(format!(
                    "{e}; clone norm^2 = {:.4}, unnormalized spectrum {:.3?}",
                    clone_norm_sq(FRAC_PI_4, printed_c(), d),
                    &eig[..4]
                ))
            }
        }
    });
}

#[test]
fn criterion_4_sdc_unit_norm_coefficients() {
    criterion("4 (d = sin(pi/8))", "SDC spectrum with the unit-norm inner-product-preserving clones", Duration::from_secs(1), || {
        let coeffs = CloneCoefficients::inner_product_preserving(FRAC_PI_4).map_err(|e| e.to_string())?;
        ensure((coeffs.c() - printed_c()).abs() < 1e-12, || format!("c = {}", coeffs.c()))?;
        ensure((coeffs.d() - (PI / 8.0).sin()).abs() < 1e-12, || format!("d = {}", coeffs.d()))?;
        sdc_checks(&coeffs)
    });
}

#[test]
fn criterion_5_cloning_at_scale() {
    criterion("5", "phase-covariant and universal cloning, n = 12155", Duration::from_secs(300), || {
        let mut details = Vec::new();
        for task in [Task::PhaseCovariant, Task::Universal] {
            let r = verify_cloning(&CloningConfig::new(task, 12155)).map_err(|e| e.to_string())?;
            ensure(r.n_preparations == 48620 && r.n_distinct == 48620, || {
                format!("{task:?}: {} preparations, {} distinct", r.n_preparations, r.n_distinct)
            })?;
            ensure(r.factored_rank <= 16, || format!("{task:?}: rank {}", r.factored_rank))?;
            ensure(r.hypothesis_ok && r.hypothesis_mode == HypothesisMode::Sampled, || {
                format!("{task:?}: hypothesis {} via {:?}", r.hypothesis_ok, r.hypothesis_mode)
            })?;
            ensure(r.bound_l == 18 && r.verdict.outcome == Outcome::Contextual, || {
                format!("{task:?}: bound {} verdict {:?}", r.bound_l, r.verdict.outcome)
            })?;
            details.push(format!("{task:?} rank {}", r.factored_rank));
        }
        Ok(details.join(", ") + ", bound 18, contextual")
    });
}

#[test]
fn criterion_6_threshold_flip() {
    criterion("6", "verdict flips exactly at n = C(17,8) under a rank-16 fragment", Duration::from_secs(60), || {
        let threshold = central(17);
        ensure(threshold == 24310, || format!("C(17,8) = {threshold}"))?;
        ensure(min_preparations_for_separation(16) == threshold.into(), || "minimal count disagrees with C(17,8)".into())?;
        for n in 24000..24600u64 {
            let separates = sperner_bound(n).l > 16;
            ensure(separates == (n as u128 >= threshold), || format!("bound at n = {n}"))?;
        }

        let cfg = CloningConfig::new(Task::Universal, 6078);
        let (_, fc) = build_cloning_fragment(&cfg).map_err(|e| e.to_string())?;
        // Whole inputs keep every preparation with its in-span partner; the
        // last two preparations complete a partner pair.
        let full: Vec<usize> = (0..4 * 6077).collect();
        let mut at = full.clone();
        at.extend([4 * 6077, 4 * 6077 + 2]);
        let mut below_odd = full[..full.len() - 4].to_vec();
        below_odd.extend([4 * 6076, 4 * 6076 + 2, 4 * 6076 + 1, 4 * 6077, 4 * 6077 + 2]);
        let mut seen = Vec::new();
        for (set, want) in [(&full, Outcome::Inconclusive), (&below_odd, Outcome::Inconclusive), (&at, Outcome::Contextual)] {
            let r = verify_factored(&fc.restrict(set, set), &cfg).map_err(|e| e.to_string())?;
            ensure(r.factored_rank == 16, || format!("n = {}: rank {}", set.len(), r.factored_rank))?;
            ensure(r.verdict.outcome == want && r.n_distinct == set.len() as u64, || {
                format!("n = {}: {:?} (hypothesis {}, bound {})", set.len(), r.verdict.outcome, r.hypothesis_ok, r.bound_l)
            })?;
            seen.push(format!("{} -> {:?}", set.len(), r.verdict.outcome));
        }
        Ok(seen.join(", "))
    });
}

fn random_ket(rng: &mut ChaCha8Rng, dim: usize, real: bool) -> Ket {
    loop {
        let amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), if real { 0.0 } else { rng.random_range(-1.0..1.0) }))
            .collect();
        if let Ok(k) = Ket::new(amps) {
            return k;
        }
    }
}

fn random_fragment(rng: &mut ChaCha8Rng, index: usize) -> Fragment {
    let dim = [2, 3, 4][index % 3];
    let real = index % 2 == 1;
    let n_preps = if index == 0 { 400 } else { rng.random_range(1..=400) };
    let n_tests = rng.random_range(1..=40);
    let labeled = |rng: &mut ChaCha8Rng, tag: &str, count: usize| -> Vec<Labeled> {
        (0..count).map(|i| Labeled::new(format!("{tag}{i}"), random_ket(rng, dim, real))).collect()
    };
    let preps = labeled(rng, "p", n_preps);
    let tests = labeled(rng, "m", n_tests);
    Fragment::new(preps, tests).expect("random labels are unique")
}

/// Integer, and then fractional, matrices of prescribed rank via A(r x k) B(k x c).
fn rational_cases(rng: &mut ChaCha8Rng) -> Vec<(RationalMatrix, usize)> {
    let mut out = Vec::new();
    for case in 0..30 {
        let (rows, cols) = (rng.random_range(1..=9), rng.random_range(1..=9));
        let k = rng.random_range(1..=rows.min(cols));
        let a = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-4i64..=4) as f64);
        let b = DMatrix::from_fn(k, cols, |_, _| rng.random_range(-4i64..=4) as f64);
        let m: Matrix = a * b;
        let den = if case % 2 == 0 { 1 } else { rng.random_range(2..=7) };
        let strings: Vec<String> = m.transpose().iter().map(|x| format!("{}/{den}", *x as i64)).collect();
        let refs: Vec<&str> = strings.iter().map(String::as_str).collect();
        out.push((RationalMatrix::from_strings(rows, cols, &refs).expect("valid rationals"), k));
    }
    out
}

#[test]
fn criterion_7_oracle_equivalence() {
    criterion("7", "factored vs dense and exact vs numerical rank", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for i in 0..20 {
            let f = random_fragment(&mut rng, i);
            let dense = cope_from_fragment(&f).map_err(|e| e.to_string())?;
            let fc = factored_cope(&f).map_err(|e| e.to_string())?;
            let diff = (fc.dense() - dense.entries()).abs().max();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("fragment {i}: entry gap {diff:e}"))?;
            let (a, b) = (factored_rank(&fc, None).rank, numerical_rank(dense.entries(), None).map_err(|e| e.to_string())?.rank);
            ensure(a == b, || format!("fragment {i}: factored rank {a}, dense rank {b}"))?;
        }
        let mut cases = rational_cases(&mut rng);
        let meqsd0 = meqsd_cope(MeqsdParams::new(0.0, 1.0).map_err(|e| e.to_string())?);
        cases.push((RationalMatrix::from_f64(meqsd0.entries()).map_err(|e| e.to_string())?, 2));
        let half = ["1", "0", "1/2", "1/2", "1/4", "3/4", "0", "1", "1/2", "1/2", "3/4", "1/4"];
        cases.push((RationalMatrix::from_strings(2, 6, &half).map_err(|e| e.to_string())?, 2));
        for (i, (m, _)) in cases.iter().enumerate() {
            let exact = exact_rank_rational(m);
            let numeric = numerical_rank(&m.to_f64(), None).map_err(|e| e.to_string())?.rank;
            ensure(exact == numeric, || format!("rational case {i}: exact {exact}, numerical {numeric}"))?;
        }
        Ok(format!("20 fragments (max entry gap {worst:.1e}), {} rational matrices", cases.len()))
    });
}

#[test]
fn criterion_8_enmf_evidence() {
    criterion("8", "50-restart factorization searches at k = rank", Duration::from_secs(120), || {
        let cfg = NmfConfig::default();
        let optimal_meqsd = meqsd_cope(MeqsdParams::helstrom(0.5).map_err(|e| e.to_string())?);
        let coeffs = CloneCoefficients::inner_product_preserving(FRAC_PI_4).map_err(|e| e.to_string())?;
        let optimal_sdc = sdc_cope(SdcParams::from_coefficients(&coeffs).map_err(|e| e.to_string())?);
        let mut fails = Vec::new();
        for (name, cope) in [("MEQSD", &optimal_meqsd), ("SDC", &optimal_sdc)] {
            let r = enmf_search(cope, &cfg, None).map_err(|e| e.to_string())?;
            ensure(r.k == 3 && r.best.residual > 1e-3, || format!("{name}: k {} residual {:e}", r.k, r.best.residual))?;
            fails.push(format!("{name} {:.3}", r.best.residual));
        }
        let ortho = meqsd_cope(MeqsdParams::new(0.0, 1.0).map_err(|e| e.to_string())?);
        let r = enmf_search(&ortho, &cfg, None).map_err(|e| e.to_string())?;
        ensure(r.best.residual < 1e-10, || format!("orthogonal MEQSD residual {:e}", r.best.residual))?;

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst = 0.0f64;
        for i in 0..10 {
            let (rows, cols) = (rng.random_range(4..=10), rng.random_range(4..=10));
            let k = rng.random_range(1..=3);
            let r_true = DMatrix::from_fn(rows, k, |_, _| rng.random_range(0.0..1.0));
            let e_true = DMatrix::from_fn(k, cols, |_, _| rng.random_range(0.0..1.0));
            let m = &r_true * &e_true;
            let k_found = numerical_rank(&m, None).map_err(|e| e.to_string())?.rank;
            ensure(k_found == k, || format!("separable {i}: rank {k_found}, built with {k}"))?;
            let res = nmf_factorize_matrix(&m, None, k, &cfg).map_err(|e| e.to_string())?.residual;
            worst = worst.max(res);
            ensure(res < 1e-10, || format!("separable {i} ({rows}x{cols}, k = {k}): residual {res:e}"))?;
        }
        Ok(format!("failures {}; successes below {worst:.1e}", fails.join(", ")))
    });
}

fn prop_runner(seed: u8, cases: u32) -> TestRunner {
    let cfg = PropConfig { cases, failure_persistence: None, ..PropConfig::default() };
    TestRunner::new_with_rng(cfg, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn ket_strategy(dims: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Ket> {
    dims.prop_flat_map(|d| prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), d))
        .prop_filter_map("nonzero", |v| Ket::new(v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()).ok())
}

fn block_sums_ok(c: &CopeMatrix) -> Result<(), TestCaseError> {
    for b in c.blocks() {
        for j in 0..c.ncols() {
            let s: f64 = b.rows.iter().map(|&r| c.entries()[(r, j)]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "block {} column {j} sums to {s}", b.label);
        }
    }
    prop_assert!(c.entries().iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)));
    Ok(())
}

fn invariant(name: &str, result: Result<(), String>, failures: &mut Vec<String>) {
    if let Err(e) = result {
        failures.push(format!("{name}: {e}"));
    }
}

fn run_prop<S: Strategy>(
    seed: u8,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    prop_runner(seed, cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn verdict_key(v: &Verdict) -> (Outcome, usize, u64, u64, bool) {
    (v.outcome, v.rank, v.bound_l, v.n, v.hypothesis_ok)
}

fn permuted(f: &Fragment, preps: &[usize], tests: &[usize]) -> Fragment {
    Fragment::new(
        preps.iter().map(|&i| f.preparations()[i].clone()).collect(),
        tests.iter().map(|&i| f.measurements()[i].clone()).collect(),
    )
    .expect("permutation keeps labels unique")
}

#[test]
fn criterion_9_invariants() {
    criterion("9", "module invariants on seeded random inputs", Duration::from_secs(60), || {
        let mut failures = Vec::new();

        invariant("stochastic blocks", run_prop(1, 128, (0.0..=1.0f64, 0.0..=1.0f64, 0.05..1.5f64, 0.0..std::f64::consts::TAU), |(c, s, phi, t)| {
            block_sums_ok(&meqsd_cope(MeqsdParams::new(c, s).unwrap()))?;
            let coeffs = CloneCoefficients::on_constraint(phi, t).unwrap();
            block_sums_ok(&sdc_cope(SdcParams::from_coefficients(&coeffs).unwrap()))?;
            Ok(())
        }), &mut failures);

        invariant("stochastic blocks (fragments)", run_prop(2, 32, prop::collection::vec(ket_strategy(3..=3), 1..12), |kets| {
            let preps: Vec<Labeled> = kets.into_iter().enumerate().map(|(i, k)| Labeled::new(format!("p{i}"), k)).collect();
            block_sums_ok(&cope_from_fragment(&Fragment::self_dual(preps).unwrap()).unwrap())
        }), &mut failures);

        invariant("norm preservation", run_prop(3, 128, (0.05..1.5f64, 0.0..std::f64::consts::TAU, 0.01..1.5f64, ket_strategy(2..=2)), |(phi, t, rot, a)| {
            let coeffs = CloneCoefficients::on_constraint(phi, t).unwrap();
            prop_assert!((clone_norm_sq(phi, coeffs.c(), coeffs.d()) - 1.0).abs() < 1e-10);
            let (alpha, beta) = sd_clone_pair(&coeffs).unwrap();
            prop_assert!((alpha.norm_sqr() - 1.0).abs() < 1e-10 && (beta.norm_sqr() - 1.0).abs() < 1e-10);
            let clone = &clone_outputs(std::slice::from_ref(&a), &CloneModel::Rotated(rot)).unwrap()[0];
            prop_assert!((clone.norm_sqr() - 1.0).abs() < 1e-12);
            let ideal = tensor(&a, &a);
            prop_assert!((overlap_prob(clone, &ideal).unwrap() - rot.cos().powi(2)).abs() < 1e-12);
            let perp = orthogonal_in_span(&ideal, clone).unwrap();
            prop_assert!(overlap_prob(&perp, &ideal).unwrap() < 1e-12);
            Ok(())
        }), &mut failures);

        invariant("embedding isometry", run_prop(4, 256, (2usize..=5).prop_flat_map(|d| (ket_strategy(d..=d), ket_strategy(d..=d))), |(u, v)| {
            let dot = projector_embed(&u).dot(&projector_embed(&v));
            let want = overlap_prob(&u, &v).unwrap();
            prop_assert!((dot - want).abs() < 1e-12, "{dot} vs {want}");
            Ok(())
        }), &mut failures);

        invariant("Sperner sandwich", run_prop(5, 512, 1u64..1_000_000_000_000_000, |n| {
            let l = sperner_bound(n).l;
            prop_assert!(central(l) <= n as u128 && (n as u128) < central(l + 1), "n = {n}, l = {l}");
            Ok(())
        }), &mut failures);

        invariant("rank monotonicity", run_prop(6, 64, (1usize..6, 2usize..9, 2usize..9, any::<u64>()), |(k, rows, cols, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(rows, k, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(k, cols, |_, _| rng.random_range(-1.0..1.0));
            let m: Matrix = a * b;
            let full = numerical_rank(&m, None).unwrap().rank;
            prop_assert!(full <= k.min(rows).min(cols));
            let sub = m.columns(0, cols - 1).into_owned();
            prop_assert!(numerical_rank(&sub, None).unwrap().rank <= full);
            let sub = m.rows(0, rows - 1).into_owned();
            prop_assert!(numerical_rank(&sub, None).unwrap().rank <= full);
            Ok(())
        }), &mut failures);

        let base = [
            meqsd_geometric(0.3).unwrap(),
            build_cloning_fragment(&CloningConfig::new(Task::Universal, 12)).unwrap().0,
            build_cloning_fragment(&CloningConfig::new(Task::PhaseCovariant, 9)).unwrap().0,
        ];
        for (idx, f) in base.iter().enumerate() {
            let (np, nm) = (f.preparations().len(), f.measurements().len());
            let before = dense_verdict(&cope_from_fragment(f).unwrap()).unwrap();
            let strategy = (Just((0..np).collect::<Vec<_>>()).prop_shuffle(), Just((0..nm).collect::<Vec<_>>()).prop_shuffle());
            invariant(&format!("verdict permutation invariance #{idx}"), run_prop(7 + idx as u8, 24, strategy, |(p, m)| {
                let g = permuted(f, &p, &m);
                let after = dense_verdict(&cope_from_fragment(&g).unwrap()).unwrap();
                prop_assert_eq!(verdict_key(&after), verdict_key(&before));
                let fc = factored_cope(&g).unwrap();
                prop_assert_eq!(factored_rank(&fc, None).rank, before.rank);
                Ok(())
            }), &mut failures);
        }

        if failures.is_empty() {
            Ok("8 invariant families hold".into())
        } else {
            Err(failures.join("; "))
        }
    });
}

#[test]
fn degenerate_clone_error_is_reported() {
    let a = Ket::basis(2, 0);
    assert!(matches!(clone_outputs(&[a], &CloneModel::Rotated(0.0)), Err(Error::DegenerateClone { .. })));
}
