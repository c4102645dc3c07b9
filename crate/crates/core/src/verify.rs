//! Exact oracle suite over random finite-state instances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{RngStream, Tensor2};
use crate::oracle::{self, total_variation, FiniteSystem, TransitionMatrix};
use crate::tabular::BinaryConditionals;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tolerance: f64, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed: worst <= tolerance, worst, tolerance, detail }
}

/// Bayes-optimal DAE chains on random systems with up to 10 states keep
/// the data distribution as their stationary distribution.
pub fn dae_stationarity(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let sys = oracle::random_system(2 + rng.below(9), rng);
        let k = oracle::dae_transition(&sys.c, &oracle::bayes_posterior(&sys)?)?;
        worst = worst.max(total_variation(&oracle::stationary(&k)?, &sys.p_x));
    }
    Ok(outcome("dae-stationarity", worst, 1e-10, format!("{trials} systems, max TV")))
}

/// Iterated exact walkback refits converge and keep the data distribution.
pub fn walkback_fixed_point(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    let mut iterations = 0;
    for i in 0..trials {
        let sys = oracle::random_system(3, rng);
        let w = oracle::walkback_weights(0.5, crate::trainer::MAX_WALKBACK, i % 2 == 1)?;
        let rep = oracle::walkback_fixed_point(&sys, &w, 1e-9, 100_000)?;
        iterations = iterations.max(rep.iterations);
        worst = worst.max(total_variation(&rep.stationary, &sys.p_x));
    }
    Ok(outcome("walkback-fixed-point", worst, 1e-3, format!("{trials} systems, max TV, <= {iterations} refits")))
}

/// Perturbation bound on random chain pairs; `worst` is the number of
/// violations.
pub fn perturbation_bound(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut violations = 0usize;
    let mut tightest = f64::INFINITY;
    for _ in 0..trials {
        let n = 2 + rng.below(7);
        let k = TransitionMatrix::new(oracle::random_conditional(n, n, rng))?;
        let eps = libm::pow(10.0, -4.0 * rng.uniform());
        let other = oracle::random_conditional(n, n, rng);
        let kt = TransitionMatrix::new(Tensor2::from_fn(n, n, |r, c| (1.0 - eps) * k.matrix().get(r, c) + eps * other.get(r, c)))?;
        let rep = oracle::schweitzer_bound(&k, &kt)?;
        if rep.lhs > rep.rhs {
            violations += 1;
        }
        if rep.rhs > 0.0 {
            tightest = tightest.min(rep.rhs - rep.lhs);
        }
    }
    Ok(outcome("perturbation-bound", violations as f64, 0.0, format!("{trials} pairs, smallest slack {tightest:.3e}")))
}

/// Clamped chains of compatible pairs sample the renormalized conditional
/// for every subset of a 4-state space.
pub fn clamping(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (f, g, _) = oracle::random_compatible_pair(4, 3, rng);
        let sys = FiniteSystem::from_pair(f, g)?;
        for mask in 1usize..16 {
            let subset: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            let rep = oracle::check_clamp_condition(&sys, &subset)?;
            worst = worst.max(rep.max_violation).max(total_variation(&rep.clamped_stationary, &rep.conditional));
        }
    }
    Ok(outcome("clamping", worst, 1e-10, format!("{trials} compatible pairs x 15 subsets")))
}

/// Independently drawn pairs are incompatible; jointly derived ones are.
pub fn compatibility(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut failures = 0usize;
    for _ in 0..trials {
        let (f, g, _) = oracle::random_compatible_pair(3, 3, rng);
        if !oracle::check_mutual_compatibility(&f, &g)?.compatible {
            failures += 1;
        }
        let f = oracle::random_conditional(3, 3, rng);
        let g = oracle::random_conditional(3, 3, rng);
        if oracle::check_mutual_compatibility(&f, &g)?.residual <= 1e-3 {
            failures += 1;
        }
    }
    Ok(outcome("compatibility", failures as f64, 0.0, format!("{trials} compatible + {trials} random pairs, misclassified")))
}

/// Tabular GSN chains built from one joint keep that joint for five steps.
pub fn gsn_joint_invariance(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n_x = 2 + rng.below(3);
        let n_h = 2 + rng.below(3);
        let p_x = oracle::random_distribution(n_x, rng);
        let f: Vec<Tensor2> = (0..n_x).map(|_| oracle::random_conditional(n_h, n_h, rng)).collect();
        let (j0, g) = oracle::gsn_chain_construction(&p_x, &f)?;
        for j in oracle::propagate_gsn_joint(&j0, &f, &g, 5)?.iter().skip(1) {
            worst = worst.max(j.max_abs_diff(&j0));
        }
    }
    Ok(outcome("gsn-joint-invariance", worst, 1e-10, format!("{trials} chains, 5 steps, max abs deviation")))
}

/// Expected-NLL gap to the Bayes posterior equals the expected KL.
pub fn likelihood_gap(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = 2 + rng.below(8);
        let sys = oracle::random_system(n, rng);
        let bayes = oracle::bayes_posterior(&sys)?;
        let cand = oracle::random_conditional(n, n, rng);
        let gap = oracle::expected_nll(&sys, &cand)? - oracle::expected_nll(&sys, &bayes)?;
        worst = worst.max((gap - oracle::expected_kl(&sys, &cand)?).abs());
    }
    Ok(outcome("likelihood-gap", worst, 1e-10, format!("{trials} systems")))
}

/// Exact random-scan kernels of consistent conditionals leave the joint
/// invariant.
pub fn random_scan(trials: usize, rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n = 1 + rng.below(4);
        let joint = oracle::random_distribution(1 << n, rng);
        let k = oracle::random_scan_transition(&BinaryConditionals::from_joint(&joint)?)?;
        worst = worst.max(oracle::l1(&k.apply(&joint)?, &joint));
    }
    Ok(outcome("random-scan", worst, 1e-12, format!("{trials} joints over <= 4 variables, ||K pi - pi||_1")))
}

/// ε-grid connectivity checks.
pub fn local_ergodicity() -> Result<CheckOutcome> {
    let eps = 0.1;
    let grid: Vec<Vec<f64>> = (0..10).flat_map(|i| (0..10).map(move |j| vec![i as f64 * eps / 2.0, j as f64 * eps / 2.0])).collect();
    let mut split = grid.clone();
    split.push(vec![5.0, 5.0]);
    let ok = oracle::check_local_ergodicity(&grid, eps)? && !oracle::check_local_ergodicity(&split, eps)?;
    Ok(outcome("local-ergodicity", if ok { 0.0 } else { 1.0 }, 0.0, "connected grid, detached point".into()))
}

/// All checks, seeded.
pub fn run_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut streams = RngStream::new(seed).fork(8);
    Ok(vec![
        dae_stationarity(100, &mut streams[0])?,
        walkback_fixed_point(10, &mut streams[1])?,
        perturbation_bound(1000, &mut streams[2])?,
        clamping(100, &mut streams[3])?,
        compatibility(100, &mut streams[4])?,
        gsn_joint_invariance(50, &mut streams[5])?,
        likelihood_gap(100, &mut streams[6])?,
        random_scan(50, &mut streams[7])?,
        local_ergodicity()?,
    ])
}
