//! Undriven Floquet spectra against a Sturm-sequence bisection of the charge-basis tridiagonal matrix.

use quasichaos_core::floquet::{self, fold_quasienergy, FloquetOptions};
use quasichaos_core::model::{ChargeBasis, TransmonParams, REFERENCE_EC};

/// Number of eigenvalues below `x` of the symmetric tridiagonal (d, e).
fn count_below(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut q = 1.0;
    let mut count = 0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect(d: &[f64], e: &[f64], k: usize) -> f64 {
    let bound = d.iter().map(|x| x.abs()).fold(0.0, f64::max) + 2.0 * e.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn oracle(p: &TransmonParams, cutoff: i64) -> Vec<f64> {
    let d: Vec<f64> = (-cutoff..=cutoff).map(|m| 4.0 * p.e_c * (m as f64 - p.n_g).powi(2)).collect();
    let e = vec![-0.5 * p.e_j; d.len() - 1];
    (0..d.len()).map(|k| bisect(&d, &e, k)).collect()
}

#[test]
fn undriven_mean_energies_match_bisection() {
    for (inv, ng) in [(3.0, 0.25), (3.0, 0.0), (5.0, 0.4)] {
        let p = TransmonParams::from_rescaled(inv, 0.0, 1.34, ng, REFERENCE_EC).unwrap();
        let basis = ChargeBasis::new(17);
        let sol = floquet::solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
        let mut me = sol.mean_energy.to_vec();
        me.sort_by(f64::total_cmp);
        let want = oracle(&p, 17);
        for k in 0..15 {
            assert!(((me[k] - want[k]) / want[k]).abs() < 1e-8, "inv {inv} ng {ng} level {k}: {} vs {}", me[k], want[k]);
        }
    }
}

#[test]
fn undriven_quasienergies_are_folded_levels() {
    let p = TransmonParams::from_rescaled(3.0, 0.0, 1.34, 0.1, REFERENCE_EC).unwrap();
    let basis = ChargeBasis::new(17);
    let sol = floquet::solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
    let mut got = sol.quasienergies.to_vec();
    let mut want: Vec<f64> = oracle(&p, 17).into_iter().map(|e| fold_quasienergy(e, p.omega_d)).collect();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    let scale = p.omega_d;
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-7 * scale, "{g} vs {w}");
    }
}
