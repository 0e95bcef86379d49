//! Double-double eigenvalues of the undriven charge-basis Hamiltonian.

use crate::error::{Error, Result};
use crate::model::{static_tridiagonal, ChargeBasis, TransmonParams};
use twofloat::TwoFloat;

const MAX_BISECTIONS: usize = 400;
const RELATIVE_WIDTH: f64 = 1e-30;

fn diagonal(p: &TransmonParams, basis: &ChargeBasis) -> Vec<TwoFloat> {
    basis
        .labels()
        .map(|m| {
            let x = TwoFloat::from(m as f64) - p.n_g;
            x * x * (4.0 * p.e_c)
        })
        .collect()
}

/// `a / q` to double-double accuracy, refining the `f64` quotient with an exact residual.
fn div(a: f64, q: TwoFloat) -> TwoFloat {
    let th = a / q.hi();
    let r = TwoFloat::from(a) - q * th;
    TwoFloat::new_add(th, r.hi() / q.hi())
}

/// Number of eigenvalues below `x`.
fn sturm_count(diag: &[TwoFloat], off_sq: f64, x: TwoFloat) -> usize {
    let tiny = TwoFloat::from(1e-280);
    let mut count = 0;
    let mut q = diag[0] - x;
    for k in 0..diag.len() {
        if k > 0 {
            q = diag[k] - x - div(off_sq, q);
        }
        if q == 0.0 {
            q = tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `level`-th eigenvalue of the undriven Hamiltonian to double-double precision.
pub fn static_level(p: &TransmonParams, basis: &ChargeBasis, level: usize) -> Result<TwoFloat> {
    if level >= basis.dim() {
        return Err(Error::InvalidInput(format!("level {level} exceeds basis dimension {}", basis.dim())));
    }
    let diag = diagonal(p, basis);
    let (d64, off) = static_tridiagonal(p, basis);
    let off_sq = off.first().map(|b| b * b).unwrap_or(0.0);
    let scale = d64.iter().chain(off.iter()).fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let estimate = crate::model::static_spectrum(p, basis)?.0[level];
    let mut margin = 1e-10 * scale;
    let (mut lo, mut hi) = loop {
        let lo = TwoFloat::from(estimate - margin);
        let hi = TwoFloat::from(estimate + margin);
        if sturm_count(&diag, off_sq, lo) <= level && sturm_count(&diag, off_sq, hi) > level {
            break (lo, hi);
        }
        margin *= 16.0;
        if margin > 1e3 * scale {
            return Err(Error::NoSolution(format!("could not bracket level {level}")));
        }
    };
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo + hi) * 0.5;
        if sturm_count(&diag, off_sq, mid) > level {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) < RELATIVE_WIDTH * scale {
            break;
        }
    }
    Ok((lo + hi) * 0.5)
}

/// `|E(1/2) - E(0)|` of an undriven level, the full band width.
pub fn undriven_dispersion(p: &TransmonParams, basis: &ChargeBasis, level: usize) -> Result<f64> {
    let a = static_level(&p.with_ng(0.0).with_drive(0.0), basis, level)?;
    let b = static_level(&p.with_ng(0.5).with_drive(0.0), basis, level)?;
    Ok((b - a).hi().abs())
}
