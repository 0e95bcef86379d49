//! Offset-charge bands, phase-slip spectra and coupling to the chaotic layer.

use crate::dissipation::MatrixElementTensor;
use crate::error::{Error, Result};
use crate::floquet::{solve_transmon, unfold_near, FloquetOptions, TRACKING_THRESHOLD};
use crate::linalg::C64;
use crate::model::{static_spectrum, ChargeBasis, TransmonParams};
use crate::precise::static_level;
use rayon::prelude::*;
use std::f64::consts::PI;

pub const MIN_NG_POINTS: usize = 64;
pub const SPIKE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BandCurve {
    pub level: usize,
    /// Uniform grid over `[-1/2, 1/2]`, both ends included.
    pub ng: Vec<f64>,
    /// Branch values relative to `reference`.
    pub energy: Vec<f64>,
    pub reference: f64,
    pub overlap: Vec<f64>,
    pub low_confidence: Vec<bool>,
    pub spike: Vec<bool>,
    pub dispersion: f64,
}

impl BandCurve {
    /// Band from given values with full confidence.
    pub fn from_values(level: usize, ng: Vec<f64>, energy: Vec<f64>) -> Result<Self> {
        if ng.len() != energy.len() || ng.len() < 3 {
            return Err(Error::InvalidInput("need matching grids with at least three points".into()));
        }
        let n = ng.len();
        Ok(Self::assemble(level, ng, energy, 0.0, vec![1.0; n]))
    }

    fn assemble(level: usize, ng: Vec<f64>, energy: Vec<f64>, reference: f64, overlap: Vec<f64>) -> Self {
        let low_confidence = overlap.iter().map(|&o| o < TRACKING_THRESHOLD).collect();
        let spike = spike_flags(&energy);
        let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
        Self { level, ng, energy, reference, overlap, low_confidence, spike, dispersion: max - min }
    }

    /// Difference of the two grid ends, zero for a periodic branch.
    pub fn periodicity_defect(&self) -> f64 {
        (self.energy[self.energy.len() - 1] - self.energy[0]).abs()
    }
}

/// Uniform offset charges over one period, endpoints included.
pub fn ng_period_grid(points: usize) -> Vec<f64> {
    (0..points).map(|s| -0.5 + s as f64 / (points - 1) as f64).collect()
}

/// Points where an adjacent jump exceeds `SPIKE_FACTOR` times the median jump.
pub fn spike_flags(energy: &[f64]) -> Vec<bool> {
    let n = energy.len();
    if n < 3 {
        return vec![false; n];
    }
    let jumps: Vec<f64> = energy.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut sorted = jumps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let scale = energy.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let limit = SPIKE_FACTOR * median + 1e-12 * scale;
    (0..n)
        .map(|s| {
            let left = if s > 0 { jumps[s - 1] } else { 0.0 };
            let right = if s < n - 1 { jumps[s] } else { 0.0 };
            left.max(right) > limit
        })
        .collect()
}

/// Quasienergy branch of `level` across offset charge.
///
/// At each `n_g` the Floquet mode with the largest overlap with the undriven
/// eigenstate is selected; quasienergies are unfolded for continuity.
pub fn band(level: usize, params: &TransmonParams, basis: &ChargeBasis, ng_points: usize, opts: &FloquetOptions) -> Result<BandCurve> {
    if ng_points < MIN_NG_POINTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_NG_POINTS} offset-charge points, got {ng_points}")));
    }
    if level >= basis.dim() {
        return Err(Error::InvalidInput(format!("level {level} outside the basis")));
    }
    let ng = ng_period_grid(ng_points);
    let opts = FloquetOptions { keep_samples: false, ..*opts };
    let points: Result<Vec<(f64, f64, f64)>> = ng
        .par_iter()
        .map(|&n_g| {
            let p = params.with_ng(n_g);
            let (e, v) = static_spectrum(&p.with_drive(0.0), basis)?;
            let sol = solve_transmon(&p, basis, &opts)?;
            let (idx, ov) = sol.best_match(&v.column(level).mapv(|x| C64::new(x, 0.0)));
            Ok((sol.quasienergies[idx], ov, e[level]))
        })
        .collect();
    let points = points?;
    let omega = params.omega_d;
    let mut energy = Vec::with_capacity(ng_points);
    let mut previous = points[0].2;
    for &(raw, _, _) in &points {
        let value = unfold_near(raw, previous, omega);
        energy.push(value);
        previous = value;
    }
    let reference = energy[0];
    let energy = energy.iter().map(|e| e - reference).collect();
    let overlap = points.iter().map(|p| p.1).collect();
    Ok(BandCurve::assemble(level, ng, energy, reference, overlap))
}

/// Undriven band from double-double eigenvalues, resolving widths below `f64` precision.
pub fn undriven_band(level: usize, params: &TransmonParams, basis: &ChargeBasis, ng_points: usize) -> Result<BandCurve> {
    if ng_points < 3 {
        return Err(Error::InvalidInput("need at least three offset-charge points".into()));
    }
    let ng = ng_period_grid(ng_points);
    let p0 = params.with_drive(0.0);
    let values: Result<Vec<_>> = ng.par_iter().map(|&n_g| static_level(&p0.with_ng(n_g), basis, level)).collect();
    let values = values?;
    let reference = values[0];
    let energy = values.iter().map(|&v| (v - reference).hi()).collect();
    Ok(BandCurve::assemble(level, ng, energy, reference.hi(), vec![1.0; ng_points]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSlipSpectrum {
    /// `t_n` for `n = 0..=n_max`.
    pub coefficients: Vec<C64>,
    /// All `M` discrete coefficients, `n = 0..M` (read as `n - M` above `M / 2`).
    pub full: Vec<C64>,
    pub ng: Vec<f64>,
}

impl PhaseSlipSpectrum {
    pub fn abs(&self, n: usize) -> f64 {
        self.coefficients[n].norm()
    }

    /// `sum_n t_n e^{-i 2 pi n n_g}` on the sample points.
    pub fn reconstruct(&self) -> Vec<f64> {
        let m = self.full.len();
        self.ng
            .iter()
            .map(|&x| {
                self.full
                    .iter()
                    .enumerate()
                    .map(|(n, &t)| {
                        let nn = if n <= m / 2 { n as f64 } else { n as f64 - m as f64 };
                        t * C64::from_polar(1.0, -2.0 * PI * nn * x)
                    })
                    .sum::<C64>()
                    .re
            })
            .collect()
    }
}

/// `t_n = int dn_g eps(n_g) e^{i 2 pi n n_g}` over one period.
pub fn phase_slip_spectrum(band: &BandCurve, n_max: usize) -> Result<PhaseSlipSpectrum> {
    let m = band.ng.len() - 1;
    if n_max > m / 2 {
        return Err(Error::InvalidInput(format!("n_max {n_max} exceeds the grid Nyquist index {}", m / 2)));
    }
    let ng: Vec<f64> = band.ng[..m].to_vec();
    let energy = &band.energy[..m];
    let full: Vec<C64> = (0..m)
        .map(|n| {
            let nn = if n <= m / 2 { n as f64 } else { n as f64 - m as f64 };
            energy
                .iter()
                .zip(ng.iter())
                .map(|(&e, &x)| e * C64::from_polar(1.0, 2.0 * PI * nn * x))
                .sum::<C64>()
                / m as f64
        })
        .collect();
    let mut coefficients: Vec<C64> = full[..=n_max].to_vec();
    // The constant term carries the reference offset.
    coefficients[0] += band.reference;
    Ok(PhaseSlipSpectrum { coefficients, full, ng })
}

/// `N_i(j) = sqrt(sum_{l >= j} sum_{k in {-1, 0}} |n_ilk|^2)` for every threshold `j`.
///
/// `order` lists mode indices by increasing mean energy; `i` and `j` are ranks in it.
pub fn chaotic_coupling(elements: &MatrixElementTensor, order: &[usize], i: usize) -> Result<Vec<f64>> {
    if order.len() != elements.dim() || i >= order.len() {
        return Err(Error::InvalidInput("ordering does not match the tensor".into()));
    }
    let row = order[i];
    let weights: Vec<f64> = order
        .iter()
        .map(|&l| elements.get(row, l, -1).norm_sqr() + elements.get(row, l, 0).norm_sqr())
        .collect();
    let mut curve = vec![0.0; order.len()];
    let mut acc = 0.0;
    for j in (0..order.len()).rev() {
        acc += weights[j];
        curve[j] = acc.sqrt();
    }
    Ok(curve)
}

/// Root mean square of coupling curves over an ensemble.
pub fn rms_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|j| (curves.iter().map(|c| c[j] * c[j]).sum::<f64>() / curves.len() as f64).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipation::matrix_elements;
    use crate::floquet::FloquetOptions;
    use proptest::prelude::*;

    #[test]
    fn flat_band_has_zero_dispersion() {
        let ng = ng_period_grid(65);
        let b = BandCurve::from_values(0, ng.clone(), vec![3.0; 65]).unwrap();
        assert_eq!(b.dispersion, 0.0);
        assert!(b.spike.iter().all(|s| !s));
    }

    #[test]
    fn cosine_band_has_one_harmonic() {
        let ng = ng_period_grid(65);
        let e: Vec<f64> = ng.iter().map(|x| (2.0 * PI * x).cos()).collect();
        let b = BandCurve::from_values(0, ng, e.clone()).unwrap();
        let t = phase_slip_spectrum(&b, 10).unwrap();
        assert!((t.abs(1) - 0.5).abs() < 1e-14);
        for n in [0, 2, 3, 5, 10] {
            assert!(t.abs(n) < 1e-14, "{n}");
        }
        for (a, b) in t.reconstruct().iter().zip(e.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_jump_is_flagged() {
        let ng = ng_period_grid(65);
        let mut e: Vec<f64> = ng.iter().map(|x| 1e-3 * (2.0 * PI * x).cos()).collect();
        e[30] += 0.1;
        let b = BandCurve::from_values(0, ng, e).unwrap();
        assert!(b.spike[30] && b.spike[29] && b.spike[31]);
        assert_eq!(b.spike.iter().filter(|&&s| s).count(), 3);
    }

    #[test]
    fn undriven_bands_agree_between_solvers() {
        let p = TransmonParams::from_rescaled(2.0, 0.0, 1.34, 0.0, 1.0).unwrap();
        let basis = ChargeBasis::default();
        let floq = band(1, &p, &basis, 64, &FloquetOptions::default()).unwrap();
        let precise = undriven_band(1, &p, &basis, 64).unwrap();
        assert!((floq.dispersion / precise.dispersion - 1.0).abs() < 1e-6);
        assert!(floq.periodicity_defect() < 1e-8 * floq.reference.abs().max(1.0));
        assert!(floq.low_confidence.iter().all(|c| !c));
        // Even in n_g: t_n is real.
        let t = phase_slip_spectrum(&precise, 8).unwrap();
        for n in 1..4 {
            assert!(t.coefficients[n].im.abs() < 1e-10 * t.abs(1));
        }
    }

    #[test]
    fn undriven_harmonics_decay_exponentially() {
        let p = TransmonParams::from_rescaled(1.5, 0.0, 1.34, 0.0, 1.0).unwrap();
        let b = undriven_band(1, &p, &ChargeBasis::default(), 129).unwrap();
        let t = phase_slip_spectrum(&b, 6).unwrap();
        let ratios: Vec<f64> = (1..5).map(|n| t.abs(n + 1) / t.abs(n)).collect();
        assert!(ratios.iter().all(|&r| r < 0.5), "{ratios:?}");
        assert!(b.spike.iter().all(|s| !s));
    }

    #[test]
    fn undriven_dispersion_is_exponential_in_inverse_hbar() {
        let basis = ChargeBasis::default();
        let xs = [2.0, 3.0, 4.0, 5.0, 6.0];
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let p = TransmonParams::from_rescaled(x, 0.0, 1.34, 0.0, 1.0).unwrap();
                crate::precise::undriven_dispersion(&p, &basis, 1).unwrap().ln()
            })
            .collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        assert!(r2 > 0.98 && sxy < 0.0, "R^2 {r2}");
    }

    #[test]
    fn coupling_curve_starts_at_total_weight() {
        let p = TransmonParams::from_rescaled(3.0, 0.1, 1.34, 0.2, 1.0).unwrap();
        let basis = ChargeBasis::default();
        let sol = solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
        let el = matrix_elements(&sol, &basis, None).unwrap();
        let order = sol.order_by_mean_energy();
        let curve = chaotic_coupling(&el, &order, 0).unwrap();
        let total: f64 = (0..el.dim()).map(|l| el.get(order[0], l, -1).norm_sqr() + el.get(order[0], l, 0).norm_sqr()).sum();
        assert!((curve[0] - total.sqrt()).abs() < 1e-12);
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        let excited = chaotic_coupling(&el, &order, 1).unwrap();
        assert!(excited[12] > curve[12], "{} vs {}", excited[12], curve[12]);
    }

    proptest! {
        #[test]
        fn fourier_inversion(coeffs in proptest::collection::vec(-1.0f64..1.0, 5)) {
            let ng = ng_period_grid(65);
            let e: Vec<f64> = ng.iter().map(|x| coeffs.iter().enumerate().map(|(n, c)| c * (2.0 * PI * n as f64 * x).cos()).sum()).collect();
            let b = BandCurve::from_values(0, ng, e.clone()).unwrap();
            let t = phase_slip_spectrum(&b, 32).unwrap();
            for (a, b) in t.reconstruct().iter().zip(e.iter()) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            for n in 1..5 {
                prop_assert!((t.coefficients[n] - t.full[64 - n].conj()).norm() < 1e-12);
            }
        }
    }
}
