//! Circle coherent states and Husimi functions.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::ChargeBasis;
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use std::f64::consts::PI;

pub const DEFAULT_GRID: usize = 201;
pub const DEFAULT_N_WINDOW: (f64, f64) = (-4.0, 4.0);
pub const DEFAULT_TIME_FRACTION: f64 = 0.125;
const TAIL_WARNING: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CoherentState {
    pub amplitudes: Array1<C64>,
    /// Weight of the untruncated envelope lying outside the basis.
    pub tail_mass: f64,
    pub truncation_warning: bool,
}

#[derive(Debug, Clone)]
pub struct HusimiGrid {
    pub phi: Vec<f64>,
    pub n: Vec<f64>,
    /// `values[[i, j]]` at `n[i]`, `phi[j]`.
    pub values: Array2<f64>,
    pub time: f64,
    pub hbar_eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_phi: usize,
    pub n_n: usize,
    pub n_min: f64,
    pub n_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_phi: DEFAULT_GRID, n_n: DEFAULT_GRID, n_min: DEFAULT_N_WINDOW.0, n_max: DEFAULT_N_WINDOW.1 }
    }
}

impl GridSpec {
    /// Phases uniformly covering `(-pi, pi]`.
    pub fn phi_points(&self) -> Vec<f64> {
        (0..self.n_phi).map(|j| -PI + 2.0 * PI * (j as f64 + 1.0) / self.n_phi as f64).collect()
    }

    pub fn n_points(&self) -> Vec<f64> {
        if self.n_n == 1 {
            return vec![0.5 * (self.n_min + self.n_max)];
        }
        (0..self.n_n)
            .map(|i| self.n_min + (self.n_max - self.n_min) * i as f64 / (self.n_n - 1) as f64)
            .collect()
    }
}

/// Real Gaussian envelope in charge, `exp(-(m hbar - n0)^2 / (2 hbar))`.
fn envelope(m: i64, n0: f64, hbar: f64) -> f64 {
    (-(m as f64 * hbar - n0).powi(2) / (2.0 * hbar)).exp()
}

/// Minimum-uncertainty state on the circle centred at `(phi0, n0)` in rescaled
/// variables, with equal phase and momentum widths `sqrt(hbar / 2)`.
pub fn circle_coherent_state(phi0: f64, n0: f64, hbar_eff: f64, basis: &ChargeBasis) -> Result<CoherentState> {
    if !(hbar_eff > 0.0) {
        return Err(Error::InvalidParameter("hbar_eff must be positive".into()));
    }
    let c = basis.cutoff as i64;
    if n0 < -(c as f64) * hbar_eff || n0 > c as f64 * hbar_eff {
        return Err(Error::InvalidInput(format!("momentum {n0} lies outside the charge window")));
    }
    let mut amps: Array1<C64> = basis
        .labels()
        .map(|m| C64::from_polar(envelope(m, n0, hbar_eff), -(m as f64) * phi0))
        .collect();
    let inside: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    let centre = (n0 / hbar_eff).round() as i64;
    let reach = (12.0 / hbar_eff.sqrt()).ceil() as i64 + 2;
    let mut outside = 0.0;
    for m in (centre - reach)..=(centre + reach) {
        if m.abs() > c {
            outside += envelope(m, n0, hbar_eff).powi(2);
        }
    }
    let norm = inside.sqrt();
    amps.mapv_inplace(|x| x / norm);
    let tail_mass = outside / (inside + outside);
    Ok(CoherentState { amplitudes: amps, tail_mass, truncation_warning: tail_mass > TAIL_WARNING })
}

/// `Q(phi, n) = |<z(phi, n)|psi>|^2` on a grid; `state` is in the charge basis.
pub fn husimi(state: ArrayView1<C64>, spec: &GridSpec, hbar_eff: f64, basis: &ChargeBasis, time: f64) -> Result<HusimiGrid> {
    if state.len() != basis.dim() {
        return Err(Error::InvalidInput("state dimension does not match basis".into()));
    }
    let norm: f64 = state.iter().map(|x| x.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("state norm {norm} is not 1")));
    }
    let phi = spec.phi_points();
    let n = spec.n_points();
    let labels: Vec<i64> = basis.labels().collect();
    // Envelope normalization depends only on n0.
    let rows: Vec<Vec<f64>> = n
        .par_iter()
        .map(|&n0| {
            let env: Vec<f64> = labels.iter().map(|&m| envelope(m, n0, hbar_eff)).collect();
            let total: f64 = {
                let centre = (n0 / hbar_eff).round() as i64;
                let reach = (12.0 / hbar_eff.sqrt()).ceil() as i64 + 2;
                ((centre - reach)..=(centre + reach)).map(|m| envelope(m, n0, hbar_eff).powi(2)).sum()
            };
            let weights: Vec<C64> = env.iter().zip(state.iter()).map(|(e, s)| s * (e / total.sqrt())).collect();
            phi.iter()
                .map(|&ph| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (&m, w) in labels.iter().zip(weights.iter()) {
                        acc += w * C64::from_polar(1.0, m as f64 * ph);
                    }
                    acc.norm_sqr()
                })
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((n.len(), phi.len()), |(i, j)| rows[i][j]);
    Ok(HusimiGrid { phi, n, values, time, hbar_eff })
}

impl HusimiGrid {
    /// `sum Q dphi dn / (2 pi hbar)`, close to 1 when the window holds the state.
    pub fn normalization(&self) -> f64 {
        let dphi = 2.0 * PI / self.phi.len() as f64;
        let dn = if self.n.len() > 1 { self.n[1] - self.n[0] } else { 1.0 };
        self.values.sum() * dphi * dn / (2.0 * PI * self.hbar_eff)
    }

    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for ((i, j), &q) in self.values.indexed_iter() {
            if q > best.2 {
                best = (i, j, q);
            }
        }
        (self.phi[best.1], self.n[best.0])
    }

    /// Phase-space area where `Q` exceeds half its maximum.
    pub fn half_max_area(&self) -> f64 {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let dphi = 2.0 * PI / self.phi.len() as f64;
        let dn = if self.n.len() > 1 { self.n[1] - self.n[0] } else { 1.0 };
        self.values.iter().filter(|&&q| q > 0.5 * max).count() as f64 * dphi * dn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn mean_charge(state: &Array1<C64>, basis: &ChargeBasis) -> f64 {
        basis.labels().zip(state.iter()).map(|(m, c)| m as f64 * c.norm_sqr()).sum()
    }

    #[test]
    fn coherent_state_is_normalized_and_centred() {
        let basis = ChargeBasis::default();
        let hbar = 1.0 / 3.0;
        let z = circle_coherent_state(0.7, 1.0, hbar, &basis).unwrap();
        let norm: f64 = z.amplitudes.iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((mean_charge(&z.amplitudes, &basis) * hbar - 1.0).abs() < 0.5 * hbar);
        assert!(!z.truncation_warning);
    }

    #[test]
    fn truncated_envelope_warns() {
        let basis = ChargeBasis::new(6);
        let hbar = 1.0 / 3.0;
        let z = circle_coherent_state(0.0, 1.9, hbar, &basis).unwrap();
        assert!(z.truncation_warning, "tail {}", z.tail_mass);
    }

    #[test]
    fn husimi_of_coherent_state_peaks_at_centre() {
        let basis = ChargeBasis::default();
        let hbar = 1.0 / 3.0;
        let z = circle_coherent_state(1.0, -0.8, hbar, &basis).unwrap();
        let q = husimi(z.amplitudes.view(), &GridSpec::default(), hbar, &basis, 0.0).unwrap();
        let (phi, n) = q.argmax();
        assert!((phi - 1.0).abs() < 0.05 && (n + 0.8).abs() < 0.05, "peak at {phi}, {n}");
        assert!((q.normalization() - 1.0).abs() < 0.05, "norm {}", q.normalization());
    }

    #[test]
    fn overlap_decays_in_both_directions() {
        let basis = ChargeBasis::default();
        let hbar = 1.0 / 3.0;
        let z0 = circle_coherent_state(0.0, 0.0, hbar, &basis).unwrap().amplitudes;
        let ov = |phi: f64, n: f64| {
            let z = circle_coherent_state(phi, n, hbar, &basis).unwrap().amplitudes;
            z.iter().zip(z0.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().norm()
        };
        assert!(ov(0.3, 0.0) < ov(0.1, 0.0) && ov(0.1, 0.0) < 1.0);
        assert!(ov(0.0, 0.3) < ov(0.0, 0.1) && ov(0.0, 0.1) < 1.0);
        // Gaussian oracle: |<z'|z>| = exp(-(dphi^2 + dn^2) / (4 hbar)).
        let expected = (-(0.2f64.powi(2) + 0.3f64.powi(2)) / (4.0 * hbar)).exp();
        assert!((ov(0.2, 0.3) - expected).abs() < 1e-6);
    }

    #[test]
    fn charge_state_husimi_is_phase_independent() {
        let basis = ChargeBasis::new(8);
        let mut s = Array1::<C64>::zeros(basis.dim());
        s[basis.index_of(2).unwrap()] = C64::new(1.0, 0.0);
        let q = husimi(s.view(), &GridSpec { n_phi: 16, n_n: 9, n_min: -2.0, n_max: 2.0 }, 0.5, &basis, 0.0).unwrap();
        for row in q.values.rows() {
            let first = row[0];
            assert!(row.iter().all(|&v| (v - first).abs() < 1e-14 * first.max(1e-300)));
        }
    }

    #[test]
    fn peak_area_scales_with_hbar() {
        let basis = ChargeBasis::new(40);
        let area = |inv: f64| {
            let hbar = 1.0 / inv;
            let z = circle_coherent_state(0.0, 0.0, hbar, &basis).unwrap();
            let spec = GridSpec { n_phi: 401, n_n: 401, n_min: -2.0, n_max: 2.0 };
            husimi(z.amplitudes.view(), &spec, hbar, &basis, 0.0).unwrap().half_max_area() / hbar
        };
        let (a3, a8) = (area(3.0), area(7.91));
        assert!((a3 / a8 - 1.0).abs() < 0.05, "{a3} vs {a8}");
    }

    proptest! {
        #[test]
        fn husimi_is_nonnegative(seed in 0u64..1000) {
            let basis = ChargeBasis::new(6);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut s: Array1<C64> = (0..basis.dim()).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            let norm = s.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            s.mapv_inplace(|x| x / norm);
            let q = husimi(s.view(), &GridSpec { n_phi: 20, n_n: 20, n_min: -2.0, n_max: 2.0 }, 0.4, &basis, 0.0).unwrap();
            prop_assert!(q.values.iter().all(|&v| v >= 0.0));
        }
    }
}
