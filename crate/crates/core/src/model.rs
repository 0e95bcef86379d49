//! System parameters, the charge basis and rescaling to the classical pendulum.

use crate::error::{Error, Result};
use crate::linalg::eigh_real;
use ndarray::{Array1, Array2};
use std::f64::consts::PI;

/// Angular frequency of 1 GHz in rad/ns.
pub const GHZ: f64 = 2.0 * PI;

/// Boltzmann constant over Planck constant in GHz per kelvin.
pub const KB_OVER_H_GHZ_PER_K: f64 = 20.836_619_123_327_57;

pub const DEFAULT_CUTOFF: usize = 17;

/// Reference charging energy for configs that only give rescaled quantities:
/// `omega_p / 2pi = 7.5 GHz / 1.34` at `hbar_eff = 1/3`.
pub const REFERENCE_EC: f64 = GHZ * 7.5 / (1.34 * 24.0);

/// Temperature in kelvin to an angular thermal energy.
pub fn thermal_energy(kelvin: f64) -> f64 {
    KB_OVER_H_GHZ_PER_K * kelvin * GHZ
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmonParams {
    pub e_c: f64,
    pub e_j: f64,
    pub n_g: f64,
    pub eps_d: f64,
    pub omega_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedParams {
    pub hbar_eff: f64,
    pub eps_tilde: f64,
    pub omega_tilde: f64,
    pub ng_tilde: f64,
    pub omega_p: f64,
}

impl TransmonParams {
    pub fn new(e_c: f64, e_j: f64, n_g: f64, eps_d: f64, omega_d: f64) -> Result<Self> {
        let p = Self { e_c, e_j, n_g, eps_d, omega_d };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from `1/hbar_eff`, rescaled drive and absolute charging energy.
    pub fn from_rescaled(
        inv_hbar: f64,
        eps_tilde: f64,
        omega_tilde: f64,
        n_g: f64,
        e_c: f64,
    ) -> Result<Self> {
        if !(inv_hbar > 0.0) || !(e_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "1/hbar_eff = {inv_hbar} and E_C = {e_c} must be positive"
            )));
        }
        let e_j = 8.0 * e_c * inv_hbar * inv_hbar;
        let omega_p = (8.0 * e_j * e_c).sqrt();
        Self::new(e_c, e_j, n_g, eps_tilde * omega_p, omega_tilde * omega_p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.e_c, self.e_j, self.n_g, self.eps_d, self.omega_d]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite transmon parameter".into()));
        }
        if self.e_c <= 0.0 || self.e_j <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "E_C = {} and E_J = {} must be positive",
                self.e_c, self.e_j
            )));
        }
        if self.omega_d <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "drive frequency {} must be positive",
                self.omega_d
            )));
        }
        if self.eps_d < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "drive amplitude {} must be nonnegative",
                self.eps_d
            )));
        }
        Ok(())
    }

    pub fn omega_p(&self) -> f64 {
        (8.0 * self.e_j * self.e_c).sqrt()
    }

    pub fn hbar_eff(&self) -> f64 {
        (8.0 * self.e_c / self.e_j).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_d
    }

    pub fn ng_reduced(&self) -> f64 {
        self.n_g.rem_euclid(1.0)
    }

    pub fn with_drive(&self, eps_d: f64) -> Self {
        Self { eps_d, ..*self }
    }

    pub fn with_ng(&self, n_g: f64) -> Self {
        Self { n_g, ..*self }
    }

    /// Same absolute scale, drive amplitude given as `eps_d / omega_p`.
    pub fn with_eps_tilde(&self, eps_tilde: f64) -> Self {
        self.with_drive(eps_tilde * self.omega_p())
    }
}

pub fn rescale(p: &TransmonParams) -> Result<ReducedParams> {
    p.validate()?;
    let omega_p = p.omega_p();
    let hbar_eff = p.hbar_eff();
    Ok(ReducedParams {
        hbar_eff,
        eps_tilde: p.eps_d / omega_p,
        omega_tilde: p.omega_d / omega_p,
        ng_tilde: hbar_eff * p.n_g,
        omega_p,
    })
}

/// Inverse of [`rescale`].
pub fn unscale(r: &ReducedParams) -> Result<TransmonParams> {
    if !(r.hbar_eff > 0.0) || !(r.omega_p > 0.0) {
        return Err(Error::InvalidParameter("hbar_eff and omega_p must be positive".into()));
    }
    // omega_p = 8 E_C / hbar_eff and E_J = omega_p / hbar_eff.
    let e_c = r.hbar_eff * r.omega_p / 8.0;
    let e_j = r.omega_p / r.hbar_eff;
    TransmonParams::new(
        e_c,
        e_j,
        r.ng_tilde / r.hbar_eff,
        r.eps_tilde * r.omega_p,
        r.omega_tilde * r.omega_p,
    )
}

impl ReducedParams {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_tilde
    }

    /// Dimensionless parameters for classical runs; `omega_p` is set to 1.
    pub fn dimensionless(hbar_eff: f64, eps_tilde: f64, omega_tilde: f64, ng_tilde: f64) -> Self {
        Self { hbar_eff, eps_tilde, omega_tilde, ng_tilde, omega_p: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargeBasis {
    pub cutoff: usize,
}

impl Default for ChargeBasis {
    fn default() -> Self {
        Self { cutoff: DEFAULT_CUTOFF }
    }
}

impl ChargeBasis {
    pub fn new(cutoff: usize) -> Self {
        Self { cutoff }
    }

    pub fn dim(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + Clone {
        let c = self.cutoff as i64;
        -c..=c
    }

    pub fn label(&self, index: usize) -> i64 {
        index as i64 - self.cutoff as i64
    }

    pub fn index_of(&self, m: i64) -> Option<usize> {
        let shifted = m + self.cutoff as i64;
        (shifted >= 0 && (shifted as usize) < self.dim()).then_some(shifted as usize)
    }
}

/// Diagonal and first off-diagonal of the static charge-basis Hamiltonian.
pub fn static_tridiagonal(p: &TransmonParams, basis: &ChargeBasis) -> (Vec<f64>, Vec<f64>) {
    let diag = basis
        .labels()
        .map(|m| 4.0 * p.e_c * (m as f64 - p.n_g).powi(2))
        .collect();
    let off = vec![-0.5 * p.e_j; basis.dim() - 1];
    (diag, off)
}

pub fn build_static_hamiltonian(p: &TransmonParams, basis: &ChargeBasis) -> Result<Array2<f64>> {
    p.validate()?;
    let (diag, off) = static_tridiagonal(p, basis);
    let n = basis.dim();
    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        h[[i, i]] = diag[i];
    }
    for i in 0..n - 1 {
        h[[i, i + 1]] = off[i];
        h[[i + 1, i]] = off[i];
    }
    Ok(h)
}

pub fn charge_operator(basis: &ChargeBasis) -> Array2<f64> {
    Array2::from_diag(&Array1::from_iter(basis.labels().map(|m| m as f64)))
}

/// Drive amplitude `2 g sqrt(n_bar)` from a coupling and a photon number.
pub fn drive_from_photons(g: f64, n_bar: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidParameter(format!("coupling g = {g} must be positive")));
    }
    if !(n_bar >= 0.0) {
        return Err(Error::InvalidParameter(format!("photon number {n_bar} must be nonnegative")));
    }
    Ok(2.0 * g * n_bar.sqrt())
}

/// Eigenpairs of the undriven transmon, ascending.
pub fn static_spectrum(p: &TransmonParams, basis: &ChargeBasis) -> Result<(Array1<f64>, Array2<f64>)> {
    eigh_real(&build_static_hamiltonian(p, basis)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_ratio(ratio: f64) -> TransmonParams {
        TransmonParams::new(1.0, ratio, 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn inverse_hbar_for_known_ratios() {
        assert!((1.0 / rescale(&with_ratio(72.0)).unwrap().hbar_eff - 3.0).abs() < 1e-12);
        let r500 = 1.0 / rescale(&with_ratio(500.0)).unwrap().hbar_eff;
        assert!((r500 - 7.91).abs() < 5e-3);
        assert!((r500 - 62.5f64.sqrt()).abs() < 1e-12);
        assert!((rescale(&with_ratio(8.0)).unwrap().hbar_eff - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_energies() {
        assert!(TransmonParams::new(0.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TransmonParams::new(1.0, -1.0, 0.0, 0.0, 1.0).is_err());
        let bad = TransmonParams { e_c: -1.0, e_j: 1.0, n_g: 0.0, eps_d: 0.0, omega_d: 1.0 };
        assert!(matches!(rescale(&bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn smallest_hamiltonian_by_hand() {
        let p = TransmonParams::new(1.0, 2.0, 0.0, 0.0, 1.0).unwrap();
        let h = build_static_hamiltonian(&p, &ChargeBasis::new(1)).unwrap();
        let expected = ndarray::array![[4.0, -1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, -1.0, 4.0]];
        assert_eq!(h, expected);
    }

    #[test]
    fn charge_operator_small() {
        let n = charge_operator(&ChargeBasis::new(1));
        assert_eq!(n, Array2::from_diag(&ndarray::array![-1.0, 0.0, 1.0]));
    }

    #[test]
    fn charge_commutes_only_without_josephson_term() {
        let basis = ChargeBasis::new(4);
        let n = charge_operator(&basis);
        let commutator = |e_j: f64| {
            let p = TransmonParams { e_c: 1.0, e_j, n_g: 0.2, eps_d: 0.0, omega_d: 1.0 };
            let (diag, off) = static_tridiagonal(&p, &basis);
            let mut h = Array2::from_diag(&Array1::from(diag));
            for i in 0..off.len() {
                h[[i, i + 1]] = off[i];
                h[[i + 1, i]] = off[i];
            }
            let c = h.dot(&n) - n.dot(&h);
            c.iter().fold(0.0f64, |a, x| a.max(x.abs()))
        };
        assert_eq!(commutator(0.0), 0.0);
        assert!((commutator(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ground_state_charge_vanishes_at_zero_offset() {
        let basis = ChargeBasis::default();
        let (_, v) = static_spectrum(&with_ratio(30.0), &basis).unwrap();
        let mean: f64 = basis.labels().enumerate().map(|(i, m)| m as f64 * v[[i, 0]].powi(2)).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn lowest_transition_near_plasma_frequency() {
        let p = with_ratio(72.0);
        let (e, _) = static_spectrum(&p, &ChargeBasis::new(40)).unwrap();
        let w01 = e[1] - e[0];
        let asymptotic = p.omega_p() - p.e_c;
        assert!((w01 - asymptotic).abs() / asymptotic < 0.02, "w01 {w01} vs {asymptotic}");
    }

    #[test]
    fn ground_dispersion_shrinks_with_ratio() {
        let basis = ChargeBasis::new(30);
        let dispersion = |ratio: f64| {
            let p0 = with_ratio(ratio);
            let e0 = static_spectrum(&p0, &basis).unwrap().0[0];
            let e5 = static_spectrum(&p0.with_ng(0.5), &basis).unwrap().0[0];
            (e5 - e0).abs()
        };
        let d: Vec<f64> = [20.0, 50.0, 72.0].iter().map(|&r| dispersion(r)).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn cutoff_convergence_of_low_levels() {
        let p = TransmonParams::new(1.0, 72.0, 0.3, 0.0, 1.0).unwrap();
        let a = static_spectrum(&p, &ChargeBasis::new(DEFAULT_CUTOFF)).unwrap().0;
        let b = static_spectrum(&p, &ChargeBasis::new(DEFAULT_CUTOFF + 10)).unwrap().0;
        for k in 0..15 {
            let rel = (a[k] - b[k]).abs() / b[k].abs().max(p.e_j);
            assert!(rel < 1e-8, "level {k}: {rel}");
        }
    }

    #[test]
    fn photon_drive_formula() {
        assert_eq!(drive_from_photons(0.3, 0.0).unwrap(), 0.0);
        assert!((drive_from_photons(0.25 * GHZ, 1.0).unwrap() / GHZ - 0.5).abs() < 1e-15);
        assert!(drive_from_photons(1.0, -1.0).is_err());
    }

    #[test]
    fn photon_drive_in_rescaled_units() {
        // omega_p / 2pi = 6.26 GHz sets the scale of the amplitude-matched comparison.
        let eps = drive_from_photons(0.208 * GHZ, 2.5).unwrap();
        assert!((eps / (6.26 * GHZ) - 0.105).abs() < 1e-3);
    }

    #[test]
    fn basis_labels_are_symmetric() {
        let b = ChargeBasis::new(5);
        assert_eq!(b.dim(), 11);
        let labels: Vec<i64> = b.labels().collect();
        assert_eq!(labels.first(), Some(&-5));
        assert_eq!(labels.last(), Some(&5));
        assert_eq!(b.index_of(0), Some(5));
        assert_eq!(b.index_of(6), None);
    }

    proptest! {
        #[test]
        fn rescale_round_trip(e_c in 0.01f64..5.0, ratio in 1.0f64..600.0, n_g in -2.0f64..2.0,
                              eps in 0.0f64..3.0, w in 0.1f64..5.0) {
            let p = TransmonParams::new(e_c, ratio * e_c, n_g, eps, w).unwrap();
            let r = rescale(&p).unwrap();
            prop_assert!((r.hbar_eff - (8.0 * p.e_c / p.e_j).sqrt()).abs() < 1e-15);
            let q = unscale(&r).unwrap();
            for (a, b) in [(p.e_c, q.e_c), (p.e_j, q.e_j), (p.eps_d, q.eps_d), (p.omega_d, q.omega_d)] {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
            prop_assert!((p.n_g - q.n_g).abs() <= 1e-12 * p.n_g.abs().max(1.0));
        }

        #[test]
        fn offset_charge_periodicity(n_g in 0.0f64..1.0, ratio in 5.0f64..100.0) {
            let basis = ChargeBasis::new(25);
            let p = TransmonParams::new(1.0, ratio, n_g, 0.0, 1.0).unwrap();
            let a = static_spectrum(&p, &basis).unwrap().0;
            let b = static_spectrum(&p.with_ng(n_g + 1.0), &basis).unwrap().0;
            for k in 0..10 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-10 * a[k].abs().max(ratio));
            }
        }

        #[test]
        fn hamiltonian_is_exactly_symmetric(n_g in -1.0f64..1.0, ratio in 1.0f64..100.0, cutoff in 1usize..20) {
            let p = TransmonParams::new(1.0, ratio, n_g, 0.0, 1.0).unwrap();
            let h = build_static_hamiltonian(&p, &ChargeBasis::new(cutoff)).unwrap();
            prop_assert_eq!(h.clone(), h.t().to_owned());
        }
    }
}
