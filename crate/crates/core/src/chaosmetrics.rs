//! Level-spacing statistics, reference distributions and parity labels.

use crate::error::{Error, Result};
use crate::floquet::{solve_transmon, FloquetOptions, FloquetSolution};
use crate::linalg::C64;
use crate::model::{ChargeBasis, TransmonParams};
use rayon::prelude::*;
use std::f64::consts::PI;

pub const DEFAULT_WINDOW: (f64, f64) = (1.6, 2.5);
pub const MIN_ENSEMBLE_SAMPLES: usize = 20;
pub const MIN_KS_SAMPLES: usize = 100;
pub const PARITY_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Poisson,
    WignerDyson,
}

impl Reference {
    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Reference::Poisson => 1.0 - (-s).exp(),
            Reference::WignerDyson => 1.0 - (-PI * s * s / 4.0).exp(),
        }
    }

    pub fn pdf(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            Reference::Poisson => (-s).exp(),
            Reference::WignerDyson => PI * s / 2.0 * (-PI * s * s / 4.0).exp(),
        }
    }

    /// Mean adjacent-gap ratio for large spectra.
    pub fn mean_gap_ratio(&self) -> f64 {
        match self {
            Reference::Poisson => 2.0 * std::f64::consts::LN_2 - 1.0,
            Reference::WignerDyson => 4.0 - 2.0 * 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    /// Mode indices sorted by quasienergy.
    pub indices: Vec<usize>,
    pub empty_warning: bool,
}

/// Modes with `lo < (<<H>> + E_J) / E_J < hi`, sorted by quasienergy.
pub fn select_chaotic_window(sol: &FloquetSolution, e_j: f64, lo: f64, hi: f64) -> WindowSelection {
    let me = sol.mean_energy_over_ej(e_j);
    let mut indices: Vec<usize> = (0..sol.n_modes()).filter(|&k| me[k] > lo && me[k] < hi).collect();
    indices.sort_by(|&a, &b| sol.quasienergies[a].total_cmp(&sol.quasienergies[b]));
    WindowSelection { empty_warning: indices.is_empty(), indices }
}

/// Nearest-neighbour spacings of sorted quasienergies on the circle of
/// circumference `omega`, normalized by the mean spacing `omega / N`.
pub fn spacings(sorted: &[f64], omega: f64) -> Result<Vec<f64>> {
    let n = sorted.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least two levels, got {n}")));
    }
    if sorted.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("quasienergies must be sorted".into()));
    }
    let mean = omega / n as f64;
    let mut out: Vec<f64> = sorted.windows(2).map(|w| (w[1] - w[0]) / mean).collect();
    out.push((sorted[0] - sorted[n - 1] + omega) / mean);
    Ok(out)
}

/// Mean of `min(s_k, s_{k+1}) / max(s_k, s_{k+1})` over cyclically adjacent spacings.
pub fn mean_gap_ratio(spacings: &[f64]) -> Option<f64> {
    let n = spacings.len();
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..n {
        let (a, b) = (spacings[k], spacings[(k + 1) % n]);
        let hi = a.max(b);
        if hi > 0.0 {
            sum += a.min(b) / hi;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpacings {
    pub n_g: f64,
    pub count: usize,
    pub spacings: Vec<f64>,
    pub gap_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacingEnsemble {
    pub samples: Vec<SampleSpacings>,
    pub window: (f64, f64),
}

impl SpacingEnsemble {
    pub fn pooled(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.spacings.iter().copied()).collect()
    }

    pub fn mean_spacing(&self) -> f64 {
        let p = self.pooled();
        p.iter().sum::<f64>() / p.len().max(1) as f64
    }

    /// Gap ratio averaged over all cyclic pairs of all samples.
    pub fn mean_gap_ratio(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in &self.samples {
            if let Some(r) = s.gap_ratio {
                sum += r * s.spacings.len() as f64;
                count += s.spacings.len();
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Offset charges `(k + 1/2) / (2 N)`, uniform over `[0, 1/2]` and avoiding
/// the symmetric points.
pub fn ng_grid(samples: usize) -> Vec<f64> {
    (0..samples).map(|k| 0.5 * (k as f64 + 0.5) / samples as f64).collect()
}

/// Spacing statistics pooled over offset charges.
pub fn ensemble(
    params: &TransmonParams,
    basis: &ChargeBasis,
    ng_values: &[f64],
    window: (f64, f64),
    opts: &FloquetOptions,
) -> Result<SpacingEnsemble> {
    if ng_values.len() < MIN_ENSEMBLE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_ENSEMBLE_SAMPLES} offset-charge samples, got {}",
            ng_values.len()
        )));
    }
    let opts = FloquetOptions { keep_samples: false, ..*opts };
    let samples: Result<Vec<SampleSpacings>> = ng_values
        .par_iter()
        .map(|&n_g| {
            let p = params.with_ng(n_g);
            let sol = solve_transmon(&p, basis, &opts)?;
            Ok(sample_from_solution(&sol, p.e_j, window, n_g))
        })
        .collect();
    Ok(SpacingEnsemble { samples: samples?, window })
}

pub fn sample_from_solution(sol: &FloquetSolution, e_j: f64, window: (f64, f64), n_g: f64) -> SampleSpacings {
    let sel = select_chaotic_window(sol, e_j, window.0, window.1);
    let levels: Vec<f64> = sel.indices.iter().map(|&k| sol.quasienergies[k]).collect();
    let sp = spacings(&levels, sol.omega).unwrap_or_default();
    SampleSpacings { n_g, count: levels.len(), gap_ratio: mean_gap_ratio(&sp), spacings: sp }
}

/// Kolmogorov-Smirnov distance between the empirical and reference CDFs.
pub fn distribution_distance(samples: &[f64], reference: Reference) -> Result<f64> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_KS_SAMPLES} spacings, got {}",
            samples.len()
        )));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = reference.cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

/// Empirical integrated distribution at the given points.
pub fn integrated_distribution(samples: &[f64], points: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    points
        .iter()
        .map(|&x| s.partition_point(|&v| v <= x) as f64 / s.len().max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityLabel {
    /// +1 even, -1 odd, 0 unresolved.
    pub label: i8,
    pub expectation: f64,
}

/// Charge-basis index map of `m -> c - m`; `None` where the image leaves the basis.
pub fn parity_map(basis: &ChargeBasis, c: i64) -> Vec<Option<usize>> {
    (0..basis.dim()).map(|i| basis.index_of(c - basis.label(i))).collect()
}

/// Applies `e^{-i c F(t)} P` to a state sampled at time `t + T/2`.
pub fn apply_symmetry(state: &[C64], map: &[Option<usize>], c: i64, phase_f: f64) -> Vec<C64> {
    let ph = C64::from_polar(1.0, -(c as f64) * phase_f);
    let mut out = vec![C64::new(0.0, 0.0); state.len()];
    for (i, target) in map.iter().enumerate() {
        if let Some(j) = *target {
            out[j] = state[i] * ph;
        }
    }
    out
}

/// Parity labels of transmon Floquet modes at `n_g` equal to 0 or 1/2.
///
/// The label is the sign of the period average of
/// `<phi(t)| e^{-i c F(t)} P |phi(t + T/2)>`, with `P: m -> c - m`,
/// `c = 2 n_g` and `F(t) = (A / omega) sin(omega t)`.
pub fn parity_classify(sol: &FloquetSolution, basis: &ChargeBasis) -> Result<Vec<ParityLabel>> {
    let p = sol.params.ok_or_else(|| Error::InvalidInput("solution has no transmon parameters".into()))?;
    let two_ng = 2.0 * p.n_g;
    if (two_ng - two_ng.round()).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "parity is only exact at n_g = 0 or 1/2 (mod 1), got {}",
            p.n_g
        )));
    }
    if !sol.has_all_samples() || sol.n_times % 2 != 0 {
        return Err(Error::InvalidInput("need all mode samples with an even count".into()));
    }
    let c = two_ng.round() as i64;
    let map = parity_map(basis, c);
    let nt = sol.n_times;
    let mut labels = Vec::with_capacity(sol.n_modes());
    for k in 0..sol.n_modes() {
        let mut acc = C64::new(0.0, 0.0);
        for s in 0..nt {
            let t = sol.sample_times[s];
            let later: Vec<C64> = sol.modes_t[(s + nt / 2) % nt].column(k).iter().copied().collect();
            let f = p.eps_d / p.omega_d * (p.omega_d * t).sin();
            let image = apply_symmetry(&later, &map, c, f);
            let now = sol.modes_t[s].column(k);
            acc += now.iter().zip(image.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
        }
        acc /= nt as f64;
        let expectation = acc.re;
        let label = if acc.norm() > PARITY_CONFIDENCE && expectation.abs() > PARITY_CONFIDENCE {
            expectation.signum() as i8
        } else {
            0
        };
        labels.push(ParityLabel { label, expectation });
    }
    Ok(labels)
}
