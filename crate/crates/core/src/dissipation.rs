//! Floquet-Markov rates, steady states and dephasing.

use crate::error::{Error, Result};
use crate::floquet::FloquetSolution;
use crate::linalg::C64;
use crate::model::{static_spectrum, thermal_energy, ChargeBasis, TransmonParams};
use ndarray::{Array2, Array3};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use rustfft::FftPlanner;

pub const ALIAS_TOLERANCE: f64 = 1e-6;
pub const CHANNEL_THRESHOLD: f64 = 1e-8;
/// Harmonics below this fraction of the largest element are round-off and set to zero.
pub const HARMONIC_FLOOR: f64 = 1e-13;
pub const DEFAULT_CUTOFF_RATIO: f64 = 10.0;

/// `n_ijk` for `k` in `[-K, K]`, defined by
/// `<phi_i(t)| n |phi_j(t)> = sum_k n_ijk e^{-i k omega t}`.
#[derive(Debug, Clone)]
pub struct MatrixElementTensor {
    /// Indexed `[i, j, k + K]`.
    pub values: Array3<C64>,
    pub k_max: usize,
    pub n_times: usize,
    pub quasienergies: Vec<f64>,
    pub omega: f64,
    /// Largest fraction of a mode's harmonic weight lying beyond `K`.
    pub alias_weight: f64,
}

impl MatrixElementTensor {
    pub fn dim(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn get(&self, i: usize, j: usize, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.k_max {
            return C64::new(0.0, 0.0);
        }
        self.values[[i, j, (k + self.k_max as i64) as usize]]
    }

    /// Energy released to the bath in the `j -> i` transition with `k` drive quanta.
    pub fn delta(&self, i: usize, j: usize, k: i64) -> f64 {
        self.quasienergies[j] - self.quasienergies[i] + k as f64 * self.omega
    }

    /// `sum_k n_ijk e^{-i k omega t}`.
    pub fn reconstruct(&self, i: usize, j: usize, t: f64) -> C64 {
        let kk = self.k_max as i64;
        (-kk..=kk).map(|k| self.get(i, j, k) * C64::from_polar(1.0, -(k as f64) * self.omega * t)).sum()
    }

    /// Summed `|n_ijk|^2` over even and odd `k`.
    pub fn channel_weights(&self) -> (Array2<f64>, Array2<f64>) {
        let n = self.dim();
        let mut even = Array2::zeros((n, n));
        let mut odd = Array2::zeros((n, n));
        let kk = self.k_max as i64;
        for i in 0..n {
            for j in 0..n {
                for k in -kk..=kk {
                    let w = self.get(i, j, k).norm_sqr();
                    if k % 2 == 0 {
                        even[[i, j]] += w;
                    } else {
                        odd[[i, j]] += w;
                    }
                }
            }
        }
        (even, odd)
    }

    /// `min / max` of the even and odd channel weights for each pair.
    pub fn mixed_ratio(&self) -> Array2<f64> {
        let (even, odd) = self.channel_weights();
        Array2::from_shape_fn(even.dim(), |(i, j)| {
            let (a, b) = (even[[i, j]], odd[[i, j]]);
            let hi = a.max(b);
            if hi == 0.0 {
                0.0
            } else {
                a.min(b) / hi
            }
        })
    }
}

/// Charge matrix elements of every mode pair, Fourier-resolved over one period.
pub fn matrix_elements(sol: &FloquetSolution, basis: &ChargeBasis, k_max: Option<usize>) -> Result<MatrixElementTensor> {
    let nt = sol.n_times;
    if !nt.is_power_of_two() || !sol.has_all_samples() {
        return Err(Error::InvalidInput("need all mode samples with a power-of-two count".into()));
    }
    if sol.dim() != basis.dim() {
        return Err(Error::InvalidInput("solution dimension does not match basis".into()));
    }
    let k_max = k_max.unwrap_or(nt / 4);
    if 4 * k_max > nt {
        return Err(Error::InvalidInput(format!("N_t = {nt} is too small for K = {k_max}")));
    }
    let n = sol.n_modes();
    let charges: Vec<f64> = basis.labels().map(|m| m as f64).collect();
    // series[s][i, j] = <phi_i(t_s)| n |phi_j(t_s)>
    let series: Vec<Array2<C64>> = sol
        .modes_t
        .par_iter()
        .map(|modes| {
            let mut weighted = modes.clone();
            for (mut row, &q) in weighted.rows_mut().into_iter().zip(charges.iter()) {
                row.mapv_inplace(|x| x * q);
            }
            modes.t().mapv(|x| x.conj()).dot(&weighted)
        })
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(nt);
    let rows: Vec<(Vec<C64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::with_capacity(n * (2 * k_max + 1));
            let mut buf = vec![C64::new(0.0, 0.0); nt];
            let mut total = 0.0;
            let mut beyond = 0.0;
            for j in 0..n {
                for s in 0..nt {
                    buf[s] = series[s][[i, j]] / nt as f64;
                }
                fft.process(&mut buf);
                for k in -(k_max as i64)..=(k_max as i64) {
                    out.push(buf[k.rem_euclid(nt as i64) as usize]);
                }
                for (idx, c) in buf.iter().enumerate() {
                    let k = if idx <= nt / 2 { idx as i64 } else { idx as i64 - nt as i64 };
                    total += c.norm_sqr();
                    if k.unsigned_abs() as usize > k_max {
                        beyond += c.norm_sqr();
                    }
                }
            }
            (out, if total > 0.0 { beyond / total } else { 0.0 })
        })
        .collect();
    let width = 2 * k_max + 1;
    let mut values = Array3::zeros((n, n, width));
    let mut alias_weight = 0.0f64;
    for (i, (row, alias)) in rows.into_iter().enumerate() {
        alias_weight = alias_weight.max(alias);
        for j in 0..n {
            for k in 0..width {
                values[[i, j, k]] = row[j * width + k];
            }
        }
    }
    let largest = values.iter().map(|c: &C64| c.norm()).fold(0.0, f64::max);
    values.mapv_inplace(|c| if c.norm() < HARMONIC_FLOOR * largest { C64::new(0.0, 0.0) } else { c });
    if alias_weight > ALIAS_TOLERANCE {
        return Err(Error::Accuracy(format!(
            "harmonics beyond K = {k_max} carry {alias_weight:.2e} of the weight; increase N_t"
        )));
    }
    Ok(MatrixElementTensor {
        values,
        k_max,
        n_times: nt,
        quasienergies: sol.quasienergies.to_vec(),
        omega: sol.omega,
        alias_weight,
    })
}

/// Ohmic bath `J(x) = x e^{-x / omega_c}`, scaled so that `J(omega_ref) = coupling`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub temperature_k: f64,
    pub coupling: f64,
    pub omega_c: f64,
    pub omega_ref: f64,
}

impl BathSpec {
    pub fn new(temperature_k: f64, coupling: f64, omega_c: f64, omega_ref: f64) -> Result<Self> {
        if !(temperature_k >= 0.0) || !temperature_k.is_finite() {
            return Err(Error::InvalidParameter("temperature must be nonnegative".into()));
        }
        if !(omega_c > 0.0) || !(omega_ref > 0.0) || !(coupling >= 0.0) {
            return Err(Error::InvalidParameter("bath cutoff, reference and coupling must be positive".into()));
        }
        Ok(Self { temperature_k, coupling, omega_c, omega_ref })
    }

    /// Reference at the undriven 0-1 transition, cutoff at ten plasma frequencies.
    pub fn for_transmon(p: &TransmonParams, basis: &ChargeBasis, temperature_k: f64) -> Result<Self> {
        let (e, _) = static_spectrum(&p.with_drive(0.0), basis)?;
        Self::new(temperature_k, 1.0, DEFAULT_CUTOFF_RATIO * p.omega_p(), e[1] - e[0])
    }

    pub fn spectral_density(&self, x: f64) -> f64 {
        let x = x.abs();
        self.coupling * x / self.omega_ref * (-(x - self.omega_ref) / self.omega_c).exp()
    }

    pub fn occupation(&self, x: f64) -> f64 {
        let kt = thermal_energy(self.temperature_k);
        if kt == 0.0 {
            return 0.0;
        }
        1.0 / (x.abs() / kt).exp_m1()
    }

    /// `[Theta(x) + n_B(|x|)] J(|x|)`, continuous through `x = 0`.
    pub fn emission_weight(&self, x: f64) -> f64 {
        let kt = thermal_energy(self.temperature_k);
        let a = x.abs();
        let step = if x > 0.0 { 1.0 } else { 0.0 };
        let thermal = if kt == 0.0 {
            0.0
        } else if a < 1e-12 * kt {
            // x n_B(x) -> kT
            self.coupling * kt / self.omega_ref * (self.omega_ref / self.omega_c).exp()
        } else {
            self.occupation(a) * self.spectral_density(a)
        };
        step * self.spectral_density(a) + thermal
    }
}

/// `total[i, j]` is the rate from `j` to `i`; the diagonal is zero.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    pub total: Array2<f64>,
    pub even: Array2<f64>,
    pub odd: Array2<f64>,
}

impl RateMatrix {
    pub fn dim(&self) -> usize {
        self.total.nrows()
    }

    pub fn from_total(total: Array2<f64>) -> Result<Self> {
        if total.nrows() != total.ncols() {
            return Err(Error::InvalidInput("rate matrix must be square".into()));
        }
        if total.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("rates must be finite and nonnegative".into()));
        }
        let mut total = total;
        for i in 0..total.nrows() {
            total[[i, i]] = 0.0;
        }
        let zeros = Array2::zeros(total.dim());
        Ok(Self { even: total.clone(), odd: zeros, total })
    }

    /// Restriction to a subset of states.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let pick = |m: &Array2<f64>| Array2::from_shape_fn((indices.len(), indices.len()), |(a, b)| m[[indices[a], indices[b]]]);
        Self { total: pick(&self.total), even: pick(&self.even), odd: pick(&self.odd) }
    }
}

/// `Gamma_ij = sum_k |n_ijk|^2 [Theta(Delta_ijk) + n_B(|Delta_ijk|)] J(|Delta_ijk|)`.
pub fn rates(elements: &MatrixElementTensor, bath: &BathSpec) -> RateMatrix {
    let n = elements.dim();
    let kk = elements.k_max as i64;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut even = vec![0.0; n];
            let mut odd = vec![0.0; n];
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in -kk..=kk {
                    let w = elements.get(i, j, k).norm_sqr();
                    if w == 0.0 {
                        continue;
                    }
                    let g = w * bath.emission_weight(elements.delta(i, j, k));
                    if k % 2 == 0 {
                        even[j] += g;
                    } else {
                        odd[j] += g;
                    }
                }
            }
            (even, odd)
        })
        .collect();
    let mut even = Array2::zeros((n, n));
    let mut odd = Array2::zeros((n, n));
    for (i, (e, o)) in rows.into_iter().enumerate() {
        for j in 0..n {
            even[[i, j]] = e[j];
            odd[[i, j]] = o[j];
        }
    }
    let total = &even + &odd;
    RateMatrix { total, even, odd }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub populations: Vec<f64>,
    /// Closed communicating classes; more than one means the steady state is not unique.
    pub components: Vec<Vec<usize>>,
    pub per_component: Vec<Vec<f64>>,
    pub warning: Option<String>,
    /// `max_i |(G p)_i|` relative to the largest outflow rate.
    pub residual: f64,
    pub occupied_modes: f64,
}

/// Stationary populations of `dp_i/dt = sum_j Gamma_ij p_j - sum_j Gamma_ji p_i`.
///
/// Transient states get zero weight; if several closed classes exist the
/// returned populations are their equal-weight mixture.
pub fn steady_state(rates: &RateMatrix) -> Result<SteadyState> {
    let g = &rates.total;
    let n = g.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty rate matrix".into()));
    }
    if g.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("rates must be finite and nonnegative".into()));
    }
    let mut graph = DiGraph::<usize, ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && g[[i, j]] > 0.0 {
                graph.add_edge(nodes[j], nodes[i], ());
            }
        }
    }
    let mut class_of = vec![0usize; n];
    let sccs = tarjan_scc(&graph);
    for (c, comp) in sccs.iter().enumerate() {
        for &v in comp {
            class_of[graph[v]] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter().all(|&v| {
                let j = graph[v];
                (0..n).all(|i| i == j || g[[i, j]] == 0.0 || class_of[i] == *c)
            })
        })
        .map(|(_, comp)| {
            let mut states: Vec<usize> = comp.iter().map(|&v| graph[v]).collect();
            states.sort_unstable();
            states
        })
        .collect();
    closed.sort();
    let per_component: Vec<Vec<f64>> = closed.iter().map(|states| gth(g, states)).collect();
    let mut populations = vec![0.0; n];
    let share = 1.0 / closed.len() as f64;
    for (states, pops) in closed.iter().zip(per_component.iter()) {
        for (&s, &p) in states.iter().zip(pops.iter()) {
            populations[s] += share * p;
        }
    }
    let warning = (closed.len() > 1).then(|| {
        format!("rate graph has {} closed classes: {:?}; steady state is not unique", closed.len(), closed)
    });
    let residual = stationarity_residual(g, &populations);
    let occupied_modes = occupied_mode_count(&populations);
    Ok(SteadyState { populations, components: closed, per_component, warning, residual, occupied_modes })
}

/// Grassmann-Taksar-Heyman elimination on an irreducible class.
fn gth(g: &Array2<f64>, states: &[usize]) -> Vec<f64> {
    let m = states.len();
    if m == 1 {
        return vec![1.0];
    }
    // q[a][b]: rate from states[a] to states[b].
    let mut q = Array2::from_shape_fn((m, m), |(a, b)| if a == b { 0.0 } else { g[[states[b], states[a]]] });
    for k in (1..m).rev() {
        let s: f64 = (0..k).map(|b| q[[k, b]]).sum();
        for a in 0..k {
            let f = q[[a, k]] / s;
            if f == 0.0 {
                continue;
            }
            for b in 0..k {
                if a != b {
                    q[[a, b]] += f * q[[k, b]];
                }
            }
        }
    }
    let mut pi = vec![0.0; m];
    pi[0] = 1.0;
    for k in 1..m {
        let s: f64 = (0..k).map(|b| q[[k, b]]).sum();
        pi[k] = (0..k).map(|a| pi[a] * q[[a, k]]).sum::<f64>() / s;
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|p| p / total).collect()
}

pub fn stationarity_residual(g: &Array2<f64>, p: &[f64]) -> f64 {
    let n = p.len();
    let outflow: Vec<f64> = (0..n).map(|j| (0..n).filter(|&i| i != j).map(|i| g[[i, j]]).sum()).collect();
    let scale = outflow.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let gain: f64 = (0..n).filter(|&j| j != i).map(|j| g[[i, j]] * p[j]).sum();
            (gain - outflow[i] * p[i]).abs()
        })
        .fold(0.0, f64::max)
        / scale
}

/// `exp(-sum p log p)`.
pub fn occupied_mode_count(p: &[f64]) -> f64 {
    (-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Charge-noise amplitude in units of the electron charge.
    pub a_e: f64,
    /// `sqrt(|log omega_IR t_m|)`.
    pub log_factor: f64,
    /// Dielectric spectral function at the reference frequency.
    pub dielectric_strength: f64,
    pub omega_c: f64,
    pub omega_ref: f64,
}

impl NoiseSpec {
    pub fn for_transmon(p: &TransmonParams, basis: &ChargeBasis) -> Result<Self> {
        let bath = BathSpec::for_transmon(p, basis, 0.0)?;
        Ok(Self { a_e: 1e-4, log_factor: 4.0, dielectric_strength: 2.5e-6, omega_c: bath.omega_c, omega_ref: bath.omega_ref })
    }

    pub fn dielectric_spectrum(&self, x: f64) -> f64 {
        let bath = BathSpec { temperature_k: 0.0, coupling: self.dielectric_strength, omega_c: self.omega_c, omega_ref: self.omega_ref };
        bath.spectral_density(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dephasing {
    pub gamma_phi: f64,
    pub one_over_f: f64,
    pub dielectric: f64,
    pub low_confidence: bool,
}

/// Pure dephasing of the tracked `(ground, excited)` pair.
///
/// The `1/f` term uses `|d omega_01 / d n_g| = 4 E_C |2 g_0|` with
/// `g_k = n_11k - n_00k`.
pub fn dephasing_rate(
    elements: &MatrixElementTensor,
    ground: usize,
    excited: usize,
    e_c: f64,
    noise: &NoiseSpec,
    tracked: bool,
) -> Dephasing {
    let g = |k: i64| elements.get(excited, excited, k) - elements.get(ground, ground, k);
    let one_over_f = noise.a_e * 4.0 * e_c * (2.0 * g(0)).norm() * noise.log_factor;
    let kk = elements.k_max as i64;
    let dielectric: f64 = (-kk..=kk)
        .filter(|&k| k != 0)
        .map(|k| 2.0 * noise.dielectric_spectrum(k as f64 * elements.omega) * g(k).norm_sqr())
        .sum();
    Dephasing { gamma_phi: one_over_f + dielectric, one_over_f, dielectric, low_confidence: !tracked }
}
