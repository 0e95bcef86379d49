//! Driven transmon coupled to a readout resonator.
//!
//! The joint space is the transmon eigenbasis (lowest `dims.0` levels of the
//! charge-basis Hamiltonian) times Fock states `0..dims.1`, indexed `i * dims.1 + n`.

use crate::dissipation::{self, BathSpec, MatrixElementTensor, RateMatrix, SteadyState, HARMONIC_FLOOR};
use crate::error::{Error, Result};
use crate::floquet::{self, FloquetOptions, FloquetSolution, PeriodicHamiltonian, Scheme};
use crate::linalg::{eigh_complex, eigh_real, C64};
use crate::model::{charge_operator, static_spectrum, ChargeBasis, TransmonParams, GHZ, REFERENCE_EC};
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use ndarray_linalg::Eig;
use rayon::prelude::*;

pub const PAPER_DIMS: (usize, usize) = (35, 20);
pub const CI_DIMS: (usize, usize) = (20, 12);
pub const MIN_DIMS: (usize, usize) = (20, 10);
pub const MAX_JOINT_DIM: usize = 1200;
pub const NR_CUTOFF: f64 = 15.0;
pub const VACUUM_PURITY: f64 = 0.85;
pub const VACUUM_MAX_NR: f64 = 0.73;
/// Denominators closer than this to zero (10 MHz) are flagged as resonant.
pub const RESONANCE_FLAG: f64 = GHZ * 0.010;
pub const FOLDED_MAX_NT: f64 = 20.0;
pub const DEFAULT_STEPS: usize = 512;
pub const DEFAULT_TIME_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedParams {
    pub transmon: TransmonParams,
    pub omega_a: f64,
    pub g: f64,
    pub kappa: f64,
    /// Transmon levels and Fock states kept.
    pub dims: (usize, usize),
    /// Charge cutoff of the basis the transmon levels are taken from.
    pub charge_cutoff: usize,
}

impl CqedParams {
    pub fn new(transmon: TransmonParams, omega_a: f64, g: f64, kappa: f64, dims: (usize, usize)) -> Result<Self> {
        let p = Self { transmon, omega_a, g, kappa, dims, charge_cutoff: crate::model::DEFAULT_CUTOFF };
        p.validate()?;
        Ok(p)
    }

    /// `hbar_eff^-1 = 3`, drive at 7.5 GHz, resonator at 8 GHz, `g = 250 MHz`, `kappa = 10 MHz`.
    pub fn reference(eps_tilde: f64, n_g: f64, dims: (usize, usize)) -> Result<Self> {
        let t = TransmonParams::from_rescaled(3.0, eps_tilde, 1.34, n_g, REFERENCE_EC)?;
        Self::new(t, GHZ * 8.0, GHZ * 0.25, GHZ * 0.010, dims)
    }

    pub fn validate(&self) -> Result<()> {
        self.transmon.validate()?;
        if self.dims.0 < MIN_DIMS.0 || self.dims.1 < MIN_DIMS.1 {
            return Err(Error::InvalidParameter(format!(
                "dims {:?} below the minimum {MIN_DIMS:?}",
                self.dims
            )));
        }
        if self.dims.0 > 2 * self.charge_cutoff + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} transmon levels exceed the charge basis dimension {}",
                self.dims.0,
                2 * self.charge_cutoff + 1
            )));
        }
        if !(self.omega_a > 0.0) || !(self.g > 0.0) || !(self.kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need omega_a, g > 0 and kappa >= 0 (got {}, {}, {})",
                self.omega_a, self.g, self.kappa
            )));
        }
        Ok(())
    }

    pub fn joint_dim(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn charge_basis(&self) -> ChargeBasis {
        ChargeBasis::new(self.charge_cutoff)
    }

    pub fn with_eps_tilde(&self, eps_tilde: f64) -> Self {
        Self { transmon: self.transmon.with_eps_tilde(eps_tilde), ..*self }
    }

    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..*self }
    }
}

/// Transmon operators in its truncated eigenbasis.
#[derive(Debug, Clone)]
pub struct TransmonLevels {
    pub energies: Array1<f64>,
    /// Charge operator between kept levels.
    pub charge: Array2<f64>,
    /// Kept eigenvectors in the charge basis, as columns.
    pub vectors: Array2<f64>,
}

impl TransmonLevels {
    pub fn new(p: &TransmonParams, basis: &ChargeBasis, levels: usize) -> Result<Self> {
        let (e, v) = static_spectrum(p, basis)?;
        let vectors = v.slice(s![.., ..levels]).to_owned();
        let charge = vectors.t().dot(&charge_operator(basis)).dot(&vectors);
        Ok(Self { energies: e.slice(s![..levels]).to_owned(), charge, vectors })
    }
}

#[derive(Debug, Clone)]
pub struct JointModel {
    pub params: CqedParams,
    pub levels: TransmonLevels,
}

impl JointModel {
    pub fn new(params: &CqedParams) -> Result<Self> {
        params.validate()?;
        if params.joint_dim() > MAX_JOINT_DIM {
            return Err(Error::Resource(format!(
                "joint dimension {} exceeds {MAX_JOINT_DIM}; dense propagators would need {:.1} GB each",
                params.joint_dim(),
                (params.joint_dim() as f64).powi(2) * 16.0 / 1e9
            )));
        }
        let levels = TransmonLevels::new(&params.transmon, &params.charge_basis(), params.dims.0)?;
        Ok(Self { params: *params, levels })
    }

    pub fn dim(&self) -> usize {
        self.params.joint_dim()
    }

    fn index(&self, i: usize, n: usize) -> usize {
        i * self.params.dims.1 + n
    }

    /// `H_t + omega_a a^dag a - i g n (a - a^dag)`.
    pub fn static_hamiltonian(&self) -> Array2<C64> {
        let (dt, nr) = self.params.dims;
        let d = self.dim();
        let mut h = Array2::<C64>::zeros((d, d));
        for i in 0..dt {
            for n in 0..nr {
                let r = self.index(i, n);
                h[[r, r]] = C64::new(self.levels.energies[i] + self.params.omega_a * n as f64, 0.0);
            }
        }
        for i in 0..dt {
            for j in 0..dt {
                let q = self.levels.charge[[i, j]];
                if q == 0.0 {
                    continue;
                }
                for n in 1..nr {
                    // <i, n-1| -i g q a |j, n> = -i g q sqrt(n)
                    let v = C64::new(0.0, -self.params.g * q * (n as f64).sqrt());
                    h[[self.index(i, n - 1), self.index(j, n)]] += v;
                    h[[self.index(j, n), self.index(i, n - 1)]] += v.conj();
                }
            }
        }
        h
    }

    pub fn drive_operator(&self) -> Array2<C64> {
        let (dt, nr) = self.params.dims;
        let d = self.dim();
        let mut out = Array2::<C64>::zeros((d, d));
        for i in 0..dt {
            for j in 0..dt {
                for n in 0..nr {
                    out[[self.index(i, n), self.index(j, n)]] = C64::new(self.levels.charge[[i, j]], 0.0);
                }
            }
        }
        out
    }

    pub fn hamiltonian(&self) -> Result<PeriodicHamiltonian> {
        let (dt, nr) = self.params.dims;
        let (w, v) = eigh_real(&self.levels.charge)?;
        let d = self.dim();
        let mut values = Array1::<f64>::zeros(d);
        let mut vectors = Array2::<C64>::zeros((d, d));
        for a in 0..dt {
            for n in 0..nr {
                values[self.index(a, n)] = w[a];
                for i in 0..dt {
                    vectors[[self.index(i, n), self.index(a, n)]] = C64::new(v[[i, a]], 0.0);
                }
            }
        }
        let t = &self.params.transmon;
        PeriodicHamiltonian::with_drive_eigensystem(
            self.static_hamiltonian(),
            self.drive_operator(),
            values,
            vectors,
            t.eps_d,
            t.omega_d,
        )
    }

    /// `X |psi>` with `X = -i (a - a^dag) / sqrt(2)` acting on every column.
    fn apply_resonator_charge(&self, psi: &Array2<C64>) -> Array2<C64> {
        let (dt, nr) = self.params.dims;
        let mut out = Array2::<C64>::zeros(psi.dim());
        let c = C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
        for i in 0..dt {
            for n in 0..nr {
                let r = self.index(i, n);
                let mut row = out.row_mut(r);
                if n + 1 < nr {
                    let up = ((n + 1) as f64).sqrt();
                    row.scaled_add(c * up, &psi.row(self.index(i, n + 1)));
                }
                if n > 0 {
                    let down = (n as f64).sqrt();
                    row.scaled_add(-c * down, &psi.row(self.index(i, n - 1)));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedOptions {
    pub floquet: FloquetOptions,
    /// Harmonics kept for the resonator-charge elements.
    pub k_max: usize,
}

impl Default for CqedOptions {
    fn default() -> Self {
        Self {
            floquet: FloquetOptions {
                n_steps: DEFAULT_STEPS,
                n_times: DEFAULT_TIME_SAMPLES,
                scheme: Scheme::Split,
                keep_samples: false,
                convergence_tol: None,
            },
            k_max: DEFAULT_TIME_SAMPLES / 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CqedSolution {
    pub params: CqedParams,
    pub floquet: FloquetSolution,
    pub nt_avg: Vec<f64>,
    pub nr_avg: Vec<f64>,
    pub purity: Vec<f64>,
    pub comm_error: Vec<f64>,
    /// Resonator-charge elements `X_ijk` between joint modes.
    pub resonator_elements: MatrixElementTensor,
    /// Fraction of each mode's resonator-charge weight beyond `k_max`, worst
    /// over modes below the photon cutoff.
    pub out_of_band: f64,
    pub model: JointModel,
}

impl CqedSolution {
    pub fn n_modes(&self) -> usize {
        self.nt_avg.len()
    }

    /// Mode with the largest weight on the bare state `|0, 0>`.
    pub fn dressed_vacuum(&self) -> usize {
        self.floquet.modes_at_zero().row(0).iter().map(|x| x.norm()).enumerate().fold(
            (0, -1.0),
            |best, (k, m)| if m > best.1 { (k, m) } else { best },
        ).0
    }

    /// Normalized transmon state (charge basis) in the zero-photon block of a mode at `t = 0`.
    pub fn vacuum_component(&self, mode: usize) -> Array1<C64> {
        let (dt, nr) = self.params.dims;
        let col = self.floquet.modes_at_zero().column(mode);
        let block: Array1<C64> = (0..dt).map(|i| col[i * nr]).collect();
        let v = self.model.levels.vectors.mapv(|x| C64::new(x, 0.0)).dot(&block);
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            v / C64::new(norm, 0.0)
        } else {
            v
        }
    }
}

/// Floquet decomposition of the joint model with per-mode excitation numbers,
/// purity, commutator error and resonator-charge harmonics.
pub fn cqed_floquet(params: &CqedParams, opts: &CqedOptions) -> Result<CqedSolution> {
    let model = JointModel::new(params)?;
    let omega_d = params.transmon.omega_d;
    if (params.omega_a - omega_d).abs() <= 10.0 * params.kappa {
        return Err(Error::InvalidParameter(format!(
            "drive at {omega_d} is within 10 kappa of the resonator at {}",
            params.omega_a
        )));
    }
    let ham = model.hamiltonian()?;
    let (dt, nr) = params.dims;
    let d = model.dim();
    let nt = opts.floquet.n_times;
    let kk = opts.k_max;
    if 2 * kk >= nt {
        return Err(Error::Configuration(format!("k_max = {kk} needs more than {nt} time samples")));
    }
    let width = 2 * kk + 1;
    let mut harmonics: Vec<Array2<C64>> = (0..width).map(|_| Array2::zeros((d, d))).collect();
    let mut power = Array2::<f64>::zeros((d, d));
    let mut nt_acc = vec![0.0; d];
    let mut nr_acc = vec![0.0; d];
    let mut purity_acc = vec![0.0; d];
    let mut top_acc = vec![0.0; d];
    let opts_f = FloquetOptions { keep_samples: false, ..opts.floquet };
    let sol = floquet::solve_observed(&ham, &opts_f, &mut |_, t, phi| {
        let per_mode: Vec<(f64, f64, f64, f64)> = (0..d)
            .into_par_iter()
            .map(|k| {
                let col = phi.column(k);
                let (mut a, mut b, mut top) = (0.0, 0.0, 0.0);
                for i in 0..dt {
                    for n in 0..nr {
                        let p = col[i * nr + n].norm_sqr();
                        a += i as f64 * p;
                        b += n as f64 * p;
                        if n + 1 == nr {
                            top += p;
                        }
                    }
                }
                // purity = ||A^dag A||_F^2 with A[i, n] the mode amplitudes
                let mut pur = 0.0;
                for n in 0..nr {
                    for m in 0..nr {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..dt {
                            acc += col[i * nr + n].conj() * col[i * nr + m];
                        }
                        pur += acc.norm_sqr();
                    }
                }
                (a, b, pur, top)
            })
            .collect();
        for (k, (a, b, pur, top)) in per_mode.into_iter().enumerate() {
            nt_acc[k] += a / nt as f64;
            nr_acc[k] += b / nt as f64;
            purity_acc[k] += pur / nt as f64;
            top_acc[k] += top / nt as f64;
        }
        let xs = phi.t().mapv(|x| x.conj()).dot(&model.apply_resonator_charge(phi));
        let omega_t = omega_d * t;
        harmonics.par_iter_mut().enumerate().for_each(|(h, slab)| {
            let k = h as f64 - kk as f64;
            let w = C64::from_polar(1.0 / nt as f64, k * omega_t);
            slab.zip_mut_with(&xs, |acc, &x| *acc += x * w);
        });
        power.zip_mut_with(&xs, |acc, x| *acc += x.norm_sqr() / nt as f64);
        Ok(())
    })?;

    let mut values = Array3::<C64>::zeros((d, d, width));
    for (h, slab) in harmonics.iter().enumerate() {
        values.slice_mut(s![.., .., h]).assign(slab);
    }
    drop(harmonics);
    let largest = values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    values.mapv_inplace(|c| if c.norm() < HARMONIC_FLOOR * largest { C64::new(0.0, 0.0) } else { c });
    let mut out_of_band = 0.0f64;
    for i in 0..d {
        if nr_acc[i] >= NR_CUTOFF {
            continue;
        }
        let total: f64 = power.row(i).sum();
        let kept: f64 = values.slice(s![i, .., ..]).iter().map(|c| c.norm_sqr()).sum();
        if total > 0.0 {
            out_of_band = out_of_band.max(((total - kept) / total).max(0.0));
        }
    }
    let elements = MatrixElementTensor {
        values,
        k_max: kk,
        n_times: nt,
        quasienergies: sol.quasienergies.to_vec(),
        omega: omega_d,
        alias_weight: out_of_band,
    };
    let comm_error = top_acc.iter().map(|&p| nr as f64 * p).collect();
    Ok(CqedSolution {
        params: *params,
        floquet: sol,
        nt_avg: nt_acc,
        nr_avg: nr_acc,
        purity: purity_acc,
        comm_error,
        resonator_elements: elements,
        out_of_band,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqedGridPoint {
    pub mode: usize,
    pub nt_avg: f64,
    pub nr_avg: f64,
    pub purity: f64,
    pub steady_pop: f64,
    pub comm_error: f64,
}

pub fn grid(sol: &CqedSolution, steady: Option<&ResonatorDynamics>) -> Vec<CqedGridPoint> {
    (0..sol.n_modes())
        .map(|k| CqedGridPoint {
            mode: k,
            nt_avg: sol.nt_avg[k],
            nr_avg: sol.nr_avg[k],
            purity: sol.purity[k],
            steady_pop: steady.map(|s| s.steady.populations[k]).unwrap_or(0.0),
            comm_error: sol.comm_error[k],
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResonatorDynamics {
    pub rates: RateMatrix,
    pub steady: SteadyState,
    /// Modes below the photon cutoff that take part in the dynamics.
    pub active: Vec<usize>,
    pub occupied_modes: f64,
    pub steady_nt: f64,
    pub steady_nr: f64,
    /// Steady-state average of the commutator error.
    pub steady_comm_error: f64,
}

/// Zero-temperature bath on the resonator charge with single-photon loss rate `kappa`.
pub fn resonator_bath(params: &CqedParams) -> Result<BathSpec> {
    BathSpec::new(0.0, 2.0 * params.kappa, dissipation::DEFAULT_CUTOFF_RATIO * params.omega_a, params.omega_a)
}

pub fn resonator_rates_and_steady_state(sol: &CqedSolution, nr_cutoff: f64) -> Result<ResonatorDynamics> {
    if !(sol.params.kappa > 0.0) {
        return Err(Error::InvalidParameter("steady state needs kappa > 0".into()));
    }
    let bath = resonator_bath(&sol.params)?;
    let full = dissipation::rates(&sol.resonator_elements, &bath);
    let active: Vec<usize> = (0..sol.n_modes()).filter(|&k| sol.nr_avg[k] < nr_cutoff).collect();
    if active.is_empty() {
        return Err(Error::NoSolution(format!("no mode has <<N_r>> below {nr_cutoff}")));
    }
    let sub = full.restrict(&active);
    let st = dissipation::steady_state(&sub)?;
    let n = sol.n_modes();
    let mut pops = vec![0.0; n];
    for (a, &k) in active.iter().enumerate() {
        pops[k] = st.populations[a];
    }
    let mut total = Array2::<f64>::zeros((n, n));
    let mut even = Array2::<f64>::zeros((n, n));
    let mut odd = Array2::<f64>::zeros((n, n));
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            total[[i, j]] = sub.total[[a, b]];
            even[[i, j]] = sub.even[[a, b]];
            odd[[i, j]] = sub.odd[[a, b]];
        }
    }
    let lift = |c: &Vec<usize>| c.iter().map(|&a| active[a]).collect::<Vec<_>>();
    let steady = SteadyState {
        components: st.components.iter().map(lift).collect(),
        per_component: st.per_component.clone(),
        populations: pops.clone(),
        warning: st.warning.clone(),
        residual: st.residual,
        occupied_modes: st.occupied_modes,
    };
    let avg = |v: &[f64]| pops.iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
    Ok(ResonatorDynamics {
        rates: RateMatrix { total, even, odd },
        occupied_modes: dissipation::occupied_mode_count(&pops),
        steady_nt: avg(&sol.nt_avg),
        steady_nr: avg(&sol.nr_avg),
        steady_comm_error: avg(&sol.comm_error),
        steady,
        active,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullRecord {
    pub mode: usize,
    pub partner: usize,
    pub harmonic: i64,
    pub nt_avg: f64,
    pub purity: f64,
    /// Transition frequency of the strongest upward resonator-charge element.
    pub frequency: f64,
    /// `frequency - omega_a`.
    pub pull: f64,
    pub element_sq: f64,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct PullRecords {
    pub records: Vec<PullRecord>,
    /// Set when no mode passes the vacuum filters.
    pub empty: bool,
}

pub fn is_vacuum_like(sol: &CqedSolution, mode: usize) -> bool {
    sol.purity[mode] > VACUUM_PURITY && sol.nr_avg[mode] <= VACUUM_MAX_NR
}

/// Pulled resonator frequency seen from each vacuum-like mode.
pub fn cavity_pull_spectroscopy(sol: &CqedSolution) -> Result<PullRecords> {
    let el = &sol.resonator_elements;
    let bath = resonator_bath(&sol.params)?;
    let kk = el.k_max as i64;
    let mut records = Vec::new();
    for i in (0..sol.n_modes()).filter(|&i| is_vacuum_like(sol, i)) {
        let mut best: Option<(usize, i64, f64)> = None;
        for j in 0..sol.n_modes() {
            if j == i {
                continue;
            }
            for k in -kk..=kk {
                let w = el.get(i, j, k).norm_sqr();
                if el.delta(i, j, k) > 0.0 && best.map_or(true, |b| w > b.2) {
                    best = Some((j, k, w));
                }
            }
        }
        if let Some((j, k, w)) = best {
            let f = el.delta(i, j, k);
            records.push(PullRecord {
                mode: i,
                partner: j,
                harmonic: k,
                nt_avg: sol.nt_avg[i],
                purity: sol.purity[i],
                frequency: f,
                pull: f - sol.params.omega_a,
                element_sq: w,
                rate: w * bath.spectral_density(f),
            });
        }
    }
    records.sort_by(|a, b| a.nt_avg.total_cmp(&b.nt_avg));
    Ok(PullRecords { empty: records.is_empty(), records })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativePull {
    pub chi: f64,
    /// A contribution had `|omega_a -+ Delta| < RESONANCE_FLAG`.
    pub resonant: bool,
}

/// Second-order pull of the resonator by each transmon Floquet state.
///
/// With `Delta_ijk` the energy released in `j -> i`,
/// `chi_i = sum_jk g^2 |n_ijk|^2 (1/(omega_a - Delta_ijk) - 1/(omega_a + Delta_ijk))`.
pub fn perturbative_pull(elements: &MatrixElementTensor, g: f64, omega_a: f64) -> Vec<PerturbativePull> {
    let kk = elements.k_max as i64;
    (0..elements.dim())
        .map(|i| {
            let mut chi = 0.0;
            let mut resonant = false;
            for j in 0..elements.dim() {
                for k in -kk..=kk {
                    let w = elements.get(i, j, k).norm_sqr();
                    if w == 0.0 {
                        continue;
                    }
                    let delta = elements.delta(i, j, k);
                    let (minus, plus) = (omega_a - delta, omega_a + delta);
                    if minus.abs() < RESONANCE_FLAG || plus.abs() < RESONANCE_FLAG {
                        resonant = true;
                    }
                    chi += g * g * w * (1.0 / minus - 1.0 / plus);
                }
            }
            PerturbativePull { chi, resonant }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedLevel {
    pub energy: f64,
    /// `Re E` folded into `[-omega_a / 2, omega_a / 2)`.
    pub folded: f64,
    /// `-2 Im E`.
    pub linewidth: f64,
    pub nt: f64,
    pub nr: f64,
}

/// Undriven joint eigenstates with energies folded by the resonator frequency.
/// With `with_loss`, the generator includes `-i kappa / 2 a^dag a`.
pub fn undriven_spectrum_folded(params: &CqedParams, with_loss: bool) -> Result<Vec<FoldedLevel>> {
    let model = JointModel::new(&params.with_eps_tilde(0.0))?;
    let mut h = model.static_hamiltonian();
    let (dt, nr) = params.dims;
    let (values, vectors): (Vec<C64>, Array2<C64>) = if with_loss && params.kappa > 0.0 {
        for i in 0..dt {
            for n in 0..nr {
                let r = model.index(i, n);
                h[[r, r]] -= C64::new(0.0, 0.5 * params.kappa * n as f64);
            }
        }
        let (e, v) = h.eig().map_err(|e| Error::Linalg(e.to_string()))?;
        (e.to_vec(), v)
    } else {
        let (e, v) = eigh_complex(&h)?;
        (e.iter().map(|&x| C64::new(x, 0.0)).collect(), v)
    };
    let wa = params.omega_a;
    let mut out: Vec<FoldedLevel> = values
        .iter()
        .zip(vectors.axis_iter(Axis(1)))
        .map(|(e, col)| {
            let norm: f64 = col.iter().map(|x| x.norm_sqr()).sum();
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..dt {
                for n in 0..nr {
                    let p = col[model.index(i, n)].norm_sqr() / norm;
                    a += i as f64 * p;
                    b += n as f64 * p;
                }
            }
            let folded = e.re - wa * (e.re / wa + 0.5).floor();
            FoldedLevel { energy: e.re, folded, linewidth: -2.0 * e.im, nt: a, nr: b }
        })
        .filter(|l| l.nt < FOLDED_MAX_NT)
        .collect();
    out.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleStatistics {
    pub m: usize,
    /// `sqrt((1/M) sum_{j<M} |n_ij|^2)`.
    pub per_state: Vec<f64>,
    /// Same with `j != i` and `1/(M-1)`.
    pub per_state_offdiag: Vec<f64>,
    pub mean: f64,
    pub mean_offdiag: f64,
    /// `sqrt(M / 12)`.
    pub rmt_prediction: f64,
}

/// RMS dipole moments over the first `m` states of a charge matrix given in a
/// state basis ordered as desired.
pub fn dipole_statistics(n_matrix: ArrayView2<C64>, m: usize) -> Result<DipoleStatistics> {
    if m < 2 || m > n_matrix.nrows() || n_matrix.nrows() != n_matrix.ncols() {
        return Err(Error::InvalidInput(format!(
            "need 2 <= M <= {} on a square matrix",
            n_matrix.nrows()
        )));
    }
    let mut per_state = Vec::with_capacity(m);
    let mut offdiag = Vec::with_capacity(m);
    for i in 0..m {
        let all: f64 = (0..m).map(|j| n_matrix[[i, j]].norm_sqr()).sum();
        let diag = n_matrix[[i, i]].norm_sqr();
        per_state.push((all / m as f64).sqrt());
        offdiag.push(((all - diag) / (m - 1) as f64).sqrt());
    }
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / m as f64).sqrt();
    Ok(DipoleStatistics {
        m,
        mean: rms(&per_state),
        mean_offdiag: rms(&offdiag),
        per_state,
        per_state_offdiag: offdiag,
        rmt_prediction: rmt_mean_dipole(m),
    })
}

/// Charge operator between Floquet modes at `t = 0`, ordered by mean energy.
pub fn floquet_charge_matrix(sol: &FloquetSolution, basis: &ChargeBasis) -> Array2<C64> {
    let order = sol.order_by_mean_energy();
    let modes = sol.modes_at_zero().select(Axis(1), &order);
    let mut weighted = modes.clone();
    for (mut row, q) in weighted.rows_mut().into_iter().zip(basis.labels()) {
        row.mapv_inplace(|x| x * q as f64);
    }
    modes.t().mapv(|x| x.conj()).dot(&weighted)
}

pub fn rmt_mean_dipole(n: usize) -> f64 {
    (n as f64 / 12.0).sqrt()
}

/// `||P n P||_F^2` for the projector on charges `|m| <= half`, summed directly.
pub fn projector_norm_sq(half: u64) -> u64 {
    (1..=half).map(|m| 2 * m * m).sum()
}

/// `(N/2)(N/2 + 1)(N + 1) / 3` with `N = 2 half`.
pub fn projector_norm_sq_closed(half: u64) -> u64 {
    half * (half + 1) * (2 * half + 1) / 3
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPhotonNumber {
    /// `2 g sqrt(N/12)` at zero photons.
    pub g_eff: f64,
    pub delta_eff: f64,
    /// `3 omega_d^2 / (g^2 N^3)`.
    pub n_crit: f64,
    /// Photon number `n` solving `g_eff(n) = delta_eff`, i.e. `n_crit - 1`.
    pub n_crit_balance: f64,
}

pub fn critical_photon_number(g: f64, omega_d: f64, n_ch: usize) -> Result<CriticalPhotonNumber> {
    if n_ch == 0 || !(g > 0.0) || !(omega_d > 0.0) {
        return Err(Error::InvalidParameter("need N_ch >= 1 and positive g, omega_d".into()));
    }
    let n = n_ch as f64;
    let n_crit = 3.0 * omega_d * omega_d / (g * g * n.powi(3));
    Ok(CriticalPhotonNumber {
        g_eff: 2.0 * g * (n / 12.0).sqrt(),
        delta_eff: omega_d / n,
        n_crit,
        n_crit_balance: n_crit - 1.0,
    })
}

/// Time-averaged bare-level index `<<N_t>>` of each single-transmon Floquet mode
/// (in solver order), with `levels` bare eigenstates counted.
pub fn transmon_excitations(sol: &FloquetSolution, p: &TransmonParams, basis: &ChargeBasis, levels: usize) -> Result<Vec<f64>> {
    if !sol.has_all_samples() {
        return Err(Error::InvalidInput("need all mode samples".into()));
    }
    let lv = TransmonLevels::new(p, basis, levels)?;
    let proj = lv.vectors.t().mapv(|x| C64::new(x, 0.0));
    let mut acc = vec![0.0; sol.n_modes()];
    for modes in &sol.modes_t {
        let c = proj.dot(modes);
        for (k, col) in c.axis_iter(Axis(1)).enumerate() {
            acc[k] += col.iter().enumerate().map(|(i, x)| i as f64 * x.norm_sqr()).sum::<f64>() / sol.n_times as f64;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldMatch {
    pub mode: usize,
    pub nt_joint: f64,
    pub nt_mean_field: f64,
    pub transmon_mode: usize,
    pub overlap: f64,
}

/// Pairs each vacuum-like joint mode with the single-transmon Floquet mode of
/// the same drive that best overlaps its zero-photon block.
pub fn mean_field_cross_check(sol: &CqedSolution, transmon: &FloquetSolution, nt_transmon: &[f64]) -> Vec<MeanFieldMatch> {
    (0..sol.n_modes())
        .filter(|&i| is_vacuum_like(sol, i))
        .map(|i| {
            let (k, ov) = transmon.best_match(&sol.vacuum_component(i));
            MeanFieldMatch { mode: i, nt_joint: sol.nt_avg[i], nt_mean_field: nt_transmon[k], transmon_mode: k, overlap: ov }
        })
        .collect()
}
