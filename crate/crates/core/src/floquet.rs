//! One-period propagators, quasienergies, periodic modes and mean energies.
//!
//! A [`PeriodicHamiltonian`] is `H(t) = H_s + A cos(omega t) D` with Hermitian
//! `H_s` and `D`. Propagation runs in the eigenbasis of `D`.

use crate::error::{Error, Result};
use crate::linalg::{
    dagger, eigh_complex, eigh_tridiagonal_into, exp_from_complex_eig, gram_deviation, identity,
    max_hermiticity_defect, schur, to_complex, C64,
};
use crate::model::{static_tridiagonal, ChargeBasis, TransmonParams};
use ndarray::{Array1, Array2, Axis};
use std::f64::consts::PI;

pub const DEFAULT_STEPS: usize = 1024;
pub const MIN_STEPS: usize = 256;
pub const DEFAULT_TIME_SAMPLES: usize = 128;
pub const DEFAULT_SWEEP_STEP: f64 = 0.005;
pub const TRACKING_THRESHOLD: f64 = 0.5;
/// Eigenphase separation below which modes are reported as degenerate.
pub const DEGENERACY_FLAG: f64 = 1e-12;
/// Eigenphase separation below which Schur vectors are re-diagonalized.
pub const CLUSTER_TOL: f64 = 1e-9;
/// Bytes of stored propagator samples above which a second pass is used.
pub const SAMPLE_MEMORY_BUDGET: usize = 256 << 20;

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact exponential of `H` at each step midpoint.
    Midpoint,
    /// Two exponentials per step at Gauss-point drive values (fourth order).
    Magnus4,
    /// Symmetric splitting of static and drive parts.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetOptions {
    pub n_steps: usize,
    pub n_times: usize,
    pub scheme: Scheme,
    /// Keep mode samples at every time; otherwise only `t = 0` is kept.
    pub keep_samples: bool,
    /// Compare against a run with twice the steps and fail above this
    /// quasienergy change, in units of `omega`.
    pub convergence_tol: Option<f64>,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            n_steps: DEFAULT_STEPS,
            n_times: DEFAULT_TIME_SAMPLES,
            scheme: Scheme::Magnus4,
            keep_samples: true,
            convergence_tol: None,
        }
    }
}

impl FloquetOptions {
    fn validate(&self) -> Result<()> {
        if self.n_steps < MIN_STEPS {
            return Err(Error::Configuration(format!(
                "n_steps = {} below the minimum {MIN_STEPS}",
                self.n_steps
            )));
        }
        if self.n_times == 0 || self.n_steps % self.n_times != 0 {
            return Err(Error::Configuration(format!(
                "n_times = {} must divide n_steps = {}",
                self.n_times, self.n_steps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicHamiltonian {
    h_static: Array2<C64>,
    drive: Array2<C64>,
    drive_values: Array1<f64>,
    drive_vectors: Option<Array2<C64>>,
    h_work: Array2<C64>,
    amplitude: f64,
    omega: f64,
    tridiagonal: Option<(Vec<f64>, Vec<f64>)>,
    params: Option<TransmonParams>,
}

impl PeriodicHamiltonian {
    pub fn new(h_static: Array2<C64>, drive: Array2<C64>, amplitude: f64, omega: f64) -> Result<Self> {
        let is_diagonal = drive.indexed_iter().all(|((r, c), x)| r == c || *x == C64::new(0.0, 0.0));
        if is_diagonal {
            let values = drive.diag().mapv(|x| x.re);
            Self::assemble(h_static, drive, values, None, amplitude, omega)
        } else {
            let (values, vectors) = eigh_complex(&drive)?;
            Self::assemble(h_static, drive, values, Some(vectors), amplitude, omega)
        }
    }

    /// Same as [`PeriodicHamiltonian::new`] with a known eigensystem of the drive operator.
    pub fn with_drive_eigensystem(
        h_static: Array2<C64>,
        drive: Array2<C64>,
        values: Array1<f64>,
        vectors: Array2<C64>,
        amplitude: f64,
        omega: f64,
    ) -> Result<Self> {
        Self::assemble(h_static, drive, values, Some(vectors), amplitude, omega)
    }

    fn assemble(
        h_static: Array2<C64>,
        drive: Array2<C64>,
        values: Array1<f64>,
        vectors: Option<Array2<C64>>,
        amplitude: f64,
        omega: f64,
    ) -> Result<Self> {
        let n = h_static.nrows();
        if h_static.dim() != (n, n) || drive.dim() != (n, n) || values.len() != n {
            return Err(Error::InvalidInput("operator dimensions disagree".into()));
        }
        if !(omega > 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "drive frequency {omega} must be positive and amplitude {amplitude} finite"
            )));
        }
        let scale = h_static.iter().map(|x| x.norm()).fold(1.0, f64::max);
        if max_hermiticity_defect(&h_static) > 1e-12 * scale
            || max_hermiticity_defect(&drive) > 1e-12 * scale
        {
            return Err(Error::InvalidInput("operators must be Hermitian".into()));
        }
        let h_work = match &vectors {
            Some(v) => dagger(v).dot(&h_static).dot(v),
            None => h_static.clone(),
        };
        Ok(Self {
            h_static,
            drive,
            drive_values: values,
            drive_vectors: vectors,
            h_work,
            amplitude,
            omega,
            tridiagonal: None,
            params: None,
        })
    }

    /// Driven transmon in the charge basis.
    pub fn transmon(p: &TransmonParams, basis: &ChargeBasis) -> Result<Self> {
        p.validate()?;
        let (diag, off) = static_tridiagonal(p, basis);
        let n = basis.dim();
        let mut h = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = C64::new(diag[i], 0.0);
        }
        for i in 0..n - 1 {
            h[[i, i + 1]] = C64::new(off[i], 0.0);
            h[[i + 1, i]] = C64::new(off[i], 0.0);
        }
        let charge = to_complex(&crate::model::charge_operator(basis));
        let mut ham = Self::new(h, charge, p.eps_d, p.omega_d)?;
        ham.tridiagonal = Some((diag, off));
        ham.params = Some(*p);
        Ok(ham)
    }

    pub fn dim(&self) -> usize {
        self.h_static.nrows()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn params(&self) -> Option<&TransmonParams> {
        self.params.as_ref()
    }

    pub fn static_part(&self) -> &Array2<C64> {
        &self.h_static
    }

    pub fn drive_operator(&self) -> &Array2<C64> {
        &self.drive
    }

    pub fn drive_value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).cos()
    }

    pub fn at(&self, t: f64) -> Array2<C64> {
        &self.h_static + &self.drive.mapv(|x| x * self.drive_value(t))
    }

    fn drive_integral(&self, t0: f64, t1: f64) -> f64 {
        self.amplitude / self.omega * ((self.omega * t1).sin() - (self.omega * t0).sin())
    }

    fn to_original(&self, a: &Array2<C64>) -> Array2<C64> {
        match &self.drive_vectors {
            Some(v) => v.dot(a),
            None => a.clone(),
        }
    }

    /// Propagates over one period in the working basis, handing `U(t_s)` to
    /// `on_sample` at each of `n_times` uniform sample times.
    fn propagate(
        &self,
        opts: &FloquetOptions,
        n_times: usize,
        on_sample: &mut dyn FnMut(usize, &Array2<C64>) -> Result<()>,
    ) -> Result<Array2<C64>> {
        let n = self.dim();
        let t_period = self.period();
        if self.amplitude == 0.0 {
            let (e, v) = eigh_complex(&self.h_work)?;
            for s in 0..n_times {
                let t = s as f64 * t_period / n_times as f64;
                on_sample(s, &exp_from_complex_eig(&e, &v, t))?;
            }
            return Ok(exp_from_complex_eig(&e, &v, t_period));
        }
        let n_steps = opts.n_steps;
        let every = if n_times == 0 { usize::MAX } else { n_steps / n_times };
        let dt = t_period / n_steps as f64;
        match opts.scheme {
            Scheme::Midpoint | Scheme::Magnus4 => {
                let mut u = identity(n);
                let mut values = vec![0.0; n];
                let mut vectors = Array2::<f64>::zeros((n, n));
                let mut work = Vec::new();
                let mut substeps: Vec<(f64, f64)> = Vec::with_capacity(2);
                for j in 0..n_steps {
                    if j % every == 0 {
                        on_sample(j / every, &u)?;
                    }
                    let t = j as f64 * dt;
                    substeps.clear();
                    if opts.scheme == Scheme::Midpoint {
                        substeps.push((self.drive_value(t + 0.5 * dt), dt));
                    } else {
                        // Commutator-free fourth-order Magnus: two exponentials of
                        // half length at Gauss-point weighted drive values.
                        let f1 = self.drive_value(t + (0.5 - SQRT3_6) * dt);
                        let f2 = self.drive_value(t + (0.5 + SQRT3_6) * dt);
                        let (a1, a2) = (0.25 + SQRT3_6, 0.25 - SQRT3_6);
                        substeps.push((2.0 * (a1 * f1 + a2 * f2), 0.5 * dt));
                        substeps.push((2.0 * (a2 * f1 + a1 * f2), 0.5 * dt));
                    }
                    for &(f, h) in &substeps {
                        let step = match &self.tridiagonal {
                            Some((diag, off)) => {
                                let d: Vec<f64> = diag
                                    .iter()
                                    .zip(self.drive_values.iter())
                                    .map(|(a, b)| a + f * b)
                                    .collect();
                                eigh_tridiagonal_into(&d, off, &mut values, &mut vectors, &mut work)?;
                                real_exp_step(&values, &vectors, h)
                            }
                            None => {
                                let mut hm = self.h_work.clone();
                                for k in 0..n {
                                    hm[[k, k]] += f * self.drive_values[k];
                                }
                                let (e, v) = eigh_complex(&hm)?;
                                exp_from_complex_eig(&e, &v, h)
                            }
                        };
                        u = step.dot(&u);
                    }
                }
                Ok(u)
            }
            Scheme::Split => {
                let (e, v) = eigh_complex(&self.h_work)?;
                let half = exp_from_complex_eig(&e, &v, 0.5 * dt);
                let full = exp_from_complex_eig(&e, &v, dt);
                let phases = |j: usize| -> Array1<C64> {
                    let a = self.drive_integral(j as f64 * dt, (j + 1) as f64 * dt);
                    self.drive_values.mapv(|d| C64::from_polar(1.0, -d * a))
                };
                // U(t_m) = half * P_m with P_m = D_m W P_{m-1}, P_1 = D_1 half.
                if n_times > 0 {
                    on_sample(0, &identity(n))?;
                }
                let mut p = scale_rows(&phases(0), &half);
                for m in 1..n_steps {
                    if m % every == 0 {
                        on_sample(m / every, &half.dot(&p))?;
                    }
                    p = scale_rows(&phases(m), &full.dot(&p));
                }
                Ok(half.dot(&p))
            }
        }
    }
}

fn scale_rows(d: &Array1<C64>, a: &Array2<C64>) -> Array2<C64> {
    let mut out = a.clone();
    for (mut row, &x) in out.axis_iter_mut(Axis(0)).zip(d.iter()) {
        row.mapv_inplace(|y| y * x);
    }
    out
}

/// `V diag(exp(-i e dt)) V^T` for real orthogonal `V`.
fn real_exp_step(values: &[f64], vectors: &Array2<f64>, dt: f64) -> Array2<C64> {
    let n = values.len();
    let mut left_re = vectors.clone();
    let mut left_im = vectors.clone();
    for k in 0..n {
        let (s, c) = (-values[k] * dt).sin_cos();
        left_re.column_mut(k).mapv_inplace(|x| x * c);
        left_im.column_mut(k).mapv_inplace(|x| x * s);
    }
    let re = left_re.dot(&vectors.t());
    let im = left_im.dot(&vectors.t());
    Array2::from_shape_fn((n, n), |(r, c)| C64::new(re[[r, c]], im[[r, c]]))
}

/// One-period propagator `U(T, 0)` in the original basis.
pub fn propagator(ham: &PeriodicHamiltonian, opts: &FloquetOptions) -> Result<Array2<C64>> {
    opts.validate()?;
    let u = ham.propagate(opts, 0, &mut |_, _| Ok(()))?;
    if let Some(tol) = opts.convergence_tol {
        let fine = FloquetOptions { n_steps: 2 * opts.n_steps, ..*opts };
        let u2 = ham.propagate(&fine, 0, &mut |_, _| Ok(()))?;
        let change = eigenphase_distance(&u, &u2)? / (ham.period() * ham.omega());
        if change > tol {
            return Err(Error::Accuracy(format!(
                "quasienergies moved by {change:.3e} omega on doubling {} steps",
                opts.n_steps
            )));
        }
    }
    Ok(match &ham.drive_vectors {
        Some(v) => v.dot(&u).dot(&dagger(v)),
        None => u,
    })
}

/// Largest distance from an eigenvalue of `a` to the nearest eigenvalue of `b`.
fn eigenphase_distance(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    let (wa, _, _) = schur(a)?;
    let (wb, _, _) = schur(b)?;
    Ok(wa
        .iter()
        .map(|x| wb.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

pub fn fold_quasienergy(e: f64, omega: f64) -> f64 {
    let mut f = e - omega * (e / omega).round();
    if f <= -0.5 * omega {
        f += omega;
    }
    if f > 0.5 * omega {
        f -= omega;
    }
    f
}

#[derive(Debug, Clone)]
pub struct FloquetSolution {
    pub quasienergies: Array1<f64>,
    pub mean_energy: Array1<f64>,
    /// Mode matrices (columns are modes) at each stored sample time.
    pub modes_t: Vec<Array2<C64>>,
    pub sample_times: Vec<f64>,
    /// Number of uniform samples per period used for averages.
    pub n_times: usize,
    pub omega: f64,
    pub amplitude: f64,
    pub params: Option<TransmonParams>,
    pub degenerate_clusters: Vec<Vec<usize>>,
    pub unitarity_defect: f64,
    pub orthonormality_defect: f64,
    pub options: FloquetOptions,
}

impl FloquetSolution {
    pub fn n_modes(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn dim(&self) -> usize {
        self.modes_t[0].nrows()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn modes_at_zero(&self) -> &Array2<C64> {
        &self.modes_t[0]
    }

    pub fn has_all_samples(&self) -> bool {
        self.modes_t.len() == self.n_times
    }

    /// `(<<H>> + E_J) / E_J`, the mean energy measured from the bottom of the well.
    pub fn mean_energy_over_ej(&self, e_j: f64) -> Array1<f64> {
        self.mean_energy.mapv(|e| (e + e_j) / e_j)
    }

    /// Mode indices in ascending mean energy.
    pub fn order_by_mean_energy(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_modes()).collect();
        idx.sort_by(|&a, &b| self.mean_energy[a].total_cmp(&self.mean_energy[b]));
        idx
    }

    /// Mode index with the largest overlap with `state` at `t = 0`.
    pub fn best_match(&self, state: &Array1<C64>) -> (usize, f64) {
        let ov = self.modes_t[0].t().mapv(|x| x.conj()).dot(state);
        ov.iter()
            .map(|x| x.norm())
            .enumerate()
            .fold((0, -1.0), |best, (k, m)| if m > best.1 { (k, m) } else { best })
    }
}

/// Propagates and decomposes in one pass where memory allows.
pub fn solve(ham: &PeriodicHamiltonian, opts: &FloquetOptions) -> Result<FloquetSolution> {
    solve_observed(ham, opts, &mut |_, _, _| Ok(()))
}

/// Like [`solve`], additionally calling `observer(s, t_s, modes)` with the mode
/// matrix in the original basis at every sample time.
pub fn solve_observed(
    ham: &PeriodicHamiltonian,
    opts: &FloquetOptions,
    observer: &mut dyn FnMut(usize, f64, &Array2<C64>) -> Result<()>,
) -> Result<FloquetSolution> {
    opts.validate()?;
    let n = ham.dim();
    let bytes = opts.n_times * n * n * 16;
    let mut stored: Vec<Array2<C64>> = Vec::new();
    let store = bytes <= SAMPLE_MEMORY_BUDGET;
    let u_work = ham.propagate(opts, if store { opts.n_times } else { 0 }, &mut |s, u| {
        debug_assert_eq!(s, stored.len());
        stored.push(u.clone());
        Ok(())
    })?;
    if let Some(tol) = opts.convergence_tol {
        let fine = FloquetOptions { n_steps: 2 * opts.n_steps, ..*opts };
        let u2 = ham.propagate(&fine, 0, &mut |_, _| Ok(()))?;
        let change = eigenphase_distance(&u_work, &u2)? / (ham.period() * ham.omega());
        if change > tol {
            return Err(Error::Accuracy(format!(
                "quasienergies moved by {change:.3e} omega on doubling {} steps",
                opts.n_steps
            )));
        }
    }
    let samples = if store { Some(stored) } else { None };
    finish(ham, &u_work, samples, opts, observer)
}

/// Decomposes a given one-period propagator (original basis), re-propagating
/// to obtain the modes at the sample times.
pub fn decompose(
    ham: &PeriodicHamiltonian,
    u_f: &Array2<C64>,
    opts: &FloquetOptions,
) -> Result<FloquetSolution> {
    opts.validate()?;
    let u_work = match &ham.drive_vectors {
        Some(v) => dagger(v).dot(u_f).dot(v),
        None => u_f.clone(),
    };
    finish(ham, &u_work, None, opts, &mut |_, _, _| Ok(()))
}

fn finish(
    ham: &PeriodicHamiltonian,
    u_work: &Array2<C64>,
    samples: Option<Vec<Array2<C64>>>,
    opts: &FloquetOptions,
    observer: &mut dyn FnMut(usize, f64, &Array2<C64>) -> Result<()>,
) -> Result<FloquetSolution> {
    let n = ham.dim();
    let t_period = ham.period();
    let omega = ham.omega;
    let unitarity = gram_deviation(u_work.view());
    let (w, mut z, off) = schur(u_work)?;
    if off > 1e-8 {
        return Err(Error::Accuracy(format!("one-period propagator is not normal: {off:.3e}")));
    }
    let phases: Vec<f64> = w.iter().map(|x| x.arg()).collect();
    let clusters = phase_clusters(&phases, CLUSTER_TOL);
    let mut degenerate = Vec::new();
    for cluster in &clusters {
        let cols: Vec<usize> = cluster.clone();
        let zc = z.select(Axis(1), &cols);
        let m = dagger(&zc).dot(&ham.h_work).dot(&zc);
        let (_, v) = eigh_complex(&m)?;
        let rotated = zc.dot(&v);
        for (i, &c) in cols.iter().enumerate() {
            z.column_mut(c).assign(&rotated.column(i));
        }
        let spread = cluster_spread(&phases, cluster);
        if spread < DEGENERACY_FLAG {
            degenerate.push(cols);
        }
    }
    // Canonical order: ascending quasienergy; global phase fixed so the
    // largest component of each mode at t = 0 is real and positive.
    let eps_unsorted: Vec<f64> = phases.iter().map(|ph| fold_quasienergy(-ph / t_period, omega)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eps_unsorted[a].total_cmp(&eps_unsorted[b]));
    let mut z0 = z.select(Axis(1), &order);
    for mut col in z0.axis_iter_mut(Axis(1)) {
        let big = col.iter().fold(C64::new(0.0, 0.0), |a, &x| if x.norm() > a.norm() { x } else { a });
        let ph = big.conj() / big.norm();
        col.mapv_inplace(|x| x * ph);
    }
    let quasienergies = Array1::from_iter(order.iter().map(|&k| eps_unsorted[k]));
    let degenerate_clusters = degenerate
        .into_iter()
        .map(|c| c.into_iter().map(|k| order.iter().position(|&o| o == k).unwrap()).collect())
        .collect();

    let n_times = opts.n_times;
    let mut mean = Array1::<f64>::zeros(n);
    let mut modes_t = Vec::with_capacity(if opts.keep_samples { n_times } else { 1 });
    let mut sample_times = Vec::new();
    let mut ortho = 0.0f64;
    let mut handle = |s: usize, u: &Array2<C64>| -> Result<()> {
        let t = s as f64 * t_period / n_times as f64;
        let mut phi = u.dot(&z0);
        for (mut col, &e) in phi.axis_iter_mut(Axis(1)).zip(quasienergies.iter()) {
            let ph = C64::from_polar(1.0, e * t);
            col.mapv_inplace(|x| x * ph);
        }
        let f = ham.drive_value(t);
        let hphi = ham.h_work.dot(&phi);
        for k in 0..n {
            let col = phi.column(k);
            let mut acc = 0.0;
            for r in 0..n {
                acc += (col[r].conj() * hphi[[r, k]]).re + f * ham.drive_values[r] * col[r].norm_sqr();
            }
            mean[k] += acc / n_times as f64;
        }
        let phi_orig = ham.to_original(&phi);
        if s == 0 || s == n_times / 2 {
            ortho = ortho.max(gram_deviation(phi_orig.view()));
        }
        observer(s, t, &phi_orig)?;
        if opts.keep_samples || s == 0 {
            modes_t.push(phi_orig);
            sample_times.push(t);
        }
        Ok(())
    };
    match samples {
        Some(us) => {
            for (s, u) in us.iter().enumerate() {
                handle(s, u)?;
            }
        }
        None => {
            ham.propagate(opts, n_times, &mut |s, u| handle(s, u))?;
        }
    }
    Ok(FloquetSolution {
        quasienergies,
        mean_energy: mean,
        modes_t,
        sample_times,
        n_times,
        omega,
        amplitude: ham.amplitude,
        params: ham.params,
        degenerate_clusters,
        unitarity_defect: unitarity,
        orthonormality_defect: ortho,
        options: *opts,
    })
}

/// Groups indices whose eigenphases lie within `tol` of a neighbour on the circle.
fn phase_clusters(phases: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let n = phases.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![idx[0]];
    for w in idx.windows(2) {
        if (phases[w[1]] - phases[w[0]]).abs() < tol {
            current.push(w[1]);
        } else {
            groups.push(std::mem::take(&mut current));
            current.push(w[1]);
        }
    }
    groups.push(current);
    if groups.len() > 1 {
        let first = phases[idx[0]];
        let last = phases[idx[n - 1]];
        if first + 2.0 * PI - last < tol {
            let tail = groups.pop().unwrap();
            groups[0].extend(tail);
        }
    }
    groups.into_iter().filter(|g| g.len() > 1).collect()
}

fn cluster_spread(phases: &[f64], cluster: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &a in cluster {
        for &b in cluster {
            let d = (phases[a] - phases[b]).abs();
            worst = worst.max(d.min(2.0 * PI - d));
        }
    }
    worst
}

/// Solution for a transmon parameter point.
pub fn solve_transmon(p: &TransmonParams, basis: &ChargeBasis, opts: &FloquetOptions) -> Result<FloquetSolution> {
    solve(&PeriodicHamiltonian::transmon(p, basis)?, opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStep {
    pub index: usize,
    pub overlap: f64,
    pub confident: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub seed: usize,
    pub steps: Vec<TrackStep>,
}

impl TrackingResult {
    /// Index of the first sweep step where confidence was lost.
    pub fn first_loss(&self) -> Option<usize> {
        self.steps.iter().position(|s| !s.confident)
    }
}

/// Streaming maximum-overlap tracker over an ordered sweep.
#[derive(Debug, Clone)]
pub struct Tracker {
    previous: Vec<Array1<C64>>,
    results: Vec<TrackingResult>,
}

impl Tracker {
    pub fn new(first: &FloquetSolution, seeds: &[usize]) -> Result<Self> {
        let mut previous = Vec::with_capacity(seeds.len());
        let mut results = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            if seed >= first.n_modes() {
                return Err(Error::InvalidInput(format!("seed {seed} out of range")));
            }
            previous.push(first.modes_at_zero().column(seed).to_owned());
            results.push(TrackingResult {
                seed,
                steps: vec![TrackStep { index: seed, overlap: 1.0, confident: true }],
            });
        }
        Ok(Self { previous, results })
    }

    pub fn push(&mut self, next: &FloquetSolution) -> Vec<TrackStep> {
        let modes = next.modes_at_zero();
        let mut out = Vec::with_capacity(self.previous.len());
        for (prev, res) in self.previous.iter_mut().zip(self.results.iter_mut()) {
            let ov = modes.t().mapv(|x| x.conj()).dot(prev);
            let (index, overlap) = ov
                .iter()
                .map(|x| x.norm().min(1.0))
                .enumerate()
                .fold((0, -1.0), |best, (k, m)| if m > best.1 { (k, m) } else { best });
            let step = TrackStep { index, overlap, confident: overlap >= TRACKING_THRESHOLD };
            *prev = modes.column(index).to_owned();
            res.steps.push(step);
            out.push(step);
        }
        out
    }

    pub fn results(&self) -> &[TrackingResult] {
        &self.results
    }

    pub fn into_results(self) -> Vec<TrackingResult> {
        self.results
    }
}

pub fn track(sweep: &[FloquetSolution], seeds: &[usize]) -> Result<Vec<TrackingResult>> {
    let first = sweep.first().ok_or_else(|| Error::InvalidInput("empty sweep".into()))?;
    let mut tracker = Tracker::new(first, seeds)?;
    for sol in &sweep[1..] {
        tracker.push(sol);
    }
    Ok(tracker.into_results())
}

/// Mode indices of `sol` best matching the lowest `count` static eigenstates.
pub fn static_seeds(sol: &FloquetSolution, p: &TransmonParams, basis: &ChargeBasis, count: usize) -> Result<Vec<usize>> {
    let (_, v) = crate::model::static_spectrum(p, basis)?;
    Ok((0..count).map(|k| sol.best_match(&v.column(k).mapv(|x| C64::new(x, 0.0))).0).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarkCurve {
    pub amplitudes: Vec<f64>,
    pub shift: Vec<f64>,
    /// Unfolded quasienergy difference of the tracked 0 and 1 modes.
    pub transition: Vec<f64>,
    pub overlaps: Vec<[f64; 2]>,
    /// Set when tracking was lost; the curve stops before that amplitude.
    pub truncated: bool,
}

/// Unfolds `raw` by multiples of `omega` to lie closest to `reference`.
pub fn unfold_near(raw: f64, reference: f64, omega: f64) -> f64 {
    raw + omega * ((reference - raw) / omega).round()
}

/// Amplitude points of a tracked ac-Stark curve.
pub struct StarkTracker {
    basis: ChargeBasis,
    base: TransmonParams,
    opts: FloquetOptions,
    tracker: Tracker,
    last_transition: f64,
    undriven: f64,
}

impl StarkTracker {
    /// Starts from the solution at amplitude `eps0`.
    pub fn new(base: &TransmonParams, basis: &ChargeBasis, opts: &FloquetOptions, eps0: f64) -> Result<(Self, f64)> {
        let (e, v) = crate::model::static_spectrum(&base.with_drive(0.0), basis)?;
        let undriven = e[1] - e[0];
        let first = solve_transmon(&base.with_drive(eps0), basis, opts)?;
        let seeds: Vec<usize> = (0..2)
            .map(|k| first.best_match(&v.column(k).mapv(|x| C64::new(x, 0.0))).0)
            .collect();
        let raw = first.quasienergies[seeds[1]] - first.quasienergies[seeds[0]];
        let transition = unfold_near(raw, undriven, base.omega_d);
        let tracker = Tracker::new(&first, &seeds)?;
        Ok((
            Self { basis: *basis, base: *base, opts: *opts, tracker, last_transition: transition, undriven },
            transition - undriven,
        ))
    }

    /// Advances to `eps`, returning the shift and both overlaps.
    pub fn advance(&mut self, eps: f64) -> Result<(f64, [f64; 2], bool)> {
        let sol = solve_transmon(&self.base.with_drive(eps), &self.basis, &self.opts)?;
        let steps = self.tracker.push(&sol);
        let raw = sol.quasienergies[steps[1].index] - sol.quasienergies[steps[0].index];
        let transition = unfold_near(raw, self.last_transition, self.base.omega_d);
        self.last_transition = transition;
        let ok = steps.iter().all(|s| s.confident);
        Ok((transition - self.undriven, [steps[0].overlap, steps[1].overlap], ok))
    }
}

pub fn ac_stark_shift(
    base: &TransmonParams,
    basis: &ChargeBasis,
    amplitudes: &[f64],
    opts: &FloquetOptions,
) -> Result<StarkCurve> {
    let first = *amplitudes.first().ok_or_else(|| Error::InvalidInput("empty amplitude list".into()))?;
    let (mut st, shift0) = StarkTracker::new(base, basis, opts, first)?;
    let mut curve = StarkCurve {
        amplitudes: vec![first],
        shift: vec![shift0],
        transition: vec![shift0 + st.undriven],
        overlaps: vec![[1.0, 1.0]],
        truncated: false,
    };
    for &eps in &amplitudes[1..] {
        let (shift, ov, ok) = st.advance(eps)?;
        if !ok {
            curve.truncated = true;
            break;
        }
        curve.amplitudes.push(eps);
        curve.shift.push(shift);
        curve.transition.push(shift + st.undriven);
        curve.overlaps.push(ov);
    }
    Ok(curve)
}

/// Drive amplitude at which `|shift| = |target|`, found by stepping until the
/// target is bracketed and then bisecting to `tol`.
pub fn amplitude_for_shift(
    base: &TransmonParams,
    basis: &ChargeBasis,
    target: f64,
    step: f64,
    max_amplitude: f64,
    tol: f64,
    opts: &FloquetOptions,
) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let goal = target.abs();
    let (mut st, _) = StarkTracker::new(base, basis, opts, 0.0)?;
    let mut lo = 0.0;
    let mut lo_shift = 0.0f64;
    loop {
        let hi = lo + step;
        if hi > max_amplitude {
            return Err(Error::NoSolution(format!("|shift| stays below {goal} up to {max_amplitude}")));
        }
        let snapshot = st.tracker.clone();
        let last = st.last_transition;
        let (shift, _, ok) = st.advance(hi)?;
        if !ok {
            return Err(Error::NoSolution("tracking lost before reaching the target shift".into()));
        }
        if shift.abs() < lo_shift.abs() {
            return Err(Error::NoSolution("shift magnitude is not monotone before the target".into()));
        }
        if shift.abs() >= goal {
            // Bisection inside a monotone bracket, tracking from the lower end.
            let (mut a, mut b) = (lo, hi);
            let mut best = hi;
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let mut probe = StarkTracker {
                    basis: st.basis,
                    base: st.base,
                    opts: st.opts,
                    tracker: snapshot.clone(),
                    last_transition: last,
                    undriven: st.undriven,
                };
                let (s_mid, _, _) = probe.advance(mid)?;
                best = mid;
                if (s_mid.abs() - goal).abs() < tol {
                    break;
                }
                if s_mid.abs() < goal {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Ok(best);
        }
        lo = hi;
        lo_shift = shift;
    }
}

/// Fourier coefficients of one mode over the stored samples, `c_m` for
/// harmonics `e^{i m omega t}` with `m` in `-N_t/2 .. N_t/2`.
pub fn mode_harmonics(sol: &FloquetSolution, k: usize) -> Result<Array2<C64>> {
    if !sol.has_all_samples() {
        return Err(Error::InvalidInput("mode samples were not kept".into()));
    }
    let nt = sol.n_times;
    let dim = sol.dim();
    let mut out = Array2::<C64>::zeros((nt, dim));
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(nt);
    let mut buf = vec![C64::new(0.0, 0.0); nt];
    for r in 0..dim {
        for s in 0..nt {
            buf[s] = sol.modes_t[s][[r, k]];
        }
        fft.process(&mut buf);
        for s in 0..nt {
            out[[s, r]] = buf[s] / nt as f64;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{static_spectrum, GHZ};

    fn base(inv_hbar: f64, eps: f64, ng: f64) -> TransmonParams {
        TransmonParams::from_rescaled(inv_hbar, eps, 1.34, ng, 1.0).unwrap()
    }

    #[test]
    fn static_limit_matches_diagonalization() {
        let p = base(3.0, 0.0, 0.13);
        let basis = ChargeBasis::default();
        let sol = solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
        let (e, v) = static_spectrum(&p, &basis).unwrap();
        for k in 0..basis.dim() {
            let vk = v.column(k).mapv(|x| C64::new(x, 0.0));
            let (idx, ov) = sol.best_match(&vk);
            assert!(ov > 1.0 - 1e-8, "overlap {ov}");
            let folded = fold_quasienergy(e[k], p.omega_d);
            let d = (sol.quasienergies[idx] - folded).abs();
            assert!(d.min(p.omega_d - d) < 1e-8 * e[k].abs().max(1.0));
            assert!((sol.mean_energy[idx] - e[k]).abs() < 1e-8 * e[k].abs().max(1.0));
        }
    }

    #[test]
    fn unitarity_and_brillouin_zone() {
        let p = base(3.0, 0.5, 0.0);
        let ham = PeriodicHamiltonian::transmon(&p, &ChargeBasis::default()).unwrap();
        let u = propagator(&ham, &FloquetOptions::default()).unwrap();
        assert!(gram_deviation(u.view()) < 1e-9);
        let sol = solve(&ham, &FloquetOptions::default()).unwrap();
        let half = 0.5 * p.omega_d;
        assert!(sol.quasienergies.iter().all(|&e| e > -half && e <= half));
        assert!(sol.orthonormality_defect < 1e-8);
        for m in &sol.modes_t {
            assert!(gram_deviation(m.view()) < 1e-8);
        }
    }

    #[test]
    fn step_doubling_convergence() {
        let p = base(3.0, 0.5, 0.0);
        let ham = PeriodicHamiltonian::transmon(&p, &ChargeBasis::default()).unwrap();
        let opts = FloquetOptions { convergence_tol: Some(1e-7), ..Default::default() };
        propagator(&ham, &opts).expect("converged at default steps");
    }

    #[test]
    fn midpoint_converges_to_magnus() {
        let p = base(3.0, 0.5, 0.1);
        let ham = PeriodicHamiltonian::transmon(&p, &ChargeBasis::new(10)).unwrap();
        let reference = propagator(&ham, &FloquetOptions::default()).unwrap();
        let err = |n_steps: usize| {
            let u = propagator(&ham, &FloquetOptions { n_steps, scheme: Scheme::Midpoint, ..Default::default() }).unwrap();
            eigenphase_distance(&u, &reference).unwrap()
        };
        let (e1, e2) = (err(512), err(1024));
        // Second order: halving the step divides the error by about four.
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{e1} {e2}");
    }

    #[test]
    fn split_scheme_agrees_with_midpoint() {
        let p = base(3.0, 0.3, 0.2);
        let basis = ChargeBasis::new(12);
        let mid = solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
        let ham = PeriodicHamiltonian::transmon(&p, &basis).unwrap();
        let split = solve(&ham, &FloquetOptions { scheme: Scheme::Split, n_steps: 2048, ..Default::default() }).unwrap();
        for k in 0..mid.n_modes() {
            let (j, ov) = split.best_match(&mid.modes_at_zero().column(k).to_owned());
            assert!(ov > 1.0 - 1e-6, "mode {k} overlap {ov}");
            let d = (split.quasienergies[j] - mid.quasienergies[k]).abs();
            assert!(d.min(p.omega_d - d) < 1e-6 * p.omega_d);
            assert!((split.mean_energy[j] - mid.mean_energy[k]).abs() < 1e-5 * p.e_j);
        }
    }

    #[test]
    fn second_pass_matches_stored_samples() {
        let p = base(3.0, 0.4, 0.1);
        let basis = ChargeBasis::new(8);
        let ham = PeriodicHamiltonian::transmon(&p, &basis).unwrap();
        for scheme in [Scheme::Midpoint, Scheme::Split] {
            let opts = FloquetOptions { scheme, ..Default::default() };
            let a = solve(&ham, &opts).unwrap();
            let u = propagator(&ham, &opts).unwrap();
            let b = decompose(&ham, &u, &opts).unwrap();
            for k in 0..a.n_modes() {
                assert!((a.quasienergies[k] - b.quasienergies[k]).abs() < 1e-10);
                assert!((a.mean_energy[k] - b.mean_energy[k]).abs() < 1e-10 * p.e_j);
            }
            for s in [1, 37, 127] {
                let d = (&a.modes_t[s] - &b.modes_t[s]).iter().map(|x| x.norm()).fold(0.0, f64::max);
                assert!(d < 1e-9, "{scheme:?} sample {s}: {d}");
            }
        }
    }

    #[test]
    fn modes_are_periodic() {
        let p = base(3.0, 0.5, 0.0);
        let basis = ChargeBasis::default();
        let ham = PeriodicHamiltonian::transmon(&p, &basis).unwrap();
        let opts = FloquetOptions::default();
        let sol = solve(&ham, &opts).unwrap();
        let u = propagator(&ham, &opts).unwrap();
        let t = sol.period();
        for k in 0..sol.n_modes() {
            let phi0 = sol.modes_at_zero().column(k).to_owned();
            let ph = C64::from_polar(1.0, sol.quasienergies[k] * t);
            let phi_t = u.dot(&phi0).mapv(|x| x * ph);
            let d = (&phi_t - &phi0).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(d < 1e-8, "mode {k}: {d}");
        }
    }

    #[test]
    fn mean_energy_invariant_under_zone_shift() {
        let p = base(3.0, 0.5, 0.0);
        let sol = solve_transmon(&p, &ChargeBasis::default(), &FloquetOptions::default()).unwrap();
        let ham = PeriodicHamiltonian::transmon(&p, &ChargeBasis::default()).unwrap();
        let k = 3;
        for m in [-2i32, 1, 5] {
            let mut acc = 0.0;
            for (s, modes) in sol.modes_t.iter().enumerate() {
                let t = sol.sample_times[s];
                let shifted = modes.column(k).mapv(|x| x * C64::from_polar(1.0, m as f64 * p.omega_d * t));
                let h = ham.at(t);
                acc += shifted.mapv(|x| x.conj()).dot(&h.dot(&shifted)).re;
            }
            acc /= sol.n_times as f64;
            assert!((acc - sol.mean_energy[k]).abs() < 1e-10 * p.e_j);
        }
    }

    #[test]
    fn harmonics_satisfy_parseval() {
        let p = base(3.0, 0.5, 0.0);
        let sol = solve_transmon(&p, &ChargeBasis::default(), &FloquetOptions::default()).unwrap();
        for k in [0, 10, 20] {
            let c = mode_harmonics(&sol, k).unwrap();
            let total: f64 = c.iter().map(|x| x.norm_sqr()).sum();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn separatrix_cluster_in_deep_transmon() {
        let p = base(7.91, 0.5, 0.0);
        let sol = solve_transmon(&p, &ChargeBasis::new(40), &FloquetOptions::default()).unwrap();
        let me = sol.mean_energy_over_ej(p.e_j);
        let near = me.iter().filter(|&&e| (e - 2.0).abs() < 0.3).count();
        assert!(near >= 3, "{near} states near the separatrix");
    }

    #[test]
    fn zone_folding() {
        assert_eq!(fold_quasienergy(-0.5, 1.0), 0.5);
        assert_eq!(fold_quasienergy(0.5, 1.0), 0.5);
        assert!((fold_quasienergy(2.3, 1.0) - 0.3).abs() < 1e-12);
        assert!((fold_quasienergy(-2.3, 1.0) + 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitude_tracking_is_identity() {
        let p = base(3.0, 0.0, 0.13);
        let basis = ChargeBasis::new(10);
        let a = solve_transmon(&p, &basis, &FloquetOptions::default()).unwrap();
        let res = track(&[a.clone(), a], &[0, 1, 2]).unwrap();
        for r in res {
            assert_eq!(r.steps[1].index, r.seed);
            assert!((r.steps[1].overlap - 1.0).abs() < 1e-12);
        }
        assert!(track(&[], &[0]).is_err());
    }

    #[test]
    fn stark_curve_starts_at_zero_and_is_tracked() {
        let p = base(2.45, 0.0, 0.0).with_ng(0.0);
        let p = TransmonParams { omega_d: 1.25 * p.omega_p(), ..p };
        let basis = ChargeBasis::default();
        let amps: Vec<f64> = (0..=20).map(|k| k as f64 * 0.005 * p.omega_p()).collect();
        let c = ac_stark_shift(&p, &basis, &amps, &FloquetOptions::default()).unwrap();
        assert!(c.shift[0].abs() < 1e-9 * p.omega_p());
        assert_eq!(c.amplitudes.len(), amps.len());
        assert!(c.shift.windows(2).all(|w| w[1] < w[0]), "{:?}", c.shift);
    }

    #[test]
    fn amplitude_for_shift_self_consistent() {
        let p = TransmonParams::from_rescaled(2.45, 0.0, 1.25, 0.0, 1.0).unwrap();
        // Work in GHz-scale angular units with omega_p = 6.26 GHz.
        let scale = 6.26 * GHZ / p.omega_p();
        let p = TransmonParams { e_c: p.e_c * scale, e_j: p.e_j * scale, omega_d: p.omega_d * scale, ..p };
        let basis = ChargeBasis::default();
        let target = -0.1 * GHZ;
        let tol = 1e-4 * GHZ;
        let opts = FloquetOptions::default();
        assert_eq!(amplitude_for_shift(&p, &basis, 0.0, 0.01, 1.0, tol, &opts).unwrap(), 0.0);
        let eps = amplitude_for_shift(&p, &basis, target, 0.01 * p.omega_p(), p.omega_p(), tol, &opts).unwrap();
        let c = ac_stark_shift(&p, &basis, &[0.0, 0.5 * eps, eps], &opts).unwrap();
        assert!((c.shift[2].abs() - target.abs()).abs() < tol, "{:?}", c.shift);
    }
}
