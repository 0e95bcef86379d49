//! Classical driven pendulum in rescaled units.
//!
//! `H(t) = (n - n_g)^2 / 2 - cos(phi) + eps cos(omega t) n`, integrated with a
//! fourth-order symplectic composition in extended phase space. Energies are
//! measured from the bottom of the well, so the separatrix sits at `H = 2`.

use crate::error::{Error, Result};
use crate::model::ReducedParams;
use std::f64::consts::PI;

pub const DEFAULT_STEPS_PER_PERIOD: usize = 512;
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;
pub const DEFAULT_CHAOS_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub phi: f64,
    pub n: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, n: f64) -> Self {
        Self { phi: wrap_phase(phi), n }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// Phase without reduction to the circle.
    pub unwrapped_phi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SectionPoints {
    pub points: Vec<Vec<PhasePoint>>,
    pub period: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerWidth {
    pub value: f64,
    /// Set when `omega_tilde <= 1`, outside the range where the estimate holds.
    pub domain_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub bounded_1_1: bool,
    pub bounded_3_1: bool,
    pub bounded_5_1: bool,
    /// Windows of `omega_tilde` for the 1:1, 3:1 and 5:1 bounded resonances.
    pub bounded_windows: [(f64, f64); 3],
    /// Momenta of the rotating resonant tori, present for `omega_tilde >= 1.5`.
    pub unbounded_tori: Option<[f64; 2]>,
    pub j0_factor: f64,
    pub layer_width: LayerWidth,
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Undriven energy measured from the bottom of the well.
pub fn pendulum_energy(p: PhasePoint, ng_tilde: f64) -> f64 {
    0.5 * (p.n - ng_tilde).powi(2) + 1.0 - p.phi.cos()
}

#[derive(Debug, Clone, Copy)]
struct State {
    phi: f64,
    n: f64,
    t: f64,
    dphi: f64,
    dn: f64,
}

// Fourth-order composition of the second-order Strang step.
const W1: f64 = 1.351_207_191_959_657_8;
const W0: f64 = -1.702_414_383_919_315_3;

#[derive(Debug, Clone, Copy)]
struct Stepper {
    eps: f64,
    omega: f64,
    ng: f64,
}

impl Stepper {
    fn new(r: &ReducedParams) -> Self {
        Self { eps: r.eps_tilde, omega: r.omega_tilde, ng: r.ng_tilde }
    }

    #[inline]
    fn drift(&self, s: &mut State, h: f64) {
        let t1 = s.t + h;
        s.phi += (s.n - self.ng) * h;
        if self.eps != 0.0 {
            s.phi += self.eps / self.omega * ((self.omega * t1).sin() - (self.omega * s.t).sin());
        }
        s.dphi += s.dn * h;
        s.t = t1;
    }

    #[inline]
    fn kick(&self, s: &mut State, h: f64) {
        let (sin, cos) = s.phi.sin_cos();
        s.n -= sin * h;
        s.dn -= cos * s.dphi * h;
    }

    #[inline]
    fn strang(&self, s: &mut State, h: f64) {
        self.drift(s, 0.5 * h);
        self.kick(s, h);
        self.drift(s, 0.5 * h);
    }

    #[inline]
    fn step(&self, s: &mut State, h: f64) {
        self.strang(s, W1 * h);
        self.strang(s, W0 * h);
        self.strang(s, W1 * h);
    }
}

fn check_step(r: &ReducedParams, dt: f64) -> Result<()> {
    let max = r.period() / MIN_STEPS_PER_PERIOD;
    if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
        return Err(Error::Configuration(format!(
            "time step {dt} must be positive and at most T/{MIN_STEPS_PER_PERIOD} = {max}"
        )));
    }
    Ok(())
}

/// Integrates from `t = 0`, recording every step.
pub fn integrate(start: PhasePoint, r: &ReducedParams, t_span: f64, dt: f64) -> Result<Trajectory> {
    integrate_from(start, 0.0, r, t_span, dt)
}

/// Integrates from `t_start` over `t_span` (negative spans run backwards).
pub fn integrate_from(
    start: PhasePoint,
    t_start: f64,
    r: &ReducedParams,
    t_span: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_step(r, dt)?;
    let steps = (t_span.abs() / dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { t_span / steps as f64 };
    let stepper = Stepper::new(r);
    let mut s = State { phi: start.phi, n: start.n, t: t_start, dphi: 0.0, dn: 0.0 };
    let mut out = Trajectory {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        unwrapped_phi: Vec::with_capacity(steps + 1),
    };
    let record = |s: &State, out: &mut Trajectory| {
        out.times.push(s.t);
        out.points.push(PhasePoint { phi: wrap_phase(s.phi), n: s.n });
        out.unwrapped_phi.push(s.phi);
    };
    record(&s, &mut out);
    for _ in 0..steps {
        stepper.step(&mut s, h);
        record(&s, &mut out);
    }
    Ok(out)
}

pub fn poincare_section(
    starts: &[PhasePoint],
    r: &ReducedParams,
    n_periods: usize,
    t0_fraction: f64,
) -> Result<SectionPoints> {
    poincare_section_with(starts, r, n_periods, t0_fraction, DEFAULT_STEPS_PER_PERIOD)
}

pub fn poincare_section_with(
    starts: &[PhasePoint],
    r: &ReducedParams,
    n_periods: usize,
    t0_fraction: f64,
    steps_per_period: usize,
) -> Result<SectionPoints> {
    if n_periods < 100 {
        return Err(Error::Configuration(format!("n_periods = {n_periods} must be at least 100")));
    }
    let period = r.period();
    let h = period / steps_per_period as f64;
    check_step(r, h)?;
    let t0 = t0_fraction * period;
    let stepper = Stepper::new(r);
    let points = starts
        .iter()
        .map(|p| {
            let mut s = State { phi: p.phi, n: p.n, t: t0, dphi: 0.0, dn: 0.0 };
            let mut section = Vec::with_capacity(n_periods);
            for k in 0..n_periods {
                section.push(PhasePoint { phi: wrap_phase(s.phi), n: s.n });
                if k + 1 < n_periods {
                    for _ in 0..steps_per_period {
                        stepper.step(&mut s, h);
                    }
                    s.phi = wrap_phase(s.phi);
                    // Re-anchor time to avoid accumulated rounding in t.
                    s.t = t0 + (k + 1) as f64 * period;
                }
            }
            section
        })
        .collect();
    Ok(SectionPoints { points, period, t0 })
}

/// Largest Lyapunov exponent per unit rescaled time, from the exact tangent
/// map of the integrator with renormalization once per period.
pub fn lyapunov(start: PhasePoint, r: &ReducedParams, n_periods: usize) -> Result<f64> {
    lyapunov_with(start, r, n_periods, DEFAULT_STEPS_PER_PERIOD)
}

pub fn lyapunov_with(
    start: PhasePoint,
    r: &ReducedParams,
    n_periods: usize,
    steps_per_period: usize,
) -> Result<f64> {
    if n_periods < 500 {
        return Err(Error::Configuration(format!("n_periods = {n_periods} must be at least 500")));
    }
    let period = r.period();
    let h = period / steps_per_period as f64;
    check_step(r, h)?;
    let stepper = Stepper::new(r);
    let mut s = State { phi: start.phi, n: start.n, t: 0.0, dphi: 1.0, dn: 0.0 };
    let mut log_sum = 0.0;
    for k in 0..n_periods {
        for _ in 0..steps_per_period {
            stepper.step(&mut s, h);
        }
        s.phi = wrap_phase(s.phi);
        s.t = (k + 1) as f64 * period;
        let norm = s.dphi.hypot(s.dn);
        log_sum += norm.ln();
        s.dphi /= norm;
        s.dn /= norm;
    }
    Ok(log_sum / (n_periods as f64 * period))
}

/// Threshold separating chaotic from regular exponents: ten times a measured
/// regular floor, but never below the default absolute threshold.
pub fn chaos_threshold(regular_floor: Option<f64>) -> f64 {
    regular_floor.map_or(DEFAULT_CHAOS_THRESHOLD, |f| (10.0 * f).max(DEFAULT_CHAOS_THRESHOLD))
}

/// Width of the chaotic layer in units of `E_J`, `eps omega sech(pi omega / 2)`.
pub fn chaotic_layer_width(eps_tilde: f64, omega_tilde: f64) -> LayerWidth {
    LayerWidth {
        value: eps_tilde * omega_tilde / (PI * omega_tilde / 2.0).cosh(),
        domain_warning: omega_tilde <= 1.0,
    }
}

pub fn resonance_report(r: &ReducedParams) -> ResonanceReport {
    let w = r.omega_tilde;
    let windows = [(0.65, 1.0), (2.0, 3.0), (4.0, 5.0)];
    let inside = |(lo, hi): (f64, f64)| w >= lo && w <= hi;
    ResonanceReport {
        bounded_1_1: inside(windows[0]),
        bounded_3_1: inside(windows[1]),
        bounded_5_1: inside(windows[2]),
        bounded_windows: windows,
        unbounded_tori: (w >= 1.5).then(|| [r.ng_tilde - w, r.ng_tilde + w]),
        j0_factor: bessel_j0(r.eps_tilde / w),
        layer_width: chaotic_layer_width(r.eps_tilde, w),
    }
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(x: f64) -> f64 {
    // Power series converges quickly for the small arguments used here; large
    // arguments fall back to the integral representation.
    if x.abs() < 8.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= -q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        let n = 2000;
        let h = PI / n as f64;
        (0..n).map(|k| (x * ((k as f64 + 0.5) * h).sin()).cos()).sum::<f64>() * h / PI
    }
}

/// Default section grid: starts on the `n = n_g` and `phi = 0` axes.
pub fn default_starts(count: usize, ng_tilde: f64) -> Vec<PhasePoint> {
    let half = count / 2;
    let mut out = Vec::with_capacity(count);
    for k in 0..half {
        let phi = PI * (k as f64 + 0.5) / half as f64;
        out.push(PhasePoint::new(phi, ng_tilde));
    }
    let rest = count - half;
    for k in 0..rest {
        let n = ng_tilde + 3.5 * (k as f64 + 1.0) / rest as f64;
        out.push(PhasePoint::new(0.0, n));
    }
    out
}
