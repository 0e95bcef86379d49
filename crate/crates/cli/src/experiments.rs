//! One function per experiment; each returns tables in a fixed order.

use crate::config::{Config, Preset, ResolvedTransmon};
use crate::output::{FailedPoint, Table};
use quasichaos_core::chaosmetrics::{self, Reference, DEFAULT_WINDOW};
use quasichaos_core::classical::{self, PhasePoint};
use quasichaos_core::cqed::{self, CqedSolution};
use quasichaos_core::dispersion;
use quasichaos_core::dissipation::{self, BathSpec, NoiseSpec};
use quasichaos_core::floquet::{self, FloquetOptions, FloquetSolution, Tracker};
use quasichaos_core::model::{rescale, ChargeBasis, TransmonParams, GHZ};
use quasichaos_core::phasespace::{self, GridSpec};
use quasichaos_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Poincare,
    Lyapunov,
    FloquetSweep,
    Husimi,
    LevelStats,
    Rates,
    SteadyState,
    Dephasing,
    Dispersion,
    CqedGrid,
    CavityPull,
    Ncrit,
    DipoleStats,
    UndrivenFolded,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Poincare => "poincare",
            Experiment::Lyapunov => "lyapunov",
            Experiment::FloquetSweep => "floquet-sweep",
            Experiment::Husimi => "husimi",
            Experiment::LevelStats => "level-stats",
            Experiment::Rates => "rates",
            Experiment::SteadyState => "steady-state",
            Experiment::Dephasing => "dephasing",
            Experiment::Dispersion => "dispersion",
            Experiment::CqedGrid => "cqed-grid",
            Experiment::CavityPull => "cavity-pull",
            Experiment::Ncrit => "ncrit",
            Experiment::DipoleStats => "dipole-stats",
            Experiment::UndrivenFolded => "undriven-folded",
        }
    }
}

pub struct Context {
    pub cfg: Config,
    pub preset: Preset,
    pub seed: u64,
    pub transmon: TransmonParams,
    pub resolved: ResolvedTransmon,
    pub basis: ChargeBasis,
    pub floquet: FloquetOptions,
}

impl Context {
    pub fn new(cfg: Config, preset: Preset, seed: u64) -> Result<Self> {
        let (transmon, resolved) = cfg.resolve_transmon()?;
        let basis = ChargeBasis::new(resolved.charge_cutoff);
        let floquet = cfg.floquet.resolve()?;
        Ok(Self { cfg, preset, seed, transmon, resolved, basis, floquet })
    }

    fn pick<T>(&self, paper: T, ci: T) -> T {
        match self.preset {
            Preset::Paper => paper,
            Preset::Ci => ci,
        }
    }

    fn eps_grid(&self, fallback: Vec<f64>) -> Result<Vec<f64>> {
        match &self.cfg.sweep.eps_tilde {
            Some(g) => g.values("sweep.eps_tilde"),
            None => Ok(fallback),
        }
    }

    /// Configured drive, or `fallback` when the config sets none.
    fn drive_or(&self, fallback: f64) -> f64 {
        if self.cfg.drive.amplitude_given() {
            self.resolved.eps_tilde
        } else {
            fallback
        }
    }

    fn temperature_k(&self) -> f64 {
        self.cfg.bath.temperature_mk.unwrap_or(10.0) * 1e-3
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub json: Vec<(String, Value)>,
    pub failed: Vec<FailedPoint>,
    pub warnings: Vec<String>,
    pub defaults: Value,
}

/// Error of a single sweep point: a library error or a caught panic.
#[derive(Debug, Clone)]
pub enum PointError {
    Failed(Error),
    Panicked(String),
}

impl std::fmt::Display for PointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointError::Failed(e) => write!(f, "{e}"),
            PointError::Panicked(m) => write!(f, "panic: {m}"),
        }
    }
}

/// Evaluates `f` on every point in parallel, results in point order.
pub fn sweep<P: Sync, T: Send>(points: &[P], f: impl Fn(&P) -> Result<T> + Sync) -> Vec<std::result::Result<T, PointError>> {
    points
        .par_iter()
        .map(|p| match catch_unwind(AssertUnwindSafe(|| f(p))) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(PointError::Failed(e)),
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown".into());
                Err(PointError::Panicked(msg))
            }
        })
        .collect()
}

/// Splits sweep results into successes (with their point) and failure records.
/// All points failing is an error of the whole run.
fn partition<P: Copy, T>(
    points: &[P],
    results: Vec<std::result::Result<T, PointError>>,
    label: impl Fn(&P) -> String,
    out: &mut Outcome,
) -> Result<Vec<(P, T)>> {
    let mut ok = Vec::new();
    let mut first_err = None;
    for (i, (p, r)) in points.iter().zip(results).enumerate() {
        match r {
            Ok(v) => ok.push((*p, v)),
            Err(e) => {
                out.failed.push(FailedPoint { index: i, label: label(p), error: e.to_string() });
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if ok.is_empty() {
        return Err(match first_err {
            Some(PointError::Failed(e)) => e,
            Some(PointError::Panicked(m)) => Error::NoSolution(format!("every point failed; first panic: {m}")),
            None => Error::Configuration("sweep list is empty".into()),
        });
    }
    Ok(ok)
}

fn floquet_defaults(o: &FloquetOptions) -> Value {
    json!({
        "n_steps": o.n_steps,
        "n_times": o.n_times,
        "scheme": format!("{:?}", o.scheme),
        "convergence_tol": o.convergence_tol,
        "tracking_threshold": floquet::TRACKING_THRESHOLD,
        "degeneracy_flag": floquet::DEGENERACY_FLAG,
    })
}

pub fn run(exp: Experiment, ctx: &Context) -> Result<Outcome> {
    match exp {
        Experiment::Poincare => poincare(ctx),
        Experiment::Lyapunov => lyapunov(ctx),
        Experiment::FloquetSweep => floquet_sweep(ctx),
        Experiment::Husimi => husimi(ctx),
        Experiment::LevelStats => level_stats(ctx),
        Experiment::Rates => rates(ctx),
        Experiment::SteadyState => steady_state(ctx),
        Experiment::Dephasing => dephasing(ctx),
        Experiment::Dispersion => dispersion_exp(ctx),
        Experiment::CqedGrid => cqed_grid(ctx),
        Experiment::CavityPull => cavity_pull(ctx),
        Experiment::Ncrit => ncrit(ctx),
        Experiment::DipoleStats => dipole_stats(ctx),
        Experiment::UndrivenFolded => undriven_folded(ctx),
    }
}

fn classical_starts(ctx: &Context, ng_tilde: f64) -> Result<Vec<PhasePoint>> {
    let c = &ctx.cfg.classical;
    let count = c.starts.unwrap_or(ctx.pick(60, 20));
    if count == 0 {
        return Err(Error::Configuration("classical.starts must be positive".into()));
    }
    match c.energy_shell {
        None => Ok(classical::default_starts(count, ng_tilde)),
        Some([lo, hi]) => {
            if !(hi > lo) || lo < 0.0 {
                return Err(Error::Configuration("classical.energy_shell needs 0 <= lo < hi".into()));
            }
            let mut rng = rand::rngs::StdRng::seed_from_u64(ctx.seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let phi = rng.gen_range(-PI..PI);
                let e = rng.gen_range(lo..hi);
                let kinetic = e - (1.0 - phi.cos());
                if kinetic < 0.0 {
                    continue;
                }
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                out.push(PhasePoint::new(phi, ng_tilde + sign * (2.0 * kinetic).sqrt()));
            }
            Ok(out)
        }
    }
}

fn poincare(ctx: &Context) -> Result<Outcome> {
    let r = rescale(&ctx.transmon)?;
    let c = &ctx.cfg.classical;
    let periods = c.n_periods.unwrap_or(ctx.pick(500, 200));
    let steps = c.steps_per_period.unwrap_or(classical::DEFAULT_STEPS_PER_PERIOD);
    let t0 = c.t0_fraction.unwrap_or(0.125);
    let starts = classical_starts(ctx, r.ng_tilde)?;
    let mut out = Outcome::default();
    let res = sweep(&starts, |s| classical::poincare_section_with(&[*s], &r, periods, t0, steps));
    let indexed: Vec<(usize, PhasePoint)> = starts.iter().copied().enumerate().collect();
    let ok = partition(&indexed, res, |(i, _)| format!("start {i}"), &mut out)?;
    let mut t = Table::new("section", &["start_id", "period_index", "phi", "n"]);
    for ((i, _), sec) in ok {
        for (k, p) in sec.points[0].iter().enumerate() {
            t.push(vec![i.into(), k.into(), p.phi.into(), p.n.into()]);
        }
    }
    out.tables.push(t);
    out.defaults = json!({"n_periods": periods, "steps_per_period": steps, "t0_fraction": t0});
    Ok(out)
}

fn lyapunov(ctx: &Context) -> Result<Outcome> {
    let r = rescale(&ctx.transmon)?;
    let c = &ctx.cfg.classical;
    let periods = c.n_periods.unwrap_or(ctx.pick(2000, 500));
    let steps = c.steps_per_period.unwrap_or(classical::DEFAULT_STEPS_PER_PERIOD);
    let starts = classical_starts(ctx, r.ng_tilde)?;
    let threshold = classical::chaos_threshold(None);
    let mut out = Outcome::default();
    let res = sweep(&starts, |s| classical::lyapunov_with(*s, &r, periods, steps));
    let indexed: Vec<(usize, PhasePoint)> = starts.iter().copied().enumerate().collect();
    let ok = partition(&indexed, res, |(i, _)| format!("start {i}"), &mut out)?;
    let mut t = Table::new("lyapunov", &["start_id", "phi0", "n0", "lambda", "energy_over_EJ", "chaotic"]);
    for ((i, s), lambda) in ok {
        let e = classical::pendulum_energy(s, r.ng_tilde);
        t.push(vec![i.into(), s.phi.into(), s.n.into(), lambda.into(), e.into(), (lambda > threshold).into()]);
    }
    out.tables.push(t);
    out.defaults = json!({"n_periods": periods, "steps_per_period": steps, "chaos_threshold": threshold});
    Ok(out)
}

fn solve_at(ctx: &Context, eps: f64, keep: bool) -> Result<FloquetSolution> {
    let opts = FloquetOptions { keep_samples: keep, ..ctx.floquet };
    floquet::solve_transmon(&ctx.transmon.with_eps_tilde(eps), &ctx.basis, &opts)
}

/// Solves along a drive sweep and tracks the given undriven levels.
fn tracked_sweep(
    ctx: &Context,
    eps: &[f64],
    levels: usize,
    keep: bool,
    out: &mut Outcome,
) -> Result<(Vec<f64>, Vec<FloquetSolution>, Vec<Vec<floquet::TrackStep>>)> {
    let res = sweep(eps, |&e| solve_at(ctx, e, keep));
    // Tracking needs an unbroken sweep, so any failure ends the run.
    let mut sols = Vec::with_capacity(eps.len());
    for (i, r) in res.into_iter().enumerate() {
        match r {
            Ok(s) => sols.push(s),
            Err(e) => {
                out.failed.push(FailedPoint { index: i, label: format!("eps_tilde {}", eps[i]), error: e.to_string() });
                return Err(match e {
                    PointError::Failed(err) => err,
                    PointError::Panicked(m) => Error::NoSolution(m),
                });
            }
        }
    }
    let p0 = ctx.transmon.with_eps_tilde(eps[0]);
    let seeds = floquet::static_seeds(&sols[0], &p0, &ctx.basis, levels)?;
    let mut tracker = Tracker::new(&sols[0], &seeds)?;
    let mut steps = vec![seeds.iter().map(|&s| floquet::TrackStep { index: s, overlap: 1.0, confident: true }).collect::<Vec<_>>()];
    for s in &sols[1..] {
        steps.push(tracker.push(s));
    }
    Ok((eps.to_vec(), sols, steps))
}

fn floquet_sweep(ctx: &Context) -> Result<Outcome> {
    let eps = ctx.eps_grid((0..=ctx.pick(260, 60)).map(|k| k as f64 * ctx.pick(0.005, 0.02)).collect())?;
    let mut out = Outcome::default();
    let (eps, sols, steps) = tracked_sweep(ctx, &eps, 2, false, &mut out)?;
    let ej = ctx.transmon.e_j;
    let mut modes = Table::new("modes", &["eps_d", "state_index", "quasienergy", "mean_energy_over_EJ", "tracked_flag"]);
    let mut track = Table::new("tracking", &["eps_d", "level", "state_index", "overlap", "confident", "mean_energy_over_EJ"]);
    let mut first_loss: Vec<Option<f64>> = vec![None; 2];
    for ((e, sol), st) in eps.iter().zip(&sols).zip(&steps) {
        let me = sol.mean_energy_over_ej(ej);
        for k in 0..sol.n_modes() {
            let tracked = st.iter().any(|s| s.index == k && s.confident);
            modes.push(vec![(*e).into(), k.into(), (sol.quasienergies[k] / GHZ).into(), me[k].into(), tracked.into()]);
        }
        for (level, s) in st.iter().enumerate() {
            if !s.confident && first_loss[level].is_none() {
                first_loss[level] = Some(*e);
            }
            track.push(vec![(*e).into(), level.into(), s.index.into(), s.overlap.into(), s.confident.into(), me[s.index].into()]);
        }
    }
    out.tables.push(modes);
    out.tables.push(track);
    out.json.push(("thresholds".into(), json!({"ground_loss_eps_tilde": first_loss[0], "excited_loss_eps_tilde": first_loss[1]})));
    out.defaults = floquet_defaults(&ctx.floquet);
    Ok(out)
}

fn husimi(ctx: &Context) -> Result<Outcome> {
    let h = &ctx.cfg.husimi;
    let levels = h.levels.clone().unwrap_or_else(|| vec![0, 1]);
    let n = h.grid.unwrap_or(ctx.pick(phasespace::DEFAULT_GRID, 101));
    let [n_min, n_max] = h.n_window.unwrap_or([phasespace::DEFAULT_N_WINDOW.0, phasespace::DEFAULT_N_WINDOW.1]);
    let frac = h.time_fraction.unwrap_or(phasespace::DEFAULT_TIME_FRACTION);
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::Configuration("husimi.time_fraction must lie in [0, 1)".into()));
    }
    let eps = ctx.drive_or(0.5);
    let p = ctx.transmon.with_eps_tilde(eps);
    let sol = floquet::solve_transmon(&p, &ctx.basis, &ctx.floquet)?;
    let seeds = floquet::static_seeds(&sol, &p, &ctx.basis, levels.iter().max().map_or(0, |m| m + 1))?;
    let s = ((frac * sol.n_times as f64).round() as usize) % sol.n_times;
    let spec = GridSpec { n_phi: n, n_n: n, n_min, n_max };
    let hbar = ctx.transmon.hbar_eff();
    let mut t = Table::new("husimi", &["phi", "n", "Q", "level", "state_index"]);
    let mut out = Outcome::default();
    for &level in &levels {
        let mode = seeds[level];
        let q = phasespace::husimi(sol.modes_t[s].column(mode), &spec, hbar, &ctx.basis, sol.sample_times[s])?;
        for (i, nv) in q.n.iter().enumerate() {
            for (j, ph) in q.phi.iter().enumerate() {
                t.push(vec![(*ph).into(), (*nv).into(), q.values[[i, j]].into(), level.into(), mode.into()]);
            }
        }
        let norm = q.normalization();
        if (norm - 1.0).abs() > 0.05 {
            out.warnings.push(format!("level {level}: Husimi mass {norm:.3} inside the window"));
        }
    }
    out.tables.push(t);
    out.defaults = json!({"eps_tilde": eps, "grid": n, "n_window": [n_min, n_max], "time_fraction": frac, "floquet": floquet_defaults(&ctx.floquet)});
    Ok(out)
}

fn level_stats(ctx: &Context) -> Result<Outcome> {
    let ls = &ctx.cfg.level_stats;
    let samples = ls.samples.unwrap_or(ctx.pick(200, 50));
    let window = ls.window.map(|w| (w[0], w[1])).unwrap_or(DEFAULT_WINDOW);
    if samples < chaosmetrics::MIN_ENSEMBLE_SAMPLES {
        return Err(Error::Configuration(format!(
            "level_stats.samples = {samples} below {}",
            chaosmetrics::MIN_ENSEMBLE_SAMPLES
        )));
    }
    let ng = chaosmetrics::ng_grid(samples);
    let mut out = Outcome::default();
    let opts = FloquetOptions { keep_samples: false, ..ctx.floquet };
    let mut spac = Table::new("spacings", &["ng", "spacing", "case"]);
    let mut summary = serde_json::Map::new();
    let driven = ctx.drive_or(0.5);
    for (case, eps) in [("driven", driven), ("undriven", 0.0)] {
        let base = ctx.transmon.with_eps_tilde(eps);
        let res = sweep(&ng, |&g| {
            let p = base.with_ng(g);
            let sol = floquet::solve_transmon(&p, &ctx.basis, &opts)?;
            Ok(chaosmetrics::sample_from_solution(&sol, p.e_j, window, g))
        });
        let ok = partition(&ng, res, |g| format!("{case} n_g {g}"), &mut out)?;
        let ens = chaosmetrics::SpacingEnsemble { samples: ok.into_iter().map(|(_, s)| s).collect(), window };
        for s in &ens.samples {
            for x in &s.spacings {
                spac.push(vec![s.n_g.into(), (*x).into(), case.into()]);
            }
        }
        let pooled = ens.pooled();
        let ks = |r| chaosmetrics::distribution_distance(&pooled, r);
        summary.insert(
            case.into(),
            json!({
                "eps_tilde": eps,
                "samples": ens.samples.len(),
                "spacings": pooled.len(),
                "counts": ens.samples.iter().map(|s| s.count).collect::<Vec<_>>(),
                "mean_gap_ratio": ens.mean_gap_ratio(),
                "ks_poisson": ks(Reference::Poisson)?,
                "ks_wigner_dyson": ks(Reference::WignerDyson)?,
            }),
        );
    }
    out.tables.push(spac);
    out.json.push(("summary".into(), Value::Object(summary)));
    out.defaults = json!({"eps_tilde": driven, "samples": samples, "window": [window.0, window.1], "floquet": floquet_defaults(&ctx.floquet)});
    Ok(out)
}

fn lowest_by_mean_energy(sol: &FloquetSolution, count: usize) -> Vec<usize> {
    sol.order_by_mean_energy().into_iter().take(count).collect()
}

fn rates(ctx: &Context) -> Result<Outcome> {
    let states = ctx.cfg.rates.states.unwrap_or(20);
    let eps = ctx.drive_or(0.4);
    let p = ctx.transmon.with_eps_tilde(eps);
    let sol = floquet::solve_transmon(&p, &ctx.basis, &ctx.floquet)?;
    let el = dissipation::matrix_elements(&sol, &ctx.basis, None)?;
    let bath = BathSpec::for_transmon(&p, &ctx.basis, ctx.temperature_k())?;
    let rm = dissipation::rates(&el, &bath);
    let mixed = el.mixed_ratio();
    let order = lowest_by_mean_energy(&sol, states);
    let mut t = Table::new(
        "rates",
        &["i", "j", "gamma_even_k", "gamma_odd_k", "gamma_total", "mixed_ratio", "i_state_index", "j_state_index"],
    );
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate() {
            if i == j {
                continue;
            }
            t.push(vec![
                a.into(),
                b.into(),
                rm.even[[i, j]].into(),
                rm.odd[[i, j]].into(),
                rm.total[[i, j]].into(),
                mixed[[i, j]].into(),
                i.into(),
                j.into(),
            ]);
        }
    }
    let mut out = Outcome::default();
    out.tables.push(t);
    out.defaults = json!({
        "eps_tilde": eps,
        "states": states,
        "temperature_K": bath.temperature_k,
        "bath_coupling": bath.coupling,
        "omega_c_GHz": bath.omega_c / GHZ,
        "omega_ref_GHz": bath.omega_ref / GHZ,
        "k_max": el.k_max,
        "alias_tolerance": dissipation::ALIAS_TOLERANCE,
        "harmonic_floor": dissipation::HARMONIC_FLOOR,
        "floquet": floquet_defaults(&ctx.floquet),
    });
    Ok(out)
}

fn steady_state(ctx: &Context) -> Result<Outcome> {
    let eps = ctx.eps_grid(vec![0.0, ctx.drive_or(0.4)])?;
    let t_k = ctx.temperature_k();
    let mut out = Outcome::default();
    let res = sweep(&eps, |&e| {
        let p = ctx.transmon.with_eps_tilde(e);
        let sol = floquet::solve_transmon(&p, &ctx.basis, &ctx.floquet)?;
        let el = dissipation::matrix_elements(&sol, &ctx.basis, None)?;
        let bath = BathSpec::for_transmon(&p, &ctx.basis, t_k)?;
        let st = dissipation::steady_state(&dissipation::rates(&el, &bath))?;
        Ok((sol.mean_energy_over_ej(p.e_j).to_vec(), sol.order_by_mean_energy(), st))
    });
    let ok = partition(&eps, res, |e| format!("eps_tilde {e}"), &mut out)?;
    let mut pops = Table::new("populations", &["state_index", "mean_energy_over_EJ", "population", "eps_d", "mode"]);
    let mut summary = Table::new("summary", &["eps_d", "occupied_modes", "residual", "closed_classes"]);
    for (e, (me, order, st)) in ok {
        for (rank, &k) in order.iter().enumerate() {
            pops.push(vec![rank.into(), me[k].into(), st.populations[k].into(), e.into(), k.into()]);
        }
        summary.push(vec![e.into(), st.occupied_modes.into(), st.residual.into(), st.components.len().into()]);
        if let Some(w) = st.warning {
            out.warnings.push(format!("eps_tilde {e}: {w}"));
        }
    }
    out.tables.push(pops);
    out.tables.push(summary);
    out.defaults = json!({"temperature_K": t_k, "floquet": floquet_defaults(&ctx.floquet)});
    Ok(out)
}

fn dephasing(ctx: &Context) -> Result<Outcome> {
    let eps = ctx.eps_grid((0..=ctx.pick(40, 10)).map(|k| k as f64 * ctx.pick(0.01, 0.04)).collect())?;
    let mut out = Outcome::default();
    let (eps, sols, steps) = tracked_sweep(ctx, &eps, 2, true, &mut out)?;
    let mut noise = NoiseSpec::for_transmon(&ctx.transmon, &ctx.basis)?;
    let n = &ctx.cfg.noise;
    noise.a_e = n.a_e.unwrap_or(noise.a_e);
    noise.log_factor = n.log_factor.unwrap_or(noise.log_factor);
    noise.dielectric_strength = n.dielectric.unwrap_or(noise.dielectric_strength);
    let items: Vec<(usize, f64)> = eps.iter().copied().enumerate().collect();
    let res = sweep(&items, |&(i, _)| dissipation::matrix_elements(&sols[i], &ctx.basis, None));
    let ok = partition(&items, res, |(_, e)| format!("eps_tilde {e}"), &mut out)?;
    let mut tracked = true;
    let mut t = Table::new("dephasing", &["eps_d", "gamma_phi_per_ns", "one_over_f", "dielectric", "low_confidence"]);
    for ((i, e), el) in ok {
        let st = &steps[i];
        tracked &= st.iter().all(|s| s.confident);
        let d = dissipation::dephasing_rate(&el, st[0].index, st[1].index, ctx.transmon.e_c, &noise, tracked);
        t.push(vec![e.into(), d.gamma_phi.into(), d.one_over_f.into(), d.dielectric.into(), d.low_confidence.into()]);
    }
    out.tables.push(t);
    out.defaults = json!({
        "A_e": noise.a_e,
        "log_factor": noise.log_factor,
        "dielectric_per_ns": noise.dielectric_strength,
        "floquet": floquet_defaults(&ctx.floquet),
    });
    Ok(out)
}

fn dispersion_exp(ctx: &Context) -> Result<Outcome> {
    let d = &ctx.cfg.dispersion;
    let level = d.level.unwrap_or(1);
    let points = d.ng_points.unwrap_or(ctx.pick(128, dispersion::MIN_NG_POINTS));
    let n_max = d.n_max.unwrap_or(5);
    let opts = FloquetOptions { keep_samples: false, ..ctx.floquet };
    let eps = ctx.drive_or(0.4);
    let driven = dispersion::band(level, &ctx.transmon.with_eps_tilde(eps), &ctx.basis, points, &opts)?;
    let undriven = dispersion::undriven_band(level, &ctx.transmon.with_drive(0.0), &ctx.basis, points)?;
    let mut band = Table::new("band", &["ng", "energy", "spike_flag", "case", "overlap", "low_confidence"]);
    let mut slips = Table::new("phase-slips", &["n", "abs_tn", "case"]);
    let mut summary = Table::new("summary", &["case", "dispersion_GHz", "t5_over_t1"]);
    for (case, b) in [("driven", &driven), ("undriven", &undriven)] {
        for k in 0..b.ng.len() {
            band.push(vec![
                b.ng[k].into(),
                (b.energy[k] / GHZ).into(),
                b.spike[k].into(),
                case.into(),
                b.overlap[k].into(),
                b.low_confidence[k].into(),
            ]);
        }
        let sp = dispersion::phase_slip_spectrum(b, n_max)?;
        for n in 0..=n_max {
            slips.push(vec![n.into(), (sp.abs(n) / GHZ).into(), case.into()]);
        }
        let ratio = if n_max >= 5 { sp.abs(5) / sp.abs(1) } else { f64::NAN };
        summary.push(vec![case.into(), (b.dispersion / GHZ).into(), ratio.into()]);
    }
    let mut out = Outcome::default();
    out.tables.push(band);
    out.tables.push(slips);
    out.tables.push(summary);
    out.defaults = json!({"eps_tilde": eps, "level": level, "ng_points": points, "n_max": n_max, "floquet": floquet_defaults(&ctx.floquet)});
    Ok(out)
}

fn cqed_setup(ctx: &Context, eps: f64) -> Result<(cqed::CqedParams, cqed::CqedOptions, f64)> {
    ctx.cfg.cqed.resolve(ctx.transmon.with_eps_tilde(eps), ctx.resolved.charge_cutoff, ctx.preset)
}

fn cqed_defaults(p: &cqed::CqedParams, o: &cqed::CqedOptions, cutoff: f64) -> Value {
    json!({
        "omega_a_GHz": p.omega_a / GHZ,
        "g_GHz": p.g / GHZ,
        "kappa_MHz": p.kappa / GHZ * 1e3,
        "dims": [p.dims.0, p.dims.1],
        "nr_cutoff": cutoff,
        "k_max": o.k_max,
        "vacuum_purity": cqed::VACUUM_PURITY,
        "vacuum_max_nr": cqed::VACUUM_MAX_NR,
        "floquet": floquet_defaults(&o.floquet),
    })
}

fn cqed_grid(ctx: &Context) -> Result<Outcome> {
    let eps = ctx.drive_or(0.0);
    let (p, o, cutoff) = cqed_setup(ctx, eps)?;
    let sol = cqed::cqed_floquet(&p, &o)?;
    let dynm = cqed::resonator_rates_and_steady_state(&sol, cutoff)?;
    let mut grid = Table::new("grid", &["mode", "Nt_avg", "Nr_avg", "purity", "steady_pop", "comm_error"]);
    for g in cqed::grid(&sol, Some(&dynm)) {
        grid.push(vec![g.mode.into(), g.nt_avg.into(), g.nr_avg.into(), g.purity.into(), g.steady_pop.into(), g.comm_error.into()]);
    }
    let mut arrows = Table::new("rates", &["from", "to", "rate_over_kappa"]);
    let n = sol.n_modes();
    for j in 0..n {
        for i in 0..n {
            let r = dynm.rates.total[[i, j]] / p.kappa;
            if r > 1e-3 {
                arrows.push(vec![j.into(), i.into(), r.into()]);
            }
        }
    }
    let vac = sol.dressed_vacuum();
    let mut out = Outcome::default();
    if let Some(w) = &dynm.steady.warning {
        out.warnings.push(w.clone());
    }
    out.tables.push(grid);
    out.tables.push(arrows);
    out.json.push((
        "steady".into(),
        json!({
            "eps_tilde": eps,
            "dressed_vacuum_mode": vac,
            "dressed_vacuum_population": dynm.steady.populations[vac],
            "occupied_modes": dynm.occupied_modes,
            "steady_Nt": dynm.steady_nt,
            "steady_Nr": dynm.steady_nr,
            "steady_comm_error": dynm.steady_comm_error,
            "out_of_band": sol.out_of_band,
        }),
    ));
    out.defaults = cqed_defaults(&p, &o, cutoff);
    Ok(out)
}

fn cavity_pull(ctx: &Context) -> Result<Outcome> {
    let eps = ctx.eps_grid((0..=ctx.pick(20, 5)).map(|k| k as f64 * 0.05).collect())?;
    let (p0, o, cutoff) = cqed_setup(ctx, 0.0)?;
    let mut out = Outcome::default();
    let point = |e: f64| -> Result<(CqedSolution, cqed::PullRecords, Vec<f64>, Vec<(usize, f64, f64)>)> {
        let p = p0.with_eps_tilde(e);
        let sol = cqed::cqed_floquet(&p, &o)?;
        let pulls = cqed::cavity_pull_spectroscopy(&sol)?;
        let tsol = floquet::solve_transmon(&p.transmon, &p.charge_basis(), &ctx.floquet)?;
        let chi = cqed::perturbative_pull(&dissipation::matrix_elements(&tsol, &p.charge_basis(), None)?, p.g, p.omega_a);
        let pt = pulls.records.iter().map(|r| chi[tsol.best_match(&sol.vacuum_component(r.mode)).0].chi).collect();
        let dynm = cqed::resonator_rates_and_steady_state(&sol, cutoff)?;
        let el = &sol.resonator_elements;
        let kk = el.k_max as i64;
        let mut response = Vec::new();
        for &i in &dynm.active {
            let pi = dynm.steady.populations[i];
            let mut best = (0.0, 0.0);
            for j in 0..sol.n_modes() {
                for k in -kk..=kk {
                    let w = el.get(i, j, k).norm_sqr();
                    if el.delta(i, j, k) > 0.0 && w > best.0 {
                        best = (w, el.delta(i, j, k));
                    }
                }
            }
            if pi * best.0 > 1e-3 {
                response.push((i, pi * best.0, best.1 - p.omega_a));
            }
        }
        Ok((sol, pulls, pt, response))
    };
    let res = sweep(&eps, |&e| point(e));
    let ok = partition(&eps, res, |e| format!("eps_tilde {e}"), &mut out)?;
    let mut t = Table::new("pull", &["state", "pull_MHz", "weight", "purity", "eps_d", "Nt_avg", "perturbative_MHz"]);
    let mut resp = Table::new("response", &["state", "weight", "pull_MHz", "eps_d"]);
    for (e, (_, pulls, pt, response)) in ok {
        if pulls.empty {
            out.warnings.push(format!("eps_tilde {e}: no vacuum-like mode"));
        }
        for (r, chi) in pulls.records.iter().zip(pt) {
            t.push(vec![
                r.mode.into(),
                (r.pull / GHZ * 1e3).into(),
                r.rate.into(),
                r.purity.into(),
                e.into(),
                r.nt_avg.into(),
                (chi / GHZ * 1e3).into(),
            ]);
        }
        for (i, w, pull) in response {
            resp.push(vec![i.into(), w.into(), (pull / GHZ * 1e3).into(), e.into()]);
        }
    }
    out.tables.push(t);
    out.tables.push(resp);
    out.defaults = cqed_defaults(&p0, &o, cutoff);
    Ok(out)
}

fn ncrit(ctx: &Context) -> Result<Outcome> {
    let n = &ctx.cfg.ncrit;
    let g = n.g_ghz.unwrap_or(0.25);
    let wd = n.omega_d_ghz.unwrap_or(7.5);
    let nch = n.n_ch.unwrap_or(12);
    let c = cqed::critical_photon_number(g * GHZ, wd * GHZ, nch)?;
    let mut t = Table::new("ncrit", &["g_GHz", "omega_d_GHz", "n_ch", "g_eff_GHz", "delta_eff_GHz", "n_crit", "n_crit_balance"]);
    t.push(vec![g.into(), wd.into(), nch.into(), (c.g_eff / GHZ).into(), (c.delta_eff / GHZ).into(), c.n_crit.into(), c.n_crit_balance.into()]);
    let mut out = Outcome::default();
    out.tables.push(t);
    out.json.push((
        "ncrit".into(),
        json!({
            "g_GHz": g,
            "omega_d_GHz": wd,
            "n_ch": nch,
            "g_eff_GHz": c.g_eff / GHZ,
            "delta_eff_GHz": c.delta_eff / GHZ,
            "n_crit": c.n_crit,
            "n_crit_balance": c.n_crit_balance,
        }),
    ));
    out.defaults = json!({});
    Ok(out)
}

fn dipole_stats(ctx: &Context) -> Result<Outcome> {
    let m = ctx.cfg.dipole.m.unwrap_or(25);
    let eps = ctx.eps_grid((0..=ctx.pick(60, 15)).map(|k| k as f64 * ctx.pick(0.05, 0.2)).collect())?;
    let mut out = Outcome::default();
    let opts = FloquetOptions { keep_samples: false, ..ctx.floquet };
    let res = sweep(&eps, |&e| {
        let sol = floquet::solve_transmon(&ctx.transmon.with_eps_tilde(e), &ctx.basis, &opts)?;
        cqed::dipole_statistics(cqed::floquet_charge_matrix(&sol, &ctx.basis).view(), m)
    });
    let ok = partition(&eps, res, |e| format!("eps_tilde {e}"), &mut out)?;
    let mut per = Table::new("states", &["eps_d", "state_index", "n_i", "n_i_offdiag"]);
    let mut summary = Table::new("summary", &["eps_d", "mean", "mean_offdiag", "rmt_prediction"]);
    for (e, st) in ok {
        for i in 0..m {
            per.push(vec![e.into(), i.into(), st.per_state[i].into(), st.per_state_offdiag[i].into()]);
        }
        summary.push(vec![e.into(), st.mean.into(), st.mean_offdiag.into(), st.rmt_prediction.into()]);
    }
    out.tables.push(summary);
    out.tables.push(per);
    out.defaults = json!({"M": m, "floquet": floquet_defaults(&opts)});
    Ok(out)
}

fn undriven_folded(ctx: &Context) -> Result<Outcome> {
    let (p, o, cutoff) = cqed_setup(ctx, 0.0)?;
    let with_loss = ctx.cfg.cqed.with_loss.unwrap_or(false);
    let levels = cqed::undriven_spectrum_folded(&p, with_loss)?;
    let mut t = Table::new("folded", &["energy_GHz", "folded_GHz", "linewidth_MHz", "Nt", "Nr"]);
    for l in levels {
        t.push(vec![(l.energy / GHZ).into(), (l.folded / GHZ).into(), (l.linewidth / GHZ * 1e3).into(), l.nt.into(), l.nr.into()]);
    }
    let mut out = Outcome::default();
    out.tables.push(t);
    out.defaults = json!({"with_loss": with_loss, "max_nt": cqed::FOLDED_MAX_NT, "cqed": cqed_defaults(&p, &o, cutoff)});
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_isolates_panics_and_keeps_order() {
        let pts: Vec<i32> = (0..20).collect();
        let res = sweep(&pts, |&x| {
            if x == 7 {
                panic!("boom");
            }
            if x == 9 {
                return Err(Error::Accuracy("guard".into()));
            }
            Ok(x * 2)
        });
        assert!(matches!(&res[7], Err(PointError::Panicked(m)) if m == "boom"));
        assert!(matches!(&res[9], Err(PointError::Failed(Error::Accuracy(_)))));
        assert_eq!(res[3].as_ref().unwrap(), &6);
        let mut out = Outcome::default();
        let ok = partition(&pts, res, |x| x.to_string(), &mut out).unwrap();
        assert_eq!(ok.len(), 18);
        assert_eq!(out.failed.iter().map(|f| f.index).collect::<Vec<_>>(), vec![7, 9]);
    }

    #[test]
    fn all_failures_is_an_error() {
        let pts = [1, 2];
        let res = sweep(&pts, |_| -> Result<()> { Err(Error::Accuracy("x".into())) });
        let mut out = Outcome::default();
        assert!(matches!(partition(&pts, res, |x| x.to_string(), &mut out), Err(Error::Accuracy(_))));
    }
}
