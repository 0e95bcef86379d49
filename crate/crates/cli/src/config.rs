//! Run configuration. Keys carry their units (`_GHz`, `_MHz`, `_mK`); rescaled
//! quantities (`inv_hbar`, `*_tilde`) are dimensionless.

use quasichaos_core::cqed::{CqedOptions, CqedParams, CI_DIMS, NR_CUTOFF, PAPER_DIMS};
use quasichaos_core::floquet::{FloquetOptions, Scheme};
use quasichaos_core::model::{drive_from_photons, TransmonParams, DEFAULT_CUTOFF, GHZ, REFERENCE_EC};
use quasichaos_core::Error;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Ci,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub transmon: TransmonSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub floquet: FloquetSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub classical: ClassicalSection,
    #[serde(default)]
    pub bath: BathSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub level_stats: LevelStatsSection,
    #[serde(default)]
    pub husimi: HusimiSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub dispersion: DispersionSection,
    #[serde(default)]
    pub cqed: CqedSection,
    #[serde(default)]
    pub dipole: DipoleSection,
    #[serde(default)]
    pub ncrit: NcritSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSection {
    #[serde(rename = "E_C_GHz")]
    pub e_c_ghz: Option<f64>,
    #[serde(rename = "E_J_GHz")]
    pub e_j_ghz: Option<f64>,
    pub inv_hbar: Option<f64>,
    pub n_g: Option<f64>,
}

/// Drive amplitude as `amplitude_GHz`, `eps_tilde`, or `photons` with `g_GHz`;
/// frequency as `frequency_GHz` or `omega_d_tilde`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(rename = "amplitude_GHz")]
    pub amplitude_ghz: Option<f64>,
    pub eps_tilde: Option<f64>,
    pub photons: Option<f64>,
    #[serde(rename = "g_GHz")]
    pub g_ghz: Option<f64>,
    #[serde(rename = "frequency_GHz")]
    pub frequency_ghz: Option<f64>,
    pub omega_d_tilde: Option<f64>,
}

impl DriveSection {
    pub fn amplitude_given(&self) -> bool {
        self.amplitude_ghz.is_some() || self.eps_tilde.is_some() || self.photons.is_some()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSection {
    pub n_steps: Option<usize>,
    pub n_times: Option<usize>,
    pub scheme: Option<String>,
    pub convergence_tol: Option<f64>,
}

/// Either an explicit list or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, name: &str) -> Result<Vec<f64>, Error> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(Error::Configuration(format!("{name}: need step > 0 and stop >= start")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return Err(Error::Configuration(format!("{name}: sweep list is empty")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Configuration(format!("{name}: non-finite value")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps_tilde: Option<Grid>,
    pub n_g: Option<Grid>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub starts: Option<usize>,
    pub n_periods: Option<usize>,
    pub steps_per_period: Option<usize>,
    pub t0_fraction: Option<f64>,
    /// Draw starts uniformly from `lo < H/E_J < hi` instead of the default line.
    pub energy_shell: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(rename = "temperature_mK")]
    pub temperature_mk: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(rename = "A_e")]
    pub a_e: Option<f64>,
    pub log_factor: Option<f64>,
    #[serde(rename = "dielectric_per_ns")]
    pub dielectric: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelStatsSection {
    pub samples: Option<usize>,
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HusimiSection {
    /// Undriven levels whose Floquet continuations are shown.
    pub levels: Option<Vec<usize>>,
    pub grid: Option<usize>,
    pub n_window: Option<[f64; 2]>,
    pub time_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub states: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub level: Option<usize>,
    pub ng_points: Option<usize>,
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqedSection {
    #[serde(rename = "omega_a_GHz")]
    pub omega_a_ghz: Option<f64>,
    #[serde(rename = "g_GHz")]
    pub g_ghz: Option<f64>,
    #[serde(rename = "kappa_MHz")]
    pub kappa_mhz: Option<f64>,
    pub dims: Option<[usize; 2]>,
    pub n_steps: Option<usize>,
    pub n_times: Option<usize>,
    pub k_max: Option<usize>,
    pub nr_cutoff: Option<f64>,
    /// Include `-i kappa/2 a^dag a` in the folded spectrum.
    pub with_loss: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSection {
    #[serde(rename = "M")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcritSection {
    #[serde(rename = "g_GHz")]
    pub g_ghz: Option<f64>,
    #[serde(rename = "omega_d_GHz")]
    pub omega_d_ghz: Option<f64>,
    pub n_ch: Option<usize>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }
}

/// Fully resolved transmon parameters, echoed in the manifest.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedTransmon {
    #[serde(rename = "E_C_GHz")]
    pub e_c_ghz: f64,
    #[serde(rename = "E_J_GHz")]
    pub e_j_ghz: f64,
    pub inv_hbar: f64,
    #[serde(rename = "omega_d_GHz")]
    pub omega_d_ghz: f64,
    pub omega_d_tilde: f64,
    pub eps_tilde: f64,
    pub n_g: f64,
    pub charge_cutoff: usize,
}

fn exclusive<T: Copy>(a: Option<T>, b: Option<T>, names: &str) -> Result<(Option<T>, Option<T>), Error> {
    if a.is_some() && b.is_some() {
        return Err(Error::Configuration(format!("give only one of {names}")));
    }
    Ok((a, b))
}

impl Config {
    /// Transmon and drive parameters with every default filled in.
    pub fn resolve_transmon(&self) -> Result<(TransmonParams, ResolvedTransmon), Error> {
        let t = &self.transmon;
        let d = &self.drive;
        let e_c = t.e_c_ghz.map(|x| x * GHZ).unwrap_or(REFERENCE_EC);
        let (ej, inv) = exclusive(t.e_j_ghz, t.inv_hbar, "transmon.E_J_GHz, transmon.inv_hbar")?;
        let e_j = match (ej, inv) {
            (Some(x), _) => x * GHZ,
            (_, Some(inv)) => 8.0 * e_c * inv * inv,
            _ => 8.0 * e_c * 9.0,
        };
        let omega_p = (8.0 * e_j * e_c).sqrt();
        let (wd, wt) = exclusive(d.frequency_ghz, d.omega_d_tilde, "drive.frequency_GHz, drive.omega_d_tilde")?;
        let omega_d = wd.map(|x| x * GHZ).or(wt.map(|x| x * omega_p)).unwrap_or(1.34 * omega_p);
        let given = [d.amplitude_ghz.is_some(), d.eps_tilde.is_some(), d.photons.is_some()];
        if given.iter().filter(|&&b| b).count() > 1 {
            return Err(Error::Configuration("give only one of drive.amplitude_GHz, drive.eps_tilde, drive.photons".into()));
        }
        if d.g_ghz.is_some() != d.photons.is_some() {
            return Err(Error::Configuration("drive.photons and drive.g_GHz go together".into()));
        }
        let eps_d = match (d.amplitude_ghz, d.eps_tilde, d.photons) {
            (Some(x), _, _) => x * GHZ,
            (_, Some(x), _) => x * omega_p,
            (_, _, Some(n)) => drive_from_photons(d.g_ghz.unwrap() * GHZ, n)?,
            _ => 0.0,
        };
        let n_g = t.n_g.unwrap_or(0.25);
        let p = TransmonParams::new(e_c, e_j, n_g, eps_d, omega_d)?;
        let r = ResolvedTransmon {
            e_c_ghz: e_c / GHZ,
            e_j_ghz: e_j / GHZ,
            inv_hbar: 1.0 / p.hbar_eff(),
            omega_d_ghz: omega_d / GHZ,
            omega_d_tilde: omega_d / omega_p,
            eps_tilde: eps_d / omega_p,
            n_g,
            charge_cutoff: self.basis.cutoff.unwrap_or(DEFAULT_CUTOFF),
        };
        Ok((p, r))
    }
}

impl FloquetSection {
    pub fn resolve(&self) -> Result<FloquetOptions, Error> {
        let d = FloquetOptions::default();
        let scheme = match self.scheme.as_deref().unwrap_or("magnus4") {
            "magnus4" => Scheme::Magnus4,
            "midpoint" => Scheme::Midpoint,
            "split" => Scheme::Split,
            other => return Err(Error::Configuration(format!("unknown scheme {other:?}"))),
        };
        Ok(FloquetOptions {
            n_steps: self.n_steps.unwrap_or(d.n_steps),
            n_times: self.n_times.unwrap_or(d.n_times),
            scheme,
            keep_samples: true,
            convergence_tol: self.convergence_tol,
        })
    }
}

impl CqedSection {
    pub fn resolve(&self, transmon: TransmonParams, cutoff: usize, preset: Preset) -> Result<(CqedParams, CqedOptions, f64), Error> {
        let dims = self.dims.map(|d| (d[0], d[1])).unwrap_or(match preset {
            Preset::Paper => PAPER_DIMS,
            Preset::Ci => CI_DIMS,
        });
        let mut p = CqedParams::new(
            transmon,
            self.omega_a_ghz.unwrap_or(8.0) * GHZ,
            self.g_ghz.unwrap_or(0.25) * GHZ,
            self.kappa_mhz.unwrap_or(10.0) * 1e-3 * GHZ,
            dims,
        )?;
        p.charge_cutoff = cutoff;
        p.validate()?;
        let mut o = CqedOptions::default();
        if let Some(n) = self.n_steps {
            o.floquet.n_steps = n;
        }
        if let Some(n) = self.n_times {
            o.floquet.n_times = n;
            o.k_max = n / 4;
        }
        if let Some(k) = self.k_max {
            o.k_max = k;
        }
        Ok((p, o, self.nr_cutoff.unwrap_or(NR_CUTOFF)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_reference_transmon() {
        let (p, r) = Config::default().resolve_transmon().unwrap();
        assert!((r.inv_hbar - 3.0).abs() < 1e-12);
        assert!((r.omega_d_ghz - 7.5).abs() < 1e-9);
        assert_eq!(p.eps_d, 0.0);
    }

    #[test]
    fn unit_keys_parse() {
        let c = Config::from_toml("[transmon]\nE_C_GHz = 0.25\nE_J_GHz = 12.5\n[drive]\nfrequency_GHz = 7.0\n[bath]\ntemperature_mK = 20\n").unwrap();
        let (p, r) = c.resolve_transmon().unwrap();
        assert!((p.e_j / p.e_c - 50.0).abs() < 1e-12);
        assert!((r.omega_d_ghz - 7.0).abs() < 1e-12);
        assert_eq!(c.bath.temperature_mk, Some(20.0));
    }

    #[test]
    fn rejects_unknown_keys_and_conflicts() {
        assert!(Config::from_toml("[transmon]\nEJ = 3\n").is_err());
        let c = Config::from_toml("[transmon]\ninv_hbar = 3\nE_J_GHz = 10\n").unwrap();
        assert!(c.resolve_transmon().is_err());
        let c = Config::from_toml("[drive]\neps_tilde = 0.3\namplitude_GHz = 1\n").unwrap();
        assert!(c.resolve_transmon().is_err());
        let c = Config::from_toml("[drive]\nphotons = 4\n").unwrap();
        assert!(c.resolve_transmon().is_err());
    }

    #[test]
    fn photon_number_sets_displaced_frame_amplitude() {
        let c = Config::from_toml("[drive]\nphotons = 4\ng_GHz = 0.25\n").unwrap();
        let (p, _) = c.resolve_transmon().unwrap();
        assert!((p.eps_d - 2.0 * 0.25 * GHZ * 2.0).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = Grid::Range { start: 0.0, stop: 0.3, step: 0.1 };
        assert_eq!(g.values("x").unwrap().len(), 4);
        assert!(Grid::List(vec![]).values("x").is_err());
        let c = Config::from_toml("[sweep]\neps_tilde = { start = 0.0, stop = 1.0, step = 0.5 }\nn_g = [0.1, 0.2]\n").unwrap();
        assert_eq!(c.sweep.eps_tilde.unwrap().values("e").unwrap(), vec![0.0, 0.5, 1.0]);
    }
}
