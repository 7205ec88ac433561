//! Run configuration: a flat `key = value` text format (a TOML-compatible
//! subset) with documented defaults, environment-variable overrides, and
//! helpers that materialize the problem and solver objects.
//!
//! Precedence is defaults < file < environment (`ITERPROJ_<KEY>`) < explicit
//! `set` calls made by the command line.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::march::{EnergyMode, MarchConfig};
use crate::problems::Problem;
use crate::projector::{scheme_parameters, ConvectionMode, SolverParams};

/// The divergence weight may be written in absolute units ("0.001") or as a
/// multiple of the viscosity ("nu", "2nu", "0.5nu").
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSpec {
    Absolute(f64),
    NuMultiple(f64),
}

impl RhoSpec {
    pub fn resolve(self, nu: f64) -> f64 {
        match self {
            RhoSpec::Absolute(v) => v,
            RhoSpec::NuMultiple(m) => m * nu,
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(head) = t.strip_suffix("nu") {
            let head = head.trim();
            if head.is_empty() {
                return Ok(RhoSpec::NuMultiple(1.0));
            }
            return head
                .parse::<f64>()
                .map(RhoSpec::NuMultiple)
                .map_err(|_| Error::Config(format!("bad viscosity multiple in rho '{t}'")));
        }
        t.parse::<f64>()
            .map(RhoSpec::Absolute)
            .map_err(|_| Error::Config(format!("bad rho value '{t}'")))
    }

    fn render(self) -> String {
        match self {
            RhoSpec::Absolute(v) => format!("{v}"),
            RhoSpec::NuMultiple(m) if m == 1.0 => "nu".to_string(),
            RhoSpec::NuMultiple(m) => format!("{m}nu"),
        }
    }
}

/// Viscosity given directly or through the Reynolds number, which is
/// resolved with the problem's velocity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscositySpec {
    Nu(f64),
    Reynolds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// "problem1" (manufactured solution) or "cavity".
    pub problem: String,
    /// Cells per direction.
    pub n: usize,
    pub k: f64,
    pub t_final: f64,
    pub viscosity: ViscositySpec,
    /// Preset name: rotational | standard | uzawa | custom. Presets other
    /// than "custom" override `alpha` (and "rotational"/"standard" also
    /// override `rho`).
    pub scheme: String,
    pub alpha: f64,
    pub rho: RhoSpec,
    pub eps: f64,
    pub iter_max: usize,
    pub convection: ConvectionMode,
    pub accelerate: bool,
    pub out_dir: PathBuf,
    pub assert_energy: EnergyMode,
    /// Seed for randomized auxiliary tooling.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "problem1".to_string(),
            n: 4,
            k: 1e-3,
            t_final: 0.1,
            viscosity: ViscositySpec::Nu(1.0),
            scheme: "custom".to_string(),
            alpha: 1.5,
            rho: RhoSpec::NuMultiple(1.0),
            eps: 1e-2,
            iter_max: 50,
            convection: ConvectionMode::SiSkew,
            accelerate: false,
            out_dir: PathBuf::from("out"),
            assert_energy: EnergyMode::Warn,
            seed: 42,
        }
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad integer for '{key}': '{value}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad integer for '{key}': '{value}'")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad number for '{key}': '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad flag for '{key}': '{value}'"))),
    }
}

pub fn parse_convection(value: &str) -> Result<ConvectionMode> {
    let norm = value.to_ascii_lowercase().replace('-', "_");
    match norm.as_str() {
        "none" | "stokes" => Ok(ConvectionMode::None),
        "si_skew" | "si" => Ok(ConvectionMode::SiSkew),
        "fi_skew" | "fi" => Ok(ConvectionMode::FiSkew),
        "imex_explicit" | "imex" | "explicit" => Ok(ConvectionMode::ImexExplicit),
        _ => Err(Error::Config(format!("unknown convection mode '{value}'"))),
    }
}

pub fn parse_energy_mode(value: &str) -> Result<EnergyMode> {
    match value.to_ascii_lowercase().as_str() {
        "warn" => Ok(EnergyMode::Warn),
        "abort" => Ok(EnergyMode::Abort),
        "off" => Ok(EnergyMode::Off),
        _ => Err(Error::Config(format!(
            "assert_energy must be warn|abort|off, got '{value}'"
        ))),
    }
}

fn energy_mode_name(mode: EnergyMode) -> &'static str {
    match mode {
        EnergyMode::Warn => "warn",
        EnergyMode::Abort => "abort",
        EnergyMode::Off => "off",
    }
}

fn strip_quotes(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2
        && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\'')))
    {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

impl RunConfig {
    /// Applies one key. Unknown keys are errors so typos cannot silently
    /// fall back to defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = strip_quotes(value);
        match key {
            "problem" => self.problem = value.to_string(),
            "n" | "cells" => self.n = parse_usize(key, value)?,
            "k" | "dt" => self.k = parse_f64(key, value)?,
            "t_final" => self.t_final = parse_f64(key, value)?,
            "nu" => self.viscosity = ViscositySpec::Nu(parse_f64(key, value)?),
            "re" | "reynolds" => self.viscosity = ViscositySpec::Reynolds(parse_f64(key, value)?),
            "scheme" => self.scheme = value.to_string(),
            "alpha" => self.alpha = parse_f64(key, value)?,
            "rho" => self.rho = RhoSpec::parse(value)?,
            "eps" | "tolerance" => self.eps = parse_f64(key, value)?,
            "iter_max" => self.iter_max = parse_usize(key, value)?,
            "convection" => self.convection = parse_convection(value)?,
            "accelerate" => self.accelerate = parse_bool(key, value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "assert_energy" => self.assert_energy = parse_energy_mode(value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{source}:{}: expected 'key = value', got '{line}'",
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{source}:{}: {msg}", idx + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, "config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies `ITERPROJ_<KEY>` environment variables, lowest-to-highest in
    /// lexicographic key order for determinism.
    pub fn apply_env(&mut self) -> Result<()> {
        let mut pairs: Vec<(String, String)> = std::env::vars()
            .filter_map(|(k, v)| {
                k.strip_prefix("ITERPROJ_")
                    .map(|rest| (rest.to_ascii_lowercase(), v))
            })
            .collect();
        pairs.sort();
        for (key, value) in pairs {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Writes every key back out; `from_str(serialize())` reproduces the
    /// configuration exactly.
    pub fn serialize(&self) -> String {
        let viscosity = match self.viscosity {
            ViscositySpec::Nu(v) => format!("nu = {v}"),
            ViscositySpec::Reynolds(re) => format!("re = {re}"),
        };
        format!(
            "problem = {}\nn = {}\nk = {}\nt_final = {}\n{}\nscheme = {}\n\
             alpha = {}\nrho = {}\neps = {}\niter_max = {}\nconvection = {}\n\
             accelerate = {}\nout = {}\nassert_energy = {}\nseed = {}\n",
            self.problem,
            self.n,
            self.k,
            self.t_final,
            viscosity,
            self.scheme,
            self.alpha,
            self.rho.render(),
            self.eps,
            self.iter_max,
            self.convection.name(),
            self.accelerate,
            self.out_dir.display(),
            energy_mode_name(self.assert_energy),
            self.seed,
        )
    }

    fn velocity_scale(&self) -> Result<f64> {
        match self.problem.as_str() {
            "problem1" | "manufactured" => Ok(4.6),
            "cavity" => Ok(1.0),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }

    pub fn resolved_nu(&self) -> Result<f64> {
        let nu = match self.viscosity {
            ViscositySpec::Nu(v) => v,
            ViscositySpec::Reynolds(re) => {
                if !(re > 0.0) {
                    return Err(Error::Config(format!("Reynolds number must be positive, got {re}")));
                }
                self.velocity_scale()? / re
            }
        };
        if !(nu > 0.0) {
            return Err(Error::Config(format!("viscosity must be positive, got {nu}")));
        }
        Ok(nu)
    }

    pub fn problem(&self) -> Result<Problem> {
        let nu = self.resolved_nu()?;
        match self.problem.as_str() {
            "problem1" | "manufactured" => Ok(Problem::manufactured(nu)),
            "cavity" => Ok(Problem::cavity(nu)),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }

    /// Resolves the scheme preset and the rho spelling into concrete solver
    /// parameters (validated).
    pub fn solver_params(&self) -> Result<SolverParams> {
        let nu = self.resolved_nu()?;
        let (alpha, rho) = scheme_parameters(&self.scheme, nu, self.alpha, self.rho.resolve(nu))?;
        let mut p = SolverParams::new(alpha, rho, nu, self.k);
        p.eps = self.eps;
        p.iter_max = self.iter_max;
        p.convection = self.convection;
        p.accelerate = self.accelerate;
        p.validate()?;
        Ok(p)
    }

    pub fn march_config(&self) -> MarchConfig {
        MarchConfig {
            t_final: self.t_final,
            energy_mode: self.assert_energy,
            compute_errors: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        self.solver_params()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.problem, "problem1");
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.k, 1e-3);
        assert_eq!(cfg.t_final, 0.1);
        assert_eq!(cfg.viscosity, ViscositySpec::Nu(1.0));
        assert_eq!(cfg.alpha, 1.5);
        assert_eq!(cfg.rho, RhoSpec::NuMultiple(1.0));
        assert_eq!(cfg.eps, 1e-2);
        assert_eq!(cfg.iter_max, 50);
        assert_eq!(cfg.convection, ConvectionMode::SiSkew);
        assert!(!cfg.accelerate);
        assert_eq!(cfg.assert_energy, EnergyMode::Warn);
        // Defaults resolve to the rotational update.
        let p = cfg.solver_params().unwrap();
        assert_eq!((p.alpha, p.rho, p.nu), (1.5, 1.0, 1.0));
    }

    #[test]
    fn parses_keys_comments_and_quotes() {
        let text = "\
# experiment manifest
problem = cavity
n = 8          # cells per direction
k = 0.01
t_final = 1.0
re = 100
convection = fi-skew
out = \"runs/cavity\"
";
        let cfg = RunConfig::from_str(text).unwrap();
        assert_eq!(cfg.problem, "cavity");
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.viscosity, ViscositySpec::Reynolds(100.0));
        assert_eq!(cfg.convection, ConvectionMode::FiSkew);
        assert_eq!(cfg.out_dir, PathBuf::from("runs/cavity"));
        // The untouched keys keep their defaults.
        assert_eq!(cfg.eps, 1e-2);
    }

    #[test]
    fn rho_spellings_resolve_against_the_viscosity() {
        for (text, expect) in [
            ("nu", 0.25),
            ("2nu", 0.5),
            ("0.5 nu", 0.125),
            ("0.001", 0.001),
        ] {
            let spec = RhoSpec::parse(text).unwrap();
            assert_eq!(spec.resolve(0.25), expect, "spelling '{text}'");
        }
        assert!(RhoSpec::parse("two nu").is_err());
    }

    #[test]
    fn reynolds_resolves_through_the_problem_velocity_scale() {
        let mut cfg = RunConfig::default();
        cfg.set("re", "4.6").unwrap();
        assert!((cfg.resolved_nu().unwrap() - 1.0).abs() < 1e-15);

        cfg.set("problem", "cavity").unwrap();
        cfg.set("re", "100").unwrap();
        assert!((cfg.resolved_nu().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn scheme_presets_override_the_weights() {
        let mut cfg = RunConfig::default();
        cfg.set("nu", "0.1").unwrap();
        cfg.set("scheme", "uzawa").unwrap();
        cfg.set("rho", "2nu").unwrap();
        let p = cfg.solver_params().unwrap();
        assert_eq!((p.alpha, p.rho), (0.0, 0.2));

        cfg.set("scheme", "standard").unwrap();
        let p = cfg.solver_params().unwrap();
        assert_eq!((p.alpha, p.rho), (1.5, 0.0));

        cfg.set("scheme", "rotational").unwrap();
        let p = cfg.solver_params().unwrap();
        assert_eq!((p.alpha, p.rho), (1.5, 0.1));
    }

    #[test]
    fn environment_overrides_the_file() {
        let var = "ITERPROJ_ITER_MAX";
        // Process-global: pick a key no other test touches.
        std::env::set_var(var, "123");
        let mut cfg = RunConfig::from_str("iter_max = 7\n").unwrap();
        assert_eq!(cfg.iter_max, 7);
        cfg.apply_env().unwrap();
        assert_eq!(cfg.iter_max, 123);
        std::env::remove_var(var);
    }

    #[test]
    fn round_trip_is_semantically_idempotent() {
        let mut cfg = RunConfig::default();
        for (k, v) in [
            ("problem", "cavity"),
            ("n", "6"),
            ("k", "0.005"),
            ("t_final", "0.5"),
            ("re", "250"),
            ("scheme", "custom"),
            ("alpha", "2.0"),
            ("rho", "0.5nu"),
            ("eps", "1e-6"),
            ("iter_max", "300"),
            ("convection", "imex"),
            ("accelerate", "true"),
            ("out", "results/run7"),
            ("assert_energy", "off"),
            ("seed", "9"),
        ] {
            cfg.set(k, v).unwrap();
        }
        let round = RunConfig::from_str(&cfg.serialize()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn bad_keys_and_values_are_rejected_with_location() {
        let err = RunConfig::from_str("bogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("bogus"));

        let err = RunConfig::from_str("n = four\n").unwrap_err();
        assert!(err.to_string().contains("config:1"));

        let err = RunConfig::from_str("just words\n").unwrap_err();
        assert!(err.to_string().contains("key = value"));

        let mut cfg = RunConfig::default();
        cfg.set("problem", "unknown9").unwrap();
        assert!(cfg.problem().is_err());
        cfg = RunConfig::default();
        cfg.set("re", "-5").unwrap();
        assert!(cfg.resolved_nu().is_err());
    }
}
