//! Flat key-value run configuration with dotted section keys.
//!
//! The format is line-oriented: `section.key = value`, `#` starts a comment,
//! blank lines are ignored. Unknown and duplicate keys are errors. Every key
//! mirrors a model symbol; the README carries the symbol-to-key table.
//! Serialization is canonical (fixed key order, round-trip float rendering),
//! so write -> read -> write is a byte-level fixpoint.

use crate::error::CliError;
use crate::format::format_float;
use ionsim_core::analysis::{CoeffSource, Window};
use ionsim_core::dynamics::{IntegratorSpec, SpinBosonMode};
use ionsim_core::quad::Scheme;
use ionsim_core::spectral::QuadratureSpec;
use ionsim_core::stochastic::{EnsembleSpec, Splitting};
use ionsim_core::types::{
    kelvin_to_thermal_freq, CoefficientSet, EnvironmentParams, NoiseParams, SystemParams,
};
use std::collections::HashSet;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    SpinBoson,
    Noise,
    Both,
}

impl Model {
    fn parse(value: &str) -> Result<Self, CliError> {
        match value {
            "spin-boson" => Ok(Model::SpinBoson),
            "noise" => Ok(Model::Noise),
            "both" => Ok(Model::Both),
            other => Err(CliError::config(format!(
                "model must be spin-boson | noise | both, got '{other}'"
            ))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Model::SpinBoson => "spin-boson",
            Model::Noise => "noise",
            Model::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SystemSection {
    pub omega0: Option<f64>,
    pub delta0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvironmentSection {
    pub mass_scale: Option<f64>,
    pub gamma0: Option<f64>,
    pub omega_c: Option<f64>,
    pub kbt: Option<f64>,
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoefficientsSection {
    pub d: Option<f64>,
    pub f: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegratorSection {
    pub method: Option<MethodKind>,
    pub dt: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub t_end: Option<f64>,
    pub store_stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleSection {
    pub realizations: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub store_stride: Option<usize>,
    pub splitting: Option<Splitting>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadSection {
    pub max_frequency: Option<f64>,
    pub max_lag: Option<f64>,
    pub panel_count: Option<usize>,
    pub adaptive: Option<bool>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TauSection {
    pub mass_kg: Option<f64>,
    pub temperature_k: Option<f64>,
    pub delta_x: Option<f64>,
    pub cutoff: Option<f64>,
    pub rates: Option<Vec<f64>>,
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: Option<Model>,
    pub mode: Option<SpinBosonMode>,
    pub renormalize_trace: Option<bool>,
    pub system: Option<SystemSection>,
    pub environment: Option<EnvironmentSection>,
    pub coefficients: Option<CoefficientsSection>,
    pub noise_alpha: Option<f64>,
    pub integrator: Option<IntegratorSection>,
    pub ensemble: Option<EnsembleSection>,
    pub quad: Option<QuadSection>,
    pub window: Option<(f64, f64)>,
    pub sweep_rates: Option<Vec<f64>>,
    pub tau: Option<TauSection>,
    pub output_csv: Option<String>,
    pub output_svg: Option<String>,
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::config(format!("{key}: expected a number, got '{value}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::config(format!("{key}: expected an integer, got '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse::<usize>()
        .map_err(|_| CliError::config(format!("{key}: expected an integer, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(CliError::config(format!(
            "{key}: expected true|false, got '{other}'"
        ))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let items: Result<Vec<f64>, CliError> =
        value.split(',').map(|s| parse_f64(key, s.trim())).collect();
    let items = items?;
    if items.is_empty() {
        return Err(CliError::config(format!("{key}: list must not be empty")));
    }
    Ok(items)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    line_no + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::config(format!("duplicate key '{key}'")));
            }
            config.apply(key, value)?;
        }
        if config.environment.is_some() && config.coefficients.is_some() {
            return Err(CliError::config(
                "environment.* and coefficients.* are mutually exclusive: specify the \
                 spectral environment or an explicit coefficient set, not both",
            ));
        }
        if let Some(env) = &config.environment {
            if env.kbt.is_some() && env.temperature_k.is_some() {
                return Err(CliError::config(
                    "environment.kBT and environment.temperature_K are mutually exclusive",
                ));
            }
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "model" => self.model = Some(Model::parse(value)?),
            "mode" => {
                self.mode = Some(match value {
                    "hermitian" => SpinBosonMode::Hermitian,
                    "verbatim" => SpinBosonMode::Verbatim,
                    other => {
                        return Err(CliError::config(format!(
                            "mode must be hermitian | verbatim, got '{other}'"
                        )))
                    }
                })
            }
            "renormalize_trace" => self.renormalize_trace = Some(parse_bool(key, value)?),
            "system.omega0" => {
                self.system.get_or_insert_with(Default::default).omega0 =
                    Some(parse_f64(key, value)?)
            }
            "system.delta0" => {
                self.system.get_or_insert_with(Default::default).delta0 =
                    Some(parse_f64(key, value)?)
            }
            "environment.M" => {
                self.environment
                    .get_or_insert_with(Default::default)
                    .mass_scale = Some(parse_f64(key, value)?)
            }
            "environment.gamma0" => {
                self.environment.get_or_insert_with(Default::default).gamma0 =
                    Some(parse_f64(key, value)?)
            }
            "environment.omega_c" => {
                self.environment
                    .get_or_insert_with(Default::default)
                    .omega_c = Some(parse_f64(key, value)?)
            }
            "environment.kBT" => {
                self.environment.get_or_insert_with(Default::default).kbt =
                    Some(parse_f64(key, value)?)
            }
            "environment.temperature_K" => {
                self.environment
                    .get_or_insert_with(Default::default)
                    .temperature_k = Some(parse_f64(key, value)?)
            }
            "coefficients.D" => {
                self.coefficients.get_or_insert_with(Default::default).d =
                    Some(parse_f64(key, value)?)
            }
            "coefficients.f" => {
                self.coefficients.get_or_insert_with(Default::default).f =
                    Some(parse_f64(key, value)?)
            }
            "coefficients.gamma" => {
                self.coefficients.get_or_insert_with(Default::default).gamma =
                    Some(parse_f64(key, value)?)
            }
            "noise.alpha" => self.noise_alpha = Some(parse_f64(key, value)?),
            "integrator.method" => {
                self.integrator.get_or_insert_with(Default::default).method = Some(match value {
                    "fixed" => MethodKind::Fixed,
                    "adaptive" => MethodKind::Adaptive,
                    other => {
                        return Err(CliError::config(format!(
                            "integrator.method must be fixed | adaptive, got '{other}'"
                        )))
                    }
                })
            }
            "integrator.dt" => {
                self.integrator.get_or_insert_with(Default::default).dt =
                    Some(parse_f64(key, value)?)
            }
            "integrator.rel_tol" => {
                self.integrator.get_or_insert_with(Default::default).rel_tol =
                    Some(parse_f64(key, value)?)
            }
            "integrator.abs_tol" => {
                self.integrator.get_or_insert_with(Default::default).abs_tol =
                    Some(parse_f64(key, value)?)
            }
            "integrator.t_end" => {
                self.integrator.get_or_insert_with(Default::default).t_end =
                    Some(parse_f64(key, value)?)
            }
            "integrator.store_stride" => {
                self.integrator
                    .get_or_insert_with(Default::default)
                    .store_stride = Some(parse_usize(key, value)?)
            }
            "ensemble.realizations" => {
                self.ensemble
                    .get_or_insert_with(Default::default)
                    .realizations = Some(parse_u64(key, value)?)
            }
            "ensemble.dt" => {
                self.ensemble.get_or_insert_with(Default::default).dt = Some(parse_f64(key, value)?)
            }
            "ensemble.t_end" => {
                self.ensemble.get_or_insert_with(Default::default).t_end =
                    Some(parse_f64(key, value)?)
            }
            "ensemble.seed" => {
                self.ensemble.get_or_insert_with(Default::default).seed =
                    Some(parse_u64(key, value)?)
            }
            "ensemble.store_stride" => {
                self.ensemble
                    .get_or_insert_with(Default::default)
                    .store_stride = Some(parse_usize(key, value)?)
            }
            "ensemble.splitting" => {
                self.ensemble.get_or_insert_with(Default::default).splitting = Some(match value {
                    "first-order" => Splitting::FirstOrder,
                    "strang" => Splitting::Strang,
                    other => {
                        return Err(CliError::config(format!(
                            "ensemble.splitting must be first-order | strang, got '{other}'"
                        )))
                    }
                })
            }
            "quad.max_frequency" => {
                self.quad.get_or_insert_with(Default::default).max_frequency =
                    Some(parse_f64(key, value)?)
            }
            "quad.max_lag" => {
                self.quad.get_or_insert_with(Default::default).max_lag =
                    Some(parse_f64(key, value)?)
            }
            "quad.panel_count" => {
                self.quad.get_or_insert_with(Default::default).panel_count =
                    Some(parse_usize(key, value)?)
            }
            "quad.scheme" => {
                self.quad.get_or_insert_with(Default::default).adaptive = Some(match value {
                    "adaptive" => true,
                    "fixed-panel" => false,
                    other => {
                        return Err(CliError::config(format!(
                            "quad.scheme must be adaptive | fixed-panel, got '{other}'"
                        )))
                    }
                })
            }
            "quad.rel_tol" => {
                self.quad.get_or_insert_with(Default::default).rel_tol =
                    Some(parse_f64(key, value)?)
            }
            "quad.abs_tol" => {
                self.quad.get_or_insert_with(Default::default).abs_tol =
                    Some(parse_f64(key, value)?)
            }
            "window.start" => {
                let end = self.window.map(|w| w.1).unwrap_or(f64::NAN);
                self.window = Some((parse_f64(key, value)?, end));
            }
            "window.end" => {
                let start = self.window.map(|w| w.0).unwrap_or(f64::NAN);
                self.window = Some((start, parse_f64(key, value)?));
            }
            "sweep.rates" => self.sweep_rates = Some(parse_list(key, value)?),
            "tau.mass_kg" => {
                self.tau.get_or_insert_with(Default::default).mass_kg = Some(parse_f64(key, value)?)
            }
            "tau.temperature_K" => {
                self.tau.get_or_insert_with(Default::default).temperature_k =
                    Some(parse_f64(key, value)?)
            }
            "tau.delta_x" => {
                self.tau.get_or_insert_with(Default::default).delta_x = Some(parse_f64(key, value)?)
            }
            "tau.cutoff" => {
                self.tau.get_or_insert_with(Default::default).cutoff = Some(parse_f64(key, value)?)
            }
            "tau.rates" => {
                self.tau.get_or_insert_with(Default::default).rates = Some(parse_list(key, value)?)
            }
            "tau.frequencies" => {
                self.tau.get_or_insert_with(Default::default).frequencies =
                    Some(parse_list(key, value)?)
            }
            "output.csv" => self.output_csv = Some(value.to_string()),
            "output.svg" => self.output_svg = Some(value.to_string()),
            other => return Err(CliError::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Canonical serialization: fixed key order, round-trip float rendering.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        if let Some(model) = self.model {
            kv("model", model.as_str().to_string());
        }
        if let Some(mode) = self.mode {
            kv("mode", mode.as_str().to_string());
        }
        if let Some(renorm) = self.renormalize_trace {
            kv("renormalize_trace", renorm.to_string());
        }
        if let Some(system) = &self.system {
            if let Some(v) = system.omega0 {
                kv("system.omega0", format_float(v));
            }
            if let Some(v) = system.delta0 {
                kv("system.delta0", format_float(v));
            }
        }
        if let Some(env) = &self.environment {
            if let Some(v) = env.mass_scale {
                kv("environment.M", format_float(v));
            }
            if let Some(v) = env.gamma0 {
                kv("environment.gamma0", format_float(v));
            }
            if let Some(v) = env.omega_c {
                kv("environment.omega_c", format_float(v));
            }
            if let Some(v) = env.kbt {
                kv("environment.kBT", format_float(v));
            }
            if let Some(v) = env.temperature_k {
                kv("environment.temperature_K", format_float(v));
            }
        }
        if let Some(co) = &self.coefficients {
            if let Some(v) = co.d {
                kv("coefficients.D", format_float(v));
            }
            if let Some(v) = co.f {
                kv("coefficients.f", format_float(v));
            }
            if let Some(v) = co.gamma {
                kv("coefficients.gamma", format_float(v));
            }
        }
        if let Some(v) = self.noise_alpha {
            kv("noise.alpha", format_float(v));
        }
        if let Some(integ) = &self.integrator {
            if let Some(m) = integ.method {
                kv(
                    "integrator.method",
                    match m {
                        MethodKind::Fixed => "fixed".to_string(),
                        MethodKind::Adaptive => "adaptive".to_string(),
                    },
                );
            }
            if let Some(v) = integ.dt {
                kv("integrator.dt", format_float(v));
            }
            if let Some(v) = integ.rel_tol {
                kv("integrator.rel_tol", format_float(v));
            }
            if let Some(v) = integ.abs_tol {
                kv("integrator.abs_tol", format_float(v));
            }
            if let Some(v) = integ.t_end {
                kv("integrator.t_end", format_float(v));
            }
            if let Some(v) = integ.store_stride {
                kv("integrator.store_stride", v.to_string());
            }
        }
        if let Some(e) = &self.ensemble {
            if let Some(v) = e.realizations {
                kv("ensemble.realizations", v.to_string());
            }
            if let Some(v) = e.dt {
                kv("ensemble.dt", format_float(v));
            }
            if let Some(v) = e.t_end {
                kv("ensemble.t_end", format_float(v));
            }
            if let Some(v) = e.seed {
                kv("ensemble.seed", v.to_string());
            }
            if let Some(v) = e.store_stride {
                kv("ensemble.store_stride", v.to_string());
            }
            if let Some(s) = e.splitting {
                kv(
                    "ensemble.splitting",
                    match s {
                        Splitting::FirstOrder => "first-order".to_string(),
                        Splitting::Strang => "strang".to_string(),
                    },
                );
            }
        }
        if let Some(q) = &self.quad {
            if let Some(v) = q.max_frequency {
                kv("quad.max_frequency", format_float(v));
            }
            if let Some(v) = q.max_lag {
                kv("quad.max_lag", format_float(v));
            }
            if let Some(v) = q.panel_count {
                kv("quad.panel_count", v.to_string());
            }
            if let Some(adaptive) = q.adaptive {
                kv(
                    "quad.scheme",
                    if adaptive {
                        "adaptive".to_string()
                    } else {
                        "fixed-panel".to_string()
                    },
                );
            }
            if let Some(v) = q.rel_tol {
                kv("quad.rel_tol", format_float(v));
            }
            if let Some(v) = q.abs_tol {
                kv("quad.abs_tol", format_float(v));
            }
        }
        if let Some((start, end)) = self.window {
            if start.is_finite() {
                kv("window.start", format_float(start));
            }
            if end.is_finite() {
                kv("window.end", format_float(end));
            }
        }
        if let Some(rates) = &self.sweep_rates {
            kv(
                "sweep.rates",
                rates
                    .iter()
                    .map(|r| format_float(*r))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if let Some(tau) = &self.tau {
            if let Some(v) = tau.mass_kg {
                kv("tau.mass_kg", format_float(v));
            }
            if let Some(v) = tau.temperature_k {
                kv("tau.temperature_K", format_float(v));
            }
            if let Some(v) = tau.delta_x {
                kv("tau.delta_x", format_float(v));
            }
            if let Some(v) = tau.cutoff {
                kv("tau.cutoff", format_float(v));
            }
            if let Some(rates) = &tau.rates {
                kv(
                    "tau.rates",
                    rates
                        .iter()
                        .map(|r| format_float(*r))
                        .collect::<Vec<_>>()
                        .join(","),
                );
            }
            if let Some(freqs) = &tau.frequencies {
                kv(
                    "tau.frequencies",
                    freqs
                        .iter()
                        .map(|r| format_float(*r))
                        .collect::<Vec<_>>()
                        .join(","),
                );
            }
        }
        if let Some(path) = &self.output_csv {
            kv("output.csv", path.clone());
        }
        if let Some(path) = &self.output_svg {
            kv("output.svg", path.clone());
        }
        out
    }

    // ---- resolution into core types -------------------------------------

    pub fn resolved_system(&self) -> Result<SystemParams, CliError> {
        let section = self
            .system
            .as_ref()
            .ok_or_else(|| CliError::config("missing system.omega0 / system.delta0"))?;
        let omega0 = section
            .omega0
            .ok_or_else(|| CliError::config("missing system.omega0"))?;
        let delta0 = section
            .delta0
            .ok_or_else(|| CliError::config("missing system.delta0"))?;
        Ok(SystemParams::new(omega0, delta0)?)
    }

    pub fn resolved_environment(&self) -> Result<EnvironmentParams, CliError> {
        let env = self
            .environment
            .as_ref()
            .ok_or_else(|| CliError::config("missing environment.* block"))?;
        let mass_scale = env
            .mass_scale
            .ok_or_else(|| CliError::config("missing environment.M"))?;
        let gamma0 = env
            .gamma0
            .ok_or_else(|| CliError::config("missing environment.gamma0"))?;
        let omega_c = env
            .omega_c
            .ok_or_else(|| CliError::config("missing environment.omega_c"))?;
        let thermal = match (env.kbt, env.temperature_k) {
            (Some(k), None) => k,
            (None, Some(t)) => kelvin_to_thermal_freq(t)?,
            (None, None) => {
                return Err(CliError::config(
                    "missing environment.kBT (or environment.temperature_K)",
                ))
            }
            (Some(_), Some(_)) => unreachable!("rejected at parse"),
        };
        Ok(EnvironmentParams::new(
            mass_scale, gamma0, omega_c, thermal,
        )?)
    }

    pub fn resolved_coefficients(&self) -> Result<CoefficientSet, CliError> {
        let co = self
            .coefficients
            .as_ref()
            .ok_or_else(|| CliError::config("missing coefficients.* block"))?;
        let d =
            co.d.ok_or_else(|| CliError::config("missing coefficients.D"))?;
        let f =
            co.f.ok_or_else(|| CliError::config("missing coefficients.f"))?;
        let gamma = co
            .gamma
            .ok_or_else(|| CliError::config("missing coefficients.gamma"))?;
        Ok(CoefficientSet::new(d, f, gamma)?)
    }

    /// Coefficient source for spin-boson runs: an explicit set, or the
    /// spectral environment (closed forms per rate).
    pub fn coeff_source(&self, force_derived: bool) -> Result<CoeffSource, CliError> {
        if force_derived {
            return Ok(CoeffSource::Derived(self.resolved_environment().map_err(
                |_| CliError::config("--derive-coeffs requires an environment.* block"),
            )?));
        }
        if self.coefficients.is_some() {
            Ok(CoeffSource::Explicit(self.resolved_coefficients()?))
        } else if self.environment.is_some() {
            Ok(CoeffSource::Derived(self.resolved_environment()?))
        } else {
            Err(CliError::config(
                "spin-boson runs need coefficients.* or environment.* (exactly one)",
            ))
        }
    }

    pub fn resolved_noise(&self) -> Result<NoiseParams, CliError> {
        let alpha = self
            .noise_alpha
            .ok_or_else(|| CliError::config("missing noise.alpha"))?;
        Ok(NoiseParams::new(alpha)?)
    }

    pub fn resolved_integrator(&self) -> Result<IntegratorSpec, CliError> {
        let section = self
            .integrator
            .as_ref()
            .ok_or_else(|| CliError::config("missing integrator.* block"))?;
        let t_end = section
            .t_end
            .ok_or_else(|| CliError::config("missing integrator.t_end"))?;
        let stride = section.store_stride.unwrap_or(1);
        match section.method.unwrap_or(MethodKind::Fixed) {
            MethodKind::Fixed => {
                let dt = section.dt.ok_or_else(|| {
                    CliError::config("integrator.method=fixed needs integrator.dt")
                })?;
                Ok(IntegratorSpec::fixed(dt, t_end, stride)?)
            }
            MethodKind::Adaptive => {
                let rel = section.rel_tol.unwrap_or(1e-9);
                let abs = section.abs_tol.unwrap_or(1e-12);
                Ok(IntegratorSpec::adaptive(rel, abs, t_end, stride)?)
            }
        }
    }

    pub fn resolved_ensemble(&self, seed_override: Option<u64>) -> Result<EnsembleSpec, CliError> {
        let section = self
            .ensemble
            .as_ref()
            .ok_or_else(|| CliError::config("missing ensemble.* block"))?;
        let realizations = section
            .realizations
            .ok_or_else(|| CliError::config("missing ensemble.realizations"))?;
        let dt = section
            .dt
            .ok_or_else(|| CliError::config("missing ensemble.dt"))?;
        let t_end = section
            .t_end
            .ok_or_else(|| CliError::config("missing ensemble.t_end"))?;
        let seed = seed_override
            .or(section.seed)
            .ok_or_else(|| CliError::config("missing ensemble.seed (or --seed)"))?;
        let stride = section.store_stride.unwrap_or(1);
        let spec = EnsembleSpec::new(realizations, dt, t_end, seed, stride)?;
        Ok(spec.with_splitting(section.splitting.unwrap_or_default()))
    }

    pub fn resolved_quad(
        &self,
        env: &EnvironmentParams,
        delta0: f64,
    ) -> Result<QuadratureSpec, CliError> {
        let defaults = QuadratureSpec::default_for(env, delta0);
        let Some(q) = &self.quad else {
            return Ok(defaults);
        };
        let scheme = match q.adaptive {
            Some(true) => Scheme::Adaptive {
                rel_tol: q.rel_tol.unwrap_or(1e-9),
                abs_tol: q.abs_tol.unwrap_or(1e-12),
            },
            Some(false) | None => Scheme::FixedPanel,
        };
        Ok(QuadratureSpec::new(
            q.max_frequency.unwrap_or(defaults.max_frequency),
            q.max_lag.unwrap_or(defaults.max_lag),
            q.panel_count.unwrap_or(defaults.panel_count),
            scheme,
        )?)
    }

    pub fn resolved_window(&self) -> Result<Option<Window>, CliError> {
        match self.window {
            None => Ok(None),
            Some((start, end)) => {
                if !start.is_finite() || !end.is_finite() {
                    return Err(CliError::config(
                        "window needs both window.start and window.end",
                    ));
                }
                Ok(Some(Window::new(start, end)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# demo run
model = both
mode = hermitian
system.omega0 = 1e7
system.delta0 = 1e8
coefficients.D = 5e6
coefficients.f = 0
coefficients.gamma = 5e6
noise.alpha = 5e6
integrator.method = fixed
integrator.dt = 1e-10
integrator.t_end = 4e-7
integrator.store_stride = 4
window.start = 0
window.end = 4e-7
";

    #[test]
    fn parse_and_resolve_sample() {
        let config = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(config.model, Some(Model::Both));
        let sys = config.resolved_system().unwrap();
        assert_eq!(sys.delta0, 1e8);
        let co = config.resolved_coefficients().unwrap();
        assert_eq!(co.gamma(), 5e6);
        let spec = config.resolved_integrator().unwrap();
        assert_eq!(spec.t_end, 4e-7);
        assert!(config.resolved_window().unwrap().is_some());
    }

    #[test]
    fn serialization_fixpoint() {
        let config = RunConfig::parse(SAMPLE).unwrap();
        let first = config.serialize();
        let reparsed = RunConfig::parse(&first).unwrap();
        assert_eq!(config, reparsed);
        let second = reparsed.serialize();
        assert_eq!(first, second); // byte-identical fixpoint
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(RunConfig::parse("bogus.key = 1\n").is_err());
        assert!(RunConfig::parse("noise.alpha = 1\nnoise.alpha = 2\n").is_err());
        assert!(RunConfig::parse("model = maybe\n").is_err());
    }

    #[test]
    fn environment_and_coefficients_are_mutually_exclusive() {
        let text = "environment.M = 1\nenvironment.gamma0 = 1\nenvironment.omega_c = 1\n\
                    environment.kBT = 10\ncoefficients.D = 1\ncoefficients.f = 0\n\
                    coefficients.gamma = 1\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn kelvin_environment_resolves() {
        let text = "environment.M = 1\nenvironment.gamma0 = 1\nenvironment.omega_c = 1e9\n\
                    environment.temperature_K = 310\n";
        let config = RunConfig::parse(text).unwrap();
        let env = config.resolved_environment().unwrap();
        assert!((env.thermal_freq / 4.0585305154234e13 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_blocks_give_config_errors() {
        let config = RunConfig::parse("model = noise\n").unwrap();
        assert!(config.resolved_system().is_err());
        assert!(config.resolved_noise().is_err());
        assert!(config.resolved_integrator().is_err());
        assert!(config.coeff_source(false).is_err());
    }
}
