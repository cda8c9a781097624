//! Model-agreement metric (the difference of Re rho01 between the two
//! evolutions), hopping-rate sweeps, and the order-of-magnitude
//! decoherence-time estimate.

use crate::dynamics::{
    evolve_classical_noise, evolve_spin_boson, IntegrateError, IntegrateOptions, IntegratorSpec,
    SpinBosonMode,
};
use crate::spectral::{self, SpectralError};
use crate::types::{
    initial_superposition, CoefficientSet, EnvironmentParams, NoiseParams, ParamError,
    SystemParams, Trajectory, HBAR,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("time grids differ; delta_r requires identical grids")]
    GridMismatch,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Summary window for the agreement metric, [start, end] in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self, ParamError> {
        if !start.is_finite() || !end.is_finite() || end < start {
            return Err(ParamError::NotFinite {
                name: "window",
                value: end - start,
            });
        }
        Ok(Self { start, end })
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Pointwise difference of the real parts of rho01 between two evolutions,
/// with its summary statistics over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    window: Window,
    max_abs: f64,
    time_mean_abs: f64,
}

impl DeltaRSeries {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// Trapezoidal time average of |delta R| over the window.
    pub fn time_mean_abs(&self) -> f64 {
        self.time_mean_abs
    }
}

/// delta R(t) = Re rho01(spin-boson) - Re rho01(noise), summarized over
/// `window` (the full grid when None).
pub fn delta_r(
    spin_boson: &Trajectory,
    noise: &Trajectory,
    window: Option<Window>,
) -> Result<DeltaRSeries, AnalysisError> {
    if !spin_boson.same_grid(noise) {
        return Err(AnalysisError::GridMismatch);
    }
    let times = spin_boson.times().to_vec();
    let values: Vec<f64> = spin_boson
        .states()
        .iter()
        .zip(noise.states())
        .map(|(a, b)| a.rho01.re - b.rho01.re)
        .collect();
    let window = match window {
        Some(w) => w,
        None => Window {
            start: times[0],
            end: *times.last().expect("non-empty"),
        },
    };

    let mut max_abs = 0.0f64;
    let mut integral = 0.0f64;
    let mut span = 0.0f64;
    let mut previous: Option<(f64, f64)> = None;
    for (&t, &v) in times.iter().zip(&values) {
        if !window.contains(t) {
            previous = None;
            continue;
        }
        max_abs = max_abs.max(v.abs());
        if let Some((t0, v0)) = previous {
            let h = t - t0;
            integral += 0.5 * h * (v0.abs() + v.abs());
            span += h;
        }
        previous = Some((t, v));
    }
    let time_mean_abs = if span > 0.0 { integral / span } else { max_abs };
    Ok(DeltaRSeries {
        times,
        values,
        window,
        max_abs,
        time_mean_abs,
    })
}

/// Where the spin-boson coefficients come from during a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoeffSource {
    /// One fixed set for every hopping rate (the figure-caption reading).
    Explicit(CoefficientSet),
    /// Re-derive gamma, D (closed forms) and f (high-T form) per rate.
    Derived(EnvironmentParams),
}

impl CoeffSource {
    pub fn coefficients_at(&self, delta0: f64) -> Result<CoefficientSet, AnalysisError> {
        match self {
            CoeffSource::Explicit(set) => Ok(*set),
            CoeffSource::Derived(env) => {
                let gamma = spectral::coeff_gamma_closed(env, delta0);
                let d = spectral::coeff_d_closed(env, delta0)?;
                let (f, _) = spectral::coeff_f_high_t(env, delta0);
                Ok(CoefficientSet::new(d, f, gamma)?)
            }
        }
    }
}

/// Shared configuration for one spin-boson vs noise comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareConfig {
    pub omega0: f64,
    pub coeffs: CoeffSource,
    pub noise: NoiseParams,
    pub integrator: IntegratorSpec,
    pub mode: SpinBosonMode,
    pub renormalize_trace: bool,
    pub window: Option<Window>,
}

/// Both trajectories and their agreement series at one hopping rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub rate: f64,
    pub coeffs: CoefficientSet,
    pub spin_boson: Trajectory,
    pub noise: Trajectory,
    pub delta_r: DeltaRSeries,
}

/// Run both models at one hopping rate.
pub fn compare_models(rate: f64, config: &CompareConfig) -> Result<SweepPoint, AnalysisError> {
    let sys = SystemParams::new(config.omega0, rate)?;
    let coeffs = config.coeffs.coefficients_at(rate)?;
    let rho0 = initial_superposition();
    let spin_boson = evolve_spin_boson(
        &sys,
        &coeffs,
        config.mode,
        &rho0,
        &config.integrator,
        IntegrateOptions {
            renormalize_trace: config.renormalize_trace,
        },
    )?;
    let noise = evolve_classical_noise(&sys, &config.noise, &rho0, &config.integrator)?;
    let series = delta_r(&spin_boson, &noise, config.window)?;
    Ok(SweepPoint {
        rate,
        coeffs,
        spin_boson,
        noise,
        delta_r: series,
    })
}

/// Sweep the hopping rate. Points are computed concurrently but returned in
/// input order; the output is a pure function of the configuration.
pub fn sweep_hopping(
    rates: &[f64],
    config: &CompareConfig,
) -> Result<Vec<SweepPoint>, AnalysisError> {
    if rates.is_empty() {
        return Err(ParamError::NotPositive {
            name: "rates",
            value: 0.0,
        }
        .into());
    }
    for &rate in rates {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ParamError::NotPositive {
                name: "rate",
                value: rate,
            }
            .into());
        }
    }
    rates
        .par_iter()
        .map(|&rate| compare_models(rate, config))
        .collect()
}

/// Thermal de Broglie wavelength hbar / sqrt(2 m k_B T), from mass in kg and
/// k_B T in joules.
pub fn thermal_de_broglie(mass_kg: f64, kbt_joule: f64) -> Result<f64, ParamError> {
    if !mass_kg.is_finite() || mass_kg <= 0.0 {
        return Err(ParamError::NotPositive {
            name: "mass",
            value: mass_kg,
        });
    }
    if !kbt_joule.is_finite() || kbt_joule <= 0.0 {
        return Err(ParamError::NotPositive {
            name: "kBT",
            value: kbt_joule,
        });
    }
    Ok(HBAR / (2.0 * mass_kg * kbt_joule).sqrt())
}

/// Mean environmental occupation 1/(e^x - 1) with x = omega/kBT; switches to
/// the asymptotic e^-x branch before exp overflows.
pub fn thermal_occupation(x: f64) -> f64 {
    if x > 30.0 {
        (-x).exp()
    } else {
        1.0 / x.exp_m1()
    }
}

/// Inputs of the order-of-magnitude decoherence-time estimate. These live in
/// a separate unit system from the master-equation machinery on purpose: mass
/// in kg, dispersion in meters, everything else as angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceInputs {
    pub mass_kg: f64,
    /// k_B T / hbar, 1/s.
    pub thermal_freq: f64,
    /// Position-space dispersion, m.
    pub delta_x: f64,
    /// Cutoff frequency Lambda, 1/s.
    pub cutoff: f64,
    /// Oscillator frequency omega, 1/s.
    pub omega: f64,
    /// Coupling rate gamma0, 1/s.
    pub gamma0: f64,
}

/// The estimate with all derived quantities:
/// r = Lambda/omega, n_bar = (e^{omega/kBT}-1)^-1,
/// gamma_rate = gamma0 omega n_bar r^2/(1+r^2),
/// tau_D = deltaX^2 / (gamma_rate lambda_dB^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceEstimate {
    pub inputs: DecoherenceInputs,
    pub lambda_db: f64,
    pub r: f64,
    pub n_bar: f64,
    pub gamma_rate: f64,
    pub tau_d: f64,
}

pub fn decoherence_time(inputs: DecoherenceInputs) -> Result<DecoherenceEstimate, ParamError> {
    for (name, value) in [
        ("mass", inputs.mass_kg),
        ("thermal_freq", inputs.thermal_freq),
        ("delta_x", inputs.delta_x),
        ("cutoff", inputs.cutoff),
        ("omega", inputs.omega),
        ("gamma0", inputs.gamma0),
    ] {
        if !value.is_finite() || value <= 0.0 {
            return Err(ParamError::NotPositive { name, value });
        }
    }
    let lambda_db = thermal_de_broglie(inputs.mass_kg, inputs.thermal_freq * HBAR)?;
    let r = inputs.cutoff / inputs.omega;
    let n_bar = thermal_occupation(inputs.omega / inputs.thermal_freq);
    let gamma_rate = inputs.gamma0 * inputs.omega * n_bar * r * r / (1.0 + r * r);
    let tau_d = inputs.delta_x * inputs.delta_x / (gamma_rate * lambda_db * lambda_db);
    Ok(DecoherenceEstimate {
        inputs,
        lambda_db,
        r,
        n_bar,
        gamma_rate,
        tau_d,
    })
}

/// Build the estimate whose gamma_rate equals `rate` at the given frequency:
/// gamma0 is solved from gamma_rate = gamma0 omega n_bar r^2/(1+r^2). This is
/// how the reported "diffusion rate" axis maps onto the formula chain.
pub fn estimate_for_rate(
    rate: f64,
    omega: f64,
    mass_kg: f64,
    thermal_freq: f64,
    delta_x: f64,
    cutoff: f64,
) -> Result<DecoherenceEstimate, ParamError> {
    if !rate.is_finite() || rate <= 0.0 {
        return Err(ParamError::NotPositive {
            name: "rate",
            value: rate,
        });
    }
    let r = cutoff / omega;
    let n_bar = thermal_occupation(omega / thermal_freq);
    let gamma0 = rate / (omega * n_bar * r * r / (1.0 + r * r));
    decoherence_time(DecoherenceInputs {
        mass_kg,
        thermal_freq,
        delta_x,
        cutoff,
        omega,
        gamma0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::kelvin_to_thermal_freq;
    use approx::assert_relative_eq;

    fn dephasing_config(d: f64, alpha: f64, omega0: f64, t_end: f64, steps: u64) -> CompareConfig {
        CompareConfig {
            omega0,
            coeffs: CoeffSource::Explicit(CoefficientSet::new(d, 0.0, 0.0).unwrap()),
            noise: NoiseParams::new(alpha).unwrap(),
            integrator: IntegratorSpec::fixed(t_end / steps as f64, t_end, 1).unwrap(),
            mode: SpinBosonMode::Hermitian,
            renormalize_trace: false,
            window: None,
        }
    }

    #[test]
    fn identical_trajectories_give_zero_series() {
        let config = dephasing_config(0.5e7, 0.5e7, 1e7, 4e-8, 2_000);
        let point = compare_models(1e7, &config).unwrap();
        let series = delta_r(&point.noise, &point.noise, None).unwrap();
        assert!(series.values().iter().all(|&v| v == 0.0));
        assert_eq!(series.max_abs(), 0.0);
        assert_eq!(series.time_mean_abs(), 0.0);
    }

    #[test]
    fn shared_initial_state_pins_first_value_to_zero() {
        let config = dephasing_config(0.5e7, 0.25e7, 1e7, 4e-8, 2_000);
        let point = compare_models(1e7, &config).unwrap();
        assert_eq!(point.delta_r.values()[0], 0.0);
    }

    #[test]
    fn delta_r_is_antisymmetric_pointwise() {
        let config = dephasing_config(0.5e7, 0.25e7, 1e7, 4e-8, 1_000);
        let point = compare_models(3e6, &config).unwrap();
        let forward = delta_r(&point.spin_boson, &point.noise, None).unwrap();
        let backward = delta_r(&point.noise, &point.spin_boson, None).unwrap();
        for (a, b) in forward.values().iter().zip(backward.values()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn zero_tunneling_matches_closed_form() {
        // Delta R(t) = 0.5 cos(omega0 t) (e^{-4 D t} - e^{-2 alpha t})
        let omega0 = 1e7;
        let d = 0.5e7;
        let alpha = 0.5e7;
        let config = CompareConfig {
            omega0,
            coeffs: CoeffSource::Explicit(CoefficientSet::new(d, 0.0, 0.0).unwrap()),
            noise: NoiseParams::new(alpha).unwrap(),
            integrator: IntegratorSpec::fixed(4e-12, 4e-8, 10).unwrap(),
            mode: SpinBosonMode::Hermitian,
            renormalize_trace: false,
            window: None,
        };
        let sys = SystemParams::new(omega0, 0.0).unwrap();
        let rho0 = initial_superposition();
        let sb = evolve_spin_boson(
            &sys,
            &CoefficientSet::new(d, 0.0, 0.0).unwrap(),
            SpinBosonMode::Hermitian,
            &rho0,
            &config.integrator,
            IntegrateOptions::default(),
        )
        .unwrap();
        let nz = evolve_classical_noise(&sys, &config.noise, &rho0, &config.integrator).unwrap();
        let series = delta_r(&sb, &nz, None).unwrap();
        for (&t, &v) in series.times().iter().zip(series.values()) {
            let closed =
                0.5 * (omega0 * t).cos() * ((-4.0 * d * t).exp() - (-2.0 * alpha * t).exp());
            assert!((v - closed).abs() <= 1e-8, "t={t}: {v} vs {closed}");
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let config = dephasing_config(1e6, 1e6, 1e7, 4e-8, 1_000);
        let a = compare_models(1e7, &config).unwrap();
        let other = dephasing_config(1e6, 1e6, 1e7, 4e-8, 500);
        let b = compare_models(1e7, &other).unwrap();
        assert!(matches!(
            delta_r(&a.spin_boson, &b.noise, None),
            Err(AnalysisError::GridMismatch)
        ));
    }

    #[test]
    fn sweep_is_deterministic_and_duplicates_match() {
        let config = dephasing_config(0.5e7, 0.5e7, 1e7, 4e-8, 500);
        let rates = [1e7, 5e6, 1e7];
        let first = sweep_hopping(&rates, &config).unwrap();
        let second = sweep_hopping(&rates, &config).unwrap();
        assert_eq!(first, second);
        assert_eq!(first[0], first[2]); // duplicate rate entries give identical rows
                                        // single-rate sweep equals the direct comparison
        let direct = compare_models(5e6, &config).unwrap();
        assert_eq!(first[1], direct);
    }

    #[test]
    fn sweep_rejects_empty_and_non_positive_rates() {
        let config = dephasing_config(1e6, 1e6, 1e7, 4e-8, 100);
        assert!(sweep_hopping(&[], &config).is_err());
        assert!(sweep_hopping(&[1e7, 0.0], &config).is_err());
    }

    #[test]
    fn derived_coefficients_match_spectral_closed_forms() {
        let env = EnvironmentParams::new(1.0, 0.01, 1e9, 4.06e13).unwrap();
        let source = CoeffSource::Derived(env);
        let co = source.coefficients_at(1e9).unwrap();
        assert_relative_eq!(co.gamma(), spectral::coeff_gamma_closed(&env, 1e9));
        assert_relative_eq!(co.d(), spectral::coeff_d_closed(&env, 1e9).unwrap());
        assert_relative_eq!(co.f(), spectral::coeff_f_high_t(&env, 1e9).0);
    }

    #[test]
    fn de_broglie_pinned_value_and_exact_scalings() {
        // K+ at 310 K (desk pin, SI evaluation of hbar/sqrt(2 m kB T))
        let kbt = crate::types::K_B * 310.0;
        let lambda = thermal_de_broglie(6.49e-26, kbt).unwrap();
        assert_relative_eq!(lambda, 4.474209610396781e-12, max_relative = 1e-12);
        // quadrupling T or m exactly halves lambda
        assert_eq!(
            2.0 * thermal_de_broglie(6.49e-26, 4.0 * kbt).unwrap(),
            lambda
        );
        assert_eq!(
            2.0 * thermal_de_broglie(4.0 * 6.49e-26, kbt).unwrap(),
            lambda
        );
        assert!(thermal_de_broglie(0.0, kbt).is_err());
        assert!(thermal_de_broglie(1.0, -1.0).is_err());
    }

    #[test]
    fn occupation_unity_point_and_asymptotics() {
        assert_relative_eq!(
            thermal_occupation(std::f64::consts::LN_2),
            1.0,
            epsilon = 1e-12
        );
        for x in [20.0f64, 25.0, 30.0, 40.0, 200.0] {
            let exact = if x <= 30.0 {
                1.0 / x.exp_m1()
            } else {
                (-x).exp()
            };
            assert_relative_eq!(thermal_occupation(x), exact, max_relative = 1e-6);
            // the asymptotic form itself is within 1e-6 relative from x = 20 on
            assert_relative_eq!(thermal_occupation(x), (-x).exp(), max_relative = 1e-6);
        }
        // overflow regime: the asymptotic branch underflows gracefully
        assert_eq!(thermal_occupation(800.0), 0.0);
    }

    #[test]
    fn estimate_identities() {
        let thermal = kelvin_to_thermal_freq(310.0).unwrap();
        let lambda = thermal_de_broglie(6.49e-26, thermal * HBAR).unwrap();
        let est = decoherence_time(DecoherenceInputs {
            mass_kg: 6.49e-26,
            thermal_freq: thermal,
            delta_x: lambda,
            cutoff: 1e13,
            omega: 1e10,
            gamma0: 3.2e-7,
        })
        .unwrap();
        // deltaX = lambda_dB makes tau_D = 1/gamma_rate
        assert_relative_eq!(est.tau_d, 1.0 / est.gamma_rate, max_relative = 1e-13);
        assert_relative_eq!(est.r, 1e3, max_relative = 1e-15);
    }

    #[test]
    fn estimate_for_rate_round_trips_gamma_rate() {
        let thermal = kelvin_to_thermal_freq(310.0).unwrap();
        let lambda = thermal_de_broglie(6.4924e-26, thermal * HBAR).unwrap();
        for rate in [1e6, 1e7, 1e8] {
            for omega in [1e8, 1e10, 1e12] {
                let est =
                    estimate_for_rate(rate, omega, 6.4924e-26, thermal, lambda, 1e13).unwrap();
                assert_relative_eq!(est.gamma_rate, rate, max_relative = 1e-12);
                assert_relative_eq!(est.tau_d, 1.0 / rate, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn tau_d_is_monotone_in_its_drivers() {
        let thermal = kelvin_to_thermal_freq(310.0).unwrap();
        let base = DecoherenceInputs {
            mass_kg: 6.49e-26,
            thermal_freq: thermal,
            delta_x: 1e-11,
            cutoff: 1e12,
            omega: 1e10,
            gamma0: 1e-6,
        };
        let tau = |inputs: DecoherenceInputs| decoherence_time(inputs).unwrap().tau_d;
        // increasing gamma0 increases gamma_rate, decreasing tau_D
        let mut previous = f64::INFINITY;
        for g in [1e-7, 1e-6, 1e-5, 1e-4] {
            let t = tau(DecoherenceInputs { gamma0: g, ..base });
            assert!(t < previous);
            previous = t;
        }
        // increasing deltaX strictly increases tau_D
        let mut previous = 0.0;
        for dx in [1e-12, 1e-11, 1e-10] {
            let t = tau(DecoherenceInputs {
                delta_x: dx,
                ..base
            });
            assert!(t > previous);
            previous = t;
        }
        // hotter environment -> larger n_bar -> faster decoherence
        let cold = tau(base);
        let hot = tau(DecoherenceInputs {
            thermal_freq: 4.0 * thermal,
            ..base
        });
        assert!(hot < cold);
    }
}
