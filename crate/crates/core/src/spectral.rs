//! Ohmic Lorentz-Drude spectral density, noise/dissipation kernels, and the
//! master-equation coefficients D, f, gamma by closed form and by numerical
//! quadrature.
//!
//! The closed forms are the production path; the quadrature route exists to
//! validate them and to cover regimes where the high-temperature assumption
//! behind the closed f breaks down.

use crate::quad::{self, QuadOutcome, Scheme};
use crate::types::{CoefficientSet, EnvironmentParams, ParamError};
use thiserror::Error;

/// Truncation and resolution choices for the infinite integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Upper truncation of the frequency integrals, 1/s.
    pub max_frequency: f64,
    /// Upper truncation of the lag integrals, s.
    pub max_lag: f64,
    /// Minimum panel resolution of the non-oscillatory envelope.
    pub panel_count: usize,
    pub scheme: Scheme,
}

/// Relative error estimate above which a kernel value counts as non-convergent.
pub const KERNEL_REL_TOL: f64 = 1e-5;
/// Relative error estimate above which a coefficient counts as non-convergent.
pub const COEFF_REL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("delta0 = 0 is rejected: coth(delta0/(2 kBT)) diverges; use the limit D -> 2 M gamma0 kBT for delta0 << omega_c")]
    Delta0Zero,
    #[error("max_frequency {max_frequency} is below 10 x omega_c = {}", 10.0 * omega_c)]
    SpecTooNarrow { max_frequency: f64, omega_c: f64 },
    #[error("panel_count {0} is below the minimum of 64")]
    PanelCountTooSmall(usize),
    #[error("{quantity} did not converge: value {value}, error estimate {estimate} above tolerance {tolerance}")]
    NonConvergent {
        quantity: &'static str,
        value: f64,
        estimate: f64,
        tolerance: f64,
    },
}

impl QuadratureSpec {
    pub fn new(
        max_frequency: f64,
        max_lag: f64,
        panel_count: usize,
        scheme: Scheme,
    ) -> Result<Self, SpectralError> {
        if panel_count < 64 {
            return Err(SpectralError::PanelCountTooSmall(panel_count));
        }
        Ok(Self {
            max_frequency,
            max_lag,
            panel_count,
            scheme,
        })
    }

    /// Defaults: the Lorentz-Drude integrands decay as 1/w^2 past
    /// max(omega_c, delta0, kBT) and the kernels decay on 1/omega_c timescales,
    /// so 200x those scales truncates both tails far below the 1% target.
    pub fn default_for(env: &EnvironmentParams, delta0: f64) -> Self {
        let max_frequency = 200.0 * env.omega_c.max(delta0).max(env.thermal_freq);
        let slowest = if delta0 > 0.0 {
            env.omega_c.min(delta0)
        } else {
            env.omega_c
        };
        Self {
            max_frequency,
            max_lag: 200.0 / slowest,
            panel_count: 128,
            scheme: Scheme::FixedPanel,
        }
    }

    fn check_against(&self, env: &EnvironmentParams) -> Result<(), SpectralError> {
        if self.max_frequency < 10.0 * env.omega_c {
            return Err(SpectralError::SpecTooNarrow {
                max_frequency: self.max_frequency,
                omega_c: env.omega_c,
            });
        }
        if self.panel_count < 64 {
            return Err(SpectralError::PanelCountTooSmall(self.panel_count));
        }
        Ok(())
    }
}

/// J(w) = (2 M gamma0 / pi) * w * wc^2 / (wc^2 + w^2). Odd in w by construction.
pub fn spectral_density(omega: f64, env: &EnvironmentParams) -> f64 {
    let wc2 = env.omega_c * env.omega_c;
    (2.0 * env.mass_scale * env.gamma0 / std::f64::consts::PI) * omega * wc2 / (wc2 + omega * omega)
}

/// coth(x) = 1 + 2/(e^{2x} - 1), kept in expm1 form; the naive cosh/sinh ratio
/// cancels catastrophically at x ~ delta0/(2 kBT) ~ 1e-7.
pub fn coth(x: f64) -> f64 {
    1.0 + 2.0 / (2.0 * x).exp_m1()
}

/// w * coth(w/(2 kBT)) without the 0/0 at w = 0; -> 2 kBT as w -> 0.
fn omega_coth(omega: f64, thermal_freq: f64) -> f64 {
    let x = omega / (2.0 * thermal_freq);
    if x.abs() < 1e-8 {
        2.0 * thermal_freq * (1.0 + x * x / 3.0)
    } else {
        omega * coth(x)
    }
}

/// J(w)/w: the spectral density with its odd prefactor peeled off, finite at 0.
fn density_envelope(omega: f64, env: &EnvironmentParams) -> f64 {
    let wc2 = env.omega_c * env.omega_c;
    (2.0 * env.mass_scale * env.gamma0 / std::f64::consts::PI) * wc2 / (wc2 + omega * omega)
}

fn converged(quantity: &'static str, out: QuadOutcome, scale: f64) -> Result<f64, SpectralError> {
    let tolerance = KERNEL_REL_TOL * out.value.abs().max(scale * 1e-9);
    if out.abs_error > tolerance {
        return Err(SpectralError::NonConvergent {
            quantity,
            value: out.value,
            estimate: out.abs_error,
            tolerance,
        });
    }
    Ok(out.value)
}

/// Noise kernel nu(tau) = int_0^max_frequency J(w) coth(w/(2 kBT)) cos(w tau) dw.
pub fn noise_kernel(
    tau: f64,
    env: &EnvironmentParams,
    spec: &QuadratureSpec,
) -> Result<f64, SpectralError> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(ParamError::Negative {
            name: "tau",
            value: tau,
        }
        .into());
    }
    spec.check_against(env)?;
    let out = quad::integrate_aligned(
        |w| density_envelope(w, env) * omega_coth(w, env.thermal_freq) * (w * tau).cos(),
        0.0,
        spec.max_frequency,
        tau,
        spec.panel_count,
        spec.scheme,
    );
    converged(
        "noise kernel",
        out,
        2.0 * env.mass_scale * env.gamma0 * env.thermal_freq,
    )
}

/// Dissipation kernel eta(tau) = int_0^max_frequency J(w) sin(w tau) dw.
pub fn dissipation_kernel(
    tau: f64,
    env: &EnvironmentParams,
    spec: &QuadratureSpec,
) -> Result<f64, SpectralError> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(ParamError::Negative {
            name: "tau",
            value: tau,
        }
        .into());
    }
    spec.check_against(env)?;
    let out = quad::integrate_aligned(
        |w| spectral_density(w, env) * (w * tau).sin(),
        0.0,
        spec.max_frequency,
        tau,
        spec.panel_count,
        spec.scheme,
    );
    converged(
        "dissipation kernel",
        out,
        env.mass_scale * env.gamma0 * env.omega_c,
    )
}

/// gamma = (pi/2) J(delta0) = M gamma0 delta0 wc^2/(wc^2 + delta0^2).
pub fn coeff_gamma_closed(env: &EnvironmentParams, delta0: f64) -> f64 {
    let wc2 = env.omega_c * env.omega_c;
    env.mass_scale * env.gamma0 * delta0 * wc2 / (wc2 + delta0 * delta0)
}

/// D = (pi/2) J(delta0) coth(delta0/(2 kBT)). delta0 = 0 is rejected; callers
/// wanting the delta0 << omega_c limit can use 2 M gamma0 kBT explicitly.
pub fn coeff_d_closed(env: &EnvironmentParams, delta0: f64) -> Result<f64, SpectralError> {
    if delta0 == 0.0 {
        return Err(SpectralError::Delta0Zero);
    }
    if delta0 < 0.0 {
        return Err(ParamError::Negative {
            name: "delta0",
            value: delta0,
        }
        .into());
    }
    Ok(coeff_gamma_closed(env, delta0) * coth(delta0 / (2.0 * env.thermal_freq)))
}

/// Returned alongside the high-temperature f when the regime assumption
/// beta*omega_c << 1 looks shaky.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeWarning {
    /// delta0 / kBT
    pub delta0_ratio: f64,
    /// omega_c / kBT
    pub cutoff_ratio: f64,
}

/// High-temperature f = 2 M gamma0 kBT omega_c delta0 / (delta0^2 + omega_c^2).
/// Warns (does not error) when delta0/kBT > 0.1 or omega_c/kBT > 0.1.
pub fn coeff_f_high_t(env: &EnvironmentParams, delta0: f64) -> (f64, Option<RegimeWarning>) {
    let value = 2.0 * env.mass_scale * env.gamma0 * env.thermal_freq * env.omega_c * delta0
        / (delta0 * delta0 + env.omega_c * env.omega_c);
    let delta0_ratio = delta0 / env.thermal_freq;
    let cutoff_ratio = env.omega_c / env.thermal_freq;
    let warning = if delta0_ratio > 0.1 || cutoff_ratio > 0.1 {
        Some(RegimeWarning {
            delta0_ratio,
            cutoff_ratio,
        })
    } else {
        None
    };
    (value, warning)
}

/// Numerically integrated coefficient set with per-coefficient error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericCoefficients {
    pub set: CoefficientSet,
    pub d_error: f64,
    pub f_error: f64,
    pub gamma_error: f64,
}

/// sin(x L)/x, continued through x = 0 with the limit L.
fn sinc_l(x: f64, lag: f64) -> f64 {
    if x == 0.0 {
        lag
    } else {
        (x * lag).sin() / x
    }
}

/// (1 - cos(x L))/x as 2 sin^2(x L / 2)/x: no cancellation, limit 0 at x = 0.
fn cosc_l(x: f64, lag: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        let s = (0.5 * x * lag).sin();
        2.0 * s * s / x
    }
}

/// D, f, gamma by quadrature of the truncated double integrals
///
///   D     = int_0^L dtau nu(tau)  cos(delta0 tau)
///   f     = int_0^L dtau nu(tau)  sin(delta0 tau)
///   gamma = int_0^L dtau eta(tau) sin(delta0 tau)
///
/// with L = max_lag and the kernels truncated at max_frequency. The double
/// integral over the finite rectangle is evaluated with the lag integral done
/// in closed form per frequency (the exact reordering of the iterated
/// integral), which removes the tau-direction cancellation entirely; the
/// remaining frequency integral oscillates with period 2 pi / max_lag and the
/// panels are aligned to it.
pub fn coeff_numeric(
    env: &EnvironmentParams,
    delta0: f64,
    spec: &QuadratureSpec,
) -> Result<NumericCoefficients, SpectralError> {
    if delta0 <= 0.0 {
        return Err(if delta0 == 0.0 {
            SpectralError::Delta0Zero
        } else {
            ParamError::Negative {
                name: "delta0",
                value: delta0,
            }
            .into()
        });
    }
    spec.check_against(env)?;
    let lag = spec.max_lag;

    let d_out = quad::integrate_aligned(
        |w| {
            density_envelope(w, env)
                * omega_coth(w, env.thermal_freq)
                * 0.5
                * (sinc_l(w + delta0, lag) + sinc_l(w - delta0, lag))
        },
        0.0,
        spec.max_frequency,
        lag,
        spec.panel_count,
        spec.scheme,
    );
    let f_out = quad::integrate_aligned(
        |w| {
            density_envelope(w, env)
                * omega_coth(w, env.thermal_freq)
                * 0.5
                * (cosc_l(delta0 + w, lag) + cosc_l(delta0 - w, lag))
        },
        0.0,
        spec.max_frequency,
        lag,
        spec.panel_count,
        spec.scheme,
    );
    let gamma_out = quad::integrate_aligned(
        |w| spectral_density(w, env) * 0.5 * (sinc_l(w - delta0, lag) - sinc_l(w + delta0, lag)),
        0.0,
        spec.max_frequency,
        lag,
        spec.panel_count,
        spec.scheme,
    );

    let scale = env.mass_scale * env.gamma0 * (env.thermal_freq + env.omega_c);
    for (name, out) in [("D", d_out), ("f", f_out), ("gamma", gamma_out)] {
        let tolerance = COEFF_REL_TOL * out.value.abs().max(1e-9 * scale);
        if out.abs_error > tolerance {
            return Err(SpectralError::NonConvergent {
                quantity: name,
                value: out.value,
                estimate: out.abs_error,
                tolerance,
            });
        }
    }

    Ok(NumericCoefficients {
        set: CoefficientSet::new(d_out.value, f_out.value, gamma_out.value)?,
        d_error: d_out.abs_error,
        f_error: f_out.abs_error,
        gamma_error: gamma_out.abs_error,
    })
}
