//! Right-hand sides of both master equations in the sigma_z eigenbasis and
//! deterministic time integrators producing [`Trajectory`] records.
//!
//! The spin-boson equation is shipped in two readings. `Verbatim` keeps the
//! element-wise system exactly as given, including its +4D growth of rho01
//! and the non-conserved trace (the trace-rate identity
//! d(tr)/dt = 2 gamma (rho01 + rho10) is itself used as a test oracle).
//! `Hermitian` damps rho01 at 4D and slaves rho10 to its conjugate, which is
//! the reading that produces decaying coherences; it is the default.

use crate::types::{
    CoefficientSet, DensityMatrix2, NoiseParams, ParamError, StepDiagnostics, SystemParams,
    Trajectory,
};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpinBosonMode {
    /// The element-wise equations taken literally: rho01 grows at +4D.
    Verbatim,
    /// rho01 damped at 4D, rho10 = conj(rho01) by construction.
    #[default]
    Hermitian,
}

impl SpinBosonMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpinBosonMode::Verbatim => "verbatim",
            SpinBosonMode::Hermitian => "hermitian",
        }
    }
}

/// Spin-boson master equation, element-wise in the sigma_z eigenbasis.
pub fn rhs_spin_boson(
    rho: &DensityMatrix2,
    sys: &SystemParams,
    co: &CoefficientSet,
    mode: SpinBosonMode,
) -> DensityMatrix2 {
    let ihalf_d0 = Complex64::new(0.0, 0.5 * sys.delta0);
    let two_gamma = 2.0 * co.gamma();
    let two_i_zeta_conj = Complex64::new(0.0, 2.0) * co.zeta_conj();
    let two_i_f = Complex64::new(0.0, 2.0 * co.f());

    let d00 = ihalf_d0 * (rho.rho10 - rho.rho01) + rho.rho01 * two_gamma;
    let d11 = ihalf_d0 * (rho.rho01 - rho.rho10) + rho.rho10 * two_gamma;
    match mode {
        SpinBosonMode::Verbatim => {
            // damping coefficient -(i omega0 - 4D): rho01 grows at +4D as printed
            let lam = Complex64::new(4.0 * co.d(), -sys.omega0);
            let d01 = ihalf_d0 * (rho.rho11 - rho.rho00) + two_i_zeta_conj * rho.rho11
                - two_i_f * rho.rho00
                + lam * rho.rho01;
            let d10 = ihalf_d0 * (rho.rho00 - rho.rho11) + two_i_zeta_conj * rho.rho00
                - two_i_f * rho.rho11
                - lam * rho.rho10;
            DensityMatrix2::new(d00, d01, d10, d11)
        }
        SpinBosonMode::Hermitian => {
            let lam = Complex64::new(-4.0 * co.d(), -sys.omega0);
            let d01 = ihalf_d0 * (rho.rho11 - rho.rho00) + two_i_zeta_conj * rho.rho11
                - two_i_f * rho.rho00
                + lam * rho.rho01;
            DensityMatrix2::new(d00, d01, d01.conj(), d11)
        }
    }
}

/// Gaussian-white-noise master equation, element-wise. Conserves the trace
/// exactly (the population rows are exact negatives of each other).
pub fn rhs_classical_noise(
    rho: &DensityMatrix2,
    sys: &SystemParams,
    noise: &NoiseParams,
) -> DensityMatrix2 {
    let ihalf_d0 = Complex64::new(0.0, 0.5 * sys.delta0);
    let lam01 = Complex64::new(-2.0 * noise.alpha, -sys.omega0);
    let lam10 = Complex64::new(-2.0 * noise.alpha, sys.omega0);
    DensityMatrix2::new(
        ihalf_d0 * (rho.rho10 - rho.rho01),
        ihalf_d0 * (rho.rho11 - rho.rho00) + lam01 * rho.rho01,
        ihalf_d0 * (rho.rho00 - rho.rho11) + lam10 * rho.rho10,
        ihalf_d0 * (rho.rho01 - rho.rho10),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMethod {
    /// Classical 4th-order Runge-Kutta with compensated state updates.
    Fixed { dt: f64 },
    /// Dormand-Prince embedded 4(5) with per-step error <= abs + rel*|rho|.
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub method: StepMethod,
    pub t_end: f64,
    /// A sample is stored every this many accepted steps (t=0 and t_end always).
    pub store_stride: usize,
}

impl IntegratorSpec {
    pub fn fixed(dt: f64, t_end: f64, store_stride: usize) -> Result<Self, ParamError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(ParamError::NotPositive {
                name: "dt",
                value: dt,
            });
        }
        if !t_end.is_finite() || t_end < 0.0 {
            return Err(ParamError::Negative {
                name: "t_end",
                value: t_end,
            });
        }
        if store_stride == 0 {
            return Err(ParamError::NotPositive {
                name: "store_stride",
                value: 0.0,
            });
        }
        Ok(Self {
            method: StepMethod::Fixed { dt },
            t_end,
            store_stride,
        })
    }

    pub fn adaptive(
        rel_tol: f64,
        abs_tol: f64,
        t_end: f64,
        store_stride: usize,
    ) -> Result<Self, ParamError> {
        if !rel_tol.is_finite() || rel_tol <= 0.0 {
            return Err(ParamError::NotPositive {
                name: "rel_tol",
                value: rel_tol,
            });
        }
        if !abs_tol.is_finite() || abs_tol < 0.0 {
            return Err(ParamError::Negative {
                name: "abs_tol",
                value: abs_tol,
            });
        }
        if !t_end.is_finite() || t_end < 0.0 {
            return Err(ParamError::Negative {
                name: "t_end",
                value: t_end,
            });
        }
        if store_stride == 0 {
            return Err(ParamError::NotPositive {
                name: "store_stride",
                value: 0.0,
            });
        }
        Ok(Self {
            method: StepMethod::Adaptive { rel_tol, abs_tol },
            t_end,
            store_stride,
        })
    }

    /// Largest fixed dt resolving the fastest rate in the problem:
    /// 0.05 / max(|omega0|, delta0, 4D, 2*alpha, 1).
    pub fn max_fixed_dt(sys: &SystemParams, co: Option<&CoefficientSet>, alpha: f64) -> f64 {
        let mut fastest = sys.omega0.abs().max(sys.delta0).max(2.0 * alpha).max(1.0);
        if let Some(co) = co {
            fastest = fastest.max(4.0 * co.d().abs()).max(co.gamma().abs());
        }
        0.05 / fastest
    }

    /// Enforce the fixed-step resolution invariant against the model rates.
    pub fn validate_rates(
        &self,
        sys: &SystemParams,
        co: Option<&CoefficientSet>,
        alpha: f64,
    ) -> Result<(), IntegrateError> {
        if let StepMethod::Fixed { dt } = self.method {
            let limit = Self::max_fixed_dt(sys, co, alpha);
            if dt > limit {
                return Err(IntegrateError::StepTooCoarse { dt, limit });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("fixed step {dt} does not resolve the fastest rate (limit {limit})")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("state became non-finite after t = {t_last}")]
    NonFinite {
        t_last: f64,
        partial: Box<Trajectory>,
    },
    #[error("adaptive step size underflowed at t = {t_last}")]
    StepUnderflow {
        t_last: f64,
        partial: Box<Trajectory>,
    },
}

impl IntegrateError {
    /// The trajectory accumulated before an abort, when there is one.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrateError::NonFinite { partial, .. }
            | IntegrateError::StepUnderflow { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrateOptions {
    /// Divide the state by its (complex) trace after every step. Off by
    /// default: the spin-boson right-hand side conserves the trace in neither
    /// mode, and the raw drift is part of what the diagnostics expose.
    pub renormalize_trace: bool,
}

/// Number of fixed steps covering (0, t_end]; the last step is shortened to
/// land exactly on t_end. Shared with the stochastic module so that master
/// equation and ensemble sample bit-identical time grids.
pub(crate) fn fixed_step_count(dt: f64, t_end: f64) -> u64 {
    if t_end <= 0.0 {
        return 0;
    }
    let mut steps = (t_end / dt).ceil() as u64;
    while steps > 1 && (steps - 1) as f64 * dt >= t_end {
        steps -= 1;
    }
    steps.max(1)
}

pub(crate) fn grid_time(step: u64, steps: u64, dt: f64, t_end: f64) -> f64 {
    if step >= steps {
        t_end
    } else {
        step as f64 * dt
    }
}

/// Kahan-compensated state: the low-order bits lost by each `+=` are carried
/// into the next step, so population sums drift by ulps instead of random-
/// walking over 1e5-step runs.
struct Compensated {
    y: DensityMatrix2,
    carry: DensityMatrix2,
}

impl Compensated {
    fn new(y: DensityMatrix2) -> Self {
        Self {
            y,
            carry: DensityMatrix2::ZERO,
        }
    }

    fn add(&mut self, increment: DensityMatrix2) {
        fn lane(y: &mut f64, c: &mut f64, x: f64) {
            let dy = x + *c;
            let t = *y + dy;
            *c = dy - (t - *y);
            *y = t;
        }
        macro_rules! update {
            ($field:ident) => {
                lane(
                    &mut self.y.$field.re,
                    &mut self.carry.$field.re,
                    increment.$field.re,
                );
                lane(
                    &mut self.y.$field.im,
                    &mut self.carry.$field.im,
                    increment.$field.im,
                );
            };
        }
        update!(rho00);
        update!(rho01);
        update!(rho10);
        update!(rho11);
    }
}

pub fn integrate<F>(
    rhs: F,
    rho0: &DensityMatrix2,
    spec: &IntegratorSpec,
) -> Result<Trajectory, IntegrateError>
where
    F: Fn(&DensityMatrix2) -> DensityMatrix2,
{
    integrate_with_options(rhs, rho0, spec, IntegrateOptions::default())
}

pub fn integrate_with_options<F>(
    rhs: F,
    rho0: &DensityMatrix2,
    spec: &IntegratorSpec,
    options: IntegrateOptions,
) -> Result<Trajectory, IntegrateError>
where
    F: Fn(&DensityMatrix2) -> DensityMatrix2,
{
    if !rho0.is_finite() {
        return Err(ParamError::NotFinite {
            name: "rho0",
            value: f64::NAN,
        }
        .into());
    }
    match spec.method {
        StepMethod::Fixed { dt } => integrate_fixed(rhs, rho0, dt, spec, options),
        StepMethod::Adaptive { rel_tol, abs_tol } => {
            integrate_adaptive(rhs, rho0, rel_tol, abs_tol, spec, options)
        }
    }
}

fn rk4_increment<F>(rhs: &F, y: &DensityMatrix2, h: f64) -> DensityMatrix2
where
    F: Fn(&DensityMatrix2) -> DensityMatrix2,
{
    let k1 = rhs(y);
    let k2 = rhs(&(*y + k1 * (0.5 * h)));
    let k3 = rhs(&(*y + k2 * (0.5 * h)));
    let k4 = rhs(&(*y + k3 * h));
    (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

fn renormalize(state: &mut DensityMatrix2) {
    let tr = state.trace();
    if tr.norm_sqr() > 0.0 {
        let inv = Complex64::new(1.0, 0.0) / tr;
        state.rho00 *= inv;
        state.rho01 *= inv;
        state.rho10 *= inv;
        state.rho11 *= inv;
    }
}

fn integrate_fixed<F>(
    rhs: F,
    rho0: &DensityMatrix2,
    dt: f64,
    spec: &IntegratorSpec,
    options: IntegrateOptions,
) -> Result<Trajectory, IntegrateError>
where
    F: Fn(&DensityMatrix2) -> DensityMatrix2,
{
    let steps = fixed_step_count(dt, spec.t_end);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut diagnostics = Vec::new();
    let mut push = |t: f64, s: &DensityMatrix2| {
        times.push(t);
        states.push(*s);
        diagnostics.push(s.diagnostics());
    };
    push(0.0, rho0);
    if steps == 0 {
        return Ok(Trajectory::new(times, states, diagnostics).expect("valid grid"));
    }

    let mut state = Compensated::new(*rho0);
    for k in 0..steps {
        let t0 = grid_time(k, steps, dt, spec.t_end);
        let t1 = grid_time(k + 1, steps, dt, spec.t_end);
        let h = t1 - t0;
        let increment = rk4_increment(&rhs, &state.y, h);
        state.add(increment);
        if options.renormalize_trace {
            renormalize(&mut state.y);
        }
        if !state.y.is_finite() {
            let partial = Trajectory::new(times, states, diagnostics).expect("valid grid");
            return Err(IntegrateError::NonFinite {
                t_last: t0,
                partial: Box::new(partial),
            });
        }
        let is_last = k + 1 == steps;
        if (k + 1).is_multiple_of(spec.store_stride as u64) || is_last {
            push(t1, &state.y);
        }
    }
    Ok(Trajectory::new(times, states, diagnostics).expect("valid grid"))
}

// Dormand-Prince 4(5) tableau.
const DP_C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn lanes(m: &DensityMatrix2) -> [f64; 8] {
    [
        m.rho00.re, m.rho00.im, m.rho01.re, m.rho01.im, m.rho10.re, m.rho10.im, m.rho11.re,
        m.rho11.im,
    ]
}

fn integrate_adaptive<F>(
    rhs: F,
    rho0: &DensityMatrix2,
    rel_tol: f64,
    abs_tol: f64,
    spec: &IntegratorSpec,
    options: IntegrateOptions,
) -> Result<Trajectory, IntegrateError>
where
    F: Fn(&DensityMatrix2) -> DensityMatrix2,
{
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut diagnostics = Vec::new();
    fn push(
        times: &mut Vec<f64>,
        states: &mut Vec<DensityMatrix2>,
        diagnostics: &mut Vec<StepDiagnostics>,
        t: f64,
        s: &DensityMatrix2,
    ) {
        times.push(t);
        states.push(*s);
        diagnostics.push(s.diagnostics());
    }
    push(&mut times, &mut states, &mut diagnostics, 0.0, rho0);
    if spec.t_end <= 0.0 {
        return Ok(Trajectory::new(times, states, diagnostics).expect("valid grid"));
    }

    let t_end = spec.t_end;
    let h_min = t_end * 4.0 * f64::EPSILON;
    let mut t = 0.0_f64;
    let mut h = t_end * 1e-6;
    let mut y = *rho0;
    let mut accepted: u64 = 0;

    while t < t_end {
        let last = t + h >= t_end;
        let h_step = if last { t_end - t } else { h };

        let mut k = [DensityMatrix2::ZERO; 7];
        k[0] = rhs(&y);
        for stage in 0..6 {
            let mut arg = y;
            for (j, coeff) in DP_A[stage].iter().enumerate().take(stage + 1) {
                if *coeff != 0.0 {
                    arg = arg + k[j] * (coeff * h_step);
                }
            }
            let _ = DP_C; // stage times are implicit: the rhs is autonomous here
            k[stage + 1] = rhs(&arg);
        }
        let mut y5 = y;
        let mut y4 = y;
        for j in 0..7 {
            if DP_B5[j] != 0.0 {
                y5 = y5 + k[j] * (DP_B5[j] * h_step);
            }
            if DP_B4[j] != 0.0 {
                y4 = y4 + k[j] * (DP_B4[j] * h_step);
            }
        }

        let err = y5 - y4;
        let mut err_norm = 0.0_f64;
        for ((e, a), b) in lanes(&err).iter().zip(lanes(&y)).zip(lanes(&y5)) {
            let scale = abs_tol + rel_tol * a.abs().max(b.abs());
            if scale > 0.0 {
                err_norm = err_norm.max(e.abs() / scale);
            } else if *e != 0.0 {
                err_norm = f64::INFINITY;
            }
        }

        if err_norm <= 1.0 {
            t = if last { t_end } else { t + h_step };
            y = y5;
            if options.renormalize_trace {
                renormalize(&mut y);
            }
            if !y.is_finite() {
                let partial = Trajectory::new(times, states, diagnostics).expect("valid grid");
                return Err(IntegrateError::NonFinite {
                    t_last: t,
                    partial: Box::new(partial),
                });
            }
            accepted += 1;
            if (accepted.is_multiple_of(spec.store_stride as u64) || t >= t_end)
                && *times.last().expect("at least t=0") < t
            {
                push(&mut times, &mut states, &mut diagnostics, t, &y);
            }
        }

        let factor = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h_step * factor).min(t_end);
        if h < h_min && t < t_end {
            let partial = Trajectory::new(times, states, diagnostics).expect("valid grid");
            return Err(IntegrateError::StepUnderflow {
                t_last: t,
                partial: Box::new(partial),
            });
        }
    }

    Ok(Trajectory::new(times, states, diagnostics).expect("valid grid"))
}

/// Integrate the spin-boson model from rho0.
pub fn evolve_spin_boson(
    sys: &SystemParams,
    co: &CoefficientSet,
    mode: SpinBosonMode,
    rho0: &DensityMatrix2,
    spec: &IntegratorSpec,
    options: IntegrateOptions,
) -> Result<Trajectory, IntegrateError> {
    integrate_with_options(
        |rho| rhs_spin_boson(rho, sys, co, mode),
        rho0,
        spec,
        options,
    )
}

/// Integrate the classical-noise model from rho0.
pub fn evolve_classical_noise(
    sys: &SystemParams,
    noise: &NoiseParams,
    rho0: &DensityMatrix2,
    spec: &IntegratorSpec,
) -> Result<Trajectory, IntegrateError> {
    integrate(|rho| rhs_classical_noise(rho, sys, noise), rho0, spec)
}
