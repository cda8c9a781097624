//! Domain types shared by every module: the 2x2 density operator, parameter
//! bundles, master-equation coefficients and trajectory records.

use num_complex::Complex64;
use thiserror::Error;

/// CODATA Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;
/// CODATA reduced Planck constant, J*s.
pub const HBAR: f64 = 1.054571817e-34;
/// k_B/hbar in 1/(s*K); multiplies a Kelvin temperature into an angular frequency.
pub const KB_OVER_HBAR: f64 = K_B / HBAR;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

fn require_finite(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ParamError::NotFinite { name, value })
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    require_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn require_non_negative(name: &'static str, value: f64) -> Result<f64, ParamError> {
    require_finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ParamError::Negative { name, value })
    }
}

/// Convert a temperature in Kelvin to the thermal angular frequency k_B T / hbar (1/s).
pub fn kelvin_to_thermal_freq(temperature_kelvin: f64) -> Result<f64, ParamError> {
    require_positive("temperature", temperature_kelvin)?;
    Ok(temperature_kelvin * KB_OVER_HBAR)
}

/// 2x2 density operator in the sigma_z eigenbasis: |0> = ions at sites 1,3;
/// |1> = ions at sites 2,4.
///
/// All four complex entries are stored independently. The verbatim spin-boson
/// equations evolve rho01 and rho10 by non-conjugate right-hand sides, so
/// Hermiticity is a diagnostic ([`Self::hermiticity_defect`]), not a storage
/// invariant. Same for the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    pub rho00: Complex64,
    pub rho01: Complex64,
    pub rho10: Complex64,
    pub rho11: Complex64,
}

impl DensityMatrix2 {
    pub const ZERO: Self = Self {
        rho00: Complex64::new(0.0, 0.0),
        rho01: Complex64::new(0.0, 0.0),
        rho10: Complex64::new(0.0, 0.0),
        rho11: Complex64::new(0.0, 0.0),
    };

    pub fn new(rho00: Complex64, rho01: Complex64, rho10: Complex64, rho11: Complex64) -> Self {
        Self {
            rho00,
            rho01,
            rho10,
            rho11,
        }
    }

    /// Projector onto the pure state c0|0> + c1|1>.
    ///
    /// The amplitudes are normalized first; rho11 is stored as the exact
    /// complement 1 - rho00 and rho10 as the exact conjugate of rho01, so the
    /// constructed matrix has trace 1 and zero Hermiticity defect bit-exactly.
    pub fn from_pure(c0: Complex64, c1: Complex64) -> Self {
        let norm_sq = c0.norm_sqr() + c1.norm_sqr();
        let p0 = c0.norm_sqr() / norm_sq;
        let rho01 = c0 * c1.conj() / norm_sq;
        Self {
            rho00: Complex64::new(p0, 0.0),
            rho01,
            rho10: rho01.conj(),
            rho11: Complex64::new(1.0 - p0, 0.0),
        }
    }

    /// Diagonal (classical) state with populations p0, p1.
    pub fn diagonal(p0: f64, p1: f64) -> Self {
        Self {
            rho00: Complex64::new(p0, 0.0),
            rho01: Complex64::new(0.0, 0.0),
            rho10: Complex64::new(0.0, 0.0),
            rho11: Complex64::new(p1, 0.0),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.rho00 + self.rho11
    }

    /// |rho00 + rho11 - 1|.
    pub fn trace_defect(&self) -> f64 {
        (self.trace() - Complex64::new(1.0, 0.0)).norm()
    }

    /// |rho10 - conj(rho01)|.
    pub fn hermiticity_defect(&self) -> f64 {
        (self.rho10 - self.rho01.conj()).norm()
    }

    /// tr(rho^2) evaluated as |rho00|^2 + |rho11|^2 + 2 Re(rho01 rho10).
    pub fn purity(&self) -> f64 {
        self.rho00.norm_sqr() + self.rho11.norm_sqr() + 2.0 * (self.rho01 * self.rho10).re
    }

    pub fn is_finite(&self) -> bool {
        [self.rho00, self.rho01, self.rho10, self.rho11]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn diagnostics(&self) -> StepDiagnostics {
        StepDiagnostics {
            trace_defect: self.trace_defect(),
            hermiticity_defect: self.hermiticity_defect(),
            purity: self.purity(),
        }
    }
}

impl std::ops::Add for DensityMatrix2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            rho00: self.rho00 + rhs.rho00,
            rho01: self.rho01 + rhs.rho01,
            rho10: self.rho10 + rhs.rho10,
            rho11: self.rho11 + rhs.rho11,
        }
    }
}

impl std::ops::Sub for DensityMatrix2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            rho00: self.rho00 - rhs.rho00,
            rho01: self.rho01 - rhs.rho01,
            rho10: self.rho10 - rhs.rho10,
            rho11: self.rho11 - rhs.rho11,
        }
    }
}

impl std::ops::Mul<f64> for DensityMatrix2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self {
            rho00: self.rho00 * s,
            rho01: self.rho01 * s,
            rho10: self.rho10 * s,
            rho11: self.rho11 * s,
        }
    }
}

/// The equal superposition (|0> + |1>)/sqrt(2) as a density matrix: every
/// entry exactly 0.5.
pub fn initial_superposition() -> DensityMatrix2 {
    let half = Complex64::new(0.5, 0.0);
    DensityMatrix2::new(half, half, half, half)
}

/// Two-level system parameters: asymmetry energy omega0 and tunneling matrix
/// element delta0, both angular frequencies in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega0: f64,
    pub delta0: f64,
}

impl SystemParams {
    pub fn new(omega0: f64, delta0: f64) -> Result<Self, ParamError> {
        require_finite("omega0", omega0)?;
        require_non_negative("delta0", delta0)?;
        Ok(Self { omega0, delta0 })
    }

    pub fn with_delta0(self, delta0: f64) -> Result<Self, ParamError> {
        Self::new(self.omega0, delta0)
    }
}

/// Ohmic Lorentz-Drude environment: J(w) = (2 M gamma0 / pi) w wc^2/(wc^2+w^2),
/// plus the thermal frequency k_B T / hbar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentParams {
    /// Dimensionless scale factor M.
    pub mass_scale: f64,
    /// Effective system-environment coupling strength, 1/s.
    pub gamma0: f64,
    /// Lorentz-Drude cutoff frequency, 1/s.
    pub omega_c: f64,
    /// k_B T / hbar, 1/s.
    pub thermal_freq: f64,
}

impl EnvironmentParams {
    pub fn new(
        mass_scale: f64,
        gamma0: f64,
        omega_c: f64,
        thermal_freq: f64,
    ) -> Result<Self, ParamError> {
        require_positive("mass_scale", mass_scale)?;
        require_non_negative("gamma0", gamma0)?;
        require_positive("omega_c", omega_c)?;
        require_positive("thermal_freq", thermal_freq)?;
        Ok(Self {
            mass_scale,
            gamma0,
            omega_c,
            thermal_freq,
        })
    }
}

/// Master-equation coefficient set. zeta = f - i*gamma is derived on demand,
/// so the defining identity holds bit-exactly by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    d: f64,
    f: f64,
    gamma: f64,
}

impl CoefficientSet {
    pub fn new(d: f64, f: f64, gamma: f64) -> Result<Self, ParamError> {
        require_finite("D", d)?;
        require_finite("f", f)?;
        require_finite("gamma", gamma)?;
        Ok(Self { d, f, gamma })
    }

    /// All-zero coefficients: the purely unitary limit.
    pub fn zero() -> Self {
        Self {
            d: 0.0,
            f: 0.0,
            gamma: 0.0,
        }
    }

    /// Decoherence coefficient D, 1/s.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Real part of zeta, 1/s.
    pub fn f(&self) -> f64 {
        self.f
    }

    /// Decay coefficient gamma, 1/s.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// zeta = f - i*gamma.
    pub fn zeta(&self) -> Complex64 {
        Complex64::new(self.f, -self.gamma)
    }

    /// conj(zeta) = f + i*gamma, the combination entering the rho01/rho10 rows.
    pub fn zeta_conj(&self) -> Complex64 {
        Complex64::new(self.f, self.gamma)
    }
}

/// White-noise strength alpha for C(t) = alpha * delta(t), 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub alpha: f64,
}

impl NoiseParams {
    pub fn new(alpha: f64) -> Result<Self, ParamError> {
        require_non_negative("alpha", alpha)?;
        Ok(Self { alpha })
    }
}

/// Per-step diagnostics stored alongside every trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub trace_defect: f64,
    pub hermiticity_defect: f64,
    pub purity: f64,
}

/// A sampled evolution: strictly increasing times, one state and one
/// diagnostics record per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DensityMatrix2>,
    diagnostics: Vec<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory must contain at least one sample")]
    Empty,
    #[error("times, states and diagnostics must have equal lengths")]
    LengthMismatch,
    #[error("times must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<DensityMatrix2>,
        diagnostics: Vec<StepDiagnostics>,
    ) -> Result<Self, TrajectoryError> {
        if times.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if times.len() != states.len() || times.len() != diagnostics.len() {
            return Err(TrajectoryError::LengthMismatch);
        }
        for (i, pair) in times.windows(2).enumerate() {
            // also rejects NaN, which fails every ordered comparison
            if pair[1].partial_cmp(&pair[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(TrajectoryError::NotIncreasing(i + 1));
            }
        }
        Ok(Self {
            times,
            states,
            diagnostics,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty trajectories
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DensityMatrix2] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }

    pub fn last_state(&self) -> &DensityMatrix2 {
        self.states.last().expect("non-empty by construction")
    }

    /// True when both trajectories were sampled on bit-identical time grids.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.times == other.times
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn superposition_is_all_halves() {
        let rho = initial_superposition();
        let half = Complex64::new(0.5, 0.0);
        assert_eq!(rho.rho00, half);
        assert_eq!(rho.rho01, half);
        assert_eq!(rho.rho10, half);
        assert_eq!(rho.rho11, half);
        assert_eq!(rho.trace(), Complex64::new(1.0, 0.0));
        assert_eq!(rho.purity(), 1.0);
    }

    #[test]
    fn purity_of_reference_states() {
        assert_eq!(DensityMatrix2::diagonal(1.0, 0.0).purity(), 1.0);
        assert_eq!(DensityMatrix2::diagonal(0.5, 0.5).purity(), 0.5);
    }

    #[test]
    fn kelvin_conversion_matches_codata() {
        // 310 K pinned by direct arithmetic on the CODATA constants.
        let f = kelvin_to_thermal_freq(310.0).unwrap();
        assert_relative_eq!(f, 4.058530515423399e13, max_relative = 1e-12);
        // inverse of the constant maps back to 1/s
        let t = 1.0 / KB_OVER_HBAR;
        assert_relative_eq!(
            kelvin_to_thermal_freq(t).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn kelvin_conversion_rejects_non_positive() {
        assert!(kelvin_to_thermal_freq(0.0).is_err());
        assert!(kelvin_to_thermal_freq(-1.0).is_err());
        assert!(kelvin_to_thermal_freq(f64::NAN).is_err());
    }

    #[test]
    fn zeta_identity_is_bit_exact() {
        let co = CoefficientSet::new(1.25, 0.375, 2.5e7).unwrap();
        assert_eq!(co.zeta(), Complex64::new(co.f(), -co.gamma()));
        assert_eq!(co.zeta_conj(), co.zeta().conj());
    }

    #[test]
    fn trajectory_rejects_bad_grids() {
        let s = initial_superposition();
        let d = s.diagnostics();
        assert_eq!(
            Trajectory::new(vec![0.0, 0.0], vec![s, s], vec![d, d]),
            Err(TrajectoryError::NotIncreasing(1))
        );
        assert_eq!(
            Trajectory::new(vec![0.0, 1.0], vec![s], vec![d]),
            Err(TrajectoryError::LengthMismatch)
        );
        assert_eq!(
            Trajectory::new(vec![], vec![], vec![]),
            Err(TrajectoryError::Empty)
        );
    }

    proptest! {
        #[test]
        fn kelvin_is_exactly_linear(t in 1e-6f64..1e6) {
            let one = kelvin_to_thermal_freq(t).unwrap();
            let two = kelvin_to_thermal_freq(2.0 * t).unwrap();
            prop_assert_eq!(two, 2.0 * one); // doubling is exact in IEEE arithmetic
        }

        #[test]
        fn pure_state_construction_invariants(
            re0 in -1.0f64..1.0, im0 in -1.0f64..1.0,
            re1 in -1.0f64..1.0, im1 in -1.0f64..1.0,
        ) {
            let c0 = Complex64::new(re0, im0);
            let c1 = Complex64::new(re1, im1);
            prop_assume!(c0.norm_sqr() + c1.norm_sqr() > 1e-6);
            let rho = DensityMatrix2::from_pure(c0, c1);
            prop_assert_eq!(rho.trace_defect(), 0.0);
            prop_assert_eq!(rho.hermiticity_defect(), 0.0);
            prop_assert!((rho.purity() - 1.0).abs() < 1e-12);
        }
    }
}
