//! Monte Carlo realization of the classical-noise picture: each realization
//! evolves a pure state unitarily under the stochastic Hamiltonian
//! H0 + z(t) sigma_z; coherence decay appears only in the ensemble average,
//! which converges to the white-noise master equation.
//!
//! Determinism contract: realization k draws from a ChaCha stream derived from
//! (master_seed, k), and the ensemble reduction folds realizations in
//! ascending index order in fixed-size batches, so results are bit-identical
//! for any worker count.

use crate::dynamics::{fixed_step_count, grid_time};
use crate::types::{
    DensityMatrix2, NoiseParams, ParamError, StepDiagnostics, SystemParams, Trajectory,
};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

/// Operator splitting for one step of exp(-i(H0 + noise) dt).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// U_k = exp(-i H0 dt) exp(-i sigma_z W_k); first order in the cross terms.
    #[default]
    FirstOrder,
    /// exp(-i H0 dt/2) exp(-i sigma_z W_k) exp(-i H0 dt/2), for convergence studies.
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub realizations: u64,
    pub dt: f64,
    pub t_end: f64,
    pub master_seed: u64,
    pub store_stride: usize,
    pub splitting: Splitting,
}

impl EnsembleSpec {
    pub fn new(
        realizations: u64,
        dt: f64,
        t_end: f64,
        master_seed: u64,
        store_stride: usize,
    ) -> Result<Self, ParamError> {
        if realizations == 0 {
            return Err(ParamError::NotPositive {
                name: "realizations",
                value: 0.0,
            });
        }
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
            realizations,
            dt,
            t_end,
            master_seed,
            store_stride,
            splitting: Splitting::default(),
        })
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }
}

/// Per-time standard errors of the ensemble mean of rho01.
#[derive(Debug, Clone, PartialEq)]
pub struct StderrSeries {
    pub re_rho01: Vec<f64>,
    pub im_rho01: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub mean: Trajectory,
    /// None for a single-realization ensemble (sample variance undefined).
    pub stderr: Option<StderrSeries>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochasticError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("realization index {index} out of range for {realizations} realizations")]
    IndexOutOfRange { index: u64, realizations: u64 },
    #[error("time grids differ; the comparison requires identical grids")]
    GridMismatch,
}

/// 2x2 unitary exp(-i H0 h) for H0 = (omega0/2) sigma_z - (delta0/2) sigma_x,
/// via the Pauli rotation formula. Stored as (u00, u01); the full matrix is
/// [[u00, u01], [u01, conj(u00)]].
#[derive(Clone, Copy)]
struct Propagator {
    u00: Complex64,
    u01: Complex64,
}

impl Propagator {
    fn new(sys: &SystemParams, h: f64) -> Self {
        let big_omega = (sys.omega0 * sys.omega0 + sys.delta0 * sys.delta0).sqrt();
        if big_omega == 0.0 || h == 0.0 {
            return Self {
                u00: Complex64::new(1.0, 0.0),
                u01: Complex64::new(0.0, 0.0),
            };
        }
        let theta = 0.5 * big_omega * h;
        let nz = sys.omega0 / big_omega;
        let nx = -sys.delta0 / big_omega;
        Self {
            u00: Complex64::new(theta.cos(), -nz * theta.sin()),
            u01: Complex64::new(0.0, -nx * theta.sin()),
        }
    }

    fn apply(&self, c0: Complex64, c1: Complex64) -> (Complex64, Complex64) {
        (
            self.u00 * c0 + self.u01 * c1,
            self.u01 * c0 + self.u00.conj() * c1,
        )
    }
}

fn phase_kick(c0: Complex64, c1: Complex64, w: f64) -> (Complex64, Complex64) {
    let ph = Complex64::new(w.cos(), -w.sin()); // e^{-iW}
    (c0 * ph, c1 * ph.conj())
}

struct RealizationGrid {
    steps: u64,
    dt: f64,
    t_end: f64,
}

impl RealizationGrid {
    fn stored_times(&self, stride: usize) -> Vec<f64> {
        let mut times = vec![0.0];
        for k in 1..=self.steps {
            if k % stride as u64 == 0 || k == self.steps {
                let t = grid_time(k, self.steps, self.dt, self.t_end);
                if *times.last().expect("t=0 present") < t {
                    times.push(t);
                }
            }
        }
        times
    }
}

fn run_realization<FStore>(
    sys: &SystemParams,
    noise: &NoiseParams,
    spec: &EnsembleSpec,
    index: u64,
    mut store: FStore,
) where
    FStore: FnMut(DensityMatrix2),
{
    let steps = fixed_step_count(spec.dt, spec.t_end);
    let full = Propagator::new(sys, spec.dt);
    let half = Propagator::new(sys, 0.5 * spec.dt);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
    rng.set_stream(index);

    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut c0 = Complex64::new(amp, 0.0);
    let mut c1 = Complex64::new(amp, 0.0);
    store(DensityMatrix2::from_pure(c0, c1));

    for k in 0..steps {
        let t0 = grid_time(k, steps, spec.dt, spec.t_end);
        let t1 = grid_time(k + 1, steps, spec.dt, spec.t_end);
        let h = t1 - t0;
        let z: f64 = rng.sample(StandardNormal);
        let w = (noise.alpha * h).sqrt() * z; // W_k ~ Normal(0, alpha h)
        let (prop_a, prop_b) = match spec.splitting {
            Splitting::FirstOrder => (None, full),
            Splitting::Strang => (Some(half), half),
        };
        if h != spec.dt {
            // shortened final step: rebuild the propagator(s) for h
            let full_h = Propagator::new(sys, h);
            let half_h = Propagator::new(sys, 0.5 * h);
            let (a, b) = match spec.splitting {
                Splitting::FirstOrder => (None, full_h),
                Splitting::Strang => (Some(half_h), half_h),
            };
            (c0, c1) = step(c0, c1, w, a, b);
        } else {
            (c0, c1) = step(c0, c1, w, prop_a, prop_b);
        }
        // the splitting is exactly unitary; renormalizing only scrubs rounding
        let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        c0 /= norm;
        c1 /= norm;
        if k + 1 == steps || (k + 1) % spec.store_stride as u64 == 0 {
            let t = grid_time(k + 1, steps, spec.dt, spec.t_end);
            if t > t0 || k + 1 == steps {
                store(DensityMatrix2::from_pure(c0, c1));
            }
        }
    }
}

fn step(
    c0: Complex64,
    c1: Complex64,
    w: f64,
    pre: Option<Propagator>,
    post: Propagator,
) -> (Complex64, Complex64) {
    let (mut a, mut b) = (c0, c1);
    if let Some(p) = pre {
        (a, b) = p.apply(a, b);
    }
    (a, b) = phase_kick(a, b, w);
    post.apply(a, b)
}

/// One unitary noise realization, recorded as a density-matrix trajectory.
pub fn sample_realization(
    sys: &SystemParams,
    noise: &NoiseParams,
    spec: &EnsembleSpec,
    index: u64,
) -> Result<Trajectory, StochasticError> {
    if index >= spec.realizations {
        return Err(StochasticError::IndexOutOfRange {
            index,
            realizations: spec.realizations,
        });
    }
    let grid = RealizationGrid {
        steps: fixed_step_count(spec.dt, spec.t_end),
        dt: spec.dt,
        t_end: spec.t_end,
    };
    let times = grid.stored_times(spec.store_stride);
    let mut states = Vec::with_capacity(times.len());
    run_realization(sys, noise, spec, index, |s| states.push(s));
    let diagnostics: Vec<StepDiagnostics> = states.iter().map(|s| s.diagnostics()).collect();
    Ok(Trajectory::new(times, states, diagnostics).expect("valid grid"))
}

/// Kahan-compensated scalar accumulator; keeps the deterministic sequential
/// reduction accurate to a few ulps over 1e4 addends.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x + self.carry;
        let t = self.sum + y;
        self.carry = y - (t - self.sum);
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

#[derive(Clone, Default)]
struct TimeAccumulator {
    re: [Kahan; 4],
    im: [Kahan; 4],
    sq_re01: Kahan,
    sq_im01: Kahan,
}

impl TimeAccumulator {
    fn add(&mut self, s: &DensityMatrix2) {
        let entries = [s.rho00, s.rho01, s.rho10, s.rho11];
        for (k, z) in entries.iter().enumerate() {
            self.re[k].add(z.re);
            self.im[k].add(z.im);
        }
        self.sq_re01.add(s.rho01.re * s.rho01.re);
        self.sq_im01.add(s.rho01.im * s.rho01.im);
    }
}

/// Fixed batch size for the parallel map; independent of the worker count so
/// the (sequential, ascending-index) reduction is scheduling-invariant.
const BATCH: u64 = 256;

/// Ensemble mean of [`sample_realization`] over all indices, with per-time
/// standard errors of Re/Im rho01.
pub fn ensemble_average(
    sys: &SystemParams,
    noise: &NoiseParams,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, StochasticError> {
    let grid = RealizationGrid {
        steps: fixed_step_count(spec.dt, spec.t_end),
        dt: spec.dt,
        t_end: spec.t_end,
    };
    let times = grid.stored_times(spec.store_stride);
    let n_times = times.len();
    let n = spec.realizations;

    let mut acc: Vec<TimeAccumulator> = vec![TimeAccumulator::default(); n_times];
    let mut batch_start = 0u64;
    while batch_start < n {
        let batch_end = (batch_start + BATCH).min(n);
        // parallel map over the batch, order restored by collect
        let series: Vec<Vec<DensityMatrix2>> = (batch_start..batch_end)
            .into_par_iter()
            .map(|index| {
                let mut states = Vec::with_capacity(n_times);
                run_realization(sys, noise, spec, index, |s| states.push(s));
                states
            })
            .collect();
        // sequential ascending-index fold
        for states in &series {
            debug_assert_eq!(states.len(), n_times);
            for (a, s) in acc.iter_mut().zip(states) {
                a.add(s);
            }
        }
        batch_start = batch_end;
    }

    let inv_n = 1.0 / n as f64;
    let mut states = Vec::with_capacity(n_times);
    let mut stderr_re = Vec::with_capacity(n_times);
    let mut stderr_im = Vec::with_capacity(n_times);
    for a in &acc {
        let mean = DensityMatrix2::new(
            Complex64::new(a.re[0].value() * inv_n, a.im[0].value() * inv_n),
            Complex64::new(a.re[1].value() * inv_n, a.im[1].value() * inv_n),
            Complex64::new(a.re[2].value() * inv_n, a.im[2].value() * inv_n),
            Complex64::new(a.re[3].value() * inv_n, a.im[3].value() * inv_n),
        );
        if n > 1 {
            let nf = n as f64;
            let var_re = ((a.sq_re01.value() - a.re[1].value() * a.re[1].value() * inv_n)
                / (nf - 1.0))
                .max(0.0);
            let var_im = ((a.sq_im01.value() - a.im[1].value() * a.im[1].value() * inv_n)
                / (nf - 1.0))
                .max(0.0);
            stderr_re.push((var_re * inv_n).sqrt());
            stderr_im.push((var_im * inv_n).sqrt());
        }
        states.push(mean);
    }
    let diagnostics: Vec<StepDiagnostics> = states.iter().map(|s| s.diagnostics()).collect();
    let mean = Trajectory::new(times, states, diagnostics).expect("valid grid");
    let stderr = (n > 1).then_some(StderrSeries {
        re_rho01: stderr_re,
        im_rho01: stderr_im,
    });
    Ok(EnsembleResult { mean, stderr })
}

/// Deviation of an ensemble mean from a reference trajectory on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    /// Sup-norm deviation per element, ordered rho00, rho01, rho10, rho11.
    pub sup: [f64; 4],
    /// Per-time deviation per element, same order.
    pub per_time: Vec<[f64; 4]>,
    /// Fraction of time points where Re or Im rho01 deviates by more than
    /// 5x its standard error. None when the ensemble has no stderr (N = 1).
    pub fraction_beyond_5_stderr: Option<f64>,
}

pub fn compare_to_master(
    result: &EnsembleResult,
    reference: &Trajectory,
) -> Result<DeviationReport, StochasticError> {
    if !result.mean.same_grid(reference) {
        return Err(StochasticError::GridMismatch);
    }
    let mut sup = [0.0f64; 4];
    let mut per_time = Vec::with_capacity(reference.len());
    for (m, r) in result.mean.states().iter().zip(reference.states()) {
        let dev = [
            (m.rho00 - r.rho00).norm(),
            (m.rho01 - r.rho01).norm(),
            (m.rho10 - r.rho10).norm(),
            (m.rho11 - r.rho11).norm(),
        ];
        for k in 0..4 {
            sup[k] = sup[k].max(dev[k]);
        }
        per_time.push(dev);
    }
    let fraction_beyond_5_stderr = result.stderr.as_ref().map(|se| {
        let mut outliers = 0usize;
        for (i, (m, r)) in result
            .mean
            .states()
            .iter()
            .zip(reference.states())
            .enumerate()
        {
            let dre = (m.rho01.re - r.rho01.re).abs();
            let dim = (m.rho01.im - r.rho01.im).abs();
            if dre > 5.0 * se.re_rho01[i] || dim > 5.0 * se.im_rho01[i] {
                outliers += 1;
            }
        }
        outliers as f64 / reference.len() as f64
    });
    Ok(DeviationReport {
        sup,
        per_time,
        fraction_beyond_5_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve_classical_noise, IntegratorSpec};
    use crate::types::initial_superposition;

    fn sys(omega0: f64, delta0: f64) -> SystemParams {
        SystemParams::new(omega0, delta0).unwrap()
    }

    fn noise(alpha: f64) -> NoiseParams {
        NoiseParams::new(alpha).unwrap()
    }

    #[test]
    fn zero_noise_realization_is_the_noise_free_unitary() {
        // omega0 only: c0 picks up e^{-i omega0 t / 2}, so rho01 = 0.5 e^{-i omega0 t}
        let spec = EnsembleSpec::new(4, 1e-3, 1.0, 42, 100).unwrap();
        let traj = sample_realization(&sys(2.0, 0.0), &noise(0.0), &spec, 0).unwrap();
        for (t, s) in traj.times().iter().zip(traj.states()) {
            let expected = Complex64::new(0.5, 0.0) * Complex64::new(0.0, -2.0 * t).exp();
            assert!((s.rho01 - expected).norm() < 1e-12);
        }
        // and every realization is identical
        let other = sample_realization(&sys(2.0, 0.0), &noise(0.0), &spec, 3).unwrap();
        assert_eq!(traj, other);
    }

    #[test]
    fn zero_noise_matches_master_equation_with_tunneling() {
        let s = sys(3.0, 5.0);
        let espec = EnsembleSpec::new(1, 1e-4, 0.7, 1, 700).unwrap();
        let traj = sample_realization(&s, &noise(0.0), &espec, 0).unwrap();
        let ispec = IntegratorSpec::fixed(1e-4, 0.7, 700).unwrap();
        let master =
            evolve_classical_noise(&s, &noise(0.0), &initial_superposition(), &ispec).unwrap();
        assert!(traj.same_grid(&master));
        for (a, b) in traj.states().iter().zip(master.states()) {
            assert!((a.rho01 - b.rho01).norm() < 1e-9);
            assert!((a.rho00 - b.rho00).norm() < 1e-9);
        }
    }

    #[test]
    fn pure_phase_noise_keeps_coherence_magnitude() {
        // delta0 = 0, omega0 = 0: sigma_z generates phase only, |rho01| = 0.5 always
        let spec = EnsembleSpec::new(2, 1e-2, 2.0, 7, 10).unwrap();
        let traj = sample_realization(&sys(0.0, 0.0), &noise(1.5), &spec, 1).unwrap();
        for s in traj.states() {
            assert!((s.rho01.norm() - 0.5).abs() < 1e-12);
            assert!((s.rho00.re - 0.5).abs() < 1e-12);
            assert!((s.purity() - 1.0).abs() < 1e-12);
            assert_eq!(s.trace_defect(), 0.0);
        }
    }

    #[test]
    fn realizations_are_deterministic_per_seed_and_index() {
        let spec = EnsembleSpec::new(8, 1e-3, 0.5, 99, 50).unwrap();
        let s = sys(1.0, 2.0);
        let a = sample_realization(&s, &noise(0.8), &spec, 5).unwrap();
        let b = sample_realization(&s, &noise(0.8), &spec, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_realization(&s, &noise(0.8), &spec, 6).unwrap();
        assert_ne!(a, c);
        assert!(matches!(
            sample_realization(&s, &noise(0.8), &spec, 8),
            Err(StochasticError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn ensemble_mean_matches_gaussian_average() {
        // alpha t = 1: E[Re rho01] = 0.5 e^{-2 alpha t} = 0.5 e^-2 (desk pin)
        let spec = EnsembleSpec::new(10_000, 1e-2, 1.0, 2024, 100).unwrap();
        let result = ensemble_average(&sys(0.0, 0.0), &noise(1.0), &spec).unwrap();
        let last = result.mean.len() - 1;
        let mean = result.mean.states()[last].rho01.re;
        let se = result.stderr.as_ref().unwrap().re_rho01[last];
        let expected = 0.06766764161830635;
        assert!(
            (mean - expected).abs() < 5.0 * se,
            "mean {mean} vs {expected} with stderr {se}"
        );
    }

    #[test]
    fn ensemble_mean_trace_stays_unit() {
        let spec = EnsembleSpec::new(500, 1e-3, 0.4, 5, 40).unwrap();
        let result = ensemble_average(&sys(2.0, 4.0), &noise(1.0), &spec).unwrap();
        for d in result.mean.diagnostics() {
            assert!(d.trace_defect <= 1e-12);
        }
    }

    #[test]
    fn single_realization_ensemble_is_degenerate() {
        let spec = EnsembleSpec::new(1, 1e-3, 0.3, 11, 30).unwrap();
        let s = sys(1.0, 1.0);
        let result = ensemble_average(&s, &noise(0.5), &spec).unwrap();
        assert!(result.stderr.is_none());
        let single = sample_realization(&s, &noise(0.5), &spec, 0).unwrap();
        assert_eq!(result.mean.states(), single.states());
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let spec = EnsembleSpec::new(64, 1e-3, 0.2, 3, 20).unwrap();
        let result = ensemble_average(&sys(1.0, 3.0), &noise(0.6), &spec).unwrap();
        let report = compare_to_master(&result, &result.mean).unwrap();
        assert_eq!(report.sup, [0.0; 4]);
        assert_eq!(report.fraction_beyond_5_stderr, Some(0.0));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let spec = EnsembleSpec::new(4, 1e-3, 0.2, 3, 20).unwrap();
        let s = sys(1.0, 3.0);
        let result = ensemble_average(&s, &noise(0.6), &spec).unwrap();
        let other = evolve_classical_noise(
            &s,
            &noise(0.6),
            &initial_superposition(),
            &IntegratorSpec::fixed(2e-3, 0.2, 20).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            compare_to_master(&result, &other),
            Err(StochasticError::GridMismatch)
        ));
    }

    #[test]
    fn stderr_shrinks_like_inverse_sqrt_n() {
        let s = sys(0.0, 0.0);
        let run = |n: u64| {
            let spec = EnsembleSpec::new(n, 1e-2, 0.5, 77, 5).unwrap();
            let r = ensemble_average(&s, &noise(1.0), &spec).unwrap();
            let se = r.stderr.unwrap();
            // skip t=0 where all realizations coincide
            se.re_rho01[1..].iter().sum::<f64>() / (se.re_rho01.len() - 1) as f64
        };
        let ratio = run(4000) / run(2000);
        let expected = 1.0 / 2.0_f64.sqrt();
        assert!(
            (ratio / expected - 1.0).abs() < 0.1,
            "stderr ratio {ratio} vs {expected}"
        );
    }

    #[test]
    fn reduction_is_worker_count_invariant() {
        let s = sys(0.0, 1e7);
        let spec = EnsembleSpec::new(600, 1e-9, 2e-7, 31337, 20).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| ensemble_average(&s, &noise(5e6), &spec).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one, four); // bit-identical, not merely close
    }

    #[test]
    fn strang_splitting_also_converges_to_master() {
        let s = sys(0.0, 1e7);
        let a = noise(5e6);
        let spec = EnsembleSpec::new(2000, 1e-9, 2e-7, 8, 20)
            .unwrap()
            .with_splitting(Splitting::Strang);
        let result = ensemble_average(&s, &a, &spec).unwrap();
        let master = evolve_classical_noise(
            &s,
            &a,
            &initial_superposition(),
            &IntegratorSpec::fixed(1e-9, 2e-7, 20).unwrap(),
        )
        .unwrap();
        let report = compare_to_master(&result, &master).unwrap();
        assert!(report.sup[1] < 5.0 / (2000f64).sqrt());
    }
}
