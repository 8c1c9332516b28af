//! Multi-frequency initial data for the norm-inflation construction and the
//! Sobolev-in-`eta` norms of the composed solution.

use serde::Serialize;

use crate::diagnostics::{norm_x, resonant_k0, resonant_time, thresholds};
use crate::error::{Error, Result};
use crate::model::{FSource, InitSpec, PhysicalParams, SimConfig, ThresholdFactors, WeightSpec};
use crate::modes::{simulate, Trajectory};
use crate::scalar::{lit, Scalar};

/// Which mode carries the initial delta of each single-frequency run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// `k_2(eta)`, started at `t = 0`.
    K2,
    /// `K = floor(cbrt(c eta pi / 2))`, the mode with the largest product of
    /// echo gains, started at `t_K`.
    ChainOptimal,
    /// A fixed mode, started at its resonant time.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflationOptions<T> {
    pub start: StartMode,
    /// Runs end at `2 eta + margin`.
    pub margin: T,
    pub rtol: T,
    pub atol: T,
    pub weight: WeightSpec,
    pub f_source: FSource,
    /// Truncation; defaults to the resonance requirement.
    pub modes: Option<usize>,
    pub g_forcing_per_l: bool,
}

impl<T: Scalar> Default for InflationOptions<T> {
    fn default() -> Self {
        Self {
            start: StartMode::ChainOptimal,
            margin: lit(100.0),
            rtol: lit(1e-8),
            atol: lit(1e-12),
            weight: WeightSpec::Uniform,
            f_source: FSource::Ode,
            modes: None,
            g_forcing_per_l: false,
        }
    }
}

/// Outcome of one single-frequency run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InflationPoint<T> {
    pub eta: T,
    pub start_mode: usize,
    pub t_start: T,
    pub t_end: T,
    pub modes: usize,
    /// `|theta(t_end)|_X / |theta(t_start)|_X`; absent when the run failed.
    pub psi: Option<T>,
    pub error: Option<String>,
    /// `nu k_3^2 >= 4`, the usable form of the viscosity condition.
    pub viscous_condition: bool,
    pub accepted_steps: usize,
}

/// Single-frequency configuration used by [`inflation_point`].
pub fn inflation_config<T: Scalar>(c: T, eta: T, opts: &InflationOptions<T>) -> (SimConfig<T>, usize) {
    let k2 = thresholds(c, eta, ThresholdFactors::default(), 0).k2;
    let (mode, t_start) = match opts.start {
        StartMode::K2 => (k2, T::zero()),
        StartMode::ChainOptimal => {
            let k = (c * eta * T::PI() * lit(0.5)).cbrt().floor().to_usize().unwrap_or(1).max(1);
            (k, resonant_time(eta, k))
        }
        StartMode::Fixed(k) => (k.max(1), resonant_time(eta, k.max(1))),
    };
    let modes = opts.modes.unwrap_or_else(|| {
        SimConfig::<T>::min_modes_for_resonance(c, eta)
            .max(mode + 3)
            .max(8)
    });
    let mut cfg = SimConfig::new(
        eta,
        modes,
        t_start,
        resonant_time(eta, 0) + opts.margin,
        InitSpec::DeltaTheta { mode },
    );
    cfg.rtol = opts.rtol;
    cfg.atol = opts.atol;
    cfg.f_source = opts.f_source;
    cfg.g_forcing_per_l = opts.g_forcing_per_l;
    (cfg, mode)
}

/// Runs the echo experiment at one frequency. Integration failures are
/// recorded in the point rather than returned.
pub fn inflation_point<T: Scalar>(
    params: &PhysicalParams<T>,
    eta: T,
    opts: &InflationOptions<T>,
) -> (InflationPoint<T>, Option<Trajectory<T>>) {
    let c = params.c();
    let (cfg, mode) = inflation_config(c, eta, opts);
    let k3 = thresholds(c, eta, ThresholdFactors::default(), 0).k3;
    let kf = T::from_index(k3);
    let mut point = InflationPoint {
        eta,
        start_mode: mode,
        t_start: cfg.t_start,
        t_end: cfg.t_end,
        modes: cfg.modes,
        psi: None,
        error: None,
        viscous_condition: params.nu() * kf * kf >= lit(4.0),
        accepted_steps: 0,
    };
    match simulate(&cfg, params) {
        Ok(traj) => {
            let n0 = norm_x(&traj.first().theta, opts.weight);
            point.psi = Some(norm_x(&traj.last().theta, opts.weight) / n0);
            point.accepted_steps = traj.meta.accepted;
            (point, Some(traj))
        }
        Err(e) => {
            point.error = Some(e.to_string());
            (point, None)
        }
    }
}

/// [`inflation_point`] for every `eta` in order; trajectories are dropped.
pub fn inflation_profile<T: Scalar>(
    params: &PhysicalParams<T>,
    eta_set: &[T],
    opts: &InflationOptions<T>,
) -> Vec<InflationPoint<T>> {
    eta_set.iter().map(|&eta| inflation_point(params, eta, opts).0).collect()
}

/// `(1 + eta)^(-sigma - 1/2) / log(2 + eta)`: in `H^sigma` and in no `H^s`,
/// `s > sigma`.
pub fn rho_hat<T: Scalar>(sigma: T, eta: T) -> T {
    (T::one() + eta).powf(-sigma - lit(0.5)) / (lit::<T>(2.0) + eta).ln()
}

/// Frequencies, inflation factors and densities of a composed datum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupSpec<T> {
    pub sigma: T,
    pub eta_set: Vec<T>,
    pub psi: Vec<T>,
    pub rho_hat: Vec<T>,
}

impl<T: Scalar> BlowupSpec<T> {
    pub fn new(sigma: T, eta_set: Vec<T>, psi: Vec<T>) -> Result<Self> {
        if eta_set.is_empty() {
            return Err(Error::Empty("eta set"));
        }
        if psi.len() != eta_set.len() {
            return Err(Error::InvalidConfig(format!(
                "{} inflation factors for {} frequencies",
                psi.len(),
                eta_set.len()
            )));
        }
        if eta_set[0] <= T::zero() || eta_set.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("eta_set", "must be positive and strictly increasing"));
        }
        // tiny shortfalls from integration error on frozen runs are tolerated
        if psi.iter().any(|&p| !(p.is_finite() && p >= T::one() - lit(1e-6))) {
            return Err(Error::param("psi", "inflation factors must be finite and >= 1"));
        }
        let rho_hat = eta_set.iter().map(|&e| rho_hat(sigma, e)).collect();
        Ok(Self {
            sigma,
            eta_set,
            psi,
            rho_hat,
        })
    }

    pub fn amplitudes(&self) -> Vec<T> {
        self.rho_hat.iter().zip(&self.psi).map(|(r, p)| *r / *p).collect()
    }
}

/// `a(eta) = rho_hat(eta) / psi(eta)`.
pub fn compose_initial_data<T: Scalar>(sigma: T, eta_set: &[T], psi: &[T]) -> Result<Vec<T>> {
    Ok(BlowupSpec::new(sigma, eta_set.to_vec(), psi.to_vec())?.amplitudes())
}

/// `|theta(t)|_X / |theta(t_start)|_X` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSeries<T> {
    pub eta: T,
    pub times: Vec<T>,
    pub norms: Vec<T>,
}

impl<T: Scalar> NormSeries<T> {
    pub fn from_trajectory(traj: &Trajectory<T>, weight: WeightSpec) -> Result<Self> {
        let n0 = norm_x(&traj.first().theta, weight);
        if n0 == T::zero() {
            return Err(Error::ZeroReference("initial theta vanishes".into()));
        }
        Ok(Self {
            eta: traj.config.eta,
            times: traj.samples.iter().map(|s| s.t).collect(),
            norms: traj.samples.iter().map(|s| norm_x(&s.theta, weight) / n0).collect(),
        })
    }

    /// Linear interpolation, held constant outside the sampled span.
    pub fn at(&self, t: T) -> T {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.norms[0];
        }
        if t >= self.times[n - 1] {
            return self.norms[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.norms[i - 1] * (T::one() - w) + self.norms[i] * w
    }
}

/// `N_s(t) = sqrt(sum_eta (1 + eta^2)^s a(eta)^2 |theta[eta](t)|_X^2)` on `grid`.
pub fn sobolev_trajectory<T: Scalar>(s: T, series: &[NormSeries<T>], amplitudes: &[T], grid: &[T]) -> Result<Vec<T>> {
    if series.is_empty() {
        return Err(Error::Empty("eta set"));
    }
    if series.len() != amplitudes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} amplitudes for {} trajectories",
            amplitudes.len(),
            series.len()
        )));
    }
    if series.iter().any(|x| x.times.is_empty() || x.times.len() != x.norms.len()) {
        return Err(Error::Empty("norm series"));
    }
    Ok(grid
        .iter()
        .map(|&t| {
            series
                .iter()
                .zip(amplitudes)
                .fold(T::zero(), |acc, (x, &a)| {
                    let v = (T::one() + x.eta * x.eta).powf(s * lit(0.5)) * a * x.at(t);
                    acc + v * v
                })
                .sqrt()
        })
        .collect())
}

/// Geometric frequency grid with `n` points from `lo` to `hi`.
pub fn geometric_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n < 2 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / T::from_index(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo * (r * T::from_index(i)).exp() })
        .collect()
}

/// `true` when `c eta pi >= 1`, i.e. the run has at least one resonant interval.
pub fn is_resonant<T: Scalar>(c: T, eta: T) -> bool {
    resonant_k0(c, eta) >= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_term_unit() {
        let eta = std::f64::consts::E - 2.0;
        assert_relative_eq!(rho_hat(0.0, eta), (1.0 + eta).powf(-0.5), max_relative = 1e-14);
        let a = compose_initial_data(0.0, &[eta], &[1.0]).unwrap();
        assert_relative_eq!(a[0], (1.0 + eta).powf(-0.5), max_relative = 1e-14);
    }

    #[test]
    fn amplitude_times_psi_is_density() {
        let etas = geometric_grid(10.0f64, 1e4, 6);
        let psi: Vec<f64> = etas.iter().map(|e| (0.01 * e).cbrt().exp()).collect();
        let spec = BlowupSpec::new(1.0, etas.clone(), psi.clone()).unwrap();
        for ((a, p), r) in spec.amplitudes().iter().zip(&psi).zip(&spec.rho_hat) {
            assert_relative_eq!(a * p, *r, max_relative = 1e-14);
        }
        // Gevrey-3 budget stays bounded
        assert!(spec.amplitudes().iter().zip(&etas).all(|(a, e)| a * (0.01f64 * e).cbrt().exp() <= 1.0));
    }

    #[test]
    fn spec_validation() {
        assert!(BlowupSpec::new(1.0, vec![], vec![]).is_err());
        assert!(BlowupSpec::new(1.0, vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BlowupSpec::new(1.0, vec![1.0, 2.0], vec![1.0, 0.5]).is_err());
        assert!(BlowupSpec::new(1.0, vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(100.0, 1e5, 5);
        assert_eq!(g[0], 100.0);
        assert_eq!(g[4], 1e5);
        assert_relative_eq!(g[2], 100.0 * 1000f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn single_eta_norm() {
        let x = NormSeries {
            eta: 3.0,
            times: vec![0.0, 1.0, 2.0],
            norms: vec![1.0, 2.0, 4.0],
        };
        let n = sobolev_trajectory(1.0, &[x], &[0.5], &[0.0, 0.5, 2.0, 9.0]).unwrap();
        let w = 10f64.sqrt() * 0.5;
        assert_relative_eq!(n[0], w);
        assert_relative_eq!(n[1], 1.5 * w);
        assert_relative_eq!(n[2], 4.0 * w);
        assert_relative_eq!(n[3], 4.0 * w);
        assert!(sobolev_trajectory::<f64>(1.0, &[], &[], &[0.0]).is_err());
    }

    #[test]
    fn uncoupled_run_has_unit_psi() {
        let p = PhysicalParams::new(0.5, 0.0, 0.0).unwrap();
        let pts = inflation_profile(&p, &[50.0], &InflationOptions { start: StartMode::K2, ..Default::default() });
        assert_relative_eq!(pts[0].psi.unwrap(), 1.0, max_relative = 1e-12);
        assert_eq!(pts[0].start_mode, 1);
    }

    #[test]
    fn chain_optimal_start() {
        let (cfg, k) = inflation_config(0.001, 39789.0, &InflationOptions::default());
        assert_eq!(k, 3);
        assert_eq!(cfg.t_start, resonant_time(39789.0, 3));
        assert_eq!(cfg.t_end, 2.0 * 39789.0 + 100.0);
        assert!(cfg.modes >= 20);
    }
}
