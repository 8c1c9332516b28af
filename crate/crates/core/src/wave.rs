//! Traveling-wave amplitudes `f(t)` (vorticity) and `g(t)` (temperature).
//!
//! ```text
//! f' = -nu (k^2 + k^2 t^2) f - k g
//! g' = alpha / (k^2 + k^2 t^2) f
//! ```

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expo::{kernel_integral, ExpoStepper, ShearDecay, SplitSystem};
use crate::model::PhysicalParams;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveState<T> {
    pub t: T,
    pub f: T,
    pub g: T,
    pub k_wave: u32,
}

pub fn wave_ode_rhs<T: Scalar>(t: T, f: T, g: T, params: &PhysicalParams<T>, k_wave: u32) -> (T, T) {
    let k = T::from_index(k_wave as usize);
    let sym = k * k + k * k * t * t;
    let df = -params.nu() * sym * f - k * g;
    let dg = if params.alpha() == T::zero() {
        T::zero()
    } else {
        params.alpha() / sym * f
    };
    (df, dg)
}

struct WaveSystem<T> {
    k: T,
    nu: T,
    alpha: T,
    /// `g` when it is held fixed (`alpha = 0`); `None` makes it a component.
    frozen_g: Option<T>,
}

impl<T: Scalar> SplitSystem<T> for WaveSystem<T> {
    fn dim(&self) -> usize {
        if self.frozen_g.is_some() {
            1
        } else {
            2
        }
    }

    fn decay(&self, i: usize) -> Option<ShearDecay<T>> {
        (i == 0 && self.nu > T::zero()).then_some(ShearDecay {
            nu: self.nu,
            l: self.k,
            eta: T::zero(),
        })
    }

    fn coupling(&self, t: T, u: &[Complex<T>], out: &mut [Complex<T>]) {
        match self.frozen_g {
            Some(g) => out[0] = Complex::new(-self.k * g, T::zero()),
            None => {
                let sym = self.k * self.k * (T::one() + t * t);
                out[0] = Complex::new(-self.k * u[1].re, T::zero());
                out[1] = Complex::new(self.alpha / sym * u[0].re, T::zero());
            }
        }
    }
}

/// Integrates the wave ODE from `(grid[0], f0, g0)` and samples it on `grid`.
/// With `alpha = 0`, `g` is not integrated and stays exactly `g0`.
pub fn solve_wave_ode<T: Scalar>(
    params: &PhysicalParams<T>,
    k_wave: u32,
    f0: T,
    g0: T,
    grid: &[T],
    rtol: T,
    atol: T,
) -> Result<Vec<WaveState<T>>> {
    if k_wave == 0 {
        return Err(Error::param("k_wave", "must be >= 1"));
    }
    if grid.is_empty() {
        return Err(Error::Empty("wave time grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("grid", "must be finite and strictly increasing"));
    }
    if !(f0.is_finite() && g0.is_finite()) {
        return Err(Error::param("f0", "initial data must be finite"));
    }
    let sys = WaveSystem {
        k: T::from_index(k_wave as usize),
        nu: params.nu(),
        alpha: params.alpha(),
        frozen_g: (params.alpha() == T::zero()).then_some(g0),
    };
    let mut u = vec![Complex::new(f0, T::zero())];
    if sys.frozen_g.is_none() {
        u.push(Complex::new(g0, T::zero()));
    }
    let mut stepper = ExpoStepper::new(rtol, atol);
    let mut t = grid[0];
    let span = grid[grid.len() - 1] - grid[0];
    let mut h = (span * lit(1e-3)).max(lit(1e-6)).min(lit(0.01));
    let mut out = Vec::with_capacity(grid.len());
    for &ts in grid {
        if ts > t {
            stepper.advance(&sys, &mut t, &mut u, ts, &mut h)?;
        }
        out.push(WaveState {
            t: ts,
            f: u[0].re,
            g: sys.frozen_g.unwrap_or_else(|| u[1].re),
            k_wave,
        });
    }
    Ok(out)
}

/// `f(t) = exp(-nu(t + t^3/3)) f0 - g0 int_0^t exp(-nu(t - s + (t^3 - s^3)/3)) ds`
/// for `k = 1`, `alpha = 0`.
pub fn duhamel_f<T: Scalar>(nu: T, f0: T, g0: T, t: T) -> Result<T> {
    if !(nu > T::zero()) {
        return Err(Error::param("nu", "must be > 0"));
    }
    if !(t >= T::zero()) {
        return Err(Error::param("t", "must be >= 0"));
    }
    let d = ShearDecay {
        nu,
        l: T::one(),
        eta: T::zero(),
    };
    let homogeneous = (-d.exponent(T::zero(), t)).exp() * f0;
    if g0 == T::zero() || t == T::zero() {
        return Ok(homogeneous);
    }
    let [v] = kernel_integral(&d, T::zero(), t, |_| [T::one()], lit::<T>(1e-10).max(T::epsilon() * lit(64.0)))?;
    Ok(homogeneous - g0 * v)
}

/// `max |f(t) - exp(-nu(t + t^3/3)) f0| nu (1 + t^2) / (4 |g0|)` over the samples.
pub fn verify_f_bound<T: Scalar>(traj: &[WaveState<T>], params: &PhysicalParams<T>, f0: T, g0: T) -> Result<T> {
    if g0 == T::zero() {
        return Err(Error::param("g0", "the bound is degenerate for g0 = 0"));
    }
    if !(params.nu() > T::zero()) {
        return Err(Error::param("nu", "must be > 0"));
    }
    if params.alpha() != T::zero() {
        return Err(Error::param("alpha", "the bound holds for alpha = 0"));
    }
    if traj.is_empty() {
        return Err(Error::Empty("wave trajectory"));
    }
    let nu = params.nu();
    let third: T = lit(1.0 / 3.0);
    Ok(traj.iter().fold(T::zero(), |m, w| {
        let hom = (-nu * (w.t + w.t * w.t * w.t * third)).exp() * f0;
        let r = (w.f - hom).abs() * nu * (T::one() + w.t * w.t) / (lit::<T>(4.0) * g0.abs());
        m.max(r)
    }))
}

/// `gamma = Re sqrt(1/4 - alpha)`.
pub fn inviscid_exponent<T: Scalar>(alpha: T) -> T {
    let r = lit::<T>(0.25) - alpha;
    if r > T::zero() {
        r.sqrt()
    } else {
        T::zero()
    }
}

/// Least-squares slope of `log value` against `log t` over the final half of
/// the samples.
pub fn fit_power_law<T: Scalar>(samples: &[(T, T)]) -> Result<T> {
    if samples.len() < 8 {
        return Err(Error::DegenerateFit(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(t, v)| !(t > T::zero() && v > T::zero())) {
        return Err(Error::DegenerateFit("times and values must be positive".into()));
    }
    let tail = &samples[samples.len() / 2..];
    let pts: Vec<(T, T)> = tail.iter().map(|&(t, v)| (t.ln(), v.ln())).collect();
    let (slope, _, _) = crate::diagnostics::least_squares(&pts)?;
    Ok(slope)
}

/// Amplitude of the inviscid solution with the oscillation removed.
///
/// For `alpha > 1/4` and `k = 1`, `f ~ t^(1/2) (A cos(b log t) + B sin(b log t))`
/// with `b = sqrt(alpha - 1/4)`; writing `y = f t^(-1/2)` and `y' = dy/dlog t`
/// the envelope is `t^(1/2) sqrt(y^2 + (y'/b)^2)`. Otherwise `|f|`.
pub fn wave_envelope<T: Scalar>(traj: &[WaveState<T>], alpha: T) -> Vec<(T, T)> {
    let beta2 = alpha - lit(0.25);
    traj.iter()
        .map(|w| {
            if beta2 <= T::zero() {
                return (w.t, w.f.abs());
            }
            // inviscid: f' = -k g
            let k = T::from_index(w.k_wave as usize);
            let df = -k * w.g;
            let rt = w.t.sqrt();
            let y = w.f / rt;
            let dy = rt * df - w.f / (rt * lit(2.0));
            (w.t, rt * (y * y + dy * dy / beta2).sqrt())
        })
        .collect()
}

/// Initial data `(f, g)` at `t0` on the growing power branch `f = t^r`,
/// `r = 1/2 + gamma`, of the inviscid equation with `k = 1`. At `alpha = 1/4`
/// this selects the solution without the `t^(1/2) log t` component.
pub fn power_branch_data<T: Scalar>(alpha: T, t0: T) -> (T, T) {
    let r = lit::<T>(0.5) + inviscid_exponent(alpha);
    let f = t0.powf(r);
    // f' = -g
    (f, -r * t0.powf(r - T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(nu: f64, alpha: f64) -> PhysicalParams<f64> {
        PhysicalParams::new(nu, 0.001, alpha).unwrap()
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(wave_ode_rhs(0.0, 1.0, 0.0, &params(1.0, 0.0), 1), (-1.0, 0.0));
        assert_eq!(wave_ode_rhs(0.0, 0.0, 1.0, &params(1.0, 0.0), 1), (-1.0, 0.0));
        let (df, dg) = wave_ode_rhs(2.0, 1.0, 1.0, &params(0.5, 1.0), 1);
        assert!((df + 3.5).abs() < 1e-15);
        assert!((dg - 0.2).abs() < 1e-15);
    }

    #[test]
    fn g_is_exactly_constant_without_stratification() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.7).collect();
        let w = solve_wave_ode(&params(0.3, 0.0), 1, 0.4, 5.0, &grid, 1e-10, 1e-14).unwrap();
        assert!(w.iter().all(|s| s.g == 5.0));
    }

    #[test]
    fn inviscid_linear_growth() {
        let p = PhysicalParams::new(0.0, 0.001, 0.0).unwrap();
        let grid: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let w = solve_wave_ode(&p, 1, 0.0, 1.0, &grid, 1e-12, 1e-14).unwrap();
        for s in &w {
            assert!((s.f + s.t).abs() < 1e-10 * s.t.max(1.0));
        }
    }

    #[test]
    fn duhamel_trivial_cases() {
        assert_eq!(duhamel_f(1.0, 0.7, 3.0, 0.0).unwrap(), 0.7);
        let v = duhamel_f(0.5, 2.0, 0.0, 1.5).unwrap();
        assert!((v - 2.0 * (-0.5 * (1.5 + 1.5f64.powi(3) / 3.0)).exp()).abs() < 1e-15);
        assert!(duhamel_f(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn duhamel_matches_ode() {
        let p = params(1.0, 0.0);
        for &t in &[1.0, 2.0, 7.5, 40.0] {
            let w = solve_wave_ode(&p, 1, 0.0, 1.0, &[0.0, t], 1e-11, 1e-15).unwrap();
            let d = duhamel_f(1.0, 0.0, 1.0, t).unwrap();
            assert!((w[1].f - d).abs() <= 1e-8 * d.abs(), "t={t}: {} vs {d}", w[1].f);
        }
    }

    #[test]
    fn bound_rejects_zero_forcing() {
        let w = [WaveState {
            t: 0.0,
            f: 1.0,
            g: 0.0,
            k_wave: 1,
        }];
        assert!(verify_f_bound(&w, &params(1.0, 0.0), 1.0, 0.0).is_err());
        assert_eq!(verify_f_bound(&w, &params(1.0, 0.0), 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn exponents() {
        assert_eq!(inviscid_exponent(0.0), 0.5);
        assert_eq!(inviscid_exponent(0.25), 0.0);
        assert_eq!(inviscid_exponent(1.0), 0.0);
        assert!((inviscid_exponent(3.0f64 / 16.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_fit() {
        let sq: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64, (i * i) as f64)).collect();
        assert!((fit_power_law(&sq).unwrap() - 2.0).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64, 7.0)).collect();
        assert!(fit_power_law(&flat).unwrap().abs() < 1e-9);
        assert!(fit_power_law(&sq[..5]).is_err());
        let mut bad = sq.clone();
        bad[3].1 = -1.0;
        assert!(fit_power_law(&bad).is_err());
    }
}
