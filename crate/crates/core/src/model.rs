//! Shared domain types: physical parameters, simulation configuration,
//! mode states and the weights defining the space `X`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{resonant_k0, resonant_time};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Coupling constant above which results are outside the range covered by
/// the stability theorems (still accepted, with a warning flag).
pub const THEOREM_C_MAX: f64 = 0.001;
/// Largest accepted coupling constant.
pub const ACCEPTED_C_MAX: f64 = 0.01;

/// Unvalidated parameter record as read from a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams<T> {
    pub nu: T,
    pub c: T,
    #[serde(default)]
    pub alpha: T,
}

/// Viscosity, coupling and stratification. The wave temperature amplitude
/// `g = 2 c nu` is derived and cannot be set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams<T> {
    nu: T,
    c: T,
    g: T,
    alpha: T,
    theorem_range_exceeded: bool,
}

impl<T: Scalar> PhysicalParams<T> {
    /// Builds parameters without the strict range checks of
    /// [`validate_params`]. Zero coupling and zero viscosity are allowed here
    /// (frozen and inviscid ablations); negative or non-finite values are not.
    pub fn new(nu: T, c: T, alpha: T) -> Result<Self> {
        for (name, v) in [("nu", nu), ("c", c), ("alpha", alpha)] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if nu < T::zero() {
            return Err(Error::param("nu", "must be non-negative"));
        }
        if c < T::zero() {
            return Err(Error::param("c", "must be non-negative"));
        }
        Ok(Self {
            nu,
            c,
            g: lit::<T>(2.0) * c * nu,
            alpha,
            theorem_range_exceeded: c > lit(THEOREM_C_MAX),
        })
    }

    pub fn nu(&self) -> T {
        self.nu
    }
    pub fn c(&self) -> T {
        self.c
    }
    pub fn g(&self) -> T {
        self.g
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    /// Set when `c` exceeds the range covered by the theorems (`c > 0.001`).
    pub fn theorem_range_exceeded(&self) -> bool {
        self.theorem_range_exceeded
    }

    pub fn raw(&self) -> RawParams<T> {
        RawParams {
            nu: self.nu,
            c: self.c,
            alpha: self.alpha,
        }
    }
}

/// Strict validation used at the configuration boundary.
pub fn validate_params<T: Scalar>(raw: &RawParams<T>) -> Result<PhysicalParams<T>> {
    if !raw.nu.is_finite() || raw.nu <= T::zero() {
        return Err(Error::param("nu", "must be finite and > 0"));
    }
    if !raw.c.is_finite() || raw.c <= T::zero() {
        return Err(Error::param("c", "must be finite and > 0"));
    }
    if raw.c > lit(ACCEPTED_C_MAX) {
        return Err(Error::param(
            "c",
            format!("must not exceed {ACCEPTED_C_MAX} (got {})", raw.c),
        ));
    }
    PhysicalParams::new(raw.nu, raw.c, raw.alpha)
}

/// Where the wave amplitude `f(t)` entering the G equation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FSource {
    /// Co-integrate the wave ODE with `f(0) = 0`, `g = 2 c nu`.
    #[default]
    Ode,
    /// Use the decay bound `f(t) = 4c / (1 + t^2)`.
    DecayBound,
    /// `f == 0`.
    Zero,
}

/// Initial data for a mode simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec<T> {
    DeltaTheta { mode: usize },
    DeltaG { mode: usize },
    State(ModeState<T>),
}

impl<T: Scalar> InitSpec<T> {
    /// Highest mode carrying initial data.
    pub fn top_mode(&self) -> usize {
        match self {
            InitSpec::DeltaTheta { mode } | InitSpec::DeltaG { mode } => *mode,
            InitSpec::State(s) => s.top_mode().unwrap_or(1),
        }
    }

    pub fn build(&self, t: T, modes: usize) -> Result<ModeState<T>> {
        let check = |mode: usize| {
            if mode == 0 || mode > modes {
                Err(Error::InvalidConfig(format!(
                    "initial mode {mode} outside 1..={modes}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            InitSpec::DeltaTheta { mode } => {
                check(*mode)?;
                let mut s = ModeState::zeros(t, modes);
                s.theta[mode - 1] = Complex::new(T::one(), T::zero());
                Ok(s)
            }
            InitSpec::DeltaG { mode } => {
                check(*mode)?;
                let mut s = ModeState::zeros(t, modes);
                s.good[mode - 1] = Complex::new(T::one(), T::zero());
                Ok(s)
            }
            InitSpec::State(s) => {
                if s.modes() != modes {
                    return Err(Error::InvalidConfig(format!(
                        "initial state has {} modes, configuration has {modes}",
                        s.modes()
                    )));
                }
                s.validate()?;
                let mut s = s.clone();
                s.t = t;
                Ok(s)
            }
        }
    }
}

/// Configuration of one fixed-`eta` simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub eta: T,
    /// Truncation size; modes are `l = 1..=modes`.
    pub modes: usize,
    pub t_start: T,
    pub t_end: T,
    pub rtol: T,
    pub atol: T,
    pub f_source: FSource,
    pub init: InitSpec<T>,
    /// Requested output times; resonant times in the span are added.
    pub sample_times: Vec<T>,
    /// Use `2/l` instead of `2` in front of the G forcing term.
    pub g_forcing_per_l: bool,
    /// Relative size of the boundary mode that aborts the run; `None` disables.
    pub truncation_guard: Option<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// Configuration with the default tolerances and a delta in `theta`.
    pub fn new(eta: T, modes: usize, t_start: T, t_end: T, init: InitSpec<T>) -> Self {
        Self {
            eta,
            modes,
            t_start,
            t_end,
            rtol: lit(1e-8),
            atol: lit(1e-12),
            f_source: FSource::Ode,
            init,
            sample_times: Vec::new(),
            g_forcing_per_l: false,
            truncation_guard: Some(lit(1e-8)),
        }
    }

    /// Smallest truncation that keeps the echo chain away from mode `L` when
    /// the run crosses the resonant regime.
    pub fn min_modes_for_resonance(c: T, eta: T) -> usize {
        let v = (c * eta * T::PI()).cbrt() * lit(4.0);
        (v * (T::one() - lit(1e-12))).ceil().to_usize().unwrap_or(usize::MAX)
    }

    pub fn validate(&self, params: &PhysicalParams<T>) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= T::zero() {
            return Err(Error::param("eta", "must be finite and > 0"));
        }
        if self.modes < 2 {
            return Err(Error::param("L", "must be at least 2"));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_start >= self.t_end {
            return Err(Error::param("t_end", "need finite t_start < t_end"));
        }
        if !(self.rtol > T::zero() && self.atol > T::zero()) {
            return Err(Error::param("rtol", "tolerances must be > 0"));
        }
        if self.sample_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("sample_times", "must be finite"));
        }
        let top = self.init.top_mode();
        let is_delta = !matches!(self.init, InitSpec::State(_));
        if is_delta && self.modes < top + 2 {
            return Err(Error::param(
                "L",
                format!("must be >= initial mode + 2 = {}", top + 2),
            ));
        }
        if self.spans_resonant_regime(params.c()) {
            let need = Self::min_modes_for_resonance(params.c(), self.eta);
            if self.modes < need {
                return Err(Error::param(
                    "L",
                    format!("run crosses the resonant regime; need L >= {need}"),
                ));
            }
        }
        Ok(())
    }

    /// True when `[t_start, t_end]` meets `(t_{k0}, 2 eta)` with `k0 >= 1`.
    pub fn spans_resonant_regime(&self, c: T) -> bool {
        let k0 = resonant_k0(c, self.eta);
        if k0 == 0 {
            return false;
        }
        let lo = resonant_time(self.eta, k0);
        let hi = resonant_time(self.eta, 0);
        self.t_end > lo && self.t_start < hi
    }
}

/// Complex amplitudes `theta_l`, `G_l` for `l = 1..=L` at time `t`.
/// Index `i` holds mode `l = i + 1`; the x-average (`l = 0`) is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState<T> {
    pub t: T,
    pub theta: Vec<Complex<T>>,
    /// The good unknown `G`.
    pub good: Vec<Complex<T>>,
}

impl<T: Scalar> ModeState<T> {
    pub fn zeros(t: T, modes: usize) -> Self {
        Self {
            t,
            theta: vec![Complex::new(T::zero(), T::zero()); modes],
            good: vec![Complex::new(T::zero(), T::zero()); modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.good.len() {
            return Err(Error::InvalidConfig(format!(
                "theta has {} modes but G has {}",
                self.theta.len(),
                self.good.len()
            )));
        }
        if self.theta.is_empty() {
            return Err(Error::Empty("mode state"));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite { t: self.t.as_f64() });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain(self.good.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Euclidean norm over both sequences.
    pub fn l2_norm(&self) -> T {
        self.theta
            .iter()
            .chain(self.good.iter())
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    /// Highest mode with a non-zero entry.
    pub fn top_mode(&self) -> Option<usize> {
        (0..self.modes())
            .rev()
            .find(|&i| self.theta[i].norm_sqr() > T::zero() || self.good[i].norm_sqr() > T::zero())
            .map(|i| i + 1)
    }

    /// `theta_l` for `l` in `1..=L`, zero outside.
    #[inline]
    pub fn theta_at(&self, l: usize) -> Complex<T> {
        mode_or_zero(&self.theta, l)
    }

    #[inline]
    pub fn good_at(&self, l: usize) -> Complex<T> {
        mode_or_zero(&self.good, l)
    }
}

#[inline]
pub(crate) fn mode_or_zero<T: Scalar>(v: &[Complex<T>], l: usize) -> Complex<T> {
    if l == 0 || l > v.len() {
        Complex::new(T::zero(), T::zero())
    } else {
        v[l - 1]
    }
}

/// Weight `lambda(l)` of the space `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `lambda == 1`, i.e. plain l^2.
    #[default]
    Uniform,
    /// `1 + 2^-N |l|^N`, H^N in physical space.
    Sobolev { n: u32 },
    /// `2^|l|`, analytic functions.
    Analytic,
}

impl WeightSpec {
    pub fn eval<T: Scalar>(&self, l: usize) -> T {
        weight_eval(*self, l)
    }

    /// `max over l in 1..L of max(lambda(l+1)/lambda(l), lambda(l)/lambda(l+1))`.
    pub fn neighbor_ratio_sup<T: Scalar>(&self, modes: usize) -> T {
        (1..modes.max(2))
            .map(|l| {
                let a: T = self.eval(l);
                let b: T = self.eval(l + 1);
                (b / a).max(a / b)
            })
            .fold(T::one(), T::max)
    }

    /// Rejects weights whose neighbor ratio exceeds 2 on `1..=modes`.
    /// The analytic weight sits exactly on the boundary and is accepted.
    pub fn validate(&self, modes: usize) -> Result<()> {
        let r: f64 = self.neighbor_ratio_sup(modes);
        if r > 2.0 {
            return Err(Error::param(
                "weight",
                format!("neighbor ratio {r} exceeds 2 on modes 1..={modes}"),
            ));
        }
        Ok(())
    }
}

pub fn weight_eval<T: Scalar>(spec: WeightSpec, l: usize) -> T {
    match spec {
        WeightSpec::Uniform => T::one(),
        WeightSpec::Sobolev { n } => {
            let n = n as i32;
            T::one() + lit::<T>(2.0).powi(-n) * T::from_index(l).powi(n)
        }
        WeightSpec::Analytic => lit::<T>(2.0).powi(l as i32),
    }
}

/// How `k_1` is derived from `k_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K1Rule<T> {
    /// `k_1 = floor(a1 k_0)`.
    Factor(T),
    /// `k_1 = floor(20 cbrt(c eta))`, the stability-analysis choice.
    Cube8000,
}

/// Threshold factors `(a1, a2, a3)`; defaults `(4, 1/10, 1/1000)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFactors<T> {
    pub k1: K1Rule<T>,
    pub a2: T,
    pub a3: T,
}

impl<T: Scalar> Default for ThresholdFactors<T> {
    fn default() -> Self {
        Self {
            k1: K1Rule::Factor(lit(4.0)),
            a2: lit(0.1),
            a3: lit(1e-3),
        }
    }
}

/// Regime thresholds and the resonant-time table for one `eta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeThresholds<T> {
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub factors: ThresholdFactors<T>,
    /// `t_k` for `k = 0..=L`.
    pub t_k: Vec<T>,
    /// `c eta pi < 1`: no resonant interval, globally stable regime.
    pub all_stable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_wave_amplitude() {
        let p = validate_params(&RawParams {
            nu: 0.5,
            c: 0.001,
            alpha: 0.0,
        })
        .unwrap();
        assert_eq!(p.g(), 2.0 * 0.001 * 0.5);
        assert_relative_eq!(p.g(), 0.001);
        assert!(!p.theorem_range_exceeded());
    }

    #[test]
    fn rejects_bad_params() {
        let bad = [(1.0, 0.0), (0.0, 0.001), (-1.0, 0.001), (f64::NAN, 0.001), (1.0, f64::INFINITY), (1.0, 0.02)];
        for (nu, c) in bad {
            assert!(validate_params(&RawParams { nu, c, alpha: 0.0 }).is_err(), "{nu} {c}");
        }
    }

    #[test]
    fn warning_flag_between_theorem_and_accepted_range() {
        let p = validate_params(&RawParams {
            nu: 0.5,
            c: 0.005,
            alpha: 0.0,
        })
        .unwrap();
        assert!(p.theorem_range_exceeded());
    }

    #[test]
    fn validation_is_idempotent() {
        let p = validate_params(&RawParams {
            nu: 0.3,
            c: 0.0007,
            alpha: 0.1,
        })
        .unwrap();
        assert_eq!(validate_params(&p.raw()).unwrap(), p);
    }

    #[test]
    fn weights() {
        assert_eq!(weight_eval::<f64>(WeightSpec::Uniform, 7), 1.0);
        assert_eq!(weight_eval::<f64>(WeightSpec::Sobolev { n: 2 }, 4), 5.0);
        assert_eq!(weight_eval::<f64>(WeightSpec::Analytic, 3), 8.0);
        assert_eq!(weight_eval::<f32>(WeightSpec::Sobolev { n: 2 }, 4), 5.0);
    }

    #[test]
    fn neighbor_ratios() {
        let l = 64;
        assert_eq!(WeightSpec::Uniform.neighbor_ratio_sup::<f64>(l), 1.0);
        for n in 0..=2 {
            let r: f64 = WeightSpec::Sobolev { n }.neighbor_ratio_sup(l);
            assert!(r < 2.0, "N={n} ratio {r}");
        }
        // 2^l sits exactly on the boundary of the admissible class.
        assert_eq!(WeightSpec::Analytic.neighbor_ratio_sup::<f64>(l), 2.0);
        assert!(WeightSpec::Analytic.validate(l).is_ok());
        // (1 + (3/2)^3) / 2 > 2
        assert!(WeightSpec::Sobolev { n: 3 }.validate(l).is_err());
    }

    #[test]
    fn sim_config_checks() {
        let p = PhysicalParams::new(0.5, 0.001, 0.0).unwrap();
        let mut cfg = SimConfig::new(100.0, 8, 0.0, 10.0, InitSpec::DeltaTheta { mode: 4 });
        assert!(cfg.validate(&p).is_ok());
        cfg.modes = 5;
        assert!(cfg.validate(&p).is_err());
        cfg.modes = 8;
        cfg.t_end = 0.0;
        assert!(cfg.validate(&p).is_err());

        // c eta pi = 125: k0 = 5, need L >= 20 once the run reaches t_5.
        let eta = 125.0 / (0.001 * std::f64::consts::PI);
        let mut cfg = SimConfig::new(eta, 8, 0.0, 2.0 * eta, InitSpec::DeltaTheta { mode: 1 });
        assert!(cfg.validate(&p).is_err());
        cfg.modes = 20;
        assert!(cfg.validate(&p).is_ok());
        // early-time run stays clear of the resonant regime
        let mut early = SimConfig::new(eta, 8, 0.0, 100.0, InitSpec::DeltaTheta { mode: 1 });
        assert!(early.validate(&p).is_ok());
        early.eta = -1.0;
        assert!(early.validate(&p).is_err());
    }

    #[test]
    fn init_builds() {
        let s = InitSpec::<f64>::DeltaG { mode: 3 }.build(1.5, 6).unwrap();
        assert_eq!(s.t, 1.5);
        assert_eq!(s.good[2], Complex::new(1.0, 0.0));
        assert_eq!(s.top_mode(), Some(3));
        assert!(InitSpec::<f64>::DeltaTheta { mode: 0 }.build(0.0, 6).is_err());
        assert_eq!(s.theta_at(0), Complex::new(0.0, 0.0));
        assert_eq!(s.good_at(7), Complex::new(0.0, 0.0));
    }
}
