//! The nearest-neighbor mode system for one frequency `eta`: coefficients,
//! the full `(theta, G)` right-hand side, the `G == 0` model problem, the good
//! unknown and the trajectory integrator.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expo::{ExpoStepper, ShearDecay, SplitSystem, StepStats};
use crate::model::{mode_or_zero, FSource, ModeState, PhysicalParams, SimConfig};
use crate::diagnostics::resonant_time;
use crate::scalar::{lit, Scalar};
use crate::wave::WaveState;

/// Which neighbor a coefficient couples to: `l + 1` or `l - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientQuery<T> {
    pub l: usize,
    pub branch: Branch,
    pub t: T,
    pub c: T,
    pub eta: T,
}

impl<T: Scalar> CoefficientQuery<T> {
    /// The neighbor `m = l +- 1`; `0` for the dropped x-average.
    pub fn neighbor(&self) -> usize {
        match self.branch {
            Branch::Plus => self.l + 1,
            Branch::Minus => self.l.saturating_sub(1),
        }
    }
}

/// `(eta/m^3, 1/(1 + (eta/m - t)^2))`.
#[inline]
fn lorentz<T: Scalar>(eta: T, m: usize, t: T) -> (T, T) {
    let mf = T::from_index(m);
    let y = eta / mf - t;
    (eta / (mf * mf * mf), T::one() / (T::one() + y * y))
}

/// `c_l^+-`: coupling of `theta_{l+-1}` into `theta_l`.
pub fn coeff_c<T: Scalar>(q: &CoefficientQuery<T>) -> T {
    let m = q.neighbor();
    if m == 0 {
        return T::zero();
    }
    let (base, lor) = lorentz(q.eta, m, q.t);
    q.c * base * lor * lor
}

/// `d_l^+-`: coupling of `G_{l+-1}` into `theta_l`.
pub fn coeff_d<T: Scalar>(q: &CoefficientQuery<T>) -> T {
    let m = q.neighbor();
    if m == 0 {
        return T::zero();
    }
    let (base, lor) = lorentz(q.eta, m, q.t);
    q.c * base * lor
}

/// `nu int_{t0}^{t1} l^2 + (eta - l s)^2 ds` in closed form.
pub fn dissipation_exponent<T: Scalar>(l: usize, t0: T, t1: T, nu: T, eta: T) -> T {
    ShearDecay {
        nu,
        l: T::from_index(l),
        eta,
    }
    .exponent(t0, t1)
}

/// Precomputed `eta/m` and `eta/m^3` for `m = 1..=L`.
#[derive(Debug, Clone)]
struct Table<T> {
    center: Vec<T>,
    base: Vec<T>,
}

impl<T: Scalar> Table<T> {
    fn new(eta: T, modes: usize) -> Self {
        let center = (1..=modes).map(|m| eta / T::from_index(m)).collect();
        let base = (1..=modes)
            .map(|m| {
                let mf = T::from_index(m);
                eta / (mf * mf * mf)
            })
            .collect();
        Self { center, base }
    }
}

/// Everything except the diagonal decay of `G`. `f` enters through
/// `f nu/g = f/(2c)`, which stays finite when `nu = 0`.
#[allow(clippy::too_many_arguments)]
fn coupling_terms<T: Scalar>(
    table: &Table<T>,
    t: T,
    c: T,
    f: T,
    per_l: bool,
    theta: &[Complex<T>],
    good: &[Complex<T>],
    dtheta: &mut [Complex<T>],
    dgood: &mut [Complex<T>],
) {
    let n = theta.len();
    let mut cs = vec![T::zero(); n];
    let mut ds = vec![T::zero(); n];
    let mut lors = vec![T::zero(); n];
    for m in 0..n {
        let y = table.center[m] - t;
        let lor = T::one() / (T::one() + y * y);
        lors[m] = lor;
        ds[m] = c * table.base[m] * lor;
        cs[m] = ds[m] * lor;
    }
    let kappa = if c > T::zero() { f / (lit::<T>(2.0) * c) } else { T::zero() };
    let two: T = lit(2.0);
    for i in 0..n {
        let mut s = Complex::new(T::zero(), T::zero());
        if i > 0 {
            s += theta[i - 1] * cs[i - 1] + good[i - 1] * ds[i - 1];
        }
        if i + 1 < n {
            s += theta[i + 1] * cs[i + 1] + good[i + 1] * ds[i + 1];
        }
        dtheta[i] = s;
        let l = T::from_index(i + 1);
        let y = table.center[i] - t;
        let lor = lors[i];
        let mut forcing = two * y * lor * lor;
        if per_l {
            forcing /= l;
        }
        dgood[i] = s * Complex::new(lor, kappa * l) + theta[i] * forcing;
    }
}

/// Full right-hand side at time `t` with wave amplitude `f_t`.
pub fn rhs_full<T: Scalar>(t: T, state: &ModeState<T>, f_t: T, params: &PhysicalParams<T>, eta: T) -> ModeState<T> {
    rhs_full_with(t, state, f_t, params, eta, false)
}

/// [`rhs_full`] with the choice of `2/l` in front of the G forcing.
pub fn rhs_full_with<T: Scalar>(
    t: T,
    state: &ModeState<T>,
    f_t: T,
    params: &PhysicalParams<T>,
    eta: T,
    g_forcing_per_l: bool,
) -> ModeState<T> {
    let n = state.modes();
    let table = Table::new(eta, n);
    let mut out = ModeState::zeros(t, n);
    coupling_terms(
        &table,
        t,
        params.c(),
        f_t,
        g_forcing_per_l,
        &state.theta,
        &state.good,
        &mut out.theta,
        &mut out.good,
    );
    for i in 0..n {
        let rate = ShearDecay {
            nu: params.nu(),
            l: T::from_index(i + 1),
            eta,
        }
        .rate(t);
        out.good[i] -= state.good[i] * rate;
    }
    out
}

/// The model problem `G == 0`: `d theta_l = c_l^+ theta_{l+1} + c_l^- theta_{l-1}`.
pub fn rhs_model<T: Scalar>(t: T, theta: &[Complex<T>], c: T, eta: T) -> Vec<Complex<T>> {
    let n = theta.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    for (i, o) in out.iter_mut().enumerate() {
        let l = i + 1;
        for branch in [Branch::Plus, Branch::Minus] {
            let q = CoefficientQuery { l, branch, t, c, eta };
            let m = q.neighbor();
            *o += mode_or_zero(theta, m) * coeff_c(&q);
        }
    }
    out
}

/// `G_l = i nu l omega_l + l^2/(l^2 + (eta - l t)^2) theta_l`.
pub fn good_unknown_forward<T: Scalar>(omega: Complex<T>, theta: Complex<T>, l: usize, t: T, nu: T, eta: T) -> Complex<T> {
    let lf = T::from_index(l);
    let y = eta - lf * t;
    omega * Complex::new(T::zero(), nu * lf) + theta * (lf * lf / (lf * lf + y * y))
}

/// Inverse of [`good_unknown_forward`] for `omega`.
pub fn good_unknown_inverse<T: Scalar>(good: Complex<T>, theta: Complex<T>, l: usize, t: T, nu: T, eta: T) -> Result<Complex<T>> {
    if nu == T::zero() {
        return Err(Error::param("nu", "the good unknown cannot be inverted for nu = 0"));
    }
    let lf = T::from_index(l);
    let y = eta - lf * t;
    Ok((good - theta * (lf * lf / (lf * lf + y * y))) / Complex::new(T::zero(), nu * lf))
}

/// Stream function `phi_l` rebuilt from `G_l` and `theta_l`.
pub fn stream_function<T: Scalar>(good: Complex<T>, theta: Complex<T>, l: usize, t: T, nu: T, eta: T) -> Result<Complex<T>> {
    if nu == T::zero() {
        return Err(Error::param("nu", "the stream function needs nu > 0"));
    }
    let lf = T::from_index(l);
    let y = eta - lf * t;
    let sym = lf * lf + y * y;
    let il = Complex::new(T::zero(), lf);
    Ok((-good / (il * sym) + il * theta / (sym * sym)) / nu)
}

/// A sampled simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub config: SimConfig<T>,
    pub params: PhysicalParams<T>,
    pub samples: Vec<ModeState<T>>,
    pub wave: Vec<WaveState<T>>,
    pub meta: StepStats<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Sample at `t`, matched to a relative tolerance of `1e-12`.
    pub fn sample_at(&self, t: T) -> Result<&ModeState<T>> {
        let tol = lit::<T>(1e-12) * t.abs().max(T::one());
        let i = self.samples.partition_point(|s| s.t < t - tol);
        match self.samples.get(i) {
            Some(s) if (s.t - t).abs() <= tol => Ok(s),
            _ => Err(Error::MissingSample { t: t.as_f64() }),
        }
    }

    pub fn first(&self) -> &ModeState<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &ModeState<T> {
        self.samples.last().expect("trajectory has samples")
    }
}

/// How the split system obtains `f(t)`.
#[derive(Debug, Clone, Copy)]
enum WaveModel<T> {
    /// `f` is the last state component.
    Ode { g: T },
    Bound { c: T },
    Zero,
}

impl<T: Scalar> WaveModel<T> {
    fn new(source: FSource, params: &PhysicalParams<T>) -> Self {
        match source {
            FSource::Ode => WaveModel::Ode { g: params.g() },
            FSource::DecayBound => WaveModel::Bound { c: params.c() },
            FSource::Zero => WaveModel::Zero,
        }
    }

    fn value(&self, t: T, u: &[Complex<T>]) -> T {
        match *self {
            WaveModel::Ode { .. } => u.last().map_or(T::zero(), |z| z.re),
            WaveModel::Bound { c } => lit::<T>(4.0) * c / (T::one() + t * t),
            WaveModel::Zero => T::zero(),
        }
    }
}

/// The mode system as seen by the exponential stepper: `theta` (no decay),
/// `G` (shear decay) and optionally `f` (wave decay `nu (1 + t^2)`).
struct Split<T> {
    modes: usize,
    nu: T,
    c: T,
    eta: T,
    wave: WaveModel<T>,
    per_l: bool,
    table: Table<T>,
    capped: bool,
    cap_far: T,
}

/// Half-width of the windows around `eta/k` where steps are capped.
const WINDOW: f64 = 5.0;

impl<T: Scalar> Split<T> {
    fn new(params: &PhysicalParams<T>, eta: T, modes: usize, source: FSource, per_l: bool) -> Self {
        let far = lit::<T>(0.5) * eta / T::from_index(modes * modes);
        Self {
            modes,
            nu: params.nu(),
            c: params.c(),
            eta,
            wave: WaveModel::new(source, params),
            per_l,
            table: Table::new(eta, modes),
            capped: true,
            cap_far: far.min(lit(10.0)),
        }
    }

    fn pack(&self, s: &ModeState<T>, f: T) -> Vec<Complex<T>> {
        let mut u = Vec::with_capacity(self.dim());
        u.extend_from_slice(&s.theta);
        u.extend_from_slice(&s.good);
        if let WaveModel::Ode { .. } = self.wave {
            u.push(Complex::new(f, T::zero()));
        }
        u
    }

    fn unpack(&self, t: T, u: &[Complex<T>]) -> ModeState<T> {
        ModeState {
            t,
            theta: u[..self.modes].to_vec(),
            good: u[self.modes..2 * self.modes].to_vec(),
        }
    }
}

impl<T: Scalar> SplitSystem<T> for Split<T> {
    fn dim(&self) -> usize {
        2 * self.modes + usize::from(matches!(self.wave, WaveModel::Ode { .. }))
    }

    fn decay(&self, i: usize) -> Option<ShearDecay<T>> {
        if i < self.modes {
            None
        } else if i < 2 * self.modes {
            Some(ShearDecay {
                nu: self.nu,
                l: T::from_index(i - self.modes + 1),
                eta: self.eta,
            })
        } else {
            Some(ShearDecay {
                nu: self.nu,
                l: T::one(),
                eta: T::zero(),
            })
        }
    }

    fn coupling(&self, t: T, u: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.modes;
        let f = self.wave.value(t, u);
        let (theta, rest) = u.split_at(n);
        let (dtheta, drest) = out.split_at_mut(n);
        coupling_terms(
            &self.table,
            t,
            self.c,
            f,
            self.per_l,
            theta,
            &rest[..n],
            dtheta,
            &mut drest[..n],
        );
        if let WaveModel::Ode { g } = self.wave {
            drest[n] = Complex::new(-g, T::zero());
        }
    }

    fn max_step(&self, t: T) -> T {
        if !self.capped {
            return T::infinity();
        }
        let window: T = lit(WINDOW);
        let mut dist = T::infinity();
        let mut ahead = T::infinity();
        for &center in &self.table.center {
            let d = (t - center).abs();
            dist = dist.min(d);
            // do not step over the entry of a window that lies ahead
            let entry = center - window;
            if entry > t {
                ahead = ahead.min(entry - t);
            }
        }
        let cap = if dist <= window {
            lit::<T>(0.05) * (T::one() + dist)
        } else {
            self.cap_far
        };
        cap.min(ahead.max(cap * lit(1e-3)))
    }
}

/// `f(t_start)` on the wave ODE with `f(0) = 0`, or its closed-form stand-in.
fn wave_at_start<T: Scalar>(params: &PhysicalParams<T>, source: FSource, t: T, rtol: T, atol: T) -> Result<T> {
    match source {
        FSource::Zero => Ok(T::zero()),
        FSource::DecayBound => Ok(lit::<T>(4.0) * params.c() / (T::one() + t * t)),
        FSource::Ode => {
            if t == T::zero() {
                return Ok(T::zero());
            }
            let w = crate::wave::solve_wave_ode(params, 1, T::zero(), params.g(), &[T::zero(), t], rtol, atol)?;
            Ok(w[1].f)
        }
    }
}

/// Sample times: requested times, `t_start`, `t_end` and every resonant time
/// in the span, sorted with near-duplicates merged.
pub fn sample_grid<T: Scalar>(config: &SimConfig<T>) -> Vec<T> {
    let mut times = vec![config.t_start, config.t_end];
    times.extend(
        config
            .sample_times
            .iter()
            .copied()
            .filter(|&t| t >= config.t_start && t <= config.t_end),
    );
    for k in 0..=config.modes {
        let tk = resonant_time(config.eta, k);
        if tk >= config.t_start && tk <= config.t_end {
            times.push(tk);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite sample times"));
    let mut out: Vec<T> = Vec::with_capacity(times.len());
    for t in times {
        match out.last() {
            Some(&p) if t - p <= lit::<T>(1e-12) * t.abs().max(T::one()) => {}
            _ => out.push(t),
        }
    }
    out
}

/// Advances `state` from `state.t` to `t1`. `f0` is the wave amplitude at
/// `state.t` (ignored unless `source` is `Ode`). No resonance step caps are
/// applied; the controller alone picks the substeps.
#[allow(clippy::too_many_arguments)]
pub fn step_etd<T: Scalar>(
    state: &ModeState<T>,
    t1: T,
    f0: T,
    source: FSource,
    params: &PhysicalParams<T>,
    eta: T,
    rtol: T,
    atol: T,
) -> Result<(ModeState<T>, T)> {
    if !(t1 > state.t) {
        return Err(Error::param("t1", "must exceed the state time"));
    }
    let mut sys = Split::new(params, eta, state.modes(), source, false);
    sys.capped = false;
    let mut u = sys.pack(state, f0);
    let mut stepper = ExpoStepper::new(rtol, atol);
    let mut t = state.t;
    let mut h = t1 - t;
    stepper.advance(&sys, &mut t, &mut u, t1, &mut h)?;
    let f1 = sys.wave.value(t1, &u);
    Ok((sys.unpack(t1, &u), f1))
}

/// Integrates the initial state `init` (at `config.t_start`) across the
/// configured span.
pub fn integrate<T: Scalar>(config: &SimConfig<T>, params: &PhysicalParams<T>, init: &ModeState<T>) -> Result<Trajectory<T>> {
    config.validate(params)?;
    init.validate()?;
    if init.modes() != config.modes {
        return Err(Error::MismatchedInit(format!(
            "initial state has {} modes, configuration has {}",
            init.modes(),
            config.modes
        )));
    }
    if init.t != config.t_start {
        return Err(Error::MismatchedInit(format!(
            "initial state at t = {}, configuration starts at {}",
            init.t, config.t_start
        )));
    }
    let sys = Split::new(params, config.eta, config.modes, config.f_source, config.g_forcing_per_l);
    let f0 = wave_at_start(params, config.f_source, config.t_start, config.rtol, config.atol)?;
    let mut u = sys.pack(init, f0);
    let mut stepper = ExpoStepper::new(config.rtol, config.atol);
    let grid = sample_grid(config);

    let wave_sample = |t: T, u: &[Complex<T>]| WaveState {
        t,
        f: sys.wave.value(t, u),
        g: params.g(),
        k_wave: 1,
    };
    let mut samples = Vec::with_capacity(grid.len());
    let mut wave = Vec::with_capacity(grid.len());
    let mut t = config.t_start;
    let mut h = sys.max_step(t).min(lit(0.01));
    for &ts in &grid {
        if ts > t {
            stepper.advance(&sys, &mut t, &mut u, ts, &mut h)?;
        }
        let s = sys.unpack(ts, &u);
        if let Some(guard) = config.truncation_guard {
            let norm = s.l2_norm();
            let edge = s.theta[config.modes - 1].norm().max(s.good[config.modes - 1].norm());
            if norm > T::zero() && edge > guard * norm {
                return Err(Error::BoundaryReached {
                    t: ts.as_f64(),
                    ratio: (edge / norm).as_f64(),
                });
            }
        }
        wave.push(wave_sample(ts, &u));
        samples.push(s);
    }
    Ok(Trajectory {
        config: config.clone(),
        params: *params,
        samples,
        wave,
        meta: stepper.stats(),
    })
}

/// [`integrate`] starting from the configuration's own initial data.
pub fn simulate<T: Scalar>(config: &SimConfig<T>, params: &PhysicalParams<T>) -> Result<Trajectory<T>> {
    let init = config.init.build(config.t_start, config.modes)?;
    integrate(config, params, &init)
}
