//! Resonant-time partition, regime thresholds, weighted norms, multiplier
//! energies, coefficient integrals and the echo-chain checks.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expo::{kernel_integral, ShearDecay};
use crate::model::{weight_eval, K1Rule, ModeState, RegimeThresholds, ThresholdFactors, WeightSpec};
use crate::modes::{coeff_c, coeff_d, Branch, CoefficientQuery, Trajectory};
use crate::quad::{integrate_panels, integrate_real_line, QuadOpts};
use crate::scalar::{lit, Scalar};

/// `t_k = (eta/(k+1) + eta/k) / 2` for `k >= 1`, `t_0 = 2 eta`.
pub fn resonant_time<T: Scalar>(eta: T, k: usize) -> T {
    if k == 0 {
        return eta * lit(2.0);
    }
    let kf = T::from_index(k);
    (eta / (kf + T::one()) + eta / kf) * lit(0.5)
}

/// Largest `k` with `k^3 <= c eta pi`, robust against `cbrt` rounding when
/// `c eta pi` is a perfect cube.
pub fn resonant_k0<T: Scalar>(c: T, eta: T) -> usize {
    let x = c * eta * T::PI();
    if !(x >= T::one()) {
        return 0;
    }
    let slack = x * (T::one() + lit(1e-12));
    let mut k = x.cbrt().floor().to_usize().unwrap_or(0);
    while T::from_index(k + 1).powi(3) <= slack {
        k += 1;
    }
    while k > 0 && T::from_index(k).powi(3) > slack {
        k -= 1;
    }
    k
}

/// Regime thresholds `k_0..k_3` and the table `t_0..t_L`.
pub fn thresholds<T: Scalar>(c: T, eta: T, factors: ThresholdFactors<T>, modes: usize) -> RegimeThresholds<T> {
    let k0 = resonant_k0(c, eta);
    let floor = |x: T| x.floor().to_usize().unwrap_or(0);
    let k1 = match factors.k1 {
        K1Rule::Factor(a1) => floor(a1 * T::from_index(k0)),
        K1Rule::Cube8000 => floor((lit::<T>(8000.0) * c * eta).cbrt() * (T::one() + lit(1e-12))),
    };
    let k2 = floor(factors.a2 * T::from_index(k0)).max(1);
    let k3 = floor(factors.a3 * T::from_index(k0)).max(1);
    RegimeThresholds {
        k0,
        k1,
        k2,
        k3,
        factors,
        t_k: (0..=modes).map(|k| resonant_time(eta, k)).collect(),
        all_stable: c * eta * T::PI() < T::one(),
    }
}

/// Weighted norm `sqrt(sum lambda(l)^2 |u_l|^2)`, `u[i]` holding mode `i + 1`.
pub fn norm_x<T: Scalar>(seq: &[Complex<T>], weight: WeightSpec) -> T {
    seq.iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, z)| {
            let w: T = weight_eval(weight, i + 1);
            acc + w * w * z.norm_sqr()
        })
        .sqrt()
}

/// Ordinary least squares `y = slope x + intercept`; returns
/// `(slope, intercept, r_squared)`.
pub fn least_squares<T: Scalar>(pts: &[(T, T)]) -> Result<(T, T, T)> {
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {}", pts.len())));
    }
    let n = T::from_index(pts.len());
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > T::epsilon() * mx.abs().max(T::one()) * mx.abs().max(T::one())) {
        return Err(Error::DegenerateFit("regressor has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() {
        (sxy * sxy / (sxx * syy)).min(T::one())
    } else {
        T::one()
    };
    Ok((slope, intercept, r2))
}

/// Which coefficient family an integral refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffKind {
    /// `c_l^+-`, squared Lorentzian.
    C,
    /// `d_l^+-`, plain Lorentzian.
    D,
}

fn coeff<T: Scalar>(kind: CoeffKind, q: &CoefficientQuery<T>) -> T {
    match kind {
        CoeffKind::C => coeff_c(q),
        CoeffKind::D => coeff_d(q),
    }
}

/// Break points at `center +- {2, 20}` and `center` inside `(t0, t1)`, so that
/// a narrow peak is never straddled by a coarse panel.
fn peak_breaks<T: Scalar>(t0: T, t1: T, centers: &[T]) -> Vec<T> {
    let mut b = vec![t0, t1];
    for &c in centers {
        for off in [-20.0, -2.0, 0.0, 2.0, 20.0] {
            let p = c + lit(off);
            if p > t0 && p < t1 {
                b.push(p);
            }
        }
    }
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite break points"));
    b.dedup();
    b
}

/// `int_{t0}^{t1}` of `c_l^+-` or `d_l^+-` by adaptive quadrature with
/// absolute accuracy `tol`.
#[allow(clippy::too_many_arguments)]
pub fn coefficient_integral<T: Scalar>(
    kind: CoeffKind,
    l: usize,
    branch: Branch,
    t0: T,
    t1: T,
    c: T,
    eta: T,
    tol: T,
) -> Result<T> {
    if !(t1 >= t0) {
        return Err(Error::param("t1", "must be >= t0"));
    }
    let q0 = CoefficientQuery { l, branch, t: t0, c, eta };
    let m = q0.neighbor();
    if m == 0 || t0 == t1 {
        return Ok(T::zero());
    }
    let center = eta / T::from_index(m);
    let breaks = peak_breaks(t0, t1, &[center]);
    let opts = QuadOpts::new(tol, T::epsilon() * lit(64.0));
    let r = integrate_panels(|t| [coeff(kind, &CoefficientQuery { t, ..q0 })], &breaks, &opts)?;
    Ok(r.value[0])
}

/// `int_R (1 + x^2)^-power dx`: `pi/2` for `power = 2`, `pi` for `power = 1`.
pub fn lorentzian_line_integral<T: Scalar>(power: i32) -> Result<T> {
    let opts = QuadOpts::new(lit(1e-13), lit(1e-13));
    let (v, _) = integrate_real_line(|x: T| (T::one() + x * x).powi(-power), T::zero(), &opts)?;
    Ok(v)
}

/// Why a check was not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// `eta/k^2 < 100`: the Lorentzian tails outside `I_k` are not negligible.
    EtaOverK2Below100,
    /// `k = 1` has no `k - 1` neighbor.
    NoLowerNeighbor,
}

/// Resonant coefficient mass over `I_k` relative to `c eta pi / (2 k^3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonantMass<T> {
    pub k: usize,
    pub integral: T,
    pub predicted: T,
    pub ratio: T,
    pub pass: Option<bool>,
    pub skipped: Option<SkipReason>,
}

/// `int_{I_k} c_{k+1}^-` against `c eta pi/(2k^3)`; accepted in `(0.8, 1]` when
/// `eta/k^2 >= 100`, skipped otherwise.
pub fn resonant_mass<T: Scalar>(c: T, eta: T, k: usize) -> Result<ResonantMass<T>> {
    if k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    let kf = T::from_index(k);
    let (a, b) = (resonant_time(eta, k), resonant_time(eta, k - 1));
    let integral = coefficient_integral(CoeffKind::C, k + 1, Branch::Minus, a, b, c, eta, lit(1e-14))?;
    let predicted = c * eta * T::PI() / (lit::<T>(2.0) * kf * kf * kf);
    let ratio = integral / predicted;
    let skipped = (eta / (kf * kf) < lit(100.0)).then_some(SkipReason::EtaOverK2Below100);
    Ok(ResonantMass {
        k,
        integral,
        predicted,
        ratio,
        pass: skipped.is_none().then(|| ratio > lit(0.8) && ratio <= T::one()),
        skipped,
    })
}

/// One line of the coefficient-bound table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow<T> {
    pub name: &'static str,
    pub l: usize,
    pub branch: Option<Branch>,
    pub value: T,
    pub bound: T,
    pub slack: T,
    pub pass: bool,
}

impl<T: Scalar> BoundRow<T> {
    fn new(name: &'static str, l: usize, branch: Option<Branch>, value: T, bound: T) -> Self {
        Self {
            name,
            l,
            branch,
            value,
            bound,
            slack: bound - value,
            pass: value <= bound,
        }
    }
}

/// `int_{t_k}^{end} exp(-nu int_t^end l^2 + (eta - l s)^2 ds) h(t) dt`.
fn damped_integral<T: Scalar, F: FnMut(T) -> T>(nu: T, eta: T, l: usize, t0: T, end: T, mut h: F) -> Result<T> {
    let d = ShearDecay {
        nu,
        l: T::from_index(l),
        eta,
    };
    let [v] = kernel_integral(&d, t0, end, |x| [h(end - x)], lit(1e-10))?;
    Ok(v)
}

/// Coefficient integrals over `I_k` and the G-equation kernels up to `end`
/// (usually `t_{k-1}`), each against the corresponding analytic bound. Modes
/// `1..=modes` are tabulated; `f nu/g` uses the decay bound `2/(1 + t^2)`.
pub fn coefficient_bounds<T: Scalar>(c: T, nu: T, eta: T, k: usize, modes: usize, end: T) -> Result<Vec<BoundRow<T>>> {
    if k == 0 || modes < 2 {
        return Err(Error::param("k", "need k >= 1 and at least two modes"));
    }
    let kf = T::from_index(k);
    let r = eta / (kf * kf);
    let tk = resonant_time(eta, k);
    let tkm = resonant_time(eta, k - 1);
    let two: T = lit(2.0);
    let pi = T::PI();
    let lor = |l: usize, t: T| {
        let y = eta / T::from_index(l) - t;
        (y, T::one() / (T::one() + y * y))
    };
    let mut rows = Vec::new();

    // resonant kernel: l = k
    let v = damped_integral(nu, eta, k, tk, end, |t| {
        let (y, w) = lor(k, t);
        two * y * w * w
    })?;
    rows.push(BoundRow::new("g_theta_resonant", k, None, v.abs(), two));

    for l in 1..=modes {
        if l != k {
            let v = damped_integral(nu, eta, l, tk, end, |t| {
                let (y, w) = lor(l, t);
                (two * y * w * w).abs()
            })?;
            rows.push(BoundRow::new("g_theta_nonresonant", l, None, v, two * r.powi(-2)));
        }
        for branch in [Branch::Plus, Branch::Minus] {
            let q = CoefficientQuery {
                l,
                branch,
                t: tk,
                c,
                eta,
            };
            let m = q.neighbor();
            if m == 0 || m > modes {
                continue;
            }
            let lf = T::from_index(l);
            let hits = m == k;
            // bounds on the plain coefficient integrals over I_k
            if !hits {
                let ic = coefficient_integral(CoeffKind::C, l, branch, tk, tkm, c, eta, lit(1e-14))?;
                rows.push(BoundRow::new("c_nonresonant", l, Some(branch), ic, lit::<T>(4.0) * c / kf * r.powi(-2)));
                let id = coefficient_integral(CoeffKind::D, l, branch, tk, tkm, c, eta, lit(1e-14))?;
                rows.push(BoundRow::new("d_nonresonant", l, Some(branch), id, lit::<T>(4.0) * c / kf));
            }
            // f nu/g i l c, f nu/g i l d
            let wave = |kind: CoeffKind| -> Result<T> {
                let center = eta / T::from_index(m);
                let breaks = peak_breaks(tk, end, &[center]);
                let opts = QuadOpts::new(lit(1e-16), lit(1e-10));
                let r = integrate_panels(
                    |t| [two / (T::one() + t * t) * lf * coeff(kind, &CoefficientQuery { t, ..q })],
                    &breaks,
                    &opts,
                )?;
                Ok(r.value[0])
            };
            let (bc, bd) = if hits {
                (c / r, c / r)
            } else {
                (c * r.powi(-4), c * r.powi(-2))
            };
            rows.push(BoundRow::new("g_wave_c", l, Some(branch), wave(CoeffKind::C)?, bc));
            rows.push(BoundRow::new("g_wave_d", l, Some(branch), wave(CoeffKind::D)?, bd));
            // damped Lorentzian times c, d
            let damped = |kind: CoeffKind| {
                damped_integral(nu, eta, l, tk, end, |t| lor(l, t).1 * coeff(kind, &CoefficientQuery { t, ..q }))
            };
            let bound_c = if hits {
                c / kf * r.powi(-1) * pi / two
            } else if l == k {
                c / kf * r.powi(-3) * lit(16.0) * pi
            } else {
                lit::<T>(32.0) * c / kf * r.powi(-4)
            };
            let bound_d = if hits || l == k {
                c / kf * r.powi(-1) * pi
            } else {
                c / kf * r.powi(-2)
            };
            rows.push(BoundRow::new("g_theta_c", l, Some(branch), damped(CoeffKind::C)?, bound_c));
            rows.push(BoundRow::new("g_good_d", l, Some(branch), damped(CoeffKind::D)?, bound_d));
        }
    }
    Ok(rows)
}

/// `A(t, l) = exp(C sum_{l' in {l-1, l, l+1}, l' >= 1} arctan(eta/l' - t))`.
pub fn multiplier_small<T: Scalar>(t: T, l: usize, eta: T, big_c: T) -> T {
    let s = [l.wrapping_sub(1), l, l + 1]
        .into_iter()
        .filter(|&m| m >= 1 && m != usize::MAX)
        .fold(T::zero(), |acc, m| acc + (eta / T::from_index(m) - t).atan());
    (big_c * s).exp()
}

/// `exp(-3 int_{t_k}^t (1 + (eta/k - s)^2)^-1 ds)`.
pub fn multiplier_intermediate<T: Scalar>(t: T, k: usize, eta: T) -> T {
    let center = eta / T::from_index(k);
    let tk = resonant_time(eta, k);
    (lit::<T>(-3.0) * ((center - tk).atan() - (center - t).atan())).exp()
}

/// `40^2 |A theta|_X^2 + |A G|_X^2` with `A` given per mode.
pub fn energy<T: Scalar>(state: &ModeState<T>, weight: WeightSpec, multiplier: &[T]) -> T {
    let scaled = |v: &[Complex<T>]| -> Vec<Complex<T>> { v.iter().zip(multiplier).map(|(z, &a)| z * a).collect() };
    let th = norm_x(&scaled(&state.theta), weight);
    let g = norm_x(&scaled(&state.good), weight);
    lit::<T>(1600.0) * th * th + g * g
}

/// Energy with the small-coupling multiplier at the state's time.
pub fn energy_small<T: Scalar>(state: &ModeState<T>, eta: T, weight: WeightSpec, big_c: T) -> T {
    let a: Vec<T> = (1..=state.modes()).map(|l| multiplier_small(state.t, l, eta, big_c)).collect();
    energy(state, weight, &a)
}

/// Amplitude ratios across the resonant interval `I_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoGain<T> {
    pub k: usize,
    /// `|theta_{k-1}(t_{k-1})| / |theta_k(t_k)|`; absent for `k = 1`.
    pub minus: Option<T>,
    /// `|theta_{k+1}(t_{k-1})| / |theta_k(t_k)|`.
    pub plus: T,
}

pub fn echo_gain<T: Scalar>(traj: &Trajectory<T>, k: usize) -> Result<EchoGain<T>> {
    if k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    let eta = traj.config.eta;
    let at_k = traj.sample_at(resonant_time(eta, k))?;
    let after = traj.sample_at(resonant_time(eta, k - 1))?;
    let reference = at_k.theta_at(k).norm();
    if reference == T::zero() {
        return Err(Error::ZeroReference(format!("theta_{k}(t_{k}) = 0")));
    }
    Ok(EchoGain {
        k,
        minus: (k >= 2).then(|| after.theta_at(k - 1).norm() / reference),
        plus: after.theta_at(k + 1).norm() / reference,
    })
}

/// Per-interval record of a chain report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRecord<T> {
    pub k: usize,
    pub t_k: T,
    pub gain_minus: Option<T>,
    pub gain_plus: Option<T>,
    /// `c eta pi / (2 k^3)`.
    pub predicted: T,
    /// Largest `|theta_l|` at `t_{k-1}`.
    pub dominant_mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport<T> {
    /// Ordered by decreasing `k`.
    pub records: Vec<ChainRecord<T>>,
    /// `|theta(end)|_X / |theta(start)|_X`, `end = 2 eta` when sampled.
    pub total_inflation: T,
    /// `|G(end)|_X / (|theta(start)|_X + |G(start)|_X)`.
    pub g_inflation: T,
    pub end_time: T,
    pub thresholds: RegimeThresholds<T>,
}

fn dominant_mode<T: Scalar>(s: &ModeState<T>) -> usize {
    s.theta
        .iter()
        .enumerate()
        .fold((0, -T::one()), |best, (i, z)| if z.norm() > best.1 { (i + 1, z.norm()) } else { best })
        .0
}

/// Echo gains for every resonant `k` (`c eta pi / k^3 >= 1`) whose interval
/// lies in the trajectory, plus the overall inflation.
pub fn chain_report<T: Scalar>(traj: &Trajectory<T>, weight: WeightSpec) -> Result<ChainReport<T>> {
    let eta = traj.config.eta;
    let c = traj.params.c();
    let thresholds = thresholds(c, eta, ThresholdFactors::default(), traj.config.modes);
    let mut records = Vec::new();
    for k in (1..=thresholds.k0).rev() {
        let (Ok(at_k), Ok(after)) = (
            traj.sample_at(resonant_time(eta, k)),
            traj.sample_at(resonant_time(eta, k - 1)),
        ) else {
            continue;
        };
        let reference = at_k.theta_at(k).norm();
        let ratio = |z: Complex<T>| (reference > T::zero()).then(|| z.norm() / reference);
        let kf = T::from_index(k);
        records.push(ChainRecord {
            k,
            t_k: at_k.t,
            gain_minus: if k >= 2 { ratio(after.theta_at(k - 1)) } else { None },
            gain_plus: ratio(after.theta_at(k + 1)),
            predicted: c * eta * T::PI() / (lit::<T>(2.0) * kf * kf * kf),
            dominant_mode: dominant_mode(after),
        });
    }
    let start = traj.first();
    let end = traj.sample_at(resonant_time(eta, 0)).unwrap_or_else(|_| traj.last());
    let th0 = norm_x(&start.theta, weight);
    let g0 = norm_x(&start.good, weight);
    if th0 == T::zero() {
        return Err(Error::ZeroReference("initial theta vanishes".into()));
    }
    Ok(ChainReport {
        records,
        total_inflation: norm_x(&end.theta, weight) / th0,
        g_inflation: norm_x(&end.good, weight) / (th0 + g0),
        end_time: end.t,
        thresholds,
    })
}

/// Slacks (bound minus observed) of the resonance bootstrap inequalities at
/// one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapRecord<T> {
    pub t: T,
    pub b1: T,
    /// Worst of `l = k - 1` (when it exists) and `l = k + 1`.
    pub b2: T,
    /// Worst over `l` not in `{k-1, k, k+1}`; `None` when no such mode exists.
    pub b3: Option<T>,
    pub b4: T,
    /// B4 with the Duhamel kernel `exp(-E(t, T))` in place of `exp(-E(t_k, t))`.
    pub b4_duhamel: T,
    pub b5: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport<T> {
    pub k: usize,
    /// The G forcing carried the `2/l` factor.
    pub g_forcing_per_l: bool,
    pub records: Vec<BootstrapRecord<T>>,
    pub all_hold: bool,
}

/// Evaluates the resonance bootstrap inequalities B1-B5 at the requested
/// times. The trajectory must start at `t_k` from `theta = delta_k`, `G = 0`;
/// the `d G_k` integral in B2 uses the trapezoid rule on the samples, so the
/// samples should resolve the Lorentzian at `eta/k` (see
/// [`bootstrap_sample_times`]).
pub fn bootstrap_check<T: Scalar>(traj: &Trajectory<T>, k: usize, at: &[T]) -> Result<BootstrapReport<T>> {
    let eta = traj.config.eta;
    let c = traj.params.c();
    let nu = traj.params.nu();
    let tk = resonant_time(eta, k);
    let first = traj.first();
    let tol = lit::<T>(1e-12) * tk.max(T::one());
    let one = Complex::new(T::one(), T::zero());
    let is_delta = (first.t - tk).abs() <= tol
        && first.good.iter().all(|z| z.norm() == T::zero())
        && first
            .theta
            .iter()
            .enumerate()
            .all(|(i, z)| if i + 1 == k { *z == one } else { z.norm() == T::zero() });
    if !is_delta {
        return Err(Error::MismatchedInit(format!("expected theta = delta_{k}, G = 0 at t_{k} = {tk}")));
    }
    let kf = T::from_index(k);
    let r = eta / (kf * kf);
    let small = c * r.powi(-2);
    let per_l = traj.config.g_forcing_per_l;
    let pref = if per_l { lit::<T>(2.0) / kf } else { lit(2.0) };
    let forcing = |t: T| {
        let y = eta / kf - t;
        let w = T::one() / (T::one() + y * y);
        pref * y * w * w
    };
    let d = ShearDecay { nu, l: kf, eta };
    let neighbors: Vec<(usize, Branch)> = [(k.wrapping_sub(1), Branch::Plus), (k + 1, Branch::Minus)]
        .into_iter()
        .filter(|&(l, _)| l >= 1 && l != usize::MAX && l <= traj.config.modes)
        .collect();

    let mut records = Vec::with_capacity(at.len());
    for &t_eval in at {
        let s = traj.sample_at(t_eval)?;
        let b1 = lit::<T>(10.0) * c / kf / r - (s.theta_at(k) - one).norm();

        let mut b2 = T::infinity();
        for &(l, branch) in &neighbors {
            let ic = coefficient_integral(CoeffKind::C, l, branch, tk, t_eval, c, eta, lit(1e-14))?;
            // trapezoid on the samples for int d G_k
            let mut idg = Complex::new(T::zero(), T::zero());
            let mut prev: Option<(T, Complex<T>)> = None;
            for p in traj.samples.iter().take_while(|p| p.t <= t_eval + tol) {
                let q = CoefficientQuery { l, branch, t: p.t, c, eta };
                let v = p.good_at(k) * coeff_d(&q);
                if let Some((t0, v0)) = prev {
                    idg += (v + v0) * ((p.t - t0) * lit(0.5));
                }
                prev = Some((p.t, v));
            }
            let dev = (s.theta_at(l) - idg - Complex::new(ic, T::zero())).norm();
            b2 = b2.min(lit::<T>(0.5) / kf * c * eta / (kf * kf * kf) - dev);
        }

        let mut b3: Option<T> = None;
        let mut b5 = T::infinity();
        for l in 1..=s.modes() {
            let dist = l.abs_diff(k);
            if dist >= 2 {
                let bound = c * eta / (kf * kf * kf) * small.powi(dist as i32 + 1);
                let slack = bound - s.theta_at(l).norm();
                b3 = Some(b3.map_or(slack, |b| b.min(slack)));
            }
            if dist >= 1 {
                let bound = eta / (kf * kf * kf) * small.powi(dist as i32);
                b5 = b5.min(bound - s.good_at(l).norm());
            }
        }

        // B4 as printed: kernel exp(-E(t_k, t))
        let opts = QuadOpts::new(lit(1e-14), lit(1e-10));
        let breaks = peak_breaks(tk, t_eval, &[eta / kf]);
        let printed = if breaks.len() < 2 {
            T::zero()
        } else {
            integrate_panels(|t| [(-d.exponent(tk, t)).exp() * forcing(t)], &breaks, &opts)?.value[0]
        };
        let [duhamel] = kernel_integral(&d, tk, t_eval, |x| [forcing(t_eval - x)], lit(1e-10))?;
        let gk = s.good_at(k);
        let b4 = lit::<T>(2.0) / kf - (gk - Complex::new(printed, T::zero())).norm();
        let b4_duhamel = lit::<T>(2.0) / kf - (gk - Complex::new(duhamel, T::zero())).norm();
        records.push(BootstrapRecord {
            t: t_eval,
            b1,
            b2,
            b3,
            b4,
            b4_duhamel,
            b5,
        });
    }
    let all_hold = records.iter().all(|r| {
        r.b1 >= T::zero() && r.b2 >= T::zero() && r.b3.map_or(true, |b| b >= T::zero()) && r.b4 >= T::zero() && r.b5 >= T::zero()
    });
    Ok(BootstrapReport {
        k,
        g_forcing_per_l: per_l,
        records,
        all_hold,
    })
}

/// Sample times over `I_k` dense enough for [`bootstrap_check`]: spacing
/// `0.05 (1 + |t - eta/k|)` around the resonance, capped at `max_gap`.
pub fn bootstrap_sample_times<T: Scalar>(eta: T, k: usize, max_gap: T) -> Vec<T> {
    let a = resonant_time(eta, k);
    let b = resonant_time(eta, k - 1);
    let center = eta / T::from_index(k);
    let mut out = vec![a];
    let mut t = a;
    while t < b {
        let step = (lit::<T>(0.05) * (T::one() + (t - center).abs())).min(max_gap);
        t = (t + step).min(b);
        out.push(t);
    }
    out
}

/// `min_{t >= t_{k3}} |theta_{k3+2}(t)| / |theta_{k3+2}(t_{k3})|`.
pub fn persistence_check<T: Scalar>(traj: &Trajectory<T>, k3: usize) -> Result<T> {
    let eta = traj.config.eta;
    let t3 = resonant_time(eta, k3);
    let mode = k3 + 2;
    let reference = traj.sample_at(t3)?.theta_at(mode).norm();
    if reference == T::zero() {
        return Err(Error::ZeroReference(format!("theta_{mode}(t_{k3}) = 0")));
    }
    let tol = lit::<T>(1e-12) * t3.max(T::one());
    Ok(traj
        .samples
        .iter()
        .filter(|s| s.t >= t3 - tol)
        .map(|s| s.theta_at(mode).norm() / reference)
        .fold(T::infinity(), T::min))
}

/// One regression of `log inflation` against `(c eta)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regression<T> {
    pub exponent: T,
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport<T> {
    pub cube_root: Regression<T>,
    pub square_root: Regression<T>,
    pub fourth_root: Regression<T>,
    /// Exponent of the regressor with the largest `R^2`.
    pub winner: T,
}

/// Fits `log inflation` against `(c eta)^{1/3}`, `^{1/2}` and `^{1/4}`.
pub fn fit_cube_root<T: Scalar>(points: &[(T, T)]) -> Result<FitReport<T>> {
    if points.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, v)| !(x > T::zero() && v > T::one())) {
        return Err(Error::DegenerateFit("need c eta > 0 and inflation > 1".into()));
    }
    let fit = |e: f64| -> Result<Regression<T>> {
        let e: T = lit(e);
        let pts: Vec<(T, T)> = points.iter().map(|&(x, v)| (x.powf(e), v.ln())).collect();
        let (slope, intercept, r_squared) = least_squares(&pts)?;
        Ok(Regression {
            exponent: e,
            slope,
            intercept,
            r_squared,
        })
    };
    let cube_root = fit(1.0 / 3.0)?;
    let square_root = fit(0.5)?;
    let fourth_root = fit(0.25)?;
    let winner = [cube_root, square_root, fourth_root]
        .into_iter()
        .fold(cube_root, |best, r| if r.r_squared > best.r_squared { r } else { best })
        .exponent;
    Ok(FitReport {
        cube_root,
        square_root,
        fourth_root,
        winner,
    })
}

/// `sup_t (40^2 |theta|_X + |G|_X) / (40^2 |theta_0|_X + |G_0|_X)`.
pub fn small_regime_growth<T: Scalar>(traj: &Trajectory<T>, weight: WeightSpec) -> Result<T> {
    let w = |s: &ModeState<T>| lit::<T>(1600.0) * norm_x(&s.theta, weight) + norm_x(&s.good, weight);
    let w0 = w(traj.first());
    if w0 == T::zero() {
        return Err(Error::ZeroReference("initial data vanishes".into()));
    }
    Ok(traj.samples.iter().map(|s| w(s) / w0).fold(T::zero(), T::max))
}

/// `max_{t >= 2 eta} |theta(t) - theta(2 eta)|_X / (2c/eta (|theta(2 eta)|_X + |G(2 eta)|_X))`.
pub fn freeze_ratio<T: Scalar>(traj: &Trajectory<T>, weight: WeightSpec) -> Result<T> {
    let eta = traj.config.eta;
    let t0 = resonant_time(eta, 0);
    let base = traj.sample_at(t0)?;
    let scale = lit::<T>(2.0) * traj.params.c() / eta * (norm_x(&base.theta, weight) + norm_x(&base.good, weight));
    if scale == T::zero() {
        return Err(Error::ZeroReference("state at 2 eta vanishes".into()));
    }
    Ok(traj
        .samples
        .iter()
        .filter(|s| s.t >= t0)
        .map(|s| {
            let diff: Vec<Complex<T>> = s.theta.iter().zip(&base.theta).map(|(a, b)| a - b).collect();
            norm_x(&diff, weight) / scale
        })
        .fold(T::zero(), T::max))
}

/// `max_{t in I_k} |theta(t) - theta(t_k)|_X` over `|theta(t_k)|_X + |G(t_k)|_X`,
/// compared with `2 c eta pi / k^3` by the caller.
pub fn interval_deviation<T: Scalar>(traj: &Trajectory<T>, k: usize, weight: WeightSpec) -> Result<T> {
    let eta = traj.config.eta;
    let (a, b) = (resonant_time(eta, k), resonant_time(eta, k - 1));
    let base = traj.sample_at(a)?;
    let scale = norm_x(&base.theta, weight) + norm_x(&base.good, weight);
    if scale == T::zero() {
        return Err(Error::ZeroReference(format!("state at t_{k} vanishes")));
    }
    Ok(traj
        .samples
        .iter()
        .filter(|s| s.t >= a && s.t <= b)
        .map(|s| {
            let diff: Vec<Complex<T>> = s.theta.iter().zip(&base.theta).map(|(x, y)| x - y).collect();
            norm_x(&diff, weight) / scale
        })
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn resonant_times_bracket_peaks() {
        let eta = 1000.0;
        assert_eq!(resonant_time(eta, 0), 2000.0);
        for k in 1..20 {
            let t = resonant_time(eta, k);
            assert!(t > eta / (k + 1) as f64 && t < eta / k as f64);
            assert!(resonant_time(eta, k + 1) < t);
        }
    }

    #[test]
    fn k0_on_perfect_cube() {
        let c = 0.001;
        assert_eq!(resonant_k0(c, 125.0 / (c * PI)), 5);
        assert_eq!(resonant_k0(c, 124.9 / (c * PI)), 4);
        assert_eq!(resonant_k0(c, 0.9 / (c * PI)), 0);
    }

    #[test]
    fn default_thresholds() {
        let th = thresholds(0.01, 8000.0 / (0.01 * PI), ThresholdFactors::default(), 30);
        assert_eq!((th.k0, th.k1, th.k2, th.k3), (20, 80, 2, 1));
        assert_eq!(th.t_k.len(), 31);
        assert!(!th.all_stable);
    }

    #[test]
    fn weighted_norm() {
        let v = [Complex::new(3.0, 0.0), Complex::new(0.0, 4.0)];
        assert_relative_eq!(norm_x(&v, WeightSpec::Uniform), 5.0);
        assert_relative_eq!(norm_x(&v, WeightSpec::Analytic), (36.0f64 + 256.0).sqrt());
    }

    #[test]
    fn least_squares_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.5 * i as f64 - 1.0)).collect();
        let (s, b, r2) = least_squares(&pts).unwrap();
        assert_relative_eq!(s, 2.5, epsilon = 1e-12);
        assert_relative_eq!(b, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
        assert!(least_squares(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn golden_lorentzian_integrals() {
        assert_relative_eq!(lorentzian_line_integral::<f64>(2).unwrap(), PI / 2.0, epsilon = 1e-11);
        assert_relative_eq!(lorentzian_line_integral::<f64>(1).unwrap(), PI, epsilon = 1e-10);
    }

    #[test]
    fn coefficient_integral_closed_form() {
        let (c, eta, l) = (0.002, 500.0, 3);
        let (t0, t1) = (100.0, 180.0);
        let m = 4.0;
        let x = |t: f64| t - eta / m;
        let f = |x: f64| x / (2.0 * (1.0 + x * x)) + x.atan() / 2.0;
        let base = c * eta / (m * m * m);
        let ic = coefficient_integral(CoeffKind::C, l, Branch::Plus, t0, t1, c, eta, 1e-15).unwrap();
        assert_relative_eq!(ic, base * (f(x(t1)) - f(x(t0))), max_relative = 1e-10);
        let id = coefficient_integral(CoeffKind::D, l, Branch::Plus, t0, t1, c, eta, 1e-15).unwrap();
        assert_relative_eq!(id, base * (x(t1).atan() - x(t0).atan()), max_relative = 1e-10);
        assert_eq!(coefficient_integral(CoeffKind::C, 1, Branch::Minus, t0, t1, c, eta, 1e-15).unwrap(), 0.0);
        assert!(coefficient_integral(CoeffKind::C, 1, Branch::Plus, t1, t0, c, eta, 1e-15).is_err());
    }

    #[test]
    fn resonant_mass_near_prediction() {
        let r = resonant_mass(0.001, 1e5, 2).unwrap();
        assert_eq!(r.pass, Some(true), "{r:?}");
        assert!(r.ratio > 0.999);
        let s = resonant_mass(0.001, 300.0, 2).unwrap();
        assert_eq!(s.skipped, Some(SkipReason::EtaOverK2Below100));
        assert_eq!(s.pass, None);
    }

    #[test]
    fn coefficient_bounds_hold_in_resonant_interval() {
        let eta: f64 = 1e5;
        let rows = coefficient_bounds(0.001f64, 1.0, eta, 2, 6, resonant_time(eta, 1)).unwrap();
        assert!(rows.len() > 20);
        // printed constants are not sharp; allow a factor 4
        for r in &rows {
            assert!(r.value.is_finite() && r.value >= 0.0);
            assert!(r.value <= 4.0 * r.bound, "{r:?}");
        }
        for name in ["c_nonresonant", "g_theta_resonant", "g_theta_nonresonant", "g_theta_c", "g_good_d"] {
            assert!(rows.iter().filter(|r| r.name == name).all(|r| r.pass), "{name}");
        }
    }

    #[test]
    fn multipliers() {
        let eta = 100.0;
        let a = multiplier_small(0.0, 1, eta, 0.01);
        let expect = (0.01 * ((100.0f64).atan() + (50.0f64).atan())).exp();
        assert_relative_eq!(a, expect, max_relative = 1e-14);
        // bounded by exp(3 C pi/2)
        for t in [0.0, 30.0, 70.0, 500.0] {
            for l in 1..6 {
                let a = multiplier_small(t, l, eta, 0.01);
                assert!(a <= (0.03 * PI / 2.0).exp() && a >= (-0.03 * PI / 2.0).exp());
            }
        }
        let k = 3;
        assert_relative_eq!(multiplier_intermediate(resonant_time(eta, k), k, eta), 1.0);
        assert!(multiplier_intermediate(resonant_time(eta, k - 1), k, eta) < (-3.0 * 2.5f64).exp());
    }

    #[test]
    fn energy_with_unit_multiplier() {
        let mut s = ModeState::<f64>::zeros(0.0, 3);
        s.theta[0] = Complex::new(1.0, 0.0);
        s.good[2] = Complex::new(0.0, 2.0);
        assert_relative_eq!(energy(&s, WeightSpec::Uniform, &[1.0; 3]), 1600.0 + 4.0);
    }

    #[test]
    fn cube_root_fit_selects_cube_root() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| {
            let x = 10.0 * 2f64.powi(i);
            (x, (0.8 * x.cbrt() + 0.1).exp())
        }).collect();
        let r = fit_cube_root(&pts).unwrap();
        assert_relative_eq!(r.winner, 1.0 / 3.0);
        assert_relative_eq!(r.cube_root.slope, 0.8, epsilon = 1e-10);
        assert!(r.cube_root.r_squared > r.square_root.r_squared);
        assert!(fit_cube_root(&pts[..3]).is_err());
    }

    #[test]
    fn bootstrap_grid_covers_interval() {
        let eta = 1e4;
        let ts = bootstrap_sample_times(eta, 3, 5.0);
        assert_eq!(ts[0], resonant_time(eta, 3));
        assert_eq!(*ts.last().unwrap(), resonant_time(eta, 2));
        assert!(ts.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 5.0 + 1e-9));
    }
}
