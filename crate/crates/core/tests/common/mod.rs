#![allow(dead_code)]

use num_complex::Complex64;
use shearecho::{Params, State};

pub type C = Complex64;

/// Full right-hand side written out term by term, independent of the crate's
/// implementation. `f` is the wave amplitude at `t`.
pub fn rhs_terms(t: f64, s: &State, f: f64, p: &Params, eta: f64, per_l: bool) -> (Vec<C>, Vec<C>) {
    let n = s.theta.len();
    let c = p.c();
    let nu = p.nu();
    let cc = |m: usize| -> f64 {
        if m == 0 || m > n {
            return 0.0;
        }
        let m = m as f64;
        c * eta / m.powi(3) / (1.0 + (eta / m - t).powi(2)).powi(2)
    };
    let dd = |m: usize| -> f64 {
        if m == 0 || m > n {
            return 0.0;
        }
        let m = m as f64;
        c * eta / m.powi(3) / (1.0 + (eta / m - t).powi(2))
    };
    let th = |m: usize| if m == 0 || m > n { C::new(0.0, 0.0) } else { s.theta[m - 1] };
    let gg = |m: usize| if m == 0 || m > n { C::new(0.0, 0.0) } else { s.good[m - 1] };
    let mut dth = vec![C::new(0.0, 0.0); n];
    let mut dg = vec![C::new(0.0, 0.0); n];
    for l in 1..=n {
        let lf = l as f64;
        let coupling = th(l + 1) * cc(l + 1) + th(l - 1) * cc(l - 1) + gg(l + 1) * dd(l + 1) + gg(l - 1) * dd(l - 1);
        dth[l - 1] = coupling;
        let y = eta / lf - t;
        let decay = -gg(l) * nu * (lf * lf + (eta - lf * t).powi(2));
        // f nu / g with g = 2 c nu
        let wave = if c > 0.0 { C::new(0.0, lf) * coupling * (f / (2.0 * c)) } else { C::new(0.0, 0.0) };
        let pref = if per_l { 2.0 / lf } else { 2.0 };
        let forcing = th(l) * (pref * y / (1.0 + y * y).powi(2));
        let lor = coupling / (1.0 + y * y);
        dg[l - 1] = decay + wave + forcing + lor;
    }
    (dth, dg)
}

/// Classical RK4 with a fixed step on the full system plus the wave ODE
/// `f' = -nu (1 + t^2) f - g` (or a prescribed `f`).
pub fn rk4_oracle(p: &Params, eta: f64, init: &State, f0: f64, t1: f64, h: f64, wave_ode: bool) -> (State, f64) {
    let n = init.theta.len();
    let g = p.g();
    let nu = p.nu();
    let deriv = |t: f64, s: &State, f: f64| -> (State, f64) {
        let (a, b) = rhs_terms(t, s, f, p, eta, false);
        let df = if wave_ode { -nu * (1.0 + t * t) * f - g } else { 0.0 };
        (State { t, theta: a, good: b }, df)
    };
    let axpy = |s: &State, k: &State, a: f64| State {
        t: s.t,
        theta: s.theta.iter().zip(&k.theta).map(|(x, y)| x + y * a).collect(),
        good: s.good.iter().zip(&k.good).map(|(x, y)| x + y * a).collect(),
    };
    let mut s = init.clone();
    let mut f = f0;
    let steps = ((t1 - init.t) / h).round() as usize;
    let h = (t1 - init.t) / steps as f64;
    let mut t = init.t;
    for _ in 0..steps {
        let (k1, l1) = deriv(t, &s, f);
        let (k2, l2) = deriv(t + h / 2.0, &axpy(&s, &k1, h / 2.0), f + l1 * h / 2.0);
        let (k3, l3) = deriv(t + h / 2.0, &axpy(&s, &k2, h / 2.0), f + l2 * h / 2.0);
        let (k4, l4) = deriv(t + h, &axpy(&s, &k3, h), f + l3 * h);
        let mut next = s.clone();
        for i in 0..n {
            next.theta[i] += (k1.theta[i] + k2.theta[i] * 2.0 + k3.theta[i] * 2.0 + k4.theta[i]) * (h / 6.0);
            next.good[i] += (k1.good[i] + k2.good[i] * 2.0 + k3.good[i] * 2.0 + k4.good[i]) * (h / 6.0);
        }
        f += (l1 + 2.0 * l2 + 2.0 * l3 + l4) * h / 6.0;
        t += h;
        next.t = t;
        s = next;
    }
    (s, f)
}

/// Deterministic pseudo-random complex state.
pub fn scrambled_state(t: f64, modes: usize, seed: u64) -> State {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut s = State::zeros(t, modes);
    for i in 0..modes {
        s.theta[i] = C::new(next(), next());
        s.good[i] = C::new(next(), next());
    }
    s
}

/// `|a - b| <= rel |b| + floor` for every component; returns the worst ratio.
pub fn worst_mismatch(a: &State, b: &State, floor: f64) -> f64 {
    a.theta
        .iter()
        .zip(&b.theta)
        .chain(a.good.iter().zip(&b.good))
        .map(|(x, y)| (x - y).norm() / (y.norm() + floor))
        .fold(0.0, f64::max)
}
