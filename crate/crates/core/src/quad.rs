//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Vector-valued integrands share the subdivision so that several moments of
//! the same kernel cost one set of function evaluations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> QuadOpts<T> {
    pub fn new(abs_tol: T, rel_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_intervals: 2000,
        }
    }
}

impl<T: Scalar> Default for QuadOpts<T> {
    fn default() -> Self {
        let floor = T::epsilon() * lit(50.0);
        Self::new(floor, lit::<T>(1e-10).max(floor))
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T, const N: usize> {
    pub value: [T; N],
    pub error: T,
    pub evaluations: usize,
}

struct Panel<T, const N: usize> {
    a: T,
    b: T,
    value: [T; N],
    error: T,
}

impl<T: Scalar, const N: usize> PartialEq for Panel<T, N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Scalar, const N: usize> Eq for Panel<T, N> {}
impl<T: Scalar, const N: usize> PartialOrd for Panel<T, N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar, const N: usize> Ord for Panel<T, N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// One 15-point Kronrod panel with the embedded 7-point Gauss estimate.
pub fn gk15<T: Scalar, const N: usize, F>(f: &mut F, a: T, b: T) -> ([T; N], T)
where
    F: FnMut(T) -> [T; N],
{
    let center = (a + b) * lit(0.5);
    let half = (b - a) * lit(0.5);
    let mut kron = [T::zero(); N];
    let mut gauss = [T::zero(); N];
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let wk: T = lit(wk);
        let wg: Option<T> = (i % 2 == 1).then(|| lit(WG[i / 2]));
        let mut add = |v: [T; N]| {
            for j in 0..N {
                kron[j] += wk * v[j];
                if let Some(wg) = wg {
                    gauss[j] += wg * v[j];
                }
            }
        };
        if x == 0.0 {
            add(f(center));
        } else {
            let dx = half * lit(x);
            add(f(center - dx));
            add(f(center + dx));
        }
    }
    let mut err = T::zero();
    for j in 0..N {
        kron[j] *= half;
        gauss[j] *= half;
        err = err.max((kron[j] - gauss[j]).abs());
    }
    (kron, err)
}

fn max_abs<T: Scalar, const N: usize>(v: &[T; N]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Integrates a vector-valued `f` over `[a, b]`. The error is measured in the
/// max norm and the relative tolerance refers to the largest component.
pub fn integrate<T: Scalar, const N: usize, F>(
    f: F,
    a: T,
    b: T,
    opts: &QuadOpts<T>,
) -> Result<QuadResult<T, N>>
where
    F: FnMut(T) -> [T; N],
{
    integrate_panels(f, &[a, b], opts)
}

/// [`integrate`] over `[breaks[0], breaks[last]]`, starting from the panels
/// between consecutive break points.
pub fn integrate_panels<T: Scalar, const N: usize, F>(
    mut f: F,
    breaks: &[T],
    opts: &QuadOpts<T>,
) -> Result<QuadResult<T, N>>
where
    F: FnMut(T) -> [T; N],
{
    let (a, b) = match breaks {
        [a, .., b] => (*a, *b),
        _ => return Err(Error::Empty("quadrature break points")),
    };
    if a == b {
        return Ok(QuadResult {
            value: [T::zero(); N],
            error: T::zero(),
            evaluations: 0,
        });
    }
    let fail = |total: &[T; N], err: T| Error::Quadrature {
        a: a.as_f64(),
        b: b.as_f64(),
        estimate: max_abs(total).as_f64(),
        error: err.as_f64(),
    };
    let mut evaluations = 0;
    let mut total = [T::zero(); N];
    let mut total_err = T::zero();
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let (value, error) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        if !(error.is_finite() && value.iter().all(|v| v.is_finite())) {
            return Err(fail(&value, T::infinity()));
        }
        for j in 0..N {
            total[j] += value[j];
        }
        total_err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * max_abs(&total));
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(fail(&total, total_err));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = (worst.a + worst.b) * lit(0.5);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval can no longer be split in this precision
            return Err(fail(&total, total_err));
        }
        let (lv, le) = gk15(&mut f, worst.a, mid);
        let (rv, re) = gk15(&mut f, mid, worst.b);
        if !(le.is_finite() && re.is_finite() && lv.iter().chain(rv.iter()).all(|v| v.is_finite())) {
            return Err(fail(&total, T::infinity()));
        }
        evaluations += 30;
        for j in 0..N {
            total[j] += lv[j] + rv[j] - worst.value[j];
        }
        total_err += le + re - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
    }

    // re-sum to shed accumulated rounding from the running updates
    let mut value = [T::zero(); N];
    let mut error = T::zero();
    for p in heap.iter() {
        for j in 0..N {
            value[j] += p.value[j];
        }
        error += p.error;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Scalar convenience wrapper returning `(value, error estimate)`.
pub fn integrate_scalar<T: Scalar, F>(mut f: F, a: T, b: T, opts: &QuadOpts<T>) -> Result<(T, T)>
where
    F: FnMut(T) -> T,
{
    let r = integrate(|x| [f(x)], a, b, opts)?;
    Ok((r.value[0], r.error))
}

/// Integral over the whole real line via `x = center + u / (1 - u^2)`.
pub fn integrate_real_line<T: Scalar, F>(mut f: F, center: T, opts: &QuadOpts<T>) -> Result<(T, T)>
where
    F: FnMut(T) -> T,
{
    let one = T::one();
    integrate_scalar(
        |u| {
            let d = one - u * u;
            if d <= T::zero() {
                return T::zero();
            }
            let x = center + u / d;
            let jac = (one + u * u) / (d * d);
            let v = f(x) * jac;
            if v.is_finite() {
                v
            } else {
                T::zero()
            }
        },
        -one,
        one,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate_scalar(|x: f64| 3.0 * x * x, 0.0, 2.0, &QuadOpts::default()).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let o = QuadOpts::default();
        let (a, _) = integrate_scalar(|x: f64| x.exp(), 0.0, 1.0, &o).unwrap();
        let (b, _) = integrate_scalar(|x: f64| x.exp(), 1.0, 0.0, &o).unwrap();
        assert!((a + b).abs() < 1e-14);
        assert!((a - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        // narrow Lorentzian on a long interval
        let o = QuadOpts::new(1e-12, 1e-12);
        let (v, _) = integrate_scalar(|x: f64| 1.0 / (1.0 + (x - 3000.0).powi(2)), 0.0, 10_000.0, &o).unwrap();
        let exact = (7000.0f64).atan() + (3000.0f64).atan();
        assert!((v - exact).abs() < 1e-10, "{v} {exact}");
    }

    #[test]
    fn vector_moments() {
        let r = integrate(|x: f64| [1.0, x, x * x], 0.0, 1.0, &QuadOpts::default()).unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-14);
        assert!((r.value[1] - 0.5).abs() < 1e-14);
        assert!((r.value[2] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn real_line_gaussian() {
        let (v, _) = integrate_real_line(|x: f64| (-x * x).exp(), 0.0, &QuadOpts::new(1e-13, 1e-13)).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn failure_is_reported() {
        let o = QuadOpts {
            abs_tol: 1e-15,
            rel_tol: 1e-15,
            max_intervals: 3,
        };
        let r = integrate_scalar(|x: f64| x.abs().sqrt().recip(), -1.0, 1.0, &o);
        assert!(r.is_err(), "{r:?}");
    }
}
