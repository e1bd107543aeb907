//! Real-parameter quadrature rules for complex integrands: adaptive
//! Gauss–Kronrod (7, 15) and a one-sided tanh-sinh rule for algebraic
//! endpoint singularities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum integrand evaluations per call.
pub const NODE_BUDGET: usize = 1 << 14;

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs = fc.norm() * WGK[7];
    for i in 0..7 {
        let x = h * XGK[i];
        let f1 = f(c - x);
        let f2 = f(c + x);
        k += (f1 + f2) * WGK[i];
        abs += (f1.norm() + f2.norm()) * WGK[i];
        if i % 2 == 1 {
            g += (f1 + f2) * WG[i / 2];
        }
    }
    Panel {
        a,
        b,
        value: k * h,
        err: ((k - g) * h).norm(),
        abs: abs * h.abs(),
    }
}

/// Adaptive G7/K15 integration of `f` over `[a, b]`.
pub fn gauss_kronrod<F: FnMut(f64) -> Complex64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(Complex64, f64)> {
    let mut heap = BinaryHeap::new();
    let first = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut total = first.value;
    let mut err = first.err;
    let mut abs = first.abs;
    heap.push(first);
    loop {
        if !total.is_finite() {
            return Err(Error::Convergence {
                msg: "non-finite integrand value".into(),
                best: total,
                err_estimate: f64::INFINITY,
            });
        }
        let target = tol.max(50.0 * f64::EPSILON * abs);
        if err <= target {
            return Ok((total, err));
        }
        if evals + 30 > NODE_BUDGET {
            return Err(Error::Convergence {
                msg: format!("node budget {NODE_BUDGET} exhausted"),
                best: total,
                err_estimate: err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let m = 0.5 * (worst.a + worst.b);
        let l = gk15(&mut f, worst.a, m);
        let r = gk15(&mut f, m, worst.b);
        evals += 30;
        total += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        abs += l.abs + r.abs - worst.abs;
        heap.push(l);
        heap.push(r);
        // Recompute the running error from scratch now and then to shed drift.
        if evals % 3000 < 30 {
            err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Upper end of the tanh-sinh abscissa range. The node closest to the
/// singular end lies about 1e-112 away from it, so squared offsets stay
/// clear of underflow in complex division.
const TS_UMAX: f64 = 5.1;
const TS_MAX_LEVEL: usize = 9;

/// Tanh-sinh integration of `f(x, 1 - x)` over `x ∈ (0, 1)` for an integrand
/// singular at `x = 0`. `f` receives the node `x` and `1 - x`, both to full
/// relative accuracy.
pub fn tanh_sinh<F: FnMut(f64, f64) -> Complex64>(mut f: F, tol: f64) -> Result<(Complex64, f64)> {
    let mut node = |u: f64| -> Complex64 {
        let v = 0.5 * PI * u.sinh();
        let x = 1.0 / (1.0 + (-2.0 * v).exp());
        let xc = 1.0 / (1.0 + (2.0 * v).exp());
        if x == 0.0 || xc == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let w = PI * u.cosh() * x * xc;
        let val = f(x, xc);
        if val.is_finite() {
            val * w
        } else {
            Complex64::new(f64::NAN, f64::NAN)
        }
    };
    let mut h = 1.0;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    let n0 = (TS_UMAX / h) as i64;
    for k in -n0..=n0 {
        let v = node(k as f64 * h);
        sum += v;
        abs += v.norm();
    }
    let mut prev = sum * h;
    for level in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        let n = (TS_UMAX / h) as i64;
        let mut k = if n % 2 == 0 { -n + 1 } else { -n };
        while k <= n {
            let v = node(k as f64 * h);
            sum += v;
            abs += v.norm();
            k += 2;
        }
        let cur = sum * h;
        if !cur.is_finite() {
            return Err(Error::Convergence {
                msg: "non-finite integrand in tanh-sinh rule".into(),
                best: prev,
                err_estimate: f64::INFINITY,
            });
        }
        let diff = (cur - prev).norm();
        let target = tol.max(50.0 * f64::EPSILON * abs * h);
        if level >= 3 && diff <= target {
            return Ok((cur, diff));
        }
        prev = cur;
    }
    Err(Error::Convergence {
        msg: format!("tanh-sinh did not reach {tol:e} after {TS_MAX_LEVEL} levels"),
        best: prev,
        err_estimate: f64::INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_and_exp() {
        let (v, _) = gauss_kronrod(|x| Complex64::new(x * x, 0.0), 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).norm() < 1e-12);
        let (v, _) = gauss_kronrod(|x| Complex64::new(0.0, x).exp(), 0.0, 10.0, 1e-12).unwrap();
        let want = (Complex64::new(0.0, 10.0).exp() - 1.0) / Complex64::new(0.0, 1.0);
        assert!((v - want).norm() < 1e-11);
    }

    #[test]
    fn gk_budget_error_carries_estimate() {
        let r = gauss_kronrod(|x| Complex64::new(1.0 / x.abs().sqrt(), 0.0), -1.0, 1.0, 1e-14);
        match r {
            Err(Error::Convergence { best, .. }) => assert!(best.norm() > 1.0),
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn tanh_sinh_power_singularity() {
        // ∫_0^1 x^{-0.7} dx = 1/0.3
        let (v, _) = tanh_sinh(|x, _| Complex64::new(x.powf(-0.7), 0.0), 1e-12).unwrap();
        assert!((v - 1.0 / 0.3).norm() < 1e-10, "{v}");
        // complement accuracy: ∫_0^1 (1-x)^{-0.5} dx = 2
        let (v, _) = tanh_sinh(|_, xc| Complex64::new(xc.powf(-0.5), 0.0), 1e-12).unwrap();
        assert!((v - 2.0).norm() < 1e-10, "{v}");
    }
}
