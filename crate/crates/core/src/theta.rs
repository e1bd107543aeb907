//! Odd Jacobi theta function
//! `θ(z, τ) = e^{-πiz} Σ_l (-1)^l e^{2πi(l z + l(l-1)τ/2)}`,
//! its z-derivatives, the heat equation in τ, and the genus-one prime form.
//!
//! Pairing the terms `l` and `1 - l` gives the sine series
//! `θ(z) = 2i Σ_{j≥0} (-1)^{j+1} sin((2j+1)πz) e^{πi j(j+1) τ}`,
//! which keeps full relative accuracy near the zero at `z = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::finite_diff5;

/// Internal summation tolerance.
pub const THETA_TOL: f64 = 1e-15;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Modular parameter with positive imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Complex64", into = "Complex64")]
pub struct LatticeParam {
    tau: Complex64,
}

impl LatticeParam {
    pub fn new(tau: Complex64) -> Result<Self> {
        if !(tau.im > 0.0 && tau.re.is_finite() && tau.im.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lattice parameter must have Im(tau) > 0, got {tau}"
            )));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    /// Writes `z = z0 + m + nτ` with `z0` in the period cell centred at 0.
    pub fn reduce(&self, z: Complex64) -> (Complex64, i64, i64) {
        let n = (z.im / self.tau.im).round();
        let z1 = z - n * self.tau;
        let m = z1.re.round();
        (z1 - m, m as i64, n as i64)
    }

    /// Distance from `w` to the nearest lattice point `m + nτ`.
    pub fn distance(&self, w: Complex64) -> f64 {
        let (w0, _, _) = self.reduce(w);
        let mut best = f64::INFINITY;
        for dn in -1..=1 {
            for dm in -1..=1 {
                let lam = Complex64::new(dm as f64, 0.0) + dn as f64 * self.tau;
                best = best.min((w0 - lam).norm());
            }
        }
        best
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn min_period(&self) -> f64 {
        let mut best = f64::INFINITY;
        for n in -2i32..=2 {
            for m in -2i32..=2 {
                if m == 0 && n == 0 {
                    continue;
                }
                best = best.min((m as f64 + n as f64 * self.tau).norm());
            }
        }
        best
    }

    /// If `w` lies within `1e-12 (1 + |w|)` of a lattice point, returns its indices.
    pub fn lattice_point(&self, w: Complex64) -> Option<(i64, i64)> {
        let (w0, m, n) = self.reduce(w);
        (w0.norm() <= 1e-12 * (1.0 + w.norm())).then_some((m, n))
    }

    /// Multiplier `c` with `θ(w + m + nτ) = c · θ(w)`.
    pub fn shift_factor(&self, w: Complex64, m: i64, n: i64) -> Complex64 {
        let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let nf = n as f64;
        sign * (-2.0 * PI * I * nf * w - PI * I * nf * nf * self.tau).exp()
    }
}

impl TryFrom<Complex64> for LatticeParam {
    type Error = Error;
    fn try_from(tau: Complex64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<LatticeParam> for Complex64 {
    fn from(p: LatticeParam) -> Self {
        p.tau
    }
}

/// `[θ, θ', θ'', θ''']` of the sine series at an already reduced argument.
fn series_jet(z: Complex64, tau: Complex64, tol: f64) -> [Complex64; 4] {
    let mut acc = [Complex64::new(0.0, 0.0); 4];
    let y = z.im.abs();
    let tol = tol.max(f64::EPSILON * 0.25);
    for j in 0..64u32 {
        let jf = j as f64;
        let k = (2.0 * jf + 1.0) * PI;
        let bound = 2.0 * (k * y - PI * jf * (jf + 1.0) * tau.im).exp() * k.max(1.0).powi(3);
        let scale = acc[0].norm() + acc[1].norm() + 1.0;
        if j > 0 && bound < tol * scale {
            break;
        }
        let q = (PI * I * jf * (jf + 1.0) * tau).exp();
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        let c = 2.0 * I * sign * q;
        let s = (k * z).sin();
        let co = (k * z).cos();
        acc[0] += c * s;
        acc[1] += c * k * co;
        acc[2] -= c * k * k * s;
        acc[3] -= c * k * k * k * co;
    }
    acc
}

/// `[θ, θ', θ'', θ''']` at `z` for the given lattice.
pub fn theta_jet(z: Complex64, tau: LatticeParam, tol: f64) -> [Complex64; 4] {
    let (z0, m, n) = tau.reduce(z);
    let base = series_jet(z0, tau.tau, tol);
    if m == 0 && n == 0 {
        return base;
    }
    let f = tau.shift_factor(z0, m, n);
    let d = -2.0 * PI * I * n as f64;
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..=k {
            s += binom[k][j] * d.powu((k - j) as u32) * base[j];
        }
        *slot = f * s;
    }
    out
}

pub fn theta(z: Complex64, tau: LatticeParam, tol: f64) -> Complex64 {
    let (z0, m, n) = tau.reduce(z);
    let v = series_jet(z0, tau.tau, tol)[0];
    if m == 0 && n == 0 {
        v
    } else {
        tau.shift_factor(z0, m, n) * v
    }
}

/// z-derivative of order 1, 2 or 3.
pub fn theta_dz(z: Complex64, tau: LatticeParam, order: usize, tol: f64) -> Result<Complex64> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidInput(format!(
            "theta derivative order must be 1, 2 or 3, got {order}"
        )));
    }
    Ok(theta_jet(z, tau, tol)[order])
}

/// `∂θ/∂τ` from the heat equation `θ_τ = -(i/4π) θ'' - (πi/4) θ`.
pub fn theta_dtau(z: Complex64, tau: LatticeParam, tol: f64) -> Complex64 {
    let j = theta_jet(z, tau, tol);
    -I / (4.0 * PI) * j[2] - PI * I / 4.0 * j[0]
}

/// `∂θ'/∂τ`, obtained by differentiating the heat equation in z.
pub fn theta_prime_dtau(z: Complex64, tau: LatticeParam, tol: f64) -> Complex64 {
    let j = theta_jet(z, tau, tol);
    -I / (4.0 * PI) * j[3] - PI * I / 4.0 * j[1]
}

/// Genus-one prime form `E(x, y) = θ(x - y)/θ'(0)`.
pub fn prime_form_g1(x: Complex64, y: Complex64, tau: LatticeParam) -> Complex64 {
    let d0 = theta_jet(Complex64::new(0.0, 0.0), tau, THETA_TOL)[1];
    theta(x - y, tau, THETA_TOL) / d0
}

/// `θ(δ + m + nτ)` for a small offset `δ` given exactly.
pub fn theta_translated(delta: Complex64, m: i64, n: i64, tau: LatticeParam) -> Complex64 {
    tau.shift_factor(delta, m, n) * theta(delta, tau, THETA_TOL)
}

/// Maximum residual per identity over a random sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaIdentityReport {
    pub parity: f64,
    pub period_one: f64,
    pub period_tau: f64,
    pub heat: f64,
    pub addition: f64,
    pub samples: usize,
}

impl ThetaIdentityReport {
    pub fn max(&self) -> f64 {
        [self.parity, self.period_one, self.period_tau, self.heat, self.addition]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn rel(diff: Complex64, scale: f64) -> f64 {
    diff.norm() / scale.max(1.0)
}

/// Residuals of parity, both quasi-periodicities, the heat equation (with a
/// finite-difference τ-derivative) and the four-term addition identity.
pub fn check_theta_identities(tau: LatticeParam, sample_count: usize, seed: u64) -> ThetaIdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = tau.tau;
    let th = |w: Complex64| theta(w, tau, THETA_TOL);
    let dth = |w: Complex64| theta_jet(w, tau, THETA_TOL)[1];
    let log_d = |w: Complex64| {
        let j = theta_jet(w, tau, THETA_TOL);
        j[1] / j[0]
    };
    let d0 = dth(Complex64::new(0.0, 0.0));
    let mut rep = ThetaIdentityReport {
        parity: 0.0,
        period_one: 0.0,
        period_tau: 0.0,
        heat: 0.0,
        addition: 0.0,
        samples: sample_count,
    };
    let draw = |rng: &mut ChaCha8Rng| {
        Complex64::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.6..0.6) * t.im)
    };
    let mut taken = 0;
    while taken < sample_count {
        let (z, tt, u, eta) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let poles = [eta, z - tt + eta, z - u, tt - u, z - tt];
        if poles.iter().any(|p| tau.distance(*p) < 0.1) {
            continue;
        }
        taken += 1;

        let tz = th(z);
        rep.parity = rep.parity.max(rel(th(-z) + tz, tz.norm()));
        rep.period_one = rep.period_one.max(rel(th(z + 1.0) + tz, tz.norm()));
        let shifted = th(z + t);
        let want = -(-2.0 * PI * I * (z + t / 2.0)).exp() * tz;
        rep.period_tau = rep.period_tau.max(rel(shifted - want, want.norm()));

        let fd = finite_diff5(
            |s: Complex64| {
                LatticeParam::new(s).map(|p| theta(z, p, THETA_TOL))
            },
            t,
            1e-3,
        )
        .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        let heat = theta_dtau(z, tau, THETA_TOL);
        let r = rel(fd - heat, heat.norm());
        rep.heat = rep.heat.max(if r.is_nan() { f64::INFINITY } else { r });

        let lhs = log_d(z - tt + eta) - log_d(eta) + log_d(tt - u) - log_d(z - u);
        let rhs = -d0 * th(z - tt) * th(z - u + eta) * th(tt - u - eta)
            / (th(eta) * th(z - tt + eta) * th(z - u) * th(tt - u));
        rep.addition = rep.addition.max(rel(lhs - rhs, rhs.norm().max(lhs.norm())));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lat(t: Complex64) -> LatticeParam {
        LatticeParam::new(t).unwrap()
    }

    // Literal series from the definition, summed over |l| <= 64 without reduction.
    fn brute(z: Complex64, tau: Complex64) -> Complex64 {
        let mut s = c(0.0, 0.0);
        for l in -64i64..=64 {
            let lf = l as f64;
            let sign = if l.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            s += sign * (2.0 * PI * I * (lf * z + lf * (lf - 1.0) / 2.0 * tau)).exp();
        }
        (-PI * I * z).exp() * s
    }

    #[test]
    fn zero_at_origin() {
        assert!(theta(c(0.0, 0.0), lat(I), 1e-14).norm() < 1e-12);
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(LatticeParam::new(c(0.3, -1.0)).is_err());
        assert!(LatticeParam::new(c(0.3, 0.0)).is_err());
    }

    #[test]
    fn period_one_sign() {
        let z = c(0.31, 0.17);
        let t = lat(I);
        assert!((theta(z + 1.0, t, 1e-14) + theta(z, t, 1e-14)).norm() < 1e-11);
    }

    #[test]
    fn matches_brute_force_sum() {
        for (z, tau) in [(c(0.5, 0.0), I), (c(0.2, 0.3), c(0.3, 1.2)), (c(-0.7, 0.4), c(-0.4, 0.8))] {
            let a = theta(z, lat(tau), 1e-14);
            let b = brute(z, tau);
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn reduction_matches_brute_force() {
        let tau = c(0.3, 1.2);
        let z = c(2.3, 2.9);
        let a = theta(z, lat(tau), 1e-14);
        let b = brute(z, tau);
        assert!((a - b).norm() < 1e-10 * b.norm(), "{a} vs {b}");
    }

    #[test]
    fn simple_zero_and_even_derivative() {
        let t = lat(I);
        let d0 = theta_dz(c(0.0, 0.0), t, 1, 1e-14).unwrap();
        assert!(d0.norm() > 1.0);
        let z = c(0.23, -0.31);
        let a = theta_dz(z, t, 1, 1e-14).unwrap();
        let b = theta_dz(-z, t, 1, 1e-14).unwrap();
        assert!((a - b).norm() < 1e-11);
        assert!(theta_dz(z, t, 4, 1e-14).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let t = lat(c(0.3, 1.2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let z = c(rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..1.0));
            for order in 1..=3 {
                let fd = finite_diff5(
                    |w| Ok::<_, Error>(theta_jet(w, t, 1e-15)[order - 1]),
                    z,
                    1e-3,
                )
                .unwrap();
                let an = theta_dz(z, t, order, 1e-15).unwrap();
                assert!((fd - an).norm() < 1e-8 * (1.0 + an.norm()), "order {order}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn tau_derivative_matches_fd() {
        let z = c(0.2, 0.1);
        let fd = crate::numerics::finite_diff(
            |s| LatticeParam::new(s).map(|p| theta(z, p, 1e-15)),
            I,
            1e-5,
        )
        .unwrap();
        assert!((fd - theta_dtau(z, lat(I), 1e-15)).norm() < 1e-7);
        let at0 = theta_dtau(c(0.0, 0.0), lat(I), 1e-15);
        let d2 = theta_dz(c(0.0, 0.0), lat(I), 2, 1e-15).unwrap();
        assert!((at0 + I / (4.0 * PI) * d2).norm() < 1e-14);
    }

    #[test]
    fn tolerance_contract() {
        let z = c(0.4, 0.2);
        let a = theta(z, lat(I), 1e-10);
        let b = theta(z, lat(I), 2e-10);
        assert!((a - b).norm() <= 3e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn identities_hold() {
        for tau in [I, c(0.3, 1.2)] {
            let rep = check_theta_identities(lat(tau), 100, 7);
            assert!(rep.max() < 1e-9, "{rep:?}");
        }
    }

    #[test]
    fn prime_form_is_antisymmetric_and_normalised() {
        let t = lat(c(0.1, 0.9));
        let (x, y) = (c(0.3, 0.2), c(-0.4, 0.1));
        assert!((prime_form_g1(x, y, t) + prime_form_g1(y, x, t)).norm() < 1e-11);
        let h = c(1e-4, 0.0);
        let r = prime_form_g1(x + h, x, t) / h;
        assert!((r - 1.0).norm() < 1e-6);
    }

    #[test]
    fn translated_theta_near_zero() {
        let t = lat(c(0.3, 1.2));
        let delta = c(1e-30, 2e-30);
        let v = theta_translated(delta, 1, 1, t);
        let d0 = theta_jet(c(0.0, 0.0), t, 1e-15)[1];
        let want = t.shift_factor(delta, 1, 1) * d0 * delta;
        assert!((v - want).norm() < 1e-12 * want.norm());
    }

    proptest! {
        #[test]
        fn odd(re in -2.0f64..2.0, im in -1.0f64..1.0) {
            let t = lat(c(0.3, 1.2));
            let z = c(re, im);
            let a = theta(z, t, 1e-15);
            prop_assert!((theta(-z, t, 1e-15) + a).norm() < 1e-11 * (1.0 + a.norm()));
        }

        #[test]
        fn lattice_shifts(re in -0.5f64..0.5, im in -0.5f64..0.5, m in -2i64..=2, n in -2i64..=2) {
            let t = lat(c(0.3, 1.2));
            let z = c(re, im);
            let lhs = theta(z + m as f64 + n as f64 * t.tau(), t, 1e-15);
            let rhs = t.shift_factor(z, m, n) * theta(z, t, 1e-15);
            prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.norm()));
        }

        #[test]
        fn heat_equation(re in -0.5f64..0.5, im in -0.5f64..0.5) {
            let z = c(re, im);
            let tau = c(0.3, 1.2);
            let fd = finite_diff5(|s| LatticeParam::new(s).map(|p| theta(z, p, 1e-15)), tau, 1e-3).unwrap();
            prop_assert!((fd - theta_dtau(z, lat(tau), 1e-15)).norm() < 1e-9);
        }
    }
}
