//! Abstract geometry data `(q, E, θ)`: the Fay identity, the linear systems
//! satisfied by the coefficient functions as zero-curvature connections,
//! polynomial KP tau-functions and the tau-mode potential.
//!
//! A connection `∂f/∂u_i = A_i f` is only specified on the rows `j ≠ i`
//! (the derivative of `f_i` along `u_i` is left free), so curvature is read on
//! the rows independent of the free entries: `m ∉ {i, j}` and every `z`-row.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::contours::symbolic::{ContourSpec, NamedContour, PointContext};
use crate::contours::{
    integrate_continued, monodromy_factor, BranchFactor, BranchInit, BranchTrack, BranchedWeight, Contour,
    ExponentFn,
};
use crate::error::{Error, Result};
use crate::numerics::{centroid, finite_diff5, AnnulusSampler, RankCertificate, ToleranceConfig};
use crate::theta::{theta_jet, LatticeParam, THETA_TOL};

type C = Complex64;

/// Fay residual every geometry must meet before a compatibility run.
pub const FAY_ENTRANCE_TOL: f64 = 1e-9;
pub const FAY_ENTRANCE_SAMPLES: usize = 50;
/// Default step for the outer `u`-derivatives of the connection matrices.
pub const CURVATURE_FD_STEP: f64 = 4e-4;

/// `q: z ↦ C^g`, an antisymmetric `E` with `E(u, v) = u - v + o((u - v)²)`,
/// and `θ: C^g → C`, with their derivatives.
pub trait GeometryData: Send + Sync {
    fn dim(&self) -> usize;
    fn q(&self, z: C) -> Vec<C>;
    fn dq(&self, z: C) -> Vec<C>;
    fn e(&self, x: C, y: C) -> C;
    /// `∂E(x, y)/∂x`.
    fn e_dx(&self, x: C, y: C) -> C;
    /// `∂E(x, y)/∂y`.
    fn e_dy(&self, x: C, y: C) -> C {
        -self.e_dx(y, x)
    }
    fn theta(&self, w: &[C]) -> C;
    fn theta_grad(&self, w: &[C]) -> Vec<C>;
}

/// Jacobi theta data: `q(z) = z`, `E(x, y) = θ(x - y)/θ'(0)`.
#[derive(Debug, Clone, Copy)]
pub struct ThetaGeometry {
    lattice: LatticeParam,
    theta_p0: C,
}

impl ThetaGeometry {
    pub fn new(lattice: LatticeParam) -> Self {
        let theta_p0 = theta_jet(C::new(0.0, 0.0), lattice, THETA_TOL)[1];
        Self { lattice, theta_p0 }
    }
}

impl GeometryData for ThetaGeometry {
    fn dim(&self) -> usize {
        1
    }
    fn q(&self, z: C) -> Vec<C> {
        vec![z]
    }
    fn dq(&self, _z: C) -> Vec<C> {
        vec![C::new(1.0, 0.0)]
    }
    fn e(&self, x: C, y: C) -> C {
        theta_jet(x - y, self.lattice, THETA_TOL)[0] / self.theta_p0
    }
    fn e_dx(&self, x: C, y: C) -> C {
        theta_jet(x - y, self.lattice, THETA_TOL)[1] / self.theta_p0
    }
    fn theta(&self, w: &[C]) -> C {
        theta_jet(w[0], self.lattice, THETA_TOL)[0]
    }
    fn theta_grad(&self, w: &[C]) -> Vec<C> {
        vec![theta_jet(w[0], self.lattice, THETA_TOL)[1]]
    }
}

/// Rational degeneration `E(x, y) = x - y`, `q(z) = z`, with `θ(w) = w`
/// (`linear = true`) or `θ ≡ 1`.
#[derive(Debug, Clone, Copy)]
pub struct RationalGeometry {
    pub linear: bool,
}

impl GeometryData for RationalGeometry {
    fn dim(&self) -> usize {
        1
    }
    fn q(&self, z: C) -> Vec<C> {
        vec![z]
    }
    fn dq(&self, _z: C) -> Vec<C> {
        vec![C::new(1.0, 0.0)]
    }
    fn e(&self, x: C, y: C) -> C {
        x - y
    }
    fn e_dx(&self, _x: C, _y: C) -> C {
        C::new(1.0, 0.0)
    }
    fn theta(&self, w: &[C]) -> C {
        if self.linear {
            w[0]
        } else {
            C::new(1.0, 0.0)
        }
    }
    fn theta_grad(&self, _w: &[C]) -> Vec<C> {
        vec![C::new(if self.linear { 1.0 } else { 0.0 }, 0.0)]
    }
}

/// `[a] = (a, a²/2, …, a^K/K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiwaShift {
    pub a: C,
    pub times: usize,
}

impl MiwaShift {
    pub fn new(a: C, times: usize) -> Self {
        Self { a, times }
    }

    pub fn components(&self) -> Vec<C> {
        let mut out = Vec::with_capacity(self.times);
        let mut p = C::new(1.0, 0.0);
        for k in 1..=self.times {
            p *= self.a;
            out.push(p / k as f64);
        }
        out
    }
}

/// Complete homogeneous components `h_0..=h_max` of `exp(Σ_k t_k x^k)`.
fn complete_homogeneous(t: &[C], max: usize) -> Vec<C> {
    let mut h = vec![C::new(0.0, 0.0); max + 1];
    h[0] = C::new(1.0, 0.0);
    for m in 1..=max {
        let mut acc = C::new(0.0, 0.0);
        for k in 1..=m.min(t.len()) {
            acc += k as f64 * t[k - 1] * h[m - k];
        }
        h[m] = acc / m as f64;
    }
    h
}

fn check_partition(partition: &[usize]) -> Result<()> {
    if partition.windows(2).any(|w| w[0] < w[1]) || partition.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "partition {partition:?} must be weakly decreasing with positive parts"
        )));
    }
    Ok(())
}

fn jacobi_trudi(partition: &[usize], h: &[C]) -> DMatrix<C> {
    let l = partition.len();
    DMatrix::from_fn(l, l, |i, j| {
        let k = partition[i] as i64 - i as i64 + j as i64;
        if k < 0 {
            C::new(0.0, 0.0)
        } else {
            h.get(k as usize).copied().unwrap_or(C::new(0.0, 0.0))
        }
    })
}

/// Schur polynomial `s_λ(t)` via the Jacobi–Trudi determinant `det h_{λ_i - i + j}`.
pub fn schur_tau(partition: &[usize], t: &[C]) -> Result<C> {
    check_partition(partition)?;
    let weight: usize = partition.iter().sum();
    if t.len() < weight {
        return Err(Error::InvalidInput(format!(
            "{} times cannot represent a partition of weight {weight}",
            t.len()
        )));
    }
    if partition.is_empty() {
        return Ok(C::new(1.0, 0.0));
    }
    let h = complete_homogeneous(t, weight + partition.len());
    Ok(jacobi_trudi(partition, &h).determinant())
}

/// `∂s_λ/∂t_k` for `k = 1..=t.len()`, from `∂h_m/∂t_k = h_{m-k}` and row-wise
/// differentiation of the determinant.
pub fn schur_tau_grad(partition: &[usize], t: &[C]) -> Result<Vec<C>> {
    schur_tau(partition, t)?;
    let l = partition.len();
    let mut out = vec![C::new(0.0, 0.0); t.len()];
    if l == 0 {
        return Ok(out);
    }
    let weight: usize = partition.iter().sum();
    let h = complete_homogeneous(t, weight + l);
    let base = jacobi_trudi(partition, &h);
    for (k, slot) in out.iter_mut().enumerate() {
        let shift = k + 1;
        let mut acc = C::new(0.0, 0.0);
        for r in 0..l {
            let mut m = base.clone();
            for j in 0..l {
                let idx = partition[r] as i64 - r as i64 + j as i64 - shift as i64;
                m[(r, j)] = if idx < 0 { C::new(0.0, 0.0) } else { h[idx as usize] };
            }
            acc += m.determinant();
        }
        *slot = acc;
    }
    Ok(out)
}

/// Polynomial KP tau-function given by a partition, in `times` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFunction {
    pub partition: Vec<usize>,
    pub times: usize,
}

impl TauFunction {
    pub fn new(partition: Vec<usize>, times: usize) -> Result<Self> {
        check_partition(&partition)?;
        let weight: usize = partition.iter().sum();
        if times < weight || times == 0 {
            return Err(Error::InvalidInput(format!(
                "{times} times cannot represent a partition of weight {weight}"
            )));
        }
        Ok(Self { partition, times })
    }

    pub fn eval(&self, t: &[C]) -> C {
        schur_tau(&self.partition, t).expect("validated partition")
    }

    pub fn grad(&self, t: &[C]) -> Vec<C> {
        schur_tau_grad(&self.partition, t).expect("validated partition")
    }

    pub fn miwa(&self, a: C) -> Vec<C> {
        MiwaShift::new(a, self.times).components()
    }

    /// All partitions of weight at most `max_weight`, largest parts first.
    pub fn partitions_up_to(max_weight: usize) -> Vec<Vec<usize>> {
        fn rec(rest: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest == 0 {
                out.push(cur.clone());
                return;
            }
            for p in (1..=rest.min(cap)).rev() {
                cur.push(p);
                rec(rest - p, p, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        for w in 0..=max_weight {
            rec(w, w, &mut Vec::new(), &mut out);
        }
        out
    }
}

/// Tau mode: `q(z) = [z]`, `E(x, y) = x - y`, `θ = τ`.
#[derive(Debug, Clone)]
pub struct TauGeometry {
    pub tau: TauFunction,
}

impl GeometryData for TauGeometry {
    fn dim(&self) -> usize {
        self.tau.times
    }
    fn q(&self, z: C) -> Vec<C> {
        self.tau.miwa(z)
    }
    fn dq(&self, z: C) -> Vec<C> {
        let mut out = Vec::with_capacity(self.tau.times);
        let mut p = C::new(1.0, 0.0);
        for _ in 0..self.tau.times {
            out.push(p);
            p *= z;
        }
        out
    }
    fn e(&self, x: C, y: C) -> C {
        x - y
    }
    fn e_dx(&self, _x: C, _y: C) -> C {
        C::new(1.0, 0.0)
    }
    fn theta(&self, w: &[C]) -> C {
        self.tau.eval(w)
    }
    fn theta_grad(&self, w: &[C]) -> Vec<C> {
        self.tau.grad(w)
    }
}

/// Serializable choice of geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Theta { tau: LatticeParam },
    /// `θ(w) = w`.
    Rational,
    /// `θ ≡ 1`.
    RationalConstant,
    Tau { partition: Vec<usize>, times: usize },
}

impl Geometry {
    pub fn build(&self) -> Result<Arc<dyn GeometryData>> {
        Ok(match self {
            Geometry::Theta { tau } => Arc::new(ThetaGeometry::new(*tau)),
            Geometry::Rational => Arc::new(RationalGeometry { linear: true }),
            Geometry::RationalConstant => Arc::new(RationalGeometry { linear: false }),
            Geometry::Tau { partition, times } => Arc::new(TauGeometry {
                tau: TauFunction::new(partition.clone(), *times)?,
            }),
        })
    }

    pub fn label(&self) -> String {
        match self {
            Geometry::Theta { .. } => "theta".into(),
            Geometry::Rational => "rational".into(),
            Geometry::RationalConstant => "rational_constant".into(),
            Geometry::Tau { partition, .. } => format!("tau{partition:?}"),
        }
    }
}

fn add(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The three Fay terms `E(u,v)E(w,t)θ(z+q(u)+q(v))θ(z+q(w)+q(t))` and cyclic.
pub fn fay_terms(geom: &dyn GeometryData, zv: &[C], pts: [C; 4]) -> [C; 3] {
    let [u, v, w, t] = pts;
    let q: Vec<Vec<C>> = pts.iter().map(|p| geom.q(*p)).collect();
    let th = |a: usize, b: usize| geom.theta(&add(zv, &add(&q[a], &q[b])));
    [
        geom.e(u, v) * geom.e(w, t) * th(0, 1) * th(2, 3),
        geom.e(v, w) * geom.e(u, t) * th(1, 2) * th(0, 3),
        geom.e(w, u) * geom.e(v, t) * th(2, 0) * th(1, 3),
    ]
}

/// `|Σ terms| / max |term|`, or 0 when every term vanishes.
pub fn fay_residual_at(geom: &dyn GeometryData, zv: &[C], pts: [C; 4]) -> f64 {
    let terms = fay_terms(geom, zv, pts);
    let max = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        0.0
    } else {
        terms.iter().sum::<C>().norm() / max
    }
}

fn small_c(rng: &mut ChaCha8Rng, r: f64) -> C {
    C::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// Worst Fay residual over `count` random `(z, u, v, w, t)`; samples where a
/// `θ` argument nearly vanishes are redrawn.
pub fn fay_residual(geom: &dyn GeometryData, count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < count {
        attempts += 1;
        if attempts > 20 * count + 20 {
            return Err(Error::DegenerateConfiguration(
                "Fay check kept hitting zeros of θ".into(),
            ));
        }
        let zv: Vec<C> = (0..geom.dim()).map(|_| small_c(&mut rng, 0.5)).collect();
        let pts = [0; 4].map(|_| small_c(&mut rng, 0.5));
        let terms = fay_terms(geom, &zv, pts);
        if terms.iter().any(|t| t.norm() < 1e-12) {
            continue;
        }
        worst = worst.max(fay_residual_at(geom, &zv, pts));
        done += 1;
    }
    Ok(worst)
}

/// Normalized KP Fay residual of `τ` at `t` with Miwa shifts `a, b, c, d`.
pub fn tau_fay_residual(tau: &TauFunction, t: &[C], abcd: [C; 4]) -> f64 {
    let geom = TauGeometry { tau: tau.clone() };
    fay_residual_at(&geom, t, abcd)
}

/// Worst KP Fay residual over random times and shifts with `|a|,…,|d| <= 0.5`.
pub fn tau_fay_check(tau: &TauFunction, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t: Vec<C> = (0..tau.times).map(|_| small_c(&mut rng, 1.0)).collect();
            let abcd = [0; 4].map(|_| C::from_polar(rng.gen_range(0.0..0.5), rng.gen_range(0.0..std::f64::consts::TAU)));
            tau_fay_residual(tau, &t, abcd)
        })
        .fold(0.0, f64::max)
}

/// Punctures, exponents (summing to one), constant vectors and geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractConfig {
    pub u: Vec<C>,
    pub s: Vec<f64>,
    pub a: Vec<C>,
    pub b: Vec<C>,
    pub geometry: Geometry,
}

impl AbstractConfig {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    fn eta(&self, geom: &dyn GeometryData, u: &[C]) -> Vec<C> {
        let mut eta = self.a.clone();
        for (ui, si) in u.iter().zip(&self.s) {
            for (e, q) in eta.iter_mut().zip(geom.q(*ui)) {
                *e += *si * q;
            }
        }
        eta
    }

    /// Shape checks, `Σ s = 1`, distinct punctures, `θ(η) ≠ 0` and the Fay
    /// entrance check of the geometry.
    pub fn validate(&self) -> Result<Arc<dyn GeometryData>> {
        let geom = self.geometry.build()?;
        let n = self.n();
        if n < 2 {
            return Err(Error::Configuration("tau: at least two punctures are required".into()));
        }
        if self.s.len() != n {
            return Err(Error::Configuration(format!("tau: s must have n = {n} entries")));
        }
        let sum: f64 = self.s.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Configuration(format!(
                "tau: the exponents s must sum to one, got Σs = {sum}"
            )));
        }
        if self.a.len() != geom.dim() || self.b.len() != geom.dim() {
            return Err(Error::Configuration(format!(
                "tau: a and b must have {} components for geometry {}",
                geom.dim(),
                self.geometry.label()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.u[i] - self.u[j]).norm() < 1e-9 {
                    return Err(Error::Configuration("tau: punctures must be pairwise distinct".into()));
                }
            }
        }
        let th = geom.theta(&self.eta(geom.as_ref(), &self.u));
        if th.norm() < 1e-10 {
            return Err(Error::Configuration(format!("tau: θ(η) = {th} vanishes")));
        }
        let fay = fay_residual(geom.as_ref(), FAY_ENTRANCE_SAMPLES, 0)?;
        if fay > FAY_ENTRANCE_TOL {
            return Err(Error::Configuration(format!(
                "geometry {} fails the Fay entrance check: residual {fay:e}",
                self.geometry.label()
            )));
        }
        Ok(geom)
    }
}

fn nonzero(v: C, what: &str) -> Result<C> {
    if v.norm() < 1e-14 || !v.is_finite() {
        return Err(Error::Configuration(format!("{what} vanishes")));
    }
    Ok(v)
}

fn matrices_at(cfg: &AbstractConfig, geom: &dyn GeometryData, u: &[C], zs: &[C]) -> Result<Vec<DMatrix<C>>> {
    let n = u.len();
    let s = &cfg.s;
    let eta = cfg.eta(geom, u);
    let th_eta = nonzero(geom.theta(&eta), "θ(η)")?;
    let qs: Vec<Vec<C>> = u.iter().map(|x| geom.q(*x)).collect();
    let size = n + zs.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut m = DMatrix::zeros(size, size);
        for j in 0..n {
            if j == i {
                continue;
            }
            let e = nonzero(geom.e(u[i], u[j]), "E(u_i, u_j)")?;
            m[(j, j)] = -s[i] * geom.e_dx(u[i], u[j]) / e;
            m[(j, i)] = s[j] * geom.theta(&add(&sub(&qs[j], &qs[i]), &eta)) / (th_eta * e);
        }
        for (k, &z) in zs.iter().enumerate() {
            let r = n + k;
            let ezi = nonzero(geom.e(z, u[i]), "E(z, u_i)")?;
            m[(r, r)] = -(s[i] - 1.0) * geom.e_dy(z, u[i]) / ezi;
            let arg = add(&sub(&geom.q(z), &qs[i]), &eta);
            let th_arg = nonzero(geom.theta(&arg), "θ(q(z) - q(u_i) + η)")?;
            let ez_others: C = (0..n).filter(|&k| k != i).map(|k| geom.e(z, u[k])).product();
            let dq = geom.dq(z);
            let mut bracket = dot(&cfg.b, &dq) - geom.e_dx(z, u[i]) / ezi + dot(&dq, &geom.theta_grad(&arg)) / th_arg;
            for (mm, um) in u.iter().enumerate() {
                bracket += s[mm] * geom.e_dx(z, *um) / geom.e(z, *um);
            }
            // f(u_i) = f_i Π_{k≠i} E(u_i, u_k) cancels the normalisation.
            m[(r, i)] = -th_arg / th_eta * ez_others * bracket;
        }
        out.push(m);
    }
    Ok(out)
}

/// Connection matrices `A_i(u)` of the coefficient system, extended by one row
/// and column per `z` sample with the `f(z)` equation.
pub fn comp_system_matrices(cfg: &AbstractConfig, z_samples: &[C]) -> Result<Vec<DMatrix<C>>> {
    let geom = cfg.validate()?;
    matrices_at(cfg, geom.as_ref(), &cfg.u, z_samples)
}

/// `max |∂_j A_i - ∂_i A_j + A_i A_j - A_j A_i|` over the rows `m ∉ {i, j}`,
/// with the outer `u`-derivatives by extrapolated five-point differences.
pub fn zero_curvature_residual(cfg: &AbstractConfig, pair: (usize, usize), z_samples: &[C], fd_step: f64) -> Result<f64> {
    let geom = cfg.validate()?;
    zero_curvature_with(cfg, geom.as_ref(), pair, z_samples, fd_step)
}

fn zero_curvature_with(
    cfg: &AbstractConfig,
    geom: &dyn GeometryData,
    (i, j): (usize, usize),
    zs: &[C],
    step: f64,
) -> Result<f64> {
    let n = cfg.n();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidInput(format!("invalid pair ({i}, {j}) for n = {n}")));
    }
    let size = n + zs.len();
    // Five-point stencil at h and h/2 with one Richardson step (error O(h⁶)).
    let deriv = |which: usize, along: usize| -> Result<DMatrix<C>> {
        let at = |x: C| -> Result<DMatrix<C>> {
            let mut u = cfg.u.clone();
            u[along] = x;
            Ok(matrices_at(cfg, geom, &u, zs)?.swap_remove(which))
        };
        let stencil = |h: f64| -> Result<DMatrix<C>> {
            let mut acc = DMatrix::zeros(size, size);
            for (w, k) in [1.0, -8.0, 8.0, -1.0].iter().zip([-2.0, -1.0, 1.0, 2.0]) {
                acc += at(cfg.u[along] + k * h)? * C::new(*w / (12.0 * h), 0.0);
            }
            Ok(acc)
        };
        let coarse = stencil(step)?;
        let fine = stencil(0.5 * step)?;
        Ok((fine * C::new(16.0, 0.0) - coarse) / C::new(15.0, 0.0))
    };
    let a = matrices_at(cfg, geom, &cfg.u, zs)?;
    let curv = deriv(i, j)? - deriv(j, i)? + &a[i] * &a[j] - &a[j] * &a[i];
    let mut worst: f64 = 0.0;
    for r in (0..size).filter(|r| *r != i && *r != j) {
        for c in 0..size {
            worst = worst.max(curv[(r, c)].norm());
        }
    }
    Ok(worst)
}

/// Worst curvature over all pairs.
pub fn zero_curvature_all(cfg: &AbstractConfig, z_samples: &[C], fd_step: f64) -> Result<f64> {
    let geom = cfg.validate()?;
    let n = cfg.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(zero_curvature_with(cfg, geom.as_ref(), (i, j), z_samples, fd_step)?);
        }
    }
    Ok(worst)
}

/// Bound on the `z`-row entries of an admissible curvature sample point.
pub const Z_ROW_ENTRY_BOUND: f64 = 50.0;

/// `count` evaluation points for the `z`-rows, drawn around the punctures and
/// kept away from zeros of `E(z, u_i)` and `θ(q(z) - q(u_i) + η)`, where the
/// rows blow up and finite differences lose all accuracy.
pub fn curvature_z_rows(cfg: &AbstractConfig, count: usize, seed: u64) -> Result<Vec<C>> {
    let geom = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = AnnulusSampler::around(&cfg.u);
    let ok = |z: C| {
        matrices_at(cfg, geom.as_ref(), &cfg.u, &[z]).is_ok_and(|ms| {
            let r = cfg.n();
            ms.iter().all(|m| m.row(r).iter().all(|v| v.norm() <= Z_ROW_ENTRY_BOUND))
        })
    };
    Ok(sampler.sample(count, &cfg.u, &mut rng, ok)?.points().to_vec())
}

/// Tau-mode potential data: punctures, exponents, constant vectors of length
/// `times`, the partition of a Schur tau-function and named contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    pub u: Vec<C>,
    pub s: Vec<f64>,
    pub a: Vec<C>,
    pub b: Vec<C>,
    pub partition: Vec<usize>,
    pub times: usize,
    #[serde(default)]
    pub contours: Vec<NamedContour>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

impl TauConfig {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn tau_function(&self) -> Result<TauFunction> {
        TauFunction::new(self.partition.clone(), self.times)
    }

    /// The compatibility configuration in tau mode.
    pub fn to_abstract(&self) -> AbstractConfig {
        AbstractConfig {
            u: self.u.clone(),
            s: self.s.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            geometry: Geometry::Tau {
                partition: self.partition.clone(),
                times: self.times,
            },
        }
    }

    pub fn contour(&self, name: &str) -> Result<&ContourSpec> {
        self.contours
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.spec)
            .ok_or_else(|| Error::Configuration(format!("no contour named {name:?}")))
    }

    pub fn contour_names(&self) -> Vec<String> {
        self.contours.iter().map(|c| c.name.clone()).collect()
    }

    pub fn with_u(&self, i: usize, value: C) -> Self {
        let mut out = self.clone();
        out.u[i] = value;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.to_abstract().validate()?;
        self.tolerances.validate().map_err(|e| Error::Configuration(e.to_string()))?;
        TauModel::new(self)?;
        Ok(())
    }
}

struct TauModel<'a> {
    cfg: &'a TauConfig,
    tau: TauFunction,
    factors: Vec<BranchFactor>,
    num: BranchedWeight,
    den: BranchedWeight,
    eta: Vec<C>,
    tau_eta: C,
    z_ref: C,
    fixed: BTreeMap<String, (Contour, BranchTrack)>,
}

impl<'a> TauModel<'a> {
    fn new(cfg: &'a TauConfig) -> Result<Self> {
        let tau = cfg.tau_function()?;
        let n = cfg.n();
        if cfg.s.len() != n || cfg.a.len() != tau.times || cfg.b.len() != tau.times {
            return Err(Error::Configuration(format!(
                "tau: s needs {n} entries and a, b need {} components",
                tau.times
            )));
        }
        let factors: Vec<BranchFactor> = cfg.u.iter().map(|&c| BranchFactor::Linear { center: c }).collect();
        let b = cfg.b.clone();
        let entire: Option<ExponentFn> = b.iter().any(|x| x.norm() != 0.0).then(|| {
            let f: ExponentFn = Arc::new(move |x: C| dot(&b, &MiwaShift::new(x, b.len()).components()));
            f
        });
        let num = BranchedWeight::new(factors.clone(), cfg.s.clone(), entire)?;
        let den = num.reciprocal();
        let mut eta = cfg.a.clone();
        for (u, s) in cfg.u.iter().zip(&cfg.s) {
            for (e, q) in eta.iter_mut().zip(tau.miwa(*u)) {
                *e += *s * q;
            }
        }
        let tau_eta = tau.eval(&eta);
        if tau_eta.norm() < 1e-10 {
            return Err(Error::Configuration(format!("tau: τ(η) = {tau_eta} vanishes")));
        }
        let mut model = Self {
            cfg,
            tau,
            z_ref: centroid(&cfg.u) + 2.0,
            factors,
            num,
            den,
            eta,
            tau_eta,
            fixed: BTreeMap::new(),
        };
        for nc in &cfg.contours {
            if nc.spec.depends_on_z() {
                continue;
            }
            let contour = model.resolve(&nc.spec, None)?;
            model.check_contour(&nc.name, &contour)?;
            let track = BranchTrack::new(&model.factors, &contour, BranchInit::Principal)?;
            model.fixed.insert(nc.name.clone(), (contour, track));
        }
        Ok(model)
    }

    fn resolve(&self, spec: &ContourSpec, z: Option<C>) -> Result<Contour> {
        let ctx = PointContext {
            u: &self.cfg.u,
            z,
            tau: None,
        };
        spec.resolve(&ctx, &self.factors)
    }

    fn check_contour(&self, name: &str, contour: &Contour) -> Result<()> {
        if contour.is_closed() {
            let mu = monodromy_factor(&self.den, contour)?;
            if (mu - 1.0).norm() > 1e-9 {
                return Err(Error::Configuration(format!(
                    "contour {name:?} is closed but the weight changes by {mu} around it"
                )));
            }
            return Ok(());
        }
        for (k, p) in [contour.start(), contour.end()].into_iter().enumerate() {
            if !contour.singular_ends()[k] {
                return Err(Error::Configuration(format!(
                    "contour {name:?} ends at {p}, which is not a puncture"
                )));
            }
            let j = self.cfg.u.iter().position(|q| (q - p).norm() < 1e-9).expect("singular end");
            if self.cfg.s[j] >= 1.0 {
                return Err(Error::Configuration(format!(
                    "contour {name:?} ends at a puncture with exponent s = {} >= 1",
                    self.cfg.s[j]
                )));
            }
        }
        Ok(())
    }

    fn numerator(&self, z: C) -> Result<(C, Vec<C>)> {
        if self.cfg.u.iter().any(|p| (z - p).norm() < 1e-12) {
            return Err(Error::Geometry(format!("{z} is a puncture")));
        }
        let logs: Vec<C> = if (z - self.z_ref).norm() < 1e-12 {
            self.cfg.u.iter().map(|p| (z - p).ln()).collect()
        } else {
            let path = Contour::segment(self.z_ref, z)?;
            BranchTrack::new(&self.factors, &path, BranchInit::Principal)?.end_logs()
        };
        Ok((self.num.from_logs(z, &logs), logs))
    }

    fn potential(&self, z: C, name: &str) -> Result<(C, f64)> {
        let (wz, logs) = self.numerator(z)?;
        let (contour, track) = match self.fixed.get(name) {
            Some((c, t)) => (c.clone(), t.clone()),
            None => {
                let contour = self.resolve(self.cfg.contour(name)?, Some(z))?;
                let track = BranchTrack::new(&self.factors, &contour, BranchInit::Continued { point: z, logs })?;
                (contour, track)
            }
        };
        if contour.distance_to(z) < 1e-6 {
            return Err(Error::Geometry(format!("z = {z} lies within 1e-6 of contour {name:?}")));
        }
        let qz = self.tau.miwa(z);
        let base = add(&self.eta, &qz);
        let (v, e) = integrate_continued(
            &track,
            &self.den,
            |node| self.tau.eval(&sub(&base, &self.tau.miwa(node.t))) / (z - node.t),
            &[],
            &[z],
            self.cfg.tolerances.quad_tol,
        )?;
        let pre = wz / self.tau_eta;
        Ok((pre * v, e * pre.norm()))
    }

    fn admissible(&self, z: C) -> bool {
        if self.cfg.u.iter().any(|p| (z - p).norm() < 0.1) || self.fixed.values().any(|(c, _)| c.distance_to(z) < 0.1) {
            return false;
        }
        let len = (z - self.z_ref).norm();
        let steps = (len / 0.01).ceil().max(1.0) as usize;
        (0..=steps).all(|k| {
            let t = self.z_ref + (z - self.z_ref) * (k as f64 / steps as f64);
            self.cfg.u.iter().all(|p| (t - p).norm() >= 0.02) && self.fixed.values().all(|(c, _)| c.distance_to(t) >= 0.02)
        })
    }
}

/// `∫_γ τ(η + [z] - [t]) / ((z - t) τ(η)) · W(z)/W(t) dt` with
/// `W(x) = Π (x - u_i)^{s_i} e^{b·[x]}`.
pub fn potential_tau(z: C, contour: &str, cfg: &TauConfig) -> Result<(C, f64)> {
    TauModel::new(cfg)?.potential(z, contour)
}

pub fn sample_points_tau(cfg: &TauConfig, count: usize, seed: u64) -> Result<Vec<C>> {
    let model = TauModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(AnnulusSampler::around(&cfg.u)
        .sample(count, &cfg.u, &mut rng, |z| model.admissible(z))?
        .points()
        .to_vec())
}

/// Numerical rank of finite-difference cross-differences
/// `∂_z P_a ∂_{u_l} P_b - ∂_z P_b ∂_{u_l} P_a` over all contour pairs.
/// Exploratory: no closed form is known for these potentials.
pub fn tau_cross_rank_fd(cfg: &TauConfig, contours: &[String], seed: u64, step: f64) -> Result<RankCertificate> {
    let model = TauModel::new(cfg)?;
    let n = cfg.n();
    let pairs: Vec<(usize, usize)> = (0..contours.len())
        .flat_map(|a| (a + 1..contours.len()).map(move |b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("at least two contours are needed".into()));
    }
    let count = pairs.len() * n + 4;
    let zs = sample_points_tau(cfg, count, seed)?;
    let mut rows = Vec::with_capacity(count);
    for z in zs {
        let mut grads = Vec::with_capacity(contours.len());
        for name in contours {
            let dz = finite_diff5(|w| model.potential(w, name).map(|v| v.0), z, step)?;
            let mut du = Vec::with_capacity(n);
            for i in 0..n {
                let moved = |w: C| -> Result<C> {
                    let c = cfg.with_u(i, w);
                    TauModel::new(&c)?.potential(z, name).map(|v| v.0)
                };
                du.push(finite_diff5(moved, cfg.u[i], step)?);
            }
            grads.push((dz, du));
        }
        let mut row = Vec::new();
        for &(a, b) in &pairs {
            for l in 0..n {
                row.push(grads[a].0 * grads[b].1[l] - grads[b].0 * grads[a].1[l]);
            }
        }
        rows.push(row);
    }
    RankCertificate::from_rows(&rows, cfg.tolerances.rank_rel_tol)
}
