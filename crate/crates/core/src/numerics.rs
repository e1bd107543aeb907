//! Small numerical kernel shared by the potential and compatibility modules:
//! numerical rank, least-squares polynomial fits, central differences and
//! seeded sampling of evaluation points.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances used across a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    /// Absolute quadrature tolerance.
    pub quad_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Singular-value cutoff relative to the largest singular value.
    pub rank_rel_tol: f64,
    /// Pass/fail threshold for identity residuals.
    pub residual_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            fd_step: 1e-5,
            rank_rel_tol: 1e-7,
            residual_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("quad_tol", self.quad_tol),
            ("fd_step", self.fd_step),
            ("rank_rel_tol", self.rank_rel_tol),
            ("residual_tol", self.residual_tol),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if self.fd_step * self.fd_step < self.quad_tol {
            return Err(Error::InvalidInput(format!(
                "fd_step^2 = {:e} is below quad_tol = {:e}; finite differences cannot resolve quadrature noise",
                self.fd_step * self.fd_step,
                self.quad_tol
            )));
        }
        Ok(())
    }

    /// Applies a named override such as `quad_tol=1e-12`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "quad_tol" => self.quad_tol = value,
            "fd_step" => self.fd_step = value,
            "rank_rel_tol" => self.rank_rel_tol = value,
            "residual_tol" => self.residual_tol = value,
            other => {
                return Err(Error::Configuration(format!(
                    "unknown tolerance '{other}' (expected quad_tol, fd_step, rank_rel_tol or residual_tol)"
                )))
            }
        }
        Ok(())
    }
}

/// A set of complex evaluation points kept away from declared singular points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<Complex64>,
    exclusion_radius: f64,
}

impl SampleSet {
    pub fn new(
        points: Vec<Complex64>,
        exclusion_radius: f64,
        singular_points: &[Complex64],
    ) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if let Some(s) = singular_points
                .iter()
                .find(|s| (*p - **s).norm() < exclusion_radius)
            {
                return Err(Error::InvalidInput(format!(
                    "sample {p} lies within {exclusion_radius} of singular point {s}"
                )));
            }
            if points[..i].contains(p) {
                return Err(Error::InvalidInput(format!("sample {p} is repeated")));
            }
        }
        Ok(Self {
            points,
            exclusion_radius,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Annulus sampler: uniform in area on `r_min <= |z - center| <= r_max`,
/// rejecting points closer than `exclusion_radius` to a singular point or
/// refused by `accept`.
#[derive(Debug, Clone, Copy)]
pub struct AnnulusSampler {
    pub center: Complex64,
    pub r_min: f64,
    pub r_max: f64,
    pub exclusion_radius: f64,
}

impl AnnulusSampler {
    pub const MAX_ATTEMPTS: usize = 200_000;

    pub fn around(singular_points: &[Complex64]) -> Self {
        let center = centroid(singular_points);
        Self {
            center,
            r_min: 0.3,
            r_max: 1.5,
            exclusion_radius: 0.1,
        }
    }

    pub fn sample<F>(
        &self,
        count: usize,
        singular_points: &[Complex64],
        rng: &mut ChaCha8Rng,
        accept: F,
    ) -> Result<SampleSet>
    where
        F: Fn(Complex64) -> bool,
    {
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0;
        while points.len() < count {
            attempts += 1;
            if attempts > Self::MAX_ATTEMPTS {
                return Err(Error::DegenerateConfiguration(format!(
                    "could only place {} of {count} admissible samples",
                    points.len()
                )));
            }
            let u: f64 = rng.gen();
            let r = (self.r_min * self.r_min + u * (self.r_max * self.r_max - self.r_min * self.r_min))
                .sqrt();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let z = self.center + Complex64::from_polar(r, phi);
            if singular_points
                .iter()
                .any(|p| (z - p).norm() < self.exclusion_radius)
            {
                continue;
            }
            if points
                .iter()
                .any(|q: &Complex64| (z - q).norm() < 1e-3)
            {
                continue;
            }
            if !accept(z) {
                continue;
            }
            points.push(z);
        }
        SampleSet::new(points, self.exclusion_radius, singular_points)
    }
}

pub fn centroid(points: &[Complex64]) -> Complex64 {
    if points.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    points.iter().sum::<Complex64>() / points.len() as f64
}

fn to_matrix(rows: &[Vec<Complex64>]) -> Result<DMatrix<Complex64>> {
    let m = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput("matrix must be non-empty".into()));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    if rows.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidInput("matrix has a non-finite entry".into()));
    }
    Ok(DMatrix::from_fn(m, k, |i, j| rows[i][j]))
}

/// Singular values in decreasing order.
pub fn singular_values(rows: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let mat = to_matrix(rows)?;
    let mat = if mat.nrows() < mat.ncols() {
        mat.adjoint()
    } else {
        mat
    };
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Number of singular values above `rank_rel_tol * sigma_max`.
pub fn numerical_rank(rows: &[Vec<Complex64>], rank_rel_tol: f64) -> Result<usize> {
    Ok(RankCertificate::from_rows(rows, rank_rel_tol)?.rank)
}

/// Rank together with the singular spectrum it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// log10(sigma_rank / sigma_{rank+1}); infinite when nothing lies below the cut.
    pub gap_decades: f64,
}

impl RankCertificate {
    pub fn from_rows(rows: &[Vec<Complex64>], rank_rel_tol: f64) -> Result<Self> {
        let sv = singular_values(rows)?;
        Ok(Self::from_singular_values(sv, rank_rel_tol))
    }

    pub fn from_singular_values(sv: Vec<f64>, rank_rel_tol: f64) -> Self {
        let smax = sv.first().copied().unwrap_or(0.0);
        let rank = if smax == 0.0 {
            0
        } else {
            sv.iter().filter(|s| **s > rank_rel_tol * smax).count()
        };
        let gap_decades = match (rank, sv.get(rank)) {
            (0, _) => f64::INFINITY,
            (_, None) => f64::INFINITY,
            (r, Some(&below)) => {
                if below <= 0.0 {
                    f64::INFINITY
                } else {
                    (sv[r - 1] / below).log10()
                }
            }
        };
        Self {
            rank,
            singular_values: sv,
            gap_decades,
        }
    }
}

/// Least-squares polynomial fit. Returns monomial coefficients (constant
/// term first) and the maximum absolute misfit over all supplied points.
pub fn fit_polynomial(
    points: &[Complex64],
    values: &[Complex64],
    max_degree: usize,
) -> Result<(Vec<Complex64>, f64)> {
    if points.len() != values.len() {
        return Err(Error::InvalidInput(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    if points.len() < max_degree + 2 {
        return Err(Error::InvalidInput(format!(
            "degree {max_degree} fit needs at least {} points, got {}",
            max_degree + 2,
            points.len()
        )));
    }
    let scale = points.iter().map(|p| p.norm()).fold(1.0, f64::max);
    for (i, p) in points.iter().enumerate() {
        if points[..i].iter().any(|q| (p - q).norm() <= 1e-14 * scale) {
            return Err(Error::InvalidInput(format!("repeated point {p}")));
        }
    }
    let n = points.len();
    let vander = DMatrix::from_fn(n, max_degree + 1, |i, j| points[i].powu(j as u32));
    let rhs = DVector::from_column_slice(values);
    let svd = vander.clone().svd(true, true);
    let coeffs = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidInput(format!("least-squares solve failed: {e}")))?;
    let fitted = &vander * &coeffs;
    let residual = fitted
        .iter()
        .zip(values)
        .map(|(f, v)| (f - v).norm())
        .fold(0.0, f64::max);
    Ok((coeffs.iter().copied().collect(), residual))
}

/// Evaluates a polynomial given by monomial coefficients (constant first).
pub fn eval_polynomial(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn fd_step_size(point: Complex64, step: f64) -> f64 {
    step * point.norm().max(1.0)
}

/// Central difference `(f(p+h) - f(p-h)) / 2h` with `h = step * max(1, |p|)`.
pub fn finite_diff<F, E>(f: F, point: Complex64, step: f64) -> Result<Complex64, E>
where
    F: Fn(Complex64) -> Result<Complex64, E>,
{
    let h = fd_step_size(point, step);
    let hp = f(point + h)?;
    let hm = f(point - h)?;
    Ok((hp - hm) / (2.0 * h))
}

/// Five-point central difference, fourth order in `h`.
pub fn finite_diff5<F, E>(f: F, point: Complex64, step: f64) -> Result<Complex64, E>
where
    F: Fn(Complex64) -> Result<Complex64, E>,
{
    let h = fd_step_size(point, step);
    let f1 = f(point + h)? - f(point - h)?;
    let f2 = f(point + 2.0 * h)? - f(point - 2.0 * h)?;
    Ok((8.0 * f1 - f2) / (12.0 * h))
}

/// Solves the square system `a x = b`; `None` when `a` is numerically singular.
pub fn solve_square(a: &[Vec<Complex64>], b: &[Complex64]) -> Option<Vec<Complex64>> {
    let m = a.len();
    if m == 0 || b.len() != m || a.iter().any(|r| r.len() != m) {
        return None;
    }
    let mat = DMatrix::from_fn(m, m, |i, j| a[i][j]);
    let sv = mat.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return None;
    }
    let lu = mat.lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rank_of_identity_and_zero() {
        let id: Vec<Vec<Complex64>> = (0..3)
            .map(|i| (0..3).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        assert_eq!(numerical_rank(&id, 1e-8).unwrap(), 3);
        let zero = vec![vec![c(0.0, 0.0); 2]; 5];
        assert_eq!(numerical_rank(&zero, 1e-8).unwrap(), 0);
    }

    #[test]
    fn rank_rejects_non_finite() {
        let m = vec![vec![c(f64::NAN, 0.0)], vec![c(1.0, 0.0)]];
        assert!(matches!(numerical_rank(&m, 1e-7), Err(Error::InvalidInput(_))));
    }

    // Independent check: the 2x2 Gram determinant of (v, w) is nonzero while
    // every 3x3 Gram determinant of (v, 2v, w) vanishes.
    fn gram_det(cols: &[Vec<Complex64>]) -> Complex64 {
        let k = cols.len();
        let g = DMatrix::from_fn(k, k, |i, j| {
            cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
        });
        g.determinant()
    }

    #[test]
    fn rank_two_from_dependent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<Complex64> = (0..12).map(|_| c(rng.gen(), rng.gen())).collect();
        let w: Vec<Complex64> = (0..12).map(|_| c(rng.gen(), rng.gen())).collect();
        let v2: Vec<Complex64> = v.iter().map(|x| x * 2.0).collect();
        assert!(gram_det(&[v.clone(), w.clone()]).norm() > 1e-3);
        assert!(gram_det(&[v.clone(), v2.clone(), w.clone()]).norm() < 1e-9);
        let rows: Vec<Vec<Complex64>> = (0..12).map(|i| vec![v[i], v2[i], w[i]]).collect();
        assert_eq!(numerical_rank(&rows, 1e-7).unwrap(), 2);
    }

    #[test]
    fn exact_quadratic_fit() {
        let pts: Vec<Complex64> = (1..=4).map(|k| c(k as f64, 0.0)).collect();
        let vals: Vec<Complex64> = pts.iter().map(|p| p * p).collect();
        let (coef, res) = fit_polynomial(&pts, &vals, 2).unwrap();
        assert!(res < 1e-12);
        assert!((coef[0]).norm() < 1e-12);
        assert!((coef[1]).norm() < 1e-12);
        assert!((coef[2] - 1.0).norm() < 1e-12);
    }

    #[test]
    fn zero_values_fit() {
        let pts: Vec<Complex64> = (0..6).map(|k| c(k as f64 * 0.3, 0.1)).collect();
        let (coef, res) = fit_polynomial(&pts, &[c(0.0, 0.0); 6], 3).unwrap();
        assert_eq!(res, 0.0);
        assert!(coef.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn exponential_is_not_quadratic() {
        // Independent normal-equations solve of the same least-squares problem.
        let pts: Vec<Complex64> = (0..8).map(|k| c(-1.0 + 0.3 * k as f64, 0.2)).collect();
        let vals: Vec<Complex64> = pts.iter().map(|p| p.exp()).collect();
        let a = DMatrix::from_fn(8, 3, |i, j| pts[i].powu(j as u32));
        let ata = a.adjoint() * &a;
        let atb = a.adjoint() * DVector::from_column_slice(&vals);
        let x = ata.lu().solve(&atb).unwrap();
        let oracle_res = (&a * &x - DVector::from_column_slice(&vals))
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let (_, res) = fit_polynomial(&pts, &vals, 2).unwrap();
        assert!(oracle_res > 1e-3);
        assert!((res - oracle_res).abs() < 1e-8);
    }

    #[test]
    fn fit_rejects_repeats_and_short_input() {
        let pts = vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)];
        let vals = vec![c(0.0, 0.0); 4];
        assert!(matches!(fit_polynomial(&pts, &vals, 1), Err(Error::InvalidInput(_))));
        assert!(matches!(
            fit_polynomial(&pts[1..3], &vals[1..3], 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn central_differences() {
        let sq = |z: Complex64| Ok::<_, Error>(z * z);
        assert!((finite_diff(sq, c(3.0, 0.0), 1e-5).unwrap() - 6.0).norm() < 1e-9);
        let k = |_z: Complex64| Ok::<_, Error>(c(2.5, -1.0));
        assert!(finite_diff(k, c(0.4, 0.0), 1e-5).unwrap().norm() < 1e-10);
        let e = |z: Complex64| Ok::<_, Error>((2.0 * z).exp());
        let want = 2.0 * (0.6f64).exp();
        assert!((finite_diff(e, c(0.3, 0.0), 1e-5).unwrap() - want).norm() < 1e-8);
        assert!((finite_diff5(e, c(0.3, 0.0), 1e-3).unwrap() - want).norm() < 1e-10);
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceConfig::default().validate().is_ok());
        let mut t = ToleranceConfig {
            fd_step: 1e-7,
            ..Default::default()
        };
        assert!(t.validate().is_err());
        t.fd_step = -1.0;
        assert!(t.validate().is_err());
        assert!(t.set("bogus", 1.0).is_err());
    }

    #[test]
    fn sampler_respects_exclusion() {
        let sing = [c(0.0, 0.0), c(1.0, 0.0), c(0.3, 0.4)];
        let s = AnnulusSampler::around(&sing);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = s.sample(40, &sing, &mut rng, |_| true).unwrap();
        assert_eq!(set.len(), 40);
        for p in set.points() {
            assert!(sing.iter().all(|q| (p - q).norm() >= 0.1));
        }
    }

    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn random_rows(seed: u64, m: usize, n: usize, rank: usize) -> Vec<Vec<Complex64>> {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut z = || c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let left: Vec<Vec<Complex64>> = (0..m).map(|_| (0..rank).map(|_| z()).collect()).collect();
        let right: Vec<Vec<Complex64>> = (0..rank).map(|_| (0..n).map(|_| z()).collect()).collect();
        (0..m)
            .map(|i| (0..n).map(|j| (0..rank).map(|k| left[i][k] * right[k][j]).sum()).collect())
            .collect()
    }

    proptest! {
        #[test]
        fn rank_ignores_permutation_and_scaling(
            seed in 0u64..1000, rank in 0usize..5, shift in 0usize..7,
            scale_re in -1e3f64..1e3, scale_im in -1e3f64..1e3,
        ) {
            let rows = random_rows(seed, 9, 6, rank);
            let base = numerical_rank(&rows, 1e-7).unwrap();
            prop_assert_eq!(base, rank);
            let mut permuted = rows.clone();
            permuted.rotate_left(shift % 9);
            for r in permuted.iter_mut() {
                r.rotate_right(shift % 6);
            }
            prop_assert_eq!(numerical_rank(&permuted, 1e-7).unwrap(), base);
            let k = c(scale_re, scale_im);
            if k.norm() > 1e-6 {
                let scaled: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect();
                prop_assert_eq!(numerical_rank(&scaled, 1e-7).unwrap(), base);
            }
        }

        #[test]
        fn fit_is_exact_only_for_low_degree(seed in 0u64..1000, degree in 0usize..5, extra in -1.0f64..1.0) {
            use rand::Rng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<Complex64> = (0..=degree).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let pts: Vec<Complex64> = (0..12).map(|k| Complex64::from_polar(0.5 + 0.05 * k as f64, 0.9 * k as f64)).collect();
            let vals: Vec<Complex64> = pts.iter().map(|p| eval_polynomial(&coeffs, *p)).collect();
            let (_, res) = fit_polynomial(&pts, &vals, degree).unwrap();
            prop_assert!(res <= 1e-12);
            // a nonzero term one degree higher is detected
            if extra.abs() > 0.1 {
                let bumped: Vec<Complex64> = pts.iter().zip(&vals).map(|(p, v)| v + extra * p.powu(degree as u32 + 1)).collect();
                let (_, res) = fit_polynomial(&pts, &bumped, degree).unwrap();
                prop_assert!(res > 1e-12);
            }
        }

        #[test]
        fn affine_difference_is_exact(
            a_re in -10.0f64..10.0, a_im in -10.0f64..10.0, b_re in -10.0f64..10.0,
            p_re in -3.0f64..3.0, p_im in -3.0f64..3.0, step in 1e-6f64..1e-1,
        ) {
            let a = c(a_re, a_im);
            let f = |z: Complex64| Ok::<_, ()>(a * z + b_re);
            let d = finite_diff(f, c(p_re, p_im), step).unwrap();
            let d5 = finite_diff5(f, c(p_re, p_im), step).unwrap();
            let h = step * c(p_re, p_im).norm().max(1.0);
            // rounding in f(p±h) divided by 2h bounds the error
            let bound = 4.0 * f64::EPSILON * (a.norm() * 4.0 + b_re.abs() + 1.0) / h;
            prop_assert!((d - a).norm() <= bound.max(1e-15), "{} vs {}", d, a);
            prop_assert!((d5 - a).norm() <= 2.0 * bound.max(1e-15));
        }
    }
}
