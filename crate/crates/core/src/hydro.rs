//! Quasi-linear systems `a·∂u/∂t_i + b·∂u/∂t_j + c·∂u/∂t_k = 0` read off
//! from the cross-difference functions of three potentials, and the
//! compatibility residual used to test them.
//!
//! For a triple `(i, j, k)` the three cross-difference families are indexed
//! `[(j,k), (k,i), (i,j)]` and expand into the matrices `a`, `b`, `c`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eval_polynomial, fit_polynomial, solve_square, RankCertificate};

/// Cross-difference values of the three families at one point, each a vector
/// over the fields.
pub type Families = [Vec<Complex64>; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroSystem {
    /// Contour names `(i, j, k)`.
    pub triple: [String; 3],
    pub fields: Vec<String>,
    /// Descriptors of the basis functions `S_r`.
    pub basis: Vec<String>,
    pub a: Vec<Vec<Complex64>>,
    pub b: Vec<Vec<Complex64>>,
    pub c: Vec<Vec<Complex64>>,
    /// Relative misfit on the fitting samples.
    pub fit_residual: f64,
    /// Relative misfit on samples not used for the fit.
    pub held_out_residual: f64,
    pub notes: Vec<String>,
}

impl HydroSystem {
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn matrix(&self, which: usize) -> &Vec<Vec<Complex64>> {
        match which {
            0 => &self.a,
            1 => &self.b,
            _ => &self.c,
        }
    }

    /// Copy with entry `(row, col)` of `a` multiplied by `factor`.
    pub fn with_scaled_a(&self, row: usize, col: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.a[row][col] *= factor;
        out
    }

    fn annotate_zero_blocks(&mut self) {
        for (which, label) in ["a", "b", "c"].iter().enumerate() {
            if self.matrix(which).iter().flatten().all(|v| *v == Complex64::new(0.0, 0.0)) {
                let pair = match which {
                    0 => (&self.triple[1], &self.triple[2]),
                    1 => (&self.triple[2], &self.triple[0]),
                    _ => (&self.triple[0], &self.triple[1]),
                };
                self.notes.push(format!(
                    "matrix {label} vanishes: the cross-differences of {} and {} are zero",
                    pair.0, pair.1
                ));
            }
        }
    }
}

fn family_scale(values: &[Families]) -> f64 {
    values
        .iter()
        .flat_map(|f| f.iter().flatten())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Entries below this fraction of the largest cross-difference value are
/// treated as an identically vanishing family.
const ZERO_FAMILY: f64 = 1e-11;

fn zero_small(m: &mut [Vec<Complex64>], family_max: f64, scale: f64) {
    if family_max <= ZERO_FAMILY * scale {
        for v in m.iter_mut().flatten() {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}

/// Expansion against the basis `z^{r-1}`, `r = 1..=m`, by polynomial fits of
/// every family member.
#[allow(clippy::too_many_arguments)]
pub fn extract_polynomial(
    triple: [String; 3],
    fields: Vec<String>,
    basis_label: &str,
    m: usize,
    fit_points: &[Complex64],
    fit_values: &[Families],
    held_points: &[Complex64],
    held_values: &[Families],
) -> Result<HydroSystem> {
    let nf = fields.len();
    let scale = family_scale(fit_values).max(family_scale(held_values));
    let mut mats = vec![vec![vec![Complex64::new(0.0, 0.0); nf]; m]; 3];
    let mut fit_res: f64 = 0.0;
    let mut held_res: f64 = 0.0;
    for fam in 0..3 {
        let mut fam_max: f64 = 0.0;
        for l in 0..nf {
            let ys: Vec<Complex64> = fit_values.iter().map(|v| v[fam][l]).collect();
            fam_max = ys.iter().map(|y| y.norm()).fold(fam_max, f64::max);
            let (coef, res) = fit_polynomial(fit_points, &ys, m - 1)?;
            fit_res = fit_res.max(res);
            for (z, v) in held_points.iter().zip(held_values) {
                held_res = held_res.max((eval_polynomial(&coef, *z) - v[fam][l]).norm());
            }
            for (r, c) in coef.iter().enumerate() {
                mats[fam][r][l] = *c;
            }
        }
        zero_small(&mut mats[fam], fam_max, scale);
    }
    let rel = |x: f64| if scale > 0.0 { x / scale } else { 0.0 };
    let mut out = HydroSystem {
        triple,
        fields,
        basis: (0..m).map(|r| format!("z^{r} * {basis_label}")).collect(),
        c: mats.pop().unwrap(),
        b: mats.pop().unwrap(),
        a: mats.pop().unwrap(),
        fit_residual: rel(fit_res),
        held_out_residual: rel(held_res),
        notes: Vec::new(),
    };
    out.annotate_zero_blocks();
    Ok(out)
}

fn family_label(triple: &[String; 3], fam: usize) -> (String, String) {
    match fam {
        0 => (triple[1].clone(), triple[2].clone()),
        1 => (triple[2].clone(), triple[0].clone()),
        _ => (triple[0].clone(), triple[1].clone()),
    }
}

/// Expansion against basis functions picked from the sampled families
/// themselves by greedy column pivoting; the number of rows is the numerical
/// rank of the sample matrix.
pub fn extract_pivoted(
    triple: [String; 3],
    fields: Vec<String>,
    rank_rel_tol: f64,
    fit_values: &[Families],
    held_values: &[Families],
) -> Result<(HydroSystem, RankCertificate)> {
    let nf = fields.len();
    let ncol = 3 * nf;
    let rows = fit_values.len();
    if rows < ncol + 1 {
        return Err(Error::InvalidInput(format!(
            "{rows} samples cannot certify {ncol} functions"
        )));
    }
    let flat = |v: &Families| -> Vec<Complex64> { v.iter().flatten().copied().collect() };
    let sample: Vec<Vec<Complex64>> = fit_values.iter().map(flat).collect();
    let held: Vec<Vec<Complex64>> = held_values.iter().map(flat).collect();
    let cert = RankCertificate::from_rows(&sample, rank_rel_tol)?;
    let m = cert.rank;
    let scale = family_scale(fit_values).max(family_scale(held_values));
    if m == 0 {
        return Err(Error::ExtractionFailure("all cross-difference functions vanish".into()));
    }

    // Greedy pivoting: repeatedly take the column with the largest component
    // orthogonal to those already chosen.
    let mat = DMatrix::from_fn(rows, ncol, |i, j| sample[i][j]);
    let mut resid = mat.clone();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let (best, _) = (0..ncol)
            .filter(|j| !chosen.contains(j))
            .map(|j| (j, resid.column(j).norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        chosen.push(best);
        let q = resid.column(best).normalize();
        for j in 0..ncol {
            let proj = q.dotc(&resid.column(j));
            let col = resid.column(j) - &q * proj;
            resid.set_column(j, &col);
        }
    }

    let basis_mat = DMatrix::from_fn(rows, m, |i, r| mat[(i, chosen[r])]);
    let svd = basis_mat.clone().svd(true, true);
    let mut mats = vec![vec![vec![Complex64::new(0.0, 0.0); nf]; m]; 3];
    let mut fit_res: f64 = 0.0;
    let mut held_res: f64 = 0.0;
    for col in 0..ncol {
        let rhs = DVector::from_fn(rows, |i, _| mat[(i, col)]);
        let coef = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::ExtractionFailure(format!("least-squares solve failed: {e}")))?;
        let fitted = &basis_mat * &coef;
        fit_res = fit_res.max((fitted - rhs).iter().map(|v| v.norm()).fold(0.0, f64::max));
        for h in &held {
            let pred: Complex64 = (0..m).map(|r| coef[r] * h[chosen[r]]).sum();
            held_res = held_res.max((pred - h[col]).norm());
        }
        for r in 0..m {
            mats[col / nf][r][col % nf] = coef[r];
        }
    }
    for (fam, mat) in mats.iter_mut().enumerate() {
        let fam_max = sample
            .iter()
            .flat_map(|row| row[fam * nf..(fam + 1) * nf].iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        zero_small(mat, fam_max, scale);
    }
    let basis = chosen
        .iter()
        .map(|&col| {
            let (p, q) = family_label(&triple, col / nf);
            format!("cross({p}, {q}; {})", fields[col % nf])
        })
        .collect();
    let rel = |x: f64| if scale > 0.0 { x / scale } else { 0.0 };
    let mut out = HydroSystem {
        triple,
        fields,
        basis,
        c: mats.pop().unwrap(),
        b: mats.pop().unwrap(),
        a: mats.pop().unwrap(),
        fit_residual: rel(fit_res),
        held_out_residual: rel(held_res),
        notes: Vec::new(),
    };
    out.annotate_zero_blocks();
    Ok((out, cert))
}

fn mat_vec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Solves `a·x + b·p + c·q = 0` for `x`.
pub fn solve_time_derivative(system: &HydroSystem, p: &[Complex64], q: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = system.rows();
    let nf = system.fields.len();
    if m != nf {
        return Err(Error::SingularSystem(format!(
            "{m} equations for {nf} unknowns; the a-block is not square"
        )));
    }
    let rhs: Vec<Complex64> = mat_vec(&system.b, p)
        .iter()
        .zip(mat_vec(&system.c, q))
        .map(|(x, y)| -(x + y))
        .collect();
    if rhs.iter().all(|v| v.norm() == 0.0) {
        return Ok(vec![Complex64::new(0.0, 0.0); nf]);
    }
    solve_square(&system.a, &rhs)
        .ok_or_else(|| Error::SingularSystem("the a-block is numerically singular".into()))
}

/// Relative size of the compatibility condition
/// `Σ_l (X_{ij,l}·q_l + X_{jk,l}·x_l + X_{ki,l}·p_l)` at one point, where `x`
/// solves the extracted system.
pub fn compatibility_residual(values: &Families, x: &[Complex64], p: &[Complex64], q: &[Complex64]) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    let mut size = 0.0;
    for (fam, vel) in [(0usize, x), (1, p), (2, q)] {
        for (v, w) in values[fam].iter().zip(vel) {
            let term = v * w;
            total += term;
            size += term.norm();
        }
    }
    if size == 0.0 {
        0.0
    } else {
        total.norm() / size
    }
}

/// Random velocities `p`, `q`, the solved `x`, and the worst relative
/// compatibility residual over the supplied family samples.
pub fn consistency<F>(system: &HydroSystem, rng: &mut ChaCha8Rng, points: &[Complex64], eval: F) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Families>,
{
    let nf = system.fields.len();
    let mut draw = || -> Vec<Complex64> {
        (0..nf)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let p = draw();
    let q = draw();
    consistency_with(system, &p, &q, points, eval)
}

pub fn consistency_with<F>(
    system: &HydroSystem,
    p: &[Complex64],
    q: &[Complex64],
    points: &[Complex64],
    eval: F,
) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Families>,
{
    let x = solve_time_derivative(system, p, q)?;
    let mut worst: f64 = 0.0;
    for z in points {
        worst = worst.max(compatibility_residual(&eval(*z)?, &x, p, q));
    }
    Ok(worst)
}
