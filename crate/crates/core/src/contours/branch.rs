use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Contour, Segment};
use crate::error::{Error, Result};
use crate::theta::{theta, LatticeParam, THETA_TOL};

/// Additive term in the exponent of a weight.
pub type ExponentFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

const MIN_CLEARANCE: f64 = 1e-9;
const MAX_STEP: f64 = 0.1;

/// One multivalued factor `g(t)` of a weight `Π g_j(t)^{σ_j}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchFactor {
    /// `t - center`
    Linear { center: Complex64 },
    /// `θ(t - center, τ)`, vanishing on `center + Λ`
    Theta {
        center: Complex64,
        lattice: LatticeParam,
    },
}

impl BranchFactor {
    pub fn center(&self) -> Complex64 {
        match *self {
            BranchFactor::Linear { center } | BranchFactor::Theta { center, .. } => center,
        }
    }

    /// Value at `t`; when `anchor = (e, δ)` with `t = e + δ` and `e` a zero of
    /// the factor, the small offset `δ` is used directly.
    pub fn eval(&self, t: Complex64, anchor: Option<(Complex64, Complex64)>) -> Complex64 {
        match *self {
            BranchFactor::Linear { center } => match anchor {
                Some((e, d)) if same_point(e, center) => d,
                _ => t - center,
            },
            BranchFactor::Theta { center, lattice } => {
                if let Some((e, d)) = anchor {
                    if let Some((m, n)) = lattice.lattice_point(e - center) {
                        return lattice.shift_factor(d, m, n) * theta(d, lattice, THETA_TOL);
                    }
                }
                theta(t - center, lattice, THETA_TOL)
            }
        }
    }

    /// Distance from `t` to the zero set of the factor.
    pub fn zero_distance(&self, t: Complex64) -> f64 {
        match *self {
            BranchFactor::Linear { center } => (t - center).norm(),
            BranchFactor::Theta { center, lattice } => lattice.distance(t - center),
        }
    }

    pub fn vanishes_at(&self, p: Complex64) -> bool {
        match *self {
            BranchFactor::Linear { center } => same_point(p, center),
            BranchFactor::Theta { center, lattice } => lattice.lattice_point(p - center).is_some(),
        }
    }

    /// Distance from `p` to zeros of the factor other than `p` itself.
    fn other_zero_distance(&self, p: Complex64) -> f64 {
        match *self {
            BranchFactor::Linear { center } => {
                if same_point(p, center) {
                    f64::INFINITY
                } else {
                    (p - center).norm()
                }
            }
            BranchFactor::Theta { lattice, .. } => {
                if self.vanishes_at(p) {
                    lattice.min_period()
                } else {
                    self.zero_distance(p)
                }
            }
        }
    }
}

pub(crate) fn same_point(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-12 * (1.0 + a.norm().max(b.norm()))
}

/// `exp(Σ σ_j log g_j(t) + Ω(t))` with each logarithm continued along a contour.
#[derive(Clone)]
pub struct BranchedWeight {
    pub factors: Vec<BranchFactor>,
    pub exponents: Vec<f64>,
    pub entire: Option<ExponentFn>,
}

impl fmt::Debug for BranchedWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BranchedWeight")
            .field("factors", &self.factors)
            .field("exponents", &self.exponents)
            .field("entire", &self.entire.is_some())
            .finish()
    }
}

impl BranchedWeight {
    pub fn new(factors: Vec<BranchFactor>, exponents: Vec<f64>, entire: Option<ExponentFn>) -> Result<Self> {
        if factors.len() != exponents.len() {
            return Err(Error::InvalidInput(format!(
                "{} factors but {} exponents",
                factors.len(),
                exponents.len()
            )));
        }
        if exponents.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite exponent".into()));
        }
        for (i, a) in factors.iter().enumerate() {
            for b in &factors[..i] {
                if a == b || (matches!(a, BranchFactor::Linear { .. }) && matches!(b, BranchFactor::Linear { .. }) && same_point(a.center(), b.center())) {
                    return Err(Error::InvalidInput(format!(
                        "repeated singular point {}",
                        a.center()
                    )));
                }
            }
        }
        Ok(Self {
            factors,
            exponents,
            entire,
        })
    }

    /// Power law `Π (t - p_j)^{σ_j}`.
    pub fn power(points: &[Complex64], exponents: &[f64]) -> Result<Self> {
        let factors = points.iter().map(|&c| BranchFactor::Linear { center: c }).collect();
        Self::new(factors, exponents.to_vec(), None)
    }

    /// Weight with all exponents and the entire term negated.
    pub fn reciprocal(&self) -> Self {
        Self {
            factors: self.factors.clone(),
            exponents: self.exponents.iter().map(|s| -s).collect(),
            entire: self.entire.clone().map(|f| {
                let g: ExponentFn = Arc::new(move |t| -f(t));
                g
            }),
        }
    }

    pub fn from_logs(&self, t: Complex64, logs: &[Complex64]) -> Complex64 {
        let mut e: Complex64 = self
            .exponents
            .iter()
            .zip(logs)
            .map(|(s, l)| *s * l)
            .sum();
        if let Some(f) = &self.entire {
            e += f(t);
        }
        e.exp()
    }

    /// Sum of exponents of factors vanishing at `p`.
    pub fn local_exponent(&self, p: Complex64) -> f64 {
        self.factors
            .iter()
            .zip(&self.exponents)
            .filter(|(f, _)| f.vanishes_at(p))
            .map(|(_, s)| *s)
            .sum()
    }
}

/// Branch choice at the start of a contour.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchInit {
    /// Principal logarithms at the start (or at the first checkpoint when
    /// the start is a branch point).
    Principal,
    /// Continue from known logarithms at a nearby point.
    Continued { point: Complex64, logs: Vec<Complex64> },
}

#[derive(Debug, Clone)]
struct Checkpoint {
    s: f64,
    g: Vec<Complex64>,
    logs: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct SegmentTrack {
    checkpoints: Vec<Checkpoint>,
}

/// Continuous logarithms of every factor along a contour, stored at
/// checkpoints close enough that a principal log of the ratio to the
/// nearest checkpoint continues the branch.
#[derive(Debug, Clone)]
pub struct BranchTrack {
    factors: Vec<BranchFactor>,
    contour: Contour,
    segments: Vec<SegmentTrack>,
}

fn arg_jump(a: Complex64, b: Complex64) -> f64 {
    (b / a).arg().abs()
}

impl BranchTrack {
    pub fn new(factors: &[BranchFactor], contour: &Contour, init: BranchInit) -> Result<Self> {
        let segs = contour.segments();
        let nseg = segs.len();
        let sing = contour.singular_ends();
        let mut tracks = Vec::with_capacity(nseg);
        let mut start_logs: Option<Vec<Complex64>> = None;

        for (k, seg) in segs.iter().enumerate() {
            let singular_start = k == 0 && sing[0];
            let singular_end = k + 1 == nseg && sing[1];
            check_segment_clearance(factors, seg, singular_start, singular_end)?;

            let speed = seg.speed();
            let s0 = if singular_start {
                let r = 0.25 * clearance_at(factors, seg.start());
                (r / speed).min(0.25)
            } else {
                0.0
            };
            let s_stop = if singular_end {
                let r = 0.25 * clearance_at(factors, seg.end());
                1.0 - (r / speed).min(0.25)
            } else {
                1.0
            };

            let anchor0 = line_anchor(seg, s0, None);
            let t0 = seg.point(s0);
            let g0: Vec<Complex64> = factors.iter().map(|f| f.eval(t0, anchor0)).collect();
            if g0.iter().any(|g| g.norm() == 0.0 || !g.is_finite()) {
                return Err(Error::Geometry(format!("weight factor vanishes at {t0}")));
            }
            let logs0: Vec<Complex64> = match (&start_logs, k, &init) {
                (Some(prev), _, _) => prev.clone(),
                (None, 0, BranchInit::Continued { point, logs }) => {
                    if logs.len() != factors.len() {
                        return Err(Error::InvalidInput("branch init has wrong length".into()));
                    }
                    factors
                        .iter()
                        .zip(logs)
                        .zip(&g0)
                        .map(|((f, l), g)| *l + (g / f.eval(*point, None)).ln())
                        .collect()
                }
                _ => g0.iter().map(|g| g.ln()).collect(),
            };

            let needs_steps: Vec<bool> = factors
                .iter()
                .map(|f| !(seg.is_line() && matches!(f, BranchFactor::Linear { .. })))
                .collect();
            let mut cps = vec![Checkpoint {
                s: s0,
                g: g0,
                logs: logs0,
            }];

            if needs_steps.iter().any(|b| *b) {
                let mut s = s0;
                while s < s_stop {
                    let cur = cps.last().unwrap().clone();
                    let t = seg.point(s);
                    let d = factors
                        .iter()
                        .zip(&needs_steps)
                        .filter(|(_, n)| **n)
                        .map(|(f, _)| f.zero_distance(t))
                        .fold(f64::INFINITY, f64::min);
                    if d < MIN_CLEARANCE {
                        return Err(Error::Geometry(format!(
                            "contour passes within {d:e} of a branch point near {t}"
                        )));
                    }
                    let mut ds = (0.4 * d).min(MAX_STEP) / speed;
                    let mut accepted = None;
                    for _ in 0..60 {
                        let sn = (s + ds).min(s_stop);
                        let gn: Vec<Complex64> = factors
                            .iter()
                            .map(|f| f.eval(seg.point(sn), line_anchor(seg, sn, None)))
                            .collect();
                        let tm = seg.point(0.5 * (s + sn));
                        let ok = factors.iter().enumerate().all(|(j, f)| {
                            let gm = f.eval(tm, None);
                            arg_jump(cur.g[j], gn[j]) < FRAC_PI_2 && arg_jump(cur.g[j], gm) < FRAC_PI_2
                        });
                        if ok {
                            accepted = Some((sn, gn));
                            break;
                        }
                        ds *= 0.5;
                    }
                    let (sn, gn) = accepted.ok_or_else(|| {
                        Error::Geometry(format!("branch tracking failed to advance near {t}"))
                    })?;
                    let logs = factors
                        .iter()
                        .enumerate()
                        .map(|(j, _)| cur.logs[j] + (gn[j] / cur.g[j]).ln())
                        .collect();
                    cps.push(Checkpoint { s: sn, g: gn, logs });
                    s = sn;
                }
            }
            let track = SegmentTrack { checkpoints: cps };
            if k + 1 < nseg {
                start_logs = Some(track_logs(factors, seg, &track, 1.0, None));
            }
            tracks.push(track);
        }
        Ok(Self {
            factors: factors.to_vec(),
            contour: contour.clone(),
            segments: tracks,
        })
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    pub fn factors(&self) -> &[BranchFactor] {
        &self.factors
    }

    /// Continued logarithms at local parameter `s` of segment `seg`.
    /// `comp` gives `1 - s` exactly when `s` is close to 1.
    pub fn logs_at(&self, seg: usize, s: f64, comp: Option<f64>) -> Vec<Complex64> {
        let segment = &self.contour.segments()[seg];
        track_logs(&self.factors, segment, &self.segments[seg], s, comp)
    }

    /// Logarithms at the global contour parameter.
    pub fn logs_at_param(&self, param: f64) -> Vec<Complex64> {
        let (k, s) = self.contour.locate(param);
        self.logs_at(k, s, None)
    }

    pub fn end_logs(&self) -> Vec<Complex64> {
        let n = self.segments.len();
        self.logs_at(n - 1, 1.0, Some(0.0))
    }
}

/// Exact offset from the nearer end of a line segment.
pub(crate) fn line_anchor(seg: &Segment, s: f64, comp: Option<f64>) -> Option<(Complex64, Complex64)> {
    match *seg {
        Segment::Line { from, to } => {
            let d = to - from;
            if s <= 0.5 {
                Some((from, s * d))
            } else {
                let c = comp.unwrap_or(1.0 - s);
                Some((to, -c * d))
            }
        }
        _ => None,
    }
}

fn track_logs(
    factors: &[BranchFactor],
    seg: &Segment,
    track: &SegmentTrack,
    s: f64,
    comp: Option<f64>,
) -> Vec<Complex64> {
    let cps = &track.checkpoints;
    let idx = cps.partition_point(|c| c.s <= s).saturating_sub(1);
    let anchor = line_anchor(seg, s, comp);
    let t = match anchor {
        Some((e, d)) => e + d,
        None => seg.point(s),
    };
    factors
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let cp = if seg.is_line() && matches!(f, BranchFactor::Linear { .. }) {
                &cps[0]
            } else {
                &cps[idx]
            };
            cp.logs[j] + (f.eval(t, anchor) / cp.g[j]).ln()
        })
        .collect()
}

fn clearance_at(factors: &[BranchFactor], p: Complex64) -> f64 {
    factors
        .iter()
        .map(|f| f.other_zero_distance(p))
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

fn check_segment_clearance(
    factors: &[BranchFactor],
    seg: &Segment,
    singular_start: bool,
    singular_end: bool,
) -> Result<()> {
    for f in factors {
        if let BranchFactor::Linear { center } = *f {
            let at_start = singular_start && same_point(center, seg.start());
            let at_end = singular_end && same_point(center, seg.end());
            if at_start || at_end {
                continue;
            }
            let d = seg.distance_to(center);
            if d < MIN_CLEARANCE {
                return Err(Error::Geometry(format!(
                    "contour passes within {d:e} of branch point {center}"
                )));
            }
        } else {
            if (!singular_start && f.vanishes_at(seg.start())) || (!singular_end && f.vanishes_at(seg.end())) {
                return Err(Error::Geometry(format!(
                    "undeclared branch point at a segment end of {:?}",
                    seg
                )));
            }
        }
    }
    Ok(())
}

/// Weight value at a global parameter of the contour, principal branch at the start.
pub fn weight_along(weight: &BranchedWeight, contour: &Contour, param: f64) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&param) {
        return Err(Error::InvalidInput(format!("parameter {param} outside [0, 1]")));
    }
    let track = BranchTrack::new(&weight.factors, contour, BranchInit::Principal)?;
    let logs = track.logs_at_param(param);
    Ok(weight.from_logs(contour.point(param), &logs))
}

/// Ratio of the continued weight at the end of a closed contour to its start value.
pub fn monodromy_factor(weight: &BranchedWeight, contour: &Contour) -> Result<Complex64> {
    if !contour.is_closed() {
        return Err(Error::InvalidInput("monodromy needs a closed contour".into()));
    }
    let track = BranchTrack::new(&weight.factors, contour, BranchInit::Principal)?;
    let start = track.logs_at(0, 0.0, None);
    let end = track.end_logs();
    let e: Complex64 = weight
        .exponents
        .iter()
        .zip(start.iter().zip(&end))
        .map(|(s, (a, b))| *s * (b - a))
        .sum();
    Ok(e.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn half_turn_of_square_root() {
        let w = BranchedWeight::power(&[c(0.0, 0.0)], &[0.5]).unwrap();
        let circ = Contour::circle(c(0.0, 0.0), 1.0, 0.0, true).unwrap();
        assert!((weight_along(&w, &circ, 0.0).unwrap() - 1.0).norm() < 1e-14);
        assert!((weight_along(&w, &circ, 1.0).unwrap() + 1.0).norm() < 1e-12);
    }

    #[test]
    fn zero_exponents_give_one() {
        let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[0.0, 0.0]).unwrap();
        let k = Contour::circle(c(0.5, 0.0), 1.0, 0.3, false).unwrap();
        for p in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(weight_along(&w, &k, p).unwrap(), c(1.0, 0.0));
        }
    }

    #[test]
    fn principal_region_segment() {
        let w = BranchedWeight::power(&[c(2.0, 0.0)], &[0.3]).unwrap();
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        for p in [0.0, 0.25, 0.5, 1.0] {
            let t = k.point(p);
            let want = (0.3 * (t - 2.0).ln()).exp();
            assert!((weight_along(&w, &k, p).unwrap() - want).norm() < 1e-14);
        }
    }

    #[test]
    fn quarter_monodromy() {
        let w = BranchedWeight::power(&[c(0.3, 0.1), c(2.0, 0.0)], &[0.25, 0.4]).unwrap();
        let k = Contour::circle(c(0.3, 0.1), 0.5, 1.0, true).unwrap();
        let m = monodromy_factor(&w, &k).unwrap();
        assert!((m - c(0.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn passing_through_branch_point_is_an_error() {
        let w = BranchedWeight::power(&[c(0.5, 0.0)], &[0.3]).unwrap();
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        assert!(matches!(weight_along(&w, &k, 0.5), Err(Error::Geometry(_))));
    }

    #[test]
    fn theta_factor_winds_like_linear_near_zero() {
        let lat = LatticeParam::new(c(0.2, 1.1)).unwrap();
        let f = vec![BranchFactor::Theta { center: c(0.1, 0.05), lattice: lat }];
        let w = BranchedWeight::new(f, vec![0.3], None).unwrap();
        let k = Contour::circle(c(0.1, 0.05), 0.2, 0.0, true).unwrap();
        let m = monodromy_factor(&w, &k).unwrap();
        assert!((m - (2.0 * PI * c(0.0, 0.3)).exp()).norm() < 1e-10);
    }

    #[test]
    fn singular_start_is_principal_at_first_checkpoint() {
        let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[0.3, -0.2]).unwrap();
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
            .unwrap()
            .with_singular_ends(true, true)
            .unwrap();
        let v = weight_along(&w, &k, 0.5).unwrap();
        let want = (0.3 * c(0.5, 0.0).ln() - 0.2 * c(-0.5, 0.0).ln()).exp();
        assert!((v - want).norm() < 1e-14, "{v} vs {want}");
    }

    /// Winding number by summing argument increments of densely sampled points.
    fn winding(k: &Contour, p: Complex64) -> f64 {
        let n = 20_000;
        let mut total = 0.0;
        let mut prev = k.point(0.0) - p;
        for i in 1..=n {
            let cur = k.point(i as f64 / n as f64) - p;
            total += (cur / prev).arg();
            prev = cur;
        }
        total / (2.0 * PI)
    }

    #[test]
    fn figure_eight_cancels_equal_exponents() {
        let (p1, p2) = (c(-1.0, 0.0), c(1.0, 0.0));
        let left = Contour::circle(p1, 1.0, 0.0, true).unwrap();
        let right = Contour::circle(p2, 1.0, PI, false).unwrap();
        let eight = left.concat(&right).unwrap();
        assert!(eight.is_closed());
        assert!((winding(&eight, p1) - 1.0).abs() < 1e-9);
        assert!((winding(&eight, p2) + 1.0).abs() < 1e-9);
        let s = 0.37;
        let w = BranchedWeight::power(&[p1, p2], &[s, s]).unwrap();
        assert!((monodromy_factor(&w, &eight).unwrap() - 1.0).norm() < 1e-10);
        // unequal exponents leave exp(2πi(σ1 - σ2))
        let w = BranchedWeight::power(&[p1, p2], &[0.3, 0.1]).unwrap();
        let want = (2.0 * PI * c(0.0, 0.2)).exp();
        assert!((monodromy_factor(&w, &eight).unwrap() - want).norm() < 1e-10);
    }

    use proptest::prelude::{prop_assert, proptest};

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn monodromy_multiplies_under_composition(
            s1 in -0.45f64..0.45, s2 in -0.45f64..0.45,
            r1 in 0.2f64..0.8, r2 in 0.2f64..0.8, a in 0.0f64..6.0,
        ) {
            let p = [c(0.0, 0.0), c(0.3, 1.9)];
            let w = BranchedWeight::power(&p, &[s1, s2]).unwrap();
            let base = p[0] + Complex64::from_polar(r1, a);
            // loop around p[0] then a loop around p[1], both through `base`
            let k1 = Contour::circle(p[0], r1, a, true).unwrap();
            let sq = |x: f64, y: f64| p[1] + c(x * r2, y * r2);
            let k2 = Contour::polyline(&[base, sq(-1.0, -1.0), sq(1.0, -1.0), sq(1.0, 1.0), sq(-1.0, 1.0), sq(-1.0, -1.0), base]).unwrap();
            let m1 = monodromy_factor(&w, &k1).unwrap();
            let m2 = monodromy_factor(&w, &k2).unwrap();
            let m12 = monodromy_factor(&w, &k1.concat(&k2).unwrap()).unwrap();
            prop_assert!((m12 - m1 * m2).norm() < 1e-9);
        }

        #[test]
        fn continuation_has_no_jumps(s in -0.9f64..0.9, r in 0.1f64..2.0, a in 0.0f64..6.0) {
            let w = BranchedWeight::power(&[c(0.0, 0.0), c(0.5, 0.5)], &[s, -0.3]).unwrap();
            let k = Contour::circle(c(0.1, 0.0), r, a, true).unwrap();
            if k.distance_to(c(0.5, 0.5)) > 0.1 && k.distance_to(c(0.0, 0.0)) > 0.1 {
                let n = 400;
                let mut prev = weight_along(&w, &k, 0.0).unwrap();
                for i in 1..=n {
                    let cur = weight_along(&w, &k, i as f64 / n as f64).unwrap();
                    prop_assert!((cur / prev).arg().abs() < PI / 2.0);
                    prev = cur;
                }
            }
        }
    }
}
