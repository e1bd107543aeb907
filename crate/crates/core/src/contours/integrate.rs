use num_complex::Complex64;

use super::branch::{line_anchor, same_point};
use super::quadrature::{gauss_kronrod, tanh_sinh};
use super::{BranchInit, BranchTrack, BranchedWeight, Contour, Segment};
use crate::error::{Error, Result};
use crate::theta::{theta, LatticeParam, THETA_TOL};

/// Below this local exponent an endpoint is handled by a keyhole loop
/// instead of a tanh-sinh rule.
const KEYHOLE_EXPONENT: f64 = -0.8;
/// Fraction of a segment given to each tanh-sinh end piece.
const END_PIECE: f64 = 0.25;

/// Quadrature node handed to integrands.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub t: Complex64,
    /// Nearer segment end `e` and the exact offset `t - e` (line segments only).
    pub anchor: Option<(Complex64, Complex64)>,
    /// Continued weight at `t`.
    pub weight: Complex64,
}

impl Node {
    /// `t - p`, exact near an anchored endpoint equal to `p`.
    pub fn minus(&self, p: Complex64) -> Complex64 {
        match self.anchor {
            Some((e, d)) if same_point(e, p) => d,
            _ => self.t - p,
        }
    }

    /// `θ(t - p)`, exact near an anchored endpoint congruent to `p`.
    pub fn theta_minus(&self, p: Complex64, lattice: LatticeParam) -> Complex64 {
        if let Some((e, d)) = self.anchor {
            if let Some((m, n)) = lattice.lattice_point(e - p) {
                return lattice.shift_factor(d, m, n) * theta(d, lattice, THETA_TOL);
            }
        }
        theta(self.t - p, lattice, THETA_TOL)
    }
}

fn node_at(track: &BranchTrack, weight: &BranchedWeight, seg: usize, s: f64, comp: Option<f64>) -> Node {
    let segment = &track.contour().segments()[seg];
    let anchor = line_anchor(segment, s, comp);
    let t = match anchor {
        Some((e, d)) => e + d,
        None => segment.point(s),
    };
    let logs = track.logs_at(seg, s, comp);
    Node {
        t,
        anchor,
        weight: weight.from_logs(t, &logs),
    }
}

fn endpoint_exponent(weight: &BranchedWeight, poles: &[Complex64], p: Complex64) -> f64 {
    weight.local_exponent(p) - poles.iter().filter(|q| same_point(**q, p)).count() as f64
}

/// `∫ f(node)·weight dt` along the tracked contour. Endpoint exponents
/// (weight exponent minus the number of listed simple poles at that end) must
/// exceed -1.
pub fn integrate<F>(
    track: &BranchTrack,
    weight: &BranchedWeight,
    f: F,
    endpoint_poles: &[Complex64],
    tol: f64,
) -> Result<(Complex64, f64)>
where
    F: Fn(&Node) -> Complex64,
{
    let c = track.contour();
    let ends = [c.start(), c.end()];
    for (k, flag) in c.singular_ends().iter().enumerate() {
        if *flag {
            let beta = endpoint_exponent(weight, endpoint_poles, ends[k]);
            if beta <= -1.0 {
                return Err(Error::InvalidInput(format!(
                    "endpoint {} has local exponent {beta} <= -1; the integral diverges",
                    ends[k]
                )));
            }
        }
    }
    integrate_continued(track, weight, f, endpoint_poles, &[], tol)
}

/// As [`integrate`], but endpoint exponents at or below -0.8 are handled by
/// analytic continuation in the exponents: with `C` the integral over a small
/// positive circle around the endpoint `A` started from the branch at `A'`
/// and `μ` its monodromy, `∫_A^{A'} = C/(μ - 1)`. This equals the ordinary
/// integral whenever that converges and is its continuation otherwise.
/// `avoid` lists further singular points of `f` that keyhole circles must not
/// enclose.
pub fn integrate_continued<F>(
    track: &BranchTrack,
    weight: &BranchedWeight,
    f: F,
    endpoint_poles: &[Complex64],
    avoid: &[Complex64],
    tol: f64,
) -> Result<(Complex64, f64)>
where
    F: Fn(&Node) -> Complex64,
{
    if weight.factors.len() != track.factors().len() {
        return Err(Error::InvalidInput("weight and track disagree on factors".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let contour = track.contour();
    let segs = contour.segments();
    let nseg = segs.len();
    let sing = contour.singular_ends();

    // (segment, s0, s1, singular at s0, singular at s1)
    let mut pieces: Vec<(usize, f64, f64, bool, bool)> = Vec::new();
    let mut loops: Vec<(usize, f64, f64, bool)> = Vec::new();
    for (k, seg) in segs.iter().enumerate() {
        let mut lo = (0.0, k == 0 && sing[0]);
        let mut hi = (1.0, k + 1 == nseg && sing[1]);
        for (is_start, end) in [(true, &mut lo), (false, &mut hi)] {
            if !end.1 {
                continue;
            }
            let p = if is_start { seg.start() } else { seg.end() };
            if endpoint_exponent(weight, endpoint_poles, p) <= KEYHOLE_EXPONENT {
                let rho = keyhole_radius(track, endpoint_poles, avoid, seg, p);
                let ds = rho / seg.speed();
                loops.push((k, if is_start { ds } else { 1.0 - ds }, rho, is_start));
                end.0 = if is_start { ds } else { 1.0 - ds };
                end.1 = false;
            }
        }
        pieces.push((k, lo.0, hi.0, lo.1, hi.1));
    }

    let count = pieces.iter().map(|p| 1 + p.3 as usize + p.4 as usize).sum::<usize>() + loops.len();
    let piece_tol = tol / count as f64;
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;

    for &(k, s0, s1, sing0, sing1) in &pieces {
        let seg = segs[k];
        let tangent = seg.tangent(0.5);
        let width = s1 - s0;
        let is_line = seg.is_line();
        let mut a = s0;
        let mut b = s1;
        if sing0 {
            let w = END_PIECE * width;
            let (v, e) = tanh_sinh(
                |x, _| {
                    let s = s0 + w * x;
                    let node = node_at(track, weight, k, s, None);
                    f(&node) * node.weight * tangent * w
                },
                piece_tol,
            )?;
            total += v;
            err += e;
            a = s0 + w;
        }
        if sing1 {
            let w = END_PIECE * width;
            let (v, e) = tanh_sinh(
                |x, _| {
                    let comp = (1.0 - s1) + w * x;
                    let s = 1.0 - comp;
                    let node = node_at(track, weight, k, s, Some(comp));
                    f(&node) * node.weight * tangent * w
                },
                piece_tol,
            )?;
            total += v;
            err += e;
            b = s1 - w;
        }
        let (v, e) = gauss_kronrod(
            |s| {
                let node = node_at(track, weight, k, s, None);
                let tan = if is_line { tangent } else { seg.tangent(s) };
                f(&node) * node.weight * tan
            },
            a,
            b,
            piece_tol,
        )?;
        total += v;
        err += e;
    }

    for &(k, s, rho, is_start) in &loops {
        let seg = segs[k];
        let anchor = line_anchor(&seg, s, None);
        let centre = anchor.map(|(e, _)| e).unwrap_or_else(|| seg.point(s));
        let a_prime = seg.point(s);
        let circle = Contour::circle(centre, rho, (a_prime - centre).arg(), true)?;
        let logs = track.logs_at(k, s, if is_start { None } else { Some(1.0 - s) });
        let ctrack = BranchTrack::new(
            track.factors(),
            &circle,
            BranchInit::Continued {
                point: a_prime,
                logs: logs.clone(),
            },
        )?;
        let start = ctrack.logs_at(0, 0.0, None);
        let end = ctrack.end_logs();
        let phase: Complex64 = weight
            .exponents
            .iter()
            .zip(start.iter().zip(&end))
            .map(|(sig, (l0, l1))| *sig * (l1 - l0))
            .sum();
        let mu = phase.exp();
        if (mu - 1.0).norm() < 1e-8 {
            return Err(Error::InvalidInput(format!(
                "integer local exponent at {centre}: the divergent endpoint integral has no continuation"
            )));
        }
        let cseg = circle.segments()[0];
        let (v, e) = gauss_kronrod(
            |u| {
                let node = node_at(&ctrack, weight, 0, u, None);
                f(&node) * node.weight * cseg.tangent(u)
            },
            0.0,
            1.0,
            piece_tol * (mu - 1.0).norm(),
        )?;
        let sign = if is_start { 1.0 } else { -1.0 };
        total += sign * v / (mu - 1.0);
        err += e / (mu - 1.0).norm();
    }
    Ok((total, err))
}

fn keyhole_radius(
    track: &BranchTrack,
    poles: &[Complex64],
    avoid: &[Complex64],
    seg: &Segment,
    p: Complex64,
) -> f64 {
    let mut clear = f64::INFINITY;
    for f in track.factors() {
        let d = if f.vanishes_at(p) {
            match f {
                super::BranchFactor::Theta { lattice, .. } => lattice.min_period(),
                _ => f64::INFINITY,
            }
        } else {
            f.zero_distance(p)
        };
        clear = clear.min(d);
    }
    for q in poles.iter().chain(avoid) {
        if !same_point(*q, p) {
            clear = clear.min((q - p).norm());
        }
    }
    (0.25 * clear).min(0.25 * seg.speed()).min(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contours::BranchFactor;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Lanczos log-Gamma (g = 7, n = 9), independent of the library.
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    fn beta(a: f64, b: f64) -> f64 {
        (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
    }

    fn unit() -> BranchedWeight {
        BranchedWeight::new(vec![], vec![], None).unwrap()
    }

    #[test]
    fn residue_of_one_over_t() {
        let k = Contour::circle(c(0.0, 0.0), 1.0, 0.0, true).unwrap();
        let w = unit();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let (v, _) = integrate(&tr, &w, |n| 1.0 / n.t, &[], 1e-12).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-12);
        let (z, _) = integrate(&tr, &w, |_| c(0.0, 0.0), &[], 1e-12).unwrap();
        assert_eq!(z, c(0.0, 0.0));
    }

    #[test]
    fn beta_integral() {
        let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[-0.3, -0.2]).unwrap();
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
            .unwrap()
            .with_singular_ends(true, true)
            .unwrap();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let (v, _) = integrate(&tr, &w, |_| c(1.0, 0.0), &[], 1e-12).unwrap();
        // weight carries (t-1)^{-0.2} = e^{-0.2 iπ}(1-t)^{-0.2} on the principal branch
        let want = beta(0.7, 0.8) * (c(0.0, -0.2 * PI)).exp();
        assert!((v - want).norm() < 1e-10, "{v} vs {want}");
    }

    #[test]
    fn strict_rejects_divergent_endpoint() {
        let w = BranchedWeight::power(&[c(0.0, 0.0)], &[-0.3]).unwrap();
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
            .unwrap()
            .with_singular_ends(true, false)
            .unwrap();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let r = integrate(&tr, &w, |n| 1.0 / n.minus(c(0.0, 0.0)), &[c(0.0, 0.0)], 1e-10);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn continuation_matches_closed_form() {
        // ∫_0^1 t^{a-1} dt = 1/a, continued to a = -0.3.
        for a in [0.05, -0.3, -0.7] {
            let w = BranchedWeight::power(&[c(0.0, 0.0)], &[a]).unwrap();
            let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
                .unwrap()
                .with_singular_ends(true, false)
                .unwrap();
            let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
            let (v, _) =
                integrate_continued(&tr, &w, |n| 1.0 / n.minus(c(0.0, 0.0)), &[c(0.0, 0.0)], &[], 1e-12)
                    .unwrap();
            assert!((v - 1.0 / a).norm() < 1e-9 * (1.0 / a).abs(), "a={a}: {v}");
        }
    }

    #[test]
    fn continuation_at_far_end_and_complex_direction() {
        // ∫_A^B (B - t)^{a-1}... expressed with factor (t - B): on the segment
        // t - B = -(B - A)(1 - x), so the integral is (A - B)^a / a up to sign.
        let (aa, bb) = (c(0.2, 0.1), c(-0.5, 0.8));
        let a = -0.35;
        let w = BranchedWeight::power(&[bb], &[a]).unwrap();
        let k = Contour::segment(aa, bb).unwrap().with_singular_ends(false, true).unwrap();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let (v, _) = integrate_continued(&tr, &w, |n| 1.0 / n.minus(bb), &[bb], &[], 1e-12).unwrap();
        // antiderivative (t - B)^a / a on the principal branch at A
        let want = -((aa - bb).ln() * a).exp() / a;
        assert!((v - want).norm() < 1e-9, "{v} vs {want}");
    }

    #[test]
    fn theta_weight_lattice_translate_endpoint() {
        // ∫ θ'(t-p)/θ(t-p) · θ(t-p)^σ dt = θ^σ/σ evaluated between the ends;
        // with the end at p + 1 the factor vanishes there.
        let lat = LatticeParam::new(c(0.1, 1.1)).unwrap();
        let p = c(0.2, 0.3);
        let sigma = 0.4;
        let f = vec![BranchFactor::Theta { center: p, lattice: lat }];
        let w = BranchedWeight::new(f, vec![sigma], None).unwrap();
        let start = c(0.6, 0.5);
        let k = Contour::segment(start, p + 1.0).unwrap().with_singular_ends(false, true).unwrap();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let (v, _) = integrate(
            &tr,
            &w,
            |n| {
                let j = crate::theta::theta_jet(n.t - p, lat, 1e-15);
                let th = n.theta_minus(p, lat);
                j[1] / th
            },
            &[p + 1.0],
            1e-11,
        )
        .unwrap();
        let w0 = crate::contours::weight_along(&w, &k, 0.0).unwrap();
        assert!((v + w0 / sigma).norm() < 1e-9, "{v} vs {}", -w0 / sigma);
    }

    #[test]
    fn reversal_negates() {
        let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[0.3, -0.25]).unwrap();
        let k = Contour::polyline(&[c(-0.5, -0.5), c(0.5, -0.5), c(0.5, 0.7)]).unwrap();
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
        let (v, _) = integrate(&tr, &w, |n| n.t.exp(), &[], 1e-12).unwrap();
        // reversed contour with the same branch: start from the end logs
        let r = k.reversed();
        let trr = BranchTrack::new(&w.factors, &r, BranchInit::Continued { point: k.end(), logs: tr.end_logs() }).unwrap();
        let (vr, _) = integrate(&trr, &w, |n| n.t.exp(), &[], 1e-12).unwrap();
        assert!((v + vr).norm() < 2e-12);
    }

    use proptest::prelude::{prop_assert, proptest};

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn split_sums_to_whole(s1 in -0.45f64..0.45, s2 in -0.45f64..0.45, at in 0.05f64..0.95) {
            let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[s1, s2]).unwrap();
            let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
                .unwrap()
                .with_singular_ends(true, true)
                .unwrap();
            let f = |n: &Node| n.t * n.t + 1.0;
            let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
            let (whole, _) = integrate(&tr, &w, f, &[], 1e-12).unwrap();
            let (a, b) = k.split_at(at).unwrap();
            let ta = BranchTrack::new(&w.factors, &a, BranchInit::Principal).unwrap();
            let tb = BranchTrack::new(&w.factors, &b, BranchInit::Continued { point: a.end(), logs: ta.end_logs() }).unwrap();
            let (va, _) = integrate(&ta, &w, f, &[], 1e-12).unwrap();
            let (vb, _) = integrate(&tb, &w, f, &[], 1e-12).unwrap();
            prop_assert!((va + vb - whole).norm() < 2e-12 * (1.0 + whole.norm()), "{} vs {}", va + vb, whole);
        }

        #[test]
        fn reversal_negates_on_arcs(s in -0.45f64..0.45, r in 0.3f64..0.9, a0 in 0.0f64..3.0, span in 0.5f64..5.0) {
            let w = BranchedWeight::power(&[c(0.0, 0.0)], &[s]).unwrap();
            let arc = crate::contours::Segment::arc(c(0.0, 0.0), r, a0, a0 + span).unwrap();
            let k = Contour::new(vec![arc], false).unwrap();
            let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal).unwrap();
            let (v, _) = integrate(&tr, &w, |n| n.t.exp(), &[], 1e-12).unwrap();
            let rk = k.reversed();
            let trr = BranchTrack::new(&w.factors, &rk, BranchInit::Continued { point: k.end(), logs: tr.end_logs() }).unwrap();
            let (vr, _) = integrate(&trr, &w, |n| n.t.exp(), &[], 1e-12).unwrap();
            prop_assert!((v + vr).norm() < 2e-12 * (1.0 + v.norm()));
        }
    }
}
