//! Piecewise contours, branch tracking of multivalued weights along them, and
//! quadrature with algebraic endpoint singularities.

mod branch;
mod integrate;
pub mod quadrature;
pub mod symbolic;

pub use branch::{
    monodromy_factor, weight_along, BranchFactor, BranchInit, BranchTrack, BranchedWeight,
    ExponentFn,
};
pub use integrate::{integrate, integrate_continued, Node};

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Line segment or circular arc, parametrized by `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line {
        from: Complex64,
        to: Complex64,
    },
    Arc {
        center: Complex64,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl Segment {
    pub fn line(from: Complex64, to: Complex64) -> Result<Self> {
        if !(from - to).norm().is_normal() {
            return Err(Error::Geometry(format!("degenerate segment {from} -> {to}")));
        }
        Ok(Segment::Line { from, to })
    }

    pub fn arc(center: Complex64, radius: f64, start_angle: f64, end_angle: f64) -> Result<Self> {
        let sweep = (end_angle - start_angle).abs();
        if !radius.is_finite() || radius <= 0.0 || sweep.is_nan() || sweep == 0.0 {
            return Err(Error::Geometry(format!(
                "degenerate arc radius {radius}, angles {start_angle}..{end_angle}"
            )));
        }
        Ok(Segment::Arc {
            center,
            radius,
            start_angle,
            end_angle,
        })
    }

    pub fn point(&self, s: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => from + s * (to - from),
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => center + Complex64::from_polar(radius, start_angle + s * (end_angle - start_angle)),
        }
    }

    /// `dt/ds`.
    pub fn tangent(&self, s: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => to - from,
            Segment::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => {
                let d = end_angle - start_angle;
                Complex64::new(0.0, d) * Complex64::from_polar(radius, start_angle + s * d)
            }
        }
    }

    /// `|dt/ds|`, constant along the segment.
    pub fn speed(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle).abs(),
        }
    }

    pub fn start(&self) -> Complex64 {
        self.point(0.0)
    }

    pub fn end(&self) -> Complex64 {
        match *self {
            Segment::Line { to, .. } => to,
            _ => self.point(1.0),
        }
    }

    pub fn is_line(&self) -> bool {
        matches!(self, Segment::Line { .. })
    }

    pub fn reversed(&self) -> Self {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => Segment::Arc {
                center,
                radius,
                start_angle: end_angle,
                end_angle: start_angle,
            },
        }
    }

    pub fn split(&self, s: f64) -> (Self, Self) {
        match *self {
            Segment::Line { from, to } => {
                let m = self.point(s);
                (Segment::Line { from, to: m }, Segment::Line { from: m, to })
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let mid = start_angle + s * (end_angle - start_angle);
                (
                    Segment::Arc {
                        center,
                        radius,
                        start_angle,
                        end_angle: mid,
                    },
                    Segment::Arc {
                        center,
                        radius,
                        start_angle: mid,
                        end_angle,
                    },
                )
            }
        }
    }

    pub fn translated(&self, delta: Complex64) -> Self {
        match *self {
            Segment::Line { from, to } => Segment::Line {
                from: from + delta,
                to: to + delta,
            },
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => Segment::Arc {
                center: center + delta,
                radius,
                start_angle,
                end_angle,
            },
        }
    }

    /// Euclidean distance from `p` to the segment.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        match *self {
            Segment::Line { from, to } => {
                let d = to - from;
                let s = ((p - from) * d.conj()).re / d.norm_sqr();
                (p - self.point(s.clamp(0.0, 1.0))).norm()
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let w = p - center;
                let (lo, hi) = if start_angle <= end_angle {
                    (start_angle, end_angle)
                } else {
                    (end_angle, start_angle)
                };
                let ang = w.arg();
                let on_arc = hi - lo >= TAU - 1e-15 || {
                    let k = ((lo - ang) / TAU).ceil();
                    ang + k * TAU <= hi
                };
                let radial = (w.norm() - radius).abs();
                if on_arc {
                    radial
                } else {
                    (p - self.start()).norm().min((p - self.end()).norm())
                }
            }
        }
    }
}

/// Ordered chain of segments; `singular_ends` marks a start or end that sits
/// on a branch point of the weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    segments: Vec<Segment>,
    closed: bool,
    singular_ends: [bool; 2],
}

impl Contour {
    pub fn new(segments: Vec<Segment>, closed: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Geometry("contour has no segments".into()));
        }
        let scale = segments
            .iter()
            .map(|s| s.start().norm().max(s.end().norm()))
            .fold(1.0, f64::max);
        for w in segments.windows(2) {
            if (w[0].end() - w[1].start()).norm() > 1e-12 * scale {
                return Err(Error::Geometry(format!(
                    "segments do not join: {} vs {}",
                    w[0].end(),
                    w[1].start()
                )));
            }
        }
        let first = segments[0].start();
        let last = segments[segments.len() - 1].end();
        if closed && (first - last).norm() > 1e-12 * scale {
            return Err(Error::Geometry(format!(
                "closed contour ends at {last}, not at its start {first}"
            )));
        }
        Ok(Self {
            segments,
            closed,
            singular_ends: [false, false],
        })
    }

    pub fn segment(from: Complex64, to: Complex64) -> Result<Self> {
        Self::new(vec![Segment::line(from, to)?], false)
    }

    pub fn polyline(points: &[Complex64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Geometry("polyline needs at least two points".into()));
        }
        let segs = points
            .windows(2)
            .map(|w| Segment::line(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        let closed = points.len() > 2 && points[0] == points[points.len() - 1];
        Self::new(segs, closed)
    }

    /// Full circle starting at `center + radius·e^{i·start_angle}`.
    pub fn circle(center: Complex64, radius: f64, start_angle: f64, positive: bool) -> Result<Self> {
        let end = if positive {
            start_angle + TAU
        } else {
            start_angle - TAU
        };
        Self::new(vec![Segment::arc(center, radius, start_angle, end)?], true)
    }

    pub fn with_singular_ends(mut self, start: bool, end: bool) -> Result<Self> {
        if self.closed && (start || end) {
            return Err(Error::Geometry("closed contours have no singular endpoints".into()));
        }
        if (start && !self.segments[0].is_line())
            || (end && !self.segments[self.segments.len() - 1].is_line())
        {
            return Err(Error::Geometry(
                "singular endpoints must lie on line segments".into(),
            ));
        }
        self.singular_ends = [start, end];
        Ok(self)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn singular_ends(&self) -> [bool; 2] {
        self.singular_ends
    }

    pub fn start(&self) -> Complex64 {
        self.segments[0].start()
    }

    pub fn end(&self) -> Complex64 {
        self.segments[self.segments.len() - 1].end()
    }

    /// Maps a global parameter in `[0, 1]` to (segment index, local parameter).
    pub fn locate(&self, param: f64) -> (usize, f64) {
        let n = self.segments.len();
        let x = param.clamp(0.0, 1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        (k, x - k as f64)
    }

    pub fn point(&self, param: f64) -> Complex64 {
        let (k, s) = self.locate(param);
        self.segments[k].point(s)
    }

    pub fn reversed(&self) -> Self {
        Self {
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
            closed: self.closed,
            singular_ends: [self.singular_ends[1], self.singular_ends[0]],
        }
    }

    pub fn translated(&self, delta: Complex64) -> Self {
        Self {
            segments: self.segments.iter().map(|s| s.translated(delta)).collect(),
            closed: self.closed,
            singular_ends: self.singular_ends,
        }
    }

    /// Splits at a global parameter strictly inside the contour.
    pub fn split_at(&self, param: f64) -> Result<(Self, Self)> {
        if !(param > 0.0 && param < 1.0) {
            return Err(Error::InvalidInput(format!("split parameter {param} not in (0, 1)")));
        }
        let (k, s) = self.locate(param);
        let mut left: Vec<Segment> = self.segments[..k].to_vec();
        let mut right: Vec<Segment> = Vec::new();
        if s > 1e-12 && s < 1.0 - 1e-12 {
            let (a, b) = self.segments[k].split(s);
            left.push(a);
            right.push(b);
        } else if s >= 1.0 - 1e-12 {
            left.push(self.segments[k]);
        } else {
            right.push(self.segments[k]);
        }
        right.extend_from_slice(&self.segments[k + 1..]);
        let mut a = Self::new(left, false)?;
        let mut b = Self::new(right, false)?;
        a.singular_ends = [self.singular_ends[0], false];
        b.singular_ends = [false, self.singular_ends[1]];
        Ok((a, b))
    }

    /// Concatenation `self` then `other`; `other` must start where `self` ends.
    pub fn concat(&self, other: &Contour) -> Result<Self> {
        let mut segs = self.segments.clone();
        segs.extend_from_slice(&other.segments);
        let closed = self.closed && other.closed;
        let mut c = Self::new(segs, closed)?;
        c.singular_ends = [self.singular_ends[0], other.singular_ends[1]];
        Ok(c)
    }

    /// Minimum distance from `p` to the contour.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Errors if any point comes within `min_dist` of the contour, except
    /// points sitting exactly on a declared singular endpoint.
    pub fn check_clearance(&self, points: &[Complex64], min_dist: f64) -> Result<()> {
        for p in points {
            let at_end = (self.singular_ends[0] && (*p - self.start()).norm() < 1e-12 * (1.0 + p.norm()))
                || (self.singular_ends[1] && (*p - self.end()).norm() < 1e-12 * (1.0 + p.norm()));
            if at_end {
                continue;
            }
            let d = self.distance_to(*p);
            if d < min_dist {
                return Err(Error::Geometry(format!(
                    "contour passes within {d:e} of singular point {p}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_broken_chains() {
        let a = Segment::line(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let b = Segment::line(c(1.5, 0.0), c(2.0, 0.0)).unwrap();
        assert!(Contour::new(vec![a, b], false).is_err());
        assert!(Segment::line(c(1.0, 1.0), c(1.0, 1.0)).is_err());
        assert!(Contour::new(vec![a], true).is_err());
    }

    #[test]
    fn arc_distance() {
        let circ = Contour::circle(c(0.0, 0.0), 1.0, 0.0, true).unwrap();
        assert!((circ.distance_to(c(0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((circ.distance_to(c(0.0, 2.0)) - 1.0).abs() < 1e-15);
        let half = Segment::arc(c(0.0, 0.0), 1.0, 0.0, std::f64::consts::PI).unwrap();
        assert!((half.distance_to(c(0.0, -2.0)) - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn split_and_reverse_keep_endpoints() {
        let k = Contour::polyline(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0)]).unwrap();
        let (a, b) = k.split_at(0.25).unwrap();
        assert_eq!(a.start(), k.start());
        assert_eq!(b.end(), k.end());
        assert!((a.end() - c(0.5, 0.0)).norm() < 1e-15);
        let r = k.reversed();
        assert_eq!(r.start(), k.end());
        assert_eq!(r.end(), k.start());
    }

    #[test]
    fn clearance() {
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))
            .unwrap()
            .with_singular_ends(true, true)
            .unwrap();
        assert!(k.check_clearance(&[c(0.0, 0.0), c(1.0, 0.0)], 1e-6).is_ok());
        assert!(k.check_clearance(&[c(0.5, 1e-8)], 1e-6).is_err());
    }
}
