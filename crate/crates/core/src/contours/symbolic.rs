//! Contours described by named points (`"u1"`, `"0"`, `"1"`, `"z"`, lattice
//! translates such as `"u1+tau"`), resolved to geometry once the field values
//! are known. Re-resolving after moving a field moves every anchored piece
//! with it.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BranchFactor, Contour};
use crate::error::{Error, Result};

/// Base point of a named reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// `u_k`, 1-based.
    U(usize),
    Zero,
    One,
    Z,
}

/// A point given by name with an optional lattice shift `m + nτ`, or numerically.
#[derive(Debug, Clone, PartialEq)]
pub enum PointRef {
    Named { anchor: Anchor, m: i64, n: i64 },
    Numeric(Complex64),
}

impl PointRef {
    pub fn is_z(&self) -> bool {
        matches!(self, PointRef::Named { anchor: Anchor::Z, .. })
    }

    pub fn resolve(&self, ctx: &PointContext<'_>) -> Result<Complex64> {
        match *self {
            PointRef::Numeric(c) => Ok(c),
            PointRef::Named { anchor, m, n } => {
                let base = match anchor {
                    Anchor::U(k) => *ctx.u.get(k.wrapping_sub(1)).ok_or_else(|| {
                        Error::Configuration(format!("contour refers to u{k} but there are {} punctures", ctx.u.len()))
                    })?,
                    Anchor::Zero => Complex64::new(0.0, 0.0),
                    Anchor::One => Complex64::new(1.0, 0.0),
                    Anchor::Z => ctx
                        .z
                        .ok_or_else(|| Error::Configuration("contour refers to z but no z was given".into()))?,
                };
                let shift = if n != 0 {
                    let tau = ctx.tau.ok_or_else(|| {
                        Error::Configuration("a tau-translate needs a lattice (genus one only)".into())
                    })?;
                    tau * n as f64
                } else {
                    Complex64::new(0.0, 0.0)
                };
                Ok(base + m as f64 + shift)
            }
        }
    }
}

impl fmt::Display for PointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointRef::Numeric(c) => write!(f, "[{}, {}]", c.re, c.im),
            PointRef::Named { anchor, m, n } => {
                match anchor {
                    Anchor::U(k) => write!(f, "u{k}")?,
                    Anchor::Zero => write!(f, "0")?,
                    Anchor::One => write!(f, "1")?,
                    Anchor::Z => write!(f, "z")?,
                }
                for _ in 0..m.unsigned_abs() {
                    write!(f, "{}1", if *m > 0 { '+' } else { '-' })?;
                }
                for _ in 0..n.unsigned_abs() {
                    write!(f, "{}tau", if *n > 0 { '+' } else { '-' })?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PointRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if text.starts_with("tau") {
            text.insert_str(0, "0+");
        }
        let bad = || Error::Configuration(format!("cannot parse contour point {s:?}"));
        if text.is_empty() || !text.is_ascii() {
            return Err(bad());
        }
        let cut = text[1..].find(['+', '-']).map_or(text.len(), |i| i + 1);
        let (head, mut rest) = text.split_at(cut);
        let anchor = match head {
            "0" => Anchor::Zero,
            "1" => Anchor::One,
            "z" => Anchor::Z,
            _ => {
                let k: usize = head.strip_prefix('u').ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Anchor::U(k)
            }
        };
        let (mut m, mut n) = (0i64, 0i64);
        while !rest.is_empty() {
            let sign = match rest.as_bytes()[0] {
                b'+' => 1,
                b'-' => -1,
                _ => return Err(bad()),
            };
            rest = &rest[1..];
            if let Some(r) = rest.strip_prefix("tau") {
                n += sign;
                rest = r;
            } else if let Some(r) = rest.strip_prefix('1') {
                m += sign;
                rest = r;
            } else {
                return Err(bad());
            }
        }
        Ok(PointRef::Named { anchor, m, n })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Name(String),
    Pair([f64; 2]),
}

impl Serialize for PointRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PointRef::Numeric(c) => PointRepr::Pair([c.re, c.im]).serialize(s),
            named => PointRepr::Name(named.to_string()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for PointRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PointRepr::deserialize(d)? {
            PointRepr::Pair([re, im]) => Ok(PointRef::Numeric(Complex64::new(re, im))),
            PointRepr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Field values a descriptor is resolved against.
#[derive(Debug, Clone, Copy)]
pub struct PointContext<'a> {
    pub u: &'a [Complex64],
    pub z: Option<Complex64>,
    pub tau: Option<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

/// Symbolic contour descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ContourSpec {
    Segment {
        from: PointRef,
        to: PointRef,
    },
    Polyline {
        points: Vec<PointRef>,
    },
    Circle {
        center: PointRef,
        radius: f64,
        #[serde(default)]
        orientation: Orientation,
        #[serde(default)]
        start_angle: f64,
    },
}

/// A descriptor with the name configs and reports refer to it by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedContour {
    pub name: String,
    #[serde(flatten)]
    pub spec: ContourSpec,
}

impl ContourSpec {
    pub fn segment(from: &str, to: &str) -> Result<Self> {
        Ok(ContourSpec::Segment {
            from: from.parse()?,
            to: to.parse()?,
        })
    }

    pub fn circle(center: &str, radius: f64) -> Result<Self> {
        Ok(ContourSpec::Circle {
            center: center.parse()?,
            radius,
            orientation: Orientation::Positive,
            start_angle: 0.0,
        })
    }

    /// True when the geometry moves with the evaluation point `z`.
    pub fn depends_on_z(&self) -> bool {
        match self {
            ContourSpec::Segment { from, to } => from.is_z() || to.is_z(),
            ContourSpec::Polyline { points } => points.iter().any(PointRef::is_z),
            ContourSpec::Circle { center, .. } => center.is_z(),
        }
    }

    /// Resolves to geometry. Open ends lying on a zero of one of `factors`
    /// are declared singular.
    pub fn resolve(&self, ctx: &PointContext<'_>, factors: &[BranchFactor]) -> Result<Contour> {
        let contour = match self {
            ContourSpec::Segment { from, to } => Contour::segment(from.resolve(ctx)?, to.resolve(ctx)?)?,
            ContourSpec::Polyline { points } => {
                let pts = points.iter().map(|p| p.resolve(ctx)).collect::<Result<Vec<_>>>()?;
                Contour::polyline(&pts)?
            }
            ContourSpec::Circle {
                center,
                radius,
                orientation,
                start_angle,
            } => Contour::circle(
                center.resolve(ctx)?,
                *radius,
                *start_angle,
                *orientation == Orientation::Positive,
            )?,
        };
        if contour.is_closed() {
            return Ok(contour);
        }
        let on_zero = |p: Complex64| factors.iter().any(|f| f.vanishes_at(p));
        let (a, b) = (on_zero(contour.start()), on_zero(contour.end()));
        contour.with_singular_ends(a, b)
    }
}
