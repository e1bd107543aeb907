//! Genus-one potentials
//! `P_γ(z) = ∫_γ θ'(0)θ(z - t + η) / (θ(η)θ(z - t)) · W(z)/W(t) dt`,
//! `W(x) = Π_i θ(x - u_i)^{s_i} · θ(x)^{s_{n+1}} · e^{bx}`, `η = Σ s_i u_i + a`,
//! with closed-form derivatives in `z`, `u_i` and `τ`, quasi-periodicity and
//! pole certificates, rank probes and hydrodynamic extraction.
//!
//! The modulus `τ` is a field. Its derivative is taken along
//! `a(τ) = a + b(τ - τ₀)/(2πi)`, the direction in which the closed form holds
//! for every `b`; the derivative at fixed `a` differs by `-(b/2πi) ∂P/∂a` and
//! is available separately.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contours::symbolic::{ContourSpec, NamedContour, PointContext};
use crate::contours::{
    integrate_continued, monodromy_factor, BranchFactor, BranchInit, BranchTrack, BranchedWeight, Contour,
    ExponentFn,
};
use crate::error::{Error, Result};
use crate::hydro::{self, Families, HydroSystem};
use crate::numerics::{centroid, finite_diff5, AnnulusSampler, RankCertificate, ToleranceConfig};
use crate::theta::{theta, theta_jet, LatticeParam, THETA_TOL};

type C = Complex64;

const I: C = C::new(0.0, 1.0);
const SAMPLE_CLEARANCE: f64 = 0.1;
const PATH_CLEARANCE: f64 = 0.02;
/// Lattice translates `m + nτ`, `|m|, |n| <= SHIFT_RANGE`, considered near the sample region.
const SHIFT_RANGE: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genus1Config {
    pub u: Vec<C>,
    /// Exponents at `u_1..u_n` and at 0; they sum to zero.
    pub s: Vec<f64>,
    pub a: C,
    pub b: C,
    pub tau: LatticeParam,
    pub contours: Vec<NamedContour>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

/// `f_{γ,i}` for the points `u_1..u_n, 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FCoefficientsG1 {
    pub f: Vec<C>,
}

/// Which `τ`-derivative fills the last field slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSlot {
    /// Along `a(τ) = a + b(τ - τ₀)/(2πi)`.
    Flow,
    /// With `a` held fixed.
    FixedA,
}

impl Genus1Config {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// `u_1..u_n, 0`.
    pub fn punctures(&self) -> Vec<C> {
        let mut p = self.u.clone();
        p.push(C::new(0.0, 0.0));
        p
    }

    pub fn eta(&self) -> C {
        self.u.iter().zip(&self.s).map(|(u, s)| *s * u).sum::<C>() + self.a
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

    /// Copy at modulus `tau` with `a` held fixed.
    pub fn with_tau(&self, tau: C) -> Result<Self> {
        let mut out = self.clone();
        out.tau = LatticeParam::new(tau)?;
        Ok(out)
    }

    /// Copy at modulus `tau` with `a` moved along `a + b(τ - τ₀)/(2πi)`.
    pub fn with_tau_flow(&self, tau: C) -> Result<Self> {
        let mut out = self.with_tau(tau)?;
        out.a = self.a + self.b * (tau - self.tau.tau()) / (2.0 * PI * I);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Configuration("genus1: at least one puncture u_1 is required".into()));
        }
        if self.s.len() != n + 1 {
            return Err(Error::Configuration(format!(
                "genus1: s must have n+1 = {} entries, got {}",
                n + 1,
                self.s.len()
            )));
        }
        let sum: f64 = self.s.iter().sum();
        if sum.abs() > 1e-12 {
            return Err(Error::Configuration(format!(
                "genus1: the exponents s must sum to zero, got Σs = {sum:e}"
            )));
        }
        let pts = self.punctures();
        for i in 0..pts.len() {
            for j in 0..i {
                if self.tau.distance(pts[i] - pts[j]) < 1e-9 {
                    return Err(Error::Configuration(format!(
                        "genus1: punctures {} and {} coincide modulo the lattice",
                        pts[i], pts[j]
                    )));
                }
            }
        }
        let eta = self.eta();
        if self.tau.distance(eta) < 1e-3 {
            return Err(Error::Configuration(format!(
                "genus1: η = {eta} lies within 1e-3 of a lattice point (θ(η) vanishes)"
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.contours {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Configuration(format!("genus1: duplicate contour name {:?}", c.name)));
            }
        }
        self.tolerances.validate().map_err(|e| Error::Configuration(e.to_string()))?;
        Model::new(self, self.tolerances.quad_tol)?;
        Ok(())
    }
}

struct Resolved {
    contour: Contour,
    track: BranchTrack,
}

/// `F = Σ f_j Φ_j`, `-f_l Φ_l` and the `τ`-slot, all divided by `W(z)`.
struct Slots {
    dz: C,
    du: Vec<C>,
    dtau: C,
}

struct Model<'a> {
    cfg: &'a Genus1Config,
    lattice: LatticeParam,
    pts: Vec<C>,
    factors: Vec<BranchFactor>,
    num: BranchedWeight,
    den: BranchedWeight,
    eta: C,
    theta_eta: [C; 2],
    theta_p0: C,
    shifts: Vec<C>,
    z_ref: C,
    tol: f64,
    fixed: BTreeMap<String, Resolved>,
}

impl<'a> Model<'a> {
    fn new(cfg: &'a Genus1Config, tol: f64) -> Result<Self> {
        let n = cfg.n();
        if cfg.s.len() != n + 1 {
            return Err(Error::Configuration(format!("s must have {} entries", n + 1)));
        }
        let lattice = cfg.tau;
        let pts = cfg.punctures();
        let factors: Vec<BranchFactor> = pts
            .iter()
            .map(|&c| BranchFactor::Theta { center: c, lattice })
            .collect();
        let b = cfg.b;
        let entire: Option<ExponentFn> = (b != C::new(0.0, 0.0)).then(|| {
            let f: ExponentFn = Arc::new(move |x: C| b * x);
            f
        });
        let num = BranchedWeight::new(factors.clone(), cfg.s.clone(), entire)?;
        let den = num.reciprocal();
        let eta = cfg.eta();
        let je = theta_jet(eta, lattice, THETA_TOL);
        if je[0].norm() < 1e-12 {
            return Err(Error::Configuration(format!("θ(η) vanishes at η = {eta}")));
        }
        let theta_p0 = theta_jet(C::new(0.0, 0.0), lattice, THETA_TOL)[1];
        let mut shifts = Vec::new();
        for m in -SHIFT_RANGE..=SHIFT_RANGE {
            for k in -SHIFT_RANGE..=SHIFT_RANGE {
                shifts.push(m as f64 + k as f64 * lattice.tau());
            }
        }
        let mut model = Self {
            cfg,
            lattice,
            pts,
            factors,
            num,
            den,
            eta,
            theta_eta: [je[0], je[1]],
            theta_p0,
            shifts,
            z_ref: C::new(0.0, 0.0),
            tol,
            fixed: BTreeMap::new(),
        };
        for nc in &cfg.contours {
            if nc.spec.depends_on_z() {
                continue;
            }
            let contour = model.resolve(&nc.spec, None)?;
            model.check_contour(&nc.name, &contour)?;
            let track = BranchTrack::new(&model.factors, &contour, BranchInit::Principal)?;
            model.fixed.insert(nc.name.clone(), Resolved { contour, track });
        }
        model.z_ref = model.pick_reference()?;
        Ok(model)
    }

    fn resolve(&self, spec: &ContourSpec, z: Option<C>) -> Result<Contour> {
        let ctx = PointContext {
            u: &self.cfg.u,
            z,
            tau: Some(self.lattice.tau()),
        };
        spec.resolve(&ctx, &self.factors)
    }

    fn check_contour(&self, name: &str, contour: &Contour) -> Result<()> {
        if contour.is_closed() {
            let mu = monodromy_factor(&self.den, contour)?;
            if (mu - 1.0).norm() > 1e-9 {
                return Err(Error::Configuration(format!(
                    "contour {name:?} is closed but the weight changes by {mu} around it; use an arc between punctures or their lattice translates"
                )));
            }
            return Ok(());
        }
        let sing = contour.singular_ends();
        for (k, p) in [contour.start(), contour.end()].into_iter().enumerate() {
            if !sing[k] {
                return Err(Error::Configuration(format!(
                    "contour {name:?} ends at {p}, which is not a puncture or a lattice translate of one"
                )));
            }
            let j = self.puncture_index(p).expect("singular end is a puncture");
            if self.cfg.s[j] >= 1.0 {
                return Err(Error::Configuration(format!(
                    "contour {name:?} ends at a puncture with exponent s = {} >= 1; the integral diverges",
                    self.cfg.s[j]
                )));
            }
        }
        Ok(())
    }

    fn puncture_index(&self, p: C) -> Option<usize> {
        self.pts.iter().position(|q| self.lattice.lattice_point(p - q).is_some())
    }

    fn min_contour_distance(&self, z: C) -> f64 {
        self.fixed
            .values()
            .flat_map(|r| self.shifts.iter().map(move |s| r.contour.distance_to(z - s)))
            .fold(f64::INFINITY, f64::min)
    }

    fn puncture_distance(&self, z: C) -> f64 {
        self.pts
            .iter()
            .map(|p| self.lattice.distance(z - p))
            .fold(f64::INFINITY, f64::min)
    }

    /// First point of a fixed pattern around the centroid that keeps clear of
    /// punctures and contour translates.
    fn pick_reference(&self) -> Result<C> {
        let c = centroid(&self.pts);
        for r in [0.7, 1.0, 0.45, 1.3] {
            for k in 0..8 {
                let z = c + C::from_polar(r, 0.3 + k as f64 * PI / 4.0);
                if self.puncture_distance(z) > 0.15 && self.min_contour_distance(z) > 0.15 {
                    return Ok(z);
                }
            }
        }
        Err(Error::DegenerateConfiguration(
            "no reference point clear of the contours was found".into(),
        ))
    }

    fn theta(&self, z: C) -> C {
        theta(z, self.lattice, THETA_TOL)
    }

    fn numerator(&self, z: C) -> Result<(C, Vec<C>)> {
        if self.puncture_distance(z) < 1e-12 {
            return Err(Error::Geometry(format!("{z} is congruent to a puncture")));
        }
        let logs: Vec<C> = if (z - self.z_ref).norm() < 1e-12 {
            self.factors.iter().map(|f| f.eval(z, None).ln()).collect()
        } else {
            let path = Contour::segment(self.z_ref, z)?;
            BranchTrack::new(&self.factors, &path, BranchInit::Principal)?.end_logs()
        };
        Ok((self.num.from_logs(z, &logs), logs))
    }

    fn track_for(&self, name: &str, z: Option<C>, zlogs: Option<&[C]>) -> Result<(Contour, BranchTrack)> {
        if let Some(r) = self.fixed.get(name) {
            return Ok((r.contour.clone(), r.track.clone()));
        }
        let spec = self.cfg.contour(name)?;
        let z = z.ok_or_else(|| Error::InvalidInput(format!("contour {name:?} is anchored at z; a z is required")))?;
        let contour = self.resolve(spec, Some(z))?;
        let logs = match zlogs {
            Some(l) => l.to_vec(),
            None => self.numerator(z)?.1,
        };
        let track = BranchTrack::new(&self.factors, &contour, BranchInit::Continued { point: z, logs })?;
        Ok((contour, track))
    }

    fn kernel_poles(&self, z: C) -> Vec<C> {
        self.shifts.iter().map(|s| z + s).collect()
    }

    fn check_off_contour(&self, z: C, name: &str, contour: &Contour) -> Result<()> {
        let d = self
            .shifts
            .iter()
            .map(|s| contour.distance_to(z - s))
            .fold(f64::INFINITY, f64::min);
        if d < 1e-6 {
            return Err(Error::Geometry(format!(
                "z = {z} lies within 1e-6 of a lattice translate of contour {name:?}"
            )));
        }
        Ok(())
    }

    fn potential(&self, z: C, name: &str) -> Result<(C, f64)> {
        let (wz, logs) = self.numerator(z)?;
        let (contour, track) = self.track_for(name, Some(z), Some(&logs))?;
        self.check_off_contour(z, name, &contour)?;
        let pre = self.theta_p0 / self.theta_eta[0] * wz;
        let eta = self.eta;
        let (v, e) = integrate_continued(
            &track,
            &self.den,
            |node| self.theta(z - node.t + eta) / self.theta(z - node.t),
            &[],
            &self.kernel_poles(z),
            self.tol,
        )?;
        Ok((pre * v, e * pre.norm()))
    }

    /// `∂P/∂a` at fixed `τ`, by quadrature of the differentiated kernel.
    fn potential_da(&self, z: C, name: &str) -> Result<C> {
        let (wz, logs) = self.numerator(z)?;
        let (contour, track) = self.track_for(name, Some(z), Some(&logs))?;
        self.check_off_contour(z, name, &contour)?;
        let [te, tpe] = self.theta_eta;
        let eta = self.eta;
        let (v, _) = integrate_continued(
            &track,
            &self.den,
            |node| {
                let j = theta_jet(z - node.t + eta, self.lattice, THETA_TOL);
                (j[1] * te - j[0] * tpe) / self.theta(z - node.t)
            },
            &[],
            &self.kernel_poles(z),
            self.tol,
        )?;
        Ok(self.theta_p0 / (te * te) * wz * v)
    }

    fn f_coefficients(&self, name: &str, z: Option<C>) -> Result<FCoefficientsG1> {
        let (contour, track) = self.track_for(name, z, None)?;
        let pre = self.theta_p0 * self.theta_p0 / self.theta_eta[0];
        let mut f = Vec::with_capacity(self.pts.len());
        for (j, &p) in self.pts.iter().enumerate() {
            let s = self.cfg.s[j];
            if s == 0.0 {
                f.push(C::new(0.0, 0.0));
                continue;
            }
            let poles: Vec<C> = [contour.start(), contour.end()]
                .into_iter()
                .zip(contour.singular_ends())
                .filter(|(q, sing)| *sing && self.lattice.lattice_point(q - p).is_some())
                .map(|(q, _)| q)
                .collect();
            let eta = self.eta;
            let lattice = self.lattice;
            let (v, _) = integrate_continued(
                &track,
                &self.den,
                |node| self.theta(node.t - p - eta) / node.theta_minus(p, lattice),
                &poles,
                &[],
                self.tol,
            )?;
            f.push(s * pre * v);
        }
        Ok(FCoefficientsG1 { f })
    }

    /// `Φ_j(z) = θ(z - p_j + η)/(θ(η)θ(z - p_j))` and
    /// `Ψ_j(z) = θ'(z - p_j + η)/(2πi θ(η)θ(z - p_j))`.
    fn phis(&self, z: C) -> (Vec<C>, Vec<C>) {
        let te = self.theta_eta[0];
        let mut phi = Vec::with_capacity(self.pts.len());
        let mut psi = Vec::with_capacity(self.pts.len());
        for p in &self.pts {
            let j = theta_jet(z - p + self.eta, self.lattice, THETA_TOL);
            let d = te * self.theta(z - p);
            phi.push(j[0] / d);
            psi.push(j[1] / (2.0 * PI * I * d));
        }
        (phi, psi)
    }

    /// Closed-form derivatives divided by `W(z)`.
    fn slots(&self, z: C, f: &FCoefficientsG1) -> Slots {
        let (phi, psi) = self.phis(z);
        let dz: C = f.f.iter().zip(&phi).map(|(a, b)| a * b).sum();
        let g: C = f.f.iter().zip(&psi).map(|(a, b)| a * b).sum();
        let du = (0..self.cfg.n()).map(|i| -f.f[i] * phi[i]).collect();
        let [te, tpe] = self.theta_eta;
        let dtau = -tpe / (2.0 * PI * I * te) * dz + g;
        Slots { dz, du, dtau }
    }

    fn admissible(&self, z: C) -> bool {
        if self.puncture_distance(z) < SAMPLE_CLEARANCE || self.min_contour_distance(z) < SAMPLE_CLEARANCE {
            return false;
        }
        let len = (z - self.z_ref).norm();
        let steps = (len / (0.5 * PATH_CLEARANCE)).ceil().max(1.0) as usize;
        (0..=steps).all(|k| {
            let t = self.z_ref + (z - self.z_ref) * (k as f64 / steps as f64);
            self.puncture_distance(t) >= PATH_CLEARANCE && self.min_contour_distance(t) >= PATH_CLEARANCE
        })
    }

    fn singular_translates(&self) -> Vec<C> {
        self.pts
            .iter()
            .flat_map(|p| self.shifts.iter().map(move |s| p + s))
            .collect()
    }

    fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<C>> {
        let sampler = AnnulusSampler::around(&self.pts);
        let sing = self.singular_translates();
        Ok(sampler.sample(count, &sing, rng, |z| self.admissible(z))?.points().to_vec())
    }
}

/// Weight `W(t)` on the reference branch.
pub fn weight_g1(t: C, cfg: &Genus1Config) -> Result<C> {
    Ok(Model::new(cfg, cfg.tolerances.quad_tol)?.numerator(t)?.0)
}

pub fn potential_g1(z: C, contour: &str, cfg: &Genus1Config) -> Result<(C, f64)> {
    Model::new(cfg, cfg.tolerances.quad_tol)?.potential(z, contour)
}

/// `f_{γ,i} = s_i θ'(0)²/θ(η) ∫_γ θ(t - p_i - η)/(θ(t - p_i) W(t)) dt`,
/// continued analytically where the endpoint integral diverges.
pub fn f_coefficients_g1(contour: &str, cfg: &Genus1Config, z: Option<C>) -> Result<FCoefficientsG1> {
    Model::new(cfg, cfg.tolerances.quad_tol)?.f_coefficients(contour, z)
}

/// Closed forms `(∂P/∂z, ∂P/∂u_i, ∂P/∂τ)`; the `τ`-derivative is along
/// `a(τ)` (see the module notes).
pub fn dp_closed_g1(z: C, contour: &str, cfg: &Genus1Config) -> Result<(C, Vec<C>, C)> {
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let (wz, _) = model.numerator(z)?;
    let f = model.f_coefficients(contour, Some(z))?;
    let s = model.slots(z, &f);
    Ok((s.dz * wz, s.du.iter().map(|d| d * wz).collect(), s.dtau * wz))
}

/// `∂P/∂a` at fixed `τ`.
pub fn dp_da_g1(z: C, contour: &str, cfg: &Genus1Config) -> Result<C> {
    Model::new(cfg, cfg.tolerances.quad_tol)?.potential_da(z, contour)
}

/// `∂P/∂τ` with `a` held fixed: the closed form minus `(b/2πi) ∂P/∂a`.
pub fn dp_dtau_fixed_a_g1(z: C, contour: &str, cfg: &Genus1Config) -> Result<C> {
    let (_, _, flow) = dp_closed_g1(z, contour, cfg)?;
    Ok(flow - cfg.b / (2.0 * PI * I) * dp_da_g1(z, contour, cfg)?)
}

/// Finite-difference derivatives `(∂_z, ∂_{u_i}, ∂_τ along a(τ), ∂_τ at fixed a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffG1 {
    pub dz: C,
    pub du: Vec<C>,
    pub dtau_flow: C,
    pub dtau_fixed_a: C,
}

pub fn dp_finite_diff_g1(z: C, contour: &str, cfg: &Genus1Config, step: f64) -> Result<FiniteDiffG1> {
    let tol = cfg.tolerances.quad_tol;
    let model = Model::new(cfg, tol)?;
    let at = |c: &Genus1Config| -> Result<C> { Ok(Model::new(c, tol)?.potential(z, contour)?.0) };
    let dz = finite_diff5(|w| model.potential(w, contour).map(|v| v.0), z, step)?;
    let mut du = Vec::with_capacity(cfg.n());
    for i in 0..cfg.n() {
        du.push(finite_diff5(|w| at(&cfg.with_u(i, w)), cfg.u[i], step)?);
    }
    let tau = cfg.tau.tau();
    let dtau_flow = finite_diff5(|w| at(&cfg.with_tau_flow(w)?), tau, step)?;
    let dtau_fixed_a = finite_diff5(|w| at(&cfg.with_tau(w)?), tau, step)?;
    Ok(FiniteDiffG1 {
        dz,
        du,
        dtau_flow,
        dtau_fixed_a,
    })
}

/// Cached f-coefficients for the z-independent contours of a model.
struct FCache<'m, 'a> {
    model: &'m Model<'a>,
    fixed: BTreeMap<String, FCoefficientsG1>,
}

impl<'m, 'a> FCache<'m, 'a> {
    fn new(model: &'m Model<'a>, names: &[String]) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for name in names {
            if model.fixed.contains_key(name) && !fixed.contains_key(name) {
                fixed.insert(name.clone(), model.f_coefficients(name, None)?);
            }
        }
        Ok(Self { model, fixed })
    }

    fn get(&self, name: &str, z: C) -> Result<FCoefficientsG1> {
        match self.fixed.get(name) {
            Some(f) => Ok(f.clone()),
            None => self.model.f_coefficients(name, Some(z)),
        }
    }

    /// Field slots of one contour divided by `W(z)`: the `u`-slots then `τ`.
    fn slots(&self, name: &str, z: C, tau_slot: TauSlot) -> Result<(C, Vec<C>)> {
        let f = self.get(name, z)?;
        let s = self.model.slots(z, &f);
        let mut fields = s.du;
        let dtau = match tau_slot {
            TauSlot::Flow => s.dtau,
            TauSlot::FixedA => {
                let (wz, _) = self.model.numerator(z)?;
                s.dtau - self.model.cfg.b / (2.0 * PI * I) * self.model.potential_da(z, name)? / wz
            }
        };
        fields.push(dtau);
        Ok((s.dz, fields))
    }

    fn phi_row(&self, a: &str, b: &str, z: C, tau_slot: TauSlot) -> Result<Vec<C>> {
        let (za, fa) = self.slots(a, z, tau_slot)?;
        let (zb, fb) = self.slots(b, z, tau_slot)?;
        Ok(fa.iter().zip(&fb).map(|(ua, ub)| za * ub - zb * ua).collect())
    }

    fn families(&self, triple: &[String; 3], z: C, tau_slot: TauSlot) -> Result<Families> {
        Ok([
            self.phi_row(&triple[1], &triple[2], z, tau_slot)?,
            self.phi_row(&triple[2], &triple[0], z, tau_slot)?,
            self.phi_row(&triple[0], &triple[1], z, tau_slot)?,
        ])
    }
}

/// `φ_{a,b,l}(z)`: the cross-difference of the `z`- and field-derivatives
/// divided by `W(z)²` (the weight cancels identically, so `φ` is meromorphic).
/// `l = n` (0-based) is the `τ`-slot.
pub fn phi_g1(z: C, contour_a: &str, contour_b: &str, l: usize, cfg: &Genus1Config) -> Result<C> {
    if l > cfg.n() {
        return Err(Error::InvalidInput(format!("field index {l} out of range")));
    }
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let cache = FCache::new(&model, &[contour_a.to_string(), contour_b.to_string()])?;
    Ok(cache.phi_row(contour_a, contour_b, z, TauSlot::Flow)?[l])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiPeriodicityReport {
    /// Worst relative `|φ(z+1) - φ(z)|`.
    pub period_one: f64,
    /// Worst relative `|φ(z+τ) - e^{-4πiη} φ(z)|`.
    pub period_tau: f64,
    /// Worst growth of `|(z - p) φ(z)|` as `z → p` over four approach
    /// directions (about 1 for a simple pole, about 1000 for a double pole).
    pub pole_growth: f64,
    pub samples: usize,
}

impl QuasiPeriodicityReport {
    /// Growth bound separating simple poles from higher-order ones.
    pub const SIMPLE_POLE_GROWTH: f64 = 10.0;
}

fn rel_diff(a: C, b: C) -> f64 {
    let s = a.norm() + b.norm();
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Quasi-periodicity of `φ_{a,b,l}` under `z → z+1` and `z → z+τ`, and the
/// simple-pole property at every puncture. `φ` picks up `e^{-2πiη}` from each
/// of its two factors under `z → z + τ`, hence the multiplier `e^{-4πiη}`.
pub fn quasi_periodicity_check(
    contour_a: &str,
    contour_b: &str,
    l: usize,
    cfg: &Genus1Config,
    sample_count: usize,
    seed: u64,
) -> Result<QuasiPeriodicityReport> {
    if l > cfg.n() {
        return Err(Error::InvalidInput(format!("field index {l} out of range")));
    }
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let cache = FCache::new(&model, &[contour_a.to_string(), contour_b.to_string()])?;
    if !(model.fixed.contains_key(contour_a) && model.fixed.contains_key(contour_b)) {
        return Err(Error::InvalidInput(
            "quasi-periodicity needs contours that do not move with z".into(),
        ));
    }
    let phi = |z: C| -> Result<C> { Ok(cache.phi_row(contour_a, contour_b, z, TauSlot::Flow)?[l]) };
    let tau = model.lattice.tau();
    let mult = (-4.0 * PI * I * model.eta).exp();
    let sampler = AnnulusSampler::around(&model.pts);
    let sing = model.singular_translates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs = sampler.sample(sample_count, &sing, &mut rng, |_| true)?;
    let mut p1: f64 = 0.0;
    let mut pt: f64 = 0.0;
    for &z in zs.points() {
        let v = phi(z)?;
        p1 = p1.max(rel_diff(phi(z + 1.0)?, v));
        pt = pt.max(rel_diff(phi(z + tau)?, mult * v));
    }
    let mut growth: f64 = 0.0;
    for &p in &model.pts {
        for k in 0..4 {
            let dir = C::from_polar(1.0, PI / 4.0 + k as f64 * PI / 2.0 + 0.1);
            let vals: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
                .iter()
                .map(|r| phi(p + dir * *r).map(|v| (v * dir * *r).norm()))
                .collect::<Result<_>>()?;
            if vals[0] > 0.0 {
                growth = growth.max(vals.iter().fold(0.0, |a: f64, b| a.max(*b)) / vals[0]);
            }
        }
    }
    Ok(QuasiPeriodicityReport {
        period_one: p1,
        period_tau: pt,
        pole_growth: growth,
        samples: sample_count,
    })
}

fn rank_of(rows: &[Vec<C>], tol: f64) -> Result<RankCertificate> {
    let max = rows.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        let k = rows.first().map_or(0, Vec::len);
        return Ok(RankCertificate::from_singular_values(vec![0.0; k.min(rows.len())], tol));
    }
    let cert = RankCertificate::from_rows(rows, tol)?;
    if cert.singular_values[0] < 1e-12 {
        return Err(Error::DegenerateConfiguration(format!(
            "rank probe ill-conditioned: largest singular value {:e}",
            cert.singular_values[0]
        )));
    }
    Ok(cert)
}

pub use crate::genus0::SpanMode;

/// Numerical dimension of the span of cross-differences over all contour
/// pairs and all `n+1` field slots, or of the potentials with the constant.
pub fn span_dimension_g1(
    cfg: &Genus1Config,
    contours: &[String],
    mode: SpanMode,
    tau_slot: TauSlot,
    seed: u64,
) -> Result<RankCertificate> {
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let n = cfg.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SpanMode::Cross => {
            if contours.len() < 3 {
                return Err(Error::InvalidInput("cross mode needs at least three contours".into()));
            }
            let pairs: Vec<(usize, usize)> = (0..contours.len())
                .flat_map(|a| (a + 1..contours.len()).map(move |b| (a, b)))
                .collect();
            let cols = pairs.len() * (n + 1);
            let count = (3 * (n + 1) + 5).max(cols + 2);
            let zs = model.sample(count, &mut rng)?;
            let cache = FCache::new(&model, contours)?;
            let mut rows = Vec::with_capacity(count);
            for z in zs {
                let slots: Vec<(C, Vec<C>)> = contours
                    .iter()
                    .map(|c| cache.slots(c, z, tau_slot))
                    .collect::<Result<_>>()?;
                let mut row = Vec::with_capacity(cols);
                for &(a, b) in &pairs {
                    for l in 0..=n {
                        row.push(slots[a].0 * slots[b].1[l] - slots[b].0 * slots[a].1[l]);
                    }
                }
                rows.push(row);
            }
            rank_of(&rows, cfg.tolerances.rank_rel_tol)
        }
        SpanMode::Potentials => {
            let count = (3 * (n + 2) + 5).max(contours.len() + 3);
            let zs = model.sample(count, &mut rng)?;
            let mut rows = Vec::with_capacity(count);
            for z in zs {
                let mut row = Vec::with_capacity(contours.len() + 1);
                for c in contours {
                    row.push(model.potential(z, c)?.0);
                }
                row.push(C::new(1.0, 0.0));
                rows.push(row);
            }
            rank_of(&rows, cfg.tolerances.rank_rel_tol)
        }
    }
}

/// Field names `u1..un, tau`.
pub fn field_names_g1(n: usize) -> Vec<String> {
    let mut f: Vec<String> = (1..=n).map(|l| format!("u{l}")).collect();
    f.push("tau".into());
    f
}

/// Held-out threshold for genus-one extraction, relative to `residual_tol`.
pub const EXTRACTION_SLACK: f64 = 10.0;

/// Hydrodynamic system for the times of `triple`, with basis functions picked
/// from the sampled cross-differences by column pivoting.
pub fn extract_hydro_g1(cfg: &Genus1Config, triple: &[String; 3], seed: u64) -> Result<(HydroSystem, RankCertificate)> {
    for t in triple {
        cfg.contour(t)?;
    }
    if triple[0] == triple[1] || triple[1] == triple[2] || triple[0] == triple[2] {
        return Err(Error::InvalidInput("the three contours of a triple must be distinct".into()));
    }
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let n = cfg.n();
    let count = 3 * (n + 1) + 5;
    let held = crate::genus0::HELD_OUT;
    let zs = model.sample(count + held, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let cache = FCache::new(&model, triple)?;
    let values: Vec<Families> = zs
        .iter()
        .map(|z| cache.families(triple, *z, TauSlot::Flow))
        .collect::<Result<_>>()?;
    let (sys, cert) = hydro::extract_pivoted(
        triple.clone(),
        field_names_g1(n),
        cfg.tolerances.rank_rel_tol,
        &values[..count],
        &values[count..],
    )?;
    let limit = EXTRACTION_SLACK * cfg.tolerances.residual_tol;
    if sys.held_out_residual > limit {
        return Err(Error::ExtractionFailure(format!(
            "held-out residual {:e} exceeds {limit:e} (fit residual {:e}, rank {})",
            sys.held_out_residual, sys.fit_residual, cert.rank
        )));
    }
    Ok((sys, cert))
}

pub fn hydro_consistency_g1(system: &HydroSystem, cfg: &Genus1Config, seed: u64) -> Result<f64> {
    let model = Model::new(cfg, cfg.tolerances.quad_tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let zs = model.sample(crate::genus0::CONSISTENCY_POINTS, &mut rng)?;
    let cache = FCache::new(&model, &system.triple)?;
    hydro::consistency(system, &mut rng, &zs, |z| cache.families(&system.triple, z, TauSlot::Flow))
}

pub fn sample_points_g1(cfg: &Genus1Config, count: usize, seed: u64) -> Result<Vec<C>> {
    Model::new(cfg, cfg.tolerances.quad_tol)?.sample(count, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genus0::small_circle_constant;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn named(name: &str, spec: ContourSpec) -> NamedContour {
        NamedContour {
            name: name.into(),
            spec,
        }
    }

    pub(crate) fn config_n1() -> Genus1Config {
        Genus1Config {
            u: vec![c(0.35, 0.3)],
            s: vec![0.3, -0.3],
            a: c(0.13, 0.05),
            b: c(0.2, -0.1),
            tau: LatticeParam::new(c(0.0, 1.0)).unwrap(),
            contours: vec![
                named("u1_0", ContourSpec::segment("u1", "0").unwrap()),
                named("u1_u1+1", ContourSpec::segment("u1", "u1+1").unwrap()),
                named("u1_u1+tau", ContourSpec::segment("u1", "u1+tau").unwrap()),
                named("0_1", ContourSpec::segment("0", "1").unwrap()),
                named("small", ContourSpec::circle("z", 0.01).unwrap()),
            ],
            tolerances: ToleranceConfig::default(),
        }
    }

    #[test]
    fn trivial_weight_and_small_circle() {
        let mut cfg = config_n1();
        let z = sample_points_g1(&cfg, 1, 3).unwrap()[0];
        let (p, _) = potential_g1(z, "small", &cfg).unwrap();
        assert!((p - small_circle_constant()).norm() < 1e-6, "{p}");
        let (dz, du, dt) = dp_closed_g1(z, "small", &cfg).unwrap();
        assert!(dz.norm() < 1e-8 && du[0].norm() < 1e-8 && dt.norm() < 1e-8);
        cfg.s = vec![0.0, 0.0];
        cfg.b = c(0.0, 0.0);
        assert!((weight_g1(c(0.6, 0.4), &cfg).unwrap() - 1.0).norm() < 1e-15);
        let (p, _) = potential_g1(z, "small", &cfg).unwrap();
        assert!((p - small_circle_constant()).norm() < 1e-6);
    }

    #[test]
    fn weight_period_one_multiplier() {
        // continuing W from t to t + 1 along a horizontal path multiplies by Π(-1)^{s_i} e^b
        let cfg = config_n1();
        let model = Model::new(&cfg, 1e-10).unwrap();
        let t = c(0.1, 0.75);
        let path = Contour::segment(t, t + 1.0).unwrap();
        let track = BranchTrack::new(&model.factors, &path, BranchInit::Principal).unwrap();
        let w0 = model.num.from_logs(t, &track.logs_at(0, 0.0, None));
        let w1 = model.num.from_logs(t + 1.0, &track.end_logs());
        // each θ(x - p) changes sign; the continued phase of each factor is ±π
        let logs0 = track.logs_at(0, 0.0, None);
        let logs1 = track.end_logs();
        let mut want = cfg.b.exp();
        for (j, s) in cfg.s.iter().enumerate() {
            let turn = (logs1[j] - logs0[j]).im;
            assert!((turn.abs() - PI).abs() < 1e-9, "{turn}");
            want *= C::from_polar(1.0, s * turn);
        }
        assert!((w1 / w0 - want).norm() < 1e-10);
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        let mut cfg = config_n1();
        cfg.tolerances.quad_tol = 1e-12;
        let zs = sample_points_g1(&cfg, 2, 5).unwrap();
        for name in ["u1_0", "u1_u1+1", "u1_u1+tau"] {
            for &z in &zs {
                let (p, _) = potential_g1(z, name, &cfg).unwrap();
                let (dz, du, dt) = dp_closed_g1(z, name, &cfg).unwrap();
                let fd = dp_finite_diff_g1(z, name, &cfg, 1e-3).unwrap();
                let sc = p.norm().max(1.0);
                assert!((dz - fd.dz).norm() / sc < 1e-6, "{name} z {dz} {}", fd.dz);
                assert!((du[0] - fd.du[0]).norm() / sc < 1e-6, "{name} u {} {}", du[0], fd.du[0]);
                assert!((dt - fd.dtau_flow).norm() / sc < 1e-5, "{name} tau {dt} {}", fd.dtau_flow);
                let fixed = dp_dtau_fixed_a_g1(z, name, &cfg).unwrap();
                assert!((fixed - fd.dtau_fixed_a).norm() / sc < 1e-5, "{name} fixed {fixed} {}", fd.dtau_fixed_a);
            }
        }
    }

    #[test]
    fn quasi_periodicity_and_poles() {
        let cfg = config_n1();
        for l in 0..2 {
            let r = quasi_periodicity_check("u1_0", "u1_u1+1", l, &cfg, 6, 1).unwrap();
            assert!(r.period_one < 1e-7 && r.period_tau < 1e-7, "{r:?}");
            assert!(r.pole_growth < QuasiPeriodicityReport::SIMPLE_POLE_GROWTH, "{r:?}");
        }
        let r = quasi_periodicity_check("u1_0", "u1_0", 0, &cfg, 3, 1).unwrap();
        assert_eq!((r.period_one, r.period_tau), (0.0, 0.0));
    }

    #[test]
    fn phi_matches_cross_difference() {
        let cfg = config_n1();
        let z = sample_points_g1(&cfg, 1, 8).unwrap()[0];
        let (za, ua, ta) = dp_closed_g1(z, "u1_0", &cfg).unwrap();
        let (zb, ub, tb) = dp_closed_g1(z, "0_1", &cfg).unwrap();
        let w = weight_g1(z, &cfg).unwrap();
        let cross_u = (za * ub[0] - zb * ua[0]) / (w * w);
        let cross_t = (za * tb - zb * ta) / (w * w);
        assert!((phi_g1(z, "u1_0", "0_1", 0, &cfg).unwrap() - cross_u).norm() < 1e-10 * cross_u.norm().max(1.0));
        assert!((phi_g1(z, "u1_0", "0_1", 1, &cfg).unwrap() - cross_t).norm() < 1e-10 * cross_t.norm().max(1.0));
    }

    #[test]
    fn rank_certificates_n1() {
        let cfg = config_n1();
        let names: Vec<String> = ["u1_0", "u1_u1+1", "u1_u1+tau", "0_1"].iter().map(|s| s.to_string()).collect();
        let cross = span_dimension_g1(&cfg, &names, SpanMode::Cross, TauSlot::Flow, 2).unwrap();
        assert_eq!(cross.rank, 2, "{:?}", cross.singular_values);
        let pots = span_dimension_g1(&cfg, &names, SpanMode::Potentials, TauSlot::Flow, 2).unwrap();
        assert_eq!(pots.rank, 3, "{:?}", pots.singular_values);
    }

    #[test]
    fn extraction_n1() {
        let cfg = config_n1();
        let triple = ["u1_0".to_string(), "u1_u1+1".to_string(), "u1_u1+tau".to_string()];
        let (sys, cert) = extract_hydro_g1(&cfg, &triple, 3).unwrap();
        assert_eq!(cert.rank, 2);
        assert_eq!(sys.rows(), 2);
        assert_eq!(sys.a[0].len(), 2);
        assert!(sys.held_out_residual < 1e-7, "{}", sys.held_out_residual);
        let r = hydro_consistency_g1(&sys, &cfg, 4).unwrap();
        assert!(r < 1e-6, "{r}");
        let r = hydro_consistency_g1(&sys.with_scaled_a(0, 0, 1.1), &cfg, 4).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn constant_contour_in_triple_gives_zero_block() {
        let cfg = config_n1();
        let triple = ["small".to_string(), "u1_0".to_string(), "u1_u1+1".to_string()];
        let (sys, _) = extract_hydro_g1(&cfg, &triple, 3).unwrap();
        assert!(sys.b.iter().flatten().all(|v| v.norm() == 0.0));
        assert!(sys.c.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn translation_invariance_with_inert_origin() {
        // exponent 0 at the origin: translating z, the u_i and the contour leaves P unchanged
        let cfg = Genus1Config {
            u: vec![c(0.3, 0.25), c(0.62, 0.55)],
            s: vec![0.27, -0.27, 0.0],
            a: c(0.11, 0.07),
            b: c(0.15, 0.1),
            tau: LatticeParam::new(c(0.2, 1.1)).unwrap(),
            contours: vec![named("u1_u2", ContourSpec::segment("u1", "u2").unwrap())],
            tolerances: ToleranceConfig::default(),
        };
        let z = c(0.9, 0.1);
        let delta = c(0.04, -0.03);
        let mut moved = cfg.clone();
        for u in moved.u.iter_mut() {
            *u += delta;
        }
        let p0 = potential_g1(z, "u1_u2", &cfg).unwrap().0;
        let p1 = potential_g1(z + delta, "u1_u2", &moved).unwrap().0;
        assert!((p0 - p1).norm() < 1e-8, "{p0} vs {p1}");
    }

    #[test]
    fn validation() {
        let mut cfg = config_n1();
        cfg.s = vec![0.3, -0.2];
        match cfg.validate() {
            Err(Error::Configuration(m)) => assert!(m.contains("sum to zero")),
            other => panic!("{other:?}"),
        }
        let mut cfg = config_n1();
        cfg.contours.push(named("circ", ContourSpec::circle("u1", 0.1).unwrap()));
        assert!(cfg.validate().is_err());
        assert!(config_n1().validate().is_ok());
    }
}
