//! Suite runners. Every check becomes one record; a check whose computation
//! fails is recorded as a failure with the error attached.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::contours::symbolic::{ContourSpec, NamedContour};
use crate::contours::{integrate, BranchInit, BranchTrack, BranchedWeight, Contour};
use crate::error::{Error, Result};
use crate::genus0::{self, DeformationSpec, Genus0Config, SpanMode};
use crate::genus1::{self, Genus1Config, QuasiPeriodicityReport, TauSlot};
use crate::hydro::HydroSystem;
use crate::numerics::{fit_polynomial, RankCertificate};
use crate::tauflow::{self, AbstractConfig, Geometry, TauConfig, TauFunction};
use crate::theta::{check_theta_identities, LatticeParam};

use super::config::{ConfigFile, HydroBlock, ThetaBlock};
use super::report::{timed, CheckRecord, VerificationReport};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Theta,
    Fay,
    G0,
    G1,
    Tau,
    Hydro,
    All,
}

impl Suite {
    pub fn label(self) -> &'static str {
        match self {
            Suite::Theta => "theta",
            Suite::Fay => "fay",
            Suite::G0 => "g0",
            Suite::G1 => "g1",
            Suite::Tau => "tau",
            Suite::Hydro => "hydro",
            Suite::All => "all",
        }
    }
}

/// Minimum singular-value gap, in decades, at a certified rank cut.
pub const RANK_GAP_DECADES: f64 = 2.0;
pub const FD_SAMPLES_G0: usize = 20;
pub const FD_SAMPLES_G1: usize = 3;
pub const QUASI_PERIOD_SAMPLES: usize = 8;
/// `z`-rows appended to the connection matrices.
pub const CURVATURE_Z_ROWS: usize = 5;

fn check(name: String, anchor: &str, threshold: f64, f: impl FnOnce() -> Result<f64>) -> CheckRecord {
    match f() {
        Ok(r) => CheckRecord::asserted(name, anchor, r, threshold),
        Err(e) => CheckRecord::failed(name, anchor, threshold, e),
    }
}

fn measure(name: String, anchor: &str, f: impl FnOnce() -> Result<f64>) -> CheckRecord {
    match f() {
        Ok(r) => CheckRecord::measured(name, anchor, r),
        Err(e) => CheckRecord::measured(name, anchor, f64::NAN).with_note(e.to_string()),
    }
}

/// Sample points drawn once per suite; a sampling failure fails every check using them.
fn points(zs: &Result<Vec<C>>) -> Result<&[C]> {
    zs.as_deref().map_err(|e| Error::DegenerateConfiguration(e.to_string()))
}

fn rel_err(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Two records for a rank claim: the rank itself and the gap at the cut.
fn rank_records(prefix: &str, anchor: &str, cert: Result<RankCertificate>, want: usize) -> Vec<CheckRecord> {
    match cert {
        Ok(c) => vec![
            CheckRecord::asserted(format!("{prefix}.rank"), anchor, c.rank.abs_diff(want) as f64, 0.0)
                .with_note(format!("rank {} (expected {want})", c.rank)),
            CheckRecord::asserted(
                format!("{prefix}.gap"),
                anchor,
                10f64.powf(-c.gap_decades),
                10f64.powf(-RANK_GAP_DECADES),
            )
            .with_note(format!("gap {:.1} decades", c.gap_decades)),
        ],
        Err(e) => vec![
            CheckRecord::failed(format!("{prefix}.rank"), anchor, 0.0, &e),
            CheckRecord::failed(format!("{prefix}.gap"), anchor, 10f64.powf(-RANK_GAP_DECADES), e),
        ],
    }
}

pub fn theta_suite(block: &ThetaBlock, seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    for (k, tau) in block.tau.iter().enumerate() {
        let rep = check_theta_identities(*tau, block.samples, seed.wrapping_add(k as u64));
        let tag = format!("theta.tau{k}");
        let anchor = "theta function identities";
        for (name, v) in [
            ("parity", rep.parity),
            ("period_one", rep.period_one),
            ("period_tau", rep.period_tau),
            ("heat", rep.heat),
            ("addition", rep.addition),
        ] {
            out.push(CheckRecord::asserted(format!("{tag}.{name}"), anchor, v, 1e-9).with_note(format!("tau = {}", tau.tau())));
        }
    }
    out
}

pub fn fay_suite(lattice: LatticeParam, seed: u64) -> Vec<CheckRecord> {
    let anchor = "Fay identity for (q, E, theta)";
    let mut out = vec![
        check("fay.theta".into(), anchor, 1e-9, || {
            tauflow::fay_residual(&tauflow::ThetaGeometry::new(lattice), 50, seed)
        }),
        check("fay.rational".into(), anchor, 1e-12, || {
            tauflow::fay_residual(&tauflow::RationalGeometry { linear: true }, 50, seed)
        }),
        check("fay.rational_constant".into(), anchor, 1e-12, || {
            tauflow::fay_residual(&tauflow::RationalGeometry { linear: false }, 50, seed)
        }),
        check("fay.theta.coincident_points".into(), anchor, 1e-9, || {
            let u = C::new(0.21, 0.13);
            Ok(tauflow::fay_residual_at(
                &tauflow::ThetaGeometry::new(lattice),
                &[C::new(0.1, -0.05)],
                [u, u, C::new(0.4, -0.2), C::new(-0.1, 0.3)],
            ))
        }),
    ];
    for p in TauFunction::partitions_up_to(4) {
        out.push(check(format!("fay.kp.{p:?}"), "KP Fay identity of Schur tau-functions", 1e-10, || {
            Ok(tauflow::tau_fay_check(&TauFunction::new(p.clone(), 4)?, 50, seed))
        }));
    }
    out
}

fn fixed_names<'a>(contours: impl IntoIterator<Item = &'a NamedContour>) -> Vec<String> {
    contours
        .into_iter()
        .filter(|c| !c.spec.depends_on_z())
        .map(|c| c.name.clone())
        .collect()
}

fn with_small_circle(contours: &mut Vec<NamedContour>) -> String {
    if let Some(c) = contours.iter().find(|c| matches!(c.spec, ContourSpec::Circle { ref center, .. } if center.is_z())) {
        return c.name.clone();
    }
    let name = "small-circle".to_string();
    contours.push(NamedContour {
        name: name.clone(),
        spec: ContourSpec::circle("z", 0.01).expect("valid descriptor"),
    });
    name
}

fn tightened<T: Clone>(cfg: &T, tol: impl Fn(&mut T)) -> T {
    let mut out = cfg.clone();
    tol(&mut out);
    out
}

pub fn genus0_suite(cfg: &Genus0Config, seed: u64, fd_samples: usize) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let n = cfg.n();
    let names = cfg.contour_names();
    let fixed = fixed_names(&cfg.contours);
    let fd_cfg = tightened(cfg, |c| c.tolerances.quad_tol = c.tolerances.quad_tol.min(1e-12));
    let zs = genus0::sample_points_g0(cfg, fd_samples, seed);
    for name in &names {
        out.push(check(format!("g0.derivatives.{name}"), "genus-0 closed-form derivatives", 1e-6, || {
            let zs = points(&zs)?;
            let mut worst: f64 = 0.0;
            for &z in zs {
                let (dz, du) = genus0::dp_closed_g0(z, name, &fd_cfg)?;
                let (fz, fu) = genus0::dp_finite_diff_g0(z, name, &fd_cfg, None, cfg.tolerances.fd_step)?;
                worst = worst.max(rel_err(dz, fz));
                for (a, b) in du.iter().zip(&fu) {
                    worst = worst.max(rel_err(*a, *b));
                }
            }
            Ok(worst)
        }));
        out.push(check(format!("g0.sum_rule.{name}"), "f-coefficients sum to zero", 1e-8, || {
            let z = points(&zs)?[0];
            let f = genus0::f_coefficients_g0(name, cfg, Some(z))?;
            let scale = f.f.iter().map(|v| v.norm()).sum::<f64>().max(1.0);
            Ok(f.sum().norm() / scale)
        }));
    }
    out.extend(rank_records(
        "g0.cross_span",
        "cross-difference span has dimension n",
        genus0::span_dimension_g0(cfg, &fixed, SpanMode::Cross, seed),
        n,
    ));
    out.extend(rank_records(
        "g0.potential_span",
        "potentials with constants span n+2 dimensions",
        genus0::span_dimension_g0(cfg, &fixed, SpanMode::Potentials, seed),
        n + 2,
    ));
    if n >= 2 {
        for (a, ca) in fixed.iter().enumerate() {
            for cb in &fixed[a + 1..] {
                out.push(check(format!("g0.phi_polynomial.{ca}.{cb}"), "phi is a polynomial of degree n-1", 1e-8, || {
                    let zs = genus0::sample_points_g0(cfg, 2 * n + 6, seed ^ 0x5eed)?;
                    let mut worst: f64 = 0.0;
                    for l in 0..n {
                        let vals: Vec<C> =
                            zs.iter().map(|z| genus0::phi_g0(*z, ca, cb, l, cfg)).collect::<Result<_>>()?;
                        let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
                        if scale == 0.0 {
                            continue;
                        }
                        let (_, res) = fit_polynomial(&zs, &vals, n - 1)?;
                        worst = worst.max(res / scale);
                    }
                    Ok(worst)
                }));
            }
        }
    }
    let mut circ = cfg.clone();
    let small = with_small_circle(&mut circ.contours);
    out.push(check("g0.small_circle".into(), "small circle around z gives -2 pi i", 1e-6, || {
        let z = points(&zs)?[0];
        Ok((genus0::potential_g0(z, &small, &circ, None)?.0 - genus0::small_circle_constant()).norm())
    }));
    if fixed.len() >= 2 {
        let mut d = DeformationSpec::trivial(n);
        d.d[n + 2] = 2;
        d.v[n + 2] = vec![C::new(0.3, 0.1)];
        out.push(measure("g0.deformed.cross_rank".into(), "deformed potentials, cross-difference rank", || {
            Ok(genus0::deformed_cross_rank_g0(cfg, &d, &fixed[..fixed.len().min(3)], seed, 1e-3)?.0.rank as f64)
        }));
    }
    out
}

/// Gauss hypergeometric and Beta-integral cross-checks of the quadrature,
/// independent of any configuration.
pub fn oracle_suite() -> Vec<CheckRecord> {
    let c = C::new;
    let hyp = check("oracle.hypergeometric".into(), "one-puncture potential equals a 2F1 series", 1e-8, || {
        let (s2, s3) = (0.23, -0.31);
        let cfg = Genus0Config {
            u: vec![c(0.5, 2.0)],
            s: vec![0.0, s2, s3],
            contours: vec![NamedContour {
                name: "0_1".into(),
                spec: ContourSpec::segment("0", "1")?,
            }],
            tolerances: Default::default(),
        };
        let z = c(1.5, 1.2);
        let (p, _) = genus0::potential_g0(z, "0_1", &cfg, None)?;
        let pz = z.powf(s2) * (z - 1.0).powf(s3);
        let beta = libm::tgamma(1.0 - s2) * libm::tgamma(1.0 - s3) / libm::tgamma(2.0 - s2 - s3);
        let f = genus0::hyp2f1_oracle(1.0, 1.0 - s2, 2.0 - s2 - s3, 1.0 / z)?;
        let want = pz * C::from_polar(1.0, -PI * s3) * beta * f / z;
        Ok((p - want).norm())
    });
    let beta = check("oracle.beta_integral".into(), "endpoint-singular quadrature equals Beta(a, b)", 1e-10, || {
        let (a, b) = (0.7, 0.8);
        let w = BranchedWeight::power(&[c(0.0, 0.0), c(1.0, 0.0)], &[a - 1.0, b - 1.0])?;
        let k = Contour::segment(c(0.0, 0.0), c(1.0, 0.0))?.with_singular_ends(true, true)?;
        let tr = BranchTrack::new(&w.factors, &k, BranchInit::Principal)?;
        let (v, _) = integrate(&tr, &w, |_| c(1.0, 0.0), &[], 1e-12)?;
        let want = libm::tgamma(a) * libm::tgamma(b) / libm::tgamma(a + b) * C::from_polar(1.0, PI * (b - 1.0));
        Ok((v - want).norm())
    });
    vec![hyp, beta]
}

pub fn genus1_suite(cfg: &Genus1Config, seed: u64, fd_samples: usize) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let n = cfg.n();
    let names = cfg.contour_names();
    let fixed = fixed_names(&cfg.contours);
    let fd_cfg = tightened(cfg, |c| c.tolerances.quad_tol = c.tolerances.quad_tol.min(1e-12));
    let zs = genus1::sample_points_g1(cfg, fd_samples.max(1), seed);
    for name in &names {
        let derivs = (|| -> Result<[f64; 3]> {
            let zs = points(&zs)?;
            let mut worst = [0.0f64; 3];
            for &z in zs {
                let (dz, du, dt) = genus1::dp_closed_g1(z, name, &fd_cfg)?;
                let fixed_a = genus1::dp_dtau_fixed_a_g1(z, name, &fd_cfg)?;
                let fd = genus1::dp_finite_diff_g1(z, name, &fd_cfg, cfg.tolerances.fd_step)?;
                worst[0] = worst[0].max(rel_err(dz, fd.dz));
                for (a, b) in du.iter().zip(&fd.du) {
                    worst[0] = worst[0].max(rel_err(*a, *b));
                }
                worst[1] = worst[1].max(rel_err(dt, fd.dtau_flow));
                worst[2] = worst[2].max(rel_err(fixed_a, fd.dtau_fixed_a));
            }
            Ok(worst)
        })();
        let anchor = "genus-1 closed-form derivatives";
        for (k, (label, thr)) in [("z_u", 1e-6), ("tau_flow", 1e-5), ("tau_fixed_a", 1e-5)].into_iter().enumerate() {
            let rec_name = format!("g1.derivatives.{label}.{name}");
            out.push(match &derivs {
                Ok(w) => CheckRecord::asserted(rec_name, anchor, w[k], thr),
                Err(e) => CheckRecord::failed(rec_name, anchor, thr, e),
            });
        }
    }
    if fixed.len() >= 2 {
        for l in 0..=n {
            let rep = genus1::quasi_periodicity_check(&fixed[0], &fixed[1], l, cfg, QUASI_PERIOD_SAMPLES, seed);
            let anchor = "phi is elliptic up to exp(-4 pi i eta) with simple poles";
            let tag = format!("g1.phi.{}.{}.{}", fixed[0], fixed[1], genus1::field_names_g1(n)[l]);
            match rep {
                Ok(r) => {
                    out.push(CheckRecord::asserted(format!("{tag}.period_one"), anchor, r.period_one, 1e-7));
                    out.push(CheckRecord::asserted(format!("{tag}.period_tau"), anchor, r.period_tau, 1e-7));
                    out.push(CheckRecord::asserted(
                        format!("{tag}.pole_growth"),
                        anchor,
                        r.pole_growth,
                        QuasiPeriodicityReport::SIMPLE_POLE_GROWTH,
                    ));
                }
                Err(e) => out.push(CheckRecord::failed(tag, anchor, 1e-7, e)),
            }
        }
    }
    out.extend(rank_records(
        "g1.cross_span",
        "genus-1 cross-difference span has dimension n+1",
        genus1::span_dimension_g1(cfg, &fixed, SpanMode::Cross, TauSlot::Flow, seed),
        n + 1,
    ));
    out.extend(rank_records(
        "g1.potential_span",
        "genus-1 potentials with constants span n+2 dimensions",
        genus1::span_dimension_g1(cfg, &fixed, SpanMode::Potentials, TauSlot::Flow, seed),
        n + 2,
    ));
    out.push(measure("g1.cross_span_fixed_a.rank".into(), "cross-difference rank with a held fixed", || {
        Ok(genus1::span_dimension_g1(cfg, &fixed, SpanMode::Cross, TauSlot::FixedA, seed)?.rank as f64)
    }));
    let mut circ = cfg.clone();
    let small = with_small_circle(&mut circ.contours);
    out.push(check("g1.small_circle".into(), "small circle around z gives -2 pi i", 1e-6, || {
        let z = points(&zs)?[0];
        Ok((genus1::potential_g1(z, &small, &circ)?.0 - genus0::small_circle_constant()).norm())
    }));
    out
}

fn default_triple(contours: &[NamedContour]) -> Result<[String; 3]> {
    let f = fixed_names(contours);
    if f.len() < 3 {
        return Err(Error::Configuration(
            "extraction needs three contours that do not move with z".into(),
        ));
    }
    Ok([f[0].clone(), f[1].clone(), f[2].clone()])
}

/// Extracted system with its records: held-out residual, consistency and
/// the perturbation probe.
fn hydro_records(
    genus: &str,
    held_threshold: f64,
    system: Result<HydroSystem>,
    scale: f64,
    consistency: impl Fn(&HydroSystem) -> Result<f64>,
) -> Vec<CheckRecord> {
    let p = format!("hydro.{genus}");
    let anchor = "hydrodynamic system extracted from three potentials";
    let sys = match system {
        Ok(s) => s,
        Err(e) => return vec![CheckRecord::failed(format!("{p}.held_out"), anchor, held_threshold, e)],
    };
    let probe = if scale == 1.0 { sys.clone() } else { sys.with_scaled_a(0, 0, scale) };
    let mut out = vec![
        CheckRecord::asserted(format!("{p}.held_out"), anchor, sys.held_out_residual, held_threshold)
            .with_note(format!("{} equations, fit residual {:.1e}", sys.rows(), sys.fit_residual)),
        check(format!("{p}.consistency"), "compatibility of the extracted system", 1e-6, || consistency(&probe)),
    ];
    // the perturbed system must be detected: record the inverse residual
    out.push(check(
        format!("{p}.perturbation_inverse"),
        "a 10% coefficient change breaks compatibility",
        1e3,
        || Ok(1.0 / consistency(&sys.with_scaled_a(0, 0, 1.1))?),
    ));
    out
}

pub fn hydro_suite(cfg: &ConfigFile, seed: u64) -> Vec<CheckRecord> {
    let block = cfg.hydro.clone().unwrap_or_default();
    let scale = block.coefficient_scale;
    let mut out = Vec::new();
    if let Some(g0) = &cfg.genus0 {
        let triple = block.genus0_triple.clone().map_or_else(|| default_triple(&g0.contours), Ok);
        let sys = triple.and_then(|t| genus0::extract_hydro_g0(g0, &t, seed));
        out.extend(hydro_records("g0", g0.tolerances.residual_tol, sys, scale, |s| {
            genus0::hydro_consistency_g0(s, g0, seed)
        }));
    }
    if let Some(g1) = &cfg.genus1 {
        let triple = block.genus1_triple.clone().map_or_else(|| default_triple(&g1.contours), Ok);
        let sys = triple.and_then(|t| genus1::extract_hydro_g1(g1, &t, seed).map(|r| r.0));
        let thr = genus1::EXTRACTION_SLACK * g1.tolerances.residual_tol;
        out.extend(hydro_records("g1", thr, sys, scale, |s| genus1::hydro_consistency_g1(s, g1, seed)));
    }
    out
}

pub fn tau_suite(cfg: &TauConfig, lattice: LatticeParam, seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let step = tauflow::CURVATURE_FD_STEP;
    let scalar = |geometry: Geometry| AbstractConfig {
        u: cfg.u.clone(),
        s: cfg.s.clone(),
        a: vec![cfg.a.first().copied().unwrap_or_default()],
        b: vec![cfg.b.first().copied().unwrap_or_default()],
        geometry,
    };
    let anchor = "zero curvature of the coefficient system";
    for (label, geometry, thr) in [
        ("theta", Geometry::Theta { tau: lattice }, 1e-6),
        ("rational", Geometry::Rational, 1e-8),
        ("rational_constant", Geometry::RationalConstant, 1e-8),
    ] {
        let ac = scalar(geometry);
        out.push(check(format!("tau.curvature.{label}"), anchor, thr, || tauflow::zero_curvature_all(&ac, &[], step)));
        out.push(check(format!("tau.curvature.{label}.z_rows"), anchor, thr, || {
            let zs = tauflow::curvature_z_rows(&ac, CURVATURE_Z_ROWS, seed)?;
            tauflow::zero_curvature_all(&ac, &zs, step)
        }));
    }
    let times = cfg.times.max(4);
    let pad = |v: &[C]| {
        let mut v = v.to_vec();
        v.resize(times, C::new(0.0, 0.0));
        v
    };
    for p in TauFunction::partitions_up_to(4) {
        let ac = AbstractConfig {
            u: cfg.u.clone(),
            s: cfg.s.clone(),
            a: pad(&cfg.a),
            b: pad(&cfg.b),
            geometry: Geometry::Tau { partition: p.clone(), times },
        };
        out.push(check(format!("tau.curvature.kp.{p:?}"), anchor, 1e-8, || {
            let zs = tauflow::curvature_z_rows(&ac, CURVATURE_Z_ROWS, seed)?;
            tauflow::zero_curvature_all(&ac, &zs, step)
        }));
    }
    out.push(check("tau.trivial_tau_reduction".into(), "tau = 1 gives the constant-theta system", 1e-14, || {
        let mut t = AbstractConfig {
            u: cfg.u.clone(),
            s: cfg.s.clone(),
            a: pad(&cfg.a),
            b: vec![C::new(0.0, 0.0); times],
            geometry: Geometry::Tau { partition: vec![], times },
        };
        t.b[0] = cfg.b.first().copied().unwrap_or_default();
        let r = scalar(Geometry::RationalConstant);
        let mut r = r;
        r.a = vec![t.a[0]];
        let zs = tauflow::curvature_z_rows(&r, CURVATURE_Z_ROWS, seed)?;
        let ma = tauflow::comp_system_matrices(&t, &zs)?;
        let mb = tauflow::comp_system_matrices(&r, &zs)?;
        Ok(ma
            .iter()
            .zip(&mb)
            .flat_map(|(x, y)| (x - y).iter().map(|v| v.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max))
    }));
    let mut circ = cfg.clone();
    let small = with_small_circle(&mut circ.contours);
    out.push(check("tau.small_circle".into(), "small circle around z gives -2 pi i", 1e-6, || {
        let z = tauflow::sample_points_tau(&circ, 1, seed)?[0];
        Ok((tauflow::potential_tau(z, &small, &circ)?.0 - genus0::small_circle_constant()).norm())
    }));
    out.push(measure("tau.potential.tau_at_origin".into(), "value of the tau-function at t = 0", || {
        Ok(cfg.tau_function()?.eval(&vec![C::new(0.0, 0.0); cfg.times]).re)
    }));
    let fixed = fixed_names(&cfg.contours);
    if fixed.len() >= 2 {
        out.push(measure("tau.potential.cross_rank".into(), "cross-difference rank of tau-mode potentials", || {
            Ok(tauflow::tau_cross_rank_fd(cfg, &fixed, seed, 1e-3)?.rank as f64)
        }));
    }
    out
}

fn missing(suite: &str, block: &str) -> Error {
    Error::Configuration(format!("suite {suite} needs a {block} block in the config"))
}

/// Runs `suite` (all suites in dependency order for `All`). Explicitly
/// requested suites need their block; `All` skips genus blocks that are absent.
pub fn run_suite(suite: Suite, cfg: &ConfigFile, seed: u64) -> Result<VerificationReport> {
    let all = suite == Suite::All;
    let mut checks = Vec::new();
    let theta = cfg.theta.clone().unwrap_or_default();
    if all || suite == Suite::Theta {
        checks.extend(timed(|| theta_suite(&theta, seed)));
    }
    if all || suite == Suite::Fay {
        checks.extend(timed(|| fay_suite(theta.tau[0], seed)));
    }
    if all || suite == Suite::G0 {
        match &cfg.genus0 {
            Some(g) => checks.extend(timed(|| genus0_suite(g, seed, FD_SAMPLES_G0))),
            None if !all => return Err(missing("g0", "genus0")),
            None => {}
        }
        checks.extend(timed(oracle_suite));
    }
    if all || suite == Suite::G1 {
        match &cfg.genus1 {
            Some(g) => checks.extend(timed(|| genus1_suite(g, seed, FD_SAMPLES_G1))),
            None if !all => return Err(missing("g1", "genus1")),
            None => {}
        }
    }
    if all || suite == Suite::Hydro {
        if !all && cfg.genus0.is_none() && cfg.genus1.is_none() {
            return Err(missing("hydro", "genus0 or genus1"));
        }
        checks.extend(timed(|| hydro_suite(cfg, seed)));
    }
    if all || suite == Suite::Tau {
        match &cfg.tau {
            Some(t) => checks.extend(timed(|| tau_suite(t, theta.tau[0], seed))),
            None if !all => return Err(missing("tau", "tau")),
            None => {}
        }
    }
    Ok(VerificationReport::new(suite.label(), seed, checks))
}

/// Extraction report for the `extract` command.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExtractReport {
    pub schema_version: u32,
    pub genus: u8,
    pub system: HydroSystem,
    pub consistency_residual: f64,
    pub rank_singular_values: Vec<f64>,
}

pub fn extract(cfg: &ConfigFile, genus: u8, triple: Option<[String; 3]>, seed: u64) -> Result<ExtractReport> {
    let block: HydroBlock = cfg.hydro.clone().unwrap_or_default();
    match genus {
        0 => {
            let g = cfg.genus0.as_ref().ok_or_else(|| missing("extract", "genus0"))?;
            let t = match triple.or(block.genus0_triple) {
                Some(t) => t,
                None => default_triple(&g.contours)?,
            };
            let system = genus0::extract_hydro_g0(g, &t, seed)?;
            let consistency_residual = genus0::hydro_consistency_g0(&system, g, seed)?;
            Ok(ExtractReport {
                schema_version: super::config::SCHEMA_VERSION,
                genus,
                system,
                consistency_residual,
                rank_singular_values: Vec::new(),
            })
        }
        1 => {
            let g = cfg.genus1.as_ref().ok_or_else(|| missing("extract", "genus1"))?;
            let t = match triple.or(block.genus1_triple) {
                Some(t) => t,
                None => default_triple(&g.contours)?,
            };
            let (system, cert) = genus1::extract_hydro_g1(g, &t, seed)?;
            let consistency_residual = genus1::hydro_consistency_g1(&system, g, seed)?;
            Ok(ExtractReport {
                schema_version: super::config::SCHEMA_VERSION,
                genus,
                system,
                consistency_residual,
                rank_singular_values: cert.singular_values,
            })
        }
        other => Err(Error::Configuration(format!("genus must be 0 or 1, got {other}"))),
    }
}
