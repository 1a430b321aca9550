//! The six subcommands. Each resolves its parameters, opens a run directory
//! keyed by them, writes its tables and records pass/fail checks.

use std::sync::Arc;

use fb_core::blowup::{
    blowup_sequence, geometric_scales, BlowupOptions, BlowupRecord, Normalization,
};
use fb_core::field::{Field, FnField, PolyField};
use fb_core::functionals::{
    rate_fit, scan as functional_scan, FunctionalOptions, FunctionalScan, ScanQuantity,
};
use fb_core::jumpsynth::{
    distributional_laplacian_check, vanishing_order, HolderWeight, JumpOptions, LogDensity,
};
use fb_core::measures::{
    density_scan, surface_measure_validate, surface_sample, PolynomialMeasure, RadialProfile,
    RadialTestField, SurfaceOptions, VolumeRule,
};
use fb_core::poly::{HarmonicPolynomial, Polynomial};
use fb_core::sphere::{
    circle_arcs, epiperimetric_check, kappa, random_harmonic_trace, sphere_rule, termwise_margin,
    SphereRule,
};
use fb_core::strata::{
    anchors_on_branch, classify_point, strata, whitney_report, write_strata_csv, StrataRow,
    WhitneyJet,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{check_range, require, Settings};
use crate::model::{self, ModelSpec, StoredModel};
use crate::output::{Run, RunReport};
use crate::CliError;

/// Seed of trial t, spread so neighbouring base seeds do not share trials.
fn trial_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(t as u64)
}

fn point_or_origin(s: &Settings, n: usize) -> Result<Vec<f64>, CliError> {
    let q = s.point.clone().unwrap_or_else(|| vec![0.0; n]);
    require(
        q.len() == n,
        format!("point has {} coordinates but n = {n}", q.len()),
    )?;
    require(
        q.iter().all(|v| v.is_finite()),
        "point coordinates must be finite",
    )?;
    Ok(q)
}

fn source_with_dimension(s: &Settings) -> Result<(String, HarmonicPolynomial), CliError> {
    let (label, p) = s.source()?;
    if let Some(n) = s.n {
        require(
            n == p.n(),
            format!(
                "--n {n} disagrees with the polynomial's dimension {}",
                p.n()
            ),
        )?;
    }
    Ok((label, p))
}

fn polynomial_rule(p: &Polynomial) -> Result<Arc<SphereRule>, CliError> {
    Ok(sphere_rule(p.n(), 2 * p.degree() as usize + 2)?)
}

#[derive(Serialize)]
struct EpiParams {
    n: usize,
    d: f64,
    trials: usize,
    seed: u64,
    max_degree: usize,
}

pub fn epi(s: &Settings) -> Result<RunReport, CliError> {
    let p = EpiParams {
        n: s.n.unwrap_or(3),
        d: s.d.unwrap_or(2.0),
        trials: s.trials.unwrap_or(50),
        seed: s.seed(),
        max_degree: s.max_degree.unwrap_or(8),
    };
    require(
        (2..=5).contains(&p.n),
        format!("epi supports n in 2..=5, got n = {}", p.n),
    )?;
    require(
        p.d.is_finite() && p.d >= 0.0,
        format!("d must be a finite non-negative number, got {}", p.d),
    )?;
    require(p.trials >= 1, "trials must be at least 1")?;
    require(
        (1..=12).contains(&p.max_degree),
        format!("max-degree must lie in 1..=12, got {}", p.max_degree),
    )?;

    let mut run = Run::create(&s.output_root(), "epi", &p)?;
    let k = kappa(p.n, p.d)?;
    let reports = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(p.seed, t);
            let trace = random_harmonic_trace(p.n, p.max_degree, seed)?;
            Ok((seed, epiperimetric_check(&trace, p.d, p.max_degree)?))
        })
        .collect::<fb_core::Result<Vec<_>>>()?;
    let termwise = termwise_margin(p.n, p.d, 50)?;

    run.write_csv("epi.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["trial", "seed", "w_harm", "w_hom", "margin", "pass"])?;
        for (t, (seed, r)) in reports.iter().enumerate() {
            w.write_record([
                t.to_string(),
                seed.to_string(),
                r.w_harm.to_string(),
                r.w_hom.to_string(),
                r.margin.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let passed = reports.iter().filter(|(_, r)| r.pass).count();
    let min_margin = reports
        .iter()
        .map(|(_, r)| r.margin)
        .fold(f64::INFINITY, f64::min);
    run.write_json(
        "epi.json",
        json!({
            "n": p.n,
            "d": p.d,
            "seed": p.seed,
            "kappa": k,
            "trials": p.trials,
            "passed": passed,
            "min_margin": min_margin,
            "termwise_margin": termwise,
            "termwise_degrees": 50,
        }),
    )?;
    run.check(
        "epiperimetric",
        passed == p.trials,
        format!(
            "{passed}/{} traces satisfy W_harm <= (1 - kappa) W_hom, kappa = {k}",
            p.trials
        ),
    );
    run.check(
        "termwise",
        termwise >= -1e-12,
        format!("min over j <= 50 of the per-degree margin = {termwise:e}"),
    );
    run.finish()
}

#[derive(Serialize)]
struct ScanParams {
    source: String,
    polynomial: Polynomial,
    point: Vec<f64>,
    d: f64,
    rmax: f64,
    rmin: f64,
    points_per_decade: usize,
}

/// Per-step monotonicity along a decreasing radius grid: value(r_i) ≥ value(r_{i+1}) − slack.
fn worst_step(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0, f64::max)
}

fn scan_json(scan: &FunctionalScan) -> serde_json::Value {
    json!({
        "metadata": scan.metadata,
        "w_rate": rate_fit(scan, ScanQuantity::W).ok(),
        "n_minus_d_rate": rate_fit(scan, ScanQuantity::NMinusD).ok(),
    })
}

pub fn scan(s: &Settings) -> Result<RunReport, CliError> {
    let (source, hp) = source_with_dimension(s)?;
    let point = point_or_origin(s, hp.n())?;
    let d = match s.d {
        Some(d) => d,
        None => f64::from(vanishing_order(&hp, &point)?),
    };
    let p = ScanParams {
        source,
        polynomial: hp.poly().clone(),
        point,
        d,
        rmax: s.rmax.unwrap_or(1.0),
        rmin: s.rmin.unwrap_or(1e-3),
        points_per_decade: s.points_per_decade.unwrap_or(8),
    };
    require(
        p.d.is_finite() && p.d >= 0.0,
        "d must be finite and non-negative",
    )?;
    check_range(p.rmax, p.rmin)?;
    require(
        p.points_per_decade >= 1,
        "points-per-decade must be at least 1",
    )?;

    let mut run = Run::create(&s.output_root(), "scan", &p)?;
    let rule = polynomial_rule(&p.polynomial)?;
    let field = PolyField::new(p.polynomial.clone());
    let scan = functional_scan(
        &field,
        &p.point,
        p.d,
        p.rmax,
        p.rmin,
        p.points_per_decade,
        &rule,
        &FunctionalOptions::default(),
    )?;
    run.write_csv("scan.csv", |buf| scan.write_csv(buf))?;
    run.write_json("scan.json", scan_json(&scan))?;

    let n_series: Vec<(f64, f64)> = scan
        .valid()
        .map(|r| (r.r, r.n.expect("valid row")))
        .collect();
    let w_series = scan.series(ScanQuantity::W);
    let (dn, dw) = (worst_step(&n_series), worst_step(&w_series));
    run.check(
        "frequency_monotone",
        dn <= 1e-6,
        format!("largest increase of N as r decreases = {dn:e}"),
    );
    run.check(
        "weiss_monotone",
        dw <= 1e-6,
        format!("largest increase of W as r decreases = {dw:e}"),
    );
    let homogeneous_at_origin =
        hp.homogeneous() && p.point.iter().all(|v| *v == 0.0) && p.d == f64::from(hp.degree());
    if homogeneous_at_origin {
        let en = n_series
            .iter()
            .map(|(_, v)| (v - p.d).abs())
            .fold(0.0, f64::max);
        let ew = w_series.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        run.check(
            "frequency_equals_degree",
            en <= 1e-6,
            format!("max |N - d| = {en:e}"),
        );
        run.check("weiss_vanishes", ew <= 1e-8, format!("max |W| = {ew:e}"));
    }
    run.finish()
}

#[derive(Serialize)]
struct MeasureParams {
    source: String,
    polynomial: Polynomial,
    rmax: f64,
    rmin: f64,
    points_per_decade: usize,
    validate: bool,
    resolution: usize,
}

pub fn measure(s: &Settings) -> Result<RunReport, CliError> {
    let (source, hp) = source_with_dimension(s)?;
    require(
        hp.homogeneous() && hp.degree() > 0,
        format!("measure needs a nonconstant homogeneous polynomial ('{source}' is not)"),
    )?;
    let p = MeasureParams {
        source,
        polynomial: hp.poly().clone(),
        rmax: s.rmax.unwrap_or(1.0),
        rmin: s.rmin.unwrap_or(1e-2),
        points_per_decade: s.points_per_decade.unwrap_or(4),
        validate: s.validate.unwrap_or(false),
        resolution: s.resolution.unwrap_or(SurfaceOptions::default().resolution),
    };
    check_range(p.rmax, p.rmin)?;
    require(
        p.points_per_decade >= 1,
        "points-per-decade must be at least 1",
    )?;
    if p.validate {
        require(
            matches!(hp.n(), 2 | 3),
            format!(
                "--validate samples the zero set for n = 2 or 3 only (n = {})",
                hp.n()
            ),
        )?;
        require(p.resolution >= 8, "resolution must be at least 8")?;
    }

    let mut run = Run::create(&s.output_root(), "measure", &p)?;
    let pm = PolynomialMeasure::new(hp.clone())?;
    let grid = fb_core::functionals::geometric_grid(p.rmax, p.rmin, p.points_per_decade)?;
    let origin = vec![0.0; hp.n()];
    let density = density_scan(&pm, &origin, hp.n(), f64::from(hp.degree()), &grid)?;
    run.write_csv("density.csv", |buf| density.write_csv(buf))?;

    let mut body = json!({
        "n": hp.n(),
        "degree": hp.degree(),
        "l1_norm": pm.l1_norm(),
        "unit_ball_measure": pm.ball_measure(1.0),
        "normalization": pm.normalization(),
        "density": { "exponent": density.exponent, "min": density.min, "max": density.max },
    });
    if p.validate {
        let opts = SurfaceOptions {
            resolution: p.resolution,
            ..SurfaceOptions::default()
        };
        let sample = surface_sample(&p.polynomial, p.rmax, &opts)?;
        let report = surface_measure_validate(&sample, &pm, &grid)?;
        run.write_csv("surface.csv", |buf| sample.write_csv(buf))?;
        run.write_csv("validation.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["r", "surface", "closed_form", "relative_error"])?;
            for row in &report.rows {
                w.write_record([
                    row.r.to_string(),
                    row.surface.to_string(),
                    row.closed_form.to_string(),
                    row.relative_error.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        body["validation"] = json!({ "max_relative_error": report.max_relative_error });
        run.check(
            "surface_vs_closed_form",
            report.max_relative_error < 1e-3,
            format!("max relative error = {:e}", report.max_relative_error),
        );
    }
    run.write_json("measure.json", body)?;
    run.finish()
}

pub fn synth(s: &Settings) -> Result<RunReport, CliError> {
    let (fixture, hp) = source_with_dimension(s)?;
    require(
        hp.n() == 2,
        format!(
            "jump models are synthesized in the plane ('{fixture}' has n = {})",
            hp.n()
        ),
    )?;
    let alpha = s.alpha.unwrap_or(0.5);
    let amplitude = s.amplitude.unwrap_or(0.3);
    require(
        alpha > 0.0 && alpha <= 1.0,
        format!("alpha must lie in (0, 1], got {alpha}"),
    )?;
    require(amplitude.is_finite(), "amplitude must be finite")?;
    let defaults = JumpOptions::default();
    let options = JumpOptions {
        radius: s.radius.unwrap_or(defaults.radius),
        delta: s.delta.unwrap_or(defaults.delta),
        resolution: s.resolution.unwrap_or(defaults.resolution),
        seed: s.seed(),
    };
    let weight = HolderWeight::new(
        alpha,
        LogDensity::DirectionalPower {
            amplitude,
            exponent: alpha,
            direction: vec![1.0, 0.0],
            center: vec![0.0, 0.0],
        },
    )?;
    let spec = ModelSpec {
        fixture,
        polynomial: hp.clone(),
        weight,
        anchor: point_or_origin(s, 2)?,
        options,
    };
    let id = spec.id()?;

    let mut run = Run::create(&s.output_root(), "synth", &spec)?;
    let built = spec.build()?;
    let stored = StoredModel {
        id: id.clone(),
        spec,
        summary: built.summary(),
    };
    model::store(&mut run, &stored)?;

    // Bump across the first ray of the zero set, 0.6 from the origin.
    let theta = built.ray_angles()[0];
    let phi = RadialTestField {
        center: vec![0.6 * theta.cos(), 0.6 * theta.sin()],
        profile: RadialProfile::Bump { radius: 0.2 },
    };
    let vrule = VolumeRule {
        half_width: 0.25,
        panels: 48,
        order: 6,
    };
    let lap = distributional_laplacian_check(&built, &phi, &vrule)?;
    let checks = built.checks().clone();
    run.write_json(
        "model.json",
        json!({
            "model": model::describe(&stored),
            "distributional_check": { "test_field": phi, "volume_rule": vrule, "result": lap },
        }),
    )?;
    run.check(
        "vanishing_order",
        checks.vanishing_ratio < 1e-6,
        format!(
            "sub-degree coefficient ratio = {:e}",
            checks.vanishing_ratio
        ),
    );
    run.check(
        "harmonic_off_layer",
        checks.laplacian_residual < 1e-3,
        format!(
            "relative finite-difference Laplacian = {:e}",
            checks.laplacian_residual
        ),
    );
    run.check(
        "distributional_laplacian",
        lap.relative_error < 1e-2,
        format!(
            "volume vs layer route relative error = {:e}",
            lap.relative_error
        ),
    );
    run.check("model_id", true, id);
    run.finish()
}

#[derive(Serialize)]
struct BlowupParams {
    source: String,
    polynomial: Option<Polynomial>,
    point: Vec<f64>,
    d: u32,
    scales: Vec<f64>,
    max_degree: usize,
}

fn blowup_checks(run: &mut Run, rec: &BlowupRecord) {
    let converging = match rec.beta_hat() {
        Some(b) => b > 0.0,
        None => true,
    };
    run.check(
        "convergence",
        converging,
        match rec.beta_hat() {
            Some(b) => format!("fitted rate beta = {b}"),
            None => "rescalings coincide at every scale".into(),
        },
    );
    run.check(
        "tangent_nonzero",
        !rec.p_tilde.is_zero(),
        format!(
            "max |coefficient| of the blowup = {:e}",
            rec.p_tilde.max_abs_coefficient()
        ),
    );
}

fn blowup_scales(s: &Settings, default_r0: f64) -> Result<Vec<f64>, CliError> {
    let count = s.scales.unwrap_or(8);
    let r0 = s.r0.unwrap_or(default_r0);
    let ratio = s.ratio.unwrap_or(0.25);
    require(count >= 4, format!("need at least 4 scales, got {count}"))?;
    require(
        r0 > 0.0 && r0.is_finite(),
        format!("r0 must be positive, got {r0}"),
    )?;
    require(
        ratio > 0.0 && ratio < 1.0,
        format!("ratio must lie in (0, 1), got {ratio}"),
    )?;
    Ok(geometric_scales(r0, ratio, count))
}

pub fn blowup(s: &Settings) -> Result<RunReport, CliError> {
    let max_degree = s.max_degree.unwrap_or(BlowupOptions::default().max_degree);
    require(
        (1..=30).contains(&max_degree),
        format!("max-degree must lie in 1..=30, got {max_degree}"),
    )?;
    let opts = BlowupOptions {
        max_degree,
        ..BlowupOptions::default()
    };
    let scales = blowup_scales(s, 0.5)?;
    if let Some(id) = &s.model {
        require(
            s.fixture.is_none() && s.polynomial.is_none(),
            "give either --model or a polynomial source, not both",
        )?;
        let (stored, built) = model::load(&s.output_root(), id)?;
        let q = built.anchor().to_vec();
        let d = match s.d {
            Some(d) => whole_degree(d)?,
            None => built.vanishing_order(),
        };
        let p = BlowupParams {
            source: format!("model:{id}"),
            polynomial: None,
            point: q.clone(),
            d,
            scales,
            max_degree,
        };
        let mut run = Run::create(&s.output_root(), "blowup", &p)?;
        // Circles about the origin are kinked only where they cross the rays.
        let rule = if q.iter().all(|v| *v == 0.0) {
            Arc::new(circle_arcs(built.ray_angles(), 24, 16)?)
        } else {
            sphere_rule(2, 4 * max_degree.max(d as usize) + 8)?
        };
        let rec = blowup_sequence(&built, &q, d, &p.scales, &Normalization::Power, rule, &opts)?;
        write_blowup(&mut run, &rec, json!({ "model": stored.id }))?;
        blowup_checks(&mut run, &rec);
        return run.finish();
    }
    let (source, hp) = source_with_dimension(s)?;
    let q = point_or_origin(s, hp.n())?;
    let d = match s.d {
        Some(d) => whole_degree(d)?,
        None => vanishing_order(&hp, &q)?,
    };
    let p = BlowupParams {
        source,
        polynomial: Some(hp.poly().clone()),
        point: q.clone(),
        d,
        scales,
        max_degree,
    };
    let mut run = Run::create(&s.output_root(), "blowup", &p)?;
    let deg = hp.degree() as usize;
    let rule = sphere_rule(hp.n(), (2 * deg).max(deg + max_degree.max(d as usize)))?;
    let field = PolyField::new(hp.poly().clone());
    let rec = blowup_sequence(&field, &q, d, &p.scales, &Normalization::Power, rule, &opts)?;
    write_blowup(&mut run, &rec, json!({ "source": p.source }))?;
    blowup_checks(&mut run, &rec);
    run.finish()
}

fn whole_degree(d: f64) -> Result<u32, CliError> {
    require(
        d >= 0.0 && d.fract() == 0.0 && d <= 64.0,
        format!("blowups use an integer degree, got d = {d}"),
    )?;
    Ok(d as u32)
}

fn write_blowup(
    run: &mut Run,
    rec: &BlowupRecord,
    origin: serde_json::Value,
) -> Result<(), CliError> {
    run.write_csv("distances.csv", |buf| rec.write_distance_csv(buf))?;
    run.write_json(
        "blowup.json",
        json!({
            "origin": origin,
            "beta_hat": rec.beta_hat(),
            "p_tilde": rec.p_tilde,
            "record": rec,
        }),
    )
}

#[derive(Serialize)]
struct WhitneyParams {
    model: String,
    anchors: usize,
    beta: f64,
    k: u32,
    anchor_radii: Vec<f64>,
    r_grid: Vec<f64>,
}

#[derive(Serialize)]
struct ClassifyParams {
    source: String,
    polynomial: Polynomial,
    point: Vec<f64>,
    d: u32,
    rmax: f64,
    rmin: f64,
    points_per_decade: usize,
}

pub fn whitney(s: &Settings) -> Result<RunReport, CliError> {
    match &s.model {
        Some(id) => {
            require(
                s.fixture.is_none() && s.polynomial.is_none(),
                "give either --model or a polynomial source, not both",
            )?;
            whitney_model(s, id)
        }
        None => classify_fixture(s),
    }
}

/// Frequency scan from `rmax` down to `rmin`, then (d, j) from the blowup.
fn classify(
    f: &dyn Field,
    q: &[f64],
    d: u32,
    rmax: f64,
    rmin: f64,
    rule: &SphereRule,
    jet: &Polynomial,
) -> Result<fb_core::strata::Classification, CliError> {
    let scan = functional_scan(
        f,
        q,
        f64::from(d),
        rmax,
        rmin,
        4,
        rule,
        &FunctionalOptions::default(),
    )?;
    Ok(classify_point(&scan, jet)?)
}

fn whitney_model(s: &Settings, id: &str) -> Result<RunReport, CliError> {
    let (stored, built) = model::load(&s.output_root(), id)?;
    let delta = built.options().delta;
    let count = s.anchors.unwrap_or(5);
    let beta = s.beta.unwrap_or(0.2);
    require(
        (2..=32).contains(&count),
        format!("anchors must lie in 2..=32, got {count}"),
    )?;
    require(
        beta > 0.0 && beta < 1.0,
        format!("beta must lie in (0, 1), got {beta}"),
    )?;
    // Anchors sit on one branch of Z(v) inside the exclusion disk, where v
    // is harmonic and its jets are resolved to quadrature accuracy.
    let anchor_radii: Vec<f64> = (0..count)
        .map(|i| delta * (0.2 + 0.56 * i as f64 / (count - 1) as f64))
        .collect();
    let r_grid: Vec<f64> = [0.16, 0.24, 0.32, 0.44, 0.6]
        .iter()
        .map(|c| c * delta)
        .collect();
    let p = WhitneyParams {
        model: id.to_string(),
        anchors: count,
        beta,
        k: 1,
        anchor_radii,
        r_grid,
    };
    let mut run = Run::create(&s.output_root(), "whitney", &p)?;

    let q = built.anchor().to_vec();
    let shared = Arc::new(built);
    let shifted = {
        let m = shared.clone();
        let q = q.clone();
        FnField::new(2, move |x| m.value(&[x[0] + q[0], x[1] + q[1]]))
    };
    let theta0 = if q.iter().any(|v| *v != 0.0) {
        q[1].atan2(q[0])
    } else {
        shared.ray_angles()[0]
    };
    let anchors: Vec<Vec<f64>> = anchors_on_branch(&shifted, &p.anchor_radii, theta0)?
        .into_iter()
        .map(|a| vec![a[0] + q[0], a[1] + q[1]])
        .collect();

    let jet_rule = sphere_rule(2, 24)?;
    let scan_rule = sphere_rule(2, 32)?;
    let opts = BlowupOptions::default();
    let mut jets = Vec::new();
    let mut rows = Vec::new();
    for (i, a) in anchors.iter().enumerate() {
        let room = delta - dist(a, &q);
        let scales = geometric_scales(0.2 * room, 0.25, 5);
        let rec = blowup_sequence(
            shared.as_ref(),
            a,
            1,
            &scales,
            &Normalization::Power,
            jet_rule.clone(),
            &opts,
        )?;
        jets.push(WhitneyJet::from_record(&rec, p.k)?);
        let class = classify(
            shared.as_ref(),
            a,
            1,
            0.5 * room,
            1e-3 * delta,
            &scan_rule,
            &rec.p_tilde,
        )?;
        rows.push(StrataRow {
            label: format!("a{i}"),
            point: a.clone(),
            class,
        });
    }
    let dq = shared.vanishing_order();
    let rec_q = blowup_sequence(
        shared.as_ref(),
        &q,
        dq,
        &geometric_scales(0.4 * delta, 0.25, 4),
        &Normalization::Power,
        scan_rule.clone(),
        &opts,
    )?;
    let class_q = classify(
        shared.as_ref(),
        &q,
        dq,
        0.5 * delta,
        1e-3 * delta,
        &scan_rule,
        &rec_q.p_tilde,
    )?;
    rows.insert(
        0,
        StrataRow {
            label: "Q".into(),
            point: q.clone(),
            class: class_q,
        },
    );

    let report = whitney_report(&jets, p.k, beta, &p.r_grid)?;
    run.write_csv("strata.csv", |buf| write_strata_csv(&rows, buf))?;
    run.write_csv("rho.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["alpha", "r", "rho"])?;
        for row in &report.rows {
            let alpha: Vec<String> = row.alpha.iter().map(|e| e.to_string()).collect();
            for (r, rho) in &row.rho {
                w.write_record([alpha.join(" "), r.to_string(), rho.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    run.write_json(
        "whitney.json",
        json!({
            "model": stored.id,
            "anchors": anchors,
            "jets": jets,
            "report": report,
            "classifications": rows,
            "strata": strata(&rows),
        }),
    )?;
    run.check(
        "anchor_count",
        jets.len() >= 4,
        format!("{} jets on the zero set", jets.len()),
    );
    for row in &report.rows {
        run.check(
            &format!(
                "whitney_alpha_{}",
                row.alpha
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("_")
            ),
            row.pass,
            format!(
                "rho fit exponent {:?} vs beta = {beta}, constant = {:e}",
                row.fit.exponent(),
                row.constant
            ),
        );
    }
    run.finish()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn classify_fixture(s: &Settings) -> Result<RunReport, CliError> {
    let (source, hp) = source_with_dimension(s)?;
    let q = point_or_origin(s, hp.n())?;
    let d = match s.d {
        Some(d) => whole_degree(d)?,
        None => vanishing_order(&hp, &q)?,
    };
    require(
        d > 0,
        "the point is not on the zero set (vanishing order 0)",
    )?;
    let p = ClassifyParams {
        source,
        polynomial: hp.poly().clone(),
        point: q,
        d,
        rmax: s.rmax.unwrap_or(1.0),
        rmin: s.rmin.unwrap_or(1e-3),
        points_per_decade: s.points_per_decade.unwrap_or(4),
    };
    check_range(p.rmax, p.rmin)?;
    require(p.rmin <= 1e-2, "classification needs rmin <= 1e-2")?;
    let mut run = Run::create(&s.output_root(), "whitney", &p)?;
    let jet = p.polynomial.translate(&p.point)?.homogeneous_part(d);
    let rule = polynomial_rule(&p.polynomial)?;
    let field = PolyField::new(p.polynomial.clone());
    let scan = functional_scan(
        &field,
        &p.point,
        f64::from(d),
        p.rmax,
        p.rmin,
        p.points_per_decade,
        &rule,
        &FunctionalOptions::default(),
    )?;
    let class = classify_point(&scan, &jet)?;
    let rows = vec![StrataRow {
        label: p.source.clone(),
        point: p.point.clone(),
        class,
    }];
    run.write_csv("strata.csv", |buf| write_strata_csv(&rows, buf))?;
    run.write_json(
        "whitney.json",
        json!({ "jet": jet, "classifications": rows, "strata": strata(&rows) }),
    )?;
    let c = &rows[0].class;
    run.check(
        "classified",
        c.d == d,
        format!(
            "N -> {} (d = {}, j = {}, {:?})",
            c.frequency, c.d, c.j, c.admissibility
        ),
    );
    run.finish()
}
