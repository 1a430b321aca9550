//! Rescalings Y(r, x) = v(Q + r x)/r^d, their limits and the convergence of
//! rescaled zero sets.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dist, dot, fd_gradient, norm, CompiledPoly, Field};
use crate::functionals::RateFit;
use crate::linalg::linear_fit;
use crate::measures::{density_scan, BallMass, DensityRow};
use crate::poly::Polynomial;
use crate::quadrature::gauss_legendre;
use crate::sphere::{analyze, sphere_rule, BoundaryTrace, SphereRule};

/// How the rescaled traces are normalized.
#[derive(Clone, Copy)]
pub enum Normalization<'a> {
    /// Divide by r^d.
    Power,
    /// Multiply by r^{n−2}/ω(B(Q, r)).
    Measure(&'a (dyn BallMass + Sync)),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    Power,
    Measure,
}

impl Normalization<'_> {
    pub fn mode(&self) -> NormalizationMode {
        match self {
            Normalization::Power => NormalizationMode::Power,
            Normalization::Measure(_) => NormalizationMode::Measure,
        }
    }

    fn factor(&self, q: &[f64], r: f64, d: u32) -> Result<f64> {
        match self {
            Normalization::Power => Ok(r.powi(-(d as i32))),
            Normalization::Measure(source) => {
                let mass = source.ball_mass(q, r)?;
                if !(mass > 0.0) {
                    return Err(Error::ZeroBallMass { r });
                }
                Ok(r.powi(q.len() as i32 - 2) / mass)
            }
        }
    }
}

/// Trace on the unit sphere of the rescaled field x ↦ c(r)·f(Q + r x).
pub fn rescale_trace(
    f: &dyn Field,
    q: &[f64],
    r: f64,
    d: u32,
    normalization: &Normalization,
    rule: Arc<SphereRule>,
) -> Result<BoundaryTrace> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale {r} must be positive"
        )));
    }
    let c = normalization.factor(q, r, d)?;
    let raw = BoundaryTrace::sample(f, rule.clone(), q, r)?;
    let values = raw.values().iter().map(|v| c * v).collect();
    BoundaryTrace::new(rule, values, vec![0.0; q.len()], 1.0, f.poly_degree())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupOptions {
    /// Highest degree resolved by the spectral projection.
    pub max_degree: usize,
    /// Radial Gauss order for the gradient defect on B₁.
    pub radial_order: usize,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        BlowupOptions {
            max_degree: 12,
            radial_order: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupRecord {
    pub n: usize,
    pub q: Vec<f64>,
    pub d: u32,
    pub mode: NormalizationMode,
    /// Decreasing scales; the last one is the finest.
    pub scales: Vec<f64>,
    pub traces: Vec<Vec<f64>>,
    /// L²(∂B₁) distances between traces.
    pub distances: Vec<Vec<f64>>,
    /// max over finer scales s of dist(Y_r, Y_s), one per scale but the last.
    pub max_distances: Vec<f64>,
    pub rate: RateFit,
    /// Degree-d harmonic projection of the finest trace.
    pub p_tilde: Polynomial,
    pub p_tilde_spectral: Vec<f64>,
    pub parseval_defect: f64,
    /// ∫_{B₁} |∇Y(r,·) − ∇p̃|² per scale.
    pub gradient_defects: Vec<f64>,
}

impl BlowupRecord {
    pub fn beta_hat(&self) -> Option<f64> {
        self.rate.exponent()
    }

    /// CSV of the distance matrix with the scales as header.
    pub fn write_distance_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["r".to_string()];
        header.extend(self.scales.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (s, row) in self.scales.iter().zip(&self.distances) {
            let mut rec = vec![s.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 scales, got {}",
            scales.len()
        )));
    }
    if scales.iter().any(|s| !(*s > 0.0)) || scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "scales must be positive and decreasing".into(),
        ));
    }
    let ratio = scales[1] / scales[0];
    if scales
        .windows(2)
        .any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9)
    {
        return Err(Error::InvalidArgument("scales must be geometric".into()));
    }
    Ok(())
}

/// Geometric scales r₀, r₀q, …, r₀q^{count−1}.
pub fn geometric_scales(r0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| r0 * ratio.powi(i as i32)).collect()
}

/// Fit of e ≈ C r^β; exact zeros are dropped.
fn fit_rate(r: &[f64], e: &[f64]) -> RateFit {
    let (x, y): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(e)
        .filter(|(_, e)| **e > 1e-14)
        .map(|(r, e)| (r.ln(), e.ln()))
        .unzip();
    if x.len() < 2 {
        return RateFit::IdenticallyZero;
    }
    let (slope, intercept, r2) = linear_fit(&x, &y);
    RateFit::Fit {
        amplitude: intercept.exp(),
        exponent: slope,
        r_squared: r2,
        points: x.len(),
    }
}

fn gradient_defect(
    f: &dyn Field,
    q: &[f64],
    r: f64,
    c: f64,
    p_tilde: &CompiledPoly,
    rule: &SphereRule,
    radial_order: usize,
) -> f64 {
    let n = q.len();
    let mut y = vec![0.0; n];
    let mut total = 0.0;
    for (s, ws) in gauss_legendre(radial_order).on_interval(0.0, 1.0) {
        let mut shell = 0.0;
        for (theta, wt) in rule.nodes().iter().zip(rule.weights()) {
            let x: Vec<f64> = theta.iter().map(|t| s * t).collect();
            for i in 0..n {
                y[i] = q[i] + r * x[i];
            }
            let g = f
                .gradient(&y)
                .unwrap_or_else(|| fd_gradient(f, &y, 1e-6 * r));
            let (_, gp) = p_tilde.value_and_gradient(&x);
            shell += wt
                * g.iter()
                    .zip(&gp)
                    .map(|(a, b)| (c * r * a - b).powi(2))
                    .sum::<f64>();
        }
        total += ws * s.powi(n as i32 - 1) * shell;
    }
    total
}

/// Traces at each scale, their distances, the fitted rate and p̃.
pub fn blowup_sequence(
    f: &dyn Field,
    q: &[f64],
    d: u32,
    scales: &[f64],
    normalization: &Normalization,
    rule: Arc<SphereRule>,
    opts: &BlowupOptions,
) -> Result<BlowupRecord> {
    check_scales(scales)?;
    let traces: Result<Vec<BoundaryTrace>> = scales
        .par_iter()
        .map(|&r| rescale_trace(f, q, r, d, normalization, rule.clone()))
        .collect();
    let traces = traces?;
    let w = rule.weights();
    let m = scales.len();
    let mut distances = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let s: f64 = traces[i]
                .values()
                .iter()
                .zip(traces[j].values())
                .zip(w)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum();
            distances[i][j] = s.sqrt();
            distances[j][i] = s.sqrt();
        }
    }
    let max_distances: Vec<f64> = (0..m - 1)
        .map(|i| distances[i][i + 1..].iter().copied().fold(0.0, f64::max))
        .collect();
    let rate = fit_rate(&scales[..m - 1], &max_distances);

    let finest = traces.last().expect("at least four traces");
    let coeffs = analyze(finest, opts.max_degree.max(d as usize))?;
    let p_tilde = coeffs.component(d as usize)?;
    let compiled = CompiledPoly::new(&p_tilde);
    let gradient_defects: Result<Vec<f64>> = scales
        .par_iter()
        .map(|&r| {
            let c = normalization.factor(q, r, d)?;
            Ok(gradient_defect(
                f,
                q,
                r,
                c,
                &compiled,
                &rule,
                opts.radial_order,
            ))
        })
        .collect();

    Ok(BlowupRecord {
        n: q.len(),
        q: q.to_vec(),
        d,
        mode: normalization.mode(),
        scales: scales.to_vec(),
        traces: traces.iter().map(|t| t.values().to_vec()).collect(),
        distances,
        max_distances,
        rate,
        p_tilde,
        p_tilde_spectral: coeffs.of_degree(d as usize),
        parseval_defect: coeffs.parseval_defect,
        gradient_defects: gradient_defects?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityLimit {
    /// Quotient at the finest scale.
    pub value: f64,
    /// (max − min)/value over the final decade of scales.
    pub variation: f64,
    pub exists: bool,
    pub rows: Vec<DensityRow>,
}

/// Limit of ω(B(Q, r))/r^{n−2+d} along decreasing scales.
pub fn density_limit(
    source: &dyn BallMass,
    q: &[f64],
    d: f64,
    scales: &[f64],
) -> Result<DensityLimit> {
    let scan = density_scan(source, q, q.len(), d, scales)?;
    let last = scan.rows.last().expect("nonempty grid");
    let value = last.quotient;
    let cutoff = 10.0 * last.r * (1.0 + 1e-12);
    let tail = scan
        .rows
        .iter()
        .filter(|r| r.r <= cutoff)
        .map(|r| r.quotient);
    let (lo, hi) = tail.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let variation = if value != 0.0 {
        (hi - lo) / value.abs()
    } else {
        f64::INFINITY
    };
    Ok(DensityLimit {
        value,
        variation,
        exists: variation < 0.05 && value > 0.0 && value.is_finite(),
        rows: scan.rows,
    })
}

/// Sampled sup over the closed unit ball of a homogeneous polynomial.
fn sup_on_ball(p: &Polynomial) -> Result<f64> {
    if p.is_zero() {
        return Ok(0.0);
    }
    let f = CompiledPoly::new(p);
    let n = p.n();
    let sup = if n == 2 {
        (0..4096)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 4096.0;
                f.value(&[t.cos(), t.sin()]).abs()
            })
            .fold(0.0, f64::max)
    } else {
        let rule = sphere_rule(n, 40)?;
        rule.nodes()
            .iter()
            .map(|x| f.value(x).abs())
            .fold(0.0, f64::max)
    };
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderVariation {
    pub distance: f64,
    pub exponent: f64,
    /// sup_{B₁} |p̃^{(Q₁)} − p̃^{(Q₂)}|, sampled on the sphere.
    pub sup_difference: f64,
    /// sup_difference / |Q₁ − Q₂|^exponent.
    pub ratio: f64,
}

/// Compares the blowups at two base points against |Q₁ − Q₂|^{αβ/(β+2)}.
pub fn holder_variation_check(
    a: &BlowupRecord,
    b: &BlowupRecord,
    alpha: f64,
    beta: f64,
) -> Result<HolderVariation> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: b.n,
        });
    }
    if a.d != b.d {
        return Err(Error::InvalidArgument(format!(
            "blowup degrees differ ({} vs {})",
            a.d, b.d
        )));
    }
    let exponent = alpha * beta / (beta + 2.0);
    let distance = dist(&a.q, &b.q);
    let sup_difference = sup_on_ball(&(&a.p_tilde - &b.p_tilde))?;
    let ratio = if sup_difference == 0.0 {
        0.0
    } else if distance == 0.0 {
        f64::INFINITY
    } else {
        sup_difference / distance.powf(exponent)
    };
    Ok(HolderVariation {
        distance,
        exponent,
        sup_difference,
        ratio,
    })
}

/// Point cloud approximating a closed set inside B(0, radius).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedSetSample {
    pub n: usize,
    pub radius: f64,
    pub resolution: f64,
    pub points: Vec<Vec<f64>>,
}

impl ClosedSetSample {
    pub fn new(n: usize, radius: f64, resolution: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if !(resolution > 0.0) || !(radius > 0.0) {
            return Err(Error::InvalidArgument(
                "radius and resolution must be positive".into(),
            ));
        }
        if points
            .iter()
            .any(|p| p.len() != n || norm(p) > radius * (1.0 + 1e-12))
        {
            return Err(Error::InvalidArgument(format!(
                "points must lie in B(0, {radius}) in dimension {n}"
            )));
        }
        Ok(ClosedSetSample {
            n,
            radius,
            resolution,
            points,
        })
    }

    pub fn empty(n: usize, radius: f64, resolution: f64) -> Self {
        ClosedSetSample {
            n,
            radius,
            resolution,
            points: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Image under x ↦ s·x, clipped to B(0, radius).
    pub fn scaled(&self, s: f64, radius: f64) -> ClosedSetSample {
        ClosedSetSample {
            n: self.n,
            radius,
            resolution: self.resolution * s.abs(),
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|v| s * v).collect::<Vec<f64>>())
                .filter(|p| norm(p) <= radius)
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.n).map(|i| format!("x{i}")).collect();
        w.write_record(&header)?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bisect_edge(f: &dyn Field, a: &[f64], b: &[f64], fa: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let point = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if (f.value(&point(mid)) > 0.0) == (fa > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    point(0.5 * (lo + hi))
}

/// Zero set of f in B(0, radius) from sign changes along the edges of a
/// cubical grid of spacing `resolution`, refined by bisection.
pub fn zero_set_sample(f: &dyn Field, radius: f64, resolution: f64) -> Result<ClosedSetSample> {
    let n = f.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::Unsupported(format!(
            "zero sets are sampled for n = 2, 3 (n = {n})"
        )));
    }
    if !(resolution > 0.0) || !(radius > 0.0) {
        return Err(Error::InvalidArgument(
            "radius and resolution must be positive".into(),
        ));
    }
    let m = (2.0 * radius / resolution).ceil() as usize + 1;
    let h = 2.0 * radius / (m - 1) as f64;
    let coord = |i: usize| -radius + h * i as f64;
    let plane = if n == 2 { 1 } else { m };
    // Node values, sliced along the first axis.
    let node = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| coord(i)).collect() };
    let slices: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut vals = Vec::with_capacity(m * plane);
            for j in 0..m {
                for k in 0..plane {
                    let idx = if n == 2 { vec![i, j] } else { vec![i, j, k] };
                    vals.push(f.value(&node(&idx)));
                }
            }
            vals
        })
        .collect();
    let value = |idx: &[usize]| -> f64 {
        let k = if n == 2 { 0 } else { idx[2] };
        slices[idx[0]][idx[1] * plane + k]
    };
    let points: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in 0..m {
                for k in 0..plane {
                    let idx = if n == 2 { vec![i, j] } else { vec![i, j, k] };
                    let va = value(&idx);
                    let a = node(&idx);
                    if va == 0.0 {
                        out.push(a.clone());
                        continue;
                    }
                    for axis in 0..n {
                        if idx[axis] + 1 >= m {
                            continue;
                        }
                        let mut nb = idx.clone();
                        nb[axis] += 1;
                        let vb = value(&nb);
                        if va * vb < 0.0 {
                            out.push(bisect_edge(f, &a, &node(&nb), va));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let points = points
        .into_iter()
        .flatten()
        .filter(|p| norm(p) <= radius)
        .collect();
    ClosedSetSample::new(n, radius, resolution, points)
}

/// sup_{a ∈ A} inf_{b ∈ B} |a − b|, with excess(∅, B) = 0 and
/// excess(A, ∅) = ∞ for nonempty A.
pub fn excess(a: &ClosedSetSample, b: &ClosedSetSample) -> f64 {
    excess_points(&a.points, &b.points)
}

fn excess_points(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    a.par_iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
                    dot(&d, &d)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttouchWetsRow {
    pub radius: f64,
    /// excess(A ∩ B(0,ρ), B).
    pub excess_ab: f64,
    /// excess(B ∩ B(0,ρ), A).
    pub excess_ba: f64,
    pub distance: f64,
    /// Twice the coarser sampling resolution; smaller distances are not
    /// resolved.
    pub floor: f64,
}

/// Two-sided excess of the ball-clipped samples at each radius.
pub fn attouch_wets_distance(
    a: &ClosedSetSample,
    b: &ClosedSetSample,
    radii: &[f64],
) -> Result<Vec<AttouchWetsRow>> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: b.n,
        });
    }
    let clip = |s: &ClosedSetSample, r: f64| -> Vec<Vec<f64>> {
        s.points.iter().filter(|p| norm(p) <= r).cloned().collect()
    };
    Ok(radii
        .iter()
        .map(|&r| {
            let excess_ab = excess_points(&clip(a, r), &b.points);
            let excess_ba = excess_points(&clip(b, r), &a.points);
            AttouchWetsRow {
                radius: r,
                excess_ab,
                excess_ba,
                distance: excess_ab.max(excess_ba),
                floor: 2.0 * a.resolution.max(b.resolution),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, PolyField};
    use crate::measures::PolynomialMeasure;
    use crate::poly::fixture;
    use approx::assert_abs_diff_eq;

    fn xy_plus_cubic(n: usize) -> (Polynomial, Polynomial) {
        if n == 2 {
            (
                fixture("xy").unwrap().into_poly(),
                Polynomial::from_slice_terms(2, &[(&[3, 0], 1.0), (&[1, 2], -3.0)]).unwrap(),
            )
        } else {
            (
                fixture("x2-y2").unwrap().into_poly(),
                Polynomial::from_slice_terms(3, &[(&[3, 0, 0], 1.0), (&[1, 2, 0], -3.0)]).unwrap(),
            )
        }
    }

    #[test]
    fn power_traces_of_homogeneous_fields() {
        let p = fixture("re-z3").unwrap().into_poly();
        let f = PolyField::new(p.clone());
        let rule = sphere_rule(2, 24).unwrap();
        let a =
            rescale_trace(&f, &[0.0, 0.0], 0.3, 3, &Normalization::Power, rule.clone()).unwrap();
        let b = rescale_trace(
            &f,
            &[0.0, 0.0],
            0.01,
            3,
            &Normalization::Power,
            rule.clone(),
        )
        .unwrap();
        for ((x, u), v) in rule.nodes().iter().zip(a.values()).zip(b.values()) {
            assert_abs_diff_eq!(*u, p.eval(x), epsilon = 1e-13);
            assert_abs_diff_eq!(*u, *v, epsilon = 1e-12);
        }
    }

    #[test]
    fn measure_traces() {
        let hp = fixture("xy").unwrap();
        let pm = PolynomialMeasure::new(hp.clone()).unwrap();
        let f = PolyField::new(hp.poly().clone());
        let rule = sphere_rule(2, 24).unwrap();
        let norm = Normalization::Measure(&pm);
        let c = 1.0 / (0.5 * 2.0 * pm.l1_norm());
        for r in [0.5, 0.02] {
            let t = rescale_trace(&f, &[0.0, 0.0], r, 2, &norm, rule.clone()).unwrap();
            for (x, v) in rule.nodes().iter().zip(t.values()) {
                assert_abs_diff_eq!(*v, c * hp.eval(x), epsilon = 1e-13);
            }
        }
        // Off the origin the closed form is not available.
        assert!(rescale_trace(&f, &[1.0, 0.0], 0.5, 2, &norm, rule).is_err());
    }

    struct Empty;
    impl BallMass for Empty {
        fn ball_mass(&self, _q: &[f64], _r: f64) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn zero_ball_mass_is_an_error() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let rule = sphere_rule(2, 8).unwrap();
        let r = rescale_trace(
            &f,
            &[0.0, 0.0],
            0.5,
            2,
            &Normalization::Measure(&Empty),
            rule,
        );
        assert!(matches!(r, Err(Error::ZeroBallMass { .. })));
    }

    #[test]
    fn pure_polynomial_blowup() {
        let p = fixture("x2-y2").unwrap().into_poly();
        let f = PolyField::new(p.clone());
        let rule = sphere_rule(3, 24).unwrap();
        let scales = geometric_scales(0.5, 0.5, 6);
        let rec = blowup_sequence(
            &f,
            &[0.0; 3],
            2,
            &scales,
            &Normalization::Power,
            rule,
            &BlowupOptions::default(),
        )
        .unwrap();
        assert!(rec.distances.iter().flatten().all(|v| *v < 1e-13));
        assert_eq!(rec.rate, RateFit::IdenticallyZero);
        assert!((&rec.p_tilde - &p).max_abs_coefficient() < 1e-8);
        assert!(rec.gradient_defects.iter().all(|g| *g < 1e-20));
    }

    #[test]
    fn perturbed_blowup_rate() {
        let (p, q) = xy_plus_cubic(3);
        let f = PolyField::new(&p + &q);
        let rule = sphere_rule(3, 24).unwrap();
        let scales = geometric_scales(0.5, 0.25, 8);
        let rec = blowup_sequence(
            &f,
            &[0.0; 3],
            2,
            &scales,
            &Normalization::Power,
            rule.clone(),
            &BlowupOptions::default(),
        )
        .unwrap();
        let beta = rec.beta_hat().unwrap();
        assert!((beta - 1.0).abs() < 0.1, "{beta}");
        assert!((&rec.p_tilde - &p).max_abs_coefficient() < 1e-6);
        // dist(Y_r, Y_s) = (r − s)‖q‖.
        let qn = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(x, w)| w * q.eval(x).powi(2))
            .sum::<f64>()
            .sqrt();
        assert_abs_diff_eq!(
            rec.distances[0][3],
            (scales[0] - scales[3]) * qn,
            epsilon = 1e-12
        );
        for i in 0..scales.len() {
            for j in 0..scales.len() {
                assert_eq!(rec.distances[i][j], rec.distances[j][i]);
            }
            assert_eq!(rec.distances[i][i], 0.0);
        }
        for w in rec.gradient_defects.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*rec.gradient_defects.last().unwrap() < 1e-4);
        // Distances to a fixed finer scale grow with the coarser one.
        let last = scales.len() - 1;
        for i in 1..last {
            assert!(rec.distances[i - 1][last] >= rec.distances[i][last]);
        }
    }

    #[test]
    fn disjoint_scale_sequences_agree() {
        let (p, q) = xy_plus_cubic(2);
        let f = PolyField::new(&p + &q);
        let rule = sphere_rule(2, 24).unwrap();
        let opts = BlowupOptions::default();
        let a = blowup_sequence(
            &f,
            &[0.0; 2],
            2,
            &geometric_scales(1e-2, 0.5, 6),
            &Normalization::Power,
            rule.clone(),
            &opts,
        )
        .unwrap();
        let b = blowup_sequence(
            &f,
            &[0.0; 2],
            2,
            &geometric_scales(1.3e-2, 0.6, 6),
            &Normalization::Power,
            rule,
            &opts,
        )
        .unwrap();
        assert!((&a.p_tilde - &b.p_tilde).max_abs_coefficient() < 1e-4);
    }

    #[test]
    fn scale_validation() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let rule = sphere_rule(2, 8).unwrap();
        let opts = BlowupOptions::default();
        for s in [vec![0.5, 0.25, 0.125], vec![0.5, 0.25, 0.1, 0.05]] {
            assert!(blowup_sequence(
                &f,
                &[0.0; 2],
                2,
                &s,
                &Normalization::Power,
                rule.clone(),
                &opts
            )
            .is_err());
        }
    }

    #[test]
    fn density_limits() {
        let pm = PolynomialMeasure::new(fixture("xy").unwrap()).unwrap();
        let lim = density_limit(&pm, &[0.0, 0.0], 2.0, &geometric_scales(1.0, 0.5, 12)).unwrap();
        assert_abs_diff_eq!(lim.value, 2.0, epsilon = 1e-12);
        assert!(lim.variation < 1e-12 && lim.exists);
        for id in ["re-z3", "zx", "x2-y2"] {
            let hp = fixture(id).unwrap();
            let d = hp.degree();
            let pm = PolynomialMeasure::new(hp).unwrap();
            let lim = density_limit(
                &pm,
                &vec![0.0; pm.n()],
                f64::from(d),
                &geometric_scales(1.0, 0.5, 12),
            )
            .unwrap();
            assert!(lim.exists);
            assert_abs_diff_eq!(
                lim.value,
                0.5 * f64::from(d) * pm.l1_norm(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn holder_variation_of_identical_records() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let rule = sphere_rule(2, 16).unwrap();
        let rec = blowup_sequence(
            &f,
            &[0.0; 2],
            2,
            &geometric_scales(0.5, 0.5, 5),
            &Normalization::Power,
            rule,
            &BlowupOptions::default(),
        )
        .unwrap();
        let v = holder_variation_check(&rec, &rec, 0.5, 0.2).unwrap();
        assert_eq!((v.sup_difference, v.ratio), (0.0, 0.0));
        let mut other = rec.clone();
        other.d = 3;
        assert!(holder_variation_check(&rec, &other, 0.5, 0.2).is_err());
    }

    #[test]
    fn excess_conventions() {
        let empty = ClosedSetSample::empty(2, 1.0, 0.1);
        let one = ClosedSetSample::new(2, 1.0, 0.1, vec![vec![0.0, 0.5]]).unwrap();
        assert_eq!(excess(&empty, &one), 0.0);
        assert_eq!(excess(&one, &empty), f64::INFINITY);
        assert!(ClosedSetSample::new(2, 1.0, 0.1, vec![vec![2.0, 0.0]]).is_err());
    }

    fn rays_xy(h: f64) -> ClosedSetSample {
        let m = (1.0 / h) as usize;
        let mut pts = Vec::new();
        for k in 0..=m {
            let t = k as f64 * h;
            pts.extend([vec![t, 0.0], vec![-t, 0.0], vec![0.0, t], vec![0.0, -t]]);
        }
        ClosedSetSample::new(2, 1.0, h, pts).unwrap()
    }

    #[test]
    fn zero_set_of_xy() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let res = 0.01;
        let s = zero_set_sample(&f, 1.0, res).unwrap();
        let exact = rays_xy(1e-4);
        assert!(excess(&s, &exact) < 2.0 * res);
        assert!(excess(&exact, &s) < 2.0 * res);
        let f3 = PolyField::new(fixture("zx").unwrap().into_poly());
        let s3 = zero_set_sample(&f3, 1.0, 0.1).unwrap();
        assert!(s3
            .points
            .iter()
            .all(|p| p[0].abs() < 1e-12 || p[2].abs() < 1e-12));
    }

    #[test]
    fn rescaled_zero_sets_converge_linearly() {
        let (p, q) = xy_plus_cubic(2);
        let sigma = zero_set_sample(&PolyField::new(p.clone()), 1.0, 2e-3).unwrap();
        let mut dists = Vec::new();
        for r in [0.2, 0.1, 0.05] {
            let (p, q) = (p.clone(), q.clone());
            // Zero set of v(r·)/r² = p + r q.
            let f = FnField::new(2, move |x: &[f64]| p.eval(x) + r * q.eval(x));
            let s = zero_set_sample(&f, 1.0, 2e-3).unwrap();
            let row = attouch_wets_distance(&s, &sigma, &[1.0]).unwrap().remove(0);
            assert!(row.distance > row.floor);
            dists.push(row.distance / r);
        }
        for w in dists.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 0.1, "{dists:?}");
        }
    }
}
