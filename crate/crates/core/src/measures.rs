//! Harmonic measures of polynomial domains {±p > 0}: closed-form ball
//! masses, sampled zero sets with density |∇p|, the distributional route
//! ∫p^±Δφ and density quotients.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dist, dot, norm, CompiledPoly};
use crate::linalg::linear_fit;
use crate::poly::{HarmonicPolynomial, Polynomial};
use crate::quadrature::{gauss_legendre, GaussRule};
use crate::sphere::sphere_rule;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Fixed generic rotation used for the (θ, φ) charts on S², so that chart
/// poles and grid lines avoid the symmetry axes of the fixtures.
fn chart_rotation() -> [[f64; 3]; 3] {
    let (a, b, c): (f64, f64, f64) = (0.3137, 0.7412, 1.1093);
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    let rz1 = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz2 = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    matmul(&matmul(&rz1, &ry), &rz2)
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn rotate(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [dot(&m[0], &v), dot(&m[1], &v), dot(&m[2], &v)]
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Zeros of a 2π-periodic function sampled at `samples` points, refined by
/// bisection. Pairs of roots hiding between two samples are caught by
/// locating the interior extremum first.
fn periodic_roots(g: &impl Fn(f64) -> f64, samples: usize) -> Vec<f64> {
    let h = TAU / samples as f64;
    let e = 1e-7;
    let dg = |t: f64| g(t + e) - g(t - e);
    let vals: Vec<f64> = (0..samples).map(|k| g(h * k as f64)).collect();
    let slopes: Vec<f64> = (0..samples).map(|k| dg(h * k as f64)).collect();
    let mut roots = Vec::new();
    for k in 0..samples {
        let (a, b) = (h * k as f64, h * (k + 1) as f64);
        let (ga, gb) = (vals[k], vals[(k + 1) % samples]);
        if ga == 0.0 {
            roots.push(a);
        } else if gb != 0.0 && (ga > 0.0) != (gb > 0.0) {
            roots.push(bisect(g, a, b, ga));
        } else if gb != 0.0 {
            let (sa, sb) = (slopes[k], slopes[(k + 1) % samples]);
            // Moving toward zero at a and away at b: an extremum in between.
            if (sa > 0.0) != (sb > 0.0) && (sa > 0.0) != (ga > 0.0) {
                let m = bisect(&dg, a, b, sa);
                let gm = g(m);
                if gm != 0.0 && (gm > 0.0) != (ga > 0.0) {
                    roots.push(bisect(g, a, m, ga));
                    roots.push(bisect(g, m, b, gm));
                }
            }
        }
    }
    roots
}

/// Angles of the rays of Σ_p for homogeneous p in the plane.
pub fn circle_zero_angles(p: &Polynomial) -> Result<Vec<f64>> {
    if p.n() != 2 || !p.is_homogeneous() || p.degree() == 0 {
        return Err(Error::InvalidArgument(
            "zero rays need a nonconstant homogeneous p in the plane".into(),
        ));
    }
    let f = CompiledPoly::new(p);
    let g = |t: f64| f.value(&[t.cos(), t.sin()]);
    Ok(periodic_roots(&g, 64 * (p.degree() as usize + 1)))
}

/// ∫_0^{2π} |g| for a trigonometric polynomial of degree ≤ `degree`, split
/// at the sign changes of g.
fn periodic_abs_integral(g: &impl Fn(f64) -> f64, degree: usize) -> f64 {
    let samples = 8 * (degree + 1);
    let h = TAU / samples as f64;
    let mut breaks: Vec<f64> = (0..=samples).map(|k| h * k as f64).collect();
    breaks.extend(periodic_roots(g, samples));
    breaks.sort_by(f64::total_cmp);
    let rule = gauss_legendre(12);
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            rule.on_interval(w[0], w[1])
                .map(|(t, wt)| wt * g(t).abs())
                .sum::<f64>()
        })
        .sum()
}

fn adaptive_gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let coarse = gauss_legendre(8);
    let fine = gauss_legendre(16);
    let c: f64 = coarse.on_interval(a, b).map(|(t, w)| w * f(t)).sum();
    let fv: f64 = fine.on_interval(a, b).map(|(t, w)| w * f(t)).sum();
    if (c - fv).abs() <= tol || depth == 0 {
        return fv;
    }
    let m = 0.5 * (a + b);
    adaptive_gauss(f, a, m, 0.5 * tol, depth - 1) + adaptive_gauss(f, m, b, 0.5 * tol, depth - 1)
}

/// ‖p‖_{L¹(S^{n-1})} for homogeneous p. Exact splitting at the zero set for
/// n = 2 and n = 3 (latitude circles in the chart frame); n = 4, 5 use a
/// degree-60 product rule on |p|.
pub fn sphere_l1_norm(p: &Polynomial) -> Result<f64> {
    let f = CompiledPoly::new(p);
    let d = p.degree() as usize;
    match p.n() {
        2 => Ok(periodic_abs_integral(
            &|t: f64| f.value(&[t.cos(), t.sin()]),
            d,
        )),
        3 => {
            let rot = chart_rotation();
            let circle = |t: f64| {
                let s = (1.0 - t * t).max(0.0).sqrt();
                periodic_abs_integral(
                    &|ph: f64| f.value(&rotate(&rot, [s * ph.cos(), s * ph.sin(), t])),
                    d,
                )
            };
            let scale = p.max_abs_coefficient();
            Ok(adaptive_gauss(&circle, -1.0, 1.0, 1e-13 * scale, 40))
        }
        4 | 5 => {
            let rule = sphere_rule(p.n(), 60)?;
            Ok(rule.integrate(|x| f.value(x).abs()))
        }
        n => Err(Error::Unsupported(format!(
            "L1 norms on S^{} are not available",
            n - 1
        ))),
    }
}

/// ω_p for a homogeneous harmonic polynomial p.
#[derive(Clone, Debug)]
pub struct PolynomialMeasure {
    p: HarmonicPolynomial,
    l1_norm: f64,
}

impl PolynomialMeasure {
    pub fn new(p: HarmonicPolynomial) -> Result<Self> {
        if p.degree() == 0 || !p.homogeneous() || p.is_zero() {
            return Err(Error::InvalidArgument(
                "polynomial measures need a nonconstant homogeneous p".into(),
            ));
        }
        let l1_norm = sphere_l1_norm(&p)?;
        if !(l1_norm > 0.0) {
            return Err(Error::InvalidArgument("p has zero L1 norm".into()));
        }
        Ok(PolynomialMeasure { p, l1_norm })
    }

    pub fn p(&self) -> &HarmonicPolynomial {
        &self.p
    }

    pub fn degree(&self) -> u32 {
        self.p.degree()
    }

    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// ω_p(B(0, r)) = (d/2) r^{n−2+d} ‖p‖_{L¹(S^{n−1})}.
    pub fn ball_measure(&self, r: f64) -> f64 {
        let d = f64::from(self.degree());
        0.5 * d * r.powf(self.n() as f64 - 2.0 + d) * self.l1_norm
    }

    /// Factor that rescales ω_p to unit mass on B(0, 1).
    pub fn normalization(&self) -> f64 {
        1.0 / self.ball_measure(1.0)
    }
}

/// Ball masses ω(B(Q, r)) from some representation of a measure.
pub trait BallMass {
    fn ball_mass(&self, q: &[f64], r: f64) -> Result<f64>;
}

impl BallMass for PolynomialMeasure {
    fn ball_mass(&self, q: &[f64], r: f64) -> Result<f64> {
        if q.iter().any(|v| *v != 0.0) {
            return Err(Error::Unsupported(
                "closed-form ball measure is centered at the origin".into(),
            ));
        }
        Ok(self.ball_measure(r))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOptions {
    /// Chart cells in θ (φ uses twice as many) for n = 3, and root-search
    /// samples per degree for n = 2.
    pub resolution: usize,
    /// Equal radial panels on [0, R].
    pub radial_panels: usize,
    /// Gauss nodes per radial panel.
    pub radial_order: usize,
    /// Smallest chart cell (radians) reached when splitting saddle cells.
    pub min_cell: f64,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            resolution: 256,
            radial_panels: 4,
            radial_order: 8,
            min_cell: 1e-3,
        }
    }
}

/// A piece of the spherical section Σ_p ∩ S^{n−1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcPiece {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Quadrature node on the curve and its arc-length weight.
    pub node: Vec<f64>,
    pub length: f64,
}

/// Quadrature sample of Σ_p ∩ B(0, R) with density |∇p|.
#[derive(Clone, Debug)]
pub struct SurfaceSample {
    n: usize,
    radius: f64,
    /// Directions γ on S^{n−1} with their arc weights (1 for rays).
    directions: Vec<(Vec<f64>, f64)>,
    pieces: Vec<ArcPiece>,
    radial: GaussRule,
    panels: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    grad_norms: Vec<f64>,
}

impl SurfaceSample {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn grad_norms(&self) -> &[f64] {
        &self.grad_norms
    }
    /// Unit directions of the sampled cone with arc weights.
    pub fn directions(&self) -> &[(Vec<f64>, f64)] {
        &self.directions
    }
    /// Curve pieces (n = 3 only).
    pub fn pieces(&self) -> &[ArcPiece] {
        &self.pieces
    }

    /// Σ weight·|∇p| over Σ_p ∩ B(0, r), with the panel containing r
    /// integrated exactly through Lagrange weights.
    #[allow(clippy::needless_range_loop)]
    pub fn origin_mass(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || r > self.radius * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside the sampled ball of radius {}",
                self.radius
            )));
        }
        let m = self.radial.nodes.len();
        let h = self.radius / self.panels as f64;
        let full = ((r / h).floor() as usize).min(self.panels);
        let mut partial = vec![0.0; m];
        if full < self.panels {
            let a = h * full as f64;
            if r > a {
                let nodes: Vec<f64> = self.radial.on_interval(a, a + h).map(|p| p.0).collect();
                for (s, w) in self.radial.on_interval(a, r) {
                    for i in 0..m {
                        let l: f64 = (0..m)
                            .filter(|&j| j != i)
                            .map(|j| (s - nodes[j]) / (nodes[i] - nodes[j]))
                            .product();
                        partial[i] += w * l;
                    }
                }
            }
        }
        let per_dir = self.panels * m;
        let mut total = 0.0;
        for k in 0..self.directions.len() {
            for panel in 0..self.panels {
                for i in 0..m {
                    let idx = k * per_dir + panel * m + i;
                    let point_mass = self.weights[idx] * self.grad_norms[idx];
                    if panel < full {
                        total += point_mass;
                    } else if panel == full {
                        // Replace the radial weight by the partial one.
                        let radial_w = self.radial.weights[i] * 0.5 * h;
                        total += point_mass / radial_w * partial[i];
                    }
                }
            }
        }
        Ok(total)
    }

    /// CSV with coordinates, weight and grad_norm per point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        header.push("grad_norm".into());
        w.write_record(&header)?;
        for ((x, wt), g) in self.points.iter().zip(&self.weights).zip(&self.grad_norms) {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(wt.to_string());
            rec.push(g.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pieces joined into polylines, seeded in chart-cell order.
    pub fn polylines(&self) -> Vec<Vec<Vec<f64>>> {
        assemble_polylines(&self.pieces)
    }
}

impl BallMass for SurfaceSample {
    fn ball_mass(&self, q: &[f64], r: f64) -> Result<f64> {
        if q.iter().all(|v| *v == 0.0) {
            return self.origin_mass(r);
        }
        Ok(self
            .points
            .iter()
            .zip(&self.weights)
            .zip(&self.grad_norms)
            .filter(|((x, _), _)| dist(x, q) <= r)
            .map(|((_, w), g)| w * g)
            .sum())
    }
}

fn key(x: &[f64]) -> (i64, i64, i64) {
    let k = |v: f64| (v * 1e8).round() as i64;
    (k(x[0]), k(x[1]), k(*x.get(2).unwrap_or(&0.0)))
}

fn assemble_polylines(pieces: &[ArcPiece]) -> Vec<Vec<Vec<f64>>> {
    let mut at: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pieces.iter().enumerate() {
        at.entry(key(&p.a)).or_default().push(i);
        at.entry(key(&p.b)).or_default().push(i);
    }
    let mut used = vec![false; pieces.len()];
    let mut lines = Vec::new();
    for seed in 0..pieces.len() {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let mut line = vec![pieces[seed].a.clone(), pieces[seed].b.clone()];
        // Extend forward from b, then backward from a.
        for forward in [true, false] {
            loop {
                let end = if forward { line.last() } else { line.first() }.expect("nonempty");
                let k = key(end);
                let next = at[&k]
                    .iter()
                    .copied()
                    .find(|&j| !used[j] && at[&k].len() == 2);
                let Some(j) = next else { break };
                used[j] = true;
                let p = &pieces[j];
                let other = if key(&p.a) == k {
                    p.b.clone()
                } else {
                    p.a.clone()
                };
                if forward {
                    line.push(other);
                } else {
                    line.insert(0, other);
                }
            }
        }
        lines.push(line);
    }
    lines
}

struct Chart<'a> {
    f: &'a CompiledPoly,
    rot: [[f64; 3]; 3],
    grad_scale: f64,
    degree: f64,
    min_cell: f64,
}

impl Chart<'_> {
    fn point(&self, th: f64, ph: f64) -> [f64; 3] {
        let s = th.sin();
        rotate(&self.rot, [s * ph.cos(), s * ph.sin(), th.cos()])
    }

    fn value(&self, th: f64, ph: f64) -> f64 {
        self.f.value(&self.point(th, ph))
    }

    fn tangential_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.f.value_and_gradient(x);
        let radial = dot(&g, x);
        (
            v,
            g.iter().zip(x).map(|(gi, xi)| gi - radial * xi).collect(),
        )
    }

    /// Newton projection of a unit vector onto the curve along the sphere.
    fn project(&self, x: &mut [f64]) {
        for _ in 0..4 {
            let (v, gt) = self.tangential_gradient(x);
            let g2 = dot(&gt, &gt);
            if g2 < 1e-20 * self.grad_scale * self.grad_scale {
                return;
            }
            for (xi, gi) in x.iter_mut().zip(&gt) {
                *xi -= v * gi / g2;
            }
            let nx = norm(x);
            for xi in x.iter_mut() {
                *xi /= nx;
            }
        }
    }

    fn piece(&self, a: [f64; 3], b: [f64; 3]) -> ArcPiece {
        let chord = dist(&a, &b);
        let length = 2.0 * (0.5 * chord).min(1.0).asin();
        let mut node: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let nm = norm(&node);
        for v in node.iter_mut() {
            *v /= nm;
        }
        self.project(&mut node);
        ArcPiece {
            a: a.to_vec(),
            b: b.to_vec(),
            node,
            length,
        }
    }

    /// Crossings of the four cell edges, in boundary order.
    fn crossings(&self, th: [f64; 2], ph: [f64; 2], v: [f64; 4]) -> Vec<[f64; 3]> {
        // Corners: (th0,ph0), (th0,ph1), (th1,ph1), (th1,ph0).
        let corners = [
            (th[0], ph[0]),
            (th[0], ph[1]),
            (th[1], ph[1]),
            (th[1], ph[0]),
        ];
        let mut out = Vec::new();
        for e in 0..4 {
            let (a, b) = (corners[e], corners[(e + 1) % 4]);
            let (va, vb) = (v[e], v[(e + 1) % 4]);
            if (va >= 0.0) == (vb >= 0.0) {
                continue;
            }
            let g = |t: f64| self.value(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            let t = bisect(&g, 0.0, 1.0, va);
            out.push(self.point(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
        out
    }

    fn split(
        &self,
        th: [f64; 2],
        ph: [f64; 2],
        v: [f64; 4],
        out: &mut Vec<ArcPiece>,
    ) -> Result<()> {
        let tm = 0.5 * (th[0] + th[1]);
        let pm = 0.5 * (ph[0] + ph[1]);
        let e = [
            self.value(th[0], pm),
            self.value(tm, ph[1]),
            self.value(th[1], pm),
            self.value(tm, ph[0]),
        ];
        let c = self.value(tm, pm);
        self.cell([th[0], tm], [ph[0], pm], [v[0], e[0], c, e[3]], out)?;
        self.cell([th[0], tm], [pm, ph[1]], [e[0], v[1], e[1], c], out)?;
        self.cell([tm, th[1]], [pm, ph[1]], [c, e[1], v[2], e[2]], out)?;
        self.cell([tm, th[1]], [ph[0], pm], [e[3], c, e[2], v[3]], out)
    }

    fn cell(&self, th: [f64; 2], ph: [f64; 2], v: [f64; 4], out: &mut Vec<ArcPiece>) -> Result<()> {
        let size = th[1] - th[0];
        let xs = self.crossings(th, ph, v);
        match xs.len() {
            0 => {
                // A sign-constant cell can still hide a short arc near a
                // tangency with the grid; refine while a zero is possible.
                let diam = dist(&self.point(th[0], ph[0]), &self.point(th[1], ph[1]))
                    .max(dist(&self.point(th[0], ph[1]), &self.point(th[1], ph[0])));
                let least = v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
                if size > self.min_cell && least <= 1.5 * self.grad_scale * diam {
                    self.split(th, ph, v, out)
                } else {
                    Ok(())
                }
            }
            2 => {
                // Near a branch point the two crossings may sit on different
                // branches; refine there and route through the center.
                let tm = 0.5 * (th[0] + th[1]);
                let pm = 0.5 * (ph[0] + ph[1]);
                let center = self.point(tm, pm);
                let g = norm(&self.tangential_gradient(&center).1);
                let diam = dist(&self.point(th[0], ph[0]), &self.point(th[1], ph[1]));
                if g <= 2.0 * self.degree * self.grad_scale * diam {
                    if size > self.min_cell {
                        return self.split(th, ph, v, out);
                    }
                    let mut mid: Vec<f64> = xs[0]
                        .iter()
                        .zip(&xs[1])
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    let nm = norm(&mid);
                    mid.iter_mut().for_each(|x| *x /= nm);
                    let (pv, gt) = self.tangential_gradient(&mid);
                    // Chord midpoint far from the curve: the crossings lie on
                    // different branches.
                    if pv.abs() > 0.1 * norm(&gt) * dist(&xs[0], &xs[1]) {
                        out.push(self.piece(xs[0], center));
                        out.push(self.piece(center, xs[1]));
                        return Ok(());
                    }
                }
                out.push(self.piece(xs[0], xs[1]));
                Ok(())
            }
            4 => {
                if size > self.min_cell {
                    return self.split(th, ph, v, out);
                }
                let center = self.point(0.5 * (th[0] + th[1]), 0.5 * (ph[0] + ph[1]));
                let (_, gt) = self.tangential_gradient(&center);
                if norm(&gt) <= 50.0 * size * self.grad_scale {
                    // Branch point of the curve: connect each crossing to it.
                    for x in xs {
                        out.push(self.piece(x, center));
                    }
                    Ok(())
                } else {
                    Err(Error::BranchAmbiguity {
                        location: center.to_vec(),
                        detail: format!(
                            "saddle cell of size {size:e} with |grad| = {:e}",
                            norm(&gt)
                        ),
                    })
                }
            }
            k => Err(Error::BranchAmbiguity {
                location: self
                    .point(0.5 * (th[0] + th[1]), 0.5 * (ph[0] + ph[1]))
                    .to_vec(),
                detail: format!("{k} edge crossings in one cell"),
            }),
        }
    }
}

/// Traces Σ_p ∩ S² on a rotated (θ, φ) grid.
pub fn trace_spherical_curve(p: &Polynomial, opts: &SurfaceOptions) -> Result<Vec<ArcPiece>> {
    if p.n() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: p.n(),
        });
    }
    let f = CompiledPoly::new(p);
    let nt = opts.resolution.max(4);
    let np = 2 * nt;
    let chart0 = Chart {
        f: &f,
        rot: chart_rotation(),
        grad_scale: 1.0,
        degree: f64::from(p.degree()),
        min_cell: opts.min_cell,
    };
    let ths: Vec<f64> = (0..=nt)
        .map(|i| std::f64::consts::PI * i as f64 / nt as f64)
        .collect();
    let phs: Vec<f64> = (0..=np).map(|j| TAU * j as f64 / np as f64).collect();
    let vals: Vec<Vec<f64>> = ths
        .iter()
        .map(|&t| phs.iter().map(|&ph| chart0.value(t, ph)).collect())
        .collect();
    let grad_scale = ths
        .iter()
        .flat_map(|&t| phs.iter().map(move |&ph| (t, ph)))
        .map(|(t, ph)| norm(&chart0.tangential_gradient(&chart0.point(t, ph)).1))
        .fold(0.0, f64::max);
    let chart = Chart {
        grad_scale,
        ..chart0
    };
    let rows: Result<Vec<Vec<ArcPiece>>> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in 0..np {
                let v = [
                    vals[i][j],
                    vals[i][j + 1],
                    vals[i + 1][j + 1],
                    vals[i + 1][j],
                ];
                chart.cell([ths[i], ths[i + 1]], [phs[j], phs[j + 1]], v, &mut out)?;
            }
            Ok(out)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Samples Σ_p ∩ B(0, R) with surface weights and densities |∇p|.
pub fn surface_sample(p: &Polynomial, radius: f64, opts: &SurfaceOptions) -> Result<SurfaceSample> {
    if !p.is_homogeneous() || p.degree() == 0 {
        return Err(Error::InvalidArgument(
            "surface sampling needs a nonconstant homogeneous p".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} must be positive"
        )));
    }
    let n = p.n();
    let f = CompiledPoly::new(p);
    let (directions, pieces): (Vec<(Vec<f64>, f64)>, Vec<ArcPiece>) = match n {
        2 => {
            let g = |t: f64| f.value(&[t.cos(), t.sin()]);
            let samples = opts.resolution.max(8) * (p.degree() as usize + 1);
            let dirs = periodic_roots(&g, samples)
                .into_iter()
                .map(|t| (vec![t.cos(), t.sin()], 1.0))
                .collect();
            (dirs, Vec::new())
        }
        3 => {
            let pieces = trace_spherical_curve(p, opts)?;
            let dirs = pieces
                .iter()
                .map(|pc| (pc.node.clone(), pc.length))
                .collect();
            (dirs, pieces)
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "surface sampling is available for n = 2, 3 (got {n})"
            )))
        }
    };
    let radial = gauss_legendre(opts.radial_order).as_ref().clone();
    let h = radius / opts.radial_panels as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut grad_norms = Vec::new();
    for (gamma, arc) in &directions {
        for panel in 0..opts.radial_panels {
            let a = h * panel as f64;
            for (s, ws) in radial.on_interval(a, a + h) {
                let x: Vec<f64> = gamma.iter().map(|g| s * g).collect();
                let (_, grad) = f.value_and_gradient(&x);
                grad_norms.push(norm(&grad));
                // Cone element s^{n−2} ds dℓ.
                weights.push(arc * s.powi(n as i32 - 2) * ws);
                points.push(x);
            }
        }
    }
    Ok(SurfaceSample {
        n,
        radius,
        directions,
        pieces,
        radial,
        panels: opts.radial_panels,
        points,
        weights,
        grad_norms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub r: f64,
    pub surface: f64,
    pub closed_form: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub max_relative_error: f64,
}

/// Surface-route ball masses against the closed form.
pub fn surface_measure_validate(
    sample: &SurfaceSample,
    pm: &PolynomialMeasure,
    r_list: &[f64],
) -> Result<ValidationReport> {
    let rows: Result<Vec<ValidationRow>> = r_list
        .iter()
        .map(|&r| {
            let surface = sample.origin_mass(r)?;
            let closed_form = pm.ball_measure(r);
            Ok(ValidationRow {
                r,
                surface,
                closed_form,
                relative_error: (surface - closed_form).abs() / closed_form,
            })
        })
        .collect();
    let rows = rows?;
    let max_relative_error = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Ok(ValidationReport {
        rows,
        max_relative_error,
    })
}

/// Smooth compactly supported test function with an analytic Laplacian.
pub trait TestField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn laplacian(&self, x: &[f64]) -> f64;
    /// Center and radial band outside of which Δφ vanishes.
    fn laplacian_band(&self) -> (Vec<f64>, f64, f64);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialProfile {
    /// (1 − |x|²/R²)⁴ on B(0, R).
    Bump { radius: f64 },
    /// 1 on B(0, r − w/2), 0 outside B(0, r + w/2), C³ smoothstep between.
    MollifiedIndicator { radius: f64, width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialTestField {
    pub center: Vec<f64>,
    pub profile: RadialProfile,
}

fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = t * t;
    let t3 = t2 * t;
    let v = t3 * t * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t3);
    let d1 = 140.0 * t3 * (1.0 - t).powi(3);
    let d2 = 420.0 * t2 * (1.0 - t).powi(2) * (1.0 - 2.0 * t);
    (v, d1, d2)
}

impl RadialTestField {
    /// Profile value, first and second derivative in ρ = |x − c|.
    fn radial(&self, rho: f64) -> (f64, f64, f64) {
        match self.profile {
            RadialProfile::Bump { radius } => {
                if rho >= radius {
                    return (0.0, 0.0, 0.0);
                }
                let u = 1.0 - rho * rho / (radius * radius);
                let k = 2.0 / (radius * radius);
                (
                    u.powi(4),
                    -4.0 * u.powi(3) * k * rho,
                    12.0 * u * u * k * k * rho * rho - 4.0 * u.powi(3) * k,
                )
            }
            RadialProfile::MollifiedIndicator { radius, width } => {
                let t = (rho - (radius - 0.5 * width)) / width;
                let (s, s1, s2) = smoothstep(t);
                (1.0 - s, -s1 / width, -s2 / (width * width))
            }
        }
    }
}

impl TestField for RadialTestField {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.radial(dist(x, &self.center)).0
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        let rho = dist(x, &self.center);
        let (_, f1, f2) = self.radial(rho);
        if rho == 0.0 {
            // f1/ρ → f''(0) for these even profiles.
            return self.dim() as f64 * f2;
        }
        f2 + (self.dim() as f64 - 1.0) / rho * f1
    }
    fn laplacian_band(&self) -> (Vec<f64>, f64, f64) {
        match self.profile {
            RadialProfile::Bump { radius } => (self.center.clone(), 0.0, radius),
            RadialProfile::MollifiedIndicator { radius, width } => (
                self.center.clone(),
                radius - 0.5 * width,
                radius + 0.5 * width,
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRule {
    /// Half-width of the integration box around the test field center.
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
}

impl Default for VolumeRule {
    fn default() -> Self {
        VolumeRule {
            half_width: 1.25,
            panels: 40,
            order: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionalReport {
    pub plus: f64,
    pub minus: f64,
    /// ∫|p Δφ|.
    pub scale: f64,
    /// |plus − minus| / scale.
    pub relative_disagreement: f64,
}

/// Fails with `SupportTruncation` if φ is non-negligible on the faces of the
/// box centered at φ's center.
pub(crate) fn check_support(phi: &dyn TestField, rule: &VolumeRule) -> Result<()> {
    let n = phi.dim();
    let (center, _, _) = phi.laplacian_band();
    let m = 8 * rule.panels;
    let width = 2.0 * rule.half_width;
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; n];
    for axis in 0..n {
        for side in [0.0, width] {
            for idx in 0..(m + 1).pow(n as u32 - 1) {
                let mut rest = idx;
                for (i, xi) in x.iter_mut().enumerate() {
                    let lo = center[i] - rule.half_width;
                    if i == axis {
                        *xi = lo + side;
                    } else {
                        *xi = lo + width * (rest % (m + 1)) as f64 / m as f64;
                        rest /= m + 1;
                    }
                }
                worst = worst.max(phi.value(&x).abs());
            }
        }
    }
    if worst > 1e-12 {
        return Err(Error::SupportTruncation { value: worst });
    }
    Ok(())
}

/// Σ w_i f(x_i) over composite tensor Gauss nodes of the box around φ's
/// center, skipping cells that miss the band where Δφ lives. Slabs along
/// the first axis run in parallel and are summed in order.
pub(crate) fn box_quadrature<const K: usize>(
    phi: &dyn TestField,
    rule: &VolumeRule,
    f: impl Fn(&[f64]) -> [f64; K] + Sync,
) -> [f64; K] {
    let n = phi.dim();
    let (center, band_lo, band_hi) = phi.laplacian_band();
    let lo: Vec<f64> = center.iter().map(|c| c - rule.half_width).collect();
    let h = 2.0 * rule.half_width / rule.panels as f64;
    let g = gauss_legendre(rule.order);
    let k = rule.order;
    let cells = rule.panels.pow(n as u32 - 1);
    let slabs: Vec<[f64; K]> = (0..rule.panels)
        .into_par_iter()
        .map(|i0| {
            let mut acc = [0.0; K];
            let mut x = vec![0.0; n];
            let mut cell = vec![0usize; n];
            cell[0] = i0;
            for rest in 0..cells {
                let mut r = rest;
                for c in cell.iter_mut().skip(1) {
                    *c = r % rule.panels;
                    r /= rule.panels;
                }
                let (mut near, mut far) = (0.0f64, 0.0f64);
                for i in 0..n {
                    let a = lo[i] + h * cell[i] as f64 - center[i];
                    let b = a + h;
                    let closest = if a > 0.0 {
                        a
                    } else if b < 0.0 {
                        -b
                    } else {
                        0.0
                    };
                    near += closest * closest;
                    far += a.abs().max(b.abs()).powi(2);
                }
                if near.sqrt() > band_hi || far.sqrt() < band_lo {
                    continue;
                }
                for q in 0..k.pow(n as u32) {
                    let mut qq = q;
                    let mut w = 1.0;
                    for i in 0..n {
                        let node = qq % k;
                        qq /= k;
                        x[i] = lo[i] + h * cell[i] as f64 + 0.5 * h * (g.nodes[node] + 1.0);
                        w *= 0.5 * h * g.weights[node];
                    }
                    let vals = f(&x);
                    for (a, v) in acc.iter_mut().zip(vals) {
                        *a += w * v;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; K];
    for s in &slabs {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    total
}

/// ∫ p⁺ Δφ and ∫ p⁻ Δφ by composite tensor Gauss quadrature on a box.
pub fn distributional_measure(
    p: &Polynomial,
    phi: &dyn TestField,
    rule: &VolumeRule,
) -> Result<DistributionalReport> {
    if phi.dim() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: phi.dim(),
        });
    }
    check_support(phi, rule)?;
    let f = CompiledPoly::new(p);
    let [plus, minus, scale] = box_quadrature(phi, rule, |x| {
        let lap = phi.laplacian(x);
        if lap == 0.0 {
            return [0.0; 3];
        }
        let v = f.value(x);
        [v.max(0.0) * lap, (-v).max(0.0) * lap, (v * lap).abs()]
    });
    // Disagreement is measured against ∫|p Δφ|, which stays meaningful when
    // both routes vanish.
    let relative_disagreement = if scale > 0.0 {
        (plus - minus).abs() / scale
    } else {
        0.0
    };
    if relative_disagreement > 1e-4 {
        return Err(Error::VerificationFailed(format!(
            "p+ and p- routes disagree: {plus} vs {minus}"
        )));
    }
    Ok(DistributionalReport {
        plus,
        minus,
        scale,
        relative_disagreement,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub r: f64,
    pub mass: f64,
    pub quotient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityScan {
    pub exponent: f64,
    pub rows: Vec<DensityRow>,
    pub min: f64,
    pub max: f64,
    pub log_slope: f64,
}

impl DensityScan {
    /// CSV with columns r, quotient.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "quotient"])?;
        for row in &self.rows {
            w.write_record([row.r.to_string(), row.quotient.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ω(B(Q, r))/r^{n−2+d} along a decreasing grid.
pub fn density_scan(
    source: &dyn BallMass,
    q: &[f64],
    n: usize,
    d: f64,
    r_grid: &[f64],
) -> Result<DensityScan> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    if r_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("radii must be decreasing".into()));
    }
    let exponent = n as f64 - 2.0 + d;
    let rows: Result<Vec<DensityRow>> = r_grid
        .iter()
        .map(|&r| {
            let mass = source.ball_mass(q, r)?;
            Ok(DensityRow {
                r,
                mass,
                quotient: mass / r.powf(exponent),
            })
        })
        .collect();
    let rows = rows?;
    let min = rows
        .iter()
        .map(|r| r.quotient)
        .fold(f64::INFINITY, f64::min);
    let max = rows
        .iter()
        .map(|r| r.quotient)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_slope = if rows.len() >= 2 && min > 0.0 {
        let x: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.quotient.ln()).collect();
        linear_fit(&x, &y).0
    } else {
        0.0
    };
    Ok(DensityScan {
        exponent,
        rows,
        min,
        max,
        log_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::fixture;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn measure(id: &str) -> PolynomialMeasure {
        PolynomialMeasure::new(fixture(id).unwrap()).unwrap()
    }

    #[test]
    fn l1_norms() {
        assert_abs_diff_eq!(measure("xy").l1_norm(), 2.0, epsilon = 1e-13);
        // Re z³ on the circle: ∫|cos 3θ| = 4.
        assert_abs_diff_eq!(measure("re-z3").l1_norm(), 4.0, epsilon = 1e-12);
        // ∫_{S²}|z| = 2π.
        let z = HarmonicPolynomial::new(Polynomial::coordinate(3, 2)).unwrap();
        assert_abs_diff_eq!(
            PolynomialMeasure::new(z).unwrap().l1_norm(),
            2.0 * PI,
            epsilon = 1e-10
        );
        // ∫sin²θ|cosθ|dθ · ∫|cosφ|dφ and ∫sin³θ dθ · ∫|cos2φ|dφ.
        assert_abs_diff_eq!(measure("zx").l1_norm(), 8.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(measure("x2-y2").l1_norm(), 16.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn ball_measure_examples() {
        let m = measure("xy");
        assert_abs_diff_eq!(m.ball_measure(1.0), 2.0, epsilon = 1e-13);
        for id in ["xy", "x2-y2", "re-z3", "zx"] {
            let m = measure(id);
            let e = m.n() as f64 - 2.0 + f64::from(m.degree());
            let ratio = m.ball_measure(0.3 * 0.7) / m.ball_measure(0.7);
            assert!((ratio - 0.3f64.powf(e)).abs() < 1e-10 * ratio);
        }
        assert!(PolynomialMeasure::new(
            HarmonicPolynomial::new(Polynomial::constant(2, 1.0)).unwrap()
        )
        .is_err());
    }

    #[test]
    fn rays_of_xy() {
        let s = surface_sample(&fixture("xy").unwrap(), 1.0, &SurfaceOptions::default()).unwrap();
        assert_eq!(s.directions().len(), 4);
        assert_abs_diff_eq!(s.weights().iter().sum::<f64>(), 4.0, epsilon = 1e-12);
        for (x, _) in s.directions() {
            assert!(x[0].abs() < 1e-12 || x[1].abs() < 1e-12);
        }
        let pm = measure("xy");
        let rep = surface_measure_validate(&s, &pm, &[0.5, 1.0, 0.37]).unwrap();
        assert!(rep.max_relative_error < 1e-10);
    }

    #[test]
    fn cone_of_x2_y2() {
        let p = fixture("x2-y2").unwrap();
        let s = surface_sample(&p, 1.0, &SurfaceOptions::default()).unwrap();
        let area: f64 = s.weights().iter().sum();
        assert!((area - 2.0 * PI).abs() < 1e-4 * 2.0 * PI, "{area}");
        for x in s.points() {
            let r = norm(x);
            assert!(p.eval(x).abs() < 1e-8 * r * r);
        }
        let rep = surface_measure_validate(&s, &measure("x2-y2"), &[0.5, 1.0]).unwrap();
        assert!(rep.max_relative_error < 1e-3, "{rep:?}");
        let lines = s.polylines();
        assert!(!lines.is_empty());
    }

    #[test]
    fn re_z3_and_zx_surfaces() {
        let s =
            surface_sample(&fixture("re-z3").unwrap(), 1.0, &SurfaceOptions::default()).unwrap();
        assert_eq!(s.directions().len(), 6);
        let rep = surface_measure_validate(&s, &measure("re-z3"), &[0.5, 1.0]).unwrap();
        assert!(rep.max_relative_error < 1e-3);
        let s = surface_sample(&fixture("zx").unwrap(), 1.0, &SurfaceOptions::default()).unwrap();
        let rep = surface_measure_validate(&s, &measure("zx"), &[0.5, 1.0]).unwrap();
        assert!(rep.max_relative_error < 1e-3);
    }

    #[test]
    fn unresolved_saddle_is_reported() {
        // Two hyperbola branches pass close to each other near the pole.
        let p = Polynomial::from_slice_terms(
            3,
            &[(&[2, 0, 0], 1.0), (&[0, 2, 0], -1.05), (&[0, 0, 2], 0.05)],
        )
        .unwrap();
        let coarse = SurfaceOptions {
            resolution: 6,
            min_cell: 1.0,
            ..Default::default()
        };
        let r = trace_spherical_curve(&p, &coarse);
        assert!(matches!(r, Err(Error::BranchAmbiguity { .. })) || r.is_ok());
        let fine = trace_spherical_curve(&p, &SurfaceOptions::default());
        assert!(fine.is_ok());
    }

    #[test]
    fn distributional_routes() {
        let xy = fixture("xy").unwrap();
        let bump = RadialTestField {
            center: vec![0.0, 0.0],
            profile: RadialProfile::Bump { radius: 1.0 },
        };
        let rep = distributional_measure(&xy, &bump, &VolumeRule::default()).unwrap();
        assert!(rep.relative_disagreement < 1e-4 && rep.plus > 0.0);

        let off = RadialTestField {
            center: vec![1.0, 1.0],
            profile: RadialProfile::Bump { radius: 0.5 },
        };
        let rule = VolumeRule {
            half_width: 0.6,
            ..Default::default()
        };
        let rep = distributional_measure(&xy, &off, &rule).unwrap();
        assert!(
            rep.minus == 0.0 && rep.plus.abs() < 1e-5 * rep.scale,
            "{rep:?}"
        );

        let ind = RadialTestField {
            center: vec![0.0, 0.0],
            profile: RadialProfile::MollifiedIndicator {
                radius: 0.5,
                width: 0.05,
            },
        };
        let shell = VolumeRule {
            half_width: 0.6,
            panels: 96,
            order: 6,
        };
        let rep = distributional_measure(&xy, &ind, &shell).unwrap();
        let want = measure("xy").ball_measure(0.5);
        assert!((rep.plus - want).abs() < 0.02 * want, "{} {want}", rep.plus);

        let tight = VolumeRule {
            half_width: 0.9,
            ..Default::default()
        };
        assert!(matches!(
            distributional_measure(&xy, &bump, &tight),
            Err(Error::SupportTruncation { .. })
        ));
    }

    #[test]
    fn laplacian_of_profiles() {
        let fields = [
            RadialTestField {
                center: vec![0.1, -0.2, 0.05],
                profile: RadialProfile::Bump { radius: 0.8 },
            },
            RadialTestField {
                center: vec![0.0, 0.0, 0.0],
                profile: RadialProfile::MollifiedIndicator {
                    radius: 0.5,
                    width: 0.2,
                },
            },
        ];
        let h = 1e-4;
        for f in &fields {
            let x = [0.3, 0.25, -0.1];
            let mut fd = -6.0 * f.value(&x);
            for i in 0..3 {
                let mut y = x;
                y[i] += h;
                fd += f.value(&y);
                y[i] -= 2.0 * h;
                fd += f.value(&y);
            }
            fd /= h * h;
            assert!(
                (fd - f.laplacian(&x)).abs() < 1e-4 * (1.0 + fd.abs()),
                "{fd} {}",
                f.laplacian(&x)
            );
        }
    }

    #[test]
    fn density_scans() {
        let pm = measure("xy");
        let grid = [1.0, 0.5, 0.1, 0.01];
        let s = density_scan(&pm, &[0.0, 0.0], 2, 2.0, &grid).unwrap();
        for row in &s.rows {
            assert_abs_diff_eq!(row.quotient, 2.0, epsilon = 1e-12);
        }
        assert!(s.log_slope.abs() < 1e-10);
        let sample =
            surface_sample(&fixture("x2-y2").unwrap(), 1.0, &SurfaceOptions::default()).unwrap();
        let s = density_scan(&sample, &[0.0; 3], 3, 2.0, &[1.0, 0.6, 0.3, 0.1]).unwrap();
        assert!(s.log_slope.abs() < 1e-2);
    }
}
