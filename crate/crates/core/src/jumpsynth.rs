//! Almost harmonic jump functions v = p + w − T in the plane: w is the
//! single-layer potential of ρ = (h(Q)/h − 1)|∇p| on Σ_p ∩ B(0, R) with ρ
//! switched off on B(Q, δ), and T removes the part of w below the vanishing
//! order of p at Q.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dist, dot, norm, CompiledPoly, Field, FnField};
use crate::layer::{LayerLine, LineLayer};
use crate::measures::{box_quadrature, check_support, circle_zero_angles, TestField, VolumeRule};
use crate::poly::{HarmonicPolynomial, Polynomial};
use crate::sphere::{analyze, sphere_rule, BoundaryTrace, SpectralCoefficients};

/// log h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogDensity {
    Constant {
        value: f64,
    },
    /// a·|(x − c)·e|^β.
    DirectionalPower {
        amplitude: f64,
        exponent: f64,
        direction: Vec<f64>,
        center: Vec<f64>,
    },
}

impl LogDensity {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LogDensity::Constant { value } => *value,
            LogDensity::DirectionalPower {
                amplitude,
                exponent,
                direction,
                center,
            } => {
                let s: f64 = x
                    .iter()
                    .zip(center)
                    .zip(direction)
                    .map(|((xi, ci), ei)| (xi - ci) * ei)
                    .sum();
                amplitude * s.abs().powf(*exponent)
            }
        }
    }

    /// Points where g fails to be smooth along the ray t ↦ tγ, t > 0.
    fn kinks_on_ray(&self, gamma: &[f64]) -> Vec<f64> {
        match self {
            LogDensity::Constant { .. } => Vec::new(),
            LogDensity::DirectionalPower {
                direction, center, ..
            } => {
                let ge = dot(gamma, direction);
                if ge.abs() < 1e-14 {
                    return Vec::new();
                }
                let t = dot(center, direction) / ge;
                if t > 0.0 {
                    vec![t]
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// h = exp(g) with g Hölder of exponent α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderWeight {
    pub alpha: f64,
    pub log_density: LogDensity,
}

impl HolderWeight {
    pub fn new(alpha: f64, log_density: LogDensity) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "α = {alpha} must lie in (0, 1]"
            )));
        }
        if let LogDensity::DirectionalPower {
            exponent,
            direction,
            center,
            ..
        } = &log_density
        {
            if (exponent - alpha).abs() > 1e-15 {
                return Err(Error::InvalidArgument(format!(
                    "power {exponent} must equal the Hölder exponent {alpha}"
                )));
            }
            if direction.len() != center.len() || (norm(direction) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "direction must be a unit vector matching the center".into(),
                ));
            }
        }
        Ok(HolderWeight { alpha, log_density })
    }

    /// The constant weight h ≡ 1.
    pub fn unit() -> Self {
        HolderWeight {
            alpha: 1.0,
            log_density: LogDensity::Constant { value: 0.0 },
        }
    }

    /// |a·|s|^α − a·|t|^α| ≤ |a|·|s − t|^α for α ≤ 1.
    pub fn seminorm(&self) -> f64 {
        match &self.log_density {
            LogDensity::Constant { .. } => 0.0,
            LogDensity::DirectionalPower { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        self.log_density.value(x)
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        self.g(x).exp()
    }

    /// Checks |g(x) − g(y)| ≤ seminorm·|x − y|^α on 100 seeded random pairs
    /// in B(0, radius).
    pub fn spot_check(&self, n: usize, radius: f64, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point =
            || -> Vec<f64> { (0..n).map(|_| rng.random_range(-radius..radius)).collect() };
        for _ in 0..100 {
            let (x, y) = (point(), point());
            let lhs = (self.g(&x) - self.g(&y)).abs();
            let rhs = self.seminorm() * dist(&x, &y).powf(self.alpha);
            if lhs > rhs * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::VerificationFailed(format!(
                    "Hölder bound fails at {x:?}, {y:?}: {lhs} > {rhs}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpOptions {
    /// Outer truncation radius of the layer.
    pub radius: f64,
    /// Exclusion radius around Q.
    pub delta: f64,
    /// Panels per unit length near the origin.
    pub resolution: usize,
    pub seed: u64,
}

impl Default for JumpOptions {
    fn default() -> Self {
        JumpOptions {
            radius: 4.0,
            delta: 0.05,
            resolution: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantChecks {
    /// Largest sub-degree spectral coefficient on ∂B(Q, δ/2) relative to the
    /// degree-d_Q part.
    pub vanishing_ratio: f64,
    /// max |Δ_h v|·dist(x, Σ)/|∇v| over random off-surface points.
    pub laplacian_residual: f64,
}

/// v = p + w − T together with the data that built it.
#[derive(Clone, Debug)]
pub struct JumpFunctionModel {
    p: HarmonicPolynomial,
    compiled: CompiledPoly,
    weight: HolderWeight,
    q: Vec<f64>,
    opts: JumpOptions,
    vanishing_order: u32,
    ray_angles: Vec<f64>,
    layer: LineLayer,
    taylor: Option<CompiledPoly>,
    checks: InvariantChecks,
}

/// Serializable description of a built model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpModelSummary {
    pub degree: u32,
    pub vanishing_order: u32,
    pub anchor: Vec<f64>,
    pub weight: HolderWeight,
    pub seminorm: f64,
    pub options: JumpOptions,
    pub knots: usize,
    pub layer_mass: f64,
    pub checks: InvariantChecks,
}

/// Order of vanishing of p at Q, from the homogeneous parts of p(Q + ·).
pub fn vanishing_order(p: &Polynomial, q: &[f64]) -> Result<u32> {
    let shifted = p.translate(q)?;
    let scale = shifted.max_abs_coefficient().max(p.max_abs_coefficient());
    (0..=p.degree())
        .find(|&k| shifted.homogeneous_part(k).max_abs_coefficient() > 1e-9 * scale)
        .map_or(Ok(p.degree()), Ok)
}

fn ray_knots(gamma: &[f64], q: &[f64], weight: &HolderWeight, opts: &JumpOptions) -> Vec<f64> {
    let r_max = opts.radius;
    let h0 = 1.0 / opts.resolution as f64;
    let mut knots = vec![0.0];
    let near = r_max.min(1.5);
    let m = (near / h0).ceil() as usize;
    knots.extend((1..=m).map(|k| near * k as f64 / m as f64));
    let mut u = near;
    let mut step = near / m as f64;
    while u < r_max {
        step *= 1.1;
        u = (u + step).min(r_max);
        knots.push(u);
    }
    // Graded refinement at the origin, the exclusion boundary and the
    // weight's kinks.
    let mut special = vec![0.0];
    let b = dot(gamma, q);
    let c = dot(q, q) - opts.delta * opts.delta;
    let disc = b * b - c;
    if disc > 0.0 {
        special.extend([b - disc.sqrt(), b + disc.sqrt()]);
    }
    special.extend(weight.log_density.kinks_on_ray(gamma));
    for s in special.into_iter().filter(|s| (0.0..r_max).contains(s)) {
        knots.push(s);
        let mut e = 1e-6;
        while e < h0 {
            knots.push(s + e);
            knots.push(s - e);
            e *= 2.0;
        }
    }
    knots.retain(|u| (0.0..=r_max).contains(u));
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    knots
}

/// Synthesizes the jump function for homogeneous harmonic p in the plane.
pub fn build_jump_function(
    p: &HarmonicPolynomial,
    weight: &HolderWeight,
    q: &[f64],
    opts: &JumpOptions,
) -> Result<JumpFunctionModel> {
    if p.n() != 2 {
        return Err(Error::Unsupported(format!(
            "jump functions are synthesized in the plane only (n = {})",
            p.n()
        )));
    }
    if q.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: q.len(),
        });
    }
    if !p.homogeneous() || p.degree() == 0 {
        return Err(Error::InvalidArgument(
            "p must be nonconstant and homogeneous".into(),
        ));
    }
    if !(opts.delta > 0.0) || norm(q) + opts.delta >= 0.5 * opts.radius || opts.resolution == 0 {
        return Err(Error::InvalidArgument(format!(
            "need δ > 0, |Q| + δ < R/2 and resolution > 0 (δ = {}, R = {})",
            opts.delta, opts.radius
        )));
    }
    let pq = p.eval(q);
    if pq.abs() >= 1e-10 {
        return Err(Error::AnchorOffZeroSet { value: pq });
    }
    weight.spot_check(2, opts.radius, opts.seed)?;

    let compiled = CompiledPoly::new(p);
    let ray_angles = circle_zero_angles(p)?;
    let hq = weight.h(q);
    let mut lines = Vec::with_capacity(ray_angles.len());
    for &th in &ray_angles {
        let gamma = [th.cos(), th.sin()];
        let knots = ray_knots(&gamma, q, weight, opts);
        let density = knots
            .iter()
            .map(|&u| {
                let y = [u * gamma[0], u * gamma[1]];
                if dist(&y, q) <= opts.delta {
                    return 0.0;
                }
                let (_, g) = compiled.value_and_gradient(&y);
                (hq / weight.h(&y) - 1.0) * norm(&g)
            })
            .collect();
        lines.push(LayerLine::new([0.0, 0.0], gamma, knots, density)?);
    }
    let layer = LineLayer::new(lines);
    let vanishing_order = vanishing_order(p, q)?;

    let mut model = JumpFunctionModel {
        p: p.clone(),
        compiled,
        weight: weight.clone(),
        q: q.to_vec(),
        opts: *opts,
        vanishing_order,
        ray_angles,
        layer,
        taylor: None,
        checks: InvariantChecks {
            vanishing_ratio: 0.0,
            laplacian_residual: 0.0,
        },
    };
    if !model.layer.is_zero() && vanishing_order > 0 {
        model.taylor = Some(CompiledPoly::new(&model.taylor_correction()?));
    }
    model.checks.vanishing_ratio = model.vanishing_ratio()?;
    if model.checks.vanishing_ratio >= 1e-6 {
        return Err(Error::VerificationFailed(format!(
            "v does not vanish to order {} at Q: ratio {:e}",
            vanishing_order, model.checks.vanishing_ratio
        )));
    }
    model.checks.laplacian_residual = model.laplacian_residual()?;
    if model.checks.laplacian_residual >= 1e-3 {
        return Err(Error::VerificationFailed(format!(
            "Δv off Σ_p: residual {:e}",
            model.checks.laplacian_residual
        )));
    }
    Ok(model)
}

impl JumpFunctionModel {
    pub fn p(&self) -> &HarmonicPolynomial {
        &self.p
    }
    pub fn weight(&self) -> &HolderWeight {
        &self.weight
    }
    pub fn anchor(&self) -> &[f64] {
        &self.q
    }
    pub fn options(&self) -> &JumpOptions {
        &self.opts
    }
    pub fn layer(&self) -> &LineLayer {
        &self.layer
    }
    pub fn checks(&self) -> &InvariantChecks {
        &self.checks
    }
    /// Order of vanishing of p (and of v) at Q.
    pub fn vanishing_order(&self) -> u32 {
        self.vanishing_order
    }
    /// Directions of the rays of Σ_p; circles about the origin see kinks of
    /// v only there.
    pub fn ray_angles(&self) -> &[f64] {
        &self.ray_angles
    }
    /// True when h is constant on the layer, so that v = p.
    pub fn is_trivial(&self) -> bool {
        self.layer.is_zero()
    }

    /// Layer density at a point of the layer, following the model's rule.
    pub fn density_at(&self, y: &[f64]) -> f64 {
        if dist(y, &self.q) <= self.opts.delta {
            return 0.0;
        }
        let (_, g) = self.compiled.value_and_gradient(y);
        (self.weight.h(&self.q) / self.weight.h(y) - 1.0) * norm(&g)
    }

    pub fn summary(&self) -> JumpModelSummary {
        JumpModelSummary {
            degree: self.p.degree(),
            vanishing_order: self.vanishing_order,
            anchor: self.q.clone(),
            weight: self.weight.clone(),
            seminorm: self.weight.seminorm(),
            options: self.opts,
            knots: self.layer.lines().iter().map(|l| l.knots.len()).sum(),
            layer_mass: self.layer.mass(),
            checks: self.checks.clone(),
        }
    }

    fn inner_analysis(&self, f: &dyn Field, max_degree: usize) -> Result<SpectralCoefficients> {
        let rule = sphere_rule(2, 2 * max_degree)?;
        let trace = BoundaryTrace::sample(f, rule, &self.q, 0.5 * self.opts.delta)?;
        analyze(&trace, max_degree)
    }

    /// Σ_{k < d_Q} of the harmonic expansion of w about Q, as a polynomial.
    fn taylor_correction(&self) -> Result<Polynomial> {
        let layer = self.layer.clone();
        let w = FnField::new(2, move |x: &[f64]| layer.potential(x).0);
        let coeffs = self.inner_analysis(&w, 64)?;
        let rho = 0.5 * self.opts.delta;
        let neg_q: Vec<f64> = self.q.iter().map(|v| -v).collect();
        let mut t = Polynomial::zero(2);
        for k in 0..self.vanishing_order as usize {
            let part = coeffs.component(k)?.scale(rho.powi(-(k as i32)));
            t = &t + &part.translate(&neg_q)?;
        }
        Ok(t)
    }

    fn vanishing_ratio(&self) -> Result<f64> {
        let d = self.vanishing_order as usize;
        let coeffs = self.inner_analysis(self, d + 8)?;
        let top: f64 = coeffs
            .of_degree(d)
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        let below = (0..d)
            .flat_map(|k| coeffs.of_degree(k))
            .fold(0.0f64, |m, c| m.max(c.abs()));
        Ok(if top > 0.0 {
            below / top
        } else {
            f64::INFINITY
        })
    }

    fn distance_to_rays(&self, x: &[f64]) -> f64 {
        self.ray_angles
            .iter()
            .map(|th| {
                let g = [th.cos(), th.sin()];
                let s = dot(x, &g);
                if s <= 0.0 {
                    norm(x)
                } else {
                    dist(x, &[s * g[0], s * g[1]])
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Five-point Laplacian at 50 seeded points of B(0, 1) at distance at
    /// least 0.02 from Σ_p.
    fn laplacian_residual(&self) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ 0x5eed);
        let mut worst: f64 = 0.0;
        let mut accepted = 0;
        while accepted < 50 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let dsig = self.distance_to_rays(&x);
            if norm(&x) > 1.0 || dsig < 0.02 {
                continue;
            }
            accepted += 1;
            let h = 0.01 * dsig;
            let v0 = self.value(&x);
            let mut lap = -4.0 * v0;
            for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                lap += self.value(&[x[0] + dx, x[1] + dy]);
            }
            lap /= h * h;
            let g = self.gradient(&x).expect("analytic gradient");
            let scale = norm(&g).max(1e-300);
            worst = worst.max(lap.abs() * dsig / scale);
        }
        Ok(worst)
    }
}

impl Field for JumpFunctionModel {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.is_trivial() {
            return self.compiled.value(x);
        }
        let mut v = self.compiled.value(x) + self.layer.potential(x).0;
        if let Some(t) = &self.taylor {
            v -= t.value(x);
        }
        v
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.value_and_gradient(x).1.expect("analytic gradient"))
    }

    fn poly_degree(&self) -> Option<u32> {
        self.is_trivial().then(|| self.p.degree())
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let (mut v, mut g) = self.compiled.value_and_gradient(x);
        if self.is_trivial() {
            return (v, Some(g));
        }
        let (lv, lg) = self.layer.potential(x);
        v += lv;
        g[0] += lg[0];
        g[1] += lg[1];
        if let Some(t) = &self.taylor {
            let (tv, tg) = t.value_and_gradient(x);
            v -= tv;
            g[0] -= tg[0];
            g[1] -= tg[1];
        }
        (v, Some(g))
    }
}

/// Shared handle for scans that need `'static` fields.
pub type SharedModel = Arc<JumpFunctionModel>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianCheck {
    /// ∫ v Δφ.
    pub volume: f64,
    /// ∫ φ ρ dH¹.
    pub surface: f64,
    /// ∫ |v Δφ|.
    pub scale: f64,
    /// |volume − surface| / max(|surface|, scale).
    pub relative_error: f64,
}

/// Two routes to ∫ φ dΔv: volume quadrature of v Δφ and the layer integral.
pub fn distributional_laplacian_check(
    model: &JumpFunctionModel,
    phi: &dyn TestField,
    rule: &VolumeRule,
) -> Result<LaplacianCheck> {
    if phi.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: phi.dim(),
        });
    }
    let (center, _, reach) = phi.laplacian_band();
    if norm(&center) + reach >= model.opts.radius {
        return Err(Error::InvalidArgument(
            "test function reaches the outer end of the layer".into(),
        ));
    }
    check_support(phi, rule)?;
    let [volume, scale] = box_quadrature(phi, rule, |x| {
        let lap = phi.laplacian(x);
        if lap == 0.0 {
            return [0.0; 2];
        }
        let v = model.value(x);
        [v * lap, (v * lap).abs()]
    });
    let surface = model.layer.integrate(|y| phi.value(y));
    let denom = surface.abs().max(scale);
    Ok(LaplacianCheck {
        volume,
        surface,
        scale,
        relative_error: if denom > 0.0 {
            (volume - surface).abs() / denom
        } else {
            0.0
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderBoundRow {
    pub r: f64,
    pub max_ratio: f64,
    /// e^{osc}·[g]_α with osc the oscillation of g over the knots in B(Q, r).
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderBoundReport {
    pub rows: Vec<HolderBoundRow>,
    pub max_ratio: f64,
    /// Largest ratio at knots inside B(Q, δ).
    pub exclusion_ratio: f64,
}

/// |ρ(y)|/(|∇p(y)|·|y − Q|^α) over the layer knots.
pub fn holder_laplacian_bound_check(
    model: &JumpFunctionModel,
    r_grid: &[f64],
) -> Result<HolderBoundReport> {
    let alpha = model.weight.alpha;
    let gq = model.weight.g(&model.q);
    // (|y − Q|, ratio, |g(y) − g(Q)|) per knot.
    let mut pts = Vec::new();
    let mut exclusion_ratio: f64 = 0.0;
    for line in model.layer.lines() {
        for (u, rho) in line.knots.iter().zip(&line.density) {
            let y = line.point(*u);
            let r = dist(&y, &model.q);
            let (_, g) = model.compiled.value_and_gradient(&y);
            let gn = norm(&g);
            if r == 0.0 || gn == 0.0 {
                continue;
            }
            let ratio = rho.abs() / gn / r.powf(alpha);
            if r <= model.opts.delta {
                exclusion_ratio = exclusion_ratio.max(ratio);
            }
            pts.push((r, ratio, (model.weight.g(&y) - gq).abs()));
        }
    }
    let rows: Vec<HolderBoundRow> = r_grid
        .iter()
        .map(|&r| {
            let inside = pts.iter().filter(|p| p.0 <= r);
            let (mut max_ratio, mut osc) = (0.0f64, 0.0f64);
            for p in inside {
                max_ratio = max_ratio.max(p.1);
                osc = osc.max(p.2);
            }
            HolderBoundRow {
                r,
                max_ratio,
                prediction: osc.exp() * model.weight.seminorm(),
            }
        })
        .collect();
    let max_ratio = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(HolderBoundReport {
        rows,
        max_ratio,
        exclusion_ratio,
    })
}
