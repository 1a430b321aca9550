//! Quadrature on S^{n-1}, spectral analysis of boundary traces, extensions
//! into the ball and the spectral epiperimetric comparison.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CompiledPoly, Field, PolyField};
use crate::poly::{
    gamma_half, harmonic_basis_shared, monomials_up_to, sphere_area, sphere_monomial_integral,
    MultiIndex, Polynomial,
};
use crate::quadrature::{gauss_gegenbauer, gauss_legendre};

/// Quadrature nodes and weights on the unit sphere S^{n-1}.
#[derive(Clone, Debug)]
pub struct SphereRule {
    n: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    exact_degree: usize,
}

impl SphereRule {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_i g(ω_i).
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(x))
            .sum()
    }

    /// CSV with columns x1..xn, weight.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (x, wt) in self.nodes.iter().zip(&self.weights) {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(wt.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn product_nodes(n: usize, deg: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if n == 2 {
        let m = deg + 1;
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let nodes = (0..m)
            .map(|k| {
                let t = h * k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        return (nodes, vec![h; m]);
    }
    // x = (t, sqrt(1-t²) y) with y on S^{n-2}; dσ = (1-t²)^{(n-3)/2} dt dσ'.
    let m = deg / 2 + 1;
    let g = gauss_gegenbauer(m, (n - 3) as u32);
    let (inner, inner_w) = product_nodes(n - 1, deg);
    let mut nodes = Vec::with_capacity(m * inner.len());
    let mut weights = Vec::with_capacity(m * inner.len());
    for (t, wt) in g.nodes.iter().zip(&g.weights) {
        let s = (1.0 - t * t).sqrt();
        for (y, wy) in inner.iter().zip(&inner_w) {
            let mut x = Vec::with_capacity(n);
            x.push(*t);
            x.extend(y.iter().map(|v| s * v));
            let nrm = crate::field::norm(&x);
            for v in x.iter_mut() {
                *v /= nrm;
            }
            nodes.push(x);
            weights.push(wt * wy);
        }
    }
    (nodes, weights)
}

fn self_test(rule: &SphereRule) -> Result<()> {
    let n = rule.n;
    let deg = rule.exact_degree;
    let fail = |what: String| Err(Error::QuadratureSelfTest(what));
    if n >= 3 {
        // The one-dimensional factor alone must carry the degree.
        let m = (deg + 2) / 2;
        let g = gauss_gegenbauer(m, (n - 3) as u32);
        for k in (0..=deg).step_by(2) {
            let got: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(t, w)| w * t.powi(k as i32))
                .sum();
            let want = gamma_half(k as u32 + 1) * gamma_half(n as u32 - 1)
                / gamma_half(k as u32 + n as u32);
            if (got - want).abs() > 1e-12 * want.max(1.0) {
                return fail(format!("1D factor moment t^{k}: {got} vs {want}"));
            }
        }
    }
    let mass: f64 = rule.weights.iter().sum();
    if (mass - sphere_area(n)).abs() > 1e-10 {
        return fail(format!("total mass {mass} vs {}", sphere_area(n)));
    }
    if let Some(x) = rule
        .nodes
        .iter()
        .find(|x| (crate::field::norm(x) - 1.0).abs() > 1e-14)
    {
        return fail(format!("node {x:?} is not unit norm"));
    }
    if rule.weights.iter().any(|w| !(*w > 0.0)) {
        return fail("non-positive weight".into());
    }
    let mut probes: Vec<Vec<u32>> = Vec::new();
    for i in 0..n {
        for k in [2, deg / 2 * 2, deg] {
            let mut e = vec![0; n];
            e[i] = k as u32;
            probes.push(e);
        }
    }
    // Mixed top-degree monomials, even and odd.
    let mut spread = vec![0u32; n];
    for k in 0..deg {
        spread[k % n] += 1;
    }
    probes.push(spread);
    let mut pair = vec![0u32; n];
    pair[0] = (deg / 2) as u32;
    pair[n - 1] = (deg - deg / 2) as u32;
    probes.push(pair);
    for e in probes {
        let mi = MultiIndex::new(e.clone());
        let got = rule.integrate(|x| mi.monomial_value(x));
        let want = sphere_monomial_integral(&e);
        if (got - want).abs() > 1e-10 {
            return fail(format!("monomial {e:?}: {got} vs {want}"));
        }
    }
    Ok(())
}

/// Builds a rule on S^{n-1} exact for polynomials of degree ≤ `exact_degree`.
pub fn build_sphere_rule(n: usize, exact_degree: usize) -> Result<SphereRule> {
    if !(2..=5).contains(&n) {
        return Err(Error::Unsupported(format!(
            "sphere rules are available for n in 2..=5, got {n}"
        )));
    }
    if exact_degree < 2 {
        return Err(Error::InvalidArgument(format!(
            "exact_degree must be at least 2, got {exact_degree}"
        )));
    }
    let (nodes, weights) = product_nodes(n, exact_degree);
    let rule = SphereRule {
        n,
        nodes,
        weights,
        exact_degree,
    };
    self_test(&rule)?;
    Ok(rule)
}

/// Composite Gauss rule on S¹ with panel breaks at the given angles, for
/// integrands with kinks at known directions. Every arc is split into
/// pieces no longer than 2π/`min_pieces`. The exact degree reported is the
/// largest trigonometric degree the rule reproduces to 1e-12.
pub fn circle_arcs(breaks: &[f64], order: usize, min_pieces: usize) -> Result<SphereRule> {
    use std::f64::consts::TAU;
    if order == 0 || min_pieces == 0 {
        return Err(Error::InvalidArgument(
            "order and min_pieces must be positive".into(),
        ));
    }
    let mut cuts: Vec<f64> = breaks.iter().map(|t| t.rem_euclid(TAU)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    if cuts.is_empty() {
        cuts.push(0.0);
    }
    let first = cuts[0];
    cuts.push(first + TAU);
    let g = gauss_legendre(order);
    let max_piece = TAU / min_pieces as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / max_piece).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            let a = w[0] + h * k as f64;
            for (t, wt) in g.on_interval(a, a + h) {
                nodes.push(vec![t.cos(), t.sin()]);
                weights.push(wt);
            }
        }
    }
    let mut exact_degree = 0;
    for k in 1..=4 * nodes.len() {
        let (mut c, mut s) = (0.0, 0.0);
        for (x, w) in nodes.iter().zip(&weights) {
            let th = x[1].atan2(x[0]) * k as f64;
            c += w * th.cos();
            s += w * th.sin();
        }
        if c.abs() > 1e-12 || s.abs() > 1e-12 {
            break;
        }
        exact_degree = k;
    }
    let rule = SphereRule {
        n: 2,
        nodes,
        weights,
        exact_degree,
    };
    if exact_degree < 2 {
        return Err(Error::QuadratureSelfTest(format!(
            "arc rule is exact only to degree {exact_degree}"
        )));
    }
    self_test(&rule)?;
    Ok(rule)
}

type RuleCache = Mutex<HashMap<(usize, usize), Arc<SphereRule>>>;

/// Cached [`build_sphere_rule`].
pub fn sphere_rule(n: usize, exact_degree: usize) -> Result<Arc<SphereRule>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("cache lock").get(&(n, exact_degree)) {
        return Ok(r.clone());
    }
    let r = Arc::new(build_sphere_rule(n, exact_degree)?);
    cache
        .lock()
        .expect("cache lock")
        .insert((n, exact_degree), r.clone());
    Ok(r)
}

/// Values of a function on the nodes of a rule placed on ∂B(Q, r).
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    rule: Arc<SphereRule>,
    values: Vec<f64>,
    center: Vec<f64>,
    radius: f64,
    poly_degree: Option<u32>,
}

impl BoundaryTrace {
    pub fn new(
        rule: Arc<SphereRule>,
        values: Vec<f64>,
        center: Vec<f64>,
        radius: f64,
        poly_degree: Option<u32>,
    ) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::DimensionMismatch {
                expected: rule.len(),
                got: values.len(),
            });
        }
        if center.len() != rule.n() {
            return Err(Error::DimensionMismatch {
                expected: rule.n(),
                got: center.len(),
            });
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {radius} must be positive"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("trace has non-finite values".into()));
        }
        Ok(BoundaryTrace {
            rule,
            values,
            center,
            radius,
            poly_degree,
        })
    }

    /// Samples `f(Q + r ω)`.
    pub fn sample(
        f: &dyn Field,
        rule: Arc<SphereRule>,
        center: &[f64],
        radius: f64,
    ) -> Result<Self> {
        let mut y = vec![0.0; center.len()];
        let values = rule
            .nodes()
            .iter()
            .map(|w| {
                for i in 0..y.len() {
                    y[i] = center[i] + radius * w[i];
                }
                f.value(&y)
            })
            .collect();
        BoundaryTrace::new(rule, values, center.to_vec(), radius, f.poly_degree())
    }

    /// Restriction of a polynomial to ∂B(Q, r); the degree is recorded so
    /// analysis may use the sharp exactness requirement.
    pub fn of_polynomial(
        p: &Polynomial,
        rule: Arc<SphereRule>,
        center: &[f64],
        radius: f64,
    ) -> Result<Self> {
        let f = PolyField::new(p.clone());
        let mut t = Self::sample(&f, rule, center, radius)?;
        t.poly_degree = Some(p.degree());
        Ok(t)
    }

    pub fn rule(&self) -> &Arc<SphereRule> {
        &self.rule
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn poly_degree(&self) -> Option<u32> {
        self.poly_degree
    }

    /// ∫_{S^{n-1}} trace² dσ on the unit sphere.
    pub fn l2_norm_squared(&self) -> f64 {
        self.values
            .iter()
            .zip(self.rule.weights())
            .map(|(v, w)| w * v * v)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub j: usize,
    pub degree: usize,
    pub c: f64,
}

/// Coefficients against the unit-L² spherical harmonic basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoefficients {
    pub n: usize,
    pub max_degree: usize,
    pub coeffs: Vec<SpectralEntry>,
    pub parseval_defect: f64,
    pub normalization: String,
}

impl SpectralCoefficients {
    /// Coefficients of degree `k`, in basis order.
    pub fn of_degree(&self, k: usize) -> Vec<f64> {
        self.coeffs
            .iter()
            .filter(|e| e.degree == k)
            .map(|e| e.c)
            .collect()
    }

    /// Σ c_j φ_j restricted to degree `k`.
    pub fn component(&self, k: usize) -> Result<Polynomial> {
        let basis = harmonic_basis_shared(self.n, k)?;
        let mut p = Polynomial::zero(self.n);
        for (phi, c) in basis.iter().zip(self.of_degree(k)) {
            if c != 0.0 {
                p = &p + &phi.scale(c);
            }
        }
        Ok(p)
    }

    /// Σ c_j φ_j over all stored degrees.
    pub fn polynomial(&self) -> Result<Polynomial> {
        let mut p = Polynomial::zero(self.n);
        for k in 0..=self.max_degree {
            p = &p + &self.component(k)?;
        }
        Ok(p)
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|e| e.c * e.c).sum()
    }

    /// Builds coefficients from a polynomial given on the unit sphere; used
    /// when the spectral data is known exactly.
    pub fn from_entries(n: usize, max_degree: usize, coeffs: Vec<SpectralEntry>) -> Self {
        SpectralCoefficients {
            n,
            max_degree,
            coeffs,
            parseval_defect: 0.0,
            normalization: NORMALIZATION.into(),
        }
    }
}

const NORMALIZATION: &str = "unit L2(S^{n-1})";

/// Default degree cutoff for a trace built from a degree-`k` polynomial.
pub fn default_cutoff(k: usize) -> usize {
    2 * k + 4
}

/// c_j = ∫ trace·φ_j over the unit sphere for all basis elements of degree ≤ L.
pub fn analyze(trace: &BoundaryTrace, max_degree: usize) -> Result<SpectralCoefficients> {
    let rule = trace.rule();
    let n = rule.n();
    let need = match trace.poly_degree() {
        Some(k) => k as usize + max_degree,
        None => 2 * max_degree,
    };
    if rule.exact_degree() < need {
        return Err(Error::InsufficientExactness {
            have: rule.exact_degree(),
            need,
        });
    }
    let coeffs = if n == 2 {
        planar_coefficients(trace, max_degree)
    } else {
        monomial_coefficients(trace, max_degree)?
    };
    let energy: f64 = coeffs.iter().map(|e| e.c * e.c).sum();
    Ok(SpectralCoefficients {
        n,
        max_degree,
        coeffs,
        parseval_defect: trace.l2_norm_squared() - energy,
        normalization: NORMALIZATION.into(),
    })
}

/// Planar analysis against cos(kθ)/√π, sin(kθ)/√π (the planar basis on S¹).
fn planar_coefficients(trace: &BoundaryTrace, max_degree: usize) -> Vec<SpectralEntry> {
    let rule = trace.rule();
    let pi = std::f64::consts::PI;
    let mut sums = vec![0.0; 2 * max_degree + 1];
    for ((x, w), v) in rule.nodes().iter().zip(rule.weights()).zip(trace.values()) {
        let th = x[1].atan2(x[0]);
        let wv = w * v;
        sums[0] += wv;
        for k in 1..=max_degree {
            let (s, c) = (k as f64 * th).sin_cos();
            sums[2 * k - 1] += wv * c;
            sums[2 * k] += wv * s;
        }
    }
    sums.iter()
        .enumerate()
        .map(|(j, s)| {
            let degree = j.div_ceil(2);
            let norm = if j == 0 { (2.0 * pi).sqrt() } else { pi.sqrt() };
            SpectralEntry {
                j,
                degree,
                c: s / norm,
            }
        })
        .collect()
}

/// Analysis through monomial moments m_a = Σ w v x^a.
fn monomial_coefficients(trace: &BoundaryTrace, max_degree: usize) -> Result<Vec<SpectralEntry>> {
    let rule = trace.rule();
    let n = rule.n();
    let mons = monomials_up_to(n, max_degree as u32);
    let index: HashMap<&MultiIndex, usize> = mons.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let flat: Vec<u32> = mons.iter().flat_map(|m| m.exponents().to_vec()).collect();
    let width = max_degree + 1;
    let mut moments = vec![0.0; mons.len()];
    let mut pw = vec![1.0; n * width];
    for ((x, w), v) in rule.nodes().iter().zip(rule.weights()).zip(trace.values()) {
        for i in 0..n {
            for k in 1..width {
                pw[i * width + k] = pw[i * width + k - 1] * x[i];
            }
        }
        let wv = w * v;
        for (a, m) in moments.iter_mut().enumerate() {
            let e = &flat[a * n..(a + 1) * n];
            let mut t = wv;
            for (i, &k) in e.iter().enumerate() {
                t *= pw[i * width + k as usize];
            }
            *m += t;
        }
    }
    let mut coeffs = Vec::new();
    let mut j = 0;
    for k in 0..=max_degree {
        for phi in harmonic_basis_shared(n, k)?.iter() {
            let c: f64 = phi.terms().iter().map(|(e, c)| c * moments[index[e]]).sum();
            coeffs.push(SpectralEntry { j, degree: k, c });
            j += 1;
        }
    }
    Ok(coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "d")]
pub enum ExtensionMode {
    Harmonic,
    Homogeneous(f64),
}

/// Extension of spectral data into the ball, placed on B(Q, r).
#[derive(Clone, Debug)]
pub struct Extension {
    n: usize,
    mode: ExtensionMode,
    /// (degree, Σ_{d_j = degree} c_j φ_j)
    parts: Vec<(usize, CompiledPoly)>,
    harmonic: Option<CompiledPoly>,
    /// Planar data (k, A_k, B_k) for Σ ρ^e (A_k cos kθ + B_k sin kθ).
    planar: Vec<(usize, f64, f64)>,
    center: Vec<f64>,
    radius: f64,
}

/// Extends coefficients into the unit ball.
pub fn extend(coeffs: &SpectralCoefficients, mode: ExtensionMode) -> Result<Extension> {
    let n = coeffs.n;
    if let ExtensionMode::Homogeneous(d) = mode {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "homogeneity d = {d} must be positive"
            )));
        }
    }
    if n == 2 {
        let pi = std::f64::consts::PI;
        let mut planar: Vec<(usize, f64, f64)> = Vec::new();
        for e in &coeffs.coeffs {
            if e.degree == 0 {
                planar.push((0, e.c / (2.0 * pi).sqrt(), 0.0));
            } else if e.j % 2 == 1 {
                planar.push((e.degree, e.c / pi.sqrt(), 0.0));
            } else {
                let last = planar.last_mut().expect("cosine precedes sine");
                last.2 = e.c / pi.sqrt();
            }
        }
        return Ok(Extension {
            n,
            mode,
            parts: Vec::new(),
            harmonic: None,
            planar,
            center: vec![0.0; n],
            radius: 1.0,
        });
    }
    let (parts, harmonic) = match mode {
        ExtensionMode::Harmonic => (Vec::new(), Some(CompiledPoly::new(&coeffs.polynomial()?))),
        ExtensionMode::Homogeneous(_) => {
            let mut parts = Vec::new();
            for k in 0..=coeffs.max_degree {
                let p = coeffs.component(k)?;
                if !p.is_zero() {
                    parts.push((k, CompiledPoly::new(&p)));
                }
            }
            (parts, None)
        }
    };
    Ok(Extension {
        n,
        mode,
        parts,
        harmonic,
        planar: Vec::new(),
        center: vec![0.0; n],
        radius: 1.0,
    })
}

impl Extension {
    /// Moves the extension to B(Q, r): x ↦ F((x - Q)/r).
    pub fn placed(mut self, center: &[f64], radius: f64) -> Self {
        self.center = center.to_vec();
        self.radius = radius;
        self
    }

    pub fn mode(&self) -> ExtensionMode {
        self.mode
    }

    /// Evaluates at radius `r` in direction `theta` (unit vector), in the
    /// unit-ball frame.
    pub fn eval_polar(&self, r: f64, theta: &[f64]) -> f64 {
        let x: Vec<f64> = theta.iter().map(|t| r * t).collect();
        self.unit_value_and_gradient(&x).0
    }

    fn planar_value_and_gradient(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let rho = y[0].hypot(y[1]);
        let th = y[1].atan2(y[0]);
        let (st, ct) = th.sin_cos();
        let (mut v, mut dr, mut dt) = (0.0, 0.0, 0.0);
        for &(k, a, b) in &self.planar {
            let e = match self.mode {
                ExtensionMode::Harmonic => k as f64,
                ExtensionMode::Homogeneous(d) => d,
            };
            let (sk, ck) = (k as f64 * th).sin_cos();
            let ang = a * ck + b * sk;
            let dang = k as f64 * (b * ck - a * sk);
            if rho == 0.0 {
                if e == 0.0 {
                    v += ang;
                } else if e == 1.0 && k == 1 {
                    // Linear term: gradient (a, b) in Cartesian form.
                    return (v, vec![a, b]);
                }
                continue;
            }
            let p = rho.powf(e);
            v += p * ang;
            dr += e * p / rho * ang;
            dt += p / rho * dang;
        }
        (v, vec![dr * ct - dt * st, dr * st + dt * ct])
    }

    fn unit_value_and_gradient(&self, y: &[f64]) -> (f64, Vec<f64>) {
        if !self.planar.is_empty() {
            return self.planar_value_and_gradient(y);
        }
        if let Some(h) = &self.harmonic {
            return h.value_and_gradient(y);
        }
        let ExtensionMode::Homogeneous(d) = self.mode else {
            unreachable!("homogeneous parts without homogeneous mode")
        };
        let rho2: f64 = y.iter().map(|v| v * v).sum();
        let mut v = 0.0;
        let mut g = vec![0.0; self.n];
        if rho2 == 0.0 {
            return (v, g);
        }
        let rho = rho2.sqrt();
        for (k, p) in &self.parts {
            let e = d - *k as f64;
            let (pv, pg) = p.value_and_gradient(y);
            let s = rho.powf(e);
            v += s * pv;
            let radial = e * s / rho2 * pv;
            for i in 0..self.n {
                g[i] += radial * y[i] + s * pg[i];
            }
        }
        (v, g)
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) / self.radius)
            .collect()
    }
}

impl Field for Extension {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.unit_value_and_gradient(&self.to_unit(x)).0
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.value_and_gradient(x).1.expect("analytic"))
    }
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let (v, g) = self.unit_value_and_gradient(&self.to_unit(x));
        (v, Some(g.into_iter().map(|gi| gi / self.radius).collect()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeissMode {
    Harmonic,
    Homogeneous,
}

/// Spectral Weiss energy of the harmonic or d-homogeneous extension.
pub fn weiss_spectral(coeffs: &SpectralCoefficients, d: f64, mode: WeissMode) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("d = {d} must be positive")));
    }
    let n = coeffs.n as f64;
    Ok(coeffs
        .coeffs
        .iter()
        .map(|e| {
            let dj = e.degree as f64;
            let factor = match mode {
                WeissMode::Harmonic => dj - d,
                WeissMode::Homogeneous => {
                    (d * d + dj * (n + dj - 2.0) - d * (n + 2.0 * d - 2.0)) / (n + 2.0 * d - 2.0)
                }
            };
            factor * e.c * e.c
        })
        .sum())
}

/// (1 + ⌊d⌋ - d)/(n + ⌊d⌋ + d - 1).
pub fn kappa(n: usize, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("d = {d} must be positive")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least 2"
        )));
    }
    let fl = d.floor();
    Ok((1.0 + fl - d) / (n as f64 + fl + d - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiperimetricReport {
    pub w_harm: f64,
    pub w_hom: f64,
    pub kappa: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compares the harmonic and d-homogeneous extension energies of a trace.
pub fn epiperimetric_check(
    trace: &BoundaryTrace,
    d: f64,
    max_degree: usize,
) -> Result<EpiperimetricReport> {
    let coeffs = analyze(trace, max_degree)?;
    epiperimetric_from_coeffs(&coeffs, d)
}

pub fn epiperimetric_from_coeffs(
    coeffs: &SpectralCoefficients,
    d: f64,
) -> Result<EpiperimetricReport> {
    let w_harm = weiss_spectral(coeffs, d, WeissMode::Harmonic)?;
    let w_hom = weiss_spectral(coeffs, d, WeissMode::Homogeneous)?;
    let kappa = kappa(coeffs.n, d)?;
    let bound = (1.0 - kappa) * w_hom;
    Ok(EpiperimetricReport {
        w_harm,
        w_hom,
        kappa,
        margin: bound - w_harm,
        pass: w_harm <= bound + 1e-10,
    })
}

/// min over j ≤ j_max of (1 − κ)·w_hom(j) − w_harm(j), the per-degree
/// factors of the two spectral energies.
pub fn termwise_margin(n: usize, d: f64, j_max: usize) -> Result<f64> {
    let k = kappa(n, d)?;
    let nf = n as f64;
    Ok((0..=j_max)
        .map(|j| {
            let j = j as f64;
            let harm = j - d;
            let hom =
                (d * d + j * (nf + j - 2.0) - d * (nf + 2.0 * d - 2.0)) / (nf + 2.0 * d - 2.0);
            (1.0 - k) * hom - harm
        })
        .fold(f64::INFINITY, f64::min))
}

/// Trace on the unit sphere of Σ c_j Y_j over all basis functions of degree
/// ≤ max_degree, with standard normal coefficients drawn from `seed`.
pub fn random_harmonic_trace(n: usize, max_degree: usize, seed: u64) -> Result<BoundaryTrace> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut acc: std::collections::BTreeMap<MultiIndex, f64> = Default::default();
    for k in 0..=max_degree {
        for y in harmonic_basis_shared(n, k)?.iter() {
            let c: f64 = StandardNormal.sample(&mut rng);
            for (e, v) in y.terms() {
                *acc.entry(e.clone()).or_default() += c * v;
            }
        }
    }
    let p = Polynomial::from_terms(n, acc)?;
    let rule = sphere_rule(n, 2 * max_degree.max(1))?;
    BoundaryTrace::of_polynomial(&p, rule, &vec![0.0; n], 1.0)
}
