//! Single-layer Newtonian potentials with the kernel normalized so that
//! ΔΦ = δ: point sums in R^n and piecewise-linear line layers in the plane.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{dot, norm};
use crate::poly::sphere_area;
use crate::quadrature::gauss_legendre;

/// Panel primitives shared between neighbouring knots.
type Primitives = (f64, f64, f64, f64, f64);

/// Φ(x) = log|x|/(2π) for n = 2 and −1/((n−2)|S^{n−1}| |x|^{n−2}) otherwise.
pub fn fundamental_solution(n: usize, r: f64) -> f64 {
    if n == 2 {
        r.ln() / (2.0 * PI)
    } else {
        -1.0 / ((n as f64 - 2.0) * sphere_area(n) * r.powi(n as i32 - 2))
    }
}

/// ∇Φ(x) = x / (|S^{n−1}| |x|^n).
fn kernel_gradient(x: &[f64], r: f64) -> impl Iterator<Item = f64> + '_ {
    let n = x.len();
    let c = 1.0 / (sphere_area(n) * r.powi(n as i32));
    x.iter().map(move |v| c * v)
}

/// Σ m_i Φ(x − y_i) for point masses m_i = weight_i·ρ_i.
#[derive(Clone, Debug)]
pub struct PointLayer {
    n: usize,
    points: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl PointLayer {
    pub fn new(points: Vec<Vec<f64>>, weights: &[f64], densities: &[f64]) -> Result<Self> {
        let n = points.first().map_or(0, |p| p.len());
        if n < 2 {
            return Err(Error::InvalidArgument("point layers need n ≥ 2".into()));
        }
        if points.len() != weights.len() || points.len() != densities.len() {
            return Err(Error::InvalidArgument(
                "points, weights and densities differ in length".into(),
            ));
        }
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        let masses = weights.iter().zip(densities).map(|(w, r)| w * r).collect();
        Ok(PointLayer { n, points, masses })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Potential and gradient at `x`.
    pub fn potential(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n];
        let mut diff = vec![0.0; self.n];
        for (y, m) in self.points.iter().zip(&self.masses) {
            if *m == 0.0 {
                continue;
            }
            for i in 0..self.n {
                diff[i] = x[i] - y[i];
            }
            let r = norm(&diff);
            if r < 1e-9 {
                return Err(Error::NearSingular { distance: r });
            }
            value += m * fundamental_solution(self.n, r);
            for (g, k) in grad.iter_mut().zip(kernel_gradient(&diff, r)) {
                *g += m * k;
            }
        }
        Ok((value, grad))
    }
}

/// A straight line in the plane carrying a density that is linear between
/// knots `u_0 < … < u_m` (arc-length positions from `origin` along `tangent`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerLine {
    pub origin: [f64; 2],
    pub tangent: [f64; 2],
    pub knots: Vec<f64>,
    pub density: Vec<f64>,
}

impl LayerLine {
    pub fn new(
        origin: [f64; 2],
        tangent: [f64; 2],
        knots: Vec<f64>,
        density: Vec<f64>,
    ) -> Result<Self> {
        let t = norm(&tangent);
        if (t - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "tangent must be a unit vector".into(),
            ));
        }
        if knots.len() < 2 || knots.len() != density.len() {
            return Err(Error::InvalidArgument(
                "a line needs matching knots and densities".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("knots must increase".into()));
        }
        Ok(LayerLine {
            origin,
            tangent,
            knots,
            density,
        })
    }

    pub fn normal(&self) -> [f64; 2] {
        [-self.tangent[1], self.tangent[0]]
    }

    pub fn point(&self, u: f64) -> [f64; 2] {
        [
            self.origin[0] + u * self.tangent[0],
            self.origin[1] + u * self.tangent[1],
        ]
    }

    fn is_zero(&self) -> bool {
        self.density.iter().all(|r| *r == 0.0)
    }

    /// Value and (s, t) derivatives of the line's potential, with the
    /// principal value taken on the line itself.
    fn local(&self, s: f64, t: f64) -> (f64, f64, f64) {
        // Per-knot primitives in ξ = u − s:
        //   ∫log r dξ      = ξ·lq − ξ + t·A
        //   ∫ξ log r dξ    = q·lq/2 − ξ²/4
        //   ∫ξ²/q dξ       = ξ − t·A
        // with q = ξ² + t², lq = log √q, A = atan(ξ/t).
        let on_line = t.abs() <= 1e-14 * (1.0 + s.abs());
        let t = if on_line { 0.0 } else { t };
        let prim = |u: f64| {
            let xi = u - s;
            let q = xi * xi + t * t;
            // Coefficients of lq cancel across a knot with continuous density,
            // so the logarithm is dropped where it diverges.
            let lq = if q > 0.0 { 0.5 * q.ln() } else { 0.0 };
            let a = if on_line { 0.0 } else { (xi / t).atan() };
            (
                xi * lq - xi + t * a,
                0.5 * q * lq - 0.25 * xi * xi,
                xi - t * a,
                lq,
                a,
            )
        };
        let (mut value, mut gs, mut gt) = (0.0, 0.0, 0.0);
        // Primitives at shared knots are reused; zero panels are skipped.
        let mut cached: Option<(usize, Primitives)> = None;
        for k in 0..self.knots.len() - 1 {
            let (r0, r1) = (self.density[k], self.density[k + 1]);
            if r0 == 0.0 && r1 == 0.0 {
                continue;
            }
            let prev = match cached {
                Some((i, p)) if i == k => p,
                _ => prim(self.knots[k]),
            };
            let next = prim(self.knots[k + 1]);
            cached = Some((k + 1, next));
            let kappa = (r1 - r0) / (self.knots[k + 1] - self.knots[k]);
            let rho_s = r0 + kappa * (s - self.knots[k]);
            value += rho_s * (next.0 - prev.0) + kappa * (next.1 - prev.1);
            gs += -rho_s * (next.3 - prev.3) - kappa * (next.2 - prev.2);
            gt += rho_s * (next.4 - prev.4) + kappa * t * (next.3 - prev.3);
        }
        let c = 1.0 / (2.0 * PI);
        (c * value, c * gs, c * gt)
    }

    fn potential(&self, x: &[f64]) -> (f64, [f64; 2]) {
        let nu = self.normal();
        let rel = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let s = dot(&rel, &self.tangent);
        let t = dot(&rel, &nu);
        let (v, gs, gt) = self.local(s, t);
        (
            v,
            [
                gs * self.tangent[0] + gt * nu[0],
                gs * self.tangent[1] + gt * nu[1],
            ],
        )
    }
}

/// Union of planar line layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineLayer {
    lines: Vec<LayerLine>,
}

impl LineLayer {
    pub fn new(lines: Vec<LayerLine>) -> Self {
        LineLayer { lines }
    }

    pub fn lines(&self) -> &[LayerLine] {
        &self.lines
    }

    /// True when every density vanishes.
    pub fn is_zero(&self) -> bool {
        self.lines.iter().all(LayerLine::is_zero)
    }

    /// Potential and gradient; on the layer the gradient is the average of
    /// the one-sided limits.
    pub fn potential(&self, x: &[f64]) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for line in &self.lines {
            if line.is_zero() {
                continue;
            }
            let (lv, lg) = line.potential(x);
            v += lv;
            g[0] += lg[0];
            g[1] += lg[1];
        }
        (v, g)
    }

    /// ∫ f ρ dH¹ over the layer, 8 Gauss nodes per panel.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let g = gauss_legendre(8);
        let mut total = 0.0;
        for line in &self.lines {
            for k in 0..line.knots.len() - 1 {
                let (a, b) = (line.knots[k], line.knots[k + 1]);
                let (r0, r1) = (line.density[k], line.density[k + 1]);
                if r0 == 0.0 && r1 == 0.0 {
                    continue;
                }
                for (u, w) in g.on_interval(a, b) {
                    let rho = r0 + (r1 - r0) * (u - a) / (b - a);
                    total += w * rho * f(&line.point(u));
                }
            }
        }
        total
    }

    /// Total signed mass ∫ρ dH¹.
    pub fn mass(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| {
                l.knots
                    .windows(2)
                    .zip(l.density.windows(2))
                    .map(|(u, r)| 0.5 * (u[1] - u[0]) * (r[0] + r[1]))
                    .sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_mass_kernel() {
        let l = PointLayer::new(vec![vec![0.0; 3]], &[1.0], &[1.0]).unwrap();
        let (v, g) = l.potential(&[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, -1.0 / (4.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 1.0 / (4.0 * PI), epsilon = 1e-15);
        assert!(matches!(
            l.potential(&[1e-10, 0.0, 0.0]),
            Err(Error::NearSingular { .. })
        ));
        let zero = PointLayer::new(vec![vec![0.3, 0.1]], &[2.0], &[0.0]).unwrap();
        assert_eq!(zero.potential(&[1.0, 1.0]).unwrap().0, 0.0);
    }

    #[test]
    fn circle_single_layer() {
        // Uniform unit density on the unit circle: 0 inside, log r outside.
        let m = 400;
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let l = PointLayer::new(pts, &vec![2.0 * PI / m as f64; m], &vec![1.0; m]).unwrap();
        assert_abs_diff_eq!(l.potential(&[0.0, 0.0]).unwrap().0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            l.potential(&[2.0, 0.0]).unwrap().0,
            2f64.ln(),
            epsilon = 1e-4
        );
    }

    fn brute(line: &LayerLine, x: &[f64]) -> f64 {
        let g = gauss_legendre(40);
        let mut v = 0.0;
        for k in 0..line.knots.len() - 1 {
            let (a, b) = (line.knots[k], line.knots[k + 1]);
            for (u, w) in g.on_interval(a, b) {
                let rho =
                    line.density[k] + (line.density[k + 1] - line.density[k]) * (u - a) / (b - a);
                let y = line.point(u);
                let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                v += w * rho * fundamental_solution(2, r);
            }
        }
        v
    }

    fn sample_line() -> LayerLine {
        let t = [0.6, 0.8];
        LayerLine::new(
            [0.1, -0.2],
            t,
            vec![0.0, 0.3, 0.5, 1.2],
            vec![0.0, 0.7, -0.2, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let line = sample_line();
        let layer = LineLayer::new(vec![line.clone()]);
        for x in [[2.0, 1.0], [-1.0, 0.5], [0.5, 3.0]] {
            assert_abs_diff_eq!(layer.potential(&x).0, brute(&line, &x), epsilon = 1e-13);
        }
    }

    #[test]
    fn gradient_and_jump() {
        let line = sample_line();
        let layer = LineLayer::new(vec![line.clone()]);
        let h = 1e-6;
        for x in [[0.9, 0.1], [0.2, 0.9], [-0.3, -0.4]] {
            let (_, g) = layer.potential(&x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (layer.potential(&xp).0 - layer.potential(&xm).0) / (2.0 * h);
                assert_abs_diff_eq!(g[i], fd, epsilon = 1e-7);
            }
        }
        // Normal derivative jumps by ρ; on the line the average is returned.
        let u = 0.4;
        let rho = 0.7 + (-0.2 - 0.7) * (u - 0.3) / 0.2;
        let y = line.point(u);
        let nu = line.normal();
        let e = 1e-7;
        let side = |s: f64| {
            layer
                .potential(&[y[0] + s * e * nu[0], y[1] + s * e * nu[1]])
                .1
        };
        let (gp, gm, g0) = (side(1.0), side(-1.0), layer.potential(&y).1);
        let jump = dot(&gp, &nu) - dot(&gm, &nu);
        assert_abs_diff_eq!(jump, rho, epsilon = 1e-5);
        assert_abs_diff_eq!(
            dot(&g0, &nu),
            0.5 * (dot(&gp, &nu) + dot(&gm, &nu)),
            epsilon = 1e-5
        );
        // Values and gradients stay finite at knots with continuous density.
        let (v, g) = layer.potential(&line.point(0.3));
        assert!(v.is_finite() && g.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn mass_and_integration() {
        let layer = LineLayer::new(vec![sample_line()]);
        assert_abs_diff_eq!(layer.integrate(|_| 1.0), layer.mass(), epsilon = 1e-14);
    }
}
