//! Quadrature-route Weiss and Almgren functionals, radial scans, the Weiss
//! derivative formula, the almost-minimizer gap and power-rate fits.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dot, fd_gradient, Field};
use crate::linalg::linear_fit;
use crate::quadrature::gauss_legendre;
use crate::sphere::{analyze, weiss_spectral, BoundaryTrace, SphereRule, WeissMode};

/// H below this is treated as a degenerate radius.
pub const DEGENERATE_H: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalOptions {
    /// Gauss–Legendre nodes in the radial direction for D.
    pub radial_order: usize,
    /// Fall back to central differences (step 1e-5·r) without an analytic gradient.
    pub allow_fd: bool,
}

impl Default for FunctionalOptions {
    fn default() -> Self {
        FunctionalOptions {
            radial_order: 32,
            allow_fd: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

fn gradient_mode(f: &dyn Field, q: &[f64]) -> GradientMode {
    if f.gradient(q).is_some() {
        GradientMode::Analytic
    } else {
        GradientMode::FiniteDifference
    }
}

fn check_inputs(r: f64, q: &[f64], f: &dyn Field, rule: &SphereRule) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius {r} must be positive"
        )));
    }
    for got in [q.len(), rule.n()] {
        if got != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got,
            });
        }
    }
    Ok(())
}

fn value_and_gradient(
    f: &dyn Field,
    x: &[f64],
    r: f64,
    opts: &FunctionalOptions,
) -> Result<(f64, Vec<f64>)> {
    match f.value_and_gradient(x) {
        (v, Some(g)) => Ok((v, g)),
        (v, None) if opts.allow_fd => Ok((v, fd_gradient(f, x, 1e-5 * r))),
        _ => Err(Error::GradientUnavailable),
    }
}

fn place(q: &[f64], r: f64, w: &[f64], out: &mut [f64]) {
    for i in 0..q.len() {
        out[i] = q[i] + r * w[i];
    }
}

/// H(r, Q, f) = ∫_{∂B(Q,r)} f².
pub fn boundary_mass(r: f64, q: &[f64], f: &dyn Field, rule: &SphereRule) -> Result<f64> {
    check_inputs(r, q, f, rule)?;
    let mut y = vec![0.0; q.len()];
    let s = rule.integrate(|w| {
        place(q, r, w, &mut y);
        let v = f.value(&y);
        v * v
    });
    Ok(r.powi(rule.n() as i32 - 1) * s)
}

/// D(r, Q, f) = ∫_{B(Q,r)} |∇f|².
pub fn dirichlet_energy(
    r: f64,
    q: &[f64],
    f: &dyn Field,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<f64> {
    check_inputs(r, q, f, rule)?;
    let n = rule.n() as i32;
    let g = gauss_legendre(opts.radial_order);
    let mut y = vec![0.0; q.len()];
    let mut total = 0.0;
    for (s, ws) in g.on_interval(0.0, r) {
        let mut shell = 0.0;
        for (w, wt) in rule.nodes().iter().zip(rule.weights()) {
            place(q, s, w, &mut y);
            let (_, grad) = value_and_gradient(f, &y, r, opts)?;
            shell += wt * dot(&grad, &grad);
        }
        total += ws * s.powi(n - 1) * shell;
    }
    Ok(total)
}

/// N(r, Q, f) = r D / H.
pub fn frequency(
    r: f64,
    q: &[f64],
    f: &dyn Field,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<f64> {
    let h = boundary_mass(r, q, f, rule)?;
    if h < DEGENERATE_H {
        return Err(Error::DegenerateRadius { r, h });
    }
    Ok(r * dirichlet_energy(r, q, f, rule, opts)? / h)
}

/// All functionals at one radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeissValue {
    pub w: f64,
    pub h: f64,
    pub d_energy: f64,
    /// `None` at degenerate radii.
    pub n: Option<f64>,
    /// |W − H(N−d)/r^{n−1+2d}| relative to the two terms of W.
    pub identity_residual: f64,
}

/// W_d(r, Q, f) = D/r^{n−2+2d} − d H/r^{n−1+2d}, with the frequency identity
/// checked to 1e-8 relative.
pub fn weiss(
    r: f64,
    q: &[f64],
    f: &dyn Field,
    d: f64,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<WeissValue> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("d = {d} must be positive")));
    }
    let h = boundary_mass(r, q, f, rule)?;
    let de = dirichlet_energy(r, q, f, rule, opts)?;
    assemble_weiss(r, rule.n(), d, h, de)
}

fn assemble_weiss(r: f64, n: usize, d: f64, h: f64, de: f64) -> Result<WeissValue> {
    let n = n as f64;
    let t1 = de / r.powf(n - 2.0 + 2.0 * d);
    let t2 = d * h / r.powf(n - 1.0 + 2.0 * d);
    let w = t1 - t2;
    if h < DEGENERATE_H {
        return Ok(WeissValue {
            w,
            h,
            d_energy: de,
            n: None,
            identity_residual: 0.0,
        });
    }
    let freq = r * de / h;
    let alt = h / r.powf(n - 1.0 + 2.0 * d) * (freq - d);
    let scale = t1.abs() + t2.abs();
    let identity_residual = if scale > 0.0 {
        (w - alt).abs() / scale
    } else {
        0.0
    };
    if identity_residual > 1e-8 {
        return Err(Error::VerificationFailed(format!(
            "Weiss identity residual {identity_residual:e} at r = {r}"
        )));
    }
    Ok(WeissValue {
        w,
        h,
        d_energy: de,
        n: Some(freq),
        identity_residual,
    })
}

/// W_d(r, Q, ·) of the d-homogeneous extension of f's trace on ∂B(Q, r),
/// r^{−2d}[A/(n+2d−2) − dB] with A = ∫(d²φ² + |∇_Sφ|²), B = ∫φ².
pub fn homogeneous_extension_weiss(
    r: f64,
    q: &[f64],
    f: &dyn Field,
    d: f64,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<f64> {
    check_inputs(r, q, f, rule)?;
    let n = rule.n() as f64;
    let mut y = vec![0.0; q.len()];
    let (mut a, mut b) = (0.0, 0.0);
    for (w, wt) in rule.nodes().iter().zip(rule.weights()) {
        place(q, r, w, &mut y);
        let (v, g) = value_and_gradient(f, &y, r, opts)?;
        let radial = dot(&g, w);
        let tangential2 = (dot(&g, &g) - radial * radial).max(0.0);
        a += wt * (d * d * v * v + r * r * tangential2);
        b += wt * v * v;
    }
    Ok(r.powf(-2.0 * d) * (a / (n + 2.0 * d - 2.0) - d * b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub fd_value: f64,
    pub formula_value: f64,
    pub residual: f64,
}

/// Compares dW/dr by central differences (step 1e-4·r) with the formula
/// (n+2d−2)/r·(W(hom. ext.) − W) + r^{−(n−2+2d)}∫_{∂B_r}(∇f·ν − d f/r)².
pub fn weiss_derivative_check(
    f: &dyn Field,
    q: &[f64],
    d: f64,
    r: f64,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<DerivativeCheck> {
    let h = 1e-4 * r;
    let wp = weiss(r + h, q, f, d, rule, opts)?.w;
    let wm = weiss(r - h, q, f, d, rule, opts)?.w;
    let fd_value = (wp - wm) / (2.0 * h);

    let n = rule.n() as f64;
    let w0 = weiss(r, q, f, d, rule, opts)?.w;
    let w_hom = homogeneous_extension_weiss(r, q, f, d, rule, opts)?;
    let mut y = vec![0.0; q.len()];
    let mut flux = 0.0;
    for (w, wt) in rule.nodes().iter().zip(rule.weights()) {
        place(q, r, w, &mut y);
        let (v, g) = value_and_gradient(f, &y, r, opts)?;
        let t = dot(&g, w) - d / r * v;
        flux += wt * t * t;
    }
    flux *= r.powf(n - 1.0);
    let formula_value = (n + 2.0 * d - 2.0) / r * (w_hom - w0) + flux / r.powf(n - 2.0 + 2.0 * d);
    Ok(DerivativeCheck {
        fd_value,
        formula_value,
        residual: (fd_value - formula_value).abs(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerGap {
    pub w_f: f64,
    pub w_harm_competitor: f64,
    pub gap: f64,
    pub parseval_defect: f64,
}

/// Compares W_d(r,Q,f) with W_d of the harmonic extension of f's trace on
/// ∂B(Q,r), computed spectrally up to degree `max_degree`.
pub fn almost_minimizer_check(
    f: &dyn Field,
    q: &[f64],
    d: f64,
    r: f64,
    rule: std::sync::Arc<SphereRule>,
    max_degree: usize,
    opts: &FunctionalOptions,
) -> Result<MinimizerGap> {
    let w_f = weiss(r, q, f, d, &rule, opts)?.w;
    let trace = BoundaryTrace::sample(f, rule, q, r)?;
    let coeffs = analyze(&trace, max_degree)?;
    let w_harm_competitor = r.powf(-2.0 * d) * weiss_spectral(&coeffs, d, WeissMode::Harmonic)?;
    Ok(MinimizerGap {
        w_f,
        w_harm_competitor,
        gap: w_f - w_harm_competitor,
        parseval_defect: coeffs.parseval_defect,
    })
}

/// Geometric grid from `r_max` down to `r_min`, strictly decreasing.
pub fn geometric_grid(r_max: f64, r_min: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_min < r_max) || points_per_decade == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < r_min < r_max and points_per_decade > 0 (got {r_min}, {r_max}, {points_per_decade})"
        )));
    }
    let decades = (r_max / r_min).log10();
    let count = (decades * points_per_decade as f64).ceil().max(1.0) as usize + 1;
    Ok((0..count)
        .map(|i| r_max * (r_min / r_max).powf(i as f64 / (count - 1) as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub r: f64,
    pub h: f64,
    pub d_energy: f64,
    pub n: Option<f64>,
    pub w: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub n: usize,
    pub center: Vec<f64>,
    pub d: f64,
    pub sphere_exact_degree: usize,
    pub sphere_nodes: usize,
    pub radial_order: usize,
    pub gradient_mode: GradientMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalScan {
    pub metadata: ScanMetadata,
    pub records: Vec<ScanRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanQuantity {
    W,
    /// N(r) − min_{s ≤ r} N(s) over the grid.
    NDrop,
    /// N(r) − d.
    NMinusD,
}

impl FunctionalScan {
    pub fn valid(&self) -> impl Iterator<Item = &ScanRecord> {
        self.records.iter().filter(|r| !r.degenerate)
    }

    /// `(r, value)` pairs of a derived quantity on non-degenerate radii.
    pub fn series(&self, quantity: ScanQuantity) -> Vec<(f64, f64)> {
        let rows: Vec<&ScanRecord> = self.valid().collect();
        match quantity {
            ScanQuantity::W => rows.iter().map(|r| (r.r, r.w)).collect(),
            ScanQuantity::NMinusD => rows
                .iter()
                .map(|r| (r.r, r.n.expect("valid row") - self.metadata.d))
                .collect(),
            ScanQuantity::NDrop => rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    // Radii decrease along the grid, so s ≤ r is the tail.
                    let m = rows[i..]
                        .iter()
                        .map(|s| s.n.expect("valid row"))
                        .fold(f64::INFINITY, f64::min);
                    (row.r, row.n.expect("valid row") - m)
                })
                .collect(),
        }
    }

    /// CSV with columns r,H,D,N,W,flags.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "H", "D", "N", "W", "flags"])?;
        for rec in &self.records {
            w.write_record([
                rec.r.to_string(),
                rec.h.to_string(),
                rec.d_energy.to_string(),
                rec.n.map(|v| v.to_string()).unwrap_or_default(),
                rec.w.to_string(),
                if rec.degenerate {
                    "degenerate".into()
                } else {
                    String::new()
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates H, D, N, W on a geometric grid of radii. Radii are processed
/// in parallel; each radius is computed sequentially so results do not
/// depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn scan(
    f: &dyn Field,
    q: &[f64],
    d: f64,
    r_max: f64,
    r_min: f64,
    points_per_decade: usize,
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<FunctionalScan> {
    let radii = geometric_grid(r_max, r_min, points_per_decade)?;
    scan_radii(f, q, d, &radii, rule, opts)
}

/// [`scan`] on an explicit decreasing grid.
pub fn scan_radii(
    f: &dyn Field,
    q: &[f64],
    d: f64,
    radii: &[f64],
    rule: &SphereRule,
    opts: &FunctionalOptions,
) -> Result<FunctionalScan> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("d = {d} must be positive")));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "radii must be strictly decreasing".into(),
        ));
    }
    let records: Result<Vec<ScanRecord>> = radii
        .par_iter()
        .map(|&r| {
            let h = boundary_mass(r, q, f, rule)?;
            let de = dirichlet_energy(r, q, f, rule, opts)?;
            let v = assemble_weiss(r, rule.n(), d, h, de)?;
            Ok(ScanRecord {
                r,
                h,
                d_energy: de,
                n: v.n,
                w: v.w,
                degenerate: v.n.is_none(),
            })
        })
        .collect();
    Ok(FunctionalScan {
        metadata: ScanMetadata {
            n: rule.n(),
            center: q.to_vec(),
            d,
            sphere_exact_degree: rule.exact_degree(),
            sphere_nodes: rule.len(),
            radial_order: opts.radial_order,
            gradient_mode: gradient_mode(f, q),
        },
        records: records?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFit {
    Fit {
        amplitude: f64,
        exponent: f64,
        r_squared: f64,
        points: usize,
    },
    IdenticallyZero,
}

impl RateFit {
    pub fn exponent(&self) -> Option<f64> {
        match self {
            RateFit::Fit { exponent, .. } => Some(*exponent),
            RateFit::IdenticallyZero => None,
        }
    }
}

/// Least-squares fit |v| ≈ C r^e in log–log coordinates. Exact zeros are
/// dropped from the fit.
pub fn rate_fit_series(series: &[(f64, f64)]) -> Result<RateFit> {
    if series.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 5 points, got {}",
            series.len()
        )));
    }
    if series.iter().all(|(_, v)| v.abs() < 1e-14) {
        return Ok(RateFit::IdenticallyZero);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(_, v)| v.abs() > 0.0)
        .map(|(r, v)| (r.ln(), v.abs().ln()))
        .unzip();
    if x.len() < 2 {
        return Ok(RateFit::IdenticallyZero);
    }
    let (slope, intercept, r2) = linear_fit(&x, &y);
    Ok(RateFit::Fit {
        amplitude: intercept.exp(),
        exponent: slope,
        r_squared: r2,
        points: x.len(),
    })
}

pub fn rate_fit(scan: &FunctionalScan, quantity: ScanQuantity) -> Result<RateFit> {
    rate_fit_series(&scan.series(quantity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, PolyField};
    use crate::poly::{fixture, Polynomial};
    use crate::sphere::sphere_rule;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn x1() -> PolyField {
        PolyField::new(Polynomial::coordinate(3, 0))
    }

    fn p_plus_q() -> PolyField {
        // x² − y² plus a cubic harmonic.
        let p = fixture("x2-y2").unwrap().into_poly();
        let q = Polynomial::from_slice_terms(3, &[(&[3, 0, 0], 1.0), (&[1, 2, 0], -3.0)]).unwrap();
        PolyField::new(&p + &q)
    }

    const O3: [f64; 3] = [0.0; 3];

    #[test]
    fn h_and_d_examples() {
        let rule = sphere_rule(3, 8).unwrap();
        let opts = FunctionalOptions::default();
        assert_abs_diff_eq!(
            boundary_mass(1.0, &O3, &x1(), &rule).unwrap(),
            4.0 * PI / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            dirichlet_energy(1.0, &O3, &x1(), &rule, &opts).unwrap(),
            4.0 * PI / 3.0,
            epsilon = 1e-12
        );
        let one = PolyField::new(Polynomial::constant(3, 1.0));
        let r: f64 = 0.7;
        assert_abs_diff_eq!(
            boundary_mass(r, &O3, &one, &rule).unwrap(),
            r * r * 4.0 * PI,
            epsilon = 1e-12
        );
        assert_eq!(dirichlet_energy(r, &O3, &one, &rule, &opts).unwrap(), 0.0);
    }

    #[test]
    fn frequency_examples() {
        let rule = sphere_rule(3, 8).unwrap();
        let opts = FunctionalOptions::default();
        for r in [0.25, 1.0, 2.0] {
            assert_abs_diff_eq!(
                frequency(r, &O3, &x1(), &rule, &opts).unwrap(),
                1.0,
                epsilon = 1e-12
            );
        }
        let p = PolyField::new(fixture("szulkin").unwrap().homogeneous_part(2));
        assert_abs_diff_eq!(
            frequency(0.3, &O3, &p, &rule, &opts).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let zero = PolyField::new(Polynomial::zero(3));
        assert!(matches!(
            frequency(1.0, &O3, &zero, &rule, &opts),
            Err(Error::DegenerateRadius { .. })
        ));
    }

    #[test]
    fn weiss_examples() {
        let rule = sphere_rule(3, 8).unwrap();
        let opts = FunctionalOptions::default();
        let w2 = weiss(1.0, &O3, &x1(), 2.0, &rule, &opts).unwrap();
        assert_abs_diff_eq!(w2.w, -4.0 * PI / 3.0, epsilon = 1e-12);
        let w1 = weiss(1.0, &O3, &x1(), 1.0, &rule, &opts).unwrap();
        assert_abs_diff_eq!(w1.w, 0.0, epsilon = 1e-12);
        let p = PolyField::new(fixture("x2-y2").unwrap().into_poly());
        for r in [0.1, 1.0, 3.0] {
            assert!(weiss(r, &O3, &p, 2.0, &rule, &opts).unwrap().w.abs() < 1e-10);
        }
    }

    #[test]
    fn scan_homogeneous_and_sum() {
        let rule2 = sphere_rule(2, 10).unwrap();
        let opts = FunctionalOptions::default();
        let xy = PolyField::new(fixture("xy").unwrap().into_poly());
        let s = scan(&xy, &[0.0, 0.0], 2.0, 1.0, 1e-3, 4, &rule2, &opts).unwrap();
        for rec in &s.records {
            assert_abs_diff_eq!(rec.n.unwrap(), 2.0, epsilon = 1e-10);
            assert!(rec.w.abs() < 1e-10);
        }
        assert_eq!(
            rate_fit(&s, ScanQuantity::W).unwrap(),
            RateFit::IdenticallyZero
        );

        let rule = sphere_rule(3, 10).unwrap();
        let s = scan(&p_plus_q(), &O3, 2.0, 1.0, 1e-2, 6, &rule, &opts).unwrap();
        let w: Vec<f64> = s.records.iter().map(|r| r.w).collect();
        assert!(w.iter().all(|v| *v > 0.0));
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        let fit = rate_fit(&s, ScanQuantity::W).unwrap();
        assert!((fit.exponent().unwrap() - 2.0).abs() < 0.05);
        let fit = rate_fit(&s, ScanQuantity::NMinusD).unwrap();
        assert!((fit.exponent().unwrap() - 2.0).abs() < 0.1);
        let n: Vec<f64> = s.records.iter().map(|r| r.n.unwrap()).collect();
        assert!(n.windows(2).all(|p| p[1] <= p[0]));
        assert!((n.last().unwrap() - 2.0).abs() < 1e-3);

        let zero = PolyField::new(Polynomial::zero(3));
        let s = scan(&zero, &O3, 2.0, 1.0, 1e-2, 2, &rule, &opts).unwrap();
        assert!(s.records.iter().all(|r| r.degenerate));
    }

    #[test]
    fn derivative_formula() {
        let rule = sphere_rule(3, 12).unwrap();
        let opts = FunctionalOptions::default();
        let p = PolyField::new(fixture("x2-y2").unwrap().into_poly());
        let c = weiss_derivative_check(&p, &O3, 2.0, 0.8, &rule, &opts).unwrap();
        assert!(c.residual < 1e-8 && c.formula_value.abs() < 1e-8);
        let c = weiss_derivative_check(&p_plus_q(), &O3, 2.0, 0.6, &rule, &opts).unwrap();
        assert!(c.residual / c.fd_value.abs() < 1e-3);
        let c = weiss_derivative_check(&x1(), &O3, 2.0, 1.0, &rule, &opts).unwrap();
        assert!(c.residual / c.fd_value.abs() < 1e-3);
    }

    #[test]
    fn minimizer_gap() {
        let rule = sphere_rule(3, 16).unwrap();
        let opts = FunctionalOptions::default();
        let g = almost_minimizer_check(
            &p_plus_q(),
            &[0.1, 0.0, 0.2],
            2.0,
            0.7,
            rule.clone(),
            6,
            &opts,
        )
        .unwrap();
        assert!(g.gap.abs() <= 1e-8);
        let sq = FnField::new(3, |x: &[f64]| x.iter().map(|v| v * v).sum())
            .with_gradient(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect());
        let g = almost_minimizer_check(&sq, &O3, 2.0, 1.0, rule, 8, &opts).unwrap();
        assert!(g.gap > 1e-3);
    }

    #[test]
    fn finite_difference_fallback() {
        let rule = sphere_rule(3, 8).unwrap();
        let f = FnField::new(3, |x: &[f64]| x[0]);
        let d = dirichlet_energy(1.0, &O3, &f, &rule, &FunctionalOptions::default()).unwrap();
        assert_abs_diff_eq!(d, 4.0 * PI / 3.0, epsilon = 1e-8);
        let strict = FunctionalOptions {
            allow_fd: false,
            ..Default::default()
        };
        assert_eq!(
            dirichlet_energy(1.0, &O3, &f, &rule, &strict),
            Err(Error::GradientUnavailable)
        );
    }

    #[test]
    fn scaling_covariance() {
        let rule = sphere_rule(3, 10).unwrap();
        let opts = FunctionalOptions::default();
        let q3 = PolyField::new(Polynomial::from_slice_terms(3, &[(&[1, 1, 1], 1.0)]).unwrap());
        let a = weiss(0.5, &O3, &q3, 2.0, &rule, &opts).unwrap().w;
        let b = weiss(1.0, &O3, &q3, 2.0, &rule, &opts).unwrap().w;
        assert_abs_diff_eq!(a / b, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rate_fit_requires_points() {
        assert!(rate_fit_series(&[(1.0, 1.0); 3]).is_err());
        let s: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let r = 0.5f64.powi(i);
                (r, 3.0 * r.powf(1.5))
            })
            .collect();
        match rate_fit_series(&s).unwrap() {
            RateFit::Fit {
                amplitude,
                exponent,
                r_squared,
                ..
            } => {
                assert_abs_diff_eq!(amplitude, 3.0, epsilon = 1e-10);
                assert_abs_diff_eq!(exponent, 1.5, epsilon = 1e-12);
                assert_abs_diff_eq!(r_squared, 1.0, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
