//! Sparse real polynomials on R^n and the harmonic subspace.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Deref;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sphere::SphereRule;

/// Exponent vector of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - e_i` if the i-th exponent is positive.
    fn lower(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[i] -= 1;
        Some(MultiIndex(e))
    }

    /// `x^self` at a point.
    pub fn monomial_value(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }

    /// Multinomial factorial α!.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e).map(f64::from).product::<f64>())
            .product()
    }
}

/// All exponent vectors of total degree `d` in `n` variables, in a fixed
/// (descending lexicographic) order.
pub fn monomials(n: usize, d: u32) -> Vec<MultiIndex> {
    fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(d);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for k in (0..=d).rev() {
            prefix.push(k);
            rec(n, d - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// All exponent vectors of total degree at most `d`.
pub fn monomials_up_to(n: usize, d: u32) -> Vec<MultiIndex> {
    (0..=d).flat_map(|k| monomials(n, k)).collect()
}

/// Real polynomial in `n` variables stored as a sparse coefficient map.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::from_terms(n, [(MultiIndex::zeros(n), c)]).expect("valid constant")
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        Self::from_terms(n, [(MultiIndex::unit(n, i), 1.0)]).expect("valid coordinate")
    }

    /// Builds a polynomial from `(exponent, coefficient)` pairs; repeated
    /// exponents accumulate and zero coefficients are dropped.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut map = BTreeMap::new();
        for (e, c) in terms {
            if e.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: e.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite coefficient {c}"
                )));
            }
            *map.entry(e).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Polynomial { n, terms: map })
    }

    /// Convenience constructor from `(&[exponents], coefficient)` pairs.
    pub fn from_slice_terms(n: usize, terms: &[(&[u32], f64)]) -> Result<Self> {
        Self::from_terms(
            n,
            terms.iter().map(|(e, c)| (MultiIndex::new(e.to_vec()), *c)),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// Smallest total degree among stored terms (the vanishing order at 0).
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).min().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.degree() == self.min_degree()
    }

    pub fn coefficient(&self, e: &MultiIndex) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Evaluation without the dimension check. Powers of every coordinate
    /// are tabulated once per call.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let deg = self.degree() as usize;
        let mut powers = vec![1.0; self.n * (deg + 1)];
        for (i, &xi) in x.iter().enumerate() {
            for k in 1..=deg {
                powers[i * (deg + 1) + k] = powers[i * (deg + 1) + k - 1] * xi;
            }
        }
        self.terms
            .iter()
            .map(|(e, c)| {
                e.0.iter()
                    .enumerate()
                    .fold(*c, |acc, (i, &k)| acc * powers[i * (deg + 1) + k as usize])
            })
            .sum()
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter_map(|(e, c)| e.lower(i).map(|l| (l, c * f64::from(e.0[i]))));
        Polynomial::from_terms(self.n, terms).expect("same dimension")
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.n).map(|i| self.partial(i)).collect()
    }

    /// `ζ · ∇p`.
    pub fn directional_derivative(&self, zeta: &[f64]) -> Result<Polynomial> {
        if zeta.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: zeta.len(),
            });
        }
        let mut out = Polynomial::zero(self.n);
        for (i, z) in zeta.iter().enumerate() {
            if *z != 0.0 {
                out = &out + &self.partial(i).scale(*z);
            }
        }
        Ok(out)
    }

    /// Mixed partial `D^α p`.
    pub fn derivative(&self, alpha: &MultiIndex) -> Polynomial {
        let mut out = self.clone();
        for (i, &k) in alpha.0.iter().enumerate() {
            for _ in 0..k {
                out = out.partial(i);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Polynomial {
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (e, c) in &self.terms {
            for i in 0..self.n {
                let k = e.0[i];
                if k >= 2 {
                    let mut l = e.0.clone();
                    l[i] -= 2;
                    *acc.entry(MultiIndex(l)).or_insert(0.0) += c * f64::from(k * (k - 1));
                }
            }
        }
        Polynomial::from_terms(self.n, acc).expect("same dimension")
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_terms(self.n, self.terms.iter().map(|(e, c)| (e.clone(), c * s)))
            .expect("same dimension")
    }

    /// Homogeneous component of degree `k`.
    pub fn homogeneous_part(&self, k: u32) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.degree() == k)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    /// `x ↦ p(x + a)`.
    pub fn translate(&self, a: &[f64]) -> Result<Polynomial> {
        if a.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a.len(),
            });
        }
        // Expand each factor (x_i + a_i)^k binomially.
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (e, c) in &self.terms {
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(Vec::with_capacity(self.n), *c)];
            for (i, &k) in e.0.iter().enumerate() {
                let mut next = Vec::with_capacity(partial.len() * (k as usize + 1));
                for (prefix, coef) in &partial {
                    let mut binom = 1.0;
                    for j in 0..=k {
                        // term x_i^j a_i^{k-j} C(k, j)
                        let w = binom * a[i].powi((k - j) as i32);
                        if w != 0.0 {
                            let mut p = prefix.clone();
                            p.push(j);
                            next.push((p, coef * w));
                        }
                        binom = binom * f64::from(k - j) / f64::from(j + 1);
                    }
                }
                partial = next;
            }
            for (exp, coef) in partial {
                *acc.entry(MultiIndex(exp)).or_insert(0.0) += coef;
            }
        }
        // Drop cancellation residue relative to the input scale.
        let tiny = 1e-15 * self.max_abs_coefficient();
        acc.retain(|_, c| c.abs() > tiny);
        Polynomial::from_terms(self.n, acc)
    }

    /// Embeds into R^m (m ≥ n) by appending unused variables.
    pub fn embed(&self, m: usize) -> Result<Polynomial> {
        if m < self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot embed R^{} into R^{m}",
                self.n
            )));
        }
        Polynomial::from_terms(
            m,
            self.terms.iter().map(|(e, c)| {
                let mut v = e.0.clone();
                v.resize(m, 0);
                (MultiIndex(v), *c)
            }),
        )
    }

    /// Coefficients over a given list of monomials.
    pub fn coefficient_vector(&self, basis: &[MultiIndex]) -> Vec<f64> {
        basis.iter().map(|e| self.coefficient(e)).collect()
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n, "dimension mismatch in polynomial sum");
        Polynomial::from_terms(
            self.n,
            self.terms
                .iter()
                .chain(rhs.terms.iter())
                .map(|(e, c)| (e.clone(), *c)),
        )
        .expect("same dimension")
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &rhs.scale(-1.0)
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n, "dimension mismatch in polynomial product");
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                *acc.entry(a.add(b)).or_insert(0.0) += ca * cb;
            }
        }
        Polynomial::from_terms(self.n, acc).expect("same dimension")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = ["x", "y", "z", "w"];
        for (k, (e, c)) in self.terms.iter().rev().enumerate() {
            let sign = if *c < 0.0 {
                "-"
            } else if k > 0 {
                "+"
            } else {
                ""
            };
            write!(
                f,
                "{}{}",
                if k > 0 {
                    format!(" {sign} ")
                } else {
                    sign.to_string()
                },
                c.abs()
            )?;
            for (i, &p) in e.0.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                let name = if self.n <= 4 {
                    names[i].to_string()
                } else {
                    format!("x{}", i + 1)
                };
                if p == 1 {
                    write!(f, "*{name}")?;
                } else {
                    write!(f, "*{name}^{p}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    exp: Vec<u32>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    n: usize,
    terms: Vec<TermJson>,
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyJson {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| TermJson {
                    exp: e.0.clone(),
                    c: *c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PolyJson::deserialize(d)?;
        Polynomial::from_terms(
            raw.n,
            raw.terms.into_iter().map(|t| (MultiIndex(t.exp), t.c)),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Relative Laplacian residual used as the harmonicity certificate.
fn laplacian_residual(p: &Polynomial) -> f64 {
    let scale = p.max_abs_coefficient();
    if scale == 0.0 {
        return 0.0;
    }
    let deg = f64::from(p.degree().max(2));
    p.laplacian().max_abs_coefficient() / (scale * deg * (deg - 1.0))
}

/// A polynomial certified harmonic at construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicPolynomial {
    #[serde(flatten)]
    poly: Polynomial,
    degree: u32,
    homogeneous: bool,
}

impl HarmonicPolynomial {
    pub const RESIDUAL_TOL: f64 = 1e-12;

    pub fn new(poly: Polynomial) -> Result<Self> {
        let residual = laplacian_residual(&poly);
        if residual > Self::RESIDUAL_TOL {
            return Err(Error::NotHarmonic { residual });
        }
        Ok(HarmonicPolynomial {
            degree: poly.degree(),
            homogeneous: poly.is_homogeneous(),
            poly,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn into_poly(self) -> Polynomial {
        self.poly
    }
}

impl Deref for HarmonicPolynomial {
    type Target = Polynomial;
    fn deref(&self) -> &Polynomial {
        &self.poly
    }
}

impl<'de> Deserialize<'de> for HarmonicPolynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = Polynomial::deserialize(d)?;
        HarmonicPolynomial::new(p).map_err(serde::de::Error::custom)
    }
}

/// Γ(k/2) for a positive integer k.
pub(crate) fn gamma_half(k: u32) -> f64 {
    match k {
        0 => f64::INFINITY,
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (f64::from(k) / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

/// Surface measure of S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n as u32)
}

/// Exact ∫_{S^{n-1}} x^a dσ.
pub fn sphere_monomial_integral(a: &[u32]) -> f64 {
    if a.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let n = a.len() as u32;
    let total: u32 = a.iter().sum();
    // Interleave numerator and denominator factors to stay in range.
    let num: f64 = a.iter().map(|&e| gamma_half(e + 1)).product();
    2.0 * num / gamma_half(total + n)
}

/// Dimension of the degree-d homogeneous harmonic polynomials on R^n.
pub fn harmonic_space_dimension(n: usize, d: usize) -> usize {
    fn binom(a: usize, b: usize) -> usize {
        if b > a {
            return 0;
        }
        (0..b).fold(1usize, |acc, i| acc * (a - i) / (i + 1))
    }
    let first = binom(n + d - 1, n - 1);
    let second = if d >= 2 { binom(n + d - 3, n - 1) } else { 0 };
    first - second
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<Vec<HarmonicPolynomial>>>>;

fn basis_cache() -> &'static BasisCache {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// L²(S^{n-1})-orthonormal basis of degree-d homogeneous harmonics.
pub fn harmonic_basis(n: usize, d: usize) -> Result<Vec<HarmonicPolynomial>> {
    Ok(harmonic_basis_shared(n, d)?.as_ref().clone())
}

/// Cached variant of [`harmonic_basis`].
pub fn harmonic_basis_shared(n: usize, d: usize) -> Result<Arc<Vec<HarmonicPolynomial>>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be at least 2"
        )));
    }
    if let Some(b) = basis_cache().lock().expect("cache lock").get(&(n, d)) {
        return Ok(b.clone());
    }
    let b = Arc::new(build_basis(n, d)?);
    basis_cache()
        .lock()
        .expect("cache lock")
        .insert((n, d), b.clone());
    Ok(b)
}

/// Re and Im of (x + iy)^d scaled to unit norm on the circle; on S¹ they
/// are cos(dθ)/√π and sin(dθ)/√π, which the planar fast paths rely on.
fn planar_basis(d: usize) -> Result<Vec<HarmonicPolynomial>> {
    let pi = std::f64::consts::PI;
    if d == 0 {
        return Ok(vec![HarmonicPolynomial::new(Polynomial::constant(
            2,
            1.0 / (2.0 * pi).sqrt(),
        ))?]);
    }
    let scale = 1.0 / pi.sqrt();
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut binom = 1.0;
    for k in 0..=d as u32 {
        // C(d,k) x^{d-k} (iy)^k
        let e = MultiIndex(vec![d as u32 - k, k]);
        let c = binom * scale;
        match k % 4 {
            0 => re.push((e, c)),
            1 => im.push((e, c)),
            2 => re.push((e, -c)),
            _ => im.push((e, -c)),
        }
        binom = binom * f64::from(d as u32 - k) / f64::from(k + 1);
    }
    Ok(vec![
        HarmonicPolynomial::new(Polynomial::from_terms(2, re)?)?,
        HarmonicPolynomial::new(Polynomial::from_terms(2, im)?)?,
    ])
}

fn build_basis(n: usize, d: usize) -> Result<Vec<HarmonicPolynomial>> {
    if n == 2 {
        return planar_basis(d);
    }
    let mons = monomials(n, d as u32);
    let cols = mons.len();
    let null: Vec<Vec<f64>> = if d < 2 {
        (0..cols)
            .map(|i| {
                let mut v = vec![0.0; cols];
                v[i] = 1.0;
                v
            })
            .collect()
    } else {
        let lower = monomials(n, d as u32 - 2);
        let row_of: HashMap<&MultiIndex, usize> =
            lower.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut lap = vec![vec![0.0; cols]; lower.len()];
        for (c, m) in mons.iter().enumerate() {
            for i in 0..n {
                let k = m.0[i];
                if k >= 2 {
                    let mut l = m.0.clone();
                    l[i] -= 2;
                    lap[row_of[&MultiIndex(l)]][c] += f64::from(k * (k - 1));
                }
            }
        }
        linalg::null_space(&lap, cols, 1e-12)
    };

    // Sphere inner product of monomials is known in closed form.
    let gram: Vec<Vec<f64>> = (0..cols)
        .map(|a| {
            (0..cols)
                .map(|b| sphere_monomial_integral(mons[a].add(&mons[b]).exponents()))
                .collect()
        })
        .collect();
    let inner = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for (a, ua) in u.iter().enumerate() {
            if *ua == 0.0 {
                continue;
            }
            for (b, vb) in v.iter().enumerate() {
                s += ua * gram[a][b] * vb;
            }
        }
        s
    };

    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(null.len());
    for mut v in null {
        for _ in 0..2 {
            for q in &ortho {
                let proj = inner(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = inner(&v, &v).sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        ortho.push(v);
    }

    ortho
        .into_iter()
        .map(|v| {
            let max = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let poly = Polynomial::from_terms(
                n,
                mons.iter()
                    .zip(v)
                    .filter(|(_, c)| c.abs() > 1e-15 * max)
                    .map(|(m, c)| (m.clone(), c)),
            )?;
            HarmonicPolynomial::new(poly)
        })
        .collect()
}

/// dim{ζ : ζ·∇p ≡ 0}.
pub fn poly_dimension(p: &Polynomial) -> Result<usize> {
    if p.is_zero() {
        return Err(Error::InvalidArgument(
            "dimension of the zero polynomial is undefined".into(),
        ));
    }
    let grads = p.gradient();
    let mut support: Vec<MultiIndex> = grads
        .iter()
        .flat_map(|g| g.terms().keys().cloned())
        .collect();
    support.sort();
    support.dedup();
    if support.is_empty() {
        return Ok(p.n());
    }
    let rows: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.coefficient_vector(&support))
        .collect();
    Ok(p.n() - linalg::rank(&rows, 1e-10))
}

/// (∫_{S^{n-1}} |p|^e dσ)^{1/e} by quadrature.
pub fn sphere_lp_norm(p: &Polynomial, rule: &SphereRule, exponent: u32) -> Result<f64> {
    if rule.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: rule.n(),
        });
    }
    if !(exponent == 1 || exponent == 2) {
        return Err(Error::InvalidArgument(format!(
            "exponent must be 1 or 2, got {exponent}"
        )));
    }
    let s: f64 = rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(x, w)| w * p.eval(x).abs().powi(exponent as i32))
        .sum();
    Ok(s.powf(1.0 / f64::from(exponent)))
}

/// Identifiers accepted by [`fixture`].
pub const FIXTURE_IDS: &[&str] = &[
    "xy",
    "x2-y2",
    "re-z3",
    "zx",
    "szulkin",
    "xy-r4",
    "x2+y2-2z2",
];

/// Named example polynomials.
pub fn fixture(id: &str) -> Result<HarmonicPolynomial> {
    let p = match id {
        "xy" => Polynomial::from_slice_terms(2, &[(&[1, 1], 1.0)]),
        "x2-y2" => Polynomial::from_slice_terms(3, &[(&[2, 0, 0], 1.0), (&[0, 2, 0], -1.0)]),
        "re-z3" => Polynomial::from_slice_terms(2, &[(&[3, 0], 1.0), (&[1, 2], -3.0)]),
        "zx" => Polynomial::from_slice_terms(3, &[(&[1, 0, 1], 1.0)]),
        "szulkin" => Polynomial::from_slice_terms(
            3,
            &[
                (&[2, 0, 0], 1.0),
                (&[0, 2, 0], -1.0),
                (&[0, 0, 3], 1.0),
                (&[2, 0, 1], -3.0),
            ],
        ),
        "xy-r4" => Polynomial::from_slice_terms(4, &[(&[1, 1, 0, 0], 1.0)]),
        "x2+y2-2z2" => Polynomial::from_slice_terms(
            3,
            &[(&[2, 0, 0], 1.0), (&[0, 2, 0], 1.0), (&[0, 0, 2], -2.0)],
        ),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown fixture '{other}' (known: {})",
                FIXTURE_IDS.join(", ")
            )))
        }
    }?;
    HarmonicPolynomial::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gram_by_moments(b: &[HarmonicPolynomial]) -> Vec<Vec<f64>> {
        b.iter()
            .map(|p| {
                b.iter()
                    .map(|q| {
                        let prod = p.poly() * q.poly();
                        prod.terms()
                            .iter()
                            .map(|(e, c)| c * sphere_monomial_integral(e.exponents()))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(harmonic_basis(3, 1).unwrap().len(), 3);
        assert_eq!(harmonic_basis(3, 2).unwrap().len(), 5);
        for d in 1..10 {
            assert_eq!(harmonic_basis(2, d).unwrap().len(), 2);
        }
        for n in 2..=5 {
            for d in 0..7 {
                assert_eq!(
                    harmonic_basis(n, d).unwrap().len(),
                    harmonic_space_dimension(n, d)
                );
            }
        }
    }

    #[test]
    fn degree_one_spans_coordinates() {
        let b = harmonic_basis(3, 1).unwrap();
        let mons = monomials(3, 1);
        let rows: Vec<Vec<f64>> = b.iter().map(|p| p.coefficient_vector(&mons)).collect();
        assert_eq!(linalg::rank(&rows, 1e-10), 3);
    }

    #[test]
    fn brute_force_rank_of_quadratic_constraint() {
        // Laplacian on the 6 quadratic monomials of R^3 maps onto constants.
        let mons = monomials(3, 2);
        let row: Vec<f64> = mons
            .iter()
            .map(|m| {
                Polynomial::from_terms(3, [(m.clone(), 1.0)])
                    .unwrap()
                    .laplacian()
                    .coefficient(&MultiIndex::zeros(3))
            })
            .collect();
        assert_eq!(mons.len() - linalg::rank(&[row], 1e-10), 5);
    }

    #[test]
    fn basis_is_orthonormal_and_harmonic() {
        for n in 2..=5 {
            for d in 0..=6 {
                let b = harmonic_basis(n, d).unwrap();
                let g = gram_by_moments(&b);
                for (i, row) in g.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(*v, want, epsilon = 1e-10);
                    }
                }
                for p in &b {
                    assert!(p.homogeneous() && p.degree() as usize == d || p.is_zero());
                    assert!(laplacian_residual(p) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn planar_basis_matches_real_parts() {
        let b = harmonic_basis(2, 3).unwrap();
        // Re (x+iy)^3 / ||.|| lies in the span.
        let re = fixture("re-z3").unwrap();
        let norm2: f64 = re
            .terms()
            .iter()
            .flat_map(|(a, ca)| re.terms().iter().map(move |(b, cb)| (a.add(b), ca * cb)))
            .map(|(e, c)| c * sphere_monomial_integral(e.exponents()))
            .sum();
        let coeffs: Vec<f64> = gram_by_moments(
            &b.iter()
                .cloned()
                .chain(std::iter::once(re.clone()))
                .collect::<Vec<_>>(),
        )[2][..2]
            .to_vec();
        let captured: f64 = coeffs.iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(captured, norm2, epsilon = 1e-10);
    }

    #[test]
    fn evaluate_examples() {
        let xy = fixture("xy").unwrap();
        assert_eq!(xy.evaluate(&[1.0, 2.0]).unwrap(), 2.0);
        let c = fixture("x2-y2").unwrap();
        assert_eq!(c.evaluate(&[3.0, 3.0, 7.0]).unwrap(), 0.0);
        let s = fixture("szulkin").unwrap();
        assert_eq!(s.evaluate(&[1.0, 1.0, 1.0]).unwrap(), -2.0);
        assert!(matches!(
            s.evaluate(&[1.0, 1.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = fixture("xy").unwrap().gradient();
        assert_eq!(g[0], Polynomial::coordinate(2, 1));
        assert_eq!(g[1], Polynomial::coordinate(2, 0));
        let dz = fixture("x2-y2")
            .unwrap()
            .directional_derivative(&[0.0, 0.0, 1.0])
            .unwrap();
        assert!(dz.is_zero());
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(poly_dimension(&fixture("x2-y2").unwrap()).unwrap(), 1);
        assert_eq!(poly_dimension(&fixture("xy").unwrap()).unwrap(), 0);
        assert_eq!(poly_dimension(&fixture("szulkin").unwrap()).unwrap(), 0);
        assert_eq!(poly_dimension(&fixture("zx").unwrap()).unwrap(), 1);
        assert_eq!(poly_dimension(&fixture("xy-r4").unwrap()).unwrap(), 2);
        assert_eq!(poly_dimension(&fixture("x2+y2-2z2").unwrap()).unwrap(), 0);
        assert!(poly_dimension(&Polynomial::zero(3)).is_err());
    }

    #[test]
    fn rejects_non_harmonic() {
        let p = Polynomial::from_slice_terms(2, &[(&[2, 0], 1.0)]).unwrap();
        assert!(matches!(
            HarmonicPolynomial::new(p),
            Err(Error::NotHarmonic { .. })
        ));
        assert!(harmonic_basis(1, 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = fixture("szulkin").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"terms\"") && text.contains("\"exp\""));
        let back: HarmonicPolynomial = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"n":2,"terms":[{"exp":[2,0],"c":1.0}]}"#;
        assert!(serde_json::from_str::<HarmonicPolynomial>(bad).is_err());
    }

    #[test]
    fn translate_matches_shifted_evaluation() {
        let s = fixture("szulkin").unwrap();
        let a = [0.3, -0.7, 1.1];
        let t = s.translate(&a).unwrap();
        for x in [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]] {
            let shifted: Vec<f64> = x.iter().zip(&a).map(|(u, v)| u + v).collect();
            assert_abs_diff_eq!(t.eval(&x), s.eval(&shifted), epsilon = 1e-12);
        }
    }

    #[test]
    fn moments_match_known_values() {
        assert_abs_diff_eq!(
            sphere_monomial_integral(&[0, 0]),
            2.0 * std::f64::consts::PI,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            sphere_monomial_integral(&[2, 0, 0]),
            4.0 * std::f64::consts::PI / 3.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            sphere_area(4),
            2.0 * std::f64::consts::PI.powi(2),
            epsilon = 1e-13
        );
    }

    fn arb_homogeneous() -> impl Strategy<Value = (usize, u32, Vec<f64>)> {
        (2usize..=4, 1u32..=5).prop_flat_map(|(n, d)| {
            let m = monomials(n, d).len();
            (Just(n), Just(d), prop::collection::vec(-3.0f64..3.0, m))
        })
    }

    proptest! {
        #[test]
        fn euler_identity((n, d, c) in arb_homogeneous()) {
            let mons = monomials(n, d);
            let p = Polynomial::from_terms(n, mons.into_iter().zip(c)).unwrap();
            let mut euler = Polynomial::zero(n);
            for (i, g) in p.gradient().iter().enumerate() {
                euler = &euler + &(&Polynomial::coordinate(n, i) * g);
            }
            let diff = &euler - &p.scale(f64::from(d));
            prop_assert!(diff.max_abs_coefficient() <= 1e-12 * (1.0 + p.max_abs_coefficient()));
        }

        #[test]
        fn dimension_is_scale_invariant(idx in 0usize..7, s in 1e-6f64..1e6) {
            let p = fixture(FIXTURE_IDS[idx]).unwrap();
            prop_assert_eq!(poly_dimension(&p).unwrap(), poly_dimension(&p.scale(s)).unwrap());
        }

        #[test]
        fn translate_round_trip((n, d, c) in arb_homogeneous(), shift in prop::collection::vec(-1.0f64..1.0, 4)) {
            let p = Polynomial::from_terms(n, monomials(n, d).into_iter().zip(c)).unwrap();
            let a = &shift[..n];
            let minus: Vec<f64> = a.iter().map(|v| -v).collect();
            let back = p.translate(a).unwrap().translate(&minus).unwrap();
            let diff = &back - &p;
            prop_assert!(diff.max_abs_coefficient() <= 1e-10 * (1.0 + p.max_abs_coefficient()));
        }
    }
}
