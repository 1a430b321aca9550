//! Scalar fields on R^n with value and (optional) gradient oracles.

use std::sync::Arc;

use crate::poly::Polynomial;

pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Analytic gradient, or `None` if the field has none.
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;

    /// Degree if the field is a polynomial.
    fn poly_degree(&self) -> Option<u32> {
        None
    }

    /// Value and gradient together; fields override this when both share work.
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        (self.value(x), self.gradient(x))
    }
}

/// Flattened polynomial evaluating value and gradient from one power table.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    n: usize,
    deg: usize,
    exps: Vec<u32>,
    coeffs: Vec<f64>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let n = p.n();
        let mut exps = Vec::with_capacity(n * p.terms().len());
        let mut coeffs = Vec::with_capacity(p.terms().len());
        for (e, c) in p.terms() {
            exps.extend_from_slice(e.exponents());
            coeffs.push(*c);
        }
        CompiledPoly {
            n,
            deg: p.degree() as usize,
            exps,
            coeffs,
        }
    }

    fn powers(&self, x: &[f64]) -> Vec<f64> {
        let w = self.deg + 1;
        let mut pw = vec![1.0; self.n * w];
        for (i, &xi) in x.iter().enumerate().take(self.n) {
            for k in 1..w {
                pw[i * w + k] = pw[i * w + k - 1] * xi;
            }
        }
        pw
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let w = self.deg + 1;
        let pw = self.powers(x);
        let mut s = 0.0;
        for (t, c) in self.coeffs.iter().enumerate() {
            let e = &self.exps[t * self.n..(t + 1) * self.n];
            let mut m = *c;
            for (i, &k) in e.iter().enumerate() {
                m *= pw[i * w + k as usize];
            }
            s += m;
        }
        s
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let w = self.deg + 1;
        let pw = self.powers(x);
        let mut v = 0.0;
        let mut g = vec![0.0; self.n];
        for (t, c) in self.coeffs.iter().enumerate() {
            let e = &self.exps[t * self.n..(t + 1) * self.n];
            let mut m = *c;
            for (i, &k) in e.iter().enumerate() {
                m *= pw[i * w + k as usize];
            }
            v += m;
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let mut d = *c * f64::from(k);
                for (j, &kj) in e.iter().enumerate() {
                    let p = if i == j { kj - 1 } else { kj };
                    d *= pw[j * w + p as usize];
                }
                g[i] += d;
            }
        }
        (v, g)
    }
}

/// Polynomial as a field with analytic gradient.
#[derive(Clone, Debug)]
pub struct PolyField {
    poly: Polynomial,
    compiled: CompiledPoly,
}

impl PolyField {
    pub fn new(poly: Polynomial) -> Self {
        let compiled = CompiledPoly::new(&poly);
        PolyField { poly, compiled }
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }
}

impl Field for PolyField {
    fn dim(&self) -> usize {
        self.poly.n()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.compiled.value(x)
    }
    fn poly_degree(&self) -> Option<u32> {
        Some(self.poly.degree())
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.compiled.value_and_gradient(x).1)
    }
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let (v, g) = self.compiled.value_and_gradient(x);
        (v, Some(g))
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Field from closures; without a gradient closure callers must fall back
/// to finite differences.
#[derive(Clone)]
pub struct FnField {
    n: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
}

impl FnField {
    pub fn new(n: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnField {
            n,
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }
}

impl Field for FnField {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

/// Central-difference gradient with step `h`.
pub fn fd_gradient(f: &dyn Field, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f.value(&y);
            y[i] = x[i] - h;
            let fm = f.value(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
