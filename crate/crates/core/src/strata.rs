//! Stratification of zero-set points by frequency and polynomial dimension,
//! and Whitney compatibility of blowup jets.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::{blowup_sequence, BlowupOptions, BlowupRecord, Normalization};
use crate::error::{Error, Result};
use crate::field::{dist, Field};
use crate::functionals::{FunctionalScan, RateFit};
use crate::linalg::linear_fit;
use crate::poly::{monomials_up_to, poly_dimension, MultiIndex, Polynomial};
use crate::sphere::SphereRule;

/// Pointwise polynomial datum P_a with deg P_a ≤ k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyJet {
    pub point: Vec<f64>,
    pub poly: Polynomial,
    pub k: u32,
}

impl WhitneyJet {
    pub fn new(point: Vec<f64>, poly: Polynomial, k: u32) -> Result<Self> {
        if poly.n() != point.len() {
            return Err(Error::DimensionMismatch {
                expected: point.len(),
                got: poly.n(),
            });
        }
        if !poly.is_zero() && poly.degree() > k {
            return Err(Error::InvalidArgument(format!(
                "jet of degree {} exceeds k = {k}",
                poly.degree()
            )));
        }
        if poly.laplacian().max_abs_coefficient() > 1e-9 * poly.max_abs_coefficient().max(1.0) {
            return Err(Error::InvalidArgument(
                "jet polynomial is not harmonic".into(),
            ));
        }
        Ok(WhitneyJet { point, poly, k })
    }

    /// x ↦ p̃^{(a)}(x − a) from a blowup record at a.
    pub fn from_record(rec: &BlowupRecord, k: u32) -> Result<Self> {
        let shift: Vec<f64> = rec.q.iter().map(|v| -v).collect();
        WhitneyJet::new(rec.q.clone(), rec.p_tilde.translate(&shift)?, k)
    }
}

/// Blowup of f at `a` with degree d, turned into a jet of order k.
#[allow(clippy::too_many_arguments)]
pub fn blowup_jet(
    f: &dyn Field,
    a: &[f64],
    d: u32,
    k: u32,
    scales: &[f64],
    rule: Arc<SphereRule>,
    opts: &BlowupOptions,
) -> Result<WhitneyJet> {
    let rec = blowup_sequence(f, a, d, scales, &Normalization::Power, rule, opts)?;
    WhitneyJet::from_record(&rec, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    Admissible,
    /// d ≥ 2 and j > n − 3.
    NonAdmissible,
    /// The dimension bound is not checked in the plane or at d < 2.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub d: u32,
    pub j: usize,
    /// Frequency at the finest valid radius.
    pub frequency: f64,
    pub residual: f64,
    pub admissibility: Admissibility,
}

/// d(Q) bound check on a (d, j) label in R^n.
pub fn admissibility(n: usize, d: u32, j: usize) -> Admissibility {
    if n < 3 || d < 2 {
        Admissibility::NotApplicable
    } else if j > n - 3 {
        Admissibility::NonAdmissible
    } else {
        Admissibility::Admissible
    }
}

/// (d, j) from a frequency scan at the point and its blowup polynomial.
pub fn classify_point(scan: &FunctionalScan, jet: &Polynomial) -> Result<Classification> {
    let last = scan
        .valid()
        .last()
        .ok_or_else(|| Error::InvalidArgument("scan has no valid radius".into()))?;
    if last.r > 1e-2 {
        return Err(Error::InvalidArgument(format!(
            "scan must reach r ≤ 1e-2 (finest valid radius {})",
            last.r
        )));
    }
    if jet.n() != scan.metadata.n {
        return Err(Error::DimensionMismatch {
            expected: scan.metadata.n,
            got: jet.n(),
        });
    }
    let frequency = last.n.expect("valid row");
    let d = frequency.round();
    let residual = (frequency - d).abs();
    if residual > 0.2 || d < 0.0 {
        return Err(Error::Unclassifiable {
            frequency,
            residual,
        });
    }
    let d = d as u32;
    let j = poly_dimension(jet)?;
    Ok(Classification {
        d,
        j,
        frequency,
        residual,
        admissibility: admissibility(jet.n(), d, j),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataRow {
    pub label: String,
    pub point: Vec<f64>,
    pub class: Classification,
}

/// Γ_d^j: points sharing the label (d, j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub d: u32,
    pub j: usize,
    pub members: Vec<String>,
}

/// Groups classified points by (d, j).
pub fn strata(rows: &[StrataRow]) -> Vec<Stratum> {
    let mut map: BTreeMap<(u32, usize), Vec<String>> = BTreeMap::new();
    for r in rows {
        map.entry((r.class.d, r.class.j))
            .or_default()
            .push(r.label.clone());
    }
    map.into_iter()
        .map(|((d, j), members)| Stratum { d, j, members })
        .collect()
}

/// CSV with columns label, point, d, j, frequency, residual, admissibility.
pub fn write_strata_csv<W: Write>(rows: &[StrataRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "point",
        "d",
        "j",
        "frequency",
        "residual",
        "admissibility",
    ])?;
    for r in rows {
        let point: Vec<String> = r.point.iter().map(|v| v.to_string()).collect();
        let adm = match r.class.admissibility {
            Admissibility::Admissible => "admissible",
            Admissibility::NonAdmissible => "non_admissible",
            Admissibility::NotApplicable => "not_applicable",
        };
        w.write_record([
            r.label.clone(),
            point.join(" "),
            r.class.d.to_string(),
            r.class.j.to_string(),
            r.class.frequency.to_string(),
            r.class.residual.to_string(),
            adm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// sup over pairs a ≠ b with |a − b| ≤ r of
/// |D^α P_b(b) − D^α P_a(b)| / |a − b|^{k−|α|}. Coincident points with
/// differing derivatives give +∞; fewer than two jets give 0.
pub fn rho_alpha(jets: &[WhitneyJet], alpha: &MultiIndex, k: u32, r: f64) -> Result<f64> {
    if alpha.degree() > k {
        return Err(Error::InvalidArgument(format!(
            "|α| = {} exceeds k = {k}",
            alpha.degree()
        )));
    }
    if let Some(j) = jets.iter().find(|j| j.point.len() != alpha.dim()) {
        return Err(Error::DimensionMismatch {
            expected: alpha.dim(),
            got: j.point.len(),
        });
    }
    let derivs: Vec<Polynomial> = jets.iter().map(|j| j.poly.derivative(alpha)).collect();
    let power = (k - alpha.degree()) as i32;
    let sup = (0..jets.len())
        .into_par_iter()
        .map(|a| {
            let mut best: f64 = 0.0;
            for b in 0..jets.len() {
                if a == b {
                    continue;
                }
                let pb = &jets[b].point;
                let gap = dist(&jets[a].point, pb);
                if gap > r {
                    continue;
                }
                let num = (derivs[b].eval(pb) - derivs[a].eval(pb)).abs();
                let q = if gap == 0.0 {
                    if num == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    num / gap.powi(power)
                };
                best = best.max(q);
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyRow {
    pub alpha: Vec<u32>,
    /// (r, ρ_α(r)) on the grid.
    pub rho: Vec<(f64, f64)>,
    pub fit: RateFit,
    /// max over the grid of ρ_α(r)/r^β.
    pub constant: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyReport {
    pub k: u32,
    pub beta: f64,
    pub jets: usize,
    pub rows: Vec<WhitneyRow>,
    pub pass: bool,
}

/// Fits ρ_α(r) ≈ C r^e for every |α| ≤ k; a row passes when e ≥ β − 0.05
/// or ρ_α stays below 1e-10.
pub fn whitney_report(
    jets: &[WhitneyJet],
    k: u32,
    beta: f64,
    r_grid: &[f64],
) -> Result<WhitneyReport> {
    let n = jets
        .first()
        .map(|j| j.point.len())
        .ok_or_else(|| Error::InvalidArgument("no jets".into()))?;
    if r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let mut rows = Vec::new();
    for alpha in monomials_up_to(n, k) {
        let rho: Vec<(f64, f64)> = r_grid
            .iter()
            .map(|&r| Ok((r, rho_alpha(jets, &alpha, k, r)?)))
            .collect::<Result<_>>()?;
        let negligible = rho.iter().all(|(_, v)| *v < 1e-10);
        let finite = rho.iter().all(|(_, v)| v.is_finite());
        let (x, y): (Vec<f64>, Vec<f64>) = rho
            .iter()
            .filter(|(_, v)| *v > 0.0 && v.is_finite())
            .map(|(r, v)| (r.ln(), v.ln()))
            .unzip();
        let fit = if x.len() >= 2 {
            let (slope, intercept, r2) = linear_fit(&x, &y);
            RateFit::Fit {
                amplitude: intercept.exp(),
                exponent: slope,
                r_squared: r2,
                points: x.len(),
            }
        } else {
            RateFit::IdenticallyZero
        };
        let constant = rho
            .iter()
            .map(|(r, v)| v / r.powf(beta))
            .fold(0.0, f64::max);
        let pass = negligible || (finite && fit.exponent().is_some_and(|e| e >= beta - 0.05));
        rows.push(WhitneyRow {
            alpha: alpha.exponents().to_vec(),
            rho,
            fit,
            constant,
            pass,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(WhitneyReport {
        k,
        beta,
        jets: jets.len(),
        rows,
        pass,
    })
}

/// ρ^d/m ≤ sup_{∂B_ρ(Q)} |f| ≤ m ρ^d on the grid, with the sup taken over
/// the rule's nodes.
pub fn k_dm_membership(
    f: &dyn Field,
    q: &[f64],
    d: u32,
    m: f64,
    rho_grid: &[f64],
    rule: &SphereRule,
) -> Result<bool> {
    if rho_grid.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::InvalidArgument("radii must lie in (0, 1]".into()));
    }
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("m = {m} must be positive")));
    }
    let mut y = vec![0.0; q.len()];
    for &rho in rho_grid {
        let mut sup: f64 = 0.0;
        for x in rule.nodes() {
            for i in 0..q.len() {
                y[i] = q[i] + rho * x[i];
            }
            sup = sup.max(f.value(&y).abs());
        }
        let scale = rho.powi(d as i32);
        if sup < scale / m || sup > m * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Zeros of θ ↦ f(t cos θ, t sin θ) nearest to θ₀, one per radius t.
pub fn anchors_on_branch(f: &dyn Field, radii: &[f64], theta0: f64) -> Result<Vec<Vec<f64>>> {
    if f.dim() != 2 {
        return Err(Error::Unsupported(
            "branch anchors are located in the plane".into(),
        ));
    }
    let step = std::f64::consts::PI / 256.0;
    radii
        .iter()
        .map(|&t| {
            let g = |th: f64| f.value(&[t * th.cos(), t * th.sin()]);
            for i in 0..256 {
                for (a, b) in [
                    (theta0 + i as f64 * step, theta0 + (i + 1) as f64 * step),
                    (theta0 - (i + 1) as f64 * step, theta0 - i as f64 * step),
                ] {
                    let (ga, gb) = (g(a), g(b));
                    if ga == 0.0 {
                        return Ok(vec![t * a.cos(), t * a.sin()]);
                    }
                    if ga * gb < 0.0 {
                        let (mut lo, mut hi) = (a, b);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if (g(mid) > 0.0) == (ga > 0.0) {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        let th = 0.5 * (lo + hi);
                        return Ok(vec![t * th.cos(), t * th.sin()]);
                    }
                }
            }
            Err(Error::VerificationFailed(format!(
                "no zero on the circle of radius {t}"
            )))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blowup::geometric_scales;
    use crate::field::PolyField;
    use crate::functionals::{scan, FunctionalOptions};
    use crate::poly::{fixture, FIXTURE_IDS};
    use crate::sphere::sphere_rule;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// n − rank of ∇p sampled at random points.
    fn sampled_dimension(p: &Polynomial) -> usize {
        let n = p.n();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grads = p.gradient();
        let rows = 4 * n + 8;
        let m = DMatrix::from_fn(rows, n, |_, _| 0.0);
        let mut m = m;
        for i in 0..rows {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for (j, g) in grads.iter().enumerate() {
                m[(i, j)] = g.eval(&x);
            }
        }
        n - m.svd(false, false).rank(1e-9)
    }

    fn classify_fixture(id: &str) -> Classification {
        let hp = fixture(id).unwrap();
        let n = hp.n();
        let f = PolyField::new(hp.poly().clone());
        let rule = sphere_rule(n, 16).unwrap();
        let s = scan(
            &f,
            &vec![0.0; n],
            2.0,
            0.5,
            1e-3,
            3,
            &rule,
            &FunctionalOptions::default(),
        )
        .unwrap();
        let jet = hp.homogeneous_part(hp.min_degree());
        classify_point(&s, &jet).unwrap()
    }

    #[test]
    fn fixture_classes() {
        for id in FIXTURE_IDS {
            let hp = fixture(id).unwrap();
            let c = classify_fixture(id);
            let jet = hp.homogeneous_part(hp.min_degree());
            assert_eq!(c.d, hp.min_degree(), "{id}");
            assert_eq!(c.j, sampled_dimension(&jet), "{id}");
            let flagged = c.admissibility == Admissibility::NonAdmissible;
            assert_eq!(
                flagged,
                ["x2-y2", "zx", "szulkin", "xy-r4"].contains(id),
                "{id}"
            );
        }
        assert_eq!(
            (classify_fixture("x2-y2").d, classify_fixture("x2-y2").j),
            (2, 1)
        );
        assert_eq!(classify_fixture("xy-r4").j, 2);
    }

    #[test]
    fn classification_rejects_coarse_scans() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let rule = sphere_rule(2, 16).unwrap();
        let s = scan(
            &f,
            &[0.0, 0.0],
            2.0,
            1.0,
            0.1,
            3,
            &rule,
            &FunctionalOptions::default(),
        )
        .unwrap();
        assert!(classify_point(&s, f.poly()).is_err());
    }

    #[test]
    fn strata_grouping() {
        let rows: Vec<StrataRow> = ["xy", "zx", "x2-y2", "re-z3"]
            .iter()
            .map(|id| StrataRow {
                label: id.to_string(),
                point: vec![0.0],
                class: classify_fixture(id),
            })
            .collect();
        let s = strata(&rows);
        let total: usize = s.iter().map(|s| s.members.len()).sum();
        assert_eq!(total, rows.len());
        assert_eq!(
            s.iter().find(|s| (s.d, s.j) == (2, 1)).unwrap().members,
            vec!["zx", "x2-y2"]
        );
        let mut out = Vec::new();
        write_strata_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 5);
    }

    fn jet(point: Vec<f64>, terms: &[(&[u32], f64)], k: u32) -> WhitneyJet {
        WhitneyJet::new(
            point.clone(),
            Polynomial::from_slice_terms(point.len(), terms).unwrap(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn rho_examples() {
        let p: &[(&[u32], f64)] = &[(&[2, 0], 1.0), (&[0, 2], -1.0)];
        let same: Vec<WhitneyJet> = (0..5)
            .map(|i| jet(vec![i as f64 * 0.1, 0.3], p, 2))
            .collect();
        for a in monomials_up_to(2, 2) {
            assert_eq!(rho_alpha(&same, &a, 2, 10.0).unwrap(), 0.0);
        }
        assert_eq!(
            rho_alpha(&same[..1], &MultiIndex::zeros(2), 2, 10.0).unwrap(),
            0.0
        );
        let eps = 1e-3;
        let pair = vec![
            jet(vec![0.0, 0.0], p, 2),
            jet(
                vec![1.0, 0.0],
                &[(&[2, 0], 1.0), (&[0, 2], -1.0), (&[1, 1], eps)],
                2,
            ),
        ];
        let v = rho_alpha(&pair, &MultiIndex::new(vec![1, 1]), 2, 1.0).unwrap();
        assert_abs_diff_eq!(v, eps, epsilon = 1e-12);
        assert_eq!(
            rho_alpha(&pair, &MultiIndex::new(vec![1, 1]), 2, 0.5).unwrap(),
            0.0
        );
        let clash = vec![
            jet(vec![0.0, 0.0], p, 2),
            jet(vec![0.0, 0.0], &[(&[1, 1], 1.0)], 2),
        ];
        assert_eq!(
            rho_alpha(&clash, &MultiIndex::new(vec![1, 1]), 2, 1.0).unwrap(),
            f64::INFINITY
        );
        assert!(rho_alpha(&pair, &MultiIndex::new(vec![3, 0]), 2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn rho_symmetry_and_homogeneity(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 12),
            s in 0.1f64..10.0,
        ) {
            let jets: Vec<WhitneyJet> = (0..4)
                .map(|i| {
                    let c = &coeffs[3 * i..3 * i + 3];
                    jet(vec![0.2 * i as f64, 0.1 * (i * i) as f64], &[(&[1, 0], c[0]), (&[0, 1], c[1]), (&[1, 1], c[2])], 2)
                })
                .collect();
            let mut rev = jets.clone();
            rev.reverse();
            let scaled: Vec<WhitneyJet> = jets
                .iter()
                .map(|j| WhitneyJet { poly: j.poly.scale(s), ..j.clone() })
                .collect();
            for a in monomials_up_to(2, 2) {
                let v = rho_alpha(&jets, &a, 2, 5.0).unwrap();
                prop_assert_eq!(v, rho_alpha(&rev, &a, 2, 5.0).unwrap());
                let w = rho_alpha(&scaled, &a, 2, 5.0).unwrap();
                prop_assert!((w - s * v).abs() <= 1e-12 * (1.0 + s * v));
            }
        }
    }

    #[test]
    fn whitney_on_regular_points_of_xy() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let rule = sphere_rule(2, 24).unwrap();
        let scales = geometric_scales(0.05, 0.25, 5);
        let jets: Vec<WhitneyJet> = [0.2, 0.3, 0.45, 0.6, 0.8]
            .iter()
            .map(|&t| {
                blowup_jet(
                    &f,
                    &[t, 0.0],
                    1,
                    1,
                    &scales,
                    rule.clone(),
                    &BlowupOptions::default(),
                )
                .unwrap()
            })
            .collect();
        let grid = [0.1, 0.15, 0.2, 0.3, 0.45, 0.6];
        let rep = whitney_report(&jets, 1, 0.2, &grid).unwrap();
        assert!(rep.pass);
        // ρ_{(0,1)}(r) is the largest anchor gap within r, ρ_{(1,0)} ≡ 0.
        let row = rep.rows.iter().find(|r| r.alpha == vec![0, 1]).unwrap();
        for (r, v) in &row.rho {
            let expected = [0.2, 0.3, 0.45, 0.6, 0.8]
                .iter()
                .flat_map(|a| [0.2f64, 0.3, 0.45, 0.6, 0.8].map(|b| (a - b).abs()))
                .filter(|g| *g <= *r)
                .fold(0.0, f64::max);
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-8);
        }
        assert!((row.fit.exponent().unwrap() - 1.0).abs() < 0.1);
        assert!(rep
            .rows
            .iter()
            .find(|r| r.alpha == vec![1, 0])
            .unwrap()
            .rho
            .iter()
            .all(|(_, v)| *v < 1e-10));
    }

    #[test]
    fn identical_jets_pass() {
        let p: &[(&[u32], f64)] = &[(&[2, 0, 0], 1.0), (&[0, 2, 0], -1.0)];
        let jets: Vec<WhitneyJet> = (0..4)
            .map(|i| jet(vec![0.0, 0.0, 0.1 * i as f64], p, 2))
            .collect();
        let rep = whitney_report(&jets, 2, 0.2, &[0.1, 0.2, 0.3]).unwrap();
        assert!(rep.pass && rep.rows.iter().all(|r| r.constant == 0.0));
    }

    #[test]
    fn k_dm() {
        let hp = fixture("xy").unwrap();
        let f = PolyField::new(hp.poly().clone());
        let rule = sphere_rule(2, 32).unwrap();
        let grid: Vec<f64> = geometric_scales(1.0, 0.5, 10);
        assert!(k_dm_membership(&f, &[0.0, 0.0], 2, 10.0, &grid, &rule).unwrap());
        assert!(!k_dm_membership(&f, &[0.0, 0.0], 2, 0.4, &grid, &rule).unwrap());
        let q = Polynomial::from_slice_terms(2, &[(&[3, 0], 0.05), (&[1, 2], -0.15)]).unwrap();
        let g = PolyField::new(hp.poly() + &q);
        assert!(k_dm_membership(&g, &[0.0, 0.0], 2, 4.0, &grid, &rule).unwrap());
    }

    #[test]
    fn branch_anchors() {
        let f = PolyField::new(fixture("xy").unwrap().into_poly());
        let a = anchors_on_branch(&f, &[0.1, 0.2], 0.3).unwrap();
        assert_abs_diff_eq!(a[0][1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[1][0], 0.2, epsilon = 1e-14);
    }
}
