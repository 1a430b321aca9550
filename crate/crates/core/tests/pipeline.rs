//! End-to-end paths through several modules.

use fb_core::blowup::{
    blowup_sequence, geometric_scales, zero_set_sample, BlowupOptions, Normalization,
};
use fb_core::field::{Field, PolyField};
use fb_core::functionals::{scan, FunctionalOptions};
use fb_core::jumpsynth::{build_jump_function, HolderWeight, JumpOptions, LogDensity};
use fb_core::poly::{fixture, Polynomial};
use fb_core::sphere::{analyze, sphere_rule, BoundaryTrace, SpectralCoefficients};
use fb_core::strata::{classify_point, strata, Admissibility, StrataRow};
use proptest::prelude::*;

#[test]
fn blowup_then_classify() {
    let v = fixture("szulkin").unwrap();
    let f = PolyField::new(v.poly().clone());
    let q = [0.0; 3];
    let rec = blowup_sequence(
        &f,
        &q,
        2,
        &geometric_scales(0.5, 0.25, 6),
        &Normalization::Power,
        sphere_rule(3, 16).unwrap(),
        &BlowupOptions::default(),
    )
    .unwrap();
    let s = scan(
        &f,
        &q,
        2.0,
        1.0,
        1e-3,
        4,
        &sphere_rule(3, 8).unwrap(),
        &FunctionalOptions::default(),
    )
    .unwrap();
    let class = classify_point(&s, &rec.p_tilde).unwrap();
    assert_eq!((class.d, class.j), (2, 1));
    assert_eq!(class.admissibility, Admissibility::NonAdmissible);

    let rows = vec![
        StrataRow {
            label: "szulkin".into(),
            point: q.to_vec(),
            class: class.clone(),
        },
        StrataRow {
            label: "again".into(),
            point: q.to_vec(),
            class,
        },
    ];
    let st = strata(&rows);
    assert_eq!(st.len(), 1);
    assert_eq!(st[0].members, ["szulkin", "again"]);
}

#[test]
fn spectral_report_round_trips_through_json() {
    let p = fixture("re-z3").unwrap();
    let trace =
        BoundaryTrace::of_polynomial(&p, sphere_rule(2, 12).unwrap(), &[0.0, 0.0], 1.0).unwrap();
    let coeffs = analyze(&trace, 6).unwrap();
    let text = serde_json::to_string(&coeffs).unwrap();
    let back: SpectralCoefficients = serde_json::from_str(&text).unwrap();
    assert_eq!(back.coeffs.len(), coeffs.coeffs.len());
    assert!(back.parseval_defect < 1e-12);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["coeffs"][0]["degree"].is_u64());
}

#[test]
fn jump_model_is_harmonic_inside_the_exclusion_disk() {
    let weight = HolderWeight::new(
        0.5,
        LogDensity::DirectionalPower {
            amplitude: -0.3,
            exponent: 0.5,
            direction: vec![1.0, 0.0],
            center: vec![0.0, 0.0],
        },
    )
    .unwrap();
    let m = build_jump_function(
        &fixture("xy").unwrap(),
        &weight,
        &[0.0, 0.0],
        &JumpOptions::default(),
    )
    .unwrap();
    let delta = m.options().delta;
    let s = scan(
        &m,
        &[0.0, 0.0],
        2.0,
        0.8 * delta,
        1e-3,
        4,
        &sphere_rule(2, 32).unwrap(),
        &FunctionalOptions::default(),
    )
    .unwrap();
    let ns: Vec<f64> = s.valid().map(|r| r.n.unwrap()).collect();
    assert!(ns.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{ns:?}");
    assert!((ns.last().unwrap() - 2.0).abs() < 1e-3);

    // Sampled zero-set points are refined onto Z(v).
    let z = zero_set_sample(&m, 0.8 * delta, 0.02 * delta).unwrap();
    assert!(!z.is_empty());
    for p in &z.points {
        assert!(m.value(p).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Rescaling the argument of a homogeneous p rescales its blowup by r^d.
    #[test]
    fn blowups_of_rescaled_polynomials(s in 0.2f64..3.0) {
        let p = fixture("re-z3").unwrap();
        let scaled = Polynomial::from_terms(
            2,
            p.terms().iter().map(|(e, c)| (e.clone(), c * s.powi(3))),
        )
        .unwrap();
        let rec = blowup_sequence(
            &PolyField::new(scaled),
            &[0.0, 0.0],
            3,
            &geometric_scales(0.4, 0.5, 4),
            &Normalization::Power,
            sphere_rule(2, 18).unwrap(),
            &BlowupOptions::default(),
        )
        .unwrap();
        for (e, c) in p.terms() {
            prop_assert!((rec.p_tilde.coefficient(e) - c * s.powi(3)).abs() < 1e-9 * s.powi(3));
        }
    }
}
