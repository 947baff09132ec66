mod common;

use proptest::prelude::*;

use theta_core::contiguous::{ContiguousRelation, RelationSystem};
use theta_core::linalg::rat;
use theta_core::model::Identity;
use theta_core::parser::{parse_candidates, parse_identity, parse_relations};
use theta_core::prover::{discover, explain, verify, Certificate, Mode, Status};
use theta_core::qseries::{expand_identity_residual, series_denominator};

#[test]
fn bailey_transcript_lists_the_four_ratios() {
    let cert = verify(&common::identity("bailey"), common::shifts("bailey").as_deref(), 100);
    assert_eq!(cert.status, Status::Proved);
    assert_eq!(cert.checks.len(), 4);
    let text = explain(&cert);
    for ratio in ["b^2*d*e/(a^2*q^2)", "f/(b*d*q)", "1/(d*e*q)", "b/(d*f*q)"] {
        assert!(text.contains(ratio), "missing {ratio} in\n{text}");
    }
    assert!(text.ends_with("Status: proved\n"));
}

#[test]
fn bailey_with_third_sign_flipped_fails_at_second_point() {
    let mut id = common::identity("bailey");
    id.terms[2].coeff = -id.terms[2].coeff.clone();
    let cert = verify(&id, common::shifts("bailey").as_deref(), 100);
    assert!(matches!(cert.status, Status::Failed(_)));
    let bad = cert.failing_check().unwrap();
    assert_eq!(bad.beta, vec![1, -1, 0, 0, 0]);
    assert_eq!(bad.residual.to_string(), "-2*q/(q;q)^4");
    let text = explain(&cert);
    let tail = text.lines().rev().take(2).collect::<Vec<_>>();
    assert!(tail[1].contains("-2*q/(q;q)^4") && tail[1].contains("NONZERO"), "{text}");
    assert!(!text.contains("beta = (1,-1,1,0,0)"), "transcript continues past the failure");
}

#[test]
fn quintuple_certificate_is_series_only() {
    let cert = verify(&common::identity("quintuple"), None, 60);
    assert_eq!(cert.mode, Mode::Series(60));
    assert_eq!(cert.status, Status::VerifiedToOrder(60));
    let json = cert.to_json();
    assert!(json.contains("\"mode\": \"Series(60)\""));
    assert!(json.contains("\"status\": \"VerifiedToOrder\""));
    let text = explain(&cert);
    assert!(text.contains("verified to order 60"));
    assert!(!text.to_lowercase().contains("proved"));
}

#[test]
fn golden_certificates_round_trip_through_json() {
    for name in common::GOLDEN {
        let cert = verify(&common::identity(name), common::shifts(name).as_deref(), 100);
        let json = cert.to_json();
        let back = Certificate::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json, "{name}");
        assert_eq!(back.checks, cert.checks, "{name}");
        assert_eq!(back.status, cert.status, "{name}");
    }
}

#[test]
fn json_has_no_bare_numbers() {
    let cert = verify(&common::identity("exriemann"), common::shifts("exriemann").as_deref(), 100);
    let v: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
    fn walk(v: &serde_json::Value) {
        match v {
            serde_json::Value::Number(n) => panic!("bare number {n}"),
            serde_json::Value::Array(a) => a.iter().for_each(walk),
            serde_json::Value::Object(o) => o.values().for_each(walk),
            _ => {}
        }
    }
    walk(&v);
}

fn conabc() -> (Vec<String>, RelationSystem) {
    let (vars, specs) = parse_relations(&common::read("conabc.rel")).unwrap();
    let rels = specs
        .iter()
        .map(|s| ContiguousRelation::from_ratio(s.alpha.clone(), &s.ratio))
        .collect();
    (vars, RelationSystem::new(rels).unwrap())
}

#[test]
fn didenabc_pool_has_three_proved_relations() {
    let (vars, sys) = conabc();
    let (_, cands) = parse_candidates(&common::read("didenabc.cand")).unwrap();
    let res = discover(&vars, &sys, &cands, 60).unwrap();
    let vectors: Vec<Vec<i64>> = res
        .dependencies
        .iter()
        .map(|d| d.coefficients.iter().map(|c| c.to_integer().try_into().unwrap()).collect())
        .collect();
    assert_eq!(
        vectors,
        vec![vec![1, 1, 0, -2, 0, 0], vec![1, 0, 1, 0, -2, 0], vec![0, 1, 1, 0, 0, -2]]
    );
    for dep in &res.dependencies {
        assert_eq!(dep.certificate.status, Status::Proved);
        // Independent confirmation by direct expansion.
        let id = parse_identity(&dep.certificate.identity).unwrap();
        let d = series_denominator(&id, &[]);
        assert!(expand_identity_residual(&id, 25, d).unwrap().is_empty());
    }
}

#[test]
fn rejected_candidates_are_reported() {
    let (vars, sys) = conabc();
    let (_, cands) = parse_candidates("vars a b c\n[a;q]*[b*c,b*q/c;q^2]\n[a,b,c;q]").unwrap();
    let res = discover(&vars, &sys, &cands, 20).unwrap();
    assert_eq!(res.kept, vec![0]);
    assert_eq!(res.rejected.len(), 1);
    assert_eq!(res.rejected[0].candidate, 1);
    assert!(res.dependencies.is_empty());
}

#[derive(Debug, Clone)]
enum Edit {
    Sign(usize),
    Delta(usize, usize),
    QExp(usize, i64),
    AExp(usize, usize, i64),
}

fn apply(id: &Identity, edit: &Edit) -> Identity {
    let mut m = id.clone();
    let len = m.terms.len();
    let k = |i: usize| i % len;
    match *edit {
        Edit::Sign(i) => {
            let t = &mut m.terms[k(i)];
            t.coeff = -t.coeff.clone();
        }
        Edit::Delta(i, j) => {
            let t = &mut m.terms[k(i)];
            let n = t.factors.len();
            t.factors[j % n].delta ^= 1;
        }
        Edit::QExp(i, d) => m.terms[k(i)].mono.qexp += rat(d),
        Edit::AExp(i, j, d) => {
            let t = &mut m.terms[k(i)];
            let n = t.mono.aexp.len();
            t.mono.aexp[j % n] += d;
        }
    }
    m
}

fn edit() -> impl Strategy<Value = Edit> {
    let step = prop_oneof![Just(1i64), Just(-1i64)];
    prop_oneof![
        (0usize..8).prop_map(Edit::Sign),
        (0usize..8, 0usize..8).prop_map(|(i, j)| Edit::Delta(i, j)),
        (0usize..8, step.clone()).prop_map(|(i, d)| Edit::QExp(i, d)),
        (0usize..8, 0usize..8, step).prop_map(|(i, j, d)| Edit::AExp(i, j, d)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_edits_never_give_a_false_proof(which in 0usize..8, e in edit()) {
        let name = common::GOLDEN[which];
        let mutant = apply(&common::identity(name), &e);
        let cert = verify(&mutant, common::shifts(name).as_deref(), 100);
        if cert.status == Status::Proved {
            let d = series_denominator(&mutant, &[]);
            prop_assert!(expand_identity_residual(&mutant, 15, d).unwrap().is_empty(), "{name} {e:?}");
        }
    }

    #[test]
    fn exit_code_depends_only_on_status(which in 0usize..8, e in edit()) {
        let name = common::GOLDEN[which];
        let cert = verify(&apply(&common::identity(name), &e), common::shifts(name).as_deref(), 50);
        let expected = match cert.status.label() {
            "Proved" => 0,
            "VerifiedToOrder" => 2,
            _ => 1,
        };
        prop_assert_eq!(cert.status.exit_code(), expected);
        let back = Certificate::from_json(&cert.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), cert.to_json());
    }
}
