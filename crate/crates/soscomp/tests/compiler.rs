use polyalg::{monomial_basis, ParityFilter, Polynomial, VarSet};
use soscomp::{
    solve, DecisionKind, DecisionRole, GeneratorSpec, MultiplierSpec, PolyExpr, ScalarAffine,
    Sense, SolveOutcome, SolverConfig, SosProgram,
};
use std::sync::Arc;

fn one_var() -> Arc<VarSet> {
    VarSet::new(vec!["x"])
}

fn fixed(p: Polynomial) -> PolyExpr {
    PolyExpr::from_poly(p)
}

#[test]
fn declare_counts_match_basis_choices() {
    let vs = VarSet::new(vec!["x1", "x2", "x3"]);
    let mut prog = SosProgram::new(vs);
    // deg-4 free polynomial in 3 vars: 35 coefficients (constant included)
    let v = prog
        .declare_poly_deg("V", 4, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    assert_eq!(prog.decision(v).num_vars(), 35);
    // deg-2 SOS: Gram over [1, x1, x2, x3]
    let s = prog
        .declare_poly_deg("s", 2, DecisionKind::Sos, DecisionRole::Structural)
        .unwrap();
    assert_eq!(prog.decision(s).basis.len(), 4);
    assert_eq!(prog.decision(s).num_vars(), 10);
    // deg-0 SOS: a single scalar >= 0
    let g0 = prog
        .declare_poly_deg("g0", 0, DecisionKind::Sos, DecisionRole::Multiplier)
        .unwrap();
    assert_eq!(prog.decision(g0).num_vars(), 1);
}

#[test]
fn duplicate_name_rejected() {
    let mut prog = SosProgram::new(one_var());
    prog.declare_poly_deg("p", 2, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    assert!(prog
        .declare_poly_deg("p", 2, DecisionKind::Free, DecisionRole::Structural)
        .is_err());
}

#[test]
fn trivial_sos_feasibility() {
    // x^2 + 1 is SOS
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(vs, &[(&[2], 1.0), (&[0], 1.0)]));
    prog.add_membership("t", target, vec![], None).unwrap();
    let cp = prog.lower().unwrap();
    let out = solve(&cp, &SolverConfig::default()).unwrap();
    assert!(out.feasible().is_some());
}

#[test]
fn membership_with_generator_feasible() {
    // -x^2 + 1 ∈ M(1 - x^2): gamma_1 = 1, gamma_0 = 0
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(
        vs.clone(),
        &[(&[2], -1.0), (&[0], 1.0)],
    ));
    let gen = fixed(Polynomial::from_raw(vs, &[(&[2], -1.0), (&[0], 1.0)]));
    prog.add_membership(
        "m",
        target,
        vec![GeneratorSpec {
            generator: gen,
            multiplier: MultiplierSpec::NewSos {
                name: "g1".into(),
                deg: 0,
            },
        }],
        None,
    )
    .unwrap();
    let cp = prog.lower().unwrap();
    let out = solve(&cp, &SolverConfig::default()).unwrap();
    let sol = out.expect_feasible("m").unwrap();
    let (g1, gram) = prog.recover_by_name(&sol, "g1").unwrap();
    assert!(gram.is_some());
    // gamma_1 must be about 1 (only way to cancel the -x^2 term)
    assert!((g1.constant_term() - 1.0).abs() < 1e-5, "g1 = {g1:?}");
}

#[test]
fn odd_polynomial_not_in_empty_module() {
    // x ∈ M() is infeasible: an odd polynomial is not SOS
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(vs, &[(&[1], 1.0)]));
    prog.add_membership("odd", target, vec![], None).unwrap();
    let cp = prog.lower().unwrap();
    let out = solve(&cp, &SolverConfig::default()).unwrap();
    assert!(matches!(out, SolveOutcome::Infeasible(_)));
}

#[test]
fn bilinear_product_is_hard_error() {
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let a = prog
        .declare_poly_deg("a", 2, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    let b = prog
        .declare_poly_deg("b", 2, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    let ea = prog.expr(a);
    let eb = prog.expr(b);
    let err = ea.mul(&eb).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains('a') && msg.contains('b'), "message: {msg}");
}

#[test]
fn generator_with_decisions_requires_fixed_multiplier() {
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let a = prog
        .declare_poly_deg("a", 2, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    let ea = prog.expr(a);
    let err = prog
        .add_membership(
            "m",
            fixed(Polynomial::constant(vs, 1.0)),
            vec![GeneratorSpec {
                generator: ea,
                multiplier: MultiplierSpec::NewSos {
                    name: "g".into(),
                    deg: 2,
                },
            }],
            None,
        )
        .unwrap_err();
    assert!(format!("{err}").contains("fixed"));
}

#[test]
fn lowering_emits_expected_blocks() {
    // one SOS decision over a basis of size m -> one PSD block of size m
    let vs = VarSet::new(vec!["x", "y"]);
    let mut prog = SosProgram::new(vs.clone());
    prog.declare_poly_deg("q", 4, DecisionKind::Sos, DecisionRole::Structural)
        .unwrap();
    let cp = prog.lower().unwrap();
    assert_eq!(cp.psd_blocks.len(), 1);
    assert_eq!(cp.psd_blocks[0].dim, 6); // monomials of degree <= 2 in 2 vars

    // a membership with k generators -> k multiplier blocks + 1 residual
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(
        vs.clone(),
        &[(&[2, 0], 1.0), (&[0, 2], 1.0)],
    ));
    let g1 = fixed(Polynomial::from_raw(vs.clone(), &[(&[2, 0], -1.0), (&[0, 0], 1.0)]));
    let g2 = fixed(Polynomial::from_raw(vs, &[(&[0, 2], -1.0), (&[0, 0], 1.0)]));
    prog.add_membership(
        "m",
        target,
        vec![
            GeneratorSpec {
                generator: g1,
                multiplier: MultiplierSpec::NewSos {
                    name: "s1".into(),
                    deg: 2,
                },
            },
            GeneratorSpec {
                generator: g2,
                multiplier: MultiplierSpec::NewSos {
                    name: "s2".into(),
                    deg: 2,
                },
            },
        ],
        None,
    )
    .unwrap();
    let cp = prog.lower().unwrap();
    assert_eq!(cp.psd_blocks.len(), 3);
}

#[test]
fn bounded_linear_objective_attains_bound() {
    // max t s.t. (x^2 + t) SOS and t <= 5  ->  t = 5
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let t = prog.declare_scalar("t").unwrap();
    let target = fixed(Polynomial::from_raw(vs, &[(&[2], 1.0)]))
        .add(&prog.expr(t))
        .unwrap();
    prog.add_membership("sos", target, vec![], None).unwrap();
    // 5 - t >= 0
    prog.add_scalar_ineq(
        "t_cap",
        ScalarAffine::constant(5.0).plus(&prog.scalar_expr(t).scaled(-1.0)),
    );
    prog.set_objective(Sense::Maximize, prog.scalar_expr(t));
    let cp = prog.lower().unwrap();
    let sol = solve(&cp, &SolverConfig::default())
        .unwrap()
        .expect_feasible("t")
        .unwrap();
    assert!((sol.objective - 5.0).abs() < 1e-6, "obj = {}", sol.objective);
}

#[test]
fn recover_round_trips_fixed_polys() {
    // pin p(x) by equality memberships and recover it
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let p = prog
        .declare_poly_deg("p", 2, DecisionKind::Free, DecisionRole::Structural)
        .unwrap();
    let want = Polynomial::from_raw(vs.clone(), &[(&[2], 2.0), (&[1], -0.5), (&[0], 0.25)]);
    // p - want == 0 encoded coefficient-wise via scalar equalities
    let diff = prog.expr(p).sub(&fixed(want.clone())).unwrap();
    for (k, m) in monomial_basis(1, 2, ParityFilter::All).iter().enumerate() {
        let mut terms = Vec::new();
        for (&v, cp) in &diff.linear {
            let c = cp.coefficient(m);
            if c != 0.0 {
                terms.push((v, c));
            }
        }
        prog.add_scalar_eq(
            &format!("pin{k}"),
            ScalarAffine {
                terms,
                constant: diff.constant.coefficient(m),
            },
        );
    }
    let cp = prog.lower().unwrap();
    let sol = solve(&cp, &SolverConfig::default())
        .unwrap()
        .expect_feasible("pin")
        .unwrap();
    let (got, gram) = prog.recover_by_name(&sol, "p").unwrap();
    assert!(gram.is_none());
    assert!(got.sub(&want).unwrap().max_abs_coefficient() < 1e-7);
}

#[test]
fn identical_programs_lower_identically() {
    let build = || {
        let vs = one_var();
        let mut prog = SosProgram::new(vs.clone());
        let t = prog.declare_scalar("t").unwrap();
        let target = fixed(Polynomial::from_raw(vs.clone(), &[(&[2], 1.0), (&[0], 0.3)]))
            .add(&prog.expr(t))
            .unwrap();
        let gen = fixed(Polynomial::from_raw(vs, &[(&[2], -1.0), (&[0], 1.0)]));
        prog.add_membership(
            "m",
            target,
            vec![GeneratorSpec {
                generator: gen,
                multiplier: MultiplierSpec::NewSos {
                    name: "g".into(),
                    deg: 2,
                },
            }],
            None,
        )
        .unwrap();
        prog.set_objective(Sense::Maximize, prog.scalar_expr(t));
        prog.lower().unwrap()
    };
    let a = build();
    let b = build();
    assert_eq!(a.dump_triplets(), b.dump_triplets());
}

#[test]
fn dump_triplets_contains_sections() {
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(vs, &[(&[2], 1.0), (&[0], 1.0)]));
    prog.add_membership("t", target, vec![], None).unwrap();
    let cp = prog.lower().unwrap();
    let dump = cp.dump_triplets();
    assert!(dump.contains("A 0 0"));
    assert!(dump.contains("psd "));
}

#[test]
fn infeasible_by_degree_truncation_detected_structurally() {
    // x^4 with residual capped at degree 2 leaves an uncoverable monomial
    let vs = one_var();
    let mut prog = SosProgram::new(vs.clone());
    let target = fixed(Polynomial::from_raw(vs, &[(&[4], 1.0)]));
    prog.add_membership("t", target, vec![], Some(2)).unwrap();
    let cp = prog.lower().unwrap();
    assert!(cp.structurally_infeasible.is_some());
    let out = solve(&cp, &SolverConfig::default()).unwrap();
    assert!(matches!(out, SolveOutcome::Infeasible(_)));
}
