//! Synthesis of the slack polynomials r_0(x), ..., r_t(x) bounding the
//! runtime QCQP rows: nonpositive on the domains where the CLF/CBF
//! conditions must bind, large enough on the nominal region for perfect
//! legacy tracking, and above the rational-controller rows on the
//! transitional region so the QCQP stays feasible.

use crate::certificate::SafetyCertificate;
use crate::model::PlantModel;
use crate::SfError;
use polyalg::Polynomial;
use soscomp::{
    solve, DecisionKind, DecisionRole, GeneratorSpec, MultiplierSpec, PolyExpr, ScalarAffine,
    Sense, SolveOutcome, SolverConfig, SosProgram,
};

#[derive(Debug, Clone)]
pub struct SlackOptions {
    pub deg: u32,
    /// Require r_i <= 0 outside the safe set (restores trajectories that
    /// left X_s under disturbance).
    pub attracting_outside: bool,
    /// The legacy-tracking lower bound family; disabling it is only useful
    /// as a negative control in tests.
    pub include_legacy_bound: bool,
    /// Box on the slack coefficients keeping the passivity objective
    /// bounded.
    pub coeff_cap: f64,
    /// The boundary condition r_i <= 0 on {B_i = 0} is certified on the
    /// band {-band <= B_i <= 0} instead (the boundary itself is measure
    /// zero); shrunk automatically down to `band_min` if infeasible.
    pub band: f64,
    pub band_min: f64,
    pub solver: SolverConfig,
}

impl Default for SlackOptions {
    fn default() -> Self {
        SlackOptions {
            deg: 2,
            attracting_outside: false,
            include_legacy_bound: true,
            coeff_cap: 1e3,
            band: 5e-3,
            band_min: 1.5e-3,
            solver: SolverConfig::default(),
        }
    }
}

/// Multiplier degrees per bound family, derived from the certificate.
struct SlackDegrees {
    upper: u32,
    id_upper: u32,
    lower_n: u32,
    id_lower_n: u32,
    lower_t: u32,
    id_lower_t: u32,
}

fn even_up(d: u32) -> u32 {
    d + d % 2
}

/// Solve the slack SOS program; on infeasibility the failing bound family
/// is identified by cumulative re-solves.
pub fn synthesize_slack(
    cert: &SafetyCertificate,
    model: &PlantModel,
    opts: &SlackOptions,
) -> Result<Vec<Polynomial>, SfError> {
    cert.check_model(model)?;
    let mut band = opts.band;
    loop {
        if let Some(r) = try_families(cert, model, opts, band, 4)? {
            return Ok(r);
        }
        if band / 2.0 >= opts.band_min {
            band /= 2.0;
        } else {
            break;
        }
    }
    match try_families(cert, model, opts, band, 4)? {
        Some(r) => Ok(r),
        None => {
            for fam in 1..=4usize {
                if try_families(cert, model, opts, band, fam)?.is_none() {
                    let name = match fam {
                        1 => "clf upper bound (r0 <= 0 on X_t)",
                        2 => "cbf upper bound (r_i <= 0 on the barrier shell)",
                        3 => "legacy tracking lower bound on X_n",
                        _ => "feasibility lower bound from u_sos on X_t",
                    };
                    return Err(SfError::SlackInfeasible {
                        family: name.to_string(),
                        detail: format!("first infeasible with families 1..={fam}"),
                    });
                }
            }
            Err(SfError::SlackInfeasible {
                family: "unknown".to_string(),
                detail: "full program infeasible but every prefix feasible".to_string(),
            })
        }
    }
}

fn try_families(
    cert: &SafetyCertificate,
    model: &PlantModel,
    opts: &SlackOptions,
    band: f64,
    up_to: usize,
) -> Result<Option<Vec<Polynomial>>, SfError> {
    let vs = model.varset.clone();
    let t = cert.t();
    let v_deg = cert.v.total_degree();
    let b_deg = cert.b.iter().map(|b| b.total_degree()).max().unwrap_or(2);
    let deg = SlackDegrees {
        upper: 2,
        id_upper: even_up(opts.deg.max(2 + v_deg.max(b_deg))),
        lower_n: 2,
        id_lower_n: even_up(
            (opts.deg)
                .max((v_deg - 1) + row_drive_deg(model))
                .max(2 + v_deg),
        ),
        lower_t: even_up(cert.s.total_degree() + opts.deg).max(2),
        id_lower_t: {
            let s_deg = cert.s.total_degree();
            let p_deg = cert.p.iter().map(|p| p.total_degree()).max().unwrap_or(1);
            let drive = (s_deg + model_f_deg(model)).max(model_g_deg(model) + p_deg);
            even_up(
                (s_deg + opts.deg)
                    .max((v_deg - 1) + drive)
                    .max((b_deg - 1) + drive)
                    .max(s_deg + v_deg),
            )
        },
    };

    let mut prog = SosProgram::new(vs.clone());
    let r_ids: Vec<_> = (0..=t)
        .map(|k| {
            prog.declare_poly_deg(
                &format!("r{k}"),
                opts.deg,
                DecisionKind::Free,
                DecisionRole::Structural,
            )
            .unwrap()
        })
        .collect();
    let r_expr: Vec<PolyExpr> = r_ids.iter().map(|&id| prog.expr(id)).collect();

    let neg_fop = model.f_op.neg();
    let d_poly = cert.dissipation.d(&cert.v)?;

    let sos2 = |name: String, d: u32| MultiplierSpec::NewSos { name, deg: d };

    // family 1: -r0 in M(V, -B, -f_op)
    if up_to >= 1 {
        let mut gens = vec![GeneratorSpec {
            generator: PolyExpr::from_poly(cert.v.clone()),
            multiplier: sos2("u0/gV".into(), deg.upper),
        }];
        for (j, bj) in cert.b.iter().enumerate() {
            gens.push(GeneratorSpec {
                generator: PolyExpr::from_poly(bj.neg()),
                multiplier: sos2(format!("u0/gB{j}"), deg.upper),
            });
        }
        gens.push(GeneratorSpec {
            generator: PolyExpr::from_poly(neg_fop.clone()),
            multiplier: sos2("u0/gop".into(), deg.upper),
        });
        prog.add_membership("upper0", r_expr[0].neg(), gens, Some(deg.id_upper))?;
    }

    // family 2: -r_i in M(B_i + band, -B, -f_op) — the boundary condition
    // strengthened to the band {-band <= B_i <= 0} within the safe set
    if up_to >= 2 {
        for i in 0..t {
            let shifted = cert.b[i].add(&Polynomial::constant(vs.clone(), band))?;
            let mut gens = vec![GeneratorSpec {
                generator: PolyExpr::from_poly(shifted),
                multiplier: sos2(format!("u{}/gband", i + 1), deg.upper),
            }];
            for (j, bj) in cert.b.iter().enumerate() {
                gens.push(GeneratorSpec {
                    generator: PolyExpr::from_poly(bj.neg()),
                    multiplier: sos2(format!("u{}/gB{j}", i + 1), deg.upper),
                });
            }
            gens.push(GeneratorSpec {
                generator: PolyExpr::from_poly(neg_fop.clone()),
                multiplier: sos2(format!("u{}/gop", i + 1), deg.upper),
            });
            prog.add_membership(
                &format!("upper{}", i + 1),
                r_expr[i + 1].neg(),
                gens,
                Some(deg.id_upper),
            )?;
        }
    }

    // family 3: r - (C u_n + b) >= 0 on X_n
    if up_to >= 3 && opts.include_legacy_bound {
        let rows = qcqp_rows_under(cert, model, &model.u_n, &d_poly)?;
        for (k, row) in rows.iter().enumerate() {
            let target = r_expr[k].sub(&PolyExpr::from_poly(row.clone()))?;
            let gens = vec![
                GeneratorSpec {
                    generator: PolyExpr::from_poly(cert.v.neg()),
                    multiplier: sos2(format!("ln{k}/gV"), deg.lower_n),
                },
                GeneratorSpec {
                    generator: PolyExpr::from_poly(neg_fop.clone()),
                    multiplier: sos2(format!("ln{k}/gop"), deg.lower_n),
                },
            ];
            prog.add_membership(&format!("lower_n{k}"), target, gens, Some(deg.id_lower_n))?;
        }
    }

    // family 4: s r - (C p + s b) >= 0 on X_t (the u_sos feasibility bound,
    // cleared of the rational denominator)
    if up_to >= 4 {
        let rows = qcqp_rows_cleared(cert, model, &d_poly)?;
        for (k, row) in rows.iter().enumerate() {
            let target = r_expr[k]
                .mul_poly(&cert.s)?
                .sub(&PolyExpr::from_poly(row.clone()))?;
            let mut gens = vec![GeneratorSpec {
                generator: PolyExpr::from_poly(cert.v.clone()),
                multiplier: sos2(format!("lt{k}/gV"), deg.lower_t),
            }];
            for (j, bj) in cert.b.iter().enumerate() {
                gens.push(GeneratorSpec {
                    generator: PolyExpr::from_poly(bj.neg()),
                    multiplier: sos2(format!("lt{k}/gB{j}"), deg.lower_t),
                });
            }
            gens.push(GeneratorSpec {
                generator: PolyExpr::from_poly(neg_fop.clone()),
                multiplier: sos2(format!("lt{k}/gop"), deg.lower_t),
            });
            prog.add_membership(&format!("lower_t{k}"), target, gens, Some(deg.id_lower_t))?;
        }
    }

    // optional: negative slack outside the safe set
    if opts.attracting_outside {
        for i in 0..t {
            let gens = vec![
                GeneratorSpec {
                    generator: PolyExpr::from_poly(cert.b[i].clone()),
                    multiplier: sos2(format!("out{}/gB", i + 1), deg.upper),
                },
                GeneratorSpec {
                    generator: PolyExpr::from_poly(neg_fop.clone()),
                    multiplier: sos2(format!("out{}/gop", i + 1), deg.upper),
                },
            ];
            prog.add_membership(
                &format!("outside{}", i + 1),
                r_expr[i + 1].neg(),
                gens,
                Some(deg.id_upper),
            )?;
        }
    }

    // coefficient box and the passivity objective (maximize the constant
    // terms, i.e. slack depth inside the nominal region)
    let mut objective = ScalarAffine::constant(0.0);
    for (k, &id) in r_ids.iter().enumerate() {
        let vars = prog.decision(id).vars.clone();
        for v in vars.clone() {
            prog.add_scalar_ineq(
                &format!("cap+{k}/{v}"),
                ScalarAffine::constant(opts.coeff_cap).plus(&ScalarAffine::var(v).scaled(-1.0)),
            );
            prog.add_scalar_ineq(
                &format!("cap-{k}/{v}"),
                ScalarAffine::constant(opts.coeff_cap).plus(&ScalarAffine::var(v)),
            );
        }
        // constant coefficient is the first basis entry (graded-lex order)
        objective = objective.plus(&ScalarAffine::var(vars.start));
    }
    prog.set_objective(Sense::Maximize, objective);

    let cp = prog.lower()?;
    let first = solve(&cp, &opts.solver)?;
    let outcome = if let SolveOutcome::Stalled(_) = first {
        let mut relaxed = opts.solver.clone();
        relaxed.tol_gap = relaxed.tol_gap.max(1e-7);
        relaxed.tol_feas = relaxed.tol_feas.max(1e-7);
        relaxed.max_iter *= 2;
        solve(&cp, &relaxed)?
    } else {
        first
    };
    match outcome {
        SolveOutcome::Feasible(sol) => {
            let mut r = Vec::with_capacity(t + 1);
            for k in 0..=t {
                let (poly, _) = prog.recover_by_name(&sol, &format!("r{k}"))?;
                r.push(poly);
            }
            Ok(Some(r))
        }
        _ => Ok(None),
    }
}

fn model_f_deg(model: &PlantModel) -> u32 {
    model.f.iter().map(|q| q.total_degree()).max().unwrap_or(0)
}

fn model_g_deg(model: &PlantModel) -> u32 {
    model
        .g
        .iter()
        .flatten()
        .map(|q| q.total_degree())
        .max()
        .unwrap_or(0)
}

fn row_drive_deg(model: &PlantModel) -> u32 {
    let un = model.u_n.iter().map(|q| q.total_degree()).max().unwrap_or(0);
    model_f_deg(model).max(model_g_deg(model) + un)
}

/// QCQP left-hand rows C(x) u(x) + b(x) for a given polynomial input:
/// row 0 = grad(V)'(f + G u) + d, row i = grad(B_i)'(f + G u).
pub fn qcqp_rows_under(
    cert: &SafetyCertificate,
    model: &PlantModel,
    u: &[Polynomial],
    d_poly: &Polynomial,
) -> Result<Vec<Polynomial>, SfError> {
    let cl = model.closed_loop(u)?;
    let mut rows = Vec::with_capacity(cert.t() + 1);
    let mut row0 = Polynomial::zero(model.varset.clone());
    for k in 0..model.n() {
        row0 = row0.add(&cert.v.differentiate(k).mul(&cl[k])?)?;
    }
    rows.push(row0.add(d_poly)?);
    for bi in &cert.b {
        let mut row = Polynomial::zero(model.varset.clone());
        for k in 0..model.n() {
            row = row.add(&bi.differentiate(k).mul(&cl[k])?)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Denominator-cleared rows for u_sos = p/s:
/// row 0 = grad(V)'(s f + G p) + s d, row i = grad(B_i)'(s f + G p).
fn qcqp_rows_cleared(
    cert: &SafetyCertificate,
    model: &PlantModel,
    d_poly: &Polynomial,
) -> Result<Vec<Polynomial>, SfError> {
    let n = model.n();
    let drive: Vec<Polynomial> = (0..n)
        .map(|k| {
            let mut e = cert.s.mul(&model.f[k]).unwrap();
            for (j, pj) in cert.p.iter().enumerate() {
                e = e.add(&model.g[k][j].mul(pj).unwrap()).unwrap();
            }
            e
        })
        .collect();
    let mut rows = Vec::with_capacity(cert.t() + 1);
    let mut row0 = Polynomial::zero(model.varset.clone());
    for k in 0..n {
        row0 = row0.add(&cert.v.differentiate(k).mul(&drive[k])?)?;
    }
    rows.push(row0.add(&cert.s.mul(d_poly)?)?);
    for bi in &cert.b {
        let mut row = Polynomial::zero(model.varset.clone());
        for k in 0..n {
            row = row.add(&bi.differentiate(k).mul(&drive[k])?)?;
        }
        rows.push(row);
    }
    Ok(rows)
}
