use super::{sigma_trace_objective, DegreeConfig, SynthOptions, SynthState};
use crate::model::PlantModel;
use crate::SfError;
use polyalg::{Polynomial, VarSet};
use soscomp::{
    DecisionKind, DecisionRole, GeneratorSpec, MultiplierSpec, PolyExpr, ScalarAffine, Sense,
    SosProgram,
};
use std::sync::Arc;

/// Which half of the bilinear program a solve searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// First solve ever: multipliers (and operating-region multipliers) at
    /// the seed certificate and the random seed controller.
    Boot,
    /// Initialization, certificate half (V, sigma) at fixed rho.
    InitCert,
    /// Initialization, controller half (p, s, margins, multipliers).
    InitCtrl,
    /// Main loop, certificate half: volume surrogate.
    MainCert,
    /// Main loop, controller half: margin maximization.
    MainCtrl,
}

impl Phase {
    pub fn searches_certificate(self) -> bool {
        matches!(self, Phase::InitCert | Phase::MainCert)
    }

    pub fn searches_controller(self) -> bool {
        matches!(self, Phase::InitCtrl | Phase::MainCtrl)
    }

    /// Initialization phases use lean quadratic modules: the -B generators
    /// are omitted (slightly more conservative constraints, fewer
    /// decision variables).
    pub fn lean(self) -> bool {
        matches!(self, Phase::Boot | Phase::InitCert | Phase::InitCtrl)
    }
}

/// Multiplier families and their phase ownership. A family not owned by the
/// phase enters as a fixed polynomial from the state archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// gamma_op on the CLF/CBF rows.
    GopDyn,
    /// gamma_op on nominal / containment rows.
    GopSmall,
    /// Free multiplier on B_i (CBF rows) — the boundary equality part.
    LamB,
    /// SOS multipliers on -B_j.
    GamB,
    /// SOS multiplier on V in the CLF row.
    GamV,
    /// Free multiplier on V in the nominal row.
    LamV,
    /// SOS multiplier on -V in the containment rows.
    GamVp,
    /// SOS multiplier on w in tie containment rows.
    GamW,
    /// Input-constraint row multipliers.
    Input,
}

fn owns(phase: Phase, fam: Family) -> bool {
    use Family::*;
    use Phase::*;
    match fam {
        GopDyn => matches!(phase, Boot | InitCert | MainCert),
        GopSmall => matches!(phase, Boot | InitCert | MainCert | MainCtrl),
        LamB | GamV | LamV | GamVp => matches!(phase, Boot | InitCtrl | MainCtrl),
        GamB => matches!(phase, MainCtrl),
        GamW => matches!(phase, InitCert | MainCert),
        Input => matches!(phase, Boot | InitCtrl | MainCtrl),
    }
}

/// Assembles one phase's SOS program from the model, degree configuration
/// and current state.
pub struct RowBuilder<'a> {
    model: &'a PlantModel,
    deg: &'a DegreeConfig,
    opts: &'a SynthOptions,
    state: &'a SynthState,
    phase: Phase,
    prog: SosProgram,
    anchors: Vec<usize>,
    v_expr: PolyExpr,
    b_expr: Vec<PolyExpr>,
    s_expr: PolyExpr,
    p_expr: Vec<PolyExpr>,
    deltas: Vec<soscomp::DecisionId>,
}

impl<'a> RowBuilder<'a> {
    pub fn build(
        model: &'a PlantModel,
        deg: &'a DegreeConfig,
        opts: &'a SynthOptions,
        state: &'a SynthState,
        phase: Phase,
    ) -> Result<SosProgram, SfError> {
        let mut prog = SosProgram::new(model.varset.clone());
        let map = SynthState::anchor_map(model);
        let mut anchors = map.clone();
        anchors.sort_unstable();
        anchors.dedup();

        // structural declarations
        let (v_expr, b_expr) = if phase.searches_certificate() {
            let v = prog.declare_poly_deg("V", deg.v, DecisionKind::Free, DecisionRole::Structural)?;
            let mut b_expr = Vec::new();
            for &i in &anchors {
                let sid = prog.declare_poly_deg(
                    &format!("sigma{i}"),
                    deg.b,
                    DecisionKind::Sos,
                    DecisionRole::Structural,
                )?;
                b_expr.push(
                    prog.expr(sid)
                        .add(&PolyExpr::from_poly(model.w[i].clone()))?,
                );
            }
            (prog.expr(v), b_expr)
        } else {
            let barrs = state.barriers(model);
            let b_expr = anchors
                .iter()
                .map(|&i| PolyExpr::from_poly(barrs[i].clone()))
                .collect();
            (PolyExpr::from_poly(state.v.clone()), b_expr)
        };
        let (s_expr, p_expr, deltas) = if phase.searches_controller() {
            let s = prog.declare_poly_deg("s", deg.s, DecisionKind::Free, DecisionRole::Structural)?;
            let p: Vec<PolyExpr> = (0..model.m())
                .map(|j| {
                    let id = prog
                        .declare_poly_deg(
                            &format!("p{j}"),
                            deg.p,
                            DecisionKind::Free,
                            DecisionRole::Structural,
                        )
                        .unwrap();
                    prog.expr(id)
                })
                .collect();
            let deltas: Vec<_> = (0..=anchors.len())
                .map(|i| prog.declare_scalar(&format!("Delta{i}")).unwrap())
                .collect();
            (prog.expr(s), p, deltas)
        } else {
            (
                PolyExpr::from_poly(state.s.clone()),
                state
                    .p
                    .iter()
                    .map(|q| PolyExpr::from_poly(q.clone()))
                    .collect(),
                Vec::new(),
            )
        };

        let mut rb = RowBuilder {
            model,
            deg,
            opts,
            state,
            phase,
            prog,
            anchors,
            v_expr,
            b_expr,
            s_expr,
            p_expr,
            deltas,
        };
        rb.emit_all()?;
        rb.finish()
    }

    fn mult(&self, label: &str, fam: Family, deg: u32, sos: bool) -> MultiplierSpec {
        if owns(self.phase, fam) {
            if sos {
                MultiplierSpec::NewSos {
                    name: label.to_string(),
                    deg,
                }
            } else {
                MultiplierSpec::NewFree {
                    name: label.to_string(),
                    deg,
                }
            }
        } else {
            MultiplierSpec::Fixed(
                self.state
                    .mults
                    .get(label)
                    .cloned()
                    .unwrap_or_else(|| Polynomial::zero(self.model.varset.clone())),
            )
        }
    }

    /// Fixed multiplier values for extended-varset rows default to zero over
    /// that varset.
    fn mult_in(
        &self,
        vs: &Arc<VarSet>,
        label: &str,
        fam: Family,
        deg: u32,
        sos: bool,
    ) -> MultiplierSpec {
        if owns(self.phase, fam) {
            self.mult(label, fam, deg, sos)
        } else {
            MultiplierSpec::Fixed(
                self.state
                    .mults
                    .get(label)
                    .cloned()
                    .unwrap_or_else(|| Polynomial::zero(vs.clone())),
            )
        }
    }

    fn op_generator(&self) -> Polynomial {
        // -(f_op + rho): nonnegative exactly on the shrunk operating region
        self.model
            .f_op
            .add(&Polynomial::constant(
                self.model.varset.clone(),
                self.state.rho,
            ))
            .unwrap()
            .neg()
    }

    fn delta_expr(&self, i: usize) -> Option<PolyExpr> {
        self.deltas.get(i).map(|&id| self.prog.expr(id))
    }

    /// s f_k + (G p)_k as an expression.
    fn drive(&self, k: usize) -> Result<PolyExpr, SfError> {
        let mut e = self.s_expr.mul_poly(&self.model.f[k])?;
        for (j, pj) in self.p_expr.iter().enumerate() {
            e = e.add(&pj.mul_poly(&self.model.g[k][j])?)?;
        }
        Ok(e)
    }

    /// lambda (V + V0), with the decision side as an expression.
    fn dissipation_expr(&self) -> Result<PolyExpr, SfError> {
        let v0 = Polynomial::constant(self.model.varset.clone(), self.state.v0);
        Ok(self.v_expr.add(&PolyExpr::from_poly(v0))?)
    }

    fn emit_all(&mut self) -> Result<(), SfError> {
        self.emit_cbf_clf_rows()?;
        self.emit_nominal_row()?;
        self.emit_containment_rows()?;
        if self.phase.searches_controller() {
            self.emit_s_positivity()?;
        }
        self.emit_input_rows()?;
        self.emit_scalar_constraints()?;
        Ok(())
    }

    /// CBF rows (per distinct barrier) and the CLF row, with operating
    /// region relaxation and, in controller phases, the margins Delta_i.
    fn emit_cbf_clf_rows(&mut self) -> Result<(), SfError> {
        let gop = self.op_generator();
        let n = self.model.n();
        let lean = self.phase.lean();

        for (pos, &i) in self.anchors.clone().iter().enumerate() {
            let mut target = PolyExpr::zero(self.model.varset.clone());
            for k in 0..n {
                let dbk = self.b_expr[pos].differentiate(k);
                target = target.add(&dbk.mul(&self.drive(k)?)?)?;
            }
            let mut target = target.neg();
            if let Some(d) = self.delta_expr(pos + 1) {
                target = target.sub(&d)?;
            }
            let mut gens = vec![GeneratorSpec {
                generator: self.b_expr[pos].clone(),
                multiplier: self.mult(&format!("cbf{i}/lam"), Family::LamB, self.deg.lam_b, false),
            }];
            if !lean {
                for (qpos, &j) in self.anchors.clone().iter().enumerate() {
                    gens.push(GeneratorSpec {
                        generator: self.b_expr[qpos].neg(),
                        multiplier: self.mult(
                            &format!("cbf{i}/gB{j}"),
                            Family::GamB,
                            self.deg.gam_b,
                            true,
                        ),
                    });
                }
            }
            gens.push(GeneratorSpec {
                generator: PolyExpr::from_poly(gop.clone()),
                multiplier: self.mult(&format!("cbf{i}/gop"), Family::GopDyn, self.deg.g_op_dyn, true),
            });
            self.prog
                .add_membership(&format!("cbf{i}"), target, gens, Some(self.deg.id_dyn))?;
        }

        // CLF row
        let mut target = PolyExpr::zero(self.model.varset.clone());
        for k in 0..n {
            let dvk = self.v_expr.differentiate(k);
            target = target.add(&dvk.mul(&self.drive(k)?)?)?;
        }
        // s * d term: multiply the fixed side onto the decision side
        let sd = if self.phase.searches_certificate() || self.phase == Phase::Boot {
            let s_lam = self.state.s.clone(); // lambda = 1
            self.dissipation_expr()?.mul_poly(&s_lam)?
        } else {
            let d_fixed = Polynomial::constant(self.model.varset.clone(), self.state.v0)
                .add(&self.state.v)?;
            self.s_expr.mul_poly(&d_fixed)?
        };
        let mut target = target.add(&sd)?.neg();
        if let Some(d) = self.delta_expr(0) {
            target = target.sub(&d)?;
        }
        let mut gens = vec![GeneratorSpec {
            generator: self.v_expr.clone(),
            multiplier: self.mult("clf/gV", Family::GamV, self.deg.gam_v, true),
        }];
        if !lean {
            for (qpos, &j) in self.anchors.clone().iter().enumerate() {
                gens.push(GeneratorSpec {
                    generator: self.b_expr[qpos].neg(),
                    multiplier: self.mult(&format!("clf/gB{j}"), Family::GamB, self.deg.gam_b, true),
                });
            }
        }
        gens.push(GeneratorSpec {
            generator: PolyExpr::from_poly(gop),
            multiplier: self.mult("clf/gop", Family::GopDyn, self.deg.g_op_dyn, true),
        });
        self.prog
            .add_membership("clf", target, gens, Some(self.deg.id_dyn))?;
        Ok(())
    }

    /// Legacy forward-invariance row: -grad(V)'(f + G u_n) - d in
    /// M(V, -V, -f_op - rho), with the V generator entering through a free
    /// multiplier (boundary equality).
    fn emit_nominal_row(&mut self) -> Result<(), SfError> {
        let cl = self.model.closed_loop(&self.model.u_n)?;
        let n = self.model.n();
        let mut target = PolyExpr::zero(self.model.varset.clone());
        for k in 0..n {
            let dvk = self.v_expr.differentiate(k);
            target = target.add(&dvk.mul_poly(&cl[k])?)?;
        }
        let target = target.add(&self.dissipation_expr()?)?.neg();
        let gens = vec![
            GeneratorSpec {
                generator: self.v_expr.clone(),
                multiplier: self.mult("nom/lamV", Family::LamV, self.deg.lam_v, false),
            },
            GeneratorSpec {
                generator: PolyExpr::from_poly(self.op_generator()),
                multiplier: self.mult("nom/gop", Family::GopSmall, self.deg.g_op_nom, true),
            },
        ];
        self.prog
            .add_membership("nom", target, gens, Some(self.deg.id_nom))?;
        Ok(())
    }

    /// Containment rows: -B_i in M(-V, -f_op - rho) places the nominal
    /// region inside each barrier sublevel set; anchored barriers satisfy
    /// B_i in M(w_i) by construction, and tied barriers get explicit
    /// membership rows against the remaining generators.
    fn emit_containment_rows(&mut self) -> Result<(), SfError> {
        for (pos, &i) in self.anchors.clone().iter().enumerate() {
            let target = self.b_expr[pos].neg();
            let gens = vec![
                GeneratorSpec {
                    generator: self.v_expr.neg(),
                    multiplier: self.mult(
                        &format!("cont{i}/gVp"),
                        Family::GamVp,
                        self.deg.gam_vp,
                        true,
                    ),
                },
                GeneratorSpec {
                    generator: PolyExpr::from_poly(self.op_generator()),
                    multiplier: self.mult(
                        &format!("cont{i}/gop"),
                        Family::GopSmall,
                        self.deg.g_op_cont,
                        true,
                    ),
                },
            ];
            self.prog
                .add_membership(&format!("cont{i}"), target, gens, Some(self.deg.id_cont))?;
        }
        // tie rows: anchor barrier must also sit inside the other w_j
        let map = SynthState::anchor_map(self.model);
        for (j, &a) in map.iter().enumerate() {
            if j == a {
                continue;
            }
            let pos = self.anchors.iter().position(|&x| x == a).unwrap();
            let target = self.b_expr[pos].clone();
            let gens = vec![GeneratorSpec {
                generator: PolyExpr::from_poly(self.model.w[j].clone()),
                multiplier: self.mult(
                    &format!("tie{j}/gw"),
                    Family::GamW,
                    even_down_local(self.deg.b.saturating_sub(self.model.w[j].total_degree())),
                    true,
                ),
            }];
            self.prog
                .add_membership(&format!("tie{j}"), target, gens, Some(even_up_local(self.deg.b)))?;
        }
        Ok(())
    }

    fn emit_s_positivity(&mut self) -> Result<(), SfError> {
        let eps = Polynomial::constant(self.model.varset.clone(), self.opts.epsilon_s);
        let target = self.s_expr.sub(&PolyExpr::from_poly(eps))?;
        self.prog
            .add_membership("s_eps", target, vec![], Some(even_up_local(self.deg.s)))?;
        Ok(())
    }

    /// Linear rows -a_i p + b_i s in M(-B) and the quadratic row over the
    /// extended (x, v) variables. Skipped when the model carries no input
    /// constraint specification.
    fn emit_input_rows(&mut self) -> Result<(), SfError> {
        let lean = self.phase.lean();
        if let Some(lin) = self.model.input_linear.clone() {
            for (k, (ak, bk)) in lin.a.iter().zip(&lin.b).enumerate() {
                let mut target = self.s_expr.scale(*bk);
                for (j, &akj) in ak.iter().enumerate() {
                    target = target.add(&self.p_expr[j].scale(-akj))?;
                }
                let mut gens = Vec::new();
                if !lean {
                    for (qpos, &j) in self.anchors.clone().iter().enumerate() {
                        gens.push(GeneratorSpec {
                            generator: self.b_expr[qpos].neg(),
                            multiplier: self.mult(
                                &format!("inl{k}/gB{j}"),
                                Family::Input,
                                even_down_local(self.deg.id_inl.saturating_sub(self.deg.b)),
                                true,
                            ),
                        });
                    }
                }
                self.prog.add_membership(
                    &format!("inl{k}"),
                    target,
                    gens,
                    Some(self.deg.id_inl),
                )?;
            }
        }
        if let Some(quad) = self.model.input_quadratic.clone() {
            let m = self.model.m();
            let mut names: Vec<String> =
                self.model.varset.names().iter().cloned().collect();
            names.extend(self.model.input_names.iter().cloned());
            let xv = VarSet::new(names);
            let nx = self.model.n();

            let vvar =
                |j: usize| -> Polynomial { Polynomial::var(xv.clone(), nx + j) };
            // f_u(v) = v' Qu v - u_max^2
            let mut f_u = Polynomial::constant(xv.clone(), -quad.u_max * quad.u_max);
            for j in 0..m {
                for l in 0..m {
                    if quad.q[j][l] != 0.0 {
                        f_u = f_u
                            .add(&vvar(j).mul(&vvar(l)).unwrap().scale(quad.q[j][l]))
                            .unwrap();
                    }
                }
            }
            // target = -v' Qu (p - s u0) + s u_max^2
            let s_xv = self.s_expr.embed(&xv)?;
            let mut target = s_xv.scale(quad.u_max * quad.u_max);
            for j in 0..m {
                for l in 0..m {
                    let qjl = quad.q[j][l];
                    if qjl == 0.0 {
                        continue;
                    }
                    let pl = self.p_expr[l].embed(&xv)?;
                    let inner = pl.sub(&s_xv.scale(quad.u0[l]))?;
                    target = target.sub(&inner.mul_poly(&vvar(j))?.scale(qjl))?;
                }
            }
            let mut gens = vec![GeneratorSpec {
                generator: PolyExpr::from_poly(f_u.neg()),
                multiplier: self.mult_in(&xv, "inq/gfu", Family::Input, 2, true),
            }];
            if !lean {
                for (qpos, &j) in self.anchors.clone().iter().enumerate() {
                    let bj = self.b_expr[qpos].embed(&xv)?;
                    gens.push(GeneratorSpec {
                        generator: bj.neg(),
                        multiplier: self.mult_in(&xv, &format!("inq/gB{j}"), Family::Input, 0, true),
                    });
                }
            }
            self.prog
                .add_membership("inq", target, gens, Some(self.deg.id_inq))?;
        }
        Ok(())
    }

    fn emit_scalar_constraints(&mut self) -> Result<(), SfError> {
        if self.phase.searches_certificate() {
            // V(0) <= v_origin
            let origin = vec![0.0; self.model.n()];
            let v_at_0 = self.v_expr.eval_affine(&origin)?;
            self.prog.add_scalar_ineq(
                "v_origin",
                ScalarAffine::constant(self.opts.v_origin).plus(&v_at_0.scaled(-1.0)),
            );
        }
        for (i, &id) in self.deltas.clone().iter().enumerate() {
            let d = self.prog.scalar_expr(id);
            self.prog.add_scalar_ineq(
                &format!("delta{i}_min"),
                d.clone().plus(&ScalarAffine::constant(-self.opts.delta_min)),
            );
            self.prog.add_scalar_ineq(
                &format!("delta{i}_max"),
                ScalarAffine::constant(self.opts.delta_max).plus(&d.scaled(-1.0)),
            );
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SosProgram, SfError> {
        match self.phase {
            Phase::MainCert => {
                let obj = sigma_trace_objective(&self.prog, self.model)?;
                self.prog.set_objective(Sense::Minimize, obj);
            }
            Phase::InitCtrl | Phase::MainCtrl => {
                let mut obj = ScalarAffine::constant(0.0);
                for &id in &self.deltas {
                    obj = obj.plus(&self.prog.scalar_expr(id));
                }
                self.prog.set_objective(Sense::Maximize, obj);
            }
            Phase::InitCert | Phase::Boot => {}
        }
        Ok(self.prog)
    }
}

fn even_up_local(d: u32) -> u32 {
    d + d % 2
}

fn even_down_local(d: u32) -> u32 {
    d - d % 2
}

/// Searched-variable counts of the four SDP shapes, as
/// [init cert, init ctrl, main cert, main ctrl]. Counts the coefficient
/// dimension of every polynomial object the phase searches (structural and
/// multiplier decisions); the Positivstellensatz residual blocks are
/// constraint apparatus and are excluded.
pub fn searched_variable_counts(
    model: &PlantModel,
    deg: &DegreeConfig,
    opts: &SynthOptions,
    state: &SynthState,
) -> Result<[usize; 4], SfError> {
    let mut out = [0usize; 4];
    for (k, phase) in [
        Phase::InitCert,
        Phase::InitCtrl,
        Phase::MainCert,
        Phase::MainCtrl,
    ]
    .into_iter()
    .enumerate()
    {
        let prog = RowBuilder::build(model, deg, opts, state, phase)?;
        let (structural, multiplier, _residual) = prog.searched_dims();
        out[k] = structural + multiplier;
    }
    Ok(out)
}

