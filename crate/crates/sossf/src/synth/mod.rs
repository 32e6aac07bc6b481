//! Alternating SOS synthesis of compatible CBFs and a CLF.
//!
//! The bilinear program is split into linear SDPs: a certificate phase
//! searching the CLF and the barrier lifts with multipliers held fixed, and
//! a controller phase searching the rational controller, the margins and
//! the multipliers with the certificate held fixed. Initialization grows an
//! operating region from empty (large rho) until it covers the allowable
//! set (rho = 0); the main loop then maximizes the safe-set volume
//! surrogate.

mod estimate;
mod rows;

pub use estimate::{estimate_min_over_box, rho_sigma_bisection};
pub use rows::{searched_variable_counts, Phase, RowBuilder};

use crate::certificate::{CertMeta, DissipationSpec, SafetyCertificate};
use crate::model::PlantModel;
use crate::SfError;
use polyalg::{monomial_basis, ParityFilter, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soscomp::{solve, SolveOutcome, SolverConfig, SosProgram};
use std::collections::BTreeMap;

/// Polynomial degrees of the synthesis objects, plus derived multiplier and
/// identity degrees. Defaults follow the case study (V:4, B:4, p:3, s:2).
#[derive(Debug, Clone)]
pub struct DegreeConfig {
    pub v: u32,
    pub b: u32,
    pub p: u32,
    pub s: u32,
    pub lambda: u32,
    /// gamma_op on the CLF/CBF rows.
    pub g_op_dyn: u32,
    /// gamma_op on the legacy forward-invariance row.
    pub g_op_nom: u32,
    /// gamma_op on the containment rows.
    pub g_op_cont: u32,
    pub lam_b: u32,
    pub gam_b: u32,
    pub gam_v: u32,
    pub lam_v: u32,
    pub gam_vp: u32,
    pub r: u32,
    /// Identity degrees (even), shared by every phase.
    pub id_dyn: u32,
    pub id_nom: u32,
    pub id_cont: u32,
    pub id_inl: u32,
    pub id_inq: u32,
}

fn even_up(d: u32) -> u32 {
    d + d % 2
}

fn even_down(d: u32) -> u32 {
    d - d % 2
}

impl DegreeConfig {
    /// Derive all dependent degrees from the object degrees and the model.
    pub fn derive(model: &PlantModel, v: u32, b: u32, p: u32, s: u32) -> Self {
        let deg_f = model.f.iter().map(|q| q.total_degree()).max().unwrap_or(0);
        let deg_g = model
            .g
            .iter()
            .flatten()
            .map(|q| q.total_degree())
            .max()
            .unwrap_or(0);
        let deg_un = model.u_n.iter().map(|q| q.total_degree()).max().unwrap_or(0);
        let lambda = 0u32;

        let drive = (s + deg_f).max(deg_g + p);
        let t_cbf = (b - 1) + drive;
        let t_clf = ((v - 1) + drive).max(s + lambda + v);
        let t_nom = ((v - 1) + deg_f.max(deg_g + deg_un)).max(lambda + v);
        let id_dyn = even_up(t_cbf.max(t_clf));
        let id_nom = even_up(t_nom);

        let g_op_dyn = even_down(id_dyn.saturating_sub(2));
        let g_op_nom = even_down(id_nom.saturating_sub(2));
        let g_op_cont = even_up(b);
        let id_cont = even_up(b).max(g_op_cont + 2);
        let id_nom = id_nom.max(g_op_nom + 2);

        let t_inl = p.max(s);
        let id_inl = even_up(t_inl.max(b));
        let t_inq = (1 + p).max(1 + s + 1).max(s);
        let id_inq = even_up(t_inq.max(b).max(2 + 2));

        DegreeConfig {
            v,
            b,
            p,
            s,
            lambda,
            g_op_dyn,
            g_op_nom,
            g_op_cont,
            lam_b: id_dyn - b,
            gam_b: even_down(id_dyn - b),
            gam_v: even_down(id_dyn - v),
            lam_v: id_nom - v,
            gam_vp: even_down(id_cont - v).min(2),
            r: 2,
            id_dyn,
            id_nom,
            id_cont,
            id_inl,
            id_inq,
        }
    }

    pub fn table(&self) -> BTreeMap<String, u32> {
        let mut m = BTreeMap::new();
        m.insert("V".into(), self.v);
        m.insert("B".into(), self.b);
        m.insert("p".into(), self.p);
        m.insert("s".into(), self.s);
        m.insert("r".into(), self.r);
        m.insert("lam_b".into(), self.lam_b);
        m.insert("gam_b".into(), self.gam_b);
        m.insert("gam_v".into(), self.gam_v);
        m.insert("lam_v".into(), self.lam_v);
        m.insert("gam_vp".into(), self.gam_vp);
        m.insert("g_op_dyn".into(), self.g_op_dyn);
        m.insert("g_op_nom".into(), self.g_op_nom);
        m.insert("g_op_cont".into(), self.g_op_cont);
        m.insert("id_dyn".into(), self.id_dyn);
        m
    }
}

/// Tunables of the synthesis run.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub epsilon_s: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Upper bound forced on V(0).
    pub v_origin: f64,
    pub init_max_iters: usize,
    pub init_stall_iters: usize,
    pub main_max_iters: usize,
    /// Minimum number of main-loop iterations before the stop rule applies.
    pub main_min_iters: usize,
    /// Relative trace-increment stop tolerance.
    pub main_stop_tol: f64,
    pub solver: SolverConfig,
    /// Directory for infeasibility dumps.
    pub dump_dir: std::path::PathBuf,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 1,
            epsilon_s: 1e-4,
            delta_min: -1e3,
            delta_max: 1e3,
            v_origin: -0.1,
            init_max_iters: 60,
            init_stall_iters: 50,
            main_max_iters: 100,
            main_min_iters: 1,
            main_stop_tol: 1e-3,
            solver: SolverConfig::default(),
            dump_dir: std::env::temp_dir(),
        }
    }
}

/// Current values of every synthesis object; the half that a phase holds
/// fixed is read from here.
#[derive(Debug, Clone)]
pub struct SynthState {
    pub v: Polynomial,
    /// Barrier lifts: B_i = w_anchor(i) + sigma_i.
    pub sigma: Vec<Polynomial>,
    pub p: Vec<Polynomial>,
    pub s: Polynomial,
    pub mults: BTreeMap<String, Polynomial>,
    pub rho: f64,
    pub v0: f64,
    pub margins: Vec<f64>,
}

impl SynthState {
    /// Barrier index -> anchor generator index (identity unless tied).
    pub fn anchor_map(model: &PlantModel) -> Vec<usize> {
        let mut map: Vec<usize> = (0..model.t()).collect();
        for &(i, j) in &model.tie_barriers {
            let a = map[i.min(j)];
            map[i.max(j)] = a;
        }
        map
    }

    pub fn barriers(&self, model: &PlantModel) -> Vec<Polynomial> {
        let map = Self::anchor_map(model);
        (0..model.t())
            .map(|i| model.w[map[i]].add(&self.sigma[map[i]]).unwrap())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthReport {
    pub rho_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    pub init_iterations: usize,
    pub main_iterations: usize,
    pub sdp_variables: [usize; 4],
    pub margins: Vec<f64>,
}

/// Run the full synthesis: preflight, boot, initialization, main loop.
pub fn synthesize(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
) -> Result<(SafetyCertificate, SynthReport), SfError> {
    model.validate()?;
    let mut report = SynthReport::default();

    let rho_sigma = match model.rho_sigma {
        Some(r) => r,
        None => rho_sigma_bisection(&model.f_op, &opts.solver)?,
    };

    let mut state = seed_state(model, degrees, opts, rho_sigma);
    boot(model, degrees, opts, &mut state)?;
    let init_iters = init_procedure(model, degrees, opts, &mut state, &mut report)?;
    report.init_iterations = init_iters;
    main_loop(model, degrees, opts, &mut state, &mut report)?;
    report.sdp_variables = searched_variable_counts(model, degrees, opts, &state)?;
    report.margins = state.margins.clone();

    let cert = SafetyCertificate {
        v: state.v.clone(),
        b: state.barriers(model),
        p: state.p.clone(),
        s: state.s.clone(),
        dissipation: DissipationSpec {
            lambda: Polynomial::constant(model.varset.clone(), 1.0),
            v0: state.v0,
        },
        r: Vec::new(),
        multipliers: state.mults.clone(),
        degrees: degrees.table(),
        meta: CertMeta {
            seed: opts.seed,
            init_iterations: report.init_iterations,
            main_iterations: report.main_iterations,
            rho_history: report.rho_history.clone(),
            trace_history: report.trace_history.clone(),
            margins: report.margins.clone(),
            sdp_variables: report.sdp_variables,
            epsilon_s: opts.epsilon_s,
        },
    };
    Ok((cert, report))
}

/// Deterministic random seed values per Lemma-4-style initialization:
/// p coefficients uniform on [-1, 1] (scaled small), s = eps + small SOS.
pub fn seed_state(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
    rho_sigma: f64,
) -> SynthState {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vs = &model.varset;
    let p_basis = monomial_basis(model.n(), degrees.p, ParityFilter::All);
    let scale = 1e-3;
    let p: Vec<Polynomial> = (0..model.m())
        .map(|_| {
            Polynomial::from_terms(
                vs.clone(),
                p_basis
                    .iter()
                    .map(|m| (m.clone(), scale * rng.gen_range(-1.0..1.0)))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let s_basis = monomial_basis(model.n(), degrees.s / 2, ParityFilter::All);
    let mut s = Polynomial::constant(vs.clone(), opts.epsilon_s);
    for m in &s_basis {
        let c: f64 = rng.gen_range(0.0..1.0) * scale;
        let sq = Polynomial::from_terms(vs.clone(), [(m.clone(), c)]);
        s = s.add(&sq.mul(&sq).unwrap()).unwrap();
    }

    // V seed: average of the allowable generators (deg <= 2 <= v).
    let mut v = Polynomial::zero(vs.clone());
    for w in &model.w {
        v = v.add(w).unwrap();
    }
    let v = v.scale(1.0 / model.t() as f64);

    let sigma = vec![Polynomial::zero(vs.clone()); model.t()];
    let v_min = estimate_min_over_box(&v, &op_box(model), 200, opts.seed ^ 0x5eed);
    SynthState {
        v,
        sigma,
        p,
        s,
        mults: BTreeMap::new(),
        rho: rho_sigma + 1.0,
        v0: (-1.05 * v_min).max(1e-3),
        margins: Vec::new(),
    }
}

/// Axis bounds of the operating-region ellipsoid (used for sampling and
/// local minimization).
pub fn op_box(model: &PlantModel) -> Vec<f64> {
    let b = model.allowable_box();
    let n = model.n() as f64;
    b.iter().map(|&x| 1.1 * x.max(1e-9) * n.sqrt()).collect()
}

fn solve_phase(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
    state: &SynthState,
    phase: Phase,
) -> Result<SolveOutcome, SfError> {
    let prog = RowBuilder::build(model, degrees, opts, state, phase)?;
    let cp = prog.lower()?;
    solve_retry(&cp, &opts.solver)
}

/// Solve, retrying a stalled interior-point run once with relaxed solver
/// tolerances (the post-solve verification thresholds stay unchanged).
fn solve_retry(
    cp: &soscomp::ConicProblem,
    cfg: &SolverConfig,
) -> Result<SolveOutcome, SfError> {
    match solve(cp, cfg)? {
        SolveOutcome::Stalled(_) => {
            let mut relaxed = cfg.clone();
            relaxed.tol_gap = cfg.tol_gap.max(1e-7);
            relaxed.tol_feas = cfg.tol_feas.max(1e-7);
            relaxed.max_iter = cfg.max_iter * 2;
            Ok(solve(cp, &relaxed)?)
        }
        out => Ok(out),
    }
}

/// Apply a solved controller-phase program back onto the state.
fn absorb(
    prog: &SosProgram,
    sol: &soscomp::Solution,
    state: &mut SynthState,
    model: &PlantModel,
) -> Result<(), SfError> {
    for d in prog.decisions.iter() {
        if d.role == soscomp::DecisionRole::Residual {
            continue;
        }
        let name: &str = &d.name;
        let (poly, _) = prog.recover_by_name(sol, name)?;
        match name {
            "V" => state.v = poly,
            "s" => state.s = poly,
            _ if name.starts_with("sigma") => {
                let i: usize = name["sigma".len()..].parse().unwrap();
                state.sigma[i] = poly;
            }
            _ if name.starts_with("p") && name[1..].parse::<usize>().is_ok() => {
                let j: usize = name[1..].parse().unwrap();
                state.p[j] = poly;
            }
            _ if name.starts_with("Delta") => {
                let i: usize = name["Delta".len()..].parse().unwrap();
                if state.margins.len() <= i {
                    state.margins.resize(i + 1, 0.0);
                }
                state.margins[i] = poly.constant_term();
            }
            _ => {
                state.mults.insert(name.to_string(), poly);
            }
        }
    }
    let _ = model;
    Ok(())
}

fn update_v0(model: &PlantModel, opts: &SynthOptions, state: &mut SynthState) {
    let v_min = estimate_min_over_box(&state.v, &op_box(model), 200, opts.seed ^ 0xab5e_55ed);
    state.v0 = (-1.05 * v_min).max(1e-3);
}

/// First solve: controller phase at the seed certificate with the
/// operating-region multipliers as decisions (Lemma-4 style, with the
/// rational controller fixed at its random seed values).
fn boot(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
    state: &mut SynthState,
) -> Result<(), SfError> {
    for attempt in 0..6 {
        let prog = RowBuilder::build(model, degrees, opts, state, Phase::Boot)?;
        let cp = prog.lower()?;
        match solve_retry(&cp, &opts.solver)? {
            SolveOutcome::Feasible(sol) => {
                absorb(&prog, &sol, state, model)?;
                return Ok(());
            }
            out => {
                let status = match out {
                    SolveOutcome::Infeasible(c) => c.status,
                    SolveOutcome::Stalled(s) => s,
                    SolveOutcome::Feasible(_) => unreachable!(),
                };
                if attempt == 5 {
                    return Err(SfError::Model(format!(
                        "bootstrap multiplier search failed at rho = {} ({status})",
                        state.rho
                    )));
                }
                state.rho *= 4.0;
            }
        }
    }
    unreachable!()
}

/// Initialization: drive rho from rho_Sigma + 1 down to zero on an outer
/// schedule, alternating certificate and controller solves at each level.
/// Returns the number of iterations (certificate/controller pairs).
pub fn init_procedure(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
    state: &mut SynthState,
    report: &mut SynthReport,
) -> Result<usize, SfError> {
    let mut iters = 0usize;
    let mut since_progress = 0usize;
    let rho_floor = 0.02 * state.rho.max(1e-6);
    report.rho_history.push(state.rho);

    while state.rho > 0.0 {
        if iters >= opts.init_max_iters || since_progress >= opts.init_stall_iters {
            return Err(SfError::InitStalled {
                rho: state.rho,
                iters,
                history: report.rho_history.clone(),
            });
        }
        let target = if state.rho <= rho_floor {
            0.0
        } else {
            state.rho * 0.35
        };
        let trial = SynthState {
            rho: target,
            ..state.clone()
        };
        iters += 1;
        let cert_out = solve_phase(model, degrees, opts, &trial, Phase::InitCert)?;
        match cert_out {
            SolveOutcome::Feasible(sol) => {
                // program rebuilt deterministically to recover decisions
                let prog = RowBuilder::build(model, degrees, opts, &trial, Phase::InitCert)?;
                *state = trial;
                absorb(&prog, &sol, state, model)?;
                update_v0(model, opts, state);
                let ctrl_prog = RowBuilder::build(model, degrees, opts, state, Phase::InitCtrl)?;
                let cp = ctrl_prog.lower()?;
                match solve_retry(&cp, &opts.solver)? {
                    SolveOutcome::Feasible(sol2) => absorb(&ctrl_prog, &sol2, state, model)?,
                    out => {
                        let detail = match out {
                            SolveOutcome::Infeasible(c) => c.status,
                            SolveOutcome::Stalled(s) => s,
                            SolveOutcome::Feasible(_) => unreachable!(),
                        };
                        let dump = dump_problem(&opts.dump_dir, "init_ctrl", &cp);
                        return Err(SfError::AlternationBroken {
                            part: "init controller phase".to_string(),
                            iter: iters,
                            detail,
                            dump,
                        });
                    }
                }
                report.rho_history.push(state.rho);
                since_progress = 0;
            }
            _ => {
                // back off half-way toward the last feasible level
                let halfway = 0.5 * (state.rho + target);
                if (state.rho - halfway) / state.rho.max(1e-12) < 1e-3 {
                    since_progress += 1;
                } else {
                    let trial2 = SynthState {
                        rho: halfway,
                        ..state.clone()
                    };
                    match solve_phase(model, degrees, opts, &trial2, Phase::InitCert)? {
                        SolveOutcome::Feasible(sol) => {
                            let prog =
                                RowBuilder::build(model, degrees, opts, &trial2, Phase::InitCert)?;
                            *state = trial2;
                            absorb(&prog, &sol, state, model)?;
                            update_v0(model, opts, state);
                            let ctrl_prog =
                                RowBuilder::build(model, degrees, opts, state, Phase::InitCtrl)?;
                            let cp = ctrl_prog.lower()?;
                            if let SolveOutcome::Feasible(sol2) = solve_retry(&cp, &opts.solver)? {
                                absorb(&ctrl_prog, &sol2, state, model)?;
                            }
                            report.rho_history.push(state.rho);
                            since_progress = 0;
                        }
                        _ => {
                            since_progress += 1;
                            // refresh the controller at the current level
                            let ctrl_prog =
                                RowBuilder::build(model, degrees, opts, state, Phase::InitCtrl)?;
                            let cp = ctrl_prog.lower()?;
                            if let SolveOutcome::Feasible(sol2) = solve_retry(&cp, &opts.solver)? {
                                absorb(&ctrl_prog, &sol2, state, model)?;
                            }
                        }
                    }
                }
            }
        }
    }
    report.rho_history.push(0.0);
    Ok(iters)
}

/// Main loop: alternate volume-surrogate maximization (certificate phase)
/// with margin maximization (controller phase) until the trace increment
/// stalls. The trace objective sum_i tr(Q_{-B_i}) is non-decreasing across
/// accepted iterations.
pub fn main_loop(
    model: &PlantModel,
    degrees: &DegreeConfig,
    opts: &SynthOptions,
    state: &mut SynthState,
    report: &mut SynthReport,
) -> Result<usize, SfError> {
    let sigma_basis = monomial_basis(model.n(), degrees.b / 2, ParityFilter::All);
    let trace_const: f64 = {
        let map = SynthState::anchor_map(model);
        let mut anchors: Vec<usize> = map.clone();
        anchors.sort_unstable();
        anchors.dedup();
        anchors
            .iter()
            .map(|&i| {
                model.w[i]
                    .canonical_gram(&sigma_basis)
                    .map(|g| g.gram.trace())
                    .unwrap_or(0.0)
            })
            .sum()
    };

    let mut iters = 0usize;
    loop {
        if iters >= opts.main_max_iters {
            break;
        }
        iters += 1;
        let cert_prog = RowBuilder::build(model, degrees, opts, state, Phase::MainCert)?;
        let cp = cert_prog.lower()?;
        let sol = match solve_retry(&cp, &opts.solver)? {
            SolveOutcome::Feasible(s) => s,
            out => {
                let detail = match out {
                    SolveOutcome::Infeasible(c) => c.status,
                    SolveOutcome::Stalled(s) => s,
                    SolveOutcome::Feasible(_) => unreachable!(),
                };
                let dump = dump_problem(&opts.dump_dir, "main_cert", &cp);
                return Err(SfError::AlternationBroken {
                    part: "main certificate phase".to_string(),
                    iter: iters,
                    detail,
                    dump,
                });
            }
        };
        // objective is min sum tr(Q_sigma); report the volume surrogate
        let sigma_trace = sol.objective;
        let trace_obj = -(trace_const + sigma_trace);
        absorb(&cert_prog, &sol, state, model)?;
        update_v0(model, opts, state);

        let ctrl_prog = RowBuilder::build(model, degrees, opts, state, Phase::MainCtrl)?;
        let cp = ctrl_prog.lower()?;
        match solve_retry(&cp, &opts.solver)? {
            SolveOutcome::Feasible(sol2) => absorb(&ctrl_prog, &sol2, state, model)?,
            out => {
                let detail = match out {
                    SolveOutcome::Infeasible(c) => c.status,
                    SolveOutcome::Stalled(s) => s,
                    SolveOutcome::Feasible(_) => unreachable!(),
                };
                let dump = dump_problem(&opts.dump_dir, "main_ctrl", &cp);
                return Err(SfError::AlternationBroken {
                    part: "main controller phase".to_string(),
                    iter: iters,
                    detail,
                    dump,
                });
            }
        }

        let stop = if let Some(&prev) = report.trace_history.last() {
            let inc = trace_obj - prev;
            iters >= opts.main_min_iters && inc < opts.main_stop_tol * prev.abs().max(1.0)
        } else {
            false
        };
        report.trace_history.push(trace_obj);
        if stop {
            break;
        }
    }
    report.main_iterations = iters;
    Ok(iters)
}

fn dump_problem(dir: &std::path::Path, tag: &str, cp: &soscomp::ConicProblem) -> String {
    let path = dir.join(format!("sossf_{tag}_dump.txt"));
    let _ = std::fs::write(&path, cp.dump_triplets());
    path.display().to_string()
}

/// The objective expression used by the certificate phase: minimize the
/// total trace of the barrier-lift Grams.
pub(crate) fn sigma_trace_objective(
    prog: &SosProgram,
    model: &PlantModel,
) -> Result<soscomp::ScalarAffine, SfError> {
    let map = SynthState::anchor_map(model);
    let mut anchors: Vec<usize> = map;
    anchors.sort_unstable();
    anchors.dedup();
    let mut obj = soscomp::ScalarAffine::constant(0.0);
    for i in anchors {
        let d = prog.decision(prog.lookup(&format!("sigma{i}"))?);
        let g = d.basis.len();
        let mut k = 0usize;
        for j in 0..g {
            for ii in 0..=j {
                if ii == j {
                    obj = obj.plus(&soscomp::ScalarAffine::var(d.vars.start + k));
                }
                k += 1;
            }
        }
    }
    Ok(obj)
}
