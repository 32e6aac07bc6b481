use crate::{ConicProblem, DecisionId, DecisionKind, SosError, SosProgram};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use polyalg::{GramForm, Polynomial};

/// Narrow interface to the external conic solver: matrices in, vector out.
/// Any PSD+SOC-capable solver can back this; the build uses Clarabel.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iter: u32,
    pub tol_gap: f64,
    pub tol_feas: f64,
    /// Post-solve verification: max allowed ||Az - b||_inf.
    pub residual_tol: f64,
    /// Post-solve verification: min allowed Gram eigenvalue.
    pub psd_tol: f64,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 200,
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            residual_tol: 1e-6,
            psd_tol: 1e-7,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: Vec<f64>,
    /// Objective in the user's sense (max problems are reported as max).
    pub objective: f64,
    pub status: String,
    pub eq_residual: f64,
    pub min_gram_eig: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone)]
pub struct InfeasibleCert {
    pub status: String,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Feasible(Solution),
    Infeasible(InfeasibleCert),
    /// The interior-point iteration stopped without a certificate either
    /// way (typical for feasibility problems whose solution set has empty
    /// interior). Callers decide whether to retry, relax or treat as
    /// infeasible.
    Stalled(String),
}

impl SolveOutcome {
    pub fn feasible(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Feasible(s) => Some(s),
            _ => None,
        }
    }

    pub fn expect_feasible(self, what: &str) -> Result<Solution, SosError> {
        match self {
            SolveOutcome::Feasible(s) => Ok(s),
            SolveOutcome::Infeasible(c) => Err(SosError::SolverFailure(format!(
                "{what}: reported infeasible ({})",
                c.status
            ))),
            SolveOutcome::Stalled(status) => Err(SosError::SolverFailure(format!(
                "{what}: solver stalled ({status})"
            ))),
        }
    }
}

/// Solve a lowered conic problem. Feasibility of a returned solution is
/// re-verified against the equality residual and cone membership.
pub fn solve(cp: &ConicProblem, cfg: &SolverConfig) -> Result<SolveOutcome, SosError> {
    if let Some(reason) = &cp.structurally_infeasible {
        return Ok(SolveOutcome::Infeasible(InfeasibleCert {
            status: format!("structural: {reason}"),
        }));
    }
    let n = cp.n_vars;

    // Constraint rows: [equalities (Zero); inequalities (Nonneg, as -Gz+s=-h);
    // PSD blocks (svec rows); SOC blocks].
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut row = 0usize;

    if !cp.eq.is_empty() {
        for (r, cols) in cp.eq.rows.iter().enumerate() {
            for &(j, a) in cols {
                trips.push((row, j, a));
            }
            rhs.push(cp.eq.rhs[r]);
            row += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(cp.eq.len()));
    }
    if !cp.ineq.is_empty() {
        // G z >= h  ->  s = G z - h >= 0  ->  (-G) z + s = -h
        for (r, cols) in cp.ineq.rows.iter().enumerate() {
            for &(j, a) in cols {
                trips.push((row, j, -a));
            }
            rhs.push(-cp.ineq.rhs[r]);
            row += 1;
        }
        cones.push(SupportedConeT::NonnegativeConeT(cp.ineq.len()));
    }
    let sqrt2 = 2.0f64.sqrt();
    for blk in &cp.psd_blocks {
        let d = blk.dim;
        let mut k = 0usize;
        for j in 0..d {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { sqrt2 };
                trips.push((row, blk.vars.start + k, -scale));
                rhs.push(0.0);
                row += 1;
                k += 1;
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(d));
    }
    for blk in &cp.soc_blocks {
        for (k, j) in blk.vars.clone().enumerate() {
            trips.push((row + k, j, -1.0));
            rhs.push(0.0);
        }
        row += blk.vars.len();
        cones.push(SupportedConeT::SecondOrderConeT(blk.vars.len()));
    }

    let a = csc_from_triplets(row, n, &trips);
    let p = CscMatrix::<f64>::zeros((n, n));

    let settings = DefaultSettingsBuilder::default()
        .verbose(cfg.verbose)
        .max_iter(cfg.max_iter)
        .tol_gap_abs(cfg.tol_gap)
        .tol_gap_rel(cfg.tol_gap)
        .tol_feas(cfg.tol_feas)
        .build()
        .map_err(|e| SosError::SolverFailure(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &cp.objective, &a, &rhs, &cones, settings)
        .map_err(|e| SosError::SolverFailure(format!("setup: {e:?}")))?;
    solver.solve();

    let status = solver.solution.status;
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Ok(SolveOutcome::Infeasible(InfeasibleCert {
                status: format!("{status:?}"),
            }));
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(SosError::SolverFailure(
                "objective unbounded (dual infeasible)".to_string(),
            ));
        }
        SolverStatus::InsufficientProgress
        | SolverStatus::MaxIterations
        | SolverStatus::MaxTime
        | SolverStatus::NumericalError => {
            return Ok(SolveOutcome::Stalled(format!("{status:?}")));
        }
        other => {
            return Err(SosError::SolverFailure(format!(
                "solver stopped with status {other:?}"
            )));
        }
    }

    let z = solver.solution.x.clone();
    let eq_residual = cp.eq.residual_inf(&z);
    if eq_residual > cfg.residual_tol {
        return Err(SosError::UnverifiedSolution {
            what: "equality".to_string(),
            got: eq_residual,
            tol: cfg.residual_tol,
        });
    }
    let mut min_eig = f64::INFINITY;
    for blk in &cp.psd_blocks {
        let e = gram_min_eig(&z[blk.vars.clone()], blk.dim);
        min_eig = min_eig.min(e);
        if e < -cfg.psd_tol {
            return Err(SosError::UnverifiedSolution {
                what: format!("PSD block {}", blk.name),
                got: e,
                tol: cfg.psd_tol,
            });
        }
    }
    for (r, cols) in cp.ineq.rows.iter().enumerate() {
        let v: f64 = cols.iter().map(|&(j, a)| a * z[j]).sum();
        if v - cp.ineq.rhs[r] < -cfg.residual_tol {
            return Err(SosError::UnverifiedSolution {
                what: format!("inequality {}", cp.ineq.labels[r]),
                got: v - cp.ineq.rhs[r],
                tol: cfg.residual_tol,
            });
        }
    }

    let obj_internal: f64 = cp
        .objective
        .iter()
        .zip(&z)
        .map(|(c, zj)| c * zj)
        .sum::<f64>();
    let objective = cp.obj_sign * obj_internal + cp.obj_offset;

    Ok(SolveOutcome::Feasible(Solution {
        z,
        objective,
        status: format!("{status:?}"),
        eq_residual,
        min_gram_eig: if min_eig.is_finite() { min_eig } else { 0.0 },
        iterations: solver.solution.iterations,
    }))
}

fn csc_from_triplets(m: usize, n: usize, trips: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(r, c, v) in trips {
        by_col[c].push((r, v));
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::with_capacity(trips.len());
    let mut nzval = Vec::with_capacity(trips.len());
    colptr.push(0);
    for col in &mut by_col {
        col.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for &(r, v) in col.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => merged.push((r, v)),
            }
        }
        for (r, v) in merged {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

fn gram_min_eig(tri: &[f64], dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut q = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for j in 0..dim {
        for i in 0..=j {
            q[(i, j)] = tri[k];
            q[(j, i)] = tri[k];
            k += 1;
        }
    }
    q.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

impl SosProgram {
    /// Reconstruct a decision's polynomial (and Gram form, when SOS-kind)
    /// from a solution vector. Output is chopped at 1e-9.
    pub fn recover_poly(
        &self,
        sol: &Solution,
        id: DecisionId,
    ) -> Result<(Polynomial, Option<GramForm>), SosError> {
        let d = self.decision(id);
        match d.kind {
            DecisionKind::Free => {
                let p = Polynomial::from_terms(
                    d.varset.clone(),
                    d.basis
                        .iter()
                        .enumerate()
                        .map(|(k, m)| (m.clone(), sol.z[d.vars.start + k]))
                        .collect::<Vec<_>>(),
                );
                Ok((p.chop(polyalg::CHOP_TOL), None))
            }
            DecisionKind::Sos => {
                let n = d.basis.len();
                let mut q = DMatrix::zeros(n, n);
                let mut k = 0;
                for j in 0..n {
                    for i in 0..=j {
                        let v = sol.z[d.vars.start + k];
                        q[(i, j)] = v;
                        q[(j, i)] = v;
                        k += 1;
                    }
                }
                let gram = GramForm::new(d.varset.clone(), d.basis.clone(), q)?;
                Ok((gram.expand().chop(polyalg::CHOP_TOL), Some(gram)))
            }
        }
    }

    pub fn recover_by_name(
        &self,
        sol: &Solution,
        name: &str,
    ) -> Result<(Polynomial, Option<GramForm>), SosError> {
        self.recover_poly(sol, self.lookup(name)?)
    }
}
