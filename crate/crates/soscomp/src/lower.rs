use crate::conic::{PsdBlock, SparseRows};
use crate::{ConicProblem, DecisionKind, Sense, SosError, SosProgram};
use polyalg::Monomial;
use std::collections::BTreeMap;

impl SosProgram {
    /// Lower the program to conic standard form. Deterministic: identical
    /// programs produce identical matrices.
    pub fn lower(&self) -> Result<ConicProblem, SosError> {
        if self.decisions.is_empty() {
            return Err(SosError::EmptyProgram);
        }
        let n = self.num_vars();

        let mut eq = SparseRows::default();
        for (mi, mem) in self.memberships.iter().enumerate() {
            // identity: target - sum(products) - gamma0 = 0
            let mut expr = mem.target.clone();
            for p in &mem.products {
                expr = expr.sub(p)?;
            }
            expr = expr.sub(&self.expr(mem.residual))?;

            // union support -> one equality row per monomial
            let mut support: BTreeMap<Monomial, Vec<(usize, f64)>> = BTreeMap::new();
            for (m, c) in expr.constant.terms() {
                support.entry(m.clone()).or_default();
                let _ = c;
            }
            for (&v, p) in &expr.linear {
                for (m, c) in p.terms() {
                    support.entry(m.clone()).or_default().push((v, c));
                }
            }
            for (m, mut row) in support {
                row.sort_by_key(|t| t.0);
                // merge duplicate variable entries
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (v, c) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == v => last.1 += c,
                        _ => merged.push((v, c)),
                    }
                }
                merged.retain(|t| t.1 != 0.0);
                let rhs = -expr.constant.coefficient(&m);
                eq.push(
                    merged,
                    rhs,
                    format!("{}[{}]/{:?}", mem.label, mi, m.exponents),
                );
            }
        }
        for (label, a) in &self.scalar_eqs {
            eq.push(a.terms.clone(), -a.constant, label.clone());
        }

        let mut ineq = SparseRows::default();
        for (label, a) in &self.scalar_ineqs {
            // affine >= 0  <=>  terms·z >= -constant
            ineq.push(a.terms.clone(), -a.constant, label.clone());
        }

        let mut psd_blocks = Vec::new();
        for d in &self.decisions {
            if d.kind == DecisionKind::Sos {
                psd_blocks.push(PsdBlock {
                    name: d.name.to_string(),
                    dim: d.basis.len(),
                    vars: d.vars.clone(),
                });
            }
        }

        let mut objective = vec![0.0; n];
        let mut obj_sign = 1.0;
        let mut obj_offset = 0.0;
        if let Some(obj) = &self.objective {
            obj_sign = match obj.sense {
                Sense::Minimize => 1.0,
                Sense::Maximize => -1.0,
            };
            for &(v, c) in &obj.linear.terms {
                objective[v] += obj_sign * c;
            }
            obj_offset = obj.linear.constant;
        }

        let mut cp = ConicProblem {
            n_vars: n,
            objective,
            obj_offset,
            obj_sign,
            eq,
            ineq,
            psd_blocks,
            soc_blocks: Vec::new(),
            dropped_eq_rows: 0,
            structurally_infeasible: None,
        };
        preprocess_equalities(&mut cp);
        Ok(cp)
    }
}

/// Drop exact-duplicate and zero equality rows. A zero row with nonzero
/// right-hand side marks the problem structurally infeasible. For small
/// systems a rank-revealing QR pass additionally removes linearly dependent
/// rows (with a consistency check on the dropped right-hand sides).
fn preprocess_equalities(cp: &mut ConicProblem) {
    let mut seen: BTreeMap<Vec<(usize, u64)>, usize> = BTreeMap::new();
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..cp.eq.len() {
        let row = &cp.eq.rows[i];
        let rhs = cp.eq.rhs[i];
        if row.is_empty() {
            if rhs.abs() > 1e-12 {
                cp.structurally_infeasible = Some(format!(
                    "equality row {} ({}) reduces to 0 = {rhs:.3e}",
                    i, cp.eq.labels[i]
                ));
            }
            continue;
        }
        // scale-normalized bit pattern key
        let norm = row.iter().map(|t| t.1.abs()).fold(0.0f64, f64::max);
        let key: Vec<(usize, u64)> = row
            .iter()
            .map(|&(v, c)| (v, (c / norm).to_bits()))
            .chain(std::iter::once((usize::MAX, (rhs / norm).to_bits())))
            .collect();
        if seen.insert(key, i).is_none() {
            keep.push(i);
        }
    }
    let dropped = cp.eq.len() - keep.len();
    if dropped > 0 {
        let mut rows = Vec::with_capacity(keep.len());
        let mut rhs = Vec::with_capacity(keep.len());
        let mut labels = Vec::with_capacity(keep.len());
        for &i in &keep {
            rows.push(std::mem::take(&mut cp.eq.rows[i]));
            rhs.push(cp.eq.rhs[i]);
            labels.push(std::mem::take(&mut cp.eq.labels[i]));
        }
        cp.eq = SparseRows { rows, rhs, labels };
    }
    cp.dropped_eq_rows = dropped;

    // Rank-revealing pass for small systems, via pivoted Cholesky on the
    // row Gram matrix at tolerance 1e-10 (equivalent to column-pivoted QR
    // on A^T). Larger systems rely on solver regularization.
    let m = cp.eq.len();
    if m == 0 || m > 400 {
        return;
    }
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let d = sparse_dot(&cp.eq.rows[i], &cp.eq.rows[j]);
            gram[(i, j)] = d;
            gram[(j, i)] = d;
        }
    }
    let (pivots, rank) = pivoted_cholesky_rank(&gram, 1e-10);
    if rank == m {
        return;
    }
    // consistency: rank([A | b]) must equal rank(A)
    let mut gram_aug = gram.clone();
    for i in 0..m {
        for j in 0..m {
            gram_aug[(i, j)] += cp.eq.rhs[i] * cp.eq.rhs[j];
        }
    }
    let (_, rank_aug) = pivoted_cholesky_rank(&gram_aug, 1e-10);
    if rank_aug > rank {
        cp.structurally_infeasible = Some("equality system is rank-inconsistent".to_string());
        return;
    }
    let mut keep_idx: Vec<usize> = pivots[..rank].to_vec();
    keep_idx.sort_unstable();
    let mut rows = Vec::with_capacity(rank);
    let mut rhs = Vec::with_capacity(rank);
    let mut labels = Vec::with_capacity(rank);
    for &i in &keep_idx {
        rows.push(std::mem::take(&mut cp.eq.rows[i]));
        rhs.push(cp.eq.rhs[i]);
        labels.push(std::mem::take(&mut cp.eq.labels[i]));
    }
    cp.dropped_eq_rows += m - rank;
    cp.eq = SparseRows { rows, rhs, labels };
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let mut s = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Pivoted Cholesky of a PSD matrix; returns the pivot order and numerical
/// rank at the given relative tolerance.
fn pivoted_cholesky_rank(g: &nalgebra::DMatrix<f64>, rel_tol: f64) -> (Vec<usize>, usize) {
    let m = g.nrows();
    let mut work = g.clone();
    let mut piv: Vec<usize> = (0..m).collect();
    let scale = (0..m).map(|i| g[(i, i)]).fold(1.0f64, f64::max);
    let tol = rel_tol * rel_tol * scale;
    let mut rank = 0;
    for k in 0..m {
        // choose pivot with max remaining diagonal
        let (best, best_val) = (k..m)
            .map(|i| (i, work[(i, i)]))
            .fold((k, f64::NEG_INFINITY), |acc, cur| {
                if cur.1 > acc.1 {
                    cur
                } else {
                    acc
                }
            });
        if best_val <= tol {
            break;
        }
        work.swap_rows(k, best);
        work.swap_columns(k, best);
        piv.swap(k, best);
        let d = work[(k, k)].sqrt();
        for i in (k + 1)..m {
            work[(i, k)] /= d;
        }
        work[(k, k)] = d;
        for j in (k + 1)..m {
            for i in j..m {
                let v = work[(i, k)] * work[(j, k)];
                work[(i, j)] -= v;
                if i != j {
                    work[(j, i)] -= v;
                }
            }
        }
        rank += 1;
    }
    (piv, rank)
}
