use std::fmt::Write as _;
use std::ops::Range;

/// Sparse row-major linear system `A z (cmp) b`.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub labels: Vec<String>,
}

impl SparseRows {
    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64, label: String) {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn residual_inf(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let v: f64 = row.iter().map(|&(j, a)| a * z[j]).sum();
            worst = worst.max((v - b).abs());
        }
        worst
    }
}

/// PSD block: the variable range holds the upper triangle of a `dim x dim`
/// symmetric matrix in column-major order (j outer, i <= j).
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    pub vars: Range<usize>,
}

/// Second-order cone block over a contiguous variable range
/// (`z[0] >= ||z[1..]||`).
#[derive(Debug, Clone)]
pub struct SocBlock {
    pub name: String,
    pub vars: Range<usize>,
}

/// Lowered conic standard form:
/// minimize `c'z` subject to `A z = b`, `G z >= h`, PSD/SOC blocks on
/// variable ranges, remaining variables free.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub n_vars: usize,
    /// Minimization objective; `obj_sign` restores the user's sense.
    pub objective: Vec<f64>,
    pub obj_offset: f64,
    pub obj_sign: f64,
    pub eq: SparseRows,
    pub ineq: SparseRows,
    pub psd_blocks: Vec<PsdBlock>,
    pub soc_blocks: Vec<SocBlock>,
    /// Rows removed by preprocessing.
    pub dropped_eq_rows: usize,
    /// Set when preprocessing already proves the equality system infeasible.
    pub structurally_infeasible: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemStats {
    pub n_vars: usize,
    pub n_free_vars: usize,
    pub n_psd_vars: usize,
    pub eq_rows: usize,
    pub ineq_rows: usize,
    pub psd_block_dims: Vec<usize>,
    /// Sum of triangular elements over all PSD blocks.
    pub psd_triangle_total: usize,
}

impl ConicProblem {
    pub fn stats(&self) -> ProblemStats {
        let psd_block_dims: Vec<usize> = self.psd_blocks.iter().map(|b| b.dim).collect();
        let psd_triangle_total = psd_block_dims.iter().map(|d| d * (d + 1) / 2).sum();
        let n_psd_vars: usize = self.psd_blocks.iter().map(|b| b.vars.len()).sum();
        let n_soc: usize = self.soc_blocks.iter().map(|b| b.vars.len()).sum();
        ProblemStats {
            n_vars: self.n_vars,
            n_free_vars: self.n_vars - n_psd_vars - n_soc,
            n_psd_vars,
            eq_rows: self.eq.len(),
            ineq_rows: self.ineq.len(),
            psd_block_dims,
            psd_triangle_total,
        }
    }

    /// Debug dump in a sparse-triplet text format (`section row col value`),
    /// for cross-checking against external solvers.
    pub fn dump_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# conic problem: {} vars", self.n_vars);
        let _ = writeln!(out, "# objective (min)");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = writeln!(out, "c 0 {j} {c:.17e}");
            }
        }
        let _ = writeln!(out, "# equalities A z = b ({} rows)", self.eq.len());
        for (i, row) in self.eq.rows.iter().enumerate() {
            for &(j, a) in row {
                let _ = writeln!(out, "A {i} {j} {a:.17e}");
            }
            let _ = writeln!(out, "b {i} 0 {:.17e}", self.eq.rhs[i]);
        }
        let _ = writeln!(out, "# inequalities G z >= h ({} rows)", self.ineq.len());
        for (i, row) in self.ineq.rows.iter().enumerate() {
            for &(j, a) in row {
                let _ = writeln!(out, "G {i} {j} {a:.17e}");
            }
            let _ = writeln!(out, "h {i} 0 {:.17e}", self.ineq.rhs[i]);
        }
        for blk in &self.psd_blocks {
            let _ = writeln!(
                out,
                "psd {} {} {} # {}",
                blk.dim, blk.vars.start, blk.vars.end, blk.name
            );
        }
        for blk in &self.soc_blocks {
            let _ = writeln!(out, "soc {} {} # {}", blk.vars.start, blk.vars.end, blk.name);
        }
        out
    }
}
