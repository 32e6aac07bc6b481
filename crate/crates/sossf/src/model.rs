use crate::SfError;
use polyalg::{Polynomial, VarSet};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Linear input constraint set `{ u | A u <= b }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearInput {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Quadratic input constraint set `{ u | (u-u0)' Qu (u-u0) <= u_max^2 }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadInput {
    pub q: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    pub u_max: f64,
}

/// Polynomial control-affine plant `xdot = f(x) + G(x) u` together with the
/// allowable set, the legacy controller, input constraints and the
/// operating region used by the synthesis.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub varset: Arc<VarSet>,
    pub input_names: Vec<String>,
    pub f: Vec<Polynomial>,
    pub g: Vec<Vec<Polynomial>>,
    /// Allowable-set generators w_i; X_a is the intersection of their zero
    /// sublevel sets (each assumed compact).
    pub w: Vec<Polynomial>,
    pub u_n: Vec<Polynomial>,
    pub input_linear: Option<LinearInput>,
    pub input_quadratic: Option<QuadInput>,
    /// Operating region generator; X_op = { f_op <= 0 } must contain X_a.
    pub f_op: Polynomial,
    /// Constant making f_op + rho_sigma SOS; computed by bisection when
    /// absent (see Eq.-(56)-style preflight in the synthesis).
    pub rho_sigma: Option<f64>,
    /// Barrier indices forced to share one polynomial.
    pub tie_barriers: Vec<(usize, usize)>,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.varset.dim()
    }

    pub fn m(&self) -> usize {
        self.input_names.len()
    }

    pub fn t(&self) -> usize {
        self.w.len()
    }

    pub fn validate(&self) -> Result<(), SfError> {
        let (n, m) = (self.n(), self.m());
        if self.f.len() != n {
            return Err(SfError::Model(format!(
                "f has {} entries for {} states",
                self.f.len(),
                n
            )));
        }
        if self.g.len() != n || self.g.iter().any(|row| row.len() != m) {
            return Err(SfError::Model("G is not n x m".to_string()));
        }
        if self.u_n.len() != m {
            return Err(SfError::Model(format!(
                "legacy controller has {} entries for {} inputs",
                self.u_n.len(),
                m
            )));
        }
        if self.w.is_empty() {
            return Err(SfError::Model("no allowable-set generators".to_string()));
        }
        if let Some(lin) = &self.input_linear {
            if lin.a.len() != lin.b.len() || lin.a.iter().any(|r| r.len() != m) {
                return Err(SfError::Model("linear input constraint shape".to_string()));
            }
        }
        if let Some(q) = &self.input_quadratic {
            if q.q.len() != m || q.q.iter().any(|r| r.len() != m) || q.u0.len() != m {
                return Err(SfError::Model("quadratic input constraint shape".to_string()));
            }
            if q.u_max <= 0.0 {
                return Err(SfError::Model("u_max must be positive".to_string()));
            }
        }
        for (i, j) in &self.tie_barriers {
            if *i >= self.t() || *j >= self.t() {
                return Err(SfError::Model("tie_barriers index out of range".to_string()));
            }
        }
        Ok(())
    }

    /// `f(x) + G(x) u(x)` for a polynomial feedback u.
    pub fn closed_loop(&self, u: &[Polynomial]) -> Result<Vec<Polynomial>, SfError> {
        let mut out = Vec::with_capacity(self.n());
        for k in 0..self.n() {
            let mut e = self.f[k].clone();
            for (j, uj) in u.iter().enumerate() {
                e = e.add(&self.g[k][j].mul(uj)?)?;
            }
            out.push(e);
        }
        Ok(out)
    }

    /// Evaluate `f(x) + G(x) u` at a state with a numeric input vector.
    pub fn eval_dynamics(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SfError> {
        let mut dx = Vec::with_capacity(self.n());
        for k in 0..self.n() {
            let mut v = self.f[k].eval(x)?;
            for (j, &uj) in u.iter().enumerate() {
                v += self.g[k][j].eval(x)? * uj;
            }
            dx.push(v);
        }
        Ok(dx)
    }

    pub fn eval_legacy(&self, x: &[f64]) -> Result<Vec<f64>, SfError> {
        self.u_n
            .iter()
            .map(|p| p.eval(x).map_err(Into::into))
            .collect()
    }

    /// Is the state inside the allowable set (all w_i <= tol)?
    pub fn in_allowable(&self, x: &[f64], tol: f64) -> bool {
        self.w
            .iter()
            .all(|wi| wi.eval(x).map(|v| v <= tol).unwrap_or(false))
    }

    /// Axis-aligned bounding half-widths of X_a, by per-coordinate scan.
    pub fn allowable_box(&self) -> Vec<f64> {
        let n = self.n();
        let mut box_ = vec![0.0f64; n];
        for j in 0..n {
            for dir in [-1.0f64, 1.0] {
                // largest |t| with x = t*dir*e_j inside every w_i
                let mut lo = 0.0f64;
                let mut hi = 1e-6f64;
                let inside = |t: f64, self_: &Self| {
                    let mut x = vec![0.0; n];
                    x[j] = t * dir;
                    self_.in_allowable(&x, 0.0)
                };
                while hi < 1e6 && inside(hi, self) {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if inside(mid, self) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                box_[j] = box_[j].max(lo);
            }
        }
        box_
    }
}

/// Operating-region generator: axis-aligned ellipsoid enclosing the given
/// box with a margin factor. `sum_j (x_j / (margin * b_j))^2 - 1`.
pub fn ellipsoidal_operating_region(
    varset: &Arc<VarSet>,
    box_: &[f64],
    margin: f64,
) -> Polynomial {
    let n = varset.dim();
    let mut p = Polynomial::constant(varset.clone(), -1.0);
    for j in 0..n {
        let xj = Polynomial::var(varset.clone(), j);
        let r = margin * box_[j].max(1e-9) * (n as f64).sqrt();
        p = p.add(&xj.mul(&xj).unwrap().scale(1.0 / (r * r))).unwrap();
    }
    p
}

/// Nominal parameters of the ac/dc converter case study (per unit).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConverterParams {
    pub l: f64,
    pub c_dc: f64,
    pub g_dc: f64,
    pub omega_n: f64,
    pub i_q_ref: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        ConverterParams {
            l: 0.01,
            c_dc: 0.02,
            g_dc: 0.001,
            omega_n: 2.0 * std::f64::consts::PI * 50.0,
            i_q_ref: 0.0,
        }
    }
}

/// Which converter variant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConverterVariant {
    /// 3-state error model at a fixed quadrature current reference.
    FixedRef,
    /// 4-state model with the reference integrated as a state
    /// (i_q_ref-dot = 0).
    RefState,
}

// Error-coordinate converter matrices. The zero-reference equilibrium family
// is x*(r) = [1, -g_dc, r], u*(r) = [1 - wl_eff r, -wl_eff g_dc] with
// wl_eff = 314/1710 fixed by the v-m coupling of G.
const F_V: [f64; 3] = [-0.05, -57.9, 0.00919];
const F_ID: [f64; 2] = [1710.0, 314.0]; // vdc, iq
const F_IQ: [f64; 2] = [-0.271, -314.0]; // vdc, id
const G_VV: f64 = 0.05;
const G_VID: f64 = -57.9;
const G_I: f64 = 1710.0;
const WL_EFF: f64 = F_ID[1] / G_I;

fn var(vs: &Arc<VarSet>, i: usize) -> Polynomial {
    Polynomial::var(vs.clone(), i)
}

fn cnst(vs: &Arc<VarSet>, c: f64) -> Polynomial {
    Polynomial::constant(vs.clone(), c)
}

/// Scaled shifted square ((x_i + off) / s)^2 as a polynomial.
fn sq_scaled(vs: &Arc<VarSet>, i: usize, off: f64, s: f64) -> Polynomial {
    let shifted = var(vs, i).add(&cnst(vs, off)).unwrap().scale(1.0 / s);
    shifted.mul(&shifted).unwrap()
}

/// Build the converter plant in error coordinates.
pub fn build_converter_model(params: &ConverterParams, variant: ConverterVariant) -> PlantModel {
    match variant {
        ConverterVariant::FixedRef => converter_3state(params),
        ConverterVariant::RefState => converter_4state(params),
    }
}

fn converter_3state(params: &ConverterParams) -> PlantModel {
    let vs = VarSet::new(vec!["vdc", "id", "iq"]);
    let (v, id, iq) = (var(&vs, 0), var(&vs, 1), var(&vs, 2));

    let f = vec![
        v.scale(F_V[0])
            .add(&id.scale(F_V[1]))
            .unwrap()
            .add(&iq.scale(F_V[2]))
            .unwrap(),
        v.scale(F_ID[0]).add(&iq.scale(F_ID[1])).unwrap(),
        v.scale(F_IQ[0]).add(&id.scale(F_IQ[1])).unwrap(),
    ];
    let g = vec![
        vec![
            cnst(&vs, G_VV).add(&id.scale(G_VID)).unwrap(),
            iq.scale(G_VID),
        ],
        vec![cnst(&vs, G_I).add(&v.scale(G_I)).unwrap(), cnst(&vs, 0.0)],
        vec![cnst(&vs, 0.0), cnst(&vs, G_I).add(&v.scale(G_I)).unwrap()],
    ];
    let w1 = sq_scaled(&vs, 0, 0.3, 0.5)
        .add(&sq_scaled(&vs, 1, 0.0, 20.0))
        .unwrap()
        .add(&sq_scaled(&vs, 2, 0.0, 20.0))
        .unwrap()
        .add(&cnst(&vs, -1.0))
        .unwrap();
    let w2 = sq_scaled(&vs, 0, 0.0, 20.0)
        .add(&sq_scaled(&vs, 1, 0.0, 1.3))
        .unwrap()
        .add(&sq_scaled(&vs, 2, 0.0, 1.3))
        .unwrap()
        .add(&cnst(&vs, -1.0))
        .unwrap();
    let u_n = vec![
        v.scale(0.1).add(&id.scale(-1.0)).unwrap(),
        cnst(&vs, params.i_q_ref).add(&iq.scale(-1.0)).unwrap(),
    ];

    let mut model = PlantModel {
        varset: vs,
        input_names: vec!["md".to_string(), "mq".to_string()],
        f,
        g,
        w: vec![w1, w2],
        u_n,
        input_linear: None,
        input_quadratic: Some(QuadInput {
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            u0: vec![0.0, 0.0],
            u_max: 1.3f64.sqrt(),
        }),
        f_op: Polynomial::zero(VarSet::new(vec!["vdc", "id", "iq"])),
        rho_sigma: None,
        tie_barriers: Vec::new(),
    };
    let box_ = model.allowable_box();
    model.f_op = ellipsoidal_operating_region(&model.varset, &box_, 1.1);
    model
}

fn converter_4state(params: &ConverterParams) -> PlantModel {
    let base = converter_3state(params);
    let vs = VarSet::new(vec!["vdc", "id", "iq", "iqref"]);
    let embed = |p: &Polynomial| p.embed(&vs).unwrap();

    // shift the quadrature-current error by the reference state:
    // absolute coordinates sit at the equilibrium family x*(iqref)
    let iq_plus_ref = var(&vs, 2).add(&var(&vs, 3)).unwrap();
    let shift = |p: &Polynomial| embed(p).substitute(2, &iq_plus_ref).unwrap();

    let g3: Vec<Vec<Polynomial>> = base
        .g
        .iter()
        .map(|row| row.iter().map(&shift).collect())
        .collect();
    let f3: Vec<Polynomial> = base.f.iter().map(&shift).collect();

    // input shift of the equilibrium family: du*(x4) = [-wl_eff x4, 0]
    let du1 = var(&vs, 3).scale(-WL_EFF);
    let mut f = Vec::with_capacity(4);
    for k in 0..3 {
        f.push(f3[k].add(&g3[k][0].mul(&du1).unwrap()).unwrap());
    }
    f.push(cnst(&vs, 0.0)); // iqref-dot = 0

    // The x4 coefficient of the first row is a printed-coefficient rounding
    // residue (~1.7e-5); the equilibrium family zeroes it exactly.
    let x4_mono = polyalg::Monomial::new(vec![0, 0, 0, 1]);
    let residue = f[0].coefficient(&x4_mono);
    f[0] = f[0]
        .add(&Polynomial::from_terms(vs.clone(), [(x4_mono, -residue)]))
        .unwrap();

    let mut g: Vec<Vec<Polynomial>> = g3;
    g.push(vec![cnst(&vs, 0.0), cnst(&vs, 0.0)]);

    let w1 = sq_scaled(&vs, 0, 0.3, 0.5)
        .add(&sq_scaled(&vs, 1, 0.0, 20.0))
        .unwrap()
        .add(&sq_scaled(&vs, 2, 0.0, 20.0))
        .unwrap()
        .add(&sq_scaled(&vs, 3, 0.0, 20.0))
        .unwrap()
        .add(&cnst(&vs, -1.0))
        .unwrap();
    let w2 = sq_scaled(&vs, 0, 0.0, 20.0)
        .add(&sq_scaled(&vs, 1, 0.0, 1.3))
        .unwrap()
        .add(&sq_scaled(&vs, 2, 0.0, 1.3))
        .unwrap()
        .add(&sq_scaled(&vs, 3, 0.0, 20.0))
        .unwrap()
        .add(&cnst(&vs, -1.0))
        .unwrap();
    let u_n = vec![
        var(&vs, 0).scale(0.1).add(&var(&vs, 1).scale(-1.0)).unwrap(),
        var(&vs, 3).add(&var(&vs, 2).scale(-1.0)).unwrap(),
    ];

    let mut model = PlantModel {
        varset: vs.clone(),
        input_names: base.input_names,
        f,
        g,
        w: vec![w1, w2],
        u_n,
        input_linear: None,
        input_quadratic: base.input_quadratic,
        f_op: Polynomial::zero(vs),
        rho_sigma: None,
        tie_barriers: Vec::new(),
    };
    let box_ = model.allowable_box();
    model.f_op = ellipsoidal_operating_region(&model.varset, &box_, 1.1);
    model
}

/// 1-D toy plant: xdot = u, allowable set [-1, 1], legacy u_n = -x.
pub fn toy_1d() -> PlantModel {
    let vs = VarSet::new(vec!["x"]);
    let x = var(&vs, 0);
    let w = x.mul(&x).unwrap().add(&cnst(&vs, -1.0)).unwrap();
    let mut model = PlantModel {
        varset: vs.clone(),
        input_names: vec!["u".to_string()],
        f: vec![cnst(&vs, 0.0)],
        g: vec![vec![cnst(&vs, 1.0)]],
        w: vec![w],
        u_n: vec![x.scale(-1.0)],
        input_linear: None,
        input_quadratic: None,
        f_op: Polynomial::zero(vs),
        rho_sigma: None,
        tie_barriers: Vec::new(),
    };
    let box_ = model.allowable_box();
    model.f_op = ellipsoidal_operating_region(&model.varset, &box_, 1.1);
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converter_3state_equilibrium_at_origin() {
        let m = converter_3state(&ConverterParams::default());
        m.validate().unwrap();
        for fk in &m.f {
            assert_eq!(fk.eval(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn converter_g_at_origin_matches_printed_matrix() {
        let m = converter_3state(&ConverterParams::default());
        let origin = [0.0, 0.0, 0.0];
        let g00 = m.g[0][0].eval(&origin).unwrap();
        let g10 = m.g[1][0].eval(&origin).unwrap();
        let g21 = m.g[2][1].eval(&origin).unwrap();
        let g01 = m.g[0][1].eval(&origin).unwrap();
        assert!((g00 - 0.05).abs() < 1e-12);
        assert!((g10 - 1710.0).abs() < 1e-12);
        assert!((g21 - 1710.0).abs() < 1e-12);
        assert_eq!(g01, 0.0);
    }

    #[test]
    fn converter_w2_at_origin_is_minus_one() {
        let m = converter_3state(&ConverterParams::default());
        assert!((m.w[1].eval(&[0.0; 3]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn converter_4state_equilibrium_holds_for_any_reference() {
        let m = converter_4state(&ConverterParams::default());
        m.validate().unwrap();
        for r in [-1.0, -0.25, 0.0, 0.5, 1.0] {
            let x = [0.0, 0.0, 0.0, r];
            for fk in &m.f {
                let v = fk.eval(&x).unwrap();
                assert!(
                    v.abs() < 1e-9,
                    "f not zero on the equilibrium family: {v} at r={r}"
                );
            }
        }
    }

    #[test]
    fn operating_region_contains_allowable_samples() {
        let m = converter_3state(&ConverterParams::default());
        // corners of the allowable box must satisfy f_op <= 0
        let b = m.allowable_box();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let x = [sx * b[0], sy * b[1], sz * b[2]];
                    assert!(m.f_op.eval(&x).unwrap() <= 0.0);
                }
            }
        }
    }

    #[test]
    fn toy_model_sane() {
        let m = toy_1d();
        m.validate().unwrap();
        assert_eq!(m.n(), 1);
        assert!(m.in_allowable(&[0.99], 0.0));
        assert!(!m.in_allowable(&[1.01], 0.0));
    }
}
