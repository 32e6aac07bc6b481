use crate::SosError;
use polyalg::{Polynomial, VarSet};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Polynomial expression affine in scalar decision variables:
/// `constant(x) + sum_k z_k * coef_k(x)`.
#[derive(Debug, Clone)]
pub struct PolyExpr {
    pub constant: Polynomial,
    pub linear: BTreeMap<usize, Polynomial>,
    /// Names of the decisions contributing to `linear`, for diagnostics.
    pub sources: Vec<Arc<str>>,
}

impl PolyExpr {
    pub fn from_poly(p: Polynomial) -> Self {
        PolyExpr {
            constant: p,
            linear: BTreeMap::new(),
            sources: Vec::new(),
        }
    }

    pub fn zero(varset: Arc<VarSet>) -> Self {
        PolyExpr::from_poly(Polynomial::zero(varset))
    }

    pub fn varset(&self) -> &Arc<VarSet> {
        self.constant.varset()
    }

    pub fn has_decisions(&self) -> bool {
        !self.linear.is_empty()
    }

    fn merge_sources(&mut self, other: &PolyExpr) {
        for s in &other.sources {
            if !self.sources.iter().any(|t| t == s) {
                self.sources.push(s.clone());
            }
        }
    }

    fn describe_sources(&self) -> String {
        if self.sources.is_empty() {
            "<fixed>".to_string()
        } else {
            self.sources
                .iter()
                .map(|s| s.as_ref())
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    pub fn add(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        let mut out = self.clone();
        out.constant = out.constant.add(&other.constant)?;
        for (&v, p) in &other.linear {
            match out.linear.get_mut(&v) {
                Some(q) => *q = q.add(p)?,
                None => {
                    out.linear.insert(v, p.clone());
                }
            }
        }
        out.merge_sources(other);
        Ok(out)
    }

    pub fn sub(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> PolyExpr {
        PolyExpr {
            constant: self.constant.scale(a),
            linear: self
                .linear
                .iter()
                .map(|(&v, p)| (v, p.scale(a)))
                .collect(),
            sources: self.sources.clone(),
        }
    }

    pub fn neg(&self) -> PolyExpr {
        self.scale(-1.0)
    }

    /// Multiply by a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<PolyExpr, SosError> {
        Ok(PolyExpr {
            constant: self.constant.mul(p)?,
            linear: self
                .linear
                .iter()
                .map(|(&v, q)| Ok((v, q.mul(p)?)))
                .collect::<Result<_, polyalg::PolyError>>()?,
            sources: self.sources.clone(),
        })
    }

    /// Product of two expressions. At most one side may carry decision
    /// variables; a product of two decision expressions is a hard error.
    pub fn mul(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        if self.has_decisions() && other.has_decisions() {
            return Err(SosError::Bilinear {
                left: self.describe_sources(),
                right: other.describe_sources(),
            });
        }
        if other.has_decisions() {
            return other.mul_poly(&self.constant);
        }
        self.mul_poly(&other.constant)
    }

    pub fn differentiate(&self, var: usize) -> PolyExpr {
        PolyExpr {
            constant: self.constant.differentiate(var),
            linear: self
                .linear
                .iter()
                .map(|(&v, p)| (v, p.differentiate(var)))
                .collect(),
            sources: self.sources.clone(),
        }
    }

    /// Max total degree over the constant part and all coefficient polys.
    pub fn degree(&self) -> u32 {
        let mut d = self.constant.total_degree();
        for p in self.linear.values() {
            d = d.max(p.total_degree());
        }
        d
    }

    /// Re-express over a larger variable set.
    pub fn embed(&self, target: &Arc<VarSet>) -> Result<PolyExpr, SosError> {
        Ok(PolyExpr {
            constant: self.constant.embed(target)?,
            linear: self
                .linear
                .iter()
                .map(|(&v, p)| Ok((v, p.embed(target)?)))
                .collect::<Result<_, polyalg::PolyError>>()?,
            sources: self.sources.clone(),
        })
    }

    /// Evaluate the x-dependence at a point, leaving a scalar affine
    /// function of the decision variables.
    pub fn eval_affine(&self, point: &[f64]) -> Result<ScalarAffine, SosError> {
        let mut terms = Vec::with_capacity(self.linear.len());
        for (&v, p) in &self.linear {
            let c = p.eval(point)?;
            if c != 0.0 {
                terms.push((v, c));
            }
        }
        Ok(ScalarAffine {
            terms,
            constant: self.constant.eval(point)?,
        })
    }

    /// Substitute a known value vector for the decision variables.
    pub fn instantiate(&self, z: &[f64]) -> Result<Polynomial, SosError> {
        let mut p = self.constant.clone();
        for (&v, q) in &self.linear {
            p = p.add(&q.scale(z[v]))?;
        }
        Ok(p)
    }
}

/// Scalar affine function of decision variables: `constant + sum terms`.
#[derive(Debug, Clone, Default)]
pub struct ScalarAffine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl ScalarAffine {
    pub fn var(v: usize) -> Self {
        ScalarAffine {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        ScalarAffine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn plus(mut self, other: &ScalarAffine) -> Self {
        self.terms.extend(other.terms.iter().copied());
        self.constant += other.constant;
        self.normalize()
    }

    pub fn scaled(mut self, a: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= a;
        }
        self.constant *= a;
        self
    }

    fn normalize(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * z[v]).sum::<f64>()
    }
}
