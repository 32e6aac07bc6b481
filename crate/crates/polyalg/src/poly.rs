use crate::{Monomial, PolyError};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Ordered list of variable names fixing the ambient space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Arc<Self> {
        Arc::new(VarSet {
            names: names.into_iter().map(Into::into).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn joined(&self) -> String {
        self.names.join(",")
    }
}

/// Sparse multivariate polynomial with real coefficients.
///
/// Terms map monomials to coefficients; a term with coefficient exactly zero
/// is never stored. Evaluation is linear in the coefficients.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    varset: Arc<VarSet>,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(varset: Arc<VarSet>) -> Self {
        Polynomial {
            varset,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(varset: Arc<VarSet>, c: f64) -> Self {
        let mut p = Polynomial::zero(varset);
        if c != 0.0 {
            let one = Monomial::one(p.varset.dim());
            p.terms.insert(one, c);
        }
        p
    }

    /// The polynomial `x_i`.
    pub fn var(varset: Arc<VarSet>, i: usize) -> Self {
        let mut p = Polynomial::zero(varset);
        let m = Monomial::var(p.varset.dim(), i);
        p.terms.insert(m, 1.0);
        p
    }

    pub fn var_named(varset: Arc<VarSet>, name: &str) -> Result<Self, PolyError> {
        let i = varset
            .index_of(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        Ok(Polynomial::var(varset, i))
    }

    pub fn from_terms(
        varset: Arc<VarSet>,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Self {
        let mut p = Polynomial::zero(varset);
        for (m, c) in terms {
            debug_assert_eq!(m.dim(), p.varset.dim());
            p.add_term(m, c);
        }
        p
    }

    pub fn varset(&self) -> &Arc<VarSet> {
        &self.varset
    }

    pub fn dim(&self) -> usize {
        self.varset.dim()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one(self.dim()))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.total_degree())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, &c| a.max(c.abs()))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let nv = *e.get() + c;
                if nv == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = nv;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    fn check_varset(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.varset == other.varset {
            Ok(())
        } else {
            Err(PolyError::VarSetMismatch {
                left: self.varset.joined(),
                right: other.varset.joined(),
            })
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_varset(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        if a == 0.0 {
            return Polynomial::zero(self.varset.clone());
        }
        Polynomial {
            varset: self.varset.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * a)).collect(),
        }
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-1.0)
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_varset(other)?;
        let mut out = Polynomial::zero(self.varset.clone());
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    /// Partial derivative with respect to variable index `var`.
    pub fn differentiate(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.varset.clone());
        for (m, &c) in &self.terms {
            let e = m.exponents[var];
            if e == 0 {
                continue;
            }
            let mut d = m.clone();
            d.exponents[var] = e - 1;
            out.add_term(d, c * e as f64);
        }
        out
    }

    /// Monomial-sum evaluation at a point.
    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(point)).sum())
    }

    /// Gradient as a vector of polynomials.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.dim()).map(|i| self.differentiate(i)).collect()
    }

    /// Substitute variable `var` by the polynomial `repl` (same varset).
    pub fn substitute(&self, var: usize, repl: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_varset(repl)?;
        let mut out = Polynomial::zero(self.varset.clone());
        for (m, &c) in &self.terms {
            let e = m.exponents[var];
            let mut base = m.clone();
            base.exponents[var] = 0;
            let mut term = Polynomial::from_terms(self.varset.clone(), [(base, c)]);
            for _ in 0..e {
                term = term.mul(repl)?;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Re-express this polynomial over a larger variable set that contains
    /// every current variable by name.
    pub fn embed(&self, target: &Arc<VarSet>) -> Result<Polynomial, PolyError> {
        let map: Vec<usize> = self
            .varset
            .names()
            .iter()
            .map(|n| {
                target
                    .index_of(n)
                    .ok_or_else(|| PolyError::UnknownVariable(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut out = Polynomial::zero(target.clone());
        for (m, &c) in &self.terms {
            let mut e = vec![0u32; target.dim()];
            for (i, &exp) in m.exponents.iter().enumerate() {
                e[map[i]] = exp;
            }
            out.add_term(Monomial::new(e), c);
        }
        Ok(out)
    }

    /// Drop terms with |coefficient| <= tol. Cleans solver output; exact
    /// zeros are already never stored.
    pub fn chop(&self, tol: f64) -> Polynomial {
        Polynomial {
            varset: self.varset.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let names = self.varset.names();
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " {} ", if *c < 0.0 { "-" } else { "+" })?;
            } else {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
                first = false;
            }
            let ac = c.abs();
            let mut wrote = false;
            if (ac - 1.0).abs() > 1e-12 || m.is_constant() {
                write!(f, "{ac}")?;
                wrote = true;
            }
            for (i, &e) in m.exponents.iter().enumerate() {
                if e > 0 {
                    if wrote {
                        write!(f, "*")?;
                    }
                    write!(f, "{}", names[i])?;
                    if e > 1 {
                        write!(f, "^{e}")?;
                    }
                    wrote = true;
                }
            }
        }
        Ok(())
    }
}

/// Convenience: parse-free construction helpers for tests and fixtures.
impl Polynomial {
    /// Build `sum_i coeffs[i] * x^exps[i]` over the given varset.
    pub fn from_raw(varset: Arc<VarSet>, raw: &[(&[u32], f64)]) -> Self {
        Polynomial::from_terms(
            varset,
            raw.iter()
                .map(|(e, c)| (Monomial::new(e.to_vec()), *c))
                .collect::<Vec<_>>(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> Arc<VarSet> {
        VarSet::new(vec!["x", "y"])
    }

    #[test]
    fn differentiate_power_rule() {
        // d/dx (x^2 + 2xy) = 2x + 2y
        let vs = xy();
        let p = Polynomial::from_raw(vs.clone(), &[(&[2, 0], 1.0), (&[1, 1], 2.0)]);
        let d = p.differentiate(0);
        let expect = Polynomial::from_raw(vs, &[(&[1, 0], 2.0), (&[0, 1], 2.0)]);
        assert_eq!(d, expect);
    }

    #[test]
    fn mul_difference_of_squares() {
        let vs = VarSet::new(vec!["x"]);
        let p = Polynomial::from_raw(vs.clone(), &[(&[1], 1.0), (&[0], 1.0)]);
        let q = Polynomial::from_raw(vs.clone(), &[(&[1], 1.0), (&[0], -1.0)]);
        let r = p.mul(&q).unwrap();
        let expect = Polynomial::from_raw(vs, &[(&[2], 1.0), (&[0], -1.0)]);
        assert_eq!(r, expect);
    }

    #[test]
    fn add_cancellation_leaves_empty_term_map() {
        let vs = VarSet::new(vec!["x"]);
        let p = Polynomial::from_raw(vs.clone(), &[(&[2], 1.0)]);
        let r = p.add(&p.neg()).unwrap();
        assert!(r.is_zero());
        assert_eq!(r.num_terms(), 0);
    }

    #[test]
    fn eval_simple() {
        let vs = VarSet::new(vec!["x"]);
        let p = Polynomial::from_raw(vs, &[(&[2], 1.0), (&[0], -1.0)]);
        let v = p.eval(&[1.2]).unwrap();
        assert!((v - 0.44).abs() < 1e-12);
    }

    #[test]
    fn eval_dimension_mismatch_errors() {
        let vs = xy();
        let p = Polynomial::from_raw(vs, &[(&[1, 0], 1.0)]);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mismatched_varsets_error() {
        let p = Polynomial::from_raw(VarSet::new(vec!["x"]), &[(&[1], 1.0)]);
        let q = Polynomial::from_raw(VarSet::new(vec!["y"]), &[(&[1], 1.0)]);
        assert!(p.add(&q).is_err());
        assert!(p.mul(&q).is_err());
    }

    #[test]
    fn substitute_shifts_variable() {
        // p(x,y) = x^2, substitute x -> x + y gives x^2 + 2xy + y^2
        let vs = xy();
        let p = Polynomial::from_raw(vs.clone(), &[(&[2, 0], 1.0)]);
        let repl = Polynomial::from_raw(vs.clone(), &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let s = p.substitute(0, &repl).unwrap();
        let expect = Polynomial::from_raw(
            vs,
            &[(&[2, 0], 1.0), (&[1, 1], 2.0), (&[0, 2], 1.0)],
        );
        assert_eq!(s, expect);
    }

    #[test]
    fn embed_into_larger_varset() {
        let p = Polynomial::from_raw(VarSet::new(vec!["x"]), &[(&[2], 3.0)]);
        let big = VarSet::new(vec!["w", "x"]);
        let q = p.embed(&big).unwrap();
        assert_eq!(q.eval(&[5.0, 2.0]).unwrap(), 12.0);
    }
}
