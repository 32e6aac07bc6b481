use crate::{Monomial, PolyError, Polynomial, VarSet};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Structured record for a polynomial: `{vars: [names], terms: [{exp, coef}]}`.
///
/// This is the wire format used by model files and certificate files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyRecord {
    pub vars: Vec<String>,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRecord {
    pub exp: Vec<u32>,
    pub coef: f64,
}

impl PolyRecord {
    pub fn from_poly(p: &Polynomial) -> Self {
        PolyRecord {
            vars: p.varset().names().to_vec(),
            terms: p
                .terms()
                .map(|(m, c)| TermRecord {
                    exp: m.exponents.clone(),
                    coef: c,
                })
                .collect(),
        }
    }

    pub fn to_poly(&self) -> Result<Polynomial, PolyError> {
        let vs = VarSet::new(self.vars.clone());
        self.to_poly_in(&vs)
    }

    /// Decode against an existing varset (names must match exactly).
    pub fn to_poly_in(&self, vs: &Arc<VarSet>) -> Result<Polynomial, PolyError> {
        if vs.names() != self.vars.as_slice() {
            return Err(PolyError::BadRecord(format!(
                "variable list [{}] does not match expected [{}]",
                self.vars.join(","),
                vs.names().join(",")
            )));
        }
        let dim = vs.dim();
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.exp.len() != dim {
                return Err(PolyError::BadRecord(format!(
                    "exponent vector length {} does not match {} variables",
                    t.exp.len(),
                    dim
                )));
            }
            terms.push((Monomial::new(t.exp.clone()), t.coef));
        }
        Ok(Polynomial::from_terms(vs.clone(), terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip() {
        let vs = VarSet::new(vec!["x", "y"]);
        let p = Polynomial::from_raw(vs, &[(&[2, 0], 1.5), (&[0, 1], -2.0)]);
        let rec = PolyRecord::from_poly(&p);
        let q = rec.to_poly().unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn bad_exponent_length_rejected() {
        let rec = PolyRecord {
            vars: vec!["x".into()],
            terms: vec![TermRecord {
                exp: vec![1, 2],
                coef: 1.0,
            }],
        };
        assert!(rec.to_poly().is_err());
    }
}
