use crate::{Monomial, PolyError, Polynomial, VarSet};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Quadratic-form representation `Z(x)^T Q Z(x)` of a polynomial over a
/// monomial basis `Z`.
#[derive(Debug, Clone)]
pub struct GramForm {
    pub varset: Arc<VarSet>,
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
}

impl GramForm {
    pub fn new(
        varset: Arc<VarSet>,
        basis: Vec<Monomial>,
        gram: DMatrix<f64>,
    ) -> Result<Self, PolyError> {
        if gram.nrows() != basis.len() || gram.ncols() != basis.len() {
            return Err(PolyError::GramShapeMismatch {
                basis: basis.len(),
                rows: gram.nrows(),
                cols: gram.ncols(),
            });
        }
        let asym = max_asymmetry(&gram);
        if asym > 1e-9 {
            return Err(PolyError::NonSymmetricGram(asym));
        }
        Ok(GramForm {
            varset,
            basis,
            gram,
        })
    }

    /// Expand the quadratic form into its polynomial.
    pub fn expand(&self) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        let n = self.basis.len();
        for i in 0..n {
            for j in 0..n {
                let m = self.basis[i].mul(&self.basis[j]);
                *terms.entry(m).or_insert(0.0) += self.gram[(i, j)];
            }
        }
        Polynomial::from_terms(self.varset.clone(), terms)
    }

    /// Smallest eigenvalue of the Gram matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.basis.is_empty() {
            return 0.0;
        }
        let eig = self.gram.clone().symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// A Gram form certifies its polynomial SOS iff the matrix is positive
/// semidefinite up to the tolerance.
pub fn is_sos_certificate(g: &GramForm, tol: f64) -> bool {
    g.min_eigenvalue() >= -tol
}

impl Polynomial {
    /// Canonical symmetric Gram of this polynomial over `basis`: each
    /// coefficient is split equally among the basis pairs whose product is
    /// that monomial. Returns an error record listing uncovered monomials
    /// if the basis cannot express some term.
    pub fn canonical_gram(&self, basis: &[Monomial]) -> Result<GramForm, PolyError> {
        let n = basis.len();
        // monomial -> list of (i, j) with i <= j
        let mut pairs: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
        for i in 0..n {
            for j in i..n {
                pairs
                    .entry(basis[i].mul(&basis[j]))
                    .or_default()
                    .push((i, j));
            }
        }
        let mut q = DMatrix::zeros(n, n);
        for (m, c) in self.terms() {
            let Some(ps) = pairs.get(m) else {
                return Err(PolyError::BadRecord(format!(
                    "monomial {:?} not expressible over the given basis",
                    m.exponents
                )));
            };
            // weight per pair; off-diagonal pairs carry 2*q_ij
            let denom: f64 = ps.iter().map(|(i, j)| if i == j { 1.0 } else { 2.0 }).sum();
            for &(i, j) in ps {
                let share = c / denom;
                if i == j {
                    q[(i, i)] += share;
                } else {
                    q[(i, j)] += share;
                    q[(j, i)] += share;
                }
            }
        }
        GramForm::new(self.varset().clone(), basis.to_vec(), q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{monomial_basis, ParityFilter};

    #[test]
    fn expand_square_binomial() {
        // Z = [1, x], Q = [[1,1],[1,1]] -> (x+1)^2 = x^2 + 2x + 1
        let vs = VarSet::new(vec!["x"]);
        let basis = monomial_basis(1, 1, ParityFilter::All);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GramForm::new(vs.clone(), basis, q).unwrap();
        let p = g.expand();
        let expect =
            Polynomial::from_raw(vs, &[(&[0], 1.0), (&[1], 2.0), (&[2], 1.0)]);
        assert_eq!(p, expect);
    }

    #[test]
    fn expand_constant_and_identity() {
        let vs = VarSet::new(vec!["x", "y"]);
        let one = vec![Monomial::one(2)];
        let g = GramForm::new(vs.clone(), one, DMatrix::from_element(1, 1, 4.5)).unwrap();
        assert_eq!(g.expand(), Polynomial::constant(vs.clone(), 4.5));

        let basis = vec![Monomial::var(2, 0), Monomial::var(2, 1)];
        let g = GramForm::new(vs.clone(), basis, DMatrix::identity(2, 2)).unwrap();
        let expect = Polynomial::from_raw(vs, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        assert_eq!(g.expand(), expect);
    }

    #[test]
    fn sos_certificate_by_eigenvalues() {
        let vs = VarSet::new(vec!["x"]);
        let basis = monomial_basis(1, 1, ParityFilter::All);
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GramForm::new(vs.clone(), basis.clone(), psd).unwrap();
        assert!(is_sos_certificate(&g, 1e-7));

        let indef = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = GramForm::new(vs, basis, indef).unwrap();
        assert!(!is_sos_certificate(&g, 1e-7));
    }

    #[test]
    fn non_symmetric_gram_rejected() {
        let vs = VarSet::new(vec!["x"]);
        let basis = monomial_basis(1, 1, ParityFilter::All);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GramForm::new(vs, basis, m).is_err());
    }

    #[test]
    fn canonical_gram_round_trips() {
        let vs = VarSet::new(vec!["x", "y"]);
        let p = Polynomial::from_raw(
            vs,
            &[(&[2, 0], 2.0), (&[1, 1], -3.0), (&[0, 0], 1.0)],
        );
        let basis = monomial_basis(2, 1, ParityFilter::All);
        let g = p.canonical_gram(&basis).unwrap();
        let back = g.expand();
        assert!(back.sub(&p).unwrap().max_abs_coefficient() < 1e-12);
    }
}
