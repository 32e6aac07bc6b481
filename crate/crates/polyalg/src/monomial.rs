use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Exponent vector of a monomial over an ambient variable set.
///
/// The vector length always equals the ambient dimension; `exponents[i]` is
/// the power of the i-th variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial { exponents }
    }

    /// The constant monomial `1` in `dim` variables.
    pub fn one(dim: usize) -> Self {
        Monomial {
            exponents: vec![0; dim],
        }
    }

    /// Monomial `x_i` in `dim` variables.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        Monomial { exponents: e }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    /// Product of two monomials (exponent-wise sum).
    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.dim(), other.dim());
        Monomial {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut v = 1.0;
        for (e, x) in self.exponents.iter().zip(point) {
            match e {
                0 => {}
                1 => v *= x,
                _ => v *= x.powi(*e as i32),
            }
        }
        v
    }

    /// Graded lexicographic comparison: first by total degree, then lex on
    /// exponents. This is the fixed order used for all bases so conic
    /// problem layouts are reproducible across runs.
    pub fn grlex_cmp(&self, other: &Monomial) -> Ordering {
        match self.total_degree().cmp(&other.total_degree()) {
            Ordering::Equal => self.exponents.cmp(&other.exponents),
            o => o,
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.grlex_cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.grlex_cmp(other)
    }
}

/// Optional parity restriction for [`monomial_basis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParityFilter {
    All,
    EvenOnly,
}

/// All monomials in `dim` variables of total degree at most `max_degree`,
/// in graded lexicographic order.
pub fn monomial_basis(dim: usize, max_degree: u32, parity: ParityFilter) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    collect_of_degree(&mut out, &mut cur, dim, 0, 0, max_degree);
    if parity == ParityFilter::EvenOnly {
        out.retain(|m| m.total_degree() % 2 == 0);
    }
    out.sort();
    out
}

fn collect_of_degree(
    out: &mut Vec<Monomial>,
    cur: &mut Vec<u32>,
    dim: usize,
    pos: usize,
    used: u32,
    max_degree: u32,
) {
    if pos == dim {
        out.push(Monomial::new(cur.clone()));
        return;
    }
    for e in 0..=(max_degree - used) {
        cur[pos] = e;
        collect_of_degree(out, cur, dim, pos + 1, used + e, max_degree);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_one_var_degree_two() {
        let b = monomial_basis(1, 2, ParityFilter::All);
        let exps: Vec<u32> = b.iter().map(|m| m.exponents[0]).collect();
        assert_eq!(exps, vec![0, 1, 2]);
    }

    #[test]
    fn basis_two_vars_degree_one() {
        let b = monomial_basis(2, 1, ParityFilter::All);
        assert_eq!(
            b,
            vec![
                Monomial::new(vec![0, 0]),
                Monomial::new(vec![0, 1]),
                Monomial::new(vec![1, 0]),
            ]
        );
    }

    #[test]
    fn basis_count_matches_binomial() {
        // C(3+2, 2) = 10
        assert_eq!(monomial_basis(3, 2, ParityFilter::All).len(), 10);
        // C(3+4, 4) = 35
        assert_eq!(monomial_basis(3, 4, ParityFilter::All).len(), 35);
    }

    #[test]
    fn even_filter_keeps_even_total_degree() {
        let b = monomial_basis(2, 2, ParityFilter::EvenOnly);
        assert!(b.iter().all(|m| m.total_degree() % 2 == 0));
        assert_eq!(b.len(), 4); // 1, x^2, xy, y^2
    }

    #[test]
    fn grlex_orders_by_degree_first() {
        let x2 = Monomial::new(vec![2, 0]);
        let y = Monomial::new(vec![0, 1]);
        assert_eq!(y.grlex_cmp(&x2), Ordering::Less);
    }
}
