use nalgebra::DMatrix;
use polyalg::{monomial_basis, GramForm, ParityFilter, Polynomial, VarSet};
use proptest::prelude::*;
use std::sync::Arc;

fn arb_poly(dim: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    let basis = monomial_basis(dim, max_deg, ParityFilter::All);
    let n = basis.len();
    proptest::collection::vec(-3.0f64..3.0, n).prop_map(move |coefs| {
        let names: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        let vs = VarSet::new(names);
        Polynomial::from_terms(
            vs,
            basis
                .iter()
                .cloned()
                .zip(coefs.iter().copied())
                .collect::<Vec<_>>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_central_differences(
        p in arb_poly(2, 4),
        x in 0.3f64..2.0,
        y in 0.3f64..2.0,
    ) {
        let h = 1e-5;
        for var in 0..2 {
            let d = p.differentiate(var);
            let analytic = d.eval(&[x, y]).unwrap();
            let mut hi = [x, y];
            let mut lo = [x, y];
            hi[var] += h;
            lo[var] -= h;
            let fd = (p.eval(&hi).unwrap() - p.eval(&lo).unwrap()) / (2.0 * h);
            let scale = analytic.abs().max(1.0);
            prop_assert!((analytic - fd).abs() / scale < 1e-6,
                "var {var}: analytic {analytic}, fd {fd}");
        }
    }

    #[test]
    fn add_commutes_and_mul_associates(
        a in arb_poly(2, 3),
        b in arb_poly(2, 3),
        c in arb_poly(2, 2),
    ) {
        let ab = a.add(&b).unwrap();
        let ba = b.add(&a).unwrap();
        prop_assert_eq!(ab, ba);

        let left = a.mul(&b).unwrap().mul(&c).unwrap();
        let right = a.mul(&b.mul(&c).unwrap()).unwrap();
        prop_assert!(left.sub(&right).unwrap().max_abs_coefficient() < 1e-9);
    }

    #[test]
    fn mul_commutes(a in arb_poly(2, 3), b in arb_poly(2, 3)) {
        let ab = a.mul(&b).unwrap();
        let ba = b.mul(&a).unwrap();
        prop_assert!(ab.sub(&ba).unwrap().max_abs_coefficient() < 1e-12);
    }

    #[test]
    fn evaluation_is_linear_in_coefficients(
        p in arb_poly(2, 3),
        q in arb_poly(2, 3),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        x in -1.5f64..1.5,
        y in -1.5f64..1.5,
    ) {
        let combo = p.scale(a).add(&q.scale(b)).unwrap();
        let lhs = combo.eval(&[x, y]).unwrap();
        let rhs = a * p.eval(&[x, y]).unwrap() + b * q.eval(&[x, y]).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }
}

#[test]
fn random_psd_gram_round_trip() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let vs = VarSet::new(vec!["x", "y"]);
    let basis = monomial_basis(2, 2, ParityFilter::All);
    let n = basis.len();
    for _ in 0..20 {
        // Random PSD Q = L L^T
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose();
        let g = GramForm::new(vs.clone(), basis.clone(), q.clone()).unwrap();
        assert!(polyalg::is_sos_certificate(&g, 1e-9));
        let p = g.expand();
        for _ in 0..100 {
            let pt = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let z: Vec<f64> = basis.iter().map(|m| m.eval(&pt)).collect();
            let zv = nalgebra::DVector::from_vec(z);
            let quad = (zv.transpose() * &q * &zv)[(0, 0)];
            let pe = p.eval(&pt).unwrap();
            assert!(
                (quad - pe).abs() <= 1e-10 * (1.0 + quad.abs()),
                "gram expand mismatch: {quad} vs {pe}"
            );
        }
    }
}
