use crate::SfError;
use polyalg::Polynomial;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soscomp::{solve, PolyExpr, SolveOutcome, SolverConfig, SosProgram};

/// Smallest constant (up to bisection tolerance) making `f_op + rho` SOS.
/// Doubles an upper bracket first, then bisects; the returned value is
/// rounded up so the certificate check passes with margin.
pub fn rho_sigma_bisection(f_op: &Polynomial, solver: &SolverConfig) -> Result<f64, SfError> {
    let is_sos = |shift: f64| -> Result<bool, SfError> {
        let mut prog = SosProgram::new(f_op.varset().clone());
        let shifted = f_op.add(&Polynomial::constant(f_op.varset().clone(), shift))?;
        prog.add_membership("rho_sigma", PolyExpr::from_poly(shifted), vec![], None)?;
        let cp = prog.lower()?;
        Ok(matches!(solve(&cp, solver)?, SolveOutcome::Feasible(_)))
    };
    let mut hi = 1.0f64;
    let mut tries = 0;
    while !is_sos(hi)? {
        hi *= 2.0;
        tries += 1;
        if tries > 30 {
            return Err(SfError::Model(
                "no rho_Sigma found: operating region violates the SOS shift assumption"
                    .to_string(),
            ));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if is_sos(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi * 1.02 + 1e-9)
}

/// Multistart projected gradient descent estimate of min_x p(x) over the
/// axis-aligned box |x_j| <= box[j]. Deterministic for a fixed seed.
pub fn estimate_min_over_box(p: &Polynomial, box_: &[f64], starts: usize, seed: u64) -> f64 {
    let n = box_.len();
    let grad: Vec<Polynomial> = (0..n).map(|k| p.differentiate(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    let clamp = |x: &mut [f64]| {
        for j in 0..x.len() {
            x[j] = x[j].clamp(-box_[j], box_[j]);
        }
    };
    for start in 0..starts {
        let mut x: Vec<f64> = if start == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|j| rng.gen_range(-box_[j]..=box_[j])).collect()
        };
        let mut fx = p.eval(&x).unwrap_or(f64::INFINITY);
        let mut step = 0.1 * box_.iter().fold(0.0f64, |a, &b| a.max(b)).max(1e-6);
        for _ in 0..200 {
            let g: Vec<f64> = grad.iter().map(|q| q.eval(&x).unwrap_or(0.0)).collect();
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-12 || step < 1e-12 {
                break;
            }
            let mut trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi - step * gi / gnorm)
                .collect();
            clamp(&mut trial);
            let ft = p.eval(&trial).unwrap_or(f64::INFINITY);
            if ft < fx {
                x = trial;
                fx = ft;
                step *= 1.3;
            } else {
                step *= 0.5;
            }
        }
        best = best.min(fx);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyalg::VarSet;

    #[test]
    fn rho_sigma_for_unit_ball_is_about_one() {
        let vs = VarSet::new(vec!["x", "y"]);
        // f_op = x^2 + y^2 - 1; f_op + 1 is SOS, f_op + 0.5 is not
        let f_op = Polynomial::from_raw(
            vs,
            &[(&[2, 0], 1.0), (&[0, 2], 1.0), (&[0, 0], -1.0)],
        );
        let r = rho_sigma_bisection(&f_op, &SolverConfig::default()).unwrap();
        assert!((r - 1.0).abs() < 0.1, "rho_sigma = {r}");
    }

    #[test]
    fn min_estimate_finds_quartic_minimum() {
        let vs = VarSet::new(vec!["x"]);
        // (x^2 - 1)^2 - 0.5: minimum -0.5 at x = +-1
        let p = Polynomial::from_raw(
            vs,
            &[(&[4], 1.0), (&[2], -2.0), (&[0], 0.5)],
        );
        let m = estimate_min_over_box(&p, &[2.0], 50, 42);
        assert!((m + 0.5).abs() < 1e-6, "estimated min {m}");
    }
}
