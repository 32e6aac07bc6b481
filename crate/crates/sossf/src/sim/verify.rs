use crate::certificate::SafetyCertificate;
use crate::model::PlantModel;
use crate::sim::Trajectory;
use crate::synth::op_box;
use crate::SfError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Half-width of the barrier shell |B_i| <= shell.
    pub shell: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n_samples: 100_000,
            seed: 7,
            tol: 1e-5,
            shell: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    pub worst: f64,
    pub worst_x: Vec<f64>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            samples: 0,
            violations: 0,
            worst: f64::NEG_INFINITY,
            worst_x: Vec::new(),
        }
    }

    fn record(&mut self, margin: f64, x: &[f64], tol: f64) {
        self.samples += 1;
        if margin > self.worst {
            self.worst = margin;
            self.worst_x = x.to_vec();
        }
        if margin > tol {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub checks: Vec<CheckResult>,
}

impl SampleReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{}: {}/{} violations (worst margin {:.3e})\n",
                c.name, c.violations, c.samples, c.worst
            ));
        }
        s
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sampled verification of the certificate: containment chain, the CLF/CBF
/// conditions under the rational controller, the legacy condition on the
/// nominal boundary shell, input membership of u_sos on the safe set,
/// strict positivity of s, and (when present) the slack-polynomial bounds.
pub fn verify_certificate_sampled(
    cert: &SafetyCertificate,
    model: &PlantModel,
    opts: &VerifyOptions,
) -> Result<SampleReport, SfError> {
    cert.check_model(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let box_ = op_box(model);
    let n = model.n();
    let t = cert.t();
    let d = cert.dissipation.d(&cert.v)?;
    let grad_v = cert.v.gradient();
    let grad_b: Vec<Vec<polyalg::Polynomial>> = cert.b.iter().map(|b| b.gradient()).collect();

    let mut containment_ns = CheckResult::new("containment X_n subset X_s");
    let mut containment_sa = CheckResult::new("containment X_s subset X_a");
    let mut clf = CheckResult::new("clf condition on X_t (u = p/s)");
    let mut cbf = CheckResult::new("cbf condition on barrier shell (u = p/s)");
    let mut legacy = CheckResult::new("legacy condition on nominal boundary");
    let mut s_pos = CheckResult::new("s strictly positive on X_op");
    let mut input = CheckResult::new("u_sos input membership on X_s");
    let mut slack_upper0 = CheckResult::new("slack r0 <= 0 on X_t");
    let mut slack_upper = CheckResult::new("slack r_i <= 0 on barrier shell");
    let mut slack_legacy = CheckResult::new("slack legacy bound on X_n");

    let has_slack = cert.r.len() == t + 1;
    let legacy_rows = if has_slack {
        Some(crate::slack::qcqp_rows_under(cert, model, &model.u_n, &d)?)
    } else {
        None
    };

    let mut drawn = 0usize;
    while drawn < opts.n_samples {
        let x: Vec<f64> = (0..n)
            .map(|j| rng.gen_range(-box_[j]..=box_[j]))
            .collect();
        if model.f_op.eval(&x)? > 0.0 {
            continue;
        }
        drawn += 1;

        let vx = cert.v.eval(&x)?;
        let bvals: Vec<f64> = cert
            .b
            .iter()
            .map(|b| b.eval(&x))
            .collect::<Result<_, _>>()?;
        let bmax = bvals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let in_safe = bmax <= 0.0;

        s_pos.record(cert.meta.epsilon_s / 2.0 - cert.s.eval(&x)?, &x, 0.0);

        if vx <= 0.0 {
            containment_ns.record(bmax, &x, opts.tol);
        }
        if in_safe {
            let wmax = model
                .w
                .iter()
                .map(|w| w.eval(&x).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            containment_sa.record(wmax, &x, opts.tol);
        }

        if in_safe || vx >= 0.0 || bmax.abs() <= opts.shell {
            let u_sos = cert.eval_u_sos(&x)?;
            let cl: Vec<f64> = model.eval_dynamics(&x, &u_sos)?;
            if in_safe && vx >= 0.0 {
                // X_t: grad(V)'(f+Gu) + d <= 0
                let mut vdot: f64 = 0.0;
                for k in 0..n {
                    vdot += grad_v[k].eval(&x)? * cl[k];
                }
                clf.record(vdot + d.eval(&x)?, &x, opts.tol);
                if has_slack {
                    slack_upper0.record(cert.r[0].eval(&x)?, &x, opts.tol);
                }
            }
            if in_safe {
                for (i, &bi) in bvals.iter().enumerate() {
                    if bi.abs() <= opts.shell {
                        let mut bdot = 0.0;
                        for k in 0..n {
                            bdot += grad_b[i][k].eval(&x)? * cl[k];
                        }
                        // shell width relaxes the pointwise bound via the
                        // certified multipliers' scale; the spec tolerance
                        // 1e-4 on the shell is checked directly
                        cbf.record(bdot, &x, 1e-4_f64.max(opts.tol));
                        if has_slack {
                            slack_upper.record(cert.r[i + 1].eval(&x)?, &x, 1e-4_f64.max(opts.tol));
                        }
                    }
                }
                if let Some(quad) = &model.input_quadratic {
                    input.record(crate::runtime::quad_residual(quad, &u_sos), &x, opts.tol);
                }
                if let Some(lin) = &model.input_linear {
                    for (ak, bk) in lin.a.iter().zip(&lin.b) {
                        let v: f64 =
                            ak.iter().zip(&u_sos).map(|(a, u)| a * u).sum::<f64>() - bk;
                        input.record(v, &x, opts.tol);
                    }
                }
            }
        }
        if vx <= 0.0 {
            if let Some(rows) = &legacy_rows {
                for (k, row) in rows.iter().enumerate() {
                    slack_legacy.record(row.eval(&x)? - cert.r[k].eval(&x)?, &x, opts.tol);
                }
            }
        }
    }

    // nominal boundary shell by bisection along random rays
    let shell_pts = sample_shell(&cert.v, &box_, opts.n_samples / 100 + 100, opts.seed ^ 0x11)?;
    for x in &shell_pts {
        let mut vdot = 0.0;
        let cl = model.eval_dynamics(x, &model.eval_legacy(x)?)?;
        for k in 0..n {
            vdot += grad_v[k].eval(x)? * cl[k];
        }
        legacy.record(vdot + d.eval(x)?, x, opts.tol);
    }

    let mut checks = vec![
        containment_ns,
        containment_sa,
        clf,
        cbf,
        legacy,
        s_pos,
    ];
    if model.input_quadratic.is_some() || model.input_linear.is_some() {
        checks.push(input);
    }
    if has_slack {
        checks.push(slack_upper0);
        checks.push(slack_upper);
        checks.push(slack_legacy);
    }
    Ok(SampleReport { checks })
}

/// Points with |V(x)| <= 1e-3, found by bisection along random rays from
/// the origin (V(0) < 0 by construction).
pub fn sample_shell(
    v: &polyalg::Polynomial,
    box_: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SfError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = box_.len();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 200 * count {
        tries += 1;
        let dir: Vec<f64> = (0..n).map(|j| rng.gen_range(-box_[j]..=box_[j])).collect();
        if v.eval(&dir)? <= 0.0 {
            continue; // ray end still inside the nominal region
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let x: Vec<f64> = dir.iter().map(|d| d * mid).collect();
            if v.eval(&x)? <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x: Vec<f64> = dir.iter().map(|d| d * 0.5 * (lo + hi)).collect();
        if v.eval(&x)?.abs() <= 1e-3 {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// First time V(x(t)) <= 0, if reached.
    pub t_hit: Option<f64>,
    /// Dissipation floor used for the decay check.
    pub l: f64,
    /// Worst violation of V-dot <= -l while in the transitional region.
    pub worst_decay_violation: f64,
    /// Worst positive V after t_hit (forward invariance of X_n).
    pub worst_invariance_violation: f64,
}

/// Finite-time convergence measurement along a trajectory: first nominal
/// entry, V-decay rate on the transitional portion against the sampled
/// dissipation floor, and forward invariance afterwards.
pub fn measure_convergence(
    traj: &Trajectory,
    cert: &SafetyCertificate,
    model: &PlantModel,
    seed: u64,
) -> Result<ConvergenceReport, SfError> {
    // l = min d(x) over sampled X_t
    let box_ = op_box(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cert.dissipation.d(&cert.v)?;
    let mut l = f64::INFINITY;
    let mut found = 0;
    let mut tries = 0;
    while found < 20_000 && tries < 2_000_000 {
        tries += 1;
        let x: Vec<f64> = (0..model.n())
            .map(|j| rng.gen_range(-box_[j]..=box_[j]))
            .collect();
        if cert.in_safe(&x, 0.0) && cert.v.eval(&x)? >= 0.0 {
            l = l.min(d.eval(&x)?);
            found += 1;
        }
    }
    if !l.is_finite() {
        l = cert.dissipation.v0; // X_t empty in samples; fall back to lambda*V0
    }

    let mut t_hit = None;
    for (k, &tk) in traj.t.iter().enumerate() {
        if traj.v[k] <= 0.0 {
            t_hit = Some(tk);
            break;
        }
    }
    let mut worst_decay = f64::NEG_INFINITY;
    for k in 1..traj.len() {
        let in_xt = traj.v[k - 1] > 0.0 && traj.b_max[k - 1] <= 0.0;
        if in_xt {
            let dt = traj.t[k] - traj.t[k - 1];
            if dt > 0.0 {
                let vdot = (traj.v[k] - traj.v[k - 1]) / dt;
                worst_decay = worst_decay.max(vdot + l);
            }
        }
    }
    let mut worst_inv = f64::NEG_INFINITY;
    if let Some(th) = t_hit {
        for k in 0..traj.len() {
            if traj.t[k] >= th {
                worst_inv = worst_inv.max(traj.v[k]);
            }
        }
    }
    Ok(ConvergenceReport {
        t_hit,
        l,
        worst_decay_violation: worst_decay,
        worst_invariance_violation: worst_inv,
    })
}
