use crate::certificate::SafetyCertificate;
use crate::model::PlantModel;
use crate::SfError;

/// Closed-loop run: time grid, states, both input series, the certificate
/// functions along the trajectory, and violation flags.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u_n: Vec<Vec<f64>>,
    pub u_s: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub b_max: Vec<f64>,
    /// Bit 0: allowable-set violation, bit 1: input-bound violation,
    /// bit 2: filter fell back to best-effort.
    pub flags: Vec<u8>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.x.last().expect("empty trajectory")
    }

    /// CSV rows: `t,x1..xn,un1..unm,us1..usm,V,Bmax,flags`.
    pub fn to_csv(&self) -> String {
        let n = self.x.first().map(|x| x.len()).unwrap_or(0);
        let m = self.u_n.first().map(|u| u.len()).unwrap_or(0);
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for j in 1..=m {
            out.push_str(&format!(",un{j}"));
        }
        for j in 1..=m {
            out.push_str(&format!(",us{j}"));
        }
        out.push_str(",V,Bmax,flags\n");
        for k in 0..self.len() {
            out.push_str(&format!("{:.9e}", self.t[k]));
            for v in &self.x[k] {
                out.push_str(&format!(",{v:.12e}"));
            }
            for v in &self.u_n[k] {
                out.push_str(&format!(",{v:.12e}"));
            }
            for v in &self.u_s[k] {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push_str(&format!(
                ",{:.12e},{:.12e},{}\n",
                self.v[k], self.b_max[k], self.flags[k]
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    /// Zero-order-hold control period (seconds).
    pub dt_ctrl: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Store every k-th control step in the trajectory.
    pub store_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt_ctrl: 1e-6,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            store_every: 1,
        }
    }
}

/// Integrate the closed loop from `x0` to time `horizon`, holding the
/// control constant between samples (zero-order hold) and advancing the
/// state with an adaptive embedded Runge-Kutta step inside each interval.
/// The controller sees the state at each sampling instant and reports the
/// applied input plus a flag byte.
pub fn integrate<C>(
    model: &PlantModel,
    cert: Option<&SafetyCertificate>,
    mut controller: C,
    x0: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SfError>
where
    C: FnMut(&[f64]) -> Result<(Vec<f64>, u8), SfError>,
{
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SfError::Integration {
            t: 0.0,
            why: "non-finite initial state".to_string(),
            state: x0.to_vec(),
        });
    }
    let steps = (horizon / cfg.dt_ctrl).round() as usize;
    let mut traj = Trajectory {
        t: Vec::new(),
        x: Vec::new(),
        u_n: Vec::new(),
        u_s: Vec::new(),
        v: Vec::new(),
        b_max: Vec::new(),
        flags: Vec::new(),
    };
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let t = k as f64 * cfg.dt_ctrl;
        let (u, mut flags) = controller(&x)?;
        let u_n = model.eval_legacy(&x)?;
        if !model.in_allowable(&x, 1e-9) {
            flags |= 1;
        }
        if let Some(quad) = &model.input_quadratic {
            if crate::runtime::quad_residual(quad, &u) > 1e-8 {
                flags |= 2;
            }
        }
        if k % cfg.store_every == 0 || k == steps {
            traj.t.push(t);
            traj.x.push(x.clone());
            traj.u_n.push(u_n);
            traj.u_s.push(u.clone());
            if let Some(c) = cert {
                traj.v.push(c.v.eval(&x)?);
                traj.b_max.push(c.b_max(&x)?);
            } else {
                traj.v.push(f64::NAN);
                traj.b_max.push(f64::NAN);
            }
            traj.flags.push(flags);
        }
        if k == steps {
            break;
        }
        x = rk45_interval(model, &x, &u, cfg.dt_ctrl, cfg, t)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SfError::Integration {
                t,
                why: "state became non-finite".to_string(),
                state: traj.x.last().cloned().unwrap_or_default(),
            });
        }
    }
    Ok(traj)
}

/// Dormand-Prince 5(4) with step-size control across one hold interval.
fn rk45_interval(
    model: &PlantModel,
    x0: &[f64],
    u: &[f64],
    dt: f64,
    cfg: &IntegratorConfig,
    t0: f64,
) -> Result<Vec<f64>, SfError> {
    let mut x = x0.to_vec();
    let mut remaining = dt;
    let mut h = dt;
    let mut guard = 0;
    while remaining > 1e-18 {
        guard += 1;
        if guard > 10_000 {
            return Err(SfError::Integration {
                t: t0 + (dt - remaining),
                why: "step-size control failed to advance".to_string(),
                state: x,
            });
        }
        h = h.min(remaining);
        let (x5, err) = dopri_step(model, &x, u, h)?;
        let tol = cfg.abs_tol
            + cfg.rel_tol * x.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        if err <= tol || h < 1e-15 {
            x = x5;
            remaining -= h;
            let grow = if err > 0.0 {
                0.9 * (tol / err).powf(0.2)
            } else {
                5.0
            };
            h *= grow.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * (tol / err).powf(0.25)).clamp(0.1, 0.9);
        }
    }
    Ok(x)
}

#[allow(clippy::too_many_lines)]
fn dopri_step(
    model: &PlantModel,
    x: &[f64],
    u: &[f64],
    h: f64,
) -> Result<(Vec<f64>, f64), SfError> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = x.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(model.eval_dynamics(x, u)?);
    for stage in 0..6 {
        let mut xs = x.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..n {
                    xs[i] += h * a * kj[i];
                }
            }
        }
        k.push(model.eval_dynamics(&xs, u)?);
    }
    let mut x5 = x.to_vec();
    let mut err = 0.0f64;
    for i in 0..n {
        let mut v5 = 0.0;
        let mut v4 = 0.0;
        for (j, kj) in k.iter().enumerate() {
            v5 += B5[j] * kj[i];
            v4 += B4[j] * kj[i];
        }
        x5[i] += h * v5;
        err = err.max((h * (v5 - v4)).abs());
    }
    Ok((x5, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::toy_1d;

    #[test]
    fn zero_input_stays_at_equilibrium() {
        let model = toy_1d();
        let traj = integrate(
            &model,
            None,
            |_| Ok((vec![0.0], 0)),
            &[0.0],
            1e-3,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(traj.final_state()[0].abs() < 1e-15);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        // xdot = u, u = -x (sampled), x0 = 1: x(1) ~ e^{-1} up to ZOH bias
        let model = toy_1d();
        let cfg = IntegratorConfig {
            dt_ctrl: 1e-4,
            ..IntegratorConfig::default()
        };
        let traj = integrate(
            &model,
            None,
            |x| Ok((vec![-x[0]], 0)),
            &[1.0],
            1.0,
            &cfg,
        )
        .unwrap();
        let x1 = traj.final_state()[0];
        assert!(
            (x1 - (-1.0f64).exp()).abs() < 1e-4,
            "x(1) = {x1}, expected ~{}",
            (-1.0f64).exp()
        );
    }

    #[test]
    fn halving_the_hold_interval_shrinks_the_zoh_bias_linearly() {
        let model = toy_1d();
        let run = |dt: f64| {
            let cfg = IntegratorConfig {
                dt_ctrl: dt,
                ..IntegratorConfig::default()
            };
            integrate(&model, None, |x| Ok((vec![-x[0]], 0)), &[1.0], 0.5, &cfg)
                .unwrap()
                .final_state()[0]
        };
        let exact = (-0.5f64).exp();
        let e1 = (run(2e-3) - exact).abs();
        let e2 = (run(1e-3) - exact).abs();
        let ratio = e1 / e2;
        assert!(
            (1.5..3.0).contains(&ratio),
            "ZOH bias should scale ~O(dt): e1={e1:.3e} e2={e2:.3e} ratio={ratio:.2}"
        );
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let model = toy_1d();
        let r = integrate(
            &model,
            None,
            |_| Ok((vec![0.0], 0)),
            &[f64::NAN],
            1e-3,
            &IntegratorConfig::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn csv_header_shape() {
        let model = toy_1d();
        let traj = integrate(
            &model,
            None,
            |_| Ok((vec![0.0], 0)),
            &[0.5],
            2e-6,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,x1,un1,us1,V,Bmax,flags\n"));
    }
}
