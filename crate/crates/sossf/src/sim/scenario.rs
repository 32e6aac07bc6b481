use crate::certificate::SafetyCertificate;
use crate::model::PlantModel;
use crate::runtime::{Filter, FilterStatus};
use crate::sim::{integrate, line_chart_svg, IntegratorConfig, Trajectory};
use crate::SfError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Case-study scenarios: constraint-violation comparison, convergence-rate
/// comparison, and reference tracking on the 4-state variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Fig7,
    Fig8,
    Fig9,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fig7" => Ok(Scenario::Fig7),
            "fig8" => Ok(Scenario::Fig8),
            "fig9" => Ok(Scenario::Fig9),
            other => Err(format!("unknown scenario `{other}` (fig7|fig8|fig9)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub horizon: f64,
    pub integrator: IntegratorConfig,
    pub alpha_gain: f64,
    pub out_dir: PathBuf,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            horizon: 0.04,
            integrator: IntegratorConfig {
                store_every: 20,
                ..IntegratorConfig::default()
            },
            alpha_gain: 10.0,
            out_dir: std::env::temp_dir(),
        }
    }
}

#[derive(Debug)]
pub struct ScenarioArtifacts {
    pub x0: Vec<f64>,
    pub trajectories: BTreeMap<String, Trajectory>,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Start state for fig7/fig8: walk from a small interior point toward the
/// safe-set boundary along a given direction until max_i B_i = shell.
pub fn start_on_barrier_shell(
    cert: &SafetyCertificate,
    dir: &[f64],
    shell: f64,
) -> Result<Vec<f64>, SfError> {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let bmax_at = |s: f64| -> f64 {
        let x: Vec<f64> = dir.iter().map(|d| d * s).collect();
        cert.b_max(&x).unwrap_or(f64::INFINITY)
    };
    // grow until outside
    let mut guard = 0;
    while bmax_at(hi) < 0.0 {
        hi *= 1.5;
        guard += 1;
        if guard > 60 {
            break;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if bmax_at(mid) <= shell {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(dir.iter().map(|d| d * lo).collect())
}

/// Run one scenario: legacy-only, basic filter and advanced filter from the
/// scenario's initial state; emit trajectory CSVs and plots.
pub fn run_scenario(
    scenario: Scenario,
    cert: &SafetyCertificate,
    model: &PlantModel,
    opts: &ScenarioOptions,
) -> Result<ScenarioArtifacts, SfError> {
    cert.check_model(model)?;
    let filter = Filter::new(cert, model)?;
    let x0 = scenario_start(scenario, cert, model)?;

    let mut trajectories = BTreeMap::new();
    let run_legacy = scenario != Scenario::Fig9;
    if run_legacy {
        let traj = integrate(
            model,
            Some(cert),
            |x| Ok((model.eval_legacy(x)?, 0)),
            &x0,
            opts.horizon,
            &opts.integrator,
        )?;
        trajectories.insert("legacy".to_string(), traj);
    }
    {
        let traj = integrate(
            model,
            Some(cert),
            |x| {
                let r = filter.basic(x, opts.alpha_gain)?;
                let flag = if r.raw_quad_residual > 0.0 { 4 } else { 0 };
                Ok((r.u_applied, flag))
            },
            &x0,
            opts.horizon,
            &opts.integrator,
        )?;
        trajectories.insert("basic".to_string(), traj);
    }
    {
        let traj = integrate(
            model,
            Some(cert),
            |x| {
                let r = filter.filter(x)?;
                let flag = if r.status == FilterStatus::BestEffort {
                    4
                } else {
                    0
                };
                Ok((r.u_s, flag))
            },
            &x0,
            opts.horizon,
            &opts.integrator,
        )?;
        trajectories.insert("advanced".to_string(), traj);
    }

    let mut files = Vec::new();
    std::fs::create_dir_all(&opts.out_dir)?;
    let tag = match scenario {
        Scenario::Fig7 => "fig7",
        Scenario::Fig8 => "fig8",
        Scenario::Fig9 => "fig9",
    };
    for (name, traj) in &trajectories {
        let path = opts.out_dir.join(format!("{tag}_{name}.csv"));
        std::fs::write(&path, traj.to_csv())?;
        files.push(path);
    }
    files.extend(write_plots(tag, &opts.out_dir, model, &trajectories)?);

    let summary = summarize(scenario, model, &trajectories);
    let path = opts.out_dir.join(format!("{tag}_summary.txt"));
    std::fs::write(&path, &summary)?;
    files.push(path);

    Ok(ScenarioArtifacts {
        x0,
        trajectories,
        files,
        summary,
    })
}

fn scenario_start(
    scenario: Scenario,
    cert: &SafetyCertificate,
    model: &PlantModel,
) -> Result<Vec<f64>, SfError> {
    let n = model.n();
    match scenario {
        // near the upper dc-voltage bound with a current push: the legacy
        // transient rings across the constraints while the filter brakes
        Scenario::Fig7 => {
            let mut dir = vec![0.0; n];
            dir[0] = 0.18;
            dir[1] = 1.0;
            start_on_barrier_shell(cert, &dir, -0.05)
        }
        // inside the transitional region near the barrier: the basic filter
        // rides the boundary, the advanced filter dissipates
        Scenario::Fig8 => {
            let mut dir = vec![0.0; n];
            dir[0] = -0.35;
            dir[1] = 0.6;
            start_on_barrier_shell(cert, &dir, -0.02)
        }
        // 4-state variant: nonzero quadrature reference, zero initial
        // absolute current (error = -reference)
        Scenario::Fig9 => {
            let mut dir = vec![0.0; n];
            if n < 4 {
                return Err(SfError::Model(
                    "fig9 requires the 4-state reference-tracking model".to_string(),
                ));
            }
            dir[2] = -1.0;
            dir[3] = 1.0;
            // pull inside the safe set if the full reference step leaves it
            if cert.b_max(&dir)? < 0.0 {
                Ok(dir)
            } else {
                start_on_barrier_shell(cert, &dir, -0.05)
            }
        }
    }
}

fn write_plots(
    tag: &str,
    dir: &Path,
    model: &PlantModel,
    trajs: &BTreeMap<String, Trajectory>,
) -> Result<Vec<PathBuf>, SfError> {
    let mut files = Vec::new();
    let quantities: [(&str, Box<dyn Fn(&Trajectory, usize) -> f64>); 4] = [
        (
            "vdc",
            Box::new(|tr: &Trajectory, k: usize| 1.0 + tr.x[k][0]),
        ),
        (
            "current_norm",
            Box::new(|tr: &Trajectory, k: usize| {
                (tr.x[k][1].powi(2) + tr.x[k][2].powi(2)).sqrt()
            }),
        ),
        (
            "input_norm",
            Box::new(|tr: &Trajectory, k: usize| {
                tr.u_s[k].iter().map(|u| u * u).sum::<f64>().sqrt()
            }),
        ),
        ("V", Box::new(|tr: &Trajectory, k: usize| tr.v[k])),
    ];
    let _ = model;
    for (qname, f) in &quantities {
        let mut series_data: Vec<(String, Vec<f64>)> = Vec::new();
        let mut tgrid: Vec<f64> = Vec::new();
        for (name, tr) in trajs {
            let ys: Vec<f64> = (0..tr.len()).map(|k| f(tr, k)).collect();
            if tgrid.len() < tr.len() {
                tgrid = tr.t.clone();
            }
            series_data.push((name.clone(), ys));
        }
        let series: Vec<(&str, &[f64])> = series_data
            .iter()
            .map(|(n, y)| (n.as_str(), y.as_slice()))
            .collect();
        let svg = line_chart_svg(&format!("{tag}: {qname}"), &tgrid, &series, qname);
        let path = dir.join(format!("{tag}_{qname}.svg"));
        std::fs::write(&path, svg)?;
        files.push(path);
    }
    Ok(files)
}

fn summarize(
    scenario: Scenario,
    model: &PlantModel,
    trajs: &BTreeMap<String, Trajectory>,
) -> String {
    let mut s = format!("scenario: {scenario:?}\n");
    for (name, tr) in trajs {
        let state_viol = tr.flags.iter().filter(|&&f| f & 1 != 0).count();
        let input_viol = tr.flags.iter().filter(|&&f| f & (2 | 4) != 0).count();
        let worst_w = tr
            .x
            .iter()
            .map(|x| {
                model
                    .w
                    .iter()
                    .map(|w| w.eval(x).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        s.push_str(&format!(
            "{name}: samples={}, allowable-violations={}, input-flags={}, worst w = {:.4e}\n",
            tr.len(),
            state_viol,
            input_viol,
            worst_w
        ));
    }
    s
}
