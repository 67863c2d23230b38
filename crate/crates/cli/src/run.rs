use std::fmt::Write as _;

use anyhow::{Context, Result};
use dicke_core::chaos::{
    chaoticity_map_energy_gamma, chaoticity_map_qp, poincare_section, ChaoticityMap, SectionPoint,
};
use dicke_core::equilibria::{bifurcation_scan, classify, critical_points, gspt_curves, write_phase_diagram_csv};
use dicke_core::esqpt::{self, probe_grid, probe_trajectory};
use dicke_core::otoc::run_otoc;
use dicke_core::tsa::{moving_average, rosenstein_lambda, TimeSeries};
use dicke_core::{integrate, ModelParams};
use serde_json::{json, Value};

use crate::config::{Experiment, Plan};

/// Files produced by a run, in write order, plus extra manifest fields.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Map<String, Value>,
}

impl Outcome {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push((name.into(), bytes));
    }

    fn add_json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(v)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.to_string(), v);
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn execute(plan: &Plan) -> Result<Outcome> {
    let mp = plan.config.params;
    let mut out = Outcome::default();
    match plan.experiment {
        Experiment::Simulate => simulate(plan, &mp, &mut out)?,
        Experiment::Equilibria => equilibria(plan, &mp, &mut out)?,
        Experiment::Gspt => gspt(plan, &mp, &mut out)?,
        Experiment::LyapunovMap => {
            let b = plan.config.lyapunov_map.as_ref().expect("validated");
            let map = chaoticity_map_energy_gamma(
                &b.energy.axis("E", "energy")?,
                &b.gamma_ratio.axis("gamma_ratio", "gamma_ratio")?,
                &mp,
                b.n_ic,
                &b.lyapunov,
                plan.seed.expect("validated"),
                plan.workers,
            )?;
            write_map(&map, &mut out)?;
        }
        Experiment::QpMap => {
            let b = plan.config.qp_map.as_ref().expect("validated");
            let map = chaoticity_map_qp(
                b.energy,
                &mp,
                &b.atom_q.axis("Q", "Q")?,
                &b.atom_p.axis("P", "P")?,
                b.n_per_cell,
                &b.lyapunov,
                plan.seed.expect("validated"),
                plan.workers,
            )?;
            write_map(&map, &mut out)?;
        }
        Experiment::Rosenstein => rosenstein(plan, &mp, &mut out)?,
        Experiment::Otoc => {
            let b = plan.config.otoc.as_ref().expect("validated");
            let res = run_otoc(&mp, &b.ensemble, b.fit_range, b.lyapunov.as_ref(), plan.workers)?;
            out.add("otoc.csv", csv_bytes(|w| res.series.write_csv(w))?);
            out.add_json("otoc.json", &res.report_json(&mp, &b.ensemble))?;
            out.note("otoc_center", json!(b.ensemble.center));
            out.note("Lambda", json!(res.growth.rate));
            out.note("lambda_mean", json!(res.lambda_mean));
        }
        Experiment::Esqpt => {
            let b = plan.config.esqpt.as_ref().expect("validated");
            let ratios = b.gamma_ratios.values("gamma_ratios")?;
            let mut verdicts = probe_grid(&ratios, &mp, &b.probe, plan.workers)?;
            if b.dump_trajectories {
                for v in &mut verdicts {
                    let name = format!("trajectories/esqpt_{}_rep{}.csv", v.gamma_ratio, v.worst_rep);
                    let traj = probe_trajectory(v.gamma_ratio, v.worst_rep, &mp, &b.probe)?;
                    out.add(name.clone(), csv_bytes(|w| traj.write_csv(w))?);
                    v.trajectory_ref = Some(name);
                }
            }
            out.add("esqpt.csv", csv_bytes(|w| esqpt::write_csv(w, &verdicts))?);
            out.add_json("esqpt.json", &serde_json::to_value(&verdicts)?)?;
        }
    }
    Ok(out)
}

fn simulate(plan: &Plan, mp: &ModelParams, out: &mut Outcome) -> Result<()> {
    let b = plan.config.simulate.as_ref().expect("validated");
    let traj = integrate(&b.initial, mp, b.t_end, &b.integrator)?;
    out.add("trajectory.csv", csv_bytes(|w| traj.write_csv(w))?);
    if let Some(dir) = b.section {
        let pts = poincare_section(&traj, dir);
        out.add("section.csv", section_csv(&pts).into_bytes());
        out.note("section_points", json!(pts.len()));
    }
    out.note("samples", json!(traj.len()));
    out.note("max_relative_energy_drift", json!(traj.max_relative_energy_drift()));
    Ok(())
}

fn section_csv(pts: &[SectionPoint]) -> String {
    let mut s = String::from("t,q,P,Q\n");
    for p in pts {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", p.t, p.q, p.atom_p, p.atom_q);
    }
    s
}

fn equilibria(plan: &Plan, mp: &ModelParams, out: &mut Outcome) -> Result<()> {
    let ratios = plan.config.equilibria.as_ref().expect("validated").gamma_ratios.values("gamma_ratios")?;
    let mut rows = Vec::with_capacity(ratios.len());
    for &r in &ratios {
        let m = mp.with_gamma_ratio(r);
        let reports = critical_points(&m)?
            .iter()
            .map(|p| classify(p, &m))
            .collect::<dicke_core::Result<Vec<_>>>()?;
        rows.push(json!({ "gamma_ratio": r, "gamma": m.gamma, "equilibria": reports }));
    }
    let scan = bifurcation_scan(&ratios, mp)?;
    let mut csv = String::from("gamma_ratio,count,origin_class\n");
    for s in &scan {
        let _ = writeln!(csv, "{},{},{}", s.gamma_ratio, s.count, s.origin_class);
    }
    out.add("bifurcation.csv", csv.into_bytes());
    out.add_json("equilibria.json", &Value::Array(rows))?;
    Ok(())
}

fn gspt(plan: &Plan, mp: &ModelParams, out: &mut Outcome) -> Result<()> {
    let ratios = plan.config.gspt.as_ref().expect("validated").gamma_ratios.values("gamma_ratios")?;
    let curves = gspt_curves(&ratios, mp)?;
    let scan = bifurcation_scan(&ratios, mp)?;
    out.add("gspt.csv", csv_bytes(|w| write_phase_diagram_csv(w, &curves, &scan))?);
    Ok(())
}

fn write_map(map: &ChaoticityMap, out: &mut Outcome) -> Result<()> {
    out.add("map.csv", csv_bytes(|w| map.write_csv(w))?);
    out.add_json("map.json", &map.sidecar_json())?;
    out.note("masked_cells", json!(map.values.iter().filter(|v| v.is_none()).count()));
    Ok(())
}

fn rosenstein(plan: &Plan, mp: &ModelParams, out: &mut Outcome) -> Result<()> {
    let b = plan.config.rosenstein.as_ref().expect("validated");
    let mut ts = match (&b.input, &b.simulate) {
        (Some(path), _) => {
            let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let cols: Option<Vec<&str>> = b.columns.as_ref().map(|c| c.iter().map(String::as_str).collect());
            TimeSeries::from_csv(file, cols.as_deref())?
        }
        (None, Some(src)) => TimeSeries::from_trajectory(&integrate(&src.initial, mp, src.t_end, &src.integrator)?)?,
        (None, None) => unreachable!("validated"),
    };
    if let Some(w) = b.smoothing {
        ts = moving_average(&ts, w)?;
    }
    let report = rosenstein_lambda(&ts, &b.estimator)?;
    out.note("lambda", json!(report.lambda));
    let mut v = serde_json::to_value(&report)?;
    v["smoothing"] = json!(b.smoothing);
    v["samples"] = json!(ts.len());
    v["t_s"] = json!(ts.t_s);
    out.add_json("rosenstein.json", &v)?;
    Ok(())
}
