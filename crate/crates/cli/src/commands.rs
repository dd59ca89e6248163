use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use tcs_core::certificate::{
    continuum_limit_check, envelope_b_continuous, envelope_b_discrete, envelope_v_continuous, envelope_v_discrete,
    search_continuous, search_discrete, CertificateInputs, ContinuousParams, FlockingCertificate, Mode,
    SearchOutcome,
};
use tcs_core::dynamics::{simulate_continuous, simulate_discrete, EnsembleState, ModelSpec, Trajectory};
use tcs_core::Error;

use crate::error::{CliError, Result};
use crate::output::{self, num};
use crate::scenario::{RunMode, Scenario};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// 0 on success, 1 for an unsatisfied certificate or a rootless graph.
    pub code: u8,
    pub report: String,
}

impl Outcome {
    fn new(ok: bool, report: String) -> Self {
        Self { code: if ok { 0 } else { 1 }, report }
    }
}

pub fn graph_info(s: &Scenario, out: &Path) -> Result<Outcome> {
    let g = s.build_graph()?;
    let roots = g.roots();
    let mut report = String::new();
    let _ = writeln!(report, "N: {}", g.n());
    let _ = writeln!(report, "edges: {}", g.edge_count());
    let _ = writeln!(report, "symmetric: {}", g.is_symmetric());
    let _ = writeln!(report, "roots: {roots:?}");
    let depth = g.smallest_depth().ok();
    match depth {
        Some(d) => {
            let _ = writeln!(report, "gamma: {d}");
        }
        None => report.push_str("no spanning tree\n"),
    }
    output::write_file(out, "graph_info.txt", &report)?;
    Ok(Outcome::new(depth.is_some(), report))
}

/// The certificate selected by grid search over the scenario's parameters:
/// the best satisfied point, else the closest failing one.
pub struct Certified {
    pub certificate: FlockingCertificate,
    pub search: SearchOutcome,
    pub inputs: CertificateInputs,
}

pub fn select_certificate(s: &Scenario, model: &ModelSpec, state: &EnsembleState) -> Result<Certified> {
    let spec = s.certificate()?;
    let inputs = CertificateInputs::from_state(model, state)?;
    let x_grid = spec.x_inf.values()?;
    let search = match s.mode {
        RunMode::Continuous => {
            let delta = spec
                .delta
                .as_ref()
                .ok_or_else(|| CliError::Invalid("continuous certificate needs `certificate.delta`".into()))?;
            search_continuous(&inputs, &x_grid, &delta.values()?)
        }
        RunMode::Discrete => {
            let n0 = spec
                .n0
                .as_ref()
                .ok_or_else(|| CliError::Invalid("discrete certificate needs `certificate.n0`".into()))?;
            search_discrete(&inputs, s.numerics()?.h, &x_grid, &n0.values()?)
        }
    };
    let certificate = search
        .best
        .clone()
        .or_else(|| search.best_failing.clone())
        .ok_or_else(|| CliError::Invalid("no certificate grid point could be evaluated".into()))?;
    Ok(Certified { certificate, search, inputs })
}

fn envelope_columns(cert: &FlockingCertificate, traj: &Trajectory, h: f64) -> Result<Vec<(f64, f64)>> {
    traj.samples()
        .iter()
        .map(|state| {
            let pair = match cert.mode {
                Mode::Continuous => (envelope_b_continuous(cert, state.t)?, envelope_v_continuous(cert, state.t)?),
                Mode::Discrete => {
                    let step = (state.t / h).round() as u64;
                    (envelope_b_discrete(cert, step)?, envelope_v_discrete(cert, step)?)
                }
            };
            Ok(pair)
        })
        .collect::<std::result::Result<_, Error>>()
        .map_err(CliError::from)
}

fn write_run(out: &Path, traj: &Trajectory, dim: usize, envelopes: Option<&[(f64, f64)]>) -> Result<()> {
    output::write_file(out, "trajectory.csv", &output::trajectory_csv(traj, dim))?;
    let diags = traj.diagnostics();
    output::write_file(out, "diagnostics.csv", &output::diagnostics_csv(&traj.times(), &diags, envelopes))
}

pub fn simulate(s: &Scenario, out: &Path) -> Result<Outcome> {
    let model = s.build_model()?;
    let s0 = s.build_initial(model.n())?;
    let numerics = s.numerics()?;
    let certified = match s.certificate {
        Some(_) => Some(select_certificate(s, &model, &s0)?),
        None => None,
    };
    let run = match s.mode {
        RunMode::Continuous => {
            let t_end = numerics
                .t_end
                .ok_or_else(|| CliError::Invalid("continuous runs need `numerics.t_end`".into()))?;
            simulate_continuous(&s0, &model, numerics.h, t_end, numerics.sample_every)
        }
        RunMode::Discrete => {
            let n_steps = numerics
                .n_steps
                .ok_or_else(|| CliError::Invalid("discrete runs need `numerics.n_steps`".into()))?;
            simulate_discrete(&s0, &model, numerics.h, n_steps, numerics.sample_every)
        }
    };
    let (traj, failure) = match run {
        Ok(traj) => (traj, None),
        Err(interrupted) if interrupted.partial.is_empty() => return Err(interrupted.error.into()),
        Err(interrupted) => (interrupted.partial, Some(interrupted.error)),
    };
    let usable = certified.as_ref().filter(|c| c.certificate.usable);
    let envelopes = match usable {
        Some(c) => Some(envelope_columns(&c.certificate, &traj, numerics.h)?),
        None => None,
    };
    write_run(out, &traj, s0.dim(), envelopes.as_deref())?;
    if let Some(error) = failure {
        let record = json!({
            "error": error.to_string(),
            "t": match &error { Error::Integration { t, .. } => Some(*t), _ => None },
            "samples_written": traj.len(),
        });
        output::write_file(out, "error.json", &format!("{record:#}\n"))?;
        return Err(error.into());
    }
    let mut report = String::new();
    let _ = writeln!(report, "samples: {}", traj.len());
    if let Some(last) = traj.diagnostics().last() {
        let _ = writeln!(
            report,
            "final: DX={} DV={} DB={} DTheta={}",
            num(last.dx),
            num(last.dv),
            num(last.dbeta),
            num(last.dtheta)
        );
    }
    if s.mode == RunMode::Discrete {
        let _ = writeln!(report, "uncertified steps: {}", traj.uncertified_steps());
    }
    if let Some(c) = &certified {
        let _ = writeln!(
            report,
            "certificate: satisfied={} usable={}",
            c.certificate.satisfied, c.certificate.usable
        );
    }
    Ok(Outcome::new(true, report))
}

pub fn certify(s: &Scenario, out: &Path) -> Result<Outcome> {
    let model = s.build_model()?;
    let s0 = s.build_initial(model.n())?;
    let c = select_certificate(s, &model, &s0)?;
    let value = output::certificate_json(&c.certificate, &c.search);
    output::write_file(out, "certificate.json", &format!("{value:#}\n"))?;
    let cert = &c.certificate;
    let mut report = format!(
        "{} certificate: lhs={} x_inf={} satisfied={}\n",
        cert.mode.as_str(),
        num(cert.lhs),
        num(cert.x_inf),
        cert.satisfied
    );
    if let Some(reason) = &cert.reason {
        let _ = writeln!(report, "reason: {reason}");
    }
    Ok(Outcome::new(cert.satisfied, report))
}

pub fn limit_check(s: &Scenario, out: &Path) -> Result<Outcome> {
    let model = s.build_model()?;
    let s0 = s.build_initial(model.n())?;
    let inputs = CertificateInputs::from_state(&model, &s0)?;
    let spec = s.certificate()?;
    let delta = spec
        .delta
        .as_ref()
        .ok_or_else(|| CliError::Invalid("limit-check needs `certificate.delta`".into()))?
        .values()?;
    let x_grid = spec.x_inf.values()?;
    // continuous point to compare against: best of the grid, else its first point
    let search = search_continuous(&inputs, &x_grid, &delta);
    let (ix, id) = search.best_index.unwrap_or((0, 0));
    let params = ContinuousParams { x_inf: x_grid[ix], delta: delta[id] };
    let hs = match &spec.limit_h {
        Some(hs) if !hs.is_empty() => hs.clone(),
        Some(_) => return Err(CliError::Invalid("`certificate.limit_h` is empty".into())),
        None => [8.0, 64.0, 1024.0].iter().map(|k| params.delta / k).collect(),
    };
    let rows = continuum_limit_check(&inputs, &params, &hs)?;
    let csv = output::limit_csv(&rows);
    output::write_file(out, "limit_check.csv", &csv)?;
    let report = format!("x_inf={} delta={}\n{csv}", num(params.x_inf), num(params.delta));
    Ok(Outcome::new(true, report))
}
