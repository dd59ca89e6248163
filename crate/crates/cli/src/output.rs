//! CSV and JSON emission. Numbers use the shortest representation that
//! parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use tcs_core::certificate::{FlockingCertificate, LimitRow, Mode, SearchOutcome};
use tcs_core::dynamics::{Diameters, Trajectory};

use crate::error::{CliError, Result};

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_owned(), source })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
}

/// One row per agent and sample: `t,agent,x1..xd,v1..vd,beta,theta`.
pub fn trajectory_csv(traj: &Trajectory, dim: usize) -> String {
    let mut out = String::from("t,agent");
    for k in 1..=dim {
        let _ = write!(out, ",x{k}");
    }
    for k in 1..=dim {
        let _ = write!(out, ",v{k}");
    }
    out.push_str(",beta,theta\n");
    for s in traj.samples() {
        for i in 0..s.n() {
            let _ = write!(out, "{},{i}", num(s.t));
            for k in 0..dim {
                let _ = write!(out, ",{}", num(s.x[(i, k)]));
            }
            for k in 0..dim {
                let _ = write!(out, ",{}", num(s.v[(i, k)]));
            }
            let _ = writeln!(out, ",{},{}", num(s.beta[i]), num(1.0 / s.beta[i]));
        }
    }
    out
}

/// `t,DX,DV,DB,DTheta,Ru`, plus `envB,envV` when envelopes are given.
pub fn diagnostics_csv(times: &[f64], diags: &[Diameters], envelopes: Option<&[(f64, f64)]>) -> String {
    let mut out = String::from("t,DX,DV,DB,DTheta,Ru");
    if envelopes.is_some() {
        out.push_str(",envB,envV");
    }
    out.push('\n');
    for (k, (t, d)) in times.iter().zip(diags).enumerate() {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            num(*t),
            num(d.dx),
            num(d.dv),
            num(d.dbeta),
            num(d.dtheta),
            num(d.ru)
        );
        if let Some(env) = envelopes {
            let _ = write!(out, ",{},{}", num(env[k].0), num(env[k].1));
        }
        out.push('\n');
    }
    out
}

pub fn certificate_json(cert: &FlockingCertificate, search: &SearchOutcome) -> Value {
    let constants: serde_json::Map<String, Value> =
        cert.constants.named(cert.mode).iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let e = &cert.envelope;
    let window = match cert.mode {
        Mode::Continuous => json!({ "delta": cert.window }),
        Mode::Discrete => json!({ "n0": cert.window as u64, "h": cert.h }),
    };
    json!({
        "mode": cert.mode.as_str(),
        "constants": constants,
        "lhs": cert.lhs,
        "x_inf": cert.x_inf,
        "satisfied": cert.satisfied,
        "h_certified": cert.h_certified,
        "usable": cert.usable,
        "reason": cert.reason,
        "window": window,
        "envelopes": {
            "B": { "base": e.coldness_base, "prefactor": e.db0, "window": cert.window },
            "V": {
                "base": e.velocity_base,
                "prefactor": e.dv0,
                "window": cert.window,
                "coupling": e.coupling,
                "forcing": e.forcing,
                "cross_base": e.cross_base,
            },
        },
        "search": {
            "evaluated": search.evaluated,
            "grid_index": search.best_index.map(|(i, j)| [i, j]),
        },
    })
}

pub fn limit_csv(rows: &[LimitRow]) -> String {
    let mut out = String::from("h,n0,lhs_discrete,lhs_continuous,gap,status\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let status = match &r.skipped {
            Some(reason) => format!("skipped: {}", reason.replace(',', ";")),
            None => "ok".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.h),
            r.n0,
            opt(r.lhs_discrete),
            num(r.lhs_continuous),
            opt(r.gap),
            status
        );
    }
    out
}
