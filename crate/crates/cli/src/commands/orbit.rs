//! `lorentz orbit` — iterate the collision map from a seeded or explicit
//! start and log every collision.

use super::{analysis_table, OrbitParams};
use crate::output::{f17, RunDir};
use crate::{CliError, CliResult};
use lorentz_core::billiard_map::{forward_map, sample_nu, PhasePoint};
use lorentz_core::error::Error;
use lorentz_core::numeric::sigma_max;
use serde_json::json;

pub fn run(p: &OrbitParams, run: &mut RunDir) -> CliResult<String> {
    let table = analysis_table(p.r, p.tau_max)?;
    let start = match (p.s0, p.phi0) {
        (Some(s), Some(phi)) => {
            let half = std::f64::consts::FRAC_PI_2;
            if !(phi > -half && phi < half) {
                return Err(CliError::Usage(format!(
                    "--phi0 must lie strictly inside (-pi/2, pi/2), got {phi}"
                )));
            }
            PhasePoint::new(table.wrap_s(s), phi)
        }
        _ => sample_nu(&table, 1, p.seed)[0],
    };

    let header = [
        "step",
        "s",
        "phi",
        "tau",
        "n_symbol",
        "dx",
        "dy",
        "log_expansion",
    ];
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(p.steps as usize);
    let mut x = start;
    let mut escaped = None;
    for step in 0..p.steps {
        match forward_map(&table, x) {
            Ok(c) => {
                rows.push(vec![
                    step.to_string(),
                    f17(c.from.s),
                    f17(c.from.phi),
                    f17(c.tau),
                    c.n_symbol.to_string(),
                    c.displacement.0.to_string(),
                    c.displacement.1.to_string(),
                    f17(sigma_max(&c.derivative).ln()),
                ]);
                x = c.to;
            }
            Err(Error::Escape { .. }) => {
                escaped = Some(step);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    run.write_rows("orbit", p.format, &header, &rows)?;
    run.write_json(
        "summary.json",
        &json!({
            "r": p.r,
            "seed": p.seed,
            "requested_steps": p.steps,
            "recorded_steps": rows.len(),
            "start": {"s": start.s, "phi": start.phi},
            "escaped_at": escaped,
            "tau_max": p.tau_max,
        }),
    )?;

    Ok(match escaped {
        Some(step) => format!(
            "orbit escaped at step {step} (free flight exceeded tau_max = {}); {} collisions recorded",
            p.tau_max,
            rows.len()
        ),
        None => format!("{} collisions recorded from (s, phi) = ({}, {})", rows.len(), start.s, start.phi),
    })
}
