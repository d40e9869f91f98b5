//! `lorentz lyapunov` — estimate the positive Lyapunov exponent of the
//! collision map under the cosine-weighted invariant density.

use super::{analysis_table, LyapunovParams};
use crate::output::RunDir;
use crate::CliResult;
use lorentz_core::billiard_map::lyapunov_estimate;
use serde_json::json;

pub fn run(p: &LyapunovParams, run: &mut RunDir) -> CliResult<String> {
    let table = analysis_table(p.r, p.tau_max)?;
    let est = lyapunov_estimate(&table, p.collisions, p.seed);
    let reference = 2.0 * (1.0 / p.r).ln();
    run.write_json(
        "lyapunov.json",
        &json!({
            "r": p.r,
            "seed": p.seed,
            "collisions": est.collisions,
            "lambda_plus": est.lambda_plus,
            "std_error": est.std_error,
            "escape_count": est.escapes,
            "two_ln_inv_r": reference,
            "tau_max": p.tau_max,
        }),
    )?;
    Ok(format!(
        "lambda_plus = {:.6} +- {:.6} over {} collisions (2 ln(1/r) = {:.6}, {} escapes)",
        est.lambda_plus, est.std_error, est.collisions, reference, est.escapes
    ))
}
