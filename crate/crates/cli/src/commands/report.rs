//! `lorentz report` — one-shot summary battery: exponent estimate, measure
//! invariance, cell expansion laws, crossing constants, both Markov chains,
//! and word shadowing, written as a single long-format table.

use super::{analysis_table, log_spaced, ReportParams};
use crate::output::{f17, RunDir};
use crate::CliResult;
use lorentz_core::billiard_map::{invariance_test, lyapunov_estimate, MapVariant};
use lorentz_core::cells::{
    estimate_constants, expansion_stats, log_log_slope, supersingular_points, AnchorFrame,
    ConstantsScan, Orientation,
};
use lorentz_core::measures::{mu2_build, StationaryFamily};
use lorentz_core::shadowing::{exponent_vs_symbols, tiered_words};
use lorentz_core::symbolic::{divergence_series, Ladder, LadderWalk};
use serde_json::json;

pub fn run(p: &ReportParams, run: &mut RunDir) -> CliResult<String> {
    let table = analysis_table(p.r, p.tau_max)?;
    let anchors = supersingular_points(&table);
    let frame = AnchorFrame::new(&table, anchors[0].clone());
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut aggregates = serde_json::Map::new();

    // Positive exponent against the short-radius reference.
    let collisions = if p.quick { 100_000 } else { 1_000_000 };
    let est = lyapunov_estimate(&table, collisions, p.seed);
    let reference = 2.0 * (1.0 / p.r).ln();
    rows.push(vec![
        "lyapunov".into(),
        "lambda_plus".into(),
        f17(p.r),
        f17(est.lambda_plus),
        f17(est.std_error),
    ]);
    rows.push(vec![
        "lyapunov".into(),
        "two_ln_inv_r".into(),
        f17(p.r),
        f17(reference),
        String::new(),
    ]);
    notes.push(format!(
        "lambda_plus = {:.4} +- {:.4} (2 ln(1/r) = {:.4})",
        est.lambda_plus, est.std_error, reference
    ));
    aggregates.insert(
        "lyapunov".into(),
        json!({"lambda_plus": est.lambda_plus, "std_error": est.std_error, "reference": reference}),
    );

    // Invariance of the cosine-weighted measure, with a distorted control.
    let inv_samples = if p.quick { 100_000 } else { 1_000_000 };
    let exact = invariance_test(&table, inv_samples, p.seed, MapVariant::Exact);
    let distorted = invariance_test(&table, inv_samples, p.seed, MapVariant::PhiDistorted);
    for (name, rep) in [("exact", &exact), ("distorted", &distorted)] {
        rows.push(vec![
            "invariance".into(),
            format!("max_standardized_{name}"),
            f17(inv_samples as f64),
            f17(rep.max_standardized),
            String::new(),
        ]);
    }
    notes.push(format!(
        "invariance max |z|: exact {:.2}, distorted control {:.2}",
        exact.max_standardized, distorted.max_standardized
    ));
    aggregates.insert(
        "invariance".into(),
        json!({"exact": exact.max_standardized, "distorted": distorted.max_standardized}),
    );

    // One-step expansion laws across cell labels.
    let (n_hi, points) = if p.quick { (500, 12) } else { (2000, 25) };
    let labels = log_spaced(50, n_hi, points);
    let mut slopes = serde_json::Map::new();
    for (o, oname) in [
        (Orientation::Forward, "forward"),
        (Orientation::Backward, "backward"),
    ] {
        let samples = expansion_stats(&frame, o, &labels)?;
        for s in &samples {
            rows.push(vec![
                "expansion".into(),
                oname.into(),
                f17(s.n as f64),
                f17(s.expansion),
                f17(s.band_width),
            ]);
        }
        let (slope, se) = log_log_slope(&samples, |s| s.expansion);
        rows.push(vec![
            "expansion".into(),
            format!("{oname}_slope"),
            f17(labels[0] as f64),
            f17(slope),
            f17(se),
        ]);
        notes.push(format!("{oname} expansion slope {slope:.4} +- {se:.4}"));
        slopes.insert(oname.into(), json!({"slope": slope, "se": se}));
    }
    aggregates.insert("expansion".into(), slopes.into());

    // Crossing constants.
    let scan = if p.quick {
        ConstantsScan {
            probe: vec![8, 12, 18, 27, 40, 60],
            holdout: vec![10, 15, 22, 33],
            ..ConstantsScan::default()
        }
    } else {
        ConstantsScan::default()
    };
    let consts = estimate_constants(&frame, &scan)?;
    rows.push(vec![
        "constants".into(),
        "c".into(),
        f17(p.r),
        f17(consts.c),
        f17(consts.n_star as f64),
    ]);
    notes.push(format!(
        "window constant c = {:.2}, n* = {}",
        consts.c, consts.n_star
    ));
    aggregates.insert(
        "constants".into(),
        json!({"c": consts.c, "n_star": consts.n_star, "floored": consts.floored}),
    );

    // Finite-entropy chain: rate below ln 2, divergent symbol logs.
    let ladder = Ladder::new(1.3, 14, 40)?;
    let walk = LadderWalk;
    let h1 = walk.entropy_rate();
    let ln2 = 2f64.ln();
    rows.push(vec![
        "mu1".into(),
        "entropy_rate".into(),
        "0".into(),
        f17(h1),
        f17(ln2),
    ]);
    let depths: Vec<u64> = (1..=(ladder.len() - 1) as u64).collect();
    let sums = divergence_series(
        |i| walk.stationary(i) * ladder.ln(i as usize).expect("state within depth"),
        &depths,
    );
    for (&i, &s) in depths.iter().zip(&sums) {
        rows.push(vec![
            "mu1".into(),
            "symbol_log_partial_sum".into(),
            f17(i as f64),
            f17(s),
            f17(i as f64 * ln2),
        ]);
    }
    notes.push(format!(
        "mu1: h = {h1:.6} <= ln 2 = {ln2:.6}; S_I >= I ln 2 up to I = {}",
        depths.len()
    ));
    aggregates.insert(
        "mu1".into(),
        json!({"entropy_rate": h1, "bound": ln2, "ladder_depth": ladder.len()}),
    );

    // Infinite-entropy chain: unbounded entropy partial sums.
    let family = StationaryFamily::slow_log_squared(1.5)?;
    let mut chain = mu2_build(family, 3.0, 1.05, 3)?;
    let checkpoints: &[u64] = if p.quick {
        &[25, 100, 400]
    } else {
        &[25, 100, 400, 1600]
    };
    let mut mu2_sums = Vec::new();
    for &i in checkpoints {
        let s = chain.entropy_partial_sum(i)?;
        mu2_sums.push(s);
        rows.push(vec![
            "mu2".into(),
            "entropy_partial_sum".into(),
            f17(i as f64),
            f17(s),
            String::new(),
        ]);
    }
    notes.push(format!(
        "mu2 entropy partial sums: [{}]",
        mu2_sums
            .iter()
            .map(|s| format!("{s:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    aggregates.insert(
        "mu2".into(),
        json!({"checkpoints": checkpoints, "entropy_partial_sums": mu2_sums}),
    );

    // Shadowed words: exponent against mean log symbol.
    let (count, len, hi) = if p.quick { (8, 4, 60) } else { (12, 6, 80) };
    let words = tiered_words(count, len, 20, hi, p.seed);
    match exponent_vs_symbols(&frame, &words, 1e-9, 0.5) {
        Ok(reg) => {
            for &(x, y) in &reg.points {
                rows.push(vec![
                    "shadow".into(),
                    "exponent_vs_mean_log".into(),
                    f17(x),
                    f17(y),
                    String::new(),
                ]);
            }
            rows.push(vec![
                "shadow".into(),
                "slope".into(),
                f17(len as f64),
                f17(reg.slope),
                f17(reg.slope_se),
            ]);
            notes.push(format!(
                "shadow regression slope {:.3} +- {:.3} over {}/{} words",
                reg.slope,
                reg.slope_se,
                reg.points.len(),
                reg.attempted
            ));
            aggregates.insert(
                "shadow".into(),
                json!({"slope": reg.slope, "slope_se": reg.slope_se,
                       "located": reg.points.len(), "attempted": reg.attempted}),
            );
        }
        Err(e) => {
            notes.push(format!("shadow regression unavailable: {e}"));
            aggregates.insert("shadow".into(), json!({"error": e.to_string()}));
        }
    }

    let header = ["section", "series", "x", "y", "extra"];
    run.write_rows("report", p.format, &header, &rows)?;
    run.write_json(
        "report.json",
        &json!({
            "r": p.r,
            "seed": p.seed,
            "quick": p.quick,
            "sections": serde_json::Value::Object(aggregates),
        }),
    )?;
    Ok(notes.join("\n"))
}
