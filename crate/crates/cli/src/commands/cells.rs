//! `lorentz cells ...` — empirical cell structure in a grazing-anchor frame:
//! label rasters, per-band expansion laws, pairwise intersections, and the
//! fitted crossing constants.

use super::{
    analysis_table, orientation_name, ConstantsParams, ExpansionParams, IntersectParams,
    ScanParams,
};
use crate::output::{f17, RunDir};
use crate::{CliError, CliResult};
use lorentz_core::billiard_map::{forward_map, inverse_map};
use lorentz_core::cells::{
    estimate_constants, expansion_stats, intersection_check, ladder_window, log_log_slope,
    scan_cells, supersingular_points, AnchorFrame, ConstantsScan, EdgeSide, Orientation,
    ScanRegion,
};
use lorentz_core::geometry::BilliardTable;
use lorentz_core::numeric::sigma_max;
use serde_json::json;

fn frame_for<'t>(table: &'t BilliardTable, anchor: usize) -> CliResult<AnchorFrame<'t>> {
    let anchors = supersingular_points(table);
    if anchor >= anchors.len() {
        return Err(CliError::Usage(format!(
            "--anchor {} out of range: the table has {} grazing anchors (see `lorentz table`)",
            anchor,
            anchors.len()
        )));
    }
    Ok(AnchorFrame::new(table, anchors[anchor].clone()))
}

fn edge_name(e: EdgeSide) -> &'static str {
    match e {
        EdgeSide::Lower => "lower",
        EdgeSide::Upper => "upper",
    }
}

pub fn run_scan(p: &ScanParams, run: &mut RunDir) -> CliResult<String> {
    if !(p.n_lo >= 2 && p.n_lo < p.n_hi) {
        return Err(CliError::Usage(format!(
            "need 2 <= n_lo < n_hi, got [{}, {}]",
            p.n_lo, p.n_hi
        )));
    }
    if p.width < 8 || p.height < 8 {
        return Err(CliError::Usage(format!(
            "raster must be at least 8x8, got {}x{}",
            p.width, p.height
        )));
    }
    let table = analysis_table(p.r, p.tau_max)?;
    let frame = frame_for(&table, p.anchor)?;

    let header = [
        "n",
        "orientation",
        "anchor_id",
        "pixels",
        "fragments",
        "s_min",
        "s_max",
        "phi_min",
        "phi_max",
        "width_long",
        "width_short",
        "expansion_median",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut per_orientation = Vec::new();
    let mut notes = Vec::new();

    for o in p.orientation.list() {
        // Window chosen from the extreme bands: the n_lo band is the widest
        // in arclength offset, and the bands for all labels in the range sit
        // between the n_lo and n_hi deflections at the anchor.
        let ext = frame.band_extent(o, p.n_lo)?;
        let b_lo = frame.locate_band(o, p.n_lo, 0.0)?;
        let b_hi = frame.locate_band(o, p.n_hi, 0.0)?;
        let u_edges = [b_lo.u_lo, b_lo.u_hi, b_hi.u_lo, b_hi.u_hi];
        let u_min = u_edges.iter().cloned().fold(f64::INFINITY, f64::min);
        let u_max = u_edges.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (u_max - u_min);
        let region = ScanRegion {
            ds_lo: ext.neg - 0.02 * ext.half_span(),
            ds_hi: ext.pos + 0.02 * ext.half_span(),
            u_lo: u_min - pad,
            u_hi: u_max + pad,
        };
        let scan = scan_cells(&frame, o, region, p.width, p.height);
        let oname = orientation_name(o);

        let mut resolved = 0usize;
        for comp in &scan.components {
            if comp.n < p.n_lo || comp.n > p.n_hi || comp.pixels < p.min_pixels {
                continue;
            }
            resolved += 1;
            // Pixel bounding box of the label, then phase coordinates of its
            // corners.
            let mut ds_min = f64::INFINITY;
            let mut ds_max = f64::NEG_INFINITY;
            let mut u_lo = f64::INFINITY;
            let mut u_hi = f64::NEG_INFINITY;
            let mut members = Vec::new();
            for j in 0..scan.height {
                for i in 0..scan.width {
                    if scan.labels[j * scan.width + i] != comp.n {
                        continue;
                    }
                    let (ds, u) = scan.pixel_center(i, j);
                    ds_min = ds_min.min(ds);
                    ds_max = ds_max.max(ds);
                    u_lo = u_lo.min(u);
                    u_hi = u_hi.max(u);
                    members.push((ds, u));
                }
            }
            let corners = [
                frame.point(ds_min, u_lo),
                frame.point(ds_min, u_hi),
                frame.point(ds_max, u_lo),
                frame.point(ds_max, u_hi),
            ];
            let s_min = corners.iter().map(|x| x.s).fold(f64::INFINITY, f64::min);
            let s_max = corners
                .iter()
                .map(|x| x.s)
                .fold(f64::NEG_INFINITY, f64::max);
            let phi_min = corners.iter().map(|x| x.phi).fold(f64::INFINITY, f64::min);
            let phi_max = corners
                .iter()
                .map(|x| x.phi)
                .fold(f64::NEG_INFINITY, f64::max);

            // Median one-step expansion over a strided pixel sample.
            let stride = (members.len() / 64).max(1);
            let mut sigmas: Vec<f64> = Vec::new();
            for (ds, u) in members.iter().step_by(stride) {
                let x = frame.point(*ds, *u);
                let step = match o {
                    Orientation::Forward => forward_map(&table, x),
                    Orientation::Backward => inverse_map(&table, x),
                };
                if let Ok(c) = step {
                    sigmas.push(sigma_max(&c.derivative));
                }
            }
            sigmas.sort_by(|a, b| a.total_cmp(b));
            let median = if sigmas.is_empty() {
                f64::NAN
            } else {
                sigmas[sigmas.len() / 2]
            };

            rows.push(vec![
                comp.n.to_string(),
                oname.to_string(),
                p.anchor.to_string(),
                comp.pixels.to_string(),
                comp.fragments.to_string(),
                f17(s_min),
                f17(s_max),
                f17(phi_min),
                f17(phi_max),
                f17(comp.extent_long),
                f17(comp.extent_short),
                f17(median),
            ]);
        }

        let bytes: Vec<u8> = scan
            .labels
            .iter()
            .flat_map(|&n| n.to_le_bytes())
            .collect();
        run.write(&format!("raster-{oname}.bin"), &bytes)?;
        run.write_json(
            &format!("raster-{oname}.json"),
            &json!({
                "orientation": oname,
                "width": scan.width,
                "height": scan.height,
                "region": {
                    "ds_lo": region.ds_lo,
                    "ds_hi": region.ds_hi,
                    "u_lo": region.u_lo,
                    "u_hi": region.u_hi,
                },
                "encoding": "u64 little-endian, row-major, row 0 at u_lo; 0 = no crossing",
                "components": scan.components.len(),
                "background_pixels": scan.labels.iter().filter(|&&n| n == 0).count(),
            }),
        )?;

        notes.push(format!(
            "{oname}: {resolved}/{} labels resolved at >= {} px",
            p.n_hi - p.n_lo + 1,
            p.min_pixels
        ));
        per_orientation.push(json!({
            "orientation": oname,
            "resolved": resolved,
            "components_total": scan.components.len(),
        }));
    }

    rows.sort_by(|a, b| {
        let (na, nb) = (a[0].parse::<u64>().unwrap(), b[0].parse::<u64>().unwrap());
        na.cmp(&nb).then(a[1].cmp(&b[1]))
    });
    run.write_rows("atlas", p.format, &header, &rows)?;
    run.write_json(
        "scan.json",
        &json!({
            "r": p.r,
            "anchor": p.anchor,
            "n_lo": p.n_lo,
            "n_hi": p.n_hi,
            "width": p.width,
            "height": p.height,
            "min_pixels": p.min_pixels,
            "orientations": per_orientation,
        }),
    )?;
    Ok(format!(
        "anchor {} cell atlas for labels {}..{}: {}",
        p.anchor,
        p.n_lo,
        p.n_hi,
        notes.join("; ")
    ))
}

pub fn run_expansion(p: &ExpansionParams, run: &mut RunDir) -> CliResult<String> {
    if !(p.n_lo >= 2 && p.n_lo < p.n_hi) {
        return Err(CliError::Usage(format!(
            "need 2 <= n_lo < n_hi, got [{}, {}]",
            p.n_lo, p.n_hi
        )));
    }
    let table = analysis_table(p.r, p.tau_max)?;
    let frame = frame_for(&table, p.anchor)?;
    let labels = super::log_spaced(p.n_lo, p.n_hi, p.points);
    let w_bar = frame.corridor_width();

    let header = [
        "orientation",
        "n",
        "u_center",
        "band_width",
        "ds_half_span",
        "expansion",
        "cos_landing",
        "tau",
        "n_times_u",
    ];
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut notes = Vec::new();
    for o in p.orientation.list() {
        let samples = expansion_stats(&frame, o, &labels)?;
        let oname = orientation_name(o);
        for s in &samples {
            rows.push(vec![
                oname.to_string(),
                s.n.to_string(),
                f17(s.u_center),
                f17(s.band_width),
                f17(s.ds_half_span),
                f17(s.expansion),
                f17(s.cos_landing),
                f17(s.tau),
                f17(s.n as f64 * s.u_center),
            ]);
        }
        let (slope, slope_se) = log_log_slope(&samples, |s| s.expansion);
        let (w_slope, w_slope_se) = log_log_slope(&samples, |s| s.band_width);
        let launch_dev = samples
            .iter()
            .map(|s| (s.n as f64 * s.u_center.abs() / w_bar - 1.0).abs())
            .fold(0.0f64, f64::max);
        fits.push(json!({
            "orientation": oname,
            "expansion_slope": slope,
            "expansion_slope_se": slope_se,
            "band_width_slope": w_slope,
            "band_width_slope_se": w_slope_se,
            "max_launch_deviation": launch_dev,
            "samples": samples.len(),
        }));
        notes.push(format!(
            "{oname}: expansion ~ n^{slope:.4} (se {slope_se:.4}), band width ~ n^{w_slope:.4}"
        ));
    }
    run.write_rows("expansion", p.format, &header, &rows)?;
    run.write_json(
        "fits.json",
        &json!({
            "r": p.r,
            "anchor": p.anchor,
            "corridor_width": w_bar,
            "labels": labels,
            "fits": fits,
        }),
    )?;
    Ok(notes.join("; "))
}

pub fn run_intersect(p: &IntersectParams, run: &mut RunDir) -> CliResult<String> {
    let table = analysis_table(p.r, p.tau_max)?;
    let frame = frame_for(&table, p.anchor)?;
    let report = intersection_check(&frame, p.m, p.n)?;

    let header = ["forward_edge", "inverse_edge", "ds", "u", "s", "phi"];
    let rows: Vec<Vec<String>> = report
        .crossings
        .iter()
        .map(|c| {
            let x = frame.point(c.ds, c.u);
            vec![
                edge_name(c.forward_edge).to_string(),
                edge_name(c.inverse_edge).to_string(),
                f17(c.ds),
                f17(c.u),
                f17(x.s),
                f17(x.phi),
            ]
        })
        .collect();
    run.write_rows("corners", p.format, &header, &rows)?;

    let witness = report.witness.map(|(ds, u)| {
        let x = frame.point(ds, u);
        json!({"ds": ds, "u": u, "s": x.s, "phi": x.phi})
    });
    let windows: Vec<_> = [1.05, 1.2, 1.5, 2.0, 3.0]
        .iter()
        .map(|&c| json!({"c": c, "in_window": ladder_window(c, p.m, p.n)}))
        .collect();
    run.write_json(
        "intersect.json",
        &json!({
            "r": p.r,
            "anchor": p.anchor,
            "m": p.m,
            "n": p.n,
            "intersects": report.intersects,
            "complete": report.complete,
            "witness": witness,
            "corner_count": report.crossings.len(),
            "ladder_windows": windows,
        }),
    )?;

    Ok(if report.intersects {
        format!(
            "forward cell {} and backward cell {} intersect ({} corner crossings, complete = {})",
            p.m,
            p.n,
            report.crossings.len(),
            report.complete
        )
    } else {
        format!(
            "forward cell {} and backward cell {} do not intersect",
            p.m, p.n
        )
    })
}

pub fn run_constants(p: &ConstantsParams, run: &mut RunDir) -> CliResult<String> {
    let table = analysis_table(p.r, p.tau_max)?;
    let frame = frame_for(&table, p.anchor)?;
    let scan = ConstantsScan {
        c_lo: p.c_lo,
        c_hi: p.c_hi,
        c_step: p.c_step,
        probe: p.probe.clone(),
        holdout: p.holdout.clone(),
    };
    let report = estimate_constants(&frame, &scan)?;
    run.write_json(
        "constants.json",
        &json!({
            "r": p.r,
            "anchor": p.anchor,
            "grid": {"c_lo": p.c_lo, "c_hi": p.c_hi, "c_step": p.c_step},
            "probe": p.probe,
            "holdout": p.holdout,
            "c": report.c,
            "floored": report.floored,
            "n_star": report.n_star,
            "window_pairs": report.window_pairs,
            "intersecting_pairs": report.intersecting_pairs,
            "rejected_witness": report.rejected_witness,
            "holdout_pairs": report.holdout_pairs,
        }),
    )?;
    Ok(format!(
        "window constant c = {:.2}{} with n* = {}: {} probe pairs in window all intersect ({} intersecting overall); {} held-out window pairs verified",
        report.c,
        if report.floored { " (grid floor)" } else { "" },
        report.n_star,
        report.window_pairs,
        report.intersecting_pairs,
        report.holdout_pairs
    ))
}
