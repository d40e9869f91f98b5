//! `lorentz table` — construct the scatterer configuration and list the
//! open corridors and their grazing anchors.

use super::TableParams;
use crate::output::{f17, RunDir};
use crate::CliResult;
use lorentz_core::cells::supersingular_points;
use lorentz_core::geometry::build_table;
use serde_json::json;

pub fn run(p: &TableParams, run: &mut RunDir) -> CliResult<String> {
    let mut table = build_table(p.r, p.cutoff)?;
    table.tau_max = p.tau_max;
    let anchors = supersingular_points(&table);

    let corridor_header = ["index", "p", "q", "width", "direction_x", "direction_y"];
    let corridor_rows: Vec<Vec<String>> = table
        .corridors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let u = c.unit();
            vec![
                i.to_string(),
                c.direction.0.to_string(),
                c.direction.1.to_string(),
                f17(c.width),
                f17(u.x),
                f17(u.y),
            ]
        })
        .collect();
    run.write_rows("corridors", p.format, &corridor_header, &corridor_rows)?;

    let anchor_header = [
        "anchor_id",
        "s",
        "phi",
        "sigma",
        "alpha",
        "corridor_p",
        "corridor_q",
    ];
    let anchor_rows: Vec<Vec<String>> = anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            vec![
                i.to_string(),
                f17(a.point.s),
                f17(a.point.phi),
                a.sigma.to_string(),
                f17(a.alpha),
                a.corridor.direction.0.to_string(),
                a.corridor.direction.1.to_string(),
            ]
        })
        .collect();
    run.write_rows("anchors", p.format, &anchor_header, &anchor_rows)?;

    run.write_json(
        "table.json",
        &json!({
            "r": p.r,
            "cutoff": p.cutoff,
            "tau_max": p.tau_max,
            "circumference": table.circumference(),
            "density_normalization": table.c_nu,
            "corridor_count": table.corridors.len(),
            "anchor_count": anchors.len(),
        }),
    )?;

    Ok(format!(
        "r = {}: {} open corridors, {} grazing anchors (cutoff {})",
        p.r,
        table.corridors.len(),
        anchors.len(),
        p.cutoff
    ))
}
