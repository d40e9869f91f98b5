//! Shadowing prescribed symbolic words: given a word of flight labels,
//! locate an orbit near a supersingular anchor whose collision itinerary
//! reproduces the word, then read finite-time expansion rates off the
//! located orbit.
//!
//! Location runs in three sweeps. A forward sweep walks band centers and
//! intersection witnesses to fix, for every flight, the anchor chart of its
//! departure cell and a coarse in-cell position. A backward sweep then
//! builds, leg by leg, a quadratic model of the leg's feasible height
//! curve: the in-band height, as a function of the arc offset, whose flight
//! lands on the next leg's curve. Every curve sample is a damped
//! one-dimensional Newton solve in the height alone, so pulling back
//! contracts errors at the one-step expansion rate and the composed solves
//! never lose precision. A final forward pass re-anchors the orbit: it
//! follows the true dynamics from the first-leg solution and, at every
//! landing, snaps the height back onto that leg's curve. The snap sizes are
//! the pseudo-orbit defects; they stay at solver tolerance for words of any
//! admissible length, whereas a single uncorrected start point would need
//! more precision than a double carries as soon as the accumulated
//! expansion of the word exceeds the reciprocal cell widths.

use crate::billiard_map::{expansion_sum, forward_map, PhasePoint};
use crate::cells::{intersection_check, supersingular_points, Anchor, AnchorFrame, Orientation};
use crate::error::{Error, Result};
use crate::geometry::BilliardTable;
use crate::rng;
use crate::stats::linear_fit;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Longest word the locator accepts.
pub const MAX_WORD_LEN: usize = 15;
/// Largest flight label the locator accepts.
pub const MAX_SYMBOL: u64 = 2000;
/// Smallest flight label with a usable corridor-entry band.
pub const MIN_SYMBOL: u64 = 5;

const TAG_WORDS: u64 = 0x7764;

/// An orbit segment realizing a word. `phase` is the first collision point,
/// in the chart of the word's first flight; `chain` holds one point per
/// flight, each re-anchored onto its leg's feasible curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShadowPoint {
    pub phase: PhasePoint,
    pub ds: f64,
    pub u: f64,
    /// Largest landing deviation from a leg curve accepted by the solves.
    pub residual: f64,
    /// Largest height correction applied while re-anchoring the chain.
    pub defect: f64,
    pub chain: Vec<PhasePoint>,
}

/// Flight labels of the first `len` collisions, truncated at an escape.
pub fn itinerary(table: &BilliardTable, x: PhasePoint, len: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(len);
    let mut cur = x;
    for _ in 0..len {
        match forward_map(table, cur) {
            Ok(step) => {
                out.push(step.n_symbol);
                cur = step.to;
            }
            Err(_) => break,
        }
    }
    out
}

/// Time-`steps` expansion rate: the averaged log growth of a pushed-forward
/// tangent vector along the orbit of `x`.
pub fn finite_time_exponent(table: &BilliardTable, x: PhasePoint, steps: u32) -> Result<f64> {
    let (acc, _) = expansion_sum(table, x, steps)?;
    Ok(acc / steps as f64)
}

/// Mean one-step log expansion over the first `steps` legs of a located
/// chain. Evaluating the rate leg by leg keeps it meaningful for words
/// whose accumulated expansion exceeds what one start point can resolve in
/// double precision.
pub fn chain_exponent(table: &BilliardTable, chain: &[PhasePoint], steps: usize) -> Result<f64> {
    if steps == 0 || steps > chain.len() {
        return Err(Error::Domain(format!(
            "window {steps} outside 1..={}",
            chain.len()
        )));
    }
    let mut acc = 0.0;
    for &x in &chain[..steps] {
        let (a, _) = expansion_sum(table, x, 1)?;
        acc += a;
    }
    Ok(acc / steps as f64)
}

fn nearest_anchor(table: &BilliardTable, anchors: &[Anchor], x: PhasePoint) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (idx, a) in anchors.iter().enumerate() {
        let ds = table.wrap_s_signed(x.s, a.point.s);
        let dphi = table.r * (x.phi - a.sigma * FRAC_PI_2);
        let d = ds * ds + dphi * dphi;
        if d < best_d {
            best_d = d;
            best = idx;
        }
    }
    best
}

/// Quadratic model of a leg's feasible height curve `u(ds)`; upstream legs
/// aim their landings at this curve.
#[derive(Clone, Copy, Debug)]
struct CurveModel {
    base: f64,
    c0: f64,
    c1: f64,
    c2: f64,
}

impl CurveModel {
    fn eval(&self, ds: f64) -> f64 {
        let d = ds - self.base;
        self.c0 + d * (self.c1 + d * self.c2)
    }
}

/// Interpolate one, two, or three `(ds, u)` samples; the first sample
/// becomes the base point of the model.
fn model_from_samples(samples: &[(f64, f64)]) -> CurveModel {
    match *samples {
        [(b, u)] => CurveModel {
            base: b,
            c0: u,
            c1: 0.0,
            c2: 0.0,
        },
        [(b, u), (x, v)] => CurveModel {
            base: b,
            c0: u,
            c1: (v - u) / (x - b),
            c2: 0.0,
        },
        [(b, u), (x1, v1), (x2, v2)] => {
            let d1 = (v1 - u) / (x1 - b);
            let d2 = (v2 - v1) / (x2 - x1);
            let c2 = (d2 - d1) / (x2 - b);
            CurveModel {
                base: b,
                c0: u,
                c1: d1 - c2 * (x1 - b),
                c2,
            }
        }
        _ => unreachable!("one to three curve samples"),
    }
}

/// Damped one-dimensional Newton in the in-band height at a fixed arc
/// offset `ds`: find the height on the label-`n` band of `frame` whose
/// flight lands on `target`, a height curve in the `next` chart. Several
/// deterministic starting heights cover folds of the landing map. Returns
/// the height, the landing chart coordinates, and the achieved deviation.
fn solve_on_band(
    frame: &AnchorFrame,
    n: u64,
    ds: f64,
    warm: f64,
    next: &AnchorFrame,
    target: &CurveModel,
    tol: f64,
) -> Result<(f64, (f64, f64), f64)> {
    let band = frame.locate_band(Orientation::Forward, n, ds)?;
    let eval = |u: f64| -> Option<(f64, (f64, f64))> {
        let step = forward_map(frame.table(), frame.point(ds, u)).ok()?;
        if step.n_symbol != n {
            return None;
        }
        let (lds, lu) = next.coords(step.to);
        Some((lu - target.eval(lds), (lds, lu)))
    };
    let lo = band.u_lo.min(band.u_hi);
    let hi = band.u_lo.max(band.u_hi);
    let h = (1e-6 * (hi - lo)).max(1e-15);
    let mut starts = Vec::with_capacity(8);
    if (lo..=hi).contains(&warm) {
        starts.push(warm);
    }
    for frac in [0.5, 0.25, 0.75, 0.125, 0.875, 0.375, 0.625] {
        starts.push(lo + frac * (hi - lo));
    }
    'starts: for &s in &starts {
        let mut u = s;
        let Some((mut f, mut landing)) = eval(u) else {
            continue;
        };
        for _ in 0..60 {
            if f.abs() <= tol {
                return Ok((u, landing, f.abs()));
            }
            let fp = match (eval(u + h), eval(u - h)) {
                (Some((p, _)), _) => (p - f) / h,
                (None, Some((m, _))) => (f - m) / h,
                (None, None) => continue 'starts,
            };
            if fp == 0.0 || !fp.is_finite() {
                continue 'starts;
            }
            let full = -f / fp;
            let mut damp = 1.0f64;
            loop {
                let cand = u + damp * full;
                if let Some((fc, lc)) = eval(cand) {
                    if fc.abs() < f.abs() {
                        u = cand;
                        f = fc;
                        landing = lc;
                        break;
                    }
                }
                damp *= 0.5;
                if damp < 1e-13 {
                    continue 'starts;
                }
            }
        }
    }
    Err(Error::NotFound(format!(
        "no height on band {n} at offset {ds:+.6e} lands on the next leg's curve"
    )))
}

/// Tie-broken height strictly inside the label-`n` band at offset `ds`.
/// This is the terminal condition: the last leg only needs to sit on its
/// own departure band, since a point reached by an actual flight of the
/// previous label lies in that flight's arrival cell automatically. The
/// `[0.25, 0.75]` range keeps the condition away from the band edges.
fn term_height(frame: &AnchorFrame, n: u64, ds: f64, tie_break: f64) -> Result<f64> {
    let fwd = frame.locate_band(Orientation::Forward, n, ds)?;
    Ok(fwd.u_lo + (0.25 + 0.5 * tie_break) * (fwd.u_hi - fwd.u_lo))
}

struct Leg<'t> {
    frame: AnchorFrame<'t>,
    wds: f64,
    wu: f64,
    spread: f64,
}

/// Locate an orbit whose itinerary is exactly `word`, starting in the chart
/// of `frame`. `tol` bounds every landing deviation accepted by the solves;
/// `tie_break` (in `[0, 1]`) nudges the terminal condition inside the last
/// cell, selecting among the continuum of valid shadows.
pub fn locate_point(
    frame: &AnchorFrame,
    word: &[u64],
    tol: f64,
    tie_break: f64,
) -> Result<ShadowPoint> {
    if word.is_empty() || word.len() > MAX_WORD_LEN {
        return Err(Error::Domain(format!(
            "word length {} outside 1..={MAX_WORD_LEN}",
            word.len()
        )));
    }
    if let Some(&bad) = word.iter().find(|&&n| !(MIN_SYMBOL..=MAX_SYMBOL).contains(&n)) {
        return Err(Error::Domain(format!(
            "symbol {bad} outside {MIN_SYMBOL}..={MAX_SYMBOL}"
        )));
    }
    if !(0.0..=1.0).contains(&tie_break) || !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "need tie_break in [0,1] and positive tolerance, got {tie_break} and {tol}"
        )));
    }
    let table = frame.table();
    let anchors = supersingular_points(table);
    let len = word.len();

    // Forward sweep: fix the chart of every flight by following coarse
    // landings. The coarse in-cell position of each later leg is the witness
    // of (departure band) ∩ (arrival cell of the previous flight); the
    // spread of the crossings around the witness sizes the patch, and with
    // it the span over which the leg's curve model must hold.
    let band0 = frame.locate_band(Orientation::Forward, word[0], 0.0)?;
    let mut legs: Vec<Leg> = Vec::with_capacity(len);
    legs.push(Leg {
        frame: AnchorFrame::new(table, frame.anchor().clone()),
        wds: 0.0,
        wu: band0.center(),
        spread: 1e-3 * table.r,
    });
    let mut x = frame.point(0.0, band0.center());
    for t in 1..len {
        let step = forward_map(table, x)?;
        let here = AnchorFrame::new(
            table,
            anchors[nearest_anchor(table, &anchors, step.to)].clone(),
        );
        let rep = intersection_check(&here, word[t], word[t - 1])?;
        let Some((wds, wu)) = rep.witness else {
            return Err(Error::NotFound(format!(
                "cells of the pair ({}, {}) do not intersect",
                word[t - 1],
                word[t]
            )));
        };
        let mut spread = 1e-4 * table.r;
        for c in &rep.crossings {
            spread = spread.max(1.5 * (c.ds - wds).abs());
        }
        x = here.point(wds, wu);
        legs.push(Leg {
            frame: here,
            wds,
            wu,
            spread,
        });
    }

    // Backward sweep: fit each leg's feasible height curve against the next
    // leg's curve, sampling three offsets across the leg's patch. The last
    // leg's curve is its tie-broken in-band height; that terminal slack is
    // what distinguishes the shadows of one word.
    let mut residual = 0.0f64;
    let mut curves: Vec<Option<CurveModel>> = vec![None; len];
    if len > 1 {
        let leg = &legs[len - 1];
        let last_n = word[len - 1];
        let center = term_height(&leg.frame, last_n, leg.wds, tie_break)?;
        let mut samples = vec![(leg.wds, center)];
        let mut s = leg.spread;
        for _ in 0..4 {
            let left = term_height(&leg.frame, last_n, leg.wds - s, tie_break);
            let right = term_height(&leg.frame, last_n, leg.wds + s, tie_break);
            if let (Ok(a), Ok(b)) = (left, right) {
                samples.push((leg.wds - s, a));
                samples.push((leg.wds + s, b));
                break;
            }
            s *= 0.5;
        }
        curves[len - 1] = Some(model_from_samples(&samples));
        for t in (1..len - 1).rev() {
            let leg = &legs[t];
            let tgt = curves[t + 1].as_ref().expect("curves are built in order");
            let next_frame = &legs[t + 1].frame;
            let (uc, _, rc) = solve_on_band(&leg.frame, word[t], leg.wds, leg.wu, next_frame, tgt, tol)?;
            residual = residual.max(rc);
            let mut samples = vec![(leg.wds, uc)];
            let mut s = leg.spread;
            for _ in 0..4 {
                let left = solve_on_band(&leg.frame, word[t], leg.wds - s, uc, next_frame, tgt, tol);
                let right = solve_on_band(&leg.frame, word[t], leg.wds + s, uc, next_frame, tgt, tol);
                if let (Ok((ua, _, ra)), Ok((ub, _, rb))) = (left, right) {
                    samples.push((leg.wds - s, ua));
                    samples.push((leg.wds + s, ub));
                    residual = residual.max(ra).max(rb);
                    break;
                }
                s *= 0.5;
            }
            curves[t] = Some(model_from_samples(&samples));
        }
    }

    // First-leg solve at the anchor's own offset, then a forward pass that
    // re-anchors every landing onto its leg's curve. The height snaps are
    // the pseudo-orbit defects; solving each leg afresh keeps them at
    // solver tolerance instead of compounding with the expansion.
    let mut defect = 0.0f64;
    let mut coords: Vec<(f64, f64)> = Vec::with_capacity(len);
    if len == 1 {
        coords.push((0.0, term_height(&legs[0].frame, word[0], 0.0, tie_break)?));
    } else {
        let tgt = curves[1].as_ref().expect("curves are built in order");
        let (u0, _, r0) =
            solve_on_band(&legs[0].frame, word[0], 0.0, legs[0].wu, &legs[1].frame, tgt, tol)?;
        residual = residual.max(r0);
        coords.push((0.0, u0));
        for t in 1..len {
            let (pds, pu) = coords[t - 1];
            let step = forward_map(table, legs[t - 1].frame.point(pds, pu))?;
            let leg = &legs[t];
            let (lds, lu) = leg.frame.coords(step.to);
            let ut = if t + 1 < len {
                let tgt = curves[t + 1].as_ref().expect("curves are built in order");
                let (u, _, r) =
                    solve_on_band(&leg.frame, word[t], lds, lu, &legs[t + 1].frame, tgt, tol)?;
                residual = residual.max(r);
                u
            } else {
                term_height(&leg.frame, word[t], lds, tie_break)?
            };
            defect = defect.max((ut - lu).abs());
            coords.push((lds, ut));
        }
    }

    let chain: Vec<PhasePoint> = coords
        .iter()
        .zip(&legs)
        .map(|(&(ds, u), leg)| leg.frame.point(ds, u))
        .collect();
    for (t, (&pt, &lbl)) in chain.iter().zip(word).enumerate() {
        let step = forward_map(table, pt)?;
        if step.n_symbol != lbl {
            return Err(Error::NotFound(format!(
                "re-anchored leg {t} realizes flight {} instead of {lbl}",
                step.n_symbol
            )));
        }
    }

    Ok(ShadowPoint {
        phase: chain[0],
        ds: coords[0].0,
        u: coords[0].1,
        residual,
        defect,
        chain,
    })
}

/// Least-squares relation between finite-time exponents of shadowing orbits
/// and the mean log symbol of their words.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentRegression {
    /// `(mean log symbol, finite-time exponent)` per located word.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub attempted: usize,
}

/// Shadow every word, measure its finite-time exponent along the located
/// chain, and regress against the word's mean log symbol.
pub fn exponent_vs_symbols(
    frame: &AnchorFrame,
    words: &[Vec<u64>],
    tol: f64,
    tie_break: f64,
) -> Result<ExponentRegression> {
    let table = frame.table();
    let mut points = Vec::with_capacity(words.len());
    for word in words {
        let sp = match locate_point(frame, word, tol, tie_break) {
            Ok(sp) => sp,
            Err(_) => continue,
        };
        let lambda = chain_exponent(table, &sp.chain, word.len())?;
        let mean_log: f64 =
            word.iter().map(|&n| (n as f64).ln()).sum::<f64>() / word.len() as f64;
        points.push((mean_log, lambda));
    }
    if points.len() < (4 * words.len()) / 5 || points.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} of {} words could be shadowed",
            points.len(),
            words.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept, slope_se) = linear_fit(&xs, &ys);
    Ok(ExponentRegression {
        points,
        slope,
        intercept,
        slope_se,
        attempted: words.len(),
    })
}

/// Random words with symbols drawn uniformly from per-word tiers spanning
/// `[lo, hi]`, so the ensemble covers the whole label range.
pub fn tiered_words(count: usize, len: usize, lo: u64, hi: u64, seed: u64) -> Vec<Vec<u64>> {
    const TIERS: u64 = 5;
    let span = ((hi - lo) / TIERS).max(1);
    (0..count)
        .map(|j| {
            let mut rng = rng::stream(seed, TAG_WORDS, j as u64);
            let base = lo + (j as u64 % TIERS) * span;
            let top = (base + span).min(hi);
            (0..len).map(|_| rng.gen_range(base..=top)).collect()
        })
        .collect()
}
