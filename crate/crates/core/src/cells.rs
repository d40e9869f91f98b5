//! Cell structure of long corridor flights near grazing phase points.
//!
//! For every corridor there are boundary points where the grazing ray
//! (`phi = +-pi/2`) runs exactly along the corridor; these are the
//! supersingular points of the collision map. Near such an anchor, phase
//! points whose flight crosses the corridor and lands `n` lattice cells away
//! organize into thin strips `A_n` ("cells"), one per attainable flight
//! label `n`.
//!
//! Work near an anchor uses sheared coordinates `(ds, u)`: `ds` is the
//! arclength offset from the anchor and `u` is the angular deflection of the
//! outgoing ray from the corridor axis, oriented so the corridor interior is
//! `u > 0`. In these coordinates, with corridor width `w` and disc radius
//! `r`:
//!
//! * the forward cell `A_n` is a nearly horizontal strip at `u ~ w/n` of
//!   thickness `~ w/n^2`, extending over `|ds| <~ sqrt(2 r w / n)`;
//! * the backward (inverse-map) cells are the time-reversal images; in the
//!   same frame they appear as steep strips of slope `-2 sigma / r` crossing
//!   the forward strips transversally;
//! * one forward step expands tangent vectors on `A_n` by `~ n^{3/2}` and
//!   lands with `cos(phi') ~ n^{-1/2}`.
//!
//! Cells are located empirically: the flight label is monotone in `u` at
//! fixed `ds`, so band edges come from staircase bisection on the actual
//! dynamics, never from the asymptotic formulas (those only seed brackets).

use crate::billiard_map::{forward_map, inverse_map, CollisionStep, PhasePoint};
use crate::error::{Error, Result};
use crate::geometry::{BilliardTable, Corridor};
use crate::numeric::sigma_max;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

/// A supersingular point: the grazing phase point anchoring one corridor
/// direction. `sigma` is the sign of the grazing angle `phi = sigma pi/2`,
/// `alpha` the polar angle of the corridor direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Anchor {
    pub point: PhasePoint,
    pub sigma: f64,
    pub alpha: f64,
    pub corridor: Corridor,
}

/// All supersingular points of the table, two per corridor direction
/// (one per sign of the grazing angle), in corridor order.
pub fn supersingular_points(table: &BilliardTable) -> Vec<Anchor> {
    let mut out = Vec::with_capacity(2 * table.corridors.len());
    for c in &table.corridors {
        let alpha = (c.direction.1 as f64).atan2(c.direction.0 as f64);
        for sigma in [1.0f64, -1.0] {
            let theta = alpha - sigma * FRAC_PI_2;
            out.push(Anchor {
                point: PhasePoint::new(table.wrap_s(table.r * theta), sigma * FRAC_PI_2),
                sigma,
                alpha,
                corridor: c.clone(),
            });
        }
    }
    out
}

/// Whether a step is a single corridor crossing: the flight must end on the
/// adjacent lattice line parallel to the corridor.
fn crossing_lines(corridor: &Corridor, step: &CollisionStep) -> i64 {
    let (p, q) = corridor.direction;
    q * step.displacement.0 - p * step.displacement.1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Backward,
}

/// Sheared local chart at an anchor.
pub struct AnchorFrame<'t> {
    table: &'t BilliardTable,
    anchor: Anchor,
    theta_star: f64,
}

impl<'t> AnchorFrame<'t> {
    pub fn new(table: &'t BilliardTable, anchor: Anchor) -> Self {
        let theta_star = anchor.alpha - anchor.sigma * FRAC_PI_2;
        AnchorFrame {
            table,
            anchor,
            theta_star,
        }
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn table(&self) -> &BilliardTable {
        self.table
    }

    pub fn corridor_width(&self) -> f64 {
        self.anchor.corridor.width
    }

    /// Frame coordinates of a phase point: `ds` the signed arclength offset,
    /// `u` the deflection of the outgoing ray from the corridor axis
    /// (`u > 0` pointing into the corridor).
    pub fn coords(&self, x: PhasePoint) -> (f64, f64) {
        let ds = self.table.wrap_s_signed(x.s, self.anchor.point.s);
        let sg = self.anchor.sigma;
        let u = -sg * (x.phi - sg * FRAC_PI_2 + ds / self.table.r).sin();
        (ds, u)
    }

    /// Inverse chart. The result is a valid phase point only while
    /// `|phi| <= pi/2`; callers probing the chart boundary must check.
    pub fn point(&self, ds: f64, u: f64) -> PhasePoint {
        let sg = self.anchor.sigma;
        let theta = self.theta_star + ds / self.table.r;
        let phi = self.anchor.alpha - theta - (sg * u).asin();
        PhasePoint::new(self.table.wrap_s(self.anchor.point.s + ds), phi)
    }

    fn step_at(&self, o: Orientation, x: PhasePoint) -> Result<CollisionStep> {
        match o {
            Orientation::Forward => forward_map(self.table, x),
            Orientation::Backward => inverse_map(self.table, x),
        }
    }

    /// Flight label at a frame point, if the (forward or backward) flight is
    /// a single corridor crossing there.
    pub fn symbol_at(&self, o: Orientation, ds: f64, u: f64) -> Option<u64> {
        if !(-1.0..1.0).contains(&u) {
            return None;
        }
        let x = self.point(ds, u);
        if x.phi.abs() >= FRAC_PI_2 || !x.phi.is_finite() {
            return None;
        }
        let step = self.step_at(o, x).ok()?;
        (crossing_lines(&self.anchor.corridor, &step).abs() == 1).then_some(step.n_symbol)
    }

    /// Trichotomy for staircase bisection at fixed `ds`: labels decrease as
    /// `u` grows, so every probe sorts to one side of the target band.
    fn classify(&self, o: Orientation, ds: f64, u: f64, n: u64) -> Probe {
        if u >= 1.0 {
            return Probe::TooSteep;
        }
        let x = self.point(ds, u);
        if !(x.phi.is_finite()) || x.phi.abs() >= FRAC_PI_2 {
            return Probe::TooShallow;
        }
        match self.step_at(o, x) {
            Err(_) => Probe::TooShallow, // grazing or outward: no crossing yet
            Ok(step) => {
                let lines = crossing_lines(&self.anchor.corridor, &step).abs();
                if lines == 1 {
                    match step.n_symbol.cmp(&n) {
                        std::cmp::Ordering::Greater => Probe::TooShallow,
                        std::cmp::Ordering::Less => Probe::TooSteep,
                        std::cmp::Ordering::Equal => Probe::Inside,
                    }
                } else if lines == 0 {
                    // Fell back onto the grazing row before crossing.
                    Probe::TooShallow
                } else {
                    Probe::TooSteep
                }
            }
        }
    }

    /// Predicted band center used only to seed brackets.
    fn seed(&self, o: Orientation, n: f64, ds: f64) -> (f64, f64) {
        let r = self.table.r;
        let base = self.corridor_width() + r * (1.0 - (ds / r).cos());
        let drift = match o {
            Orientation::Forward => 0.0,
            Orientation::Backward => -2.0 * self.anchor.sigma * (ds / r).sin(),
        };
        (drift + base / n, drift)
    }

    /// Find a `u` strictly inside band `n` at offset `ds`, together with the
    /// shallow/steep bracket that contained it.
    fn find_interior(&self, o: Orientation, n: u64, ds: f64) -> Option<Interior> {
        let nf = n as f64;
        let (_, drift) = self.seed(o, nf, ds);
        let base = self.seed(o, 1.0, ds).0 - drift;
        let u_of = |nu: f64| drift + base / nu;
        let mut lo = u_of(nf + 4.0);
        let mut hi = u_of((nf - 4.0).max(0.51));
        for _ in 0..16 {
            match self.classify(o, ds, lo, n) {
                Probe::Inside => return self.tighten(o, n, ds, lo, u_of(nf + 40.0), hi),
                Probe::TooShallow => break,
                Probe::TooSteep => lo = drift + (lo - drift) * 1.3,
            }
        }
        if self.classify(o, ds, lo, n) != Probe::TooShallow {
            return None;
        }
        for _ in 0..16 {
            match self.classify(o, ds, hi, n) {
                Probe::Inside => return self.tighten(o, n, ds, hi, lo, u_of(0.51)),
                Probe::TooSteep => break,
                Probe::TooShallow => hi = drift + (hi - drift) * 0.7,
            }
        }
        if self.classify(o, ds, hi, n) != Probe::TooSteep {
            return None;
        }
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return None;
            }
            match self.classify(o, ds, mid, n) {
                Probe::Inside => {
                    return Some(Interior {
                        u: mid,
                        shallow: lo,
                        steep: hi,
                    })
                }
                Probe::TooShallow => lo = mid,
                Probe::TooSteep => hi = mid,
            }
        }
        None
    }

    fn tighten(
        &self,
        o: Orientation,
        n: u64,
        ds: f64,
        inside: f64,
        shallow: f64,
        steep: f64,
    ) -> Option<Interior> {
        debug_assert_eq!(self.classify(o, ds, inside, n), Probe::Inside);
        let ok = |u: f64| self.classify(o, ds, u, n) == Probe::Inside;
        if ok(shallow) || ok(steep) {
            return None; // bracket failed to contain the band
        }
        Some(Interior {
            u: inside,
            shallow,
            steep,
        })
    }

    /// Locate band `n` at offset `ds` by bisecting both edges at working
    /// precision.
    pub fn locate_band(&self, o: Orientation, n: u64, ds: f64) -> Result<Band> {
        let int = self.find_interior(o, n, ds).ok_or_else(|| {
            Error::NotFound(format!(
                "no {o:?} band with label {n} at offset {ds:+.3e} from the anchor"
            ))
        })?;
        let edge = |mut outside: f64, mut inside: f64| {
            for _ in 0..90 {
                let mid = 0.5 * (outside + inside);
                if mid <= outside.min(inside) || mid >= outside.max(inside) {
                    break;
                }
                if self.classify(o, ds, mid, n) == Probe::Inside {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            0.5 * (outside + inside)
        };
        let u_lo = edge(int.shallow, int.u);
        let u_hi = edge(int.steep, int.u);
        Ok(Band {
            n,
            ds,
            u_lo,
            u_hi,
            orientation: o,
        })
    }

    pub fn band_exists(&self, o: Orientation, n: u64, ds: f64) -> bool {
        self.find_interior(o, n, ds).is_some()
    }

    /// Arclength extent of band `n`: bisect the existence boundary on both
    /// sides of the anchor.
    pub fn band_extent(&self, o: Orientation, n: u64) -> Result<Extent> {
        if !self.band_exists(o, n, 0.0) {
            return Err(Error::NotFound(format!(
                "band {n} ({o:?}) absent at the anchor"
            )));
        }
        let r = self.table.r;
        let w = self.corridor_width();
        let side = |dir: f64| {
            let mut cap = 2.5 * (2.0 * r * w / n as f64).sqrt();
            for _ in 0..4 {
                if self.band_exists(o, n, dir * cap) {
                    cap *= 1.6;
                } else {
                    break;
                }
            }
            let (mut lo, mut hi) = (0.0f64, cap);
            for _ in 0..44 {
                let mid = 0.5 * (lo + hi);
                if self.band_exists(o, n, dir * mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            dir * 0.5 * (lo + hi)
        };
        Ok(Extent {
            neg: side(-1.0),
            pos: side(1.0),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Probe {
    Inside,
    /// Deflection too small for this label: longer flight, grazing, or a
    /// fall-back onto the grazing row.
    TooShallow,
    /// Deflection too large: shorter flight or multiple line crossings.
    TooSteep,
}

struct Interior {
    u: f64,
    shallow: f64,
    steep: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Band {
    pub n: u64,
    pub ds: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub orientation: Orientation,
}

impl Band {
    pub fn center(&self) -> f64 {
        0.5 * (self.u_lo + self.u_hi)
    }
    pub fn width(&self) -> f64 {
        self.u_hi - self.u_lo
    }
}

/// Signed arclength reach of a band on both sides of the anchor.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Extent {
    pub neg: f64,
    pub pos: f64,
}

impl Extent {
    pub fn half_span(&self) -> f64 {
        0.5 * (self.pos - self.neg)
    }
}

/// Per-band geometry and one-step dynamics probed at the band center.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExpansionSample {
    pub n: u64,
    pub u_center: f64,
    pub band_width: f64,
    pub ds_half_span: f64,
    /// Largest singular value of the one-step derivative at the center.
    pub expansion: f64,
    /// Cosine of the landing angle.
    pub cos_landing: f64,
    pub tau: f64,
}

/// Probe the listed bands at the anchor and record widths, extents, one-step
/// expansion factors and landing cosines.
pub fn expansion_stats(
    frame: &AnchorFrame,
    o: Orientation,
    labels: &[u64],
) -> Result<Vec<ExpansionSample>> {
    let mut out = Vec::with_capacity(labels.len());
    for &n in labels {
        let band = frame.locate_band(o, n, 0.0)?;
        let extent = frame.band_extent(o, n)?;
        let x = frame.point(0.0, band.center());
        let step = frame.step_at(o, x)?;
        out.push(ExpansionSample {
            n,
            u_center: band.center(),
            band_width: band.width(),
            ds_half_span: extent.half_span(),
            expansion: sigma_max(&step.derivative),
            cos_landing: step.to.phi.cos(),
            tau: step.tau,
        });
    }
    Ok(out)
}

/// Fit `ln y = slope ln n + b` over samples extracted by `value`.
pub fn log_log_slope(samples: &[ExpansionSample], value: impl Fn(&ExpansionSample) -> f64) -> (f64, f64) {
    let xs: Vec<f64> = samples.iter().map(|s| (s.n as f64).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| value(s).ln()).collect();
    let (slope, _, se) = crate::stats::linear_fit(&xs, &ys);
    (slope, se)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSide {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub forward_edge: EdgeSide,
    pub inverse_edge: EdgeSide,
    pub ds: f64,
    pub u: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub m: u64,
    pub n: u64,
    pub intersects: bool,
    /// A frame point inside both cells, when they meet.
    pub witness: Option<(f64, f64)>,
    /// Corner points where the edges of the two strips cross.
    pub crossings: Vec<Crossing>,
    /// True when all four edge crossings were pinned down.
    pub complete: bool,
}

/// Search for a point of the forward cell `A_m` that also lies in the
/// backward cell `A'_n`, walking the forward band center across the joint
/// arclength window and bisecting the (monotone) backward label along it.
fn find_witness(frame: &AnchorFrame, m: u64, n: u64) -> Result<Option<(f64, f64)>> {
    let ext_f = frame.band_extent(Orientation::Forward, m)?;
    let ext_b = frame.band_extent(Orientation::Backward, n)?;
    let margin = 1e-3;
    let lo = ext_f.neg.max(ext_b.neg) * (1.0 - margin);
    let hi = ext_f.pos.min(ext_b.pos) * (1.0 - margin);
    if !(lo < hi) {
        return Ok(None);
    }
    let probe = |ds: f64| -> Option<(f64, u64)> {
        let band = frame.locate_band(Orientation::Forward, m, ds).ok()?;
        let u = band.center();
        frame
            .symbol_at(Orientation::Backward, ds, u)
            .map(|j| (u, j))
    };
    const GRID: usize = 33;
    let mut pts: Vec<(f64, f64, u64)> = Vec::new();
    for k in 0..GRID {
        let ds = lo + (hi - lo) * (k as f64 + 0.5) / GRID as f64;
        if let Some((u, j)) = probe(ds) {
            if j == n {
                return Ok(Some((ds, u)));
            }
            pts.push((ds, u, j));
        }
    }
    // The backward label is monotone along the forward center curve; bisect
    // any straddling pair.
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.2 < n) == (b.2 < n) {
            continue;
        }
        let (mut lo_ds, lo_j, mut hi_ds) = (a.0, a.2, b.0);
        for _ in 0..90 {
            let mid = 0.5 * (lo_ds + hi_ds);
            if mid <= lo_ds.min(hi_ds) || mid >= lo_ds.max(hi_ds) {
                break;
            }
            match probe(mid) {
                Some((u, j)) if j == n => return Ok(Some((mid, u))),
                Some((_, j)) => {
                    if (j < n) == (lo_j < n) {
                        lo_ds = mid;
                    } else {
                        hi_ds = mid;
                    }
                }
                None => break,
            }
        }
    }
    Ok(None)
}

/// Fast intersection decision, no corner tracing.
pub fn cells_intersect(frame: &AnchorFrame, m: u64, n: u64) -> Result<bool> {
    Ok(find_witness(frame, m, n)?.is_some())
}

/// Full intersection check: decide whether the forward cell `A_m` meets the
/// backward cell `A'_n` near the anchor and, if so, trace the four corner
/// points where the strip edges cross (to arclength precision 1e-9).
pub fn intersection_check(frame: &AnchorFrame, m: u64, n: u64) -> Result<IntersectionReport> {
    let witness = find_witness(frame, m, n)?;
    let Some((ds0, u0)) = witness else {
        return Ok(IntersectionReport {
            m,
            n,
            intersects: false,
            witness: None,
            crossings: Vec::new(),
            complete: false,
        });
    };
    let fwd_band = frame.locate_band(Orientation::Forward, m, ds0)?;
    let bwd_band = frame.locate_band(Orientation::Backward, n, ds0)?;
    // The backward strip slope is ~ 2/r, so its edges sweep the forward band
    // over an arclength span of about r * (width_f + width_b) / 2.
    let span = 2.0 * frame.table().r * (fwd_band.width() + bwd_band.width());
    let mut crossings = Vec::new();
    let mut complete = true;
    for fe in [EdgeSide::Lower, EdgeSide::Upper] {
        for ie in [EdgeSide::Lower, EdgeSide::Upper] {
            let pick = |b: &Band, side: EdgeSide| match side {
                EdgeSide::Lower => b.u_lo,
                EdgeSide::Upper => b.u_hi,
            };
            let gap = |ds: f64| -> Option<f64> {
                let f = frame.locate_band(Orientation::Forward, m, ds).ok()?;
                let b = frame.locate_band(Orientation::Backward, n, ds).ok()?;
                Some(pick(&f, fe) - pick(&b, ie))
            };
            let mut lo = ds0 - span;
            let mut hi = ds0 + span;
            let mut bracket = None;
            for _ in 0..5 {
                match (gap(lo), gap(hi)) {
                    (Some(a), Some(b)) if a.signum() != b.signum() => {
                        bracket = Some((lo, a, hi));
                        break;
                    }
                    _ => {
                        let c = 0.5 * (lo + hi);
                        let h = hi - lo;
                        lo = c - h;
                        hi = c + h;
                    }
                }
            }
            let Some((mut lo, g_lo, mut hi)) = bracket else {
                complete = false;
                continue;
            };
            let mut g_lo = g_lo;
            for _ in 0..80 {
                if hi - lo < 1e-10 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                match gap(mid) {
                    Some(g) => {
                        if g.signum() == g_lo.signum() {
                            lo = mid;
                            g_lo = g;
                        } else {
                            hi = mid;
                        }
                    }
                    None => break,
                }
            }
            let ds = 0.5 * (lo + hi);
            match frame.locate_band(Orientation::Forward, m, ds) {
                Ok(f) => crossings.push(Crossing {
                    forward_edge: fe,
                    inverse_edge: ie,
                    ds,
                    u: pick(&f, fe),
                }),
                Err(_) => complete = false,
            }
        }
    }
    Ok(IntersectionReport {
        m,
        n,
        intersects: true,
        witness: Some((ds0, u0)),
        crossings,
        complete,
    })
}

/// The admissibility window of the symbol ladder: labels `m` and `n` are
/// linked when each is at most `c^-4` times the square of the other, with
/// one unit of slack so the recursion's own `floor(..) + 1` steps qualify.
pub fn ladder_window(c: f64, m: u64, n: u64) -> bool {
    let (mf, nf) = (m as f64, n as f64);
    let c4 = c.powi(4);
    (nf - 1.0) * c4 <= mf * mf && (mf - 1.0) * c4 <= nf * nf
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsScan {
    pub c_lo: f64,
    pub c_hi: f64,
    pub c_step: f64,
    pub probe: Vec<u64>,
    pub holdout: Vec<u64>,
}

impl Default for ConstantsScan {
    fn default() -> Self {
        ConstantsScan {
            c_lo: 1.05,
            c_hi: 10.0,
            c_step: 0.05,
            probe: vec![8, 12, 18, 27, 40, 60, 90, 135, 200, 300, 450],
            holdout: vec![10, 15, 22, 33, 50, 75, 110, 165, 250, 375],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// Smallest grid value of `c` whose window claims only observed
    /// intersections.
    pub c: f64,
    /// True when the scan bottomed out at the grid floor (the data would
    /// admit an even smaller constant).
    pub floored: bool,
    /// Smallest admissible ladder start `ceil(2 c^4)` for the fitted `c`.
    pub n_star: u64,
    pub window_pairs: usize,
    pub intersecting_pairs: usize,
    /// A window pair of the largest rejected `c` that failed to intersect.
    pub rejected_witness: Option<(u64, u64, f64)>,
    pub holdout_pairs: usize,
}

/// Fit the ladder constant empirically: measure which probe cells intersect,
/// then scan `c` upward and keep the smallest value whose window is entirely
/// contained in the observed intersection set. The fit is validated against
/// a held-out grid of label pairs.
pub fn estimate_constants(frame: &AnchorFrame, scan: &ConstantsScan) -> Result<ConstantsReport> {
    if !(scan.c_lo >= 1.0 && scan.c_lo < scan.c_hi && scan.c_step > 0.0) {
        return Err(Error::Domain(format!(
            "bad constant grid [{}, {}] step {}",
            scan.c_lo, scan.c_hi, scan.c_step
        )));
    }
    let mut observed: HashMap<(u64, u64), bool> = HashMap::new();
    for &m in &scan.probe {
        for &n in &scan.probe {
            let hit = cells_intersect(frame, m, n)?;
            observed.insert((m, n), hit);
        }
    }
    let steps = ((scan.c_hi - scan.c_lo) / scan.c_step).round() as usize;
    let mut accepted = None;
    let mut rejected_witness = None;
    for k in 0..=steps {
        let c = scan.c_lo + scan.c_step * k as f64;
        let mut ok = true;
        for (&(m, n), &hit) in &observed {
            if ladder_window(c, m, n) && !hit {
                ok = false;
                if rejected_witness.map_or(true, |(_, _, cw)| c > cw) {
                    rejected_witness = Some((m, n, c));
                }
                break;
            }
        }
        if ok {
            accepted = Some(c);
            break;
        }
    }
    let c = accepted.ok_or_else(|| {
        Error::Fit("no constant in the grid is consistent with the observed intersections".into())
    })?;
    let window_pairs = observed
        .keys()
        .filter(|&&(m, n)| ladder_window(c, m, n))
        .count();
    if window_pairs == 0 {
        return Err(Error::Fit(
            "fitted window contains no probe pairs; grid too sparse".into(),
        ));
    }
    let intersecting_pairs = observed.values().filter(|&&v| v).count();
    let mut holdout_pairs = 0;
    for &m in &scan.holdout {
        for &n in &scan.holdout {
            if !ladder_window(c, m, n) {
                continue;
            }
            holdout_pairs += 1;
            if !cells_intersect(frame, m, n)? {
                return Err(Error::Fit(format!(
                    "held-out pair ({m}, {n}) lies in the c={c} window but the cells do not intersect"
                )));
            }
        }
    }
    Ok(ConstantsReport {
        c,
        floored: c <= scan.c_lo + 0.25 * scan.c_step,
        n_star: (2.0 * c.powi(4)).ceil() as u64,
        window_pairs,
        intersecting_pairs,
        rejected_witness: rejected_witness.filter(|&(_, _, cw)| cw < c),
        holdout_pairs,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanRegion {
    pub ds_lo: f64,
    pub ds_hi: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellComponent {
    pub n: u64,
    pub pixels: usize,
    /// Number of connected components carrying this label; stats refer to
    /// the largest one.
    pub fragments: usize,
    pub centroid_ds: f64,
    pub centroid_u: f64,
    /// Side lengths of the equivalent uniform strip (PCA axes, physical
    /// units).
    pub extent_long: f64,
    pub extent_short: f64,
    /// Unit vector of the long axis in `(ds, u)` coordinates.
    pub axis: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellScan {
    pub region: ScanRegion,
    pub orientation: Orientation,
    pub width: usize,
    pub height: usize,
    /// Row-major flight labels, row 0 at `u_lo`; 0 marks non-crossing points.
    pub labels: Vec<u64>,
    pub components: Vec<CellComponent>,
}

impl CellScan {
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        let ds = self.region.ds_lo
            + (self.region.ds_hi - self.region.ds_lo) * (i as f64 + 0.5) / self.width as f64;
        let u = self.region.u_lo
            + (self.region.u_hi - self.region.u_lo) * (j as f64 + 0.5) / self.height as f64;
        (ds, u)
    }

    pub fn component(&self, n: u64) -> Option<&CellComponent> {
        self.components.iter().find(|c| c.n == n)
    }

    /// Error out unless every requested label was resolved with at least
    /// `min_pixels` pixels in its main component.
    pub fn require_resolved(&self, labels: &[u64], min_pixels: usize) -> Result<()> {
        let mut missing = Vec::new();
        for &n in labels {
            match self.component(n) {
                Some(c) if c.pixels >= min_pixels => {}
                Some(c) => missing.push(format!("{n} ({} px)", c.pixels)),
                None => missing.push(format!("{n} (absent)")),
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Resolution(format!(
                "raster too coarse for cells: {}",
                missing.join(", ")
            )))
        }
    }
}

/// Rasterize flight labels over a frame rectangle and extract connected
/// components (4-connectivity) per label. Pixel rows are computed in
/// parallel; the labeling is independent of the thread count.
pub fn scan_cells(
    frame: &AnchorFrame,
    o: Orientation,
    region: ScanRegion,
    width: usize,
    height: usize,
) -> CellScan {
    let labels: Vec<u64> = (0..height)
        .into_par_iter()
        .flat_map_iter(|j| {
            let u = region.u_lo + (region.u_hi - region.u_lo) * (j as f64 + 0.5) / height as f64;
            (0..width).map(move |i| {
                let ds =
                    region.ds_lo + (region.ds_hi - region.ds_lo) * (i as f64 + 0.5) / width as f64;
                frame.symbol_at(o, ds, u).unwrap_or(0)
            })
        })
        .collect();

    let mut seen = vec![false; labels.len()];
    let mut per_label: HashMap<u64, Vec<(usize, Vec<(usize, usize)>)>> = HashMap::new();
    for start in 0..labels.len() {
        if seen[start] || labels[start] == 0 {
            continue;
        }
        let lab = labels[start];
        let mut stack = vec![start];
        let mut px = Vec::new();
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            let (i, j) = (idx % width, idx / width);
            px.push((i, j));
            let mut push = |ni: usize| {
                if !seen[ni] && labels[ni] == lab {
                    seen[ni] = true;
                    stack.push(ni);
                }
            };
            if i > 0 {
                push(idx - 1);
            }
            if i + 1 < width {
                push(idx + 1);
            }
            if j > 0 {
                push(idx - width);
            }
            if j + 1 < height {
                push(idx + width);
            }
        }
        per_label.entry(lab).or_default().push((px.len(), px));
    }

    let scan = CellScan {
        region,
        orientation: o,
        width,
        height,
        labels,
        components: Vec::new(),
    };
    let mut components = Vec::new();
    for (lab, mut comps) in per_label {
        comps.sort_by_key(|(count, _)| std::cmp::Reverse(*count));
        let fragments = comps.len();
        let (count, px) = &comps[0];
        let pts: Vec<(f64, f64)> = px.iter().map(|&(i, j)| scan.pixel_center(i, j)).collect();
        let nf = pts.len() as f64;
        let (mx, my) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / nf, b + y / nf));
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &(x, y) in &pts {
            let (dx, dy) = (x - mx, y - my);
            a += dx * dx / nf;
            b += dx * dy / nf;
            c += dy * dy / nf;
        }
        let half = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let (l1, l2) = (half + disc, (half - disc).max(0.0));
        let axis = if b.abs() > 1e-300 {
            let v = (b, l1 - a);
            let n = (v.0 * v.0 + v.1 * v.1).sqrt();
            (v.0 / n, v.1 / n)
        } else if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        components.push(CellComponent {
            n: lab,
            pixels: *count,
            fragments,
            centroid_ds: mx,
            centroid_u: my,
            extent_long: (12.0 * l1).sqrt(),
            extent_short: (12.0 * l2).sqrt(),
            axis,
        });
    }
    components.sort_by_key(|c| c.n);
    CellScan { components, ..scan }
}
