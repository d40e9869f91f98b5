//! Geometry of the infinite-horizon Lorentz gas: unit lattice of discs of
//! radius `r < 1/2`, collision-free corridors, and free-flight ray tracing.
//!
//! Flights are traced in the unfolded plane with an incremental cell walk:
//! the ray marches through unit cells centered on lattice points, testing the
//! disc of each visited cell plus the discs of its eight neighbors. A disc
//! hit found while scanning some cell lies inside that cell's 3x3 block, so
//! scanning cells in entry order and stopping once the best hit parameter is
//! below the next cell's entry parameter yields the true first collision.
//!
//! Tangent flights are a measure-zero set on which the dynamics is not
//! defined; a discriminant within the tangency window is recomputed with
//! compensated arithmetic and, if still ambiguous, treated as a miss so that
//! grazing rays continue down their corridor.

use crate::error::{Error, Result};
use crate::numeric::diff_of_products;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Minimal admissible flight parameter; filters re-detection of the
/// departure disc.
pub const EPS_STEP: f64 = 1e-12;

/// Default tangency threshold on the quadratic-discriminant scale.
pub const EPS_TANGENCY: f64 = 1e-24;

/// Default flight-length cap before a trajectory is declared escaped.
pub const TAU_MAX: f64 = 1e6;

/// Relative half-width of the tangency window per unit of flown distance.
/// Floating-point noise in the perpendicular-distance computation grows
/// linearly with the distance to the disc, so the window must as well.
const TANGENT_DRIFT: f64 = 3.552713678800501e-15; // 2^-48

/// Floor of the tangency window relative to the disc radius: even at zero
/// distance the perpendicular distance of a grazing ray carries a few ulps
/// of noise on the scale of the radius itself.
const TANGENT_FLOOR: f64 = 8.881784197001252e-16; // 2^-50

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    /// z-component of the cross product `self x o`.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        diff_of_products(self.x, o.y, self.y, o.x)
    }
    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
    /// Rotation by +90 degrees (counterclockwise).
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}
impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}
impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}
impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A collision-free corridor of the lattice: a maximal strip of direction
/// `direction` (a primitive integer vector) that avoids every disc. Lattice
/// lines of direction `(p, q)` are spaced `1/sqrt(p^2+q^2)` apart, leaving a
/// strip of positive width whenever `2r` is below that spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub direction: (i64, i64),
    pub width: f64,
}

impl Corridor {
    pub fn unit(&self) -> Vec2 {
        Vec2::new(self.direction.0 as f64, self.direction.1 as f64).normalized()
    }
}

/// The billiard table: discs of radius `r` centered on the integer lattice,
/// with the corridor inventory up to the construction cutoff and the
/// numerical policy knobs for flight tracing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BilliardTable {
    pub r: f64,
    /// Normalization of the invariant collision measure, `1 / (2 pi r)`.
    pub c_nu: f64,
    pub corridors: Vec<Corridor>,
    pub tau_max: f64,
    pub eps_tangency: f64,
}

impl BilliardTable {
    pub fn circumference(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.r
    }
    /// Wrap an arclength coordinate into `[0, 2 pi r)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let c = self.circumference();
        let w = s.rem_euclid(c);
        if w == c {
            0.0
        } else {
            w
        }
    }
    /// Signed arclength difference `a - b` wrapped into `(-pi r, pi r]`.
    pub fn wrap_s_signed(&self, a: f64, b: f64) -> f64 {
        let c = self.circumference();
        let mut d = (a - b).rem_euclid(c);
        if d > 0.5 * c {
            d -= c;
        }
        d
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Build the table for disc radius `r`, enumerating corridors whose primitive
/// direction `(p, q)` satisfies `p^2 + q^2 <= cutoff^2`. Directions of both
/// signs are listed separately; each carries its own grazing anchors.
pub fn build_table(r: f64, cutoff: u32) -> Result<BilliardTable> {
    if !(r > 0.0 && r < 0.5) || !r.is_finite() {
        return Err(Error::Domain(format!(
            "disc radius must lie in (0, 1/2), got {r}"
        )));
    }
    if cutoff == 0 {
        return Err(Error::Domain("corridor cutoff must be >= 1".into()));
    }
    let cut2 = (cutoff as i64) * (cutoff as i64);
    let mut corridors = Vec::new();
    for p in -(cutoff as i64)..=cutoff as i64 {
        for q in -(cutoff as i64)..=cutoff as i64 {
            if (p, q) == (0, 0) || p * p + q * q > cut2 || gcd(p, q) != 1 {
                continue;
            }
            let spacing = 1.0 / ((p * p + q * q) as f64).sqrt();
            let width = spacing - 2.0 * r;
            if width > 0.0 {
                corridors.push(Corridor {
                    direction: (p, q),
                    width,
                });
            }
        }
    }
    corridors.sort_by_key(|c| {
        let (p, q) = c.direction;
        (p * p + q * q, p, q)
    });
    Ok(BilliardTable {
        r,
        c_nu: 1.0 / (2.0 * std::f64::consts::PI * r),
        corridors,
        tau_max: TAU_MAX,
        eps_tangency: EPS_TANGENCY,
    })
}

/// Boundary data at arclength `s` on the reference disc (centered at the
/// origin): the point itself, the normal pointing into the billiard domain,
/// and the unit tangent (the normal rotated by +90 degrees).
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFrame {
    pub position: Vec2,
    pub inward_normal: Vec2,
    pub tangent: Vec2,
}

pub fn boundary_point(table: &BilliardTable, s: f64) -> BoundaryFrame {
    let theta = table.wrap_s(s) / table.r;
    let n = Vec2::new(theta.cos(), theta.sin());
    BoundaryFrame {
        position: n * table.r,
        inward_normal: n,
        tangent: n.perp(),
    }
}

/// A ray in the unfolded plane. `direction` need not be normalized.
#[derive(Clone, Copy, Debug)]
pub struct PlanarRay {
    pub origin: Vec2,
    pub direction: Vec2,
}

/// Result of a free flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Flight {
    /// First transversal collision: flight length, center of the disc hit
    /// (lattice coordinates), and the collision point.
    Hit {
        tau: f64,
        disc: (i64, i64),
        point: Vec2,
    },
    /// No collision within `tau_max`; the trajectory runs down a corridor.
    Escape { tau_max: f64 },
}

enum DiscTest {
    Miss,
    Tangent,
    Hit(f64),
}

/// Ray-disc intersection with a tangency window. The perpendicular distance
/// from the disc center to the ray line is computed with a compensated cross
/// product, which keeps its error linear (not quadratic) in the distance
/// flown; hits and misses within the window are ambiguous at working
/// precision and resolved as misses.
#[inline]
fn intersect_disc(o: Vec2, d: Vec2, center: Vec2, r: f64, eps_tangency: f64) -> DiscTest {
    let w = o - center;
    let b = d.dot(w);
    let ww = w.dot(w);
    let c0 = ww - r * r;
    if b >= 0.0 && c0 >= 0.0 {
        return DiscTest::Miss; // receding from a disc it is not inside
    }
    let m = d.cross(w).abs();
    let window = (0.5 * eps_tangency * r)
        .max(r * TANGENT_FLOOR)
        .max(b.abs() * TANGENT_DRIFT);
    if m >= r - window {
        if m <= r + window {
            return DiscTest::Tangent;
        }
        return DiscTest::Miss;
    }
    let disc = diff_of_products(r, r, m, m).max(0.0);
    let sq = disc.sqrt();
    // Roots of t^2 + 2 b t + c0, computed in the cancellation-free order.
    let q = -(b + sq.copysign(if b == 0.0 { 1.0 } else { b }));
    let (t0, t1) = (q, if q != 0.0 { c0 / q } else { f64::INFINITY });
    let mut best = f64::INFINITY;
    for t in [t0, t1] {
        if t > EPS_STEP && t < best {
            best = t;
        }
    }
    if best.is_finite() {
        DiscTest::Hit(best)
    } else {
        DiscTest::Miss
    }
}

/// Trace the first collision of `ray` with any disc, or report escape once
/// `tau_max` is exceeded. The origin must lie on a disc boundary or strictly
/// outside all discs. When the ray starts on a disc boundary, pass that disc
/// as `skip`: a straight ray leaving a convex disc outward can never return
/// to it, and testing it anyway turns the one-ulp uncertainty of "on the
/// boundary" into phantom zero-length hits at grazing launch angles.
pub fn free_flight(table: &BilliardTable, ray: &PlanarRay, skip: Option<(i64, i64)>) -> Flight {
    let o = ray.origin;
    let d = ray.direction.normalized();
    debug_assert!(d.norm().is_finite(), "degenerate flight direction");

    let mut cell = (o.x.round() as i64, o.y.round() as i64);
    // Next half-integer boundary crossing per axis, recomputed from the
    // crossing count so that entry parameters carry no accumulated drift.
    let step_x: i64 = if d.x >= 0.0 { 1 } else { -1 };
    let step_y: i64 = if d.y >= 0.0 { 1 } else { -1 };
    let mut k_x: i64 = 0;
    let mut k_y: i64 = 0;
    let bound = |cell0: i64, step: i64, k: i64| (cell0 + k * step) as f64 + 0.5 * step as f64;
    let t_cross = |origin: f64, dir: f64, b: f64| {
        if dir == 0.0 {
            f64::INFINITY
        } else {
            (b - origin) / dir
        }
    };

    let mut t_entry = 0.0f64;
    let mut best: Option<(f64, (i64, i64))> = None;

    loop {
        if let Some((tau, disc)) = best {
            // Entry parameters are recomputed from exact half-integer
            // boundaries, so each carries a single rounding and ordering
            // against hit parameters is trustworthy.
            if tau <= t_entry {
                return Flight::Hit {
                    tau,
                    disc,
                    point: o + d * tau,
                };
            }
        }
        if t_entry > table.tau_max {
            return Flight::Escape {
                tau_max: table.tau_max,
            };
        }
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                let c = (cell.0 + di, cell.1 + dj);
                if skip == Some(c) {
                    continue;
                }
                let center = Vec2::new(c.0 as f64, c.1 as f64);
                if let DiscTest::Hit(t) = intersect_disc(o, d, center, table.r, table.eps_tangency)
                {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, c));
                    }
                }
            }
        }
        let tx = t_cross(o.x, d.x, bound(o.x.round() as i64, step_x, k_x + 1));
        let ty = t_cross(o.y, d.y, bound(o.y.round() as i64, step_y, k_y + 1));
        if tx < ty {
            k_x += 1;
            cell.0 += step_x;
            t_entry = tx;
        } else {
            k_y += 1;
            cell.1 += step_y;
            t_entry = ty;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(r: f64) -> BilliardTable {
        build_table(r, 1).unwrap()
    }

    /// Independent oracle: test every disc in the inflated bounding box of
    /// the flight segment with the plain quadratic formula.
    fn brute_force(o: Vec2, d: Vec2, r: f64, cap: f64) -> Option<(f64, (i64, i64))> {
        let d = d.normalized();
        let end = o + d * cap;
        let (x0, x1) = (o.x.min(end.x).floor() as i64 - 2, o.x.max(end.x).ceil() as i64 + 2);
        let (y0, y1) = (o.y.min(end.y).floor() as i64 - 2, o.y.max(end.y).ceil() as i64 + 2);
        let mut best: Option<(f64, (i64, i64))> = None;
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                let w = o - Vec2::new(cx as f64, cy as f64);
                let b = d.dot(w);
                let c0 = w.dot(w) - r * r;
                let disc = b * b - c0;
                if disc <= 1e-20 {
                    continue; // miss or tangent
                }
                let sq = disc.sqrt();
                for t in [-b - sq, -b + sq] {
                    if t > 1e-9 && t <= cap && best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, (cx, cy)));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn rejects_radius_outside_domain() {
        assert!(matches!(build_table(0.5, 1), Err(Error::Domain(_))));
        assert!(matches!(build_table(0.0, 1), Err(Error::Domain(_))));
        assert!(matches!(build_table(-0.1, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn axis_corridors_at_r04() {
        let t = table(0.4);
        assert_eq!(t.corridors.len(), 4);
        for c in &t.corridors {
            assert!((c.width - 0.2).abs() < 1e-12);
            let (p, q) = c.direction;
            assert_eq!(p * p + q * q, 1);
        }
    }

    #[test]
    fn diagonal_corridors_join_at_cutoff_2() {
        let t = build_table(0.3, 2).unwrap();
        assert_eq!(t.corridors.len(), 8);
        let diag: Vec<_> = t
            .corridors
            .iter()
            .filter(|c| c.direction.0 * c.direction.0 + c.direction.1 * c.direction.1 == 2)
            .collect();
        assert_eq!(diag.len(), 4);
        for c in diag {
            assert!((c.width - (1.0 / 2f64.sqrt() - 0.6)).abs() < 1e-12);
        }
    }

    #[test]
    fn corridor_order_is_deterministic() {
        let a = build_table(0.3, 2).unwrap();
        let b = build_table(0.3, 2).unwrap();
        assert_eq!(a.corridors, b.corridors);
        let norms: Vec<i64> = a
            .corridors
            .iter()
            .map(|c| c.direction.0.pow(2) + c.direction.1.pow(2))
            .collect();
        let mut sorted = norms.clone();
        sorted.sort();
        assert_eq!(norms, sorted);
    }

    #[test]
    fn head_on_neighbor_shot() {
        let t = table(0.4);
        let f = boundary_point(&t, 0.0);
        let flight = free_flight(
            &t,
            &PlanarRay {
                origin: f.position,
                direction: Vec2::new(1.0, 0.0),
            },
            Some((0, 0)),
        );
        match flight {
            Flight::Hit { tau, disc, point } => {
                assert!((tau - 0.2).abs() < 1e-12);
                assert_eq!(disc, (1, 0));
                assert!((point.x - 0.6).abs() < 1e-12 && point.y.abs() < 1e-15);
            }
            _ => panic!("expected a hit"),
        }
    }

    #[test]
    fn grazing_ray_escapes_up_the_vertical_corridor() {
        let mut t = table(0.4);
        t.tau_max = 2000.0;
        let flight = free_flight(
            &t,
            &PlanarRay {
                origin: Vec2::new(0.4, 0.0),
                direction: Vec2::new(0.0, 1.0),
            },
            Some((0, 0)),
        );
        assert_eq!(flight, Flight::Escape { tau_max: 2000.0 });
    }

    #[test]
    fn grazing_ray_escapes_down_the_diagonal_corridor() {
        let mut t = build_table(0.3, 2).unwrap();
        t.tau_max = 2000.0;
        let r = t.r;
        let th = -std::f64::consts::FRAC_PI_4;
        let flight = free_flight(
            &t,
            &PlanarRay {
                origin: Vec2::new(r * th.cos(), r * th.sin()),
                direction: Vec2::new(1.0, 1.0),
            },
            Some((0, 0)),
        );
        assert_eq!(flight, Flight::Escape { tau_max: 2000.0 });
    }

    #[test]
    fn agrees_with_brute_force_on_random_flights() {
        let t = table(0.25);
        let mut rng = crate::rng::stream(42, 0xf1, 0);
        let mut hits = 0;
        for _ in 0..10_000 {
            use rand::Rng;
            let s: f64 = rng.gen::<f64>() * t.circumference();
            let phi: f64 = (rng.gen::<f64>() * 2.0 - 1.0).asin();
            let f = boundary_point(&t, s);
            let dir = f.inward_normal * phi.cos() + f.tangent * phi.sin();
            let ray = PlanarRay {
                origin: f.position,
                direction: dir,
            };
            match free_flight(&t, &ray, None) {
                Flight::Hit { tau, disc, .. } => {
                    let (bt, bd) = brute_force(ray.origin, dir, t.r, tau + 2.0)
                        .expect("oracle must find the hit");
                    assert_eq!(disc, bd, "disc identity mismatch at s={s} phi={phi}");
                    assert!((tau - bt).abs() < 1e-10, "tau mismatch: {tau} vs {bt}");
                    hits += 1;
                }
                Flight::Escape { .. } => {}
            }
        }
        assert!(hits > 9_900);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn flight_is_equivariant_under_lattice_translation(
            s in 0.0f64..1.0,
            u in -0.999f64..0.999,
            vx in -50i64..50,
            vy in -50i64..50,
        ) {
            let t = table(0.25);
            let f = boundary_point(&t, s * t.circumference());
            let phi = u.asin();
            let dir = f.inward_normal * phi.cos() + f.tangent * phi.sin();
            let shift = Vec2::new(vx as f64, vy as f64);
            let a = free_flight(&t, &PlanarRay { origin: f.position, direction: dir }, None);
            let b = free_flight(&t, &PlanarRay { origin: f.position + shift, direction: dir }, None);
            match (a, b) {
                (Flight::Hit { tau: t1, disc: d1, .. }, Flight::Hit { tau: t2, disc: d2, .. }) => {
                    prop_assert_eq!(d1.0 + vx, d2.0);
                    prop_assert_eq!(d1.1 + vy, d2.1);
                    prop_assert!((t1 - t2).abs() < 1e-12);
                }
                (Flight::Escape { .. }, Flight::Escape { .. }) => {}
                _ => prop_assert!(false, "translation changed the outcome"),
            }
        }
    }
}
