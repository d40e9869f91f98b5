//! The billiard map on the collision cylinder.
//!
//! A phase point is `(s, phi)`: arclength along the reference disc boundary
//! and the angle from the inward normal to the outgoing velocity, `phi` in
//! `[-pi/2, pi/2]`. The map `T` flies to the next collision and reflects.
//! The invariant measure is `d nu = c_nu cos(phi) ds dphi` with
//! `c_nu = 1/(2 pi r)`.
//!
//! The derivative of `T` in these coordinates, with disc curvature `K = 1/r`
//! and flight length `tau`, is
//!
//! ```text
//!  DT = -1/cos(phi') * | tau K + cos phi                   tau              |
//!                      | K (tau K + cos phi + cos phi')    tau K + cos phi' |
//! ```
//!
//! whose determinant collapses to `cos(phi)/cos(phi')`, the invariance
//! identity of `nu`. Time reversal is the involution `i(s, phi) = (s, -phi)`;
//! the inverse map is `i . T . i`.

use crate::error::{Error, Result};
use crate::geometry::{boundary_point, free_flight, BilliardTable, Flight, PlanarRay, Vec2};
use crate::numeric::{det2, mat_vec, Mat2};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub s: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(s: f64, phi: f64) -> Self {
        PhasePoint { s, phi }
    }
}

/// Time-reversal involution `(s, phi) -> (s, -phi)`.
pub fn involution(x: PhasePoint) -> PhasePoint {
    PhasePoint::new(x.s, -x.phi)
}

/// One collision-to-collision step, with the unfolded flight data and the
/// 2x2 derivative of the map at the departure point.
#[derive(Clone, Copy, Debug)]
pub struct CollisionStep {
    pub from: PhasePoint,
    pub to: PhasePoint,
    pub tau: f64,
    /// Lattice translation between the departure and arrival disc centers.
    pub displacement: (i64, i64),
    /// Coarse flight label: corridor cells traversed for corridor-aligned
    /// flights, rounded flight length otherwise.
    pub n_symbol: u64,
    pub derivative: Mat2,
}

/// Outgoing velocity at a phase point.
pub fn velocity(table: &BilliardTable, x: PhasePoint) -> Vec2 {
    let f = boundary_point(table, x.s);
    f.inward_normal * x.phi.cos() + f.tangent * x.phi.sin()
}

/// Flight label for a displacement/length pair. Long flights aligned with a
/// corridor count lattice cells along the corridor axis (the projection of
/// the integer displacement onto the corridor direction); anything else
/// rounds the flight length. The two conventions agree to O(1).
pub fn flight_symbol(table: &BilliardTable, displacement: (i64, i64), tau: f64) -> u64 {
    let disp = Vec2::new(displacement.0 as f64, displacement.1 as f64);
    let p_max = table
        .corridors
        .iter()
        .map(|c| disp.dot(c.unit()).abs())
        .fold(0.0f64, f64::max);
    if p_max >= tau - 0.5 {
        p_max.round() as u64
    } else {
        tau.round().max(0.0) as u64
    }
}

fn derivative_matrix(k: f64, tau: f64, cos_from: f64, cos_to: f64) -> Mat2 {
    let a = tau * k + cos_from;
    let inv = -1.0 / cos_to;
    [
        [a * inv, tau * inv],
        [k * (a + cos_to) * inv, (tau * k + cos_to) * inv],
    ]
}

/// Apply the billiard map once.
///
/// Returns the escape error when the flight exceeds `tau_max`: escape is an
/// expected outcome of infinite-horizon dynamics, and callers decide whether
/// to resample, count, or abort.
pub fn forward_map(table: &BilliardTable, x: PhasePoint) -> Result<CollisionStep> {
    let f = boundary_point(table, x.s);
    let (sin_phi, cos_phi) = x.phi.sin_cos();
    let v = f.inward_normal * cos_phi + f.tangent * sin_phi;
    // The launch disc sits at the origin of the unfolded frame; skipping it
    // in the flight trace is exact (outgoing rays never re-hit their disc).
    let flight = free_flight(
        table,
        &PlanarRay {
            origin: f.position,
            direction: v,
        },
        Some((0, 0)),
    );
    let (tau, disc, point) = match flight {
        Flight::Hit { tau, disc, point } => (tau, disc, point),
        Flight::Escape { tau_max } => return Err(Error::Escape { tau_max }),
    };
    let center = Vec2::new(disc.0 as f64, disc.1 as f64);
    let normal = ((point - center) * (1.0 / table.r)).normalized();
    let tangent = normal.perp();
    let cos_to = (-v.dot(normal)).max(0.0);
    if cos_to < 1e-14 {
        // Tangential arrival: the collision map is singular here and the
        // arrival angle is numerically meaningless.
        return Err(Error::Numerical(format!(
            "tangential arrival at disc ({}, {})",
            disc.0, disc.1
        )));
    }
    let sin_to = v.dot(tangent);
    let phi_to = sin_to.atan2(cos_to);
    let s_to = table.wrap_s(table.r * normal.y.atan2(normal.x));
    let to = PhasePoint::new(s_to, phi_to);

    let k = 1.0 / table.r;
    let derivative = derivative_matrix(k, tau, cos_phi, cos_to);
    #[cfg(debug_assertions)]
    {
        let det = det2(&derivative);
        let id = cos_phi / cos_to;
        let scale = (derivative[0][0].abs() + derivative[0][1].abs())
            * (derivative[1][0].abs() + derivative[1][1].abs());
        debug_assert!(
            (det - id).abs() <= 1e-9_f64.max(scale * 1e-13),
            "determinant identity violated: det={det} expected={id}"
        );
    }

    Ok(CollisionStep {
        from: x,
        to,
        tau,
        displacement: disc,
        n_symbol: flight_symbol(table, disc, tau),
        derivative,
    })
}

/// Apply the inverse billiard map once, by conjugating the forward map with
/// time reversal. The returned step satisfies `forward_map(step.to) == from`
/// up to floating error; its `displacement` is the lattice translation of the
/// reversed flight and its `derivative` is the derivative of the inverse map
/// at `x`.
pub fn inverse_map(table: &BilliardTable, x: PhasePoint) -> Result<CollisionStep> {
    let st = forward_map(table, involution(x))?;
    let d = st.derivative;
    Ok(CollisionStep {
        from: x,
        to: involution(st.to),
        tau: st.tau,
        displacement: st.displacement,
        n_symbol: st.n_symbol,
        derivative: [[d[0][0], -d[0][1]], [-d[1][0], d[1][1]]],
    })
}

/// Draw `count` points from the invariant collision measure:
/// `s` uniform on the boundary, `phi = arcsin(U[-1, 1])`.
pub fn sample_nu(table: &BilliardTable, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = rng::stream(seed, TAG_NU, 0);
    (0..count)
        .map(|_| {
            let s = rng.gen::<f64>() * table.circumference();
            let phi = (2.0 * rng.gen::<f64>() - 1.0).asin();
            PhasePoint::new(s, phi)
        })
        .collect()
}

const TAG_NU: u64 = 0x6e75;
const TAG_LYAP: u64 = 0x6c79;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_plus: f64,
    pub std_error: f64,
    pub collisions: u64,
    pub escapes: u64,
    pub r: f64,
}

/// Benettin estimate of the positive Lyapunov exponent along a nu-random
/// orbit: push one tangent vector, renormalize each collision, average the
/// log stretch. The standard error comes from 25 batch means, which absorbs
/// the autocorrelation of the log-stretch series. Orbits that escape are
/// restarted from a fresh sample and counted.
pub fn lyapunov_estimate(table: &BilliardTable, collisions: u64, seed: u64) -> LyapunovEstimate {
    let mut restart = rng::stream(seed, TAG_LYAP, 0);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let s = rng.gen::<f64>() * table.circumference();
        let phi = (2.0 * rng.gen::<f64>() - 1.0).asin();
        PhasePoint::new(s, phi)
    };
    let mut x = draw(&mut restart);
    let mut u = [0.6f64, 0.8];
    let mut logs = Vec::with_capacity(collisions as usize);
    let mut escapes = 0u64;
    while (logs.len() as u64) < collisions {
        match forward_map(table, x) {
            Ok(step) => {
                u = mat_vec(&step.derivative, u);
                let g = (u[0] * u[0] + u[1] * u[1]).sqrt();
                logs.push(g.ln());
                u = [u[0] / g, u[1] / g];
                x = step.to;
            }
            Err(_) => {
                escapes += 1;
                x = draw(&mut restart);
                u = [0.6, 0.8];
            }
        }
    }
    let (mean, se) = crate::stats::batch_mean_se(&logs, 25);
    LyapunovEstimate {
        lambda_plus: mean,
        std_error: se,
        collisions,
        escapes,
        r: table.r,
    }
}

/// Accumulated log expansion of one tangent vector over `steps` collisions
/// starting at `x`; returns the sum and the endpoint.
pub fn expansion_sum(table: &BilliardTable, x: PhasePoint, steps: u32) -> Result<(f64, PhasePoint)> {
    let mut u = [0.6f64, 0.8];
    let mut acc = 0.0;
    let mut cur = x;
    for _ in 0..steps {
        let step = forward_map(table, cur)?;
        u = mat_vec(&step.derivative, u);
        let g = (u[0] * u[0] + u[1] * u[1]).sqrt();
        acc += g.ln();
        u = [u[0] / g, u[1] / g];
        cur = step.to;
    }
    Ok((acc, cur))
}

/// Finite-time unstable direction at `x`: carry a generic tangent vector
/// from `depth` collisions in the past forward to `x`. Alignment with the
/// true unstable subspace improves exponentially in `depth`.
pub fn unstable_direction(table: &BilliardTable, x: PhasePoint, depth: u32) -> Result<[f64; 2]> {
    let mut past = Vec::with_capacity(depth as usize);
    let mut cur = x;
    for _ in 0..depth {
        cur = inverse_map(table, cur)?.to;
        past.push(cur);
    }
    let mut v = [0.6f64, 0.8];
    for &p in past.iter().rev() {
        let step = forward_map(table, p)?;
        v = mat_vec(&step.derivative, v);
        let g = (v[0] * v[0] + v[1] * v[1]).sqrt();
        v = [v[0] / g, v[1] / g];
    }
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    Ok(v)
}

/// Finite-time stable direction: the time-reversal image of the unstable
/// direction at the reversed point.
pub fn stable_direction(table: &BilliardTable, x: PhasePoint, depth: u32) -> Result<[f64; 2]> {
    let u = unstable_direction(table, involution(x), depth)?;
    let mut v = [u[0], -u[1]];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    Ok(v)
}

/// Which map the invariance test should exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapVariant {
    /// The billiard map itself.
    Exact,
    /// Negative control: the arrival angle is smoothly distorted toward the
    /// normal, which breaks the `cos(phi)` marginal. (Merely negating the
    /// arrival angle would not do: the measure is symmetric in `phi` and the
    /// map remains measure-preserving under time reversal.)
    PhiDistorted,
}

fn distort_phi(phi: f64) -> f64 {
    let c = phi.cos();
    phi * (1.0 - 0.35 * c * c)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalStat {
    pub name: String,
    pub mean_before: f64,
    pub mean_after: f64,
    /// Mean of the paired differences `f(Tx) - f(x)`.
    pub diff_mean: f64,
    pub diff_se: f64,
    /// `|diff_mean| / diff_se`; order 1 under invariance.
    pub standardized: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub variant: MapVariant,
    pub pairs_used: u64,
    pub escapes: u64,
    pub stats: Vec<FunctionalStat>,
    pub max_standardized: f64,
}

const BATTERY: [&str; 8] = [
    "sin(phi)",
    "cos(2 phi)",
    "cos(s/r)",
    "sin(s/r)",
    "sin(phi) cos(s/r)",
    "sin(phi) sin(s/r)",
    "cos(2 phi) cos(s/r)",
    "cos(2 phi) sin(s/r)",
];

fn battery_eval(table: &BilliardTable, x: PhasePoint) -> [f64; 8] {
    let a = x.s / table.r;
    let (sp, _) = x.phi.sin_cos();
    let c2 = (2.0 * x.phi).cos();
    let (sa, ca) = a.sin_cos();
    [sp, c2, ca, sa, sp * ca, sp * sa, c2 * ca, c2 * sa]
}

/// Push a nu-sample forward one step and compare moments of the test-function
/// battery before and after, using paired differences. Deterministic for a
/// fixed seed and independent of the rayon pool size: samples are drawn
/// sequentially, processed in fixed-size chunks, and reduced in chunk order.
pub fn invariance_test(
    table: &BilliardTable,
    count: usize,
    seed: u64,
    variant: MapVariant,
) -> InvarianceReport {
    let samples = sample_nu(table, count, seed);
    const CHUNK: usize = 8192;
    #[derive(Clone)]
    struct Acc {
        n: u64,
        escapes: u64,
        sum_before: [f64; 8],
        sum_after: [f64; 8],
        sum_d: [f64; 8],
        sum_d2: [f64; 8],
    }
    let zero = Acc {
        n: 0,
        escapes: 0,
        sum_before: [0.0; 8],
        sum_after: [0.0; 8],
        sum_d: [0.0; 8],
        sum_d2: [0.0; 8],
    };
    let accs: Vec<Acc> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = zero.clone();
            for &x in chunk {
                match forward_map(table, x) {
                    Ok(step) => {
                        let y = match variant {
                            MapVariant::Exact => step.to,
                            MapVariant::PhiDistorted => {
                                PhasePoint::new(step.to.s, distort_phi(step.to.phi))
                            }
                        };
                        let fb = battery_eval(table, x);
                        let fa = battery_eval(table, y);
                        for i in 0..8 {
                            acc.sum_before[i] += fb[i];
                            acc.sum_after[i] += fa[i];
                            let d = fa[i] - fb[i];
                            acc.sum_d[i] += d;
                            acc.sum_d2[i] += d * d;
                        }
                        acc.n += 1;
                    }
                    Err(_) => acc.escapes += 1,
                }
            }
            acc
        })
        .collect();
    let mut total = zero;
    for a in accs {
        total.n += a.n;
        total.escapes += a.escapes;
        for i in 0..8 {
            total.sum_before[i] += a.sum_before[i];
            total.sum_after[i] += a.sum_after[i];
            total.sum_d[i] += a.sum_d[i];
            total.sum_d2[i] += a.sum_d2[i];
        }
    }
    let n = total.n as f64;
    let mut stats = Vec::with_capacity(8);
    let mut max_std = 0.0f64;
    for i in 0..8 {
        let mean_d = total.sum_d[i] / n;
        let var = (total.sum_d2[i] / n - mean_d * mean_d).max(0.0);
        let se = (var / n).sqrt();
        let standardized = if se > 0.0 { mean_d.abs() / se } else { 0.0 };
        max_std = max_std.max(standardized);
        stats.push(FunctionalStat {
            name: BATTERY[i].to_string(),
            mean_before: total.sum_before[i] / n,
            mean_after: total.sum_after[i] / n,
            diff_mean: mean_d,
            diff_se: se,
            standardized,
        });
    }
    InvarianceReport {
        variant,
        pairs_used: total.n,
        escapes: total.escapes,
        stats,
        max_standardized: max_std,
    }
}
