//! Symbol ladders and the finite-entropy Markov measure over them.
//!
//! A ladder is the recursion `N_{i+1} = floor(c^-4 N_i^2) + 1`: the slowest
//! admissible growth of flight labels along an orbit that crosses a corridor
//! cell at every collision. Starting from `N_0 >= 2 c^4` the rungs grow
//! doubly exponentially (`N_i >= 2^(2^i)`), so they are kept exactly (big
//! integers) while they fit machine words, and as logarithms beyond.
//!
//! On ladder indices lives a nearest-neighbor random walk with geometric
//! stationary law `p_i = 2^-i`: a countable-state Markov measure whose
//! entropy is finite while the induced flight labels (and hence the
//! integrand of the Lyapunov series) explode.

use crate::error::{Error, Result};
use crate::rng;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Largest label kept in exact machine form.
const EXACT_CAP: u64 = 1 << 62;
/// Largest big-integer size (bits) carried before switching to logarithms;
/// stays comfortably below the `f64` exponent range so conversions are
/// lossless in the leading digits.
const BIG_BITS_CAP: u64 = 960;

/// A flight label: exact while it fits a machine word, otherwise its natural
/// logarithm. Ladders overflow `u64` after a handful of rungs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Symbol {
    Exact(u64),
    Huge { ln: f64 },
}

impl Symbol {
    pub fn ln(&self) -> f64 {
        match *self {
            Symbol::Exact(n) => (n as f64).ln(),
            Symbol::Huge { ln } => ln,
        }
    }
    pub fn exact(&self) -> Option<u64> {
        match *self {
            Symbol::Exact(n) => Some(n),
            Symbol::Huge { .. } => None,
        }
    }
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Symbol::Exact(a), Symbol::Exact(b)) => a == b,
            _ => self.ln().total_cmp(&other.ln()) == std::cmp::Ordering::Equal,
        }
    }
}
impl Eq for Symbol {}
impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Symbol::Exact(a), Symbol::Exact(b)) => a.cmp(b),
            _ => self.ln().total_cmp(&other.ln()),
        }
    }
}

fn big_ln(x: &BigUint) -> f64 {
    // Avoid `to_f64`, which overflows to infinity past ~1024 bits; take the
    // top 53 bits as a mantissa and account for the shift exactly.
    let bits = x.bits();
    if bits <= 53 {
        return x.to_f64().map(f64::ln).unwrap_or(f64::NEG_INFINITY);
    }
    let shift = bits - 53;
    let top = (x >> shift).to_f64().unwrap_or(0.0);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// The label recursion `N_{i+1} = floor(c^-4 N_i^2) + 1`, computed exactly.
/// `c` must sit on the 0.01 grid so that `c^4` is an exact rational and the
/// floor never depends on rounding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ladder {
    pub c: f64,
    /// `c` in hundredths, the exact numerator of the grid rational.
    pub c_cents: u64,
    pub n0: u64,
    levels: Vec<Symbol>,
    /// First rung no longer representable exactly, if any.
    pub switch_index: Option<usize>,
}

impl Ladder {
    pub fn new(c: f64, n0: u64, depth: usize) -> Result<Ladder> {
        let cents = (c * 100.0).round();
        if !c.is_finite() || c < 1.0 || (c * 100.0 - cents).abs() > 1e-6 || cents > 1e5 {
            return Err(Error::Domain(format!(
                "ladder constant must lie on the 0.01 grid in [1, 1000], got {c}"
            )));
        }
        let cents = cents as u64;
        let c4_num = BigUint::from(cents).pow(4);
        let denom = BigUint::from(100_000_000u64); // 100^4
        if BigUint::from(2u8) * &c4_num > BigUint::from(n0) * &denom {
            return Err(Error::Domain(format!(
                "ladder start {n0} is below the admissible minimum 2 c^4 = {}",
                2.0 * c.powi(4)
            )));
        }
        let ln_c = (cents as f64 / 100.0).ln();
        let mut levels = vec![Symbol::Exact(n0)];
        let mut switch_index = None;
        let mut cur = BigUint::from(n0);
        for i in 1..depth {
            if cur.bits() <= BIG_BITS_CAP {
                cur = (&cur * &cur * &denom) / &c4_num + 1u8;
                let sym = match cur.to_u64() {
                    Some(v) if v <= EXACT_CAP => Symbol::Exact(v),
                    _ => {
                        switch_index.get_or_insert(i);
                        Symbol::Huge { ln: big_ln(&cur) }
                    }
                };
                levels.push(sym);
            } else {
                // The floor and the +1 shift the logarithm by less than
                // 2^-900 relative; the two-term recursion is exact at f64
                // precision.
                switch_index.get_or_insert(i);
                let ln = 2.0 * levels[i - 1].ln() - 4.0 * ln_c;
                levels.push(Symbol::Huge { ln });
            }
            if levels[i].ln() <= levels[i - 1].ln() {
                return Err(Error::Domain(format!(
                    "ladder fails to grow at rung {i}: start {n0} too small for c = {c}"
                )));
            }
        }
        Ok(Ladder {
            c,
            c_cents: cents,
            n0,
            levels,
            switch_index,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
    pub fn get(&self, i: usize) -> Option<Symbol> {
        self.levels.get(i).copied()
    }
    pub fn ln(&self, i: usize) -> Option<f64> {
        self.get(i).map(|s| s.ln())
    }
    pub fn rungs(&self) -> &[Symbol] {
        &self.levels
    }
    /// Label attached to a walk state (states are 1-based rung indices).
    pub fn symbol_for_state(&self, state: u64) -> Option<Symbol> {
        usize::try_from(state).ok().and_then(|i| self.get(i))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WordViolation {
    /// Index of the *second* symbol of the offending pair (or of the
    /// offending symbol for a floor violation).
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WordCheck {
    pub valid: bool,
    pub violation: Option<WordViolation>,
}

fn pair_in_window(a: Symbol, b: Symbol, c4_num: &BigUint, denom: &BigUint, ln_c: f64) -> bool {
    match (a, b) {
        (Symbol::Exact(x), Symbol::Exact(y)) => {
            // The recursion lands on floor(c^-4 x^2) + 1, one past the strict
            // bound, so admissibility allows that single unit of slack.
            let sq = |v: u64| BigUint::from(v) * BigUint::from(v) * denom;
            BigUint::from(y.saturating_sub(1)) * c4_num <= sq(x)
                && BigUint::from(x.saturating_sub(1)) * c4_num <= sq(y)
        }
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            let tol = 1e-9 * (1.0 + la.abs().max(lb.abs()));
            lb <= 2.0 * la - 4.0 * ln_c + tol && la <= 2.0 * lb - 4.0 * ln_c + tol
        }
    }
}

/// Check a symbol word against the ladder window: every symbol at least
/// `n_min`, and each adjacent pair mutually bounded (up to one unit of
/// slack) by `c^-4` times the square of the other. Exact pairs are checked
/// in integer arithmetic, huge ones in the log domain.
pub fn validate_word(word: &[Symbol], c: f64, n_min: u64) -> Result<WordCheck> {
    let cents = (c * 100.0).round();
    if !c.is_finite() || c < 1.0 || (c * 100.0 - cents).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "window constant must lie on the 0.01 grid and be >= 1, got {c}"
        )));
    }
    let c4_num = BigUint::from(cents as u64).pow(4);
    let denom = BigUint::from(100_000_000u64);
    let ln_c = (cents / 100.0).ln();
    let fail = |index: usize, reason: String| {
        Ok(WordCheck {
            valid: false,
            violation: Some(WordViolation { index, reason }),
        })
    };
    for (i, s) in word.iter().enumerate() {
        if let Symbol::Exact(n) = s {
            if *n < n_min {
                return fail(i, format!("symbol {n} below the floor {n_min}"));
            }
        }
    }
    for i in 1..word.len() {
        if !pair_in_window(word[i - 1], word[i], &c4_num, &denom, ln_c) {
            return fail(
                i,
                format!(
                    "pair (ln {:.6}, ln {:.6}) violates the c = {c} window",
                    word[i - 1].ln(),
                    word[i].ln()
                ),
            );
        }
    }
    Ok(WordCheck {
        valid: true,
        violation: None,
    })
}

/// Nearest-neighbor walk on ladder indices `1, 2, ...`: step up with
/// probability 1/3, down (or hold at 1) with probability 2/3. Its stationary
/// law is geometric, `p_i = 2^-i`, and every row has the same entropy
/// `ln 3 - (2/3) ln 2`, so the entropy rate is finite (below `ln 2`).
#[derive(Clone, Copy, Debug, Default)]
pub struct LadderWalk;

pub const P_UP: f64 = 1.0 / 3.0;
pub const P_DOWN: f64 = 2.0 / 3.0;

impl LadderWalk {
    pub fn row(&self, i: u64) -> [(u64, f64); 2] {
        if i <= 1 {
            [(1, P_DOWN), (2, P_UP)]
        } else {
            [(i - 1, P_DOWN), (i + 1, P_UP)]
        }
    }

    pub fn stationary(&self, i: u64) -> f64 {
        0.5f64.powi(i.min(1 << 16) as i32)
    }

    pub fn entropy_rate(&self) -> f64 {
        3f64.ln() - P_DOWN * 2f64.ln()
    }

    /// Exact stationary draw: the index of the first set bit of a uniform
    /// word is geometric with ratio 1/2.
    pub fn sample_stationary(&self, rng: &mut impl Rng) -> u64 {
        let mut state = 1u64;
        loop {
            let w: u64 = rng.gen();
            if w != 0 {
                return state + w.leading_zeros() as u64;
            }
            state += 64;
        }
    }

    /// A stationary path of ladder indices.
    pub fn sample_path(&self, len: usize, seed: u64) -> Vec<u64> {
        let mut rng = rng::stream(seed, TAG_WALK, 0);
        let mut path = Vec::with_capacity(len);
        if len == 0 {
            return path;
        }
        let mut state = self.sample_stationary(&mut rng);
        path.push(state);
        for _ in 1..len {
            let u: f64 = rng.gen();
            state = if u < P_UP {
                state + 1
            } else {
                (state - 1).max(1)
            };
            path.push(state);
        }
        path
    }
}

const TAG_WALK: u64 = 0x776b;

/// Empirical state frequencies of a path.
pub fn empirical_frequencies(path: &[u64]) -> HashMap<u64, f64> {
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for &s in path {
        *counts.entry(s).or_insert(0) += 1;
    }
    let n = path.len() as f64;
    counts.into_iter().map(|(k, v)| (k, v as f64 / n)).collect()
}

/// Empirical frequencies of adjacent pairs (in path order).
pub fn pair_frequencies(path: &[u64]) -> HashMap<(u64, u64), f64> {
    let mut counts: HashMap<(u64, u64), u64> = HashMap::new();
    for w in path.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    let n = (path.len().saturating_sub(1)).max(1) as f64;
    counts.into_iter().map(|(k, v)| (k, v as f64 / n)).collect()
}

/// Partial sums `S_I = sum_{i<=I} term(i)` at the requested checkpoints
/// (1-based, ascending), with compensated accumulation.
pub fn divergence_series(mut term: impl FnMut(u64) -> f64, checkpoints: &[u64]) -> Vec<f64> {
    debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
    let mut out = Vec::with_capacity(checkpoints.len());
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut next = checkpoints.iter().copied().peekable();
    let last = checkpoints.last().copied().unwrap_or(0);
    for i in 1..=last {
        let t = term(i);
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        if next.peek() == Some(&i) {
            out.push(sum);
            next.next();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_matches_hand_computed_rungs() {
        let l = Ladder::new(2.0, 100, 6).unwrap();
        assert_eq!(l.get(0), Some(Symbol::Exact(100)));
        assert_eq!(l.get(1), Some(Symbol::Exact(626)));
        assert_eq!(l.get(2), Some(Symbol::Exact(24_493)));
        assert_eq!(l.get(3), Some(Symbol::Exact(37_494_191)));
        assert!(matches!(l.get(4), Some(Symbol::Exact(_))));
        assert!(matches!(l.get(5), Some(Symbol::Huge { .. })));
        assert_eq!(l.switch_index, Some(5));
    }

    #[test]
    fn huge_rungs_continue_the_exact_recursion() {
        let l = Ladder::new(2.0, 100, 12).unwrap();
        for i in 1..l.len() {
            let predicted = 2.0 * l.ln(i - 1).unwrap() - 4.0 * 2f64.ln();
            let actual = l.ln(i).unwrap();
            // floor(x)+1 keeps the log within [predicted, predicted + 1/x].
            assert!(
                actual >= predicted - 1e-9 && actual <= predicted + 1e-2,
                "rung {i}: ln {actual} vs recursion {predicted}"
            );
        }
    }

    #[test]
    fn ladder_is_doubly_exponential() {
        let l = Ladder::new(2.0, 100, 60).unwrap();
        for i in 0..l.len() {
            let floor = 2f64.powi(i as i32) * 2f64.ln();
            assert!(
                l.ln(i).unwrap() >= floor,
                "rung {i}: ln {} below 2^i ln 2 = {floor}",
                l.ln(i).unwrap()
            );
        }
    }

    #[test]
    fn ladder_rejects_bad_parameters() {
        assert!(matches!(Ladder::new(2.0, 31, 4), Err(Error::Domain(_))));
        assert!(Ladder::new(2.0, 32, 4).is_ok());
        assert!(matches!(Ladder::new(1.234, 100, 4), Err(Error::Domain(_))));
        assert!(matches!(Ladder::new(0.9, 100, 4), Err(Error::Domain(_))));
        assert!(Ladder::new(1.37, 100, 4).is_ok());
    }

    #[test]
    fn symbols_order_by_magnitude() {
        let mut v = vec![
            Symbol::Huge { ln: 50.0 },
            Symbol::Exact(5),
            Symbol::Exact(3),
        ];
        v.sort();
        assert_eq!(v[0], Symbol::Exact(3));
        assert_eq!(v[1], Symbol::Exact(5));
        assert!(matches!(v[2], Symbol::Huge { .. }));
    }

    #[test]
    fn ladder_words_validate_and_corruption_is_caught() {
        let l = Ladder::new(2.0, 100, 20).unwrap();
        let check = validate_word(l.rungs(), 2.0, 32).unwrap();
        assert!(check.valid, "{:?}", check.violation);
        let mut bad = l.rungs().to_vec();
        bad.swap(2, 6);
        let check = validate_word(&bad, 2.0, 32).unwrap();
        assert!(!check.valid);
        // The first offending pair is (626, [swapped-in huge]) ending at 2.
        assert_eq!(check.violation.unwrap().index, 2);
    }

    #[test]
    fn window_rejects_jumps_and_floors() {
        let w = [Symbol::Exact(100), Symbol::Exact(100_000)];
        assert!(!validate_word(&w, 2.0, 32).unwrap().valid);
        let w = [Symbol::Exact(100), Symbol::Exact(626)];
        assert!(validate_word(&w, 2.0, 32).unwrap().valid);
        let w = [Symbol::Exact(10), Symbol::Exact(20)];
        let check = validate_word(&w, 2.0, 32).unwrap();
        assert!(!check.valid);
        assert_eq!(check.violation.unwrap().index, 0);
    }

    #[test]
    fn walk_rows_sum_to_exactly_one() {
        let w = LadderWalk;
        for i in 1..200u64 {
            let row = w.row(i);
            assert_eq!(row[0].1 + row[1].1, 1.0, "row {i} sum off");
        }
    }

    #[test]
    fn walk_stationary_law_balances() {
        let w = LadderWalk;
        for i in 1..40u64 {
            let mut inflow = 0.0;
            for j in 1..45u64 {
                for (to, p) in w.row(j) {
                    if to == i {
                        inflow += w.stationary(j) * p;
                    }
                }
            }
            let p = w.stationary(i);
            assert!(
                (inflow - p).abs() < 1e-15 * p.max(1e-300) + 1e-18,
                "state {i}: inflow {inflow} vs {p}"
            );
        }
    }

    #[test]
    fn walk_entropy_rate_value() {
        let h = LadderWalk.entropy_rate();
        assert!((h - 0.63651416829481).abs() < 1e-12);
        assert!(h < 2f64.ln());
    }

    #[test]
    fn path_frequencies_match_stationary_law() {
        let w = LadderWalk;
        let path = w.sample_path(200_000, 7);
        assert_eq!(path, w.sample_path(200_000, 7), "sampling must be deterministic");
        let freq = empirical_frequencies(&path);
        let n = path.len() as f64;
        for i in 1..=6u64 {
            let p = w.stationary(i);
            let se = (p * (1.0 - p) / n).sqrt();
            let f = freq.get(&i).copied().unwrap_or(0.0);
            // Batch correlation inflates the error bar ~sqrt(3).
            assert!(
                (f - p).abs() < 8.0 * se,
                "state {i}: freq {f} vs {p} (se {se})"
            );
        }
    }

    #[test]
    fn walk_is_reversible_in_pair_frequencies() {
        let path = LadderWalk.sample_path(400_000, 11);
        let pairs = pair_frequencies(&path);
        for (a, b) in [(1u64, 2u64), (2, 3), (3, 4)] {
            let f = pairs.get(&(a, b)).copied().unwrap_or(0.0);
            let g = pairs.get(&(b, a)).copied().unwrap_or(0.0);
            let scale = f.max(g).max(1e-9);
            assert!(
                (f - g).abs() / scale < 0.1,
                "pair ({a},{b}): {f} vs {g}"
            );
        }
    }

    #[test]
    fn ladder_series_diverges_linearly() {
        let l = Ladder::new(2.0, 100, 62).unwrap();
        let w = LadderWalk;
        let cps: Vec<u64> = (1..=60).collect();
        let sums = divergence_series(
            |i| w.stationary(i) * l.ln(i as usize).unwrap(),
            &cps,
        );
        for (k, s) in sums.iter().enumerate() {
            let i = (k + 1) as f64;
            assert!(*s >= i * 2f64.ln() * 0.999, "S_{i} = {s} below linear growth");
        }
        assert!(sums.windows(2).all(|p| p[1] > p[0]));
    }
}
