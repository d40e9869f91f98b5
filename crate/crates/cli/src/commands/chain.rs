//! `lorentz chain ...` — the two countable-state Markov measures on symbol
//! sequences: a finite-entropy ladder walk (mu1) and an infinite-entropy
//! factor-product chain (mu2).

use super::{ActionKind, ChainParams, MeasureKind};
use crate::output::{f17, RunDir};
use crate::{CliError, CliResult};
use lorentz_core::measures::{
    markov_entropy, mu2_build, validate_family, verify_omega2_support, ProductChain,
    StationaryFamily,
};
use lorentz_core::symbolic::{
    divergence_series, empirical_frequencies, validate_word, Ladder, LadderWalk,
};
use serde_json::json;
use std::collections::HashMap;

pub fn run(p: &ChainParams, run: &mut RunDir) -> CliResult<String> {
    match p.measure {
        MeasureKind::Mu1 => run_mu1(p, run),
        MeasureKind::Mu2 => run_mu2(p, run),
    }
}

fn require_ascending(checkpoints: &[u64]) -> CliResult<()> {
    if checkpoints.is_empty() {
        return Err(CliError::Usage("need at least one checkpoint".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(CliError::Usage(format!(
            "checkpoints must be positive and strictly increasing, got {checkpoints:?}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- mu1 ----

fn run_mu1(p: &ChainParams, run: &mut RunDir) -> CliResult<String> {
    let ladder = Ladder::new(p.ladder_c, p.n0, p.depth)?;
    let walk = LadderWalk;
    let top_state = (ladder.len() - 1) as u64;
    match p.action {
        ActionKind::Build => mu1_build(p, run, &ladder, &walk, top_state),
        ActionKind::Entropy => mu1_entropy(p, run, &ladder, &walk, top_state),
        ActionKind::Sample => mu1_sample(p, run, &ladder, &walk, top_state),
        ActionKind::Check => mu1_check(p, run, &ladder, &walk, top_state),
    }
}

fn mu1_build(
    p: &ChainParams,
    run: &mut RunDir,
    ladder: &Ladder,
    walk: &LadderWalk,
    top_state: u64,
) -> CliResult<String> {
    let cap = p.state_cap.min(top_state);
    let states: Vec<_> = (1..=cap)
        .map(|i| {
            let sym = ladder.symbol_for_state(i).expect("state within depth");
            json!({
                "index": i,
                "n": sym.exact(),
                "ln_n": sym.ln(),
                "p": walk.stationary(i),
            })
        })
        .collect();
    let rows: Vec<_> = (1..=cap)
        .flat_map(|i| {
            walk.row(i)
                .into_iter()
                .map(move |(j, q)| json!({"from": i, "to": j, "prob": q}))
        })
        .collect();
    run.write_json(
        "chain.json",
        &json!({
            "kind": "mu1",
            "ladder_c": p.ladder_c,
            "n0": p.n0,
            "depth": p.depth,
            "up_probability": lorentz_core::symbolic::P_UP,
            "down_probability": lorentz_core::symbolic::P_DOWN,
            "states": states,
            "rows": rows,
            "truncation_note": format!(
                "transition rows are exact for every state; the listing stops at state {cap}, \
                 beyond which the stationary mass is 2^-{cap}"
            ),
        }),
    )?;
    let rung1 = ladder
        .get(1)
        .and_then(|s| s.exact())
        .map_or("huge".to_string(), |n| n.to_string());
    Ok(format!(
        "mu1 ladder walk (c = {}, n0 = {}, depth {}): {} states serialized; state 1 carries symbol {}",
        p.ladder_c, p.n0, p.depth, cap, rung1
    ))
}

fn mu1_entropy(
    p: &ChainParams,
    run: &mut RunDir,
    ladder: &Ladder,
    walk: &LadderWalk,
    top_state: u64,
) -> CliResult<String> {
    require_ascending(&p.checkpoints)?;
    let last = *p.checkpoints.last().unwrap();
    if last > top_state {
        return Err(CliError::Usage(format!(
            "checkpoint {last} exceeds the deepest ladder state {top_state}; raise --depth"
        )));
    }
    let h = walk.entropy_rate();
    let bound = 2f64.ln();
    let cross_horizon = 60u64;
    let cross = markov_entropy(
        |i| walk.stationary(i),
        |i| walk.row(i).to_vec(),
        cross_horizon,
    );
    let sums = divergence_series(
        |i| walk.stationary(i) * ladder.ln(i as usize).expect("state within depth"),
        &p.checkpoints,
    );
    let ln2 = 2f64.ln();
    let series: Vec<_> = p
        .checkpoints
        .iter()
        .zip(&sums)
        .map(|(&i, &s)| json!({"upto": i, "value": s, "lower_bound": i as f64 * ln2}))
        .collect();
    let diverging = p
        .checkpoints
        .iter()
        .zip(&sums)
        .all(|(&i, &s)| s >= i as f64 * ln2);
    run.write_json(
        "entropy.json",
        &json!({
            "kind": "mu1",
            "entropy_rate": h,
            "closed_form": "ln 3 - (2/3) ln 2",
            "bound_ln_2": bound,
            "within_bound": h <= bound,
            "markov_cross_check": cross,
            "cross_check_horizon": cross_horizon,
            "symbol_log_partial_sums": series,
            "symbol_logs_diverge": diverging,
        }),
    )?;
    Ok(format!(
        "h = ln 3 - (2/3) ln 2 = {h:.15}; bound ln 2 = {bound:.15} -> {}; \
         E[ln N] partial sums exceed I ln 2 at every checkpoint: {}",
        if h <= bound { "PASS" } else { "FAIL" },
        if diverging { "PASS" } else { "FAIL" }
    ))
}

fn mu1_sample(
    p: &ChainParams,
    run: &mut RunDir,
    _ladder: &Ladder,
    walk: &LadderWalk,
    _top_state: u64,
) -> CliResult<String> {
    let path = walk.sample_path(p.len, p.seed);
    let summary = frequency_table(p, run, &path, |i| walk.stationary(i))?;
    if p.emit_path {
        emit_path(p, run, &path)?;
    }
    run.write_json(
        "sample.json",
        &json!({
            "kind": "mu1",
            "len": p.len,
            "seed": p.seed,
            "distinct_states": summary.distinct,
            "max_state": summary.max_state,
            "max_naive_z": summary.max_z,
        }),
    )?;
    Ok(format!(
        "mu1: path of {} steps visits {} states (max {}); max naive |z| over well-populated states = {:.2}",
        p.len, summary.distinct, summary.max_state, summary.max_z
    ))
}

fn mu1_check(
    p: &ChainParams,
    run: &mut RunDir,
    ladder: &Ladder,
    walk: &LadderWalk,
    top_state: u64,
) -> CliResult<String> {
    let cap = p.state_cap.min(1 << 16);
    // Row normalization.
    let mut row_dev = 0.0f64;
    for i in 1..=cap {
        let sum: f64 = walk.row(i).iter().map(|&(_, q)| q).sum();
        row_dev = row_dev.max((sum - 1.0).abs());
    }
    // Stationary balance: inflow through the exact rows against the
    // geometric law, relative per state.
    let mut inflow: HashMap<u64, f64> = HashMap::new();
    for i in 1..=cap + 1 {
        for (j, q) in walk.row(i) {
            if j <= cap {
                *inflow.entry(j).or_insert(0.0) += walk.stationary(i) * q;
            }
        }
    }
    let mut balance_dev = 0.0f64;
    for j in 1..=cap {
        let pi = walk.stationary(j);
        balance_dev = balance_dev.max((inflow.get(&j).copied().unwrap_or(0.0) - pi).abs() / pi);
    }
    // Entropy identities.
    let h = walk.entropy_rate();
    let cross = markov_entropy(|i| walk.stationary(i), |i| walk.row(i).to_vec(), 60);
    let entropy_dev = (cross - h).abs();
    // Divergent symbol logs at every depth the ladder supports.
    let all_states: Vec<u64> = (1..=top_state).collect();
    let sums = divergence_series(
        |i| walk.stationary(i) * ladder.ln(i as usize).expect("state within depth"),
        &all_states,
    );
    let ln2 = 2f64.ln();
    let min_margin = sums
        .iter()
        .zip(&all_states)
        .map(|(&s, &i)| s - i as f64 * ln2)
        .fold(f64::INFINITY, f64::min);
    // Ladder words drawn from the walk stay admissible.
    let word_len = 200.min(p.len.max(2));
    let path = walk.sample_path(word_len, p.seed);
    let mut word = Vec::new();
    for &state in &path {
        match ladder.symbol_for_state(state) {
            Some(sym) => word.push(sym),
            None => break,
        }
    }
    let n_min = (2.0 * p.ladder_c.powi(4)).ceil() as u64;
    let word_check = validate_word(&word, p.ladder_c, n_min)?;

    let checks = [
        ("rows_normalized", row_dev < 1e-12),
        ("stationary_balance", balance_dev < 1e-12),
        ("entropy_below_ln2", h <= ln2),
        ("entropy_cross_check", entropy_dev < 1e-12),
        ("symbol_logs_diverge", min_margin >= 0.0),
        ("sampled_word_admissible", word_check.valid),
    ];
    let all_pass = checks.iter().all(|&(_, ok)| ok);
    run.write_json(
        "check.json",
        &json!({
            "kind": "mu1",
            "ladder_c": p.ladder_c,
            "n0": p.n0,
            "depth": p.depth,
            "states_tested": cap,
            "row_sum_max_dev": row_dev,
            "balance_max_rel_dev": balance_dev,
            "entropy_rate": h,
            "entropy_cross_check_dev": entropy_dev,
            "symbol_log_min_margin": min_margin,
            "word_length_validated": word.len(),
            "word_valid": word_check.valid,
            "results": checks.iter().map(|&(k, ok)| json!({"check": k, "pass": ok})).collect::<Vec<_>>(),
        }),
    )?;
    let lines: Vec<String> = checks
        .iter()
        .map(|&(k, ok)| format!("{k}: {}", if ok { "PASS" } else { "FAIL" }))
        .collect();
    if all_pass {
        Ok(format!("mu1 checks all pass ({})", lines.join(", ")))
    } else {
        Err(CliError::Core(lorentz_core::error::Error::Construction {
            condition: "mu1 validation".into(),
            detail: lines.join(", "),
        }))
    }
}

// ---------------------------------------------------------------- mu2 ----

fn run_mu2(p: &ChainParams, run: &mut RunDir) -> CliResult<String> {
    let family = StationaryFamily::slow_log_squared(p.a)?;
    let mut chain = mu2_build(family.clone(), p.c_bar, p.window_c, p.n_start)?;
    match p.action {
        ActionKind::Build => mu2_build_action(p, run, &family, &mut chain),
        ActionKind::Entropy => mu2_entropy(p, run, &mut chain),
        ActionKind::Sample => mu2_sample(p, run, &family, &mut chain),
        ActionKind::Check => mu2_check(p, run, &family, &mut chain),
    }
}

fn mu2_build_action(
    p: &ChainParams,
    run: &mut RunDir,
    family: &StationaryFamily,
    chain: &mut ProductChain,
) -> CliResult<String> {
    let cap = p.state_cap;
    let states: Vec<_> = (1..=cap)
        .map(|i| {
            let n = chain.value(i);
            json!({
                "index": i,
                "n": n,
                "ln_n": (n as f64).ln(),
                "p": family.p(i),
            })
        })
        .collect();
    let mut rows = Vec::new();
    for i in 1..=cap {
        for (j, q) in chain.row(i)? {
            rows.push(json!({"from": i, "to": j, "prob": q}));
        }
    }
    let tail = family.tail_mass(cap);
    run.write_json(
        "chain.json",
        &json!({
            "kind": "mu2",
            "a": p.a,
            "c_bar": p.c_bar,
            "window_c": p.window_c,
            "n_start": p.n_start,
            "state_cap": cap,
            "states": states,
            "rows": rows,
            "truncation_note": format!(
                "rows are exact and listed for states 1..={cap}; the chain is countable with \
                 stationary tail mass {tail:.6e} beyond the cap"
            ),
        }),
    )?;
    Ok(format!(
        "mu2 product chain (a = {}, c_bar = {}, window c = {}, base symbol {}): {} states, {} transitions serialized",
        p.a, p.c_bar, p.window_c, p.n_start, cap,
        rows.len()
    ))
}

fn mu2_entropy(p: &ChainParams, run: &mut RunDir, chain: &mut ProductChain) -> CliResult<String> {
    require_ascending(&p.checkpoints)?;
    let mut row_entropies = Vec::new();
    let mut partial_sums = Vec::new();
    for &i in &p.checkpoints {
        row_entropies.push(json!({"state": i, "h": chain.row_entropy(i)?}));
        partial_sums.push(json!({"upto": i, "value": chain.entropy_partial_sum(i)?}));
    }
    let hs: Vec<f64> = row_entropies
        .iter()
        .map(|v| v["h"].as_f64().unwrap())
        .collect();
    let sums: Vec<f64> = partial_sums
        .iter()
        .map(|v| v["value"].as_f64().unwrap())
        .collect();
    let increasing =
        hs.windows(2).all(|w| w[0] < w[1]) && sums.windows(2).all(|w| w[0] < w[1]);
    run.write_json(
        "entropy.json",
        &json!({
            "kind": "mu2",
            "checkpoints": p.checkpoints,
            "row_entropies": row_entropies,
            "entropy_partial_sums": partial_sums,
            "strictly_increasing": increasing,
        }),
    )?;
    Ok(format!(
        "mu2 entropy partial sums at {:?}: [{}] ({})",
        p.checkpoints,
        sums.iter()
            .map(|s| format!("{s:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        if increasing {
            "strictly increasing -> no finite entropy rate in sight"
        } else {
            "NOT increasing"
        }
    ))
}

fn mu2_sample(
    p: &ChainParams,
    run: &mut RunDir,
    family: &StationaryFamily,
    chain: &mut ProductChain,
) -> CliResult<String> {
    let sample = chain.sample_path(p.len, p.seed, p.start_cap)?;
    let summary = frequency_table(p, run, &sample.states, |i| family.p(i))?;
    if p.emit_path {
        emit_path(p, run, &sample.states)?;
    }
    run.write_json(
        "sample.json",
        &json!({
            "kind": "mu2",
            "len": p.len,
            "seed": p.seed,
            "start_cap": sample.start_cap,
            "start_truncation": sample.start_truncation,
            "distinct_states": summary.distinct,
            "max_state": summary.max_state,
            "max_naive_z": summary.max_z,
        }),
    )?;
    Ok(format!(
        "mu2: path of {} steps visits {} states (max {}); start draw truncated at {} (mass {:.3e} dropped); max naive |z| = {:.2}",
        p.len, summary.distinct, summary.max_state, sample.start_cap, sample.start_truncation, summary.max_z
    ))
}

fn mu2_check(
    p: &ChainParams,
    run: &mut RunDir,
    family: &StationaryFamily,
    chain: &mut ProductChain,
) -> CliResult<String> {
    require_ascending(&p.checkpoints)?;
    let cap = p.state_cap;
    let fam = validate_family(family, 1000)?;

    let mut row_dev = 0.0f64;
    for i in 1..=cap {
        let sum: f64 = chain.row(i)?.iter().map(|&(_, q)| q).sum();
        row_dev = row_dev.max((sum - 1.0).abs());
    }

    // Stationary balance: rows reach at most a linear factor up or down, so
    // every inflow into the tested range comes from a bounded source range.
    let target = cap.min(30);
    let source_horizon = 2 * target + 128;
    let mut inflow = vec![0.0f64; target as usize + 1];
    for i in 1..=source_horizon {
        for (j, q) in chain.row(i)? {
            if j <= target {
                inflow[j as usize] += family.p(i) * q;
            }
        }
    }
    let mut balance_dev = 0.0f64;
    for j in 1..=target {
        let pj = family.p(j);
        balance_dev = balance_dev.max((inflow[j as usize] - pj).abs() / pj);
    }

    let support = verify_omega2_support(chain, p.window_c, cap)?;

    let mut row_entropies = Vec::new();
    let mut partial_sums = Vec::new();
    for &i in &p.checkpoints {
        row_entropies.push(chain.row_entropy(i)?);
        partial_sums.push(chain.entropy_partial_sum(i)?);
    }
    let increasing = row_entropies.windows(2).all(|w| w[0] < w[1])
        && partial_sums.windows(2).all(|w| w[0] < w[1]);

    let symbol_sums = divergence_series(
        |i| family.p(i) * ((p.n_start + i - 1) as f64).ln(),
        &p.checkpoints,
    );

    let checks = [
        ("family_admissible", true),
        ("rows_normalized", row_dev < 1e-11),
        ("stationary_balance", balance_dev < 1e-9),
        ("window_support", support.worst_margin >= 0.0),
        ("entropy_increasing", increasing),
        (
            "symbol_logs_increasing",
            symbol_sums.windows(2).all(|w| w[0] < w[1]),
        ),
    ];
    let all_pass = checks.iter().all(|&(_, ok)| ok);
    run.write_json(
        "check.json",
        &json!({
            "kind": "mu2",
            "a": p.a,
            "c_bar": p.c_bar,
            "window_c": p.window_c,
            "n_start": p.n_start,
            "family": fam,
            "row_sum_max_dev": row_dev,
            "stationarity": {
                "states_tested": target,
                "source_horizon": source_horizon,
                "max_rel_residual": balance_dev,
            },
            "support": support,
            "row_entropies": p.checkpoints.iter().zip(&row_entropies)
                .map(|(&i, &h)| json!({"state": i, "h": h})).collect::<Vec<_>>(),
            "entropy_partial_sums": p.checkpoints.iter().zip(&partial_sums)
                .map(|(&i, &s)| json!({"upto": i, "value": s})).collect::<Vec<_>>(),
            "symbol_log_partial_sums": p.checkpoints.iter().zip(&symbol_sums)
                .map(|(&i, &s)| json!({"upto": i, "value": s})).collect::<Vec<_>>(),
            "results": checks.iter().map(|&(k, ok)| json!({"check": k, "pass": ok})).collect::<Vec<_>>(),
        }),
    )?;
    let lines: Vec<String> = checks
        .iter()
        .map(|&(k, ok)| format!("{k}: {}", if ok { "PASS" } else { "FAIL" }))
        .collect();
    if all_pass {
        Ok(format!("mu2 checks all pass ({})", lines.join(", ")))
    } else {
        Err(CliError::Core(lorentz_core::error::Error::Construction {
            condition: "mu2 validation".into(),
            detail: lines.join(", "),
        }))
    }
}

// ------------------------------------------------------------- shared ----

struct FreqSummary {
    distinct: usize,
    max_state: u64,
    max_z: f64,
}

/// Empirical state frequencies against the stationary law; the z column is
/// the naive binomial score (path correlations ignored), reported only for
/// states with enough expected mass.
fn frequency_table(
    p: &ChainParams,
    run: &mut RunDir,
    path: &[u64],
    stationary: impl Fn(u64) -> f64,
) -> CliResult<FreqSummary> {
    let freqs = empirical_frequencies(path);
    let mut states: Vec<u64> = freqs.keys().copied().collect();
    states.sort_unstable();
    let len = path.len() as f64;
    let mut max_z = 0.0f64;
    let header = ["state", "empirical", "stationary", "abs_diff", "naive_z"];
    let mut rows = Vec::with_capacity(states.len());
    for &s in &states {
        let emp = freqs[&s];
        let pi = stationary(s);
        let se = (pi * (1.0 - pi) / len).sqrt();
        let z = (emp - pi) / se;
        if pi * len >= 100.0 {
            max_z = max_z.max(z.abs());
        }
        rows.push(vec![
            s.to_string(),
            f17(emp),
            f17(pi),
            f17((emp - pi).abs()),
            f17(z),
        ]);
    }
    run.write_rows("states", p.format, &header, &rows)?;
    Ok(FreqSummary {
        distinct: states.len(),
        max_state: states.last().copied().unwrap_or(0),
        max_z,
    })
}

fn emit_path(p: &ChainParams, run: &mut RunDir, path: &[u64]) -> CliResult<()> {
    let header = ["step", "state"];
    let rows: Vec<Vec<String>> = path
        .iter()
        .enumerate()
        .map(|(k, &s)| vec![k.to_string(), s.to_string()])
        .collect();
    run.write_rows("path", p.format, &header, &rows)?;
    Ok(())
}
