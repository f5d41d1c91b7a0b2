//! Brute-force scan oracles for the data model, shared by the data tests
//! and the acceptance suite. Each one re-derives its answer from the raw
//! event list with plain loops, never through the library's matrices.

#![allow(dead_code)]

use gapcast::data::{make_windows, Event, SporadicSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorted events over at most `max_steps` distinct times and `max_vars`
/// variables; sometimes repeats a (time, variable) pair.
pub fn random_stream(seed: u64, max_steps: usize, max_vars: usize) -> (Vec<Event<f64>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=max_vars);
    let n = rng.gen_range(1..=max_steps);
    let mut time = rng.gen_range(-50.0..50.0f64).round();
    let mut events = Vec::new();
    for step in 0..n {
        if step > 0 {
            time += rng.gen_range(1..=90) as f64;
        }
        let mut any = false;
        for var in 0..d {
            if rng.gen_bool(0.5) {
                events.push(Event::new(time, var, rng.gen_range(-40.0..60.0)));
                any = true;
                if rng.gen_bool(0.05) {
                    events.push(Event::new(time, var, rng.gen_range(-40.0..60.0)));
                }
            }
        }
        if !any {
            events.push(Event::new(time, rng.gen_range(0..d), rng.gen_range(-40.0..60.0)));
        }
    }
    (events, d)
}

pub struct OracleSeries {
    pub times: Vec<f64>,
    /// `[t][d]`, `None` where unobserved.
    pub values: Vec<Vec<Option<f64>>>,
    pub gaps: Vec<Vec<f64>>,
}

pub fn oracle_series(events: &[Event<f64>], d: usize) -> OracleSeries {
    let mut times: Vec<f64> = Vec::new();
    for e in events {
        if !times.contains(&e.time) {
            times.push(e.time);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let origin = times[0];
    let mut values = vec![vec![None; d]; times.len()];
    for (t, &s) in times.iter().enumerate() {
        for e in events {
            if e.time == s {
                values[t][e.var] = Some(e.value);
            }
        }
    }
    // time since the latest earlier observation, or since the first step
    let gaps = (0..times.len())
        .map(|t| {
            (0..d)
                .map(|k| {
                    if t == 0 {
                        return 0.0;
                    }
                    let prev = (0..t).rev().find(|&u| values[u][k].is_some()).unwrap_or(0);
                    times[t] - times[prev]
                })
                .collect()
        })
        .collect();
    OracleSeries {
        times: times.iter().map(|s| s - origin).collect(),
        values,
        gaps,
    }
}

pub fn oracle_impute(o: &OracleSeries, fallback: &[f64]) -> Vec<Vec<f64>> {
    (0..o.times.len())
        .map(|t| {
            (0..fallback.len())
                .map(|k| {
                    (0..=t)
                        .rev()
                        .find_map(|u| o.values[u][k])
                        .unwrap_or(fallback[k])
                })
                .collect()
        })
        .collect()
}

/// Checks construction, imputation and windowing of one stream against the
/// oracles; `Err` names the first disagreement.
pub fn check_stream(events: &[Event<f64>], d: usize, ar: usize) -> Result<(), String> {
    let o = oracle_series(events, d);
    let s = SporadicSeries::from_events(events, d).map_err(|e| e.to_string())?;
    if s.timestamps != o.times {
        return Err("timestamps".into());
    }
    for t in 0..o.times.len() {
        for k in 0..d {
            let observed = o.values[t][k].is_some();
            if s.observed(t, k) != observed || s.mask[(t, k)] != if observed { 1.0 } else { 0.0 } {
                return Err(format!("mask at ({t}, {k})"));
            }
            if let Some(v) = o.values[t][k] {
                if s.values[(t, k)] != v {
                    return Err(format!("value at ({t}, {k})"));
                }
            }
            if (s.gaps[(t, k)] - o.gaps[t][k]).abs() > 1e-9 {
                return Err(format!("gap at ({t}, {k}): {} vs {}", s.gaps[(t, k)], o.gaps[t][k]));
            }
        }
    }
    let fallback: Vec<f64> = (0..d).map(|k| 100.0 + k as f64).collect();
    let imputed = s.forward_impute(&fallback).map_err(|e| e.to_string())?;
    let want = oracle_impute(&o, &fallback);
    for t in 0..o.times.len() {
        for k in 0..d {
            if imputed.values[(t, k)] != want[t][k] {
                return Err(format!("imputed value at ({t}, {k})"));
            }
        }
    }
    let n = o.times.len();
    match make_windows(&imputed, ar) {
        Err(_) if n <= ar => Ok(()),
        Err(e) => Err(format!("windowing failed: {e}")),
        Ok(_) if n <= ar => Err("windowing should fail when N <= AR".into()),
        Ok(w) => {
            if w.len() != n - ar {
                return Err("window count".into());
            }
            for k in 0..w.len() {
                for r in 0..ar {
                    let t = k + r;
                    for j in 0..d {
                        let mask = if o.values[t][j].is_some() { 1.0 } else { 0.0 };
                        let row = w.inputs[k].row(r);
                        if row[j] != want[t][j] || row[d + j] != mask || (row[2 * d + j] - o.gaps[t][j]).abs() > 1e-9 {
                            return Err(format!("window {k} row {r}"));
                        }
                    }
                }
                let t = k + ar;
                for j in 0..d {
                    let mask = if o.values[t][j].is_some() { 1.0 } else { 0.0 };
                    if w.target_values[(k, j)] != want[t][j]
                        || w.target_masks[(k, j)] != mask
                        || (w.target_gaps[(k, j)] - o.gaps[t][j]).abs() > 1e-9
                    {
                        return Err(format!("window {k} target"));
                    }
                }
            }
            Ok(())
        }
    }
}
