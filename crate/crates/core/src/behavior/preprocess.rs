//! Noise filtering, gap completion, grid correction and cell collapsing.

use std::collections::BTreeMap;

use super::{BehaviorError, MobilityFix, TrajectorySequence, TrajectoryStep, SECONDS_PER_DAY};
use crate::scenario::{cell_center, cell_index, GeoGrid};

/// Fixes implying a faster move are dropped.
pub const MAX_SPEED_MPS: f64 = 50.0;
/// Gaps shorter than this (and longer than one step) are filled.
pub const MAX_FILL_GAP_S: f64 = 600.0;
pub const FILL_STEP_S: f64 = 60.0;
/// Stay assigned to a trailing single-fix visit.
pub const MIN_STAY_S: f64 = 1.0;

fn filter_speed(fixes: &[MobilityFix]) -> Vec<MobilityFix> {
    let mut kept: Vec<MobilityFix> = Vec::with_capacity(fixes.len());
    for f in fixes {
        match kept.last() {
            None => kept.push(*f),
            Some(prev) => {
                let dt = f.timestamp_s - prev.timestamp_s;
                let d = prev.position.dist(f.position);
                // same-instant duplicates carry no information
                if dt <= 0.0 || d / dt > MAX_SPEED_MPS {
                    continue;
                }
                kept.push(*f);
            }
        }
    }
    kept
}

fn fill_gaps(fixes: &[MobilityFix]) -> Vec<MobilityFix> {
    let mut out = Vec::with_capacity(fixes.len());
    for (i, f) in fixes.iter().enumerate() {
        if i > 0 {
            let prev = &fixes[i - 1];
            let gap = f.timestamp_s - prev.timestamp_s;
            if gap > FILL_STEP_S && gap < MAX_FILL_GAP_S {
                let mut k = 1.0;
                while k * FILL_STEP_S < gap {
                    let frac = k * FILL_STEP_S / gap;
                    out.push(MobilityFix {
                        user_id: f.user_id,
                        timestamp_s: prev.timestamp_s + k * FILL_STEP_S,
                        position: prev.position.lerp(f.position, frac),
                        altitude_m: match (prev.altitude_m, f.altitude_m) {
                            (Some(a), Some(b)) => Some(a + (b - a) * frac),
                            _ => None,
                        },
                    });
                    k += 1.0;
                }
            }
        }
        out.push(*f);
    }
    out
}

fn collapse(user_id: u64, fixes: &[MobilityFix], grid: &GeoGrid) -> Result<TrajectorySequence, BehaviorError> {
    let mut runs: Vec<(crate::scenario::CellToken, f64, f64)> = Vec::new();
    for f in fixes {
        let t = cell_index(grid, grid.clamp(f.position))?;
        match runs.last_mut() {
            Some(r) if r.0 == t => r.2 = f.timestamp_s,
            _ => runs.push((t, f.timestamp_s, f.timestamp_s)),
        }
    }
    let steps = runs
        .iter()
        .enumerate()
        .map(|(i, &(tok, first, last))| {
            let stay = match runs.get(i + 1) {
                Some(next) => next.1 - first,
                None => (last - first).max(MIN_STAY_S),
            };
            TrajectoryStep::new(tok, first, stay)
        })
        .collect();
    Ok(TrajectorySequence { user_id, steps })
}

/// Per-user cleaning and collapsing into grid-cell visits. Users come out in
/// ascending id order.
pub fn preprocess(fixes: &[MobilityFix], grid: &GeoGrid) -> Result<Vec<TrajectorySequence>, BehaviorError> {
    if fixes.is_empty() {
        return Err(BehaviorError::EmptyInput);
    }
    let mut by_user: BTreeMap<u64, Vec<MobilityFix>> = BTreeMap::new();
    for f in fixes {
        by_user.entry(f.user_id).or_default().push(*f);
    }
    by_user
        .into_iter()
        .map(|(u, mut fs)| {
            fs.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
            let clean = fill_gaps(&filter_speed(&fs));
            collapse(u, &clean, grid)
        })
        .collect()
}

/// Fixes that reproduce `seqs` under [`preprocess`]: each visit gets a fix at
/// its cell center on arrival and another [`FILL_STEP_S`] before it ends, so
/// no hop between visits is gap-filled; the last visit closes with a fix at
/// its end.
pub fn expand_to_fixes(seqs: &[TrajectorySequence], grid: &GeoGrid) -> Result<Vec<MobilityFix>, BehaviorError> {
    let mut out = Vec::new();
    for s in seqs {
        for (i, st) in s.steps.iter().enumerate() {
            let c = cell_center(grid, st.token)?;
            let end = st.arrival_s + st.stay_s;
            let last = if i + 1 == s.steps.len() { end } else { end - FILL_STEP_S };
            let fix = |t| MobilityFix {
                user_id: s.user_id,
                timestamp_s: t,
                position: c,
                altitude_m: None,
            };
            out.push(fix(st.arrival_s));
            if last > st.arrival_s {
                out.push(fix(last));
            }
        }
    }
    Ok(out)
}

/// Cuts sequences at midnight. A visit spanning midnight continues as a new
/// visit at 00:00 of the next day. Each output sequence keeps the user id.
pub fn split_days(seq: &TrajectorySequence) -> Vec<TrajectorySequence> {
    let mut days: BTreeMap<i64, Vec<TrajectoryStep>> = BTreeMap::new();
    for st in &seq.steps {
        let mut start = st.arrival_s;
        let end = st.arrival_s + st.stay_s;
        loop {
            let day = (start / SECONDS_PER_DAY).floor() as i64;
            let midnight = (day + 1) as f64 * SECONDS_PER_DAY;
            let stop = end.min(midnight);
            if stop > start {
                days.entry(day).or_default().push(TrajectoryStep::new(st.token, start, stop - start));
            }
            if end <= midnight {
                break;
            }
            start = midnight;
        }
    }
    days.into_values()
        .map(|steps| TrajectorySequence { user_id: seq.user_id, steps })
        .collect()
}
