//! Synthetic corpora: a two-mode commute population (weekday office days,
//! weekend leisure days) and Gaussian-blob traffic packets.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::preprocess::split_days;
use super::{Direction, PacketRecord, TrajectorySequence, TrajectoryStep, SECONDS_PER_DAY};
use crate::rng;
use crate::scenario::{CellToken, GeoGrid, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct CommuteConfig {
    pub n_users: usize,
    pub n_days: usize,
    /// Days `0..train_days` are for training, the rest are held out.
    pub train_days: usize,
    pub seed: u64,
}

impl Default for CommuteConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_days: 30,
            train_days: 24,
            seed: 7,
        }
    }
}

/// 1 km square at 100 m resolution, geo-referenced so it can round-trip
/// through the mobility CSV.
pub fn commute_grid() -> GeoGrid {
    GeoGrid {
        ref_lat: Some(28.68),
        ref_lon: Some(115.86),
        ..GeoGrid::flat(Point::new(0.0, 0.0), 1000.0, 1000.0, 100.0)
    }
}

fn zone(grid: &GeoGrid, cols: std::ops::Range<usize>, rows: std::ops::Range<usize>) -> Vec<CellToken> {
    rows.flat_map(|r| cols.clone().map(move |c| CellToken(r * grid.cols() + c))).collect()
}

/// Whole-horizon sequences, one per user, with absolute times from day 0.
pub fn commute_corpus(cfg: &CommuteConfig) -> Vec<TrajectorySequence> {
    let g = commute_grid();
    let homes = zone(&g, 0..5, 0..5);
    let offices = zone(&g, 6..9, 6..9);
    let leisure = zone(&g, 7..9, 1..3);
    let jitter = Normal::new(0.0, 1200.0).expect("valid normal");
    (0..cfg.n_users)
        .map(|u| {
            let mut r = rng::stream(cfg.seed, "commute", &[u as u64]);
            let home = *homes.choose(&mut r).expect("non-empty zone");
            let office = *offices.choose(&mut r).expect("non-empty zone");
            let lunch = *offices.choose(&mut r).expect("non-empty zone");
            let fun = *leisure.choose(&mut r).expect("non-empty zone");
            // (cell, time of day it is entered)
            let mut visits: Vec<(CellToken, f64)> = Vec::new();
            for day in 0..cfg.n_days {
                let d0 = day as f64 * SECONDS_PER_DAY;
                let mut push = |c: CellToken, t: f64| match visits.last() {
                    Some((last, _)) if *last == c => {}
                    _ => visits.push((c, t)),
                };
                if day == 0 {
                    push(home, 0.0);
                }
                if day % 7 < 5 {
                    let leave = 8.0 * 3600.0 + jitter.sample(&mut r);
                    let back = 17.5 * 3600.0 + jitter.sample(&mut r);
                    push(office, d0 + leave);
                    if r.random_bool(0.4) {
                        let t = 12.0 * 3600.0 + 0.25 * jitter.sample(&mut r);
                        push(lunch, d0 + t);
                        push(office, d0 + t + 2700.0);
                    }
                    push(home, d0 + back);
                } else {
                    let out = 11.0 * 3600.0 + 1.5 * jitter.sample(&mut r);
                    let dur = r.random_range(2.0 * 3600.0..4.0 * 3600.0);
                    push(fun, d0 + out);
                    push(home, d0 + out + dur);
                }
            }
            let end = cfg.n_days as f64 * SECONDS_PER_DAY;
            let steps = visits
                .iter()
                .enumerate()
                .map(|(i, &(c, t))| {
                    let next = visits.get(i + 1).map_or(end, |v| v.1);
                    TrajectoryStep::new(c, t, next - t)
                })
                .collect();
            TrajectorySequence { user_id: u as u64, steps }
        })
        .collect()
}

/// Day-level sequences split into (train, held-out) by day index.
pub fn split_by_day(seqs: &[TrajectorySequence], train_days: usize) -> (Vec<TrajectorySequence>, Vec<TrajectorySequence>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for s in seqs {
        for d in split_days(s) {
            let day = (d.steps[0].arrival_s / SECONDS_PER_DAY).floor() as usize;
            if day < train_days {
                train.push(d);
            } else {
                held.push(d);
            }
        }
    }
    (train, held)
}

/// A traffic blob: sessions with the given mean packet length (bytes) and
/// mean inter-arrival (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub packet_len: f64,
    pub inter_arrival_s: f64,
    pub dl_share: f64,
}

pub const DEFAULT_BLOBS: [Blob; 3] = [
    Blob {
        packet_len: 120.0,
        inter_arrival_s: 2.0,
        dl_share: 0.5,
    },
    Blob {
        packet_len: 1400.0,
        inter_arrival_s: 0.01,
        dl_share: 0.95,
    },
    Blob {
        packet_len: 600.0,
        inter_arrival_s: 0.2,
        dl_share: 0.7,
    },
];

/// `sessions_per_user` sessions per (user, app); each app uses `blobs`
/// with per-session noise. Sessions are separated by idle gaps longer than
/// the session gap.
pub fn blob_packets(apps: &[&str], n_users: usize, sessions_per_user: usize, blobs: &[Blob], seed: u64) -> Vec<PacketRecord> {
    let mut out = Vec::new();
    for u in 0..n_users {
        for (a, app) in apps.iter().enumerate() {
            let mut r = rng::stream(seed, "blob-packets", &[u as u64, a as u64]);
            let mut t = 0.0;
            for _ in 0..sessions_per_user {
                let b = blobs[r.random_range(0..blobs.len())];
                let len_sd = 0.05 * b.packet_len;
                let n = r.random_range(10..30);
                for _ in 0..n {
                    let len = (b.packet_len + len_sd * Normal::new(0.0, 1.0).expect("unit normal").sample(&mut r)).round();
                    out.push(PacketRecord {
                        user_id: u as u64,
                        timestamp_s: t,
                        app_label: Some(app.to_string()),
                        packet_len_bytes: len.clamp(1.0, 65535.0) as u32,
                        direction: if r.random_bool(b.dl_share) { Direction::Dl } else { Direction::Ul },
                    });
                    t += b.inter_arrival_s * r.random_range(0.8..1.25);
                }
                t += 600.0;
            }
        }
    }
    out
}
