//! CSV ingest and export for mobility fixes, packets, cell load and waypoints.
//!
//! Headers must match exactly; extra or missing columns are rejected.

use std::io::{Read, Write};
use std::path::Path;

use super::{BehaviorError, CellLoadRecord, Direction, MobilityFix, PacketRecord, ServiceSession};
use crate::scenario::{GeoGrid, Point, ScenarioError};

pub const MOBILITY_HEADER: [&str; 5] = ["user_id", "timestamp_s", "lat", "lon", "alt_m"];
pub const PACKET_HEADER: [&str; 5] = ["user_id", "timestamp_s", "app_label", "packet_len_bytes", "direction"];
pub const CELL_LOAD_HEADER: [&str; 4] = ["cell_id", "interval_start_s", "traffic_mb", "user_count"];
pub const WAYPOINT_HEADER: [&str; 4] = ["user_id", "t_s", "x_m", "y_m"];
pub const SESSION_HEADER: [&str; 7] = ["user_id", "app_index", "action_cluster", "start_s", "duration_s", "dl_bps", "ul_bps"];

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Equirectangular projection about a reference point that maps to `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub ref_lat: f64,
    pub ref_lon: f64,
    pub center: Point,
}

impl Projection {
    /// Uses the grid's geographic reference, which must be set.
    pub fn for_grid(grid: &GeoGrid) -> Result<Self, BehaviorError> {
        match (grid.ref_lat, grid.ref_lon) {
            (Some(ref_lat), Some(ref_lon)) => Ok(Self {
                ref_lat,
                ref_lon,
                center: grid.center(),
            }),
            _ => Err(ScenarioError::MissingField("grid.ref_lat / grid.ref_lon".into()).into()),
        }
    }

    pub fn project(&self, lat: f64, lon: f64) -> Point {
        let k = self.ref_lat.to_radians().cos();
        Point::new(
            self.center.x + EARTH_RADIUS_M * (lon - self.ref_lon).to_radians() * k,
            self.center.y + EARTH_RADIUS_M * (lat - self.ref_lat).to_radians(),
        )
    }

    /// Inverse of [`Projection::project`]: `(lat, lon)`.
    pub fn unproject(&self, p: Point) -> (f64, f64) {
        let k = self.ref_lat.to_radians().cos();
        let lat = self.ref_lat + ((p.y - self.center.y) / EARTH_RADIUS_M).to_degrees();
        let lon = self.ref_lon + ((p.x - self.center.x) / EARTH_RADIUS_M / k).to_degrees();
        (lat, lon)
    }
}

fn reader<R: Read>(r: R, expected: &[&str]) -> Result<csv::Reader<R>, BehaviorError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        let first_bad = expected
            .iter()
            .zip(&got)
            .find(|(e, g)| e != g)
            .map(|(e, g)| format!("expected column `{e}`, found `{g}`"))
            .unwrap_or_else(|| format!("expected {} columns, found {}", expected.len(), got.len()));
        return Err(BehaviorError::SchemaMismatch(first_bad));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T, BehaviorError> {
    rec.get(i).unwrap_or("").parse().map_err(|_| BehaviorError::BadRow {
        line,
        reason: format!("cannot parse {name} from `{}`", rec.get(i).unwrap_or("")),
    })
}

fn finite(v: f64, name: &str, line: usize) -> Result<f64, BehaviorError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BehaviorError::BadRow {
            line,
            reason: format!("{name} is not finite"),
        })
    }
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

pub fn read_mobility<R: Read>(r: R, proj: &Projection) -> Result<Vec<MobilityFix>, BehaviorError> {
    let mut rdr = reader(r, &MOBILITY_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let user_id = field(&rec, 0, "user_id", line)?;
        let timestamp_s = finite(field(&rec, 1, "timestamp_s", line)?, "timestamp_s", line)?;
        let lat: f64 = field(&rec, 2, "lat", line)?;
        let lon: f64 = field(&rec, 3, "lon", line)?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(BehaviorError::BadRow {
                line,
                reason: format!("latitude {lat} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(BehaviorError::BadRow {
                line,
                reason: format!("longitude {lon} outside [-180, 180]"),
            });
        }
        let alt = rec.get(4).unwrap_or("");
        let altitude_m = if alt.is_empty() {
            None
        } else {
            Some(finite(field(&rec, 4, "alt_m", line)?, "alt_m", line)?)
        };
        out.push(MobilityFix {
            user_id,
            timestamp_s,
            position: proj.project(lat, lon),
            altitude_m,
        });
    }
    Ok(out)
}

pub fn ingest_mobility_csv(path: impl AsRef<Path>, proj: &Projection) -> Result<Vec<MobilityFix>, BehaviorError> {
    read_mobility(std::fs::File::open(path)?, proj)
}

pub fn write_mobility<W: Write>(w: W, fixes: &[MobilityFix], proj: &Projection) -> Result<(), BehaviorError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(MOBILITY_HEADER)?;
    for f in fixes {
        let (lat, lon) = proj.unproject(f.position);
        let alt = f.altitude_m.map(|a| a.to_string()).unwrap_or_default();
        wr.write_record([f.user_id.to_string(), f.timestamp_s.to_string(), lat.to_string(), lon.to_string(), alt])?;
    }
    wr.flush()?;
    Ok(())
}

fn parse_direction(s: &str, line: usize) -> Result<Direction, BehaviorError> {
    match s {
        "UL" | "ul" => Ok(Direction::Ul),
        "DL" | "dl" => Ok(Direction::Dl),
        other => Err(BehaviorError::BadRow {
            line,
            reason: format!("direction `{other}` is not UL or DL"),
        }),
    }
}

pub fn read_packets<R: Read>(r: R) -> Result<Vec<PacketRecord>, BehaviorError> {
    let mut rdr = reader(r, &PACKET_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let len: u64 = field(&rec, 3, "packet_len_bytes", line)?;
        if !(1..=65535).contains(&len) {
            return Err(BehaviorError::BadRow {
                line,
                reason: format!("packet_len_bytes {len} outside [1, 65535]"),
            });
        }
        let label = rec.get(2).unwrap_or("");
        out.push(PacketRecord {
            user_id: field(&rec, 0, "user_id", line)?,
            timestamp_s: finite(field(&rec, 1, "timestamp_s", line)?, "timestamp_s", line)?,
            app_label: (!label.is_empty()).then(|| label.to_string()),
            packet_len_bytes: len as u32,
            direction: parse_direction(rec.get(4).unwrap_or(""), line)?,
        });
    }
    Ok(out)
}

pub fn ingest_packet_csv(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>, BehaviorError> {
    read_packets(std::fs::File::open(path)?)
}

pub fn write_packets<W: Write>(w: W, packets: &[PacketRecord]) -> Result<(), BehaviorError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(PACKET_HEADER)?;
    for p in packets {
        let dir = match p.direction {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
        };
        wr.write_record([
            p.user_id.to_string(),
            p.timestamp_s.to_string(),
            p.app_label.clone().unwrap_or_default(),
            p.packet_len_bytes.to_string(),
            dir.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_cell_load<R: Read>(r: R) -> Result<Vec<CellLoadRecord>, BehaviorError> {
    let mut rdr = reader(r, &CELL_LOAD_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let traffic_mb = finite(field(&rec, 2, "traffic_mb", line)?, "traffic_mb", line)?;
        if traffic_mb < 0.0 {
            return Err(BehaviorError::BadRow {
                line,
                reason: "traffic_mb is negative".into(),
            });
        }
        out.push(CellLoadRecord {
            cell_id: field(&rec, 0, "cell_id", line)?,
            interval_start_s: finite(field(&rec, 1, "interval_start_s", line)?, "interval_start_s", line)?,
            traffic_mb,
            user_count: field(&rec, 3, "user_count", line)?,
        });
    }
    Ok(out)
}

pub fn ingest_cell_load_csv(path: impl AsRef<Path>) -> Result<Vec<CellLoadRecord>, BehaviorError> {
    read_cell_load(std::fs::File::open(path)?)
}

/// One 1 Hz position sample of a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub user_id: u64,
    pub t_s: f64,
    pub position: Point,
}

pub fn write_waypoints<W: Write>(w: W, points: &[Waypoint]) -> Result<(), BehaviorError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(WAYPOINT_HEADER)?;
    for p in points {
        wr.write_record([
            p.user_id.to_string(),
            p.t_s.to_string(),
            p.position.x.to_string(),
            p.position.y.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_waypoints<R: Read>(r: R) -> Result<Vec<Waypoint>, BehaviorError> {
    let mut rdr = reader(r, &WAYPOINT_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.push(Waypoint {
            user_id: field(&rec, 0, "user_id", line)?,
            t_s: finite(field(&rec, 1, "t_s", line)?, "t_s", line)?,
            position: Point::new(
                finite(field(&rec, 2, "x_m", line)?, "x_m", line)?,
                finite(field(&rec, 3, "y_m", line)?, "y_m", line)?,
            ),
        });
    }
    Ok(out)
}

pub fn write_sessions<W: Write>(w: W, sessions: &[ServiceSession]) -> Result<(), BehaviorError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SESSION_HEADER)?;
    for s in sessions {
        wr.write_record([
            s.user_id.to_string(),
            s.app_index.to_string(),
            s.action_cluster.to_string(),
            s.start_s.to_string(),
            s.duration_s.to_string(),
            s.demand_bps.to_string(),
            s.demand_bps_ul.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads sessions; durations and demands may be `inf` (full buffer).
pub fn read_sessions<R: Read>(r: R) -> Result<Vec<ServiceSession>, BehaviorError> {
    let mut rdr = reader(r, &SESSION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let nonneg = |i: usize, name: &str| -> Result<f64, BehaviorError> {
            let v: f64 = field(&rec, i, name, line)?;
            if v.is_nan() || v < 0.0 {
                return Err(BehaviorError::BadRow {
                    line,
                    reason: format!("{name} must be a non-negative number"),
                });
            }
            Ok(v)
        };
        out.push(ServiceSession {
            user_id: field(&rec, 0, "user_id", line)?,
            app_index: field(&rec, 1, "app_index", line)?,
            action_cluster: field(&rec, 2, "action_cluster", line)?,
            start_s: finite(field(&rec, 3, "start_s", line)?, "start_s", line)?,
            duration_s: nonneg(4, "duration_s")?,
            demand_bps: nonneg(5, "dl_bps")?,
            demand_bps_ul: nonneg(6, "ul_bps")?,
        });
    }
    Ok(out)
}
