//! User-to-antenna angles and the synthesized sector pattern.

use crate::scenario::{BeamConfig, Point, Site};

/// Pattern floor / side-lobe attenuation, dB.
pub const PATTERN_FLOOR_DB: f64 = 30.0;
/// Gain reported for an inactive beam.
pub const INACTIVE_GAIN_DBI: f64 = -250.0;

/// Angles of a user relative to a beam boresight, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// In (-180, 180], positive clockwise (towards east from north).
    pub azimuth_deg: f64,
    /// Positive above the boresight.
    pub elevation_deg: f64,
}

/// Wraps an angle into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Compass bearing from `from` to `to`: 0 = north (+y), 90 = east (+x).
pub fn bearing_deg(from: Point, to: Point) -> f64 {
    (to.x - from.x).atan2(to.y - from.y).to_degrees()
}

/// Relative azimuth and elevation of a user seen from a beam.
///
/// `antenna_alt_m` and `user_alt_m` are absolute heights. Horizontal
/// distances below 1 m are treated as 1 m.
pub fn relative_angles(site: &Site, beam: &BeamConfig, user: Point, user_alt_m: f64, antenna_alt_m: f64) -> AnglePair {
    let boresight = site.mechanical_azimuth_deg + beam.azimuth_offset_deg;
    let azimuth_deg = wrap_deg(bearing_deg(site.position, user) - boresight);
    let horiz = site.position.dist(user).max(1.0);
    let elev = (user_alt_m - antenna_alt_m).atan2(horiz).to_degrees();
    let elevation_deg = elev + site.mechanical_downtilt_deg + beam.tilt_deg;
    AnglePair { azimuth_deg, elevation_deg }
}

/// Horizontal pattern attenuation (non-positive).
pub fn horizontal_attenuation(az_deg: f64, h_beamwidth_deg: f64) -> f64 {
    -(12.0 * (az_deg / h_beamwidth_deg).powi(2)).min(PATTERN_FLOOR_DB)
}

/// Vertical pattern attenuation (non-positive).
pub fn vertical_attenuation(el_deg: f64, v_beamwidth_deg: f64) -> f64 {
    -(12.0 * (el_deg / v_beamwidth_deg).powi(2)).min(PATTERN_FLOOR_DB)
}

/// Parabolic-in-dB sector pattern with a 30 dB floor.
pub fn antenna_gain(beam: &BeamConfig, angles: AnglePair) -> f64 {
    if !beam.active {
        return INACTIVE_GAIN_DBI;
    }
    let a_h = horizontal_attenuation(angles.azimuth_deg, beam.h_beamwidth_deg);
    let a_v = vertical_attenuation(angles.elevation_deg, beam.v_beamwidth_deg);
    beam.g_max_dbi - (-(a_h + a_v)).min(PATTERN_FLOOR_DB)
}
