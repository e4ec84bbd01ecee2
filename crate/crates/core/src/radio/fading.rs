//! Small-scale fading taps, independent per link and tick.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{self, SimRng};
use crate::scenario::{BeamId, SiteId};

/// Identifies one downlink between a beam and a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkKey {
    pub site: SiteId,
    pub beam: BeamId,
    pub user: u64,
}

fn link_rng(seed: u64, link: LinkKey, tick: u64) -> SimRng {
    SimRng::seed_from_u64(rng::derive(
        seed,
        &[rng::label("fading"), link.site as u64, link.beam as u64, link.user, tick],
    ))
}

/// Circularly symmetric complex Gaussian with unit mean power.
fn cn01(g: &mut SimRng) -> Complex64 {
    let a: f64 = StandardNormal.sample(g);
    let b: f64 = StandardNormal.sample(g);
    Complex64::new(a, b) / std::f64::consts::SQRT_2
}

/// Fading tap with `E|h|^2 = 1`. LOS links are Rician with factor `k_db`
/// (infinite K gives the deterministic tap `1 + 0i`); NLOS links are Rayleigh.
pub fn small_scale(seed: u64, link: LinkKey, tick: u64, los: bool, k_db: f64) -> Complex64 {
    if los && k_db == f64::INFINITY {
        return Complex64::new(1.0, 0.0);
    }
    let mut g = link_rng(seed, link, tick);
    let scatter = cn01(&mut g);
    if !los {
        return scatter;
    }
    let k = 10f64.powf(k_db / 10.0);
    let spec = (k / (k + 1.0)).sqrt();
    let diffuse = (1.0 / (k + 1.0)).sqrt();
    Complex64::new(spec, 0.0) + scatter * diffuse
}
