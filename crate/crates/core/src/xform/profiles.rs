use serde::Serialize;

use super::radial::{polar_radial_conductivity, spherical_density};
use super::CloakParams;
use crate::{Error, Result};

/// Radial cloak profiles at one `r'` in the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub r_prime: f64,
    pub a11: f64,
    pub inv_a11: f64,
    pub rho2d: f64,
    pub b3d: f64,
}

/// Profiles on `points` uniformly spaced radii covering `[1, 2]` inclusive.
pub fn coefficient_profile(epsilon: f64, points: usize) -> Result<Vec<ProfileRow>> {
    CloakParams::new(epsilon, 2)?.require_cloak_regime()?;
    if points < 2 {
        return Err(Error::invalid("profile needs at least 2 points"));
    }
    let e = epsilon;
    Ok((0..points)
        .map(|i| {
            let r = 1.0 + i as f64 / (points - 1) as f64;
            let a11 = polar_radial_conductivity(r, e);
            ProfileRow {
                r_prime: r,
                a11,
                inv_a11: 1.0 / a11,
                rho2d: (r - 1.0) / r * (2.0 - e) * (2.0 - e) + e / r * (2.0 - e),
                b3d: spherical_density(r, e),
            }
        })
        .collect())
}
