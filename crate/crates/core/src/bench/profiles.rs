use std::path::Path;

use crate::output::write_csv;
use crate::xform::{coefficient_profile, ProfileRow};
use crate::Result;

/// Annulus profiles for each eps, `points` radii per eps.
pub fn export_coefficient_profiles(eps_list: &[f64], points: usize) -> Result<Vec<(f64, Vec<ProfileRow>)>> {
    eps_list
        .iter()
        .map(|&e| Ok((e, coefficient_profile(e, points)?)))
        .collect()
}

/// Long format: one row per `(eps, r')`.
pub fn write_profiles_csv(path: &Path, profiles: &[(f64, Vec<ProfileRow>)]) -> Result<()> {
    write_csv(
        path,
        &["eps", "r_prime", "A11", "inv_A11", "rho2d", "B3d"],
        profiles.iter().flat_map(|(e, rows)| {
            rows.iter()
                .map(move |r| vec![*e, r.r_prime, r.a11, r.inv_a11, r.rho2d, r.b3d])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_block_per_eps() {
        let p = export_coefficient_profiles(&[0.1, 0.01], 11).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|(_, rows)| rows.len() == 11));
        assert!(export_coefficient_profiles(&[1.5], 11).is_err());
    }
}
