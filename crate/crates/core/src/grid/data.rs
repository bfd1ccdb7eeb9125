use std::sync::Arc;

use serde::Serialize;

use crate::xform::ScalarField;
use crate::{Error, Point, Result};

/// Quintic smoothstep: `0` for `r <= r0`, `1` for `r >= r0 + width`, `C^2` in between.
///
/// `width == 0` gives the sharp step `r > r0`.
pub fn smoothstep_cutoff(r: f64, r0: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if r > r0 { 1.0 } else { 0.0 };
    }
    let t = ((r - r0) / width).clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Compatibility diagnostics of `(f, g, u_in)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub integral_f: f64,
    pub integral_g: f64,
    /// `int f + int g`, zero for a solvable steady Neumann problem.
    pub residual: f64,
    pub integral_u_in: f64,
    pub norm_f: f64,
    pub norm_g: f64,
}

impl AdmissibilityReport {
    pub fn is_compatible(&self) -> bool {
        self.residual.abs() <= 1e-8 * (self.norm_f + self.norm_g).max(f64::MIN_POSITIVE)
    }
}

/// Bulk source `f`, Neumann datum `g` and initial datum `u_in`.
///
/// The admissibility report is computed on construction by composite Gauss
/// quadrature on a fixed fine partition of the box, independent of any grid.
#[derive(Clone)]
pub struct ProblemData<const D: usize> {
    f: ScalarField<D>,
    g: ScalarField<D>,
    u_in: ScalarField<D>,
    correction_profile: ScalarField<D>,
    half_width: f64,
    periodic: [bool; D],
    report: AdmissibilityReport,
    mean_shift: f64,
}

impl<const D: usize> std::fmt::Debug for ProblemData<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData")
            .field("report", &self.report)
            .field("mean_shift", &self.mean_shift)
            .finish_non_exhaustive()
    }
}

fn panels(d: usize) -> usize {
    match d {
        1 => 3000,
        2 => 150,
        _ => 30,
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.0, 0.888_888_888_888_888_9),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];

/// Composite 3-point Gauss over the axes listed in `free`, other coordinates fixed by `base`.
fn composite<const D: usize>(
    half_width: f64,
    free: &[usize],
    base: Point<D>,
    f: &dyn Fn(&Point<D>) -> f64,
) -> f64 {
    let m = panels(D.max(free.len()));
    let h = 2.0 * half_width / m as f64;
    let line: Vec<(f64, f64)> = (0..m)
        .flat_map(|p| {
            let c = -half_width + (p as f64 + 0.5) * h;
            GAUSS3.iter().map(move |&(x, w)| (c + 0.5 * h * x, 0.5 * h * w))
        })
        .collect();
    let per = line.len();
    let total = per.pow(free.len() as u32);
    let mut sum = 0.0;
    for mut q in 0..total {
        let mut x = base;
        let mut w = 1.0;
        for &a in free {
            let (xa, wa) = line[q % per];
            q /= per;
            x[a] = xa;
            w *= wa;
        }
        sum += w * f(&x);
    }
    sum
}

fn volume_integral<const D: usize>(half_width: f64, f: &dyn Fn(&Point<D>) -> f64) -> f64 {
    let free: Vec<usize> = (0..D).collect();
    composite(half_width, &free, Point::<D>::zeros(), f)
}

fn boundary_integral<const D: usize>(
    half_width: f64,
    periodic: [bool; D],
    g: &dyn Fn(&Point<D>) -> f64,
) -> f64 {
    let mut sum = 0.0;
    for a in 0..D {
        if periodic[a] {
            continue;
        }
        let free: Vec<usize> = (0..D).filter(|&b| b != a).collect();
        for side in [-1.0, 1.0] {
            let mut base = Point::<D>::zeros();
            base[a] = side * half_width;
            sum += composite(half_width, &free, base, g);
        }
    }
    sum
}

impl<const D: usize> ProblemData<D> {
    pub fn new(
        f: ScalarField<D>,
        g: ScalarField<D>,
        u_in: ScalarField<D>,
        half_width: f64,
        periodic: [bool; D],
    ) -> Self {
        let mut out = Self {
            f,
            g,
            u_in,
            correction_profile: Arc::new(|_| 1.0),
            half_width,
            periodic,
            report: AdmissibilityReport {
                integral_f: 0.0,
                integral_g: 0.0,
                residual: 0.0,
                integral_u_in: 0.0,
                norm_f: 0.0,
                norm_g: 0.0,
            },
            mean_shift: 0.0,
        };
        out.report = out.compute_report();
        out
    }

    /// All three fields identically zero.
    pub fn zero(half_width: f64, periodic: [bool; D]) -> Self {
        let z: ScalarField<D> = Arc::new(|_| 0.0);
        Self::new(z.clone(), z.clone(), z, half_width, periodic)
    }

    /// Shape along which a source mean correction is distributed (default: constant 1).
    pub fn with_correction_profile(mut self, profile: ScalarField<D>) -> Self {
        self.correction_profile = profile;
        self
    }

    /// Replaces the initial datum, keeping sources and correction state.
    pub fn with_initial(mut self, u_in: ScalarField<D>) -> Self {
        self.u_in = u_in;
        self.report = self.compute_report();
        self
    }

    fn compute_report(&self) -> AdmissibilityReport {
        let hw = self.half_width;
        let f = &self.f;
        let g = &self.g;
        let u = &self.u_in;
        let integral_f = volume_integral::<D>(hw, &|x| f(x));
        let integral_g = boundary_integral::<D>(hw, self.periodic, &|x| g(x));
        let integral_u_in = volume_integral::<D>(hw, &|x| u(x));
        let norm_f = volume_integral::<D>(hw, &|x| f(x).powi(2)).sqrt();
        let norm_g = boundary_integral::<D>(hw, self.periodic, &|x| g(x).powi(2)).sqrt();
        AdmissibilityReport {
            integral_f,
            integral_g,
            residual: integral_f + integral_g,
            integral_u_in,
            norm_f,
            norm_g,
        }
    }

    pub fn f(&self, x: &Point<D>) -> f64 {
        (self.f)(x)
    }

    pub fn g(&self, x: &Point<D>) -> f64 {
        (self.g)(x)
    }

    pub fn u_in(&self, x: &Point<D>) -> f64 {
        (self.u_in)(x)
    }

    /// Shape used by [`mean_corrected`](Self::mean_corrected).
    pub fn correction_profile(&self, x: &Point<D>) -> f64 {
        (self.correction_profile)(x)
    }

    pub fn report(&self) -> &AdmissibilityReport {
        &self.report
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn periodic(&self) -> [bool; D] {
        self.periodic
    }

    /// Constant `c` already subtracted as `f - c * profile` (0 if untouched).
    pub fn mean_shift(&self) -> f64 {
        self.mean_shift
    }

    /// Returns data whose sources satisfy `int f + int g = 0`.
    ///
    /// Incompatible data get `f <- f - c * profile` with `c` chosen to cancel the
    /// residual; the change is logged as a warning.
    pub fn mean_corrected(&self) -> Result<Self> {
        if self.report.is_compatible() {
            return Ok(self.clone());
        }
        let hw = self.half_width;
        let profile = self.correction_profile.clone();
        let mass = volume_integral::<D>(hw, &|x| profile(x));
        if mass.abs() < 1e-12 {
            return Err(Error::invalid(
                "cannot correct the source mean: correction profile integrates to zero",
            ));
        }
        let c = self.report.residual / mass;
        log::warn!(
            "ADMISSIBILITY: int f + int g = {:.6e} != 0; subtracting {:.6e} x correction profile from f",
            self.report.residual,
            c
        );
        let f = self.f.clone();
        let p = self.correction_profile.clone();
        let mut out = self.clone();
        out.f = Arc::new(move |x| f(x) - c * p(x));
        out.mean_shift = self.mean_shift + c;
        out.report = out.compute_report();
        Ok(out)
    }

    /// All of `(f, g, u_in)` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let (f, g, u) = (self.f.clone(), self.g.clone(), self.u_in.clone());
        let mut out = self.clone();
        out.f = Arc::new(move |x| s * f(x));
        out.g = Arc::new(move |x| s * g(x));
        out.u_in = Arc::new(move |x| s * u(x));
        out.mean_shift = s * self.mean_shift;
        out.report = out.compute_report();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smoothstep_profile() {
        assert_eq!(smoothstep_cutoff(1.9, 2.0, 0.2), 0.0);
        assert_eq!(smoothstep_cutoff(2.3, 2.0, 0.2), 1.0);
        assert_relative_eq!(smoothstep_cutoff(2.1, 2.0, 0.2), 0.5, epsilon = 1e-15);
        assert_eq!(smoothstep_cutoff(2.0, 2.0, 0.0), 0.0);
        assert_eq!(smoothstep_cutoff(2.0001, 2.0, 0.0), 1.0);
    }

    #[test]
    fn boundary_integral_of_paper_flux() {
        let g: ScalarField<2> = Arc::new(|x: &Point<2>| if x[0].abs() > 2.999 { -3.0 } else { 0.0 });
        let d = ProblemData::new(Arc::new(|_| 0.0), g, Arc::new(|_| 0.0), 3.0, [false, false]);
        assert_relative_eq!(d.report().integral_g, -36.0, epsilon = 1e-10);
        assert!(!d.report().is_compatible());
        let fixed = d.mean_corrected().unwrap();
        assert!(fixed.report().residual.abs() < 1e-10);
        assert_relative_eq!(fixed.mean_shift(), -1.0, epsilon = 1e-10);
    }

    #[test]
    fn periodic_axes_have_no_boundary() {
        let one: ScalarField<2> = Arc::new(|_| 1.0);
        let d = ProblemData::new(Arc::new(|_| 0.0), one, Arc::new(|_| 0.0), 3.0, [true, false]);
        assert_relative_eq!(d.report().integral_g, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn correction_respects_profile_support() {
        let profile: ScalarField<2> = Arc::new(|x: &Point<2>| smoothstep_cutoff(x.norm(), 2.0, 0.2));
        let d = ProblemData::new(Arc::new(|_| 1.0), Arc::new(|_| 0.0), Arc::new(|_| 0.0), 3.0, [false; 2])
            .with_correction_profile(profile);
        let fixed = d.mean_corrected().unwrap();
        assert_eq!(fixed.f(&Point::<2>::new(0.5, 0.5)), 1.0);
        assert!(fixed.report().is_compatible());
    }
}
