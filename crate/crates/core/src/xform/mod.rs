//! Coordinate maps and coefficient synthesis.
//!
//! Everything in here is a pure function of immutable inputs. Fields are
//! stored as shared closures so they can be sampled from many threads.

mod fields;
mod layered;
mod profiles;
mod radial;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Error, Point, Result, Tensor};

pub use fields::{CoefficientField, Interface, Provenance};
pub use layered::{layered_defect_coefficients, layered_push_forward, LayeredMap};
pub use profiles::{coefficient_profile, ProfileRow};
pub use radial::{
    cloak_polar, cloak_spherical, defect_coefficients, polar_radial_conductivity,
    push_forward_sample, spherical_density, spherical_radial_conductivity, CoordinateMap,
    IdentityMap, PushedSample, RadialMap,
};

/// Radius of the cloaked region `B_1`.
pub const INNER_RADIUS: f64 = 1.0;
/// Outer radius of the cloaking annulus `B_2`.
pub const OUTER_RADIUS: f64 = 2.0;

/// Scalar field on the physical domain.
pub type ScalarField<const D: usize> = Arc<dyn Fn(&Point<D>) -> f64 + Send + Sync>;
/// Symmetric tensor field on the physical domain.
pub type TensorField<const D: usize> = Arc<dyn Fn(&Point<D>) -> Tensor<D> + Send + Sync>;

/// Wraps a closure as a [`ScalarField`].
pub fn scalar_field<const D: usize>(
    f: impl Fn(&Point<D>) -> f64 + Send + Sync + 'static,
) -> ScalarField<D> {
    Arc::new(f)
}

/// Constant scalar field.
pub fn constant_field<const D: usize>(value: f64) -> ScalarField<D> {
    Arc::new(move |_| value)
}

/// Regularization radius and spatial dimension of the near-cloak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloakParams {
    epsilon: f64,
    dim: usize,
}

impl CloakParams {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        Ok(Self { epsilon, dim })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cloak synthesis keeps the annulus non-degenerate.
    pub(crate) fn require_cloak_regime(&self) -> Result<()> {
        if self.epsilon >= 1.0 {
            return Err(Error::invalid(format!(
                "cloak synthesis requires epsilon < 1, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub(crate) fn require_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim,
            });
        }
        Ok(())
    }
}

/// Density and conductivity placed inside the cloaked region `B_1`.
///
/// Both are functions of the rescaled coordinate on `B_1`. The ellipticity
/// bounds are stored so callers can report them; they are checked against
/// samples when the material is built from constants.
#[derive(Clone)]
pub struct InclusionMaterial<const D: usize> {
    eta: ScalarField<D>,
    beta: TensorField<D>,
    kappa: (f64, f64),
}

impl<const D: usize> std::fmt::Debug for InclusionMaterial<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InclusionMaterial")
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl<const D: usize> InclusionMaterial<D> {
    /// Arbitrary admissible material. `kappa1 <= kappa2` bound the spectrum of `beta`.
    pub fn new(eta: ScalarField<D>, beta: TensorField<D>, kappa1: f64, kappa2: f64) -> Result<Self> {
        if !(kappa1 > 0.0 && kappa2 >= kappa1 && kappa2.is_finite()) {
            return Err(Error::invalid(format!(
                "ellipticity bounds must satisfy 0 < kappa1 <= kappa2 < inf, got ({kappa1}, {kappa2})"
            )));
        }
        Ok(Self {
            eta,
            beta,
            kappa: (kappa1, kappa2),
        })
    }

    /// Spatially constant material.
    pub fn constant(eta: f64, beta: Tensor<D>) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::NonPositiveDensity {
                location: "inclusion material".into(),
                value: eta,
            });
        }
        let (lo, hi) = spectral_bounds(&beta)
            .ok_or_else(|| Error::NonSpdTensor {
                location: "inclusion material".into(),
            })?;
        Self::new(Arc::new(move |_| eta), Arc::new(move |_| beta), lo, hi)
    }

    /// `eta` with conductivity `beta * Id`.
    pub fn isotropic(eta: f64, beta: f64) -> Result<Self> {
        Self::constant(eta, Tensor::<D>::identity() * beta)
    }

    pub fn eta(&self, z: &Point<D>) -> f64 {
        (self.eta)(z)
    }

    pub fn beta(&self, z: &Point<D>) -> Tensor<D> {
        (self.beta)(z)
    }

    pub fn kappa(&self) -> (f64, f64) {
        self.kappa
    }
}

/// Symmetric positive definite test used for every synthesized tensor.
pub fn is_spd<const D: usize>(t: &Tensor<D>) -> bool {
    if t.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = t.amax().max(f64::MIN_POSITIVE);
    for i in 0..D {
        for j in 0..i {
            if (t[(i, j)] - t[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    t.cholesky().is_some()
}

/// Smallest and largest eigenvalue of a symmetric tensor, `None` unless SPD.
pub fn spectral_bounds<const D: usize>(t: &Tensor<D>) -> Option<(f64, f64)> {
    if !is_spd(t) {
        return None;
    }
    let dynamic = DMatrix::from_fn(D, D, |i, j| 0.5 * (t[(i, j)] + t[(j, i)]));
    let eig = dynamic.symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    (lo > 0.0).then_some((lo, hi))
}
