use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::layered::LayeredMap;
use super::radial::{defect_coefficients, CoordinateMap, RadialMap};
use super::{is_spd, CloakParams, InclusionMaterial, ScalarField, TensorField};
use crate::{Error, Point, Result, Tensor};

/// Where a coefficient field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Homogeneous,
    Cloak,
    Defect,
    LayeredCloak,
    LayeredDefect,
    Custom,
}

/// A surface across which coefficients may jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interface {
    /// `|x| = r`.
    Sphere(f64),
    /// `|x_axis| = c`.
    Slab { axis: usize, offset: f64 },
}

impl Interface {
    /// True when the surface passes through the interior of the box `[lo, hi]`.
    pub fn cuts<const D: usize>(&self, lo: &Point<D>, hi: &Point<D>) -> bool {
        match *self {
            Interface::Sphere(r) => {
                let mut near = 0.0;
                let mut far = 0.0;
                for a in 0..D {
                    let c = 0.0f64.clamp(lo[a], hi[a]);
                    near += c * c;
                    let m = lo[a].abs().max(hi[a].abs());
                    far += m * m;
                }
                near.sqrt() < r && r < far.sqrt()
            }
            Interface::Slab { axis, offset } => {
                let inside = |c: f64| lo[axis] < c && c < hi[axis];
                inside(offset) || inside(-offset)
            }
        }
    }
}

/// Density and conductivity as functions of position.
///
/// Sampling is cheap and thread-safe; the assembler evaluates it at quadrature
/// points and checks positivity there.
#[derive(Clone)]
pub struct CoefficientField<const D: usize> {
    provenance: Provenance,
    density: ScalarField<D>,
    conductivity: TensorField<D>,
    interfaces: Vec<Interface>,
}

impl<const D: usize> std::fmt::Debug for CoefficientField<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("provenance", &self.provenance)
            .field("interfaces", &self.interfaces)
            .finish_non_exhaustive()
    }
}

impl<const D: usize> CoefficientField<D> {
    pub fn custom(density: ScalarField<D>, conductivity: TensorField<D>) -> Self {
        Self {
            provenance: Provenance::Custom,
            density,
            conductivity,
            interfaces: Vec::new(),
        }
    }

    pub fn homogeneous() -> Self {
        Self {
            provenance: Provenance::Homogeneous,
            density: Arc::new(|_| 1.0),
            conductivity: Arc::new(|_| Tensor::<D>::identity()),
            interfaces: Vec::new(),
        }
    }

    /// Small inclusion of radius `eps` holding the rescaled material.
    pub fn defect(p: &CloakParams, m: &InclusionMaterial<D>) -> Result<Self> {
        p.require_dim(D)?;
        let (p1, m1) = (*p, m.clone());
        let (p2, m2) = (*p, m.clone());
        Ok(Self {
            provenance: Provenance::Defect,
            density: Arc::new(move |x| defect_coefficients(x, &p1, &m1).0),
            conductivity: Arc::new(move |x| defect_coefficients(x, &p2, &m2).1),
            interfaces: vec![Interface::Sphere(p.epsilon())],
        })
    }

    /// Cloak obtained by pushing the defect field forward under `F_eps`.
    pub fn cloak(p: &CloakParams, m: &InclusionMaterial<D>) -> Result<Self> {
        p.require_cloak_regime()?;
        let map = RadialMap::<D>::new(p)?;
        Ok(Self::defect(p, m)?
            .push_forward(Arc::new(map), Provenance::Cloak)
            .with_interfaces(vec![Interface::Sphere(1.0), Interface::Sphere(2.0)]))
    }

    /// Generic push-forward of this field; samples are taken at `x = F^{-1}(y)`.
    pub fn push_forward(&self, map: Arc<dyn CoordinateMap<D>>, provenance: Provenance) -> Self {
        let density = self.density.clone();
        let conductivity = self.conductivity.clone();
        let map_rho = map.clone();
        Self {
            provenance,
            density: Arc::new(move |y| {
                let x = map_rho.inverse(y);
                density(&x) / map_rho.jacobian_det(&x)
            }),
            conductivity: Arc::new(move |y| {
                let x = map.inverse(y);
                let j = map.jacobian(&x);
                let a = j * conductivity(&x) * j.transpose() / map.jacobian_det(&x);
                (a + a.transpose()) * 0.5
            }),
            interfaces: Vec::new(),
        }
    }

    /// Declares the surfaces where coefficients jump; assembly refines quadrature on cells they cut.
    pub fn with_interfaces(mut self, interfaces: Vec<Interface>) -> Self {
        self.interfaces = interfaces;
        self
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn density(&self, x: &Point<D>) -> f64 {
        (self.density)(x)
    }

    pub fn conductivity(&self, x: &Point<D>) -> Tensor<D> {
        (self.conductivity)(x)
    }

    /// Samples both coefficients and rejects non-positive density or non-SPD conductivity.
    pub fn sample_checked(&self, x: &Point<D>) -> Result<(f64, Tensor<D>)> {
        let rho = self.density(x);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::NonPositiveDensity {
                location: format!("x = {:?}", x.as_slice()),
                value: rho,
            });
        }
        let a = self.conductivity(x);
        if !is_spd(&a) {
            return Err(Error::NonSpdTensor {
                location: format!("x = {:?}", x.as_slice()),
            });
        }
        Ok((rho, a))
    }
}

fn layered_defect_raw(x: &Point<2>, e: f64, m: &InclusionMaterial<2>) -> (f64, Tensor<2>) {
    if x[1].abs() >= e {
        return (1.0, Tensor::<2>::identity());
    }
    let z = Point::<2>::new(x[0], x[1] / e);
    let b = m.beta(&z);
    (
        m.eta(&z) / e,
        Matrix2::new(b[(0, 0)] / e, b[(0, 1)], b[(1, 0)], e * b[(1, 1)]),
    )
}

impl CoefficientField<2> {
    /// Thin layer `|x2| < eps` holding the anisotropically rescaled material.
    pub fn layered_defect(epsilon: f64, m: &InclusionMaterial<2>) -> Result<Self> {
        LayeredMap::new(epsilon)?;
        let (m1, m2) = (m.clone(), m.clone());
        Ok(Self {
            provenance: Provenance::LayeredDefect,
            density: Arc::new(move |x| layered_defect_raw(x, epsilon, &m1).0),
            conductivity: Arc::new(move |x| layered_defect_raw(x, epsilon, &m2).1),
            interfaces: vec![Interface::Slab {
                axis: 1,
                offset: epsilon,
            }],
        })
    }

    /// Push-forward of the layered defect under `f_eps`.
    pub fn layered_cloak(epsilon: f64, m: &InclusionMaterial<2>) -> Result<Self> {
        let map = LayeredMap::new(epsilon)?;
        Ok(Self::layered_defect(epsilon, m)?
            .push_forward(Arc::new(map), Provenance::LayeredCloak)
            .with_interfaces(vec![
                Interface::Slab { axis: 1, offset: 1.0 },
                Interface::Slab { axis: 1, offset: 2.0 },
            ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xform::cloak_polar;
    use approx::assert_relative_eq;

    #[test]
    fn cloak_interior_holds_material() {
        let p = CloakParams::new(0.1, 2).unwrap();
        let m = InclusionMaterial::<2>::isotropic(2.0, 3.0).unwrap();
        let c = CoefficientField::cloak(&p, &m).unwrap();
        let y = Point::<2>::new(0.3, -0.5);
        assert_relative_eq!(c.density(&y), 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.conductivity(&y), Tensor::<2>::identity() * 3.0, epsilon = 1e-12);
        let far = Point::<2>::new(2.5, 1.0);
        assert_eq!(c.density(&far), 1.0);
        assert_eq!(c.conductivity(&far), Tensor::<2>::identity());
    }

    #[test]
    fn cloak_annulus_matches_closed_form() {
        let p = CloakParams::new(0.05, 2).unwrap();
        let m = InclusionMaterial::<2>::isotropic(1.0, 1.0).unwrap();
        let c = CoefficientField::cloak(&p, &m).unwrap();
        let (r, t) = (1.37f64, 2.2f64);
        let y = Point::<2>::new(r * t.cos(), r * t.sin());
        let (rho, a) = cloak_polar(r, t, &p).unwrap();
        assert_relative_eq!(c.density(&y), rho, epsilon = 1e-12);
        assert_relative_eq!(c.conductivity(&y), a, epsilon = 1e-12);
    }

    #[test]
    fn layered_cloak_interior_holds_material() {
        let beta = Matrix2::new(2.0, 0.3, 0.3, 1.5);
        let m = InclusionMaterial::<2>::constant(4.0, beta).unwrap();
        let c = CoefficientField::layered_cloak(0.02, &m).unwrap();
        let y = Point::<2>::new(-1.0, 0.6);
        assert_relative_eq!(c.density(&y), 4.0, epsilon = 1e-12);
        assert_relative_eq!(c.conductivity(&y), beta, epsilon = 1e-12);
        assert_eq!(c.provenance(), Provenance::LayeredCloak);
    }

    #[test]
    fn interface_cut_tests() {
        let s = Interface::Sphere(1.0);
        assert!(s.cuts(&Point::<2>::new(0.5, 0.5), &Point::<2>::new(1.0, 1.0)));
        assert!(!s.cuts(&Point::<2>::new(0.1, 0.1), &Point::<2>::new(0.2, 0.2)));
        assert!(!s.cuts(&Point::<2>::new(1.0, 0.0), &Point::<2>::new(2.0, 1.0)));
        let slab = Interface::Slab { axis: 1, offset: 0.5 };
        assert!(slab.cuts(&Point::<2>::new(-3.0, -0.6), &Point::<2>::new(-2.0, -0.4)));
        assert!(!slab.cuts(&Point::<2>::new(-3.0, -0.4), &Point::<2>::new(-2.0, 0.4)));
    }

    #[test]
    fn sample_checked_rejects_bad_fields() {
        let f = CoefficientField::<2>::custom(Arc::new(|_| -1.0), Arc::new(|_| Tensor::<2>::identity()));
        assert!(matches!(
            f.sample_checked(&Point::<2>::zeros()),
            Err(Error::NonPositiveDensity { .. })
        ));
        let g = CoefficientField::<2>::custom(Arc::new(|_| 1.0), Arc::new(|_| -Tensor::<2>::identity()));
        assert!(matches!(g.sample_checked(&Point::<2>::zeros()), Err(Error::NonSpdTensor { .. })));
    }
}
