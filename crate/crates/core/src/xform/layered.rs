use nalgebra::Matrix2;

use super::radial::{CoordinateMap, PushedSample};
use super::{is_spd, InclusionMaterial, OUTER_RADIUS};
use crate::{Error, Point, Result, Tensor};

/// One-dimensional blow-up `f_eps` acting on the second coordinate only.
///
/// `|x2| < eps` is stretched onto `|y2| < 1`, `eps <= |x2| <= 2` onto `1 <= |y2| <= 2`,
/// and the map is the identity beyond.
#[derive(Debug, Clone, Copy)]
pub struct LayeredMap {
    epsilon: f64,
}

impl LayeredMap {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "layered map needs 0 < epsilon < 1, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn forward_coord(&self, x2: f64) -> f64 {
        let e = self.epsilon;
        let s = x2.abs();
        if s > OUTER_RADIUS {
            x2
        } else if s >= e {
            x2.signum() * ((2.0 - 2.0 * e) / (2.0 - e) + s / (2.0 - e))
        } else {
            x2 / e
        }
    }

    pub fn inverse_coord(&self, y2: f64) -> f64 {
        let e = self.epsilon;
        let s = y2.abs();
        if s > OUTER_RADIUS {
            y2
        } else if s >= 1.0 {
            y2.signum() * ((2.0 - e) * s - (2.0 - 2.0 * e))
        } else {
            e * y2
        }
    }

    /// `f'(x2)`, one of `1`, `1/(2-eps)`, `1/eps`; interfaces take the middle value.
    pub fn derivative(&self, x2: f64) -> f64 {
        let e = self.epsilon;
        let s = x2.abs();
        if s > OUTER_RADIUS {
            1.0
        } else if s >= e {
            1.0 / (2.0 - e)
        } else {
            1.0 / e
        }
    }
}

impl CoordinateMap<2> for LayeredMap {
    fn forward(&self, x: &Point<2>) -> Point<2> {
        Point::<2>::new(x[0], self.forward_coord(x[1]))
    }
    fn inverse(&self, y: &Point<2>) -> Point<2> {
        Point::<2>::new(y[0], self.inverse_coord(y[1]))
    }
    fn jacobian(&self, x: &Point<2>) -> Tensor<2> {
        Matrix2::new(1.0, 0.0, 0.0, self.derivative(x[1]))
    }
    fn jacobian_det(&self, x: &Point<2>) -> f64 {
        self.derivative(x[1])
    }
}

/// Entrywise layered push-forward: `rho/f'`, `A11/f'`, `A12`, `A21`, `f' A22`, `h/f'`.
pub fn layered_push_forward(
    map: &LayeredMap,
    y: &Point<2>,
    rho: impl Fn(&Point<2>) -> f64,
    a: impl Fn(&Point<2>) -> Tensor<2>,
    h: impl Fn(&Point<2>) -> f64,
) -> Result<PushedSample<2>> {
    let x = map.inverse(y);
    let t = a(&x);
    if !is_spd(&t) {
        return Err(Error::NonSpdTensor {
            location: format!("layered push-forward input at x = {:?}", x.as_slice()),
        });
    }
    let d = map.derivative(x[1]);
    Ok(PushedSample {
        density: rho(&x) / d,
        conductivity: Matrix2::new(t[(0, 0)] / d, t[(0, 1)], t[(1, 0)], t[(1, 1)] * d),
        source: h(&x) / d,
        preimage: x,
    })
}

/// Layered small-inclusion coefficients, material evaluated at `(x1, x2/eps)`.
pub fn layered_defect_coefficients(
    x: &Point<2>,
    epsilon: f64,
    m: &InclusionMaterial<2>,
) -> Result<(f64, Tensor<2>)> {
    if x[1].abs() >= epsilon {
        return Ok((1.0, Tensor::<2>::identity()));
    }
    let z = Point::<2>::new(x[0], x[1] / epsilon);
    let b = m.beta(&z);
    let a = Matrix2::new(b[(0, 0)] / epsilon, b[(0, 1)], b[(1, 0)], epsilon * b[(1, 1)]);
    if !is_spd(&a) {
        return Err(Error::NonSpdTensor {
            location: format!("layered defect at x = {:?}", x.as_slice()),
        });
    }
    let rho = m.eta(&z) / epsilon;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::NonPositiveDensity {
            location: format!("layered defect at x = {:?}", x.as_slice()),
            value: rho,
        });
    }
    Ok((rho, a))
}

#[cfg(test)]
mod tests {
    use super::super::push_forward_sample;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn middle_branch_value() {
        let l = LayeredMap::new(0.1).unwrap();
        assert_relative_eq!(l.forward_coord(1.0), 2.8 / 1.9, epsilon = 1e-15);
        assert_relative_eq!(l.forward_coord(-1.0), -2.8 / 1.9, epsilon = 1e-15);
        assert_relative_eq!(l.forward_coord(0.1), 1.0, epsilon = 1e-15);
        assert_relative_eq!(l.forward_coord(0.0999999999), 1.0, epsilon = 1e-8);
        assert_eq!(l.forward_coord(2.5), 2.5);
        assert_relative_eq!(l.forward_coord(2.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_material_in_annulus() {
        let l = LayeredMap::new(0.1).unwrap();
        let s = layered_push_forward(
            &l,
            &Point::<2>::new(0.4, -1.5),
            |_| 1.0,
            |_| Tensor::<2>::identity(),
            |_| 0.0,
        )
        .unwrap();
        assert_relative_eq!(s.density, 1.9, epsilon = 1e-14);
        assert_relative_eq!(s.conductivity, Matrix2::new(1.9, 0.0, 0.0, 1.0 / 1.9), epsilon = 1e-14);
    }

    #[test]
    fn defect_values() {
        let m = InclusionMaterial::<2>::isotropic(1.0, 1.0).unwrap();
        let (rho, a) = layered_defect_coefficients(&Point::<2>::new(2.0, -0.05), 0.1, &m).unwrap();
        assert_relative_eq!(rho, 10.0, epsilon = 1e-14);
        assert_relative_eq!(a, Matrix2::new(10.0, 0.0, 0.0, 0.1), epsilon = 1e-14);
        let out = layered_defect_coefficients(&Point::<2>::new(0.0, 1.5), 0.1, &m).unwrap();
        assert_eq!(out, (1.0, Tensor::<2>::identity()));
    }

    #[test]
    fn rescaling_keeps_the_determinant() {
        // diag(1/eps, eps) scaling of the diagonal leaves det(beta) unchanged.
        let beta = Matrix2::new(1.0, 0.9, 0.9, 1.0);
        let m = InclusionMaterial::<2>::constant(1.0, beta).unwrap();
        let (_, a) = layered_defect_coefficients(&Point::<2>::new(0.0, 0.001), 0.01, &m).unwrap();
        assert_relative_eq!(a.determinant(), beta.determinant(), epsilon = 1e-12);
    }

    #[test]
    fn push_forward_of_defect_is_identity_outside() {
        let l = LayeredMap::new(0.05).unwrap();
        let m = InclusionMaterial::<2>::isotropic(2.0, 3.0).unwrap();
        let y = Point::<2>::new(-1.0, 2.4);
        let s = layered_push_forward(
            &l,
            &y,
            |x| layered_defect_coefficients(x, 0.05, &m).unwrap().0,
            |x| layered_defect_coefficients(x, 0.05, &m).unwrap().1,
            |_| 0.0,
        )
        .unwrap();
        assert_eq!(s.density, 1.0);
        assert_eq!(s.conductivity, Tensor::<2>::identity());
    }

    proptest! {
        #[test]
        fn entrywise_formula_matches_generic(y1 in -3.0f64..3.0, y2 in -3.0f64..3.0, e in 0.01f64..0.5,
                                             a11 in 0.5f64..3.0, a22 in 0.5f64..3.0, a12 in -0.4f64..0.4) {
            let l = LayeredMap::new(e).unwrap();
            let a = Matrix2::new(a11, a12, a12, a22);
            let y = Point::<2>::new(y1, y2);
            let closed = layered_push_forward(&l, &y, |_| 1.3, |_| a, |_| 0.7).unwrap();
            let generic = push_forward_sample(&l, &y, |_| 1.3, |_| a, |_| 0.7).unwrap();
            prop_assert!((closed.conductivity - generic.conductivity).amax() < 1e-12 * (1.0 + closed.conductivity.amax()));
            prop_assert!((closed.density - generic.density).abs() < 1e-12 * closed.density);
        }

        #[test]
        fn layered_round_trip(y2 in -3.0f64..3.0, e in 1e-4f64..0.9) {
            let l = LayeredMap::new(e).unwrap();
            prop_assert!((l.forward_coord(l.inverse_coord(y2)) - y2).abs() < 1e-12);
            let d = l.derivative(l.inverse_coord(y2));
            prop_assert!(d == 1.0 || d == 1.0 / e || d == 1.0 / (2.0 - e));
        }
    }
}
