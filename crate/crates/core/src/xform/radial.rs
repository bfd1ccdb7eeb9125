use nalgebra::{Matrix2, Matrix3, Vector3};

use super::{is_spd, CloakParams, InclusionMaterial, OUTER_RADIUS};
use crate::{Error, Point, Result, Tensor};

/// An invertible piecewise-smooth change of variables on the box.
pub trait CoordinateMap<const D: usize>: Send + Sync {
    fn forward(&self, x: &Point<D>) -> Point<D>;
    fn inverse(&self, y: &Point<D>) -> Point<D>;
    fn jacobian(&self, x: &Point<D>) -> Tensor<D>;
    fn jacobian_det(&self, x: &Point<D>) -> f64;
}

/// `F = Id`, used to check that a push-forward is neutral.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl<const D: usize> CoordinateMap<D> for IdentityMap {
    fn forward(&self, x: &Point<D>) -> Point<D> {
        *x
    }
    fn inverse(&self, y: &Point<D>) -> Point<D> {
        *y
    }
    fn jacobian(&self, _x: &Point<D>) -> Tensor<D> {
        Tensor::<D>::identity()
    }
    fn jacobian_det(&self, _x: &Point<D>) -> f64 {
        1.0
    }
}

// Points within this relative distance of `|x| = eps` or `|y| = 1` count as annulus
// points, so the closed annulus is mapped consistently despite round-off.
const INTERFACE_SLACK: f64 = 1e-12;

/// The regularized radial blow-up `F_eps`: `B_eps -> B_1`, annulus `B_2 \ B_eps -> B_2 \ B_1`.
#[derive(Debug, Clone, Copy)]
pub struct RadialMap<const D: usize> {
    epsilon: f64,
}

impl<const D: usize> RadialMap<D> {
    pub fn new(p: &CloakParams) -> Result<Self> {
        p.require_dim(D)?;
        Ok(Self { epsilon: p.epsilon() })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Radial profile `|F(x)|` as a function of `|x|`.
    pub fn radius_forward(&self, r: f64) -> f64 {
        let e = self.epsilon;
        if r >= OUTER_RADIUS {
            r
        } else if r >= e {
            (2.0 - 2.0 * e) / (2.0 - e) + r / (2.0 - e)
        } else {
            r / e
        }
    }

    pub fn radius_inverse(&self, rp: f64) -> f64 {
        let e = self.epsilon;
        if rp >= OUTER_RADIUS {
            rp
        } else if rp >= 1.0 - INTERFACE_SLACK {
            ((2.0 - e) * rp - (2.0 - 2.0 * e)).max(e)
        } else {
            e * rp
        }
    }

    /// Radial derivative and tangential stretch `r'/r`.
    fn stretches(&self, r: f64) -> (f64, f64) {
        let e = self.epsilon;
        if r > OUTER_RADIUS {
            (1.0, 1.0)
        } else if r < e * (1.0 - INTERFACE_SLACK) {
            (1.0 / e, 1.0 / e)
        } else {
            (1.0 / (2.0 - e), self.radius_forward(r) / r)
        }
    }
}

fn rescale<const D: usize>(x: &Point<D>, r_old: f64, r_new: f64) -> Point<D> {
    if r_old == 0.0 {
        Point::<D>::zeros()
    } else {
        x * (r_new / r_old)
    }
}

impl<const D: usize> CoordinateMap<D> for RadialMap<D> {
    fn forward(&self, x: &Point<D>) -> Point<D> {
        let r = x.norm();
        rescale(x, r, self.radius_forward(r))
    }

    fn inverse(&self, y: &Point<D>) -> Point<D> {
        let rp = y.norm();
        rescale(y, rp, self.radius_inverse(rp))
    }

    fn jacobian(&self, x: &Point<D>) -> Tensor<D> {
        let r = x.norm();
        let (radial, tangential) = self.stretches(r);
        if radial == tangential {
            return Tensor::<D>::identity() * radial;
        }
        let n = x / r;
        let proj = n * n.transpose();
        proj * radial + (Tensor::<D>::identity() - proj) * tangential
    }

    fn jacobian_det(&self, x: &Point<D>) -> f64 {
        let (radial, tangential) = self.stretches(x.norm());
        radial * tangential.powi(D as i32 - 1)
    }
}

/// Push-forward of (density, conductivity, source) sampled at one point `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushedSample<const D: usize> {
    pub density: f64,
    pub conductivity: Tensor<D>,
    pub source: f64,
    /// Preimage `x = F^{-1}(y)` at which the inputs were evaluated.
    pub preimage: Point<D>,
}

/// `F_*rho = rho/det`, `F_*A = DF A DF^T / det`, `F_*f = f/det`, all at `x = F^{-1}(y)`.
pub fn push_forward_sample<const D: usize, M: CoordinateMap<D> + ?Sized>(
    map: &M,
    y: &Point<D>,
    rho: impl Fn(&Point<D>) -> f64,
    a: impl Fn(&Point<D>) -> Tensor<D>,
    f: impl Fn(&Point<D>) -> f64,
) -> Result<PushedSample<D>> {
    let x = map.inverse(y);
    let tensor = a(&x);
    if !is_spd(&tensor) {
        return Err(Error::NonSpdTensor {
            location: format!("push-forward input at x = {:?}", x.as_slice()),
        });
    }
    let jac = map.jacobian(&x);
    let det = map.jacobian_det(&x);
    let mut pushed = jac * tensor * jac.transpose() / det;
    // DF A DF^T is symmetric in exact arithmetic; remove round-off asymmetry.
    pushed = (pushed + pushed.transpose()) * 0.5;
    Ok(PushedSample {
        density: rho(&x) / det,
        conductivity: pushed,
        source: f(&x) / det,
        preimage: x,
    })
}

/// Radial eigenvalue `A11(r') = (r'-1)/r' + eps/(r'(2-eps))` of the 2D cloak.
pub fn polar_radial_conductivity(r_prime: f64, epsilon: f64) -> f64 {
    (r_prime - 1.0) / r_prime + epsilon / (r_prime * (2.0 - epsilon))
}

/// `B(r') = (2-eps)(2-eps-(2-2eps)/r')^2`, the 3D cloak density.
pub fn spherical_density(r_prime: f64, epsilon: f64) -> f64 {
    let inner = 2.0 - epsilon - (2.0 - 2.0 * epsilon) / r_prime;
    (2.0 - epsilon) * inner * inner
}

/// Radial eigenvalue of the 3D cloak conductivity, `(r/r')^2/(2-eps)` with `r = F^{-1}(r')`.
///
/// Equals `B(r')/(2-eps)^2`; this is what the push-forward of the identity produces.
pub fn spherical_radial_conductivity(r_prime: f64, epsilon: f64) -> f64 {
    spherical_density(r_prime, epsilon) / ((2.0 - epsilon) * (2.0 - epsilon))
}

fn check_annulus_radius(r_prime: f64) -> Result<()> {
    if !(1.0..=OUTER_RADIUS).contains(&r_prime) {
        return Err(Error::invalid(format!(
            "closed-form cloak coefficients need 1 <= r' <= 2, got {r_prime}"
        )));
    }
    Ok(())
}

/// Closed-form 2D cloak coefficients in the annulus, Cartesian components.
pub fn cloak_polar(r_prime: f64, theta: f64, p: &CloakParams) -> Result<(f64, Tensor<2>)> {
    p.require_dim(2)?;
    p.require_cloak_regime()?;
    check_annulus_radius(r_prime)?;
    let e = p.epsilon();
    let a11 = polar_radial_conductivity(r_prime, e);
    let rho = (r_prime - 1.0) / r_prime * (2.0 - e) * (2.0 - e) + e / r_prime * (2.0 - e);
    let (s, c) = theta.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let a = rot * Matrix2::new(a11, 0.0, 0.0, 1.0 / a11) * rot.transpose();
    Ok((rho, (a + a.transpose()) * 0.5))
}

/// Closed-form 3D cloak coefficients in the annulus, Cartesian components.
///
/// `theta` is the azimuth, `phi` the polar angle from the `x3` axis.
pub fn cloak_spherical(
    r_prime: f64,
    theta: f64,
    phi: f64,
    p: &CloakParams,
) -> Result<(f64, Tensor<3>)> {
    p.require_dim(3)?;
    p.require_cloak_regime()?;
    check_annulus_radius(r_prime)?;
    let e = p.epsilon();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let rot_theta = Matrix3::new(ct, -st, 0.0, st, ct, 0.0, 0.0, 0.0, 1.0);
    // Symmetric reflection sending e1 to (sin phi, 0, cos phi).
    let m_phi = Matrix3::new(sp, 0.0, cp, 0.0, 1.0, 0.0, cp, 0.0, -sp);
    let frame = rot_theta * m_phi;
    let diag = Matrix3::from_diagonal(&Vector3::new(
        spherical_radial_conductivity(r_prime, e),
        2.0 - e,
        2.0 - e,
    ));
    let a = frame * diag * frame.transpose();
    Ok((spherical_density(r_prime, e), (a + a.transpose()) * 0.5))
}

/// Small-inclusion coefficients: `(1, Id)` outside `B_eps`, rescaled material inside.
pub fn defect_coefficients<const D: usize>(
    x: &Point<D>,
    p: &CloakParams,
    m: &InclusionMaterial<D>,
) -> (f64, Tensor<D>) {
    let e = p.epsilon();
    if x.norm() < e {
        let z = x / e;
        let d = D as i32;
        (e.powi(-d) * m.eta(&z), m.beta(&z) * e.powi(2 - d))
    } else {
        (1.0, Tensor::<D>::identity())
    }
}
