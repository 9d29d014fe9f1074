//! Electric field of a uniformly charged rectangular dielectric facet in free
//! space (no conductor screening; charge densities act as effective
//! parameters).

use crate::constants::{ELEMENTARY_CHARGE, EPSILON_0};
use crate::error::{Error, Result};
use crate::geometry::SpacerFacet;
use crate::linalg::{SymMat3, Vec3};
use crate::scalar::Real;

/// Elementary charges per µm² → C/m².
pub fn sigma_si<R: Real>(sigma_e_per_um2: R) -> R {
    sigma_e_per_um2 * R::c(ELEMENTARY_CHARGE * 1e12)
}

/// Potential (V), field (V/m), and field Jacobian (V/m²) of the uniformly
/// charged facet at `point`, for surface charge density `sigma` in
/// elementary charges per µm².
pub fn charged_facet_sample<R: Real>(
    facet: &SpacerFacet<R>,
    sigma: R,
    point: Vec3<R>,
) -> Result<FacetSample<R>> {
    let (eu, ev, en) = facet.frame();
    let origin = Vec3::new(facet.start.0, facet.start.1, facet.z_min);
    let rel = point - origin;
    // local in-plane coordinates with the plate spanning [0, L] × [0, H]
    let xl = rel.dot(eu);
    let yl = rel.dot(ev);
    let zl = rel.dot(en);
    let l = facet.length();
    let h = facet.height();

    let guard = R::c(1e-9);
    if zl.abs() < guard
        && xl > -guard
        && xl < l + guard
        && yl > -guard
        && yl < h + guard
    {
        return Err(Error::SingularEvaluation(format!(
            "point lies on facet '{}'",
            facet.id
        )));
    }

    let k = sigma_si(sigma) / R::c(4.0 * std::f64::consts::PI * EPSILON_0);
    let xs = [xl - R::zero(), xl - l];
    let ys = [yl - R::zero(), yl - h];
    let mut ex = R::zero();
    let mut ey = R::zero();
    let mut ez = R::zero();
    let mut pot = R::zero();
    let mut hxx = R::zero();
    let mut hxy = R::zero();
    let mut hxz = R::zero();
    let mut hyy = R::zero();
    let mut hyz = R::zero();
    let mut hzz = R::zero();
    for (i, &a) in xs.iter().enumerate() {
        for (j, &b) in ys.iter().enumerate() {
            let s = if (i + j) % 2 == 0 { R::one() } else { -R::one() };
            let r = (a * a + b * b + zl * zl).sqrt();
            // principal-branch arctangent keeps corner sums consistent on
            // both sides of the plate
            let at = if zl == R::zero() {
                R::zero()
            } else {
                (a * b / (zl * r)).atan()
            };
            let lny = (b + r).ln();
            let lnx = (a + r).ln();
            ex += s * lny;
            ey += s * lnx;
            ez += s * at;
            pot += s * (a * lny + b * lnx - zl * at);
            let p = a * a + zl * zl;
            let q = b * b + zl * zl;
            hxx += s * a * (r - b) / (r * p);
            hxy += s / r;
            hxz += s * zl * (r - b) / (r * p);
            hyy += s * b * (r - a) / (r * q);
            hyz += s * zl * (r - a) / (r * q);
            hzz += s * a * b * (r * r + zl * zl) / (r * p * q);
        }
    }
    let e_local = Vec3::new(-k * ex, -k * ey, k * ez);
    let h_local = SymMat3 {
        xx: -k * hxx,
        xy: -k * hxy,
        xz: -k * hxz,
        yy: -k * hyy,
        yz: -k * hyz,
        zz: -k * hzz,
    };
    // rotate back to global axes
    let field = eu * e_local.x + ev * e_local.y + en * e_local.z;
    let mut jac = SymMat3::zero();
    let basis = [eu, ev, en];
    for gi in 0..3 {
        for gj in gi..3 {
            let mut acc = R::zero();
            for li in 0..3 {
                for lj in 0..3 {
                    acc += basis[li][gi] * h_local.get(li, lj) * basis[lj][gj];
                }
            }
            jac.set(gi, gj, acc);
        }
    }
    Ok(FacetSample {
        potential: k * pot,
        field,
        field_jacobian: jac,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FacetSample<R> {
    /// Electrostatic potential, V.
    pub potential: R,
    /// E = −∇Φ, V/m.
    pub field: Vec3<R>,
    /// ∂E/∂r (symmetric, = −Hessian of Φ), V/m².
    pub field_jacobian: SymMat3<R>,
}

/// Convenience: just the field vector.
pub fn charged_facet_field<R: Real>(
    facet: &SpacerFacet<R>,
    sigma: R,
    point: Vec3<R>,
) -> Result<Vec3<R>> {
    Ok(charged_facet_sample(facet, sigma, point)?.field)
}
