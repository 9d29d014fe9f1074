//! Per-electrode basis potentials and linear superposition of a voltage set.

use super::rect::{slab_derivs, PotentialDerivs};
use crate::error::{Error, Result};
use crate::geometry::TrapGeometry;
use crate::linalg::{SymMat3, Vec3};
use crate::scalar::Real;
use crate::voltage::VoltageSet;

/// Default number of image reflections for the second plane.
pub const DEFAULT_IMAGE_ORDER: usize = 10;

/// Evaluations closer than this to a conductor plane are rejected.
pub const CONDUCTOR_STANDOFF: f64 = 1e-9;

/// Image order actually used for a patch: the reflected-copy series of a
/// patch much larger than the plane separation carries a slowly decaying
/// tail (the terms fall off only once the image distance exceeds the patch
/// size), so plate-scale patches get proportionally more terms. `base`
/// applies to patches smaller than the separation.
pub fn patch_image_order<R: Real>(rect: &crate::geometry::Rect<R>, separation: R, base: usize) -> usize {
    let dx = (rect.x_max - rect.x_min).as_f64();
    let dy = (rect.y_max - rect.y_min).as_f64();
    let diag = (dx * dx + dy * dy).sqrt();
    let boosted = (8.0 * diag / separation.as_f64()).ceil() as usize;
    boosted.clamp(base, 120)
}

/// Dimensionless basis potential of one electrode: the potential with 1 V on
/// that electrode and every other conductor grounded.
#[derive(Debug, Clone)]
pub struct BasisPotential<R> {
    pub electrode_id: String,
    rect: crate::geometry::Rect<R>,
    plane: crate::geometry::Plane,
    separation: R,
    order: usize,
}

impl<R: Real> BasisPotential<R> {
    pub fn new(geometry: &TrapGeometry<R>, electrode_id: &str, order: usize) -> Result<Self> {
        let patch = geometry
            .patch(electrode_id)
            .ok_or_else(|| Error::UnknownElectrode(electrode_id.to_string()))?;
        Ok(Self {
            electrode_id: electrode_id.to_string(),
            rect: patch.rect,
            plane: patch.plane,
            separation: geometry.plane_separation,
            order: patch_image_order(&patch.rect, geometry.plane_separation, order),
        })
    }

    /// Value, gradient (1/m), Hessian (1/m²), and third derivatives at a
    /// point strictly between the planes.
    pub fn eval(&self, point: Vec3<R>) -> Result<PotentialDerivs<R>> {
        check_between_planes(point, self.separation)?;
        Ok(slab_derivs(
            &self.rect,
            self.plane,
            self.separation,
            point,
            self.order,
        ))
    }
}

pub fn check_between_planes<R: Real>(point: Vec3<R>, separation: R) -> Result<()> {
    let guard = R::c(CONDUCTOR_STANDOFF);
    if point.z < guard || point.z > separation - guard {
        return Err(Error::BoundaryEvaluation(format!(
            "z = {} m is not strictly between the electrode planes (0, {})",
            point.z.as_f64(),
            separation.as_f64()
        )));
    }
    Ok(())
}

/// Superposed DC sample at a point: potential (V), electric field (V/m,
/// E = −∇Φ), and potential Hessian (V/m²).
#[derive(Debug, Clone, Copy)]
pub struct FieldSample<R> {
    pub potential: R,
    pub field: Vec3<R>,
    pub hessian: SymMat3<R>,
}

/// Linear superposition Σ Vᵢ·φᵢ over the named electrodes; patches without an
/// entry are grounded. Unknown names are a configuration error.
pub fn assemble_field<R: Real>(
    geometry: &TrapGeometry<R>,
    voltages: &VoltageSet<R>,
    point: Vec3<R>,
    order: usize,
) -> Result<FieldSample<R>> {
    check_between_planes(point, geometry.plane_separation)?;
    let mut potential = R::zero();
    let mut grad = Vec3::zero();
    let mut hess = SymMat3::zero();
    for (name, &volts) in voltages.iter() {
        let patch = geometry
            .patch(name)
            .ok_or_else(|| Error::UnknownElectrode(name.clone()))?;
        if volts == R::zero() {
            continue;
        }
        let n = patch_image_order(&patch.rect, geometry.plane_separation, order);
        let d = slab_derivs(&patch.rect, patch.plane, geometry.plane_separation, point, n);
        potential += volts * d.value;
        grad += d.grad * volts;
        hess = hess.add(&d.hess.scale(volts));
    }
    Ok(FieldSample {
        potential,
        field: -grad,
        hessian: hess,
    })
}

/// Aggregate basis of all RF-role patches (value, gradient, Hessian, thirds
/// per volt of drive amplitude).
pub fn rf_basis<R: Real>(
    geometry: &TrapGeometry<R>,
    point: Vec3<R>,
    order: usize,
) -> Result<PotentialDerivs<R>> {
    check_between_planes(point, geometry.plane_separation)?;
    let mut acc = PotentialDerivs::zero();
    for patch in geometry.rf_patches() {
        let d = slab_derivs(&patch.rect, patch.plane, geometry.plane_separation, point, order);
        acc.value += d.value;
        acc.grad += d.grad;
        acc.hess = acc.hess.add(&d.hess);
        acc.third.xxx += d.third.xxx;
        acc.third.xxy += d.third.xxy;
        acc.third.xxz += d.third.xxz;
        acc.third.xyy += d.third.xyy;
        acc.third.xyz += d.third.xyz;
        acc.third.xzz += d.third.xzz;
        acc.third.yyy += d.third.yyy;
        acc.third.yyz += d.third.yyz;
        acc.third.yzz += d.third.yzz;
        acc.third.zzz += d.third.zzz;
    }
    Ok(acc)
}
