//! Trap geometry: electrode patches on two parallel planes plus dielectric
//! spacer facets, with validation, a built-in device preset, and a
//! structured-text config format (see [`config`]).

pub mod config;
mod preset;

pub use preset::paper_preset;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Bottom,
    Top,
}

impl Plane {
    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Bottom => "bottom",
            Plane::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Dc,
    Rf,
    Ground,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Dc => "dc",
            Role::Rf => "rf",
            Role::Ground => "ground",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "dc" => Some(Role::Dc),
            "rf" => Some(Role::Rf),
            "ground" => Some(Role::Ground),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle in an electrode plane, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<R> {
    pub x_min: R,
    pub x_max: R,
    pub y_min: R,
    pub y_max: R,
}

impl<R: Real> Rect<R> {
    pub fn new(x_min: R, x_max: R, y_min: R, y_max: R) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn from_um(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self::new(
            R::c(x_min * 1e-6),
            R::c(x_max * 1e-6),
            R::c(y_min * 1e-6),
            R::c(y_max * 1e-6),
        )
    }

    pub fn has_positive_area(&self) -> bool {
        self.x_max > self.x_min && self.y_max > self.y_min
    }

    /// Open-interior overlap test.
    pub fn overlaps(&self, o: &Self) -> bool {
        self.x_min < o.x_max && o.x_min < self.x_max && self.y_min < o.y_max && o.y_min < self.y_max
    }

    pub fn mirrored_y(&self) -> Self {
        Self::new(self.x_min, self.x_max, -self.y_max, -self.y_min)
    }

    pub fn translated(&self, dx: R, dy: R) -> Self {
        Self::new(self.x_min + dx, self.x_max + dx, self.y_min + dy, self.y_max + dy)
    }

    pub fn approx_eq(&self, o: &Self, tol: R) -> bool {
        scalar_close(self.x_min, o.x_min, tol)
            && scalar_close(self.x_max, o.x_max, tol)
            && scalar_close(self.y_min, o.y_min, tol)
            && scalar_close(self.y_max, o.y_max, tol)
    }
}

fn scalar_close<R: Real>(a: R, b: R, rel: R) -> bool {
    let scale = a.abs().max(b.abs()).max(R::c(1e-30));
    (a - b).abs() <= rel * scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodePatch<R> {
    pub id: String,
    pub plane: Plane,
    pub rect: Rect<R>,
    pub role: Role,
}

/// Planar rectangular dielectric sidewall spanning vertically between the
/// planes: a horizontal segment from `start` to `end` extruded over
/// `[z_min, z_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacerFacet<R> {
    pub id: String,
    /// (x, y) of one end of the wall's footprint, meters.
    pub start: (R, R),
    /// (x, y) of the other end, meters.
    pub end: (R, R),
    pub z_min: R,
    pub z_max: R,
    pub notes: String,
}

impl<R: Real> SpacerFacet<R> {
    pub fn length(&self) -> R {
        let dx = self.end.0 - self.start.0;
        let dy = self.end.1 - self.start.1;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn height(&self) -> R {
        self.z_max - self.z_min
    }

    pub fn area(&self) -> R {
        self.length() * self.height()
    }

    /// Center of the facet rectangle.
    pub fn center(&self) -> Vec3<R> {
        let half = R::c(0.5);
        Vec3::new(
            (self.start.0 + self.end.0) * half,
            (self.start.1 + self.end.1) * half,
            (self.z_min + self.z_max) * half,
        )
    }

    /// Local orthonormal frame (u along the wall, v vertical, n normal).
    pub fn frame(&self) -> (Vec3<R>, Vec3<R>, Vec3<R>) {
        let u = Vec3::new(self.end.0 - self.start.0, self.end.1 - self.start.1, R::zero())
            .normalized();
        let v = Vec3::new(R::zero(), R::zero(), R::one());
        let n = u.cross(v);
        (u, v, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapGeometry<R> {
    /// Distance between the two electrode planes, meters.
    pub plane_separation: R,
    /// Width of the detection slit between the top electrodes, meters.
    /// Kept as metadata: with electrically tied top electrodes the opening is
    /// modeled by splitting it between them (gapless-plane convention).
    pub slit_width: R,
    pub patches: Vec<ElectrodePatch<R>>,
    pub facets: Vec<SpacerFacet<R>>,
}

impl<R: Real> TrapGeometry<R> {
    /// Validate and return the geometry.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.plane_separation <= R::zero() {
            return Err(Error::Validation(
                "plane separation must be positive".into(),
            ));
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.patches {
            if !p.rect.has_positive_area() {
                return Err(Error::Validation(format!(
                    "patch '{}' has non-positive area",
                    p.id
                )));
            }
            if !ids.insert(p.id.clone()) {
                return Err(Error::Validation(format!("duplicate patch id '{}'", p.id)));
            }
        }
        for (i, a) in self.patches.iter().enumerate() {
            for b in self.patches.iter().skip(i + 1) {
                if a.plane == b.plane && a.rect.overlaps(&b.rect) {
                    return Err(Error::Validation(format!(
                        "patches '{}' and '{}' overlap on the {} plane",
                        a.id,
                        b.id,
                        a.plane.as_str()
                    )));
                }
            }
        }
        let mut fids = std::collections::BTreeSet::new();
        for f in &self.facets {
            if !fids.insert(f.id.clone()) || ids.contains(&f.id) {
                return Err(Error::Validation(format!("duplicate facet id '{}'", f.id)));
            }
            if f.z_max <= f.z_min
                || f.z_min < -R::c(1e-12)
                || f.z_max > self.plane_separation + R::c(1e-12)
            {
                return Err(Error::Validation(format!(
                    "facet '{}' must span vertically between the planes",
                    f.id
                )));
            }
            if f.length() <= R::zero() {
                return Err(Error::Validation(format!(
                    "facet '{}' has zero footprint length",
                    f.id
                )));
            }
        }
        Ok(())
    }

    pub fn patch(&self, id: &str) -> Option<&ElectrodePatch<R>> {
        self.patches.iter().find(|p| p.id == id)
    }

    pub fn facet(&self, id: &str) -> Option<&SpacerFacet<R>> {
        self.facets.iter().find(|f| f.id == id)
    }

    /// Patches that may carry a DC voltage (everything but the RF rails).
    pub fn dc_patches(&self) -> impl Iterator<Item = &ElectrodePatch<R>> {
        self.patches.iter().filter(|p| p.role == Role::Dc)
    }

    pub fn rf_patches(&self) -> impl Iterator<Item = &ElectrodePatch<R>> {
        self.patches.iter().filter(|p| p.role == Role::Rf)
    }

    /// Rigid translation in the plane; used by invariance checks and the
    /// misalignment propagation.
    pub fn translated(&self, dx: R, dy: R) -> Self {
        let mut g = self.clone();
        for p in &mut g.patches {
            p.rect = p.rect.translated(dx, dy);
        }
        for f in &mut g.facets {
            f.start = (f.start.0 + dx, f.start.1 + dy);
            f.end = (f.end.0 + dx, f.end.1 + dy);
        }
        g
    }

    /// Copy with the RF rails displaced laterally (stack-misalignment model).
    pub fn with_rf_shifted(&self, dy: R) -> Self {
        let mut g = self.clone();
        for p in &mut g.patches {
            if p.role == Role::Rf {
                p.rect = p.rect.translated(R::zero(), dy);
            }
        }
        g
    }

    /// Copy with a different plane separation (spacer-thickness model).
    /// Facets are stretched with the gap.
    pub fn with_separation(&self, separation: R) -> Self {
        let mut g = self.clone();
        let ratio = separation / self.plane_separation;
        g.plane_separation = separation;
        for f in &mut g.facets {
            f.z_min = f.z_min * ratio;
            f.z_max = f.z_max * ratio;
        }
        g
    }

    /// Field-by-field comparison up to `rel` relative tolerance on lengths
    /// (serialization converts units, so bit-exact equality is not the
    /// contract).
    pub fn approx_eq(&self, o: &Self, rel: R) -> bool {
        if self.patches.len() != o.patches.len() || self.facets.len() != o.facets.len() {
            return false;
        }
        if !scalar_close(self.plane_separation, o.plane_separation, rel)
            || !scalar_close(self.slit_width, o.slit_width, rel)
        {
            return false;
        }
        for (a, b) in self.patches.iter().zip(&o.patches) {
            if a.id != b.id || a.plane != b.plane || a.role != b.role {
                return false;
            }
            if !a.rect.approx_eq(&b.rect, rel) {
                return false;
            }
        }
        for (a, b) in self.facets.iter().zip(&o.facets) {
            if a.id != b.id
                || !scalar_close(a.start.0, b.start.0, rel)
                || !scalar_close(a.start.1, b.start.1, rel)
                || !scalar_close(a.end.0, b.end.0, rel)
                || !scalar_close(a.end.1, b.end.1, rel)
                || !scalar_close(a.z_min, b.z_min, rel.max(R::c(1e-9)))
                || !scalar_close(a.z_max, b.z_max, rel)
            {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(id: &str, plane: Plane, rect: Rect<f64>, role: Role) -> ElectrodePatch<f64> {
        ElectrodePatch {
            id: id.into(),
            plane,
            rect,
            role,
        }
    }

    #[test]
    fn rejects_overlap() {
        let g = TrapGeometry {
            plane_separation: 400e-6,
            slit_width: 0.0,
            patches: vec![
                patch("a", Plane::Bottom, Rect::from_um(0.0, 100.0, 0.0, 100.0), Role::Dc),
                patch("b", Plane::Bottom, Rect::from_um(50.0, 150.0, 50.0, 150.0), Role::Dc),
            ],
            facets: vec![],
        };
        let err = g.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'a'") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn abutting_patches_are_fine() {
        let g = TrapGeometry {
            plane_separation: 400e-6,
            slit_width: 0.0,
            patches: vec![
                patch("a", Plane::Bottom, Rect::from_um(0.0, 100.0, 0.0, 100.0), Role::Dc),
                patch("b", Plane::Bottom, Rect::from_um(100.0, 200.0, 0.0, 100.0), Role::Dc),
                // same extent on the other plane is also fine
                patch("c", Plane::Top, Rect::from_um(0.0, 100.0, 0.0, 100.0), Role::Dc),
            ],
            facets: vec![],
        };
        g.validate().unwrap();
    }

    #[test]
    fn rejects_duplicate_id_and_empty_rect() {
        let g = TrapGeometry {
            plane_separation: 400e-6,
            slit_width: 0.0,
            patches: vec![
                patch("a", Plane::Bottom, Rect::from_um(0.0, 100.0, 0.0, 100.0), Role::Dc),
                patch("a", Plane::Top, Rect::from_um(0.0, 100.0, 0.0, 100.0), Role::Dc),
            ],
            facets: vec![],
        };
        assert!(g.validate().is_err());

        let g = TrapGeometry::<f64> {
            plane_separation: 400e-6,
            slit_width: 0.0,
            patches: vec![patch(
                "a",
                Plane::Bottom,
                Rect::from_um(100.0, 100.0, 0.0, 100.0),
                Role::Dc,
            )],
            facets: vec![],
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn facet_frame_is_orthonormal() {
        let f = SpacerFacet::<f64> {
            id: "s".into(),
            start: (1e-3, 2e-3),
            end: (2e-3, 1e-3),
            z_min: 0.0,
            z_max: 400e-6,
            notes: String::new(),
        };
        let (u, v, n) = f.frame();
        assert!(u.dot(v).abs() < 1e-14);
        assert!(u.dot(n).abs() < 1e-14);
        assert!((n.norm() - 1.0).abs() < 1e-14);
    }
}
