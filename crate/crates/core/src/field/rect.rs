//! Analytic potential of a unit-voltage rectangular patch in an otherwise
//! grounded plane (solid-angle closed form), extended to the two-plane stack
//! by an alternating image-reflection series, with analytic derivatives
//! through third order.

use crate::geometry::{Plane, Rect};
use crate::linalg::{SymMat3, Vec3};
use crate::scalar::Real;

/// Symmetric rank-3 tensor of third derivatives, indexed by the multiset of
/// axes it differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Third<R> {
    pub xxx: R,
    pub xxy: R,
    pub xxz: R,
    pub xyy: R,
    pub xyz: R,
    pub xzz: R,
    pub yyy: R,
    pub yyz: R,
    pub yzz: R,
    pub zzz: R,
}

impl<R: Real> Third<R> {
    pub fn zero() -> Self {
        let z = R::zero();
        Self {
            xxx: z,
            xxy: z,
            xxz: z,
            xyy: z,
            xyz: z,
            xzz: z,
            yyy: z,
            yyz: z,
            yzz: z,
            zzz: z,
        }
    }

    /// Contract against a vector: returns the symmetric matrix T·g with
    /// (T·g)_{ij} = Σ_k T_{ijk} g_k.
    pub fn contract(&self, g: Vec3<R>) -> SymMat3<R> {
        SymMat3 {
            xx: self.xxx * g.x + self.xxy * g.y + self.xxz * g.z,
            xy: self.xxy * g.x + self.xyy * g.y + self.xyz * g.z,
            xz: self.xxz * g.x + self.xyz * g.y + self.xzz * g.z,
            yy: self.xyy * g.x + self.yyy * g.y + self.yyz * g.z,
            yz: self.xyz * g.x + self.yyz * g.y + self.yzz * g.z,
            zz: self.xzz * g.x + self.yzz * g.y + self.zzz * g.z,
        }
    }
}

/// Value plus derivatives of a basis potential at a point.
#[derive(Debug, Clone, Copy)]
pub struct PotentialDerivs<R> {
    pub value: R,
    pub grad: Vec3<R>,
    pub hess: SymMat3<R>,
    pub third: Third<R>,
}

impl<R: Real> PotentialDerivs<R> {
    pub fn zero() -> Self {
        Self {
            value: R::zero(),
            grad: Vec3::zero(),
            hess: SymMat3::zero(),
            third: Third::zero(),
        }
    }

    fn accumulate(&mut self, o: &Self, w: R) {
        self.value += w * o.value;
        self.grad += o.grad * w;
        self.hess = self.hess.add(&o.hess.scale(w));
        let t = &o.third;
        let s = &mut self.third;
        s.xxx += w * t.xxx;
        s.xxy += w * t.xxy;
        s.xxz += w * t.xxz;
        s.xyy += w * t.xyy;
        s.xyz += w * t.xyz;
        s.xzz += w * t.xzz;
        s.yyy += w * t.yyy;
        s.yyz += w * t.yyz;
        s.yzz += w * t.yzz;
        s.zzz += w * t.zzz;
    }

    /// Flip the sign of every derivative with an odd number of z indices
    /// (chain rule through ζ = a − z).
    fn z_mirrored(mut self) -> Self {
        self.grad.z = -self.grad.z;
        self.hess.xz = -self.hess.xz;
        self.hess.yz = -self.hess.yz;
        let t = &mut self.third;
        t.xxz = -t.xxz;
        t.xyz = -t.xyz;
        t.yyz = -t.yyz;
        t.zzz = -t.zzz;
        self
    }
}

/// Corner kernel f(u, v, ζ) = atan2(u·v, ζ·R) with R² = u² + v² + ζ², and all
/// of its partials used by the corner sums. Requires ζ > 0.
#[allow(clippy::many_single_char_names)]
fn corner<R: Real>(u: R, v: R, z: R) -> CornerDerivs<R> {
    let two = R::c(2.0);
    let r2 = u * u + v * v + z * z;
    let r = r2.sqrt();
    let p = u * u + z * z;
    let q = v * v + z * z;
    let r3 = r2 * r;
    let r5 = r2 * r3;
    let uv = u * v;
    let f = (uv).atan2(z * r);
    let fu = z * v / (r * p);
    let fv = z * u / (r * q);
    let fz = -uv * (r2 + z * z) / (r * p * q);
    let fuu = -z * v * u * (p + two * r2) / (r3 * p * p);
    let fuv = z / r3;
    let fuz = v * ((u * u + v * v) * p - two * z * z * r2) / (r3 * p * p);
    let fvv = -z * uv * (q + two * r2) / (r3 * q * q);
    let fvz = u * ((u * u + v * v) * q - two * z * z * r2) / (r3 * q * q);
    let fzz = -uv * z
        * (R::c(4.0) * r2 * p * q - (r2 + z * z) * (p * q + two * r2 * (p + q)))
        / (r3 * p * p * q * q);
    let six = R::c(6.0);
    let three = R::c(3.0);
    let four = R::c(4.0);
    let fuuu = -z * v
        * ((p + two * r2 + six * u * u) * r2 * p - u * u * (p + two * r2) * (three * p + four * r2))
        / (r5 * p * p * p);
    let fuuz = -uv
        * ((p + two * r2 + six * z * z) * r2 * p - z * z * (p + two * r2) * (three * p + four * r2))
        / (r5 * p * p * p);
    let fvvv = -z * u
        * ((q + two * r2 + six * v * v) * r2 * q - v * v * (q + two * r2) * (three * q + four * r2))
        / (r5 * q * q * q);
    let fvvz = -uv
        * ((q + two * r2 + six * z * z) * r2 * q - z * z * (q + two * r2) * (three * q + four * r2))
        / (r5 * q * q * q);
    let fuuv = -three * z * u / r5;
    let fuvv = -three * z * v / r5;
    let fuvz = (r2 - three * z * z) / r5;
    CornerDerivs {
        f,
        fu,
        fv,
        fz,
        fuu,
        fuv,
        fuz,
        fvv,
        fvz,
        fzz,
        fuuu,
        fuuv,
        fuuz,
        fuvv,
        fuvz,
        fvvv,
        fvvz,
    }
}

struct CornerDerivs<R> {
    f: R,
    fu: R,
    fv: R,
    fz: R,
    fuu: R,
    fuv: R,
    fuz: R,
    fvv: R,
    fvz: R,
    fzz: R,
    fuuu: R,
    fuuv: R,
    fuuz: R,
    fuvv: R,
    fuvz: R,
    fvvv: R,
    fvvz: R,
}

/// Half-space solution: patch at unit potential in the grounded plane ζ = 0,
/// evaluated at height ζ > 0 above the plane. `x`, `y` are in-plane
/// coordinates of the evaluation point.
pub fn halfspace_derivs<R: Real>(rect: &Rect<R>, x: R, y: R, zeta: R) -> PotentialDerivs<R> {
    let us = [rect.x_min - x, rect.x_max - x];
    let vs = [rect.y_min - y, rect.y_max - y];
    let mut acc: PotentialDerivs<R> = PotentialDerivs::zero();
    for (i, &u) in us.iter().enumerate() {
        for (j, &v) in vs.iter().enumerate() {
            let s = if (i + j) % 2 == 0 { R::one() } else { -R::one() };
            let c = corner(u, v, zeta);
            // chain rule: ∂/∂x = −∂/∂u, ∂/∂y = −∂/∂v, ∂/∂ζ = +∂/∂z.
            acc.value += s * c.f;
            acc.grad.x -= s * c.fu;
            acc.grad.y -= s * c.fv;
            acc.grad.z += s * c.fz;
            acc.hess.xx += s * c.fuu;
            acc.hess.xy += s * c.fuv;
            acc.hess.xz -= s * c.fuz;
            acc.hess.yy += s * c.fvv;
            acc.hess.yz -= s * c.fvz;
            acc.hess.zz += s * c.fzz;
            acc.third.xxx -= s * c.fuuu;
            acc.third.xxy -= s * c.fuuv;
            acc.third.xxz += s * c.fuuz;
            acc.third.xyy -= s * c.fuvv;
            acc.third.xyz += s * c.fuvz;
            acc.third.yyy -= s * c.fvvv;
            acc.third.yyz += s * c.fvvz;
        }
    }
    // The kernel is harmonic; the z-heavy third components follow from the
    // differentiated Laplace identity.
    acc.third.xzz = -acc.third.xxx - acc.third.xyy;
    acc.third.yzz = -acc.third.xxy - acc.third.yyy;
    acc.third.zzz = -acc.third.xxz - acc.third.yyz;
    let norm = R::c(0.5 / std::f64::consts::PI);
    acc.accumulate_scale(norm);
    acc
}

impl<R: Real> PotentialDerivs<R> {
    fn accumulate_scale(&mut self, s: R) {
        self.value *= s;
        self.grad = self.grad * s;
        self.hess = self.hess.scale(s);
        let t = &mut self.third;
        t.xxx *= s;
        t.xxy *= s;
        t.xxz *= s;
        t.xyy *= s;
        t.xyz *= s;
        t.xzz *= s;
        t.yyy *= s;
        t.yyz *= s;
        t.yzz *= s;
        t.zzz *= s;
    }
}

/// Image-term descriptor: evaluate the half-space solution at
/// ζ = z_sign·z + offset and weight it.
struct ImageTerm<R> {
    weight: R,
    offset: R,
    z_flip: bool,
}

fn image_terms<R: Real>(plane: Plane, separation: R, order: usize) -> Vec<ImageTerm<R>> {
    let d = separation;
    let mut terms: Vec<ImageTerm<R>> = Vec::with_capacity(order + 1);
    match plane {
        Plane::Bottom => {
            // direct: ζ = z
            terms.push(ImageTerm {
                weight: R::one(),
                offset: R::zero(),
                z_flip: false,
            });
            for k in 1..=order {
                if k % 2 == 1 {
                    // ζ = (k+1)·d − z
                    terms.push(ImageTerm {
                        weight: -R::one(),
                        offset: R::c((k + 1) as f64) * d,
                        z_flip: true,
                    });
                } else {
                    // ζ = z + k·d
                    terms.push(ImageTerm {
                        weight: R::one(),
                        offset: R::c(k as f64) * d,
                        z_flip: false,
                    });
                }
            }
        }
        Plane::Top => {
            // direct: ζ = d − z
            terms.push(ImageTerm {
                weight: R::one(),
                offset: d,
                z_flip: true,
            });
            for k in 1..=order {
                let n = (k + 1) / 2;
                if k % 2 == 1 {
                    // ζ = (2n−1)·d + z
                    terms.push(ImageTerm {
                        weight: -R::one(),
                        offset: R::c((2 * n - 1) as f64) * d,
                        z_flip: false,
                    });
                } else {
                    // ζ = (2n+1)·d − z
                    terms.push(ImageTerm {
                        weight: R::one(),
                        offset: R::c((2 * n + 1) as f64) * d,
                        z_flip: true,
                    });
                }
            }
        }
    }
    // The reflected copies alternate in sign with slowly decaying magnitude.
    // Repeated Euler tail averaging (binomial weights on the trailing terms)
    // accelerates the alternating series by ~n⁻¹ per stage. Order 0 stays
    // the untouched half-space solution.
    let n = terms.len();
    match order {
        0 => {}
        1 => {
            terms[1].weight = terms[1].weight * R::c(0.5);
        }
        2 => {
            terms[n - 2].weight = terms[n - 2].weight * R::c(0.75);
            terms[n - 1].weight = terms[n - 1].weight * R::c(0.25);
        }
        _ => {
            terms[n - 3].weight = terms[n - 3].weight * R::c(0.875);
            terms[n - 2].weight = terms[n - 2].weight * R::c(0.5);
            terms[n - 1].weight = terms[n - 1].weight * R::c(0.125);
        }
    }
    terms
}

/// Two-plane (slab) basis potential of a rectangular patch: half-space
/// solution plus `order` alternating reflected copies across the planes.
/// `order = 0` is the single-plane solution unchanged.
pub fn slab_derivs<R: Real>(
    rect: &Rect<R>,
    plane: Plane,
    separation: R,
    point: Vec3<R>,
    order: usize,
) -> PotentialDerivs<R> {
    let mut acc = PotentialDerivs::zero();
    for term in image_terms(plane, separation, order) {
        let zeta = if term.z_flip {
            term.offset - point.z
        } else {
            term.offset + point.z
        };
        let mut d = halfspace_derivs(rect, point.x, point.y, zeta);
        if term.z_flip {
            d = d.z_mirrored();
        }
        acc.accumulate(&d, term.weight);
    }
    acc
}
