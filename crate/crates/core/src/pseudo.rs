//! RF pseudopotential, total trapping potential, and Mathieu stability
//! quantities.

use crate::constants::{CA40_ION_MASS_KG, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::field::{assemble_field, charged_facet_sample, rf_basis, PotentialDerivs};
use crate::geometry::{SpacerFacet, TrapGeometry};
use crate::linalg::{SymMat3, Vec3};
use crate::scalar::Real;
use crate::voltage::VoltageSet;

/// RF drive: amplitude (volts) and angular frequency (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfDrive<R> {
    pub v_rf: R,
    pub omega_rf: R,
}

impl<R: Real> RfDrive<R> {
    pub fn new(v_rf: R, omega_rf: R) -> Self {
        assert!(v_rf >= R::zero(), "RF amplitude must be >= 0");
        assert!(omega_rf > R::zero(), "RF angular frequency must be > 0");
        Self { v_rf, omega_rf }
    }

    pub fn from_mhz(v_rf: f64, freq_mhz: f64) -> Self {
        Self::new(R::c(v_rf), R::c(2.0 * std::f64::consts::PI * freq_mhz * 1e6))
    }
}

/// Trapped species: mass (kg) and charge (C).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonSpecies<R> {
    pub mass: R,
    pub charge: R,
}

impl<R: Real> IonSpecies<R> {
    pub fn new(mass: R, charge: R) -> Self {
        assert!(mass > R::zero() && charge > R::zero());
        Self { mass, charge }
    }

    /// Singly ionized calcium-40.
    pub fn ca40() -> Self {
        Self::new(R::c(CA40_ION_MASS_KG), R::c(ELEMENTARY_CHARGE))
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ca40" | "ca40+" => Some(Self::ca40()),
            _ => None,
        }
    }
}

/// Stray-charge model: uniformly charged facets (σ in e⁻/µm²) plus a uniform
/// offset field.
#[derive(Debug, Clone, Default)]
pub struct StrayModel<R> {
    pub charged_facets: Vec<(SpacerFacet<R>, R)>,
    pub e_offset: Option<Vec3<R>>,
}

/// Energy sample of the total potential: value (J), gradient (J/m), and
/// Hessian (J/m²).
#[derive(Debug, Clone, Copy)]
pub struct EnergySample<R> {
    pub energy: R,
    pub grad: Vec3<R>,
    pub hess: SymMat3<R>,
}

/// The full trapping potential: DC electrostatics, RF pseudopotential, and
/// optional stray terms, with analytic derivatives throughout.
#[derive(Debug, Clone)]
pub struct PotentialModel<R> {
    pub geometry: TrapGeometry<R>,
    pub dc: VoltageSet<R>,
    pub rf: RfDrive<R>,
    pub species: IonSpecies<R>,
    pub stray: Option<StrayModel<R>>,
    pub image_order: usize,
}

impl<R: Real> PotentialModel<R> {
    pub fn new(
        geometry: TrapGeometry<R>,
        dc: VoltageSet<R>,
        rf: RfDrive<R>,
        species: IonSpecies<R>,
    ) -> Result<Self> {
        dc.validate(&geometry, R::c(f64::INFINITY))?;
        Ok(Self {
            geometry,
            dc,
            rf,
            species,
            stray: None,
            image_order: crate::field::DEFAULT_IMAGE_ORDER,
        })
    }

    /// Pseudopotential prefactor (qV)²/(4mΩ²), J·m².
    fn pseudo_prefactor(&self) -> R {
        let qv = self.species.charge * self.rf.v_rf;
        qv * qv
            / (R::c(4.0) * self.species.mass * self.rf.omega_rf * self.rf.omega_rf)
    }

    /// RF basis derivatives at a point (per volt of drive amplitude).
    pub fn rf_basis_derivs(&self, point: Vec3<R>) -> Result<PotentialDerivs<R>> {
        rf_basis(&self.geometry, point, self.image_order)
    }

    /// Pseudopotential energy (J) at a point.
    pub fn pseudopotential(&self, point: Vec3<R>) -> Result<R> {
        Ok(self.pseudo_sample(point)?.energy)
    }

    /// Pseudopotential with gradient and Hessian.
    pub fn pseudo_sample(&self, point: Vec3<R>) -> Result<EnergySample<R>> {
        let b = self.rf_basis_derivs(point)?;
        let c = self.pseudo_prefactor();
        let two_c = R::c(2.0) * c;
        let energy = c * b.grad.norm2();
        let grad = b.hess.mul_vec(b.grad) * two_c;
        let hess = b.hess.squared().add(&b.third.contract(b.grad)).scale(two_c);
        Ok(EnergySample { energy, grad, hess })
    }

    /// Static (DC + stray) potential Φ, its field E = −∇Φ, and Hessian.
    pub fn static_sample(&self, point: Vec3<R>) -> Result<crate::field::FieldSample<R>> {
        let mut s = assemble_field(&self.geometry, &self.dc, point, self.image_order)?;
        if let Some(stray) = &self.stray {
            for (facet, sigma) in &stray.charged_facets {
                let f = charged_facet_sample(facet, *sigma, point)?;
                s.potential += f.potential;
                s.field += f.field;
                // field jacobian = −Hessian of the potential
                s.hessian = s.hessian.add(&f.field_jacobian.scale(-R::one()));
            }
            if let Some(e0) = stray.e_offset {
                s.potential += -(e0.dot(point));
                s.field += e0;
            }
        }
        Ok(s)
    }

    /// Total trapping energy q·Φ_static + Φ̄_rf with consistent derivatives.
    pub fn total_energy(&self, point: Vec3<R>) -> Result<EnergySample<R>> {
        let stat = self.static_sample(point)?;
        let pseudo = self.pseudo_sample(point)?;
        let q = self.species.charge;
        Ok(EnergySample {
            energy: q * stat.potential + pseudo.energy,
            grad: -stat.field * q + pseudo.grad,
            hess: stat.hessian.scale(q).add(&pseudo.hess),
        })
    }

    /// Second-derivative tensor of the RF basis potential at a point (per
    /// volt applied), 1/m².
    pub fn quadrupole_tensor(&self, point: Vec3<R>) -> Result<SymMat3<R>> {
        Ok(self.rf_basis_derivs(point)?.hess)
    }

    /// Magnitude of the RF electric field at a point, V/m.
    pub fn rf_field_magnitude(&self, point: Vec3<R>) -> Result<R> {
        Ok(self.rf_basis_derivs(point)?.grad.norm() * self.rf.v_rf)
    }

    /// Dimensionless Mathieu drive parameter at an RF null, with the
    /// stability flag `q < 0.9`.
    pub fn mathieu_q(&self, at: Vec3<R>) -> Result<MathieuQ<R>> {
        let b = self.rf_basis_derivs(at)?;
        let e_rf = b.grad.norm() * self.rf.v_rf;
        if e_rf > R::c(RF_NULL_FIELD_TOL) {
            return Err(Error::NotStationary(format!(
                "|E_rf| = {:.3e} V/m exceeds the {:.0e} V/m null tolerance",
                e_rf.as_f64(),
                RF_NULL_FIELD_TOL
            )));
        }
        let (vals, _) = b.hess.eigh();
        let scale = R::c(2.0) * self.species.charge * self.rf.v_rf
            / (self.species.mass * self.rf.omega_rf * self.rf.omega_rf);
        let q = vals
            .iter()
            .map(|l| (scale * *l).abs())
            .fold(R::zero(), R::max);
        Ok(MathieuQ {
            q,
            stable: q < R::c(0.9),
        })
    }

    /// Locate the RF null near `seed` by damped Newton descent on |∇φ_rf|².
    pub fn solve_rf_null(&self, seed: Vec3<R>) -> Result<Vec3<R>> {
        let mut p = seed;
        let gtol = R::c(RF_NULL_FIELD_TOL) / self.rf.v_rf.max(R::c(1e-6));
        let mut tau = R::c(1e-12);
        let mut w_prev = {
            let b = self.rf_basis_derivs(p)?;
            b.grad.norm2()
        };
        for _ in 0..200 {
            let b = self.rf_basis_derivs(p)?;
            if b.grad.norm() < gtol {
                return Ok(p);
            }
            let grad_w = b.hess.mul_vec(b.grad) * R::c(2.0);
            let hess_w = b.hess.squared().add(&b.third.contract(b.grad)).scale(R::c(2.0));
            // damp until the step decreases |∇φ|²
            let mut stepped = false;
            for _ in 0..60 {
                let damped = hess_w.add(&SymMat3::diag(tau, tau, tau));
                if let Some(step) = solve_sym3(&damped, -grad_w) {
                    let max_step = self.geometry.plane_separation * R::c(0.25);
                    let n = step.norm();
                    let step = if n > max_step { step * (max_step / n) } else { step };
                    let cand = p + step;
                    if let Ok(bc) = self.rf_basis_derivs(cand) {
                        let w = bc.grad.norm2();
                        if w < w_prev {
                            p = cand;
                            w_prev = w;
                            tau = (tau * R::c(0.3)).max(R::c(1e-14));
                            stepped = true;
                            break;
                        }
                    }
                }
                tau = tau * R::c(10.0) + R::c(1e-12);
            }
            if !stepped {
                break;
            }
        }
        let b = self.rf_basis_derivs(p)?;
        if b.grad.norm() < gtol {
            Ok(p)
        } else {
            Err(Error::NonConvergence(format!(
                "RF null search stalled at |E_rf| = {:.3e} V/m",
                (b.grad.norm() * self.rf.v_rf).as_f64()
            )))
        }
    }
}

/// |E_rf| below this counts as an RF null, V/m.
pub const RF_NULL_FIELD_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct MathieuQ<R> {
    pub q: R,
    pub stable: bool,
}

/// Depth-parameterized trap efficiency η = 4D/(q·V_rf); `depth_ev` in eV and
/// `v_rf` in volts.
pub fn trap_efficiency<R: Real>(depth_ev: R, q: R, v_rf: R) -> R {
    assert!(q > R::zero() && v_rf > R::zero());
    R::c(4.0) * depth_ev / (q * v_rf)
}

fn solve_sym3<R: Real>(m: &SymMat3<R>, b: Vec3<R>) -> Option<Vec3<R>> {
    // direct 3x3 solve by Cramer's rule
    let a = [
        [m.xx, m.xy, m.xz],
        [m.xy, m.yy, m.yz],
        [m.xz, m.yz, m.zz],
    ];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < R::c(1e-300) {
        return None;
    }
    let rhs = [b.x, b.y, b.z];
    let mut x = [R::zero(); 3];
    for k in 0..3 {
        let mut ak = a;
        for row in 0..3 {
            ak[row][k] = rhs[row];
        }
        let dk = ak[0][0] * (ak[1][1] * ak[2][2] - ak[1][2] * ak[2][1])
            - ak[0][1] * (ak[1][0] * ak[2][2] - ak[1][2] * ak[2][0])
            + ak[0][2] * (ak[1][0] * ak[2][1] - ak[1][1] * ak[2][0]);
        x[k] = dk / det;
    }
    Some(Vec3::new(x[0], x[1], x[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::paper_preset;
    use crate::voltage::{preset_1ev, RF_VOLTS_1EV};
    use approx::assert_relative_eq;

    fn model() -> PotentialModel<f64> {
        PotentialModel::new(
            paper_preset(),
            preset_1ev(),
            RfDrive::from_mhz(RF_VOLTS_1EV, 20.6),
            IonSpecies::ca40(),
        )
        .unwrap()
    }

    #[test]
    fn pseudopotential_zero_at_null_and_nonnegative() {
        let m = model();
        let null = m
            .solve_rf_null(Vec3::new(0.0, 0.0, 2e-4))
            .expect("null found");
        let u0 = m.pseudopotential(null).unwrap();
        assert!(u0 >= 0.0);
        assert!(u0 < 1e-28, "pseudopotential at null should vanish: {u0}");
        for &(x, y, z) in &[(1e-4, 5e-5, 1e-4), (0.0, 3e-4, 3e-4), (-2e-4, -1e-4, 2e-4)] {
            assert!(m.pseudopotential(Vec3::new(x, y, z)).unwrap() >= 0.0);
        }
    }

    #[test]
    fn pseudopotential_quadratic_in_amplitude() {
        let mut m = model();
        let p = Vec3::new(5e-5, 8e-5, 2.4e-4);
        let u1 = m.pseudopotential(p).unwrap();
        m.rf.v_rf *= 2.0;
        let u2 = m.pseudopotential(p).unwrap();
        assert_relative_eq!(u2, 4.0 * u1, max_relative = 1e-13);
    }

    #[test]
    fn pseudopotential_mass_frequency_scaling() {
        // Φ̄ at (m, Ω) equals Φ̄ at (m', Ω') when mΩ² = m'Ω'²
        let m1 = model();
        let mut m2 = model();
        m2.species.mass *= 4.0;
        m2.rf.omega_rf /= 2.0;
        let p = Vec3::new(2e-5, -6e-5, 1.7e-4);
        assert_relative_eq!(
            m1.pseudopotential(p).unwrap(),
            m2.pseudopotential(p).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn total_energy_gradient_matches_finite_differences() {
        let m = model();
        let p = Vec3::new(3e-5, -2e-5, 2.1e-4);
        let s = m.total_energy(p).unwrap();
        let h = 1e-9;
        for axis in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp.set(axis, p[axis] + h);
            pm.set(axis, p[axis] - h);
            let up = m.total_energy(pp).unwrap().energy;
            let um = m.total_energy(pm).unwrap().energy;
            let fd = (up - um) / (2.0 * h);
            assert_relative_eq!(s.grad[axis], fd, max_relative = 1e-6, epsilon = 1e-22);
        }
    }

    #[test]
    fn total_energy_hessian_matches_finite_differences() {
        let m = model();
        let p = Vec3::new(-4e-5, 6e-5, 1.9e-4);
        let s = m.total_energy(p).unwrap();
        let h = 2e-9;
        for axis in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp.set(axis, p[axis] + h);
            pm.set(axis, p[axis] - h);
            let gp = m.total_energy(pp).unwrap().grad;
            let gm = m.total_energy(pm).unwrap().grad;
            for k in 0..3 {
                let fd = (gp[k] - gm[k]) / (2.0 * h);
                let scale = s.hess.max_abs();
                assert!(
                    (s.hess.get(k, axis) - fd).abs() < 2e-6 * scale,
                    "hessian ({k},{axis}): {} vs fd {}",
                    s.hess.get(k, axis),
                    fd
                );
            }
        }
    }

    #[test]
    fn zero_rf_zero_stray_reduces_to_dc() {
        let mut m = model();
        m.rf.v_rf = 0.0;
        let p = Vec3::new(1e-5, 2e-5, 2e-4);
        let total = m.total_energy(p).unwrap().energy;
        let dc = m.static_sample(p).unwrap().potential * m.species.charge;
        assert_relative_eq!(total, dc, max_relative = 1e-14);
    }

    #[test]
    fn mathieu_q_preconditions_and_scaling() {
        let m = model();
        let null = m.solve_rf_null(Vec3::new(0.0, 0.0, 2e-4)).unwrap();
        let q1 = m.mathieu_q(null).unwrap();
        assert!(q1.stable);
        // doubling the drive frequency divides q by 4
        let mut m2 = model();
        m2.rf.omega_rf *= 2.0;
        let q2 = m2.mathieu_q(null).unwrap();
        assert_relative_eq!(q2.q, q1.q / 4.0, max_relative = 1e-12);
        // off-null evaluation is a precondition error
        let off = Vec3::new(0.0, 2e-4, 1.1e-4);
        assert!(matches!(m.mathieu_q(off), Err(Error::NotStationary(_))));
    }

    #[test]
    fn efficiency_ideal_quadrupole_is_one() {
        assert_relative_eq!(
            trap_efficiency(0.25 * 0.3 * 100.0, 0.3, 100.0),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn stray_terms_enter_total_energy() {
        let mut m = model();
        let p = Vec3::new(0.0, 0.0, 2e-4);
        let base = m.total_energy(p).unwrap().energy;
        m.stray = Some(StrayModel {
            charged_facets: vec![],
            e_offset: Some(Vec3::new(0.0, 0.0, 100.0)),
        });
        let with = m.total_energy(p).unwrap();
        // potential of a uniform field: −E·r, energy shift q(−E·r)
        let expected = base + m.species.charge * (-100.0 * p.z);
        assert_relative_eq!(with.energy, expected, max_relative = 1e-12);
        // field contributes to the gradient
        assert_relative_eq!(
            with.grad.z,
            model().total_energy(p).unwrap().grad.z - m.species.charge * 100.0,
            max_relative = 1e-9
        );
    }
}
