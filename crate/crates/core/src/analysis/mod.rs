//! Trap analysis: equilibrium search, secular modes and angles, escape-barrier
//! depth, and anharmonicity ratios.

pub mod depth;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::pseudo::{EnergySample, PotentialModel};
use crate::scalar::Real;

/// Anything that can report trapping energy with derivatives at a point.
/// Implemented by [`PotentialModel`] and, in tests, by synthetic potentials.
pub trait EnergyLandscape<R: Real>: Sync {
    fn sample(&self, point: Vec3<R>) -> Result<EnergySample<R>>;
}

impl<R: Real> EnergyLandscape<R> for PotentialModel<R> {
    fn sample(&self, point: Vec3<R>) -> Result<EnergySample<R>> {
        self.total_energy(point)
    }
}

impl<R: Real, F> EnergyLandscape<R> for F
where
    F: Fn(Vec3<R>) -> Result<EnergySample<R>> + Sync,
{
    fn sample(&self, point: Vec3<R>) -> Result<EnergySample<R>> {
        self(point)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<R> {
    /// Convergence threshold on |∇U|, newtons.
    pub force_tol: R,
    pub max_iter: usize,
    /// Cap on a single Newton step, meters.
    pub max_step: R,
}

impl<R: Real> Default for MinimizeOptions<R> {
    fn default() -> Self {
        Self {
            force_tol: R::c(1e-22),
            max_iter: 300,
            max_step: R::c(40e-6),
        }
    }
}

/// Damped Newton descent to a local minimum of the total potential.
/// The returned point has |∇U| below tolerance and a positive-definite
/// Hessian; a saddle or ridge is reported as "not a trapping point".
pub fn find_minimum<R: Real, L: EnergyLandscape<R>>(
    landscape: &L,
    seed: Vec3<R>,
    opts: &MinimizeOptions<R>,
) -> Result<Vec3<R>> {
    let mut p = seed;
    let mut e_prev = landscape.sample(p)?.energy;
    let mut tau = R::zero();
    for _ in 0..opts.max_iter {
        let s = landscape.sample(p)?;
        if s.grad.norm() < opts.force_tol {
            break;
        }
        // make the Hessian positive definite by eigenvalue flooring
        let (vals, vecs) = s.hess.eigh();
        let floor = vals[2].abs().max(R::c(1e-300)) * R::c(1e-8);
        let mut stepped = false;
        for _ in 0..50 {
            let mut step = Vec3::zero();
            for k in 0..3 {
                let lam = vals[k].max(floor) + tau;
                let coef = vecs[k].dot(s.grad) / lam;
                step += vecs[k] * (-coef);
            }
            let n = step.norm();
            let step = if n > opts.max_step {
                step * (opts.max_step / n)
            } else {
                step
            };
            let cand = p + step;
            match landscape.sample(cand) {
                Ok(sc) if sc.energy <= e_prev || s.grad.norm() < opts.force_tol * R::c(1e3) => {
                    p = cand;
                    e_prev = sc.energy;
                    tau = tau * R::c(0.25);
                    stepped = true;
                    break;
                }
                _ => {
                    tau = tau * R::c(10.0) + vals[2].abs() * R::c(1e-6) + R::c(1e-300);
                }
            }
        }
        if !stepped {
            break;
        }
    }
    let s = landscape.sample(p)?;
    if s.grad.norm() >= opts.force_tol {
        return Err(Error::NonConvergence(format!(
            "minimum search stalled with |∇U| = {:.3e} N",
            s.grad.norm().as_f64()
        )));
    }
    let (vals, _) = s.hess.eigh();
    if vals[0] <= R::zero() {
        return Err(Error::NotTrappingPoint(format!(
            "Hessian eigenvalues ({:.3e}, {:.3e}, {:.3e}) are not all positive",
            vals[0].as_f64(),
            vals[1].as_f64(),
            vals[2].as_f64()
        )));
    }
    Ok(p)
}

pub const MODE_LABELS: [&str; 3] = ["axial", "radial-in-plane", "radial-out-of-plane"];

/// Secular-mode solution at a stationary point. Index order is
/// [axial, radial-in-plane, radial-out-of-plane] (see [`MODE_LABELS`]).
#[derive(Debug, Clone)]
pub struct ModeSolution<R> {
    pub r0: Vec3<R>,
    /// Secular frequencies, Hz; anti-confining curvature carries a negative
    /// sign.
    pub frequencies: [R; 3],
    /// Orthonormal unit mode vectors.
    pub vectors: [Vec3<R>; 3],
    /// Rotation of the radial eigenbasis about x̂ from (ŷ, ẑ), degrees in
    /// [0, 45].
    pub theta_deg: R,
    /// Per-mode angle to the xy-plane, degrees.
    pub phi_deg: [R; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions<R> {
    /// Stationarity check threshold on |∇U|, newtons.
    pub stationary_tol: R,
}

impl<R: Real> Default for ModeOptions<R> {
    fn default() -> Self {
        Self {
            stationary_tol: R::c(1e-16),
        }
    }
}

/// Eigendecompose the Hessian at a stationary point into secular modes.
pub fn mode_solve<R: Real, L: EnergyLandscape<R>>(
    landscape: &L,
    r0: Vec3<R>,
    mass: R,
    opts: &ModeOptions<R>,
) -> Result<ModeSolution<R>> {
    let s = landscape.sample(r0)?;
    if s.grad.norm() > opts.stationary_tol {
        return Err(Error::NotStationary(format!(
            "|∇U| = {:.3e} N at the supplied point",
            s.grad.norm().as_f64()
        )));
    }
    let (vals, vecs) = s.hess.eigh();
    let two_pi = R::c(2.0 * std::f64::consts::PI);
    let freq = |lam: R| {
        let w2 = lam / mass;
        let f = (w2.abs()).sqrt() / two_pi;
        if w2 < R::zero() {
            -f
        } else {
            f
        }
    };

    // Assign labels by maximal overlap with x̂/ŷ/ẑ: pick the permutation
    // maximizing total overlap; break ties by ascending |frequency|.
    let axes = [
        Vec3::new(R::one(), R::zero(), R::zero()),
        Vec3::new(R::zero(), R::one(), R::zero()),
        Vec3::new(R::zero(), R::zero(), R::one()),
    ];
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut best = perms[0];
    let mut best_score = R::c(-1.0);
    let mut best_tiebreak = R::c(f64::INFINITY);
    for perm in perms {
        let mut score = R::zero();
        let mut tiebreak = R::zero();
        for (axis, &mode) in perm.iter().enumerate() {
            score += vecs[mode].dot(axes[axis]).abs();
            tiebreak += freq(vals[mode]).abs() * R::c((axis + 1) as f64);
        }
        let better = score > best_score + R::c(1e-12)
            || (score > best_score - R::c(1e-12) && tiebreak < best_tiebreak);
        if better {
            best = perm;
            best_score = score;
            best_tiebreak = tiebreak;
        }
    }

    let frequencies = [
        freq(vals[best[0]]),
        freq(vals[best[1]]),
        freq(vals[best[2]]),
    ];
    let vectors = [
        vecs[best[0]].canonical_sign(),
        vecs[best[1]].canonical_sign(),
        vecs[best[2]].canonical_sign(),
    ];
    let (theta_deg, phi_deg) = angles_from_vectors(&vectors);
    Ok(ModeSolution {
        r0,
        frequencies,
        vectors,
        theta_deg,
        phi_deg,
    })
}

/// θ (radial rotation about x̂, degrees in [0, 45]) and per-mode φ
/// (angle to the xy-plane, degrees).
pub fn mode_angles<R: Real>(solution: &ModeSolution<R>) -> (R, [R; 3]) {
    (solution.theta_deg, solution.phi_deg)
}

fn angles_from_vectors<R: Real>(vectors: &[Vec3<R>; 3]) -> (R, [R; 3]) {
    let deg = R::c(180.0 / std::f64::consts::PI);
    let ip = vectors[1];
    let raw = ip.z.abs().atan2(ip.y.abs()) * deg;
    let theta = raw.min(R::c(90.0) - raw);
    let phi = [
        vectors[0].z.abs().min(R::one()).asin() * deg,
        vectors[1].z.abs().min(R::one()).asin() * deg,
        vectors[2].z.abs().min(R::one()).asin() * deg,
    ];
    (theta, phi)
}

/// Quartic-to-quadratic anharmonicity ratios of the trapping potential.
///
/// For each axis, an even quartic p₂s² + p₄s⁴ is fitted to 41 samples on
/// [−d, +d] through `r0`, and p₄d²/p₂ is returned for that axis's offset d.
pub fn anharmonicity_ratios<R: Real, L: EnergyLandscape<R>>(
    landscape: &L,
    r0: Vec3<R>,
    offsets: [R; 3],
) -> Result<[R; 3]> {
    let n = 41usize;
    let u0 = landscape.sample(r0)?.energy;
    let mut out = [R::zero(); 3];
    for axis in 0..3 {
        let d = offsets[axis];
        let mut rows: Vec<(Vec<R>, R, R)> = Vec::with_capacity(n);
        let mut scale = R::zero();
        for k in 0..n {
            let t = R::c(k as f64 / (n - 1) as f64) * R::c(2.0) - R::one();
            let s = t * d;
            let mut p = r0;
            p.set(axis, r0[axis] + s);
            let u = landscape.sample(p)?.energy - u0;
            scale = scale.max(u.abs());
            rows.push((vec![s * s, s * s * s * s], u, R::one()));
        }
        let fit = crate::linalg::weighted_lstsq(&rows, 2)
            .map_err(|combo| Error::DegenerateFit { combination: combo })?;
        let (p2, p4) = (fit.params[0], fit.params[1]);
        if p2.abs() * d * d < R::c(1e-9) * scale.max(R::c(1e-300)) {
            return Err(Error::DegenerateCurvature(format!(
                "axis {axis}: quadratic term {:.3e} is negligible against the sampled scale",
                p2.as_f64()
            )));
        }
        out[axis] = p4 * d * d / p2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMat3;
    use approx::assert_relative_eq;

    /// Isotropic well centered at c with spring constant k, as a landscape.
    fn harmonic(
        c: Vec3<f64>,
        k: f64,
    ) -> impl Fn(Vec3<f64>) -> Result<EnergySample<f64>> + Sync {
        move |p: Vec3<f64>| {
            let d = p - c;
            Ok(EnergySample {
                energy: 0.5 * k * d.norm2(),
                grad: d * k,
                hess: SymMat3::diag(k, k, k),
            })
        }
    }

    #[test]
    fn minimum_of_harmonic_well() {
        let c = Vec3::new(1e-5, -2e-5, 3e-5);
        let l = harmonic(c, 1e-8);
        let m = find_minimum(&l, Vec3::new(0.0, 0.0, 0.0), &MinimizeOptions::default()).unwrap();
        assert!((m - c).norm() < 1e-12);
    }

    #[test]
    fn double_well_returns_seed_basin() {
        // U = k((x² − a²)² + y² + z²): minima at x = ±a
        let a = 1e-4;
        let k = 1e-4;
        let l = move |p: Vec3<f64>| {
            let g = p.x * p.x - a * a;
            Ok(EnergySample {
                energy: k * (g * g + p.y * p.y + p.z * p.z),
                grad: Vec3::new(4.0 * k * g * p.x, 2.0 * k * p.y, 2.0 * k * p.z),
                hess: SymMat3::diag(k * (12.0 * p.x * p.x - 4.0 * a * a), 2.0 * k, 2.0 * k),
            })
        };
        let opts = MinimizeOptions {
            force_tol: 1e-24,
            ..Default::default()
        };
        let m_pos = find_minimum(&l, Vec3::new(0.4e-4, 1e-5, 0.0), &opts).unwrap();
        assert_relative_eq!(m_pos.x, a, max_relative = 1e-9);
        let m_neg = find_minimum(&l, Vec3::new(-0.4e-4, 0.0, 1e-5), &opts).unwrap();
        assert_relative_eq!(m_neg.x, -a, max_relative = 1e-9);
    }

    #[test]
    fn saddle_is_not_a_trapping_point() {
        let l = |p: Vec3<f64>| {
            Ok(EnergySample {
                energy: 0.5e-8 * (p.x * p.x - p.y * p.y + p.z * p.z),
                grad: Vec3::new(1e-8 * p.x, -1e-8 * p.y, 1e-8 * p.z),
                hess: SymMat3::diag(1e-8, -1e-8, 1e-8),
            })
        };
        match find_minimum(&l, Vec3::zero(), &MinimizeOptions::default()) {
            Err(Error::NotTrappingPoint(_)) => {}
            other => panic!("expected NotTrappingPoint, got {other:?}"),
        }
    }

    #[test]
    fn isotropic_modes_all_equal() {
        let k = 2.5e-9;
        let mass = 6.64e-26;
        let l = harmonic(Vec3::zero(), k);
        let sol = mode_solve(&l, Vec3::zero(), mass, &ModeOptions::default()).unwrap();
        let expect = (k / mass).sqrt() / (2.0 * std::f64::consts::PI);
        for f in sol.frequencies {
            assert_relative_eq!(f, expect, max_relative = 1e-12);
        }
        // vectors orthonormal
        for i in 0..3 {
            assert_relative_eq!(sol.vectors[i].norm(), 1.0, epsilon = 1e-10);
            for j in (i + 1)..3 {
                assert!(sol.vectors[i].dot(sol.vectors[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn anti_confined_direction_gets_negative_frequency() {
        let mass = 6.64e-26;
        let l = |p: Vec3<f64>| {
            let (kx, ky, kz) = (1e-9, 2e-9, -0.5e-9);
            Ok(EnergySample {
                energy: 0.5 * (kx * p.x * p.x + ky * p.y * p.y + kz * p.z * p.z),
                grad: Vec3::new(kx * p.x, ky * p.y, kz * p.z),
                hess: SymMat3::diag(kx, ky, kz),
            })
        };
        let sol = mode_solve(&l, Vec3::zero(), mass, &ModeOptions::default()).unwrap();
        assert!(sol.frequencies[2] < 0.0, "out-of-plane mode anti-confined");
        assert!(sol.frequencies[0] > 0.0 && sol.frequencies[1] > 0.0);
    }

    #[test]
    fn mode_solve_requires_stationary_point() {
        let l = harmonic(Vec3::zero(), 1e-8);
        let err = mode_solve(&l, Vec3::new(1e-5, 0.0, 0.0), 1e-26, &ModeOptions::default());
        assert!(matches!(err, Err(Error::NotStationary(_))));
    }

    #[test]
    fn angles_aligned_and_rotated() {
        let mk = |v1: Vec3<f64>, v2: Vec3<f64>| ModeSolution {
            r0: Vec3::zero(),
            frequencies: [1.0, 2.0, 3.0],
            vectors: [Vec3::new(1.0, 0.0, 0.0), v1, v2],
            theta_deg: 0.0,
            phi_deg: [0.0; 3],
        };
        // aligned: θ = 0, φ = (0°, 90°) for the radial pair
        let mut sol = mk(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        let (theta, phi) = {
            let (t, p) = super::angles_from_vectors(&sol.vectors);
            sol.theta_deg = t;
            sol.phi_deg = p;
            mode_angles(&sol)
        };
        assert_relative_eq!(theta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(phi[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(phi[2], 90.0, epsilon = 1e-10);

        // rotated by 38° about x̂
        let th = 38f64.to_radians();
        let v1 = Vec3::new(0.0, th.cos(), th.sin());
        let v2 = Vec3::new(0.0, -th.sin(), th.cos());
        let (t1, _) = super::angles_from_vectors(&[Vec3::new(1.0, 0.0, 0.0), v1, v2]);
        assert_relative_eq!(t1, 38.0, epsilon = 1e-10);
        // swapping the radial vectors leaves θ unchanged
        let (t2, _) = super::angles_from_vectors(&[Vec3::new(1.0, 0.0, 0.0), v2, v1]);
        assert_relative_eq!(t2, 38.0, epsilon = 1e-10);
    }

    #[test]
    fn anharmonicity_pure_quadratic_is_zero() {
        let l = harmonic(Vec3::zero(), 1e-8);
        let r = anharmonicity_ratios(&l, Vec3::zero(), [1e-4, 5e-5, 5e-5]).unwrap();
        for v in r {
            assert!(v.abs() < 1e-9, "ratio should vanish, got {v}");
        }
    }

    #[test]
    fn anharmonicity_known_quartic() {
        // U = ½ks² + cs⁴ along each axis → ratio = 2cd²/k
        let k = 1e-8;
        let c = 1e4;
        let l = move |p: Vec3<f64>| {
            let quad = 0.5 * k * p.norm2();
            let quart = c * (p.x.powi(4) + p.y.powi(4) + p.z.powi(4));
            Ok(EnergySample {
                energy: quad + quart,
                grad: Vec3::new(
                    k * p.x + 4.0 * c * p.x.powi(3),
                    k * p.y + 4.0 * c * p.y.powi(3),
                    k * p.z + 4.0 * c * p.z.powi(3),
                ),
                hess: SymMat3::diag(
                    k + 12.0 * c * p.x * p.x,
                    k + 12.0 * c * p.y * p.y,
                    k + 12.0 * c * p.z * p.z,
                ),
            })
        };
        let d = [1e-4, 5e-5, 2e-5];
        let r = anharmonicity_ratios(&l, Vec3::zero(), d).unwrap();
        for axis in 0..3 {
            let expect = 2.0 * c * d[axis] * d[axis] / k;
            assert_relative_eq!(r[axis], expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn anharmonicity_degenerate_curvature_errors() {
        // pure quartic: p2 ≈ 0
        let l = |p: Vec3<f64>| {
            let c = 1e6;
            Ok(EnergySample {
                energy: c * (p.x.powi(4) + p.y.powi(4) + p.z.powi(4)),
                grad: Vec3::new(
                    4.0 * c * p.x.powi(3),
                    4.0 * c * p.y.powi(3),
                    4.0 * c * p.z.powi(3),
                ),
                hess: SymMat3::diag(
                    12.0 * c * p.x * p.x,
                    12.0 * c * p.y * p.y,
                    12.0 * c * p.z * p.z,
                ),
            })
        };
        assert!(matches!(
            anharmonicity_ratios(&l, Vec3::zero(), [1e-4, 1e-4, 1e-4]),
            Err(Error::DegenerateCurvature(_))
        ));
    }
}
