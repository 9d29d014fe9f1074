//! Trap depth by escape-path search: the minimal barrier over all paths from
//! the minimum to the domain boundary, found as a minimax (widest-path)
//! graph search on a two-level grid, then polished by Newton refinement of
//! the saddle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::EnergyLandscape;
use crate::constants::ELEMENTARY_CHARGE;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct DepthOptions<R> {
    /// Half-extent of the search box along x and y, meters.
    pub half_extent: R,
    /// Fine grid spacing near the minimum, meters.
    pub fine_spacing: R,
    /// Coarse grid spacing elsewhere (integer multiple of the fine spacing).
    pub coarse_spacing: R,
    /// Half-extent of the fine region around the minimum, meters.
    pub fine_radius: R,
    /// Standoff of the grid from the conductor planes, meters.
    pub z_margin: R,
    /// Convergence threshold on |∇U| for the saddle refinement, newtons.
    pub saddle_force_tol: R,
}

impl<R: Real> Default for DepthOptions<R> {
    fn default() -> Self {
        Self {
            half_extent: R::c(1.5e-3),
            fine_spacing: R::c(4e-6),
            coarse_spacing: R::c(12e-6),
            fine_radius: R::c(250e-6),
            z_margin: R::c(4e-6),
            saddle_force_tol: R::c(1e-20),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DepthResult<R> {
    /// Barrier height above the minimum, eV.
    pub depth_ev: R,
    /// Refined (or grid, see `refined`) saddle location, meters.
    pub saddle: Vec3<R>,
    /// Unit vector from the minimum toward the saddle.
    pub escape_direction: Vec3<R>,
    /// Energy along the escape path as (arc length m, energy above minimum eV).
    pub barrier_profile: Vec<(R, R)>,
    /// Whether Newton refinement of the saddle succeeded.
    pub refined: bool,
    pub diagnostics: Vec<String>,
}

struct HeapEntry {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap by (dist, node id)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Two-level lattice. All integer coordinates are in fine-spacing units
/// relative to the box corner; the coarse lattice is the subset with every
/// coordinate divisible by `ratio`.
struct Lattice {
    ratio: i64,
    nx: i64,
    ny: i64,
    nz: i64,
    // fine box bounds in fine units (inclusive, aligned to the coarse lattice)
    fb_lo: [i64; 3],
    fb_hi: [i64; 3],
    fine_dims: [i64; 3],
    n_fine: usize,
    coarse_dims: [i64; 3],
}

impl Lattice {
    fn in_fine_box(&self, c: [i64; 3]) -> bool {
        (0..3).all(|k| c[k] >= self.fb_lo[k] && c[k] <= self.fb_hi[k])
    }

    fn fine_id(&self, c: [i64; 3]) -> u32 {
        let i = c[0] - self.fb_lo[0];
        let j = c[1] - self.fb_lo[1];
        let k = c[2] - self.fb_lo[2];
        (((i * self.fine_dims[1]) + j) * self.fine_dims[2] + k) as u32
    }

    fn coarse_flat(&self, c: [i64; 3]) -> usize {
        let i = c[0] / self.ratio;
        let j = c[1] / self.ratio;
        let k = c[2] / self.ratio;
        (((i * self.coarse_dims[1]) + j) * self.coarse_dims[2] + k) as usize
    }

    fn node_id(&self, c: [i64; 3], coarse_map: &[u32]) -> Option<u32> {
        if c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] > self.nx || c[1] > self.ny || c[2] > self.nz {
            return None;
        }
        if self.in_fine_box(c) {
            return Some(self.fine_id(c));
        }
        if (0..3).all(|k| c[k] % self.ratio == 0) {
            let id = coarse_map[self.coarse_flat(c)];
            if id != u32::MAX {
                return Some(id);
            }
        }
        None
    }

    fn coords_of(&self, id: u32, coarse_coords: &[[i64; 3]]) -> [i64; 3] {
        if (id as usize) < self.n_fine {
            let id = id as i64;
            let k = id % self.fine_dims[2];
            let j = (id / self.fine_dims[2]) % self.fine_dims[1];
            let i = id / (self.fine_dims[2] * self.fine_dims[1]);
            [self.fb_lo[0] + i, self.fb_lo[1] + j, self.fb_lo[2] + k]
        } else {
            coarse_coords[id as usize - self.n_fine]
        }
    }

    fn is_boundary(&self, c: [i64; 3]) -> bool {
        c[0] == 0 || c[1] == 0 || c[2] == 0 || c[0] == self.nx || c[1] == self.ny || c[2] == self.nz
    }
}

/// Compute the trap depth from a bound minimum `r0`.
pub fn trap_depth<R: Real, L: EnergyLandscape<R>>(
    landscape: &L,
    r0: Vec3<R>,
    z_extent: (R, R),
    opts: &DepthOptions<R>,
) -> Result<DepthResult<R>> {
    let fine = opts.fine_spacing.as_f64();
    let coarse = opts.coarse_spacing.as_f64();
    let ratio = (coarse / fine).round() as i64;
    if ratio < 1 || (coarse - fine * ratio as f64).abs() > 1e-9 * fine {
        return Err(Error::Validation(
            "coarse spacing must be an integer multiple of the fine spacing".into(),
        ));
    }

    // domain in fine units
    let x0 = -opts.half_extent.as_f64();
    let y0 = -opts.half_extent.as_f64();
    let z_lo = z_extent.0.as_f64() + opts.z_margin.as_f64();
    let z_hi = z_extent.1.as_f64() - opts.z_margin.as_f64();
    let nx = (2.0 * opts.half_extent.as_f64() / coarse).floor() as i64 * ratio;
    let ny = nx;
    let nz = ((z_hi - z_lo) / fine).floor() as i64;
    if nx < 2 * ratio || nz < 2 {
        return Err(Error::Resolution("search box smaller than the grid step".into()));
    }

    let pos_of = |c: [i64; 3]| -> Vec3<R> {
        Vec3::new(
            R::c(x0 + c[0] as f64 * fine),
            R::c(y0 + c[1] as f64 * fine),
            R::c(z_lo + c[2] as f64 * fine),
        )
    };

    // fine box around the minimum, snapped outward to the coarse lattice
    let snap = |v: f64, lo: f64| -> i64 { ((v - lo) / fine).round() as i64 };
    let cx = snap(r0.x.as_f64(), x0);
    let cy = snap(r0.y.as_f64(), y0);
    let rad = (opts.fine_radius.as_f64() / fine).ceil() as i64;
    let align_down = |v: i64| (v.div_euclid(ratio)) * ratio;
    let align_up = |v: i64| ((v + ratio - 1).div_euclid(ratio)) * ratio;
    let fb_lo = [
        align_down((cx - rad).max(0)),
        align_down((cy - rad).max(0)),
        0,
    ];
    let fb_hi = [
        align_up((cx + rad).min(nx)).min(nx),
        align_up((cy + rad).min(ny)).min(ny),
        nz,
    ];

    let fine_dims = [
        fb_hi[0] - fb_lo[0] + 1,
        fb_hi[1] - fb_lo[1] + 1,
        fb_hi[2] - fb_lo[2] + 1,
    ];
    let n_fine = (fine_dims[0] * fine_dims[1] * fine_dims[2]) as usize;
    let coarse_dims = [nx / ratio + 1, ny / ratio + 1, nz / ratio + 1];

    let lat = Lattice {
        ratio,
        nx,
        ny,
        nz,
        fb_lo,
        fb_hi,
        fine_dims,
        n_fine,
        coarse_dims,
    };

    // enumerate coarse nodes outside the fine box
    let mut coarse_map =
        vec![u32::MAX; (coarse_dims[0] * coarse_dims[1] * coarse_dims[2]) as usize];
    let mut coarse_coords: Vec<[i64; 3]> = Vec::new();
    for i in 0..coarse_dims[0] {
        for j in 0..coarse_dims[1] {
            for k in 0..coarse_dims[2] {
                let c = [i * ratio, j * ratio, (k * ratio).min(nz)];
                if lat.in_fine_box(c) {
                    continue;
                }
                let id = (n_fine + coarse_coords.len()) as u32;
                coarse_map[lat.coarse_flat(c)] = id;
                coarse_coords.push(c);
            }
        }
    }
    let n_nodes = n_fine + coarse_coords.len();

    // evaluate the landscape on every node (impassable on singular points)
    let energies: Vec<f64> = (0..n_nodes)
        .into_par_iter()
        .map(|id| {
            let c = lat.coords_of(id as u32, &coarse_coords);
            match landscape.sample(pos_of(c)) {
                Ok(s) => s.energy.as_f64(),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();

    let u_min = landscape.sample(r0)?.energy.as_f64();

    // source: lattice node nearest the minimum (inside the fine box)
    let src_c = [
        cx.clamp(fb_lo[0], fb_hi[0]),
        cy.clamp(fb_lo[1], fb_hi[1]),
        snap(r0.z.as_f64(), z_lo).clamp(0, nz),
    ];
    let src = lat
        .node_id(src_c, &coarse_map)
        .ok_or_else(|| Error::Resolution("minimum outside the search lattice".into()))?;

    // minimax Dijkstra: dist(v) = min over paths of max(U along the path)
    let mut dist = vec![f64::INFINITY; n_nodes];
    let mut parent = vec![u32::MAX; n_nodes];
    let mut done = vec![false; n_nodes];
    let mut heap = BinaryHeap::new();
    dist[src as usize] = energies[src as usize].max(u_min);
    heap.push(HeapEntry {
        dist: dist[src as usize],
        node: src,
    });
    let mut hit_boundary: Option<u32> = None;
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        let ni = node as usize;
        if done[ni] {
            continue;
        }
        done[ni] = true;
        let c = lat.coords_of(node, &coarse_coords);
        if lat.is_boundary(c) {
            hit_boundary = Some(node);
            break;
        }
        let steps: &[i64] = if (ni as i64) < n_fine as i64 {
            if (0..3).all(|k| c[k] % ratio == 0) {
                &[1, ratio]
            } else {
                &[1]
            }
        } else {
            &[ratio]
        };
        for &step in steps {
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dz in -1..=1i64 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let nc = [c[0] + dx * step, c[1] + dy * step, c[2] + dz * step];
                        if let Some(nb) = lat.node_id(nc, &coarse_map) {
                            let nbi = nb as usize;
                            if done[nbi] {
                                continue;
                            }
                            let nd = d.max(energies[nbi]);
                            if nd < dist[nbi] {
                                dist[nbi] = nd;
                                parent[nbi] = node;
                                heap.push(HeapEntry { dist: nd, node: nb });
                            }
                        }
                    }
                }
            }
        }
    }

    let target = hit_boundary
        .ok_or_else(|| Error::Resolution("no escape path reached the boundary".into()))?;

    // walk the path back, recording the profile and the bottleneck node
    let mut path = vec![target];
    let mut cur = target;
    while parent[cur as usize] != u32::MAX {
        cur = parent[cur as usize];
        path.push(cur);
    }
    path.reverse();
    let mut bottleneck = path[0];
    for &n in &path {
        if energies[n as usize] > energies[bottleneck as usize] {
            bottleneck = n;
        }
    }

    let mut diagnostics = Vec::new();
    let e_charge = ELEMENTARY_CHARGE;
    let barrier_grid = dist[target as usize] - u_min;
    if barrier_grid <= 0.0 {
        diagnostics.push(format!(
            "unbounded descent: the escape path never rises above the minimum \
             (grid barrier {barrier_grid:.3e} J)"
        ));
        let saddle = pos_of(lat.coords_of(bottleneck, &coarse_coords));
        return Ok(DepthResult {
            depth_ev: R::zero(),
            saddle,
            escape_direction: (saddle - r0).normalized(),
            barrier_profile: profile(&path, &lat, &coarse_coords, &pos_of, &energies, u_min, r0),
            refined: false,
            diagnostics,
        });
    }

    // Newton refinement of the saddle from the bottleneck node
    let seed = pos_of(lat.coords_of(bottleneck, &coarse_coords));
    let (saddle, refined) = refine_saddle(landscape, seed, opts);
    let (saddle, refined) = match saddle {
        Some(s) if (s - seed).norm().as_f64() <= 3.0 * coarse => (s, refined),
        Some(_) => {
            diagnostics.push("saddle refinement wandered away from the grid bottleneck; keeping the grid estimate".into());
            (seed, false)
        }
        None => {
            diagnostics.push("saddle refinement did not converge; keeping the grid estimate".into());
            (seed, false)
        }
    };
    let u_saddle = landscape.sample(saddle)?.energy.as_f64();
    let depth_j = if refined { u_saddle - u_min } else { barrier_grid };
    Ok(DepthResult {
        depth_ev: R::c(depth_j / e_charge),
        saddle,
        escape_direction: (saddle - r0).normalized(),
        barrier_profile: profile(&path, &lat, &coarse_coords, &pos_of, &energies, u_min, r0),
        refined,
        diagnostics,
    })
}

fn profile<R: Real>(
    path: &[u32],
    lat: &Lattice,
    coarse_coords: &[[i64; 3]],
    pos_of: &impl Fn([i64; 3]) -> Vec3<R>,
    energies: &[f64],
    u_min: f64,
    r0: Vec3<R>,
) -> Vec<(R, R)> {
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut s = R::zero();
    let mut prev = r0;
    out.push((s, R::zero()));
    for &n in path {
        let p = pos_of(lat.coords_of(n, coarse_coords));
        s += (p - prev).norm();
        prev = p;
        out.push((
            s,
            R::c((energies[n as usize] - u_min) / ELEMENTARY_CHARGE),
        ));
    }
    out
}

/// Newton iteration on ∇U = 0 near a grid bottleneck; accepts only a
/// stationary point with exactly one negative Hessian eigenvalue.
fn refine_saddle<R: Real, L: EnergyLandscape<R>>(
    landscape: &L,
    seed: Vec3<R>,
    opts: &DepthOptions<R>,
) -> (Option<Vec3<R>>, bool) {
    let mut p = seed;
    let max_step = opts.coarse_spacing;
    for _ in 0..80 {
        let s = match landscape.sample(p) {
            Ok(s) => s,
            Err(_) => return (None, false),
        };
        if s.grad.norm() < opts.saddle_force_tol {
            let (vals, _) = s.hess.eigh();
            let scale = vals[2].abs().max(vals[0].abs()).max(R::c(1e-300));
            let neg = vals.iter().filter(|v| **v < -scale * R::c(1e-9)).count();
            if neg == 1 {
                return (Some(p), true);
            }
            return (Some(p), false);
        }
        // full Newton step toward the stationary point
        let (vals, vecs) = s.hess.eigh();
        let mut step = Vec3::zero();
        for k in 0..3 {
            let lam = vals[k];
            let denom = if lam.abs() < R::c(1e-12) * vals[2].abs().max(R::c(1e-300)) {
                vals[2].abs().max(R::c(1e-300)) * R::c(1e-12)
            } else {
                lam
            };
            step += vecs[k] * (-vecs[k].dot(s.grad) / denom);
        }
        let n = step.norm();
        if n > max_step {
            step = step * (max_step / n);
        }
        p = p + step;
    }
    (None, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMat3;
    use crate::pseudo::EnergySample;
    use approx::assert_relative_eq;

    /// U = A·r²·exp(−r²/w²): saddle ring at |r| = w of height A·w²/e.
    fn gaussian_shell(
        a: f64,
        w: f64,
    ) -> impl Fn(Vec3<f64>) -> crate::error::Result<EnergySample<f64>> + Sync {
        move |p: Vec3<f64>| {
            let r2 = p.norm2();
            let g = (-r2 / (w * w)).exp();
            let u = a * r2 * g;
            let du_dr2 = a * g * (1.0 - r2 / (w * w));
            let grad = p * (2.0 * du_dr2);
            let d2 = a * g * (-2.0 / (w * w) + r2 / (w * w * w * w) + -1.0 / (w * w));
            // hessian: 2·du_dr2·I + 4·d(du_dr2)/dr2 ·(p pᵀ)
            let mut hess = SymMat3::diag(2.0 * du_dr2, 2.0 * du_dr2, 2.0 * du_dr2);
            let coeffs = [
                (0, 0, p.x * p.x),
                (0, 1, p.x * p.y),
                (0, 2, p.x * p.z),
                (1, 1, p.y * p.y),
                (1, 2, p.y * p.z),
                (2, 2, p.z * p.z),
            ];
            for (i, j, pp) in coeffs {
                hess.set(i, j, hess.get(i, j) + 4.0 * d2 * pp);
            }
            Ok(EnergySample {
                energy: u,
                grad,
                hess,
            })
        }
    }

    fn shell_opts() -> DepthOptions<f64> {
        DepthOptions {
            half_extent: 450e-6,
            fine_spacing: 4e-6,
            coarse_spacing: 12e-6,
            fine_radius: 150e-6,
            z_margin: 4e-6,
            ..Default::default()
        }
    }

    #[test]
    fn gaussian_shell_depth_matches_closed_form() {
        // center the well mid-box in z by shifting coordinates
        let a = 1e-8;
        let w = 120e-6;
        let zc = 400e-6;
        let shell = gaussian_shell(a, w);
        let shifted = move |p: Vec3<f64>| shell(Vec3::new(p.x, p.y, p.z - zc));
        let r0 = Vec3::new(0.0, 0.0, zc);
        let res = trap_depth(&shifted, r0, (0.0, 2.0 * zc), &shell_opts()).unwrap();
        let expect = a * w * w / std::f64::consts::E / ELEMENTARY_CHARGE;
        assert_relative_eq!(res.depth_ev, expect, max_relative = 5e-3);
        assert!(res.refined, "saddle refinement should converge: {:?}", res.diagnostics);
        // saddle sits on the |r| = w ring
        let d = (res.saddle - r0).norm();
        assert_relative_eq!(d, w, max_relative = 1e-2);
        // the grid-sampled profile peaks just below the refined saddle
        // (nodes straddle the continuum maximum)
        let peak = res
            .barrier_profile
            .iter()
            .map(|(_, e)| *e)
            .fold(0.0f64, f64::max);
        assert!(peak <= res.depth_ev * (1.0 + 1e-9));
        assert!(peak > 0.95 * res.depth_ev, "peak {peak} vs depth {}", res.depth_ev);
    }

    #[test]
    fn depth_scales_linearly_with_potential() {
        let w = 120e-6;
        let zc = 400e-6;
        let mk = |a: f64| {
            let shell = gaussian_shell(a, w);
            move |p: Vec3<f64>| shell(Vec3::new(p.x, p.y, p.z - zc))
        };
        let r0 = Vec3::new(0.0, 0.0, zc);
        let d1 = trap_depth(&mk(1e-8), r0, (0.0, 2.0 * zc), &shell_opts())
            .unwrap()
            .depth_ev;
        let d3 = trap_depth(&mk(3e-8), r0, (0.0, 2.0 * zc), &shell_opts())
            .unwrap()
            .depth_ev;
        assert_relative_eq!(d3, 3.0 * d1, max_relative = 1e-9);
    }

    #[test]
    fn unbounded_descent_reports_zero_depth() {
        // a pure downhill slope away from the seed
        let l = |p: Vec3<f64>| {
            Ok(EnergySample {
                energy: -1e-4 * p.x,
                grad: Vec3::new(-1e-4, 0.0, 0.0),
                hess: SymMat3::zero(),
            })
        };
        let res = trap_depth(
            &l,
            Vec3::new(0.0, 0.0, 400e-6),
            (0.0, 800e-6),
            &shell_opts(),
        )
        .unwrap();
        assert_eq!(res.depth_ev, 0.0);
        assert!(!res.diagnostics.is_empty());
    }

    #[test]
    fn saddle_has_one_negative_eigenvalue() {
        let a = 1e-8;
        let w = 120e-6;
        let zc = 400e-6;
        let shell = gaussian_shell(a, w);
        let shifted = move |p: Vec3<f64>| shell(Vec3::new(p.x, p.y, p.z - zc));
        let res = trap_depth(
            &shifted,
            Vec3::new(0.0, 0.0, zc),
            (0.0, 2.0 * zc),
            &shell_opts(),
        )
        .unwrap();
        let s = shifted(res.saddle).unwrap();
        assert!(s.grad.norm() < 1e-18);
        let (vals, _) = s.hess.eigh();
        let neg = vals.iter().filter(|v| **v < -1e-9 * vals[2].abs()).count();
        assert_eq!(neg, 1);
    }
}
