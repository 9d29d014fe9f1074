//! DC voltage sets, the electrode moment matrix, and the constrained
//! least-squares voltage solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{assemble_field, slab_derivs, DEFAULT_IMAGE_ORDER};
use crate::geometry::{Role, TrapGeometry};
use crate::linalg::{Vec3};
use crate::pseudo::{IonSpecies, PotentialModel, RfDrive};
use crate::scalar::Real;

/// Default DC voltage magnitude limit, volts.
pub const DEFAULT_V_MAX: f64 = 30.0;

/// Named DC electrode voltages. Iteration order is the electrode-name order,
/// so serialization and solves are deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoltageSet<R> {
    map: BTreeMap<String, R>,
}

impl<R: Real> VoltageSet<R> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, electrode: &str, volts: R) {
        self.map.insert(electrode.to_string(), volts);
    }

    pub fn get(&self, electrode: &str) -> Option<R> {
        self.map.get(electrode).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &R)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn scale(&mut self, s: R) {
        for v in self.map.values_mut() {
            *v *= s;
        }
    }

    /// Check every key names a geometry patch and respects the magnitude cap.
    pub fn validate(&self, geometry: &TrapGeometry<R>, v_max: R) -> Result<()> {
        for (name, &v) in &self.map {
            if geometry.patch(name).is_none() {
                return Err(Error::UnknownElectrode(name.clone()));
            }
            if v.abs() > v_max + R::c(1e-12) {
                return Err(Error::Validation(format!(
                    "voltage on '{}' is {} V, beyond the {} V limit",
                    name,
                    v.as_f64(),
                    v_max.as_f64()
                )));
            }
        }
        Ok(())
    }

    /// Serialize as `electrode = volts` lines.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (name, v) in &self.map {
            let _ = writeln!(out, "{} = {}", name, v.as_f64());
        }
        out
    }

    /// Parse the `electrode = volts` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let pos = line.find('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected 'electrode = volts'".into(),
            })?;
            let name = line[..pos].trim();
            let volts: f64 = line[pos + 1..].trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("invalid voltage '{}'", &line[pos + 1..]),
            })?;
            set.set(name, R::c(volts));
        }
        Ok(set)
    }
}

/// Standard deep set (operates with 183 V of RF drive).
pub fn preset_1ev<R: Real>() -> VoltageSet<R> {
    let mut v = VoltageSet::new();
    for (name, volts) in [
        ("shim 2a", 0.04),
        ("shim 1a", 11.32),
        ("A", 7.66),
        ("B1", 8.95),
        ("B2", 8.95),
        ("C1", 17.18),
        ("C2", 17.18),
        ("shim 1b", 12.77),
        ("shim 2b", -24.03),
        ("top 1", 10.46),
        ("top 2", 10.46),
    ] {
        v.set(name, R::c(volts));
    }
    v
}

/// Standard shallow set (operates with 155 V of RF drive).
pub fn preset_0_2ev<R: Real>() -> VoltageSet<R> {
    let mut v = VoltageSet::new();
    for (name, volts) in [
        ("shim 2a", 8.16),
        ("shim 1a", 0.24),
        ("A", -1.07),
        ("B1", 5.29),
        ("B2", 5.29),
        ("C1", 4.91),
        ("C2", 4.91),
        ("shim 1b", 1.28),
        ("shim 2b", -9.04),
        ("top 1", 0.58),
        ("top 2", 0.58),
    ] {
        v.set(name, R::c(volts));
    }
    v
}

/// RF amplitude paired with [`preset_1ev`], volts.
pub const RF_VOLTS_1EV: f64 = 183.0;
/// RF amplitude paired with [`preset_0_2ev`], volts.
pub const RF_VOLTS_0_2EV: f64 = 155.0;
/// Standard drive frequency, Hz.
pub const RF_FREQ_HZ: f64 = 20.6e6;

/// Look up a preset voltage set by name.
pub fn preset_by_name<R: Real>(name: &str) -> Option<(VoltageSet<R>, f64)> {
    match name {
        "1eV" => Some((preset_1ev(), RF_VOLTS_1EV)),
        "0.2eV" => Some((preset_0_2ev(), RF_VOLTS_0_2EV)),
        _ => None,
    }
}

/// Per-electrode potential value, field components, and independent curvature
/// components at a site. Columns are the DC electrodes in name order.
#[derive(Debug, Clone)]
pub struct MomentMatrix<R> {
    pub electrode_ids: Vec<String>,
    pub site: Vec3<R>,
    /// Basis potential value per electrode.
    pub potential: Vec<R>,
    /// Basis electric field (E = −∇φ) per electrode, 3 rows.
    pub field: [Vec<R>; 3],
    /// Basis potential curvatures ∂²φ: rows xx, yy, xy, xz, yz (zz follows
    /// from the zero trace).
    pub curvature: [Vec<R>; 5],
}

pub fn build_moment_matrix<R: Real>(
    geometry: &TrapGeometry<R>,
    site: Vec3<R>,
    order: usize,
) -> Result<MomentMatrix<R>> {
    let mut ids: Vec<String> = geometry
        .patches
        .iter()
        .filter(|p| p.role == Role::Dc)
        .map(|p| p.id.clone())
        .collect();
    ids.sort();
    let n = ids.len();
    let mut m = MomentMatrix {
        electrode_ids: ids,
        site,
        potential: vec![R::zero(); n],
        field: [vec![R::zero(); n], vec![R::zero(); n], vec![R::zero(); n]],
        curvature: [
            vec![R::zero(); n],
            vec![R::zero(); n],
            vec![R::zero(); n],
            vec![R::zero(); n],
            vec![R::zero(); n],
        ],
    };
    for (col, id) in m.electrode_ids.iter().enumerate() {
        let patch = geometry.patch(id).expect("id from geometry");
        crate::field::basis::check_between_planes(site, geometry.plane_separation)?;
        let n = crate::field::basis::patch_image_order(&patch.rect, geometry.plane_separation, order);
        let d = slab_derivs(&patch.rect, patch.plane, geometry.plane_separation, site, n);
        m.potential[col] = d.value;
        for k in 0..3 {
            m.field[k][col] = -d.grad[k];
        }
        m.curvature[0][col] = d.hess.xx;
        m.curvature[1][col] = d.hess.yy;
        m.curvature[2][col] = d.hess.xy;
        m.curvature[3][col] = d.hess.xz;
        m.curvature[4][col] = d.hess.yz;
    }
    Ok(m)
}

/// Rotation objective: a target angle of the radial quadrupole about the trap
/// axis, linearized around a given total radial curvature asymmetry.
#[derive(Debug, Clone, Copy)]
pub struct RotationTarget<R> {
    pub theta_deg: R,
    /// (∂²Φ/∂y² − ∂²Φ/∂z²) of the *total* potential the rotation refers to,
    /// V/m²; the linear constraint is C_yz = ½·tan(2θ)·this.
    pub radial_asymmetry: R,
}

#[derive(Debug, Clone, Copy)]
pub struct Weights<R> {
    pub field: R,
    pub curvature: R,
    pub rotation: R,
}

impl<R: Real> Default for Weights<R> {
    fn default() -> Self {
        Self {
            field: R::one(),
            curvature: R::one(),
            rotation: R::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialTargets<R> {
    pub site: Vec3<R>,
    /// Target electric field at the site (zero for micromotion compensation).
    pub field: Option<Vec3<R>>,
    /// Target axial curvature ∂²Φ/∂x², V/m².
    pub axial_curvature: Option<R>,
    pub rotation: Option<RotationTarget<R>>,
    pub weights: Weights<R>,
}

impl<R: Real> PotentialTargets<R> {
    pub fn validate(&self) -> Result<()> {
        if self.field.is_none() && self.axial_curvature.is_none() && self.rotation.is_none() {
            return Err(Error::Validation("no active solve objective".into()));
        }
        let w = &self.weights;
        if w.field < R::zero() || w.curvature < R::zero() || w.rotation < R::zero() {
            return Err(Error::Validation("objective weights must be >= 0".into()));
        }
        Ok(())
    }

    /// Axial curvature equivalent to a secular frequency for a species:
    /// ∂²Φ/∂x² = m·(2πf)²/q.
    pub fn curvature_for_frequency(freq_hz: R, species: &IonSpecies<R>) -> R {
        let omega = R::c(2.0 * std::f64::consts::PI) * freq_hz;
        species.mass * omega * omega / species.charge
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions<R> {
    /// Box constraint |V| ≤ v_max, volts.
    pub v_max: R,
    /// Ridge penalty λ‖V‖², V⁻².
    pub ridge: R,
    /// Electrode pairs forced equal (hard constraints).
    pub ties: Vec<(String, String)>,
    /// Relative weighted residual above which the targets are reported
    /// unreachable.
    pub unreachable_rel: R,
}

impl<R: Real> Default for SolveOptions<R> {
    fn default() -> Self {
        Self {
            v_max: R::c(DEFAULT_V_MAX),
            ridge: R::c(1e-6),
            ties: Vec::new(),
            unreachable_rel: R::c(0.05),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResidualReport<R> {
    /// (objective label, residual) in the objective's own units.
    pub residuals: Vec<(String, R)>,
    /// √(weighted residual sum of squares).
    pub weighted_norm: R,
    /// ‖b‖ in the weighted metric, for scale.
    pub target_norm: R,
    /// Max |projected gradient| over free variables at the solution.
    pub kkt_residual: R,
    /// Electrodes clamped at ±v_max.
    pub active_bounds: Vec<String>,
}

/// Ridge-regularized weighted least squares over electrode voltages with box
/// constraints and optional equality ties, solved by a deterministic
/// active-set iteration.
pub fn solve_voltages<R: Real>(
    moments: &MomentMatrix<R>,
    targets: &PotentialTargets<R>,
    opts: &SolveOptions<R>,
) -> Result<(VoltageSet<R>, ResidualReport<R>)> {
    targets.validate()?;
    if opts.v_max < R::zero() {
        return Err(Error::Validation("v_max must be >= 0".into()));
    }
    let n_e = moments.electrode_ids.len();

    // ---- group electrodes by ties (union-find by smallest index) ----
    let mut group_of: Vec<usize> = (0..n_e).collect();
    for (a, b) in &opts.ties {
        let ia = moments
            .electrode_ids
            .iter()
            .position(|id| id == a)
            .ok_or_else(|| Error::UnknownElectrode(a.clone()))?;
        let ib = moments
            .electrode_ids
            .iter()
            .position(|id| id == b)
            .ok_or_else(|| Error::UnknownElectrode(b.clone()))?;
        let (ra, rb) = (root(&group_of, ia), root(&group_of, ib));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        group_of[hi] = lo;
    }
    let mut member_group: Vec<usize> = (0..n_e).map(|i| root(&group_of, i)).collect();
    let mut group_ids: Vec<usize> = member_group.clone();
    group_ids.sort_unstable();
    group_ids.dedup();
    let n_g = group_ids.len();
    for g in &mut member_group {
        *g = group_ids.binary_search(g).unwrap();
    }

    // ---- assemble weighted rows: (coefficients per group, target, weight) ----
    let mut rows: Vec<(Vec<R>, R, R, String)> = Vec::new();
    let mut push_row = |coeff_per_electrode: Vec<R>, target: R, weight: R, label: String| {
        let mut c = vec![R::zero(); n_g];
        for (e, v) in coeff_per_electrode.iter().enumerate() {
            c[member_group[e]] += *v;
        }
        rows.push((c, target, weight, label));
    };
    if let Some(field) = targets.field {
        for (k, axis) in ["Ex", "Ey", "Ez"].iter().enumerate() {
            push_row(
                moments.field[k].clone(),
                field[k],
                targets.weights.field,
                format!("field {axis}"),
            );
        }
    }
    if let Some(cxx) = targets.axial_curvature {
        push_row(
            moments.curvature[0].clone(),
            cxx,
            targets.weights.curvature,
            "axial curvature".into(),
        );
    }
    if let Some(rot) = targets.rotation {
        let theta = rot.theta_deg * R::c(std::f64::consts::PI / 180.0);
        let target = R::c(0.5) * (R::c(2.0) * theta).tan() * rot.radial_asymmetry;
        push_row(
            moments.curvature[4].clone(),
            target,
            targets.weights.rotation,
            "rotation (yz curvature)".into(),
        );
    }

    // Scale rows so field (V/m) and curvature (V/m²) objectives are
    // commensurate: normalize each row by its coefficient norm.
    let mut scaled: Vec<(Vec<R>, R, R)> = Vec::new();
    for (c, t, w, _) in &rows {
        let norm = c.iter().fold(R::zero(), |m, v| m + *v * *v).sqrt();
        let s = if norm > R::zero() { R::one() / norm } else { R::one() };
        let cs: Vec<R> = c.iter().map(|v| *v * s).collect();
        scaled.push((cs, *t * s, *w));
    }

    // multiplicity-weighted ridge per group
    let mut multiplicity = vec![R::zero(); n_g];
    for g in &member_group {
        multiplicity[*g] += R::one();
    }

    // ---- active-set iteration ----
    let mut at_bound: Vec<Option<R>> = vec![None; n_g];
    let mut v_g = vec![R::zero(); n_g];
    for _ in 0..(2 * n_g + 16) {
        // solve free subproblem
        let free: Vec<usize> = (0..n_g).filter(|g| at_bound[*g].is_none()).collect();
        if !free.is_empty() {
            let nf = free.len();
            let mut ata = vec![R::zero(); nf * nf];
            let mut atb = vec![R::zero(); nf];
            for (c, t, w) in &scaled {
                let mut rhs = *t;
                for g in 0..n_g {
                    if let Some(b) = at_bound[g] {
                        rhs = rhs - c[g] * b;
                    }
                }
                for (i, &gi) in free.iter().enumerate() {
                    let wc = *w * c[gi];
                    atb[i] += wc * rhs;
                    for (j, &gj) in free.iter().enumerate() {
                        ata[i * nf + j] += wc * c[gj];
                    }
                }
            }
            for (i, &gi) in free.iter().enumerate() {
                ata[i * nf + i] += opts.ridge * multiplicity[gi];
            }
            let l = crate::linalg::cholesky(&ata, nf).ok_or_else(|| {
                Error::Validation("solver normal matrix not positive definite".into())
            })?;
            let vf = crate::linalg::cholesky_solve(&l, nf, &atb);
            for (i, &gi) in free.iter().enumerate() {
                v_g[gi] = vf[i];
            }
        }
        for (g, b) in at_bound.iter().enumerate() {
            if let Some(bv) = b {
                v_g[g] = *bv;
            }
        }

        // clamp the worst violator, if any
        let mut worst: Option<(usize, R)> = None;
        for (g, &v) in v_g.iter().enumerate() {
            if at_bound[g].is_none() && v.abs() > opts.v_max {
                let excess = v.abs() - opts.v_max;
                if worst.map(|(_, e)| excess > e).unwrap_or(true) {
                    worst = Some((g, excess));
                }
            }
        }
        if let Some((g, _)) = worst {
            let sign = if v_g[g] >= R::zero() { R::one() } else { -R::one() };
            at_bound[g] = Some(sign * opts.v_max);
            continue;
        }

        // KKT: release a bound variable whose gradient points inward
        let grad = objective_gradient(&scaled, &v_g, opts.ridge, &multiplicity);
        let mut released = false;
        for g in 0..n_g {
            if let Some(bv) = at_bound[g] {
                let wants_in = (bv > R::zero() && grad[g] > R::c(1e-12))
                    || (bv < R::zero() && grad[g] < -R::c(1e-12));
                if wants_in {
                    at_bound[g] = None;
                    released = true;
                    break;
                }
            }
        }
        if !released {
            break;
        }
    }

    // ---- report ----
    let grad = objective_gradient(&scaled, &v_g, opts.ridge, &multiplicity);
    let mut kkt = R::zero();
    for g in 0..n_g {
        if at_bound[g].is_none() {
            kkt = kkt.max(grad[g].abs());
        }
    }
    let mut residuals = Vec::new();
    let mut wrss = R::zero();
    let mut bnorm = R::zero();
    for ((c, t, w), (_, _, _, label)) in scaled.iter().zip(&rows) {
        let mut pred = R::zero();
        for g in 0..n_g {
            pred += c[g] * v_g[g];
        }
        let r = pred - *t;
        // report in the objective's natural units (undo row scaling)
        let raw_norm = rows
            .iter()
            .find(|(_, _, _, l)| l == label)
            .map(|(cr, _, _, _)| cr.iter().fold(R::zero(), |m, v| m + *v * *v).sqrt())
            .unwrap_or(R::one());
        residuals.push((label.clone(), r * raw_norm));
        wrss += *w * r * r;
        bnorm += *w * *t * *t;
    }
    let weighted_norm = wrss.sqrt();
    let target_norm = bnorm.sqrt();

    let mut set = VoltageSet::new();
    let mut active = Vec::new();
    for (e, id) in moments.electrode_ids.iter().enumerate() {
        let v = v_g[member_group[e]];
        set.set(id, v);
        if at_bound[member_group[e]].is_some() && !active.contains(id) {
            active.push(id.clone());
        }
    }
    let report = ResidualReport {
        residuals: residuals.clone(),
        weighted_norm,
        target_norm,
        kkt_residual: kkt,
        active_bounds: active,
    };
    if weighted_norm > opts.unreachable_rel * target_norm + R::c(1e-12) {
        return Err(Error::TargetsUnreachable {
            summary: format!(
                "weighted residual {:.3e} exceeds {:.1}% of target norm {:.3e}",
                weighted_norm.as_f64(),
                opts.unreachable_rel.as_f64() * 100.0,
                target_norm.as_f64()
            ),
            residuals: residuals
                .iter()
                .map(|(l, r)| (l.clone(), r.as_f64()))
                .collect(),
        });
    }
    Ok((set, report))
}

fn root(parent: &[usize], mut i: usize) -> usize {
    while parent[i] != i {
        i = parent[i];
    }
    i
}

fn objective_gradient<R: Real>(
    rows: &[(Vec<R>, R, R)],
    v: &[R],
    ridge: R,
    multiplicity: &[R],
) -> Vec<R> {
    let n = v.len();
    let mut grad = vec![R::zero(); n];
    for (c, t, w) in rows {
        let mut pred = R::zero();
        for g in 0..n {
            pred += c[g] * v[g];
        }
        let r = pred - *t;
        for g in 0..n {
            grad[g] += R::c(2.0) * *w * r * c[g];
        }
    }
    for g in 0..n {
        grad[g] += R::c(2.0) * ridge * multiplicity[g] * v[g];
    }
    grad
}

/// Infer the stray field a compensation change cancels:
/// −(E_compensated − E_baseline) at the site.
pub fn compensation_to_field<R: Real>(
    geometry: &TrapGeometry<R>,
    baseline: &VoltageSet<R>,
    compensated: &VoltageSet<R>,
    site: Vec3<R>,
    order: usize,
) -> Result<Vec3<R>> {
    let eb = assemble_field(geometry, baseline, site, order)?.field;
    let ec = assemble_field(geometry, compensated, site, order)?.field;
    Ok(-(ec - eb))
}

#[derive(Debug, Clone)]
pub struct MisalignmentOptions<R> {
    /// DC set whose field gradients convert null displacement into an
    /// equivalent compensation-field error.
    pub voltages: VoltageSet<R>,
    pub rf: RfDrive<R>,
    pub species: IonSpecies<R>,
    pub image_order: usize,
}

impl<R: Real> Default for MisalignmentOptions<R> {
    fn default() -> Self {
        Self {
            voltages: preset_0_2ev(),
            rf: RfDrive::new(R::c(RF_VOLTS_0_2EV), R::c(2.0 * std::f64::consts::PI * RF_FREQ_HZ)),
            species: IonSpecies::ca40(),
            image_order: DEFAULT_IMAGE_ORDER,
        }
    }
}

/// Propagate geometric alignment uncertainties to stray-field uncertainties.
///
/// The stray field is inferred from compensation voltages under the nominal
/// geometry, so a perturbation that displaces the true RF null is
/// misattributed as a static field. For each perturbation (lateral shift of
/// the RF rails by `lateral_sigma`; plane-separation change by
/// `separation_sigma`) the null is re-solved in the perturbed geometry and
/// the nominal DC field is evaluated there; the reported ΔE is the change of
/// the relevant component.
pub fn misalignment_field_uncertainty<R: Real>(
    geometry: &TrapGeometry<R>,
    lateral_sigma: R,
    separation_sigma: R,
    opts: &MisalignmentOptions<R>,
) -> Result<(R, R)> {
    if lateral_sigma < R::zero() || separation_sigma < R::zero() {
        return Err(Error::Validation("sigmas must be >= 0".into()));
    }
    let mid = Vec3::new(
        R::zero(),
        R::zero(),
        geometry.plane_separation * R::c(0.5),
    );
    let model = |g: TrapGeometry<R>| PotentialModel {
        geometry: g,
        dc: opts.voltages.clone(),
        rf: opts.rf,
        species: opts.species,
        stray: None,
        image_order: opts.image_order,
    };
    let nominal = model(geometry.clone());
    let null0 = nominal.solve_rf_null(mid)?;
    let e0 = assemble_field(geometry, &opts.voltages, null0, opts.image_order)?.field;

    let d_ey = if lateral_sigma > R::zero() {
        let shifted = model(geometry.with_rf_shifted(lateral_sigma));
        let null1 = shifted.solve_rf_null(null0)?;
        let e1 = assemble_field(geometry, &opts.voltages, null1, opts.image_order)?.field;
        (e1.y - e0.y).abs()
    } else {
        R::zero()
    };

    let d_ez = if separation_sigma > R::zero() {
        let stretched = model(
            geometry.with_separation(geometry.plane_separation + separation_sigma),
        );
        let null2 = stretched.solve_rf_null(null0)?;
        let e2 = assemble_field(geometry, &opts.voltages, null2, opts.image_order)?.field;
        (e2.z - e0.z).abs()
    } else {
        R::zero()
    };

    Ok((d_ey, d_ez))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::paper_preset;
    use approx::assert_relative_eq;

    #[test]
    fn preset_round_trip_text() {
        let v: VoltageSet<f64> = preset_1ev();
        let text = v.serialize();
        let v2 = VoltageSet::parse(&text).unwrap();
        assert_eq!(v, v2);
        assert_eq!(v.get("shim 2b"), Some(-24.03));
    }

    #[test]
    fn presets_validate_on_preset_geometry() {
        let g: TrapGeometry<f64> = paper_preset();
        preset_1ev::<f64>().validate(&g, 30.0).unwrap();
        preset_0_2ev::<f64>().validate(&g, 30.0).unwrap();
        let mut bad = preset_1ev::<f64>();
        bad.set("nope", 1.0);
        assert!(bad.validate(&g, 30.0).is_err());
        let mut hot = VoltageSet::<f64>::new();
        hot.set("A", 45.0);
        assert!(hot.validate(&g, 30.0).is_err());
    }

    #[test]
    fn moment_matrix_symmetry_and_exclusions() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let m = build_moment_matrix(&g, site, 8).unwrap();
        // RF rails excluded
        assert!(!m.electrode_ids.iter().any(|id| id.starts_with("rf")));
        // mirror pair: Ey rows equal and opposite on the symmetry plane
        let i1 = m.electrode_ids.iter().position(|s| s == "shim 1a").unwrap();
        let i2 = m.electrode_ids.iter().position(|s| s == "shim 1b").unwrap();
        assert_relative_eq!(m.field[1][i1], -m.field[1][i2], max_relative = 1e-10);
        // and equal z-field
        assert_relative_eq!(m.field[2][i1], m.field[2][i2], max_relative = 1e-10);
    }

    #[test]
    fn moment_rows_taylor_consistent() {
        // shifting the site changes field rows consistently with curvature rows
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let delta = 2e-7;
        let m0 = build_moment_matrix(&g, site, 8).unwrap();
        let mp = build_moment_matrix(&g, Vec3::new(site.x, site.y, site.z + delta), 8).unwrap();
        let mm = build_moment_matrix(&g, Vec3::new(site.x, site.y, site.z - delta), 8).unwrap();
        let scale = m0
            .curvature
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for (col, _) in m0.electrode_ids.iter().enumerate() {
            // E_z = −∂Φ/∂z, so ∂E_z/∂z = −C_zz = C_xx + C_yy
            let dez = (mp.field[2][col] - mm.field[2][col]) / (2.0 * delta);
            let predicted = m0.curvature[0][col] + m0.curvature[1][col];
            assert!(
                (dez - predicted).abs() <= 1e-4 * scale,
                "column {col}: fd {dez} vs {predicted}"
            );
        }
    }

    #[test]
    fn zero_targets_give_zero_voltages() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let m = build_moment_matrix(&g, site, 8).unwrap();
        let t = PotentialTargets {
            site,
            field: Some(Vec3::zero()),
            axial_curvature: None,
            rotation: None,
            weights: Weights::default(),
        };
        let (v, rep) = solve_voltages(&m, &t, &SolveOptions::default()).unwrap();
        for (_, &volts) in v.iter() {
            assert!(volts.abs() < 1e-9, "expected ~0, got {volts}");
        }
        assert!(rep.weighted_norm < 1e-12);
    }

    #[test]
    fn forward_model_round_trip() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let m = build_moment_matrix(&g, site, 8).unwrap();
        // forward-evaluate a feasible random-ish set
        let mut truth = VoltageSet::<f64>::new();
        for (k, id) in m.electrode_ids.iter().enumerate() {
            truth.set(id, ((k as f64) * 0.7).sin() * 3.0);
        }
        let mut e = [0.0; 3];
        let mut cxx = 0.0;
        for (col, id) in m.electrode_ids.iter().enumerate() {
            let v = truth.get(id).unwrap();
            for k in 0..3 {
                e[k] += v * m.field[k][col];
            }
            cxx += v * m.curvature[0][col];
        }
        let t = PotentialTargets {
            site,
            field: Some(Vec3::new(e[0], e[1], e[2])),
            axial_curvature: Some(cxx),
            rotation: None,
            weights: Weights::default(),
        };
        let (v, rep) = solve_voltages(&m, &t, &SolveOptions::default()).unwrap();
        // the solver reproduces the target moments (not necessarily the same
        // voltages: the system is underdetermined and ridge-regularized)
        let mut e2 = [0.0; 3];
        let mut cxx2 = 0.0;
        for (col, id) in m.electrode_ids.iter().enumerate() {
            let vv = v.get(id).unwrap();
            for k in 0..3 {
                e2[k] += vv * m.field[k][col];
            }
            cxx2 += vv * m.curvature[0][col];
        }
        let escale = (e[0].powi(2) + e[1].powi(2) + e[2].powi(2)).sqrt();
        for k in 0..3 {
            assert!(
                (e2[k] - e[k]).abs() <= 1e-6 * escale,
                "field component {k}: {} vs {}",
                e2[k],
                e[k]
            );
        }
        assert_relative_eq!(cxx2, cxx, max_relative = 1e-6);
        assert!(rep.kkt_residual < 1e-9 * (1.0 + rep.target_norm));
    }

    #[test]
    fn determinism() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let m = build_moment_matrix(&g, site, 8).unwrap();
        let t = PotentialTargets {
            site,
            field: Some(Vec3::new(50.0, -20.0, 100.0)),
            axial_curvature: Some(1e7),
            rotation: None,
            weights: Weights::default(),
        };
        let opts = SolveOptions {
            ties: vec![("top 1".into(), "top 2".into())],
            ..SolveOptions::default()
        };
        let (v1, _) = solve_voltages(&m, &t, &opts).unwrap();
        let (v2, _) = solve_voltages(&m, &t, &opts).unwrap();
        assert_eq!(v1.serialize(), v2.serialize());
        assert_eq!(v1.get("top 1"), v1.get("top 2"));
    }

    #[test]
    fn infeasible_box_reports_unreachable() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let m = build_moment_matrix(&g, site, 8).unwrap();
        let t = PotentialTargets {
            site,
            field: Some(Vec3::new(1000.0, 0.0, 0.0)),
            axial_curvature: None,
            rotation: None,
            weights: Weights::default(),
        };
        let opts = SolveOptions {
            v_max: 0.0,
            ..SolveOptions::default()
        };
        match solve_voltages(&m, &t, &opts) {
            Err(Error::TargetsUnreachable { residuals, .. }) => {
                assert!(!residuals.is_empty());
            }
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn compensation_identity_and_linearity() {
        let g: TrapGeometry<f64> = paper_preset();
        let site = Vec3::new(0.0, 0.0, 2e-4);
        let base: VoltageSet<f64> = preset_0_2ev();
        let zero = compensation_to_field(&g, &base, &base, site, 8).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let mut comp = base.clone();
        comp.set("shim 1a", base.get("shim 1a").unwrap() + 0.5);
        let e1 = compensation_to_field(&g, &base, &comp, site, 8).unwrap();
        let mut comp2 = base.clone();
        comp2.set("shim 1a", base.get("shim 1a").unwrap() + 1.0);
        let e2 = compensation_to_field(&g, &base, &comp2, site, 8).unwrap();
        assert_relative_eq!(e2.y, 2.0 * e1.y, max_relative = 1e-9);
    }

    #[test]
    fn misalignment_zero_sigma_is_zero() {
        let g: TrapGeometry<f64> = paper_preset();
        let (dy, dz) =
            misalignment_field_uncertainty(&g, 0.0, 0.0, &MisalignmentOptions::default()).unwrap();
        assert_eq!((dy, dz), (0.0, 0.0));
    }
}
