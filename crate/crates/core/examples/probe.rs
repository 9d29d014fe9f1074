use traplab::analysis::{find_minimum, mode_solve, MinimizeOptions, ModeOptions};
use traplab::geometry::{ElectrodePatch, Plane, Rect, Role, SpacerFacet, TrapGeometry};
use traplab::linalg::Vec3;
use traplab::pseudo::{trap_efficiency, IonSpecies, PotentialModel, RfDrive};
use traplab::voltage::{preset_1ev, RF_VOLTS_1EV};

fn geom(s: f64, c_len: f64, rail_len: f64, w_g: f64, ly: f64, kappa: f64) -> (TrapGeometry<f64>, f64) {
    let lx = 2500.0;
    let shim_out = s + 100.0;
    let rf_in = shim_out;
    let rf_out = rf_in + 400.0;
    let mut patches = Vec::new();
    let mut bottom = |id: &str, x0: f64, x1: f64, y0: f64, y1: f64, role: Role| {
        patches.push(ElectrodePatch {
            id: id.to_string(),
            plane: Plane::Bottom,
            rect: Rect::from_um(x0, x1, y0, y1),
            role,
        });
    };
    bottom("A", -100.0, 100.0, -s, s, Role::Dc);
    bottom("B1", -300.0, -100.0, -s, s, Role::Dc);
    bottom("B2", 100.0, 300.0, -s, s, Role::Dc);
    bottom("C1", -300.0 - c_len, -300.0, -s, s, Role::Dc);
    bottom("C2", 300.0, 300.0 + c_len, -s, s, Role::Dc);
    bottom("shim 1a", -lx, lx, s, shim_out, Role::Dc);
    bottom("shim 1b", -lx, lx, -shim_out, -s, Role::Dc);
    bottom("rf a", -rail_len, rail_len, rf_in, rf_out, Role::Rf);
    bottom("rf b", -rail_len, rail_len, -rf_out, -rf_in, Role::Rf);
    bottom("shim 2a", -lx, lx, rf_out, ly, Role::Dc);
    bottom("shim 2b", -lx, lx, -ly, -rf_out, Role::Dc);
    patches.push(ElectrodePatch {
        id: "top 1".into(),
        plane: Plane::Top,
        rect: Rect::from_um(-lx, lx, w_g, ly),
        role: Role::Dc,
    });
    patches.push(ElectrodePatch {
        id: "top 2".into(),
        plane: Plane::Top,
        rect: Rect::from_um(-lx, lx, -ly, -w_g),
        role: Role::Dc,
    });
    if w_g > 0.0 && kappa > 0.0 {
        patches.push(ElectrodePatch {
            id: "aperture".into(),
            plane: Plane::Top,
            rect: Rect::from_um(-lx, lx, -w_g, w_g),
            role: Role::Dc,
        });
        // shrink tops so they don't overlap the band
        for p in patches.iter_mut() {
            if p.id == "top 1" {
                p.rect = Rect::from_um(-lx, lx, w_g, ly);
            }
            if p.id == "top 2" {
                p.rect = Rect::from_um(-lx, lx, -ly, -w_g);
            }
        }
    }
    (
        TrapGeometry {
            plane_separation: 400e-6,
            slit_width: 550e-6,
            patches,
            facets: Vec::<SpacerFacet<f64>>::new(),
        }
        .validated()
        .unwrap(),
        kappa,
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let s: f64 = args.get(1).map(|v| v.parse().unwrap()).unwrap_or(60.0);
    let c_len: f64 = args.get(2).map(|v| v.parse().unwrap()).unwrap_or(400.0);
    let rail_len: f64 = args.get(3).map(|v| v.parse().unwrap()).unwrap_or(1200.0);
    let w_g: f64 = args.get(4).map(|v| v.parse().unwrap()).unwrap_or(0.0);
    let ly: f64 = args.get(5).map(|v| v.parse().unwrap()).unwrap_or(2000.0);
    let kappa: f64 = args.get(6).map(|v| v.parse().unwrap()).unwrap_or(0.0);
    let full = args.get(7).map(|v| v == "full").unwrap_or(false);
    let (g, kap) = geom(s, c_len, rail_len, w_g, ly, kappa);
    let mut volts = preset_1ev();
    if kap > 0.0 && w_g > 0.0 {
        volts.set("aperture", kap * volts.get("top 1").unwrap());
    }
    let m = PotentialModel::new(
        g,
        volts,
        RfDrive::from_mhz(RF_VOLTS_1EV, 20.6),
        IonSpecies::ca40(),
    )
    .unwrap();

    let null = m.solve_rf_null(Vec3::new(0.0, 0.0, 1.8e-4)).unwrap();
    let q = m.mathieu_q(null).unwrap();
    let r0 = find_minimum(&m, null, &MinimizeOptions::default()).unwrap();
    let modes = mode_solve(&m, r0, m.species.mass, &ModeOptions::default()).unwrap();
    println!(
        "s={s} cl={c_len} rl={rail_len} wg={w_g} ly={ly} k={kappa}: null={:.1} min=({:.1},{:.1},{:.1}) q={:.3} f=({:.3},{:.3},{:.3}) th={:.2}",
        null.z * 1e6,
        r0.x * 1e6, r0.y * 1e6, r0.z * 1e6,
        q.q,
        modes.frequencies[0] / 1e6,
        modes.frequencies[1] / 1e6,
        modes.frequencies[2] / 1e6,
        modes.theta_deg,
    );
    if !full {
        return;
    }
    let u0 = m.total_energy(r0).unwrap().energy;
    let ev = |j: f64| j / 1.602176634e-19;
    let min_over_z = |x: f64, y: f64| -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..=72 {
            let z = 30e-6 + (392e-6 - 30e-6) * k as f64 / 72.0;
            if let Ok(smp) = m.total_energy(Vec3::new(x, y, z)) {
                best = best.min(smp.energy);
            }
        }
        best
    };
    let mut bx: f64 = 0.0;
    let mut bx_at = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=60 {
        let x = 1500e-6 * k as f64 / 60.0;
        let v = ev(min_over_z(x, r0.y) - u0);
        if v > bx { bx = v; bx_at = x; }
        if v < prev - 0.05 && k > 5 { break; }
        prev = v;
    }
    let mut by: f64 = 0.0;
    for k in 0..=60 {
        let y = 1500e-6 * k as f64 / 60.0;
        let v = ev(min_over_z(r0.x, y) - u0);
        if v > by { by = v; }
        if v < by - 0.3 { break; }
    }
    let mut bz: f64 = 0.0;
    let mut bz_at = 0.0;
    for k in 0..=99 {
        let z = r0.z + (396e-6 - r0.z) * k as f64 / 99.0;
        let v = ev(m.total_energy(Vec3::new(r0.x, r0.y, z)).unwrap().energy - u0);
        if v > bz { bz = v; bz_at = z; }
    }
    let depth = bx.min(by).min(bz);
    let true_depth = traplab::analysis::depth::trap_depth(
        &m,
        r0,
        (0.0, 400e-6),
        &traplab::analysis::depth::DepthOptions::default(),
    )
    .unwrap();
    println!(
        "  TRUE minimax depth {:.3} eV, saddle ({:.0},{:.0},{:.0}) um refined={} diag={:?}",
        true_depth.depth_ev,
        true_depth.saddle.x * 1e6,
        true_depth.saddle.y * 1e6,
        true_depth.saddle.z * 1e6,
        true_depth.refined,
        true_depth.diagnostics,
    );
    let up0 = m.pseudopotential(null).unwrap();
    let mut pz: f64 = 0.0;
    for k in 0..=80 {
        let z = null.z + (396e-6 - null.z) * k as f64 / 80.0;
        pz = pz.max(ev(m.pseudopotential(Vec3::new(0.0, 0.0, z)).unwrap() - up0));
    }
    let mut px: f64 = 0.0;
    for k in 0..=80 {
        let x = 1490e-6 * k as f64 / 80.0;
        px = px.max(ev(m.pseudopotential(Vec3::new(x, 0.0, null.z)).unwrap() - up0));
    }
    let d_rf = pz.min(px);
    let ratios = traplab::analysis::anharmonicity_ratios(&m, r0, [100e-6, 50e-6, 50e-6]).unwrap();
    println!(
        "  x {bx:.3}@{:.0}um y {by:.3} z {bz:.3}@{:.0} depth {depth:.3} etaE {:.2}% etaI {:.2}% anh ({:+.2},{:+.2},{:+.2})%",
        bx_at * 1e6,
        (bz_at - r0.z) * 1e6,
        trap_efficiency(depth, q.q, m.rf.v_rf) * 100.0,
        trap_efficiency(d_rf, q.q, m.rf.v_rf) * 100.0,
        ratios[0] * 100.0, ratios[1] * 100.0, ratios[2] * 100.0
    );
}
