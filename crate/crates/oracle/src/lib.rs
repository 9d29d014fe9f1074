//! Independent numerical oracles for validating the analytic trap models.
//!
//! Nothing in here depends on the main crate: the quadrature and
//! time-domain results are computed from first principles so they can serve
//! as references in tests.

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = -p / dp;
            x += dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Potential of a unit-voltage rectangle `[x1,x2]×[y1,y2]` in an otherwise
/// grounded plane, at height `z > 0` above the plane, by quadrature of the
/// half-space Green's function: φ = (z / 2π) ∬ dA / |r − r'|³.
///
/// Each axis is split into `panels` panels with `order`-point Gauss–Legendre
/// quadrature; the integrand is analytic so convergence is geometric.
pub fn rect_potential_quadrature(
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    px: f64,
    py: f64,
    pz: f64,
    order: usize,
    panels: usize,
) -> f64 {
    let (gx, gw) = gauss_legendre(order);
    let mut total = 0.0;
    for ix in 0..panels {
        let ax = x1 + (x2 - x1) * ix as f64 / panels as f64;
        let bx = x1 + (x2 - x1) * (ix + 1) as f64 / panels as f64;
        for iy in 0..panels {
            let ay = y1 + (y2 - y1) * iy as f64 / panels as f64;
            let by = y1 + (y2 - y1) * (iy + 1) as f64 / panels as f64;
            let hx = 0.5 * (bx - ax);
            let hy = 0.5 * (by - ay);
            let cx = 0.5 * (ax + bx);
            let cy = 0.5 * (ay + by);
            for (i, &xi) in gx.iter().enumerate() {
                let xs = cx + hx * xi;
                let dx = px - xs;
                for (j, &yj) in gx.iter().enumerate() {
                    let ys = cy + hy * yj;
                    let dy = py - ys;
                    let d2 = dx * dx + dy * dy + pz * pz;
                    total += gw[i] * gw[j] * hx * hy / (d2 * d2.sqrt());
                }
            }
        }
    }
    total * pz / (2.0 * std::f64::consts::PI)
}

/// Field of a uniformly charged rectangle by quadrature of the Coulomb
/// kernel. The plate spans `[0,l]×[0,h]` in its own plane with normal ζ; the
/// point is given in those local coordinates. `k` is σ/(4πε₀) so the result
/// is in the caller's units.
pub fn facet_field_quadrature(
    l: f64,
    h: f64,
    xi: f64,
    eta: f64,
    zeta: f64,
    k: f64,
    order: usize,
    panels: usize,
) -> [f64; 3] {
    let (gx, gw) = gauss_legendre(order);
    let mut e = [0.0; 3];
    for ix in 0..panels {
        let ax = l * ix as f64 / panels as f64;
        let bx = l * (ix + 1) as f64 / panels as f64;
        for iy in 0..panels {
            let ay = h * iy as f64 / panels as f64;
            let by = h * (iy + 1) as f64 / panels as f64;
            let hx = 0.5 * (bx - ax);
            let hy = 0.5 * (by - ay);
            let cx = 0.5 * (ax + bx);
            let cy = 0.5 * (ay + by);
            for (i, &u) in gx.iter().enumerate() {
                let xs = cx + hx * u;
                for (j, &v) in gx.iter().enumerate() {
                    let ys = cy + hy * v;
                    let dx = xi - xs;
                    let dy = eta - ys;
                    let d2 = dx * dx + dy * dy + zeta * zeta;
                    let d3 = d2 * d2.sqrt();
                    let w = gw[i] * gw[j] * hx * hy / d3;
                    e[0] += w * dx;
                    e[1] += w * dy;
                    e[2] += w * zeta;
                }
            }
        }
    }
    [k * e[0], k * e[1], k * e[2]]
}

/// Secular frequency of 1D motion in an ideal RF quadrupole by direct
/// time-domain integration of the Mathieu equation
/// ü = −(q·Ω²/2)·cos(Ωt)·u, RK4 with `steps_per_period` sub-steps, over
/// `periods` RF periods. The frequency is extracted from a linear fit to the
/// zero-crossing times of the secular envelope.
pub fn mathieu_secular_frequency(
    q: f64,
    omega_rf: f64,
    periods: usize,
    steps_per_period: usize,
) -> f64 {
    let dt = 2.0 * std::f64::consts::PI / omega_rf / steps_per_period as f64;
    let accel = |t: f64, u: f64| -> f64 { -0.5 * q * omega_rf * omega_rf * (omega_rf * t).cos() * u };
    let mut u = 1.0f64;
    let mut v = 0.0f64;
    let mut t = 0.0f64;
    // sample the micromotion-averaged coordinate once per RF period to get
    // the clean secular oscillation
    let mut avg_samples: Vec<(f64, f64)> = Vec::with_capacity(periods);
    let mut acc = 0.0;
    let mut acc_n = 0usize;
    let mut period_index = 0usize;
    for step in 0..periods * steps_per_period {
        // RK4
        let k1v = accel(t, u);
        let k1u = v;
        let k2v = accel(t + 0.5 * dt, u + 0.5 * dt * k1u);
        let k2u = v + 0.5 * dt * k1v;
        let k3v = accel(t + 0.5 * dt, u + 0.5 * dt * k2u);
        let k3u = v + 0.5 * dt * k2v;
        let k4v = accel(t + dt, u + dt * k3u);
        let k4u = v + dt * k3v;
        u += dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t += dt;
        acc += u;
        acc_n += 1;
        if (step + 1) % steps_per_period == 0 {
            let tc = (period_index as f64 + 0.5) * 2.0 * std::f64::consts::PI / omega_rf;
            avg_samples.push((tc, acc / acc_n as f64));
            acc = 0.0;
            acc_n = 0;
            period_index += 1;
        }
    }
    // zero crossings of the averaged signal, refined by linear interpolation
    let mut crossings = Vec::new();
    for w in avg_samples.windows(2) {
        let (t0, u0) = w[0];
        let (t1, u1) = w[1];
        if u0 == 0.0 {
            crossings.push(t0);
        } else if u0 * u1 < 0.0 {
            crossings.push(t0 + (t1 - t0) * u0 / (u0 - u1));
        }
    }
    assert!(
        crossings.len() >= 4,
        "too few secular oscillations: increase `periods`"
    );
    // linear regression of crossing time vs index: slope = half period
    let n = crossings.len() as f64;
    let mean_i = (crossings.len() as f64 - 1.0) / 2.0;
    let mean_t: f64 = crossings.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &tc) in crossings.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (tc - mean_t);
        den += di * di;
    }
    let half_period = num / den;
    1.0 / (2.0 * half_period)
}

/// Central-difference gradient of a scalar function of 3 coordinates.
pub fn central_gradient(f: &dyn Fn(f64, f64, f64) -> f64, p: [f64; 3], h: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for k in 0..3 {
        let mut pp = p;
        let mut pm = p;
        pp[k] += h;
        pm[k] -= h;
        g[k] = (f(pp[0], pp[1], pp[2]) - f(pm[0], pm[1], pm[2])) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = super::gauss_legendre(8);
        // ∫ x^6 over [-1,1] = 2/7
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(6)).sum();
        assert!((s - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_matches_center_formula() {
        // closed form above the center of an a×b rectangle
        let (a, b, h) = (1.0e-3, 0.6e-3, 0.25e-3);
        let phi = super::rect_potential_quadrature(
            -a / 2.0,
            a / 2.0,
            -b / 2.0,
            b / 2.0,
            0.0,
            0.0,
            h,
            32,
            4,
        );
        let expect = (2.0 / std::f64::consts::PI)
            * ((a / 2.0) * (b / 2.0) / (h * ((a / 2.0).powi(2) + (b / 2.0).powi(2) + h * h).sqrt()))
                .atan();
        assert!((phi - expect).abs() < 1e-12, "{phi} vs {expect}");
    }

    #[test]
    fn mathieu_frequency_near_lowest_order() {
        // at small q the secular frequency approaches qΩ/(2√2·2π)
        let omega = 2.0 * std::f64::consts::PI * 20.0e6;
        let q = 0.05;
        let f = super::mathieu_secular_frequency(q, omega, 4000, 200);
        let f0 = q * omega / (2.0 * 2f64.sqrt()) / (2.0 * std::f64::consts::PI);
        assert!(
            ((f - f0) / f0).abs() < 2e-3,
            "f = {f}, lowest order {f0}"
        );
    }
}
