//! Measured-data analysis: stray-field fits against the spacer charge model,
//! heating-rate power laws, spectral-density conversion, normalization, and
//! repeated-measurement statistics.

use std::collections::BTreeMap;

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::field::charged_facet_field;
use crate::geometry::TrapGeometry;
use crate::linalg::{weighted_lstsq, Vec3};
use crate::pseudo::IonSpecies;
use crate::scalar::Real;

// ---------------------------------------------------------------------------
// datasets

/// One stray-field measurement row: axial position and the three measured
/// field components, with optional per-component uncertainties.
#[derive(Debug, Clone)]
pub struct StrayFieldRow<R> {
    pub x: R,
    pub e: Vec3<R>,
    pub err: [Option<R>; 3],
}

#[derive(Debug, Clone)]
pub struct StrayFieldDataset<R> {
    pub rows: Vec<StrayFieldRow<R>>,
    pub label: String,
}

/// Axial positions are restricted to the trapping range.
pub const STRAY_X_RANGE: f64 = 250e-6;

impl<R: Real> StrayFieldDataset<R> {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.x.abs() > R::c(STRAY_X_RANGE) + R::c(1e-12) {
                return Err(Error::Validation(format!(
                    "row {}: position {} m outside the ±250 µm trapping range",
                    i + 1,
                    row.x.as_f64()
                )));
            }
            for v in [row.e.x, row.e.y, row.e.z] {
                if !v.is_finite() {
                    return Err(Error::Validation(format!("row {}: non-finite field", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Parse the documented CSV schema
    /// `x_m,Ex,Ey,Ez,err_Ex,err_Ey,err_Ez` (uncertainty columns optional).
    pub fn from_csv(text: &str, label: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let expect = ["x_m", "Ex", "Ey", "Ez"];
        if cols.len() < 4 || cols[..4] != expect {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header starting 'x_m,Ex,Ey,Ez', got '{}'",
                    header.trim()
                ),
            });
        }
        let has_err = cols.len() >= 7;
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f = parse_csv_numbers(line, idx + 1)?;
            if f.len() < 4 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected at least 4 columns".into(),
                });
            }
            let err = if has_err && f.len() >= 7 {
                [Some(R::c(f[4])), Some(R::c(f[5])), Some(R::c(f[6]))]
            } else {
                [None, None, None]
            };
            rows.push(StrayFieldRow {
                x: R::c(f[0]),
                e: Vec3::from_f64(f[1], f[2], f[3]),
                err,
            });
        }
        let ds = Self {
            rows,
            label: label.to_string(),
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// One heating-rate measurement row.
#[derive(Debug, Clone)]
pub struct HeatingRow<R> {
    pub mode: String,
    pub freq_hz: R,
    pub rate: R,
    pub rate_err: Option<R>,
    pub temp_k: Option<R>,
    pub phi_deg: Option<R>,
    /// Rows with non-positive rates are kept but flagged; fits skip them.
    pub excluded: bool,
}

#[derive(Debug, Clone, Default)]
pub struct HeatingDataset<R> {
    pub rows: Vec<HeatingRow<R>>,
}

impl<R: Real> HeatingDataset<R> {
    /// Parse the documented CSV schema
    /// `mode,freq_hz,rate_phonons_s,rate_err,temp_k,phi_deg` (trailing
    /// columns may be empty).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let expect = ["mode", "freq_hz", "rate_phonons_s", "rate_err", "temp_k", "phi_deg"];
        if cols.len() < 3 || cols[0] != "mode" || cols[1] != "freq_hz" || cols[2] != "rate_phonons_s"
        {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{}', got '{}'", expect.join(","), header.trim()),
            });
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() < 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected at least mode,freq_hz,rate".into(),
                });
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("invalid {what} '{s}'"),
                })
            };
            let opt = |i: usize, what: &str| -> Result<Option<R>> {
                match parts.get(i) {
                    Some(s) if !s.is_empty() => Ok(Some(R::c(num(s, what)?))),
                    _ => Ok(None),
                }
            };
            let freq = R::c(num(parts[1], "frequency")?);
            if freq <= R::zero() {
                return Err(Error::Validation(format!(
                    "row {}: frequency must be positive",
                    idx + 1
                )));
            }
            let rate = R::c(num(parts[2], "rate")?);
            let rate_err = opt(3, "rate_err")?;
            if let Some(e) = rate_err {
                if e <= R::zero() {
                    return Err(Error::Validation(format!(
                        "row {}: rate uncertainty must be positive",
                        idx + 1
                    )));
                }
            }
            rows.push(HeatingRow {
                mode: parts[0].to_string(),
                freq_hz: freq,
                rate,
                rate_err,
                temp_k: opt(4, "temperature")?,
                phi_deg: opt(5, "phi")?,
                excluded: rate <= R::zero(),
            });
        }
        Ok(Self { rows })
    }

    pub fn modes(&self) -> Vec<String> {
        let mut seen = BTreeMap::new();
        for r in &self.rows {
            seen.entry(r.mode.clone()).or_insert(());
        }
        seen.into_keys().collect()
    }
}

fn parse_csv_numbers(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid number '{}'", s.trim()),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// spectral density

/// Electric-field noise spectral density implied by a heating rate:
/// S_E = 4·m·ħ·ω_m·Γ / q², with ω_m = 2π·frequency.
pub fn spectral_density<R: Real>(rate_per_s: R, freq_hz: R, species: &IonSpecies<R>) -> R {
    let omega = R::c(2.0 * std::f64::consts::PI) * freq_hz;
    R::c(4.0) * species.mass * R::c(HBAR) * omega * rate_per_s / (species.charge * species.charge)
}

// ---------------------------------------------------------------------------
// power-law fits

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerLawVariable {
    /// Γ ∝ f^(−α); the returned exponent is α.
    Frequency,
    /// Γ ∝ T^(+β); the returned exponent is β.
    Temperature,
}

#[derive(Debug, Clone)]
pub struct PowerLawFit<R> {
    pub amplitude: R,
    /// α (frequency convention Γ ∝ f^−α) or β (temperature convention Γ ∝ T^β).
    pub exponent: R,
    pub amplitude_se: R,
    pub exponent_se: R,
    /// Covariance of (ln amplitude, exponent).
    pub covariance: [[R; 2]; 2],
    /// Indices of rows excluded for non-positive rate or missing x.
    pub excluded_rows: Vec<usize>,
    pub variable: PowerLawVariable,
}

impl<R: Real> PowerLawFit<R> {
    /// Spectral-density exponent α′ = α − 1 (frequency fits only).
    pub fn alpha_prime(&self) -> Option<R> {
        match self.variable {
            PowerLawVariable::Frequency => Some(self.exponent - R::one()),
            PowerLawVariable::Temperature => None,
        }
    }
}

/// Weighted least squares in log-log space: ln Γ = ln A ∓ exponent·ln x, with
/// per-point weights from δ(lnΓ) = δΓ/Γ. Rows with non-positive rates are
/// excluded.
pub fn fit_power_law<R: Real>(
    rows: &[HeatingRow<R>],
    variable: PowerLawVariable,
) -> Result<PowerLawFit<R>> {
    let mut excluded = Vec::new();
    let mut pts: Vec<(R, R, R)> = Vec::new(); // (ln x, ln Γ, weight)
    for (i, r) in rows.iter().enumerate() {
        let x = match variable {
            PowerLawVariable::Frequency => Some(r.freq_hz),
            PowerLawVariable::Temperature => r.temp_k,
        };
        let x = match x {
            Some(x) if x > R::zero() => x,
            _ => {
                excluded.push(i);
                continue;
            }
        };
        if r.rate <= R::zero() || r.excluded {
            excluded.push(i);
            continue;
        }
        let w = match r.rate_err {
            Some(e) => {
                let sigma_ln = e / r.rate;
                R::one() / (sigma_ln * sigma_ln)
            }
            None => R::one(),
        };
        pts.push((x.ln(), r.rate.ln(), w));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let rows_ls: Vec<(Vec<R>, R, R)> = pts
        .iter()
        .map(|(lx, ly, w)| (vec![R::one(), *lx], *ly, *w))
        .collect();
    let fit = weighted_lstsq(&rows_ls, 2).map_err(|c| Error::DegenerateFit { combination: c })?;
    let slope = fit.params[1];
    let exponent = match variable {
        PowerLawVariable::Frequency => -slope,
        PowerLawVariable::Temperature => slope,
    };
    Ok(PowerLawFit {
        amplitude: fit.params[0].exp(),
        exponent,
        amplitude_se: fit.covariance[0].sqrt(),
        exponent_se: fit.covariance[3].sqrt(),
        covariance: [
            [fit.covariance[0], fit.covariance[1]],
            [fit.covariance[2], fit.covariance[3]],
        ],
        excluded_rows: excluded,
        variable,
    })
}

// ---------------------------------------------------------------------------
// normalization

/// Multiply each rate (and its uncertainty) by χ_f = (f_norm/f)^(−α) for its
/// mode; α per mode uses the Γ ∝ f^(−α) sign convention. Returns the rows and
/// the applied factors.
pub fn normalize_frequency<R: Real>(
    rows: &[HeatingRow<R>],
    f_norm: &BTreeMap<String, R>,
    alpha: &BTreeMap<String, R>,
) -> Result<(Vec<HeatingRow<R>>, Vec<R>)> {
    let mut out = Vec::with_capacity(rows.len());
    let mut factors = Vec::with_capacity(rows.len());
    for r in rows {
        let a = alpha
            .get(&r.mode)
            .ok_or_else(|| Error::MissingExponent(r.mode.clone()))?;
        let fn_ = f_norm
            .get(&r.mode)
            .ok_or_else(|| Error::MissingExponent(r.mode.clone()))?;
        let chi = (*fn_ / r.freq_hz).powf(-*a);
        let mut nr = r.clone();
        nr.rate = r.rate * chi;
        nr.rate_err = r.rate_err.map(|e| e * chi);
        out.push(nr);
        factors.push(chi);
    }
    Ok((out, factors))
}

/// Multiply each rate by χ_T = (T_norm/T)^β for its mode (Γ ∝ T^β).
pub fn normalize_temperature<R: Real>(
    rows: &[HeatingRow<R>],
    t_norm: R,
    beta: &BTreeMap<String, R>,
) -> Result<(Vec<HeatingRow<R>>, Vec<R>)> {
    let mut out = Vec::with_capacity(rows.len());
    let mut factors = Vec::with_capacity(rows.len());
    for r in rows {
        let b = beta
            .get(&r.mode)
            .ok_or_else(|| Error::MissingExponent(r.mode.clone()))?;
        let t = r.temp_k.ok_or_else(|| {
            Error::Validation(format!("row in mode '{}' has no temperature", r.mode))
        })?;
        let chi = (t_norm / t).powf(*b);
        let mut nr = r.clone();
        nr.rate = r.rate * chi;
        nr.rate_err = r.rate_err.map(|e| e * chi);
        out.push(nr);
        factors.push(chi);
    }
    Ok((out, factors))
}

// ---------------------------------------------------------------------------
// repeated-measurement statistics

#[derive(Debug, Clone, Copy)]
pub struct RepeatStats<R> {
    pub mean: R,
    /// Sample standard deviation (n − 1).
    pub std_dev: R,
    /// Mean of the per-point uncertainties.
    pub mean_uncertainty: R,
}

pub fn repeated_measurement_stats<R: Real>(values: &[(R, R)]) -> Result<RepeatStats<R>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let n = R::c(values.len() as f64);
    let mean = values.iter().map(|(v, _)| *v).sum::<R>() / n;
    let ss = values
        .iter()
        .map(|(v, _)| (*v - mean) * (*v - mean))
        .sum::<R>();
    let std_dev = (ss / (n - R::one())).sqrt();
    let mean_uncertainty = values.iter().map(|(_, e)| *e).sum::<R>() / n;
    Ok(RepeatStats {
        mean,
        std_dev,
        mean_uncertainty,
    })
}

// ---------------------------------------------------------------------------
// heating rate vs mode angle

#[derive(Debug, Clone)]
pub struct AngleFit<R> {
    pub gamma_min: R,
    pub gamma_max: R,
    pub gamma_min_se: R,
    pub gamma_max_se: R,
    pub ratio: R,
    pub ratio_se: R,
    pub warnings: Vec<String>,
}

/// Weighted fit of Γ(φ) = Γ_min + (Γ_max − Γ_min)·sin²φ, i.e. linear in the
/// basis (cos²φ, sin²φ).
pub fn fit_angle_model<R: Real>(rows: &[(R, R, Option<R>)]) -> Result<AngleFit<R>> {
    // rows: (phi_deg, rate, err)
    let mut distinct: Vec<R> = Vec::new();
    for (phi, _, _) in rows {
        if !distinct.iter().any(|p| (*p - *phi).abs() < R::c(1e-9)) {
            distinct.push(*phi);
        }
    }
    if distinct.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: distinct.len(),
        });
    }
    let mut warnings = Vec::new();
    let span = distinct
        .iter()
        .fold(R::c(f64::NEG_INFINITY), |m, v| m.max(*v))
        - distinct.iter().fold(R::c(f64::INFINITY), |m, v| m.min(*v));
    if span < R::c(20.0) {
        warnings.push(format!(
            "angles span only {:.1}°; the fit is ill-conditioned",
            span.as_f64()
        ));
    }
    let rows_ls: Vec<(Vec<R>, R, R)> = rows
        .iter()
        .map(|(phi, rate, err)| {
            let p = *phi * R::c(std::f64::consts::PI / 180.0);
            let s2 = p.sin() * p.sin();
            let c2 = R::one() - s2;
            let w = match err {
                Some(e) if *e > R::zero() => R::one() / (*e * *e),
                _ => R::one(),
            };
            (vec![c2, s2], *rate, w)
        })
        .collect();
    let fit = weighted_lstsq(&rows_ls, 2).map_err(|c| Error::DegenerateFit { combination: c })?;
    let (gmin, gmax) = (fit.params[0], fit.params[1]);
    let (vmin, vmax, cov) = (fit.covariance[0], fit.covariance[3], fit.covariance[1]);
    // ratio uncertainty by first-order propagation
    let ratio = gmax / gmin;
    let dr_dmin = -gmax / (gmin * gmin);
    let dr_dmax = R::one() / gmin;
    let var = dr_dmin * dr_dmin * vmin
        + dr_dmax * dr_dmax * vmax
        + R::c(2.0) * dr_dmin * dr_dmax * cov;
    Ok(AngleFit {
        gamma_min: gmin,
        gamma_max: gmax,
        gamma_min_se: vmin.sqrt(),
        gamma_max_se: vmax.sqrt(),
        ratio,
        ratio_se: var.max(R::zero()).sqrt(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// stray-field model and fit

/// Predicted stray field along the trap axis at ion height:
/// E(x) = Σᵢ facet_field(σᵢ) + E_offset.
pub fn spacer_field_profile<R: Real>(
    geometry: &TrapGeometry<R>,
    sigmas: &[R],
    e_offset: Vec3<R>,
    x_positions: &[R],
    z_ion: R,
) -> Result<Vec<Vec3<R>>> {
    if sigmas.len() != geometry.facets.len() {
        return Err(Error::Validation(format!(
            "{} charge densities supplied for {} facets",
            sigmas.len(),
            geometry.facets.len()
        )));
    }
    let mut out = Vec::with_capacity(x_positions.len());
    for &x in x_positions {
        let p = Vec3::new(x, R::zero(), z_ion);
        let mut e = e_offset;
        for (facet, sigma) in geometry.facets.iter().zip(sigmas) {
            e += charged_facet_field(facet, *sigma, p)?;
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StrayFieldFit<R> {
    /// Fitted charge densities per facet (e⁻/µm²), facet order as in the
    /// geometry.
    pub sigma: Vec<R>,
    pub sigma_se: Vec<R>,
    pub e_offset: Vec3<R>,
    pub e_offset_se: Vec3<R>,
    /// √(weighted residual sum of squares).
    pub residual_norm: R,
    /// RMS residual per field component, V/m.
    pub component_rms: [R; 3],
}

/// Linear least squares for the spacer charge-density model: the measured
/// components are linear in the facet charge densities and the uniform
/// offset, so the fit is closed-form with standard errors from the
/// covariance.
pub fn fit_stray_field<R: Real>(
    dataset: &StrayFieldDataset<R>,
    geometry: &TrapGeometry<R>,
    z_ion: R,
) -> Result<StrayFieldFit<R>> {
    dataset.validate()?;
    let nf = geometry.facets.len();
    let np = nf + 3;
    let n_rows = dataset.rows.len() * 3;
    if n_rows < np {
        return Err(Error::InsufficientData {
            needed: np,
            got: n_rows,
        });
    }
    let mut rows_ls: Vec<(Vec<R>, R, R)> = Vec::with_capacity(n_rows);
    let mut per_comp: [Vec<(R, R)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in &dataset.rows {
        let p = Vec3::new(row.x, R::zero(), z_ion);
        // unit-σ basis fields per facet
        let mut basis: Vec<Vec3<R>> = Vec::with_capacity(nf);
        for facet in &geometry.facets {
            basis.push(charged_facet_field(facet, R::one(), p)?);
        }
        for comp in 0..3 {
            let mut coeffs = vec![R::zero(); np];
            for (i, b) in basis.iter().enumerate() {
                coeffs[i] = b[comp];
            }
            coeffs[nf + comp] = R::one();
            let w = match row.err[comp] {
                Some(e) if e > R::zero() => R::one() / (e * e),
                _ => R::one(),
            };
            rows_ls.push((coeffs, row.e[comp], w));
            per_comp[comp].push((row.e[comp], w));
        }
    }
    let fit = weighted_lstsq(&rows_ls, np).map_err(|c| Error::DegenerateFit { combination: c })?;

    // per-component RMS residuals
    let mut comp_sq = [R::zero(); 3];
    let mut comp_n = [R::zero(); 3];
    for (k, (coeffs, y, _)) in rows_ls.iter().enumerate() {
        let comp = k % 3;
        let mut pred = R::zero();
        for (c, p) in coeffs.iter().zip(&fit.params) {
            pred += *c * *p;
        }
        let r = pred - *y;
        comp_sq[comp] += r * r;
        comp_n[comp] += R::one();
    }
    let component_rms = [
        (comp_sq[0] / comp_n[0]).sqrt(),
        (comp_sq[1] / comp_n[1]).sqrt(),
        (comp_sq[2] / comp_n[2]).sqrt(),
    ];
    let se = |i: usize| fit.covariance[i * np + i].sqrt();
    Ok(StrayFieldFit {
        sigma: fit.params[..nf].to_vec(),
        sigma_se: (0..nf).map(se).collect(),
        e_offset: Vec3::new(fit.params[nf], fit.params[nf + 1], fit.params[nf + 2]),
        e_offset_se: Vec3::new(se(nf), se(nf + 1), se(nf + 2)),
        residual_norm: fit.wrss.sqrt(),
        component_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{CA40_ION_MASS_KG, ELEMENTARY_CHARGE};
    use crate::geometry::paper_preset;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_density_published_conversions() {
        let ca = IonSpecies::<f64>::ca40();
        let s1 = spectral_density(40.0, 1.0e6, &ca);
        // exact closed form with the recorded constants
        let expect = 4.0 * CA40_ION_MASS_KG * HBAR * (2.0 * std::f64::consts::PI * 1e6) * 40.0
            / ELEMENTARY_CHARGE.powi(2);
        assert_relative_eq!(s1, expect, max_relative = 1e-14);
        // the two published figures: 2.8e-13 and 1.8e-13 V²m⁻²Hz⁻¹
        assert_relative_eq!(s1, 2.7406e-13, max_relative = 1e-3);
        let s2 = spectral_density(10.0, 2.6e6, &ca);
        assert!((s2 - 1.8e-13).abs() / 1.8e-13 < 0.02);
        assert_eq!(spectral_density(0.0, 1.0e6, &ca), 0.0);
        // linear in rate and frequency
        assert_relative_eq!(
            spectral_density(80.0, 1.0e6, &ca),
            2.0 * s1,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            spectral_density(40.0, 2.0e6, &ca),
            2.0 * s1,
            max_relative = 1e-14
        );
    }

    fn row(mode: &str, f: f64, rate: f64, err: Option<f64>, t: Option<f64>) -> HeatingRow<f64> {
        HeatingRow {
            mode: mode.into(),
            freq_hz: f,
            rate,
            rate_err: err,
            temp_k: t,
            phi_deg: None,
            excluded: rate <= 0.0,
        }
    }

    #[test]
    fn power_law_exact_model() {
        let rows: Vec<_> = (1..=12)
            .map(|k| {
                let f = 0.5e6 * k as f64;
                row("axial", f, 7.0 * (f / 1e6).powf(-2.5), None, None)
            })
            .collect();
        let fit = fit_power_law(&rows, PowerLawVariable::Frequency).unwrap();
        assert_relative_eq!(fit.exponent, 2.5, epsilon = 1e-10);
        assert_relative_eq!(fit.alpha_prime().unwrap(), 1.5, epsilon = 1e-10);
        // weighting scheme does not matter on exact data
        let rows_w: Vec<_> = rows
            .iter()
            .map(|r| row("axial", r.freq_hz, r.rate, Some(0.1 * r.rate), None))
            .collect();
        let fit_w = fit_power_law(&rows_w, PowerLawVariable::Frequency).unwrap();
        assert_relative_eq!(fit_w.exponent, 2.5, epsilon = 1e-10);
    }

    #[test]
    fn power_law_temperature_sign_convention() {
        let rows: Vec<_> = (1..=8)
            .map(|k| {
                let t = 50.0 * k as f64;
                row("axial", 1e6, 0.3 * t.powf(1.34), None, Some(t))
            })
            .collect();
        let fit = fit_power_law(&rows, PowerLawVariable::Temperature).unwrap();
        assert_relative_eq!(fit.exponent, 1.34, epsilon = 1e-10);
        assert!(fit.alpha_prime().is_none());
    }

    #[test]
    fn power_law_excludes_bad_rows_and_errors_when_starved() {
        let rows = vec![
            row("axial", 1e6, -5.0, None, None),
            row("axial", 2e6, 10.0, None, None),
            row("axial", 3e6, 5.0, None, None),
        ];
        match fit_power_law(&rows, PowerLawVariable::Frequency) {
            Err(Error::InsufficientData { needed: 3, got: 2 }) => {}
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn normalization_identities_and_collapse() {
        let mut fnorm = BTreeMap::new();
        fnorm.insert("axial".to_string(), 1.0e6);
        let mut alpha = BTreeMap::new();
        alpha.insert("axial".to_string(), 2.0);
        // f = f_norm: unchanged
        let rows = vec![row("axial", 1.0e6, 30.0, Some(3.0), None)];
        let (out, chi) = normalize_frequency(&rows, &fnorm, &alpha).unwrap();
        assert_relative_eq!(chi[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(out[0].rate, 30.0, epsilon = 1e-14);
        // f = f_norm/2, α = 2 → χ = 1/4
        let rows = vec![row("axial", 0.5e6, 30.0, None, None)];
        let (_, chi) = normalize_frequency(&rows, &fnorm, &alpha).unwrap();
        assert_relative_eq!(chi[0], 0.25, epsilon = 1e-14);
        // exact-model collapse: Γ = A f^(−α) rows all map to A f_norm^(−α)
        let a = 5.5;
        let rows: Vec<_> = (1..=10)
            .map(|k| {
                let f = 0.31e6 * k as f64;
                row("axial", f, a * (f).powf(-2.0), None, None)
            })
            .collect();
        let (out, _) = normalize_frequency(&rows, &fnorm, &alpha).unwrap();
        let target = a * (1.0e6f64).powf(-2.0);
        for r in &out {
            assert_relative_eq!(r.rate, target, max_relative = 1e-10);
        }
        // invertibility: a normalized rate re-expressed at its original
        // frequency recovers the measurement exactly
        let f3 = rows[3].freq_hz;
        let mut renormed = out[3].clone();
        renormed.freq_hz = 1.0e6; // the rate now refers to f_norm
        let mut fnorm_back = BTreeMap::new();
        fnorm_back.insert("axial".to_string(), f3);
        let (back, chi_back) =
            normalize_frequency(&[renormed], &fnorm_back, &alpha).unwrap();
        assert_relative_eq!(back[0].rate, rows[3].rate, max_relative = 1e-12);
        // and the two factors cancel exactly
        let chi_fwd = (1.0e6f64 / f3).powf(-2.0);
        assert_relative_eq!(chi_fwd * chi_back[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn temperature_normalization() {
        let mut beta = BTreeMap::new();
        beta.insert("axial".to_string(), 1.0);
        let rows = vec![row("axial", 1e6, 10.0, None, Some(92.5))];
        let (out, chi) = normalize_temperature(&rows, 185.0, &beta).unwrap();
        assert_relative_eq!(chi[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(out[0].rate, 20.0, epsilon = 1e-12);
        // missing exponent for a present mode errors
        let rows = vec![row("radial", 1e6, 10.0, None, Some(100.0))];
        assert!(matches!(
            normalize_temperature(&rows, 185.0, &beta),
            Err(Error::MissingExponent(_))
        ));
    }

    #[test]
    fn repeat_stats_basics() {
        let vals: Vec<(f64, f64)> = vec![(5.0, 1.0); 7];
        let s = repeated_measurement_stats(&vals).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.mean_uncertainty, 1.0);
        assert!(repeated_measurement_stats(&vals[..1]).is_err());
    }

    #[test]
    fn angle_fit_exact_two_points_and_flat() {
        // data at 0° and 90° interpolate exactly
        let rows = vec![(0.0, 4.0, None), (90.0, 40.0, None)];
        let fit = fit_angle_model(&rows).unwrap();
        assert_relative_eq!(fit.gamma_min, 4.0, epsilon = 1e-10);
        assert_relative_eq!(fit.gamma_max, 40.0, epsilon = 1e-10);
        assert_relative_eq!(fit.ratio, 10.0, epsilon = 1e-9);
        // constant rates → Γ_min = Γ_max
        let rows = vec![(0.0, 7.0, None), (30.0, 7.0, None), (60.0, 7.0, None)];
        let fit = fit_angle_model(&rows).unwrap();
        assert_relative_eq!(fit.gamma_min, fit.gamma_max, epsilon = 1e-9);
        // narrow span warns
        let rows = vec![(10.0, 5.0, None), (15.0, 6.0, None), (20.0, 7.0, None)];
        let fit = fit_angle_model(&rows).unwrap();
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn stray_profile_offset_and_linearity() {
        let g: TrapGeometry<f64> = paper_preset();
        let xs: Vec<f64> = (-5..=5).map(|k| k as f64 * 40e-6).collect();
        let e0 = Vec3::new(100.0, -50.0, 200.0);
        let zero = vec![0.0; 4];
        let prof = spacer_field_profile(&g, &zero, e0, &xs, 2e-4).unwrap();
        for e in &prof {
            assert_relative_eq!(e.x, e0.x, epsilon = 1e-12);
            assert_relative_eq!(e.z, e0.z, epsilon = 1e-12);
        }
        let s1 = vec![100.0, 0.0, 0.0, 0.0];
        let s2 = vec![200.0, 0.0, 0.0, 0.0];
        let p1 = spacer_field_profile(&g, &s1, Vec3::zero(), &xs, 2e-4).unwrap();
        let p2 = spacer_field_profile(&g, &s2, Vec3::zero(), &xs, 2e-4).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_relative_eq!(b.x, 2.0 * a.x, max_relative = 1e-12, epsilon = 1e-15);
            assert_relative_eq!(b.y, 2.0 * a.y, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn stray_fit_roundtrip_noise_free() {
        let g: TrapGeometry<f64> = paper_preset();
        let truth = vec![1380.0, 630.0, -2510.0, 320.0];
        let e0 = Vec3::new(1310.0, 210.0, -1500.0);
        let z_ion = 2e-4;
        let xs: Vec<f64> = (-10..=10).map(|k| k as f64 * 20e-6).collect();
        let prof = spacer_field_profile(&g, &truth, e0, &xs, z_ion).unwrap();
        let rows: Vec<StrayFieldRow<f64>> = xs
            .iter()
            .zip(&prof)
            .map(|(&x, e)| StrayFieldRow {
                x,
                e: *e,
                err: [None, None, None],
            })
            .collect();
        let ds = StrayFieldDataset {
            rows,
            label: "synthetic".into(),
        };
        let fit = fit_stray_field(&ds, &g, z_ion).unwrap();
        for (got, want) in fit.sigma.iter().zip(&truth) {
            assert_relative_eq!(got, want, max_relative = 1e-8);
        }
        assert_relative_eq!(fit.e_offset.x, e0.x, max_relative = 1e-8);
        assert_relative_eq!(fit.e_offset.z, e0.z, max_relative = 1e-8);
    }

    #[test]
    fn stray_fit_scale_equivariant() {
        let g: TrapGeometry<f64> = paper_preset();
        let truth = vec![500.0, -200.0, 150.0, 90.0];
        let e0 = Vec3::new(-450.0, -380.0, -900.0);
        let z_ion = 2e-4;
        let xs: Vec<f64> = (-8..=8).map(|k| k as f64 * 25e-6).collect();
        let prof = spacer_field_profile(&g, &truth, e0, &xs, z_ion).unwrap();
        let mk = |scale: f64| StrayFieldDataset {
            rows: xs
                .iter()
                .zip(&prof)
                .map(|(&x, e)| StrayFieldRow {
                    x,
                    e: *e * scale,
                    err: [None, None, None],
                })
                .collect(),
            label: String::new(),
        };
        let f1 = fit_stray_field(&mk(1.0), &g, z_ion).unwrap();
        let f3 = fit_stray_field(&mk(3.0), &g, z_ion).unwrap();
        for (a, b) in f1.sigma.iter().zip(&f3.sigma) {
            assert_relative_eq!(*b, 3.0 * *a, max_relative = 1e-9);
        }
        assert_relative_eq!(f3.e_offset.y, 3.0 * f1.e_offset.y, max_relative = 1e-9);
    }

    #[test]
    fn stray_csv_and_range_validation() {
        let csv = "x_m,Ex,Ey,Ez,err_Ex,err_Ey,err_Ez\n-1e-4,100,200,-1500,5,5,10\n1e-4,150,180,-1400,5,5,10\n";
        let ds = StrayFieldDataset::<f64>::from_csv(csv, "t").unwrap();
        assert_eq!(ds.rows.len(), 2);
        assert_eq!(ds.rows[0].err[2], Some(10.0));
        let bad = "x_m,Ex,Ey,Ez\n5e-4,1,2,3\n";
        assert!(StrayFieldDataset::<f64>::from_csv(bad, "t").is_err());
    }

    #[test]
    fn heating_csv_parses_and_flags() {
        let csv = "mode,freq_hz,rate_phonons_s,rate_err,temp_k,phi_deg\n\
                   axial,0.95e6,43,9,153,\n\
                   axial,0.95e6,-3,9,153,\n\
                   radial-in-plane,2.65e6,20,3,153,38\n";
        let ds = HeatingDataset::<f64>::from_csv(csv).unwrap();
        assert_eq!(ds.rows.len(), 3);
        assert!(ds.rows[1].excluded);
        assert_eq!(ds.rows[2].phi_deg, Some(38.0));
        assert_eq!(ds.modes(), vec!["axial".to_string(), "radial-in-plane".to_string()]);
        // malformed row number is reported
        let bad = "mode,freq_hz,rate_phonons_s\naxial,notanumber,3\n";
        match HeatingDataset::<f64>::from_csv(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
