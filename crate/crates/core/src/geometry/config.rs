//! Structured-text geometry config.
//!
//! Lengths are micrometers. Sections, in any order:
//!
//! ```text
//! # comment
//! [trap]
//! plane_separation = 400
//! slit_width = 550
//!
//! [plane.bottom]
//! patch = { id = "A", role = "dc", x_min = -100, x_max = 100, y_min = -60, y_max = 60 }
//!
//! [plane.top]
//! patch = { id = "top 1", role = "dc", x_min = -2500, x_max = 2500, y_min = 0, y_max = 2000 }
//!
//! [spacer]
//! facet = { id = "spacer 1", x0 = 450, y0 = 1000, x1 = 2450, y1 = 1000, z_min = 0, z_max = 400 }
//! ```
//!
//! The built-in preset serialized by [`serialize_geometry`] is the reference
//! example of the schema.

use super::{ElectrodePatch, Plane, Rect, Role, SpacerFacet, TrapGeometry};
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::collections::BTreeMap;
use std::fmt::Write as _;

const UM: f64 = 1e-6;

/// Parse and validate a geometry config.
pub fn load_geometry<R: Real>(text: &str) -> Result<TrapGeometry<R>> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Trap,
        PlaneBottom,
        PlaneTop,
        Spacer,
    }
    let mut section = Section::None;
    let mut separation: Option<f64> = None;
    let mut slit: Option<f64> = None;
    let mut patches: Vec<ElectrodePatch<R>> = Vec::new();
    let mut facets: Vec<SpacerFacet<R>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "trap" => Section::Trap,
                "plane.bottom" => Section::PlaneBottom,
                "plane.top" => Section::PlaneTop,
                "spacer" => Section::Spacer,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unknown section '[{other}]'"),
                    })
                }
            };
            continue;
        }
        let (key, value) = split_kv(line, lineno)?;
        match (section, key) {
            (Section::Trap, "plane_separation") => {
                separation = Some(parse_number(value, lineno)?);
            }
            (Section::Trap, "slit_width") => {
                slit = Some(parse_number(value, lineno)?);
            }
            (Section::PlaneBottom, "patch") | (Section::PlaneTop, "patch") => {
                let plane = if section == Section::PlaneBottom {
                    Plane::Bottom
                } else {
                    Plane::Top
                };
                let fields = parse_record(value, lineno)?;
                patches.push(patch_from_record(&fields, plane, lineno)?);
            }
            (Section::Spacer, "facet") => {
                let fields = parse_record(value, lineno)?;
                facets.push(facet_from_record(&fields, lineno)?);
            }
            (Section::None, _) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "entry before any [section] header".into(),
                })
            }
            (_, other) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unexpected key '{other}' in this section"),
                })
            }
        }
    }

    let separation = separation.ok_or_else(|| Error::Validation(
        "missing [trap] plane_separation".into(),
    ))?;
    TrapGeometry {
        plane_separation: R::c(separation * UM),
        slit_width: R::c(slit.unwrap_or(0.0) * UM),
        patches,
        facets,
    }
    .validated()
}

/// Serialize to the canonical config text (micrometers).
pub fn serialize_geometry<R: Real>(g: &TrapGeometry<R>) -> String {
    let mut out = String::new();
    let um = |v: R| v.as_f64() / UM;
    out.push_str("# trap geometry (lengths in micrometers)\n[trap]\n");
    let _ = writeln!(out, "plane_separation = {}", um(g.plane_separation));
    let _ = writeln!(out, "slit_width = {}", um(g.slit_width));
    for plane in [Plane::Bottom, Plane::Top] {
        let _ = writeln!(out, "\n[plane.{}]", plane.as_str());
        for p in g.patches.iter().filter(|p| p.plane == plane) {
            let _ = writeln!(
                out,
                "patch = {{ id = \"{}\", role = \"{}\", x_min = {}, x_max = {}, y_min = {}, y_max = {} }}",
                p.id,
                p.role.as_str(),
                um(p.rect.x_min),
                um(p.rect.x_max),
                um(p.rect.y_min),
                um(p.rect.y_max),
            );
        }
    }
    if !g.facets.is_empty() {
        out.push_str("\n[spacer]\n");
        for f in &g.facets {
            let _ = writeln!(
                out,
                "facet = {{ id = \"{}\", x0 = {}, y0 = {}, x1 = {}, y1 = {}, z_min = {}, z_max = {} }}",
                f.id,
                um(f.start.0),
                um(f.start.1),
                um(f.end.0),
                um(f.end.1),
                um(f.z_min),
                um(f.z_max),
            );
        }
    }
    out
}

fn strip_comment(line: &str) -> &str {
    // '#' starts a comment outside quotes
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn split_kv(line: &str, lineno: usize) -> Result<(&str, &str)> {
    let pos = line.find('=').ok_or_else(|| Error::Parse {
        line: lineno,
        message: "expected 'key = value'".into(),
    })?;
    Ok((line[..pos].trim(), line[pos + 1..].trim()))
}

fn parse_number(s: &str, lineno: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("invalid number '{s}'"),
    })
}

fn parse_record(value: &str, lineno: usize) -> Result<BTreeMap<String, String>> {
    let inner = value
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected '{ key = value, ... }'".into(),
        })?;
    let mut fields = BTreeMap::new();
    for part in split_top_level(inner) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = split_kv(part, lineno)?;
        let v = v.trim().trim_matches('"').to_string();
        fields.insert(k.to_string(), v);
    }
    Ok(fields)
}

/// Split on commas that are not inside quotes.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0usize;
    let mut in_quote = false;
    for (i, ch) in s.char_indices() {
        match ch {
            '"' => in_quote = !in_quote,
            ',' if !in_quote => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn record_number(
    fields: &BTreeMap<String, String>,
    key: &str,
    lineno: usize,
) -> Result<f64> {
    let v = fields.get(key).ok_or_else(|| Error::Parse {
        line: lineno,
        message: format!("missing field '{key}'"),
    })?;
    parse_number(v, lineno)
}

fn patch_from_record<R: Real>(
    fields: &BTreeMap<String, String>,
    plane: Plane,
    lineno: usize,
) -> Result<ElectrodePatch<R>> {
    let id = fields.get("id").ok_or_else(|| Error::Parse {
        line: lineno,
        message: "missing field 'id'".into(),
    })?;
    let role_s = fields.get("role").map(String::as_str).unwrap_or("dc");
    let role = Role::parse(role_s).ok_or_else(|| Error::Parse {
        line: lineno,
        message: format!("unknown role '{role_s}' (expected dc, rf, or ground)"),
    })?;
    Ok(ElectrodePatch {
        id: id.clone(),
        plane,
        role,
        rect: Rect::from_um(
            record_number(fields, "x_min", lineno)?,
            record_number(fields, "x_max", lineno)?,
            record_number(fields, "y_min", lineno)?,
            record_number(fields, "y_max", lineno)?,
        ),
    })
}

fn facet_from_record<R: Real>(
    fields: &BTreeMap<String, String>,
    lineno: usize,
) -> Result<SpacerFacet<R>> {
    let id = fields.get("id").ok_or_else(|| Error::Parse {
        line: lineno,
        message: "missing field 'id'".into(),
    })?;
    Ok(SpacerFacet {
        id: id.clone(),
        start: (
            R::c(record_number(fields, "x0", lineno)? * UM),
            R::c(record_number(fields, "y0", lineno)? * UM),
        ),
        end: (
            R::c(record_number(fields, "x1", lineno)? * UM),
            R::c(record_number(fields, "y1", lineno)? * UM),
        ),
        z_min: R::c(record_number(fields, "z_min", lineno)? * UM),
        z_max: R::c(record_number(fields, "z_max", lineno)? * UM),
        notes: fields.get("notes").cloned().unwrap_or_default(),
    })
}
