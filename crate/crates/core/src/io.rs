//! Text file format for manifold-valued signals, CSV energy traces, and
//! raster previews.
//!
//! The MVS format is a plain text format chosen for diffability:
//!
//! ```text
//! MVS1 <manifold> <shape>
//! <c0> <c1> ... <c_{ambient-1}>      one line per sample, row-major
//! ```
//!
//! Manifold tokens are `euclidean:N`, `circle`, `sphere:N`, `so3`, `spd:N`,
//! or `product(a,b,...)`; shapes are `1d:N` or `2d:RxC`. Coordinates are
//! written with the shortest representation that parses back to the same
//! bits, so write∘read is the identity on valid signals.

use crate::error::{MvrError, Result};
use crate::manifold::Manifold;
use crate::signal::{Signal, SignalShape};
use crate::solver::TraceRow;
use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

/// Constraint drift tolerated without comment; at fp-noise level the parsed
/// bytes are kept verbatim.
const SILENT_TOL: f64 = 1e-14;
/// Drift repaired by re-projection with a warning.
const WARN_TOL: f64 = 1e-8;
/// Beyond this the row is rejected.
const REJECT_TOL: f64 = 1e-4;

/// A parsed signal together with any repairs made during loading.
#[derive(Debug)]
pub struct MvsDocument {
    pub signal: Signal,
    pub warnings: Vec<String>,
}

/// Parses a manifold token as used in MVS headers and on the command line.
pub fn parse_manifold(token: &str) -> Result<Manifold> {
    let t = token.trim();
    let bad = |msg: String| MvrError::InvalidArgument(msg);
    if let Some(inner) = t.strip_prefix("product(") {
        let inner = inner
            .strip_suffix(')')
            .ok_or_else(|| bad(format!("unterminated product in manifold token '{t}'")))?;
        let mut factors = Vec::new();
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth = depth
                        .checked_sub(1)
                        .ok_or_else(|| bad(format!("unbalanced parentheses in '{t}'")))?
                }
                ',' if depth == 0 => {
                    factors.push(parse_manifold(&inner[start..i])?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(bad(format!("unbalanced parentheses in '{t}'")));
        }
        factors.push(parse_manifold(&inner[start..])?);
        return Manifold::product(factors);
    }
    match t {
        "circle" => return Ok(Manifold::Circle),
        "so3" => return Ok(Manifold::Rotations3),
        _ => {}
    }
    let (kind, dim) = t
        .split_once(':')
        .ok_or_else(|| bad(format!("unknown manifold token '{t}'")))?;
    let n: usize = dim
        .parse()
        .map_err(|_| bad(format!("bad dimension '{dim}' in manifold token '{t}'")))?;
    if n == 0 {
        return Err(bad(format!("dimension must be positive in '{t}'")));
    }
    match kind {
        "euclidean" => Ok(Manifold::Euclidean(n)),
        "sphere" => Ok(Manifold::Sphere(n)),
        "spd" => Ok(Manifold::Spd(n)),
        _ => Err(bad(format!("unknown manifold token '{t}'"))),
    }
}

fn parse_shape(token: &str) -> Result<SignalShape> {
    let bad = || MvrError::InvalidArgument(format!("bad shape token '{token}'"));
    if let Some(n) = token.strip_prefix("1d:") {
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        return Ok(SignalShape::One(n));
    }
    if let Some(rc) = token.strip_prefix("2d:") {
        let (r, c) = rc.split_once('x').ok_or_else(bad)?;
        let r: usize = r.parse().map_err(|_| bad())?;
        let c: usize = c.parse().map_err(|_| bad())?;
        if r == 0 || c == 0 {
            return Err(bad());
        }
        return Ok(SignalShape::Two(r, c));
    }
    Err(bad())
}

/// Parses MVS text. Mild constraint drift is repaired (see the warning list
/// in the returned document); drift beyond 1e-4 and malformed rows are
/// errors carrying the 1-based line number. Circle angles outside [−π, π)
/// are wrapped with a warning.
pub fn parse_mvs(text: &str) -> Result<MvsDocument> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or(MvrError::Parse { line: 1, msg: "empty file".into() })?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("MVS1") {
        return Err(MvrError::Parse {
            line: 1,
            msg: "expected header 'MVS1 <manifold> <shape>'".into(),
        });
    }
    let mtok = parts.next().ok_or(MvrError::Parse {
        line: 1,
        msg: "missing manifold token".into(),
    })?;
    let stok = parts.next().ok_or(MvrError::Parse {
        line: 1,
        msg: "missing shape token".into(),
    })?;
    if parts.next().is_some() {
        return Err(MvrError::Parse { line: 1, msg: "trailing tokens in header".into() });
    }
    let at_line = |line: usize| move |e: MvrError| MvrError::Parse { line, msg: e.to_string() };
    let manifold = parse_manifold(mtok).map_err(at_line(1))?;
    let shape = parse_shape(stok).map_err(at_line(1))?;
    let amb = manifold.ambient_dim();

    let mut warnings = Vec::new();
    let mut data = Vec::with_capacity(shape.len() * amb);
    for s in 0..shape.len() {
        let line_no = s + 2;
        let row = lines.next().ok_or(MvrError::Parse {
            line: line_no,
            msg: format!("expected {} sample lines, file ends after {s}", shape.len()),
        })?;
        let mut coords = Vec::with_capacity(amb);
        for tok in row.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| MvrError::Parse {
                line: line_no,
                msg: format!("bad coordinate '{tok}'"),
            })?;
            coords.push(v);
        }
        if coords.len() != amb {
            return Err(MvrError::Parse {
                line: line_no,
                msg: format!("expected {amb} coordinates, got {}", coords.len()),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(MvrError::Parse {
                line: line_no,
                msg: "non-finite coordinate".into(),
            });
        }
        for (factor, range) in manifold.factors() {
            let slice = &mut coords[range];
            if *factor == Manifold::Circle {
                let a = slice[0];
                if !(-PI..PI).contains(&a) {
                    factor.project(slice);
                    warnings.push(format!(
                        "line {line_no}: angle {a} wrapped to {}",
                        slice[0]
                    ));
                }
                continue;
            }
            let v = factor.constraint_violation(slice);
            if v > REJECT_TOL {
                return Err(MvrError::Parse {
                    line: line_no,
                    msg: format!("{} constraint violated by {v:.3e}", factor.name()),
                });
            }
            if v > SILENT_TOL {
                factor.project(slice);
                if v > WARN_TOL {
                    warnings.push(format!(
                        "line {line_no}: re-projected onto {} (violation {v:.3e})",
                        factor.name()
                    ));
                }
            }
        }
        data.extend_from_slice(&coords);
    }
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(MvrError::Parse {
            line: shape.len() + 2,
            msg: format!("unexpected trailing content '{extra}'"),
        });
    }
    Ok(MvsDocument {
        signal: Signal::from_canonical_coords(manifold, shape, data),
        warnings,
    })
}

/// Serializes a signal to MVS text.
pub fn format_mvs(u: &Signal) -> String {
    let mut out = String::new();
    let shape = match u.shape {
        SignalShape::One(n) => format!("1d:{n}"),
        SignalShape::Two(r, c) => format!("2d:{r}x{c}"),
    };
    let _ = writeln!(out, "MVS1 {} {}", u.manifold.name(), shape);
    for p in u.iter_points() {
        let mut sep = "";
        for c in p {
            let _ = write!(out, "{sep}{c}");
            sep = " ";
        }
        out.push('\n');
    }
    out
}

pub fn read_mvs(path: impl AsRef<Path>) -> Result<MvsDocument> {
    parse_mvs(&std::fs::read_to_string(path)?)
}

pub fn write_mvs(path: impl AsRef<Path>, u: &Signal) -> Result<()> {
    Ok(std::fs::write(path, format_mvs(u))?)
}

/// Energy trace as CSV with the fixed column set
/// `iteration,data,reg,total`.
pub fn format_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,data,reg,total\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.data, r.reg, r.total);
    }
    out
}

pub fn write_trace_csv(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    Ok(std::fs::write(path, format_trace_csv(rows))?)
}

// --- raster previews -----------------------------------------------------

fn hsv_byte(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = (h.rem_euclid(1.0)) * 6.0;
    let i = h.floor() as i32 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [to_byte(r), to_byte(g), to_byte(b)]
}

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn gray(x: f64) -> [u8; 3] {
    let b = to_byte(x);
    [b, b, b]
}

/// Fractional-anisotropy style measure of an n×n SPD matrix in [0, 1]:
/// normalized eigenvalue spread, 0 for isotropic tensors.
fn spd_anisotropy(n: usize, coords: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(n, n, coords);
    let ev = m.symmetric_eigen().eigenvalues;
    let mean = ev.sum() / n as f64;
    let spread: f64 = ev.iter().map(|l| (l - mean) * (l - mean)).sum();
    let total: f64 = ev.iter().map(|l| l * l).sum();
    if total <= 0.0 {
        return 0.0;
    }
    ((n as f64 / (n as f64 - 1.0)) * spread / total).sqrt().min(1.0)
}

fn rotation_angle(coords: &[f64]) -> f64 {
    let trace = coords[0] + coords[4] + coords[8];
    ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Per-channel minimum and spread of the first `k` coordinates, for
/// normalizing euclidean previews.
fn channel_ranges(u: &Signal, k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|c| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in u.iter_points() {
                lo = lo.min(p[c]);
                hi = hi.max(p[c]);
            }
            (lo, hi - lo)
        })
        .collect()
}

/// Renders a signal as a binary PPM image (one pixel per sample; 1-D
/// signals become a single-row strip).
///
/// Color conventions: circle → hue wheel (−π maps to red), 2-sphere → hue
/// from azimuth and value from the polar coordinate, SPD → anisotropy
/// grayscale, SO(3) → rotation-angle grayscale, euclidean → min-max
/// normalized gray (1 channel) or RGB (first 3 channels). For products the
/// first factor decides.
pub fn render_preview(u: &Signal) -> Vec<u8> {
    let (rows, cols) = u.dims();
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    let factors = u.manifold.factors();
    let (factor, range) = &factors[0];
    let euclid_ranges = match factor {
        Manifold::Euclidean(d) => channel_ranges(u, (*d).min(3)),
        _ => Vec::new(),
    };
    for i in 0..u.len() {
        let p = &u.point(i)[range.clone()];
        let px = match factor {
            Manifold::Circle => hsv_byte((p[0] + PI) / (2.0 * PI), 1.0, 1.0),
            Manifold::Sphere(2) => {
                let hue = (p[1].atan2(p[0]) + PI) / (2.0 * PI);
                hsv_byte(hue, 1.0, (p[2] + 1.0) / 2.0)
            }
            Manifold::Sphere(_) => gray((p[0] + 1.0) / 2.0),
            Manifold::Spd(n) => gray(spd_anisotropy(*n, p)),
            Manifold::Rotations3 => gray(rotation_angle(p) / PI),
            Manifold::Euclidean(1) => {
                let (lo, span) = euclid_ranges[0];
                gray(if span > 0.0 { (p[0] - lo) / span } else { 0.5 })
            }
            Manifold::Euclidean(_) => {
                let mut px = [128u8; 3];
                for (c, &(lo, span)) in euclid_ranges.iter().enumerate() {
                    px[c] = to_byte(if span > 0.0 { (p[c] - lo) / span } else { 0.5 });
                }
                px
            }
            Manifold::Product(_) => unreachable!("factors() never yields a product"),
        };
        out.extend_from_slice(&px);
    }
    out
}

pub fn write_preview(path: impl AsRef<Path>, u: &Signal) -> Result<()> {
    Ok(std::fs::write(path, render_preview(u))?)
}
