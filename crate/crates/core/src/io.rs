//! Text formats: the model document, sample CSV, and atomic file writes.
//!
//! A model document looks like
//!
//! ```text
//! # speedsynth model
//! [target]
//! family = uniform
//! params = -1.0, 1.0
//! [model]
//! x0 = 0.0
//! lambda = 0.5
//! wronskian = 4.0
//! left_boundary = inaccessible
//! right_boundary = inaccessible
//! [nu]
//! range = -1.0, 1.0
//! points = 201
//! x,nu,sigma_sq
//! -1.0,inf,0.0
//! ...
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! value. Purely atomic targets are stored as `atom = x, mass` lines; other
//! custom targets are written with `family = custom` and cannot be reloaded.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::engine::TerminalSample;
use crate::error::{Error, Result};
use crate::measure::{Atom, Family, TargetMeasure};
use crate::synthesis::{synthesize, BoundaryClass, DiffusionModel};

pub const DEFAULT_TABLE_POINTS: usize = 201;
const TABLE_QUANTILE: f64 = 1e-6;

/// Shortest round-trip representation; infinities as `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: '{}'", s.trim())))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

/// Default ν-table range: the support, with infinite ends replaced by the
/// `1e-6` quantiles.
pub fn default_table_range(model: &DiffusionModel) -> Result<(f64, f64)> {
    model.truncated_range(TABLE_QUANTILE)
}

/// Model document with a ν table on `points` equally spaced nodes of
/// `range`.
pub fn model_to_text_with(model: &DiffusionModel, range: (f64, f64), points: usize) -> Result<String> {
    if points < 2 || !(range.1 > range.0) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::InvalidParameters("table needs a finite range and at least two points".into()));
    }
    let mut out = String::from("# speedsynth model\n[target]\n");
    let target = model.target();
    if let Some(f) = target.family() {
        let params: Vec<String> = f.params().iter().map(|&p| fmt_f64(p)).collect();
        let _ = writeln!(out, "family = {}\nparams = {}", f.name(), params.join(", "));
    } else if target.is_purely_atomic() {
        out.push_str("family = atoms\n");
        for a in target.atoms() {
            let _ = writeln!(out, "atom = {}, {}", fmt_f64(a.x), fmt_f64(a.mass));
        }
    } else {
        out.push_str("family = custom\n");
    }
    let [lb, rb] = model.boundaries();
    let _ = writeln!(
        out,
        "[model]\nx0 = {}\nlambda = {}\nwronskian = {}\nleft_boundary = {}\nright_boundary = {}",
        fmt_f64(model.x0()),
        fmt_f64(model.lambda()),
        fmt_f64(model.wronskian()),
        lb.as_str(),
        rb.as_str()
    );
    let _ = writeln!(
        out,
        "[nu]\nrange = {}, {}\npoints = {points}\nx,nu,sigma_sq",
        fmt_f64(range.0),
        fmt_f64(range.1)
    );
    for i in 0..points {
        let x = if i + 1 == points { range.1 } else { range.0 + (range.1 - range.0) * i as f64 / (points - 1) as f64 };
        let _ = writeln!(out, "{},{},{}", fmt_f64(x), fmt_f64(model.speed_density(x)), fmt_f64(model.sigma_sq(x)));
    }
    Ok(out)
}

/// Model document with the default table (201 nodes over
/// [`default_table_range`]).
pub fn model_to_text(model: &DiffusionModel) -> Result<String> {
    model_to_text_with(model, default_table_range(model)?, DEFAULT_TABLE_POINTS)
}

/// Hex SHA-256 of the default model document.
pub fn model_hash(model: &DiffusionModel) -> Result<String> {
    let digest = Sha256::digest(model_to_text(model)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses a model document and re-synthesizes the model. The declared
/// boundary classes must agree with the rebuilt model.
pub fn model_from_text(text: &str) -> Result<DiffusionModel> {
    let mut section = "";
    let mut family: Option<String> = None;
    let mut params: Vec<f64> = Vec::new();
    let mut atoms: Vec<Atom> = Vec::new();
    let (mut x0, mut lambda, mut w) = (None, None, None);
    let mut bounds: [Option<BoundaryClass>; 2] = [None, None];
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = match line {
                "[target]" => "target",
                "[model]" => "model",
                "[nu]" => "nu",
                other => return Err(Error::Parse(format!("unknown section {other}"))),
            };
            continue;
        }
        if section == "nu" {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Parse(format!("expected key = value, got '{line}'")))?;
        match (section, key) {
            ("target", "family") => family = Some(value.to_string()),
            ("target", "params") => params = parse_list(value)?,
            ("target", "atom") => match parse_list(value)?.as_slice() {
                [x, m] => atoms.push(Atom { x: *x, mass: *m }),
                _ => return Err(Error::Parse(format!("atom needs 'x, mass', got '{value}'"))),
            },
            ("model", "x0") => x0 = Some(parse_f64(value)?),
            ("model", "lambda") => lambda = Some(parse_f64(value)?),
            ("model", "wronskian") => w = Some(parse_f64(value)?),
            ("model", "left_boundary") => bounds[0] = Some(BoundaryClass::parse(value)?),
            ("model", "right_boundary") => bounds[1] = Some(BoundaryClass::parse(value)?),
            _ => return Err(Error::Parse(format!("unexpected key '{key}' in section [{section}]"))),
        }
    }
    let missing = |name: &str| Error::Parse(format!("missing {name}"));
    let target = match family.as_deref() {
        Some("atoms") => TargetMeasure::from_parts(Vec::new(), atoms)?,
        Some("custom") => return Err(Error::Parse("custom targets cannot be reloaded".into())),
        Some(name) => TargetMeasure::from_family(Family::from_tag(name, &params)?)?,
        None => return Err(missing("target family")),
    };
    let model = synthesize(
        &target,
        x0.ok_or_else(|| missing("x0"))?,
        lambda.ok_or_else(|| missing("lambda"))?,
        w.ok_or_else(|| missing("wronskian"))?,
    )?;
    for (declared, actual) in bounds.iter().zip(model.boundaries()) {
        if let Some(d) = declared {
            if *d != actual {
                return Err(Error::Parse(format!(
                    "declared boundary {} but the model has {}",
                    d.as_str(),
                    actual.as_str()
                )));
            }
        }
    }
    Ok(model)
}

/// Single-column CSV with a metadata header block.
pub fn samples_to_csv(sample: &TerminalSample, model_hash: &str) -> String {
    let mut out = String::with_capacity(24 * sample.values.len() + 160);
    let _ = writeln!(out, "# model_hash = {model_hash}");
    let _ = writeln!(out, "# seed = {}", sample.seed);
    let _ = writeln!(out, "# engine = {}", sample.engine.as_str());
    let _ = writeln!(out, "# n = {}", sample.values.len());
    let _ = writeln!(out, "# truncation_hits = {}", sample.truncation_hits);
    out.push_str("x\n");
    for &v in &sample.values {
        out.push_str(&fmt_f64(v));
        out.push('\n');
    }
    out
}

/// Reads the values of a sample CSV written by [`samples_to_csv`].
pub fn samples_from_csv(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "x")
        .map(parse_f64)
        .collect()
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(Error::from)
}
