//! Point-file input and output. CSV is the primary format (header
//! `x,y[,z[,label]]`, round-trip float precision); ASCII PLY files are
//! accepted on input (detected by their magic line) and written on request
//! for 3D clouds.

use std::fmt::Write as _;
use std::path::Path;

use ellmix::model::PointCloud;

use crate::args::Format;
use crate::error::{load_error, CliError};

pub struct LoadedPoints {
    pub cloud: PointCloud,
    pub labels: Option<Vec<usize>>,
}

pub fn read_points(path: &Path) -> Result<LoadedPoints, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with("ply") {
        parse_ply(&text, path)
    } else {
        parse_csv(&text, path)
    }
}

fn parse_csv(text: &str, path: &Path) -> Result<LoadedPoints, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty file", path.display())))?;
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let (dim, has_label) = match names.as_slice() {
        ["x", "y"] => (2, false),
        ["x", "y", "z"] => (3, false),
        ["x", "y", "label"] => (2, true),
        ["x", "y", "z", "label"] => (3, true),
        _ => {
            return Err(CliError::data(format!(
                "{}: unrecognized header {header:?}; expected x,y[,z][,label]",
                path.display()
            )))
        }
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1; // 1-based file line number
        let fields: Vec<&str> = line.split(',').collect();
        let expected = dim + usize::from(has_label);
        if fields.len() != expected {
            return Err(CliError::data(format!(
                "{}: row {row}: {} fields, expected {expected}",
                path.display(),
                fields.len()
            )));
        }
        for (c, field) in fields.iter().take(dim).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                CliError::data(format!(
                    "{}: row {row}: column {:?}: could not parse {:?} as a number",
                    path.display(),
                    names[c],
                    field.trim()
                ))
            })?;
            data.push(value);
        }
        if has_label {
            let field = fields[dim].trim();
            let label: usize = field.parse().map_err(|_| {
                CliError::data(format!(
                    "{}: row {row}: column \"label\": could not parse {field:?} as an integer",
                    path.display()
                ))
            })?;
            labels.push(label);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let cloud = PointCloud::from_row_major(n, dim, data)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(LoadedPoints {
        cloud,
        labels: if has_label { Some(labels) } else { None },
    })
}

fn parse_ply(text: &str, path: &Path) -> Result<LoadedPoints, CliError> {
    let fail = |msg: String| CliError::data(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(fail("not a PLY file".into()));
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    let mut properties: Vec<String> = Vec::new();
    let mut saw_format = false;
    for line in lines.by_ref() {
        let line = line.trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                if words.next() != Some("ascii") {
                    return Err(fail("only ASCII PLY is supported".into()));
                }
                saw_format = true;
            }
            Some("comment") => {}
            Some("element") => {
                let kind = words.next().unwrap_or("");
                in_vertex_element = kind == "vertex";
                if in_vertex_element {
                    let count = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| fail("bad vertex element count".into()))?;
                    vertex_count = Some(count);
                } else if vertex_count.is_none() {
                    return Err(fail(format!("unsupported leading element {kind:?}")));
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let _ty = words.next();
                    if let Some(name) = words.next() {
                        properties.push(name.to_string());
                    }
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(fail(format!("unexpected header line {other:?}"))),
            None => {}
        }
    }
    if !saw_format {
        return Err(fail("missing format line".into()));
    }
    let count = vertex_count.ok_or_else(|| fail("no vertex element".into()))?;
    let coord_idx: Vec<usize> = ["x", "y", "z"]
        .iter()
        .map(|c| {
            properties
                .iter()
                .position(|p| p == c)
                .ok_or_else(|| fail(format!("vertex element lacks property {c:?}")))
        })
        .collect::<Result<_, _>>()?;

    let mut data = Vec::with_capacity(3 * count);
    let mut got = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if got == count {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(fail(format!(
                "vertex row {}: {} fields, expected {}",
                got + 1,
                fields.len(),
                properties.len()
            )));
        }
        for &ci in &coord_idx {
            let value: f64 = fields[ci].parse().map_err(|_| {
                fail(format!(
                    "vertex row {}: could not parse {:?} as a number",
                    got + 1,
                    fields[ci]
                ))
            })?;
            data.push(value);
        }
        got += 1;
    }
    if got != count {
        return Err(fail(format!("header promised {count} vertices, found {got}")));
    }
    let cloud = PointCloud::from_row_major(count, 3, data).map_err(load_error)?;
    Ok(LoadedPoints {
        cloud,
        labels: None,
    })
}

pub fn write_points(
    path: &Path,
    cloud: &PointCloud,
    labels: Option<&[usize]>,
    format: Format,
) -> Result<(), CliError> {
    let text = match format {
        Format::Csv => render_csv(cloud, labels),
        Format::Ply => {
            if cloud.dim() != 3 {
                return Err(CliError::usage(
                    "PLY output requires 3D points; use --format csv for 2D",
                ));
            }
            if labels.is_some() {
                eprintln!("note: PLY output carries coordinates only; labels dropped");
            }
            render_ply(cloud)
        }
    };
    std::fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn render_csv(cloud: &PointCloud, labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    let header: &str = match (cloud.dim(), labels.is_some()) {
        (2, false) => "x,y",
        (2, true) => "x,y,label",
        (3, false) => "x,y,z",
        _ => "x,y,z,label",
    };
    out.push_str(header);
    out.push('\n');
    for i in 0..cloud.n() {
        let p = cloud.point(i);
        let _ = write!(out, "{}", p[0]);
        for j in 1..cloud.dim() {
            let _ = write!(out, ",{}", p[j]);
        }
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    out
}

fn render_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.n()
    );
    for i in 0..cloud.n() {
        let p = cloud.point(i);
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}
