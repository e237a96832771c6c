//! Plain-text mesh format and legacy ASCII VTK export.
//!
//! The mesh format is line oriented:
//!
//! ```text
//! # h 0.1
//! nodes N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, counterclockwise)
//! boundary B
//! i j MARKER     (B lines, MARKER is OUTER or INNER)
//! ```
//!
//! Lines starting with `#` are comments; `# h <value>` records the
//! characteristic edge length.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{BoundaryEdge, Marker, Mesh2D};
use crate::error::{Error, Result};
use crate::scalar::{lit, norm, sub, to_f64, Scalar};

pub fn write_mesh<T: Scalar, W: Write>(mesh: &Mesh2D<T>, mut out: W) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "# h {:.16e}", to_f64(mesh.characteristic_h())).unwrap();
    writeln!(s, "nodes {}", mesh.num_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:.16e} {:.16e}", to_f64(p[0]), to_f64(p[1])).unwrap();
    }
    writeln!(s, "triangles {}", mesh.num_triangles()).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary_edges().len()).unwrap();
    for e in mesh.boundary_edges() {
        let tag = match e.marker {
            Marker::Outer => "OUTER",
            Marker::Inner => "INNER",
        };
        writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], tag).unwrap();
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_mesh<T: Scalar, R: BufRead>(input: R) -> Result<Mesh2D<T>> {
    let mut h: Option<T> = None;
    let mut lines = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            if it.next() == Some("h") {
                h = it.next().and_then(|v| v.parse::<f64>().ok()).map(lit);
            }
            continue;
        }
        if !trimmed.is_empty() {
            lines.push((no + 1, trimmed.to_string()));
        }
    }
    let mut cursor = lines.into_iter();
    let n = header(&mut cursor, "nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, line) = cursor.next().ok_or_else(|| Error::Parse("truncated node list".into()))?;
        let v = parse_fields::<f64>(&line, 2, no)?;
        nodes.push([lit::<T>(v[0]), lit::<T>(v[1])]);
    }
    let m = header(&mut cursor, "triangles")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let (no, line) = cursor.next().ok_or_else(|| Error::Parse("truncated triangle list".into()))?;
        let v = parse_fields::<usize>(&line, 3, no)?;
        triangles.push([v[0], v[1], v[2]]);
    }
    let b = header(&mut cursor, "boundary")?;
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let (no, line) = cursor.next().ok_or_else(|| Error::Parse("truncated boundary list".into()))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("line {no}: expected `i j marker`")));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("line {no}: bad index `{s}`")));
        let marker = match parts[2] {
            "OUTER" | "outer" => Marker::Outer,
            "INNER" | "inner" => Marker::Inner,
            code => code
                .parse::<u8>()
                .ok()
                .and_then(Marker::from_code)
                .ok_or_else(|| Error::Parse(format!("line {no}: unknown marker `{code}`")))?,
        };
        boundary.push(BoundaryEdge { nodes: [idx(parts[0])?, idx(parts[1])?], marker });
    }
    let h = match h {
        Some(h) => h,
        None => mean_edge_length(&nodes, &triangles),
    };
    Mesh2D::new(nodes, triangles, boundary, h)
}

fn header(cursor: &mut impl Iterator<Item = (usize, String)>, name: &str) -> Result<usize> {
    let (no, line) = cursor.next().ok_or_else(|| Error::Parse(format!("missing `{name}` header")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(name) {
        return Err(Error::Parse(format!("line {no}: expected `{name} <count>`")));
    }
    parts.next().and_then(|c| c.parse().ok()).ok_or_else(|| Error::Parse(format!("line {no}: bad count")))
}

fn parse_fields<V: std::str::FromStr>(line: &str, count: usize, no: usize) -> Result<Vec<V>> {
    let v: Vec<V> = line
        .split_whitespace()
        .map(|s| s.parse::<V>().map_err(|_| Error::Parse(format!("line {no}: cannot parse `{s}`"))))
        .collect::<Result<_>>()?;
    if v.len() != count {
        return Err(Error::Parse(format!("line {no}: expected {count} fields, found {}", v.len())));
    }
    Ok(v)
}

fn mean_edge_length<T: Scalar>(nodes: &[[T; 2]], triangles: &[[usize; 3]]) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for t in triangles {
        for k in 0..3 {
            if let (Some(a), Some(b)) = (nodes.get(t[k]), nodes.get(t[(k + 1) % 3])) {
                sum += norm(sub(*a, *b));
                count += 1;
            }
        }
    }
    if count == 0 {
        T::one()
    } else {
        sum / lit(count as f64)
    }
}

/// Nodal data attached to a VTK export.
#[derive(Clone, Debug)]
pub enum PointData {
    Scalars { name: String, values: Vec<f64> },
    /// 2D vectors, padded with a zero third component on output.
    Vectors { name: String, values: Vec<[f64; 2]> },
}

/// Writes a legacy ASCII VTK unstructured grid of triangles.
pub fn write_vtk<T: Scalar, W: Write>(mesh: &Mesh2D<T>, title: &str, data: &[PointData], mut out: W) -> Result<()> {
    let n = mesh.num_nodes();
    for d in data {
        let len = match d {
            PointData::Scalars { values, .. } => values.len(),
            PointData::Vectors { values, .. } => values.len(),
        };
        if len != n {
            return Err(Error::Contract(format!("point data has {len} values for {n} nodes")));
        }
    }
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "{}", title.lines().next().unwrap_or("shapeflow")).unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {n} double").unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:.16e} {:.16e} 0", to_f64(p[0]), to_f64(p[1])).unwrap();
    }
    let m = mesh.num_triangles();
    writeln!(s, "CELLS {m} {}", 4 * m).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        writeln!(s, "5").unwrap();
    }
    if !data.is_empty() {
        writeln!(s, "POINT_DATA {n}").unwrap();
    }
    for d in data {
        match d {
            PointData::Scalars { name, values } => {
                writeln!(s, "SCALARS {name} double 1").unwrap();
                writeln!(s, "LOOKUP_TABLE default").unwrap();
                for v in values {
                    writeln!(s, "{v:.16e}").unwrap();
                }
            }
            PointData::Vectors { name, values } => {
                writeln!(s, "VECTORS {name} double").unwrap();
                for v in values {
                    writeln!(s, "{:.16e} {:.16e} 0", v[0], v[1]).unwrap();
                }
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gen_annulus, BoundaryCurve};

    #[test]
    fn text_format_round_trip() {
        let mesh = gen_annulus(&BoundaryCurve::Ellipse { a: 0.6, b: 0.4 }, 0.2).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back: Mesh2D<f64> = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn malformed_input_is_a_parse_error() {
        let bad = "nodes 2\n0 0\n1\n";
        assert!(matches!(read_mesh::<f64, _>(bad.as_bytes()), Err(Error::Parse(_))));
        let bad_marker = "nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 1\n0 1 SIDE\n";
        assert!(matches!(read_mesh::<f64, _>(bad_marker.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn vtk_layout() {
        let mesh = gen_annulus(&BoundaryCurve::circle(0.3), 0.3).unwrap();
        let n = mesh.num_nodes();
        let mut buf = Vec::new();
        let data = vec![
            PointData::Scalars { name: "p".into(), values: vec![0.0; n] },
            PointData::Vectors { name: "u".into(), values: vec![[1.0, 2.0]; n] },
        ];
        write_vtk(&mesh, "test", &data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {n} double")));
        assert!(text.contains(&format!("CELL_TYPES {}", mesh.num_triangles())));
        assert!(text.contains("VECTORS u double\n1.0000000000000000e0 2.0000000000000000e0 0\n"));
    }
}
