//! Plain-text triangulation files.
//!
//! ```text
//! nodes N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, 0-based node indices)
//! boundary B     (optional section)
//! i j marker     (B lines)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{MeshError, Point};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Triangulation {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Optional labels for boundary edges: `(i, j, marker)`.
    pub boundary: Vec<(usize, usize, i64)>,
}

impl Triangulation {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .peekable();

        let nodes = section(&mut lines, "nodes", |line, fields| {
            let [x, y] = numbers::<f64, 2>(line, fields)?;
            if !x.is_finite() || !y.is_finite() {
                return Err(parse_error(line, "non-finite coordinate"));
            }
            Ok([x, y])
        })?;
        let triangles = section(&mut lines, "triangles", |line, fields| {
            let t = numbers::<usize, 3>(line, fields)?;
            if let Some(&bad) = t.iter().find(|&&i| i >= nodes.len()) {
                return Err(parse_error(line, &format!("node index {bad} out of range")));
            }
            Ok(t)
        })?;
        let boundary = if lines.peek().is_some() {
            section(&mut lines, "boundary", |line, fields| {
                let [i, j] = numbers::<usize, 2>(line, &fields[..fields.len().min(2)])?;
                let marker = fields
                    .get(2)
                    .ok_or_else(|| parse_error(line, "missing boundary marker"))?
                    .parse::<i64>()
                    .map_err(|e| parse_error(line, &e.to_string()))?;
                if fields.len() != 3 {
                    return Err(parse_error(line, "expected `i j marker`"));
                }
                if i >= nodes.len() || j >= nodes.len() {
                    return Err(parse_error(line, "node index out of range"));
                }
                Ok((i, j, marker))
            })?
        } else {
            Vec::new()
        };
        if let Some((line, _)) = lines.next() {
            return Err(parse_error(line, "unexpected trailing content"));
        }
        Ok(Triangulation { nodes, triangles, boundary })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes {}", self.nodes.len()).unwrap();
        for p in &self.nodes {
            writeln!(out, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        writeln!(out, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        if !self.boundary.is_empty() {
            writeln!(out, "boundary {}", self.boundary.len()).unwrap();
            for (i, j, m) in &self.boundary {
                writeln!(out, "{i} {j} {m}").unwrap();
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_error(line: usize, message: &str) -> MeshError {
    MeshError::Parse { line, message: message.to_string() }
}

fn section<'a, T>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    keyword: &str,
    mut item: impl FnMut(usize, &[&str]) -> Result<T, MeshError>,
) -> Result<Vec<T>, MeshError> {
    let (line, header) = lines.next().ok_or_else(|| parse_error(0, &format!("missing `{keyword}` section")))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let count = match fields.as_slice() {
        [k, n] if *k == keyword => n.parse::<usize>().map_err(|e| parse_error(line, &e.to_string()))?,
        _ => return Err(parse_error(line, &format!("expected `{keyword} <count>`"))),
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, text) =
            lines.next().ok_or_else(|| parse_error(line, &format!("`{keyword}` section declares {count} entries")))?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        out.push(item(line, &fields)?);
    }
    Ok(out)
}

fn numbers<T: std::str::FromStr, const N: usize>(line: usize, fields: &[&str]) -> Result<[T; N], MeshError>
where
    T::Err: std::fmt::Display,
{
    if fields.len() != N {
        return Err(parse_error(line, &format!("expected {N} values, found {}", fields.len())));
    }
    let parsed: Vec<T> = fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|e| parse_error(line, &e.to_string())))
        .collect::<Result<_, _>>()?;
    parsed.try_into().map_err(|_| parse_error(line, "internal length mismatch"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::staggered_unit_square;

    #[test]
    fn round_trip() {
        let mut tri = staggered_unit_square(3);
        tri.boundary.push((0, 1, 4));
        let parsed = Triangulation::parse(&tri.to_text()).unwrap();
        assert_eq!(parsed, tri);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# unit triangle\nnodes 3\n0 0\n1 0\n\n0 1\ntriangles 1\n0 1 2\n";
        let tri = Triangulation::parse(text).unwrap();
        assert_eq!(tri.nodes.len(), 3);
        assert_eq!(tri.triangles, vec![[0, 1, 2]]);
        assert!(tri.boundary.is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Triangulation::parse("nodes 2\n0 0\n1 x\ntriangles 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 3, .. }), "{err}");
        let err = Triangulation::parse("nodes 1\n0 0\ntriangles 1\n0 0 4\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 4, .. }), "{err}");
        let err = Triangulation::parse("nodes 3\n0 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { .. }));
        let err = Triangulation::parse("vertices 1\n0 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = Triangulation::read("/nonexistent/mesh.txt").unwrap_err();
        assert!(matches!(err, MeshError::Io(_)));
    }
}
