//! Plain-text mesh format.
//!
//! ```text
//! #vertices #triangles
//! x y            (one line per vertex)
//! i j k          (one line per triangle, 0-based)
//! i j tag        (one line per boundary facet)
//! ```

use super::{Mesh, Point2};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MeshIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Mesh {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.num_vertices(), self.num_elements()).unwrap();
        for p in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", p.x, p.y).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        for &f in &self.boundary_facets {
            let fa = &self.facets[f];
            writeln!(
                s,
                "{} {} {}",
                fa.vertices[0],
                fa.vertices[1],
                fa.boundary_tag.unwrap_or(1)
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mesh, MeshIoError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| MeshIoError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };

        let (ln, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty mesh file"))?;
        let mut it = header.split_whitespace();
        let nv: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(ln, "expected vertex count"))?;
        let nt: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(ln, "expected triangle count"))?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(usize::MAX - 1, "unexpected end of file in vertices"))?;
            let mut it = l.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad vertex x"))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad vertex y"))?;
            vertices.push(Point2::new(x, y));
        }

        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(usize::MAX - 1, "unexpected end of file in triangles"))?;
            let mut t = [0usize; 3];
            let mut it = l.split_whitespace();
            for v in &mut t {
                *v = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(ln, "bad triangle index"))?;
                if *v >= nv {
                    return Err(parse_err(ln, "triangle index out of range"));
                }
            }
            triangles.push(t);
        }

        let mut tags = HashMap::new();
        for (ln, l) in lines {
            let mut it = l.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad boundary facet index"))?;
            let j: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad boundary facet index"))?;
            let tag: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "bad boundary tag"))?;
            tags.insert((i.min(j), i.max(j)), tag);
        }

        Ok(Mesh::from_raw(vertices, triangles, &tags, None))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshIoError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mesh, MeshIoError> {
        let text = std::fs::read_to_string(path)?;
        Mesh::from_text(&text)
    }
}
