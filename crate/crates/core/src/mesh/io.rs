//! "polymesh v1" text format.
//!
//! ```text
//! polymesh 1 2
//! vertices N
//! x y                  (N lines)
//! elements M
//! c i1 ... ic          (M lines, 0-based CCW vertex indices)
//! faces K              (optional block)
//! v1 v2 t1 t2          (K lines, t2 = -1 for boundary faces)
//! ```
//!
//! Whitespace-separated ASCII; `#` starts a comment. Without a faces block
//! faces are derived by collinear-subsegment matching.

use std::fmt::Write as _;
use std::path::Path;

use super::PolytopalMesh;
use crate::error::{Error, Result};
use crate::geometry::Point;

impl PolytopalMesh {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .map(str::to_owned)
            .collect::<Vec<_>>()
            .into_iter();
        let magic = take(&mut tokens, "header")?;
        if magic != "polymesh" {
            return Err(Error::Parse(format!("bad magic '{magic}'")));
        }
        let version: u32 = parse_num(&take(&mut tokens, "version")?)?;
        let dim: u32 = parse_num(&take(&mut tokens, "dimension")?)?;
        if version != 1 || dim != 2 {
            return Err(Error::Parse(format!(
                "unsupported polymesh version {version} dimension {dim}"
            )));
        }
        expect_keyword(&take(&mut tokens, "'vertices'")?, "vertices")?;
        let n_vertices: usize = parse_num(&take(&mut tokens, "vertex count")?)?;
        let mut vertices = Vec::with_capacity(n_vertices);
        for _ in 0..n_vertices {
            let x: f64 = parse_num(&take(&mut tokens, "x coordinate")?)?;
            let y: f64 = parse_num(&take(&mut tokens, "y coordinate")?)?;
            vertices.push(Point::new(x, y));
        }
        expect_keyword(&take(&mut tokens, "'elements'")?, "elements")?;
        let n_elements: usize = parse_num(&take(&mut tokens, "element count")?)?;
        let mut elements = Vec::with_capacity(n_elements);
        for _ in 0..n_elements {
            let c: usize = parse_num(&take(&mut tokens, "vertex count")?)?;
            let mut loop_ids = Vec::with_capacity(c);
            for _ in 0..c {
                loop_ids.push(parse_num::<usize>(&take(&mut tokens, "vertex index")?)?);
            }
            elements.push(loop_ids);
        }
        match tokens.next() {
            None => PolytopalMesh::from_cells(vertices, elements),
            Some(kw) => {
                expect_keyword(&kw, "faces")?;
                let n_faces: usize = parse_num(&take(&mut tokens, "face count")?)?;
                let mut faces = Vec::with_capacity(n_faces);
                for _ in 0..n_faces {
                    let v0: usize = parse_num(&take(&mut tokens, "face vertex")?)?;
                    let v1: usize = parse_num(&take(&mut tokens, "face vertex")?)?;
                    let t0: i64 = parse_num(&take(&mut tokens, "face element")?)?;
                    let t1: i64 = parse_num(&take(&mut tokens, "face element")?)?;
                    faces.push(([v0, v1], t0, t1));
                }
                PolytopalMesh::from_cells_and_faces(vertices, elements, &faces)
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_polymesh())?;
        Ok(())
    }

    /// Serialize including the face block (shortest round-trip floats).
    pub fn to_polymesh(&self) -> String {
        let mut out = String::new();
        out.push_str("polymesh 1 2\n");
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v.x, v.y);
        }
        let _ = writeln!(out, "elements {}", self.elements.len());
        for loop_ids in &self.elements {
            let _ = write!(out, "{}", loop_ids.len());
            for v in loop_ids {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "faces {}", self.faces.len());
        for face in &self.faces {
            let t0 = face.elements[0].map_or(-1, |t| t as i64);
            let t1 = face.elements[1].map_or(-1, |t| t as i64);
            let _ = writeln!(out, "{} {} {t0} {t1}", face.vertices[0], face.vertices[1]);
        }
        out
    }
}

fn take(tokens: &mut impl Iterator<Item = String>, what: &str) -> Result<String> {
    tokens
        .next()
        .ok_or_else(|| Error::Parse(format!("unexpected end of file, expected {what}")))
}

fn parse_num<T: std::str::FromStr>(token: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse '{token}'")))
}

fn expect_keyword(token: &str, keyword: &str) -> Result<()> {
    if token == keyword {
        Ok(())
    } else {
        Err(Error::Parse(format!("expected '{keyword}', found '{token}'")))
    }
}
