//! Plain text mesh format.
//!
//! ```text
//! MESH family=triangular n=16 rect=-5,5,-5,5
//! VERTICES <count>
//! <x> <y>
//! CELLS <count>
//! <k> <v_0> ... <v_{k-1}>
//! FACES <count>
//! <v_a> <v_b> <cell_0> <cell_1 or -1>
//! ```
//!
//! Indices are 0-based. The `MESH` header line is optional; without it the
//! mesh is read as [`MeshFamily::General`]. Faces are recomputed from the
//! cells on import and checked against the `FACES` section.

use std::io::{BufRead, Write};

use super::{Mesh, MeshFamily, Rect};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    let mut header = String::from("MESH");
    match mesh.family() {
        MeshFamily::Triangular { n } => header.push_str(&format!(" family=triangular n={n}")),
        MeshFamily::Kershaw { n, distortion } => {
            header.push_str(&format!(" family=kershaw n={n} distortion={distortion}"))
        }
        MeshFamily::General => header.push_str(" family=general"),
    }
    if let Some(r) = mesh.domain() {
        header.push_str(&format!(" rect={},{},{},{}", r.x0, r.x1, r.y0, r.y1));
    }
    writeln!(w, "{header}")?;
    writeln!(w, "VERTICES {}", mesh.vertices().len())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {}", p[0], p[1])?;
    }
    writeln!(w, "CELLS {}", mesh.num_cells())?;
    for c in mesh.cells() {
        write!(w, "{}", c.vertices.len())?;
        for v in &c.vertices {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "FACES {}", mesh.num_faces())?;
    for f in mesh.faces() {
        let second = if f.interior { f.cells[1] as i64 } else { -1 };
        writeln!(
            w,
            "{} {} {} {}",
            f.vertices[0], f.vertices[1], f.cells[0], second
        )?;
    }
    Ok(())
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));

    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(s))) => Ok((n, s)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    let mut family = MeshFamily::General;
    let mut domain = None;
    let (mut ln, mut line) = next("VERTICES")?;
    if let Some(rest) = line.strip_prefix("MESH") {
        (family, domain) = parse_header(ln, rest)?;
        (ln, line) = next("VERTICES")?;
    }

    let nv = section_count(ln, &line, "VERTICES")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = next("vertex")?;
        let xy = parse_numbers::<f64>(ln, &line)?;
        if xy.len() != 2 {
            return Err(parse_err(ln, "vertex needs two coordinates"));
        }
        vertices.push([xy[0], xy[1]]);
    }

    let (ln, line) = next("CELLS")?;
    let nc = section_count(ln, &line, "CELLS")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, line) = next("cell")?;
        let ids = parse_numbers::<usize>(ln, &line)?;
        match ids.split_first() {
            Some((&k, rest)) if rest.len() == k => cells.push(rest.to_vec()),
            _ => return Err(parse_err(ln, "cell vertex count does not match")),
        }
    }

    let (ln, line) = next("FACES")?;
    let nf = section_count(ln, &line, "FACES")?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = next("face")?;
        let ids = parse_numbers::<i64>(ln, &line)?;
        if ids.len() != 4 {
            return Err(parse_err(ln, "face needs four fields"));
        }
        faces.push((ln, ids));
    }

    let mesh = Mesh::from_polygons(vertices, cells, domain, family)?;
    if mesh.num_faces() != nf {
        return Err(parse_err(
            ln,
            &format!("FACES lists {nf} faces, cells define {}", mesh.num_faces()),
        ));
    }
    for (ln, ids) in faces {
        let key = (ids[0].min(ids[1]), ids[0].max(ids[1]));
        let found = mesh.faces().iter().find(|f| {
            let (a, b) = (f.vertices[0] as i64, f.vertices[1] as i64);
            (a.min(b), a.max(b)) == key
        });
        let Some(face) = found else {
            return Err(parse_err(ln, "face does not match any cell edge"));
        };
        let mut listed = [ids[2], ids[3]];
        let mut actual = [
            face.cells[0] as i64,
            if face.interior {
                face.cells[1] as i64
            } else {
                -1
            },
        ];
        listed.sort_unstable();
        actual.sort_unstable();
        if listed != actual {
            return Err(parse_err(ln, "face adjacency does not match cells"));
        }
    }
    Ok(mesh)
}

fn parse_header(ln: usize, rest: &str) -> Result<(MeshFamily, Option<Rect>)> {
    let mut kind = "general";
    let mut n = None;
    let mut distortion = 0.0;
    let mut rect = None;
    for tok in rest.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(ln, &format!("malformed header token `{tok}`")))?;
        match key {
            "family" => kind = value,
            "n" => {
                n = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| parse_err(ln, &e.to_string()))?,
                )
            }
            "distortion" => {
                distortion = value.parse().map_err(|_| parse_err(ln, "bad distortion"))?
            }
            "rect" => {
                let v = parse_numbers::<f64>(ln, &value.replace(',', " "))?;
                if v.len() != 4 {
                    return Err(parse_err(ln, "rect needs four numbers"));
                }
                rect = Some(Rect::new(v[0], v[1], v[2], v[3])?);
            }
            _ => return Err(parse_err(ln, &format!("unknown header key `{key}`"))),
        }
    }
    let family = match (kind, n) {
        ("triangular", Some(n)) => MeshFamily::Triangular { n },
        ("kershaw", Some(n)) => MeshFamily::Kershaw { n, distortion },
        ("general", _) => MeshFamily::General,
        _ => return Err(parse_err(ln, &format!("bad family `{kind}`"))),
    };
    Ok((family, rect))
}

fn section_count(ln: usize, line: &str, name: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
        (Some(tag), Some(Ok(n)), None) if tag == name => Ok(n),
        _ => Err(parse_err(ln, &format!("expected `{name} <count>`"))),
    }
}

fn parse_numbers<T: std::str::FromStr>(ln: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| parse_err(ln, &format!("cannot parse `{t}`")))
        })
        .collect()
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}
