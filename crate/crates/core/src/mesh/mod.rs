//! Polygonal meshes of rectangular domains.
//!
//! A [`Mesh`] is a cell/face/vertex complex with the geometric data the
//! hybrid finite volume discretisation needs: cell measures and centroids,
//! face measures and midpoints, and one outward unit normal per
//! (cell, face) incidence. Meshes are built once and never mutated, so a
//! single instance can be shared between threads.

mod generate;
mod io;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub use generate::{generate_kershaw, generate_triangular};
pub use io::{read_mesh, write_mesh};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let r = Rect { x0, x1, y0, y1 };
        r.check()?;
        Ok(r)
    }

    /// The square `[-half, half]^2`.
    pub fn centered_square(half: f64) -> Self {
        Rect {
            x0: -half,
            x1: half,
            y0: -half,
            y1: half,
        }
    }

    pub fn unit_square() -> Self {
        Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub(crate) fn check(&self) -> Result<()> {
        let finite = [self.x0, self.x1, self.y0, self.y1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.width() > 0.0) || !(self.height() > 0.0) {
            return Err(Error::InvalidParameter {
                name: "rect",
                reason: format!("degenerate rectangle {self:?}"),
            });
        }
        Ok(())
    }
}

/// How a mesh was produced. Determines the reported mesh size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    /// `n x n` squares, each cut into two triangles along the same diagonal.
    Triangular { n: usize },
    /// Quadrilaterals with zig-zag displaced rows.
    Kershaw { n: usize, distortion: f64 },
    /// Anything else (imported meshes).
    General,
}

#[derive(Debug, Clone)]
pub struct Cell {
    /// Vertex loop, counter-clockwise.
    pub vertices: Vec<usize>,
    /// Faces in loop order: face `i` joins `vertices[i]` and `vertices[i + 1]`.
    pub faces: Vec<usize>,
    pub measure: f64,
    pub centroid: Point,
    pub diameter: f64,
}

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    /// First adjacent cell, and the second one for interior faces.
    pub cells: [usize; 2],
    pub interior: bool,
    pub measure: f64,
    pub centroid: Point,
    /// Outward unit normal with respect to `cells[0]` and `cells[1]`.
    pub normals: [Point; 2],
}

impl Face {
    /// Outward normal of this face seen from `cell`.
    pub fn normal_from(&self, cell: usize) -> Point {
        if self.cells[0] == cell {
            self.normals[0]
        } else {
            debug_assert!(self.interior && self.cells[1] == cell);
            self.normals[1]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    faces: Vec<Face>,
    domain: Option<Rect>,
    family: MeshFamily,
    size: f64,
}

impl Mesh {
    /// Builds the face connectivity and geometry of a polygonal partition.
    ///
    /// Cell loops may be given in either orientation; they are stored
    /// counter-clockwise.
    pub fn from_polygons(
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        domain: Option<Rect>,
        family: MeshFamily,
    ) -> Result<Self> {
        let mut built = Vec::with_capacity(cells.len());
        let mut faces: Vec<Face> = Vec::new();
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();

        for (k, mut loop_) in cells.into_iter().enumerate() {
            if loop_.len() < 3 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} has {} vertices",
                    loop_.len()
                )));
            }
            if let Some(&bad) = loop_.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} references missing vertex {bad}"
                )));
            }
            let (signed, centroid) = polygon_area_centroid(&vertices, &loop_);
            if signed < 0.0 {
                loop_.reverse();
            }
            let m = loop_.len();
            let mut cell_faces = Vec::with_capacity(m);
            for i in 0..m {
                let a = loop_[i];
                let b = loop_[(i + 1) % m];
                if a == b {
                    return Err(Error::InvalidMesh(format!("cell {k} repeats vertex {a}")));
                }
                let pa = vertices[a];
                let pb = vertices[b];
                let dx = pb[0] - pa[0];
                let dy = pb[1] - pa[1];
                let len = dx.hypot(dy);
                let normal = [dy / len, -dx / len];
                let key = (a.min(b), a.max(b));
                let f = match edge_map.get(&key) {
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.interior {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({a}, {b}) shared by more than two cells"
                            )));
                        }
                        face.interior = true;
                        face.cells[1] = k;
                        face.normals[1] = normal;
                        f
                    }
                    None => {
                        let f = faces.len();
                        edge_map.insert(key, f);
                        faces.push(Face {
                            vertices: [a, b],
                            cells: [k, usize::MAX],
                            interior: false,
                            measure: len,
                            centroid: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                            normals: [normal, [0.0, 0.0]],
                        });
                        f
                    }
                };
                cell_faces.push(f);
            }
            let diameter = loop_
                .iter()
                .enumerate()
                .flat_map(|(i, &a)| loop_[i + 1..].iter().map(move |&b| (a, b)))
                .map(|(a, b)| dist(vertices[a], vertices[b]))
                .fold(0.0, f64::max);
            built.push(Cell {
                vertices: loop_,
                faces: cell_faces,
                measure: signed.abs(),
                centroid,
                diameter,
            });
        }

        let mut mesh = Mesh {
            vertices,
            cells: built,
            faces,
            domain,
            family,
            size: 0.0,
        };
        mesh.size = mesh.compute_size();
        Ok(mesh)
    }

    fn compute_size(&self) -> f64 {
        match (self.family, self.domain) {
            (MeshFamily::Triangular { n }, Some(rect)) => rect.width() / n as f64,
            _ => self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cell(&self, k: usize) -> &Cell {
        &self.cells[k]
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.interior).count()
    }

    pub fn domain(&self) -> Option<Rect> {
        self.domain
    }

    pub fn family(&self) -> MeshFamily {
        self.family
    }

    /// Characteristic size `h`: the grid spacing for structured triangular
    /// meshes, the largest cell diameter otherwise.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    /// Index of the cell containing `p`, if any. Linear scan.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.cells.iter().position(|c| {
            let m = c.vertices.len();
            (0..m).all(|i| {
                let a = self.vertices[c.vertices[i]];
                let b = self.vertices[c.vertices[(i + 1) % m]];
                (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-14
            })
        })
    }

    /// Mutable face access, for building corrupted meshes in validation
    /// tooling. Geometry is not recomputed.
    #[doc(hidden)]
    pub fn face_mut(&mut self, f: usize) -> &mut Face {
        &mut self.faces[f]
    }

    /// `Σ_σ |σ| n_{K,σ}` for cell `k`.
    pub fn flux_sum(&self, k: usize) -> Point {
        let mut s = [0.0; 2];
        for &f in &self.cells[k].faces {
            let face = &self.faces[f];
            let n = face.normal_from(k);
            s[0] += face.measure * n[0];
            s[1] += face.measure * n[1];
        }
        s
    }

    /// `Σ_σ |σ| n_{K,σ} (x_σ - x_K)^T` for cell `k`, row-major.
    pub fn flux_moment(&self, k: usize) -> [[f64; 2]; 2] {
        let cell = &self.cells[k];
        let mut m = [[0.0; 2]; 2];
        for &f in &cell.faces {
            let face = &self.faces[f];
            let n = face.normal_from(k);
            let d = sub(face.centroid, cell.centroid);
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += face.measure * n[i] * d[j];
                }
            }
        }
        m
    }
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    NoCells,
    Adjacency,
    CellMeasure,
    FaceMeasure,
    UnitNormal,
    NormalAntisymmetry,
    ConstantDivergence,
    AreaSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    Mesh,
    Cell(usize),
    Face(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: Entity,
    pub check: Check,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?}: {}", self.entity, self.check, self.detail)
    }
}

const GEOM_TOL: f64 = 1e-12;

/// Checks every structural and geometric mesh invariant. Returns an empty
/// list for a valid mesh.
pub fn validate(mesh: &Mesh) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity, check, detail: String| {
        out.push(Violation {
            entity,
            check,
            detail,
        })
    };
    if mesh.cells.is_empty() {
        push(Entity::Mesh, Check::NoCells, "no cells".into());
        return out;
    }

    let mut incidence = vec![0usize; mesh.faces.len()];
    for cell in &mesh.cells {
        for &f in &cell.faces {
            incidence[f] += 1;
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let expected = if face.interior { 2 } else { 1 };
        if incidence[f] != expected {
            push(
                Entity::Face(f),
                Check::Adjacency,
                format!("{} adjacent cells, expected {expected}", incidence[f]),
            );
        }
        if !(face.measure > 0.0) {
            push(
                Entity::Face(f),
                Check::FaceMeasure,
                format!("|σ| = {}", face.measure),
            );
        }
        let sides = if face.interior { 2 } else { 1 };
        for n in &face.normals[..sides] {
            if (n[0].hypot(n[1]) - 1.0).abs() > GEOM_TOL {
                push(
                    Entity::Face(f),
                    Check::UnitNormal,
                    format!("|n| = {}", n[0].hypot(n[1])),
                );
            }
        }
        if face.interior {
            let [a, b] = face.normals;
            if a[0] != -b[0] || a[1] != -b[1] {
                push(
                    Entity::Face(f),
                    Check::NormalAntisymmetry,
                    format!("normals {a:?} and {b:?} are not opposite"),
                );
            }
        }
    }

    for (k, cell) in mesh.cells.iter().enumerate() {
        if !(cell.measure > 0.0) {
            push(
                Entity::Cell(k),
                Check::CellMeasure,
                format!("|K| = {}", cell.measure),
            );
        }
        let s = mesh.flux_sum(k);
        let perimeter: f64 = cell.faces.iter().map(|&f| mesh.faces[f].measure).sum();
        if s[0].hypot(s[1]) > GEOM_TOL * perimeter {
            push(
                Entity::Cell(k),
                Check::ConstantDivergence,
                format!("|Σ|σ|n| = {:e}", s[0].hypot(s[1])),
            );
        }
    }

    if let Some(rect) = mesh.domain {
        let total = mesh.total_area();
        if (total - rect.area()).abs() > GEOM_TOL * rect.area() {
            push(
                Entity::Mesh,
                Check::AreaSum,
                format!("Σ|K| = {total}, domain area {}", rect.area()),
            );
        }
    }
    out
}

/// Largest relative defect of `Σ_σ |σ| n (x_σ - x_K)^T = |K| I` over all
/// cells, measured in the max norm relative to `|K|`.
pub fn max_moment_defect(mesh: &Mesh) -> f64 {
    (0..mesh.num_cells())
        .map(|k| {
            let m = mesh.flux_moment(k);
            let area = mesh.cells[k].measure;
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let target = if i == j { area } else { 0.0 };
                    worst = worst.max((m[i][j] - target).abs() / area);
                }
            }
            worst
        })
        .fold(0.0, f64::max)
}

/// Characteristic size of `mesh`.
pub fn mesh_size(mesh: &Mesh) -> f64 {
    mesh.size()
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

// Shoelace on coordinates relative to the first vertex.
fn polygon_area_centroid(vertices: &[Point], loop_: &[usize]) -> (f64, Point) {
    let o = vertices[loop_[0]];
    let m = loop_.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..m {
        let p = sub(vertices[loop_[i]], o);
        let q = sub(vertices[loop_[(i + 1) % m]], o);
        let cross = p[0] * q[1] - q[0] * p[1];
        area2 += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let area = 0.5 * area2;
    let centroid = if area2 != 0.0 {
        [o[0] + cx / (3.0 * area2), o[1] + cy / (3.0 * area2)]
    } else {
        o
    };
    (area, centroid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_two_triangles() {
        let mesh = generate_triangular(Rect::unit_square(), 1).unwrap();
        assert_eq!(mesh.num_cells(), 2);
        assert_eq!(mesh.num_faces(), 5);
        assert_eq!(mesh.num_interior_faces(), 1);
        assert!((mesh.total_area() - 1.0).abs() < 1e-15);
        assert!(validate(&mesh).is_empty());
    }

    #[test]
    fn paper_grid_sizes() {
        let d = Rect::centered_square(5.0);
        let m16 = generate_triangular(d, 16).unwrap();
        assert_eq!(m16.num_cells(), 512);
        assert_eq!(m16.size(), 0.625);
        let m32 = generate_triangular(d, 32).unwrap();
        assert_eq!(m32.size(), 0.3125);
        assert!((m32.total_area() - 100.0).abs() <= 1e-12 * 100.0);
        let m64 = generate_triangular(d, 64).unwrap();
        assert_eq!(mesh_size(&m64), 0.15625);
    }

    #[test]
    fn refinement_halves_triangular_size() {
        let d = Rect::centered_square(5.0);
        for n in [1, 2, 4, 8, 16] {
            let a = generate_triangular(d, n).unwrap();
            let b = generate_triangular(d, 2 * n).unwrap();
            assert_eq!(a.size(), 2.0 * b.size());
        }
    }

    #[test]
    fn kershaw_uniform_and_distorted() {
        let d = Rect::centered_square(5.0);
        let m = generate_kershaw(d, 2, 0.0).unwrap();
        assert_eq!(m.num_cells(), 4);
        assert!(m.cells().iter().all(|c| (c.measure - 25.0).abs() < 1e-12));
        assert!((m.size() - 5.0 * 2f64.sqrt()).abs() < 1e-12);

        let m8 = generate_kershaw(d, 8, 0.3).unwrap();
        assert!((m8.total_area() - 100.0).abs() <= 1e-12 * 100.0);
        assert!(validate(&m8).is_empty());
        let m16 = generate_kershaw(d, 16, 0.3).unwrap();
        assert!(m16.size() < m8.size());
    }

    #[test]
    fn generator_errors() {
        let d = Rect::centered_square(5.0);
        assert!(generate_triangular(d, 0).is_err());
        assert!(generate_kershaw(d, 3, 0.1).is_err());
        assert!(generate_kershaw(d, 0, 0.1).is_err());
        assert!(generate_kershaw(d, 4, 1.0).is_err());
        assert!(generate_kershaw(d, 4, -0.1).is_err());
        let flat = Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 2.0,
            y1: 2.0,
        };
        assert!(generate_triangular(flat, 4).is_err());
        assert!(Rect::new(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn flipped_normal_gives_two_violations() {
        let mut mesh = generate_triangular(Rect::unit_square(), 2).unwrap();
        let f = mesh.faces().iter().position(|f| f.interior).unwrap();
        let n = mesh.face(f).normals[1];
        mesh.face_mut(f).normals[1] = [-n[0], -n[1]];
        let v = validate(&mesh);
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.iter().any(|x| x.check == Check::NormalAntisymmetry));
        assert!(v.iter().any(|x| x.check == Check::ConstantDivergence));
    }

    #[test]
    fn empty_mesh_reports_no_cells() {
        let mesh = Mesh::from_polygons(vec![], vec![], None, MeshFamily::General).unwrap();
        let v = validate(&mesh);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].check, Check::NoCells);
        assert_eq!(v[0].detail, "no cells");
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mesh =
            Mesh::from_polygons(verts, vec![vec![0, 2, 1]], None, MeshFamily::General).unwrap();
        assert!((mesh.cell(0).measure - 0.5).abs() < 1e-15);
        assert!(validate(&mesh).is_empty());
    }

    #[test]
    fn geometric_moment_identity() {
        let d = Rect::centered_square(5.0);
        for mesh in [
            generate_triangular(d, 8).unwrap(),
            generate_kershaw(d, 8, 0.5).unwrap(),
        ] {
            assert!(max_moment_defect(&mesh) < 1e-12);
        }
    }

    #[test]
    fn locate_finds_containing_cell() {
        let mesh = generate_triangular(Rect::unit_square(), 4).unwrap();
        for (k, c) in mesh.cells().iter().enumerate() {
            assert_eq!(mesh.locate(c.centroid), Some(k));
        }
        assert_eq!(mesh.locate([2.0, 2.0]), None);
    }
}
