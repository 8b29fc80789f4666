//! Simplicial meshes of inscribed polytopes approximating the unit ball.
//!
//! The coarse meshes are fans around the origin: a regular hexagon in 2D and a
//! regular octahedron in 3D, all outer vertices on the unit sphere.  `refine`
//! is red (midpoint) refinement -- Bey's eight-child subdivision in 3D, with
//! the interior octahedron split along its shortest diagonal -- and midpoints
//! of boundary edges are projected back onto the sphere, so every mesh of the
//! hierarchy is again the triangulation of an inscribed polytope.
//!
//! Beyond connectivity the mesh caches, per element: measure, diameter,
//! inscribed-ball diameter and the (constant) gradients of the P1 hat
//! functions, which is everything the rest of the crate needs to integrate
//! and differentiate piecewise-linear fields.

use crate::error::{Error, Result};
use crate::geom::{self, Point, ORIGIN};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Relative floor on element measures: an element with
/// `measure <= DEGENERACY_FACTOR * diameter^dim` is rejected.
const DEGENERACY_FACTOR: f64 = 1e-14;

/// Sentinel for the unused fourth vertex slot of 2D elements.
const NO_VERTEX: usize = usize::MAX;

/// A conforming simplicial mesh in dimension 2 or 3.
///
/// Elements are positively oriented; vertices carry a boundary flag.  The
/// struct is immutable after construction -- refinement returns a new mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    level: u32,
    vertices: Vec<Point>,
    boundary: Vec<bool>,
    /// Vertex indices per element; 2D elements use the first three slots.
    elements: Vec<[usize; 4]>,
    volumes: Vec<f64>,
    h_elem: Vec<f64>,
    rho_elem: Vec<f64>,
    basis_grads: Vec<[Point; 4]>,
    h: f64,
}

/// Summary statistics of a mesh, mostly for reports and logs.
#[derive(Debug, Clone, Serialize)]
pub struct MeshMetrics {
    pub dim: usize,
    pub level: u32,
    pub n_vertices: usize,
    pub n_elements: usize,
    pub n_boundary_vertices: usize,
    /// Largest element diameter.
    pub h: f64,
    /// Smallest element diameter.
    pub min_h: f64,
    /// max over elements of diameter / inscribed-ball diameter.
    pub shape_regularity: f64,
    /// min_h / h; close to one means near-uniform.
    pub quasi_uniformity: f64,
    /// Total measure (area or volume) of the triangulated polytope.
    pub volume: f64,
}

impl Mesh {
    /// Triangulation of the inscribed polytope at the given refinement level:
    /// a hexagon fan (2D) or octahedron fan (3D), refined `level` times.
    pub fn unit_ball(dim: usize, level: u32) -> Result<Self> {
        let mut mesh = match dim {
            2 => Self::hexagon_fan()?,
            3 => Self::octahedron_fan()?,
            d => return Err(Error::InvalidDim(d)),
        };
        for _ in 0..level {
            mesh = mesh.refine()?;
        }
        Ok(mesh)
    }

    fn hexagon_fan() -> Result<Self> {
        let mut vertices = vec![ORIGIN];
        let mut boundary = vec![false];
        for k in 0..6 {
            let theta = k as f64 * std::f64::consts::FRAC_PI_3;
            vertices.push([theta.cos(), theta.sin(), 0.0]);
            boundary.push(true);
        }
        let elements = (0..6)
            .map(|k| [0, 1 + k, 1 + (k + 1) % 6, NO_VERTEX])
            .collect();
        Self::from_data(2, vertices, boundary, elements, 0)
    }

    fn octahedron_fan() -> Result<Self> {
        let vertices = vec![
            ORIGIN,
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        let boundary = vec![false, true, true, true, true, true, true];
        let mut elements = Vec::with_capacity(8);
        for sx in [1, 2] {
            for sy in [3, 4] {
                for sz in [5, 6] {
                    elements.push([0, sx, sy, sz]);
                }
            }
        }
        Self::from_data(3, vertices, boundary, elements, 0)
    }

    /// Builds a mesh from raw data, fixing element orientation and caching
    /// per-element geometry.  Rejects out-of-range indices, repeated vertices
    /// within an element, and (nearly) degenerate elements.
    pub fn from_data(
        dim: usize,
        vertices: Vec<Point>,
        boundary: Vec<bool>,
        mut elements: Vec<[usize; 4]>,
        level: u32,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDim(dim));
        }
        if vertices.len() != boundary.len() {
            return Err(Error::Invalid(format!(
                "{} vertices but {} boundary flags",
                vertices.len(),
                boundary.len()
            )));
        }
        if elements.is_empty() {
            return Err(Error::Invalid("mesh has no elements".into()));
        }
        if dim == 2 {
            for (i, v) in vertices.iter().enumerate() {
                if v[2] != 0.0 {
                    return Err(Error::Invalid(format!(
                        "2d vertex {i} has nonzero third coordinate {}",
                        v[2]
                    )));
                }
            }
        }
        for (e, elem) in elements.iter().enumerate() {
            let idx = &elem[..=dim];
            for &i in idx {
                if i >= vertices.len() {
                    return Err(Error::Invalid(format!(
                        "element {e} references vertex {i} of {}",
                        vertices.len()
                    )));
                }
            }
            for a in 0..=dim {
                for b in a + 1..=dim {
                    if idx[a] == idx[b] {
                        return Err(Error::Invalid(format!(
                            "element {e} repeats vertex {}",
                            idx[a]
                        )));
                    }
                }
            }
        }

        let n = elements.len();
        let mut volumes = Vec::with_capacity(n);
        let mut h_elem = Vec::with_capacity(n);
        let mut rho_elem = Vec::with_capacity(n);
        let mut basis_grads = Vec::with_capacity(n);
        for e in 0..n {
            // Flip negatively oriented elements by swapping the last two
            // vertices, so all signed measures come out positive.
            if signed_measure(dim, &vertices, &elements[e]) < 0.0 {
                elements[e].swap(dim - 1, dim);
            }
            let elem = &elements[e];
            let vol = signed_measure(dim, &vertices, elem);
            let h = diameter(dim, &vertices, elem);
            if !(vol > DEGENERACY_FACTOR * h.powi(dim as i32)) {
                return Err(Error::DegenerateElement {
                    elem: e,
                    measure: vol,
                    threshold: DEGENERACY_FACTOR * h.powi(dim as i32),
                });
            }
            volumes.push(vol);
            h_elem.push(h);
            rho_elem.push(inscribed_diameter(dim, &vertices, elem, vol));
            basis_grads.push(hat_gradients(dim, &vertices, elem));
        }
        let h = h_elem.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            dim,
            level,
            vertices,
            boundary,
            elements,
            volumes,
            h_elem,
            rho_elem,
            basis_grads,
            h,
        })
    }

    /// Red refinement: every element is split through its edge midpoints into
    /// `2^dim` children (plus, in 3D, the interior octahedron cut along its
    /// shortest diagonal into four).  Midpoints of boundary edges are
    /// projected onto the unit sphere and flagged as boundary vertices.
    pub fn refine(&self) -> Result<Self> {
        let bedges = self.boundary_edges();
        let mut verts = self.vertices.clone();
        let mut bnd = self.boundary.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut children: Vec<[usize; 4]> =
            Vec::with_capacity(self.elements.len() * (1 << self.dim));

        fn midpoint(
            i: usize,
            j: usize,
            bedges: &HashSet<(usize, usize)>,
            mid: &mut HashMap<(usize, usize), usize>,
            verts: &mut Vec<Point>,
            bnd: &mut Vec<bool>,
        ) -> usize {
            let key = (i.min(j), i.max(j));
            if let Some(&k) = mid.get(&key) {
                return k;
            }
            let mut m = geom::scale(&geom::add(&verts[i], &verts[j]), 0.5);
            let on_boundary = bedges.contains(&key);
            if on_boundary {
                m = geom::scale(&m, 1.0 / geom::norm(&m));
            }
            let k = verts.len();
            verts.push(m);
            bnd.push(on_boundary);
            mid.insert(key, k);
            k
        }

        for elem in &self.elements {
            let mut gm = |i: usize, j: usize| {
                midpoint(elem[i], elem[j], &bedges, &mut mid, &mut verts, &mut bnd)
            };
            if self.dim == 2 {
                let (m01, m02, m12) = (gm(0, 1), gm(0, 2), gm(1, 2));
                let (v0, v1, v2) = (elem[0], elem[1], elem[2]);
                children.push([v0, m01, m02, NO_VERTEX]);
                children.push([m01, v1, m12, NO_VERTEX]);
                children.push([m02, m12, v2, NO_VERTEX]);
                children.push([m01, m12, m02, NO_VERTEX]);
            } else {
                let (m01, m02, m03) = (gm(0, 1), gm(0, 2), gm(0, 3));
                let (m12, m13, m23) = (gm(1, 2), gm(1, 3), gm(2, 3));
                let (v0, v1, v2, v3) = (elem[0], elem[1], elem[2], elem[3]);
                children.push([v0, m01, m02, m03]);
                children.push([m01, v1, m12, m13]);
                children.push([m02, m12, v2, m23]);
                children.push([m03, m13, m23, v3]);
                // The interior octahedron has three diagonals; cutting along
                // the shortest keeps the children as round as possible.  Ties
                // resolve to the first candidate, a fixed convention.
                let diagonals = [
                    ((m02, m13), [m01, m03, m23, m12]),
                    ((m01, m23), [m02, m03, m13, m12]),
                    ((m03, m12), [m01, m02, m23, m13]),
                ];
                let ((d1, d2), eq) = diagonals
                    .into_iter()
                    .min_by(|a, b| {
                        let la = geom::dist(&verts[a.0 .0], &verts[a.0 .1]);
                        let lb = geom::dist(&verts[b.0 .0], &verts[b.0 .1]);
                        la.total_cmp(&lb)
                    })
                    .unwrap();
                for k in 0..4 {
                    children.push([d1, d2, eq[k], eq[(k + 1) % 4]]);
                }
            }
        }
        Self::from_data(self.dim, verts, bnd, children, self.level + 1)
    }

    /// Edges lying on the polytope boundary, as sorted vertex-index pairs.
    /// In 2D these are the edges owned by exactly one triangle; in 3D the
    /// edges of faces owned by exactly one tetrahedron.  (An interior edge
    /// may join two boundary vertices, so vertex flags alone do not decide.)
    fn boundary_edges(&self) -> HashSet<(usize, usize)> {
        let mut out = HashSet::new();
        if self.dim == 2 {
            let mut count: HashMap<(usize, usize), u32> = HashMap::new();
            for elem in &self.elements {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    let (i, j) = (elem[a].min(elem[b]), elem[a].max(elem[b]));
                    *count.entry((i, j)).or_insert(0) += 1;
                }
            }
            out.extend(count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e));
        } else {
            let mut count: HashMap<[usize; 3], u32> = HashMap::new();
            for elem in &self.elements {
                for skip in 0..4 {
                    let mut f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| elem[k]).collect();
                    f.sort_unstable();
                    *count.entry([f[0], f[1], f[2]]).or_insert(0) += 1;
                }
            }
            for (f, c) in count {
                if c == 1 {
                    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                        out.insert((f[a], f[b]));
                    }
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Vertex indices of an element (length `dim + 1`).
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..=self.dim]
    }

    /// Vertex coordinates of an element; only the first `dim + 1` entries are
    /// meaningful.
    pub fn element_vertices(&self, e: usize) -> [Point; 4] {
        let idx = &self.elements[e];
        let mut out = [ORIGIN; 4];
        for k in 0..=self.dim {
            out[k] = self.vertices[idx[k]];
        }
        out
    }

    /// Element measure (area in 2D, volume in 3D).
    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// Element diameter (longest edge).
    pub fn element_h(&self, e: usize) -> f64 {
        self.h_elem[e]
    }

    /// Diameter of the inscribed ball of an element.
    pub fn element_rho(&self, e: usize) -> f64 {
        self.rho_elem[e]
    }

    /// Gradients of the P1 hat functions on an element, one per local vertex
    /// (constant on the element).  They sum to zero.
    pub fn basis_gradients(&self, e: usize) -> &[Point; 4] {
        &self.basis_grads[e]
    }

    pub fn metrics(&self) -> MeshMetrics {
        let min_h = self.h_elem.iter().cloned().fold(f64::INFINITY, f64::min);
        let shape_regularity = self
            .h_elem
            .iter()
            .zip(&self.rho_elem)
            .map(|(h, rho)| h / rho)
            .fold(0.0, f64::max);
        let mut volume = geom::KahanSum::new();
        for &v in &self.volumes {
            volume.add(v);
        }
        MeshMetrics {
            dim: self.dim,
            level: self.level,
            n_vertices: self.vertices.len(),
            n_elements: self.elements.len(),
            n_boundary_vertices: self.boundary.iter().filter(|&&b| b).count(),
            h: self.h,
            min_h,
            shape_regularity,
            quasi_uniformity: min_h / self.h,
            volume: volume.value(),
        }
    }

    /// Serializes the mesh to a plain-text format that round-trips exactly:
    /// a header line `mesh <dim> <n_vertices> <n_elements> <level>`, one line
    /// per vertex (`dim` coordinates at 17 significant digits plus a 0/1
    /// boundary flag), then one line of vertex indices per element.
    pub fn to_text_string(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "mesh {} {} {} {}",
            self.dim,
            self.vertices.len(),
            self.elements.len(),
            self.level
        )
        .unwrap();
        for (v, &b) in self.vertices.iter().zip(&self.boundary) {
            for k in 0..self.dim {
                write!(s, "{:.16e} ", v[k]).unwrap();
            }
            writeln!(s, "{}", u8::from(b)).unwrap();
        }
        for elem in &self.elements {
            let idx: Vec<String> = elem[..=self.dim].iter().map(usize::to_string).collect();
            writeln!(s, "{}", idx.join(" ")).unwrap();
        }
        s
    }

    /// Parses the format written by [`Mesh::to_text_string`].
    pub fn from_text_str(text: &str) -> Result<Self> {
        fn bad(line: usize, msg: impl Into<String>) -> Error {
            Error::Parse {
                line,
                msg: msg.into(),
            }
        }
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lno, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty input"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mesh") {
            return Err(bad(lno, "expected header starting with 'mesh'"));
        }
        let mut next_usize = |what: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| bad(lno, format!("missing {what}")))?
                .parse()
                .map_err(|_| bad(lno, format!("bad {what}")))
        };
        let dim = next_usize("dimension")?;
        let n_vert = next_usize("vertex count")?;
        let n_elem = next_usize("element count")?;
        let level = next_usize("level")? as u32;
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDim(dim));
        }

        let mut vertices = Vec::with_capacity(n_vert);
        let mut boundary = Vec::with_capacity(n_vert);
        for _ in 0..n_vert {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of input in vertex block"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(bad(lno, format!("expected {} fields", dim + 1)));
            }
            let mut v = ORIGIN;
            for k in 0..dim {
                v[k] = fields[k]
                    .parse()
                    .map_err(|_| bad(lno, format!("bad coordinate '{}'", fields[k])))?;
            }
            boundary.push(match fields[dim] {
                "0" => false,
                "1" => true,
                other => return Err(bad(lno, format!("bad boundary flag '{other}'"))),
            });
            vertices.push(v);
        }
        let mut elements = Vec::with_capacity(n_elem);
        for _ in 0..n_elem {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of input in element block"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 1 {
                return Err(bad(lno, format!("expected {} vertex indices", dim + 1)));
            }
            let mut elem = [NO_VERTEX; 4];
            for (k, f) in fields.iter().enumerate() {
                elem[k] = f
                    .parse()
                    .map_err(|_| bad(lno, format!("bad vertex index '{f}'")))?;
            }
            elements.push(elem);
        }
        if let Some((lno, line)) = lines.next() {
            if !line.trim().is_empty() {
                return Err(bad(lno, "trailing content after element block"));
            }
        }
        Self::from_data(dim, vertices, boundary, elements, level)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text_string())?;
        Ok(())
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        Self::from_text_str(&fs::read_to_string(path)?)
    }
}

/// Signed measure: area from the cross product in 2D, `det/6` in 3D.
fn signed_measure(dim: usize, vertices: &[Point], elem: &[usize; 4]) -> f64 {
    let p0 = &vertices[elem[0]];
    let d1 = geom::sub(&vertices[elem[1]], p0);
    let d2 = geom::sub(&vertices[elem[2]], p0);
    if dim == 2 {
        0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    } else {
        let d3 = geom::sub(&vertices[elem[3]], p0);
        geom::dot(&d1, &geom::cross(&d2, &d3)) / 6.0
    }
}

fn diameter(dim: usize, vertices: &[Point], elem: &[usize; 4]) -> f64 {
    let mut h: f64 = 0.0;
    for a in 0..=dim {
        for b in a + 1..=dim {
            h = h.max(geom::dist(&vertices[elem[a]], &vertices[elem[b]]));
        }
    }
    h
}

/// Diameter of the inscribed ball: `2 * dim * measure / (sum of face
/// measures)`, i.e. `4A/P` for triangles and `6V / (total face area)` for
/// tetrahedra.
fn inscribed_diameter(dim: usize, vertices: &[Point], elem: &[usize; 4], vol: f64) -> f64 {
    let faces: f64 = if dim == 2 {
        [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(a, b)| geom::dist(&vertices[elem[a]], &vertices[elem[b]]))
            .sum()
    } else {
        (0..4)
            .map(|skip| {
                let f: Vec<&Point> = (0..4)
                    .filter(|&k| k != skip)
                    .map(|k| &vertices[elem[k]])
                    .collect();
                let u = geom::sub(f[1], f[0]);
                let v = geom::sub(f[2], f[0]);
                0.5 * geom::norm(&geom::cross(&u, &v))
            })
            .sum()
    };
    2.0 * dim as f64 * vol / faces
}

/// Gradients of the P1 hat functions via the adjugate of the edge matrix.
fn hat_gradients(dim: usize, vertices: &[Point], elem: &[usize; 4]) -> [Point; 4] {
    let p0 = &vertices[elem[0]];
    let d1 = geom::sub(&vertices[elem[1]], p0);
    let d2 = geom::sub(&vertices[elem[2]], p0);
    let mut grads = [ORIGIN; 4];
    if dim == 2 {
        let det = d1[0] * d2[1] - d1[1] * d2[0];
        grads[1] = [d2[1] / det, -d2[0] / det, 0.0];
        grads[2] = [-d1[1] / det, d1[0] / det, 0.0];
    } else {
        let d3 = geom::sub(&vertices[elem[3]], p0);
        let det = geom::dot(&d1, &geom::cross(&d2, &d3));
        grads[1] = geom::scale(&geom::cross(&d2, &d3), 1.0 / det);
        grads[2] = geom::scale(&geom::cross(&d3, &d1), 1.0 / det);
        grads[3] = geom::scale(&geom::cross(&d1, &d2), 1.0 / det);
    }
    for k in 1..=dim {
        let g = grads[k];
        geom::axpy(&mut grads[0], -1.0, &g);
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    // Element diameters of the refinement hierarchy, computed once and
    // frozen.  The 2D fan starts equilateral; sphere projection stretches the
    // first refinement (ratio 0.6197) before the ratios settle near 1/2.
    const H_2D: [f64; 7] = [
        1.0000000000000004,
        0.619_656_837_463_738_1,
        0.337_062_695_305_187_45,
        0.174_918_531_310_526_98,
        0.088_998_701_831_085_38,
        0.044_876_767_536_683_95,
        0.022_531_791_219_302_68,
    ];
    const H_3D: [f64; 5] = [
        1.414_213_562_373_095_1,
        1.118_033_988_749_894_7,
        0.647_400_298_331_926,
        0.381_141_686_371_921_75,
        0.206_371_489_502_341_91,
    ];
    // Shape-regularity constants max h_T / rho_T of the 3D hierarchy: they
    // grow, but the growth factor decays fast (1.40, 1.03, 1.08, 1.05).
    const SIGMA_3D: [f64; 5] = [
        3.346_065_214_951_231_8,
        4.674_934_168_959_883_8,
        4.815_515_146_567_614_5,
        5.203_164_878_210_974,
        5.478_571_446_531_649_5,
    ];

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn hexagon_fan_is_six_equilateral_triangles() {
        let mesh = Mesh::unit_ball(2, 0).unwrap();
        assert_eq!(mesh.dim(), 2);
        assert_eq!(mesh.n_vertices(), 7);
        assert_eq!(mesh.n_elements(), 6);
        assert!(rel_close(mesh.h(), 1.0, 1e-12));
        let m = mesh.metrics();
        // Hexagon area 3 sqrt(3) / 2.
        assert!(rel_close(m.volume, 1.5 * 3.0_f64.sqrt(), 1e-13));
        assert!(rel_close(m.shape_regularity, 3.0_f64.sqrt(), 1e-12));
        assert!(rel_close(m.quasi_uniformity, 1.0, 1e-12));
        assert_eq!(m.n_boundary_vertices, 6);
        assert!(!mesh.is_boundary(0));
    }

    #[test]
    fn octahedron_fan_geometry() {
        let mesh = Mesh::unit_ball(3, 0).unwrap();
        assert_eq!(mesh.n_vertices(), 7);
        assert_eq!(mesh.n_elements(), 8);
        assert!(rel_close(mesh.h(), 2.0_f64.sqrt(), 1e-14));
        let m = mesh.metrics();
        // Octahedron volume 4/3; octant tets have h/rho = sqrt(2)(3+sqrt(3))/2.
        assert!(rel_close(m.volume, 4.0 / 3.0, 1e-13));
        let sigma = 2.0_f64.sqrt() * (3.0 + 3.0_f64.sqrt()) / 2.0;
        assert!(rel_close(m.shape_regularity, sigma, 1e-12));
        assert_eq!(m.n_boundary_vertices, 6);
    }

    #[test]
    fn refinement_tracks_frozen_h_sequence_2d() {
        let mut mesh = Mesh::unit_ball(2, 0).unwrap();
        for (level, &want) in H_2D.iter().enumerate() {
            assert!(
                rel_close(mesh.h(), want, 1e-12),
                "level {level}: h = {} want {want}",
                mesh.h()
            );
            if level + 1 < H_2D.len() {
                mesh = mesh.refine().unwrap();
            }
        }
        for level in 1..H_2D.len() {
            let ratio = H_2D[level] / H_2D[level - 1];
            if level == 1 {
                assert!((0.60..=0.63).contains(&ratio), "ratio {ratio}");
            } else {
                assert!((0.45..=0.55).contains(&ratio), "level {level}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn refinement_tracks_frozen_h_sequence_3d() {
        let mut mesh = Mesh::unit_ball(3, 0).unwrap();
        for (level, &want) in H_3D.iter().enumerate() {
            assert!(
                rel_close(mesh.h(), want, 1e-12),
                "level {level}: h = {} want {want}",
                mesh.h()
            );
            let m = mesh.metrics();
            assert!(
                rel_close(m.shape_regularity, SIGMA_3D[level], 1e-12),
                "level {level}: sigma = {}",
                m.shape_regularity
            );
            if level > 0 {
                assert!(
                    m.shape_regularity / SIGMA_3D[level - 1] <= 1.5,
                    "sigma growth too fast at level {level}"
                );
            }
            if level + 1 < H_3D.len() {
                mesh = mesh.refine().unwrap();
            }
        }
        for level in 2..H_3D.len() {
            let ratio = H_3D[level] / H_3D[level - 1];
            assert!((0.45..=0.60).contains(&ratio), "level {level}: ratio {ratio}");
        }
    }

    #[test]
    fn element_and_boundary_vertex_counts() {
        for level in 0..4 {
            let mesh = Mesh::unit_ball(2, level).unwrap();
            assert_eq!(mesh.n_elements(), 6 * 4usize.pow(level));
            let m = mesh.metrics();
            assert_eq!(m.n_boundary_vertices, 6 * 2usize.pow(level));
        }
        for level in 0..3 {
            let mesh = Mesh::unit_ball(3, level).unwrap();
            assert_eq!(mesh.n_elements(), 8 * 8usize.pow(level));
            let m = mesh.metrics();
            // The boundary is a triangulated sphere with 8 * 4^level faces;
            // Euler's formula gives 2 + 4 * 4^level vertices.
            assert_eq!(m.n_boundary_vertices, 2 + 4 * 4usize.pow(level));
        }
    }

    #[test]
    fn boundary_vertices_on_sphere_interior_strictly_inside() {
        for (dim, level) in [(2usize, 3u32), (3, 2)] {
            let mesh = Mesh::unit_ball(dim, level).unwrap();
            for i in 0..mesh.n_vertices() {
                let r = geom::norm(mesh.vertex(i));
                if mesh.is_boundary(i) {
                    assert!((r - 1.0).abs() < 1e-14, "boundary vertex {i}: |x| = {r}");
                } else {
                    assert!(r < 1.0, "interior vertex {i}: |x| = {r}");
                }
            }
        }
    }

    #[test]
    fn polytope_measure_increases_toward_ball() {
        let mut prev = 0.0;
        for level in 0..5 {
            let m = Mesh::unit_ball(2, level).unwrap().metrics();
            assert!(m.volume > prev && m.volume < std::f64::consts::PI);
            prev = m.volume;
        }
        // The once-refined hexagon is a regular 12-gon of area exactly 3.
        let m = Mesh::unit_ball(2, 1).unwrap().metrics();
        assert!(rel_close(m.volume, 3.0, 1e-13));
        assert!(prev > 3.139);

        let mut prev = 0.0;
        for level in 0..4 {
            let m = Mesh::unit_ball(3, level).unwrap().metrics();
            assert!(m.volume > prev && m.volume < 4.0 * std::f64::consts::PI / 3.0);
            prev = m.volume;
        }
        assert!(prev > 4.09);
    }

    #[test]
    fn quasi_uniformity_stays_bounded() {
        for (dim, max_level, floor) in [(2usize, 5u32, 0.69), (3, 3, 0.46)] {
            let mesh = Mesh::unit_ball(dim, max_level).unwrap();
            let m = mesh.metrics();
            assert!(
                m.quasi_uniformity >= floor,
                "dim {dim}: quasi-uniformity {}",
                m.quasi_uniformity
            );
        }
    }

    #[test]
    fn hat_gradients_reproduce_affine_functions() {
        let f = |x: &Point| 0.75 - 1.5 * x[0] + 0.25 * x[1] + 2.0 * x[2];
        let grad_f = [-1.5, 0.25, 2.0];
        for (dim, level) in [(2usize, 2u32), (3, 1)] {
            let mesh = Mesh::unit_ball(dim, level).unwrap();
            for e in 0..mesh.n_elements() {
                let verts = mesh.element_vertices(e);
                let grads = mesh.basis_gradients(e);
                let mut g = ORIGIN;
                let mut sum_grads = ORIGIN;
                for k in 0..=dim {
                    geom::axpy(&mut g, f(&verts[k]), &grads[k]);
                    geom::axpy(&mut sum_grads, 1.0, &grads[k]);
                }
                for c in 0..dim {
                    assert!((g[c] - grad_f[c]).abs() < 1e-10, "elem {e} comp {c}: {g:?}");
                }
                assert!(geom::norm(&sum_grads) < 1e-10);
            }
        }
    }

    #[test]
    fn from_data_fixes_orientation() {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let boundary = vec![false; 4];
        // Positively and negatively oriented copies of the same tet.
        let a = Mesh::from_data(3, vertices.clone(), boundary.clone(), vec![[0, 1, 2, 3]], 0)
            .unwrap();
        let b = Mesh::from_data(3, vertices, boundary, vec![[0, 2, 1, 3]], 0).unwrap();
        assert!(rel_close(a.volume(0), 1.0 / 6.0, 1e-15));
        assert!(rel_close(b.volume(0), 1.0 / 6.0, 1e-15));
        assert_eq!(b.element(0), &[0, 2, 3, 1]);
    }

    #[test]
    fn degenerate_element_rejected() {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 1e-16, 0.0],
        ];
        let res = Mesh::from_data(
            2,
            vertices,
            vec![false; 3],
            vec![[0, 1, 2, NO_VERTEX]],
            0,
        );
        assert!(matches!(res, Err(Error::DegenerateElement { elem: 0, .. })));
    }

    #[test]
    fn rejects_inconsistent_data() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            Mesh::from_data(2, verts.clone(), vec![false; 2], vec![[0, 1, 2, NO_VERTEX]], 0),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            Mesh::from_data(2, verts.clone(), vec![false; 3], vec![[0, 1, 7, NO_VERTEX]], 0),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            Mesh::from_data(2, verts.clone(), vec![false; 3], vec![[0, 1, 1, NO_VERTEX]], 0),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            Mesh::from_data(4, verts, vec![false; 3], vec![[0, 1, 2, NO_VERTEX]], 0),
            Err(Error::InvalidDim(4))
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        for (dim, level) in [(2usize, 2u32), (3, 1)] {
            let mesh = Mesh::unit_ball(dim, level).unwrap();
            let text = mesh.to_text_string();
            let back = Mesh::from_text_str(&text).unwrap();
            assert_eq!(back.dim(), mesh.dim());
            assert_eq!(back.level(), mesh.level());
            assert_eq!(back.n_vertices(), mesh.n_vertices());
            assert_eq!(back.n_elements(), mesh.n_elements());
            assert_eq!(back.h().to_bits(), mesh.h().to_bits());
            for i in 0..mesh.n_vertices() {
                assert_eq!(back.is_boundary(i), mesh.is_boundary(i));
                for c in 0..3 {
                    assert_eq!(
                        back.vertex(i)[c].to_bits(),
                        mesh.vertex(i)[c].to_bits(),
                        "vertex {i} comp {c}"
                    );
                }
            }
            for e in 0..mesh.n_elements() {
                assert_eq!(back.element(e), mesh.element(e));
            }
        }
    }

    #[test]
    fn text_parse_reports_line_numbers() {
        assert!(matches!(
            Mesh::from_text_str(""),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Mesh::from_text_str("grid 2 3 1 0"),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_vertex = "mesh 2 3 1 0\n0 0 0\n1 0 oops\n0 1 1\n0 1 2\n";
        assert!(matches!(
            Mesh::from_text_str(bad_vertex),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
