//! Continuous piecewise-linear (P1) functions on a simplicial mesh.
//!
//! A function is stored as one value per mesh vertex.  Candidates for the
//! Sobolev quotient vanish at boundary vertices and are understood as
//! extended by zero outside the triangulated polytope; [`interpolate_shifted`]
//! produces such candidates from smooth fields by subtracting the boundary
//! trace.

use crate::error::{Error, Result};
use crate::geom::{self, Point, ORIGIN};
use crate::mesh::Mesh;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Barycentric coordinates may round slightly negative for points on element
/// facets; anything above this is treated as inside.
const BARY_TOL: f64 = -1e-12;

#[derive(Debug, Clone)]
pub struct FeFunction<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
}

impl<'m> FeFunction<'m> {
    pub fn new(mesh: &'m Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::Invalid(format!(
                "{} nodal values for a mesh with {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("nodal value {bad}")));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: &'m Mesh) -> Self {
        Self {
            mesh,
            values: vec![0.0; mesh.n_vertices()],
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// The (constant) gradient on element `e`.
    pub fn element_gradient(&self, e: usize) -> Point {
        let idx = self.mesh.element(e);
        let grads = self.mesh.basis_gradients(e);
        let mut g = ORIGIN;
        for (k, &i) in idx.iter().enumerate() {
            geom::axpy(&mut g, self.values[i], &grads[k]);
        }
        g
    }

    /// Value at a quadrature node of element `e` given its barycentric
    /// coordinates.
    pub fn value_at_bary(&self, e: usize, bary: &[f64; 4]) -> f64 {
        let idx = self.mesh.element(e);
        idx.iter()
            .enumerate()
            .map(|(k, &i)| bary[k] * self.values[i])
            .sum()
    }

    /// Evaluates at an arbitrary point by scanning for a containing element.
    /// Returns `None` outside the triangulated polytope, where the zero
    /// extension applies.
    pub fn evaluate(&self, x: &Point) -> Option<f64> {
        let (e, bary) = self.locate(x)?;
        Some(self.value_at_bary(e, &bary))
    }

    /// Finds an element containing `x` and its barycentric coordinates there.
    pub fn locate(&self, x: &Point) -> Option<(usize, [f64; 4])> {
        let mesh = self.mesh;
        let dim = mesh.dim();
        'elems: for e in 0..mesh.n_elements() {
            let verts = mesh.element_vertices(e);
            let grads = mesh.basis_gradients(e);
            let d = geom::sub(x, &verts[0]);
            let mut bary = [0.0; 4];
            bary[0] = 1.0;
            let mut sum_check = 0.0;
            for k in 0..=dim {
                bary[k] += geom::dot(&grads[k], &d);
                if bary[k] < BARY_TOL {
                    continue 'elems;
                }
                sum_check += bary[k];
            }
            debug_assert!((sum_check - 1.0).abs() < 1e-9);
            return Some((e, bary));
        }
        None
    }

    /// Sets the value at every boundary vertex to zero.
    pub fn enforce_zero_boundary(&mut self) {
        for i in 0..self.values.len() {
            if self.mesh.is_boundary(i) {
                self.values[i] = 0.0;
            }
        }
    }

    pub fn is_zero_on_boundary(&self) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(i, &v)| !self.mesh.is_boundary(i) || v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// One nodal value per line at 17 significant digits, after a header
    /// `fefunction <n>`; round-trips exactly.
    pub fn to_text_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "fefunction {}", self.values.len()).unwrap();
        for v in &self.values {
            writeln!(s, "{v:.16e}").unwrap();
        }
        s
    }

    pub fn from_text_str(mesh: &'m Mesh, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lno, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("fefunction") {
            return Err(Error::Parse {
                line: lno,
                msg: "expected header starting with 'fefunction'".into(),
            });
        }
        let n: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or(Error::Parse {
                line: lno,
                msg: "bad value count".into(),
            })?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let (lno, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of input".into(),
            })?;
            values.push(line.trim().parse().map_err(|_| Error::Parse {
                line: lno,
                msg: format!("bad nodal value '{}'", line.trim()),
            })?);
        }
        Self::new(mesh, values)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text_string())?;
        Ok(())
    }

    pub fn read_text(mesh: &'m Mesh, path: &Path) -> Result<Self> {
        Self::from_text_str(mesh, &fs::read_to_string(path)?)
    }
}

/// Interpolates `f` into the zero-trace P1 space: interior vertices receive
/// `f(x_i) - shift` where `shift` is the mean of `f` over the boundary
/// vertices, and boundary vertices receive zero.
///
/// Returns the function together with the spread (max - min) of `f` over the
/// boundary vertices.  For fields that are constant on the unit sphere --
/// e.g. radial profiles centred at the origin -- the spread vanishes (up to
/// rounding) and the shift is exact: the interpolant agrees with the
/// interpolation of `f - f(sphere)` everywhere.
pub fn interpolate_shifted<'m>(
    mesh: &'m Mesh,
    f: impl Fn(&Point) -> f64,
) -> Result<(FeFunction<'m>, f64)> {
    let mut boundary_min = f64::INFINITY;
    let mut boundary_max = f64::NEG_INFINITY;
    let mut boundary_sum = geom::KahanSum::new();
    let mut n_boundary = 0usize;
    for i in 0..mesh.n_vertices() {
        if mesh.is_boundary(i) {
            let v = f(mesh.vertex(i));
            boundary_min = boundary_min.min(v);
            boundary_max = boundary_max.max(v);
            boundary_sum.add(v);
            n_boundary += 1;
        }
    }
    if n_boundary == 0 {
        return Err(Error::Invalid("mesh has no boundary vertices".into()));
    }
    let shift = boundary_sum.value() / n_boundary as f64;
    let mut values = vec![0.0; mesh.n_vertices()];
    for (i, value) in values.iter_mut().enumerate() {
        if !mesh.is_boundary(i) {
            *value = f(mesh.vertex(i)) - shift;
        }
    }
    let fe = FeFunction::new(mesh, values)?;
    Ok((fe, boundary_max - boundary_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn affine(x: &Point) -> f64 {
        0.3 + 1.25 * x[0] - 0.75 * x[1] + 0.5 * x[2]
    }

    #[test]
    fn nodal_interpolation_reproduces_affine_fields() {
        for (dim, level) in [(2usize, 2u32), (3, 1)] {
            let mesh = Mesh::unit_ball(dim, level).unwrap();
            let values: Vec<f64> = (0..mesh.n_vertices())
                .map(|i| affine(mesh.vertex(i)))
                .collect();
            let u = FeFunction::new(&mesh, values).unwrap();
            for e in 0..mesh.n_elements() {
                let g = u.element_gradient(e);
                assert!((g[0] - 1.25).abs() < 1e-12);
                assert!((g[1] + 0.75).abs() < 1e-12);
                if dim == 3 {
                    assert!((g[2] - 0.5).abs() < 1e-12);
                }
            }
            // Points strictly inside the polytope evaluate exactly.
            let probe = [0.21, -0.13, if dim == 3 { 0.17 } else { 0.0 }];
            let got = u.evaluate(&probe).unwrap();
            assert!((got - affine(&probe)).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_is_none_outside_and_matches_nodes_inside() {
        let mesh = Mesh::unit_ball(2, 2).unwrap();
        let u = FeFunction::new(
            &mesh,
            (0..mesh.n_vertices()).map(|i| i as f64).collect(),
        )
        .unwrap();
        assert!(u.evaluate(&[1.2, 0.3, 0.0]).is_none());
        for i in [0, 3, mesh.n_vertices() - 1] {
            let got = u.evaluate(mesh.vertex(i)).unwrap();
            assert!((got - u.value(i)).abs() < 1e-9, "vertex {i}: {got}");
        }
    }

    #[test]
    fn constant_has_zero_gradient_everywhere() {
        let mesh = Mesh::unit_ball(3, 1).unwrap();
        let u = FeFunction::new(&mesh, vec![2.5; mesh.n_vertices()]).unwrap();
        for e in 0..mesh.n_elements() {
            assert!(geom::norm(&u.element_gradient(e)) < 1e-13);
        }
        assert!((u.evaluate(&[0.1, 0.2, -0.3]).unwrap() - 2.5).abs() < 1e-13);
    }

    #[test]
    fn shifted_interpolation_of_radial_field_is_exact_zero_trace() {
        let mesh = Mesh::unit_ball(2, 3).unwrap();
        let f = |x: &Point| 1.0 / (1.0 + geom::norm_sq(x));
        let (u, spread) = interpolate_shifted(&mesh, f).unwrap();
        // Boundary vertices sit on the unit sphere, so a radial field has a
        // single boundary value and the shift loses nothing.
        assert!(spread < 1e-14, "spread {spread}");
        assert!(u.is_zero_on_boundary());
        let shift = 0.5;
        for i in 0..mesh.n_vertices() {
            if !mesh.is_boundary(i) {
                let want = f(mesh.vertex(i)) - shift;
                assert!((u.value(i) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn shifted_interpolation_reports_spread_for_offcentre_fields() {
        let mesh = Mesh::unit_ball(2, 2).unwrap();
        let f = |x: &Point| 1.0 / (1.0 + geom::norm_sq(&geom::sub(x, &[0.3, 0.0, 0.0])));
        let (u, spread) = interpolate_shifted(&mesh, f).unwrap();
        assert!(spread > 1e-2, "off-centre field should have a real spread");
        assert!(u.is_zero_on_boundary());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mesh = Mesh::unit_ball(2, 1).unwrap();
        let values: Vec<f64> = (0..mesh.n_vertices())
            .map(|i| (i as f64 * 0.7).sin() / 3.0)
            .collect();
        let u = FeFunction::new(&mesh, values).unwrap();
        let back = FeFunction::from_text_str(&mesh, &u.to_text_string()).unwrap();
        for i in 0..mesh.n_vertices() {
            assert_eq!(back.value(i).to_bits(), u.value(i).to_bits());
        }
        assert!(FeFunction::from_text_str(&mesh, "fefunction 3\n1\n2\n3\n").is_err());
    }

    proptest! {
        // P1 interpolation satisfies the discrete maximum principle: any
        // value is a convex combination of nodal values.
        #[test]
        fn evaluate_respects_nodal_bounds(
            seed_values in prop::collection::vec(-100.0f64..100.0, 19),
            r in 0.0f64..0.95,
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let mesh = Mesh::unit_ball(2, 1).unwrap();
            prop_assume!(seed_values.len() == mesh.n_vertices());
            let u = FeFunction::new(&mesh, seed_values.clone()).unwrap();
            let x = [r * theta.cos(), r * theta.sin(), 0.0];
            if let Some(v) = u.evaluate(&x) {
                let lo = seed_values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = seed_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn element_gradient_is_linear_in_values(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let mesh = Mesh::unit_ball(2, 1).unwrap();
            let n = mesh.n_vertices();
            let u = FeFunction::new(&mesh, (0..n).map(|i| (i as f64).sin()).collect()).unwrap();
            let v = FeFunction::new(&mesh, (0..n).map(|i| (i as f64).cos()).collect()).unwrap();
            let mixed: Vec<f64> = (0..n).map(|i| a * u.value(i) + b * v.value(i)).collect();
            let w = FeFunction::new(&mesh, mixed).unwrap();
            for e in 0..mesh.n_elements() {
                let gu = u.element_gradient(e);
                let gv = v.element_gradient(e);
                let gw = w.element_gradient(e);
                for c in 0..2 {
                    let want = a * gu[c] + b * gv[c];
                    prop_assert!((gw[c] - want).abs() < 1e-10 * (1.0 + want.abs()));
                }
            }
        }
    }
}
