//! Simplex quadrature rules and mesh-wide integration.
//!
//! Rules are conical products: the reference simplex is mapped to the unit
//! square/cube, where a Gauss-Legendre rule is crossed with Gauss-Jacobi rules
//! that absorb the collapse Jacobian `(1-v)` (and `(1-w)^2` in 3D).  This
//! yields a rule of any requested polynomial order with strictly positive
//! weights, stored in barycentric coordinates so it applies to every element
//! through the affine map.

use crate::error::{Error, Result};
use crate::gauss;
use crate::geom::{KahanSum, Point};
use crate::mesh::Mesh;

/// Quadrature points in barycentric coordinates on the reference simplex.
///
/// `weights` sum to the reference simplex volume `1/dim!`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    order: usize,
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the conical product rule exact for polynomials of total degree
    /// <= `order` on the reference simplex of dimension `dim`.
    pub fn simplex(dim: usize, order: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDim(dim));
        }
        if order == 0 {
            return Err(Error::Invalid("quadrature order must be at least 1".into()));
        }
        // n-point Gauss rules are exact to degree 2n - 1 per direction.
        let n = (order + 1).div_ceil(2);
        let (xu, wu) = gauss::legendre_01(n)?;
        let (xv, wv) = gauss::jacobi_01(n, 1)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match dim {
            2 => {
                // x = u(1-v), y = v maps the square onto the triangle with
                // Jacobian (1-v).
                for (&v, &bv) in xv.iter().zip(&wv) {
                    for (&u, &au) in xu.iter().zip(&wu) {
                        let x = u * (1.0 - v);
                        let y = v;
                        points.push([1.0 - x - y, x, y, 0.0]);
                        weights.push(au * bv);
                    }
                }
            }
            _ => {
                let (xw, ww) = gauss::jacobi_01(n, 2)?;
                // x = u(1-v)(1-w), y = v(1-w), z = w with Jacobian
                // (1-v)(1-w)^2.
                for (&w, &cw) in xw.iter().zip(&ww) {
                    for (&v, &bv) in xv.iter().zip(&wv) {
                        for (&u, &au) in xu.iter().zip(&wu) {
                            let x = u * (1.0 - v) * (1.0 - w);
                            let y = v * (1.0 - w);
                            let z = w;
                            points.push([1.0 - x - y - z, x, y, z]);
                            weights.push(au * bv * cw);
                        }
                    }
                }
            }
        }
        Ok(Self {
            dim,
            order,
            points,
            weights,
        })
    }

    /// Default production order: high enough that P1 integrands converge far
    /// below the tolerances used anywhere in the crate.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            2 => Self::simplex(2, 8),
            3 => Self::simplex(3, 6),
            d => Err(Error::InvalidDim(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Barycentric coordinates of each node (first `dim + 1` entries used).
    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Integrates `f(x, bary)` over one element; `x` is the physical node, `bary`
/// its barycentric coordinates.
pub fn integrate_element(
    mesh: &Mesh,
    elem: usize,
    rule: &QuadratureRule,
    mut f: impl FnMut(&Point, &[f64; 4]) -> f64,
) -> f64 {
    debug_assert_eq!(mesh.dim(), rule.dim());
    let verts = mesh.element_vertices(elem);
    let nv = mesh.dim() + 1;
    // |T| = |det| / dim!, and the rule weights sum to 1/dim!, so the correct
    // scaling is |T| * dim! = |det|.
    let jac = mesh.volume(elem) * factorial(mesh.dim());
    let mut acc = 0.0;
    for (bary, &w) in rule.points().iter().zip(rule.weights()) {
        let mut x = [0.0; 3];
        for (i, vert) in verts.iter().enumerate().take(nv) {
            x[0] += bary[i] * vert[0];
            x[1] += bary[i] * vert[1];
            x[2] += bary[i] * vert[2];
        }
        acc += w * f(&x, bary);
    }
    jac * acc
}

/// Integrates `f(elem, x, bary)` over the whole mesh with compensated
/// summation in a fixed element order, so results are deterministic.
pub fn integrate_mesh(
    mesh: &Mesh,
    rule: &QuadratureRule,
    mut f: impl FnMut(usize, &Point, &[f64; 4]) -> f64,
) -> f64 {
    let mut sum = KahanSum::new();
    for e in 0..mesh.n_elements() {
        sum.add(integrate_element(mesh, e, rule, |x, b| f(e, x, b)));
    }
    sum.value()
}

/// Integrates with an order-doubling consistency check: if the default order
/// and the doubled order disagree beyond `rel_tol`, the order is escalated
/// (up to three doublings).  Returns (value, final order, escalated?).
pub fn integrate_mesh_checked(
    mesh: &Mesh,
    rule: &QuadratureRule,
    rel_tol: f64,
    mut f: impl FnMut(usize, &Point, &[f64; 4]) -> f64,
) -> Result<(f64, usize, bool)> {
    let mut order = rule.order();
    let mut coarse = integrate_mesh(mesh, rule, &mut f);
    for _ in 0..3 {
        let doubled = QuadratureRule::simplex(mesh.dim(), 2 * order)?;
        let fine = integrate_mesh(mesh, &doubled, &mut f);
        if (fine - coarse).abs() <= rel_tol * fine.abs().max(1e-300) {
            return Ok((fine, 2 * order, order != rule.order()));
        }
        order *= 2;
        coarse = fine;
    }
    Err(Error::Quadrature(format!(
        "mesh integral failed the order-doubling check at order {order}"
    )))
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    // int over the reference simplex of x^a y^b (z^c) equals
    // a! b! (c!) / (a + b (+ c) + dim)!.
    fn monomial_exact(dim: usize, pows: [i32; 3]) -> f64 {
        let num: f64 = pows.iter().map(|&p| factorial(p as usize)).product();
        let total: usize = pows.iter().map(|&p| p as usize).sum();
        num / factorial(total + dim)
    }

    fn reference_simplex_rule_integral(rule: &QuadratureRule, pows: [i32; 3]) -> f64 {
        // On the reference simplex the barycentric coordinates 1..=dim are the
        // cartesian coordinates themselves.
        rule.points()
            .iter()
            .zip(rule.weights())
            .map(|(b, &w)| {
                w * b[1].powi(pows[0]) * b[2].powi(pows[1]) * b[3].powi(pows[2])
            })
            .sum()
    }

    #[test]
    fn triangle_monomials_exact_to_order() {
        for order in 1..=12 {
            let rule = QuadratureRule::simplex(2, order).unwrap();
            for a in 0..=order as i32 {
                for b in 0..=(order as i32 - a) {
                    let got = reference_simplex_rule_integral(&rule, [a, b, 0]);
                    let want = monomial_exact(2, [a, b, 0]);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.max(1e-3),
                        "order={order} a={a} b={b}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn tet_monomials_exact_to_order() {
        for order in 1..=9 {
            let rule = QuadratureRule::simplex(3, order).unwrap();
            for a in 0..=order as i32 {
                for b in 0..=(order as i32 - a) {
                    for c in 0..=(order as i32 - a - b) {
                        let got = reference_simplex_rule_integral(&rule, [a, b, c]);
                        let want = monomial_exact(3, [a, b, c]);
                        assert!(
                            (got - want).abs() <= 1e-12 * want.max(1e-3),
                            "order={order} ({a},{b},{c}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn weights_positive_sum_to_reference_volume() {
        for dim in [2usize, 3] {
            for order in 1..=16 {
                let rule = QuadratureRule::simplex(dim, order).unwrap();
                assert!(rule.weights().iter().all(|&w| w > 0.0));
                let sum: f64 = rule.weights().iter().sum();
                let want = 1.0 / factorial(dim);
                assert!(
                    (sum - want).abs() < 1e-14,
                    "dim={dim} order={order}: sum {sum}"
                );
                for b in rule.points() {
                    let s: f64 = b[..=dim].iter().sum();
                    assert!((s - 1.0).abs() < 1e-13);
                    assert!(b[..=dim].iter().all(|&l| l >= 0.0));
                }
            }
        }
    }
}
