//! One-dimensional Gauss rules on [0, 1].
//!
//! Nodes are found by Newton iteration on the orthogonal-polynomial
//! recurrences; this is self-contained and accurate to machine precision for
//! the modest orders used here.  The Jacobi variant is specialized to integer
//! weight exponents `(1-x)^alpha` with `alpha` in {1, 2}, which is all the
//! collapsed simplex product rules need.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [0, 1]; exact for polynomials of
/// degree <= 2n - 1.  Weights sum to 1.
pub fn legendre_01(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Invalid("Gauss rule needs at least one node".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in symmetric pairs on [-1, 1]; solve for the upper half.
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p0, p1) = legendre_pair(n, z);
            let pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (p0, p1) = legendre_pair(n, z);
        let pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// Evaluates (P_n(z), P_{n-1}(z)) by the three-term recurrence.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 0.0;
    for j in 0..n {
        let p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
    }
    (p0, p1)
}

/// Gauss–Jacobi nodes and weights on [0, 1] for the weight `(1-x)^alpha`
/// (alpha in {1, 2}); exact for f polynomial of degree <= 2n - 1 in
/// `int_0^1 f(x) (1-x)^alpha dx`.  Weights sum to 1/(alpha + 1).
pub fn jacobi_01(n: usize, alpha: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Invalid("Gauss rule needs at least one node".into()));
    }
    if !(alpha == 1 || alpha == 2) {
        return Err(Error::Invalid(format!(
            "Jacobi weight exponent {alpha} not supported (need 1 or 2)"
        )));
    }
    let alf = alpha as f64;
    let nf = n as f64;
    let mut x = vec![0.0; n]; // roots on [-1, 1], descending
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = match i {
            0 => {
                let an = alf / nf;
                let r1 = (1.0 + alf) * (2.78 / (4.0 + nf * nf) + 0.768 * an / nf);
                let r2 = 1.0 + 1.48 * an + 0.452 * an * an;
                1.0 - r1 / r2
            }
            1 => {
                let r1 = (4.1 + alf) / ((1.0 + alf) * (1.0 + 0.156 * alf));
                let r2 = 1.0 + 0.06 * (nf - 8.0) * (1.0 + 0.12 * alf) / nf;
                x[0] - (1.0 - x[0]) * r1 * r2
            }
            2 => {
                let r1 = (1.67 + 0.28 * alf) / (1.0 + 0.37 * alf);
                let r2 = 1.0 + 0.22 * (nf - 8.0) / nf;
                let r3 = 1.0 + 8.0 * alf / ((6.28 + alf) * nf * nf);
                x[1] - (x[0] - x[1]) * r1 * r2 * r3
            }
            _ if i == n - 2 && n > 3 => {
                let r1 = 1.0 / 0.766;
                let r2 = 1.0 / (1.0 + 0.639 * (nf - 4.0) / (1.0 + 0.71 * (nf - 4.0)));
                let r3 = 1.0 / (1.0 + 20.0 * alf / ((7.5 + alf) * nf * nf));
                x[i - 1] + (x[i - 1] - x[i - 2]) * r1 * r2 * r3
            }
            _ if i == n - 1 && n > 3 => {
                let r1 = 1.0 / 1.67;
                let r2 = 1.0 / (1.0 + 0.22 * (nf - 8.0) / nf);
                let r3 = 1.0 / (1.0 + 8.0 * alf / ((6.28 + alf) * nf * nf));
                x[i - 1] + (x[i - 1] - x[i - 2]) * r1 * r2 * r3
            }
            _ => 3.0 * x[i - 1] - 3.0 * x[i - 2] + x[i - 3],
        };
        let mut converged = false;
        for _ in 0..200 {
            let (p0, p0m1) = jacobi_pair(n, alf, z);
            // Derivative of P_n^{(alpha,0)} from the standard identity.
            let pp = (nf * (alf - (2.0 * nf + alf) * z) * p0 + 2.0 * (nf + alf) * nf * p0m1)
                / ((2.0 * nf + alf) * (1.0 - z * z));
            let dz = p0 / pp;
            z = (z - dz).clamp(-1.0 + 1e-14, 1.0 - 1e-14);
            if dz.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence(format!(
                "Jacobi node {i} of {n} (alpha = {alpha})"
            )));
        }
        x[i] = z;
        let (p0, p1) = jacobi_pair(n, alf, z);
        let pp = (nf * (alf - (2.0 * nf + alf) * z) * p0 + 2.0 * (nf + alf) * nf * p1)
            / ((2.0 * nf + alf) * (1.0 - z * z));
        // Gamma ratios reduce to rationals for integer alpha, beta = 0:
        //   alpha = 1:  1/(n(n+1)),   alpha = 2:  1/(n(n+2)).
        let gamma_ratio = match alpha {
            1 => 1.0 / (nf * (nf + 1.0)),
            _ => 1.0 / (nf * (nf + 2.0)),
        };
        w[i] = gamma_ratio * (2.0 * nf + alf) * 2f64.powf(alf) / (pp * p1);
    }
    // Map [-1, 1] with weight (1-z)^alpha to [0, 1] with weight (1-t)^alpha:
    // t = (1+z)/2 scales weights by 2^{-(alpha+1)}; also flip to ascending.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        nodes[i] = 0.5 * (1.0 + x[n - 1 - i]);
        weights[i] = w[n - 1 - i] / 2f64.powi(alpha as i32 + 1);
    }
    Ok((nodes, weights))
}

/// Evaluates (P_n^{(alpha,0)}(z), P_{n-1}^{(alpha,0)}(z)).
fn jacobi_pair(n: usize, alf: f64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = 1.0; // P_0
    let mut p0 = (alf + (2.0 + alf) * z) / 2.0; // P_1
    for j in 2..=n {
        let jf = j as f64;
        let a1 = 2.0 * jf * (jf + alf) * (2.0 * jf + alf - 2.0);
        let a2 = (2.0 * jf + alf - 1.0) * alf * alf;
        let a3 = (2.0 * jf + alf - 2.0) * (2.0 * jf + alf - 1.0) * (2.0 * jf + alf);
        let a4 = 2.0 * (jf + alf - 1.0) * (jf - 1.0) * (2.0 * jf + alf);
        let p2 = p1;
        p1 = p0;
        p0 = ((a2 + a3 * z) * p1 - a4 * p2) / a1;
    }
    (p0, p1)
}
