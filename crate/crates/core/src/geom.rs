//! Small fixed-size vector helpers.
//!
//! Points and gradients are stored as `[f64; 3]` regardless of the ambient
//! dimension; 2D data simply keeps the third component at zero, which lets the
//! integration and assembly loops stay dimension-agnostic.

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0, 0.0, 0.0];

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn axpy(y: &mut Point, alpha: f64, x: &Point) {
    y[0] += alpha * x[0];
    y[1] += alpha * x[1];
    y[2] += alpha * x[2];
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm_sq(a: &Point) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

#[inline]
pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Compensated (Neumaier) summation; keeps mesh-wide reductions deterministic
/// and accurate independently of element count.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_orthogonal() {
        let a = [1.0, 2.0, 3.0];
        let b = [-0.5, 0.25, 2.0];
        let c = cross(&a, &b);
        assert!(dot(&a, &c).abs() < 1e-14);
        assert!(dot(&b, &c).abs() < 1e-14);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..1_000_000 {
            s.add(1e-16);
        }
        let exact = 1.0 + 1e-10;
        assert!((s.value() - exact).abs() < 1e-15);
    }
}
