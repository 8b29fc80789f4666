//! The extremal family of the sharp Sobolev inequality on R^N.
//!
//! For exponents 1 < p < N the best constant in `||Du||_p >= S ||u||_{p*}`,
//! `p* = Np/(N-p)`, is attained by the radial bump
//!
//! ```text
//!     u0(r) = k0 (1 + r^q)^{-(N-p)/p},        q = p/(p-1),
//! ```
//!
//! normalized here so that `||D u0||_p = 1`, and by its dilates and
//! translates.  The family is parametrized as
//!
//! ```text
//!     U_{c,lambda,x0}(x) = c lambda u0(lambda^{p/(N-p)} |x - x0|),
//! ```
//!
//! which keeps both norms independent of `lambda` and `x0`:
//! `||DU||_p = |c|` and `||U||_{p*} = |c| / S`.
//!
//! All one-dimensional integrals reduce, via `t = r^q / (1 + r^q)`, to
//! Beta-type integrals with (integrable) endpoint singularities, which the
//! double-exponential integrator in [`crate::quad1d`] evaluates to close to
//! machine precision.

use crate::error::{Error, Result};
use crate::geom::{self, Point, ORIGIN};
use crate::quad1d;

/// Relative tolerance for the internal profile integrals.
const PROFILE_TOL: f64 = 1e-13;

/// Points closer to the concentration centre than this are treated as the
/// centre itself when evaluating gradients and Hessians.
const CENTER_GUARD: f64 = 1e-12;

/// An admissible exponent pair `(p, dim)` with `1 < p < dim`, plus the
/// derived exponents used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    p: f64,
    dim: usize,
}

/// Which distance to the extremal manifold a concentration scale should be
/// tuned for; see [`Exponents::optimal_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// The p-th power gradient distance `||D(u - v)||_p^p` plus its
    /// closed-out exterior part.
    SobolevGradient,
    /// The weighted quadratic quasi-norm used in deficit bounds.
    QuasiNorm,
}

impl Exponents {
    pub fn new(p: f64, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDim(dim));
        }
        if !(p > 1.0 && p < dim as f64) || !p.is_finite() {
            return Err(Error::InvalidExponent { p, dim });
        }
        Ok(Self { p, dim })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn n(&self) -> f64 {
        self.dim as f64
    }

    /// Critical exponent `p* = Np / (N - p)`.
    pub fn p_star(&self) -> f64 {
        self.n() * self.p / (self.n() - self.p)
    }

    /// Hoelder conjugate `q = p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Profile decay constant `kappa = (N - p) / (p - 1)`.
    pub fn kappa(&self) -> f64 {
        (self.n() - self.p) / (self.p - 1.0)
    }

    /// Convergence rate of the discrete Sobolev constant:
    /// `S_h - S ~ h^alpha` with `alpha = 2(N - p) / (N + p - 2)`.
    pub fn alpha(&self) -> f64 {
        2.0 * (self.n() - self.p) / (self.n() + self.p - 2.0)
    }

    /// Convergence rate of the distance from the discrete minimizer to the
    /// extremal manifold: `gamma = (N - p) / (N + p^2 - 2p)`.
    pub fn gamma(&self) -> f64 {
        (self.n() - self.p) / (self.n() + self.p * self.p - 2.0 * self.p)
    }

    /// The spatial concentration scale `lambda^{p / (N - p)}`.
    pub fn spatial_scale(&self, lambda: f64) -> f64 {
        lambda.powf(self.p / (self.n() - self.p))
    }

    /// The concentration parameter balancing the interior (mesh) and
    /// exterior (tail) interpolation errors at mesh size `h`, for the given
    /// distance.  Both are negative powers of `h`, so `lambda -> infinity`
    /// as the mesh is refined.
    pub fn optimal_lambda(&self, h: f64, kind: DistanceKind) -> f64 {
        let (p, n) = (self.p, self.n());
        let exponent = match kind {
            DistanceKind::QuasiNorm => {
                2.0 * (p - 1.0) * (n - p) / (p * (n + p - 2.0))
            }
            DistanceKind::SobolevGradient => {
                (p - 1.0) * (n - p) / (n + p * p - 2.0 * p)
            }
        };
        h.powf(-exponent)
    }

    /// Surface measure of the unit sphere: `2 pi` in 2D, `4 pi` in 3D.
    pub fn sphere_measure(&self) -> f64 {
        match self.dim {
            2 => std::f64::consts::TAU,
            _ => 2.0 * std::f64::consts::TAU,
        }
    }
}

/// The normalized radial profile `u0` together with its normalization
/// constant `k0` and the sharp Sobolev constant `S`.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    exps: Exponents,
    k0: f64,
    sharp: f64,
}

impl RadialProfile {
    pub fn new(exps: Exponents) -> Result<Self> {
        let (n, q, kappa, p) = (exps.n(), exps.q(), exps.kappa(), exps.p());
        // ||D u0 / k0||_p^p = omega kappa^p / q * B(N/q + 1, N - 1 - N/q)
        let i_grad = beta_integral(n / q, n - 2.0 - n / q)? / q;
        // ||u0 / k0||_{p*}^{p*} = omega / q * B(N/q, N - N/q)
        let j = beta_integral(n / q - 1.0, n - n / q - 1.0)? / q;
        let omega = exps.sphere_measure();
        let k0 = (omega * kappa.powf(p) * i_grad).powf(-1.0 / p);
        let sharp = 1.0 / (k0 * (omega * j).powf(1.0 / exps.p_star()));
        if !(k0.is_finite() && sharp.is_finite()) {
            return Err(Error::NonFinite(format!(
                "profile constants for p = {p}, dim = {}",
                exps.dim
            )));
        }
        Ok(Self { exps, k0, sharp })
    }

    pub fn exponents(&self) -> Exponents {
        self.exps
    }

    /// Normalization constant giving `||D u0||_p = 1`.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// The sharp constant `S = ||D u0||_p / ||u0||_{p*} = 1 / ||u0||_{p*}`.
    pub fn sharp_constant(&self) -> f64 {
        self.sharp
    }

    /// `u0(r) = k0 (1 + r^q)^{-(N-p)/p}`.
    pub fn value(&self, r: f64) -> f64 {
        let (q, p, n) = (self.exps.q(), self.exps.p(), self.exps.n());
        let decay = (n - p) / p;
        if !r.is_finite() {
            return 0.0;
        }
        if r <= 1.0 {
            self.k0 * (1.0 + r.powf(q)).powf(-decay)
        } else {
            // log form: safe for arbitrarily large r
            self.k0 * (-decay * (q * r.ln() + r.powf(-q).ln_1p())).exp()
        }
    }

    /// `u0'(r) = -k0 kappa r^{1/(p-1)} (1 + r^q)^{-N/p}`.
    pub fn derivative(&self, r: f64) -> f64 {
        let (q, p, n, kappa) = (self.exps.q(), self.exps.p(), self.exps.n(), self.exps.kappa());
        if r <= 0.0 || !r.is_finite() {
            return 0.0;
        }
        if r <= 1.0 {
            -self.k0 * kappa * r.powf(1.0 / (p - 1.0)) * (1.0 + r.powf(q)).powf(-n / p)
        } else {
            -self.k0
                * kappa
                * (r.ln() / (p - 1.0) - (n / p) * (q * r.ln() + r.powf(-q).ln_1p())).exp()
        }
    }

    /// `u0''(r) = -(k0 kappa / (p-1)) r^{(2-p)/(p-1)} (1+r^q)^{-N/p-1}
    ///            (1 - (N-1) r^q)`.
    ///
    /// Blows up at `r = 0` when `p > 2` and changes sign at
    /// `r^q = 1/(N-1)`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        let (q, p, n, kappa) = (self.exps.q(), self.exps.p(), self.exps.n(), self.exps.kappa());
        let front = -self.k0 * kappa / (p - 1.0);
        if !r.is_finite() {
            return 0.0;
        }
        if r <= 1.0 {
            let rq = r.powf(q);
            front
                * r.powf((2.0 - p) / (p - 1.0))
                * (1.0 + rq).powf(-n / p - 1.0)
                * (1.0 - (n - 1.0) * rq)
        } else {
            // For r > 1: (1 - (N-1) r^q) / (1 + r^q) computed in a
            // cancellation- and overflow-safe form.
            let rmq = r.powf(-q);
            let bracket_ratio = (rmq - (n - 1.0)) / (1.0 + rmq);
            front
                * bracket_ratio
                * (((2.0 - p) / (p - 1.0)) * r.ln() - (n / p) * (q * r.ln() + rmq.ln_1p())).exp()
        }
    }

    /// The envelope `a(r) = r^{(2-p)/(p-1)} (1 + r^q)^{-N/p}` dominating both
    /// Hessian eigenvalue profiles: `|u0'(r)|/r = k0 kappa a(r)` exactly, and
    /// `|u0''(r)| <= (k0 kappa / (p-1)) max(1, N-1) a(r)`.
    pub fn envelope(&self, r: f64) -> f64 {
        let (q, p, n) = (self.exps.q(), self.exps.p(), self.exps.n());
        if !r.is_finite() {
            return 0.0;
        }
        if r <= 0.0 {
            return if p < 2.0 {
                0.0
            } else if p == 2.0 {
                1.0
            } else {
                f64::INFINITY
            };
        }
        if r <= 1.0 {
            r.powf((2.0 - p) / (p - 1.0)) * (1.0 + r.powf(q)).powf(-n / p)
        } else {
            (((2.0 - p) / (p - 1.0)) * r.ln() - (n / p) * (q * r.ln() + r.powf(-q).ln_1p())).exp()
        }
    }
}

/// A member `U_{c,lambda,x0}` of the extremal family.
#[derive(Debug, Clone, Copy)]
pub struct Extremal {
    profile: RadialProfile,
    c: f64,
    lambda: f64,
    center: Point,
}

impl Extremal {
    pub fn new(profile: &RadialProfile, c: f64, lambda: f64, center: Point) -> Result<Self> {
        if !c.is_finite() || !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Invalid(format!(
                "extremal parameters c = {c}, lambda = {lambda}"
            )));
        }
        if center.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite centre".into()));
        }
        if profile.exps.dim() == 2 && center[2] != 0.0 {
            return Err(Error::Invalid(
                "2d extremal centre has a nonzero third coordinate".into(),
            ));
        }
        Ok(Self {
            profile: *profile,
            c,
            lambda,
            center,
        })
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn exponents(&self) -> Exponents {
        self.profile.exps
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    fn scale(&self) -> f64 {
        self.profile.exps.spatial_scale(self.lambda)
    }

    pub fn value(&self, x: &Point) -> f64 {
        let r = geom::dist(x, &self.center);
        self.c * self.lambda * self.profile.value(self.scale() * r)
    }

    /// `DU(x) = c lambda s u0'(s r) (x - x0)/r` with `s` the spatial scale.
    pub fn gradient(&self, x: &Point) -> Point {
        let d = geom::sub(x, &self.center);
        let r = geom::norm(&d);
        if r < CENTER_GUARD {
            return ORIGIN;
        }
        let s = self.scale();
        let radial = self.c * self.lambda * s * self.profile.derivative(s * r);
        geom::scale(&d, radial / r)
    }

    /// Hessian eigenvalues at distance `r` from the centre: the radial one
    /// `c lambda s^2 u0''(s r)` (multiplicity 1) and the tangential one
    /// `c lambda s^2 u0'(s r)/(s r)` (multiplicity N-1).
    pub fn hessian_eigenvalues(&self, r: f64) -> (f64, f64) {
        let s = self.scale();
        let front = self.c * self.lambda * s * s;
        let sr = (s * r).max(CENTER_GUARD);
        (
            front * self.profile.second_derivative(sr),
            front * self.profile.derivative(sr) / sr,
        )
    }

    /// The full Hessian matrix at `x`, assembled from its eigenvalues as
    /// `H = u'' e_r e_r^T + (u'/r)(I - e_r e_r^T)` in the distance variable.
    pub fn hessian(&self, x: &Point) -> [[f64; 3]; 3] {
        let d = geom::sub(x, &self.center);
        let r = geom::norm(&d).max(CENTER_GUARD);
        let (rad, tan) = self.hessian_eigenvalues(r);
        let e = geom::scale(&d, 1.0 / r);
        let mut h = [[0.0; 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                let id = f64::from(u8::from(i == j));
                *entry = rad * e[i] * e[j] + tan * (id - e[i] * e[j]);
            }
        }
        h
    }

    /// `||DU||_p` over all of R^N; the parametrization makes it exactly
    /// `|c|`.
    pub fn grad_norm_p(&self) -> f64 {
        self.c.abs()
    }

    /// `||U||_{p*}` over all of R^N: `|c| / S`.
    pub fn pstar_norm(&self) -> f64 {
        self.c.abs() / self.profile.sharp
    }

    /// `int_{|x - x0| > radius} |DU|^p dx`, the gradient mass beyond a
    /// sphere around the concentration centre.
    pub fn grad_tail_p(&self, radius: f64) -> Result<f64> {
        let exps = self.profile.exps;
        let (n, q, p) = (exps.n(), exps.q(), exps.p());
        let full = self.c.abs().powf(p);
        let (t0, om0) = t_of_radius(self.scale() * radius, q);
        if t0 <= 0.0 {
            return Ok(full);
        }
        let partial = beta_integral_from(t0, om0, n / q, n - 2.0 - n / q)? / q;
        let i_grad = beta_integral(n / q, n - 2.0 - n / q)? / q;
        Ok(full * partial / i_grad)
    }

    /// `int_{|x - x0| > radius} |U|^{p*} dx`.
    pub fn pstar_tail(&self, radius: f64) -> Result<f64> {
        let exps = self.profile.exps;
        let (n, q) = (exps.n(), exps.q());
        let full = self.pstar_norm().powf(exps.p_star());
        let (t0, om0) = t_of_radius(self.scale() * radius, q);
        if t0 <= 0.0 {
            return Ok(full);
        }
        let partial = beta_integral_from(t0, om0, n / q - 1.0, n - n / q - 1.0)? / q;
        let j = beta_integral(n / q - 1.0, n - n / q - 1.0)? / q;
        Ok(full * partial / j)
    }

    /// `int_{|x - x0| < radius} |DU|^p dx`.
    pub fn grad_interior_p(&self, radius: f64) -> Result<f64> {
        let p = self.profile.exps.p();
        Ok(self.c.abs().powf(p) - self.grad_tail_p(radius)?)
    }

    /// `int_{|x| < 1} |DU|^p dx` for an arbitrary centre.  The integrand is
    /// radial about the centre, so the angular integral collapses to the
    /// fraction of the sphere `|x - x0| = rho` that lies inside the unit
    /// ball (a cap), leaving a single radial integral over the band where
    /// that fraction is neither 0 nor 1.
    pub fn grad_p_in_unit_ball(&self) -> Result<f64> {
        let exps = self.profile.exps;
        let (n, p) = (exps.n(), exps.p());
        let d = geom::norm(&self.center);
        if d < 1e-14 {
            // Flat profiles keep almost no mass inside, so the complement
            // formula would cancel; integrate the interior directly instead.
            let full = self.c.abs().powf(p);
            let tail = self.grad_tail_p(1.0)?;
            if tail < 0.9 * full {
                return Ok(full - tail);
            }
            let s = self.scale();
            let front = (self.c.abs() * self.lambda * s).powf(p) * exps.sphere_measure();
            let (mass, _) = quad1d::integrate(
                |rho| self.profile.derivative(s * rho).abs().powf(p) * rho.powf(n - 1.0),
                0.0,
                1.0,
                1e-12,
            )?;
            return Ok(front * mass);
        }
        let core = if d < 1.0 {
            self.grad_interior_p(1.0 - d)?
        } else {
            0.0
        };
        let s = self.scale();
        let front = (self.c.abs() * self.lambda * s).powf(p) * exps.sphere_measure();
        let frac = |rho: f64| -> f64 {
            let mu = ((1.0 - d * d - rho * rho) / (2.0 * rho * d)).clamp(-1.0, 1.0);
            if exps.dim() == 2 {
                1.0 - mu.acos() / std::f64::consts::PI
            } else {
                0.5 * (1.0 + mu)
            }
        };
        let (band, _) = quad1d::integrate(
            |rho| {
                front
                    * self.profile.derivative(s * rho).abs().powf(p)
                    * rho.powf(n - 1.0)
                    * frac(rho)
            },
            (1.0 - d).abs(),
            1.0 + d,
            1e-11,
        )?;
        Ok(core + band)
    }

    /// `int_{|x| > 1} |DU|^p dx`, clamped at zero against cancellation when
    /// the mass outside the unit ball is below quadrature accuracy.
    pub fn grad_p_outside_unit_ball(&self) -> Result<f64> {
        let p = self.profile.exps.p();
        let full = self.c.abs().powf(p);
        Ok((full - self.grad_p_in_unit_ball()?).max(0.0))
    }
}

/// `(t(rho), 1 - t(rho))` with `t(rho) = rho^q / (1 + rho^q)`.  Both parts
/// are computed to full relative accuracy (and without overflow), which
/// matters because `1 - t` can be far below the float spacing at `t`.
fn t_of_radius(rho: f64, q: f64) -> (f64, f64) {
    if rho <= 0.0 {
        (0.0, 1.0)
    } else if rho <= 1.0 {
        let rq = rho.powf(q);
        (rq / (1.0 + rq), 1.0 / (1.0 + rq))
    } else {
        let rmq = rho.powf(-q);
        (1.0 / (1.0 + rmq), rmq / (1.0 + rmq))
    }
}

/// `int_0^1 t^a (1-t)^b dt = B(a+1, b+1)` with possibly singular
/// (but integrable) endpoints.
fn beta_integral(a: f64, b: f64) -> Result<f64> {
    if a <= -1.0 || b <= -1.0 {
        return Err(Error::Invalid(format!(
            "divergent Beta-type integral with exponents {a}, {b}"
        )));
    }
    let (value, _) = quad1d::integrate_de(
        |t, d| {
            let (tm, om) = if d >= 0.0 { (d, 1.0 - t) } else { (t, -d) };
            tm.powf(a) * om.powf(b)
        },
        0.0,
        1.0,
        PROFILE_TOL,
    )?;
    Ok(value)
}

/// `int_{t0}^1 t^a (1-t)^b dt`, singular only at the right endpoint.
///
/// `one_minus_t0` must be `1 - t0` to full *relative* accuracy.  The
/// integral is computed in the variable `y = 1 - t` over `[0, 1 - t0]`: the
/// singular endpoint is then exactly zero, so the quadrature nodes carry
/// exact distances.  (Parametrized by `t` directly, rounding the endpoint
/// `t0` onto the float grid shifts the singular mass by up to
/// `ulp(1) / (1 - t0)` in relative terms, which for concentrated tails is
/// many orders of magnitude above the target accuracy.)
fn beta_integral_from(t0: f64, one_minus_t0: f64, a: f64, b: f64) -> Result<f64> {
    if b <= -1.0 {
        return Err(Error::Invalid(format!(
            "divergent Beta-type tail with exponent {b}"
        )));
    }
    if t0 >= 1.0 || one_minus_t0 <= 0.0 {
        return Ok(0.0);
    }
    let om0 = one_minus_t0;
    let (value, _) = quad1d::integrate_de(
        |y, d| {
            let yy = if d > 0.0 { d } else { (om0 + d).max(0.0) };
            let t = if d < 0.0 { t0 - d } else { 1.0 - y };
            t.powf(a) * yy.powf(b)
        },
        0.0,
        om0,
        PROFILE_TOL,
    )?;
    Ok(value)
}
