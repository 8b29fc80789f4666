//! Minimization of the discrete Rayleigh quotient over the P1 space: the
//! discrete Sobolev constant `S_h` and its minimizer.
//!
//! The quotient `R(u) = ||Du||_p / ||u||_{p*}` is minimized by nonlinear
//! conjugate gradients with Armijo backtracking, keeping every iterate on
//! the constraint manifold `||u||_{p*} = 1`.  For `p < 2` the gradient of
//! the energy degenerates where `Du` vanishes, so the numerator is
//! regularized to `(|Du|^2 + eps^2)^{p/2}` and `eps` is driven to zero
//! along a continuation schedule; the reported constant is always the
//! unregularized quotient of the best iterate seen.

use crate::error::{Error, Result};
use crate::extremals::{DistanceKind, Extremal, RadialProfile};
use crate::fespace::{interpolate_shifted, FeFunction};
use crate::geom::{self, KahanSum};
use crate::mesh::Mesh;
use crate::quadrature::{self, QuadratureRule};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Total accepted-step budget across all continuation stages.
    pub max_iters: usize,
    /// Stage ends when the gradient norm falls below this fraction of its
    /// value at the initial iterate.
    pub grad_tol: f64,
    /// Stage ends when accepted steps keep improving the quotient by less
    /// than this relative amount.
    pub step_tol: f64,
    /// Regularization sizes for `p < 2`, relative to the mean gradient
    /// magnitude of the initial iterate; a final unregularized stage always
    /// runs.  Ignored for `p >= 2`.
    pub epsilon_schedule: Vec<f64>,
    /// Quadrature order for the denominator; `None` uses the mesh default.
    pub quad_order: Option<usize>,
    /// Seed for the single randomized-restart fallback.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 6000,
            grad_tol: 1e-5,
            step_tol: 1e-12,
            epsilon_schedule: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            quad_order: None,
            seed: 0x5EED,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::Invalid("solver tolerances must be positive".into()));
        }
        if self
            .epsilon_schedule
            .windows(2)
            .any(|w| w[1] >= w[0] || w[1] <= 0.0)
            || self.epsilon_schedule.first().is_some_and(|&e| e <= 0.0)
        {
            return Err(Error::Invalid(
                "epsilon schedule must be strictly decreasing and positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SolveResult<'m> {
    /// The discrete constant: unregularized quotient of the best iterate.
    pub s_h: f64,
    /// The minimizer, normalized to `||u||_{p*} = 1`.
    pub u_h: FeFunction<'m>,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the seeded perturbation fallback was taken after a stall.
    pub used_restart: bool,
    /// Regularized quotient at each recorded improvement; nonincreasing.
    pub history: Vec<f64>,
}

/// `(Sum_T |T| (|Du|^2 + eps^2)^{p/2})^{1/p} / ||u||_{p*}`; at `eps = 0`
/// this is the plain Rayleigh quotient, evaluated with a fixed rule.
pub fn regularized_quotient(
    u: &FeFunction,
    p: f64,
    epsilon: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    let ps = conjugate(p, u.mesh().dim())?;
    let a = energy(u, p, epsilon);
    let m = mass(u, ps, rule);
    if m == 0.0 {
        return Err(Error::Invalid("quotient of the zero function".into()));
    }
    Ok(a.powf(1.0 / p) / m.powf(1.0 / ps))
}

/// Partial derivatives of the regularized quotient with respect to the
/// interior nodal values (boundary entries are zero).
pub fn quotient_gradient(
    u: &FeFunction,
    p: f64,
    epsilon: f64,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let ps = conjugate(p, u.mesh().dim())?;
    let mesh = u.mesh();
    let (a, da) = energy_with_gradient(u, p, epsilon);
    let (m, dm) = mass_with_gradient(u, ps, rule);
    if a == 0.0 || m == 0.0 {
        return Err(Error::Invalid(
            "quotient gradient at a degenerate point".into(),
        ));
    }
    let r = a.powf(1.0 / p) / m.powf(1.0 / ps);
    let mut g = vec![0.0; mesh.n_vertices()];
    for i in 0..mesh.n_vertices() {
        if !mesh.is_boundary(i) {
            g[i] = r * (da[i] / (p * a) - dm[i] / (ps * m));
        }
    }
    Ok(g)
}

/// Minimizes the Rayleigh quotient over the boundary-vanishing P1 space,
/// starting from the interpolated extremal at the balancing concentration.
pub fn solve_sh<'m>(
    mesh: &'m Mesh,
    profile: &RadialProfile,
    opts: &SolverOptions,
) -> Result<SolveResult<'m>> {
    opts.validate()?;
    let exps = profile.exponents();
    if mesh.dim() != exps.dim() {
        return Err(Error::InvalidDim(mesh.dim()));
    }
    let (p, ps) = (exps.p(), exps.p_star());
    let rule = match opts.quad_order {
        Some(order) => QuadratureRule::simplex(mesh.dim(), order)?,
        None => QuadratureRule::default_for(mesh.dim())?,
    };

    let lambda = exps.optimal_lambda(mesh.h(), DistanceKind::QuasiNorm);
    let witness = Extremal::new(profile, 1.0, lambda, geom::ORIGIN)?;
    let (u0, _) = interpolate_shifted(mesh, |x| witness.value(x))?;
    if u0.max_abs() == 0.0 {
        return Err(Error::Invalid(
            "the interpolated extremal vanishes on this mesh".into(),
        ));
    }

    // Continuation schedule in absolute units of the initial gradient scale.
    let gscale = mean_gradient_magnitude(&u0);
    let mut stages: Vec<f64> = if p < 2.0 {
        opts.epsilon_schedule.iter().map(|f| f * gscale).collect()
    } else {
        Vec::new()
    };
    stages.push(0.0);

    let mut values = u0.values().to_vec();
    normalize(mesh, &mut values, ps, &rule)?;

    let mut best_values = values.clone();
    let mut best_true = true_quotient(mesh, &best_values, p, ps, &rule);
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut used_restart = false;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut converged = false;

    'stages: for (si, &eps) in stages.iter().enumerate() {
        let final_stage = si + 1 == stages.len();
        let u = FeFunction::new(mesh, values.clone())?;
        let (mut a, mut da) = energy_with_gradient(&u, p, eps);
        drop(u);
        let mut r = a.powf(1.0 / p); // mass is 1 on the manifold
        let mut g = assemble_gradient(mesh, r, p, ps, a, &da, &dmass(mesh, &values, ps, &rule));
        let g0_norm = norm2(&g).max(1e-300);
        if history.last().is_none_or(|&last| r < last) {
            history.push(r);
        }

        let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut g_prev = g.clone();
        let mut t_init = 1.0;
        let mut stalls = 0usize;
        let mut plateau = 0usize;

        loop {
            if iterations >= opts.max_iters {
                break 'stages;
            }
            // Descent check; fall back to steepest descent if conjugacy
            // produced an ascent direction.
            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                dir = g.iter().map(|x| -x).collect();
                slope = dot(&g, &dir);
                if slope == 0.0 {
                    converged = final_stage;
                    break;
                }
            }

            // Armijo backtracking on the normalized quotient.
            let mut t = t_init;
            let mut accepted = None;
            for _ in 0..45 {
                let mut trial: Vec<f64> = values
                    .iter()
                    .zip(&dir)
                    .map(|(v, d)| v + t * d)
                    .collect();
                if normalize(mesh, &mut trial, ps, &rule).is_ok() {
                    let ut = FeFunction::new(mesh, trial.clone())?;
                    let rt = energy(&ut, p, eps).powf(1.0 / p);
                    if rt <= r + 1e-4 * t * slope {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
                t *= 0.5;
            }

            match accepted {
                Some((trial, rt)) => {
                    let rel_drop = (r - rt) / r.abs().max(1e-300);
                    values = trial;
                    iterations += 1;
                    stalls = 0;
                    t_init = (2.0 * t).clamp(1e-12, 1e3);

                    let u = FeFunction::new(mesh, values.clone())?;
                    (a, da) = energy_with_gradient(&u, p, eps);
                    drop(u);
                    r = rt;
                    g_prev = std::mem::replace(
                        &mut g,
                        assemble_gradient(
                            mesh,
                            r,
                            p,
                            ps,
                            a,
                            &da,
                            &dmass(mesh, &values, ps, &rule),
                        ),
                    );
                    // Polak-Ribiere with restart to steepest descent.
                    let denom = dot(&g_prev, &g_prev).max(1e-300);
                    let beta = ((dot(&g, &g) - dot(&g, &g_prev)) / denom).max(0.0);
                    for (d, (gn, _)) in dir.iter_mut().zip(g.iter().zip(&g_prev)) {
                        *d = -gn + beta * *d;
                    }
                    if history.last().is_none_or(|&last| r < last) {
                        history.push(r);
                    }

                    let truth = true_quotient(mesh, &values, p, ps, &rule);
                    if truth < best_true {
                        best_true = truth;
                        best_values.clone_from(&values);
                    }

                    plateau = if rel_drop < opts.step_tol {
                        plateau + 1
                    } else {
                        0
                    };
                    if (norm2(&g) <= opts.grad_tol * g0_norm && rel_drop < opts.step_tol)
                        || plateau >= 5
                    {
                        converged = final_stage;
                        break;
                    }
                }
                None => {
                    stalls += 1;
                    if stalls >= 10 && !used_restart {
                        // Single seeded perturbation from the best point.
                        used_restart = true;
                        values.clone_from(&best_values);
                        let amp = 1e-3 * max_abs(&values).max(1e-12);
                        for (i, v) in values.iter_mut().enumerate() {
                            if !mesh.is_boundary(i) {
                                *v += amp * rng.random_range(-1.0..1.0);
                            }
                        }
                        normalize(mesh, &mut values, ps, &rule)?;
                        let u = FeFunction::new(mesh, values.clone())?;
                        (a, da) = energy_with_gradient(&u, p, eps);
                        drop(u);
                        r = a.powf(1.0 / p);
                        g = assemble_gradient(
                            mesh,
                            r,
                            p,
                            ps,
                            a,
                            &da,
                            &dmass(mesh, &values, ps, &rule),
                        );
                        dir = g.iter().map(|x| -x).collect();
                        g_prev.clone_from(&g);
                        t_init = 1.0;
                        stalls = 0;
                    } else if stalls >= 10 {
                        converged = final_stage;
                        break;
                    } else {
                        // Restart conjugacy before trying again.
                        dir = g.iter().map(|x| -x).collect();
                        t_init = (t_init * 0.25).max(1e-12);
                    }
                }
            }
        }
    }

    let mut u_h = FeFunction::new(mesh, best_values)?;
    u_h.enforce_zero_boundary();
    Ok(SolveResult {
        s_h: best_true,
        u_h,
        iterations,
        converged,
        used_restart,
        history,
    })
}

/// `Sum_T |T| (|Du|^2 + eps^2)^{p/2}`.
fn energy(u: &FeFunction, p: f64, epsilon: f64) -> f64 {
    let mesh = u.mesh();
    let mut sum = KahanSum::new();
    for e in 0..mesh.n_elements() {
        let g2 = geom::norm_sq(&u.element_gradient(e)) + epsilon * epsilon;
        sum.add(mesh.volume(e) * g2.powf(0.5 * p));
    }
    sum.value()
}

/// Energy together with its nodal partial derivatives.
fn energy_with_gradient(u: &FeFunction, p: f64, epsilon: f64) -> (f64, Vec<f64>) {
    let mesh = u.mesh();
    let mut sum = KahanSum::new();
    let mut da = vec![0.0; mesh.n_vertices()];
    for e in 0..mesh.n_elements() {
        let grad = u.element_gradient(e);
        let g2 = geom::norm_sq(&grad) + epsilon * epsilon;
        let vol = mesh.volume(e);
        sum.add(vol * g2.powf(0.5 * p));
        if g2 == 0.0 {
            continue; // the p > 1 limit of |Du|^{p-1} at a flat element
        }
        let w = p * g2.powf(0.5 * p - 1.0);
        let basis = mesh.basis_gradients(e);
        for (k, &i) in mesh.element(e).iter().enumerate() {
            da[i] += vol * w * geom::dot(&grad, &basis[k]);
        }
    }
    (sum.value(), da)
}

/// `int_{B_h} |u|^{p*}` with the given rule.
fn mass(u: &FeFunction, ps: f64, rule: &QuadratureRule) -> f64 {
    quadrature::integrate_mesh(u.mesh(), rule, |e, _, b| {
        u.value_at_bary(e, b).abs().powf(ps)
    })
}

fn mass_with_gradient(u: &FeFunction, ps: f64, rule: &QuadratureRule) -> (f64, Vec<f64>) {
    let mesh = u.mesh();
    let nv = mesh.dim() + 1;
    let fact = quadrature::factorial(mesh.dim());
    let mut sum = KahanSum::new();
    let mut dm = vec![0.0; mesh.n_vertices()];
    for e in 0..mesh.n_elements() {
        let jac = mesh.volume(e) * fact;
        let elem = mesh.element(e);
        for (bary, &w) in rule.points().iter().zip(rule.weights()) {
            let val = u.value_at_bary(e, bary);
            sum.add(jac * w * val.abs().powf(ps));
            if val != 0.0 {
                let dens = jac * w * ps * val.signum() * val.abs().powf(ps - 1.0);
                for (k, &i) in elem.iter().enumerate().take(nv) {
                    dm[i] += dens * bary[k];
                }
            }
        }
    }
    (sum.value(), dm)
}

fn dmass(mesh: &Mesh, values: &[f64], ps: f64, rule: &QuadratureRule) -> Vec<f64> {
    let u = FeFunction::new(mesh, values.to_vec()).expect("validated values");
    mass_with_gradient(&u, ps, rule).1
}

fn assemble_gradient(
    mesh: &Mesh,
    r: f64,
    p: f64,
    ps: f64,
    a: f64,
    da: &[f64],
    dm: &[f64],
) -> Vec<f64> {
    // On the manifold the mass is 1, so dR_i = R (dA_i/(pA) - dM_i/ps).
    let mut g = vec![0.0; mesh.n_vertices()];
    for i in 0..mesh.n_vertices() {
        if !mesh.is_boundary(i) {
            g[i] = r * (da[i] / (p * a) - dm[i] / ps);
        }
    }
    g
}

/// Rescales to `||u||_{p*} = 1`.
fn normalize(mesh: &Mesh, values: &mut [f64], ps: f64, rule: &QuadratureRule) -> Result<()> {
    let u = FeFunction::new(mesh, values.to_vec())?;
    let m = mass(&u, ps, rule);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::NonFinite(format!("critical mass {m}")));
    }
    let scale = m.powf(-1.0 / ps);
    for v in values.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

fn true_quotient(mesh: &Mesh, values: &[f64], p: f64, ps: f64, rule: &QuadratureRule) -> f64 {
    let u = FeFunction::new(mesh, values.to_vec()).expect("validated values");
    let a = energy(&u, p, 0.0);
    let m = mass(&u, ps, rule);
    a.powf(1.0 / p) / m.powf(1.0 / ps)
}

fn mean_gradient_magnitude(u: &FeFunction) -> f64 {
    let mesh = u.mesh();
    let total: f64 = (0..mesh.n_elements())
        .map(|e| geom::norm(&u.element_gradient(e)))
        .sum();
    total / mesh.n_elements() as f64
}

fn conjugate(p: f64, dim: usize) -> Result<f64> {
    let n = dim as f64;
    if !(p > 1.0 && p < n) {
        return Err(Error::InvalidExponent { p, dim });
    }
    Ok(n * p / (n - p))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
