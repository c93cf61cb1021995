//! Nonlinear conjugate gradient on the restricted objective
//! `phi(alpha) = f(x + P alpha)`.
//!
//! The minimizer is Polak-Ribiere+ CG with a strong-Wolfe line search
//! (bracketing followed by zoom with safeguarded cubic interpolation). Every
//! call of [`SubspaceProblem::eval`] costs one unit of the evaluation budget,
//! including line-search probes. The best point ever evaluated is returned,
//! and `alpha = 0` is returned when nothing improved on `phi(0)`, so the
//! result never increases `phi`.

use thiserror::Error;

use crate::linalg::{axpy, dot, norm};
use crate::objective::{Batch, Objective, ObjectiveError};
use crate::subspace::SubspaceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgError {
    #[error("evaluation budget must be at least 2, got {0}")]
    Budget(usize),
    #[error("Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={c1}, c2={c2}")]
    Wolfe { c1: f64, c2: f64 },
    #[error("gradient tolerance must be non-negative, got {0}")]
    GradTol(f64),
    #[error("subspace has no columns")]
    EmptySubspace,
    #[error("base point has length {base}, subspace {subspace}, objective {objective}")]
    Dimension { base: usize, subspace: usize, objective: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Hard cap on combined loss+gradient evaluations.
    pub max_evals: usize,
    pub grad_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_evals: 20,
            grad_tol: 1e-10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.1,
        }
    }
}

impl CgConfig {
    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn validate(&self) -> Result<(), CgError> {
        if self.max_evals < 2 {
            return Err(CgError::Budget(self.max_evals));
        }
        let (c1, c2) = (self.wolfe_c1, self.wolfe_c2);
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(CgError::Wolfe { c1, c2 });
        }
        if !(self.grad_tol >= 0.0) {
            return Err(CgError::GradTol(self.grad_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Improved,
    NoImprovement,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub alpha: Vec<f64>,
    pub phi0: f64,
    pub phi_star: f64,
    pub evals_used: usize,
    /// Completed CG iterations (accepted line searches).
    pub iterations: usize,
    pub status: CgStatus,
    /// Accepted iterates, starting with `alpha = 0`.
    pub iterates: Vec<Vec<f64>>,
    /// `|grad phi|` at the last accepted iterate.
    pub final_grad_norm: f64,
}

/// Base point, subspace and a fixed batch defining `phi`.
pub struct SubspaceProblem<'a, O: Objective + ?Sized> {
    base: &'a [f64],
    p: &'a SubspaceMatrix,
    objective: &'a O,
    batch: &'a Batch,
}

impl<'a, O: Objective + ?Sized> SubspaceProblem<'a, O> {
    pub fn new(base: &'a [f64], p: &'a SubspaceMatrix, objective: &'a O, batch: &'a Batch) -> Result<Self, CgError> {
        if p.is_empty() {
            return Err(CgError::EmptySubspace);
        }
        if base.len() != p.dim() || base.len() != objective.dim() {
            return Err(CgError::Dimension {
                base: base.len(),
                subspace: p.dim(),
                objective: objective.dim(),
            });
        }
        Ok(Self {
            base,
            p,
            objective,
            batch,
        })
    }

    /// Number of subspace coefficients `d`.
    pub fn ncols(&self) -> usize {
        self.p.ncols()
    }

    pub fn base(&self) -> &[f64] {
        self.base
    }

    pub fn matrix(&self) -> &SubspaceMatrix {
        self.p
    }

    /// `(phi(alpha), P^T g(x + P alpha))`
    pub fn eval(&self, alpha: &[f64]) -> Result<(f64, Vec<f64>), ObjectiveError> {
        let point = self.p.offset_from(self.base, alpha);
        let (value, g) = self.objective.loss_and_grad(&point, self.batch)?;
        Ok((value, self.p.project(&g)))
    }

    /// `x + P alpha*`, or exactly `x` when nothing improved.
    pub fn apply(&self, result: &CgResult) -> Vec<f64> {
        if result.status == CgStatus::NoImprovement || result.alpha.iter().all(|&a| a == 0.0) {
            return self.base.to_vec();
        }
        self.p.offset_from(self.base, &result.alpha)
    }
}

/// Why the evaluator refused to produce a value.
#[derive(Debug)]
enum Halt {
    Budget,
    NonFinite,
    Objective(ObjectiveError),
}

/// Budget accounting and best-point tracking around `phi`.
struct Evaluator<'p, 'a, O: Objective + ?Sized> {
    problem: &'p SubspaceProblem<'a, O>,
    used: usize,
    max: usize,
    best_value: f64,
    best_alpha: Vec<f64>,
}

impl<O: Objective + ?Sized> Evaluator<'_, '_, O> {
    fn eval(&mut self, alpha: &[f64]) -> Result<(f64, Vec<f64>), Halt> {
        if self.used >= self.max {
            return Err(Halt::Budget);
        }
        self.used += 1;
        let (value, grad) = self.problem.eval(alpha).map_err(Halt::Objective)?;
        if !value.is_finite() || !crate::linalg::all_finite(&grad) {
            return Err(Halt::NonFinite);
        }
        if value < self.best_value {
            self.best_value = value;
            self.best_alpha.clear();
            self.best_alpha.extend_from_slice(alpha);
        }
        Ok((value, grad))
    }
}

#[derive(Debug, Clone)]
struct LinePoint {
    t: f64,
    f: f64,
    /// directional derivative along the search direction
    d: f64,
    g: Vec<f64>,
}

/// Minimizer of the cubic interpolating `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to `bounds`; bisection when the cubic has no real minimizer.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = bounds;
    if x1 == x2 {
        return 0.5 * (lo + hi);
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let t = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if t.is_finite() {
            return t.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

struct LineSearch<'s> {
    alpha: &'s [f64],
    dir: &'s [f64],
    f0: f64,
    d0: f64,
    c1: f64,
    c2: f64,
}

impl LineSearch<'_> {
    fn probe<O: Objective + ?Sized>(&self, ev: &mut Evaluator<'_, '_, O>, t: f64) -> Result<LinePoint, Halt> {
        let mut trial = self.alpha.to_vec();
        axpy(t, self.dir, &mut trial);
        let (f, g) = ev.eval(&trial)?;
        let d = dot(&g, self.dir);
        Ok(LinePoint { t, f, d, g })
    }

    fn armijo(&self, p: &LinePoint) -> bool {
        p.f <= self.f0 + self.c1 * p.t * self.d0
    }

    fn curvature(&self, p: &LinePoint) -> bool {
        p.d.abs() <= -self.c2 * self.d0
    }

    /// Strong-Wolfe step, or `None` if no acceptable step was found before
    /// the budget ran out or the bracket collapsed.
    fn run<O: Objective + ?Sized>(&self, ev: &mut Evaluator<'_, '_, O>, t_init: f64) -> Result<Option<LinePoint>, Halt> {
        let mut prev = LinePoint {
            t: 0.0,
            f: self.f0,
            d: self.d0,
            g: Vec::new(),
        };
        let mut t = t_init;
        let mut first = true;
        loop {
            let cur = self.probe(ev, t)?;
            if !self.armijo(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(ev, prev, cur);
            }
            if self.curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.d >= 0.0 {
                return self.zoom(ev, cur, prev);
            }
            let next = cubic_interpolate(
                prev.t,
                prev.f,
                prev.d,
                cur.t,
                cur.f,
                cur.d,
                (cur.t + 0.01 * (cur.t - prev.t), 10.0 * cur.t),
            );
            prev = cur;
            t = next;
            first = false;
        }
    }

    fn zoom<O: Objective + ?Sized>(
        &self,
        ev: &mut Evaluator<'_, '_, O>,
        mut lo: LinePoint,
        mut hi: LinePoint,
    ) -> Result<Option<LinePoint>, Halt> {
        let mut insufficient = false;
        let dir_norm = norm(self.dir);
        loop {
            let (a, b) = (lo.t.min(hi.t), lo.t.max(hi.t));
            if (b - a) * dir_norm <= f64::EPSILON * (1.0 + a.abs() * dir_norm) {
                break;
            }
            let mut t = cubic_interpolate(lo.t, lo.f, lo.d, hi.t, hi.f, hi.d, (a, b));
            let margin = 0.1 * (b - a);
            if (b - t).min(t - a) < margin {
                if insufficient || t >= b || t <= a {
                    t = if (t - b).abs() < (t - a).abs() { b - margin } else { a + margin };
                    insufficient = false;
                } else {
                    insufficient = true;
                }
            } else {
                insufficient = false;
            }

            let cur = match self.probe(ev, t) {
                Ok(p) => p,
                Err(Halt::Budget) => break,
                Err(e) => return Err(e),
            };
            if !self.armijo(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Ok(Some(cur));
                }
                if cur.d * (hi.t - lo.t) >= 0.0 {
                    hi = std::mem::replace(&mut lo, cur);
                } else {
                    lo = cur;
                }
            }
        }
        // lo always satisfies sufficient decrease; use it if it moved at all
        Ok((lo.t > 0.0 && !lo.g.is_empty()).then_some(lo))
    }
}

/// Minimize `phi` from `alpha = 0` with Polak-Ribiere+ CG.
pub fn cg_minimize<O: Objective + ?Sized>(problem: &SubspaceProblem<'_, O>, cfg: &CgConfig) -> Result<CgResult, CgError> {
    cfg.validate()?;
    let d = problem.ncols();
    let mut ev = Evaluator {
        problem,
        used: 0,
        max: cfg.max_evals,
        best_value: f64::INFINITY,
        best_alpha: vec![0.0; d],
    };

    let mut alpha = vec![0.0; d];
    let mut iterates = vec![alpha.clone()];
    let (phi0, mut g) = match ev.eval(&alpha) {
        Ok(v) => v,
        Err(Halt::Objective(e)) => return Err(e.into()),
        Err(_) => {
            return Ok(CgResult {
                alpha,
                phi0: f64::NAN,
                phi_star: f64::NAN,
                evals_used: ev.used,
                iterations: 0,
                status: CgStatus::NoImprovement,
                iterates,
                final_grad_norm: f64::NAN,
            })
        }
    };

    let mut gnorm = norm(&g);
    let mut converged = gnorm <= cfg.grad_tol;
    let mut iterations = 0;
    let mut failed = false;
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut t_init = 1.0 / gnorm;
    let mut f = phi0;

    while !converged {
        let d0 = dot(&g, &dir);
        let search = LineSearch {
            alpha: &alpha,
            dir: &dir,
            f0: f,
            d0,
            c1: cfg.wolfe_c1,
            c2: cfg.wolfe_c2,
        };
        let step = match search.run(&mut ev, t_init) {
            Ok(Some(step)) => step,
            Ok(None) | Err(Halt::Budget) => break,
            Err(Halt::NonFinite) => {
                failed = true;
                break;
            }
            Err(Halt::Objective(e)) => return Err(e.into()),
        };

        axpy(step.t, &dir, &mut alpha);
        iterates.push(alpha.clone());
        iterations += 1;
        f = step.f;
        let g_new = step.g;
        gnorm = norm(&g_new);
        if gnorm <= cfg.grad_tol {
            converged = true;
            g = g_new;
            break;
        }

        let g_old_sq = dot(&g, &g);
        let beta = (dot(&g_new, &g_new) - dot(&g_new, &g)) / g_old_sq;
        let beta = if beta.is_finite() { beta.max(0.0) } else { 0.0 };
        let mut next: Vec<f64> = g_new.iter().zip(&dir).map(|(gn, s)| -gn + beta * s).collect();
        let mut slope = dot(&g_new, &next);
        if beta == 0.0 || slope >= 0.0 {
            next = g_new.iter().map(|v| -v).collect();
            slope = -dot(&g_new, &g_new);
        }
        // reuse the previous step's first-order change as the initial guess
        let guess = step.t * d0 / slope;
        t_init = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 / gnorm };
        dir = next;
        g = g_new;
    }
    let _ = g;

    let (alpha, phi_star, status) = if failed || !(ev.best_value < phi0) {
        let status = if converged && !failed { CgStatus::Converged } else { CgStatus::NoImprovement };
        (vec![0.0; d], phi0, status)
    } else if converged {
        (ev.best_alpha.clone(), ev.best_value, CgStatus::Converged)
    } else {
        (ev.best_alpha.clone(), ev.best_value, CgStatus::Improved)
    };

    Ok(CgResult {
        alpha,
        phi0,
        phi_star,
        evals_used: ev.used,
        iterations,
        status,
        iterates,
        final_grad_norm: gnorm,
    })
}
