//! Log-barrier interior-point method for small dense LMI systems.
//!
//! Feasibility is decided through the auxiliary problem
//!
//! ```text
//! minimize t  subject to  σ_b·F_b(x) ⪯ t·I  for every block b,  ‖x‖ < R
//! ```
//!
//! where `σ_b` maps each block onto the "≺ 0" convention. The system is
//! strictly feasible iff the optimal `t` is below `-strictness`. Linear
//! objectives use a two-phase scheme: the auxiliary problem stops at the first
//! iterate with `t < 0`, then the barrier path of the objective is followed.
//! Newton systems are assembled densely through `svec` inner products.

use serde::{Deserialize, Serialize};

use super::{block_margins, Assignment, LinearObjective, LmiSystem, SdpSolution, SdpStatus};
use crate::matlib::{spd_inverse_logdet, spd_solve, svec_raw};
use crate::{Matrix, Result, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// A block counts as strictly definite when its signed margin is below
    /// `-strictness`.
    pub strictness: f64,
    /// Stop once the duality-gap proxy `ν/τ` drops below
    /// `gap_tol · max(1, |objective|)`.
    pub gap_tol: f64,
    /// Newton step budget per phase.
    pub max_newton_steps: usize,
    /// Feasibility radius on the flat unknown vector.
    pub radius: f64,
    /// Barrier parameter growth factor between centering rounds.
    pub barrier_growth: f64,
    /// For [`solve_min`]: required slack on every block, i.e. blocks must
    /// satisfy `σ_b·F_b ⪯ -objective_margin·I`.
    pub objective_margin: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            strictness: 1e-7,
            gap_tol: 1e-8,
            max_newton_steps: 500,
            radius: 1e6,
            barrier_growth: 10.0,
            objective_margin: 0.0,
        }
    }
}

/// Block `base + Σ z_k·coef_k` that must stay positive definite.
struct SlackBlock {
    base: Matrix,
    coefs: Vec<(usize, Matrix, Vector)>,
}

impl SlackBlock {
    fn at(&self, z: &[f64]) -> Matrix {
        let mut s = self.base.clone();
        for (k, a, _) in &self.coefs {
            if z[*k] != 0.0 {
                s += a * z[*k];
            }
        }
        s
    }
}

/// `f(z) = τ·cᵀz − Σ log det S_b(z) − log(R² − ‖z[..nx]‖²)`.
struct Barrier {
    blocks: Vec<SlackBlock>,
    nz: usize,
    nx: usize,
    radius2: f64,
    c: Vector,
}

#[derive(Debug, PartialEq)]
enum Centering {
    Centered,
    StepLimit,
    Stalled,
    EarlyStop,
}

impl Barrier {
    /// Builds slack blocks `shift·I − σ_b·F_b(x)` and, with `with_t`, an
    /// extra trailing unknown `t` entering as `+t·I`.
    fn new(system: &LmiSystem, shift: f64, with_t: bool, radius: f64, c: Vector) -> Self {
        let nx = system.unknowns();
        let nz = nx + with_t as usize;
        let blocks = system
            .blocks()
            .iter()
            .map(|b| {
                let sign = b.sense.sign();
                let dim = b.expr.dim();
                let base = Matrix::identity(dim, dim) * shift - b.expr.constant().as_matrix() * sign;
                let mut coefs: Vec<(usize, Matrix, Vector)> = b
                    .expr
                    .terms()
                    .map(|(k, m)| {
                        let a = m * -sign;
                        let sv = svec_raw(&a);
                        (k, a, sv)
                    })
                    .collect();
                if with_t {
                    let a = Matrix::identity(dim, dim);
                    let sv = svec_raw(&a);
                    coefs.push((nx, a, sv));
                }
                SlackBlock { base, coefs }
            })
            .collect();
        Barrier {
            blocks,
            nz,
            nx,
            radius2: radius * radius,
            c,
        }
    }

    fn nu(&self) -> f64 {
        self.blocks.iter().map(|b| b.base.nrows()).sum::<usize>() as f64 + 1.0
    }

    fn radius_slack(&self, z: &[f64]) -> f64 {
        self.radius2 - z[..self.nx].iter().map(|v| v * v).sum::<f64>()
    }

    fn value(&self, z: &[f64], tau: f64) -> Option<f64> {
        let r = self.radius_slack(z);
        if !(r > 0.0) {
            return None;
        }
        let mut f = tau * self.c.dot(&Vector::from_column_slice(z)) - r.ln();
        for b in &self.blocks {
            let (_, logdet) = spd_inverse_logdet(&b.at(z))?;
            f -= logdet;
        }
        Some(f)
    }

    fn strictly_inside(&self, z: &[f64]) -> bool {
        self.radius_slack(z) > 0.0 && self.blocks.iter().all(|b| spd_inverse_logdet(&b.at(z)).is_some())
    }

    /// Gradient and Hessian of the barrier part.
    fn derivatives(&self, z: &[f64]) -> Option<(Vector, Matrix)> {
        let mut g = Vector::zeros(self.nz);
        let mut h = Matrix::zeros(self.nz, self.nz);
        for b in &self.blocks {
            let (inv, _) = spd_inverse_logdet(&b.at(z))?;
            let inv_svec = svec_raw(&inv);
            for (i, (k, a, sv)) in b.coefs.iter().enumerate() {
                g[*k] -= inv_svec.dot(sv);
                let w = svec_raw(&(&inv * a * &inv));
                for (l, _, sv_l) in &b.coefs[i..] {
                    let v = w.dot(sv_l);
                    h[(*k, *l)] += v;
                    if k != l {
                        h[(*l, *k)] += v;
                    }
                }
            }
        }
        let r = self.radius_slack(z);
        if !(r > 0.0) {
            return None;
        }
        for k in 0..self.nx {
            g[k] += 2.0 * z[k] / r;
            h[(k, k)] += 2.0 / r;
            for l in 0..self.nx {
                h[(k, l)] += 4.0 * z[k] * z[l] / (r * r);
            }
        }
        Some((g, h))
    }

    /// Damped Newton centering for `τ·cᵀz + φ(z)`.
    fn center(
        &self,
        z: &mut Vector,
        tau: f64,
        steps: &mut usize,
        max_steps: usize,
        early_stop: &dyn Fn(&Vector) -> bool,
    ) -> Centering {
        loop {
            if *steps >= max_steps {
                return Centering::StepLimit;
            }
            let Some((gphi, hess)) = self.derivatives(z.as_slice()) else {
                return Centering::Stalled;
            };
            let g = &self.c * tau + gphi;
            let Some(dz) = newton_direction(&hess, &g) else {
                return Centering::Stalled;
            };
            let slope = g.dot(&dz);
            let lambda2 = -slope;
            if !(lambda2 > 1e-10) {
                return Centering::Centered;
            }
            let lambda = lambda2.sqrt();

            let mut accepted = false;
            let full = &*z + &dz;
            if let (Some(f0), Some(f1)) = (self.value(z.as_slice(), tau), self.value(full.as_slice(), tau)) {
                if f1 <= f0 + 0.25 * slope {
                    *z = full;
                    accepted = true;
                }
            }
            if !accepted {
                // 1/(1+λ) keeps a self-concordant barrier inside its domain;
                // halving only guards against roundoff at the boundary.
                let mut alpha = 1.0 / (1.0 + lambda);
                loop {
                    let trial = &*z + &dz * alpha;
                    if self.strictly_inside(trial.as_slice()) {
                        *z = trial;
                        break;
                    }
                    alpha *= 0.5;
                    if alpha < 1e-16 {
                        return Centering::Stalled;
                    }
                }
            }
            *steps += 1;
            if early_stop(z) {
                return Centering::EarlyStop;
            }
        }
    }
}

fn newton_direction(hess: &Matrix, g: &Vector) -> Option<Vector> {
    let rhs = -g;
    if let Some(d) = spd_solve(hess, &rhs) {
        return Some(d);
    }
    let scale = hess.diagonal().amax().max(1e-300);
    let mut ridge = 1e-14 * scale;
    let n = hess.nrows();
    for _ in 0..12 {
        let h = hess + Matrix::identity(n, n) * ridge;
        if let Some(d) = spd_solve(&h, &rhs) {
            return Some(d);
        }
        ridge *= 100.0;
    }
    None
}

struct PhaseOutcome {
    z: Vector,
    steps: usize,
    converged: bool,
}

/// Follows the central path of `barrier`. `early_stop` is checked after every
/// Newton step; `certify_stop(z, gap)` after every centering round.
fn follow_path(
    barrier: &Barrier,
    z0: Vector,
    settings: &SolverSettings,
    early_stop: &dyn Fn(&Vector) -> bool,
    certify_stop: &dyn Fn(&Vector, f64) -> bool,
) -> PhaseOutcome {
    let nu = barrier.nu();
    let mut tau = initial_tau(barrier, &z0);
    let mut z = z0;
    let mut steps = 0;
    loop {
        let state = barrier.center(&mut z, tau, &mut steps, settings.max_newton_steps, early_stop);
        if state == Centering::EarlyStop {
            return PhaseOutcome { z, steps, converged: true };
        }
        let gap = nu / tau;
        let obj = barrier.c.dot(&z);
        let done = gap <= settings.gap_tol * obj.abs().max(1.0);
        match state {
            Centering::StepLimit => {
                return PhaseOutcome { z, steps, converged: false };
            }
            Centering::Stalled => {
                // Numerical floor reached; accept only if already close.
                let close = gap <= 1e3 * settings.gap_tol * obj.abs().max(1.0);
                return PhaseOutcome { z, steps, converged: close };
            }
            _ => {}
        }
        if certify_stop(&z, gap) {
            return PhaseOutcome { z, steps, converged: true };
        }
        if done {
            return PhaseOutcome { z, steps, converged: true };
        }
        tau *= settings.barrier_growth;
    }
}

/// The `τ ≥ 1e-8` that makes `z` closest to centered, i.e. minimizes the
/// Newton decrement `‖τc + ∇φ(z)‖` in the inverse-Hessian norm.
fn initial_tau(barrier: &Barrier, z: &Vector) -> f64 {
    let Some((g, h)) = barrier.derivatives(z.as_slice()) else {
        return 1.0;
    };
    let (Some(hc), Some(hg)) = (newton_direction(&h, &barrier.c), newton_direction(&h, &g)) else {
        return 1.0;
    };
    // newton_direction returns −H⁻¹v.
    let a = -barrier.c.dot(&hc);
    let b = -barrier.c.dot(&hg);
    let tau = -b / a;
    if tau.is_finite() && a > 0.0 {
        tau.max(1e-8)
    } else {
        1.0
    }
}

fn initial_t(system: &LmiSystem, shift: f64) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for b in system.blocks() {
        let g0 = b.expr.constant().scale(b.sense.sign());
        worst = worst.max(g0.max_eigenvalue()? + shift);
    }
    Ok(2.0 * worst.abs() + 1.0)
}

fn finish(
    system: &LmiSystem,
    x: &[f64],
    status: SdpStatus,
    steps: usize,
    objective: Option<f64>,
) -> Result<SdpSolution> {
    let assignment = Assignment::from_flat(system, x);
    let margins = block_margins(system, &assignment)?;
    let (worst_block, margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, m)| if m > acc.1 { (i, m) } else { acc });
    Ok(SdpSolution {
        assignment,
        margin,
        worst_block,
        status,
        iterations: steps,
        objective,
    })
}

/// Finds a point at which every block is strictly definite in its sense,
/// maximizing the worst margin within the feasibility radius.
pub fn solve_feasibility(system: &LmiSystem, settings: &SolverSettings) -> Result<SdpSolution> {
    system.validate()?;
    let nx = system.unknowns();
    let mut c = Vector::zeros(nx + 1);
    c[nx] = 1.0;
    let barrier = Barrier::new(system, 0.0, true, settings.radius, c);
    let mut z0 = Vector::zeros(nx + 1);
    z0[nx] = initial_t(system, 0.0)?;

    let strictness = settings.strictness;
    // t* ≥ t − ν/τ on the central path, so this certifies infeasibility.
    let certify = |z: &Vector, gap: f64| z[nx] - 1.01 * gap > -strictness;
    let out = follow_path(&barrier, z0, settings, &|_| false, &certify);
    let x = &out.z.as_slice()[..nx];

    let mut sol = finish(system, x, SdpStatus::Infeasible, out.steps, None)?;
    sol.status = if sol.margin < -strictness {
        SdpStatus::StrictlyFeasible
    } else if out.converged {
        SdpStatus::Infeasible
    } else {
        SdpStatus::MaxIterations
    };
    Ok(sol)
}

/// Minimizes a linear objective subject to every block holding with slack
/// `settings.objective_margin`.
///
/// When the optimum lands on the feasibility radius the problem is solved
/// again on a ball ten times smaller. An objective that moves between the
/// two is reported unbounded; otherwise the radius merely caps directions the
/// objective ignores and the first solution stands.
pub fn solve_min(
    objective: &LinearObjective,
    system: &LmiSystem,
    settings: &SolverSettings,
) -> Result<SdpSolution> {
    let (sol, on_ball) = solve_min_within(objective, system, settings)?;
    if !on_ball || sol.status != SdpStatus::Optimal {
        return Ok(sol);
    }
    let inner = SolverSettings {
        radius: settings.radius / 10.0,
        ..settings.clone()
    };
    let (small, _) = solve_min_within(objective, system, &inner)?;
    let obj = sol.objective.expect("objective set");
    let moved = match (small.status, small.objective) {
        (SdpStatus::Optimal, Some(o)) => (o - obj).abs() > 1e-6 * obj.abs().max(1.0),
        _ => true,
    };
    if moved {
        return Ok(SdpSolution {
            status: SdpStatus::Unbounded,
            ..sol
        });
    }
    Ok(sol)
}

fn solve_min_within(
    objective: &LinearObjective,
    system: &LmiSystem,
    settings: &SolverSettings,
) -> Result<(SdpSolution, bool)> {
    system.validate()?;
    let nx = system.unknowns();
    let c = objective.to_vector(nx)?;
    let shift = settings.objective_margin;

    // Phase I: reach an interior point of the shifted system.
    let mut c1 = Vector::zeros(nx + 1);
    c1[nx] = 1.0;
    let phase1 = Barrier::new(system, -shift, true, settings.radius, c1);
    let mut z0 = Vector::zeros(nx + 1);
    z0[nx] = initial_t(system, shift)?;
    let reached = |z: &Vector| z[nx] < 0.0;
    let certify = |z: &Vector, gap: f64| z[nx] - 1.01 * gap > 0.0;
    let p1 = follow_path(&phase1, z0, settings, &reached, &certify);
    let x1 = p1.z.rows(0, nx).into_owned();
    if p1.z[nx] >= 0.0 {
        let status = if p1.converged {
            SdpStatus::Infeasible
        } else {
            SdpStatus::MaxIterations
        };
        return Ok((finish(system, x1.as_slice(), status, p1.steps, None)?, false));
    }

    // Phase II: objective barrier path from the interior point.
    let phase2 = Barrier::new(system, -shift, false, settings.radius, c.clone());
    let p2 = follow_path(&phase2, x1, settings, &|_| false, &|_, _| false);
    let x = p2.z.as_slice();
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let on_ball = norm2 > 0.98 * settings.radius * settings.radius;
    let status = if p2.converged {
        SdpStatus::Optimal
    } else {
        SdpStatus::MaxIterations
    };
    let obj = c.dot(&p2.z);
    Ok((finish(system, x, status, p1.steps + p2.steps, Some(obj))?, on_ball))
}
