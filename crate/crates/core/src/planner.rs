//! Direct-method steering with piecewise-constant controls.
//!
//! Controls are optimized as impulses `v_k = h u_k` over `N` segments of
//! length `h = T/N`; each segment is integrated in normalized time together
//! with its variational equations, which gives the exact endpoint Jacobian.
//! Local refinement is a sequential quadratic programme on a smoothed cost.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{ControlAffineSystem, VectorField};
use crate::ode::{integrate as ode_integrate, integrate_limited, variational, Tolerance};
use crate::structure::{adapted_frame_at, AdaptedFrame, DEFAULT_RANK_TOL};

pub const DEFAULT_SEGMENTS: usize = 16;
pub const DEFAULT_BUDGET: usize = 20_000;
pub const DEFAULT_ACCEPT: f64 = 1e-4;

const SHOOT_TOL: Tolerance = Tolerance {
    rtol: 1e-12,
    atol: 1e-15,
};
const FEAS_TOL: f64 = 1e-11;
/// Integrator steps allowed per shooting segment; iterates needing more are
/// rejected like non-finite ones.
const SHOOT_STEPS: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostKind {
    J,
    I,
    /// `J` on the small system (drift ignored).
    SR,
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::J => "J",
            CostKind::I => "I",
            CostKind::SR => "SR",
        })
    }
}

impl FromStr for CostKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "J" | "j" => Ok(CostKind::J),
            "I" | "i" => Ok(CostKind::I),
            "SR" | "sr" => Ok(CostKind::SR),
            _ => Err(Error::Unknown {
                what: "cost kind",
                name: s.into(),
            }),
        }
    }
}

/// Piecewise-constant control on `N` uniform segments of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    pub values: Vec<Vec<f64>>,
    pub horizon: f64,
}

impl ControlSignal {
    pub fn new(values: Vec<Vec<f64>>, horizon: f64) -> Result<Self> {
        if values.is_empty() || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Precondition("control needs segments and a positive horizon".into()));
        }
        let m = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        Ok(ControlSignal { values, horizon })
    }

    pub fn zero(m: usize, segments: usize, horizon: f64) -> Self {
        ControlSignal {
            values: vec![vec![0.0; m]; segments.max(1)],
            horizon,
        }
    }

    pub fn m(&self) -> usize {
        self.values[0].len()
    }

    pub fn segments(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.segments() as f64
    }

    pub fn cost_j(&self) -> f64 {
        let h = self.step();
        self.values.iter().map(|u| h * norm(u)).sum()
    }

    pub fn cost_i(&self) -> f64 {
        let h = self.step();
        self.values.iter().map(|u| h * (1.0 + dot(u, u)).sqrt()).sum()
    }

    pub fn cost(&self, kind: CostKind) -> f64 {
        match kind {
            CostKind::I => self.cost_i(),
            _ => self.cost_j(),
        }
    }

    /// Time reversal: steers back along the same curve on driftless systems.
    pub fn reversed(&self) -> Self {
        ControlSignal {
            values: self.values.iter().rev().map(|u| u.iter().map(|x| -x).collect()).collect(),
            horizon: self.horizon,
        }
    }

    /// `self` followed by `other`, both re-timed to a common segment length.
    /// Exact for driftless dynamics, where only the impulses matter.
    pub fn concat(&self, other: &Self) -> Self {
        let h = self.step().min(other.step());
        let rescale = |c: &Self| -> Vec<Vec<f64>> {
            let f = c.step() / h;
            c.values.iter().map(|u| u.iter().map(|x| x * f).collect()).collect()
        };
        let mut values = rescale(self);
        values.extend(rescale(other));
        let horizon = h * values.len() as f64;
        ControlSignal { values, horizon }
    }

    /// Impulses per segment.
    fn impulses(&self) -> Vec<f64> {
        let h = self.step();
        self.values.iter().flatten().map(|u| u * h).collect()
    }

    /// Impulses on `segments` uniform pieces, preserving the time integral
    /// of the control on each of them.
    fn resampled_impulses(&self, segments: usize) -> Vec<f64> {
        let m = self.m();
        let n_old = self.segments();
        let mut out = vec![0.0; segments * m];
        let imp = self.impulses();
        for k in 0..n_old {
            let (a, b) = (k as f64 / n_old as f64, (k + 1) as f64 / n_old as f64);
            let first = ((a * segments as f64).floor() as usize).min(segments - 1);
            let last = (((b * segments as f64).ceil() as usize).max(first + 1)).min(segments);
            for j in first..last {
                let (c, d) = (j as f64 / segments as f64, (j + 1) as f64 / segments as f64);
                let overlap = (b.min(d) - a.max(c)).max(0.0) / (b - a);
                for i in 0..m {
                    out[j * m + i] += imp[k * m + i] * overlap;
                }
            }
        }
        out
    }
}

/// States sampled along the trajectory of a control.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub control: ControlSignal,
    pub label: String,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("nonempty")
    }
}

/// Integrates the system under `control`; states at segment boundaries.
pub fn integrate(system: &ControlAffineSystem, control: &ControlSignal, q0: &[f64]) -> Result<Trajectory> {
    integrate_sampled(system, control, q0, 0)
}

/// As [`integrate`] with `interior` extra samples inside each segment.
pub fn integrate_sampled(
    system: &ControlAffineSystem,
    control: &ControlSignal,
    q0: &[f64],
    interior: usize,
) -> Result<Trajectory> {
    if q0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: q0.len(),
        });
    }
    if control.m() != system.m() {
        return Err(Error::DimensionMismatch {
            expected: system.m(),
            found: control.m(),
        });
    }
    let h = control.step();
    let mut times = vec![0.0];
    let mut states = vec![q0.to_vec()];
    let mut q = q0.to_vec();
    let mut buf = vec![0.0; q0.len()];
    let sub = interior + 1;
    for (k, u) in control.values.iter().enumerate() {
        for j in 0..sub {
            let rhs = |_: f64, x: &[f64], out: &mut [f64]| {
                out.fill(0.0);
                if let Some(f0) = system.drift() {
                    f0.eval_into(x, out);
                }
                for (f, ui) in system.controlled().iter().zip(u) {
                    if *ui != 0.0 {
                        f.eval_into(x, &mut buf);
                        for (o, b) in out.iter_mut().zip(&buf) {
                            *o += ui * b;
                        }
                    }
                }
            };
            ode_integrate(rhs, 0.0, h / sub as f64, &mut q, Tolerance::default())?;
            times.push(h * (k as f64 + (j + 1) as f64 / sub as f64));
            states.push(q.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        control: control.clone(),
        label: system.label.clone(),
    })
}

/// Outcome of one steering problem.
#[derive(Clone, Debug)]
pub struct PlanResult {
    pub control: ControlSignal,
    pub kind: CostKind,
    pub endpoint: Vec<f64>,
    /// Euclidean distance from the endpoint to the target.
    pub error: f64,
    /// Weighted pseudo-norm of the endpoint error in linear coordinates at the target.
    pub residual: f64,
    pub cost_j: f64,
    pub cost_i: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl PlanResult {
    pub fn cost(&self) -> f64 {
        match self.kind {
            CostKind::I => self.cost_i,
            _ => self.cost_j,
        }
    }
}

/// Knobs for [`Planner::steer`].
#[derive(Clone, Debug)]
pub struct SteerOptions {
    pub cost: CostKind,
    pub tmax: f64,
    /// Prescribed horizon instead of a free one in `(0, tmax]`.
    pub fixed_time: Option<f64>,
    pub segments: usize,
    pub budget: usize,
    pub seed: u64,
    /// Random restarts around the incumbent after structured seeds.
    pub restarts: usize,
    pub accept: f64,
    pub warm: Vec<ControlSignal>,
    /// Skip structured seeds when a warm start converges.
    pub trust_warm: bool,
}

impl SteerOptions {
    pub fn new(cost: CostKind) -> Self {
        SteerOptions {
            cost,
            tmax: 0.25,
            fixed_time: None,
            segments: DEFAULT_SEGMENTS,
            budget: DEFAULT_BUDGET,
            seed: 0,
            restarts: 4,
            accept: DEFAULT_ACCEPT,
            warm: Vec::new(),
            trust_warm: false,
        }
    }

    pub fn tmax(mut self, tmax: f64) -> Self {
        self.tmax = tmax;
        self
    }

    pub fn fixed_time(mut self, t: f64) -> Self {
        self.fixed_time = Some(t);
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn segments(mut self, n: usize) -> Self {
        self.segments = n.max(1);
        self
    }

    pub fn restarts(mut self, r: usize) -> Self {
        self.restarts = r;
        self
    }

    pub fn warm(mut self, c: ControlSignal) -> Self {
        self.warm.push(c);
        self
    }

    pub fn trust_warm(mut self, yes: bool) -> Self {
        self.trust_warm = yes;
        self
    }
}

#[derive(Clone, Copy, Debug)]
enum TimeMode {
    Fixed(f64),
    Free { tmin: f64, tmax: f64 },
}

/// Smoothed cost used inside the local solver.
#[derive(Clone, Copy, Debug)]
enum Smooth {
    J(f64),
    I,
}

struct Problem<'a> {
    fields: &'a [VectorField],
    drift: Option<&'a VectorField>,
    q0: &'a [f64],
    q1: &'a [f64],
    /// Inverse frame matrix at the target.
    w: DMatrix<f64>,
    weights: Vec<usize>,
    n: usize,
    m: usize,
    segs: usize,
    time: TimeMode,
    /// Cost actually reported.
    kind: CostKind,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    endpoint: Vec<f64>,
    g: DVector<f64>,
    gmat: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    fn dim_x(&self) -> usize {
        self.segs * self.m + usize::from(self.free())
    }

    fn free(&self) -> bool {
        matches!(self.time, TimeMode::Free { .. })
    }

    fn step_of(&self, x: &[f64]) -> f64 {
        match self.time {
            TimeMode::Fixed(t) => t / self.segs as f64,
            TimeMode::Free { .. } => x[self.segs * self.m].exp() / self.segs as f64,
        }
    }

    fn horizon_of(&self, x: &[f64]) -> f64 {
        self.step_of(x) * self.segs as f64
    }

    fn tau_bounds(&self) -> Option<(f64, f64)> {
        match self.time {
            TimeMode::Free { tmin, tmax } => Some((tmin.ln(), tmax.ln())),
            TimeMode::Fixed(_) => None,
        }
    }

    /// Endpoint and, when requested, its Jacobian in `x`.
    fn shoot(&self, x: &[f64], jac: bool, evals: &mut usize) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        *evals += 1;
        let (n, m, segs) = (self.n, self.m, self.segs);
        let h = self.step_of(x);
        let drift = self.drift;
        let mut q = self.q0.to_vec();
        let mut fbuf = vec![0.0; n];
        if !jac {
            for k in 0..segs {
                let v = &x[k * m..(k + 1) * m];
                integrate_limited(
                    |_, s, out| {
                        out.fill(0.0);
                        if let Some(f0) = drift {
                            f0.eval_into(s, &mut fbuf);
                            for (o, b) in out.iter_mut().zip(&fbuf) {
                                *o += h * b;
                            }
                        }
                        for (f, vi) in self.fields.iter().zip(v) {
                            if *vi != 0.0 {
                                f.eval_into(s, &mut fbuf);
                                for (o, b) in out.iter_mut().zip(&fbuf) {
                                    *o += vi * b;
                                }
                            }
                        }
                    },
                    0.0,
                    1.0,
                    &mut q,
                    SHOOT_TOL,
                    SHOOT_STEPS,
                )?;
            }
            return Ok((q, None));
        }
        let time_col = drift.is_some() && self.free();
        let cols = m + usize::from(time_col);
        let len = n + n * n + n * cols;
        let mut phis: Vec<Vec<f64>> = Vec::with_capacity(segs);
        let mut sens: Vec<Vec<f64>> = Vec::with_capacity(segs);
        let mut jbuf = vec![0.0; n * n];
        let mut a = vec![0.0; n * n];
        let mut forcing = vec![0.0; n * cols];
        let mut y = vec![0.0; len];
        for k in 0..segs {
            let v = &x[k * m..(k + 1) * m];
            y.fill(0.0);
            y[..n].copy_from_slice(&q);
            for i in 0..n {
                y[n + i * n + i] = 1.0;
            }
            integrate_limited(
                |_, s, out| {
                    let st = &s[..n];
                    out[..n].fill(0.0);
                    a.fill(0.0);
                    if let Some(f0) = drift {
                        f0.eval_into(st, &mut fbuf);
                        for i in 0..n {
                            out[i] += h * fbuf[i];
                            if time_col {
                                forcing[i * cols + m] = fbuf[i];
                            }
                        }
                        f0.jacobian_into(st, &mut jbuf);
                        for (ai, ji) in a.iter_mut().zip(&jbuf) {
                            *ai += h * ji;
                        }
                    }
                    for (j, (f, vi)) in self.fields.iter().zip(v).enumerate() {
                        f.eval_into(st, &mut fbuf);
                        for i in 0..n {
                            out[i] += vi * fbuf[i];
                            forcing[i * cols + j] = fbuf[i];
                        }
                        if *vi != 0.0 {
                            f.jacobian_into(st, &mut jbuf);
                            for (ai, ji) in a.iter_mut().zip(&jbuf) {
                                *ai += vi * ji;
                            }
                        }
                    }
                    let (phi, sm) = s[n..].split_at(n * n);
                    let (dphi, dsm) = out[n..].split_at_mut(n * n);
                    variational(&a, phi, dphi, n, n);
                    variational(&a, sm, dsm, n, cols);
                    for (d, f) in dsm.iter_mut().zip(&forcing) {
                        *d += f;
                    }
                },
                0.0,
                1.0,
                &mut y,
                SHOOT_TOL,
                SHOOT_STEPS,
            )?;
            q.copy_from_slice(&y[..n]);
            phis.push(y[n..n + n * n].to_vec());
            sens.push(y[n + n * n..].to_vec());
        }
        let p = self.dim_x();
        let mut gmat = DMatrix::zeros(n, p);
        let mut mm = DMatrix::<f64>::identity(n, n);
        for k in (0..segs).rev() {
            let s = DMatrix::from_row_slice(n, cols, &sens[k]);
            let ms = &mm * s;
            for j in 0..m {
                gmat.set_column(k * m + j, &ms.column(j));
            }
            if time_col {
                let mut c = gmat.column_mut(p - 1);
                c += ms.column(m) * h;
            }
            mm = &mm * DMatrix::from_row_slice(n, n, &phis[k]);
        }
        Ok((q, Some(gmat)))
    }

    fn residual_of(&self, p: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(self.n, p.iter().zip(self.q1).map(|(a, b)| a - b));
        &self.w * d
    }

    fn pseudo(&self, g: &DVector<f64>) -> f64 {
        g.iter()
            .zip(&self.weights)
            .map(|(z, &w)| z.abs().powf(1.0 / w as f64))
            .sum()
    }

    fn evaluate(&self, x: Vec<f64>, evals: &mut usize) -> Result<Iterate> {
        let (endpoint, gm) = self.shoot(&x, true, evals)?;
        let g = self.residual_of(&endpoint);
        let gmat = &self.w * gm.expect("jacobian requested");
        if g.iter().chain(gmat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(" in shooting".into()));
        }
        Ok(Iterate { x, endpoint, g, gmat })
    }

    /// Smoothed cost with gradient and Hessian.
    fn cost(&self, x: &[f64], smooth: Smooth) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (m, segs) = (self.m, self.segs);
        let p = self.dim_x();
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        let mut total = 0.0;
        let h = self.step_of(x);
        let (floor, with_tau) = match smooth {
            Smooth::J(mu) => (mu, false),
            Smooth::I => (h, self.free()),
        };
        for k in 0..segs {
            let v = &x[k * m..(k + 1) * m];
            let c = (dot(v, v) + floor * floor).sqrt();
            if c == 0.0 {
                continue;
            }
            total += c;
            for i in 0..m {
                grad[k * m + i] += v[i] / c;
                for j in 0..m {
                    let d = if i == j { 1.0 } else { 0.0 };
                    hess[(k * m + i, k * m + j)] += (d - v[i] * v[j] / (c * c)) / c;
                }
            }
            if with_tau {
                let t = p - 1;
                let h2 = h * h;
                grad[t] += h2 / c;
                hess[(t, t)] += h2 * (2.0 / c - h2 / (c * c * c));
                for i in 0..m {
                    let cross = -v[i] * h2 / (c * c * c);
                    hess[(k * m + i, t)] += cross;
                    hess[(t, k * m + i)] += cross;
                }
            }
        }
        (total, grad, hess)
    }

    fn exact_cost(&self, x: &[f64]) -> (f64, f64) {
        let (m, segs) = (self.m, self.segs);
        let h = self.step_of(x);
        let mut j = 0.0;
        let mut i = 0.0;
        for k in 0..segs {
            let v = &x[k * m..(k + 1) * m];
            j += norm(v);
            i += (dot(v, v) + h * h).sqrt();
        }
        (j, i)
    }

    fn reported(&self, x: &[f64]) -> f64 {
        let (j, i) = self.exact_cost(x);
        match self.kind {
            CostKind::I => i,
            _ => j,
        }
    }

    fn smooth_for(&self, mu: f64) -> Smooth {
        match (self.kind, self.drift.is_some()) {
            (CostKind::I, true) => Smooth::I,
            _ => Smooth::J(mu),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Minimum-norm solution of `G d = -g`.
fn min_norm_correction(gmat: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let ggt = gmat * gmat.transpose();
    let y = ggt.clone().cholesky().map(|c| c.solve(g)).or_else(|| {
        let svd = ggt.svd(true, true);
        svd.solve(g, 1e-14).ok()
    })?;
    Some(-(gmat.transpose() * y))
}

struct Sqp<'p, 'a> {
    prob: &'p Problem<'a>,
    budget: usize,
    evals: usize,
}

struct Outcome {
    it: Iterate,
    merit: f64,
}

impl<'p, 'a> Sqp<'p, 'a> {
    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    fn eval(&mut self, x: Vec<f64>) -> Option<Iterate> {
        if self.exhausted() {
            return None;
        }
        self.prob.evaluate(x, &mut self.evals).ok()
    }

    /// One smoothing stage of SQP with damped BFGS on the Lagrangian Hessian.
    fn stage(&mut self, mut it: Iterate, smooth: Smooth, max_iter: usize, stat_tol: f64) -> Iterate {
        let prob = self.prob;
        let p = prob.dim_x();
        let (_, _, h0) = prob.cost(&it.x, smooth);
        let mean_diag = (h0.diagonal().sum() / p as f64).max(1e-12);
        let mut b = h0 + DMatrix::identity(p, p) * (1e-3 * mean_diag);
        if prob.free() && matches!(smooth, Smooth::J(_)) {
            b[(p - 1, p - 1)] += mean_diag;
        }
        let mut rho = 0.0f64;
        for _ in 0..max_iter {
            let (c, grad, _) = prob.cost(&it.x, smooth);
            let Some((d, lambda)) = self.qp_step(&b, &it, &grad) else {
                break;
            };
            let feas = inf_norm(it.g.iter());
            let stat = inf_norm((&grad + it.gmat.transpose() * &lambda).iter());
            let xs = 1.0 + inf_norm(it.x.iter());
            if feas <= FEAS_TOL && (stat <= stat_tol || inf_norm(d.iter()) <= 1e-12 * xs) {
                break;
            }
            rho = rho.max(1.5 * inf_norm(lambda.iter()) + 1e-10);
            let g1: f64 = it.g.iter().map(|v| v.abs()).sum();
            let phi0 = c + rho * g1;
            let slope = grad.dot(&d) - rho * g1;
            if slope > -1e-16 * phi0.abs().max(1e-300) && feas <= FEAS_TOL {
                break;
            }
            let merit = |it2: &Iterate| prob.cost(&it2.x, smooth).0 + rho * it2.g.iter().map(|v| v.abs()).sum::<f64>();
            let mut accepted: Option<Iterate> = None;
            let full: Vec<f64> = it.x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
            let full = self.clamp_tau(full);
            if let Some(tr) = self.eval(full.clone()) {
                if merit(&tr) <= phi0 + 1e-4 * slope {
                    accepted = Some(tr);
                } else if let Some(corr) = min_norm_correction(&it.gmat, &tr.g) {
                    let soc: Vec<f64> = full.iter().zip(corr.iter()).map(|(a, b)| a + b).collect();
                    if let Some(ts) = self.eval(self.clamp_tau(soc)) {
                        if merit(&ts) <= phi0 + 1e-4 * slope {
                            accepted = Some(ts);
                        }
                    }
                }
            }
            if accepted.is_none() {
                let mut alpha = 0.5;
                for _ in 0..25 {
                    if self.exhausted() {
                        break;
                    }
                    let trial: Vec<f64> = it.x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
                    if let Some(tr) = self.eval(self.clamp_tau(trial)) {
                        if merit(&tr) <= phi0 + 1e-4 * alpha * slope {
                            accepted = Some(tr);
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
            }
            let Some(next) = accepted else {
                break;
            };
            // damped BFGS on the Lagrangian gradient
            let (_, grad_new, _) = prob.cost(&next.x, smooth);
            let s = DVector::from_iterator(p, next.x.iter().zip(&it.x).map(|(a, b)| a - b));
            let y = (&grad_new + next.gmat.transpose() * &lambda) - (&grad + it.gmat.transpose() * &lambda);
            let bs = &b * &s;
            let sbs = s.dot(&bs);
            if sbs > 1e-300 {
                let sy = s.dot(&y);
                let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
                let r = &y * theta + &bs * (1.0 - theta);
                let sr = s.dot(&r);
                if sr > 1e-300 {
                    b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
                }
            }
            it = next;
        }
        it
    }

    fn clamp_tau(&self, mut x: Vec<f64>) -> Vec<f64> {
        if let Some((lo, hi)) = self.prob.tau_bounds() {
            let t = x.len() - 1;
            x[t] = x[t].clamp(lo, hi);
        }
        x
    }

    /// Equality-constrained QP step, with the time bound made active when
    /// the unconstrained step would cross it.
    fn qp_step(&self, b: &DMatrix<f64>, it: &Iterate, grad: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let prob = self.prob;
        let p = prob.dim_x();
        let n = prob.n;
        let solve = |bound: Option<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
            let extra = usize::from(bound.is_some());
            let k = p + n + extra;
            let mut kkt = DMatrix::zeros(k, k);
            kkt.view_mut((0, 0), (p, p)).copy_from(b);
            kkt.view_mut((p, 0), (n, p)).copy_from(&it.gmat);
            kkt.view_mut((0, p), (p, n)).copy_from(&it.gmat.transpose());
            let mut rhs = DVector::zeros(k);
            rhs.rows_mut(0, p).copy_from(&(-grad));
            rhs.rows_mut(p, n).copy_from(&(-&it.g));
            if let Some(target) = bound {
                kkt[(p + n, p - 1)] = 1.0;
                kkt[(p - 1, p + n)] = 1.0;
                rhs[p + n] = target - it.x[p - 1];
            }
            let sol = kkt.lu().solve(&rhs).or_else(|| {
                let mut kk = DMatrix::zeros(k, k);
                kk.view_mut((0, 0), (p, p)).copy_from(b);
                kk.view_mut((p, 0), (n, p)).copy_from(&it.gmat);
                kk.view_mut((0, p), (p, n)).copy_from(&it.gmat.transpose());
                if let Some(_) = bound {
                    kk[(p + n, p - 1)] = 1.0;
                    kk[(p - 1, p + n)] = 1.0;
                }
                kk.svd(true, true).solve(&rhs, 1e-13).ok()
            })?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            Some((sol.rows(0, p).into_owned(), sol.rows(p, n).into_owned()))
        };
        let (d, lambda) = solve(None)?;
        if let Some((lo, hi)) = prob.tau_bounds() {
            let t = it.x[p - 1] + d[p - 1];
            if t > hi + 1e-12 {
                return solve(Some(hi));
            }
            if t < lo - 1e-12 {
                return solve(Some(lo));
            }
        }
        Some((d, lambda))
    }

    /// Full refinement: smoothing continuation, then feasibility polish.
    fn refine(&mut self, x0: Vec<f64>, probe_only: bool) -> Option<Outcome> {
        let prob = self.prob;
        let mut it = self.eval(x0)?;
        let scale = (prob.exact_cost(&it.x).0 / prob.segs as f64).max(1e-9);
        let stages: &[(f64, usize, f64)] = if probe_only {
            &[(1e-1, 12, 1e-5)]
        } else {
            &[(1e-1, 60, 1e-6), (1e-3, 40, 1e-8), (1e-5, 40, 1e-10)]
        };
        let needs_smoothing = matches!(prob.smooth_for(1.0), Smooth::J(_));
        for (k, &(factor, iters, tol)) in stages.iter().enumerate() {
            if k > 0 && !needs_smoothing {
                break;
            }
            let smooth = prob.smooth_for(factor * scale);
            let iters = if needs_smoothing { iters } else { iters * 2 };
            it = self.stage(it, smooth, iters, tol);
            if self.exhausted() {
                break;
            }
        }
        if !probe_only {
            for _ in 0..4 {
                if inf_norm(it.g.iter()) <= 1e-13 || self.exhausted() {
                    break;
                }
                let Some(corr) = min_norm_correction(&it.gmat, &it.g) else {
                    break;
                };
                let x: Vec<f64> = it.x.iter().zip(corr.iter()).map(|(a, b)| a + b).collect();
                match self.eval(self.clamp_tau(x)) {
                    Some(next) if inf_norm(next.g.iter()) < inf_norm(it.g.iter()) => it = next,
                    _ => break,
                }
            }
        }
        let merit = prob.reported(&it.x) + 10.0 * prob.pseudo(&it.g);
        Some(Outcome { it, merit })
    }
}

/// Steering and value-function estimates for one system.
pub struct Planner {
    system: ControlAffineSystem,
    small: ControlAffineSystem,
    rank_tol: f64,
    frame: Mutex<Option<AdaptedFrame>>,
}

impl Planner {
    pub fn new(system: &ControlAffineSystem) -> Self {
        Planner {
            system: system.clone(),
            small: system.small(),
            rank_tol: DEFAULT_RANK_TOL,
            frame: Mutex::new(None),
        }
    }

    pub fn system(&self) -> &ControlAffineSystem {
        &self.system
    }

    /// The system whose dynamics a plan of this kind follows.
    pub fn dynamics_for(&self, kind: CostKind) -> &ControlAffineSystem {
        match kind {
            CostKind::SR => &self.small,
            _ => &self.system,
        }
    }

    /// Inverse frame matrix and weights at `q`, reusing cached frame words.
    fn target_metric(&self, q: &[f64]) -> (DMatrix<f64>, Vec<usize>) {
        let n = q.len();
        let mut cache = self.frame.lock().expect("frame cache");
        let usable = |f: &AdaptedFrame| f.conditioning_at(q) >= 1e-6;
        let frame = match cache.as_ref() {
            Some(f) if usable(f) => Some(f.rebased(q)),
            _ => match adapted_frame_at(&self.small, q, self.rank_tol) {
                Ok(f) => {
                    *cache = Some(f.clone());
                    Some(f)
                }
                Err(_) => None,
            },
        };
        match frame.and_then(|f| {
            let w = f.weights();
            f.matrix_at(q).try_inverse().map(|inv| (inv, w))
        }) {
            Some(x) => x,
            None => (DMatrix::identity(n, n), vec![1; n]),
        }
    }

    /// Weighted pseudo-norm of `p - q1` in linear coordinates at `q1`.
    pub fn endpoint_residual(&self, q1: &[f64], p: &[f64]) -> f64 {
        let (w, weights) = self.target_metric(q1);
        let d = DVector::from_iterator(p.len(), p.iter().zip(q1).map(|(a, b)| a - b));
        (w * d)
            .iter()
            .zip(&weights)
            .map(|(z, &wi)| z.abs().powf(1.0 / wi as f64))
            .sum()
    }

    /// Minimizes the chosen cost over controls reaching `q1` from `q0`.
    pub fn steer(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<PlanResult> {
        let n = self.system.dim();
        for q in [q0, q1] {
            if q.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: q.len(),
                });
            }
        }
        if !(opts.tmax > 0.0) || opts.budget == 0 {
            return Err(Error::Precondition("steer needs tmax > 0 and a positive budget".into()));
        }
        let dyn_sys = self.dynamics_for(opts.cost);
        let drift = dyn_sys.drift();
        let time = match (opts.fixed_time, drift.is_some(), opts.cost) {
            (Some(t), _, _) => TimeMode::Fixed(t),
            (None, true, _) => TimeMode::Free {
                tmin: opts.tmax * 1e-6,
                tmax: opts.tmax,
            },
            (None, false, _) => TimeMode::Fixed(opts.tmax),
        };
        let (w, weights) = self.target_metric(q1);
        let prob = Problem {
            fields: dyn_sys.controlled(),
            drift,
            q0,
            q1,
            w,
            weights,
            n,
            m: dyn_sys.m(),
            segs: opts.segments,
            time,
            kind: opts.cost,
        };
        let mut sqp = Sqp {
            prob: &prob,
            budget: opts.budget,
            evals: 0,
        };
        let mut best: Option<(Vec<f64>, f64, bool, ControlSignal)> = None;
        // candidates are compared by (converged, cost) and then residual
        let consider = |x_ctrl: ControlSignal, endpoint: &[f64], best: &mut Option<(Vec<f64>, f64, bool, ControlSignal)>| {
            let g = prob.residual_of(endpoint);
            let res = prob.pseudo(&g);
            let ok = res <= opts.accept;
            let cost = x_ctrl.cost(opts.cost);
            let better = match best {
                None => true,
                Some((_, bres, bok, bc)) => match (ok, *bok) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cost < bc.cost(opts.cost),
                    (false, false) => res < *bres,
                },
            };
            if better {
                *best = Some((endpoint.to_vec(), res, ok, x_ctrl));
            }
        };
        let to_signal = |x: &[f64]| -> ControlSignal {
            let h = prob.step_of(x);
            let m = prob.m;
            let values = (0..prob.segs).map(|k| x[k * m..(k + 1) * m].iter().map(|v| v / h).collect()).collect();
            ControlSignal {
                values,
                horizon: prob.horizon_of(x),
            }
        };

        // warm starts at their own resolution are candidates as they stand
        let mut warm_x = Vec::new();
        for wc in &opts.warm {
            if wc.m() != prob.m {
                continue;
            }
            // re-time to an admissible horizon, preserving impulses
            let target_h = match time {
                TimeMode::Fixed(t) => t,
                TimeMode::Free { tmin, tmax } => wc.horizon.clamp(tmin, tmax),
            };
            let f = wc.horizon / target_h;
            let wc_eval = ControlSignal {
                values: wc.values.iter().map(|u| u.iter().map(|x| x * f).collect()).collect(),
                horizon: target_h,
            };
            sqp.evals += 1;
            if let Ok(tr) = integrate(dyn_sys, &wc_eval, q0) {
                consider(wc_eval.clone(), tr.endpoint(), &mut best);
            }
            let mut x = wc_eval.resampled_impulses(prob.segs);
            if prob.free() {
                x.push(target_h.ln());
            }
            warm_x.push(x);
        }

        let mut seeds: Vec<Vec<f64>> = Vec::new();
        let tau0 = opts.tmax.ln() - std::f64::consts::LN_2;
        // null control with the best horizon
        if drift.is_some() {
            if let Some(x) = self.null_seed(&prob, &mut sqp) {
                if let Ok((p, _)) = prob.shoot(&x, false, &mut sqp.evals) {
                    consider(to_signal(&x), &p, &mut best);
                }
                seeds.push(x);
            }
        }
        if let Some((_, _, true, c)) = &best {
            if opts.cost != CostKind::I && c.cost_j() == 0.0 {
                return self.finish(&prob, best.expect("set"), sqp.evals, opts);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut outcomes: Vec<Outcome> = Vec::new();
        let mut trusted = false;
        for x in warm_x {
            if let Some(o) = sqp.refine(x, false) {
                trusted |= prob.pseudo(&o.it.g) <= opts.accept;
                outcomes.push(o);
            }
        }
        if !(opts.trust_warm && trusted) {
            seeds.extend(self.structured_seeds(&prob, &mut sqp, tau0));
            if prob.free() {
                // short horizons are close to the driftless problem
                seeds.extend(self.structured_seeds(&prob, &mut sqp, (opts.tmax * 1e-3).ln()));
            }
            let mut probes: Vec<Outcome> = seeds.into_iter().filter_map(|x| sqp.refine(x, true)).collect();
            probes.sort_by(|a, b| a.merit.total_cmp(&b.merit));
            for o in probes.into_iter().take(3) {
                if let Some(r) = sqp.refine(o.it.x, false) {
                    outcomes.push(r);
                }
            }
            for _ in 0..opts.restarts {
                let Some(inc) = outcomes.iter().min_by(|a, b| a.merit.total_cmp(&b.merit)) else {
                    break;
                };
                let x = inc.it.x.clone();
                let scale = (prob.exact_cost(&x).0 / prob.segs as f64).max(1e-6);
                let mut y = x.clone();
                for (i, v) in y.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if prob.free() && i == x.len() - 1 {
                        *v += 0.3 * z;
                    } else {
                        *v += 0.5 * scale * z;
                    }
                }
                let y = sqp.clamp_tau(y);
                if let Some(r) = sqp.refine(y, false) {
                    outcomes.push(r);
                }
                if sqp.exhausted() {
                    break;
                }
            }
        }
        for o in &outcomes {
            consider(to_signal(&o.it.x), &o.it.endpoint, &mut best);
        }
        let Some(best) = best else {
            return Err(Error::Precondition("no candidate could be evaluated".into()));
        };
        self.finish(&prob, best, sqp.evals, opts)
    }

    fn finish(
        &self,
        prob: &Problem,
        best: (Vec<f64>, f64, bool, ControlSignal),
        evaluations: usize,
        opts: &SteerOptions,
    ) -> Result<PlanResult> {
        let (endpoint, residual, converged, mut control) = best;
        // with no drift the horizon is immaterial; shrink it for the I cost
        if opts.cost == CostKind::I && prob.drift.is_none() && opts.fixed_time.is_none() {
            let f = control.horizon / (opts.tmax * 1e-6);
            control = ControlSignal {
                values: control.values.iter().map(|u| u.iter().map(|x| x * f).collect()).collect(),
                horizon: opts.tmax * 1e-6,
            };
        }
        let error = endpoint.iter().zip(prob.q1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(PlanResult {
            cost_j: control.cost_j(),
            cost_i: control.cost_i(),
            control,
            kind: opts.cost,
            endpoint,
            error,
            residual,
            converged,
            evaluations,
        })
    }

    /// Null control with the horizon minimizing the endpoint residual.
    fn null_seed(&self, prob: &Problem, sqp: &mut Sqp) -> Option<Vec<f64>> {
        let p = prob.dim_x();
        let mut x = vec![0.0; p];
        let TimeMode::Free { tmin, tmax } = prob.time else {
            return Some(x);
        };
        let grid = 16;
        let mut best = (f64::INFINITY, tmax);
        for k in 1..=grid {
            let t = tmax * k as f64 / grid as f64;
            x[p - 1] = t.ln();
            let (e, _) = prob.shoot(&x, false, &mut sqp.evals).ok()?;
            let r = prob.residual_of(&e).norm();
            if r < best.0 {
                best = (r, t);
            }
        }
        // Gauss-Newton in t along the drift
        let f0 = prob.drift?;
        let mut t = best.1;
        for _ in 0..30 {
            x[p - 1] = t.ln();
            let (e, _) = prob.shoot(&x, false, &mut sqp.evals).ok()?;
            let r = prob.residual_of(&e);
            let dr = &prob.w * DVector::from_vec(f0.eval(&e));
            let den = dr.norm_squared();
            if den == 0.0 {
                break;
            }
            let step = r.dot(&dr) / den;
            let next = (t - step).clamp(tmin, tmax);
            if (next - t).abs() <= 1e-15 * t.max(1e-300) {
                break;
            }
            t = next;
        }
        x[p - 1] = t.ln();
        Some(x)
    }

    /// Linearized minimum-norm seed plus loop seeds for every control pair.
    fn structured_seeds(&self, prob: &Problem, sqp: &mut Sqp, tau0: f64) -> Vec<Vec<f64>> {
        let (m, segs) = (prob.m, prob.segs);
        let p = prob.dim_x();
        let mut base = vec![0.0; p];
        if prob.free() {
            base[p - 1] = tau0;
        }
        let mut seeds = Vec::new();
        let Ok(it) = prob.evaluate(base.clone(), &mut sqp.evals) else {
            return vec![base];
        };
        let lin = min_norm_correction(&it.gmat, &it.g)
            .map(|d| base.iter().zip(d.iter()).map(|(a, b)| a + b).collect::<Vec<f64>>())
            .unwrap_or_else(|| base.clone());
        seeds.push(lin.clone());
        // residual left in coordinates of weight ≥ 2 sets the loop size
        let hi: f64 = it
            .g
            .iter()
            .zip(&prob.weights)
            .filter(|(_, &w)| w >= 2)
            .map(|(g, &w)| g.abs().powf(1.0 / w as f64))
            .sum();
        if hi > 0.0 && m >= 2 {
            let loop_cost = (4.0 * std::f64::consts::PI).sqrt() * hi;
            let a = loop_cost / segs as f64;
            for i in 0..m {
                for j in i + 1..m {
                    for sign in [1.0, -1.0] {
                        let mut x = lin.clone();
                        for k in 0..segs {
                            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / segs as f64;
                            x[k * m + i] += a * th.cos();
                            x[k * m + j] += sign * a * th.sin();
                        }
                        seeds.push(x);
                    }
                }
            }
        }
        seeds
    }

    /// Sub-Riemannian distance estimate on the small system.
    pub fn sr_distance(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<f64> {
        Ok(self.sr_plan(q0, q1, opts)?.cost_j)
    }

    pub fn sr_plan(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<PlanResult> {
        let mut o = opts.clone();
        o.cost = CostKind::SR;
        o.fixed_time = None;
        self.steer(q0, q1, &o)
    }

    /// `V^J` estimate: optimizer result against the drift-then-SR bounds.
    pub fn value_j(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<f64> {
        self.value(q0, q1, CostKind::J, opts)
    }

    /// `V^I` estimate, analogous to [`value_j`](Self::value_j).
    pub fn value_i(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<f64> {
        self.value(q0, q1, CostKind::I, opts)
    }

    /// Both estimates, with the `I` plan offered to the `J` search.
    pub fn value_pair(&self, q0: &[f64], q1: &[f64], opts: &SteerOptions) -> Result<(f64, f64)> {
        let mut oi = opts.clone();
        oi.cost = CostKind::I;
        let pi = self.steer(q0, q1, &oi)?;
        let vi = self.value_bounded(q0, q1, CostKind::I, opts, &pi)?;
        let mut oj = opts.clone();
        oj.cost = CostKind::J;
        if pi.converged {
            oj.warm.push(pi.control.clone());
        }
        let pj = self.steer(q0, q1, &oj)?;
        let vj = self.value_bounded(q0, q1, CostKind::J, opts, &pj)?;
        Ok((vj, vi))
    }

    fn value(&self, q0: &[f64], q1: &[f64], kind: CostKind, opts: &SteerOptions) -> Result<f64> {
        if !self.system.has_drift() {
            return Err(Error::DriftAbsent);
        }
        let mut o = opts.clone();
        o.cost = kind;
        let plan = self.steer(q0, q1, &o)?;
        self.value_bounded(q0, q1, kind, opts, &plan)
    }

    fn value_bounded(&self, q0: &[f64], q1: &[f64], kind: CostKind, opts: &SteerOptions, plan: &PlanResult) -> Result<f64> {
        let mut best = if plan.converged { plan.cost() } else { f64::INFINITY };
        if kind == CostKind::J && best == 0.0 {
            return Ok(0.0);
        }
        let f0 = self.system.drift().ok_or(Error::DriftAbsent)?;
        let grid = 8;
        let mut so = opts.clone();
        so.restarts = 0;
        for k in 0..=grid {
            let t = opts.tmax * k as f64 / grid as f64;
            let extra = if kind == CostKind::I { t } else { 0.0 };
            if extra >= best {
                break;
            }
            let start = crate::ode::flow(f0, q0, t, Tolerance::default())?;
            let d = self.sr_plan(&start, q1, &so)?;
            if d.converged {
                best = best.min(d.cost_j + extra);
            }
        }
        Ok(best)
    }
}

/// One-shot steering with default options.
pub fn steer(
    system: &ControlAffineSystem,
    q0: &[f64],
    q1: &[f64],
    cost: CostKind,
    tmax: f64,
    budget: usize,
) -> Result<PlanResult> {
    Planner::new(system).steer(q0, q1, &SteerOptions::new(cost).tmax(tmax).budget(budget))
}

pub fn sr_distance(system: &ControlAffineSystem, q0: &[f64], q1: &[f64], budget: usize) -> Result<f64> {
    Planner::new(system).sr_distance(q0, q1, &SteerOptions::new(CostKind::SR).tmax(1.0).budget(budget))
}

pub fn value_j(system: &ControlAffineSystem, q0: &[f64], q1: &[f64], tmax: f64, budget: usize) -> Result<f64> {
    Planner::new(system).value_j(q0, q1, &SteerOptions::new(CostKind::J).tmax(tmax).budget(budget))
}

pub fn value_i(system: &ControlAffineSystem, q0: &[f64], q1: &[f64], tmax: f64, budget: usize) -> Result<f64> {
    Planner::new(system).value_i(q0, q1, &SteerOptions::new(CostKind::I).tmax(tmax).budget(budget))
}

/// Endpoints of random controls with `J ≤ eps` and horizon `≤ tmax`,
/// stratified over segment counts `{1, 2, 4}` and cost levels `{eps/4, eps/2, eps}`.
pub fn reachable_sample(
    system: &ControlAffineSystem,
    q0: &[f64],
    eps: f64,
    tmax: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(eps >= 0.0) || !(tmax > 0.0) {
        return Err(Error::Precondition("reachable_sample needs eps ≥ 0 and tmax > 0".into()));
    }
    let m = system.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let segs = [1usize, 2, 4][k % 3];
        let level = eps * [0.25, 0.5, 1.0][(k / 3) % 3];
        let horizon = if system.has_drift() {
            tmax * rng.gen_range(0.0..1.0f64).max(1e-9)
        } else {
            tmax
        };
        // Dirichlet-like split of the cost over segments
        let mut split: Vec<f64> = (0..segs).map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
        let tot: f64 = split.iter().sum();
        split.iter_mut().for_each(|s| *s /= tot);
        let h = horizon / segs as f64;
        let values = split
            .iter()
            .map(|share| {
                let mut dir: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                let nd = norm(&dir).max(1e-300);
                dir.iter_mut().for_each(|d| *d *= level * share / (nd * h));
                dir
            })
            .collect();
        let c = ControlSignal { values, horizon };
        out.push(integrate(system, &c, q0)?.endpoint().to_vec());
    }
    Ok(out)
}
