//! Constructive upper estimates of the complexities of curves and paths,
//! cusp classification, predicted exponents and log-log fits.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::charts::{continuous_family, PrivilegedChart};
use crate::error::{Error, Result};
use crate::field::ControlAffineSystem;
use crate::path::{uniform_grid, ConstantPath, Path};
use crate::planner::{integrate_sampled, ControlSignal, CostKind, PlanResult, Planner, SteerOptions};
use crate::structure::{drift_order, BracketClosure, Layers, DEFAULT_DEPTH, DEFAULT_RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComplexityKind {
    Cost,
    App,
    Time,
    Neig,
    LtlcTime,
    LtlcNeig,
}

impl ComplexityKind {
    pub const ALL: [ComplexityKind; 6] = [
        ComplexityKind::Cost,
        ComplexityKind::App,
        ComplexityKind::Time,
        ComplexityKind::Neig,
        ComplexityKind::LtlcTime,
        ComplexityKind::LtlcNeig,
    ];

    pub fn is_ltlc(self) -> bool {
        matches!(self, ComplexityKind::LtlcTime | ComplexityKind::LtlcNeig)
    }

    /// Whether the estimator works on timed paths.
    pub fn timed(self) -> bool {
        !matches!(self, ComplexityKind::Cost | ComplexityKind::App)
    }
}

impl fmt::Display for ComplexityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplexityKind::Cost => "cost",
            ComplexityKind::App => "app",
            ComplexityKind::Time => "time",
            ComplexityKind::Neig => "neig",
            ComplexityKind::LtlcTime => "ltlc_time",
            ComplexityKind::LtlcNeig => "ltlc_neig",
        })
    }
}

impl FromStr for ComplexityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.strip_prefix("sigma_").unwrap_or(s);
        ComplexityKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Unknown {
                what: "complexity kind",
                name: s.into(),
            })
    }
}

/// A geometric curve or a timed path.
#[derive(Clone)]
pub struct CurveSpec {
    pub label: String,
    pub path: Arc<dyn Path>,
    /// Timed paths are followed in their own time.
    pub timed: bool,
    /// Constant paths skip the injectivity and velocity checks.
    pub constant: bool,
}

impl fmt::Debug for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveSpec")
            .field("label", &self.label)
            .field("domain", &self.path.domain())
            .field("timed", &self.timed)
            .finish()
    }
}

impl CurveSpec {
    pub fn curve(label: &str, path: Arc<dyn Path>) -> Result<Self> {
        let c = CurveSpec {
            label: label.into(),
            path,
            timed: false,
            constant: false,
        };
        c.validate()?;
        Ok(c)
    }

    /// A path on `[0, T]`.
    pub fn path(label: &str, path: Arc<dyn Path>) -> Result<Self> {
        if path.domain().0 != 0.0 {
            return Err(Error::Precondition("timed paths start at t = 0".into()));
        }
        let c = CurveSpec {
            label: label.into(),
            path,
            timed: true,
            constant: false,
        };
        c.validate()?;
        Ok(c)
    }

    /// The constant path at `q0` on `[0, T]`.
    pub fn constant(q0: &[f64], horizon: f64) -> Self {
        CurveSpec {
            label: "constant".into(),
            path: Arc::new(ConstantPath {
                point: q0.to_vec(),
                horizon,
            }),
            timed: true,
            constant: true,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        self.path.domain()
    }

    pub fn horizon(&self) -> f64 {
        let (a, b) = self.domain();
        b - a
    }

    /// Same parametrization with the other flag.
    pub fn as_curve(&self) -> Self {
        CurveSpec {
            timed: false,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let grid = uniform_grid(self.domain(), 64);
        let pts: Vec<Vec<f64>> = grid.iter().map(|&t| self.path.position(t)).collect();
        for &t in &grid {
            if self.path.velocity(t).iter().all(|v| *v == 0.0) {
                return Err(Error::ZeroVelocity { t });
            }
        }
        let scale = pts.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if dist(&pts[i], &pts[j]) <= 1e-12 * scale {
                    return Err(Error::Precondition(format!(
                        "curve is not injective: t = {} and t = {} coincide",
                        grid[i], grid[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// One leg of a march.
#[derive(Clone, Debug)]
pub struct Leg {
    pub from: f64,
    pub to: f64,
    pub cost_j: f64,
    pub cost_i: f64,
    pub converged: bool,
    pub control: ControlSignal,
}

/// A single complexity value with diagnostics.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: f64,
    pub pieces: usize,
    pub converged: bool,
    /// `σ_time` hit `δmax` already.
    pub saturated: bool,
    pub legs: Vec<Leg>,
}

impl Estimate {
    fn from_legs(legs: Vec<Leg>, eps: f64, kind: CostKind) -> Self {
        let total: f64 = legs.iter().map(|l| leg_cost(l, kind)).sum();
        Estimate {
            value: total / eps,
            pieces: legs.len(),
            converged: legs.iter().all(|l| l.converged),
            saturated: false,
            legs,
        }
    }

    /// Value of the same legs measured with the `J` cost.
    pub fn j_value(&self, eps: f64) -> f64 {
        self.legs.iter().map(|l| l.cost_j).sum::<f64>() / eps
    }
}

fn leg_cost(l: &Leg, kind: CostKind) -> f64 {
    match kind {
        CostKind::I => l.cost_i,
        _ => l.cost_j,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexitySample {
    pub eps: f64,
    pub value: f64,
    pub pieces: usize,
    pub converged: bool,
    pub saturated: bool,
}

#[derive(Clone, Debug)]
pub struct ComplexityCurve {
    pub kind: ComplexityKind,
    pub cost: CostKind,
    pub samples: Vec<ComplexitySample>,
}

impl ComplexityCurve {
    pub fn new(kind: ComplexityKind, cost: CostKind, samples: Vec<ComplexitySample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].eps < w[0].eps)) {
            return Err(Error::Precondition("sweep must have strictly decreasing eps".into()));
        }
        Ok(ComplexityCurve { kind, cost, samples })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentFit {
    /// `value ∼ ε^{-slope}`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Half-width of the 95% confidence band of the slope.
    pub half_width: f64,
}

/// Settings shared by the estimators.
#[derive(Clone, Debug)]
pub struct EstimatorOptions {
    pub tmax: f64,
    /// Largest time step for `σ_time`; defaults to `T/8`.
    pub delta_max: Option<f64>,
    /// Relative resolution of parameter and time-step searches.
    pub resolution: f64,
    /// Grid points per unit parameter length for tube membership.
    pub tube_grid: usize,
    /// Extra trajectory samples per control segment for tube and ball checks.
    pub interior: usize,
    pub steer: SteerOptions,
    pub rank_tol: f64,
}

impl EstimatorOptions {
    pub fn new(cost: CostKind) -> Self {
        EstimatorOptions {
            tmax: 0.25,
            delta_max: None,
            resolution: 1e-4,
            tube_grid: 400,
            interior: 1,
            steer: SteerOptions::new(cost).restarts(2).segments(12),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    fn steer_for(&self, kind: CostKind, fixed: Option<f64>) -> SteerOptions {
        let mut s = self.steer.clone();
        s.cost = kind;
        s.tmax = self.tmax;
        s.fixed_time = fixed;
        s
    }
}

/// Membership test applied to a candidate leg.
trait LegFilter {
    fn admits(&self, plan: &PlanResult, from: f64, to: f64) -> Result<bool>;
}

struct NoFilter;

impl LegFilter for NoFilter {
    fn admits(&self, _: &PlanResult, _: f64, _: f64) -> Result<bool> {
        Ok(true)
    }
}

/// Pseudo-distance to the curve, via charts on a fine parameter grid.
struct Tube<'a> {
    curve: &'a CurveSpec,
    template: PrivilegedChart,
    /// Fine grid spacing; neighbouring grid points are within `ε/20`.
    step: f64,
    count: usize,
    charts: RefCell<HashMap<usize, Option<PrivilegedChart>>>,
    dynamics: ControlAffineSystem,
    eps: f64,
    interior: usize,
}

impl<'a> Tube<'a> {
    fn new(system: &ControlAffineSystem, curve: &'a CurveSpec, eps: f64, opts: &EstimatorOptions, kind: CostKind) -> Result<Self> {
        let (a, b) = curve.domain();
        let coarse = uniform_grid((a, b), ((opts.tube_grid as f64 * (b - a)).ceil() as usize).clamp(16, 64));
        let small = system.small();
        let charts = continuous_family(&small, curve.path.as_ref(), &coarse, false, opts.rank_tol)?;
        let mut step = (b - a) / 32.0;
        let gap = |h: f64| {
            coarse
                .iter()
                .zip(&charts)
                .map(|(&t, c)| c.pseudo_distance(&curve.path.position((t + h).min(b))).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max)
        };
        while step > 1e-7 * (b - a) && gap(step) > 0.05 * eps {
            step /= 2.0;
        }
        let dynamics = match kind {
            CostKind::SR => small,
            _ => system.clone(),
        };
        Ok(Tube {
            curve,
            template: charts[0].clone(),
            step,
            count: ((b - a) / step).ceil() as usize,
            charts: RefCell::new(HashMap::new()),
            dynamics,
            eps,
            interior: opts.interior,
        })
    }

    fn param(&self, i: usize) -> f64 {
        let (a, b) = self.curve.domain();
        (a + i as f64 * self.step).min(b)
    }

    fn chart_distance(&self, i: usize, p: &[f64]) -> f64 {
        let mut cache = self.charts.borrow_mut();
        let chart = cache
            .entry(i)
            .or_insert_with(|| self.template.rebased(&self.curve.path.position(self.param(i))).ok());
        chart.as_ref().and_then(|c| c.pseudo_distance(p).ok()).unwrap_or(f64::INFINITY)
    }

    fn distance(&self, p: &[f64], window: (f64, f64)) -> f64 {
        let (a, _) = self.curve.domain();
        let span = (window.1 - window.0).max(4.0 * self.step);
        let lo = (((window.0 - span - a) / self.step).floor().max(0.0)) as usize;
        let hi = (((window.1 + span - a) / self.step).ceil() as usize).min(self.count);
        let mut idx: Vec<(f64, usize)> = (lo..=hi)
            .map(|i| (dist(&self.curve.path.position(self.param(i)), p), i))
            .collect();
        idx.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut best = f64::INFINITY;
        for &(_, i) in idx.iter().take(3) {
            best = best.min(self.chart_distance(i, p));
            if best <= self.eps {
                break;
            }
        }
        best
    }
}

impl LegFilter for Tube<'_> {
    fn admits(&self, plan: &PlanResult, from: f64, to: f64) -> Result<bool> {
        let start = self.curve.path.position(from);
        let tr = integrate_sampled(&self.dynamics, &plan.control, &start, self.interior)?;
        Ok(tr.states.iter().all(|s| self.distance(s, (from, to)) <= self.eps))
    }
}

/// Ball of radius `ε` moving along a timed path.
struct MovingBall<'a> {
    curve: &'a CurveSpec,
    template: PrivilegedChart,
    dynamics: ControlAffineSystem,
    eps: f64,
    interior: usize,
}

impl LegFilter for MovingBall<'_> {
    fn admits(&self, plan: &PlanResult, from: f64, _to: f64) -> Result<bool> {
        let start = self.curve.path.position(from);
        let tr = integrate_sampled(&self.dynamics, &plan.control, &start, self.interior)?;
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let chart = self.template.rebased(&self.curve.path.position(from + t))?;
            match chart.pseudo_distance(s) {
                Ok(d) if d <= self.eps => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }
}

/// Greedy march: each leg reaches the farthest parameter whose plan costs
/// at most `ε` and passes `filter`.
fn march(
    planner: &Planner,
    curve: &CurveSpec,
    eps: f64,
    kind: CostKind,
    opts: &EstimatorOptions,
    filter: &dyn LegFilter,
) -> Result<Vec<Leg>> {
    let (a, b) = curve.domain();
    let res = opts.resolution * (b - a);
    let target = (1.0 - 5e-4) * eps;
    let accept = (1.0 - 1e-3) * eps;
    let mut s = a;
    let mut legs = Vec::new();
    let mut hint: Option<ControlSignal> = None;
    let mut step = (b - a) / 8.0;
    // local exponent of leg cost against leg length
    let mut power = 1.0;
    while s < b - 1e-12 * (b - a).max(1.0) {
        let q = curve.path.position(s);
        // (admitted, plan) at parameter `to`
        let probe = |to: f64, hint: &mut Option<ControlSignal>| -> Result<(bool, PlanResult)> {
            let target = curve.path.position(to);
            let fixed = if curve.timed { Some(to - s) } else { None };
            let mut so = opts.steer_for(kind, fixed);
            so.seed = opts.steer.seed.wrapping_add(legs.len() as u64);
            if let Some(h) = hint.as_ref() {
                so.warm.push(h.clone());
                so.trust_warm = true;
                so.restarts = 0;
            }
            let plan = planner.steer(&q, &target, &so)?;
            if plan.converged {
                *hint = Some(plan.control.clone());
            }
            let ok = plan.converged && plan.cost() <= eps && filter.admits(&plan, s, to)?;
            Ok((ok, plan))
        };
        let remainder = b - s;
        if legs.is_empty() || remainder <= 2.0 * step {
            let (ok, plan) = probe(b, &mut hint)?;
            if ok {
                legs.push(leg_of(s, b, &plan));
                break;
            }
            if remainder <= 2.0 * step {
                step = step.min(0.5 * remainder);
            }
        }
        let mut fresh = false;
        let (end, plan) = loop {
            match leg_search(s, b, step, res, &mut power, &mut hint, &probe, target, accept) {
                Ok(found) => break found,
                // one retry with a cold start
                Err(Error::Stall { .. }) if !fresh => {
                    fresh = true;
                    hint = None;
                }
                Err(e) => return Err(e),
            }
        };
        step = end - s;
        hint = Some(plan.control.clone());
        legs.push(leg_of(s, end, &plan));
        s = end;
    }
    Ok(legs)
}

/// Safeguarded secant search in log-log space for the leg end whose cost is
/// just below `ε`.
#[allow(clippy::too_many_arguments)]
fn leg_search(
    s: f64,
    b: f64,
    step: f64,
    res: f64,
    power: &mut f64,
    hint: &mut Option<ControlSignal>,
    probe: &dyn Fn(f64, &mut Option<ControlSignal>) -> Result<(bool, PlanResult)>,
    target: f64,
    accept: f64,
) -> Result<(f64, PlanResult)> {
    let eps = accept / (1.0 - 1e-3);
    // cost of a rejected probe, when the rejection is due to cost alone
    let over = |plan: &PlanResult| (plan.converged && plan.cost() > eps).then(|| plan.cost());
    let mut lo: (f64, Option<PlanResult>) = (s, None);
    let mut hi: (f64, Option<f64>) = (b, None);
    let mut guess = s + step;
    let mut last_side = 0i8;
    let mut repeats = 0;
    loop {
        let w = hi.0 - lo.0;
        if w <= res {
            break;
        }
        let g = if repeats >= 2 {
            // regula falsi is stuck on one side
            repeats = 0;
            lo.0 + 0.5 * w
        } else {
            guess.clamp(lo.0 + 0.01 * w, hi.0 - 0.01 * w)
        };
        let (ok, plan) = probe(g, hint)?;
        let side = if ok { -1 } else { 1 };
        repeats = if side == last_side { repeats + 1 } else { 0 };
        last_side = side;
        if ok {
            let c = plan.cost();
            lo = (g, Some(plan));
            if c >= accept {
                break;
            }
        } else {
            hi = (g, over(&plan));
        }
        let lo_c = lo.1.as_ref().map(|p| p.cost()).filter(|c| *c > 0.0);
        let (dl, dh) = (lo.0 - s, hi.0 - s);
        guess = match (lo_c, hi.1) {
            (Some(cl), Some(ch)) => {
                let p = (ch / cl).ln() / (dh / dl).ln();
                if p.is_finite() && p > 0.0 {
                    *power = p;
                }
                s + dl * (target / cl).powf(1.0 / *power)
            }
            (Some(cl), None) => s + (dl * (target / cl).powf(1.0 / *power)).min(4.0 * dl),
            (None, Some(ch)) => s + dh * (target / ch).powf(1.0 / *power),
            (None, None) => s + 0.5 * dh,
        };
    }
    let Some(plan) = lo.1 else {
        return Err(Error::Stall { param: s });
    };
    if lo.0 - s < res.min(b - s) {
        return Err(Error::Stall { param: s });
    }
    Ok((lo.0, plan))
}

fn leg_of(from: f64, to: f64, plan: &PlanResult) -> Leg {
    Leg {
        from,
        to,
        cost_j: plan.cost_j,
        cost_i: plan.cost_i,
        converged: plan.converged,
        control: plan.control.clone(),
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("eps must be positive, got {eps}")))
    }
}

/// Interpolation by cost: pieces of cost `ε` ending on the curve.
pub fn sigma_cost(planner: &Planner, curve: &CurveSpec, eps: f64, kind: CostKind, opts: &EstimatorOptions) -> Result<Estimate> {
    check_eps(eps)?;
    let geometric = curve.as_curve();
    let legs = march(planner, &geometric, eps, kind, opts, &NoFilter)?;
    Ok(Estimate::from_legs(legs, eps, kind))
}

/// Tubular approximation: as [`sigma_cost`] with trajectories kept in the
/// `ε`-tube around the curve.
pub fn sigma_app(planner: &Planner, curve: &CurveSpec, eps: f64, kind: CostKind, opts: &EstimatorOptions) -> Result<Estimate> {
    check_eps(eps)?;
    let geometric = curve.as_curve();
    let tube = Tube::new(planner.system(), &geometric, eps, opts, kind)?;
    let legs = march(planner, &geometric, eps, kind, opts, &tube)?;
    Ok(Estimate::from_legs(legs, eps, kind))
}

/// Neighbouring approximation: legs followed in the path's own time with
/// the trajectory inside the moving ball `B(γ(t), ε)`.
pub fn sigma_neig(planner: &Planner, path: &CurveSpec, eps: f64, kind: CostKind, opts: &EstimatorOptions) -> Result<Estimate> {
    check_eps(eps)?;
    if !path.timed {
        return Err(Error::Precondition("sigma_neig needs a timed path".into()));
    }
    let small = planner.system().small();
    let q0 = path.path.position(0.0);
    let template = crate::charts::build_chart(&small, &q0, None, opts.rank_tol)?;
    let ball = MovingBall {
        curve: path,
        template,
        dynamics: planner.dynamics_for(kind).clone(),
        eps,
        interior: opts.interior,
    };
    let legs = march(planner, path, eps, kind, opts, &ball)?;
    Ok(Estimate::from_legs(legs, eps, kind))
}

/// `σ̃(γ, δ)`: `δ` times the cost of interpolating `γ` at uniform times
/// `T/⌈T/δ⌉` apart. Stops early once the value exceeds `cap`.
pub fn sigma_time_aux(
    planner: &Planner,
    path: &CurveSpec,
    delta: f64,
    kind: CostKind,
    opts: &EstimatorOptions,
    cap: Option<f64>,
) -> Result<Estimate> {
    let horizon = path.horizon();
    if !(delta > 0.0 && delta <= horizon * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!("time step {delta} outside (0, {horizon}]")));
    }
    let count = (horizon / delta - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / count as f64;
    let mut legs = Vec::with_capacity(count);
    let mut hint: Option<ControlSignal> = None;
    let mut total = 0.0;
    for i in 0..count {
        let (t0, t1) = (h * i as f64, if i + 1 == count { horizon } else { h * (i + 1) as f64 });
        let mut so = opts.steer_for(kind, Some(t1 - t0));
        so.seed = opts.steer.seed.wrapping_add(i as u64);
        if let Some(w) = &hint {
            so.warm.push(w.clone());
            so.trust_warm = true;
            so.restarts = 0;
        }
        let plan = planner.steer(&path.path.position(t0), &path.path.position(t1), &so)?;
        if !plan.converged {
            return Err(Error::InfeasibleLeg { t: t0 });
        }
        hint = Some(plan.control.clone());
        total += plan.cost();
        legs.push(leg_of(t0, t1, &plan));
        if let Some(c) = cap {
            if delta * total > c {
                return Ok(Estimate {
                    value: delta * total,
                    pieces: legs.len(),
                    converged: false,
                    saturated: false,
                    legs,
                });
            }
        }
    }
    Ok(Estimate {
        value: delta * total,
        pieces: count,
        converged: true,
        saturated: false,
        legs,
    })
}

/// Interpolation by time: `T/δ*` for the largest `δ* ≤ δmax` with `σ̃ ≤ ε`.
/// `known` is a time step already known to satisfy the bound.
pub fn sigma_time(
    planner: &Planner,
    path: &CurveSpec,
    eps: f64,
    kind: CostKind,
    opts: &EstimatorOptions,
    known: Option<f64>,
) -> Result<Estimate> {
    check_eps(eps)?;
    if !path.timed {
        return Err(Error::Precondition("sigma_time needs a timed path".into()));
    }
    let horizon = path.horizon();
    let dmax = opts.delta_max.unwrap_or(horizon / 8.0).min(horizon);
    let res = opts.resolution * horizon;
    let feasible = |d: f64| -> Result<Option<Estimate>> {
        match sigma_time_aux(planner, path, d, kind, opts, Some(eps)) {
            Ok(e) if e.converged && e.value <= eps => Ok(Some(e)),
            Ok(_) | Err(Error::InfeasibleLeg { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    if let Some(mut e) = feasible(dmax)? {
        e.value = horizon / dmax;
        e.saturated = true;
        return Ok(e);
    }
    // lower bracket by halving from δmax or from a known feasible step
    let mut hi = dmax;
    let mut lo: Option<(f64, Estimate)> = None;
    if let Some(k) = known.filter(|&k| k > 0.0 && k < dmax) {
        if let Some(e) = feasible(k)? {
            lo = Some((k, e));
        }
    }
    if lo.is_none() {
        let mut d = dmax / 2.0;
        while d >= res {
            if let Some(e) = feasible(d)? {
                lo = Some((d, e));
                break;
            }
            hi = d;
            d /= 2.0;
        }
    }
    let Some((mut lo_d, mut lo_e)) = lo else {
        return Err(Error::NoFeasibleStep);
    };
    while hi - lo_d > res {
        let mid = (lo_d * hi).sqrt().max(lo_d + 0.5 * res).min(hi - 0.5 * res);
        match feasible(mid)? {
            Some(e) => {
                lo_d = mid;
                lo_e = e;
            }
            None => hi = mid,
        }
    }
    lo_e.value = horizon / lo_d;
    Ok(lo_e)
}

fn drift_vanishes(system: &ControlAffineSystem, q0: &[f64]) -> Result<bool> {
    let f0 = system.drift().ok_or(Error::DriftAbsent)?;
    Ok(f0.eval(q0).iter().all(|v| *v == 0.0))
}

fn zero_estimate() -> Estimate {
    Estimate {
        value: 0.0,
        pieces: 0,
        converged: true,
        saturated: false,
        legs: Vec::new(),
    }
}

/// Long-time local controllability by time interpolation of the constant path.
pub fn ltlc_time(
    planner: &Planner,
    q0: &[f64],
    horizon: f64,
    eps: f64,
    kind: CostKind,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    if drift_vanishes(planner.system(), q0)? {
        return Ok(zero_estimate());
    }
    sigma_time(planner, &CurveSpec::constant(q0, horizon), eps, kind, opts, None)
}

/// Long-time local controllability by neighbouring approximation.
pub fn ltlc_neig(
    planner: &Planner,
    q0: &[f64],
    horizon: f64,
    eps: f64,
    kind: CostKind,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    if drift_vanishes(planner.system(), q0)? {
        return Ok(zero_estimate());
    }
    sigma_neig(planner, &CurveSpec::constant(q0, horizon), eps, kind, opts)
}

/// Dispatches on the complexity kind. LTLC kinds use the path's start
/// point and horizon.
pub fn estimate(
    planner: &Planner,
    kind: ComplexityKind,
    curve: &CurveSpec,
    eps: f64,
    cost: CostKind,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    match kind {
        ComplexityKind::Cost => sigma_cost(planner, curve, eps, cost, opts),
        ComplexityKind::App => sigma_app(planner, curve, eps, cost, opts),
        ComplexityKind::Time => sigma_time(planner, curve, eps, cost, opts, None),
        ComplexityKind::Neig => sigma_neig(planner, curve, eps, cost, opts),
        ComplexityKind::LtlcTime => ltlc_time(planner, &curve.path.position(0.0), curve.horizon(), eps, cost, opts),
        ComplexityKind::LtlcNeig => ltlc_neig(planner, &curve.path.position(0.0), curve.horizon(), eps, cost, opts),
    }
}

/// J- and I-estimates on the same data. Each I-witness is also a J-witness
/// (its J-cost is no larger), so the J value is capped by the I value.
pub fn estimate_pair(
    planner: &Planner,
    kind: ComplexityKind,
    curve: &CurveSpec,
    eps: f64,
    opts: &EstimatorOptions,
) -> (Result<Estimate>, Result<Estimate>) {
    let oi = EstimatorOptions {
        steer: opts.steer_for(CostKind::I, None),
        ..opts.clone()
    };
    let oj = EstimatorOptions {
        steer: opts.steer_for(CostKind::J, None),
        ..opts.clone()
    };
    let ei = estimate(planner, kind, curve, eps, CostKind::I, &oi);
    let mut ej = match (kind, &ei) {
        (ComplexityKind::Time, Ok(i)) if !i.saturated && i.value > 0.0 => {
            sigma_time(planner, curve, eps, CostKind::J, &oj, Some(curve.horizon() / i.value))
        }
        _ => estimate(planner, kind, curve, eps, CostKind::J, &oj),
    };
    if let Ok(i) = &ei {
        let witness = match kind {
            ComplexityKind::Time | ComplexityKind::LtlcTime => i.value,
            _ => i.j_value(eps),
        };
        match &mut ej {
            Ok(j) if witness < j.value => {
                j.value = witness;
                j.pieces = i.pieces;
                j.saturated = i.saturated;
                j.legs = i.legs.clone();
            }
            Ok(_) => {}
            Err(_) => {
                let mut j = i.clone();
                j.value = witness;
                ej = Ok(j);
            }
        }
    }
    (ej, ei)
}

/// Evaluates `kind` at each `ε` of a decreasing sweep. Points run in
/// parallel with seeds derived from the sweep index.
pub fn sweep(
    planner: &Planner,
    kind: ComplexityKind,
    curve: &CurveSpec,
    eps: &[f64],
    cost: CostKind,
    opts: &EstimatorOptions,
) -> Vec<Result<Estimate>> {
    eps.par_iter()
        .enumerate()
        .map(|(k, &e)| {
            let mut o = opts.clone();
            o.steer.seed = opts.steer.seed.wrapping_add(1_000_003 * k as u64);
            // a private planner keeps frame caching independent of scheduling
            let local = Planner::new(planner.system());
            estimate(&local, kind, curve, e, cost, &o)
        })
        .collect()
}

/// As [`sweep`] for both costs, via [`estimate_pair`].
pub fn sweep_pair(
    planner: &Planner,
    kind: ComplexityKind,
    curve: &CurveSpec,
    eps: &[f64],
    opts: &EstimatorOptions,
) -> Vec<(Result<Estimate>, Result<Estimate>)> {
    eps.par_iter()
        .enumerate()
        .map(|(k, &e)| {
            let mut o = opts.clone();
            o.steer.seed = opts.steer.seed.wrapping_add(1_000_003 * k as u64);
            estimate_pair(&Planner::new(planner.system()), kind, curve, e, &o)
        })
        .collect()
}

/// Successful sweep points as a curve; failed points are dropped.
pub fn collect_curve(kind: ComplexityKind, cost: CostKind, eps: &[f64], results: &[Result<Estimate>]) -> Result<ComplexityCurve> {
    let samples = eps
        .iter()
        .zip(results)
        .filter_map(|(&e, r)| {
            r.as_ref().ok().map(|x| ComplexitySample {
                eps: e,
                value: x.value,
                pieces: x.pieces,
                converged: x.converged,
                saturated: x.saturated,
            })
        })
        .collect();
    ComplexityCurve::new(kind, cost, samples)
}

/// Which branch of the no-cusp dichotomy certifies a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoCuspCertificate {
    /// `f0 ∉ TΓ ⊕ Δ^{s-1}` at every grid point.
    Transverse,
    /// `f0 ∈ TΓ ⊕ Δ^{s-1}` at every grid point, with no isolated tangency.
    Contained,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuspPoint {
    pub t: f64,
    /// `f0 ∈ TΓ ⊕ Δ^{s-1}`.
    pub in_sum: bool,
    /// `f0` parallel to the curve.
    pub tangent: bool,
    pub suspect: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuspReport {
    pub order: usize,
    pub points: Vec<CuspPoint>,
    pub certificate: Option<NoCuspCertificate>,
}

impl CuspReport {
    pub fn suspects(&self) -> Vec<f64> {
        self.points.iter().filter(|p| p.suspect).map(|p| p.t).collect()
    }
}

/// Classifies grid points of `curve` against the no-cusp conditions.
///
/// A point is a suspect when either condition holds there but fails at a
/// neighbouring grid point.
pub fn cusp_condition(system: &ControlAffineSystem, curve: &CurveSpec, grid: &[f64]) -> Result<CuspReport> {
    let f0 = system.drift().ok_or(Error::DriftAbsent)?;
    let mut closure = BracketClosure::new(system);
    let mut order = 0;
    let mut points = Vec::with_capacity(grid.len());
    for &t in grid {
        let q = curve.path.position(t);
        let s = drift_order(system, &q, DEFAULT_RANK_TOL)?;
        order = order.max(s);
        let v = f0.eval(&q);
        let tangent_vec = curve.path.velocity(t);
        let layers = Layers::at(&mut closure, &q, DEFAULT_DEPTH, DEFAULT_RANK_TOL);
        let in_sum = s <= 1 || layers.contains_with(s - 1, &[tangent_vec.clone()], &v);
        let tangent = parallel(&v, &tangent_vec);
        points.push(CuspPoint {
            t,
            in_sum,
            tangent,
            suspect: false,
        });
    }
    if order < 2 {
        return Err(Error::Precondition(format!("drift order {order} < 2 along the curve")));
    }
    let n = points.len();
    let isolated = |flags: &[bool], i: usize| -> bool {
        flags[i] && ((i > 0 && !flags[i - 1]) || (i + 1 < n && !flags[i + 1]))
    };
    let in_sum: Vec<bool> = points.iter().map(|p| p.in_sum).collect();
    let tangent: Vec<bool> = points.iter().map(|p| p.tangent).collect();
    for i in 0..n {
        points[i].suspect = isolated(&in_sum, i) || isolated(&tangent, i);
    }
    let any_suspect = points.iter().any(|p| p.suspect);
    let certificate = if any_suspect {
        None
    } else if in_sum.iter().all(|b| !b) {
        Some(NoCuspCertificate::Transverse)
    } else if in_sum.iter().all(|b| *b) {
        Some(NoCuspCertificate::Contained)
    } else {
        None
    };
    Ok(CuspReport {
        order,
        points,
        certificate,
    })
}

fn parallel(a: &[f64], b: &[f64]) -> bool {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return false;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - (dot / (na * nb)).abs() <= DEFAULT_RANK_TOL
}

/// Exponent predicted from the tangency degree `κ` and the drift order `s`.
pub fn predicted_exponent(kind: ComplexityKind, kappa: usize, s: usize, drift_present: bool) -> Result<usize> {
    if kappa == 0 && !kind.is_ltlc() {
        return Err(Error::Precondition("tangency degree must be at least 1".into()));
    }
    if drift_present && s < 2 {
        return Err(Error::Precondition(format!("drift order {s} < 2")));
    }
    Ok(match kind {
        ComplexityKind::Cost | ComplexityKind::App => kappa,
        ComplexityKind::Time | ComplexityKind::Neig if drift_present => kappa.max(s),
        ComplexityKind::Time | ComplexityKind::Neig => kappa,
        ComplexityKind::LtlcTime | ComplexityKind::LtlcNeig => s,
    })
}

/// Least-squares slope of `log value` against `-log ε`.
///
/// Needs at least five samples spanning a factor of four in `ε`.
pub fn fit_exponent(curve: &ComplexityCurve) -> Result<ExponentFit> {
    fit_points(&curve.samples.iter().map(|s| (s.eps, s.value)).collect::<Vec<_>>())
}

pub fn fit_points(points: &[(f64, f64)]) -> Result<ExponentFit> {
    let n = points.len();
    if n < 5 {
        return Err(Error::FitPrecondition(format!("{n} samples, need at least 5")));
    }
    if let Some((e, v)) = points.iter().find(|(e, v)| !(*e > 0.0) || !(*v > 0.0)) {
        return Err(Error::FitPrecondition(format!("non-positive sample ({e}, {v})")));
    }
    let emax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let emin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if emax / emin < 4.0 - 1e-9 {
        return Err(Error::FitPrecondition(format!("eps spans only a factor {}", emax / emin)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::FitPrecondition(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        slope: -b,
        intercept: a,
        r2,
        half_width: t * se,
    })
}

/// `n` geometric sweep points from `hi` down to `lo`.
pub fn geometric_sweep(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![hi];
    }
    let r = (lo / hi).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| if k + 1 == n { lo } else { hi * r.powi(k as i32) }).collect()
}
