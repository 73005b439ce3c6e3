//! Empirical ball-box constants from reachable samples and steering probes.

use crate::charts::{box_contains, pi_contains, BoxSpec, DriftBoxSpec, PrivilegedChart};
use crate::error::{Error, Result};
use crate::planner::{reachable_sample, CostKind, Planner, SteerOptions};

/// Candidate constants `1, 1.25, …, 8`.
pub fn constant_grid() -> Vec<f64> {
    (0..=28).map(|k| 1.0 + 0.25 * k as f64).collect()
}

/// Inner probe: a coordinate point and the cost needed to reach it.
#[derive(Clone, Debug)]
pub struct Probe {
    pub z: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct BallBoxRecord {
    pub eps: f64,
    /// Smallest grid constant whose outer set holds every sample.
    pub c_outer: Option<f64>,
    /// Smallest grid constant whose inner probes are all reached.
    pub c_inner: Option<f64>,
    pub samples: usize,
    /// Probes at `c_inner` (or at the largest grid constant when none works).
    pub probes: Vec<Probe>,
}

impl BallBoxRecord {
    pub fn c_min(&self) -> Option<f64> {
        Some(self.c_outer?.max(self.c_inner?))
    }
}

#[derive(Clone, Debug)]
pub struct BallBoxReport {
    pub records: Vec<BallBoxRecord>,
    /// One grid constant valid for every `ε`, when it exists.
    pub constant: Option<f64>,
}

impl BallBoxReport {
    /// `max/min` of the per-`ε` minimal constants.
    pub fn spread(&self) -> Option<f64> {
        let cs: Option<Vec<f64>> = self.records.iter().map(|r| r.c_min()).collect();
        let cs = cs?;
        let max = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }
}

/// Settings for [`ballbox_constant`].
#[derive(Clone, Debug)]
pub struct BallBoxOptions {
    pub tmax: f64,
    pub samples: usize,
    /// Relative slack on the inner probes' cost.
    pub slack: f64,
    pub steer: SteerOptions,
}

impl BallBoxOptions {
    pub fn new(tmax: f64) -> Self {
        BallBoxOptions {
            tmax,
            samples: 180,
            slack: 0.05,
            steer: SteerOptions::new(CostKind::J).tmax(tmax).restarts(1),
        }
    }
}

fn outer_ok(chart: &PrivilegedChart, z: &[f64], eta: f64, tmax: f64) -> Result<bool> {
    Ok(match chart.drift_slot {
        Some(_) => pi_contains(&DriftBoxSpec::from_chart(chart, eta, tmax)?, z),
        None => box_contains(
            &BoxSpec {
                eta,
                weights: chart.weights.clone(),
            },
            z,
        ),
    })
}

/// The `2n` probe points of the inner set at scale `eta`.
pub fn inner_probes(chart: &PrivilegedChart, eta: f64, horizon: f64) -> Vec<Vec<f64>> {
    let n = chart.dim();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let r = eta.powi(chart.weights[i] as i32);
        match chart.drift_slot {
            Some(l) if i == l => {
                let mut lo = vec![0.0; n];
                lo[l] = -r;
                let mut hi = vec![0.0; n];
                hi[l] = horizon + r;
                out.push(lo);
                out.push(hi);
            }
            Some(l) => {
                let mut a = vec![0.0; n];
                a[i] = r;
                a[l] = horizon;
                let mut b = vec![0.0; n];
                b[i] = -r;
                out.push(a);
                out.push(b);
            }
            None => {
                let mut a = vec![0.0; n];
                a[i] = r;
                let mut b = vec![0.0; n];
                b[i] = -r;
                out.push(a);
                out.push(b);
            }
        }
    }
    out
}

/// Smallest grid constant such that reachable samples lie in the outer set
/// at `Cε` and inner probes at `ε/C` are reached with cost `≤ (1+slack)ε`.
pub fn ballbox_report(
    planner: &Planner,
    chart: &PrivilegedChart,
    eps_grid: &[f64],
    opts: &BallBoxOptions,
) -> Result<BallBoxReport> {
    let system = planner.system();
    if system.has_drift() != chart.drift_slot.is_some() {
        return Err(Error::Precondition("drift systems need a drift chart and vice versa".into()));
    }
    let q = chart.base().to_vec();
    let grid = constant_grid();
    let mut records = Vec::with_capacity(eps_grid.len());
    for (e_idx, &eps) in eps_grid.iter().enumerate() {
        let seed = opts.steer.seed.wrapping_add(1000 * e_idx as u64);
        let sample = reachable_sample(system, &q, eps, opts.tmax, opts.samples, seed)?;
        let mut c_outer = Some(grid[0]);
        for p in &sample {
            let Ok(z) = chart.to_coords(p) else {
                c_outer = None;
                break;
            };
            let need = grid.iter().find(|&&c| outer_ok(chart, &z, c * eps, opts.tmax).unwrap_or(false));
            match (need, c_outer) {
                (Some(&c), Some(cur)) => c_outer = Some(cur.max(c)),
                _ => {
                    c_outer = None;
                    break;
                }
            }
        }
        // probes are steered independently; each needs its own smallest C
        let mut steer = opts.steer.clone();
        steer.seed = seed;
        steer.tmax = opts.tmax;
        if !system.has_drift() {
            steer.cost = CostKind::SR;
        }
        let reach = |c: f64| -> Result<Vec<Probe>> {
            let mut out = Vec::new();
            for z in inner_probes(chart, eps / c, opts.tmax) {
                let p = chart.from_coords(&z)?;
                let plan = planner.steer(&q, &p, &steer)?;
                out.push(Probe {
                    z,
                    cost: plan.cost_j,
                    converged: plan.converged,
                });
            }
            Ok(out)
        };
        let ok = |probes: &[Probe]| probes.iter().all(|p| p.converged && p.cost <= (1.0 + opts.slack) * eps);
        let start = c_outer.and_then(|c| grid.iter().position(|&g| g >= c)).unwrap_or(0);
        let last = reach(grid[grid.len() - 1])?;
        let (c_inner, probes) = if !ok(&last) {
            (None, last)
        } else {
            let (mut lo, mut hi) = (start, grid.len() - 1);
            let mut best = last;
            let first = reach(grid[lo])?;
            if ok(&first) {
                hi = lo;
                best = first;
            } else {
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    let pr = reach(grid[mid])?;
                    if ok(&pr) {
                        hi = mid;
                        best = pr;
                    } else {
                        lo = mid;
                    }
                }
            }
            (Some(grid[hi]), best)
        };
        records.push(BallBoxRecord {
            eps,
            c_outer,
            c_inner,
            samples: sample.len(),
            probes,
        });
    }
    let all: Option<Vec<f64>> = records.iter().map(|r| r.c_min()).collect();
    let constant = all.map(|cs| cs.into_iter().fold(grid[0], f64::max));
    Ok(BallBoxReport { records, constant })
}

/// As [`ballbox_report`], failing when no single grid constant works.
pub fn ballbox_constant(
    planner: &Planner,
    chart: &PrivilegedChart,
    eps_grid: &[f64],
    opts: &BallBoxOptions,
) -> Result<BallBoxReport> {
    let report = ballbox_report(planner, chart, eps_grid, opts)?;
    if report.constant.is_none() {
        let detail = report
            .records
            .iter()
            .map(|r| format!("eps {}: outer {:?}, inner {:?}", r.eps, r.c_outer, r.c_inner))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::NoBallBoxConstant(detail));
    }
    Ok(report)
}
