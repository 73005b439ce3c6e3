//! Privileged coordinates of the second kind and the weighted boxes
//! used by the ball-box inclusions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::ControlAffineSystem;
use crate::ode::{flow, flow_with_jacobian, Tolerance};
use crate::path::Path;
use crate::structure::{
    adapted_frame_at, drift_order, greedy_frame, AdaptedFrame, BracketClosure, FrameEntry,
    FrameLabel, Layers, DEFAULT_DEPTH,
};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

/// Coordinates `z ↦ e^{z_{i_n} f_{i_n}} ∘ … ∘ e^{z_{i_1} f_{i_1}}(q)`.
#[derive(Clone, Debug)]
pub struct PrivilegedChart {
    pub frame: AdaptedFrame,
    /// Frame indices in execution order: `order[0]` is applied first.
    pub order: Vec<usize>,
    pub weights: Vec<usize>,
    pub drift_slot: Option<usize>,
    pub tol: Tolerance,
    frame_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PrivilegedChart {
    /// Chart on `frame` centred at `frame.base`.
    pub fn from_frame(frame: AdaptedFrame, order: Vec<usize>) -> Result<Self> {
        let n = frame.dim();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Precondition(format!("ordering {order:?} is not a permutation of 0..{n}")));
        }
        let lu = frame.matrix_at(&frame.base).lu();
        if !lu.is_invertible() {
            return Err(Error::FrameIncomplete { found: 0, dim: n });
        }
        Ok(PrivilegedChart {
            weights: frame.weights(),
            drift_slot: frame.drift_slot,
            frame,
            order,
            tol: Tolerance {
                rtol: 1e-12,
                atol: 1e-15,
            },
            frame_lu: lu,
        })
    }

    pub fn base(&self) -> &[f64] {
        &self.frame.base
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Same frame and ordering centred elsewhere.
    pub fn rebased(&self, q: &[f64]) -> Result<Self> {
        PrivilegedChart::from_frame(self.frame.rebased(q), self.order.clone())
    }

    pub fn from_coords(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.frame.base.clone();
        for &i in &self.order {
            if z[i] != 0.0 {
                p = flow(&self.frame.entries[i].field, &p, z[i], self.tol)?;
            }
        }
        Ok(p)
    }

    /// Point and Jacobian `∂p/∂z` (columns indexed by coordinate).
    pub fn from_coords_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let mut points = Vec::with_capacity(n + 1);
        let mut phis: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(n);
        let mut p = self.frame.base.clone();
        points.push(p.clone());
        for &i in &self.order {
            if z[i] != 0.0 {
                let (q, phi) = flow_with_jacobian(&self.frame.entries[i].field, &p, z[i], self.tol)?;
                p = q;
                phis.push(Some(DMatrix::from_row_slice(n, n, &phi)));
            } else {
                phis.push(None);
            }
            points.push(p.clone());
        }
        let mut jac = DMatrix::zeros(n, n);
        let mut m = DMatrix::<f64>::identity(n, n);
        for k in (0..n).rev() {
            let i = self.order[k];
            let v = DVector::from_vec(self.frame.entries[i].field.eval(&points[k + 1]));
            jac.set_column(i, &(&m * v));
            if let Some(phi) = &phis[k] {
                m = &m * phi;
            }
        }
        Ok((p, jac))
    }

    /// First-order coordinates `F(q)^{-1}(p - q)`.
    pub fn linear_coords(&self, p: &[f64]) -> Vec<f64> {
        let d = DVector::from_iterator(p.len(), p.iter().zip(&self.frame.base).map(|(a, b)| a - b));
        self.frame_lu.solve(&d).expect("invertible").as_slice().to_vec()
    }

    /// Inverts [`from_coords`](Self::from_coords) by damped Newton.
    pub fn to_coords(&self, p: &[f64]) -> Result<Vec<f64>> {
        let scale = p.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        let radius = p
            .iter()
            .zip(&self.frame.base)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let mut z = self.linear_coords(p);
        let (mut x, mut jac) = self.from_coords_with_jacobian(&z)?;
        let mut res = residual(&x, p);
        for _ in 0..NEWTON_MAX_ITER {
            if res <= 1e-15 * scale {
                return Ok(z);
            }
            let r = DVector::from_iterator(p.len(), x.iter().zip(p).map(|(a, b)| a - b));
            let Some(delta) = jac.clone().lu().solve(&r) else {
                break;
            };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, d)| a - lambda * d).collect();
                if let Ok((xt, jt)) = self.from_coords_with_jacobian(&trial) {
                    let rt = residual(&xt, p);
                    if rt < res {
                        z = trial;
                        x = xt;
                        jac = jt;
                        res = rt;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if res <= NEWTON_TOL * scale {
            return Ok(z);
        }
        Err(Error::NewtonDivergence {
            residual: res,
            radius,
        })
    }

    /// Pseudo-norm of the coordinates of `p`.
    pub fn pseudo_distance(&self, p: &[f64]) -> Result<f64> {
        Ok(pseudo_norm(&self.weights, &self.to_coords(p)?))
    }
}

fn residual(x: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(p).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()))
}

fn identity_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Privileged chart at `q`; `ordering` lists frame indices in execution order.
pub fn build_chart(
    system: &ControlAffineSystem,
    q: &[f64],
    ordering: Option<&[usize]>,
    rank_tol: f64,
) -> Result<PrivilegedChart> {
    let frame = adapted_frame_at(system, q, rank_tol)?;
    let order = ordering.map(<[usize]>::to_vec).unwrap_or_else(|| identity_order(q.len()));
    PrivilegedChart::from_frame(frame, order)
}

fn drift_frame(system: &ControlAffineSystem, q: &[f64], rank_tol: f64) -> Result<AdaptedFrame> {
    let f0 = system.drift().ok_or(Error::DriftAbsent)?;
    let s = drift_order(system, q, rank_tol)?;
    if s == 0 {
        return Err(Error::ZeroDrift);
    }
    let mut closure = BracketClosure::new(system);
    greedy_frame(
        &mut closure,
        q,
        rank_tol,
        vec![FrameEntry {
            label: FrameLabel::Drift,
            field: f0.clone(),
            weight: s,
        }],
    )
}

/// Execution order putting `last` slots at the end, in the given sequence.
fn order_with_last(n: usize, last: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).filter(|i| !last.contains(i)).collect();
    order.extend_from_slice(last);
    order
}

/// Chart whose last-executed leg is the drift flow, so `z_* f0 = ∂_{z_ℓ}`.
pub fn build_drift_chart(
    system: &ControlAffineSystem,
    q: &[f64],
    rank_tol: f64,
) -> Result<PrivilegedChart> {
    let frame = drift_frame(system, q, rank_tol)?;
    let l = frame.drift_slot.expect("drift seeded first at its weight");
    let order = order_with_last(q.len(), &[l]);
    PrivilegedChart::from_frame(frame, order)
}

/// Charts centred along `path` with the frame words fixed at the first grid point.
pub fn continuous_family(
    system: &ControlAffineSystem,
    path: &dyn Path,
    grid: &[f64],
    adapted_to_drift: bool,
    rank_tol: f64,
) -> Result<Vec<PrivilegedChart>> {
    let Some(&t0) = grid.first() else {
        return Ok(Vec::new());
    };
    let q0 = path.position(t0);
    let template = if adapted_to_drift {
        build_drift_chart(system, &q0, rank_tol)?
    } else {
        build_chart(system, &q0, None, rank_tol)?
    };
    grid.iter()
        .map(|&t| {
            let q = path.position(t);
            if template.frame.conditioning_at(&q) < rank_tol {
                return Err(Error::FrameDegenerate { t });
            }
            template.rebased(&q).map_err(|_| Error::FrameDegenerate { t })
        })
        .collect()
}

/// Charts rectifying the path velocity along a fixed slot.
#[derive(Clone, Debug)]
pub struct RectifyingFamily {
    pub charts: Vec<PrivilegedChart>,
    /// Slot carrying the tangent field.
    pub alpha: usize,
    pub degree: usize,
    /// Largest `|z_α^{t_i}(γ(t_{i+1})) - (t_{i+1} - t_i)|` over the grid.
    pub translation_residual: f64,
    /// Largest `|z_j|`, `j ≠ α`, in the same comparison.
    pub transverse_residual: f64,
}

/// Charts where the tangent slot is `f_α = Σ a_i f_i` with `f_α(γ(t)) = γ'(t)`.
pub fn rectifying_family(
    system: &ControlAffineSystem,
    path: &dyn Path,
    grid: &[f64],
    rank_tol: f64,
) -> Result<RectifyingFamily> {
    let &t0 = grid
        .first()
        .ok_or_else(|| Error::Precondition("empty grid".into()))?;
    let mut closure = BracketClosure::new(system);
    let mut degree = None;
    let mut drift_is_velocity = system.drift().is_some();
    for &t in grid {
        let q = path.position(t);
        let v = path.velocity(t);
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroVelocity { t });
        }
        let layers = Layers::at(&mut closure, &q, DEFAULT_DEPTH, rank_tol);
        let k = layers.level_of(&v).ok_or(Error::Hormander {
            depth: DEFAULT_DEPTH,
            rank: layers.dims().last().copied().unwrap_or(0),
            dim: q.len(),
        })?;
        match degree {
            None => degree = Some(k),
            Some(first) if first != k => return Err(Error::TangencyVaries { first, found: k, t }),
            _ => {}
        }
        if let Some(f0) = system.drift() {
            let d = f0.eval(&q);
            let gap: f64 = d.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            drift_is_velocity &= gap <= rank_tol * size.max(1.0);
        }
    }
    let k = degree.expect("nonempty grid");

    let q0 = path.position(t0);
    let (template, alpha) = if drift_is_velocity {
        let chart = build_drift_chart(system, &q0, rank_tol)?;
        let l = chart.drift_slot.expect("drift slot");
        (chart, l)
    } else {
        let s = match system.drift() {
            Some(_) => drift_order(system, &q0, rank_tol)?,
            None => 0,
        };
        if s == k {
            let f0 = system.drift().expect("drift order set");
            for &t in grid {
                let q = path.position(t);
                let layers = Layers::at(&mut closure, &q, DEFAULT_DEPTH, rank_tol);
                let diff: Vec<f64> = f0.eval(&q).iter().zip(path.velocity(t)).map(|(a, b)| a - b).collect();
                if layers.contains_with(s - 1, &[], &diff) {
                    return Err(Error::NonTangency { t });
                }
            }
        }
        let base = adapted_frame_at(system, &q0, rank_tol)?;
        let tangent = tangent_entry(&base, &path.velocity(t0), &q0, k)?;
        let mut seeds = vec![tangent];
        if s > 0 {
            seeds.push(FrameEntry {
                label: FrameLabel::Drift,
                field: system.drift().expect("drift").clone(),
                weight: s,
            });
        }
        let frame = greedy_frame(&mut closure, &q0, rank_tol, seeds)?;
        let alpha = frame
            .entries
            .iter()
            .position(|e| e.label == FrameLabel::Tangent)
            .expect("tangent seeded first at its weight");
        let last: Vec<usize> = match frame.drift_slot {
            Some(l) => vec![alpha, l],
            None => vec![alpha],
        };
        let order = order_with_last(q0.len(), &last);
        (PrivilegedChart::from_frame(frame, order)?, alpha)
    };

    let base_frame = adapted_frame_at(system, &q0, rank_tol)?;
    let mut charts = Vec::with_capacity(grid.len());
    for &t in grid {
        let q = path.position(t);
        let mut frame = template.frame.rebased(&q);
        if frame.entries[alpha].label == FrameLabel::Tangent {
            let base_here = base_frame.rebased(&q);
            frame.entries[alpha] = tangent_entry(&base_here, &path.velocity(t), &q, k)?;
        }
        if frame.conditioning_at(&q) < rank_tol {
            return Err(Error::FrameDegenerate { t });
        }
        charts.push(PrivilegedChart::from_frame(frame, template.order.clone())?);
    }

    let mut translation_residual: f64 = 0.0;
    let mut transverse_residual: f64 = 0.0;
    for i in 0..grid.len().saturating_sub(1) {
        let z = charts[i].to_coords(&path.position(grid[i + 1]))?;
        translation_residual = translation_residual.max((z[alpha] - (grid[i + 1] - grid[i])).abs());
        for (j, zj) in z.iter().enumerate() {
            if j != alpha {
                transverse_residual = transverse_residual.max(zj.abs());
            }
        }
    }
    Ok(RectifyingFamily {
        charts,
        alpha,
        degree: k,
        translation_residual,
        transverse_residual,
    })
}

fn tangent_entry(frame: &AdaptedFrame, v: &[f64], q: &[f64], k: usize) -> Result<FrameEntry> {
    let coeffs = frame
        .matrix_at(q)
        .lu()
        .solve(&DVector::from_column_slice(v))
        .ok_or(Error::FrameDegenerate { t: f64::NAN })?;
    let weights = frame.weights();
    let kept: Vec<f64> = coeffs
        .iter()
        .zip(&weights)
        .map(|(c, &w)| if w <= k { *c } else { 0.0 })
        .collect();
    let field = crate::field::VectorField::combination(&kept, &frame.fields())?;
    Ok(FrameEntry {
        label: FrameLabel::Tangent,
        field,
        weight: k,
    })
}

/// `Σ |z_i|^{1/w_i}`.
pub fn pseudo_norm(weights: &[usize], z: &[f64]) -> f64 {
    z.iter()
        .zip(weights)
        .map(|(v, &w)| match w {
            1 => v.abs(),
            2 => v.abs().sqrt(),
            _ => v.abs().powf(1.0 / w as f64),
        })
        .sum()
}

/// Anisotropic dilation `(λ^{w_i} z_i)`.
pub fn dilate(weights: &[usize], lambda: f64, z: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(weights)
        .map(|(v, &w)| v * lambda.powi(w as i32))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSpec {
    pub eta: f64,
    pub weights: Vec<usize>,
}

pub fn box_contains(spec: &BoxSpec, z: &[f64]) -> bool {
    z.iter()
        .zip(&spec.weights)
        .all(|(v, &w)| v.abs() <= spec.eta.powi(w as i32))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftBoxSpec {
    pub eta: f64,
    pub horizon: f64,
    pub weights: Vec<usize>,
    pub slot: usize,
    pub order: usize,
}

impl DriftBoxSpec {
    pub fn from_chart(chart: &PrivilegedChart, eta: f64, horizon: f64) -> Result<Self> {
        let slot = chart.drift_slot.ok_or(Error::DriftAbsent)?;
        Ok(DriftBoxSpec {
            eta,
            horizon,
            weights: chart.weights.clone(),
            slot,
            order: chart.weights[slot],
        })
    }

    fn box_spec(&self) -> BoxSpec {
        BoxSpec {
            eta: self.eta,
            weights: self.weights.clone(),
        }
    }
}

/// `z ∈ ⋃_{ξ∈[0,T]} (ξ e_ℓ + Box(η))`.
pub fn xi_contains(spec: &DriftBoxSpec, z: &[f64]) -> bool {
    let l = spec.slot;
    let others = z
        .iter()
        .zip(&spec.weights)
        .enumerate()
        .all(|(i, (v, &w))| i == l || v.abs() <= spec.eta.powi(w as i32));
    let half = spec.eta.powi(spec.weights[l] as i32);
    let lo = (z[l] - half).max(0.0);
    let hi = (z[l] + half).min(spec.horizon);
    others && lo <= hi
}

/// The outer set of the drifted ball-box sandwich.
pub fn pi_contains(spec: &DriftBoxSpec, z: &[f64]) -> bool {
    if box_contains(&spec.box_spec(), z) {
        return true;
    }
    let (l, s, eta) = (spec.slot, spec.order, spec.eta);
    let xi = spec.horizon.min(z[l]);
    if !(xi > 0.0) || z[l] - xi > eta.powi(s as i32) {
        return false;
    }
    z.iter().zip(&spec.weights).enumerate().all(|(i, (v, &w))| {
        if i == l {
            return true;
        }
        let bound = if w <= s {
            eta.powi(w as i32) + eta * xi.powf(w as f64 / s as f64)
        } else {
            eta * (eta + xi.powf(1.0 / s as f64)).powi(w as i32 - 1)
        };
        v.abs() <= bound
    })
}
