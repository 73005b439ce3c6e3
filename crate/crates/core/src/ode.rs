//! Dormand–Prince 5(4) integration and flows of vector fields.

use crate::error::{Error, Result};
use crate::field::VectorField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn relative(rtol: f64) -> Self {
        Tolerance {
            rtol,
            atol: rtol * 1e-3,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` in place.
///
/// The first trial step spans the whole interval; polynomial right-hand
/// sides of low degree are then integrated in a single step.
pub fn integrate<F>(rhs: F, t0: f64, t1: f64, y: &mut [f64], tol: Tolerance) -> Result<Stats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_limited(rhs, t0, t1, y, tol, 2_000_000)
}

/// [`integrate`] giving up with [`Error::StepUnderflow`] after `max_steps`
/// attempted steps.
pub fn integrate_limited<F>(mut rhs: F, t0: f64, t1: f64, y: &mut [f64], tol: Tolerance, max_steps: usize) -> Result<Stats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut stats = Stats::default();
    if t1 == t0 || n == 0 {
        return Ok(stats);
    }
    let dir = (t1 - t0).signum();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = t0;
    let mut h = (t1 - t0).abs();
    let mut fresh = true;
    let mut last_reject = false;
    let mut saw_nonfinite = false;

    rhs(t, y, &mut k[0]);
    stats.evaluations += 1;
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(" in right-hand side at t = {t}")));
    }

    loop {
        let remaining = (t1 - t).abs();
        if remaining <= 1e-15 * t1.abs().max(1.0) {
            break;
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        let stage = |k: &mut [Vec<f64>; 7], tmp: &mut Vec<f64>, idx: usize, a: &[f64], rhs: &mut F| {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    acc += aj * k[j][i];
                }
                tmp[i] = y[i] + hs * acc;
            }
            let (head, tail) = k.split_at_mut(idx);
            let _ = head;
            rhs(t + C[idx] * hs, tmp, &mut tail[0]);
        };
        stage(&mut k, &mut tmp, 1, &A2, &mut rhs);
        stage(&mut k, &mut tmp, 2, &A3, &mut rhs);
        stage(&mut k, &mut tmp, 3, &A4, &mut rhs);
        stage(&mut k, &mut tmp, 4, &A5, &mut rhs);
        stage(&mut k, &mut tmp, 5, &A6, &mut rhs);
        for i in 0..n {
            let mut acc = 0.0;
            for (j, bj) in B.iter().enumerate() {
                acc += bj * k[j][i];
            }
            ynew[i] = y[i] + hs * acc;
        }
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            rhs(t + hs, &ynew, &mut tail[0]);
        }
        stats.evaluations += 6;

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * k[j][i];
            }
            e *= hs;
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err += r * r;
            finite &= ynew[i].is_finite() && k[6][i].is_finite();
        }
        err = (err / n as f64).sqrt();
        if !finite || !err.is_finite() {
            saw_nonfinite = true;
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&ynew);
            let (head, tail) = k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            if last {
                break;
            }
            let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if last_reject {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_reject = false;
            fresh = false;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= fac;
            last_reject = true;
            if h < 1e-14 * t.abs().max(1.0) || (fresh && stats.rejected > 200) {
                return Err(if saw_nonfinite {
                    Error::NonFinite(format!(" integrating near t = {t}"))
                } else {
                    Error::StepUnderflow { t }
                });
            }
        }
        if stats.accepted + stats.rejected > max_steps {
            return Err(Error::StepUnderflow { t });
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(" at t = {t1}")));
    }
    Ok(stats)
}

/// `e^{t f}(q0)`.
pub fn flow(f: &VectorField, q0: &[f64], t: f64, tol: Tolerance) -> Result<Vec<f64>> {
    check_point(f, q0)?;
    let mut y = q0.to_vec();
    integrate(|_, q, out| f.eval_into(q, out), 0.0, t, &mut y, tol)?;
    Ok(y)
}

/// `e^{t f}(q0)` with its spatial derivative (row-major n×n).
pub fn flow_with_jacobian(
    f: &VectorField,
    q0: &[f64],
    t: f64,
    tol: Tolerance,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_point(f, q0)?;
    let n = f.dim();
    let mut y = vec![0.0; n + n * n];
    y[..n].copy_from_slice(q0);
    for i in 0..n {
        y[n + i * n + i] = 1.0;
    }
    let mut a = vec![0.0; n * n];
    integrate(
        |_, s, out| {
            let (q, phi) = s.split_at(n);
            f.eval_into(q, &mut out[..n]);
            f.jacobian_into(q, &mut a);
            variational(&a, phi, &mut out[n..], n, n);
        },
        0.0,
        t,
        &mut y,
        tol,
    )?;
    let phi = y.split_off(n);
    Ok((y, phi))
}

/// `out = A · M` for row-major `A` (n×n) and `M` (n×cols).
pub(crate) fn variational(a: &[f64], m: &[f64], out: &mut [f64], n: usize, cols: usize) {
    for i in 0..n {
        for c in 0..cols {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * m[k * cols + c];
            }
            out[i * cols + c] = acc;
        }
    }
}

/// The tangent vector `((e^{-t f0})_* g)(q)`, obtained by flowing to
/// `p = e^{t f0}(q)` and transporting `g(p)` back along the linearized flow.
pub fn flow_pushforward(
    f0: &VectorField,
    g: &VectorField,
    t: f64,
    q: &[f64],
    tol: Tolerance,
) -> Result<Vec<f64>> {
    check_point(f0, q)?;
    if f0.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f0.dim(),
            found: g.dim(),
        });
    }
    let n = f0.dim();
    let p = flow(f0, q, t, tol)?;
    let mut y = vec![0.0; 2 * n];
    y[..n].copy_from_slice(&p);
    g.eval_into(&p, &mut y[n..]);
    let mut a = vec![0.0; n * n];
    integrate(
        |_, s, out| {
            let (x, w) = s.split_at(n);
            f0.eval_into(x, &mut out[..n]);
            f0.jacobian_into(x, &mut a);
            variational(&a, w, &mut out[n..], n, 1);
        },
        t,
        0.0,
        &mut y,
        tol,
    )?;
    Ok(y.split_off(n))
}

/// Applies the steps in order, so the last entry is the outermost flow.
pub fn flow_compose(steps: &[(VectorField, f64)], q0: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    let mut q = q0.to_vec();
    for (f, t) in steps {
        if *t != 0.0 {
            q = flow(f, &q, *t, tol)?;
        }
    }
    Ok(q)
}

/// Flow commutator against `t²[f, g]` at a sequence of step sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorReport {
    /// `(t, |e^{-tg} e^{-tf} e^{tg} e^{tf} q - q - t²[f,g](q)| / t²)`.
    pub errors: Vec<(f64, f64)>,
    /// Least-squares slope of `log error` against `log t`; infinite when
    /// every error is at rounding level.
    pub order: f64,
}

pub fn commutator_consistency(f: &VectorField, g: &VectorField, q: &[f64], steps: &[f64]) -> Result<CommutatorReport> {
    check_point(f, q)?;
    if steps.len() < 2 || steps.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Precondition("need at least two positive step sizes".into()));
    }
    let tol = Tolerance {
        rtol: 1e-13,
        atol: 1e-15,
    };
    let b = crate::field::lie_bracket(f, g)?.eval(q);
    let mut errors = Vec::with_capacity(steps.len());
    for &t in steps {
        let p = flow_compose(&[(f.clone(), t), (g.clone(), t), (f.clone(), -t), (g.clone(), -t)], q, tol)?;
        let e = p
            .iter()
            .zip(q)
            .zip(&b)
            .map(|((pi, qi), bi)| (pi - qi - t * t * bi).powi(2))
            .sum::<f64>()
            .sqrt();
        errors.push((t, e / (t * t)));
    }
    let floor = 1e-9;
    let order = if errors.iter().all(|e| e.1 <= floor) {
        f64::INFINITY
    } else {
        let pts: Vec<(f64, f64)> = errors.iter().map(|(t, e)| (t.ln(), e.max(1e-300).ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(CommutatorReport { errors, order })
}

fn check_point(f: &VectorField, q: &[f64]) -> Result<()> {
    if f.dim() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: q.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::parse_field;

    #[test]
    fn exponential_growth() {
        let f = parse_field("x1", 1).unwrap();
        for t in [0.5, 1.0, -0.7, 2.0] {
            let q = flow(&f, &[1.0], t, Tolerance::default()).unwrap();
            assert!((q[0] - t.exp()).abs() <= 1e-8 * t.exp());
        }
    }

    #[test]
    fn identity_at_zero_time() {
        let f = parse_field("x2, -x1", 2).unwrap();
        assert_eq!(flow(&f, &[0.3, 0.4], 0.0, Tolerance::default()).unwrap(), vec![0.3, 0.4]);
    }

    #[test]
    fn rotation_over_a_full_turn() {
        let f = parse_field("-x2, x1", 2).unwrap();
        let q = flow(&f, &[1.0, 0.0], std::f64::consts::TAU, Tolerance::default()).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-7 && q[1].abs() < 1e-7);
    }

    #[test]
    fn jacobian_of_linear_flow() {
        let f = parse_field("x1", 1).unwrap();
        let (q, phi) = flow_with_jacobian(&f, &[2.0], 0.5, Tolerance::default()).unwrap();
        assert!((q[0] - 2.0 * 0.5f64.exp()).abs() < 1e-9);
        assert!((phi[0] - 0.5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = parse_field("x1^2", 1).unwrap();
        assert!(flow(&f, &[1.0], 2.0, Tolerance::default()).is_err());
    }

    #[test]
    fn heisenberg_composition() {
        let f1 = parse_field("1, 0, 0", 3).unwrap();
        let f2 = parse_field("0, 1, x1", 3).unwrap();
        let q = flow_compose(&[(f1, 0.7), (f2, -1.3)], &[0.0; 3], Tolerance::default()).unwrap();
        for (a, b) in q.iter().zip([0.7, -1.3, -0.91]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
