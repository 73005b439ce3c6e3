//! Vector fields, Lie brackets and control-affine systems.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, ParseError, Result};
use crate::expr::{parse_components, ScalarExpr, Tape, Variables};

struct Inner {
    components: Vec<ScalarExpr>,
    tape: Tape,
    jacobian: OnceLock<(Vec<ScalarExpr>, Tape)>,
}

/// A smooth vector field on R^n with symbolic components.
#[derive(Clone)]
pub struct VectorField(Arc<Inner>);

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField[{self}]")
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl PartialEq for VectorField {
    fn eq(&self, other: &Self) -> bool {
        self.0.components == other.0.components
    }
}

impl VectorField {
    pub fn new(components: Vec<ScalarExpr>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::Precondition("vector field needs at least one component".into()));
        }
        if let Some(bad) = components.iter().find(|c| c.arity() > dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.arity(),
            });
        }
        let tape = Tape::new(&components);
        Ok(VectorField(Arc::new(Inner {
            components,
            tape,
            jacobian: OnceLock::new(),
        })))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(&vec![0.0; dim])
    }

    pub fn constant(v: &[f64]) -> Self {
        Self::new(v.iter().map(|&c| ScalarExpr::constant(c)).collect()).expect("nonempty")
    }

    /// The coordinate field `∂_i` (zero-based).
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self::constant(&v)
    }

    pub fn dim(&self) -> usize {
        self.0.components.len()
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.0.components
    }

    pub fn is_zero(&self) -> bool {
        self.0.components.iter().all(ScalarExpr::is_zero)
    }

    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(q, &mut out);
        out
    }

    pub fn eval_into(&self, q: &[f64], out: &mut [f64]) {
        self.0.tape.eval_into(q, out);
    }

    /// Evaluates and rejects non-finite results.
    pub fn try_eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let v = self.eval(q);
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!(" evaluating field at {q:?}")))
        }
    }

    fn jac(&self) -> &(Vec<ScalarExpr>, Tape) {
        self.0.jacobian.get_or_init(|| {
            let n = self.dim();
            let mut entries = Vec::with_capacity(n * n);
            for c in &self.0.components {
                for j in 0..n {
                    entries.push(c.derivative(j));
                }
            }
            let tape = Tape::new(&entries);
            (entries, tape)
        })
    }

    /// Symbolic Jacobian, row-major: entry `(i, j)` is `∂_j f_i`.
    pub fn jacobian_exprs(&self) -> &[ScalarExpr] {
        &self.jac().0
    }

    /// Row-major Jacobian at `q`.
    pub fn jacobian_into(&self, q: &[f64], out: &mut [f64]) {
        self.jac().1.eval_into(q, out);
    }

    pub fn jacobian(&self, q: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        self.jacobian_into(q, &mut out);
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let k = ScalarExpr::constant(c);
        Self::new(self.0.components.iter().map(|e| k.mul(e)).collect()).expect("same dim")
    }

    pub fn scale_by(&self, a: &ScalarExpr) -> Self {
        Self::new(self.0.components.iter().map(|e| a.mul(e)).collect()).expect("same dim")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Self::new(
            self.0
                .components
                .iter()
                .zip(other.components())
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    /// `Σ c_i f_i` over fields of equal dimension.
    pub fn combination(coeffs: &[f64], fields: &[VectorField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Precondition("empty combination".into()))?;
        let mut acc = Self::zero(first.dim());
        for (c, f) in coeffs.iter().zip(fields) {
            if *c != 0.0 {
                acc = acc.add(&f.scale(*c))?;
            }
        }
        Ok(acc)
    }
}

fn check_dims(f: &VectorField, g: &VectorField) -> Result<()> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        });
    }
    Ok(())
}

/// Parses a field from comma separated components in `x1..xn`.
pub fn parse_field(source: &str, dim: usize) -> Result<VectorField> {
    let parts = parse_components(source, &Variables::Indexed(dim))?;
    if parts.len() != dim {
        return Err(ParseError::DimensionMismatch {
            expected: dim,
            found: parts.len(),
        }
        .into());
    }
    VectorField::new(parts)
}

/// `[f, g] = (Dg) f - (Df) g`.
pub fn lie_bracket(f: &VectorField, g: &VectorField) -> Result<VectorField> {
    check_dims(f, g)?;
    let n = f.dim();
    let (df, dg) = (f.jacobian_exprs(), g.jacobian_exprs());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = ScalarExpr::zero();
        for j in 0..n {
            acc = acc.add(&dg[i * n + j].mul(&f.components()[j]));
            acc = acc.sub(&df[i * n + j].mul(&g.components()[j]));
        }
        out.push(acc);
    }
    VectorField::new(out)
}

/// `q' = f0(q) + Σ u_i f_i(q)` on R^n.
#[derive(Clone, Debug)]
pub struct ControlAffineSystem {
    pub label: String,
    dim: usize,
    drift: Option<VectorField>,
    controlled: Vec<VectorField>,
}

impl ControlAffineSystem {
    pub fn new(
        label: impl Into<String>,
        drift: Option<VectorField>,
        controlled: Vec<VectorField>,
    ) -> Result<Self> {
        let first = drift
            .as_ref()
            .or(controlled.first())
            .ok_or_else(|| Error::Precondition("system has no fields".into()))?;
        let dim = first.dim();
        for f in drift.iter().chain(&controlled) {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.dim(),
                });
            }
        }
        if controlled.is_empty() {
            return Err(Error::Precondition("system has no controlled fields".into()));
        }
        Ok(ControlAffineSystem {
            label: label.into(),
            dim,
            drift,
            controlled,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of controls.
    pub fn m(&self) -> usize {
        self.controlled.len()
    }

    pub fn drift(&self) -> Option<&VectorField> {
        self.drift.as_ref()
    }

    pub fn controlled(&self) -> &[VectorField] {
        &self.controlled
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    /// The driftless system on the controlled fields.
    pub fn small(&self) -> Self {
        ControlAffineSystem {
            label: format!("{}/small", self.label),
            dim: self.dim,
            drift: None,
            controlled: self.controlled.clone(),
        }
    }

    /// The driftless system with the drift prepended as a control.
    pub fn big(&self) -> Self {
        let mut controlled = Vec::with_capacity(self.controlled.len() + 1);
        controlled.extend(self.drift.iter().cloned());
        controlled.extend(self.controlled.iter().cloned());
        ControlAffineSystem {
            label: format!("{}/big", self.label),
            dim: self.dim,
            drift: None,
            controlled,
        }
    }

    pub fn with_drift(&self, drift: VectorField) -> Result<Self> {
        Self::new(self.label.clone(), Some(drift), self.controlled.clone())
    }

    /// Evaluates `f0(q) + Σ u_i f_i(q)`.
    pub fn dynamics(&self, q: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        if let Some(f0) = &self.drift {
            f0.eval_into(q, &mut out);
        }
        for (ui, f) in u.iter().zip(&self.controlled) {
            if *ui != 0.0 {
                f.eval_into(q, &mut tmp);
                for k in 0..n {
                    out[k] += ui * tmp[k];
                }
            }
        }
        out
    }
}
