//! Parametrized paths supplying position and velocity.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_components, ScalarExpr, Variables};
use crate::field::VectorField;
use crate::ode::{flow, Tolerance};

pub trait Path: Send + Sync {
    fn dim(&self) -> usize;
    /// Parameter interval `[a, b]`.
    fn domain(&self) -> (f64, f64);
    fn position(&self, t: f64) -> Vec<f64>;
    fn velocity(&self, t: f64) -> Vec<f64>;
}

/// Components given as expressions in a single parameter `t`.
#[derive(Clone, Debug)]
pub struct SymbolicPath {
    components: Vec<ScalarExpr>,
    derivatives: Vec<ScalarExpr>,
    domain: (f64, f64),
}

impl SymbolicPath {
    pub fn parse(source: &str, dim: usize, domain: (f64, f64)) -> Result<Self> {
        let components = parse_components(source, &Variables::Named(vec!["t".into()]))?;
        if components.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: components.len(),
            });
        }
        if !(domain.0 < domain.1) {
            return Err(Error::Precondition(format!("empty path domain {domain:?}")));
        }
        let derivatives = components.iter().map(|c| c.derivative(0)).collect();
        Ok(SymbolicPath {
            components,
            derivatives,
            domain,
        })
    }
}

impl Path for SymbolicPath {
    fn dim(&self) -> usize {
        self.components.len()
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn position(&self, t: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(&[t])).collect()
    }
    fn velocity(&self, t: f64) -> Vec<f64> {
        self.derivatives.iter().map(|c| c.eval(&[t])).collect()
    }
}

/// The path that stays at one point.
#[derive(Clone, Debug)]
pub struct ConstantPath {
    pub point: Vec<f64>,
    pub horizon: f64,
}

impl Path for ConstantPath {
    fn dim(&self) -> usize {
        self.point.len()
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, self.horizon)
    }
    fn position(&self, _t: f64) -> Vec<f64> {
        self.point.clone()
    }
    fn velocity(&self, _t: f64) -> Vec<f64> {
        vec![0.0; self.point.len()]
    }
}

/// `t ↦ e^{t f}(q)`, an integral curve of `f`.
#[derive(Clone, Debug)]
pub struct FlowPath {
    pub field: VectorField,
    pub start: Vec<f64>,
    pub horizon: f64,
}

impl Path for FlowPath {
    fn dim(&self) -> usize {
        self.start.len()
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, self.horizon)
    }
    fn position(&self, t: f64) -> Vec<f64> {
        flow(&self.field, &self.start, t, Tolerance::default()).expect("flow path integrable")
    }
    fn velocity(&self, t: f64) -> Vec<f64> {
        self.field.eval(&self.position(t))
    }
}

type PathFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// Closure-backed path.
#[derive(Clone)]
pub struct FnPath {
    dim: usize,
    domain: (f64, f64),
    position: Arc<PathFn>,
    velocity: Arc<PathFn>,
}

impl FnPath {
    pub fn new(
        dim: usize,
        domain: (f64, f64),
        position: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        velocity: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnPath {
            dim,
            domain,
            position: Arc::new(position),
            velocity: Arc::new(velocity),
        }
    }
}

impl Path for FnPath {
    fn dim(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn position(&self, t: f64) -> Vec<f64> {
        (self.position)(t)
    }
    fn velocity(&self, t: f64) -> Vec<f64> {
        (self.velocity)(t)
    }
}

/// `count` equally spaced parameters covering the domain, endpoints included.
pub fn uniform_grid(domain: (f64, f64), count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![domain.0],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    domain.1
                } else {
                    domain.0 + (domain.1 - domain.0) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}
