//! Bracket flags, weights, adapted frames, drift order and tangency degrees.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{lie_bracket, ControlAffineSystem, VectorField};
use crate::path::{uniform_grid, Path};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_DEPTH: usize = 6;

/// Right-nested bracket `[f_{i1}, [f_{i2}, [..., f_{ik}]]]` with one-based letters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BracketWord(pub Vec<usize>);

impl BracketWord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.0.len();
        for (i, a) in self.0.iter().enumerate() {
            if i + 1 < k {
                write!(f, "[f{a},")?;
            } else {
                write!(f, "f{a}")?;
            }
        }
        for _ in 1..k {
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// Brackets of the controlled fields, grown one length at a time.
/// Words whose bracket is identically zero are dropped.
#[derive(Clone, Debug)]
pub struct BracketClosure {
    generators: Vec<VectorField>,
    levels: Vec<Vec<(BracketWord, VectorField)>>,
}

impl BracketClosure {
    pub fn new(system: &ControlAffineSystem) -> Self {
        let generators = system.controlled().to_vec();
        let first = generators
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_zero())
            .map(|(i, f)| (BracketWord(vec![i + 1]), f.clone()))
            .collect();
        BracketClosure {
            generators,
            levels: vec![first],
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Extends the closure to words of length `len`.
    pub fn ensure(&mut self, len: usize) {
        while self.levels.len() < len {
            let prev = self.levels.last().expect("level one exists");
            let mut next = Vec::new();
            for (i, g) in self.generators.iter().enumerate() {
                for (w, f) in prev {
                    let b = lie_bracket(g, f).expect("generators share dimension");
                    if !b.is_zero() {
                        let mut word = Vec::with_capacity(w.len() + 1);
                        word.push(i + 1);
                        word.extend_from_slice(&w.0);
                        next.push((BracketWord(word), b));
                    }
                }
            }
            self.levels.push(next);
        }
    }

    pub fn level(&self, len: usize) -> &[(BracketWord, VectorField)] {
        &self.levels[len - 1]
    }

    /// All stored words, shortest first.
    pub fn iter(&self) -> impl Iterator<Item = &(BracketWord, VectorField)> {
        self.levels.iter().flatten()
    }
}

/// All nonzero bracket words up to length `max_len`, generators first.
pub fn bracket_closure(
    system: &ControlAffineSystem,
    max_len: usize,
) -> Result<Vec<(BracketWord, VectorField)>> {
    if max_len == 0 {
        return Err(Error::Precondition("closure length must be at least 1".into()));
    }
    let mut c = BracketClosure::new(system);
    c.ensure(max_len);
    Ok(c.iter().cloned().collect())
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * max).count()
}

/// Orthonormal basis of the column span.
fn span_basis(m: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max > 0.0 && svd.singular_values[i] > rank_tol * max)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

fn residual_ratio(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    if basis.ncols() == 0 {
        return 1.0;
    }
    let proj = basis * (basis.transpose() * v);
    (v - proj).norm() / norm
}

/// Evaluated layers `Δ^1(q) ⊂ Δ^2(q) ⊂ ...` at one point.
#[derive(Clone, Debug)]
pub struct Layers {
    pub point: Vec<f64>,
    /// Orthonormal basis of each layer.
    pub bases: Vec<DMatrix<f64>>,
    pub rank_tol: f64,
}

impl Layers {
    /// Builds layers until full rank or `depth`.
    pub fn at(closure: &mut BracketClosure, q: &[f64], depth: usize, rank_tol: f64) -> Layers {
        let n = q.len();
        let mut columns: Vec<f64> = Vec::new();
        let mut bases = Vec::new();
        for s in 1..=depth {
            closure.ensure(s);
            for (_, f) in closure.level(s) {
                columns.extend(f.eval(q));
            }
            let m = DMatrix::from_column_slice(n, columns.len() / n, &columns);
            let b = span_basis(&m, rank_tol);
            let full = b.ncols() == n;
            bases.push(b);
            if full {
                break;
            }
        }
        Layers {
            point: q.to_vec(),
            bases,
            rank_tol,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn is_full(&self) -> bool {
        self.bases.last().map(|b| b.ncols()) == Some(self.point.len())
    }

    /// Smallest `s` with `v ∈ Δ^s(q)`.
    pub fn level_of(&self, v: &[f64]) -> Option<usize> {
        let v = DVector::from_column_slice(v);
        self.bases
            .iter()
            .position(|b| residual_ratio(b, &v) <= self.rank_tol)
            .map(|i| i + 1)
    }

    /// Whether `v ∈ Δ^s(q) + span(extra)`; `s = 0` means the zero layer.
    pub fn contains_with(&self, s: usize, extra: &[Vec<f64>], v: &[f64]) -> bool {
        let n = self.point.len();
        let mut cols: Vec<f64> = Vec::new();
        if s > 0 {
            let b = &self.bases[(s - 1).min(self.bases.len() - 1)];
            cols.extend(b.iter());
        }
        for e in extra {
            cols.extend(e);
        }
        let m = DMatrix::from_column_slice(n, cols.len() / n, &cols);
        let basis = span_basis(&m, self.rank_tol);
        residual_ratio(&basis, &DVector::from_column_slice(v)) <= self.rank_tol
    }
}

/// Growth vector and weights at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Flag {
    pub point: Vec<f64>,
    pub dims: Vec<usize>,
    pub weights: Vec<usize>,
    pub step: usize,
}

impl Flag {
    fn from_dims(point: Vec<f64>, dims: Vec<usize>) -> Flag {
        let mut weights = Vec::new();
        let mut prev = 0;
        for (s, &d) in dims.iter().enumerate() {
            for _ in prev..d {
                weights.push(s + 1);
            }
            prev = prev.max(d);
        }
        Flag {
            point,
            step: dims.len(),
            dims,
            weights,
        }
    }

    pub fn growth_vector(&self) -> String {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

pub fn flag_at(system: &ControlAffineSystem, q: &[f64], rank_tol: f64) -> Result<Flag> {
    flag_at_depth(system, q, rank_tol, DEFAULT_DEPTH)
}

pub fn flag_at_depth(
    system: &ControlAffineSystem,
    q: &[f64],
    rank_tol: f64,
    depth: usize,
) -> Result<Flag> {
    let mut closure = BracketClosure::new(system);
    flag_with(&mut closure, q, rank_tol, depth)
}

fn flag_with(closure: &mut BracketClosure, q: &[f64], rank_tol: f64, depth: usize) -> Result<Flag> {
    let layers = Layers::at(closure, q, depth, rank_tol);
    if !layers.is_full() {
        return Err(Error::Hormander {
            depth,
            rank: layers.dims().last().copied().unwrap_or(0),
            dim: q.len(),
        });
    }
    Ok(Flag::from_dims(q.to_vec(), layers.dims()))
}

/// Outcome of comparing flags over a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EquiregularCertificate {
    pub passed: bool,
    pub dims: Vec<usize>,
    pub checked: usize,
    /// First point whose growth vector differs, with that growth vector.
    pub offending: Option<(Vec<f64>, Vec<usize>)>,
}

pub fn equiregular_check(
    system: &ControlAffineSystem,
    sample: &[Vec<f64>],
    rank_tol: f64,
) -> Result<EquiregularCertificate> {
    if sample.is_empty() {
        return Err(Error::Precondition("equiregularity needs a nonempty sample".into()));
    }
    let mut closure = BracketClosure::new(system);
    let first = flag_with(&mut closure, &sample[0], rank_tol, DEFAULT_DEPTH)?;
    for (k, q) in sample.iter().enumerate().skip(1) {
        let f = flag_with(&mut closure, q, rank_tol, DEFAULT_DEPTH)?;
        if f.dims != first.dims {
            return Ok(EquiregularCertificate {
                passed: false,
                dims: first.dims,
                checked: k + 1,
                offending: Some((q.clone(), f.dims)),
            });
        }
    }
    Ok(EquiregularCertificate {
        passed: true,
        dims: first.dims,
        checked: sample.len(),
        offending: None,
    })
}

/// Halton points in an axis-aligned box.
pub fn quasi_random_sample(bounds: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (1..=count as u64)
        .map(|i| {
            bounds
                .iter()
                .enumerate()
                .map(|(d, &(lo, hi))| {
                    let b = PRIMES[d % PRIMES.len()];
                    let (mut f, mut r, mut k) = (1.0, 0.0, i);
                    while k > 0 {
                        f /= b as f64;
                        r += f * (k % b) as f64;
                        k /= b;
                    }
                    lo + (hi - lo) * r
                })
                .collect()
        })
        .collect()
}

/// What a frame entry was built from.
#[derive(Clone, Debug, PartialEq)]
pub enum FrameLabel {
    Word(BracketWord),
    Drift,
    /// A constant combination of frame fields matching a path velocity.
    Tangent,
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameLabel::Word(w) => write!(f, "{w}"),
            FrameLabel::Drift => write!(f, "f0"),
            FrameLabel::Tangent => write!(f, "tangent"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameEntry {
    pub label: FrameLabel,
    pub field: VectorField,
    pub weight: usize,
}

/// `n` fields independent at the base point, sorted by weight.
#[derive(Clone, Debug)]
pub struct AdaptedFrame {
    pub base: Vec<f64>,
    pub entries: Vec<FrameEntry>,
    pub drift_slot: Option<usize>,
}

impl AdaptedFrame {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn weights(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn fields(&self) -> Vec<VectorField> {
        self.entries.iter().map(|e| e.field.clone()).collect()
    }

    /// Column matrix of the frame evaluated at `q`.
    pub fn matrix_at(&self, q: &[f64]) -> DMatrix<f64> {
        let n = q.len();
        let mut cols = Vec::with_capacity(n * n);
        for e in &self.entries {
            cols.extend(e.field.eval(q));
        }
        DMatrix::from_column_slice(n, self.entries.len(), &cols)
    }

    /// Ratio of smallest to largest singular value at `q`.
    pub fn conditioning_at(&self, q: &[f64]) -> f64 {
        let sv = self.matrix_at(q).singular_values();
        let max = sv.max();
        if max == 0.0 {
            0.0
        } else {
            sv.min() / max
        }
    }

    /// Same fields re-centred at another point.
    pub fn rebased(&self, q: &[f64]) -> AdaptedFrame {
        AdaptedFrame {
            base: q.to_vec(),
            entries: self.entries.clone(),
            drift_slot: self.drift_slot,
        }
    }
}

fn independent(cols: &[Vec<f64>], rank_tol: f64) -> bool {
    let n = cols[0].len();
    let flat: Vec<f64> = cols.iter().flatten().cloned().collect();
    let sv = DMatrix::from_column_slice(n, cols.len(), &flat).singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() >= rank_tol * max
}

/// Greedy frame over bracket words; `seeds` are tried first at their weight.
pub(crate) fn greedy_frame(
    closure: &mut BracketClosure,
    q: &[f64],
    rank_tol: f64,
    seeds: Vec<FrameEntry>,
) -> Result<AdaptedFrame> {
    let n = q.len();
    let mut chosen: Vec<FrameEntry> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let max_seed = seeds.iter().map(|e| e.weight).max().unwrap_or(0);
    for s in 1..=DEFAULT_DEPTH.max(max_seed) {
        if chosen.len() == n {
            break;
        }
        let mut candidates: Vec<FrameEntry> = seeds.iter().filter(|e| e.weight == s).cloned().collect();
        if s <= DEFAULT_DEPTH {
            closure.ensure(s);
            candidates.extend(closure.level(s).iter().map(|(w, f)| FrameEntry {
                label: FrameLabel::Word(w.clone()),
                field: f.clone(),
                weight: s,
            }));
        }
        for c in candidates {
            if chosen.len() == n {
                break;
            }
            let v = c.field.eval(q);
            values.push(v);
            if independent(&values, rank_tol) {
                chosen.push(c);
            } else {
                values.pop();
            }
        }
    }
    if chosen.len() < n {
        return Err(Error::FrameIncomplete {
            found: chosen.len(),
            dim: n,
        });
    }
    let drift_slot = chosen.iter().position(|e| e.label == FrameLabel::Drift);
    Ok(AdaptedFrame {
        base: q.to_vec(),
        entries: chosen,
        drift_slot,
    })
}

pub fn adapted_frame_at(
    system: &ControlAffineSystem,
    q: &[f64],
    rank_tol: f64,
) -> Result<AdaptedFrame> {
    let mut closure = BracketClosure::new(system);
    flag_with(&mut closure, q, rank_tol, DEFAULT_DEPTH)?;
    greedy_frame(&mut closure, q, rank_tol, Vec::new())
}

/// Smallest `s` with `f0(q) ∈ Δ^s(q)`; 0 when the drift vanishes at `q`.
pub fn drift_order(system: &ControlAffineSystem, q: &[f64], rank_tol: f64) -> Result<usize> {
    let f0 = system.drift().ok_or(Error::DriftAbsent)?;
    let v = f0.eval(q);
    if v.iter().all(|x| *x == 0.0) {
        return Ok(0);
    }
    let mut closure = BracketClosure::new(system);
    let layers = Layers::at(&mut closure, q, DEFAULT_DEPTH, rank_tol);
    if !layers.is_full() {
        return Err(Error::Hormander {
            depth: DEFAULT_DEPTH,
            rank: layers.dims().last().copied().unwrap_or(0),
            dim: q.len(),
        });
    }
    Ok(layers.level_of(&v).expect("full layer contains every vector"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftOrderReport {
    pub order: usize,
    pub constant: bool,
    pub offending: Option<(Vec<f64>, usize)>,
}

/// Checks that the drift order is the same over a sample.
pub fn verify_drift_order(
    system: &ControlAffineSystem,
    sample: &[Vec<f64>],
    rank_tol: f64,
) -> Result<DriftOrderReport> {
    let first = sample
        .first()
        .ok_or_else(|| Error::Precondition("empty sample".into()))?;
    let order = drift_order(system, first, rank_tol)?;
    for q in &sample[1..] {
        let s = drift_order(system, q, rank_tol)?;
        if s != order {
            return Ok(DriftOrderReport {
                order,
                constant: false,
                offending: Some((q.clone(), s)),
            });
        }
    }
    Ok(DriftOrderReport {
        order,
        constant: true,
        offending: None,
    })
}

/// Smallest `k` with `γ'(t) ∈ Δ^k(γ(t))`.
pub fn tangency_degree(
    system: &ControlAffineSystem,
    path: &dyn Path,
    t: f64,
    rank_tol: f64,
) -> Result<usize> {
    let mut closure = BracketClosure::new(system);
    degree_with(&mut closure, path, t, rank_tol)
}

fn degree_with(closure: &mut BracketClosure, path: &dyn Path, t: f64, rank_tol: f64) -> Result<usize> {
    let v = path.velocity(t);
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVelocity { t });
    }
    let q = path.position(t);
    let layers = Layers::at(closure, &q, DEFAULT_DEPTH, rank_tol);
    layers.level_of(&v).ok_or(Error::Hormander {
        depth: DEFAULT_DEPTH,
        rank: layers.dims().last().copied().unwrap_or(0),
        dim: q.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangencySweep {
    /// Maximum degree over the grid.
    pub kappa: usize,
    pub degrees: Vec<(f64, usize)>,
}

/// Degrees over a uniform grid of `count` parameters.
pub fn tangency_sweep(
    system: &ControlAffineSystem,
    path: &dyn Path,
    count: usize,
    rank_tol: f64,
) -> Result<TangencySweep> {
    let mut closure = BracketClosure::new(system);
    let mut degrees = Vec::with_capacity(count);
    for t in uniform_grid(path.domain(), count) {
        degrees.push((t, degree_with(&mut closure, path, t, rank_tol)?));
    }
    let kappa = degrees.iter().map(|d| d.1).max().unwrap_or(0);
    Ok(TangencySweep { kappa, degrees })
}
