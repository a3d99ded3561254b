//! Vectors in ℓ²(ℕ) and sampled functions in L²(ℝ).
//!
//! Both kinds implement [`Element`], the small Hilbert-space interface the
//! rest of the crate is written against. Amplitudes are always complex.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hilbert-space operations shared by sequences and sampled functions.
pub trait Element: Clone + std::fmt::Debug {
    /// Sesquilinear inner product, linear in `self`.
    fn inner(&self, other: &Self) -> Result<Complex64>;

    fn norm_sq(&self) -> f64;

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    fn is_zero(&self) -> bool;

    fn scaled(&self, c: Complex64) -> Self;

    /// `self + c·other`.
    fn add_scaled(&self, other: &Self, c: Complex64) -> Result<Self>;

    fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, Complex64::new(-1.0, 0.0))
    }

    /// The zero vector of the same kind (and grid).
    fn zero_like(&self) -> Self;

    /// Errors unless the two vectors live in the same space.
    fn check_compatible(&self, other: &Self) -> Result<()> {
        self.zero_like().inner(&other.zero_like()).map(|_| ())
    }
}

/// Vectors whose nonzero part lies in a bounded run of native indices
/// (coordinates for sequences, grid cells for sampled functions).
pub trait Supported {
    /// Half-open index range `[start, end)` outside which the vector
    /// vanishes; `None` for the zero vector.
    fn support_hull(&self) -> Option<(i64, i64)>;
}

impl Supported for CoordinateVector {
    fn support_hull(&self) -> Option<(i64, i64)> {
        Some((self.min_index()? as i64, self.max_index()? as i64 + 1))
    }
}

impl Supported for SampledFunction {
    fn support_hull(&self) -> Option<(i64, i64)> {
        self.support_steps()
    }
}

/// A finitely supported vector in ℓ²(ℕ), indexed from 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "CoordinateRepr", into = "CoordinateRepr")]
pub struct CoordinateVector {
    entries: BTreeMap<usize, Complex64>,
    support_bound: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct CoordinateRepr {
    // String keys: JSON object keys, and untagged enums buffer them as text.
    entries: BTreeMap<String, Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support_bound: Option<usize>,
}

impl TryFrom<CoordinateRepr> for CoordinateVector {
    type Error = Error;

    fn try_from(repr: CoordinateRepr) -> Result<Self> {
        let entries = repr
            .entries
            .into_iter()
            .map(|(key, c)| {
                key.trim()
                    .parse::<usize>()
                    .map(|j| (j, c))
                    .map_err(|_| Error::precondition("entries", format!("bad index `{key}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let v = CoordinateVector::from_entries(entries)?;
        match repr.support_bound {
            Some(bound) => v.with_support_bound(bound),
            None => Ok(v),
        }
    }
}

impl From<CoordinateVector> for CoordinateRepr {
    fn from(v: CoordinateVector) -> Self {
        CoordinateRepr {
            entries: v.entries.into_iter().map(|(j, c)| (j.to_string(), c)).collect(),
            support_bound: v.support_bound,
        }
    }
}

impl CoordinateVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The canonical basis vector e_k.
    ///
    /// Panics if `k == 0`.
    pub fn basis(k: usize) -> Self {
        assert!(k >= 1, "sequence indices start at 1");
        let mut entries = BTreeMap::new();
        entries.insert(k, Complex64::new(1.0, 0.0));
        Self {
            entries,
            support_bound: None,
        }
    }

    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Complex64)>,
    {
        let mut map = BTreeMap::new();
        for (j, c) in entries {
            if j == 0 {
                return Err(Error::InvalidIndex(j));
            }
            let slot = map.entry(j).or_insert(ZERO);
            *slot += c;
        }
        map.retain(|_, c| *c != ZERO);
        Ok(Self {
            entries: map,
            support_bound: None,
        })
    }

    /// Real-valued convenience constructor.
    pub fn from_real<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        Self::from_entries(
            entries
                .into_iter()
                .map(|(j, x)| (j, Complex64::new(x, 0.0))),
        )
    }

    pub fn with_support_bound(mut self, bound: usize) -> Result<Self> {
        if let Some(max) = self.max_index() {
            if max > bound {
                return Err(Error::SupportBound { index: max, bound });
            }
        }
        self.support_bound = Some(bound);
        Ok(self)
    }

    pub fn support_bound(&self) -> Option<usize> {
        self.support_bound
    }

    pub fn get(&self, j: usize) -> Complex64 {
        self.entries.get(&j).copied().unwrap_or(ZERO)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.entries.iter().map(|(&j, &c)| (j, c))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn min_index(&self) -> Option<usize> {
        self.entries.keys().next().copied()
    }

    /// Largest index carrying a nonzero coordinate.
    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    /// (x₁, x₂, …) ↦ (x_{p+1}, x_{p+2}, …); the first `p` coordinates fall off.
    pub fn shift_left(&self, p: usize) -> Self {
        let entries = self
            .entries
            .range(p + 1..)
            .map(|(&j, &c)| (j - p, c))
            .collect();
        Self {
            entries,
            support_bound: self.support_bound.map(|b| b.saturating_sub(p).max(1)),
        }
    }

    /// (x₁, x₂, …) ↦ (0, …, 0, x₁, x₂, …) with `p` leading zeros.
    pub fn shift_right(&self, p: usize) -> Self {
        let entries = self.entries.iter().map(|(&j, &c)| (j + p, c)).collect();
        Self {
            entries,
            support_bound: self.support_bound.map(|b| b + p),
        }
    }

    pub fn map_amplitudes(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut entries: BTreeMap<usize, Complex64> =
            self.entries.iter().map(|(&j, &c)| (j, f(c))).collect();
        entries.retain(|_, c| *c != ZERO);
        Self {
            entries,
            support_bound: self.support_bound,
        }
    }
}

impl Element for CoordinateVector {
    fn inner(&self, other: &Self) -> Result<Complex64> {
        let (small, large, swap) = if self.nnz() <= other.nnz() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = ZERO;
        for (j, c) in small.entries() {
            if let Some(d) = large.entries.get(&j) {
                acc += if swap { d * c.conj() } else { c * d.conj() };
            }
        }
        Ok(acc)
    }

    fn norm_sq(&self) -> f64 {
        self.entries.values().fold(0.0, |acc, c| acc + c.norm_sqr())
    }

    fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn scaled(&self, c: Complex64) -> Self {
        self.map_amplitudes(|x| x * c)
    }

    fn add_scaled(&self, other: &Self, c: Complex64) -> Result<Self> {
        let mut entries = self.entries.clone();
        for (j, d) in other.entries() {
            *entries.entry(j).or_insert(ZERO) += c * d;
        }
        entries.retain(|_, x| *x != ZERO);
        let support_bound = match (self.support_bound, other.support_bound) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Ok(Self {
            entries,
            support_bound,
        })
    }

    fn zero_like(&self) -> Self {
        Self::zero()
    }
}

/// A compactly supported function on ℝ, sampled at the left endpoints of the
/// grid cells [i/q, (i+1)/q).
///
/// Sample `i` stands for the value on its whole cell, so the inner product is
/// the exact L² inner product of the piecewise-constant interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledRepr", into = "SampledRepr")]
pub struct SampledFunction {
    q: u32,
    i0: i64,
    samples: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SampledRepr {
    q: u32,
    i0: i64,
    samples: Vec<Complex64>,
}

impl TryFrom<SampledRepr> for SampledFunction {
    type Error = Error;

    fn try_from(repr: SampledRepr) -> Result<Self> {
        SampledFunction::new(repr.q, repr.i0, repr.samples)
    }
}

impl From<SampledFunction> for SampledRepr {
    fn from(f: SampledFunction) -> Self {
        SampledRepr {
            q: f.q,
            i0: f.i0,
            samples: f.samples,
        }
    }
}

impl SampledFunction {
    pub fn new(q: u32, i0: i64, samples: Vec<Complex64>) -> Result<Self> {
        if q == 0 {
            return Err(Error::precondition("q", "grid denominator must be positive"));
        }
        let mut f = Self { q, i0, samples };
        f.trim();
        Ok(f)
    }

    pub fn zero(q: u32) -> Self {
        Self {
            q: q.max(1),
            i0: 0,
            samples: Vec::new(),
        }
    }

    /// χ over the cells `start..end` (grid units), i.e. the interval
    /// [start/q, end/q).
    pub fn indicator_steps(q: u32, start: i64, end: i64) -> Result<Self> {
        let len = (end - start).max(0) as usize;
        Self::new(q, start, vec![Complex64::new(1.0, 0.0); len])
    }

    /// χ_[a,b) with `a·q` and `b·q` integral.
    pub fn indicator(q: u32, a: f64, b: f64) -> Result<Self> {
        let start = grid_steps(a, q)?;
        let end = grid_steps(b, q)?;
        Self::indicator_steps(q, start, end)
    }

    fn trim(&mut self) {
        let first = self.samples.iter().position(|c| *c != ZERO);
        match first {
            None => {
                self.samples.clear();
                self.i0 = 0;
            }
            Some(first) => {
                let last = self.samples.iter().rposition(|c| *c != ZERO).unwrap();
                self.samples.truncate(last + 1);
                self.samples.drain(..first);
                self.i0 += first as i64;
            }
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn start_index(&self) -> i64 {
        self.i0
    }

    /// One past the last sample index.
    pub fn end_index(&self) -> i64 {
        self.i0 + self.samples.len() as i64
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn sample(&self, i: i64) -> Complex64 {
        if i < self.i0 {
            return ZERO;
        }
        self.samples
            .get((i - self.i0) as usize)
            .copied()
            .unwrap_or(ZERO)
    }

    /// Support as a cell range `(start, end)` in grid units; the function
    /// vanishes outside [start/q, end/q].
    pub fn support_steps(&self) -> Option<(i64, i64)> {
        if self.samples.is_empty() {
            None
        } else {
            Some((self.i0, self.end_index()))
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        let q = self.q as f64;
        self.support_steps()
            .map(|(a, b)| (a as f64 / q, b as f64 / q))
    }

    /// x ↦ f(x − steps/q).
    pub fn translate(&self, steps: i64) -> Self {
        Self {
            q: self.q,
            i0: if self.samples.is_empty() { 0 } else { self.i0 + steps },
            samples: self.samples.clone(),
        }
    }

    /// Keeps only cells with index ≥ `first`.
    pub fn keep_from(&self, first: i64) -> Self {
        let drop = (first - self.i0).clamp(0, self.samples.len() as i64) as usize;
        let mut f = Self {
            q: self.q,
            i0: self.i0 + drop as i64,
            samples: self.samples[drop..].to_vec(),
        };
        f.trim();
        f
    }

    /// Keeps only cells with index ≤ `last`.
    pub fn keep_through(&self, last: i64) -> Self {
        let keep = (last - self.i0 + 1).clamp(0, self.samples.len() as i64) as usize;
        let mut f = Self {
            q: self.q,
            i0: self.i0,
            samples: self.samples[..keep].to_vec(),
        };
        f.trim();
        f
    }

    /// Modulation x ↦ e^{2πi·freq·x} f(x), evaluated at the sample points.
    pub fn modulate(&self, freq: f64) -> Self {
        let q = self.q as f64;
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(off, &c)| {
                let x = (self.i0 + off as i64) as f64 / q;
                c * Complex64::from_polar(1.0, 2.0 * PI * freq * x)
            })
            .collect();
        let mut f = Self {
            q: self.q,
            i0: self.i0,
            samples,
        };
        f.trim();
        f
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.q != other.q {
            return Err(Error::IncompatibleOperands(format!(
                "grid denominators differ ({} vs {})",
                self.q, other.q
            )));
        }
        Ok(())
    }
}

/// Converts a real position or translation to grid units, requiring `x·q`
/// to be an integer.
pub fn grid_steps(x: f64, q: u32) -> Result<i64> {
    let scaled = x * q as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-9 * scaled.abs().max(1.0) {
        return Err(Error::GridMismatch {
            steps: x,
            q: 1,
            grid: q,
        });
    }
    Ok(rounded as i64)
}

impl Element for SampledFunction {
    fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_grid(other)?;
        if self.samples.is_empty() || other.samples.is_empty() {
            return Ok(ZERO);
        }
        let lo = self.i0.max(other.i0);
        let hi = self.end_index().min(other.end_index());
        let mut acc = ZERO;
        for i in lo..hi {
            acc += self.sample(i) * other.sample(i).conj();
        }
        Ok(acc / self.q as f64)
    }

    fn norm_sq(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, c| acc + c.norm_sqr()) / self.q as f64
    }

    fn is_zero(&self) -> bool {
        self.samples.is_empty()
    }

    fn scaled(&self, c: Complex64) -> Self {
        let mut f = Self {
            q: self.q,
            i0: self.i0,
            samples: self.samples.iter().map(|x| x * c).collect(),
        };
        f.trim();
        f
    }

    fn add_scaled(&self, other: &Self, c: Complex64) -> Result<Self> {
        self.check_grid(other)?;
        if other.samples.is_empty() {
            return Ok(self.clone());
        }
        if self.samples.is_empty() {
            return Ok(other.scaled(c));
        }
        let lo = self.i0.min(other.i0);
        let hi = self.end_index().max(other.end_index());
        let samples = (lo..hi)
            .map(|i| self.sample(i) + c * other.sample(i))
            .collect();
        Self::new(self.q, lo, samples)
    }

    fn zero_like(&self) -> Self {
        Self::zero(self.q)
    }
}

/// Either kind of vector, as read from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Vector {
    Sequence(CoordinateVector),
    Function(SampledFunction),
}

impl Vector {
    pub fn kind(&self) -> &'static str {
        match self {
            Vector::Sequence(_) => "sequence",
            Vector::Function(_) => "function",
        }
    }

    fn mismatch(&self, other: &Self) -> Error {
        Error::IncompatibleOperands(format!(
            "cannot combine a {} with a {}",
            self.kind(),
            other.kind()
        ))
    }
}

impl From<CoordinateVector> for Vector {
    fn from(v: CoordinateVector) -> Self {
        Vector::Sequence(v)
    }
}

impl From<SampledFunction> for Vector {
    fn from(f: SampledFunction) -> Self {
        Vector::Function(f)
    }
}

impl Element for Vector {
    fn inner(&self, other: &Self) -> Result<Complex64> {
        match (self, other) {
            (Vector::Sequence(a), Vector::Sequence(b)) => a.inner(b),
            (Vector::Function(a), Vector::Function(b)) => a.inner(b),
            _ => Err(self.mismatch(other)),
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            Vector::Sequence(v) => v.norm_sq(),
            Vector::Function(f) => f.norm_sq(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Vector::Sequence(v) => v.is_zero(),
            Vector::Function(f) => f.is_zero(),
        }
    }

    fn scaled(&self, c: Complex64) -> Self {
        match self {
            Vector::Sequence(v) => Vector::Sequence(v.scaled(c)),
            Vector::Function(f) => Vector::Function(f.scaled(c)),
        }
    }

    fn add_scaled(&self, other: &Self, c: Complex64) -> Result<Self> {
        match (self, other) {
            (Vector::Sequence(a), Vector::Sequence(b)) => Ok(Vector::Sequence(a.add_scaled(b, c)?)),
            (Vector::Function(a), Vector::Function(b)) => Ok(Vector::Function(a.add_scaled(b, c)?)),
            _ => Err(self.mismatch(other)),
        }
    }

    fn zero_like(&self) -> Self {
        match self {
            Vector::Sequence(v) => Vector::Sequence(v.zero_like()),
            Vector::Function(f) => Vector::Function(f.zero_like()),
        }
    }
}

/// Inner product of two vectors of the same kind.
pub fn inner<V: Element>(u: &V, v: &V) -> Result<Complex64> {
    u.inner(v)
}

pub fn norm_sq<V: Element>(u: &V) -> f64 {
    u.norm_sq()
}

pub fn basis_vector(k: usize) -> CoordinateVector {
    CoordinateVector::basis(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_orthonormality() {
        let e1 = basis_vector(1);
        let e2 = basis_vector(2);
        assert_eq!(inner(&e1, &e1).unwrap(), c(1.0));
        assert_eq!(inner(&e1, &e2).unwrap(), c(0.0));
        assert_eq!(basis_vector(3).entries().collect::<Vec<_>>(), vec![(3, c(1.0))]);
    }

    #[test]
    fn basis_extracts_coordinates() {
        let f = CoordinateVector::from_entries([(2, Complex64::new(0.5, -1.5)), (7, c(3.0))])
            .unwrap();
        for j in 1..10 {
            assert_eq!(inner(&f, &basis_vector(j)).unwrap(), f.get(j));
        }
    }

    #[test]
    fn norms() {
        assert_eq!(norm_sq(&CoordinateVector::zero()), 0.0);
        assert_eq!(norm_sq(&basis_vector(5)), 1.0);
        let v = CoordinateVector::from_real([(1, 2.0), (3, 2.0)]).unwrap();
        assert_eq!(norm_sq(&v), 8.0);
    }

    #[test]
    fn indicator_has_unit_norm_on_any_grid() {
        let chi = SampledFunction::indicator(4, 0.0, 1.0).unwrap();
        assert_eq!(chi.samples().len(), 4);
        assert_eq!(inner(&chi, &chi).unwrap(), c(1.0));
        assert_eq!(chi.support(), Some((0.0, 1.0)));
    }

    #[test]
    fn zero_index_rejected() {
        assert_eq!(
            CoordinateVector::from_real([(0, 1.0)]),
            Err(Error::InvalidIndex(0))
        );
    }

    #[test]
    fn canonical_form_drops_zeros() {
        let v = CoordinateVector::from_real([(1, 1.0), (2, 0.0), (1, -1.0), (4, 2.0)]).unwrap();
        assert_eq!(v.nnz(), 1);
        let f = SampledFunction::new(2, -3, vec![c(0.0), c(1.0), c(0.0), c(2.0), c(0.0)]).unwrap();
        assert_eq!(f.start_index(), -2);
        assert_eq!(f.samples().len(), 3);
    }

    #[test]
    fn support_bound_enforced() {
        let v = CoordinateVector::from_real([(4, 1.0)]).unwrap();
        assert!(v.clone().with_support_bound(4).is_ok());
        assert_eq!(
            v.with_support_bound(3),
            Err(Error::SupportBound { index: 4, bound: 3 })
        );
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let f = SampledFunction::indicator(4, 0.0, 1.0).unwrap();
        let g = SampledFunction::indicator(8, 0.0, 1.0).unwrap();
        assert!(matches!(inner(&f, &g), Err(Error::IncompatibleOperands(_))));
        let mixed = Vector::from(basis_vector(1)).inner(&Vector::from(f));
        assert!(matches!(mixed, Err(Error::IncompatibleOperands(_))));
    }

    #[test]
    fn json_literals() {
        let v: Vector = serde_json::from_str(r#"{"entries": {"1": [1.0, 0.0], "3": [0.0, -2.0]}}"#)
            .unwrap();
        let Vector::Sequence(v) = v else { panic!("expected a sequence") };
        assert_eq!(v.get(3), Complex64::new(0.0, -2.0));

        let f: Vector =
            serde_json::from_str(r#"{"q": 4, "i0": -4, "samples": [[1,0],[1,0],[1,0],[1,0]]}"#)
                .unwrap();
        let Vector::Function(f) = f else { panic!("expected a function") };
        assert_eq!(f.support(), Some((-1.0, 0.0)));

        let bad: Result<Vector, _> = serde_json::from_str(r#"{"entries": {"0": [1.0, 0.0]}}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn modulation_preserves_norm_and_support() {
        let g = SampledFunction::indicator(16, 0.0, 1.0).unwrap().translate(16);
        for m in -3..=3 {
            let h = g.modulate(m as f64 * 0.5);
            assert!((h.norm_sq() - g.norm_sq()).abs() < 1e-15);
            assert_eq!(h.support_steps(), g.support_steps());
        }
    }

    fn complex_entry() -> impl Strategy<Value = Complex64> {
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
    }

    fn sparse_vector() -> impl Strategy<Value = CoordinateVector> {
        prop::collection::btree_map(1usize..40, complex_entry(), 0..12)
            .prop_map(|m| CoordinateVector::from_entries(m).unwrap())
    }

    proptest! {
        #[test]
        fn serialization_roundtrip_is_canonical(v in sparse_vector()) {
            let text = serde_json::to_string(&v).unwrap();
            let back: CoordinateVector = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, v);
        }

        #[test]
        fn parallelogram_law(u in sparse_vector(), v in sparse_vector()) {
            let one = Complex64::new(1.0, 0.0);
            let plus = u.add_scaled(&v, one).unwrap().norm_sq();
            let minus = u.add_scaled(&v, -one).unwrap().norm_sq();
            let rhs = 2.0 * (u.norm_sq() + v.norm_sq());
            prop_assert!((plus + minus - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn inner_is_conjugate_symmetric(u in sparse_vector(), v in sparse_vector()) {
            let a = u.inner(&v).unwrap();
            let b = v.inner(&u).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-14);
        }
    }
}
