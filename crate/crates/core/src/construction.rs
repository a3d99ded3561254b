//! Machinery shared by the three constructions: the generator series
//! φ = Σ U^{α(n)} f_n, the orbit terms T^{α(k)}U^{α(n)} f_n, and the
//! suborbit elements T^{α(k)}φ.
//!
//! Orbit terms are always produced by composing the two closed-form operator
//! powers, so the power of λ attached to a term is exact integer arithmetic.
//! The residual f_k − T^{α(k)}φ is minus the sum of the terms with n ≠ k,
//! which never requires forming λ^{α(k)} as a double.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OrbitOperator;
use crate::scaled::{ln_add, sum_scaled, ScaledVector};
use crate::schedule::PowerSchedule;
use crate::vector::{Element, Supported};

/// A truncated generator series.
#[derive(Debug, Clone)]
pub struct Generator<V> {
    pub phi: ScaledVector<V>,
    pub n_terms: usize,
    /// Bound on the squared norm of everything left out of `phi`: the
    /// series beyond `n_terms` plus any term too small to add.
    pub tail_bound: f64,
    /// Norm of terms skipped while summing because they were below double
    /// resolution next to the leading term.
    pub dropped_norm: f64,
    /// Smallest and largest λ-exponent among the summed terms, as powers.
    pub exponent_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSummary {
    pub n_terms: usize,
    pub tail_bound: f64,
    pub dropped_norm: f64,
    pub min_lambda_exponent: f64,
    pub max_lambda_exponent: f64,
    pub phi_ln_norm: f64,
}

impl<V: Element> Generator<V> {
    pub fn summary(&self) -> GeneratorSummary {
        GeneratorSummary {
            n_terms: self.n_terms,
            tail_bound: self.tail_bound,
            dropped_norm: self.dropped_norm,
            min_lambda_exponent: self.exponent_range.0,
            max_lambda_exponent: self.exponent_range.1,
            phi_ln_norm: self.phi.ln_norm(),
        }
    }
}

fn check_inputs<V>(family: &[V], sched: &PowerSchedule, n_terms: usize, den: u32) -> Result<()> {
    if n_terms == 0 || n_terms > family.len() {
        return Err(Error::precondition(
            "n_terms",
            format!("must lie in 1..={}, got {n_terms}", family.len()),
        ));
    }
    sched.require_len(n_terms)?;
    if sched.denominator() != den {
        return Err(Error::precondition(
            "schedule",
            format!(
                "powers are counted in units of 1/{} but the operator uses 1/{den}",
                sched.denominator()
            ),
        ));
    }
    Ok(())
}

/// U^{α(n)} f_n for n = 1..=n_terms.
pub fn shifted_blocks<O: OrbitOperator>(
    op: &O,
    family: &[O::Vector],
    sched: &PowerSchedule,
    n_terms: usize,
) -> Result<Vec<ScaledVector<O::Vector>>> {
    check_inputs(family, sched, n_terms, op.denominator())?;
    Ok((1..=n_terms)
        .map(|n| op.backward(&op.lift(&family[n - 1]), sched.steps(n)))
        .collect())
}

/// Errors unless the supports of the blocks are pairwise disjoint.
pub fn check_disjoint<V: Element + Supported>(blocks: &[ScaledVector<V>]) -> Result<()> {
    let mut hulls: Vec<(i64, i64, usize)> = blocks
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.base().support_hull().map(|(s, e)| (s, e, i + 1)))
        .collect();
    hulls.sort();
    for w in hulls.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::ScheduleViolation {
                n: w[0].2.max(w[1].2),
                reason: format!("blocks {} and {} overlap", w[0].2.min(w[1].2), w[0].2.max(w[1].2)),
            });
        }
    }
    Ok(())
}

/// Sums the blocks into φ. `series_tail` bounds the squared norm of the
/// omitted series; skipped terms are added to it as norms.
pub fn assemble_generator<V: Element>(
    blocks: Vec<ScaledVector<V>>,
    zero: V,
    lambda: f64,
    denominator: u32,
    series_tail: f64,
) -> Result<Generator<V>> {
    let n_terms = blocks.len();
    let powers = blocks.iter().map(|b| b.lambda_power());
    let exponent_range = powers.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p), hi.max(p))
    });
    let sum = sum_scaled(&blocks, zero, lambda, denominator)?;
    let dropped_norm = sum.dropped_norm();
    let tail_bound = if dropped_norm > 0.0 {
        let t = series_tail.sqrt() + dropped_norm;
        t * t
    } else {
        series_tail
    };
    Ok(Generator {
        phi: sum.vector,
        n_terms,
        tail_bound,
        dropped_norm,
        exponent_range,
    })
}

/// The terms T^{α(k)}U^{α(n)} f_n of T^{α(k)}φ, split around n = k.
#[derive(Debug, Clone)]
pub struct OrbitTerms<V> {
    pub k: usize,
    /// n < k, nonzero terms only.
    pub back: Vec<(usize, ScaledVector<V>)>,
    /// n > k, nonzero terms only.
    pub forward: Vec<(usize, ScaledVector<V>)>,
    /// The n = k term, which must equal f_k.
    pub diagonal: ScaledVector<V>,
}

pub fn orbit_terms<O: OrbitOperator>(
    op: &O,
    family: &[O::Vector],
    sched: &PowerSchedule,
    k: usize,
    n_terms: usize,
) -> Result<OrbitTerms<O::Vector>>
where
    O::Vector: PartialEq,
{
    check_inputs(family, sched, n_terms, op.denominator())?;
    if k == 0 || k > n_terms {
        return Err(Error::OutOfRange { k, len: n_terms });
    }
    let ak = sched.steps(k);
    let mut back = Vec::new();
    let mut forward = Vec::new();
    let mut diagonal = None;
    for n in 1..=n_terms {
        let block = op.backward(&op.lift(&family[n - 1]), sched.steps(n));
        let term = op.forward(&block, ak);
        match n.cmp(&k) {
            std::cmp::Ordering::Equal => diagonal = Some(term),
            _ if term.is_zero() => {}
            std::cmp::Ordering::Less => back.push((n, term)),
            std::cmp::Ordering::Greater => forward.push((n, term)),
        }
    }
    let diagonal = diagonal.expect("k lies in 1..=n_terms");
    if diagonal.exponent() != 0 || diagonal.base() != &family[k - 1] {
        return Err(Error::ScheduleViolation {
            n: k,
            reason: "T^a U^a does not return the element unchanged".into(),
        });
    }
    Ok(OrbitTerms {
        k,
        back,
        forward,
        diagonal,
    })
}

/// Norms of the pieces of the (truncated) residual f_k − T^{α(k)}φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    /// ‖Σ_{n≠k} terms‖, including skipped-term mass.
    pub whole: f64,
    /// ‖Σ_{n<k} terms‖.
    pub back: f64,
    /// ‖Σ_{n>k} terms‖.
    pub forward: f64,
    /// ‖Σ_{n≠k} terms‖², formed without squaring a rounded norm.
    pub whole_sq: f64,
}

fn norm_sq_of_sum<V: Element>(
    terms: &[ScaledVector<V>],
    zero: &V,
    lambda: f64,
    den: u32,
) -> Result<f64> {
    if terms.is_empty() {
        return Ok(0.0);
    }
    let s = sum_scaled(terms, zero.clone(), lambda, den)?;
    if s.ln_dropped_norm == f64::NEG_INFINITY {
        Ok(s.vector.norm_sq())
    } else {
        Ok((2.0 * ln_add(s.vector.ln_norm(), s.ln_dropped_norm)).exp())
    }
}

impl<V: Element> OrbitTerms<V> {
    pub fn residual_norms(&self) -> Result<ResidualNorms> {
        let lambda = self.diagonal.lambda();
        let den = self.diagonal.denominator();
        let zero = self.diagonal.base().zero_like();
        let back: Vec<_> = self.back.iter().map(|(_, t)| t.clone()).collect();
        let forward: Vec<_> = self.forward.iter().map(|(_, t)| t.clone()).collect();
        let all: Vec<_> = back.iter().chain(&forward).cloned().collect();
        let whole_sq = norm_sq_of_sum(&all, &zero, lambda, den)?;
        Ok(ResidualNorms {
            whole: whole_sq.sqrt(),
            back: norm_sq_of_sum(&back, &zero, lambda, den)?.sqrt(),
            forward: norm_sq_of_sum(&forward, &zero, lambda, den)?.sqrt(),
            whole_sq,
        })
    }

    /// T^{α(k)}φ as a plain vector.
    pub fn suborbit_element(&self) -> Result<V> {
        let lambda = self.diagonal.lambda();
        let den = self.diagonal.denominator();
        let all: Vec<_> = std::iter::once(self.diagonal.clone())
            .chain(self.back.iter().map(|(_, t)| t.clone()))
            .chain(self.forward.iter().map(|(_, t)| t.clone()))
            .collect();
        sum_scaled(&all, self.diagonal.base().zero_like(), lambda, den)?
            .vector
            .materialize()
    }
}

/// T^{α(k)}φ for k = 1..=count.
pub fn suborbit<O: OrbitOperator>(
    op: &O,
    family: &[O::Vector],
    sched: &PowerSchedule,
    count: usize,
    n_terms: usize,
) -> Result<Vec<O::Vector>>
where
    O::Vector: PartialEq,
{
    (1..=count)
        .map(|k| orbit_terms(op, family, sched, k, n_terms)?.suborbit_element())
        .collect()
}

/// ln(B λ²/(λ²−1) λ^{−2·gap}); the residual bound for orthogonal blocks.
pub fn ln_orthogonal_bound(upper: f64, lambda: f64, gap: f64) -> f64 {
    let l2 = lambda * lambda;
    upper.ln() + (l2 / (l2 - 1.0)).ln() - 2.0 * gap * lambda.ln()
}

pub fn orthogonal_bound(upper: f64, lambda: f64, gap: f64) -> f64 {
    ln_orthogonal_bound(upper, lambda, gap).exp()
}

/// α(to) − α(from), computed in grid units so that `span(s, k, k + 1)`
/// equals `s.gap(k)` bit for bit.
pub fn span(sched: &PowerSchedule, from: usize, to: usize) -> f64 {
    (sched.steps(to) - sched.steps(from)) as f64 / sched.denominator() as f64
}

/// Relative slack when comparing a measured residual with its bound.
pub const BOUND_SLACK: f64 = 1e-12;

/// One row of a residual verification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub k: usize,
    pub alpha_k: f64,
    pub gap: f64,
    /// Residual computed from the represented terms.
    pub measured: f64,
    /// Bound on what the represented terms leave out.
    pub tail: f64,
    pub bound: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Fills a row for the squared-norm estimate of the orthogonal-block
/// constructions: measured + tail must stay below both the bound and the
/// budget.
pub fn orthogonal_row<O: OrbitOperator>(
    op: &O,
    family: &[O::Vector],
    sched: &PowerSchedule,
    k: usize,
    n_terms: usize,
    upper: f64,
    budget: f64,
) -> Result<(ResidualRow, OrbitTerms<O::Vector>)>
where
    O::Vector: PartialEq,
{
    sched.require_len(n_terms + 1)?;
    let terms = orbit_terms(op, family, sched, k, n_terms)?;
    if let Some((n, _)) = terms.back.first() {
        return Err(Error::AnnihilationFailed { k, n: *n });
    }
    let norms = terms.residual_norms()?;
    let lambda = op.lambda();
    let measured = norms.whole_sq;
    let tail = orthogonal_bound(upper, lambda, span(sched, k, n_terms + 1));
    let bound = orthogonal_bound(upper, lambda, sched.gap(k));
    let total = measured + tail;
    let pass = total <= bound * (1.0 + BOUND_SLACK) && total <= budget * (1.0 + BOUND_SLACK);
    Ok((
        ResidualRow {
            k,
            alpha_k: sched.alpha(k),
            gap: sched.gap(k),
            measured,
            tail,
            bound,
            budget,
            pass,
        },
        terms,
    ))
}

/// Next power of two ≥ `x`, at least 2; the default upper bound B = 2^N
/// with N ≥ 1.
pub fn power_of_two_bound(x: f64) -> (u32, f64) {
    let n = if x <= 2.0 {
        1
    } else {
        let mut n = x.log2().ceil() as i32;
        // Guard against log2 rounding just below an exact power.
        while 2f64.powi(n) < x {
            n += 1;
        }
        n.max(1)
    };
    (n as u32, 2f64.powi(n))
}
