//! Finite-section frame algebra: Gram matrices, empirical frame bounds,
//! excess, operator gaps between two families and the ε-approximation test.
//!
//! Nothing here forms an operator on the ambient space. Every quantity is
//! read off a Gram matrix, either of one family, of the difference family,
//! or of the two families side by side (the joint Gram), so only Hermitian
//! eigensolves of size at most 2K are needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix, HermitianEigen, JACOBI_TOL};
use crate::vector::Element;

/// Default rank tolerance, relative to the largest Gram eigenvalue.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Absolute slack granted to each measured-versus-bound comparison in a
/// perturbation report.
pub const REPORT_SLACK: f64 = 1e-9;

/// G[j,k] = ⟨f_k, f_j⟩, so that G = U*U for the synthesis operator U.
pub fn gram_matrix<V: Element>(family: &[V]) -> Result<CMatrix> {
    let n = family.len();
    let mut g = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = family[k].inner(&family[j])?;
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
    }
    Ok(g)
}

fn eigen(g: &CMatrix, tol: f64) -> Result<HermitianEigen> {
    hermitian_eigen(g, JACOBI_TOL.min(tol))
}

fn check_same_length<V>(f: &[V], g: &[V]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    Ok(())
}

/// Optimal frame bounds of a finite family for its own span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
}

fn bounds_from_eigen(e: &HermitianEigen, tol: f64) -> Result<FrameBounds> {
    let upper = e.max();
    let cutoff = tol * upper;
    let lower = e
        .values
        .iter()
        .copied()
        .find(|&v| v > cutoff)
        .filter(|_| upper > 0.0)
        .ok_or(Error::DegenerateFamily)?;
    Ok(FrameBounds { lower, upper })
}

/// Smallest Gram eigenvalue above `tol`·(largest) and the largest one.
pub fn empirical_frame_bounds<V: Element>(family: &[V], tol: f64) -> Result<FrameBounds> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let e = eigen(&gram_matrix(family)?, tol)?;
    bounds_from_eigen(&e, tol)
}

fn rank_of(e: &HermitianEigen, tol: f64) -> usize {
    let top = e.max();
    if top <= 0.0 {
        0
    } else {
        e.rank_above(tol * top)
    }
}

/// K − rank of the Gram matrix, counting eigenvalues above `tol`·(largest).
pub fn excess_finite<V: Element>(family: &[V], tol: f64) -> Result<usize> {
    let e = eigen(&gram_matrix(family)?, tol)?;
    Ok(family.len() - rank_of(&e, tol))
}

fn differences<V: Element>(f: &[V], g: &[V]) -> Result<Vec<V>> {
    check_same_length(f, g)?;
    f.iter().zip(g).map(|(a, b)| a.sub(b)).collect()
}

/// ‖U_F − U_G‖, the largest singular value of the difference of the
/// synthesis operators.
pub fn synthesis_gap<V: Element>(f: &[V], g: &[V]) -> Result<f64> {
    let diff = differences(f, g)?;
    if diff.is_empty() {
        return Ok(0.0);
    }
    let e = eigen(&gram_matrix(&diff)?, JACOBI_TOL)?;
    Ok(e.max().max(0.0).sqrt())
}

pub fn is_eps_approximation<V: Element>(f: &[V], g: &[V], eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::precondition("epsilon", "must be positive"));
    }
    let gap = synthesis_gap(f, g)?;
    Ok(gap * gap <= eps)
}

/// ‖Σ c_k (f_k − g_k)‖² for one coefficient sequence.
pub fn difference_quadratic_form<V: Element>(
    f: &[V],
    g: &[V],
    coeffs: &[Complex64],
) -> Result<f64> {
    let diff = differences(f, g)?;
    if coeffs.len() != diff.len() {
        return Err(Error::LengthMismatch {
            left: coeffs.len(),
            right: diff.len(),
        });
    }
    let Some(first) = diff.first() else {
        return Ok(0.0);
    };
    let mut acc = first.zero_like();
    for (d, &c) in diff.iter().zip(coeffs) {
        acc = acc.add_scaled(d, c)?;
    }
    Ok(acc.norm_sq())
}

/// Σ_k ‖f_k − g_k‖².
pub fn pairwise_deficit<V: Element>(f: &[V], g: &[V]) -> Result<f64> {
    Ok(differences(f, g)?.iter().fold(0.0, |acc, d| acc + d.norm_sq()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationRow {
    pub k: usize,
    pub measured: f64,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationTable {
    pub holds: bool,
    pub rows: Vec<DominationRow>,
}

/// Compares ‖f_k − g_k‖² against ε·2^{−k}.
pub fn geometric_domination<V: Element>(f: &[V], g: &[V], eps: f64) -> Result<DominationTable> {
    let budgets: Vec<f64> = (1..=f.len()).map(|k| eps * 0.5f64.powi(k as i32)).collect();
    domination_with_budgets(f, g, &budgets)
}

/// Compares ‖f_k − g_k‖² against an explicit per-element budget.
pub fn domination_with_budgets<V: Element>(
    f: &[V],
    g: &[V],
    budgets: &[f64],
) -> Result<DominationTable> {
    let diff = differences(f, g)?;
    if budgets.len() != diff.len() {
        return Err(Error::LengthMismatch {
            left: budgets.len(),
            right: diff.len(),
        });
    }
    let rows: Vec<DominationRow> = diff
        .iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (d, &budget))| {
            let measured = d.norm_sq();
            DominationRow {
                k: i + 1,
                measured,
                budget,
                pass: measured <= budget,
            }
        })
        .collect();
    Ok(DominationTable {
        holds: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// Measured operator gaps beside the bounds they must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub epsilon: f64,
    pub synthesis_gap: f64,
    pub frame_op_gap: f64,
    pub inv_frame_op_gap: f64,
    pub bound_synthesis: f64,
    pub bound_frame_op: f64,
    pub bound_inv: f64,
    pub new_lower_bound: f64,
    pub new_upper_bound: f64,
    pub excess_original: usize,
    pub excess_perturbed: usize,
    pub all_bounds_hold: bool,
}

/// A [`PerturbationReport`] plus what it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationAnalysis {
    pub report: PerturbationReport,
    pub section_size: usize,
    /// Dimension of span(F) + span(G).
    pub joint_rank: usize,
    /// True when F and G do not span the same subspace; the inverse gap is
    /// then taken between pseudo-inverses on the joint span.
    pub spans_differ: bool,
    pub perturbed_bounds: FrameBounds,
}

impl PerturbationAnalysis {
    pub fn synthesis_ok(&self) -> bool {
        self.report.synthesis_gap <= self.report.bound_synthesis + REPORT_SLACK
    }

    pub fn frame_op_ok(&self) -> bool {
        self.report.frame_op_gap <= self.report.bound_frame_op + REPORT_SLACK
    }

    pub fn inverse_ok(&self) -> bool {
        self.report.inv_frame_op_gap <= self.report.bound_inv + REPORT_SLACK
    }

    pub fn frame_bounds_ok(&self) -> bool {
        self.perturbed_bounds.lower >= self.report.new_lower_bound - REPORT_SLACK
            && self.perturbed_bounds.upper <= self.report.new_upper_bound + REPORT_SLACK
    }

    pub fn excess_ok(&self) -> bool {
        self.report.excess_original == self.report.excess_perturbed
    }
}

/// Right-hand sides of the perturbation estimates for bounds A ≤ B and
/// tolerance ε < A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBounds {
    pub synthesis: f64,
    pub frame_op: f64,
    pub inverse: f64,
    pub new_lower: f64,
    pub new_upper: f64,
}

pub fn perturbation_bounds(eps: f64, lower: f64, upper: f64) -> Result<PerturbationBounds> {
    if !(eps > 0.0) {
        return Err(Error::precondition("epsilon", "must be positive"));
    }
    if !(lower > 0.0) || !(upper >= lower) {
        return Err(Error::precondition(
            "frame bounds",
            format!("need 0 < A <= B, got A={lower}, B={upper}"),
        ));
    }
    if eps >= lower {
        return Err(Error::precondition(
            "epsilon",
            format!("epsilon {eps} must be below the lower frame bound {lower}"),
        ));
    }
    let ra = (eps / lower).sqrt();
    let rb = (eps / upper).sqrt();
    let frame_op = (eps * upper).sqrt() * (2.0 + rb);
    let shrink = 1.0 - ra;
    Ok(PerturbationBounds {
        synthesis: eps.sqrt(),
        frame_op,
        inverse: frame_op / (lower * lower * shrink * shrink),
        new_lower: lower * shrink * shrink,
        new_upper: upper * (1.0 + rb) * (1.0 + rb),
    })
}

/// Coordinates of f_1..f_K, g_1..g_K in an orthonormal basis of their joint
/// span, read off the joint Gram. Returns the two r×K coordinate matrices.
fn joint_coordinates<V: Element>(f: &[V], g: &[V], tol: f64) -> Result<(CMatrix, CMatrix)> {
    let joint: Vec<V> = f.iter().chain(g).cloned().collect();
    let e = eigen(&gram_matrix(&joint)?, tol)?;
    let top = e.max();
    let cutoff = tol * top.max(0.0);
    let kept: Vec<usize> = (0..e.values.len())
        .filter(|&i| top > 0.0 && e.values[i] > cutoff)
        .collect();
    let n = joint.len();
    let coords = CMatrix::from_fn(kept.len(), n, |r, col| {
        let i = kept[r];
        e.vectors[(col, i)].conj() * e.values[i].sqrt()
    });
    let k = f.len();
    Ok((coords.columns(0..k), coords.columns(k..n)))
}

/// Full perturbation analysis of G against F with declared bounds A ≤ B.
pub fn perturbation_analysis<V: Element>(
    f: &[V],
    g: &[V],
    eps: f64,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<PerturbationAnalysis> {
    check_same_length(f, g)?;
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let bounds = perturbation_bounds(eps, lower, upper)?;

    let (uf, ug) = joint_coordinates(f, g, tol)?;
    let joint_rank = uf.rows();
    let sf = uf.matmul(&uf.adjoint());
    let sg = ug.matmul(&ug.adjoint());
    let frame_op_gap = eigen(&sf.sub(&sg), JACOBI_TOL)?.spectral_radius();

    let ef = eigen(&sf, tol)?;
    let eg = eigen(&sg, tol)?;
    let rank_f = rank_of(&ef, tol);
    let rank_g = rank_of(&eg, tol);
    let inv_f = ef.pseudo_inverse(tol * ef.max());
    let inv_g = eg.pseudo_inverse(tol * eg.max());
    let inv_frame_op_gap = eigen(&inv_f.sub(&inv_g), JACOBI_TOL)?.spectral_radius();

    let synthesis_gap = synthesis_gap(f, g)?;
    let perturbed_bounds = bounds_from_eigen(&eg, tol)?;
    let excess_original = f.len() - rank_f;
    let excess_perturbed = g.len() - rank_g;

    let mut analysis = PerturbationAnalysis {
        report: PerturbationReport {
            epsilon: eps,
            synthesis_gap,
            frame_op_gap,
            inv_frame_op_gap,
            bound_synthesis: bounds.synthesis,
            bound_frame_op: bounds.frame_op,
            bound_inv: bounds.inverse,
            new_lower_bound: bounds.new_lower,
            new_upper_bound: bounds.new_upper,
            excess_original,
            excess_perturbed,
            all_bounds_hold: false,
        },
        section_size: f.len(),
        joint_rank,
        spans_differ: rank_f != joint_rank || rank_g != joint_rank,
        perturbed_bounds,
    };
    analysis.report.all_bounds_hold = analysis.synthesis_ok()
        && analysis.frame_op_ok()
        && analysis.inverse_ok()
        && analysis.frame_bounds_ok()
        && analysis.excess_ok();
    Ok(analysis)
}

pub fn perturbation_report<V: Element>(
    f: &[V],
    g: &[V],
    eps: f64,
    lower: f64,
    upper: f64,
    tol: f64,
) -> Result<PerturbationReport> {
    Ok(perturbation_analysis(f, g, eps, lower, upper, tol)?.report)
}

/// Smallest eigenvalue of the Gram matrix of the normalized family. Positive
/// values certify linear independence up to rounding.
pub fn independence_margin<V: Element>(family: &[V]) -> Result<f64> {
    let normalized = family
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = v.norm();
            if n == 0.0 {
                Err(Error::ZeroVector { index: i + 1 })
            } else {
                Ok(v.scaled(Complex64::new(1.0 / n, 0.0)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if normalized.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let e = eigen(&gram_matrix(&normalized)?, JACOBI_TOL)?;
    Ok(e.min().max(0.0))
}
