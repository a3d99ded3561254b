//! Suborbits of the weighted left shift for β-exponentially localized frames
//! of ℓ²(ℕ): |⟨e_j, f_k⟩| ≤ C e^{−β|j−k|}, with ln λ < β.
//!
//! Unlike the finitely supported case, T^{α(k)} does not annihilate the
//! earlier blocks, so the residual has a backward part
//! Σ_{n<k} T^{α(k)−α(n)} f_n next to the usual forward part
//! Σ_{n>k} U^{α(n)−α(k)} f_n. Both are evaluated.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::approx_l2n::{setup, INDEPENDENCE_THRESHOLD};
use crate::construction::{
    assemble_generator, orbit_terms, shifted_blocks, span, suborbit, GeneratorSummary, BOUND_SLACK,
};
use crate::error::{Error, Result};
use crate::frame_algebra::{independence_margin, perturbation_analysis, PerturbationAnalysis};
use crate::operators::WeightedShift;
use crate::scaled::ln_add;
use crate::schedule::{ceil_snapped, GapRule, PowerSchedule};
use crate::vector::CoordinateVector;

/// Relative slack on the localization inequality, which is evaluated in the
/// log domain where |j − k| can reach the thousands.
pub const LOCALIZATION_SLACK: f64 = 1e-12;

/// Default cutoff for the exponential bump family. Far below the usual
/// 1e−14 so that backward terms survive the amplification λ^{α(k)−α(n)}
/// and get evaluated instead of charged.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationProfile {
    pub c: f64,
    pub beta: f64,
    /// Largest (j, k) covered by the check.
    pub verified_through: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOffender {
    pub j: usize,
    pub k: usize,
    /// |⟨e_j, f_k⟩| e^{β|j−k|}.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCheck {
    pub holds: bool,
    pub profile: LocalizationProfile,
    /// The coordinate maximizing |⟨e_j, f_k⟩| e^{β|j−k|}.
    pub worst: Option<LocalizationOffender>,
}

fn check_constants(c: f64, beta: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::precondition("C", format!("must be positive, got {c}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::precondition("beta", format!("must be positive, got {beta}")));
    }
    Ok(())
}

/// Checks |⟨e_j, f_k⟩| ≤ C e^{−β|j−k|} at every stored coordinate.
pub fn check_localization(
    family: &[CoordinateVector],
    c: f64,
    beta: f64,
) -> Result<LocalizationCheck> {
    check_constants(c, beta)?;
    let mut worst: Option<(f64, LocalizationOffender)> = None;
    let mut max_j = 0;
    for (i, f) in family.iter().enumerate() {
        let k = i + 1;
        for (j, x) in f.entries() {
            max_j = max_j.max(j);
            let ln_ratio = x.norm().ln() + beta * j.abs_diff(k) as f64;
            if worst.is_none_or(|(w, _)| ln_ratio > w) {
                let ratio = ln_ratio.exp();
                worst = Some((ln_ratio, LocalizationOffender { j, k, ratio }));
            }
        }
    }
    let holds = worst.is_none_or(|(w, _)| w <= c.ln() + LOCALIZATION_SLACK * w.abs().max(1.0));
    Ok(LocalizationCheck {
        holds,
        profile: LocalizationProfile {
            c,
            beta,
            verified_through: (max_j, family.len()),
        },
        worst: worst.map(|(_, o)| o),
    })
}

/// Where a localized family was cut off: every element keeps exactly the
/// coordinates with |j − k| ≤ `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub c: f64,
    pub beta: f64,
    pub radius: usize,
}

impl Truncation {
    /// Radius keeping every coordinate whose envelope C e^{−β|j−k|} is at
    /// least `tol`.
    pub fn for_tolerance(c: f64, beta: f64, tol: f64) -> Result<Self> {
        check_constants(c, beta)?;
        if !(tol > 0.0) || tol >= c {
            return Err(Error::precondition("trunc_tol", format!("must lie in (0, C), got {tol}")));
        }
        Ok(Self {
            c,
            beta,
            radius: ((c / tol).ln() / beta).floor() as usize,
        })
    }

    /// ½ ln(1 − e^{−2β}).
    fn ln_geometric(&self) -> f64 {
        0.5 * (-(-2.0 * self.beta).exp()).ln_1p()
    }

    /// ln of the bound on ‖f_n − truncated f_n‖, both sides counted.
    pub fn ln_dropped_norm(&self) -> f64 {
        self.c.ln() - self.beta * (self.radius + 1) as f64 + 0.5 * LN_2 - self.ln_geometric()
    }

    /// ln of the bound on ‖T^{shift}(f_n − truncated f_n)‖ with λ^{shift}
    /// applied.
    pub fn ln_dropped_after_left_shift(&self, n: usize, shift: u64, lambda: f64) -> f64 {
        let r = self.radius as u64;
        let n = n as u64;
        let scale = shift as f64 * lambda.ln() + self.c.ln() - self.ln_geometric();
        // Right side: dropped j ≥ n + r + 1, surviving j ≥ shift + 1.
        let first = (n + r + 1).max(shift + 1);
        let right = scale - self.beta * (first - n) as f64;
        // Left side: dropped j ≤ n − r − 1, nonempty after the shift only if
        // shift + 1 ≤ n − r − 1.
        if n >= r + shift + 2 {
            ln_add(right, scale - self.beta * (r + 1) as f64)
        } else {
            right
        }
    }
}

/// A family together with how it was truncated, if it was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedFamily {
    pub elements: Vec<CoordinateVector>,
    pub truncation: Option<Truncation>,
}

/// f_k(j) = C e^{−β|j−k|} for k = 1..=count, truncated at `trunc_tol`.
pub fn exponential_bump_family(
    count: usize,
    c: f64,
    beta: f64,
    trunc_tol: f64,
) -> Result<LocalizedFamily> {
    let truncation = Truncation::for_tolerance(c, beta, trunc_tol)?;
    let r = truncation.radius;
    let elements = (1..=count)
        .map(|k| {
            let lo = k.saturating_sub(r).max(1);
            CoordinateVector::from_real(
                (lo..=k + r).map(|j| (j, c * (-beta * j.abs_diff(k) as f64).exp())),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizedFamily {
        elements,
        truncation: Some(truncation),
    })
}

fn check_rates(lambda: f64, beta: f64) -> Result<()> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::precondition("lambda", format!("must exceed 1, got {lambda}")));
    }
    if lambda.ln() >= beta {
        return Err(Error::precondition(
            "lambda",
            format!("needs ln(lambda) < beta, got ln({lambda}) >= {beta}"),
        ));
    }
    Ok(())
}

/// ln(C e^{−β} / √(1 − e^{−2β})).
fn ln_back_constant(c: f64, beta: f64) -> f64 {
    c.ln() - beta - 0.5 * (-(-2.0 * beta).exp()).ln_1p()
}

/// α(1) = 0 and α(k+1) = ⌈max(admissibility, forward budget, backward
/// budget)⌉. The backward clause needs ln Σ_{n≤k} (λe^{−β})^{−α(n)} e^{βn},
/// which is carried along as a running log-sum.
pub fn schedule_localized(
    c: f64,
    beta: f64,
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<PowerSchedule> {
    check_constants(c, beta)?;
    check_rates(lambda, beta)?;
    if !(upper > 0.0) {
        return Err(Error::precondition("upper_bound", "must be positive"));
    }
    if !(eps > 0.0) {
        return Err(Error::precondition("epsilon", "must be positive"));
    }
    if len == 0 {
        return Err(Error::precondition("len", "must be at least 1"));
    }
    let ln_lambda = lambda.ln();
    let decay = beta - ln_lambda;
    let forward_const = (lambda / (lambda - 1.0)).ln() + 0.5 * (upper / eps).ln();
    let back_const = ln_back_constant(c, beta) - 0.5 * eps.ln();

    let mut steps = vec![0u64];
    let mut provenance = vec![GapRule::Origin];
    let mut ln_sum = f64::NEG_INFINITY;
    for k in 1..len {
        let kf = k as f64;
        let alpha_k = steps[k - 1] as f64;
        ln_sum = ln_add(ln_sum, alpha_k * decay + beta * kf);
        let candidates = [
            (alpha_k + kf - 1.0, GapRule::Admissibility),
            (
                alpha_k + ((kf / 2.0 + 1.0) * LN_2 + forward_const) / ln_lambda,
                GapRule::ForwardBudget,
            ),
            (
                ((kf / 2.0 + 1.5) * LN_2 + ln_sum + back_const) / decay,
                GapRule::BackBudget,
            ),
        ];
        let (target, rule) = candidates
            .into_iter()
            .fold((f64::NEG_INFINITY, GapRule::Admissibility), |best, cand| {
                if cand.0 > best.0 {
                    cand
                } else {
                    best
                }
            });
        // Strictly increasing even when every clause allows a zero gap.
        let next = (ceil_snapped(target) as u64).max(steps[k - 1] + 1);
        if next as f64 > 9.0e15 {
            return Err(Error::precondition("schedule", "powers leave the exact integer range"));
        }
        steps.push(next);
        provenance.push(rule);
    }
    PowerSchedule::new(steps, 1, provenance)
}

/// (λ/(λ−1)) √B λ^{−[α(k+1)−α(k)]}.
pub fn forward_bound(lambda: f64, upper: f64, gap: f64) -> f64 {
    lambda / (lambda - 1.0) * upper.sqrt() * (-gap * lambda.ln()).exp()
}

/// (λe^{−β})^{α(k)} (C e^{−β}/√(1−e^{−2β})) Σ_{n<k} (λe^{−β})^{−α(n)} e^{βn};
/// zero for k = 1.
pub fn back_bound(sched: &PowerSchedule, lambda: f64, c: f64, beta: f64, k: usize) -> f64 {
    let decay = beta - lambda.ln();
    let ak = sched.alpha(k);
    let ln_terms = (1..k).map(|n| -(ak - sched.alpha(n)) * decay + beta * n as f64);
    let ln_sum = ln_terms.fold(f64::NEG_INFINITY, ln_add);
    (ln_sum + ln_back_constant(c, beta)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedRow {
    pub k: usize,
    pub alpha_k: f64,
    pub gap: f64,
    /// ‖f_k − T^{α(k)}φ‖ over the represented terms, as a norm.
    pub measured: f64,
    pub measured_back: f64,
    pub measured_forward: f64,
    /// Norm bound on coordinates removed by truncation.
    pub truncation_charge: f64,
    /// Norm bound on the series beyond the generator's last term.
    pub tail: f64,
    pub bound_forward: f64,
    pub bound_back: f64,
    pub bound: f64,
    /// ε·2^{−k}, compared with the squared residual.
    pub budget: f64,
    pub pass: bool,
}

impl LocalizedRow {
    /// measured + truncation charge + tail.
    pub fn total(&self) -> f64 {
        self.measured + self.truncation_charge + self.tail
    }
}

fn within(x: f64, limit: f64) -> bool {
    x <= limit * (1.0 + BOUND_SLACK)
}

/// Residual norm for row k with the split bound next to it.
#[allow(clippy::too_many_arguments)]
pub fn residual_localized(
    family: &LocalizedFamily,
    sched: &PowerSchedule,
    lambda: f64,
    c: f64,
    beta: f64,
    upper: f64,
    eps: f64,
    k: usize,
    n_terms: usize,
) -> Result<LocalizedRow> {
    check_constants(c, beta)?;
    check_rates(lambda, beta)?;
    sched.require_len(n_terms + 1)?;
    let op = WeightedShift::new(lambda)?;
    let terms = orbit_terms(&op, &family.elements, sched, k, n_terms)?;
    let norms = terms.residual_norms()?;

    let ln_charge = match &family.truncation {
        None => f64::NEG_INFINITY,
        Some(t) => {
            let back = (1..k).map(|n| {
                t.ln_dropped_after_left_shift(n, sched.steps(k) - sched.steps(n), lambda)
            });
            let dropped = t.ln_dropped_norm();
            let forward = (k + 1..=n_terms).map(|n| dropped - span(sched, k, n) * lambda.ln());
            back.chain(forward).fold(f64::NEG_INFINITY, ln_add)
        }
    };
    let tail = forward_bound(lambda, upper, span(sched, k, n_terms + 1));
    let bound_forward = forward_bound(lambda, upper, sched.gap(k));
    let bound_back = back_bound(sched, lambda, c, beta, k);
    let bound = bound_forward + bound_back;
    let budget = eps * 0.5f64.powi(k as i32);

    let mut row = LocalizedRow {
        k,
        alpha_k: sched.alpha(k),
        gap: sched.gap(k),
        measured: norms.whole,
        measured_back: norms.back,
        measured_forward: norms.forward,
        truncation_charge: ln_charge.exp(),
        tail,
        bound_forward,
        bound_back,
        bound,
        budget,
        pass: false,
    };
    let total = row.total();
    row.pass = within(total, bound)
        && within(total * total, budget)
        && within(row.measured_back, bound_back)
        && within(row.measured_forward, bound_forward);
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizedParams {
    pub lambda: f64,
    pub c: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub upper_bound: Option<f64>,
    pub section: usize,
    pub n_terms: Option<usize>,
    pub rank_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedVerification {
    pub lambda: f64,
    pub epsilon: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub section: usize,
    pub n_terms: usize,
    pub localization: LocalizationCheck,
    pub truncation: Option<Truncation>,
    pub schedule: Vec<u64>,
    pub schedule_rules: Vec<GapRule>,
    pub generator: GeneratorSummary,
    pub rows: Vec<LocalizedRow>,
    pub independence_margin: f64,
    pub perturbation: PerturbationAnalysis,
    pub all_pass: bool,
}

/// Localization check, schedule, generator, residual table, independence
/// and perturbation report.
pub fn verify_localized(
    family: &LocalizedFamily,
    params: &LocalizedParams,
) -> Result<LocalizedVerification> {
    let LocalizedParams {
        lambda,
        c,
        beta,
        epsilon: eps,
        ..
    } = *params;
    check_constants(c, beta)?;
    check_rates(lambda, beta)?;
    let localization = check_localization(&family.elements, c, beta)?;
    if !localization.holds {
        let w = localization.worst.expect("a failing check has an offender");
        return Err(Error::LocalizationFailed {
            j: w.j,
            k: w.k,
            ratio: w.ratio,
        });
    }
    let elements = &family.elements;
    let s = setup(
        elements,
        params.section,
        params.n_terms,
        params.upper_bound,
        eps,
        params.rank_tol,
    )?;
    let sched = schedule_localized(c, beta, lambda, s.upper, eps, s.n_terms + 1)?;
    let op = WeightedShift::new(lambda)?;
    let blocks = shifted_blocks(&op, elements, &sched, s.n_terms)?;
    let tail = forward_bound(lambda, s.upper, sched.alpha(s.n_terms + 1));
    let generator = assemble_generator(blocks, CoordinateVector::zero(), lambda, 1, tail * tail)?;

    let rows = (1..=s.k)
        .map(|k| residual_localized(family, &sched, lambda, c, beta, s.upper, eps, k, s.n_terms))
        .collect::<Result<Vec<_>>>()?;
    let orbit = suborbit(&op, elements, &sched, s.k, s.n_terms)?;
    let margin = independence_margin(&orbit)?;
    let perturbation =
        perturbation_analysis(&elements[..s.k], &orbit, eps, s.lower, s.upper, params.rank_tol)?;

    let all_pass = rows.iter().all(|r| r.pass)
        && margin > INDEPENDENCE_THRESHOLD
        && perturbation.report.all_bounds_hold;
    Ok(LocalizedVerification {
        lambda,
        epsilon: eps,
        upper_bound: s.upper,
        lower_bound: s.lower,
        section: s.k,
        n_terms: s.n_terms,
        localization,
        truncation: family.truncation,
        schedule: sched.all_steps().to_vec(),
        schedule_rules: sched.provenance().to_vec(),
        generator: generator.summary(),
        rows,
        independence_margin: margin,
        perturbation,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx_l2n::residual_l2n;
    use crate::frame_algebra::{empirical_frame_bounds, DEFAULT_REL_TOL};
    use crate::vector::Element;

    fn onb(n: usize) -> LocalizedFamily {
        LocalizedFamily {
            elements: (1..=n).map(CoordinateVector::basis).collect(),
            truncation: None,
        }
    }

    #[test]
    fn localization_examples() {
        let check = check_localization(&onb(5).elements, 1.0, 0.3).unwrap();
        assert!(check.holds);

        let bumps = exponential_bump_family(6, 1.0, 0.5, 1e-14).unwrap();
        let check = check_localization(&bumps.elements, 1.0, 0.5).unwrap();
        assert!(check.holds);
        let w = check.worst.unwrap();
        assert!((w.ratio - 1.0).abs() < 1e-12);

        let doubled: Vec<_> = onb(3)
            .elements
            .iter()
            .map(|v| v.scaled(2.0.into()))
            .collect();
        let check = check_localization(&doubled, 1.0, 0.5).unwrap();
        assert!(!check.holds);
        let w = check.worst.unwrap();
        assert_eq!(w.j, w.k);
        assert_eq!(w.ratio, 2.0);
    }

    #[test]
    fn truncation_radius_keeps_envelope_above_tolerance() {
        let t = Truncation::for_tolerance(1.0, 0.5, 1e-14).unwrap();
        assert!((-0.5 * t.radius as f64).exp() >= 1e-14);
        assert!((-0.5 * (t.radius + 1) as f64).exp() < 1e-14);
        let fam = exponential_bump_family(3, 1.0, 0.5, 1e-14).unwrap();
        assert_eq!(fam.elements[2].max_index(), Some(3 + t.radius));
        assert_eq!(fam.elements[2].min_index(), Some(1));
    }

    #[test]
    fn dropped_norm_bounds_the_exact_tail() {
        let t = Truncation::for_tolerance(1.0, 0.5, 1e-3).unwrap();
        // An element far from the boundary loses both tails.
        let n = t.radius + 5;
        let exact: f64 = (1..=n + 400)
            .filter(|j| j.abs_diff(n) > t.radius)
            .map(|j| (-(j.abs_diff(n) as f64)).exp())
            .sum::<f64>()
            .sqrt();
        let bound = t.ln_dropped_norm().exp();
        assert!(exact <= bound && bound < 1.01 * exact);
    }

    #[test]
    fn schedule_first_power_is_the_largest_clause() {
        let (c, beta, lambda, upper, eps) = (1.0, 0.5, 1.1f64, 2.0, 0.5);
        let s = schedule_localized(c, beta, lambda, upper, eps, 2).unwrap();
        assert_eq!(s.steps(1), 0);
        // Independent evaluation of the three clauses at k = 1, α(1) = 0.
        let e1 = 0.0;
        let e2 = (1.5 * 2f64.ln() + (lambda / (lambda - 1.0)).ln() + (upper / eps).sqrt().ln())
            / lambda.ln();
        let sum = (-0.0 * (lambda * (-beta).exp()).ln()).exp() * beta.exp();
        let constant = c * (-beta).exp() / (1.0 - (-2.0 * beta).exp()).sqrt();
        let e3 = (2.0 * 2f64.ln() + sum.ln() + constant.ln() - eps.sqrt().ln())
            / (beta - lambda.ln());
        let expected = f64::max(e1, f64::max(e2, e3)).ceil() as u64;
        assert_eq!(s.steps(2), expected);
    }

    #[test]
    fn schedule_is_monotone_in_epsilon_and_admissible() {
        let mut previous: Option<PowerSchedule> = None;
        for eps in [0.5, 0.2, 0.1, 0.05, 0.01, 1e-3, 1e-6] {
            let s = schedule_localized(1.0, 0.5, 1.1, 4.0, eps, 10).unwrap();
            for k in 2..=10 {
                assert!(s.steps(k) + 2 >= s.steps(k - 1) + k as u64);
            }
            if let Some(p) = &previous {
                for k in 1..=10 {
                    assert!(s.steps(k) >= p.steps(k));
                }
            }
            previous = Some(s);
        }
    }

    #[test]
    fn rates_must_be_ordered() {
        assert!(matches!(
            schedule_localized(1.0, 0.05, 1.1, 2.0, 0.1, 3),
            Err(Error::Precondition { field: "lambda", .. })
        ));
    }

    #[test]
    fn first_row_bound_has_no_backward_part() {
        let fam = onb(6);
        let s = schedule_localized(1.0, 0.5, 1.1, 2.0, 0.5, 7).unwrap();
        let r = residual_localized(&fam, &s, 1.1, 1.0, 0.5, 2.0, 0.5, 1, 6).unwrap();
        assert_eq!(r.bound_back, 0.0);
        let expected = 1.1 / 0.1 * 2f64.sqrt() * 1.1f64.powf(-s.alpha(2));
        assert!((r.bound - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn onb_matches_finite_support_residual() {
        let fam = onb(8);
        let (lambda, upper, eps) = (1.1, 2.0, 0.5);
        let s = schedule_localized(1.0, 0.5, lambda, upper, eps, 9).unwrap();
        for k in 1..=6 {
            let loc = residual_localized(&fam, &s, lambda, 1.0, 0.5, upper, eps, k, 8).unwrap();
            let l2n = residual_l2n(&fam.elements, &s, lambda, upper, eps, k, 8).unwrap();
            assert_eq!(loc.measured_back, 0.0);
            assert!((loc.measured - l2n.measured.sqrt()).abs() <= 1e-15 * loc.measured);
        }
    }

    #[test]
    fn bump_family_end_to_end() {
        let fam = exponential_bump_family(14, 1.0, 0.5, DEFAULT_TRUNC_TOL).unwrap();
        let lower = empirical_frame_bounds(&fam.elements[..6], DEFAULT_REL_TOL)
            .unwrap()
            .lower;
        let params = LocalizedParams {
            lambda: 1.1,
            c: 1.0,
            beta: 0.5,
            epsilon: 0.1 * lower,
            upper_bound: None,
            section: 6,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_localized(&fam, &params).unwrap();
        for r in &v.rows {
            assert!(r.pass, "{r:?}");
        }
        assert!(v.rows[1].measured_back > 0.0);
        assert!(v.all_pass, "{:?}", v.perturbation.report);
    }

    #[test]
    fn small_constant_fails_localization_first() {
        let fam = exponential_bump_family(8, 1.0, 0.5, 1e-14).unwrap();
        let params = LocalizedParams {
            lambda: 1.1,
            c: 0.5,
            beta: 0.5,
            epsilon: 1e-3,
            upper_bound: None,
            section: 4,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        assert!(matches!(
            verify_localized(&fam, &params),
            Err(Error::LocalizationFailed { .. })
        ));
    }
}
