//! Suborbit approximation of finitely supported frames for ℓ²(ℕ) by the
//! weighted left shift T.
//!
//! With m(k) the largest nonzero index of f_k, gaps α(k+1) − α(k) ≥ m(k)
//! make the blocks U^{α(n)} f_n disjoint and make T^{α(k)} annihilate every
//! earlier block, so f_k − T^{α(k)}φ only involves later elements.

use std::f64::consts::{LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::construction::{
    assemble_generator, check_disjoint, orthogonal_bound, orthogonal_row, power_of_two_bound,
    shifted_blocks, suborbit, Generator, GeneratorSummary, ResidualRow,
};
use crate::error::{Error, Result};
use crate::frame_algebra::{
    empirical_frame_bounds, independence_margin, perturbation_analysis, PerturbationAnalysis,
};
use crate::operators::{apply_t_power, WeightedShift};
use crate::scaled::LN_RANGE;
use crate::schedule::{ceil_snapped, GapRule, PowerSchedule};
use crate::vector::{CoordinateVector, Element};

/// m(k) for every element: the largest index carrying a nonzero coordinate.
pub fn support_profile(family: &[CoordinateVector]) -> Result<Vec<usize>> {
    family
        .iter()
        .enumerate()
        .map(|(i, f)| f.max_index().ok_or(Error::ZeroVector { index: i + 1 }))
        .collect()
}

fn check_budget_inputs(lambda: f64, upper: f64, eps: f64) -> Result<()> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::precondition("lambda", format!("must exceed 1, got {lambda}")));
    }
    if !(upper > 0.0) {
        return Err(Error::precondition("upper_bound", "must be positive"));
    }
    if !(eps > 0.0) {
        return Err(Error::precondition("epsilon", "must be positive"));
    }
    Ok(())
}

/// [k ln 2 + ln(ratio) + ln(λ²/(λ²−1))] / (2 ln λ): the smallest gap that
/// pushes B λ²/(λ²−1) λ^{−2·gap} below ε·2^{−k} when `ratio` = B/ε.
pub fn budget_gap(k: usize, lambda: f64, ratio: f64) -> f64 {
    let l2 = lambda * lambda;
    (k as f64 * LN_2 + ratio.ln() + (l2 / (l2 - 1.0)).ln()) / (2.0 * lambda.ln())
}

/// α(1) = 0 and α(k+1) = α(k) + ⌈max(m(k), budget gap)⌉ for `len` powers.
pub fn schedule_finite_support(
    m: &[usize],
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<PowerSchedule> {
    check_budget_inputs(lambda, upper, eps)?;
    if len == 0 {
        return Err(Error::precondition("len", "must be at least 1"));
    }
    if m.len() + 1 < len {
        return Err(Error::precondition(
            "support_profile",
            format!("{} supports cannot fix {len} powers", m.len()),
        ));
    }
    let mut steps = vec![0u64];
    let mut provenance = vec![GapRule::Origin];
    for k in 1..len {
        let budget = budget_gap(k, lambda, upper / eps);
        let support = m[k - 1] as f64;
        let (gap, rule) = if support >= budget {
            (support, GapRule::Support)
        } else {
            (ceil_snapped(budget), GapRule::Budget)
        };
        steps.push(steps[k - 1] + gap as u64);
        provenance.push(rule);
    }
    PowerSchedule::new(steps, 1, provenance)
}

/// λ = √2, B = 2^N, ε = 2^{−j} with N, j ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sqrt2Config {
    #[serde(rename = "N")]
    n: u32,
    j: u32,
}

impl Sqrt2Config {
    pub fn new(n: u32, j: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::precondition("N", "must be at least 1"));
        }
        if j < 1 {
            return Err(Error::precondition("j", "must be at least 1"));
        }
        Ok(Self { n, j })
    }

    /// Recovers N and j from λ, B and ε, which must have the required form.
    pub fn from_parameters(lambda: f64, upper: f64, eps: f64) -> Result<Self> {
        if (lambda - SQRT_2).abs() > 1e-15 {
            return Err(Error::precondition("lambda", "the closed forms need lambda = sqrt(2)"));
        }
        let n = exact_log2(upper)
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::precondition("upper_bound", format!("{upper} is not 2^N with N >= 1")))?;
        let j = exact_log2(1.0 / eps)
            .filter(|&j| j >= 1)
            .ok_or_else(|| Error::precondition("epsilon", format!("{eps} is not 2^-j with j >= 1")))?;
        Self::new(n as u32, j as u32)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn upper_bound(&self) -> f64 {
        2f64.powi(self.n as i32)
    }

    pub fn epsilon(&self) -> f64 {
        2f64.powi(-(self.j as i32))
    }
}

fn exact_log2(x: f64) -> Option<i32> {
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let n = x.log2().round() as i32;
    (2f64.powi(n) == x).then_some(n)
}

/// The λ = √2 closed forms. Unrestricted:
/// α(k) = (k−1)(N+j+1) + k(k−1)/2 + Σ_{ℓ<k} m(ℓ). Restricted drops the m
/// sum and requires m(k) ≤ N+j+1+k.
pub fn schedule_sqrt2(
    m: &[usize],
    cfg: Sqrt2Config,
    restricted: bool,
    len: usize,
) -> Result<PowerSchedule> {
    if len == 0 {
        return Err(Error::precondition("len", "must be at least 1"));
    }
    if m.len() + 1 < len {
        return Err(Error::precondition(
            "support_profile",
            format!("{} supports cannot fix {len} powers", m.len()),
        ));
    }
    let base = (cfg.n + cfg.j + 1) as u64;
    if restricted {
        if let Some(k) = (1..len).find(|&k| m[k - 1] as u64 > base + k as u64) {
            return Err(Error::ScheduleViolation {
                n: k,
                reason: format!(
                    "restricted closed form needs m({k}) <= N+j+1+k = {}, got {}",
                    base + k as u64,
                    m[k - 1]
                ),
            });
        }
    }
    let mut support_sum = 0u64;
    let mut steps = Vec::with_capacity(len);
    for k in 1..=len as u64 {
        let mut alpha = (k - 1) * base + k * (k - 1) / 2;
        if !restricted {
            alpha += support_sum;
            if let Some(&mk) = m.get(k as usize - 1) {
                support_sum += mk as u64;
            }
        }
        steps.push(alpha);
    }
    let provenance = (0..len)
        .map(|i| if i == 0 { GapRule::Origin } else { GapRule::ClosedForm })
        .collect();
    PowerSchedule::new(steps, 1, provenance)
}

fn check_schedule_covers_supports(m: &[usize], sched: &PowerSchedule, n_terms: usize) -> Result<()> {
    for k in 1..n_terms.min(sched.len()) {
        if sched.gap_steps(k) < m[k - 1] as u64 {
            return Err(Error::ScheduleViolation {
                n: k,
                reason: format!(
                    "gap {} is shorter than the support length m({k}) = {}",
                    sched.gap_steps(k),
                    m[k - 1]
                ),
            });
        }
    }
    Ok(())
}

/// φ = Σ_{n ≤ n_terms} U^{α(n)} f_n with the tail bound B λ²/(λ²−1) λ^{−2α(n_terms+1)}.
pub fn build_generator(
    family: &[CoordinateVector],
    sched: &PowerSchedule,
    lambda: f64,
    upper: f64,
    n_terms: usize,
) -> Result<Generator<CoordinateVector>> {
    let op = WeightedShift::new(lambda)?;
    sched.require_len(n_terms + 1)?;
    let m = support_profile(&family[..n_terms.min(family.len())])?;
    check_schedule_covers_supports(&m, sched, n_terms)?;
    let blocks = shifted_blocks(&op, family, sched, n_terms)?;
    check_disjoint(&blocks)?;
    let tail = orthogonal_bound(upper, lambda, sched.alpha(n_terms + 1));
    assemble_generator(blocks, CoordinateVector::zero(), lambda, 1, tail)
}

/// ‖f_k − T^{α(k)}φ‖² for the generator truncated at `n_terms`, next to its
/// bound B λ²/(λ²−1) λ^{−2[α(k+1)−α(k)]}.
pub fn residual_l2n(
    family: &[CoordinateVector],
    sched: &PowerSchedule,
    lambda: f64,
    upper: f64,
    eps: f64,
    k: usize,
    n_terms: usize,
) -> Result<ResidualRow> {
    let op = WeightedShift::new(lambda)?;
    let budget = eps * 0.5f64.powi(k as i32);
    Ok(orthogonal_row(&op, family, sched, k, n_terms, upper, budget)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ScheduleRule {
    /// Gaps ⌈max(m(k), budget gap)⌉.
    FiniteSupport,
    /// The λ = √2 closed forms.
    Sqrt2 { restricted: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2nParams {
    pub lambda: f64,
    pub epsilon: f64,
    /// Declared upper frame bound; defaults to the next power of two (≥ 2)
    /// above the empirical bound of the first `n_terms` elements.
    pub upper_bound: Option<f64>,
    /// Number of residual rows K.
    pub section: usize,
    /// Terms kept in φ; defaults to min(K + 8, family length).
    pub n_terms: Option<usize>,
    pub rule: ScheduleRule,
    pub rank_tol: f64,
}

/// Suborbits whose independence margin falls below this are reported as
/// dependent.
pub const INDEPENDENCE_THRESHOLD: f64 = 1e-10;

/// Tolerance for the direct evaluation of T^{α(k)}φ against the exact
/// composition, relative to ‖f_k‖.
pub const DIRECT_CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2nVerification {
    pub lambda: f64,
    pub epsilon: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub section: usize,
    pub n_terms: usize,
    pub schedule: Vec<u64>,
    pub schedule_rules: Vec<GapRule>,
    pub generator: GeneratorSummary,
    pub rows: Vec<ResidualRow>,
    /// Largest relative gap between T^{α(k)}φ evaluated directly and through
    /// the exact composition; absent when λ^{α} leaves double range.
    pub direct_check: Option<f64>,
    pub independence_margin: f64,
    pub perturbation: PerturbationAnalysis,
    pub all_pass: bool,
}

/// Sections, budget defaults and the ε < A precondition shared by the
/// sequence-space pipelines.
pub(crate) struct Setup {
    pub k: usize,
    pub n_terms: usize,
    pub lower: f64,
    pub upper: f64,
}

pub(crate) fn setup<V: Element>(
    family: &[V],
    section: usize,
    n_terms: Option<usize>,
    declared_upper: Option<f64>,
    eps: f64,
    tol: f64,
) -> Result<Setup> {
    if section == 0 || section > family.len() {
        return Err(Error::precondition(
            "section",
            format!("must lie in 1..={}, got {section}", family.len()),
        ));
    }
    let n_terms = n_terms.unwrap_or((section + 8).min(family.len()));
    if n_terms < section || n_terms > family.len() {
        return Err(Error::precondition(
            "n_terms",
            format!("must lie in {section}..={}, got {n_terms}", family.len()),
        ));
    }
    let lower = empirical_frame_bounds(&family[..section], tol)?.lower;
    let upper = match declared_upper {
        Some(b) => b,
        None => power_of_two_bound(empirical_frame_bounds(&family[..n_terms], tol)?.upper).1,
    };
    if !(eps > 0.0) || eps >= lower {
        return Err(Error::precondition(
            "epsilon",
            format!("must lie strictly between 0 and the lower frame bound {lower}, got {eps}"),
        ));
    }
    Ok(Setup {
        k: section,
        n_terms,
        lower,
        upper,
    })
}

pub fn build_schedule(
    family: &[CoordinateVector],
    rule: ScheduleRule,
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<PowerSchedule> {
    let m = support_profile(&family[..(len - 1).min(family.len())])?;
    match rule {
        ScheduleRule::FiniteSupport => schedule_finite_support(&m, lambda, upper, eps, len),
        ScheduleRule::Sqrt2 { restricted } => {
            let cfg = Sqrt2Config::from_parameters(lambda, upper, eps)?;
            schedule_sqrt2(&m, cfg, restricted, len)
        }
    }
}

/// Schedule, generator, residual table, independence and perturbation
/// report for a finitely supported family.
pub fn verify_finite_support(
    family: &[CoordinateVector],
    params: &L2nParams,
) -> Result<L2nVerification> {
    let lambda = params.lambda;
    let eps = params.epsilon;
    check_budget_inputs(lambda, params.upper_bound.unwrap_or(1.0), eps)?;
    support_profile(family)?;
    let s = setup(
        family,
        params.section,
        params.n_terms,
        params.upper_bound,
        eps,
        params.rank_tol,
    )?;
    let sched = build_schedule(family, params.rule, lambda, s.upper, eps, s.n_terms + 1)?;
    let generator = build_generator(family, &sched, lambda, s.upper, s.n_terms)?;

    let op = WeightedShift::new(lambda)?;
    let mut rows = Vec::with_capacity(s.k);
    for k in 1..=s.k {
        let budget = eps * 0.5f64.powi(k as i32);
        rows.push(orthogonal_row(&op, family, &sched, k, s.n_terms, s.upper, budget)?.0);
    }
    let orbit = suborbit(&op, family, &sched, s.k, s.n_terms)?;
    let direct_check = direct_check(&generator, &orbit, &sched, lambda)?;
    let margin = independence_margin(&orbit)?;
    let perturbation =
        perturbation_analysis(&family[..s.k], &orbit, eps, s.lower, s.upper, params.rank_tol)?;

    let all_pass = rows.iter().all(|r| r.pass)
        && direct_check.is_none_or(|d| d <= DIRECT_CHECK_TOL)
        && margin > INDEPENDENCE_THRESHOLD
        && perturbation.report.all_bounds_hold;
    Ok(L2nVerification {
        lambda,
        epsilon: eps,
        upper_bound: s.upper,
        lower_bound: s.lower,
        section: s.k,
        n_terms: s.n_terms,
        schedule: sched.all_steps().to_vec(),
        schedule_rules: sched.provenance().to_vec(),
        generator: generator.summary(),
        rows,
        direct_check,
        independence_margin: margin,
        perturbation,
        all_pass,
    })
}

/// Evaluates T^{α(k)}φ from the materialized φ and compares with the exact
/// composition. Only attempted while every λ-power stays well inside double
/// range.
fn direct_check(
    generator: &Generator<CoordinateVector>,
    orbit: &[CoordinateVector],
    sched: &PowerSchedule,
    lambda: f64,
) -> Result<Option<f64>> {
    let largest = sched.alpha(generator.n_terms) * lambda.ln();
    if largest >= 600.0 || largest > LN_RANGE {
        return Ok(None);
    }
    let phi = generator.phi.materialize()?;
    let mut worst = 0.0f64;
    for (i, composed) in orbit.iter().enumerate() {
        let direct = apply_t_power(&phi, sched.steps(i + 1), lambda)?.materialize()?;
        let err = direct.sub(composed)?.norm();
        worst = worst.max(err / composed.norm().max(f64::MIN_POSITIVE));
    }
    Ok(Some(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_algebra::DEFAULT_REL_TOL;

    fn onb(n: usize) -> Vec<CoordinateVector> {
        (1..=n).map(CoordinateVector::basis).collect()
    }

    #[test]
    fn support_profile_examples() {
        assert_eq!(support_profile(&onb(3)).unwrap(), vec![1, 2, 3]);
        let f = vec![
            CoordinateVector::from_real([(1, 1.0), (5, 1.0)]).unwrap(),
            CoordinateVector::basis(2),
        ];
        assert_eq!(support_profile(&f).unwrap(), vec![5, 2]);
        let f: Vec<_> = (1..=4)
            .map(|k| CoordinateVector::from_real([(k, 1.0), (k + 1, 1.0)]).unwrap())
            .collect();
        assert_eq!(support_profile(&f).unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(
            support_profile(&[CoordinateVector::basis(1), CoordinateVector::zero()]),
            Err(Error::ZeroVector { index: 2 })
        );
    }

    #[test]
    fn finite_support_sqrt2_example() {
        // λ = √2, B = 2, ε = 1/2: the budget gap is exactly k + 3.
        let s = schedule_finite_support(&[1; 8], SQRT_2, 2.0, 0.5, 4).unwrap();
        assert_eq!(s.all_steps(), &[0, 4, 9, 15]);
        assert_eq!(s.rule(2), GapRule::Budget);
    }

    #[test]
    fn finite_support_lambda_two() {
        let m = [3, 1, 1, 1, 1];
        let s = schedule_finite_support(&m, 2.0, 1.0, 1.0, 6).unwrap();
        let mut expect = vec![0u64];
        for k in 1..=5usize {
            let b = ((k as f64 * LN_2 + (4.0f64 / 3.0).ln()) / (2.0 * LN_2)).ceil() as u64;
            expect.push(expect[k - 1] + b.max(m[k - 1] as u64));
        }
        assert_eq!(s.all_steps(), expect.as_slice());
        assert_eq!(s.rule(2), GapRule::Support);
    }

    #[test]
    fn sqrt2_closed_forms() {
        let cfg = Sqrt2Config::new(1, 3).unwrap();
        let s = schedule_sqrt2(&[1, 2, 3, 4], cfg, false, 4).unwrap();
        assert_eq!(s.all_steps(), &[0, 7, 16, 27]);
        let s = schedule_sqrt2(&[1; 4], Sqrt2Config::new(1, 1).unwrap(), true, 4).unwrap();
        assert_eq!(s.all_steps(), &[0, 4, 9, 15]);
        let s = schedule_sqrt2(&[1; 4], Sqrt2Config::new(1, 1).unwrap(), false, 4).unwrap();
        assert_eq!(s.all_steps(), &[0, 5, 11, 18]);
    }

    #[test]
    fn sqrt2_gaps_match_recursion() {
        let cfg = Sqrt2Config::new(2, 3).unwrap();
        let m: Vec<usize> = (1..=11).map(|k| (k * 7) % 5 + 1).collect();
        let s = schedule_sqrt2(&m, cfg, false, 11).unwrap();
        for k in 1..=10 {
            assert_eq!(s.gap_steps(k), (k + 2 + 3 + 1 + m[k - 1]) as u64);
        }
    }

    #[test]
    fn restricted_names_offender() {
        let cfg = Sqrt2Config::new(1, 1).unwrap();
        let err = schedule_sqrt2(&[1, 9, 1], cfg, true, 4).unwrap_err();
        assert!(matches!(err, Error::ScheduleViolation { n: 2, .. }));
    }

    #[test]
    fn sqrt2_config_recovery() {
        let c = Sqrt2Config::from_parameters(SQRT_2, 2.0, 0.125).unwrap();
        assert_eq!((c.n(), c.j()), (1, 3));
        assert!(Sqrt2Config::from_parameters(SQRT_2, 3.0, 0.125).is_err());
        assert!(Sqrt2Config::from_parameters(SQRT_2, 1.0, 0.125).is_err());
        assert!(Sqrt2Config::from_parameters(1.5, 2.0, 0.125).is_err());
    }

    #[test]
    fn generator_examples() {
        let sched = PowerSchedule::from_integers(vec![0, 1], GapRule::Budget).unwrap();
        let g = build_generator(&onb(1), &sched, SQRT_2, 2.0, 1).unwrap();
        assert_eq!(g.phi.materialize().unwrap(), CoordinateVector::basis(1));

        let sched = PowerSchedule::from_integers(vec![0, 5, 12], GapRule::Budget).unwrap();
        let g = build_generator(&onb(2), &sched, SQRT_2, 2.0, 2).unwrap();
        let phi = g.phi.materialize().unwrap();
        assert_eq!(phi.get(1).re, 1.0);
        assert!((phi.get(7).re - 2f64.powf(-2.5)).abs() < 1e-16);
        assert!(g.tail_bound <= 2.0 * 2.0 * 2f64.powi(-12) * (1.0 + 1e-15));
    }

    #[test]
    fn single_element_residual_is_zero() {
        let sched = PowerSchedule::from_integers(vec![0, 4], GapRule::Budget).unwrap();
        let r = residual_l2n(&onb(1), &sched, SQRT_2, 2.0, 0.5, 1, 1).unwrap();
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn onb_residuals_match_series() {
        let cfg = Sqrt2Config::new(1, 3).unwrap();
        let family = onb(12);
        let m = support_profile(&family).unwrap();
        let sched = schedule_sqrt2(&m, cfg, false, 13).unwrap();
        for k in 1..=8 {
            let r = residual_l2n(&family, &sched, SQRT_2, 2.0, 0.125, k, 12).unwrap();
            let oracle: f64 = (k + 1..=12)
                .map(|n| 2f64.powf(-((sched.steps(n) - sched.steps(k)) as f64)))
                .sum();
            assert!((r.measured - oracle).abs() <= 1e-15 * oracle, "{k} {} {oracle}", r.measured);
            assert!(r.pass);
        }
    }

    #[test]
    fn verify_rejects_large_epsilon() {
        let params = L2nParams {
            lambda: SQRT_2,
            epsilon: 1.0,
            upper_bound: Some(2.0),
            section: 4,
            n_terms: None,
            rule: ScheduleRule::FiniteSupport,
            rank_tol: DEFAULT_REL_TOL,
        };
        assert!(matches!(
            verify_finite_support(&onb(8), &params),
            Err(Error::Precondition { field: "epsilon", .. })
        ));
        let mut with_zero = onb(4);
        with_zero[2] = CoordinateVector::zero();
        let params = L2nParams { epsilon: 0.1, ..params };
        assert!(matches!(
            verify_finite_support(&with_zero, &params),
            Err(Error::ZeroVector { index: 3 })
        ));
    }

    #[test]
    fn onb8_pipeline_passes() {
        let params = L2nParams {
            lambda: SQRT_2,
            epsilon: 0.125,
            upper_bound: Some(2.0),
            section: 8,
            n_terms: None,
            rule: ScheduleRule::Sqrt2 { restricted: false },
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_finite_support(&onb(8), &params).unwrap();
        assert_eq!(&v.schedule[..4], &[0, 7, 16, 27]);
        assert_eq!(v.rows.len(), 8);
        assert!(v.all_pass, "{v:#?}");
        assert!(v.direct_check.unwrap() < 1e-14);
    }
}
