//! Two-operator suborbits for compactly supported frames of L²(ℝ).
//!
//! Elements supported in [0, ∞) form the family G and are approximated by
//! the truncated translations (T₁, U₁); the rest form H and use (T₂, U₂)
//! with cutoff L, the common support-length bound. Everything lives on a
//! grid of step 1/q, and powers are counted in grid cells.

use serde::{Deserialize, Serialize};

use crate::approx_l2n::{budget_gap, INDEPENDENCE_THRESHOLD};
use crate::construction::{
    assemble_generator, check_disjoint, orthogonal_bound, orthogonal_row, power_of_two_bound,
    shifted_blocks, suborbit, Generator, GeneratorSummary, ResidualRow,
};
use crate::error::{Error, Result};
use crate::frame_algebra::{
    domination_with_budgets, empirical_frame_bounds, independence_margin, perturbation_analysis,
    synthesis_gap, DominationTable, PerturbationAnalysis,
};
use crate::operators::{Branch, OrbitOperator, TruncatedTranslation};
use crate::schedule::{ceil_to_grid, GapRule, PowerSchedule};
use crate::vector::{grid_steps, SampledFunction};

/// Support intervals in grid cells: [a(k), b(k)] for G, [c(k), d(k)] for H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportIntervalProfile {
    pub q: u32,
    pub positive: Vec<(i64, i64)>,
    pub negative: Vec<(i64, i64)>,
    /// L·q, the longest support among all elements.
    pub length_bound_steps: i64,
}

impl SupportIntervalProfile {
    fn from_hulls(q: u32, positive: Vec<(i64, i64)>, negative: Vec<(i64, i64)>) -> Self {
        let length_bound_steps = positive
            .iter()
            .chain(&negative)
            .map(|(s, e)| e - s)
            .max()
            .unwrap_or(0);
        Self {
            q,
            positive,
            negative,
            length_bound_steps,
        }
    }

    pub fn length_bound(&self) -> f64 {
        self.length_bound_steps as f64 / self.q as f64
    }

    /// Gap needed after element k of `branch`, in cells: b(k) for G and
    /// L − c(k) for H.
    pub fn support_requirement(&self, branch: Branch, k: usize) -> i64 {
        match branch {
            Branch::Positive => self.positive[k - 1].1,
            Branch::Negative => self.length_bound_steps - self.negative[k - 1].0,
        }
    }

    pub fn branch_len(&self, branch: Branch) -> usize {
        match branch {
            Branch::Positive => self.positive.len(),
            Branch::Negative => self.negative.len(),
        }
    }
}

/// F split into G (supports in [0, ∞)) and H, both in their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub positive: Vec<SampledFunction>,
    pub negative: Vec<SampledFunction>,
    /// 0-based positions in F of the elements of G and H.
    pub positive_positions: Vec<usize>,
    pub negative_positions: Vec<usize>,
    pub profile: SupportIntervalProfile,
}

impl Partition {
    pub fn positive_empty(&self) -> bool {
        self.positive.is_empty()
    }

    pub fn negative_empty(&self) -> bool {
        self.negative.is_empty()
    }
}

pub fn partition_frame(family: &[SampledFunction]) -> Result<Partition> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    let q = first.q();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    let mut positive_positions = Vec::new();
    let mut negative_positions = Vec::new();
    let mut positive_hulls = Vec::new();
    let mut negative_hulls = Vec::new();
    for (i, f) in family.iter().enumerate() {
        if f.q() != q {
            return Err(Error::IncompatibleOperands(format!(
                "element {} uses grid 1/{} instead of 1/{q}",
                i + 1,
                f.q()
            )));
        }
        let hull = f.support_steps().ok_or(Error::ZeroVector { index: i + 1 })?;
        if hull.0 >= 0 {
            positive.push(f.clone());
            positive_positions.push(i);
            positive_hulls.push(hull);
        } else {
            negative.push(f.clone());
            negative_positions.push(i);
            negative_hulls.push(hull);
        }
    }
    Ok(Partition {
        positive,
        negative,
        positive_positions,
        negative_positions,
        profile: SupportIntervalProfile::from_hulls(q, positive_hulls, negative_hulls),
    })
}

/// α(1) = 0 and α(k+1) − α(k) = max(support requirement, budget gap with
/// 2B/ε), rounded up to whole cells.
pub fn branch_schedule(
    profile: &SupportIntervalProfile,
    branch: Branch,
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<PowerSchedule> {
    if !(lambda > 1.0) || !(upper > 0.0) || !(eps > 0.0) {
        return Err(Error::precondition(
            "schedule",
            "needs lambda > 1 and positive upper bound and epsilon",
        ));
    }
    if len == 0 || profile.branch_len(branch) + 1 < len {
        return Err(Error::precondition(
            "len",
            format!(
                "{} supports cannot fix {len} powers",
                profile.branch_len(branch)
            ),
        ));
    }
    let mut steps = vec![0u64];
    let mut provenance = vec![GapRule::Origin];
    for k in 1..len {
        let support = profile.support_requirement(branch, k).max(0) as u64;
        let budget = ceil_to_grid(budget_gap(k, lambda, 2.0 * upper / eps), profile.q)?;
        let (gap, rule) = if support >= budget {
            (support, GapRule::Support)
        } else {
            (budget, GapRule::Budget)
        };
        steps.push(steps[k - 1] + gap);
        provenance.push(rule);
    }
    PowerSchedule::new(steps, profile.q, provenance)
}

/// The α and γ schedules with `len` powers each.
pub fn schedules_l2r(
    profile: &SupportIntervalProfile,
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<(PowerSchedule, PowerSchedule)> {
    Ok((
        branch_schedule(profile, Branch::Positive, lambda, upper, eps, len)?,
        branch_schedule(profile, Branch::Negative, lambda, upper, eps, len)?,
    ))
}

/// Errors unless every gap of `sched` covers the support requirement.
pub fn check_branch_schedule(
    profile: &SupportIntervalProfile,
    branch: Branch,
    sched: &PowerSchedule,
    n_terms: usize,
) -> Result<()> {
    if sched.denominator() != profile.q {
        return Err(Error::precondition("schedule", "powers must be counted in grid cells"));
    }
    for k in 1..n_terms.min(sched.len()) {
        let need = profile.support_requirement(branch, k);
        if (sched.gap_steps(k) as i64) < need {
            return Err(Error::ScheduleViolation {
                n: k,
                reason: format!(
                    "gap of {} cells is shorter than the {need} the supports require",
                    sched.gap_steps(k)
                ),
            });
        }
    }
    Ok(())
}

/// The operator pair serving `branch` with cutoff L.
pub fn branch_operator(
    branch: Branch,
    lambda: f64,
    profile: &SupportIntervalProfile,
) -> Result<TruncatedTranslation> {
    match branch {
        Branch::Positive => TruncatedTranslation::positive(lambda, profile.q),
        Branch::Negative => {
            TruncatedTranslation::negative(lambda, profile.q, profile.length_bound())
        }
    }
}

/// φ = Σ_{n ≤ n_terms} U^{α(n)} f_n for one branch.
pub fn build_branch_generator(
    op: &TruncatedTranslation,
    family: &[SampledFunction],
    sched: &PowerSchedule,
    upper: f64,
    n_terms: usize,
) -> Result<Generator<SampledFunction>> {
    sched.require_len(n_terms + 1)?;
    let blocks = shifted_blocks(op, family, sched, n_terms)?;
    check_disjoint(&blocks)?;
    let tail = orthogonal_bound(upper, op.lambda(), sched.alpha(n_terms + 1));
    assemble_generator(blocks, SampledFunction::zero(op.denominator()), op.lambda(), op.denominator(), tail)
}

/// Both generators; `None` for an empty branch.
#[allow(clippy::type_complexity)]
pub fn build_generators_l2r(
    partition: &Partition,
    alpha: &PowerSchedule,
    gamma: &PowerSchedule,
    lambda: f64,
    upper: f64,
    n_terms: usize,
) -> Result<(Option<Generator<SampledFunction>>, Option<Generator<SampledFunction>>)> {
    let profile = &partition.profile;
    let mut out = [None, None];
    for (slot, (branch, family, sched)) in out.iter_mut().zip([
        (Branch::Positive, &partition.positive, alpha),
        (Branch::Negative, &partition.negative, gamma),
    ]) {
        if family.is_empty() {
            continue;
        }
        let nt = n_terms.min(family.len());
        check_branch_schedule(profile, branch, sched, nt)?;
        let op = branch_operator(branch, lambda, profile)?;
        *slot = Some(build_branch_generator(&op, family, sched, upper, nt)?);
    }
    let [g, h] = out;
    Ok((g, h))
}

/// ‖f_k − T^{α(k)}φ‖² for one branch; the budget is ε·2^{−k}/2.
#[allow(clippy::too_many_arguments)]
pub fn residual_l2r(
    branch: Branch,
    family: &[SampledFunction],
    profile: &SupportIntervalProfile,
    sched: &PowerSchedule,
    lambda: f64,
    upper: f64,
    eps: f64,
    k: usize,
    n_terms: usize,
) -> Result<ResidualRow> {
    check_branch_schedule(profile, branch, sched, n_terms)?;
    let op = branch_operator(branch, lambda, profile)?;
    let budget = branch_budget(eps, k);
    Ok(orthogonal_row(&op, family, sched, k, n_terms, upper, budget)?.0)
}

fn branch_budget(eps: f64, k: usize) -> f64 {
    eps * 0.5f64.powi(k as i32 + 1)
}

/// A Gabor system {E_{mb} T_{na} g} cut to |m| ≤ m_range and, per branch,
/// n_range + 1 translates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborSpec {
    pub window: SampledFunction,
    pub a: f64,
    pub b: f64,
    pub m_range: u32,
    pub n_range: u32,
}

impl GaborSpec {
    /// a·q in cells.
    pub fn a_steps(&self) -> Result<i64> {
        let steps = grid_steps(self.a, self.window.q())?;
        if steps <= 0 {
            return Err(Error::precondition("a", "must be a positive multiple of the grid step"));
        }
        Ok(steps)
    }

    /// C·q in cells, where supp g ⊆ [0, C].
    pub fn support_steps(&self) -> Result<i64> {
        let (start, end) = self
            .window
            .support_steps()
            .ok_or(Error::ZeroVector { index: 1 })?;
        if start < 0 {
            return Err(Error::precondition("window", "must be supported in [0, C]"));
        }
        Ok(end)
    }

    pub fn support_length(&self) -> Result<f64> {
        Ok(self.support_steps()? as f64 / self.window.q() as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::precondition("b", "must be positive"));
        }
        self.a_steps()?;
        self.support_steps()?;
        Ok(())
    }

    /// E_{mb} T_{na} g.
    pub fn atom(&self, m: i64, n: i64) -> Result<SampledFunction> {
        Ok(self
            .window
            .translate(n * self.a_steps()?)
            .modulate(m as f64 * self.b))
    }
}

/// A visiting order of the cells (m, row) with m ∈ [−M, M] and
/// row ∈ 0..rows, starting at (0, 0) and moving through every row in order
/// of first visit. `unit_step` tells whether consecutive cells always
/// differ by one step in exactly one coordinate; when false the rows still
/// change by at most one, which is what the support estimates need.
pub fn gabor_path(m_range: u32, rows: u32) -> (Vec<(i64, u32)>, bool) {
    let m = m_range as i64;
    let mut path = Vec::with_capacity(((2 * m + 1) * rows as i64) as usize);
    if rows == 0 {
        return (path, true);
    }
    let ascending = |row: u32, from: i64, to: i64| -> Vec<(i64, u32)> {
        if from <= to {
            (from..=to).map(|c| (c, row)).collect()
        } else {
            (to..=from).rev().map(|c| (c, row)).collect()
        }
    };
    if m == 0 {
        path.extend((0..rows).map(|r| (0, r)));
        return (path, true);
    }
    if rows.is_multiple_of(2) {
        // Snake over m ≥ 0 going up, then over m < 0 coming back down.
        for r in 0..rows {
            let (from, to) = if r % 2 == 0 { (0, m) } else { (m, 0) };
            path.extend(ascending(r, from, to));
        }
        for (i, r) in (0..rows).rev().enumerate() {
            let (from, to) = if i % 2 == 0 { (-1, -m) } else { (-m, -1) };
            path.extend(ascending(r, from, to));
        }
        return (path, true);
    }
    if m % 2 == 0 && rows >= 2 {
        // Rows 0 and 1 over m ≥ 0, then the left half of both rows column
        // by column, ending at (−M, 1); full-width snake from row 2 on.
        path.extend(ascending(0, 0, m));
        path.extend(ascending(1, m, 0));
        for (i, c) in (1..=m).enumerate() {
            let order = if i % 2 == 0 { [1, 0] } else { [0, 1] };
            path.extend(order.iter().map(|&r| (-c, r)));
        }
        for (i, r) in (2..rows).enumerate() {
            let (from, to) = if i % 2 == 0 { (-m, m) } else { (m, -m) };
            path.extend(ascending(r, from, to));
        }
        return (path, true);
    }
    // An odd number of rows with M odd admits no unit-step path from
    // (0, 0): colour cells by the parity of m + row; (0, 0) is in the
    // minority colour of an odd-sized board. A single row with M > 0 has
    // none either. Visit each row fully instead.
    for r in 0..rows {
        let row: Vec<i64> = if r % 2 == 0 {
            (0..=m).chain((-m..0).rev()).collect()
        } else {
            (-m..=m).rev().collect()
        };
        path.extend(row.into_iter().map(|c| (c, r)));
    }
    (path, false)
}

/// One ordered branch of a Gabor system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBranch {
    pub branch: Branch,
    pub elements: Vec<SampledFunction>,
    /// (m, n) of each element.
    pub indices: Vec<(i64, i64)>,
    /// ℓ_k for G (supp g_k ⊆ [(ℓ_k−1)a, C+(ℓ_k−1)a]) or r_k for H
    /// (supp h_k ⊆ [−r_k a, C−r_k a]).
    pub support_index: Vec<usize>,
    pub unit_step_path: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborFamily {
    pub positive: GaborBranch,
    pub negative: GaborBranch,
}

impl GaborFamily {
    /// g₁, h₁, g₂, h₂, … as far as both branches reach, then the rest of
    /// the longer one.
    pub fn interleaved(&self) -> Vec<SampledFunction> {
        let (g, h) = (&self.positive.elements, &self.negative.elements);
        let mut out = Vec::with_capacity(g.len() + h.len());
        for i in 0..g.len().max(h.len()) {
            out.extend(g.get(i).cloned());
            out.extend(h.get(i).cloned());
        }
        out
    }
}

pub fn gabor_family(spec: &GaborSpec) -> Result<GaborFamily> {
    spec.validate()?;
    let (path, unit_step) = gabor_path(spec.m_range, spec.n_range + 1);
    let mut branches = Vec::with_capacity(2);
    for branch in [Branch::Positive, Branch::Negative] {
        let mut elements = Vec::with_capacity(path.len());
        let mut indices = Vec::with_capacity(path.len());
        let mut support_index = Vec::with_capacity(path.len());
        for &(m, row) in &path {
            let (n, index) = match branch {
                Branch::Positive => (row as i64, row as usize + 1),
                Branch::Negative => (-(row as i64) - 1, row as usize + 1),
            };
            elements.push(spec.atom(m, n)?);
            indices.push((m, n));
            support_index.push(index);
        }
        branches.push(GaborBranch {
            branch,
            elements,
            indices,
            support_index,
            unit_step_path: unit_step,
        });
    }
    let negative = branches.pop().expect("two branches");
    let positive = branches.pop().expect("two branches");
    Ok(GaborFamily { positive, negative })
}

/// The closed forms for λ = √2, B = 2^N, ε = 2^{−j}, in cells:
/// α(k) = (k−1)[k(a+1)/2 + C − a + N + j + 2] and γ(k) the same without −a.
pub fn gabor_schedules(
    spec: &GaborSpec,
    n: u32,
    j: u32,
    len: usize,
) -> Result<(PowerSchedule, PowerSchedule)> {
    if n < 1 || j < 1 {
        return Err(Error::precondition("N", "N and j must be at least 1"));
    }
    if len == 0 {
        return Err(Error::precondition("len", "must be at least 1"));
    }
    spec.validate()?;
    let q = spec.window.q() as i64;
    let a = spec.a_steps()?;
    let c = spec.support_steps()?;
    let constant = (n + j + 2) as i64 * q;
    let build = |offset: i64| -> Result<PowerSchedule> {
        let steps = (1..=len as i64)
            .map(|k| (k - 1) * k / 2 * (a + q) + (k - 1) * (c + offset + constant))
            .map(|s| u64::try_from(s).map_err(|_| Error::precondition("schedule", "negative power")))
            .collect::<Result<Vec<_>>>()?;
        let provenance = (0..len)
            .map(|i| if i == 0 { GapRule::Origin } else { GapRule::ClosedForm })
            .collect();
        PowerSchedule::new(steps, q as u32, provenance)
    };
    Ok((build(-a)?, build(0)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2rParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub upper_bound: Option<f64>,
    /// Rows K per branch.
    pub section: usize,
    /// Terms per generator; defaults to min(K + 8, branch length).
    pub n_terms: Option<usize>,
    pub rank_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchVerification {
    pub branch: Branch,
    pub section: usize,
    pub n_terms: usize,
    /// Powers in cells of width 1/denominator.
    pub schedule: Vec<u64>,
    pub denominator: u32,
    pub schedule_rules: Vec<GapRule>,
    pub generator: GeneratorSummary,
    pub rows: Vec<ResidualRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2rVerification {
    pub lambda: f64,
    pub epsilon: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub cutoff: f64,
    pub profile: SupportIntervalProfile,
    pub positive: Option<BranchVerification>,
    pub negative: Option<BranchVerification>,
    /// Rows of the union in the order of F, against the branch budgets.
    pub domination: DominationTable,
    pub synthesis_gap: f64,
    pub eps_approximation: bool,
    pub independence_margin: f64,
    pub perturbation: PerturbationAnalysis,
    pub all_pass: bool,
}

struct BranchPlan<'a> {
    branch: Branch,
    family: &'a [SampledFunction],
    positions: &'a [usize],
    schedule: PowerSchedule,
    section: usize,
    n_terms: usize,
}

fn branch_sizes(len: usize, section: usize, n_terms: Option<usize>) -> Result<(usize, usize)> {
    let k = section.min(len);
    let nt = n_terms.unwrap_or(k + 8).min(len);
    if nt < k {
        return Err(Error::precondition(
            "n_terms",
            format!("must be at least the section size {k}, got {nt}"),
        ));
    }
    Ok((k, nt))
}

/// Runs both branches, then checks the union against the matching part of
/// F, which is taken in the order given by the branch positions.
fn run_branches(
    plans: Vec<BranchPlan<'_>>,
    profile: &SupportIntervalProfile,
    lambda: f64,
    eps: f64,
    upper: f64,
    lower: f64,
    rank_tol: f64,
) -> Result<L2rVerification> {
    let mut slots: Vec<(usize, SampledFunction, SampledFunction, f64)> = Vec::new();
    let mut results = Vec::new();
    for plan in plans {
        let op = branch_operator(plan.branch, lambda, profile)?;
        check_branch_schedule(profile, plan.branch, &plan.schedule, plan.n_terms)?;
        let generator =
            build_branch_generator(&op, plan.family, &plan.schedule, upper, plan.n_terms)?;
        let rows = (1..=plan.section)
            .map(|k| {
                orthogonal_row(
                    &op,
                    plan.family,
                    &plan.schedule,
                    k,
                    plan.n_terms,
                    upper,
                    branch_budget(eps, k),
                )
                .map(|(row, _)| row)
            })
            .collect::<Result<Vec<_>>>()?;
        let orbit = suborbit(&op, plan.family, &plan.schedule, plan.section, plan.n_terms)?;
        for (k, element) in orbit.into_iter().enumerate() {
            slots.push((
                plan.positions[k],
                plan.family[k].clone(),
                element,
                branch_budget(eps, k + 1),
            ));
        }
        results.push(BranchVerification {
            branch: plan.branch,
            section: plan.section,
            n_terms: plan.n_terms,
            schedule: plan.schedule.all_steps().to_vec(),
            denominator: plan.schedule.denominator(),
            schedule_rules: plan.schedule.provenance().to_vec(),
            generator: generator.summary(),
            rows,
        });
    }
    slots.sort_by_key(|s| s.0);
    let original: Vec<_> = slots.iter().map(|s| s.1.clone()).collect();
    let union: Vec<_> = slots.iter().map(|s| s.2.clone()).collect();
    let budgets: Vec<_> = slots.iter().map(|s| s.3).collect();

    let domination = domination_with_budgets(&original, &union, &budgets)?;
    let gap = synthesis_gap(&original, &union)?;
    let margin = independence_margin(&union)?;
    let perturbation = perturbation_analysis(&original, &union, eps, lower, upper, rank_tol)?;

    let mut verification = L2rVerification {
        lambda,
        epsilon: eps,
        upper_bound: upper,
        lower_bound: lower,
        cutoff: profile.length_bound(),
        profile: profile.clone(),
        positive: None,
        negative: None,
        domination,
        synthesis_gap: gap,
        eps_approximation: gap * gap <= eps,
        independence_margin: margin,
        perturbation,
        all_pass: false,
    };
    for r in results {
        match r.branch {
            Branch::Positive => verification.positive = Some(r),
            Branch::Negative => verification.negative = Some(r),
        }
    }
    verification.all_pass = [&verification.positive, &verification.negative]
        .into_iter()
        .flatten()
        .all(|b| b.rows.iter().all(|r| r.pass))
        && verification.domination.holds
        && verification.eps_approximation
        && margin > INDEPENDENCE_THRESHOLD
        && verification.perturbation.report.all_bounds_hold;
    Ok(verification)
}

/// The part of F that the first `section` elements of each branch cover, in
/// the order of F.
fn covered_section(partition: &Partition, section: usize) -> Vec<SampledFunction> {
    let mut picked: Vec<(usize, &SampledFunction)> = partition
        .positive_positions
        .iter()
        .zip(&partition.positive)
        .take(section)
        .chain(
            partition
                .negative_positions
                .iter()
                .zip(&partition.negative)
                .take(section),
        )
        .map(|(&p, f)| (p, f))
        .collect();
    picked.sort_by_key(|p| p.0);
    picked.into_iter().map(|p| p.1.clone()).collect()
}

fn check_epsilon(eps: f64, lower: f64) -> Result<()> {
    if !(eps > 0.0) || eps >= lower {
        return Err(Error::precondition(
            "epsilon",
            format!("must lie strictly between 0 and the lower frame bound {lower}, got {eps}"),
        ));
    }
    Ok(())
}

/// Partition, recursive schedules, generators, per-branch tables and the
/// checks on the union.
pub fn verify_l2r(family: &[SampledFunction], params: &L2rParams) -> Result<L2rVerification> {
    if params.section == 0 {
        return Err(Error::precondition("section", "must be at least 1"));
    }
    let partition = partition_frame(family)?;
    let covered = covered_section(&partition, params.section);
    let lower = empirical_frame_bounds(&covered, params.rank_tol)?.lower;
    let sizes = [
        branch_sizes(partition.positive.len(), params.section, params.n_terms)?,
        branch_sizes(partition.negative.len(), params.section, params.n_terms)?,
    ];
    let upper = match params.upper_bound {
        Some(b) => b,
        None => {
            let mut head: Vec<_> = partition.positive[..sizes[0].1].to_vec();
            head.extend_from_slice(&partition.negative[..sizes[1].1]);
            power_of_two_bound(empirical_frame_bounds(&head, params.rank_tol)?.upper).1
        }
    };
    check_epsilon(params.epsilon, lower)?;

    let mut plans = Vec::with_capacity(2);
    for ((branch, fam, pos), (k, nt)) in [
        (Branch::Positive, &partition.positive, &partition.positive_positions),
        (Branch::Negative, &partition.negative, &partition.negative_positions),
    ]
    .into_iter()
    .zip(sizes)
    {
        if fam.is_empty() {
            continue;
        }
        let schedule = if nt < fam.len() {
            branch_schedule(&partition.profile, branch, params.lambda, upper, params.epsilon, nt + 1)?
        } else {
            extend_schedule(&partition.profile, branch, params.lambda, upper, params.epsilon, nt)?
        };
        plans.push(BranchPlan {
            branch,
            family: fam,
            positions: pos,
            schedule,
            section: k,
            n_terms: nt,
        });
    }
    run_branches(
        plans,
        &partition.profile,
        params.lambda,
        params.epsilon,
        upper,
        lower,
        params.rank_tol,
    )
}

/// The schedule of a whole branch of `len` elements plus the power after
/// its last element, which only enters the tail bound.
fn extend_schedule(
    profile: &SupportIntervalProfile,
    branch: Branch,
    lambda: f64,
    upper: f64,
    eps: f64,
    len: usize,
) -> Result<PowerSchedule> {
    let base = branch_schedule(profile, branch, lambda, upper, eps, len)?;
    let mut steps = base.all_steps().to_vec();
    let mut provenance = base.provenance().to_vec();
    let support = profile.support_requirement(branch, len).max(0) as u64;
    let budget = ceil_to_grid(budget_gap(len, lambda, 2.0 * upper / eps), profile.q)?;
    steps.push(steps[len - 1] + support.max(budget));
    provenance.push(if support >= budget { GapRule::Support } else { GapRule::Budget });
    PowerSchedule::new(steps, profile.q, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    /// B = 2^N; defaults to ⌈log₂ B_emp⌉ + 1 over the whole window, at
    /// least 1.
    #[serde(rename = "N")]
    pub n: Option<u32>,
    /// ε = 2^{−j}.
    pub j: u32,
    pub section: usize,
    pub n_terms: Option<usize>,
    pub rank_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborVerification {
    pub spec_window: (u32, u32),
    #[serde(rename = "N")]
    pub n: u32,
    pub j: u32,
    pub support_length: f64,
    pub positive_indices: Vec<(i64, i64)>,
    pub negative_indices: Vec<(i64, i64)>,
    pub unit_step_path: bool,
    /// Every ℓ_k and r_k is at most k.
    pub support_indices_ok: bool,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub verification: L2rVerification,
    pub all_pass: bool,
}

/// ⌈log₂ B_emp⌉ + 1, at least 1.
pub fn default_gabor_exponent(b_emp: f64) -> u32 {
    let n = b_emp.log2().ceil() as i64 + 1;
    n.max(1) as u32
}

/// The Gabor pipeline with λ = √2 and the closed-form schedules.
pub fn verify_gabor(spec: &GaborSpec, params: &GaborParams) -> Result<GaborVerification> {
    let lambda = std::f64::consts::SQRT_2;
    let family = gabor_family(spec)?;
    let all = family.interleaved();
    let n = match params.n {
        Some(n) => n,
        None => default_gabor_exponent(empirical_frame_bounds(&all, params.rank_tol)?.upper),
    };
    let upper = 2f64.powi(n as i32);
    let eps = 0.5f64.powi(params.j as i32);
    if params.section == 0 {
        return Err(Error::precondition("section", "must be at least 1"));
    }
    let len = family.positive.elements.len();
    let (k, nt) = branch_sizes(len, params.section, params.n_terms)?;
    let (alpha, gamma) = gabor_schedules(spec, n, params.j, nt + 1)?;

    let partition = partition_frame(&all)?;
    let covered = covered_section(&partition, k);
    let lower = empirical_frame_bounds(&covered, params.rank_tol)?.lower;
    check_epsilon(eps, lower)?;

    let plans = vec![
        BranchPlan {
            branch: Branch::Positive,
            family: &partition.positive,
            positions: &partition.positive_positions,
            schedule: alpha.clone(),
            section: k,
            n_terms: nt,
        },
        BranchPlan {
            branch: Branch::Negative,
            family: &partition.negative,
            positions: &partition.negative_positions,
            schedule: gamma.clone(),
            section: k,
            n_terms: nt,
        },
    ];
    let verification = run_branches(plans, &partition.profile, lambda, eps, upper, lower, params.rank_tol)?;
    let support_indices_ok = [&family.positive, &family.negative]
        .iter()
        .all(|b| b.support_index.iter().enumerate().all(|(i, &l)| l <= i + 1));
    let all_pass = verification.all_pass && support_indices_ok;
    Ok(GaborVerification {
        spec_window: (spec.m_range, spec.n_range),
        n,
        j: params.j,
        support_length: spec.support_length()?,
        positive_indices: family.positive.indices[..k].to_vec(),
        negative_indices: family.negative.indices[..k].to_vec(),
        unit_step_path: family.positive.unit_step_path,
        support_indices_ok,
        alpha: alpha.alphas(),
        gamma: gamma.alphas(),
        verification,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::orbit_terms;
    use crate::frame_algebra::DEFAULT_REL_TOL;
    use crate::vector::Element;
    use std::f64::consts::SQRT_2;

    fn chi(q: u32, a: f64, b: f64) -> SampledFunction {
        SampledFunction::indicator(q, a, b).unwrap()
    }

    fn onb_spec(m_range: u32, n_range: u32) -> GaborSpec {
        GaborSpec {
            window: chi(16, 0.0, 1.0),
            a: 1.0,
            b: 1.0,
            m_range,
            n_range,
        }
    }

    #[test]
    fn partition_examples() {
        let p = partition_frame(&[chi(4, 0.0, 1.0), chi(4, -1.0, 0.0)]).unwrap();
        assert_eq!(p.positive, vec![chi(4, 0.0, 1.0)]);
        assert_eq!(p.negative, vec![chi(4, -1.0, 0.0)]);
        assert_eq!(p.profile.length_bound(), 1.0);

        let p = partition_frame(&[chi(4, 0.0, 1.0), chi(4, 2.0, 3.0)]).unwrap();
        assert!(p.negative_empty() && !p.positive_empty());

        let spec = onb_spec(1, 2);
        let atoms: Vec<_> = (-2..=2).map(|n| spec.atom(0, n).unwrap()).collect();
        let p = partition_frame(&atoms).unwrap();
        assert_eq!(p.positive_positions, vec![2, 3, 4]);
        assert_eq!(p.negative_positions, vec![0, 1]);
    }

    #[test]
    fn schedule_gaps_use_the_right_requirements() {
        let q = 4;
        let g: Vec<_> = (1..=5).map(|k| chi(q, 0.0, k as f64)).collect();
        let h: Vec<_> = (1..=5).map(|k| chi(q, -(k as f64), -(k as f64) + 0.5)).collect();
        let mut all = g.clone();
        all.extend(h);
        let p = partition_frame(&all).unwrap();
        let (alpha, gamma) = schedules_l2r(&p.profile, SQRT_2, 2.0, 0.5, 5).unwrap();
        assert_eq!((alpha.steps(1), gamma.steps(1)), (0, 0));
        // b(k) = k against the budget k + 4.
        for k in 1..5 {
            assert_eq!(alpha.gap(k), k as f64 + 4.0);
        }
        // L = 5; L − c(k) = 5 + k exceeds the budget k + 4.
        for k in 1..5 {
            assert_eq!(gamma.gap(k), 5.0 + k as f64);
            assert_eq!(gamma.rule(k + 1), GapRule::Support);
        }
    }

    #[test]
    fn two_element_branch_generator_and_residual() {
        let q = 8;
        let fam = vec![chi(q, 0.0, 1.0), chi(q, 0.0, 1.0)];
        let p = partition_frame(&fam).unwrap();
        let sched = PowerSchedule::new(vec![0, 5 * q as u64, 11 * q as u64], q, vec![GapRule::Origin; 3]).unwrap();
        let op = branch_operator(Branch::Positive, SQRT_2, &p.profile).unwrap();
        let gen = build_branch_generator(&op, &p.positive, &sched, 2.0, 2).unwrap();
        let phi = gen.phi.materialize().unwrap();
        let expected = chi(q, 0.0, 1.0)
            .add_scaled(&chi(q, 5.0, 6.0), 2f64.powf(-2.5).into())
            .unwrap();
        assert!(phi.sub(&expected).unwrap().norm() < 1e-16);

        let r = residual_l2r(Branch::Positive, &p.positive, &p.profile, &sched, SQRT_2, 2.0, 0.5, 1, 2)
            .unwrap();
        assert_eq!(r.measured, 2f64.powi(-5));

        let single = build_branch_generator(&op, &p.positive[..1], &sched, 2.0, 1).unwrap();
        assert_eq!(single.phi.materialize().unwrap(), chi(q, 0.0, 1.0));
        let r = residual_l2r(Branch::Positive, &p.positive, &p.profile, &sched, SQRT_2, 2.0, 0.5, 1, 1)
            .unwrap();
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn overlapping_blocks_are_a_schedule_violation() {
        let q = 4;
        let fam = vec![chi(q, 0.0, 3.0), chi(q, 0.0, 1.0)];
        let p = partition_frame(&fam).unwrap();
        let sched = PowerSchedule::new(vec![0, 4, 40], q, vec![GapRule::Origin; 3]).unwrap();
        let op = branch_operator(Branch::Positive, SQRT_2, &p.profile).unwrap();
        assert!(matches!(
            build_branch_generator(&op, &p.positive, &sched, 2.0, 2),
            Err(Error::ScheduleViolation { .. })
        ));
    }

    #[test]
    fn earlier_blocks_vanish_exactly() {
        let spec = onb_spec(2, 3);
        let fam = gabor_family(&spec).unwrap();
        let (alpha, gamma) = gabor_schedules(&spec, 1, 2, 9).unwrap();
        let p = partition_frame(&fam.interleaved()).unwrap();
        for (branch, f, s) in [
            (Branch::Positive, &p.positive, &alpha),
            (Branch::Negative, &p.negative, &gamma),
        ] {
            let op = branch_operator(branch, SQRT_2, &p.profile).unwrap();
            for k in 1..=8 {
                let t = orbit_terms(&op, f, s, k, 8).unwrap();
                assert!(t.back.is_empty());
            }
        }
    }

    fn check_path(m_range: u32, rows: u32) {
        let (path, unit) = gabor_path(m_range, rows);
        let expected = (2 * m_range as usize + 1) * rows as usize;
        assert_eq!(path.len(), expected);
        let mut seen = std::collections::BTreeSet::new();
        assert!(path.iter().all(|p| seen.insert(*p)));
        if rows > 0 {
            assert_eq!(path[0], (0, 0));
        }
        for w in path.windows(2) {
            let dm = w[0].0.abs_diff(w[1].0);
            let dn = w[0].1.abs_diff(w[1].1);
            assert!(dn <= 1);
            if unit {
                assert_eq!(dm + dn as u64, 1, "{w:?}");
            }
        }
        let expected_unit = m_range == 0 || rows.is_multiple_of(2) || (m_range.is_multiple_of(2) && rows >= 2);
        assert_eq!(unit, expected_unit);
    }

    #[test]
    fn paths_cover_the_window() {
        for m in 0..5 {
            for rows in 1..6 {
                check_path(m, rows);
            }
        }
    }

    #[test]
    fn gabor_first_elements_and_support_indices() {
        let spec = onb_spec(2, 3);
        let fam = gabor_family(&spec).unwrap();
        assert_eq!(fam.positive.elements[0], spec.window);
        assert_eq!(fam.negative.elements[0], spec.window.translate(-16));
        for b in [&fam.positive, &fam.negative] {
            for (i, &l) in b.support_index.iter().enumerate() {
                assert!(l <= i + 1);
            }
            // Consecutive supports differ by at most one translate.
            for w in b.elements.windows(2) {
                let (s0, _) = w[0].support_steps().unwrap();
                let (s1, _) = w[1].support_steps().unwrap();
                assert!(s0.abs_diff(s1) <= 16);
            }
            // Modulation keeps norms.
            for e in &b.elements {
                assert!((e.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gabor_closed_forms() {
        let spec = onb_spec(2, 3);
        let (alpha, gamma) = gabor_schedules(&spec, 1, 1, 11).unwrap();
        assert_eq!(&alpha.alphas()[..4], &[0.0, 6.0, 14.0, 24.0]);
        assert_eq!(&gamma.alphas()[..4], &[0.0, 7.0, 16.0, 27.0]);
        for k in 1..=10 {
            let kf = k as f64;
            assert_eq!(alpha.gap(k), 1.0 + 2.0 * kf - 1.0 + 1.0 + 1.0 + 2.0);
            assert_eq!(gamma.gap(k), 1.0 + 2.0 * kf + 1.0 + 1.0 + 2.0);
        }
    }

    #[test]
    fn gabor_pipeline_passes() {
        let spec = onb_spec(2, 3);
        let params = GaborParams {
            n: Some(1),
            j: 2,
            section: 6,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_gabor(&spec, &params).unwrap();
        assert!(v.all_pass, "{:#?}", v.verification.perturbation);
        assert_eq!(&v.alpha[..4], &[0.0, 7.0, 16.0, 27.0]);
        assert!(v.unit_step_path);
    }

    #[test]
    fn single_branch_run() {
        let q = 4;
        let fam: Vec<_> = (0..6).map(|k| chi(q, k as f64, k as f64 + 1.0)).collect();
        let params = L2rParams {
            lambda: SQRT_2,
            epsilon: 0.25,
            upper_bound: None,
            section: 4,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_l2r(&fam, &params).unwrap();
        assert!(v.negative.is_none());
        assert!(v.all_pass);
    }

    #[test]
    fn large_epsilon_rejected() {
        let fam = vec![chi(4, 0.0, 1.0), chi(4, -1.0, 0.0)];
        let params = L2rParams {
            lambda: SQRT_2,
            epsilon: 1.0,
            upper_bound: None,
            section: 1,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        assert!(matches!(
            verify_l2r(&fam, &params),
            Err(Error::Precondition { field: "epsilon", .. })
        ));
    }
}
