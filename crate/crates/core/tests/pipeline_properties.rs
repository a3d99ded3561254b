use num_complex::Complex64;
use proptest::prelude::*;

use suborbit::approx_l2n::{
    build_schedule, support_profile, verify_finite_support, L2nParams, ScheduleRule,
};
use suborbit::approx_l2r::{
    branch_operator, gabor_family, partition_frame, verify_gabor, GaborParams, GaborSpec,
};
use suborbit::approx_localized::{
    exponential_bump_family, schedule_localized, verify_localized, LocalizedParams,
    DEFAULT_TRUNC_TOL,
};
use suborbit::construction::{orbit_terms, shifted_blocks};
use suborbit::frame_algebra::{empirical_frame_bounds, DEFAULT_REL_TOL};
use suborbit::operators::{Branch, WeightedShift};
use suborbit::schedule::PowerSchedule;
use suborbit::vector::Supported;
use suborbit::{CoordinateVector, SampledFunction};

/// Up to `k` elements, each supported in {1, …, m} with m ≤ 5 and a
/// nonzero last entry.
fn sparse_family() -> impl Strategy<Value = Vec<CoordinateVector>> {
    let element = (1usize..=5).prop_flat_map(|m| {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, any::<bool>()), m).prop_map(|raw| {
            let last = raw.len();
            CoordinateVector::from_entries(raw.into_iter().enumerate().filter_map(
                |(i, (re, im, keep))| {
                    let c = Complex64::new(re, im);
                    // Keep the top coordinate so m(k) is what was drawn.
                    (keep || i + 1 == last).then_some((i + 1, c + if i + 1 == last { 2.0 } else { 0.0 }))
                },
            ))
            .unwrap()
        })
    });
    prop::collection::vec(element, 1..=10)
}

fn lambda() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.2), Just(std::f64::consts::SQRT_2), Just(2.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn finite_support_rows_respect_bound_and_budget(
        family in sparse_family(),
        lambda in lambda(),
        fraction in 0.05..0.9f64,
    ) {
        let lower = empirical_frame_bounds(&family, DEFAULT_REL_TOL).unwrap().lower;
        prop_assume!(lower > 1e-6);
        let params = L2nParams {
            lambda,
            epsilon: fraction * lower,
            upper_bound: None,
            section: family.len(),
            n_terms: None,
            rule: ScheduleRule::FiniteSupport,
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_finite_support(&family, &params).unwrap();
        for r in &v.rows {
            prop_assert!(r.measured + r.tail <= r.bound, "{:?}", r);
            prop_assert!(r.measured + r.tail <= r.budget, "{:?}", r);
        }
        prop_assert!(v.independence_margin > 0.0);
    }

    #[test]
    fn blocks_are_disjoint_and_earlier_blocks_vanish(
        family in sparse_family(),
        lambda in lambda(),
        eps in 0.01..0.5f64,
    ) {
        let k = family.len();
        let sched = build_schedule(&family, ScheduleRule::FiniteSupport, lambda, 4.0, eps, k + 1).unwrap();
        let op = WeightedShift::new(lambda).unwrap();
        let m = support_profile(&family).unwrap();
        let blocks = shifted_blocks(&op, &family, &sched, k).unwrap();
        for (n, b) in blocks.iter().enumerate() {
            let a = sched.steps(n + 1) as usize;
            let v = b.base();
            prop_assert!(v.min_index().unwrap() > a);
            prop_assert!(v.max_index().unwrap() <= a + m[n]);
            if n + 1 < k {
                prop_assert!(v.max_index().unwrap() <= sched.steps(n + 2) as usize);
            }
        }
        for row in 1..=k {
            let terms = orbit_terms(&op, &family, &sched, row, k).unwrap();
            prop_assert!(terms.back.is_empty(), "T^α(k) U^α(n) f_n ≠ 0 for some n < {}", row);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn localized_rows_split_and_meet_budget(
        beta in 0.3..1.2f64,
        rate in 0.2..0.8f64,
        count in 4usize..=10,
        fraction in 0.05..0.5f64,
    ) {
        // λ strictly between 1 and e^β.
        let lambda = 1.0 + rate * (beta.exp() - 1.0);
        let family = exponential_bump_family(count, 1.0, beta, DEFAULT_TRUNC_TOL).unwrap();
        let section = (count / 2).max(2);
        let lower = empirical_frame_bounds(&family.elements[..section], DEFAULT_REL_TOL).unwrap().lower;
        let params = LocalizedParams {
            lambda,
            c: 1.0,
            beta,
            epsilon: fraction * lower,
            upper_bound: None,
            section,
            n_terms: None,
            rank_tol: DEFAULT_REL_TOL,
        };
        let v = verify_localized(&family, &params).unwrap();
        for r in &v.rows {
            prop_assert!(r.measured_back <= r.bound_back * (1.0 + 1e-12), "{:?}", r);
            prop_assert!(r.measured_forward <= r.bound_forward * (1.0 + 1e-12), "{:?}", r);
            prop_assert!(r.total() * r.total() <= r.budget, "{:?}", r);
        }
        let s = &v.schedule;
        for k in 2..s.len() {
            prop_assert!(s[k] + 2 >= s[k - 1] + (k + 1) as u64);
        }
    }

    #[test]
    fn localized_schedules_are_admissible(
        beta in 0.1..2.0f64,
        rate in 0.05..0.95f64,
        eps in 1e-6..1.0f64,
        upper in 1.0..16.0f64,
    ) {
        let lambda = 1.0 + rate * (beta.exp() - 1.0);
        let s = schedule_localized(1.0, beta, lambda, upper, eps, 12).unwrap();
        for k in 2..=12 {
            prop_assert!(s.steps(k) + 2 >= s.steps(k - 1) + k as u64);
            prop_assert!(s.steps(k) > s.steps(k - 1));
        }
    }
}

fn gabor(m_range: u32, n_range: u32) -> GaborSpec {
    GaborSpec {
        window: SampledFunction::indicator(8, 0.0, 1.0).unwrap(),
        a: 1.0,
        b: 1.0,
        m_range,
        n_range,
    }
}

fn hull_in_neighbourhood(next: (i64, i64), prev: (i64, i64), a: i64) -> bool {
    // The union of the three shifted copies is one interval when a ≤ length.
    let covered = |x: i64| [-a, 0, a].iter().any(|s| prev.0 + s <= x && x <= prev.1 + s);
    covered(next.0) && covered(next.1 - 1) && next.1 - next.0 <= prev.1 - prev.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gabor_branches_share_the_budget_and_cut_off_earlier_terms(
        m_range in 0u32..=2,
        n_range in 1u32..=3,
        j in 1u32..=3,
    ) {
        let spec = gabor(m_range, n_range);
        let params = GaborParams { n: None, j, section: 4, n_terms: None, rank_tol: DEFAULT_REL_TOL };
        let v = verify_gabor(&spec, &params).unwrap();
        let eps = 0.5f64.powi(j as i32);
        let budgets: f64 = v.verification.domination.rows.iter().map(|r| r.budget).sum();
        let measured: f64 = v.verification.domination.rows.iter().map(|r| r.measured).sum();
        prop_assert!(budgets <= eps * (1.0 + 1e-15));
        prop_assert!(measured <= eps);

        let fam = gabor_family(&spec).unwrap();
        let partition = partition_frame(&fam.interleaved()).unwrap();
        for (branch, elements, run) in [
            (Branch::Positive, &partition.positive, &v.verification.positive),
            (Branch::Negative, &partition.negative, &v.verification.negative),
        ] {
            let Some(run) = run else { continue };
            let op = branch_operator(branch, v.verification.lambda, &partition.profile).unwrap();
            let sched = PowerSchedule::new(run.schedule.clone(), run.denominator, run.schedule_rules.clone()).unwrap();
            for k in 1..=run.section {
                let terms = orbit_terms(&op, elements, &sched, k, run.n_terms).unwrap();
                prop_assert!(terms.back.is_empty(), "{:?} row {}", branch, k);
            }
        }
    }

    #[test]
    fn gabor_supports_move_by_at_most_one_step(m_range in 0u32..=3, n_range in 1u32..=4) {
        let spec = gabor(m_range, n_range);
        let a = spec.a_steps().unwrap();
        let fam = gabor_family(&spec).unwrap();
        for branch in [&fam.positive, &fam.negative] {
            for w in branch.elements.windows(2) {
                let (prev, next) = (w[0].support_hull().unwrap(), w[1].support_hull().unwrap());
                prop_assert!(hull_in_neighbourhood(next, prev, a), "{:?} -> {:?}", prev, next);
            }
            for (k, &l) in branch.support_index.iter().enumerate() {
                prop_assert!(l <= k + 1);
            }
        }
    }
}
