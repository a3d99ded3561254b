//! The weighted shifts on ℓ²(ℕ) and the truncated weighted translations on
//! L²(ℝ), applied at arbitrary powers in closed form.
//!
//! Powers are kept in integer units: whole steps for the shifts and grid
//! cells (1/q) for translations. The λ factor goes into the exponent ledger
//! of the returned [`ScaledVector`] and is never multiplied out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaled::ScaledVector;
use crate::vector::{grid_steps, CoordinateVector, Element, SampledFunction};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::precondition(
            "lambda",
            format!("must be a finite number above 1, got {lambda}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    /// T(x₁, x₂, …) = λ(x₂, x₃, …).
    Left,
    /// U(x₁, x₂, …) = λ⁻¹(0, x₁, x₂, …).
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPower {
    direction: ShiftDirection,
    power: u64,
    lambda: f64,
}

impl ShiftPower {
    pub fn new(direction: ShiftDirection, power: u64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            direction,
            power,
            lambda,
        })
    }

    pub fn direction(&self) -> ShiftDirection {
        self.direction
    }

    pub fn power(&self) -> u64 {
        self.power
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn apply(&self, v: &CoordinateVector) -> ScaledVector<CoordinateVector> {
        let p = self.power as usize;
        let e = self.power as i64;
        match self.direction {
            ShiftDirection::Left => ScaledVector::new(v.shift_left(p), self.lambda, e, 1),
            ShiftDirection::Right => ScaledVector::new(v.shift_right(p), self.lambda, -e, 1),
        }
    }
}

/// T^p v = λ^p (v_{p+1}, v_{p+2}, …).
pub fn apply_t_power(
    v: &CoordinateVector,
    p: u64,
    lambda: f64,
) -> Result<ScaledVector<CoordinateVector>> {
    Ok(ShiftPower::new(ShiftDirection::Left, p, lambda)?.apply(v))
}

/// U^p v = λ^{−p} (0, …, 0, v₁, v₂, …).
pub fn apply_u_power(
    v: &CoordinateVector,
    p: u64,
    lambda: f64,
) -> Result<ScaledVector<CoordinateVector>> {
    Ok(ShiftPower::new(ShiftDirection::Right, p, lambda)?.apply(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TranslationKind {
    /// f ↦ λ f(·+1) χ_[0,∞).
    T1,
    /// f ↦ λ⁻¹ f(·−1).
    U1,
    /// f ↦ λ f(·−1) χ_(−∞,L].
    T2,
    /// f ↦ λ⁻¹ f(·+1).
    U2,
}

/// A real power t of one of the four translation operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationPower {
    pub kind: TranslationKind,
    pub power: f64,
    pub lambda: f64,
    /// The cutoff L of T₂; ignored by the other three.
    #[serde(default)]
    pub cutoff: f64,
}

impl TranslationPower {
    pub fn new(kind: TranslationKind, power: f64, lambda: f64, cutoff: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(power >= 0.0) || !power.is_finite() {
            return Err(Error::precondition("power", format!("must be >= 0, got {power}")));
        }
        Ok(Self {
            kind,
            power,
            lambda,
            cutoff,
        })
    }
}

/// Applies `op` to `f`; the power and the cutoff must both land on the grid
/// of `f`. The result's exponent is counted in units of 1/q.
pub fn apply_translation_power(
    f: &SampledFunction,
    op: &TranslationPower,
) -> Result<ScaledVector<SampledFunction>> {
    check_lambda(op.lambda)?;
    let q = f.q();
    let steps = grid_steps(op.power, q).map_err(|_| Error::GridMismatch {
        steps: op.power * q as f64,
        q,
        grid: q,
    })?;
    let cutoff_steps = match op.kind {
        TranslationKind::T2 => grid_steps(op.cutoff, q)?,
        _ => 0,
    };
    let base = translate_steps(f, op.kind, steps as u64, cutoff_steps);
    let exponent = match op.kind {
        TranslationKind::T1 | TranslationKind::T2 => steps,
        TranslationKind::U1 | TranslationKind::U2 => -steps,
    };
    Ok(ScaledVector::new(base, op.lambda, exponent, q))
}

/// The unweighted part of a translation power, `steps` grid cells at a time.
fn translate_steps(
    f: &SampledFunction,
    kind: TranslationKind,
    steps: u64,
    cutoff_steps: i64,
) -> SampledFunction {
    if steps == 0 {
        return f.clone();
    }
    let s = steps as i64;
    match kind {
        TranslationKind::T1 => f.translate(-s).keep_from(0),
        TranslationKind::U1 => f.translate(s),
        // Cell i covers [i/q, (i+1)/q), so χ_(−∞,L] keeps cells i < L·q.
        TranslationKind::T2 => f.translate(s).keep_through(cutoff_steps - 1),
        TranslationKind::U2 => f.translate(-s),
    }
}

/// A forward operator T with a right inverse U, TU = I, both acting on
/// scaled vectors. Powers are counted in units of 1/`denominator`.
pub trait OrbitOperator {
    type Vector: Element;

    fn lambda(&self) -> f64;

    fn denominator(&self) -> u32;

    /// T to the power `steps`/denominator.
    fn forward(&self, v: &ScaledVector<Self::Vector>, steps: u64) -> ScaledVector<Self::Vector>;

    /// U to the power `steps`/denominator.
    fn backward(&self, v: &ScaledVector<Self::Vector>, steps: u64) -> ScaledVector<Self::Vector>;

    fn lift(&self, v: &Self::Vector) -> ScaledVector<Self::Vector> {
        ScaledVector::unscaled(v.clone(), self.lambda(), self.denominator())
    }
}

fn check_units<V: Element>(v: &ScaledVector<V>, lambda: f64, den: u32) {
    assert!(
        v.lambda() == lambda && v.denominator() == den,
        "scaled vector does not match the operator's lambda or exponent unit"
    );
}

/// The pair (T, U) of weighted shifts on ℓ²(ℕ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedShift {
    lambda: f64,
}

impl WeightedShift {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda })
    }
}

impl OrbitOperator for WeightedShift {
    type Vector = CoordinateVector;

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn denominator(&self) -> u32 {
        1
    }

    fn forward(&self, v: &ScaledVector<CoordinateVector>, steps: u64) -> ScaledVector<CoordinateVector> {
        check_units(v, self.lambda, 1);
        v.map_base(|b| b.shift_left(steps as usize)).shifted(steps as i64)
    }

    fn backward(&self, v: &ScaledVector<CoordinateVector>, steps: u64) -> ScaledVector<CoordinateVector> {
        check_units(v, self.lambda, 1);
        v.map_base(|b| b.shift_right(steps as usize)).shifted(-(steps as i64))
    }
}

/// Which half of the line a translation pair serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// (T₁, U₁): moves mass left and cuts at 0.
    Positive,
    /// (T₂, U₂): moves mass right and cuts at L.
    Negative,
}

/// The pair (T₁, U₁) or (T₂, U₂) on a grid of step 1/q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedTranslation {
    lambda: f64,
    q: u32,
    branch: Branch,
    cutoff_steps: i64,
}

impl TruncatedTranslation {
    pub fn positive(lambda: f64, q: u32) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            q,
            branch: Branch::Positive,
            cutoff_steps: 0,
        })
    }

    /// (T₂, U₂) with cutoff L.
    pub fn negative(lambda: f64, q: u32, cutoff: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            lambda,
            q,
            branch: Branch::Negative,
            cutoff_steps: grid_steps(cutoff, q)?,
        })
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff_steps as f64 / self.q as f64
    }

    fn kinds(&self) -> (TranslationKind, TranslationKind) {
        match self.branch {
            Branch::Positive => (TranslationKind::T1, TranslationKind::U1),
            Branch::Negative => (TranslationKind::T2, TranslationKind::U2),
        }
    }
}

impl OrbitOperator for TruncatedTranslation {
    type Vector = SampledFunction;

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn denominator(&self) -> u32 {
        self.q
    }

    fn forward(&self, v: &ScaledVector<SampledFunction>, steps: u64) -> ScaledVector<SampledFunction> {
        check_units(v, self.lambda, self.q);
        let kind = self.kinds().0;
        v.map_base(|b| translate_steps(b, kind, steps, self.cutoff_steps))
            .shifted(steps as i64)
    }

    fn backward(&self, v: &ScaledVector<SampledFunction>, steps: u64) -> ScaledVector<SampledFunction> {
        check_units(v, self.lambda, self.q);
        let kind = self.kinds().1;
        v.map_base(|b| translate_steps(b, kind, steps, self.cutoff_steps))
            .shifted(-(steps as i64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn e(k: usize) -> CoordinateVector {
        CoordinateVector::basis(k)
    }

    #[test]
    fn shift_examples() {
        let v = CoordinateVector::from_real([(2, 1.0), (5, -3.0)]).unwrap();
        let t0 = apply_t_power(&v, 0, SQRT_2).unwrap();
        assert_eq!((t0.base(), t0.exponent()), (&v, 0));

        let t = apply_t_power(&e(3), 2, SQRT_2).unwrap();
        assert_eq!((t.base(), t.exponent()), (&e(1), 2));
        assert!(apply_t_power(&e(2), 2, SQRT_2).unwrap().is_zero());

        let u = apply_u_power(&e(1), 3, SQRT_2).unwrap();
        assert_eq!((u.base(), u.exponent()), (&e(4), -3));
        let u0 = apply_u_power(&v, 0, SQRT_2).unwrap();
        assert_eq!(u0.base(), &v);

        assert!(apply_t_power(&v, 1, 1.0).is_err());
    }

    #[test]
    fn translation_examples() {
        let lambda = SQRT_2;
        let chi12 = SampledFunction::indicator(4, 1.0, 2.0).unwrap();
        let op = TranslationPower::new(TranslationKind::T1, 1.0, lambda, 0.0).unwrap();
        let r = apply_translation_power(&chi12, &op).unwrap();
        assert_eq!(r.base(), &SampledFunction::indicator(4, 0.0, 1.0).unwrap());
        assert_eq!((r.exponent(), r.denominator()), (4, 4));

        let chi01 = SampledFunction::indicator(4, 0.0, 1.0).unwrap();
        let op = TranslationPower::new(TranslationKind::U2, 2.0, lambda, 0.0).unwrap();
        let r = apply_translation_power(&chi01, &op).unwrap();
        assert_eq!(r.base(), &SampledFunction::indicator(4, -2.0, -1.0).unwrap());
        assert_eq!(r.lambda_power(), -2.0);

        let op = TranslationPower::new(TranslationKind::T1, 0.0, lambda, 0.0).unwrap();
        let r = apply_translation_power(&chi01, &op).unwrap();
        assert_eq!(r.base(), &chi01);
        // The zeroth power is the identity, cutoff included.
        let left = SampledFunction::indicator(4, -1.0, 0.0).unwrap();
        assert_eq!(apply_translation_power(&left, &op).unwrap().base(), &left);
    }

    #[test]
    fn off_grid_translation_rejected() {
        let f = SampledFunction::indicator(4, 0.0, 1.0).unwrap();
        let op = TranslationPower::new(TranslationKind::U1, 0.1, 2.0, 0.0).unwrap();
        assert!(matches!(
            apply_translation_power(&f, &op),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn t2_cuts_at_l() {
        let f = SampledFunction::indicator(2, -2.0, 0.0).unwrap();
        let op = TranslationPower::new(TranslationKind::T2, 1.5, 2.0, 1.0).unwrap();
        let r = apply_translation_power(&f, &op).unwrap();
        // f(x − 1.5) lives on [−0.5, 1.5); the cutoff keeps [−0.5, 1).
        assert_eq!(r.base(), &SampledFunction::indicator(2, -0.5, 1.0).unwrap());
    }

    fn sparse_vector() -> impl Strategy<Value = CoordinateVector> {
        prop::collection::btree_map(1usize..40, (-1.0f64..1.0, -1.0f64..1.0), 0..10).prop_map(|m| {
            CoordinateVector::from_entries(m.into_iter().map(|(j, (a, b))| (j, Complex64::new(a, b))))
                .unwrap()
        })
    }

    fn sampled_function() -> impl Strategy<Value = SampledFunction> {
        (1u32..9, -40i64..40, prop::collection::vec(-1.0f64..1.0, 0..24)).prop_map(|(q, i0, s)| {
            SampledFunction::new(q, i0, s.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn t_powers_compose(v in sparse_vector(), p in 0u64..=20, r in 0u64..=20) {
            let lambda = 1.7;
            let direct = apply_t_power(&v, p + r, lambda).unwrap();
            let inner = apply_t_power(&v, r, lambda).unwrap();
            let outer = apply_t_power(inner.base(), p, lambda).unwrap();
            prop_assert_eq!(direct.base(), outer.base());
            prop_assert_eq!(direct.exponent(), inner.exponent() + outer.exponent());
        }

        #[test]
        fn t_retracts_u(v in sparse_vector(), p in 0u64..=30) {
            let shift = WeightedShift::new(SQRT_2).unwrap();
            let x = shift.lift(&v);
            let back = shift.forward(&shift.backward(&x, p), p);
            prop_assert_eq!(back.base(), &v);
            prop_assert_eq!(back.exponent(), 0);

            let projected = shift.backward(&shift.forward(&x, p), p);
            let expect = CoordinateVector::from_entries(v.entries().filter(|(j, _)| *j > p as usize))
                .unwrap();
            prop_assert_eq!(projected.base(), &expect);
        }

        #[test]
        fn stepwise_t1_matches_closed_form(f in sampled_function(), n in 0u64..=64) {
            let q = f.q();
            let lambda = 1.3;
            let op = TruncatedTranslation::positive(lambda, q).unwrap();
            let mut x = op.lift(&f);
            for _ in 0..n {
                x = op.forward(&x, 1);
            }
            let t = n as f64 / q as f64;
            let closed = apply_translation_power(
                &f,
                &TranslationPower::new(TranslationKind::T1, t, lambda, 0.0).unwrap(),
            )
            .unwrap();
            prop_assert_eq!(x.base(), closed.base());
            prop_assert_eq!(x.exponent(), closed.exponent());
        }

        #[test]
        fn u_scales_norm_exactly(v in sparse_vector(), p in 0u64..=2000) {
            prop_assume!(!v.is_zero());
            let lambda = 1.9;
            let u = apply_u_power(&v, p, lambda).unwrap();
            let expect = v.norm().ln() - p as f64 * lambda.ln();
            prop_assert!((u.ln_norm() - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}
