//! Vectors carrying an exact power of λ beside their amplitudes.
//!
//! The constructions multiply by λ^{±α(k)} with α(k) growing quadratically in
//! k, which leaves double range quickly. A [`ScaledVector`] keeps the power in
//! an integer ledger and only touches floating point when asked to
//! materialize, and then only within range.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::vector::Element;

/// Largest |ln x| we are willing to form as a double. Keeps clear of both
/// overflow (ln f64::MAX ≈ 709.8) and the subnormal range (≈ −708.4).
pub const LN_RANGE: f64 = 700.0;

/// λ^power. A λ whose square rounds to within two ulps of an integer (√2,
/// √3, …) is taken to be that exact root, so half-integer powers of √2 come
/// out as correctly rounded powers of 2.
pub fn weight_power(lambda: f64, power: f64) -> f64 {
    let square = lambda * lambda;
    let whole = square.round();
    if whole >= 2.0 && (square - whole).abs() <= 2.0 * f64::EPSILON * whole {
        whole.powf(0.5 * power)
    } else {
        lambda.powf(power)
    }
}

/// The vector λ^{exponent/denominator} · base.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledVector<V> {
    base: V,
    lambda: f64,
    exponent: i64,
    denominator: u32,
}

impl<V: Element> ScaledVector<V> {
    /// Panics unless λ > 1 and `denominator > 0`.
    pub fn new(base: V, lambda: f64, exponent: i64, denominator: u32) -> Self {
        assert!(lambda > 1.0, "lambda must exceed 1");
        assert!(denominator > 0, "exponent denominator must be positive");
        Self {
            base,
            lambda,
            exponent,
            denominator,
        }
    }

    pub fn unscaled(base: V, lambda: f64, denominator: u32) -> Self {
        Self::new(base, lambda, 0, denominator)
    }

    pub fn base(&self) -> &V {
        &self.base
    }

    pub fn into_base(self) -> V {
        self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Exponent numerator, in units of 1/denominator.
    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn denominator(&self) -> u32 {
        self.denominator
    }

    /// The represented power of λ as a real number.
    pub fn lambda_power(&self) -> f64 {
        self.exponent as f64 / self.denominator as f64
    }

    /// ln of the scalar factor λ^{exponent/denominator}.
    pub fn ln_scale(&self) -> f64 {
        self.lambda_power() * self.lambda.ln()
    }

    /// ln ‖v‖, or −∞ for the zero vector.
    pub fn ln_norm(&self) -> f64 {
        let n = self.base.norm_sq();
        if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            0.5 * n.ln() + self.ln_scale()
        }
    }

    /// λ^{exponent/denominator} when it is a normal double.
    pub fn scale_factor(&self) -> Option<f64> {
        (self.ln_scale().abs() <= LN_RANGE).then(|| weight_power(self.lambda, self.lambda_power()))
    }

    /// ‖v‖; may overflow to ∞ or underflow to 0 for extreme exponents.
    pub fn norm(&self) -> f64 {
        match self.scale_factor() {
            Some(s) => self.base.norm() * s,
            None => self.ln_norm().exp(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        if 2.0 * self.ln_scale().abs() <= LN_RANGE {
            self.base.norm_sq() * weight_power(self.lambda, 2.0 * self.lambda_power())
        } else {
            (2.0 * self.ln_norm()).exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.base.is_zero()
    }

    /// Multiplies by λ^{delta/denominator}.
    pub fn shifted(mut self, delta: i64) -> Self {
        self.exponent += delta;
        self
    }

    pub fn map_base(&self, f: impl FnOnce(&V) -> V) -> Self {
        Self {
            base: f(&self.base),
            lambda: self.lambda,
            exponent: self.exponent,
            denominator: self.denominator,
        }
    }

    /// Moves the magnitude of the base into the exponent, leaving
    /// ‖base‖ within a half step of 1.
    pub fn renormalize(&self) -> Self {
        let n = self.base.norm_sq();
        if n == 0.0 {
            return Self {
                exponent: 0,
                ..self.clone()
            };
        }
        let step = self.lambda.ln() / self.denominator as f64;
        let shift = (0.5 * n.ln() / step).round() as i64;
        if shift == 0 {
            return self.clone();
        }
        let factor = weight_power(self.lambda, -(shift as f64) / self.denominator as f64);
        Self {
            base: self.base.scaled(Complex64::new(factor, 0.0)),
            lambda: self.lambda,
            exponent: self.exponent + shift,
            denominator: self.denominator,
        }
    }

    /// The plain vector, if the scale factor is representable.
    pub fn materialize(&self) -> Result<V> {
        if self.base.is_zero() || self.exponent == 0 {
            return Ok(self.base.clone());
        }
        let factor = self.scale_factor().ok_or(Error::ExponentOutOfRange {
            exponent: self.lambda_power(),
        })?;
        Ok(self.base.scaled(Complex64::new(factor, 0.0)))
    }

    /// True when both represent the same vector up to `rel_tol` relative to
    /// the larger norm. Comparison happens after shifting one exponent onto
    /// the other, so it works far outside double range.
    pub fn same_vector(&self, other: &Self, rel_tol: f64) -> bool {
        if self.lambda != other.lambda {
            return false;
        }
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return true,
            (true, false) | (false, true) => return false,
            _ => {}
        }
        let a = self.renormalize();
        let b = other.renormalize();
        let power = b.lambda_power() - a.lambda_power();
        if (power * self.lambda.ln()).abs() > LN_RANGE {
            return false;
        }
        let rebased = b.base.scaled(Complex64::new(weight_power(self.lambda, power), 0.0));
        let Ok(diff) = a.base.sub(&rebased) else {
            return false;
        };
        let scale = a.base.norm().max(rebased.norm());
        diff.norm() <= rel_tol * scale
    }
}

/// Result of adding scaled vectors that share λ and denominator.
#[derive(Debug, Clone)]
pub struct ScaledSum<V> {
    pub vector: ScaledVector<V>,
    /// ln of an upper bound on the norm of terms too small to represent
    /// beside the dominant one; −∞ if nothing was dropped.
    pub ln_dropped_norm: f64,
}

impl<V: Element> ScaledSum<V> {
    pub fn dropped_norm(&self) -> f64 {
        self.ln_dropped_norm.exp()
    }
}

/// ln(e^a + e^b) without overflow.
pub fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln Σ e^{x_i}.
pub fn ln_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, ln_add)
}

/// Adds the terms around the largest one. Terms whose contribution is below
/// double resolution relative to it are skipped, and their norms are
/// accumulated into [`ScaledSum::ln_dropped_norm`].
pub fn sum_scaled<V: Element>(
    terms: &[ScaledVector<V>],
    zero: V,
    lambda: f64,
    denominator: u32,
) -> Result<ScaledSum<V>> {
    let mut normalized = Vec::with_capacity(terms.len());
    for t in terms {
        if t.lambda != lambda || t.denominator != denominator {
            return Err(Error::IncompatibleOperands(
                "scaled vectors with different lambda or exponent units".into(),
            ));
        }
        if !t.is_zero() {
            normalized.push(t.renormalize());
        }
    }
    let Some(reference) = normalized.iter().max_by(|a, b| {
        a.ln_norm()
            .partial_cmp(&b.ln_norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    }) else {
        return Ok(ScaledSum {
            vector: ScaledVector::new(zero, lambda, 0, denominator),
            ln_dropped_norm: f64::NEG_INFINITY,
        });
    };
    let ref_exponent = reference.exponent;
    let ref_ln = reference.ln_norm();

    let mut base = zero;
    let mut ln_dropped = f64::NEG_INFINITY;
    for t in &normalized {
        let ln_norm = t.ln_norm();
        if ln_norm - ref_ln < -LN_RANGE {
            ln_dropped = ln_add(ln_dropped, ln_norm);
            continue;
        }
        let factor = weight_power(lambda, (t.exponent - ref_exponent) as f64 / denominator as f64);
        base = base.add_scaled(&t.base, Complex64::new(factor, 0.0))?;
    }
    Ok(ScaledSum {
        vector: ScaledVector::new(base, lambda, ref_exponent, denominator),
        ln_dropped_norm: ln_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::CoordinateVector;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn materialize_rejects_out_of_range() {
        let v = ScaledVector::new(CoordinateVector::basis(1), 2.0, 5000, 1);
        assert!(matches!(
            v.materialize(),
            Err(Error::ExponentOutOfRange { .. })
        ));
        let w = ScaledVector::new(CoordinateVector::basis(1), 2.0, -5000, 1);
        assert!(w.materialize().is_err());
        assert!((w.ln_norm() + 5000.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn equality_across_exponents() {
        let lambda = SQRT_2;
        let a = ScaledVector::new(
            CoordinateVector::from_real([(1, 2.0)]).unwrap(),
            lambda,
            0,
            1,
        );
        let b = ScaledVector::new(CoordinateVector::basis(1), lambda, 2, 1);
        assert!(a.same_vector(&b, 1e-14));
        let far = ScaledVector::new(CoordinateVector::basis(1), lambda, 4000, 1);
        let far2 = ScaledVector::new(
            CoordinateVector::from_real([(1, 2.0)]).unwrap(),
            lambda,
            3998,
            1,
        );
        assert!(far.same_vector(&far2, 1e-14));
        assert!(!far.same_vector(&b, 1e-3));
    }

    #[test]
    fn sum_drops_negligible_terms_with_accounting() {
        let lambda = 2.0;
        let big = ScaledVector::new(CoordinateVector::basis(1), lambda, 0, 1);
        let tiny = ScaledVector::new(CoordinateVector::basis(2), lambda, -2000, 1);
        let s = sum_scaled(&[big, tiny], CoordinateVector::zero(), lambda, 1).unwrap();
        assert_eq!(s.vector.materialize().unwrap(), CoordinateVector::basis(1));
        assert!((s.ln_dropped_norm + 2000.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn ln_sum_exp_matches_direct() {
        let xs = [0.1, -3.0, 2.5];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((ln_sum_exp(xs) - direct).abs() < 1e-14);
        assert_eq!(ln_sum_exp([]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn renormalize_preserves_vector(
            coords in prop::collection::btree_map(1usize..30, -1e3f64..1e3, 1..8),
            exponent in -50i64..=50,
            den in 1u32..5,
            lambda in 1.05f64..3.0,
        ) {
            let base = CoordinateVector::from_real(coords).unwrap();
            prop_assume!(!base.is_zero());
            let v = ScaledVector::new(base, lambda, exponent, den);
            let r = v.renormalize();
            let n = r.base().norm();
            prop_assert!(n >= 1.0 / lambda && n <= lambda);
            let a = v.materialize().unwrap();
            let b = r.materialize().unwrap();
            let err = a.sub(&b).unwrap().norm();
            prop_assert!(err <= 1e-12 * a.norm());
        }
    }
}
