use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{CoordinateVector, Element, SampledFunction, Vector};

/// An ordered family of vectors of one kind, optionally with declared frame
/// bounds. Element k (1-based in the mathematics) is `elements()[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFamily<V> {
    elements: Vec<V>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_upper: Option<f64>,
}

impl<V: Element> FrameFamily<V> {
    pub fn new(elements: Vec<V>) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptyFamily)?;
        for e in &elements[1..] {
            first.check_compatible(e)?;
        }
        Ok(Self {
            elements,
            declared_lower: None,
            declared_upper: None,
        })
    }

    pub fn with_bounds(mut self, lower: Option<f64>, upper: Option<f64>) -> Result<Self> {
        if let Some(a) = lower {
            if !(a > 0.0) {
                return Err(Error::precondition("declared_lower", "must be positive"));
            }
        }
        if let Some(b) = upper {
            if !(b > 0.0) {
                return Err(Error::precondition("declared_upper", "must be positive"));
            }
        }
        if let (Some(a), Some(b)) = (lower, upper) {
            if a > b {
                return Err(Error::precondition(
                    "declared_lower",
                    format!("lower bound {a} exceeds upper bound {b}"),
                ));
            }
        }
        self.declared_lower = lower;
        self.declared_upper = upper;
        Ok(self)
    }

    pub fn elements(&self) -> &[V] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<V> {
        self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element k, counting from 1.
    pub fn get(&self, k: usize) -> Option<&V> {
        k.checked_sub(1).and_then(|i| self.elements.get(i))
    }

    pub fn declared_lower(&self) -> Option<f64> {
        self.declared_lower
    }

    pub fn declared_upper(&self) -> Option<f64> {
        self.declared_upper
    }

    /// The first `k` elements; declared bounds are dropped because they
    /// describe the full family.
    pub fn section(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::OutOfRange { k, len: self.len() });
        }
        Self::new(self.elements[..k].to_vec())
    }
}

impl FrameFamily<Vector> {
    pub fn into_sequences(self) -> Result<FrameFamily<CoordinateVector>> {
        let elements = self
            .elements
            .into_iter()
            .map(|v| match v {
                Vector::Sequence(s) => Ok(s),
                Vector::Function(_) => Err(Error::IncompatibleOperands(
                    "expected sequence elements".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        FrameFamily::new(elements)?.with_bounds(self.declared_lower, self.declared_upper)
    }

    pub fn into_functions(self) -> Result<FrameFamily<SampledFunction>> {
        let elements = self
            .elements
            .into_iter()
            .map(|v| match v {
                Vector::Function(f) => Ok(f),
                Vector::Sequence(_) => Err(Error::IncompatibleOperands(
                    "expected function elements".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        FrameFamily::new(elements)?.with_bounds(self.declared_lower, self.declared_upper)
    }
}

/// e₁, …, e_n.
pub fn canonical_basis(n: usize) -> FrameFamily<CoordinateVector> {
    FrameFamily::new((1..=n).map(CoordinateVector::basis).collect())
        .expect("n >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mixed() {
        assert_eq!(
            FrameFamily::<CoordinateVector>::new(vec![]),
            Err(Error::EmptyFamily)
        );
        let mixed = vec![
            Vector::from(CoordinateVector::basis(1)),
            Vector::from(SampledFunction::indicator(4, 0.0, 1.0).unwrap()),
        ];
        assert!(FrameFamily::new(mixed).is_err());
        let grids = vec![
            SampledFunction::indicator(4, 0.0, 1.0).unwrap(),
            SampledFunction::indicator(8, 0.0, 1.0).unwrap(),
        ];
        assert!(FrameFamily::new(grids).is_err());
    }

    #[test]
    fn bound_order_checked() {
        let f = canonical_basis(2);
        assert!(f.clone().with_bounds(Some(1.0), Some(2.0)).is_ok());
        assert!(f.clone().with_bounds(Some(2.0), Some(1.0)).is_err());
        assert!(f.with_bounds(Some(0.0), None).is_err());
    }

    #[test]
    fn one_based_access() {
        let f = canonical_basis(3);
        assert_eq!(f.get(1), Some(&CoordinateVector::basis(1)));
        assert_eq!(f.get(0), None);
        assert_eq!(f.get(4), None);
    }
}
