//! JSON configuration documents, one per pipeline. Optional fields fall
//! back to the defaults documented on each field.

use serde::Deserialize;
use suborbit::approx_l2n::{L2nParams, ScheduleRule};
use suborbit::approx_l2r::{GaborParams, GaborSpec, L2rParams};
use suborbit::approx_localized::{exponential_bump_family, LocalizedFamily, DEFAULT_TRUNC_TOL};
use suborbit::family::canonical_basis;
use suborbit::frame_algebra::{empirical_frame_bounds, DEFAULT_REL_TOL};
use suborbit::{CoordinateVector, Error, SampledFunction};

fn default_rank_tol() -> f64 {
    DEFAULT_REL_TOL
}

fn default_section() -> usize {
    8
}

fn default_rule() -> ScheduleRule {
    ScheduleRule::FiniteSupport
}

fn default_trunc_tol() -> f64 {
    DEFAULT_TRUNC_TOL
}

/// Families of ℓ²(ℕ).
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceFamily {
    /// e₁, …, e_n.
    CanonicalBasis(usize),
    /// f_k(j) = C e^{−β|j−k|}, k = 1..=count.
    ExponentialBump {
        count: usize,
        #[serde(rename = "C", default = "one")]
        c: f64,
        beta: f64,
        /// Coordinates below this are dropped and charged. Default 1e−250.
        #[serde(default = "default_trunc_tol")]
        trunc_tol: f64,
    },
    /// Explicit sparse vectors.
    Sequences(Vec<CoordinateVector>),
}

fn one() -> f64 {
    1.0
}

impl SequenceFamily {
    pub fn localized(&self) -> Result<LocalizedFamily, Error> {
        match self {
            SequenceFamily::CanonicalBasis(n) => Ok(LocalizedFamily {
                elements: canonical_basis((*n).max(1)).into_elements(),
                truncation: None,
            }),
            SequenceFamily::ExponentialBump {
                count,
                c,
                beta,
                trunc_tol,
            } => exponential_bump_family(*count, *c, *beta, *trunc_tol),
            SequenceFamily::Sequences(v) => Ok(LocalizedFamily {
                elements: v.clone(),
                truncation: None,
            }),
        }
    }

    pub fn elements(&self) -> Result<Vec<CoordinateVector>, Error> {
        Ok(self.localized()?.elements)
    }
}

/// `verify --kind l2n` and `build --kind l2n`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2nConfig {
    pub lambda: f64,
    pub epsilon: f64,
    /// Default: the next power of two ≥ 2 above the empirical bound.
    #[serde(default)]
    pub upper_bound: Option<f64>,
    /// Rows K. Default 8.
    #[serde(default = "default_section")]
    pub section: usize,
    /// Default min(K + 8, family length).
    #[serde(default)]
    pub n_terms: Option<usize>,
    /// Default {"rule": "finite_support"}.
    #[serde(default = "default_rule")]
    pub rule: ScheduleRule,
    /// Default 1e−10.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    pub family: SequenceFamily,
}

impl L2nConfig {
    pub fn params(&self) -> L2nParams {
        L2nParams {
            lambda: self.lambda,
            epsilon: self.epsilon,
            upper_bound: self.upper_bound,
            section: self.section,
            n_terms: self.n_terms,
            rule: self.rule,
            rank_tol: self.rank_tol,
        }
    }
}

/// Either ε itself or a fraction of the empirical lower bound of the
/// section.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSpec {
    Value(f64),
    FractionOfLower(f64),
}

/// `verify --kind localized`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedConfig {
    pub lambda: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub beta: f64,
    pub epsilon: EpsilonSpec,
    #[serde(default)]
    pub upper_bound: Option<f64>,
    /// Rows K. Default 8.
    #[serde(default = "default_section")]
    pub section: usize,
    #[serde(default)]
    pub n_terms: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    pub family: SequenceFamily,
}

impl LocalizedConfig {
    pub fn epsilon(&self, family: &LocalizedFamily) -> Result<f64, Error> {
        match self.epsilon {
            EpsilonSpec::Value(e) => Ok(e),
            EpsilonSpec::FractionOfLower(t) => {
                let k = self.section.min(family.elements.len());
                let lower = empirical_frame_bounds(&family.elements[..k], self.rank_tol)?.lower;
                Ok(t * lower)
            }
        }
    }
}

/// `verify --kind l2r`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2rConfig {
    pub lambda: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub upper_bound: Option<f64>,
    /// Rows K per branch. Default 8.
    #[serde(default = "default_section")]
    pub section: usize,
    #[serde(default)]
    pub n_terms: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    pub functions: Vec<SampledFunction>,
}

impl L2rConfig {
    pub fn params(&self) -> L2rParams {
        L2rParams {
            lambda: self.lambda,
            epsilon: self.epsilon,
            upper_bound: self.upper_bound,
            section: self.section,
            n_terms: self.n_terms,
            rank_tol: self.rank_tol,
        }
    }
}

/// `gabor`: the window, lattice and truncation, plus N and j.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaborConfig {
    pub window: SampledFunction,
    pub a: f64,
    pub b: f64,
    pub m_range: u32,
    pub n_range: u32,
    /// B = 2^N. Default ⌈log₂ B_emp⌉ + 1.
    #[serde(rename = "N", default)]
    pub n: Option<u32>,
    /// ε = 2^{−j}.
    pub j: u32,
    /// Rows K per branch. Default 8.
    #[serde(default = "default_section")]
    pub section: usize,
    #[serde(default)]
    pub n_terms: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

impl GaborConfig {
    pub fn spec(&self) -> GaborSpec {
        GaborSpec {
            window: self.window.clone(),
            a: self.a,
            b: self.b,
            m_range: self.m_range,
            n_range: self.n_range,
        }
    }

    pub fn params(&self) -> GaborParams {
        GaborParams {
            n: self.n,
            j: self.j,
            section: self.section,
            n_terms: self.n_terms,
            rank_tol: self.rank_tol,
        }
    }
}
