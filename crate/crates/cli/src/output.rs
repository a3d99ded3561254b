//! Plain CSV tables. Fields never contain commas or quotes, so no escaping
//! is needed.

use suborbit::construction::{GeneratorSummary, ResidualRow};

/// Floats carry 17 significant digits so that reports diff cleanly.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub const RESIDUAL_COLUMNS: &[&str] = &[
    "k",
    "alpha",
    "gap",
    "measured",
    "tail",
    "bound_residual",
    "budget",
    "pass",
];

pub fn residual_cells(r: &ResidualRow) -> Vec<String> {
    vec![
        r.k.to_string(),
        float(r.alpha_k),
        float(r.gap),
        float(r.measured),
        float(r.tail),
        float(r.bound),
        float(r.budget),
        r.pass.to_string(),
    ]
}

pub const GENERATOR_COLUMNS: &[&str] = &[
    "branch",
    "n_terms",
    "tail_bound",
    "dropped_norm",
    "min_lambda_exponent",
    "max_lambda_exponent",
    "phi_ln_norm",
];

pub fn generator_cells(branch: &str, g: &GeneratorSummary) -> Vec<String> {
    vec![
        branch.to_string(),
        g.n_terms.to_string(),
        float(g.tail_bound),
        float(g.dropped_norm),
        float(g.min_lambda_exponent),
        float(g.max_lambda_exponent),
        float(g.phi_ln_norm),
    ]
}
