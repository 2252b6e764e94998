//! JSON theory files and the built-in example theories.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::{BundleChart, FiberCovector, FiberDecl, Formalism, HamiltonianData, LagrangianTheory};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr, Scope};

pub const BUILTINS: [&str; 4] = ["free_field", "bosonic_string", "singular_mech", "oscillator"];

fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "free_field" => include_str!("../theories/free_field.json"),
        "bosonic_string" => include_str!("../theories/bosonic_string.json"),
        "singular_mech" => include_str!("../theories/singular_mech.json"),
        "oscillator" => include_str!("../theories/oscillator.json"),
        _ => return None,
    })
}

/// A DSL formula, optionally with indices summed over the whole string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Formula {
    Plain(String),
    Summed { expr: String, sums: Vec<(String, i64, i64)> },
}

impl Formula {
    fn text(&self) -> &str {
        match self {
            Formula::Plain(s) => s,
            Formula::Summed { expr, .. } => expr,
        }
    }

    fn parse(&self, chart: &BundleChart, params: &HashMap<String, f64>, what: &str) -> Result<Expr> {
        let mut scope = Scope::new(chart).with_params(params.clone());
        if let Formula::Summed { sums, .. } = self {
            for (v, lo, hi) in sums {
                scope = scope.with_implicit_sum(v, *lo, *hi);
            }
        }
        parse_expr(self.text(), &scope).map_err(|e| Error::TheoryFile(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parameter {
    Scalar(f64),
    Matrix {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        index_base: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDecl {
    pub names: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDecl {
    pub h: Formula,
    #[serde(default)]
    pub constraints: Vec<Formula>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryFile {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub base: BaseDecl,
    pub fibers: Vec<FiberDecl>,
    #[serde(default = "default_energy")]
    pub energy: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, Parameter>,
    pub lagrangian: Formula,
    /// Hessian cokernel basis: each entry maps fiber names to coefficients.
    #[serde(default)]
    pub cokernel: Option<Vec<BTreeMap<String, Formula>>>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianDecl>,
    /// Per formalism, the constraint functions added at steps 2, 3, ….
    #[serde(default)]
    pub registered: BTreeMap<Formalism, Vec<Vec<Formula>>>,
    #[serde(default)]
    pub sample_box: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub default_range: Option<(f64, f64)>,
}

fn default_energy() -> String {
    "p".to_string()
}

impl TheoryFile {
    pub fn from_json(text: &str) -> Result<TheoryFile> {
        serde_json::from_str(text).map_err(|e| Error::TheoryFile(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    fn params(&self) -> HashMap<String, f64> {
        let mut out = HashMap::new();
        for (name, p) in &self.parameters {
            match p {
                Parameter::Scalar(v) => {
                    out.insert(name.clone(), *v);
                }
                Parameter::Matrix { matrix, index_base } => {
                    for (a, row) in matrix.iter().enumerate() {
                        for (b, v) in row.iter().enumerate() {
                            let (a, b) = (a as i64 + index_base, b as i64 + index_base);
                            out.insert(format!("{name}[{a},{b}]"), *v);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn build(&self) -> Result<LagrangianTheory> {
        if self.base.names.len() != self.n || self.fibers.len() != self.m {
            return Err(Error::Dimension(format!(
                "declared n={}, m={} but {} base and {} fiber coordinates given",
                self.n,
                self.m,
                self.base.names.len(),
                self.fibers.len()
            )));
        }
        let chart = Arc::new(BundleChart::new(
            self.base.names.clone(),
            self.base.labels.clone(),
            self.fibers.clone(),
            &self.energy,
        )?);
        let params = self.params();
        let lagrangian = self.lagrangian.parse(&chart, &params, "lagrangian")?;
        let mut th = LagrangianTheory::new(self.name.clone(), chart.clone(), lagrangian)?;
        if let Some(basis) = &self.cokernel {
            let mut out = Vec::new();
            for (k, entry) in basis.iter().enumerate() {
                let mut cov = FiberCovector::new();
                for (fiber, f) in entry {
                    let i = self
                        .fibers
                        .iter()
                        .position(|d| &d.name == fiber)
                        .ok_or_else(|| Error::TheoryFile(format!("cokernel entry {k}: unknown fiber `{fiber}`")))?;
                    cov.insert(i, f.parse(&chart, &params, "cokernel")?);
                }
                out.push(cov);
            }
            th = th.with_cokernel(out);
        }
        if let Some(hd) = &self.hamiltonian {
            let h = hd.h.parse(&chart, &params, "hamiltonian")?;
            let cons =
                hd.constraints.iter().map(|c| c.parse(&chart, &params, "hamiltonian constraint")).collect::<Result<_>>()?;
            th = th.with_hamiltonian(HamiltonianData::new(chart.clone(), h, cons)?);
        }
        for (f, steps) in &self.registered {
            let parsed = steps
                .iter()
                .map(|s| s.iter().map(|c| c.parse(&chart, &params, "registered constraint")).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            th.registered.insert(*f, parsed);
        }
        for (name, range) in &self.sample_box {
            let c = chart
                .coord(name)
                .ok_or_else(|| Error::TheoryFile(format!("sample box names unknown coordinate `{name}`")))?;
            th.sample_box.insert(c, *range);
        }
        if let Some(r) = self.default_range {
            th.default_range = r;
        }
        Ok(th)
    }
}

/// The raw file of a built-in theory.
pub fn builtin_file(name: &str) -> Option<TheoryFile> {
    builtin_source(name).map(|s| TheoryFile::from_json(s).expect("built-in theories are well formed"))
}

pub fn builtin(name: &str) -> Option<LagrangianTheory> {
    builtin_file(name).map(|f| f.build().expect("built-in theories are well formed"))
}

/// Built-in name, or a path to a JSON theory file.
pub fn load_theory(name_or_path: &str) -> Result<LagrangianTheory> {
    if let Some(th) = builtin(name_or_path) {
        return Ok(th);
    }
    let text = std::fs::read_to_string(Path::new(name_or_path))?;
    TheoryFile::from_json(&text)?.build()
}
