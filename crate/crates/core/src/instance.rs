//! JSON instance files.
//!
//! ```json
//! {
//!   "alphabet": [2, 2],
//!   "marginals": [[0.5, 0.5], [0.5, 0.5]],
//!   "constraints": [{"subset": [0, 1], "pmf": [0.5, 0, 0, 0.5]}]
//! }
//! ```
//!
//! `marginals` may be omitted when every variable appears in some constraint.
//! Gray-Wyner instances add `"u_alphabet"` (four sizes) and `"channel"`
//! (`P(u | x)`, one row per source cell, either nested or flat row-major),
//! and take the source from `"source"` or from a constraint on `[0, 1, 2]`.
//! The names `builtin:theorem2` and `builtin:pair-covering` resolve to
//! instances shipped with the crate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gray_wyner::GWInstance;
use crate::pmf::{Alphabet, ConstraintSystem, JointPmf, SubsetConstraint};

pub const THEOREM2: &str = include_str!("../data/theorem2.json");
pub const PAIR_COVERING: &str = include_str!("../data/pair-covering.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub subset: Vec<usize>,
    pub pmf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Table {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub alphabet: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub constraints: Vec<ConstraintEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_alphabet: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Table>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Instance(msg.into())
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    /// A path, or `builtin:<name>`.
    pub fn load(location: &str) -> Result<Self> {
        if let Some(name) = location.strip_prefix("builtin:") {
            let text = builtin(name).ok_or_else(|| bad(format!("unknown built-in instance {name:?}")))?;
            return Self::parse(text);
        }
        let text = std::fs::read_to_string(Path::new(location))
            .map_err(|e| bad(format!("{location}: {e}")))?;
        Self::parse(&text)
    }

    pub fn from_system(cs: &ConstraintSystem) -> Self {
        Self {
            alphabet: cs.alphabet().sizes().to_vec(),
            marginals: Some(cs.marginals().iter().map(|m| m.probs().to_vec()).collect()),
            constraints: cs
                .constraints()
                .iter()
                .map(|c| ConstraintEntry {
                    subset: c.subset().to_vec(),
                    pmf: c.target().probs().to_vec(),
                })
                .collect(),
            source: None,
            u_alphabet: None,
            channel: None,
        }
    }

    pub fn constraint_system(&self) -> Result<ConstraintSystem> {
        let alphabet = Alphabet::new(self.alphabet.clone()).map_err(|e| bad(e.to_string()))?;
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (j, c) in self.constraints.iter().enumerate() {
            let sub = alphabet
                .select(&c.subset)
                .map_err(|e| bad(format!("constraint {j}: {e}")))?;
            let target =
                JointPmf::new(sub, c.pmf.clone()).map_err(|e| bad(format!("constraint {j}: {e}")))?;
            constraints.push(
                SubsetConstraint::new(c.subset.clone(), target)
                    .map_err(|e| bad(format!("constraint {j}: {e}")))?,
            );
        }
        let n = alphabet.num_vars();
        let marginals = match &self.marginals {
            Some(ms) => ms
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let a = alphabet.select(&[i]).map_err(|e| bad(format!("marginal {i}: {e}")))?;
                    JointPmf::new(a, m.clone()).map_err(|e| bad(format!("marginal {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
            None => (0..n)
                .map(|i| {
                    let c = constraints
                        .iter()
                        .find(|c| c.subset().contains(&i))
                        .ok_or_else(|| bad(format!("variable {i} has no marginal and no constraint")))?;
                    let pos = c.subset().iter().position(|&v| v == i).expect("member");
                    c.target().marginalize(&[pos])
                })
                .collect::<Result<Vec<_>>>()?,
        };
        ConstraintSystem::new(alphabet, constraints, marginals).map_err(|e| bad(e.to_string()))
    }

    pub fn gw_instance(&self) -> Result<GWInstance> {
        if self.alphabet.len() != 3 {
            return Err(bad("a Gray-Wyner instance has three source variables"));
        }
        let u: [usize; 4] = self
            .u_alphabet
            .as_deref()
            .ok_or_else(|| bad("missing \"u_alphabet\""))?
            .try_into()
            .map_err(|_| bad("\"u_alphabet\" must list four sizes"))?;
        let alphabet = Alphabet::new(self.alphabet.clone()).map_err(|e| bad(e.to_string()))?;
        let source_probs = match &self.source {
            Some(s) => s.clone(),
            None => self
                .constraints
                .iter()
                .find(|c| c.subset == [0, 1, 2])
                .map(|c| c.pmf.clone())
                .ok_or_else(|| bad("need \"source\" or a constraint on [0, 1, 2]"))?,
        };
        let source = JointPmf::new(alphabet, source_probs).map_err(|e| bad(format!("source: {e}")))?;
        let u_cells: usize = u.iter().product();
        let rows = match self.channel.as_ref().ok_or_else(|| bad("missing \"channel\""))? {
            Table::Rows(rows) => rows.clone(),
            Table::Flat(flat) => {
                if u_cells == 0 || flat.len() % u_cells != 0 {
                    return Err(bad("flat channel length is not a multiple of the U cell count"));
                }
                flat.chunks(u_cells).map(<[f64]>::to_vec).collect()
            }
        };
        GWInstance::from_channel(source, u, &rows).map_err(|e| bad(format!("channel: {e}")))
    }
}

pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "theorem2" => Some(THEOREM2),
        "pair-covering" => Some(PAIR_COVERING),
        _ => None,
    }
}
