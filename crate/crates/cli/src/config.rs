//! Experiment configuration: JSON file merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use martdev_core::{DeltaConvention, MarkovChainSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Number written as a JSON number or a string such as `"1e6"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Integer(u64),
    Number(f64),
    Text(String),
}

/// Grid written as a JSON array, `"a:b:step"` or `"x1,x2,…"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ListSpec {
    Values(Vec<f64>),
    Single(f64),
    Text(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<ListSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<ListSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<Scalar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<MarkovChainSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_state: Option<[f64; 2]>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `other` replace those set here.
    pub fn overlay(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command, model, n, x, budget, seed, alpha, rho, c, delta_from, rate, b, chain,
            chain_file, two_state
        );
        self.params.extend(other.params);
        self
    }

    /// Names of the fields that are set.
    pub fn set_fields(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Rejects fields the command does not read.
    pub fn check_fields(&self, command: &str, allowed: &[&str]) -> Result<(), CliError> {
        let stray: Vec<String> = self
            .set_fields()
            .into_iter()
            .filter(|f| f != "command" && f != "seed" && !allowed.contains(&f.as_str()))
            .collect();
        if !stray.is_empty() {
            return Err(CliError::Usage(format!(
                "`{command}` does not use: {}",
                stray.join(", ")
            )));
        }
        match &self.command {
            Some(c) if c != command => Err(CliError::Usage(format!(
                "config is for `{c}` but `{command}` was run"
            ))),
            _ => Ok(()),
        }
    }

    /// Compact JSON of the resolved settings, echoed into artifact headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    pub fn budget(&self) -> Result<u64, CliError> {
        match &self.budget {
            None => Err(CliError::Usage("budget is required".into())),
            Some(Scalar::Integer(v)) => parse_count(*v as f64, "budget"),
            Some(Scalar::Number(v)) => parse_count(*v, "budget"),
            Some(Scalar::Text(s)) => parse_count(parse_number(s, "budget")?, "budget"),
        }
    }

    pub fn x_grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = expand(self.x.as_ref(), "x")?;
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Usage("x grid must be finite".into()));
        }
        Ok(grid)
    }

    pub fn n_list(&self) -> Result<Vec<usize>, CliError> {
        expand(self.n.as_ref(), "n")?
            .into_iter()
            .map(|v| parse_count(v, "n").map(|n| n as usize))
            .collect()
    }

    /// Replaces `n` by its expanded integer list.
    pub fn normalize_n(&mut self) -> Result<Vec<usize>, CliError> {
        let ns = self.n_list()?;
        let text: Vec<String> = ns.iter().map(usize::to_string).collect();
        self.n = Some(ListSpec::Text(text.join(",")));
        Ok(ns)
    }

    pub fn single_n(&mut self) -> Result<usize, CliError> {
        match self.normalize_n()?.as_slice() {
            [n] => Ok(*n),
            other => Err(CliError::Usage(format!(
                "expected one n, got {}",
                other.len()
            ))),
        }
    }

    pub fn delta_convention(&self) -> Result<DeltaConvention, CliError> {
        match self.delta_from.as_deref() {
            None | Some("n") | Some("N") => Ok(DeltaConvention::FromN),
            Some("l") | Some("L") => Ok(DeltaConvention::FromL),
            Some(other) => Err(CliError::Usage(format!(
                "delta_from `{other}` is not n or l"
            ))),
        }
    }

    /// Chain from `chain`, `chain_file` or `two_state`, in that order.
    pub fn chain_spec(&self) -> Result<MarkovChainSpec, CliError> {
        let given = [
            self.chain.is_some(),
            self.chain_file.is_some(),
            self.two_state.is_some(),
        ];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(CliError::Usage(
                "give only one of chain, chain_file, two_state".into(),
            ));
        }
        if let Some(spec) = &self.chain {
            return Ok(spec.clone());
        }
        if let Some(path) = &self.chain_file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read chain {}: {e}", path.display()))
            })?;
            return serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("chain {}: {e}", path.display())));
        }
        let [a, b] = self.two_state.unwrap_or([0.3, 0.3]);
        Ok(MarkovChainSpec::two_state(a, b))
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("{what}: `{s}` is not a number")))
}

/// Positive integer given possibly in float notation (`1e6`).
fn parse_count(v: f64, what: &str) -> Result<u64, CliError> {
    // 2^53 is the last integer every f64 step still represents
    if !((1.0..=9_007_199_254_740_992.0).contains(&v) && v.fract() == 0.0) {
        return Err(CliError::Usage(format!(
            "{what}: {v} is not an integer ≥ 1"
        )));
    }
    Ok(v as u64)
}

fn expand(spec: Option<&ListSpec>, what: &str) -> Result<Vec<f64>, CliError> {
    let values = match spec {
        None => return Err(CliError::Usage(format!("{what} is required"))),
        Some(ListSpec::Values(v)) => v.clone(),
        Some(ListSpec::Single(v)) => vec![*v],
        Some(ListSpec::Text(s)) => parse_grid(s, what)?,
    };
    if values.is_empty() {
        return Err(CliError::Usage(format!("{what} grid is empty")));
    }
    Ok(values)
}

/// `a:b:step` (inclusive of `b` up to rounding) or a comma list.
pub fn parse_grid(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (
                parse_number(a, what)?,
                parse_number(b, what)?,
                parse_number(step, what)?,
            );
            if !(step > 0.0 && a.is_finite() && b >= a && b.is_finite()) {
                return Err(CliError::Usage(format!(
                    "{what}: range `{s}` needs finite a ≤ b and step > 0"
                )));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(CliError::Usage(format!(
                    "{what}: range `{s}` has {count} points"
                )));
            }
            Ok((0..count)
                .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_number(t, what))
            .collect(),
        _ => Err(CliError::Usage(format!(
            "{what}: `{s}` is neither a:b:step nor a list"
        ))),
    }
}
