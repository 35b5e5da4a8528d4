//! Certificates: named checks of measured values against stated bounds.
//!
//! A certificate passes iff every check passes. Its digest is the SHA-256 of
//! the canonical JSON form with `digest` blanked and `wall_time_ms` zeroed, so
//! any edit to a recorded value is detectable without rerunning anything.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::TOL;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// `measured ≤ limit + tolerance` or `measured ≥ limit − tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The bound in symbolic form, e.g. `4·N(ε/4)·exp(−nε²/32)`.
    pub bound: String,
    #[serde(with = "float_repr")]
    pub measured: f64,
    #[serde(with = "float_repr")]
    pub limit: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, bound: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::build(name, bound, measured, limit, Relation::AtMost)
    }

    pub fn at_least(name: impl Into<String>, bound: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::build(name, bound, measured, limit, Relation::AtLeast)
    }

    /// A boolean property, recorded as `measured ∈ {0, 1} ≥ 1`.
    pub fn holds(name: impl Into<String>, bound: impl Into<String>, ok: bool) -> Self {
        Check::build(name, bound, if ok { 1.0 } else { 0.0 }, 1.0, Relation::AtLeast)
    }

    fn build(name: impl Into<String>, bound: impl Into<String>, measured: f64, limit: f64, relation: Relation) -> Self {
        let mut c = Check {
            name: name.into(),
            bound: bound.into(),
            measured,
            limit,
            relation,
            tolerance: TOL,
            pass: false,
        };
        c.pass = c.evaluate();
        c
    }

    /// Recomputes the verdict from `measured`, `limit` and `tolerance`.
    pub fn evaluate(&self) -> bool {
        if self.measured.is_nan() || self.limit.is_nan() {
            return false;
        }
        match self.relation {
            Relation::AtMost => self.measured <= self.limit + self.tolerance,
            Relation::AtLeast => self.measured >= self.limit - self.tolerance,
        }
    }
}

/// Measured curves against a swept parameter; one row per parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub wall_time_ms: f64,
    pub params: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub sweep: Option<Sweep>,
    pub payload: Value,
    pub pass: bool,
    pub digest: String,
}

impl Certificate {
    pub fn new(kind: impl Into<String>) -> Self {
        Certificate {
            kind: kind.into(),
            tool_version: TOOL_VERSION.to_string(),
            seed: None,
            wall_time_ms: 0.0,
            params: BTreeMap::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            sweep: None,
            payload: Value::Null,
            pass: true,
            digest: String::new(),
        }
    }

    pub fn param(&mut self, key: impl Into<String>, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(key.into(), v);
        self
    }

    pub fn check(&mut self, check: Check) -> &mut Self {
        self.checks.push(check);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn set_payload(&mut self, payload: &impl Serialize) -> Result<&mut Self> {
        self.payload = serde_json::to_value(payload)?;
        Ok(self)
    }

    /// Fixes the verdict and digest; call after the last mutation.
    pub fn seal(&mut self) -> &mut Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self.digest = self.compute_digest();
        self
    }

    pub fn compute_digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.digest.clear();
        canonical.wall_time_ms = 0.0;
        let bytes = serde_json::to_vec(&canonical).expect("certificate serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn digest_matches(&self) -> bool {
        self.digest == self.compute_digest()
    }

    /// Inconsistencies between stored verdicts and recomputed ones.
    pub fn inconsistencies(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.checks {
            let v = c.evaluate();
            if v != c.pass {
                out.push(format!("check `{}` records pass = {} but evaluates to {}", c.name, c.pass, v));
            }
        }
        let all = self.checks.iter().all(|c| c.evaluate());
        if all != self.pass {
            out.push(format!("certificate records pass = {} but its checks give {}", self.pass, all));
        }
        if !self.digest_matches() {
            out.push("digest does not match contents".to_string());
        }
        out
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// The sweep as CSV: header row, then one row per swept value.
    pub fn plot_data(&self) -> Result<String> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::param("certificate", format!("`{}` certificate carries no sweep", self.kind)))?;
        if sweep.rows.is_empty() {
            return Err(Error::param("certificate", "sweep has no rows"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![sweep.parameter.clone()];
        header.extend(sweep.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &sweep.rows {
            if row.len() != header.len() {
                return Err(Error::ShapeMismatch { expected: header.len(), got: row.len() });
            }
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// One line per check, `[PASS]` or `[FAIL]`.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let op = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let tag = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "[{tag}] {}: {} {op} {} ({})", c.name, c.measured, c.limit, c.bound);
        }
        s
    }
}

fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        float_repr::name(v).to_string()
    }
}

/// JSON has no infinities; they travel as the strings `inf`, `-inf`, `nan`.
mod float_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn name(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(name(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Certificate {
        let mut c = Certificate::new("demo");
        c.param("eps", 0.5).check(Check::at_most("tail", "4·N·exp(−nε²/32)", 0.1, 0.3));
        c.check(Check::at_least("unbounded", "x ≥ −∞", 0.0, f64::NEG_INFINITY));
        c.sweep = Some(Sweep { parameter: "n".into(), columns: vec!["empirical".into(), "bound".into()], rows: vec![vec![16.0, 0.1, 0.3]] });
        c.seal();
        c
    }

    #[test]
    fn json_round_trip_preserves_digest() {
        let c = sample();
        let back = Certificate::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.compute_digest(), c.digest);
        assert!(back.inconsistencies().is_empty());
        assert_eq!(back.checks[1].limit, f64::NEG_INFINITY);
    }

    #[test]
    fn tampering_is_detected() {
        let mut c = sample();
        c.checks[0].measured = 0.2;
        assert!(!c.digest_matches());
        c.checks[0].measured = 0.9;
        assert!(c.inconsistencies().len() >= 2);
    }

    #[test]
    fn plot_data_needs_a_sweep() {
        assert_eq!(sample().plot_data().unwrap(), "n,empirical,bound\n16,0.1,0.3\n");
        assert!(Certificate::new("x").plot_data().is_err());
    }
}
