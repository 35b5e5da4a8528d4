//! File formats: CSV matrices, JSON tensors, measures, and step families.
//!
//! CSV matrices carry column labels in the header row and row labels in the
//! first column; the corner cell is `x/y`, naming both axes. Numbers are
//! written in shortest round-trip form, so load then save is the identity
//! on files this module wrote.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cert::Certificate;
use crate::distal::Cutting;
use crate::error::{Error, Result};
use crate::fuzzy::{Axis, DiscreteMeasure, FuzzyPredicate};
use crate::sampling::StepFunctionFamily;
use crate::TOL;

/// Measures summing to within this of 1 are accepted (and renormalized).
pub const MEASURE_SUM_TOL: f64 = 1e-6;

pub fn predicate_from_csv(text: &str) -> Result<FuzzyPredicate> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("CSV matrix needs a label column and at least one data column".into()));
    }
    let (x, y) = match header[0].split_once('/') {
        Some((x, y)) if !x.is_empty() && !y.is_empty() => (x.to_string(), y.to_string()),
        _ => ("x".to_string(), "y".to_string()),
    };
    let cols = header.len() - 1;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!("row {r} has {} fields, header has {}", record.len(), header.len())));
        }
        let row = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|e| Error::Parse(format!("row {r}, column {c}: `{field}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV matrix has no rows".into()));
    }
    debug_assert!(rows.iter().all(|r| r.len() == cols));
    FuzzyPredicate::from_rows(x, y, &rows)
}

pub fn predicate_to_csv(phi: &FuzzyPredicate) -> Result<String> {
    phi.require_binary()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![format!("{}/{}", phi.axis(0).name, phi.axis(1).name)];
    header.extend((0..phi.cols()).map(|b| b.to_string()));
    w.write_record(&header)?;
    for a in 0..phi.rows() {
        let mut rec = vec![a.to_string()];
        rec.extend(phi.row(a).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// `{"axes": [names], "values": nested arrays}`; the nesting gives the shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorFile {
    #[serde(default)]
    axes: Vec<String>,
    values: Value,
}

fn flatten(v: &Value, depth: usize, shape: &mut Vec<usize>, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Array(items) => {
            if shape.len() == depth {
                shape.push(items.len());
            } else if shape[depth] != items.len() {
                return Err(Error::Parse(format!("ragged array at depth {depth}: {} vs {}", items.len(), shape[depth])));
            }
            items.iter().try_for_each(|item| flatten(item, depth + 1, shape, out))
        }
        Value::Number(n) => {
            if depth != shape.len() {
                return Err(Error::Parse(format!("number at depth {depth} where arrays were expected")));
            }
            out.push(n.as_f64().ok_or_else(|| Error::Parse(format!("not a finite number: {n}")))?);
            Ok(())
        }
        other => Err(Error::Parse(format!("unexpected JSON value {other}"))),
    }
}

fn nest(values: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => Value::from(values[0]),
        Some((&k, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..k).map(|i| nest(&values[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

fn default_axis_names(n: usize) -> Vec<String> {
    match n {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        _ => (1..=n).map(|i| format!("x{i}")).collect(),
    }
}

pub fn predicate_from_json(text: &str) -> Result<FuzzyPredicate> {
    let file: TensorFile = serde_json::from_str(text)?;
    let mut shape = Vec::new();
    let mut values = Vec::new();
    flatten(&file.values, 0, &mut shape, &mut values)?;
    if shape.is_empty() {
        return Err(Error::Parse("predicate values must be an array".into()));
    }
    let names = if file.axes.is_empty() { default_axis_names(shape.len()) } else { file.axes };
    if names.len() != shape.len() {
        return Err(Error::Parse(format!("{} axis names for a {}-dimensional array", names.len(), shape.len())));
    }
    let axes = names.into_iter().zip(shape).map(|(n, s)| Axis::new(n, s)).collect();
    FuzzyPredicate::new(axes, values)
}

pub fn predicate_to_json(phi: &FuzzyPredicate) -> Result<String> {
    let file = TensorFile {
        axes: phi.axes().iter().map(|a| a.name.clone()).collect(),
        values: nest(phi.values(), &phi.shape()),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasureFile {
    axis: String,
    weights: Vec<f64>,
}

/// Accepts sums within [`MEASURE_SUM_TOL`] of 1, renormalizing (with a
/// warning) when off by more than [`TOL`].
pub fn measure_from_json(text: &str) -> Result<DiscreteMeasure> {
    let file: MeasureFile = serde_json::from_str(text)?;
    let sum: f64 = file.weights.iter().sum();
    if (sum - 1.0).abs() > MEASURE_SUM_TOL {
        return Err(Error::InvalidMeasure { axis: file.axis, reason: format!("weights sum to {sum}") });
    }
    if (sum - 1.0).abs() > TOL {
        log::warn!("measure on `{}` sums to {sum}; renormalizing", file.axis);
        return DiscreteMeasure::from_unnormalized(file.axis, file.weights);
    }
    DiscreteMeasure::new(file.axis, file.weights)
}

pub fn measure_to_json(mu: &DiscreteMeasure) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MeasureFile { axis: mu.axis().to_string(), weights: mu.weights().to_vec() })?)
}

pub fn family_from_json(text: &str) -> Result<StepFunctionFamily> {
    Ok(serde_json::from_str(text)?)
}

pub fn family_to_json(family: &StepFunctionFamily) -> Result<String> {
    Ok(serde_json::to_string_pretty(family)?)
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// By extension: `.csv` is a labelled matrix, anything else a JSON tensor.
pub fn load_predicate(path: &Path) -> Result<FuzzyPredicate> {
    let text = fs::read_to_string(path)?;
    if extension(path) == "csv" {
        predicate_from_csv(&text)
    } else {
        predicate_from_json(&text)
    }
}

pub fn save_predicate(path: &Path, phi: &FuzzyPredicate) -> Result<()> {
    let text = if extension(path) == "csv" { predicate_to_csv(phi)? } else { predicate_to_json(phi)? };
    Ok(fs::write(path, text)?)
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    measure_from_json(&fs::read_to_string(path)?)
}

pub fn load_family(path: &Path) -> Result<StepFunctionFamily> {
    family_from_json(&fs::read_to_string(path)?)
}

pub fn load_cutting(path: &Path) -> Result<Cutting> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn load_certificate(path: &Path) -> Result<Certificate> {
    Certificate::from_json(&fs::read_to_string(path)?)
}

pub fn save_certificate(path: &Path, cert: &Certificate) -> Result<()> {
    Ok(fs::write(path, cert.to_json()? + "\n")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::generators;

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let phi = generators::threshold(5);
        let text = predicate_to_csv(&phi).unwrap();
        let back = predicate_from_csv(&text).unwrap();
        assert_eq!(back, phi);
        assert_eq!(predicate_to_csv(&back).unwrap(), text);
    }

    #[test]
    fn csv_header_names_axes() {
        let back = predicate_from_csv("a/b,0,1\n0,0.25,1\n1,0,0.5\n").unwrap();
        assert_eq!((back.axis(0).name.as_str(), back.axis(1).name.as_str()), ("a", "b"));
        assert_eq!(back.at(1, 1), 0.5);
        assert!(predicate_from_csv("x/y,0\n0,1.5\n").is_err());
        assert!(predicate_from_csv("x/y,0,1\n0,1\n").is_err());
    }

    #[test]
    fn nested_json_round_trip() {
        let phi = FuzzyPredicate::from_fn(vec![Axis::new("a", 2), Axis::new("b", 3), Axis::new("c", 2)], |i| {
            (i[0] + 2 * i[1] + i[2]) as f64 / 7.0
        })
        .unwrap();
        let text = predicate_to_json(&phi).unwrap();
        assert_eq!(predicate_from_json(&text).unwrap(), phi);
        assert!(predicate_from_json(r#"{"values": [[0.1, 0.2], [0.3]]}"#).is_err());
    }

    #[test]
    fn measures_renormalize_small_drift() {
        let m = measure_from_json(r#"{"axis": "x", "weights": [0.5, 0.5000001]}"#).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(measure_from_json(r#"{"axis": "x", "weights": [0.5, 0.6]}"#).is_err());
        let u = DiscreteMeasure::uniform("y", 3);
        assert_eq!(measure_from_json(&measure_to_json(&u).unwrap()).unwrap(), u);
    }
}
