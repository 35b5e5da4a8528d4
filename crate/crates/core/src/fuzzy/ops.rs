use super::measure::DiscreteMeasure;
use super::predicate::{check_permutation, for_each_index, FuzzyPredicate};
use crate::error::{Error, Result};

/// Checks that `mus` has one measure per axis of `phi`, matching by name and size.
pub fn check_measures(phi: &FuzzyPredicate, mus: &[DiscreteMeasure]) -> Result<()> {
    if mus.len() != phi.arity() {
        return Err(Error::MeasureCount { expected: phi.arity(), got: mus.len() });
    }
    for (axis, mu) in phi.axes().iter().zip(mus) {
        if axis.name != mu.axis() {
            return Err(Error::AxisMismatch {
                axis: axis.name.clone(),
                reason: format!("measure is declared on axis `{}`", mu.axis()),
            });
        }
        if axis.size != mu.len() {
            return Err(Error::AxisMismatch {
                axis: axis.name.clone(),
                reason: format!("axis has {} elements but the measure has {} atoms", axis.size, mu.len()),
            });
        }
    }
    Ok(())
}

/// Renames each measure to the matching axis of `phi`; sizes must agree.
pub fn bind_measures(phi: &FuzzyPredicate, mus: &[DiscreteMeasure]) -> Result<Vec<DiscreteMeasure>> {
    if mus.len() != phi.arity() {
        return Err(Error::MeasureCount { expected: phi.arity(), got: mus.len() });
    }
    let bound: Vec<DiscreteMeasure> = phi.axes().iter().zip(mus).map(|(a, m)| m.renamed(a.name.clone())).collect();
    check_measures(phi, &bound)?;
    Ok(bound)
}

/// Contracts a row-major tensor against one weight vector per axis.
pub(crate) fn contract(values: &[f64], shape: &[usize], weights: &[&[f64]]) -> f64 {
    let mut cur = values.to_vec();
    for k in (0..shape.len()).rev() {
        let n = shape[k];
        let w = weights[k];
        cur = cur.chunks_exact(n).map(|c| c.iter().zip(w).map(|(v, p)| v * p).sum()).collect();
    }
    cur[0]
}

/// `Σ φ(a₁,…,aₙ) ∏ μᵢ(aᵢ)`.
///
/// # Examples
///
/// ```
/// use fuzzreg::{expectation, generators, DiscreteMeasure};
///
/// let phi = generators::half_graph(4);
/// let mus = [DiscreteMeasure::uniform("x", 4), DiscreteMeasure::uniform("y", 4)];
/// assert!((expectation(&phi, &mus).unwrap() - 0.375).abs() < 1e-12);
/// ```
pub fn expectation(phi: &FuzzyPredicate, mus: &[DiscreteMeasure]) -> Result<f64> {
    check_measures(phi, mus)?;
    let w: Vec<&[f64]> = mus.iter().map(|m| m.weights()).collect();
    Ok(contract(phi.values(), &phi.shape(), &w).clamp(0.0, 1.0))
}

/// `∫ (∫ φ(a; b) dμ(a)) dν(b)` for a binary predicate.
pub fn morley_product(mu: &DiscreteMeasure, nu: &DiscreteMeasure, phi: &FuzzyPredicate) -> Result<f64> {
    phi.require_binary()?;
    check_measures(phi, &[mu.clone(), nu.clone()])?;
    let mut total = 0.0;
    for b in 0..phi.cols() {
        let inner: f64 = (0..phi.rows()).map(|a| mu.weight(a) * phi.at(a, b)).sum();
        total += nu.weight(b) * inner;
    }
    Ok(total)
}

/// `max − min` of `φ` over the product of the given supports.
pub fn oscillation(phi: &FuzzyPredicate, supports: &[Vec<usize>]) -> Result<f64> {
    if supports.len() != phi.arity() {
        return Err(Error::MeasureCount { expected: phi.arity(), got: supports.len() });
    }
    if let Some(axis) = supports.iter().position(|s| s.is_empty()) {
        return Err(Error::EmptySupport { axis });
    }
    for (axis, s) in phi.axes().iter().zip(supports) {
        if let Some(&bad) = s.iter().find(|&&i| i >= axis.size) {
            return Err(Error::IndexOutOfRange { axis: axis.name.clone(), index: bad, size: axis.size });
        }
    }
    Ok(oscillation_unchecked(phi, supports))
}

pub(crate) fn oscillation_unchecked(phi: &FuzzyPredicate, supports: &[Vec<usize>]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let shape: Vec<usize> = supports.iter().map(|s| s.len()).collect();
    let mut idx = vec![0; supports.len()];
    for_each_index(&shape, |k| {
        for (i, &j) in k.iter().enumerate() {
            idx[i] = supports[i][j];
        }
        let v = phi.get(&idx);
        lo = lo.min(v);
        hi = hi.max(v);
    });
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

/// `|E_{μⁿ}[φ(x₁…xₙ)] − E_{μⁿ}[φ(x_{σ(1)}…x_{σ(n)})]|`.
pub fn permutation_invariance_check(phi: &FuzzyPredicate, mu: &DiscreteMeasure, n: usize, sigma: &[usize]) -> Result<f64> {
    if phi.arity() != n {
        return Err(Error::param("n", format!("predicate has arity {}, not {n}", phi.arity())));
    }
    if let Some(axis) = phi.axes().iter().find(|a| a.size != mu.len()) {
        return Err(Error::AxisMismatch {
            axis: axis.name.clone(),
            reason: format!("axis has {} elements but the measure has {} atoms", axis.size, mu.len()),
        });
    }
    check_permutation(sigma, n)?;
    let shape = phi.shape();
    let (mut direct, mut permuted) = (0.0, 0.0);
    let mut moved = vec![0; n];
    for_each_index(&shape, |idx| {
        let w: f64 = idx.iter().map(|&a| mu.weight(a)).product();
        for (i, &s) in sigma.iter().enumerate() {
            moved[i] = idx[s];
        }
        direct += w * phi.get(idx);
        permuted += w * phi.get(&moved);
    });
    Ok((direct - permuted).abs())
}
