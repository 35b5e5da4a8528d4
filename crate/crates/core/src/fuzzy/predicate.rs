use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named finite index set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Axis { name: name.into(), size }
    }
}

/// A `[0,1]`-valued tensor over a product of finite axes.
///
/// Entries are stored row-major: the last axis varies fastest. A binary
/// predicate is read as `φ(x; y)` with rows indexed by the first axis and
/// columns by the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPredicate", into = "RawPredicate")]
pub struct FuzzyPredicate {
    axes: Vec<Axis>,
    values: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPredicate {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl TryFrom<RawPredicate> for FuzzyPredicate {
    type Error = Error;
    fn try_from(raw: RawPredicate) -> Result<Self> {
        FuzzyPredicate::new(raw.axes, raw.values)
    }
}

impl From<FuzzyPredicate> for RawPredicate {
    fn from(p: FuzzyPredicate) -> Self {
        RawPredicate { axes: p.axes, values: p.values }
    }
}

fn strides_for(axes: &[Axis]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * axes[i + 1].size;
    }
    strides
}

impl FuzzyPredicate {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::param("axes", "a predicate needs at least one axis"));
        }
        if let Some(axis) = axes.iter().find(|a| a.size == 0) {
            return Err(Error::AxisMismatch { axis: axis.name.clone(), reason: "axis is empty".into() });
        }
        let expected: usize = axes.iter().map(|a| a.size).product();
        if expected != values.len() {
            return Err(Error::ShapeMismatch { expected, got: values.len() });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ValueOutOfRange { index, value });
            }
        }
        let strides = strides_for(&axes);
        Ok(FuzzyPredicate { axes, values, strides })
    }

    /// Builds a predicate by evaluating `f` at every index tuple.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let total: usize = axes.iter().map(|a| a.size).product();
        let shape: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut values = Vec::with_capacity(total);
        for_each_index(&shape, |idx| values.push(f(idx)));
        FuzzyPredicate::new(axes, values)
    }

    /// Binary predicate from a row-major matrix.
    pub fn from_rows(x: impl Into<String>, y: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Parse("ragged matrix".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        FuzzyPredicate::new(vec![Axis::new(x, n_rows), Axis::new(y, n_cols)], values)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn arity(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axes.len());
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// `φ(a; b)` for a binary predicate.
    #[inline]
    pub fn at(&self, a: usize, b: usize) -> f64 {
        debug_assert_eq!(self.arity(), 2);
        self.values[a * self.strides[0] + b]
    }

    pub fn rows(&self) -> usize {
        self.axes[0].size
    }

    pub fn cols(&self) -> usize {
        self.axes[1].size
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.cols();
        &self.values[a * n..(a + 1) * n]
    }

    pub fn column(&self, b: usize) -> Vec<f64> {
        (0..self.rows()).map(|a| self.at(a, b)).collect()
    }

    pub(crate) fn require_binary(&self) -> Result<()> {
        if self.arity() != 2 {
            return Err(Error::param("phi", format!("expected a binary predicate, got arity {}", self.arity())));
        }
        Ok(())
    }

    /// Swaps the two axes of a binary predicate.
    pub fn transpose(&self) -> Result<FuzzyPredicate> {
        self.permute_axes(&[1, 0])
    }

    /// Reorders axes: axis `i` of the result is axis `order[i]` of `self`.
    pub fn permute_axes(&self, order: &[usize]) -> Result<FuzzyPredicate> {
        check_permutation(order, self.arity())?;
        let axes: Vec<Axis> = order.iter().map(|&i| self.axes[i].clone()).collect();
        let mut src = vec![0; self.arity()];
        FuzzyPredicate::from_fn(axes, |idx| {
            for (k, &i) in order.iter().enumerate() {
                src[i] = idx[k];
            }
            self.get(&src)
        })
    }

    /// Sub-tensor on the product of the given per-axis index lists.
    pub fn restrict(&self, supports: &[Vec<usize>]) -> Result<FuzzyPredicate> {
        if supports.len() != self.arity() {
            return Err(Error::param("supports", format!("expected {} index lists", self.arity())));
        }
        for (axis, s) in self.axes.iter().zip(supports) {
            if let Some(&bad) = s.iter().find(|&&i| i >= axis.size) {
                return Err(Error::IndexOutOfRange { axis: axis.name.clone(), index: bad, size: axis.size });
            }
        }
        let axes = self
            .axes
            .iter()
            .zip(supports)
            .map(|(a, s)| Axis::new(a.name.clone(), s.len()))
            .collect();
        let mut src = vec![0; self.arity()];
        FuzzyPredicate::from_fn(axes, |idx| {
            for (k, &i) in idx.iter().enumerate() {
                src[k] = supports[k][i];
            }
            self.get(&src)
        })
    }

    /// Views an n-ary predicate as binary `φ(x₁…x_{n-1}; x_n)`.
    ///
    /// Row `r` of the result corresponds to the tuple `unflatten` of the
    /// first `n-1` axes in row-major order.
    pub fn split_last(&self) -> Result<FuzzyPredicate> {
        if self.arity() < 2 {
            return Err(Error::param("phi", "cannot split a unary predicate"));
        }
        let n = self.arity();
        let head: Vec<&str> = self.axes[..n - 1].iter().map(|a| a.name.as_str()).collect();
        let rows: usize = self.axes[..n - 1].iter().map(|a| a.size).product();
        let axes = vec![Axis::new(head.join("*"), rows), self.axes[n - 1].clone()];
        FuzzyPredicate::new(axes, self.values.clone())
    }

    /// Fixes the last coordinate: `φ(·, …, ·, b)`.
    pub fn slice_last(&self, b: usize) -> Result<FuzzyPredicate> {
        let n = self.arity();
        if n < 2 {
            return Err(Error::param("phi", "cannot slice a unary predicate"));
        }
        let last = self.axes[n - 1].size;
        if b >= last {
            return Err(Error::IndexOutOfRange { axis: self.axes[n - 1].name.clone(), index: b, size: last });
        }
        let values = self.values.iter().skip(b).step_by(last).copied().collect();
        FuzzyPredicate::new(self.axes[..n - 1].to_vec(), values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map, clamped back into `[0,1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> FuzzyPredicate {
        FuzzyPredicate {
            axes: self.axes.clone(),
            values: self.values.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
            strides: self.strides.clone(),
        }
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::param("sigma", format!("expected a permutation of {n} elements")));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::param("sigma", format!("{order:?} is not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Calls `f` on every index tuple of `shape` in row-major order.
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut idx = vec![0; shape.len()];
    loop {
        f(&idx);
        let mut k = shape.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Canonical test instances.
pub mod generators {
    use super::*;

    fn square(n: usize) -> Vec<Axis> {
        vec![Axis::new("x", n), Axis::new("y", n)]
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<FuzzyPredicate> {
        FuzzyPredicate::from_fn(vec![Axis::new("x", rows), Axis::new("y", cols)], |_| value)
    }

    pub fn identity(n: usize) -> FuzzyPredicate {
        FuzzyPredicate::from_fn(square(n), |i| f64::from(u8::from(i[0] == i[1]))).expect("identity is valid")
    }

    /// `φ(i, j) = 1` iff `i < j`.
    pub fn half_graph(n: usize) -> FuzzyPredicate {
        FuzzyPredicate::from_fn(square(n), |i| f64::from(u8::from(i[0] < i[1]))).expect("half-graph is valid")
    }

    /// `φ(i, j) = |i − j| / n`.
    pub fn threshold(n: usize) -> FuzzyPredicate {
        FuzzyPredicate::from_fn(square(n), |i| i[0].abs_diff(i[1]) as f64 / n as f64).expect("threshold is valid")
    }

    /// Uniform `[0,1]` entries from a seeded generator.
    pub fn random(rows: usize, cols: usize, seed: u64) -> FuzzyPredicate {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FuzzyPredicate::from_fn(vec![Axis::new("x", rows), Axis::new("y", cols)], |_| rng.random::<f64>())
            .expect("random entries lie in [0,1)")
    }
}
