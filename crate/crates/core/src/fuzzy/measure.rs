use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{SUPPORT_EPS, TOL};

/// A finitely supported probability vector on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct DiscreteMeasure {
    axis: String,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    axis: String,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.axis, raw.weights)
    }
}

impl From<DiscreteMeasure> for RawMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        RawMeasure { axis: m.axis, weights: m.weights }
    }
}

impl DiscreteMeasure {
    pub fn new(axis: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        let axis = axis.into();
        if weights.is_empty() {
            return Err(Error::InvalidMeasure { axis, reason: "no atoms".into() });
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure { axis, reason: format!("weight {w} at atom {i} is negative or not finite") });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(Error::InvalidMeasure { axis, reason: format!("weights sum to {total}, not 1") });
        }
        Ok(DiscreteMeasure { axis, weights })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_unnormalized(axis: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        let axis = axis.into();
        let total: f64 = weights.iter().sum();
        if !(total > SUPPORT_EPS) {
            return Err(Error::InvalidMeasure { axis, reason: format!("total weight {total} is not positive") });
        }
        DiscreteMeasure::new(axis, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(axis: impl Into<String>, n: usize) -> Self {
        DiscreteMeasure { axis: axis.into(), weights: vec![1.0 / n as f64; n] }
    }

    pub fn dirac(axis: impl Into<String>, n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        DiscreteMeasure { axis: axis.into(), weights }
    }

    pub fn axis(&self) -> &str {
        &self.axis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.weights[a]
    }

    /// Same weights bound to a different axis name.
    pub fn renamed(&self, axis: impl Into<String>) -> Self {
        DiscreteMeasure { axis: axis.into(), weights: self.weights.clone() }
    }

    /// Elements with weight above the support cutoff.
    pub fn support(&self) -> Vec<usize> {
        positive_support(&self.weights)
    }

    pub fn mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&a| self.weights[a]).sum()
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.weights.len());
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `α·self + (1−α)·other`.
    pub fn mix(&self, alpha: f64, other: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        if self.len() != other.len() {
            return Err(Error::AxisMismatch { axis: other.axis.clone(), reason: "sizes differ".into() });
        }
        let w = self.weights.iter().zip(&other.weights).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        DiscreteMeasure::new(self.axis.clone(), w)
    }

    /// Localization to a subset, re-indexed to `0..subset.len()`.
    pub fn restrict(&self, subset: &[usize]) -> Result<DiscreteMeasure> {
        let w: Vec<f64> = subset.iter().map(|&a| self.weights[a]).collect();
        let total: f64 = w.iter().sum();
        if !(total > SUPPORT_EPS) {
            return Err(Error::DegenerateLocalization { mass: total });
        }
        Ok(DiscreteMeasure { axis: self.axis.clone(), weights: w.into_iter().map(|v| v / total).collect() })
    }

    pub fn product_weights(measures: &[DiscreteMeasure]) -> Vec<f64> {
        let mut out = vec![1.0];
        for m in measures {
            out = out.iter().flat_map(|p| m.weights.iter().map(move |w| p * w)).collect();
        }
        out
    }

    pub fn sampler(&self) -> Sampler {
        Sampler { index: WeightedIndex::new(&self.weights).expect("measure has positive total weight") }
    }
}

pub(crate) fn positive_support(weights: &[f64]) -> Vec<usize> {
    weights.iter().enumerate().filter(|(_, w)| **w > SUPPORT_EPS).map(|(i, _)| i).collect()
}

/// Inverse-CDF draws from a [`DiscreteMeasure`].
#[derive(Debug, Clone)]
pub struct Sampler {
    index: WeightedIndex<f64>,
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn draw_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// A measure reweighted by a density `θ ∈ [0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub base: DiscreteMeasure,
    pub density: Vec<f64>,
    pub normalizer: f64,
}

impl Localization {
    pub fn new(base: DiscreteMeasure, density: Vec<f64>) -> Result<Self> {
        if density.len() != base.len() {
            return Err(Error::AxisMismatch {
                axis: base.axis.clone(),
                reason: format!("density has {} entries for {} atoms", density.len(), base.len()),
            });
        }
        if let Some(v) = density.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("theta", format!("density value {v} outside [0,1]")));
        }
        let normalizer = base.integrate(&density);
        if !(normalizer > SUPPORT_EPS) {
            return Err(Error::DegenerateLocalization { mass: normalizer });
        }
        Ok(Localization { base, density, normalizer })
    }

    pub fn measure(&self) -> DiscreteMeasure {
        let weights = self.base.weights.iter().zip(&self.density).map(|(w, t)| w * t / self.normalizer).collect();
        DiscreteMeasure { axis: self.base.axis.clone(), weights }
    }
}

/// `∫ψ dμ_θ = ∫θψ dμ / ∫θ dμ`.
pub fn localize(mu: &DiscreteMeasure, theta: &[f64]) -> Result<DiscreteMeasure> {
    Ok(Localization::new(mu.clone(), theta.to_vec())?.measure())
}

/// Indicator density of a subset.
pub fn indicator(n: usize, set: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &i in set {
        v[i] = 1.0;
    }
    v
}
