use serde::{Deserialize, Serialize};

use super::measure::{positive_support, DiscreteMeasure};
use super::predicate::for_each_index;
use crate::error::{Error, Result};
use crate::TOL;

/// Real-valued pieces or disjoint `{0,1}` indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Definable,
    Constructible,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "definable" => Ok(Mode::Definable),
            "constructible" => Ok(Mode::Constructible),
            other => Err(Error::param("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Definable => "definable",
            Mode::Constructible => "constructible",
        })
    }
}

/// Nonnegative weight vectors on one axis summing pointwise to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition", into = "RawPartition")]
pub struct PartitionOfUnity {
    axis: String,
    pieces: Vec<Vec<f64>>,
    mode: Mode,
}

#[derive(Serialize, Deserialize)]
struct RawPartition {
    axis: String,
    mode: Mode,
    pieces: Vec<Vec<f64>>,
}

impl TryFrom<RawPartition> for PartitionOfUnity {
    type Error = Error;
    fn try_from(raw: RawPartition) -> Result<Self> {
        PartitionOfUnity::new(raw.axis, raw.pieces, raw.mode)
    }
}

impl From<PartitionOfUnity> for RawPartition {
    fn from(p: PartitionOfUnity) -> Self {
        RawPartition { axis: p.axis, mode: p.mode, pieces: p.pieces }
    }
}

impl PartitionOfUnity {
    pub fn new(axis: impl Into<String>, pieces: Vec<Vec<f64>>, mode: Mode) -> Result<Self> {
        let axis = axis.into();
        let bad = |reason: String| Error::InvalidPartition { axis: axis.clone(), reason };
        let size = match pieces.first() {
            Some(p) => p.len(),
            None => return Err(bad("no pieces".into())),
        };
        if pieces.iter().any(|p| p.len() != size) {
            return Err(bad("pieces have different lengths".into()));
        }
        for (k, p) in pieces.iter().enumerate() {
            for (a, &w) in p.iter().enumerate() {
                let ok = match mode {
                    Mode::Definable => (0.0..=1.0).contains(&w),
                    Mode::Constructible => w == 0.0 || w == 1.0,
                };
                if !ok {
                    return Err(bad(format!("piece {k} has weight {w} at element {a}")));
                }
            }
        }
        for a in 0..size {
            let s: f64 = pieces.iter().map(|p| p[a]).sum();
            if (s - 1.0).abs() > TOL {
                return Err(bad(format!("weights at element {a} sum to {s}")));
            }
        }
        Ok(PartitionOfUnity { axis, pieces, mode })
    }

    /// One constructible piece per set; the sets must partition `0..size`.
    pub fn from_sets(axis: impl Into<String>, size: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let pieces = sets
            .iter()
            .map(|s| {
                let mut v = vec![0.0; size];
                for &a in s {
                    if a < size {
                        v[a] += 1.0;
                    }
                }
                v
            })
            .collect();
        PartitionOfUnity::new(axis, pieces, Mode::Constructible)
    }

    pub fn trivial(axis: impl Into<String>, size: usize) -> Self {
        PartitionOfUnity { axis: axis.into(), pieces: vec![vec![1.0; size]], mode: Mode::Constructible }
    }

    pub fn singletons(axis: impl Into<String>, size: usize) -> Self {
        let pieces = (0..size).map(|a| super::measure::indicator(size, &[a])).collect();
        PartitionOfUnity { axis: axis.into(), pieces, mode: Mode::Constructible }
    }

    pub fn axis(&self) -> &str {
        &self.axis
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn piece(&self, k: usize) -> &[f64] {
        &self.pieces[k]
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn size(&self) -> usize {
        self.pieces[0].len()
    }

    /// `{a : piece_k(a) > 1e-12}`.
    pub fn support(&self, k: usize) -> Vec<usize> {
        positive_support(&self.pieces[k])
    }

    pub fn mass(&self, k: usize, mu: &DiscreteMeasure) -> f64 {
        mu.integrate(&self.pieces[k])
    }

    /// Piece supports as sets; only meaningful in constructible mode.
    pub fn sets(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|k| self.support(k)).collect()
    }

    /// Drops pieces that vanish identically.
    pub fn pruned(&self) -> Self {
        let pieces: Vec<Vec<f64>> = self.pieces.iter().filter(|p| p.iter().any(|w| *w > 0.0)).cloned().collect();
        PartitionOfUnity { axis: self.axis.clone(), pieces, mode: self.mode }
    }
}

/// Product of one partition of unity per axis.
///
/// Cells are enumerated in row-major order over piece indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    factors: Vec<PartitionOfUnity>,
}

impl GridPartition {
    pub fn new(factors: Vec<PartitionOfUnity>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::param("factors", "a grid needs at least one axis"));
        }
        Ok(GridPartition { factors })
    }

    pub fn factors(&self) -> &[PartitionOfUnity] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &PartitionOfUnity {
        &self.factors[i]
    }

    pub fn arity(&self) -> usize {
        self.factors.len()
    }

    pub fn mode(&self) -> Mode {
        if self.factors.iter().all(|f| f.mode == Mode::Constructible) {
            Mode::Constructible
        } else {
            Mode::Definable
        }
    }

    pub fn piece_counts(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.len()).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.factors.iter().map(|f| f.len()).product()
    }

    /// All cells as tuples of factor-piece indices.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.cell_count());
        for_each_index(&self.piece_counts(), |c| out.push(c.to_vec()));
        out
    }

    /// `∏ piece_{cᵢ}(aᵢ)`.
    pub fn weight(&self, cell: &[usize], point: &[usize]) -> f64 {
        self.factors.iter().zip(cell).zip(point).map(|((f, &k), &a)| f.pieces[k][a]).product()
    }

    /// `∏ ∫ piece_{cᵢ} dμᵢ`.
    pub fn cell_mass(&self, cell: &[usize], mus: &[DiscreteMeasure]) -> f64 {
        self.factors.iter().zip(cell).zip(mus).map(|((f, &k), mu)| f.mass(k, mu)).product()
    }

    pub fn cell_supports(&self, cell: &[usize]) -> Vec<Vec<usize>> {
        self.factors.iter().zip(cell).map(|(f, &k)| f.support(k)).collect()
    }

    /// Checks the pointwise sum of all cell weights at every point.
    pub fn check_sums(&self) -> Result<()> {
        let shape: Vec<usize> = self.factors.iter().map(|f| f.size()).collect();
        let cells = self.cells();
        let mut worst = 0.0f64;
        for_each_index(&shape, |p| {
            let s: f64 = cells.iter().map(|c| self.weight(c, p)).sum();
            worst = worst.max((s - 1.0).abs());
        });
        if worst > TOL {
            return Err(Error::Postcondition(format!("grid weights deviate from 1 by {worst}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_summing_pieces() {
        let e = PartitionOfUnity::new("x", vec![vec![0.5, 1.0], vec![0.4, 0.0]], Mode::Definable);
        assert!(e.is_err());
    }

    #[test]
    fn constructible_rejects_fractions() {
        let e = PartitionOfUnity::new("x", vec![vec![0.5], vec![0.5]], Mode::Constructible);
        assert!(e.is_err());
        assert!(PartitionOfUnity::new("x", vec![vec![0.5], vec![0.5]], Mode::Definable).is_ok());
    }

    #[test]
    fn from_sets_requires_disjoint_cover() {
        assert!(PartitionOfUnity::from_sets("x", 3, &[vec![0], vec![1, 2]]).is_ok());
        assert!(PartitionOfUnity::from_sets("x", 3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(PartitionOfUnity::from_sets("x", 3, &[vec![0]]).is_err());
    }

    #[test]
    fn grid_cells_and_masses() {
        let px = PartitionOfUnity::from_sets("x", 4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let py = PartitionOfUnity::new("y", vec![vec![1.0, 0.5, 0.0], vec![0.0, 0.5, 1.0]], Mode::Definable).unwrap();
        let g = GridPartition::new(vec![px, py]).unwrap();
        assert_eq!(g.cell_count(), 4);
        assert_eq!(g.cells()[1], vec![0, 1]);
        assert_eq!(g.mode(), Mode::Definable);
        g.check_sums().unwrap();
        let mus = [DiscreteMeasure::uniform("x", 4), DiscreteMeasure::uniform("y", 3)];
        let total: f64 = g.cells().iter().map(|c| g.cell_mass(c, &mus)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((g.cell_mass(&[0, 0], &mus) - 0.25).abs() < 1e-12);
        assert_eq!(g.cell_supports(&[1, 0]), vec![vec![2, 3], vec![0, 1]]);
    }
}
