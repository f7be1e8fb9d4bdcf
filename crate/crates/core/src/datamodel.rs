//! Domain types shared by the solvers, the simulation lab and the data loaders.
//!
//! All of these are plain values: built once, validated at construction, and
//! never mutated afterwards, so they can be shared freely across worker threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One data source: an `n × p` design matrix and its response vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupData {
    design: DMatrix<f64>,
    response: DVector<f64>,
    n: usize,
}

impl GroupData {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let n = design.nrows();
        if n == 0 || design.ncols() == 0 {
            return Err(Error::InvalidProblem(format!(
                "group design must be non-empty, got {}x{}",
                n,
                design.ncols()
            )));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch {
                context: "group response length".into(),
                expected: n,
                found: response.len(),
            });
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(
                "group data contains non-finite entries".into(),
            ));
        }
        Ok(GroupData {
            design,
            response,
            n,
        })
    }

    /// Builds a group from row-major design data.
    pub fn from_row_major(n: usize, p: usize, design: &[f64], response: &[f64]) -> Result<Self> {
        if design.len() != n * p {
            return Err(Error::DimensionMismatch {
                context: "row-major design buffer".into(),
                expected: n * p,
                found: design.len(),
            });
        }
        GroupData::new(
            DMatrix::from_row_slice(n, p, design),
            DVector::from_column_slice(response),
        )
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    /// Rows `rows` of this group, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<GroupData> {
        let design = self.design.select_rows(rows.iter());
        let response = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.response[i]));
        GroupData::new(design, response)
    }
}

/// The target group plus every auxiliary group, all sharing the feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSourceProblem {
    groups: Vec<GroupData>,
    target_index: usize,
    p: usize,
    total_n: usize,
}

impl MultiSourceProblem {
    pub fn new(groups: Vec<GroupData>, target_index: usize) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidProblem("at least one group is required".into()))?;
        if target_index >= groups.len() {
            return Err(Error::InvalidProblem(format!(
                "target index {} out of range for {} groups",
                target_index,
                groups.len()
            )));
        }
        let p = first.p();
        for (z, g) in groups.iter().enumerate() {
            if g.p() != p {
                return Err(Error::DimensionMismatch {
                    context: format!("feature count of group {z}"),
                    expected: p,
                    found: g.p(),
                });
            }
        }
        let total_n = groups.iter().map(GroupData::n).sum();
        Ok(MultiSourceProblem {
            groups,
            target_index,
            p,
            total_n,
        })
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target(&self) -> &GroupData {
        &self.groups[self.target_index]
    }

    /// Number of groups `Z`.
    pub fn z(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn total_n(&self) -> usize {
        self.total_n
    }

    /// Indices of the auxiliary groups, ascending.
    pub fn auxiliary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.groups.len()).filter(move |&z| z != self.target_index)
    }
}

/// A stacked coefficient vector `[β | ω blocks]` with its support and residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub phi: Vec<f64>,
    pub support: Vec<usize>,
    pub gamma: usize,
    pub rss: f64,
    /// Set when a restricted least-squares solve fell back to a minimum-norm solution.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl CoefficientEstimate {
    pub fn new(phi: Vec<f64>, rss: f64, rank_deficient: bool) -> Self {
        let support: Vec<usize> = phi
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        CoefficientEstimate {
            gamma: support.len(),
            phi,
            support,
            rss,
            rank_deficient,
        }
    }

    pub fn zeros(len: usize, rss: f64) -> Self {
        CoefficientEstimate::new(vec![0.0; len], rss, false)
    }
}

/// One point of the information-criterion sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbicPoint {
    pub gamma: usize,
    pub hbic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: String,
    pub estimate: CoefficientEstimate,
    pub beta_target: Vec<f64>,
    pub hbic_trace: Vec<HbicPoint>,
    pub gamma_opt: usize,
    /// Support sizes whose fit failed, with the error message.
    #[serde(default)]
    pub failed_gammas: Vec<(usize, String)>,
    /// Selected penalty level, for lasso fits.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub wall_time: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(n: usize, p: usize) -> GroupData {
        let design = DMatrix::from_fn(n, p, |i, j| (i * p + j) as f64 * 0.25 - 1.0);
        let response = DVector::from_fn(n, |i, _| i as f64 / 3.0);
        GroupData::new(design, response).unwrap()
    }

    #[test]
    fn group_rejects_bad_shapes() {
        assert!(GroupData::new(DMatrix::zeros(0, 3), DVector::zeros(0)).is_err());
        assert!(GroupData::new(DMatrix::zeros(2, 3), DVector::zeros(3)).is_err());
        let mut d = DMatrix::zeros(2, 2);
        d[(1, 1)] = f64::NAN;
        assert!(GroupData::new(d, DVector::zeros(2)).is_err());
    }

    #[test]
    fn row_major_layout() {
        let g = GroupData::from_row_major(2, 3, &[1., 2., 3., 4., 5., 6.], &[0., 1.]).unwrap();
        assert_eq!(g.design()[(0, 2)], 3.0);
        assert_eq!(g.design()[(1, 0)], 4.0);
    }

    #[test]
    fn problem_invariants() {
        let p = MultiSourceProblem::new(vec![group(3, 4), group(5, 4)], 1).unwrap();
        assert_eq!(p.total_n(), 8);
        assert_eq!(p.z(), 2);
        assert_eq!(p.auxiliary_indices().collect::<Vec<_>>(), vec![0]);
        assert!(MultiSourceProblem::new(vec![group(3, 4), group(5, 3)], 0).is_err());
        assert!(MultiSourceProblem::new(vec![group(3, 4)], 1).is_err());
        assert!(MultiSourceProblem::new(vec![], 0).is_err());
    }

    #[test]
    fn estimate_support_tracks_nonzeros() {
        let e = CoefficientEstimate::new(vec![0.0, 1.5, 0.0, -2.0], 3.0, false);
        assert_eq!(e.support, vec![1, 3]);
        assert_eq!(e.gamma, 2);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let problem = MultiSourceProblem::new(vec![group(3, 2), group(4, 2)], 0).unwrap();
        let text = serde_json::to_string(&problem).unwrap();
        let back: MultiSourceProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, problem);

        let fit = FitResult {
            method: "sotl".into(),
            estimate: CoefficientEstimate::new(vec![0.1, 0.0, 1.0 / 3.0, 0.0], 0.7, false),
            beta_target: vec![0.1, 0.0],
            hbic_trace: vec![HbicPoint {
                gamma: 1,
                hbic: -std::f64::consts::PI,
            }],
            gamma_opt: 1,
            failed_gammas: vec![],
            lambda: None,
            wall_time: 0.25,
        };
        let text = serde_json::to_string(&fit).unwrap();
        let back: FitResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fit);
    }
}
