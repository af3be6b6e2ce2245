// SPDX-License-Identifier: Apache-2.0

//! Reliability matrices: condition-by-condition TPIR grids.

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::metrics::bias_trust;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `None` marks an excluded cell.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Per-column mean over present cells; `None` for a column with none.
    pub averages: Vec<Option<f64>>,
    pub excluded_diagonal: bool,
}

impl ReliabilityMatrix {
    /// Builds the matrix and its column averages. With `excluded_diagonal`,
    /// cells whose row and column labels match must be absent.
    pub fn new(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        excluded_diagonal: bool,
    ) -> Result<Self, ProtocolError> {
        if cells.len() != row_labels.len() || cells.iter().any(|r| r.len() != col_labels.len()) {
            return Err(ProtocolError::MalformedMatrix("cell grid does not match labels".into()));
        }
        for (r, row) in cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    if !(0.0..=1.0).contains(v) {
                        return Err(ProtocolError::MalformedMatrix(format!(
                            "cell ({r}, {c}) = {v} outside [0, 1]"
                        )));
                    }
                    if excluded_diagonal && row_labels[r] == col_labels[c] {
                        return Err(ProtocolError::MalformedMatrix(format!(
                            "diagonal cell `{}` must be excluded",
                            row_labels[r]
                        )));
                    }
                }
            }
        }
        let averages = column_means(&cells, col_labels.len());
        Ok(ReliabilityMatrix {
            row_labels,
            col_labels,
            cells,
            averages,
            excluded_diagonal,
        })
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        self.cells[r][c]
    }

    /// Mean of the present cells in each row.
    pub fn row_means(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|row| mean(row.iter().flatten().copied()))
            .collect()
    }

    /// Column averages recomputed from cells and compared with the stored ones.
    pub fn averages_consistent(&self, tol: f64) -> bool {
        let fresh = column_means(&self.cells, self.col_labels.len());
        fresh.len() == self.averages.len()
            && fresh.iter().zip(&self.averages).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= tol,
                (None, None) => true,
                _ => false,
            })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn column_means(cells: &[Vec<Option<f64>>], cols: usize) -> Vec<Option<f64>> {
    (0..cols).map(|c| mean(cells.iter().filter_map(|row| row[c]))).collect()
}

/// TPIR grids for train × test modalities, one panel per rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReliabilityCube {
    pub ranks: Vec<usize>,
    pub train_labels: Vec<String>,
    pub test_labels: Vec<String>,
    /// `panels[rank_index][train][test]`.
    pub panels: Vec<Vec<Vec<f64>>>,
}

impl RankedReliabilityCube {
    pub fn new(
        ranks: Vec<usize>,
        train_labels: Vec<String>,
        test_labels: Vec<String>,
        panels: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ProtocolError> {
        if ranks.is_empty() || ranks.contains(&0) || ranks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ProtocolError::InvalidRanks(ranks));
        }
        let shape_ok = panels.len() == ranks.len()
            && panels
                .iter()
                .all(|p| p.len() == train_labels.len() && p.iter().all(|r| r.len() == test_labels.len()));
        if !shape_ok {
            return Err(ProtocolError::MalformedMatrix("cube panels do not match labels".into()));
        }
        if panels.iter().flatten().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ProtocolError::MalformedMatrix("cube value outside [0, 1]".into()));
        }
        let cube = RankedReliabilityCube {
            ranks,
            train_labels,
            test_labels,
            panels,
        };
        if !cube.is_rank_monotone() {
            return Err(ProtocolError::MalformedMatrix("cube values decrease with rank".into()));
        }
        Ok(cube)
    }

    pub fn cell(&self, train: &str, test: &str, rank: usize) -> Option<f64> {
        let k = self.ranks.iter().position(|&r| r == rank)?;
        let i = self.train_labels.iter().position(|l| l == train)?;
        let j = self.test_labels.iter().position(|l| l == test)?;
        Some(self.panels[k][i][j])
    }

    /// Panel for one rank as a matrix without excluded cells.
    pub fn panel_matrix(&self, rank: usize) -> Option<ReliabilityMatrix> {
        let k = self.ranks.iter().position(|&r| r == rank)?;
        let cells = self.panels[k]
            .iter()
            .map(|row| row.iter().map(|&v| Some(v)).collect())
            .collect();
        ReliabilityMatrix::new(self.train_labels.clone(), self.test_labels.clone(), cells, false).ok()
    }

    pub fn is_rank_monotone(&self) -> bool {
        self.panels.windows(2).all(|w| {
            w[0].iter()
                .flatten()
                .zip(w[1].iter().flatten())
                .all(|(lo, hi)| lo <= hi)
        })
    }
}

/// Addresses one cube cell: trained on `train`, tested on `test`, at `rank`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeCondition {
    pub train: String,
    pub test: String,
    pub rank: usize,
}

impl CubeCondition {
    pub fn new(train: impl Into<String>, test: impl Into<String>, rank: usize) -> Self {
        CubeCondition {
            train: train.into(),
            test: test.into(),
            rank,
        }
    }
}

impl std::fmt::Display for CubeCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}@{}", self.train, self.test, self.rank)
    }
}

/// Trust change between two cube cells: `cell(target) - cell(base)`.
pub fn trust_delta_report(
    cube: &RankedReliabilityCube,
    base: &CubeCondition,
    target: &CubeCondition,
) -> Result<f64, ProtocolError> {
    let lookup = |c: &CubeCondition| {
        cube.cell(&c.train, &c.test, c.rank)
            .ok_or_else(|| ProtocolError::MissingCell(c.to_string()))
    };
    Ok(bias_trust(lookup(base)?, lookup(target)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMOTIONS: [&str; 5] = ["Neutral", "Smile", "Sleepy", "Shock", "Sunglasses"];

    fn published_emotion_table() -> ReliabilityMatrix {
        let rows: [[f64; 5]; 5] = [
            [f64::NAN, 1.0000, 1.0000, 1.0000, 1.0000],
            [0.9911, f64::NAN, 0.9911, 0.9732, 0.9911],
            [1.0000, 0.9911, f64::NAN, 1.0000, 0.9911],
            [0.8929, 0.9375, 0.9732, f64::NAN, 0.9643],
            [0.3571, 0.3839, 0.3482, 0.4732, f64::NAN],
        ];
        let cells = rows
            .iter()
            .map(|r| r.iter().map(|&v| (!v.is_nan()).then_some(v)).collect())
            .collect();
        let labels: Vec<String> = EMOTIONS.iter().map(|s| s.to_string()).collect();
        ReliabilityMatrix::new(labels.clone(), labels, cells, true).unwrap()
    }

    #[test]
    fn published_column_averages() {
        let m = published_emotion_table();
        let expected = [0.8103, 0.8281, 0.8281, 0.8616, 0.9866];
        for (avg, want) in m.averages.iter().zip(expected) {
            assert!((avg.unwrap() - want).abs() < 1e-4, "{avg:?} vs {want}");
        }
        assert!(m.averages_consistent(1e-12));
        // sunglasses row is the minimum
        let rows = m.row_means();
        let min = rows.iter().map(|v| v.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(rows[4].unwrap(), min);
    }

    #[test]
    fn diagonal_cell_rejected_when_excluded() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let err = ReliabilityMatrix::new(
            labels.clone(),
            labels,
            vec![vec![Some(1.0), Some(0.5)], vec![None, None]],
            true,
        );
        assert!(matches!(err, Err(ProtocolError::MalformedMatrix(_))));
    }

    fn published_modality_cube() -> RankedReliabilityCube {
        let labels: Vec<String> = ["RGB", "NIR", "IR", "SKETCH"].iter().map(|s| s.to_string()).collect();
        let panels = vec![
            vec![
                vec![1.0000, 0.9358, 0.0218, 0.0342],
                vec![0.7569, 0.9951, 0.0058, 0.0513],
                vec![0.0356, 0.0148, 0.9917, 0.0085],
                vec![0.0345, 0.0177, 0.0083, 1.0000],
            ],
            vec![
                vec![1.0000, 0.9849, 0.0803, 0.1368],
                vec![0.9037, 0.9977, 0.0623, 0.2051],
                vec![0.0963, 0.0749, 1.0000, 0.0513],
                vec![0.1256, 0.0790, 0.0398, 1.0000],
            ],
            vec![
                vec![1.0000, 0.9942, 0.1432, 0.1966],
                vec![0.9407, 0.9991, 0.1150, 0.3162],
                vec![0.1538, 0.1481, 1.0000, 0.0769],
                vec![0.2078, 0.1429, 0.0970, 1.0000],
            ],
        ];
        RankedReliabilityCube::new(vec![1, 5, 10], labels.clone(), labels, panels).unwrap()
    }

    #[test]
    fn trust_delta_rgb_to_nir() {
        let cube = published_modality_cube();
        let base = CubeCondition::new("RGB", "RGB", 1);
        let target = CubeCondition::new("RGB", "NIR", 1);
        let d = trust_delta_report(&cube, &base, &target).unwrap();
        assert!((d + 0.0642).abs() < 1e-12);
        assert_eq!(trust_delta_report(&cube, &base, &base).unwrap(), 0.0);
        assert_eq!(trust_delta_report(&cube, &target, &base).unwrap(), -d);
        assert!(matches!(
            trust_delta_report(&cube, &base, &CubeCondition::new("RGB", "NIR", 3)),
            Err(ProtocolError::MissingCell(_))
        ));
    }

    #[test]
    fn cube_rejects_decreasing_panels() {
        let labels = vec!["A".to_string()];
        let err = RankedReliabilityCube::new(
            vec![1, 5],
            labels.clone(),
            labels,
            vec![vec![vec![0.5]], vec![vec![0.4]]],
        );
        assert!(err.is_err());
        assert!(published_modality_cube().is_rank_monotone());
    }
}
