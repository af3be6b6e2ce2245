// SPDX-License-Identifier: Apache-2.0

//! Cost-weighted risk, trust change, fold aggregation and cohort decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data_model::CohortLabel;

/// Costs attached to the two error types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    /// Cost of a false non-match.
    pub alpha: f64,
    /// Cost of a false match.
    pub beta: f64,
}

impl RiskParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MetricsError> {
        let p = RiskParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn balanced() -> Self {
        RiskParams { alpha: 1.0, beta: 1.0 }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(MetricsError::InvalidCost { name, value: v });
            }
        }
        Ok(())
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::OutOfRange { name, value })
    }
}

/// `alpha * error_fnmr + beta * error_fmr`.
pub fn risk_error(error_fnmr: f64, error_fmr: f64, params: &RiskParams) -> Result<f64, MetricsError> {
    params.validate()?;
    check_probability("error_fnmr", error_fnmr)?;
    check_probability("error_fmr", error_fmr)?;
    Ok(params.alpha * error_fnmr + params.beta * error_fmr)
}

/// Risk from classifier rates, taking FNMR as `1 - sensitivity` and FMR as
/// `1 - specificity`.
pub fn risk_from_rates(sensitivity: f64, specificity: f64, params: &RiskParams) -> Result<f64, MetricsError> {
    check_probability("sensitivity", sensitivity)?;
    check_probability("specificity", specificity)?;
    risk_error(1.0 - sensitivity, 1.0 - specificity, params)
}

/// Change in reliability going from condition `i` to condition `j`.
/// Positive is a gain of trust, negative a loss.
pub fn bias_trust(r_i: f64, r_j: f64) -> Result<f64, MetricsError> {
    check_probability("r_i", r_i)?;
    check_probability("r_j", r_j)?;
    Ok(r_j - r_i)
}

/// Mean and population standard deviation over fold values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub fold_values: Vec<f64>,
}

impl MetricSummary {
    /// `mean ± std` at four decimals.
    pub fn display_pm(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

pub fn aggregate_mean_std(fold_values: &[f64]) -> Result<MetricSummary, MetricsError> {
    if fold_values.is_empty() {
        return Err(MetricsError::EmptyFolds);
    }
    if fold_values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteValue);
    }
    let n = fold_values.len() as f64;
    let mean = fold_values.iter().sum::<f64>() / n;
    let var = fold_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MetricSummary {
        mean,
        std: var.sqrt(),
        fold_values: fold_values.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortExtreme {
    pub cohort: CohortLabel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDecomposition {
    /// Unweighted mean over cohorts.
    pub overall: f64,
    /// Highest-valued cohort.
    pub bias_for: CohortExtreme,
    /// Lowest-valued cohort.
    pub bias_against: CohortExtreme,
}

/// Splits an overall figure into its cohorts and names the extremes.
/// Ties resolve to the first cohort in canonical order.
pub fn cohort_decomposition(per_cohort: &BTreeMap<CohortLabel, f64>) -> Result<CohortDecomposition, MetricsError> {
    if per_cohort.is_empty() {
        return Err(MetricsError::EmptyCohorts);
    }
    if per_cohort.values().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteValue);
    }
    let mut max: Option<(&CohortLabel, f64)> = None;
    let mut min: Option<(&CohortLabel, f64)> = None;
    for (label, &v) in per_cohort {
        if max.is_none_or(|(_, m)| v > m) {
            max = Some((label, v));
        }
        if min.is_none_or(|(_, m)| v < m) {
            min = Some((label, v));
        }
    }
    let (max_l, max_v) = max.expect("non-empty");
    let (min_l, min_v) = min.expect("non-empty");
    Ok(CohortDecomposition {
        overall: per_cohort.values().sum::<f64>() / per_cohort.len() as f64,
        bias_for: CohortExtreme {
            cohort: max_l.clone(),
            value: max_v,
        },
        bias_against: CohortExtreme {
            cohort: min_l.clone(),
            value: min_v,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> CohortLabel {
        CohortLabel::new(s).unwrap()
    }

    #[test]
    fn balanced_risk_worked_examples() {
        let p = RiskParams::balanced();
        let r = risk_from_rates(0.9679, 0.9918, &p).unwrap();
        assert!((r - 0.0403).abs() < 1e-12, "{r}");
        let r = risk_from_rates(0.9420, 0.9803, &p).unwrap();
        assert!((r - 0.0777).abs() < 1e-12, "{r}");
    }

    #[test]
    fn zero_cost_and_linearity() {
        assert_eq!(risk_error(0.3, 0.7, &RiskParams::new(0.0, 0.0).unwrap()).unwrap(), 0.0);
        let r = risk_from_rates(0.9, 0.4, &RiskParams::new(2.0, 0.0).unwrap()).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
    }

    #[test]
    fn risk_rejects_bad_inputs() {
        assert!(RiskParams::new(-1.0, 0.0).is_err());
        assert!(RiskParams::new(1.0, f64::NAN).is_err());
        assert!(matches!(
            risk_error(1.2, 0.0, &RiskParams::balanced()),
            Err(MetricsError::OutOfRange { name: "error_fnmr", .. })
        ));
    }

    #[test]
    fn trust_change_rgb_to_nir() {
        let d = bias_trust(1.0, 0.9358).unwrap();
        assert!((d + 0.0642).abs() < 1e-12, "{d}");
        assert_eq!(bias_trust(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(bias_trust(0.3, 0.8).unwrap(), -bias_trust(0.8, 0.3).unwrap());
        assert!(bias_trust(1.5, 0.2).is_err());
    }

    #[test]
    fn mean_std_population_convention() {
        let s = aggregate_mean_std(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.0));
        let s = aggregate_mean_std(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.std), (0.5, 0.5));
        assert_eq!(s.display_pm(), "0.5000 ± 0.5000");
        assert_eq!(aggregate_mean_std(&[]), Err(MetricsError::EmptyFolds));
    }

    #[test]
    fn decomposition_of_published_cohort_values() {
        let values: BTreeMap<_, _> = [
            (l("neutral"), 0.8103),
            (l("smile"), 0.8281),
            (l("sleepy"), 0.8281),
            (l("shock"), 0.8616),
            (l("sunglasses"), 0.9866),
        ]
        .into();
        let d = cohort_decomposition(&values).unwrap();
        assert!((d.overall - 0.8629).abs() < 1e-4);
        assert_eq!(d.bias_for.cohort, l("sunglasses"));
        assert_eq!(d.bias_against.cohort, l("neutral"));
    }

    #[test]
    fn decomposition_edge_cases() {
        let single: BTreeMap<_, _> = [(l("smile"), 0.7)].into();
        let d = cohort_decomposition(&single).unwrap();
        assert_eq!(d.overall, 0.7);
        assert_eq!(d.bias_for, d.bias_against);

        let flat: BTreeMap<_, _> = [(l("zeta"), 0.5), (l("alpha"), 0.5), (l("mid"), 0.5)].into();
        let d = cohort_decomposition(&flat).unwrap();
        assert_eq!(d.bias_for.cohort, l("alpha"));
        assert_eq!(d.bias_against.cohort, l("alpha"));
        assert_eq!(cohort_decomposition(&BTreeMap::new()), Err(MetricsError::EmptyCohorts));
    }
}
