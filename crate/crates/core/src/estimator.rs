//! Aggregation of accepted reports into a gradient estimate.

use serde::{Deserialize, Serialize};

use crate::workers::RoundReports;
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// `(1/n) Σᵢ Yᵢ`
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
}

impl EstimatorSpec {
    pub fn mean() -> Self {
        Self {
            kind: EstimatorKind::Mean,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(Self::mean()),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EstimatorKind::Mean => "mean",
        }
    }

    pub fn estimate(&self, reports: &RoundReports) -> Result<ParamVector> {
        self.estimate_slice(&reports.reports)
    }

    pub fn estimate_slice(&self, reports: &[ParamVector]) -> Result<ParamVector> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Contract("estimate called with no reports".into()))?;
        match self.kind {
            EstimatorKind::Mean => {
                let mut acc = ParamVector::zeros(first.dim());
                for y in reports {
                    if y.dim() != acc.dim() {
                        return Err(Error::Contract("reports of mixed dimension".into()));
                    }
                    acc.iter_mut().zip(y.iter()).for_each(|(a, v)| *a += v);
                }
                let n = reports.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                Ok(acc)
            }
        }
    }
}
