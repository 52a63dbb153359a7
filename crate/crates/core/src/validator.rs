//! Policy-approximate rules validator: indicator weights summed into a risk
//! score, banded into a disposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AlertContext, Disposition, Indicator};

#[derive(Debug, Error, PartialEq)]
pub enum ValidatorError {
    #[error("thresholds must satisfy 0 < monitor < escalate <= 1 (got {monitor}, {escalate})")]
    Thresholds { monitor: f64, escalate: f64 },
    #[error("weight for {0} must lie in [0,1]")]
    Weight(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorTable {
    pub weights: BTreeMap<Indicator, f64>,
    pub theta_monitor: f64,
    pub theta_escalate: f64,
}

impl Default for ValidatorTable {
    fn default() -> Self {
        Self {
            weights: BTreeMap::from([
                (Indicator::StructuringPattern, 0.45),
                (Indicator::RapidMovement, 0.40),
                (Indicator::HighRiskCounterparty, 0.30),
                (Indicator::FanIn, 0.35),
                (Indicator::PriorAlerts, 0.10),
            ]),
            theta_monitor: 0.30,
            theta_escalate: 0.55,
        }
    }
}

impl ValidatorTable {
    pub fn check(&self) -> Result<(), ValidatorError> {
        let (m, e) = (self.theta_monitor, self.theta_escalate);
        if !(0.0 < m && m < e && e <= 1.0) {
            return Err(ValidatorError::Thresholds { monitor: m, escalate: e });
        }
        for (ind, w) in &self.weights {
            if !(0.0..=1.0).contains(w) {
                return Err(ValidatorError::Weight(ind.as_str()));
            }
        }
        Ok(())
    }

    pub fn weight(&self, ind: Indicator) -> f64 {
        self.weights.get(&ind).copied().unwrap_or(0.0)
    }

    /// Score of an indicator set, capped at 1. Summed in the fixed indicator
    /// order so the result is bit-stable.
    pub fn score_of(&self, active: impl IntoIterator<Item = Indicator>) -> f64 {
        let mut active: Vec<Indicator> = active.into_iter().collect();
        active.sort();
        active.dedup();
        active.into_iter().map(|i| self.weight(i)).sum::<f64>().min(1.0)
    }

    pub fn disposition_for(&self, score: f64) -> Disposition {
        if score >= self.theta_escalate - 1e-12 {
            Disposition::Escalate
        } else if score >= self.theta_monitor - 1e-12 {
            Disposition::Monitor
        } else {
            Disposition::Dismiss
        }
    }

    pub fn score(&self, ctx: &AlertContext) -> (f64, Disposition) {
        let s = self.score_of(ctx.active_indicators());
        (s, self.disposition_for(s))
    }

    /// Active indicators ordered by descending weight, then indicator order.
    pub fn ranked(&self, active: &[Indicator]) -> Vec<Indicator> {
        let mut v = active.to_vec();
        v.sort_by(|a, b| self.weight(*b).total_cmp(&self.weight(*a)).then(a.cmp(b)));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_bands() {
        let t = ValidatorTable::default();
        t.check().unwrap();
        assert_eq!(t.score_of([]), 0.0);
        assert_eq!(t.disposition_for(0.0), Disposition::Dismiss);
        let s = t.score_of([Indicator::StructuringPattern, Indicator::HighRiskCounterparty]);
        assert!((s - 0.75).abs() < 1e-12);
        assert_eq!(t.disposition_for(s), Disposition::Escalate);
        let s = t.score_of([Indicator::RapidMovement]);
        assert_eq!(t.disposition_for(s), Disposition::Monitor);
        let s = t.score_of([Indicator::StructuringPattern, Indicator::PriorAlerts]);
        assert_eq!(t.disposition_for(s), Disposition::Escalate);
        assert_eq!(t.disposition_for(t.score_of([Indicator::PriorAlerts])), Disposition::Dismiss);
        assert_eq!(t.score_of(Indicator::ALL), 1.0);
    }

    #[test]
    fn single_typology_bands() {
        let t = ValidatorTable::default();
        let band = |i| t.disposition_for(t.score_of([i]));
        assert_eq!(band(Indicator::StructuringPattern), Disposition::Monitor);
        assert_eq!(band(Indicator::HighRiskCounterparty), Disposition::Monitor);
        assert_eq!(band(Indicator::FanIn), Disposition::Monitor);
        assert_eq!(band(Indicator::PriorAlerts), Disposition::Dismiss);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t = ValidatorTable::default();
        t.theta_monitor = 0.6;
        assert!(t.check().is_err());
        let mut t = ValidatorTable::default();
        t.weights.insert(Indicator::FanIn, 1.5);
        assert_eq!(t.check(), Err(ValidatorError::Weight("fan_in")));
    }
}
