//! Chronological train/val/test split.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{Alert, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_alert_ids: Vec<String>,
    pub val_alert_ids: Vec<String>,
    pub test_alert_ids: Vec<String>,
    /// `(t_train_end, t_val_end)`: the latest alert time in train, and in
    /// train plus val. Alerts sharing a boundary timestamp may sit on both
    /// sides, so the comparison with the next set is `<=` at ties.
    pub boundary_times: (Timestamp, Timestamp),
    /// Case memory built from this split only ever sees training alerts.
    pub leakage_attestation: bool,
}

impl DatasetSplit {
    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.train_alert_ids.iter().chain(&self.val_alert_ids).chain(&self.test_alert_ids)
    }
}

/// Orders alerts by `(alert_time, id)` and cuts `floor(n*train)` and
/// `floor(n*val)` off the front; the remainder is test.
pub fn time_split(alerts: &[Alert], ratios: (f64, f64, f64)) -> Result<DatasetSplit, SimError> {
    if alerts.is_empty() {
        return Err(SimError::EmptyAlerts);
    }
    let (tr, va, te) = ratios;
    if tr < 0.0 || va < 0.0 || te < 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(SimError::BadRatios);
    }
    let mut order: Vec<&Alert> = alerts.iter().collect();
    order.sort_by(|a, b| (a.alert_time, &a.id).cmp(&(b.alert_time, &b.id)));
    let n = order.len() as f64;
    let n_train = (n * tr + 1e-9).floor() as usize;
    let n_val = (n * va + 1e-9).floor() as usize;
    let before_first = order[0].alert_time - 1;
    let end_of = |k: usize| if k == 0 { before_first } else { order[k - 1].alert_time };
    let boundary_times = (end_of(n_train), end_of(n_train + n_val));
    let ids: Vec<String> = order.into_iter().map(|a| a.id.clone()).collect();
    Ok(DatasetSplit {
        train_alert_ids: ids[..n_train].to_vec(),
        val_alert_ids: ids[n_train..n_train + n_val].to_vec(),
        test_alert_ids: ids[n_train + n_val..].to_vec(),
        boundary_times,
        leakage_attestation: true,
    })
}
