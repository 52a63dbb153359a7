//! Logistic-regression baseline over alert-level features.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::AlertContext;
use crate::simgen::DAY;

pub const N_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "total_amount",
    "max_amount",
    "tx_count",
    "distinct_counterparties",
    "burstiness",
    "high_risk_geo",
    "prior_alert_count",
];
pub const STEP: f64 = 0.1;
pub const EPOCHS: usize = 500;

pub type Features = [f64; N_FEATURES];

/// Amounts in major units; burstiness is the most transactions in any
/// 24-hour span.
pub fn features(ctx: &AlertContext) -> Features {
    let txs = &ctx.transactions;
    let total: i64 = txs.iter().map(|t| t.amount).sum();
    let max = txs.iter().map(|t| t.amount).max().unwrap_or(0);
    let counterparties: BTreeSet<&str> = txs
        .iter()
        .map(|t| if t.src_account == ctx.account_id { t.dst_account.as_str() } else { t.src_account.as_str() })
        .collect();
    let mut times: Vec<i64> = txs.iter().map(|t| t.timestamp).collect();
    times.sort_unstable();
    let (mut lo, mut burst) = (0, 0);
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= DAY {
            lo += 1;
        }
        burst = burst.max(hi - lo + 1);
    }
    let hr = txs.iter().any(|t| ctx.params.high_risk_geos.contains(&t.geography));
    [
        total as f64 / 100.0,
        max as f64 / 100.0,
        txs.len() as f64,
        counterparties.len() as f64,
        burst as f64,
        f64::from(u8::from(hr)),
        f64::from(ctx.customer.prior_alert_count),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub mean: Features,
    pub std: Features,
    pub weights: Features,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinearScorer {
    /// Full-batch gradient descent on the mean logistic loss, with
    /// standardization statistics taken from `xs` alone. Constant features
    /// keep unit scale.
    pub fn train(xs: &[Features], ys: &[bool]) -> Self {
        assert_eq!(xs.len(), ys.len(), "features and labels differ in length");
        let n = xs.len().max(1) as f64;
        let mut mean = [0.0; N_FEATURES];
        let mut std = [1.0; N_FEATURES];
        for f in 0..N_FEATURES {
            mean[f] = xs.iter().map(|x| x[f]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[f] - mean[f]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                std[f] = var.sqrt();
            }
        }
        let mut s = Self { mean, std, weights: [0.0; N_FEATURES], bias: 0.0 };
        let z: Vec<Features> = xs.iter().map(|x| s.standardize(x)).collect();
        for _ in 0..EPOCHS {
            let mut gw = [0.0; N_FEATURES];
            let mut gb = 0.0;
            for (x, y) in z.iter().zip(ys) {
                let err = s.prob_std(x) - f64::from(u8::from(*y));
                for f in 0..N_FEATURES {
                    gw[f] += err * x[f];
                }
                gb += err;
            }
            for f in 0..N_FEATURES {
                s.weights[f] -= STEP * gw[f] / n;
            }
            s.bias -= STEP * gb / n;
        }
        s
    }

    fn standardize(&self, x: &Features) -> Features {
        std::array::from_fn(|f| (x[f] - self.mean[f]) / self.std[f])
    }

    fn prob_std(&self, z: &Features) -> f64 {
        sigmoid(self.bias + z.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>())
    }

    /// Probability of the suspicious class.
    pub fn score(&self, x: &Features) -> f64 {
        self.prob_std(&self.standardize(x))
    }

    pub fn loss(&self, xs: &[Features], ys: &[bool]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let p = self.score(x).clamp(1e-15, 1.0 - 1e-15);
                if *y { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / n
    }
}
