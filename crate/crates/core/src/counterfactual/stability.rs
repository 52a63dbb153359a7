//! Irrelevant-perturbation probes: the decision should not move when
//! transactions are re-ordered or an amount shifts by one minor unit away
//! from every indicator threshold.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::generate::{GenerationError, TriageGenerator};
use crate::model::{AlertContext, EvidenceBundle};
use crate::rng::stream;
use crate::validator::ValidatorTable;

/// Minor units an amount must stay clear of any indicator threshold.
pub const PROBE_GUARD: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Permutation,
    AmountNoise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n_probes: usize,
    pub seed: u64,
    /// Probe kinds, cycled over the probe index.
    pub kinds: Vec<ProbeKind>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { n_probes: 5, seed: 0, kinds: vec![ProbeKind::Permutation, ProbeKind::AmountNoise] }
    }
}

impl StabilityConfig {
    pub fn permutation_only(n_probes: usize, seed: u64) -> Self {
        Self { n_probes, seed, kinds: vec![ProbeKind::Permutation] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StabilityResult {
    pub generated: usize,
    pub stable: usize,
    /// Amount probes with no transaction clear of the guard band.
    pub skipped: usize,
}

impl StabilityResult {
    /// Stable share of generated probes; 1 when none could be generated.
    pub fn fraction(&self) -> f64 {
        if self.generated == 0 {
            1.0
        } else {
            self.stable as f64 / self.generated as f64
        }
    }
}

/// An amount may be nudged when it sits more than the guard band away from
/// the structuring threshold and moving it anywhere inside the band leaves
/// every indicator as it is.
pub fn amount_probe_allowed(ctx: &AlertContext, tx_index: usize) -> bool {
    let a = ctx.transactions[tx_index].amount;
    if (a - ctx.params.structuring_threshold).abs() <= PROBE_GUARD || a - PROBE_GUARD <= 0 {
        return false;
    }
    [-PROBE_GUARD, PROBE_GUARD].into_iter().all(|d| {
        let mut c = ctx.clone();
        c.transactions[tx_index].amount = a + d;
        crate::indicators::compute(&c) == ctx.indicators
    })
}

pub fn stability_probe(
    ctx: &AlertContext,
    bundle: &EvidenceBundle,
    generator: &dyn TriageGenerator,
    table: &ValidatorTable,
    config: &StabilityConfig,
) -> Result<StabilityResult, GenerationError> {
    let (score, disposition) = table.score(ctx);
    let base = generator.generate(ctx, bundle, &[])?.disposition;
    let allowed: Vec<usize> = if config.kinds.contains(&ProbeKind::AmountNoise) {
        (0..ctx.transactions.len()).filter(|i| amount_probe_allowed(ctx, *i)).collect()
    } else {
        vec![]
    };
    let mut out = StabilityResult::default();
    for k in 0..config.n_probes {
        let Some(kind) = config.kinds.get(k % config.kinds.len().max(1)) else { break };
        let mut rng = stream(config.seed, &format!("probe:{}", ctx.alert.id), k as u64);
        let mut probe = ctx.clone();
        match kind {
            ProbeKind::Permutation => probe.transactions.shuffle(&mut rng),
            ProbeKind::AmountNoise => {
                if allowed.is_empty() {
                    out.skipped += 1;
                    continue;
                }
                let i = allowed[rng.random_range(0..allowed.len())];
                probe.transactions[i].amount += if rng.random_bool(0.5) { 1 } else { -1 };
            }
        }
        probe.refresh_indicators();
        out.generated += 1;
        let (s, d) = table.score(&probe);
        let same_validator = s.to_bits() == score.to_bits() && d == disposition;
        if same_validator && generator.generate(&probe, bundle, &[])?.disposition == base {
            out.stable += 1;
        }
    }
    Ok(out)
}
