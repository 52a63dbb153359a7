//! Small fixture builders shared by unit and integration tests.
#![doc(hidden)]

use std::collections::BTreeMap;

use crate::model::{
    Alert, AlertContext, AlertType, Channel, CustomerProfile, CustomerType, IndicatorParams,
    RiskTier, Timestamp, Transaction, TriggerMetadata,
};

pub fn tx(id: &str, ts: Timestamp, amount: i64, src: &str, dst: &str, channel: Channel) -> Transaction {
    Transaction {
        id: id.into(),
        timestamp: ts,
        amount,
        src_account: src.into(),
        dst_account: dst.into(),
        channel,
        geography: "US".into(),
    }
}

/// A context for customer `cust-1` / account `acc-1` whose window spans every
/// given transaction.
pub fn context_with(transactions: Vec<Transaction>) -> AlertContext {
    let lo = transactions.iter().map(|t| t.timestamp).min().unwrap_or(0);
    let hi = transactions.iter().map(|t| t.timestamp).max().unwrap_or(0);
    let alert = Alert {
        id: "al-000001".into(),
        customer_id: "cust-1".into(),
        alert_time: hi,
        window: (lo - 3600, hi),
        trigger: TriggerMetadata::default(),
        transaction_ids: transactions.iter().map(|t| t.id.clone()).collect(),
        alert_type: AlertType::Structuring,
        label: None,
    };
    let mut ctx = AlertContext {
        alert,
        transactions,
        customer: CustomerProfile {
            customer_id: "cust-1".into(),
            customer_type: CustomerType::Individual,
            industry_code: "5411".into(),
            risk_rating: RiskTier::Low,
            onboarding_time: lo - 86_400 * 365,
            prior_alert_count: 0,
        },
        account_id: "acc-1".into(),
        indicators: BTreeMap::new(),
        counterparty_risk: BTreeMap::new(),
        params: IndicatorParams::default(),
    };
    ctx.refresh_indicators();
    ctx
}

/// A generated world with its split, case memory and evidence index.
pub struct Fixture {
    pub world: crate::simgen::World,
    pub split: crate::simgen::DatasetSplit,
    pub index: crate::evidence::EvidenceIndex,
    pub lexicon: Vec<String>,
}

impl Fixture {
    pub fn new(config: &crate::simgen::WorldConfig) -> Self {
        let world = crate::simgen::generate_world(config).expect("world");
        let split = crate::simgen::time_split(&world.alerts, (0.6, 0.2, 0.2)).expect("split");
        let mut items = world.evidence_corpus.clone();
        items.extend(crate::simgen::build_case_memory(&split, &world));
        let index = crate::evidence::EvidenceIndex::build(items).expect("index");
        let lexicon = world.entity_lexicon().into_iter().collect();
        Self { world, split, index, lexicon }
    }

    /// 60 accounts, 60 days, 6 alerts per typology.
    pub fn small(seed: u64) -> Self {
        Self::new(&crate::simgen::WorldConfig {
            seed,
            n_accounts: 60,
            n_days: 60,
            typology_counts: AlertType::ALL.into_iter().map(|t| (t, 6)).collect(),
            ..Default::default()
        })
    }

    pub fn context(&self, alert_id: &str) -> AlertContext {
        self.world.index().context(alert_id).expect("alert")
    }

    pub fn contexts(&self) -> Vec<AlertContext> {
        let idx = self.world.index();
        self.world.alerts.iter().map(|a| idx.context(&a.id).expect("alert")).collect()
    }

    pub fn bundle(&self, ctx: &AlertContext, clearance: crate::model::AclTag) -> crate::model::EvidenceBundle {
        crate::evidence::retrieve(&self.index, &crate::evidence::RetrievalQuery::from_context(ctx, clearance))
    }

    pub fn policies(&self) -> Vec<crate::model::EvidenceItem> {
        self.index.of_type(crate::model::SourceType::Policy).cloned().collect()
    }
}
