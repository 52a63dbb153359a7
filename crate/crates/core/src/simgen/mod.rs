//! Deterministic synthetic AML world: accounts, background activity,
//! embedded laundering typologies, labelled alerts, and the evidence corpus.

mod corpus;
mod split;
mod typology;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Alert, AlertContext, AlertType, Channel, CustomerProfile, CustomerType, EvidenceItem,
    IndicatorParams, Label, RiskTier, Timestamp, Transaction, TriggerMetadata, CASH_SOURCE,
};
use crate::rng::stream;

pub use corpus::{alert_items, build_case_memory, seq as alert_seq, policy_items, typology_phrase, SliceStats};
pub use split::{time_split, DatasetSplit};
use typology::embed_typology;

/// 2024-01-01T00:00:00Z.
pub const EPOCH_START: Timestamp = 1_704_067_200;
pub const DAY: i64 = 86_400;
pub const HOUR: i64 = 3_600;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("typology {typology} cannot fit: {reason}")]
    Infeasible { typology: &'static str, reason: String },
    #[error("cannot split an empty alert list")]
    EmptyAlerts,
    #[error("split ratios must be non-negative and sum to 1")]
    BadRatios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_accounts: usize,
    pub n_days: u32,
    pub background_tx_per_account_per_day: f64,
    pub typology_counts: BTreeMap<AlertType, usize>,
    /// Minor units; default $10,000.00.
    pub structuring_threshold: i64,
    /// Fraction of all alerts raised on purely benign activity.
    pub noise_alert_rate: f64,
    pub high_risk_geo_set: Vec<String>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_accounts: 500,
            n_days: 180,
            background_tx_per_account_per_day: 0.3,
            typology_counts: AlertType::ALL.into_iter().map(|t| (t, 50)).collect(),
            structuring_threshold: 1_000_000,
            noise_alert_rate: 0.9,
            high_risk_geo_set: IndicatorParams::default().high_risk_geos,
        }
    }
}

impl WorldConfig {
    pub fn params(&self) -> IndicatorParams {
        IndicatorParams {
            structuring_threshold: self.structuring_threshold,
            high_risk_geos: self.high_risk_geo_set.clone(),
        }
    }

    pub fn typology_total(&self) -> usize {
        self.typology_counts.values().sum()
    }

    pub fn sim_end(&self) -> Timestamp {
        EPOCH_START + i64::from(self.n_days) * DAY
    }

    fn check(&self) -> Result<(), SimError> {
        if self.structuring_threshold < 100 {
            return Err(SimError::InvalidConfig("structuring_threshold must be at least 100".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_alert_rate) {
            return Err(SimError::InvalidConfig("noise_alert_rate must be in [0,1]".into()));
        }
        if !(self.background_tx_per_account_per_day >= 0.0) {
            return Err(SimError::InvalidConfig("background rate must be >= 0".into()));
        }
        if self.n_accounts < 2 {
            return Err(SimError::InvalidConfig("need at least 2 accounts".into()));
        }
        for (t, n) in &self.typology_counts {
            if *n == 0 {
                continue;
            }
            let (span_days, min_accounts) = typology::requirements(*t);
            if i64::from(self.n_days) * DAY < span_days * DAY + 2 * DAY {
                return Err(SimError::Infeasible {
                    typology: t.as_str(),
                    reason: format!("needs at least {} days, have {}", span_days + 2, self.n_days),
                });
            }
            if self.regular_accounts() < min_accounts {
                return Err(SimError::Infeasible {
                    typology: t.as_str(),
                    reason: format!("needs at least {min_accounts} regular accounts"),
                });
            }
            if *t == AlertType::HighRiskCounterparty && self.high_risk_geo_set.is_empty() {
                return Err(SimError::Infeasible {
                    typology: t.as_str(),
                    reason: "high_risk_geo_set is empty".into(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn high_risk_accounts(&self) -> usize {
        (self.n_accounts / 20).max(1)
    }

    pub(crate) fn regular_accounts(&self) -> usize {
        self.n_accounts - self.high_risk_accounts()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: String,
    pub customer_id: String,
    pub geography: String,
    pub risk_tier: RiskTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Customer {
    pub customer_id: String,
    pub customer_type: CustomerType,
    pub industry_code: String,
    pub risk_rating: RiskTier,
    pub onboarding_time: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypologyInstance {
    pub alert_type: AlertType,
    pub account_id: String,
    pub transaction_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub accounts: Vec<Account>,
    pub customers: Vec<Customer>,
    pub transactions: Vec<Transaction>,
    pub typology_instances: Vec<TypologyInstance>,
    pub alerts: Vec<Alert>,
    pub evidence_corpus: Vec<EvidenceItem>,
}

pub(crate) fn account_id(i: usize) -> String {
    format!("acc-{:06}", i + 1)
}

pub(crate) fn customer_id(i: usize) -> String {
    format!("cust-{:06}", i + 1)
}

const INDUSTRIES: &[&str] = &["5411", "5812", "6513", "7011", "4121", "5999", "8011", "1520"];
const HOME_GEOS: &[&str] = &["US", "US", "US", "US", "US", "US", "GB", "DE", "MX", "CA"];

/// World under construction; transaction ids are provisional keys until
/// `finish_transactions` renumbers them.
pub(crate) struct Draft<'c> {
    pub config: &'c WorldConfig,
    pub accounts: Vec<Account>,
    pub pool: Vec<usize>,
    pub transactions: Vec<Transaction>,
}

impl Draft<'_> {
    pub fn regular(&self) -> usize {
        self.config.regular_accounts()
    }

    /// A regular account index not in `exclude`.
    pub fn pick_other(&self, rng: &mut impl Rng, exclude: &[usize]) -> usize {
        loop {
            let i = rng.random_range(0..self.regular());
            if !exclude.contains(&i) {
                return i;
            }
        }
    }

    pub fn push(&mut self, key: String, ts: Timestamp, amount: i64, src: String, dst: String, channel: Channel, geography: String) {
        self.transactions.push(Transaction {
            id: key,
            timestamp: ts,
            amount,
            src_account: src,
            dst_account: dst,
            channel,
            geography,
        });
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<World, SimError> {
    config.check()?;
    let seed = config.seed;
    let (accounts, customers) = make_accounts(config);

    let regular = config.regular_accounts();
    let pool_size = (regular / 10).max(1);
    let mut order: Vec<usize> = (0..regular).collect();
    {
        let mut rng = stream(seed, "pool", 0);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
    }
    let pool = order[..pool_size].to_vec();

    let mut draft = Draft { config, accounts, pool, transactions: Vec::new() };

    let mut instances = Vec::new();
    for t in AlertType::ALL {
        let count = config.typology_counts.get(&t).copied().unwrap_or(0);
        for k in 0..count {
            let mut rng = stream(seed, &format!("typology-{}", t.as_str()), k as u64);
            instances.push(embed_typology(&mut draft, t, k, &mut rng));
        }
    }
    background(&mut draft);

    // renumber transactions by (timestamp, provisional key)
    draft.transactions.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    let mut renamed: HashMap<String, String> = HashMap::with_capacity(draft.transactions.len());
    for (i, tx) in draft.transactions.iter_mut().enumerate() {
        let id = format!("tx-{:07}", i + 1);
        renamed.insert(std::mem::replace(&mut tx.id, id.clone()), id);
    }
    for inst in &mut instances {
        for id in &mut inst.transaction_ids {
            *id = renamed[id.as_str()].clone();
        }
        inst.transaction_ids.sort();
    }
    let Draft { accounts, transactions, .. } = draft;

    let alerts = make_alerts(config, &accounts, &transactions, &instances);
    let mut world = World {
        config: config.clone(),
        accounts,
        customers,
        transactions,
        typology_instances: instances,
        alerts,
        evidence_corpus: Vec::new(),
    };
    world.evidence_corpus = corpus::base_corpus(&world);
    Ok(world)
}

fn make_accounts(config: &WorldConfig) -> (Vec<Account>, Vec<Customer>) {
    let regular = config.regular_accounts();
    let mut accounts = Vec::with_capacity(config.n_accounts);
    let mut customers = Vec::with_capacity(config.n_accounts);
    for i in 0..config.n_accounts {
        let mut rng = stream(config.seed, "account", i as u64);
        let (geography, tier) = if i < regular {
            let g = HOME_GEOS[rng.random_range(0..HOME_GEOS.len())].to_string();
            let r: f64 = rng.random();
            let tier = if r < 0.6 {
                RiskTier::Low
            } else if r < 0.9 {
                RiskTier::Medium
            } else {
                RiskTier::High
            };
            (g, tier)
        } else {
            let geos = &config.high_risk_geo_set;
            let g = if geos.is_empty() {
                "IR".to_string()
            } else {
                geos[rng.random_range(0..geos.len())].clone()
            };
            (g, RiskTier::High)
        };
        let customer_type = if rng.random_bool(0.7) {
            CustomerType::Individual
        } else {
            CustomerType::Business
        };
        let industry_code = INDUSTRIES[rng.random_range(0..INDUSTRIES.len())].to_string();
        let onboarding_time = EPOCH_START - rng.random_range(30..3000) * DAY;
        accounts.push(Account {
            id: account_id(i),
            customer_id: customer_id(i),
            geography,
            risk_tier: tier,
        });
        customers.push(Customer {
            customer_id: customer_id(i),
            customer_type,
            industry_code,
            risk_rating: tier,
            onboarding_time,
        });
    }
    (accounts, customers)
}

fn background(draft: &mut Draft<'_>) {
    let config = draft.config;
    let rate = config.background_tx_per_account_per_day;
    if rate <= 0.0 {
        return;
    }
    let poisson = Poisson::new(rate).expect("positive rate");
    let threshold = config.structuring_threshold;
    let regular = draft.regular();
    for i in 0..regular {
        let mut rng = stream(config.seed, "background", i as u64);
        for day in 0..i64::from(config.n_days) {
            let n = poisson.sample(&mut rng) as usize;
            for j in 0..n {
                let ts = EPOCH_START + day * DAY + rng.random_range(0..DAY);
                let key = format!("b:{i:06}:{day:04}:{j}");
                let r: f64 = rng.random();
                if r < 0.10 {
                    let amount = rng.random_range(2_000..=threshold / 4);
                    draft.push(key, ts, amount, CASH_SOURCE.into(), account_id(i), Channel::Cash, "US".into());
                } else {
                    let channel = if r < 0.55 {
                        Channel::Ach
                    } else if r < 0.80 {
                        Channel::Internal
                    } else {
                        Channel::Wire
                    };
                    let dst = draft.pick_other(&mut rng, &[i]);
                    let amount = rng.random_range(1_000..=250_000);
                    let geography = draft.accounts[dst].geography.clone();
                    draft.push(key, ts, amount, account_id(i), account_id(dst), channel, geography);
                }
            }
        }
    }
}

/// Transactions touching each account, in timestamp order.
fn by_account(transactions: &[Transaction]) -> HashMap<&str, Vec<usize>> {
    let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, tx) in transactions.iter().enumerate() {
        map.entry(tx.src_account.as_str()).or_default().push(i);
        if tx.dst_account != tx.src_account {
            map.entry(tx.dst_account.as_str()).or_default().push(i);
        }
    }
    map
}

fn rule_id(t: AlertType) -> &'static str {
    match t {
        AlertType::Structuring => "R-STR-01",
        AlertType::RapidMovement => "R-RAP-01",
        AlertType::HighRiskCounterparty => "R-HRC-01",
        AlertType::FanIn => "R-FAN-01",
    }
}

fn trigger(t: AlertType, score: f64, threshold: i64) -> TriggerMetadata {
    let rule = rule_id(t).to_string();
    TriggerMetadata {
        rule_ids: vec![rule.clone()],
        rule_scores: BTreeMap::from([(rule.clone(), (score * 10_000.0).round() / 10_000.0)]),
        thresholds: BTreeMap::from([(rule, threshold)]),
    }
}

struct DraftAlert {
    key: String,
    alert: Alert,
}

fn make_alerts(
    config: &WorldConfig,
    accounts: &[Account],
    transactions: &[Transaction],
    instances: &[TypologyInstance],
) -> Vec<Alert> {
    let seed = config.seed;
    let touching = by_account(transactions);
    let index_of: HashMap<&str, usize> =
        transactions.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let typology_txs: BTreeSet<&str> = instances
        .iter()
        .flat_map(|i| i.transaction_ids.iter().map(String::as_str))
        .collect();
    let customer_of: HashMap<&str, &str> =
        accounts.iter().map(|a| (a.id.as_str(), a.customer_id.as_str())).collect();
    let window_txs = |account: &str, start: Timestamp, end: Timestamp| -> Vec<&Transaction> {
        touching
            .get(account)
            .map(|ix| {
                ix.iter()
                    .map(|i| &transactions[*i])
                    .filter(|t| t.timestamp >= start && t.timestamp <= end)
                    .collect()
            })
            .unwrap_or_default()
    };

    let mut drafts = Vec::new();
    let mut per_type: BTreeMap<AlertType, u64> = BTreeMap::new();
    for inst in instances {
        let k = per_type.entry(inst.alert_type).or_default();
        let mut rng = stream(seed, &format!("alert-{}", inst.alert_type.as_str()), *k);
        *k += 1;
        let times: Vec<Timestamp> =
            inst.transaction_ids.iter().map(|id| transactions[index_of[id.as_str()]].timestamp).collect();
        let first = *times.iter().min().expect("non-empty instance");
        let last = *times.iter().max().expect("non-empty instance");
        let alert_time = last + rng.random_range(HOUR..=DAY);
        let window = (first - DAY, alert_time);
        let mut ids: BTreeSet<String> = inst.transaction_ids.iter().cloned().collect();
        ids.extend(window_txs(&inst.account_id, window.0, window.1).into_iter().map(|t| t.id.clone()));
        let score = rng.random_range(0.45..1.0);
        drafts.push(DraftAlert {
            key: format!("t:{}:{}", inst.alert_type.as_str(), k),
            alert: Alert {
                id: String::new(),
                customer_id: customer_of[inst.account_id.as_str()].to_string(),
                alert_time,
                window,
                trigger: trigger(inst.alert_type, score, config.structuring_threshold),
                transaction_ids: ids.into_iter().collect(),
                alert_type: inst.alert_type,
                label: Some(Label::Suspicious),
            },
        });
    }

    let n_typ = instances.len();
    let rate = config.noise_alert_rate;
    let n_noise = if rate >= 1.0 {
        config.n_accounts
    } else {
        ((n_typ as f64) * rate / (1.0 - rate)).round() as usize
    };
    let regular = config.regular_accounts();
    let start = EPOCH_START + 7 * DAY;
    let end = config.sim_end();
    for j in 0..n_noise {
        let mut rng = stream(seed, "noise", j as u64);
        for _attempt in 0..64 {
            let acct = rng.random_range(0..regular);
            let alert_time = rng.random_range(start..end);
            let len = rng.random_range(3..=7) * DAY;
            let window = (alert_time - len, alert_time);
            let account = &accounts[acct].id;
            let ids: Vec<String> = window_txs(account, window.0, window.1)
                .into_iter()
                .filter(|t| !typology_txs.contains(t.id.as_str()))
                .map(|t| t.id.clone())
                .collect();
            if ids.is_empty() {
                continue;
            }
            let alert_type = AlertType::ALL[rng.random_range(0..4)];
            let score = rng.random_range(0.05..0.90);
            let mut ids = ids;
            ids.sort();
            drafts.push(DraftAlert {
                key: format!("n:{j:06}"),
                alert: Alert {
                    id: String::new(),
                    customer_id: accounts[acct].customer_id.clone(),
                    alert_time,
                    window,
                    trigger: trigger(alert_type, score, config.structuring_threshold),
                    transaction_ids: ids,
                    alert_type,
                    label: Some(Label::Normal),
                },
            });
            break;
        }
    }

    drafts.sort_by(|a, b| (a.alert.alert_time, &a.key).cmp(&(b.alert.alert_time, &b.key)));
    drafts
        .into_iter()
        .enumerate()
        .map(|(i, mut d)| {
            d.alert.id = format!("al-{:06}", i + 1);
            d.alert
        })
        .collect()
}

/// Lookup structures for building alert contexts from a world.
pub struct WorldIndex<'w> {
    pub world: &'w World,
    tx_by_id: HashMap<&'w str, &'w Transaction>,
    accounts: HashMap<&'w str, &'w Account>,
    account_of_customer: HashMap<&'w str, &'w Account>,
    customers: HashMap<&'w str, &'w Customer>,
    alert_times: HashMap<&'w str, Vec<Timestamp>>,
    alerts: HashMap<&'w str, &'w Alert>,
}

impl<'w> WorldIndex<'w> {
    pub fn new(world: &'w World) -> Self {
        let mut alert_times: HashMap<&str, Vec<Timestamp>> = HashMap::new();
        for a in &world.alerts {
            alert_times.entry(a.customer_id.as_str()).or_default().push(a.alert_time);
        }
        for v in alert_times.values_mut() {
            v.sort_unstable();
        }
        Self {
            world,
            tx_by_id: world.transactions.iter().map(|t| (t.id.as_str(), t)).collect(),
            accounts: world.accounts.iter().map(|a| (a.id.as_str(), a)).collect(),
            account_of_customer: world.accounts.iter().map(|a| (a.customer_id.as_str(), a)).collect(),
            customers: world.customers.iter().map(|c| (c.customer_id.as_str(), c)).collect(),
            alert_times,
            alerts: world.alerts.iter().map(|a| (a.id.as_str(), a)).collect(),
        }
    }

    pub fn alert(&self, id: &str) -> Option<&'w Alert> {
        self.alerts.get(id).copied()
    }

    pub fn transaction(&self, id: &str) -> Option<&'w Transaction> {
        self.tx_by_id.get(id).copied()
    }

    pub fn account(&self, id: &str) -> Option<&'w Account> {
        self.accounts.get(id).copied()
    }

    pub fn account_of(&self, customer_id: &str) -> Option<&'w Account> {
        self.account_of_customer.get(customer_id).copied()
    }

    /// Alerts for the customer strictly before `t`.
    pub fn prior_alert_count(&self, customer_id: &str, t: Timestamp) -> u32 {
        self.alert_times
            .get(customer_id)
            .map(|v| v.partition_point(|x| *x < t) as u32)
            .unwrap_or(0)
    }

    pub fn context(&self, alert_id: &str) -> Option<AlertContext> {
        let alert = self.alert(alert_id)?;
        let transactions: Vec<Transaction> = alert
            .transaction_ids
            .iter()
            .map(|id| self.transaction(id).cloned())
            .collect::<Option<_>>()?;
        let customer = self.customers.get(alert.customer_id.as_str())?;
        let account = self.account_of(&alert.customer_id)?;
        let mut counterparty_risk = BTreeMap::new();
        for tx in &transactions {
            for acct in [&tx.src_account, &tx.dst_account] {
                if acct != &account.id {
                    if let Some(a) = self.account(acct) {
                        counterparty_risk.insert(acct.clone(), a.risk_tier);
                    }
                }
            }
        }
        let mut ctx = AlertContext {
            alert: alert.clone(),
            transactions,
            customer: CustomerProfile {
                customer_id: customer.customer_id.clone(),
                customer_type: customer.customer_type,
                industry_code: customer.industry_code.clone(),
                risk_rating: customer.risk_rating,
                onboarding_time: customer.onboarding_time,
                prior_alert_count: self.prior_alert_count(&alert.customer_id, alert.alert_time),
            },
            account_id: account.id.clone(),
            indicators: BTreeMap::new(),
            counterparty_risk,
            params: self.world.config.params(),
        };
        ctx.refresh_indicators();
        Some(ctx)
    }
}

impl World {
    pub fn index(&self) -> WorldIndex<'_> {
        WorldIndex::new(self)
    }

    /// Every account and customer identifier: the closed entity universe.
    pub fn entity_lexicon(&self) -> BTreeSet<String> {
        self.accounts
            .iter()
            .flat_map(|a| [a.id.clone(), a.customer_id.clone()])
            .collect()
    }
}
