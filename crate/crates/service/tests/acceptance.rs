//! Acceptance checks. Each test prints one `PASS`/`FAIL` line naming the
//! property it checks, with the measured values and the pinned tolerances.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;
use triage_core::canonical::to_canonical_bytes;
use triage_core::counterfactual::{
    apply_bundle_edit, apply_edit, find_counterfactuals, stability_probe, validate_counterfactual, CfConfig, CfEnv,
    CounterfactualEdit, EditAtom, ProposalScope, StabilityConfig,
};
use triage_core::eval::{
    par_map, pr_auc, provenance_metrics, run_experiment, safety_metrics, workload_at_recall, EvalData, ExperimentConfig, MetricsReport, Variant,
};
use triage_core::evidence::{retrieve, EvidenceIndex, RetrievalQuery};
use triage_core::generate::{FaultRates, Generator, GeneratorConfig, TriageGenerator};
use triage_core::pipeline::{run_pipeline, OutcomeStatus, PipelineConfig, PipelineEnv, PipelineMode};
use triage_core::simgen::{build_case_memory, generate_world, time_split, WorldConfig};
use triage_core::validator::ValidatorTable;
use triage_core::verify::{verify_repair_loop, FinalStatus, ViolationCode};
use triage_core::{AclTag, AlertContext, AlertType, Disposition, EvidenceBundle, Indicator, RiskTier, SourceType};
use triage_service::audit::{read_events, verify_chain_bytes};
use triage_service::state::replay;
use triage_service::ServiceConfig;

/// Runs one acceptance check and writes its verdict straight to stderr so
/// it shows even when the harness captures test output.
fn criterion(name: &str, body: impl FnOnce() -> String) {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(body));
    let secs = start.elapsed().as_secs_f64();
    let line = match &result {
        Ok(detail) => format!("\nPASS {name} [{secs:.1}s] {detail}\n"),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            format!("\nFAIL {name} [{secs:.1}s] {}\n", msg.lines().next().unwrap_or(""))
        }
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = result {
        panic::resume_unwind(e);
    }
}

fn within(start: Instant, limit: Duration, what: &str) {
    let t = start.elapsed();
    assert!(t < limit, "{what} took {t:?}, limit {limit:?}");
}

fn world_1000() -> WorldConfig {
    WorldConfig {
        n_accounts: 250,
        typology_counts: AlertType::ALL.into_iter().map(|t| (t, 25)).collect(),
        ..Default::default()
    }
}

fn eval_data(config: &WorldConfig, split: (f64, f64, f64)) -> EvalData {
    let world = generate_world(config).unwrap();
    let split = time_split(&world.alerts, split).unwrap();
    EvalData::new(world, split).unwrap()
}

fn all_contexts(data: &EvalData) -> Vec<AlertContext> {
    let ids: Vec<String> = data.world.alerts.iter().map(|a| a.id.clone()).collect();
    data.contexts(&ids)
}

fn bundle(data: &EvalData, ctx: &AlertContext) -> EvidenceBundle {
    retrieve(&data.index, &PipelineConfig::default().query(ctx))
}

// ---------------------------------------------------------------- metrics

/// Average precision written as its definition: the mean over positives of
/// precision at the positive's rank, with ties broken by input position.
fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, i) in order.iter().enumerate() {
        if labels[*i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / hits as f64
}

/// Sweeps every distinct score as a threshold and keeps the highest one
/// reaching the recall target; workload is the share flagged at it.
fn workload_oracle(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let n_pos = labels.iter().filter(|l| **l).count();
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= t).count();
        if tp as f64 / n_pos as f64 >= target - 1e-12 {
            return scores.iter().filter(|s| **s >= t).count() as f64 / scores.len() as f64;
        }
    }
    unreachable!("the lowest score reaches full recall")
}

#[test]
fn metric_oracle_equivalence() {
    const INSTANCES: usize = 1000;
    const MAX_SIZE: usize = 20;
    const LIMIT: Duration = Duration::from_secs(10);
    criterion("metric oracle equivalence", || {
        let start = Instant::now();
        let mut rng = StdRng::seed_from_u64(2024);
        let mut ties = 0;
        for _ in 0..INSTANCES {
            let n = rng.random_range(1..=MAX_SIZE);
            let levels = rng.random_range(2..=12u32);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.35)).collect();
            labels[rng.random_range(0..n)] = true;
            ties += usize::from(scores.iter().map(|s| s.to_bits()).collect::<BTreeSet<_>>().len() < n);
            assert_eq!(pr_auc(&scores, &labels).unwrap(), ap_oracle(&scores, &labels), "{scores:?} {labels:?}");
            for target in [0.5, 0.8, 0.9, 0.95, 1.0] {
                let got = workload_at_recall(&scores, &labels, target).unwrap();
                assert_eq!(got, workload_oracle(&scores, &labels, target), "{scores:?} {labels:?} @{target}");
            }
        }
        within(start, LIMIT, "oracle comparison");
        format!("{INSTANCES} instances of size <= {MAX_SIZE} ({ties} with ties) match exactly; limit {LIMIT:?}")
    });
}

// ------------------------------------------------------- fault calibration

#[test]
fn fault_injection_calibration() {
    const P: f64 = 0.2;
    const N: usize = 500;
    const SIGMAS: f64 = 3.0;
    const LIMIT: Duration = Duration::from_secs(60);
    criterion("fault-injection calibration", || {
        let start = Instant::now();
        let data = eval_data(&WorldConfig::default(), (0.7, 0.1, 0.2));
        let mut ids: Vec<String> = data.split.test_alert_ids.clone();
        ids.extend(data.split.val_alert_ids.iter().cloned());
        ids.extend(data.split.train_alert_ids.iter().cloned());
        ids.truncate(N);
        let contexts = data.contexts(&ids);
        let bundles: Vec<EvidenceBundle> = contexts.iter().map(|c| bundle(&data, c)).collect();
        let verifier = data.verifier();
        let mut lines = vec![];
        for (name, rates) in [
            ("1-citation_validity", FaultRates { p_fabricated_citation: P, ..Default::default() }),
            ("numerical_inconsistency_rate", FaultRates { p_numeric_error: P, ..Default::default() }),
            ("policy_hallucination_rate", FaultRates { p_policy_hallucination: P, ..Default::default() }),
            ("unsupported_assertion_rate", FaultRates { p_unsupported_entity: P, ..Default::default() }),
        ] {
            let gen = Generator::new(GeneratorConfig::faulty(rates, 99), data.gen_env()).unwrap();
            let records: Vec<_> = contexts.iter().zip(&bundles).map(|(c, b)| gen.generate(c, b, &[]).unwrap()).collect();
            let reports: Vec<_> = records.iter().zip(&bundles).map(|(r, b)| verifier.verify(r, b)).collect();
            let (measured, n) = if rates.p_fabricated_citation > 0.0 {
                let items: Vec<_> = records.iter().zip(&bundles).zip(&reports).map(|((r, b), v)| (r, b, v)).collect();
                let cv = provenance_metrics(&items).citation_validity.unwrap();
                (1.0 - cv, records.iter().map(|r| r.citations().count()).sum::<usize>())
            } else {
                let s = safety_metrics(&reports.iter().collect::<Vec<_>>(), &[]);
                let v = match name {
                    "numerical_inconsistency_rate" => s.numerical_inconsistency_rate,
                    "policy_hallucination_rate" => s.policy_hallucination_rate,
                    _ => s.unsupported_assertion_rate,
                };
                (v.unwrap(), reports.len())
            };
            let se = (P * (1.0 - P) / n as f64).sqrt();
            let z = (measured - P) / se;
            lines.push(format!("{name}={measured:.4} (n={n}, z={z:+.2})"));
            assert!(z.abs() <= SIGMAS, "{name} = {measured:.4}, {z:+.2} standard errors from {P} with n = {n}");
        }
        within(start, LIMIT, "calibration");
        format!("{}; tolerance {SIGMAS} SE around p={P}, {N} alerts; limit {LIMIT:?}", lines.join(", "))
    });
}

// ----------------------------------------------------------------- verifier

#[test]
fn verifier_soundness_and_completeness() {
    criterion("verifier soundness and completeness", || {
        let data = eval_data(&world_1000(), (0.7, 0.1, 0.2));
        let contexts = all_contexts(&data);
        assert_eq!(contexts.len(), 1000);
        let bundles: Vec<EvidenceBundle> = contexts.iter().map(|c| bundle(&data, c)).collect();
        let verifier = data.verifier();
        let env = data.gen_env();
        let reference = Generator::new(GeneratorConfig::reference(), env.clone()).unwrap();
        let pairs: Vec<(&AlertContext, &EvidenceBundle)> = contexts.iter().zip(&bundles).collect();
        let failures: Vec<String> = par_map(&pairs, 0, |(c, b)| {
            let rep = verifier.verify(&reference.generate(c, b, &[]).unwrap(), b);
            (!rep.passed).then(|| format!("{}: {:?}", c.alert.id, rep.codes()))
        })
        .into_iter()
        .flatten()
        .collect();
        assert!(failures.is_empty(), "reference records failing: {failures:?}");

        let numeric = [ViolationCode::NumericMismatch, ViolationCode::TemporalMismatch, ViolationCode::ThresholdMismatch];
        let cases: [(&str, FaultRates, &[ViolationCode]); 4] = [
            ("fabricated citation", FaultRates { p_fabricated_citation: 1.0, ..Default::default() }, &[ViolationCode::FabricatedCitation]),
            ("numeric error", FaultRates { p_numeric_error: 1.0, ..Default::default() }, &numeric),
            ("policy hallucination", FaultRates { p_policy_hallucination: 1.0, ..Default::default() }, &[ViolationCode::PolicyHallucination]),
            ("unsupported entity", FaultRates { p_unsupported_entity: 1.0, ..Default::default() }, &[ViolationCode::UnsupportedAssertion]),
        ];
        for (name, rates, codes) in cases {
            let gen = Generator::new(GeneratorConfig::faulty(rates, 5), env.clone()).unwrap();
            let missed: Vec<String> = par_map(&pairs, 0, |(c, b)| {
                let rep = verifier.verify(&gen.generate(c, b, &[]).unwrap(), b);
                (!codes.iter().any(|k| rep.has(*k))).then(|| c.alert.id.clone())
            })
            .into_iter()
            .flatten()
            .collect();
            assert!(missed.is_empty(), "{name} at rate 1 undetected on {} records: {missed:?}", missed.len());
        }
        "reference records pass on 1000/1000 alerts; each fault at rate 1.0 detected on 1000/1000".to_string()
    });
}

// ---------------------------------------------------------- retrieval safety

#[test]
fn retrieval_safety() {
    const MIN_BUNDLES: usize = 10_000;
    criterion("retrieval safety", || {
        let mut built = 0usize;
        let mut seen = BTreeMap::<&str, usize>::new();
        let clearances = [AclTag::Public, AclTag::Restricted, AclTag::Confidential];
        let mut sweep = 0u64;
        let mut versioned = 0usize;
        while built < MIN_BUNDLES {
            let mut rng = StdRng::seed_from_u64(sweep);
            let world = generate_world(&small_world(100 + sweep % 4)).unwrap();
            let split = time_split(&world.alerts, (0.6, 0.2, 0.2)).unwrap();
            let mut corpus = world.evidence_corpus.clone();
            corpus.extend(build_case_memory(&split, &world));
            // re-tag a random share of the corpus and drop some items
            for item in corpus.iter_mut() {
                if rng.random_bool(0.3) {
                    item.acl_tag = clearances[rng.random_range(0..3)];
                }
            }
            let dropped: BTreeSet<String> = corpus
                .iter()
                .filter(|e| e.source_type != SourceType::Trigger && e.supersedes.is_none() && rng.random_bool(0.1))
                .map(|e| e.id.clone())
                .collect();
            corpus.retain(|e| !dropped.contains(&e.id) && e.supersedes.as_ref().is_none_or(|s| !dropped.contains(s)));
            let index = EvidenceIndex::build(corpus.clone()).unwrap();
            let train: BTreeSet<&str> = split.train_alert_ids.iter().map(String::as_str).collect();
            let successors: HashMap<&str, Vec<i64>> = corpus.iter().fold(HashMap::new(), |mut m, e| {
                if let Some(s) = &e.supersedes {
                    m.entry(s.as_str()).or_default().push(e.effective_time);
                }
                m
            });
            versioned += successors.len();
            let widx = world.index();
            let contexts: Vec<AlertContext> = split.test_alert_ids.iter().map(|id| widx.context(id).unwrap()).collect();
            let queries: Vec<RetrievalQuery> = (0..contexts.len() * 20)
                .map(|i| {
                    let ctx = &contexts[i % contexts.len()];
                    let mut q = RetrievalQuery::from_context(ctx, clearances[rng.random_range(0..3)]);
                    q.k_total = rng.random_range(1..=16);
                    for v in q.quota.values_mut() {
                        *v = rng.random_range(0..=4);
                    }
                    q
                })
                .collect();
            let bundles = par_map(&queries, 0, |q| retrieve(&index, q));
            for (q, b) in queries.iter().zip(&bundles) {
                let t = q.hard_filters.alert_time;
                for e in &b.items {
                    assert!(e.acl_tag <= q.hard_filters.acl_clearance, "ACL violation: {} in {}", e.id, q.alert_id);
                    assert!(e.effective_time <= t, "future-dated: {} in {}", e.id, q.alert_id);
                    let superseded = successors.get(e.id.as_str()).is_some_and(|ts| ts.iter().any(|s| *s <= t));
                    assert!(!superseded, "superseded: {} in {}", e.id, q.alert_id);
                    if e.source_type == SourceType::Case {
                        let from = e.scope.alert_id.as_deref().unwrap_or("");
                        assert!(train.contains(from), "case {} derived from held-out alert {from} in {}", e.id, q.alert_id);
                    }
                    *seen.entry(e.source_type.as_str()).or_default() += 1;
                }
            }
            built += bundles.len();
            sweep += 1;
        }
        assert!(seen.get("case").copied().unwrap_or(0) > 0 && seen.get("policy").copied().unwrap_or(0) > 0);
        assert!(versioned > 0, "no superseded items to exclude");
        format!("{built} bundles over {sweep} corpus sweeps ({versioned} superseded versions), items by type {seen:?}; zero violations")
    });
}

// ------------------------------------------------------------ counterfactuals

struct CfWorld {
    data: EvalData,
    gen: Generator,
    verifier: triage_core::verify::Verifier,
}

fn cf_world(config: &WorldConfig) -> CfWorld {
    let data = eval_data(config, (0.6, 0.2, 0.2));
    let gen = Generator::new(GeneratorConfig::reference(), data.gen_env()).unwrap();
    let verifier = data.verifier();
    CfWorld { data, gen, verifier }
}

const TYPOLOGY_INDICATORS: [Indicator; 4] =
    [Indicator::StructuringPattern, Indicator::RapidMovement, Indicator::HighRiskCounterparty, Indicator::FanIn];

/// Every single atom the edit vocabulary can express for this alert.
fn all_single_atoms(ctx: &AlertContext, b: &EvidenceBundle) -> Vec<EditAtom> {
    let mut atoms: Vec<EditAtom> = Indicator::ALL.into_iter().map(|indicator| EditAtom::ToggleIndicator { indicator }).collect();
    atoms.extend(b.items.iter().map(|e| EditAtom::RemoveEvidence { evidence_id: e.id.clone() }));
    for a in ctx.counterparty_risk.keys() {
        atoms.extend(RiskTier::ALL.map(|tier| EditAtom::SetCounterpartyRisk { account: a.clone(), tier }));
    }
    atoms.extend(ctx.transactions.iter().map(|t| EditAtom::RemoveTransactionLink { tx_id: t.id.clone() }));
    atoms
}

#[test]
fn counterfactual_correctness() {
    criterion("counterfactual correctness", || {
        let w = cf_world(&WorldConfig::default());
        let cf = CfConfig::default();
        let env = CfEnv { generator: &w.gen, verifier: &w.verifier, corpus: Some(&w.data.index), config: &cf };
        let table = ValidatorTable::default();
        let contexts = all_contexts(&w.data);

        // single-typology escalations always yield an accepted edit
        let single: Vec<&AlertContext> = contexts
            .iter()
            .filter(|c| {
                let typ = c.active_indicators().into_iter().filter(|i| TYPOLOGY_INDICATORS.contains(i)).count();
                typ == 1 && table.score(c).1 == Disposition::Escalate
            })
            .collect();
        assert!(!single.is_empty());
        let empty: Vec<String> = par_map(&single, 0, |c| {
            let b = bundle(&w.data, c);
            let rec = w.gen.generate(c, &b, &[]).unwrap();
            find_counterfactuals(&rec, c, &b, &env).unwrap().accepted.is_empty().then(|| c.alert.id.clone())
        })
        .into_iter()
        .flatten()
        .collect();
        assert!(empty.is_empty(), "no accepted counterfactual for {empty:?}");

        // single-atom search against direct enumeration on small alerts
        let exhaustive = CfConfig {
            budget: 1,
            max_proposals: usize::MAX,
            max_accepted: usize::MAX,
            scope: ProposalScope::Exhaustive,
            ..CfConfig::default()
        };
        let xenv = CfEnv { config: &exhaustive, ..env };
        let small: Vec<&AlertContext> = contexts.iter().filter(|c| c.active_indicators().len() <= 3).step_by(4).collect();
        let mismatches: Vec<String> = par_map(&small, 0, |ctx| {
            let mut q = RetrievalQuery::from_context(ctx, AclTag::Restricted);
            q.k_total = 6;
            let b = retrieve(&w.data.index, &q);
            assert!(b.items.len() <= 6);
            let rec = w.gen.generate(ctx, &b, &[]).unwrap();
            let found: BTreeSet<CounterfactualEdit> =
                find_counterfactuals(&rec, ctx, &b, &xenv).unwrap().accepted.into_iter().map(|v| v.edit).collect();
            let mut oracle = BTreeSet::new();
            for a in all_single_atoms(ctx, &b) {
                let edit = CounterfactualEdit::single(a);
                let (Ok(edited), Ok(eb)) = (apply_edit(ctx, &edit), apply_bundle_edit(&b, &edit, Some(&w.data.index))) else {
                    continue;
                };
                let (pre, pre_d) = table.score(ctx);
                let (post, post_d) = table.score(&edited);
                let flip = pre_d != post_d || (post - pre).abs() >= cf.tau_flip - 1e-12;
                let r = w.gen.generate(&edited, &eb, &[]).unwrap();
                let removed: Vec<&str> = edit.removed_evidence().collect();
                let aligned = r.citations().all(|c| !removed.contains(&c))
                    && Indicator::ALL.iter().all(|i| {
                        edited.is_active(*i) || r.paragraphs.iter().all(|p| !p.text.to_lowercase().contains(i.phrase()))
                    })
                    && w.verifier.verify(&r, &eb).passed;
                if flip && aligned {
                    oracle.insert(edit);
                }
            }
            (found != oracle).then(|| format!("{}: search {} vs enumeration {}", ctx.alert.id, found.len(), oracle.len()))
        })
        .into_iter()
        .flatten()
        .collect();
        assert!(mismatches.is_empty(), "{mismatches:?}");

        // minimality at the full budget
        let wide = CfConfig { max_accepted: 8, max_proposals: 24, ..CfConfig::default() };
        let wenv = CfEnv { config: &wide, ..env };
        let sample: Vec<&AlertContext> = contexts.iter().step_by(5).collect();
        let counts: Vec<(usize, usize)> = par_map(&sample, 0, |ctx| {
            let b = bundle(&w.data, ctx);
            let rec = w.gen.generate(ctx, &b, &[]).unwrap();
            let mut multi = 0;
            let accepted = find_counterfactuals(&rec, ctx, &b, &wenv).unwrap().accepted;
            for v in &accepted {
                assert!(v.accepted && v.flip_valid && v.rationale_aligned);
                let n = v.edit.cost();
                assert!((1..=3).contains(&n));
                multi += usize::from(n > 1);
                for mask in 1..(1u32 << n) - 1 {
                    let sub = CounterfactualEdit::new((0..n).filter(|i| mask & (1 << i) != 0).map(|i| v.edit.atoms[i].clone()).collect());
                    let ok = validate_counterfactual(&sub, ctx, &b, &wenv).map(|s| s.accepted).unwrap_or(false);
                    assert!(!ok, "{}: {} has accepted subset {}", ctx.alert.id, v.edit, sub);
                }
            }
            (accepted.len(), multi)
        });
        let accepted: usize = counts.iter().map(|c| c.0).sum();
        let multi: usize = counts.iter().map(|c| c.1).sum();
        assert!(accepted > 0);
        format!(
            "{} single-typology escalations all flipped; {} small alerts match enumeration; {accepted} accepted edits ({multi} multi-atom) minimal",
            single.len(),
            small.len()
        )
    });
}

#[test]
fn permutation_stability_floor() {
    criterion("permutation-only stability floor", || {
        let w = cf_world(&world_1000());
        let table = ValidatorTable::default();
        let config = StabilityConfig::permutation_only(5, 11);
        let contexts = all_contexts(&w.data);
        let results = par_map(&contexts, 0, |c| stability_probe(c, &bundle(&w.data, c), &w.gen, &table, &config).unwrap());
        let generated: usize = results.iter().map(|r| r.generated).sum();
        let stable: usize = results.iter().map(|r| r.stable).sum();
        assert_eq!(stable, generated);
        assert!(results.iter().all(|r| r.fraction() == 1.0));

        let exp = ExperimentConfig { stability: config, ..Default::default() };
        let run = run_experiment(&w.data, Variant::Full, &exp).unwrap();
        assert_eq!(run.report.cf_stability, Some(1.0));
        format!("{stable}/{generated} probes over {} alerts stable; full-variant cf_stability = 1.0", contexts.len())
    });
}

// ------------------------------------------------------------------ table 1

#[test]
fn table1_ordering() {
    const LIMIT: Duration = Duration::from_secs(300);
    const RECALL_MARGIN: f64 = 0.2;
    criterion("table-1 ordering", || {
        let start = Instant::now();
        let data = eval_data(&WorldConfig::default(), (0.7, 0.1, 0.2));
        assert_eq!(data.world.alerts.len(), 2000);
        let pipeline = PipelineConfig {
            generator: GeneratorConfig { heed_feedback: 0.5, ..GeneratorConfig::faulty(FaultRates::uniform(0.2), 17) },
            ..Default::default()
        };
        let exp = ExperimentConfig { pipeline, ..Default::default() };
        let r: BTreeMap<&str, MetricsReport> =
            Variant::ALL.into_iter().map(|v| (v.as_str(), run_experiment(&data, v, &exp).unwrap().report)).collect();
        let get = |v: &str, f: fn(&MetricsReport) -> Option<f64>| f(&r[v]).unwrap_or_else(|| panic!("{v} lacks a metric"));
        let cv = |v| get(v, |m| m.citation_validity);
        let num = |v| get(v, |m| m.numerical_inconsistency_rate);
        let pol = |v| get(v, |m| m.policy_hallucination_rate);
        let auc = |v| get(v, |m| m.pr_auc);
        assert!(cv("llm_only") < cv("rag_only") && cv("rag_only") <= cv("full"), "citation validity {} {} {}", cv("llm_only"), cv("rag_only"), cv("full"));
        assert!(num("llm_only") > num("rag_only") && num("rag_only") > num("full"), "numeric {} {} {}", num("llm_only"), num("rag_only"), num("full"));
        assert!(pol("llm_only") > pol("rag_only") && pol("rag_only") > pol("full"), "policy {} {} {}", pol("llm_only"), pol("rag_only"), pol("full"));
        assert!(auc("rule_baseline") < auc("linear_baseline"));
        let (p, rc) = (get("rule_baseline", |m| m.escalate_precision), get("rule_baseline", |m| m.escalate_recall));
        assert!(rc - p >= RECALL_MARGIN, "rule baseline recall {rc} precision {p}");
        within(start, LIMIT, "table 1");
        format!(
            "citation validity {:.4} < {:.4} <= {:.4}; numeric {:.4} > {:.4} > {:.4}; policy {:.4} > {:.4} > {:.4}; \
             pr_auc {:.4} < {:.4}; rule recall {rc:.4} - precision {p:.4} >= {RECALL_MARGIN}; limit {LIMIT:?}",
            cv("llm_only"), cv("rag_only"), cv("full"),
            num("llm_only"), num("rag_only"), num("full"),
            pol("llm_only"), pol("rag_only"), pol("full"),
            auc("rule_baseline"), auc("linear_baseline"),
        )
    });
}

// --------------------------------------------------------------- determinism

fn cli_run(root: &std::path::Path) -> (Vec<u8>, BTreeMap<String, Vec<u8>>, std::path::PathBuf) {
    let config = ServiceConfig { data_dir: root.join("data"), ..small_config(11) };
    let path = write_config(root, &config);
    for args in [&["gen"][..], &["index"], &["triage", "--all", "--variant", "full"], &["eval", "--variant", "all"]] {
        cli(&path, args);
    }
    let records = std::fs::read(config.data_dir.join("records/records.full.jsonl")).unwrap();
    let reports = std::fs::read_dir(config.data_dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    (records, reports, config.data_dir)
}

#[test]
fn determinism_and_audit_replay() {
    criterion("determinism and audit replay", || {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (records_a, reports_a, data_a) = cli_run(a.path());
        let (records_b, reports_b, _) = cli_run(b.path());
        assert!(!records_a.is_empty());
        assert_eq!(records_a, records_b, "final records differ between runs");
        assert!(reports_a.len() >= Variant::ALL.len());
        assert_eq!(reports_a, reports_b, "metric reports differ between runs");

        let events = read_events(&data_a.join("audit.jsonl")).unwrap();
        let replayed = replay(&events).unwrap();
        let lines: Vec<&[u8]> = records_a.split(|c| *c == b'\n').filter(|l| !l.is_empty()).collect();
        for line in &lines {
            let id = serde_json::from_slice::<serde_json::Value>(line).unwrap()["alert_id"].as_str().unwrap().to_string();
            let rec = &replayed[&id].latest.as_ref().unwrap().outcome.as_ref().expect("replayed outcome").final_record;
            assert_eq!(to_canonical_bytes(rec).unwrap(), *line, "replayed record for {id}");
        }

        // one alert's log, every byte flipped
        let (_d, config) = prepared(small_config(11));
        let s = open(&config);
        let id = structuring_escalation(&s);
        s.triage_alert(&id, "ana", AclTag::Restricted, &json!({})).unwrap();
        s.set_disposition(&id, Some("ana"), Disposition::Monitor, "needs documents", None).unwrap();
        let log = std::fs::read(s.audit().path()).unwrap();
        assert!(verify_chain_bytes(&log).ok);
        let positions: Vec<usize> = (0..log.len()).collect();
        let missed: Vec<(usize, u8)> = par_map(&positions, 0, |&i| {
            let mut bad = vec![];
            let mut copy = log.clone();
            for mask in [0x01u8, 0x20, 0x80, 0xff] {
                copy[i] ^= mask;
                if verify_chain_bytes(&copy).ok {
                    bad.push((i, mask));
                }
                copy[i] ^= mask;
            }
            bad
        })
        .into_iter()
        .flatten()
        .collect();
        assert!(missed.is_empty(), "undetected flips: {:?}", &missed[..missed.len().min(5)]);
        format!(
            "{} records and {} reports byte-identical across runs; replay matches {} records from {} events; {} byte flips detected",
            lines.len(),
            reports_a.len(),
            lines.len(),
            events.len(),
            log.len() * 4
        )
    });
}

// ---------------------------------------------------------------- repair loop

#[test]
fn repair_loop_efficacy() {
    const MAX_ITERS: usize = 2;
    criterion("repair-loop efficacy", || {
        let data = eval_data(&world_1000(), (0.7, 0.1, 0.2));
        let contexts = all_contexts(&data);
        let verifier = data.verifier();
        let faults = FaultRates::uniform(0.3);
        let heed = Generator::new(GeneratorConfig { heed_feedback: 1.0, ..GeneratorConfig::faulty(faults, 23) }, data.gen_env()).unwrap();
        let deaf = Generator::new(GeneratorConfig { heed_feedback: 0.0, ..GeneratorConfig::faulty(faults, 23) }, data.gen_env()).unwrap();

        let traces = par_map(&contexts, 0, |c| {
            let b = bundle(&data, c);
            (verify_repair_loop(&heed, &verifier, c, &b, MAX_ITERS).unwrap(), verify_repair_loop(&deaf, &verifier, c, &b, MAX_ITERS).unwrap())
        });
        let mut failing = 0;
        for (c, (h, d)) in contexts.iter().zip(&traces) {
            assert_eq!(h.attempts[0].report.passed, d.attempts[0].report.passed, "same first draft");
            if h.attempts[0].report.passed {
                continue;
            }
            failing += 1;
            assert_eq!((h.final_status, h.iterations), (FinalStatus::Verified, 1), "heeding generator on {}", c.alert.id);
            assert_eq!((d.final_status, d.iterations), (FinalStatus::EscalateToHuman, MAX_ITERS), "deaf generator on {}", c.alert.id);
            assert!(!d.final_report().passed);
        }
        assert!(failing >= 100, "only {failing} initially failing records");

        // the same through the pipeline
        let config = PipelineConfig { mode: PipelineMode::RagOnly, max_iters: MAX_ITERS, ..Default::default() };
        let statuses = par_map(&contexts, 0, |c| {
            let run = |g: &dyn TriageGenerator| {
                let env = PipelineEnv { index: &data.index, generator: g, verifier: &verifier };
                run_pipeline(c, &env, &config, &mut |_| {}).unwrap()
            };
            let (h, d) = (run(&heed), run(&deaf));
            let first_failed = !h.trace.as_ref().unwrap().attempts[0].report.passed;
            (first_failed, h.status, d.status, d.trace.unwrap().iterations)
        });
        for (first_failed, h, d, iters) in statuses.into_iter().filter(|s| s.0) {
            assert!(first_failed);
            assert_eq!(h, OutcomeStatus::Verified);
            assert_eq!((d, iters), (OutcomeStatus::EscalateToHuman, MAX_ITERS));
        }
        format!("{failing}/{} records failed first; all verified after 1 repair when heeding, all escalated after exactly {MAX_ITERS} repairs when not", contexts.len())
    });
}
