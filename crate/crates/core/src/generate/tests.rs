use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::model::{AclTag, Disposition, Indicator, SourceType};
use crate::schema::validate;
use crate::testutil::Fixture;

fn seq(id: &str) -> &str {
    id.rsplit('-').next().unwrap()
}

fn env(f: &Fixture) -> Arc<GenEnv> {
    Arc::new(GenEnv { lexicon: f.lexicon.clone(), policies: f.policies() })
}

fn by_hand(ctx: &AlertContext) -> Disposition {
    let w = |i: Indicator| match i {
        Indicator::StructuringPattern => 0.45,
        Indicator::RapidMovement => 0.40,
        Indicator::HighRiskCounterparty => 0.30,
        Indicator::FanIn => 0.35,
        Indicator::PriorAlerts => 0.10,
    };
    let s: f64 = ctx.active_indicators().into_iter().map(w).sum::<f64>().min(1.0);
    if s >= 0.55 - 1e-9 {
        Disposition::Escalate
    } else if s >= 0.30 - 1e-9 {
        Disposition::Monitor
    } else {
        Disposition::Dismiss
    }
}

#[test]
fn reference_records_agree_with_the_table_and_pass_schema() {
    let f = Fixture::small(11);
    let gen = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap();
    for ctx in f.contexts() {
        let bundle = f.bundle(&ctx, AclTag::Restricted);
        let rec = gen.generate(&ctx, &bundle, &[]).unwrap();
        assert_eq!(rec.disposition, by_hand(&ctx), "{}", ctx.alert.id);
        assert!(validate(&rec).is_empty(), "{}: {:?}", ctx.alert.id, validate(&rec));
        assert!(rec.cited_ids().iter().all(|id| bundle.contains(id)));
        assert_eq!(rec.paragraphs.len(), ctx.active_indicators().len().max(1));
    }
}

#[test]
fn structuring_escalation_cites_its_policy() {
    let f = Fixture::small(11);
    let gen = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap();
    let ctx = f
        .contexts()
        .into_iter()
        .find(|c| c.is_active(Indicator::StructuringPattern) && c.is_active(Indicator::PriorAlerts))
        .expect("structuring alert with prior alerts");
    let rec = gen.generate(&ctx, &f.bundle(&ctx, AclTag::Restricted), &[]).unwrap();
    assert_eq!(rec.disposition, Disposition::Escalate);
    assert!(rec.paragraphs.iter().any(|p| p.citations.iter().any(|c| c == "ev-policy-structuring")));
    assert!(rec.unknowns.is_empty(), "{:?}", rec.unknowns);
    assert!(rec.paragraphs[0].text.contains("reporting threshold"));
}

#[test]
fn missing_kyc_is_an_unknown() {
    let f = Fixture::small(11);
    let gen = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap();
    let ctx = f.contexts().into_iter().next().unwrap();
    let bundle = f.bundle(&ctx, AclTag::Public);
    assert!(!bundle.has_type(SourceType::Kyc));
    let rec = gen.generate(&ctx, &bundle, &[]).unwrap();
    assert!(rec.unknowns.contains(&"missing evidence: kyc".to_string()));
    assert!(rec.next_actions.contains(&ACTION_MISSING.to_string()));
}

#[test]
fn fabricated_citation_at_rate_one() {
    let f = Fixture::small(11);
    let gen = Generator::new(GeneratorConfig::faulty(FaultRates { p_fabricated_citation: 1.0, ..Default::default() }, 5), env(&f)).unwrap();
    for ctx in f.contexts().into_iter().take(20) {
        let bundle = f.bundle(&ctx, AclTag::Restricted);
        let rec = gen.generate(&ctx, &bundle, &[]).unwrap();
        let foreign: BTreeSet<&str> = rec.citations().filter(|c| !bundle.contains(c)).collect();
        assert_eq!(foreign.len(), 1, "{}: {foreign:?}", ctx.alert.id);
        assert!(rec.citations().all(|c| !bundle.contains(c)));
    }
}

#[test]
fn each_fault_alters_the_record() {
    let f = Fixture::small(11);
    let clean = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap();
    let rates = [
        FaultRates { p_numeric_error: 1.0, ..Default::default() },
        FaultRates { p_policy_hallucination: 1.0, ..Default::default() },
        FaultRates { p_unsupported_entity: 1.0, ..Default::default() },
    ];
    for r in rates {
        let gen = Generator::new(GeneratorConfig::faulty(r, 3), env(&f)).unwrap();
        for ctx in f.contexts().into_iter().take(15) {
            let bundle = f.bundle(&ctx, AclTag::Restricted);
            let a = clean.generate(&ctx, &bundle, &[]).unwrap();
            let b = gen.generate(&ctx, &bundle, &[]).unwrap();
            assert_ne!(a.paragraphs, b.paragraphs, "{r:?} {}", ctx.alert.id);
            assert!(b.cited_ids().iter().all(|id| bundle.contains(id) || r.p_policy_hallucination > 0.0));
        }
    }
}

#[test]
fn policy_fault_sentence_shares_nothing_with_its_policy() {
    let f = Fixture::small(11);
    let gen = Generator::new(GeneratorConfig::faulty(FaultRates { p_policy_hallucination: 1.0, ..Default::default() }, 9), env(&f)).unwrap();
    for ctx in f.contexts().into_iter().take(20) {
        let rec = gen.generate(&ctx, &f.bundle(&ctx, AclTag::Confidential), &[]).unwrap();
        let p = rec.paragraphs.last().unwrap();
        let policy = f.index.get(&p.citations[0]).unwrap();
        assert!(crate::text::content_token_set(&p.text).is_disjoint(&crate::text::content_token_set(&policy.canonical_text)));
    }
}

#[test]
fn llm_only_cites_only_the_closed_book() {
    let f = Fixture::small(11);
    let cfg = GeneratorConfig { llm_only: true, ..GeneratorConfig::reference() };
    let gen = Generator::new(cfg, env(&f)).unwrap();
    let policies: Vec<String> = f.policies().into_iter().map(|p| p.id).collect();
    let mut kyc_unknowns = 0;
    for ctx in f.contexts() {
        let rec = gen.generate(&ctx, &f.bundle(&ctx, AclTag::Restricted), &[]).unwrap();
        assert_eq!(rec.disposition, by_hand(&ctx));
        assert_eq!(rec.generator_tag, "reference+llm_only");
        let own = [format!("ev-trigger-{}", seq(&ctx.alert.id)), format!("ev-transaction-{}", seq(&ctx.alert.id))];
        for c in rec.citations() {
            assert!(policies.iter().any(|p| p == c) || own.iter().any(|o| o == c), "{c}");
        }
        assert!(rec.citations().count() > 0);
        kyc_unknowns += usize::from(rec.unknowns.iter().any(|u| u == "missing evidence: kyc"));
    }
    assert_eq!(kyc_unknowns, f.contexts().len());
}

#[test]
fn generation_is_deterministic() {
    let f = Fixture::small(11);
    let cfg = GeneratorConfig::faulty(FaultRates::uniform(0.5), 42);
    let a = Generator::new(cfg.clone(), env(&f)).unwrap();
    let b = Generator::new(cfg, env(&f)).unwrap();
    for ctx in f.contexts().into_iter().take(30) {
        let bundle = f.bundle(&ctx, AclTag::Restricted);
        assert_eq!(a.generate(&ctx, &bundle, &[]).unwrap(), b.generate(&ctx, &bundle, &[]).unwrap());
    }
}

#[test]
fn heed_feedback_returns_the_clean_record() {
    let f = Fixture::small(11);
    let faults = FaultRates { p_fabricated_citation: 1.0, ..Default::default() };
    let heed = Generator::new(GeneratorConfig { heed_feedback: 1.0, ..GeneratorConfig::faulty(faults, 1) }, env(&f)).unwrap();
    let deaf = Generator::new(GeneratorConfig::faulty(faults, 1), env(&f)).unwrap();
    let clean = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap();
    let ctx = f.contexts().into_iter().next().unwrap();
    let bundle = f.bundle(&ctx, AclTag::Restricted);
    let fb = vec!["you referenced an evidence ID that is not present: ev-x".to_string()];
    assert_eq!(heed.generate(&ctx, &bundle, &fb).unwrap().paragraphs, clean.generate(&ctx, &bundle, &[]).unwrap().paragraphs);
    assert_eq!(deaf.generate(&ctx, &bundle, &fb).unwrap(), deaf.generate(&ctx, &bundle, &[]).unwrap());
}

#[test]
fn config_rejects_out_of_range_rates() {
    let cfg = GeneratorConfig::faulty(FaultRates { p_numeric_error: 1.5, ..Default::default() }, 0);
    assert!(matches!(cfg.check(), Err(GenerationError::Config(_))));
    let cfg = GeneratorConfig { mode: GeneratorMode::External, ..Default::default() };
    assert!(cfg.check().is_err());
}

#[test]
fn prompt_lists_each_bundle_item_once() {
    let f = Fixture::small(11);
    let ctx = f.contexts().into_iter().next().unwrap();
    let bundle = f.bundle(&ctx, AclTag::Restricted);
    let fb = vec!["you referenced an evidence ID that is not present".to_string()];
    let p = render_prompt(&ctx, &bundle, &fb).unwrap();
    let ids: Vec<&str> = p.entry_ids().collect();
    let mut expect: Vec<&str> = bundle.items.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids.len(), expect.len());
    expect.sort();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(sorted, expect);
    let order: Vec<SourceType> = p.evidence_blocks.iter().map(|b| b.source_type).collect();
    assert_eq!(order, SourceType::ALL.to_vec());
    for b in &p.evidence_blocks {
        assert!(b.entries.windows(2).all(|w| w[0].id < w[1].id));
    }
    assert_eq!(p.feedback, fb);
    let text = p.to_text();
    assert!(text.contains("FEEDBACK\nyou referenced an evidence ID that is not present\n"));
    for id in &ids {
        assert_eq!(text.matches(&format!("[{id}]")).count(), 1);
    }
    assert_eq!(p, render_prompt(&ctx, &bundle, &fb).unwrap());
}

#[test]
fn prompt_for_empty_bundle_keeps_the_contract() {
    let f = Fixture::small(11);
    let ctx = f.contexts().into_iter().next().unwrap();
    let empty = EvidenceBundle { alert_id: ctx.alert.id.clone(), items: vec![], quota: Default::default(), retrieval_trace: vec![] };
    let p = render_prompt(&ctx, &empty, &[]).unwrap();
    assert_eq!(p.entry_ids().count(), 0);
    assert_eq!(p.evidence_blocks.len(), 5);
    assert_eq!(p.instructions, OUTPUT_CONTRACT);
    let other = EvidenceBundle { alert_id: "al-999999".into(), ..empty };
    assert!(matches!(render_prompt(&ctx, &other, &[]), Err(GenerationError::BundleMismatch { .. })));
}

mod external {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;
    use std::thread;
    use std::time::Duration;

    fn serve(reply: String, delay: Duration, n: usize) -> AdapterConfig {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let address = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            for s in listener.incoming().take(n) {
                let mut s = s.unwrap();
                let mut line = String::new();
                BufReader::new(s.try_clone().unwrap()).read_line(&mut line).unwrap();
                thread::sleep(delay);
                let _ = s.write_all(reply.as_bytes());
                let _ = s.write_all(b"\n");
            }
        });
        AdapterConfig::new(Endpoint::Tcp { address })
    }

    fn external(adapter: AdapterConfig) -> GeneratorConfig {
        GeneratorConfig { mode: GeneratorMode::External, external: Some(adapter), ..Default::default() }
    }

    #[test]
    fn echo_stub_completes() {
        let f = Fixture::small(11);
        let ctx = f.contexts().into_iter().next().unwrap();
        let bundle = f.bundle(&ctx, AclTag::Restricted);
        let canned = Generator::new(GeneratorConfig::reference(), env(&f)).unwrap().generate(&ctx, &bundle, &[]).unwrap();
        let reply = crate::canonical::to_canonical_string(&canned).unwrap();
        let gen = Generator::new(external(serve(reply, Duration::ZERO, 1)), env(&f)).unwrap();
        let rec = gen.generate(&ctx, &bundle, &[]).unwrap();
        assert_eq!(rec.disposition, canned.disposition);
        assert_eq!(rec.paragraphs, canned.paragraphs);
    }

    #[test]
    fn malformed_reply_reports_offset() {
        let f = Fixture::small(11);
        let ctx = f.contexts().into_iter().next().unwrap();
        let gen = Generator::new(external(serve("{\"alert_id\": oops}".into(), Duration::ZERO, 1)), env(&f)).unwrap();
        match gen.generate(&ctx, &f.bundle(&ctx, AclTag::Restricted), &[]) {
            Err(e @ GenerationError::Parse { line: 1, column: 14, .. }) => assert!(!e.is_retryable()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violation_surfaces() {
        let f = Fixture::small(11);
        let ctx = f.contexts().into_iter().next().unwrap();
        let gen = Generator::new(external(serve("{\"alert_id\":\"x\"}".into(), Duration::ZERO, 1)), env(&f)).unwrap();
        assert!(matches!(gen.generate(&ctx, &f.bundle(&ctx, AclTag::Restricted), &[]), Err(GenerationError::Schema(_))));
    }

    #[test]
    fn slow_stub_times_out_retryably() {
        let f = Fixture::small(11);
        let ctx = f.contexts().into_iter().next().unwrap();
        let mut a = serve("{}".into(), Duration::from_millis(50), 2);
        a.timeout_ms = 10;
        a.max_attempts = 2;
        let gen = Generator::new(external(a), env(&f)).unwrap();
        match gen.generate(&ctx, &f.bundle(&ctx, AclTag::Restricted), &[]) {
            Err(e @ GenerationError::Adapter(AdapterError::Timeout { attempts: 2, .. })) => assert!(e.is_retryable()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
