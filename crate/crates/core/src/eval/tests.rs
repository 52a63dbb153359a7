use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::generate::{FaultRates, GeneratorConfig, TriageGenerator};
use crate::model::{AclTag, Disposition, EvidenceBundle, RationaleParagraph, TriageRecord};
use crate::pipeline::PipelineConfig;
use crate::testutil::Fixture;

/// Average precision by counting: each positive's rank is one plus the
/// number of items ahead of it, and its precision is the positives among
/// them plus itself over that rank.
pub(crate) fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut per_positive: Vec<(usize, usize)> = (0..scores.len())
        .filter(|i| labels[*i])
        .map(|i| {
            let rank = 1 + (0..scores.len()).filter(|j| ahead(i, *j)).count();
            let pos = 1 + (0..scores.len()).filter(|j| labels[*j] && ahead(i, *j)).count();
            (rank, pos)
        })
        .collect();
    per_positive.sort();
    let n = per_positive.len() as f64;
    per_positive.iter().map(|(rank, pos)| *pos as f64 / *rank as f64).sum::<f64>() / n
}

/// Tries every candidate threshold and keeps the largest meeting the target.
pub(crate) fn workload_oracle(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let n_pos = labels.iter().filter(|l| **l).count() as f64;
    let mut best: Option<f64> = None;
    for t in scores {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= *t).count() as f64;
        if tp / n_pos >= target - 1e-12 && best.is_none_or(|b| *t > b) {
            best = Some(*t);
        }
    }
    let t = best.expect("recall 1 is reachable at the minimum score");
    scores.iter().filter(|s| **s >= t).count() as f64 / scores.len() as f64
}

fn instance(rng: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(1..=20);
    // coarse scores so ties are common
    let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 8.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let k = rng.random_range(0..n);
    labels[k] = true;
    (scores, labels)
}

#[test]
fn pr_auc_examples() {
    assert_eq!(pr_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    assert_eq!(pr_auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.5);
    assert_eq!(pr_auc(&[0.5], &[false]), Err(MetricError::NoPositives));
    assert!(matches!(pr_auc(&[0.5], &[true, false]), Err(MetricError::Length { .. })));
    // ties resolve by index: the positive at index 1 ranks second
    assert_eq!(pr_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let scores: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
    assert_eq!(pr_auc(&scores, &labels).unwrap(), ap_oracle(&scores, &labels));
}

#[test]
fn workload_examples() {
    let (s, l) = ([0.9, 0.8, 0.2, 0.1], [true, true, false, false]);
    assert_eq!(workload_at_recall(&s, &l, 1.0).unwrap(), 0.5);
    assert_eq!(workload_oracle(&s, &l, 1.0), 0.5);
    let (s, l) = ([0.9, 0.3, 0.8, 0.1, 0.2], [true, false, true, false, false]);
    assert_eq!(workload_at_recall(&s, &l, 1.0).unwrap(), 2.0 / 5.0);
    assert!(workload_at_recall(&s, &l, 0.5).unwrap() < workload_at_recall(&s, &l, 1.0).unwrap());
    assert_eq!(workload_at_recall(&s, &l, 0.5).unwrap(), 0.2);
    assert!(matches!(workload_at_recall(&s, &l, 1.5), Err(MetricError::Target(_))));
}

#[test]
fn escalate_prf_examples() {
    use Disposition::*;
    let p = escalate_prf(&[Escalate; 4], &[true, false, true, false]).unwrap();
    assert_eq!((p.precision, p.recall), (0.5, 1.0));
    assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12 && !p.degenerate);
    let p = escalate_prf(&[Dismiss, Monitor], &[true, false]).unwrap();
    assert_eq!((p.precision, p.recall, p.f1, p.degenerate), (0.0, 0.0, 0.0, true));
    let p = escalate_prf(&[Escalate, Escalate, Escalate, Dismiss], &[true, true, false, true]).unwrap();
    for v in [p.precision, p.recall, p.f1] {
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn pr_curve_ends_at_full_recall() {
    let c = pr_curve(&[0.9, 0.5, 0.5, 0.1], &[true, false, true, false]).unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!((c[0].threshold, c[0].precision, c[0].recall), (0.9, 1.0, 0.5));
    assert_eq!((c[1].precision, c[1].recall), (2.0 / 3.0, 1.0));
    assert_eq!(c[2].recall, 1.0);
}

#[test]
fn thousand_random_instances_match_the_oracles() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (s, l) = instance(&mut rng);
        assert_eq!(pr_auc(&s, &l).unwrap(), ap_oracle(&s, &l), "{s:?} {l:?}");
        for t in [0.5, 0.8, 0.9, 1.0] {
            assert_eq!(workload_at_recall(&s, &l, t).unwrap(), workload_oracle(&s, &l, t));
        }
    }
}

proptest! {
    #[test]
    fn ap_matches_oracle(raw in prop::collection::vec((0u8..10, any::<bool>()), 1..=20), pick in any::<prop::sample::Index>()) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
        let mut labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        let k = pick.index(labels.len());
        labels[k] = true;
        let ap = pr_auc(&scores, &labels).unwrap();
        prop_assert_eq!(ap, ap_oracle(&scores, &labels));
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn workload_is_monotone_in_target(raw in prop::collection::vec((0u8..10, any::<bool>()), 1..=20), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
        let mut labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        labels[0] = true;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wl = workload_at_recall(&scores, &labels, lo).unwrap();
        let wh = workload_at_recall(&scores, &labels, hi).unwrap();
        prop_assert!(wl <= wh);
        prop_assert!((0.0..=1.0).contains(&wh));
    }

    #[test]
    fn prf_stays_in_range(raw in prop::collection::vec((0u8..3, any::<bool>()), 0..40)) {
        let d: Vec<Disposition> = raw.iter().map(|(k, _)| [Disposition::Dismiss, Disposition::Monitor, Disposition::Escalate][*k as usize]).collect();
        let l: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
        let p = escalate_prf(&d, &l).unwrap();
        for v in [p.precision, p.recall, p.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn parallel_map_preserves_order(xs in prop::collection::vec(any::<u32>(), 0..50), threads in 0usize..6) {
        let seq: Vec<u64> = xs.iter().map(|x| u64::from(*x) * 3).collect();
        prop_assert_eq!(par_map(&xs, threads, |x| u64::from(*x) * 3), seq);
    }
}

fn para(citations: &[&str]) -> RationaleParagraph {
    RationaleParagraph { text: "Text.".into(), citations: citations.iter().map(|s| s.to_string()).collect(), claims: vec![] }
}

fn record(disposition: Disposition, paragraphs: Vec<RationaleParagraph>) -> TriageRecord {
    TriageRecord {
        alert_id: "alert-1".into(),
        disposition,
        confidence: 0.5,
        typologies: vec![],
        paragraphs,
        supporting_ids: vec![],
        contradicting_or_missing_ids: vec![],
        unknowns: vec![],
        next_actions: vec![],
        generator_tag: "t".into(),
    }
}

#[test]
fn provenance_arithmetic() {
    let f = Fixture::small(3);
    let ctx = f.contexts().remove(0);
    let mut bundle = f.bundle(&ctx, AclTag::Restricted);
    bundle.alert_id = "alert-1".into();
    let policy = bundle.of_type(crate::model::SourceType::Policy).next().unwrap().id.clone();
    let slice = bundle.of_type(crate::model::SourceType::Transaction).next().unwrap().id.clone();
    let only_policy = record(Disposition::Escalate, vec![para(&[&policy])]);
    let both = record(Disposition::Escalate, vec![para(&[&policy]), para(&[&slice, "ev-case-x999", &slice])]);
    let v = f.index.len();
    let verifier = crate::verify::Verifier::from_index(&f.index, f.lexicon.clone());
    let r1 = verifier.verify(&only_policy, &bundle);
    let r2 = verifier.verify(&both, &bundle);
    let p = provenance_metrics(&[(&only_policy, &bundle, &r1), (&both, &bundle, &r2)]);
    assert_eq!(p.citation_validity, Some(4.0 / 5.0));
    assert_eq!(p.driver_coverage, Some(0.5));
    assert_eq!(p.avg_citations, Some((1.0 + 3.0) / 2.0));
    assert_eq!(p.evidence_support, Some(1.0));
    assert!(v > 0);
    let empty = provenance_metrics(&[]);
    assert_eq!(empty, Provenance::default());
}

#[test]
fn cf_metric_arithmetic() {
    let r = |attempted, flipped, t, ok, s| CfAlertResult { attempted, flipped, removal_tests: t, removal_faithful: ok, stability: s };
    let m = cf_metrics(&[r(true, true, 3, 3, Some(1.0)), r(true, false, 2, 0, Some(0.5)), r(false, false, 0, 0, None)]);
    assert_eq!(m.cf_flip_rate, Some(0.5));
    assert_eq!(m.cf_removal_faithfulness, Some(0.6));
    assert_eq!(m.cf_stability, Some(0.75));
    assert_eq!(cf_metrics(&[]), CfMetrics::default());
}

struct Sticky<'a>(&'a dyn TriageGenerator, EvidenceBundle);

impl TriageGenerator for Sticky<'_> {
    fn generate(&self, ctx: &crate::model::AlertContext, _: &EvidenceBundle, fb: &[String]) -> Result<TriageRecord, crate::generate::GenerationError> {
        self.0.generate(ctx, &self.1, fb)
    }
    fn tag(&self) -> String {
        "sticky".into()
    }
}

#[test]
fn removal_faithfulness_reference_and_sticky() {
    let f = Fixture::small(3);
    let data_gen = crate::generate::Generator::new(
        GeneratorConfig::reference(),
        std::sync::Arc::new(crate::generate::GenEnv { lexicon: f.lexicon.clone(), policies: f.policies() }),
    )
    .unwrap();
    let (mut tests, mut ok, mut sticky_ok) = (0, 0, 0);
    for ctx in f.contexts() {
        let b = f.bundle(&ctx, AclTag::Restricted);
        let rec = data_gen.generate(&ctx, &b, &[]).unwrap();
        let (t, p) = removal_tests(&data_gen, &ctx, &b, &rec, 3).unwrap();
        tests += t;
        ok += p;
        let sticky = Sticky(&data_gen, b.clone());
        let (t2, p2) = removal_tests(&sticky, &ctx, &b, &rec, 3).unwrap();
        assert_eq!(t, t2);
        sticky_ok += p2;
    }
    assert!(tests > 0);
    assert_eq!(ok, tests);
    assert_eq!(sticky_ok, 0);
}

#[test]
fn adversarial_degradations() {
    let f = Fixture::small(3);
    let g = crate::generate::Generator::new(
        GeneratorConfig::reference(),
        std::sync::Arc::new(crate::generate::GenEnv { lexicon: f.lexicon.clone(), policies: f.policies() }),
    )
    .unwrap();
    for (k, ctx) in f.contexts().into_iter().enumerate().take(20) {
        let b = f.bundle(&ctx, AclTag::Restricted);
        let (d, kind) = degrade(&ctx, &b, k);
        let rec = g.generate(&ctx, &d, &[]).unwrap();
        assert!(stays_uncertain(&rec, &ctx, kind), "{} {kind:?} {:?}", ctx.alert.id, rec.unknowns);
        assert!(!rec.unknowns.is_empty());
        if kind == Degradation::MissingKyc {
            assert!(!d.has_type(crate::model::SourceType::Kyc));
        }
    }
}

#[test]
fn linear_scorer_descends_and_standardizes_on_train_only() {
    let xs: Vec<Features> = (0..40).map(|i| std::array::from_fn(|f| if f == 5 { 1.0 } else { ((i * (f + 3)) % 11) as f64 })).collect();
    let ys: Vec<bool> = (0..40).map(|i| (i * 3) % 11 > 5).collect();
    let s = LinearScorer::train(&xs, &ys);
    let zero = LinearScorer { weights: [0.0; N_FEATURES], bias: 0.0, ..s.clone() };
    assert!(s.loss(&xs, &ys) < zero.loss(&xs, &ys));
    for f in 0..N_FEATURES {
        let mean = xs.iter().map(|x| x[f]).sum::<f64>() / 40.0;
        assert!((s.mean[f] - mean).abs() < 1e-12);
    }
    // the constant feature keeps unit scale and gets no weight
    assert_eq!(s.std[5], 1.0);
    assert_eq!(s.weights[5], 0.0);
    // one step by hand from zero
    let mut one = LinearScorer { weights: [0.0; N_FEATURES], bias: 0.0, ..s.clone() };
    let z: Vec<Features> = xs.iter().map(|x| std::array::from_fn(|f| (x[f] - s.mean[f]) / s.std[f])).collect();
    for f in 0..N_FEATURES {
        let g: f64 = z.iter().zip(&ys).map(|(x, y)| (0.5 - f64::from(u8::from(*y))) * x[f]).sum::<f64>() / 40.0;
        one.weights[f] = -STEP * g;
    }
    one.bias = -STEP * ys.iter().map(|y| 0.5 - f64::from(u8::from(*y))).sum::<f64>() / 40.0;
    assert!(one.loss(&xs, &ys) < zero.loss(&xs, &ys));
}

#[test]
fn linear_training_ignores_held_out_alerts() {
    let f = Fixture::small(4);
    let train: Vec<_> = f.split.train_alert_ids.iter().map(|id| f.context(id)).collect();
    let xs: Vec<Features> = train.iter().map(features).collect();
    let ys: Vec<bool> = train.iter().map(is_suspicious).collect();
    let a = LinearScorer::train(&xs, &ys);
    // held-out alerts never enter training, whatever their content
    let held: Vec<Features> = f.split.test_alert_ids.iter().map(|id| features(&f.context(id))).collect();
    assert!(!held.is_empty());
    let b = LinearScorer::train(&xs, &ys);
    assert_eq!(a, b);
    let ctx = &train[0];
    let x = features(ctx);
    assert_eq!(x[2], ctx.transactions.len() as f64);
    assert_eq!(x[6], f64::from(ctx.customer.prior_alert_count));
}

fn small_data(seed: u64) -> EvalData {
    let f = Fixture::small(seed);
    EvalData::new(f.world, f.split).unwrap()
}

#[test]
fn every_variant_reports_in_range() {
    let data = small_data(5);
    let config = ExperimentConfig { threads: 2, ..Default::default() };
    let mut reports = vec![];
    for v in Variant::ALL {
        let run = run_experiment(&data, v, &config).unwrap();
        run.report.check().unwrap();
        assert_eq!(run.report.variant_tag, v.as_str());
        assert_eq!(run.report.n_alerts, data.split.test_alert_ids.len());
        assert!(run.report.pr_auc.is_some());
        match v {
            Variant::RuleBaseline | Variant::LinearBaseline => {
                assert!(run.report.citation_validity.is_none() && run.report.cf_flip_rate.is_none());
                assert!(run.outcomes.is_empty());
            }
            Variant::LlmOnly => assert!(run.report.cf_flip_rate.is_none() && run.report.citation_validity.is_some()),
            _ => {
                assert_eq!(run.report.citation_validity, Some(1.0));
                assert_eq!(run.report.numerical_inconsistency_rate, Some(0.0));
                assert_eq!(run.report.cf_stability, Some(1.0));
                assert_eq!(run.report.cf_removal_faithfulness, Some(1.0));
                assert_eq!(run.report.adversarial_uncertainty_rate, Some(1.0));
            }
        }
        reports.push(run.report);
    }
    let table = render_table1(&reports);
    assert_eq!(table.lines().count(), 2 + Variant::ALL.len());
    assert!(table.lines().nth(2).unwrap().contains('—'));
}

#[test]
fn thread_count_does_not_change_results() {
    let data = small_data(6);
    let faults = FaultRates::uniform(0.3);
    let pipeline = PipelineConfig { generator: GeneratorConfig { heed_feedback: 0.5, ..GeneratorConfig::faulty(faults, 2) }, ..Default::default() };
    let one = run_experiment(&data, Variant::Full, &ExperimentConfig { threads: 1, pipeline: pipeline.clone(), ..Default::default() }).unwrap();
    let four = run_experiment(&data, Variant::Full, &ExperimentConfig { threads: 4, pipeline, ..Default::default() }).unwrap();
    assert_eq!(to_canonical_bytes(&one).unwrap(), to_canonical_bytes(&four).unwrap());
}

#[test]
fn numeric_faults_at_rate_one_without_repair() {
    let data = small_data(5);
    let faults = FaultRates { p_numeric_error: 1.0, ..Default::default() };
    let pipeline = PipelineConfig { generator: GeneratorConfig::faulty(faults, 3), ..Default::default() };
    let run = run_experiment(&data, Variant::LlmOnly, &ExperimentConfig { pipeline, adversarial: false, ..Default::default() }).unwrap();
    assert_eq!(run.report.numerical_inconsistency_rate, Some(1.0));
    assert!(run.report.adversarial_uncertainty_rate.is_none());
}

#[test]
fn mismatched_split_is_rejected() {
    let f = Fixture::small(5);
    let mut split = f.split.clone();
    split.test_alert_ids.push("alert-999999".into());
    assert!(matches!(EvalData::new(f.world.clone(), split), Err(EvalError::Split(_))));
    let mut split = f.split.clone();
    split.train_alert_ids.pop();
    assert!(matches!(EvalData::new(f.world, split), Err(EvalError::Split(_))));
}

#[test]
fn outputs_round_trip() {
    let data = small_data(5);
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&data, Variant::RuleBaseline, &ExperimentConfig::default()).unwrap();
    write_variant(dir.path(), &run).unwrap();
    let back = read_reports(dir.path()).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].variant_tag, "rule_baseline");
    assert_eq!(back[0].n_alerts, run.report.n_alerts);
    let csv = std::fs::read_to_string(dir.path().join("pr_curve.rule_baseline.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("threshold,precision,recall"));
    assert_eq!(csv.lines().count(), run.curve.len() + 1);
    write_table1(dir.path(), &back).unwrap();
    assert!(dir.path().join("table1.md").exists());
}
