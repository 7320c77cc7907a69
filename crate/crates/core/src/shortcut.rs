//! Single-cause search: walk from a failing instance toward a disjoint
//! succeeding instance one parameter at a time, keep substitutions that still
//! fail, and assert the residue of the failing instance as a root cause. A
//! final sanity scan over all known provenance rejects assertions that some
//! succeeding instance satisfies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::model::{
    hamming, Comparator, Conjunction, Evaluation, ParameterSpace, PipelineInstance,
    ProvenanceRecord,
};

#[derive(Debug, Error)]
pub enum ShortcutError {
    #[error("history contains no failing instance")]
    NoFailingInstance,
    #[error("history contains no succeeding instance")]
    NoSucceedingInstance,
    #[error("base instance expected to fail evaluates to succeed")]
    BaseNotFailing,
    #[error("base instance expected to succeed evaluates to fail")]
    BaseNotSucceeding,
    #[error("budget exhausted mid-walk")]
    Budget { partial: Box<ShortcutReport> },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of one walk.
#[derive(Debug, Clone)]
pub struct ShortcutReport {
    /// Equality triples of the failing base retained by the walk. When
    /// `sanity_rejected` is set this is kept for diagnostics only; the
    /// asserted answer is empty.
    pub asserted: Conjunction,
    pub base_fail: PipelineInstance,
    pub base_good: PipelineInstance,
    pub pair_is_disjoint: bool,
    /// Walk evaluations issued (one per substituted candidate, cached or not).
    pub executions_used: usize,
    pub sanity_rejected: bool,
    /// The substituted candidates in walk order with their outcomes.
    pub steps: Vec<(PipelineInstance, Evaluation)>,
}

impl ShortcutReport {
    /// The assertion to act on: empty when the sanity scan rejected it.
    pub fn effective(&self) -> Conjunction {
        if self.sanity_rejected {
            Conjunction::empty()
        } else {
            self.asserted.clone()
        }
    }
}

pub fn declared_order(space: &ParameterSpace) -> Vec<usize> {
    (0..space.len()).collect()
}

pub fn shuffled_order(space: &ParameterSpace, seed: u64) -> Vec<usize> {
    let mut order = declared_order(space);
    order.shuffle(&mut Pcg64Mcg::seed_from_u64(seed));
    order
}

/// Pick a failing instance and the succeeding instance that differs from it on
/// as many parameters as possible. Ties go to the lowest failing sequence
/// number, then the lowest succeeding one. The pair is disjoint when the
/// maximum equals the parameter count.
pub fn find_disjoint_pair(
    history: &[ProvenanceRecord],
    space: &ParameterSpace,
) -> Result<(PipelineInstance, PipelineInstance, bool), ShortcutError> {
    let fails: Vec<&ProvenanceRecord> = history
        .iter()
        .filter(|r| r.evaluation == Evaluation::Fail)
        .collect();
    if fails.is_empty() {
        return Err(ShortcutError::NoFailingInstance);
    }
    let goods: Vec<&ProvenanceRecord> = history
        .iter()
        .filter(|r| r.evaluation == Evaluation::Succeed)
        .collect();
    if goods.is_empty() {
        return Err(ShortcutError::NoSucceedingInstance);
    }
    let mut best: Option<(&ProvenanceRecord, &ProvenanceRecord, usize)> = None;
    for f in &fails {
        for g in &goods {
            let h = hamming(&f.instance, &g.instance);
            if best.is_none_or(|(_, _, bh)| h > bh) {
                best = Some((f, g, h));
            }
        }
    }
    let (f, g, h) = best.expect("non-empty candidate sets");
    Ok((f.instance.clone(), g.instance.clone(), h == space.len()))
}

/// Run the walk from `base_fail` against `base_good` using `order` (a
/// permutation of the parameter indices). Parameters where the two bases
/// agree are skipped without execution and never enter the assertion.
pub fn shortcut(
    engine: &Engine,
    base_fail: &PipelineInstance,
    base_good: &PipelineInstance,
    order: &[usize],
) -> Result<ShortcutReport, ShortcutError> {
    let space = engine.space();
    {
        let mut seen = vec![false; space.len()];
        assert!(
            order.len() == space.len()
                && order.iter().all(|&p| {
                    let fresh = p < space.len() && !seen[p];
                    if fresh {
                        seen[p] = true;
                    }
                    fresh
                }),
            "order must be a permutation of the parameter indices"
        );
    }
    if engine.evaluate(base_fail, "shortcut")? != Evaluation::Fail {
        return Err(ShortcutError::BaseNotFailing);
    }
    if engine.evaluate(base_good, "shortcut")? != Evaluation::Succeed {
        return Err(ShortcutError::BaseNotSucceeding);
    }

    let pair_is_disjoint = hamming(base_fail, base_good) == space.len();
    let mut current = base_fail.clone();
    let mut steps: Vec<(PipelineInstance, Evaluation)> = Vec::new();

    for &p in order {
        if base_fail.value(p) == base_good.value(p) {
            continue;
        }
        let candidate = current.with_value(p, base_good.value(p).clone());
        let eval = match engine.evaluate(&candidate, "shortcut") {
            Ok(eval) => eval,
            Err(EngineError::BudgetExhausted) => {
                let partial = conclude(
                    engine,
                    base_fail,
                    base_good,
                    pair_is_disjoint,
                    current,
                    steps,
                );
                return Err(ShortcutError::Budget {
                    partial: Box::new(partial),
                });
            }
            Err(e) => return Err(e.into()),
        };
        steps.push((candidate.clone(), eval));
        if eval == Evaluation::Fail {
            current = candidate;
        }
    }

    Ok(conclude(
        engine,
        base_fail,
        base_good,
        pair_is_disjoint,
        current,
        steps,
    ))
}

fn conclude(
    engine: &Engine,
    base_fail: &PipelineInstance,
    base_good: &PipelineInstance,
    pair_is_disjoint: bool,
    current: PipelineInstance,
    steps: Vec<(PipelineInstance, Evaluation)>,
) -> ShortcutReport {
    let space = engine.space();
    let mut asserted = Conjunction::empty();
    for p in 0..space.len() {
        if current.value(p) == base_fail.value(p) && base_fail.value(p) != base_good.value(p) {
            let triple = space
                .triple(
                    &space.param(p).name,
                    Comparator::Eq,
                    base_fail.value(p).clone(),
                )
                .expect("instance values are domain values");
            asserted.insert(triple);
        }
    }
    let sanity_rejected = sanity_rejects(engine, &asserted);
    ShortcutReport {
        asserted,
        base_fail: base_fail.clone(),
        base_good: base_good.clone(),
        pair_is_disjoint,
        executions_used: steps.len(),
        sanity_rejected,
        steps,
    }
}

/// True iff any succeeding instance in the provenance satisfies `conj`. Scans
/// everything known, given and generated.
pub fn sanity_rejects(engine: &Engine, conj: &Conjunction) -> bool {
    let space = engine.space();
    engine
        .provenance()
        .iter()
        .any(|r| r.evaluation == Evaluation::Succeed && conj.satisfied_by(&r.instance, space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, EngineConfig, OracleBackend, PipelineBackend};
    use crate::model::{ParamKind, Parameter, Value};

    fn table1_space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter {
                name: "Dataset".into(),
                kind: ParamKind::Categorical,
                domain: vec![Value::text("Iris").unwrap(), Value::text("Digits").unwrap()],
            },
            Parameter {
                name: "Estimator".into(),
                kind: ParamKind::Categorical,
                domain: vec![
                    Value::text("LogisticRegression").unwrap(),
                    Value::text("DecisionTree").unwrap(),
                    Value::text("GradientBoosting").unwrap(),
                ],
            },
            Parameter {
                name: "LibraryVersion".into(),
                kind: ParamKind::Ordinal,
                domain: vec![Value::real(1.0).unwrap(), Value::real(2.0).unwrap()],
            },
        ])
        .unwrap()
    }

    fn inst(space: &ParameterSpace, texts: &[&str]) -> PipelineInstance {
        let values = texts
            .iter()
            .enumerate()
            .map(|(i, t)| space.parse_value(i, t).unwrap())
            .collect();
        space.instance(values).unwrap()
    }

    fn table1_engine(budget: Option<usize>) -> Engine {
        let space = table1_space();
        let cause = space.parse_dnf("LibraryVersion = 2.0").unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig { workers: 1, budget },
        );
        engine
            .seed_history(&[
                (
                    inst(&space, &["Iris", "LogisticRegression", "1.0"]),
                    Evaluation::Succeed,
                ),
                (
                    inst(&space, &["Digits", "DecisionTree", "1.0"]),
                    Evaluation::Succeed,
                ),
                (
                    inst(&space, &["Iris", "GradientBoosting", "2.0"]),
                    Evaluation::Fail,
                ),
            ])
            .unwrap();
        engine
    }

    #[test]
    fn disjoint_pair_from_table1() {
        let engine = table1_engine(None);
        let space = engine.space().clone();
        let (f, g, is_disjoint) = find_disjoint_pair(&engine.provenance(), &space).unwrap();
        assert_eq!(f, inst(&space, &["Iris", "GradientBoosting", "2.0"]));
        assert_eq!(g, inst(&space, &["Digits", "DecisionTree", "1.0"]));
        assert!(is_disjoint);
    }

    #[test]
    fn lone_failure_has_no_good_partner() {
        let space = table1_space();
        let cause = space.parse_dnf("LibraryVersion = 2.0").unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig::default(),
        );
        engine
            .seed_history(&[(
                inst(&space, &["Iris", "GradientBoosting", "2.0"]),
                Evaluation::Fail,
            )])
            .unwrap();
        assert!(matches!(
            find_disjoint_pair(&engine.provenance(), &space),
            Err(ShortcutError::NoSucceedingInstance)
        ));
    }

    #[test]
    fn best_pair_may_share_a_value() {
        let space = table1_space();
        let cause = space.parse_dnf("LibraryVersion = 2.0").unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig::default(),
        );
        // The only good instance shares the estimator with the failing one.
        engine
            .seed_history(&[
                (
                    inst(&space, &["Iris", "GradientBoosting", "2.0"]),
                    Evaluation::Fail,
                ),
                (
                    inst(&space, &["Digits", "GradientBoosting", "1.0"]),
                    Evaluation::Succeed,
                ),
            ])
            .unwrap();
        let (f, g, is_disjoint) = find_disjoint_pair(&engine.provenance(), &space).unwrap();
        assert!(!is_disjoint);
        assert_eq!(hamming(&f, &g), space.len() - 1);
    }

    #[test]
    fn table2_walk_asserts_library_version() {
        let engine = table1_engine(None);
        let space = engine.space().clone();
        let (f, g, _) = find_disjoint_pair(&engine.provenance(), &space).unwrap();
        let report = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap();

        let expected_steps = vec![
            (
                inst(&space, &["Digits", "GradientBoosting", "2.0"]),
                Evaluation::Fail,
            ),
            (
                inst(&space, &["Digits", "DecisionTree", "2.0"]),
                Evaluation::Fail,
            ),
            (
                inst(&space, &["Digits", "DecisionTree", "1.0"]),
                Evaluation::Succeed,
            ),
        ];
        assert_eq!(report.steps, expected_steps);
        assert_eq!(report.executions_used, 3);
        assert!(report.pair_is_disjoint);
        assert!(!report.sanity_rejected);
        assert_eq!(
            space.conjunction_text(&report.asserted),
            "LibraryVersion = 2.0"
        );
        // The final substitution is the seeded good instance, so only two runs
        // were actually new.
        assert_eq!(engine.executed_count(), 2);
    }

    /// Two causes D1 = {p1=v1, p2=v2} and D2 = {p1=w1, p3=v3} truncate the
    /// assertion to {p3 = v3}.
    fn example2_engine(second_cause: &str) -> (Engine, PipelineInstance, PipelineInstance) {
        let space = ParameterSpace::new(
            (1..=3)
                .map(|i| Parameter {
                    name: format!("p{i}"),
                    kind: ParamKind::Categorical,
                    domain: vec![
                        Value::text(format!("v{i}")).unwrap(),
                        Value::text(format!("w{i}")).unwrap(),
                        Value::text(format!("u{i}")).unwrap(),
                    ],
                })
                .collect(),
        )
        .unwrap();
        let cause = space
            .parse_dnf(&format!("p1 = v1 AND p2 = v2\nOR {second_cause}"))
            .unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig::default(),
        );
        let f = inst(&space, &["v1", "v2", "v3"]);
        let g = inst(&space, &["w1", "w2", "w3"]);
        engine
            .seed_history(&[
                (f.clone(), Evaluation::Fail),
                (g.clone(), Evaluation::Succeed),
            ])
            .unwrap();
        (engine, f, g)
    }

    #[test]
    fn overlapping_causes_truncate_the_assertion() {
        let (engine, f, g) = example2_engine("p1 = w1 AND p3 = v3");
        let space = engine.space().clone();
        let report = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap();
        assert_eq!(space.conjunction_text(&report.asserted), "p3 = v3");
        assert!(!report.sanity_rejected);
    }

    #[test]
    fn sufficiently_different_causes_do_not_truncate() {
        // The second cause now disagrees with the first on both shared
        // parameters, so the walk keeps the full first cause.
        let (engine, f, g) = example2_engine("p1 = w1 AND p2 = u2 AND p3 = v3");
        let space = engine.space().clone();
        let report = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap();
        assert_eq!(
            space.conjunction_text(&report.asserted),
            "p1 = v1 AND p2 = v2"
        );
        assert!(!report.sanity_rejected);
    }

    #[test]
    fn sanity_scan_rejects_assertions_a_good_instance_satisfies() {
        let (engine, f, g) = example2_engine("p1 = w1 AND p3 = v3");
        let space = engine.space().clone();
        // A succeeding instance that satisfies the truncated assertion
        // {p3 = v3} is already in the history.
        engine
            .seed_history(&[(inst(&space, &["v1", "w2", "v3"]), Evaluation::Succeed)])
            .unwrap();
        let report = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap();
        assert!(report.sanity_rejected);
        assert_eq!(space.conjunction_text(&report.asserted), "p3 = v3");
        assert!(report.effective().is_empty());
    }

    #[test]
    fn budget_exhaustion_carries_the_partial_report() {
        let engine = table1_engine(Some(1));
        let space = engine.space().clone();
        let (f, g, _) = find_disjoint_pair(&engine.provenance(), &space).unwrap();
        let err = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap_err();
        match err {
            ShortcutError::Budget { partial } => {
                assert_eq!(partial.executions_used, 1);
                assert_eq!(partial.steps.len(), 1);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn walk_skips_shared_parameters() {
        let engine = table1_engine(None);
        let space = engine.space().clone();
        let f = inst(&space, &["Iris", "GradientBoosting", "2.0"]);
        let g = inst(&space, &["Digits", "GradientBoosting", "1.0"]);
        let report = shortcut(&engine, &f, &g, &declared_order(&space)).unwrap();
        assert!(!report.pair_is_disjoint);
        assert_eq!(report.executions_used, 2);
        // The shared estimator never enters the assertion.
        assert!(report
            .asserted
            .triples()
            .all(|t| space.param(t.param()).name != "Estimator"));
    }

    #[test]
    fn shuffled_order_is_a_seeded_permutation() {
        let space = table1_space();
        let a = shuffled_order(&space, 7);
        let b = shuffled_order(&space, 7);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }
}
