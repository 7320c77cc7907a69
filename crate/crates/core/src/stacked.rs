//! Stacked walks: run the single-cause walk from one failing instance against
//! k succeeding instances (mutually disjoint when achievable) and union the
//! surviving assertions.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

use crate::engine::{Engine, EngineError};
use crate::model::{disjoint, hamming, Conjunction, Evaluation, PipelineInstance};
use crate::shortcut::{sanity_rejects, shortcut, ShortcutError, ShortcutReport};

/// Experimental default: four walks per failing instance.
pub const DEFAULT_K: usize = 4;

const SYNTH_ENUM_CAP: u128 = 4096;
const SYNTH_SAMPLE_ATTEMPTS: usize = 512;

#[derive(Debug)]
pub struct StackedRunFailure {
    pub good: PipelineInstance,
    pub error: ShortcutError,
}

#[derive(Debug)]
pub struct StackedReport {
    /// Union of the non-rejected per-run assertions. When `sanity_rejected`
    /// is set the asserted answer is empty and this is diagnostic only.
    pub asserted: Conjunction,
    pub per_run: Vec<ShortcutReport>,
    pub k_requested: usize,
    pub k_found: usize,
    pub mutually_disjoint: bool,
    pub sanity_rejected: bool,
    pub failed_runs: Vec<StackedRunFailure>,
    /// Executions spent synthesizing and screening candidate good instances.
    pub synthesis_executions: usize,
}

impl StackedReport {
    pub fn effective(&self) -> Conjunction {
        if self.sanity_rejected {
            Conjunction::empty()
        } else {
            self.asserted.clone()
        }
    }
}

/// Select up to `k` succeeding instances disjoint from `base_fail`, pairwise
/// disjoint when achievable. History instances are picked greedily (maximize
/// the minimum pairwise hamming distance, ties by sequence number); when the
/// history holds fewer than `k`, fresh candidates are synthesized and
/// evaluated against the engine, which counts against the budget.
pub fn find_disjoint_good_set(
    engine: &Engine,
    base_fail: &PipelineInstance,
    k: usize,
    seed: u64,
) -> Result<(Vec<PipelineInstance>, bool), ShortcutError> {
    let space = engine.space();
    let n = space.len();
    let mut chosen: Vec<PipelineInstance> = Vec::new();

    // Phase 1: greedy pick from history.
    let mut pool: Vec<(u64, PipelineInstance)> = engine
        .provenance()
        .into_iter()
        .filter(|r| r.evaluation == Evaluation::Succeed && disjoint(&r.instance, base_fail))
        .map(|r| (r.seq, r.instance))
        .collect();
    while chosen.len() < k && !pool.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (pool idx, min pairwise hamming)
        for (i, (_, cand)) in pool.iter().enumerate() {
            let score = chosen
                .iter()
                .map(|g| hamming(cand, g))
                .min()
                .unwrap_or(n + 1);
            if best.is_none_or(|(_, bs)| score > bs) {
                best = Some((i, score));
            }
        }
        let (idx, _) = best.expect("pool non-empty");
        chosen.push(pool.remove(idx).1);
    }

    // Phase 2: synthesize candidates disjoint from the failing base and from
    // everything chosen so far, then relax to disjoint-from-base only.
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut tried: HashSet<PipelineInstance> = chosen.iter().cloned().collect();
    let mut budget_hit = false;
    for strict in [true, false] {
        while chosen.len() < k && !budget_hit {
            let found = synthesize_one(
                engine,
                base_fail,
                if strict { &chosen } else { &[] },
                &mut tried,
                &mut rng,
            );
            match found {
                Ok(Some(good)) => chosen.push(good),
                Ok(None) => break, // pool exhausted at this strictness
                Err(EngineError::BudgetExhausted) => budget_hit = true,
                Err(e) => return Err(e.into()),
            }
        }
    }

    if chosen.is_empty() {
        return Err(if budget_hit {
            ShortcutError::Engine(EngineError::BudgetExhausted)
        } else {
            ShortcutError::NoSucceedingInstance
        });
    }
    let mutually_disjoint = chosen
        .iter()
        .enumerate()
        .all(|(i, a)| chosen[i + 1..].iter().all(|b| disjoint(a, b)));
    Ok((chosen, mutually_disjoint))
}

/// Find one succeeding instance whose value differs from `base_fail` (and from
/// every instance in `avoid`) on every parameter. Returns Ok(None) when the
/// candidate pool is exhausted.
fn synthesize_one(
    engine: &Engine,
    base_fail: &PipelineInstance,
    avoid: &[PipelineInstance],
    tried: &mut HashSet<PipelineInstance>,
    rng: &mut Pcg64Mcg,
) -> Result<Option<PipelineInstance>, EngineError> {
    let space = engine.space();
    let allowed: Vec<Vec<usize>> = (0..space.len())
        .map(|p| {
            (0..space.param(p).domain.len())
                .filter(|&di| {
                    let v = &space.param(p).domain[di];
                    v != base_fail.value(p) && avoid.iter().all(|a| v != a.value(p))
                })
                .collect()
        })
        .collect();
    if allowed.iter().any(|l| l.is_empty()) {
        return Ok(None);
    }
    let pool_size: u128 = allowed.iter().map(|l| l.len() as u128).product();

    let build = |choice: &[usize]| -> PipelineInstance {
        let values = choice
            .iter()
            .enumerate()
            .map(|(p, &li)| space.param(p).domain[allowed[p][li]].clone())
            .collect();
        space
            .instance(values)
            .expect("allowed values are in domain")
    };

    if pool_size <= SYNTH_ENUM_CAP {
        let mut cursor = vec![0usize; allowed.len()];
        loop {
            let candidate = build(&cursor);
            if tried.insert(candidate.clone())
                && engine.evaluate(&candidate, "stacked")? == Evaluation::Succeed
            {
                return Ok(Some(candidate));
            }
            let mut p = allowed.len();
            loop {
                if p == 0 {
                    return Ok(None);
                }
                p -= 1;
                cursor[p] += 1;
                if cursor[p] < allowed[p].len() {
                    break;
                }
                cursor[p] = 0;
            }
        }
    } else {
        for _ in 0..SYNTH_SAMPLE_ATTEMPTS {
            let choice: Vec<usize> = allowed.iter().map(|l| rng.gen_range(0..l.len())).collect();
            let candidate = build(&choice);
            if !tried.insert(candidate.clone()) {
                continue;
            }
            if engine.evaluate(&candidate, "stacked")? == Evaluation::Succeed {
                return Ok(Some(candidate));
            }
        }
        Ok(None)
    }
}

/// Run `base_fail` against up to `k` good instances and union the surviving
/// assertions; a failed run is recorded and the remaining runs proceed.
pub fn stacked_shortcut(
    engine: &Engine,
    base_fail: &PipelineInstance,
    k: usize,
    order: &[usize],
    seed: u64,
) -> Result<StackedReport, ShortcutError> {
    if engine.evaluate(base_fail, "stacked")? != Evaluation::Fail {
        return Err(ShortcutError::BaseNotFailing);
    }
    let before_synth = engine.executed_count();
    let (goods, mutually_disjoint) = find_disjoint_good_set(engine, base_fail, k, seed)?;
    let synthesis_executions = engine.executed_count() - before_synth;

    let mut per_run: Vec<ShortcutReport> = Vec::new();
    let mut failed_runs: Vec<StackedRunFailure> = Vec::new();
    let mut asserted = Conjunction::empty();
    for good in &goods {
        match shortcut(engine, base_fail, good, order) {
            Ok(report) => {
                asserted = asserted.union(&report.effective());
                per_run.push(report);
            }
            Err(ShortcutError::Budget { partial }) => {
                asserted = asserted.union(&partial.effective());
                per_run.push(*partial);
                failed_runs.push(StackedRunFailure {
                    good: good.clone(),
                    error: ShortcutError::Engine(EngineError::BudgetExhausted),
                });
            }
            Err(e) => failed_runs.push(StackedRunFailure {
                good: good.clone(),
                error: e,
            }),
        }
    }

    let sanity_rejected = sanity_rejects(engine, &asserted);
    Ok(StackedReport {
        asserted,
        per_run,
        k_requested: k,
        k_found: goods.len(),
        mutually_disjoint,
        sanity_rejected,
        failed_runs,
        synthesis_executions,
    })
}
