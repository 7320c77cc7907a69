//! Decision-tree search for complex causes. Builds an unpruned tree over the
//! executed instances, promotes pure-fail paths to suspect conjunctions
//! (inequality comparators included), tests suspects by executing filtered
//! instances, rebuilds on refutation, and emits definitive causes through the
//! minimizer.
//!
//! The tree is not a predictor: it only proposes short paths that lead to
//! fail. Testing decides.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::minimize::minimize;
use crate::model::{
    CauseDnf, Comparator, Conjunction, Evaluation, ParamKind, ParameterSpace, PipelineInstance,
    Triple, Value,
};
use crate::universe::{conjunction_sat, BitSet, Universe};

pub const DEFAULT_SAMPLES_PER_SUSPECT: usize = 30;
pub const DEFAULT_UNIVERSE_CAP: usize = 1_000_000;

/// Batches are dispatched in fixed-size chunks so that early stopping does not
/// depend on the worker count: the same instances run in the same order for
/// any engine configuration.
const TEST_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum DdtError {
    #[error("history contains no failing instance")]
    NoFailingInstance,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    FindOne,
    FindAll,
}

#[derive(Debug, Clone)]
pub struct DdtConfig {
    pub goal: Goal,
    pub samples_per_suspect: usize,
    pub seed: u64,
    pub universe_cap: usize,
}

impl Default for DdtConfig {
    fn default() -> Self {
        DdtConfig {
            goal: Goal::FindOne,
            samples_per_suspect: DEFAULT_SAMPLES_PER_SUSPECT,
            seed: 0,
            universe_cap: DEFAULT_UNIVERSE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafLabel {
    PureSucceed,
    PureFail,
    /// Identical instances with differing evaluations; unreachable with a
    /// deterministic backend.
    Mixed,
}

#[derive(Debug)]
pub enum TreeNode {
    Leaf {
        label: LeafLabel,
        members: Vec<usize>,
    },
    Inner {
        split: Triple,
        true_branch: Box<TreeNode>,
        false_branch: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuspectStatus {
    Untested,
    Refuted,
    /// Proven over the full filter (every instance satisfying the conjunction
    /// was evaluated and failed).
    Definitive,
    /// All sampled instances failed, but the filter was not exhausted.
    DefinitiveSampled,
}

#[derive(Debug, Clone)]
pub struct Suspect {
    pub conjunction: Conjunction,
    /// One satisfying value per constrained parameter.
    pub prototype: Vec<(usize, Value)>,
    pub status: SuspectStatus,
    /// Training instances in the suspect's leaf.
    pub support: usize,
}

#[derive(Debug)]
pub struct DdtReport {
    pub causes: CauseDnf,
    pub executions_used: usize,
    pub rebuilds: usize,
    pub budget_exhausted: bool,
    /// True when every emitted conjunct was proven over the declared universe
    /// rather than confirmed by sampling.
    pub proven: bool,
}

fn gini(fails: usize, total: usize) -> f64 {
    let f = fails as f64 / total as f64;
    let s = 1.0 - f;
    1.0 - f * f - s * s
}

/// CART-style induction: splits maximize Gini impurity reduction, ties broken
/// by parameter declaration order then earlier domain value. Ordinal splits
/// threshold at observed domain values (`<= v` / `> v`), categorical splits
/// test one observed value (`= v` / `!= v`). Splitting continues while any
/// candidate separates the node, so the tree is complete over the training
/// set.
pub fn build_tree(records: &[(PipelineInstance, Evaluation)], space: &ParameterSpace) -> TreeNode {
    assert!(!records.is_empty(), "cannot build a tree from no records");
    grow(records, space, (0..records.len()).collect())
}

fn grow(
    records: &[(PipelineInstance, Evaluation)],
    space: &ParameterSpace,
    members: Vec<usize>,
) -> TreeNode {
    let fails = members
        .iter()
        .filter(|&&i| records[i].1 == Evaluation::Fail)
        .count();
    if fails == 0 {
        return TreeNode::Leaf {
            label: LeafLabel::PureSucceed,
            members,
        };
    }
    if fails == members.len() {
        return TreeNode::Leaf {
            label: LeafLabel::PureFail,
            members,
        };
    }

    let parent = gini(fails, members.len());
    let mut best: Option<(f64, Triple, Vec<usize>, Vec<usize>)> = None;
    for p in 0..space.len() {
        let mut observed: Vec<usize> = members
            .iter()
            .map(|&i| {
                space
                    .domain_index(p, records[i].0.value(p))
                    .expect("instance value in domain")
            })
            .collect();
        observed.sort_unstable();
        observed.dedup();
        if observed.len() < 2 {
            continue;
        }
        let candidates: Vec<Triple> = match space.param(p).kind {
            ParamKind::Ordinal => observed[..observed.len() - 1]
                .iter()
                .map(|&di| {
                    space
                        .triple(
                            &space.param(p).name,
                            Comparator::Le,
                            space.param(p).domain[di].clone(),
                        )
                        .expect("domain value")
                })
                .collect(),
            ParamKind::Categorical => observed
                .iter()
                .map(|&di| {
                    space
                        .triple(
                            &space.param(p).name,
                            Comparator::Eq,
                            space.param(p).domain[di].clone(),
                        )
                        .expect("domain value")
                })
                .collect(),
        };
        for t in candidates {
            let (mut tm, mut fm) = (Vec::new(), Vec::new());
            let (mut tf, mut ff) = (0usize, 0usize);
            for &i in &members {
                if t.holds(&records[i].0, space) {
                    if records[i].1 == Evaluation::Fail {
                        tf += 1;
                    }
                    tm.push(i);
                } else {
                    if records[i].1 == Evaluation::Fail {
                        ff += 1;
                    }
                    fm.push(i);
                }
            }
            if tm.is_empty() || fm.is_empty() {
                continue;
            }
            let weighted = (tm.len() as f64 * gini(tf, tm.len())
                + fm.len() as f64 * gini(ff, fm.len()))
                / members.len() as f64;
            let gain = parent - weighted;
            if best.as_ref().is_none_or(|(bg, ..)| gain > *bg) {
                best = Some((gain, t, tm, fm));
            }
        }
    }

    match best {
        None => TreeNode::Leaf {
            label: LeafLabel::Mixed,
            members,
        },
        Some((_, split, tm, fm)) => TreeNode::Inner {
            split,
            true_branch: Box::new(grow(records, space, tm)),
            false_branch: Box::new(grow(records, space, fm)),
        },
    }
}

fn negate(t: &Triple, space: &ParameterSpace) -> Triple {
    let param = space.param(t.param());
    let (cmp, value) = match t.comparator() {
        Comparator::Le => (Comparator::Gt, t.value().clone()),
        Comparator::Eq => {
            // Over a two-value domain, `!= v` is spelled as equality on the
            // other value.
            if param.domain.len() == 2 {
                let other = param
                    .domain
                    .iter()
                    .find(|v| *v != t.value())
                    .expect("two-value domain")
                    .clone();
                (Comparator::Eq, other)
            } else {
                (Comparator::Ne, t.value().clone())
            }
        }
        other => unreachable!("tree splits only use <= and =, got {other:?}"),
    };
    space
        .triple(&param.name, cmp, value)
        .expect("negation stays valid")
}

/// One suspect per pure-fail leaf, ordered shortest conjunction first (the
/// most general hypotheses), ties by leaf support descending.
pub fn extract_suspects(tree: &TreeNode, space: &ParameterSpace) -> Vec<Suspect> {
    let mut out = Vec::new();
    let mut path: Vec<Triple> = Vec::new();
    collect(tree, space, &mut path, &mut out);
    out.sort_by_cached_key(|s| {
        (
            s.conjunction.len(),
            usize::MAX - s.support,
            space.conjunction_text(&s.conjunction),
        )
    });
    out
}

fn collect(
    node: &TreeNode,
    space: &ParameterSpace,
    path: &mut Vec<Triple>,
    out: &mut Vec<Suspect>,
) {
    match node {
        TreeNode::Leaf { label, members } => {
            if *label == LeafLabel::PureFail {
                let conjunction = Conjunction::from_triples(path.iter().cloned());
                let prototype = prototype_for(&conjunction, space)
                    .expect("leaf members satisfy their own path");
                out.push(Suspect {
                    conjunction,
                    prototype,
                    status: SuspectStatus::Untested,
                    support: members.len(),
                });
            }
        }
        TreeNode::Inner {
            split,
            true_branch,
            false_branch,
        } => {
            path.push(split.clone());
            collect(true_branch, space, path, out);
            path.pop();
            path.push(negate(split, space));
            collect(false_branch, space, path, out);
            path.pop();
        }
    }
}

/// Domain indices satisfying every triple of `conj` on parameter `p`.
fn allowed_values(conj: &Conjunction, space: &ParameterSpace, p: usize) -> Vec<usize> {
    let probe_triples: Vec<&Triple> = conj.triples().filter(|t| t.param() == p).collect();
    (0..space.param(p).domain.len())
        .filter(|&di| {
            probe_triples.iter().all(|t| {
                let pivot = space
                    .domain_index(p, t.value())
                    .expect("triple value in domain");
                match t.comparator() {
                    Comparator::Eq => di == pivot,
                    Comparator::Ne => di != pivot,
                    cmp => cmp.holds(di.cmp(&pivot)),
                }
            })
        })
        .collect()
}

/// A satisfying value per constrained parameter: the largest satisfying value
/// when the constraints include an upper bound, the first satisfying value
/// otherwise. None when some parameter admits no value.
pub fn prototype_for(conj: &Conjunction, space: &ParameterSpace) -> Option<Vec<(usize, Value)>> {
    let constrained: BTreeSet<usize> = conj.triples().map(Triple::param).collect();
    let mut out = Vec::new();
    for p in constrained {
        let allowed = allowed_values(conj, space, p);
        if allowed.is_empty() {
            return None;
        }
        let has_upper = conj
            .triples()
            .any(|t| t.param() == p && matches!(t.comparator(), Comparator::Le | Comparator::Lt));
        let di = if has_upper {
            *allowed.last().unwrap()
        } else {
            allowed[0]
        };
        out.push((p, space.param(p).domain[di].clone()));
    }
    Some(out)
}

/// Evaluate a chunked batch; reports the first SUCCEED, whether the budget ran
/// out, or clean completion.
fn run_filter(
    engine: &Engine,
    instances: &[PipelineInstance],
) -> Result<(bool, bool), EngineError> {
    let mut budget_hit = false;
    for chunk in instances.chunks(TEST_CHUNK) {
        for result in engine.evaluate_batch(chunk, "ddt") {
            match result {
                Ok(Evaluation::Succeed) => return Ok((true, budget_hit)),
                Ok(Evaluation::Fail) => {}
                Err(EngineError::BudgetExhausted) => budget_hit = true,
                Err(e) => return Err(e),
            }
        }
        if budget_hit {
            break;
        }
    }
    Ok((false, budget_hit))
}

/// Test a suspect: refute from history when possible, exhaust the full filter
/// when it fits within the sample budget, otherwise fix the prototype and
/// sample the free parameters (uniform without replacement, exhaustive when
/// the free product is small).
fn test_suspect(
    engine: &Engine,
    suspect: &Suspect,
    cfg: &DdtConfig,
    rng: &mut Pcg64Mcg,
) -> Result<SuspectStatus, EngineError> {
    let space = engine.space();
    let conj = &suspect.conjunction;
    for r in engine.provenance() {
        if r.evaluation == Evaluation::Succeed && conj.satisfied_by(&r.instance, space) {
            return Ok(SuspectStatus::Refuted);
        }
    }

    let allowed: Vec<Vec<usize>> = (0..space.len())
        .map(|p| allowed_values(conj, space, p))
        .collect();
    if allowed.iter().any(Vec::is_empty) {
        // Unsatisfiable path; cannot arise from a leaf with members.
        return Ok(SuspectStatus::Refuted);
    }
    let filter_size: u128 = allowed.iter().map(|l| l.len() as u128).product();

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

    if filter_size <= cfg.samples_per_suspect as u128 {
        // Full filter: exhausting it proves the conjunction over the universe.
        let instances = enumerate_product(&allowed, &build);
        let (succeeded, budget_hit) = run_filter(engine, &instances)?;
        return Ok(if succeeded {
            SuspectStatus::Refuted
        } else if budget_hit {
            SuspectStatus::Untested
        } else {
            SuspectStatus::Definitive
        });
    }

    // Prototype-fixed filter: constrained parameters pinned, free ones vary.
    let constrained: BTreeMap<usize, &Value> =
        suspect.prototype.iter().map(|(p, v)| (*p, v)).collect();
    let free: Vec<usize> = (0..space.len())
        .filter(|p| !constrained.contains_key(p))
        .collect();
    let free_sizes: Vec<usize> = free.iter().map(|&p| space.param(p).domain.len()).collect();
    let free_product: u128 = free_sizes.iter().map(|&s| s as u128).product();

    let build_free = |choice: &[usize]| -> PipelineInstance {
        let values = (0..space.len())
            .map(|p| match constrained.get(&p) {
                Some(v) => (*v).clone(),
                None => {
                    let fi = free.iter().position(|&q| q == p).unwrap();
                    space.param(p).domain[choice[fi]].clone()
                }
            })
            .collect();
        space.instance(values).expect("domain values")
    };

    let instances: Vec<PipelineInstance> = if free_product <= cfg.samples_per_suspect as u128 {
        let lists: Vec<Vec<usize>> = free_sizes.iter().map(|&s| (0..s).collect()).collect();
        enumerate_product(&lists, &build_free)
    } else {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut out = Vec::new();
        let mut attempts = 0;
        while out.len() < cfg.samples_per_suspect && attempts < cfg.samples_per_suspect * 10 {
            attempts += 1;
            let choice: Vec<usize> = free_sizes.iter().map(|&s| rng.gen_range(0..s)).collect();
            if seen.insert(choice.clone()) {
                out.push(build_free(&choice));
            }
        }
        out
    };
    let (succeeded, budget_hit) = run_filter(engine, &instances)?;
    Ok(if succeeded {
        SuspectStatus::Refuted
    } else if budget_hit {
        SuspectStatus::Untested
    } else {
        SuspectStatus::DefinitiveSampled
    })
}

fn enumerate_product(
    lists: &[Vec<usize>],
    build: &dyn Fn(&[usize]) -> PipelineInstance,
) -> Vec<PipelineInstance> {
    let mut out = Vec::new();
    let mut cursor = vec![0usize; lists.len()];
    loop {
        out.push(build(&cursor));
        let mut p = lists.len();
        loop {
            if p == 0 {
                return out;
            }
            p -= 1;
            cursor[p] += 1;
            if cursor[p] < lists[p].len() {
                break;
            }
            cursor[p] = 0;
        }
    }
}

enum Sweep {
    Clean,
    NewFailure,
    Budget,
    TooBig,
}

/// Residual verification for FindAll at desk scale: evaluate every universe
/// instance that no definitive conjunct covers and no cache entry knows. A
/// clean sweep certifies that the definitive conjuncts cover the entire
/// failing set.
fn residual_sweep(
    engine: &Engine,
    definitive: &BTreeMap<Conjunction, bool>,
    cfg: &DdtConfig,
) -> Result<Sweep, EngineError> {
    let space = engine.space();
    let Ok(uni) = Universe::new(space, cfg.universe_cap) else {
        return Ok(Sweep::TooBig);
    };
    let mut covered = BitSet::new(uni.size());
    for conj in definitive.keys() {
        match conjunction_sat(space, &uni, conj) {
            Ok(sat) => covered.union_with(&sat),
            Err(_) => return Ok(Sweep::TooBig),
        }
    }
    let cached: HashSet<usize> = engine
        .provenance()
        .iter()
        .map(|r| uni.index_of(space, &r.instance))
        .collect();
    let targets: Vec<PipelineInstance> = (0..uni.size())
        .filter(|&i| !covered.get(i) && !cached.contains(&i))
        .map(|i| uni.instance_at(space, i))
        .collect();
    if targets.is_empty() {
        return Ok(Sweep::Clean);
    }
    let (found_failure, budget_hit) = {
        let mut budget_hit = false;
        let mut found = false;
        'outer: for chunk in targets.chunks(TEST_CHUNK) {
            for result in engine.evaluate_batch(chunk, "ddt") {
                match result {
                    Ok(Evaluation::Fail) => {
                        found = true;
                        break 'outer;
                    }
                    Ok(Evaluation::Succeed) => {}
                    Err(EngineError::BudgetExhausted) => budget_hit = true,
                    Err(e) => return Err(e),
                }
            }
            if budget_hit {
                break;
            }
        }
        (found, budget_hit)
    };
    Ok(if found_failure {
        Sweep::NewFailure
    } else if budget_hit {
        Sweep::Budget
    } else {
        Sweep::Clean
    })
}

fn snapshot(engine: &Engine) -> Vec<(PipelineInstance, Evaluation)> {
    engine
        .provenance()
        .into_iter()
        .map(|r| (r.instance, r.evaluation))
        .collect()
}

/// The rebuild loop. FindOne stops at the first definitive conjunct; FindAll
/// runs until the suspect set is definitive and stable across a rebuild, then
/// verifies the residue of the universe before emitting.
pub fn ddt_search(engine: &Engine, cfg: &DdtConfig) -> Result<DdtReport, DdtError> {
    let space = engine.space();
    let start_executed = engine.executed_count();
    if !snapshot(engine).iter().any(|(_, e)| *e == Evaluation::Fail) {
        return Err(DdtError::NoFailingInstance);
    }
    let mut rng = Pcg64Mcg::seed_from_u64(cfg.seed);
    let mut rebuilds = 0usize;
    let mut budget_exhausted = false;
    // Proven facts survive rebuilds; the flag records full-filter proof.
    let mut definitive: BTreeMap<Conjunction, bool> = BTreeMap::new();
    let mut prev_suspects: Option<BTreeSet<Conjunction>> = None;

    loop {
        let records = snapshot(engine);
        let tree = build_tree(&records, space);
        let mut suspects = extract_suspects(&tree, space);
        let suspect_set: BTreeSet<Conjunction> =
            suspects.iter().map(|s| s.conjunction.clone()).collect();

        let mut refuted = false;
        for suspect in &mut suspects {
            let status = test_suspect(engine, suspect, cfg, &mut rng)?;
            suspect.status = status;
            match status {
                SuspectStatus::Refuted => {
                    refuted = true;
                    break;
                }
                SuspectStatus::Definitive => {
                    definitive.insert(suspect.conjunction.clone(), true);
                }
                SuspectStatus::DefinitiveSampled => {
                    definitive
                        .entry(suspect.conjunction.clone())
                        .or_insert(false);
                }
                SuspectStatus::Untested => {
                    budget_exhausted = true;
                    break;
                }
            }
            if cfg.goal == Goal::FindOne {
                return Ok(finalize(
                    engine,
                    space,
                    [(
                        suspect.conjunction.clone(),
                        status == SuspectStatus::Definitive,
                    )]
                    .into_iter()
                    .collect(),
                    start_executed,
                    rebuilds,
                    false,
                ));
            }
        }

        if budget_exhausted {
            return Ok(finalize(
                engine,
                space,
                definitive,
                start_executed,
                rebuilds,
                true,
            ));
        }
        if refuted {
            // All suspects from this tree are discarded; rebuild from the
            // enlarged history.
            rebuilds += 1;
            prev_suspects = None;
            continue;
        }

        if prev_suspects.as_ref() == Some(&suspect_set) {
            match residual_sweep(engine, &definitive, cfg)? {
                Sweep::NewFailure => {
                    rebuilds += 1;
                    prev_suspects = None;
                    continue;
                }
                Sweep::Budget => {
                    return Ok(finalize(
                        engine,
                        space,
                        definitive,
                        start_executed,
                        rebuilds,
                        true,
                    ));
                }
                Sweep::Clean | Sweep::TooBig => {
                    return Ok(finalize(
                        engine,
                        space,
                        definitive,
                        start_executed,
                        rebuilds,
                        false,
                    ));
                }
            }
        }
        prev_suspects = Some(suspect_set);
        rebuilds += 1;
    }
}

fn finalize(
    engine: &Engine,
    space: &ParameterSpace,
    definitive: BTreeMap<Conjunction, bool>,
    start_executed: usize,
    rebuilds: usize,
    budget_exhausted: bool,
) -> DdtReport {
    let proven = definitive.values().all(|&p| p);
    let dnf = CauseDnf::from_conjuncts(definitive.into_keys().filter(|c| !c.is_empty()));
    let causes = minimize(&dnf, space);
    DdtReport {
        causes,
        executions_used: engine.executed_count() - start_executed,
        rebuilds,
        budget_exhausted,
        proven,
    }
}
