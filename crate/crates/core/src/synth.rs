//! Synthetic pipelines with planted DNF faults, a brute-force ground-truth
//! enumerator for minimal definitive causes, and the FindOne/FindAll
//! precision, recall, and F-measure metrics.

use std::ops::RangeInclusive;

use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::ddt::Goal;
use crate::model::{
    CauseDnf, Comparator, Conjunction, ParamKind, Parameter, ParameterSpace, PipelineInstance,
    Triple, Value,
};
use crate::universe::{conjunction_masks, dnf_sat, triple_mask, BitSet, Universe, UniverseError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not generate a non-degenerate pipeline after {0} attempts")]
    Degenerate(usize),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error("cannot score an empty pipeline set")]
    EmptyPipelineSet,
}

/// A parameter space with a planted definitive root cause.
#[derive(Debug, Clone)]
pub struct SyntheticPipeline {
    pub space: ParameterSpace,
    pub planted: CauseDnf,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub param_count: RangeInclusive<usize>,
    pub domain_size: RangeInclusive<usize>,
    /// After each conjunct, add another with this probability.
    pub extra_conjunct_prob: f64,
    /// Comparator pool for ordinal parameters; categorical parameters are
    /// restricted to `=` and `!=`.
    pub comparators: Vec<Comparator>,
    /// When set, conjuncts constrain this many parameters instead of a
    /// uniformly sampled non-empty subset.
    pub params_per_conjunct: Option<RangeInclusive<usize>>,
    pub max_conjuncts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            param_count: 3..=15,
            domain_size: 5..=30,
            extra_conjunct_prob: 0.5,
            comparators: vec![
                Comparator::Eq,
                Comparator::Le,
                Comparator::Gt,
                Comparator::Ne,
            ],
            params_per_conjunct: None,
            max_conjuncts: 8,
        }
    }
}

const GENERATE_RETRIES: usize = 64;

/// Generate a synthetic pipeline: parameter kinds are ordinal or categorical
/// with probability 1/2 each, conjuncts sample a parameter subset, one value
/// per chosen parameter, and a comparator from the pool. Degenerate pipelines
/// (all-fail or all-succeed universes) are regenerated from a derived seed.
pub fn generate(seed: u64, cfg: &GeneratorConfig) -> Result<SyntheticPipeline, SynthError> {
    for attempt in 0..GENERATE_RETRIES {
        let attempt_seed = seed.wrapping_add((attempt as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let mut rng = Pcg64Mcg::seed_from_u64(attempt_seed);
        let space = random_space(&mut rng, cfg);
        let planted = match random_cause(&mut rng, &space, cfg) {
            Some(dnf) => dnf,
            None => continue,
        };
        // Non-degenerate: some instance fails (a satisfiable conjunct exists by
        // construction) and some instance succeeds.
        if succeed_witness(&space, &planted, None).is_some() {
            return Ok(SyntheticPipeline {
                space,
                planted,
                seed,
            });
        }
    }
    Err(SynthError::Degenerate(GENERATE_RETRIES))
}

fn random_space(rng: &mut Pcg64Mcg, cfg: &GeneratorConfig) -> ParameterSpace {
    let n_params = rng.gen_range(cfg.param_count.clone());
    let mut params = Vec::with_capacity(n_params);
    for pi in 0..n_params {
        let n_values = rng.gen_range(cfg.domain_size.clone());
        let kind = if rng.gen_bool(0.5) {
            ParamKind::Ordinal
        } else {
            ParamKind::Categorical
        };
        let domain: Vec<Value> = match kind {
            ParamKind::Ordinal => {
                if rng.gen_bool(0.5) {
                    (1..=n_values as i64).map(Value::Int).collect()
                } else {
                    (1..=n_values)
                        .map(|v| Value::real(v as f64).expect("finite"))
                        .collect()
                }
            }
            ParamKind::Categorical => (1..=n_values)
                .map(|v| Value::text(format!("p{}{}", pi + 1, v)).expect("token"))
                .collect(),
        };
        params.push(Parameter {
            name: format!("p{}", pi + 1),
            kind,
            domain,
        });
    }
    ParameterSpace::new(params).expect("generated space is valid")
}

fn random_cause(
    rng: &mut Pcg64Mcg,
    space: &ParameterSpace,
    cfg: &GeneratorConfig,
) -> Option<CauseDnf> {
    let mut dnf = CauseDnf::empty();
    loop {
        let conj = random_conjunct(rng, space, cfg)?;
        dnf.insert(conj);
        if dnf.len() >= cfg.max_conjuncts || !rng.gen_bool(cfg.extra_conjunct_prob) {
            break;
        }
    }
    Some(dnf)
}

fn random_conjunct(
    rng: &mut Pcg64Mcg,
    space: &ParameterSpace,
    cfg: &GeneratorConfig,
) -> Option<Conjunction> {
    'retry: for _ in 0..64 {
        let chosen: Vec<usize> = match &cfg.params_per_conjunct {
            Some(range) => {
                let want = rng.gen_range(range.clone()).min(space.len());
                let mut all: Vec<usize> = (0..space.len()).collect();
                let mut picked = Vec::with_capacity(want);
                for _ in 0..want {
                    picked.push(all.remove(rng.gen_range(0..all.len())));
                }
                picked.sort_unstable();
                picked
            }
            None => {
                let subset: Vec<usize> = (0..space.len()).filter(|_| rng.gen_bool(0.5)).collect();
                if subset.is_empty() {
                    continue 'retry;
                }
                subset
            }
        };
        if chosen.is_empty() {
            continue 'retry;
        }
        let mut conj = Conjunction::empty();
        for p in chosen {
            let param = space.param(p);
            let value = param.domain[rng.gen_range(0..param.domain.len())].clone();
            let pool: Vec<Comparator> = cfg
                .comparators
                .iter()
                .copied()
                .filter(|c| param.kind == ParamKind::Ordinal || !c.is_ordinal())
                .collect();
            if pool.is_empty() {
                continue 'retry;
            }
            let comparator = pool[rng.gen_range(0..pool.len())];
            let triple = space
                .triple(&param.name, comparator, value)
                .expect("sampled from the domain");
            let mask = triple_mask(space, &triple).expect("domains fit masks");
            // A vacuous triple weakens nothing; an empty one kills the
            // conjunct. Resample either way.
            if mask == crate::universe::full_mask(space, p) || mask == 0 {
                continue 'retry;
            }
            conj.insert(triple);
        }
        if conj.is_empty() {
            continue 'retry;
        }
        return Some(conj);
    }
    None
}

/// Find an instance that satisfies no conjunct of `cause`, via backtracking
/// over the parameters in order. With `disjoint_from` set, the instance must
/// also differ from that instance on every parameter.
pub fn succeed_witness(
    space: &ParameterSpace,
    cause: &CauseDnf,
    disjoint_from: Option<&PipelineInstance>,
) -> Option<PipelineInstance> {
    let conjuncts: Vec<&Conjunction> = cause.conjuncts().collect();
    let mut values: Vec<Value> = Vec::with_capacity(space.len());
    if backtrack(space, &conjuncts, disjoint_from, &mut values) {
        Some(space.instance(values).expect("values from domains"))
    } else {
        None
    }
}

fn backtrack(
    space: &ParameterSpace,
    conjuncts: &[&Conjunction],
    disjoint_from: Option<&PipelineInstance>,
    values: &mut Vec<Value>,
) -> bool {
    let p = values.len();
    if p == space.len() {
        let instance = space.instance(values.clone()).expect("complete");
        return conjuncts.iter().all(|c| !c.satisfied_by(&instance, space));
    }
    for v in &space.param(p).domain {
        if disjoint_from.is_some_and(|d| d.value(p) == v) {
            continue;
        }
        values.push(v.clone());
        // Prune: a conjunct fully decided by the assigned prefix and still
        // satisfied dooms every extension.
        let doomed = conjuncts.iter().any(|c| {
            c.triples().all(|t| t.param() < values.len()) && prefix_satisfies(c, space, values)
        });
        if !doomed && backtrack(space, conjuncts, disjoint_from, values) {
            return true;
        }
        values.pop();
    }
    false
}

fn prefix_satisfies(c: &Conjunction, space: &ParameterSpace, values: &[Value]) -> bool {
    c.triples().all(|t| {
        let p = t.param();
        debug_assert!(p < values.len());
        let di = space.domain_index(p, &values[p]).expect("domain value");
        let pivot = space.domain_index(p, t.value()).expect("domain value");
        match t.comparator() {
            Comparator::Eq => di == pivot,
            Comparator::Ne => di != pivot,
            cmp => cmp.holds(di.cmp(&pivot)),
        }
    })
}

/// Find an instance satisfying `conj` (constrained parameters take the first
/// satisfying value, free parameters the first domain value).
pub fn fail_witness(space: &ParameterSpace, conj: &Conjunction) -> Option<PipelineInstance> {
    let masks = conjunction_masks(space, conj).ok()?;
    let mut values = Vec::with_capacity(space.len());
    for (p, mask) in masks.iter().enumerate() {
        let di = (0..space.param(p).domain.len()).find(|&i| mask >> i & 1 == 1)?;
        values.push(space.param(p).domain[di].clone());
    }
    space.instance(values).ok()
}

/// All minimal definitive root causes of the planted oracle, by brute force.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub minimal_causes: Vec<Conjunction>,
}

pub const DEFAULT_LITERAL_BOUND: usize = 4;
pub const DEFAULT_TRUTH_CAP: usize = 1_000_000;

/// Enumerate candidate conjunctions over `{=, <=, >, !=}` up to a literal
/// bound, keep the definitive ones from which no triple can be dropped, and
/// deduplicate semantically equal conjunctions by satisfaction-set identity.
/// The bound rises automatically to the longest planted conjunct.
pub fn enumerate_minimal_causes(
    pipeline: &SyntheticPipeline,
    cap: usize,
) -> Result<GroundTruth, SynthError> {
    let space = &pipeline.space;
    let uni = Universe::new(space, cap)?;
    let fail = dnf_sat(space, &uni, &pipeline.planted)?;
    let bound = DEFAULT_LITERAL_BOUND.max(
        pipeline
            .planted
            .conjuncts()
            .map(Conjunction::len)
            .max()
            .unwrap_or(0),
    );
    let causes = enumerate_minimal_in(space, &uni, &fail, bound)?;
    Ok(GroundTruth {
        minimal_causes: causes,
    })
}

/// Core enumerator against an arbitrary failing set.
pub fn enumerate_minimal_in(
    space: &ParameterSpace,
    uni: &Universe,
    fail: &BitSet,
    literal_bound: usize,
) -> Result<Vec<Conjunction>, SynthError> {
    // Triple pool: skip vacuous (full-mask) and unsatisfiable triples, and
    // deduplicate by mask keeping the preferred comparator spelling.
    let mut pool: Vec<(Triple, usize, u128)> = Vec::new(); // (triple, param, mask)
    for p in 0..space.len() {
        let param = space.param(p);
        let mut seen: Vec<u128> = Vec::new();
        for cmp in [
            Comparator::Eq,
            Comparator::Ne,
            Comparator::Le,
            Comparator::Gt,
        ] {
            if param.kind == ParamKind::Categorical && cmp.is_ordinal() {
                continue;
            }
            for v in &param.domain {
                let t = space
                    .triple(&param.name, cmp, v.clone())
                    .expect("domain value");
                let mask = triple_mask(space, &t)?;
                if mask == 0 || mask == crate::universe::full_mask(space, p) {
                    continue;
                }
                if seen.contains(&mask) {
                    continue;
                }
                seen.push(mask);
                pool.push((t, p, mask));
            }
        }
    }

    let mut found: Vec<(Vec<usize>, Conjunction)> = Vec::new(); // (sorted pool indices, conjunction)
    let mut stack: Vec<usize> = Vec::new();
    let mut masks: Vec<u128> = (0..space.len())
        .map(|p| crate::universe::full_mask(space, p))
        .collect();
    let search = EnumSearch {
        pool: &pool,
        uni,
        fail,
        bound: literal_bound,
    };
    search.run(0, &mut masks, &mut stack, &mut found);

    // Drop non-minimal stragglers (a subset found later in another branch),
    // then deduplicate semantic classes, keeping the canonical representative.
    let mut minimal: Vec<Conjunction> = Vec::new();
    for (idx, (_, c)) in found.iter().enumerate() {
        let has_subset = found
            .iter()
            .enumerate()
            .any(|(j, (_, other))| j != idx && other.subset_of(c) && other != c);
        if !has_subset {
            minimal.push(c.clone());
        }
    }
    let mut classes: Vec<(BitSet, Conjunction)> = Vec::new();
    for c in minimal {
        let sat = crate::universe::conjunction_sat(space, uni, &c)?;
        match classes.iter_mut().find(|(s, _)| *s == sat) {
            Some((_, rep)) => {
                if (c.len(), &c) < (rep.len(), rep) {
                    *rep = c;
                }
            }
            None => classes.push((sat, c)),
        }
    }
    let mut out: Vec<Conjunction> = classes.into_iter().map(|(_, c)| c).collect();
    out.sort();
    Ok(out)
}

struct EnumSearch<'a> {
    pool: &'a [(Triple, usize, u128)],
    uni: &'a Universe,
    fail: &'a BitSet,
    bound: usize,
}

impl EnumSearch<'_> {
    fn run(
        &self,
        start: usize,
        masks: &mut [u128],
        stack: &mut Vec<usize>,
        found: &mut Vec<(Vec<usize>, Conjunction)>,
    ) {
        // Prune whole subtrees that already contain a known minimal cause.
        if found
            .iter()
            .any(|(f, _)| f.iter().all(|i| stack.binary_search(i).is_ok()))
        {
            return;
        }
        if !stack.is_empty() {
            // Definitive: the box is non-empty and sits inside the failing set.
            let nonempty = masks.iter().all(|&m| m != 0);
            if nonempty {
                let escaped = self.uni.for_each_in_box(masks, |idx| !self.fail.get(idx));
                if !escaped {
                    found.push((
                        stack.clone(),
                        Conjunction::from_triples(stack.iter().map(|&i| self.pool[i].0.clone())),
                    ));
                    return;
                }
            }
        }
        if stack.len() == self.bound {
            return;
        }
        for i in start..self.pool.len() {
            let (_, p, mask) = &self.pool[i];
            let old = masks[*p];
            let new = old & mask;
            // Entailed or contradicted on the same parameter: every extension
            // is redundant or unsatisfiable in a way a shorter form covers.
            if new == old || new == 0 {
                continue;
            }
            masks[*p] = new;
            stack.push(i);
            self.run(i + 1, masks, stack, found);
            stack.pop();
            masks[*p] = old;
        }
    }
}

/// Minimal causes built from equality triples only: every partial assignment
/// whose box sits inside the failing set and contains no smaller definitive
/// assignment. Complete for the equality vocabulary.
pub fn enumerate_minimal_equality_causes(
    space: &ParameterSpace,
    uni: &Universe,
    fail: &BitSet,
) -> Vec<Conjunction> {
    let mut found: Vec<Vec<(usize, usize)>> = Vec::new(); // sorted (param, value idx)
    for size in 1..=space.len() {
        let mut assignment: Vec<(usize, usize)> = Vec::new();
        equality_search(space, uni, fail, size, 0, &mut assignment, &mut found);
    }
    found
        .into_iter()
        .map(|pairs| {
            Conjunction::from_triples(pairs.into_iter().map(|(p, di)| {
                space
                    .triple(
                        &space.param(p).name,
                        Comparator::Eq,
                        space.param(p).domain[di].clone(),
                    )
                    .expect("domain value")
            }))
        })
        .collect()
}

fn equality_search(
    space: &ParameterSpace,
    uni: &Universe,
    fail: &BitSet,
    size: usize,
    start: usize,
    assignment: &mut Vec<(usize, usize)>,
    found: &mut Vec<Vec<(usize, usize)>>,
) {
    if found
        .iter()
        .any(|f| f.iter().all(|pv| assignment.contains(pv)))
    {
        return;
    }
    if assignment.len() == size {
        let mut masks: Vec<u128> = (0..space.len())
            .map(|p| crate::universe::full_mask(space, p))
            .collect();
        for &(p, di) in assignment.iter() {
            masks[p] = 1 << di;
        }
        let escaped = uni.for_each_in_box(&masks, |idx| !fail.get(idx));
        if !escaped {
            found.push(assignment.clone());
        }
        return;
    }
    if space.len() - start < size - assignment.len() {
        return;
    }
    for p in start..space.len() {
        for di in 0..space.param(p).domain.len() {
            assignment.push((p, di));
            equality_search(space, uni, fail, size, p + 1, assignment, found);
            assignment.pop();
        }
    }
}

/// Per-pipeline counts under semantic (satisfaction-set) conjunction equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineScore {
    /// |A ∩ R|: asserted semantic classes that are true minimal causes.
    pub matched: usize,
    /// |A|: asserted semantic classes.
    pub asserted: usize,
    /// |R|: true minimal cause classes.
    pub truth: usize,
}

pub fn pipeline_score(
    space: &ParameterSpace,
    asserted: &CauseDnf,
    truth: &[Conjunction],
    cap: usize,
) -> Result<PipelineScore, SynthError> {
    let uni = Universe::new(space, cap)?;
    let mut a_classes: Vec<BitSet> = Vec::new();
    for c in asserted.conjuncts() {
        if c.is_empty() {
            continue;
        }
        let sat = crate::universe::conjunction_sat(space, &uni, c)?;
        if !a_classes.contains(&sat) {
            a_classes.push(sat);
        }
    }
    let mut r_classes: Vec<BitSet> = Vec::new();
    for c in truth {
        let sat = crate::universe::conjunction_sat(space, &uni, c)?;
        if !r_classes.contains(&sat) {
            r_classes.push(sat);
        }
    }
    let matched = a_classes.iter().filter(|s| r_classes.contains(s)).count();
    Ok(PipelineScore {
        matched,
        asserted: a_classes.len(),
        truth: r_classes.len(),
    })
}

/// Aggregate metrics. Counters are kept so scores can be checked in exact
/// rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCard {
    pub mode: Goal,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub executions_used: usize,
    /// FindOne: pipelines where at least one true cause was asserted.
    pub hits: usize,
    /// FindOne: asserted classes that are not true causes, summed.
    pub false_positives: usize,
    /// FindAll: Σ|A ∩ R|, Σ|A|, Σ|R|.
    pub matched_total: usize,
    pub asserted_total: usize,
    pub truth_total: usize,
    pub pipelines: usize,
}

/// The displayed formulas, implemented literally. FindOne counts pipelines
/// (with cause-level false positives added to the precision denominator);
/// FindAll sums intersections over pipelines.
pub fn score(
    per_pipeline: &[PipelineScore],
    mode: Goal,
    executions_used: usize,
) -> Result<ScoreCard, SynthError> {
    if per_pipeline.is_empty() {
        return Err(SynthError::EmptyPipelineSet);
    }
    let ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let hits = per_pipeline.iter().filter(|s| s.matched > 0).count();
    let false_positives: usize = per_pipeline.iter().map(|s| s.asserted - s.matched).sum();
    let matched_total: usize = per_pipeline.iter().map(|s| s.matched).sum();
    let asserted_total: usize = per_pipeline.iter().map(|s| s.asserted).sum();
    let truth_total: usize = per_pipeline.iter().map(|s| s.truth).sum();
    let (precision, recall) = match mode {
        Goal::FindOne => (
            ratio(hits, hits + false_positives),
            ratio(hits, per_pipeline.len()),
        ),
        Goal::FindAll => (
            ratio(matched_total, asserted_total),
            ratio(matched_total, truth_total),
        ),
    };
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ScoreCard {
        mode,
        precision,
        recall,
        f_measure,
        executions_used,
        hits,
        false_positives,
        matched_total,
        asserted_total,
        truth_total,
        pipelines: per_pipeline.len(),
    })
}
