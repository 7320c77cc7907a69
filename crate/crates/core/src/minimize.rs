//! DNF simplification over the finite parameter domains. Each parameter is one
//! multi-valued variable; conjuncts become boxes (per-parameter value sets),
//! boxes are expanded to prime implicants against the satisfaction set, and a
//! cover is chosen greedily (essential implicants first, then fewest
//! literals). Value sets are re-expressed in the shortest comparator form.
//!
//! Above the universe cap the semantic route is unavailable and minimization
//! falls back to syntactic subsumption only.

use thiserror::Error;

use crate::model::{CauseDnf, Comparator, Conjunction, ParameterSpace, Triple};
use crate::universe::{
    conjunction_masks, dnf_sat, full_mask, triple_mask, BitSet, Universe, UniverseError,
};

pub const DEFAULT_UNIVERSE_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinimizeError {
    #[error(transparent)]
    Universe(#[from] UniverseError),
}

/// Minimize with the default universe cap.
pub fn minimize(dnf: &CauseDnf, space: &ParameterSpace) -> CauseDnf {
    minimize_with_cap(dnf, space, DEFAULT_UNIVERSE_CAP)
}

/// Semantically minimize `dnf`: the output has the same satisfaction set over
/// the declared universe, no conjunct subsumes another, and the total literal
/// count never exceeds the input's.
pub fn minimize_with_cap(dnf: &CauseDnf, space: &ParameterSpace, cap: usize) -> CauseDnf {
    let Ok(uni) = Universe::new(space, cap) else {
        return syntactic_cleanup(dnf, space);
    };
    match semantic_minimize(dnf, space, &uni) {
        Ok(out) => {
            if out.total_literals() <= dnf.total_literals() {
                out
            } else {
                // Rare: the prime cover spelled the same set less concisely.
                syntactic_cleanup(dnf, space)
            }
        }
        Err(_) => syntactic_cleanup(dnf, space),
    }
}

/// True iff the two DNFs have identical satisfaction sets over the universe.
pub fn equivalent(
    a: &CauseDnf,
    b: &CauseDnf,
    space: &ParameterSpace,
    cap: usize,
) -> Result<bool, MinimizeError> {
    let uni = Universe::new(space, cap)?;
    Ok(dnf_sat(space, &uni, a)? == dnf_sat(space, &uni, b)?)
}

fn semantic_minimize(
    dnf: &CauseDnf,
    space: &ParameterSpace,
    uni: &Universe,
) -> Result<CauseDnf, MinimizeError> {
    let sat = dnf_sat(space, uni, dnf)?;
    if sat.count() == 0 {
        return Ok(CauseDnf::empty());
    }

    // Candidate primes: expand every satisfiable input box to a maximal box
    // inside the satisfaction set. Their union covers every minterm because
    // each input box is contained in its expansion.
    let mut candidates: Vec<Vec<u128>> = Vec::new();
    for conj in dnf.conjuncts() {
        let masks = conjunction_masks(space, conj)?;
        if masks.contains(&0) {
            continue;
        }
        let prime = expand_to_prime(masks, space, uni, &sat);
        if !candidates.contains(&prime) {
            candidates.push(prime);
        }
    }

    let sats: Vec<BitSet> = candidates.iter().map(|masks| box_sat(uni, masks)).collect();

    // Essential candidates: those covering a minterm nothing else covers.
    let mut cover_count = vec![0u32; uni.size()];
    for s in &sats {
        for idx in s.ones() {
            cover_count[idx] += 1;
        }
    }
    let mut selected: Vec<usize> = Vec::new();
    for (i, s) in sats.iter().enumerate() {
        if s.ones().any(|idx| cover_count[idx] == 1) {
            selected.push(i);
        }
    }

    let literal_count = |masks: &Vec<u128>| -> usize {
        (0..space.len())
            .map(|p| mask_cost(space, p, masks[p]))
            .sum()
    };
    let render = |masks: &Vec<u128>| -> Conjunction { masks_to_conjunction(space, masks) };

    let mut covered = BitSet::new(uni.size());
    for &i in &selected {
        covered.union_with(&sats[i]);
    }

    // Greedy remainder: fewest-literal candidates first, ties by the
    // canonical serialization of their conjunction form.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_cached_key(|&i| {
        (
            literal_count(&candidates[i]),
            space.conjunction_text(&render(&candidates[i])),
        )
    });
    while !sat.is_subset(&covered) {
        let mut advanced = false;
        for &i in &order {
            if selected.contains(&i) {
                continue;
            }
            if sats[i].ones().any(|idx| sat.get(idx) && !covered.get(idx)) {
                selected.push(i);
                covered.union_with(&sats[i]);
                advanced = true;
                break;
            }
        }
        assert!(advanced, "candidates must cover the satisfaction set");
    }

    // Irredundancy: drop any selected prime whose coverage the others already
    // provide, largest first, until stable. Keeps minimize idempotent.
    loop {
        let mut drop_order: Vec<usize> = (0..selected.len()).collect();
        drop_order.sort_by_cached_key(|&si| {
            let i = selected[si];
            (
                usize::MAX - literal_count(&candidates[i]),
                space.conjunction_text(&render(&candidates[i])),
            )
        });
        let mut dropped = None;
        for si in drop_order {
            let mut rest = BitSet::new(uni.size());
            for (sj, &j) in selected.iter().enumerate() {
                if sj != si {
                    rest.union_with(&sats[j]);
                }
            }
            if sats[selected[si]].is_subset(&rest) {
                dropped = Some(si);
                break;
            }
        }
        match dropped {
            Some(si) => {
                selected.remove(si);
            }
            None => break,
        }
    }

    Ok(CauseDnf::from_conjuncts(
        selected.iter().map(|&i| render(&candidates[i])),
    ))
}

/// Grow the box one value at a time while it stays inside `sat`, to fixpoint.
fn expand_to_prime(
    mut masks: Vec<u128>,
    space: &ParameterSpace,
    uni: &Universe,
    sat: &BitSet,
) -> Vec<u128> {
    let mut changed = true;
    while changed {
        changed = false;
        for p in 0..space.len() {
            for di in 0..space.param(p).domain.len() {
                if masks[p] >> di & 1 == 1 {
                    continue;
                }
                let mut slice = masks.clone();
                slice[p] = 1 << di;
                let escaped = uni.for_each_in_box(&slice, |idx| !sat.get(idx));
                if !escaped {
                    masks[p] |= 1 << di;
                    changed = true;
                }
            }
        }
    }
    masks
}

fn box_sat(uni: &Universe, masks: &[u128]) -> BitSet {
    let mut bits = BitSet::new(uni.size());
    uni.for_each_in_box(masks, |idx| {
        bits.set(idx);
        false
    });
    bits
}

/// Fewest triples needed to express `mask` on parameter `p`.
fn mask_cost(space: &ParameterSpace, p: usize, mask: u128) -> usize {
    if mask == full_mask(space, p) {
        return 0;
    }
    let n = space.param(p).domain.len();
    let count = mask.count_ones() as usize;
    if count == 1 {
        return 1;
    }
    if space.param(p).kind == crate::model::ParamKind::Categorical {
        return n - count;
    }
    let lo = (0..n).find(|&i| mask >> i & 1 == 1).unwrap();
    let hi = (0..n).rfind(|&i| mask >> i & 1 == 1).unwrap();
    let bounds = usize::from(lo > 0) + usize::from(hi < n - 1);
    let holes = (hi - lo + 1) - count;
    bounds + holes
}

/// Shortest comparator form of a box.
fn masks_to_conjunction(space: &ParameterSpace, masks: &[u128]) -> Conjunction {
    let mut conj = Conjunction::empty();
    for (p, &mask) in masks.iter().enumerate() {
        for t in mask_to_triples(space, p, mask) {
            conj.insert(t);
        }
    }
    conj
}

fn mask_to_triples(space: &ParameterSpace, p: usize, mask: u128) -> Vec<Triple> {
    if mask == full_mask(space, p) {
        return Vec::new();
    }
    let param = space.param(p);
    let n = param.domain.len();
    let name = param.name.clone();
    let make = |cmp: Comparator, di: usize| {
        space
            .triple(&name, cmp, param.domain[di].clone())
            .expect("domain value with kind-valid comparator")
    };
    let count = mask.count_ones() as usize;
    if count == 1 {
        let di = (0..n).find(|&i| mask >> i & 1 == 1).unwrap();
        return vec![make(Comparator::Eq, di)];
    }
    if param.kind == crate::model::ParamKind::Categorical {
        return (0..n)
            .filter(|&i| mask >> i & 1 == 0)
            .map(|i| make(Comparator::Ne, i))
            .collect();
    }
    let lo = (0..n).find(|&i| mask >> i & 1 == 1).unwrap();
    let hi = (0..n).rfind(|&i| mask >> i & 1 == 1).unwrap();
    let mut out = Vec::new();
    if lo > 0 {
        out.push(make(Comparator::Ge, lo));
    }
    if hi < n - 1 {
        out.push(make(Comparator::Le, hi));
    }
    for i in lo + 1..hi {
        if mask >> i & 1 == 0 {
            out.push(make(Comparator::Ne, i));
        }
    }
    out
}

/// Syntactic-only cleanup: drop triples implied by co-triples on the same
/// parameter, drop unsatisfiable conjuncts, and drop conjuncts whose triple
/// set contains another conjunct's.
pub fn syntactic_cleanup(dnf: &CauseDnf, space: &ParameterSpace) -> CauseDnf {
    let mut cleaned: Vec<Conjunction> = Vec::new();
    'conjuncts: for conj in dnf.conjuncts() {
        let mut triples: Vec<Triple> = conj.triples().cloned().collect();
        let maskable = conj
            .triples()
            .all(|t| space.param(t.param()).domain.len() <= crate::universe::MAX_MASK_DOMAIN);
        if maskable {
            // Unsatisfiable on some parameter: the conjunct contributes nothing.
            if let Ok(masks) = conjunction_masks(space, conj) {
                if masks.contains(&0) {
                    continue 'conjuncts;
                }
            }
            // Drop any triple whose removal leaves the same per-parameter set.
            let mut i = 0;
            while i < triples.len() {
                let t = triples[i].clone();
                let p = t.param();
                let others: u128 = triples
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != i && o.param() == p)
                    .map(|(_, o)| triple_mask(space, o).expect("maskable"))
                    .fold(full_mask(space, p), |acc, m| acc & m);
                let own = triple_mask(space, &t).expect("maskable");
                if others & own == others {
                    triples.remove(i);
                } else {
                    i += 1;
                }
            }
        }
        cleaned.push(Conjunction::from_triples(triples));
    }
    let dominated: Vec<bool> = cleaned
        .iter()
        .map(|c| cleaned.iter().any(|other| other != c && other.subset_of(c)))
        .collect();
    CauseDnf::from_conjuncts(
        cleaned
            .into_iter()
            .zip(dominated)
            .filter(|(_, dom)| !dom)
            .map(|(c, _)| c),
    )
}
