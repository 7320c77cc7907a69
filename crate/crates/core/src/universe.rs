//! Finite-universe enumeration: mixed-radix indexing of complete assignments,
//! satisfaction bitsets, and per-parameter value masks for triples and
//! conjunctions.

use thiserror::Error;

use crate::model::{CauseDnf, Comparator, Conjunction, ParameterSpace, PipelineInstance, Triple};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UniverseError {
    #[error("universe has {size} assignments, above the cap of {cap}")]
    CapExceeded { size: u128, cap: usize },
    #[error("domain of parameter `{0}` exceeds {1} values")]
    DomainTooLarge(String, usize),
}

pub const MAX_MASK_DOMAIN: usize = 128;

/// Mixed-radix view of all complete assignments of a space.
#[derive(Debug, Clone)]
pub struct Universe {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl Universe {
    pub fn new(space: &ParameterSpace, cap: usize) -> Result<Universe, UniverseError> {
        let size = space
            .universe_size()
            .filter(|&s| s <= cap as u128)
            .ok_or_else(|| UniverseError::CapExceeded {
                size: space.universe_size().unwrap_or(u128::MAX),
                cap,
            })? as usize;
        let radices: Vec<usize> = space.parameters().iter().map(|p| p.domain.len()).collect();
        let mut strides = vec![1usize; radices.len()];
        for i in (0..radices.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }
        Ok(Universe {
            radices,
            strides,
            size,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn index_of(&self, space: &ParameterSpace, instance: &PipelineInstance) -> usize {
        let mut idx = 0;
        for (p, stride) in self.strides.iter().enumerate() {
            let di = space
                .domain_index(p, instance.value(p))
                .expect("instance value outside domain");
            idx += di * stride;
        }
        idx
    }

    pub fn instance_at(&self, space: &ParameterSpace, mut idx: usize) -> PipelineInstance {
        let mut values = Vec::with_capacity(self.radices.len());
        for (p, stride) in self.strides.iter().enumerate() {
            let di = idx / stride;
            idx %= stride;
            values.push(space.param(p).domain[di].clone());
        }
        space.instance(values).expect("indices within domains")
    }

    pub fn iter<'a>(
        &'a self,
        space: &'a ParameterSpace,
    ) -> impl Iterator<Item = PipelineInstance> + 'a {
        (0..self.size).map(move |i| self.instance_at(space, i))
    }

    /// Iterate the universe indices of a box given per-parameter masks.
    /// Stops early when `stop` returns true; returns whether it was stopped.
    pub fn for_each_in_box(&self, masks: &[u128], mut visit: impl FnMut(usize) -> bool) -> bool {
        let lists: Vec<Vec<usize>> = masks
            .iter()
            .enumerate()
            .map(|(p, &m)| (0..self.radices[p]).filter(|&i| m >> i & 1 == 1).collect())
            .collect();
        if lists.iter().any(|l| l.is_empty()) {
            return false;
        }
        let mut cursor = vec![0usize; lists.len()];
        loop {
            let idx: usize = cursor
                .iter()
                .zip(&lists)
                .zip(&self.strides)
                .map(|((&c, list), stride)| list[c] * stride)
                .sum();
            if visit(idx) {
                return true;
            }
            let mut p = lists.len();
            loop {
                if p == 0 {
                    return false;
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

    pub fn box_size(&self, masks: &[u128]) -> u128 {
        masks.iter().map(|m| m.count_ones() as u128).product()
    }
}

/// Fixed-length bitset over universe indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSet {
    words: Vec<u64>,
    len: usize,
}

impl BitSet {
    pub fn new(len: usize) -> BitSet {
        BitSet {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    pub fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &BitSet) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    pub fn is_subset(&self, other: &BitSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(w, o)| w & !o == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }
}

/// Domain-index mask satisfied by a triple over its parameter's domain.
pub fn triple_mask(space: &ParameterSpace, t: &Triple) -> Result<u128, UniverseError> {
    let p = space.param(t.param());
    if p.domain.len() > MAX_MASK_DOMAIN {
        return Err(UniverseError::DomainTooLarge(
            p.name.clone(),
            MAX_MASK_DOMAIN,
        ));
    }
    let pivot = space
        .domain_index(t.param(), t.value())
        .expect("triple value outside domain");
    let mut mask = 0u128;
    for i in 0..p.domain.len() {
        let holds = match t.comparator() {
            Comparator::Eq => i == pivot,
            Comparator::Ne => i != pivot,
            _ => t.comparator().holds(i.cmp(&pivot)),
        };
        if holds {
            mask |= 1 << i;
        }
    }
    Ok(mask)
}

pub fn full_mask(space: &ParameterSpace, param: usize) -> u128 {
    let n = space.param(param).domain.len();
    if n == 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

/// Per-parameter masks of a conjunction (intersection of its triples' masks;
/// unconstrained parameters get the full mask). An all-zero entry means the
/// conjunction is unsatisfiable.
pub fn conjunction_masks(
    space: &ParameterSpace,
    c: &Conjunction,
) -> Result<Vec<u128>, UniverseError> {
    let mut masks: Vec<u128> = (0..space.len()).map(|p| full_mask(space, p)).collect();
    for t in c.triples() {
        masks[t.param()] &= triple_mask(space, t)?;
    }
    Ok(masks)
}

/// Satisfaction bitset of a conjunction over the universe.
pub fn conjunction_sat(
    space: &ParameterSpace,
    uni: &Universe,
    c: &Conjunction,
) -> Result<BitSet, UniverseError> {
    let masks = conjunction_masks(space, c)?;
    let mut bits = BitSet::new(uni.size());
    uni.for_each_in_box(&masks, |idx| {
        bits.set(idx);
        false
    });
    Ok(bits)
}

/// Satisfaction bitset of a DNF over the universe.
pub fn dnf_sat(
    space: &ParameterSpace,
    uni: &Universe,
    d: &CauseDnf,
) -> Result<BitSet, UniverseError> {
    let mut bits = BitSet::new(uni.size());
    for c in d.conjuncts() {
        bits.union_with(&conjunction_sat(space, uni, c)?);
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamKind, Parameter, Value};

    fn small_space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter {
                name: "a".into(),
                kind: ParamKind::Ordinal,
                domain: vec![Value::Int(1), Value::Int(2), Value::Int(3)],
            },
            Parameter {
                name: "b".into(),
                kind: ParamKind::Categorical,
                domain: vec![Value::text("x").unwrap(), Value::text("y").unwrap()],
            },
        ])
        .unwrap()
    }

    #[test]
    fn index_round_trip() {
        let space = small_space();
        let uni = Universe::new(&space, 1000).unwrap();
        assert_eq!(uni.size(), 6);
        for i in 0..uni.size() {
            let inst = uni.instance_at(&space, i);
            assert_eq!(uni.index_of(&space, &inst), i);
        }
    }

    #[test]
    fn masks_and_sat() {
        let space = small_space();
        let uni = Universe::new(&space, 1000).unwrap();
        let conj = space.parse_conjunction("a <= 2 AND b = x").unwrap();
        let sat = conjunction_sat(&space, &uni, &conj).unwrap();
        assert_eq!(sat.count(), 2);
        for inst in uni.iter(&space) {
            let idx = uni.index_of(&space, &inst);
            assert_eq!(sat.get(idx), conj.satisfied_by(&inst, &space));
        }
    }

    #[test]
    fn cap_is_enforced() {
        let space = small_space();
        assert!(matches!(
            Universe::new(&space, 5),
            Err(UniverseError::CapExceeded { .. })
        ));
    }
}
