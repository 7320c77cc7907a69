//! Data model for parameter spaces, pipeline instances, evaluations, and
//! root-cause expressions (triples, conjunctions, DNFs), plus the satisfaction
//! semantics connecting them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("invalid parameter name `{0}`: must be a non-empty token without whitespace")]
    InvalidParameterName(String),
    #[error("parameter `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("parameter `{0}` has duplicate domain value `{1}`")]
    DuplicateDomainValue(String, String),
    #[error("parameter `{0}` mixes value types in its domain")]
    MixedDomain(String),
    #[error("ordinal numeric domain of `{0}` must be strictly increasing")]
    UnorderedDomain(String),
    #[error("invalid value `{0}`: {1}")]
    InvalidValue(String, String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("value `{1}` is not in the domain of parameter `{0}`")]
    ValueNotInDomain(String, String),
    #[error("comparator `{1}` is not valid for categorical parameter `{0}`")]
    OrdinalComparatorOnCategorical(String, String),
    #[error("instance is missing an assignment for parameter `{0}`")]
    MissingAssignment(String),
    #[error("instance assigns unknown parameter `{0}`")]
    ExtraAssignment(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Parameter kind: ordinal domains carry a total order, categorical domains
/// support only equality and inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Ordinal,
    Categorical,
}

/// A tagged scalar value with a canonical text form. Reals are kept finite and
/// `-0.0` is normalized so instances hash and compare deterministically.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn real(x: f64) -> Result<Value, ModelError> {
        if !x.is_finite() {
            return Err(ModelError::InvalidValue(
                x.to_string(),
                "real values must be finite".into(),
            ));
        }
        Ok(Value::Real(if x == 0.0 { 0.0 } else { x }))
    }

    pub fn text(s: impl Into<String>) -> Result<Value, ModelError> {
        let s = s.into();
        if s.is_empty() || s.contains('\n') || s.contains(" AND ") || s.contains(" OR ") {
            return Err(ModelError::InvalidValue(
                s,
                "text values must be non-empty and free of newlines, ` AND `, ` OR `".into(),
            ));
        }
        Ok(Value::Text(s))
    }

    /// Canonical text form. Reals always carry a decimal point so they never
    /// collide with integers of the same magnitude.
    pub fn canonical(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Real(x) => {
                if x.fract() == 0.0 && x.abs() < 1e15 {
                    format!("{x:.1}")
                } else {
                    format!("{x}")
                }
            }
            Value::Text(s) => s.clone(),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Real(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Int(i) => i.hash(state),
            Value::Real(x) => x.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub domain: Vec<Value>,
}

/// The declared parameters with their kinds and finite value domains.
/// Parameter order is significant: it fixes instance layout, serialization
/// column order, and the default walk order.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    parameters: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParameterSpace {
    pub fn new(parameters: Vec<Parameter>) -> Result<ParameterSpace, ModelError> {
        let mut by_name = HashMap::new();
        for (idx, p) in parameters.iter().enumerate() {
            if p.name.is_empty() || p.name.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidParameterName(p.name.clone()));
            }
            if by_name.insert(p.name.clone(), idx).is_some() {
                return Err(ModelError::DuplicateParameter(p.name.clone()));
            }
            if p.domain.is_empty() {
                return Err(ModelError::EmptyDomain(p.name.clone()));
            }
            let mut texts = BTreeSet::new();
            for v in &p.domain {
                match v {
                    Value::Real(x) if !x.is_finite() => {
                        return Err(ModelError::InvalidValue(
                            x.to_string(),
                            "real values must be finite".into(),
                        ))
                    }
                    Value::Text(s) => {
                        Value::text(s.clone())?;
                    }
                    _ => {}
                }
                if v.tag() != p.domain[0].tag() {
                    return Err(ModelError::MixedDomain(p.name.clone()));
                }
                if !texts.insert(v.canonical()) {
                    return Err(ModelError::DuplicateDomainValue(
                        p.name.clone(),
                        v.canonical(),
                    ));
                }
            }
            // Numeric ordinal domains must be declared in their natural order so
            // that declared order and value order coincide.
            if p.kind == ParamKind::Ordinal && !matches!(p.domain[0], Value::Text(_)) {
                for w in p.domain.windows(2) {
                    if w[0].cmp(&w[1]) != std::cmp::Ordering::Less {
                        return Err(ModelError::UnorderedDomain(p.name.clone()));
                    }
                }
            }
        }
        Ok(ParameterSpace {
            parameters,
            by_name,
        })
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn param(&self, idx: usize) -> &Parameter {
        &self.parameters[idx]
    }

    pub fn domain_index(&self, param: usize, value: &Value) -> Option<usize> {
        self.parameters[param]
            .domain
            .iter()
            .position(|v| v == value)
    }

    /// Number of complete assignments, if it fits in u128.
    pub fn universe_size(&self) -> Option<u128> {
        let mut n: u128 = 1;
        for p in &self.parameters {
            n = n.checked_mul(p.domain.len() as u128)?;
        }
        Some(n)
    }

    /// Build an instance from values listed in declaration order.
    pub fn instance(&self, values: Vec<Value>) -> Result<PipelineInstance, ModelError> {
        if values.len() != self.parameters.len() {
            return Err(ModelError::MissingAssignment(
                self.parameters
                    .get(values.len())
                    .map(|p| p.name.clone())
                    .unwrap_or_else(|| "<extra>".into()),
            ));
        }
        for (idx, v) in values.iter().enumerate() {
            if self.domain_index(idx, v).is_none() {
                return Err(ModelError::ValueNotInDomain(
                    self.parameters[idx].name.clone(),
                    v.canonical(),
                ));
            }
        }
        Ok(PipelineInstance { values })
    }

    /// Build an instance from a name-to-value map; the map must cover every
    /// declared parameter exactly.
    pub fn instance_from_map(
        &self,
        assignments: &BTreeMap<String, Value>,
    ) -> Result<PipelineInstance, ModelError> {
        for name in assignments.keys() {
            if !self.by_name.contains_key(name) {
                return Err(ModelError::ExtraAssignment(name.clone()));
            }
        }
        let mut values = Vec::with_capacity(self.parameters.len());
        for p in &self.parameters {
            match assignments.get(&p.name) {
                Some(v) => values.push(v.clone()),
                None => return Err(ModelError::MissingAssignment(p.name.clone())),
            }
        }
        self.instance(values)
    }

    /// Parse a canonical value text against a parameter's domain.
    pub fn parse_value(&self, param: usize, text: &str) -> Result<Value, ModelError> {
        self.parameters[param]
            .domain
            .iter()
            .find(|v| v.canonical() == text)
            .cloned()
            .ok_or_else(|| {
                ModelError::ValueNotInDomain(self.parameters[param].name.clone(), text.into())
            })
    }

    pub fn triple(
        &self,
        param_name: &str,
        comparator: Comparator,
        value: Value,
    ) -> Result<Triple, ModelError> {
        let param = self
            .param_index(param_name)
            .ok_or_else(|| ModelError::UnknownParameter(param_name.into()))?;
        if self.parameters[param].kind == ParamKind::Categorical && comparator.is_ordinal() {
            return Err(ModelError::OrdinalComparatorOnCategorical(
                param_name.into(),
                comparator.text().into(),
            ));
        }
        if self.domain_index(param, &value).is_none() {
            return Err(ModelError::ValueNotInDomain(
                param_name.into(),
                value.canonical(),
            ));
        }
        Ok(Triple {
            param,
            comparator,
            value,
        })
    }

    pub fn triple_text(&self, t: &Triple) -> String {
        format!(
            "{} {} {}",
            self.parameters[t.param].name,
            t.comparator.text(),
            t.value.canonical()
        )
    }

    pub fn conjunction_text(&self, c: &Conjunction) -> String {
        c.triples()
            .map(|t| self.triple_text(t))
            .collect::<Vec<_>>()
            .join(" AND ")
    }

    pub fn dnf_text(&self, d: &CauseDnf) -> String {
        d.conjuncts()
            .map(|c| self.conjunction_text(c))
            .collect::<Vec<_>>()
            .join("\nOR ")
    }

    /// Parse `<param> <comparator> <value>`; the value is everything after the
    /// comparator token and may contain spaces.
    pub fn parse_triple(&self, text: &str) -> Result<Triple, ModelError> {
        let text = text.trim();
        let (name, rest) = text.split_once(char::is_whitespace).ok_or_else(|| {
            ModelError::Parse(format!("expected `param cmp value`, got `{text}`"))
        })?;
        let rest = rest.trim_start();
        let (cmp_text, value_text) = rest
            .split_once(char::is_whitespace)
            .ok_or_else(|| ModelError::Parse(format!("missing value in `{text}`")))?;
        let comparator = Comparator::parse(cmp_text)
            .ok_or_else(|| ModelError::Parse(format!("unknown comparator `{cmp_text}`")))?;
        let param = self
            .param_index(name)
            .ok_or_else(|| ModelError::UnknownParameter(name.into()))?;
        let value = self.parse_value(param, value_text.trim())?;
        self.triple(name, comparator, value)
    }

    pub fn parse_conjunction(&self, text: &str) -> Result<Conjunction, ModelError> {
        let mut c = Conjunction::empty();
        for part in text.split(" AND ") {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            c.insert(self.parse_triple(part)?);
        }
        Ok(c)
    }

    /// Parse the newline-separated `OR` block form produced by `dnf_text`.
    pub fn parse_dnf(&self, text: &str) -> Result<CauseDnf, ModelError> {
        let mut dnf = CauseDnf::empty();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let line = line.strip_prefix("OR ").unwrap_or(line);
            let conj = self.parse_conjunction(line)?;
            if !conj.is_empty() {
                dnf.insert(conj);
            }
        }
        Ok(dnf)
    }
}

/// A complete parameter-to-value assignment; values are stored in the space's
/// declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PipelineInstance {
    values: Vec<Value>,
}

impl PipelineInstance {
    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn value(&self, param: usize) -> &Value {
        &self.values[param]
    }

    pub fn with_value(&self, param: usize, value: Value) -> PipelineInstance {
        let mut values = self.values.clone();
        values[param] = value;
        PipelineInstance { values }
    }

    /// Canonical single-line form used for cache keys and diagnostics.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(Value::canonical)
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// True iff the two instances differ on every parameter.
pub fn disjoint(a: &PipelineInstance, b: &PipelineInstance) -> bool {
    hamming(a, b) == a.values.len()
}

/// Number of parameters on which the two instances differ.
pub fn hamming(a: &PipelineInstance, b: &PipelineInstance) -> usize {
    assert_eq!(
        a.values.len(),
        b.values.len(),
        "instances from different spaces"
    );
    a.values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x != y)
        .count()
}

/// Binary evaluation outcome of a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Evaluation {
    Succeed,
    Fail,
}

impl Evaluation {
    pub fn text(self) -> &'static str {
        match self {
            Evaluation::Succeed => "succeed",
            Evaluation::Fail => "fail",
        }
    }

    pub fn parse(s: &str) -> Option<Evaluation> {
        match s {
            "succeed" => Some(Evaluation::Succeed),
            "fail" => Some(Evaluation::Fail),
            _ => None,
        }
    }
}

/// Comparators, ordered by canonical preference (`=` first) so semantically
/// tied forms pick the equality spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparator {
    Eq,
    Ne,
    Le,
    Lt,
    Gt,
    Ge,
}

impl Comparator {
    pub fn text(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Comparator> {
        match s {
            "=" => Some(Comparator::Eq),
            "!=" => Some(Comparator::Ne),
            "<=" => Some(Comparator::Le),
            "<" => Some(Comparator::Lt),
            ">" => Some(Comparator::Gt),
            ">=" => Some(Comparator::Ge),
            _ => None,
        }
    }

    /// Comparators that require an ordered domain.
    pub fn is_ordinal(self) -> bool {
        !matches!(self, Comparator::Eq | Comparator::Ne)
    }

    pub fn holds(self, lhs: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            Comparator::Eq => lhs == Equal,
            Comparator::Ne => lhs != Equal,
            Comparator::Le => lhs != Greater,
            Comparator::Lt => lhs == Less,
            Comparator::Gt => lhs == Greater,
            Comparator::Ge => lhs != Less,
        }
    }
}

/// A parameter-comparator-value atom. Construct through
/// [`ParameterSpace::triple`], which enforces comparator/kind compatibility
/// and domain membership.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    param: usize,
    comparator: Comparator,
    value: Value,
}

impl Triple {
    pub fn param(&self) -> usize {
        self.param
    }

    pub fn comparator(&self) -> Comparator {
        self.comparator
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    /// Whether the comparator holds between the instance's value and this
    /// triple's value. Ordinal comparisons use domain order.
    pub fn holds(&self, instance: &PipelineInstance, space: &ParameterSpace) -> bool {
        let lhs = instance.value(self.param);
        if self.comparator.is_ordinal() {
            let li = space
                .domain_index(self.param, lhs)
                .expect("instance value outside domain");
            let ri = space
                .domain_index(self.param, &self.value)
                .expect("triple value outside domain");
            self.comparator.holds(li.cmp(&ri))
        } else {
            self.comparator.holds(if lhs == &self.value {
                std::cmp::Ordering::Equal
            } else {
                std::cmp::Ordering::Greater
            })
        }
    }
}

/// A set of triples interpreted as their conjunction. The container is
/// permissive: stacked unions may hold conflicting equality triples for the
/// same parameter, which the sanity scan and the minimizer resolve downstream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conjunction {
    triples: BTreeSet<Triple>,
}

impl Conjunction {
    pub fn empty() -> Conjunction {
        Conjunction::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Conjunction {
        Conjunction {
            triples: triples.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, t: Triple) {
        self.triples.insert(t);
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// True iff every triple's comparator holds for the instance. The empty
    /// conjunction is vacuously satisfied.
    pub fn satisfied_by(&self, instance: &PipelineInstance, space: &ParameterSpace) -> bool {
        self.triples.iter().all(|t| t.holds(instance, space))
    }

    /// Triple-set subset test (syntactic, the sense used by minimality).
    pub fn subset_of(&self, other: &Conjunction) -> bool {
        self.triples.is_subset(&other.triples)
    }

    pub fn union(&self, other: &Conjunction) -> Conjunction {
        Conjunction {
            triples: self.triples.union(&other.triples).cloned().collect(),
        }
    }

    pub fn without(&self, t: &Triple) -> Conjunction {
        let mut triples = self.triples.clone();
        triples.remove(t);
        Conjunction { triples }
    }
}

/// A disjunction of conjunctions: the final explanation form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CauseDnf {
    conjuncts: BTreeSet<Conjunction>,
}

impl CauseDnf {
    pub fn empty() -> CauseDnf {
        CauseDnf::default()
    }

    pub fn from_conjuncts(conjuncts: impl IntoIterator<Item = Conjunction>) -> CauseDnf {
        CauseDnf {
            conjuncts: conjuncts.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, c: Conjunction) {
        self.conjuncts.insert(c);
    }

    pub fn conjuncts(&self) -> impl Iterator<Item = &Conjunction> {
        self.conjuncts.iter()
    }

    pub fn len(&self) -> usize {
        self.conjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjuncts.is_empty()
    }

    pub fn satisfied_by(&self, instance: &PipelineInstance, space: &ParameterSpace) -> bool {
        self.conjuncts
            .iter()
            .any(|c| c.satisfied_by(instance, space))
    }

    pub fn total_literals(&self) -> usize {
        self.conjuncts.iter().map(Conjunction::len).sum()
    }
}

/// Where a provenance record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Given,
    Generated,
}

impl Origin {
    pub fn text(self) -> &'static str {
        match self {
            Origin::Given => "given",
            Origin::Generated => "generated",
        }
    }

    pub fn parse(s: &str) -> Option<Origin> {
        match s {
            "given" => Some(Origin::Given),
            "generated" => Some(Origin::Generated),
            _ => None,
        }
    }
}

/// One executed (or given) instance with its outcome and run metadata.
/// Sequence numbers are unique and monotone in creation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceRecord {
    pub instance: PipelineInstance,
    pub evaluation: Evaluation,
    pub origin: Origin,
    pub generator: String,
    pub seq: u64,
}
