//! Black-box evaluation of pipeline instances with caching, budget
//! accounting, provenance logging, and parallel dispatch.
//!
//! The engine serializes all bookkeeping through one lock; backend runs happen
//! outside it. Batch results are committed in input order, so cache state,
//! provenance sequence numbers, and the executed count are identical whatever
//! the worker count — only wall-clock changes.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{Evaluation, Origin, ParameterSpace, PipelineInstance, ProvenanceRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("execution budget exhausted")]
    BudgetExhausted,
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("replay table has no entry for instance {0}")]
    ReplayMiss(String),
    #[error("inconsistent history: instance {0} recorded as both succeed and fail")]
    InconsistentHistory(String),
}

/// Rule deciding SUCCEED from a finished command.
#[derive(Debug, Clone)]
pub enum SuccessRule {
    ExitCodeZero,
    /// Extract a real number from stdout via `pattern` (first capture group if
    /// present, whole match otherwise) and compare it against `bound`.
    Threshold {
        pattern: regex::Regex,
        comparator: crate::model::Comparator,
        bound: f64,
    },
}

/// External command template. Each argv element may contain `{param}`
/// placeholders, substituted with canonical value text into an argument
/// vector (never a shell string).
#[derive(Debug, Clone)]
pub struct CommandBackend {
    pub argv: Vec<String>,
    pub success_rule: SuccessRule,
    /// Zero means no timeout.
    pub timeout: Duration,
    /// Treat a timeout as a FAIL evaluation instead of a backend failure.
    pub timeout_is_fail: bool,
}

impl CommandBackend {
    pub fn new(
        argv: Vec<String>,
        success_rule: SuccessRule,
        space: &ParameterSpace,
    ) -> Result<CommandBackend, EngineError> {
        if argv.is_empty() {
            return Err(EngineError::BackendFailure("empty command template".into()));
        }
        for arg in &argv {
            let mut rest = arg.as_str();
            while let Some(start) = rest.find('{') {
                let Some(end) = rest[start..].find('}') else {
                    return Err(EngineError::BackendFailure(format!(
                        "unbalanced placeholder in `{arg}`"
                    )));
                };
                let name = &rest[start + 1..start + end];
                if space.param_index(name).is_none() {
                    return Err(EngineError::BackendFailure(format!(
                        "placeholder `{{{name}}}` does not name a declared parameter"
                    )));
                }
                rest = &rest[start + end + 1..];
            }
        }
        Ok(CommandBackend {
            argv,
            success_rule,
            timeout: Duration::ZERO,
            timeout_is_fail: false,
        })
    }
}

pub type OraclePredicate = Arc<dyn Fn(&PipelineInstance) -> bool + Send + Sync>;

/// In-process ground-truth oracle: FAIL iff the instance satisfies any
/// conjunct of `cause` (or the predicate, when given). `delay` simulates
/// pipeline latency.
#[derive(Clone)]
pub struct OracleBackend {
    pub cause: crate::model::CauseDnf,
    pub predicate: Option<OraclePredicate>,
    pub delay: Duration,
}

impl OracleBackend {
    pub fn new(cause: crate::model::CauseDnf) -> OracleBackend {
        OracleBackend {
            cause,
            predicate: None,
            delay: Duration::ZERO,
        }
    }
}

impl fmt::Debug for OracleBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleBackend")
            .field("cause", &self.cause)
            .field("predicate", &self.predicate.as_ref().map(|_| "<fn>"))
            .field("delay", &self.delay)
            .finish()
    }
}

/// Fixed provenance table; a lookup miss is an error, never an evaluation.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    pub table: HashMap<PipelineInstance, Evaluation>,
}

#[derive(Debug, Clone)]
pub enum PipelineBackend {
    Command(CommandBackend),
    Oracle(OracleBackend),
    Replay(ReplayBackend),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    pub budget: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            budget: None,
        }
    }
}

#[derive(Default)]
struct Inner {
    cache: HashMap<PipelineInstance, Evaluation>,
    in_flight: HashSet<PipelineInstance>,
    provenance: Vec<ProvenanceRecord>,
    executed: usize,
    next_seq: u64,
}

impl Inner {
    fn record(
        &mut self,
        instance: &PipelineInstance,
        evaluation: Evaluation,
        origin: Origin,
        generator: &str,
    ) {
        self.cache.insert(instance.clone(), evaluation);
        self.provenance.push(ProvenanceRecord {
            instance: instance.clone(),
            evaluation,
            origin,
            generator: generator.to_string(),
            seq: self.next_seq,
        });
        self.next_seq += 1;
    }
}

/// Shared-mutable engine state: concurrent `evaluate` calls are safe, and
/// provenance append plus counter update are atomic with cache insertion.
pub struct Engine {
    space: Arc<ParameterSpace>,
    backend: PipelineBackend,
    config: EngineConfig,
    inner: Mutex<Inner>,
    done: Condvar,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

enum Slot {
    Ready(Result<(Evaluation, bool), EngineError>),
    Run(usize),
    Alias(usize),
    Foreign,
}

impl Engine {
    pub fn new(space: ParameterSpace, backend: PipelineBackend, config: EngineConfig) -> Engine {
        assert!(config.workers >= 1, "workers must be >= 1");
        #[cfg(feature = "parallel")]
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .expect("failed to build worker pool"),
            )
        } else {
            None
        };
        Engine {
            space: Arc::new(space),
            backend,
            config,
            inner: Mutex::new(Inner::default()),
            done: Condvar::new(),
            #[cfg(feature = "parallel")]
            pool,
        }
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn workers(&self) -> usize {
        self.config.workers
    }

    pub fn budget(&self) -> Option<usize> {
        self.config.budget
    }

    /// Number of backend runs so far; cache hits and seeded history are free.
    pub fn executed_count(&self) -> usize {
        self.inner.lock().unwrap().executed
    }

    pub fn provenance(&self) -> Vec<ProvenanceRecord> {
        self.inner.lock().unwrap().provenance.clone()
    }

    pub fn cached(&self, instance: &PipelineInstance) -> Option<Evaluation> {
        self.inner.lock().unwrap().cache.get(instance).copied()
    }

    pub fn cache_size(&self) -> usize {
        self.inner.lock().unwrap().cache.len()
    }

    /// Populate cache and provenance with given history. Seeds never count
    /// against the budget. A duplicate with a conflicting outcome aborts with
    /// an inconsistency error before anything is committed.
    pub fn seed_history(
        &self,
        records: &[(PipelineInstance, Evaluation)],
    ) -> Result<(), EngineError> {
        let mut inner = self.inner.lock().unwrap();
        let mut pending: HashMap<&PipelineInstance, Evaluation> = HashMap::new();
        for (inst, eval) in records {
            if let Some(prev) = inner
                .cache
                .get(inst)
                .copied()
                .or_else(|| pending.get(inst).copied())
            {
                if prev != *eval {
                    return Err(EngineError::InconsistentHistory(inst.canonical()));
                }
            } else {
                pending.insert(inst, *eval);
            }
        }
        for (inst, eval) in records {
            if inner.cache.contains_key(inst) {
                continue;
            }
            inner.record(inst, *eval, Origin::Given, "seed");
        }
        Ok(())
    }

    /// Evaluate one instance; `generator` labels the provenance record when a
    /// backend run happens.
    pub fn evaluate(
        &self,
        instance: &PipelineInstance,
        generator: &str,
    ) -> Result<Evaluation, EngineError> {
        self.evaluate_tracked(instance, generator).map(|(e, _)| e)
    }

    /// Like `evaluate` but also reports whether this call ran the backend.
    pub fn evaluate_tracked(
        &self,
        instance: &PipelineInstance,
        generator: &str,
    ) -> Result<(Evaluation, bool), EngineError> {
        self.eval_many(std::slice::from_ref(instance), generator)
            .pop()
            .expect("one result per instance")
    }

    /// Evaluate a batch; outcomes are in input order and per-instance errors
    /// are reported positionally. Duplicate instances are executed once.
    /// Budget slots are reserved at dispatch in input order, so enforcement
    /// matches a sequential run exactly: in-flight work never overshoots the
    /// budget (well within the documented workers-1 allowance).
    pub fn evaluate_batch(
        &self,
        instances: &[PipelineInstance],
        generator: &str,
    ) -> Vec<Result<Evaluation, EngineError>> {
        self.eval_many(instances, generator)
            .into_iter()
            .map(|r| r.map(|(e, _)| e))
            .collect()
    }

    fn eval_many(
        &self,
        instances: &[PipelineInstance],
        generator: &str,
    ) -> Vec<Result<(Evaluation, bool), EngineError>> {
        let mut plan: Vec<Slot> = Vec::with_capacity(instances.len());
        let mut runs: Vec<PipelineInstance> = Vec::new();
        {
            let mut inner = self.inner.lock().unwrap();
            let mut first_pos: HashMap<&PipelineInstance, usize> = HashMap::new();
            for instance in instances {
                debug_assert_eq!(instance.values().len(), self.space.len());
                if let Some(&eval) = inner.cache.get(instance) {
                    plan.push(Slot::Ready(Ok((eval, false))));
                } else if let Some(&run_idx) = first_pos.get(instance) {
                    plan.push(Slot::Alias(run_idx));
                } else if inner.in_flight.contains(instance) {
                    plan.push(Slot::Foreign);
                } else if self
                    .config
                    .budget
                    .is_some_and(|b| inner.executed + inner.in_flight.len() >= b)
                {
                    plan.push(Slot::Ready(Err(EngineError::BudgetExhausted)));
                } else {
                    inner.in_flight.insert(instance.clone());
                    first_pos.insert(instance, runs.len());
                    plan.push(Slot::Run(runs.len()));
                    runs.push(instance.clone());
                }
            }
        }

        let results = self.execute_runs(&runs);

        {
            let mut inner = self.inner.lock().unwrap();
            for (inst, result) in runs.iter().zip(&results) {
                if let Ok(eval) = result {
                    inner.record(inst, *eval, Origin::Generated, generator);
                    inner.executed += 1;
                }
                inner.in_flight.remove(inst);
            }
        }
        self.done.notify_all();

        plan.into_iter()
            .zip(instances)
            .map(|(slot, inst)| match slot {
                Slot::Ready(r) => r,
                Slot::Run(i) => results[i].clone().map(|e| (e, true)),
                Slot::Alias(i) => results[i].clone().map(|e| (e, false)),
                Slot::Foreign => self.await_foreign(inst, generator),
            })
            .collect()
    }

    /// Another caller is already executing this instance: wait for its result,
    /// re-running ourselves only if that execution failed to produce one.
    fn await_foreign(
        &self,
        instance: &PipelineInstance,
        generator: &str,
    ) -> Result<(Evaluation, bool), EngineError> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if let Some(&eval) = inner.cache.get(instance) {
                return Ok((eval, false));
            }
            if !inner.in_flight.contains(instance) {
                if self
                    .config
                    .budget
                    .is_some_and(|b| inner.executed + inner.in_flight.len() >= b)
                {
                    return Err(EngineError::BudgetExhausted);
                }
                inner.in_flight.insert(instance.clone());
                drop(inner);
                let result = self.run_backend(instance);
                let mut inner2 = self.inner.lock().unwrap();
                if let Ok(eval) = &result {
                    inner2.record(instance, *eval, Origin::Generated, generator);
                    inner2.executed += 1;
                }
                inner2.in_flight.remove(instance);
                drop(inner2);
                self.done.notify_all();
                return result.map(|e| (e, true));
            }
            inner = self.done.wait(inner).unwrap();
        }
    }

    #[cfg(feature = "parallel")]
    fn execute_runs(&self, runs: &[PipelineInstance]) -> Vec<Result<Evaluation, EngineError>> {
        match &self.pool {
            Some(pool) if runs.len() > 1 => {
                use rayon::prelude::*;
                pool.install(|| runs.par_iter().map(|i| self.run_backend(i)).collect())
            }
            _ => runs.iter().map(|i| self.run_backend(i)).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn execute_runs(&self, runs: &[PipelineInstance]) -> Vec<Result<Evaluation, EngineError>> {
        runs.iter().map(|i| self.run_backend(i)).collect()
    }

    fn run_backend(&self, instance: &PipelineInstance) -> Result<Evaluation, EngineError> {
        match &self.backend {
            PipelineBackend::Oracle(oracle) => {
                if !oracle.delay.is_zero() {
                    std::thread::sleep(oracle.delay);
                }
                let fails = oracle.cause.satisfied_by(instance, &self.space)
                    || oracle.predicate.as_ref().is_some_and(|p| p(instance));
                Ok(if fails {
                    Evaluation::Fail
                } else {
                    Evaluation::Succeed
                })
            }
            PipelineBackend::Replay(replay) => replay
                .table
                .get(instance)
                .copied()
                .ok_or_else(|| EngineError::ReplayMiss(instance.canonical())),
            PipelineBackend::Command(cmd) => self.run_command(cmd, instance),
        }
    }

    fn run_command(
        &self,
        cmd: &CommandBackend,
        instance: &PipelineInstance,
    ) -> Result<Evaluation, EngineError> {
        let argv: Vec<String> = cmd
            .argv
            .iter()
            .map(|a| self.substitute(a, instance))
            .collect();
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EngineError::BackendFailure(format!("spawn `{}`: {e}", argv[0])))?;

        let mut stdout_pipe = child.stdout.take().expect("stdout piped");
        let mut stderr_pipe = child.stderr.take().expect("stderr piped");
        let out_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout_pipe.read_to_string(&mut buf);
            buf
        });
        let err_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr_pipe.read_to_string(&mut buf);
            buf
        });

        let deadline = (!cmd.timeout.is_zero()).then(|| Instant::now() + cmd.timeout);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    if deadline.is_some_and(|d| Instant::now() >= d) {
                        let _ = child.kill();
                        let _ = child.wait();
                        let _ = out_thread.join();
                        let _ = err_thread.join();
                        return if cmd.timeout_is_fail {
                            Ok(Evaluation::Fail)
                        } else {
                            Err(EngineError::BackendFailure(format!(
                                "command timed out after {:?}",
                                cmd.timeout
                            )))
                        };
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => {
                    return Err(EngineError::BackendFailure(format!("wait: {e}")));
                }
            }
        };
        let stdout = out_thread.join().unwrap_or_default();
        let _stderr = err_thread.join().unwrap_or_default();

        match &cmd.success_rule {
            SuccessRule::ExitCodeZero => Ok(if status.success() {
                Evaluation::Succeed
            } else {
                Evaluation::Fail
            }),
            SuccessRule::Threshold {
                pattern,
                comparator,
                bound,
            } => {
                let caps = pattern.captures(&stdout).ok_or_else(|| {
                    EngineError::BackendFailure(format!(
                        "output did not match extractor `{pattern}`"
                    ))
                })?;
                let text = caps
                    .get(1)
                    .or_else(|| caps.get(0))
                    .map(|m| m.as_str())
                    .unwrap_or_default();
                let score: f64 = text.parse().map_err(|_| {
                    EngineError::BackendFailure(format!("extracted `{text}` is not a number"))
                })?;
                let ord = score.partial_cmp(bound).ok_or_else(|| {
                    EngineError::BackendFailure("extracted value is not comparable".into())
                })?;
                Ok(if comparator.holds(ord) {
                    Evaluation::Succeed
                } else {
                    Evaluation::Fail
                })
            }
        }
    }

    fn substitute(&self, template: &str, instance: &PipelineInstance) -> String {
        let mut out = template.to_string();
        for (idx, p) in self.space.parameters().iter().enumerate() {
            let placeholder = format!("{{{}}}", p.name);
            if out.contains(&placeholder) {
                out = out.replace(&placeholder, &instance.value(idx).canonical());
            }
        }
        out
    }
}

/// Write provenance as CSV: parameter columns in space order plus
/// `evaluation`, `origin`, `generator`, `seq`.
pub fn write_provenance_csv<W: std::io::Write>(
    space: &ParameterSpace,
    records: &[ProvenanceRecord],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = space.parameters().iter().map(|p| p.name.clone()).collect();
    header.extend(["evaluation", "origin", "generator", "seq"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.instance.values().iter().map(|v| v.canonical()).collect();
        row.push(r.evaluation.text().into());
        row.push(r.origin.text().into());
        row.push(r.generator.clone());
        row.push(r.seq.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read provenance CSV written by `write_provenance_csv`.
pub fn read_provenance_csv<R: std::io::Read>(
    space: &ParameterSpace,
    reader: R,
) -> Result<Vec<ProvenanceRecord>, String> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let n = space.len();
    if headers.len() != n + 4 {
        return Err(format!(
            "expected {} columns ({} parameters + evaluation, origin, generator, seq), got {}",
            n + 4,
            n,
            headers.len()
        ));
    }
    for (idx, p) in space.parameters().iter().enumerate() {
        if headers.get(idx) != Some(p.name.as_str()) {
            return Err(format!(
                "column {idx} is `{}`, expected parameter `{}`",
                headers.get(idx).unwrap_or(""),
                p.name
            ));
        }
    }
    let mut records = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        let mut values = Vec::with_capacity(n);
        for idx in 0..n {
            let text = row.get(idx).ok_or("short row")?;
            values.push(space.parse_value(idx, text).map_err(|e| e.to_string())?);
        }
        let instance = space.instance(values).map_err(|e| e.to_string())?;
        let evaluation = Evaluation::parse(row.get(n).ok_or("missing evaluation")?)
            .ok_or_else(|| format!("bad evaluation `{}`", row.get(n).unwrap_or("")))?;
        let origin = Origin::parse(row.get(n + 1).ok_or("missing origin")?)
            .ok_or_else(|| format!("bad origin `{}`", row.get(n + 1).unwrap_or("")))?;
        let generator = row.get(n + 2).ok_or("missing generator")?.to_string();
        let seq: u64 = row
            .get(n + 3)
            .ok_or("missing seq")?
            .parse()
            .map_err(|_| "bad seq".to_string())?;
        records.push(ProvenanceRecord {
            instance,
            evaluation,
            origin,
            generator,
            seq,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn oracle_engine(workers: usize, budget: Option<usize>) -> Engine {
        let space = table1_space();
        let cause = space.parse_dnf("LibraryVersion = 2.0").unwrap();
        Engine::new(
            space,
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig { workers, budget },
        )
    }

    fn table1_seeds(space: &ParameterSpace) -> Vec<(PipelineInstance, Evaluation)> {
        vec![
            (
                inst(space, &["Iris", "LogisticRegression", "1.0"]),
                Evaluation::Succeed,
            ),
            (
                inst(space, &["Digits", "DecisionTree", "1.0"]),
                Evaluation::Succeed,
            ),
            (
                inst(space, &["Iris", "GradientBoosting", "2.0"]),
                Evaluation::Fail,
            ),
        ]
    }

    #[test]
    fn oracle_outcomes_match_cause() {
        let engine = oracle_engine(1, None);
        let space = engine.space().clone();
        let failing = inst(&space, &["Digits", "DecisionTree", "2.0"]);
        let passing = inst(&space, &["Digits", "DecisionTree", "1.0"]);
        assert_eq!(engine.evaluate(&failing, "test").unwrap(), Evaluation::Fail);
        assert_eq!(
            engine.evaluate(&passing, "test").unwrap(),
            Evaluation::Succeed
        );
    }

    #[test]
    fn cache_hits_do_not_recount() {
        let engine = oracle_engine(1, None);
        let space = engine.space().clone();
        let instance = inst(&space, &["Digits", "DecisionTree", "2.0"]);
        let first = engine.evaluate_tracked(&instance, "test").unwrap();
        let second = engine.evaluate_tracked(&instance, "test").unwrap();
        assert_eq!(first.0, second.0);
        assert!(first.1);
        assert!(!second.1);
        assert_eq!(engine.executed_count(), 1);
    }

    #[test]
    fn seeding_fills_cache_without_cost() {
        let engine = oracle_engine(1, None);
        let space = engine.space().clone();
        engine.seed_history(&table1_seeds(&space)).unwrap();
        assert_eq!(engine.cache_size(), 3);
        assert_eq!(engine.executed_count(), 0);
        let records = engine.provenance();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.origin == Origin::Given));
        assert_eq!(
            records.iter().map(|r| r.seq).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );

        engine.seed_history(&[]).unwrap();
        assert_eq!(engine.cache_size(), 3);
    }

    #[test]
    fn conflicting_seed_is_an_inconsistency() {
        let engine = oracle_engine(1, None);
        let space = engine.space().clone();
        let instance = inst(&space, &["Iris", "DecisionTree", "1.0"]);
        let err = engine
            .seed_history(&[
                (instance.clone(), Evaluation::Succeed),
                (instance, Evaluation::Fail),
            ])
            .unwrap_err();
        assert!(matches!(err, EngineError::InconsistentHistory(_)));
    }

    #[test]
    fn batch_counts_distinct_instances() {
        let engine = oracle_engine(5, None);
        let space = engine.space().clone();
        let batch: Vec<PipelineInstance> = [
            ["Iris", "LogisticRegression", "1.0"],
            ["Iris", "DecisionTree", "1.0"],
            ["Iris", "GradientBoosting", "1.0"],
            ["Digits", "LogisticRegression", "1.0"],
            ["Digits", "DecisionTree", "1.0"],
        ]
        .iter()
        .map(|t| inst(&space, t))
        .collect();
        let results = engine.evaluate_batch(&batch, "test");
        assert!(results.iter().all(|r| r.is_ok()));
        assert_eq!(engine.executed_count(), 5);
    }

    #[test]
    fn batch_duplicates_evaluate_once() {
        let engine = oracle_engine(2, None);
        let space = engine.space().clone();
        let a = inst(&space, &["Iris", "DecisionTree", "2.0"]);
        let results = engine.evaluate_batch(&[a.clone(), a.clone()], "test");
        assert_eq!(results.len(), 2);
        assert_eq!(*results[0].as_ref().unwrap(), Evaluation::Fail);
        assert_eq!(*results[1].as_ref().unwrap(), Evaluation::Fail);
        assert_eq!(engine.executed_count(), 1);
    }

    #[test]
    fn batch_outcomes_follow_the_oracle() {
        let space = ParameterSpace::new(vec![
            Parameter {
                name: "A".into(),
                kind: ParamKind::Ordinal,
                domain: vec![Value::Int(0), Value::Int(1)],
            },
            Parameter {
                name: "B".into(),
                kind: ParamKind::Ordinal,
                domain: vec![Value::Int(0), Value::Int(1)],
            },
        ])
        .unwrap();
        let cause = space.parse_dnf("A = 1").unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Oracle(OracleBackend::new(cause)),
            EngineConfig::default(),
        );
        let batch = vec![
            space.instance(vec![Value::Int(1), Value::Int(0)]).unwrap(),
            space.instance(vec![Value::Int(0), Value::Int(0)]).unwrap(),
        ];
        let results: Vec<Evaluation> = engine
            .evaluate_batch(&batch, "test")
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(results, vec![Evaluation::Fail, Evaluation::Succeed]);
    }

    #[test]
    fn budget_limits_new_executions_only() {
        let engine = oracle_engine(1, Some(1));
        let space = engine.space().clone();
        engine.seed_history(&table1_seeds(&space)).unwrap();
        let seeded = inst(&space, &["Iris", "GradientBoosting", "2.0"]);
        assert_eq!(engine.evaluate(&seeded, "test").unwrap(), Evaluation::Fail);

        let fresh1 = inst(&space, &["Digits", "GradientBoosting", "2.0"]);
        let fresh2 = inst(&space, &["Digits", "LogisticRegression", "2.0"]);
        assert!(engine.evaluate(&fresh1, "test").is_ok());
        assert_eq!(
            engine.evaluate(&fresh2, "test").unwrap_err(),
            EngineError::BudgetExhausted
        );
        assert_eq!(engine.executed_count(), 1);
    }

    #[test]
    fn replay_misses_are_errors_not_evaluations() {
        let space = table1_space();
        let known = inst(&space, &["Iris", "LogisticRegression", "1.0"]);
        let unknown = inst(&space, &["Digits", "LogisticRegression", "1.0"]);
        let mut table = HashMap::new();
        table.insert(known.clone(), Evaluation::Succeed);
        let engine = Engine::new(
            space,
            PipelineBackend::Replay(ReplayBackend { table }),
            EngineConfig::default(),
        );
        assert_eq!(
            engine.evaluate(&known, "test").unwrap(),
            Evaluation::Succeed
        );
        assert!(matches!(
            engine.evaluate(&unknown, "test").unwrap_err(),
            EngineError::ReplayMiss(_)
        ));
    }

    #[test]
    fn command_backend_exit_code_rule() {
        let space = ParameterSpace::new(vec![Parameter {
            name: "n".into(),
            kind: ParamKind::Ordinal,
            domain: vec![Value::Int(1), Value::Int(5)],
        }])
        .unwrap();
        let backend = CommandBackend::new(
            vec!["sh".into(), "-c".into(), "test {n} -lt 3".into()],
            SuccessRule::ExitCodeZero,
            &space,
        )
        .unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Command(backend),
            EngineConfig::default(),
        );
        let low = space.instance(vec![Value::Int(1)]).unwrap();
        let high = space.instance(vec![Value::Int(5)]).unwrap();
        assert_eq!(engine.evaluate(&low, "test").unwrap(), Evaluation::Succeed);
        assert_eq!(engine.evaluate(&high, "test").unwrap(), Evaluation::Fail);
    }

    #[test]
    fn command_backend_threshold_rule() {
        let space = ParameterSpace::new(vec![Parameter {
            name: "x".into(),
            kind: ParamKind::Ordinal,
            domain: vec![Value::real(0.2).unwrap(), Value::real(0.9).unwrap()],
        }])
        .unwrap();
        let backend = CommandBackend::new(
            vec!["sh".into(), "-c".into(), "echo score={x}".into()],
            SuccessRule::Threshold {
                pattern: regex::Regex::new(r"score=([0-9.]+)").unwrap(),
                comparator: crate::model::Comparator::Ge,
                bound: 0.6,
            },
            &space,
        )
        .unwrap();
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Command(backend),
            EngineConfig::default(),
        );
        let good = space.instance(vec![Value::real(0.9).unwrap()]).unwrap();
        let bad = space.instance(vec![Value::real(0.2).unwrap()]).unwrap();
        assert_eq!(engine.evaluate(&good, "test").unwrap(), Evaluation::Succeed);
        assert_eq!(engine.evaluate(&bad, "test").unwrap(), Evaluation::Fail);
    }

    #[test]
    fn command_timeout_is_backend_failure_unless_flagged() {
        let space = ParameterSpace::new(vec![Parameter {
            name: "n".into(),
            kind: ParamKind::Ordinal,
            domain: vec![Value::Int(1)],
        }])
        .unwrap();
        let mut backend = CommandBackend::new(
            vec!["sleep".into(), "5".into()],
            SuccessRule::ExitCodeZero,
            &space,
        )
        .unwrap();
        backend.timeout = Duration::from_millis(50);
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Command(backend.clone()),
            EngineConfig::default(),
        );
        let instance = space.instance(vec![Value::Int(1)]).unwrap();
        assert!(matches!(
            engine.evaluate(&instance, "test").unwrap_err(),
            EngineError::BackendFailure(_)
        ));

        backend.timeout_is_fail = true;
        let engine = Engine::new(
            space.clone(),
            PipelineBackend::Command(backend),
            EngineConfig::default(),
        );
        assert_eq!(
            engine.evaluate(&instance, "test").unwrap(),
            Evaluation::Fail
        );
    }

    #[test]
    fn command_placeholders_must_name_parameters() {
        let space = table1_space();
        let err = CommandBackend::new(
            vec!["echo".into(), "{NoSuchParam}".into()],
            SuccessRule::ExitCodeZero,
            &space,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::BackendFailure(_)));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let space = table1_space();
        let all: Vec<PipelineInstance> = {
            let uni = crate::universe::Universe::new(&space, 1000).unwrap();
            uni.iter(&space).collect()
        };
        let run = |workers: usize| {
            let engine = oracle_engine(workers, None);
            let outcomes: Vec<Evaluation> = engine
                .evaluate_batch(&all, "test")
                .into_iter()
                .map(Result::unwrap)
                .collect();
            let seqs: Vec<(String, u64)> = engine
                .provenance()
                .iter()
                .map(|r| (r.instance.canonical(), r.seq))
                .collect();
            (outcomes, engine.executed_count(), seqs)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn provenance_csv_round_trips() {
        let engine = oracle_engine(1, None);
        let space = engine.space().clone();
        engine.seed_history(&table1_seeds(&space)).unwrap();
        engine
            .evaluate(
                &inst(&space, &["Digits", "GradientBoosting", "2.0"]),
                "walk",
            )
            .unwrap();
        let records = engine.provenance();
        let mut buf = Vec::new();
        write_provenance_csv(&space, &records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("Dataset,Estimator,LibraryVersion,evaluation,origin,generator,seq")
        );
        let back = read_provenance_csv(&space, &buf[..]).unwrap();
        assert_eq!(back, records);
    }
}
