//! Round-trip verification: reconstruct a serialized value by running the emitted code and
//! compare it structurally with a snapshot of the original.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use plaincode_core::emit::render::reconstruction_class;
use plaincode_core::emit::transform::{inline_primitives, outline_helpers, HelperRegistry};
use plaincode_core::emit::{emit_value, EmissionUnit};
use plaincode_core::equality::{deep_equals, Equality, EqualityOptions};
use plaincode_core::recorder::RecorderConfig;
use plaincode_core::testgen::{DiscardEntry, TestGenOptions};
use plaincode_core::wire::parse_trace;
use plaincode_core::CostTable;
use plaincode_lang::{Interpreter, Limits, Snapshot};
use serde::{Deserialize, Serialize};

use crate::corpus::{generate_universe, CorpusOptions, Universe};
use crate::pipeline::{
    analyze, compile_sources, generate, median, reconstruction_db, record, verify_tests, AnalyzeOptions, VerifyReport,
};

pub const RECONSTRUCT_CLASS: &str = "Reconstruct";
pub const RECONSTRUCT_METHOD: &str = "build";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome", rename_all_fields = "camelCase")]
pub enum Outcome {
    Equal,
    Unequal { path: String, detail: String },
    CompileFailed { message: String },
    /// The emitted code compiled but did not produce a value.
    RuntimeFailed { message: String },
    /// Some captured sequence or map was truncated; equality is not claimed.
    Partial { detail: String },
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Equal => "equal",
            Outcome::Unequal { .. } => "unequal",
            Outcome::CompileFailed { .. } => "compileFailed",
            Outcome::RuntimeFailed { .. } => "runtimeFailed",
            Outcome::Partial { .. } => "partial",
        }
    }
}

/// Renders the unit as a class with a static `build()` method.
pub fn reconstruction_source(unit: &EmissionUnit, registry: &HelperRegistry) -> String {
    reconstruction_class(unit, registry, RECONSTRUCT_CLASS, RECONSTRUCT_METHOD)
}

/// Compiles `source` next to the application types, runs it and compares the result with the
/// snapshot of the original value.
pub fn verify_roundtrip(
    types: &[(String, String)],
    original: &Snapshot,
    unit: &EmissionUnit,
    registry: &HelperRegistry,
    opts: EqualityOptions,
) -> Outcome {
    if unit.is_truncated() {
        return Outcome::Partial { detail: "a captured sequence exceeded the capture bound".into() };
    }
    if let Err(e) = unit.check() {
        return Outcome::CompileFailed { message: e.to_string() };
    }
    let mut files = types.to_vec();
    files.push(("reconstruct.mj".into(), reconstruction_source(unit, registry)));
    let program = match compile_sources(&files) {
        Ok(p) => p,
        Err(e) => return Outcome::CompileFailed { message: e.to_string() },
    };
    let rebuilt = Interpreter::new(&program, Limits::default(), None)
        .and_then(|mut it| it.call_static(RECONSTRUCT_CLASS, RECONSTRUCT_METHOD, vec![]).map(|v| (it, v)));
    let (it, value) = match rebuilt {
        Ok(r) => r,
        Err(e) => return Outcome::RuntimeFailed { message: e.to_string() },
    };
    match deep_equals(&original.graph, &original.root, &it.heap, &it.heap.graph_value(&value), opts) {
        Equality::Equal => Outcome::Equal,
        Equality::Unequal { path, detail } => Outcome::Unequal { path, detail },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct HarnessOptions {
    pub corpus: CorpusOptions,
    pub equality: EqualityOptions,
    pub emit: TestGenOptions,
    /// Also generate and run tests for every universe.
    pub tests: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            corpus: CorpusOptions::default(),
            equality: EqualityOptions::default(),
            emit: TestGenOptions::default(),
            tests: true,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestTally {
    pub unique: usize,
    pub emitted: usize,
    pub discarded: usize,
    pub passed: usize,
    pub failed: Vec<String>,
    pub compile_error: Option<String>,
    pub discards: Vec<DiscardEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectReport {
    pub index: usize,
    pub root_type: String,
    pub structure_based_root: bool,
    pub objects: usize,
    /// Generator label: the root holds an over-bound sequence.
    pub over_bound: bool,
    /// With inlining and outlining applied.
    pub outcome: Outcome,
    /// Without emitter rewrites.
    pub plain_outcome: Outcome,
    pub tests: TestTally,
    pub latency_us: u64,
    pub wall_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutcomeCounts {
    pub equal: usize,
    pub unequal: usize,
    pub compile_failed: usize,
    pub runtime_failed: usize,
    pub partial: usize,
}

impl OutcomeCounts {
    fn add(&mut self, o: &Outcome) {
        match o {
            Outcome::Equal => self.equal += 1,
            Outcome::Unequal { .. } => self.unequal += 1,
            Outcome::CompileFailed { .. } => self.compile_failed += 1,
            Outcome::RuntimeFailed { .. } => self.runtime_failed += 1,
            Outcome::Partial { .. } => self.partial += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.equal + self.unequal + self.compile_failed + self.runtime_failed + self.partial
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestTotals {
    pub unique: usize,
    pub emitted: usize,
    pub discarded: usize,
    pub passed: usize,
    pub failed: usize,
    pub compile_errors: usize,
    /// Discard counts by reason code.
    pub discard_reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundTripReport {
    pub seed: u64,
    pub size: usize,
    pub counts: OutcomeCounts,
    /// Objects whose outcome differs between rewritten and plain emission.
    pub transform_mismatches: Vec<usize>,
    pub tests: TestTotals,
    pub median_latency_us: u64,
    pub wall_ms: u64,
    pub objects: Vec<ObjectReport>,
}

impl RoundTripReport {
    pub fn summary(&self) -> String {
        let c = &self.counts;
        format!(
            "{} objects: {} equal, {} unequal, {} compile-failed, {} runtime-failed, {} partial; tests {} emitted, {} passed, {} failed, {} discarded; median latency {} us; {} ms",
            self.size,
            c.equal,
            c.unequal,
            c.compile_failed,
            c.runtime_failed,
            c.partial,
            self.tests.emitted,
            self.tests.passed,
            self.tests.failed,
            self.tests.discarded,
            self.median_latency_us,
            self.wall_ms
        )
    }
}

fn failed(index: usize, u: &Universe, outcome: Outcome, started: Instant) -> ObjectReport {
    ObjectReport {
        index,
        root_type: u.root_type.clone(),
        structure_based_root: u.shapes[&u.root_type].structure_based(),
        objects: u.objects,
        over_bound: u.over_bound,
        outcome: outcome.clone(),
        plain_outcome: outcome,
        tests: TestTally::default(),
        latency_us: 0,
        wall_us: started.elapsed().as_micros() as u64,
    }
}

/// Runs the whole pipeline on one universe: analyze, record, reconstruct, generate tests.
pub fn run_universe(u: &Universe, opts: &HarnessOptions) -> ObjectReport {
    let started = Instant::now();
    let app = u.app_sources();
    let program = match compile_sources(&app) {
        Ok(p) => p,
        Err(e) => return failed(u.index, u, Outcome::CompileFailed { message: format!("application: {e}") }, started),
    };
    let analysis = AnalyzeOptions { trace_types: u.class_names(), costs: CostTable::default(), ..Default::default() };
    let db = match analyze(&program, &analysis) {
        Ok(db) => db,
        Err(e) => return failed(u.index, u, Outcome::CompileFailed { message: format!("analysis: {e}") }, started),
    };
    let bounds = RecorderConfig { max_sequence_length: opts.corpus.bound, ..Default::default() };
    let recording = match record(&program, &db, "Main.main", bounds, Limits::default()) {
        Ok(r) => r,
        Err(e) => return failed(u.index, u, Outcome::RuntimeFailed { message: format!("recording: {e}") }, started),
    };
    let Some(serialized) = recording.serialized.first() else {
        return failed(u.index, u, Outcome::RuntimeFailed { message: "nothing was serialized".into() }, started);
    };
    let log = parse_trace(&recording.trace).expect("recorder output parses");
    let rdb = reconstruction_db(&log, &db, &[]).expect("recorder output is consistent");

    let types = u.type_sources();
    let record = &serialized.record;
    let plain = emit_value(&record.receiver, &rdb, &record.embedded_plans);
    let plain_outcome = verify_roundtrip(&types, &serialized.snapshot, &plain, &HelperRegistry::new(), opts.equality);
    let mut unit = plain.clone();
    let mut registry = HelperRegistry::new();
    inline_primitives(&mut unit);
    outline_helpers(&mut unit, opts.emit.outline_threshold, &mut registry);
    let outcome = verify_roundtrip(&types, &serialized.snapshot, &unit, &registry, opts.equality);

    let tests = if opts.tests { universe_tests(u, &db, &recording.trace, opts.emit) } else { TestTally::default() };
    ObjectReport {
        index: u.index,
        root_type: u.root_type.clone(),
        structure_based_root: db.plans.contains_key(&u.root_type),
        objects: u.objects,
        over_bound: u.over_bound,
        outcome,
        plain_outcome,
        tests,
        latency_us: serialized.latency.as_micros() as u64,
        wall_us: started.elapsed().as_micros() as u64,
    }
}

fn universe_tests(u: &Universe, db: &crate::PlanDb, trace: &str, opts: TestGenOptions) -> TestTally {
    let generated = match generate(db, trace, &[], opts) {
        Ok(g) => g,
        Err(e) => return TestTally { compile_error: Some(e.to_string()), ..Default::default() },
    };
    let report = &generated.report.generation;
    let files: Vec<(String, String)> =
        generated.suite.files.iter().map(|f| (f.file_name.clone(), f.source.clone())).collect();
    let verdict: VerifyReport =
        if files.is_empty() { VerifyReport::default() } else { verify_tests(&u.app_sources(), &files, Limits::default()) };
    TestTally {
        unique: report.unique,
        emitted: report.emitted,
        discarded: report.discarded,
        passed: verdict.passed,
        failed: verdict.failed.iter().map(|f| format!("{}: {}", f.test, f.message)).collect(),
        compile_error: verdict.compile_error,
        discards: report.discards.clone(),
    }
}

/// Generates and verifies `size` universes for `seed`, in parallel; the report is ordered by index.
pub fn run_corpus(seed: u64, size: usize, opts: &HarnessOptions) -> RoundTripReport {
    let started = Instant::now();
    let threads = match opts.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(size.max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<ObjectReport> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= size {
                            break out;
                        }
                        out.push(run_universe(&generate_universe(seed, i, &opts.corpus), opts));
                    }
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("worker panicked")).collect()
    });
    results.sort_by_key(|r| r.index);

    let mut report = RoundTripReport { seed, size, ..Default::default() };
    for r in &results {
        report.counts.add(&r.outcome);
        if r.outcome.kind() != r.plain_outcome.kind() {
            report.transform_mismatches.push(r.index);
        }
        let t = &mut report.tests;
        t.unique += r.tests.unique;
        t.emitted += r.tests.emitted;
        t.discarded += r.tests.discarded;
        t.passed += r.tests.passed;
        t.failed += r.tests.failed.len();
        t.compile_errors += usize::from(r.tests.compile_error.is_some());
        for d in &r.tests.discards {
            for reason in &d.reasons {
                *t.discard_reasons.entry(reason.code.clone()).or_default() += 1;
            }
        }
    }
    report.median_latency_us =
        median(results.iter().map(|r| Duration::from_micros(r.latency_us)).collect()).as_micros() as u64;
    report.objects = results;
    report.wall_ms = started.elapsed().as_millis() as u64;
    report
}

#[cfg(test)]
mod tests {
    use plaincode_core::equality::{GraphValue, SimpleGraph};
    use plaincode_core::trace::ReconstructionDb;
    use plaincode_core::CapturedValue;

    use super::*;

    #[test]
    fn empty_corpus_gives_an_empty_report() {
        let report = run_corpus(42, 0, &HarnessOptions::default());
        assert_eq!(report.counts.total(), 0);
        assert!(report.objects.is_empty());
    }

    #[test]
    fn literal_round_trip_and_mismatch() {
        let unit = emit_value(&CapturedValue::double(-0.0), &ReconstructionDb::empty(), &BTreeMap::new());
        let snap = |v| Snapshot { graph: SimpleGraph::default(), root: v };
        let registry = HelperRegistry::new();
        let ok = verify_roundtrip(&[], &snap(GraphValue::Double(-0.0)), &unit, &registry, EqualityOptions::default());
        assert_eq!(ok, Outcome::Equal);
        let bad = verify_roundtrip(&[], &snap(GraphValue::Double(0.0)), &unit, &registry, EqualityOptions::default());
        assert!(matches!(bad, Outcome::Unequal { ref path, .. } if path == "root"), "{bad:?}");
        let tolerant = EqualityOptions { float_tolerance: Some(1e-9) };
        assert_eq!(verify_roundtrip(&[], &snap(GraphValue::Double(0.0)), &unit, &registry, tolerant), Outcome::Equal);
    }

    #[test]
    fn small_corpus_round_trips() {
        let opts = HarnessOptions { threads: 2, ..Default::default() };
        let report = run_corpus(5, 24, &opts);
        let bad: Vec<_> = report.objects.iter().filter(|o| o.outcome != Outcome::Equal).collect();
        assert!(bad.is_empty(), "{bad:#?}");
        assert!(report.transform_mismatches.is_empty());
        assert_eq!(report.tests.failed, 0, "{:#?}", report.objects.iter().map(|o| &o.tests.failed).collect::<Vec<_>>());
    }
}
