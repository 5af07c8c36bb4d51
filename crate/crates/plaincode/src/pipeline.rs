//! The four phases: analyze, record, generate and verify.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use plaincode_core::analyzer::{
    closure_of_associated_types, closure_of_types, models_for, select_serialization_points, AnalysisError,
};
use plaincode_core::recorder::{MemorySink, RecordError, Recorder, RecorderConfig, RecorderStats};
use plaincode_core::synth::synthesize_all;
use plaincode_core::testgen::{generate_tests, GenerationReport, TestGenOptions, TestSuite};
use plaincode_core::trace::{FieldValueAdapter, ReconstructionDb, TraceError};
use plaincode_core::wire::{parse_trace, DecodeError, TraceLog};
use plaincode_core::{CostTable, SerializationRecord};
use plaincode_lang::interp::SERIALIZE_POINT;
use plaincode_lang::{
    compile, run_tests, CompileError, Instrumentation, Interpreter, Limits, Program, RuntimeError, Serialized,
    TestOutcome,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::plandb::PlanDb;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("compile error: {0}")]
    Compile(#[from] CompileError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("workload failed: {0}")]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("cannot decode input: {0}")]
    Decode(#[from] DecodeError),
    #[error("trace analysis failed: {0}")]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Usage(String),
}

pub fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

pub fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    std::fs::write(path, text).map_err(io_error(path))
}

/// Application sources as `(file name, text)` pairs.
pub fn load_sources(cfg: &Config) -> Result<Vec<(String, String)>, PipelineError> {
    if cfg.sources.is_empty() {
        return Err(PipelineError::Usage("the config lists no sources".into()));
    }
    cfg.source_paths().iter().map(|p| Ok((p.display().to_string(), read_file(p)?))).collect()
}

pub fn compile_sources(files: &[(String, String)]) -> Result<Program, CompileError> {
    let refs: Vec<(&str, &str)> = files.iter().map(|(n, s)| (n.as_str(), s.as_str())).collect();
    compile(&refs)
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// Explicit points; selection criteria apply when empty.
    pub points: Vec<String>,
    pub selection: plaincode_core::analyzer::SelectionCriteria,
    /// Extra roots of the traced closure.
    pub trace_types: Vec<String>,
    pub costs: CostTable,
}

impl AnalyzeOptions {
    pub fn from_config(cfg: &Config) -> Self {
        AnalyzeOptions {
            points: cfg.points.clone(),
            selection: cfg.selection.clone(),
            trace_types: cfg.trace_types.clone(),
            costs: cfg.cost_table(),
        }
    }
}

/// Pre-execution analysis: points, traced closure, type models and cheapest plans.
pub fn analyze(program: &Program, opts: &AnalyzeOptions) -> Result<PlanDb, PipelineError> {
    let decls = program.declarations();
    let catalog = program.catalog();
    let points =
        if opts.points.is_empty() { select_serialization_points(&decls, &opts.selection) } else { opts.points.clone() };
    let mut traced = closure_of_associated_types(&points, &catalog)?;
    traced.extend(closure_of_types(opts.trace_types.iter().cloned(), &catalog));
    let models = models_for(&traced, &catalog)?;
    let (plans, failures) = synthesize_all(&models, &opts.costs);
    let infeasible = failures.into_iter().map(|(t, e)| (t, e.to_string())).collect();
    Ok(PlanDb { points, traced, costs: opts.costs.clone(), models, plans, infeasible })
}

pub struct Recording {
    /// The trace file contents.
    pub trace: String,
    pub stats: RecorderStats,
    /// Values handed to the `serialize` builtin.
    pub serialized: Vec<Serialized>,
}

/// Runs the entry point with the recorder attached.
pub fn record(
    program: &Program,
    db: &PlanDb,
    entry: &str,
    bounds: RecorderConfig,
    limits: Limits,
) -> Result<Recording, PipelineError> {
    let (class, method) =
        entry.rsplit_once('.').ok_or_else(|| PipelineError::Usage(format!("entry `{entry}` is not Class.method")))?;
    let sink = MemorySink::new();
    let recorder = Recorder::new(bounds, sink.sink())?;
    let mut instr = Instrumentation::new(recorder.clone());
    instr.traced = db.traced.clone();
    instr.points = db.points.iter().cloned().collect();
    instr.plans = db.plans.clone();
    let mut it = Interpreter::new(program, limits, Some(instr))?;
    let outcome = it.call_static(class, method, vec![]);
    let instr = it.into_instrumentation().expect("instrumented run");
    let stats = recorder.finish()?;
    outcome?;
    Ok(Recording { trace: sink.contents(), stats, serialized: instr.serialized })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateReport {
    #[serde(flatten)]
    pub generation: GenerationReport,
    /// Traced objects not reachable from any record.
    pub pruned_objects: usize,
}

pub struct Generated {
    pub suite: TestSuite,
    pub report: GenerateReport,
}

/// Records produced at serialization points; `serialize` builtin records are not tests.
pub fn point_records(log: &TraceLog) -> Vec<SerializationRecord> {
    log.records().into_iter().filter(|r| r.point_id != SERIALIZE_POINT).collect()
}

pub fn reconstruction_db(
    log: &TraceLog,
    db: &PlanDb,
    adapters: &[FieldValueAdapter],
) -> Result<ReconstructionDb, PipelineError> {
    let mut rdb = ReconstructionDb::build(log, &db.models)?;
    for a in adapters {
        rdb = rdb.with_adapter(Box::new(a.clone()));
    }
    Ok(rdb)
}

/// Trace analysis, emission and test generation.
pub fn generate(
    db: &PlanDb,
    trace: &str,
    adapters: &[FieldValueAdapter],
    opts: TestGenOptions,
) -> Result<Generated, PipelineError> {
    let log = parse_trace(trace)?;
    let records = point_records(&log);
    let mut rdb = reconstruction_db(&log, db, adapters)?;
    let pruned_objects = rdb.prune_unreferenced(&records);
    let suite = generate_tests(&records, &rdb, &db.models, opts);
    let report = GenerateReport { generation: suite.report.clone(), pruned_objects };
    Ok(Generated { suite, report })
}

/// Writes the test files and the report into `out`; returns the written paths.
pub fn write_generated(out: &Path, generated: &Generated) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out).map_err(io_error(out))?;
    let mut written = Vec::new();
    for f in &generated.suite.files {
        let path = out.join(&f.file_name);
        write_file(&path, &f.source)?;
        written.push(path);
    }
    let path = out.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&generated.report).expect("report serializes");
    write_file(&path, &(json + "\n"))?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestFailure {
    pub test: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub passed: usize,
    pub failed: Vec<TestFailure>,
    pub compile_error: Option<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.failed.is_empty() && self.compile_error.is_none()
    }

    pub fn summary(&self) -> String {
        match &self.compile_error {
            Some(e) => format!("generated tests do not compile: {e}"),
            None => format!("{} tests passed, {} failed", self.passed, self.failed.len()),
        }
    }
}

/// Compiles generated test files together with the application and runs them.
pub fn verify_tests(app: &[(String, String)], tests: &[(String, String)], limits: Limits) -> VerifyReport {
    let mut files = app.to_vec();
    files.extend(tests.iter().cloned());
    let program = match compile_sources(&files) {
        Ok(p) => p,
        Err(e) => return VerifyReport { compile_error: Some(e.to_string()), ..Default::default() },
    };
    let test_classes: BTreeSet<String> = plaincode_lang::compile(
        &tests.iter().map(|(n, s)| (n.as_str(), s.as_str())).collect::<Vec<_>>(),
    )
    .map(|p| p.classes.into_iter().map(|c| c.name).collect())
    .unwrap_or_default();
    let outcomes: Vec<TestOutcome> =
        run_tests(&program, limits).into_iter().filter(|o| test_classes.is_empty() || test_classes.contains(&o.class_name)).collect();
    let mut report = VerifyReport::default();
    for o in outcomes {
        match o.failure {
            None => report.passed += 1,
            Some(e) => report.failed.push(TestFailure { test: format!("{}.{}", o.class_name, o.method), message: e.to_string() }),
        }
    }
    report
}

/// Reads every `*.mj` file of a generated test directory, sorted by name.
pub fn read_test_dir(dir: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mj"))
        .collect();
    names.sort();
    names.into_iter().map(|p| Ok((p.display().to_string(), read_file(&p)?))).collect()
}

/// Median of a set of durations; zero when empty.
pub fn median(mut samples: Vec<Duration>) -> Duration {
    if samples.is_empty() {
        return Duration::ZERO;
    }
    samples.sort();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

#[cfg(test)]
mod tests {
    use plaincode_core::trace::describe;
    use plaincode_core::ActionKind;
    use plaincode_lang::fixtures::ZOO;

    use super::*;

    const MAIN: &str = r#"
public class Main {
    public static void main() {
        Habitat h = new Habitat("42, 42");
        h.grow(42);
        double a = h.scaled(2.0, 0.5);
        Monkey m = new Monkey(3, EyeColor.BROWN, h);
        int later = m.ageIn(4);
        serialize(m);
    }
}
"#;

    fn zoo() -> Vec<(String, String)> {
        vec![("zoo.mj".into(), ZOO.into()), ("main.mj".into(), MAIN.into())]
    }

    fn analyzed() -> (Program, PlanDb) {
        let program = compile_sources(&zoo()).unwrap();
        let db = analyze(&program, &AnalyzeOptions { costs: CostTable::default(), ..Default::default() }).unwrap();
        (program, db)
    }

    #[test]
    fn analysis_splits_structure_and_trace_based_types() {
        let (_, db) = analyzed();
        assert_eq!(db.points, vec!["Habitat.scaled".to_string(), "Monkey.ageIn".to_string()]);
        assert_eq!(db.traced, BTreeSet::from(["EyeColor".to_string(), "Habitat".into(), "Monkey".into()]));
        let monkey = &db.plans["Monkey"];
        assert_eq!(monkey.actions.len(), 1);
        assert_eq!(monkey.actions[0].kind, ActionKind::CallConstructor);
        assert_eq!(monkey.actions[0].callable.as_ref().unwrap().parameters.len(), 3);
        assert!(db.infeasible.contains_key("Habitat"));
        assert_eq!(db.trace_based().collect::<Vec<_>>(), vec!["EyeColor", "Habitat"]);
        assert_eq!(PlanDb::parse(&db.to_text()).unwrap(), db);
    }

    #[test]
    fn habitat_trace_replays_constructor_then_grow() {
        let (program, db) = analyzed();
        let rec = record(&program, &db, "Main.main", RecorderConfig::default(), Limits::default()).unwrap();
        let log = parse_trace(&rec.trace).unwrap();
        let rdb = reconstruction_db(&log, &db, &[]).unwrap();
        let (&habitat, _) = rdb.timelines.iter().find(|(_, t)| t.type_name == "Habitat").unwrap();
        let actions = rdb.actions_for(habitat, rec.serialized[0].record.time).unwrap();
        assert_eq!(
            describe(&actions),
            vec![r#"Habitat([Text { value: "42, 42" }])"#, r#"grow([PrimitiveLiteral { value: Int(42), type_name: "int" }])"#]
        );
    }

    #[test]
    fn generated_tests_pass_against_the_application() {
        let (program, db) = analyzed();
        let rec = record(&program, &db, "Main.main", RecorderConfig::default(), Limits::default()).unwrap();
        let generated = generate(&db, &rec.trace, &[], TestGenOptions::default()).unwrap();
        let report = &generated.report.generation;
        assert_eq!(report.unique, 2, "{report:?}");
        assert_eq!(report.emitted + report.discarded, report.unique);
        assert_eq!(report.emitted, 2, "{report:?}");
        let tests: Vec<(String, String)> =
            generated.suite.files.iter().map(|f| (f.file_name.clone(), f.source.clone())).collect();
        let verdict = verify_tests(&zoo(), &tests, Limits::default());
        assert!(verdict.ok(), "{verdict:?}\n{}", tests.iter().map(|t| t.1.as_str()).collect::<String>());
        assert_eq!(verdict.passed, 2);
    }

    #[test]
    fn empty_trace_generates_nothing() {
        let (_, db) = analyzed();
        let trace = format!("{}\n", plaincode_core::wire::encode_header(plaincode_core::wire::TRACE_FORMAT));
        let generated = generate(&db, &trace, &[], TestGenOptions::default()).unwrap();
        assert_eq!(generated.report.generation.unique, 0);
        assert!(generated.suite.files.is_empty());
        assert!(!generated.report.generation.has_errors());
    }

    #[test]
    fn median_of_durations() {
        let ms = Duration::from_millis;
        assert_eq!(median(vec![]), Duration::ZERO);
        assert_eq!(median(vec![ms(5), ms(1), ms(3)]), ms(3));
        assert_eq!(median(vec![ms(4), ms(1), ms(3), ms(2)]), Duration::from_micros(2500));
    }
}
