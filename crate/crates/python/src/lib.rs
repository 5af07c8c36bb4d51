//! Python bindings: analyze, record, generate and verify from Python, plus the round-trip corpus.
//!
//! Structured values that have a JSON form (plans, models, reports) cross the boundary as JSON
//! text; Python callers decode them with `json.loads`.

use std::collections::BTreeMap;

use plaincode::corpus::CorpusOptions;
use plaincode::pipeline::{self, AnalyzeOptions, Generated, PipelineError, VerifyReport};
use plaincode::roundtrip::{self, HarnessOptions, RoundTripReport};
use plaincode_core::model::{CostTable, TypeModel};
use plaincode_core::recorder::RecorderConfig;
use plaincode_core::synth::synthesize;
use plaincode_core::testgen::TestGenOptions;
use plaincode_lang::Limits;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(plaincode_py, PlaincodeError, PyException);

fn err(e: impl ToString) -> PyErr {
    PlaincodeError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report types serialize")
}

pub fn analyze_sources(
    sources: &[(String, String)],
    trace_types: Vec<String>,
    points: Vec<String>,
) -> Result<plaincode::PlanDb, PipelineError> {
    let program = pipeline::compile_sources(sources)?;
    let opts = AnalyzeOptions { points, trace_types, costs: CostTable::default(), ..Default::default() };
    pipeline::analyze(&program, &opts)
}

pub fn record_sources(
    sources: &[(String, String)],
    db: &plaincode::PlanDb,
    entry: &str,
    max_sequence_length: usize,
) -> Result<pipeline::Recording, PipelineError> {
    let program = pipeline::compile_sources(sources)?;
    let bounds = RecorderConfig { max_sequence_length, ..Default::default() };
    pipeline::record(&program, db, entry, bounds, Limits::default())
}

#[pyclass(name = "PlanDb", module = "plaincode_py", frozen)]
pub struct PyPlanDb(plaincode::PlanDb);

#[pymethods]
impl PyPlanDb {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        plaincode::PlanDb::parse(text).map(PyPlanDb).map_err(err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn points(&self) -> Vec<String> {
        self.0.points.clone()
    }

    #[getter]
    fn traced(&self) -> Vec<String> {
        self.0.traced.iter().cloned().collect()
    }

    /// Types with a structure-based plan.
    #[getter]
    fn planned(&self) -> Vec<String> {
        self.0.plans.keys().cloned().collect()
    }

    /// Trace-based types mapped to the reason no plan exists.
    #[getter]
    fn infeasible(&self) -> BTreeMap<String, String> {
        self.0.infeasible.clone()
    }

    fn plan_json(&self, type_name: &str) -> Option<String> {
        self.0.plans.get(type_name).map(json)
    }

    fn model_json(&self, type_name: &str) -> Option<String> {
        self.0.models.get(type_name).map(json)
    }

    fn __repr__(&self) -> String {
        format!("PlanDb(points={}, traced={}, planned={})", self.0.points.len(), self.0.traced.len(), self.0.plans.len())
    }
}

#[pyclass(name = "Recording", module = "plaincode_py", frozen)]
pub struct PyRecording {
    #[pyo3(get)]
    trace: String,
    #[pyo3(get)]
    events: u64,
    #[pyo3(get)]
    records: u64,
}

#[pyclass(name = "GeneratedSuite", module = "plaincode_py", frozen)]
pub struct PyGenerated(Generated);

#[pymethods]
impl PyGenerated {
    /// File name to test source.
    #[getter]
    fn files(&self) -> BTreeMap<String, String> {
        self.0.suite.files.iter().map(|f| (f.file_name.clone(), f.source.clone())).collect()
    }

    #[getter]
    fn unique(&self) -> usize {
        self.0.report.generation.unique
    }

    #[getter]
    fn emitted(&self) -> usize {
        self.0.report.generation.emitted
    }

    #[getter]
    fn discarded(&self) -> usize {
        self.0.report.generation.discarded
    }

    fn report_json(&self) -> String {
        json(&self.0.report)
    }
}

#[pyclass(name = "VerifyReport", module = "plaincode_py", frozen)]
pub struct PyVerifyReport(VerifyReport);

#[pymethods]
impl PyVerifyReport {
    #[getter]
    fn passed(&self) -> usize {
        self.0.passed
    }

    /// `(test, message)` for each failing test.
    #[getter]
    fn failures(&self) -> Vec<(String, String)> {
        self.0.failed.iter().map(|f| (f.test.clone(), f.message.clone())).collect()
    }

    #[getter]
    fn compile_error(&self) -> Option<String> {
        self.0.compile_error.clone()
    }

    #[getter]
    fn ok(&self) -> bool {
        self.0.ok()
    }
}

#[pyclass(name = "RoundTripReport", module = "plaincode_py", frozen)]
pub struct PyRoundTripReport(RoundTripReport);

#[pymethods]
impl PyRoundTripReport {
    #[getter]
    fn size(&self) -> usize {
        self.0.size
    }

    #[getter]
    fn equal(&self) -> usize {
        self.0.counts.equal
    }

    #[getter]
    fn partial(&self) -> usize {
        self.0.counts.partial
    }

    #[getter]
    fn tests_passed(&self) -> usize {
        self.0.tests.passed
    }

    #[getter]
    fn tests_failed(&self) -> usize {
        self.0.tests.failed
    }

    #[getter]
    fn median_latency_us(&self) -> u64 {
        self.0.median_latency_us
    }

    fn summary(&self) -> String {
        self.0.summary()
    }

    fn to_json(&self) -> String {
        json(&self.0)
    }
}

/// Selects points, builds type models and synthesizes plans for a set of `(file, source)` pairs.
#[pyfunction]
#[pyo3(signature = (sources, trace_types = Vec::new(), points = Vec::new()))]
fn analyze(sources: Vec<(String, String)>, trace_types: Vec<String>, points: Vec<String>) -> PyResult<PyPlanDb> {
    analyze_sources(&sources, trace_types, points).map(PyPlanDb).map_err(err)
}

/// Runs `entry` with the recorder attached.
#[pyfunction]
#[pyo3(signature = (sources, db, entry = "Main.main", max_sequence_length = 25))]
fn record(sources: Vec<(String, String)>, db: &PyPlanDb, entry: &str, max_sequence_length: usize) -> PyResult<PyRecording> {
    let r = record_sources(&sources, &db.0, entry, max_sequence_length).map_err(err)?;
    Ok(PyRecording { trace: r.trace, events: r.stats.events, records: r.stats.records })
}

/// Emits tests for every serialization-point record in `trace`.
#[pyfunction]
#[pyo3(signature = (db, trace, outline_threshold = None))]
fn generate(db: &PyPlanDb, trace: &str, outline_threshold: Option<usize>) -> PyResult<PyGenerated> {
    let mut opts = TestGenOptions::default();
    if let Some(t) = outline_threshold {
        opts.outline_threshold = t;
    }
    pipeline::generate(&db.0, trace, &[], opts).map(PyGenerated).map_err(err)
}

/// Compiles generated tests next to the application and runs them.
#[pyfunction]
fn verify_tests(app: Vec<(String, String)>, tests: BTreeMap<String, String>) -> PyVerifyReport {
    let tests: Vec<(String, String)> = tests.into_iter().collect();
    PyVerifyReport(pipeline::verify_tests(&app, &tests, Limits::default()))
}

/// Cheapest plan for a type model given as JSON; returns the plan as JSON.
#[pyfunction]
#[pyo3(signature = (model_json, costs_json = None))]
fn synthesize_plan(model_json: &str, costs_json: Option<&str>) -> PyResult<String> {
    let model: TypeModel = serde_json::from_str(model_json).map_err(err)?;
    let costs = match costs_json {
        Some(c) => CostTable(serde_json::from_str(c).map_err(err)?),
        None => CostTable::default(),
    };
    synthesize(&model, &costs).map(|p| json(&p)).map_err(err)
}

/// Generates and verifies `size` synthetic applications; releases the GIL while running.
#[pyfunction]
#[pyo3(signature = (seed, size, over_bound_rate = 0.0, threads = 0))]
fn run_corpus(py: Python<'_>, seed: u64, size: usize, over_bound_rate: f64, threads: usize) -> PyRoundTripReport {
    let opts = HarnessOptions {
        corpus: CorpusOptions { over_bound_rate, ..Default::default() },
        threads,
        ..Default::default()
    };
    PyRoundTripReport(py.detach(|| roundtrip::run_corpus(seed, size, &opts)))
}

#[pymodule]
fn plaincode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PlaincodeError", m.py().get_type::<PlaincodeError>())?;
    m.add_class::<PyPlanDb>()?;
    m.add_class::<PyRecording>()?;
    m.add_class::<PyGenerated>()?;
    m.add_class::<PyVerifyReport>()?;
    m.add_class::<PyRoundTripReport>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(record, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_tests, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_corpus, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use plaincode_lang::fixtures::ZOO;

    use super::*;

    const MAIN: &str = "public class Main { public static void main() { Habitat h = new Habitat(\"1, 2\"); h.grow(3); double s = h.scaled(1.0, 2.0); } }";

    fn zoo() -> Vec<(String, String)> {
        vec![("zoo.mj".into(), ZOO.into()), ("main.mj".into(), MAIN.into())]
    }

    #[test]
    fn analyze_record_generate_from_plain_inputs() {
        let db = analyze_sources(&zoo(), vec![], vec![]).unwrap();
        assert!(db.plans.contains_key("Monkey"));
        let rec = record_sources(&zoo(), &db, "Main.main", 25).unwrap();
        assert!(rec.stats.events > 0);
        let generated = pipeline::generate(&db, &rec.trace, &[], TestGenOptions::default()).unwrap();
        assert_eq!(generated.report.generation.emitted, 1);
    }

    #[test]
    fn plans_cross_the_boundary_as_json() {
        let db = analyze_sources(&zoo(), vec![], vec![]).unwrap();
        let model = json(&db.models["Monkey"]);
        let plan: serde_json::Value = serde_json::from_str(&synthesize_plan(&model, None).unwrap()).unwrap();
        assert_eq!(plan["totalCost"], 1);
        assert_eq!(plan["actions"][0]["kind"], "callConstructor");
    }
}
