//! Arrange-Act-Assert test generation from serialization records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::emit::naming::decapitalize;
use crate::emit::transform::{self, normalized_key, HelperRegistry};
use crate::emit::{render, EmissionUnit, Emitter, Expr, Section, Stmt};
use crate::model::{LogicalTime, SerializationRecord, TypeModel};
use crate::trace::ReconstructionDb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TestGenOptions {
    pub outline_threshold: usize,
    pub inline: bool,
    pub deduplicate: bool,
    pub outline: bool,
}

impl Default for TestGenOptions {
    fn default() -> Self {
        TestGenOptions { outline_threshold: transform::DEFAULT_OUTLINE_THRESHOLD, inline: true, deduplicate: true, outline: true }
    }
}

impl TestGenOptions {
    /// Emission without any rewriting.
    pub fn plain() -> Self {
        TestGenOptions { inline: false, deduplicate: false, outline: false, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiscardReason {
    pub code: String,
    pub detail: String,
    /// Errors make the pipeline exit non-zero; capture-bound truncation does not.
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "status")]
pub enum TestStatus {
    Emitted,
    Discarded { reasons: Vec<DiscardReason> },
    /// Identical to an earlier test.
    Duplicate { of: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTest {
    pub name: String,
    pub class_name: String,
    pub method_name: String,
    pub point_id: String,
    pub time: LogicalTime,
    pub unit: EmissionUnit,
    pub status: TestStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestFile {
    pub class_name: String,
    pub file_name: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiscardEntry {
    pub point_id: String,
    pub time: LogicalTime,
    pub reasons: Vec<DiscardReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationReport {
    pub records: usize,
    pub unique: usize,
    pub emitted: usize,
    pub discarded: usize,
    pub duplicates: usize,
    pub helpers: usize,
    pub files: Vec<String>,
    pub discards: Vec<DiscardEntry>,
}

impl GenerationReport {
    pub fn has_errors(&self) -> bool {
        self.discards.iter().any(|d| d.reasons.iter().any(|r| r.error))
    }

    pub fn summary(&self) -> String {
        format!(
            "{} records, {} unique: {} emitted, {} discarded, {} duplicates collapsed, {} helpers",
            self.records, self.unique, self.emitted, self.discarded, self.duplicates, self.helpers
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub tests: Vec<GeneratedTest>,
    pub files: Vec<TestFile>,
    pub report: GenerationReport,
}

fn discard(code: &str, detail: String, error: bool) -> TestStatus {
    TestStatus::Discarded { reasons: vec![DiscardReason { code: code.into(), detail, error }] }
}

/// Builds the Arrange/Act/Assert unit for one record.
fn build_unit(record: &SerializationRecord, db: &ReconstructionDb, models: &BTreeMap<String, TypeModel>) -> (String, String, EmissionUnit, TestStatus) {
    let (class_name, method_name) = record.point_id.rsplit_once('.').unwrap_or(("", &record.point_id));
    let (class_name, method_name) = (class_name.to_string(), method_name.to_string());
    let empty = EmissionUnit {
        lines: Vec::new(),
        root: Expr::Null,
        root_type: "void".into(),
        blocks: BTreeMap::new(),
        helpers: Vec::new(),
        diagnostics: Vec::new(),
    };
    let Some(callable) = models.get(&class_name).and_then(|m| m.method(&method_name, record.args.len())) else {
        return (class_name, method_name, empty, discard("unknownMethod", record.point_id.clone(), true));
    };
    let return_type = callable.return_type.clone().filter(|t| t != "void");
    if return_type.is_none() && record.post_receiver.is_none() {
        return (class_name, method_name, empty, discard("noAssertion", "void method without receiver snapshot".into(), true));
    }

    let mut e = Emitter::new(db, &record.embedded_plans);
    e.naming.reserve("actual");
    e.set_section(Section::Arrange);
    let receiver_name = decapitalize(&class_name);
    let receiver = e.bind(&record.receiver, &class_name, Some(&receiver_name));
    let args: Vec<Expr> = record
        .args
        .iter()
        .zip(&callable.parameters)
        .map(|(a, p)| e.bind(a, &p.type_name, Some(&p.name)))
        .collect();

    e.set_section(Section::Act);
    let call = Expr::Call { target: Box::new(receiver.clone()), method: method_name.clone(), args };
    let actual = match &return_type {
        Some(t) => {
            e.push(Stmt::Let { name: "actual".into(), type_name: t.clone(), value: call });
            Expr::Local("actual".into())
        }
        None => {
            e.push(Stmt::Expr(call));
            receiver
        }
    };
    e.invalidate();

    e.set_section(Section::Assert);
    e.forget_objects();
    let (expected_value, expected_type) = match (&return_type, &record.return_value, &record.post_receiver) {
        (Some(t), Some(v), _) => (v.clone(), t.clone()),
        (Some(t), None, _) => (crate::model::CapturedValue::Null, t.clone()),
        (None, _, Some(post)) => (post.clone(), class_name.clone()),
        (None, _, None) => unreachable!("checked above"),
    };
    let expected = e.bind(&expected_value, &expected_type, Some("expected"));
    e.push(Stmt::Assert { expected, actual });
    let unit = e.finish(Expr::Null, "void".into());

    let mut reasons: Vec<DiscardReason> = unit
        .diagnostics
        .iter()
        .filter(|d| d.is_blocking() || matches!(d, crate::emit::Diagnostic::Truncated { .. }))
        .map(|d| DiscardReason {
            code: d.code().into(),
            detail: serde_json::to_string(d).unwrap_or_default(),
            error: d.is_blocking(),
        })
        .collect();
    reasons.sort();
    reasons.dedup();
    let status = if reasons.is_empty() { TestStatus::Emitted } else { TestStatus::Discarded { reasons } };
    (class_name, method_name, unit, status)
}

fn render_file(class_name: &str, tests: &[&GeneratedTest], registry: &HelperRegistry) -> String {
    let mut out = format!("public class {class_name}Test {{\n");
    for (i, t) in tests.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "    @Test\n    public void {}() {{", t.name);
        out.push_str(&render::body(&t.unit, 2));
        out.push_str("    }\n");
    }
    for h in registry.reachable(tests.iter().flat_map(|t| t.unit.statements())) {
        out.push('\n');
        out.push_str(&render::helper(h, 1));
    }
    out.push_str("}\n");
    out
}

/// One test per unique record; records that cannot be rebuilt are discarded with reasons.
pub fn generate_tests(
    records: &[SerializationRecord],
    db: &ReconstructionDb,
    models: &BTreeMap<String, TypeModel>,
    opts: TestGenOptions,
) -> TestSuite {
    let mut ordered: Vec<&SerializationRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.time);

    let mut tests = Vec::with_capacity(ordered.len());
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for record in ordered {
        let (class_name, method_name, mut unit, mut status) = build_unit(record, db, models);
        if opts.inline && status == TestStatus::Emitted {
            transform::inline_primitives(&mut unit);
        }
        let stmts: Vec<Stmt> = unit.statements().cloned().collect();
        let key = format!("{}|{:?}|{}", record.point_id, status, normalized_key("", &stmts, &unit.root));
        if let Some(first) = seen.get(&key) {
            status = TestStatus::Duplicate { of: *first };
        } else {
            seen.insert(key, tests.len());
        }
        tests.push(GeneratedTest {
            name: String::new(),
            class_name,
            method_name,
            point_id: record.point_id.clone(),
            time: record.time,
            unit,
            status,
        });
    }

    // Names per class and method, in capture order.
    let mut ordinals: BTreeMap<(String, String), usize> = BTreeMap::new();
    for t in tests.iter_mut().filter(|t| t.status == TestStatus::Emitted) {
        let n = ordinals.entry((t.class_name.clone(), t.method_name.clone())).or_default();
        *n += 1;
        t.name = format!("test_{}_{}", t.method_name, n);
    }

    let classes: BTreeSet<String> = tests.iter().filter(|t| t.status == TestStatus::Emitted).map(|t| t.class_name.clone()).collect();
    let mut files = Vec::new();
    let mut helper_count = 0;
    for class in classes {
        let idx: Vec<usize> = (0..tests.len()).filter(|i| tests[*i].status == TestStatus::Emitted && tests[*i].class_name == class).collect();
        let mut registry = HelperRegistry::new();
        for i in &idx {
            registry.reserve_name(&tests[*i].name);
        }
        let mut units: Vec<EmissionUnit> = idx.iter().map(|i| tests[*i].unit.clone()).collect();
        if opts.deduplicate {
            transform::deduplicate(&mut units, &mut registry);
        }
        if opts.outline {
            for u in &mut units {
                transform::outline_helpers(u, opts.outline_threshold, &mut registry);
            }
        }
        for (i, u) in idx.iter().zip(units) {
            tests[*i].unit = u;
        }
        helper_count += registry.helpers().len();
        let members: Vec<&GeneratedTest> = idx.iter().map(|i| &tests[*i]).collect();
        files.push(TestFile {
            class_name: format!("{class}Test"),
            file_name: format!("{class}Test.{}", render::FILE_EXTENSION),
            source: render_file(&class, &members, &registry),
        });
    }

    let mut report = GenerationReport { records: records.len(), helpers: helper_count, ..Default::default() };
    for t in &tests {
        match &t.status {
            TestStatus::Emitted => report.emitted += 1,
            TestStatus::Discarded { reasons } => {
                report.discarded += 1;
                report.discards.push(DiscardEntry { point_id: t.point_id.clone(), time: t.time, reasons: reasons.clone() });
            }
            TestStatus::Duplicate { .. } => report.duplicates += 1,
        }
    }
    report.unique = report.emitted + report.discarded;
    report.files = files.iter().map(|f| f.file_name.clone()).collect();
    TestSuite { tests, files, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CallableSpec, CapturedValue, Event, Parameter, TypeKind};

    fn habitat_model() -> TypeModel {
        let mut m = TypeModel::new("Habitat", TypeKind::Composite);
        let p = |n: &str, t: &str| Parameter { name: n.into(), type_name: t.into(), binds_field: None };
        m.constructors.push(CallableSpec {
            name: "Habitat".into(),
            parameters: vec![p("coordinate", "String")],
            sets_fields: Default::default(),
            constructing: true,
            accessible: true,
            return_type: None,
        });
        for (name, params, ret) in [
            ("grow", vec![p("amount", "int")], None),
            ("getArea", vec![], Some("double")),
            ("scaled", vec![p("f", "double"), p("g", "double")], Some("double")),
        ] {
            m.methods.push(CallableSpec {
                name: name.into(),
                parameters: params,
                sets_fields: Default::default(),
                constructing: false,
                accessible: true,
                return_type: ret.map(Into::into),
            });
        }
        m
    }

    fn habitat_db() -> ReconstructionDb {
        let models = BTreeMap::from([("Habitat".to_string(), habitat_model())]);
        ReconstructionDb::from_events(
            &[
                Event::ConstructEvent {
                    time: 1,
                    object_id: 1,
                    type_name: "Habitat".into(),
                    constructor_name: "Habitat".into(),
                    args: vec![CapturedValue::text("42, 42")],
                    initial_fields: BTreeMap::new(),
                },
                Event::MethodStartEvent { time: 3, call_id: 1, receiver: 1, qualified_method_name: "Habitat.grow".into(), args: vec![CapturedValue::int(42)] },
                Event::FieldSetEvent { time: 4, receiver: 1, field_name: "area".into(), old_value: CapturedValue::double(1.0), new_value: CapturedValue::double(2.0) },
                Event::MethodEndEvent { time: 5, call_id: 1, abnormal: false },
            ],
            &models,
        )
        .unwrap()
    }

    fn record(point: &str, time: u64, receiver_time: u64, args: Vec<CapturedValue>, ret: Option<CapturedValue>, post: Option<CapturedValue>) -> SerializationRecord {
        SerializationRecord {
            point_id: point.into(),
            receiver: CapturedValue::object(1, receiver_time),
            args,
            return_value: ret,
            post_receiver: post,
            time,
            embedded_plans: BTreeMap::new(),
        }
    }

    fn models() -> BTreeMap<String, TypeModel> {
        BTreeMap::from([("Habitat".to_string(), habitat_model())])
    }

    #[test]
    fn numeric_method_gets_two_locals_an_invocation_and_an_assertion() {
        let r = record("Habitat.scaled", 9, 6, vec![CapturedValue::double(0.5), CapturedValue::double(3.0)], Some(CapturedValue::double(3.0)), None);
        let suite = generate_tests(&[r], &habitat_db(), &models(), TestGenOptions::default());
        assert_eq!(suite.report.emitted, 1);
        let src = &suite.files[0].source;
        let expected = "public class HabitatTest {
    @Test
    public void test_scaled_1() {
        // Arrange
        Habitat habitat = new Habitat(\"42, 42\");
        habitat.grow(42);
        double f = 0.5;
        double g = 3.0;

        // Act
        double actual = habitat.scaled(f, g);

        // Assert
        assertEquals(3.0, actual);
    }
}
";
        assert_eq!(src, expected);
    }

    #[test]
    fn void_method_asserts_on_the_receiver_snapshot() {
        let r = record("Habitat.grow", 6, 2, vec![CapturedValue::int(42)], None, Some(CapturedValue::object(1, 6)));
        let suite = generate_tests(&[r], &habitat_db(), &models(), TestGenOptions::default());
        let src = &suite.files[0].source;
        assert!(src.contains("habitat.grow(amount);"), "{src}");
        assert!(src.contains("Habitat expected = new Habitat(\"42, 42\");\n        expected.grow(42);\n        assertEquals(expected, habitat);"), "{src}");
    }

    #[test]
    fn duplicates_collapse_and_totals_add_up() {
        let r = |t| record("Habitat.getArea", t, 6, vec![], Some(CapturedValue::double(2.0)), None);
        let bad = SerializationRecord { receiver: CapturedValue::object(7, 1), ..r(12) };
        let suite = generate_tests(&[r(10), r(11), bad], &habitat_db(), &models(), TestGenOptions::default());
        let rep = &suite.report;
        assert_eq!((rep.records, rep.unique, rep.emitted, rep.discarded, rep.duplicates), (3, 2, 1, 1, 1));
        assert_eq!(rep.discards[0].reasons[0].code, "unresolved");
        assert!(rep.has_errors());
        assert!(!suite.files[0].source.contains("__unresolved"));
    }

    #[test]
    fn names_follow_capture_order() {
        let a = record("Habitat.getArea", 20, 6, vec![], Some(CapturedValue::double(2.0)), None);
        let b = record("Habitat.getArea", 10, 2, vec![], Some(CapturedValue::double(1.0)), None);
        let suite = generate_tests(&[a, b], &habitat_db(), &models(), TestGenOptions::default());
        let names: Vec<_> = suite.tests.iter().map(|t| (t.name.as_str(), t.time)).collect();
        assert_eq!(names, vec![("test_getArea_1", 10), ("test_getArea_2", 20)]);
    }

    #[test]
    fn empty_input_gives_no_files() {
        let suite = generate_tests(&[], &ReconstructionDb::empty(), &BTreeMap::new(), TestGenOptions::default());
        assert!(suite.files.is_empty());
        assert_eq!(suite.report, GenerationReport::default());
    }

    #[test]
    fn every_emitted_test_has_one_act_and_one_assertion() {
        let recs = vec![
            record("Habitat.getArea", 10, 6, vec![], Some(CapturedValue::double(2.0)), None),
            record("Habitat.grow", 12, 6, vec![CapturedValue::int(1)], None, Some(CapturedValue::object(1, 6))),
        ];
        let suite = generate_tests(&recs, &habitat_db(), &models(), TestGenOptions::default());
        for t in suite.tests.iter().filter(|t| t.status == TestStatus::Emitted) {
            assert_eq!(t.unit.lines.iter().filter(|l| l.section == Section::Act).count(), 1);
            assert_eq!(t.unit.statements().filter(|s| matches!(s, Stmt::Assert { .. })).count(), 1);
        }
    }
}
