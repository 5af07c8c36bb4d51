//! A small Java-like language ("mj"): the host for instrumented applications and the
//! compiler/runner for generated reconstruction code and tests.

pub mod ast;
pub mod check;
pub mod decl;
pub mod interp;
pub mod lexer;
pub mod parser;

use plaincode_core::analyzer::{TypeCatalog, TypeDeclaration};
use thiserror::Error;

pub use interp::{Instrumentation, Interpreter, Limits, RuntimeError, Serialized, Snapshot, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{file}:{line}: {message}")]
pub struct CompileError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

/// A checked set of classes from one or more source files.
#[derive(Debug, Clone)]
pub struct Program {
    pub classes: Vec<ast::ClassDecl>,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ast::ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn declarations(&self) -> Vec<TypeDeclaration> {
        self.classes.iter().map(decl::type_declaration).collect()
    }

    pub fn catalog(&self) -> TypeCatalog {
        TypeCatalog::new(self.declarations())
    }
}

/// Parses and checks `(file name, source)` pairs as one program.
pub fn compile(sources: &[(&str, &str)]) -> Result<Program, CompileError> {
    let mut classes = Vec::new();
    for (file, src) in sources {
        classes.extend(parser::parse_file(file, src)?);
    }
    Ok(Program { classes: check::check_program(classes)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub class_name: String,
    pub method: String,
    pub failure: Option<RuntimeError>,
}

impl TestOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs every `@Test` method, each in a fresh interpreter on a fresh instance.
pub fn run_tests(program: &Program, limits: Limits) -> Vec<TestOutcome> {
    let mut out = Vec::new();
    for c in &program.classes {
        for m in c.methods.iter().filter(|m| m.modifiers.test) {
            let failure = Interpreter::new(program, limits, None)
                .and_then(|mut it| match it.instantiate(&c.name, vec![])? {
                    Value::Obj(id) => it.call(id, &m.name, vec![]).map(|_| ()),
                    _ => unreachable!("constructors return objects"),
                })
                .err();
            out.push(TestOutcome { class_name: c.name.clone(), method: m.name.clone(), failure });
        }
    }
    out
}

/// Small programs shared by tests across the workspace.
pub mod fixtures {
    /// The zoo example: a structure-based `Monkey` and a trace-based `Habitat`.
    pub const ZOO: &str = r#"
public enum EyeColor { BROWN, BLUE, GREEN }

public class Habitat {
    private String coordinate;
    private double area;

    public Habitat(String coordinate) {
        this.coordinate = coordinate;
        this.area = 1.0;
    }

    public void grow(int amount) {
        this.area = this.area + amount / 42.0;
    }

    public double getArea() {
        return this.area;
    }

    public double scaled(double f, double g) {
        double s = this.area * f;
        return s * g;
    }
}

public class Monkey {
    private int age;
    public EyeColor eyeColor;
    public Habitat habitat;

    public Monkey(int age, EyeColor eyeColor, Habitat habitat) {
        this.age = age;
        this.eyeColor = eyeColor;
        this.habitat = habitat;
    }

    public Monkey(int age) {
        this.age = age;
    }

    public void setEyeColor(EyeColor eyeColor) {
        this.eyeColor = eyeColor;
    }

    public int ageIn(int years) {
        int later = this.age + years;
        return later;
    }
}
"#;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn habitat_grows_to_two() {
        let p = compile(&[("zoo.mj", fixtures::ZOO)]).unwrap();
        let mut it = Interpreter::new(&p, Limits::default(), None).unwrap();
        let Value::Obj(h) = it.instantiate("Habitat", vec![Value::text("42, 42")]).unwrap() else { panic!() };
        it.call(h, "grow", vec![Value::Int(42)]).unwrap();
        let Value::Double(area) = it.call(h, "getArea", vec![]).unwrap() else { panic!() };
        assert_eq!(area, 2.0);
    }

    #[test]
    fn test_runner_reports_each_method() {
        let src = r#"
            class T {
                @Test public void ok() { assertEquals(2.0, 1.0 + 1); }
                @Test public void bad() { assertEquals(new int[]{1, 2}, new int[]{1, 3}); }
                @Test public void boom() { int[] a = new int[1]; a[2] = 0; }
                @Test public void caught() { try { throw "x"; } catch (String e) { assertEquals("x", e); } }
            }
        "#;
        let p = compile(&[("t.mj", src)]).unwrap();
        let outcomes = run_tests(&p, Limits::default());
        let status: Vec<(&str, bool)> = outcomes.iter().map(|o| (o.method.as_str(), o.passed())).collect();
        assert_eq!(status, vec![("ok", true), ("bad", false), ("boom", false), ("caught", true)]);
        assert!(matches!(outcomes[1].failure, Some(RuntimeError::AssertionFailed(ref m)) if m.contains("root[1]")), "{:?}", outcomes[1]);
    }

    #[test]
    fn declarations_feed_the_analyzer() {
        use plaincode_core::analyzer::{models_for, AssignSource};
        let p = compile(&[("zoo.mj", fixtures::ZOO)]).unwrap();
        let decls = p.declarations();
        let habitat = decls.iter().find(|d| d.name == "Habitat").unwrap();
        assert_eq!(habitat.constructors[0].body.assignments[1].source, AssignSource::Constant);
        assert_eq!(habitat.method("grow").next().unwrap().statement_count, 1);
        let models = models_for(&["Monkey".to_string(), "Habitat".to_string()].into(), &p.catalog()).unwrap();
        let monkey = &models["Monkey"];
        assert_eq!(monkey.constructors[0].sets_fields.len(), 3);
        assert_eq!(monkey.setters.len(), 1);
        assert!(models["Habitat"].constructors[0].sets_fields.contains(&"coordinate".to_string()));
    }

    #[test]
    fn fuel_and_depth_limits_abort() {
        let src = "class L { static void spin() { while (true) { } } static int deep(int n) { return deep(n + 1); } }";
        let p = compile(&[("l.mj", src)]).unwrap();
        let small = Limits { fuel: 10_000, max_depth: 32 };
        let mut it = Interpreter::new(&p, small, None).unwrap();
        assert_eq!(it.call_static("L", "spin", vec![]).unwrap_err(), RuntimeError::OutOfFuel);
        let mut it = Interpreter::new(&p, small, None).unwrap();
        assert_eq!(it.call_static("L", "deep", vec![Value::Int(0)]).unwrap_err(), RuntimeError::StackOverflow);
    }

    #[test]
    fn arithmetic_follows_host_semantics() {
        let src = r#"class A {
            static int wrap() { int m = (-9223372036854775807 - 1); return m - 1; }
            static double mix() { return 7 / 2 + 7 / 2.0; }
            static Map<String, double> m() { Map<String, double> x = new Map<String, double>{"a": 1}; return put(x, "b", 2); }
            static String cat() { return "v" + 1 + true; }
        }"#;
        let p = compile(&[("a.mj", src)]).unwrap();
        let mut it = Interpreter::new(&p, Limits::default(), None).unwrap();
        assert!(matches!(it.call_static("A", "wrap", vec![]).unwrap(), Value::Int(i64::MAX)));
        assert!(matches!(it.call_static("A", "mix", vec![]).unwrap(), Value::Double(d) if d == 6.5));
        let Value::Map(m) = it.call_static("A", "m", vec![]).unwrap() else { panic!() };
        assert!(matches!(m[1].1, Value::Double(d) if d == 2.0));
        assert!(matches!(it.call_static("A", "cat", vec![]).unwrap(), Value::Str(s) if &*s == "v1true"));
    }
}
