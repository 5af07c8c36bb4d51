//! Seeded generator of small `mj` applications ("universes"), each building one root object.
//!
//! Every universe declares a handful of classes in one of four shapes, a driver `Main.main`
//! that builds an object tree bottom-up and finally calls `serialize(root)`. Children are
//! fully built and mutated before they are handed to a parent, and every object has a single
//! owner, so the recorded trace describes each object's final state.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CorpusOptions {
    /// Levels of nested objects, the root included.
    pub max_depth: usize,
    pub max_sequence: usize,
    pub max_classes: usize,
    /// Share of universes whose root carries a sequence longer than `bound`.
    pub over_bound_rate: f64,
    /// Capture bound on sequence length; over-bound sequences exceed it.
    pub bound: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions { max_depth: 4, max_sequence: 10, max_classes: 8, over_bound_rate: 0.0, bound: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Shape {
    /// One constructor taking every field.
    DataConstructor,
    /// Implicit constructor plus one setter per field.
    Bean,
    /// Public fields assigned by the driver.
    PublicFields,
    /// Private state changed only through multi-statement mutators.
    Encapsulated,
}

impl Shape {
    pub fn structure_based(self) -> bool {
        self != Shape::Encapsulated
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Leaf {
    Int,
    Double,
    Bool,
    Str,
    Enum(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum FieldType {
    Leaf(Leaf),
    Array(Leaf),
    Map(Leaf, Leaf),
    Object(usize),
    Objects(usize),
}

#[derive(Debug, Clone)]
enum Lit {
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(Option<String>),
    Enum(usize, usize),
    Array(Leaf, Vec<Lit>),
    Map(Leaf, Leaf, Vec<(Lit, Lit)>),
}

#[derive(Debug, Clone)]
enum Arg {
    Lit(Lit),
    Node(Option<usize>),
    Nodes(usize, Vec<usize>),
}

#[derive(Debug, Clone)]
enum Step {
    Call(String, Vec<Arg>),
    Assign(String, Arg),
}

#[derive(Debug, Clone)]
struct Field {
    name: String,
    ty: FieldType,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MutatorKind {
    Replace,
    Add,
    Scale,
    Flip,
    Put,
}

#[derive(Debug, Clone)]
struct Mutator {
    kind: MutatorKind,
    field: usize,
}

impl Mutator {
    fn name(&self, field: &str) -> String {
        let verb = match self.kind {
            MutatorKind::Replace => "change",
            MutatorKind::Add => "add",
            MutatorKind::Scale => "scale",
            MutatorKind::Flip => "flip",
            MutatorKind::Put => "put",
        };
        format!("{verb}{}", capitalize(field))
    }
}

#[derive(Debug, Clone)]
struct ClassSpec {
    name: String,
    shape: Shape,
    fields: Vec<Field>,
    /// Encapsulated only: fields initialized from constructor parameters.
    ctor_fields: Vec<usize>,
    mutators: Vec<Mutator>,
    /// Encapsulated only: the edit counter is bumped through a private helper.
    private_helper: bool,
    probe: bool,
}

#[derive(Debug, Clone)]
struct Node {
    class: usize,
    ctor_args: Vec<Arg>,
    steps: Vec<Step>,
}

/// One generated application.
#[derive(Debug, Clone)]
pub struct Universe {
    pub index: usize,
    /// Type declarations, without the driver.
    pub types: String,
    /// The `Main` class.
    pub driver: String,
    pub root_type: String,
    pub shapes: BTreeMap<String, Shape>,
    /// The root holds a sequence longer than the capture bound.
    pub over_bound: bool,
    pub objects: usize,
}

impl Universe {
    pub const TYPES_FILE: &'static str = "types.mj";
    pub const DRIVER_FILE: &'static str = "main.mj";

    pub fn class_names(&self) -> Vec<String> {
        self.shapes.keys().cloned().collect()
    }

    /// The type declarations alone, as a compilable source set.
    pub fn type_sources(&self) -> Vec<(String, String)> {
        vec![(Self::TYPES_FILE.into(), self.types.clone())]
    }

    /// Types and driver.
    pub fn app_sources(&self) -> Vec<(String, String)> {
        vec![(Self::TYPES_FILE.into(), self.types.clone()), (Self::DRIVER_FILE.into(), self.driver.clone())]
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

const STRINGS: &[&str] = &[
    "",
    "plain",
    "42, 42",
    "with \"quotes\"",
    "back\\slash",
    "line\nbreak",
    "tab\tand\rreturn",
    "\u{1}control",
    "é漢🙂",
    "null",
];

const DOUBLES: &[f64] = &[
    0.0,
    -0.0,
    1.5,
    -2.25,
    1e-7,
    1e300,
    f64::NAN,
    f64::INFINITY,
    f64::NEG_INFINITY,
    f64::MAX,
    f64::MIN_POSITIVE,
    5e-324,
];

const INTS: &[i64] = &[0, 1, -1, i64::MIN, i64::MAX, 42];

struct Gen {
    rng: ChaCha8Rng,
    opts: CorpusOptions,
    enums: Vec<Vec<String>>,
    classes: Vec<ClassSpec>,
    nodes: Vec<Node>,
}

impl Gen {
    fn leaf(&mut self) -> Leaf {
        match self.rng.random_range(0..5) {
            0 => Leaf::Int,
            1 => Leaf::Double,
            2 => Leaf::Bool,
            3 => Leaf::Str,
            _ => Leaf::Enum(self.enum_type()),
        }
    }

    fn key_leaf(&mut self) -> Leaf {
        if self.rng.random_bool(0.5) {
            Leaf::Int
        } else {
            Leaf::Str
        }
    }

    fn enum_type(&mut self) -> usize {
        if !self.enums.is_empty() && (self.enums.len() >= 3 || self.rng.random_bool(0.5)) {
            return self.rng.random_range(0..self.enums.len());
        }
        let n = self.rng.random_range(1..=4);
        self.enums.push(["RED", "GREEN", "BLUE", "AMBER"][..n].iter().map(|s| s.to_string()).collect());
        self.enums.len() - 1
    }

    fn leaf_type(&mut self) -> FieldType {
        match self.rng.random_range(0..10) {
            0..=5 => FieldType::Leaf(self.leaf()),
            6..=7 => FieldType::Array(self.leaf()),
            _ => {
                let k = self.key_leaf();
                FieldType::Map(k, self.leaf())
            }
        }
    }

    fn class(&mut self, depth: usize, under_trace_based: bool, allow_children: bool) -> usize {
        let idx = self.classes.len();
        let mut shapes = vec![Shape::DataConstructor, Shape::Bean, Shape::Encapsulated, Shape::Encapsulated];
        if !under_trace_based {
            shapes.push(Shape::PublicFields);
        }
        let shape = *shapes.choose(&mut self.rng).expect("non-empty");
        self.classes.push(ClassSpec {
            name: format!("Node{idx}"),
            shape,
            fields: Vec::new(),
            ctor_fields: Vec::new(),
            mutators: Vec::new(),
            private_helper: false,
            probe: false,
        });
        let below_tb = under_trace_based || shape == Shape::Encapsulated;
        let n = self.rng.random_range(0..=4);
        let mut fields = Vec::new();
        for i in 0..n {
            let nested = allow_children
                && depth + 1 < self.opts.max_depth
                && self.classes.len() < self.opts.max_classes
                && self.rng.random_bool(0.6);
            let ty = if nested {
                if self.rng.random_bool(0.25) {
                    FieldType::Objects(self.class(depth + 1, below_tb, false))
                } else {
                    FieldType::Object(self.class(depth + 1, below_tb, true))
                }
            } else {
                self.leaf_type()
            };
            fields.push(Field { name: format!("f{i}"), ty });
        }
        let spec = &mut self.classes[idx];
        spec.fields = fields;
        spec.probe = self.rng.random_bool(0.5);
        if shape == Shape::Encapsulated {
            let n = spec.fields.len();
            spec.ctor_fields = (0..n).filter(|_| self.rng.random_bool(0.5)).collect();
            spec.private_helper = self.rng.random_bool(0.5);
            for (i, f) in spec.fields.iter().enumerate() {
                let replace = !spec.ctor_fields.contains(&i) || self.rng.random_bool(0.3);
                if replace {
                    spec.mutators.push(Mutator { kind: MutatorKind::Replace, field: i });
                }
                let extra = match f.ty {
                    FieldType::Leaf(Leaf::Int) => Some(MutatorKind::Add),
                    FieldType::Leaf(Leaf::Double) => Some(MutatorKind::Scale),
                    FieldType::Leaf(Leaf::Bool) => Some(MutatorKind::Flip),
                    FieldType::Map(..) => Some(MutatorKind::Put),
                    _ => None,
                };
                if let Some(kind) = extra.filter(|_| self.rng.random_bool(0.6)) {
                    spec.mutators.push(Mutator { kind, field: i });
                }
            }
        }
        idx
    }

    fn lit(&mut self, leaf: Leaf) -> Lit {
        match leaf {
            Leaf::Int => Lit::Int(if self.rng.random_bool(0.3) {
                *INTS.choose(&mut self.rng).expect("non-empty")
            } else {
                self.rng.random_range(-1000..1000)
            }),
            Leaf::Double => Lit::Double(if self.rng.random_bool(0.4) {
                *DOUBLES.choose(&mut self.rng).expect("non-empty")
            } else {
                self.rng.random_range(-1e6..1e6) / 7.0
            }),
            Leaf::Bool => Lit::Bool(self.rng.random_bool(0.5)),
            Leaf::Str => Lit::Str(if self.rng.random_bool(0.1) {
                None
            } else if self.rng.random_bool(0.6) {
                Some(STRINGS.choose(&mut self.rng).expect("non-empty").to_string())
            } else {
                Some(format!("s{}", self.rng.random_range(0..10_000)))
            }),
            Leaf::Enum(e) => Lit::Enum(e, self.rng.random_range(0..self.enums[e].len())),
        }
    }

    fn non_null(&mut self, leaf: Leaf) -> Lit {
        loop {
            match self.lit(leaf) {
                Lit::Str(None) => continue,
                other => return other,
            }
        }
    }

    fn array(&mut self, leaf: Leaf, len: usize) -> Lit {
        let items = (0..len).map(|_| self.non_null(leaf)).collect();
        Lit::Array(leaf, items)
    }

    fn map(&mut self, key: Leaf, value: Leaf) -> Lit {
        let mut entries: Vec<(Lit, Lit)> = Vec::new();
        for _ in 0..self.rng.random_range(0..=4) {
            let k = self.non_null(key);
            let fresh = !entries.iter().any(|(e, _)| same_key(e, &k));
            if fresh {
                let v = self.non_null(value);
                entries.push((k, v));
            }
        }
        Lit::Map(key, value, entries)
    }

    fn value(&mut self, ty: &FieldType) -> Arg {
        match *ty {
            FieldType::Leaf(l) => Arg::Lit(self.lit(l)),
            FieldType::Array(l) => {
                let len = self.rng.random_range(0..=self.opts.max_sequence);
                Arg::Lit(self.array(l, len))
            }
            FieldType::Map(k, v) => Arg::Lit(self.map(k, v)),
            FieldType::Object(c) => {
                if self.rng.random_bool(0.1) {
                    Arg::Node(None)
                } else {
                    Arg::Node(Some(self.node(c)))
                }
            }
            FieldType::Objects(c) => {
                let n = self.rng.random_range(0..=3);
                Arg::Nodes(c, (0..n).map(|_| self.node(c)).collect())
            }
        }
    }

    fn pure_calls(&mut self, class: usize, out: &mut Vec<Step>) {
        let spec = &self.classes[class];
        if spec.probe && self.rng.random_bool(0.5) {
            out.push(Step::Call("probe".into(), vec![Arg::Lit(Lit::Int(self.rng.random_range(-50..50)))]));
        }
        let spec = &self.classes[class];
        if spec.shape == Shape::Encapsulated && !spec.fields.is_empty() && self.rng.random_bool(0.4) {
            let f = self.rng.random_range(0..spec.fields.len());
            out.push(Step::Call(format!("get{}", capitalize(&spec.fields[f].name)), vec![]));
        }
    }

    fn node(&mut self, class: usize) -> usize {
        let spec = self.classes[class].clone();
        let mut ctor_args = Vec::new();
        let mut steps = Vec::new();
        match spec.shape {
            Shape::DataConstructor => {
                ctor_args = spec.fields.iter().map(|f| self.value(&f.ty)).collect();
            }
            Shape::Bean => {
                for f in &spec.fields {
                    if self.rng.random_bool(0.85) {
                        let v = self.value(&f.ty);
                        steps.push(Step::Call(format!("set{}", capitalize(&f.name)), vec![v]));
                    }
                }
            }
            Shape::PublicFields => {
                for f in &spec.fields {
                    if self.rng.random_bool(0.85) {
                        let v = self.value(&f.ty);
                        steps.push(Step::Assign(f.name.clone(), v));
                    }
                }
            }
            Shape::Encapsulated => {
                ctor_args = spec.ctor_fields.iter().map(|&i| self.value(&spec.fields[i].ty)).collect();
                // Object-valued fields are attached at most once so every child keeps one owner.
                let mut attached: Vec<usize> = spec.ctor_fields.clone();
                let rounds = if spec.mutators.is_empty() { 0 } else { self.rng.random_range(0..=5) };
                for _ in 0..rounds {
                    self.pure_calls(class, &mut steps);
                    let m = spec.mutators.choose(&mut self.rng).expect("non-empty").clone();
                    let field = &spec.fields[m.field];
                    let object_valued = matches!(field.ty, FieldType::Object(_) | FieldType::Objects(_));
                    if object_valued && attached.contains(&m.field) {
                        continue;
                    }
                    let args = match m.kind {
                        MutatorKind::Replace => {
                            if object_valued {
                                attached.push(m.field);
                            }
                            vec![self.value(&field.ty)]
                        }
                        MutatorKind::Add => vec![Arg::Lit(self.lit(Leaf::Int))],
                        MutatorKind::Scale => vec![Arg::Lit(self.lit(Leaf::Double))],
                        MutatorKind::Flip => vec![],
                        MutatorKind::Put => {
                            let FieldType::Map(k, v) = field.ty else { unreachable!("put targets maps") };
                            vec![Arg::Lit(self.non_null(k)), Arg::Lit(self.lit(v))]
                        }
                    };
                    steps.push(Step::Call(m.name(&field.name), args));
                }
            }
        }
        self.pure_calls(class, &mut steps);
        self.nodes.push(Node { class, ctor_args, steps });
        self.nodes.len() - 1
    }
}

fn same_key(a: &Lit, b: &Lit) -> bool {
    match (a, b) {
        (Lit::Int(x), Lit::Int(y)) => x == y,
        (Lit::Str(x), Lit::Str(y)) => x == y,
        _ => false,
    }
}

/// Source text of a string literal.
fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn double_src(d: f64) -> String {
    if d.is_nan() {
        "Double.NaN".into()
    } else if d == f64::INFINITY {
        "Double.POSITIVE_INFINITY".into()
    } else if d == f64::NEG_INFINITY {
        "Double.NEGATIVE_INFINITY".into()
    } else {
        // Debug formatting is the shortest text that parses back to the same bits.
        let text = format!("{d:?}");
        if text.starts_with('-') {
            format!("({text})")
        } else {
            text
        }
    }
}

fn int_src(i: i64) -> String {
    if i == i64::MIN {
        "(-9223372036854775807 - 1)".into()
    } else if i < 0 {
        format!("({i})")
    } else {
        i.to_string()
    }
}

struct Render<'a> {
    enums: &'a [Vec<String>],
    classes: &'a [ClassSpec],
}

impl Render<'_> {
    fn leaf_type(&self, l: Leaf) -> String {
        match l {
            Leaf::Int => "int".into(),
            Leaf::Double => "double".into(),
            Leaf::Bool => "boolean".into(),
            Leaf::Str => "String".into(),
            Leaf::Enum(e) => format!("Kind{e}"),
        }
    }

    fn ty(&self, t: &FieldType) -> String {
        match t {
            FieldType::Leaf(l) => self.leaf_type(*l),
            FieldType::Array(l) => format!("{}[]", self.leaf_type(*l)),
            FieldType::Map(k, v) => format!("Map<{}, {}>", self.leaf_type(*k), self.leaf_type(*v)),
            FieldType::Object(c) => self.classes[*c].name.clone(),
            FieldType::Objects(c) => format!("{}[]", self.classes[*c].name),
        }
    }

    fn lit(&self, l: &Lit) -> String {
        match l {
            Lit::Int(i) => int_src(*i),
            Lit::Double(d) => double_src(*d),
            Lit::Bool(b) => b.to_string(),
            Lit::Str(None) => "null".into(),
            Lit::Str(Some(s)) => quote(s),
            Lit::Enum(e, c) => format!("Kind{e}.{}", self.enums[*e][*c]),
            Lit::Array(leaf, items) => {
                let items: Vec<String> = items.iter().map(|i| self.lit(i)).collect();
                format!("new {}[]{{{}}}", self.leaf_type(*leaf), items.join(", "))
            }
            Lit::Map(k, v, entries) => {
                let entries: Vec<String> =
                    entries.iter().map(|(a, b)| format!("{}: {}", self.lit(a), self.lit(b))).collect();
                format!("new Map<{}, {}>{{{}}}", self.leaf_type(*k), self.leaf_type(*v), entries.join(", "))
            }
        }
    }

    fn class(&self, spec: &ClassSpec, out: &mut String) {
        let _ = writeln!(out, "public class {} {{", spec.name);
        let encapsulated = spec.shape == Shape::Encapsulated;
        let visibility = if spec.shape == Shape::PublicFields { "public" } else { "private" };
        for f in &spec.fields {
            let _ = writeln!(out, "    {visibility} {} {};", self.ty(&f.ty), f.name);
        }
        if encapsulated {
            out.push_str("    private int edits;\n");
        }
        match spec.shape {
            Shape::DataConstructor => {
                let params: Vec<String> = spec.fields.iter().map(|f| format!("{} {}", self.ty(&f.ty), f.name)).collect();
                let _ = writeln!(out, "\n    public {}({}) {{", spec.name, params.join(", "));
                for f in &spec.fields {
                    let _ = writeln!(out, "        this.{0} = {0};", f.name);
                }
                out.push_str("    }\n");
            }
            Shape::Bean => {
                for f in &spec.fields {
                    let _ = write!(
                        out,
                        "\n    public void set{cap}({ty} {name}) {{\n        this.{name} = {name};\n    }}\n",
                        cap = capitalize(&f.name),
                        ty = self.ty(&f.ty),
                        name = f.name
                    );
                }
            }
            Shape::PublicFields => {}
            Shape::Encapsulated => self.encapsulated(spec, out),
        }
        if spec.probe {
            let body = if encapsulated { "int r = this.edits + k;" } else { "int r = k + 1;" };
            let _ = write!(out, "\n    public int probe(int k) {{\n        {body}\n        return r;\n    }}\n");
        }
        out.push_str("}\n");
    }

    fn encapsulated(&self, spec: &ClassSpec, out: &mut String) {
        let params: Vec<String> = spec
            .ctor_fields
            .iter()
            .map(|&i| format!("{} {}", self.ty(&spec.fields[i].ty), spec.fields[i].name))
            .collect();
        let _ = writeln!(out, "\n    public {}({}) {{", spec.name, params.join(", "));
        for (i, f) in spec.fields.iter().enumerate() {
            if spec.ctor_fields.contains(&i) {
                let _ = writeln!(out, "        this.{0} = {0};", f.name);
            } else if let FieldType::Map(..) = f.ty {
                let _ = writeln!(out, "        this.{} = new {}();", f.name, self.ty(&f.ty));
            }
        }
        out.push_str("        this.edits = 0;\n    }\n");
        let touch = if spec.private_helper { "this.touch();" } else { "this.edits = this.edits + 1;" };
        for m in &spec.mutators {
            let f = &spec.fields[m.field];
            let ty = self.ty(&f.ty);
            let name = m.name(&f.name);
            let (params, body) = match m.kind {
                MutatorKind::Replace => (format!("{ty} value"), format!("{ty} next = value;\n        this.{} = next;", f.name)),
                MutatorKind::Add => ("int delta".into(), format!("this.{0} = this.{0} + delta;", f.name)),
                MutatorKind::Scale => ("double factor".into(), format!("this.{0} = this.{0} * factor;", f.name)),
                MutatorKind::Flip => (String::new(), format!("this.{0} = !this.{0};", f.name)),
                MutatorKind::Put => {
                    let FieldType::Map(k, v) = f.ty else { unreachable!("put targets maps") };
                    (
                        format!("{} key, {} value", self.leaf_type(k), self.leaf_type(v)),
                        format!("this.{0} = put(this.{0}, key, value);", f.name),
                    )
                }
            };
            let _ = write!(out, "\n    public void {name}({params}) {{\n        {body}\n        {touch}\n    }}\n");
        }
        for f in &spec.fields {
            let _ = write!(
                out,
                "\n    public {} get{}() {{\n        return this.{};\n    }}\n",
                self.ty(&f.ty),
                capitalize(&f.name),
                f.name
            );
        }
        if spec.private_helper {
            out.push_str("\n    private void touch() {\n        this.edits = this.edits + 1;\n    }\n");
        }
    }

    fn arg(&self, a: &Arg, vars: &[String]) -> String {
        match a {
            Arg::Lit(l) => self.lit(l),
            Arg::Node(None) => "null".into(),
            Arg::Node(Some(n)) => vars[*n].clone(),
            Arg::Nodes(c, items) => {
                let items: Vec<&str> = items.iter().map(|n| vars[*n].as_str()).collect();
                format!("new {}[]{{{}}}", self.classes[*c].name, items.join(", "))
            }
        }
    }
}

fn children(a: &Arg) -> Vec<usize> {
    match a {
        Arg::Node(Some(n)) => vec![*n],
        Arg::Nodes(_, items) => items.clone(),
        _ => Vec::new(),
    }
}

fn emit_node(n: usize, nodes: &[Node], r: &Render, vars: &[String], out: &mut String) {
    let node = &nodes[n];
    let args = node.ctor_args.iter().chain(node.steps.iter().flat_map(|s| match s {
        Step::Call(_, args) => args.iter().collect::<Vec<_>>(),
        Step::Assign(_, a) => vec![a],
    }));
    for child in args.flat_map(children) {
        emit_node(child, nodes, r, vars, out);
    }
    let class = &r.classes[node.class].name;
    let var = &vars[n];
    let args: Vec<String> = node.ctor_args.iter().map(|a| r.arg(a, vars)).collect();
    let _ = writeln!(out, "        {class} {var} = new {class}({});", args.join(", "));
    for s in &node.steps {
        match s {
            Step::Call(m, args) => {
                let args: Vec<String> = args.iter().map(|a| r.arg(a, vars)).collect();
                let _ = writeln!(out, "        {var}.{m}({});", args.join(", "));
            }
            Step::Assign(f, a) => {
                let _ = writeln!(out, "        {var}.{f} = {};", r.arg(a, vars));
            }
        }
    }
}

/// Generates universe `index` of the corpus for `seed`. Universes are independent of each other.
pub fn generate_universe(seed: u64, index: usize, opts: &CorpusOptions) -> Universe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let over_bound = opts.over_bound_rate > 0.0 && rng.random_bool(opts.over_bound_rate.min(1.0));
    let mut g = Gen { rng, opts: *opts, enums: Vec::new(), classes: Vec::new(), nodes: Vec::new() };
    let root_class = g.class(0, false, true);
    if over_bound {
        let spec = &mut g.classes[root_class];
        let field = spec.fields.len();
        spec.fields.push(Field { name: format!("f{field}"), ty: FieldType::Array(Leaf::Int) });
        if spec.shape == Shape::Encapsulated {
            spec.ctor_fields.push(field);
        }
    }
    let root = g.node(root_class);
    if over_bound {
        // The over-bound sequence replaces whatever value the root got for its last field.
        let len = g.rng.random_range(opts.bound + 1..=opts.bound.max(1) * 4);
        let big = Arg::Lit(g.array(Leaf::Int, len));
        let spec = &g.classes[root_class];
        let node = &mut g.nodes[root];
        match spec.shape {
            Shape::DataConstructor | Shape::Encapsulated => *node.ctor_args.last_mut().expect("added above") = big,
            Shape::Bean | Shape::PublicFields => {
                let field = format!("f{}", spec.fields.len() - 1);
                let setter = format!("set{}", capitalize(&field));
                node.steps.retain(|s| !matches!(s, Step::Call(m, _) if *m == setter) && !matches!(s, Step::Assign(f, _) if *f == field));
                node.steps.push(if spec.shape == Shape::Bean { Step::Call(setter, vec![big]) } else { Step::Assign(field, big) });
            }
        }
    }

    let r = Render { enums: &g.enums, classes: &g.classes };
    let mut types = String::new();
    for (i, constants) in g.enums.iter().enumerate() {
        let _ = writeln!(types, "public enum Kind{i} {{ {} }}\n", constants.join(", "));
    }
    for (i, spec) in g.classes.iter().enumerate() {
        if i > 0 {
            types.push('\n');
        }
        r.class(spec, &mut types);
    }
    let vars: Vec<String> = (0..g.nodes.len()).map(|i| format!("o{i}")).collect();
    let mut driver = String::from("public class Main {\n    public static void main() {\n");
    emit_node(root, &g.nodes, &r, &vars, &mut driver);
    let _ = writeln!(driver, "        serialize({});", vars[root]);
    driver.push_str("    }\n}\n");

    Universe {
        index,
        types,
        driver,
        root_type: g.classes[root_class].name.clone(),
        shapes: g.classes.iter().map(|c| (c.name.clone(), c.shape)).collect(),
        over_bound,
        objects: g.nodes.len(),
    }
}

#[cfg(test)]
mod tests {
    use plaincode_lang::{compile, Interpreter, Limits};

    use super::*;

    #[test]
    fn literals_parse_back_exactly() {
        let doubles: Vec<String> = DOUBLES.iter().map(|d| double_src(*d)).collect();
        let src = format!(
            "class L {{ static double[] d() {{ return new double[]{{{}}}; }} static String s() {{ return {}; }} static int m() {{ return {}; }} }}",
            doubles.join(", "),
            quote(STRINGS[7]),
            int_src(i64::MIN)
        );
        let p = compile(&[("l.mj", &src)]).unwrap();
        let mut it = Interpreter::new(&p, Limits::default(), None).unwrap();
        let plaincode_lang::Value::Array(items) = it.call_static("L", "d", vec![]).unwrap() else { panic!() };
        let bits: Vec<u64> = items
            .borrow()
            .iter()
            .map(|v| match v {
                plaincode_lang::Value::Double(d) => d.to_bits(),
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(bits, DOUBLES.iter().map(|d| d.to_bits()).collect::<Vec<_>>());
        assert!(matches!(it.call_static("L", "s", vec![]).unwrap(), plaincode_lang::Value::Str(s) if &*s == STRINGS[7]));
        assert!(matches!(it.call_static("L", "m", vec![]).unwrap(), plaincode_lang::Value::Int(i64::MIN)));
    }

    #[test]
    fn universes_compile_and_run() {
        for i in 0..60 {
            let u = generate_universe(7, i, &CorpusOptions::default());
            let files = u.app_sources();
            let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let p = compile(&refs).unwrap_or_else(|e| panic!("universe {i}: {e}\n{}\n{}", u.types, u.driver));
            let mut it = Interpreter::new(&p, Limits::default(), None).unwrap();
            it.call_static("Main", "main", vec![]).unwrap_or_else(|e| panic!("universe {i}: {e}\n{}", u.driver));
        }
    }

    #[test]
    fn generation_is_deterministic_per_index() {
        let opts = CorpusOptions { over_bound_rate: 0.5, ..Default::default() };
        let a = generate_universe(3, 11, &opts);
        let b = generate_universe(3, 11, &opts);
        assert_eq!((a.types, a.driver), (b.types, b.driver));
        let c = generate_universe(3, 12, &opts);
        assert_ne!(generate_universe(3, 11, &opts).driver, c.driver);
    }

    #[test]
    fn shapes_respect_depth_and_ownership() {
        for i in 0..200 {
            let u = generate_universe(1, i, &CorpusOptions::default());
            assert!(u.shapes.len() <= CorpusOptions::default().max_classes);
            assert!(u.driver.matches("serialize(").count() == 1);
        }
    }

    #[test]
    fn over_bound_rate_labels_some_universes() {
        let opts = CorpusOptions { over_bound_rate: 0.5, ..Default::default() };
        let labelled = (0..100).filter(|&i| generate_universe(9, i, &opts).over_bound).count();
        assert!((25..=75).contains(&labelled), "{labelled}");
        let none = CorpusOptions::default();
        assert!((0..100).all(|i| !generate_universe(9, i, &none).over_bound));
    }
}
