//! Structural equality over object graphs, cycle-safe by bisimulation.

use std::collections::HashSet;
use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// A value inside some object graph; objects are referenced through the graph's handle type.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphValue<R> {
    Null,
    Int(i64),
    Double(f64),
    Bool(bool),
    Text(String),
    Enum { type_name: String, constant: String },
    Sequence(Vec<GraphValue<R>>),
    Map(Vec<(GraphValue<R>, GraphValue<R>)>),
    Object(R),
}

pub trait ObjectGraph {
    type Ref: Copy + Eq + Hash + Debug;
    fn type_name(&self, r: Self::Ref) -> String;
    /// Field values in a stable order.
    fn fields(&self, r: Self::Ref) -> Vec<(String, GraphValue<Self::Ref>)>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EqualityOptions {
    /// Absolute tolerance for doubles; `None` compares bit patterns.
    pub float_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "outcome")]
pub enum Equality {
    Equal,
    Unequal { path: String, detail: String },
}

impl Equality {
    pub fn is_equal(&self) -> bool {
        matches!(self, Equality::Equal)
    }
}

struct Cmp<'g, A: ObjectGraph, B: ObjectGraph> {
    a: &'g A,
    b: &'g B,
    opts: EqualityOptions,
    assumed: HashSet<(A::Ref, B::Ref)>,
}

fn kind<R>(v: &GraphValue<R>) -> &'static str {
    match v {
        GraphValue::Null => "null",
        GraphValue::Int(_) => "int",
        GraphValue::Double(_) => "double",
        GraphValue::Bool(_) => "boolean",
        GraphValue::Text(_) => "text",
        GraphValue::Enum { .. } => "enum",
        GraphValue::Sequence(_) => "sequence",
        GraphValue::Map(_) => "map",
        GraphValue::Object(_) => "object",
    }
}

impl<A: ObjectGraph, B: ObjectGraph> Cmp<'_, A, B> {
    fn doubles(&self, x: f64, y: f64) -> bool {
        match self.opts.float_tolerance {
            None => x.to_bits() == y.to_bits(),
            Some(tol) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol,
        }
    }

    fn value(&mut self, x: &GraphValue<A::Ref>, y: &GraphValue<B::Ref>, path: &str) -> Result<(), (String, String)> {
        use GraphValue::*;
        let differ = |detail: String| Err((path.to_string(), detail));
        match (x, y) {
            (Null, Null) => Ok(()),
            (Int(p), Int(q)) if p == q => Ok(()),
            (Bool(p), Bool(q)) if p == q => Ok(()),
            (Text(p), Text(q)) if p == q => Ok(()),
            (Double(p), Double(q)) if self.doubles(*p, *q) => Ok(()),
            (Enum { type_name: t1, constant: c1 }, Enum { type_name: t2, constant: c2 }) if t1 == t2 && c1 == c2 => Ok(()),
            (Sequence(p), Sequence(q)) => {
                if p.len() != q.len() {
                    return differ(format!("length {} vs {}", p.len(), q.len()));
                }
                for (i, (e, f)) in p.iter().zip(q).enumerate() {
                    self.value(e, f, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            (Map(p), Map(q)) => {
                if p.len() != q.len() {
                    return differ(format!("size {} vs {}", p.len(), q.len()));
                }
                for (i, ((k1, v1), (k2, v2))) in p.iter().zip(q).enumerate() {
                    self.value(k1, k2, &format!("{path}{{key {i}}}"))?;
                    self.value(v1, v2, &format!("{path}{{value {i}}}"))?;
                }
                Ok(())
            }
            (Object(r), Object(s)) => self.object(*r, *s, path),
            (p, q) if kind(p) == kind(q) => differ(format!("{p:?} vs {q:?}").replace("Object(", "(")),
            (p, q) => differ(format!("{} vs {}", kind(p), kind(q))),
        }
    }

    fn object(&mut self, r: A::Ref, s: B::Ref, path: &str) -> Result<(), (String, String)> {
        if !self.assumed.insert((r, s)) {
            return Ok(());
        }
        let (t1, t2) = (self.a.type_name(r), self.b.type_name(s));
        if t1 != t2 {
            return Err((path.to_string(), format!("type {t1} vs {t2}")));
        }
        let mut f1 = self.a.fields(r);
        let mut f2 = self.b.fields(s);
        f1.sort_by(|x, y| x.0.cmp(&y.0));
        f2.sort_by(|x, y| x.0.cmp(&y.0));
        let n1: Vec<_> = f1.iter().map(|f| &f.0).collect();
        let n2: Vec<_> = f2.iter().map(|f| &f.0).collect();
        if n1 != n2 {
            return Err((path.to_string(), format!("fields {n1:?} vs {n2:?}")));
        }
        for ((name, x), (_, y)) in f1.iter().zip(&f2) {
            self.value(x, y, &format!("{path}.{name}"))?;
        }
        Ok(())
    }
}

/// Compares two values field by field, following references on both sides in lockstep.
pub fn deep_equals<A: ObjectGraph, B: ObjectGraph>(
    a: &A,
    x: &GraphValue<A::Ref>,
    b: &B,
    y: &GraphValue<B::Ref>,
    opts: EqualityOptions,
) -> Equality {
    let mut cmp = Cmp { a, b, opts, assumed: HashSet::new() };
    match cmp.value(x, y, "root") {
        Ok(()) => Equality::Equal,
        Err((path, detail)) => Equality::Unequal { path, detail },
    }
}

/// A plain in-memory graph: each object is a type name plus named fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimpleGraph {
    pub objects: Vec<(String, Vec<(String, GraphValue<usize>)>)>,
}

impl SimpleGraph {
    pub fn add(&mut self, type_name: &str, fields: Vec<(&str, GraphValue<usize>)>) -> usize {
        self.objects.push((type_name.to_string(), fields.into_iter().map(|(n, v)| (n.to_string(), v)).collect()));
        self.objects.len() - 1
    }

    pub fn set(&mut self, obj: usize, field: &str, value: GraphValue<usize>) {
        let fields = &mut self.objects[obj].1;
        match fields.iter_mut().find(|(n, _)| n == field) {
            Some(slot) => slot.1 = value,
            None => fields.push((field.to_string(), value)),
        }
    }
}

impl ObjectGraph for SimpleGraph {
    type Ref = usize;

    fn type_name(&self, r: usize) -> String {
        self.objects[r].0.clone()
    }

    fn fields(&self, r: usize) -> Vec<(String, GraphValue<usize>)> {
        self.objects[r].1.clone()
    }
}
