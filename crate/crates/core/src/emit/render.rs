//! Text backend for the Java-like host language.

use std::fmt::Write as _;

use super::transform::HelperRegistry;
use super::{EmissionUnit, Expr, Helper, Section, Stmt};

pub const FILE_EXTENSION: &str = "mj";
const INDENT: &str = "    ";

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Round-trip exact double literal.
pub fn double_literal(d: f64) -> String {
    if d.is_nan() && d.is_sign_negative() {
        "(-Double.NaN)".into()
    } else if d.is_nan() {
        "Double.NaN".into()
    } else if d == f64::INFINITY {
        "Double.POSITIVE_INFINITY".into()
    } else if d == f64::NEG_INFINITY {
        "Double.NEGATIVE_INFINITY".into()
    } else {
        format!("{d:?}")
    }
}

pub fn int_literal(i: i64) -> String {
    if i == i64::MIN {
        "(-9223372036854775807 - 1)".into()
    } else {
        i.to_string()
    }
}

fn args(list: &[Expr]) -> String {
    list.iter().map(expr).collect::<Vec<_>>().join(", ")
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Int(i) => int_literal(*i),
        Expr::Double(d) => double_literal(*d),
        Expr::Bool(b) => b.to_string(),
        Expr::Text(s) => escape_text(s),
        Expr::Null => "null".into(),
        Expr::Local(n) => n.clone(),
        Expr::EnumConstant { type_name, constant } => format!("{type_name}.{constant}"),
        Expr::StaticRead(m) => format!("{}.{}", m.owner, m.member),
        Expr::New { type_name, args: a } => format!("new {type_name}({})", args(a)),
        Expr::StaticCall { owner, method, args: a } => format!("{owner}.{method}({})", args(a)),
        Expr::Call { target, method, args: a } => format!("{}.{method}({})", expr(target), args(a)),
        Expr::Sequence { elem_type, elements } => format!("new {elem_type}[]{{{}}}", args(elements)),
        Expr::Map { key_type, value_type, entries } => {
            let body = entries.iter().map(|(k, v)| format!("{}: {}", expr(k), expr(v))).collect::<Vec<_>>().join(", ");
            format!("new Map<{key_type}, {value_type}>{{{body}}}")
        }
        Expr::HelperCall { name } => format!("{name}()"),
        Expr::Placeholder { reason } => format!("__unresolved({})", escape_text(reason)),
    }
}

pub fn stmt(s: &Stmt) -> String {
    match s {
        Stmt::Let { name, type_name, value } => format!("{type_name} {name} = {};", expr(value)),
        Stmt::Expr(e) => format!("{};", expr(e)),
        Stmt::Assign { target, field, value } => format!("{target}.{field} = {};", expr(value)),
        Stmt::Assert { expected, actual } => format!("assertEquals({}, {});", expr(expected), expr(actual)),
    }
}

/// Statement lines of a unit at the given indentation, with section comments where present.
pub fn body(unit: &EmissionUnit, indent: usize) -> String {
    let pad = INDENT.repeat(indent);
    let mut out = String::new();
    let mut section = Section::None;
    for line in &unit.lines {
        if line.section != section {
            section = line.section;
            let label = match section {
                Section::Arrange => "// Arrange",
                Section::Act => "// Act",
                Section::Assert => "// Assert",
                Section::None => "",
            };
            if !label.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "{pad}{label}");
            }
        }
        let _ = writeln!(out, "{pad}{}", stmt(&line.stmt));
    }
    out
}

pub fn helper(h: &Helper, indent: usize) -> String {
    let pad = INDENT.repeat(indent);
    let mut out = format!("{pad}static {} {}() {{\n", h.type_name, h.name);
    for s in &h.body {
        let _ = writeln!(out, "{pad}{INDENT}{}", stmt(s));
    }
    let _ = write!(out, "{pad}{INDENT}return {};\n{pad}}}\n", h.result);
    out
}

/// A class with one static method returning the reconstructed value, plus its helpers.
pub fn reconstruction_class(unit: &EmissionUnit, registry: &HelperRegistry, class_name: &str, method: &str) -> String {
    let mut out = format!("public class {class_name} {{\n");
    let _ = writeln!(out, "{INDENT}public static {} {method}() {{", unit.root_type);
    out.push_str(&body(unit, 2));
    let _ = writeln!(out, "{INDENT}{INDENT}return {};", expr(&unit.root));
    let _ = writeln!(out, "{INDENT}}}");
    for h in registry.reachable(unit.statements()) {
        out.push('\n');
        out.push_str(&helper(h, 1));
    }
    out.push_str("}\n");
    out
}
