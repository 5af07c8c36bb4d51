//! Rewrites on emitted units: literal inlining, cross-unit deduplication and helper outlining.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::RangeInclusive;

use super::naming::{capitalize, sanitize};
use super::{BlockId, EmissionUnit, Expr, Helper, Line, Stmt};

pub const DEFAULT_OUTLINE_THRESHOLD: usize = 5;

/// File-level registry of helper routines: identical bodies share one helper, names are unique.
#[derive(Debug, Clone, Default)]
pub struct HelperRegistry {
    helpers: Vec<Helper>,
    by_key: HashMap<String, String>,
    names: BTreeSet<String>,
}

/// Text identifying a statement list up to the names of its locals.
pub fn normalized_key(type_name: &str, body: &[Stmt], result: &Expr) -> String {
    let mut order: Vec<String> = Vec::new();
    let mut note = |n: &str| {
        if !order.iter().any(|o| o == n) {
            order.push(n.to_string());
        }
    };
    for s in body {
        if let Some(d) = s.defined() {
            note(d);
        }
        s.visit_locals(&mut note);
    }
    result.visit_locals(&mut note);
    let map: HashMap<String, String> = order.iter().enumerate().map(|(i, n)| (n.clone(), format!("v{i}"))).collect();
    let rename = |n: &str| map.get(n).cloned().unwrap_or_else(|| n.to_string());
    let mut body = body.to_vec();
    body.iter_mut().for_each(|s| s.rename(&rename));
    let mut result = result.clone();
    result.rewrite_locals(&mut |n| Some(Expr::Local(rename(n))));
    format!("{type_name}|{body:?}|{result:?}")
}

/// `create<Type>` with array and generic types spelled out as identifier text.
pub fn helper_base_name(type_name: &str) -> String {
    let mut t = type_name.to_string();
    while let Some(elem) = t.strip_suffix("[]") {
        t = format!("{elem}Array");
    }
    let t = t.split('<').next().unwrap_or(&t).to_string();
    sanitize(&format!("create{}", capitalize(&t)))
}

impl HelperRegistry {
    pub fn new() -> Self {
        HelperRegistry::default()
    }

    /// Keeps helper names clear of other names in the same file (test methods, for instance).
    pub fn reserve_name(&mut self, name: &str) {
        self.names.insert(name.to_string());
    }

    /// Returns the helper name for the body, adding a new helper unless an identical one exists.
    pub fn register(&mut self, type_name: &str, body: Vec<Stmt>, result: &str) -> String {
        let key = normalized_key(type_name, &body, &Expr::Local(result.to_string()));
        if let Some(name) = self.by_key.get(&key) {
            return name.clone();
        }
        let base = helper_base_name(type_name);
        let mut name = base.clone();
        let mut n = 1;
        while self.names.contains(&name) {
            name = format!("{base}{n}");
            n += 1;
        }
        self.names.insert(name.clone());
        self.by_key.insert(key, name.clone());
        self.helpers.push(Helper { name: name.clone(), type_name: type_name.to_string(), body, result: result.to_string() });
        name
    }

    pub fn get(&self, name: &str) -> Option<&Helper> {
        self.helpers.iter().find(|h| h.name == name)
    }

    pub fn helpers(&self) -> &[Helper] {
        &self.helpers
    }

    /// Helpers reachable from the statements, in order of first use (depth first).
    pub fn reachable<'a>(&self, stmts: impl IntoIterator<Item = &'a Stmt>) -> Vec<&Helper> {
        let mut out: Vec<&Helper> = Vec::new();
        fn visit<'h>(reg: &'h HelperRegistry, name: &str, out: &mut Vec<&'h Helper>) {
            if out.iter().any(|h| h.name == name) {
                return;
            }
            let Some(h) = reg.get(name) else { return };
            out.push(h);
            for s in &h.body {
                let mut called = Vec::new();
                s.visit_helpers(&mut |n| called.push(n.to_string()));
                for c in called {
                    visit(reg, &c, out);
                }
            }
        }
        for s in stmts {
            let mut called = Vec::new();
            s.visit_helpers(&mut |n| called.push(n.to_string()));
            for c in called {
                visit(self, &c, &mut out);
            }
        }
        out
    }
}

fn block_range(unit: &EmissionUnit, id: BlockId) -> Option<RangeInclusive<usize>> {
    let first = unit.lines.iter().position(|l| l.blocks.contains(&id))?;
    let last = unit.lines.iter().rposition(|l| l.blocks.contains(&id))?;
    Some(first..=last)
}

fn block_depth(unit: &EmissionUnit, id: BlockId) -> usize {
    unit.lines.iter().find_map(|l| l.blocks.iter().position(|b| *b == id)).unwrap_or(0)
}

/// Range of a block that can move into a helper unchanged: contiguous, one section, no
/// outside locals used inside, and only the block's result used outside.
fn extractable(unit: &EmissionUnit, id: BlockId) -> Option<RangeInclusive<usize>> {
    let block = unit.blocks.get(&id)?;
    let range = block_range(unit, id)?;
    let inside = &unit.lines[range.clone()];
    if inside.iter().any(|l| !l.blocks.contains(&id) || l.section != inside[0].section) {
        return None;
    }
    if inside.iter().any(|l| matches!(l.stmt, Stmt::Assert { .. })) {
        return None;
    }
    let defined: BTreeSet<&str> = inside.iter().filter_map(|l| l.stmt.defined()).collect();
    if !defined.contains(block.var.as_str()) {
        return None;
    }
    let mut self_contained = true;
    for l in inside {
        l.stmt.visit_locals(&mut |n| self_contained &= defined.contains(n));
    }
    if !self_contained {
        return None;
    }
    let mut leaks = false;
    let outside = unit.lines[..*range.start()].iter().chain(&unit.lines[range.end() + 1..]);
    for l in outside {
        l.stmt.visit_locals(&mut |n| leaks |= n != block.var && defined.contains(n));
    }
    unit.root.visit_locals(&mut |n| leaks |= n != block.var && defined.contains(n));
    (!leaks).then_some(range)
}

fn outline(unit: &mut EmissionUnit, id: BlockId, range: RangeInclusive<usize>, registry: &mut HelperRegistry) {
    let block = unit.blocks[&id].clone();
    let first = unit.lines[*range.start()].clone();
    let outer: Vec<BlockId> = first.blocks.iter().take_while(|b| **b != id).copied().collect();
    let removed: Vec<Line> = unit.lines.splice(range.clone(), std::iter::empty()).collect();
    let body: Vec<Stmt> = removed.iter().map(|l| l.stmt.clone()).collect();
    let inner: BTreeSet<BlockId> = removed.iter().flat_map(|l| l.blocks.iter().copied()).filter(|b| !outer.contains(b)).collect();
    let name = registry.register(&block.type_name, body, &block.var);
    unit.lines.insert(
        *range.start(),
        Line {
            stmt: Stmt::Let { name: block.var.clone(), type_name: block.type_name.clone(), value: Expr::HelperCall { name: name.clone() } },
            section: first.section,
            blocks: outer,
        },
    );
    for b in inner {
        unit.blocks.remove(&b);
    }
    refresh_helpers(unit, registry);
}

fn refresh_helpers(unit: &mut EmissionUnit, registry: &HelperRegistry) {
    unit.helpers = registry.reachable(unit.lines.iter().map(|l| &l.stmt)).into_iter().map(|h| h.name.clone()).collect();
}

/// Moves every reconstruction longer than `threshold` statements into a helper, innermost first.
pub fn outline_helpers(unit: &mut EmissionUnit, threshold: usize, registry: &mut HelperRegistry) {
    let threshold = threshold.max(1);
    let mut ids: Vec<BlockId> = unit.blocks.keys().copied().collect();
    ids.sort_by_key(|id| std::cmp::Reverse((block_depth(unit, *id), *id)));
    for id in ids {
        if !unit.blocks.contains_key(&id) {
            continue;
        }
        if let Some(range) = extractable(unit, id) {
            if range.clone().count() > threshold {
                outline(unit, id, range, registry);
            }
        }
    }
}

/// Collapses reconstructions that occur more than once (within or across units, up to local
/// names) into shared helpers.
pub fn deduplicate(units: &mut [EmissionUnit], registry: &mut HelperRegistry) {
    let key_of = |unit: &EmissionUnit, id: BlockId, range: &RangeInclusive<usize>| {
        let body: Vec<Stmt> = unit.lines[range.clone()].iter().map(|l| l.stmt.clone()).collect();
        normalized_key(&unit.blocks[&id].type_name, &body, &Expr::Local(unit.blocks[&id].var.clone()))
    };
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for unit in units.iter() {
        for id in unit.blocks.keys() {
            if let Some(range) = extractable(unit, *id).filter(|r| r.clone().count() >= 2) {
                *counts.entry(key_of(unit, *id, &range)).or_default() += 1;
            }
        }
    }
    for unit in units.iter_mut() {
        let mut ids: Vec<BlockId> = unit.blocks.keys().copied().collect();
        ids.sort_by_key(|id| (block_depth(unit, *id), *id));
        for id in ids {
            if !unit.blocks.contains_key(&id) {
                continue;
            }
            let Some(range) = extractable(unit, id).filter(|r| r.clone().count() >= 2) else { continue };
            if counts.get(&key_of(unit, id, &range)).copied().unwrap_or(0) >= 2 {
                outline(unit, id, range, registry);
            }
        }
    }
}

/// Folds single-use literal locals into their use site when both sit in the same test section.
pub fn inline_primitives(unit: &mut EmissionUnit) {
    loop {
        let mut uses: HashMap<String, usize> = HashMap::new();
        let mut targets: BTreeSet<String> = BTreeSet::new();
        for l in &unit.lines {
            l.stmt.visit_locals(&mut |n| *uses.entry(n.to_string()).or_default() += 1);
            if let Stmt::Assign { target, .. } = &l.stmt {
                targets.insert(target.clone());
            }
        }
        unit.root.visit_locals(&mut |n| *uses.entry(n.to_string()).or_default() += 10);
        let candidate = unit.lines.iter().enumerate().find_map(|(i, l)| match &l.stmt {
            Stmt::Let { name, value, .. } if value.is_literal() && uses.get(name) == Some(&1) && !targets.contains(name) => {
                let j = unit.lines.iter().enumerate().skip(i + 1).find_map(|(j, m)| {
                    let mut hit = false;
                    m.stmt.visit_locals(&mut |n| hit |= n == name);
                    hit.then_some(j)
                })?;
                (unit.lines[j].section == l.section).then(|| (i, j, name.clone(), value.clone()))
            }
            _ => None,
        });
        let Some((i, j, name, value)) = candidate else { break };
        unit.lines[j].stmt.rewrite_locals(&mut |n| (n == name).then(|| value.clone()));
        unit.lines.remove(i);
    }
    let used: BTreeSet<BlockId> = unit.lines.iter().flat_map(|l| l.blocks.iter().copied()).collect();
    unit.blocks.retain(|id, _| used.contains(id));
}
