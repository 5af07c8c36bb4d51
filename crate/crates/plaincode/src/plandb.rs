//! The plan database written by `analyze`: points, traced types, models and plans.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use plaincode_core::wire::{check_header, encode_header, DecodeError};
use plaincode_core::{CostTable, ReconstructionPlan, TypeModel};
use serde::{Deserialize, Serialize};

pub const PLAN_DB_FORMAT: &str = "plaincode-plandb";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanDb {
    pub points: Vec<String>,
    /// Every type whose instances the recorder registers.
    pub traced: BTreeSet<String>,
    pub costs: CostTable,
    pub models: BTreeMap<String, TypeModel>,
    /// Structure-based plans by target type.
    pub plans: BTreeMap<String, ReconstructionPlan>,
    /// Composite types without a feasible plan, with the reason. They are rebuilt from the trace.
    pub infeasible: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "camelCase", rename_all_fields = "camelCase")]
enum Line {
    Points { points: Vec<String> },
    Traced { types: BTreeSet<String> },
    Costs { costs: CostTable },
    Model { model: TypeModel },
    Plan { plan: ReconstructionPlan },
    Infeasible { type_name: String, reason: String },
}

impl PlanDb {
    /// Types rebuilt by replaying their trace.
    pub fn trace_based(&self) -> impl Iterator<Item = &String> {
        self.traced.iter().filter(|t| !self.plans.contains_key(*t))
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut lines = vec![
            Line::Points { points: self.points.clone() },
            Line::Traced { types: self.traced.clone() },
            Line::Costs { costs: self.costs.clone() },
        ];
        lines.extend(self.models.values().map(|m| Line::Model { model: m.clone() }));
        lines.extend(self.plans.values().map(|p| Line::Plan { plan: p.clone() }));
        lines.extend(
            self.infeasible.iter().map(|(t, r)| Line::Infeasible { type_name: t.clone(), reason: r.clone() }),
        );
        writeln!(out, "{}", encode_header(PLAN_DB_FORMAT))?;
        for line in lines {
            writeln!(out, "{}", serde_json::to_string(&line).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn read(reader: impl BufRead) -> Result<PlanDb, DecodeError> {
        let mut db = PlanDb::default();
        let mut saw_header = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                check_header(&line, PLAN_DB_FORMAT, i + 1)?;
                saw_header = true;
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| DecodeError::Malformed { line: i + 1, message: e.to_string() })?;
            match parsed {
                Line::Points { points } => db.points = points,
                Line::Traced { types } => db.traced = types,
                Line::Costs { costs } => db.costs = costs,
                Line::Model { model } => {
                    db.models.insert(model.type_name.clone(), model);
                }
                Line::Plan { plan } => {
                    db.plans.insert(plan.target_type.clone(), plan);
                }
                Line::Infeasible { type_name, reason } => {
                    db.infeasible.insert(type_name, reason);
                }
            }
        }
        if !saw_header {
            return Err(DecodeError::Header { line: 1, message: "missing header line".into() });
        }
        Ok(db)
    }

    pub fn parse(text: &str) -> Result<PlanDb, DecodeError> {
        PlanDb::read(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_database_round_trips() {
        let db = PlanDb::default();
        assert_eq!(PlanDb::parse(&db.to_text()).unwrap(), db);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = PlanDb::parse("{\"format\":\"plaincode-trace\",\"version\":1}\n").unwrap_err();
        assert!(matches!(err, DecodeError::Header { line: 1, .. }));
        assert!(PlanDb::parse("").is_err());
    }
}
