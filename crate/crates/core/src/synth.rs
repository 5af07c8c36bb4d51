//! Cheapest reconstruction plan selection.
//!
//! Every action gets a boolean selection variable. A selection is feasible when exactly one
//! constructing action is chosen and every field of the target type is covered by at least
//! one chosen action; among feasible selections the one with the smallest summed cost wins.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, ActionKind, BoundAction, CapturedValue, CostTable, InstantiatedPlan, ReconstructionPlan,
    TypeKind, TypeModel,
};

#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub actions: Vec<Action>,
    pub costs: CostTable,
    pub field_universe: BTreeSet<String>,
}

impl PlanProblem {
    pub fn for_model(model: &TypeModel, costs: &CostTable) -> PlanProblem {
        PlanProblem {
            actions: crate::analyzer::enumerate_actions(model),
            costs: costs.clone(),
            field_universe: model.field_names(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "camelCase", tag = "reason")]
pub enum Infeasible {
    #[error("no constructing action is available")]
    NoConstructingAction,
    #[error("field `{field}` cannot be set by any action")]
    UncoverableField { field: String },
    #[error("no single constructing action admits a cover of fields {fields:?}")]
    NoJointCover { fields: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("infeasible: {0}")]
    Infeasible(#[from] Infeasible),
    #[error("no cost defined for action kind `{0}`")]
    MissingCost(ActionKind),
    #[error("total plan cost overflows")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Indices into `PlanProblem::actions`, ascending.
    pub indices: Vec<usize>,
    pub cost: u64,
}

/// Deterministic ordering among equal-cost optima: fewer actions, then kinds, then names.
fn tie_key(actions: &[Action], indices: &[usize]) -> Vec<(ActionKind, String, Vec<String>)> {
    let mut key: Vec<_> = indices
        .iter()
        .map(|&i| {
            let a = &actions[i];
            (a.kind, a.callable_name().to_string(), a.covered_fields.iter().cloned().collect())
        })
        .collect();
    key.sort();
    key
}

struct Search<'a> {
    actions: &'a [Action],
    cost: &'a [u64],
    best: Option<(u64, Vec<usize>)>,
}

impl Search<'_> {
    fn better(&self, cost: u64, chosen: &[usize]) -> bool {
        match &self.best {
            None => true,
            Some((bc, bi)) => {
                (cost, chosen.len()) < (*bc, bi.len())
                    || ((cost, chosen.len()) == (*bc, bi.len())
                        && tie_key(self.actions, chosen) < tie_key(self.actions, bi))
            }
        }
    }

    /// Set cover by branching on the candidates of the least-covered open field.
    fn cover(&mut self, candidates: &[usize], uncovered: &BTreeSet<&str>, chosen: &mut Vec<usize>, cost: u64) {
        if let Some((bc, bi)) = &self.best {
            if cost > *bc || (cost == *bc && !uncovered.is_empty() && chosen.len() >= bi.len()) {
                return;
            }
        }
        if uncovered.is_empty() {
            if self.better(cost, chosen) {
                let mut sorted = chosen.clone();
                sorted.sort_unstable();
                self.best = Some((cost, sorted));
            }
            return;
        }
        let options = |f: &str| {
            candidates
                .iter()
                .copied()
                .filter(|&i| self.actions[i].covered_fields.contains(f) && !chosen.contains(&i))
                .collect::<Vec<_>>()
        };
        let Some(field) = uncovered.iter().copied().min_by_key(|f| options(f).len()) else { return };
        let mut opts = options(field);
        if opts.is_empty() {
            return;
        }
        opts.sort_by_key(|&i| (self.cost[i], i));
        if let Some((bc, _)) = &self.best {
            if cost + self.cost[opts[0]] > *bc {
                return;
            }
        }
        for i in opts {
            let rest: BTreeSet<&str> = uncovered
                .iter()
                .copied()
                .filter(|f| !self.actions[i].covered_fields.contains(*f))
                .collect();
            chosen.push(i);
            self.cover(candidates, &rest, chosen, cost + self.cost[i]);
            chosen.pop();
        }
    }
}

/// Finds the minimum-cost feasible selection.
pub fn solve(problem: &PlanProblem) -> Result<Selection, SolveError> {
    let mut costs = Vec::with_capacity(problem.actions.len());
    let mut total: u64 = 0;
    for a in &problem.actions {
        let c = u64::from(problem.costs.get(a.kind).ok_or(SolveError::MissingCost(a.kind))?);
        total = total.checked_add(c).ok_or(SolveError::Overflow)?;
        costs.push(c);
    }
    let constructing: Vec<usize> =
        (0..problem.actions.len()).filter(|&i| problem.actions[i].constructing).collect();
    if constructing.is_empty() {
        return Err(Infeasible::NoConstructingAction.into());
    }
    for f in &problem.field_universe {
        if !problem.actions.iter().any(|a| a.covered_fields.contains(f)) {
            return Err(Infeasible::UncoverableField { field: f.clone() }.into());
        }
    }
    let setters: Vec<usize> = (0..problem.actions.len())
        .filter(|&i| !problem.actions[i].constructing && !problem.actions[i].covered_fields.is_empty())
        .collect();
    let mut search = Search { actions: &problem.actions, cost: &costs, best: None };
    for &c in &constructing {
        let uncovered: BTreeSet<&str> = problem
            .field_universe
            .iter()
            .map(String::as_str)
            .filter(|f| !problem.actions[c].covered_fields.contains(*f))
            .collect();
        let mut chosen = vec![c];
        search.cover(&setters, &uncovered, &mut chosen, costs[c]);
    }
    match search.best {
        Some((cost, indices)) => Ok(Selection { indices, cost }),
        None => {
            let setter_cover: BTreeSet<&String> =
                setters.iter().flat_map(|&i| problem.actions[i].covered_fields.iter()).collect();
            let fields = problem
                .field_universe
                .iter()
                .filter(|f| !setter_cover.contains(f))
                .cloned()
                .collect();
            Err(Infeasible::NoJointCover { fields }.into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no value for meta-variable `{0}`")]
    MissingValue(String),
}

/// Orders a feasible selection into a plan: the constructing action first, then the
/// field-setting actions by field declaration order, `callMethod` before `assignField`,
/// then by callable name.
pub fn assemble_plan(
    selected: &[Action],
    model: &TypeModel,
    costs: &CostTable,
) -> Result<ReconstructionPlan, PlanError> {
    let constructing: Vec<&Action> = selected.iter().filter(|a| a.constructing).collect();
    if constructing.len() != 1 {
        return Err(PlanError::Contract(format!(
            "expected one constructing action, got {}",
            constructing.len()
        )));
    }
    let covered: BTreeSet<&String> = selected.iter().flat_map(|a| a.covered_fields.iter()).collect();
    if let Some(missing) = model.fields.iter().find(|f| !covered.contains(&f.name)) {
        return Err(PlanError::Contract(format!("field `{}` is not covered", missing.name)));
    }
    let position = |a: &Action| {
        a.covered_fields.iter().filter_map(|f| model.field_index(f)).min().unwrap_or(usize::MAX)
    };
    let mut rest: Vec<&Action> = selected.iter().filter(|a| !a.constructing).collect();
    rest.sort_by(|a, b| {
        (position(a), a.kind, a.callable_name()).cmp(&(position(b), b.kind, b.callable_name()))
    });
    let mut actions = vec![constructing[0].clone()];
    actions.extend(rest.into_iter().cloned());
    let mut total: u64 = 0;
    for a in &actions {
        let c = costs.get(a.kind).ok_or_else(|| PlanError::Contract(format!("no cost for {}", a.kind)))?;
        total = total
            .checked_add(u64::from(c))
            .ok_or_else(|| PlanError::Contract("cost overflow".into()))?;
    }
    Ok(ReconstructionPlan { actions, target_type: model.type_name.clone(), total_cost: total })
}

/// Solves and assembles the cheapest plan for a type.
pub fn synthesize(model: &TypeModel, costs: &CostTable) -> Result<ReconstructionPlan, SolveError> {
    let problem = PlanProblem::for_model(model, costs);
    let sel = solve(&problem)?;
    let chosen: Vec<Action> = sel.indices.iter().map(|&i| problem.actions[i].clone()).collect();
    Ok(assemble_plan(&chosen, model, costs).expect("solver output satisfies the plan contract"))
}

/// Binds every meta-variable of the plan to a captured field value.
pub fn instantiate_plan(
    plan: &ReconstructionPlan,
    values: &BTreeMap<String, CapturedValue>,
) -> Result<InstantiatedPlan, PlanError> {
    let value = |field: &str| {
        values.get(field).cloned().ok_or_else(|| PlanError::MissingValue(field.to_string()))
    };
    let mut actions = Vec::with_capacity(plan.actions.len());
    for action in &plan.actions {
        let mut bound = action.clone();
        let arguments = match action.kind {
            ActionKind::UseEnumConstant => {
                let constant = match value("constant")? {
                    CapturedValue::EnumConstant { constant_name, .. } => constant_name,
                    other => return Err(PlanError::Contract(format!("not an enum constant: {other:?}"))),
                };
                bound.member = Some(crate::model::MemberRef {
                    owner: plan.target_type.clone(),
                    member: constant,
                });
                Vec::new()
            }
            ActionKind::AssignField => vec![value(&action.meta_variables[0].bound_field)?],
            _ => match &action.callable {
                Some(c) => c
                    .parameters
                    .iter()
                    .map(|p| match &p.binds_field {
                        Some(f) => value(f),
                        None => Err(PlanError::Contract(format!(
                            "parameter `{}` of `{}` is not bound to a field",
                            p.name, c.name
                        ))),
                    })
                    .collect::<Result<_, _>>()?,
                None => Vec::new(),
            },
        };
        actions.push(BoundAction { action: bound, arguments });
    }
    Ok(InstantiatedPlan { target_type: plan.target_type.clone(), actions, total_cost: plan.total_cost })
}

/// Plans for every structurally reconstructible composite; infeasible types are reported
/// separately and fall back to trace-based reconstruction.
pub fn synthesize_all(
    models: &BTreeMap<String, TypeModel>,
    costs: &CostTable,
) -> (BTreeMap<String, ReconstructionPlan>, BTreeMap<String, SolveError>) {
    let mut plans = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (name, model) in models {
        if model.kind != TypeKind::Composite {
            continue;
        }
        match synthesize(model, costs) {
            Ok(p) => {
                plans.insert(name.clone(), p);
            }
            Err(e) => {
                failures.insert(name.clone(), e);
            }
        }
    }
    (plans, failures)
}
