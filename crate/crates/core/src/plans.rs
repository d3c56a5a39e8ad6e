//! Monotone plans and their semantics under access selections.
//!
//! Expressions are unions of conjunctive blocks over temporary tables, which
//! covers select, project, join, union, rename and constants.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::chase::{chase_to_fixpoint, Budget, Outcome, RoundOrder};
use crate::model::{
    eval_cq, for_each_homomorphism, Assignment, Atom, ConjunctiveQuery, Instance, Name, Term, Value,
};
use crate::schema::{AccessMethod, Bound, Schema};

type Tuple = Vec<Value>;
pub type Table = BTreeSet<Tuple>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no selection entry for method {method} on binding {binding:?}")]
    MissingSelectionEntry { method: Name, binding: Vec<Value> },
    #[error("selection for method {method} on binding {binding:?} is not a valid output")]
    InvalidSelection { method: Name, binding: Vec<Value> },
    #[error("unknown method {0}")]
    UnknownMethod(Name),
    #[error("table {0} is read before it is defined")]
    UndefinedTable(Name),
    #[error("table {table} used with {found} columns but has {expected}")]
    TableArity { table: Name, expected: usize, found: usize },
    #[error("input mapping of {method} does not cover its input positions")]
    BadInputMap { method: Name },
    #[error("head variable {0} does not occur in the block body")]
    UnsafeHead(Name),
    #[error("plan returns undefined table {0}")]
    UndefinedOutput(Name),
    #[error("enumeration budget of {0} runs exceeded")]
    BudgetExceeded(usize),
}

/// `{ (head) :- body }`, evaluated over temporary tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub head: Vec<Term>,
    pub body: Vec<Atom>,
}

impl Block {
    pub fn new(head: Vec<Term>, body: Vec<Atom>) -> Self {
        Block { head, body }
    }
}

/// Union of blocks. The empty union is the empty table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expr {
    pub blocks: Vec<Block>,
}

impl Expr {
    pub fn empty() -> Self {
        Expr::default()
    }

    /// The table holding the empty tuple.
    pub fn unit() -> Self {
        Expr {
            blocks: vec![Block::new(vec![], vec![])],
        }
    }

    pub fn block(head: Vec<Term>, body: Vec<Atom>) -> Self {
        Expr {
            blocks: vec![Block::new(head, body)],
        }
    }

    /// Copy of a whole table with `arity` columns.
    pub fn table(table: &str, arity: usize) -> Self {
        let vars: Vec<String> = (0..arity).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        Expr::block(refs.iter().map(|v| Term::var(v)).collect(), vec![Atom::vars(table, &refs)])
    }

    pub fn union(mut self, other: Expr) -> Self {
        self.blocks.extend(other.blocks);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    /// `target <= method(in=...) <- source`. Column `i` of the source feeds
    /// relation position `input_map[i]`; the target receives whole tuples.
    Access {
        target: Name,
        method: Name,
        input_map: Vec<usize>,
        source: Expr,
    },
    /// `target := expr`.
    Middleware { target: Name, expr: Expr },
}

impl Command {
    pub fn target(&self) -> &Name {
        match self {
            Command::Access { target, .. } | Command::Middleware { target, .. } => target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub name: Name,
    pub commands: Vec<Command>,
    pub output: Name,
}

fn fmt_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if e.blocks.is_empty() {
        return f.write_str("empty");
    }
    for (i, b) in e.blocks.iter().enumerate() {
        if i > 0 {
            f.write_str(" | ")?;
        }
        if b.head.is_empty() && b.body.is_empty() {
            f.write_str("unit")?;
            continue;
        }
        f.write_str("{ (")?;
        for (j, t) in b.head.iter().enumerate() {
            if j > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")?;
        if !b.body.is_empty() {
            write!(f, " :- {}", crate::model::display_atoms(&b.body))?;
        }
        f.write_str(" }")?;
    }
    Ok(())
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plan {} {{", self.name)?;
        for c in &self.commands {
            match c {
                Command::Access {
                    target,
                    method,
                    input_map,
                    source,
                } => {
                    write!(f, "  {target} <= {method}(in=")?;
                    for (i, p) in input_map.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{}", p + 1)?;
                    }
                    f.write_str(") <- ")?;
                    fmt_expr(source, f)?;
                }
                Command::Middleware { target, expr } => {
                    write!(f, "  {target} := ")?;
                    fmt_expr(expr, f)?;
                }
            }
            f.write_str(";\n")?;
        }
        writeln!(f, "  return {};", self.output)?;
        f.write_str("}")
    }
}

/// Chosen outputs keyed by method and binding (values in input-position order).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSelection {
    pub entries: BTreeMap<(Name, Vec<Value>), Table>,
}

impl AccessSelection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, method: &Name, binding: Vec<Value>, output: Table) {
        self.entries.insert((method.clone(), binding), output);
    }

    pub fn get(&self, method: &Name, binding: &[Value]) -> Option<&Table> {
        self.entries.get(&(method.clone(), binding.to_vec()))
    }

    /// The selection returning every matching tuple of every access.
    pub fn full(s: &Schema, inst: &Instance) -> Self {
        let mut sel = AccessSelection::new();
        for m in &s.methods {
            for t in inst.relation(&m.relation) {
                let binding: Vec<Value> = m.inputs.iter().map(|&i| t[i].clone()).collect();
                sel.entries
                    .entry((m.name.clone(), binding))
                    .or_default()
                    .insert(t.clone());
            }
        }
        sel
    }
}

pub fn matching_tuples(m: &AccessMethod, inst: &Instance, binding: &[Value]) -> Table {
    inst.relation(&m.relation)
        .filter(|t| m.inputs.iter().zip(binding).all(|(&i, v)| t[i] == *v))
        .cloned()
        .collect()
}

pub fn is_valid_output(m: &AccessMethod, matching: &Table, output: &Table) -> bool {
    if !output.is_subset(matching) {
        return false;
    }
    match m.bound {
        None => output == matching,
        Some(b) => {
            let k = b.value() as usize;
            let lower = output.len() >= k.min(matching.len());
            match b {
                Bound::Result(_) => lower && output.len() <= k,
                Bound::LowerOnly(_) => lower,
            }
        }
    }
}

/// All valid outputs, smallest first, subsets in lexicographic order.
pub fn valid_outputs(m: &AccessMethod, matching: &Table) -> Vec<Table> {
    let items: Vec<&Tuple> = matching.iter().collect();
    let n = items.len();
    let sizes = match m.bound {
        Some(b) if n > b.value() as usize => {
            let k = b.value() as usize;
            match b {
                Bound::Result(_) => k..=k,
                Bound::LowerOnly(_) => k..=n,
            }
        }
        _ => n..=n,
    };
    let mut out = Vec::new();
    for size in sizes {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i].clone()).collect());
            // advance to the next combination, rightmost index first
            let Some(i) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

fn tables_instance(tables: &BTreeMap<Name, Table>) -> Instance {
    let mut inst = Instance::new();
    for (t, rows) in tables {
        for r in rows {
            inst.insert_tuple(t, r.clone());
        }
    }
    inst
}

fn check_reads(expr: &Expr, tables: &BTreeMap<Name, Table>, arities: &BTreeMap<Name, usize>) -> Result<(), PlanError> {
    for b in &expr.blocks {
        let vars = crate::model::atoms_variables(&b.body);
        for t in &b.head {
            if let Term::Var(v) = t {
                if !vars.contains(v) {
                    return Err(PlanError::UnsafeHead(v.clone()));
                }
            }
        }
        for a in &b.body {
            if !tables.contains_key(&a.relation) {
                return Err(PlanError::UndefinedTable(a.relation.clone()));
            }
            let expected = arities[&a.relation];
            if a.terms.len() != expected {
                return Err(PlanError::TableArity {
                    table: a.relation.clone(),
                    expected,
                    found: a.terms.len(),
                });
            }
        }
    }
    Ok(())
}

pub fn eval_expr(expr: &Expr, tables: &BTreeMap<Name, Table>) -> Table {
    let inst = tables_instance(tables);
    let mut out = Table::new();
    for b in &expr.blocks {
        for_each_homomorphism(&b.body, &inst, &Assignment::new(), &mut |a| {
            out.insert(
                b.head
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => a[v].clone(),
                        Term::Const(c) => Value::Const(c.clone()),
                    })
                    .collect(),
            );
            ControlFlow::Continue(())
        });
    }
    out
}

fn expr_arity(expr: &Expr) -> Option<usize> {
    expr.blocks.first().map(|b| b.head.len())
}

/// Chooses the output of one access: `(command index, method, binding,
/// matching tuples)`.
type Chooser<'c> = dyn FnMut(usize, &AccessMethod, &[Value], &Table) -> Result<Table, PlanError> + 'c;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRun {
    pub tables: BTreeMap<Name, Table>,
    pub output: Table,
}

fn run_plan(p: &Plan, s: &Schema, inst: &Instance, choose: &mut Chooser<'_>) -> Result<PlanRun, PlanError> {
    let mut tables: BTreeMap<Name, Table> = BTreeMap::new();
    let mut arities: BTreeMap<Name, usize> = BTreeMap::new();
    for (ci, c) in p.commands.iter().enumerate() {
        match c {
            Command::Access {
                target,
                method,
                input_map,
                source,
            } => {
                let m = s.method(method).ok_or_else(|| PlanError::UnknownMethod(method.clone()))?;
                let covered: BTreeSet<usize> = input_map.iter().copied().collect();
                if covered != m.inputs || input_map.len() != m.inputs.len() {
                    return Err(PlanError::BadInputMap { method: method.clone() });
                }
                check_reads(source, &tables, &arities)?;
                if let Some(a) = expr_arity(source) {
                    if a != input_map.len() {
                        return Err(PlanError::BadInputMap { method: method.clone() });
                    }
                }
                let arity = s.signature.arity(&m.relation).unwrap_or(0);
                let mut result = Table::new();
                for row in eval_expr(source, &tables) {
                    // binding in increasing input-position order
                    let mut by_pos: Vec<(usize, Value)> = input_map.iter().copied().zip(row).collect();
                    by_pos.sort();
                    let binding: Vec<Value> = by_pos.into_iter().map(|(_, v)| v).collect();
                    let matching = matching_tuples(m, inst, &binding);
                    result.extend(choose(ci, m, &binding, &matching)?);
                }
                tables.insert(target.clone(), result);
                arities.insert(target.clone(), arity);
            }
            Command::Middleware { target, expr } => {
                check_reads(expr, &tables, &arities)?;
                let rows = eval_expr(expr, &tables);
                tables.insert(target.clone(), rows);
                arities.insert(target.clone(), expr_arity(expr).unwrap_or(0));
            }
        }
    }
    let output = tables
        .get(&p.output)
        .cloned()
        .ok_or_else(|| PlanError::UndefinedOutput(p.output.clone()))?;
    Ok(PlanRun { tables, output })
}

/// Evaluates a plan under one access selection, checking each entry used.
pub fn evaluate_plan(p: &Plan, s: &Schema, inst: &Instance, sel: &AccessSelection) -> Result<PlanRun, PlanError> {
    run_plan(p, s, inst, &mut |_, m, binding, matching| {
        let Some(out) = sel.get(&m.name, binding) else {
            if matching.is_empty() {
                return Ok(Table::new());
            }
            return Err(PlanError::MissingSelectionEntry {
                method: m.name.clone(),
                binding: binding.to_vec(),
            });
        };
        if !is_valid_output(m, matching, out) {
            return Err(PlanError::InvalidSelection {
                method: m.name.clone(),
                binding: binding.to_vec(),
            });
        }
        Ok(out.clone())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Semantics {
    /// One selection for the whole plan.
    Idempotent,
    /// A fresh selection for every access command.
    NonIdempotent,
}

/// Every output the plan can produce, enumerating selections depth-first.
/// `max_runs` bounds the number of selections examined.
pub fn possible_outputs(
    p: &Plan,
    s: &Schema,
    inst: &Instance,
    semantics: Semantics,
    max_runs: usize,
) -> Result<BTreeSet<Table>, PlanError> {
    let mut outputs = BTreeSet::new();
    // (choice taken, number of options) per choice point along the current path
    let mut path: Vec<(usize, usize)> = Vec::new();
    let mut runs = 0;
    let mut options_of: BTreeMap<(Name, Vec<Value>), Vec<Table>> = BTreeMap::new();
    loop {
        runs += 1;
        if runs > max_runs {
            return Err(PlanError::BudgetExceeded(max_runs));
        }
        let mut cache: BTreeMap<(Option<usize>, Name, Vec<Value>), Table> = BTreeMap::new();
        let mut depth = 0;
        let run = run_plan(p, s, inst, &mut |ci, m, binding, matching| {
            let scope = match semantics {
                Semantics::Idempotent => None,
                Semantics::NonIdempotent => Some(ci),
            };
            let key = (scope, m.name.clone(), binding.to_vec());
            if let Some(t) = cache.get(&key) {
                return Ok(t.clone());
            }
            let options = options_of
                .entry((m.name.clone(), binding.to_vec()))
                .or_insert_with(|| valid_outputs(m, matching));
            let chosen = if options.len() <= 1 {
                options.first().cloned().unwrap_or_default()
            } else {
                if depth == path.len() {
                    path.push((0, options.len()));
                }
                let pick = path[depth].0;
                depth += 1;
                options[pick].clone()
            };
            cache.insert(key, chosen.clone());
            Ok(chosen)
        })?;
        outputs.insert(run.output);
        path.truncate(depth);
        while let Some(last) = path.last_mut() {
            if last.0 + 1 < last.1 {
                last.0 += 1;
                break;
            }
            path.pop();
        }
        if path.is_empty() {
            return Ok(outputs);
        }
    }
}

/// Rewrites a plan so that every access also returns what earlier accesses
/// with the same method produced on the same bindings. Each access command
/// `i` caches its input in `Inp_mt_i` and its raw output in `Out_mt_i`.
pub fn cached_transform(p: &Plan, s: &Schema) -> Result<Plan, PlanError> {
    let mut used: BTreeSet<Name> = p.commands.iter().map(|c| c.target().clone()).collect();
    let mut fresh = |base: String| {
        let mut n = base.clone();
        let mut i = 0;
        while used.contains(n.as_str()) {
            i += 1;
            n = format!("{base}_{i}");
        }
        let n: Name = n.into();
        used.insert(n.clone());
        n
    };
    struct Cached {
        method: Name,
        input_map: Vec<usize>,
        inp: Name,
        out: Name,
    }
    let mut cached: Vec<Cached> = Vec::new();
    let mut commands = Vec::new();
    for (i, c) in p.commands.iter().enumerate() {
        let Command::Access {
            target,
            method,
            input_map,
            source,
        } = c
        else {
            commands.push(c.clone());
            continue;
        };
        let m = s.method(method).ok_or_else(|| PlanError::UnknownMethod(method.clone()))?;
        let arity = s.signature.arity(&m.relation).unwrap_or(0);
        let inp = fresh(format!("Inp_{method}_{i}"));
        let out = fresh(format!("Out_{method}_{i}"));
        commands.push(Command::Middleware {
            target: inp.clone(),
            expr: source.clone(),
        });
        commands.push(Command::Access {
            target: out.clone(),
            method: method.clone(),
            input_map: input_map.clone(),
            source: Expr::table(&inp, input_map.len()),
        });
        let pos_var = |p: usize| {
            if m.inputs.contains(&p) {
                Term::var(&format!("b{p}"))
            } else {
                Term::var(&format!("y{p}"))
            }
        };
        let head: Vec<Term> = (0..arity).map(pos_var).collect();
        let inp_atom = |table: &Name, map: &[usize]| Atom {
            relation: table.clone(),
            terms: map.iter().map(|&p| pos_var(p)).collect(),
        };
        let mut expr = Expr::table(&out, arity);
        for prev in cached.iter().filter(|c| c.method == *method) {
            expr.blocks.push(Block::new(
                head.clone(),
                vec![
                    inp_atom(&inp, input_map),
                    inp_atom(&prev.inp, &prev.input_map),
                    Atom {
                        relation: prev.out.clone(),
                        terms: head.clone(),
                    },
                ],
            ));
        }
        commands.push(Command::Middleware {
            target: target.clone(),
            expr,
        });
        cached.push(Cached {
            method: method.clone(),
            input_map: input_map.clone(),
            inp,
            out,
        });
    }
    Ok(Plan {
        name: p.name.clone(),
        commands,
        output: p.output.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Empirical {
    Confirmed { instances: usize },
    Refuted {
        instance: Instance,
        output: Table,
        expected: Table,
    },
}

/// Compares every idempotent possible output of the plan with the query
/// answer on each instance. Instances are assumed to satisfy the constraints.
pub fn empirically_answers<'i>(
    p: &Plan,
    q: &ConjunctiveQuery,
    s: &Schema,
    instances: impl IntoIterator<Item = &'i Instance>,
    max_runs: usize,
) -> Result<Empirical, PlanError> {
    let mut checked = 0;
    for inst in instances {
        let expected = eval_cq(q, inst);
        for output in possible_outputs(p, s, inst, Semantics::Idempotent, max_runs)? {
            if output != expected {
                return Ok(Empirical::Refuted {
                    instance: inst.clone(),
                    output,
                    expected,
                });
            }
        }
        checked += 1;
    }
    Ok(Empirical::Confirmed { instances: checked })
}

/// Closes a seed instance under the schema's constraints. `None` when the
/// chase does not terminate within the budget or FDs clash on constants.
pub fn complete_instance(s: &Schema, seed: &Instance, budget: Budget) -> Option<Instance> {
    let run = chase_to_fixpoint(seed, &s.constraints, budget, &RoundOrder::standard()).ok()?;
    (run.outcome == Outcome::Saturated).then(|| run.state.instance())
}
