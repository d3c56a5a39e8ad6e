//! Route selection and verdicts.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chase::{chase_until, Budget, ChaseError, ChaseRun, ChaseState, Limit, Outcome, RoundOrder};
use crate::constraints::{classify_with, minimize_query_under_fds, ConstraintClass, ConstraintError, DEFAULT_MAX_WIDTH};
use crate::linearize::{decide_containment_semiwidth, linearize_problem, LinearizeError};
use crate::model::{find_homomorphism, ground_atom, Assignment, ConjunctiveQuery, Fact, ModelError, Value};
use crate::reduction::{
    build_amondet_containment, normalize_existence_check_gamma, prune_fd_views, uidfd_separable_rewrite,
    ContainmentProblem, Origin, ReductionError,
};
use crate::schema::{
    choice_simplify, elim_ub, existence_check_simplify, fd_simplify, validate_schema, Diagnostic, Schema,
    SimplificationKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecideError {
    #[error("invalid schema: {}", .0.first().map(|d| d.message.as_str()).unwrap_or(""))]
    InvalidSchema(Vec<Diagnostic>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Chase(#[from] ChaseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Answerable,
    NotAnswerable,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    FdRoute,
    IdExistenceRoute,
    BoundedWidthRoute,
    UidFdSeparableRoute,
    FgTgdChoiceRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiniteVariant {
    SameAsUnrestricted,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Witness {
    /// A match of the primed query and the facts it uses.
    Match { assignment: Assignment, facts: Vec<Fact> },
    /// The query is unsatisfiable together with the constraints.
    Inconsistent { left: Value, right: Value },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub simplification: Option<SimplificationKind>,
    pub gamma_size: usize,
    pub counting_axioms: usize,
    pub pruned_rules: usize,
    pub chase_rounds: Option<usize>,
    pub chase_facts: Option<usize>,
    pub chase_outcome: Option<Outcome>,
    pub patterns_explored: Option<usize>,
    pub depth_bound: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub answer: Answer,
    pub class: ConstraintClass,
    pub route: Route,
    /// Whether the procedure is complete for this input, so that a negative
    /// answer is a real one.
    pub exact: bool,
    pub witness: Option<Witness>,
    pub finite_variant: FiniteVariant,
    pub budget: Budget,
    pub stats: Stats,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecideOptions {
    pub budget: Budget,
    /// Largest ID width handled by the exact linearized procedure.
    pub max_width: usize,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions {
            budget: Budget::default(),
            max_width: DEFAULT_MAX_WIDTH,
        }
    }
}

pub fn decide_monotone_answerability(
    q: &ConjunctiveQuery,
    s: &Schema,
    budget: Budget,
) -> Result<Verdict, DecideError> {
    decide_with(q, s, &DecideOptions {
        budget,
        ..DecideOptions::default()
    })
}

/// Containment problem a route works on, with the chase order it uses.
#[derive(Debug, Clone)]
pub struct RoutedProblem {
    pub class: ConstraintClass,
    pub route: Route,
    pub problem: ContainmentProblem,
    pub order: RoundOrder,
    pub simplification: Option<SimplificationKind>,
    pub pruned_rules: usize,
    /// Original count of counting axioms before simplification.
    pub counting_axioms: usize,
}

fn primed_rule_indices(p: &ContainmentProblem) -> BTreeSet<usize> {
    p.gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| g.origin == Origin::SigmaPrimed)
        .map(|(i, _)| i)
        .collect()
}

fn finite_variant(class: ConstraintClass) -> FiniteVariant {
    match class {
        ConstraintClass::FdOnly
        | ConstraintClass::IdOnly
        | ConstraintClass::BoundedWidthId(_)
        | ConstraintClass::FrontierGuarded => FiniteVariant::SameAsUnrestricted,
        ConstraintClass::UidFd | ConstraintClass::GeneralTgd | ConstraintClass::Mixed => {
            FiniteVariant::NotSupported
        }
    }
}

/// Validates, removes upper bounds, classifies, and builds the containment
/// problem the chosen route decides.
pub fn route_problem(
    q: &ConjunctiveQuery,
    s: &Schema,
    opts: &DecideOptions,
) -> Result<RoutedProblem, DecideError> {
    let diags = validate_schema(s);
    if !diags.is_empty() {
        return Err(DecideError::InvalidSchema(diags));
    }
    q.validate(&s.signature)?;
    let s0 = elim_ub(s);
    let class = classify_with(&s0.constraints, opts.max_width).class;
    let counting_axioms = build_amondet_containment(q, &s0)?.counting.len();
    let routed = |route, problem, order, simplification, pruned_rules| RoutedProblem {
        class,
        route,
        problem,
        order,
        simplification,
        pruned_rules,
        counting_axioms,
    };
    Ok(match class {
        ConstraintClass::FdOnly => {
            // With the query closed under the FDs, no FD fires in the chase.
            let q = minimize_query_under_fds(q, &s0.fds(), &s0.signature).map_err(ReductionError::from)?;
            let (s1, report) = fd_simplify(&s0);
            let p = build_amondet_containment(&q.query, &s1)?;
            let (p, pruned) = prune_fd_views(&p, &report);
            routed(
                Route::FdRoute,
                p,
                RoundOrder::standard(),
                Some(SimplificationKind::FdSimplify),
                pruned.dropped.len(),
            )
        }
        ConstraintClass::BoundedWidthId(_) | ConstraintClass::IdOnly => {
            let (s1, report) = existence_check_simplify(&s0);
            let p = build_amondet_containment(q, &s1)?;
            let p = normalize_existence_check_gamma(&p, &report)?;
            let route = if class == ConstraintClass::IdOnly || s0.has_bounds() {
                Route::IdExistenceRoute
            } else {
                Route::BoundedWidthRoute
            };
            routed(route, p, RoundOrder::standard(), Some(SimplificationKind::ExistenceCheck), 0)
        }
        ConstraintClass::UidFd => {
            let s1 = choice_simplify(&s0);
            let p = build_amondet_containment(q, &s1)?;
            let p = uidfd_separable_rewrite(&p, &s0.fds())?;
            let order = RoundOrder::late(primed_rule_indices(&p));
            routed(Route::UidFdSeparableRoute, p, order, Some(SimplificationKind::Choice), 0)
        }
        ConstraintClass::FrontierGuarded | ConstraintClass::GeneralTgd | ConstraintClass::Mixed => {
            let s1 = choice_simplify(&s0);
            let p = build_amondet_containment(q, &s1)?;
            routed(Route::FgTgdChoiceRoute, p, RoundOrder::standard(), Some(SimplificationKind::Choice), 0)
        }
    })
}

/// Searches for a match of the target query in a chase state.
pub fn target_match(p: &ContainmentProblem, state: &ChaseState) -> Option<(Assignment, Vec<Fact>)> {
    let fixed: Assignment = p
        .target_fixed
        .iter()
        .map(|(v, val)| (v.clone(), state.canonical(val)))
        .collect();
    let a = find_homomorphism(&p.target.atoms, state, &fixed)?;
    let facts = p
        .target
        .atoms
        .iter()
        .map(|atom| ground_atom(atom, &a).expect("match binds every variable"))
        .collect();
    Some((a, facts))
}

/// Outcome of chasing a containment problem until the target matches.
#[derive(Debug, Clone)]
pub enum ChaseDecision {
    Holds { run: ChaseRun, assignment: Assignment, facts: Vec<Fact> },
    Saturated(ChaseRun),
    OutOfBudget(ChaseRun, Limit),
    Inconsistent(Value, Value),
}

pub fn chase_containment(p: &ContainmentProblem, budget: Budget, order: &RoundOrder) -> ChaseDecision {
    let deps = p.dependencies();
    let mut found = None;
    let run = chase_until(&p.initial, &deps, budget, order, &mut |state| {
        found = target_match(p, state);
        found.is_some()
    });
    match run {
        Err(ChaseError::FdConstantConflict(a, b)) => ChaseDecision::Inconsistent(a, b),
        Ok(run) => match (found, run.outcome) {
            (Some((assignment, facts)), _) => ChaseDecision::Holds { run, assignment, facts },
            (None, Outcome::Saturated) => ChaseDecision::Saturated(run),
            (None, Outcome::BudgetExhausted(l)) => ChaseDecision::OutOfBudget(run, l),
            (None, Outcome::Stopped) => unreachable!("stop only fires on a match"),
        },
    }
}

pub fn decide_with(q: &ConjunctiveQuery, s: &Schema, opts: &DecideOptions) -> Result<Verdict, DecideError> {
    let routed = match route_problem(q, s, opts) {
        Err(DecideError::Reduction(ReductionError::Constraint(ConstraintError::FdMergeOnDistinctConstants(
            a,
            b,
        )))) => {
            let class = classify_with(&s.constraints, opts.max_width).class;
            return Ok(Verdict {
                answer: Answer::Answerable,
                class,
                route: Route::UidFdSeparableRoute,
                exact: true,
                witness: Some(Witness::Inconsistent { left: a, right: b }),
                finite_variant: finite_variant(class),
                budget: opts.budget,
                stats: Stats::default(),
                notes: alloc::vec![String::from(
                    "the query is unsatisfiable under the FDs, so the empty plan answers it"
                )],
            });
        }
        other => other?,
    };
    let p = &routed.problem;
    let mut verdict = Verdict {
        answer: Answer::Unknown,
        class: routed.class,
        route: routed.route,
        exact: false,
        witness: None,
        finite_variant: finite_variant(routed.class),
        budget: opts.budget,
        stats: Stats {
            simplification: routed.simplification,
            gamma_size: p.gamma.len(),
            counting_axioms: routed.counting_axioms,
            pruned_rules: routed.pruned_rules,
            ..Stats::default()
        },
        notes: Vec::new(),
    };

    if let ConstraintClass::BoundedWidthId(w) = routed.class {
        match linearize_problem(p, w).and_then(|lp| decide_containment_semiwidth(&lp, opts.budget)) {
            Ok(out) => {
                verdict.exact = true;
                verdict.stats.patterns_explored = Some(out.types_explored);
                verdict.stats.depth_bound = Some(out.depth_bound);
                if out.holds {
                    verdict.answer = Answer::Answerable;
                    verdict.witness = Some(Witness::Match {
                        assignment: out.assignment,
                        facts: out.witness_facts,
                    });
                } else {
                    verdict.answer = Answer::NotAnswerable;
                }
                return Ok(verdict);
            }
            Err(LinearizeError::BudgetExceeded(what)) => {
                verdict
                    .notes
                    .push(format!("exact procedure stopped: {what} exceeded the budget; falling back to the chase"));
            }
            Err(e) => return Err(e.into()),
        }
    }

    // Chase-based routes.
    let complete_on_saturation = !matches!(routed.class, ConstraintClass::Mixed);
    if routed.class == ConstraintClass::Mixed {
        verdict.notes.push(String::from(
            "FDs with non-unary IDs are not known to be choice simplifiable; only positive answers are reported",
        ));
    }
    match chase_containment(p, opts.budget, &routed.order) {
        ChaseDecision::Holds { run, assignment, facts } => {
            record_run(&mut verdict, &run);
            verdict.answer = Answer::Answerable;
            verdict.exact = true;
            verdict.witness = Some(Witness::Match { assignment, facts });
        }
        ChaseDecision::Saturated(run) => {
            record_run(&mut verdict, &run);
            if complete_on_saturation {
                verdict.answer = Answer::NotAnswerable;
                verdict.exact = true;
            }
        }
        ChaseDecision::OutOfBudget(run, limit) => {
            record_run(&mut verdict, &run);
            verdict.notes.push(format!("chase budget exhausted ({limit:?})"));
        }
        ChaseDecision::Inconsistent(a, b) => {
            verdict.answer = Answer::Answerable;
            verdict.exact = true;
            verdict.witness = Some(Witness::Inconsistent { left: a, right: b });
            verdict
                .notes
                .push(String::from("the constraints and the query are jointly unsatisfiable"));
        }
    }
    Ok(verdict)
}

fn record_run(v: &mut Verdict, run: &ChaseRun) {
    v.stats.chase_rounds = Some(run.state.round());
    v.stats.chase_facts = Some(run.state.len());
    v.stats.chase_outcome = Some(run.outcome);
}

/// Instrumented run of the FD route, comparing the pruned chase with the
/// unpruned one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdRouteProfile {
    pub rounds: usize,
    pub active_domain: usize,
    pub outcome: Outcome,
    /// FD firings in the pruned chase.
    pub fd_firings: usize,
    /// Firings of the dropped unprimed view-to-relation rules in the
    /// unpruned chase.
    pub pruned_unprimed_firings: usize,
    /// Facts produced by dropped primed relation-to-view rules that later
    /// served as a premise.
    pub pruned_primed_facts_used: usize,
    /// The unpruned chase reaches the same verdict.
    pub unpruned_agrees: bool,
}

/// Profiles the FD route; `None` when the schema is not FD-only or the
/// query is unsatisfiable under the FDs.
pub fn profile_fd_route(
    q: &ConjunctiveQuery,
    s: &Schema,
    budget: Budget,
) -> Result<Option<FdRouteProfile>, DecideError> {
    let s0 = elim_ub(s);
    if classify_with(&s0.constraints, DEFAULT_MAX_WIDTH).class != ConstraintClass::FdOnly {
        return Ok(None);
    }
    let Ok(qm) = minimize_query_under_fds(q, &s0.fds(), &s0.signature) else {
        return Ok(None);
    };
    let (s1, report) = fd_simplify(&s0);
    let full = build_amondet_containment(&qm.query, &s1)?;
    let (pruned, dropped) = prune_fd_views(&full, &report);
    let order = RoundOrder::standard();
    let deps = pruned.dependencies();
    let run = chase_until(&pruned.initial, &deps, budget, &order, &mut |_| false)?;
    let fd_firings = run
        .state
        .firings()
        .iter()
        .filter(|f| matches!(deps[f.dependency], crate::constraints::Dependency::Fd(_)))
        .count();
    let full_deps = full.dependencies();
    let full_run =
        chase_until(&full.initial, &full_deps, budget, &order, &mut |_| false)?;
    let dropped_idx: BTreeSet<usize> = full
        .gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| dropped.dropped.contains(g))
        .map(|(i, _)| i)
        .collect();
    let mut pruned_unprimed_firings = 0;
    let mut dead_ends = BTreeSet::new();
    for f in full_run.state.firings() {
        if !dropped_idx.contains(&f.dependency) {
            continue;
        }
        match full.gamma[f.dependency].origin {
            Origin::SigmaPrimed => dead_ends.extend(f.produced.iter().copied()),
            _ => pruned_unprimed_firings += 1,
        }
    }
    let pruned_primed_facts_used = full_run
        .state
        .firings()
        .iter()
        .filter(|f| !dropped_idx.contains(&f.dependency))
        .flat_map(|f| f.premises.iter())
        .filter(|id| dead_ends.contains(id))
        .count();
    let unpruned_agrees = target_match(&pruned, &run.state).is_some() == target_match(&full, &full_run.state).is_some();
    Ok(Some(FdRouteProfile {
        rounds: run.state.round(),
        active_domain: pruned.initial.active_domain().len(),
        outcome: run.outcome,
        fd_firings,
        pruned_unprimed_firings,
        pruned_primed_facts_used,
        unpruned_agrees,
    }))
}

/// Human-readable account of a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub summary: String,
    pub details: Vec<String>,
}

pub fn explain(v: &Verdict) -> Explanation {
    let answer = match v.answer {
        Answer::Answerable => "answerable",
        Answer::NotAnswerable => "not answerable",
        Answer::Unknown => "unknown",
    };
    let summary = format!("{answer} ({:?} constraints, {:?})", v.class, v.route);
    let mut details = Vec::new();
    if let Some(k) = v.stats.simplification {
        details.push(format!("simplification: {k:?}"));
    }
    details.push(format!("constraint set size: {}", v.stats.gamma_size));
    if v.stats.counting_axioms > 0 {
        details.push(format!(
            "{} counting axioms made unnecessary by simplification",
            v.stats.counting_axioms
        ));
    }
    if v.stats.pruned_rules > 0 {
        details.push(format!("{} rules pruned before chasing", v.stats.pruned_rules));
    }
    if let (Some(r), Some(f), Some(o)) = (v.stats.chase_rounds, v.stats.chase_facts, v.stats.chase_outcome) {
        details.push(format!("chase: {r} rounds, {f} facts, outcome {o:?}"));
    }
    if let Some(n) = v.stats.patterns_explored {
        details.push(format!("exact search over {n} chase-tree patterns"));
    }
    match &v.witness {
        Some(Witness::Match { assignment, facts }) => {
            let parts: Vec<String> = assignment.iter().map(|(k, val)| format!("{k}={val}")).collect();
            details.push(format!("match: {}", parts.join(", ")));
            for f in facts {
                details.push(format!("  uses {f}"));
            }
        }
        Some(Witness::Inconsistent { left, right }) => {
            details.push(format!("constants {left} and {right} are forced equal"));
        }
        None => {}
    }
    match v.answer {
        Answer::NotAnswerable => details.push(String::from(if v.stats.chase_outcome.is_some() {
            "chase saturated without a match"
        } else {
            "no match in any chase-tree pattern"
        })),
        Answer::Unknown => details.push(format!(
            "budget: {} rounds, {} facts, depth {}",
            v.budget.max_rounds, v.budget.max_facts, v.budget.max_depth
        )),
        Answer::Answerable => {}
    }
    details.extend(v.notes.iter().cloned());
    Explanation { summary, details }
}
