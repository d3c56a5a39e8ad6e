//! Subcommands of the `answerability` binary.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use answerability_core::chase::{to_dot, trace, Budget, Outcome};
use answerability_core::constraints::{classify, Tgd};
use answerability_core::decide::{
    chase_containment, decide_with, route_problem, Answer, ChaseDecision, DecideOptions, Verdict, Witness,
};
use answerability_core::linearize::{linearize_problem, saturate_truncated_axioms};
use answerability_core::model::{Atom, ConjunctiveQuery, Instance};
use answerability_core::oracle::{differential_run, generate_cases, Family, GeneratorConfig};
use answerability_core::plans::{possible_outputs, Semantics, Table};
use answerability_core::reduction::{build_amondet_containment_with, BuildOptions, Origin};
use answerability_core::schema::{choice_simplify, existence_check_simplify, fd_simplify, position_var, Schema};

use crate::diagnostics::Diagnostic;
use crate::parser::{parse_and_check, Document};
use crate::printer::{print_schema, print_tgd};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "answerability", version, about = "Monotone answerability of CQs over result-bounded access methods")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Parse and validate a schema file.
    Check(FileArg),
    /// Rewrite the result-bounded methods of a schema.
    Simplify {
        #[command(flatten)]
        file: FileArg,
        #[arg(long, value_enum)]
        kind: SimplifyKind,
    },
    /// Print the containment problem for a query.
    Reduce {
        #[command(flatten)]
        file: FileArg,
        #[arg(long)]
        query: String,
        /// Route unbounded methods through `R_acc` instead of the combined head.
        #[arg(long)]
        literal: bool,
    },
    /// Decide monotone answerability of a query.
    Decide {
        #[command(flatten)]
        file: FileArg,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Largest ID width handled by the exact procedure.
        #[arg(long)]
        max_width: Option<usize>,
    },
    /// Chase the containment problem of a query and print the trace.
    Chase {
        #[command(flatten)]
        file: FileArg,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value = "dot")]
        emit: Emit,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Print the saturated truncated accessibility axioms.
    Saturate {
        #[command(flatten)]
        file: FileArg,
        /// Breadth of the axioms; defaults to the width of the IDs.
        #[arg(long)]
        width: Option<usize>,
    },
    /// Print the linearized IDs for a query's containment problem.
    Linearize {
        #[command(flatten)]
        file: FileArg,
        #[arg(long)]
        query: String,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Enumerate the outputs of a plan over the file's facts.
    PlanEval {
        #[command(flatten)]
        file: FileArg,
        #[arg(long)]
        plan: String,
        #[arg(long, value_enum, default_value = "idem")]
        semantics: SemanticsArg,
        #[arg(long, default_value_t = 100_000)]
        max_runs: usize,
    },
    /// Compare the decision procedure with the naive chase on random cases.
    Diff {
        #[arg(long, value_enum, default_value = "fd")]
        family: FamilyArg,
        /// Maximum ID width for the `id` family.
        #[arg(long, default_value_t = 2)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

#[derive(Debug, Args)]
pub struct FileArg {
    /// Schema file in the DSL.
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub budget_depth: Option<usize>,
    #[arg(long)]
    pub budget_facts: Option<usize>,
    #[arg(long)]
    pub budget_rounds: Option<usize>,
}

impl BudgetArgs {
    pub fn budget(&self) -> Budget {
        let d = Budget::default();
        Budget {
            max_depth: self.budget_depth.unwrap_or(d.max_depth),
            max_facts: self.budget_facts.unwrap_or(d.max_facts),
            max_rounds: self.budget_rounds.unwrap_or(d.max_rounds),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimplifyKind {
    Existence,
    Fd,
    Choice,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Emit {
    Dot,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SemanticsArg {
    Idem,
    Nonidem,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Fd,
    Id,
    Uidfd,
}

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Output {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn error(json: bool, message: impl Into<String>) -> Self {
        let message = message.into();
        if json {
            Output {
                code: EXIT_ERROR,
                stdout: json!({ "ok": false, "error": message }).to_string() + "\n",
                stderr: String::new(),
            }
        } else {
            Output {
                code: EXIT_ERROR,
                stdout: String::new(),
                stderr: format!("error: {message}\n"),
            }
        }
    }
}

struct Loaded {
    path: String,
    doc: Document,
}

fn load(file: &FileArg, json: bool) -> Result<Loaded, Output> {
    let path = file.path.display().to_string();
    let src = std::fs::read_to_string(&file.path).map_err(|e| Output::error(json, format!("{path}: {e}")))?;
    load_str(&path, &src, json)
}

fn load_str(path: &str, src: &str, json: bool) -> Result<Loaded, Output> {
    match parse_and_check(src) {
        Ok(f) => Ok(Loaded {
            path: path.to_string(),
            doc: f.document,
        }),
        Err(diags) => Err(diagnostics_output(path, src, &diags, json)),
    }
}

fn diagnostics_output(path: &str, src: &str, diags: &[Diagnostic], json: bool) -> Output {
    if json {
        Output {
            code: EXIT_ERROR,
            stdout: json!({ "ok": false, "file": path, "diagnostics": diags }).to_string() + "\n",
            stderr: String::new(),
        }
    } else {
        Output {
            code: EXIT_ERROR,
            stdout: String::new(),
            stderr: diags.iter().map(|d| d.render(path, src)).collect(),
        }
    }
}

fn query<'d>(doc: &'d Document, name: &str, json: bool) -> Result<&'d ConjunctiveQuery, Output> {
    doc.query(name)
        .ok_or_else(|| Output::error(json, format!("no query named `{name}`")))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("core types serialize") + "\n"
}

pub fn run(cli: &Cli) -> Output {
    match execute(cli) {
        Ok(o) | Err(o) => o,
    }
}

/// Runs a command on source text instead of the file it names.
pub fn run_on_source(cli: &Cli, src: &str) -> Output {
    let file = match &cli.command {
        Cmd::Check(f) => f,
        Cmd::Simplify { file, .. }
        | Cmd::Reduce { file, .. }
        | Cmd::Decide { file, .. }
        | Cmd::Chase { file, .. }
        | Cmd::Saturate { file, .. }
        | Cmd::Linearize { file, .. }
        | Cmd::PlanEval { file, .. } => file,
        Cmd::Diff { .. } => return run(cli),
    };
    let path = file.path.display().to_string();
    match load_str(&path, src, cli.json) {
        Ok(l) => match with_document(cli, l) {
            Ok(o) | Err(o) => o,
        },
        Err(o) => o,
    }
}

fn execute(cli: &Cli) -> Result<Output, Output> {
    match &cli.command {
        Cmd::Diff {
            family,
            width,
            seed,
            count,
        } => Ok(diff(*family, *width, *seed, *count, cli.json)),
        Cmd::Check(f)
        | Cmd::Simplify { file: f, .. }
        | Cmd::Reduce { file: f, .. }
        | Cmd::Decide { file: f, .. }
        | Cmd::Chase { file: f, .. }
        | Cmd::Saturate { file: f, .. }
        | Cmd::Linearize { file: f, .. }
        | Cmd::PlanEval { file: f, .. } => with_document(cli, load(f, cli.json)?),
    }
}

fn with_document(cli: &Cli, loaded: Loaded) -> Result<Output, Output> {
    let json = cli.json;
    let doc = &loaded.doc;
    let s = &doc.schema;
    match &cli.command {
        Cmd::Check(_) => Ok(check(&loaded, json)),
        Cmd::Simplify { kind, .. } => Ok(simplify(s, *kind, json)),
        Cmd::Reduce { query: q, literal, .. } => reduce(query(doc, q, json)?, s, *literal, json),
        Cmd::Decide {
            query: q,
            budget,
            max_width,
            ..
        } => {
            let mut opts = DecideOptions {
                budget: budget.budget(),
                ..DecideOptions::default()
            };
            if let Some(w) = max_width {
                opts.max_width = *w;
            }
            decide(query(doc, q, json)?, s, &opts, json)
        }
        Cmd::Chase {
            query: q, emit, budget, ..
        } => chase(query(doc, q, json)?, s, *emit, budget.budget(), json),
        Cmd::Saturate { width, .. } => saturate(s, *width, json),
        Cmd::Linearize { query: q, width, .. } => linearize(query(doc, q, json)?, s, *width, json),
        Cmd::PlanEval {
            plan,
            semantics,
            max_runs,
            ..
        } => plan_eval(doc, plan, *semantics, *max_runs, json),
        Cmd::Diff { .. } => unreachable!("diff takes no file"),
    }
}

fn check(l: &Loaded, json: bool) -> Output {
    let s = &l.doc.schema;
    let class = classify(&s.constraints).class;
    if json {
        return Output::ok(to_json(&json!({
            "ok": true,
            "file": l.path,
            "relations": s.signature.relations().count(),
            "methods": s.methods.len(),
            "constraints": s.constraints.len(),
            "queries": l.doc.queries.len(),
            "plans": l.doc.plans.len(),
            "facts": l.doc.facts.len(),
            "class": class,
        })));
    }
    Output::ok(format!(
        "{}: ok: {} relations, {} methods, {} constraints, {} queries, {} plans, {} facts; class {class:?}\n",
        l.path,
        s.signature.relations().count(),
        s.methods.len(),
        s.constraints.len(),
        l.doc.queries.len(),
        l.doc.plans.len(),
        l.doc.facts.len(),
    ))
}

fn simplify(s: &Schema, kind: SimplifyKind, json: bool) -> Output {
    let (out, report) = match kind {
        SimplifyKind::Existence => {
            let (o, r) = existence_check_simplify(s);
            (o, Some(r))
        }
        SimplifyKind::Fd => {
            let (o, r) = fd_simplify(s);
            (o, Some(r))
        }
        SimplifyKind::Choice => (choice_simplify(s), None),
    };
    if json {
        return Output::ok(to_json(&json!({ "schema": out, "report": report })));
    }
    let mut text = String::new();
    if let Some(r) = &report {
        for (m, v) in &r.method_map {
            writeln!(text, "# {m} -> {v}").unwrap();
        }
    }
    text.push_str(&print_schema(&out));
    Output::ok(text)
}

fn reduce(q: &ConjunctiveQuery, s: &Schema, literal: bool, json: bool) -> Result<Output, Output> {
    let opts = BuildOptions {
        rewrite_unbounded: !literal,
    };
    let p = build_amondet_containment_with(q, s, opts).map_err(|e| Output::error(json, e.to_string()))?;
    if json {
        return Ok(Output::ok(to_json(&p)));
    }
    let mut text = String::new();
    writeln!(text, "# source: {}", p.source).unwrap();
    writeln!(text, "# target: {}", p.target).unwrap();
    for (r, a) in p.signature.relations() {
        writeln!(text, "relation {r}/{a};").unwrap();
    }
    let mut group = None;
    for g in &p.gamma {
        let label = match &g.origin {
            Origin::Sigma => "constraints".to_string(),
            Origin::SigmaPrimed => "primed constraints".to_string(),
            Origin::Access { kind, method } => format!("{kind:?} axioms for {method}"),
        };
        if group.as_ref() != Some(&label) {
            writeln!(text, "# {label}").unwrap();
            group = Some(label);
        }
        writeln!(text, "{g};").unwrap();
    }
    if !p.counting.is_empty() {
        writeln!(text, "# counting axioms, not chased").unwrap();
        for c in &p.counting {
            writeln!(text, "# {c}").unwrap();
        }
    }
    writeln!(text, "# initial instance").unwrap();
    for f in p.initial.iter() {
        writeln!(text, "# {f}").unwrap();
    }
    Ok(Output::ok(text))
}

fn verdict_code(v: &Verdict) -> i32 {
    if v.answer == Answer::Unknown {
        EXIT_UNKNOWN
    } else {
        EXIT_OK
    }
}

fn decide(q: &ConjunctiveQuery, s: &Schema, opts: &DecideOptions, json: bool) -> Result<Output, Output> {
    let v = decide_with(q, s, opts).map_err(|e| Output::error(json, e.to_string()))?;
    let code = verdict_code(&v);
    let stdout = if json {
        to_json(&v)
    } else {
        let mut t = format!("{:?}\n", v.answer);
        writeln!(t, "class: {:?}", v.class).unwrap();
        writeln!(t, "route: {:?}", v.route).unwrap();
        writeln!(t, "exact: {}", v.exact).unwrap();
        writeln!(t, "finite variant: {:?}", v.finite_variant).unwrap();
        match &v.witness {
            Some(Witness::Match { facts, .. }) => {
                writeln!(t, "witness:").unwrap();
                for f in facts {
                    writeln!(t, "  {f}").unwrap();
                }
            }
            Some(Witness::Inconsistent { left, right }) => {
                writeln!(t, "witness: the FDs equate {left} and {right}").unwrap();
            }
            None => {}
        }
        let st = &v.stats;
        writeln!(t, "gamma: {} rules, {} counting axioms", st.gamma_size, st.counting_axioms).unwrap();
        if let (Some(r), Some(f)) = (st.chase_rounds, st.chase_facts) {
            writeln!(t, "chase: {r} rounds, {f} facts").unwrap();
        }
        for n in &v.notes {
            writeln!(t, "note: {n}").unwrap();
        }
        t
    };
    Ok(Output {
        code,
        stdout,
        stderr: String::new(),
    })
}

fn chase(q: &ConjunctiveQuery, s: &Schema, emit: Emit, budget: Budget, json: bool) -> Result<Output, Output> {
    let opts = DecideOptions {
        budget,
        ..DecideOptions::default()
    };
    let routed = route_problem(q, s, &opts).map_err(|e| Output::error(json, e.to_string()))?;
    let run = match chase_containment(&routed.problem, budget, &routed.order) {
        ChaseDecision::Holds { run, .. } | ChaseDecision::Saturated(run) | ChaseDecision::OutOfBudget(run, _) => run,
        ChaseDecision::Inconsistent(a, b) => {
            return Ok(Output::ok(if json {
                to_json(&json!({ "inconsistent": [a, b] }))
            } else {
                format!("# the FDs equate {a} and {b}\n")
            }))
        }
    };
    let code = match run.outcome {
        Outcome::BudgetExhausted(_) => EXIT_UNKNOWN,
        _ => EXIT_OK,
    };
    let stdout = match (emit, json) {
        (Emit::Json, _) | (_, true) => to_json(&trace(&run.state, Some(run.outcome))),
        (Emit::Dot, false) => to_dot(&run.state),
    };
    Ok(Output {
        code,
        stdout,
        stderr: String::new(),
    })
}

fn saturate(s: &Schema, width: Option<usize>, json: bool) -> Result<Output, Output> {
    let ids = s.tgds();
    let w = width.unwrap_or_else(|| classify(&s.constraints).width.max(1));
    let t = saturate_truncated_axioms(&ids, &s.methods, &s.signature, w).map_err(|e| Output::error(json, e.to_string()))?;
    let triples: Vec<_> = t
        .triples()
        .into_iter()
        .filter(|tr| !tr.positions.contains(&tr.target))
        .collect();
    if json {
        return Ok(Output::ok(to_json(&json!({ "width": w, "triples": triples }))));
    }
    let mut text = format!("# truncated accessibility axioms of breadth <= {w}\n");
    for tr in &triples {
        let arity = s.signature.arity(&tr.relation).unwrap_or(0);
        let mut body: Vec<Atom> = tr
            .positions
            .iter()
            .map(|&p| Atom {
                relation: "accessible".into(),
                terms: vec![position_var(p)],
            })
            .collect();
        body.push(Atom {
            relation: tr.relation.clone(),
            terms: (0..arity).map(position_var).collect(),
        });
        let head = vec![Atom {
            relation: "accessible".into(),
            terms: vec![position_var(tr.target)],
        }];
        print_tgd(&Tgd::new(body, head), &mut text);
    }
    Ok(Output::ok(text))
}

fn linearize(q: &ConjunctiveQuery, s: &Schema, width: Option<usize>, json: bool) -> Result<Output, Output> {
    let err = |e: String| Output::error(json, e);
    let routed = route_problem(q, s, &DecideOptions::default()).map_err(|e| err(e.to_string()))?;
    let w = width.unwrap_or_else(|| classify(&s.constraints).width.max(1));
    let lp = linearize_problem(&routed.problem, w).map_err(|e| err(e.to_string()))?;
    if json {
        return Ok(Output::ok(to_json(&lp)));
    }
    let mut text = format!("# linearized IDs, width {w}\n");
    for (r, a) in lp.signature.relations() {
        writeln!(text, "relation {r}/{a};").unwrap();
    }
    for r in &lp.rules {
        writeln!(text, "# {:?}", r.kind).unwrap();
        print_tgd(&r.tgd, &mut text);
    }
    writeln!(text, "# initial instance").unwrap();
    for f in lp.initial.iter() {
        writeln!(text, "# {f}").unwrap();
    }
    Ok(Output::ok(text))
}

fn print_table(t: &Table) -> String {
    let rows: Vec<String> = t
        .iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            format!("({})", cells.join(","))
        })
        .collect();
    format!("{{{}}}", rows.join(", "))
}

fn plan_eval(
    doc: &Document,
    plan: &str,
    semantics: SemanticsArg,
    max_runs: usize,
    json: bool,
) -> Result<Output, Output> {
    let p = doc
        .plan(plan)
        .ok_or_else(|| Output::error(json, format!("no plan named `{plan}`")))?;
    let sem = match semantics {
        SemanticsArg::Idem => Semantics::Idempotent,
        SemanticsArg::Nonidem => Semantics::NonIdempotent,
    };
    let inst: &Instance = &doc.facts;
    let outs = possible_outputs(p, &doc.schema, inst, sem, max_runs).map_err(|e| Output::error(json, e.to_string()))?;
    if json {
        return Ok(Output::ok(to_json(&json!({ "plan": plan, "outputs": outs }))));
    }
    let mut text = format!("{} possible output(s)\n", outs.len());
    for o in &outs {
        writeln!(text, "{}", print_table(o)).unwrap();
    }
    Ok(Output::ok(text))
}

fn diff(family: FamilyArg, width: usize, seed: u64, count: usize, json: bool) -> Output {
    let family = match family {
        FamilyArg::Fd => Family::FdOnly,
        FamilyArg::Id => Family::IdOnly { max_width: width },
        FamilyArg::Uidfd => Family::UidFd,
    };
    let cases = generate_cases(seed, count, &GeneratorConfig::new(family));
    let report = differential_run(&cases, &DecideOptions::default(), Budget::default());
    let code = if report.disagreements == 0 && report.errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_ERROR
    };
    let stdout = if json {
        to_json(&report)
    } else {
        let mut t = format!(
            "{count} cases, {} compared, {} disagreements, {} errors\n",
            report.compared,
            report.disagreements,
            report.errors.len()
        );
        for c in report.cases.iter().filter(|c| c.agrees == Some(false)) {
            writeln!(t, "disagreement on case {}: {:?} vs {:?}", c.index, c.answer, c.oracle).unwrap();
        }
        for e in &report.errors {
            writeln!(t, "error: {e}").unwrap();
        }
        t
    };
    Output {
        code,
        stdout,
        stderr: String::new(),
    }
}
