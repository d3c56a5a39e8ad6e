//! Acceptance gate. Runs each criterion and prints one PASS or FAIL line per
//! criterion; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use answerability::parser::{parse, parse_and_check, Document};
use answerability_core::chase::{Budget, Outcome};
use answerability_core::constraints::{Dependency, Tgd};
use answerability_core::decide::{decide_with, profile_fd_route, Answer, DecideOptions, Verdict};
use answerability_core::model::{Atom, ConjunctiveQuery, Fact, Instance, Name, Term, Value};
use answerability_core::oracle::{
    check_linearization, check_saturation, differential_run, generate_cases, oracle_answerability, random_seed, Case,
    Family, GeneratorConfig, OracleAnswer,
};
use answerability_core::plans::{cached_transform, possible_outputs, Command, Expr, Plan, Semantics, Table};
use answerability_core::reduction::{build_amondet_containment_with, AxiomKind, BuildOptions, Origin};
use answerability_core::schema::{elim_ub, existence_check_simplify, Schema};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn load(src: &str) -> Document {
    parse_and_check(src).expect("bundled file checks").document
}

fn university() -> Document {
    load(include_str!("../data/university.dsl"))
}

fn directory_fd() -> Document {
    load(include_str!("../data/directory_fd.dsl"))
}

/// Renames variables by order of first occurrence.
fn alpha(t: &Tgd) -> Tgd {
    let mut names: BTreeMap<Name, Term> = BTreeMap::new();
    let mut rename = |atoms: &[Atom]| -> Vec<Atom> {
        atoms
            .iter()
            .map(|a| {
                let terms = a
                    .terms
                    .iter()
                    .map(|term| match term {
                        Term::Var(v) => {
                            let n = names.len();
                            names.entry(v.clone()).or_insert_with(|| Term::var(&format!("v{n}"))).clone()
                        }
                        c => c.clone(),
                    })
                    .collect();
                Atom::new(&a.relation, terms)
            })
            .collect()
    };
    let body = rename(&t.body);
    let head = rename(&t.head);
    Tgd::new(body, head)
}

/// TGDs of a DSL snippet, up to variable names.
fn tgds_of(src: &str) -> Vec<Tgd> {
    let doc = parse(src).unwrap_or_else(|d| panic!("{d:?}\n{src}")).document;
    doc.schema
        .constraints
        .iter()
        .filter_map(Dependency::as_tgd)
        .map(alpha)
        .collect()
}

fn opts() -> DecideOptions {
    DecideOptions::default()
}

fn timed_verdict(q: &ConjunctiveQuery, s: &Schema) -> Result<(Verdict, Duration), String> {
    let start = Instant::now();
    let v = decide_with(q, s, &opts()).map_err(|e| format!("{}: {e}", q.name))?;
    Ok((v, start.elapsed()))
}

fn criterion_1() -> Check {
    let uni = university();
    let fd = directory_fd();
    let cases = [
        (&uni, "Q2", Answer::Answerable),
        (&fd, "Q3", Answer::Answerable),
        (&uni, "Q1", Answer::NotAnswerable),
    ];
    let mut worst = Duration::ZERO;
    for (doc, q, expected) in cases {
        let query = doc.query(q).expect("query in file");
        let (v, took) = timed_verdict(query, &doc.schema)?;
        worst = worst.max(took);
        ensure(v.answer == expected && v.exact, || format!("{q}: {:?} (exact {})", v.answer, v.exact))?;
        ensure(took < Duration::from_secs(1), || format!("{q} took {took:?}"))?;
    }
    let q1 = uni.query("Q1").expect("Q1");
    let (v, _) = timed_verdict(q1, &uni.schema)?;
    ensure(v.stats.patterns_explored.is_some(), || "Q1 not decided by the exact linearized procedure".into())?;
    let oracle = oracle_answerability(q1, &uni.schema, Budget::default()).map_err(|e| e.to_string())?;
    ensure(matches!(oracle, OracleAnswer::FailsWithin { .. }), || format!("oracle on Q1: {oracle:?}"))?;
    Ok(format!("Q2, Q3 Answerable; Q1 NotAnswerable (exact route and oracle agree); slowest {worst:?}"))
}

fn criterion_2() -> Check {
    // The directory looked up by id, with a bound.
    let doc = load(
        "relation Prof/3; relation Udirectory/3;
         method pr on Prof inputs (1);
         method ud2 on Udirectory inputs (1) bound 1;
         id Prof(i,n,s) -> Udirectory(i,a,p);",
    );
    let (s1, report) = existence_check_simplify(&doc.schema);
    ensure(report.views.len() == 1, || format!("{} views", report.views.len()))?;
    let view = &report.views[0].view;
    let rels: Vec<(String, usize)> = s1.signature.relations().map(|(r, a)| (r.to_string(), a)).collect();
    let expected_rels = vec![("Prof".to_string(), 3), ("Udirectory".to_string(), 3), (view.to_string(), 1)];
    ensure(rels == expected_rels, || format!("relations {rels:?}"))?;
    let m = s1.method(&report.views[0].new_method).ok_or("new method missing")?;
    ensure(&m.relation == view && m.inputs.len() == 1 && m.bound.is_none(), || format!("{m}"))?;
    let expected = tgds_of(&format!(
        "id Prof(i,n,s) -> Udirectory(i,a,p);
         id Udirectory(i,a,p) -> {view}(i);
         id {view}(i) -> Udirectory(i,a,p);"
    ));
    let got: Vec<Tgd> = s1.tgds().iter().map(alpha).collect();
    ensure(got == expected, || format!("IDs {got:?}"))?;

    let uni = university();
    let p = build_amondet_containment_with(
        uni.query("Q1").expect("Q1"),
        &uni.schema,
        BuildOptions {
            rewrite_unbounded: false,
        },
    )
    .map_err(|e| e.to_string())?;
    let n = &p.names;
    let (acc, prof_acc, ud_acc) = (&n.accessible, &n.acc[&Name::from("Prof")], &n.acc[&Name::from("Udirectory")]);
    let (prof_p, ud_p) = (n.primed(&"Prof".into()), n.primed(&"Udirectory".into()));
    let group = |f: &dyn Fn(&Origin) -> bool| -> Vec<Tgd> {
        p.gamma
            .iter()
            .filter(|g| f(&g.origin))
            .filter_map(|g| g.dependency.as_tgd())
            .map(alpha)
            .collect()
    };
    let kind = |k: AxiomKind| move |o: &Origin| matches!(o, Origin::Access { kind, .. } if *kind == k);
    let groups: [(&str, Vec<Tgd>, Vec<Tgd>); 5] = [
        (
            "constraints",
            group(&|o| *o == Origin::Sigma),
            tgds_of("id Prof(i,n,s) -> Udirectory(i,a,p);"),
        ),
        (
            "primed constraints",
            group(&|o| *o == Origin::SigmaPrimed),
            tgds_of(&format!("id {prof_p}(i,n,s) -> {ud_p}(i,a,p);")),
        ),
        (
            "unbounded access",
            group(&kind(AxiomKind::NoBound)),
            tgds_of(&format!("tgd {acc}(i), Prof(i,n,s) -> {prof_acc}(i,n,s);")),
        ),
        (
            "first directory tuple",
            group(&kind(AxiomKind::LowerBoundOne)),
            tgds_of(&format!("id Udirectory(i,a,p) -> {ud_acc}(x,y,z);")),
        ),
        (
            "accessed tuples",
            group(&kind(AxiomKind::AccToBoth)),
            tgds_of(&format!(
                "tgd {prof_acc}(a,b,c) -> Prof(a,b,c), {prof_p}(a,b,c), {acc}(a), {acc}(b), {acc}(c);
                 tgd {ud_acc}(a,b,c) -> Udirectory(a,b,c), {ud_p}(a,b,c), {acc}(a), {acc}(b), {acc}(c);"
            )),
        ),
    ];
    for (label, got, expected) in &groups {
        ensure(got == expected, || format!("{label}: {got:?}"))?;
    }
    ensure(p.gamma.len() == 6, || format!("{} gamma rules", p.gamma.len()))?;
    let thresholds: Vec<u32> = p.counting.iter().map(|c| c.threshold).collect();
    ensure(thresholds == (2..=100).collect::<Vec<_>>(), || format!("thresholds {thresholds:?}"))?;
    ensure(
        p.counting.iter().all(|c| &*c.relation == "Udirectory" && c.inputs.is_empty()),
        || "counting axioms on the wrong method".into(),
    )?;
    Ok("existence-check schema and IDs match; gamma has all axiom groups and 99 counting axioms".into())
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let cases = generate_cases(42, 250, &GeneratorConfig::new(Family::IdOnly { max_width: 2 }));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut bad = Vec::new();
    let mut nonempty = 0;
    for (i, c) in cases.iter().enumerate() {
        let s = elim_ub(&c.schema);
        let (seed, acc) = random_seed(&mut rng, &s, 8, 4);
        ensure(seed.len() <= 8, || format!("seed of {} facts", seed.len()))?;
        let r = check_linearization(&s, &seed, &acc, 2, 6).map_err(|e| format!("case {i}: {e}"))?;
        nonempty += usize::from(r.original_primed > 0);
        if !r.faithful() {
            bad.push(i);
        }
    }
    let took = start.elapsed();
    ensure(bad.is_empty(), || format!("mismatches on cases {bad:?}"))?;
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!(
        "{} schemas, 0 mismatches, {nonempty} with primed facts, {took:.1?}",
        cases.len()
    ))
}

fn criterion_4() -> Check {
    let cases = generate_cases(41, 250, &GeneratorConfig::new(Family::IdOnly { max_width: 2 }));
    let (mut candidates, mut emitted, mut inconclusive) = (0, 0, 0);
    for (i, c) in cases.iter().enumerate() {
        let s = elim_ub(&c.schema);
        let r = check_saturation(&s, 2, Budget::default().with_depth(6).with_facts(3000))
            .map_err(|e| format!("case {i}: {e}"))?;
        ensure(r.unsound.is_empty(), || format!("case {i}: unsound {:?}", r.unsound))?;
        ensure(r.missing.is_empty(), || format!("case {i}: missing {:?}", r.missing))?;
        candidates += r.candidates;
        emitted += r.emitted;
        inconclusive += r.inconclusive;
    }
    ensure(inconclusive == 0, || format!("{inconclusive} candidates not confirmed within the chase budget"))?;
    Ok(format!(
        "{} schemas, {candidates} candidates, {emitted} triples emitted, 0 unsound, 0 missing",
        cases.len()
    ))
}

fn criterion_5() -> Check {
    let families = [
        (Family::FdOnly, 1),
        (Family::IdOnly { max_width: 2 }, 2),
        (Family::UidFd, 3),
    ];
    let (mut total, mut compared) = (0, 0);
    let oracle_budget = Budget::default().with_depth(8).with_facts(5000);
    for (family, seed) in families {
        let cases = generate_cases(seed, 200, &GeneratorConfig::new(family));
        let r = differential_run(&cases, &opts(), oracle_budget);
        ensure(r.errors.is_empty(), || format!("{family:?}: {:?}", r.errors))?;
        ensure(r.disagreements == 0, || format!("{family:?}: {} disagreements", r.disagreements))?;
        total += cases.len();
        compared += r.compared;
    }
    Ok(format!("{total} cases, {compared} definite on both sides, 0 disagreements"))
}

fn all_families(seed: u64, n: usize) -> Vec<Case> {
    [Family::FdOnly, Family::IdOnly { max_width: 2 }, Family::UidFd]
        .into_iter()
        .flat_map(|f| generate_cases(seed, n, &GeneratorConfig::new(f)))
        .collect()
}

fn criterion_6() -> Check {
    let budget = DecideOptions {
        budget: Budget::default().with_depth(8).with_facts(5000),
        ..DecideOptions::default()
    };
    let cases = all_families(6, 100);
    let answer = |q: &ConjunctiveQuery, s: &Schema| decide_with(q, s, &budget).map(|v| v.answer);
    for (i, c) in cases.iter().enumerate() {
        let err = |e: answerability_core::decide::DecideError| format!("case {i}: {e}");
        let a = answer(&c.query, &c.schema).map_err(err)?;
        let b = answer(&c.query, &elim_ub(&c.schema)).map_err(err)?;
        ensure(a == b, || format!("case {i}: {a:?} vs ElimUB {b:?}"))?;
        for k in [1, 2, 5] {
            let ak = answer(&c.query, &c.schema.with_bound_values(k)).map_err(err)?;
            ensure(ak == a, || format!("case {i}: bound {k} gives {ak:?}, not {a:?}"))?;
        }
    }
    Ok(format!("{} cases, bounds removed and set to 1, 2, 5: 0 flips", cases.len()))
}

fn criterion_7() -> Check {
    let cases = generate_cases(7, 300, &GeneratorConfig::new(Family::FdOnly));
    let (mut profiled, mut max_rounds, mut max_slack) = (0, 0, 0i64);
    for (i, c) in cases.iter().enumerate() {
        let Some(p) = profile_fd_route(&c.query, &c.schema, Budget::default()).map_err(|e| format!("case {i}: {e}"))?
        else {
            continue;
        };
        ensure(p.outcome == Outcome::Saturated, || format!("case {i}: {:?}", p.outcome))?;
        ensure(p.rounds <= p.active_domain + 2, || {
            format!("case {i}: {} rounds, active domain {}", p.rounds, p.active_domain)
        })?;
        ensure(p.fd_firings == 0, || format!("case {i}: {} FD firings", p.fd_firings))?;
        ensure(p.pruned_unprimed_firings == 0, || format!("case {i}: pruned view rules fired"))?;
        ensure(p.pruned_primed_facts_used == 0, || format!("case {i}: pruned primed facts were used"))?;
        ensure(p.unpruned_agrees, || format!("case {i}: pruned and unpruned chases disagree"))?;
        profiled += 1;
        max_rounds = max_rounds.max(p.rounds);
        max_slack = max_slack.max(p.rounds as i64 - p.active_domain as i64);
    }
    ensure(profiled >= 250, || format!("only {profiled} cases profiled"))?;
    Ok(format!(
        "{profiled} FD cases saturated, at most {max_rounds} rounds (rounds - |adom| <= {max_slack}), 0 FD firings"
    ))
}

// ---------------------------------------------------------------------------
// Plans

fn unit_table() -> Table {
    [vec![]].into_iter().collect()
}

/// `R/2` with an input-free method of lower bound 2 and a lookup on the first
/// position, `S/1` unbounded.
fn plan_schema() -> Schema {
    parse_and_check(
        "relation R/2; relation S/1;
         method mr on R inputs () lowerbound 2;
         method mr1 on R inputs (1) lowerbound 1;
         method ms on S inputs ();",
    )
    .expect("plan schema")
    .document
    .schema
}

#[derive(Debug, Clone, Copy)]
enum Step {
    AccessR,
    AccessS,
    Lookup(usize, usize),
    Join(usize, usize),
    Union(usize, usize),
}

fn vars(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn atom(t: &str, vs: &[String]) -> Atom {
    Atom::new(t, vs.iter().map(|v| Term::var(v)).collect())
}

fn build_plan(steps: &[Step]) -> Plan {
    let mut tables: Vec<(String, usize)> = Vec::new();
    let mut commands = Vec::new();
    for (i, st) in steps.iter().enumerate() {
        let target: Name = format!("T{i}").as_str().into();
        let access = |method: &str, input_map: Vec<usize>, source: Expr| Command::Access {
            target: target.clone(),
            method: method.into(),
            input_map,
            source,
        };
        let pick = |k: usize| tables[k % tables.len()].clone();
        let (cmd, arity) = match *st {
            Step::AccessS => (access("ms", vec![], Expr::unit()), 1),
            Step::Lookup(a, col) if !tables.is_empty() => {
                let (t, n) = pick(a);
                let vs = vars("v", n);
                let src = Expr::block(vec![Term::var(&vs[col % n])], vec![atom(&t, &vs)]);
                (access("mr1", vec![0], src), 2)
            }
            Step::Join(a, b) if !tables.is_empty() => {
                let ((ta, na), (tb, nb)) = (pick(a), pick(b));
                let va = vars("a", na);
                let mut vb = vars("b", nb);
                vb[0] = va[0].clone();
                let head = vec![Term::var(&va[0]), Term::var(vb.last().expect("nonempty"))];
                let expr = Expr::block(head, vec![atom(&ta, &va), atom(&tb, &vb)]);
                (Command::Middleware { target: target.clone(), expr }, 2)
            }
            Step::Union(a, b) if !tables.is_empty() => {
                let proj = |(t, n): (String, usize)| {
                    let vs = vars("u", n);
                    Expr::block(vec![Term::var(&vs[0])], vec![atom(&t, &vs)])
                };
                let expr = proj(pick(a)).union(proj(pick(b)));
                (Command::Middleware { target: target.clone(), expr }, 1)
            }
            _ => (access("mr", vec![], Expr::unit()), 2),
        };
        commands.push(cmd);
        tables.push((target.to_string(), arity));
    }
    Plan {
        name: "P".into(),
        output: tables.last().expect("at least one step").0.as_str().into(),
        commands,
    }
}

/// Every plan of up to `len` steps whose references point at one of the
/// first three earlier tables.
fn all_plans(len: usize) -> Vec<Plan> {
    let mut step_kinds = vec![Step::AccessR, Step::AccessS];
    for a in 0..3 {
        for b in 0..3 {
            step_kinds.extend([Step::Join(a, b), Step::Union(a, b)]);
        }
        for col in 0..2 {
            step_kinds.push(Step::Lookup(a, col));
        }
    }
    let mut seqs: Vec<Vec<Step>> = vec![vec![]];
    let mut plans = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..len {
        let mut next = Vec::new();
        for s in &seqs {
            for k in &step_kinds {
                let mut s2 = s.clone();
                s2.push(*k);
                let p = build_plan(&s2);
                if plans.insert(p.to_string()) {
                    out.push(p);
                    next.push(s2);
                }
            }
        }
        seqs = next;
    }
    out
}

/// Every instance over `R ⊆ {0,1}²` and `S ⊆ {0,1}`: 64 instances of at most
/// 6 tuples.
fn all_instances() -> Vec<Instance> {
    let c = |k: u8| Value::constant(&k.to_string());
    let mut facts = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            facts.push(Fact::new("R", vec![c(a), c(b)]));
        }
        facts.push(Fact::new("S", vec![c(a)]));
    }
    (0u32..1 << facts.len())
        .map(|mask| {
            facts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect()
        })
        .collect()
}

fn criterion_8() -> Check {
    let twosem = load(include_str!("../data/twosem.dsl"));
    let p = twosem.plan("P").expect("plan P");
    let outputs = |inst: &Instance, sem| {
        possible_outputs(p, &twosem.schema, inst, sem, 100_000).map_err(|e| e.to_string())
    };
    let idem = outputs(&twosem.facts, Semantics::Idempotent)?;
    let non = outputs(&twosem.facts, Semantics::NonIdempotent)?;
    ensure(idem == [unit_table()].into_iter().collect(), || format!("idempotent outputs {idem:?}"))?;
    ensure(non == [Table::new(), unit_table()].into_iter().collect(), || {
        format!("non-idempotent outputs {non:?}")
    })?;

    let s = plan_schema();
    let plans = all_plans(3);
    let instances = all_instances();
    let mut checked = 0;
    for p in &plans {
        let t = cached_transform(p, &s).map_err(|e| format!("{p}: {e}"))?;
        for inst in &instances {
            let idem = possible_outputs(p, &s, inst, Semantics::Idempotent, 1_000_000)
                .map_err(|e| format!("{p}\non {inst}: {e}"))?;
            let non = possible_outputs(&t, &s, inst, Semantics::NonIdempotent, 1_000_000)
                .map_err(|e| format!("{t}\non {inst}: {e}"))?;
            for o in &non {
                ensure(idem.iter().any(|i| i.is_subset(o)) && idem.iter().any(|i| o.is_subset(i)), || {
                    format!("{p}\non {inst}: cached output {o:?} is not sandwiched")
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!(
        "twosem: idempotent {{()}}, non-idempotent {{}} or {{()}}; sandwich holds on {} plans x {} instances ({checked} pairs)",
        plans.len(),
        instances.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("worked-example verdicts", criterion_1),
        ("simplification golden tests", criterion_2),
        ("linearization faithfulness", criterion_3),
        ("saturation soundness and completeness", criterion_4),
        ("differential agreement", criterion_5),
        ("ElimUB and bound-value invariance", criterion_6),
        ("FD-route termination", criterion_7),
        ("plan semantics", criterion_8),
    ];
    let mut failed = 0;
    for (i, (label, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {}: PASS {label}: {detail} [{took:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {label}: {why} [{took:.1?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
