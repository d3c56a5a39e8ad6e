mod common;

use answerability_core::chase::{chase_to_fixpoint, Budget, Outcome, RoundOrder};
use answerability_core::decide::{decide_with, profile_fd_route, route_problem, Answer, DecideOptions, Route, Witness};
use answerability_core::model::{ground_atom, Instance};
use answerability_core::oracle::{generate_cases, maps_into, Case, Family, GeneratorConfig};
use answerability_core::reduction::build_amondet_containment;
use answerability_core::schema::elim_ub;

fn opts() -> DecideOptions {
    DecideOptions {
        budget: Budget::default().with_depth(8).with_facts(5000),
        ..DecideOptions::default()
    }
}

fn cases(family: Family, seed: u64, n: usize) -> Vec<Case> {
    generate_cases(seed, n, &GeneratorConfig::new(family))
}

fn all_families(seed: u64, n: usize) -> Vec<Case> {
    [Family::FdOnly, Family::IdOnly { max_width: 2 }, Family::UidFd]
        .into_iter()
        .flat_map(|f| cases(f, seed, n))
        .collect()
}

#[test]
fn upper_bounds_do_not_change_verdicts() {
    for c in all_families(11, 60) {
        let a = decide_with(&c.query, &c.schema, &opts()).unwrap();
        let b = decide_with(&c.query, &elim_ub(&c.schema), &opts()).unwrap();
        assert_eq!(a.answer, b.answer, "{}\n{}", c.schema, c.query);
    }
}

#[test]
fn bound_values_do_not_change_verdicts() {
    for c in all_families(12, 60) {
        let answers: Vec<Answer> = [1, 2, 5]
            .into_iter()
            .map(|k| decide_with(&c.query, &c.schema.with_bound_values(k), &opts()).unwrap().answer)
            .collect();
        assert!(answers.windows(2).all(|w| w[0] == w[1]), "{answers:?}\n{}\n{}", c.schema, c.query);
    }
}

#[test]
fn match_witnesses_are_entailed() {
    let mut checked = 0;
    for c in all_families(13, 80) {
        let v = decide_with(&c.query, &c.schema, &opts()).unwrap();
        let Some(Witness::Match { assignment, facts }) = &v.witness else { continue };
        let routed = route_problem(&c.query, &c.schema, &opts()).unwrap();
        let p = &routed.problem;
        let grounded: Vec<_> = p.target.atoms.iter().map(|a| ground_atom(a, assignment)).collect();
        assert!(grounded.iter().all(Option::is_some));
        let targets: Vec<_> = p.target.atoms.iter().map(|a| a.relation.clone()).collect();
        let witness: Instance = facts.iter().filter(|f| targets.contains(&f.relation)).cloned().collect();
        assert!(!witness.is_empty());
        let run = chase_to_fixpoint(&p.initial, &p.dependencies(), opts().budget, &routed.order).unwrap();
        assert!(
            maps_into(&witness, &run.state.instance()),
            "{:?} witness {witness:?} not in chase {:?}\n{}\n{}",
            v.route,
            run.state.instance(),
            c.schema,
            c.query
        );
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn fd_route_is_short_and_fds_never_fire() {
    let mut profiled = 0;
    for c in cases(Family::FdOnly, 14, 300) {
        let Some(p) = profile_fd_route(&c.query, &c.schema, Budget::default()).unwrap() else { continue };
        let ctx = format!("{p:?}\n{}\n{}", c.schema, c.query);
        assert_eq!(p.outcome, Outcome::Saturated, "{ctx}");
        assert!(p.rounds <= p.active_domain + 2, "{ctx}");
        assert_eq!(p.fd_firings, 0, "{ctx}");
        assert_eq!(p.pruned_unprimed_firings, 0, "{ctx}");
        assert_eq!(p.pruned_primed_facts_used, 0, "{ctx}");
        assert!(p.unpruned_agrees, "{ctx}");
        profiled += 1;
    }
    assert!(profiled >= 250);
}

#[test]
fn fd_route_agrees_with_choice_route() {
    use answerability_core::decide::chase_containment;
    use answerability_core::decide::ChaseDecision;
    use answerability_core::schema::choice_simplify;
    for c in cases(Family::FdOnly, 15, 150) {
        let v = decide_with(&c.query, &c.schema, &opts()).unwrap();
        assert_eq!(v.route, Route::FdRoute);
        let p = match build_amondet_containment(&c.query, &choice_simplify(&elim_ub(&c.schema))) {
            Ok(p) => p,
            Err(_) => {
                assert_eq!(v.answer, Answer::Answerable);
                continue;
            }
        };
        let other = match chase_containment(&p, opts().budget, &RoundOrder::standard()) {
            ChaseDecision::Holds { .. } | ChaseDecision::Inconsistent(..) => Answer::Answerable,
            ChaseDecision::Saturated(_) => Answer::NotAnswerable,
            ChaseDecision::OutOfBudget(..) => continue,
        };
        assert_eq!(v.answer, other, "{}\n{}", c.schema, c.query);
    }
}

#[test]
fn verdicts_are_deterministic() {
    for c in all_families(16, 30) {
        let a = decide_with(&c.query, &c.schema, &opts()).unwrap();
        let b = decide_with(&c.query, &c.schema, &opts()).unwrap();
        assert_eq!(a, b);
    }
}
