mod common;

use answerability_core::chase::{
    chase_to_fixpoint, find_active_triggers, trace, Budget, ChaseError, ChaseRun, Outcome, RoundOrder,
};
use answerability_core::constraints::{Dependency, Fd};
use answerability_core::model::{Assignment, Instance};
use proptest::prelude::*;

use common::{extensions, gen, gen_fd, gen_tgd};

fn deps() -> impl Strategy<Value = Vec<Dependency>> {
    (prop::collection::vec(gen_tgd::tgd(), 1..=3), gen_fd::fds("T", 3, 1), gen_fd::fds("R", 2, 1)).prop_map(
        |(tgds, f1, f2)| {
            let mut d: Vec<Dependency> = tgds.into_iter().map(Into::into).collect();
            d.extend(f1.into_iter().chain(f2).map(Dependency::from));
            d
        },
    )
}

fn budget() -> Budget {
    Budget::default().with_rounds(12).with_facts(200).with_depth(3)
}

fn run(inst: &Instance, deps: &[Dependency]) -> Option<ChaseRun> {
    match chase_to_fixpoint(inst, deps, budget(), &RoundOrder::standard()) {
        Ok(r) => Some(r),
        Err(ChaseError::FdConstantConflict(..)) => None,
    }
}

fn satisfies(inst: &Instance, deps: &[Dependency]) -> bool {
    deps.iter().all(|d| match d {
        Dependency::Tgd(t) => extensions(&t.body, inst, &Assignment::new()).iter().all(|a| {
            let exported: Assignment =
                a.iter().filter(|(v, _)| t.exported_vars().contains(*v)).map(|(k, v)| (k.clone(), v.clone())).collect();
            !extensions(&t.head, inst, &exported).is_empty()
        }),
        Dependency::Fd(fd) => fd_holds(inst, fd),
    })
}

fn fd_holds(inst: &Instance, fd: &Fd) -> bool {
    let tuples: Vec<_> = inst.relation(&fd.relation).collect();
    tuples
        .iter()
        .all(|a| tuples.iter().all(|b| !fd.applies(a, b) || a[fd.determined] == b[fd.determined]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn saturated_result_satisfies_every_dependency(inst in gen::instance(5, 3), deps in deps()) {
        if let Some(r) = run(&inst, &deps) {
            if r.outcome == Outcome::Saturated {
                prop_assert!(find_active_triggers(&r.state, &deps).is_empty());
                prop_assert!(satisfies(&r.state.instance(), &deps));
            }
        }
    }

    #[test]
    fn every_firing_matches_its_body(inst in gen::instance(5, 3), deps in deps()) {
        if let Some(r) = run(&inst, &deps) {
            let st = &r.state;
            let known: Instance = st.records().iter().map(|r| r.fact.clone()).collect();
            for f in st.firings() {
                let Dependency::Tgd(t) = &deps[f.dependency] else { continue };
                let premises: Instance = f.premises.iter().map(|&p| st.record(p).fact.clone()).collect();
                let matches = extensions(&t.body, &premises, &Assignment::new());
                let sound = matches.iter().any(|a| {
                    let exported: Assignment = a
                        .iter()
                        .filter(|(v, _)| t.exported_vars().contains(*v))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    !extensions(&t.head, &known, &exported).is_empty()
                });
                prop_assert!(sound);
            }
        }
    }

    #[test]
    fn initial_facts_survive_up_to_merges(inst in gen::instance(5, 3), deps in deps()) {
        if let Some(r) = run(&inst, &deps) {
            let out = r.state.instance();
            let image = inst.map_values(|v| r.state.canonical(v));
            prop_assert!(image.is_subset(&out));
        }
    }

    #[test]
    fn chase_is_deterministic(inst in gen::instance(5, 3), deps in deps()) {
        let a = run(&inst, &deps);
        let b = run(&inst, &deps);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert_eq!(
                trace(&a.state, Some(a.outcome)),
                trace(&b.state, Some(b.outcome))
            ),
            (None, None) => {}
            _ => prop_assert!(false, "runs disagree on conflict"),
        }
    }

    #[test]
    fn full_dependencies_saturate(inst in gen::instance(5, 3), deps in deps()) {
        let full: Vec<Dependency> = deps
            .into_iter()
            .filter(|d| d.as_tgd().is_none_or(|t| t.is_full()))
            .collect();
        let r = chase_to_fixpoint(&inst, &full, Budget::default(), &RoundOrder::standard());
        if let Ok(r) = r {
            prop_assert_eq!(r.outcome, Outcome::Saturated);
            prop_assert!(satisfies(&r.state.instance(), &full));
        }
    }
}
