mod common;

use std::collections::BTreeSet;

use answerability_core::constraints::{
    classify, detby, fd_violations, minimize_query_under_fds, Dependency, Fd, Tgd,
};
use answerability_core::model::{eval_cq, Atom, Term, Value};
use common::{gen, gen_fd};
use proptest::prelude::*;

fn tgd_pool() -> Vec<Dependency> {
    vec![
        Tgd::new(vec![Atom::vars("R", &["x", "y"])], vec![Atom::vars("S", &["x"])]).into(),
        Tgd::new(vec![Atom::vars("S", &["x"])], vec![Atom::vars("T", &["x", "y", "z"])]).into(),
        Tgd::new(vec![Atom::vars("T", &["x", "y", "z"])], vec![Atom::vars("R", &["y", "z"])]).into(),
        Tgd::new(
            vec![Atom::vars("R", &["x", "y"]), Atom::vars("S", &["y"])],
            vec![Atom::vars("T", &["x", "y", "w"])],
        )
        .into(),
        Fd::new("T", &[0], 2).into(),
        Fd::new("R", &[1], 0).into(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn detby_is_a_closure(fds in gen_fd::fds("T", 3, 4), p in prop::collection::btree_set(0usize..3, 0..=3), q in prop::collection::btree_set(0usize..3, 0..=3)) {
        let d = detby(&fds, "T", &p);
        prop_assert!(p.is_subset(&d));
        prop_assert_eq!(detby(&fds, "T", &d), d.clone());
        let union: BTreeSet<usize> = p.union(&q).copied().collect();
        prop_assert!(d.is_subset(&detby(&fds, "T", &union)));
    }

    #[test]
    fn classification_ignores_order(mask in 0u32..64, perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let pool = tgd_pool();
        let chosen: Vec<Dependency> = (0..pool.len()).filter(|i| mask & (1 << i) != 0).map(|i| pool[i].clone()).collect();
        let shuffled: Vec<Dependency> = perm.iter().filter(|&&i| mask & (1 << i) != 0).map(|&i| pool[i].clone()).collect();
        let (a, b) = (classify(&chosen), classify(&shuffled));
        prop_assert_eq!(a.class, b.class);
        prop_assert_eq!(a.width, b.width);
    }

    #[test]
    fn minimized_query_is_equivalent_under_fds(
        q in gen::query(3),
        fds in gen_fd::fds("T", 3, 2),
        i in gen::instance(8, 3),
    ) {
        let mut all = fds;
        all.push(Fd::new("R", &[0], 1));
        prop_assume!(fd_violations(&i, &all).is_empty());
        let Ok(m) = minimize_query_under_fds(&q, &all, &gen::signature()) else {
            // The query forces two constants equal and has no answers.
            prop_assert!(eval_cq(&q, &i).is_empty());
            return Ok(());
        };
        let expected = eval_cq(&q, &i);
        let got: BTreeSet<Vec<Value>> = eval_cq(&m.query, &i)
            .into_iter()
            .map(|row| {
                q.free_vars
                    .iter()
                    .map(|v| match &m.substitution[v] {
                        Term::Const(c) => Value::Const(c.clone()),
                        Term::Var(w) => row[m.query.free_vars.iter().position(|x| x == w).unwrap()].clone(),
                    })
                    .collect()
            })
            .collect();
        prop_assert_eq!(got, expected);
    }
}
