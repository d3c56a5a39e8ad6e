mod common;

use answerability_core::chase::Budget;
use answerability_core::decide::{decide_monotone_answerability, Answer, Route, Witness};
use answerability_core::oracle::{oracle_answerability, OracleAnswer};

use common::*;

#[test]
fn q2_is_answerable_through_existence_check() {
    let v = decide_monotone_answerability(&q2(), &university(Some(100)), Budget::default()).unwrap();
    assert_eq!(v.answer, Answer::Answerable);
    assert_eq!(v.route, Route::IdExistenceRoute);
    assert!(matches!(v.witness, Some(Witness::Match { .. })));
}

#[test]
fn q3_is_answerable_through_fd_route() {
    let v = decide_monotone_answerability(&q3(), &directory_fd(Some(1)), Budget::default()).unwrap();
    assert_eq!(v.answer, Answer::Answerable);
    assert_eq!(v.route, Route::FdRoute);
}

#[test]
fn q1_with_bound_is_not_answerable() {
    let s = university(Some(100));
    let v = decide_monotone_answerability(&q1(), &s, Budget::default()).unwrap();
    assert_eq!(v.answer, Answer::NotAnswerable);
    assert!(v.exact);
    let o = oracle_answerability(&q1(), &s, Budget::default()).unwrap();
    assert!(matches!(o, OracleAnswer::FailsWithin { .. }), "{o:?}");
}

#[test]
fn q1_without_bound_is_answerable() {
    let s = university(None);
    let v = decide_monotone_answerability(&q1(), &s, Budget::default()).unwrap();
    assert_eq!(v.answer, Answer::Answerable);
    assert_eq!(v.route, Route::BoundedWidthRoute);
}

#[test]
fn q3_without_fd_is_not_answerable() {
    let mut s = directory_fd(Some(1));
    s.constraints.clear();
    let v = decide_monotone_answerability(&q3(), &s, Budget::default()).unwrap();
    assert_eq!(v.answer, Answer::NotAnswerable);
}
