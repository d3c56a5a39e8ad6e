use answerability_core::chase::Budget;
use answerability_core::oracle::{
    check_linearization, check_saturation, generate_cases, random_seed, Family, GeneratorConfig,
};
use answerability_core::schema::elim_ub;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn saturation_matches_chase() {
    let cases = generate_cases(41, 300, &GeneratorConfig::new(Family::IdOnly { max_width: 2 }));
    let mut inconclusive = 0;
    let mut emitted = 0;
    for c in &cases {
        let s = elim_ub(&c.schema);
        let r = check_saturation(&s, 2, Budget::default().with_depth(6).with_facts(3000)).unwrap();
        assert!(r.unsound.is_empty() && r.missing.is_empty(), "{s}\n{r:?}");
        inconclusive += r.inconclusive;
        emitted += r.emitted;
    }
    eprintln!("inconclusive {inconclusive} emitted {emitted}");
}

#[test]
fn linearization_preserves_primed_facts() {
    let cases = generate_cases(42, 300, &GeneratorConfig::new(Family::IdOnly { max_width: 2 }));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut bad = 0;
    let (mut nonempty, mut truncated, mut nulls) = (0, 0, 0);
    for c in &cases {
        let s = elim_ub(&c.schema);
        let (seed, acc) = random_seed(&mut rng, &s, 8, 4);
        let r = check_linearization(&s, &seed, &acc, 2, 6).unwrap();
        nonempty += usize::from(r.original_primed > 0);
        truncated += usize::from(!r.original_saturated);
        nulls += usize::from(r.linearized_primed != r.original_primed);
        if !r.faithful() {
            bad += 1;
            eprintln!("{s}\nseed {seed} acc {acc:?}\n{r:?}");
        }
    }
    eprintln!("nonempty {nonempty} truncated {truncated} size-differs {nulls}");
    assert_eq!(bad, 0);
}
