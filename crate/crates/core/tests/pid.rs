use kdpid::datasets::{example_joint, make_nuisance_task, ExampleSource, SourceChoice};
use kdpid::pid::{feasible_init, marginal_violation, oracle_unique, solve_unique, OracleOptions};
use kdpid::random::{dirichlet_joint, random_map, rng, sparse_joint};
use kdpid::{pid, Axis, Error, Joint3, SolverOptions};
use proptest::prelude::*;

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// I(Y:T|S) straight from the cell table, without the library's measures.
fn cmi_by_hand(q: &[f64], [cy, ct, cs]: [usize; 3]) -> f64 {
    let at = |y: usize, t: usize, s: usize| q[(y * ct + t) * cs + s];
    let mut total = 0.0;
    for s in 0..cs {
        let ps: f64 = (0..cy).flat_map(|y| (0..ct).map(move |t| (y, t))).map(|(y, t)| at(y, t, s)).sum();
        for y in 0..cy {
            let pys: f64 = (0..ct).map(|t| at(y, t, s)).sum();
            for t in 0..ct {
                let pts: f64 = (0..cy).map(|yy| at(yy, t, s)).sum();
                let v = at(y, t, s);
                if v > 0.0 {
                    total += v * (v * ps / (pys * pts)).log2();
                }
            }
        }
    }
    total
}

fn and_gate() -> Joint3 {
    Joint3::from_fn([2, 2, 2], |y, t, s| if y == (t & s) { 0.25 } else { 0.0 }).unwrap()
}

fn xor() -> Joint3 {
    Joint3::from_fn([2, 2, 2], |y, t, s| if y == t ^ s { 0.25 } else { 0.0 }).unwrap()
}

fn copy() -> Joint3 {
    Joint3::from_fn([2, 2, 2], |y, t, s| if y == t && t == s { 0.5 } else { 0.0 }).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn examples_match_closed_forms() {
    let a = pid(&example_joint(1, None).unwrap(), &opts()).unwrap();
    assert!(a.uni_t.abs() <= 1e-4 && a.red.abs() <= 1e-4, "{a:?}");

    let ex2 = example_joint(2, Some(ExampleSource::U1)).unwrap();
    let a = pid(&ex2, &opts()).unwrap();
    assert!((a.red - 0.721928).abs() <= 1e-4, "{a:?}");
    assert!((a.red - h2(0.2)).abs() <= 1e-4);
    assert!((ex2.mi_ts() - 0.721928).abs() <= 1e-6);
    let ex2_u2 = example_joint(2, Some(ExampleSource::U2)).unwrap();
    assert!((ex2_u2.mi_ts() - 1.0).abs() <= 1e-9);

    let a = pid(&example_joint(3, None).unwrap(), &opts()).unwrap();
    assert!(a.uni_t.abs() <= 1e-4 && a.red.abs() <= 1e-4, "{a:?}");
    assert!((a.syn - 1.0).abs() <= 1e-4, "{a:?}");
}

#[test]
fn copy_triple_is_pure_redundancy() {
    let a = pid(&copy(), &opts()).unwrap();
    assert!((a.red - 1.0).abs() < 1e-9);
    assert!(a.uni_t < 1e-9 && a.uni_s < 1e-9 && a.syn < 1e-9);
}

#[test]
fn feasible_init_cases() {
    let x = feasible_init(&xor());
    assert!(x.probs().iter().all(|&v| (v - 0.125).abs() < 1e-15));
    let c = copy();
    assert_eq!(feasible_init(&c).probs(), c.probs());
    // conditionally independent given Y
    let ci = Joint3::from_fn([2, 3, 2], |y, t, s| {
        let py = [0.3, 0.7][y];
        let pt = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]][y][t];
        let ps = [[0.9, 0.1], [0.4, 0.6]][y][s];
        py * pt * ps
    })
    .unwrap();
    let q = feasible_init(&ci);
    for (a, b) in q.probs().iter().zip(ci.probs()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn and_gate_matches_a_line_scan() {
    // y = 1 pins (1,1); the y = 0 slice has one free coordinate d
    // with Q(0,0,0) = 1/4 + d, Q(0,0,1) = Q(0,1,0) = 1/4 - d, Q(0,1,1) = d.
    let mut best = f64::INFINITY;
    let n = 200_000;
    for i in 0..=n {
        let d = 0.25 * i as f64 / n as f64;
        let q = [0.25 + d, 0.25 - d, 0.25 - d, d, 0.0, 0.0, 0.0, 0.25];
        best = best.min(cmi_by_hand(&q, [2, 2, 2]));
    }
    let p = and_gate();
    let sol = solve_unique(&p, &opts()).unwrap();
    assert!((sol.value - best).abs() <= 1e-3, "solver {} scan {best}", sol.value);
    assert!(sol.value.abs() <= 1e-3);
    let oracle = oracle_unique(&p, &OracleOptions::default()).unwrap();
    assert!((oracle.value - best).abs() <= 1e-3);

    let a = pid(&p, &opts()).unwrap();
    let mi_yt = h2(0.25) - 0.5;
    assert!((a.red - mi_yt).abs() <= 1e-3, "{a:?}");
    assert!((a.red - 0.3113).abs() <= 1e-3);
}

#[test]
fn oracle_examples() {
    let o = OracleOptions::default();
    assert!(oracle_unique(&copy(), &o).unwrap().value.abs() < 1e-12);
    assert!(oracle_unique(&xor(), &o).unwrap().value.abs() < 1e-9);
}

#[test]
fn oracle_rejects_large_supports() {
    let mut r = rng(4);
    let p = dirichlet_joint(&mut r, [3, 3, 3]);
    assert!(matches!(
        oracle_unique(&p, &OracleOptions::default()),
        Err(Error::UnsupportedSize(_))
    ));
}

#[test]
fn solver_agrees_with_oracle_on_random_joints() {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = dirichlet_joint(&mut r, [2, 2, 2]);
        let s = solve_unique(&p, &opts()).unwrap();
        let o = oracle_unique(&p, &OracleOptions::default()).unwrap();
        worst = worst.max((s.value - o.value).abs());
        assert!(marginal_violation(&p, &s.q) <= 1e-10);
        assert!(s.q.probs().iter().all(|&v| v >= 0.0));
    }
    assert!(worst <= 1e-3, "worst gap {worst}");
}

#[test]
fn objective_agrees_with_hand_computation() {
    let mut r = rng(9);
    for _ in 0..20 {
        let p = sparse_joint(&mut r, [2, 3, 2], 0.3);
        let s = solve_unique(&p, &opts()).unwrap();
        let hand = cmi_by_hand(s.q.probs(), s.q.card());
        assert!((s.value - hand).abs() < 1e-9);
    }
}

#[test]
fn nuisance_redundancy_is_maximal_for_the_task_factor() {
    for (hz, hg) in [(1.0, 1.0), (1.0, 2.0), (1.5, 0.8)] {
        let task = make_nuisance_task(hz, hg, 10, 1).unwrap();
        let pz = task.joint(SourceChoice::Z).unwrap();
        let pg = task.joint(SourceChoice::G).unwrap();
        let rz = pid(&pz, &opts()).unwrap();
        let rg = pid(&pg, &opts()).unwrap();
        assert!(rz.red >= rg.red - 1e-9);
        assert!((rz.red - pz.mi_yt()).abs() <= 1e-4, "{rz:?}");
        assert!((pz.mi_ts() - task.h_z()).abs() < 1e-9);
        assert!((pg.mi_ts() - task.h_g()).abs() < 1e-9);
    }
}

fn weights(card: [usize; 3]) -> impl Strategy<Value = Joint3> {
    let n = card.iter().product::<usize>();
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0], n)
        .prop_filter("some mass", |w| w.iter().any(|&v| v > 0.0))
        .prop_map(move |w| Joint3::from_weights(card, w).unwrap())
}

fn any_joint() -> impl Strategy<Value = Joint3> {
    (2usize..=3, 2usize..=3, 2usize..=3).prop_flat_map(|(a, b, c)| weights([a, b, c]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn atoms_are_nonnegative_and_consistent(p in any_joint()) {
        let a = pid(&p, &opts()).unwrap();
        prop_assert!(a.min_raw() >= -1e-9, "{:?}", a.raw);
        prop_assert!(a.identity_error() <= 1e-6);
        prop_assert!(a.diag.max_violation <= 1e-10);
    }

    #[test]
    fn swapping_sources_swaps_unique_atoms(p in any_joint()) {
        let a = pid(&p, &opts()).unwrap();
        let b = pid(&p.swap_sources(), &opts()).unwrap();
        prop_assert!((a.red - b.red).abs() <= 2e-4, "{} vs {}", a.red, b.red);
        prop_assert!((a.uni_t - b.uni_s).abs() <= 2e-4);
        prop_assert!((a.syn - b.syn).abs() <= 2e-4);
    }

    #[test]
    fn coarsening_the_teacher_never_adds_unique_information(p in weights([2, 4, 2]), seed in 0u64..1000) {
        let h = random_map(&mut rng(seed), 4, 2);
        let coarse = p.map_t(&h, 2).unwrap();
        let fine = pid(&p, &opts()).unwrap();
        let c = pid(&coarse, &opts()).unwrap();
        prop_assert!(c.uni_t <= fine.uni_t + 1e-4, "{} > {}", c.uni_t, fine.uni_t);
    }

    #[test]
    fn a_teacher_computed_from_the_student_holds_nothing_unique(p in weights([2, 2, 3]), seed in 0u64..1000) {
        // rebuild T as a function of S
        let h = random_map(&mut rng(seed), 3, 2);
        let q = Joint3::from_fn([2, 2, 3], |y, t, s| {
            if t == h[s] { p.marginal2(Axis::Y, Axis::S).unwrap().get(y, s) } else { 0.0 }
        }).unwrap();
        let a = pid(&q, &opts()).unwrap();
        prop_assert!(a.uni_t <= 1e-4);
        prop_assert!((q.mi_yt().max(q.mi_ys()) - q.mi_ys()).abs() <= 1e-6);
    }
}
