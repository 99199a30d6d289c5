use kdpid::datasets::{example_joint, make_example_triple, ExampleSource};
use kdpid::info::{cond_mutual_info, entropy, mutual_info, JointN};
use kdpid::random::{dirichlet_joint, random_map, rng};
use kdpid::{Axis, Joint2, Joint3};
use proptest::prelude::*;

#[test]
fn entropy_examples() {
    assert!((entropy(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
    assert!((entropy(&[0.2, 0.8]).unwrap() - 0.721928).abs() < 1e-6);
    assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
    assert!(entropy(&[0.7, 0.7]).is_err());
    assert!(entropy(&[1.2, -0.2]).is_err());
}

#[test]
fn mutual_info_examples() {
    let indep = Joint2::new(2, 3, vec![0.1, 0.2, 0.1, 0.15, 0.3, 0.15]).unwrap();
    assert!(mutual_info(&indep).abs() < 1e-15);
    let copy = Joint2::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    assert!((mutual_info(&copy) - 1.0).abs() < 1e-15);
    let ex2 = example_joint(2, Some(ExampleSource::U1)).unwrap();
    let ts = ex2.marginal2(Axis::T, Axis::S).unwrap();
    assert!((mutual_info(&ts) - 0.721928).abs() < 1e-6);
}

#[test]
fn conditional_mutual_info_examples() {
    let xor = example_joint(3, None).unwrap();
    assert!((cond_mutual_info(&xor, Axis::Y, Axis::T).unwrap() - 1.0).abs() < 1e-12);
    let indep = Joint3::from_fn([2, 3, 2], |y, t, s| [0.3, 0.7][y] * [0.2, 0.5, 0.3][t] * [0.6, 0.4][s]).unwrap();
    assert!(cond_mutual_info(&indep, Axis::Y, Axis::T).unwrap().abs() < 1e-12);
    let copy = Joint3::from_fn([2, 2, 2], |y, t, s| if y == t && t == s { 1.0 } else { 0.0 }).unwrap();
    assert_eq!(cond_mutual_info(&copy, Axis::Y, Axis::T).unwrap(), 0.0);
}

#[test]
fn marginal_examples() {
    let u = Joint3::from_fn([2, 2, 2], |_, _, _| 1.0).unwrap();
    assert!(u.marginal2(Axis::Y, Axis::T).unwrap().probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));

    // T = (U1, U2) with U1 ~ Ber(0.2), U2 ~ Ber(0.5); Y = U1
    let ex2 = example_joint(2, None).unwrap();
    let yt = ex2.marginal2(Axis::Y, Axis::T).unwrap();
    let want = [[0.4, 0.4, 0.0, 0.0], [0.0, 0.0, 0.1, 0.1]];
    for y in 0..2 {
        for t in 0..4 {
            assert!((yt.get(y, t) - want[y][t]).abs() < 1e-15);
        }
    }
}

#[test]
fn samples_build_empirical_joints() {
    let samples = [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)];
    let p = Joint3::from_samples(&samples, [2, 1, 2]).unwrap();
    assert!(p.probs().iter().all(|&v| v == 0.25));
    assert!(Joint3::from_samples(&[], [2, 2, 2]).is_err());
    assert!(Joint3::from_samples(&[(0, 2, 0)], [2, 2, 2]).is_err());

    let (_, xs) = make_example_triple(3, None, 1000, 11).unwrap();
    let emp = Joint3::from_samples(&xs, [2, 2, 2]).unwrap();
    assert!(emp.mi_yt() < 0.05);
}

#[test]
fn invalid_joints_are_rejected() {
    assert!(Joint3::new([2, 1, 1], vec![0.5, 0.6]).is_err());
    assert!(Joint3::new([2, 1, 1], vec![1.5, -0.5]).is_err());
    assert!(Joint3::new([2, 2, 1], vec![0.5, 0.5]).is_err());
    assert!(Joint3::new([0, 1, 1], vec![]).is_err());
}

#[test]
fn file_formats_round_trip() {
    let p = dirichlet_joint(&mut rng(1), [2, 3, 2]);
    let back = Joint3::from_json(&p.to_json()).unwrap();
    assert_eq!(back.probs(), p.probs());
    let csv = "y,t,s,prob\n0,0,0,0.5\n1,1,1,0.5\n";
    let c = Joint3::from_csv(csv, None).unwrap();
    assert_eq!(c.card(), [2, 2, 2]);
    assert_eq!(c.get(0, 1, 0), 0.0);
    assert!(Joint3::from_json(r#"{"card":[1,1,2],"p":[0.5,0.5],"extra":1}"#).is_err());
}

fn joint() -> impl Strategy<Value = Joint3> {
    (1usize..=3, 1usize..=4, 1usize..=4).prop_flat_map(|(a, b, c)| {
        prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0f64..1.0], a * b * c)
            .prop_filter("mass", |w| w.iter().any(|&v| v > 0.0))
            .prop_map(move |w| Joint3::from_weights([a, b, c], w).unwrap())
    })
}

proptest! {
    #[test]
    fn chain_rule(p in joint()) {
        let lhs = p.mi_y_ts();
        let rhs = p.mi_ys() + cond_mutual_info(&p, Axis::Y, Axis::T).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn conditioning_on_a_function_of_the_condition_changes_nothing(p in joint(), seed in 0u64..1000) {
        let g = random_map(&mut rng(seed), p.card_s(), 3);
        let n = JointN::from(&p).augment_with_function(2, &g, 3).unwrap();
        let lhs = n.cond_mutual_info(&[0], &[1], &[3, 2]).unwrap();
        let rhs = cond_mutual_info(&p, Axis::Y, Axis::T).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn symmetry_and_nonnegativity(p in joint()) {
        let yt = p.marginal2(Axis::Y, Axis::T).unwrap();
        let a = mutual_info(&yt);
        prop_assert!(a >= 0.0);
        prop_assert!((a - mutual_info(&yt.transpose())).abs() <= 1e-12);
        prop_assert!(cond_mutual_info(&p, Axis::Y, Axis::T).unwrap() >= 0.0);
    }

    #[test]
    fn data_processing(p in joint(), seed in 0u64..1000) {
        let h = random_map(&mut rng(seed), p.card_t(), 2);
        prop_assert!(p.map_t(&h, 2).unwrap().mi_yt() <= p.mi_yt() + 1e-12);
    }

    #[test]
    fn marginals_commute(p in joint()) {
        let via_yt = p.marginal2(Axis::Y, Axis::T).unwrap().row_marginal();
        let via_ys = p.marginal2(Axis::Y, Axis::S).unwrap().row_marginal();
        for (a, b) in via_yt.iter().zip(&via_ys) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        let direct = p.marginal(Axis::Y);
        for (a, b) in direct.iter().zip(&via_yt) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        let h = entropy(&direct).unwrap();
        prop_assert!(h >= 0.0 && h <= (p.card_y() as f64).log2() + 1e-12);
    }
}
