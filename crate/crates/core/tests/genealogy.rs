use std::collections::HashMap;

use growfrag::genealogy::{ancestor_at, Label};
use proptest::prelude::*;

fn lab(t: &[(u32, u32, u32)]) -> Label {
    Label::from_triples(t.to_vec()).unwrap()
}

#[test]
fn child_examples() {
    assert_eq!(Label::root().child(2, 1, 1), lab(&[(2, 1, 1)]));
    assert_eq!(lab(&[(2, 1, 1)]).child(1, 3, 2), lab(&[(2, 1, 1), (1, 3, 2)]));
    assert_eq!(lab(&[(2, 1, 1), (1, 3, 2)]).generation(), 2);
    assert_ne!(Label::root().child(1, 1, 2), Label::root().child(1, 2, 1));
}

#[test]
fn prefix_examples() {
    let v = lab(&[(1, 1, 1), (2, 1, 1)]);
    assert!(Label::root().is_prefix(&v));
    assert!(lab(&[(1, 1, 1)]).is_prefix(&v));
    assert!(!lab(&[(1, 1, 2)]).is_prefix(&v));
}

#[test]
fn max_level_examples() {
    assert_eq!(Label::root().max_level(), 0);
    assert_eq!(lab(&[(2, 1, 1), (1, 3, 2)]).max_level(), 2);
    assert_eq!(lab(&[(3, 1, 1)]).max_level(), 3);
}

#[test]
fn ancestor_examples() {
    let v = lab(&[(1, 1, 1)]);
    let mut h = HashMap::new();
    h.insert(Label::root(), 0.0);
    h.insert(v.clone(), 2.0);
    assert_eq!(ancestor_at(&h, 0.7, &Label::root()).unwrap(), Label::root());
    assert_eq!(ancestor_at(&h, 1.0, &v).unwrap(), Label::root());
    assert_eq!(ancestor_at(&h, 2.0, &v).unwrap(), v);
    h.insert(Label::root(), 1.0);
    assert!(ancestor_at(&h, 0.5, &v).is_err());
}

#[test]
fn text_form() {
    assert_eq!(Label::root().to_string(), "∅");
    let u = lab(&[(2, 1, 1), (1, 3, 2)]);
    assert_eq!(u.to_string(), "(2,1,1)(1,3,2)");
    assert_eq!("(2,1,1)(1,3,2)".parse::<Label>().unwrap(), u);
    assert!("(1,1)".parse::<Label>().is_err());
    assert_eq!(u.level_mask(), 0b11);
}

fn triple() -> impl Strategy<Value = (u32, u32, u32)> {
    (1u32..5, 1u32..4, 1u32..4)
}

fn label() -> impl Strategy<Value = Label> {
    prop::collection::vec(triple(), 0..6).prop_map(|t| Label::from_triples(t).unwrap())
}

proptest! {
    #[test]
    fn prefix_is_a_partial_order(u in label(), v in label(), w in label()) {
        prop_assert!(u.is_prefix(&u));
        if u.is_prefix(&v) && v.is_prefix(&u) {
            prop_assert_eq!(&u, &v);
        }
        if u.is_prefix(&v) && v.is_prefix(&w) {
            prop_assert!(u.is_prefix(&w));
        }
    }

    #[test]
    fn child_extends_and_raises_level(u in label(), t in triple()) {
        let c = u.child(t.0, t.1, t.2);
        prop_assert_eq!(c.generation(), u.generation() + 1);
        prop_assert!(u.is_prefix(&c));
        prop_assert_eq!(c.parent().unwrap(), u.clone());
        prop_assert_eq!(c.max_level(), u.max_level().max(t.0));
    }

    #[test]
    fn text_round_trips(u in label()) {
        prop_assert_eq!(u.to_string().parse::<Label>().unwrap(), u);
    }

    #[test]
    fn ancestor_is_monotone_and_nested(
        v in prop::collection::vec(triple(), 1..6),
        gaps in prop::collection::vec(0.0f64..1.0, 6),
        s in 0.0f64..4.0,
        t in 0.0f64..4.0,
    ) {
        let v = Label::from_triples(v).unwrap();
        let mut h = HashMap::new();
        let mut birth = 0.0;
        h.insert(Label::root(), 0.0);
        for len in 1..=v.generation() {
            birth += gaps[len - 1];
            h.insert(v.prefix(len), birth);
        }
        let (s, t) = if s <= t { (s, t) } else { (t, s) };
        let a_s = ancestor_at(&h, s, &v).unwrap();
        let a_t = ancestor_at(&h, t, &v).unwrap();
        prop_assert!(a_s.is_prefix(&a_t));
        prop_assert_eq!(ancestor_at(&h, s, &a_t).unwrap(), a_s);
    }
}
