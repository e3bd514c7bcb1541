use proptest::prelude::*;

use actasp::lp::{Atom, Literal, Rule, Term};
use actasp::reactive::{parse_online, OnlineItem, OnlineUpdate};

/// Lowercase names other than the `not` keyword.
fn name(pattern: &'static str) -> impl Strategy<Value = String> {
    pattern.prop_filter("keyword", |s| s != "not")
}

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        (-50i64..500).prop_map(Term::Int),
        name("[a-z][a-z0-9_]{0,6}").prop_map(Term::sym),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| {
        (
            name("[a-z][a-z0-9]{0,4}"),
            prop::collection::vec(inner, 1..3),
        )
            .prop_map(|(f, args)| Term::func(f, args))
    })
}

fn atom() -> impl Strategy<Value = Atom> {
    (
        prop_oneof![
            Just("_request".to_string()),
            Just("_return".to_string()),
            Just("_action".to_string()),
            name("[a-z][a-z_]{0,5}"),
        ],
        prop::collection::vec(term(), 0..4),
    )
        .prop_map(|(p, args)| Atom::new(p, args))
}

fn rule() -> impl Strategy<Value = Rule> {
    prop_oneof![
        atom().prop_map(Rule::fact),
        prop::collection::vec(
            (any::<bool>(), atom()).prop_map(|(neg, a)| if neg {
                Literal::Neg(a)
            } else {
                Literal::Pos(a)
            }),
            1..4
        )
        .prop_map(Rule::constraint),
    ]
}

fn update() -> impl Strategy<Value = OnlineUpdate> {
    (
        1i64..10_000,
        prop::collection::vec(
            (any::<bool>(), rule()).prop_map(|(v, r)| {
                if v {
                    OnlineItem::volatile(r)
                } else {
                    OnlineItem::persistent(r)
                }
            }),
            0..8,
        ),
    )
        .prop_map(|(step, items)| OnlineUpdate { step, items })
}

proptest! {
    #[test]
    fn rendered_updates_parse_back(u in update()) {
        let text = u.render();
        let back = parse_online(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
        prop_assert_eq!(back, u);
    }

    #[test]
    fn layout_does_not_matter(u in update()) {
        let flat = u.render().replace('\n', " ");
        prop_assert_eq!(parse_online(&flat).unwrap(), u);
    }
}

#[test]
fn listings_parse() {
    let u = parse_online(
        "#step 3.\n:- not _action(move_base,office3,2).\n_request(cancel(1),3).\n_return(move_base,office3,2).\n#endstep.",
    )
    .unwrap();
    assert_eq!(u.step, 3);
    assert_eq!(u.items.len(), 3);
    assert_eq!(u.facts().count(), 2);
}

#[test]
fn rejects_rules_with_bodies_and_variables() {
    assert!(parse_online("#step 1. p :- q. #endstep.").is_err());
    assert!(parse_online("#step 1. p(X). #endstep.").is_err());
    assert!(parse_online("#step 1. p(1).").is_err());
}
