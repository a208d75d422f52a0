use ghostlock::harness::memcached::model_definition;
use ghostlock::model::{ExampleModel, ExampleVariant, MemcachedModel, Model, ToyModel};

fn render<M: Model>(m: &M) -> String {
    m.tla_module().expect("model has a TLA+ rendering").render()
}

#[test]
fn example_module_matches_golden() {
    assert_eq!(render(&ExampleModel::new(ExampleVariant::Faithful)), include_str!("golden/example.tla"));
}

#[test]
fn mutated_example_differs_only_in_asend() {
    let got = render(&ExampleModel::new(ExampleVariant::AsendPlusOne));
    assert_eq!(got, include_str!("golden/example_asend_plus_one.tla"));
    let faithful = include_str!("golden/example.tla");
    let changed: Vec<_> = faithful.lines().zip(got.lines()).filter(|(a, b)| a != b).collect();
    assert_eq!(changed, [("    /\\ AToB' = Append(AToB, ACtr)", "    /\\ AToB' = Append(AToB, ACtr + 1)")]);
}

#[test]
fn memcached_module_matches_golden() {
    assert_eq!(render(&MemcachedModel::new(2)), include_str!("golden/memcached_2.tla"));
}

#[test]
fn memcached_definition_does_not_depend_on_connection_count() {
    // connection ids are a TLA+ constant, so handler layouts share one module
    assert_eq!(model_definition(1), model_definition(4));
    assert_eq!(model_definition(4), include_str!("golden/memcached_2.tla"));
}

#[test]
fn toy_model_has_no_module() {
    assert!(ToyModel.tla_module().is_none());
}

#[test]
fn every_action_appears_in_next() {
    for text in [include_str!("golden/example.tla"), include_str!("golden/memcached_2.tla")] {
        let next = text.split("Next ==").nth(1).expect("Next is defined");
        let defined: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_suffix(" =="))
            .filter(|n| n.chars().next().is_some_and(char::is_uppercase) && !n.contains('('))
            .filter(|n| !["Vars", "TypeInv", "Init", "Next", "Live", "Spec", "Absent", "None", "Cmds", "Ress", "ConStates"].contains(n))
            .collect();
        assert!(!defined.is_empty());
        for a in defined {
            assert!(next.contains(&format!("\\/ {a}")), "{a} missing from Next");
        }
    }
}
