//! Fidelity checks for the nine bundled GSM-style templates: domain sizes,
//! spot answers from known worked instances, exhaustive instantiation, and
//! prompt rendering details.

use std::path::PathBuf;

use failprob_core::exec;
use failprob_core::space::{Assignment, Value};
use failprob_core::template::{big_rat, Template};

fn template(id: u32) -> Template {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../templates")
        .join(format!("gsm_template_{id}.json"));
    Template::load(&path).unwrap_or_else(|e| panic!("template {id}: {e}"))
}

/// Find the value index of `needle` in dimension `dim`.
fn value_index(t: &Template, dim_name: &str, needle: &Value) -> usize {
    let space = t.space();
    let dim = space
        .dims()
        .iter()
        .position(|d| d.name == dim_name)
        .unwrap_or_else(|| panic!("no dimension '{dim_name}'"));
    space.dims()[dim]
        .values
        .iter()
        .position(|v| v == needle)
        .unwrap_or_else(|| panic!("value {needle:?} not in '{dim_name}'"))
}

/// Build an assignment from (dimension name, value) pairs; unnamed dimensions
/// default to their first value.
fn assignment(t: &Template, picks: &[(&str, Value)]) -> Assignment {
    let space = t.space();
    let mut idx = vec![0usize; space.num_dims()];
    for (name, value) in picks {
        let dim = space.dims().iter().position(|d| &d.name == name).unwrap();
        idx[dim] = value_index(t, name, value);
    }
    Assignment(idx)
}

#[test]
fn domain_sizes_match_declared_spaces() {
    let expected: [(u32, u128); 9] = [
        (0, 90_000),
        (1, 90_720),
        (2, 86_400),
        (3, 80_000),
        (4, 108_000),
        (5, 101_250),
        (6, 81_000),
        (7, 230_640),
        (8, 108_000),
    ];
    for (id, size) in expected {
        let t = template(id);
        assert_eq!(t.space().total_size(), size, "template {id}");
    }
    // Template 0: 10 names × 3 fish × 20 × 30 × 5, uniform pmf 1/90000.
    let t0 = template(0);
    let sizes: Vec<usize> = t0.space().dims().iter().map(|d| d.size()).collect();
    assert_eq!(sizes, vec![10, 3, 20, 30, 5]);
    let z = t0.space().index_to_assignment(12345).unwrap();
    assert_eq!(t0.space().uniform_pmf(&z).unwrap(), big_rat(1, 90_000));
    // Template 7 carries the 31-value fraction domains.
    let t7 = template(7);
    assert_eq!(t7.space().dims()[4].size(), 31);
    assert_eq!(t7.space().dims()[5].size(), 31);
}

#[test]
fn template_0_remora_percentage() {
    let t = template(0);
    // ratio 4 with k=11, y=29: fish length 4·11·29 = 1276 feet, remoras
    // 348 inches each; the answer is 100/4 = 25 regardless of k and y.
    let z = assignment(
        &t,
        &[
            ("k", Value::integer(11)),
            ("y", Value::integer(29)),
            ("ratio", Value::integer(4)),
        ],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(25, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("1276-foot"), "{prompt}");
    assert!(prompt.contains("11 remoras, each 348-inches long"), "{prompt}");

    let z = assignment(&t, &[("ratio", Value::integer(20))]);
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(5, 1));
}

#[test]
fn template_2_dice_percentage_points() {
    let t = template(2);
    // target 22, d 50: a 1100-sided die, P(>22) = 0.98, two-evens = 0.25,
    // difference 73 percentage points.
    let z = assignment(
        &t,
        &[("target", Value::integer(22)), ("d", Value::integer(50))],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(73, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("1100-sided die"), "{prompt}");
    assert!(prompt.contains("greater than 22"), "{prompt}");
    // target 152, d 20: a 3040-sided die, answer 70.
    let z = assignment(
        &t,
        &[("target", Value::integer(152)), ("d", Value::integer(20))],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(70, 1));
}

#[test]
fn template_5_sugar_ratio() {
    let t = template(5);
    // Katy's coffee at ratio 15:1 with k=46: total 736, answer 690.
    let z = assignment(
        &t,
        &[
            ("m", Value::integer(15)),
            ("n", Value::integer(1)),
            ("k", Value::integer(46)),
        ],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(690, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("ratio of 15:1"), "{prompt}");
    assert!(prompt.contains("total of 736 teaspoons"), "{prompt}");
}

#[test]
fn template_6_harvest_count() {
    let t = template(6);
    // 15 hectares × 47 per hectare × 6 harvests = 4230.
    let z = assignment(
        &t,
        &[
            ("x", Value::integer(15)),
            ("k", Value::integer(47)),
            ("n", Value::integer(2)),
        ],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(4230, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("every 2 months"), "{prompt}");
}

#[test]
fn template_7_fraction_of_balls() {
    let t = template(7);
    // 168 balls, 1/2 golf, 2/7 of those blue: 24.
    let z = assignment(
        &t,
        &[
            ("frac1", Value::rational(1, 2)),
            ("frac2", Value::rational(2, 7)),
            ("k", Value::integer(12)),
        ],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(24, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("juggle 168 balls"), "{prompt}");
    assert!(prompt.contains("2/7 of the golf balls are blue"), "{prompt}");
}

#[test]
fn template_8_leftover_eggs() {
    let t = template(8);
    // x=7, k=7, leftover=8: 57 eggs on 7 tables, 8 left over.
    let z = assignment(
        &t,
        &[
            ("obj", Value::Text("egg".into())),
            ("surface", Value::Text("table".into())),
            ("x", Value::integer(7)),
            ("k", Value::integer(7)),
            ("leftover", Value::integer(8)),
        ],
    );
    assert_eq!(t.ground_truth(&z).unwrap(), big_rat(8, 1));
    let prompt = t.render(&z).unwrap();
    assert!(prompt.contains("57 eggs and 7 tables"), "{prompt}");
}

#[test]
fn all_templates_instantiate_exhaustively() {
    // Every template's space is within the exhaustive budget; render and
    // evaluate every assignment and require total success.
    for id in 0..9u32 {
        let t = template(id);
        let space = t.space().clone();
        let total = space.total_size() as usize;
        let failures: usize = exec::map_indexed(total, |i| {
            let z = space.index_to_assignment(i as u128).unwrap();
            let gt = t.ground_truth(&z);
            let prompt = t.render(&z);
            usize::from(gt.is_err() || prompt.is_err())
        })
        .into_iter()
        .sum();
        assert_eq!(failures, 0, "template {id} had evaluation failures");
    }
}

#[test]
fn ground_truth_is_deterministic() {
    for id in 0..9u32 {
        let t = template(id);
        let space = t.space();
        for idx in [0u128, 17, 999] {
            let z = space.index_to_assignment(idx % space.total_size()).unwrap();
            assert_eq!(t.ground_truth(&z).unwrap(), t.ground_truth(&z).unwrap());
        }
    }
}
