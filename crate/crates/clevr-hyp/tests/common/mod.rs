//! Shared test support: a deliberately naive reference evaluator for
//! question programs (independent of the library's executor) and random
//! well-typed program/scene generators.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use clevr_hyp::program::{classify, lookup, Arg, Program, ProgramNode};
use clevr_hyp::scene::{
    AttrKind, AttrValue, Color, Material, Relation, Scene, Shape, Size, RELATION_EPSILON,
};

// ----------------------------------------------------------- reference

#[derive(Clone, Debug, PartialEq)]
pub enum RefValue {
    Set(Vec<usize>),
    Obj(usize),
    Int(i64),
    Bool(bool),
    Attr(AttrValue),
}

/// Planar position used for relations: stacked objects take their ground
/// object's coordinates, resolved by naive repeated lookup.
fn ground_pos(scene: &Scene, mut i: usize) -> (f64, f64) {
    for _ in 0..scene.objects.len() {
        match &scene.objects[i].on_base {
            Some(base) => {
                i = scene.objects.iter().position(|o| &o.id == base).expect("base exists")
            }
            None => break,
        }
    }
    (scene.objects[i].x, scene.objects[i].y)
}

fn ground_index(scene: &Scene, mut i: usize) -> usize {
    for _ in 0..scene.objects.len() {
        match &scene.objects[i].on_base {
            Some(base) => {
                i = scene.objects.iter().position(|o| &o.id == base).expect("base exists")
            }
            None => break,
        }
    }
    i
}

/// Does `b` stand in relation `r` to `a`? (E.g. r = left: is b left of a.)
fn related(scene: &Scene, a: usize, b: usize, r: Relation) -> bool {
    if a == b {
        return false;
    }
    match r {
        Relation::On => scene.objects[b].on_base.as_deref() == Some(scene.objects[a].id.as_str()),
        Relation::Below => {
            scene.objects[a].on_base.as_deref() == Some(scene.objects[b].id.as_str())
        }
        planar => {
            if ground_index(scene, a) == ground_index(scene, b) {
                return false;
            }
            let (ax, ay) = ground_pos(scene, a);
            let (bx, by) = ground_pos(scene, b);
            match planar {
                Relation::Left => bx < ax - RELATION_EPSILON,
                Relation::Right => bx > ax + RELATION_EPSILON,
                Relation::Front => by < ay - RELATION_EPSILON,
                Relation::Behind => by > ay + RELATION_EPSILON,
                _ => unreachable!(),
            }
        }
    }
}

fn node_value(arg: &Arg) -> &ProgramNode {
    match arg {
        Arg::Node(n) => n,
        other => panic!("expected a call argument, got {other:?}"),
    }
}

fn attr_value(arg: &Arg) -> AttrValue {
    match arg {
        Arg::Value(v) => *v,
        other => panic!("expected an attribute literal, got {other:?}"),
    }
}

fn rel_value(arg: &Arg) -> Relation {
    match arg {
        Arg::Rel(r) => *r,
        other => panic!("expected a relation literal, got {other:?}"),
    }
}

fn eval_node(node: &ProgramNode, scene: &Scene) -> Result<RefValue, String> {
    let name = node.func.name;
    let kind_of = |suffix: &str| AttrKind::parse(suffix).expect("kind suffix");
    match name {
        "scene" => Ok(RefValue::Set((0..scene.objects.len()).collect())),
        _ if name.starts_with("filter_") => {
            let kind = kind_of(&name[7..]);
            let v = attr_value(&node.args[0]);
            let RefValue::Set(set) = eval_node(node_value(&node.args[1]), scene)? else {
                panic!("filter over non-set")
            };
            Ok(RefValue::Set(
                set.into_iter().filter(|&i| scene.objects[i].attr(kind) == v).collect(),
            ))
        }
        "relate" => {
            let RefValue::Obj(a) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("relate over non-object")
            };
            let r = rel_value(&node.args[1]);
            Ok(RefValue::Set(
                (0..scene.objects.len()).filter(|&b| related(scene, a, b, r)).collect(),
            ))
        }
        "unique" => {
            let RefValue::Set(set) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("unique over non-set")
            };
            if set.len() == 1 {
                Ok(RefValue::Obj(set[0]))
            } else {
                Err(format!("unique over {} objects", set.len()))
            }
        }
        "count" => {
            let RefValue::Set(set) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("count over non-set")
            };
            Ok(RefValue::Int(set.len() as i64))
        }
        "exist" => {
            let RefValue::Set(set) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("exist over non-set")
            };
            Ok(RefValue::Bool(!set.is_empty()))
        }
        "and" | "or" => {
            let RefValue::Set(a) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("logic over non-set")
            };
            let RefValue::Set(b) = eval_node(node_value(&node.args[1]), scene)? else {
                panic!("logic over non-set")
            };
            let merged: Vec<usize> = if name == "and" {
                a.into_iter().filter(|i| b.contains(i)).collect()
            } else {
                let mut out = a;
                for i in b {
                    if !out.contains(&i) {
                        out.push(i);
                    }
                }
                out.sort_unstable();
                out
            };
            Ok(RefValue::Set(merged))
        }
        _ if name.starts_with("not_") => {
            let kind = kind_of(&name[4..]);
            let RefValue::Set(set) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("not over non-set")
            };
            let v = attr_value(&node.args[1]);
            Ok(RefValue::Set(
                set.into_iter().filter(|&i| scene.objects[i].attr(kind) != v).collect(),
            ))
        }
        _ if name.starts_with("same_") => {
            let kind = kind_of(&name[5..]);
            let RefValue::Obj(o) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("same over non-object")
            };
            let v = scene.objects[o].attr(kind);
            Ok(RefValue::Set(
                (0..scene.objects.len())
                    .filter(|&i| i != o && scene.objects[i].attr(kind) == v)
                    .collect(),
            ))
        }
        _ if name.starts_with("query_") => {
            let kind = kind_of(&name[6..]);
            let RefValue::Obj(o) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("query over non-object")
            };
            Ok(RefValue::Attr(scene.objects[o].attr(kind)))
        }
        _ if name.starts_with("equal_") && name != "equal_integer" => {
            let a = eval_node(node_value(&node.args[0]), scene)?;
            let b = eval_node(node_value(&node.args[1]), scene)?;
            Ok(RefValue::Bool(a == b))
        }
        "equal_integer" | "greater_than" | "less_than" => {
            let RefValue::Int(a) = eval_node(node_value(&node.args[0]), scene)? else {
                panic!("comparison over non-integer")
            };
            let RefValue::Int(b) = eval_node(node_value(&node.args[1]), scene)? else {
                panic!("comparison over non-integer")
            };
            Ok(RefValue::Bool(match name {
                "equal_integer" => a == b,
                "greater_than" => a > b,
                _ => a < b,
            }))
        }
        other => panic!("reference evaluator does not know {other}"),
    }
}

/// Evaluates a question program the slow, obvious way; returns the answer
/// label, or an error description for ill-posed/overflowing questions.
pub fn reference_answer(p: &Program, scene: &Scene) -> Result<String, String> {
    match eval_node(&p.root, scene)? {
        RefValue::Int(i) if i > 9 => Err(format!("integer answer {i} out of range")),
        RefValue::Int(i) => Ok(i.to_string()),
        RefValue::Bool(b) => Ok(if b { "yes" } else { "no" }.to_string()),
        RefValue::Attr(v) => Ok(v.label().to_string()),
        other => panic!("non-answer root value {other:?}"),
    }
}

// -------------------------------------------------- random generators

fn call(name: &str, args: Vec<Arg>) -> ProgramNode {
    ProgramNode { func: lookup(name).unwrap_or_else(|| panic!("unknown fn {name}")), args }
}

fn rand_kind(rng: &mut ChaCha8Rng) -> AttrKind {
    *AttrKind::ALL.choose(rng).unwrap()
}

fn rand_value(rng: &mut ChaCha8Rng) -> AttrValue {
    let kind = rand_kind(rng);
    *kind.values().choose(rng).unwrap()
}

fn rand_rel(rng: &mut ChaCha8Rng) -> Relation {
    *Relation::ALL.choose(rng).unwrap()
}

fn gen_objset(rng: &mut ChaCha8Rng, depth: u32) -> ProgramNode {
    gen_objset_in(rng, depth, true)
}

fn gen_objset_in(rng: &mut ChaCha8Rng, depth: u32, allow_not: bool) -> ProgramNode {
    if depth == 0 {
        return call("scene", vec![]);
    }
    // not_* is question-dialect only; action referents must avoid it
    match rng.gen_range(0..if allow_not { 10 } else { 9 }) {
        0..=3 => {
            let v = rand_value(rng);
            call(
                &format!("filter_{}", v.kind().label()),
                vec![Arg::Value(v), Arg::Node(gen_objset_in(rng, depth - 1, allow_not))],
            )
        }
        4..=5 => call(
            "relate",
            vec![Arg::Node(gen_object_in(rng, depth - 1, allow_not)), Arg::Rel(rand_rel(rng))],
        ),
        6 => call(
            "and",
            vec![
                Arg::Node(gen_objset_in(rng, depth - 1, allow_not)),
                Arg::Node(gen_objset_in(rng, depth - 1, allow_not)),
            ],
        ),
        7 => call(
            "or",
            vec![
                Arg::Node(gen_objset_in(rng, depth - 1, allow_not)),
                Arg::Node(gen_objset_in(rng, depth - 1, allow_not)),
            ],
        ),
        8 => {
            let kind = rand_kind(rng);
            call(
                &format!("same_{}", kind.label()),
                vec![Arg::Node(gen_object_in(rng, depth - 1, allow_not))],
            )
        }
        _ => {
            let v = rand_value(rng);
            call(
                &format!("not_{}", v.kind().label()),
                vec![Arg::Node(gen_objset(rng, depth - 1)), Arg::Value(v)],
            )
        }
    }
}

fn gen_object(rng: &mut ChaCha8Rng, depth: u32) -> ProgramNode {
    gen_object_in(rng, depth, true)
}

fn gen_object_in(rng: &mut ChaCha8Rng, depth: u32, allow_not: bool) -> ProgramNode {
    call("unique", vec![Arg::Node(gen_objset_in(rng, depth, allow_not))])
}

fn gen_integer(rng: &mut ChaCha8Rng, depth: u32) -> ProgramNode {
    call("count", vec![Arg::Node(gen_objset(rng, depth))])
}

fn gen_boolean(rng: &mut ChaCha8Rng, depth: u32) -> ProgramNode {
    match rng.gen_range(0..4) {
        0 => call("exist", vec![Arg::Node(gen_objset(rng, depth))]),
        1 => {
            let kind = rand_kind(rng);
            let q = |rng: &mut ChaCha8Rng| {
                call(
                    &format!("query_{}", kind.label()),
                    vec![Arg::Node(gen_object(rng, depth.saturating_sub(1)))],
                )
            };
            let a = q(rng);
            let b = q(rng);
            call(&format!("equal_{}", kind.label()), vec![Arg::Node(a), Arg::Node(b)])
        }
        _ => {
            let cmp = ["equal_integer", "greater_than", "less_than"].choose(rng).unwrap();
            call(
                cmp,
                vec![Arg::Node(gen_integer(rng, depth)), Arg::Node(gen_integer(rng, depth))],
            )
        }
    }
}

fn gen_attr_query(rng: &mut ChaCha8Rng, depth: u32) -> ProgramNode {
    let kind = rand_kind(rng);
    call(&format!("query_{}", kind.label()), vec![Arg::Node(gen_object(rng, depth))])
}

/// A random well-typed question program with bounded nesting depth.
pub fn random_question(rng: &mut ChaCha8Rng, max_depth: u32) -> Program {
    let depth = rng.gen_range(1..=max_depth);
    let root = match rng.gen_range(0..3) {
        0 => gen_integer(rng, depth),
        1 => gen_boolean(rng, depth),
        _ => gen_attr_query(rng, depth),
    };
    classify(root).expect("generated question classifies")
}

fn gen_make_object(rng: &mut ChaCha8Rng) -> ProgramNode {
    call(
        "make_object",
        vec![
            Arg::Value(AttrValue::Size(*Size::ALL.choose(rng).unwrap())),
            Arg::Value(AttrValue::Color(*Color::ALL.choose(rng).unwrap())),
            Arg::Value(AttrValue::Material(*Material::ALL.choose(rng).unwrap())),
            Arg::Value(AttrValue::Shape(*Shape::ALL.choose(rng).unwrap())),
        ],
    )
}

/// A random well-typed action program.
pub fn random_action(rng: &mut ChaCha8Rng, max_depth: u32) -> Program {
    let depth = rng.gen_range(1..=max_depth);
    let root = match rng.gen_range(0..5) {
        0 => call(
            "add_rel",
            vec![
                Arg::Node(call("scene", vec![])),
                Arg::Node(gen_make_object(rng)),
                Arg::Node(gen_object_in(rng, depth, false)),
                Arg::Rel(rand_rel(rng)),
            ],
        ),
        1 => call("remove", vec![Arg::Node(gen_objset_in(rng, depth, false))]),
        2 => {
            let v = rand_value(rng);
            call(
                &format!("change_{}", v.kind().label()),
                vec![Arg::Node(gen_objset_in(rng, depth, false)), Arg::Value(v)],
            )
        }
        3 => call(
            "change_loc",
            vec![
                Arg::Node(call("scene", vec![])),
                Arg::Node(gen_object_in(rng, depth, false)),
                Arg::Node(gen_object_in(rng, depth, false)),
                Arg::Rel(rand_rel(rng)),
            ],
        ),
        _ => call(
            "remove_rel",
            vec![
                Arg::Node(call("scene", vec![])),
                Arg::Node(gen_object_in(rng, depth, false)),
                Arg::Node(gen_object_in(rng, depth, false)),
                Arg::Rel(rand_rel(rng)),
            ],
        ),
    };
    classify(root).expect("generated action classifies")
}

/// A random valid scene for feeding the evaluators.
pub fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    clevr_hyp::generator::sample_scene(rng, clevr_hyp::generator::SplitKind::Original)
}
