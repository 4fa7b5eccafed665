//! Dataset generation: scene sampling, action/question candidate
//! generation, the validity filter, split assembly, and answer balancing.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::executor::{execute_action, execute_action_sequence, execute_question, Answer, ExecError, ANSWER_LABELS};
use crate::nlg::{instantiate, Binding, Bindings, Family, SetDesc, Template};
use crate::program::{lookup, serialize_program, Arg, Dialect, Program, ProgramNode};
use crate::scene::{
    AttrKind, AttrValue, Color, Material, ObjectRecord, Relation, Scene, Shape, Size,
    MAX_OBJECTS, MIN_GENERATED_OBJECTS, MIN_SEPARATION, PLANE_BOUND,
};

/// Which dataset variant to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Original,
    Balanced,
    TwoHopTa,
    TwoHopQh,
}

impl SplitKind {
    pub const ALL: &'static [SplitKind] =
        &[SplitKind::Original, SplitKind::Balanced, SplitKind::TwoHopTa, SplitKind::TwoHopQh];

    pub fn label(self) -> &'static str {
        match self {
            SplitKind::Original => "original",
            SplitKind::Balanced => "balanced",
            SplitKind::TwoHopTa => "2hop-ta",
            SplitKind::TwoHopQh => "2hop-qh",
        }
    }

    pub fn parse(s: &str) -> Option<SplitKind> {
        SplitKind::ALL.iter().copied().find(|k| k.label() == s)
    }
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    pub n_images: u64,
    pub split: SplitKind,
}

/// One (scene, action text, question) pair with its gold answer.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image_id: u64,
    pub pair_index: u32,
    pub scene: Scene,
    pub action_text: String,
    pub question_text: String,
    /// Serialized action programs, one per hop.
    pub action_programs: Vec<String>,
    pub question_program: String,
    pub answer: Answer,
    pub action_type: String,
    pub question_type: String,
    pub split: String,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("image {image}: no valid sample set found within the retry budget")]
    Exhausted { image: u64 },
    #[error("balancing infeasible: no samples with answer(s) {missing:?}")]
    BalanceInfeasible { missing: Vec<String> },
}

/// Why a candidate pair was rejected by the validity filter.
#[derive(Debug)]
pub enum Reject {
    Question(ExecError),
    Degenerate,
    Bias,
}

const SCENE_TRIES: u32 = 20;
const ACTION_TRIES: u32 = 25;
const QUESTION_TRIES: u32 = 200;

// ---------------------------------------------------------------- scenes

fn random_object(rng: &mut impl Rng, id: usize) -> ObjectRecord {
    ObjectRecord {
        id: format!("obj_{id}"),
        size: *choose(rng, Size::ALL),
        color: *choose(rng, Color::ALL),
        material: *choose(rng, Material::ALL),
        shape: *choose(rng, Shape::ALL),
        x: 0.0,
        y: 0.0,
        on_base: None,
    }
}

fn choose<'a, T>(rng: &mut impl Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty slice")
}

fn quad(o: &ObjectRecord) -> (Size, Color, Material, Shape) {
    (o.size, o.color, o.material, o.shape)
}

/// Samples a scene with uniform object count, all-distinct attribute tuples
/// (so every object admits a referring expression), minimum stack-base
/// separation, and at most one stacked pair.
pub fn sample_scene(rng: &mut ChaCha8Rng, split: SplitKind) -> Scene {
    'attempt: loop {
        let n = match split {
            // larger scenes keep targeted counting answers reachable
            SplitKind::Balanced => rng.gen_range(5..=MAX_OBJECTS),
            _ => rng.gen_range(MIN_GENERATED_OBJECTS..=MAX_OBJECTS),
        };
        let mut objects: Vec<ObjectRecord> = (0..n).map(|i| random_object(rng, i)).collect();
        let mut seen = BTreeSet::new();
        if !objects.iter().all(|o| seen.insert(quad(o))) {
            continue 'attempt;
        }
        let stack = n >= 2 && rng.gen_bool(0.3);
        let n_bases = if stack { n - 1 } else { n };
        for i in 0..n_bases {
            let mut placed = false;
            for _ in 0..100 {
                let x = rng.gen_range(-PLANE_BOUND..=PLANE_BOUND);
                let y = rng.gen_range(-PLANE_BOUND..=PLANE_BOUND);
                let ok = objects[..i].iter().all(|o| {
                    let (dx, dy) = (o.x - x, o.y - y);
                    (dx * dx + dy * dy).sqrt() >= MIN_SEPARATION
                });
                if ok {
                    objects[i].x = x;
                    objects[i].y = y;
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'attempt;
            }
        }
        if stack {
            let base = rng.gen_range(0..n_bases);
            let (bx, by, bid) = (objects[base].x, objects[base].y, objects[base].id.clone());
            let top = &mut objects[n - 1];
            top.x = bx;
            top.y = by;
            top.on_base = Some(bid);
        }
        return Scene { seed: rng.gen(), objects };
    }
}

// --------------------------------------------------------------- helpers

fn templates_for(family: Family) -> Vec<&'static Template> {
    crate::nlg::default_templates().iter().filter(|t| t.family == family).collect()
}

fn find_template(family: Family, program: &str) -> &'static Template {
    crate::nlg::default_templates()
        .iter()
        .find(|t| t.family == family && t.program == program)
        .expect("template present in the embedded inventory")
}

fn random_value(rng: &mut impl Rng, kind: AttrKind) -> AttrValue {
    *choose(rng, &kind.values())
}

fn match_count(scene: &Scene, desc: &SetDesc) -> usize {
    scene.objects.iter().filter(|o| desc.matches(o)).count()
}

/// A set description anchored on a random object so it is never empty.
fn anchored_desc(
    scene: &Scene,
    rng: &mut impl Rng,
    n_kinds: std::ops::RangeInclusive<usize>,
    avoid: Option<AttrKind>,
) -> Option<SetDesc> {
    let o = scene.objects.choose(rng)?;
    let mut kinds: Vec<AttrKind> =
        AttrKind::ALL.iter().copied().filter(|k| Some(*k) != avoid).collect();
    kinds.shuffle(rng);
    let take = rng.gen_range(n_kinds);
    Some(SetDesc::new(kinds.into_iter().take(take).map(|k| o.attr(k)).collect()))
}

fn obj_binding(scene: &Scene, rng: &mut impl Rng) -> Binding {
    let o = choose(rng, &scene.objects);
    Binding::Object { id: o.id.clone(), exclude: None }
}

fn two_distinct<'a>(scene: &'a Scene, rng: &mut impl Rng) -> Option<(&'a ObjectRecord, &'a ObjectRecord)> {
    if scene.objects.len() < 2 {
        return None;
    }
    let mut picks = scene.objects.choose_multiple(rng, 2);
    Some((picks.next().unwrap(), picks.next().unwrap()))
}

const ADD_RELATIONS: &[Relation] =
    &[Relation::Left, Relation::Right, Relation::Front, Relation::Behind, Relation::On];

// --------------------------------------------------------------- actions

/// Builds one instantiated action candidate for a family; the caller
/// executes it and retries on failure.
fn gen_action(
    scene: &Scene,
    family: Family,
    rng: &mut ChaCha8Rng,
) -> Option<(String, Program)> {
    let template = *choose(rng, &templates_for(family));
    let mut bindings = Bindings::new();
    match family {
        Family::Add => {
            bindings.insert(
                "NEW".into(),
                Binding::New {
                    size: *choose(rng, Size::ALL),
                    color: *choose(rng, Color::ALL),
                    material: *choose(rng, Material::ALL),
                    shape: *choose(rng, Shape::ALL),
                },
            );
            bindings.insert("REF".into(), obj_binding(scene, rng));
            bindings.insert("R".into(), Binding::Rel(*choose(rng, ADD_RELATIONS)));
        }
        Family::Remove => {
            if template.program.contains("<SET>") {
                let desc = anchored_desc(scene, rng, 1..=2, None)?;
                let m = match_count(scene, &desc);
                if m == 0 || m >= scene.objects.len() {
                    return None;
                }
                bindings.insert("SET".into(), Binding::Set(desc));
            } else {
                bindings.insert("REF".into(), obj_binding(scene, rng));
            }
        }
        Family::Change => {
            let kind = template.v_kind.unwrap_or_else(|| *choose(rng, AttrKind::ALL));
            let v = random_value(rng, kind);
            let desc = anchored_desc(scene, rng, 1..=2, Some(kind))?;
            // the change must not be a no-op
            if !scene.objects.iter().any(|o| desc.matches(o) && o.attr(kind) != v) {
                return None;
            }
            bindings.insert("A".into(), Binding::Attr(kind));
            bindings.insert("V".into(), Binding::Value(v));
            bindings.insert("SET".into(), Binding::Set(desc));
        }
        Family::MoveInPlane | Family::MoveOn => {
            let (a, b) = two_distinct(scene, rng)?;
            bindings.insert("REF".into(), Binding::Object { id: a.id.clone(), exclude: None });
            bindings.insert("REF2".into(), Binding::Object { id: b.id.clone(), exclude: None });
            if family == Family::MoveInPlane {
                bindings.insert("R".into(), Binding::Rel(*choose(rng, Relation::PLANAR)));
            }
        }
        _ => unreachable!("not an action family"),
    }
    instantiate(template, scene, &bindings, rng).ok()
}

// ------------------------------------------------------------- questions

/// Builds one instantiated question candidate against the post-action
/// scene, where its referents must resolve.
fn gen_question(post: &Scene, family: Family, rng: &mut ChaCha8Rng) -> Option<(String, Program)> {
    let template = *choose(rng, &templates_for(family));
    let mut bindings = Bindings::new();
    match family {
        Family::Count | Family::Exist => {
            let min = if family == Family::Exist && !template.program.contains("<SETREL>") { 1 } else { 0 };
            let desc = anchored_desc(post, rng, min..=2, None)?;
            bindings.insert("SET".into(), Binding::Set(desc));
            if template.program.contains("<SETREL>") {
                bindings.insert("REF".into(), obj_binding(post, rng));
                bindings.insert("R".into(), Binding::Rel(*choose(rng, Relation::PLANAR)));
            }
        }
        Family::CompareInteger => {
            if template.program.contains("<SETREL>") {
                bindings.insert("SET".into(), Binding::Set(anchored_desc(post, rng, 0..=1, None)?));
                bindings.insert("REF".into(), obj_binding(post, rng));
                bindings.insert("R".into(), Binding::Rel(*choose(rng, Relation::PLANAR)));
                bindings.insert("SET2".into(), Binding::Set(anchored_desc(post, rng, 1..=2, None)?));
            } else {
                let a = anchored_desc(post, rng, 1..=2, None)?;
                let b = anchored_desc(post, rng, 1..=2, None)?;
                if a == b {
                    return None;
                }
                bindings.insert("SET".into(), Binding::Set(a));
                bindings.insert("SET2".into(), Binding::Set(b));
            }
        }
        Family::QueryAttr => {
            let kind = *choose(rng, AttrKind::ALL);
            bindings.insert("A".into(), Binding::Attr(kind));
            if template.program.contains("<SETREL>") {
                let desc = anchored_desc(post, rng, 0..=1, Some(kind))?;
                bindings.insert("SET".into(), Binding::Set(desc));
                bindings.insert("REF".into(), obj_binding(post, rng));
                bindings.insert("R".into(), Binding::Rel(*choose(rng, Relation::PLANAR)));
            } else {
                let o = choose(rng, &post.objects);
                bindings
                    .insert("REF".into(), Binding::Object { id: o.id.clone(), exclude: Some(kind) });
            }
        }
        Family::CompareAttr => {
            let kind = *choose(rng, AttrKind::ALL);
            bindings.insert("A".into(), Binding::Attr(kind));
            if template.program.contains("same_") {
                let o = choose(rng, &post.objects);
                bindings
                    .insert("REF".into(), Binding::Object { id: o.id.clone(), exclude: Some(kind) });
            } else if template.program.contains("<SETREL>") {
                let (anchor, other) = two_distinct(post, rng)?;
                bindings.insert("SET".into(), Binding::Set(anchored_desc(post, rng, 0..=1, Some(kind))?));
                bindings.insert("REF".into(), Binding::Object { id: anchor.id.clone(), exclude: None });
                bindings.insert("R".into(), Binding::Rel(*choose(rng, Relation::PLANAR)));
                bindings.insert("REF2".into(), Binding::Object { id: other.id.clone(), exclude: Some(kind) });
            } else {
                let (a, b) = two_distinct(post, rng)?;
                bindings
                    .insert("REF".into(), Binding::Object { id: a.id.clone(), exclude: Some(kind) });
                bindings
                    .insert("REF2".into(), Binding::Object { id: b.id.clone(), exclude: Some(kind) });
            }
        }
        Family::And | Family::Or => {
            let mut kinds = AttrKind::ALL.to_vec();
            kinds.shuffle(rng);
            bindings.insert("V1".into(), Binding::Value(random_value(rng, kinds[0])));
            bindings.insert("V2".into(), Binding::Value(random_value(rng, kinds[1])));
        }
        Family::Not => {
            let desc = anchored_desc(post, rng, 0..=1, None)?;
            let used: Vec<AttrKind> = desc.values().iter().map(|v| v.kind()).collect();
            let free: Vec<AttrKind> =
                AttrKind::ALL.iter().copied().filter(|k| !used.contains(k)).collect();
            let kind = *choose(rng, &free);
            bindings.insert("SET".into(), Binding::Set(desc));
            bindings.insert("V".into(), Binding::Value(random_value(rng, kind)));
        }
        _ => unreachable!("not a question family"),
    }
    instantiate(template, post, &bindings, rng).ok()
}

// -------------------------------------------------------- validity filter

fn scene_node() -> ProgramNode {
    ProgramNode { func: lookup("scene").unwrap(), args: vec![] }
}

/// Rebuilds a filter chain with its `relate` base replaced by the whole
/// scene; `None` when the chain is not relate-based.
fn strip_relate(chain: &ProgramNode) -> Option<ProgramNode> {
    if chain.func.name == "relate" {
        return Some(scene_node());
    }
    if chain.func.name.starts_with("filter_") {
        if let Some(Arg::Node(inner)) = chain.args.get(1) {
            let stripped = strip_relate(inner)?;
            let mut args = chain.args.clone();
            args[1] = Arg::Node(stripped);
            return Some(ProgramNode { func: chain.func, args });
        }
    }
    None
}

fn set_size(node: ProgramNode, scene: &Scene) -> Option<usize> {
    let counted = ProgramNode { func: lookup("count").unwrap(), args: vec![Arg::Node(node)] };
    match execute_question(&Program { root: counted, dialect: Dialect::Question }, scene) {
        Ok(Answer::Count(k)) => Some(k as usize),
        _ => None,
    }
}

/// A question is degenerate when a `unique` referent built on `relate`
/// would still resolve uniquely with the relation dropped: the spatial
/// anchor adds no information.
pub fn is_degenerate(question: &Program, post: &Scene) -> bool {
    let mut degenerate = false;
    question.root.visit(&mut |n| {
        if degenerate || n.func.name != "unique" {
            return;
        }
        if let Some(Arg::Node(chain)) = n.args.first() {
            if let Some(stripped) = strip_relate(chain) {
                if set_size(stripped, post) == Some(1) {
                    degenerate = true;
                }
            }
        }
    });
    degenerate
}

/// Applies the full validity filter to an executed pair: the question must
/// answer cleanly on the post-action scene, must not be degenerate, and its
/// answer must actually depend on the action (pre-action evaluation either
/// errors or yields a different answer).
pub fn validate_pair(pre: &Scene, post: &Scene, question: &Program) -> Result<Answer, Reject> {
    let answer = execute_question(question, post).map_err(Reject::Question)?;
    if is_degenerate(question, post) {
        return Err(Reject::Degenerate);
    }
    if let Ok(before) = execute_question(question, pre) {
        if before == answer {
            return Err(Reject::Bias);
        }
    }
    Ok(answer)
}

// ------------------------------------------------------------- assembly

struct PairDraft {
    action_text: String,
    action_programs: Vec<String>,
    question_text: String,
    question_program: String,
    answer: Answer,
    action_type: String,
    question_type: String,
}

fn question_block(
    pre: &Scene,
    post: &Scene,
    families: &[Family],
    rng: &mut ChaCha8Rng,
    seen: &mut BTreeSet<String>,
) -> Option<Vec<(String, String, Answer, String)>> {
    let mut out = Vec::with_capacity(families.len());
    for qf in families {
        let mut found = false;
        for _ in 0..QUESTION_TRIES {
            let Some((text, program)) = gen_question(post, *qf, rng) else { continue };
            if seen.contains(&text) {
                continue;
            }
            if let Ok(answer) = validate_pair(pre, post, &program) {
                seen.insert(text.clone());
                out.push((text, serialize_program(&program), answer, qf.label().to_string()));
                found = true;
                break;
            }
        }
        if !found {
            return None;
        }
    }
    Some(out)
}

fn one_hop_block(
    scene: &Scene,
    family: Family,
    question_families: &[Family],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<PairDraft>> {
    for _ in 0..ACTION_TRIES {
        let Some((atext, aprog)) = gen_action(scene, family, rng) else { continue };
        let Ok(post) = execute_action(&aprog, scene) else { continue };
        let mut seen = BTreeSet::new();
        let Some(questions) = question_block(scene, &post, question_families, rng, &mut seen)
        else {
            continue;
        };
        let serialized = serialize_program(&aprog);
        return Some(
            questions
                .into_iter()
                .map(|(qtext, qprog, answer, qtype)| PairDraft {
                    action_text: atext.clone(),
                    action_programs: vec![serialized.clone()],
                    question_text: qtext,
                    question_program: qprog,
                    answer,
                    action_type: family.label().to_string(),
                    question_type: qtype,
                })
                .collect(),
        );
    }
    None
}

fn pick_coarse(label: &str, rng: &mut ChaCha8Rng) -> Family {
    if label == "move" {
        *choose(rng, &[Family::MoveInPlane, Family::MoveOn])
    } else {
        Family::parse(label).expect("coarse label names a family")
    }
}

fn two_hop_block(
    scene: &Scene,
    combo: (&str, &str),
    question_families: &[Family],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<PairDraft>> {
    for _ in 0..ACTION_TRIES {
        let f1 = pick_coarse(combo.0, rng);
        let f2 = pick_coarse(combo.1, rng);
        let Some((t1, p1)) = gen_action(scene, f1, rng) else { continue };
        let Ok(mid) = execute_action(&p1, scene) else { continue };
        // the second action refers to the intermediate state
        let Some((t2, p2)) = gen_action(&mid, f2, rng) else { continue };
        let programs = [p1.clone(), p2];
        let Ok(post) = execute_action_sequence(&programs, scene) else { continue };
        let mut seen = BTreeSet::new();
        let Some(questions) = question_block(scene, &post, question_families, rng, &mut seen)
        else {
            continue;
        };
        let action_text = format!("{t1} {t2}");
        let serialized: Vec<String> = programs.iter().map(serialize_program).collect();
        let action_type = format!("{}+{}", combo.0, combo.1);
        return Some(
            questions
                .into_iter()
                .map(|(qtext, qprog, answer, qtype)| PairDraft {
                    action_text: action_text.clone(),
                    action_programs: serialized.clone(),
                    question_text: qtext,
                    question_program: qprog,
                    answer,
                    action_type: action_type.clone(),
                    question_type: qtype,
                })
                .collect(),
        );
    }
    None
}

// ---------------------------------------------------- targeted (balanced)

/// A change action plus an attribute query guaranteed (modulo retries) to
/// answer `v`; used to fill rare attribute answers in the balanced split.
fn targeted_attr(scene: &Scene, v: AttrValue, rng: &mut ChaCha8Rng) -> Option<PairDraft> {
    let kind = v.kind();
    for _ in 0..40 {
        let Some(o) = scene.objects.iter().filter(|o| o.attr(kind) != v).collect::<Vec<_>>().choose(rng).copied()
        else {
            return None;
        };
        let desc = SetDesc::new(
            AttrKind::ALL.iter().filter(|k| **k != kind).map(|&k| o.attr(k)).collect(),
        );
        let action_templates: Vec<&Template> = templates_for(Family::Change)
            .into_iter()
            .filter(|t| t.v_kind.is_none())
            .collect();
        let mut ab = Bindings::new();
        ab.insert("A".into(), Binding::Attr(kind));
        ab.insert("V".into(), Binding::Value(v));
        ab.insert("SET".into(), Binding::Set(desc));
        let Ok((atext, aprog)) = instantiate(*choose(rng, &action_templates), scene, &ab, rng)
        else {
            continue;
        };
        let Ok(post) = execute_action(&aprog, scene) else { continue };
        let qtemplate = find_template(Family::QueryAttr, "query_<A>(unique(<REF>))");
        let mut qb = Bindings::new();
        qb.insert("A".into(), Binding::Attr(kind));
        qb.insert("REF".into(), Binding::Object { id: o.id.clone(), exclude: None });
        let Ok((qtext, qprog)) = instantiate(qtemplate, &post, &qb, rng) else { continue };
        let Ok(answer) = validate_pair(scene, &post, &qprog) else { continue };
        if answer != Answer::Attr(v) {
            continue;
        }
        return Some(PairDraft {
            action_text: atext,
            action_programs: vec![serialize_program(&aprog)],
            question_text: qtext,
            question_program: serialize_program(&qprog),
            answer,
            action_type: Family::Change.label().to_string(),
            question_type: Family::QueryAttr.label().to_string(),
        });
    }
    None
}

/// A remove (or add) action followed by a whole-scene count with answer `k`.
fn targeted_count(scene: &Scene, k: usize, rng: &mut ChaCha8Rng) -> Option<PairDraft> {
    let n = scene.objects.len();
    for _ in 0..120 {
        let (atext, aprog, action_type) = if k == n + 1 {
            let Some((t, p)) = gen_action(scene, Family::Add, rng) else { continue };
            (t, p, Family::Add)
        } else if k < n {
            let desc = if k == 0 {
                SetDesc::new(vec![])
            } else {
                match anchored_desc(scene, rng, 1..=2, None) {
                    Some(d) => d,
                    None => continue,
                }
            };
            if match_count(scene, &desc) != n - k {
                continue;
            }
            let template = find_template(Family::Remove, "remove(<SET>)");
            let mut ab = Bindings::new();
            ab.insert("SET".into(), Binding::Set(desc));
            let Ok((t, p)) = instantiate(template, scene, &ab, rng) else { continue };
            (t, p, Family::Remove)
        } else {
            return None;
        };
        let Ok(post) = execute_action(&aprog, scene) else { continue };
        let template = find_template(Family::Count, "count(<SET>)");
        let mut qb = Bindings::new();
        qb.insert("SET".into(), Binding::Set(SetDesc::new(vec![])));
        let Ok((qtext, qprog)) = instantiate(template, &post, &qb, rng) else { continue };
        let Ok(answer) = validate_pair(scene, &post, &qprog) else { continue };
        if answer != Answer::Count(k as u8) {
            continue;
        }
        return Some(PairDraft {
            action_text: atext,
            action_programs: vec![serialize_program(&aprog)],
            question_text: qtext,
            question_program: serialize_program(&qprog),
            answer,
            action_type: action_type.label().to_string(),
            question_type: Family::Count.label().to_string(),
        });
    }
    None
}

// --------------------------------------------------------------- driver

fn image_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1));
    rng
}

const TWO_HOP_COMBOS: &[(&str, &str)] = &[
    ("add", "remove"),
    ("add", "change"),
    ("add", "move"),
    ("remove", "change"),
    ("remove", "move"),
    ("change", "move"),
];

fn build_image(cfg: &GenConfig, index: u64, scene: &Scene, rng: &mut ChaCha8Rng) -> Option<Vec<PairDraft>> {
    let mut drafts = Vec::new();
    match cfg.split {
        SplitKind::Original | SplitKind::Balanced => {
            for af in Family::ACTIONS {
                drafts.extend(one_hop_block(scene, *af, Family::QUESTIONS, rng)?);
            }
            if cfg.split == SplitKind::Balanced {
                for kind in AttrKind::ALL {
                    for v in kind.values() {
                        if let Some(d) = targeted_attr(scene, v, rng) {
                            drafts.push(d);
                        }
                    }
                }
                let n = scene.objects.len();
                for k in (0..n).chain((n + 1 <= 9).then_some(n + 1)) {
                    if let Some(d) = targeted_count(scene, k, rng) {
                        drafts.push(d);
                    }
                }
            }
        }
        SplitKind::TwoHopTa => {
            let mut combos = TWO_HOP_COMBOS.to_vec();
            combos.shuffle(rng);
            for combo in combos.into_iter().take(3) {
                drafts.extend(two_hop_block(scene, combo, Family::QUESTIONS, rng)?);
            }
        }
        SplitKind::TwoHopQh => {
            // logic questions read only attributes, so pure moves can never
            // flip their answers; stick to attribute-changing actions
            let mut families = vec![Family::Add, Family::Remove, Family::Change];
            families.shuffle(rng);
            let logic = [Family::And, Family::Or, Family::Not, Family::And, Family::Or];
            for af in families.into_iter().take(3) {
                drafts.extend(one_hop_block(scene, af, &logic, rng)?);
            }
        }
    }
    let _ = index;
    Some(drafts)
}

/// Generates every sample for one image; deterministic in (seed, index).
pub fn generate_image(cfg: &GenConfig, index: u64) -> Result<Vec<Sample>, GenError> {
    let mut rng = image_rng(cfg.seed, index);
    for _ in 0..SCENE_TRIES {
        let scene = sample_scene(&mut rng, cfg.split);
        if let Some(drafts) = build_image(cfg, index, &scene, &mut rng) {
            return Ok(drafts
                .into_iter()
                .enumerate()
                .map(|(i, d)| Sample {
                    image_id: index,
                    pair_index: i as u32,
                    scene: scene.clone(),
                    action_text: d.action_text,
                    question_text: d.question_text,
                    action_programs: d.action_programs,
                    question_program: d.question_program,
                    answer: d.answer,
                    action_type: d.action_type,
                    question_type: d.question_type,
                    split: cfg.split.label().to_string(),
                })
                .collect());
        }
    }
    Err(GenError::Exhausted { image: index })
}

/// Sequential generation; always available.
pub fn generate_split_sequential(cfg: &GenConfig) -> Result<Vec<Sample>, GenError> {
    let mut out = Vec::new();
    for i in 0..cfg.n_images {
        out.extend(generate_image(cfg, i)?);
    }
    Ok(out)
}

/// Generates the split, fanning images out across threads when the
/// `parallel` feature is enabled. Output order and content are identical
/// to the sequential path.
#[cfg(feature = "parallel")]
pub fn generate_split(cfg: &GenConfig) -> Result<Vec<Sample>, GenError> {
    use rayon::prelude::*;
    let per_image: Result<Vec<Vec<Sample>>, GenError> =
        (0..cfg.n_images).into_par_iter().map(|i| generate_image(cfg, i)).collect();
    Ok(per_image?.into_iter().flatten().collect())
}

#[cfg(not(feature = "parallel"))]
pub fn generate_split(cfg: &GenConfig) -> Result<Vec<Sample>, GenError> {
    generate_split_sequential(cfg)
}

/// Down-samples to a uniform answer distribution: every answer class is cut
/// to the size of the rarest class. Errors when a class is empty.
pub fn balance(samples: &[Sample]) -> Result<Vec<Sample>, GenError> {
    let mut counts = [0usize; 27];
    for s in samples {
        counts[s.answer.index()] += 1;
    }
    let missing: Vec<String> = ANSWER_LABELS
        .iter()
        .zip(&counts)
        .filter(|(_, c)| **c == 0)
        .map(|(l, _)| l.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(GenError::BalanceInfeasible { missing });
    }
    let quota = *counts.iter().min().unwrap();
    let mut kept = [0usize; 27];
    Ok(samples
        .iter()
        .filter(|s| {
            let i = s.answer.index();
            if kept[i] < quota {
                kept[i] += 1;
                true
            } else {
                false
            }
        })
        .cloned()
        .collect())
}
