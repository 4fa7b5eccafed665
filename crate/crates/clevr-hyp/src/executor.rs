//! Program execution: question programs evaluate to answers, action programs
//! produce updated scenes. Both are pure over their inputs; action placement
//! randomness is derived deterministically from the scene seed and the
//! serialized program.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::program::{serialize_program, Arg, Dialect, Program, ProgramNode};
use crate::scene::{
    derive_relations, AttrValue, Color, Material, ObjectId, ObjectRecord, Relation, RelationMap,
    Scene, Shape, Size, MAX_OBJECTS, MIN_SEPARATION, PLANE_BOUND, RELATION_EPSILON,
};

/// Largest integer expressible in the answer vocabulary.
pub const MAX_INT_ANSWER: i64 = 9;

/// The canonical 27-label answer vocabulary, in order.
pub const ANSWER_LABELS: [&str; 27] = [
    "gray", "blue", "brown", "yellow", "red", "green", "purple", "cyan", "cylinder", "sphere",
    "cube", "small", "big", "metal", "rubber", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "yes", "no",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    Attr(AttrValue),
    Count(u8),
    Bool(bool),
}

impl Answer {
    pub fn label(self) -> &'static str {
        match self {
            Answer::Attr(v) => v.label(),
            Answer::Count(n) => {
                const DIGITS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
                DIGITS[n as usize]
            }
            Answer::Bool(true) => "yes",
            Answer::Bool(false) => "no",
        }
    }

    /// Position in the canonical 27-label ordering.
    pub fn index(self) -> usize {
        ANSWER_LABELS.iter().position(|&l| l == self.label()).unwrap()
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Answer, String> {
        if let Some(v) = AttrValue::parse(s) {
            return Ok(Answer::Attr(v));
        }
        match s {
            "yes" => Ok(Answer::Bool(true)),
            "no" => Ok(Answer::Bool(false)),
            _ => match s.parse::<u8>() {
                Ok(n) if n <= 9 => Ok(Answer::Count(n)),
                _ => Err(format!("`{s}` is not one of the 27 answer labels")),
            },
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Answer, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuntimeValue {
    Set(BTreeSet<ObjectId>),
    Obj(ObjectId),
    Int(i64),
    Bool(bool),
    Attr(AttrValue),
    Rel(Relation),
    /// Descriptor of an object that does not exist yet (`make_object`).
    Pending { size: Size, color: Color, material: Material, shape: Shape },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("ill-posed: unique() applied to a set of {0} objects")]
    IllPosed(usize),
    #[error("integer answer {0} exceeds the answer vocabulary (max 9)")]
    Overflow(i64),
    #[error("no in-bounds position satisfies the requested relation")]
    PlacementInfeasible,
    #[error("scene capacity exceeded (max {MAX_OBJECTS} objects)")]
    Capacity,
    #[error("a pending object from make_object was used outside add/add_rel")]
    InvalidPendingUse,
    #[error("expected a {0} program")]
    WrongDialect(&'static str),
    #[error("action {index} in sequence failed: {source}")]
    Sequence { index: usize, source: Box<ExecError> },
}

fn attr_matches(o: &ObjectRecord, v: AttrValue) -> bool {
    o.attr(v.kind()) == v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Question-program evaluation context.
struct QuestionEval<'a> {
    scene: &'a Scene,
    relations: Option<RelationMap>,
}

impl<'a> QuestionEval<'a> {
    fn eval(&mut self, node: &ProgramNode) -> Result<RuntimeValue, ExecError> {
        let mut args = Vec::with_capacity(node.args.len());
        for a in &node.args {
            args.push(match a {
                Arg::Node(n) => self.eval(n)?,
                Arg::Value(v) => RuntimeValue::Attr(*v),
                Arg::Rel(r) => RuntimeValue::Rel(*r),
            });
        }
        apply_shared(node.func.name, args, self.scene, &mut self.relations)
    }
}

// Shared-function semantics used by both evaluators. The relation map is
// derived lazily because action programs mutate the scene between calls.
fn apply_shared(
    name: &str,
    mut args: Vec<RuntimeValue>,
    scene: &Scene,
    relations: &mut Option<RelationMap>,
) -> Result<RuntimeValue, ExecError> {
    let mut take = |i: usize| std::mem::replace(&mut args[i], RuntimeValue::Int(0));
    let as_set = |v: RuntimeValue| match v {
        RuntimeValue::Set(s) => Ok(s),
        RuntimeValue::Pending { .. } => Err(ExecError::InvalidPendingUse),
        other => unreachable!("type checker admitted {other:?} where objset expected"),
    };
    let as_obj = |v: RuntimeValue| match v {
        RuntimeValue::Obj(o) => Ok(o),
        RuntimeValue::Pending { .. } => Err(ExecError::InvalidPendingUse),
        other => unreachable!("type checker admitted {other:?} where object expected"),
    };
    let as_int = |v: RuntimeValue| match v {
        RuntimeValue::Int(n) => n,
        other => unreachable!("type checker admitted {other:?} where integer expected"),
    };
    let as_attr = |v: RuntimeValue| match v {
        RuntimeValue::Attr(a) => a,
        other => unreachable!("type checker admitted {other:?} where value expected"),
    };
    let as_rel = |v: RuntimeValue| match v {
        RuntimeValue::Rel(r) => r,
        other => unreachable!("type checker admitted {other:?} where relation expected"),
    };

    let out = match name {
        "scene" => RuntimeValue::Set(scene.objects.iter().map(|o| o.id.clone()).collect()),
        "unique" => {
            let s = as_set(take(0))?;
            if s.len() == 1 {
                RuntimeValue::Obj(s.into_iter().next().unwrap())
            } else {
                return Err(ExecError::IllPosed(s.len()));
            }
        }
        "relate" => {
            let o = as_obj(take(0))?;
            let r = as_rel(take(1));
            let map = relations.get_or_insert_with(|| derive_relations(scene));
            RuntimeValue::Set(map.get(&o).map(|m| m[&r].clone()).unwrap_or_default())
        }
        "count" => RuntimeValue::Int(as_set(take(0))?.len() as i64),
        "exist" => RuntimeValue::Bool(!as_set(take(0))?.is_empty()),
        "filter_size" | "filter_color" | "filter_material" | "filter_shape" => {
            let v = as_attr(take(0));
            let s = as_set(take(1))?;
            RuntimeValue::Set(
                s.into_iter()
                    .filter(|id| scene.get(id).is_some_and(|o| attr_matches(o, v)))
                    .collect(),
            )
        }
        "not_size" | "not_color" | "not_material" | "not_shape" => {
            let s = as_set(take(0))?;
            let v = as_attr(take(1));
            RuntimeValue::Set(
                s.into_iter()
                    .filter(|id| scene.get(id).is_some_and(|o| !attr_matches(o, v)))
                    .collect(),
            )
        }
        "query_size" | "query_color" | "query_material" | "query_shape" => {
            let o = as_obj(take(0))?;
            let kind = crate::scene::AttrKind::parse(&name["query_".len()..]).unwrap();
            RuntimeValue::Attr(scene.get(&o).expect("referent exists").attr(kind))
        }
        "same_size" | "same_color" | "same_material" | "same_shape" => {
            let o = as_obj(take(0))?;
            let kind = crate::scene::AttrKind::parse(&name["same_".len()..]).unwrap();
            let target = scene.get(&o).expect("referent exists").attr(kind);
            RuntimeValue::Set(
                scene
                    .objects
                    .iter()
                    .filter(|c| c.id != o && c.attr(kind) == target)
                    .map(|c| c.id.clone())
                    .collect(),
            )
        }
        "equal_size" | "equal_color" | "equal_material" | "equal_shape" => {
            RuntimeValue::Bool(as_attr(take(0)) == as_attr(take(1)))
        }
        "equal_integer" => RuntimeValue::Bool(as_int(take(0)) == as_int(take(1))),
        "less_than" => RuntimeValue::Bool(as_int(take(0)) < as_int(take(1))),
        "greater_than" => RuntimeValue::Bool(as_int(take(0)) > as_int(take(1))),
        "and" => {
            let a = as_set(take(0))?;
            let b = as_set(take(1))?;
            RuntimeValue::Set(a.intersection(&b).cloned().collect())
        }
        "or" => {
            let a = as_set(take(0))?;
            let b = as_set(take(1))?;
            RuntimeValue::Set(a.union(&b).cloned().collect())
        }
        other => unreachable!("unknown shared function {other}"),
    };
    Ok(out)
}

/// Evaluates a question program on a scene, yielding one of the 27 answers.
pub fn execute_question(p: &Program, scene: &Scene) -> Result<Answer, ExecError> {
    if p.dialect != Dialect::Question {
        return Err(ExecError::WrongDialect("question"));
    }
    let mut ctx = QuestionEval { scene, relations: None };
    match ctx.eval(&p.root)? {
        RuntimeValue::Int(n) => {
            if !(0..=MAX_INT_ANSWER).contains(&n) {
                Err(ExecError::Overflow(n))
            } else {
                Ok(Answer::Count(n as u8))
            }
        }
        RuntimeValue::Bool(b) => Ok(Answer::Bool(b)),
        RuntimeValue::Attr(v) => Ok(Answer::Attr(v)),
        other => unreachable!("question root evaluated to {other:?}"),
    }
}

/// Action-program evaluation context: owns the evolving scene state plus the
/// deterministic placement RNG.
struct ActionEval {
    scene: Scene,
    rng: ChaCha8Rng,
    next_new: usize,
}

impl ActionEval {
    fn all_ids(&self) -> BTreeSet<ObjectId> {
        self.scene.objects.iter().map(|o| o.id.clone()).collect()
    }

    fn fresh_id(&mut self) -> ObjectId {
        loop {
            let id = format!("new_{}", self.next_new);
            self.next_new += 1;
            if self.scene.get(&id).is_none() {
                return id;
            }
        }
    }

    fn separated(&self, x: f64, y: f64, ignore: &[ObjectId]) -> bool {
        self.scene.objects.iter().all(|o| {
            if ignore.contains(&o.id) {
                return true;
            }
            let (ox, oy) = self.scene.effective_pos(&o.id).unwrap_or((o.x, o.y));
            ((ox - x).powi(2) + (oy - y).powi(2)).sqrt() >= MIN_SEPARATION
        })
    }

    fn place_new(
        &mut self,
        pending: (Size, Color, Material, Shape),
        anchor: Option<(ObjectId, Relation)>,
    ) -> Result<(), ExecError> {
        if self.scene.objects.len() >= MAX_OBJECTS {
            return Err(ExecError::Capacity);
        }
        let (size, color, material, shape) = pending;
        let id = self.fresh_id();
        if let Some((ref_id, Relation::On)) = anchor {
            let (x, y) = self.scene.effective_pos(&ref_id).ok_or(ExecError::PlacementInfeasible)?;
            self.scene.objects.push(ObjectRecord {
                id,
                size,
                color,
                material,
                shape,
                x,
                y,
                on_base: Some(ref_id),
            });
            return Ok(());
        }
        let anchor_pos = match &anchor {
            Some((ref_id, _)) => {
                Some(self.scene.effective_pos(ref_id).ok_or(ExecError::PlacementInfeasible)?)
            }
            None => None,
        };
        for _ in 0..500 {
            let x = self.rng.gen_range(-PLANE_BOUND..=PLANE_BOUND);
            let y = self.rng.gen_range(-PLANE_BOUND..=PLANE_BOUND);
            if let (Some((ax, ay)), Some((_, r))) = (anchor_pos, &anchor) {
                let holds = match r {
                    Relation::Right => x > ax + RELATION_EPSILON,
                    Relation::Left => x < ax - RELATION_EPSILON,
                    Relation::Behind => y > ay + RELATION_EPSILON,
                    Relation::Front => y < ay - RELATION_EPSILON,
                    Relation::On | Relation::Below => unreachable!(),
                };
                if !holds {
                    continue;
                }
            }
            if self.separated(x, y, &[]) {
                self.scene.objects.push(ObjectRecord {
                    id,
                    size,
                    color,
                    material,
                    shape,
                    x,
                    y,
                    on_base: None,
                });
                return Ok(());
            }
        }
        Err(ExecError::PlacementInfeasible)
    }

    fn remove_set(&mut self, ids: &BTreeSet<ObjectId>) {
        self.scene.objects.retain(|o| !ids.contains(&o.id));
        // ground anything whose base is gone, keeping its coordinates
        let existing: BTreeSet<ObjectId> = self.all_ids();
        for o in &mut self.scene.objects {
            if let Some(base) = &o.on_base {
                if !existing.contains(base) {
                    o.on_base = None;
                }
            }
        }
    }

    fn move_planar(&mut self, target: ObjectId, anchor: ObjectId, r: Relation) -> Result<(), ExecError> {
        let stack = self.scene.stack_above(&target);
        if stack.contains(&anchor) {
            return Err(ExecError::PlacementInfeasible);
        }
        let (ax, ay) = self.scene.effective_pos(&anchor).ok_or(ExecError::PlacementInfeasible)?;
        let (dx, dy) = match r {
            Relation::Right => (1.0, 0.0),
            Relation::Left => (-1.0, 0.0),
            Relation::Behind => (0.0, 1.0),
            Relation::Front => (0.0, -1.0),
            Relation::On | Relation::Below => unreachable!(),
        };
        let (mut x, mut y) = (ax + dx, ay + dy);
        while !self.separated(x, y, &stack) {
            x += dx * 0.1;
            y += dy * 0.1;
            if x.abs() > PLANE_BOUND || y.abs() > PLANE_BOUND {
                return Err(ExecError::PlacementInfeasible);
            }
        }
        if x.abs() > PLANE_BOUND || y.abs() > PLANE_BOUND {
            return Err(ExecError::PlacementInfeasible);
        }
        for id in &stack {
            let o = self.scene.get_mut(id).unwrap();
            o.x = x;
            o.y = y;
        }
        self.scene.get_mut(&target).unwrap().on_base = None;
        Ok(())
    }

    fn move_on(&mut self, target: ObjectId, anchor: ObjectId) -> Result<(), ExecError> {
        let stack = self.scene.stack_above(&target);
        if stack.contains(&anchor) {
            return Err(ExecError::PlacementInfeasible);
        }
        let (x, y) = self.scene.effective_pos(&anchor).ok_or(ExecError::PlacementInfeasible)?;
        for id in &stack {
            let o = self.scene.get_mut(id).unwrap();
            o.x = x;
            o.y = y;
        }
        self.scene.get_mut(&target).unwrap().on_base = Some(anchor);
        Ok(())
    }

    fn eval(&mut self, node: &ProgramNode) -> Result<RuntimeValue, ExecError> {
        let mut args = Vec::with_capacity(node.args.len());
        for a in &node.args {
            args.push(match a {
                Arg::Node(n) => self.eval(n)?,
                Arg::Value(v) => RuntimeValue::Attr(*v),
                Arg::Rel(r) => RuntimeValue::Rel(*r),
            });
        }
        match node.func.name {
            "make_object" => {
                let vals: Vec<AttrValue> = args
                    .into_iter()
                    .map(|v| match v {
                        RuntimeValue::Attr(a) => a,
                        other => unreachable!("make_object arg {other:?}"),
                    })
                    .collect();
                match (vals[0], vals[1], vals[2], vals[3]) {
                    (
                        AttrValue::Size(size),
                        AttrValue::Color(color),
                        AttrValue::Material(material),
                        AttrValue::Shape(shape),
                    ) => Ok(RuntimeValue::Pending { size, color, material, shape }),
                    _ => unreachable!("make_object args type-checked"),
                }
            }
            "add" => {
                let pending = expect_pending(args.remove(1))?;
                self.place_new(pending, None)?;
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            "add_rel" => {
                let r = expect_rel(args.remove(3));
                let anchor = expect_obj(args.remove(2))?;
                let pending = expect_pending(args.remove(1))?;
                if r == Relation::Below {
                    return Err(ExecError::PlacementInfeasible);
                }
                self.place_new(pending, Some((anchor, r)))?;
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            "remove" => {
                let ids = expect_set(args.remove(0))?;
                self.remove_set(&ids);
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            "remove_rel" => {
                let target = expect_obj(args.remove(1))?;
                let mut ids = BTreeSet::new();
                ids.insert(target);
                self.remove_set(&ids);
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            "change_size" | "change_color" | "change_material" | "change_shape" => {
                let v = match args.remove(1) {
                    RuntimeValue::Attr(a) => a,
                    other => unreachable!("change value {other:?}"),
                };
                let ids = expect_set(args.remove(0))?;
                for id in &ids {
                    if let Some(o) = self.scene.get_mut(id) {
                        o.set_attr(v);
                    }
                }
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            "change_loc" => {
                let r = expect_rel(args.remove(3));
                let anchor = expect_obj(args.remove(2))?;
                let target = expect_obj(args.remove(1))?;
                match r {
                    Relation::On => self.move_on(target, anchor)?,
                    Relation::Below => return Err(ExecError::PlacementInfeasible),
                    planar => self.move_planar(target, anchor, planar)?,
                }
                Ok(RuntimeValue::Set(self.all_ids()))
            }
            shared => {
                let mut rels: Option<RelationMap> = None;
                apply_shared(shared, args, &self.scene, &mut rels)
            }
        }
    }
}

fn expect_set(v: RuntimeValue) -> Result<BTreeSet<ObjectId>, ExecError> {
    match v {
        RuntimeValue::Set(s) => Ok(s),
        RuntimeValue::Pending { .. } => Err(ExecError::InvalidPendingUse),
        other => unreachable!("expected objset, got {other:?}"),
    }
}

fn expect_obj(v: RuntimeValue) -> Result<ObjectId, ExecError> {
    match v {
        RuntimeValue::Obj(o) => Ok(o),
        RuntimeValue::Pending { .. } => Err(ExecError::InvalidPendingUse),
        other => unreachable!("expected object, got {other:?}"),
    }
}

fn expect_rel(v: RuntimeValue) -> Relation {
    match v {
        RuntimeValue::Rel(r) => r,
        other => unreachable!("expected relation, got {other:?}"),
    }
}

fn expect_pending(v: RuntimeValue) -> Result<(Size, Color, Material, Shape), ExecError> {
    match v {
        RuntimeValue::Pending { size, color, material, shape } => {
            Ok((size, color, material, shape))
        }
        // adding an already-present object is not meaningful
        RuntimeValue::Obj(_) => Err(ExecError::InvalidPendingUse),
        other => unreachable!("expected pending object, got {other:?}"),
    }
}

/// Applies an action program to a scene, returning the updated scene.
/// The input scene is untouched; placement randomness is seeded from
/// `(scene.seed, serialized program)` so execution is reproducible.
pub fn execute_action(p: &Program, scene: &Scene) -> Result<Scene, ExecError> {
    if p.dialect != Dialect::Action {
        return Err(ExecError::WrongDialect("action"));
    }
    let seed = scene.seed ^ fnv1a(serialize_program(p).as_bytes());
    let mut ctx = ActionEval {
        scene: scene.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        next_new: 0,
    };
    ctx.eval(&p.root)?;
    Ok(ctx.scene)
}

/// Left-to-right fold of `execute_action`; referents in program k are
/// resolved against the scene after programs 0..k.
pub fn execute_action_sequence(ps: &[Program], scene: &Scene) -> Result<Scene, ExecError> {
    let mut current = scene.clone();
    for (index, p) in ps.iter().enumerate() {
        current = execute_action(p, &current)
            .map_err(|source| ExecError::Sequence { index, source: Box::new(source) })?;
    }
    Ok(current)
}
