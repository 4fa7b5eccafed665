//! Scene graphs: attributed objects on a bounded plane with stacking links,
//! plus the derivation of spatial relations from coordinates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-width of the plane; object centers live in `[-PLANE_BOUND, PLANE_BOUND]`.
pub const PLANE_BOUND: f64 = 3.0;
/// Minimum planar center distance between objects in distinct stacks.
pub const MIN_SEPARATION: f64 = 0.4;
/// Dead zone for left/right/front/behind comparisons.
pub const RELATION_EPSILON: f64 = 0.05;
/// Hard capacity of a scene.
pub const MAX_OBJECTS: usize = 10;
/// Lower bound for freshly generated scenes (intermediate states may go below).
pub const MIN_GENERATED_OBJECTS: usize = 4;

macro_rules! attr_enum {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn parse(s: &str) -> Option<$name> {
                match s {
                    $($label => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

attr_enum!(Color {
    Gray => "gray",
    Blue => "blue",
    Brown => "brown",
    Yellow => "yellow",
    Red => "red",
    Green => "green",
    Purple => "purple",
    Cyan => "cyan",
});

attr_enum!(Shape {
    Cylinder => "cylinder",
    Sphere => "sphere",
    Cube => "cube",
});

attr_enum!(Size {
    Small => "small",
    Big => "big",
});

attr_enum!(Material {
    Metal => "metal",
    Rubber => "rubber",
});

/// Which of the four attribute kinds a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrKind {
    Size,
    Color,
    Material,
    Shape,
}

impl AttrKind {
    pub const ALL: &'static [AttrKind] =
        &[AttrKind::Size, AttrKind::Color, AttrKind::Material, AttrKind::Shape];

    pub fn label(self) -> &'static str {
        match self {
            AttrKind::Size => "size",
            AttrKind::Color => "color",
            AttrKind::Material => "material",
            AttrKind::Shape => "shape",
        }
    }

    pub fn parse(s: &str) -> Option<AttrKind> {
        match s {
            "size" => Some(AttrKind::Size),
            "color" => Some(AttrKind::Color),
            "material" => Some(AttrKind::Material),
            "shape" => Some(AttrKind::Shape),
            _ => None,
        }
    }

    pub fn values(self) -> Vec<AttrValue> {
        match self {
            AttrKind::Size => Size::ALL.iter().map(|&v| AttrValue::Size(v)).collect(),
            AttrKind::Color => Color::ALL.iter().map(|&v| AttrValue::Color(v)).collect(),
            AttrKind::Material => Material::ALL.iter().map(|&v| AttrValue::Material(v)).collect(),
            AttrKind::Shape => Shape::ALL.iter().map(|&v| AttrValue::Shape(v)).collect(),
        }
    }
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A single attribute value of any kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrValue {
    Size(Size),
    Color(Color),
    Material(Material),
    Shape(Shape),
}

impl AttrValue {
    pub fn kind(self) -> AttrKind {
        match self {
            AttrValue::Size(_) => AttrKind::Size,
            AttrValue::Color(_) => AttrKind::Color,
            AttrValue::Material(_) => AttrKind::Material,
            AttrValue::Shape(_) => AttrKind::Shape,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttrValue::Size(v) => v.label(),
            AttrValue::Color(v) => v.label(),
            AttrValue::Material(v) => v.label(),
            AttrValue::Shape(v) => v.label(),
        }
    }

    pub fn parse(s: &str) -> Option<AttrValue> {
        Size::parse(s)
            .map(AttrValue::Size)
            .or_else(|| Color::parse(s).map(AttrValue::Color))
            .or_else(|| Material::parse(s).map(AttrValue::Material))
            .or_else(|| Shape::parse(s).map(AttrValue::Shape))
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One of the six spatial relation labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Left,
    Right,
    Front,
    Behind,
    On,
    Below,
}

impl Relation {
    pub const ALL: &'static [Relation] = &[
        Relation::Left,
        Relation::Right,
        Relation::Front,
        Relation::Behind,
        Relation::On,
        Relation::Below,
    ];

    pub const PLANAR: &'static [Relation] =
        &[Relation::Left, Relation::Right, Relation::Front, Relation::Behind];

    pub fn label(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Front => "front",
            Relation::Behind => "behind",
            Relation::On => "on",
            Relation::Below => "below",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        match s {
            "left" => Some(Relation::Left),
            "right" => Some(Relation::Right),
            "front" => Some(Relation::Front),
            "behind" => Some(Relation::Behind),
            "on" => Some(Relation::On),
            "below" => Some(Relation::Below),
            _ => None,
        }
    }

    pub fn inverse(self) -> Relation {
        match self {
            Relation::Left => Relation::Right,
            Relation::Right => Relation::Left,
            Relation::Front => Relation::Behind,
            Relation::Behind => Relation::Front,
            Relation::On => Relation::Below,
            Relation::Below => Relation::On,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Opaque object identifier, unique within a scene.
pub type ObjectId = String;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub size: Size,
    pub color: Color,
    pub material: Material,
    pub shape: Shape,
    pub x: f64,
    pub y: f64,
    pub on_base: Option<ObjectId>,
}

impl ObjectRecord {
    pub fn attr(&self, kind: AttrKind) -> AttrValue {
        match kind {
            AttrKind::Size => AttrValue::Size(self.size),
            AttrKind::Color => AttrValue::Color(self.color),
            AttrKind::Material => AttrValue::Material(self.material),
            AttrKind::Shape => AttrValue::Shape(self.shape),
        }
    }

    pub fn set_attr(&mut self, value: AttrValue) {
        match value {
            AttrValue::Size(v) => self.size = v,
            AttrValue::Color(v) => self.color = v,
            AttrValue::Material(v) => self.material = v,
            AttrValue::Shape(v) => self.shape = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub objects: Vec<ObjectRecord>,
}

/// A violated scene invariant, with the offending object ids.
#[derive(Clone, Debug, PartialEq)]
pub enum SceneViolation {
    DuplicateId(ObjectId),
    OutOfBounds(ObjectId),
    DanglingBase(ObjectId),
    StackCycle(ObjectId),
    StackPositionMismatch(ObjectId),
    Separation(ObjectId, ObjectId),
    TooManyObjects(usize),
}

impl fmt::Display for SceneViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneViolation::DuplicateId(id) => write!(f, "duplicate object id {id}"),
            SceneViolation::OutOfBounds(id) => write!(f, "object {id} outside plane bounds"),
            SceneViolation::DanglingBase(id) => write!(f, "object {id} rests on a missing base"),
            SceneViolation::StackCycle(id) => write!(f, "stacking cycle through object {id}"),
            SceneViolation::StackPositionMismatch(id) => {
                write!(f, "stacked object {id} does not share its base's position")
            }
            SceneViolation::Separation(a, b) => {
                write!(f, "objects {a} and {b} closer than minimum separation")
            }
            SceneViolation::TooManyObjects(n) => write!(f, "scene has {n} objects (max 10)"),
        }
    }
}

/// Relation map: object id -> relation -> set of object ids.
pub type RelationMap = BTreeMap<ObjectId, BTreeMap<Relation, BTreeSet<ObjectId>>>;

impl Scene {
    pub fn empty(seed: u64) -> Scene {
        Scene { seed, objects: Vec::new() }
    }

    pub fn get(&self, id: &str) -> Option<&ObjectRecord> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ObjectRecord> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn ids(&self) -> Vec<ObjectId> {
        self.objects.iter().map(|o| o.id.clone()).collect()
    }

    /// Ground object of the stack containing `id` (the object itself if grounded).
    pub fn stack_root(&self, id: &str) -> Option<ObjectId> {
        let mut cur = self.get(id)?;
        let mut hops = 0;
        while let Some(base) = &cur.on_base {
            cur = self.get(base)?;
            hops += 1;
            if hops > self.objects.len() {
                return None; // cycle
            }
        }
        Some(cur.id.clone())
    }

    /// Planar coordinates effective for relation derivation: stacked objects
    /// inherit the ground object's position.
    pub fn effective_pos(&self, id: &str) -> Option<(f64, f64)> {
        let root = self.stack_root(id)?;
        let o = self.get(&root)?;
        Some((o.x, o.y))
    }

    /// All objects resting directly or transitively on `id`, including `id`.
    pub fn stack_above(&self, id: &str) -> Vec<ObjectId> {
        let mut out = vec![id.to_string()];
        let mut i = 0;
        while i < out.len() {
            let cur = out[i].clone();
            for o in &self.objects {
                if o.on_base.as_deref() == Some(cur.as_str()) && !out.contains(&o.id) {
                    out.push(o.id.clone());
                }
            }
            i += 1;
        }
        out
    }

    fn same_stack(&self, a: &str, b: &str) -> bool {
        match (self.stack_root(a), self.stack_root(b)) {
            (Some(ra), Some(rb)) => ra == rb,
            _ => false,
        }
    }
}

/// Derives the full relation map from coordinates and stacking links.
pub fn derive_relations(scene: &Scene) -> RelationMap {
    let mut map: RelationMap = RelationMap::new();
    for o in &scene.objects {
        let entry = map.entry(o.id.clone()).or_default();
        for &r in Relation::ALL {
            entry.entry(r).or_default();
        }
    }
    for a in &scene.objects {
        let (ax, ay) = scene.effective_pos(&a.id).unwrap_or((a.x, a.y));
        for b in &scene.objects {
            if a.id == b.id {
                continue;
            }
            if b.on_base.as_deref() == Some(a.id.as_str()) {
                map.get_mut(&a.id).unwrap().get_mut(&Relation::On).unwrap().insert(b.id.clone());
            }
            if a.on_base.as_deref() == Some(b.id.as_str()) {
                map.get_mut(&a.id).unwrap().get_mut(&Relation::Below).unwrap().insert(b.id.clone());
            }
            if scene.same_stack(&a.id, &b.id) {
                continue;
            }
            let (bx, by) = scene.effective_pos(&b.id).unwrap_or((b.x, b.y));
            let entry = map.get_mut(&a.id).unwrap();
            if bx > ax + RELATION_EPSILON {
                entry.get_mut(&Relation::Right).unwrap().insert(b.id.clone());
            }
            if bx < ax - RELATION_EPSILON {
                entry.get_mut(&Relation::Left).unwrap().insert(b.id.clone());
            }
            if by > ay + RELATION_EPSILON {
                entry.get_mut(&Relation::Behind).unwrap().insert(b.id.clone());
            }
            if by < ay - RELATION_EPSILON {
                entry.get_mut(&Relation::Front).unwrap().insert(b.id.clone());
            }
        }
    }
    map
}

/// Checks every structural invariant and returns all violations.
pub fn validate_scene(scene: &Scene) -> Vec<SceneViolation> {
    let mut violations = Vec::new();
    if scene.objects.len() > MAX_OBJECTS {
        violations.push(SceneViolation::TooManyObjects(scene.objects.len()));
    }
    let mut seen = HashSet::new();
    for o in &scene.objects {
        if !seen.insert(o.id.clone()) {
            violations.push(SceneViolation::DuplicateId(o.id.clone()));
        }
        if o.x.abs() > PLANE_BOUND || o.y.abs() > PLANE_BOUND || !o.x.is_finite() || !o.y.is_finite()
        {
            violations.push(SceneViolation::OutOfBounds(o.id.clone()));
        }
    }
    let by_id: HashMap<&str, &ObjectRecord> =
        scene.objects.iter().map(|o| (o.id.as_str(), o)).collect();
    for o in &scene.objects {
        if let Some(base) = &o.on_base {
            match by_id.get(base.as_str()) {
                None => violations.push(SceneViolation::DanglingBase(o.id.clone())),
                Some(b) => {
                    if (o.x - b.x).abs() > 1e-9 || (o.y - b.y).abs() > 1e-9 {
                        violations.push(SceneViolation::StackPositionMismatch(o.id.clone()));
                    }
                }
            }
        }
        // cycle detection by walking the base chain
        let mut cur = o;
        let mut hops = 0;
        while let Some(base) = &cur.on_base {
            match by_id.get(base.as_str()) {
                Some(b) => cur = b,
                None => break,
            }
            hops += 1;
            if hops > scene.objects.len() {
                violations.push(SceneViolation::StackCycle(o.id.clone()));
                break;
            }
        }
    }
    for (i, a) in scene.objects.iter().enumerate() {
        for b in scene.objects.iter().skip(i + 1) {
            if scene.same_stack(&a.id, &b.id) {
                continue;
            }
            let (ax, ay) = scene.effective_pos(&a.id).unwrap_or((a.x, a.y));
            let (bx, by) = scene.effective_pos(&b.id).unwrap_or((b.x, b.y));
            let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            if d < MIN_SEPARATION {
                violations.push(SceneViolation::Separation(a.id.clone(), b.id.clone()));
            }
        }
    }
    violations
}
