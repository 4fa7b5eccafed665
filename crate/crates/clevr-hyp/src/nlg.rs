//! Surface-text production: templates paired with program skeletons,
//! referring-expression generation, synonym substitution, and templated
//! scene-to-text rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::program::{lookup, parse_program, ParseError, Program};
use crate::scene::{
    AttrKind, AttrValue, Color, Material, ObjectId, ObjectRecord, Relation, Scene, Shape, Size,
};

const TEMPLATES_JSON: &str = include_str!("templates.json");
const SYNONYMS_JSON: &str = include_str!("synonyms.json");

/// Action and question families, including the logical 2-hop question kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Add,
    Remove,
    Change,
    MoveInPlane,
    MoveOn,
    Count,
    Exist,
    CompareInteger,
    QueryAttr,
    CompareAttr,
    And,
    Or,
    Not,
}

impl Family {
    pub const ACTIONS: &'static [Family] =
        &[Family::Add, Family::Remove, Family::Change, Family::MoveInPlane, Family::MoveOn];
    pub const QUESTIONS: &'static [Family] = &[
        Family::Count,
        Family::Exist,
        Family::CompareInteger,
        Family::QueryAttr,
        Family::CompareAttr,
    ];
    pub const LOGIC: &'static [Family] = &[Family::And, Family::Or, Family::Not];

    pub fn label(self) -> &'static str {
        match self {
            Family::Add => "add",
            Family::Remove => "remove",
            Family::Change => "change",
            Family::MoveInPlane => "move_in_plane",
            Family::MoveOn => "move_on",
            Family::Count => "count",
            Family::Exist => "exist",
            Family::CompareInteger => "compare_integer",
            Family::QueryAttr => "query_attr",
            Family::CompareAttr => "compare_attr",
            Family::And => "and",
            Family::Or => "or",
            Family::Not => "not",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        [
            Family::Add,
            Family::Remove,
            Family::Change,
            Family::MoveInPlane,
            Family::MoveOn,
            Family::Count,
            Family::Exist,
            Family::CompareInteger,
            Family::QueryAttr,
            Family::CompareAttr,
            Family::And,
            Family::Or,
            Family::Not,
        ]
        .into_iter()
        .find(|f| f.label() == s)
    }

    pub fn is_action(self) -> bool {
        Family::ACTIONS.contains(&self)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A surface form paired with its program skeleton.
#[derive(Clone, Debug)]
pub struct Template {
    pub family: Family,
    pub hop: u8,
    pub surface: String,
    pub program: String,
    /// The set referent of this template must resolve minimally (the relate
    /// reference carries information); checked structurally by the validity
    /// filter.
    pub minimal: bool,
    /// Fixes the kind of the <V> binding when the skeleton hardcodes it.
    pub v_kind: Option<AttrKind>,
}

#[derive(Deserialize)]
struct RawTemplate {
    family: String,
    hop: u8,
    surface: String,
    program: String,
    #[serde(default)]
    minimal: bool,
    #[serde(default)]
    v_kind: Option<String>,
}

#[derive(Debug, Error)]
pub enum NlgError {
    #[error("template error: {0}")]
    BadTemplate(String),
    #[error("missing binding for <{0}>")]
    MissingBinding(String),
    #[error("binding <{0}> has the wrong kind")]
    BindingKind(String),
    #[error("object {0} has no admissible referring expression")]
    NoReferringExpression(ObjectId),
    #[error("instantiated program is invalid: {0}")]
    Program(#[from] ParseError),
    #[error("template file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Surface word for an attribute value; differs from the canonical label
/// only for sizes ("large" reads better than "big" in running text).
pub fn surface_word(v: AttrValue) -> &'static str {
    match v {
        AttrValue::Size(Size::Big) => "large",
        other => other.label(),
    }
}

/// Surface phrase for a relation.
pub fn relation_phrase(r: Relation) -> &'static str {
    match r {
        Relation::Left => "to the left of",
        Relation::Right => "to the right of",
        Relation::Front => "in front of",
        Relation::Behind => "behind",
        Relation::On => "on top of",
        Relation::Below => "below",
    }
}

fn plural_noun(shape: Option<Shape>) -> String {
    match shape {
        Some(s) => format!("{}s", s.label()),
        None => "things".to_string(),
    }
}

fn singular_noun(shape: Option<Shape>) -> &'static str {
    match shape {
        Some(s) => s.label(),
        None => "thing",
    }
}

/// A set of objects described by attribute values (at most one per kind).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetDesc {
    values: Vec<AttrValue>,
}

impl SetDesc {
    pub fn new(mut values: Vec<AttrValue>) -> SetDesc {
        values.sort_by_key(|v| v.kind());
        values.dedup_by_key(|v| v.kind());
        SetDesc { values }
    }

    pub fn values(&self) -> &[AttrValue] {
        &self.values
    }

    pub fn value_of(&self, kind: AttrKind) -> Option<AttrValue> {
        self.values.iter().copied().find(|v| v.kind() == kind)
    }

    pub fn matches(&self, o: &ObjectRecord) -> bool {
        self.values.iter().all(|v| o.attr(v.kind()) == *v)
    }

    fn shape(&self) -> Option<Shape> {
        self.values.iter().find_map(|v| match v {
            AttrValue::Shape(s) => Some(*s),
            _ => None,
        })
    }

    fn modifier_words(&self) -> Vec<&'static str> {
        self.values
            .iter()
            .filter(|v| v.kind() != AttrKind::Shape)
            .map(|&v| surface_word(v))
            .collect()
    }

    pub fn text_plural(&self) -> String {
        let mut words: Vec<String> =
            self.modifier_words().into_iter().map(str::to_string).collect();
        words.push(plural_noun(self.shape()));
        words.join(" ")
    }

    pub fn text_singular(&self) -> String {
        let mut words = self.modifier_words();
        words.push(singular_noun(self.shape()));
        words.join(" ")
    }

    /// Nested filter chain around `base`, first kind outermost.
    pub fn chain(&self, base: &str) -> String {
        let mut out = base.to_string();
        for v in self.values.iter().rev() {
            out = format!("filter_{}({},{})", v.kind().label(), v.label(), out);
        }
        out
    }
}

/// A unique way to refer to one object by an attribute subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferringExpression {
    pub object: ObjectId,
    desc: SetDesc,
}

impl ReferringExpression {
    pub fn text(&self) -> String {
        self.desc.text_singular()
    }

    pub fn chain(&self, base: &str) -> String {
        self.desc.chain(base)
    }

    pub fn kinds(&self) -> Vec<AttrKind> {
        self.desc.values.iter().map(|v| v.kind()).collect()
    }

    pub fn desc(&self) -> &SetDesc {
        &self.desc
    }
}

fn resolves_uniquely(scene: &Scene, desc: &SetDesc, target: &str) -> bool {
    let mut n = 0;
    let mut hit = false;
    for o in &scene.objects {
        if desc.matches(o) {
            n += 1;
            hit |= o.id == target;
        }
    }
    n == 1 && hit
}

/// All attribute subsets that uniquely pick out `id`, shortest first.
/// Empty when even the full attribute tuple is ambiguous.
pub fn referring_expressions(scene: &Scene, id: &str) -> Vec<ReferringExpression> {
    let Some(o) = scene.get(id) else { return Vec::new() };
    let mut out = Vec::new();
    for mask in 0u8..16 {
        let values: Vec<AttrValue> = AttrKind::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &k)| o.attr(k))
            .collect();
        let desc = SetDesc::new(values);
        if resolves_uniquely(scene, &desc, id) {
            out.push(ReferringExpression { object: id.to_string(), desc });
        }
    }
    out.sort_by_key(|e| e.desc.values.len());
    out
}

/// True when no attribute of the expression can be dropped without losing
/// uniqueness.
pub fn is_minimal_expression(scene: &Scene, expr: &ReferringExpression) -> bool {
    for skip in 0..expr.desc.values.len() {
        let mut values = expr.desc.values.clone();
        values.remove(skip);
        if resolves_uniquely(scene, &SetDesc::new(values), &expr.object) {
            return false;
        }
    }
    true
}

/// Values supplied for template placeholders.
#[derive(Clone, Debug)]
pub enum Binding {
    Attr(AttrKind),
    Value(AttrValue),
    Rel(Relation),
    /// Object referent; a referring expression is sampled at instantiation.
    /// `exclude` drops expressions that mention the given attribute kind
    /// (so "what color is the red cube" cannot happen).
    Object { id: ObjectId, exclude: Option<AttrKind> },
    Set(SetDesc),
    New { size: Size, color: Color, material: Material, shape: Shape },
}

pub type Bindings = BTreeMap<String, Binding>;

// Raw placeholder tokens, longest-prefix first so substitution is unambiguous.
const TOKENS: &[&str] = &[
    "SETREL", "SETSG", "SET2", "SET", "REF2", "REF", "NEW", "V1K", "V2K", "VK", "V1", "V2", "V",
    "R", "A",
];

fn raw_placeholders(s: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = s;
    while let Some(i) = rest.find('<') {
        rest = &rest[i + 1..];
        if let Some(j) = rest.find('>') {
            out.insert(rest[..j].to_string());
            rest = &rest[j + 1..];
        } else {
            break;
        }
    }
    out
}

fn canonical(names: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in names {
        match n.as_str() {
            "SETSG" => {
                out.insert("SET".into());
            }
            "SETREL" => {
                out.insert("SET".into());
                out.insert("REF".into());
                out.insert("R".into());
            }
            "VK" => {
                out.insert("V".into());
            }
            "V1K" => {
                out.insert("V1".into());
            }
            "V2K" => {
                out.insert("V2".into());
            }
            other => {
                out.insert(other.to_string());
            }
        }
    }
    out
}

fn validate_template(t: &Template) -> Result<(), NlgError> {
    let surf = canonical(&raw_placeholders(&t.surface));
    let prog = canonical(&raw_placeholders(&t.program));
    if surf != prog {
        return Err(NlgError::BadTemplate(format!(
            "placeholder mismatch in `{}`: surface {:?} vs program {:?}",
            t.surface, surf, prog
        )));
    }
    // catalog closure: every function name the skeleton can expand to exists
    for kind in AttrKind::ALL {
        let mut text = t.program.clone();
        for tok in ["<A>", "<VK>", "<V1K>", "<V2K>"] {
            text = text.replace(tok, kind.label());
        }
        for tok in TOKENS {
            text = text.replace(&format!("<{tok}>"), "scene()");
        }
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                if bytes.get(i) == Some(&b'(') {
                    let name = &text[start..i];
                    if lookup(name).is_none() {
                        return Err(NlgError::BadTemplate(format!(
                            "skeleton `{}` calls unknown function `{name}`",
                            t.program
                        )));
                    }
                }
            } else {
                i += 1;
            }
        }
    }
    Ok(())
}

/// Parses and validates a template inventory from its JSON form.
pub fn load_templates(json: &str) -> Result<Vec<Template>, NlgError> {
    let raw: Vec<RawTemplate> = serde_json::from_str(json)?;
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let family = Family::parse(&r.family)
            .ok_or_else(|| NlgError::BadTemplate(format!("unknown family `{}`", r.family)))?;
        let v_kind = match r.v_kind {
            None => None,
            Some(k) => Some(
                AttrKind::parse(&k)
                    .ok_or_else(|| NlgError::BadTemplate(format!("unknown kind `{k}`")))?,
            ),
        };
        let t = Template { family, hop: r.hop, surface: r.surface, program: r.program, minimal: r.minimal, v_kind };
        validate_template(&t)?;
        out.push(t);
    }
    // every (family, hop) pair present must offer enough surface variety
    let mut counts: BTreeMap<(Family, u8), usize> = BTreeMap::new();
    for t in &out {
        *counts.entry((t.family, t.hop)).or_default() += 1;
    }
    for ((family, hop), n) in &counts {
        if *n < 3 {
            return Err(NlgError::BadTemplate(format!(
                "family {family} hop {hop} has only {n} surface variants (need >= 3)"
            )));
        }
    }
    Ok(out)
}

/// The built-in template inventory.
pub fn default_templates() -> &'static [Template] {
    static CACHE: OnceLock<Vec<Template>> = OnceLock::new();
    CACHE.get_or_init(|| load_templates(TEMPLATES_JSON).expect("embedded templates are valid"))
}

fn get_binding<'b>(bindings: &'b Bindings, name: &str) -> Result<&'b Binding, NlgError> {
    bindings.get(name).ok_or_else(|| NlgError::MissingBinding(name.to_string()))
}

struct Expansion {
    surface: String,
    program: String,
}

/// Fills a template's placeholders, yielding surface text (with synonyms
/// applied) and a type-checked program.
pub fn instantiate(
    template: &Template,
    scene: &Scene,
    bindings: &Bindings,
    rng: &mut impl Rng,
) -> Result<(String, Program), NlgError> {
    let mut raw = raw_placeholders(&template.surface);
    raw.extend(raw_placeholders(&template.program));

    // sample referring expressions for object slots first (rng order is fixed)
    let mut ref_exprs: BTreeMap<&str, ReferringExpression> = BTreeMap::new();
    for slot in ["REF", "REF2"] {
        let needed = raw.contains(slot) || (slot == "REF" && raw.contains("SETREL"));
        if !needed {
            continue;
        }
        let Binding::Object { id, exclude } = get_binding(bindings, slot)? else {
            return Err(NlgError::BindingKind(slot.to_string()));
        };
        let mut candidates = referring_expressions(scene, id);
        if let Some(kind) = exclude {
            candidates.retain(|e| !e.kinds().contains(kind));
        }
        let expr = candidates
            .choose(rng)
            .cloned()
            .ok_or_else(|| NlgError::NoReferringExpression(id.clone()))?;
        ref_exprs.insert(slot, expr);
    }

    let mut expansions: BTreeMap<&str, Expansion> = BTreeMap::new();
    for name in raw.iter().map(String::as_str) {
        let exp = match name {
            "A" => {
                let Binding::Attr(k) = get_binding(bindings, "A")? else {
                    return Err(NlgError::BindingKind("A".into()));
                };
                Expansion { surface: k.label().into(), program: k.label().into() }
            }
            "V" | "V1" | "V2" => {
                let Binding::Value(v) = get_binding(bindings, name)? else {
                    return Err(NlgError::BindingKind(name.into()));
                };
                Expansion { surface: surface_word(*v).into(), program: v.label().into() }
            }
            "VK" | "V1K" | "V2K" => {
                let base = &name[..name.len() - 1];
                let Binding::Value(v) = get_binding(bindings, base)? else {
                    return Err(NlgError::BindingKind(base.into()));
                };
                Expansion { surface: String::new(), program: v.kind().label().into() }
            }
            "R" => {
                let Binding::Rel(r) = get_binding(bindings, "R")? else {
                    return Err(NlgError::BindingKind("R".into()));
                };
                Expansion { surface: relation_phrase(*r).into(), program: r.label().into() }
            }
            "REF" | "REF2" => {
                let expr = &ref_exprs[name];
                Expansion { surface: expr.text(), program: expr.chain("scene()") }
            }
            "SET" | "SET2" => {
                let Binding::Set(s) = get_binding(bindings, name)? else {
                    return Err(NlgError::BindingKind(name.into()));
                };
                Expansion { surface: s.text_plural(), program: s.chain("scene()") }
            }
            "SETSG" => {
                let Binding::Set(s) = get_binding(bindings, "SET")? else {
                    return Err(NlgError::BindingKind("SET".into()));
                };
                Expansion { surface: s.text_singular(), program: String::new() }
            }
            "SETREL" => {
                let Binding::Set(s) = get_binding(bindings, "SET")? else {
                    return Err(NlgError::BindingKind("SET".into()));
                };
                let Binding::Rel(r) = get_binding(bindings, "R")? else {
                    return Err(NlgError::BindingKind("R".into()));
                };
                let anchor = ref_exprs["REF"].chain("scene()");
                let base = format!("relate(unique({anchor}),{})", r.label());
                Expansion { surface: String::new(), program: s.chain(&base) }
            }
            "NEW" => {
                let Binding::New { size, color, material, shape } = get_binding(bindings, "NEW")?
                else {
                    return Err(NlgError::BindingKind("NEW".into()));
                };
                let surface = format!(
                    "{} {} {} {}",
                    surface_word(AttrValue::Size(*size)),
                    color.label(),
                    material.label(),
                    shape.label()
                );
                let program = format!(
                    "make_object({},{},{},{})",
                    size.label(),
                    color.label(),
                    material.label(),
                    shape.label()
                );
                Expansion { surface, program }
            }
            other => return Err(NlgError::BadTemplate(format!("unknown placeholder <{other}>"))),
        };
        expansions.insert(name, exp);
    }

    let mut surface = template.surface.clone();
    let mut program = template.program.clone();
    for tok in TOKENS {
        if let Some(exp) = expansions.get(tok) {
            surface = surface.replace(&format!("<{tok}>"), &exp.surface);
            program = program.replace(&format!("<{tok}>"), &exp.program);
        }
    }
    if surface.contains('<') || program.contains('<') {
        return Err(NlgError::BadTemplate(format!("unresolved placeholder in `{surface}` / `{program}`")));
    }

    let parsed = parse_program(&program)?;
    let mut text = apply_synonyms(&surface, rng);
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    Ok((text, parsed))
}

/// Synonym classes; the first member is the canonical form.
pub struct SynonymDict {
    classes: Vec<Vec<String>>,
}

impl SynonymDict {
    pub fn from_json(json: &str) -> Result<SynonymDict, serde_json::Error> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        let classes = map
            .into_iter()
            .map(|(k, mut vs)| {
                let mut class = vec![k];
                class.append(&mut vs);
                class.dedup();
                class
            })
            .collect();
        Ok(SynonymDict { classes })
    }
}

pub fn default_synonyms() -> &'static SynonymDict {
    static CACHE: OnceLock<SynonymDict> = OnceLock::new();
    CACHE.get_or_init(|| SynonymDict::from_json(SYNONYMS_JSON).expect("embedded synonyms are valid"))
}

fn word_boundary(bytes: &[u8], start: usize, end: usize) -> bool {
    let before_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
    let after_ok = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
    before_ok && after_ok
}

/// Replaces each synonym-eligible token independently with probability 0.5
/// by a uniformly chosen member of its class. Deterministic given the rng.
pub fn apply_synonyms_with(dict: &SynonymDict, text: &str, rng: &mut impl Rng) -> String {
    let mut out = text.to_string();
    // phrase classes first, longest member first, so words inside phrases
    // are handled as a unit
    let mut ordered: Vec<(&Vec<String>, &String)> = Vec::new();
    for class in &dict.classes {
        for member in class {
            ordered.push((class, member));
        }
    }
    ordered.sort_by_key(|(_, m)| std::cmp::Reverse(m.len()));
    for (class, member) in ordered {
        let mut search = 0;
        loop {
            let Some(rel) = out[search..].find(member.as_str()) else { break };
            let start = search + rel;
            let end = start + member.len();
            if word_boundary(out.as_bytes(), start, end) {
                if rng.gen_bool(0.5) {
                    let pick = class.choose(rng).unwrap().clone();
                    out.replace_range(start..end, &pick);
                    search = start + pick.len();
                } else {
                    search = end;
                }
            } else {
                search = start + 1;
            }
        }
    }
    out
}

pub fn apply_synonyms(text: &str, rng: &mut impl Rng) -> String {
    apply_synonyms_with(default_synonyms(), text, rng)
}

fn full_desc(o: &ObjectRecord) -> String {
    format!(
        "{} {} {} {}",
        surface_word(AttrValue::Size(o.size)),
        o.color.label(),
        o.material.label(),
        o.shape.label()
    )
}

/// Deterministic templated rendering of a scene: one existence sentence per
/// object plus one relation sentence per axis pair.
pub fn render_scene_text(scene: &Scene) -> String {
    let mut objects: Vec<&ObjectRecord> = scene.objects.iter().collect();
    objects.sort_by(|a, b| a.id.cmp(&b.id));
    let mut sentences = Vec::new();
    for o in &objects {
        sentences.push(format!("There is a {}.", full_desc(o)));
    }
    let rel = crate::scene::derive_relations(scene);
    for (i, a) in objects.iter().enumerate() {
        for b in objects.iter().skip(i + 1) {
            // a left-of/right-of b: a in rel[b][left] means a is left of b
            if rel[&b.id][&Relation::Left].contains(&a.id) {
                sentences.push(format!(
                    "The {} is to the left of the {}.",
                    full_desc(a),
                    full_desc(b)
                ));
            } else if rel[&b.id][&Relation::Right].contains(&a.id) {
                sentences.push(format!(
                    "The {} is to the right of the {}.",
                    full_desc(a),
                    full_desc(b)
                ));
            }
            if rel[&b.id][&Relation::Front].contains(&a.id) {
                sentences.push(format!(
                    "The {} is in front of the {}.",
                    full_desc(a),
                    full_desc(b)
                ));
            } else if rel[&b.id][&Relation::Behind].contains(&a.id) {
                sentences.push(format!("The {} is behind the {}.", full_desc(a), full_desc(b)));
            }
            if rel[&b.id][&Relation::On].contains(&a.id) {
                sentences.push(format!("The {} is on top of the {}.", full_desc(a), full_desc(b)));
            } else if rel[&a.id][&Relation::On].contains(&b.id) {
                sentences.push(format!("The {} is on top of the {}.", full_desc(b), full_desc(a)));
            }
        }
    }
    sentences.join(" ")
}
