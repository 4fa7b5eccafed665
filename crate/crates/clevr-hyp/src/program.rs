//! The functional-program DSL: function catalog, typed AST, parser,
//! canonical serializer, and type checker.
//!
//! Programs come in two dialects. Question programs evaluate to an answer;
//! action programs evaluate to the updated object set of the scene.

use std::fmt;

use thiserror::Error;

use crate::scene::{AttrValue, Relation};

/// The closed set of types a program expression can have.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueType {
    ObjSet,
    Object,
    Integer,
    Boolean,
    Size,
    Color,
    Material,
    Shape,
    Relation,
}

impl ValueType {
    pub fn label(self) -> &'static str {
        match self {
            ValueType::ObjSet => "objset",
            ValueType::Object => "object",
            ValueType::Integer => "integer",
            ValueType::Boolean => "boolean",
            ValueType::Size => "size",
            ValueType::Color => "color",
            ValueType::Material => "material",
            ValueType::Shape => "shape",
            ValueType::Relation => "relation",
        }
    }

    /// Types a question program may have at its root.
    pub fn is_answer_type(self) -> bool {
        matches!(
            self,
            ValueType::Integer
                | ValueType::Boolean
                | ValueType::Size
                | ValueType::Color
                | ValueType::Material
                | ValueType::Shape
        )
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FnDialect {
    Shared,
    QuestionOnly,
    ActionOnly,
}

#[derive(Debug, PartialEq)]
pub struct FunctionSig {
    pub name: &'static str,
    pub arg_types: &'static [ValueType],
    pub return_type: ValueType,
    pub dialect: FnDialect,
}

use FnDialect::{ActionOnly, QuestionOnly, Shared};
use ValueType::{Boolean, Color, Integer, Material, ObjSet, Object, Shape, Size};

macro_rules! sig {
    ($name:literal, [$($arg:expr),*], $ret:expr, $dialect:expr) => {
        FunctionSig { name: $name, arg_types: &[$($arg),*], return_type: $ret, dialect: $dialect }
    };
}

/// The full function catalog. `make_object` is the constructor form used to
/// denote a not-yet-existing object inside `add`/`add_rel` programs.
pub static CATALOG: &[FunctionSig] = &[
    sig!("scene", [], ObjSet, Shared),
    sig!("unique", [ObjSet], Object, Shared),
    sig!("relate", [Object, ValueType::Relation], ObjSet, Shared),
    sig!("count", [ObjSet], Integer, Shared),
    sig!("exist", [ObjSet], Boolean, Shared),
    sig!("filter_size", [Size, ObjSet], ObjSet, Shared),
    sig!("filter_color", [Color, ObjSet], ObjSet, Shared),
    sig!("filter_material", [Material, ObjSet], ObjSet, Shared),
    sig!("filter_shape", [Shape, ObjSet], ObjSet, Shared),
    sig!("query_size", [Object], Size, Shared),
    sig!("query_color", [Object], Color, Shared),
    sig!("query_material", [Object], Material, Shared),
    sig!("query_shape", [Object], Shape, Shared),
    sig!("same_size", [Object], ObjSet, Shared),
    sig!("same_color", [Object], ObjSet, Shared),
    sig!("same_material", [Object], ObjSet, Shared),
    sig!("same_shape", [Object], ObjSet, Shared),
    sig!("equal_size", [Size, Size], Boolean, Shared),
    sig!("equal_color", [Color, Color], Boolean, Shared),
    sig!("equal_material", [Material, Material], Boolean, Shared),
    sig!("equal_shape", [Shape, Shape], Boolean, Shared),
    sig!("equal_integer", [Integer, Integer], Boolean, Shared),
    sig!("less_than", [Integer, Integer], Boolean, Shared),
    sig!("greater_than", [Integer, Integer], Boolean, Shared),
    sig!("and", [ObjSet, ObjSet], ObjSet, Shared),
    sig!("or", [ObjSet, ObjSet], ObjSet, Shared),
    sig!("not_size", [ObjSet, Size], ObjSet, QuestionOnly),
    sig!("not_color", [ObjSet, Color], ObjSet, QuestionOnly),
    sig!("not_material", [ObjSet, Material], ObjSet, QuestionOnly),
    sig!("not_shape", [ObjSet, Shape], ObjSet, QuestionOnly),
    sig!("add", [ObjSet, Object], ObjSet, ActionOnly),
    sig!("remove", [ObjSet], ObjSet, ActionOnly),
    sig!("add_rel", [ObjSet, Object, Object, ValueType::Relation], ObjSet, ActionOnly),
    sig!("remove_rel", [ObjSet, Object, Object, ValueType::Relation], ObjSet, ActionOnly),
    sig!("change_loc", [ObjSet, Object, Object, ValueType::Relation], ObjSet, ActionOnly),
    sig!("change_size", [ObjSet, Size], ObjSet, ActionOnly),
    sig!("change_color", [ObjSet, Color], ObjSet, ActionOnly),
    sig!("change_material", [ObjSet, Material], ObjSet, ActionOnly),
    sig!("change_shape", [ObjSet, Shape], ObjSet, ActionOnly),
    sig!("make_object", [Size, Color, Material, Shape], Object, ActionOnly),
];

pub fn lookup(name: &str) -> Option<&'static FunctionSig> {
    CATALOG.iter().find(|f| f.name == name)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Arg {
    Node(ProgramNode),
    Value(AttrValue),
    Rel(Relation),
}

impl Arg {
    fn value_type(&self) -> ValueType {
        match self {
            Arg::Node(n) => n.func.return_type,
            Arg::Value(v) => match v {
                AttrValue::Size(_) => ValueType::Size,
                AttrValue::Color(_) => ValueType::Color,
                AttrValue::Material(_) => ValueType::Material,
                AttrValue::Shape(_) => ValueType::Shape,
            },
            Arg::Rel(_) => ValueType::Relation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramNode {
    pub func: &'static FunctionSig,
    pub args: Vec<Arg>,
}

impl ProgramNode {
    pub fn contains_dialect(&self, dialect: FnDialect) -> bool {
        if self.func.dialect == dialect {
            return true;
        }
        self.args.iter().any(|a| match a {
            Arg::Node(n) => n.contains_dialect(dialect),
            _ => false,
        })
    }

    /// Depth-first visit of every call node.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a ProgramNode)) {
        f(self);
        for a in &self.args {
            if let Arg::Node(n) = a {
                n.visit(f);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dialect {
    Action,
    Question,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub root: ProgramNode,
    pub dialect: Dialect,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown function `{name}` at position {pos}")]
    UnknownFunction { pos: usize, name: String },
    #[error("unknown literal `{token}` at position {pos}")]
    UnknownLiteral { pos: usize, token: String },
    #[error("{name} expects {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize },
    #[error("type mismatch in {name} argument {arg_index}: expected {expected}, got {got}")]
    TypeMismatch { name: String, arg_index: usize, expected: ValueType, got: String },
    #[error("invalid program root: {0}")]
    InvalidRoot(String),
    #[error("program mixes question-only and action-only functions")]
    DialectMixed,
}

struct RawCall {
    name: String,
    pos: usize,
    args: Vec<RawArg>,
}

enum RawArg {
    Call(RawCall),
    Ident(String, usize),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Parser<'a> {
        Parser { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn ident(&mut self) -> Result<(String, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ParseError::Syntax { pos: start, msg: "expected identifier".into() });
        }
        Ok((String::from_utf8_lossy(&self.src[start..self.pos]).into_owned(), start))
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos,
                msg: format!("expected `{}`", c as char),
            })
        }
    }

    fn call(&mut self) -> Result<RawCall, ParseError> {
        let (name, pos) = self.ident()?;
        self.expect(b'(')?;
        let mut args = Vec::new();
        if self.peek() != Some(b')') {
            loop {
                args.push(self.arg()?);
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                    }
                    Some(b')') => break,
                    _ => {
                        return Err(ParseError::Syntax {
                            pos: self.pos,
                            msg: "expected `,` or `)`".into(),
                        })
                    }
                }
            }
        }
        self.expect(b')')?;
        Ok(RawCall { name, pos, args })
    }

    fn arg(&mut self) -> Result<RawArg, ParseError> {
        let (name, pos) = self.ident()?;
        if self.peek() == Some(b'(') {
            self.pos = pos;
            Ok(RawArg::Call(self.call()?))
        } else {
            Ok(RawArg::Ident(name, pos))
        }
    }
}

fn check_call(raw: &RawCall) -> Result<ProgramNode, ParseError> {
    let func = lookup(&raw.name)
        .ok_or_else(|| ParseError::UnknownFunction { pos: raw.pos, name: raw.name.clone() })?;
    if raw.args.len() != func.arg_types.len() {
        return Err(ParseError::ArityMismatch {
            name: func.name.to_string(),
            expected: func.arg_types.len(),
            got: raw.args.len(),
        });
    }
    let mut args = Vec::with_capacity(raw.args.len());
    for (i, (raw_arg, &expected)) in raw.args.iter().zip(func.arg_types).enumerate() {
        let arg = match raw_arg {
            RawArg::Call(c) => {
                let node = check_call(c)?;
                Arg::Node(node)
            }
            RawArg::Ident(tok, pos) => match expected {
                ValueType::Size | ValueType::Color | ValueType::Material | ValueType::Shape => {
                    let v = AttrValue::parse(tok).ok_or_else(|| ParseError::UnknownLiteral {
                        pos: *pos,
                        token: tok.clone(),
                    })?;
                    Arg::Value(v)
                }
                ValueType::Relation => {
                    let r = Relation::parse(tok).ok_or_else(|| ParseError::UnknownLiteral {
                        pos: *pos,
                        token: tok.clone(),
                    })?;
                    Arg::Rel(r)
                }
                _ => {
                    return Err(ParseError::TypeMismatch {
                        name: func.name.to_string(),
                        arg_index: i,
                        expected,
                        got: format!("literal `{tok}`"),
                    })
                }
            },
        };
        if arg.value_type() != expected {
            return Err(ParseError::TypeMismatch {
                name: func.name.to_string(),
                arg_index: i,
                expected,
                got: arg.value_type().label().to_string(),
            });
        }
        args.push(arg);
    }
    Ok(ProgramNode { func, args })
}

/// Parses and type-checks a single program expression, inferring its dialect.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(text);
    let raw = p.call()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ParseError::Syntax {
            pos: p.pos,
            msg: "trailing input after expression".into(),
        });
    }
    let root = check_call(&raw)?;
    classify(root)
}

/// Assigns a dialect to a type-checked root node and enforces the
/// per-dialect root-type rules.
pub fn classify(root: ProgramNode) -> Result<Program, ParseError> {
    let has_action = root.contains_dialect(FnDialect::ActionOnly);
    let has_question = root.contains_dialect(FnDialect::QuestionOnly);
    if has_action && has_question {
        return Err(ParseError::DialectMixed);
    }
    if has_action {
        if root.func.return_type != ValueType::ObjSet {
            return Err(ParseError::InvalidRoot(format!(
                "action program must return objset, got {}",
                root.func.return_type
            )));
        }
        Ok(Program { root, dialect: Dialect::Action })
    } else {
        if !root.func.return_type.is_answer_type() {
            return Err(ParseError::InvalidRoot(format!(
                "question program must return an answer type, got {}",
                root.func.return_type
            )));
        }
        Ok(Program { root, dialect: Dialect::Question })
    }
}

fn write_node(node: &ProgramNode, out: &mut String) {
    out.push_str(node.func.name);
    out.push('(');
    for (i, arg) in node.args.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match arg {
            Arg::Node(n) => write_node(n, out),
            Arg::Value(v) => out.push_str(v.label()),
            Arg::Rel(r) => out.push_str(r.label()),
        }
    }
    out.push(')');
}

/// Canonical text form: lowercase names, no whitespace, comma-separated args.
pub fn serialize_program(p: &Program) -> String {
    let mut out = String::new();
    write_node(&p.root, &mut out);
    out
}

/// Returns the root type of a structurally complete program.
pub fn type_check(p: &Program) -> ValueType {
    p.root.func.return_type
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_program(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_question_program() {
        let p = parse_program("count(scene())").unwrap();
        assert_eq!(p.dialect, Dialect::Question);
        assert_eq!(type_check(&p), ValueType::Integer);
        assert_eq!(serialize_program(&p), "count(scene())");
    }

    #[test]
    fn paint_example_is_a_valid_action_program() {
        let p = parse_program(
            "change_color(filter_size(small,filter_color(green,filter_shape(sphere,scene()))),cyan)",
        )
        .unwrap();
        assert_eq!(p.dialect, Dialect::Action);
        assert_eq!(type_check(&p), ValueType::ObjSet);
    }

    #[test]
    fn count_of_unique_is_a_type_error() {
        let err = parse_program("count(unique(scene()))").unwrap_err();
        assert!(matches!(err, ParseError::TypeMismatch { .. }));
    }

    #[test]
    fn and_of_integer_is_a_type_error() {
        let err = parse_program("and(count(scene()),scene())").unwrap_err();
        assert!(matches!(err, ParseError::TypeMismatch { .. }));
    }

    #[test]
    fn question_examples_type_check() {
        let p = parse_program("equal_integer(count(scene()),count(scene()))").unwrap();
        assert_eq!(type_check(&p), ValueType::Boolean);
        // a bare objset root is not a valid program in either dialect
        let err = parse_program("relate(unique(filter_color(red,scene())),left)").unwrap_err();
        assert!(matches!(err, ParseError::InvalidRoot(_)));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_program("count( filter_color( red , scene( ) ) )").unwrap();
        let b = parse_program("count(filter_color(red,scene()))").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_function_and_literal_are_distinct_errors() {
        assert!(matches!(
            parse_program("frobnicate(scene())").unwrap_err(),
            ParseError::UnknownFunction { .. }
        ));
        assert!(matches!(
            parse_program("filter_color(pink,scene())").unwrap_err(),
            ParseError::UnknownLiteral { .. }
        ));
    }

    #[test]
    fn dialect_purity_is_enforced() {
        // question-only not_* combined with action-only change_* must fail
        let err = parse_program("change_color(not_size(scene(),small),red)").unwrap_err();
        assert_eq!(err, ParseError::DialectMixed);
    }

    #[test]
    fn serialize_parse_round_trip_is_identity() {
        let texts = [
            "count(or(filter_color(brown,scene()),filter_size(small,scene())))",
            "query_shape(unique(filter_color(red,scene())))",
            "add_rel(scene(),make_object(small,blue,metal,cylinder),unique(filter_shape(cube,scene())),right)",
            "exist(not_color(filter_shape(cube,filter_material(rubber,scene())),green))",
        ];
        for t in texts {
            let p = parse_program(t).unwrap();
            assert_eq!(serialize_program(&p), *t);
            assert_eq!(parse_program(&serialize_program(&p)).unwrap(), p);
        }
    }
}
