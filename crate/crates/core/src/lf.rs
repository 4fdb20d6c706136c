//! Lambda-calculus logical forms: representation, parsing, normalization,
//! semantic typing, and shell construction.
//!
//! Terms are immutable values. Stored terms are closed and in beta-normal
//! form; equality everywhere in the learner is alpha-equivalence of
//! beta-normal forms, implemented by comparing canonical renderings (bound
//! variables renamed to `x0`, `x1`, ... in traversal order).

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// CHILDES-style part-of-speech tag carried by every constant.
///
/// The inventory is fixed. `Q` is the reserved question marker and
/// `pro:int` tags the WH items; both are treated specially downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PosTag {
    Adj,
    Adv,
    AdvInt,
    AdvTem,
    Aux,
    Conj,
    Coord,
    Cop,
    Det,
    DetArt,
    DetDem,
    DetInt,
    DetNum,
    DetPoss,
    Mod,
    ModAux,
    N,
    NPt,
    NGerund,
    NLet,
    NProp,
    Neg,
    Prep,
    ProDem,
    ProDet,
    ProIndef,
    ProInt,
    ProObj,
    ProPer,
    ProPoss,
    ProRefl,
    ProSub,
    Qn,
    V,
    Q,
}

impl PosTag {
    pub fn parse(s: &str) -> Option<PosTag> {
        use PosTag::*;
        Some(match s {
            "adj" => Adj,
            "adv" => Adv,
            "adv:int" => AdvInt,
            "adv:tem" => AdvTem,
            "aux" => Aux,
            "conj" => Conj,
            "coord" => Coord,
            "cop" => Cop,
            "det" => Det,
            "det:art" => DetArt,
            "det:dem" => DetDem,
            "det:int" => DetInt,
            "det:num" => DetNum,
            "det:poss" => DetPoss,
            "mod" => Mod,
            "mod:aux" => ModAux,
            "n" => N,
            "n:pt" => NPt,
            "n:gerund" => NGerund,
            "n:let" => NLet,
            "n:prop" => NProp,
            "neg" => Neg,
            "prep" => Prep,
            "pro:dem" => ProDem,
            "pro:det" => ProDet,
            "pro:indef" => ProIndef,
            "pro:int" => ProInt,
            "pro:obj" => ProObj,
            "pro:per" => ProPer,
            "pro:poss" => ProPoss,
            "pro:refl" => ProRefl,
            "pro:sub" => ProSub,
            "qn" => Qn,
            "v" => V,
            "Q" => Q,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        use PosTag::*;
        match self {
            Adj => "adj",
            Adv => "adv",
            AdvInt => "adv:int",
            AdvTem => "adv:tem",
            Aux => "aux",
            Conj => "conj",
            Coord => "coord",
            Cop => "cop",
            Det => "det",
            DetArt => "det:art",
            DetDem => "det:dem",
            DetInt => "det:int",
            DetNum => "det:num",
            DetPoss => "det:poss",
            Mod => "mod",
            ModAux => "mod:aux",
            N => "n",
            NPt => "n:pt",
            NGerund => "n:gerund",
            NLet => "n:let",
            NProp => "n:prop",
            Neg => "neg",
            Prep => "prep",
            ProDem => "pro:dem",
            ProDet => "pro:det",
            ProIndef => "pro:indef",
            ProInt => "pro:int",
            ProObj => "pro:obj",
            ProPer => "pro:per",
            ProPoss => "pro:poss",
            ProRefl => "pro:refl",
            ProSub => "pro:sub",
            Qn => "qn",
            V => "v",
            Q => "Q",
        }
    }

    /// True for the WH-bearing interrogative pronoun tag.
    pub fn is_wh(&self) -> bool {
        matches!(self, PosTag::ProInt)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A lambda-calculus logical form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(PosTag, String),
    App(Box<Term>, Box<Term>),
    Lam(String, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_owned())
    }

    pub fn constant(tag: PosTag, symbol: &str) -> Term {
        Term::Const(tag, symbol.to_owned())
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    /// Curried application of `f` to several arguments, left to right.
    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }

    pub fn lam(v: &str, body: Term) -> Term {
        Term::Lam(v.to_owned(), Box::new(body))
    }

    /// Number of leaf occurrences (variables plus constants); the size
    /// measure used by the logical-form base distribution.
    pub fn leaf_count(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(..) => 1,
            Term::App(f, a) => f.leaf_count() + a.leaf_count(),
            Term::Lam(_, b) => b.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(..) => 1,
            Term::App(f, a) => 1 + f.node_count() + a.node_count(),
            Term::Lam(_, b) => 1 + b.node_count(),
        }
    }

    /// Maximum lambda-binder nesting anywhere in the term.
    pub fn lambda_depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(..) => 0,
            Term::App(f, a) => f.lambda_depth().max(a.lambda_depth()),
            Term::Lam(_, b) => 1 + b.lambda_depth(),
        }
    }

    pub fn free_vars(&self) -> alloc::collections::BTreeSet<String> {
        let mut out = alloc::collections::BTreeSet::new();
        self.free_vars_into(&mut out, &mut Vec::new());
        out
    }

    fn free_vars_into(
        &self,
        out: &mut alloc::collections::BTreeSet<String>,
        bound: &mut Vec<String>,
    ) {
        match self {
            Term::Var(v) => {
                if !bound.iter().any(|b| b == v) {
                    out.insert(v.clone());
                }
            }
            Term::Const(..) => {}
            Term::App(f, a) => {
                f.free_vars_into(out, bound);
                a.free_vars_into(out, bound);
            }
            Term::Lam(v, b) => {
                bound.push(v.clone());
                b.free_vars_into(out, bound);
                bound.pop();
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// True if any constant carries the WH-bearing `pro:int` tag.
    pub fn contains_wh(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(tag, _) => tag.is_wh(),
            Term::App(f, a) => f.contains_wh() || a.contains_wh(),
            Term::Lam(_, b) => b.contains_wh(),
        }
    }

    /// True if any constant carries the given tag.
    pub fn contains_tag(&self, t: PosTag) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(tag, _) => *tag == t,
            Term::App(f, a) => f.contains_tag(t) || a.contains_tag(t),
            Term::Lam(_, b) => b.contains_tag(t),
        }
    }

    /// Canonical rendering with binders renamed to `x0`, `x1`, ... in
    /// traversal order. Alpha-equivalent terms render identically.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut counter = 0usize;
        render_term(self, &mut Vec::new(), &mut counter, &mut out, false);
        out
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn render_term(
    t: &Term,
    env: &mut Vec<(String, String)>,
    counter: &mut usize,
    out: &mut String,
    paren_lam: bool,
) {
    match t {
        Term::Var(v) => {
            let name = env
                .iter()
                .rev()
                .find(|(orig, _)| orig == v)
                .map(|(_, canon)| canon.clone())
                .unwrap_or_else(|| v.clone());
            out.push_str(&name);
        }
        Term::Const(tag, sym) => {
            out.push_str(tag.as_str());
            out.push('|');
            out.push_str(sym);
        }
        Term::App(..) => {
            let mut spine = Vec::new();
            let mut cur = t;
            while let Term::App(f, a) = cur {
                spine.push(a.as_ref());
                cur = f.as_ref();
            }
            spine.reverse();
            out.push('(');
            render_term(cur, env, counter, out, true);
            for arg in spine {
                out.push(' ');
                render_term(arg, env, counter, out, true);
            }
            out.push(')');
        }
        Term::Lam(v, b) => {
            if paren_lam {
                out.push('(');
            }
            let canon = format!("x{}", *counter);
            *counter += 1;
            out.push_str("lam ");
            out.push_str(&canon);
            out.push('.');
            env.push((v.clone(), canon));
            render_term(b, env, counter, out, false);
            env.pop();
            if paren_lam {
                out.push(')');
            }
        }
    }
}

/// Alpha-equivalence of two terms.
pub fn alpha_equal(a: &Term, b: &Term) -> bool {
    a.canonical() == b.canonical()
}

/// Human-readable canonical text; inverse of [`parse_lf`] up to alpha.
pub fn render_lf(t: &Term) -> String {
    t.canonical()
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LfError {
    /// Malformed concrete syntax, with a byte offset into the input.
    Syntax { pos: usize, message: String },
    /// A constant tag outside the inventory.
    UnknownTag { pos: usize, tag: String },
    /// A variable occurrence with no enclosing binder.
    UnboundVar { name: String },
}

impl fmt::Display for LfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LfError::Syntax { pos, message } => {
                write!(f, "syntax error at byte {}: {}", pos, message)
            }
            LfError::UnknownTag { pos, tag } => {
                write!(f, "unknown POS tag `{}` at byte {}", tag, pos)
            }
            LfError::UnboundVar { name } => write!(f, "unbound variable `{}`", name),
        }
    }
}

impl core::error::Error for LfError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeError {
    /// Tag has no semantic type (the "not considered" rows) or no shell
    /// marking.
    UnmappedTag(PosTag),
    /// No consistent typing exists.
    Mismatch(String),
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeError::UnmappedTag(tag) => write!(f, "tag `{}` has no mapping", tag),
            TypeError::Mismatch(m) => write!(f, "type clash: {}", m),
        }
    }
}

impl core::error::Error for TypeError {}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parse the concrete logical-form syntax.
///
/// Grammar: `term := var | const | '(' term+ ')' | 'lam' var '.' term` with
/// curried, left-associative application; `const := tag '|' symbol`. A
/// single parenthesized term is plain grouping (needed to pass a lambda as a
/// non-final argument). The result is checked closed and beta-normalized.
pub fn parse_lf(text: &str) -> Result<Term, LfError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let t = p.term()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(LfError::Syntax {
            pos: p.pos,
            message: "trailing input".to_string(),
        });
    }
    if let Some(v) = t.free_vars().into_iter().next() {
        return Err(LfError::UnboundVar { name: v });
    }
    Ok(beta_reduce(&t))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn word(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b'.' {
                break;
            }
            self.pos += 1;
        }
        core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn term(&mut self) -> Result<Term, LfError> {
        self.skip_ws();
        match self.peek() {
            None => Err(LfError::Syntax {
                pos: self.pos,
                message: "unexpected end of input".to_string(),
            }),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        None => {
                            return Err(LfError::Syntax {
                                pos: self.pos,
                                message: "unclosed parenthesis".to_string(),
                            })
                        }
                        _ => items.push(self.term()?),
                    }
                }
                if items.is_empty() {
                    return Err(LfError::Syntax {
                        pos: self.pos,
                        message: "empty parentheses".to_string(),
                    });
                }
                let mut it = items.into_iter();
                let head = it.next().unwrap();
                Ok(Term::apps(head, it))
            }
            Some(b')') => Err(LfError::Syntax {
                pos: self.pos,
                message: "unexpected `)`".to_string(),
            }),
            Some(_) => {
                let start = self.pos;
                let w = self.word();
                if w.is_empty() {
                    return Err(LfError::Syntax {
                        pos: start,
                        message: "expected a term".to_string(),
                    });
                }
                if w == "lam" {
                    self.skip_ws();
                    let vstart = self.pos;
                    let v = self.word().to_owned();
                    if v.is_empty() || !is_identifier(&v) {
                        return Err(LfError::Syntax {
                            pos: vstart,
                            message: "expected a variable after `lam`".to_string(),
                        });
                    }
                    self.skip_ws();
                    if self.peek() != Some(b'.') {
                        return Err(LfError::Syntax {
                            pos: self.pos,
                            message: "expected `.` after binder".to_string(),
                        });
                    }
                    self.pos += 1;
                    let body = self.term()?;
                    return Ok(Term::Lam(v, Box::new(body)));
                }
                if let Some(bar) = w.find('|') {
                    let (tag, sym) = (&w[..bar], &w[bar + 1..]);
                    if sym.is_empty() {
                        return Err(LfError::Syntax {
                            pos: start,
                            message: "empty constant symbol".to_string(),
                        });
                    }
                    let Some(tag) = PosTag::parse(tag) else {
                        return Err(LfError::UnknownTag {
                            pos: start,
                            tag: tag.to_owned(),
                        });
                    };
                    return Ok(Term::Const(tag, sym.to_owned()));
                }
                if !is_identifier(w) {
                    return Err(LfError::Syntax {
                        pos: start,
                        message: format!("invalid token `{}`", w),
                    });
                }
                Ok(Term::Var(w.to_owned()))
            }
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Beta reduction
// ---------------------------------------------------------------------------

const REDUCTION_GUARD: usize = 100_000;

/// Capture-avoiding beta-normalization. The terms in play are simply typed,
/// so this terminates; the step guard only trips on malformed input.
pub fn beta_reduce(t: &Term) -> Term {
    let mut steps = 0usize;
    normalize(t, &mut steps)
}

fn normalize(t: &Term, steps: &mut usize) -> Term {
    *steps += 1;
    assert!(
        *steps < REDUCTION_GUARD,
        "beta reduction exceeded step guard; malformed input"
    );
    match t {
        Term::Var(_) | Term::Const(..) => t.clone(),
        Term::Lam(v, b) => Term::Lam(v.clone(), Box::new(normalize(b, steps))),
        Term::App(f, a) => {
            let f = normalize(f, steps);
            if let Term::Lam(v, body) = f {
                let substituted = substitute(&body, &v, a);
                normalize(&substituted, steps)
            } else {
                Term::App(Box::new(f), Box::new(normalize(a, steps)))
            }
        }
    }
}

/// Capture-avoiding substitution of `value` for `var` in `t`.
pub fn substitute(t: &Term, var: &str, value: &Term) -> Term {
    match t {
        Term::Var(v) => {
            if v == var {
                value.clone()
            } else {
                t.clone()
            }
        }
        Term::Const(..) => t.clone(),
        Term::App(f, a) => Term::App(
            Box::new(substitute(f, var, value)),
            Box::new(substitute(a, var, value)),
        ),
        Term::Lam(v, b) => {
            if v == var {
                t.clone()
            } else if value.free_vars().contains(v) {
                let mut avoid = value.free_vars();
                avoid.extend(b.free_vars());
                avoid.insert(var.to_owned());
                let fresh = fresh_name(v, &avoid);
                let renamed = substitute(b, v, &Term::Var(fresh.clone()));
                Term::Lam(fresh, Box::new(substitute(&renamed, var, value)))
            } else {
                Term::Lam(v.clone(), Box::new(substitute(b, var, value)))
            }
        }
    }
}

fn fresh_name(base: &str, avoid: &alloc::collections::BTreeSet<String>) -> String {
    let mut i = 1usize;
    loop {
        let cand = format!("{}_{}", base, i);
        if !avoid.contains(&cand) {
            return cand;
        }
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Semantic types
// ---------------------------------------------------------------------------

/// Montagovian semantic type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemType {
    E,
    T,
    Fn(Box<SemType>, Box<SemType>),
}

impl SemType {
    pub fn func(arg: SemType, result: SemType) -> SemType {
        SemType::Fn(Box::new(arg), Box::new(result))
    }

    /// e.g. `<e,<e,t>>` has arity 2.
    pub fn arity(&self) -> usize {
        match self {
            SemType::Fn(_, r) => 1 + r.arity(),
            _ => 0,
        }
    }
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemType::E => f.write_str("e"),
            SemType::T => f.write_str("t"),
            SemType::Fn(a, r) => write!(f, "<{},{}>", a, r),
        }
    }
}

/// Candidate semantic types for a tag, in preference order. Empty for the
/// "not considered" tags. `None` marks the schematic conjunction type
/// `<X,<X,X>>`, instantiated by unification.
fn tag_type_templates(tag: PosTag) -> &'static [TypeTemplate] {
    use PosTag::*;
    use TypeTemplate as T;
    const E: T = T::E;
    match tag {
        Adj | Prep => &[T::EtEt],
        Adv | AdvInt | AdvTem | Aux => &[],
        Conj | Coord => &[T::Schematic],
        Cop | V => &[T::EEt, T::Et, T::EEEt],
        Det | DetArt | DetDem | DetInt | DetNum | DetPoss | ProDet | ModAux => &[T::EtE],
        Mod | Q => &[T::Tt],
        N | NPt | ProPoss => &[T::Et],
        Qn => &[T::Et, T::EtE],
        NGerund | NLet | NProp | ProDem | ProIndef | ProInt | ProObj | ProPer | ProRefl
        | ProSub => &[E],
        Neg => &[T::Tt, T::EtEt, T::EEtEEt],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TypeTemplate {
    E,
    Et,
    EEt,
    EEEt,
    EtE,
    EtEt,
    EEtEEt,
    Tt,
    Schematic,
}

// Internal inference type with metavariables.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Ty {
    E,
    T,
    Var(usize),
    Fn(Box<Ty>, Box<Ty>),
}

impl Ty {
    fn func(a: Ty, r: Ty) -> Ty {
        Ty::Fn(Box::new(a), Box::new(r))
    }
}

fn template_ty(t: TypeTemplate, fresh: &mut impl FnMut() -> Ty) -> Ty {
    use TypeTemplate::*;
    let et = || Ty::func(Ty::E, Ty::T);
    match t {
        E => Ty::E,
        Et => et(),
        EEt => Ty::func(Ty::E, et()),
        EEEt => Ty::func(Ty::E, Ty::func(Ty::E, et())),
        EtE => Ty::func(et(), Ty::E),
        EtEt => Ty::func(et(), et()),
        EEtEEt => Ty::func(Ty::func(Ty::E, et()), Ty::func(Ty::E, et())),
        Tt => Ty::func(Ty::T, Ty::T),
        Schematic => {
            let x = fresh();
            Ty::func(x.clone(), Ty::func(x.clone(), x))
        }
    }
}

struct Unifier {
    bindings: Vec<Option<Ty>>,
}

impl Unifier {
    fn new() -> Self {
        Unifier {
            bindings: Vec::new(),
        }
    }

    fn fresh(&mut self) -> Ty {
        self.bindings.push(None);
        Ty::Var(self.bindings.len() - 1)
    }

    fn resolve(&self, ty: &Ty) -> Ty {
        match ty {
            Ty::Var(i) => match &self.bindings[*i] {
                Some(t) => self.resolve(&t.clone()),
                None => ty.clone(),
            },
            Ty::Fn(a, r) => Ty::func(self.resolve(a), self.resolve(r)),
            _ => ty.clone(),
        }
    }

    fn occurs(&self, v: usize, ty: &Ty) -> bool {
        match ty {
            Ty::Var(i) => {
                if *i == v {
                    return true;
                }
                match &self.bindings[*i] {
                    Some(t) => self.occurs(v, &t.clone()),
                    None => false,
                }
            }
            Ty::Fn(a, r) => self.occurs(v, a) || self.occurs(v, r),
            _ => false,
        }
    }

    fn unify(&mut self, a: &Ty, b: &Ty) -> bool {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (Ty::Var(i), Ty::Var(j)) if i == j => true,
            (Ty::Var(i), other) | (other, Ty::Var(i)) => {
                if self.occurs(*i, other) {
                    return false;
                }
                self.bindings[*i] = Some(other.clone());
                true
            }
            (Ty::E, Ty::E) | (Ty::T, Ty::T) => true,
            (Ty::Fn(a1, r1), Ty::Fn(a2, r2)) => self.unify(a1, a2) && self.unify(r1, r2),
            _ => false,
        }
    }

    /// Ground a type, defaulting unresolved metavariables to `e`.
    fn ground(&self, ty: &Ty) -> SemType {
        match self.resolve(ty) {
            Ty::E | Ty::Var(_) => SemType::E,
            Ty::T => SemType::T,
            Ty::Fn(a, r) => SemType::func(self.ground(&a), self.ground(&r)),
        }
    }
}

/// Per-node type annotation, parallel to the term structure.
#[derive(Debug, Clone)]
pub(crate) enum TypeTree {
    Leaf(SemType),
    App(SemType, Box<TypeTree>, Box<TypeTree>),
    Lam(SemType, Box<TypeTree>),
}

impl TypeTree {
    pub(crate) fn ty(&self) -> &SemType {
        match self {
            TypeTree::Leaf(t) | TypeTree::App(t, ..) | TypeTree::Lam(t, ..) => t,
        }
    }
}

// Shadow of TypeTree before grounding.
enum TyTree {
    Leaf(Ty),
    App(Ty, Box<TyTree>, Box<TyTree>),
    Lam(Ty, Box<TyTree>),
}

impl TyTree {
    fn ty(&self) -> &Ty {
        match self {
            TyTree::Leaf(t) | TyTree::App(t, ..) | TyTree::Lam(t, ..) => t,
        }
    }

    fn ground(&self, u: &Unifier) -> TypeTree {
        match self {
            TyTree::Leaf(t) => TypeTree::Leaf(u.ground(t)),
            TyTree::App(t, f, a) => {
                TypeTree::App(u.ground(t), Box::new(f.ground(u)), Box::new(a.ground(u)))
            }
            TyTree::Lam(t, b) => TypeTree::Lam(u.ground(t), Box::new(b.ground(u))),
        }
    }
}

fn collect_constants(t: &Term, out: &mut Vec<PosTag>) {
    match t {
        Term::Var(_) => {}
        Term::Const(tag, _) => out.push(*tag),
        Term::App(f, a) => {
            collect_constants(f, out);
            collect_constants(a, out);
        }
        Term::Lam(_, b) => collect_constants(b, out),
    }
}

fn build_tree(
    t: &Term,
    env: &mut Vec<(String, Ty)>,
    u: &mut Unifier,
    assign: &[TypeTemplate],
    next_const: &mut usize,
) -> Result<TyTree, TypeError> {
    match t {
        Term::Var(v) => {
            let ty = env
                .iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|(_, ty)| ty.clone())
                .ok_or_else(|| TypeError::Mismatch(format!("unbound variable `{}`", v)))?;
            Ok(TyTree::Leaf(ty))
        }
        Term::Const(..) => {
            let template = assign[*next_const];
            *next_const += 1;
            let ty = template_ty(template, &mut || u.fresh());
            Ok(TyTree::Leaf(ty))
        }
        Term::App(f, a) => {
            let ft = build_tree(f, env, u, assign, next_const)?;
            let at = build_tree(a, env, u, assign, next_const)?;
            let result = u.fresh();
            let wanted = Ty::func(at.ty().clone(), result.clone());
            if !u.unify(ft.ty(), &wanted) {
                return Err(TypeError::Mismatch(
                    "function does not accept its argument".to_string(),
                ));
            }
            Ok(TyTree::App(result, Box::new(ft), Box::new(at)))
        }
        Term::Lam(v, b) => {
            let arg = u.fresh();
            env.push((v.clone(), arg.clone()));
            let bt = build_tree(b, env, u, assign, next_const)?;
            env.pop();
            let ty = Ty::func(arg, bt.ty().clone());
            Ok(TyTree::Lam(ty, Box::new(bt)))
        }
    }
}

fn annotate_inner(t: &Term, expected: Option<&SemType>) -> Result<TypeTree, TypeError> {
    let mut tags = Vec::new();
    collect_constants(t, &mut tags);
    let mut candidate_lists: Vec<&'static [TypeTemplate]> = Vec::with_capacity(tags.len());
    for tag in &tags {
        let cands = tag_type_templates(*tag);
        if cands.is_empty() {
            return Err(TypeError::UnmappedTag(*tag));
        }
        candidate_lists.push(cands);
    }
    let mut assignment: Vec<TypeTemplate> = candidate_lists.iter().map(|c| c[0]).collect();
    let mut failure = TypeError::Mismatch("no consistent typing".to_string());
    loop {
        let mut u = Unifier::new();
        let mut next_const = 0usize;
        match build_tree(t, &mut Vec::new(), &mut u, &assignment, &mut next_const) {
            Ok(tree) => {
                let ok = match expected {
                    Some(want) => {
                        let want_ty = sem_to_ty(want);
                        u.unify(tree.ty(), &want_ty)
                    }
                    None => true,
                };
                if ok {
                    return Ok(tree.ground(&u));
                }
                failure = TypeError::Mismatch("term does not match expected type".to_string());
            }
            Err(e) => failure = e,
        }
        // advance to the next assignment in the candidate product
        let mut i = assignment.len();
        loop {
            if i == 0 {
                return Err(failure);
            }
            i -= 1;
            let pos = candidate_lists[i]
                .iter()
                .position(|c| *c == assignment[i])
                .unwrap();
            if pos + 1 < candidate_lists[i].len() {
                assignment[i] = candidate_lists[i][pos + 1];
                for (j, a) in assignment.iter_mut().enumerate().skip(i + 1) {
                    *a = candidate_lists[j][0];
                }
                break;
            }
        }
    }
}

fn sem_to_ty(t: &SemType) -> Ty {
    match t {
        SemType::E => Ty::E,
        SemType::T => Ty::T,
        SemType::Fn(a, r) => Ty::func(sem_to_ty(a), sem_to_ty(r)),
    }
}

/// Principal semantic type of a closed term. Ambiguous constants take their
/// first candidate type that yields a consistent typing; free type
/// metavariables default to `e`.
pub fn sem_type_of(t: &Term) -> Result<SemType, TypeError> {
    annotate_inner(t, None).map(|tree| tree.ty().clone())
}

/// Does some consistent typing of `t` have exactly the expected type?
pub fn check_sem_type(t: &Term, expected: &SemType) -> bool {
    annotate_inner(t, Some(expected)).is_ok()
}

pub(crate) fn annotate(t: &Term) -> Result<TypeTree, TypeError> {
    annotate_inner(t, None)
}

pub(crate) fn annotate_with(t: &Term, expected: &SemType) -> Result<TypeTree, TypeError> {
    annotate_inner(t, Some(expected))
}

// ---------------------------------------------------------------------------
// Eta-long form
// ---------------------------------------------------------------------------

/// Rewrite a beta-normal term into its eta-long form (every function-typed
/// position is a lambda or fully applied). Keeps the leaf statistics for a
/// given role identical across derivations, e.g. the transitive verb chunk
/// always surfaces as `lam x.lam y.(v x y)` rather than sometimes as the
/// bare constant.
pub fn eta_expand(t: &Term) -> Result<Term, TypeError> {
    let tree = annotate(t)?;
    let mut counter = 0usize;
    Ok(eta_rec(t, &tree, &mut counter))
}

pub(crate) fn eta_expand_with(t: &Term, expected: &SemType) -> Result<Term, TypeError> {
    let tree = annotate_with(t, expected)?;
    let mut counter = 0usize;
    Ok(eta_rec(t, &tree, &mut counter))
}

fn eta_rec(t: &Term, tt: &TypeTree, counter: &mut usize) -> Term {
    if let (Term::Lam(v, b), TypeTree::Lam(_, bt)) = (t, tt) {
        return Term::Lam(v.clone(), Box::new(eta_rec(b, bt, counter)));
    }
    // application spine (or a bare leaf): eta-expand arguments, then wrap
    // lambdas for any remaining arity
    let rebuilt = eta_spine(t, tt, counter);
    let mut wraps: Vec<String> = Vec::new();
    let mut cur = tt.ty();
    while let SemType::Fn(_, r) = cur {
        let name = format!("_e{}", *counter);
        *counter += 1;
        wraps.push(name);
        cur = r;
    }
    if wraps.is_empty() {
        return rebuilt;
    }
    let body = Term::apps(rebuilt, wraps.iter().map(|w| Term::Var(w.clone())));
    wraps
        .into_iter()
        .rev()
        .fold(body, |acc, v| Term::Lam(v, Box::new(acc)))
}

fn eta_spine(t: &Term, tt: &TypeTree, counter: &mut usize) -> Term {
    match (t, tt) {
        (Term::App(f, a), TypeTree::App(_, ft, at)) => Term::App(
            Box::new(eta_spine(f, ft, counter)),
            Box::new(eta_rec(a, at, counter)),
        ),
        _ => t.clone(),
    }
}

// ---------------------------------------------------------------------------
// Shell logical forms
// ---------------------------------------------------------------------------

/// Functional marking replacing a constant in a shell logical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Marking {
    VConst,
    Entity,
    Quant,
    Noun,
    Adj,
    Prep,
    Neg,
    Raise,
    Aux,
    Connect,
    Cop,
    Wh,
    Q,
}

impl Marking {
    pub fn as_str(&self) -> &'static str {
        use Marking::*;
        match self {
            VConst => "vconst",
            Entity => "entity",
            Quant => "quant",
            Noun => "noun",
            Adj => "adj",
            Prep => "prep",
            Neg => "neg",
            Raise => "raise",
            Aux => "aux",
            Connect => "connect",
            Cop => "cop",
            Wh => "WH",
            Q => "Q",
        }
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shell marking for a tag, if one exists.
pub fn shell_marking(tag: PosTag) -> Option<Marking> {
    use PosTag::*;
    Some(match tag {
        Adj => Marking::Adj,
        Adv | AdvInt | AdvTem => return None,
        Aux => Marking::Aux,
        Conj | Coord => Marking::Connect,
        Cop => Marking::Cop,
        Det | DetArt | DetDem | DetInt | DetNum | DetPoss | ProDet | ProPoss | ModAux | Qn => {
            Marking::Quant
        }
        Mod => Marking::Raise,
        N | NPt => Marking::Noun,
        NGerund | NLet | NProp | ProDem | ProIndef | ProObj | ProPer | ProRefl | ProSub => {
            Marking::Entity
        }
        Neg => Marking::Neg,
        Prep => Marking::Prep,
        ProInt => Marking::Wh,
        V => Marking::VConst,
        Q => Marking::Q,
    })
}

/// A term with every constant replaced by its functional marking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShellTerm {
    Var(String),
    Mark(Marking),
    App(Box<ShellTerm>, Box<ShellTerm>),
    Lam(String, Box<ShellTerm>),
}

impl ShellTerm {
    /// Number of leaf occurrences (variables plus markings).
    pub fn leaf_count(&self) -> usize {
        match self {
            ShellTerm::Var(_) | ShellTerm::Mark(_) => 1,
            ShellTerm::App(f, a) => f.leaf_count() + a.leaf_count(),
            ShellTerm::Lam(_, b) => b.leaf_count(),
        }
    }

    /// Canonical rendering; alpha-equivalent shells render identically.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut counter = 0usize;
        render_shell(self, &mut Vec::new(), &mut counter, &mut out, false);
        out
    }
}

impl fmt::Display for ShellTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn render_shell(
    t: &ShellTerm,
    env: &mut Vec<(String, String)>,
    counter: &mut usize,
    out: &mut String,
    paren_lam: bool,
) {
    match t {
        ShellTerm::Var(v) => {
            let name = env
                .iter()
                .rev()
                .find(|(orig, _)| orig == v)
                .map(|(_, canon)| canon.clone())
                .unwrap_or_else(|| v.clone());
            out.push_str(&name);
        }
        ShellTerm::Mark(m) => out.push_str(m.as_str()),
        ShellTerm::App(..) => {
            let mut spine = Vec::new();
            let mut cur = t;
            while let ShellTerm::App(f, a) = cur {
                spine.push(a.as_ref());
                cur = f.as_ref();
            }
            spine.reverse();
            out.push('(');
            render_shell(cur, env, counter, out, true);
            for arg in spine {
                out.push(' ');
                render_shell(arg, env, counter, out, true);
            }
            out.push(')');
        }
        ShellTerm::Lam(v, b) => {
            if paren_lam {
                out.push('(');
            }
            let canon = format!("x{}", *counter);
            *counter += 1;
            out.push_str("lam ");
            out.push_str(&canon);
            out.push('.');
            env.push((v.clone(), canon));
            render_shell(b, env, counter, out, false);
            env.pop();
            if paren_lam {
                out.push(')');
            }
        }
    }
}

/// Replace every constant by its marking, preserving structure and variables.
pub fn shellify(t: &Term) -> Result<ShellTerm, TypeError> {
    match t {
        Term::Var(v) => Ok(ShellTerm::Var(v.clone())),
        Term::Const(tag, _) => shell_marking(*tag)
            .map(ShellTerm::Mark)
            .ok_or(TypeError::UnmappedTag(*tag)),
        Term::App(f, a) => Ok(ShellTerm::App(
            Box::new(shellify(f)?),
            Box::new(shellify(a)?),
        )),
        Term::Lam(v, b) => Ok(ShellTerm::Lam(v.clone(), Box::new(shellify(b)?))),
    }
}

// ---------------------------------------------------------------------------
// Subterm enumeration
// ---------------------------------------------------------------------------

/// A path from the root of a term to a node: 0 descends into the function,
/// 1 into the argument, 2 under a binder.
pub type TermPath = Vec<u8>;

/// All closed subterms of `t` (no externally bound free variables), grouped
/// by alpha-equivalence with the set of their occurrence paths. Includes the
/// term itself. Sorted by canonical key.
pub fn enumerate_subterms(t: &Term) -> Vec<(Term, Vec<TermPath>)> {
    let mut groups: alloc::collections::BTreeMap<String, (Term, Vec<TermPath>)> =
        alloc::collections::BTreeMap::new();
    let mut path = Vec::new();
    collect_subterms(t, &mut path, &mut groups);
    groups.into_values().collect()
}

fn collect_subterms(
    t: &Term,
    path: &mut TermPath,
    groups: &mut alloc::collections::BTreeMap<String, (Term, Vec<TermPath>)>,
) {
    if t.is_closed() {
        groups
            .entry(t.canonical())
            .or_insert_with(|| (t.clone(), Vec::new()))
            .1
            .push(path.clone());
    }
    match t {
        Term::Var(_) | Term::Const(..) => {}
        Term::App(f, a) => {
            path.push(0);
            collect_subterms(f, path, groups);
            path.pop();
            path.push(1);
            collect_subterms(a, path, groups);
            path.pop();
        }
        Term::Lam(_, b) => {
            path.push(2);
            collect_subterms(b, path, groups);
            path.pop();
        }
    }
}

/// Subterm of `t` at `path` (must exist).
pub fn subterm_at<'a>(t: &'a Term, path: &[u8]) -> &'a Term {
    let mut cur = t;
    for step in path {
        cur = match (cur, step) {
            (Term::App(f, _), 0) => f,
            (Term::App(_, a), 1) => a,
            (Term::Lam(_, b), 2) => b,
            _ => panic!("invalid term path"),
        };
    }
    cur
}

/// Replace the subterms at `paths` with variable `var`.
pub fn replace_at_paths(t: &Term, paths: &[TermPath], var: &str) -> Term {
    fn rec(t: &Term, here: &mut TermPath, paths: &[TermPath], var: &str) -> Term {
        if paths.iter().any(|p| p == here) {
            return Term::Var(var.to_owned());
        }
        match t {
            Term::Var(_) | Term::Const(..) => t.clone(),
            Term::App(f, a) => {
                here.push(0);
                let nf = rec(f, here, paths, var);
                here.pop();
                here.push(1);
                let na = rec(a, here, paths, var);
                here.pop();
                Term::App(Box::new(nf), Box::new(na))
            }
            Term::Lam(v, b) => {
                here.push(2);
                let nb = rec(b, here, paths, var);
                here.pop();
                Term::Lam(v.clone(), Box::new(nb))
            }
        }
    }
    rec(t, &mut Vec::new(), paths, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Term {
        parse_lf(s).expect(s)
    }

    #[test]
    fn parses_transitive_lf() {
        let t = p("(v|lost (det:art|a n|shoe) pro:per|you)");
        match &t {
            Term::App(f, a) => {
                assert_eq!(**a, Term::constant(PosTag::ProPer, "you"));
                match f.as_ref() {
                    Term::App(v, obj) => {
                        assert_eq!(**v, Term::constant(PosTag::V, "lost"));
                        assert_eq!(
                            obj.as_ref().canonical(),
                            "(det:art|a n|shoe)".to_string()
                        );
                    }
                    _ => panic!("expected nested application"),
                }
            }
            _ => panic!("expected application"),
        }
    }

    #[test]
    fn parses_single_constant() {
        assert_eq!(p("pro:per|you"), Term::constant(PosTag::ProPer, "you"));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            parse_lf("(lam x"),
            Err(LfError::Syntax { .. })
        ));
        assert!(matches!(
            parse_lf("xyz|foo"),
            Err(LfError::UnknownTag { .. })
        ));
        assert!(matches!(parse_lf("y"), Err(LfError::UnboundVar { .. })));
    }

    #[test]
    fn beta_reduces_application() {
        // (lam x. a x) shoe  ->  a shoe
        let f = Term::lam(
            "x",
            Term::app(Term::constant(PosTag::DetArt, "a"), Term::var("x")),
        );
        let out = beta_reduce(&Term::app(f, Term::constant(PosTag::N, "shoe")));
        assert_eq!(out, p("(det:art|a n|shoe)"));
    }

    #[test]
    fn beta_identity() {
        let id = Term::lam("x", Term::var("x"));
        let out = beta_reduce(&Term::app(id, Term::constant(PosTag::ProPer, "you")));
        assert_eq!(out, Term::constant(PosTag::ProPer, "you"));
    }

    #[test]
    fn beta_wh_application() {
        // (lam p. p WH)(lam x. did (lose x you)) -> did (lose WH you)
        let f = p("lam p.(p pro:int|WH)");
        let a = p("lam x.(mod|did (v|lose x pro:per|you))");
        let out = beta_reduce(&Term::app(f, a));
        assert!(alpha_equal(
            &out,
            &p("(mod|did (v|lose pro:int|WH pro:per|you))")
        ));
    }

    #[test]
    fn capture_avoiding_substitution() {
        // (lam x. lam y. x) y  must not capture the free y
        let t = Term::app(
            Term::lam("x", Term::lam("y", Term::var("x"))),
            Term::var("y"),
        );
        let out = beta_reduce(&t);
        match out {
            Term::Lam(ref b, ref body) => {
                assert_ne!(b.as_str(), "y");
                assert_eq!(**body, Term::var("y"));
            }
            _ => panic!("expected lambda"),
        }
    }

    #[test]
    fn roundtrip_canonical() {
        for s in [
            "(v|lost (det:art|a n|shoe) pro:per|you)",
            "lam x0.lam x1.(v|lost x0 x1)",
            "lam x0.(x0 pro:int|WH)",
            "(mod|did (v|lose pro:int|WH pro:per|you))",
            "(v|want (lam x0.(v|go x0)) pro:per|you)",
        ] {
            let t = p(s);
            let rendered = render_lf(&t);
            let back = p(&rendered);
            assert!(alpha_equal(&t, &back), "{} -> {}", s, rendered);
        }
    }

    #[test]
    fn sem_types() {
        assert_eq!(p("pro:per|you").pipe_type(), SemType::E);
        assert_eq!(
            p("lam x.lam y.(v|lost x y)").pipe_type(),
            SemType::func(SemType::E, SemType::func(SemType::E, SemType::T))
        );
        assert_eq!(
            p("n|shoe").pipe_type(),
            SemType::func(SemType::E, SemType::T)
        );
        // modal: free metavariable defaults to e
        assert_eq!(
            p("lam x.lam y.(mod|can (x y))").pipe_type(),
            SemType::func(
                SemType::func(SemType::E, SemType::T),
                SemType::func(SemType::E, SemType::T)
            )
        );
    }

    impl Term {
        fn pipe_type(&self) -> SemType {
            sem_type_of(self).unwrap()
        }
    }

    #[test]
    fn type_errors() {
        // (you shoe): e applied to something
        let t = Term::app(
            Term::constant(PosTag::ProPer, "you"),
            Term::constant(PosTag::N, "shoe"),
        );
        assert!(matches!(sem_type_of(&t), Err(TypeError::Mismatch(_))));
        // adv is not considered
        let t = Term::constant(PosTag::Adv, "quickly");
        assert!(matches!(
            sem_type_of(&t),
            Err(TypeError::UnmappedTag(PosTag::Adv))
        ));
    }

    #[test]
    fn type_stable_under_beta_and_alpha() {
        let f = p("lam p.(p pro:int|WH)");
        let a = p("lam x.(mod|did (v|lose x pro:per|you))");
        let applied = Term::app(f, a);
        let reduced = beta_reduce(&applied);
        assert_eq!(sem_type_of(&reduced).unwrap(), SemType::T);
        let renamed = p("lam zz.(zz pro:int|WH)");
        assert_eq!(
            sem_type_of(&renamed).unwrap(),
            sem_type_of(&p("lam p.(p pro:int|WH)")).unwrap()
        );
    }

    #[test]
    fn schematic_conjunction_instantiates() {
        let t = p("(conj|and pro:per|you pro:per|i)");
        assert_eq!(sem_type_of(&t).unwrap(), SemType::E);
    }

    #[test]
    fn shellify_examples() {
        let t = p("lam y.(v|lost (det:art|a n|shoe) y)");
        let s = shellify(&t).unwrap();
        assert_eq!(s.canonical(), "lam x0.(vconst (quant noun) x0)");
        assert_eq!(
            shellify(&p("pro:per|you")).unwrap(),
            ShellTerm::Mark(Marking::Entity)
        );
        assert_eq!(
            shellify(&p("det:art|a")).unwrap(),
            ShellTerm::Mark(Marking::Quant)
        );
    }

    #[test]
    fn shellify_commutes_with_alpha() {
        let a = p("lam y.(v|lost (det:art|a n|shoe) y)");
        let b = p("lam q.(v|lost (det:art|a n|shoe) q)");
        assert_eq!(
            shellify(&a).unwrap().canonical(),
            shellify(&b).unwrap().canonical()
        );
    }

    #[test]
    fn alpha_equality() {
        assert!(alpha_equal(&p("lam x.x"), &p("lam y.y")));
        assert!(!alpha_equal(
            &p("lam x.lam y.(v|lost x y)"),
            &p("lam x.lam y.(v|lost y x)")
        ));
    }

    #[test]
    fn subterm_enumeration() {
        let t = p("(v|lost (det:art|a n|shoe) pro:per|you)");
        let subs = enumerate_subterms(&t);
        let keys: Vec<String> = subs.iter().map(|(s, _)| s.canonical()).collect();
        for want in [
            "(det:art|a n|shoe)",
            "n|shoe",
            "pro:per|you",
            "v|lost",
            "det:art|a",
        ] {
            assert!(keys.iter().any(|k| k == want), "missing {}", want);
        }
        // externally bound variables are excluded
        let t = p("lam x.(v|hug x x)");
        let subs = enumerate_subterms(&t);
        assert!(subs
            .iter()
            .all(|(s, _)| !matches!(s, Term::Var(_))));
        // a single constant enumerates only itself
        let t = p("pro:per|you");
        assert_eq!(enumerate_subterms(&t).len(), 1);
    }

    #[test]
    fn eta_expansion() {
        // lam z.(lost z)  ->  lam z.lam y.(lost z y)
        let t = Term::lam(
            "z",
            Term::app(Term::constant(PosTag::V, "lost"), Term::var("z")),
        );
        let e = eta_expand(&t).unwrap();
        assert!(alpha_equal(&e, &p("lam x.lam y.(v|lost x y)")));
        // fully applied terms are unchanged
        let t = p("(v|lost (det:art|a n|shoe) pro:per|you)");
        assert!(alpha_equal(&eta_expand(&t).unwrap(), &t));
        // bare transitive constant expands to the two-lambda form
        let t = Term::constant(PosTag::V, "lost");
        let e = eta_expand_with(
            &t,
            &SemType::func(SemType::E, SemType::func(SemType::E, SemType::T)),
        )
        .unwrap();
        assert!(alpha_equal(&e, &p("lam x.lam y.(v|lost x y)")));
    }

    #[test]
    fn beta_idempotent() {
        let t = p("(v|lost (det:art|a n|shoe) pro:per|you)");
        assert_eq!(beta_reduce(&t), beta_reduce(&beta_reduce(&t)));
    }
}
