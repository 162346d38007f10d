//! Plain-text formats for theory, model, and proof files, with printers
//! that round-trip through the corresponding parsers.
//!
//! All three formats share one token layer. `#` starts a comment that runs
//! to the end of the line. Identifiers may contain `-` when the next
//! character is a word character, so `eq-symm` lexes as one name while
//! `w->x` splits around the arrow. Every file begins with `version 1;` and
//! every diagnostic carries a 1-based line and column.
//!
//! Variable references are resolved after parsing: a bare identifier in a
//! formula names the nearest enclosing binder or context variable, and
//! otherwise denotes a constant. Variables are identified by name here, so
//! a context that repeats a name at two sorts does not survive a round
//! trip; nothing sensible does repeat names.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kernel::{Derivation, Rule};
use crate::print::{sequent_to_proof_line, sequent_to_string, PrintStyle};
use crate::semantics::{validate_model, FiniteIterator, FiniteModel};
use crate::subst::Substitution;
use crate::syntax::{
    Context, Formula, Fragment, Sequent, Signature, SortName, Term, Theory, Variable,
};

/// Words with fixed meaning in formulae; rejected as names everywhere else.
const RESERVED: [&str; 4] = ["top", "bot", "exists", "forall"];

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(usize),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Semi,
    Colon,
    Comma,
    Dot,
    Slash,
    Amp,
    Pipe,
    Tilde,
    Eq,
    Implies,
    Arrow,
    Turnstile,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("`{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Tilde => "`~`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Implies => "`=>`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Turnstile => "`|-`".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Token stream plus the position just past the final token.
type Lexed = (Vec<Token>, (usize, usize));

fn lex(text: &str) -> Result<Lexed, Vec<ParseError>> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut errors = Vec::new();
    let mut i = 0;
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok| toks.push(Token { tok, line: tl, col: tc });
        match c {
            c if c.is_whitespace() => advance!(),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance!();
                }
            }
            '(' => {
                push(Tok::LParen);
                advance!();
            }
            ')' => {
                push(Tok::RParen);
                advance!();
            }
            '[' => {
                push(Tok::LBracket);
                advance!();
            }
            ']' => {
                push(Tok::RBracket);
                advance!();
            }
            '{' => {
                push(Tok::LBrace);
                advance!();
            }
            '}' => {
                push(Tok::RBrace);
                advance!();
            }
            ';' => {
                push(Tok::Semi);
                advance!();
            }
            ':' => {
                push(Tok::Colon);
                advance!();
            }
            ',' => {
                push(Tok::Comma);
                advance!();
            }
            '.' => {
                push(Tok::Dot);
                advance!();
            }
            '/' => {
                push(Tok::Slash);
                advance!();
            }
            '&' => {
                push(Tok::Amp);
                advance!();
            }
            '~' => {
                push(Tok::Tilde);
                advance!();
            }
            '=' => {
                if chars.get(i + 1) == Some(&'>') {
                    push(Tok::Implies);
                    advance!();
                } else {
                    push(Tok::Eq);
                }
                advance!();
            }
            '|' => {
                if chars.get(i + 1) == Some(&'-') {
                    push(Tok::Turnstile);
                    advance!();
                } else {
                    push(Tok::Pipe);
                }
                advance!();
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    push(Tok::Arrow);
                    advance!();
                    advance!();
                } else {
                    errors.push(ParseError::new(tl, tc, "unexpected character `-`"));
                    advance!();
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while i < chars.len() {
                    let c = chars[i];
                    if word_char(c) {
                        s.push(c);
                        advance!();
                    } else if c == '-' && chars.get(i + 1).copied().is_some_and(word_char) {
                        s.push('-');
                        advance!();
                    } else {
                        break;
                    }
                }
                push(Tok::Ident(s));
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    s.push(chars[i]);
                    advance!();
                }
                match s.parse::<usize>() {
                    Ok(n) => push(Tok::Num(n)),
                    Err(_) => errors.push(ParseError::new(tl, tc, format!("number `{s}` is too large"))),
                }
            }
            other => {
                errors.push(ParseError::new(tl, tc, format!("unexpected character `{other}`")));
                advance!();
            }
        }
    }
    if errors.is_empty() {
        Ok((toks, (line, col)))
    } else {
        Err(errors)
    }
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    eof: (usize, usize),
}

impl<'t> Parser<'t> {
    fn new(toks: &'t [Token], eof: (usize, usize)) -> Parser<'t> {
        Parser { toks, pos: 0, eof }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or(self.eof)
    }

    fn describe_here(&self) -> String {
        match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::new(line, col, message)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected {what}, found {}", self.describe_here())))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, usize, usize)> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Ident(s),
                line,
                col,
            }) => {
                let out = (s.clone(), *line, *col);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.err(format!("expected {what}, found {}", self.describe_here()))),
        }
    }

    /// An identifier that is about to name something; reserved words refused.
    fn expect_name(&mut self, what: &str) -> PResult<(String, usize, usize)> {
        let (name, line, col) = self.expect_ident(what)?;
        if RESERVED.contains(&name.as_str()) {
            return Err(ParseError::new(
                line,
                col,
                format!("`{name}` is reserved and cannot be used as a name"),
            ));
        }
        Ok((name, line, col))
    }

    fn expect_num(&mut self, what: &str) -> PResult<(usize, usize, usize)> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Num(n),
                line,
                col,
            }) => {
                let out = (*n, *line, *col);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.err(format!("expected {what}, found {}", self.describe_here()))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`, found {}", self.describe_here()))),
        }
    }

    fn expect_version(&mut self) -> PResult<()> {
        self.expect_keyword("version")
            .map_err(|e| ParseError::new(e.line, e.col, "expected `version 1;` header"))?;
        match self.peek() {
            Some(Tok::Num(1)) => {
                self.pos += 1;
            }
            _ => return Err(self.err("unsupported version: expected `version 1;`")),
        }
        self.expect(&Tok::Semi, "`;`")
    }

    // Terms and formulae parse without scope information; bare identifiers
    // become zero-argument applications and a later resolution pass turns
    // the ones that name a context variable or binder into variables.

    fn parse_term(&mut self) -> PResult<Term> {
        let (name, line, col) = self.expect_ident("a term")?;
        if RESERVED.contains(&name.as_str()) {
            return Err(ParseError::new(
                line,
                col,
                format!("`{name}` is reserved and cannot be used as a term"),
            ));
        }
        if self.eat(&Tok::LParen) {
            let mut args = vec![self.parse_term()?];
            while self.eat(&Tok::Comma) {
                args.push(self.parse_term()?);
            }
            self.expect(&Tok::RParen, "`)`")?;
            Ok(Term::app(name, args))
        } else {
            Ok(Term::app(name, Vec::new()))
        }
    }

    fn parse_formula(&mut self) -> PResult<Formula> {
        let lhs = self.parse_or_formula()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.parse_formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_or_formula(&mut self) -> PResult<Formula> {
        let mut f = self.parse_and_formula()?;
        while self.eat(&Tok::Pipe) {
            f = Formula::or(f, self.parse_and_formula()?);
        }
        Ok(f)
    }

    fn parse_and_formula(&mut self) -> PResult<Formula> {
        let mut f = self.parse_unary_formula()?;
        while self.eat(&Tok::Amp) {
            f = Formula::and(f, self.parse_unary_formula()?);
        }
        Ok(f)
    }

    fn parse_unary_formula(&mut self) -> PResult<Formula> {
        if self.eat(&Tok::Tilde) {
            Ok(Formula::not(self.parse_unary_formula()?))
        } else {
            self.parse_atom_formula()
        }
    }

    fn parse_atom_formula(&mut self) -> PResult<Formula> {
        let next = self.peek().cloned();
        match next {
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.parse_formula()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(s)) if s == "top" => {
                self.pos += 1;
                Ok(Formula::Top)
            }
            Some(Tok::Ident(s)) if s == "bot" => {
                self.pos += 1;
                Ok(Formula::Bot)
            }
            Some(Tok::Ident(s)) if s == "exists" || s == "forall" => {
                self.pos += 1;
                let (name, ..) = self.expect_name("a bound variable")?;
                self.expect(&Tok::Colon, "`:`")?;
                let (sort, ..) = self.expect_ident("a sort")?;
                self.expect(&Tok::Dot, "`.`")?;
                let v = Variable::new(name, sort);
                // the body extends as far right as possible
                let body = self.parse_formula()?;
                Ok(if s == "forall" {
                    Formula::forall(v, body)
                } else {
                    Formula::exists(v, body)
                })
            }
            Some(Tok::Ident(_)) => {
                let t = self.parse_term()?;
                if self.eat(&Tok::Eq) {
                    let t2 = self.parse_term()?;
                    Ok(Formula::eq(t, t2))
                } else {
                    match t {
                        Term::App(name, args) => Ok(Formula::rel(name, args)),
                        Term::Var(_) => unreachable!("parsing produces applications only"),
                    }
                }
            }
            _ => Err(self.err(format!("expected a formula, found {}", self.describe_here()))),
        }
    }

    fn parse_context(&mut self) -> PResult<Context> {
        let (line, col) = self.here();
        self.expect(&Tok::LBracket, "`[`")?;
        let mut vars = Vec::new();
        if !self.eat(&Tok::RBracket) {
            loop {
                let (name, ..) = self.expect_name("a context variable")?;
                self.expect(&Tok::Colon, "`:`")?;
                let (sort, ..) = self.expect_ident("a sort")?;
                vars.push(Variable::new(name, sort));
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(&Tok::RBracket, "`]`")?;
                break;
            }
        }
        Context::new(vars).map_err(|e| ParseError::new(line, col, e.to_string()))
    }

    /// Either surface shape: `[ctx] lhs |- rhs` or `lhs [ctx] |- rhs`.
    fn parse_sequent_tokens(&mut self) -> PResult<Sequent> {
        let (line, col) = self.here();
        let (lhs_raw, ctx, rhs_raw) = if matches!(self.peek(), Some(Tok::LBracket)) {
            let ctx = self.parse_context()?;
            let lhs = self.parse_formula()?;
            self.expect(&Tok::Turnstile, "`|-`")?;
            let rhs = self.parse_formula()?;
            (lhs, ctx, rhs)
        } else {
            let lhs = self.parse_formula()?;
            let ctx = self.parse_context()?;
            self.expect(&Tok::Turnstile, "`|-`")?;
            let rhs = self.parse_formula()?;
            (lhs, ctx, rhs)
        };
        let mut scope: Vec<Variable> = ctx.vars().to_vec();
        let lhs = resolve_formula(lhs_raw, &mut scope);
        let rhs = resolve_formula(rhs_raw, &mut scope);
        Sequent::new(lhs, ctx, rhs).map_err(|e| ParseError::new(line, col, e.to_string()))
    }

    /// Skips forward until a `;` has been consumed.
    fn recover_to_semi(&mut self) {
        while let Some(t) = self.bump() {
            if t.tok == Tok::Semi {
                break;
            }
        }
    }

    /// Skips forward until a `}` has been consumed.
    fn recover_to_brace(&mut self) {
        while let Some(t) = self.bump() {
            if t.tok == Tok::RBrace {
                break;
            }
        }
    }

    /// Skips forward to the next `N:` line start.
    fn recover_to_line_start(&mut self) {
        if !self.at_eof() {
            self.pos += 1;
        }
        while !self.at_eof() {
            if matches!(self.peek(), Some(Tok::Num(_))) && self.peek2() == Some(&Tok::Colon) {
                break;
            }
            self.pos += 1;
        }
    }
}

fn resolve_term(term: Term, scope: &[Variable]) -> Term {
    match term {
        Term::App(name, args) if args.is_empty() => {
            match scope.iter().rev().find(|v| v.name() == name) {
                Some(v) => Term::var(v.clone()),
                None => Term::app(name, Vec::new()),
            }
        }
        Term::App(name, args) => Term::app(
            name,
            args.into_iter().map(|a| resolve_term(a, scope)).collect(),
        ),
        v @ Term::Var(_) => v,
    }
}

fn resolve_formula(formula: Formula, scope: &mut Vec<Variable>) -> Formula {
    match formula {
        Formula::Rel(name, args) => Formula::Rel(
            name,
            args.into_iter().map(|a| resolve_term(a, scope)).collect(),
        ),
        Formula::Eq(s, t) => Formula::Eq(resolve_term(s, scope), resolve_term(t, scope)),
        Formula::Top => Formula::Top,
        Formula::Bot => Formula::Bot,
        Formula::And(a, b) => Formula::and(resolve_formula(*a, scope), resolve_formula(*b, scope)),
        Formula::Or(a, b) => Formula::or(resolve_formula(*a, scope), resolve_formula(*b, scope)),
        Formula::Implies(a, b) => {
            Formula::implies(resolve_formula(*a, scope), resolve_formula(*b, scope))
        }
        Formula::Not(a) => Formula::not(resolve_formula(*a, scope)),
        Formula::Exists(v, body) => {
            scope.push(v.clone());
            let body = resolve_formula(*body, scope);
            scope.pop();
            Formula::exists(v, body)
        }
        Formula::Forall(v, body) => {
            scope.push(v.clone());
            let body = resolve_formula(*body, scope);
            scope.pop();
            Formula::forall(v, body)
        }
    }
}

fn sorted(mut errors: Vec<ParseError>) -> Vec<ParseError> {
    errors.sort_by_key(|e| (e.line, e.col));
    errors
}

/// Parses a theory file: declarations and axioms, one per `;`.
///
/// Sorts must be declared before the functions and relations that mention
/// them. Axioms are checked against the complete signature at the end, so
/// they may precede the declarations they use. Declaration order is kept;
/// it is the tie-breaking order for closed-term search.
pub fn parse_theory(text: &str) -> Result<Theory, Vec<ParseError>> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser::new(&toks, eof);
    if let Err(e) = p.expect_version() {
        return Err(vec![e]);
    }
    let mut errors = Vec::new();
    let mut sig = Signature::new();
    let mut axioms: Vec<(usize, usize, Sequent)> = Vec::new();
    while !p.at_eof() {
        if let Err(e) = theory_decl(&mut p, &mut sig, &mut axioms) {
            errors.push(e);
            p.recover_to_semi();
        }
    }
    let mut theory = Theory::new(sig);
    for (line, col, seq) in axioms {
        if let Err(e) = theory.add_axiom(seq) {
            errors.push(ParseError::new(line, col, e.to_string()));
        }
    }
    if errors.is_empty() {
        Ok(theory)
    } else {
        Err(sorted(errors))
    }
}

fn theory_decl(
    p: &mut Parser<'_>,
    sig: &mut Signature,
    axioms: &mut Vec<(usize, usize, Sequent)>,
) -> PResult<()> {
    let (kw, line, col) = p.expect_ident("a declaration")?;
    match kw.as_str() {
        "sort" => {
            let (name, nl, nc) = p.expect_name("a sort name")?;
            p.expect(&Tok::Semi, "`;`")?;
            sig.add_sort(name)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "fun" => {
            let (name, nl, nc) = p.expect_name("a function name")?;
            p.expect(&Tok::Colon, "`:`")?;
            let mut args = vec![SortName::new(p.expect_ident("a sort")?.0)];
            while p.eat(&Tok::Comma) {
                args.push(SortName::new(p.expect_ident("a sort")?.0));
            }
            p.expect(&Tok::Arrow, "`->`")?;
            let result = SortName::new(p.expect_ident("a sort")?.0);
            p.expect(&Tok::Semi, "`;`")?;
            sig.add_function(name, args, result)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "const" => {
            let (name, nl, nc) = p.expect_name("a constant name")?;
            p.expect(&Tok::Colon, "`:`")?;
            let (sort, ..) = p.expect_ident("a sort")?;
            p.expect(&Tok::Semi, "`;`")?;
            sig.add_constant(name, sort)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "rel" => {
            let (name, nl, nc) = p.expect_name("a relation name")?;
            p.expect(&Tok::Colon, "`:`")?;
            let mut args = vec![SortName::new(p.expect_ident("a sort")?.0)];
            while p.eat(&Tok::Comma) {
                args.push(SortName::new(p.expect_ident("a sort")?.0));
            }
            p.expect(&Tok::Semi, "`;`")?;
            sig.add_relation(name, args)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "prop" => {
            let (name, nl, nc) = p.expect_name("a proposition name")?;
            p.expect(&Tok::Semi, "`;`")?;
            sig.add_proposition(name)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "axiom" => {
            let seq = p.parse_sequent_tokens()?;
            p.expect(&Tok::Semi, "`;`")?;
            axioms.push((line, col, seq));
            Ok(())
        }
        other => Err(ParseError::new(
            line,
            col,
            format!("expected `sort`, `fun`, `const`, `rel`, `prop`, or `axiom`, found `{other}`"),
        )),
    }
}

/// Parses a model file against a known signature. The resulting model is
/// validated: every declared symbol must be interpreted, function tables
/// must commute with the step maps, and relation subsets must be closed.
pub fn parse_model(text: &str, sig: &Signature) -> Result<FiniteModel, Vec<ParseError>> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser::new(&toks, eof);
    if let Err(e) = p.expect_version() {
        return Err(vec![e]);
    }
    let mut errors = Vec::new();
    let mut model = FiniteModel::new(sig.clone());
    let mut spans: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    while !p.at_eof() {
        if let Err(e) = model_section(&mut p, &mut model, &mut spans) {
            errors.push(e);
            p.recover_to_brace();
        }
    }
    if !errors.is_empty() {
        return Err(sorted(errors));
    }
    if let Err(violations) = validate_model(&model) {
        let errors = violations
            .into_iter()
            .map(|v| {
                let (line, col) = spans.get(&v.symbol).copied().unwrap_or((1, 1));
                ParseError::new(line, col, v.to_string())
            })
            .collect();
        return Err(sorted(errors));
    }
    Ok(model)
}

fn model_section(
    p: &mut Parser<'_>,
    model: &mut FiniteModel,
    spans: &mut BTreeMap<String, (usize, usize)>,
) -> PResult<()> {
    let (kw, line, col) = p.expect_ident("a section (`iterator`, `fun`, or `rel`)")?;
    match kw.as_str() {
        "iterator" => {
            let (name, nl, nc) = p.expect_ident("a sort name")?;
            spans.insert(name.clone(), (nl, nc));
            p.expect(&Tok::LBrace, "`{`")?;
            p.expect_keyword("elems")?;
            let mut labels = Vec::new();
            while let Some(Tok::Ident(_)) = p.peek() {
                labels.push(p.expect_ident("a label")?.0);
            }
            p.expect(&Tok::Semi, "`;`")?;
            p.expect_keyword("step")?;
            let mut pairs: Vec<(String, String)> = Vec::new();
            while let Some(Tok::Ident(_)) = p.peek() {
                let from = p.expect_ident("a label")?.0;
                p.expect(&Tok::Arrow, "`->`")?;
                let to = p.expect_ident("a label")?.0;
                pairs.push((from, to));
            }
            p.expect(&Tok::Semi, "`;`")?;
            p.expect(&Tok::RBrace, "`}`")?;
            let pair_refs: Vec<(&str, &str)> = pairs
                .iter()
                .map(|(a, b)| (a.as_str(), b.as_str()))
                .collect();
            let interp = FiniteIterator::new(labels, &pair_refs)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))?;
            model
                .set_sort(name, interp)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "fun" => {
            let (name, nl, nc) = p.expect_ident("a function name")?;
            spans.insert(name.clone(), (nl, nc));
            p.expect(&Tok::LBrace, "`{`")?;
            let mut rows: Vec<(Vec<String>, String)> = Vec::new();
            while p.eat(&Tok::LParen) {
                let mut args = Vec::new();
                if !p.eat(&Tok::RParen) {
                    loop {
                        args.push(p.expect_ident("a label")?.0);
                        if p.eat(&Tok::Comma) {
                            continue;
                        }
                        p.expect(&Tok::RParen, "`)`")?;
                        break;
                    }
                }
                p.expect(&Tok::Arrow, "`->`")?;
                let out = p.expect_ident("a label")?.0;
                p.expect(&Tok::Semi, "`;`")?;
                rows.push((args, out));
            }
            p.expect(&Tok::RBrace, "`}`")?;
            let arg_refs: Vec<Vec<&str>> = rows
                .iter()
                .map(|(args, _)| args.iter().map(String::as_str).collect())
                .collect();
            let row_refs: Vec<(&[&str], &str)> = rows
                .iter()
                .zip(&arg_refs)
                .map(|((_, out), args)| (args.as_slice(), out.as_str()))
                .collect();
            model
                .set_function(name, &row_refs)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        "rel" => {
            let (name, nl, nc) = p.expect_ident("a relation name")?;
            spans.insert(name.clone(), (nl, nc));
            p.expect(&Tok::LBrace, "`{`")?;
            let mut members: Vec<Vec<String>> = Vec::new();
            while p.eat(&Tok::LParen) {
                let mut tuple = Vec::new();
                if !p.eat(&Tok::RParen) {
                    loop {
                        tuple.push(p.expect_ident("a label")?.0);
                        if p.eat(&Tok::Comma) {
                            continue;
                        }
                        p.expect(&Tok::RParen, "`)`")?;
                        break;
                    }
                }
                p.expect(&Tok::Semi, "`;`")?;
                members.push(tuple);
            }
            p.expect(&Tok::RBrace, "`}`")?;
            let tuple_refs: Vec<Vec<&str>> = members
                .iter()
                .map(|t| t.iter().map(String::as_str).collect())
                .collect();
            let member_refs: Vec<&[&str]> = tuple_refs.iter().map(|t| t.as_slice()).collect();
            model
                .set_relation(name, &member_refs)
                .map_err(|e| ParseError::new(nl, nc, e.to_string()))
        }
        other => Err(ParseError::new(
            line,
            col,
            format!("expected `iterator`, `fun`, or `rel`, found `{other}`"),
        )),
    }
}

/// Parses a proof file into a derivation. The `fragment` header is
/// mandatory and line numbers must run 1, 2, 3, ... in order.
///
/// Sorts and symbols are taken at face value; checking the derivation
/// against a theory is the kernel's job. The one exception is `sub`, whose
/// substitution needs contexts to resolve against: target variables are
/// looked up in the premise line's context and replacement terms in the
/// line's own context, so the premise must be an earlier line.
pub fn parse_proof(text: &str) -> Result<Derivation, Vec<ParseError>> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser::new(&toks, eof);
    if let Err(e) = p.expect_version() {
        return Err(vec![e]);
    }
    if let Err(e) = p.expect_keyword("fragment") {
        return Err(vec![ParseError::new(
            e.line,
            e.col,
            "expected `fragment <name>;` header",
        )]);
    }
    let (frag_name, fl, fc) = match p.expect_ident("a fragment name") {
        Ok(out) => out,
        Err(e) => return Err(vec![e]),
    };
    let Some(declared) = Fragment::ALL.iter().find(|f| f.name() == frag_name).copied() else {
        return Err(vec![ParseError::new(
            fl,
            fc,
            format!("unknown fragment `{frag_name}`"),
        )]);
    };
    if let Err(e) = p.expect(&Tok::Semi, "`;`") {
        return Err(vec![e]);
    }
    let mut errors = Vec::new();
    let mut derivation = Derivation::new(declared);
    let mut expected = 1usize;
    while !p.at_eof() {
        match proof_line(&mut p, &derivation, expected) {
            Ok((seq, rule, premises)) => {
                derivation.push(seq, rule, premises);
                expected += 1;
            }
            Err(e) => {
                errors.push(e);
                p.recover_to_line_start();
            }
        }
    }
    if errors.is_empty() {
        Ok(derivation)
    } else {
        Err(sorted(errors))
    }
}

fn proof_line(
    p: &mut Parser<'_>,
    derivation: &Derivation,
    expected: usize,
) -> PResult<(Sequent, Rule, Vec<usize>)> {
    let (n, nl, nc) = p.expect_num("a line number")?;
    if n != expected {
        return Err(ParseError::new(
            nl,
            nc,
            format!("expected line number {expected}, found {n}"),
        ));
    }
    p.expect(&Tok::Colon, "`:`")?;
    let seq = p.parse_sequent_tokens()?;
    p.expect(&Tok::Semi, "`;`")?;
    let (rule_name, rl, rc) = p.expect_ident("a rule name")?;
    let (rule, premises) = match rule_name.as_str() {
        "hyp" => {
            let (axiom, ..) = p.expect_num("an axiom number")?;
            (Rule::Hypothesis(axiom), Vec::new())
        }
        "thm" => {
            let (name, ..) = p.expect_ident("a theorem name")?;
            let mut premises = Vec::new();
            if matches!(p.peek(), Some(Tok::Num(_))) {
                premises.push(p.expect_num("a premise line")?.0);
                while p.eat(&Tok::Comma) {
                    premises.push(p.expect_num("a premise line")?.0);
                }
            }
            (Rule::TheoremRef(name), premises)
        }
        "sub" => {
            let (sl, sc) = p.here();
            p.expect(&Tok::LBracket, "`[`")?;
            let mut terms = Vec::new();
            let mut names: Vec<(String, usize, usize)> = Vec::new();
            if !p.eat(&Tok::RBracket) {
                terms.push(p.parse_term()?);
                while p.eat(&Tok::Comma) {
                    terms.push(p.parse_term()?);
                }
                p.expect(&Tok::Slash, "`/`")?;
                names.push(p.expect_ident("a variable name")?);
                while p.eat(&Tok::Comma) {
                    names.push(p.expect_ident("a variable name")?);
                }
                p.expect(&Tok::RBracket, "`]`")?;
                if terms.len() != names.len() {
                    return Err(ParseError::new(
                        sl,
                        sc,
                        format!(
                            "substitution lists {} term(s) but {} target(s)",
                            terms.len(),
                            names.len()
                        ),
                    ));
                }
            }
            let (prem, pl, pc) = p.expect_num("a premise line")?;
            if prem == 0 || prem > derivation.lines.len() {
                return Err(ParseError::new(
                    pl,
                    pc,
                    format!("premise {prem} is not an earlier line"),
                ));
            }
            let prem_ctx = derivation.lines[prem - 1].sequent.ctx();
            let scope: Vec<Variable> = seq.ctx().vars().to_vec();
            let mut pairs = Vec::new();
            for (term, (name, vl, vc)) in terms.into_iter().zip(names) {
                let Some(target) = prem_ctx.iter().find(|v| v.name() == name) else {
                    return Err(ParseError::new(
                        vl,
                        vc,
                        format!("`{name}` does not appear in the context of line {prem}"),
                    ));
                };
                pairs.push((resolve_term(term, &scope), target.clone()));
            }
            let subst = Substitution::new(pairs)
                .map_err(|e| ParseError::new(sl, sc, e.to_string()))?;
            (Rule::Sub(subst, seq.ctx().clone()), vec![prem])
        }
        other => {
            let rule = match other {
                "id" => Rule::Id,
                "cut" => Rule::Cut,
                "eq0" => Rule::Eq0,
                "eq1" => Rule::Eq1,
                "top" => Rule::Top,
                "bot" => Rule::Bot,
                "andE0" => Rule::AndE0,
                "andE1" => Rule::AndE1,
                "andI" => Rule::AndI,
                "orI0" => Rule::OrI0,
                "orI1" => Rule::OrI1,
                "or" => Rule::OrRule,
                "impliesDown" => Rule::ImpliesDown,
                "impliesUp" => Rule::ImpliesUp,
                "dist" => Rule::Distributive,
                "existsDown" => Rule::ExistsDown,
                "existsUp" => Rule::ExistsUp,
                "forallDown" => Rule::ForallDown,
                "forallUp" => Rule::ForallUp,
                "em" => Rule::Em,
                "frobenius" => Rule::Frobenius,
                "alpha" => Rule::AlphaRename,
                "negdef" => Rule::NegDef,
                _ => {
                    return Err(ParseError::new(rl, rc, format!("unknown rule `{other}`")));
                }
            };
            let mut premises = Vec::new();
            if matches!(p.peek(), Some(Tok::Num(_))) {
                premises.push(p.expect_num("a premise line")?.0);
                while p.eat(&Tok::Comma) {
                    premises.push(p.expect_num("a premise line")?.0);
                }
            }
            (rule, premises)
        }
    };
    p.expect(&Tok::Semi, "`;`")?;
    Ok((seq, rule, premises))
}

/// Parses a bare sequent, either surface shape, with an optional trailing
/// `;`. This is the format of goals given on a command line.
pub fn parse_sequent(text: &str) -> Result<Sequent, Vec<ParseError>> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser::new(&toks, eof);
    let seq = p.parse_sequent_tokens().map_err(|e| vec![e])?;
    p.eat(&Tok::Semi);
    if !p.at_eof() {
        return Err(vec![p.err(format!(
            "unexpected trailing input: {}",
            p.describe_here()
        ))]);
    }
    Ok(seq)
}

pub fn print_theory(theory: &Theory) -> String {
    let sig = theory.signature();
    let mut out = String::from("version 1;\n");
    for s in sig.sorts() {
        out.push_str(&format!("sort {s};\n"));
    }
    for f in sig.functions() {
        if f.arg_types.is_empty() {
            out.push_str(&format!("const {} : {};\n", f.name, f.result));
        } else {
            let args: Vec<String> = f.arg_types.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!(
                "fun {} : {} -> {};\n",
                f.name,
                args.join(", "),
                f.result
            ));
        }
    }
    for r in sig.relations() {
        if r.arg_types.is_empty() {
            out.push_str(&format!("prop {};\n", r.name));
        } else {
            let args: Vec<String> = r.arg_types.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("rel {} : {};\n", r.name, args.join(", ")));
        }
    }
    for ax in theory.axioms() {
        out.push_str(&format!("axiom {};\n", sequent_to_string(ax)));
    }
    out
}

/// Prints the interpreted part of a model; symbols without an
/// interpretation are omitted.
pub fn print_model(model: &FiniteModel) -> String {
    let sig = model.signature().clone();
    let mut out = String::from("version 1;\n");
    for sort in sig.sorts() {
        let Ok(interp) = model.sort_interp(sort) else {
            continue;
        };
        out.push_str(&format!("iterator {sort} {{ elems"));
        for label in interp.labels() {
            out.push(' ');
            out.push_str(label);
        }
        out.push_str("; step");
        for i in 0..interp.labels().len() {
            out.push_str(&format!(
                " {}->{}",
                interp.label(i),
                interp.label(interp.step_of(i))
            ));
        }
        out.push_str("; }\n");
    }
    for f in sig.functions() {
        let Ok(table) = model.fun_table(&f.name) else {
            continue;
        };
        let Ok(space) = model.space_for_sorts(&f.arg_types) else {
            continue;
        };
        let Ok(result) = model.sort_interp(&f.result) else {
            continue;
        };
        out.push_str(&format!("fun {} {{\n", f.name));
        for (i, &v) in table.iter().enumerate() {
            out.push_str(&format!(
                "  ({}) -> {};\n",
                space.labels_of(i).join(", "),
                result.label(v)
            ));
        }
        out.push_str("}\n");
    }
    for r in sig.relations() {
        let Ok(subset) = model.rel_subset(&r.name) else {
            continue;
        };
        let Ok(space) = model.space_for_sorts(&r.arg_types) else {
            continue;
        };
        out.push_str(&format!("rel {} {{\n", r.name));
        for m in subset.members() {
            out.push_str(&format!("  ({});\n", space.labels_of(m).join(", ")));
        }
        out.push_str("}\n");
    }
    out
}

pub fn print_proof(derivation: &Derivation) -> String {
    let mut out = format!("version 1;\nfragment {};\n", derivation.declared.name());
    for (i, line) in derivation.lines.iter().enumerate() {
        let seq = sequent_to_proof_line(&line.sequent, PrintStyle::ASCII);
        let premises = || {
            line.premises
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let rule = match &line.rule {
            Rule::Hypothesis(n) => format!("hyp {n}"),
            Rule::TheoremRef(name) if line.premises.is_empty() => format!("thm {name}"),
            Rule::TheoremRef(name) => format!("thm {name} {}", premises()),
            Rule::Sub(subst, _) => format!("sub {} {}", subst, premises()),
            r if line.premises.is_empty() => r.name().to_string(),
            r => format!("{} {}", r.name(), premises()),
        };
        out.push_str(&format!("{}: {} ; {};\n", i + 1, seq, rule));
    }
    out
}
