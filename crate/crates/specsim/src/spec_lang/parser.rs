//! Recursive-descent parser for the spec source format:
//!
//! ```text
//! ap <name> := |<set-expr>| <cmp> <nat>;
//! pre: <formula>;
//! post: <formula>;          # optional
//! ```
//!
//! Set expressions use `ego`, capitalized type names, `.rel` for relational
//! image, and `&`, `|`, `\`, `^` for intersection, union, difference, and
//! symmetric difference. Formulas use `!`, `&&`, `||`, `->`, `X`, `F`, `G`,
//! `U`, and parentheses. `#` starts a comment through end of line.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{CardCmp, Comparator, Formula, SetExpr, Spec};
use crate::world::RelationRegistry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown relation name `{0}`")]
    UnknownRelation(String),
    #[error("unknown atomic proposition `{0}`")]
    UnknownAp(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u32),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> char {
        let c = self.chars.next().unwrap();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn bump_if(&mut self, want: char) -> bool {
        if self.chars.peek() == Some(&want) {
            self.bump();
            true
        } else {
            false
        }
    }
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { chars: source.chars().peekable(), line: 1, col: 1 };
    let mut tokens = Vec::new();
    while let Some(&c) = lx.chars.peek() {
        let (line, col) = (lx.line, lx.col);
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        if c == '#' {
            while let Some(&c) = lx.chars.peek() {
                if c == '\n' {
                    break;
                }
                lx.bump();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(&c) = lx.chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    ident.push(lx.bump());
                } else {
                    break;
                }
            }
            tokens.push(Token { tok: Tok::Ident(ident), line, col });
            continue;
        }
        if c.is_ascii_digit() {
            let mut n: u32 = 0;
            while let Some(&c) = lx.chars.peek() {
                if let Some(d) = c.to_digit(10) {
                    n = n * 10 + d;
                    lx.bump();
                } else {
                    break;
                }
            }
            tokens.push(Token { tok: Tok::Num(n), line, col });
            continue;
        }
        lx.bump();
        let sym: &'static str = match c {
            ':' => {
                if lx.bump_if('=') {
                    ":="
                } else {
                    ":"
                }
            }
            '-' => {
                if lx.bump_if('>') {
                    "->"
                } else {
                    return Err(ParseError::Syntax { line, col, msg: "expected `->`".into() });
                }
            }
            '&' => {
                if lx.bump_if('&') {
                    "&&"
                } else {
                    "&"
                }
            }
            '|' => {
                if lx.bump_if('|') {
                    "||"
                } else {
                    "|"
                }
            }
            '>' => {
                if lx.bump_if('=') {
                    ">="
                } else {
                    ">"
                }
            }
            '<' => {
                if lx.bump_if('=') {
                    "<="
                } else {
                    "<"
                }
            }
            '=' => "=",
            ';' => ";",
            '.' => ".",
            '(' => "(",
            ')' => ")",
            '!' => "!",
            '\\' => "\\",
            '^' => "^",
            other => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        tokens.push(Token { tok: Tok::Sym(sym), line, col });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    /// Set when a lexed `||` has been half-consumed as a cardinality-bar
    /// delimiter, leaving one `|` pending.
    pending_pipe: bool,
    registry: &'a RelationRegistry,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .tokens
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .or_else(|| self.tokens.last().map(|t| (t.line, t.col + 1)))
            .unwrap_or((1, 1));
        ParseError::Syntax { line, col, msg: msg.into() }
    }

    fn at_end(&self) -> bool {
        !self.pending_pipe && self.pos >= self.tokens.len()
    }

    /// Current symbol token, if any. A pending half of a `||` reads as `|`.
    fn peek_sym(&self) -> Option<&'static str> {
        if self.pending_pipe {
            return Some("|");
        }
        match self.tokens.get(self.pos).map(|t| &t.tok) {
            Some(&Tok::Sym(s)) => Some(s),
            _ => None,
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        if self.pending_pipe {
            return None;
        }
        match self.tokens.get(self.pos).map(|t| &t.tok) {
            Some(Tok::Ident(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    fn step(&mut self) {
        self.pending_pipe = false;
        self.pos += 1;
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.peek_sym() == Some(sym) {
            self.step();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{sym}`")))
        }
    }

    /// Consume a single `|`, splitting a lexed `||` if needed.
    fn expect_pipe(&mut self) -> Result<(), ParseError> {
        if self.pending_pipe {
            self.step();
            return Ok(());
        }
        match self.tokens.get(self.pos).map(|t| &t.tok) {
            Some(Tok::Sym("|")) => {
                self.pos += 1;
                Ok(())
            }
            Some(Tok::Sym("||")) => {
                self.pending_pipe = true;
                Ok(())
            }
            _ => Err(self.err("expected `|`")),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek_ident() {
            Some(s) => {
                let s = s.to_string();
                self.step();
                Ok(s)
            }
            None => Err(self.err("expected identifier")),
        }
    }

    // --- set expressions -------------------------------------------------

    fn set_expr(&mut self) -> Result<SetExpr, ParseError> {
        // Union has lowest precedence. A `|` only continues the expression
        // when followed by something that can start a set term; otherwise it
        // closes the surrounding cardinality bars.
        let mut lhs = self.set_symdiff()?;
        loop {
            let is_union = !self.pending_pipe
                && matches!(self.tokens.get(self.pos).map(|t| &t.tok), Some(Tok::Sym("|")))
                && matches!(
                    self.tokens.get(self.pos + 1).map(|t| &t.tok),
                    Some(Tok::Ident(_)) | Some(Tok::Sym("("))
                );
            if !is_union {
                break;
            }
            self.pos += 1;
            let rhs = self.set_symdiff()?;
            lhs = SetExpr::Union(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn set_symdiff(&mut self) -> Result<SetExpr, ParseError> {
        let mut lhs = self.set_difference()?;
        while self.eat_sym("^") {
            let rhs = self.set_difference()?;
            lhs = SetExpr::SymDiff(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn set_difference(&mut self) -> Result<SetExpr, ParseError> {
        let mut lhs = self.set_intersect()?;
        while self.eat_sym("\\") {
            let rhs = self.set_intersect()?;
            lhs = SetExpr::Difference(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn set_intersect(&mut self) -> Result<SetExpr, ParseError> {
        let mut lhs = self.set_postfix()?;
        while self.eat_sym("&") {
            let rhs = self.set_postfix()?;
            lhs = SetExpr::Intersect(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn set_postfix(&mut self) -> Result<SetExpr, ParseError> {
        let mut expr = self.set_primary()?;
        while self.eat_sym(".") {
            let rel = self.ident()?;
            if !self.registry.contains(&rel) {
                return Err(ParseError::UnknownRelation(rel));
            }
            expr = SetExpr::Image(Box::new(expr), rel);
        }
        Ok(expr)
    }

    fn set_primary(&mut self) -> Result<SetExpr, ParseError> {
        if self.eat_sym("(") {
            let inner = self.set_expr()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        let name = self.ident()?;
        if name == "ego" {
            Ok(SetExpr::Ego)
        } else if name.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
            Ok(SetExpr::Type(name))
        } else {
            Err(self.err(format!("expected `ego` or a capitalized type name, got `{name}`")))
        }
    }

    fn card(&mut self) -> Result<CardCmp, ParseError> {
        self.expect_pipe()?;
        let set = self.set_expr()?;
        self.expect_pipe()?;
        let cmp = match self.peek_sym() {
            Some(">") => Comparator::Gt,
            Some(">=") => Comparator::Ge,
            Some("=") => Comparator::Eq,
            Some("<") => Comparator::Lt,
            Some("<=") => Comparator::Le,
            _ => return Err(self.err("expected a comparator after `|...|`")),
        };
        self.step();
        let bound = match self.tokens.get(self.pos).map(|t| t.tok.clone()) {
            Some(Tok::Num(n)) => {
                self.step();
                n
            }
            _ => return Err(self.err("expected a natural-number bound")),
        };
        Ok(CardCmp { set, cmp, bound })
    }

    // --- formulas --------------------------------------------------------

    fn formula(&mut self) -> Result<Formula, ParseError> {
        // Implication: right-associative, lowest precedence.
        let lhs = self.formula_or()?;
        if self.eat_sym("->") {
            let rhs = self.formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn formula_or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.formula_and()?;
        while self.eat_sym("||") {
            let rhs = self.formula_and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn formula_and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.formula_until()?;
        while self.eat_sym("&&") {
            let rhs = self.formula_until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn formula_until(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.formula_unary()?;
        while self.peek_ident() == Some("U") {
            self.step();
            let rhs = self.formula_unary()?;
            lhs = Formula::until(lhs, rhs);
        }
        Ok(lhs)
    }

    fn formula_unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat_sym("!") {
            return Ok(Formula::not(self.formula_unary()?));
        }
        match self.peek_ident() {
            Some("X") => {
                self.step();
                Ok(Formula::next(self.formula_unary()?))
            }
            Some("F") => {
                self.step();
                Ok(Formula::eventually(self.formula_unary()?))
            }
            Some("G") => {
                self.step();
                Ok(Formula::globally(self.formula_unary()?))
            }
            _ => self.formula_primary(),
        }
    }

    fn formula_primary(&mut self) -> Result<Formula, ParseError> {
        if self.eat_sym("(") {
            let inner = self.formula()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        let name = self.ident()?;
        Ok(Formula::Ap(name))
    }
}

/// Parse a complete spec source against the relation registry. The returned
/// formulas mirror the source structure exactly; no normalization is applied.
pub fn parse_spec(source: &str, registry: &RelationRegistry) -> Result<Spec, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0, pending_pipe: false, registry };

    let mut ap_table: BTreeMap<String, CardCmp> = BTreeMap::new();
    let mut precondition = None;
    let mut postcondition = None;

    while !p.at_end() {
        match p.peek_ident() {
            Some("ap") => {
                p.step();
                let name = p.ident()?;
                p.expect_sym(":=")?;
                let body = p.card()?;
                p.expect_sym(";")?;
                ap_table.insert(name, body);
            }
            Some("pre") => {
                p.step();
                p.expect_sym(":")?;
                precondition = Some(p.formula()?);
                p.expect_sym(";")?;
            }
            Some("post") => {
                p.step();
                p.expect_sym(":")?;
                postcondition = Some(p.formula()?);
                p.expect_sym(";")?;
            }
            _ => return Err(p.err("expected `ap`, `pre:`, or `post:`")),
        }
    }

    let precondition = precondition.ok_or(ParseError::Syntax {
        line: 1,
        col: 1,
        msg: "missing `pre:` section".into(),
    })?;

    // Every referenced AP must be declared.
    for f in [Some(&precondition), postcondition.as_ref()].into_iter().flatten() {
        for name in f.ap_names() {
            if !ap_table.contains_key(name) {
                return Err(ParseError::UnknownAp(name.to_string()));
            }
        }
    }

    let full = match &postcondition {
        Some(post) => Formula::implies(precondition.clone(), post.clone()),
        None => precondition.clone(),
    };
    Ok(Spec { name: "spec".into(), ap_table, precondition, postcondition, full })
}
