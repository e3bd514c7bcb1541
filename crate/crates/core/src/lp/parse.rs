//! Recursive-descent parser for reactive programs and online updates.
//!
//! ```text
//! program    ::= { directive | rule }
//! directive  ::= "#base" "." | "#cumulative" IDENT "." | "#volatile" IDENT "."
//!              | "#external" IDENT "/" INT "."
//! rule       ::= head [ ":-" body ] "." | ":-" body "."
//! head       ::= atom | [ INT ] "{" element { ";" element } "}" [ INT ]
//! element    ::= atom [ ":" literal { "," literal } ]
//! body       ::= literal { "," literal }
//! literal    ::= [ "not" ] atom | term CMP term
//! CMP        ::= "=" | "!=" | "<" | "<=" | ">" | ">="
//! atom       ::= IDENT [ "(" term { "," term } ")" ]
//! term       ::= simple { ( "+" | "-" ) INT }
//! simple     ::= INT | "-" INT | VARIABLE | "_" | IDENT [ "(" term { "," term } ")" ]
//!              | "(" term ")"
//! ```
//!
//! Identifiers start with a lowercase letter, or with `_` followed by a
//! lowercase letter (`_action`). Variables start with an uppercase letter or
//! `_` followed by an uppercase letter; a lone `_` is anonymous. `%` starts a
//! comment that runs to the end of the line. Rules before the first section
//! directive belong to the base part.

use std::fmt;

use thiserror::Error;

use super::syntax::{Choice, ChoiceElement, CmpOp, Head, Literal, PartKind, ReactiveProgram, Rule};
use super::term::{Atom, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("unsafe variable {var} in rule at {pos}")]
    Unsafe { pos: Pos, var: String },
    #[error("{pred}/{arity} is used with arity {found} at {pos}")]
    Arity {
        pos: Pos,
        pred: String,
        arity: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Directive(String),
    If,
    Dot,
    Comma,
    Semi,
    Colon,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Slash,
    Plus,
    Minus,
    Cmp(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Var(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Directive(d) => write!(f, "`#{d}`"),
            Tok::If => f.write_str("`:-`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.as_str()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut anon = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let start = i;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let word = |i: &mut usize| {
            let s = *i;
            while *i < chars.len() && (chars[*i].is_alphanumeric() || chars[*i] == '_') {
                *i += 1;
            }
            chars[s..*i].iter().collect::<String>()
        };
        let tok = if c.is_ascii_digit() {
            let w = word(&mut i);
            let n = w.parse::<i64>().map_err(|_| ParseError::Syntax {
                pos,
                message: format!("invalid integer `{w}`"),
            })?;
            Tok::Int(n)
        } else if c.is_alphabetic() || c == '_' {
            let w = word(&mut i);
            let first = w.chars().find(|ch| *ch != '_');
            match first {
                None if w == "_" => {
                    anon += 1;
                    Tok::Var(format!("_Anon{anon}"))
                }
                Some(ch) if ch.is_uppercase() => Tok::Var(w),
                Some(_) => Tok::Ident(w),
                None => {
                    return Err(ParseError::Syntax {
                        pos,
                        message: format!("invalid identifier `{w}`"),
                    })
                }
            }
        } else if c == '#' {
            i += 1;
            let w = word(&mut i);
            if w.is_empty() {
                return Err(ParseError::Syntax {
                    pos,
                    message: "expected directive name after `#`".into(),
                });
            }
            Tok::Directive(w)
        } else {
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                (':', Some('-')) => (Tok::If, 2),
                ('!', Some('=')) => (Tok::Cmp(CmpOp::Ne), 2),
                ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
                ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
                ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
                ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
                ('=', _) => (Tok::Cmp(CmpOp::Eq), 1),
                ('.', _) => (Tok::Dot, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                (':', _) => (Tok::Colon, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('/', _) => (Tok::Slash, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                _ => {
                    return Err(ParseError::Syntax {
                        pos,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            i += len;
            tok
        };
        col += i - start;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

pub(crate) struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(text)?,
            at: 0,
        })
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        let i = (self.at + 1).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    pub(crate) fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn fail(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            pos: self.pos(),
            message: message.into(),
        }
    }

    pub(crate) fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(self.fail(message))
    }

    pub(crate) fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {tok}, found {}", self.peek()))
        }
    }

    pub(crate) fn int(&mut self) -> Result<i64, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(n) => Ok(-n),
                    t => self.error(format!("expected integer, found {t}")),
                }
            }
            t => self.error(format!("expected integer, found {t}")),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {t}")),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut t = self.simple_term()?;
        loop {
            let sign = match self.peek() {
                Tok::Plus => 1,
                Tok::Minus => -1,
                _ => break,
            };
            self.bump();
            match self.bump() {
                Tok::Int(n) => t = t.offset(sign * n),
                other => {
                    return self.error(format!(
                        "only integer increments are supported, found {other}"
                    ))
                }
            }
        }
        Ok(t)
    }

    fn simple_term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Int(_) | Tok::Minus => Ok(Term::Int(self.int()?)),
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(v))
            }
            Tok::Ident(name) => {
                self.bump();
                let args = self.args()?;
                Ok(Term::func(name, args))
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            t => self.error(format!("expected term, found {t}")),
        }
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            loop {
                args.push(self.term()?);
                match self.bump() {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    t => return self.error(format!("expected `,` or `)`, found {t}")),
                }
            }
        }
        Ok(args)
    }

    pub(crate) fn atom(&mut self) -> Result<Atom, ParseError> {
        let pred = self.ident()?;
        let args = self.args()?;
        Ok(Atom::new(pred, args))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        if matches!(self.peek(), Tok::Ident(s) if s == "not")
            && matches!(self.peek2(), Tok::Ident(_))
        {
            self.bump();
            return Ok(Literal::Neg(self.atom()?));
        }
        let pos = self.pos();
        let lhs = self.term()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            return Ok(Literal::Cmp(lhs, op, rhs));
        }
        match lhs {
            Term::Sym(p) => Ok(Literal::Pos(Atom::prop(p))),
            Term::Func(p, args) => Ok(Literal::Pos(Atom::new(p, args))),
            other => Err(ParseError::Syntax {
                pos,
                message: format!("`{other}` is not an atom"),
            }),
        }
    }

    pub(crate) fn body(&mut self) -> Result<Vec<Literal>, ParseError> {
        let mut lits = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            lits.push(self.literal()?);
        }
        Ok(lits)
    }

    fn choice(&mut self, lower: Option<i64>) -> Result<Choice, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut elements = Vec::new();
        if *self.peek() != Tok::RBrace {
            loop {
                let atom = self.atom()?;
                let mut condition = Vec::new();
                if *self.peek() == Tok::Colon {
                    self.bump();
                    condition = self.body()?;
                }
                elements.push(ChoiceElement { atom, condition });
                match self.peek() {
                    Tok::Semi => {
                        self.bump();
                    }
                    _ => break,
                }
            }
        }
        self.expect(Tok::RBrace)?;
        let upper = match self.peek() {
            Tok::Int(_) | Tok::Minus => Some(self.int()?),
            _ => None,
        };
        Ok(Choice {
            lower,
            upper,
            elements,
        })
    }

    /// Parses one rule, including the trailing period.
    pub(crate) fn rule(&mut self) -> Result<(Rule, Pos), ParseError> {
        let pos = self.pos();
        let head = match self.peek() {
            Tok::If => Head::Falsum,
            Tok::LBrace => Head::Choice(self.choice(None)?),
            Tok::Int(_) | Tok::Minus => {
                let lower = self.int()?;
                Head::Choice(self.choice(Some(lower))?)
            }
            _ => Head::Atom(self.atom()?),
        };
        let body = match self.peek() {
            Tok::If => {
                self.bump();
                if *self.peek() == Tok::Dot && matches!(head, Head::Falsum) {
                    Vec::new()
                } else {
                    self.body()?
                }
            }
            _ if matches!(head, Head::Falsum) => return self.error("expected `:-`"),
            _ => Vec::new(),
        };
        self.expect(Tok::Dot)?;
        let rule = Rule { head, body };
        if let Some(var) = rule.unsafe_variable() {
            return Err(ParseError::Unsafe { pos, var });
        }
        Ok((rule, pos))
    }
}

/// Parses a reactive program.
pub fn parse_program(text: &str) -> Result<ReactiveProgram, ParseError> {
    let mut p = Parser::new(text)?;
    let mut prog = ReactiveProgram::default();
    let mut section = PartKind::Base;
    let mut arities = ArityCheck::default();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Directive(d) => {
                p.bump();
                match d.as_str() {
                    "base" => section = PartKind::Base,
                    "cumulative" | "volatile" => {
                        let name = p.ident()?;
                        let part = if d == "cumulative" {
                            section = PartKind::Cumulative;
                            &mut prog.cumulative
                        } else {
                            section = PartKind::Volatile;
                            &mut prog.volatile
                        };
                        match &part.parameter {
                            Some(existing) if *existing != name => {
                                return p.error(format!(
                                    "#{d} parameter `{name}` differs from earlier `{existing}`"
                                ))
                            }
                            _ => part.parameter = Some(name),
                        }
                    }
                    "external" => {
                        let pred = p.ident()?;
                        p.expect(Tok::Slash)?;
                        let arity = p.int()?;
                        if arity < 0 {
                            return p.error("arity must be non-negative");
                        }
                        prog.externals.insert((pred, arity as usize));
                    }
                    other => return p.error(format!("unknown directive `#{other}`")),
                }
                p.expect(Tok::Dot)?;
            }
            _ => {
                let (rule, pos) = p.rule()?;
                arities.rule(&rule, pos)?;
                let part = match section {
                    PartKind::Base => &mut prog.base,
                    PartKind::Cumulative => &mut prog.cumulative,
                    PartKind::Volatile => &mut prog.volatile,
                };
                part.rules.push(rule);
            }
        }
    }
    for (pred, arity) in &prog.externals {
        arities.check(pred, *arity, Pos { line: 0, col: 0 })?;
    }
    Ok(prog)
}

#[derive(Default)]
struct ArityCheck(std::collections::HashMap<String, usize>);

impl ArityCheck {
    fn check(&mut self, pred: &str, arity: usize, pos: Pos) -> Result<(), ParseError> {
        match self.0.get(pred) {
            Some(&a) if a != arity => Err(ParseError::Arity {
                pos,
                pred: pred.to_string(),
                arity: a,
                found: arity,
            }),
            Some(_) => Ok(()),
            None => {
                self.0.insert(pred.to_string(), arity);
                Ok(())
            }
        }
    }

    fn literal(&mut self, lit: &Literal, pos: Pos) -> Result<(), ParseError> {
        match lit {
            Literal::Pos(a) | Literal::Neg(a) => self.check(&a.pred, a.arity(), pos),
            Literal::Cmp(..) => Ok(()),
        }
    }

    fn rule(&mut self, rule: &Rule, pos: Pos) -> Result<(), ParseError> {
        match &rule.head {
            Head::Atom(a) => self.check(&a.pred, a.arity(), pos)?,
            Head::Falsum => {}
            Head::Choice(c) => {
                for e in &c.elements {
                    self.check(&e.atom.pred, e.atom.arity(), pos)?;
                    for l in &e.condition {
                        self.literal(l, pos)?;
                    }
                }
            }
        }
        rule.body.iter().try_for_each(|l| self.literal(l, pos))
    }
}

/// Parses a single ground atom such as `_return(move_base,office2,1)`.
/// A trailing period is optional.
pub fn parse_atom(text: &str) -> Result<Atom, ParseError> {
    let mut p = Parser::new(text)?;
    let atom = p.atom()?;
    if *p.peek() == Tok::Dot {
        p.bump();
    }
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after atom", p.peek()));
    }
    Ok(atom)
}

/// Parses a single term.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(text)?;
    let t = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after term", p.peek()));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_fact() {
        let p = parse_program("#base. office(office1).").unwrap();
        assert_eq!(p.base.rules.len(), 1);
        assert_eq!(p.base.rules[0].to_string(), "office(office1).");
    }

    #[test]
    fn cumulative_rule_over_parameter() {
        let p = parse_program("#cumulative t. at(L,t) :- move(L,t).").unwrap();
        assert_eq!(p.cumulative.parameter.as_deref(), Some("t"));
        assert_eq!(p.cumulative.rules[0].to_string(), "at(L,t) :- move(L,t).");
        let at3 = p.cumulative.at_step(3);
        assert_eq!(at3[0].to_string(), "at(L,3) :- move(L,3).");
    }

    #[test]
    fn unsafe_negation_is_rejected() {
        let err = parse_program("p(X) :- not q(X).").unwrap_err();
        assert!(
            matches!(err, ParseError::Unsafe { ref var, .. } if var == "X"),
            "{err}"
        );
    }

    #[test]
    fn unsafe_comparison_is_rejected() {
        assert!(parse_program("p(X) :- q(X), Y < 3.").is_err());
        assert!(parse_program("{ a(X) : b(Y) }.").is_err());
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("a.\nb :- .").unwrap_err();
        match err {
            ParseError::Syntax { pos, .. } => assert_eq!((pos.line, pos.col), (2, 6)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn choice_with_conditions_and_bounds() {
        let src = "#cumulative t.\n{ _action(move_base,L,t) : location(L) ; _action(pickup,P,t) : package(P) } 1.";
        let p = parse_program(src).unwrap();
        match &p.cumulative.rules[0].head {
            Head::Choice(c) => {
                assert_eq!(c.lower, None);
                assert_eq!(c.upper, Some(1));
                assert_eq!(c.elements.len(), 2);
            }
            h => panic!("{h:?}"),
        }
        let again = parse_program(&format!("#cumulative t.\n{}", p.cumulative.rules[0])).unwrap();
        assert_eq!(again.cumulative.rules, p.cumulative.rules);
    }

    #[test]
    fn arithmetic_and_comparisons() {
        let p = parse_program("#cumulative t. at(L,t) :- at(L,t-1), not moved(t), t > 1.").unwrap();
        assert_eq!(
            p.cumulative.rules[0].to_string(),
            "at(L,t) :- at(L,t-1), not moved(t), t > 1."
        );
    }

    #[test]
    fn externals_and_comments() {
        let p = parse_program("% header\n#external _request/2.\n#base.\na. % trailing\n").unwrap();
        assert!(p.is_external("_request", 2));
        assert_eq!(p.base.rules.len(), 1);
    }

    #[test]
    fn arity_clash_is_rejected() {
        assert!(matches!(
            parse_program("p(1). q :- p(1,2)."),
            Err(ParseError::Arity { .. })
        ));
    }

    #[test]
    fn anonymous_variables_are_distinct() {
        let p = parse_program(":- p(_, _), q.").unwrap();
        assert_eq!(p.base.rules[0].to_string(), ":- p(_Anon1,_Anon2), q.");
    }

    #[test]
    fn empty_constraint_body_and_negative_ints() {
        let p = parse_program("n(-3). :- .").unwrap();
        assert_eq!(p.base.rules[0].to_string(), "n(-3).");
        assert!(p.base.rules[1].is_constraint());
    }
}
