use std::collections::BTreeMap;

use crate::binding::{Binding, BindingSet};
use crate::ltl::Ltl;

use super::{AtomicBlock, BindingFormula, NegStyle, PropLit, SpecError, Task, TaskFormula};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(u32),
    LParen,
    RParen,
    AtBrace,
    RBrace,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Eventually,
    Always,
    Until,
    True,
    False,
    Eof,
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    col: usize,
}

fn lex(text: &str, first_line: usize) -> Result<Vec<(Tok, Pos)>, SpecError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (first_line, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let syntax = |msg: String| SpecError::Syntax {
            line: pos.line,
            col: pos.col,
            msg,
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '\\' => {
                return Err(SpecError::UnknownEscape {
                    line: pos.line,
                    col: pos.col,
                })
            }
            '(' => out.push((Tok::LParen, pos)),
            ')' => out.push((Tok::RParen, pos)),
            '}' => out.push((Tok::RBrace, pos)),
            '!' => out.push((Tok::Bang, pos)),
            '&' => out.push((Tok::Amp, pos)),
            '|' => out.push((Tok::Pipe, pos)),
            '@' => {
                if chars.get(i + 1) != Some(&'{') {
                    return Err(syntax("expected `{` after `@`".into()));
                }
                out.push((Tok::AtBrace, pos));
                i += 2;
                col += 2;
                continue;
            }
            '-' => {
                if chars.get(i + 1) != Some(&'>') {
                    return Err(syntax("expected `->`".into()));
                }
                out.push((Tok::Arrow, pos));
                i += 2;
                col += 2;
                continue;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v = s
                    .parse::<u32>()
                    .map_err(|_| syntax(format!("binding `{s}` out of range")))?;
                out.push((Tok::Int(v), pos));
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let tok = match s.as_str() {
                    "F" => Tok::Eventually,
                    "G" => Tok::Always,
                    "U" => Tok::Until,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(s),
                };
                out.push((tok, pos));
                col += i - start;
                continue;
            }
            other => return Err(syntax(format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// Surface syntax tree, before blocks are separated from task structure.
#[derive(Clone, Debug)]
enum Expr {
    Prop(String, Pos),
    Const(bool, Pos),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Until(Box<Expr>, Box<Expr>),
    Eventually(Box<Expr>),
    Always(Box<Expr>),
    Annot(Box<Expr>, BindingFormula, Pos),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SpecError> {
        let p = self.pos();
        Err(SpecError::Syntax {
            line: p.line,
            col: p.col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SpecError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn formula(&mut self) -> Result<Expr, SpecError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Expr, SpecError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Expr, SpecError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.until()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Expr, SpecError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let rhs = self.until()?;
            return Ok(Expr::Until(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SpecError> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Tok::Eventually => {
                self.bump();
                Ok(Expr::Eventually(Box::new(self.unary()?)))
            }
            Tok::Always => {
                self.bump();
                Ok(Expr::Always(Box::new(self.unary()?)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, SpecError> {
        let e = self.primary()?;
        if *self.peek() == Tok::AtBrace {
            let pos = self.pos();
            self.bump();
            if *self.peek() == Tok::RBrace {
                return Err(SpecError::EmptyBinding {
                    line: pos.line,
                    col: pos.col,
                });
            }
            let psi = self.binding_or()?;
            self.expect(Tok::RBrace, "`}`")?;
            if *self.peek() == Tok::AtBrace {
                let p = self.pos();
                return Err(SpecError::NestedAnnotation {
                    line: p.line,
                    col: p.col,
                });
            }
            return Ok(Expr::Annot(Box::new(e), psi, pos));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SpecError> {
        let (t, pos) = self.bump();
        match t {
            Tok::Ident(s) => Ok(Expr::Prop(s, pos)),
            Tok::True => Ok(Expr::Const(true, pos)),
            Tok::False => Ok(Expr::Const(false, pos)),
            Tok::LParen => {
                let e = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => Err(SpecError::Syntax {
                line: pos.line,
                col: pos.col,
                msg: format!("unexpected {}", describe(&other)),
            }),
        }
    }

    fn binding_or(&mut self) -> Result<BindingFormula, SpecError> {
        let mut lhs = self.binding_and()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            lhs = BindingFormula::or(lhs, self.binding_and()?);
        }
        Ok(lhs)
    }

    fn binding_and(&mut self) -> Result<BindingFormula, SpecError> {
        let mut lhs = self.binding_atom()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            lhs = BindingFormula::and(lhs, self.binding_atom()?);
        }
        Ok(lhs)
    }

    fn binding_atom(&mut self) -> Result<BindingFormula, SpecError> {
        let pos = self.pos();
        match self.bump().0 {
            Tok::Int(v) => Ok(BindingFormula::Var(Binding(v))),
            Tok::LParen => {
                let f = self.binding_or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Bang => Err(SpecError::NegatedBinding {
                line: pos.line,
                col: pos.col,
            }),
            Tok::RBrace => Err(SpecError::EmptyBinding {
                line: pos.line,
                col: pos.col,
            }),
            other => Err(SpecError::Syntax {
                line: pos.line,
                col: pos.col,
                msg: format!("expected a binding number, found {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::AtBrace => "`@{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Bang => "`!`".into(),
        Tok::Amp => "`&`".into(),
        Tok::Pipe => "`|`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Eventually => "`F`".into(),
        Tok::Always => "`G`".into(),
        Tok::Until => "`U`".into(),
        Tok::True => "`true`".into(),
        Tok::False => "`false`".into(),
        Tok::Eof => "end of input".into(),
    }
}

fn to_task(e: Expr) -> Result<TaskFormula, SpecError> {
    Ok(match e {
        Expr::Annot(inner, psi, _) => {
            let phi = to_action(*inner)?;
            TaskFormula::Block(match phi {
                Ltl::Not(x) => AtomicBlock {
                    phi: *x,
                    psi,
                    style: NegStyle::InnerNeg,
                },
                phi => AtomicBlock::plain(phi, psi),
            })
        }
        Expr::Not(a) => match *a {
            Expr::Annot(..) => {
                let TaskFormula::Block(b) = to_task(*a)? else {
                    unreachable!("annotation always yields a block")
                };
                TaskFormula::Block(b.negated().expect("fresh block has at most inner negation"))
            }
            other => TaskFormula::not(to_task(other)?),
        },
        Expr::And(a, b) => TaskFormula::and(to_task(*a)?, to_task(*b)?),
        Expr::Or(a, b) => TaskFormula::or(to_task(*a)?, to_task(*b)?),
        Expr::Implies(a, b) => TaskFormula::or(to_task(Expr::Not(a))?, to_task(*b)?),
        Expr::Until(a, b) => TaskFormula::until(to_task(*a)?, to_task(*b)?),
        Expr::Eventually(a) => TaskFormula::eventually(to_task(*a)?),
        Expr::Always(a) => TaskFormula::always(to_task(*a)?),
        Expr::Prop(name, pos) => {
            return Err(SpecError::Unannotated {
                line: pos.line,
                col: pos.col,
                what: name,
            })
        }
        Expr::Const(v, pos) => {
            return Err(SpecError::Unannotated {
                line: pos.line,
                col: pos.col,
                what: v.to_string(),
            })
        }
    })
}

fn to_action(e: Expr) -> Result<Ltl<PropLit>, SpecError> {
    Ok(match e {
        Expr::Prop(name, _) => Ltl::Lit(PropLit::pos(name)),
        Expr::Const(true, _) => Ltl::True,
        Expr::Const(false, _) => Ltl::False,
        Expr::Not(a) => Ltl::not(to_action(*a)?),
        Expr::And(a, b) => Ltl::And(Box::new(to_action(*a)?), Box::new(to_action(*b)?)),
        Expr::Or(a, b) => Ltl::Or(Box::new(to_action(*a)?), Box::new(to_action(*b)?)),
        Expr::Implies(a, b) => Ltl::Or(Box::new(Ltl::not(to_action(*a)?)), Box::new(to_action(*b)?)),
        Expr::Until(a, b) => Ltl::until(to_action(*a)?, to_action(*b)?),
        Expr::Eventually(a) => Ltl::eventually(to_action(*a)?),
        Expr::Always(a) => Ltl::always(to_action(*a)?),
        Expr::Annot(_, _, pos) => {
            return Err(SpecError::NestedAnnotation {
                line: pos.line,
                col: pos.col,
            })
        }
    })
}

fn header_error(line: usize, msg: impl Into<String>) -> SpecError {
    SpecError::Syntax {
        line,
        col: 1,
        msg: msg.into(),
    }
}

fn parse_sets(body: &str, line: usize) -> Result<Vec<BindingSet>, SpecError> {
    let mut sets = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let Some(after) = rest.strip_prefix('{') else {
            return Err(header_error(line, "cdistinct expects sets like {1,2}"));
        };
        let Some(end) = after.find('}') else {
            return Err(header_error(line, "unterminated `{` in cdistinct"));
        };
        let mut set = BindingSet::new();
        for part in after[..end].split(',') {
            let v: u32 = part
                .trim()
                .parse()
                .map_err(|_| header_error(line, format!("bad binding `{}` in cdistinct", part.trim())))?;
            set.insert(Binding(v));
        }
        sets.push(set);
        rest = after[end + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(sets)
}

fn parse_mins(body: &str, line: usize, out: &mut BTreeMap<Binding, u32>) -> Result<(), SpecError> {
    for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (b, k) = item
            .split_once(':')
            .ok_or_else(|| header_error(line, format!("cmin entry `{item}` should look like 1:2")))?;
        let b: u32 = b
            .trim()
            .parse()
            .map_err(|_| header_error(line, format!("bad binding in cmin entry `{item}`")))?;
        let k: u32 = k
            .trim()
            .parse()
            .map_err(|_| header_error(line, format!("bad count in cmin entry `{item}`")))?;
        out.insert(Binding(b), k);
    }
    Ok(())
}

/// Parse a task file: optional `cdistinct:` / `cmin:` header lines followed by
/// one formula.
pub fn parse_task(text: &str) -> Result<Task, SpecError> {
    let mut distinct = Vec::new();
    let mut min = BTreeMap::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut first = 0;
    while first < lines.len() {
        let l = lines[first].trim();
        let lineno = first + 1;
        if l.is_empty() || l.starts_with('#') {
            first += 1;
        } else if let Some(body) = l.strip_prefix("cdistinct:") {
            distinct.extend(parse_sets(body, lineno)?);
            first += 1;
        } else if let Some(body) = l.strip_prefix("cmin:") {
            parse_mins(body, lineno, &mut min)?;
            first += 1;
        } else {
            break;
        }
    }
    let body = lines[first.min(lines.len())..].join("\n");
    let toks = lex(&body, first + 1)?;
    let mut p = Parser { toks, i: 0 };
    let e = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {} after formula", describe(p.peek())));
    }
    Task::new(to_task(e)?, distinct, min)
}
