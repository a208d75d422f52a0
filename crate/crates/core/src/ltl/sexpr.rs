//! Prefix S-expression text form of formulas.
//!
//! ```text
//! true | false
//! (state NAME ARG*) | (pred NAME ARG*) | (action LABEL ARG*)
//! (and F F+) | (or F F+) | (implies F F) | (entails F F)
//! (always F) | (eventually F)
//! (forall VAR DOMAIN [(where C*)] F) | (exists VAR DOMAIN [(where C*)] F)
//! DOMAIN := (nat N [(except N*)]) | (set N*)
//! C      := (ge N) | (lt N) | (ne N)
//! ARG    := N | VAR | _
//! ```

use std::fmt;

use thiserror::Error;

use super::formula::{ActionAtom, Constraint, Domain, Formula, Quantifier, Term};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaParseError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("unexpected `{0}`")]
    Unexpected(String),
    #[error("trailing input after formula: `{0}`")]
    Trailing(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("unknown state atom `{0}` or wrong arity")]
    UnknownStateAtom(String),
    #[error("unknown step predicate `{0}` or wrong arity")]
    UnknownStepAtom(String),
    #[error("unknown action label `{0}`")]
    UnknownAction(String),
    #[error("`{0}` expects {1} operand(s)")]
    Arity(String, usize),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("free variable `{0}`")]
    FreeVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn read(tokens: &[String], pos: &mut usize) -> Result<Sx, FormulaParseError> {
    let tok = tokens.get(*pos).ok_or(FormulaParseError::UnexpectedEof)?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    None => return Err(FormulaParseError::UnexpectedEof),
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sx::List(items));
                    }
                    Some(_) => items.push(read(tokens, pos)?),
                }
            }
        }
        ")" => Err(FormulaParseError::Unexpected(")".into())),
        other => Ok(Sx::Atom(other.to_string())),
    }
}

fn number(sx: &Sx) -> Result<u64, FormulaParseError> {
    match sx {
        Sx::Atom(a) => a.parse().map_err(|_| FormulaParseError::BadNumber(a.clone())),
        Sx::List(_) => Err(FormulaParseError::Unexpected("(".into())),
    }
}

fn ident(sx: &Sx) -> Result<&str, FormulaParseError> {
    match sx {
        Sx::Atom(a) if a.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') => Ok(a),
        Sx::Atom(a) => Err(FormulaParseError::Unexpected(a.clone())),
        Sx::List(_) => Err(FormulaParseError::Unexpected("(".into())),
    }
}

fn term(sx: &Sx) -> Result<Term, FormulaParseError> {
    match sx {
        Sx::Atom(a) if a == "_" => Ok(Term::Any),
        Sx::Atom(a) if a.chars().all(|c| c.is_ascii_digit()) => number(sx).map(Term::Const),
        Sx::Atom(_) => ident(sx).map(|v| Term::Var(v.to_string())),
        Sx::List(_) => Err(FormulaParseError::Unexpected("(".into())),
    }
}

fn head(items: &[Sx]) -> Result<&str, FormulaParseError> {
    match items.first() {
        Some(Sx::Atom(a)) => Ok(a),
        Some(Sx::List(_)) => Err(FormulaParseError::Unexpected("(".into())),
        None => Err(FormulaParseError::Unexpected("()".into())),
    }
}

fn domain(sx: &Sx) -> Result<Domain, FormulaParseError> {
    let Sx::List(items) = sx else {
        return Err(FormulaParseError::Unexpected(format!("{sx:?}")));
    };
    match head(items)? {
        "nat" => {
            let lower = number(items.get(1).ok_or(FormulaParseError::UnexpectedEof)?)?;
            let mut d = Domain::nat(lower);
            match items.get(2) {
                None => {}
                Some(Sx::List(ex)) if head(ex)? == "except" => {
                    for v in &ex[1..] {
                        d.exclude(number(v)?);
                    }
                }
                Some(other) => return Err(FormulaParseError::Unexpected(format!("{other:?}"))),
            }
            if items.len() > 3 {
                return Err(FormulaParseError::Arity("nat".into(), 2));
            }
            Ok(d)
        }
        "set" => Ok(Domain::Finite(items[1..].iter().map(number).collect::<Result<_, _>>()?)),
        other => Err(FormulaParseError::UnknownOperator(other.to_string())),
    }
}

fn constraint(sx: &Sx) -> Result<Constraint, FormulaParseError> {
    let Sx::List(items) = sx else {
        return Err(FormulaParseError::Unexpected(format!("{sx:?}")));
    };
    if items.len() != 2 {
        return Err(FormulaParseError::Arity(head(items)?.to_string(), 1));
    }
    let n = number(&items[1])?;
    match head(items)? {
        "ge" => Ok(Constraint::Ge(n)),
        "lt" => Ok(Constraint::Lt(n)),
        "ne" => Ok(Constraint::Ne(n)),
        other => Err(FormulaParseError::UnknownOperator(other.to_string())),
    }
}

fn build<M: Model>(model: &M, atoms: &super::AtomRegistry<M>, sx: &Sx) -> Result<Formula<M>, FormulaParseError> {
    let items = match sx {
        Sx::Atom(a) if a == "true" => return Ok(Formula::Top),
        Sx::Atom(a) if a == "false" => return Ok(Formula::Bottom),
        Sx::Atom(a) => return Err(FormulaParseError::Unexpected(a.clone())),
        Sx::List(items) => items,
    };
    let op = head(items)?;
    let operands = &items[1..];
    let sub = |i: usize| build(model, atoms, &operands[i]);
    let exactly = |n: usize| {
        if operands.len() == n {
            Ok(())
        } else {
            Err(FormulaParseError::Arity(op.to_string(), n))
        }
    };
    match op {
        "state" | "pred" | "action" => {
            let name = ident(operands.first().ok_or(FormulaParseError::Arity(op.to_string(), 1))?)?;
            let args = operands[1..].iter().map(term).collect::<Result<Vec<_>, _>>()?;
            match op {
                "state" => atoms
                    .state_atom(name, args)
                    .ok_or_else(|| FormulaParseError::UnknownStateAtom(name.to_string())),
                "pred" => {
                    atoms.step_atom(name, args).ok_or_else(|| FormulaParseError::UnknownStepAtom(name.to_string()))
                }
                _ => {
                    if !model.action_names().contains(&name) {
                        return Err(FormulaParseError::UnknownAction(name.to_string()));
                    }
                    Ok(Formula::label(name, args))
                }
            }
        }
        "and" | "or" => {
            if operands.len() < 2 {
                return Err(FormulaParseError::Arity(op.to_string(), 2));
            }
            let mut acc = sub(0)?;
            for i in 1..operands.len() {
                let rhs = sub(i)?;
                acc = if op == "and" { Formula::and(acc, rhs) } else { Formula::or(acc, rhs) };
            }
            Ok(acc)
        }
        "implies" | "entails" => {
            exactly(2)?;
            let (a, b) = (sub(0)?, sub(1)?);
            Ok(if op == "implies" { Formula::implies(a, b) } else { Formula::entails(a, b) })
        }
        "always" => {
            exactly(1)?;
            Ok(Formula::always(sub(0)?))
        }
        "eventually" => {
            exactly(1)?;
            Ok(Formula::eventually(sub(0)?))
        }
        "forall" | "exists" => {
            if !(3..=4).contains(&operands.len()) {
                return Err(FormulaParseError::Arity(op.to_string(), 3));
            }
            let var = ident(&operands[0])?.to_string();
            let dom = domain(&operands[1])?;
            let mut cond = Vec::new();
            if operands.len() == 4 {
                let Sx::List(w) = &operands[2] else {
                    return Err(FormulaParseError::Unexpected(format!("{:?}", operands[2])));
                };
                if head(w)? != "where" {
                    return Err(FormulaParseError::UnknownOperator(head(w)?.to_string()));
                }
                cond = w[1..].iter().map(constraint).collect::<Result<_, _>>()?;
            }
            let body = Box::new(build(model, atoms, operands.last().expect("checked length"))?);
            let q = Quantifier { var, domain: dom, cond, body };
            Ok(if op == "forall" { Formula::Forall(q) } else { Formula::Exists(q) })
        }
        other => Err(FormulaParseError::UnknownOperator(other.to_string())),
    }
}

/// Parses a closed formula against `model`'s atoms and action labels.
pub fn parse_formula<M: Model>(model: &M, text: &str) -> Result<Formula<M>, FormulaParseError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let sx = read(&tokens, &mut pos)?;
    if pos < tokens.len() {
        return Err(FormulaParseError::Trailing(tokens[pos..].join(" ")));
    }
    let f = build(model, &model.atoms(), &sx)?;
    if let Some(v) = f.free_vars().into_iter().next() {
        return Err(FormulaParseError::FreeVariable(v));
    }
    Ok(f)
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    for a in args {
        write!(f, " {a}")?;
    }
    Ok(())
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Finite(set) => {
                f.write_str("(set")?;
                for v in set {
                    write!(f, " {v}")?;
                }
                f.write_str(")")
            }
            Domain::NatFrom { lower, excluded } if excluded.is_empty() => write!(f, "(nat {lower})"),
            Domain::NatFrom { lower, excluded } => {
                write!(f, "(nat {lower} (except")?;
                for v in excluded {
                    write!(f, " {v}")?;
                }
                f.write_str("))")
            }
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Ge(n) => write!(f, "(ge {n})"),
            Constraint::Lt(n) => write!(f, "(lt {n})"),
            Constraint::Ne(n) => write!(f, "(ne {n})"),
        }
    }
}

impl<M: Model> fmt::Display for Formula<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Top => f.write_str("true"),
            Formula::Bottom => f.write_str("false"),
            Formula::State(a) => {
                write!(f, "(state {}", a.name)?;
                write_args(f, &a.args)?;
                f.write_str(")")
            }
            Formula::Action(ActionAtom::Label { name, args }) => {
                write!(f, "(action {name}")?;
                write_args(f, args)?;
                f.write_str(")")
            }
            Formula::Action(ActionAtom::Pred { name, args, .. }) => {
                write!(f, "(pred {name}")?;
                write_args(f, args)?;
                f.write_str(")")
            }
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Implies(a, b) => write!(f, "(implies {a} {b})"),
            Formula::Entails(a, b) => write!(f, "(entails {a} {b})"),
            Formula::Always(a) => write!(f, "(always {a})"),
            Formula::Eventually(a) => write!(f, "(eventually {a})"),
            Formula::Forall(q) | Formula::Exists(q) => {
                let op = if matches!(self, Formula::Forall(_)) { "forall" } else { "exists" };
                write!(f, "({op} {} {}", q.var, q.domain)?;
                if !q.cond.is_empty() {
                    f.write_str(" (where")?;
                    for c in &q.cond {
                        write!(f, " {c}")?;
                    }
                    f.write_str(")")?;
                }
                write!(f, " {})", q.body)
            }
        }
    }
}
