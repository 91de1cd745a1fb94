//! Lexer and recursive-descent parser for single expressions.
//!
//! Precedence from loosest to tightest: `+ -`, `* /`, unary minus, `^`.
//! `^` is right-associative and its right operand may carry a sign, so
//! `-x^2` is `-(x^2)` and `x^-1` is accepted.

use super::ast::{Ast, BinOp, Func, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Gt,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Gt => "`>`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

/// Token with its 1-based column inside the parsed text.
#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub col: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>, expected: &[&str]) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

pub(crate) fn lex(src: &str, line: usize, col0: usize) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(line, col, format!("malformed number `{text}`"), &["number"]))?;
            out.push(Spanned { tok: Tok::Num(v), col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '>' => Tok::Gt,
            _ => {
                return Err(syntax(
                    line,
                    col,
                    format!("unexpected character `{c}`"),
                    &["operator", "number", "identifier"],
                ))
            }
        };
        out.push(Spanned { tok, col });
        i += 1;
    }
    out.push(Spanned {
        tok: Tok::End,
        col: col0 + chars.len(),
    });
    Ok(out)
}

/// Classifies an identifier as a coordinate (`x3`, `y1`) or a parameter.
fn ident_to_ast(name: &str) -> Ast {
    let mut chars = name.chars();
    if let Some(head @ ('x' | 'y')) = chars.next() {
        let rest = chars.as_str();
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) && !rest.starts_with('0') {
            if let Ok(k) = rest.parse::<usize>() {
                return Ast::Var(if head == 'x' { Var::X(k - 1) } else { Var::Y(k - 1) });
            }
        }
    }
    Ast::Param(name.to_string())
}

pub(crate) struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
}

impl Parser {
    pub fn new(src: &str, line: usize, col0: usize) -> Result<Self> {
        Ok(Parser {
            toks: lex(src, line, col0)?,
            pos: 0,
            line,
        })
    }

    pub fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    pub fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error_here(&self, message: &str, expected: &[&str]) -> Error {
        let t = self.peek();
        syntax(self.line, t.col, format!("{message}, found {}", t.tok.describe()), expected)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.peek().tok == Tok::End {
            Ok(())
        } else {
            Err(self.error_here("unexpected trailing input", &["operator", "end of line"]))
        }
    }

    pub fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        match self.peek().tok {
            Tok::Op('-') => {
                self.bump();
                Ok(Ast::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.primary()?;
        if self.peek().tok == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Ast::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Ast::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok == Tok::LParen {
                    let func = Func::from_name(&name).ok_or_else(|| {
                        syntax(
                            self.line,
                            t.col,
                            format!("unknown function `{name}`"),
                            &["sqrt", "abs", "sin", "cos", "exp", "log"],
                        )
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.close_paren()?;
                    return Ok(Ast::Call(func, Box::new(arg)));
                }
                Ok(ident_to_ast(&name))
            }
            _ => Err(self.error_here("expected an operand", &["number", "identifier", "`(`", "`-`"])),
        }
    }

    fn close_paren(&mut self) -> Result<()> {
        if self.peek().tok == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here("unbalanced parenthesis", &["`)`"]))
        }
    }
}

/// Parses a standalone expression; diagnostics report line 1.
pub fn parse_expr(src: &str) -> Result<Ast> {
    parse_expr_at(src, 1, 1)
}

pub(crate) fn parse_expr_at(src: &str, line: usize, col0: usize) -> Result<Ast> {
    let mut p = Parser::new(src, line, col0)?;
    let ast = p.expr()?;
    p.expect_end()?;
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn show(s: &str) -> String {
        parse_expr(s).unwrap().to_string()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(show("1 + 2 * 3"), "(1.0 + (2.0 * 3.0))");
        assert_eq!(show("-x1^2"), "(-(x1 ^ 2.0))");
        assert_eq!(show("x1^y2^2"), "(x1 ^ (y2 ^ 2.0))");
        assert_eq!(show("x1^-1"), "(x1 ^ (-1.0))");
        assert_eq!(show("a - b - c"), "((a - b) - c)");
        assert_eq!(show("x1 / y1 / 2"), "((x1 / y1) / 2.0)");
    }

    #[test]
    fn euclid_depth() {
        let a = parse_expr("sqrt(y1^2 + y2^2)").unwrap();
        assert_eq!(a.depth(), 3);
        assert_eq!(a.vars(), vec![Var::Y(0), Var::Y(1)]);
    }

    #[test]
    fn unbalanced_paren_reports_column() {
        let err = parse_expr("sqrt(y1^2 + y2^2").unwrap_err();
        match err {
            Error::Syntax { line, column, expected, .. } => {
                assert_eq!(line, 1);
                assert_eq!(column, 17);
                assert!(expected.iter().any(|e| e.contains(')')));
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_expr("x1 $ 2").is_err());
        assert!(parse_expr("foo(x1)").is_err());
        assert!(parse_expr("x1 +").is_err());
        assert!(parse_expr("(x1))").is_err());
    }

    #[test]
    fn evaluates_with_params_and_powers() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.5);
        let ast = parse_expr("k * x1^2 + y1^0.5 - exp(0)").unwrap();
        let ctx = super::super::ast::EvalContext {
            x: &[3.0],
            y: &[4.0],
            params: &params,
        };
        let v: f64 = ast.eval(&ctx).unwrap();
        assert!((v - (22.5 + 2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluation_errors() {
        let params = BTreeMap::new();
        let ctx = super::super::ast::EvalContext {
            x: &[0.0],
            y: &[-1.0],
            params: &params,
        };
        for src in ["1 / x1", "x1^-2", "sqrt(y1)", "log(y1)", "y1^0.5", "q"] {
            let ast = parse_expr(src).unwrap();
            assert!(ast.eval::<f64>(&ctx).is_err(), "{src}");
        }
    }
}
