use std::collections::BTreeMap;
use std::fmt;

use super::ast::{Ast, EvalContext, Var};
use super::parser::{parse_expr_at, Parser, Tok};
use crate::numkit::Scalar;
use crate::{Error, Result};

/// A parsed and validated model file: a Finsler function F(x, y), a vector
/// field φ(x), optional domain predicates `expr > 0`, and named constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDef {
    pub name: String,
    pub dim: usize,
    pub f: Ast,
    pub phi: Vec<Ast>,
    pub domain: Vec<Ast>,
    pub params: BTreeMap<String, f64>,
}

fn syntax_at(line: usize, column: usize, message: impl Into<String>, expected: &[&str]) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(h) if h.is_ascii_alphabetic() || h == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl ModelDef {
    pub fn parse(source: &str) -> Result<ModelDef> {
        let mut name = None;
        let mut dim: Option<(usize, usize)> = None;
        let mut f: Option<(Ast, usize)> = None;
        let mut phi: BTreeMap<usize, (Ast, usize)> = BTreeMap::new();
        let mut domain = Vec::new();
        let mut params = BTreeMap::new();

        for (lineno, raw) in source.lines().enumerate() {
            let line = lineno + 1;
            let text = raw.split('#').next().unwrap_or("");
            if text.trim().is_empty() {
                continue;
            }
            let indent = text.len() - text.trim_start().len();
            let body = text.trim();
            let Some(eq) = body.find('=') else {
                return Err(syntax_at(line, indent + 1, "expected `key = value`", &["`=`"]));
            };
            let key = body[..eq].trim();
            let value = &body[eq + 1..];
            let value_col = indent + eq + 2;

            if let Some(pname) = key.strip_prefix("param ").map(str::trim) {
                if !is_ident(pname) {
                    return Err(syntax_at(line, indent + 7, format!("invalid parameter name `{pname}`"), &["identifier"]));
                }
                if parse_ident_var(pname).is_some() {
                    return Err(Error::Validation(format!(
                        "line {line}: parameter name `{pname}` collides with a coordinate"
                    )));
                }
                let v = parse_real(value, line, value_col)?;
                if params.insert(pname.to_string(), v).is_some() {
                    return Err(Error::Validation(format!("line {line}: parameter `{pname}` declared twice")));
                }
                continue;
            }

            match key {
                "name" => {
                    let v = value.trim();
                    if v.is_empty() {
                        return Err(syntax_at(line, value_col, "empty model name", &["name"]));
                    }
                    if name.replace(v.to_string()).is_some() {
                        return Err(Error::Validation(format!("line {line}: duplicate `name`")));
                    }
                }
                "dim" => {
                    let v = value.trim();
                    let n: usize = v
                        .parse()
                        .map_err(|_| syntax_at(line, value_col, format!("`{v}` is not a dimension"), &["integer"]))?;
                    if dim.replace((n, line)).is_some() {
                        return Err(Error::Validation(format!("line {line}: duplicate `dim`")));
                    }
                }
                "F" => {
                    let ast = parse_expr_at(value, line, value_col)?;
                    if f.replace((ast, line)).is_some() {
                        return Err(Error::Validation(format!("line {line}: duplicate `F`")));
                    }
                }
                "domain" => domain.push(parse_domain(value, line, value_col)?),
                _ => {
                    let idx = key
                        .strip_prefix("phi")
                        .and_then(|k| k.parse::<usize>().ok())
                        .filter(|k| *k >= 1)
                        .ok_or_else(|| {
                            syntax_at(
                                line,
                                indent + 1,
                                format!("unknown key `{key}`"),
                                &["name", "dim", "F", "phiK", "domain", "param"],
                            )
                        })?;
                    let ast = parse_expr_at(value, line, value_col)?;
                    if phi.insert(idx, (ast, line)).is_some() {
                        return Err(Error::Validation(format!("line {line}: duplicate `{key}`")));
                    }
                }
            }
        }

        let name = name.ok_or_else(|| Error::Validation("missing `name`".into()))?;
        let (dim, dim_line) = dim.ok_or_else(|| Error::Validation("missing `dim`".into()))?;
        if dim < 2 {
            return Err(Error::Validation(format!("line {dim_line}: dimension must be at least 2")));
        }
        let (f, _) = f.ok_or_else(|| Error::Validation("missing `F`".into()))?;

        let mut phi_vec = Vec::with_capacity(dim);
        for k in 1..=dim {
            let (ast, _) = phi
                .remove(&k)
                .ok_or_else(|| Error::Validation(format!("missing component `phi{k}`")))?;
            phi_vec.push(ast);
        }
        if let Some((k, (_, line))) = phi.into_iter().next() {
            return Err(Error::Validation(format!(
                "line {line}: `phi{k}` exceeds dimension {dim}"
            )));
        }

        let model = ModelDef {
            name,
            dim,
            f,
            phi: phi_vec,
            domain,
            params,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut max_index = 0;
        let mut bad_index = None;
        let mut check_vars = |ast: &Ast| {
            ast.for_each_var(&mut |v| {
                max_index = max_index.max(v.index() + 1);
                if v.index() >= self.dim {
                    bad_index.get_or_insert(v);
                }
            })
        };
        check_vars(&self.f);
        self.phi.iter().for_each(&mut check_vars);
        self.domain.iter().for_each(&mut check_vars);
        if let Some(v) = bad_index {
            return Err(Error::Validation(format!(
                "variable {v} exceeds declared dimension {}",
                self.dim
            )));
        }
        if max_index != self.dim {
            return Err(Error::Validation(format!(
                "declared dimension {} but highest coordinate index used is {max_index}",
                self.dim
            )));
        }
        for (k, ast) in self.phi.iter().enumerate() {
            if let Some(v) = ast.vars().into_iter().find(|v| matches!(v, Var::Y(_))) {
                return Err(Error::Validation(format!(
                    "`phi{}` depends on direction variable {v}; it must depend on x only",
                    k + 1
                )));
            }
        }
        let mut undeclared = None;
        let mut check_params = |ast: &Ast| {
            ast.for_each_param(&mut |p| {
                if !self.params.contains_key(p) {
                    undeclared.get_or_insert_with(|| p.to_string());
                }
            })
        };
        check_params(&self.f);
        self.phi.iter().for_each(&mut check_params);
        self.domain.iter().for_each(&mut check_params);
        if let Some(p) = undeclared {
            return Err(Error::Validation(format!("undeclared identifier `{p}`")));
        }
        Ok(())
    }

    pub fn context<'a, S>(&'a self, x: &'a [S], y: &'a [S]) -> EvalContext<'a, S> {
        EvalContext {
            x,
            y,
            params: &self.params,
        }
    }

    pub fn eval_f<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        self.f.eval(&self.context(x, y))
    }

    /// φ(x) evaluated component-wise.
    pub fn phi_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let ctx = self.context(x, &[]);
        self.phi.iter().map(|a| a.eval(&ctx)).collect()
    }

    /// Values of the domain predicates; the point is admissible when all are positive.
    pub fn domain_values(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let ctx = self.context(x, y);
        self.domain.iter().map(|a| a.eval(&ctx)).collect()
    }

    pub fn in_domain(&self, x: &[f64], y: &[f64]) -> bool {
        match self.domain_values(x, y) {
            Ok(vals) => vals.iter().all(|v| *v > 0.0) && self.eval_f::<f64>(x, y).is_ok_and(|f| f.is_finite() && f > 0.0),
            Err(_) => false,
        }
    }
}

fn parse_ident_var(name: &str) -> Option<Var> {
    match super::parser::parse_expr(name).ok()? {
        Ast::Var(v) => Some(v),
        _ => None,
    }
}

fn parse_real(src: &str, line: usize, col: usize) -> Result<f64> {
    let ast = parse_expr_at(src, line, col)?;
    let v = match &ast {
        Ast::Num(v) => Some(*v),
        Ast::Neg(inner) => match **inner {
            Ast::Num(v) => Some(-v),
            _ => None,
        },
        _ => None,
    };
    v.ok_or_else(|| syntax_at(line, col, "parameter value must be a real literal", &["number"]))
}

fn parse_domain(src: &str, line: usize, col: usize) -> Result<Ast> {
    let mut p = Parser::new(src, line, col)?;
    let ast = p.expr()?;
    if p.peek().tok == Tok::Gt {
        p.bump();
        match p.peek().tok {
            Tok::Num(0.0) => {
                p.bump();
            }
            _ => return Err(p.error_here("domain predicates compare against zero", &["0"])),
        }
    }
    p.expect_end()?;
    Ok(ast)
}

impl fmt::Display for ModelDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "dim = {}", self.dim)?;
        for (k, v) in &self.params {
            writeln!(f, "param {k} = {v:?}")?;
        }
        writeln!(f, "F = {}", self.f)?;
        for (k, a) in self.phi.iter().enumerate() {
            writeln!(f, "phi{} = {a}", k + 1)?;
        }
        for d in &self.domain {
            writeln!(f, "domain = {d} > 0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EUCLID: &str = "\
# plane with radial field
name = euclid
dim = 2
F = sqrt(y1^2 + y2^2)
phi1 = -x1
phi2 = -x2
";

    #[test]
    fn parses_minimal_model() {
        let m = ModelDef::parse(EUCLID).unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(m.f.depth(), 3);
        let phi = m.phi_at(&[0.5, 2.0]).unwrap();
        assert_eq!(phi, vec![-0.5, -2.0]);
        assert!((m.eval_f(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 5.0f64).abs() < 1e-15);
    }

    #[test]
    fn display_round_trips() {
        let src = format!("{EUCLID}param c = -1.5\ndomain = x1 + c > 0\n");
        let m = ModelDef::parse(&src.replace("-x2", "c * x2")).unwrap();
        let again = ModelDef::parse(&m.to_string()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_direction_dependent_field() {
        let src = EUCLID.replace("phi2 = -x2", "phi2 = y1");
        assert!(matches!(ModelDef::parse(&src), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_undeclared_identifier() {
        let src = EUCLID.replace("-x1", "-k * x1");
        let err = ModelDef::parse(&src).unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("`k`")), "{err:?}");
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let src = EUCLID.replace("dim = 2", "dim = 3");
        assert!(ModelDef::parse(&src).is_err());
        let src = EUCLID.replace("phi2 = -x2", "phi2 = -x3");
        assert!(ModelDef::parse(&src).is_err());
    }

    #[test]
    fn syntax_error_location() {
        let src = EUCLID.replace("F = sqrt(y1^2 + y2^2)", "F = sqrt(y1^2 + y2^2");
        match ModelDef::parse(&src).unwrap_err() {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 4);
                assert_eq!(column, 21);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn domain_predicates() {
        let src = format!("{EUCLID}domain = x1 > 0\n");
        let m = ModelDef::parse(&src).unwrap();
        assert!(m.in_domain(&[1.0, 0.0], &[1.0, 0.0]));
        assert!(!m.in_domain(&[-1.0, 0.0], &[1.0, 0.0]));
        assert!(ModelDef::parse(&format!("{EUCLID}domain = x1 > 1\n")).is_err());
    }
}
