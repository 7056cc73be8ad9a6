//! Programmable sum-of-products learning rules, `dw = sum_k C_k prod_l V_kl`.
//!
//! Each factor is a state variable plus a constant, and a term may name a
//! dependency variable that must be non-zero for the term to contribute at
//! all (the hardware's learning trigger). Terms are evaluated left to right
//! as `((C * f1) * f2) * ...` so that a rule can reproduce a hand-written
//! update bit for bit.
//!
//! Text form, one item per line, `#` starts a comment:
//!
//! ```text
//! const eta = 0.5
//! const c = 64
//! term eta @post_spike pre_trace (post_trace - c)
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variable {
    PreTrace,
    PostTrace,
    PreSpike,
    PostSpike,
    Constant(f64),
}

impl Variable {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "pre_trace" => Some(Variable::PreTrace),
            "post_trace" => Some(Variable::PostTrace),
            "pre_spike" => Some(Variable::PreSpike),
            "post_spike" => Some(Variable::PostSpike),
            _ => None,
        }
    }

    fn resolve(&self, ctx: &Bindings) -> Result<f64> {
        let (value, name) = match self {
            Variable::Constant(c) => return Ok(*c),
            Variable::PreTrace => (ctx.pre_trace, "pre_trace"),
            Variable::PostTrace => (ctx.post_trace, "post_trace"),
            Variable::PreSpike => (ctx.pre_spike, "pre_spike"),
            Variable::PostSpike => (ctx.post_spike, "post_spike"),
        };
        value.ok_or(Error::UnboundVariable(name))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::PreTrace => f.write_str("pre_trace"),
            Variable::PostTrace => f.write_str("post_trace"),
            Variable::PreSpike => f.write_str("pre_spike"),
            Variable::PostSpike => f.write_str("post_spike"),
            Variable::Constant(c) => write!(f, "{c}"),
        }
    }
}

/// `var + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub var: Variable,
    pub offset: f64,
}

impl Factor {
    pub fn of(var: Variable) -> Self {
        Self { var, offset: 0.0 }
    }

    pub fn offset(var: Variable, offset: f64) -> Self {
        Self { var, offset }
    }

    fn value(&self, ctx: &Bindings) -> Result<f64> {
        let v = self.var.resolve(ctx)?;
        Ok(if self.offset == 0.0 { v } else { v + self.offset })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub scale: f64,
    pub dependency: Option<Variable>,
    pub factors: Vec<Factor>,
}

/// Values of the rule variables at one synapse.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub pre_trace: Option<f64>,
    pub post_trace: Option<f64>,
    pub pre_spike: Option<f64>,
    pub post_spike: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SumOfProductsRule {
    pub terms: Vec<Term>,
}

impl SumOfProductsRule {
    /// The offset-encoded error-triggered rule `eta * p * (y - c)`, gated by
    /// the post-synaptic learning trigger.
    pub fn soel(eta: f64, offset: i32) -> Self {
        Self {
            terms: vec![Term {
                scale: eta,
                dependency: Some(Variable::PostSpike),
                factors: vec![
                    Factor::of(Variable::PreTrace),
                    Factor::offset(Variable::PostTrace, -f64::from(offset)),
                ],
            }],
        }
    }

    pub fn eval(&self, ctx: &Bindings) -> Result<f64> {
        let mut acc: Option<f64> = None;
        for term in &self.terms {
            if let Some(dep) = &term.dependency {
                if dep.resolve(ctx)? == 0.0 {
                    continue;
                }
            }
            let mut value = term.scale;
            for factor in &term.factors {
                value *= factor.value(ctx)?;
            }
            acc = Some(match acc {
                None => value,
                Some(a) => a + value,
            });
        }
        Ok(acc.unwrap_or(0.0))
    }

    /// Multiplies every term's scale by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    scale: t.scale * k,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut consts: BTreeMap<String, f64> = BTreeMap::new();
        let mut terms = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tokens = tokenize(body);
            let err = |msg: String| Error::RuleSyntax { line, msg };
            match tokens[0].as_str() {
                "const" => {
                    if tokens.len() != 4 || tokens[2] != "=" {
                        return Err(err("expected `const NAME = NUMBER`".into()));
                    }
                    let name = &tokens[1];
                    if Variable::from_name(name).is_some() {
                        return Err(err(format!("`{name}` is a reserved variable name")));
                    }
                    let value = resolve_number(&tokens[3], &consts).ok_or_else(|| err(format!("bad number `{}`", tokens[3])))?;
                    consts.insert(name.clone(), value);
                }
                "term" => {
                    let mut it = tokens[1..].iter().peekable();
                    let scale_tok = it.next().ok_or_else(|| err("missing term scale".into()))?;
                    let scale = resolve_number(scale_tok, &consts).ok_or_else(|| err(format!("unknown scale `{scale_tok}`")))?;
                    let mut dependency = None;
                    if let Some(tok) = it.peek() {
                        if let Some(name) = tok.strip_prefix('@') {
                            dependency = Some(resolve_variable(name, &consts).ok_or_else(|| err(format!("unbound variable `{name}`")))?);
                            it.next();
                        }
                    }
                    let mut factors = Vec::new();
                    while let Some(tok) = it.next() {
                        if tok == "(" {
                            let name = it.next().ok_or_else(|| err("unterminated factor".into()))?;
                            let var = resolve_variable(name, &consts).ok_or_else(|| err(format!("unbound variable `{name}`")))?;
                            let op = it.next().ok_or_else(|| err("unterminated factor".into()))?;
                            let sign = match op.as_str() {
                                "+" => 1.0,
                                "-" => -1.0,
                                other => return Err(err(format!("expected `+` or `-`, found `{other}`"))),
                            };
                            let k_tok = it.next().ok_or_else(|| err("unterminated factor".into()))?;
                            let k = resolve_number(k_tok, &consts).ok_or_else(|| err(format!("unknown constant `{k_tok}`")))?;
                            if it.next().map(String::as_str) != Some(")") {
                                return Err(err("expected `)`".into()));
                            }
                            factors.push(Factor::offset(var, sign * k));
                        } else {
                            let var = resolve_variable(tok, &consts).ok_or_else(|| err(format!("unbound variable `{tok}`")))?;
                            factors.push(Factor::of(var));
                        }
                    }
                    terms.push(Term {
                        scale,
                        dependency,
                        factors,
                    });
                }
                other => return Err(err(format!("expected `const` or `term`, found `{other}`"))),
            }
        }
        Ok(Self { terms })
    }

    /// Canonical text form accepted by [`SumOfProductsRule::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            out.push_str(&format!("term {}", t.scale));
            if let Some(dep) = &t.dependency {
                out.push_str(&format!(" @{dep}"));
            }
            for f in &t.factors {
                if f.offset == 0.0 {
                    out.push_str(&format!(" {}", f.var));
                } else if f.offset < 0.0 {
                    out.push_str(&format!(" ({} - {})", f.var, -f.offset));
                } else {
                    out.push_str(&format!(" ({} + {})", f.var, f.offset));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn tokenize(line: &str) -> Vec<String> {
    line.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn resolve_number(tok: &str, consts: &BTreeMap<String, f64>) -> Option<f64> {
    tok.parse::<f64>().ok().or_else(|| consts.get(tok).copied())
}

fn resolve_variable(tok: &str, consts: &BTreeMap<String, f64>) -> Option<Variable> {
    Variable::from_name(tok).or_else(|| resolve_number(tok, consts).map(Variable::Constant))
}
