//! Parameterized prompt templates.
//!
//! A template couples a prompt pattern containing `{placeholder}` slots with
//! the categorical space of its free parameters, a sequence of derived
//! quantities, and a closed-form answer expression. Derived quantities are
//! evaluated in file order and may reassign a free parameter's name (some
//! templates rescale a parameter before later formulas use it); placeholders
//! see the final environment.
//!
//! Definitions ship as JSON data files so new spaces need no rebuild:
//!
//! ```json
//! {
//!   "id": 8,
//!   "prompt_pattern": "... {n} {obj}s and {k} {surface}s ...",
//!   "dimensions": [{"name": "x", "values": [2, 3]}],
//!   "derived": [{"name": "n", "expression": "k * x + leftover"}],
//!   "answer": "leftover"
//! }
//! ```
//!
//! Dimension values may be JSON integers, `"a/b"` rational strings, or
//! arbitrary text. Values are exact rationals internally; nothing passes
//! through floating point.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::space::{Assignment, Dimension, ParamSpace, Value};

#[derive(Debug, Deserialize)]
struct TemplateFile {
    id: u32,
    prompt_pattern: String,
    dimensions: Vec<DimensionFile>,
    #[serde(default)]
    derived: Vec<DerivedFile>,
    answer: String,
}

#[derive(Debug, Deserialize)]
struct DimensionFile {
    name: String,
    values: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct DerivedFile {
    name: String,
    expression: String,
}

/// A named derived quantity with its compiled expression.
#[derive(Clone, Debug)]
pub struct Derived {
    pub name: String,
    pub expr: Expr,
}

/// Template: prompt pattern + parameter space + derived quantities + answer.
#[derive(Clone, Debug)]
pub struct Template {
    pub id: u32,
    pub prompt_pattern: String,
    space: Arc<ParamSpace>,
    derived: Vec<Derived>,
    answer: Expr,
}

fn parse_value(raw: &serde_json::Value) -> Result<Value> {
    match raw {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Value::integer(i))
            } else {
                Err(Error::Template(format!(
                    "non-integer numeric literal {n}; write exact rationals as \"a/b\""
                )))
            }
        }
        serde_json::Value::String(s) => {
            let t = s.trim();
            if let Some((num, den)) = t.split_once('/') {
                if let (Ok(n), Ok(d)) = (num.trim().parse::<i64>(), den.trim().parse::<i64>()) {
                    if d == 0 {
                        return Err(Error::Template(format!("zero denominator in '{s}'")));
                    }
                    return Ok(Value::rational(n, d));
                }
            }
            if let Ok(i) = t.parse::<i64>() {
                return Ok(Value::integer(i));
            }
            Ok(Value::Text(s.clone()))
        }
        other => Err(Error::Template(format!(
            "unsupported dimension value {other}"
        ))),
    }
}

/// Split a pattern into literal runs and placeholder names.
fn placeholders(pattern: &str) -> Result<Vec<PatternPart>> {
    let mut parts = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        if c == '{' {
            let mut name = String::new();
            loop {
                match chars.next() {
                    Some('}') => break,
                    Some(ch) => name.push(ch),
                    None => {
                        return Err(Error::Template(format!(
                            "unterminated placeholder in pattern near '{{{name}'"
                        )))
                    }
                }
            }
            if !literal.is_empty() {
                parts.push(PatternPart::Literal(std::mem::take(&mut literal)));
            }
            parts.push(PatternPart::Placeholder(name));
        } else if c == '}' {
            return Err(Error::Template("unmatched '}' in pattern".into()));
        } else {
            literal.push(c);
        }
    }
    if !literal.is_empty() {
        parts.push(PatternPart::Literal(literal));
    }
    Ok(parts)
}

#[derive(Clone, Debug)]
enum PatternPart {
    Literal(String),
    Placeholder(String),
}

impl Template {
    pub fn from_json(text: &str) -> Result<Template> {
        let file: TemplateFile = serde_json::from_str(text)?;
        let mut dims = Vec::with_capacity(file.dimensions.len());
        for d in &file.dimensions {
            let values = d.values.iter().map(parse_value).collect::<Result<Vec<_>>>()?;
            dims.push(Dimension::new(d.name.clone(), values));
        }
        let space = ParamSpace::new(dims)?.into_arc();

        let derived = file
            .derived
            .iter()
            .map(|d| {
                Ok(Derived {
                    name: d.name.clone(),
                    expr: Expr::parse(&d.expression)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let answer = Expr::parse(&file.answer)?;

        let tpl = Template {
            id: file.id,
            prompt_pattern: file.prompt_pattern,
            space,
            derived,
            answer,
        };
        tpl.check_placeholders()?;
        Ok(tpl)
    }

    pub fn load(path: &Path) -> Result<Template> {
        let text = std::fs::read_to_string(path)?;
        Template::from_json(&text)
    }

    /// Every placeholder must be a dimension name or a derived quantity.
    fn check_placeholders(&self) -> Result<()> {
        let mut known: std::collections::BTreeSet<&str> = self
            .space
            .dims()
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        known.extend(self.derived.iter().map(|d| d.name.as_str()));
        for part in placeholders(&self.prompt_pattern)? {
            if let PatternPart::Placeholder(name) = part {
                if !known.contains(name.as_str()) {
                    return Err(Error::Template(format!(
                        "placeholder '{{{name}}}' is neither a dimension nor a derived quantity"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    /// Environment after substituting free values and evaluating derived
    /// quantities in order. Later derived entries may shadow earlier names.
    fn environment(&self, z: &Assignment) -> Result<BTreeMap<String, Value>> {
        self.space.validate(z)?;
        let mut env: BTreeMap<String, Value> = self
            .space
            .dims()
            .iter()
            .zip(z.indices())
            .map(|(d, &i)| (d.name.clone(), d.values[i].clone()))
            .collect();
        for d in &self.derived {
            let v = d.expr.eval(&env)?;
            env.insert(d.name.clone(), Value::Number(v));
        }
        Ok(env)
    }

    /// Substitute every placeholder, derived quantities included.
    pub fn render(&self, z: &Assignment) -> Result<String> {
        let env = self.environment(z)?;
        let mut out = String::with_capacity(self.prompt_pattern.len() + 32);
        for part in placeholders(&self.prompt_pattern)? {
            match part {
                PatternPart::Literal(s) => out.push_str(&s),
                PatternPart::Placeholder(name) => match env.get(&name) {
                    Some(v) => out.push_str(&v.render()),
                    None => {
                        return Err(Error::Template(format!(
                            "unresolved placeholder '{{{name}}}'"
                        )))
                    }
                },
            }
        }
        Ok(out)
    }

    /// Exact rational ground-truth answer for an assignment.
    pub fn ground_truth(&self, z: &Assignment) -> Result<BigRational> {
        let env = self.environment(z)?;
        self.answer.eval(&env)
    }
}

/// Ground truth as a display string (integer or `a/b`), the form pools store.
pub fn answer_to_string(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact rational from integer ratio; test helper shared by callers.
pub fn big_rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}
