//! Factorized categorical parameter spaces.
//!
//! A space is an ordered list of named dimensions, each with a finite domain
//! of atomic values. Instances are indexed in mixed radix with dimension 0
//! most significant, which keeps indices stable across runs and lets caches
//! key on them.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atomic domain value: text, or an exact rational (integers included).
/// Numeric values are kept exact because answer formulas multiply and divide
/// them; floats would corrupt ground truth.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Text(String),
    Number(BigRational),
}

impl Value {
    pub fn integer(n: i64) -> Self {
        Value::Number(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Value::Number(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn as_number(&self) -> Option<&BigRational> {
        match self {
            Value::Number(r) => Some(r),
            Value::Text(_) => None,
        }
    }

    /// Rendering used for prompt substitution: integers as plain digits,
    /// non-integral rationals as `num/den`, text verbatim.
    pub fn render(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Number(r) => {
                if r.is_integer() {
                    r.numer().to_string()
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

/// One categorical dimension: a name plus its ordered domain.
#[derive(Clone, Debug)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<Value>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, values: Vec<Value>) -> Self {
        Dimension {
            name: name.into(),
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }
}

/// A concrete instance: one value index per dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// Factorized categorical space with uniform base distribution.
#[derive(Clone, Debug)]
pub struct ParamSpace {
    dims: Vec<Dimension>,
    total_size: u128,
}

impl ParamSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("space needs at least one dimension".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        let mut total: u128 = 1;
        for d in &dims {
            if d.values.is_empty() {
                return Err(Error::InvalidSpace(format!("dimension '{}' has an empty domain", d.name)));
            }
            let distinct: std::collections::BTreeSet<String> =
                d.values.iter().map(|v| format!("{v:?}")).collect();
            if distinct.len() != d.values.len() {
                return Err(Error::InvalidSpace(format!(
                    "dimension '{}' has duplicate values",
                    d.name
                )));
            }
            if !names.insert(d.name.clone()) {
                return Err(Error::InvalidSpace(format!("duplicate dimension name '{}'", d.name)));
            }
            total = total
                .checked_mul(d.values.len() as u128)
                .ok_or_else(|| Error::InvalidSpace("total size overflows u128".into()))?;
        }
        Ok(ParamSpace { dims, total_size: total })
    }

    /// Space with integer domains `0..size` per dimension; used for synthetic
    /// models defined by shape alone.
    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        let dims = shape
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                Dimension::new(
                    format!("d{i}"),
                    (0..s as i64).map(Value::integer).collect(),
                )
            })
            .collect();
        ParamSpace::new(dims)
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn dim_size(&self, i: usize) -> usize {
        self.dims[i].size()
    }

    pub fn total_size(&self) -> u128 {
        self.total_size
    }

    pub fn validate(&self, z: &Assignment) -> Result<()> {
        if z.0.len() != self.dims.len() {
            return Err(Error::InvalidAssignment(format!(
                "assignment has {} indices, space has {} dimensions",
                z.0.len(),
                self.dims.len()
            )));
        }
        for (i, (&idx, d)) in z.0.iter().zip(&self.dims).enumerate() {
            if idx >= d.size() {
                return Err(Error::InvalidAssignment(format!(
                    "index {idx} out of range for dimension {i} ('{}', size {})",
                    d.name,
                    d.size()
                )));
            }
        }
        Ok(())
    }

    /// Exact uniform probability 1 / total_size.
    pub fn uniform_pmf(&self, z: &Assignment) -> Result<BigRational> {
        self.validate(z)?;
        Ok(BigRational::new(BigInt::one(), BigInt::from(self.total_size)))
    }

    /// Uniform pmf as f64 built the same way proposal pmfs are (sum of
    /// per-dimension logs, exponentiated), so that P(z)/Q(z) is exactly 1
    /// when Q is the uniform proposal.
    pub fn uniform_pmf_f64(&self) -> f64 {
        self.uniform_ln_pmf_f64().exp()
    }

    pub fn uniform_ln_pmf_f64(&self) -> f64 {
        self.dims
            .iter()
            .map(|d| (1.0 / d.size() as f64).ln())
            .sum()
    }

    /// Mixed-radix decode, dimension 0 most significant.
    pub fn index_to_assignment(&self, idx: u128) -> Result<Assignment> {
        if idx >= self.total_size {
            return Err(Error::IndexOutOfRange {
                index: idx,
                size: self.total_size,
            });
        }
        let mut rem = idx;
        let mut out = vec![0usize; self.dims.len()];
        for (slot, d) in out.iter_mut().zip(&self.dims).rev() {
            let s = d.size() as u128;
            *slot = (rem % s) as usize;
            rem /= s;
        }
        Ok(Assignment(out))
    }

    /// Mixed-radix encode; inverse of [`ParamSpace::index_to_assignment`].
    pub fn assignment_to_index(&self, z: &Assignment) -> Result<u128> {
        self.validate(z)?;
        let mut idx: u128 = 0;
        for (&i, d) in z.0.iter().zip(&self.dims) {
            idx = idx * d.size() as u128 + i as u128;
        }
        Ok(idx)
    }

    /// Iterate every assignment in index order. Refuses when the space
    /// exceeds `budget`, reporting the budget that would be required.
    pub fn enumerate(&self, budget: u128) -> Result<AssignmentIter<'_>> {
        if self.total_size > budget {
            return Err(Error::BudgetExceeded {
                required: self.total_size,
                budget,
            });
        }
        Ok(AssignmentIter {
            space: self,
            next: 0,
        })
    }

    pub fn value(&self, dim: usize, idx: usize) -> &Value {
        &self.dims[dim].values[idx]
    }

    /// Values of an assignment, in dimension order.
    pub fn values_of<'a>(&'a self, z: &'a Assignment) -> impl Iterator<Item = &'a Value> + 'a {
        z.0.iter().enumerate().map(move |(d, &i)| self.value(d, i))
    }

    pub fn into_arc(self) -> Arc<ParamSpace> {
        Arc::new(self)
    }
}

#[derive(Debug)]
pub struct AssignmentIter<'a> {
    space: &'a ParamSpace,
    next: u128,
}

impl Iterator for AssignmentIter<'_> {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.next >= self.space.total_size {
            return None;
        }
        let z = self
            .space
            .index_to_assignment(self.next)
            .expect("index below total_size");
        self.next += 1;
        Some(z)
    }
}
