//! Answer parsing and normalization.
//!
//! Cached generations arrive either as raw text containing a `\boxed{...}`
//! span or as already-extracted answer strings. Both funnel through
//! [`normalize_answer`], which strips LaTeX formatting, percent signs, and
//! digit-group commas, then parses integers, decimals, and `a/b` fractions
//! into exact rationals.
//!
//! Numeric equality is decided by rounding to nine significant digits
//! (relative quantization ~1e-9), so `705/19` and a long decimal expansion
//! of it count as the same answer while `37.11` does not. Unparseable or
//! missing answers never match anything: each occupies its own vote bucket,
//! so parser failures cannot manufacture a consensus.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// A normalized answer value.
#[derive(Clone, Debug, PartialEq)]
pub enum AnswerValue {
    /// Numeric answer as an exact rational.
    Number(BigRational),
    /// Non-numeric but non-empty content; compared by exact string equality.
    Text(String),
    /// No boxed span / nothing parseable. Counts as a unique wrong token.
    Absent,
}

impl AnswerValue {
    pub fn is_absent(&self) -> bool {
        matches!(self, AnswerValue::Absent)
    }
}

/// Extract the content of the final `\boxed{...}` span, or `Absent` when no
/// such span exists. Total function: never fails.
pub fn parse_boxed_answer(generation: &str) -> AnswerValue {
    let Some(start) = generation.rfind("\\boxed") else {
        return AnswerValue::Absent;
    };
    let rest = &generation[start + "\\boxed".len()..];
    let mut chars = rest.char_indices();
    // Skip whitespace between \boxed and the opening brace.
    let open = loop {
        match chars.next() {
            Some((i, '{')) => break i,
            Some((_, c)) if c.is_whitespace() => continue,
            _ => return AnswerValue::Absent,
        }
    };
    let mut depth = 1usize;
    let mut end = None;
    for (i, c) in chars {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    match end {
        Some(end) => normalize_answer(&rest[open + 1..end]),
        None => AnswerValue::Absent,
    }
}

/// Remove `\text{...}` groups (and their content) from a string.
fn strip_text_groups(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find("\\text") {
        out.push_str(&rest[..pos]);
        let after = &rest[pos + "\\text".len()..];
        let Some(brace) = after.find('{') else {
            rest = after;
            continue;
        };
        let mut depth = 1usize;
        let mut cut = after.len();
        for (i, c) in after[brace + 1..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        cut = brace + 1 + i + 1;
                        break;
                    }
                }
                _ => {}
            }
        }
        rest = &after[cut.min(after.len())..];
    }
    out.push_str(rest);
    out
}

/// Rewrite `\frac{a}{b}` / `\dfrac{a}{b}` / `\tfrac{a}{b}` as `(a)/(b)`.
fn rewrite_fracs(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    loop {
        let hit = ["\\dfrac", "\\tfrac", "\\frac"]
            .iter()
            .filter_map(|m| rest.find(m).map(|p| (p, m.len())))
            .min();
        let Some((pos, mlen)) = hit else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..pos]);
        let after = &rest[pos + mlen..];
        match read_group(after).and_then(|(a, r)| read_group(r).map(|(b, r2)| (a, b, r2))) {
            Some((a, b, remainder)) => {
                out.push('(');
                out.push_str(a);
                out.push_str(")/(");
                out.push_str(b);
                out.push(')');
                rest = remainder;
            }
            None => {
                // Malformed frac; drop the macro name and continue.
                rest = after;
            }
        }
    }
}

/// Read one `{...}` group, returning its body and the remaining input.
fn read_group(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        Some((_, '{')) => {}
        _ => return None,
    }
    let mut depth = 1usize;
    for (i, c) in chars {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((&s[1..i], &s[i + 1..]));
                }
            }
            _ => {}
        }
    }
    None
}

/// Normalize a raw answer string to a comparable value.
pub fn normalize_answer(raw: &str) -> AnswerValue {
    let mut s = strip_text_groups(raw);
    s = rewrite_fracs(&s);
    for pat in [
        "\\left", "\\right", "\\!", "\\,", "\\;", "\\:", "\\%", "\\$", "\\(", "\\)", "\\[",
        "\\]", "$", "%", "~",
    ] {
        s = s.replace(pat, "");
    }
    let s = s.trim().trim_end_matches('.').trim();
    if s.is_empty() {
        return AnswerValue::Absent;
    }
    match parse_numeric(s) {
        Some(r) => AnswerValue::Number(r),
        None => AnswerValue::Text(s.to_string()),
    }
}

/// Parse `int`, `decimal`, or `a/b` (components may be signed integers or
/// decimals) into an exact rational. Digit-group commas are removed first.
fn parse_numeric(s: &str) -> Option<BigRational> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace() && *c != ',').collect();
    if compact.is_empty() {
        return None;
    }
    // Fraction form: split on a single '/'; parenthesized parts allowed.
    if let Some((a, b)) = compact.split_once('/') {
        let num = parse_decimal(a.trim_matches(|c| c == '(' || c == ')'))?;
        let den = parse_decimal(b.trim_matches(|c| c == '(' || c == ')'))?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    parse_decimal(&compact)
}

/// Exact rational from a signed integer or decimal literal.
fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mut numer: BigInt = if int_part.is_empty() {
        BigInt::zero()
    } else {
        int_part.parse().ok()?
    };
    let mut denom = BigInt::from(1);
    for c in frac_part.chars() {
        numer = numer * 10 + c.to_digit(10).unwrap();
        denom *= 10;
    }
    if neg {
        numer = -numer;
    }
    Some(BigRational::new(numer, denom))
}

/// Canonical vote key: numeric values rounded to nine significant digits,
/// text values tagged verbatim. `Absent` has no shared key; callers assign
/// unique per-slot tokens.
pub fn vote_key(v: &AnswerValue) -> Option<String> {
    match v {
        AnswerValue::Number(r) => Some(numeric_key(r)),
        AnswerValue::Text(t) => Some(format!("t:{t}")),
        AnswerValue::Absent => None,
    }
}

const KEY_DIGITS: u32 = 9;

fn numeric_key(r: &BigRational) -> String {
    if r.is_zero() {
        return "n:0".to_string();
    }
    let abs = r.abs();
    // Decimal exponent: smallest e with |r| < 10^(e+1).
    let mut e: i64 = {
        let num_digits = abs.numer().to_string().len() as i64;
        let den_digits = abs.denom().to_string().len() as i64;
        num_digits - den_digits
    };
    let pow = |k: i64| -> BigRational {
        let p = BigInt::from(10).pow(k.unsigned_abs() as u32);
        if k >= 0 {
            BigRational::from_integer(p)
        } else {
            BigRational::new(BigInt::from(1), p)
        }
    };
    // Correct the estimate (off by at most one either way).
    while abs >= pow(e + 1) {
        e += 1;
    }
    while abs < pow(e) {
        e -= 1;
    }
    // Scale to [10^(d-1), 10^d) and round half away from zero.
    let scaled = &abs * pow(KEY_DIGITS as i64 - 1 - e);
    let floor = scaled.floor();
    let frac = &scaled - &floor;
    let mut mantissa = floor.to_integer();
    if frac >= BigRational::new(BigInt::from(1), BigInt::from(2)) {
        mantissa += 1;
    }
    // Rounding up may carry into one more digit.
    let limit = BigInt::from(10).pow(KEY_DIGITS);
    let mut exp = e;
    if mantissa >= limit {
        mantissa /= 10;
        exp += 1;
    }
    let sign = if r.is_negative() { "-" } else { "" };
    format!("n:{sign}{mantissa}e{exp}")
}

/// Equality under the nine-significant-digit quantization.
pub fn answers_equal(a: &AnswerValue, b: &AnswerValue) -> bool {
    match (vote_key(a), vote_key(b)) {
        (Some(ka), Some(kb)) => ka == kb,
        _ => false,
    }
}
