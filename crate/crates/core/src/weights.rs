//! Positive weight sequences on `n >= 1` and enclosed sums of their powers.
//!
//! A weight is anything implementing [`Weight`]. The closed-form and tabulated
//! families live in [`WeightFamily`], which also owns the textual grammar
//! shared with the command line:
//!
//! ```text
//! power:<alpha> | critlog:<p> | shift:<k>(<spec>) | table:<path>
//! scale:<c>(<spec>) | interleave(<even spec>,<odd spec>)
//! ```

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::enclosure::{Accumulator, Enclosure, TERM_REL_ERROR};
use crate::error::{Error, Result};

/// Explicit terms are summed up to this index before the integral bracket.
pub const TAIL_CUT: u64 = 10_000;

/// The Hardy exponent, `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Exponent of the dual sum, `-1/(p-1)`.
    #[inline]
    pub fn dual(self) -> f64 {
        -1.0 / (self.0 - 1.0)
    }

    /// `p^p / (p-1)^(p-1)`.
    pub fn k_p(self) -> f64 {
        let p = self.0;
        (p * p.ln() - (p - 1.0) * (p - 1.0).ln()).exp()
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Exponent::new(p)
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.0
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a tabulated weight continues past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    None,
    /// `w(n) = w(L) * (n/L)^exponent` beyond the table, asserted monotone from `valid_from`.
    PowerLike { exponent: f64, valid_from: u64 },
    /// Finitely supported: zero past the table.
    Zero,
}

/// Two-sided power bounds `lower.0 * n^lower.1 <= w(n) <= upper.0 * n^upper.1`
/// for all `n >= from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Power {
        from: u64,
        lower: (f64, f64),
        upper: (f64, f64),
    },
    /// `w(n) = 0` for `n >= from`.
    Zero { from: u64 },
    Unknown,
}

/// Leading-order behaviour `w(n) ~ coef * n^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asymptotic {
    Power { coef: f64, exponent: f64 },
    Zero,
    Unknown,
}

/// A nonnegative weight on `n >= 1`.
pub trait Weight: fmt::Debug + Send + Sync {
    fn eval(&self, n: u64) -> Result<f64>;

    /// Power bounds valid from `from` on.
    fn envelope(&self, from: u64) -> Envelope;

    fn asymptotic(&self) -> Asymptotic {
        Asymptotic::Unknown
    }

    /// Relative error of a single [`Weight::eval`].
    fn eval_rel_error(&self) -> f64 {
        8.0 * f64::EPSILON
    }

    /// `sum_{k=1..n} w(k)^q`; the empty sum at `n = 0` is exactly zero.
    fn powered_partial_sum(&self, q: f64, n: u64) -> Result<Enclosure> {
        let mut acc = Accumulator::new();
        self.accumulate_powered(q, 1, n, &mut acc)?;
        Ok(acc.enclosure())
    }

    /// `sum_{k>=r} w(k)^q`.
    fn powered_tail_sum(&self, q: f64, r: u64) -> Result<Enclosure> {
        envelope_tail(self, q, r.max(1))
    }

    /// Adds `w(k)^q` for `k` in `[from, to]` to `acc`.
    fn accumulate_powered(&self, q: f64, from: u64, to: u64, acc: &mut Accumulator) -> Result<()> {
        let rel = (1.0 + q.abs()) * self.eval_rel_error() + TERM_REL_ERROR;
        for k in from..=to {
            let t = powered_term(self.eval(k)?, q);
            acc.push_with_error(t, t.abs() * rel);
        }
        Ok(())
    }
}

#[inline]
fn powered_term(w: f64, q: f64) -> f64 {
    if q == 1.0 {
        w
    } else if q == -1.0 {
        1.0 / w
    } else {
        w.powf(q)
    }
}

/// Widen `[lo, hi]` by a relative budget of `ulps` binary64 epsilons.
fn widen(lo: f64, hi: f64, ulps: f64) -> Enclosure {
    let r = ulps * f64::EPSILON;
    let lo = if lo.is_finite() && lo > 0.0 {
        (lo * (1.0 - r)).next_down()
    } else {
        lo
    };
    let hi = if hi.is_finite() && hi > 0.0 {
        (hi * (1.0 + r)).next_up()
    } else {
        hi
    };
    Enclosure::new(lo, hi)
}

/// `sum_{k>=a} k^e` for `a >= 1`: explicit terms below [`TAIL_CUT`], then
/// the trapezoid/midpoint bracket for the convex decreasing `t^e`.
pub fn power_tail(e: f64, a: u64) -> Enclosure {
    let a = a.max(1);
    if e >= -1.0 {
        return Enclosure::divergent();
    }
    let cut = a.max(TAIL_CUT);
    let mut acc = Accumulator::new();
    for k in a..cut {
        acc.push_evaluated((k as f64).powf(e));
    }
    acc.enclosure() + power_integral_bracket(e, cut)
}

/// Hermite-Hadamard bracket for `sum_{k>=c} k^e`, `e < -1`, `c >= 1`.
fn power_integral_bracket(e: f64, c: u64) -> Enclosure {
    let c = c as f64;
    let m = -e - 1.0;
    let lo = c.powf(-m) / m + 0.5 * c.powf(e);
    let hi = (c - 0.5).powf(-m) / m;
    widen(lo, hi, 8.0)
}

/// Tail bound from a weight's envelope, with explicit terms up to the cut.
fn envelope_tail<W: Weight + ?Sized>(w: &W, q: f64, r: u64) -> Result<Enclosure> {
    let cut = r.max(TAIL_CUT);
    let explicit = {
        let mut acc = Accumulator::new();
        w.accumulate_powered(q, r, cut - 1, &mut acc)?;
        acc.enclosure()
    };
    let rest = match w.envelope(cut) {
        Envelope::Unknown => {
            return Err(Error::TailUnknown(format!(
                "no decay model for {w:?} beyond n = {cut}"
            )))
        }
        Envelope::Zero { .. } => {
            if q > 0.0 {
                Enclosure::zero()
            } else {
                Enclosure::divergent()
            }
        }
        Envelope::Power { lower, upper, .. } => {
            // Bounds on w^q: order flips for negative q.
            let (small, large) = if q >= 0.0 { (lower, upper) } else { (upper, lower) };
            let lo = if small.0 <= 0.0 {
                0.0
            } else {
                small.0.powf(q) * power_tail(small.1 * q, cut).lo
            };
            let hi = if large.0 <= 0.0 {
                if q >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                large.0.powf(q) * power_tail(large.1 * q, cut).hi
            };
            widen(lo, hi.max(lo), 8.0)
        }
    };
    Ok(explicit + rest)
}

/// Closed-form and tabulated weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFamily {
    /// `n^alpha`
    Power(f64),
    /// `1` at `n = 1`, `1/(n log^p n)` from `n = 2`.
    CriticalLog(f64),
    /// `n -> base(n + k)`
    Shift { k: u64, base: Box<WeightFamily> },
    /// `n -> factor * base(n)`
    Scaled { factor: f64, base: Box<WeightFamily> },
    /// `w(2m) = even(m)`, `w(2m-1) = odd(m)`.
    Interleave {
        even: Box<WeightFamily>,
        odd: Box<WeightFamily>,
    },
    Table { values: Arc<Vec<f64>>, tail: TailModel },
}

impl WeightFamily {
    pub fn power(alpha: f64) -> Self {
        WeightFamily::Power(alpha)
    }

    pub fn shift(k: u64, base: WeightFamily) -> Self {
        WeightFamily::Shift {
            k,
            base: Box::new(base),
        }
    }

    pub fn scaled(factor: f64, base: WeightFamily) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidWeight(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(WeightFamily::Scaled {
            factor,
            base: Box::new(base),
        })
    }

    pub fn interleave(even: WeightFamily, odd: WeightFamily) -> Self {
        WeightFamily::Interleave {
            even: Box::new(even),
            odd: Box::new(odd),
        }
    }

    pub fn table(values: Vec<f64>, tail: TailModel) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidWeight("table is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidWeight(format!(
                "table entry n = {} is not a positive finite number ({v})",
                i + 1
            )));
        }
        if let TailModel::PowerLike { exponent, valid_from } = tail {
            if !exponent.is_finite() || valid_from == 0 || valid_from > values.len() as u64 + 1 {
                return Err(Error::InvalidWeight(format!(
                    "power tail needs a finite exponent and 1 <= from <= {}",
                    values.len() + 1
                )));
            }
        }
        Ok(WeightFamily::Table {
            values: Arc::new(values),
            tail,
        })
    }

    /// Parse the weight grammar; `table:` paths are read from disk.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut p = Parser { src: spec, pos: 0 };
        let w = p.weight()?;
        p.skip_ws();
        if p.pos != spec.len() {
            return Err(Error::parse(&spec[p.pos..], "trailing input"));
        }
        Ok(w)
    }

    /// Load a CSV table of `n,value` rows with an optional `# tail=...` header.
    pub fn load_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::table_from_csv(&text)
    }

    pub fn table_from_csv(text: &str) -> Result<Self> {
        let mut tail = TailModel::None;
        let mut values = Vec::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(t) = comment.trim().strip_prefix("tail=") {
                    tail = parse_tail_header(t)?;
                }
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (n, v) = match (cols.next(), cols.next(), cols.next()) {
                (Some(n), Some(v), None) => (n, v),
                _ => return Err(Error::parse(line, "expected `n,value`")),
            };
            if values.is_empty() && n.parse::<u64>().is_err() {
                // header row such as `n,value`
                continue;
            }
            let n: u64 = n.parse().map_err(|_| Error::parse(n, "row index"))?;
            let v: f64 = v.parse().map_err(|_| Error::parse(v, "row value"))?;
            if n != values.len() as u64 + 1 {
                return Err(Error::parse(
                    line,
                    format!("rows must be consecutive from 1, expected n = {}", values.len() + 1),
                ));
            }
            values.push(v);
        }
        Self::table(values, tail)
    }

    fn table_eval(values: &[f64], tail: TailModel, n: u64) -> Result<f64> {
        let len = values.len() as u64;
        if n <= len {
            return Ok(values[(n - 1) as usize]);
        }
        match tail {
            TailModel::None => Err(Error::OutOfTable {
                index: n,
                len: values.len(),
            }),
            TailModel::Zero => Ok(0.0),
            TailModel::PowerLike { exponent, .. } => {
                let last = values[values.len() - 1];
                Ok(last * (n as f64 / len as f64).powf(exponent))
            }
        }
    }
}

fn parse_tail_header(t: &str) -> Result<TailModel> {
    let t = t.trim();
    if t == "zero" {
        return Ok(TailModel::Zero);
    }
    if t == "none" {
        return Ok(TailModel::None);
    }
    let rest = t
        .strip_prefix("power:")
        .ok_or_else(|| Error::parse(t, "tail must be `zero` or `power:<s>,from=<n>`"))?;
    let (s, from) = match rest.split_once(',') {
        Some((s, f)) => {
            let f = f
                .trim()
                .strip_prefix("from=")
                .ok_or_else(|| Error::parse(f, "expected `from=<n>`"))?;
            (s, f.parse::<u64>().map_err(|_| Error::parse(f, "tail start"))?)
        }
        None => (rest, 1),
    };
    let exponent = s
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(s, "tail exponent"))?;
    Ok(TailModel::PowerLike {
        exponent,
        valid_from: from,
    })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn token_here(&self) -> String {
        let r = self.rest();
        let end = r.find([',', ')', '(']).unwrap_or(r.len());
        if end == 0 {
            r.chars().take(1).collect()
        } else {
            r[..end].to_string()
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let tok = self.token_here();
            Err(Error::parse(
                if tok.is_empty() { "<end>".into() } else { tok },
                format!("expected `{s}`"),
            ))
        }
    }

    fn atom(&mut self) -> &'a str {
        self.skip_ws();
        let r = self.rest();
        let end = r.find([',', ')', '(']).unwrap_or(r.len());
        self.pos += end;
        r[..end].trim()
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let a = self.atom();
        let v: f64 = a
            .parse()
            .map_err(|_| Error::parse(a, format!("{what} must be a number")))?;
        if !v.is_finite() {
            return Err(Error::parse(a, format!("{what} must be finite")));
        }
        Ok(v)
    }

    fn weight(&mut self) -> Result<WeightFamily> {
        self.skip_ws();
        if self.eat("power:") {
            return Ok(WeightFamily::Power(self.number("exponent")?));
        }
        if self.eat("critlog:") {
            let start = self.pos;
            let p = self.number("p")?;
            if p <= 1.0 {
                return Err(Error::parse(&self.src[start..self.pos], "critlog needs p > 1"));
            }
            return Ok(WeightFamily::CriticalLog(p));
        }
        if self.eat("shift:") {
            let a = self.atom();
            let k: u64 = a
                .parse()
                .map_err(|_| Error::parse(a, "shift must be a nonnegative integer"))?;
            self.expect("(")?;
            let base = self.weight()?;
            self.expect(")")?;
            return Ok(WeightFamily::shift(k, base));
        }
        if self.eat("scale:") {
            let start = self.pos;
            let c = self.number("scale factor")?;
            if c <= 0.0 {
                return Err(Error::parse(&self.src[start..self.pos], "scale factor must be > 0"));
            }
            self.expect("(")?;
            let base = self.weight()?;
            self.expect(")")?;
            return WeightFamily::scaled(c, base);
        }
        if self.eat("interleave") {
            self.expect("(")?;
            let even = self.weight()?;
            self.expect(",")?;
            let odd = self.weight()?;
            self.expect(")")?;
            return Ok(WeightFamily::interleave(even, odd));
        }
        if self.eat("table:") {
            self.skip_ws();
            let r = self.rest();
            let end = r.find([',', ')']).unwrap_or(r.len());
            let path = r[..end].trim();
            self.pos += end;
            if path.is_empty() {
                return Err(Error::parse("table:", "missing path"));
            }
            return WeightFamily::load_table(Path::new(path));
        }
        let tok = self.token_here();
        Err(Error::parse(
            if tok.is_empty() { "<empty>".into() } else { tok },
            "unknown weight family (power, critlog, shift, scale, interleave, table)",
        ))
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFamily::Power(a) => write!(f, "power:{a}"),
            WeightFamily::CriticalLog(p) => write!(f, "critlog:{p}"),
            WeightFamily::Shift { k, base } => write!(f, "shift:{k}({base})"),
            WeightFamily::Scaled { factor, base } => write!(f, "scale:{factor}({base})"),
            WeightFamily::Interleave { even, odd } => write!(f, "interleave({even},{odd})"),
            WeightFamily::Table { values, tail } => {
                write!(f, "table[{}]", values.len())?;
                match tail {
                    TailModel::None => Ok(()),
                    TailModel::Zero => write!(f, "+zero"),
                    TailModel::PowerLike { exponent, valid_from } => {
                        write!(f, "+power:{exponent},from={valid_from}")
                    }
                }
            }
        }
    }
}

/// Rescale a `(coef, exponent)` bound on `base(m)` with `m` between `n*lo_ratio`
/// and `n*hi_ratio` into a bound in terms of `n`.
fn rebase(bound: (f64, f64), lo_ratio: f64, hi_ratio: f64, lower: bool) -> (f64, f64) {
    let (c, s) = bound;
    let a = lo_ratio.powf(s);
    let b = hi_ratio.powf(s);
    let f = if lower { a.min(b) } else { a.max(b) };
    (c * f, s)
}

fn combine_min(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.min(b.1))
}

fn combine_max(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.max(b.1))
}

impl Weight for WeightFamily {
    fn eval(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("weights are indexed from n = 1".into()));
        }
        match self {
            WeightFamily::Power(a) => Ok(if *a == 0.0 {
                1.0
            } else {
                (n as f64).powf(*a)
            }),
            WeightFamily::CriticalLog(p) => Ok(if n == 1 {
                1.0
            } else {
                let x = n as f64;
                1.0 / (x * x.ln().powf(*p))
            }),
            WeightFamily::Shift { k, base } => base.eval(n + k),
            WeightFamily::Scaled { factor, base } => Ok(factor * base.eval(n)?),
            WeightFamily::Interleave { even, odd } => {
                if n.is_multiple_of(2) {
                    even.eval(n / 2)
                } else {
                    odd.eval(n.div_ceil(2))
                }
            }
            WeightFamily::Table { values, tail } => Self::table_eval(values, *tail, n),
        }
    }

    fn eval_rel_error(&self) -> f64 {
        match self {
            WeightFamily::Power(_) => TERM_REL_ERROR,
            WeightFamily::CriticalLog(_) => 4.0 * TERM_REL_ERROR,
            WeightFamily::Shift { base, .. } => base.eval_rel_error(),
            WeightFamily::Scaled { base, .. } => base.eval_rel_error() + f64::EPSILON,
            WeightFamily::Interleave { even, odd } => even.eval_rel_error().max(odd.eval_rel_error()),
            WeightFamily::Table { .. } => TERM_REL_ERROR,
        }
    }

    fn envelope(&self, from: u64) -> Envelope {
        let from = from.max(1);
        match self {
            WeightFamily::Power(a) => Envelope::Power {
                from,
                lower: (1.0, *a),
                upper: (1.0, *a),
            },
            WeightFamily::CriticalLog(p) => {
                let start = from.max(3) as f64;
                let hi_coef = if from <= 2 {
                    // n = 1, 2 dominate; bound crudely by the maximum over the whole range
                    (1.0f64).max(1.0 / (2f64.ln().powf(*p)))
                } else {
                    start.ln().powf(-*p)
                };
                Envelope::Power {
                    from,
                    lower: (0.0, -1.0),
                    upper: (hi_coef, -1.0),
                }
            }
            WeightFamily::Shift { k, base } => match base.envelope(from + k) {
                Envelope::Power { lower, upper, .. } => {
                    let r = 1.0 + *k as f64 / from as f64;
                    Envelope::Power {
                        from,
                        lower: rebase(lower, 1.0, r, true),
                        upper: rebase(upper, 1.0, r, false),
                    }
                }
                Envelope::Zero { .. } => Envelope::Zero { from },
                Envelope::Unknown => Envelope::Unknown,
            },
            WeightFamily::Scaled { factor, base } => match base.envelope(from) {
                Envelope::Power { lower, upper, .. } => Envelope::Power {
                    from,
                    lower: (lower.0 * factor, lower.1),
                    upper: (upper.0 * factor, upper.1),
                },
                other => other,
            },
            WeightFamily::Interleave { even, odd } => {
                let e = even.envelope(from / 2 + from % 2);
                let o = odd.envelope(from.div_ceil(2));
                match (e, o) {
                    (
                        Envelope::Power {
                            lower: el, upper: eu, ..
                        },
                        Envelope::Power {
                            lower: ol, upper: ou, ..
                        },
                    ) => {
                        // even: m = n/2; odd: m = (n+1)/2 in [n/2, n]
                        let el = rebase(el, 0.5, 0.5, true);
                        let eu = rebase(eu, 0.5, 0.5, false);
                        let ol = rebase(ol, 0.5, 1.0, true);
                        let ou = rebase(ou, 0.5, 1.0, false);
                        Envelope::Power {
                            from,
                            lower: combine_min(el, ol),
                            upper: combine_max(eu, ou),
                        }
                    }
                    (Envelope::Zero { .. }, Envelope::Zero { .. }) => Envelope::Zero { from },
                    _ => Envelope::Unknown,
                }
            }
            WeightFamily::Table { values, tail } => {
                let len = values.len() as u64;
                match *tail {
                    TailModel::None => Envelope::Unknown,
                    TailModel::Zero => {
                        if from > len {
                            Envelope::Zero { from }
                        } else {
                            Envelope::Unknown
                        }
                    }
                    TailModel::PowerLike { exponent, .. } => {
                        let last = values[values.len() - 1];
                        let coef = last * (len as f64).powf(-exponent);
                        let (mut lo, mut hi) = (coef, coef);
                        for n in from..=len {
                            let c = values[(n - 1) as usize] * (n as f64).powf(-exponent);
                            lo = lo.min(c);
                            hi = hi.max(c);
                        }
                        Envelope::Power {
                            from,
                            lower: (lo * (1.0 - 1e-12), exponent),
                            upper: (hi * (1.0 + 1e-12), exponent),
                        }
                    }
                }
            }
        }
    }

    fn asymptotic(&self) -> Asymptotic {
        match self {
            WeightFamily::Power(a) => Asymptotic::Power {
                coef: 1.0,
                exponent: *a,
            },
            WeightFamily::CriticalLog(_) => Asymptotic::Unknown,
            WeightFamily::Shift { base, .. } => base.asymptotic(),
            WeightFamily::Scaled { factor, base } => match base.asymptotic() {
                Asymptotic::Power { coef, exponent } => Asymptotic::Power {
                    coef: coef * factor,
                    exponent,
                },
                other => other,
            },
            WeightFamily::Interleave { even, odd } => match (even.asymptotic(), odd.asymptotic()) {
                (
                    Asymptotic::Power {
                        coef: ce,
                        exponent: se,
                    },
                    Asymptotic::Power {
                        coef: co,
                        exponent: so,
                    },
                ) if se == so && ce == co => Asymptotic::Power {
                    coef: ce * 0.5f64.powf(se),
                    exponent: se,
                },
                (Asymptotic::Zero, Asymptotic::Zero) => Asymptotic::Zero,
                _ => Asymptotic::Unknown,
            },
            WeightFamily::Table { values, tail } => match *tail {
                TailModel::None => Asymptotic::Unknown,
                TailModel::Zero => Asymptotic::Zero,
                TailModel::PowerLike { exponent, .. } => Asymptotic::Power {
                    coef: values[values.len() - 1] * (values.len() as f64).powf(-exponent),
                    exponent,
                },
            },
        }
    }

    fn accumulate_powered(&self, q: f64, from: u64, to: u64, acc: &mut Accumulator) -> Result<()> {
        match self {
            WeightFamily::Power(a) => {
                let e = a * q;
                let e_err = a.mul_add(q, -e).abs();
                if e == 0.0 && e_err == 0.0 {
                    for _ in from..=to {
                        acc.push_exact(1.0);
                    }
                } else if e == -1.0 && e_err == 0.0 {
                    for k in from..=to {
                        acc.push_with_error(1.0 / k as f64, f64::EPSILON / 2.0 / k as f64);
                    }
                } else {
                    for k in from..=to {
                        let x = k as f64;
                        let t = x.powf(e);
                        let rel = TERM_REL_ERROR + e_err * x.ln() * 1.01;
                        acc.push_with_error(t, t * rel);
                    }
                }
                Ok(())
            }
            WeightFamily::Table { values, .. } if q == 1.0 => {
                let len = values.len() as u64;
                for k in from..=to {
                    if k <= len {
                        acc.push_exact(values[(k - 1) as usize]);
                    } else {
                        let t = self.eval(k)?;
                        acc.push_with_error(t, t * 2.0 * TERM_REL_ERROR);
                    }
                }
                Ok(())
            }
            _ => {
                let rel = (1.0 + q.abs()) * self.eval_rel_error() + TERM_REL_ERROR;
                for k in from..=to {
                    let t = powered_term(self.eval(k)?, q);
                    acc.push_with_error(t, t.abs() * rel);
                }
                Ok(())
            }
        }
    }

    fn powered_tail_sum(&self, q: f64, r: u64) -> Result<Enclosure> {
        let r = r.max(1);
        match self {
            WeightFamily::Power(a) => {
                let e = a * q;
                if e >= -1.0 {
                    return Ok(Enclosure::divergent());
                }
                let e_err = a.mul_add(q, -e).abs();
                let base = power_tail(e, r);
                if e_err == 0.0 {
                    Ok(base)
                } else {
                    // exponent perturbation |de| moves k^e by at most k^e * |de| * ln k
                    let lo = power_tail(e + e_err, r);
                    let hi = power_tail(e - e_err, r);
                    Ok(Enclosure::new(lo.lo.min(base.lo), hi.hi.max(base.hi)))
                }
            }
            WeightFamily::CriticalLog(p) => {
                if q < 1.0 {
                    // sum n^{-q} log^{-pq} n diverges for q < 1
                    return Ok(Enclosure::divergent());
                }
                let cut = r.max(TAIL_CUT);
                let mut acc = Accumulator::new();
                self.accumulate_powered(q, r, cut - 1, &mut acc)?;
                let c = cut as f64;
                let rest = if q == 1.0 {
                    // integral of 1/(t log^p t) is log^{1-p}(t)/(p-1); convex decreasing here
                    let f_c = 1.0 / (c * c.ln().powf(*p));
                    let lo = c.ln().powf(1.0 - p) / (p - 1.0) + 0.5 * f_c;
                    let hi = (c - 0.5).ln().powf(1.0 - p) / (p - 1.0);
                    widen(lo, hi, 16.0)
                } else {
                    let hi = c.ln().powf(-p * q) * power_tail(-q, cut).hi;
                    widen(0.0, hi, 16.0)
                };
                Ok(acc.enclosure() + rest)
            }
            WeightFamily::Shift { k, base } => base.powered_tail_sum(q, r + k),
            WeightFamily::Scaled { factor, base } => {
                let t = base.powered_tail_sum(q, r)?;
                let f = Enclosure::exact(*factor).powf(q);
                Ok(t.mul_nonneg(&f))
            }
            WeightFamily::Interleave { even, odd } => {
                let e = even.powered_tail_sum(q, r.div_ceil(2))?;
                let o = odd.powered_tail_sum(q, r / 2 + 1)?;
                Ok(e + o)
            }
            WeightFamily::Table { values, tail } => {
                let len = values.len() as u64;
                match *tail {
                    TailModel::None => Err(Error::TailUnknown(format!(
                        "table of length {len} has no tail model"
                    ))),
                    TailModel::Zero => {
                        if q <= 0.0 {
                            return Ok(Enclosure::divergent());
                        }
                        let mut acc = Accumulator::new();
                        if r <= len {
                            self.accumulate_powered(q, r, len, &mut acc)?;
                        }
                        Ok(acc.enclosure())
                    }
                    TailModel::PowerLike { exponent, .. } => {
                        let mut acc = Accumulator::new();
                        if r <= len {
                            self.accumulate_powered(q, r, len, &mut acc)?;
                        }
                        let coef = values[values.len() - 1] * (len as f64).powf(-exponent);
                        let t = power_tail(exponent * q, r.max(len + 1));
                        let rest = Enclosure::new(t.lo, t.hi)
                            .mul_nonneg(&Enclosure::exact(coef).powf(q));
                        Ok(acc.enclosure() + widen(rest.lo, rest.hi, 8.0))
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_rejects_p_at_most_one() {
        assert!(Exponent::new(1.0).is_err());
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        assert_eq!(Exponent::new(2.0).unwrap().k_p(), 4.0);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(WeightFamily::Power(0.0).eval(7).unwrap(), 1.0);
        assert!((WeightFamily::Power(-2.0).eval(3).unwrap() - 1.0 / 9.0).abs() < 1e-16);
        let s = WeightFamily::shift(1, WeightFamily::Power(-3.0));
        assert!((s.eval(2).unwrap() - 1.0 / 27.0).abs() < 1e-16);
    }

    #[test]
    fn table_without_tail_refuses_out_of_range() {
        let t = WeightFamily::table(vec![1.0, 2.0], TailModel::None).unwrap();
        assert_eq!(t.eval(3), Err(Error::OutOfTable { index: 3, len: 2 }));
        assert!(matches!(t.powered_tail_sum(1.0, 1), Err(Error::TailUnknown(_))));
    }

    #[test]
    fn table_with_zero_tail_sums_finitely() {
        let t = WeightFamily::table(vec![1.0, 2.0, 3.0], TailModel::Zero).unwrap();
        assert_eq!(t.powered_tail_sum(1.0, 2).unwrap(), Enclosure::exact(5.0));
    }

    #[test]
    fn partial_sums_small_cases() {
        let ones = WeightFamily::Power(0.0);
        assert_eq!(ones.powered_partial_sum(1.0, 5).unwrap(), Enclosure::exact(5.0));
        assert_eq!(ones.powered_partial_sum(1.0, 0).unwrap(), Enclosure::zero());
        let sq = WeightFamily::Power(2.0).powered_partial_sum(-1.0, 3).unwrap();
        assert!(sq.contains(49.0 / 36.0));
        assert!(sq.width() < 1e-14);
    }

    #[test]
    fn tail_of_inverse_squares() {
        let t = WeightFamily::Power(-2.0).powered_tail_sum(1.0, 1).unwrap();
        let z2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!(t.contains(z2), "{t}");
        assert!(t.width() < 1e-9);
        assert_eq!(
            WeightFamily::Power(0.0).powered_tail_sum(1.0, 1).unwrap(),
            Enclosure::divergent()
        );
    }

    #[test]
    fn critical_log_tail_is_finite_and_brackets_partial_sums() {
        let w = WeightFamily::CriticalLog(2.0);
        let t = w.powered_tail_sum(1.0, 2).unwrap();
        assert!(t.is_finite());
        // 1/(n ln^2 n) summed from 2 is about 2.1097
        assert!(t.lo > 2.1 && t.hi < 2.12, "{t}");
        assert_eq!(w.powered_tail_sum(-1.0, 2).unwrap(), Enclosure::divergent());
    }

    #[test]
    fn interleave_splits_even_and_odd() {
        let w = WeightFamily::interleave(WeightFamily::Power(1.0), WeightFamily::Power(0.0));
        let got: Vec<f64> = (1..=6).map(|n| w.eval(n).unwrap()).collect();
        assert_eq!(got, vec![1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let w = WeightFamily::interleave(WeightFamily::Power(-2.0), WeightFamily::Power(-3.0));
        for r in [1u64, 2, 3, 10] {
            let t = w.powered_tail_sum(1.0, r).unwrap();
            let direct = w.powered_partial_sum(1.0, 200_000).unwrap().mid()
                - w.powered_partial_sum(1.0, r - 1).unwrap().mid();
            assert!(t.lo <= direct + 1e-4 && direct <= t.hi, "r={r} {t} {direct}");
        }
    }

    #[test]
    fn envelope_tail_matches_family_tail_for_shift() {
        let w = WeightFamily::shift(3, WeightFamily::Power(-2.5));
        let exact = w.powered_tail_sum(1.0, 5).unwrap();
        let generic = envelope_tail(&w, 1.0, 5).unwrap();
        assert!(generic.lo <= exact.hi && exact.lo <= generic.hi);
        assert!(generic.lo <= exact.lo + 1e-12);
    }

    #[test]
    fn parse_grammar() {
        let w = WeightFamily::parse("shift:2(power:-3)").unwrap();
        assert_eq!(w, WeightFamily::shift(2, WeightFamily::Power(-3.0)));
        let w = WeightFamily::parse("scale:0.25(power:-2)").unwrap();
        assert_eq!(w.eval(2).unwrap(), 0.0625);
        let w = WeightFamily::parse("interleave(power:1, power:0)").unwrap();
        assert_eq!(w.eval(4).unwrap(), 2.0);
        assert_eq!(
            WeightFamily::parse("critlog:2").unwrap(),
            WeightFamily::CriticalLog(2.0)
        );
    }

    #[test]
    fn parse_errors_cite_the_token() {
        match WeightFamily::parse("power:abc") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "abc"),
            other => panic!("{other:?}"),
        }
        match WeightFamily::parse("cubic:3") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "cubic:3"),
            other => panic!("{other:?}"),
        }
        match WeightFamily::parse("shift:1(power:2") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "<end>"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_table_with_power_tail() {
        let w = WeightFamily::table_from_csv("# tail=power:-2,from=3\nn,value\n1,1\n2,0.25\n3,0.111\n")
            .unwrap();
        let expect = 0.111 * (4.0f64 / 3.0).powf(-2.0);
        assert!((w.eval(4).unwrap() - expect).abs() < 1e-15);
        assert!(w.powered_tail_sum(1.0, 1).unwrap().is_finite());
        assert!(WeightFamily::table_from_csv("1,1\n3,2\n").is_err());
        assert!(WeightFamily::table_from_csv("1,-1\n").is_err());
    }
}
