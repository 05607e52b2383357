//! Closed real intervals with outward rounding, and a compensated accumulator
//! that emits them.
//!
//! An [`Enclosure`] `[lo, hi]` is a certificate: the quantity it describes lies
//! in the interval. `hi = +inf` marks a divergent or uncertified quantity.

use std::fmt;
use std::ops::Add;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

/// Unit roundoff for binary64.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Relative error allowed per evaluated term (`powf`, `ln` are not correctly
/// rounded; glibc keeps them under one ulp, we budget two).
pub const TERM_REL_ERROR: f64 = 2.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enclosure {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

/// Error-free transformation `a + b = s + e`.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Sum rounded toward `-inf` (when `lower`) or `+inf`.
fn add_directed(a: f64, b: f64, lower: bool) -> f64 {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return s;
    }
    match (lower, e.partial_cmp(&0.0)) {
        (true, Some(std::cmp::Ordering::Less)) => s.next_down(),
        (false, Some(std::cmp::Ordering::Greater)) => s.next_up(),
        _ => s,
    }
}

/// Product of nonnegative numbers rounded toward `-inf` or `+inf`;
/// `0 * inf` is taken as `0`.
fn mul_directed(a: f64, b: f64, lower: bool) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    let e = a.mul_add(b, -p);
    if lower && e < 0.0 {
        p.next_down()
    } else if !lower && e > 0.0 {
        p.next_up()
    } else {
        p
    }
}

impl Enclosure {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(!(lo > hi), "inverted enclosure [{lo}, {hi}]");
        Enclosure { lo, hi }
    }

    pub fn exact(v: f64) -> Self {
        Enclosure { lo: v, hi: v }
    }

    pub fn zero() -> Self {
        Self::exact(0.0)
    }

    /// Certified divergence to `+inf`.
    pub fn divergent() -> Self {
        Self::exact(f64::INFINITY)
    }

    /// A point value with a symmetric absolute error bound, padded outward.
    pub fn around(mid: f64, radius: f64) -> Self {
        let r = radius.abs();
        if r == 0.0 {
            return Self::exact(mid);
        }
        Enclosure {
            lo: down(mid - r),
            hi: up(mid + r),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        if self.is_exact() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn mid(&self) -> f64 {
        if self.is_exact() {
            self.lo
        } else if self.is_finite() {
            self.lo + 0.5 * (self.hi - self.lo)
        } else {
            self.hi
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(&self, other: &Enclosure) -> Enclosure {
        Enclosure {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Product of two nonnegative enclosures.
    pub fn mul_nonneg(&self, other: &Enclosure) -> Enclosure {
        debug_assert!(self.lo >= 0.0 && other.lo >= 0.0);
        Enclosure {
            lo: mul_directed(self.lo, other.lo, true),
            hi: mul_directed(self.hi, other.hi, false),
        }
    }

    /// Multiplication by a nonnegative scalar known exactly.
    pub fn scale(&self, c: f64) -> Enclosure {
        debug_assert!(c >= 0.0);
        self.mul_nonneg(&Enclosure::exact(c))
    }

    /// `x^e` over a nonnegative enclosure, padded for the non-correctly-rounded `powf`.
    pub fn powf(&self, e: f64) -> Enclosure {
        debug_assert!(self.lo >= 0.0);
        if e == 1.0 {
            return *self;
        }
        if e == 0.0 {
            return Enclosure::exact(1.0);
        }
        let pad = |v: f64, lower: bool| -> f64 {
            if !v.is_finite() || v == 0.0 {
                v
            } else if lower {
                (v * (1.0 - TERM_REL_ERROR)).next_down()
            } else {
                (v * (1.0 + TERM_REL_ERROR)).next_up()
            }
        };
        let a = self.lo.powf(e);
        let b = self.hi.powf(e);
        if e > 0.0 {
            Enclosure {
                lo: pad(a, true),
                hi: pad(b, false),
            }
        } else {
            Enclosure {
                lo: pad(b, true),
                hi: pad(a, false),
            }
        }
    }
}

impl Add for Enclosure {
    type Output = Enclosure;

    fn add(self, rhs: Enclosure) -> Enclosure {
        Enclosure {
            lo: add_directed(self.lo, rhs.lo, true),
            hi: add_directed(self.hi, rhs.hi, false),
        }
    }
}

impl fmt::Display for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "[{}]", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// JSON-safe encoding of a float: finite values as numbers, the rest as strings.
pub(crate) mod float_repr {
    use super::*;

    pub fn to_json_friendly<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub enum Repr {
        Num(f64),
        Str(String),
    }

    impl Repr {
        pub fn into_f64<E: de::Error>(self) -> Result<f64, E> {
            match self {
                Repr::Num(v) => Ok(v),
                Repr::Str(s) => match s.as_str() {
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(E::custom(format!("not a number: {other}"))),
                },
            }
        }
    }
}

/// Serde helper for `f64` fields that may be infinite.
pub mod json_f64 {
    use super::float_repr::{to_json_friendly, Repr};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_json_friendly(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Repr::deserialize(d)?.into_f64()
    }
}

struct JsonF64(f64);

impl Serialize for JsonF64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        float_repr::to_json_friendly(self.0, s)
    }
}

impl Serialize for Enclosure {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&JsonF64(self.lo))?;
        t.serialize_element(&JsonF64(self.hi))?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Enclosure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Enclosure;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a two-element [lo, hi] array")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Enclosure, A::Error> {
                let lo: float_repr::Repr = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let hi: float_repr::Repr = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let (lo, hi) = (lo.into_f64()?, hi.into_f64()?);
                if lo > hi {
                    return Err(de::Error::custom("inverted enclosure"));
                }
                Ok(Enclosure { lo, hi })
            }
        }
        d.deserialize_tuple(2, V)
    }
}

/// Neumaier compensated sum that tracks a rigorous error budget.
///
/// The budget covers the summation itself plus a relative error of
/// [`TERM_REL_ERROR`] on every term pushed through [`Accumulator::push_evaluated`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
    abs_sum: f64,
    evaluated_abs: f64,
    extra: f64,
    count: u64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a term that is exact as a binary64 value.
    #[inline]
    pub fn push_exact(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
        self.count += 1;
    }

    /// Add a term produced by a transcendental evaluation.
    #[inline]
    pub fn push_evaluated(&mut self, x: f64) {
        self.push_exact(x);
        self.evaluated_abs += x.abs();
    }

    /// Add a term known to within `abs_err`.
    #[inline]
    pub fn push_with_error(&mut self, x: f64, abs_err: f64) {
        self.push_exact(x);
        self.extra += abs_err;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Absolute error bound on [`Accumulator::value`].
    pub fn error_bound(&self) -> f64 {
        let u = UNIT_ROUNDOFF;
        let n = self.count as f64;
        (3.0 * u + 2.0 * n * u * u) * self.abs_sum * (1.0 + 4.0 * u)
            + 2.0 * u * self.value().abs()
            + TERM_REL_ERROR * self.evaluated_abs * (1.0 + 4.0 * u)
            + self.extra * (1.0 + 4.0 * u)
    }

    pub fn enclosure(&self) -> Enclosure {
        let v = self.value();
        if !v.is_finite() {
            return Enclosure::exact(v);
        }
        if self.evaluated_abs == 0.0 && self.extra == 0.0 && self.comp == 0.0 && exact_so_far(self) {
            return Enclosure::exact(v);
        }
        Enclosure::around(v, self.error_bound())
    }
}

/// Sums of small integers stay exact; we detect that conservatively.
fn exact_so_far(acc: &Accumulator) -> bool {
    acc.abs_sum < 2f64.powi(52) && acc.abs_sum.fract() == 0.0 && acc.sum.fract() == 0.0
}
