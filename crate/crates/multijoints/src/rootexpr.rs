//! Exact arithmetic with rational powers of nonnegative rationals.
//!
//! A [`RootExpr`] stores `radicand^(num/den)` without evaluating the root.
//! Products, integer powers, and comparisons all reduce to integer-exponent
//! rational arithmetic, so chains of d-th roots can be multiplied and
//! compared with no floating-point error. Sums are deliberately absent:
//! they leave the representable class.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{parse_rational, rational_string};

/// `radicand^(num/den)` with `radicand >= 0` and `den >= 1`.
///
/// Negative `num` requires a strictly positive radicand. The exponent is
/// kept in lowest terms; `radicand = 0, num > 0` normalises to `0^(1/1)` and
/// `num = 0` to `1^(1/1)`.
#[derive(Clone, Debug)]
pub struct RootExpr {
    radicand: BigRational,
    num: i64,
    den: u32,
}

fn rational_int_pow(r: &BigRational, e: i64) -> Result<BigRational> {
    if e == 0 {
        return Ok(BigRational::one());
    }
    let mag = e.unsigned_abs() as u32;
    let p = BigRational::new(r.numer().pow(mag), r.denom().pow(mag));
    if e > 0 {
        Ok(p)
    } else if p.is_zero() {
        Err(Error::DivisionByZero)
    } else {
        Ok(p.recip())
    }
}

impl RootExpr {
    pub fn new(radicand: BigRational, num: i64, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::BadExponent("0 in root denominator".into()));
        }
        if radicand.is_negative() {
            return Err(Error::NegativeWeight(format!("radicand {radicand}")));
        }
        if radicand.is_zero() && num < 0 {
            return Err(Error::DivisionByZero);
        }
        let mut out = RootExpr { radicand, num, den };
        out.normalise();
        Ok(out)
    }

    fn normalise(&mut self) {
        if self.num == 0 || self.radicand.is_one() {
            self.radicand = BigRational::one();
            self.num = 1;
            self.den = 1;
            return;
        }
        if self.radicand.is_zero() {
            self.num = 1;
            self.den = 1;
            return;
        }
        let g = (self.num.unsigned_abs()).gcd(&(self.den as u64));
        if g > 1 {
            self.num /= g as i64;
            self.den /= g as u32;
        }
        // Extract perfect-power factors of the radicand: (r^g)^(1/den) with
        // g | den simplifies to r^(g/den).
        {
            let mut g = self.den;
            while g > 1 {
                if self.den % g == 0 {
                    let rn = self.radicand.numer().nth_root(g);
                    let rd = self.radicand.denom().nth_root(g);
                    if rn.pow(g) == *self.radicand.numer()
                        && rd.pow(g) == *self.radicand.denom()
                    {
                        self.radicand = BigRational::new(rn, rd);
                        self.den /= g;
                        g = self.den;
                        continue;
                    }
                }
                g -= 1;
            }
        }
        // Fold an integer exponent into the radicand.
        if self.den == 1 && self.num != 1 {
            self.radicand = rational_int_pow(&self.radicand, self.num)
                .expect("positive radicand");
            self.num = 1;
        }
    }

    pub fn from_rational(r: BigRational) -> Result<Self> {
        RootExpr::new(r, 1, 1)
    }

    pub fn from_integer(n: i64) -> Result<Self> {
        RootExpr::from_rational(BigRational::from_integer(n.into()))
    }

    pub fn one() -> Self {
        RootExpr { radicand: BigRational::one(), num: 1, den: 1 }
    }

    pub fn zero() -> Self {
        RootExpr { radicand: BigRational::zero(), num: 1, den: 1 }
    }

    /// The `den`-th root of a nonnegative rational.
    pub fn root(radicand: BigRational, den: u32) -> Result<Self> {
        RootExpr::new(radicand, 1, den)
    }

    pub fn radicand(&self) -> &BigRational {
        &self.radicand
    }

    pub fn exponent(&self) -> (i64, u32) {
        (self.num, self.den)
    }

    pub fn is_zero(&self) -> bool {
        self.radicand.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.radicand.is_one()
    }

    /// Exact product: exponents are unified over a common denominator, so
    /// the result is again a single root expression.
    pub fn mul(&self, other: &RootExpr) -> Result<RootExpr> {
        if self.is_zero() || other.is_zero() {
            return Ok(RootExpr::zero());
        }
        let l = (self.den as u64).lcm(&(other.den as u64));
        let a = rational_int_pow(&self.radicand, self.num * (l / self.den as u64) as i64)?;
        let b = rational_int_pow(&other.radicand, other.num * (l / other.den as u64) as i64)?;
        RootExpr::new(a * b, 1, l as u32)
    }

    /// Exact integer power (negative allowed for nonzero values).
    pub fn pow(&self, k: i64) -> Result<RootExpr> {
        if self.is_zero() {
            if k < 0 {
                return Err(Error::DivisionByZero);
            }
            return Ok(if k == 0 { RootExpr::one() } else { RootExpr::zero() });
        }
        RootExpr::new(
            self.radicand.clone(),
            self.num.checked_mul(k).ok_or_else(|| Error::BadExponent("overflow".into()))?,
            self.den,
        )
    }

    /// Multiplication by a nonnegative rational, folded exactly into the
    /// radicand: `r * a^(n/d) = (r^d * a^n)^(1/d)`.
    pub fn scale(&self, r: &BigRational) -> Result<RootExpr> {
        if r.is_negative() {
            return Err(Error::NegativeWeight(format!("scale by {r}")));
        }
        if r.is_zero() || self.is_zero() {
            return Ok(RootExpr::zero());
        }
        let folded = rational_int_pow(r, self.den as i64)?
            * rational_int_pow(&self.radicand, self.num)?;
        RootExpr::new(folded, 1, self.den)
    }

    pub fn recip(&self) -> Result<RootExpr> {
        self.pow(-1)
    }

    /// Exact order: both values are raised to the lcm of the root orders,
    /// which preserves order on nonnegative reals.
    pub fn cmp_root(&self, other: &RootExpr) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let l = (self.den as u64).lcm(&(other.den as u64));
        let a = rational_int_pow(&self.radicand, self.num * (l / self.den as u64) as i64)
            .expect("nonzero radicand");
        let b = rational_int_pow(&other.radicand, other.num * (l / other.den as u64) as i64)
            .expect("nonzero radicand");
        a.cmp(&b)
    }

    pub fn cmp_rational(&self, r: &BigRational) -> Ordering {
        if r.is_negative() {
            return Ordering::Greater;
        }
        let other = RootExpr::new(r.clone(), 1, 1).expect("nonnegative");
        self.cmp_root(&other)
    }

    pub fn cmp_one(&self) -> Ordering {
        self.cmp_rational(&BigRational::one())
    }

    /// Exact rational value when the exponent has collapsed to an integer.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.den == 1 {
            rational_int_pow(&self.radicand, self.num).ok()
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let base = self.radicand.to_f64().unwrap_or(f64::NAN);
        base.powf(self.num as f64 / self.den as f64)
    }

    /// Product of a sequence of root expressions.
    pub fn product<'a>(items: impl IntoIterator<Item = &'a RootExpr>) -> Result<RootExpr> {
        let mut acc = RootExpr::one();
        for item in items {
            acc = acc.mul(item)?;
        }
        Ok(acc)
    }
}

impl PartialEq for RootExpr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_root(other) == Ordering::Equal
    }
}

impl Eq for RootExpr {}

impl PartialOrd for RootExpr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_root(other))
    }
}

impl Ord for RootExpr {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_root(other)
    }
}

impl fmt::Display for RootExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 && self.num == 1 {
            write!(f, "{}", rational_string(&self.radicand))
        } else {
            write!(f, "({})^({}/{})", rational_string(&self.radicand), self.num, self.den)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RootExprJson {
    radicand: String,
    num: i64,
    den: u32,
}

impl Serialize for RootExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RootExprJson {
            radicand: rational_string(&self.radicand),
            num: self.num,
            den: self.den,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RootExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RootExprJson::deserialize(d)?;
        let radicand = parse_rational(&raw.radicand)
            .ok_or_else(|| serde::de::Error::custom(format!("bad rational {}", raw.radicand)))?;
        RootExpr::new(radicand, raw.num, raw.den).map_err(serde::de::Error::custom)
    }
}

/// `value^(1/d)` compared against a rational bound `c`:
/// `value^(1/d) <= c  <=>  value <= c^d` (both sides nonnegative).
pub fn root_leq_rational(value: &BigRational, d: u32, c: &BigRational) -> Result<bool> {
    let root = RootExpr::root(value.clone(), d)?;
    Ok(root.cmp_rational(c) != Ordering::Greater)
}
