//! Exact scalars over a prime field `F_p` or the rationals `Q`.
//!
//! A [`Scalar`] carries its own field description so that values read from
//! instance files can be mixed freely in containers; arithmetic between
//! scalars of different fields is a programming error and panics, while
//! entry points that accept user data check fields up front and return
//! [`Error::MixedFields`](crate::Error::MixedFields).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Field descriptor: a prime modulus below `2^31`, or the rationals.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum FieldSpec {
    Fp(u64),
    Rational,
}

impl FieldSpec {
    /// Validates a prime modulus. Trial division is fine here: `p < 2^31`,
    /// so at most ~46341 divisions.
    pub fn prime(p: u64) -> Result<Self> {
        if p >= 1 << 31 {
            return Err(Error::ModulusTooLarge(p));
        }
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(FieldSpec::Fp(p))
    }

    pub fn zero(&self) -> Scalar {
        match self {
            FieldSpec::Fp(p) => Scalar::Fp { value: 0, modulus: *p },
            FieldSpec::Rational => Scalar::Rat(BigRational::zero()),
        }
    }

    pub fn one(&self) -> Scalar {
        match self {
            FieldSpec::Fp(p) => Scalar::Fp { value: 1 % p, modulus: *p },
            FieldSpec::Rational => Scalar::Rat(BigRational::one()),
        }
    }

    pub fn from_i64(&self, v: i64) -> Scalar {
        match self {
            FieldSpec::Fp(p) => {
                let p = *p as i128;
                let r = ((v as i128 % p) + p) % p;
                Scalar::Fp { value: r as u64, modulus: p as u64 }
            }
            FieldSpec::Rational => Scalar::Rat(BigRational::from_integer(BigInt::from(v))),
        }
    }

    /// Every field element, in a fixed order. Only available over `F_p`.
    pub fn elements(&self) -> Vec<Scalar> {
        match self {
            FieldSpec::Fp(p) => (0..*p).map(|v| Scalar::Fp { value: v, modulus: *p }).collect(),
            FieldSpec::Rational => panic!("cannot enumerate the rationals"),
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Fp(p) => write!(f, "F_{p}"),
            FieldSpec::Rational => write!(f, "Q"),
        }
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p % 2 == 0 {
        return p == 2;
    }
    let mut d = 3;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// An exact field element: a reduced residue mod a prime, or a reduced
/// rational with positive denominator (`BigRational` maintains both).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Scalar {
    Fp { value: u64, modulus: u64 },
    Rat(BigRational),
}

impl Scalar {
    pub fn field(&self) -> FieldSpec {
        match self {
            Scalar::Fp { modulus, .. } => FieldSpec::Fp(*modulus),
            Scalar::Rat(_) => FieldSpec::Rational,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Fp { value, .. } => *value == 0,
            Scalar::Rat(r) => r.is_zero(),
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Fp { value, modulus } => *value == 1 % *modulus,
            Scalar::Rat(r) => r.is_one(),
        }
    }

    pub fn rational(r: BigRational) -> Self {
        Scalar::Rat(r)
    }

    /// Multiplicative inverse; `Err(DivisionByZero)` on zero.
    pub fn inv(&self) -> Result<Scalar> {
        match self {
            Scalar::Fp { value, modulus } => {
                if *value == 0 {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar::Fp { value: mod_inv(*value, *modulus), modulus: *modulus })
            }
            Scalar::Rat(r) => {
                if r.is_zero() {
                    return Err(Error::DivisionByZero);
                }
                Ok(Scalar::Rat(r.recip()))
            }
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Rat(r) => Some(r),
            Scalar::Fp { .. } => None,
        }
    }

    fn same_field(&self, other: &Scalar) -> (u64, u64, u64) {
        match (self, other) {
            (Scalar::Fp { value: a, modulus: p }, Scalar::Fp { value: b, modulus: q }) => {
                assert_eq!(p, q, "mixed moduli {p} and {q}");
                (*a, *b, *p)
            }
            _ => unreachable!(),
        }
    }
}

/// Extended Euclid; `p` prime and `a != 0 mod p`.
fn mod_inv(a: u64, p: u64) -> u64 {
    let (mut t, mut new_t): (i128, i128) = (0, 1);
    let (mut r, mut new_r): (i128, i128) = (p as i128, a as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert_eq!(r, 1, "{a} not invertible mod {p}");
    (((t % p as i128) + p as i128) % p as i128) as u64
}

impl Add for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a + b),
            _ => {
                let (a, b, p) = self.same_field(rhs);
                Scalar::Fp { value: (a + b) % p, modulus: p }
            }
        }
    }
}

impl Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a - b),
            _ => {
                let (a, b, p) = self.same_field(rhs);
                Scalar::Fp { value: (a + p - b) % p, modulus: p }
            }
        }
    }
}

impl Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a * b),
            _ => {
                let (a, b, p) = self.same_field(rhs);
                // p < 2^31, so the product fits in u64 after widening.
                Scalar::Fp { value: ((a as u128 * b as u128) % p as u128) as u64, modulus: p }
            }
        }
    }
}

impl Div for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        self * &rhs.inv().expect("division by zero")
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Rat(a) => Scalar::Rat(-a),
            Scalar::Fp { value, modulus } => {
                Scalar::Fp { value: (modulus - value) % modulus, modulus: *modulus }
            }
        }
    }
}

/// Total order used for canonical tie-breaking. Within one field it is the
/// natural order (residues by value, rationals by value); across fields it
/// is arbitrary but fixed. Containers mixing fields never reach arithmetic.
impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Fp { value: a, modulus: p }, Scalar::Fp { value: b, modulus: q }) => {
                p.cmp(q).then(a.cmp(b))
            }
            (Scalar::Rat(a), Scalar::Rat(b)) => a.cmp(b),
            (Scalar::Fp { .. }, Scalar::Rat(_)) => Ordering::Less,
            (Scalar::Rat(_), Scalar::Fp { .. }) => Ordering::Greater,
        }
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Fp { value, .. } => write!(f, "{value}"),
            Scalar::Rat(r) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
        }
    }
}

/// Parses a scalar in the notation used by instance files: an integer, or
/// `num/den` over the rationals.
pub fn parse_scalar(field: FieldSpec, s: &str) -> Result<Scalar> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed scalar {s:?} over {field}"));
    match field {
        FieldSpec::Fp(_) => {
            let v: i64 = s.parse().map_err(|_| bad())?;
            Ok(field.from_i64(v))
        }
        FieldSpec::Rational => {
            let r = parse_rational(s).ok_or_else(bad)?;
            Ok(Scalar::Rat(r))
        }
    }
}

/// Parses `num` or `num/den` into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        None => {
            let n: BigInt = s.parse().ok()?;
            Some(BigRational::from_integer(n))
        }
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n, d))
        }
    }
}

/// Renders a rational as `num` or `num/den`, the inverse of [`parse_rational`].
pub fn rational_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nonnegative rational check used by weight loaders.
pub fn require_nonnegative(r: &BigRational) -> Result<()> {
    if r.is_negative() {
        Err(Error::NegativeWeight(rational_string(r)))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_validation() {
        assert!(FieldSpec::prime(2).is_ok());
        assert!(FieldSpec::prime(5).is_ok());
        assert!(FieldSpec::prime(2147483647).is_ok()); // 2^31 - 1
        assert!(matches!(FieldSpec::prime(4), Err(Error::NotPrime(4))));
        assert!(matches!(FieldSpec::prime(1), Err(Error::NotPrime(1))));
        assert!(matches!(FieldSpec::prime(0), Err(Error::NotPrime(0))));
        assert!(matches!(FieldSpec::prime(1 << 31), Err(Error::ModulusTooLarge(_))));
    }

    /// Field axioms over F_p, checked exhaustively for small p.
    #[test]
    fn fp_axioms_exhaustive() {
        for p in [2u64, 3, 5, 7] {
            let f = FieldSpec::prime(p).unwrap();
            let elems = f.elements();
            for a in &elems {
                assert_eq!(&(a + &f.zero()), a);
                assert_eq!(&(a * &f.one()), a);
                assert!((a + &(-a)).is_zero());
                if !a.is_zero() {
                    assert!((a * &a.inv().unwrap()).is_one());
                }
                for b in &elems {
                    assert_eq!(a + b, b + a);
                    assert_eq!(a * b, b * a);
                    for c in &elems {
                        assert_eq!(&(a + b) + c, a + &(b + c));
                        assert_eq!(&(a * b) * c, a * &(b * c));
                        assert_eq!(a * &(b + c), &(a * b) + &(a * c));
                    }
                }
            }
        }
    }

    #[test]
    fn rational_arithmetic_is_exact() {
        let f = FieldSpec::Rational;
        let a = parse_scalar(f, "2/3").unwrap();
        let b = parse_scalar(f, "-1/6").unwrap();
        assert_eq!((&a + &b).to_string(), "1/2");
        assert_eq!((&a * &b).to_string(), "-1/9");
        assert_eq!((&a / &b).to_string(), "-4");
        assert_eq!(a.inv().unwrap().to_string(), "3/2");
    }

    #[test]
    fn scalar_parse_round_trip() {
        for s in ["0", "7", "-3", "2/3", "-11/4"] {
            let v = parse_scalar(FieldSpec::Rational, s).unwrap();
            assert_eq!(v.to_string(), s);
        }
        let v = parse_scalar(FieldSpec::prime(5).unwrap(), "-3").unwrap();
        assert_eq!(v.to_string(), "2");
        assert!(parse_scalar(FieldSpec::Rational, "1/0").is_err());
        assert!(parse_scalar(FieldSpec::Rational, "abc").is_err());
    }

    #[test]
    fn mod_inverse_agrees_with_fermat() {
        // Independent oracle: a^(p-2) mod p by square-and-multiply.
        fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
            let mut acc: u128 = 1;
            let mut bb = b as u128 % p as u128;
            while e > 0 {
                if e & 1 == 1 {
                    acc = acc * bb % p as u128;
                }
                bb = bb * bb % p as u128;
                e >>= 1;
            }
            b = acc as u64;
            b
        }
        for p in [3u64, 5, 101, 2147483647] {
            for a in [1u64, 2, p - 1, p / 2 + 1] {
                assert_eq!(mod_inv(a, p), pow_mod(a, p - 2, p), "a={a} p={p}");
            }
        }
    }
}
