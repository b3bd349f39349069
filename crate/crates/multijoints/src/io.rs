//! One structured text format (JSON syntax) for instances, certificates,
//! and report payloads.  Rationals travel as `"num/den"` strings and root
//! expressions as `{radicand, num, den}` objects, so exactness survives
//! serialization; loading canonicalizes lines and reports the offending
//! entry on rejection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_rational::BigRational;
use num_traits::Signed;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::certificate::{
    CertificateScope, FactorCertificate, MultijointCertificate, PointWeights,
};
use crate::duality::{DiscreteInstance, KernelEntry};
use crate::error::{Error, Result};
use crate::field::{parse_rational, parse_scalar, rational_string, FieldSpec, Scalar};
use crate::heavy::DirectionWeights;
use crate::joints::{LineFamily, MultiFamily};
use crate::line::{canonical_line, Line};
use crate::rootexpr::RootExpr;
use crate::vector::Vector;

/// One family line plus bookkeeping: multiplicity and the slot it belongs
/// to in multijoint commands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceLine {
    pub line: Line,
    pub multiplicity: u64,
    pub family: usize,
}

/// A parsed instance: geometry, the two weight systems, and an optional
/// generic duality problem.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceFile {
    pub field: FieldSpec,
    pub dim: usize,
    pub lines: Vec<InstanceLine>,
    /// Point weights M.
    pub m: PointWeights,
    /// Direction weights f, keyed by canonical line.
    pub f: BTreeMap<Line, BigRational>,
    pub duality: Option<DiscreteInstance>,
}

impl InstanceFile {
    pub fn new(field: FieldSpec, dim: usize) -> Self {
        InstanceFile { field, dim, lines: Vec::new(), m: PointWeights::new(), f: BTreeMap::new(), duality: None }
    }

    /// All lines as one family, with multiplicities.
    pub fn family(&self) -> Result<LineFamily> {
        let mut fam = LineFamily::new(self.field, self.dim)?;
        for il in &self.lines {
            fam.insert(il.line.clone(), il.multiplicity)?;
        }
        Ok(fam)
    }

    /// Lines grouped by family index into `d` slots.  A single family is
    /// replicated `d` times (the joints problem as a multijoints one);
    /// otherwise exactly `d` distinct indices must occur.
    pub fn multi_family(&self, d: usize) -> Result<MultiFamily> {
        let mut groups: BTreeMap<usize, LineFamily> = BTreeMap::new();
        for il in &self.lines {
            groups
                .entry(il.family)
                .or_insert(LineFamily::new(self.field, self.dim)?)
                .insert(il.line.clone(), il.multiplicity)?;
        }
        let fams: Vec<LineFamily> = match groups.len() {
            0 | 1 => {
                let one = groups
                    .into_values()
                    .next()
                    .map_or_else(|| LineFamily::new(self.field, self.dim), Ok)?;
                vec![one; d]
            }
            n if n == d => groups.into_values().collect(),
            n => {
                return Err(Error::Parse(format!(
                    "lines: expected 1 or {d} distinct family indices, got {n}"
                )))
            }
        };
        MultiFamily::new(fams)
    }

    /// Direction weights for the heavy-chain pipeline: `f` when present,
    /// otherwise each line with its multiplicity.  Lines are collapsed to
    /// their directions, so parallel lines accumulate.
    pub fn direction_weights(&self) -> Result<DirectionWeights> {
        let mut dw = DirectionWeights::new(self.field, self.dim)?;
        if self.f.is_empty() {
            for il in &self.lines {
                dw.add_direction(
                    il.line.direction(),
                    BigRational::from_integer(il.multiplicity.into()),
                )?;
            }
        } else {
            for (l, w) in &self.f {
                dw.add_direction(l.direction(), w.clone())?;
            }
        }
        Ok(dw)
    }

    pub fn from_json(text: &str) -> Result<InstanceFile> {
        let dto: InstanceDto = decode(text, "instance")?;
        let field = parse_field(&dto.field, dto.p)?;
        if dto.dim < 2 {
            return Err(Error::DimensionTooSmall(dto.dim));
        }
        let dim = dto.dim;

        let mut lines = Vec::new();
        for (i, ld) in dto.lines.iter().enumerate() {
            let at = format!("lines[{i}]");
            if ld.multiplicity == 0 {
                return Err(Error::Parse(format!("{at}: zero multiplicity")));
            }
            let line = parse_line(field, dim, &ld.base, &ld.direction, &at)?;
            lines.push(InstanceLine { line, multiplicity: ld.multiplicity, family: ld.family });
        }
        lines.sort_by(|a, b| (a.family, &a.line).cmp(&(b.family, &b.line)));
        lines.dedup_by(|b, a| {
            if a.family == b.family && a.line == b.line {
                a.multiplicity += b.multiplicity;
                true
            } else {
                false
            }
        });

        let mut m = PointWeights::new();
        for (i, pw) in dto.m.iter().enumerate() {
            let at = format!("m[{i}]");
            let point = parse_point(field, dim, &pw.point, &at)?;
            let weight = parse_weight(&pw.weight, &at)?;
            if weight.is_negative() {
                return Err(Error::Parse(format!(
                    "{at}: negative weight {} at point {point}",
                    rational_string(&weight)
                )));
            }
            if m.insert(point, weight).is_some() {
                return Err(Error::Parse(format!("{at}: duplicate point")));
            }
        }

        let mut f = BTreeMap::new();
        for (i, lw) in dto.f.iter().enumerate() {
            let at = format!("f[{i}]");
            let line = parse_line(field, dim, &lw.base, &lw.direction, &at)?;
            let weight = parse_weight(&lw.weight, &at)?;
            if weight.is_negative() {
                return Err(Error::Parse(format!(
                    "{at}: negative weight {}",
                    rational_string(&weight)
                )));
            }
            if f.insert(line, weight).is_some() {
                return Err(Error::Parse(format!("{at}: duplicate line")));
            }
        }

        let duality = dto.duality.as_ref().map(|d| parse_duality(d)).transpose()?;
        Ok(InstanceFile { field, dim, lines, m, f, duality })
    }

    pub fn to_json(&self) -> String {
        let dto = InstanceDto {
            field: field_name(self.field),
            p: field_modulus(self.field),
            dim: self.dim,
            lines: self
                .lines
                .iter()
                .map(|il| LineDto {
                    base: coords(il.line.base()),
                    direction: coords(il.line.direction()),
                    multiplicity: il.multiplicity,
                    family: il.family,
                })
                .collect(),
            m: self
                .m
                .iter()
                .map(|(p, w)| PointWeightDto { point: coords(p), weight: rational_string(w) })
                .collect(),
            f: self
                .f
                .iter()
                .map(|(l, w)| LineWeightDto {
                    base: coords(l.base()),
                    direction: coords(l.direction()),
                    weight: rational_string(w),
                })
                .collect(),
            duality: self.duality.as_ref().map(duality_dto),
        };
        pretty(&dto)
    }
}

pub fn load_instance(path: &Path) -> Result<InstanceFile> {
    InstanceFile::from_json(&fs::read_to_string(path)?)
}

pub fn save_instance(path: &Path, inst: &InstanceFile) -> Result<()> {
    Ok(fs::write(path, inst.to_json() + "\n")?)
}

/// A certificate file holds either a joints certificate or a multijoint one
/// (the latter carries slot index lists).
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedCertificate {
    Joints(FactorCertificate),
    Multi(MultijointCertificate),
}

impl LoadedCertificate {
    pub fn joint(&self) -> &FactorCertificate {
        match self {
            LoadedCertificate::Joints(c) => c,
            LoadedCertificate::Multi(c) => c.joint(),
        }
    }
}

pub fn certificate_to_json(cert: &FactorCertificate) -> String {
    pretty(&certificate_dto(cert, &[]))
}

pub fn multijoint_to_json(cert: &MultijointCertificate) -> String {
    pretty(&certificate_dto(cert.joint(), cert.slots()))
}

pub fn certificate_from_json(text: &str) -> Result<LoadedCertificate> {
    let dto: CertificateDto = decode(text, "certificate")?;
    if dto.kind != "factorisation" {
        return Err(Error::Parse(format!("certificate: unknown kind {:?}", dto.kind)));
    }
    let field = parse_field(&dto.field, dto.p)?;
    let scope = match dto.scope.as_str() {
        "all-lines" => CertificateScope::AllLines,
        "explicit" => CertificateScope::Explicit,
        s => return Err(Error::Parse(format!("certificate: unknown scope {s:?}"))),
    };
    let mut support = Vec::new();
    for (i, c) in dto.support.iter().enumerate() {
        support.push(parse_point(field, dto.dim, c, &format!("support[{i}]"))?);
    }
    let mut weights = Vec::new();
    for (i, w) in dto.weights.iter().enumerate() {
        weights.push(parse_weight(w, &format!("weights[{i}]"))?);
    }
    let mut lines = Vec::new();
    for (i, ld) in dto.lines.iter().enumerate() {
        lines.push(parse_line(field, dto.dim, &ld.base, &ld.direction, &format!("lines[{i}]"))?);
    }
    let mut table = vec![vec![BigRational::from_integer(0.into()); lines.len()]; support.len()];
    for (i, e) in dto.entries.iter().enumerate() {
        let at = format!("entries[{i}]");
        let row = table
            .get_mut(e.x)
            .ok_or_else(|| Error::Parse(format!("{at}: point index {} out of range", e.x)))?;
        let cell = row
            .get_mut(e.l)
            .ok_or_else(|| Error::Parse(format!("{at}: line index {} out of range", e.l)))?;
        *cell = parse_weight(&e.g, &at)?;
    }
    let value = parse_weight(&dto.value, "value")?;
    let joint =
        FactorCertificate::from_parts(field, dto.dim, scope, support, weights, lines, table, value)?;
    if dto.slots.is_empty() {
        Ok(LoadedCertificate::Joints(joint))
    } else {
        Ok(LoadedCertificate::Multi(MultijointCertificate::from_parts(joint, dto.slots)?))
    }
}

pub fn load_certificate(path: &Path) -> Result<LoadedCertificate> {
    certificate_from_json(&fs::read_to_string(path)?)
}

/// Root expression as a `{radicand, num, den}` JSON object.
pub fn rootexpr_to_value(r: &RootExpr) -> serde_json::Value {
    let (num, den) = r.exponent();
    serde_json::json!({
        "radicand": rational_string(r.radicand()),
        "num": num,
        "den": den,
    })
}

pub fn rootexpr_from_value(v: &serde_json::Value) -> Result<RootExpr> {
    let bad = |m: &str| Error::Parse(format!("root expression: {m}"));
    let radicand = v
        .get("radicand")
        .and_then(|r| r.as_str())
        .and_then(parse_rational)
        .ok_or_else(|| bad("malformed radicand"))?;
    let num = v.get("num").and_then(|n| n.as_i64()).ok_or_else(|| bad("malformed num"))?;
    let den = v
        .get("den")
        .and_then(|d| d.as_u64())
        .and_then(|d| u32::try_from(d).ok())
        .ok_or_else(|| bad("malformed den"))?;
    RootExpr::new(radicand, num, den)
}

// ---------------------------------------------------------------------------
// Wire shapes.  Field order here fixes the emitted key order, which together
// with sorted collections makes serialization byte-deterministic.

#[derive(Serialize, Deserialize)]
struct InstanceDto {
    field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<u64>,
    dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lines: Vec<LineDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    m: Vec<PointWeightDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    f: Vec<LineWeightDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duality: Option<DualityDto>,
}

#[derive(Serialize, Deserialize)]
struct LineDto {
    base: Vec<String>,
    direction: Vec<String>,
    #[serde(default = "one_u64")]
    multiplicity: u64,
    #[serde(default)]
    family: usize,
}

fn one_u64() -> u64 {
    1
}

#[derive(Serialize, Deserialize)]
struct PointWeightDto {
    point: Vec<String>,
    weight: String,
}

#[derive(Serialize, Deserialize)]
struct LineWeightDto {
    base: Vec<String>,
    direction: Vec<String>,
    weight: String,
}

#[derive(Serialize, Deserialize)]
struct DualityDto {
    d: usize,
    mu: Vec<String>,
    density: Vec<String>,
    axes: Vec<Vec<String>>,
    kernel: Vec<KernelDto>,
    q: String,
    #[serde(default)]
    symmetric: bool,
}

#[derive(Serialize, Deserialize)]
struct KernelDto {
    x: usize,
    y: Vec<usize>,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct CertificateDto {
    kind: String,
    field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<u64>,
    dim: usize,
    scope: String,
    support: Vec<Vec<String>>,
    weights: Vec<String>,
    lines: Vec<BareLineDto>,
    entries: Vec<EntryDto>,
    value: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    slots: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct BareLineDto {
    base: Vec<String>,
    direction: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EntryDto {
    x: usize,
    l: usize,
    g: String,
}

fn decode<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    // serde_json errors carry "at line L column C".
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn pretty<T: Serialize>(dto: &T) -> String {
    serde_json::to_string_pretty(dto).expect("serializing owned data cannot fail")
}

fn field_name(field: FieldSpec) -> String {
    match field {
        FieldSpec::Fp(_) => "Fp".into(),
        FieldSpec::Rational => "Q".into(),
    }
}

fn field_modulus(field: FieldSpec) -> Option<u64> {
    match field {
        FieldSpec::Fp(p) => Some(p),
        FieldSpec::Rational => None,
    }
}

fn parse_field(name: &str, p: Option<u64>) -> Result<FieldSpec> {
    match name {
        "Q" => match p {
            None => Ok(FieldSpec::Rational),
            Some(_) => Err(Error::Parse("field Q takes no modulus".into())),
        },
        "Fp" => {
            let p = p.ok_or_else(|| Error::Parse("field Fp requires a modulus p".into()))?;
            FieldSpec::prime(p)
        }
        other => Err(Error::Parse(format!("unknown field {other:?} (expected \"Fp\" or \"Q\")"))),
    }
}

fn coords(v: &Vector) -> Vec<String> {
    v.coords().iter().map(|c| c.to_string()).collect()
}

fn parse_point(field: FieldSpec, dim: usize, coords: &[String], at: &str) -> Result<Vector> {
    if coords.len() != dim {
        return Err(Error::Parse(format!(
            "{at}: expected {dim} coordinates, got {}",
            coords.len()
        )));
    }
    let cs: Vec<Scalar> = coords
        .iter()
        .map(|s| parse_scalar(field, s))
        .collect::<Result<_>>()
        .map_err(|e| Error::Parse(format!("{at}: {e}")))?;
    Vector::new(cs)
}

fn parse_line(
    field: FieldSpec,
    dim: usize,
    base: &[String],
    direction: &[String],
    at: &str,
) -> Result<Line> {
    let b = parse_point(field, dim, base, at)?;
    let d = parse_point(field, dim, direction, at)?;
    canonical_line(&b, &d).map_err(|e| Error::Parse(format!("{at}: {e}")))
}

fn parse_weight(s: &str, at: &str) -> Result<BigRational> {
    parse_rational(s).ok_or_else(|| Error::Parse(format!("{at}: malformed rational {s:?}")))
}

fn parse_duality(dto: &DualityDto) -> Result<DiscreteInstance> {
    let at = "duality";
    let rationals = |items: &[String], what: &str| -> Result<Vec<BigRational>> {
        items
            .iter()
            .enumerate()
            .map(|(i, s)| parse_weight(s, &format!("{at}.{what}[{i}]")))
            .collect()
    };
    let mu = rationals(&dto.mu, "mu")?;
    let density = rationals(&dto.density, "density")?;
    let mut axes = Vec::new();
    for (j, axis) in dto.axes.iter().enumerate() {
        axes.push(rationals(axis, &format!("axes[{j}]"))?);
    }
    let mut kernel = Vec::new();
    for (i, k) in dto.kernel.iter().enumerate() {
        kernel.push(KernelEntry {
            x: k.x,
            y: k.y.clone(),
            value: parse_weight(&k.value, &format!("{at}.kernel[{i}]"))?,
        });
    }
    let q = parse_weight(&dto.q, &format!("{at}.q"))?;
    DiscreteInstance::new(dto.d, mu, density, axes, kernel, q, dto.symmetric)
}

fn duality_dto(inst: &DiscreteInstance) -> DualityDto {
    let strings = |items: &[BigRational]| items.iter().map(rational_string).collect();
    DualityDto {
        d: inst.dim(),
        mu: strings(inst.mu()),
        density: strings(inst.density()),
        axes: inst.axis_weights().iter().map(|a| strings(a)).collect(),
        kernel: inst
            .kernel()
            .iter()
            .map(|k| KernelDto { x: k.x, y: k.y.clone(), value: rational_string(&k.value) })
            .collect(),
        q: rational_string(inst.q()),
        symmetric: inst.is_symmetric(),
    }
}

fn certificate_dto(cert: &FactorCertificate, slots: &[Vec<usize>]) -> CertificateDto {
    let mut entries = Vec::new();
    for (x, row) in cert.table().iter().enumerate() {
        for (l, g) in row.iter().enumerate() {
            if !num_traits::Zero::is_zero(g) {
                entries.push(EntryDto { x, l, g: rational_string(g) });
            }
        }
    }
    CertificateDto {
        kind: "factorisation".into(),
        field: field_name(cert.field()),
        p: field_modulus(cert.field()),
        dim: cert.dim(),
        scope: match cert.scope() {
            CertificateScope::AllLines => "all-lines".into(),
            CertificateScope::Explicit => "explicit".into(),
        },
        support: cert.support().iter().map(coords).collect(),
        weights: cert.weights().iter().map(rational_string).collect(),
        lines: cert
            .lines()
            .iter()
            .map(|l| BareLineDto { base: coords(l.base()), direction: coords(l.direction()) })
            .collect(),
        entries,
        value: rational_string(cert.value()),
        slots: slots.to_vec(),
    }
}
