//! Seeded instance generators.  Equal seeds produce equal instances, hence
//! byte-identical files and reports downstream.

use std::collections::BTreeSet;

use itertools::Itertools;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::duality::{DiscreteInstance, KernelEntry};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::io::{InstanceFile, InstanceLine};
use crate::line::canonical_line;
use crate::vector::Vector;

/// The axis-parallel line family of the `n x ... x n` grid, with `M ≡ 1` on
/// the grid points and `f ≡ 1` on the lines.  Lines along axis `j` carry
/// family index `j`.
pub fn grid(field: FieldSpec, dim: usize, n: u64) -> Result<InstanceFile> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    if n == 0 {
        return Err(Error::Degenerate("empty grid".into()));
    }
    if let FieldSpec::Fp(p) = field {
        // Coordinates 0..n must stay distinct residues.
        if n > p {
            return Err(Error::Degenerate(format!("grid size {n} exceeds the modulus {p}")));
        }
    }
    let mut inst = InstanceFile::new(field, dim);
    let range: Vec<i64> = (0..n as i64).collect();
    for point in std::iter::repeat(range.iter().copied()).take(dim).multi_cartesian_product() {
        inst.m.insert(Vector::from_i64(field, &point), BigRational::one());
    }
    for axis in 0..dim {
        for rest in std::iter::repeat(range.iter().copied()).take(dim - 1).multi_cartesian_product()
        {
            let mut coords = vec![0i64; dim];
            let mut k = 0;
            for (t, c) in coords.iter_mut().enumerate() {
                if t != axis {
                    *c = rest[k];
                    k += 1;
                }
            }
            let line = canonical_line(
                &Vector::from_i64(field, &coords),
                &Vector::unit(field, dim, axis),
            )?;
            if inst.f.insert(line.clone(), BigRational::one()).is_none() {
                inst.lines.push(InstanceLine { line, multiplicity: 1, family: axis });
            }
        }
    }
    inst.lines.sort_by(|a, b| (a.family, &a.line).cmp(&(b.family, &b.line)));
    Ok(inst)
}

fn fp_modulus(field: FieldSpec, what: &str) -> Result<u64> {
    match field {
        FieldSpec::Fp(p) => Ok(p),
        FieldSpec::Rational => {
            Err(Error::Parse(format!("{what} generates over a prime field; pass a modulus")))
        }
    }
}

fn random_point(rng: &mut ChaCha20Rng, field: FieldSpec, dim: usize, p: u64) -> Vector {
    let coords: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..p) as i64).collect();
    Vector::from_i64(field, &coords)
}

fn random_direction(rng: &mut ChaCha20Rng, field: FieldSpec, dim: usize, p: u64) -> Vector {
    loop {
        let v = random_point(rng, field, dim, p);
        if !v.is_zero() {
            return v;
        }
    }
}

/// `count` random lines over `F_p`: uniform base point, uniform nonzero
/// direction.  Collisions merge into multiplicities.
pub fn random_lines(field: FieldSpec, dim: usize, count: usize, seed: u64) -> Result<InstanceFile> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let p = fp_modulus(field, "random-lines")?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut inst = InstanceFile::new(field, dim);
    for _ in 0..count {
        let base = random_point(&mut rng, field, dim, p);
        let dir = random_direction(&mut rng, field, dim, p);
        let line = canonical_line(&base, &dir)?;
        match inst.lines.iter_mut().find(|il| il.line == line) {
            Some(il) => il.multiplicity += 1,
            None => inst.lines.push(InstanceLine { line, multiplicity: 1, family: 0 }),
        }
    }
    inst.lines.sort_by(|a, b| a.line.cmp(&b.line));
    Ok(inst)
}

/// `count` distinct random lines over `F_p` with direction weights uniform
/// in `{1, ..., 100}`.
pub fn random_weights(
    field: FieldSpec,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<InstanceFile> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let p = fp_modulus(field, "random-weights")?;
    let distinct = p.pow(dim as u32 - 1) as usize * ((p.pow(dim as u32) - 1) / (p - 1)) as usize;
    if count > distinct {
        return Err(Error::Degenerate(format!(
            "requested {count} distinct lines; F_{p}^{dim} has {distinct}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut inst = InstanceFile::new(field, dim);
    let mut seen = BTreeSet::new();
    while seen.len() < count {
        let base = random_point(&mut rng, field, dim, p);
        let dir = random_direction(&mut rng, field, dim, p);
        let line = canonical_line(&base, &dir)?;
        if seen.insert(line.clone()) {
            let w = BigRational::from_integer(rng.gen_range(1..=100).into());
            inst.lines.push(InstanceLine { line: line.clone(), multiplicity: 1, family: 0 });
            inst.f.insert(line, w);
        }
    }
    inst.lines.sort_by(|a, b| a.line.cmp(&b.line));
    Ok(inst)
}

/// A small random duality instance: every point with positive density is
/// touched by the kernel, so the instance is saturated by construction.
pub fn random_duality(
    d: usize,
    max_x: usize,
    max_y: usize,
    seed: u64,
) -> Result<DiscreteInstance> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nx = rng.gen_range(1..=max_x);
    let ny: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=max_y)).collect();
    let mu: Vec<BigRational> =
        (0..nx).map(|_| BigRational::from_integer(rng.gen_range(1..=4).into())).collect();
    let axes: Vec<Vec<BigRational>> = ny
        .iter()
        .map(|&n| {
            (0..n).map(|_| BigRational::from_integer(rng.gen_range(1..=5).into())).collect()
        })
        .collect();

    let mut kernel = Vec::new();
    let mut touched = vec![false; nx];
    for x in 0..nx {
        // Point 0 is always touched, keeping the kernel nonempty.
        let tuples = if x == 0 { rng.gen_range(1..=3) } else { rng.gen_range(0..=3) };
        let mut seen = BTreeSet::new();
        for _ in 0..tuples {
            let y: Vec<usize> = ny.iter().map(|&n| rng.gen_range(0..n)).collect();
            if seen.insert(y.clone()) {
                touched[x] = true;
                kernel.push(KernelEntry {
                    x,
                    y,
                    value: BigRational::from_integer(rng.gen_range(1..=3).into()),
                });
            }
        }
    }
    let density: Vec<BigRational> = touched
        .iter()
        .map(|&t| {
            if t {
                BigRational::from_integer(rng.gen_range(1..=5).into())
            } else {
                BigRational::from_integer(0.into())
            }
        })
        .collect();
    DiscreteInstance::new(d, mu, density, axes, kernel, BigRational::one(), false)
}

/// Like [`random_duality`], but symmetric: equal axis weights and a kernel
/// closed under coordinate permutations.
pub fn random_symmetric_duality(
    d: usize,
    max_x: usize,
    max_y: usize,
    seed: u64,
) -> Result<DiscreteInstance> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nx = rng.gen_range(1..=max_x);
    let ny = rng.gen_range(1..=max_y);
    let mu: Vec<BigRational> =
        (0..nx).map(|_| BigRational::from_integer(rng.gen_range(1..=4).into())).collect();
    let axis: Vec<BigRational> =
        (0..ny).map(|_| BigRational::from_integer(rng.gen_range(1..=5).into())).collect();

    let mut kernel = Vec::new();
    let mut touched = vec![false; nx];
    for x in 0..nx {
        let classes = if x == 0 { rng.gen_range(1..=2) } else { rng.gen_range(0..=2) };
        let mut orbit = BTreeSet::new();
        for _ in 0..classes {
            let mut y: Vec<usize> = (0..d).map(|_| rng.gen_range(0..ny)).collect();
            y.sort_unstable();
            let value = BigRational::from_integer(rng.gen_range(1..=3).into());
            let k = y.len();
            for perm in y.into_iter().permutations(k) {
                if orbit.insert(perm.clone()) {
                    touched[x] = true;
                    kernel.push(KernelEntry { x, y: perm, value: value.clone() });
                }
            }
        }
    }
    let density: Vec<BigRational> = touched
        .iter()
        .map(|&t| {
            if t {
                BigRational::from_integer(rng.gen_range(1..=5).into())
            } else {
                BigRational::from_integer(0.into())
            }
        })
        .collect();
    DiscreteInstance::new(
        d,
        mu,
        density,
        vec![axis; d],
        kernel,
        BigRational::one(),
        true,
    )
}
