//! Linear subspaces as reduced row echelon bases, plus span, independence,
//! and the basis-completion pool used when closing a line family.
//!
//! The reduced row echelon form is unique for a given subspace, so two
//! subspaces are equal iff their stored bases are structurally equal, and a
//! lexicographic order on bases gives a deterministic tie-break when several
//! candidate subspaces qualify in a search.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::vector::Vector;

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Subspace {
    // Ordering matters for derived PartialOrd: compare bases first so that
    // the lexicographically least reduced basis wins ties.
    basis: Vec<Vector>,
    ambient: usize,
    field: FieldSpec,
}

impl Subspace {
    /// The zero subspace of `F^d`.
    pub fn zero(field: FieldSpec, ambient: usize) -> Self {
        Subspace { basis: Vec::new(), ambient, field }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    /// Rows of the reduced row echelon basis, pivots strictly increasing.
    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    /// Reduces `v` against the basis; membership iff the remainder is zero.
    pub fn contains(&self, v: &Vector) -> bool {
        self.reduce(v).is_zero()
    }

    pub fn contains_subspace(&self, other: &Subspace) -> bool {
        other.basis.iter().all(|v| self.contains(v))
    }

    /// Remainder of `v` after eliminating all pivot coordinates.
    fn reduce(&self, v: &Vector) -> Vector {
        let mut r = v.clone();
        for row in &self.basis {
            let piv = row.pivot().expect("basis rows are nonzero");
            let c = r.get(piv).clone();
            if !c.is_zero() {
                r = r.add_scaled(&-&c, row);
            }
        }
        r
    }

    /// Span of this subspace together with extra vectors.
    pub fn extend(&self, extra: &[Vector]) -> Result<Subspace> {
        let mut vs: Vec<Vector> = self.basis.clone();
        vs.extend(extra.iter().cloned());
        span(self.field, self.ambient, &vs)
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "span{{")?;
        for (i, b) in self.basis.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}")
    }
}

/// Span of a finite set of vectors, as a reduced row echelon basis.
pub fn span(field: FieldSpec, ambient: usize, vectors: &[Vector]) -> Result<Subspace> {
    let mut rows: Vec<Vector> = Vec::new();
    for v in vectors {
        if v.dim() != ambient {
            return Err(Error::DimensionMismatch { expected: ambient, got: v.dim() });
        }
        if let Some(f) = v.field() {
            if f != field {
                return Err(Error::MixedFields(field.to_string(), f.to_string()));
            }
        }
        rows.push(v.clone());
    }
    let mut rank = 0usize;
    for col in 0..ambient {
        // Find a row with a nonzero entry in this column.
        let Some(idx) = (rank..rows.len()).find(|&i| !rows[i].get(col).is_zero()) else {
            continue;
        };
        rows.swap(rank, idx);
        let inv = rows[rank].get(col).inv().expect("nonzero pivot");
        rows[rank] = rows[rank].scale(&inv);
        let pivot_row = rows[rank].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == rank {
                continue;
            }
            let c = row.get(col).clone();
            if !c.is_zero() {
                *row = row.add_scaled(&-&c, &pivot_row);
            }
        }
        rank += 1;
    }
    rows.truncate(rank);
    Ok(Subspace { basis: rows, ambient, field })
}

/// Linear independence of a finite list (repeated vectors are dependent).
pub fn independent(field: FieldSpec, ambient: usize, vectors: &[Vector]) -> Result<bool> {
    Ok(span(field, ambient, vectors)?.dim() == vectors.len())
}

/// Completes a set of directions to a spanning pool.
///
/// Returns `B = A ∪ F` where `F` greedily collects standard basis vectors
/// outside the running span, so `span B = F^d` and `F` is independent
/// modulo `span A`. The pool has the exchange property: every independent
/// subset `C ⊆ B` extends to a basis of `F^d` using vectors of `B \ C`.
pub fn extend_to_basis_pool(field: FieldSpec, ambient: usize, dirs: &[Vector]) -> Result<Vec<Vector>> {
    let mut pool: Vec<Vector> = dirs.to_vec();
    let mut current = span(field, ambient, dirs)?;
    for i in 0..ambient {
        let e = Vector::unit(field, ambient, i);
        if !current.contains(&e) {
            current = current.extend(std::slice::from_ref(&e))?;
            pool.push(e);
        }
    }
    debug_assert!(current.is_full());
    Ok(pool)
}

/// All subspaces of `F_p^d`, every dimension, deduplicated by reduced basis.
///
/// Exponential in `p` and `d`; intended for small-field cross-checks, not as
/// a search path in production sizes.
pub fn all_subspaces(field: FieldSpec, ambient: usize) -> Vec<Subspace> {
    let FieldSpec::Fp(p) = field else {
        panic!("subspace enumeration requires a finite field");
    };
    // Projective representatives: one nonzero vector per direction.
    let mut reps: Vec<Vector> = Vec::new();
    let count = (p as usize).pow(ambient as u32);
    let mut seen = std::collections::BTreeSet::new();
    for code in 1..count {
        let mut c = code;
        let mut coords = Vec::with_capacity(ambient);
        for _ in 0..ambient {
            coords.push(field.from_i64((c % p as usize) as i64));
            c /= p as usize;
        }
        let v = Vector::new(coords).unwrap();
        let piv = v.pivot().unwrap();
        let norm = v.scale(&v.get(piv).inv().unwrap());
        if seen.insert(norm.clone()) {
            reps.push(norm);
        }
    }
    let mut out = std::collections::BTreeSet::new();
    out.insert(Subspace::zero(field, ambient));
    // Spans of all subsets of representatives of size <= ambient.
    let mut frontier: Vec<Subspace> = vec![Subspace::zero(field, ambient)];
    for _ in 0..ambient {
        let mut next = Vec::new();
        for s in &frontier {
            for r in &reps {
                if !s.contains(r) {
                    let bigger = s.extend(std::slice::from_ref(r)).unwrap();
                    if out.insert(bigger.clone()) {
                        next.push(bigger);
                    }
                }
            }
        }
        frontier = next;
    }
    out.into_iter().collect()
}
