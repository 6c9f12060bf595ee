//! Finite permutation groups acting on window positions.
//!
//! A [`Permutation`] stores images: `map[i]` is where index `i` goes.
//! Composition reads right to left, `p.compose(q)` applies `q` first.
//!
//! The permutation representation moves rows: row `i` of `rho(h) x` is row
//! `h^-1(i)` of `x`, which makes `rho` a homomorphism
//! (`rho(pq) = rho(p) rho(q)`).
//!
//! Groups keep their multiplication table over abstract element indices
//! rather than deriving it from the permutations, because the dihedral
//! action on fewer than three vertices is not faithful: `D_2` has four
//! elements but only two distinct permutations of two positions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Bijection on `{0, .., k-1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<usize>,
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Perm{:?}", self.map)
    }
}

impl Permutation {
    /// Validates that `map` is a bijection.
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let k = map.len();
        if k == 0 {
            return Err(Error::invalid("permutation of an empty window"));
        }
        let mut seen = vec![false; k];
        for &image in &map {
            if image >= k || seen[image] {
                return Err(Error::invalid(format!(
                    "{map:?} is not a bijection on 0..{k}"
                )));
            }
            seen[image] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(k: usize) -> Self {
        Permutation {
            map: (0..k).collect(),
        }
    }

    /// `i -> i + m (mod k)`.
    pub fn shift(k: usize, m: usize) -> Self {
        Permutation {
            map: (0..k).map(|i| (i + m) % k).collect(),
        }
    }

    /// `i -> k - 1 - i`.
    pub fn reversal(k: usize) -> Self {
        Permutation {
            map: (0..k).rev().collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.map.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.degree() != other.degree() {
            return Err(Error::invalid(format!(
                "cannot compose permutations of degree {} and {}",
                self.degree(),
                other.degree()
            )));
        }
        Ok(Permutation {
            map: other.map.iter().map(|&j| self.map[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (i, &j) in self.map.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { map: inv }
    }

    /// Cycle lengths sorted in decreasing order, fixed points included.
    pub fn cycle_type(&self) -> Vec<usize> {
        let mut seen = vec![false; self.map.len()];
        let mut lengths = Vec::new();
        for start in 0..self.map.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.map[i];
                len += 1;
            }
            lengths.push(len);
        }
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths
    }

    /// The matrix `P` with `(P x)` row `i` equal to `x` row `h^-1(i)`.
    pub fn matrix(&self) -> Matrix {
        let k = self.degree();
        let mut m = Matrix::zeros(k, k);
        for (j, &hj) in self.map.iter().enumerate() {
            // always in range and finite
            let _ = m.set(hj, j, 1.0);
        }
        m
    }

    /// `P_h x` computed by moving rows instead of multiplying.
    pub fn permute_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.degree() {
            return Err(Error::dim(
                "permute_rows",
                (self.degree(), self.degree()),
                x.shape(),
            ));
        }
        let mut data = vec![0.0; x.rows() * x.cols()];
        for (i, &hi) in self.map.iter().enumerate() {
            data[hi * x.cols()..(hi + 1) * x.cols()].copy_from_slice(x.row(i));
        }
        Matrix::from_vec(x.rows(), x.cols(), data)
    }
}

pub fn identity(k: usize) -> Permutation {
    Permutation::identity(k)
}

pub fn compose(p: &Permutation, q: &Permutation) -> Result<Permutation> {
    p.compose(q)
}

pub fn inverse(p: &Permutation) -> Permutation {
    p.inverse()
}

pub fn permutation_matrix(p: &Permutation) -> Matrix {
    p.matrix()
}

/// Which family a group belongs to. The parameter is the family index
/// (`n` of `C_n` / `D_n`, `k` of `S_k`), not necessarily the window size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Cyclic(usize),
    Dihedral(usize),
    Symmetric(usize),
    Custom,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Cyclic(n) => write!(f, "cyclic:{n}"),
            GroupKind::Dihedral(n) => write!(f, "dihedral:{n}"),
            GroupKind::Symmetric(k) => write!(f, "symmetric:{k}"),
            GroupKind::Custom => write!(f, "custom"),
        }
    }
}

/// Largest symmetric group we build (`|S_5| = 120`).
pub const MAX_SYMMETRIC_DEGREE: usize = 5;

/// A finite group together with its action on `degree` window positions.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteGroup {
    kind: GroupKind,
    degree: usize,
    elements: Vec<Permutation>,
    identity: usize,
    cayley: Vec<usize>,
    inverse: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl FiniteGroup {
    /// `C_n` acting on `n` positions by cyclic shifts. Element `m` is the
    /// shift by `m`; for `n = 2` the generator is index reversal.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cyclic group of order 0"));
        }
        FiniteGroup::cyclic_shift(n, n)
    }

    /// `C_n` acting on `k` positions, generated by the shift by `k / n`.
    /// Fixed points of this action are windows with period `k / n`.
    pub fn cyclic_shift(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 || !k.is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "cyclic_shift needs n | k, got n={n}, k={k}"
            )));
        }
        let step = k / n;
        let elements = (0..n).map(|m| Permutation::shift(k, m * step)).collect();
        let cayley = table(n, |a, b| (a + b) % n);
        FiniteGroup::assemble(GroupKind::Cyclic(n), k, elements, cayley)
    }

    /// `Z_2` acting on `k` positions by index reversal. Its fixed points are
    /// mirror palindromes.
    pub fn mirror(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("mirror group on an empty window"));
        }
        let elements = vec![Permutation::identity(k), Permutation::reversal(k)];
        let cayley = table(2, |a, b| (a + b) % 2);
        FiniteGroup::assemble(GroupKind::Cyclic(2), k, elements, cayley)
    }

    /// `D_n` of order `2n` acting on the `n` polygon vertices.
    ///
    /// Elements `0..n` are the rotations `r^m` (`i -> i + m`), elements
    /// `n..2n` are the reflections `r^m s` (`i -> m - i`). For `n <= 2`
    /// the action has a kernel: `s` fixes every vertex.
    pub fn dihedral(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dihedral group D_0"));
        }
        let mut elements: Vec<Permutation> = (0..n).map(|m| Permutation::shift(n, m)).collect();
        elements.extend((0..n).map(|m| Permutation {
            map: (0..n).map(|i| (m + n - i) % n).collect(),
        }));
        // (r^a s^e)(r^b s^f) = r^(a + (-1)^e b) s^(e + f)
        let cayley = table(2 * n, |x, y| {
            let (a, e) = (x % n, x / n);
            let (b, f) = (y % n, y / n);
            let rot = if e == 0 { (a + b) % n } else { (a + n - b) % n };
            rot + n * ((e + f) % 2)
        });
        FiniteGroup::assemble(GroupKind::Dihedral(n), n, elements, cayley)
    }

    /// `S_k` on `k` positions, elements in lexicographic order of images.
    pub fn symmetric(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("symmetric group on an empty window"));
        }
        if k > MAX_SYMMETRIC_DEGREE {
            return Err(Error::Unsupported(format!(
                "symmetric group S_{k} exceeds the supported degree {MAX_SYMMETRIC_DEGREE}"
            )));
        }
        let elements = lexicographic_permutations(k);
        let mut g = FiniteGroup::from_permutations(elements)?;
        g.kind = GroupKind::Symmetric(k);
        Ok(g)
    }

    /// The one-element group on `k` positions.
    pub fn trivial(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("trivial group on an empty window"));
        }
        FiniteGroup::assemble(
            GroupKind::Custom,
            k,
            vec![Permutation::identity(k)],
            vec![0],
        )
    }

    /// A faithful group given by its distinct permutations; the set must be
    /// closed under composition and contain the identity.
    pub fn from_permutations(elements: Vec<Permutation>) -> Result<Self> {
        let degree = elements
            .first()
            .map(Permutation::degree)
            .ok_or_else(|| Error::invalid("empty element list"))?;
        if elements.iter().any(|p| p.degree() != degree) {
            return Err(Error::invalid("elements act on different window sizes"));
        }
        let distinct: BTreeSet<&Permutation> = elements.iter().collect();
        if distinct.len() != elements.len() {
            return Err(Error::invalid("duplicate permutations in a faithful group"));
        }
        let index_of = |p: &Permutation| elements.iter().position(|e| e == p);
        let n = elements.len();
        let mut cayley = Vec::with_capacity(n * n);
        for a in &elements {
            for b in &elements {
                let ab = a.compose(b)?;
                cayley.push(index_of(&ab).ok_or_else(|| {
                    Error::invalid("element list is not closed under composition")
                })?);
            }
        }
        FiniteGroup::assemble(GroupKind::Custom, degree, elements, cayley)
    }

    /// Assembles a group from an explicit table without checking the group
    /// axioms or the homomorphism property (see [`FiniteGroup::check_axioms`]
    /// and [`verify_homomorphism`]). Table entries must be in range and an
    /// identity row and inverses must exist.
    pub fn from_raw_parts(
        kind: GroupKind,
        degree: usize,
        elements: Vec<Permutation>,
        cayley: Vec<usize>,
    ) -> Result<Self> {
        FiniteGroup::assemble(kind, degree, elements, cayley)
    }

    fn assemble(
        kind: GroupKind,
        degree: usize,
        elements: Vec<Permutation>,
        cayley: Vec<usize>,
    ) -> Result<Self> {
        let n = elements.len();
        if n == 0 {
            return Err(Error::invalid("empty element list"));
        }
        if elements.iter().any(|p| p.degree() != degree) {
            return Err(Error::invalid("element degree differs from group degree"));
        }
        if cayley.len() != n * n || cayley.iter().any(|&c| c >= n) {
            return Err(Error::invalid(
                "Cayley table has the wrong shape or out-of-range entries",
            ));
        }
        let at = |a: usize, b: usize| cayley[a * n + b];
        let identity = (0..n)
            .find(|&e| (0..n).all(|x| at(e, x) == x && at(x, e) == x))
            .ok_or_else(|| Error::invalid("Cayley table has no identity"))?;
        let mut inverse = Vec::with_capacity(n);
        for a in 0..n {
            let inv = (0..n).find(|&b| at(a, b) == identity).ok_or_else(|| {
                Error::invalid(format!("element {a} has no inverse in the Cayley table"))
            })?;
            inverse.push(inv);
        }
        let mut class_of = vec![usize::MAX; n];
        let mut classes = Vec::new();
        for a in 0..n {
            if class_of[a] != usize::MAX {
                continue;
            }
            let id = classes.len();
            let mut members = BTreeSet::new();
            for (g, &g_inv) in inverse.iter().enumerate() {
                members.insert(at(at(g, a), g_inv));
            }
            let members: Vec<usize> = members
                .into_iter()
                .filter(|&m| class_of[m] == usize::MAX)
                .collect();
            for &m in &members {
                class_of[m] = id;
            }
            classes.push(members);
        }
        Ok(FiniteGroup {
            kind,
            degree,
            elements,
            identity,
            cayley,
            inverse,
            classes,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Window size the group acts on.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Permutation] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Permutation {
        &self.elements[i]
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }

    /// Index of `elements[a] * elements[b]`.
    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.cayley[a * self.order() + b]
    }

    pub fn cayley(&self) -> &[usize] {
        &self.cayley
    }

    pub fn inverse_index(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }

    pub fn is_abelian(&self) -> bool {
        let n = self.order();
        (0..n).all(|a| (0..n).all(|b| self.mul(a, b) == self.mul(b, a)))
    }

    /// Elements acting as the identity permutation.
    pub fn kernel(&self) -> Vec<usize> {
        (0..self.order())
            .filter(|&i| self.elements[i].is_identity())
            .collect()
    }

    /// Exhaustive check of closure, identity, inverses, associativity and
    /// class stability.
    pub fn check_axioms(&self) -> AxiomReport {
        let n = self.order();
        let mut report = AxiomReport::default();
        for a in 0..n {
            if self.mul(self.identity, a) != a || self.mul(a, self.identity) != a {
                report.identity_violations += 1;
            }
            if self.mul(a, self.inverse[a]) != self.identity
                || self.mul(self.inverse[a], a) != self.identity
            {
                report.inverse_violations += 1;
            }
            for b in 0..n {
                let ab = self.mul(a, b);
                for c in 0..n {
                    if self.mul(ab, c) != self.mul(a, self.mul(b, c)) {
                        report.associativity_violations += 1;
                    }
                }
            }
        }
        let mut covered = vec![0usize; n];
        for class in &self.classes {
            for &x in class {
                covered[x] += 1;
                for g in 0..n {
                    let y = self.mul(self.mul(g, x), self.inverse[g]);
                    if !class.contains(&y) {
                        report.class_violations += 1;
                    }
                }
            }
        }
        report.class_violations += covered.iter().filter(|&&c| c != 1).count();
        report
    }
}

fn table(n: usize, f: impl Fn(usize, usize) -> usize) -> Vec<usize> {
    (0..n * n).map(|i| f(i / n, i % n)).collect()
}

fn lexicographic_permutations(k: usize) -> Vec<Permutation> {
    let mut current: Vec<usize> = (0..k).collect();
    let mut out = vec![Permutation {
        map: current.clone(),
    }];
    // standard next-permutation
    while let Some(i) = (0..k.saturating_sub(1))
        .rev()
        .find(|&i| current[i] < current[i + 1])
    {
        let j = (i + 1..k)
            .rev()
            .find(|&j| current[j] > current[i])
            .unwrap_or(i + 1);
        current.swap(i, j);
        current[i + 1..].reverse();
        out.push(Permutation {
            map: current.clone(),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AxiomReport {
    pub identity_violations: usize,
    pub inverse_violations: usize,
    pub associativity_violations: usize,
    pub class_violations: usize,
}

impl AxiomReport {
    pub fn is_ok(&self) -> bool {
        *self == AxiomReport::default()
    }
}

/// Outcome of checking `rho(h1 h2) = rho(h1) rho(h2)` over all pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HomomorphismReport {
    pub pairs_checked: usize,
    /// `(a, b)` element index pairs where the product matrix disagrees.
    pub violations: Vec<(usize, usize)>,
}

impl HomomorphismReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exact comparison of `rho(table[a][b])` with `rho(a) rho(b)` for every
/// pair of elements.
pub fn verify_homomorphism(g: &FiniteGroup) -> HomomorphismReport {
    let matrices: Vec<SparseInt> = g
        .elements
        .iter()
        .map(|p| SparseInt::from_dense(&p.matrix()))
        .collect();
    let mut report = HomomorphismReport::default();
    let mut scratch = Vec::new();
    for a in 0..g.order() {
        for b in 0..g.order() {
            report.pairs_checked += 1;
            if !matrices[a].product_equals(&matrices[b], &matrices[g.mul(a, b)], &mut scratch) {
                report.violations.push((a, b));
            }
        }
    }
    report
}

/// Integer matrix in row-compressed form; products are exact and cost
/// O(nnz) for permutation matrices instead of O(k^2).
#[derive(PartialEq, Debug)]
struct SparseInt {
    /// Per row, `(column, value)` sorted by column, zeros omitted.
    rows: Vec<Vec<(usize, i64)>>,
}

impl SparseInt {
    fn from_dense(m: &Matrix) -> Self {
        let rows = (0..m.rows())
            .map(|r| {
                m.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v as i64))
                    .collect()
            })
            .collect();
        SparseInt { rows }
    }

    /// Whether `self * other == expected`, computed row by row with exact
    /// integer sums.
    fn product_equals(
        &self,
        other: &SparseInt,
        expected: &SparseInt,
        row_buf: &mut Vec<(usize, i64)>,
    ) -> bool {
        self.rows.iter().zip(&expected.rows).all(|(row, want)| {
            row_buf.clear();
            for &(l, a) in row {
                row_buf.extend(other.rows[l].iter().map(|&(c, b)| (c, a * b)));
            }
            row_buf.sort_unstable_by_key(|&(c, _)| c);
            let mut merged = row_buf
                .chunk_by(|x, y| x.0 == y.0)
                .map(|run| (run[0].0, run.iter().map(|e| e.1).sum::<i64>()))
                .filter(|&(_, v)| v != 0);
            let mut want = want.iter().copied();
            loop {
                match (merged.next(), want.next()) {
                    (None, None) => return true,
                    (x, y) if x == y => continue,
                    _ => return false,
                }
            }
        })
    }
}
