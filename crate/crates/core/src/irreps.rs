//! Real irreducible characters and isotypic projectors.
//!
//! For a real irreducible representation `λ` with character `χ` the
//! projector onto its isotypic component of the window space is
//!
//! ```text
//! P_λ = (d / |H|) Σ_h χ(h⁻¹) ρ(h)
//! ```
//!
//! We work over the reals. Complex irreps of `C_n` that are not real come in
//! conjugate pairs; each pair is merged into one [`RealIrrep`] whose stored
//! character is `χ + χ̄` and whose real dimension is 2. The projector weight
//! `d` is then the complex dimension of one member (1), and the formula above
//! yields the projector onto the sum of both components, which is real.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::groups::{FiniteGroup, GroupKind};
use crate::numerics::{frobenius_sq, Matrix};

/// Tolerance for the multiplicity integrality check.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-9;

/// One real irreducible character of a group.
#[derive(Clone, Debug, PartialEq)]
pub struct RealIrrep {
    label: String,
    dim: usize,
    characters: Vec<f64>,
    conjugate_pair: bool,
}

impl RealIrrep {
    /// `characters[i]` is the character of group element `i`.
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        characters: Vec<f64>,
        conjugate_pair: bool,
    ) -> Result<Self> {
        if dim == 0 || (conjugate_pair && !dim.is_multiple_of(2)) {
            return Err(Error::invalid(
                "irrep dimension must be positive (and even for a merged pair)",
            ));
        }
        if characters.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite character value"));
        }
        Ok(RealIrrep {
            label: label.into(),
            dim,
            characters,
            conjugate_pair,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Dimension as a real representation.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn characters(&self) -> &[f64] {
        &self.characters
    }

    pub fn character(&self, element: usize) -> f64 {
        self.characters[element]
    }

    /// Whether this entry merges a complex-conjugate pair.
    pub fn is_conjugate_pair(&self) -> bool {
        self.conjugate_pair
    }

    /// The `d` used in the projector formula: the complex dimension of one
    /// member for merged pairs, the dimension otherwise.
    pub fn projector_weight(&self) -> f64 {
        if self.conjugate_pair {
            (self.dim / 2) as f64
        } else {
            self.dim as f64
        }
    }
}

/// The complete list of real irreducible characters of a built-in group.
///
/// Characters are indexed by the group's abstract element indices, so
/// [`FiniteGroup::mirror`] and [`FiniteGroup::cyclic_shift`] share the
/// table of the cyclic group of the same order.
pub fn real_irreps(g: &FiniteGroup) -> Result<Vec<RealIrrep>> {
    match g.kind() {
        GroupKind::Cyclic(n) => cyclic_irreps(n),
        GroupKind::Dihedral(n) => dihedral_irreps(n),
        GroupKind::Symmetric(k) => symmetric_irreps(g, k),
        GroupKind::Custom if g.order() == 1 => {
            Ok(vec![RealIrrep::new("trivial", 1, vec![1.0], false)?])
        }
        GroupKind::Custom => Err(Error::Unsupported(format!(
            "no character table for a custom group of order {}",
            g.order()
        ))),
    }
}

fn cos_turn(num: usize, den: usize) -> f64 {
    libm::cos(2.0 * PI * (num % den) as f64 / den as f64)
}

fn cyclic_irreps(n: usize) -> Result<Vec<RealIrrep>> {
    let mut out = vec![RealIrrep::new("trivial", 1, vec![1.0; n], false)?];
    if n.is_multiple_of(2) {
        let chi = (0..n)
            .map(|m| if m % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        out.push(RealIrrep::new("sign", 1, chi, false)?);
    }
    for j in (1..n).take_while(|&j| 2 * j < n) {
        let chi = (0..n).map(|m| 2.0 * cos_turn(j * m, n)).collect();
        out.push(RealIrrep::new(format!("rot_{j}"), 2, chi, true)?);
    }
    Ok(out)
}

fn dihedral_irreps(n: usize) -> Result<Vec<RealIrrep>> {
    // element r^m at index m, r^m s at index n + m
    let one_dim = |label: &str, rot: f64, refl: f64| {
        let chi = (0..2 * n)
            .map(|x| {
                let (m, e) = (x % n, x / n);
                let r = if m % 2 == 0 { 1.0 } else { rot };
                if e == 1 {
                    r * refl
                } else {
                    r
                }
            })
            .collect();
        RealIrrep::new(label, 1, chi, false)
    };
    let mut out = vec![one_dim("trivial", 1.0, 1.0)?, one_dim("sign", 1.0, -1.0)?];
    if n.is_multiple_of(2) {
        out.push(one_dim("alt", -1.0, 1.0)?);
        out.push(one_dim("alt_sign", -1.0, -1.0)?);
    }
    for j in (1..n).take_while(|&j| 2 * j < n) {
        let chi = (0..2 * n)
            .map(|x| if x < n { 2.0 * cos_turn(j * x, n) } else { 0.0 })
            .collect();
        out.push(RealIrrep::new(format!("e_{j}"), 2, chi, false)?);
    }
    Ok(out)
}

/// Character of one irrep of `S_k` on each conjugacy class, classes keyed
/// by cycle type (decreasing part sizes, fixed points included).
struct SymmetricTable {
    cycle_types: &'static [&'static [usize]],
    irreps: &'static [(&'static str, &'static [i32])],
}

const S1: SymmetricTable = SymmetricTable {
    cycle_types: &[&[1]],
    irreps: &[("trivial", &[1])],
};

const S2: SymmetricTable = SymmetricTable {
    cycle_types: &[&[1, 1], &[2]],
    irreps: &[("trivial", &[1, 1]), ("sign", &[1, -1])],
};

const S3: SymmetricTable = SymmetricTable {
    cycle_types: &[&[1, 1, 1], &[2, 1], &[3]],
    irreps: &[
        ("trivial", &[1, 1, 1]),
        ("sign", &[1, -1, 1]),
        ("std", &[2, 0, -1]),
    ],
};

const S4: SymmetricTable = SymmetricTable {
    cycle_types: &[&[1, 1, 1, 1], &[2, 1, 1], &[2, 2], &[3, 1], &[4]],
    irreps: &[
        ("trivial", &[1, 1, 1, 1, 1]),
        ("sign", &[1, -1, 1, 1, -1]),
        ("std", &[3, 1, -1, 0, -1]),
        ("std_sign", &[3, -1, -1, 0, 1]),
        ("p2_2", &[2, 0, 2, -1, 0]),
    ],
};

const S5: SymmetricTable = SymmetricTable {
    cycle_types: &[
        &[1, 1, 1, 1, 1],
        &[2, 1, 1, 1],
        &[2, 2, 1],
        &[3, 1, 1],
        &[3, 2],
        &[4, 1],
        &[5],
    ],
    irreps: &[
        ("trivial", &[1, 1, 1, 1, 1, 1, 1]),
        ("sign", &[1, -1, 1, 1, -1, -1, 1]),
        ("std", &[4, 2, 0, 1, -1, 0, -1]),
        ("std_sign", &[4, -2, 0, 1, 1, 0, -1]),
        ("p3_2", &[5, 1, 1, -1, 1, -1, 0]),
        ("p2_2_1", &[5, -1, 1, -1, -1, 1, 0]),
        ("p3_1_1", &[6, 0, -2, 0, 0, 0, 1]),
    ],
};

fn symmetric_irreps(g: &FiniteGroup, k: usize) -> Result<Vec<RealIrrep>> {
    let table = match k {
        1 => &S1,
        2 => &S2,
        3 => &S3,
        4 => &S4,
        5 => &S5,
        _ => return Err(Error::Unsupported(format!("no character table for S_{k}"))),
    };
    let class_index: Vec<usize> = g
        .elements()
        .iter()
        .map(|p| {
            let ct = p.cycle_type();
            table
                .cycle_types
                .iter()
                .position(|t| *t == ct.as_slice())
                .ok_or_else(|| {
                    Error::Consistency(format!("cycle type {ct:?} missing from the S_{k} table"))
                })
        })
        .collect::<Result<_>>()?;
    table
        .irreps
        .iter()
        .map(|(label, values)| {
            let chi = class_index.iter().map(|&c| values[c] as f64).collect();
            RealIrrep::new(*label, values[0] as usize, chi, false)
        })
        .collect()
}

/// `P_λ = (d / |H|) Σ_h χ(h⁻¹) ρ(h)` on the group's window.
pub fn isotypic_projector(g: &FiniteGroup, irrep: &RealIrrep) -> Result<Matrix> {
    let belongs = irrep.characters().len() == g.order()
        && real_irreps(g)
            .map(|list| list.iter().any(|r| r == irrep))
            .unwrap_or(false);
    if !belongs {
        return Err(Error::invalid(format!(
            "irrep '{}' is not an irrep of {}",
            irrep.label(),
            g.kind()
        )));
    }
    Ok(projector_from_characters(g, irrep))
}

fn projector_from_characters(g: &FiniteGroup, irrep: &RealIrrep) -> Matrix {
    let k = g.degree();
    let mut acc = vec![0.0; k * k];
    for (h, perm) in g.elements().iter().enumerate() {
        let coeff = irrep.character(g.inverse_index(h));
        if coeff == 0.0 {
            continue;
        }
        // ρ(h) has its ones at (h(j), j)
        for (j, &hj) in perm.images().iter().enumerate() {
            acc[hj * k + j] += coeff;
        }
    }
    let factor = irrep.projector_weight() / g.order() as f64;
    let data = acc.into_iter().map(|v| v * factor).collect();
    Matrix::from_vec(k, k, data).expect("finite k x k projector")
}

/// One isotypic component of the window space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorItem {
    pub irrep: RealIrrep,
    pub projector: Matrix,
    /// Number of copies of the irrep inside the window representation.
    pub multiplicity: usize,
}

impl ProjectorItem {
    /// False for irreps that do not occur in the window (zero projector).
    pub fn is_present(&self) -> bool {
        self.multiplicity > 0
    }
}

/// The projector family `{P_λ}` of a group acting on a window, one entry per
/// real irrep (absent irreps included with a zero projector).
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSet {
    group: FiniteGroup,
    items: Vec<ProjectorItem>,
}

impl ProjectorSet {
    /// The single-projector set `{I}` of the trivial group on `k` positions.
    pub fn identity(k: usize) -> Result<Self> {
        projector_set(&FiniteGroup::trivial(k)?)
    }

    /// Assembles a set from precomputed items (e.g. read back from a file).
    /// Only shapes are checked; use [`verify_projector_set`] for the
    /// algebraic identities.
    pub fn from_items(group: FiniteGroup, items: Vec<ProjectorItem>) -> Result<Self> {
        let k = group.degree();
        if items.is_empty() {
            return Err(Error::invalid("empty projector set"));
        }
        for item in &items {
            if item.projector.shape() != (k, k) {
                return Err(Error::dim(
                    "ProjectorSet::from_items",
                    (k, k),
                    item.projector.shape(),
                ));
            }
        }
        Ok(ProjectorSet { group, items })
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn window(&self) -> usize {
        self.group.degree()
    }

    pub fn items(&self) -> &[ProjectorItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.items
            .iter()
            .map(|i| i.irrep.label().to_string())
            .collect()
    }

    pub fn get(&self, label: &str) -> Option<&ProjectorItem> {
        self.items.iter().find(|i| i.irrep.label() == label)
    }
}

/// All isotypic projectors of a built-in group with their multiplicities.
pub fn projector_set(g: &FiniteGroup) -> Result<ProjectorSet> {
    let mut items = Vec::new();
    let mut total_dim = 0usize;
    for irrep in real_irreps(g)? {
        let projector = projector_from_characters(g, &irrep);
        let m = projector.trace() / irrep.dim() as f64;
        let rounded = libm::round(m);
        if (m - rounded).abs() > MULTIPLICITY_TOLERANCE || rounded < 0.0 {
            return Err(Error::Consistency(format!(
                "multiplicity of '{}' is {m}, not an integer",
                irrep.label()
            )));
        }
        let multiplicity = rounded as usize;
        total_dim += multiplicity * irrep.dim();
        items.push(ProjectorItem {
            irrep,
            projector,
            multiplicity,
        });
    }
    if total_dim != g.degree() {
        return Err(Error::Consistency(format!(
            "isotypic dimensions sum to {total_dim}, window is {}",
            g.degree()
        )));
    }
    Ok(ProjectorSet {
        group: g.clone(),
        items,
    })
}

/// Largest Frobenius-norm deviation from each projector identity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectorReport {
    /// `max ‖P² − P‖`
    pub idempotency: f64,
    /// `max ‖P_λ P_μ‖`, `λ ≠ μ`
    pub orthogonality: f64,
    /// `‖Σ P − I‖`
    pub completeness: f64,
    /// `max ‖P − Pᵀ‖`
    pub symmetry: f64,
    /// `max ‖P ρ(h) − ρ(h) P‖` over all `h`
    pub commutation: f64,
}

impl ProjectorReport {
    pub fn max_deviation(&self) -> f64 {
        [
            self.idempotency,
            self.orthogonality,
            self.completeness,
            self.symmetry,
            self.commutation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn verify_projector_set(ps: &ProjectorSet) -> ProjectorReport {
    let k = ps.window();
    let dist = |a: &Matrix, b: &Matrix| libm::sqrt(frobenius_sq(&a.sub(b).expect("k x k")));
    let rhos: Vec<Matrix> = ps.group().elements().iter().map(|p| p.matrix()).collect();
    let mut report = ProjectorReport::default();
    let mut sum = Matrix::zeros(k, k);
    for (a, item) in ps.items().iter().enumerate() {
        let p = &item.projector;
        let p2 = p.matmul(p).expect("k x k");
        report.idempotency = report.idempotency.max(dist(&p2, p));
        report.symmetry = report.symmetry.max(dist(p, &p.transpose()));
        for other in &ps.items()[a + 1..] {
            let cross = p.matmul(&other.projector).expect("k x k");
            report.orthogonality = report.orthogonality.max(libm::sqrt(frobenius_sq(&cross)));
        }
        for rho in &rhos {
            let lhs = p.matmul(rho).expect("k x k");
            let rhs = rho.matmul(p).expect("k x k");
            report.commutation = report.commutation.max(dist(&lhs, &rhs));
        }
        sum = sum.add(p).expect("k x k");
    }
    report.completeness = dist(&sum, &Matrix::identity(k));
    report
}
