use std::fmt;
use std::str::FromStr;

use psead_core::groups::{FiniteGroup, GroupKind};

/// Textual group selector `<kind>:<n>`.
///
/// `cyclic:n`, `dihedral:n` and `symmetric:k` act on their natural window;
/// `mirror:k` is `Z_2` acting on a `k`-window by index reversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupDescriptor {
    Cyclic(usize),
    Dihedral(usize),
    Symmetric(usize),
    Mirror(usize),
}

impl GroupDescriptor {
    pub fn build(&self) -> psead_core::Result<FiniteGroup> {
        match *self {
            GroupDescriptor::Cyclic(n) => FiniteGroup::cyclic(n),
            GroupDescriptor::Dihedral(n) => FiniteGroup::dihedral(n),
            GroupDescriptor::Symmetric(k) => FiniteGroup::symmetric(k),
            GroupDescriptor::Mirror(k) => FiniteGroup::mirror(k),
        }
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupDescriptor::Cyclic(n) => write!(f, "cyclic:{n}"),
            GroupDescriptor::Dihedral(n) => write!(f, "dihedral:{n}"),
            GroupDescriptor::Symmetric(k) => write!(f, "symmetric:{k}"),
            GroupDescriptor::Mirror(k) => write!(f, "mirror:{k}"),
        }
    }
}

impl FromStr for GroupDescriptor {
    type Err = String;

    /// Parses and checks that the group can actually be built.
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <kind>:<n>, got '{s}'"))?;
        let n: usize = n
            .parse()
            .map_err(|_| format!("'{n}' is not a non-negative integer"))?;
        let desc = match kind {
            "cyclic" => GroupDescriptor::Cyclic(n),
            "dihedral" => GroupDescriptor::Dihedral(n),
            "symmetric" => GroupDescriptor::Symmetric(n),
            "mirror" => GroupDescriptor::Mirror(n),
            other => {
                return Err(format!(
                    "unknown group kind '{other}' (expected cyclic, dihedral, symmetric or mirror)"
                ))
            }
        };
        desc.build().map_err(|e| e.to_string())?;
        Ok(desc)
    }
}

/// Rebuilds a built-in group from its kind and window size. Returns `None`
/// when no constructor produces that combination.
pub fn rebuild_group(kind: GroupKind, degree: usize) -> Option<FiniteGroup> {
    match kind {
        GroupKind::Cyclic(n) if n == degree => FiniteGroup::cyclic(n).ok(),
        GroupKind::Cyclic(2) => FiniteGroup::mirror(degree).ok(),
        GroupKind::Cyclic(n) => FiniteGroup::cyclic_shift(n, degree).ok(),
        GroupKind::Dihedral(n) if n == degree => FiniteGroup::dihedral(n).ok(),
        GroupKind::Symmetric(k) if k == degree => FiniteGroup::symmetric(k).ok(),
        GroupKind::Custom => FiniteGroup::trivial(degree).ok(),
        _ => None,
    }
}

/// Parses the `kind` part of a descriptor (`cyclic:2`, `custom`).
pub fn parse_kind(s: &str) -> Option<GroupKind> {
    if s == "custom" {
        return Some(GroupKind::Custom);
    }
    let (kind, n) = s.split_once(':')?;
    let n: usize = n.parse().ok()?;
    match kind {
        "cyclic" => Some(GroupKind::Cyclic(n)),
        "dihedral" => Some(GroupKind::Dihedral(n)),
        "symmetric" => Some(GroupKind::Symmetric(n)),
        _ => None,
    }
}
