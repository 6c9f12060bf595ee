//! On-disk formats. Floats in the projector file use `{:.16e}`, which
//! round-trips every finite `f64` exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use psead_core::groups::{FiniteGroup, GroupKind, Permutation};
use psead_core::irreps::{real_irreps, ProjectorItem, ProjectorSet};
use psead_core::layer::EpochMetrics;
use psead_core::metrics::ActivationReport;
use psead_core::synth::{parse_symbols, render_symbols, Dataset, SequenceWindow, WindowMeta};
use psead_core::Matrix;

use crate::descriptor::{parse_kind, rebuild_group};
use crate::CliError;

const PROJECTOR_MAGIC: &str = "psead-projectors 1";

fn format_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("line {line}: {msg}"))
}

// ---------------------------------------------------------------- groups

#[derive(Serialize, Deserialize, Debug, PartialEq)]
struct GroupFile {
    kind: String,
    degree: usize,
    /// `elements[g][i]` is the image of position `i` under element `g`.
    elements: Vec<Vec<usize>>,
}

pub fn write_group(g: &FiniteGroup) -> String {
    let file = GroupFile {
        kind: g.kind().to_string(),
        degree: g.degree(),
        elements: g.elements().iter().map(|p| p.images().to_vec()).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("group file serialises");
    s.push('\n');
    s
}

/// Reads a group file. Built-in kinds are rebuilt from their constructor and
/// must match the listed elements; `custom` groups are closed under
/// composition from the listed elements.
pub fn read_group(text: &str) -> Result<FiniteGroup, CliError> {
    let file: GroupFile =
        serde_json::from_str(text).map_err(|e| CliError::Format(e.to_string()))?;
    let kind = parse_kind(&file.kind)
        .ok_or_else(|| CliError::Format(format!("unknown group kind '{}'", file.kind)))?;
    let elements = file
        .elements
        .into_iter()
        .map(Permutation::new)
        .collect::<psead_core::Result<Vec<_>>>()?;
    if elements.iter().any(|p| p.degree() != file.degree) {
        return Err(CliError::Format(
            "element degree disagrees with 'degree'".into(),
        ));
    }
    let group = match kind {
        GroupKind::Custom => FiniteGroup::from_permutations(elements.clone())?,
        _ => rebuild_group(kind, file.degree).ok_or_else(|| {
            CliError::Format(format!(
                "no built-in {kind} acts on {} positions",
                file.degree
            ))
        })?,
    };
    if group.elements() != elements.as_slice() {
        return Err(CliError::Format(
            "element list does not match the group kind".into(),
        ));
    }
    Ok(group)
}

// ------------------------------------------------------------ projectors

/// ```text
/// psead-projectors 1
/// group cyclic:2
/// window 2
/// irreps 2
/// irrep trivial dim 1 multiplicity 1
/// 5.0000000000000000e-1 5.0000000000000000e-1
/// 5.0000000000000000e-1 5.0000000000000000e-1
/// irrep sign dim 1 multiplicity 1
/// ...
/// ```
pub fn write_projectors(ps: &ProjectorSet) -> String {
    let k = ps.window();
    let mut s = String::new();
    writeln!(s, "{PROJECTOR_MAGIC}").unwrap();
    writeln!(s, "group {}", ps.group().kind()).unwrap();
    writeln!(s, "window {k}").unwrap();
    writeln!(s, "irreps {}", ps.len()).unwrap();
    for item in ps.items() {
        writeln!(
            s,
            "irrep {} dim {} multiplicity {}",
            item.irrep.label(),
            item.irrep.dim(),
            item.multiplicity
        )
        .unwrap();
        for r in 0..k {
            let row: Vec<String> = item
                .projector
                .row(r)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), CliError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| CliError::Format("unexpected end of file".into()))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str), CliError> {
        let (n, line) = self.next()?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| format_err(n, format!("expected '{key} ...'")))?;
        Ok((n, rest))
    }
}

fn parse_num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T, CliError> {
    s.parse()
        .map_err(|_| format_err(n, format!("bad number '{s}'")))
}

/// Inverse of [`write_projectors`]. The irreps are looked up by label in the
/// rebuilt group's table; projector entries are taken verbatim.
pub fn read_projectors(text: &str) -> Result<ProjectorSet, CliError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, magic) = lines.next()?;
    if magic != PROJECTOR_MAGIC {
        return Err(format_err(n, "not a projector file"));
    }
    let (n, kind) = lines.field("group")?;
    let kind = parse_kind(kind).ok_or_else(|| format_err(n, format!("unknown group '{kind}'")))?;
    let (n, window) = lines.field("window")?;
    let k: usize = parse_num(n, window)?;
    let group = rebuild_group(kind, k)
        .ok_or_else(|| format_err(n, format!("no built-in {kind} acts on {k} positions")))?;
    let irreps = real_irreps(&group)?;
    let (n, count) = lines.field("irreps")?;
    let count: usize = parse_num(n, count)?;

    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, header) = lines.field("irrep")?;
        let parts: Vec<&str> = header.split(' ').collect();
        let [label, "dim", dim, "multiplicity", mult] = parts.as_slice() else {
            return Err(format_err(
                n,
                "expected 'irrep <label> dim <d> multiplicity <m>'",
            ));
        };
        let irrep = irreps
            .iter()
            .find(|i| i.label() == *label)
            .ok_or_else(|| format_err(n, format!("group has no irrep '{label}'")))?
            .clone();
        let dim: usize = parse_num(n, dim)?;
        if dim != irrep.dim() {
            return Err(format_err(
                n,
                format!(
                    "irrep '{label}' has dimension {}, file says {dim}",
                    irrep.dim()
                ),
            ));
        }
        let multiplicity: usize = parse_num(n, mult)?;
        let mut data = Vec::with_capacity(k * k);
        for _ in 0..k {
            let (n, row) = lines.next()?;
            let before = data.len();
            for v in row.split(' ') {
                data.push(parse_num::<f64>(n, v)?);
            }
            if data.len() - before != k {
                return Err(format_err(n, format!("expected {k} entries")));
            }
        }
        items.push(ProjectorItem {
            irrep,
            projector: Matrix::from_vec(k, k, data)?,
            multiplicity,
        });
    }
    if let Some((n, extra)) = lines.inner.next() {
        if !extra.trim().is_empty() {
            return Err(format_err(n + 1, "trailing content"));
        }
    }
    Ok(ProjectorSet::from_items(group, items)?)
}

// ------------------------------------------------------------------ csv

/// Plain `k x k` grid, one row per line, 17 significant digits.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// `label,motif,background,ratio,motif_windows,background_windows`; absent
/// values are left empty.
pub fn activation_csv(report: &ActivationReport) -> String {
    let mut s = String::from("label,motif,background,ratio,motif_windows,background_windows\n");
    for e in &report.entries {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            e.label,
            opt(e.motif),
            opt(e.background),
            opt(e.ratio),
            e.motif_windows,
            e.background_windows
        )
        .unwrap();
    }
    s
}

// --------------------------------------------------------------- jsonl

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub equivariance_max: f64,
}

impl From<&EpochMetrics> for MetricsRecord {
    fn from(m: &EpochMetrics) -> Self {
        MetricsRecord {
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            val_loss: m.val_loss,
            val_acc: m.val_acc,
            equivariance_max: m.equivariance_max,
        }
    }
}

pub fn metrics_jsonl(history: &[EpochMetrics]) -> String {
    let mut s = String::new();
    for m in history {
        s.push_str(&serde_json::to_string(&MetricsRecord::from(m)).expect("metrics serialise"));
        s.push('\n');
    }
    s
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRecord>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format_err(i + 1, e)))
        .collect()
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
struct WindowRecord {
    split: String,
    symbols: String,
    label: u8,
    meta: String,
    alphabet_size: usize,
}

/// One JSON object per window, train split first.
pub fn dataset_jsonl(data: &Dataset) -> String {
    let mut s = String::new();
    for (split, windows) in [("train", &data.train), ("validation", &data.validation)] {
        for w in windows {
            let rec = WindowRecord {
                split: split.into(),
                symbols: render_symbols(&w.symbols, w.alphabet_size),
                label: w.label,
                meta: w.meta.to_string(),
                alphabet_size: w.alphabet_size,
            };
            s.push_str(&serde_json::to_string(&rec).expect("window serialises"));
            s.push('\n');
        }
    }
    s
}

pub fn read_dataset(text: &str) -> Result<Dataset, CliError> {
    let mut data = Dataset {
        train: Vec::new(),
        validation: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let rec: WindowRecord = serde_json::from_str(line).map_err(|e| format_err(n, e))?;
        let symbols =
            parse_symbols(&rec.symbols, rec.alphabet_size).map_err(|e| format_err(n, e))?;
        let meta: WindowMeta = rec.meta.parse().map_err(|e| format_err(n, e))?;
        if rec.label > 1 {
            return Err(format_err(n, "label must be 0 or 1"));
        }
        let w = SequenceWindow::new(symbols, rec.alphabet_size, rec.label, meta)
            .map_err(|e| format_err(n, e))?;
        match rec.split.as_str() {
            "train" => data.train.push(w),
            "validation" => data.validation.push(w),
            other => return Err(format_err(n, format!("unknown split '{other}'"))),
        }
    }
    let k = data
        .train
        .iter()
        .chain(&data.validation)
        .map(|w| w.window())
        .next();
    if let Some(k) = k {
        if data
            .train
            .iter()
            .chain(&data.validation)
            .any(|w| w.window() != k)
        {
            return Err(CliError::Format("windows of different lengths".into()));
        }
    }
    Ok(data)
}
