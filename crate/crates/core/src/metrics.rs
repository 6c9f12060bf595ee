//! Task metrics, the equivariance tracker and per-irrep activation mapping.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{equivariance_report, psead_pre, AttentionInput};
use crate::error::{Error, Result};
use crate::groups::FiniteGroup;
use crate::layer::{Param, PseadLayer};
use crate::numerics::{Matrix, Rng};

fn check_lengths(preds: &[u8], labels: &[u8]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    if preds.len() != labels.len() {
        return Err(Error::invalid("predictions and labels differ in length"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// F1 of the positive class (label 1).
///
/// `2 TP / (2 TP + FP + FN)`. When there are no positive labels and no
/// positive predictions the score is 1; predicting all negatives while
/// positives exist scores 0.
pub fn f1(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// Anything that maps a `window x feature` table to one of the same shape.
pub trait WindowMap {
    fn window(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn map_window(&self, x: &Matrix) -> Result<Matrix>;
}

impl WindowMap for PseadLayer {
    fn window(&self) -> usize {
        PseadLayer::window(self)
    }

    fn feature_dim(&self) -> usize {
        PseadLayer::feature_dim(self)
    }

    fn map_window(&self, x: &Matrix) -> Result<Matrix> {
        self.window_output(x)
    }
}

/// Max equivariance error of a window map over all of `g` and `trials`
/// seeded random inputs.
pub fn equivariance_tracker<M: WindowMap + ?Sized>(
    map: &M,
    g: &FiniteGroup,
    rng: &mut Rng,
    trials: usize,
) -> Result<f64> {
    if g.degree() != map.window() {
        return Err(Error::dim(
            "equivariance tracker",
            (g.degree(), g.degree()),
            (map.window(), map.feature_dim()),
        ));
    }
    Ok(equivariance_report(|x| map.map_window(x), g, map.feature_dim(), trials, rng)?.max)
}

/// Attention mass of one irrep channel over motif and background windows.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationEntry {
    pub label: String,
    /// `None` when every motif window is degenerate for this channel.
    pub motif: Option<f64>,
    pub background: Option<f64>,
    /// `motif / max(background, 1e-12)` when both are present.
    pub ratio: Option<f64>,
    /// Non-degenerate windows that entered each average.
    pub motif_windows: usize,
    pub background_windows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationReport {
    pub entries: Vec<ActivationEntry>,
}

impl ActivationReport {
    pub fn get(&self, label: &str) -> Option<&ActivationEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

/// Rows whose projected query has norm at most this fraction of
/// `max(1, ‖q‖_F)` count as vanished.
const DEGENERATE_ROW_TOLERANCE: f64 = 1e-10;

/// Per-window mass of each channel: the attention weight carried by rows
/// whose projected query is nonzero, divided by the window size. A channel
/// whose projected queries all vanish is degenerate (`None`).
fn channel_masses(layer: &PseadLayer, x: &Matrix) -> Result<Vec<Option<f64>>> {
    let q = x.matmul(layer.weight(Param::Query))?;
    let inp = AttentionInput::new(
        q.clone(),
        x.matmul(layer.weight(Param::Key))?,
        x.matmul(layer.weight(Param::Value))?,
    )?;
    let dec = psead_pre(&inp, layer.projectors())?;
    let threshold = DEGENERATE_ROW_TOLERANCE * q.frobenius().max(1.0);
    let k = x.rows();
    let mut out = Vec::with_capacity(dec.channels.len());
    for (item, ch) in layer.projectors().items().iter().zip(&dec.channels) {
        let pq = item.projector.matmul(&q)?;
        let mut mass = 0.0;
        let mut valid = 0usize;
        for r in 0..k {
            let norm = libm::sqrt(pq.row(r).iter().map(|v| v * v).sum::<f64>());
            if norm > threshold {
                valid += 1;
                mass += ch.weights.row(r).iter().sum::<f64>();
            }
        }
        out.push((valid > 0).then(|| mass / k as f64));
    }
    Ok(out)
}

fn mean_masses(layer: &PseadLayer, windows: &[Matrix]) -> Result<Vec<(Option<f64>, usize)>> {
    let n = layer.projectors().len();
    let mut sums = alloc::vec![0.0; n];
    let mut counts = alloc::vec![0usize; n];
    for x in windows {
        for (i, m) in channel_masses(layer, x)?.into_iter().enumerate() {
            if let Some(m) = m {
                sums[i] += m;
                counts[i] += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| ((c > 0).then(|| s / c as f64), c))
        .collect())
}

/// Contrast of per-irrep attention mass between motif and background
/// windows, computed from the layer's pre-projection channels.
pub fn activation_mapping(
    layer: &PseadLayer,
    motif_windows: &[Matrix],
    background_windows: &[Matrix],
) -> Result<ActivationReport> {
    if motif_windows.is_empty() || background_windows.is_empty() {
        return Err(Error::invalid(
            "activation mapping needs motif and background windows",
        ));
    }
    let motif = mean_masses(layer, motif_windows)?;
    let background = mean_masses(layer, background_windows)?;
    let entries = layer
        .projectors()
        .items()
        .iter()
        .zip(motif.into_iter().zip(background))
        .map(|(item, ((m, mc), (b, bc)))| ActivationEntry {
            label: item.irrep.label().into(),
            motif: m,
            background: b,
            ratio: match (m, b) {
                (Some(m), Some(b)) => Some(m / b.max(1e-12)),
                _ => None,
            },
            motif_windows: mc,
            background_windows: bc,
        })
        .collect();
    Ok(ActivationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::Variant;
    use crate::irreps::{projector_set, ProjectorSet};
    use crate::synth::{gen_nonpalindrome, gen_palindrome};

    fn confusion(preds: &[u8], labels: &[u8]) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for i in 0..preds.len() {
            match (preds[i], labels[i]) {
                (1, 1) => c.0 += 1,
                (1, 0) => c.1 += 1,
                (0, 1) => c.2 += 1,
                _ => c.3 += 1,
            }
        }
        c
    }

    #[test]
    fn metric_examples() {
        let l = [1, 0, 1, 1, 0];
        assert_eq!(accuracy(&l, &l).unwrap(), 1.0);
        assert_eq!(f1(&l, &l).unwrap(), 1.0);
        let wrong: Vec<u8> = l.iter().map(|&x| 1 - x).collect();
        assert_eq!(accuracy(&wrong, &l).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(f1(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(f1(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(f1(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn metrics_agree_with_confusion_oracle() {
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            let n = 1 + rng.below(30);
            let preds: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
            let (tp, fp, fn_, tn) = confusion(&preds, &labels);
            assert!(
                (accuracy(&preds, &labels).unwrap() - (tp + tn) as f64 / n as f64).abs() < 1e-15
            );
            let want = if tp + fp + fn_ == 0 {
                1.0
            } else {
                let precision = if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                };
                let recall = if tp + fn_ == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fn_) as f64
                };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            };
            assert!((f1(&preds, &labels).unwrap() - want).abs() < 1e-12);
        }
    }

    struct RowBias {
        k: usize,
        d: usize,
    }

    impl WindowMap for RowBias {
        fn window(&self) -> usize {
            self.k
        }
        fn feature_dim(&self) -> usize {
            self.d
        }
        fn map_window(&self, x: &Matrix) -> Result<Matrix> {
            let mut out = x.clone();
            for r in 0..x.rows() {
                out.set(r, 0, x.get(r, 0) + r as f64)?;
            }
            Ok(out)
        }
    }

    #[test]
    fn tracker_on_layers_and_fixture() {
        let g = FiniteGroup::mirror(6).unwrap();
        let ps = projector_set(&g).unwrap();
        let mut rng = Rng::new(2);
        for variant in Variant::ALL {
            let layer = PseadLayer::new(variant, ps.clone(), 4, 1, &mut rng).unwrap();
            assert!(equivariance_tracker(&layer, &g, &mut Rng::new(3), 5).unwrap() < 1e-12);
        }
        let fixture = RowBias { k: 6, d: 4 };
        assert!(equivariance_tracker(&fixture, &g, &mut Rng::new(3), 5).unwrap() > 1e-3);
        let wrong = FiniteGroup::mirror(5).unwrap();
        assert!(equivariance_tracker(&fixture, &wrong, &mut Rng::new(3), 5).is_err());
    }

    #[test]
    fn single_channel_masses_are_one() {
        let mut rng = Rng::new(4);
        let layer = PseadLayer::new(
            Variant::Pre,
            ProjectorSet::identity(6).unwrap(),
            4,
            1,
            &mut rng,
        )
        .unwrap();
        let motif: Vec<Matrix> = (0..5)
            .map(|_| gen_palindrome(6, 4, &mut rng).unwrap().features)
            .collect();
        let background: Vec<Matrix> = (0..5)
            .map(|_| gen_nonpalindrome(6, 4, &mut rng).unwrap().features)
            .collect();
        let report = activation_mapping(&layer, &motif, &background).unwrap();
        assert_eq!(report.entries.len(), 1);
        let e = &report.entries[0];
        assert!((e.motif.unwrap() - 1.0).abs() < 1e-12);
        assert!((e.background.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_channel_is_absent_on_palindromes() {
        let mut rng = Rng::new(5);
        let g = FiniteGroup::mirror(6).unwrap();
        let layer =
            PseadLayer::new(Variant::Pre, projector_set(&g).unwrap(), 4, 1, &mut rng).unwrap();
        let motif: Vec<Matrix> = (0..8)
            .map(|_| gen_palindrome(6, 4, &mut rng).unwrap().features)
            .collect();
        let background: Vec<Matrix> = (0..8)
            .map(|_| gen_nonpalindrome(6, 4, &mut rng).unwrap().features)
            .collect();
        let report = activation_mapping(&layer, &motif, &background).unwrap();
        let sign = report.get("sign").unwrap();
        assert_eq!(sign.motif, None);
        assert_eq!(sign.ratio, None);
        assert_eq!(sign.motif_windows, 0);
        let bg = sign.background.unwrap();
        assert!(bg > 0.0 && bg <= 1.0);
        let trivial = report.get("trivial").unwrap();
        assert!(trivial.ratio.is_some());
        for e in &report.entries {
            for m in [e.motif, e.background].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&m));
            }
        }
        assert!(activation_mapping(&layer, &[], &background).is_err());
    }

    #[test]
    fn tracker_is_order_independent() {
        let g = FiniteGroup::dihedral(4).unwrap();
        let layer = PseadLayer::new(
            Variant::Post,
            projector_set(&g).unwrap(),
            3,
            1,
            &mut Rng::new(6),
        )
        .unwrap();
        let once = equivariance_tracker(&layer, &g, &mut Rng::new(7), 6).unwrap();
        let again = equivariance_tracker(&layer, &g, &mut Rng::new(7), 6).unwrap();
        assert_eq!(once, again);
    }
}
