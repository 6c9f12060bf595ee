//! Scaled dot-product attention and its per-irrep decompositions.
//!
//! Two decompositions are provided and they are not numerically equal:
//!
//! * post-projection: `Attn_λ = P_λ · Attn(Q, K, V)`. The channels sum to
//!   plain attention because the projectors sum to the identity.
//! * pre-projection: `Attn_λ = softmax((P_λQ)(P_λK)ᵀ/√d) (P_λV)`. Each channel
//!   is equivariant on its own; their sum is generally not plain attention.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::groups::{FiniteGroup, Permutation};
use crate::irreps::ProjectorSet;
use crate::numerics::{frobenius_sq, rand_matrix, softmax_rows, Matrix, Rng};

/// Query, key and value tables of one window (self-attention shapes).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionInput {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    scale_dim: usize,
}

impl AttentionInput {
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self> {
        if q.shape() != k.shape() {
            return Err(Error::dim("attention q/k", q.shape(), k.shape()));
        }
        if q.shape() != v.shape() {
            return Err(Error::dim("attention q/v", q.shape(), v.shape()));
        }
        let scale_dim = q.cols();
        Ok(AttentionInput { q, k, v, scale_dim })
    }

    /// `q = k = v = x`.
    pub fn self_attention(x: &Matrix) -> Self {
        AttentionInput {
            q: x.clone(),
            k: x.clone(),
            v: x.clone(),
            scale_dim: x.cols(),
        }
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn window(&self) -> usize {
        self.q.rows()
    }

    pub fn scale_dim(&self) -> usize {
        self.scale_dim
    }

    /// Applies `ρ(h)` to all three tables.
    pub fn permuted(&self, h: &Permutation) -> Result<Self> {
        Ok(AttentionInput {
            q: h.permute_rows(&self.q)?,
            k: h.permute_rows(&self.k)?,
            v: h.permute_rows(&self.v)?,
            scale_dim: self.scale_dim,
        })
    }
}

/// `softmax(q kᵀ / √d)`.
pub fn attention_weights(q: &Matrix, k: &Matrix, scale_dim: usize) -> Result<Matrix> {
    let scores = q
        .matmul_transposed(k)?
        .scale(1.0 / libm::sqrt(scale_dim as f64))?;
    softmax_rows(&scores)
}

/// `softmax(q kᵀ / √d) v`.
pub fn attention(inp: &AttentionInput) -> Result<Matrix> {
    attention_weights(&inp.q, &inp.k, inp.scale_dim)?.matmul(&inp.v)
}

/// Which attention map a layer (or a check) uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain attention; equivalent to either decomposition with `{I}`.
    Baseline,
    /// Project Q, K and V before attention.
    Pre,
    /// Project the attention output.
    Post,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Pre, Variant::Post];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Pre => "pre",
            Variant::Post => "post",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Output and attention weights of one irrep channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub label: String,
    pub output: Matrix,
    /// Row-stochastic `k x k` weights used by this channel.
    pub weights: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionOutput {
    /// Sum of all channel outputs.
    pub total: Matrix,
    pub channels: Vec<Channel>,
}

impl DecompositionOutput {
    pub fn channel(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label == label)
    }
}

fn check_window(inp: &AttentionInput, ps: &ProjectorSet) -> Result<()> {
    if inp.window() != ps.window() {
        return Err(Error::dim(
            "projector window",
            (ps.window(), ps.window()),
            inp.q.shape(),
        ));
    }
    Ok(())
}

fn sum_outputs(channels: &[Channel], shape: (usize, usize)) -> Result<Matrix> {
    let mut total = Matrix::zeros(shape.0, shape.1);
    for c in channels {
        total = total.add(&c.output)?;
    }
    Ok(total)
}

/// Channels `P_λ · Attn(Q, K, V)`, all sharing the plain attention weights.
pub fn psead_post(inp: &AttentionInput, ps: &ProjectorSet) -> Result<DecompositionOutput> {
    check_window(inp, ps)?;
    let weights = attention_weights(&inp.q, &inp.k, inp.scale_dim)?;
    let out = weights.matmul(&inp.v)?;
    let channels = ps
        .items()
        .iter()
        .map(|item| {
            Ok(Channel {
                label: item.irrep.label().into(),
                output: item.projector.matmul(&out)?,
                weights: weights.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = sum_outputs(&channels, out.shape())?;
    Ok(DecompositionOutput { total, channels })
}

/// Channels `softmax((P_λQ)(P_λK)ᵀ/√d)(P_λV)`.
///
/// Absent irreps have `P_λ = 0`: their scores are all zero, the weights are
/// uniform and the channel output is exactly zero.
pub fn psead_pre(inp: &AttentionInput, ps: &ProjectorSet) -> Result<DecompositionOutput> {
    check_window(inp, ps)?;
    let channels = ps
        .items()
        .iter()
        .map(|item| {
            let p = &item.projector;
            let q = p.matmul(&inp.q)?;
            let k = p.matmul(&inp.k)?;
            let v = p.matmul(&inp.v)?;
            let weights = attention_weights(&q, &k, inp.scale_dim)?;
            Ok(Channel {
                label: item.irrep.label().into(),
                output: weights.matmul(&v)?,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = sum_outputs(&channels, inp.v.shape())?;
    Ok(DecompositionOutput { total, channels })
}

/// Runs the chosen variant. `Baseline` ignores `ps`.
pub fn decompose(
    variant: Variant,
    inp: &AttentionInput,
    ps: &ProjectorSet,
) -> Result<DecompositionOutput> {
    match variant {
        Variant::Pre => psead_pre(inp, ps),
        Variant::Post => psead_post(inp, ps),
        Variant::Baseline => {
            let weights = attention_weights(&inp.q, &inp.k, inp.scale_dim)?;
            let output = weights.matmul(&inp.v)?;
            Ok(DecompositionOutput {
                total: output.clone(),
                channels: alloc::vec![Channel {
                    label: "trivial".into(),
                    output,
                    weights,
                }],
            })
        }
    }
}

/// `‖f(ρ(h)x) − ρ(h)f(x)‖²_F`.
pub fn equivariance_error<F>(f: F, x: &Matrix, h: &Permutation) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    let fx = f(x)?;
    if fx.shape() != x.shape() {
        return Err(Error::Contract(alloc::format!(
            "window map returned {}x{} for a {}x{} input",
            fx.rows(),
            fx.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let f_hx = f(&h.permute_rows(x)?)?;
    if f_hx.shape() != x.shape() {
        return Err(Error::Contract(
            "window map changed shape on a permuted input".into(),
        ));
    }
    let h_fx = h.permute_rows(&fx)?;
    Ok(frobenius_sq(&f_hx.sub(&h_fx)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivarianceReport {
    pub max: f64,
    pub mean: f64,
    /// Number of `(h, input)` pairs evaluated.
    pub evaluations: usize,
}

/// Equivariance error over every group element and `trials` random inputs
/// of shape `degree x feature_dim` with entries uniform in `[-1, 1]`.
pub fn equivariance_report<F>(
    f: F,
    g: &FiniteGroup,
    feature_dim: usize,
    trials: usize,
    rng: &mut Rng,
) -> Result<EquivarianceReport>
where
    F: Fn(&Matrix) -> Result<Matrix>,
{
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut evaluations = 0;
    for _ in 0..trials {
        let x = rand_matrix(rng, g.degree(), feature_dim, 1.0)?;
        for h in g.elements() {
            let e = equivariance_error(&f, &x, h)?;
            max = max.max(e);
            sum += e;
            evaluations += 1;
        }
    }
    Ok(EquivarianceReport {
        max,
        mean: sum / evaluations as f64,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::projector_set;
    use crate::numerics::frobenius_distance;

    fn z2() -> ProjectorSet {
        projector_set(&FiniteGroup::cyclic(2).unwrap()).unwrap()
    }

    #[test]
    fn zero_queries_average_values() {
        let mut rng = Rng::new(1);
        let v = rand_matrix(&mut rng, 5, 3, 1.0).unwrap();
        let inp = AttentionInput::new(Matrix::zeros(5, 3), Matrix::zeros(5, 3), v.clone()).unwrap();
        let out = attention(&inp).unwrap();
        let mean = v.column_mean();
        for r in 0..5 {
            for c in 0..3 {
                assert!((out.get(r, c) - mean.get(0, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_row_window_is_identity() {
        let x = Matrix::from_rows(&[&[0.3, -1.2, 4.0]]).unwrap();
        assert_eq!(attention(&AttentionInput::self_attention(&x)).unwrap(), x);
    }

    #[test]
    fn reversal_equivariance() {
        let mut rng = Rng::new(2);
        let x = rand_matrix(&mut rng, 4, 8, 1.0).unwrap();
        let flip = Permutation::reversal(4);
        let lhs = attention(&AttentionInput::self_attention(
            &flip.permute_rows(&x).unwrap(),
        ))
        .unwrap();
        let rhs = flip
            .permute_rows(&attention(&AttentionInput::self_attention(&x)).unwrap())
            .unwrap();
        assert!(frobenius_distance(&lhs, &rhs).unwrap() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(AttentionInput::new(
            Matrix::zeros(2, 3),
            Matrix::zeros(2, 3),
            Matrix::zeros(3, 3)
        )
        .is_err());
        let inp = AttentionInput::self_attention(&Matrix::zeros(3, 2));
        assert!(matches!(
            psead_pre(&inp, &z2()),
            Err(Error::Dimension { .. })
        ));
        assert!(psead_post(&inp, &z2()).is_err());
    }

    #[test]
    fn post_total_is_plain_attention() {
        let mut rng = Rng::new(3);
        let ps = projector_set(&FiniteGroup::dihedral(5).unwrap()).unwrap();
        let x = rand_matrix(&mut rng, 5, 6, 1.0).unwrap();
        let inp = AttentionInput::self_attention(&x);
        let dec = psead_post(&inp, &ps).unwrap();
        assert!(frobenius_distance(&dec.total, &attention(&inp).unwrap()).unwrap() < 1e-12);
        // channel ranges are orthogonal, column by column
        for (a, ca) in dec.channels.iter().enumerate() {
            for cb in &dec.channels[a + 1..] {
                for col in 0..6 {
                    let ip: f64 = (0..5)
                        .map(|r| ca.output.get(r, col) * cb.output.get(r, col))
                        .sum();
                    assert!(ip.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn post_sign_channel_vanishes_on_identical_rows() {
        let v = Matrix::from_rows(&[&[1.0, 2.0], &[1.0, 2.0]]).unwrap();
        let mut rng = Rng::new(4);
        let q = rand_matrix(&mut rng, 2, 2, 1.0).unwrap();
        let inp = AttentionInput::new(q.clone(), q, v).unwrap();
        let dec = psead_post(&inp, &z2()).unwrap();
        assert!(dec.channel("sign").unwrap().output.max_abs() < 1e-15);
    }

    #[test]
    fn post_trivial_channel_with_uniform_weights() {
        let v = Matrix::from_rows(&[&[1.0, -3.0], &[5.0, 2.0]]).unwrap();
        let inp = AttentionInput::new(Matrix::zeros(2, 2), Matrix::zeros(2, 2), v).unwrap();
        let dec = psead_post(&inp, &z2()).unwrap();
        let t = &dec.channel("trivial").unwrap().output;
        for r in 0..2 {
            assert_eq!(t.row(r), &[3.0, -0.5]);
        }
    }

    #[test]
    fn pre_on_symmetric_rows() {
        let x = Matrix::from_rows(&[&[0.2, 0.7, -1.0], &[0.2, 0.7, -1.0]]).unwrap();
        let dec = psead_pre(&AttentionInput::self_attention(&x), &z2()).unwrap();
        let sign = dec.channel("sign").unwrap();
        assert!(sign.output.is_zero());
        assert_eq!(dec.total, dec.channel("trivial").unwrap().output);
    }

    #[test]
    fn pre_is_channelwise_equivariant_on_mirror_six() {
        let mut rng = Rng::new(5);
        let g = FiniteGroup::mirror(6).unwrap();
        let ps = projector_set(&g).unwrap();
        let rev = g.element(1);
        let q = rand_matrix(&mut rng, 6, 4, 1.0).unwrap();
        let k = rand_matrix(&mut rng, 6, 4, 1.0).unwrap();
        let v = rand_matrix(&mut rng, 6, 4, 1.0).unwrap();
        let inp = AttentionInput::new(q, k, v).unwrap();
        let base = psead_pre(&inp, &ps).unwrap();
        let moved = psead_pre(&inp.permuted(rev).unwrap(), &ps).unwrap();
        let d = frobenius_distance(&moved.total, &rev.permute_rows(&base.total).unwrap()).unwrap();
        assert!(d < 1e-12);
        for (a, b) in moved.channels.iter().zip(&base.channels) {
            assert!(
                frobenius_distance(&a.output, &rev.permute_rows(&b.output).unwrap()).unwrap()
                    < 1e-12
            );
        }
    }

    #[test]
    fn trivial_set_reduces_to_attention() {
        let mut rng = Rng::new(6);
        let x = rand_matrix(&mut rng, 4, 3, 1.0).unwrap();
        let inp = AttentionInput::self_attention(&x);
        let ps = ProjectorSet::identity(4).unwrap();
        let plain = attention(&inp).unwrap();
        assert!(frobenius_distance(&psead_pre(&inp, &ps).unwrap().total, &plain).unwrap() < 1e-15);
        assert!(frobenius_distance(&psead_post(&inp, &ps).unwrap().total, &plain).unwrap() < 1e-15);
        assert_eq!(
            decompose(Variant::Baseline, &inp, &ps).unwrap().total,
            plain
        );
    }

    #[test]
    fn absent_irreps_contribute_zero() {
        let mut rng = Rng::new(7);
        let ps = projector_set(&FiniteGroup::symmetric(3).unwrap()).unwrap();
        let x = rand_matrix(&mut rng, 3, 5, 1.0).unwrap();
        let dec = psead_pre(&AttentionInput::self_attention(&x), &ps).unwrap();
        let sign = dec.channel("sign").unwrap();
        assert!(sign.output.is_zero());
        assert!(sign
            .weights
            .as_slice()
            .iter()
            .all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn channel_weights_are_row_stochastic() {
        let mut rng = Rng::new(8);
        let ps = projector_set(&FiniteGroup::dihedral(4).unwrap()).unwrap();
        let x = rand_matrix(&mut rng, 4, 7, 2.0).unwrap();
        for variant in Variant::ALL {
            let dec = decompose(variant, &AttentionInput::self_attention(&x), &ps).unwrap();
            for c in &dec.channels {
                for r in 0..4 {
                    assert!((c.weights.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn equivariance_error_cases() {
        let mut rng = Rng::new(9);
        let x = rand_matrix(&mut rng, 2, 3, 1.0).unwrap();
        let attn = |m: &Matrix| attention(&AttentionInput::self_attention(m));
        assert!(equivariance_error(attn, &x, &Permutation::reversal(2)).unwrap() < 1e-20);
        assert_eq!(
            equivariance_error(attn, &x, &Permutation::identity(2)).unwrap(),
            0.0
        );

        let zero_row0 = |m: &Matrix| {
            let mut out = m.clone();
            for c in 0..m.cols() {
                out.set(0, c, 0.0)?;
            }
            Ok(out)
        };
        assert!(equivariance_error(zero_row0, &x, &Permutation::reversal(2)).unwrap() > 0.0);

        let shrink = |m: &Matrix| Ok(Matrix::zeros(1, m.cols()));
        assert!(matches!(
            equivariance_error(shrink, &x, &Permutation::reversal(2)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn reports() {
        let attn = |m: &Matrix| attention(&AttentionInput::self_attention(m));
        let r = equivariance_report(
            attn,
            &FiniteGroup::cyclic(2).unwrap(),
            8,
            100,
            &mut Rng::new(10),
        )
        .unwrap();
        assert!(r.max < 1e-12);
        assert_eq!(r.evaluations, 200);

        let d4 = FiniteGroup::dihedral(4).unwrap();
        let ps = projector_set(&d4).unwrap();
        let pre = |m: &Matrix| Ok(psead_pre(&AttentionInput::self_attention(m), &ps)?.total);
        assert!(
            equivariance_report(pre, &d4, 16, 50, &mut Rng::new(11))
                .unwrap()
                .max
                < 1e-12
        );

        let biased = |m: &Matrix| {
            let mut out = m.clone();
            out.set(0, 0, m.get(0, 0) + 1.0)?;
            Ok(out)
        };
        assert!(
            equivariance_report(biased, &d4, 4, 3, &mut Rng::new(12))
                .unwrap()
                .max
                > 1e-3
        );
        assert!(equivariance_report(attn, &d4, 4, 0, &mut Rng::new(12)).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let attn = |m: &Matrix| attention(&AttentionInput::self_attention(m));
        let g = FiniteGroup::symmetric(3).unwrap();
        let a = equivariance_report(attn, &g, 5, 7, &mut Rng::new(13)).unwrap();
        let b = equivariance_report(attn, &g, 5, 7, &mut Rng::new(13)).unwrap();
        assert_eq!(a, b);
    }
}
