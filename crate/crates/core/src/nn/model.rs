//! Forward pass and exact backpropagation for
//! `FC -> LN -> ReLU -> FC -> LN -> ReLU -> FC -> ReLU` followed by a linear head.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::params::{ExtractorParams, HeadParams};
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

/// Which parameter group receives gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Head,
    Extractor,
    Both,
}

impl ParamGroup {
    fn head(self) -> bool {
        matches!(self, ParamGroup::Head | ParamGroup::Both)
    }

    fn extractor(self) -> bool {
        matches!(self, ParamGroup::Extractor | ParamGroup::Both)
    }
}

struct LayerNormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

/// Activations retained for the backward pass.
pub struct ForwardCache<'a> {
    x: ArrayView2<'a, f64>,
    ln1: LayerNormCache,
    y1: Array2<f64>,
    a1: Array2<f64>,
    ln2: LayerNormCache,
    y2: Array2<f64>,
    a2: Array2<f64>,
    z3: Array2<f64>,
    embedding: Array2<f64>,
}

impl ForwardCache<'_> {
    /// Post-ReLU embedding fed to the head.
    pub fn embedding(&self) -> &Array2<f64> {
        &self.embedding
    }

    /// LayerNorm outputs before gain and shift, for the two normalized layers.
    pub fn normalized(&self) -> [&Array2<f64>; 2] {
        [&self.ln1.xhat, &self.ln2.xhat]
    }
}

/// Gradients for the selected groups; an unselected group is `None`.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub extractor: Option<Vec<f64>>,
    pub head: Option<Vec<f64>>,
}

fn affine(x: &ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&w);
    z += &b;
    z
}

fn layer_norm(
    z: &Array2<f64>,
    gain: ArrayView1<'_, f64>,
    shift: ArrayView1<'_, f64>,
) -> (Array2<f64>, LayerNormCache) {
    let width = z.ncols() as f64;
    let mut xhat = Array2::zeros(z.raw_dim());
    let mut rstd = Array1::zeros(z.nrows());
    for (r, (row, mut out)) in z.outer_iter().zip(xhat.outer_iter_mut()).enumerate() {
        let mean = row.sum() / width;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        Zip::from(&mut out).and(&row).for_each(|o, &v| *o = (v - mean) * s);
    }
    let mut y = &xhat * &gain;
    y += &shift;
    (y, LayerNormCache { xhat, rstd })
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn check_width(extractor: &ExtractorParams, head: &HeadParams, x: &ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != extractor.dims.input {
        return Err(Error::Shape {
            expected: extractor.dims.input,
            got: x.ncols(),
        });
    }
    if head.dims.embed != extractor.dims.embed {
        return Err(Error::Shape {
            expected: extractor.dims.embed,
            got: head.dims.embed,
        });
    }
    Ok(())
}

/// Logits `[batch x C]` plus the cache needed by [`backward`].
pub fn forward<'a>(
    extractor: &ExtractorParams,
    head: &HeadParams,
    x: ArrayView2<'a, f64>,
) -> Result<(Array2<f64>, ForwardCache<'a>)> {
    check_width(extractor, head, &x)?;
    let z1 = affine(&x, extractor.w1(), extractor.b1());
    let (y1, ln1) = layer_norm(&z1, extractor.ln1_gain(), extractor.ln1_shift());
    let a1 = relu(&y1);
    let z2 = affine(&a1.view(), extractor.w2(), extractor.b2());
    let (y2, ln2) = layer_norm(&z2, extractor.ln2_gain(), extractor.ln2_shift());
    let a2 = relu(&y2);
    let z3 = affine(&a2.view(), extractor.w3(), extractor.b3());
    let embedding = relu(&z3);
    let logits = affine(&embedding.view(), head.weight(), head.bias());
    Ok((
        logits,
        ForwardCache {
            x,
            ln1,
            y1,
            a1,
            ln2,
            y2,
            a2,
            z3,
            embedding,
        },
    ))
}

/// Inference-only forward pass.
pub fn predict_logits(extractor: &ExtractorParams, head: &HeadParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    forward(extractor, head, x).map(|(logits, _)| logits)
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ((row, mut grad), &y) in logits.outer_iter().zip(dlogits.outer_iter_mut()).zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        Zip::from(&mut grad).and(&row).for_each(|g, &v| *g = (v - lse).exp() / n);
        grad[y] -= 1.0 / n;
    }
    (loss / n, dlogits)
}

fn relu_backward(upstream: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(upstream).and(pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Backward through `y = gain * xhat + shift`; writes gain/shift gradients
/// and returns the gradient with respect to the LayerNorm input.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gain: ArrayView1<'_, f64>,
    dgain: &mut [f64],
    dshift: &mut [f64],
) -> Array2<f64> {
    let width = dy.ncols() as f64;
    for (g, v) in dgain.iter_mut().zip((dy * &cache.xhat).sum_axis(Axis(0))) {
        *g = v;
    }
    for (s, v) in dshift.iter_mut().zip(dy.sum_axis(Axis(0))) {
        *s = v;
    }
    let dxhat = dy * &gain;
    let mut dz = Array2::zeros(dy.raw_dim());
    for (r, ((dxh, xh), mut out)) in dxhat
        .outer_iter()
        .zip(cache.xhat.outer_iter())
        .zip(dz.outer_iter_mut())
        .enumerate()
    {
        let mean_d = dxh.sum() / width;
        let mean_dx = dxh.dot(&xh) / width;
        let s = cache.rstd[r];
        Zip::from(&mut out)
            .and(&dxh)
            .and(&xh)
            .for_each(|o, &d, &h| *o = s * (d - mean_d - h * mean_dx));
    }
    dz
}

fn write(dst: &mut [f64], src: &Array2<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

fn write1(dst: &mut [f64], src: &Array1<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

/// Backpropagates `dlogits` through the network for the selected groups.
pub fn backward(
    extractor: &ExtractorParams,
    head: &HeadParams,
    cache: &ForwardCache<'_>,
    dlogits: &Array2<f64>,
    which: ParamGroup,
) -> Gradients {
    let mut grads = Gradients::default();
    if which.head() {
        let mut g = vec![0.0; head.len()];
        let split = head.dims.embed * head.dims.classes;
        write(&mut g[..split], &cache.embedding.t().dot(dlogits));
        write1(&mut g[split..], &dlogits.sum_axis(Axis(0)));
        grads.head = Some(g);
    }
    if !which.extractor() {
        return grads;
    }

    let l = extractor.layout();
    let mut g = vec![0.0; extractor.len()];

    let mut dz3 = dlogits.dot(&head.weight().t());
    relu_backward(&mut dz3, &cache.z3);
    write(&mut g[l.w3..l.b3], &cache.a2.t().dot(&dz3));
    write1(&mut g[l.b3..l.total], &dz3.sum_axis(Axis(0)));

    let mut dy2 = dz3.dot(&extractor.w3().t());
    relu_backward(&mut dy2, &cache.y2);
    let dz2 = {
        let (gains, shifts) = g[l.g2..l.w3].split_at_mut(l.s2 - l.g2);
        layer_norm_backward(&dy2, &cache.ln2, extractor.ln2_gain(), gains, shifts)
    };
    write(&mut g[l.w2..l.b2], &cache.a1.t().dot(&dz2));
    write1(&mut g[l.b2..l.g2], &dz2.sum_axis(Axis(0)));

    let mut dy1 = dz2.dot(&extractor.w2().t());
    relu_backward(&mut dy1, &cache.y1);
    let dz1 = {
        let (gains, shifts) = g[l.g1..l.w2].split_at_mut(l.s1 - l.g1);
        layer_norm_backward(&dy1, &cache.ln1, extractor.ln1_gain(), gains, shifts)
    };
    write(&mut g[l.w1..l.b1], &cache.x.t().dot(&dz1));
    write1(&mut g[l.b1..l.g1], &dz1.sum_axis(Axis(0)));

    grads.extractor = Some(g);
    grads
}

/// Mean cross-entropy over the batch and exact gradients for `which`.
pub fn loss_and_grads(
    extractor: &ExtractorParams,
    head: &HeadParams,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    which: ParamGroup,
) -> Result<(f64, Gradients)> {
    if labels.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= head.dims.classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {} classes",
            head.dims.classes
        )));
    }
    let (logits, cache) = forward(extractor, head, x)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels);
    let grads = backward(extractor, head, &cache, &dlogits, which);
    Ok((loss, grads))
}

/// Row-wise argmax; ties resolve to the lowest class index.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{init_model, ModelDims};
    use ndarray::Array2;

    #[test]
    fn zero_model_outputs_head_bias() {
        let d = ModelDims::standard(6, 4);
        let ext = ExtractorParams::zeros(d);
        let mut head = HeadParams::zeros(d);
        let split = d.embed * d.classes;
        head.as_mut_slice()[split..].copy_from_slice(&[0.5, -1.0, 2.0, 0.0]);
        let x = Array2::zeros((3, 6));
        let logits = predict_logits(&ext, &head, x.view()).unwrap();
        for row in logits.outer_iter() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn batch_of_one_and_ln_statistics() {
        let d = ModelDims::standard(5, 3);
        let (ext, head) = init_model(d, 3).unwrap();
        let x = Array2::from_shape_fn((1, 5), |(_, j)| j as f64 / 5.0);
        let (logits, cache) = forward(&ext, &head, x.view()).unwrap();
        assert_eq!(logits.dim(), (1, 3));
        let x = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 5 + j) % 11) as f64 / 11.0);
        let (_, cache7) = forward(&ext, &head, x.view()).unwrap();
        for c in [&cache, &cache7] {
            for xhat in c.normalized() {
                for row in xhat.outer_iter() {
                    let n = row.len() as f64;
                    let mean = row.sum() / n;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    assert!(mean.abs() < 1e-12);
                    // LN epsilon pulls the variance slightly below one.
                    assert!((var - 1.0).abs() < 1e-3, "var {var}");
                }
            }
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let d = ModelDims::standard(5, 3);
        let (ext, head) = init_model(d, 3).unwrap();
        let x = Array2::zeros((2, 4));
        assert!(matches!(forward(&ext, &head, x.view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Array2::zeros((4, 10));
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 9, 5]);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn head_only_leaves_extractor_gradient_absent() {
        let d = ModelDims::standard(5, 3);
        let (ext, head) = init_model(d, 3).unwrap();
        let x = Array2::from_elem((2, 5), 0.3);
        let (_, g) = loss_and_grads(&ext, &head, x.view(), &[0, 2], ParamGroup::Head).unwrap();
        assert!(g.extractor.is_none());
        assert_eq!(g.head.unwrap().len(), head.len());
        let (_, g) = loss_and_grads(&ext, &head, x.view(), &[0, 2], ParamGroup::Extractor).unwrap();
        assert!(g.head.is_none());
        assert_eq!(g.extractor.unwrap().len(), ext.len());
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let logits = ndarray::array![[1.0, 3.0, 3.0], [0.0, 0.0, 0.0]];
        assert_eq!(argmax_rows(&logits), vec![1, 0]);
    }
}
