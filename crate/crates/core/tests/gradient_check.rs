//! Central finite differences against the analytic backward pass.

use firma::nn::{init_model, loss_and_grads, CheckpointLayout, ModelDims, ParamGroup};
use ndarray::Array2;
use rand::Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let dims = ModelDims {
        input: 7,
        hidden: 9,
        embed: 6,
        classes: 4,
    };
    let (mut ext, mut head) = init_model(dims, 42).unwrap();
    let mut rng = firma::seed::rng(7);
    let x = Array2::from_shape_fn((5, dims.input), |_| rng.gen_range(-1.0..1.0));
    let labels = vec![0, 3, 1, 2, 3];

    let (_, grads) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Both).unwrap();
    let g_ext = grads.extractor.unwrap();
    let g_head = grads.head.unwrap();
    let mut analytic = g_ext.clone();
    analytic.extend_from_slice(&g_head);

    let pe = ext.len();
    let total = pe + head.len();
    let mut numeric = vec![0.0; total];
    for k in 0..total {
        let mut eval = |delta: f64| {
            if k < pe {
                ext.as_mut_slice()[k] += delta;
            } else {
                head.as_mut_slice()[k - pe] += delta;
            }
            let (loss, _) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Head).unwrap();
            if k < pe {
                ext.as_mut_slice()[k] -= delta;
            } else {
                head.as_mut_slice()[k - pe] -= delta;
            }
            loss
        };
        numeric[k] = (eval(H) - eval(-H)) / (2.0 * H);
    }

    let layout = CheckpointLayout::new(dims);
    for (i, t) in layout.tensors.iter().enumerate() {
        let end = layout.tensors.get(i + 1).map_or(total, |n| n.offset);
        let err = rel_err(&analytic[t.offset..end], &numeric[t.offset..end]);
        assert!(err < TOL, "{}: relative error {err:e}", t.name);
    }
}

#[test]
fn group_selection_matches_joint_gradients() {
    let dims = ModelDims {
        input: 4,
        hidden: 5,
        embed: 3,
        classes: 3,
    };
    let (ext, head) = init_model(dims, 1).unwrap();
    let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 / 12.0);
    let labels = vec![2, 0, 1];
    let (l_both, both) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Both).unwrap();
    let (l_h, h) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Head).unwrap();
    let (l_e, e) = loss_and_grads(&ext, &head, x.view(), &labels, ParamGroup::Extractor).unwrap();
    assert_eq!(l_both, l_h);
    assert_eq!(l_both, l_e);
    assert!(h.extractor.is_none() && e.head.is_none());
    assert_eq!(both.head, h.head);
    assert_eq!(both.extractor, e.extractor);
}
