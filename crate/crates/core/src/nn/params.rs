//! Flat parameter storage for the extractor and head.
//!
//! Each parameter group lives in one contiguous `Vec<f64>` so that gossip
//! blending, averaging and optimizer updates are plain vector operations.
//! Typed views into the vector are handed out per layer.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const HIDDEN: usize = 256;
pub const EMBED: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
}

impl ModelDims {
    /// The reference architecture: hidden width 256, embedding width 128.
    pub fn standard(input: usize, classes: usize) -> Self {
        Self {
            input,
            hidden: HIDDEN,
            embed: EMBED,
            classes,
        }
    }

    pub fn extractor_len(&self) -> usize {
        ExtractorLayout::new(*self).total
    }

    pub fn head_len(&self) -> usize {
        self.embed * self.classes + self.classes
    }

    /// Full model size `p = p_e + q`.
    pub fn model_len(&self) -> usize {
        self.extractor_len() + self.head_len()
    }
}

/// Offsets of each tensor inside the flattened extractor, in storage order:
/// `W1 b1 g1 s1 W2 b2 g2 s2 W3 b3` where `g`/`s` are LayerNorm gain/shift.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExtractorLayout {
    pub w1: usize,
    pub b1: usize,
    pub g1: usize,
    pub s1: usize,
    pub w2: usize,
    pub b2: usize,
    pub g2: usize,
    pub s2: usize,
    pub w3: usize,
    pub b3: usize,
    pub total: usize,
}

impl ExtractorLayout {
    pub fn new(d: ModelDims) -> Self {
        let (i, h, e) = (d.input, d.hidden, d.embed);
        let w1 = 0;
        let b1 = w1 + i * h;
        let g1 = b1 + h;
        let s1 = g1 + h;
        let w2 = s1 + h;
        let b2 = w2 + h * h;
        let g2 = b2 + h;
        let s2 = g2 + h;
        let w3 = s2 + h;
        let b3 = w3 + h * e;
        Self {
            w1,
            b1,
            g1,
            s1,
            w2,
            b2,
            g2,
            s2,
            w3,
            b3,
            total: b3 + e,
        }
    }

    /// `(name, shape, offset)` for each tensor, used by checkpoint sidecars.
    pub fn entries(&self, d: ModelDims) -> Vec<(&'static str, Vec<usize>, usize)> {
        let (i, h, e) = (d.input, d.hidden, d.embed);
        vec![
            ("fc1.weight", vec![i, h], self.w1),
            ("fc1.bias", vec![h], self.b1),
            ("ln1.gain", vec![h], self.g1),
            ("ln1.shift", vec![h], self.s1),
            ("fc2.weight", vec![h, h], self.w2),
            ("fc2.bias", vec![h], self.b2),
            ("ln2.gain", vec![h], self.g2),
            ("ln2.shift", vec![h], self.s2),
            ("fc3.weight", vec![h, e], self.w3),
            ("fc3.bias", vec![e], self.b3),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    pub(crate) dims: ModelDims,
    pub(crate) data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub(crate) dims: ModelDims,
    pub(crate) data: Vec<f64>,
}

fn view2(data: &[f64], at: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &data[at..at + rows * cols]).expect("layout sized")
}

fn view1(data: &[f64], at: usize, len: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&data[at..at + len])
}

impl ExtractorParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let layout = ExtractorLayout::new(dims);
        let mut data = vec![0.0; layout.total];
        data[layout.g1..layout.s1].fill(1.0);
        data[layout.g2..layout.s2].fill(1.0);
        Self { dims, data }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copy of the flattened parameter vector (length `p_e`).
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Replaces all parameters from a flat vector laid out like [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::Shape {
                expected: self.data.len(),
                got: values.len(),
            });
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn layout(&self) -> ExtractorLayout {
        ExtractorLayout::new(self.dims)
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        let l = self.layout();
        view2(&self.data, l.w1, self.dims.input, self.dims.hidden)
    }
    pub fn b1(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().b1, self.dims.hidden)
    }
    pub fn ln1_gain(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().g1, self.dims.hidden)
    }
    pub fn ln1_shift(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().s1, self.dims.hidden)
    }
    pub fn w2(&self) -> ArrayView2<'_, f64> {
        let l = self.layout();
        view2(&self.data, l.w2, self.dims.hidden, self.dims.hidden)
    }
    pub fn b2(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().b2, self.dims.hidden)
    }
    pub fn ln2_gain(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().g2, self.dims.hidden)
    }
    pub fn ln2_shift(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().s2, self.dims.hidden)
    }
    pub fn w3(&self) -> ArrayView2<'_, f64> {
        let l = self.layout();
        view2(&self.data, l.w3, self.dims.hidden, self.dims.embed)
    }
    pub fn b3(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.layout().b3, self.dims.embed)
    }
}

impl HeadParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.head_len()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::Shape {
                expected: self.data.len(),
                got: values.len(),
            });
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    pub fn weight(&self) -> ArrayView2<'_, f64> {
        view2(&self.data, 0, self.dims.embed, self.dims.classes)
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        view1(&self.data, self.dims.embed * self.dims.classes, self.dims.classes)
    }

    /// Content hash of the head parameters (bit-exact).
    pub fn fingerprint(&self) -> u64 {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
        seed::stable_hash(&bytes)
    }
}

fn fill_uniform(out: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let bound = (1.0 / fan_in as f64).sqrt();
    for v in out {
        *v = rng.gen_range(-bound..bound);
    }
}

/// Seeded initialization: weights and biases uniform in `±sqrt(1/fan_in)`,
/// LayerNorm gains 1 and shifts 0.
pub fn init_model(dims: ModelDims, seed: u64) -> Result<(ExtractorParams, HeadParams)> {
    if dims.input == 0 || dims.hidden == 0 || dims.embed == 0 || dims.classes == 0 {
        return Err(Error::Domain(format!("degenerate model dimensions {dims:?}")));
    }
    let mut rng = seed::rng(seed);
    let mut ext = ExtractorParams::zeros(dims);
    let l = ext.layout();
    let (i, h, e) = (dims.input, dims.hidden, dims.embed);
    fill_uniform(&mut ext.data[l.w1..l.g1], i, &mut rng);
    fill_uniform(&mut ext.data[l.w2..l.g2], h, &mut rng);
    fill_uniform(&mut ext.data[l.w3..l.total], h, &mut rng);
    let mut head = HeadParams::zeros(dims);
    fill_uniform(&mut head.data, e, &mut rng);
    Ok((ext, head))
}
