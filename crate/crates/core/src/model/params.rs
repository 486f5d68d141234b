use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, Modality};
use crate::rng::{name_hash, rng_for};
use crate::scalar::Scalar;

/// A named block of the flat parameter vector (row-major `rows x cols`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segments covering the whole parameter vector of one architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    len: usize,
}

impl ParamLayout {
    fn push(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        let offset = self.len;
        self.segments.push(Segment {
            name: name.to_string(),
            offset,
            rows,
            cols,
        });
        self.len += rows * cols;
        offset
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `segment[index]` label of a flat parameter position.
    pub fn path_of(&self, flat: usize) -> String {
        match self.segments.iter().find(|s| s.range().contains(&flat)) {
            Some(s) => format!("{}[{}]", s.name, flat - s.offset),
            None => format!("<out of range {flat}>"),
        }
    }
}

/// Affine layer `y = W x + b` addressed into the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], y: &mut [T]) {
        for (o, yo) in y.iter_mut().enumerate().take(self.n_out) {
            let row = &p[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
            *yo = p[self.b + o] + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// Accumulates `dW`, `db` into `g`; writes `dx` when requested.
    pub fn backward<T: Scalar>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T], dx: Option<&mut [T]>) {
        for (o, &d) in dy.iter().enumerate().take(self.n_out) {
            if d == T::zero() {
                continue;
            }
            g[self.b + o] += d;
            let row = &mut g[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
            for (gi, &xi) in row.iter_mut().zip(x) {
                *gi += d * xi;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = T::zero());
            for (o, &d) in dy.iter().enumerate().take(self.n_out) {
                if d == T::zero() {
                    continue;
                }
                let row = &p[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
                for (dxi, &w) in dx.iter_mut().zip(row) {
                    *dxi += d * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttentionLayer {
    /// `V`: hidden x dim.
    pub v: usize,
    /// `w`: hidden.
    pub w: usize,
    pub hidden: usize,
    pub dim: usize,
}

/// Index view of the parameter vector for one architecture.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    pub attention: Option<AttentionLayer>,
    pub encoder: Option<[Dense; 2]>,
    pub head: [Dense; 2],
    pub layout: ParamLayout,
}

impl Network {
    pub fn new(arch: &Architecture) -> Self {
        let mut layout = ParamLayout {
            segments: Vec::new(),
            len: 0,
        };
        let dense = |layout: &mut ParamLayout, prefix: &str, n_in: usize, n_out: usize| {
            let w = layout.push(&format!("{prefix}.weight"), n_out, n_in);
            let b = layout.push(&format!("{prefix}.bias"), n_out, 1);
            Dense { w, b, n_in, n_out }
        };
        let attention = arch.modality.uses_image().then(|| {
            let (hidden, dim) = (arch.attention_hidden, arch.image_dim);
            let v = layout.push("attention.V", hidden, dim);
            let w = layout.push("attention.w", hidden, 1);
            AttentionLayer { v, w, hidden, dim }
        });
        let encoder = arch.modality.uses_clinical().then(|| {
            [
                dense(&mut layout, "clinical.fc1", Architecture::CLINICAL_INPUT, Architecture::CLINICAL_HIDDEN),
                dense(&mut layout, "clinical.fc2", Architecture::CLINICAL_HIDDEN, Architecture::CLINICAL_EMBEDDING),
            ]
        });
        let (prefix, hidden) = match arch.modality {
            Modality::Multimodal => ("fusion", arch.fusion_hidden),
            _ => ("head", arch.head_hidden),
        };
        let head = [
            dense(&mut layout, &format!("{prefix}.fc1"), arch.head_input(), hidden),
            dense(&mut layout, &format!("{prefix}.fc2"), hidden, 1),
        ];
        Network {
            attention,
            encoder,
            head,
            layout,
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per segment, each segment with
    /// its own stream so widths of one block do not shift another's values.
    pub fn initialize<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut params = vec![T::zero(); self.layout.len()];
        for seg in self.layout.segments() {
            let fan_in = match seg.name.as_str() {
                "attention.w" => seg.rows,
                n if n.ends_with(".bias") => self.bias_fan_in(n),
                _ => seg.cols,
            };
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let mut rng = rng_for(seed, &[name_hash(&seg.name)]);
            for v in &mut params[seg.range()] {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        params
    }

    fn bias_fan_in(&self, bias: &str) -> usize {
        let weight = bias.replace(".bias", ".weight");
        self.layout.segments().iter().find(|s| s.name == weight).map_or(1, |s| s.cols)
    }
}
