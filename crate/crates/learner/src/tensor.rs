//! Named parameter blocks and the handful of dense kernels the networks need.
//! All matrices are row-major `f64` slices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// An ordered list of parameter blocks. Gradients and optimizer moments use
/// the same layout as the parameters they belong to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub blocks: Vec<Block>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| Block::zeros(&b.name, &b.shape)).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn fill(&mut self, v: f64) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().flat_map(|b| &b.data).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Name of the first block holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.blocks
            .iter()
            .find(|b| b.data.iter().any(|x| !x.is_finite()))
            .map(|b| b.name.as_str())
    }

    /// Visits every scalar together with its block index.
    pub fn get_flat(&self, i: usize) -> f64 {
        let (b, j) = self.locate(i);
        self.blocks[b].data[j]
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let (b, j) = self.locate(i);
        self.blocks[b].data[j] = v;
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (b, block) in self.blocks.iter().enumerate() {
            if i < block.data.len() {
                return (b, i);
            }
            i -= block.data.len();
        }
        panic!("flat index out of range");
    }
}

/// `c[n x m] += a[n x k] * b[k x m]`
pub fn mm_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let ci = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let bp = &b[p * m..(p + 1) * m];
            for (cv, bv) in ci.iter_mut().zip(bp) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[k x m] += a^T * b` with `a[n x k]`, `b[n x m]`.
pub fn mtm_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let bi = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let cp = &mut c[p * m..(p + 1) * m];
            for (cv, bv) in cp.iter_mut().zip(bi) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[n x k] += a[n x m] * b^T` with `b[k x m]`.
pub fn mmt_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, m: usize, k: usize) {
    for i in 0..n {
        let ai = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let bp = &b[p * m..(p + 1) * m];
            c[i * k + p] += ai.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Log-softmax, exact for very negative logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}
