use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::matrix::DenseMatrix;

/// Who produced a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Target,
    Surrogate,
    Independent,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Target => "target",
            Provenance::Surrogate => "surrogate",
            Provenance::Independent => "independent",
        }
    }
}

/// Optimizer settings shared by every training routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 1e-5,
            epochs: 200,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Two propagation layers followed by a linear classifier:
/// `d0 → h → h → c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
    pub wc: DenseMatrix,
    pub bc: Vec<f64>,
    pub seed: u64,
    pub provenance: Provenance,
    pub training: Option<TrainConfig>,
}

/// Names of the six parameter tensors in canonical order.
pub const TENSOR_NAMES: [&str; 6] = ["W1", "b1", "W2", "b2", "Wc", "bc"];
/// Which canonical tensors are weight matrices (as opposed to biases).
pub const IS_WEIGHT: [bool; 6] = [true, false, true, false, true, false];

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.wc.cols()
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.wc.as_slice(),
            &self.bc,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.wc.as_mut_slice(),
            &mut self.bc,
        ]
    }

    /// The three weight matrices in layer order.
    pub fn weight_matrices(&self) -> [&DenseMatrix; 3] {
        [&self.w1, &self.w2, &self.wc]
    }

    pub fn validate(&self) -> Result<()> {
        let (d0, h) = self.w1.shape();
        let ok = self.b1.len() == h
            && self.w2.shape() == (h, h)
            && self.b2.len() == h
            && self.wc.rows() == h
            && self.bc.len() == self.wc.cols();
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "parameter chain {d0}->{h}->{:?}->{:?} is inconsistent",
                self.w2.shape(),
                self.wc.shape()
            )));
        }
        if self.tensors().iter().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
    pub wc: DenseMatrix,
    pub bc: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            w1: DenseMatrix::zeros(p.w1.rows(), p.w1.cols()),
            b1: vec![0.0; p.b1.len()],
            w2: DenseMatrix::zeros(p.w2.rows(), p.w2.cols()),
            b2: vec![0.0; p.b2.len()],
            wc: DenseMatrix::zeros(p.wc.rows(), p.wc.cols()),
            bc: vec![0.0; p.bc.len()],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.wc.as_slice(),
            &self.bc,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.wc.as_mut_slice(),
            &mut self.bc,
        ]
    }
}

/// Glorot-uniform weights and zero biases.
pub fn init_params(d0: usize, h: usize, c: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |fan_in: usize, fan_out: usize| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-a..a))
    };
    let w1 = glorot(d0, h);
    let w2 = glorot(h, h);
    let wc = glorot(h, c);
    ModelParams {
        w1,
        b1: vec![0.0; h],
        w2,
        b2: vec![0.0; h],
        wc,
        bc: vec![0.0; c],
        seed,
        provenance: Provenance::Target,
        training: None,
    }
}

/// Inference outputs: embeddings `H` (second propagation layer, after ReLU)
/// and logits `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub embeddings: DenseMatrix,
    pub logits: DenseMatrix,
}

impl ForwardOutputs {
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.logits.rows())
            .map(|v| self.logits.row_argmax(v))
            .collect()
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub ax: DenseMatrix,
    pub pre1: DenseMatrix,
    pub ad: DenseMatrix,
    pub pre2: DenseMatrix,
    pub embeddings: DenseMatrix,
    pub logits: DenseMatrix,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn forward_cached(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    dropout_mask: Option<&DenseMatrix>,
) -> Result<ForwardCache> {
    if x.rows() != adj.dim() || x.cols() != p.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "features {}x{} vs operator {} and input width {}",
            x.rows(),
            x.cols(),
            adj.dim(),
            p.input_dim()
        )));
    }
    let ax = adj.spmm(x);
    let mut pre1 = ax.matmul(&p.w1)?;
    pre1.add_row_vector(&p.b1);
    let mut dropped = pre1.clone();
    dropped.map_inplace(relu);
    if let Some(mask) = dropout_mask {
        if mask.shape() != dropped.shape() {
            return Err(Error::ShapeMismatch("dropout mask shape".into()));
        }
        dropped.hadamard_inplace(mask);
    }
    let ad = adj.spmm(&dropped);
    let mut pre2 = ad.matmul(&p.w2)?;
    pre2.add_row_vector(&p.b2);
    let mut embeddings = pre2.clone();
    embeddings.map_inplace(relu);
    let mut logits = embeddings.matmul(&p.wc)?;
    logits.add_row_vector(&p.bc);
    Ok(ForwardCache {
        ax,
        pre1,
        ad,
        pre2,
        embeddings,
        logits,
    })
}

/// `H = ReLU(Â·Dropout(ReLU(Â·X·W1 + b1))·W2 + b2)`, `Z = H·Wc + bc`.
///
/// Pass `None` for inference; a training mask holds `0` or `1/(1-p)` per entry.
pub fn forward(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    dropout_mask: Option<&DenseMatrix>,
) -> Result<ForwardOutputs> {
    let c = forward_cached(p, adj, x, dropout_mask)?;
    Ok(ForwardOutputs {
        embeddings: c.embeddings,
        logits: c.logits,
    })
}

/// Inverted-dropout mask for `rows × cols` activations.
pub fn sample_dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> DenseMatrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    DenseMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < keep {
            scale
        } else {
            0.0
        }
    })
}
