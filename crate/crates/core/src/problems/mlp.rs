use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{fd_hvp, HvpKind, Problem, ProblemError, ProblemMeta};
use crate::matcore::random::{gaussian_matrix, rng_from_seed};
use crate::matcore::Matrix;

/// Preactivations closer than this to zero mark a ReLU kink.
pub const KINK_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpLoss {
    /// Mean softmax cross-entropy against one-hot targets.
    #[default]
    SoftmaxCe,
    /// ‖out − Y‖_F² / (2N).
    Mse,
}

/// Bias-free ReLU network with fixed training data.
///
/// Layer l maps activations of width `shapes[l].1` to `shapes[l].0`; ReLU sits
/// between layers and not after the last one.
#[derive(Clone, Debug)]
pub struct Mlp {
    shapes: Vec<(usize, usize)>,
    x: Matrix,
    y: Matrix,
    loss: MlpLoss,
}

/// Loss, per-layer gradients and distance to the nearest ReLU kink.
#[derive(Clone, Debug)]
pub struct MlpEval {
    pub loss: f64,
    pub grads: Vec<Matrix>,
    pub min_abs_preactivation: f64,
}

impl MlpEval {
    pub fn near_kink(&self) -> bool {
        self.min_abs_preactivation < KINK_TOL
    }
}

impl Mlp {
    pub fn new(shapes: Vec<(usize, usize)>, x: Matrix, y: Matrix, loss: MlpLoss) -> Result<Self, ProblemError> {
        if shapes.is_empty() {
            return Err(ProblemError::InvalidArgument("no layers".into()));
        }
        if shapes[0].1 != x.rows() {
            return Err(ProblemError::Dimension(format!(
                "first layer takes {} inputs, data has {}",
                shapes[0].1,
                x.rows()
            )));
        }
        for (l, pair) in shapes.windows(2).enumerate() {
            if pair[1].1 != pair[0].0 {
                return Err(ProblemError::Dimension(format!(
                    "layer {} outputs {} but layer {} takes {}",
                    l,
                    pair[0].0,
                    l + 1,
                    pair[1].1
                )));
            }
        }
        let out = shapes.last().expect("nonempty").0;
        if y.rows() != out || y.cols() != x.cols() {
            return Err(ProblemError::Dimension(format!(
                "targets are {:?}, network produces {}x{}",
                y.shape(),
                out,
                x.cols()
            )));
        }
        Ok(Self { shapes, x, y, loss })
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn loss_kind(&self) -> MlpLoss {
        self.loss
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }

    /// He initialization: entries N(0, 2 / fan_in).
    pub fn init_weights(&self, seed: u64) -> Vec<Matrix> {
        let mut rng = rng_from_seed(seed);
        self.shapes
            .iter()
            .map(|&(r, c)| gaussian_matrix(&mut rng, r, c).scale((2.0 / c as f64).sqrt()))
            .collect()
    }

    fn check_weights(&self, ws: &[Matrix]) {
        assert_eq!(ws.len(), self.shapes.len(), "wrong number of layers");
        for (w, &s) in ws.iter().zip(&self.shapes) {
            assert_eq!(w.shape(), s, "layer shape mismatch");
        }
    }

    /// Network outputs and hidden preactivations.
    fn forward(&self, ws: &[Matrix]) -> (Vec<Matrix>, Vec<Matrix>) {
        self.check_weights(ws);
        let mut inputs = vec![self.x.clone()];
        let mut pre = Vec::with_capacity(ws.len());
        for (l, w) in ws.iter().enumerate() {
            let a = w.matmul(inputs.last().expect("nonempty"));
            if l + 1 < ws.len() {
                inputs.push(a.map(|v| v.max(0.0)));
            }
            pre.push(a);
        }
        (inputs, pre)
    }

    fn loss_and_output_grad(&self, out: &Matrix) -> (f64, Matrix) {
        let n = out.cols() as f64;
        match self.loss {
            MlpLoss::Mse => {
                let r = out.sub(&self.y);
                (0.5 * r.dot(&r) / n, r.scale(1.0 / n))
            }
            MlpLoss::SoftmaxCe => {
                let (c, b) = out.shape();
                let mut grad = Matrix::zeros(c, b);
                let mut total = 0.0;
                for j in 0..b {
                    let max = (0..c).map(|i| out[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..c).map(|i| (out[(i, j)] - max).exp()).sum();
                    let lse = max + z.ln();
                    for i in 0..c {
                        let p = (out[(i, j)] - lse).exp();
                        total -= self.y[(i, j)] * (out[(i, j)] - lse);
                        grad[(i, j)] = (p - self.y[(i, j)]) / n;
                    }
                }
                (total / n, grad)
            }
        }
    }

    pub fn loss(&self, ws: &[Matrix]) -> f64 {
        let (_, pre) = self.forward(ws);
        self.loss_and_output_grad(pre.last().expect("nonempty")).0
    }

    /// Loss and all layer gradients by backpropagation.
    pub fn eval(&self, ws: &[Matrix]) -> MlpEval {
        let (inputs, pre) = self.forward(ws);
        let layers = ws.len();
        let (loss, mut delta) = self.loss_and_output_grad(&pre[layers - 1]);
        let mut grads = vec![Matrix::zeros(1, 1); layers];
        for l in (0..layers).rev() {
            grads[l] = delta.matmul_t(&inputs[l]);
            if l > 0 {
                let back = ws[l].t_matmul(&delta);
                delta = back.zip_with(&pre[l - 1], |g, a| if a > 0.0 { g } else { 0.0 });
            }
        }
        let min_abs_preactivation = pre[..layers - 1]
            .iter()
            .flat_map(|a| a.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min);
        MlpEval {
            loss,
            grads,
            min_abs_preactivation,
        }
    }
}

/// View of an [`Mlp`] as a problem over one layer, other layers held fixed.
#[derive(Clone, Debug)]
pub struct MlpLayer {
    net: Arc<Mlp>,
    weights: Vec<Matrix>,
    layer: usize,
    meta: ProblemMeta,
}

/// Builds the network with He-initialized weights, viewed over the middle layer.
pub fn mlp_new(
    shapes: Vec<(usize, usize)>,
    x: Matrix,
    y: Matrix,
    loss: MlpLoss,
    seed: u64,
) -> Result<MlpLayer, ProblemError> {
    let net = Arc::new(Mlp::new(shapes, x, y, loss)?);
    let weights = net.init_weights(seed);
    let layer = weights.len() / 2;
    MlpLayer::new(net, weights, layer)
}

impl MlpLayer {
    pub fn new(net: Arc<Mlp>, weights: Vec<Matrix>, layer: usize) -> Result<Self, ProblemError> {
        if layer >= weights.len() {
            return Err(ProblemError::InvalidArgument(format!("layer {layer} out of range")));
        }
        if weights.len() != net.shapes().len() || weights.iter().zip(net.shapes()).any(|(w, &s)| w.shape() != s) {
            return Err(ProblemError::Dimension("weights do not match layer shapes".into()));
        }
        Ok(Self {
            net,
            weights,
            layer,
            meta: ProblemMeta::default(),
        })
    }

    pub fn net(&self) -> &Arc<Mlp> {
        &self.net
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    /// The designated layer's current value.
    pub fn current(&self) -> &Matrix {
        &self.weights[self.layer]
    }

    pub fn with_layer(mut self, layer: usize) -> Result<Self, ProblemError> {
        if layer >= self.weights.len() {
            return Err(ProblemError::InvalidArgument(format!("layer {layer} out of range")));
        }
        self.layer = layer;
        Ok(self)
    }

    fn substituted(&self, w: &Matrix) -> Vec<Matrix> {
        let mut ws = self.weights.clone();
        ws[self.layer] = w.clone();
        ws
    }
}

impl Problem for MlpLayer {
    fn shape(&self) -> (usize, usize) {
        self.net.shapes()[self.layer]
    }

    fn value(&self, w: &Matrix) -> f64 {
        self.net.loss(&self.substituted(w))
    }

    fn grad(&self, w: &Matrix) -> Matrix {
        self.net.eval(&self.substituted(w)).grads.swap_remove(self.layer)
    }

    fn value_and_grad(&self, w: &Matrix) -> (f64, Matrix) {
        let mut e = self.net.eval(&self.substituted(w));
        (e.loss, e.grads.swap_remove(self.layer))
    }

    fn hvp(&self, w: &Matrix, d: &Matrix) -> Matrix {
        fd_hvp(|p| self.grad(p), w, d)
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::FiniteDifference
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn near_kink(&self, w: &Matrix) -> bool {
        self.net.eval(&self.substituted(w)).near_kink()
    }
}
