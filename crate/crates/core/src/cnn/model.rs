use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::loss::{cross_entropy_row, logit_gradient, softmax_into};
use super::spec::{LayerSpec, ModelSpec, Shape3};
use super::tensor::Tensor;

/// A network: its architecture and one weight and one bias tensor per
/// parametrized layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    shapes: Vec<Shape3>,
    params: Vec<Tensor>,
    /// `param_index[l]` is the weight tensor index of layer `l`.
    param_index: Vec<Option<usize>>,
    seed: u64,
}

impl Model {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (l, layer) in spec.layers.iter().enumerate() {
            let input = if l == 0 { spec.input } else { shapes[l - 1] };
            if let Some((fan_in, fan_out, wshape, blen)) = layer.param_geometry(input) {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = wshape.iter().product();
                let w = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
                params.push(Tensor::new(wshape, w)?);
                params.push(Tensor::zeros(vec![blen]));
            }
        }
        Self::from_parts(spec, params, seed)
    }

    /// Assembles a model from explicit parameters, checking their shapes.
    pub fn from_parts(spec: ModelSpec, params: Vec<Tensor>, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut param_index = Vec::with_capacity(spec.layers.len());
        let mut next = 0;
        for (l, layer) in spec.layers.iter().enumerate() {
            let input = if l == 0 { spec.input } else { shapes[l - 1] };
            match layer.param_geometry(input) {
                Some((_, _, wshape, blen)) => {
                    let (w, b) = match (params.get(next), params.get(next + 1)) {
                        (Some(w), Some(b)) => (w, b),
                        _ => {
                            return Err(Error::ShapeMismatch(format!(
                                "missing parameters for layer {l}"
                            )))
                        }
                    };
                    if w.shape() != wshape.as_slice() || b.shape() != [blen] {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {l} expects weights {wshape:?} and bias [{blen}], got {:?} and {:?}",
                            w.shape(),
                            b.shape()
                        )));
                    }
                    param_index.push(Some(next));
                    next += 2;
                }
                None => param_index.push(None),
            }
        }
        if next != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors supplied, architecture uses {next}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArg("non-finite model parameters".into()));
        }
        Ok(Self {
            spec,
            shapes,
            params,
            param_index,
            seed,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes()
    }

    pub fn input_shape(&self) -> Shape3 {
        self.spec.input
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let per = self.spec.input.len();
        if !batch.len().is_multiple_of(per) || batch.outer() * per != batch.len() {
            return Err(Error::ShapeMismatch(format!(
                "batch {:?} does not hold samples of shape {:?}",
                batch.shape(),
                self.spec.input
            )));
        }
        Ok(batch.outer())
    }

    fn check_labels(&self, labels: &Tensor, rows: usize) -> Result<()> {
        if labels.shape() != [rows, self.num_classes()] {
            return Err(Error::ShapeMismatch(format!(
                "labels {:?}, expected [{rows}, {}]",
                labels.shape(),
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Softmax probabilities, one row per sample.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let rows = self.check_batch(batch)?;
        let k = self.num_classes();
        let mut ws = Workspace::new(self);
        let mut out = vec![0.0; rows * k];
        for i in 0..rows {
            ws.forward(self, batch.item(i));
            softmax_into(ws.logits(), &mut out[i * k..(i + 1) * k]);
        }
        Tensor::new(vec![rows, k], out)
    }

    /// Probabilities of a single sample.
    pub fn probabilities(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.spec.input.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} values, model expects {:?}",
                sample.len(),
                self.spec.input
            )));
        }
        let mut ws = Workspace::new(self);
        ws.forward(self, sample);
        Ok(super::loss::softmax(ws.logits()))
    }

    /// Batch-mean loss and its gradient w.r.t. every parameter tensor.
    pub fn gradients(&self, batch: &Tensor, labels: &Tensor, epsilon: f64) -> Result<(f64, Vec<Tensor>)> {
        let rows = self.check_batch(batch)?;
        self.check_labels(labels, rows)?;
        let mut ws = Workspace::new(self);
        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        let mut total = 0.0;
        for i in 0..rows {
            total += ws.accumulate(self, batch.item(i), labels.item(i), epsilon, &mut grads);
        }
        let scale = 1.0 / rows as f64;
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok((total * scale, grads))
    }
}

/// Reusable per-sample activation and gradient buffers.
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    probs: Vec<f64>,
    dlogits: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(model: &Model) -> Self {
        let acts: Vec<Vec<f64>> = model.shapes.iter().map(|s| vec![0.0; s.len()]).collect();
        let deltas = acts.clone();
        let argmax = model
            .spec
            .layers
            .iter()
            .zip(&model.shapes)
            .map(|(l, s)| match l {
                LayerSpec::MaxPool { .. } => vec![0u32; s.len()],
                _ => Vec::new(),
            })
            .collect();
        let k = model.num_classes();
        Self {
            acts,
            deltas,
            argmax,
            probs: vec![0.0; k],
            dlogits: vec![0.0; k],
        }
    }

    fn logits(&self) -> &[f64] {
        self.acts.last().expect("model has layers")
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn forward(&mut self, model: &Model, input: &[f64]) {
        for l in 0..model.spec.layers.len() {
            let (done, rest) = self.acts.split_at_mut(l);
            let x: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let in_shape = if l == 0 { model.spec.input } else { model.shapes[l - 1] };
            let out = &mut rest[0];
            let p = model.param_index[l].map(|i| (&model.params[i], &model.params[i + 1]));
            match model.spec.layers[l] {
                LayerSpec::Conv { stride, .. } => {
                    let (w, b) = p.expect("conv has params");
                    conv_forward(x, in_shape, w, b.data(), stride, model.shapes[l], out);
                }
                LayerSpec::MaxPool { pool_h, pool_w } => {
                    pool_forward(x, in_shape, pool_h, pool_w, model.shapes[l], out, &mut self.argmax[l]);
                }
                LayerSpec::Relu => {
                    for (o, &v) in out.iter_mut().zip(x) {
                        *o = v.max(0.0);
                    }
                }
                LayerSpec::Flatten => out.copy_from_slice(x),
                LayerSpec::Dense { .. } | LayerSpec::SoftmaxOutput { .. } => {
                    let (w, b) = p.expect("dense has params");
                    dense_forward(x, w, b.data(), out);
                }
            }
        }
        let logits = self.acts.last().expect("model has layers");
        softmax_into(logits, &mut self.probs);
    }

    /// Forward and backward for one sample; adds its parameter gradients to
    /// `grads` and returns its loss.
    pub(crate) fn accumulate(
        &mut self,
        model: &Model,
        input: &[f64],
        target: &[f64],
        epsilon: f64,
        grads: &mut [Tensor],
    ) -> f64 {
        self.forward(model, input);
        let loss = cross_entropy_row(&self.probs, target, epsilon);
        logit_gradient(&self.probs, target, epsilon, &mut self.dlogits);
        let last = model.spec.layers.len() - 1;
        self.deltas[last].copy_from_slice(&self.dlogits);

        for l in (0..=last).rev() {
            let in_shape = if l == 0 { model.spec.input } else { model.shapes[l - 1] };
            let (dprev, dcur) = self.deltas.split_at_mut(l);
            let dout = &dcur[0];
            let x: &[f64] = if l == 0 { input } else { &self.acts[l - 1] };
            // The input image needs no gradient.
            let mut dx: Option<&mut Vec<f64>> = if l == 0 { None } else { Some(&mut dprev[l - 1]) };
            match model.spec.layers[l] {
                LayerSpec::Conv { stride, .. } => {
                    let wi = model.param_index[l].expect("conv has params");
                    let (gw, gb) = two_mut(grads, wi);
                    conv_backward(
                        x,
                        in_shape,
                        &model.params[wi],
                        stride,
                        model.shapes[l],
                        dout,
                        gw.data_mut(),
                        gb.data_mut(),
                        dx.as_deref_mut().map(|v| v.as_mut_slice()),
                    );
                }
                LayerSpec::MaxPool { .. } => {
                    if let Some(dx) = dx {
                        dx.iter_mut().for_each(|v| *v = 0.0);
                        for (&src, &g) in self.argmax[l].iter().zip(dout) {
                            dx[src as usize] += g;
                        }
                    }
                }
                LayerSpec::Relu => {
                    if let Some(dx) = dx {
                        for ((d, &g), &v) in dx.iter_mut().zip(dout).zip(x) {
                            *d = if v > 0.0 { g } else { 0.0 };
                        }
                    }
                }
                LayerSpec::Flatten => {
                    if let Some(dx) = dx {
                        dx.copy_from_slice(dout);
                    }
                }
                LayerSpec::Dense { .. } | LayerSpec::SoftmaxOutput { .. } => {
                    let wi = model.param_index[l].expect("dense has params");
                    let (gw, gb) = two_mut(grads, wi);
                    dense_backward(
                        x,
                        &model.params[wi],
                        dout,
                        gw.data_mut(),
                        gb.data_mut(),
                        dx.as_mut().map(|v| v.as_mut_slice()),
                    );
                }
            }
        }
        loss
    }
}

fn two_mut(v: &mut [Tensor], i: usize) -> (&mut Tensor, &mut Tensor) {
    let (a, b) = v.split_at_mut(i + 1);
    (&mut a[i], &mut b[0])
}

fn conv_forward(
    x: &[f64],
    ins: Shape3,
    w: &Tensor,
    bias: &[f64],
    stride: usize,
    outs: Shape3,
    out: &mut [f64],
) {
    let (kh, kw) = (w.shape()[2], w.shape()[3]);
    let (oh, ow) = (outs.height, outs.width);
    let plane = ins.height * ins.width;
    let wd = w.data();
    for f in 0..outs.channels {
        let o = &mut out[f * oh * ow..(f + 1) * oh * ow];
        o.iter_mut().for_each(|v| *v = bias[f]);
        for c in 0..ins.channels {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..kh {
                for kj in 0..kw {
                    let wv = wd[((f * ins.channels + c) * kh + ki) * kw + kj];
                    for oy in 0..oh {
                        let row = (oy * stride + ki) * ins.width + kj;
                        let orow = &mut o[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            for (ov, &xv) in orow.iter_mut().zip(&xc[row..row + ow]) {
                                *ov += wv * xv;
                            }
                        } else {
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                *ov += wv * xc[row + ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    ins: Shape3,
    w: &Tensor,
    stride: usize,
    outs: Shape3,
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let (kh, kw) = (w.shape()[2], w.shape()[3]);
    let (oh, ow) = (outs.height, outs.width);
    let plane = ins.height * ins.width;
    let wd = w.data();
    if let Some(dx) = dx.as_deref_mut() {
        dx.iter_mut().for_each(|v| *v = 0.0);
    }
    for f in 0..outs.channels {
        let d = &dout[f * oh * ow..(f + 1) * oh * ow];
        gb[f] += d.iter().sum::<f64>();
        for c in 0..ins.channels {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..kh {
                for kj in 0..kw {
                    let widx = ((f * ins.channels + c) * kh + ki) * kw + kj;
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let row = (oy * stride + ki) * ins.width + kj;
                        let drow = &d[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            acc += drow.iter().zip(&xc[row..row + ow]).map(|(a, b)| a * b).sum::<f64>();
                        } else {
                            for (ox, &g) in drow.iter().enumerate() {
                                acc += g * xc[row + ox * stride];
                            }
                        }
                    }
                    gw[widx] += acc;
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = wd[widx];
                        let dxc = &mut dx[c * plane..(c + 1) * plane];
                        for oy in 0..oh {
                            let row = (oy * stride + ki) * ins.width + kj;
                            let drow = &d[oy * ow..(oy + 1) * ow];
                            if stride == 1 {
                                for (t, &g) in dxc[row..row + ow].iter_mut().zip(drow) {
                                    *t += wv * g;
                                }
                            } else {
                                for (ox, &g) in drow.iter().enumerate() {
                                    dxc[row + ox * stride] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn pool_forward(
    x: &[f64],
    ins: Shape3,
    ph: usize,
    pw: usize,
    outs: Shape3,
    out: &mut [f64],
    argmax: &mut [u32],
) {
    let plane = ins.height * ins.width;
    for c in 0..ins.channels {
        for oy in 0..outs.height {
            for ox in 0..outs.width {
                // Row-major scan with strict comparison keeps the first
                // maximum on ties.
                let mut best = c * plane + (oy * ph) * ins.width + ox * pw;
                for i in 0..ph {
                    for j in 0..pw {
                        let idx = c * plane + (oy * ph + i) * ins.width + ox * pw + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                let o = (c * outs.height + oy) * outs.width + ox;
                out[o] = x[best];
                argmax[o] = best as u32;
            }
        }
    }
}

fn dense_forward(x: &[f64], w: &Tensor, bias: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for ((o, row), &b) in out.iter_mut().zip(w.data().chunks_exact(n_in)).zip(bias) {
        *o = b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn dense_backward(
    x: &[f64],
    w: &Tensor,
    dout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let n_in = x.len();
    for (u, &g) in dout.iter().enumerate() {
        gb[u] += g;
        if g != 0.0 {
            for (t, &xv) in gw[u * n_in..(u + 1) * n_in].iter_mut().zip(x) {
                *t += g * xv;
            }
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (row, &g) in w.data().chunks_exact(n_in).zip(dout) {
            if g != 0.0 {
                for (t, &wv) in dx.iter_mut().zip(row) {
                    *t += g * wv;
                }
            }
        }
    }
}
