//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Every operation
//! appends a node holding its output value; [`Graph::backward`] walks the
//! tape in reverse and accumulates gradients into each node's inputs.

use super::tensor::{gemm, Tensor};
use crate::losses;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    MaskMul { x: Var, mask: Vec<f32> },
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f32>,
        k: usize,
    },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Upsample { x: Var, factor: usize },
    ConcatChannels(Vec<Var>),
    SliceChannels { x: Var, start: usize },
    SliceBatch { x: Var, start: usize },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        batch_stats: bool,
    },
    Linear { x: Var, w: Var, b: Var },
    ReconLoss { pred: Var, grad: Vec<f32> },
    SoftmaxXent { logits: Var, grad: Vec<f32> },
}

#[derive(Default)]
pub struct Graph {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f32>>>,
}

fn add_into(dst: &mut Option<Vec<f32>>, src: &[f32]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

fn add_into_owned(dst: &mut Option<Vec<f32>>, src: Vec<f32>) {
    match dst {
        Some(d) => d.iter_mut().zip(&src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src),
    }
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads[v.0].as_deref()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape.clone(), t.data.iter().map(|&v| sigmoid(v)).collect());
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape.clone(), t.data.iter().map(|v| v.tanh()).collect());
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape.clone(), t.data.iter().map(|v| v.max(0.0)).collect());
        self.push(out, Op::Relu(x))
    }

    /// Element-wise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f32>) -> Var {
        let t = self.value(x);
        assert_eq!(t.len(), mask.len());
        let data = t.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(t.shape.clone(), data);
        self.push(out, Op::MaskMul { x, mask })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let out = self.value(x).clone().reshaped(shape);
        self.push(out, Op::Reshape(x))
    }

    /// Stride-1 convolution with zero "same" padding; `w` is `[cout, cin, k, k]`
    /// with odd `k`, `b` is `[cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (cout, wcin, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv input channels");
        assert!(k == k2 && k % 2 == 1, "conv kernel must be square and odd");
        let hw = h * wd;
        let kk = cin * k * k;
        let cols = im2col(&self.value(x).data, n, cin, h, wd, k);
        let mut tmp = vec![0.0f32; cout * n * hw];
        gemm(
            cout,
            kk,
            n * hw,
            &self.value(w).data,
            (kk as isize, 1),
            &cols,
            ((n * hw) as isize, 1),
            0.0,
            &mut tmp,
            ((n * hw) as isize, 1),
        );
        let bias = &self.value(b).data;
        let mut out = vec![0.0f32; n * cout * hw];
        for co in 0..cout {
            for s in 0..n {
                let src = &tmp[co * n * hw + s * hw..co * n * hw + (s + 1) * hw];
                let dst = &mut out[(s * cout + co) * hw..(s * cout + co + 1) * hw];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = v + bias[co];
                }
            }
        }
        self.push(
            Tensor::new(vec![n, cout, h, wd], out),
            Op::Conv2d { x, w, b, cols, k },
        )
    }

    /// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if t.data[idx] > t.data[best] {
                            best = idx;
                        }
                    }
                    out.push(t.data[best]);
                    argmax.push(best as u32);
                }
            }
        }
        self.push(
            Tensor::new(vec![n, c, oh, ow], out),
            Op::MaxPool2 { x, argmax },
        )
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![0.0f32; n * c * oh * ow];
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    out[plane * oh * ow + oy * ow + ox] =
                        t.data[plane * h * w + (oy / factor) * w + ox / factor];
                }
            }
        }
        self.push(
            Tensor::new(vec![n, c, oh, ow], out),
            Op::Upsample { x, factor },
        )
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Var {
        let (n, _, h, w) = self.value(xs[0]).dims4();
        let channels: Vec<usize> = xs
            .iter()
            .map(|&v| {
                let (vn, vc, vh, vw) = self.value(v).dims4();
                assert_eq!((vn, vh, vw), (n, h, w), "concat shape mismatch");
                vc
            })
            .collect();
        let total: usize = channels.iter().sum();
        let hw = h * w;
        let mut out = Vec::with_capacity(n * total * hw);
        for s in 0..n {
            for (&v, &c) in xs.iter().zip(&channels) {
                out.extend_from_slice(&self.value(v).data[s * c * hw..(s + 1) * c * hw]);
            }
        }
        self.push(
            Tensor::new(vec![n, total, h, w], out),
            Op::ConcatChannels(xs.to_vec()),
        )
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        assert!(start + len <= c);
        let hw = h * w;
        let mut out = Vec::with_capacity(n * len * hw);
        for s in 0..n {
            out.extend_from_slice(&t.data[(s * c + start) * hw..(s * c + start + len) * hw]);
        }
        self.push(
            Tensor::new(vec![n, len, h, w], out),
            Op::SliceChannels { x, start },
        )
    }

    /// Rows `start..start + len` along the leading (batch) axis.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let per: usize = t.shape[1..].iter().product();
        assert!(start + len <= t.shape[0]);
        let mut shape = t.shape.clone();
        shape[0] = len;
        let out = Tensor::new(shape, t.data[start * per..(start + len) * per].to_vec());
        self.push(out, Op::SliceBatch { x, start })
    }

    /// Per-channel batch normalization. With `running = None` the batch
    /// statistics are used and returned so the caller can update its running
    /// averages; otherwise the supplied `(mean, var)` are applied.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f32], &[f32])>,
        eps: f32,
    ) -> (Var, Vec<f32>, Vec<f32>) {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let hw = h * w;
        let m = (n * hw) as f32;
        let (mean, var) = match running {
            Some((rm, rv)) => (rm.to_vec(), rv.to_vec()),
            None => {
                let mut mean = vec![0.0f32; c];
                let mut var = vec![0.0f32; c];
                for ch in 0..c {
                    let mut s = 0.0f64;
                    for smp in 0..n {
                        s += t.data[(smp * c + ch) * hw..(smp * c + ch + 1) * hw]
                            .iter()
                            .map(|&v| f64::from(v))
                            .sum::<f64>();
                    }
                    let mu = s / f64::from(m);
                    let mut sq = 0.0f64;
                    for smp in 0..n {
                        sq += t.data[(smp * c + ch) * hw..(smp * c + ch + 1) * hw]
                            .iter()
                            .map(|&v| (f64::from(v) - mu).powi(2))
                            .sum::<f64>();
                    }
                    mean[ch] = mu as f32;
                    var[ch] = (sq / f64::from(m)) as f32;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = &self.value(gamma).data;
        let bt = &self.value(beta).data;
        let mut xhat = vec![0.0f32; t.len()];
        let mut out = vec![0.0f32; t.len()];
        for smp in 0..n {
            for ch in 0..c {
                let off = (smp * c + ch) * hw;
                for i in off..off + hw {
                    xhat[i] = (t.data[i] - mean[ch]) * inv_std[ch];
                    out[i] = g[ch] * xhat[i] + bt[ch];
                }
            }
        }
        let shape = t.shape.clone();
        let v = self.push(
            Tensor::new(shape, out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: running.is_none(),
            },
        );
        (v, mean, var)
    }

    /// `x [n, d] * w [d, o] + b [o]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, d) = self.value(x).dims2();
        let (wd, o) = self.value(w).dims2();
        assert_eq!(d, wd, "linear input width");
        let mut out = vec![0.0f32; n * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(&self.value(b).data);
        }
        gemm(
            n,
            d,
            o,
            &self.value(x).data,
            (d as isize, 1),
            &self.value(w).data,
            (o as isize, 1),
            1.0,
            &mut out,
            (o as isize, 1),
        );
        self.push(Tensor::new(vec![n, o], out), Op::Linear { x, w, b })
    }

    /// Mean over the batch of the per-frame reconstructor objective.
    /// `pred` holds probabilities `[n, 1, h, w]`; `target` is the binary
    /// ground truth with the same layout.
    pub fn recon_loss(
        &mut self,
        pred: Var,
        target: &[f32],
        lambda_rec: f64,
        lambda_dice: f64,
    ) -> Var {
        let t = self.value(pred);
        assert_eq!(t.len(), target.len());
        let n = t.shape[0];
        let per = t.len() / n;
        let mut total = 0.0f64;
        let mut grad = vec![0.0f32; t.len()];
        for s in 0..n {
            let p: Vec<f64> = t.data[s * per..(s + 1) * per].iter().map(|&v| f64::from(v)).collect();
            let g: Vec<f64> = target[s * per..(s + 1) * per].iter().map(|&v| f64::from(v)).collect();
            let (l, dg) = losses::total_loss_with_grad(&p, &g, lambda_rec, lambda_dice)
                .expect("recon loss dimensions");
            total += l;
            for (dst, v) in grad[s * per..(s + 1) * per].iter_mut().zip(dg) {
                *dst = (v / n as f64) as f32;
            }
        }
        self.push(
            Tensor::new(vec![1], vec![(total / n as f64) as f32]),
            Op::ReconLoss { pred, grad },
        )
    }

    /// Mean two-class cross-entropy over exponentiated logits `[n, 2]`.
    /// Label 1 selects column 0 (the occluded node).
    pub fn softmax_xent(&mut self, logits: Var, labels: &[u8]) -> Var {
        let (n, k) = self.value(logits).dims2();
        assert_eq!(k, 2);
        assert_eq!(labels.len(), n);
        let mut total = 0.0f64;
        let mut grad = vec![0.0f32; n * 2];
        for (s, &y) in labels.iter().enumerate() {
            let z = &self.value(logits).data[s * 2..s * 2 + 2];
            let (p_occ, p_clean) = two_class_probabilities(f64::from(z[0]), f64::from(z[1]));
            total += losses::detection_loss(p_occ, p_clean, y);
            let y = f64::from(y.min(1));
            grad[s * 2] = ((p_occ - y) / n as f64) as f32;
            grad[s * 2 + 1] = ((p_clean - (1.0 - y)) / n as f64) as f32;
        }
        self.push(
            Tensor::new(vec![1], vec![(total / n as f64) as f32]),
            Op::SoftmaxXent { logits, grad },
        )
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.values[root.0].len(), 1, "backward root must be a scalar");
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            self.backward_node(i, &gout);
            self.grads[i] = Some(gout);
        }
    }

    fn backward_node(&mut self, i: usize, gout: &[f32]) {
        let values = &self.values;
        let grads = &mut self.grads;
        match &self.ops[i] {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_into(&mut grads[a.0], gout);
                add_into(&mut grads[b.0], gout);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f32> = gout.iter().zip(&values[b.0].data).map(|(g, v)| g * v).collect();
                let gb: Vec<f32> = gout.iter().zip(&values[a.0].data).map(|(g, v)| g * v).collect();
                add_into_owned(&mut grads[a.0], ga);
                add_into_owned(&mut grads[b.0], gb);
            }
            Op::Sigmoid(x) => {
                let y = &values[i].data;
                let g = gout.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                add_into_owned(&mut grads[x.0], g);
            }
            Op::Tanh(x) => {
                let y = &values[i].data;
                let g = gout.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                add_into_owned(&mut grads[x.0], g);
            }
            Op::Relu(x) => {
                let xv = &values[x.0].data;
                let g = gout
                    .iter()
                    .zip(xv)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into_owned(&mut grads[x.0], g);
            }
            Op::MaskMul { x, mask } => {
                let g = gout.iter().zip(mask).map(|(g, m)| g * m).collect();
                add_into_owned(&mut grads[x.0], g);
            }
            Op::Reshape(x) => add_into(&mut grads[x.0], gout),
            Op::Conv2d { x, w, b, cols, k } => {
                let (n, cin, h, wd) = values[x.0].dims4();
                let (cout, ..) = values[w.0].dims4();
                let hw = h * wd;
                let kk = cin * k * k;
                let nhw = n * hw;
                // gout is [n, cout, hw]; rearrange to [cout, n*hw].
                let mut dtmp = vec![0.0f32; cout * nhw];
                for s in 0..n {
                    for co in 0..cout {
                        dtmp[co * nhw + s * hw..co * nhw + (s + 1) * hw]
                            .copy_from_slice(&gout[(s * cout + co) * hw..(s * cout + co + 1) * hw]);
                    }
                }
                let mut dw = vec![0.0f32; cout * kk];
                gemm(
                    cout,
                    nhw,
                    kk,
                    &dtmp,
                    (nhw as isize, 1),
                    cols,
                    (1, nhw as isize),
                    0.0,
                    &mut dw,
                    (kk as isize, 1),
                );
                let db: Vec<f32> = dtmp.chunks(nhw).map(|c| c.iter().sum()).collect();
                let mut dcols = vec![0.0f32; kk * nhw];
                gemm(
                    kk,
                    cout,
                    nhw,
                    &values[w.0].data,
                    (1, kk as isize),
                    &dtmp,
                    (nhw as isize, 1),
                    0.0,
                    &mut dcols,
                    (nhw as isize, 1),
                );
                let dx = col2im(&dcols, n, cin, h, wd, *k);
                add_into_owned(&mut grads[w.0], dw);
                add_into_owned(&mut grads[b.0], db);
                add_into_owned(&mut grads[x.0], dx);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut g = vec![0.0f32; values[x.0].len()];
                for (go, &idx) in gout.iter().zip(argmax) {
                    g[idx as usize] += go;
                }
                add_into_owned(&mut grads[x.0], g);
            }
            Op::Upsample { x, factor } => {
                let (n, c, h, w) = values[x.0].dims4();
                let (oh, ow) = (h * factor, w * factor);
                let mut g = vec![0.0f32; n * c * h * w];
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            g[plane * h * w + (oy / factor) * w + ox / factor] +=
                                gout[plane * oh * ow + oy * ow + ox];
                        }
                    }
                }
                add_into_owned(&mut grads[x.0], g);
            }
            Op::ConcatChannels(xs) => {
                let (n, total, h, w) = values[i].dims4();
                let hw = h * w;
                let mut offset = 0;
                for v in xs {
                    let c = values[v.0].shape[1];
                    let mut g = Vec::with_capacity(n * c * hw);
                    for s in 0..n {
                        let start = (s * total + offset) * hw;
                        g.extend_from_slice(&gout[start..start + c * hw]);
                    }
                    add_into_owned(&mut grads[v.0], g);
                    offset += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let (n, c, h, w) = values[x.0].dims4();
                let len = values[i].shape[1];
                let hw = h * w;
                let mut g = vec![0.0f32; n * c * hw];
                for s in 0..n {
                    g[(s * c + start) * hw..(s * c + start + len) * hw]
                        .copy_from_slice(&gout[s * len * hw..(s + 1) * len * hw]);
                }
                add_into_owned(&mut grads[x.0], g);
            }
            Op::SliceBatch { x, start } => {
                let total = values[x.0].len();
                let per = total / values[x.0].shape[0];
                let slot = grads[x.0].get_or_insert_with(|| vec![0.0; total]);
                for (d, g) in slot[start * per..start * per + gout.len()].iter_mut().zip(gout) {
                    *d += g;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (n, c, h, w) = values[x.0].dims4();
                let hw = h * w;
                let m = (n * hw) as f32;
                let g = &values[gamma.0].data;
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * hw;
                        for j in off..off + hw {
                            dgamma[ch] += gout[j] * xhat[j];
                            dbeta[ch] += gout[j];
                        }
                    }
                }
                let mut dx = vec![0.0f32; n * c * hw];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * hw;
                        for j in off..off + hw {
                            let dxhat = gout[j] * g[ch];
                            dx[j] = if *batch_stats {
                                inv_std[ch] / m
                                    * (m * dxhat - g[ch] * dbeta[ch] - g[ch] * xhat[j] * dgamma[ch])
                            } else {
                                dxhat * inv_std[ch]
                            };
                        }
                    }
                }
                add_into_owned(&mut grads[gamma.0], dgamma);
                add_into_owned(&mut grads[beta.0], dbeta);
                add_into_owned(&mut grads[x.0], dx);
            }
            Op::Linear { x, w, b } => {
                let (n, d) = values[x.0].dims2();
                let (_, o) = values[w.0].dims2();
                let mut dx = vec![0.0f32; n * d];
                gemm(
                    n,
                    o,
                    d,
                    gout,
                    (o as isize, 1),
                    &values[w.0].data,
                    (1, o as isize),
                    0.0,
                    &mut dx,
                    (d as isize, 1),
                );
                let mut dw = vec![0.0f32; d * o];
                gemm(
                    d,
                    n,
                    o,
                    &values[x.0].data,
                    (1, d as isize),
                    gout,
                    (o as isize, 1),
                    0.0,
                    &mut dw,
                    (o as isize, 1),
                );
                let mut db = vec![0.0f32; o];
                for row in gout.chunks(o) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                add_into_owned(&mut grads[x.0], dx);
                add_into_owned(&mut grads[w.0], dw);
                add_into_owned(&mut grads[b.0], db);
            }
            Op::ReconLoss { pred, grad } | Op::SoftmaxXent { logits: pred, grad } => {
                let scale = gout[0];
                let g = grad.iter().map(|v| v * scale).collect();
                add_into_owned(&mut grads[pred.0], g);
            }
        }
    }
}

/// Two-class probabilities from raw logits; the logits are exponentiated to
/// obtain positive scores which are then normalized by their sum.
pub fn two_class_probabilities(z_occ: f64, z_clean: f64) -> (f64, f64) {
    let m = z_occ.max(z_clean);
    let (g1, g2) = ((z_occ - m).exp(), (z_clean - m).exp());
    (g1 / (g1 + g2), g2 / (g1 + g2))
}

fn im2col(x: &[f32], n: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let nhw = n * hw;
    let mut cols = vec![0.0f32; c * k * k * nhw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * nhw..(row + 1) * nhw];
                for s in 0..n {
                    let src = &x[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let drow = &mut dst[s * hw + y * w..s * hw + (y + 1) * w];
                        for (xo, d) in drow.iter_mut().enumerate() {
                            let sx = xo as isize + kx as isize - pad;
                            if sx >= 0 && sx < w as isize {
                                *d = srow[sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], n: usize, c: usize, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let nhw = n * hw;
    let mut x = vec![0.0f32; n * c * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * nhw..(row + 1) * nhw];
                for s in 0..n {
                    let dst = &mut x[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for xo in 0..w {
                            let sx = xo as isize + kx as isize - pad;
                            if sx >= 0 && sx < w as isize {
                                dst[sy as usize * w + sx as usize] += src[s * hw + y * w + xo];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}
