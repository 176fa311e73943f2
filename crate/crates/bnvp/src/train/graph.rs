//! The differentiable training graph: hand-rolled forward/backward for the
//! sequential conv-pool-FC family, generic over the float type so the same
//! code path serves f32 training and f64 gradient checking.
//!
//! Quantized layers keep full-precision proxies. The quantizer runs on the
//! forward pass only; backward passes the binarized-weight gradient straight
//! through to the proxy. Binary activations use the hat rule: upstream
//! gradient where |pre-activation| <= 1, zero elsewhere.

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{conv_out_dim, same_pad_begin, FoldedBatchNorm, Padding};
use crate::quant::{kbit_dequantize, kbit_quantize};

/// Converts an f64 constant into the graph float type.
#[inline]
pub(crate) fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("constant representable in float type")
}

/// Row-major batched tensor, shape `[n, ...]`.
#[derive(Debug, Clone)]
pub(crate) struct Batch<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Float> Batch<T> {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Batch {
            dims,
            data: vec![T::zero(); n],
        }
    }
}

/// Quantized forward weights for a proxy tensor at the given precision.
///
/// The k-bit route goes through f64 so it agrees bit for bit with the
/// exported code tensors regardless of the graph float type.
fn quantize_weights<T: Float>(proxy: &[T], bits: u8) -> Vec<T> {
    match bits {
        1 => proxy
            .iter()
            .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
            .collect(),
        2 | 4 | 8 => {
            let w32: Vec<f32> = proxy.iter().map(|&v| v.to_f32().unwrap()).collect();
            let codes = kbit_quantize(&w32, bits).expect("finite proxies");
            kbit_dequantize(&codes)
                .iter()
                .map(|&v| c(f64::from(v)))
                .collect()
        }
        _ => proxy.to_vec(),
    }
}

pub(crate) struct ConvOp<T> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub cin: usize,
    pub cout: usize,
    pub bits: u8,
    /// Skip input-gradient computation for the layer touching the image.
    pub is_first: bool,
    /// Full-precision proxies, `[co][ky][kx][ci]`.
    pub proxy: Vec<T>,
    pub grad: Vec<T>,
    pub vel: Vec<T>,
    cache_x: Option<Batch<T>>,
    cache_wq: Vec<T>,
}

impl<T: Float> ConvOp<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kernel: usize,
        stride: usize,
        padding: Padding,
        cin: usize,
        cout: usize,
        bits: u8,
        is_first: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let count = kernel * kernel * cin * cout;
        let fan_in = (kernel * kernel * cin) as f64;
        let fan_out = (kernel * kernel * cout) as f64;
        let a = (6.0 / (fan_in + fan_out)).sqrt().min(1.0);
        let proxy = (0..count).map(|_| c(rng.gen_range(-a..a))).collect();
        ConvOp {
            kernel,
            stride,
            padding,
            cin,
            cout,
            bits,
            is_first,
            proxy,
            grad: vec![T::zero(); count],
            vel: vec![T::zero(); count],
            cache_x: None,
            cache_wq: Vec::new(),
        }
    }

    fn pads(&self, h: usize, w: usize, oh: usize, ow: usize) -> (isize, isize) {
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => (
                same_pad_begin(h, oh, self.kernel, self.stride) as isize,
                same_pad_begin(w, ow, self.kernel, self.stride) as isize,
            ),
        }
    }

    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let [n, h, w, cin]: [usize; 4] = x.dims.as_slice().try_into().expect("conv input is NHWC");
        assert_eq!(cin, self.cin, "conv input channels");
        let oh = conv_out_dim(h, self.kernel, self.stride, self.padding).expect("resolved shape");
        let ow = conv_out_dim(w, self.kernel, self.stride, self.padding).expect("resolved shape");
        let (pad_y, pad_x) = self.pads(h, w, oh, ow);
        let wq = quantize_weights(&self.proxy, self.bits);
        let k = self.kernel;
        let mut out = Batch::zeros(vec![n, oh, ow, self.cout]);
        for nn in 0..n {
            let xoff = nn * h * w * cin;
            for co in 0..self.cout {
                let wbase = co * k * k * cin;
                for oy in 0..oh {
                    let iy0 = (oy * self.stride) as isize - pad_y;
                    for ox in 0..ow {
                        let ix0 = (ox * self.stride) as isize - pad_x;
                        let mut acc = T::zero();
                        for ky in 0..k {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = xoff + ((iy as usize) * w + ix as usize) * cin;
                                let wi = wbase + (ky * k + kx) * cin;
                                for ci in 0..cin {
                                    acc = acc + x.data[xi + ci] * wq[wi + ci];
                                }
                            }
                        }
                        out.data[((nn * oh + oy) * ow + ox) * self.cout + co] = acc;
                    }
                }
            }
        }
        if training {
            self.cache_x = Some(x.clone());
            self.cache_wq = wq;
        }
        out
    }

    pub fn backward(&mut self, g: &Batch<T>) -> Batch<T> {
        let x = self.cache_x.take().expect("backward follows forward");
        let [n, h, w, cin]: [usize; 4] = x.dims.as_slice().try_into().unwrap();
        let [gn, oh, ow, cout]: [usize; 4] = g.dims.as_slice().try_into().unwrap();
        assert_eq!(n, gn);
        assert_eq!(cout, self.cout);
        let (pad_y, pad_x) = self.pads(h, w, oh, ow);
        let k = self.kernel;
        let mut dx = Batch::zeros(x.dims.clone());
        for nn in 0..n {
            let xoff = nn * h * w * cin;
            for co in 0..cout {
                let wbase = co * k * k * cin;
                for oy in 0..oh {
                    let iy0 = (oy * self.stride) as isize - pad_y;
                    for ox in 0..ow {
                        let ix0 = (ox * self.stride) as isize - pad_x;
                        let gv = g.data[((nn * oh + oy) * ow + ox) * cout + co];
                        if gv == T::zero() {
                            continue;
                        }
                        for ky in 0..k {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = xoff + ((iy as usize) * w + ix as usize) * cin;
                                let wi = wbase + (ky * k + kx) * cin;
                                for ci in 0..cin {
                                    self.grad[wi + ci] = self.grad[wi + ci] + x.data[xi + ci] * gv;
                                    if !self.is_first {
                                        dx.data[xi + ci] =
                                            dx.data[xi + ci] + self.cache_wq[wi + ci] * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub(crate) struct DenseOp<T> {
    pub in_len: usize,
    pub out_len: usize,
    pub bits: u8,
    /// `[out][in]` row-major proxies.
    pub proxy: Vec<T>,
    pub grad: Vec<T>,
    pub vel: Vec<T>,
    cache_x: Option<Batch<T>>,
    cache_wq: Vec<T>,
}

impl<T: Float> DenseOp<T> {
    pub fn new(in_len: usize, out_len: usize, bits: u8, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (in_len + out_len) as f64).sqrt().min(1.0);
        let proxy = (0..in_len * out_len)
            .map(|_| c(rng.gen_range(-a..a)))
            .collect();
        DenseOp {
            in_len,
            out_len,
            bits,
            proxy,
            grad: vec![T::zero(); in_len * out_len],
            vel: vec![T::zero(); in_len * out_len],
            cache_x: None,
            cache_wq: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let [n, d]: [usize; 2] = x.dims.as_slice().try_into().expect("dense input is flat");
        assert_eq!(d, self.in_len, "dense input length");
        let wq = quantize_weights(&self.proxy, self.bits);
        let mut out = Batch::zeros(vec![n, self.out_len]);
        for nn in 0..n {
            for o in 0..self.out_len {
                let wbase = o * self.in_len;
                let mut acc = T::zero();
                for i in 0..self.in_len {
                    acc = acc + x.data[nn * d + i] * wq[wbase + i];
                }
                out.data[nn * self.out_len + o] = acc;
            }
        }
        if training {
            self.cache_x = Some(x.clone());
            self.cache_wq = wq;
        }
        out
    }

    pub fn backward(&mut self, g: &Batch<T>) -> Batch<T> {
        let x = self.cache_x.take().expect("backward follows forward");
        let [n, d]: [usize; 2] = x.dims.as_slice().try_into().unwrap();
        let mut dx = Batch::zeros(x.dims.clone());
        for nn in 0..n {
            for o in 0..self.out_len {
                let gv = g.data[nn * self.out_len + o];
                if gv == T::zero() {
                    continue;
                }
                let wbase = o * self.in_len;
                for i in 0..d {
                    self.grad[wbase + i] = self.grad[wbase + i] + x.data[nn * d + i] * gv;
                    dx.data[nn * d + i] = dx.data[nn * d + i] + self.cache_wq[wbase + i] * gv;
                }
            }
        }
        dx
    }
}

pub(crate) struct BnOp<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub g_gamma: Vec<T>,
    pub g_beta: Vec<T>,
    pub vel_gamma: Vec<T>,
    pub vel_beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    cache_xhat: Vec<T>,
    cache_inv_std: Vec<T>,
    cache_dims: Vec<usize>,
}

impl<T: Float> BnOp<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        BnOp {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            g_gamma: vec![T::zero(); channels],
            g_beta: vec![T::zero(); channels],
            vel_gamma: vec![T::zero(); channels],
            vel_beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: c(momentum),
            eps: c(eps),
            cache_xhat: Vec::new(),
            cache_inv_std: Vec::new(),
            cache_dims: Vec::new(),
        }
    }

    /// Training-mode forward: batch statistics, running-average update.
    pub fn forward_train(&mut self, x: &Batch<T>) -> Batch<T> {
        let ch = self.channels;
        let total = x.data.len();
        assert_eq!(total % ch, 0, "batchnorm channel alignment");
        let m = total / ch;
        let mf = c::<T>(m as f64);
        let mut mean = vec![T::zero(); ch];
        for (i, &v) in x.data.iter().enumerate() {
            let cc = i % ch;
            mean[cc] = mean[cc] + v;
        }
        for v in mean.iter_mut() {
            *v = *v / mf;
        }
        let mut var = vec![T::zero(); ch];
        for (i, &v) in x.data.iter().enumerate() {
            let cc = i % ch;
            let d = v - mean[cc];
            var[cc] = var[cc] + d * d;
        }
        for v in var.iter_mut() {
            *v = *v / mf;
        }
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + self.eps).sqrt())
            .collect();
        let mut out = Batch::zeros(x.dims.clone());
        let mut xhat = vec![T::zero(); total];
        for (i, &v) in x.data.iter().enumerate() {
            let cc = i % ch;
            let h = (v - mean[cc]) * inv_std[cc];
            xhat[i] = h;
            out.data[i] = self.gamma[cc] * h + self.beta[cc];
        }
        for cc in 0..ch {
            self.running_mean[cc] =
                self.momentum * self.running_mean[cc] + (T::one() - self.momentum) * mean[cc];
            self.running_var[cc] =
                self.momentum * self.running_var[cc] + (T::one() - self.momentum) * var[cc];
        }
        self.cache_xhat = xhat;
        self.cache_inv_std = inv_std;
        self.cache_dims = x.dims.clone();
        out
    }

    /// Inference-mode forward with running statistics.
    pub fn forward_infer(&self, x: &Batch<T>) -> Batch<T> {
        let ch = self.channels;
        let mut out = Batch::zeros(x.dims.clone());
        for (i, &v) in x.data.iter().enumerate() {
            let cc = i % ch;
            let inv = T::one() / (self.running_var[cc] + self.eps).sqrt();
            out.data[i] = self.gamma[cc] * (v - self.running_mean[cc]) * inv + self.beta[cc];
        }
        out
    }

    pub fn backward(&mut self, g: &Batch<T>) -> Batch<T> {
        let ch = self.channels;
        let total = g.data.len();
        let m = total / ch;
        let mf = c::<T>(m as f64);
        let mut sum_g = vec![T::zero(); ch];
        let mut sum_gx = vec![T::zero(); ch];
        for (i, &gv) in g.data.iter().enumerate() {
            let cc = i % ch;
            sum_g[cc] = sum_g[cc] + gv;
            sum_gx[cc] = sum_gx[cc] + gv * self.cache_xhat[i];
        }
        for cc in 0..ch {
            self.g_beta[cc] = self.g_beta[cc] + sum_g[cc];
            self.g_gamma[cc] = self.g_gamma[cc] + sum_gx[cc];
        }
        let mut dx = Batch::zeros(self.cache_dims.clone());
        for (i, &gv) in g.data.iter().enumerate() {
            let cc = i % ch;
            let term = gv - sum_g[cc] / mf - self.cache_xhat[i] * sum_gx[cc] / mf;
            dx.data[i] = self.gamma[cc] * self.cache_inv_std[cc] * term;
        }
        dx
    }

    /// Per-channel raw statistics as f32 arrays (gamma, beta, mean, var).
    pub fn stats_f32(&self) -> (Vec<f32>, Vec<f32>, Vec<f32>, Vec<f32>) {
        let f = |v: &Vec<T>| v.iter().map(|x| x.to_f32().unwrap()).collect();
        (
            f(&self.gamma),
            f(&self.beta),
            f(&self.running_mean),
            f(&self.running_var),
        )
    }
}

pub(crate) struct SignActOp<T> {
    cache_x: Vec<T>,
}

impl<T: Float> SignActOp<T> {
    pub fn new() -> Self {
        SignActOp {
            cache_x: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let mut out = Batch::zeros(x.dims.clone());
        for (o, &v) in out.data.iter_mut().zip(&x.data) {
            *o = if v >= T::zero() { T::one() } else { -T::one() };
        }
        if training {
            self.cache_x = x.data.clone();
        }
        out
    }

    pub fn backward(&self, g: &Batch<T>) -> Batch<T> {
        let mut dx = Batch::zeros(g.dims.clone());
        for i in 0..g.data.len() {
            dx.data[i] = if self.cache_x[i].abs() <= T::one() {
                g.data[i]
            } else {
                T::zero()
            };
        }
        dx
    }
}

pub(crate) struct ReluOp<T> {
    cache_mask: Vec<bool>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Float> ReluOp<T> {
    pub fn new() -> Self {
        ReluOp {
            cache_mask: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let mut out = Batch::zeros(x.dims.clone());
        if training {
            self.cache_mask = vec![false; x.data.len()];
        }
        for i in 0..x.data.len() {
            if x.data[i] > T::zero() {
                out.data[i] = x.data[i];
                if training {
                    self.cache_mask[i] = true;
                }
            }
        }
        out
    }

    pub fn backward(&self, g: &Batch<T>) -> Batch<T> {
        let mut dx = Batch::zeros(g.dims.clone());
        for i in 0..g.data.len() {
            if self.cache_mask[i] {
                dx.data[i] = g.data[i];
            }
        }
        dx
    }
}

pub(crate) struct PoolOp<T> {
    pub kernel: usize,
    pub stride: usize,
    cache_argmax: Vec<usize>,
    cache_in_dims: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Float> PoolOp<T> {
    pub fn new(kernel: usize, stride: usize) -> Self {
        PoolOp {
            kernel,
            stride,
            cache_argmax: Vec::new(),
            cache_in_dims: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let [n, h, w, ch]: [usize; 4] = x.dims.as_slice().try_into().expect("pool input is NHWC");
        let oh = (h - self.kernel) / self.stride + 1;
        let ow = (w - self.kernel) / self.stride + 1;
        let mut out = Batch::zeros(vec![n, oh, ow, ch]);
        let mut argmax = vec![0usize; out.data.len()];
        for nn in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for cc in 0..ch {
                        let mut best = T::neg_infinity();
                        let mut best_i = 0usize;
                        for ky in 0..self.kernel {
                            for kx in 0..self.kernel {
                                let iy = oy * self.stride + ky;
                                let ix = ox * self.stride + kx;
                                let idx = ((nn * h + iy) * w + ix) * ch + cc;
                                if x.data[idx] > best {
                                    best = x.data[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        let oidx = ((nn * oh + oy) * ow + ox) * ch + cc;
                        out.data[oidx] = best;
                        argmax[oidx] = best_i;
                    }
                }
            }
        }
        if training {
            self.cache_argmax = argmax;
            self.cache_in_dims = x.dims.clone();
        }
        out
    }

    pub fn backward(&self, g: &Batch<T>) -> Batch<T> {
        let mut dx = Batch::zeros(self.cache_in_dims.clone());
        for (oidx, &src) in self.cache_argmax.iter().enumerate() {
            dx.data[src] = dx.data[src] + g.data[oidx];
        }
        dx
    }
}

pub(crate) struct FlattenOp {
    cache_dims: Vec<usize>,
}

impl FlattenOp {
    pub fn new() -> Self {
        FlattenOp {
            cache_dims: Vec::new(),
        }
    }

    pub fn forward<T: Float>(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        let n = x.dims[0];
        let rest: usize = x.dims[1..].iter().product();
        if training {
            self.cache_dims = x.dims.clone();
        }
        Batch {
            dims: vec![n, rest],
            data: x.data.clone(),
        }
    }

    pub fn backward<T: Float>(&self, g: &Batch<T>) -> Batch<T> {
        Batch {
            dims: self.cache_dims.clone(),
            data: g.data.clone(),
        }
    }
}

pub(crate) enum Op<T> {
    Conv(ConvOp<T>),
    Dense(DenseOp<T>),
    Bn(BnOp<T>),
    Sign(SignActOp<T>),
    Relu(ReluOp<T>),
    Pool(PoolOp<T>),
    Flatten(FlattenOp),
}

impl<T: Float> Op<T> {
    pub fn forward(&mut self, x: &Batch<T>, training: bool) -> Batch<T> {
        match self {
            Op::Conv(op) => op.forward(x, training),
            Op::Dense(op) => op.forward(x, training),
            Op::Bn(op) => {
                if training {
                    op.forward_train(x)
                } else {
                    op.forward_infer(x)
                }
            }
            Op::Sign(op) => op.forward(x, training),
            Op::Relu(op) => op.forward(x, training),
            Op::Pool(op) => op.forward(x, training),
            Op::Flatten(op) => op.forward(x, training),
        }
    }

    pub fn backward(&mut self, g: &Batch<T>) -> Batch<T> {
        match self {
            Op::Conv(op) => op.backward(g),
            Op::Dense(op) => op.backward(g),
            Op::Bn(op) => op.backward(g),
            Op::Sign(op) => op.backward(g),
            Op::Relu(op) => op.backward(g),
            Op::Pool(op) => op.backward(g),
            Op::Flatten(op) => op.backward(g),
        }
    }
}

/// Sequential op list with the index where the backbone ends and the
/// training-only FC stage begins.
pub(crate) struct OpGraph<T> {
    pub ops: Vec<Op<T>>,
    pub backbone_end: usize,
}

impl<T: Float> OpGraph<T> {
    /// Training-mode forward through all ops.
    pub fn forward_train(&mut self, x: &Batch<T>) -> Batch<T> {
        let mut cur = x.clone();
        for i in 0..self.ops.len() {
            cur = self.ops[i].forward(&cur, true);
        }
        cur
    }

    /// Backward through all ops; parameter gradients accumulate in place.
    pub fn backward(&mut self, g: &Batch<T>) {
        let mut cur = g.clone();
        for i in (0..self.ops.len()).rev() {
            cur = self.ops[i].backward(&cur);
        }
    }

    /// Inference-mode forward. BatchNorm + sign pairs collapse into the same
    /// folded threshold compare the frozen extractor uses, so a frozen export
    /// reproduces this path exactly on binary layers.
    pub fn forward_infer(&mut self, x: &Batch<T>, until: usize) -> Batch<T> {
        let mut cur = x.clone();
        let mut i = 0;
        while i < until {
            let folded = if let (Op::Bn(bn), Some(Op::Sign(_))) =
                (&self.ops[i], self.ops.get(i + 1))
            {
                let (gamma, beta, mean, var) = bn.stats_f32();
                let affine =
                    crate::graph::fold_affine(&gamma, &beta, &mean, &var, bn.eps.to_f32().unwrap())
                        .expect("trainable batchnorm folds");
                Some((
                    FoldedBatchNorm::from_affine(&affine).expect("nonzero scale"),
                    bn.channels,
                ))
            } else {
                None
            };
            if let Some((fold, channels)) = folded {
                let mut out = Batch::zeros(cur.dims.clone());
                for (j, &v) in cur.data.iter().enumerate() {
                    out.data[j] = if fold.binarize(j % channels, v.to_f32().unwrap()) {
                        T::one()
                    } else {
                        -T::one()
                    };
                }
                cur = out;
                i += 2;
            } else {
                cur = self.ops[i].forward(&cur, false);
                i += 1;
            }
        }
        cur
    }

    /// Momentum SGD step over every parameter tensor, then proxy clipping
    /// for quantized layers.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64) {
        let lr = c::<T>(lr);
        let mu = c::<T>(momentum);
        for op in &mut self.ops {
            match op {
                Op::Conv(conv) => {
                    step_clip(
                        &mut conv.proxy,
                        &mut conv.grad,
                        &mut conv.vel,
                        lr,
                        mu,
                        conv.bits < 32,
                    );
                }
                Op::Dense(dense) => {
                    step_clip(
                        &mut dense.proxy,
                        &mut dense.grad,
                        &mut dense.vel,
                        lr,
                        mu,
                        dense.bits < 32,
                    );
                }
                Op::Bn(bn) => {
                    step_clip(
                        &mut bn.gamma,
                        &mut bn.g_gamma,
                        &mut bn.vel_gamma,
                        lr,
                        mu,
                        false,
                    );
                    step_clip(
                        &mut bn.beta,
                        &mut bn.g_beta,
                        &mut bn.vel_beta,
                        lr,
                        mu,
                        false,
                    );
                }
                _ => {}
            }
        }
    }
}

fn step_clip<T: Float>(w: &mut [T], g: &mut [T], vel: &mut [T], lr: T, mu: T, clip: bool) {
    for i in 0..w.len() {
        vel[i] = mu * vel[i] + g[i];
        w[i] = w[i] - lr * vel[i];
        if clip {
            w[i] = w[i].min(T::one()).max(-T::one());
        }
        g[i] = T::zero();
    }
}

/// Softmax cross-entropy over logits `[n, k]`; returns (mean loss, gradient,
/// correct-prediction count).
pub(crate) fn softmax_cross_entropy<T: Float>(
    logits: &Batch<T>,
    labels: &[usize],
) -> (f64, Batch<T>, usize) {
    let [n, k]: [usize; 2] = logits
        .dims
        .as_slice()
        .try_into()
        .expect("logits are [n, k]");
    assert_eq!(labels.len(), n);
    let mut grad = Batch::zeros(logits.dims.clone());
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    let nf = c::<T>(n as f64);
    for nn in 0..n {
        let row = &logits.data[nn * k..(nn + 1) * k];
        let mut max = row[0];
        let mut arg = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > max {
                max = v;
                arg = i;
            }
        }
        if arg == labels[nn] {
            correct += 1;
        }
        let mut denom = T::zero();
        for &v in row {
            denom = denom + (v - max).exp();
        }
        let log_denom = denom.ln();
        loss -= (row[labels[nn]] - max - log_denom).to_f64().unwrap();
        for (i, &v) in row.iter().enumerate() {
            let p = (v - max).exp() / denom;
            let delta = if i == labels[nn] { T::one() } else { T::zero() };
            grad.data[nn * k + i] = (p - delta) / nf;
        }
    }
    (loss / n as f64, grad, correct)
}
