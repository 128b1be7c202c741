//! Reverse-mode automatic differentiation over a flat tape of 64-bit tensors.
//!
//! Matrices are `[rows, cols]`, feature maps are `[channels, height, width]`
//! and vectors are single-row matrices. Every op records its inputs; the
//! reverse pass walks the tape backwards once.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not hold {} values",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn row(data: Vec<f64>) -> Self {
        Self::new(vec![1, data.len()], data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn dims2(&self) -> (usize, usize) {
        match self.shape[..] {
            [r, c] => (r, c),
            _ => panic!("expected a matrix, got shape {:?}", self.shape),
        }
    }

    fn dims3(&self) -> (usize, usize, usize) {
        match self.shape[..] {
            [c, h, w] => (c, h, w),
            _ => panic!("expected a feature map, got shape {:?}", self.shape),
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// Handle to a tape entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    ConcatRows(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRow(Var, usize),
    Reshape(Var),
    Conv2d(Var, Var, Var, ConvSpec),
    ConvTranspose2d(Var, Var, Var, ConvSpec),
    SqDist(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by tape entry; `None` where nothing flowed.
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn conv_out(n: usize, k: usize, s: ConvSpec) -> usize {
    (n + 2 * s.pad - k) / s.stride + 1
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (ta.dims2(), tb.dims2());
        assert_eq!(k, k2, "matmul {:?} x {:?}", ta.shape, tb.shape);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = ta.data[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                row.iter_mut().zip(brow).for_each(|(o, b)| *o += x * b);
            }
        }
        self.push(Tensor::new(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "add");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        self.push(Tensor::new(ta.shape.clone(), data), Op::Add(a, b))
    }

    /// Adds a `[1, n]` row to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (_, n) = ta.dims2();
        assert_eq!(tb.len(), n, "add_row");
        let data = ta
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data[i % n])
            .collect();
        self.push(Tensor::new(ta.shape.clone(), data), Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|x| x * c).collect();
        self.push(Tensor::new(t.shape.clone(), data), Op::Scale(a, c))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| x * sigmoid(x)).collect();
        self.push(Tensor::new(t.shape.clone(), data), Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| sigmoid(x)).collect();
        self.push(Tensor::new(t.shape.clone(), data), Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut data = t.data.clone();
        for row in data.chunks_mut(n).take(m) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x = (*x - max).exp());
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
        }
        self.push(Tensor::new(vec![m, n], data), Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = t.data[i * n + j];
            }
        }
        self.push(Tensor::new(vec![n, m], data), Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((ma, n), (mb, nb)) = (ta.dims2(), tb.dims2());
        assert_eq!(n, nb, "concat_rows");
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        self.push(Tensor::new(vec![ma + mb, n], data), Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.value(parts[0]).dims2().0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.value(p).dims2();
                assert_eq!(r, m, "concat_cols");
                c
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data[i * w..(i + 1) * w]);
            }
        }
        self.push(Tensor::new(vec![m, n], data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let (m, n) = t.dims2();
        assert!(start + len <= n, "slice_cols");
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&t.data[i * n + start..i * n + start + len]);
        }
        self.push(Tensor::new(vec![m, len], data), Op::SliceCols(a, start))
    }

    pub fn slice_row(&mut self, a: Var, row: usize) -> Var {
        let t = self.value(a);
        let (_, n) = t.dims2();
        let data = t.data[row * n..(row + 1) * n].to_vec();
        self.push(Tensor::new(vec![1, n], data), Op::SliceRow(a, row))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self.value(a);
        let value = Tensor::new(shape, t.data.clone());
        self.push(value, Op::Reshape(a))
    }

    /// `x: [C, H, W]`, `w: [O, C, K, K]`, `b: [1, O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (c, h, wd) = tx.dims3();
        let (o, k) = (tw.shape[0], tw.shape[2]);
        assert_eq!(tw.shape, vec![o, c, k, k], "conv2d weights");
        let (oh, ow) = (conv_out(h, k, spec), conv_out(wd, k, spec));
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = tb.data[oc]);
            for ic in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = tw.data[((oc * c + ic) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &tx.data[(ic * h + iy as usize) * wd..(ic * h + iy as usize + 1) * wd];
                            for ox in 0..ow {
                                let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if ix >= 0 && ix < wd as isize {
                                    plane[oy * ow + ox] += wv * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(vec![o, oh, ow], out), Op::Conv2d(x, w, b, spec))
    }

    /// `x: [C, H, W]`, `w: [C, O, K, K]`, `b: [1, O]`; output side
    /// `(H - 1) * stride - 2 * pad + K`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (c, h, wd) = tx.dims3();
        let (o, k) = (tw.shape[1], tw.shape[2]);
        assert_eq!(tw.shape, vec![c, o, k, k], "conv_transpose2d weights");
        let oh = (h - 1) * spec.stride + k - 2 * spec.pad;
        let ow = (wd - 1) * spec.stride + k - 2 * spec.pad;
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            out[oc * oh * ow..(oc + 1) * oh * ow]
                .iter_mut()
                .for_each(|v| *v = tb.data[oc]);
        }
        for ic in 0..c {
            for oc in 0..o {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = tw.data[((ic * o + oc) * k + ky) * k + kx];
                        for iy in 0..h {
                            let oy = (iy * spec.stride + ky) as isize - spec.pad as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let orow = (oc * oh + oy as usize) * ow;
                            for ix in 0..wd {
                                let ox = (ix * spec.stride + kx) as isize - spec.pad as isize;
                                if ox >= 0 && ox < ow as isize {
                                    out[orow + ox as usize] += wv * tx.data[(ic * h + iy) * wd + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(vec![o, oh, ow], out), Op::ConvTranspose2d(x, w, b, spec))
    }

    /// Squared Euclidean distance of two equally shaped tensors, as `[1, 1]`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "sq_dist");
        let d = ta.data.iter().zip(&tb.data).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push(Tensor::new(vec![1, 1], vec![d]), Op::SqDist(a, b))
    }

    /// Reverse pass from the given output gradients.
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            assert_eq!(self.value(*v).shape, g.shape, "seed shape");
            accumulate(&mut grads, *v, g.clone());
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients(grads)
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let ((m, k), (_, n)) = (ta.dims2(), tb.dims2());
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g.data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &tb.data[p * n..(p + 1) * n];
                        ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        let x = ta.data[i * k + p];
                        if x != 0.0 {
                            gb[p * n..(p + 1) * n]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(o, gv)| *o += x * gv);
                        }
                    }
                }
                accumulate(grads, a, Tensor::new(vec![m, k], ga));
                accumulate(grads, b, Tensor::new(vec![k, n], gb));
            }
            Op::Add(a, b) => {
                accumulate(grads, a, g.clone());
                accumulate(grads, b, g.clone());
            }
            Op::AddRow(a, b) => {
                let n = self.value(b).len();
                let mut gb = vec![0.0; n];
                g.data.iter().enumerate().for_each(|(i, v)| gb[i % n] += v);
                accumulate(grads, a, g.clone());
                accumulate(grads, b, Tensor::new(self.value(b).shape.clone(), gb));
            }
            Op::Scale(a, c) => {
                let data = g.data.iter().map(|v| v * c).collect();
                accumulate(grads, a, Tensor::new(g.shape.clone(), data));
            }
            Op::Silu(a) => {
                let x = self.value(a);
                let data = x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(&x, gv)| {
                        let s = sigmoid(x);
                        gv * s * (1.0 + x * (1.0 - s))
                    })
                    .collect();
                accumulate(grads, a, Tensor::new(x.shape.clone(), data));
            }
            Op::Sigmoid(a) => {
                let data = y.data.iter().zip(&g.data).map(|(y, gv)| gv * y * (1.0 - y)).collect();
                accumulate(grads, a, Tensor::new(y.shape.clone(), data));
            }
            Op::SoftmaxRows(a) => {
                let (_, n) = y.dims2();
                let mut data = vec![0.0; y.len()];
                for ((out, yr), gr) in data.chunks_mut(n).zip(y.data.chunks(n)).zip(g.data.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out[j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, a, Tensor::new(y.shape.clone(), data));
            }
            Op::Transpose(a) => {
                let (n, m) = y.dims2();
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        data[i * n + j] = g.data[j * m + i];
                    }
                }
                accumulate(grads, a, Tensor::new(vec![m, n], data));
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(a).len();
                accumulate(grads, a, Tensor::new(self.value(a).shape.clone(), g.data[..split].to_vec()));
                accumulate(grads, b, Tensor::new(self.value(b).shape.clone(), g.data[split..].to_vec()));
            }
            Op::ConcatCols(ref parts) => {
                let (m, n) = y.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    let mut data = Vec::with_capacity(m * w);
                    for i in 0..m {
                        data.extend_from_slice(&g.data[i * n + offset..i * n + offset + w]);
                    }
                    accumulate(grads, p, Tensor::new(vec![m, w], data));
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, n) = self.value(a).dims2();
                let len = y.dims2().1;
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    data[i * n + start..i * n + start + len].copy_from_slice(&g.data[i * len..(i + 1) * len]);
                }
                accumulate(grads, a, Tensor::new(vec![m, n], data));
            }
            Op::SliceRow(a, row) => {
                let (m, n) = self.value(a).dims2();
                let mut data = vec![0.0; m * n];
                data[row * n..(row + 1) * n].copy_from_slice(&g.data);
                accumulate(grads, a, Tensor::new(vec![m, n], data));
            }
            Op::Reshape(a) => {
                accumulate(grads, a, Tensor::new(self.value(a).shape.clone(), g.data.clone()));
            }
            Op::Conv2d(x, w, b, spec) => {
                let (tx, tw) = (self.value(x), self.value(w));
                let (c, h, wd) = tx.dims3();
                let (o, oh, ow) = y.dims3();
                let k = tw.shape[2];
                let mut gx = vec![0.0; tx.len()];
                let mut gw = vec![0.0; tw.len()];
                let mut gb = vec![0.0; o];
                for oc in 0..o {
                    let gplane = &g.data[oc * oh * ow..(oc + 1) * oh * ow];
                    gb[oc] = gplane.iter().sum();
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let widx = ((oc * c + ic) * k + ky) * k + kx;
                                let wv = tw.data[widx];
                                let mut acc = 0.0;
                                for oy in 0..oh {
                                    let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let base = (ic * h + iy as usize) * wd;
                                    for ox in 0..ow {
                                        let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                        if ix >= 0 && ix < wd as isize {
                                            let gv = gplane[oy * ow + ox];
                                            acc += gv * tx.data[base + ix as usize];
                                            gx[base + ix as usize] += gv * wv;
                                        }
                                    }
                                }
                                gw[widx] += acc;
                            }
                        }
                    }
                }
                accumulate(grads, x, Tensor::new(tx.shape.clone(), gx));
                accumulate(grads, w, Tensor::new(tw.shape.clone(), gw));
                accumulate(grads, b, Tensor::new(self.value(b).shape.clone(), gb));
            }
            Op::ConvTranspose2d(x, w, b, spec) => {
                let (tx, tw) = (self.value(x), self.value(w));
                let (c, h, wd) = tx.dims3();
                let (o, oh, ow) = y.dims3();
                let k = tw.shape[2];
                let mut gx = vec![0.0; tx.len()];
                let mut gw = vec![0.0; tw.len()];
                let gb: Vec<f64> = (0..o).map(|oc| g.data[oc * oh * ow..(oc + 1) * oh * ow].iter().sum()).collect();
                for ic in 0..c {
                    for oc in 0..o {
                        for ky in 0..k {
                            for kx in 0..k {
                                let widx = ((ic * o + oc) * k + ky) * k + kx;
                                let wv = tw.data[widx];
                                let mut acc = 0.0;
                                for iy in 0..h {
                                    let oy = (iy * spec.stride + ky) as isize - spec.pad as isize;
                                    if oy < 0 || oy >= oh as isize {
                                        continue;
                                    }
                                    let orow = (oc * oh + oy as usize) * ow;
                                    for ix in 0..wd {
                                        let ox = (ix * spec.stride + kx) as isize - spec.pad as isize;
                                        if ox >= 0 && ox < ow as isize {
                                            let gv = g.data[orow + ox as usize];
                                            let xi = (ic * h + iy) * wd + ix;
                                            acc += gv * tx.data[xi];
                                            gx[xi] += gv * wv;
                                        }
                                    }
                                }
                                gw[widx] += acc;
                            }
                        }
                    }
                }
                accumulate(grads, x, Tensor::new(tx.shape.clone(), gx));
                accumulate(grads, w, Tensor::new(tw.shape.clone(), gw));
                accumulate(grads, b, Tensor::new(self.value(b).shape.clone(), gb));
            }
            Op::SqDist(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let s = 2.0 * g.data[0];
                let ga: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(x, y)| s * (x - y)).collect();
                let gb = ga.iter().map(|v| -v).collect();
                accumulate(grads, a, Tensor::new(ta.shape.clone(), ga));
                accumulate(grads, b, Tensor::new(tb.shape.clone(), gb));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}
