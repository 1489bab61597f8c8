//! Operation recording and reverse-mode gradient propagation.
//!
//! Each forward op validates shapes, computes values, and (when the tape is
//! recording) pushes a record holding handles to its inputs and output plus
//! whatever the backward rule needs. Records are appended in execution order,
//! so the tape is always topologically sorted and `backward` is a single
//! reverse sweep that visits every record exactly once.

use crate::error::{Error, Result};

use super::{strides, Mode, Rng, Tensor};

const LN_EPS: f64 = 1e-5;

enum Record {
    MatMul {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Bmm {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Add {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Sub {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Hadamard {
        a: Tensor,
        b: Tensor,
        out: Tensor,
    },
    Scale {
        a: Tensor,
        factor: f64,
        out: Tensor,
    },
    SumAll {
        a: Tensor,
        out: Tensor,
    },
    MeanAll {
        a: Tensor,
        out: Tensor,
    },
    MeanAxis0 {
        a: Tensor,
        out: Tensor,
    },
    LeakyRelu {
        a: Tensor,
        slope: f64,
        out: Tensor,
    },
    Gelu {
        a: Tensor,
        out: Tensor,
    },
    LayerNorm {
        x: Tensor,
        gain: Tensor,
        bias: Tensor,
        out: Tensor,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax {
        a: Tensor,
        axis: usize,
        out: Tensor,
    },
    CrossEntropy {
        logits: Tensor,
        out: Tensor,
        probs: Vec<f64>,
        targets: Vec<i64>,
        mask: Vec<bool>,
        count: usize,
    },
    NegMeanLogClassMass {
        logits: Tensor,
        out: Tensor,
        p_all: Vec<f64>,
        p_sub: Vec<f64>,
    },
    Dropout {
        a: Tensor,
        multipliers: Vec<f64>,
        out: Tensor,
    },
    SelectRows {
        table: Tensor,
        indices: Vec<usize>,
        out: Tensor,
    },
    Reshape {
        a: Tensor,
        out: Tensor,
    },
    Permute {
        a: Tensor,
        axes: Vec<usize>,
        out: Tensor,
    },
    L2NormSq {
        a: Tensor,
        out: Tensor,
    },
}

/// Ordered record of primitive operations for one forward pass.
pub struct Tape {
    records: Vec<Record>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn flows(t: &Tensor) -> bool {
    t.requires_grad() || t.is_from_op()
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            records: Vec::new(),
            recording: true,
        }
    }

    /// Forward-only tape: values are computed, nothing is recorded.
    pub fn inference() -> Self {
        Tape {
            records: Vec::new(),
            recording: false,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, record: Record) {
        if self.recording {
            record_output(&record).mark_from_op();
            self.records.push(record);
        }
    }

    /// Matrix product of a `[m, k]` by a `[k, n]` tensor.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let values = matmul_raw(&a.values(), &b.values(), m, k, n);
        let out = Tensor::constant(vec![m, n], values);
        out.debug_check_finite("matmul");
        self.push(Record::MatMul {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Batched matrix product: `[g, m, k]` by `[g, k, n]`.
    pub fn bmm(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::Dimension {
                op: "bmm",
                lhs: sa,
                rhs: sb,
            });
        }
        let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (av, bv) = (a.values(), b.values());
        let mut values = vec![0.0; g * m * n];
        for batch in 0..g {
            let c = matmul_raw(
                &av[batch * m * k..(batch + 1) * m * k],
                &bv[batch * k * n..(batch + 1) * k * n],
                m,
                k,
                n,
            );
            values[batch * m * n..(batch + 1) * m * n].copy_from_slice(&c);
        }
        drop((av, bv));
        let out = Tensor::constant(vec![g, m, n], values);
        out.debug_check_finite("bmm");
        self.push(Record::Bmm {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Elementwise sum. `b` may have a shape that is a suffix of `a`'s shape,
    /// in which case it is broadcast over the leading dimensions.
    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.add_sub(a, b, false)
    }

    /// Elementwise difference, with the same broadcast rule as [`Tape::add`].
    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.add_sub(a, b, true)
    }

    fn add_sub(&mut self, a: &Tensor, b: &Tensor, negate: bool) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if !suffix_broadcastable(&sa, &sb) {
            return Err(Error::Dimension {
                op: if negate { "sub" } else { "add" },
                lhs: sa,
                rhs: sb,
            });
        }
        let bn = b.numel();
        let sign = if negate { -1.0 } else { 1.0 };
        let values: Vec<f64> = {
            let (av, bv) = (a.values(), b.values());
            av.iter()
                .enumerate()
                .map(|(i, &x)| x + sign * bv[i % bn])
                .collect()
        };
        let out = Tensor::constant(sa, values);
        out.debug_check_finite("add/sub");
        let record = if negate {
            Record::Sub {
                a: a.clone(),
                b: b.clone(),
                out: out.clone(),
            }
        } else {
            Record::Add {
                a: a.clone(),
                b: b.clone(),
                out: out.clone(),
            }
        };
        self.push(record);
        Ok(out)
    }

    /// Elementwise product of same-shaped tensors.
    pub fn hadamard(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa != sb {
            return Err(Error::Dimension {
                op: "hadamard",
                lhs: sa,
                rhs: sb,
            });
        }
        let values: Vec<f64> = {
            let (av, bv) = (a.values(), b.values());
            av.iter().zip(bv.iter()).map(|(x, y)| x * y).collect()
        };
        let out = Tensor::constant(sa, values);
        out.debug_check_finite("hadamard");
        self.push(Record::Hadamard {
            a: a.clone(),
            b: b.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: &Tensor, factor: f64) -> Tensor {
        let values: Vec<f64> = a.values().iter().map(|x| x * factor).collect();
        let out = Tensor::constant(a.shape(), values);
        out.debug_check_finite("scale");
        self.push(Record::Scale {
            a: a.clone(),
            factor,
            out: out.clone(),
        });
        out
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&mut self, a: &Tensor) -> Tensor {
        let out = Tensor::constant(vec![], vec![a.values().iter().sum()]);
        self.push(Record::SumAll {
            a: a.clone(),
            out: out.clone(),
        });
        out
    }

    /// Mean of all elements, as a scalar.
    pub fn mean_all(&mut self, a: &Tensor) -> Tensor {
        let n = a.numel().max(1);
        let out = Tensor::constant(vec![], vec![a.values().iter().sum::<f64>() / n as f64]);
        self.push(Record::MeanAll {
            a: a.clone(),
            out: out.clone(),
        });
        out
    }

    /// Mean over the leading axis: `[m, rest..]` becomes `[rest..]`.
    pub fn mean_axis0(&mut self, a: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape.is_empty() {
            return Err(Error::Dimension {
                op: "mean_axis0",
                lhs: shape,
                rhs: vec![],
            });
        }
        let m = shape[0];
        let inner: usize = shape[1..].iter().product();
        let av = a.values();
        let mut values = vec![0.0; inner];
        for row in 0..m {
            for j in 0..inner {
                values[j] += av[row * inner + j];
            }
        }
        for v in &mut values {
            *v /= m.max(1) as f64;
        }
        drop(av);
        let out = Tensor::constant(shape[1..].to_vec(), values);
        self.push(Record::MeanAxis0 {
            a: a.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Leaky rectifier: `x` for `x >= 0`, `slope * x` otherwise.
    pub fn leaky_relu(&mut self, a: &Tensor, slope: f64) -> Tensor {
        let values: Vec<f64> = a
            .values()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let out = Tensor::constant(a.shape(), values);
        self.push(Record::LeakyRelu {
            a: a.clone(),
            slope,
            out: out.clone(),
        });
        out
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: &Tensor) -> Tensor {
        let values: Vec<f64> = a.values().iter().map(|&x| gelu_value(x)).collect();
        let out = Tensor::constant(a.shape(), values);
        self.push(Record::Gelu {
            a: a.clone(),
            out: out.clone(),
        });
        out
    }

    /// Layer normalization over the last axis, with learnable gain and bias.
    pub fn layer_norm(&mut self, x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let d = *shape.last().ok_or(Error::Dimension {
            op: "layer_norm",
            lhs: shape.clone(),
            rhs: vec![],
        })?;
        if gain.shape() != vec![d] || bias.shape() != vec![d] {
            return Err(Error::Dimension {
                op: "layer_norm",
                lhs: shape,
                rhs: gain.shape(),
            });
        }
        let rows = x.numel() / d;
        let xv = x.values();
        let (gv, bv) = (gain.values(), bias.values());
        let mut values = vec![0.0; x.numel()];
        let mut xhat = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[r * d + j] = xh;
                values[r * d + j] = xh * gv[j] + bv[j];
            }
        }
        drop((xv, gv, bv));
        let out = Tensor::constant(shape, values);
        out.debug_check_finite("layer_norm");
        self.push(Record::LayerNorm {
            x: x.clone(),
            gain: gain.clone(),
            bias: bias.clone(),
            out: out.clone(),
            xhat,
            inv_std,
        });
        Ok(out)
    }

    /// Numerically stabilized softmax along the given axis.
    pub fn softmax(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(Error::Index {
                what: "softmax axis",
                index: axis,
                limit: shape.len(),
            });
        }
        let values = softmax_along(&a.values(), &shape, axis);
        let out = Tensor::constant(shape, values);
        out.debug_check_finite("softmax");
        self.push(Record::Softmax {
            a: a.clone(),
            axis,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Mean negative log softmax probability of the target class over masked
    /// rows. Returns 0 with zero gradient when the mask selects nothing.
    pub fn cross_entropy_from_logits(
        &mut self,
        logits: &Tensor,
        targets: &[i64],
        mask: &[bool],
    ) -> Result<Tensor> {
        let shape = logits.shape();
        if shape.len() != 2 || targets.len() != shape[0] || mask.len() != shape[0] {
            return Err(Error::Dimension {
                op: "cross_entropy_from_logits",
                lhs: shape,
                rhs: vec![targets.len(), mask.len()],
            });
        }
        let (b, c) = (shape[0], shape[1]);
        for (i, &t) in targets.iter().enumerate() {
            if mask[i] && (t < 0 || t as usize >= c) {
                return Err(Error::Index {
                    what: "cross_entropy target",
                    index: t.max(0) as usize,
                    limit: c,
                });
            }
        }
        let probs = softmax_along(&logits.values(), &shape, 1);
        let count = mask.iter().filter(|&&m| m).count();
        let mut loss = 0.0;
        if count > 0 {
            let lv = logits.values();
            for i in 0..b {
                if !mask[i] {
                    continue;
                }
                let row = &lv[i * c..(i + 1) * c];
                let t = targets[i] as usize;
                loss -= row[t] - log_sum_exp(row);
            }
            loss /= count as f64;
        }
        let out = Tensor::constant(vec![], vec![loss]);
        self.push(Record::CrossEntropy {
            logits: logits.clone(),
            out: out.clone(),
            probs,
            targets: targets.to_vec(),
            mask: mask.to_vec(),
            count,
        });
        Ok(out)
    }

    /// `-(1/n) * sum_i log( sum_{j in classes} softmax(logits_i)_j )`.
    ///
    /// This is the negative mean log probability mass a row's softmax assigns
    /// to a class subset; with a singleton subset it is the usual negative
    /// log-likelihood of that class, and with the complement of the fake
    /// class it is `-mean log(1 - p_fake)`.
    pub fn neg_mean_log_class_mass(&mut self, logits: &Tensor, classes: &[usize]) -> Result<Tensor> {
        let shape = logits.shape();
        if shape.len() != 2 {
            return Err(Error::Dimension {
                op: "neg_mean_log_class_mass",
                lhs: shape,
                rhs: vec![],
            });
        }
        let (n, c) = (shape[0], shape[1]);
        if classes.is_empty() {
            return Err(Error::Contract(
                "neg_mean_log_class_mass: empty class subset".into(),
            ));
        }
        for &j in classes {
            if j >= c {
                return Err(Error::Index {
                    what: "class subset entry",
                    index: j,
                    limit: c,
                });
            }
        }
        let lv = logits.values();
        let mut p_all = vec![0.0; n * c];
        let mut p_sub = vec![0.0; n * c];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &lv[i * c..(i + 1) * c];
            let lse_all = log_sum_exp(row);
            let sub: Vec<f64> = classes.iter().map(|&j| row[j]).collect();
            let lse_sub = log_sum_exp(&sub);
            loss -= lse_sub - lse_all;
            for j in 0..c {
                p_all[i * c + j] = (row[j] - lse_all).exp();
            }
            for &j in classes {
                p_sub[i * c + j] = (row[j] - lse_sub).exp();
            }
        }
        loss /= n.max(1) as f64;
        drop(lv);
        let out = Tensor::constant(vec![], vec![loss]);
        self.push(Record::NegMeanLogClassMass {
            logits: logits.clone(),
            out: out.clone(),
            p_all,
            p_sub,
        });
        Ok(out)
    }

    /// Inverted dropout: in train mode, zero each element with probability
    /// `rate` and scale survivors by `1/(1-rate)`; in eval mode, identity.
    pub fn dropout(&mut self, a: &Tensor, rate: f64, rng: &mut Rng, mode: Mode) -> Tensor {
        if mode == Mode::Eval || rate <= 0.0 {
            return a.clone();
        }
        assert!(rate < 1.0, "dropout rate must be below 1");
        let keep = 1.0 - rate;
        let multipliers: Vec<f64> = (0..a.numel())
            .map(|_| if rng.next_f64() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let values: Vec<f64> = a
            .values()
            .iter()
            .zip(multipliers.iter())
            .map(|(x, m)| x * m)
            .collect();
        let out = Tensor::constant(a.shape(), values);
        self.push(Record::Dropout {
            a: a.clone(),
            multipliers,
            out: out.clone(),
        });
        out
    }

    /// Gather rows of a `[r, inner..]` tensor; also serves as embedding lookup.
    pub fn select_rows(&mut self, table: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let shape = table.shape();
        if shape.is_empty() {
            return Err(Error::Dimension {
                op: "select_rows",
                lhs: shape,
                rhs: vec![indices.len()],
            });
        }
        let rows = shape[0];
        let inner: usize = shape[1..].iter().product();
        for &idx in indices {
            if idx >= rows {
                return Err(Error::Index {
                    what: "row index",
                    index: idx,
                    limit: rows,
                });
            }
        }
        let tv = table.values();
        let mut values = Vec::with_capacity(indices.len() * inner);
        for &idx in indices {
            values.extend_from_slice(&tv[idx * inner..(idx + 1) * inner]);
        }
        drop(tv);
        let mut out_shape = vec![indices.len()];
        out_shape.extend_from_slice(&shape[1..]);
        let out = Tensor::constant(out_shape, values);
        self.push(Record::SelectRows {
            table: table.clone(),
            indices: indices.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Reinterpret the value buffer under a new shape of equal size.
    pub fn reshape(&mut self, a: &Tensor, new_shape: Vec<usize>) -> Result<Tensor> {
        if new_shape.iter().product::<usize>() != a.numel() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: a.shape(),
                rhs: new_shape,
            });
        }
        let out = Tensor::constant(new_shape, a.to_vec());
        self.push(Record::Reshape {
            a: a.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Reorder axes; `axes` must be a permutation of `0..ndim`.
    pub fn permute(&mut self, a: &Tensor, axes: &[usize]) -> Result<Tensor> {
        let shape = a.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&ax| ax >= shape.len() || std::mem::replace(&mut seen[ax], true)) {
            return Err(Error::Contract(format!(
                "permute: {:?} is not a permutation of axes for shape {:?}",
                axes, shape
            )));
        }
        let (values, out_shape) = permute_raw(&a.values(), &shape, axes);
        let out = Tensor::constant(out_shape, values);
        self.push(Record::Permute {
            a: a.clone(),
            axes: axes.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }

    /// Swap the last two axes.
    pub fn transpose_last2(&mut self, a: &Tensor) -> Result<Tensor> {
        let ndim = a.shape().len();
        if ndim < 2 {
            return Err(Error::Dimension {
                op: "transpose_last2",
                lhs: a.shape(),
                rhs: vec![],
            });
        }
        let mut axes: Vec<usize> = (0..ndim).collect();
        axes.swap(ndim - 1, ndim - 2);
        self.permute(a, &axes)
    }

    /// Squared Euclidean norm of all elements, as a scalar.
    pub fn l2_norm_sq(&mut self, a: &Tensor) -> Tensor {
        let out = Tensor::constant(vec![], vec![a.values().iter().map(|v| v * v).sum()]);
        self.push(Record::L2NormSq {
            a: a.clone(),
            out: out.clone(),
        });
        out
    }

    /// Propagate gradients from a scalar loss back through every recorded op.
    ///
    /// Gradients accumulate into the `grad` field of each tensor on the path;
    /// tensors with `requires_grad` that appear on the tape but do not reach
    /// the loss end up with an explicit zero gradient.
    pub fn backward(&mut self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }
        loss.accumulate_grad(&[1.0]);
        for record in self.records.iter().rev() {
            step_backward(record);
        }
        for record in &self.records {
            for t in record_tensors(record) {
                if t.requires_grad() {
                    t.ensure_zero_grad();
                }
            }
        }
        Ok(())
    }
}

fn record_output(record: &Record) -> &Tensor {
    match record {
        Record::MatMul { out, .. }
        | Record::Bmm { out, .. }
        | Record::Add { out, .. }
        | Record::Sub { out, .. }
        | Record::Hadamard { out, .. }
        | Record::Scale { out, .. }
        | Record::SumAll { out, .. }
        | Record::MeanAll { out, .. }
        | Record::MeanAxis0 { out, .. }
        | Record::LeakyRelu { out, .. }
        | Record::Gelu { out, .. }
        | Record::LayerNorm { out, .. }
        | Record::Softmax { out, .. }
        | Record::CrossEntropy { out, .. }
        | Record::NegMeanLogClassMass { out, .. }
        | Record::Dropout { out, .. }
        | Record::SelectRows { out, .. }
        | Record::Reshape { out, .. }
        | Record::Permute { out, .. }
        | Record::L2NormSq { out, .. } => out,
    }
}

fn record_tensors(record: &Record) -> Vec<&Tensor> {
    match record {
        Record::MatMul { a, b, out }
        | Record::Bmm { a, b, out }
        | Record::Add { a, b, out }
        | Record::Sub { a, b, out }
        | Record::Hadamard { a, b, out } => vec![a, b, out],
        Record::LayerNorm {
            x, gain, bias, out, ..
        } => vec![x, gain, bias, out],
        Record::Scale { a, out, .. }
        | Record::SumAll { a, out }
        | Record::MeanAll { a, out }
        | Record::MeanAxis0 { a, out }
        | Record::LeakyRelu { a, out, .. }
        | Record::Gelu { a, out }
        | Record::Softmax { a, out, .. }
        | Record::Dropout { a, out, .. }
        | Record::Reshape { a, out }
        | Record::Permute { a, out, .. }
        | Record::L2NormSq { a, out } => vec![a, out],
        Record::CrossEntropy { logits, out, .. }
        | Record::NegMeanLogClassMass { logits, out, .. } => vec![logits, out],
        Record::SelectRows { table, out, .. } => vec![table, out],
    }
}

fn step_backward(record: &Record) {
    match record {
        Record::MatMul { a, b, out } => {
            let Some(d_out) = out.grad() else { return };
            let sa = a.shape();
            let sb = b.shape();
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if flows(a) {
                // dA = dC * B^T
                let bv = b.values();
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += d_out[i * n + j] * bv[p * n + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                drop(bv);
                a.accumulate_grad(&da);
            }
            if flows(b) {
                // dB = A^T * dC
                let av = a.values();
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let w = av[i * k + p];
                        if w != 0.0 {
                            for j in 0..n {
                                db[p * n + j] += w * d_out[i * n + j];
                            }
                        }
                    }
                }
                drop(av);
                b.accumulate_grad(&db);
            }
        }
        Record::Bmm { a, b, out } => {
            let Some(d_out) = out.grad() else { return };
            let sa = a.shape();
            let sb = b.shape();
            let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            if flows(a) {
                let bv = b.values();
                let mut da = vec![0.0; g * m * k];
                for batch in 0..g {
                    let dc = &d_out[batch * m * n..(batch + 1) * m * n];
                    let bb = &bv[batch * k * n..(batch + 1) * k * n];
                    let dab = &mut da[batch * m * k..(batch + 1) * m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += dc[i * n + j] * bb[p * n + j];
                            }
                            dab[i * k + p] = s;
                        }
                    }
                }
                drop(bv);
                a.accumulate_grad(&da);
            }
            if flows(b) {
                let av = a.values();
                let mut db = vec![0.0; g * k * n];
                for batch in 0..g {
                    let dc = &d_out[batch * m * n..(batch + 1) * m * n];
                    let ab = &av[batch * m * k..(batch + 1) * m * k];
                    let dbb = &mut db[batch * k * n..(batch + 1) * k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let w = ab[i * k + p];
                            if w != 0.0 {
                                for j in 0..n {
                                    dbb[p * n + j] += w * dc[i * n + j];
                                }
                            }
                        }
                    }
                }
                drop(av);
                b.accumulate_grad(&db);
            }
        }
        Record::Add { a, b, out } | Record::Sub { a, b, out } => {
            let negate = matches!(record, Record::Sub { .. });
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                a.accumulate_grad(&d_out);
            }
            if flows(b) {
                let bn = b.numel();
                let sign = if negate { -1.0 } else { 1.0 };
                let mut db = vec![0.0; bn];
                for (i, &g) in d_out.iter().enumerate() {
                    db[i % bn] += sign * g;
                }
                b.accumulate_grad(&db);
            }
        }
        Record::Hadamard { a, b, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = {
                    let bv = b.values();
                    d_out.iter().zip(bv.iter()).map(|(g, y)| g * y).collect()
                };
                a.accumulate_grad(&contrib);
            }
            if flows(b) {
                let contrib: Vec<f64> = {
                    let av = a.values();
                    d_out.iter().zip(av.iter()).map(|(g, x)| g * x).collect()
                };
                b.accumulate_grad(&contrib);
            }
        }
        Record::Scale { a, factor, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = d_out.iter().map(|g| g * factor).collect();
                a.accumulate_grad(&contrib);
            }
        }
        Record::SumAll { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                a.accumulate_grad(&vec![d_out[0]; a.numel()]);
            }
        }
        Record::MeanAll { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let n = a.numel().max(1);
                a.accumulate_grad(&vec![d_out[0] / n as f64; a.numel()]);
            }
        }
        Record::MeanAxis0 { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let m = a.shape()[0].max(1);
                let inner = a.numel() / m;
                let mut contrib = vec![0.0; a.numel()];
                for row in 0..m {
                    for j in 0..inner {
                        contrib[row * inner + j] = d_out[j] / m as f64;
                    }
                }
                a.accumulate_grad(&contrib);
            }
        }
        Record::LeakyRelu { a, slope, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = {
                    let av = a.values();
                    d_out
                        .iter()
                        .zip(av.iter())
                        .map(|(g, &x)| if x >= 0.0 { *g } else { g * slope })
                        .collect()
                };
                a.accumulate_grad(&contrib);
            }
        }
        Record::Gelu { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = {
                    let av = a.values();
                    d_out
                        .iter()
                        .zip(av.iter())
                        .map(|(g, &x)| g * gelu_derivative(x))
                        .collect()
                };
                a.accumulate_grad(&contrib);
            }
        }
        Record::LayerNorm {
            x,
            gain,
            bias,
            out,
            xhat,
            inv_std,
        } => {
            let Some(d_out) = out.grad() else { return };
            let d = gain.numel();
            let rows = x.numel() / d;
            if flows(gain) {
                let mut dg = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        dg[j] += d_out[r * d + j] * xhat[r * d + j];
                    }
                }
                gain.accumulate_grad(&dg);
            }
            if flows(bias) {
                let mut db = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        db[j] += d_out[r * d + j];
                    }
                }
                bias.accumulate_grad(&db);
            }
            if flows(x) {
                let gv = gain.values();
                let mut dx = vec![0.0; x.numel()];
                for r in 0..rows {
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..d {
                        let dxh = d_out[r * d + j] * gv[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat[r * d + j];
                    }
                    for j in 0..d {
                        let dxh = d_out[r * d + j] * gv[j];
                        dx[r * d + j] = inv_std[r]
                            * (dxh
                                - sum_dxhat / d as f64
                                - xhat[r * d + j] * sum_dxhat_xhat / d as f64);
                    }
                }
                drop(gv);
                x.accumulate_grad(&dx);
            }
        }
        Record::Softmax { a, axis, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let shape = out.shape();
                let y = out.values();
                let axis_len = shape[*axis];
                let inner: usize = shape[axis + 1..].iter().product();
                let outer: usize = shape[..*axis].iter().product();
                let mut contrib = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * axis_len * inner + i;
                        let mut dot = 0.0;
                        for t in 0..axis_len {
                            let idx = base + t * inner;
                            dot += d_out[idx] * y[idx];
                        }
                        for t in 0..axis_len {
                            let idx = base + t * inner;
                            contrib[idx] = y[idx] * (d_out[idx] - dot);
                        }
                    }
                }
                drop(y);
                a.accumulate_grad(&contrib);
            }
        }
        Record::CrossEntropy {
            logits,
            out,
            probs,
            targets,
            mask,
            count,
        } => {
            let Some(d_out) = out.grad() else { return };
            if flows(logits) {
                let c = logits.shape()[1];
                let mut contrib = vec![0.0; logits.numel()];
                if *count > 0 {
                    let scale = d_out[0] / *count as f64;
                    for (i, &masked) in mask.iter().enumerate() {
                        if !masked {
                            continue;
                        }
                        let t = targets[i] as usize;
                        for j in 0..c {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            contrib[i * c + j] = scale * (probs[i * c + j] - onehot);
                        }
                    }
                }
                logits.accumulate_grad(&contrib);
            }
        }
        Record::NegMeanLogClassMass {
            logits,
            out,
            p_all,
            p_sub,
        } => {
            let Some(d_out) = out.grad() else { return };
            if flows(logits) {
                let n = logits.shape()[0].max(1);
                let scale = d_out[0] / n as f64;
                let contrib: Vec<f64> = p_all
                    .iter()
                    .zip(p_sub.iter())
                    .map(|(pa, ps)| scale * (pa - ps))
                    .collect();
                logits.accumulate_grad(&contrib);
            }
        }
        Record::Dropout {
            a,
            multipliers,
            out,
        } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = d_out
                    .iter()
                    .zip(multipliers.iter())
                    .map(|(g, m)| g * m)
                    .collect();
                a.accumulate_grad(&contrib);
            }
        }
        Record::SelectRows {
            table,
            indices,
            out,
        } => {
            let Some(d_out) = out.grad() else { return };
            if flows(table) {
                let inner = table.numel() / table.shape()[0];
                let mut contrib = vec![0.0; table.numel()];
                for (row, &idx) in indices.iter().enumerate() {
                    for j in 0..inner {
                        contrib[idx * inner + j] += d_out[row * inner + j];
                    }
                }
                table.accumulate_grad(&contrib);
            }
        }
        Record::Reshape { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                a.accumulate_grad(&d_out);
            }
        }
        Record::Permute { a, axes, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let mut inverse = vec![0usize; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let (contrib, _) = permute_raw(&d_out, &out.shape(), &inverse);
                a.accumulate_grad(&contrib);
            }
        }
        Record::L2NormSq { a, out } => {
            let Some(d_out) = out.grad() else { return };
            if flows(a) {
                let contrib: Vec<f64> = a.values().iter().map(|x| 2.0 * x * d_out[0]).collect();
                a.accumulate_grad(&contrib);
            }
        }
    }
}

fn suffix_broadcastable(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
    c
}

fn permute_raw(values: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
    let out_strides = strides(&out_shape);
    let mut out = vec![0.0; values.len()];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut src = 0;
        let mut rem = flat;
        for (dim, &os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            src += coord * in_strides[axes[dim]];
        }
        *slot = values[src];
    }
    (out, out_shape)
}

fn softmax_along(values: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; values.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            let mut max = f64::NEG_INFINITY;
            for t in 0..axis_len {
                max = max.max(values[base + t * inner]);
            }
            let mut sum = 0.0;
            for t in 0..axis_len {
                let e = (values[base + t * inner] - max).exp();
                out[base + t * inner] = e;
                sum += e;
            }
            for t in 0..axis_len {
                out[base + t * inner] /= sum;
            }
        }
    }
    out
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn gelu_value(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}
