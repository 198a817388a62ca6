use crate::tensor::{BatchNormMode, BatchNormStats, DiffTensor, Tape, Tensor, TensorError};
use indexmap::IndexMap;

/// BN running-average momentum: `running = 0.9 running + 0.1 batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Named trainable tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub tensors: IndexMap<String, Tensor>,
    pub running: IndexMap<String, BatchNormStats>,
}

impl ParamSet {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn add_bn(&mut self, prefix: &str, channels: usize) {
        self.insert(format!("{prefix}.gamma"), Tensor::full(&[channels], 1.0));
        self.insert(format!("{prefix}.beta"), Tensor::zeros(&[channels]));
        self.running.insert(
            prefix.to_string(),
            BatchNormStats {
                mean: vec![0.0; channels],
                var: vec![1.0; channels],
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Folds batch statistics into the running averages.
    pub fn update_running(&mut self, stats: &[(String, BatchNormStats)]) {
        for (name, s) in stats {
            if let Some(r) = self.running.get_mut(name) {
                for (a, b) in r.mean.iter_mut().zip(&s.mean) {
                    *a = BN_MOMENTUM * *a + (1.0 - BN_MOMENTUM) * b;
                }
                for (a, b) in r.var.iter_mut().zip(&s.var) {
                    *a = BN_MOMENTUM * *a + (1.0 - BN_MOMENTUM) * b;
                }
            }
        }
    }

    /// Puts every tensor on `tape`, as a parameter when `trainable`, else as a constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let ids = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), if trainable { tape.param(t) } else { tape.constant(t) }))
            .collect();
        Bound { ids }
    }

    /// Gradients of every bound tensor, in parameter order.
    pub fn grads(&self, tape: &Tape, bound: &Bound) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|(k, t)| Tensor::new(t.shape().to_vec(), tape.grad(bound.ids[k])).expect("gradient matches shape"))
            .collect()
    }
}

/// Tape handles of a bound [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    pub ids: IndexMap<String, DiffTensor>,
}

impl Bound {
    pub fn get(&self, name: &str) -> DiffTensor {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }
}

/// State threaded through a forward pass.
pub struct Fwd<'a> {
    pub tape: &'a mut Tape,
    pub bound: &'a Bound,
    pub params: &'a ParamSet,
    pub mode: BatchNormMode,
    pub stats: Vec<(String, BatchNormStats)>,
}

impl<'a> Fwd<'a> {
    pub fn new(tape: &'a mut Tape, bound: &'a Bound, params: &'a ParamSet, mode: BatchNormMode) -> Self {
        Self {
            tape,
            bound,
            params,
            mode,
            stats: Vec::new(),
        }
    }

    pub fn conv(&mut self, x: DiffTensor, name: &str) -> Result<DiffTensor, TensorError> {
        let w = self.bound.get(name);
        let k = self.tape.shape(w).to_vec();
        let pad = [k[2] / 2, k[3] / 2, k[4] / 2];
        self.tape.conv3d(x, w, pad)
    }

    /// Adds a per-channel bias `[C]` to an `[N, C, ...]` tensor.
    pub fn bias(&mut self, x: DiffTensor, name: &str) -> Result<DiffTensor, TensorError> {
        let b = self.bound.get(name);
        let shape = self.tape.shape(x).to_vec();
        let mut bshape = vec![1; shape.len()];
        bshape[1] = shape[1];
        let b = self.tape.reshape(b, &bshape)?;
        let b = self.tape.broadcast(b, &shape)?;
        self.tape.add(x, b)
    }

    pub fn bn(&mut self, x: DiffTensor, prefix: &str) -> Result<DiffTensor, TensorError> {
        let g = self.bound.get(&format!("{prefix}.gamma"));
        let b = self.bound.get(&format!("{prefix}.beta"));
        let running = self.params.running.get(prefix);
        let (y, stats) = self.tape.batch_norm(x, g, b, self.mode, running)?;
        if let Some(s) = stats {
            self.stats.push((prefix.to_string(), s));
        }
        Ok(y)
    }

    pub fn conv_bn(&mut self, x: DiffTensor, prefix: &str, relu: bool) -> Result<DiffTensor, TensorError> {
        let y = self.conv(x, &format!("{prefix}.conv"))?;
        let y = self.bn(y, &format!("{prefix}.bn"))?;
        if relu {
            self.tape.relu(y)
        } else {
            Ok(y)
        }
    }

    /// conv-BN-ReLU, conv-BN, plus identity or 1x1 projection skip, ReLU.
    pub fn res_block(&mut self, x: DiffTensor, prefix: &str) -> Result<DiffTensor, TensorError> {
        let y = self.conv_bn(x, &format!("{prefix}.a"), true)?;
        let y = self.conv_bn(y, &format!("{prefix}.b"), false)?;
        let skip_name = format!("{prefix}.skip");
        let skip = if self.bound.ids.contains_key(&skip_name) {
            self.conv(x, &skip_name)?
        } else {
            x
        };
        let s = self.tape.add(y, skip)?;
        self.tape.relu(s)
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample2(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        let s = self.tape.shape(x).to_vec();
        let (n, c, t, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let y = self.tape.reshape(x, &[n, c, t, h, 1, w, 1])?;
        let y = self.tape.broadcast(y, &[n, c, t, h, 2, w, 2])?;
        self.tape.reshape(y, &[n, c, t, 2 * h, 2 * w])
    }
}

/// Registers a conv weight `[cout, cin, k...]` with Kaiming init.
pub fn add_conv(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, k: [usize; 3], seed: u64) {
    let fan_in = cin * k[0] * k[1] * k[2];
    ps.insert(name, crate::tensor::kaiming_init(&[cout, cin, k[0], k[1], k[2]], fan_in, seed));
}

pub fn add_conv_bn(ps: &mut ParamSet, prefix: &str, cin: usize, cout: usize, k: [usize; 3], seed: u64) {
    add_conv(ps, &format!("{prefix}.conv"), cin, cout, k, seed);
    ps.add_bn(&format!("{prefix}.bn"), cout);
}

pub fn add_res_block(ps: &mut ParamSet, prefix: &str, cin: usize, cout: usize, k: [usize; 3], seed: u64) {
    add_conv_bn(ps, &format!("{prefix}.a"), cin, cout, k, seed);
    add_conv_bn(ps, &format!("{prefix}.b"), cout, cout, k, seed.wrapping_add(1));
    if cin != cout {
        add_conv(ps, &format!("{prefix}.skip"), cin, cout, [1, 1, 1], seed.wrapping_add(2));
    }
}
