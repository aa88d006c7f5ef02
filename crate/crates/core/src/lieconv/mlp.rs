//! The kernel network `g~` evaluated on pair embeddings.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// What the last layer of the kernel network emits per pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelOutput {
    /// A `c_out x c_in` matrix.
    Full { c_in: usize, c_out: usize },
    /// One weight per input channel.
    Depthwise { c_in: usize },
}

/// ReLU MLP from pair embeddings to kernel values.
///
/// The final layer is linear in the last hidden activations `z`, so with
/// `z' = [z, 1]` the kernel is `z' W`. For the full variant
/// `W[k * c_in + c, o]` is the weight from hidden unit `k` (the bias when
/// `k == H`) to kernel entry `(o, c)`.
#[derive(Clone, Debug)]
pub struct KernelMlp {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output: KernelOutput,
    layers: Vec<(ParamId, ParamId)>,
    out: ParamId,
}

impl KernelMlp {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden: &[usize],
        output: KernelOutput,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(crate::Error::Config(
                "kernel MLP needs at least one nonempty hidden layer".into(),
            ));
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for (l, &width) in hidden.iter().enumerate() {
            let w = store.add_uniform(format!("{prefix}.w{l}"), fan_in, width, rng)?;
            let b = store.add(format!("{prefix}.b{l}"), Tensor::zeros(&[1, width]))?;
            layers.push((w, b));
            fan_in = width;
        }
        let h1 = fan_in + 1;
        let out = match output {
            KernelOutput::Full { c_in, c_out } => {
                store.add_uniform(format!("{prefix}.out"), h1 * c_in, c_out, rng)?
            }
            KernelOutput::Depthwise { c_in } => {
                store.add_uniform(format!("{prefix}.out"), h1, c_in, rng)?
            }
        };
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            output,
            layers,
            out,
        })
    }

    /// Width of `z'` (last hidden layer plus the constant unit).
    pub fn augmented_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(0) + 1
    }

    pub fn output_param(&self) -> ParamId {
        self.out
    }

    /// Every parameter of the network, hidden layers first.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.layers.iter().flat_map(|&(w, b)| [w, b]).collect();
        ids.push(self.out);
        ids
    }

    /// Number of values the network emits per pair.
    pub fn output_len(&self) -> usize {
        match self.output {
            KernelOutput::Full { c_in, c_out } => c_in * c_out,
            KernelOutput::Depthwise { c_in } => c_in,
        }
    }

    /// `z' = [relu(... relu(a W0 + b0) ...), 1]` for every pair row of `emb`.
    pub fn hidden_features<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        emb: &Var<T>,
    ) -> Result<Var<T>> {
        if emb.cols() != self.input_dim {
            return Err(dim_err!(
                "kernel MLP expects {} input columns, got {}",
                self.input_dim,
                emb.cols()
            ));
        }
        let mut z = emb.clone();
        for &(w, b) in &self.layers {
            let pre = tape.affine(&z, &tape.param(store, w), &tape.param(store, b))?;
            z = tape.relu(&pre);
        }
        tape.append_ones_col(&z)
    }

    /// Untracked kernel value at one embedding: `c_out x c_in` for the full
    /// variant, `1 x c_in` for the depthwise one.
    pub fn eval<T: Real>(&self, store: &ParamStore<T>, a: &[T]) -> Result<Tensor<T>> {
        if a.len() != self.input_dim {
            return Err(dim_err!(
                "kernel MLP expects {} inputs, got {}",
                self.input_dim,
                a.len()
            ));
        }
        let mut z = Tensor::new(vec![1, a.len()], a.to_vec())?;
        for &(w, b) in &self.layers {
            let mut h = z.matmul(store.value(w))?;
            for (x, &bb) in h.data_mut().iter_mut().zip(store.value(b).data()) {
                *x = (*x + bb).max(T::zero());
            }
            z = h;
        }
        let mut zp = z.into_data();
        zp.push(T::one());
        let w = store.value(self.out);
        match self.output {
            KernelOutput::Full { c_in, c_out } => {
                let mut k = vec![T::zero(); c_out * c_in];
                for (kk, &zk) in zp.iter().enumerate() {
                    for c in 0..c_in {
                        let row = w.row(kk * c_in + c);
                        for o in 0..c_out {
                            k[o * c_in + c] += zk * row[o];
                        }
                    }
                }
                Tensor::new(vec![c_out, c_in], k)
            }
            KernelOutput::Depthwise { .. } => {
                Tensor::new(vec![1, zp.len()], zp)?.matmul(w)
            }
        }
    }
}
