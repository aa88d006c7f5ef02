use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// Moment buffers and hyperparameters of the Adam optimizer.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments for parameters of the given shapes, with
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new<'a>(lr: T, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let m: Vec<_> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn for_store(lr: T, store: &ParamStore<T>) -> Self {
        Self::new(lr, store.iter().map(|(_, p)| p.value.shape()))
    }
}

/// One bias-corrected Adam update of `params` from `grads`.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(dim_err!(
            "adam: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(dim_err!(
                "adam: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::one() - state.beta1.powi(t);
    let bc2 = T::one() - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let pd = p.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i];
            let mi = &mut m.data_mut()[i];
            *mi = b1 * *mi + (T::one() - b1) * gi;
            let vi = &mut v.data_mut()[i];
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Applies [`adam_step`] to every parameter of a store using its accumulated gradients.
pub fn adam_step_store<T: Real>(store: &mut ParamStore<T>, state: &mut AdamState<T>) -> Result<()> {
    let grads: Vec<Tensor<T>> = store.iter().map(|(_, p)| p.grad.clone()).collect();
    let ids: Vec<_> = store.ids().collect();
    let mut values: Vec<Tensor<T>> = ids.iter().map(|&id| store.value(id).clone()).collect();
    {
        let mut refs: Vec<&mut Tensor<T>> = values.iter_mut().collect();
        let grefs: Vec<&Tensor<T>> = grads.iter().collect();
        adam_step(&mut refs, &grefs, state)?;
    }
    for (id, v) in ids.into_iter().zip(values) {
        *store.value_mut(id) = v;
    }
    Ok(())
}
