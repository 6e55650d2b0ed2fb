use std::collections::BTreeMap;

use crate::models::ModelParams;
use crate::tensor::Tensor;
use crate::Scalar;

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: BTreeMap<String, Tensor<T>>,
    pub second: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: BTreeMap<String, Tensor<T>> = params
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
            .collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update, descending `grads`.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<(), TrainError> {
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(hyper.beta1);
    let b2 = T::of(hyper.beta2);
    let one = T::one();
    let corr1 = T::of(1.0 - hyper.beta1.powi(t));
    let corr2 = T::of(1.0 - hyper.beta2.powi(t));
    let alpha = T::of(hyper.alpha);
    let eps = T::of(hyper.epsilon);
    for (name, p) in params.tensors.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        let m = state.first.get_mut(name);
        let v = state.second.get_mut(name);
        let (Some(m), Some(v)) = (m, v) else {
            return Err(TrainError::Param(format!("no optimizer state for `{name}`")));
        };
        if g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape() {
            return Err(TrainError::Param(format!(
                "shape mismatch for `{name}`: param {:?}, grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / corr1;
            let v_hat = *vv / corr2;
            *pv = *pv - alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> ModelParams<f64> {
        ModelParams {
            tensors: [("p".to_string(), Tensor::scalar(v))].into(),
        }
    }

    fn grads(v: f64) -> BTreeMap<String, Tensor<f64>> {
        [("p".to_string(), Tensor::scalar(v))].into()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_params(1.5);
        let mut st = AdamState::new(&p);
        for _ in 0..20 {
            adam_step(&mut p, &grads(0.0), &mut st, &AdamHyper::default()).unwrap();
        }
        assert_eq!(p.tensors["p"].item(), 1.5);
        assert_eq!(st.step, 20);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let hyper = AdamHyper {
            alpha: 0.01,
            ..AdamHyper::default()
        };
        adam_step(&mut p, &grads(3.0), &mut st, &hyper).unwrap();
        assert!((p.tensors["p"].item() + 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimises_a_parabola() {
        let hyper = AdamHyper {
            alpha: 0.3,
            ..AdamHyper::default()
        };
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        for _ in 0..50 {
            let x = p.tensors["p"].item();
            adam_step(&mut p, &grads(2.0 * (x - 3.0)), &mut st, &hyper).unwrap();
        }
        let x = p.tensors["p"].item();
        assert!((x - 3.0).abs() < 0.5, "ended at {x}");
    }
}
