use rand::Rng;

use crate::models::{forward, ModelError, NetworkSpec, ParamVars};
use crate::tensor::{Tape, Tensor, Var};
use crate::Scalar;

use super::TrainError;

/// `t * x + (1 - t) * y`
pub fn interpolate<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, t: T) -> Result<Tensor<T>, TrainError> {
    Ok(x.zip_map(y, "interpolate", |a, b| t * a + (T::one() - t) * b)?)
}

/// Row-wise interpolation with one mixing weight per leading-axis row.
pub fn interpolate_rows<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    t: &[T],
) -> Result<Tensor<T>, TrainError> {
    if x.shape() != y.shape() || x.shape().first() != Some(&t.len()) {
        return Err(TrainError::Param(format!(
            "cannot interpolate {:?} and {:?} with {} weights",
            x.shape(),
            y.shape(),
            t.len()
        )));
    }
    let row = x.numel() / t.len();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let w = t[i / row];
        *v = w * *v + (T::one() - w) * y.data()[i];
    }
    Ok(out)
}

/// A critic evaluated on a tape: batch in, one score per row out.
pub trait Critic<T: Scalar, R: Rng + ?Sized> {
    fn score(&mut self, tape: &Tape<T>, x: Var, rng: &mut R) -> Result<Var, ModelError>;
}

impl<T, R, F> Critic<T, R> for F
where
    T: Scalar,
    R: Rng + ?Sized,
    F: FnMut(&Tape<T>, Var, &mut R) -> Result<Var, ModelError>,
{
    fn score(&mut self, tape: &Tape<T>, x: Var, rng: &mut R) -> Result<Var, ModelError> {
        self(tape, x, rng)
    }
}

/// A [`NetworkSpec`] critic whose parameters are already on the tape.
pub struct NetworkCritic<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a ParamVars,
}

impl<T: Scalar, R: Rng + ?Sized> Critic<T, R> for NetworkCritic<'_> {
    fn score(&mut self, tape: &Tape<T>, x: Var, rng: &mut R) -> Result<Var, ModelError> {
        let y = forward(tape, self.spec, self.params, x, rng)?;
        let rows = tape.shape(y)[0];
        Ok(tape.reshape(y, &[rows])?)
    }
}

/// The regularised Wasserstein critic loss and its two terms.
#[derive(Clone, Copy, Debug)]
pub struct CriticLoss {
    pub total: Var,
    /// `mean(D(fake)) - mean(D(real))`
    pub wasserstein: Var,
    /// `mean((||dD(m)/dm|| - 1)^2)`, before weighting by lambda.
    pub penalty: Var,
}

/// `mean(D(x_fake)) - mean(D(x_real)) + lambda * mean((||grad_m D(m)||_2 - 1)^2)`
/// with `m = t x_fake + (1 - t) x_real` and `t ~ U[0, 1]` drawn per row.
/// Differentiable with respect to the critic parameters, penalty included.
pub fn critic_loss_wgan_gp<T: Scalar, R: Rng + ?Sized>(
    tape: &Tape<T>,
    critic: &mut impl Critic<T, R>,
    x_fake: &Tensor<T>,
    x_real: &Tensor<T>,
    lambda_gp: f64,
    rng: &mut R,
) -> Result<CriticLoss, TrainError> {
    if !(lambda_gp >= 0.0) {
        return Err(TrainError::Param(format!("lambda_gp {lambda_gp} must be >= 0")));
    }
    if x_fake.shape() != x_real.shape() || x_fake.shape().is_empty() {
        return Err(TrainError::Param(format!(
            "fake batch {:?} and real batch {:?} differ",
            x_fake.shape(),
            x_real.shape()
        )));
    }
    let rows = x_fake.shape()[0];
    let t: Vec<T> = (0..rows).map(|_| T::of(rng.random_range(0.0..=1.0))).collect();
    let mixed = interpolate_rows(x_fake, x_real, &t)?;

    let fake = tape.constant(x_fake.clone());
    let real = tape.constant(x_real.clone());
    let d_fake = critic.score(tape, fake, rng)?;
    let d_real = critic.score(tape, real, rng)?;
    let wasserstein = tape.sub(tape.mean(d_fake)?, tape.mean(d_real)?)?;

    let m = tape.param(mixed);
    let grad_m = tape.input_gradient(m, |tp, m| critic.score(tp, m, rng))?;
    let norms = tape.l2_norm_rows(grad_m)?;
    let dev = tape.offset(norms, -T::one());
    let penalty = tape.mean(tape.square(dev))?;

    let weighted = tape.scale(penalty, T::of(lambda_gp));
    let total = tape.add(wasserstein, weighted)?;
    Ok(CriticLoss {
        total,
        wasserstein,
        penalty,
    })
}

/// `-mean(D(x_fake))`
pub fn generator_loss_wgan<T: Scalar, R: Rng + ?Sized>(
    tape: &Tape<T>,
    critic: &mut impl Critic<T, R>,
    x_fake: Var,
    rng: &mut R,
) -> Result<Var, TrainError> {
    let scores = critic.score(tape, x_fake, rng)?;
    Ok(tape.neg(tape.mean(scores)?))
}

/// Minimax value `mean(log D(x)) + mean(log(1 - D(G(z))))` of the original
/// GAN game, for diagnostics only.
pub fn vanilla_gan_value(d_real: &[f64], d_fake: &[f64]) -> Result<f64, TrainError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(TrainError::Param("empty batch".into()));
    }
    if let Some(v) = d_real
        .iter()
        .chain(d_fake)
        .find(|v| !(**v > 0.0 && **v < 1.0))
    {
        return Err(TrainError::Domain(format!("probability {v} outside (0, 1)")));
    }
    let real = d_real.iter().map(|p| p.ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok(real + fake)
}

/// Differentiable form of [`vanilla_gan_value`] over probability batches.
pub fn vanilla_gan_loss<T: Scalar>(tape: &Tape<T>, d_real: Var, d_fake: Var) -> Result<Var, TrainError> {
    let real = tape.mean(tape.ln(d_real)?)?;
    let one_minus = tape.offset(tape.neg(d_fake), T::one());
    let fake = tape.mean(tape.ln(one_minus)?)?;
    Ok(tape.add(real, fake)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: usize, len: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[rows, len, 1], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn interpolation_endpoints() {
        let x = Tensor::<f64>::from_f64(&[1], &[2.0]).unwrap();
        let y = Tensor::<f64>::from_f64(&[1], &[4.0]).unwrap();
        assert_eq!(interpolate(&x, &y, 1.0).unwrap().item(), 2.0);
        assert_eq!(interpolate(&x, &y, 0.0).unwrap().item(), 4.0);
        assert_eq!(interpolate(&x, &y, 0.5).unwrap().item(), 3.0);
        let z = Tensor::<f64>::zeros(&[2]);
        assert!(interpolate(&x, &z, 0.5).is_err());
    }

    #[test]
    fn zero_critic_loss_is_lambda() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut zero = |tp: &Tape<f64>, x: Var, _: &mut ChaCha8Rng| {
            let s = tp.sum_per_row(x)?;
            Ok(tp.scale(s, 0.0))
        };
        let loss =
            critic_loss_wgan_gp(&tape, &mut zero, &batch(4, 8, 1), &batch(4, 8, 2), 10.0, &mut rng)
                .unwrap();
        assert_eq!(tape.value(loss.total).item(), 10.0);
        assert_eq!(tape.value(loss.wasserstein).item(), 0.0);
    }

    #[test]
    fn unit_norm_linear_critic_has_zero_penalty() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // w = (0.6, 0.8, 0, ...) has unit norm
        let mut w = vec![0.0; 8];
        w[0] = 0.6;
        w[1] = 0.8;
        let w = tape.constant(Tensor::from_f64(&[8, 1], &w).unwrap());
        let mut linear = |tp: &Tape<f64>, x: Var, _: &mut ChaCha8Rng| {
            let rows = tp.shape(x)[0];
            let flat = tp.reshape(x, &[rows, 8])?;
            let y = tp.matmul(flat, w)?;
            Ok(tp.reshape(y, &[rows])?)
        };
        let loss =
            critic_loss_wgan_gp(&tape, &mut linear, &batch(4, 8, 1), &batch(4, 8, 2), 10.0, &mut rng)
                .unwrap();
        assert_eq!(tape.value(loss.penalty).item(), 0.0);
    }

    #[test]
    fn negative_lambda_rejected() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut zero = |tp: &Tape<f64>, x: Var, _: &mut ChaCha8Rng| Ok(tp.sum_per_row(x)?);
        let err = critic_loss_wgan_gp(&tape, &mut zero, &batch(2, 4, 1), &batch(2, 4, 2), -1.0, &mut rng);
        assert!(matches!(err, Err(TrainError::Param(_))));
    }

    #[test]
    fn generator_loss_of_constant_critic() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut constant = |tp: &Tape<f64>, x: Var, _: &mut ChaCha8Rng| {
            let s = tp.sum_per_row(x)?;
            Ok(tp.offset(tp.scale(s, 0.0), 2.5))
        };
        let x = tape.constant(batch(3, 4, 0));
        let l = generator_loss_wgan(&tape, &mut constant, x, &mut rng).unwrap();
        assert_eq!(tape.value(l).item(), -2.5);
    }

    #[test]
    fn vanilla_value() {
        let v = vanilla_gan_value(&[0.5, 0.5], &[0.5]).unwrap();
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v + 1.3863).abs() < 1e-4);
        let near_opt = vanilla_gan_value(&[1.0 - 1e-9], &[1e-9]).unwrap();
        assert!(near_opt.abs() < 1e-8);
        let collapse = vanilla_gan_value(&[0.5], &[1.0 - 1e-12]).unwrap();
        assert!(collapse < -20.0);
        assert!(matches!(
            vanilla_gan_value(&[1.0], &[0.5]),
            Err(TrainError::Domain(_))
        ));
    }

    #[test]
    fn vanilla_loss_matches_value() {
        let tape = Tape::<f64>::new();
        let r = tape.constant(Tensor::from_f64(&[3], &[0.9, 0.6, 0.7]).unwrap());
        let f = tape.constant(Tensor::from_f64(&[2], &[0.2, 0.4]).unwrap());
        let l = vanilla_gan_loss(&tape, r, f).unwrap();
        let v = vanilla_gan_value(&[0.9, 0.6, 0.7], &[0.2, 0.4]).unwrap();
        assert!((tape.value(l).item() - v).abs() < 1e-12);
    }
}
