//! Central-difference gradients, for checking backpropagation.

use ndarray::Array2;

use super::{ForwardTrace, LayerWeights, Mode, Network};
use crate::{Error, Result};

/// Largest `d * d * L` accepted by [`finite_difference_grad`].
pub const GRADCHECK_CAP: usize = 100_000;

/// `dE/dW` (or `dE/dV` in row-normalized mode) for every hidden layer by
/// central differences. Batch-norm runs in training mode.
pub fn finite_difference_grad<F>(
    net: &Network,
    batch: &Array2<f64>,
    loss: F,
    step: f64,
) -> Result<Vec<Array2<f64>>>
where
    F: Fn(&ForwardTrace) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::invalid(format!(
            "finite-difference step must be in [1e-7, 1e-3], got {step}"
        )));
    }
    let d = net.width();
    let entries = d * d * net.depth();
    if entries > GRADCHECK_CAP {
        return Err(Error::GradCheckCap {
            entries,
            cap: GRADCHECK_CAP,
        });
    }
    let mut probe = net.clone();
    let eval = |p: &Network| -> Result<f64> { loss(&p.forward(batch, Mode::Train)?) };
    let mut grads = Vec::with_capacity(net.depth());
    for l in 0..net.depth() {
        let mut g = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                let original = perturb(&mut probe.layers[l], i, j, None)?;
                perturb(&mut probe.layers[l], i, j, Some(original + step))?;
                let plus = eval(&probe)?;
                perturb(&mut probe.layers[l], i, j, Some(original - step))?;
                let minus = eval(&probe)?;
                perturb(&mut probe.layers[l], i, j, Some(original))?;
                g[[i, j]] = (plus - minus) / (2.0 * step);
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Set (or just read, with `None`) entry `(i, j)` of the trainable matrix.
fn perturb(w: &mut LayerWeights, i: usize, j: usize, value: Option<f64>) -> Result<f64> {
    match w {
        LayerWeights::Dense(m) => {
            let old = m[[i, j]];
            if let Some(v) = value {
                m[[i, j]] = v;
            }
            Ok(old)
        }
        LayerWeights::RowNormalized(p) => {
            let old = p.raw()[[i, j]];
            if let Some(v) = value {
                p.raw_mut()[[i, j]] = v;
                p.renormalize()?;
            }
            Ok(old)
        }
        LayerWeights::Factored(_) => Err(Error::invalid(
            "finite differences need dense or row-normalized weights",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpn::{gpn_constants, RootSelection};
    use crate::network::loss::softmax_cross_entropy;
    use crate::network::{init_network, GradientMode, NetworkConfig, WeightMode};
    use crate::quadrature::default_rule;
    use crate::rng::SeedStream;
    use crate::Activation;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeedStream::new(seed).derive("batch", 0);
        Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
    }

    fn quadratic(trace: &ForwardTrace) -> Result<f64> {
        Ok(0.5 * trace.output.iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn quadratic_loss_on_linear_net_is_exact() {
        let cfg = NetworkConfig::new(5, 3, Activation::Identity);
        let net = init_network(&cfg, &mut SeedStream::new(1).derive("w", 0)).unwrap();
        let x = gaussian(4, 5, 2);
        let trace = net.forward(&x, Mode::Train).unwrap();
        let back = net
            .backward(&trace, &trace.output, GradientMode::Full)
            .unwrap();
        let fd = finite_difference_grad(&net, &x, quadratic, 1e-4).unwrap();
        for (a, f) in back.layers.iter().zip(&fd) {
            let a = a.grad_w.as_ref().unwrap();
            assert!((a - f).iter().all(|e| e.abs() < 1e-8));
        }
    }

    fn max_rel_err(analytic: &[Array2<f64>], fd: &[Array2<f64>]) -> f64 {
        analytic
            .iter()
            .zip(fd)
            .map(|(a, f)| crate::network::frobenius(&(a - f)) / crate::network::frobenius(a))
            .fold(0.0, f64::max)
    }

    #[test]
    fn backward_matches_finite_differences_for_gpn_nets() {
        let labels = [0, 3, 5, 7, 1];
        for act in Activation::builtins() {
            for mode in [WeightMode::HaarOrthogonal, WeightMode::RowNormalized] {
                let c = gpn_constants(&act, &default_rule(), RootSelection::MatchTable).unwrap();
                let cfg = NetworkConfig::new(8, 3, act.clone())
                    .with_gpn(Some(c))
                    .with_weight_mode(mode);
                let net = init_network(&cfg, &mut SeedStream::new(11).derive("w", 0)).unwrap();
                let x = gaussian(5, 8, 12);
                let trace = net.forward(&x, Mode::Train).unwrap();
                // kinks make central differences unreliable next to zero
                if act.kinked() && trace.hs.iter().any(|h| h.iter().any(|v| v.abs() < 1e-3)) {
                    continue;
                }
                let (_, g) = softmax_cross_entropy(&trace.output, &labels).unwrap();
                let back = net.backward(&trace, &g, GradientMode::Full).unwrap();
                let analytic = back.gradients().unwrap().layers;
                let fd = finite_difference_grad(
                    &net,
                    &x,
                    |t| Ok(softmax_cross_entropy(&t.output, &labels)?.0),
                    1e-5,
                )
                .unwrap();
                let err = max_rel_err(&analytic, &fd);
                assert!(err < 1e-4, "{} {mode:?}: {err:e}", act.name());
            }
        }
    }

    #[test]
    fn halving_the_step_quarters_the_error() {
        let act = Activation::Tanh;
        let c = gpn_constants(&act, &default_rule(), RootSelection::MatchTable).unwrap();
        let cfg = NetworkConfig::new(4, 2, act).with_gpn(Some(c));
        let net = init_network(&cfg, &mut SeedStream::new(3).derive("w", 0)).unwrap();
        let x = gaussian(3, 4, 4);
        let cubic = |t: &ForwardTrace| Ok(t.output.iter().map(|v| v * v * v).sum::<f64>());
        let trace = net.forward(&x, Mode::Train).unwrap();
        let g = trace.output.mapv(|v| 3.0 * v * v);
        let analytic = net
            .backward(&trace, &g, GradientMode::Full)
            .unwrap()
            .gradients()
            .unwrap()
            .layers;
        let e1 = max_rel_err(
            &analytic,
            &finite_difference_grad(&net, &x, cubic, 1e-3).unwrap(),
        );
        let e2 = max_rel_err(
            &analytic,
            &finite_difference_grad(&net, &x, cubic, 5e-4).unwrap(),
        );
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn batchnorm_gradients_match() {
        let act = Activation::Tanh;
        let c = gpn_constants(&act, &default_rule(), RootSelection::MatchTable).unwrap();
        let cfg = NetworkConfig::new(6, 2, act)
            .with_gpn(Some(c))
            .with_batchnorm(true);
        let net = init_network(&cfg, &mut SeedStream::new(5).derive("w", 0)).unwrap();
        let x = gaussian(6, 6, 6);
        let labels = [0, 1, 2, 3, 4, 5];
        let trace = net.forward(&x, Mode::Train).unwrap();
        let (_, g) = softmax_cross_entropy(&trace.output, &labels).unwrap();
        let analytic = net
            .backward(&trace, &g, GradientMode::Full)
            .unwrap()
            .gradients()
            .unwrap()
            .layers;
        let fd = finite_difference_grad(
            &net,
            &x,
            |t| Ok(softmax_cross_entropy(&t.output, &labels)?.0),
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&analytic, &fd) < 1e-4);
    }

    #[test]
    fn limits() {
        let cfg = NetworkConfig::new(100, 11, Activation::Tanh);
        let net = init_network(&cfg, &mut SeedStream::new(1).derive("w", 0)).unwrap();
        let x = Array2::zeros((1, 100));
        assert!(matches!(
            finite_difference_grad(&net, &x, quadratic, 1e-5),
            Err(Error::GradCheckCap {
                entries: 110_000,
                ..
            })
        ));
        let small = init_network(
            &NetworkConfig::new(2, 1, Activation::Tanh),
            &mut SeedStream::new(1).derive("w", 0),
        )
        .unwrap();
        assert!(finite_difference_grad(&small, &Array2::zeros((1, 2)), quadratic, 1e-2).is_err());
    }
}
