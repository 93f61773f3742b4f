//! SGD with heavy-ball momentum.

use ndarray::{Array1, Array2};

use super::{Gradients, LayerWeights, Network};
use crate::{Error, Result};

/// `v <- momentum * v + g; p <- p - lr * v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Option<Gradients>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: None,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> Option<&Gradients> {
        self.velocity.as_ref()
    }

    /// Apply one update. Non-finite gradients leave `net` and the velocity
    /// untouched.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if let Some(what) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { what });
        }
        check_shapes(net, grads)?;
        let velocity = match self.velocity.take() {
            None => grads.clone(),
            Some(mut v) => {
                let mu = self.momentum;
                let blend2 = |v: &mut Array2<f64>, g: &Array2<f64>| {
                    v.zip_mut_with(g, |v, &g| *v = mu * *v + g)
                };
                let blend1 = |v: &mut Array1<f64>, g: &Array1<f64>| {
                    v.zip_mut_with(g, |v, &g| *v = mu * *v + g)
                };
                for (v, g) in v.layers.iter_mut().zip(&grads.layers) {
                    blend2(v, g);
                }
                for ((vg, vb), (gg, gb)) in v.batchnorm.iter_mut().zip(&grads.batchnorm) {
                    blend1(vg, gg);
                    blend1(vb, gb);
                }
                if let (Some(v), Some(g)) = (&mut v.input_adapter, &grads.input_adapter) {
                    blend2(v, g);
                }
                if let (Some(v), Some(g)) = (&mut v.output_adapter, &grads.output_adapter) {
                    blend2(v, g);
                }
                v
            }
        };
        let lr = self.lr;
        for (l, (w, v)) in net.layers.iter_mut().zip(&velocity.layers).enumerate() {
            match w {
                LayerWeights::Dense(w) => w.scaled_add(-lr, v),
                LayerWeights::RowNormalized(p) => {
                    p.raw_mut().scaled_add(-lr, v);
                    p.renormalize().map_err(|e| match e {
                        Error::DegenerateRow { row } => Error::invalid(format!(
                            "row {row} of layer {} collapsed to zero norm",
                            l + 1
                        )),
                        e => e,
                    })?;
                }
                LayerWeights::Factored(_) => unreachable!("rejected by check_shapes"),
            }
        }
        for (bn, (vg, vb)) in net.batchnorm.iter_mut().zip(&velocity.batchnorm) {
            bn.gamma.scaled_add(-lr, vg);
            bn.beta.scaled_add(-lr, vb);
        }
        if let (Some(p), Some(v)) = (&mut net.input_adapter, &velocity.input_adapter) {
            p.scaled_add(-lr, v);
        }
        if let (Some(p), Some(v)) = (&mut net.output_adapter, &velocity.output_adapter) {
            p.scaled_add(-lr, v);
        }
        self.velocity = Some(velocity);
        Ok(())
    }
}

fn check_shapes(net: &Network, grads: &Gradients) -> Result<()> {
    if net
        .layers
        .iter()
        .any(|w| matches!(w, LayerWeights::Factored(_)))
    {
        return Err(Error::invalid("factored weights cannot be trained"));
    }
    let mismatch = |what, expected, got| {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    };
    if grads.layers.len() != net.layers.len() {
        return mismatch("layer gradients", net.layers.len(), grads.layers.len());
    }
    if grads.batchnorm.len() != net.batchnorm.len() {
        return mismatch(
            "batch-norm gradients",
            net.batchnorm.len(),
            grads.batchnorm.len(),
        );
    }
    let d = net.width();
    if let Some(g) = grads.layers.iter().find(|g| g.dim() != (d, d)) {
        return mismatch("layer gradient", d * d, g.len());
    }
    if net.input_adapter.is_some() != grads.input_adapter.is_some()
        || net.output_adapter.is_some() != grads.output_adapter.is_some()
    {
        return Err(Error::invalid("adapter gradients do not match network"));
    }
    Ok(())
}
