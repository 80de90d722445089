//! Central-difference gradient checking for graph builders.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lstm_cell, Graph, LstmVars, Tensor, Var};
use crate::error::{Error, Result};

/// Builds an output from one graph variable per input tensor.
pub type Build = dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var> + Sync;

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Scalar loss = Σ out ⊙ probe for a fixed random probe, so every output
/// entry contributes to the checked gradient.
pub fn probed_loss(g: &mut Graph<'_>, out: Var, probe_seed: u64) -> Result<Var> {
    let dims = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let probe = g.constant(Tensor::uniform(&dims, -1.0, 1.0, &mut rng));
    let weighted = g.mul(out, probe)?;
    g.sum(weighted)
}

fn loss_at(build: &Build, inputs: &[Tensor], probe_seed: u64) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param_owned(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let loss = probed_loss(&mut g, out, probe_seed)?;
    Ok(g.scalar_value(loss))
}

/// Relative error |a − n| / max(|a|, |n|, 1e-3); the floor keeps entries
/// whose true gradient is near zero from dominating.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative error between reverse-mode and central differences over
/// every entry of every input.
pub fn max_fd_error(build: &Build, inputs: &[Tensor], h: f64) -> Result<f64> {
    let probe_seed = 99;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param_owned(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let loss = probed_loss(&mut g, out, probe_seed)?;
    g.backward(loss)?;
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g
            .grad(*v)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for (i, a) in analytic.iter().enumerate() {
            let mut shifted = inputs.to_vec();
            shifted[k].data_mut()[i] += h;
            let plus = loss_at(build, &shifted, probe_seed)?;
            shifted[k].data_mut()[i] -= 2.0 * h;
            let minus = loss_at(build, &shifted, probe_seed)?;
            worst = worst.max(relative_error(*a, (plus - minus) / (2.0 * h)));
        }
    }
    if !worst.is_finite() {
        return Err(Error::NumericFault("gradient check produced a non-finite error"));
    }
    Ok(worst)
}

/// One differentiable op with its input generator and tolerance.
pub struct OpCase {
    pub name: String,
    pub build: Box<Build>,
    pub make: Box<dyn Fn(u64) -> Vec<Tensor> + Sync>,
    pub tol: f64,
}

impl OpCase {
    fn new(
        name: impl Into<String>,
        build: impl Fn(&mut Graph<'_>, &[Var]) -> Result<Var> + Sync + 'static,
        make: impl Fn(u64) -> Vec<Tensor> + Sync + 'static,
        tol: f64,
    ) -> Self {
        Self {
            name: name.into(),
            build: Box::new(build),
            make: Box::new(make),
            tol,
        }
    }

    pub fn max_error(&self, seed: u64) -> Result<f64> {
        max_fd_error(&*self.build, &(self.make)(seed), FD_STEP)
    }
}

pub fn rand_t(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(dims, -1.0, 1.0, &mut rng)
}

fn positive_t(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(dims, 0.5, 2.0, &mut rng)
}

/// Away from the kink at zero so finite differences stay valid.
fn off_kink_t(dims: &[usize], seed: u64) -> Tensor {
    let mut t = rand_t(dims, seed);
    for x in t.data_mut() {
        *x += 0.2 * x.signum();
    }
    t
}

/// Every graph op, plus a three-step LSTM chain and a three-layer composite.
pub fn op_cases() -> Vec<OpCase> {
    let smooth = 1e-5;
    let kink = 1e-4;
    let mut cases = vec![
        OpCase::new(
            "matmul",
            |g, v| g.matmul(v[0], v[1]),
            |s| vec![rand_t(&[3, 4], s), rand_t(&[4, 2], s + 100)],
            smooth,
        ),
        OpCase::new(
            "matmul_batched",
            |g, v| g.matmul(v[0], v[1]),
            |s| vec![rand_t(&[2, 3, 4], s), rand_t(&[4, 5], s + 100)],
            smooth,
        ),
        OpCase::new(
            "add_broadcast",
            |g, v| g.add(v[0], v[1]),
            |s| vec![rand_t(&[2, 3, 4], s), rand_t(&[4], s + 1)],
            smooth,
        ),
        OpCase::new(
            "sub",
            |g, v| g.sub(v[0], v[1]),
            |s| vec![rand_t(&[3, 4], s), rand_t(&[3, 4], s + 1)],
            smooth,
        ),
        OpCase::new(
            "mul_broadcast",
            |g, v| g.mul(v[0], v[1]),
            |s| vec![rand_t(&[2, 3, 4], s), rand_t(&[3, 4], s + 1)],
            smooth,
        ),
        OpCase::new("mul_self", |g, v| g.mul(v[0], v[0]), |s| vec![rand_t(&[5], s)], smooth),
        OpCase::new("scale", |g, v| g.scale(v[0], -2.5), |s| vec![rand_t(&[4], s)], smooth),
        OpCase::new("add_scalar", |g, v| g.add_scalar(v[0], 0.3), |s| vec![rand_t(&[4], s)], smooth),
        OpCase::new("tanh", |g, v| g.tanh(v[0]), |s| vec![rand_t(&[3, 3], s)], smooth),
        OpCase::new("relu", |g, v| g.relu(v[0]), |s| vec![off_kink_t(&[3, 3], s)], kink),
        OpCase::new("sigmoid", |g, v| g.sigmoid(v[0]), |s| vec![rand_t(&[3, 3], s)], smooth),
        OpCase::new("exp", |g, v| g.exp(v[0]), |s| vec![rand_t(&[3, 3], s)], smooth),
        OpCase::new("log", |g, v| g.log(v[0]), |s| vec![positive_t(&[3, 3], s)], smooth),
        OpCase::new("square", |g, v| g.square(v[0]), |s| vec![rand_t(&[3, 3], s)], smooth),
        OpCase::new("softmax", |g, v| g.softmax(v[0]), |s| vec![rand_t(&[2, 3, 4], s)], smooth),
        OpCase::new("log_softmax", |g, v| g.log_softmax(v[0]), |s| vec![rand_t(&[3, 5], s)], smooth),
        OpCase::new("sum", |g, v| g.sum(v[0]), |s| vec![rand_t(&[3, 2], s)], smooth),
        OpCase::new("mean", |g, v| g.mean(v[0]), |s| vec![rand_t(&[3, 2], s)], smooth),
        OpCase::new(
            "concat",
            |g, v| g.concat(&[v[0], v[1], v[0]]),
            |s| vec![rand_t(&[2, 3], s), rand_t(&[2, 2], s + 7)],
            smooth,
        ),
        OpCase::new(
            "mask_fill",
            |g, v| {
                let m = g.mask_fill(v[0], &[true, false, false, true, false, true], -1e9)?;
                g.softmax(m)
            },
            |s| vec![rand_t(&[2, 3], s)],
            smooth,
        ),
        OpCase::new(
            "reshape",
            |g, v| {
                let r = g.reshape(v[0], &[3, 2])?;
                g.tanh(r)
            },
            |s| vec![rand_t(&[2, 3], s)],
            smooth,
        ),
        OpCase::new(
            "clamp",
            |g, v| g.clamp(v[0], -0.5, 0.5),
            |s| {
                let mut t = rand_t(&[8], s);
                for x in t.data_mut() {
                    if (x.abs() - 0.5).abs() < 0.05 {
                        *x *= 0.5;
                    }
                }
                vec![t]
            },
            kink,
        ),
        OpCase::new(
            "minimum",
            |g, v| g.minimum(v[0], v[1]),
            |s| {
                let a = rand_t(&[6], s);
                let mut b = rand_t(&[6], s + 3);
                for (x, y) in a.data().iter().zip(b.data_mut()) {
                    if (x - *y).abs() < 0.05 {
                        *y += 0.2;
                    }
                }
                vec![a, b]
            },
            kink,
        ),
        OpCase::new(
            "lstm_chain_3",
            |g, v| {
                let p = LstmVars {
                    w_input: v[0],
                    w_hidden: v[1],
                    bias: v[2],
                };
                let (mut h, mut c) = (v[3], v[4]);
                for t in 0..3 {
                    let x = g.slice(v[5], 0, t, 1)?;
                    (h, c) = lstm_cell(g, x, h, c, &p)?;
                }
                Ok(h)
            },
            |s| {
                let (d_in, hid) = (3, 4);
                vec![
                    rand_t(&[d_in, 4 * hid], s),
                    rand_t(&[hid, 4 * hid], s + 1),
                    rand_t(&[4 * hid], s + 2),
                    rand_t(&[1, hid], s + 3),
                    rand_t(&[1, hid], s + 4),
                    rand_t(&[3, d_in], s + 5),
                ]
            },
            1e-3,
        ),
        OpCase::new(
            "mlp_3_layer",
            |g, v| {
                let h1 = g.matmul(v[0], v[1])?;
                let h1 = g.add(h1, v[2])?;
                let h1 = g.tanh(h1)?;
                let h2 = g.matmul(h1, v[3])?;
                let h2 = g.sigmoid(h2)?;
                let h3 = g.matmul(h2, v[4])?;
                g.log_softmax(h3)
            },
            |s| {
                vec![
                    rand_t(&[4, 3], s),
                    rand_t(&[3, 5], s + 10),
                    rand_t(&[5], s + 20),
                    rand_t(&[5, 4], s + 30),
                    rand_t(&[4, 3], s + 40),
                ]
            },
            smooth,
        ),
    ];
    for axis in 0..3 {
        cases.push(OpCase::new(
            format!("sum_axis_{axis}"),
            move |g, v| g.sum_axis(v[0], axis),
            |s| vec![rand_t(&[2, 3, 4], s)],
            smooth,
        ));
        cases.push(OpCase::new(
            format!("slice_{axis}"),
            move |g, v| g.slice(v[0], axis, 1, 1),
            |s| vec![rand_t(&[3, 3, 3], s)],
            smooth,
        ));
        cases.push(OpCase::new(
            format!("expand_{axis}"),
            move |g, v| g.expand(v[0], axis, 3),
            |s| vec![rand_t(&[2, 2], s)],
            smooth,
        ));
    }
    cases
}
