//! Link-centric message passing network used as actor and critic.
//!
//! Every directed link carries a hidden vector, initialized with the link's
//! input features padded with zeros. For a fixed number of rounds each link
//! sends `selu(M [h_self ; h_succ] + b)` to every successor link (a link
//! starting where it ends); incoming messages are summed and the hidden state
//! is replaced by `selu(U [msg ; h] + c)`. A two-layer readout over the sum of
//! all hidden states produces one scalar: a logit for the actor, a state value
//! for the critic.
//!
//! Gradients are computed by an explicit backward pass over the recorded
//! forward activations ([`GnnTape`]).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{ActionGraph, EnvState, NUM_FEATURES};
use crate::network::LinkGraph;

pub const HIDDEN_STATE: usize = 20;
pub const READOUT_UNITS: usize = 20;
pub const MESSAGE_STEPS: usize = 5;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

#[inline]
fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Fully connected layer, weights row-major `out x inp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out: usize,
    pub inp: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            weight: vec![0.0; out * inp],
            bias: vec![0.0; out],
        }
    }

    /// LeCun-normal weights (variance `gain^2 / fan_in`), zero bias.
    pub fn lecun<R: Rng + ?Sized>(out: usize, inp: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (inp as f64).sqrt();
        let weight = (0..out * inp)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        Self {
            out,
            inp,
            weight,
            bias: vec![0.0; out],
        }
    }

    /// `y = W[:, cols] x` over a column range of the weight matrix, no bias.
    #[inline]
    fn matvec_cols(&self, col0: usize, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inp + col0..o * self.inp + col0 + x.len()];
            *yo = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    /// `dx += W[:, cols]^T dy`.
    #[inline]
    fn matvec_t_cols(&self, col0: usize, dy: &[f64], dx: &mut [f64]) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weight[o * self.inp + col0..o * self.inp + col0 + dx.len()];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
    }

    /// `dW[:, cols] += dy x^T`.
    #[inline]
    fn outer_acc(grad: &mut Dense, col0: usize, dy: &[f64], x: &[f64]) {
        let inp = grad.inp;
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.weight[o * inp + col0..o * inp + col0 + x.len()];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }
}

/// One message passing network with its readout head.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnNet {
    pub message: Dense,
    pub update: Dense,
    pub readout_hidden: Dense,
    pub readout_out: Dense,
}

/// Recorded forward activations of one [`GnnNet`] evaluation.
#[derive(Debug, Clone)]
pub struct GnnTape {
    num_links: usize,
    /// Hidden states before each round and after the last, `L x H` each.
    hidden: Vec<Vec<f64>>,
    /// Message pre-activations per round, `E x H`.
    pre_message: Vec<Vec<f64>>,
    /// Aggregated messages per round, `L x H`.
    aggregate: Vec<Vec<f64>>,
    /// Update pre-activations per round, `L x H`.
    pre_update: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    pre_readout: Vec<f64>,
    readout: Vec<f64>,
    pub output: f64,
}

impl GnnTape {
    /// Final per-link hidden states, row-major `L x H`.
    pub fn final_hidden(&self) -> &[f64] {
        self.hidden.last().expect("at least the initial state")
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// Every Selu input of the evaluation in a fixed order. The output is
    /// differentiable wherever none of them is zero.
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre_message
            .iter()
            .chain(&self.pre_update)
            .flatten()
            .chain(&self.pre_readout)
            .copied()
    }
}

impl GnnNet {
    pub fn zeros(hidden: usize, readout: usize) -> Self {
        Self {
            message: Dense::zeros(hidden, 2 * hidden),
            update: Dense::zeros(hidden, 2 * hidden),
            readout_hidden: Dense::zeros(readout, hidden),
            readout_out: Dense::zeros(1, readout),
        }
    }

    /// Variance-scaling init suited to SELU. The output layer starts small
    /// so initial logits are near uniform.
    pub fn init<R: Rng + ?Sized>(hidden: usize, readout: usize, rng: &mut R) -> Self {
        assert!(hidden >= NUM_FEATURES, "hidden state must hold the input features");
        Self {
            message: Dense::lecun(hidden, 2 * hidden, 1.0, rng),
            update: Dense::lecun(hidden, 2 * hidden, 1.0, rng),
            readout_hidden: Dense::lecun(readout, hidden, 1.0, rng),
            readout_out: Dense::lecun(1, readout, 0.1, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.message.out
    }

    pub fn layers(&self) -> [(&'static str, &Dense); 4] {
        [
            ("message", &self.message),
            ("update", &self.update),
            ("readout_hidden", &self.readout_hidden),
            ("readout_out", &self.readout_out),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut Dense); 4] {
        [
            ("message", &mut self.message),
            ("update", &mut self.update),
            ("readout_hidden", &mut self.readout_hidden),
            ("readout_out", &mut self.readout_out),
        ]
    }

    /// Forward pass, keeping every activation needed for [`Self::backward`].
    pub fn forward(
        &self,
        graph: &LinkGraph,
        features: &[[f64; NUM_FEATURES]],
        steps: usize,
    ) -> GnnTape {
        let h = self.hidden_size();
        let l = graph.num_links();
        assert_eq!(features.len(), l, "one feature row per link");
        let edges = graph.edges();

        let mut state = vec![0.0; l * h];
        for (row, f) in state.chunks_exact_mut(h).zip(features) {
            row[..NUM_FEATURES].copy_from_slice(f);
        }
        let mut tape = GnnTape {
            num_links: l,
            hidden: Vec::with_capacity(steps + 1),
            pre_message: Vec::with_capacity(steps),
            aggregate: Vec::with_capacity(steps),
            pre_update: Vec::with_capacity(steps),
            pooled: vec![0.0; h],
            pre_readout: vec![0.0; self.readout_hidden.out],
            readout: vec![0.0; self.readout_hidden.out],
            output: 0.0,
        };
        let mut own = vec![0.0; l * h];
        let mut succ = vec![0.0; l * h];
        let mut tmp = vec![0.0; h];
        for _ in 0..steps {
            for i in 0..l {
                let x = &state[i * h..(i + 1) * h];
                self.message.matvec_cols(0, x, &mut own[i * h..(i + 1) * h]);
                self.message.matvec_cols(h, x, &mut succ[i * h..(i + 1) * h]);
            }
            let mut pre_msg = vec![0.0; edges.len() * h];
            let mut agg = vec![0.0; l * h];
            for (e, &(a, b)) in edges.iter().enumerate() {
                let pre = &mut pre_msg[e * h..(e + 1) * h];
                let dst = &mut agg[b * h..(b + 1) * h];
                for k in 0..h {
                    let z = own[a * h + k] + succ[b * h + k] + self.message.bias[k];
                    pre[k] = z;
                    dst[k] += selu(z);
                }
            }
            let mut pre_upd = vec![0.0; l * h];
            let mut next = vec![0.0; l * h];
            for i in 0..l {
                let pre = &mut pre_upd[i * h..(i + 1) * h];
                self.update.matvec_cols(0, &agg[i * h..(i + 1) * h], pre);
                self.update.matvec_cols(h, &state[i * h..(i + 1) * h], &mut tmp);
                for k in 0..h {
                    pre[k] += tmp[k] + self.update.bias[k];
                    next[i * h + k] = selu(pre[k]);
                }
            }
            tape.hidden.push(std::mem::replace(&mut state, next));
            tape.pre_message.push(pre_msg);
            tape.aggregate.push(agg);
            tape.pre_update.push(pre_upd);
        }
        for row in state.chunks_exact(h) {
            for (p, v) in tape.pooled.iter_mut().zip(row) {
                *p += v;
            }
        }
        tape.hidden.push(state);

        self.readout_hidden
            .matvec_cols(0, &tape.pooled, &mut tape.pre_readout);
        for (z, b) in tape.pre_readout.iter_mut().zip(&self.readout_hidden.bias) {
            *z += b;
        }
        for (a, z) in tape.readout.iter_mut().zip(&tape.pre_readout) {
            *a = selu(*z);
        }
        let mut out = [0.0];
        self.readout_out.matvec_cols(0, &tape.readout, &mut out);
        tape.output = out[0] + self.readout_out.bias[0];
        tape
    }

    /// Scalar output only.
    pub fn evaluate(&self, graph: &LinkGraph, features: &[[f64; NUM_FEATURES]], steps: usize) -> f64 {
        self.forward(graph, features, steps).output
    }

    /// Accumulates `d_output * d(output)/d(params)` into `grads`.
    pub fn backward(&self, graph: &LinkGraph, tape: &GnnTape, d_output: f64, grads: &mut GnnNet) {
        if d_output == 0.0 {
            return;
        }
        let h = self.hidden_size();
        let l = tape.num_links;
        let edges = graph.edges();
        let steps = tape.pre_message.len();

        // readout
        grads.readout_out.bias[0] += d_output;
        Dense::outer_acc(&mut grads.readout_out, 0, &[d_output], &tape.readout);
        let mut d_readout = vec![0.0; self.readout_hidden.out];
        self.readout_out.matvec_t_cols(0, &[d_output], &mut d_readout);
        for (d, z) in d_readout.iter_mut().zip(&tape.pre_readout) {
            *d *= selu_grad(*z);
        }
        for (gb, d) in grads.readout_hidden.bias.iter_mut().zip(&d_readout) {
            *gb += d;
        }
        Dense::outer_acc(&mut grads.readout_hidden, 0, &d_readout, &tape.pooled);
        let mut d_pooled = vec![0.0; h];
        self.readout_hidden.matvec_t_cols(0, &d_readout, &mut d_pooled);

        // every link's final state feeds the sum pool
        let mut d_state: Vec<f64> = d_pooled.iter().copied().cycle().take(l * h).collect();

        for t in (0..steps).rev() {
            let prev = &tape.hidden[t];
            let pre_upd = &tape.pre_update[t];
            let agg = &tape.aggregate[t];
            let pre_msg = &tape.pre_message[t];

            let mut d_prev = vec![0.0; l * h];
            let mut d_agg = vec![0.0; l * h];
            let mut d_pre = vec![0.0; h];
            for i in 0..l {
                for k in 0..h {
                    d_pre[k] = d_state[i * h + k] * selu_grad(pre_upd[i * h + k]);
                    grads.update.bias[k] += d_pre[k];
                }
                Dense::outer_acc(&mut grads.update, 0, &d_pre, &agg[i * h..(i + 1) * h]);
                Dense::outer_acc(&mut grads.update, h, &d_pre, &prev[i * h..(i + 1) * h]);
                self.update
                    .matvec_t_cols(0, &d_pre, &mut d_agg[i * h..(i + 1) * h]);
                self.update
                    .matvec_t_cols(h, &d_pre, &mut d_prev[i * h..(i + 1) * h]);
            }

            // message pre-activation gradients, pooled per sending and
            // receiving link before touching the weight matrix
            let mut d_own = vec![0.0; l * h];
            let mut d_succ = vec![0.0; l * h];
            for (e, &(a, b)) in edges.iter().enumerate() {
                for k in 0..h {
                    let g = d_agg[b * h + k] * selu_grad(pre_msg[e * h + k]);
                    d_own[a * h + k] += g;
                    d_succ[b * h + k] += g;
                    grads.message.bias[k] += g;
                }
            }
            for i in 0..l {
                let x = &prev[i * h..(i + 1) * h];
                Dense::outer_acc(&mut grads.message, 0, &d_own[i * h..(i + 1) * h], x);
                Dense::outer_acc(&mut grads.message, h, &d_succ[i * h..(i + 1) * h], x);
                self.message
                    .matvec_t_cols(0, &d_own[i * h..(i + 1) * h], &mut d_prev[i * h..(i + 1) * h]);
                self.message
                    .matvec_t_cols(h, &d_succ[i * h..(i + 1) * h], &mut d_prev[i * h..(i + 1) * h]);
            }
            d_state = d_prev;
        }
    }
}

/// Actor and critic networks. They share no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: GnnNet,
    pub critic: GnnNet,
    pub message_steps: usize,
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::init_with(HIDDEN_STATE, READOUT_UNITS, MESSAGE_STEPS, rng)
    }

    pub fn init_with<R: Rng + ?Sized>(
        hidden: usize,
        readout: usize,
        message_steps: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            actor: GnnNet::init(hidden, readout, rng),
            critic: GnnNet::init(hidden, readout, rng),
            message_steps,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let h = self.actor.hidden_size();
        let r = self.actor.readout_hidden.out;
        Self {
            actor: GnnNet::zeros(h, r),
            critic: GnnNet::zeros(h, r),
            message_steps: self.message_steps,
        }
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, [usize; 2], &[f64])> {
        let mut out = Vec::with_capacity(16);
        for (prefix, net) in [("actor", &self.actor), ("critic", &self.critic)] {
            for (name, layer) in net.layers() {
                out.push((
                    format!("{prefix}.{name}.weight"),
                    [layer.out, layer.inp],
                    &layer.weight[..],
                ));
                out.push((format!("{prefix}.{name}.bias"), [layer.out, 1], &layer.bias[..]));
            }
        }
        out
    }

    /// Mutable slices in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(16);
        for net in [&mut self.actor, &mut self.critic] {
            for (_, layer) in net.layers_mut() {
                out.push(&mut layer.weight[..]);
                out.push(&mut layer.bias[..]);
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.2.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += v;
            }
        }
    }

    /// Sum of squared actor weights (biases excluded).
    pub fn actor_weight_sq_norm(&self) -> f64 {
        self.actor
            .layers()
            .iter()
            .flat_map(|(_, l)| l.weight.iter())
            .map(|w| w * w)
            .sum()
    }
}

/// Per-candidate logits and their softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        Self {
            logits,
            probabilities,
        }
    }

    /// Most probable candidate; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.logits.iter().enumerate() {
            if *p > self.logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probabilities)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Per-link hidden states after message passing, row-major `L x H`.
pub fn encode(graph: &LinkGraph, action: &ActionGraph, net: &GnnNet, steps: usize) -> Vec<f64> {
    net.forward(graph, &action.features, steps)
        .final_hidden()
        .to_vec()
}

pub fn score_graphs(graph: &LinkGraph, candidates: &[ActionGraph], params: &PolicyParams) -> ActionDistribution {
    assert!(!candidates.is_empty(), "need at least one candidate");
    let logits = candidates
        .iter()
        .map(|c| params.actor.evaluate(graph, &c.features, params.message_steps))
        .collect();
    ActionDistribution::from_logits(logits)
}

/// Action distribution over the current demand's candidates.
pub fn score_actions(state: &EnvState, candidates: &[ActionGraph], params: &PolicyParams) -> ActionDistribution {
    score_graphs(&state.network().link_graph, candidates, params)
}

/// Critic estimate for the unmarked network state.
pub fn critic_value(state: &EnvState, params: &PolicyParams) -> f64 {
    params.critic.evaluate(
        &state.network().link_graph,
        &state.state_graph().features,
        params.message_steps,
    )
}
