//! Recurrent policy over architecture tokens, trained with REINFORCE.

mod checkpoint;
mod reward;

pub use reward::{shape_reward, Baseline};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{uniform, ActivationKind, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{ActionSpace, ArchDescription, SlotKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub hidden_size: usize,
    pub init_range: f64,
    pub temperature: f64,
    pub logit_clip: f64,
    pub entropy_weight: f64,
    pub baseline_decay: f64,
    pub lr: f64,
    /// Episodes per update.
    pub batch_size: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            hidden_size: 100,
            init_range: 0.1,
            temperature: 5.0,
            logit_clip: 2.5,
            entropy_weight: 1e-4,
            baseline_decay: 0.95,
            lr: 0.0035,
            batch_size: 1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        if self.hidden_size == 0 {
            return Err(Error::config("hidden_size", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        positive("init_range", self.init_range)?;
        positive("temperature", self.temperature)?;
        positive("logit_clip", self.logit_clip)?;
        positive("lr", self.lr)?;
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::config("entropy_weight", "must be non-negative"));
        }
        if !(self.baseline_decay > 0.0 && self.baseline_decay < 1.0) {
            return Err(Error::config("baseline_decay", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One sampled architecture with its sampling statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub arch: ArchDescription,
    /// Option index chosen at each slot.
    pub tokens: Vec<usize>,
    pub log_prob_sum: f64,
    pub entropy_sum: f64,
    pub reward: Option<f64>,
    pub shaped_reward: Option<f64>,
}

const SLOT_KINDS: [SlotKind; 8] = [
    SlotKind::Sampling,
    SlotKind::Attention,
    SlotKind::Aggregation,
    SlotKind::Activation,
    SlotKind::Heads,
    SlotKind::Hidden,
    SlotKind::SkipFrom,
    SlotKind::Merge,
];

fn kind_slot(kind: SlotKind) -> usize {
    SLOT_KINDS.iter().position(|&k| k == kind).expect("listed")
}

/// Single-layer LSTM whose state feeds one embedding table and one output
/// projection per slot kind. A skip-source head is as wide as the layer
/// count; layer `l` reads its first `l` logits.
#[derive(Clone, Debug)]
pub struct Controller<T> {
    space: ActionSpace,
    config: ControllerConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    /// Per slot kind: (embedding, projection weight, projection bias) indices into `params`.
    heads: [Option<(usize, usize, usize)>; 8],
    optimizer: AdamState<T>,
}

/// Recurrent state and the logits/log-probabilities of one step, value only.
struct StepValues<T> {
    h: Vec<T>,
    c: Vec<T>,
}

fn row_matmul<T: Scalar>(x: &[T], w: &Tensor<T>) -> Vec<T> {
    let cols = w.cols();
    let mut out = vec![T::zero(); cols];
    for (r, &xv) in x.iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o += xv * wv;
        }
    }
    out
}

fn sigmoid<T: Scalar>(x: T) -> T {
    crate::autodiff::sigmoid(x)
}

impl<T: Scalar> Controller<T> {
    /// All weights uniform in `[-init_range, init_range]`.
    pub fn new<R: Rng + ?Sized>(space: &ActionSpace, config: ControllerConfig, rng: &mut R) -> Result<Self> {
        space.check()?;
        config.validate()?;
        let h = config.hidden_size;
        let b = config.init_range;
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut add = |name: String, shape: [usize; 2], rng: &mut R| {
            names.push(name);
            params.push(uniform::<T, R>(&shape, b, rng));
            params.len() - 1
        };
        add("lstm.w_x".into(), [h, 4 * h], rng);
        add("lstm.w_h".into(), [h, 4 * h], rng);
        add("lstm.bias".into(), [1, 4 * h], rng);
        let mut heads = [None; 8];
        for &kind in &SLOT_KINDS {
            let width = match kind {
                SlotKind::SkipFrom | SlotKind::Merge if !space.skip_enabled => continue,
                SlotKind::SkipFrom => space.layer_count,
                _ => space.slots().iter().find(|s| s.kind == kind).expect("slot present").options,
            };
            let e = add(format!("embed.{}", kind.name()), [width, h], rng);
            let w = add(format!("proj.{}.weight", kind.name()), [h, width], rng);
            let bias = add(format!("proj.{}.bias", kind.name()), [1, width], rng);
            heads[kind_slot(kind)] = Some((e, w, bias));
        }
        Ok(Controller { space: space.clone(), optimizer: AdamState::new(AdamConfig::with_lr(config.lr)), config, names, params, heads })
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.optimizer.steps()
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.params {
            for &v in t.data() {
                for byte in v.as_f64().to_bits().to_le_bytes() {
                    hash ^= byte as u64;
                    hash = hash.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        hash
    }

    fn head(&self, kind: SlotKind) -> (usize, usize, usize) {
        self.heads[kind_slot(kind)].expect("head exists for every slot of the space")
    }

    fn lstm_value(&self, x: &[T], state: &StepValues<T>) -> StepValues<T> {
        let h = self.config.hidden_size;
        let mut g = row_matmul(x, &self.params[0]);
        for ((gv, hv), bv) in g.iter_mut().zip(row_matmul(&state.h, &self.params[1])).zip(self.params[2].data()) {
            *gv += hv + *bv;
        }
        let mut c = vec![T::zero(); h];
        let mut out = vec![T::zero(); h];
        for k in 0..h {
            let i = sigmoid(g[k]);
            let f = sigmoid(g[h + k]);
            let o = sigmoid(g[2 * h + k]);
            let cand = g[3 * h + k].tanh();
            c[k] = f * state.c[k] + i * cand;
            out[k] = o * c[k].tanh();
        }
        StepValues { h: out, c }
    }

    /// Adjusted logits `clip · tanh(raw / temperature)` for one slot.
    fn logits_value(&self, h: &[T], kind: SlotKind, options: usize) -> Vec<T> {
        let (_, w, b) = self.head(kind);
        let raw = row_matmul(h, &self.params[w]);
        let temp = T::lit(self.config.temperature);
        let clip = T::lit(self.config.logit_clip);
        raw.iter().zip(self.params[b].data()).take(options).map(|(&r, &bv)| clip * ((r + bv) / temp).tanh()).collect()
    }

    fn log_softmax_value(logits: &[T]) -> Vec<T> {
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        logits.iter().map(|&v| v - lse).collect()
    }

    /// Walks the first `steps` slots, choosing each token with
    /// `choose(step, log_probs)`. Returns the chosen tokens, summed
    /// log-probability, summed entropy and the last step's log-probabilities.
    fn rollout(
        &self,
        steps: usize,
        mut choose: impl FnMut(usize, &[T]) -> usize,
    ) -> Result<(Vec<usize>, f64, f64, Vec<T>)> {
        let h = self.config.hidden_size;
        let mut state = StepValues { h: vec![T::zero(); h], c: vec![T::zero(); h] };
        let mut input = vec![T::zero(); h];
        let mut tokens = Vec::new();
        let mut log_prob = 0.0;
        let mut entropy = 0.0;
        let mut lp = Vec::new();
        for (t, slot) in self.space.slots().iter().take(steps).enumerate() {
            state = self.lstm_value(&input, &state);
            let logits = self.logits_value(&state.h, slot.kind, slot.options);
            lp = Self::log_softmax_value(&logits);
            let tok = choose(t, &lp);
            if tok >= slot.options {
                return Err(Error::validation(slot.label(), format!("token {tok} outside {} options", slot.options)));
            }
            log_prob += lp[tok].as_f64();
            entropy -= lp.iter().map(|&l| l.as_f64().exp() * l.as_f64()).sum::<f64>();
            tokens.push(tok);
            let (e, _, _) = self.head(slot.kind);
            input = self.params[e].row(tok).to_vec();
        }
        Ok((tokens, log_prob, entropy, lp))
    }

    /// Draws an architecture token by token from the policy.
    pub fn sample_architecture<R: Rng + ?Sized>(&self, rng: &mut R) -> Episode {
        let steps = self.space.slots().len();
        let (tokens, log_prob_sum, entropy_sum, _) = self
            .rollout(steps, |_, lp| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, &l) in lp.iter().enumerate() {
                    acc += l.as_f64().exp();
                    if u < acc {
                        return k;
                    }
                }
                lp.len() - 1
            })
            .expect("sampled tokens are in range");
        let arch = self.space.from_indices(&tokens).expect("sampled tokens are in range");
        Episode { arch, tokens, log_prob_sum, entropy_sum, reward: None, shaped_reward: None }
    }

    /// Log-probability of a full token sequence (value path).
    pub fn sequence_log_prob(&self, tokens: &[usize]) -> Result<f64> {
        if tokens.len() != self.space.slots().len() {
            return Err(Error::validation("tokens", format!("{} tokens for {} slots", tokens.len(), self.space.slots().len())));
        }
        self.rollout(tokens.len(), |t, _| tokens[t]).map(|r| r.1)
    }

    /// Conditional distribution of the next slot given a token prefix.
    pub fn next_probabilities(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let slots = self.space.slots();
        if prefix.len() >= slots.len() {
            return Err(Error::validation("tokens", "prefix covers every slot"));
        }
        let (_, _, _, lp) = self.rollout(prefix.len() + 1, |t, _| prefix.get(t).copied().unwrap_or(0))?;
        Ok(lp.iter().map(|l| l.as_f64().exp()).collect())
    }

    pub fn arch_probability(&self, arch: &ArchDescription) -> Result<f64> {
        let tokens = self.space.to_indices(arch)?;
        Ok(self.sequence_log_prob(&tokens)?.exp())
    }

    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Teacher-forced log-probability of `tokens` recorded on `tape`.
    pub fn log_prob_on(&self, tape: &mut Tape<T>, weights: &[Var], tokens: &[usize]) -> Result<Var> {
        let slots = self.space.slots();
        if tokens.len() != slots.len() {
            return Err(Error::validation("tokens", format!("{} tokens for {} slots", tokens.len(), slots.len())));
        }
        let hs = self.config.hidden_size;
        let mut h = tape.constant(Tensor::zeros(&[1, hs]));
        let mut c = tape.constant(Tensor::zeros(&[1, hs]));
        let mut input = tape.constant(Tensor::zeros(&[1, hs]));
        let mut total = tape.constant(Tensor::zeros(&[1, 1]));
        for (slot, &tok) in slots.iter().zip(tokens) {
            if tok >= slot.options {
                return Err(Error::validation(slot.label(), format!("token {tok} outside {} options", slot.options)));
            }
            let gx = tape.matmul(input, weights[0])?;
            let gh = tape.matmul(h, weights[1])?;
            let g = tape.add(gx, gh)?;
            let g = tape.add_row(g, weights[2])?;
            let gate = |tape: &mut Tape<T>, k: usize, act: ActivationKind| -> Result<Var> {
                let s = tape.slice_cols(g, k * hs, hs)?;
                Ok(tape.activation(act, s))
            };
            let i = gate(tape, 0, ActivationKind::Sigmoid)?;
            let f = gate(tape, 1, ActivationKind::Sigmoid)?;
            let o = gate(tape, 2, ActivationKind::Sigmoid)?;
            let cand = gate(tape, 3, ActivationKind::Tanh)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, cand)?;
            c = tape.add(keep, write)?;
            let tc = tape.activation(ActivationKind::Tanh, c);
            h = tape.mul(o, tc)?;

            let (e, w, b) = self.head(slot.kind);
            let mut raw = tape.matmul(h, weights[w])?;
            raw = tape.add_row(raw, weights[b])?;
            if tape.value(raw).cols() != slot.options {
                raw = tape.slice_cols(raw, 0, slot.options)?;
            }
            let scaled = tape.scale(raw, T::one() / T::lit(self.config.temperature));
            let squashed = tape.activation(ActivationKind::Tanh, scaled);
            let logits = tape.scale(squashed, T::lit(self.config.logit_clip));
            let lp = tape.log_softmax(logits);
            let pick = tape.pick(lp, 0, tok)?;
            total = tape.add(total, pick)?;
            input = tape.gather_rows(weights[e], &Arc::from(vec![tok]))?;
        }
        Ok(total)
    }

    /// Teacher-forced log-probability and its gradient for every parameter.
    pub fn log_prob_gradient(&self, tokens: &[usize]) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let weights = self.register(&mut tape);
        let lp = self.log_prob_on(&mut tape, &weights, tokens)?;
        let grads = tape.backward(lp)?;
        let g = weights.iter().zip(&self.params).map(|(&w, p)| grads.get_or_zeros(w, p.shape())).collect();
        Ok((tape.value(lp).item().as_f64(), g))
    }

    /// One Adam step descending `-(1/B) Σ shaped · log P(tokens)`.
    pub fn reinforce_step(&mut self, episodes: &[Episode]) -> Result<()> {
        if episodes.is_empty() {
            return Err(Error::Parameter("reinforce step on an empty batch".into()));
        }
        let mut tape = Tape::new();
        let weights = self.register(&mut tape);
        let mut objective = tape.constant(Tensor::zeros(&[1, 1]));
        for ep in episodes {
            let shaped = ep
                .shaped_reward
                .ok_or_else(|| Error::Parameter("episode without a shaped reward".into()))?;
            let lp = self.log_prob_on(&mut tape, &weights, &ep.tokens)?;
            let term = tape.scale(lp, T::lit(-shaped / episodes.len() as f64));
            objective = tape.add(objective, term)?;
        }
        let grads = tape.backward(objective)?;
        let g: Vec<Tensor<T>> =
            weights.iter().zip(&self.params).map(|(&w, p)| grads.get_or_zeros(w, p.shape())).collect();
        let mut refs: Vec<&mut Tensor<T>> = self.params.iter_mut().collect();
        self.optimizer.step(&mut refs, &g)
    }
}
