use std::rc::Rc;

use rand::Rng;

use super::{Message, MessageCache, ModelConfig, ModelDims};
use crate::bandwidth::{BandwidthBudget, TransmissionLedger};
use crate::baselines::{mean_pool_aggregate, no_comm_aggregate, AggregatorKind};
use crate::error::{Error, Result};
use crate::nn::{
    categorical_head, AttentionMask, Categorical, Embedding, Linear, Matrix, Mlp, MultiHeadAttention, ParamStore,
    Tape, Var,
};

/// One agent's (or the shared) set of networks.
#[derive(Clone, Debug)]
struct AgentNets {
    encoder: Mlp,
    message: Option<Linear>,
    lift: Option<Linear>,
    temporal: Option<Embedding>,
    sender: Option<Embedding>,
    attention: Option<MultiHeadAttention>,
    policy: Mlp,
}

/// Widths of the constructed model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShapes {
    pub encoded_width: usize,
    pub message_dim: usize,
    /// Input width of the channel-side lift (the message dimension, or 0
    /// without communication).
    pub aggregator_input_width: usize,
    pub context_width: usize,
    pub policy_input_width: usize,
    pub value_input_width: usize,
}

#[derive(Clone, Debug)]
pub struct SlimModel {
    config: ModelConfig,
    dims: ModelDims,
    budget: BandwidthBudget,
    nets: Vec<AgentNets>,
    value: Mlp,
}

/// Everything produced for one environment step on the inference path.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `n x h`.
    pub encodings: Matrix,
    pub messages: Vec<Message>,
    /// `n x h`.
    pub contexts: Matrix,
    pub dists: Vec<Categorical>,
    pub values: Vec<f64>,
}

/// Per-episode aggregator state: the message cache plus the projected
/// key/value rows derived from it.
#[derive(Clone, Debug)]
pub struct EpisodeMemory {
    pub cache: MessageCache,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    stamps: Vec<(usize, usize)>,
}

impl EpisodeMemory {
    fn reset_rows(&mut self) {
        self.keys.iter_mut().for_each(Vec::clear);
        self.values.iter_mut().for_each(Vec::clear);
        self.stamps.clear();
    }

    pub fn clear(&mut self) {
        self.cache.clear();
        self.reset_rows();
    }
}

/// Tape nodes of a whole-episode forward pass.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeVars {
    /// `nT x A` log-probabilities, row `i * T + t`.
    pub log_probs: Var,
    /// `T x n` central value estimates.
    pub values: Var,
}

impl SlimModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: &ModelConfig,
        dims: ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        let budget = config.validate()?;
        if dims.n_agents == 0 || dims.obs_dim == 0 || dims.action_arity < 2 || dims.episode_cap == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if config.aggregator == AggregatorKind::Slim && dims.n_agents < 2 {
            return Err(Error::config("attention aggregation needs at least two agents"));
        }
        let h = config.hidden_size;
        let d = budget.dim;
        let copies = if config.share_parameters { 1 } else { dims.n_agents };
        let mut nets = Vec::with_capacity(copies);
        for c in 0..copies {
            let p = if config.share_parameters {
                "agent".to_string()
            } else {
                format!("agent{c}")
            };
            let mut widths = vec![dims.obs_dim];
            widths.extend(std::iter::repeat_n(h, config.encoder_layers));
            let encoder = Mlp::new(store, &format!("{p}.encoder"), &widths, 1.0, true, rng)?;
            let comm = config.aggregator.communicates();
            let message = comm
                .then(|| Linear::new(store, &format!("{p}.message"), h, d, 1.0, rng))
                .transpose()?;
            let lift = comm
                .then(|| Linear::new(store, &format!("{p}.lift"), d, h, 1.0, rng))
                .transpose()?;
            let slim = config.aggregator == AggregatorKind::Slim;
            let temporal = slim
                .then(|| Embedding::new(store, &format!("{p}.temporal"), dims.episode_cap, h, rng))
                .transpose()?;
            let sender = slim
                .then(|| Embedding::new(store, &format!("{p}.sender"), dims.n_agents, h, rng))
                .transpose()?;
            let attention = slim
                .then(|| MultiHeadAttention::new(store, &format!("{p}.attention"), h, h, config.heads, rng))
                .transpose()?;
            let policy = Mlp::new(
                store,
                &format!("{p}.policy"),
                &[2 * h, h, dims.action_arity],
                0.01,
                false,
                rng,
            )?;
            nets.push(AgentNets {
                encoder,
                message,
                lift,
                temporal,
                sender,
                attention,
                policy,
            });
        }
        let value = Mlp::new(store, "critic", &[dims.n_agents * h, h, dims.n_agents], 1.0, false, rng)?;
        Ok(SlimModel {
            config: config.clone(),
            dims,
            budget,
            nets,
            value,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn budget(&self) -> BandwidthBudget {
        self.budget
    }

    pub fn message_dim(&self) -> usize {
        self.budget.dim
    }

    pub fn shapes(&self) -> ModelShapes {
        let net = &self.nets[0];
        ModelShapes {
            encoded_width: net.encoder.out_dim(),
            message_dim: net.message.as_ref().map_or(0, Linear::out_dim),
            aggregator_input_width: net.lift.as_ref().map_or(0, Linear::in_dim),
            context_width: self.config.hidden_size,
            policy_input_width: net.policy.in_dim(),
            value_input_width: self.value.in_dim(),
        }
    }

    fn net(&self, agent: usize) -> &AgentNets {
        &self.nets[if self.nets.len() == 1 { 0 } else { agent }]
    }

    pub fn new_memory(&self) -> EpisodeMemory {
        let copies = self.nets.len();
        EpisodeMemory {
            cache: MessageCache::new(self.dims.n_agents, self.budget.dim),
            keys: vec![Vec::new(); copies],
            values: vec![Vec::new(); copies],
            stamps: Vec::new(),
        }
    }

    // ---- inference path ----

    /// Applies `f` to each agent's row with that agent's networks.
    fn per_agent_rows(&self, x: &Matrix, f: impl Fn(&AgentNets, &Matrix) -> Result<Matrix>) -> Result<Matrix> {
        if self.nets.len() == 1 {
            return f(&self.nets[0], x);
        }
        let rows = (0..x.rows())
            .map(|i| Ok(f(&self.nets[i], &Matrix::row_vector(x.row(i)))?.into_data()))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    /// Encodes every agent's observation, `n x h`.
    pub fn encode(&self, store: &ParamStore, observations: &[Vec<f64>]) -> Result<Matrix> {
        if observations.len() != self.dims.n_agents || observations.iter().any(|o| o.len() != self.dims.obs_dim) {
            return Err(Error::contract(format!(
                "expected {} observations of width {}",
                self.dims.n_agents, self.dims.obs_dim
            )));
        }
        let x = Matrix::from_rows(observations)?;
        self.per_agent_rows(&x, |net, x| net.encoder.apply(store, x))
    }

    /// `m_t^i = E_c(õ_t^i)`, stamped. Empty without communication.
    pub fn make_messages(&self, store: &ParamStore, encodings: &Matrix, t: usize) -> Result<Vec<Message>> {
        if !self.config.aggregator.communicates() {
            return Ok(Vec::new());
        }
        let payloads = self.per_agent_rows(encodings, |net, x| {
            net.message.as_ref().expect("communicating model").apply(store, x)
        })?;
        Ok((0..self.dims.n_agents)
            .map(|i| Message {
                payload: payloads.row(i).to_vec(),
                sender: i,
                timestep: t,
            })
            .collect())
    }

    /// Records each broadcast on the ledger: every sender reaches all peers.
    pub fn deliver(&self, messages: &[Message], ledger: &mut TransmissionLedger) -> Result<()> {
        let n = self.dims.n_agents;
        for m in messages {
            let peers: Vec<usize> = (0..n).filter(|&j| j != m.sender).collect();
            ledger.record_transmission(m.sender, &peers, 0, m.payload.len())?;
        }
        Ok(())
    }

    /// Token for one message under `net`: lift + temporal + sender embeddings.
    fn tokens(&self, store: &ParamStore, net: &AgentNets, msgs: &[&Message]) -> Result<Matrix> {
        let payloads: Vec<Vec<f64>> = msgs.iter().map(|m| m.payload.clone()).collect();
        let mut tok = net.lift.as_ref().expect("slim net").apply(store, &Matrix::from_rows(&payloads)?)?;
        let temporal = net.temporal.as_ref().expect("slim net");
        let sender = net.sender.as_ref().expect("slim net");
        for (r, m) in msgs.iter().enumerate() {
            let te = temporal.row(store, m.timestep)?;
            let se = sender.row(store, m.sender)?;
            for (k, v) in tok.row_mut(r).iter_mut().enumerate() {
                *v = (*v + te[k]) + se[k];
            }
        }
        Ok(tok)
    }

    /// Appends this step's messages and returns every agent's context, `n x h`.
    pub fn contexts(
        &self,
        store: &ParamStore,
        memory: &mut EpisodeMemory,
        encodings: &Matrix,
        messages: Vec<Message>,
        t: usize,
    ) -> Result<Matrix> {
        let n = self.dims.n_agents;
        let h = self.config.hidden_size;
        match self.config.aggregator {
            AggregatorKind::None => Ok(Matrix::zeros(n, h)),
            AggregatorKind::MeanPool => {
                let mut ctx = Matrix::zeros(n, h);
                for i in 0..n {
                    let peers: Vec<Message> = messages.iter().filter(|m| m.sender != i).cloned().collect();
                    let lift = self.net(i).lift.as_ref().expect("communicating model");
                    ctx.row_mut(i).copy_from_slice(&mean_pool_aggregate(store, lift, &peers)?);
                }
                memory.cache.append(messages)?;
                Ok(ctx)
            }
            AggregatorKind::Slim => {
                if !self.config.cache {
                    memory.reset_rows();
                }
                let refs: Vec<&Message> = messages.iter().collect();
                for (c, net) in self.nets.iter().enumerate() {
                    let tok = self.tokens(store, net, &refs)?;
                    let att = net.attention.as_ref().expect("slim net");
                    let (k, v) = att.project_keys_values(store, &tok, &tok)?;
                    memory.keys[c].extend_from_slice(k.data());
                    memory.values[c].extend_from_slice(v.data());
                }
                memory.stamps.extend(messages.iter().map(|m| (m.sender, m.timestep)));
                memory.cache.append(messages)?;
                let nk = memory.stamps.len();
                let allowed = |i: usize, &(j, tk): &(usize, usize)| tk < t || (tk == t && j != i);
                let mut ctx = Matrix::zeros(n, h);
                for (c, net) in self.nets.iter().enumerate() {
                    let att = net.attention.as_ref().expect("slim net");
                    let keys = Matrix::from_vec(nk, h, memory.keys[c].clone())?;
                    let values = Matrix::from_vec(nk, h, memory.values[c].clone())?;
                    let receivers: Vec<usize> = if self.nets.len() == 1 { (0..n).collect() } else { vec![c] };
                    let mask: Vec<bool> = receivers
                        .iter()
                        .flat_map(|&i| memory.stamps.iter().map(move |s| allowed(i, s)))
                        .collect();
                    let q_rows: Vec<Vec<f64>> = receivers.iter().map(|&i| encodings.row(i).to_vec()).collect();
                    let mask = AttentionMask::new(receivers.len(), nk, mask)?;
                    let out = att.attend_projected(store, &Matrix::from_rows(&q_rows)?, &keys, &values, &mask)?;
                    for (r, &i) in receivers.iter().enumerate() {
                        ctx.row_mut(i).copy_from_slice(out.output.row(r));
                    }
                }
                Ok(ctx)
            }
        }
    }

    /// Context for one agent computed directly from a message cache. With
    /// the cache disabled only step-`t` peer messages are read.
    pub fn aggregate(
        &self,
        store: &ParamStore,
        cache: &MessageCache,
        encoding: &[f64],
        agent: usize,
        t: usize,
    ) -> Result<Vec<f64>> {
        let h = self.config.hidden_size;
        let net = self.net(agent);
        match self.config.aggregator {
            AggregatorKind::None => Ok(no_comm_aggregate(h)),
            AggregatorKind::MeanPool => {
                let peers: Vec<Message> = cache.at(t).filter(|m| m.sender != agent).cloned().collect();
                mean_pool_aggregate(store, net.lift.as_ref().expect("communicating model"), &peers)
            }
            AggregatorKind::Slim => {
                let visible: Vec<&Message> = cache
                    .entries()
                    .iter()
                    .filter(|m| {
                        (m.timestep == t && m.sender != agent) || (self.config.cache && m.timestep < t)
                    })
                    .collect();
                if visible.is_empty() {
                    return Err(Error::NoAttendableInput);
                }
                let tok = self.tokens(store, net, &visible)?;
                let att = net.attention.as_ref().expect("slim net");
                let q = Matrix::row_vector(encoding);
                let out = att.attend(store, &q, &tok, &tok, &AttentionMask::full(1, visible.len()))?;
                Ok(out.output.into_data())
            }
        }
    }

    /// Policy distributions over `[õ; m̃]`.
    pub fn policy(&self, store: &ParamStore, encodings: &Matrix, contexts: &Matrix) -> Result<Vec<Categorical>> {
        let n = encodings.rows();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| [encodings.row(i), contexts.row(i)].concat())
            .collect();
        let logits = self.per_agent_rows(&Matrix::from_rows(&rows)?, |net, x| net.policy.apply(store, x))?;
        (0..n).map(|i| categorical_head(logits.row(i))).collect()
    }

    /// Central value estimate for each agent from all encodings.
    pub fn central_value(&self, store: &ParamStore, encodings: &Matrix) -> Result<Vec<f64>> {
        if encodings.rows() != self.dims.n_agents || encodings.cols() != self.config.hidden_size {
            return Err(Error::contract(format!(
                "central value needs {} encodings of width {}",
                self.dims.n_agents, self.config.hidden_size
            )));
        }
        let joint = Matrix::row_vector(encodings.data());
        Ok(self.value.apply(store, &joint)?.into_data())
    }

    /// One decentralised step: encode, message, exchange, aggregate, act
    /// distributions, plus the (training-only) central values.
    pub fn step(
        &self,
        store: &ParamStore,
        memory: &mut EpisodeMemory,
        observations: &[Vec<f64>],
        t: usize,
        ledger: Option<&mut TransmissionLedger>,
    ) -> Result<StepOutput> {
        let encodings = self.encode(store, observations)?;
        let messages = self.make_messages(store, &encodings, t)?;
        if let Some(ledger) = ledger {
            self.deliver(&messages, ledger)?;
        }
        let contexts = self.contexts(store, memory, &encodings, messages.clone(), t)?;
        let dists = self.policy(store, &encodings, &contexts)?;
        let values = self.central_value(store, &encodings)?;
        Ok(StepOutput {
            encodings,
            messages,
            contexts,
            dists,
            values,
        })
    }

    // ---- tape path ----

    /// Applies `f` per agent block of `T` rows (agent-major layout).
    fn per_agent_blocks(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        len: usize,
        f: impl Fn(&AgentNets, &mut Tape<'_>, Var) -> Result<Var>,
    ) -> Result<Var> {
        if self.nets.len() == 1 {
            return f(&self.nets[0], tape, x);
        }
        let parts = (0..self.dims.n_agents)
            .map(|i| {
                let xi = tape.slice_rows(x, i * len, len)?;
                f(&self.nets[i], tape, xi)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&parts)
    }

    /// Whole-episode forward pass. `obs` is `nT x obs_dim` with row
    /// `i * T + t` holding agent `i`'s observation at step `t`.
    pub fn forward_episode(&self, tape: &mut Tape<'_>, obs: &Matrix, len: usize) -> Result<EpisodeVars> {
        let n = self.dims.n_agents;
        let h = self.config.hidden_size;
        if len == 0 || obs.rows() != n * len || obs.cols() != self.dims.obs_dim {
            return Err(Error::contract("episode observations do not match n x T x obs_dim"));
        }
        if len > self.dims.episode_cap {
            return Err(Error::Capacity(format!(
                "episode of {len} steps beyond the cap {}",
                self.dims.episode_cap
            )));
        }
        let x = tape.constant(obs.clone());
        let enc = self.per_agent_blocks(tape, x, len, |net, tape, x| net.encoder.forward(tape, x))?;
        let ctx = self.context_forward(tape, enc, len)?;
        let joint = tape.concat_cols(&[enc, ctx])?;
        let logits = self.per_agent_blocks(tape, joint, len, |net, tape, x| net.policy.forward(tape, x))?;
        let log_probs = tape.log_softmax(logits)?;
        let blocks = (0..n)
            .map(|i| tape.slice_rows(enc, i * len, len))
            .collect::<Result<Vec<_>>>()?;
        let value_in = tape.concat_cols(&blocks)?;
        let values = self.value.forward(tape, value_in)?;
        debug_assert_eq!(tape.shape(ctx), (n * len, h));
        Ok(EpisodeVars { log_probs, values })
    }

    fn context_forward(&self, tape: &mut Tape<'_>, enc: Var, len: usize) -> Result<Var> {
        let n = self.dims.n_agents;
        let h = self.config.hidden_size;
        let rows = n * len;
        if self.config.aggregator == AggregatorKind::None || (self.config.aggregator == AggregatorKind::MeanPool && n == 1)
        {
            return Ok(tape.constant(Matrix::zeros(rows, h)));
        }
        let msgs = self.per_agent_blocks(tape, enc, len, |net, tape, x| {
            net.message.as_ref().expect("communicating model").forward(tape, x)
        })?;
        if self.config.aggregator == AggregatorKind::MeanPool {
            let mut avg = Matrix::zeros(rows, rows);
            let w = 1.0 / (n - 1) as f64;
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    for t in 0..len {
                        avg.set(i * len + t, j * len + t, w);
                    }
                }
            }
            let avg = tape.constant(avg);
            let pooled = tape.matmul(avg, msgs)?;
            return self.per_agent_blocks(tape, pooled, len, |net, tape, x| {
                net.lift.as_ref().expect("communicating model").forward(tape, x)
            });
        }
        let step_of: Rc<[usize]> = (0..rows).map(|r| r % len).collect();
        let sender_of: Rc<[usize]> = (0..rows).map(|r| r / len).collect();
        let cache = self.config.cache;
        let allowed = |q: usize, k: usize| {
            let (tq, tk) = (q % len, k % len);
            (cache && tk < tq) || (tk == tq && q / len != k / len)
        };
        let receivers: Vec<Vec<usize>> = if self.nets.len() == 1 {
            vec![(0..rows).collect()]
        } else {
            (0..n).map(|i| (i * len..(i + 1) * len).collect()).collect()
        };
        let mut parts = Vec::with_capacity(receivers.len());
        for (net, qrows) in self.nets.iter().zip(&receivers) {
            let lifted = net.lift.as_ref().expect("slim net").forward(tape, msgs)?;
            let te = net.temporal.as_ref().expect("slim net").forward(tape, step_of.clone())?;
            let se = net.sender.as_ref().expect("slim net").forward(tape, sender_of.clone())?;
            let tok = tape.add(lifted, te)?;
            let tok = tape.add(tok, se)?;
            let q = if qrows.len() == rows {
                enc
            } else {
                tape.slice_rows(enc, qrows[0], qrows.len())?
            };
            let mask: Vec<bool> = qrows
                .iter()
                .flat_map(|&qr| (0..rows).map(move |k| allowed(qr, k)))
                .collect();
            let mask = AttentionMask::new(qrows.len(), rows, mask)?;
            parts.push(net.attention.as_ref().expect("slim net").forward(tape, q, tok, tok, &mask)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_rows(&parts)
        }
    }
}
