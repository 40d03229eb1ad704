//! Shared bottom (GRU history encoder + context embedding + ReLU stack) and
//! the softmax policy head over the item catalog. The imputation head lives
//! in `imputation`, but its parameters are part of the same model so both
//! heads share one store and one checkpoint.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::store::{glorot_init, uniform_init, ParamStore};
use crate::nn::tape::{softmax_temperature, NodeId, Tape};
use crate::nn::tensor::Tensor;

/// Per-event scalar features fed to the GRU next to the item embedding:
/// engagement and log-compressed dwell time. Without them the state could
/// only see which items were shown, not how the user reacted.
pub const EVENT_FEATURES: usize = 2;

/// Log-compressed dwell time, roughly in [0, 1] for sessions under ten
/// minutes.
pub fn time_feature(seconds: f64) -> f64 {
    (1.0 + seconds.max(0.0)).ln() / (1801.0f64).ln()
}

/// One logged interaction, as seen by the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub item_id: usize,
    /// Completion ratio in [0, 1].
    pub engagement: f64,
    pub time_spent_sec: f64,
    pub context_id: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub catalog_size: usize,
    /// Dimension of action embeddings and of the user state.
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub context_count: usize,
    pub context_dim: usize,
    /// Width of the encoder's intermediate ReLU layer.
    pub encoder_hidden: usize,
    /// Widths of the imputation head's ReLU stack.
    pub head_hidden: Vec<usize>,
    pub temperature: f64,
    /// History truncation; oldest events are dropped first.
    pub max_history: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            catalog_size: 2000,
            embed_dim: 16,
            hidden_dim: 32,
            context_count: 4,
            context_dim: 8,
            encoder_hidden: 32,
            head_hidden: vec![64, 32],
            temperature: 1.0,
            max_history: 50,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.catalog_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Parameter node ids bound into one tape.
pub struct Bindings {
    pub emb_item: NodeId,
    pub emb_ctx: NodeId,
    gru_wr: NodeId,
    gru_br: NodeId,
    gru_wz: NodeId,
    gru_bz: NodeId,
    gru_wn: NodeId,
    gru_bn: NodeId,
    enc0_w: NodeId,
    enc0_b: NodeId,
    enc1_w: NodeId,
    enc1_b: NodeId,
    imp: Vec<(NodeId, NodeId)>,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
}

/// Prefix of `imp`-head parameter names; gradients stop at the shared bottom,
/// so these are the only parameters an imputation-only update may touch.
pub const IMPUTATION_PREFIX: &str = "imp.";

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.embed_dim;
        let h = cfg.hidden_dim;
        store.insert(
            "emb.item",
            uniform_init(&mut rng, &[cfg.catalog_size, d], 0.05),
        );
        store.insert(
            "emb.ctx",
            uniform_init(&mut rng, &[cfg.context_count, cfg.context_dim], 0.05),
        );
        for gate in ["r", "z", "n"] {
            store.insert(
                &format!("gru.w_{gate}"),
                glorot_init(&mut rng, h + d + EVENT_FEATURES, h),
            );
            store.insert(&format!("gru.b_{gate}"), Tensor::zeros(&[h]));
        }
        store.insert(
            "enc.0.w",
            glorot_init(&mut rng, h + cfg.context_dim, cfg.encoder_hidden),
        );
        store.insert("enc.0.b", Tensor::zeros(&[cfg.encoder_hidden]));
        store.insert("enc.1.w", glorot_init(&mut rng, cfg.encoder_hidden, d));
        store.insert("enc.1.b", Tensor::zeros(&[d]));

        let mut input = 2 * d;
        for (i, &width) in cfg.head_hidden.iter().enumerate() {
            store.insert(&format!("imp.{i}.w"), glorot_init(&mut rng, input, width));
            store.insert(&format!("imp.{i}.b"), Tensor::zeros(&[width]));
            input = width;
        }
        store.insert("imp.out.w", glorot_init(&mut rng, input, 1));
        store.insert("imp.out.b", Tensor::zeros(&[1]));
        Ok(Model { cfg, store })
    }

    /// Rebuild a model around an existing parameter store (checkpoint
    /// restore). Shapes must match what `new` would have produced.
    pub fn from_parts(cfg: ModelConfig, store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let reference = Model::new(cfg.clone(), 0)?;
        for (name, p) in reference.store.iter() {
            if !store.contains(name) {
                return Err(Error::Data(format!("checkpoint missing parameter {name}")));
            }
            if store.value(name).shape != p.value.shape {
                return Err(Error::Data(format!(
                    "checkpoint parameter {name} has shape {:?}, expected {:?}",
                    store.value(name).shape,
                    p.value.shape
                )));
            }
        }
        Ok(Model { cfg, store })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let mut imp = Vec::new();
        for i in 0..self.cfg.head_hidden.len() {
            imp.push((
                tape.param(&self.store, &format!("imp.{i}.w")),
                tape.param(&self.store, &format!("imp.{i}.b")),
            ));
        }
        imp.push((
            tape.param(&self.store, "imp.out.w"),
            tape.param(&self.store, "imp.out.b"),
        ));
        Bindings {
            emb_item: tape.param(&self.store, "emb.item"),
            emb_ctx: tape.param(&self.store, "emb.ctx"),
            gru_wr: tape.param(&self.store, "gru.w_r"),
            gru_br: tape.param(&self.store, "gru.b_r"),
            gru_wz: tape.param(&self.store, "gru.w_z"),
            gru_bz: tape.param(&self.store, "gru.b_z"),
            gru_wn: tape.param(&self.store, "gru.w_n"),
            gru_bn: tape.param(&self.store, "gru.b_n"),
            enc0_w: tape.param(&self.store, "enc.0.w"),
            enc0_b: tape.param(&self.store, "enc.0.b"),
            enc1_w: tape.param(&self.store, "enc.1.w"),
            enc1_b: tape.param(&self.store, "enc.1.b"),
            imp,
        }
    }

    /// GRU input for one event: item embedding plus reaction features.
    fn event_input(&self, tape: &mut Tape, b: &Bindings, ev: &InteractionEvent) -> Result<NodeId> {
        self.check_item(ev.item_id)?;
        let item = tape.row(b.emb_item, ev.item_id);
        let extra = tape.constant(Tensor::vector(vec![
            ev.engagement,
            time_feature(ev.time_spent_sec),
        ]));
        Ok(tape.concat(&[item, extra]))
    }

    /// Standard gated recurrent update; output entries stay in (-1, 1).
    pub fn gru_step(&self, tape: &mut Tape, b: &Bindings, hidden: NodeId, x: NodeId) -> Result<NodeId> {
        let hx = tape.concat(&[hidden, x]);
        let r_lin = tape.affine(hx, b.gru_wr, b.gru_br)?;
        let r = tape.sigmoid(r_lin);
        let z_lin = tape.affine(hx, b.gru_wz, b.gru_bz)?;
        let z = tape.sigmoid(z_lin);
        let rh = tape.mul(r, hidden);
        let rhx = tape.concat(&[rh, x]);
        let n_lin = tape.affine(rhx, b.gru_wn, b.gru_bn)?;
        let n = tape.tanh(n_lin);
        // h' = (1 - z) * h + z * n
        let zh = tape.mul(z, hidden);
        let keep = tape.sub(hidden, zh);
        let zn = tape.mul(z, n);
        Ok(tape.add(keep, zn))
    }

    fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.cfg.catalog_size {
            return Err(Error::Data(format!(
                "item id {item} outside catalog of {}",
                self.cfg.catalog_size
            )));
        }
        Ok(())
    }

    fn check_context(&self, ctx: usize) -> Result<()> {
        if ctx >= self.cfg.context_count {
            return Err(Error::Data(format!(
                "context id {ctx} outside {} buckets",
                self.cfg.context_count
            )));
        }
        Ok(())
    }

    /// Map a GRU hidden node plus a context id to the user state u_s.
    pub fn user_state(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        hidden: NodeId,
        context_id: usize,
    ) -> Result<NodeId> {
        self.check_context(context_id)?;
        let ctx = tape.row(b.emb_ctx, context_id);
        let joined = tape.concat(&[hidden, ctx]);
        let l0 = tape.affine(joined, b.enc0_w, b.enc0_b)?;
        let a0 = tape.relu(l0);
        tape.affine(a0, b.enc1_w, b.enc1_b)
    }

    /// Run the GRU over an item history (oldest first) on the tape, returning
    /// the final hidden node. Truncates to `max_history` from the oldest side.
    pub fn encode_history(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        history: &[InteractionEvent],
    ) -> Result<NodeId> {
        let start = history.len().saturating_sub(self.cfg.max_history);
        let mut hidden = tape.constant(Tensor::zeros(&[self.cfg.hidden_dim]));
        for ev in &history[start..] {
            let x = self.event_input(tape, b, ev)?;
            hidden = self.gru_step(tape, b, hidden, x)?;
        }
        Ok(hidden)
    }

    /// Incremental hidden states for every prefix of one episode: entry t is
    /// the hidden state after consuming events[0..t] (so entry 0 is the empty
    /// history). Used to get all per-step states in one GRU pass.
    pub fn prefix_hiddens(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        events: &[InteractionEvent],
    ) -> Result<Vec<NodeId>> {
        if events.len() > self.cfg.max_history {
            // Truncation kicks in; fall back to per-prefix encoding.
            let mut out = Vec::with_capacity(events.len());
            for t in 0..events.len() {
                out.push(self.encode_history(tape, b, &events[..t])?);
            }
            return Ok(out);
        }
        let mut out = Vec::with_capacity(events.len());
        let mut hidden = tape.constant(Tensor::zeros(&[self.cfg.hidden_dim]));
        for ev in events {
            out.push(hidden);
            let x = self.event_input(tape, b, ev)?;
            hidden = self.gru_step(tape, b, hidden, x)?;
        }
        Ok(out)
    }

    /// Encode one state as plain values (inference path).
    pub fn encode_state(
        &self,
        history: &[InteractionEvent],
        context_id: usize,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let hidden = self.encode_history(&mut tape, &b, history)?;
        let u = self.user_state(&mut tape, &b, hidden, context_id)?;
        Ok(tape.value(u).data.clone())
    }

    /// Catalog logits u_s . v_a on the tape.
    pub fn policy_logits(&self, tape: &mut Tape, b: &Bindings, u: NodeId) -> Result<NodeId> {
        tape.matvec(b.emb_item, u)
    }

    /// pi(a | s) over the whole catalog from a plain user state.
    pub fn policy_probs(&self, user_state: &[f64]) -> Result<Vec<f64>> {
        let emb = self.store.value("emb.item");
        if user_state.len() != self.cfg.embed_dim {
            return Err(Error::Config(format!(
                "user state dim {} != embed dim {}",
                user_state.len(),
                self.cfg.embed_dim
            )));
        }
        let logits: Vec<f64> = (0..self.cfg.catalog_size)
            .map(|a| {
                emb.row(a)
                    .iter()
                    .zip(user_state)
                    .map(|(v, u)| v * u)
                    .sum::<f64>()
            })
            .collect();
        softmax_temperature(&logits, self.cfg.temperature)
    }

    /// Imputation-head logit for (u_s, v_a); both inputs pass through a
    /// stop-gradient so head training cannot move the shared bottom.
    pub fn impute_logit(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        u: NodeId,
        item_id: usize,
    ) -> Result<NodeId> {
        self.check_item(item_id)?;
        let v = tape.row(b.emb_item, item_id);
        let u_sg = tape.stop_grad(u);
        let v_sg = tape.stop_grad(v);
        let mut x = tape.concat(&[u_sg, v_sg]);
        let layers = b.imp.len();
        for (i, &(w, bias)) in b.imp.iter().enumerate() {
            let lin = tape.affine(x, w, bias)?;
            x = if i + 1 < layers { tape.relu(lin) } else { lin };
        }
        Ok(x)
    }
}

/// Sample K distinct items without replacement, proportionally to `probs`
/// with sequential renormalization. Returns (item, single-draw propensity).
pub fn sample_actions<R: Rng>(
    probs: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    if k > probs.len() {
        return Err(Error::Config(format!(
            "cannot sample {k} distinct items from a catalog of {}",
            probs.len()
        )));
    }
    let mut remaining: Vec<f64> = probs.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().sum();
        let mut u = rng.gen_range(0.0..1.0) * total;
        let mut chosen = remaining.len() - 1;
        for (i, &p) in remaining.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            if u < p {
                chosen = i;
                break;
            }
            u -= p;
        }
        out.push((chosen, probs[chosen]));
        remaining[chosen] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(seed: u64) -> Model {
        Model::new(
            ModelConfig {
                catalog_size: 6,
                embed_dim: 4,
                hidden_dim: 5,
                context_count: 2,
                context_dim: 3,
                encoder_hidden: 6,
                head_hidden: vec![5, 4],
                ..Default::default()
            },
            seed,
        )
        .unwrap()
    }

    fn ev(item: usize) -> InteractionEvent {
        InteractionEvent {
            item_id: item,
            engagement: 0.5,
            time_spent_sec: 10.0,
            context_id: 0,
        }
    }

    #[test]
    fn gru_zero_everything_gives_zero_hidden() {
        let mut m = tiny_model(0);
        for gate in ["r", "z", "n"] {
            let p = m.store.get_mut(&format!("gru.w_{gate}"));
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let b = m.bind(&mut tape);
        let h = tape.constant(Tensor::zeros(&[5]));
        let x = tape.constant(Tensor::zeros(&[4 + EVENT_FEATURES]));
        let h2 = m.gru_step(&mut tape, &b, h, x).unwrap();
        assert!(tape.value(h2).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_repeated_input_converges_for_contractive_params() {
        let mut m = tiny_model(1);
        // Shrink recurrent weights so the map is a contraction.
        for gate in ["r", "z", "n"] {
            let p = m.store.get_mut(&format!("gru.w_{gate}"));
            p.value.data.iter_mut().for_each(|v| *v *= 0.3);
        }
        let mut tape = Tape::new();
        let b = m.bind(&mut tape);
        let x = tape.constant(Tensor::vector(vec![0.2, -0.1, 0.4, 0.3, 0.7, 0.5]));
        let mut h = tape.constant(Tensor::zeros(&[5]));
        let mut prev = vec![0.0; 5];
        let mut delta = f64::INFINITY;
        for _ in 0..500 {
            h = m.gru_step(&mut tape, &b, h, x).unwrap();
            let cur = tape.value(h).data.clone();
            delta = cur
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            prev = cur;
            if delta < 1e-6 {
                break;
            }
        }
        assert!(delta < 1e-6, "no fixed point, delta = {delta}");
        assert!(prev.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gru_backward_matches_finite_differences() {
        let m = tiny_model(2);
        let report = crate::nn::grad_check(
            &m.store,
            |tape, store| {
                let mut m2 = tiny_model(2);
                m2.store = store.clone();
                let b = m2.bind(tape);
                let hist = [ev(0), ev(3), ev(1)];
                let hidden = m2.encode_history(tape, &b, &hist).unwrap();
                let u = m2.user_state(tape, &b, hidden, 1).unwrap();
                let logits = m2.policy_logits(tape, &b, u).unwrap();
                tape.log_softmax_pick(logits, 1.0, 2).unwrap()
            },
            crate::nn::DEFAULT_STEP,
        );
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }

    #[test]
    fn encode_state_empty_history_is_finite_and_deterministic() {
        let m = tiny_model(3);
        let a = m.encode_state(&[], 0).unwrap();
        let b = m.encode_state(&[], 0).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_state_is_order_sensitive() {
        let m = tiny_model(4);
        let fwd = m.encode_state(&[ev(0), ev(1), ev(2)], 0).unwrap();
        let rev = m.encode_state(&[ev(2), ev(1), ev(0)], 0).unwrap();
        assert_ne!(fwd, rev);
    }

    #[test]
    fn encode_state_rejects_bad_ids() {
        let m = tiny_model(5);
        assert!(m.encode_state(&[ev(99)], 0).is_err());
        assert!(m.encode_state(&[], 99).is_err());
    }

    #[test]
    fn history_truncation_drops_oldest() {
        let mut m = tiny_model(6);
        m.cfg.max_history = 2;
        let long = m.encode_state(&[ev(5), ev(1), ev(2)], 0).unwrap();
        let short = m.encode_state(&[ev(1), ev(2)], 0).unwrap();
        assert_eq!(long, short);
    }

    #[test]
    fn identical_embeddings_give_uniform_policy() {
        let mut m = tiny_model(7);
        let emb = m.store.get_mut("emb.item");
        let row: Vec<f64> = emb.value.row(0).to_vec();
        for r in 1..6 {
            for (j, &v) in row.iter().enumerate() {
                emb.value.data[r * 4 + j] = v;
            }
        }
        let probs = m.policy_probs(&[0.3, -0.2, 0.5, 0.1]).unwrap();
        for p in probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_embedding_dominates_at_low_temperature() {
        let mut m = tiny_model(8);
        m.cfg.temperature = 0.01;
        // Give item 2 an embedding far larger than the ±0.05 random rows so
        // its self-alignment logit dominates by construction.
        {
            let emb = m.store.get_mut("emb.item");
            let d = emb.value.shape[1];
            for j in 0..d {
                emb.value.data[2 * d + j] = 1.0;
            }
        }
        let u = m.store.value("emb.item").row(2).to_vec();
        let probs = m.policy_probs(&u).unwrap();
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 2);
        assert!(probs[2] > 0.999);
    }

    #[test]
    fn temperature_scale_equivalence() {
        let m = tiny_model(9);
        let u = vec![0.4, -0.3, 0.2, 0.7];
        let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let mut m2 = Model { cfg: m.cfg.clone(), store: m.store.clone() };
        m2.cfg.temperature = 2.0;
        let p1 = m.policy_probs(&u).unwrap();
        let p2 = m2.policy_probs(&doubled).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_all_items_when_k_equals_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        let mut picks: Vec<usize> = sample_actions(&probs, 4, &mut rng)
            .unwrap()
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn point_mass_is_always_picked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = vec![0.0, 1.0, 0.0];
        for _ in 0..50 {
            let picks = sample_actions(&probs, 1, &mut rng).unwrap();
            assert_eq!(picks[0], (1, 1.0));
        }
    }

    #[test]
    fn k_larger_than_catalog_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_actions(&[1.0], 2, &mut rng).is_err());
    }

    #[test]
    fn single_draw_frequencies_match_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let probs = vec![0.5, 0.3, 0.15, 0.05];
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (item, prop) = sample_actions(&probs, 1, &mut rng).unwrap()[0];
            assert_eq!(prop, probs[item]);
            counts[item] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = probs[i];
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p).abs() < 3.0 * sigma + 1e-9,
                "item {i}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn stopgrad_keeps_imputation_grads_off_shared_bottom() {
        let m = tiny_model(10);
        let mut tape = Tape::new();
        let b = m.bind(&mut tape);
        let hist = [ev(0), ev(1)];
        let hidden = m.encode_history(&mut tape, &b, &hist).unwrap();
        let u = m.user_state(&mut tape, &b, hidden, 0).unwrap();
        let logit = m.impute_logit(&mut tape, &b, u, 3).unwrap();
        let loss = tape.logistic_loss(logit, 1.0, 1.0);
        let grads = tape.backward(loss);
        for name in grads.by_name.keys() {
            assert!(
                name.starts_with(IMPUTATION_PREFIX),
                "gradient leaked into {name}"
            );
        }
        assert!(!grads.by_name.is_empty());
    }
}
