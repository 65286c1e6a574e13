//! SoftGPT: a decoder-only transformer over scene-embedding tokens that
//! predicts the next object embedding, plus imagined rollouts and
//! pretraining.

mod pretrain;

pub use pretrain::{finetune, one_step_errors, pretrain, OneStepErrors, PretrainConfig, PretrainReport};

use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphEncoder, LatentState, EMBED_DIM};
use crate::sim::ToolPose;
use crate::tensor::nn::{Init, KvCache, LayerNorm, Linear, TransformerBlock};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoftGptConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    /// Maximum number of tokens attended over.
    pub context: usize,
}

impl Default for SoftGptConfig {
    fn default() -> Self {
        Self { layers: 12, heads: 4, hidden: 32, context: 64 }
    }
}

impl SoftGptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.context == 0 {
            return Err(Error::Config("SoftGPT needs at least one layer and one context slot".into()));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("hidden {} is not divisible by {} heads", self.hidden, self.heads)));
        }
        Ok(())
    }
}

/// Incremental decoding state: one key/value cache per block.
#[derive(Clone, Debug)]
pub struct DecodeState {
    caches: Vec<KvCache>,
    position: usize,
}

impl DecodeState {
    pub fn position(&self) -> usize {
        self.position
    }
}

/// One input position: the scene embedding fed to the model and the object
/// embedding it was built from, which the prediction is an offset of.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Token {
    pub scene: LatentState,
    pub object: LatentState,
}

impl Token {
    fn stack(tokens: &[Token]) -> (crate::tensor::Tensor, crate::tensor::Tensor) {
        let scene: Vec<LatentState> = tokens.iter().map(|t| t.scene).collect();
        let object: Vec<LatentState> = tokens.iter().map(|t| t.object).collect();
        (LatentState::stack(&scene), LatentState::stack(&object))
    }
}

/// Imagined continuation: `states[n]` follows the token built from `poses[n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub states: Vec<LatentState>,
    pub poses: Vec<ToolPose>,
}

#[derive(Clone, Debug)]
pub struct SoftGpt {
    pub config: SoftGptConfig,
    pub store: ParamStore,
    input: Linear,
    positions: ParamId,
    blocks: Vec<TransformerBlock>,
    ln_f: LayerNorm,
    head: Linear,
}

impl SoftGpt {
    pub fn new(config: SoftGptConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let SoftGptConfig { layers, heads, hidden, context } = config;
        let mut store = ParamStore::new();
        let input = Linear::new(&mut store, "gpt.input", EMBED_DIM, hidden, Init::Normal(0.02), rng);
        let positions = store.add_normal("gpt.positions", &[context, hidden], 0.01, rng);
        let blocks = (0..layers).map(|i| TransformerBlock::new(&mut store, &format!("gpt.block{i}"), hidden, heads, layers, rng)).collect();
        let ln_f = LayerNorm::new(&mut store, "gpt.ln_f", hidden);
        let head = Linear::new(&mut store, "gpt.head", hidden, EMBED_DIM, Init::Zeros, rng);
        Ok(Self { config, store, input, positions, blocks, ln_f, head })
    }

    /// Per-position predictions for `batch` sequences of `seq` tokens packed
    /// as `[batch*seq, 32]`. `objects` holds the matching object embeddings;
    /// the head predicts the change from them.
    pub fn forward_seq(&self, tape: &mut Tape, tokens: Var, objects: Var, batch: usize, seq: usize) -> Result<Var> {
        if seq == 0 || seq > self.config.context {
            return Err(Error::Usage(format!("sequence length {seq} outside 1..={}", self.config.context)));
        }
        let x = self.input.forward(tape, &self.store, tokens)?;
        let pos = tape.param(&self.store, self.positions);
        let idx: Rc<[usize]> = (0..batch * seq).map(|r| r % seq).collect();
        let pos = tape.gather_rows(pos, idx)?;
        let mut h = tape.add(x, pos)?;
        for b in &self.blocks {
            h = b.forward_seq(tape, &self.store, h, batch, seq)?;
        }
        self.readout(tape, h, objects)
    }

    fn readout(&self, tape: &mut Tape, h: Var, objects: Var) -> Result<Var> {
        let h = self.ln_f.forward(tape, &self.store, h)?;
        let delta = self.head.forward(tape, &self.store, h)?;
        tape.add(objects, delta)
    }

    pub fn start(&self) -> DecodeState {
        DecodeState { caches: vec![KvCache::default(); self.blocks.len()], position: 0 }
    }

    /// Feeds one token per sequence (`[batch, 32]`) and returns the
    /// prediction at that position.
    pub fn forward_step(&self, tape: &mut Tape, token: Var, object: Var, state: &mut DecodeState) -> Result<Var> {
        if state.position >= self.config.context {
            return Err(Error::Usage(format!("context of {} tokens is full", self.config.context)));
        }
        let b = tape.value(token).rows();
        let x = self.input.forward(tape, &self.store, token)?;
        let pos = tape.param(&self.store, self.positions);
        let pos = tape.gather_rows(pos, vec![state.position; b].into())?;
        let mut h = tape.add(x, pos)?;
        for (block, cache) in self.blocks.iter().zip(&mut state.caches) {
            h = block.forward_step(tape, &self.store, h, cache)?;
        }
        state.position += 1;
        self.readout(tape, h, object)
    }

    fn check_history(&self, len: usize) -> Result<()> {
        if len == 0 || len > self.config.context {
            return Err(Error::Usage(format!("history of {len} tokens outside 1..={}", self.config.context)));
        }
        Ok(())
    }

    /// Prediction at every position of one token sequence.
    pub fn predict_sequence(&self, history: &[Token]) -> Result<Vec<LatentState>> {
        self.check_history(history.len())?;
        let mut tape = Tape::new();
        let (scene, object) = Token::stack(history);
        let (x, o) = (tape.constant(scene), tape.constant(object));
        let y = self.forward_seq(&mut tape, x, o, 1, history.len())?;
        Ok(LatentState::unstack(tape.value(y)))
    }

    /// Predicted object embedding following the last token of `history`.
    pub fn predict_next(&self, history: &[Token]) -> Result<LatentState> {
        let all = self.predict_sequence(history)?;
        Ok(*all.last().expect("non-empty history"))
    }

    /// Alternates `policy` and the model for `horizon` steps from `eps_t`:
    /// the pose chosen at the current embedding forms the next token with
    /// it, and the model predicts the embedding that follows.
    pub fn rollout<P>(
        &self,
        encoder: &GraphEncoder,
        history: &[Token],
        eps_t: LatentState,
        horizon: usize,
        mut policy: P,
    ) -> Result<Rollout>
    where
        P: FnMut(&LatentState) -> Result<ToolPose>,
    {
        if horizon == 0 || horizon > self.config.context.saturating_sub(history.len()) {
            return Err(Error::Usage(format!(
                "horizon {horizon} does not fit a context of {} after {} history tokens",
                self.config.context,
                history.len()
            )));
        }
        let mut tape = Tape::new();
        let mut state = self.start();
        for h in history {
            let (t, o) = (tape.constant(h.scene.to_tensor()), tape.constant(h.object.to_tensor()));
            self.forward_step(&mut tape, t, o, &mut state)?;
        }
        let mut out = Rollout { states: Vec::with_capacity(horizon), poses: Vec::with_capacity(horizon) };
        let mut eps = eps_t;
        for _ in 0..horizon {
            let pose = policy(&eps)?;
            let token = Self::token(encoder, &eps, &pose)?;
            let (t, o) = (tape.constant(token.scene.to_tensor()), tape.constant(eps.to_tensor()));
            let y = self.forward_step(&mut tape, t, o, &mut state)?;
            eps = LatentState::from_slice(tape.value(y).data())
                .map_err(|_| Error::Simulation { step: out.states.len(), reason: "non-finite imagined state".into() })?;
            out.states.push(eps);
            out.poses.push(pose);
        }
        Ok(out)
    }

    /// Writes the weights and a `<stem>.json` configuration sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.store, path)?;
        let meta = meta_path(path);
        fs::write(&meta, serde_json::to_vec_pretty(&self.config)?).map_err(|e| Error::io(&meta, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta = meta_path(path);
        let bytes = fs::read(&meta).map_err(|e| Error::io(&meta, e))?;
        let config: SoftGptConfig = serde_json::from_slice(&bytes)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, &mut rng)?;
        load_checkpoint(&mut model.store, path)?;
        Ok(model)
    }

    /// Token from an object embedding and the pose that acts on it.
    pub fn token(encoder: &GraphEncoder, eps: &LatentState, pose: &ToolPose) -> Result<Token> {
        let scene = encoder.embed_predicted(std::slice::from_ref(eps), std::slice::from_ref(pose))?[0];
        Ok(Token { scene, object: *eps })
    }
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
