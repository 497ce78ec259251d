use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::autodiff::{init_rng, read_checkpoint, write_checkpoint, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::eventconv::{EventConvParams, MessageConfig};
use crate::graph::VolumeSpec;

/// User-facing transformer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformerConfig {
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// FFN hidden width; `None` means `4 * D`.
    pub ff_dim: Option<usize>,
    /// Treat the whole signature as a single token of width `q * wdt`.
    pub single_token: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig { heads: 2, encoder_layers: 2, decoder_layers: 2, ff_dim: None, single_token: false }
    }
}

/// Resolved dimensions of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Sequence length `S`.
    pub seq_len: usize,
    /// Token width `D`; also the per-head query/key/value width.
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    pub single_token: bool,
}

impl ModelConfig {
    pub fn resolve(message: &MessageConfig, t: &TransformerConfig) -> Result<Self> {
        let (seq_len, dim) = if t.single_token {
            (1, message.signature_len())
        } else {
            (message.quantities.count(), message.width)
        };
        let cfg = ModelConfig {
            seq_len,
            dim,
            heads: t.heads,
            encoder_layers: t.encoder_layers,
            decoder_layers: t.decoder_layers,
            ff_dim: t.ff_dim.unwrap_or(4 * dim),
            single_token: t.single_token,
        };
        if cfg.seq_len == 0 || cfg.dim == 0 || cfg.heads == 0 || cfg.ff_dim == 0 {
            return Err(Error::invalid(format!("degenerate model dimensions {cfg:?}")));
        }
        Ok(cfg)
    }

    pub fn flat_len(&self) -> usize {
        self.seq_len * self.dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MhaParams {
    pub query: Vec<ParamId>,
    pub key: Vec<ParamId>,
    pub value: Vec<ParamId>,
    /// `(heads * D) x D`.
    pub output: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayerParams {
    pub norm1: LayerNormParams,
    pub attention: MhaParams,
    pub norm2: LayerNormParams,
    pub ffn: FfnParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderLayerParams {
    pub norm1: LayerNormParams,
    pub attention1: MhaParams,
    pub norm2: LayerNormParams,
    pub attention2: MhaParams,
    pub norm3: LayerNormParams,
    pub ffn: FfnParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    /// `(S * D) x 2`.
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Handles to every parameter of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelLayout {
    pub conv: EventConvParams,
    pub encoder: Vec<EncoderLayerParams>,
    pub decoder: Vec<DecoderLayerParams>,
    pub head: HeadParams,
}

enum Init {
    Uniform(usize),
    Const(f64),
}

type ParamFactory<'a> = dyn FnMut(String, &[usize], Init) -> Result<ParamId> + 'a;

impl ModelLayout {
    fn build(
        cfg: &ModelConfig,
        conv: EventConvParams,
        get: &mut ParamFactory,
    ) -> Result<Self> {
        let d = cfg.dim;
        let norm = |prefix: &str, get: &mut ParamFactory| -> Result<LayerNormParams> {
            Ok(LayerNormParams {
                gain: get(format!("{prefix}.g"), &[1, d], Init::Const(1.0))?,
                bias: get(format!("{prefix}.b"), &[1, d], Init::Const(0.0))?,
            })
        };
        let mha = |prefix: &str, get: &mut ParamFactory| -> Result<MhaParams> {
            let mut query = Vec::new();
            let mut key = Vec::new();
            let mut value = Vec::new();
            for h in 0..cfg.heads {
                query.push(get(format!("{prefix}.h{h}.q"), &[d, d], Init::Uniform(d))?);
                key.push(get(format!("{prefix}.h{h}.k"), &[d, d], Init::Uniform(d))?);
                value.push(get(format!("{prefix}.h{h}.v"), &[d, d], Init::Uniform(d))?);
            }
            let output = get(format!("{prefix}.o"), &[cfg.heads * d, d], Init::Uniform(cfg.heads * d))?;
            Ok(MhaParams { query, key, value, output })
        };
        let ffn = |prefix: &str, get: &mut ParamFactory| -> Result<FfnParams> {
            Ok(FfnParams {
                w1: get(format!("{prefix}.w1"), &[d, cfg.ff_dim], Init::Uniform(d))?,
                b1: get(format!("{prefix}.b1"), &[1, cfg.ff_dim], Init::Uniform(d))?,
                w2: get(format!("{prefix}.w2"), &[cfg.ff_dim, d], Init::Uniform(cfg.ff_dim))?,
                b2: get(format!("{prefix}.b2"), &[1, d], Init::Uniform(cfg.ff_dim))?,
            })
        };
        let mut encoder = Vec::new();
        for i in 0..cfg.encoder_layers {
            let p = format!("enc{i}");
            encoder.push(EncoderLayerParams {
                norm1: norm(&format!("{p}.ln1"), get)?,
                attention: mha(&format!("{p}.mha"), get)?,
                norm2: norm(&format!("{p}.ln2"), get)?,
                ffn: ffn(&format!("{p}.ffn"), get)?,
            });
        }
        let mut decoder = Vec::new();
        for i in 0..cfg.decoder_layers {
            let p = format!("dec{i}");
            decoder.push(DecoderLayerParams {
                norm1: norm(&format!("{p}.ln1"), get)?,
                attention1: mha(&format!("{p}.mha1"), get)?,
                norm2: norm(&format!("{p}.ln2"), get)?,
                attention2: mha(&format!("{p}.mha2"), get)?,
                norm3: norm(&format!("{p}.ln3"), get)?,
                ffn: ffn(&format!("{p}.ffn"), get)?,
            });
        }
        let flat = cfg.flat_len();
        let head = HeadParams {
            weight: get("head.w".into(), &[flat, 2], Init::Uniform(flat))?,
            bias: get("head.b".into(), &[1, 2], Init::Uniform(flat))?,
        };
        Ok(ModelLayout { conv, encoder, decoder, head })
    }
}

/// All learnable parameters of the classifier plus the hyperparameters that shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseModel {
    pub volume: VolumeSpec,
    pub message: MessageConfig,
    pub transformer: TransformerConfig,
    pub config: ModelConfig,
    pub store: ParamStore,
    pub layout: ModelLayout,
}

impl DenoiseModel {
    /// Fresh model with seeded uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights,
    /// unit layer-norm gains and zero layer-norm biases.
    pub fn new(volume: VolumeSpec, message: MessageConfig, transformer: TransformerConfig, seed: u64) -> Result<Self> {
        let config = ModelConfig::resolve(&message, &transformer)?;
        let mut rng = init_rng(seed);
        let mut store = ParamStore::new();
        let conv = EventConvParams::register(&mut store, &message, &mut rng)?;
        let layout = ModelLayout::build(&config, conv, &mut |name, shape, init| match init {
            Init::Uniform(fan_in) => store.add_uniform(name, shape, fan_in, &mut rng),
            Init::Const(v) => store.add(name, Tensor::filled(shape, v)),
        })?;
        Ok(DenoiseModel { volume, message, transformer, config, store, layout })
    }

    /// Rebuilds a model around an existing parameter store (names must match).
    pub fn from_store(volume: VolumeSpec, message: MessageConfig, transformer: TransformerConfig, store: ParamStore) -> Result<Self> {
        let config = ModelConfig::resolve(&message, &transformer)?;
        let conv = EventConvParams::resolve(&store, &message)?;
        let layout = ModelLayout::build(&config, conv, &mut |name, shape, _| {
            let id = store.find(&name).ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if store.value(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    store.value(id).shape()
                )));
            }
            Ok(id)
        })?;
        Ok(DenoiseModel { volume, message, transformer, config, store, layout })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    fn header(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("volume.L", self.volume.half_extent.to_string()),
            kv("volume.T_us", self.volume.depth_us.to_string()),
            kv("volume.N_max", self.volume.max_neighbors.to_string()),
            kv("msg.variant", self.message.quantities.to_string()),
            kv("msg.width", self.message.width.to_string()),
            kv("msg.reference", self.message.reference.to_string()),
            kv("transformer.heads", self.transformer.heads.to_string()),
            kv("transformer.enc_layers", self.transformer.encoder_layers.to_string()),
            kv("transformer.dec_layers", self.transformer.decoder_layers.to_string()),
            kv("transformer.ff_dim", self.config.ff_dim.to_string()),
            kv("transformer.single_token", self.transformer.single_token.to_string()),
        ]
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_checkpoint(w, &self.header(), &self.store)
    }

    pub fn read_checkpoint<R: std::io::Read>(r: R) -> Result<Self> {
        let (header, store) = read_checkpoint(r)?;
        let get = |k: &str| -> Result<&str> {
            header
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("header is missing `{k}`")))
        };
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Checkpoint(format!("invalid header value `{k}` = `{v}`")))
        }
        let volume = VolumeSpec::new(
            parse("volume.L", get("volume.L")?)?,
            parse("volume.T_us", get("volume.T_us")?)?,
            parse("volume.N_max", get("volume.N_max")?)?,
        )?;
        let message = MessageConfig {
            quantities: get("msg.variant")?.parse()?,
            width: parse("msg.width", get("msg.width")?)?,
            reference: get("msg.reference")?.parse()?,
        };
        let transformer = TransformerConfig {
            heads: parse("transformer.heads", get("transformer.heads")?)?,
            encoder_layers: parse("transformer.enc_layers", get("transformer.enc_layers")?)?,
            decoder_layers: parse("transformer.dec_layers", get("transformer.dec_layers")?)?,
            ff_dim: Some(parse("transformer.ff_dim", get("transformer.ff_dim")?)?),
            single_token: parse("transformer.single_token", get("transformer.single_token")?)?,
        };
        DenoiseModel::from_store(volume, message, transformer, store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}
