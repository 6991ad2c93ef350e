use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::ConvBank;
use super::tensor::Tensor;
use super::vocab::Vocab;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub char_dim: usize,
    pub word_dim: usize,
    /// Filters per window size, shared by the char and word encoders.
    pub filters: usize,
    pub windows: Vec<usize>,
    /// Half-width of the uniform initialization interval.
    pub init_range: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            char_dim: 128,
            word_dim: 128,
            filters: 128,
            windows: vec![2, 3],
            init_range: 0.08,
        }
    }
}

impl EncoderConfig {
    /// Output dimension `d` of both encoders.
    pub fn output_dim(&self) -> usize {
        self.filters * self.windows.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_dim == 0 || self.word_dim == 0 || self.filters == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::Config("encoder windows must be a non-empty list of positive sizes".into()));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(Error::Config("init_range must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Index into [`EncoderParams::tensors`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Char,
    Word,
}

/// All trainable tensors. Layout: char table, word table, then per window
/// `(char weight, char bias, word weight, word bias)`, then the attention vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub tensors: Vec<Tensor>,
}

impl EncoderParams {
    pub fn init(config: EncoderConfig, vocab: Vocab, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let r = config.init_range;
        let mut uniform = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 })
                .collect();
            Tensor::from_vec(rows, cols, data)
        };
        let mut tensors = vec![
            uniform(vocab.n_chars(), config.char_dim),
            uniform(vocab.n_words(), config.word_dim),
        ];
        for &w in &config.windows {
            tensors.push(uniform(config.filters, w * config.char_dim));
            tensors.push(Tensor::zeros(1, config.filters));
            tensors.push(uniform(config.filters, w * config.word_dim));
            tensors.push(Tensor::zeros(1, config.filters));
        }
        tensors.push(uniform(1, config.output_dim()));
        Ok(Self {
            config,
            vocab,
            tensors,
        })
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn char_table(&self) -> ParamId {
        ParamId(0)
    }

    pub fn word_table(&self) -> ParamId {
        ParamId(1)
    }

    pub fn banks(&self, side: Side) -> Vec<ConvBank> {
        let shift = match side {
            Side::Char => 0,
            Side::Word => 2,
        };
        self.config
            .windows
            .iter()
            .enumerate()
            .map(|(k, &width)| ConvBank {
                weight: ParamId(2 + 4 * k + shift),
                bias: ParamId(3 + 4 * k + shift),
                width,
            })
            .collect()
    }

    pub fn attention(&self) -> ParamId {
        ParamId(self.tensors.len() - 1)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Appends rows for unseen characters and words of `texts`, initialized
    /// from the configured uniform distribution. Existing rows are untouched.
    /// Returns the number of (chars, words) added.
    pub fn grow_vocab<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>, rng: &mut impl Rng) -> (usize, usize) {
        let mut added = (0, 0);
        for t in texts {
            let (c, w) = self.vocab.extend_with(t);
            added.0 += c;
            added.1 += w;
        }
        let r = self.config.init_range;
        for (table, extra) in [(0usize, added.0), (1usize, added.1)] {
            let t = &mut self.tensors[table];
            let old = t.data.len();
            t.grow_rows(extra);
            for x in &mut t.data[old..] {
                *x = if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
            }
        }
        added
    }
}
