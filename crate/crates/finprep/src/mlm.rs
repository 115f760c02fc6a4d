//! Masked-language-model example construction and the training-recipe
//! manifest consumed by external trainers.
//!
//! Masking decisions flow from an RNG keyed by (seed, epoch, doc id, chunk
//! index), so datasets are bit-identical across runs and worker counts.
//! Keying the epoch in realizes dynamic masking while staying reproducible.

use std::io::{self, Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::seeding::keyed_rng;
use crate::wordpiece::{encode, TokenSequence, VocabTable, MAX_SEQ_LEN};

/// Label value at positions that do not contribute to the loss.
pub const IGNORE_LABEL: i32 = -100;

#[derive(Debug, Error)]
pub enum MlmError {
    #[error("mask_prob must be in (0, 1), got {0}")]
    BadMaskProb(f64),
    #[error("action split must sum to 1, got {0}/{1}/{2}")]
    BadActionSplit(f64, f64, f64),
    #[error("record file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("record file truncated")]
    Truncated,
}

/// Masking parameters; defaults are the BERT conventions (15%, 80/10/10).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub mask_prob: f64,
    pub mask_action: f64,
    pub random_action: f64,
    pub keep_action: f64,
    pub whole_word: bool,
    pub seed: u64,
    pub epoch: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_prob: 0.15,
            mask_action: 0.8,
            random_action: 0.1,
            keep_action: 0.1,
            whole_word: false,
            seed: 0,
            epoch: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<(), MlmError> {
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(MlmError::BadMaskProb(self.mask_prob));
        }
        let sum = self.mask_action + self.random_action + self.keep_action;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MlmError::BadActionSplit(
                self.mask_action,
                self.random_action,
                self.keep_action,
            ));
        }
        Ok(())
    }
}

/// One training example: corrupted input, labels carrying the original ids
/// at corrupted positions, attention flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmExample {
    pub input_ids: Vec<u32>,
    pub labels: Vec<i32>,
    pub attention: Vec<bool>,
    /// No position was maskable (e.g. an empty chunk); flagged for reports.
    pub no_maskable: bool,
}

fn draw_action(rng: &mut impl Rng, config: &MaskingConfig) -> Action {
    let x = rng.gen::<f64>();
    if x < config.mask_action {
        Action::Mask
    } else if x < config.mask_action + config.random_action {
        Action::Random
    } else {
        Action::Keep
    }
}

#[derive(Clone, Copy)]
enum Action {
    Mask,
    Random,
    Keep,
}

fn random_non_special(rng: &mut impl Rng, vocab: &VocabTable) -> u32 {
    loop {
        let id = rng.gen_range(0..vocab.len() as u32);
        if !vocab.is_special(id) {
            return id;
        }
    }
}

/// Corrupt a sequence for MLM training. Special and padding positions are
/// never touched and always carry the ignore label.
pub fn mask_tokens(
    seq: &TokenSequence,
    vocab: &VocabTable,
    config: &MaskingConfig,
    doc_id: &str,
    chunk_index: u64,
) -> MlmExample {
    let mut rng = keyed_rng(
        config.seed,
        &[
            b"mlm",
            &config.epoch.to_le_bytes(),
            doc_id.as_bytes(),
            &chunk_index.to_le_bytes(),
        ],
    );
    let mut input_ids = seq.ids.clone();
    let mut labels = vec![IGNORE_LABEL; seq.ids.len()];
    let maskable: Vec<bool> = seq
        .ids
        .iter()
        .zip(&seq.attention)
        .map(|(&id, &real)| real && !vocab.is_special(id))
        .collect();

    let mut any = false;
    let mut corrupt = |pos: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let original = seq.ids[pos];
        labels[pos] = original as i32;
        match draw_action(rng, config) {
            Action::Mask => input_ids[pos] = vocab.mask_id,
            Action::Random => input_ids[pos] = random_non_special(rng, vocab),
            Action::Keep => {}
        }
    };

    if config.whole_word {
        // Words are the ranges between consecutive word-start indices.
        let bounds = &seq.word_boundaries;
        for (w, &start) in bounds.iter().enumerate() {
            let end = bounds
                .get(w + 1)
                .copied()
                .unwrap_or_else(|| {
                    // Last word runs to the end of the maskable region.
                    maskable
                        .iter()
                        .rposition(|&m| m)
                        .map(|p| p + 1)
                        .unwrap_or(start)
                });
            if start >= end {
                continue;
            }
            any = true;
            if rng.gen::<f64>() < config.mask_prob {
                for pos in start..end {
                    if maskable[pos] {
                        corrupt(pos, &mut rng);
                    }
                }
            }
        }
    } else {
        for (pos, &ok) in maskable.iter().enumerate() {
            if !ok {
                continue;
            }
            any = true;
            if rng.gen::<f64>() < config.mask_prob {
                corrupt(pos, &mut rng);
            }
        }
    }
    let no_maskable = !any;
    MlmExample {
        input_ids,
        labels,
        attention: seq.attention.clone(),
        no_maskable,
    }
}

/// The pre-training hyper-parameter constants, immutable per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub variant: String,
    pub hidden_size: u32,
    pub intermediate_size: u32,
    pub attention_heads: u32,
    pub hidden_layers: u32,
    pub activation: String,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: u32,
    pub steps: u32,
    pub seq_len: u32,
}

/// Recipe variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecipeVariant {
    Scratch,
    Further,
}

impl TrainingRecipe {
    pub fn emit(variant: RecipeVariant) -> TrainingRecipe {
        let (name, peak_lr, steps) = match variant {
            RecipeVariant::Scratch => ("scratch", 5e-4, 174_000),
            RecipeVariant::Further => ("further", 1e-4, 10_400),
        };
        TrainingRecipe {
            variant: name.into(),
            hidden_size: 768,
            intermediate_size: 3072,
            attention_heads: 12,
            hidden_layers: 12,
            activation: "GeLU".into(),
            dropout: 0.10,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_epsilon: 1e-6,
            weight_decay: 1e-5,
            peak_lr,
            warmup_fraction: 0.06,
            batch_size: 4096,
            steps,
            seq_len: MAX_SEQ_LEN as u32,
        }
    }
}

/// Manifest written next to an MLM dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub examples: u64,
    pub no_maskable_examples: u64,
    pub masking: MaskingConfig,
    pub recipe: TrainingRecipe,
}

/// Encode each chunk to 512 tokens with specials, then mask. Parallel over
/// chunks, deterministic output order.
pub fn build_dataset(
    chunks: &[Chunk],
    vocab: &VocabTable,
    config: &MaskingConfig,
    variant: RecipeVariant,
) -> Result<(Vec<MlmExample>, DatasetManifest), MlmError> {
    config.validate()?;
    let examples: Vec<MlmExample> = chunks
        .par_iter()
        .map(|chunk| {
            let seq = encode(&chunk.text, vocab, MAX_SEQ_LEN, true);
            mask_tokens(&seq, vocab, config, &chunk.doc_id, chunk.index as u64)
        })
        .collect();
    let manifest = DatasetManifest {
        examples: examples.len() as u64,
        no_maskable_examples: examples.iter().filter(|e| e.no_maskable).count() as u64,
        masking: config.clone(),
        recipe: TrainingRecipe::emit(variant),
    };
    Ok((examples, manifest))
}

/// Binary record layout, little-endian throughout: per example, a u32
/// sequence length n and a u8 no-maskable flag, then n u32 input ids,
/// n i32 labels and n u32 attention flags (1 = real token, 0 = padding).
pub fn write_records(examples: &[MlmExample], mut writer: impl Write) -> Result<(), MlmError> {
    for ex in examples {
        let n = ex.input_ids.len() as u32;
        writer.write_all(&n.to_le_bytes())?;
        writer.write_all(&[ex.no_maskable as u8])?;
        for &id in &ex.input_ids {
            writer.write_all(&id.to_le_bytes())?;
        }
        for &label in &ex.labels {
            writer.write_all(&label.to_le_bytes())?;
        }
        for &real in &ex.attention {
            writer.write_all(&(real as u32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Inverse of [`write_records`].
pub fn read_records(mut reader: impl Read) -> Result<Vec<MlmExample>, MlmError> {
    let mut examples = Vec::new();
    let mut len_buf = [0u8; 4];
    loop {
        match reader.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let n = u32::from_le_bytes(len_buf) as usize;
        let mut flag_buf = [0u8; 1];
        reader
            .read_exact(&mut flag_buf)
            .map_err(|_| MlmError::Truncated)?;
        let no_maskable = flag_buf[0] != 0;
        let read_u32s = |reader: &mut dyn Read| -> Result<Vec<u32>, MlmError> {
            let mut buf = vec![0u8; n * 4];
            reader
                .read_exact(&mut buf)
                .map_err(|_| MlmError::Truncated)?;
            Ok(buf
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let input_ids = read_u32s(&mut reader)?;
        let labels: Vec<i32> = read_u32s(&mut reader)?
            .into_iter()
            .map(|v| v as i32)
            .collect();
        let attention: Vec<bool> = read_u32s(&mut reader)?
            .into_iter()
            .map(|v| v != 0)
            .collect();
        examples.push(MlmExample {
            input_ids,
            labels,
            attention,
            no_maskable,
        });
    }
    Ok(examples)
}
