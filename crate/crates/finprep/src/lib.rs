//! Corpus preparation and evaluation toolkit for German financial
//! language-model training.
//!
//! The pipeline ingests raw documents from JSONL corpus files, filters out
//! non-German texts, segments documents into sentences, splits long documents
//! into sentence-aligned chunks targeting sampled minimum token counts, and
//! emits masked-language-model training examples. Around this core sit
//! corpus statistics, stratified dataset splitting, extractive-QA dataset
//! generation via a pluggable LLM client, and evaluation metrics
//! (accuracy, macro/micro F1, exact match, token-overlap F1, nDCG) plus a
//! zero-shot passage-retrieval harness.

pub mod chunker;
pub mod config;
pub mod corpus;
pub mod datasets;
pub mod manifest;
pub mod metrics;
pub mod mlm;
pub mod qagen;
pub mod retrieval;
pub mod seeding;
pub mod segmenter;
pub mod stats;
#[cfg(test)]
pub(crate) mod testutil;
pub mod wordpiece;
