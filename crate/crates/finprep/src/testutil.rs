//! Shared fixtures for unit tests.

use crate::wordpiece::VocabTable;

/// A small vocab covering the German words used in fixtures. Words outside
/// it tokenize to [UNK] (one piece), which keeps token counts predictable.
pub fn small_vocab() -> VocabTable {
    VocabTable::from_lines([
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "Der", "der", "Die", "die", "Das", "das",
        "und", "ist", "im", "ein", "eine", "Um", "##satz", "An", "##zahl", "Gewinn", "Quartal",
        "Jahr", "Bericht", "stieg", "fiel", "stark", "gut", ".", ",", "!", "?", ":", "(", ")",
        "Satz", "Wort", "Zahl", "Text", "Firma", "Bank", "Euro", "Mio", "Mrd", "auf", "zu", "von",
        "mit", "für", "nach", "hat", "wird", "wurde", "sich", "nicht", "auch", "mehr", "sehr",
    ])
    .unwrap()
}
