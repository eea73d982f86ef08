use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::fingerprint::sha256_hex;
use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_INDEX: usize = 0;

/// Lowercased words: runs of alphanumerics and hyphens, with hyphens trimmed
/// from the ends so `T-72` stays one word but `--` separates.
pub fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|w| w.trim_matches('-'))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Token indices for `text`; unknown words map to [`UNK_INDEX`].
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<usize> {
    split_words(text).iter().map(|w| vocab.index_of(w)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Format(format!("vocab must start with `{UNK}`")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate().skip(1) {
            if t == UNK || t.is_empty() {
                return Err(Error::Format(format!("vocab line {i}: invalid token `{t}`")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("vocab line {i}: duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Vocabulary of every word in `texts`, sorted, after `<unk>`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(split_words).collect();
        let tokens = std::iter::once(UNK.to_string()).chain(words).collect();
        Self::from_tokens(tokens).expect("split_words never yields <unk> or duplicates")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// File form: one token per line, line number is the index.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// Hash of the file form; checkpoints record it to pin their vocabulary.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_file_string().as_bytes())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
            .map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_sentence() {
        let vocab = Vocab::build(["A SAR image of the tank"]);
        let ids = tokenize("A SAR image of the tank", &vocab);
        let words: Vec<_> = ids.iter().map(|&i| vocab.token(i).unwrap()).collect();
        assert_eq!(words, ["a", "sar", "image", "of", "the", "tank"]);
        assert!(ids.iter().all(|&i| i != UNK_INDEX));
    }

    #[test]
    fn empty_and_unknown() {
        let vocab = Vocab::build(["ship"]);
        assert!(tokenize("", &vocab).is_empty());
        assert_eq!(tokenize("tank", &vocab), vec![UNK_INDEX]);
    }

    #[test]
    fn hyphenated_class_names() {
        assert_eq!(split_words("The T-72, near -- the BMP-2."), ["the", "t-72", "near", "the", "bmp-2"]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        let vocab = Vocab::build(["two ships and one bridge", "A tank"]);
        vocab.write(&p).unwrap();
        let back = Vocab::read(&p).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.content_hash(), vocab.content_hash());
        assert_eq!(back.token(0), Some(UNK));
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        std::fs::write(&p, "ship\n<unk>\n").unwrap();
        assert!(Vocab::read(&p).is_err());
        std::fs::write(&p, "<unk>\nship\nship\n").unwrap();
        assert!(Vocab::read(&p).is_err());
    }
}
