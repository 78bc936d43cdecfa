//! Token string <-> id mapping with four reserved ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const SEP: TokenId = 3;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SEP_TOKEN: &str = "<sep>";

const RESERVED: [&str; 4] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, SEP_TOKEN];

/// Bijective mapping between token strings and ids. Ids 0-3 are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for tok in RESERVED {
            vocab.insert(tok);
        }
        vocab
    }

    /// Builds a vocabulary from tokens; duplicates are ignored and the
    /// remaining tokens are assigned ids in sorted order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted: Vec<String> = tokens.into_iter().map(|t| t.as_ref().to_string()).collect();
        sorted.sort();
        sorted.dedup();
        let mut vocab = Vocabulary::new();
        for tok in sorted {
            vocab.insert(&tok);
        }
        vocab
    }

    /// Adds a token if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    /// One token per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.tokens.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (lineno, line) in body.lines().enumerate() {
            if lineno < RESERVED.len() && line != RESERVED[lineno] {
                return Err(Error::Schema {
                    line: Some(lineno + 1),
                    message: format!("expected reserved token {:?}, found {line:?}", RESERVED[lineno]),
                });
            }
            if vocab.index.contains_key(line) {
                return Err(Error::Schema {
                    line: Some(lineno + 1),
                    message: format!("duplicate token {line:?}"),
                });
            }
            vocab.insert(line);
        }
        if vocab.len() < RESERVED.len() {
            return Err(Error::schema("vocabulary file is missing reserved tokens"));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::from_tokens(["zeta", "alpha", "alpha"]);
        assert_eq!(v.id(BOS_TOKEN), Some(BOS));
        assert_eq!(v.id(EOS_TOKEN), Some(EOS));
        assert_eq!(v.id(UNK_TOKEN), Some(UNK));
        assert_eq!(v.id(SEP_TOKEN), Some(SEP));
        assert_eq!(v.id("alpha"), Some(4));
        assert_eq!(v.id("zeta"), Some(5));
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn unknown_maps_to_unk() {
        let v = Vocabulary::from_tokens(["a"]);
        assert_eq!(v.id_or_unk("b"), UNK);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::from_tokens(["the", "luna", "."]);
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    #[test]
    fn load_rejects_bad_reserved_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        std::fs::write(&path, "<bos>\n<unk>\n<eos>\n<sep>\n").unwrap();
        assert!(matches!(
            Vocabulary::load(&path),
            Err(Error::Schema { line: Some(2), .. })
        ));
    }
}
