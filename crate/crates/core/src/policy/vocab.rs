use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chem::ElementTable;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

const PUNCTUATION: [&str; 3] = [".", "%", "/"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    max_token_chars: usize,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Vec<String> {
        v.tokens
    }
}

impl Vocab {
    /// Specials, then the element symbols of `table`, digits and punctuation.
    pub fn for_elements(table: &ElementTable) -> Vocab {
        let mut tokens: Vec<String> = [PAD, BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
        tokens.extend(table.symbols().map(|s| s.to_string()));
        tokens.extend((0..10).map(|d| d.to_string()));
        tokens.extend(PUNCTUATION.iter().map(|s| s.to_string()));
        Vocab::from_tokens(tokens).expect("element vocabulary is well formed")
    }

    /// Accepts any token list that starts with the four specials in order and
    /// has no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab, String> {
        if tokens.len() < 4 || tokens[..4] != [PAD, BOS, EOS, UNK] {
            return Err("vocabulary must start with <pad>, <bos>, <eos>, <unk>".into());
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err("empty token".into());
            }
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        let max_token_chars = tokens[4..].iter().map(|t| t.chars().count()).max().unwrap_or(1);
        Ok(Vocab { tokens, ids, max_token_chars })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        id <= UNK_ID
    }

    pub fn is_digit(&self, id: u32) -> bool {
        self.token(id).is_some_and(|t| t.len() == 1 && t.as_bytes()[0].is_ascii_digit())
    }

    pub fn is_element(&self, id: u32) -> bool {
        !self.is_special(id) && self.token(id).is_some_and(|t| t.starts_with(|c: char| c.is_ascii_uppercase()))
    }

    /// Greedy longest-match tokenization. A maximal run of characters that
    /// starts no token becomes one UNK.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        let mut buf = String::new();
        while i < chars.len() {
            let mut matched = None;
            for len in (1..=self.max_token_chars.min(chars.len() - i)).rev() {
                buf.clear();
                buf.extend(&chars[i..i + len]);
                if let Some(id) = self.id(&buf).filter(|id| !self.is_special(*id)) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => {
                    if out.last() != Some(&UNK_ID) {
                        out.push(UNK_ID);
                    }
                    i += 1;
                }
            }
        }
        out
    }

    /// Concatenates token text, skipping PAD and BOS and stopping at EOS.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                PAD_ID | BOS_ID => {}
                EOS_ID => break,
                _ => out.push_str(self.token(id).unwrap_or(UNK)),
            }
        }
        out
    }

    /// `BOS text EOS`, the form the policy is trained and scored on.
    pub fn encode_completion(&self, text: &str) -> Vec<u32> {
        let mut seq = vec![BOS_ID];
        seq.extend(self.tokenize(text));
        seq.push(EOS_ID);
        seq
    }

    /// Filter keeping element symbols and digits that sit in runs of two or
    /// more consecutive digits.
    pub fn element_or_numeral_filter(&self) -> impl Fn(&[u32], usize) -> bool + '_ {
        move |seq: &[u32], t: usize| {
            let id = seq[t];
            if self.is_element(id) {
                return true;
            }
            if !self.is_digit(id) {
                return false;
            }
            let left = t > 0 && self.is_digit(seq[t - 1]);
            let right = t + 1 < seq.len() && self.is_digit(seq[t + 1]);
            left || right
        }
    }
}
