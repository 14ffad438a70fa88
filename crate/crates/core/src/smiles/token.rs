//! Syntactic SMILES tokenizer. Lossless and chemistry-blind: bracket atoms,
//! two-letter halogens, and `%nn` ring closures are single tokens; everything
//! else is one character.

use super::SmilesError;

/// Reserved marker strings used by the learner's vocabulary. They are never
/// produced by [`tokenize`]; `SEP` doubles as the ordinary dot token.
pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const SEP: &str = ".";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> TokenSeq {
        TokenSeq { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Concatenation of the tokens; inverse of [`tokenize`].
    pub fn detokenize(&self) -> String {
        self.tokens.concat()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

/// Split a string into SMILES tokens. Does not validate chemistry; the only
/// rejected shapes are a `[` without matching `]` and a `%` without two
/// digits.
pub fn tokenize(text: &str) -> Result<TokenSeq, SmilesError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '[' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && chars[j] != ']' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(SmilesError::Token {
                        pos: start,
                        msg: "`[` without matching `]`".into(),
                    });
                }
                tokens.push(chars[start..=j].iter().collect());
                i = j + 1;
            }
            '%' => {
                let ok = chars.get(i + 1).is_some_and(char::is_ascii_digit)
                    && chars.get(i + 2).is_some_and(char::is_ascii_digit);
                if !ok {
                    return Err(SmilesError::Token {
                        pos: i,
                        msg: "`%` requires two digits".into(),
                    });
                }
                tokens.push(chars[i..i + 3].iter().collect());
                i += 3;
            }
            'C' if chars.get(i + 1) == Some(&'l') => {
                tokens.push("Cl".into());
                i += 2;
            }
            'B' if chars.get(i + 1) == Some(&'r') => {
                tokens.push("Br".into());
                i += 2;
            }
            _ => {
                tokens.push(c.to_string());
                i += 1;
            }
        }
    }
    Ok(TokenSeq::new(tokens))
}
