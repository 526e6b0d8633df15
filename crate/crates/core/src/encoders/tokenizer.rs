//! Hashing word tokenizer producing `[CLS] arg1 [SEP] arg2 [SEP]` sequences.

pub const CLS: usize = 0;
pub const SEP: usize = 1;
const RESERVED: usize = 2;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedInput {
    pub tokens: Vec<usize>,
    pub segments: Vec<usize>,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    vocab_size: usize,
}

impl Tokenizer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > RESERVED, "vocabulary must leave room for words");
        Tokenizer { vocab_size }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn word_id(&self, word: &str) -> usize {
        RESERVED + (fnv1a(word.as_bytes()) % (self.vocab_size - RESERVED) as u64) as usize
    }

    fn ids(&self, text: &str, max_len: usize) -> Vec<usize> {
        words(text).take(max_len).map(|w| self.word_id(&w)).collect()
    }

    /// `[CLS] arg1[..a] [SEP] arg2[..b] [SEP]`; segment 0 up to and including
    /// the first separator, segment 1 after it.
    pub fn encode_pair(&self, arg1: &str, arg2: &str, a: usize, b: usize) -> TokenizedInput {
        let first = self.ids(arg1, a);
        let second = self.ids(arg2, b);
        let mut tokens = Vec::with_capacity(first.len() + second.len() + 3);
        tokens.push(CLS);
        tokens.extend(first);
        tokens.push(SEP);
        let split = tokens.len();
        tokens.extend(second);
        tokens.push(SEP);
        let segments = (0..tokens.len()).map(|i| usize::from(i >= split)).collect();
        TokenizedInput { tokens, segments }
    }

    /// `[CLS] text [SEP]`, single segment.
    pub fn encode_single(&self, text: &str, max_len: usize) -> TokenizedInput {
        let mut tokens = vec![CLS];
        tokens.extend(self.ids(text, max_len));
        tokens.push(SEP);
        let segments = vec![0; tokens.len()];
        TokenizedInput { tokens, segments }
    }
}
