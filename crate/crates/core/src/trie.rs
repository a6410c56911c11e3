//! Character prefix trie over the decoding vocabulary.
//!
//! The beam search consults the trie before extending a prefix so that it
//! never spells out a word that is not in the vocabulary. Spaces never enter
//! the trie; the decoder emits a space only to close a complete word.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::Alphabet;

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("empty word in vocabulary")]
    EmptyWord,
    #[error("word {0:?} contains whitespace")]
    Whitespace(String),
    #[error("word {word:?} uses {ch:?}, which the alphabet cannot emit")]
    OutsideAlphabet { word: String, ch: char },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type NodeId = u32;

#[derive(Clone, Debug, Default)]
struct Node {
    /// Sorted by character.
    children: Vec<(char, NodeId)>,
    /// Index into `PrefixTrie::words` when this node ends a word.
    word: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct PrefixTrie {
    nodes: Vec<Node>,
    words: Vec<String>,
}

impl PrefixTrie {
    pub const ROOT: NodeId = 0;

    /// Builds a trie holding each distinct word once.
    pub fn build<I, S>(vocabulary: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut trie = PrefixTrie {
            nodes: vec![Node::default()],
            words: Vec::new(),
        };
        for word in vocabulary {
            trie.insert(word.as_ref())?;
        }
        Ok(trie)
    }

    /// Like [`Self::build`], also requiring every character to be a
    /// non-blank, non-space symbol of `alphabet`.
    pub fn build_for_alphabet<I, S>(vocabulary: I, alphabet: &Alphabet) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: Vec<S> = vocabulary.into_iter().collect();
        for w in &words {
            if let Some(ch) = w.as_ref().chars().find(|&c| alphabet.char_index(c).is_none()) {
                return Err(VocabError::OutsideAlphabet {
                    word: w.as_ref().to_string(),
                    ch,
                });
            }
        }
        Self::build(words)
    }

    /// Reads a vocabulary file with one word per line. Blank lines are
    /// ignored.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path).map_err(|e| VocabError::Io(e.to_string()))?;
        Self::build(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    fn insert(&mut self, word: &str) -> Result<(), VocabError> {
        if word.is_empty() {
            return Err(VocabError::EmptyWord);
        }
        if word.chars().any(char::is_whitespace) {
            return Err(VocabError::Whitespace(word.to_string()));
        }
        let mut node = Self::ROOT;
        for ch in word.chars() {
            node = match self.child(node, ch) {
                Some(n) => n,
                None => {
                    let id = self.nodes.len() as NodeId;
                    self.nodes.push(Node::default());
                    let children = &mut self.nodes[node as usize].children;
                    let pos = children.partition_point(|&(c, _)| c < ch);
                    children.insert(pos, (ch, id));
                    id
                }
            };
        }
        if self.nodes[node as usize].word.is_none() {
            self.nodes[node as usize].word = Some(self.words.len() as u32);
            self.words.push(word.to_string());
        }
        Ok(())
    }

    /// Number of distinct words.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in insertion order; the position is the word's index.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn child(&self, node: NodeId, ch: char) -> Option<NodeId> {
        let children = &self.nodes[node as usize].children;
        children
            .binary_search_by(|&(c, _)| c.cmp(&ch))
            .ok()
            .map(|i| children[i].1)
    }

    /// Index of the word ending at `node`, if any.
    pub fn word_at(&self, node: NodeId) -> Option<u32> {
        self.nodes[node as usize].word
    }

    /// Node reached by spelling `prefix` from the root.
    pub fn find(&self, prefix: &str) -> Option<NodeId> {
        prefix.chars().try_fold(Self::ROOT, |node, ch| self.child(node, ch))
    }

    /// Characters that extend `prefix` towards at least one vocabulary word.
    pub fn allowed_extensions(&self, prefix: &str) -> BTreeSet<char> {
        self.find(prefix)
            .map(|n| self.nodes[n as usize].children.iter().map(|&(c, _)| c).collect())
            .unwrap_or_default()
    }

    pub fn is_word(&self, s: &str) -> bool {
        self.find(s).and_then(|n| self.word_at(n)).is_some()
    }

    /// Every word reachable from the root, in lexicographic order.
    pub fn enumerate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![(Self::ROOT, String::new())];
        while let Some((node, prefix)) = stack.pop() {
            if self.word_at(node).is_some() {
                out.push(prefix.clone());
            }
            for &(ch, child) in self.nodes[node as usize].children.iter().rev() {
                let mut p = prefix.clone();
                p.push(ch);
                stack.push((child, p));
            }
        }
        out
    }
}
