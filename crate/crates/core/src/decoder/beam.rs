use std::collections::HashMap;
use std::f64::consts::LN_10;

use super::{fused_score, BeamConfig, BonusPoint, Candidate, DecodeError, NBestList, SPACE_TOKEN};
use crate::corpus::LogitMatrix;
use crate::ngram::{NGramModel, WordId, EOS, MAX_ORDER, UNK};
use crate::trie::{self, PrefixTrie};

type NodeId = u32;

const NONE: NodeId = NodeId::MAX;
const NEG_INF: f64 = f64::NEG_INFINITY;

fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// The last `order - 1` tokens seen by the language model.
#[derive(Clone, Copy, Debug, Default)]
struct History {
    ids: [WordId; MAX_ORDER],
    len: u8,
}

impl History {
    fn start() -> Self {
        let mut h = History::default();
        h.ids[0] = crate::ngram::BOS;
        h.len = 1;
        h
    }

    fn as_slice(&self) -> &[WordId] {
        &self.ids[..self.len as usize]
    }

    fn push(&mut self, id: WordId, keep: usize) {
        if keep == 0 {
            self.len = 0;
            return;
        }
        if self.len as usize >= keep {
            let n = self.len as usize;
            self.ids.copy_within(n + 1 - keep..n, 0);
            self.len = (keep - 1) as u8;
        }
        self.ids[self.len as usize] = id;
        self.len += 1;
    }
}

/// Language-model and vocabulary state carried by a prefix.
#[derive(Clone, Copy, Debug)]
struct PrefixState {
    lm_score: f64,
    words: u32,
    /// Position of the current partial word in the trie.
    trie_node: trie::NodeId,
    partial_len: u32,
    history: History,
}

#[derive(Clone, Debug)]
struct Node {
    parent: NodeId,
    /// Alphabet index of the last symbol; the root holds the blank.
    label: u32,
    children: Vec<(u32, NodeId)>,
    serial: u64,
    p_b: f64,
    p_nb: f64,
    next_b: f64,
    next_nb: f64,
    touched: bool,
    in_beam: bool,
    state: PrefixState,
}

/// A reusable beam-search decoder for one configuration.
///
/// Building the decoder resolves vocabulary words to language-model ids once;
/// [`BeamDecoder::decode`] can then be called from many threads.
pub struct BeamDecoder {
    cfg: BeamConfig,
    /// Trie word index -> LM id.
    word_ids: Vec<WordId>,
}

impl BeamDecoder {
    pub fn new(cfg: BeamConfig) -> Result<Self, DecodeError> {
        cfg.validate()?;
        let word_ids = match (&cfg.trie, &cfg.lm, cfg.bonus_point) {
            (Some(trie), Some(lm), BonusPoint::WordBoundary) => trie.words().iter().map(|w| lm.word_id(w)).collect(),
            _ => Vec::new(),
        };
        Ok(BeamDecoder { cfg, word_ids })
    }

    pub fn config(&self) -> &BeamConfig {
        &self.cfg
    }

    pub fn decode(&self, z: &LogitMatrix) -> Result<NBestList, DecodeError> {
        Search::new(self, z).run()
    }
}

/// Decodes `z` with a one-off [`BeamDecoder`].
pub fn beam_search(z: &LogitMatrix, cfg: &BeamConfig) -> Result<NBestList, DecodeError> {
    BeamDecoder::new(cfg.clone())?.decode(z)
}

struct Search<'a> {
    dec: &'a BeamDecoder,
    z: &'a LogitMatrix,
    lm: Option<&'a NGramModel>,
    trie: Option<&'a PrefixTrie>,
    /// Alphabet index -> LM id for character-level scoring.
    char_ids: Vec<WordId>,
    space: Option<u32>,
    keep: usize,
    nodes: Vec<Node>,
    free: Vec<NodeId>,
    serial: u64,
    pruned_mass: f64,
}

impl<'a> Search<'a> {
    fn new(dec: &'a BeamDecoder, z: &'a LogitMatrix) -> Self {
        let lm = dec.cfg.lm.as_deref();
        let alphabet = z.alphabet();
        let char_ids = match (lm, dec.cfg.bonus_point) {
            (Some(lm), BonusPoint::EveryCharacter) => (0..alphabet.len())
                .map(|k| match alphabet.char_of(k) {
                    Some(' ') => lm.word_id(SPACE_TOKEN),
                    Some(ch) => lm.word_id(ch.encode_utf8(&mut [0; 4])),
                    None => UNK,
                })
                .collect(),
            _ => Vec::new(),
        };
        Search {
            dec,
            z,
            lm,
            trie: dec.cfg.trie.as_deref(),
            char_ids,
            space: alphabet.space().map(|s| s as u32),
            keep: lm.map_or(0, |m| m.order() - 1),
            nodes: Vec::new(),
            free: Vec::new(),
            serial: 0,
            pruned_mass: 0.0,
        }
    }

    fn alloc(&mut self, parent: NodeId, label: u32, state: PrefixState) -> NodeId {
        let node = Node {
            parent,
            label,
            children: Vec::new(),
            serial: self.serial,
            p_b: NEG_INF,
            p_nb: NEG_INF,
            next_b: NEG_INF,
            next_nb: NEG_INF,
            touched: false,
            in_beam: false,
            state,
        };
        self.serial += 1;
        match self.free.pop() {
            Some(id) => {
                let mut children = std::mem::take(&mut self.nodes[id as usize].children);
                children.clear();
                self.nodes[id as usize] = Node { children, ..node };
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as NodeId
            }
        }
    }

    fn lm_term(&self, history: &History, id: WordId) -> f64 {
        match self.lm {
            Some(lm) => LN_10 * lm.log_prob_ids(history.as_slice(), id),
            None => 0.0,
        }
    }

    /// Closes the current partial word. Returns `None` when the partial word
    /// is not in the vocabulary.
    fn close_word(&self, s: &PrefixState) -> Option<PrefixState> {
        let mut next = *s;
        if let Some(trie) = self.trie {
            let word = trie.word_at(s.trie_node)?;
            if !self.dec.word_ids.is_empty() {
                let id = self.dec.word_ids[word as usize];
                next.lm_score += self.lm_term(&s.history, id);
                next.history.push(id, self.keep);
            }
        }
        next.words += 1;
        next.trie_node = PrefixTrie::ROOT;
        next.partial_len = 0;
        Some(next)
    }

    /// State after appending symbol `label` to a prefix in state `s`, or
    /// `None` if the extension would leave the vocabulary.
    fn extend_state(&self, s: &PrefixState, label: u32) -> Option<PrefixState> {
        let per_char = self.dec.cfg.bonus_point == BonusPoint::EveryCharacter;
        let mut next = if Some(label) == self.space {
            if s.partial_len > 0 {
                self.close_word(s)?
            } else if self.trie.is_some() && s.words > 0 {
                // A space must close a word, except at the start.
                return None;
            } else {
                *s
            }
        } else {
            let mut next = *s;
            if let Some(trie) = self.trie {
                let ch = self.z.alphabet().char_of(label as usize)?;
                next.trie_node = trie.child(s.trie_node, ch)?;
            }
            next.partial_len += 1;
            next
        };
        if per_char && !self.char_ids.is_empty() {
            let id = self.char_ids[label as usize];
            next.lm_score += self.lm_term(&s.history, id);
            next.history = s.history;
            next.history.push(id, self.keep);
        }
        Some(next)
    }

    fn child(&mut self, parent: NodeId, label: u32) -> Option<NodeId> {
        if let Some(&(_, id)) = self.nodes[parent as usize].children.iter().find(|(l, _)| *l == label) {
            return Some(id);
        }
        let state = self.extend_state(&self.nodes[parent as usize].state, label)?;
        let id = self.alloc(parent, label, state);
        self.nodes[parent as usize].children.push((label, id));
        Some(id)
    }

    fn fused(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id as usize];
        let cfg = &self.dec.cfg;
        fused_score(
            log_add(n.p_b, n.p_nb),
            n.state.lm_score,
            n.state.words as usize,
            cfg.alpha,
            cfg.beta,
        )
    }

    fn add(&mut self, id: NodeId, blank: bool, mass: f64, touched: &mut Vec<NodeId>) {
        if mass == NEG_INF {
            return;
        }
        let n = &mut self.nodes[id as usize];
        if blank {
            n.next_b = log_add(n.next_b, mass);
        } else {
            n.next_nb = log_add(n.next_nb, mass);
        }
        if !n.touched {
            n.touched = true;
            touched.push(id);
        }
    }

    /// Frees `id` and any ancestors left without beam descendants.
    fn prune(&mut self, mut id: NodeId) {
        while id != 0 {
            let n = &self.nodes[id as usize];
            if n.parent == NONE || n.in_beam || n.touched || !n.children.is_empty() {
                return;
            }
            let parent = n.parent;
            let children = &mut self.nodes[parent as usize].children;
            if let Some(pos) = children.iter().position(|&(_, c)| c == id) {
                children.swap_remove(pos);
            }
            self.nodes[id as usize].parent = NONE;
            self.free.push(id);
            id = parent;
        }
    }

    fn run(mut self) -> Result<NBestList, DecodeError> {
        let z = self.z;
        let k = z.num_symbols();
        let blank = z.alphabet().blank();
        let width = self.dec.cfg.beam_width;

        let root_state = PrefixState {
            lm_score: 0.0,
            words: 0,
            trie_node: PrefixTrie::ROOT,
            partial_len: 0,
            history: if self.lm.is_some() {
                History::start()
            } else {
                History::default()
            },
        };
        let root = self.alloc(NONE, blank as u32, root_state);
        self.nodes[root as usize].p_b = 0.0;
        self.nodes[root as usize].in_beam = true;
        let mut beam: Vec<NodeId> = vec![root];
        let mut log_z = vec![0.0f64; k];
        let mut touched: Vec<NodeId> = Vec::new();

        for (t, row) in z.rows().enumerate() {
            for (dst, &p) in log_z.iter_mut().zip(row) {
                *dst = if p > 0.0 { (p as f64).ln() } else { NEG_INF };
            }
            touched.clear();
            for &id in &beam {
                let (p_b, p_nb, label) = {
                    let n = &self.nodes[id as usize];
                    (n.p_b, n.p_nb, n.label)
                };
                let total = log_add(p_b, p_nb);
                self.add(id, true, total + log_z[blank], &mut touched);
                if label as usize != blank {
                    self.add(id, false, p_nb + log_z[label as usize], &mut touched);
                }
                for (c, &lz) in log_z.iter().enumerate().take(k) {
                    if c == blank || lz == NEG_INF {
                        continue;
                    }
                    let from = if c as u32 == label { p_b } else { total };
                    if from == NEG_INF {
                        continue;
                    }
                    match self.child(id, c as u32) {
                        Some(child) => self.add(child, false, from + lz, &mut touched),
                        None => self.pruned_mass += (from + lz).exp(),
                    }
                }
            }

            for &id in &touched {
                let n = &mut self.nodes[id as usize];
                n.p_b = n.next_b;
                n.p_nb = n.next_nb;
                n.next_b = NEG_INF;
                n.next_nb = NEG_INF;
            }
            if touched.is_empty() {
                return Err(DecodeError::EmptyBeam { frame: t });
            }

            let mut scored: Vec<(f64, u64, NodeId, f64)> = touched
                .iter()
                .map(|&id| {
                    let n = &self.nodes[id as usize];
                    (self.fused(id), n.serial, id, log_add(n.p_b, n.p_nb))
                })
                .collect();
            let best_mass = scored.iter().map(|s| s.3).fold(NEG_INF, f64::max);
            let floor = self.dec.cfg.mass_floor.map_or(NEG_INF, |gap| best_mass - gap);
            let order =
                |a: &(f64, u64, NodeId, f64), b: &(f64, u64, NodeId, f64)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if scored.len() > width {
                scored.select_nth_unstable_by(width - 1, order);
            }
            let (kept, dropped) = scored.split_at_mut(width.min(touched.len()));
            kept.sort_by(order);

            let prev = std::mem::take(&mut beam);
            for id in prev.iter().copied().chain(touched.iter().copied()) {
                let n = &mut self.nodes[id as usize];
                n.in_beam = false;
                n.touched = false;
            }
            for &(_, _, id, mass) in kept.iter() {
                if mass < floor {
                    self.pruned_mass += mass.exp();
                    continue;
                }
                self.nodes[id as usize].in_beam = true;
                beam.push(id);
            }
            for &(_, _, _, mass) in dropped.iter() {
                self.pruned_mass += mass.exp();
            }
            for id in prev.into_iter().chain(dropped.iter().map(|d| d.2)) {
                self.prune(id);
            }
            for &(_, _, id, mass) in kept.iter() {
                if mass < floor {
                    self.prune(id);
                }
            }
            if beam.is_empty() {
                return Err(DecodeError::EmptyBeam { frame: t });
            }
        }

        Ok(self.finish(&beam))
    }

    fn text_of(&self, mut id: NodeId) -> Vec<String> {
        let mut labels = Vec::new();
        while id != 0 && id != NONE {
            let n = &self.nodes[id as usize];
            labels.push(n.label as usize);
            id = n.parent;
        }
        let alphabet = self.z.alphabet();
        let s: String = labels.iter().rev().filter_map(|&l| alphabet.char_of(l)).collect();
        crate::corpus::tokenize(&s)
    }

    fn finish(mut self, beam: &[NodeId]) -> NBestList {
        let cfg = &self.dec.cfg;
        let mut finals: Vec<(Candidate, u64)> = Vec::with_capacity(beam.len());
        for &id in beam {
            let n = &self.nodes[id as usize];
            let log_am = log_add(n.p_b, n.p_nb);
            let mut state = n.state;
            if state.partial_len > 0 {
                let per_char = cfg.bonus_point == BonusPoint::EveryCharacter;
                let closed = if per_char {
                    // Only the vocabulary check and word count; the characters
                    // were already scored.
                    let ok = self.trie.is_none_or(|t| t.word_at(state.trie_node).is_some());
                    ok.then(|| {
                        let mut s = state;
                        s.words += 1;
                        s
                    })
                } else {
                    self.close_word(&state)
                };
                match closed {
                    Some(s) => state = s,
                    None => {
                        self.pruned_mass += log_am.exp();
                        continue;
                    }
                }
            }
            if self.lm.is_some() {
                state.lm_score += self.lm_term(&state.history, EOS);
            }
            let word_count = state.words as usize;
            let cand = Candidate {
                text: self.text_of(id),
                log_am,
                log_lm: state.lm_score,
                word_count,
                log_bs: fused_score(log_am, state.lm_score, word_count, cfg.alpha, cfg.beta),
                rescorer_score: None,
                rescored: None,
                rank: 0,
            };
            finals.push((cand, n.serial));
        }

        // Distinct symbol sequences can spell the same words (extra spaces);
        // their acoustic masses add up.
        let mut by_text: HashMap<Vec<String>, usize> = HashMap::new();
        let mut merged: Vec<(Candidate, u64)> = Vec::with_capacity(finals.len());
        for (cand, serial) in finals {
            match by_text.get(&cand.text) {
                Some(&i) => {
                    let m = &mut merged[i];
                    m.0.log_am = log_add(m.0.log_am, cand.log_am);
                    m.0.log_bs = m.0.fused(cfg.alpha, cfg.beta);
                    m.1 = m.1.min(serial);
                }
                None => {
                    by_text.insert(cand.text.clone(), merged.len());
                    merged.push((cand, serial));
                }
            }
        }
        merged.sort_by(|a, b| b.0.log_bs.total_cmp(&a.0.log_bs).then(a.1.cmp(&b.1)));
        for (c, _) in merged.iter().skip(cfg.beam_width) {
            self.pruned_mass += c.log_am.exp();
        }
        merged.truncate(cfg.beam_width);
        let candidates = merged
            .into_iter()
            .enumerate()
            .map(|(rank, (mut c, _))| {
                c.rank = rank;
                c
            })
            .collect();
        NBestList {
            utterance_id: self.z.utterance_id.clone(),
            candidates,
            pruned_mass: self.pruned_mass,
        }
    }
}
