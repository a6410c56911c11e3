//! Conversations, utterances and splits.
//!
//! A corpus file holds one utterance per line. Two layouts are accepted and
//! chosen by file extension:
//!
//! * `.tsv` (and anything that is not `.jsonl`/`.json`): five tab-separated
//!   fields `conversation_id, index, split, speaker, text`, where an empty
//!   speaker field means "no speaker".
//! * `.jsonl` / `.json`: one JSON object per line with the same field names.
//!
//! Splits are recorded per conversation: every utterance of a conversation
//! must carry the same split.

mod logits;
pub mod synthetic;

pub use logits::{synth_logits, Alphabet, LogitMatrix, DEFAULT_CTC_BLANK};

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default spelling of the ground-truth token for unintelligible speech.
///
/// This is an ordinary vocabulary word and has nothing to do with the CTC
/// blank symbol of an [`Alphabet`].
pub const UNINTELLIGIBLE: &str = "<blank>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate utterance ({conversation_id}, {index})")]
    Duplicate {
        line: usize,
        conversation_id: String,
        index: usize,
    },
    #[error("conversation {conversation_id}: utterance indices are not contiguous from 0 (missing {missing})")]
    IndexGap { conversation_id: String, missing: usize },
    #[error("line {line}: conversation {conversation_id} already assigned to split {existing}")]
    SplitConflict {
        line: usize,
        conversation_id: String,
        existing: Split,
    },
    #[error("utterance index {index} out of range for conversation of length {len}")]
    Bounds { index: usize, len: usize },
    #[error("character {ch:?} is not in the alphabet")]
    Alphabet { ch: char },
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("invalid logit matrix: {0}")]
    InvalidLogits(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "eval" | "dev" => Ok(Split::Eval),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Splits a transcript into words on runs of whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    /// `"{conversation_id}_{index:04}"`; also the stem of the utterance's
    /// logit file.
    pub id: String,
    pub conversation_id: String,
    pub index: usize,
    /// Ground-truth words.
    pub text: Vec<String>,
    pub speaker: Option<String>,
}

impl Utterance {
    pub fn new(conversation_id: &str, index: usize, text: Vec<String>) -> Self {
        Utterance {
            id: utterance_id(conversation_id, index),
            conversation_id: conversation_id.to_owned(),
            index,
            text,
            speaker: None,
        }
    }

    pub fn text_string(&self) -> String {
        self.text.join(" ")
    }
}

pub fn utterance_id(conversation_id: &str, index: usize) -> String {
    format!("{conversation_id}_{index:04}")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub split: Split,
    /// Sorted by index; `utterances[i].index == i`.
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// Up to `k` transcripts immediately preceding an utterance, oldest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub k: usize,
    /// Index of the first utterance in the window.
    pub start: usize,
    pub utterances: Vec<Vec<String>>,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Context transcripts as space-joined strings.
    pub fn texts(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.join(" ")).collect()
    }
}

/// Where context transcripts come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContextSource {
    /// Ground-truth transcripts of the preceding utterances.
    #[default]
    GroundTruth,
    /// Transcripts previously produced by the decoder.
    Decoded,
}

/// Ground-truth context of utterance `index`.
pub fn context_window(conversation: &Conversation, index: usize, k: usize) -> Result<ContextWindow, CorpusError> {
    let texts: Vec<&[String]> = conversation.utterances.iter().map(|u| u.text.as_slice()).collect();
    context_window_from(&texts, index, k)
}

/// Context window over an arbitrary sequence of transcripts, e.g. decoder
/// outputs for the same conversation.
pub fn context_window_from<T: AsRef<[String]>>(
    texts: &[T],
    index: usize,
    k: usize,
) -> Result<ContextWindow, CorpusError> {
    if index >= texts.len() {
        return Err(CorpusError::Bounds {
            index,
            len: texts.len(),
        });
    }
    let start = index - index.min(k);
    Ok(ContextWindow {
        k,
        start,
        utterances: texts[start..index].iter().map(|t| t.as_ref().to_vec()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    conversation_id: String,
    index: usize,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker: Option<String>,
    text: String,
}

struct Record {
    line: usize,
    conversation_id: String,
    index: usize,
    split: Split,
    speaker: Option<String>,
    text: Vec<String>,
}

fn parse_tsv(line_no: usize, line: &str) -> Result<Record, CorpusError> {
    let err = |message: String| CorpusError::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
    }
    if fields[0].is_empty() {
        return Err(err("empty conversation_id".into()));
    }
    let index = fields[1]
        .parse()
        .map_err(|_| err(format!("invalid index {:?}", fields[1])))?;
    let split = fields[2].parse().map_err(err)?;
    Ok(Record {
        line: line_no,
        conversation_id: fields[0].to_owned(),
        index,
        split,
        speaker: (!fields[3].is_empty()).then(|| fields[3].to_owned()),
        text: tokenize(fields[4]),
    })
}

fn parse_json(line_no: usize, line: &str) -> Result<Record, CorpusError> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    if rec.conversation_id.is_empty() {
        return Err(CorpusError::Parse {
            line: line_no,
            message: "empty conversation_id".into(),
        });
    }
    Ok(Record {
        line: line_no,
        conversation_id: rec.conversation_id,
        index: rec.index,
        split: rec.split,
        speaker: rec.speaker,
        text: tokenize(&rec.text),
    })
}

/// Reads utterance records and assembles conversations in order of first
/// appearance. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(
    reader: R,
    format: CorpusFormat,
    split_filter: Option<Split>,
) -> Result<Vec<Conversation>, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (Split, Vec<Option<Utterance>>)> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec = match format {
            CorpusFormat::Tsv => parse_tsv(line_no, &line)?,
            CorpusFormat::Jsonl => parse_json(line_no, &line)?,
        };
        let entry = by_id.entry(rec.conversation_id.clone()).or_insert_with(|| {
            order.push(rec.conversation_id.clone());
            (rec.split, Vec::new())
        });
        if entry.0 != rec.split {
            return Err(CorpusError::SplitConflict {
                line: rec.line,
                conversation_id: rec.conversation_id,
                existing: entry.0,
            });
        }
        let slots = &mut entry.1;
        if slots.len() <= rec.index {
            slots.resize(rec.index + 1, None);
        }
        if slots[rec.index].is_some() {
            return Err(CorpusError::Duplicate {
                line: rec.line,
                conversation_id: rec.conversation_id,
                index: rec.index,
            });
        }
        let mut utt = Utterance::new(&rec.conversation_id, rec.index, rec.text);
        utt.speaker = rec.speaker;
        slots[rec.index] = Some(utt);
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (split, slots) = by_id.remove(&id).expect("id recorded on insert");
        if split_filter.is_some_and(|s| s != split) {
            continue;
        }
        let mut utterances = Vec::with_capacity(slots.len());
        for (index, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(u) => utterances.push(u),
                None => {
                    return Err(CorpusError::IndexGap {
                        conversation_id: id,
                        missing: index,
                    })
                }
            }
        }
        out.push(Conversation { id, split, utterances });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, split_filter: Option<Split>) -> Result<Vec<Conversation>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    read_corpus(BufReader::new(file), CorpusFormat::from_path(path), split_filter)
}

pub fn write_corpus<W: Write>(
    mut w: W,
    conversations: &[Conversation],
    format: CorpusFormat,
) -> Result<(), CorpusError> {
    for conv in conversations {
        for utt in &conv.utterances {
            match format {
                CorpusFormat::Tsv => writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    conv.id,
                    utt.index,
                    conv.split,
                    utt.speaker.as_deref().unwrap_or(""),
                    utt.text_string()
                )?,
                CorpusFormat::Jsonl => {
                    let rec = JsonRecord {
                        conversation_id: conv.id.clone(),
                        index: utt.index,
                        split: conv.split,
                        speaker: utt.speaker.clone(),
                        text: utt.text_string(),
                    };
                    let line = serde_json::to_string(&rec).expect("record serializes");
                    writeln!(w, "{line}")?;
                }
            }
        }
    }
    Ok(())
}

pub fn store_corpus(path: impl AsRef<Path>, conversations: &[Conversation]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_corpus(&mut w, conversations, CorpusFormat::from_path(path))?;
    w.flush()?;
    Ok(())
}

/// Checks that every character of every ground-truth word is a non-blank
/// symbol of `alphabet`, allowing `marker` as a whole word.
pub fn validate_alphabet(conversations: &[Conversation], alphabet: &Alphabet, marker: &str) -> Result<(), CorpusError> {
    for utt in conversations.iter().flat_map(|c| &c.utterances) {
        for word in utt.text.iter().filter(|w| w.as_str() != marker) {
            for ch in word.chars() {
                if alphabet.char_index(ch).is_none() || ch == ' ' {
                    return Err(CorpusError::Alphabet { ch });
                }
            }
        }
    }
    Ok(())
}

/// Every utterance of the given conversations, in corpus order.
pub fn utterances(conversations: &[Conversation]) -> impl Iterator<Item = &Utterance> {
    conversations.iter().flat_map(|c| c.utterances.iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(id: &str, texts: &[&str]) -> Conversation {
        Conversation {
            id: id.into(),
            split: Split::Train,
            utterances: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance::new(id, i, tokenize(t)))
                .collect(),
        }
    }

    #[test]
    fn three_records_one_conversation() {
        let data = "c1\t2\ttrain\t\tthird\nc1\t0\ttrain\tA\tfirst one\nc1\t1\ttrain\tB\tsecond\n";
        let convs = read_corpus(data.as_bytes(), CorpusFormat::Tsv, None).unwrap();
        assert_eq!(convs.len(), 1);
        let idx: Vec<usize> = convs[0].utterances.iter().map(|u| u.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(convs[0].utterances[0].text, vec!["first", "one"]);
        assert_eq!(convs[0].utterances[0].speaker.as_deref(), Some("A"));
        assert_eq!(convs[0].utterances[2].speaker, None);
    }

    #[test]
    fn empty_file() {
        let convs = read_corpus("".as_bytes(), CorpusFormat::Tsv, None).unwrap();
        assert!(convs.is_empty());
    }

    #[test]
    fn malformed_names_line() {
        let data = "c1\t0\ttrain\t\ta\nc1\tx\ttrain\t\tb\n";
        match read_corpus(data.as_bytes(), CorpusFormat::Tsv, None) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let data = "{\"conversation_id\":\"c\",\"index\":0,\"split\":\"train\",\"text\":\"a\"}\n{oops\n";
        match read_corpus(data.as_bytes(), CorpusFormat::Jsonl, None) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_is_integrity_error() {
        let data = "c1\t0\ttrain\t\ta\nc1\t0\ttrain\t\tb\n";
        assert!(matches!(
            read_corpus(data.as_bytes(), CorpusFormat::Tsv, None),
            Err(CorpusError::Duplicate { line: 2, index: 0, .. })
        ));
    }

    #[test]
    fn gaps_and_split_conflicts() {
        let data = "c1\t0\ttrain\t\ta\nc1\t2\ttrain\t\tb\n";
        assert!(matches!(
            read_corpus(data.as_bytes(), CorpusFormat::Tsv, None),
            Err(CorpusError::IndexGap { missing: 1, .. })
        ));
        let data = "c1\t0\ttrain\t\ta\nc1\t1\ttest\t\tb\n";
        assert!(matches!(
            read_corpus(data.as_bytes(), CorpusFormat::Tsv, None),
            Err(CorpusError::SplitConflict { line: 2, .. })
        ));
    }

    #[test]
    fn split_filter() {
        let data = "a\t0\ttrain\t\tx\nb\t0\ttest\t\ty\n";
        let convs = read_corpus(data.as_bytes(), CorpusFormat::Tsv, Some(Split::Test)).unwrap();
        assert_eq!(convs.len(), 1);
        assert_eq!(convs[0].id, "b");
    }

    #[test]
    fn windows() {
        let c = conv("c", &["u0", "u1", "u2", "u3", "u4", "u5"]);
        assert!(context_window(&c, 0, 2).unwrap().is_empty());
        let w = context_window(&c, 5, 2).unwrap();
        assert_eq!(w.texts(), vec!["u3", "u4"]);
        assert_eq!(w.start, 3);
        let w = context_window(&c, 3, 5).unwrap();
        assert_eq!(w.texts(), vec!["u0", "u1", "u2"]);
        assert!(matches!(
            context_window(&c, 6, 2),
            Err(CorpusError::Bounds { index: 6, len: 6 })
        ));
    }

    #[test]
    fn round_trip_both_formats() {
        let mut a = conv("a", &["hello there", "", "x y z"]);
        a.utterances[0].speaker = Some("agent".into());
        let mut b = conv("b", &["one"]);
        b.split = Split::Eval;
        let convs = vec![a, b];
        for format in [CorpusFormat::Tsv, CorpusFormat::Jsonl] {
            let mut buf = Vec::new();
            write_corpus(&mut buf, &convs, format).unwrap();
            let back = read_corpus(buf.as_slice(), format, None).unwrap();
            assert_eq!(back, convs);
        }
    }
}
