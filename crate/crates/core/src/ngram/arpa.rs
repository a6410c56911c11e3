use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Entry, LmError, NGramModel, WordId, BOS_TOKEN, EOS_TOKEN, MAX_ORDER, UNK_TOKEN};
use crate::fmt::plain_sig;

const DIGITS: usize = 7;

pub fn write_arpa<W: Write>(model: &NGramModel, mut w: W) -> std::io::Result<()> {
    let order = model.order();
    writeln!(w, "\\data\\")?;
    for m in 1..=order {
        writeln!(w, "ngram {m}={}", model.count(m))?;
    }
    for (m, table) in model.tables().iter().enumerate().map(|(i, t)| (i + 1, t)) {
        writeln!(w)?;
        writeln!(w, "\\{m}-grams:")?;
        let mut rows: Vec<(Vec<&str>, &Entry)> = table
            .iter()
            .map(|(k, e)| (k.iter().map(|&id| model.word(id)).collect(), e))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (words, e) in rows {
            write!(w, "{}\t{}", plain_sig(e.log_prob, DIGITS), words.join(" "))?;
            if m < order {
                write!(w, "\t{}", plain_sig(e.backoff, DIGITS))?;
            }
            writeln!(w)?;
        }
    }
    writeln!(w)?;
    writeln!(w, "\\end\\")?;
    Ok(())
}

pub fn save_arpa(model: &NGramModel, path: impl AsRef<Path>) -> Result<(), LmError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_arpa(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_arpa(path: impl AsRef<Path>) -> Result<NGramModel, LmError> {
    read_arpa(BufReader::new(fs::File::open(path)?))
}

enum Section {
    Preamble,
    Data,
    Grams(usize),
    End,
}

pub fn read_arpa<R: BufRead>(r: R) -> Result<NGramModel, LmError> {
    let mut section = Section::Preamble;
    let mut declared: BTreeMap<usize, usize> = BTreeMap::new();
    let mut rows: Vec<Vec<(Vec<String>, Entry)>> = Vec::new();

    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let err = |message: String| LmError::Parse { line: line_no, message };
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "\\data\\" {
            if !matches!(section, Section::Preamble) {
                return Err(err("unexpected \\data\\ section".into()));
            }
            section = Section::Data;
            continue;
        }
        if text == "\\end\\" {
            if matches!(section, Section::Preamble) {
                return Err(err("\\end\\ before \\data\\".into()));
            }
            section = Section::End;
            continue;
        }
        if let Some(rest) = text.strip_prefix('\\') {
            let m: usize = rest
                .strip_suffix("-grams:")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| err(format!("unknown section header {text:?}")))?;
            let expected = rows.len() + 1;
            if m != expected || !declared.contains_key(&m) {
                return Err(err(format!("section \\{m}-grams: out of order or undeclared")));
            }
            rows.push(Vec::new());
            section = Section::Grams(m);
            continue;
        }
        match section {
            Section::Preamble => {}
            Section::End => return Err(err("content after \\end\\".into())),
            Section::Data => {
                let (m, n) = text
                    .strip_prefix("ngram ")
                    .and_then(|s| s.split_once('='))
                    .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                    .ok_or_else(|| err(format!("bad count line {text:?}")))?;
                declared.insert(m, n);
            }
            Section::Grams(m) => {
                let order = declared.len();
                let fields: Vec<&str> = text.split('\t').collect();
                let fields: Vec<&str> = if fields.len() >= 2 {
                    fields
                } else {
                    text.split_whitespace().collect()
                };
                let (prob, words, backoff) =
                    split_row(&fields, m, order).ok_or_else(|| err(format!("malformed {m}-gram row")))?;
                let log_prob: f64 = prob.parse().map_err(|_| err(format!("bad probability {prob:?}")))?;
                let backoff: f64 = match backoff {
                    Some(b) => b.parse().map_err(|_| err(format!("bad back-off {b:?}")))?,
                    None => 0.0,
                };
                rows[m - 1].push((words, Entry { log_prob, backoff }));
            }
        }
    }

    if !matches!(section, Section::End) {
        return Err(LmError::Parse {
            line: 0,
            message: "missing \\end\\".into(),
        });
    }
    let order = declared.len();
    if order == 0 || order > MAX_ORDER || declared.keys().copied().ne(1..=order) {
        return Err(LmError::Parse {
            line: 0,
            message: format!("bad \\data\\ section: orders {:?}", declared.keys()),
        });
    }
    if rows.len() != order {
        return Err(LmError::Parse {
            line: 0,
            message: format!("{} n-gram sections for order {order}", rows.len()),
        });
    }
    for (m, list) in rows.iter().enumerate() {
        if list.len() != declared[&(m + 1)] {
            return Err(LmError::Parse {
                line: 0,
                message: format!(
                    "\\{}-grams: declares {} entries, found {}",
                    m + 1,
                    declared[&(m + 1)],
                    list.len()
                ),
            });
        }
    }

    let mut vocab: Vec<&str> = rows[0]
        .iter()
        .map(|(w, _)| w[0].as_str())
        .filter(|w| ![UNK_TOKEN, BOS_TOKEN, EOS_TOKEN].contains(w))
        .collect();
    for reserved in [UNK_TOKEN, BOS_TOKEN, EOS_TOKEN] {
        if !rows[0].iter().any(|(w, _)| w[0] == reserved) {
            return Err(LmError::Parse {
                line: 0,
                message: format!("unigram {reserved} missing"),
            });
        }
    }
    vocab.sort_unstable();
    vocab.dedup();
    let mut words: Vec<String> = vec![UNK_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into()];
    words.extend(vocab.into_iter().map(String::from));
    let ids: HashMap<&str, WordId> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i as WordId))
        .collect();

    let mut tables = Vec::with_capacity(order);
    for (m, list) in rows.iter().enumerate() {
        let mut table = HashMap::with_capacity(list.len());
        for (gram, e) in list {
            let key: Option<Vec<WordId>> = gram.iter().map(|w| ids.get(w.as_str()).copied()).collect();
            let key = key.ok_or_else(|| LmError::Parse {
                line: 0,
                message: format!("{}-gram {:?} uses a word with no unigram", m + 1, gram.join(" ")),
            })?;
            table.insert(key.into_boxed_slice(), *e);
        }
        tables.push(table);
    }
    Ok(NGramModel::from_parts(order, words, tables))
}

fn split_row<'a>(fields: &[&'a str], m: usize, order: usize) -> Option<(&'a str, Vec<String>, Option<&'a str>)> {
    // Tab-separated rows: prob, words, [backoff]. Whitespace-separated rows:
    // prob, w1 .. wm, [backoff].
    if fields.len() <= 3 && fields[1].split(' ').count() == m && fields.len() >= 2 {
        let words: Vec<String> = fields[1].split(' ').map(String::from).collect();
        let bo = fields.get(2).copied();
        if bo.is_some() && m == order {
            return None;
        }
        return Some((fields[0], words, bo));
    }
    if fields.len() == m + 1 || fields.len() == m + 2 {
        let words = fields[1..=m].iter().map(|s| s.to_string()).collect();
        return Some((fields[0], words, fields.get(m + 1).copied()));
    }
    None
}
