//! Line-delimited N-best records.
//!
//! One candidate per line, tab-separated:
//! `utterance_id, rank, log_am, log_lm, word_count, log_bs, text`, followed by
//! `rescorer_score, rescored` on rescored lists. Reals use 9 significant
//! digits in scientific notation. Candidates of one utterance are
//! consecutive and in list order.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Candidate, NBestList};
use crate::fmt::sci_sig;

const DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum NBestParseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_nbest<W: Write>(mut w: W, lists: &[NBestList]) -> std::io::Result<()> {
    for list in lists {
        for c in &list.candidates {
            write!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                list.utterance_id,
                c.rank,
                sci_sig(c.log_am, DIGITS),
                sci_sig(c.log_lm, DIGITS),
                c.word_count,
                sci_sig(c.log_bs, DIGITS),
                c.text_string()
            )?;
            if let (Some(s), Some(r)) = (c.rescorer_score, c.rescored) {
                write!(w, "\t{}\t{}", sci_sig(s, DIGITS), sci_sig(r, DIGITS))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_nbest<R: BufRead>(r: R) -> Result<Vec<NBestList>, NBestParseError> {
    let mut out: Vec<NBestList> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let err = |message: String| NBestParseError::Parse { line: line_no, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 && f.len() != 9 {
            return Err(err(format!("expected 7 or 9 fields, found {}", f.len())));
        }
        let real = |s: &str, name: &str| -> Result<f64, NBestParseError> {
            s.parse::<f64>().map_err(|_| err(format!("bad {name} {s:?}")))
        };
        let cand = Candidate {
            rank: f[1].parse().map_err(|_| err(format!("bad rank {:?}", f[1])))?,
            log_am: real(f[2], "log_am")?,
            log_lm: real(f[3], "log_lm")?,
            word_count: f[4].parse().map_err(|_| err(format!("bad word_count {:?}", f[4])))?,
            log_bs: real(f[5], "log_bs")?,
            text: crate::corpus::tokenize(f[6]),
            rescorer_score: if f.len() == 9 {
                Some(real(f[7], "rescorer_score")?)
            } else {
                None
            },
            rescored: if f.len() == 9 {
                Some(real(f[8], "rescored")?)
            } else {
                None
            },
        };
        match out.last_mut() {
            Some(list) if list.utterance_id == f[0] => list.candidates.push(cand),
            _ => {
                if out.iter().any(|l| l.utterance_id == f[0]) {
                    return Err(err(format!("records of {} are not contiguous", f[0])));
                }
                out.push(NBestList::new(f[0], vec![cand]));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(text: &str, rank: usize, log_bs: f64) -> Candidate {
        Candidate {
            text: crate::corpus::tokenize(text),
            log_am: log_bs - 1.0,
            log_lm: -std::f64::consts::LN_10,
            word_count: text.split_whitespace().count(),
            log_bs,
            rescorer_score: None,
            rescored: None,
            rank,
        }
    }

    #[test]
    fn round_trip() {
        let mut b = cand("x", 1, -3.25);
        b.rescorer_score = Some(-7.5);
        b.rescored = Some(-4.0);
        let lists = vec![
            NBestList::new("u1", vec![cand("a b", 0, -1.5), cand("", 1, -2.0)]),
            NBestList::new("u2", vec![cand("c", 0, -0.123456789123)]),
        ];
        let mut buf = Vec::new();
        write_nbest(&mut buf, &lists).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u1\t0\t-2.50000000e0\t-2.30258509e0\t2\t-1.50000000e0\ta b\n"));
        let back = read_nbest(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].candidates[1].text.is_empty());
        assert_eq!(back[1].candidates[0].log_bs, -0.123456789);

        let mut buf = Vec::new();
        write_nbest(&mut buf, &[NBestList::new("u3", vec![b])]).unwrap();
        let back = read_nbest(buf.as_slice()).unwrap();
        assert_eq!(back[0].candidates[0].rescored, Some(-4.0));
    }

    #[test]
    fn errors_name_the_line() {
        let text = "u\t0\t-1\t0\t1\t-1\ta\nu\t1\t-1\n";
        match read_nbest(text.as_bytes()) {
            Err(NBestParseError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = "u\t0\t-1\t0\t1\t-1\ta\nv\t0\t-1\t0\t1\t-1\ta\nu\t1\t-1\t0\t1\t-1\ta\n";
        assert!(read_nbest(text.as_bytes()).is_err());
    }
}
