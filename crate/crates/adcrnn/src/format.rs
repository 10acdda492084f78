//! One-file-per-dialogue text format.
//!
//! ```text
//! DLG v1 id=<id> ad=<0|1|?> mmse=<0..30|?>
//! HC <k> <f64 x k>
//! UTT <INV|PAR> A <da> <f64 x da> T <dt> <f64 x dt> [P <dp> <f64 x dp>] [D <ms>]
//! ```
//!
//! Floats are written in shortest round-trip form, so a file produced by
//! [`write_dialogue`] parses back to the same values and re-serialises to the
//! same bytes.

use std::fmt::Write as _;
use std::path::Path;

use adcrnn_core::data::{Dialogue, Speaker, Utterance, MMSE_MAX};

use crate::error::{AppError, AppResult};

fn bad(source: &str, line: usize, msg: impl std::fmt::Display) -> AppError {
    AppError::Data(format!("{source}:{line}: {msg}"))
}

struct Fields<'a> {
    it: std::str::SplitAsciiWhitespace<'a>,
    source: &'a str,
    line: usize,
}

impl<'a> Fields<'a> {
    fn next(&mut self, what: &str) -> AppResult<&'a str> {
        self.it
            .next()
            .ok_or_else(|| bad(self.source, self.line, format!("missing {what}")))
    }

    fn expect(&mut self, tag: &str) -> AppResult<()> {
        let got = self.next(tag)?;
        if got != tag {
            return Err(bad(self.source, self.line, format!("expected `{tag}`, found `{got}`")));
        }
        Ok(())
    }

    fn count(&mut self, what: &str) -> AppResult<usize> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| bad(self.source, self.line, format!("bad {what} `{tok}`")))
    }

    fn vector(&mut self, what: &str) -> AppResult<Vec<f64>> {
        let n = self.count(&format!("{what} length"))?;
        (0..n)
            .map(|i| {
                let tok = self.next(&format!("{what} value {i} of {n}"))?;
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(bad(self.source, self.line, format!("bad {what} value `{tok}`"))),
                }
            })
            .collect()
    }
}

fn parse_header(source: &str, line: &str) -> AppResult<(String, Option<bool>, Option<u8>)> {
    let toks: Vec<&str> = line.split_ascii_whitespace().collect();
    if toks.len() != 5 || toks[0] != "DLG" {
        return Err(bad(source, 1, "expected `DLG v1 id=<id> ad=<0|1|?> mmse=<0..30|?>`"));
    }
    if toks[1] != "v1" {
        return Err(bad(source, 1, format!("unsupported version `{}`", toks[1])));
    }
    let field = |tok: &str, key: &str| -> AppResult<String> {
        tok.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| bad(source, 1, format!("expected `{key}=`, found `{tok}`")))
    };
    let id = field(toks[2], "id")?;
    if id.is_empty() {
        return Err(bad(source, 1, "empty dialogue id"));
    }
    let ad = match field(toks[3], "ad")?.as_str() {
        "0" => Some(false),
        "1" => Some(true),
        "?" => None,
        other => return Err(bad(source, 1, format!("bad AD label `{other}`"))),
    };
    let mmse = match field(toks[4], "mmse")?.as_str() {
        "?" => None,
        s => {
            let v: u32 = s
                .parse()
                .map_err(|_| bad(source, 1, format!("bad MMSE `{s}`")))?;
            if v > u32::from(MMSE_MAX) {
                return Err(bad(source, 1, format!("MMSE {v} outside [0, {MMSE_MAX}]")));
            }
            Some(v as u8)
        }
    };
    Ok((id, ad, mmse))
}

fn parse_utterance(f: &mut Fields<'_>) -> AppResult<Utterance> {
    f.expect("UTT")?;
    let tag = f.next("speaker")?;
    let speaker = Speaker::from_tag(tag)
        .ok_or_else(|| bad(f.source, f.line, format!("unknown speaker tag `{tag}`")))?;
    f.expect("A")?;
    let acoustic = f.vector("acoustic")?;
    f.expect("T")?;
    let textual = f.vector("textual")?;
    let mut utt = Utterance::new(speaker, acoustic, textual);
    while let Some(tok) = f.it.next() {
        match tok {
            "P" if utt.pos.is_none() && utt.duration_ms.is_none() => utt.pos = Some(f.vector("POS")?),
            "D" if utt.duration_ms.is_none() => {
                let tok = f.next("duration")?;
                utt.duration_ms = Some(
                    tok.parse()
                        .map_err(|_| bad(f.source, f.line, format!("bad duration `{tok}`")))?,
                );
            }
            other => return Err(bad(f.source, f.line, format!("unexpected `{other}`"))),
        }
    }
    Ok(utt)
}

/// Parses dialogue text; `source` names the input in error messages.
pub fn parse_dialogue(text: &str, source: &str) -> AppResult<Dialogue> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(source, 1, "empty file"))?;
    let (id, ad, mmse) = parse_header(source, header)?;
    let (n, hc_line) = lines.next().ok_or_else(|| bad(source, 2, "missing HC line"))?;
    let mut f = Fields {
        it: hc_line.split_ascii_whitespace(),
        source,
        line: n + 1,
    };
    f.expect("HC")?;
    let hc = f.vector("HC")?;
    if let Some(extra) = f.it.next() {
        return Err(bad(source, n + 1, format!("trailing `{extra}`")));
    }
    let mut utterances = Vec::new();
    for (n, line) in lines {
        let mut f = Fields {
            it: line.split_ascii_whitespace(),
            source,
            line: n + 1,
        };
        utterances.push(parse_utterance(&mut f)?);
    }
    Dialogue::new(id, utterances, hc, ad, mmse).map_err(|e| AppError::Data(format!("{source}: {e}")))
}

pub fn read_dialogue(path: &Path) -> AppResult<Dialogue> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_dialogue(&text, &path.display().to_string())
}

fn push_vector(out: &mut String, tag: &str, v: &[f64]) {
    write!(out, " {tag} {}", v.len()).unwrap();
    for x in v {
        write!(out, " {x}").unwrap();
    }
}

/// Canonical text of `d`.
pub fn write_dialogue(d: &Dialogue) -> String {
    let mut out = String::new();
    let ad = match d.label_ad {
        Some(true) => "1",
        Some(false) => "0",
        None => "?",
    };
    let mmse = d.label_mmse.map_or_else(|| "?".to_owned(), |m| m.to_string());
    writeln!(out, "DLG v1 id={} ad={ad} mmse={mmse}", d.id).unwrap();
    out.push_str("HC");
    write!(out, " {}", d.hc.len()).unwrap();
    for x in &d.hc {
        write!(out, " {x}").unwrap();
    }
    out.push('\n');
    for u in &d.utterances {
        write!(out, "UTT {}", u.speaker.tag()).unwrap();
        push_vector(&mut out, "A", &u.acoustic);
        push_vector(&mut out, "T", &u.textual);
        if let Some(p) = &u.pos {
            push_vector(&mut out, "P", p);
        }
        if let Some(ms) = u.duration_ms {
            write!(out, " D {ms}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "DLG v1 id=s01 ad=0 mmse=30\nHC 2 0.5 -1\nUTT PAR A 2 1 2 T 1 3\n";

    #[test]
    fn minimal_file() {
        let d = parse_dialogue(ONE, "one").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.label_mmse, Some(30));
        assert_eq!(d.utterances[0].speaker, Speaker::Participant);
        assert_eq!(write_dialogue(&d), ONE);
    }

    #[test]
    fn mmse_31_rejected() {
        let e = parse_dialogue(&ONE.replace("mmse=30", "mmse=31"), "f").unwrap_err();
        assert!(e.to_string().contains("MMSE 31"), "{e}");
    }

    #[test]
    fn unknown_speaker_rejected() {
        let e = parse_dialogue(&ONE.replace("PAR", "DOC"), "f").unwrap_err();
        assert!(e.to_string().contains("unknown speaker tag `DOC`"), "{e}");
    }

    #[test]
    fn malformed_records() {
        for text in [
            "",
            "DLG v2 id=a ad=0 mmse=1\nHC 0\nUTT PAR A 1 1 T 1 1\n",
            "DLG v1 id=a ad=2 mmse=1\nHC 0\nUTT PAR A 1 1 T 1 1\n",
            "DLG v1 id=a ad=0 mmse=1\nHC 1\nUTT PAR A 1 1 T 1 1\n",
            "DLG v1 id=a ad=0 mmse=1\nHC 0\nUTT PAR A 2 1 T 1 1\n",
            "DLG v1 id=a ad=0 mmse=1\nHC 0\nUTT PAR A 1 nan T 1 1\n",
            "DLG v1 id=a ad=0 mmse=1\nHC 0\nUTT PAR A 1 1 T 1 1 X\n",
            "DLG v1 id=a ad=0 mmse=1\nHC 0\n",
        ] {
            assert!(parse_dialogue(text, "f").is_err(), "{text:?}");
        }
    }

    #[test]
    fn pos_and_duration_round_trip() {
        let text = "DLG v1 id=x ad=? mmse=?\nHC 0\nUTT INV A 1 0.1 T 1 -0.00000025 P 2 0.25 0.75 D 1200\nUTT PAR A 1 3 T 1 4 P 2 1 0 D 80\n";
        let d = parse_dialogue(text, "x").unwrap();
        assert_eq!(d.label_ad, None);
        assert_eq!(d.utterances[0].pos.as_deref(), Some(&[0.25, 0.75][..]));
        assert_eq!(d.utterances[0].duration_ms, Some(1200));
        assert_eq!(write_dialogue(&d), text);
    }
}
