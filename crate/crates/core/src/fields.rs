//! Field splitting shared by the chunker (key extraction) and the table codec.
//!
//! A field may be wrapped in double quotes, with `""` standing for a literal
//! quote inside it. Quoted fields cannot span lines.

use std::borrow::Cow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum FieldError {
    UnterminatedQuote,
    TrailingAfterQuote,
}

impl FieldError {
    pub(crate) fn describe(&self) -> &'static str {
        match self {
            FieldError::UnterminatedQuote => "unterminated quoted field",
            FieldError::TrailingAfterQuote => "unexpected bytes after closing quote",
        }
    }
}

/// Strips the record terminator and an optional preceding carriage return.
pub(crate) fn trim_record(line: &[u8], terminator: u8) -> &[u8] {
    let line = line.strip_suffix(&[terminator]).unwrap_or(line);
    if terminator == b'\n' {
        line.strip_suffix(b"\r").unwrap_or(line)
    } else {
        line
    }
}

/// Parses one field starting at `line[0]`. Returns the field value and the
/// number of bytes consumed, not counting the delimiter that follows.
fn parse_field(line: &[u8], delimiter: u8) -> Result<(Cow<'_, [u8]>, usize), FieldError> {
    if line.first() != Some(&b'"') {
        let end = memchr(delimiter, line).unwrap_or(line.len());
        return Ok((Cow::Borrowed(&line[..end]), end));
    }
    // Quoted: scan for the closing quote, collapsing doubled quotes.
    let mut i = 1;
    let mut owned: Option<Vec<u8>> = None;
    let mut seg_start = 1;
    loop {
        let rel = memchr(b'"', &line[i..]).ok_or(FieldError::UnterminatedQuote)?;
        let q = i + rel;
        if line.get(q + 1) == Some(&b'"') {
            let buf = owned.get_or_insert_with(Vec::new);
            buf.extend_from_slice(&line[seg_start..=q]);
            i = q + 2;
            seg_start = i;
            continue;
        }
        let consumed = q + 1;
        if consumed < line.len() && line[consumed] != delimiter {
            return Err(FieldError::TrailingAfterQuote);
        }
        let value = match owned {
            Some(mut buf) => {
                buf.extend_from_slice(&line[seg_start..q]);
                Cow::Owned(buf)
            }
            None => Cow::Borrowed(&line[1..q]),
        };
        return Ok((value, consumed));
    }
}

/// Splits a record (terminator already removed) into unquoted fields.
pub(crate) fn split_fields(line: &[u8], delimiter: u8) -> Result<Vec<Cow<'_, [u8]>>, FieldError> {
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        let (field, used) = parse_field(&line[pos..], delimiter)?;
        out.push(field);
        pos += used;
        if pos >= line.len() {
            return Ok(out);
        }
        // skip delimiter
        pos += 1;
        if pos == line.len() {
            out.push(Cow::Borrowed(&line[pos..]));
            return Ok(out);
        }
    }
}

/// Number of fields in a record, or `None` when quoting is malformed.
pub(crate) fn count_fields(line: &[u8], delimiter: u8) -> Option<usize> {
    split_fields(line, delimiter).ok().map(|f| f.len())
}

/// The unquoted first field of a record.
pub(crate) fn first_field(line: &[u8], delimiter: u8) -> Result<Cow<'_, [u8]>, FieldError> {
    parse_field(line, delimiter).map(|(f, _)| f)
}

#[inline]
pub(crate) fn memchr(needle: u8, haystack: &[u8]) -> Option<usize> {
    haystack.iter().position(|&b| b == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(s: &str, d: u8) -> Vec<String> {
        split_fields(s.as_bytes(), d)
            .unwrap()
            .into_iter()
            .map(|f| String::from_utf8(f.into_owned()).unwrap())
            .collect()
    }

    #[test]
    fn plain_fields() {
        assert_eq!(split("a\tb\tc", b'\t'), ["a", "b", "c"]);
        assert_eq!(split("a,,c", b','), ["a", "", "c"]);
        assert_eq!(split("a,", b','), ["a", ""]);
        assert_eq!(split("", b','), [""]);
    }

    #[test]
    fn quoted_fields() {
        assert_eq!(split(r#""a,b",c"#, b','), ["a,b", "c"]);
        assert_eq!(split(r#""say ""hi""",x"#, b','), [r#"say "hi""#, "x"]);
        assert_eq!(split(r#"x,"""#, b','), ["x", ""]);
    }

    #[test]
    fn bad_quoting() {
        assert_eq!(
            split_fields(br#""abc"#, b','),
            Err(FieldError::UnterminatedQuote)
        );
        assert_eq!(
            split_fields(br#""ab"c,d"#, b','),
            Err(FieldError::TrailingAfterQuote)
        );
    }

    #[test]
    fn first_field_unquotes() {
        assert_eq!(&*first_field(br#""k,1",2"#, b',').unwrap(), b"k,1");
        assert_eq!(&*first_field(b"k\t2", b'\t').unwrap(), b"k");
    }

    #[test]
    fn trims_crlf() {
        assert_eq!(trim_record(b"a,b\r\n", b'\n'), b"a,b");
        assert_eq!(trim_record(b"a,b", b'\n'), b"a,b");
    }
}
