use tokio::io::{self, AsyncBufRead, AsyncBufReadExt};

use ekg_core::serial::MAX_LINE_LEN;

/// One newline-terminated chunk of the serial stream.
#[derive(Debug, PartialEq, Eq)]
pub enum RawLine<'a> {
    /// Complete line including its terminator.
    Line(&'a [u8]),
    /// Longer than any valid line; its bytes were skipped.
    Overlong,
    /// Bytes left without a terminator when the stream ended.
    Truncated,
}

/// Splits a byte stream into lines without buffering more than one valid
/// line, so a peer that never sends a newline cannot grow memory.
pub struct LineReader<R> {
    inner: R,
    line: Vec<u8>,
    max_len: usize,
}

impl<R: AsyncBufRead + Unpin> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self::with_max_len(inner, MAX_LINE_LEN)
    }

    pub fn with_max_len(inner: R, max_len: usize) -> Self {
        LineReader {
            inner,
            line: Vec::with_capacity(max_len),
            max_len,
        }
    }

    /// `None` at end of stream.
    pub async fn next_line(&mut self) -> io::Result<Option<RawLine<'_>>> {
        self.line.clear();
        let mut overlong = false;
        let mut pending = false;
        loop {
            let buf = self.inner.fill_buf().await?;
            if buf.is_empty() {
                return Ok(pending.then_some(RawLine::Truncated));
            }
            pending = true;
            let (take, done) = match buf.iter().position(|&b| b == b'\n') {
                Some(i) => (i + 1, true),
                None => (buf.len(), false),
            };
            if !overlong {
                if self.line.len() + take > self.max_len {
                    overlong = true;
                    self.line.clear();
                } else {
                    self.line.extend_from_slice(&buf[..take]);
                }
            }
            self.inner.consume(take);
            if done {
                return Ok(Some(if overlong {
                    RawLine::Overlong
                } else {
                    RawLine::Line(&self.line)
                }));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tokio::io::BufReader;

    async fn collect(input: &[u8], max_len: usize) -> Vec<String> {
        let mut reader = LineReader::with_max_len(BufReader::with_capacity(3, input), max_len);
        let mut out = Vec::new();
        while let Some(line) = reader.next_line().await.unwrap() {
            out.push(match line {
                RawLine::Line(b) => String::from_utf8(b.to_vec()).unwrap(),
                RawLine::Overlong => "<overlong>".into(),
                RawLine::Truncated => "<truncated>".into(),
            });
        }
        out
    }

    #[tokio::test]
    async fn splits_across_small_reads() {
        assert_eq!(collect(b"ab\r\ncd\n", 10).await, ["ab\r\n", "cd\n"]);
    }

    #[tokio::test]
    async fn long_lines_are_skipped_whole() {
        assert_eq!(collect(b"0123456789abc\nok\n", 5).await, ["<overlong>", "ok\n"]);
        assert_eq!(collect(b"12345\n", 6).await, ["12345\n"]);
        assert_eq!(collect(b"123456\n", 6).await, ["<overlong>"]);
    }

    #[tokio::test]
    async fn trailing_bytes_are_reported() {
        assert_eq!(collect(b"ok\nhalf", 10).await, ["ok\n", "<truncated>"]);
        assert!(collect(b"", 10).await.is_empty());
    }
}
