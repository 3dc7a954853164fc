//! Line codec for the acquisition board's serial output.
//!
//! Every tick becomes one ASCII line:
//!
//! ```text
//! HH:MM:SS.mmm v1 v2 v3 v4 v5 v6\r\n
//! ```
//!
//! The timestamp is zero padded to 12 bytes, the six channel values are
//! unpadded decimals in `0..=1023` and each is preceded by one space. When the
//! board's buffer overruns it prints the literal line `fail\r\n` instead.

use std::io::{self, Write};

use thiserror::Error;

use crate::sample::{Channels, Sample, ADC_MAX, CHANNEL_COUNT};
use crate::timestamp::Timestamp;

pub const LINE_TERMINATOR: &[u8] = b"\r\n";

/// Payload the board prints when a tick finds both buffer slots full.
pub const OVERRUN_PAYLOAD: &[u8] = b"fail";

/// Longest possible encoded line: 12 timestamp bytes, six " dddd" fields and CR LF.
pub const MAX_LINE_LEN: usize = 12 + CHANNEL_COUNT * 5 + LINE_TERMINATOR.len();

/// UART line rate between the board and the agent.
pub const UART_BAUD: u32 = 115_200;

/// Bits on the wire per byte: eight data bits plus one stop bit.
pub const BITS_PER_BYTE: u32 = 9;

/// Worst-case serial payload at 250 lines/s.
pub const MAX_BYTES_PER_SECOND: u32 = crate::SAMPLE_RATE_HZ * MAX_LINE_LEN as u32;

/// Baud rate needed to carry [`MAX_BYTES_PER_SECOND`].
pub const REQUIRED_BAUD: u32 = MAX_BYTES_PER_SECOND * BITS_PER_BYTE;

/// One decoded serial line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SerialLine {
    Data(Sample),
    Overrun,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed line: {0}")]
    MalformedLine(&'static str),
    #[error("value out of range: {0}")]
    RangeViolation(String),
}

/// Encodes `sample` as one CR LF terminated line.
pub fn encode_serial(sample: &Sample) -> Vec<u8> {
    let mut line = Vec::with_capacity(MAX_LINE_LEN);
    write_serial(&mut line, sample).expect("writing to a Vec cannot fail");
    line
}

/// Streams the encoded line into `out` without an intermediate buffer.
pub fn write_serial<W: Write + ?Sized>(out: &mut W, sample: &Sample) -> io::Result<()> {
    write!(out, "{}", sample.ts)?;
    for value in sample.channels.as_array() {
        write!(out, " {value}")?;
    }
    out.write_all(LINE_TERMINATOR)
}

pub fn overrun_line() -> Vec<u8> {
    [OVERRUN_PAYLOAD, LINE_TERMINATOR].concat()
}

/// Parses one line. A trailing `\r\n` (or a bare `\n`) is accepted and
/// stripped; anything else must match the format exactly.
///
/// Timestamp fields may be unpadded (`1:2:3.4`); channel values must be
/// canonical decimals without leading zeros.
pub fn decode_serial(line: &[u8]) -> Result<SerialLine, DecodeError> {
    let payload = line
        .strip_suffix(LINE_TERMINATOR)
        .or_else(|| line.strip_suffix(b"\n"))
        .unwrap_or(line);

    if payload == OVERRUN_PAYLOAD {
        return Ok(SerialLine::Overrun);
    }
    if !payload.is_ascii() {
        return Err(DecodeError::MalformedLine("non-ASCII byte"));
    }

    let mut tokens = payload.split(|&b| b == b' ');
    let ts_token = tokens.next().unwrap_or_default();
    let ts = parse_timestamp(ts_token)?;

    let mut values = [0u16; CHANNEL_COUNT];
    for (index, slot) in values.iter_mut().enumerate() {
        let token = tokens
            .next()
            .ok_or(DecodeError::MalformedLine("fewer than six channel values"))?;
        *slot = parse_channel(index, token)?;
    }
    if tokens.next().is_some() {
        return Err(DecodeError::MalformedLine("trailing tokens after six channel values"));
    }

    let channels = Channels::new(values).expect("each value range-checked while parsing");
    Ok(SerialLine::Data(Sample::new(ts, channels)))
}

fn parse_timestamp(token: &[u8]) -> Result<Timestamp, DecodeError> {
    let mut hms = token.split(|&b| b == b':');
    let (Some(h), Some(m), Some(rest), None) = (hms.next(), hms.next(), hms.next(), hms.next()) else {
        return Err(DecodeError::MalformedLine("timestamp needs three ':'-separated fields"));
    };
    let mut sm = rest.split(|&b| b == b'.');
    let (Some(s), Some(ms), None) = (sm.next(), sm.next(), sm.next()) else {
        return Err(DecodeError::MalformedLine(
            "timestamp seconds need a '.' millisecond part",
        ));
    };

    let h = parse_digits(h, 2)?;
    let m = parse_digits(m, 2)?;
    let s = parse_digits(s, 2)?;
    let ms = parse_digits(ms, 3)?;
    Timestamp::new(h, m, s, ms).map_err(|e| DecodeError::RangeViolation(e.to_string()))
}

/// Digits only, at most `max_len` of them. Leading zeros are allowed.
fn parse_digits(token: &[u8], max_len: usize) -> Result<u32, DecodeError> {
    if token.is_empty() || !token.iter().all(u8::is_ascii_digit) {
        return Err(DecodeError::MalformedLine("timestamp field is not a decimal number"));
    }
    if token.len() > max_len {
        return Err(DecodeError::MalformedLine("timestamp field too wide"));
    }
    Ok(token.iter().fold(0, |acc, &d| acc * 10 + (d - b'0') as u32))
}

fn parse_channel(index: usize, token: &[u8]) -> Result<u16, DecodeError> {
    if token.is_empty() {
        return Err(DecodeError::MalformedLine(
            "empty field (separator must be a single space)",
        ));
    }
    if !token.iter().all(u8::is_ascii_digit) {
        return Err(DecodeError::MalformedLine("channel value is not a decimal number"));
    }
    if token.len() > 1 && token[0] == b'0' {
        return Err(DecodeError::MalformedLine("channel value has leading zeros"));
    }
    // Anything wider than 4 digits is necessarily above the ADC range.
    let value = if token.len() > 4 {
        u32::MAX
    } else {
        token.iter().fold(0, |acc, &d| acc * 10 + (d - b'0') as u32)
    };
    if value > ADC_MAX as u32 {
        return Err(DecodeError::RangeViolation(format!(
            "channel {index} value {} exceeds {ADC_MAX}",
            String::from_utf8_lossy(token)
        )));
    }
    Ok(value as u16)
}
