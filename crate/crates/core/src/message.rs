//! The per-sample unit relayed from patient to doctor.
//!
//! On the wire each message is one compact JSON object, `{"t":4,"v":512}`,
//! carried in its own WebSocket text frame. `t` is milliseconds since
//! midnight and `v` the value of the forwarded channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{Sample, ADC_MAX, CHANNEL_COUNT};
use crate::timestamp::MILLIS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkgMessage {
    #[serde(rename = "t")]
    pub t_ms: u32,
    #[serde(rename = "v")]
    pub value: u16,
}

#[derive(Debug, Error)]
pub enum MessageError {
    #[error("channel index {0} out of range 0..{CHANNEL_COUNT}")]
    IndexOutOfRange(usize),
    #[error("invalid message JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("message field out of range: {0}")]
    Range(String),
}

/// Projects one channel of `sample` onto a wire message.
pub fn encode_message(sample: &Sample, channel_index: usize) -> Result<EkgMessage, MessageError> {
    let value = sample
        .channels
        .get(channel_index)
        .ok_or(MessageError::IndexOutOfRange(channel_index))?;
    Ok(EkgMessage {
        t_ms: sample.ts.as_millis(),
        value,
    })
}

impl EkgMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain integer struct always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MessageError> {
        let msg: EkgMessage = serde_json::from_str(text)?;
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), MessageError> {
        if self.t_ms >= MILLIS_PER_DAY {
            return Err(MessageError::Range(format!("t = {} is past midnight", self.t_ms)));
        }
        if self.value > ADC_MAX {
            return Err(MessageError::Range(format!("v = {} exceeds {ADC_MAX}", self.value)));
        }
        Ok(())
    }
}

/// Parses a capture: one JSON message per line, blank lines ignored.
pub fn parse_capture(text: &str) -> Result<Vec<EkgMessage>, (usize, MessageError)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| EkgMessage::from_json(line.trim()).map_err(|e| (n + 1, e)))
        .collect()
}
