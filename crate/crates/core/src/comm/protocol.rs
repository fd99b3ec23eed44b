//! Wire format: a 4-byte little-endian body length followed by a JSON object
//! whose `type` field names the message.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::Termination;
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Handshake {
        version: u32,
    },
    HandshakeAck {
        obs_dim: usize,
        action_dim: usize,
        n_envs: usize,
        dt: f64,
        max_steps: u32,
    },
    Reset {
        seed: u64,
    },
    Observations {
        obs: Vec<Vec<f64>>,
    },
    Step {
        actions: Vec<Vec<f64>>,
    },
    Transition {
        obs: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        dones: Vec<bool>,
        terms: Vec<Termination>,
    },
    Close {},
    Error {
        code: String,
        message: String,
    },
}

/// Serializes `msg` into a complete frame.
pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME_LEN {
        return Err(Error::FrameTooLarge(body.len()));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_le_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Parses one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message> {
    let Some((prefix, body)) = frame.split_first_chunk::<4>() else {
        return Err(Error::Protocol(format!("frame of {} bytes has no length prefix", frame.len())));
    };
    let len = u32::from_le_bytes(*prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::FrameTooLarge(len));
    }
    if body.len() != len {
        return Err(Error::Protocol(format!(
            "length prefix says {len} bytes but body has {}",
            body.len()
        )));
    }
    decode_body(body)
}

pub fn decode_body(body: &[u8]) -> Result<Message> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(format!("invalid message: {e}")))
}

/// Reads one frame body. `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame(reader: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a length prefix".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Protocol("stream ended inside a frame body".into()),
        _ => e.into(),
    })?;
    Ok(Some(body))
}

pub fn read_message(reader: &mut impl Read) -> Result<Option<Message>> {
    read_frame(reader)?.map(|body| decode_body(&body)).transpose()
}

pub fn write_message(writer: &mut impl Write, msg: &Message) -> Result<()> {
    writer.write_all(&encode(msg)?)?;
    writer.flush()?;
    Ok(())
}
