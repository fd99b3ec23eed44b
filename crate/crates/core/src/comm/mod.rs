//! Communicator: a TCP server hosting an environment batch for external trainers.

mod protocol;
mod server;

pub use protocol::{
    decode, decode_body, encode, read_frame, read_message, write_message, Message, MAX_FRAME_LEN,
    PROTOCOL_VERSION,
};
pub use server::{ErrorCode, Reply, Server, ServerConfig, Session, SessionPhase, DEFAULT_PORT};
