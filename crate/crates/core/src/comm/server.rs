//! Session state machine and TCP accept loop.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::protocol::{decode_body, read_frame, write_message, Message, PROTOCOL_VERSION};
use crate::env::{Action, EnvConfig, ACTION_DIM};
use crate::error::{Error, Result};
use crate::vec_env::VecEnv;
use crate::world::World;

pub const DEFAULT_PORT: u16 = 9000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    BadVersion,
    BadState,
    BadShape,
    /// Undecodable or oversized frame.
    BadMessage,
    Busy,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadVersion => "bad_version",
            ErrorCode::BadState => "bad_state",
            ErrorCode::BadShape => "bad_shape",
            ErrorCode::BadMessage => "bad_message",
            ErrorCode::Busy => "busy",
        }
    }

    pub fn message(self, detail: impl Into<String>) -> Message {
        Message::Error {
            code: self.as_str().to_string(),
            message: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub n_envs: usize,
    pub world: World,
    pub env: EnvConfig,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    AwaitHandshake,
    /// Handshake done, no reset yet.
    Ready,
    Running,
    Closed,
}

/// What the server sends back for one client message.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub message: Option<Message>,
    pub close: bool,
}

impl Reply {
    fn send(message: Message) -> Self {
        Reply {
            message: Some(message),
            close: false,
        }
    }

    fn fail(code: ErrorCode, detail: impl Into<String>) -> Self {
        Reply {
            message: Some(code.message(detail)),
            close: true,
        }
    }
}

/// Protocol state machine for one client, independent of the transport.
#[derive(Debug)]
pub struct Session {
    phase: SessionPhase,
    envs: VecEnv,
}

impl Session {
    pub fn new(config: &ServerConfig) -> Result<Self> {
        let envs = VecEnv::new(
            Arc::new(config.world.clone()),
            config.env.clone(),
            config.n_envs,
            config.master_seed,
        )?;
        Ok(Self {
            phase: SessionPhase::AwaitHandshake,
            envs,
        })
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    fn ack(&self) -> Message {
        Message::HandshakeAck {
            obs_dim: self.envs.obs_dim(),
            action_dim: ACTION_DIM,
            n_envs: self.envs.len(),
            dt: self.envs.config().dt,
            max_steps: self.envs.config().max_steps,
        }
    }

    pub fn handle(&mut self, msg: Message) -> Reply {
        let reply = self.dispatch(msg);
        if reply.close {
            self.phase = SessionPhase::Closed;
        }
        reply
    }

    fn dispatch(&mut self, msg: Message) -> Reply {
        use SessionPhase::*;
        match (self.phase, msg) {
            (Closed, _) => Reply::fail(ErrorCode::BadState, "session is closed"),
            (AwaitHandshake, Message::Handshake { version }) => {
                if version != PROTOCOL_VERSION {
                    return Reply::fail(
                        ErrorCode::BadVersion,
                        format!("server speaks version {PROTOCOL_VERSION}, client sent {version}"),
                    );
                }
                self.phase = Ready;
                Reply::send(self.ack())
            }
            (AwaitHandshake, _) => Reply::fail(ErrorCode::BadState, "expected handshake"),
            (_, Message::Close {}) => Reply {
                message: None,
                close: true,
            },
            (Ready | Running, Message::Reset { seed }) => match self.envs.reset_all(seed) {
                Ok(obs) => {
                    self.phase = Running;
                    Reply::send(Message::Observations {
                        obs: obs.into_iter().map(|o| o.0).collect(),
                    })
                }
                Err(e) => Reply::fail(ErrorCode::BadState, e.to_string()),
            },
            (Ready, Message::Step { .. }) => Reply::fail(ErrorCode::BadState, "step before reset"),
            (Running, Message::Step { actions }) => self.step(actions),
            (_, other) => Reply::fail(
                ErrorCode::BadState,
                format!("unexpected {} message", message_name(&other)),
            ),
        }
    }

    fn step(&mut self, actions: Vec<Vec<f64>>) -> Reply {
        if actions.len() != self.envs.len() || actions.iter().any(|a| a.len() != ACTION_DIM) {
            return Reply::fail(
                ErrorCode::BadShape,
                format!("actions must be {} x {ACTION_DIM}", self.envs.len()),
            );
        }
        let actions: Vec<Action> = actions
            .iter()
            .map(|a| Action::new(a[0], a[1], a[2]))
            .collect();
        match self.envs.step_all(&actions) {
            Ok(transitions) => {
                let mut obs = Vec::with_capacity(transitions.len());
                let mut rewards = Vec::with_capacity(transitions.len());
                let mut dones = Vec::with_capacity(transitions.len());
                let mut terms = Vec::with_capacity(transitions.len());
                for t in transitions {
                    obs.push(t.observation.0);
                    rewards.push(t.reward.total);
                    dones.push(t.done);
                    terms.push(t.termination);
                }
                Reply::send(Message::Transition {
                    obs,
                    rewards,
                    dones,
                    terms,
                })
            }
            Err(e) => Reply::fail(ErrorCode::BadState, e.to_string()),
        }
    }
}

fn message_name(msg: &Message) -> &'static str {
    match msg {
        Message::Handshake { .. } => "handshake",
        Message::HandshakeAck { .. } => "handshakeack",
        Message::Reset { .. } => "reset",
        Message::Observations { .. } => "observations",
        Message::Step { .. } => "step",
        Message::Transition { .. } => "transition",
        Message::Close {} => "close",
        Message::Error { .. } => "error",
    }
}

fn serve_stream(stream: TcpStream, config: &ServerConfig) -> Result<()> {
    let mut session = Session::new(config)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let reply = match read_frame(&mut reader) {
            Ok(None) => return Ok(()),
            Ok(Some(body)) => match decode_body(&body) {
                Ok(msg) => session.handle(msg),
                Err(e) => Reply::fail(ErrorCode::BadMessage, e.to_string()),
            },
            Err(Error::Io(e)) => return Err(e.into()),
            Err(e) => Reply::fail(ErrorCode::BadMessage, e.to_string()),
        };
        if let Some(msg) = &reply.message {
            write_message(&mut writer, msg)?;
        }
        if reply.close {
            return Ok(());
        }
    }
}

/// Listens for trainers; serves one session and returns when it ends.
/// Connections arriving while a session is active are answered with
/// `Error{code: "busy"}` and closed.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    config: Arc<ServerConfig>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> Result<Self> {
        config.env.validate()?;
        config.world.validate()?;
        if config.n_envs == 0 {
            return Err(Error::Config("n_envs must be at least 1".into()));
        }
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            config: Arc::new(config),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn run(self) -> Result<()> {
        self.listener.set_nonblocking(true)?;
        let mut active: Option<JoinHandle<Result<()>>> = None;
        loop {
            if active.as_ref().is_some_and(JoinHandle::is_finished) {
                let handle = active.take().expect("active session");
                return handle
                    .join()
                    .unwrap_or_else(|_| Err(Error::Protocol("session thread panicked".into())));
            }
            match self.listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    if active.is_some() {
                        let mut w = BufWriter::new(stream);
                        // The rejected client may already be gone.
                        let _ = write_message(&mut w, &ErrorCode::Busy.message("another session is active"));
                        continue;
                    }
                    let config = Arc::clone(&self.config);
                    active = Some(thread::spawn(move || serve_stream(stream, &config)));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}
