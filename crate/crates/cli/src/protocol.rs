//! Wire protocol v1: one JSON object per line, tagged by `type`.
//!
//! A connection starts with a `hello` handshake, then `reset` and any number
//! of `step`s, and ends with `close` or EOF. Every request line gets exactly
//! one response line. Problems are reported in-band as `error` messages and
//! never end the connection.

use netsim_core::exec::Exec;
use netsim_core::net::KpiRow;
use netsim_core::optimize::{ActionSpec, Env, EnvConfig, OptError};
use netsim_core::scenario::{RewardWeights, Scenario};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Weights as sent by a client; omitted metrics weigh zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireWeights {
    pub coverage: f64,
    pub rsrp: f64,
    pub sinr: f64,
    pub dl: f64,
    pub ul: f64,
}

impl From<WireWeights> for RewardWeights {
    fn from(w: WireWeights) -> Self {
        RewardWeights::from_array([w.coverage, w.rsrp, w.sinr, w.dl, w.ul])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireState {
    pub vector: Vec<f64>,
    pub n_beams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Hello {
        version: u32,
    },
    Reset {
        seed: u64,
        /// The scenario's own weights when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<WireWeights>,
    },
    State {
        vector: Vec<f64>,
        n_beams: usize,
    },
    Step {
        action: ActionSpec,
    },
    Transition {
        state: WireState,
        reward: f64,
        done: bool,
        kpis: KpiRow,
    },
    Error {
        code: String,
        msg: String,
    },
    Close,
}

pub const MESSAGE_TYPES: [&str; 7] = ["hello", "reset", "state", "step", "transition", "error", "close"];

/// Error codes carried by `error` messages.
pub mod code {
    pub const VERSION: &str = "version";
    pub const PARSE: &str = "parse";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const UNEXPECTED: &str = "unexpected";
    pub const HANDSHAKE: &str = "handshake";
    pub const NOT_RESET: &str = "not_reset";
    pub const EPISODE_DONE: &str = "episode_done";
    pub const INVALID_ACTION: &str = "invalid_action";
    pub const INVALID_WEIGHTS: &str = "invalid_weights";
    pub const INTERNAL: &str = "internal";
}

impl Message {
    pub fn error(code: &str, msg: impl Into<String>) -> Self {
        Message::Error {
            code: code.into(),
            msg: msg.into(),
        }
    }

    /// Single line without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    /// Parses one line, telling apart malformed JSON, unknown types and bad
    /// payloads.
    pub fn parse_line(line: &str) -> Result<Self, Message> {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| Message::error(code::PARSE, e.to_string()))?;
        let ty = v
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| Message::error(code::PARSE, "expected an object with a string \"type\""))?;
        if !MESSAGE_TYPES.contains(&ty) {
            return Err(Message::error(code::UNKNOWN_TYPE, format!("unknown message type {ty:?}")));
        }
        serde_json::from_value(v).map_err(|e| Message::error(code::PARSE, e.to_string()))
    }
}

/// Per-connection protocol state: one environment, owned exclusively.
pub struct Session {
    scenario: Scenario,
    env_cfg: EnvConfig,
    greeted: bool,
    env: Option<Env>,
}

impl Session {
    pub fn new(scenario: Scenario, env_cfg: EnvConfig) -> Self {
        Self {
            scenario,
            env_cfg,
            greeted: false,
            env: None,
        }
    }

    /// Response to one request line, and whether the connection should close.
    pub fn handle_line(&mut self, line: &str) -> (Message, bool) {
        let msg = match Message::parse_line(line) {
            Ok(m) => m,
            Err(e) => return (e, false),
        };
        match msg {
            Message::Hello { version } if version == PROTOCOL_VERSION => {
                self.greeted = true;
                (Message::Hello { version }, false)
            }
            Message::Hello { version } => (
                Message::error(
                    code::VERSION,
                    format!("unsupported protocol version {version}, server speaks {PROTOCOL_VERSION}"),
                ),
                false,
            ),
            Message::Close => (Message::Close, true),
            _ if !self.greeted => (Message::error(code::HANDSHAKE, "send hello first"), false),
            Message::Reset { seed, weights } => (self.reset(seed, weights), false),
            Message::Step { action } => (self.step(&action), false),
            other => (
                Message::error(code::UNEXPECTED, format!("{} is a server message", other.type_name())),
                false,
            ),
        }
    }

    fn reset(&mut self, seed: u64, weights: Option<WireWeights>) -> Message {
        let weights = weights.map(RewardWeights::from).unwrap_or(self.scenario.reward);
        if let Err(e) = weights.normalized() {
            return Message::error(code::INVALID_WEIGHTS, e.to_string());
        }
        let mut env = Env::new(self.scenario.clone(), self.env_cfg, Exec::Sequential);
        match env.reset(weights, seed) {
            Ok(vector) => {
                let n_beams = env.n_beams();
                self.env = Some(env);
                Message::State { vector, n_beams }
            }
            Err(e) => opt_error(e),
        }
    }

    fn step(&mut self, action: &ActionSpec) -> Message {
        let Some(env) = self.env.as_mut() else {
            return Message::error(code::NOT_RESET, "send reset first");
        };
        match env.step(action) {
            Ok(t) => Message::Transition {
                state: WireState {
                    vector: t.next_state,
                    n_beams: env.n_beams(),
                },
                reward: t.reward,
                done: t.done,
                kpis: t.info.kpis,
            },
            Err(e) => opt_error(e),
        }
    }
}

fn opt_error(e: OptError) -> Message {
    let c = match e {
        OptError::NotReset => code::NOT_RESET,
        OptError::EpisodeDone => code::EPISODE_DONE,
        OptError::InvalidAction(_) => code::INVALID_ACTION,
        OptError::Scenario(_) => code::INVALID_WEIGHTS,
        _ => code::INTERNAL,
    };
    Message::error(c, e.to_string())
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Reset { .. } => "reset",
            Message::State { .. } => "state",
            Message::Step { .. } => "step",
            Message::Transition { .. } => "transition",
            Message::Error { .. } => "error",
            Message::Close => "close",
        }
    }
}
