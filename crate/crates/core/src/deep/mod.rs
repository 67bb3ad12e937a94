//! Actor-critic learners on a small continuous task, built on a tiny
//! dense-network library.

pub mod agent;
pub mod env;
pub mod matrix;
pub mod net;
pub mod optim;
pub mod params;
pub mod targets;

pub use agent::{Agent, AgentKind, ContinuousBatch, ContinuousReplay, CriticStats, Td3Config};
pub use env::{PointReachEnv, ReturnBaselines};
pub use matrix::Matrix;
pub use net::{Activation, MlpSpec, Net};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{polyak_update, GroupRates, ParamGroup, ParamVector};
