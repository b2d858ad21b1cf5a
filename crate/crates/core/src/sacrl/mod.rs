//! Discrete soft actor-critic matching with a from-scratch network.

pub mod agent;
pub mod encode;
pub mod gradcheck;
pub mod mlp;
pub mod params;
pub mod replay;
pub mod train;

pub use agent::{actor_forward, Losses, SacAgent, SacConfig};
pub use encode::{encode_state, Normalization};
pub use gradcheck::gradient_check;
pub use mlp::{Adam, Mlp, MlpGrads};
pub use params::{read_params, write_params, ParamsHeader};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{evaluate, train, CurvePoint, MatchingEnv, SacPolicy, TrainOptions, TrainOutcome};
