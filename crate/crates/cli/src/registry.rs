//! Built-in Fenchel pairs and the registry of pairs certified for the
//! omnipredictor.
//!
//! A pair is registered only if its link passes the `(R, gamma)`
//! boundedness search at the gate parameters below.

use crate::error::CliError;
use simlearn::fenchel::{check_bounded_link, BoundednessCert, FenchelPair};

pub const GATE_R: f64 = 4.0;
pub const GATE_GAMMA: f64 = 0.25;
pub const GATE_PROBES: [f64; 2] = [0.1, 0.01];

/// Pairs the omnipredictor is evaluated against.
pub const REGISTERED_TAGS: [&str; 6] = [
    "sigmoid",
    "identity(scale=1,offset=0.5)",
    "leaky_relu(slope=0.1,offset=0.5)",
    "perturb(relu,0.1)",
    "perturb(ramp,0.05)",
    "ramp",
];

/// Every closed-form activation shipped with the library, in one configuration each.
pub const BUILTIN_TAGS: [&str; 11] = [
    "sigmoid",
    "relu",
    "ramp",
    "identity",
    "identity(scale=1,offset=0.5)",
    "leaky_relu(slope=0.1)",
    "leaky_relu(slope=0.1,offset=0.5)",
    "perturb(sigmoid,0.01)",
    "perturb(relu,0.1)",
    "perturb(ramp,0.05)",
    "piecewise_linear(-1:0;0:0.25;1:1)",
];

/// Bi-Lipschitz pairs covered by the distortion sandwich by default.
pub const SANDWICH_TAGS: [&str; 4] =
    ["identity", "leaky_relu(slope=0.1)", "leaky_relu(slope=0.1,offset=0.5)", "perturb(sigmoid,0.1)"];

pub fn parse_pairs<S: AsRef<str>>(tags: &[S]) -> Result<Vec<FenchelPair>, CliError> {
    tags.iter().map(|t| FenchelPair::from_tag(t.as_ref()).map_err(CliError::from)).collect()
}

pub fn builtin_pairs() -> Vec<FenchelPair> {
    parse_pairs(&BUILTIN_TAGS).expect("built-in tags parse")
}

/// Run the boundedness gate on `pair`.
pub fn gate(pair: &FenchelPair) -> Result<BoundednessCert, CliError> {
    check_bounded_link(pair, GATE_R, GATE_GAMMA, &GATE_PROBES).map_err(|f| {
        CliError::Config(format!(
            "pair `{}` fails the boundedness gate (R={GATE_R}, gamma={GATE_GAMMA}) at eps={}: {} ({})",
            pair.tag(),
            f.epsilon,
            f.inequality.describe(),
            f.message
        ))
    })
}

/// Parse and gate `tags`.
pub fn register<S: AsRef<str>>(tags: &[S]) -> Result<Vec<FenchelPair>, CliError> {
    let pairs = parse_pairs(tags)?;
    for p in &pairs {
        gate(p)?;
    }
    Ok(pairs)
}

/// The default registry, gated.
pub fn registered_pairs() -> Result<Vec<FenchelPair>, CliError> {
    register(&REGISTERED_TAGS)
}
