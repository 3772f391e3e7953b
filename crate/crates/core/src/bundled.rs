use crate::net::PetriNet;
use crate::netfile::parse_net;

pub const CYCLE2: &str = include_str!("../nets/cycle2.net");
pub const PRIO3: &str = include_str!("../nets/prio3.net");
pub const CALLCENTER: &str = include_str!("../nets/callcenter.net");
pub const CALLCENTER_FC: &str = include_str!("../nets/callcenter_fc.net");
pub const CALLCENTER_SWEEP: &str = include_str!("../nets/callcenter_sweep.toml");

pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "cycle2" => Some(CYCLE2),
        "prio3" => Some(PRIO3),
        "callcenter" => Some(CALLCENTER),
        "callcenter_fc" => Some(CALLCENTER_FC),
        _ => None,
    }
}

/// Parses a bundled net; panics on unknown names since the set is fixed.
pub fn load(name: &str) -> PetriNet {
    let text = source(name).unwrap_or_else(|| panic!("no bundled net named `{name}`"));
    parse_net(text).unwrap_or_else(|e| panic!("bundled net `{name}` does not parse: {e}"))
}
