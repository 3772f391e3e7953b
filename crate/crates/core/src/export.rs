use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuous::Trajectory;
use crate::discrete::CounterTrajectory;
use crate::net::PetriNet;
use crate::policy::Policy;
use crate::rational::{format_decimal, format_exact, parse_rat, to_f64, Rat};
use crate::stationary::{PolicyCone, StationarySolution};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed solution: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solution refers to unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("solution is missing {kind} `{id}`")]
    MissingId { kind: &'static str, id: String },
    #[error("bad rational `{0}`")]
    BadRational(String),
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExportError> {
    let io = |source| ExportError::Io { path: path.display().to_string(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// `t,id,kind,value` with kinds `m`, `w` for places and `f` for transitions.
pub fn trajectory_csv(net: &PetriNet, traj: &Trajectory) -> String {
    let mut out = String::from("t,id,kind,value\n");
    for s in &traj.samples {
        let t = format_decimal(s.state.t);
        for (p, place) in net.places().iter().enumerate() {
            let _ = writeln!(out, "{t},{},m,{}", place.id, format_decimal(s.state.m[p]));
            let _ = writeln!(out, "{t},{},w,{}", place.id, format_decimal(s.state.w[p]));
        }
        for (q, id) in net.transitions().iter().enumerate() {
            let _ = writeln!(out, "{t},{id},f,{}", format_decimal(s.flows.f[q]));
        }
    }
    out
}

/// Counter values with kinds `x` and `z`, as decimals and exact fractions.
pub fn counter_csv(net: &PetriNet, traj: &CounterTrajectory) -> String {
    let mut out = String::from("t,id,kind,value,t_exact,value_exact\n");
    for i in 0..traj.len() {
        let t = traj.time(i);
        let (td, te) = (format_decimal(to_f64(&t)), format_exact(&t));
        for (p, place) in net.places().iter().enumerate() {
            let v = &traj.x[p][i];
            let _ = writeln!(out, "{td},{},x,{},{te},{}", place.id, format_decimal(to_f64(v)), format_exact(v));
        }
        for (q, id) in net.transitions().iter().enumerate() {
            let v = &traj.z[q][i];
            let _ = writeln!(out, "{td},{id},z,{},{te},{}", format_decimal(to_f64(v)), format_exact(v));
        }
    }
    out
}

/// Serialized form of a stationary solution, keyed by node id with exact
/// rational strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub net: String,
    pub policy: BTreeMap<String, String>,
    pub f: BTreeMap<String, String>,
    pub m: BTreeMap<String, String>,
    pub w_dot: BTreeMap<String, String>,
    pub w0: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeJson {
    pub policy: BTreeMap<String, String>,
    pub dimension: usize,
    pub solutions: Vec<SolutionJson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryJson {
    pub net: String,
    pub cones: Vec<ConeJson>,
}

/// Accepted by `check`: a single solution or a whole solver output.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SolutionFile {
    One(SolutionJson),
    All(StationaryJson),
}

fn policy_map(net: &PetriNet, policy: &Policy) -> BTreeMap<String, String> {
    policy
        .choice
        .iter()
        .enumerate()
        .map(|(q, &p)| (net.transitions()[q].clone(), net.place(p).id.clone()))
        .collect()
}

fn keyed<'a>(ids: impl Iterator<Item = &'a String>, values: &[Rat]) -> BTreeMap<String, String> {
    ids.cloned().zip(values.iter().map(format_exact)).collect()
}

pub fn solution_json(net: &PetriNet, sol: &StationarySolution) -> SolutionJson {
    let places = || net.places().iter().map(|p| &p.id);
    SolutionJson {
        net: net.name.clone(),
        policy: policy_map(net, &sol.policy),
        f: keyed(net.transitions().iter(), &sol.f),
        m: keyed(places(), &sol.m),
        w_dot: keyed(places(), &sol.w_dot),
        w0: keyed(places(), &sol.w0),
    }
}

pub fn stationary_json(net: &PetriNet, cones: &[PolicyCone]) -> StationaryJson {
    StationaryJson {
        net: net.name.clone(),
        cones: cones
            .iter()
            .map(|pc| ConeJson {
                policy: policy_map(net, &pc.system.policy),
                dimension: pc.cone.dimension(),
                solutions: pc.solutions.iter().map(|s| solution_json(net, s)).collect(),
            })
            .collect(),
    }
}

fn lookup(
    map: &BTreeMap<String, String>,
    ids: &[String],
    kind: &'static str,
) -> Result<Vec<Rat>, ExportError> {
    if let Some(extra) = map.keys().find(|k| !ids.contains(k)) {
        return Err(ExportError::UnknownId { kind, id: extra.clone() });
    }
    ids.iter()
        .map(|id| {
            let text = map.get(id).ok_or_else(|| ExportError::MissingId { kind, id: id.clone() })?;
            parse_rat(text).map_err(|_| ExportError::BadRational(text.clone()))
        })
        .collect()
}

pub fn solution_from_json(net: &PetriNet, json: &SolutionJson) -> Result<StationarySolution, ExportError> {
    let places: Vec<String> = net.places().iter().map(|p| p.id.clone()).collect();
    let transitions = net.transitions().to_vec();
    if let Some(extra) = json.policy.keys().find(|k| !transitions.contains(k)) {
        return Err(ExportError::UnknownId { kind: "transition", id: extra.clone() });
    }
    let choice = transitions
        .iter()
        .map(|q| {
            let p = json.policy.get(q).ok_or_else(|| ExportError::MissingId { kind: "transition", id: q.clone() })?;
            net.place_index(p).ok_or_else(|| ExportError::UnknownId { kind: "place", id: p.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StationarySolution {
        f: lookup(&json.f, &transitions, "transition")?,
        m: lookup(&json.m, &places, "place")?,
        w_dot: lookup(&json.w_dot, &places, "place")?,
        w0: lookup(&json.w0, &places, "place")?,
        policy: Policy { choice },
    })
}

/// Every solution contained in a solution file.
pub fn read_solutions(net: &PetriNet, text: &str) -> Result<Vec<StationarySolution>, ExportError> {
    match serde_json::from_str::<SolutionFile>(text)? {
        SolutionFile::One(s) => Ok(vec![solution_from_json(net, &s)?]),
        SolutionFile::All(all) => all
            .cones
            .iter()
            .flat_map(|c| &c.solutions)
            .map(|s| solution_from_json(net, s))
            .collect(),
    }
}
