//! Parameter sweeps comparing the limit flow of the reached policy with the
//! simulated throughput.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Deserialize;

use crate::cone::nonneg_solutions;
use crate::continuous::{simulate, throughput_estimate, ContinuousState, SimOptions};
use crate::net::PetriNet;
use crate::rational::{format_decimal, format_exact, parse_rat, to_f64, Rat};
use crate::stationary::flow_from_marking;

const DEFAULT_HORIZON: &str = "500";
const SAMPLES_PER_RUN: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("sweep spec: {0}")]
    Toml(String),
    #[error("unknown parameter path `{0}` (expected place.ID.m0, place.ID.w0 or place.ID.tau)")]
    UnknownPath(String),
    #[error("bad value `{0}`")]
    BadValue(String),
    #[error("value `{0}` is listed twice")]
    Duplicate(String),
    #[error("unknown output transition `{0}`")]
    UnknownOutput(String),
    #[error("horizon must be positive")]
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Number {
    Text(String),
    Int(i64),
}

impl Number {
    fn parse(&self) -> Result<Rat, SweepError> {
        match self {
            Number::Text(s) => parse_rat(s).map_err(|_| SweepError::BadValue(s.clone())),
            Number::Int(i) => Ok(Rat::from_integer((*i).into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    parameter: String,
    scale_by: Option<String>,
    values: Vec<Number>,
    outputs: Vec<String>,
    horizon: Option<Number>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    M0,
    W0,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamPath {
    place: usize,
    field: Field,
}

impl ParamPath {
    pub fn resolve(net: &PetriNet, path: &str) -> Result<ParamPath, SweepError> {
        let unknown = || SweepError::UnknownPath(path.to_string());
        let parts: Vec<&str> = path.split('.').collect();
        let [kind, id, field] = parts[..] else { return Err(unknown()) };
        if kind != "place" {
            return Err(unknown());
        }
        let place = net.place_index(id).ok_or_else(unknown)?;
        let field = match field {
            "m0" => Field::M0,
            "w0" => Field::W0,
            "tau" => Field::Tau,
            _ => return Err(unknown()),
        };
        Ok(ParamPath { place, field })
    }

    pub fn get(&self, net: &PetriNet) -> Rat {
        let p = net.place(self.place);
        match self.field {
            Field::M0 => p.m0.clone(),
            Field::W0 => p.w0.clone(),
            Field::Tau => p.tau.clone(),
        }
    }

    pub fn set(&self, net: &PetriNet, value: Rat) -> PetriNet {
        net.place_mut_copy(self.place, |p| match self.field {
            Field::M0 => p.m0 = value,
            Field::W0 => p.w0 = value,
            Field::Tau => p.tau = value,
        })
    }
}

/// A validated sweep: each value, optionally multiplied by the base value of
/// `scale_by`, is written to `parameter`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub parameter: ParamPath,
    pub scale: Option<Rat>,
    pub values: Vec<Rat>,
    pub outputs: Vec<usize>,
    pub horizon: Rat,
}

impl SweepSpec {
    pub fn parse(net: &PetriNet, text: &str) -> Result<SweepSpec, SweepError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| SweepError::Toml(e.message().to_string()))?;
        let parameter = ParamPath::resolve(net, &raw.parameter)?;
        let scale = match &raw.scale_by {
            Some(path) => Some(ParamPath::resolve(net, path)?.get(net)),
            None => None,
        };
        let mut values: Vec<Rat> = Vec::with_capacity(raw.values.len());
        for v in &raw.values {
            let r = v.parse()?;
            if values.contains(&r) {
                return Err(SweepError::Duplicate(format_exact(&r)));
            }
            values.push(r);
        }
        let outputs = raw
            .outputs
            .iter()
            .map(|id| net.transition_index(id).ok_or_else(|| SweepError::UnknownOutput(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let horizon = raw.horizon.unwrap_or(Number::Text(DEFAULT_HORIZON.into())).parse()?;
        if horizon <= Rat::from_integer(0.into()) {
            return Err(SweepError::Horizon);
        }
        Ok(SweepSpec { parameter, scale, values, outputs, horizon })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub transition: usize,
    pub stationary: Option<Rat>,
    pub simulated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: Rat,
    pub converged: bool,
    pub cells: Vec<SweepCell>,
    pub note: String,
}

pub fn run_sweep(net: &PetriNet, spec: &SweepSpec) -> Vec<SweepRow> {
    spec.values.par_iter().map(|v| run_row(net, spec, v)).collect()
}

fn run_row(net: &PetriNet, spec: &SweepSpec, value: &Rat) -> SweepRow {
    let actual = match &spec.scale {
        Some(s) => value * s,
        None => value.clone(),
    };
    let net = spec.parameter.set(net, actual);
    let empty = |note: String| SweepRow {
        value: value.clone(),
        converged: false,
        cells: spec.outputs.iter().map(|&q| SweepCell { transition: q, stationary: None, simulated: None }).collect(),
        note,
    };
    let horizon = to_f64(&spec.horizon);
    let opts = SimOptions { sample_interval: Some(horizon / SAMPLES_PER_RUN), ..SimOptions::default() };
    let traj = match simulate(&net, &ContinuousState::from_net(&net), horizon, &opts) {
        Ok(t) => t,
        Err(e) => return empty(format!("simulation failed: {e}")),
    };
    let simulated = if traj.converged { traj.last().flows.f.clone() } else { throughput_estimate(&traj, 0.2) };
    let policy = traj.final_policy().clone();
    let (stationary, note) = match flow_from_marking(&net, &policy, &net.initial_marking()) {
        Ok(f) => (Some(f), String::new()),
        Err(e) => {
            let mats = net.matrices();
            let system = policy.system(&net);
            let dim = nonneg_solutions(&system.balance(&mats.c_plus), Some(&mats.c)).map(|c| c.dimension());
            let dim = dim.map_or_else(|e| e.to_string(), |d| d.to_string());
            (None, format!("{e}; cone dimension {dim}"))
        }
    };
    SweepRow {
        value: value.clone(),
        converged: traj.converged,
        cells: spec
            .outputs
            .iter()
            .map(|&q| SweepCell {
                transition: q,
                stationary: stationary.as_ref().map(|f| f[q].clone()),
                simulated: Some(simulated[q]),
            })
            .collect(),
        note,
    }
}

pub fn sweep_csv(net: &PetriNet, rows: &[SweepRow]) -> String {
    let mut out = String::from("param,transition,stationary,simulated,converged,param_exact,stationary_exact,note\n");
    for row in rows {
        for cell in &row.cells {
            let stationary = cell.stationary.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                format_decimal(to_f64(&row.value)),
                net.transitions()[cell.transition],
                stationary.map(|r| format_decimal(to_f64(r))).unwrap_or_default(),
                cell.simulated.map(format_decimal).unwrap_or_default(),
                row.converged,
                format_exact(&row.value),
                stationary.map(format_exact).unwrap_or_default(),
                csv_field(&row.note),
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::{rat, ratio};

    #[test]
    fn spec_parses_exact_values() {
        let net = bundled::load("callcenter");
        let spec = SweepSpec::parse(
            &net,
            "parameter = \"place.p2.m0\"\nscale_by = \"place.p1.m0\"\nvalues = [\"0.2\", \"1\", 3]\noutputs = [\"q5\"]\n",
        )
        .unwrap();
        assert_eq!(spec.values, vec![ratio(1, 5), rat(1), rat(3)]);
        assert_eq!(spec.scale, Some(ratio(701, 7)));
        assert_eq!(spec.horizon, rat(500));
        assert_eq!(spec.outputs, vec![4]);
    }

    #[test]
    fn spec_errors() {
        let net = bundled::load("cycle2");
        let parse = |t: &str| SweepSpec::parse(&net, t).unwrap_err();
        assert!(matches!(parse("parameter = \"place.zz.m0\"\nvalues = []\noutputs = []"), SweepError::UnknownPath(_)));
        assert!(matches!(parse("parameter = \"place.p1.m0\"\nvalues = [1, \"1\"]\noutputs = []"), SweepError::Duplicate(_)));
        assert!(matches!(parse("parameter = \"place.p1.m0\"\nvalues = [1]\noutputs = [\"qq\"]"), SweepError::UnknownOutput(_)));
        assert!(matches!(parse("values = [1]"), SweepError::Toml(_)));
    }

    #[test]
    fn cycle_sweep_is_linear_in_marking() {
        let net = bundled::load("cycle2");
        let spec = SweepSpec::parse(
            &net,
            "parameter = \"place.p1.m0\"\nvalues = [1, 2, 4]\noutputs = [\"q1\", \"q2\"]\nhorizon = 200\n",
        )
        .unwrap();
        let rows = run_sweep(&net, &spec);
        for row in &rows {
            assert!(row.converged, "{row:?}");
            for cell in &row.cells {
                let want = &row.value / rat(3);
                assert_eq!(cell.stationary.as_ref(), Some(&want));
                assert!((cell.simulated.unwrap() - to_f64(&want)).abs() < 1e-6);
            }
        }
        let csv = sweep_csv(&net, &rows);
        assert!(csv.starts_with("param,transition,stationary,simulated,converged"));
        assert!(csv.contains("\n2,q1,0.666666666667,"));
        assert_eq!(csv, sweep_csv(&net, &run_sweep(&net, &spec)));
    }
}
