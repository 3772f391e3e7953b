//! Stationary regimes: policy-wise cones of stationary flows, exact
//! checkers for the continuous and discrete conditions, the conversions
//! between them, and the limit flow reached from an initial marking.

use std::fmt;

use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::cone::{nonneg_solutions, ConeGenerators};
use crate::linalg::{spectral_projection_at_zero, LinalgError, RatMatrix};
use crate::net::{PetriNet, RoutingSpec, TransitionKind};
use crate::policy::{enumerate_policies, Policy, PolicyError, PolicySystem};
use crate::rational::{format_exact, rat, Rat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationarySolution {
    pub f: Vec<Rat>,
    pub m: Vec<Rat>,
    pub w_dot: Vec<Rat>,
    pub w0: Vec<Rat>,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteStationary {
    pub rho_p: Vec<Rat>,
    pub rho_q: Vec<Rat>,
    pub u_p: Vec<Rat>,
    pub u_q: Vec<Rat>,
}

/// Stationary flows of one policy.
#[derive(Debug, Clone)]
pub struct PolicyCone {
    pub system: PolicySystem,
    pub cone: ConeGenerators,
    pub solutions: Vec<StationarySolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StationaryError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no policy attains every minimum (transition `{0}` has no balanced upstream place)")]
    NoWitnessPolicy(String),
    #[error("{0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NotApplicable {
    #[error("eigenvalue 0 not semi-simple")]
    NotSemisimple,
    #[error("policy infeasible for this marking")]
    Infeasible,
    #[error("{0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Dimension,
    NonnegativeFlow,
    NonnegativeMarking,
    NonnegativeOffset,
    MarkingBalance,
    WaitingRate,
    NodeLaw,
    SelectedPlacesEmpty,
    PolicyBalance,
    PlaceThroughput,
    ConflictThroughput,
    SyncThroughput,
    HighThroughput,
    LowThroughput,
    PlaceOffset,
    ConflictOffset,
    SyncOffset,
    HighOffset,
    LowOffset,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Dimension => "dimensions",
            Condition::NonnegativeFlow => "f ≥ 0",
            Condition::NonnegativeMarking => "m ≥ 0",
            Condition::NonnegativeOffset => "w0 ≥ 0",
            Condition::MarkingBalance => "m/τ = C⁺f",
            Condition::WaitingRate => "ẇ = m/τ − C⁻f",
            Condition::NodeLaw => "Cf ≥ 0",
            Condition::SelectedPlacesEmpty => "S_π w(t) = 0",
            Condition::PolicyBalance => "(S_πC⁺ − C⁻_π)f = 0",
            Condition::PlaceThroughput => "ρ_p = Σ a⁺ρ_q",
            Condition::ConflictThroughput => "ρ_q = μρ_p/a⁻",
            Condition::SyncThroughput => "ρ_q = min ρ_p/a⁻",
            Condition::HighThroughput => "ρ_q⁺ = min ρ_r/a⁻",
            Condition::LowThroughput => "ρ_q⁻ = min((ρ_p − a⁻ρ_q⁺)/a⁻, ρ_r/a⁻)",
            Condition::PlaceOffset => "u_p = M⁰_p + Σ a⁺u_q",
            Condition::ConflictOffset => "u_q = μ(u_p − ρ_pτ_p)/a⁻",
            Condition::SyncOffset => "u_q = min (u_p − ρ_pτ_p)/a⁻",
            Condition::HighOffset => "u_q⁺ priority offset",
            Condition::LowOffset => "u_q⁻ priority offset",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub condition: Condition,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at {}: {}", self.condition, self.subject, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, condition: Condition) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }

    fn push(&mut self, condition: Condition, subject: impl Into<String>, detail: String) {
        self.violations.push(Violation { condition, subject: subject.into(), detail });
    }
}

/// Some f ⪈ 0 with Cf ≥ 0, if any exists.
pub fn is_partially_repetitive(net: &PetriNet) -> Result<Option<Vec<Rat>>, LinalgError> {
    let c = net.matrices().c;
    let none = RatMatrix::zeros(0, net.n_transitions());
    let cone = nonneg_solutions(&none, Some(&c))?;
    Ok(cone.rays.into_iter().find(|r| r.iter().any(|v| !v.is_zero())))
}

/// Extreme rays of `{f ≥ 0 : (S_πC⁺ − C⁻_π)f = 0, Cf ≥ 0}` for every policy
/// with a nonempty cone, in policy order.
pub fn solve_stationary(net: &PetriNet) -> Result<Vec<PolicyCone>, StationaryError> {
    let systems = enumerate_policies(net)?;
    let mats = net.matrices();
    let results: Vec<Result<Option<PolicyCone>, LinalgError>> = systems
        .into_par_iter()
        .map(|system| {
            let cone = nonneg_solutions(&system.balance(&mats.c_plus), Some(&mats.c))?;
            if cone.is_empty() {
                return Ok(None);
            }
            let solutions = cone.rays.iter().map(|f| solution_from_flow(net, f, system.policy.clone())).collect();
            Ok(Some(PolicyCone { system, cone, solutions }))
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        if let Some(pc) = r? {
            out.push(pc);
        }
    }
    Ok(out)
}

/// m = τ⊙C⁺f, ẇ = Cf and w0 = 0.
pub fn solution_from_flow(net: &PetriNet, f: &[Rat], policy: Policy) -> StationarySolution {
    let mats = net.matrices();
    let inflow = mats.c_plus.mul_vec(f);
    let m = inflow.iter().zip(net.places()).map(|(v, p)| v * &p.tau).collect();
    StationarySolution {
        f: f.to_vec(),
        m,
        w_dot: mats.c.mul_vec(f),
        w0: vec![Rat::zero(); net.n_places()],
        policy,
    }
}

pub fn check_stationary(net: &PetriNet, sol: &StationarySolution) -> CheckReport {
    let mut report = CheckReport::default();
    let (np, nq) = (net.n_places(), net.n_transitions());
    if sol.f.len() != nq || sol.m.len() != np || sol.w_dot.len() != np || sol.w0.len() != np {
        report.push(Condition::Dimension, net.name.clone(), "vector lengths do not match the net".into());
        return report;
    }
    let system = match Policy::new(net, sol.policy.choice.clone()) {
        Ok(p) => p.system(net),
        Err(e) => {
            report.push(Condition::Dimension, "policy", e.to_string());
            return report;
        }
    };
    let place = |p: usize| net.place(p).id.clone();
    let trans = |q: usize| net.transitions()[q].clone();
    for (q, v) in sol.f.iter().enumerate() {
        if v.is_negative() {
            report.push(Condition::NonnegativeFlow, trans(q), format_exact(v));
        }
    }
    for p in 0..np {
        if sol.m[p].is_negative() {
            report.push(Condition::NonnegativeMarking, place(p), format_exact(&sol.m[p]));
        }
        if sol.w0[p].is_negative() {
            report.push(Condition::NonnegativeOffset, place(p), format_exact(&sol.w0[p]));
        }
    }
    let mats = net.matrices();
    let inflow = mats.c_plus.mul_vec(&sol.f);
    let outflow = mats.c_minus.mul_vec(&sol.f);
    for p in 0..np {
        let rate = &sol.m[p] / &net.place(p).tau;
        if rate != inflow[p] {
            report.push(
                Condition::MarkingBalance,
                place(p),
                format!("m/τ = {}, C⁺f = {}", format_exact(&rate), format_exact(&inflow[p])),
            );
        }
        let expected = &rate - &outflow[p];
        if sol.w_dot[p] != expected {
            report.push(
                Condition::WaitingRate,
                place(p),
                format!("ẇ = {}, expected {}", format_exact(&sol.w_dot[p]), format_exact(&expected)),
            );
        }
        let law = &inflow[p] - &outflow[p];
        if law.is_negative() {
            report.push(Condition::NodeLaw, place(p), format!("(Cf)_p = {}", format_exact(&law)));
        } else if sol.w_dot[p].is_negative() {
            report.push(Condition::NodeLaw, place(p), format!("ẇ = {}", format_exact(&sol.w_dot[p])));
        }
    }
    for (q, &p) in sol.policy.choice.iter().enumerate() {
        if !sol.w0[p].is_zero() || !sol.w_dot[p].is_zero() {
            report.push(
                Condition::SelectedPlacesEmpty,
                format!("{} (selected by {})", place(p), trans(q)),
                format!("w0 = {}, ẇ = {}", format_exact(&sol.w0[p]), format_exact(&sol.w_dot[p])),
            );
        }
    }
    let residual = system.balance(&mats.c_plus).mul_vec(&sol.f);
    for (q, r) in residual.iter().enumerate() {
        if !r.is_zero() {
            report.push(Condition::PolicyBalance, trans(q), format!("row residual {}", format_exact(r)));
        }
    }
    report
}

/// ρ_q = f, ρ_p = C⁺f, u_p = m and u_q = 0; the offsets hold for M⁰ = m.
pub fn to_discrete(net: &PetriNet, sol: &StationarySolution) -> DiscreteStationary {
    let rho_p = net.matrices().c_plus.mul_vec(&sol.f);
    DiscreteStationary {
        rho_p,
        rho_q: sol.f.clone(),
        u_p: sol.m.clone(),
        u_q: vec![Rat::zero(); net.n_transitions()],
    }
}

/// Rebuilds a continuous stationary solution from discrete throughputs.
/// Each transition selects its first upstream place whose policy row balances
/// and whose waiting rate vanishes.
pub fn to_continuous(net: &PetriNet, ds: &DiscreteStationary) -> Result<StationarySolution, StationaryError> {
    let (np, nq) = (net.n_places(), net.n_transitions());
    if ds.rho_p.len() != np || ds.rho_q.len() != nq {
        return Err(StationaryError::Dimension("throughput vectors do not match the net".into()));
    }
    let f = ds.rho_q.clone();
    let mats = net.matrices();
    let inflow = mats.c_plus.mul_vec(&f);
    let outflow = mats.c_minus.mul_vec(&f);
    let m: Vec<Rat> = (0..np).map(|p| &ds.rho_p[p] * &net.place(p).tau).collect();
    let w_dot: Vec<Rat> = (0..np).map(|p| &ds.rho_p[p] - &outflow[p]).collect();
    let mut choice = Vec::with_capacity(nq);
    for q in 0..nq {
        let found = net.upstream(q).into_iter().find(|&p| {
            if !w_dot[p].is_zero() {
                return false;
            }
            let a = rat(net.pre(q, p) as i64);
            let consumed = match net.routing(p) {
                RoutingSpec::Plain => &a * &f[q],
                RoutingSpec::Conflict(_) => match net.conflict_weight(p, q) {
                    Some(mu) => &a * &f[q] / mu,
                    None => return false,
                },
                RoutingSpec::Priority { high, low } => {
                    if q == *low {
                        &a * &f[q] + rat(net.pre(*high, p) as i64) * &f[*high]
                    } else {
                        &a * &f[q]
                    }
                }
            };
            consumed == inflow[p]
        });
        match found {
            Some(p) => choice.push(p),
            None => return Err(StationaryError::NoWitnessPolicy(net.transitions()[q].clone())),
        }
    }
    let policy = Policy { choice };
    Ok(StationarySolution { f, m, w_dot, w0: vec![Rat::zero(); np], policy })
}

/// Verifies the throughput and offset equations of an ultimately affine
/// solution of the counter dynamics started from `m0`. Every minimum ranges
/// only over the terms whose slope attains the throughput.
pub fn check_discrete_stationary(net: &PetriNet, ds: &DiscreteStationary, m0: &[Rat]) -> CheckReport {
    let mut report = CheckReport::default();
    let (np, nq) = (net.n_places(), net.n_transitions());
    if ds.rho_p.len() != np || ds.u_p.len() != np || ds.rho_q.len() != nq || ds.u_q.len() != nq || m0.len() != np {
        report.push(Condition::Dimension, net.name.clone(), "vector lengths do not match the net".into());
        return report;
    }
    let place = |p: usize| net.place(p).id.clone();
    let trans = |q: usize| net.transitions()[q].clone();
    let a = |q: usize, p: usize| rat(net.pre(q, p) as i64);
    let lag = |p: usize| &ds.u_p[p] - &ds.rho_p[p] * &net.place(p).tau;
    let mismatch = |got: &Rat, want: &Rat| format!("{} ≠ {}", format_exact(got), format_exact(want));

    for p in 0..np {
        let mut rho = Rat::zero();
        let mut u = m0[p].clone();
        for q in net.inputs(p) {
            let w = rat(net.post(q, p) as i64);
            rho += &w * &ds.rho_q[q];
            u += &w * &ds.u_q[q];
        }
        if ds.rho_p[p] != rho {
            report.push(Condition::PlaceThroughput, place(p), mismatch(&ds.rho_p[p], &rho));
        }
        if ds.u_p[p] != u {
            report.push(Condition::PlaceOffset, place(p), mismatch(&ds.u_p[p], &u));
        }
    }
    for q in 0..nq {
        if ds.rho_q[q].is_negative() {
            report.push(Condition::SyncThroughput, trans(q), format!("negative throughput {}", format_exact(&ds.rho_q[q])));
        }
    }

    // Slope and offset of each plain upstream term of q, skipping `skip`.
    let plain_terms = |q: usize, skip: Option<usize>| -> Vec<(Rat, Rat)> {
        net.upstream(q)
            .into_iter()
            .filter(|&p| Some(p) != skip)
            .map(|p| (&ds.rho_p[p] / a(q, p), lag(p) / a(q, p)))
            .collect()
    };
    let min_slope = |terms: &[(Rat, Rat)]| terms.iter().map(|t| t.0.clone()).min();
    let min_offset = |terms: &[(Rat, Rat)], rho: &Rat| terms.iter().filter(|t| &t.0 == rho).map(|t| t.1.clone()).min();

    for q in 0..nq {
        let rho = &ds.rho_q[q];
        let u = &ds.u_q[q];
        match net.transition_kind(q) {
            TransitionKind::Conflict { place: p, weight } => {
                let want_rho = &weight * &ds.rho_p[p] / a(q, p);
                if rho != &want_rho {
                    report.push(Condition::ConflictThroughput, trans(q), mismatch(rho, &want_rho));
                }
                let want_u = &weight * lag(p) / a(q, p);
                if u != &want_u {
                    report.push(Condition::ConflictOffset, trans(q), mismatch(u, &want_u));
                }
            }
            TransitionKind::Sync => {
                let terms = plain_terms(q, None);
                check_min(&mut report, Condition::SyncThroughput, Condition::SyncOffset, trans(q), rho, u, &terms, min_slope, min_offset);
            }
            TransitionKind::PriorityHigh { place: p, low } => {
                let slopes = plain_terms(q, None);
                let own_slope = &ds.rho_p[p] / a(q, p);
                let mut offsets = plain_terms(q, Some(p));
                if ds.rho_q[low].is_zero() {
                    let own_u = (lag(p) - a(low, p) * &ds.u_q[low]) / a(q, p);
                    offsets.push((own_slope, own_u));
                }
                match min_slope(&slopes) {
                    Some(s) if &s == rho => {}
                    Some(s) => report.push(Condition::HighThroughput, trans(q), mismatch(rho, &s)),
                    None => report.push(Condition::HighThroughput, trans(q), "no upstream place".into()),
                }
                match min_offset(&offsets, rho) {
                    Some(v) if &v == u => {}
                    Some(v) => report.push(Condition::HighOffset, trans(q), mismatch(u, &v)),
                    None => report.push(Condition::HighOffset, trans(q), "no term attains the throughput".into()),
                }
            }
            TransitionKind::PriorityLow { place: p, high } => {
                let own_slope = (&ds.rho_p[p] - a(high, p) * &ds.rho_q[high]) / a(q, p);
                let mut slopes = plain_terms(q, Some(p));
                slopes.push((own_slope.clone(), Rat::zero()));
                let mut offsets = plain_terms(q, Some(p));
                if &own_slope == rho {
                    let own_u = (lag(p) - a(high, p) * &ds.u_q[high]) / a(q, p);
                    offsets.push((own_slope, own_u));
                }
                match min_slope(&slopes) {
                    Some(s) if &s == rho => {}
                    Some(s) => report.push(Condition::LowThroughput, trans(q), mismatch(rho, &s)),
                    None => unreachable!("the priority place is always a term"),
                }
                match min_offset(&offsets, rho) {
                    Some(v) if &v == u => {}
                    Some(v) => report.push(Condition::LowOffset, trans(q), mismatch(u, &v)),
                    None => report.push(Condition::LowOffset, trans(q), "no term attains the throughput".into()),
                }
            }
        }
    }
    report
}

#[allow(clippy::too_many_arguments)]
fn check_min(
    report: &mut CheckReport,
    rho_cond: Condition,
    u_cond: Condition,
    subject: String,
    rho: &Rat,
    u: &Rat,
    terms: &[(Rat, Rat)],
    min_slope: impl Fn(&[(Rat, Rat)]) -> Option<Rat>,
    min_offset: impl Fn(&[(Rat, Rat)], &Rat) -> Option<Rat>,
) {
    match min_slope(terms) {
        Some(s) if &s == rho => {}
        Some(s) => report.push(rho_cond, subject.clone(), format!("{} ≠ {}", format_exact(rho), format_exact(&s))),
        None => report.push(rho_cond, subject.clone(), "no upstream place".into()),
    }
    match min_offset(terms, rho) {
        Some(v) if &v == u => {}
        Some(v) => report.push(u_cond, subject, format!("{} ≠ {}", format_exact(u), format_exact(&v))),
        None => report.push(u_cond, subject, "no term attains the throughput".into()),
    }
}

/// Limit flow of the linear regime of `policy` started from `m0`:
/// f∞ = (C⁻_π)⁻¹ D_π⁻¹ Q S_π m0 with Q the projector onto ker B along range B.
pub fn flow_from_marking(net: &PetriNet, policy: &Policy, m0: &[Rat]) -> Result<Vec<Rat>, NotApplicable> {
    if m0.len() != net.n_places() {
        return Err(NotApplicable::Dimension(format!(
            "marking has {} entries, net has {} places",
            m0.len(),
            net.n_places()
        )));
    }
    let policy = Policy::new(net, policy.choice.clone()).map_err(|e| NotApplicable::Dimension(e.to_string()))?;
    let system = policy.system(net);
    let mats = net.matrices();
    let b0 = system.balance(&mats.c_plus);
    let linear = || NotApplicable::Dimension("singular policy system".into());
    let dc_inv = system.holding.mul(&system.c_minus).inverse().map_err(|_| linear())?;
    let b = b0.mul(&dc_inv);
    let semisimple = |m: &RatMatrix| spectral_projection_at_zero(m).map_err(|_| linear());
    if !semisimple(&b0)?.semisimple {
        return Err(NotApplicable::NotSemisimple);
    }
    let proj = semisimple(&b)?;
    let Some(q) = proj.projector.filter(|_| proj.semisimple) else {
        return Err(NotApplicable::NotSemisimple);
    };
    let selected = system.selection.mul_vec(m0);
    let f = dc_inv.mul_vec(&q.mul_vec(&selected));
    let law = mats.c.mul_vec(&f);
    if f.iter().chain(&law).any(Signed::is_negative) {
        return Err(NotApplicable::Infeasible);
    }
    Ok(f)
}

/// The stationary solution carried by the limit flow of `policy`.
pub fn limit_solution(net: &PetriNet, policy: &Policy, m0: &[Rat]) -> Result<StationarySolution, NotApplicable> {
    let f = flow_from_marking(net, policy, m0)?;
    Ok(solution_from_flow(net, &f, policy.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::net::NetBuilder;
    use crate::rational::ratio;

    fn ints(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| rat(x)).collect()
    }

    fn draining() -> PetriNet {
        NetBuilder::new("drain")
            .place("a", rat(1), rat(5))
            .place("b", rat(1), rat(0))
            .transition("x")
            .transition("y")
            .arc("a", "x", 2)
            .arc("x", "b", 1)
            .arc("b", "y", 2)
            .arc("y", "a", 1)
            .build()
            .unwrap()
    }

    fn jordan() -> PetriNet {
        NetBuilder::new("jordan")
            .place("px", rat(1), rat(1))
            .place("py", rat(1), rat(0))
            .place("pz", rat(1), rat(1))
            .place("pw", rat(1), rat(0))
            .transition("x")
            .transition("y")
            .transition("z")
            .transition("w")
            .arc("px", "x", 1)
            .arc("py", "y", 1)
            .arc("pz", "z", 1)
            .arc("pw", "w", 1)
            .arc("y", "px", 1)
            .arc("z", "px", 1)
            .arc("x", "py", 1)
            .arc("w", "pz", 1)
            .arc("z", "pw", 1)
            .build()
            .unwrap()
    }

    #[test]
    fn cycle_is_partially_repetitive() {
        let net = bundled::load("cycle2");
        assert_eq!(is_partially_repetitive(&net).unwrap(), Some(ints(&[1, 1])));
        assert_eq!(is_partially_repetitive(&draining()).unwrap(), None);
        assert!(is_partially_repetitive(&bundled::load("callcenter")).unwrap().is_some());
    }

    #[test]
    fn cycle_has_one_ray() {
        let net = bundled::load("cycle2");
        let cones = solve_stationary(&net).unwrap();
        assert_eq!(cones.len(), 1);
        assert_eq!(cones[0].cone.rays, vec![ints(&[1, 1])]);
        let sol = &cones[0].solutions[0];
        assert_eq!(sol.m, ints(&[1, 2]));
        assert!(check_stationary(&net, sol).is_ok());
    }

    #[test]
    fn draining_net_has_no_stationary_flow() {
        assert!(solve_stationary(&draining()).unwrap().is_empty());
    }

    #[test]
    fn high_priority_on_shared_place_starves_low() {
        let net = bundled::load("prio3");
        let (qp, qm, p) = (0, 1, 0);
        let cones = solve_stationary(&net).unwrap();
        assert!(!cones.is_empty());
        let mut seen = false;
        for pc in &cones {
            for sol in &pc.solutions {
                assert!(check_stationary(&net, sol).is_ok());
                assert!(sol.w_dot[p].is_zero() || !sol.policy.choice.contains(&p));
                if sol.policy.choice[qp] == p {
                    seen = true;
                    assert!(sol.f[qm].is_zero());
                }
            }
        }
        assert!(seen);
    }

    #[test]
    fn perturbations_are_named() {
        let net = bundled::load("cycle2");
        let sol = solution_from_flow(&net, &ints(&[1, 1]), Policy { choice: vec![0, 1] });
        let mut bumped = sol.clone();
        bumped.f[0] += rat(1);
        let report = check_stationary(&net, &bumped);
        assert!(report.has(Condition::MarkingBalance));
        let mut drained = sol.clone();
        drained.w_dot[1] = rat(-1);
        assert!(check_stationary(&net, &drained).has(Condition::NodeLaw));
        let mut waiting = sol;
        waiting.w0[0] = rat(1);
        assert!(check_stationary(&net, &waiting).has(Condition::SelectedPlacesEmpty));
    }

    #[test]
    fn discrete_image_of_cycle() {
        let net = bundled::load("cycle2");
        let f = vec![ratio(2, 3), ratio(2, 3)];
        let sol = solution_from_flow(&net, &f, Policy { choice: vec![0, 1] });
        let ds = to_discrete(&net, &sol);
        assert_eq!(ds.rho_p, f);
        assert_eq!(ds.u_p, vec![ratio(2, 3), ratio(4, 3)]);
        assert!(ds.u_q.iter().all(Zero::is_zero));
        assert!(check_discrete_stationary(&net, &ds, &sol.m).is_ok());
        let back = to_continuous(&net, &ds).unwrap();
        assert_eq!((back.f, back.m), (sol.f, sol.m));
    }

    #[test]
    fn zero_flow_is_stationary() {
        let net = bundled::load("prio3");
        let sol = solution_from_flow(&net, &ints(&[0, 0, 0, 0]), Policy { choice: vec![0, 0, 3, 4] });
        assert!(check_stationary(&net, &sol).is_ok());
        let ds = to_discrete(&net, &sol);
        assert!(check_discrete_stationary(&net, &ds, &vec![Rat::zero(); 5]).is_ok());
    }

    #[test]
    fn discrete_checker_names_equations() {
        let net = bundled::load("cycle2");
        let sol = solution_from_flow(&net, &ints(&[1, 1]), Policy { choice: vec![0, 1] });
        let ds = to_discrete(&net, &sol);
        let mut off = ds.clone();
        off.u_q[0] = rat(1);
        let report = check_discrete_stationary(&net, &off, &sol.m);
        assert!(report.has(Condition::SyncOffset));
        assert!(report.has(Condition::PlaceOffset));
        let mut bad = ds;
        bad.rho_p[0] = rat(3);
        assert!(check_discrete_stationary(&net, &bad, &sol.m).has(Condition::PlaceThroughput));
    }

    #[test]
    fn projection_on_cycle() {
        let net = bundled::load("cycle2");
        let pol = Policy { choice: vec![0, 1] };
        assert_eq!(flow_from_marking(&net, &pol, &ints(&[2, 0])).unwrap(), vec![ratio(2, 3), ratio(2, 3)]);
        assert_eq!(flow_from_marking(&net, &pol, &ints(&[0, 0])).unwrap(), ints(&[0, 0]));
    }

    #[test]
    fn jordan_block_is_rejected() {
        let net = jordan();
        let pol = Policy { choice: vec![0, 1, 2, 3] };
        assert_eq!(flow_from_marking(&net, &pol, &ints(&[1, 0, 1, 0])), Err(NotApplicable::NotSemisimple));
    }

    #[test]
    fn priority_case_with_starved_low_transition() {
        let base = bundled::load("callcenter");
        let m1 = base.place(0).m0.clone();
        let net = base.place_mut_copy(1, |p| p.m0 = &m1 * ratio(2, 5));
        let p2 = net.place_index("p2").unwrap();
        let mut choice: Vec<usize> = (0..net.n_transitions()).map(|q| net.upstream(q)[0]).collect();
        choice[4] = p2;
        choice[5] = p2;
        let pol = Policy::new(&net, choice).unwrap();
        let sol = limit_solution(&net, &pol, &net.initial_marking()).unwrap();
        assert!(check_stationary(&net, &sol).is_ok());
        assert!((crate::rational::to_f64(&sol.f[4]) - 5.714).abs() < 1e-3);
        assert!(sol.f[5].is_zero());
        let ds = to_discrete(&net, &sol);
        assert!(check_discrete_stationary(&net, &ds, &sol.m).is_ok());
        let mut off = ds;
        off.u_q[4] = rat(1);
        assert!(check_discrete_stationary(&net, &off, &sol.m).has(Condition::HighOffset));
    }
}
