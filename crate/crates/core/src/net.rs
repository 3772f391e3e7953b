//! Net structure: places with holding times, transitions, weighted arcs and
//! the routing rule attached to each place.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::linalg::RatMatrix;
use crate::rational::{format_exact, rat, Rat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub id: String,
    pub tau: Rat,
    pub m0: Rat,
    /// Initial waiting tokens; zero unless the net file overrides it.
    pub w0: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutingSpec {
    Plain,
    /// Stationary split of the processed flow, indexed by transition.
    Conflict(Vec<(usize, Rat)>),
    Priority { high: usize, low: usize },
}

/// Role a transition plays in the flow equations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitionKind {
    Sync,
    Conflict { place: usize, weight: Rat },
    PriorityHigh { place: usize, low: usize },
    PriorityLow { place: usize, high: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("duplicate identifier `{0}`")]
    Duplicate(String),
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("arc {0} -> {1} must join a place and a transition")]
    ArcEndpoints(String, String),
    #[error("arc weight must be positive")]
    ZeroWeight,
    #[error("holding time of `{0}` must be positive")]
    NonPositiveTau(String),
    #[error("initial marking of `{0}` must be nonnegative")]
    NegativeMarking(String),
    #[error("conflict weights of `{0}` must be positive")]
    NonPositiveWeight(String),
    #[error("conflict weights must sum to 1 (place `{0}` sums to {1})")]
    WeightSum(String, String),
    #[error("place `{0}` already has a route")]
    DuplicateRoute(String),
    #[error("priority route of `{0}` needs two distinct transitions")]
    PriorityPair(String),
}

/// Immutable net; build one with [`NetBuilder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PetriNet {
    pub name: String,
    places: Vec<Place>,
    transitions: Vec<String>,
    /// `pre[q][p]` = a⁻_qp, `post[q][p]` = a⁺_qp.
    pre: Vec<Vec<u64>>,
    post: Vec<Vec<u64>>,
    routing: Vec<RoutingSpec>,
}

impl PetriNet {
    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn transitions(&self) -> &[String] {
        &self.transitions
    }

    pub fn n_places(&self) -> usize {
        self.places.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn place(&self, p: usize) -> &Place {
        &self.places[p]
    }

    pub fn place_index(&self, id: &str) -> Option<usize> {
        self.places.iter().position(|p| p.id == id)
    }

    pub fn transition_index(&self, id: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == id)
    }

    pub fn pre(&self, q: usize, p: usize) -> u64 {
        self.pre[q][p]
    }

    pub fn post(&self, q: usize, p: usize) -> u64 {
        self.post[q][p]
    }

    pub fn routing(&self, p: usize) -> &RoutingSpec {
        &self.routing[p]
    }

    pub fn taus(&self) -> Vec<Rat> {
        self.places.iter().map(|p| p.tau.clone()).collect()
    }

    pub fn initial_marking(&self) -> Vec<Rat> {
        self.places.iter().map(|p| p.m0.clone()).collect()
    }

    /// q^in in declaration order.
    pub fn upstream(&self, q: usize) -> Vec<usize> {
        (0..self.places.len()).filter(|&p| self.pre[q][p] > 0).collect()
    }

    /// q^out in declaration order.
    pub fn downstream(&self, q: usize) -> Vec<usize> {
        (0..self.places.len()).filter(|&p| self.post[q][p] > 0).collect()
    }

    /// p^in.
    pub fn inputs(&self, p: usize) -> Vec<usize> {
        (0..self.transitions.len()).filter(|&q| self.post[q][p] > 0).collect()
    }

    /// p^out.
    pub fn outputs(&self, p: usize) -> Vec<usize> {
        (0..self.transitions.len()).filter(|&q| self.pre[q][p] > 0).collect()
    }

    pub fn is_conflict_place(&self, p: usize) -> bool {
        matches!(self.routing[p], RoutingSpec::Conflict(_))
    }

    pub fn is_priority_place(&self, p: usize) -> bool {
        matches!(self.routing[p], RoutingSpec::Priority { .. })
    }

    pub fn conflict_weight(&self, p: usize, q: usize) -> Option<&Rat> {
        match &self.routing[p] {
            RoutingSpec::Conflict(ws) => ws.iter().find(|(t, _)| *t == q).map(|(_, w)| w),
            _ => None,
        }
    }

    /// Role of `q` in the dynamics. Meaningful for valid nets only.
    pub fn transition_kind(&self, q: usize) -> TransitionKind {
        for p in self.upstream(q) {
            match &self.routing[p] {
                RoutingSpec::Priority { high, low } if *high == q => {
                    return TransitionKind::PriorityHigh { place: p, low: *low }
                }
                RoutingSpec::Priority { high, low } if *low == q => {
                    return TransitionKind::PriorityLow { place: p, high: *high }
                }
                RoutingSpec::Conflict(ws) => {
                    if let Some((_, w)) = ws.iter().find(|(t, _)| *t == q) {
                        return TransitionKind::Conflict { place: p, weight: w.clone() };
                    }
                }
                _ => {}
            }
        }
        TransitionKind::Sync
    }

    pub fn classification(&self) -> TransitionClassification {
        let mut c = TransitionClassification::default();
        for q in 0..self.transitions.len() {
            match self.transition_kind(q) {
                TransitionKind::Sync => c.sync.push(q),
                TransitionKind::Conflict { .. } => c.conflict_out.push(q),
                TransitionKind::PriorityHigh { .. } | TransitionKind::PriorityLow { .. } => c.priority_out.push(q),
            }
        }
        c
    }

    pub fn matrices(&self) -> NetMatrices {
        let np = self.places.len();
        let nq = self.transitions.len();
        let mut c_plus = RatMatrix::zeros(np, nq);
        let mut c_minus = RatMatrix::zeros(np, nq);
        for q in 0..nq {
            for p in 0..np {
                c_plus[(p, q)] = rat(self.post[q][p] as i64);
                c_minus[(p, q)] = rat(self.pre[q][p] as i64);
            }
        }
        let c = c_plus.sub(&c_minus);
        let a = c.transpose();
        NetMatrices { c_plus, c_minus, c, a }
    }

    /// Same structure with different place data; used by sweeps and the
    /// homogeneity transforms.
    pub fn with_places(&self, places: Vec<Place>) -> PetriNet {
        assert_eq!(places.len(), self.places.len());
        PetriNet { places, ..self.clone() }
    }

    pub fn place_mut_copy(&self, p: usize, f: impl FnOnce(&mut Place)) -> PetriNet {
        let mut places = self.places.clone();
        f(&mut places[p]);
        self.with_places(places)
    }

    /// Arcs in declaration order of transitions: (place, transition, weight, place_to_transition).
    pub fn arcs(&self) -> Vec<(usize, usize, u64, bool)> {
        let mut out = Vec::new();
        for q in 0..self.transitions.len() {
            for p in 0..self.places.len() {
                if self.pre[q][p] > 0 {
                    out.push((p, q, self.pre[q][p], true));
                }
            }
            for p in 0..self.places.len() {
                if self.post[q][p] > 0 {
                    out.push((p, q, self.post[q][p], false));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetMatrices {
    pub c_plus: RatMatrix,
    pub c_minus: RatMatrix,
    pub c: RatMatrix,
    pub a: RatMatrix,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionClassification {
    pub sync: Vec<usize>,
    pub conflict_out: Vec<usize>,
    pub priority_out: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct NetBuilder {
    name: String,
    places: Vec<Place>,
    transitions: Vec<String>,
    arcs: Vec<(String, String, u64)>,
    routes: Vec<(String, RouteDecl)>,
}

#[derive(Debug, Clone)]
enum RouteDecl {
    Conflict(Vec<(String, Rat)>),
    Priority(String, String),
}

impl NetBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetBuilder { name: name.into(), ..Default::default() }
    }

    pub fn place(mut self, id: &str, tau: Rat, m0: Rat) -> Self {
        self.places.push(Place { id: id.to_string(), tau, m0, w0: Rat::zero() });
        self
    }

    pub fn place_full(mut self, place: Place) -> Self {
        self.places.push(place);
        self
    }

    pub fn transition(mut self, id: &str) -> Self {
        self.transitions.push(id.to_string());
        self
    }

    pub fn arc(mut self, src: &str, dst: &str, weight: u64) -> Self {
        self.arcs.push((src.to_string(), dst.to_string(), weight));
        self
    }

    pub fn conflict(mut self, place: &str, weights: &[(&str, Rat)]) -> Self {
        let ws = weights.iter().map(|(q, w)| (q.to_string(), w.clone())).collect();
        self.routes.push((place.to_string(), RouteDecl::Conflict(ws)));
        self
    }

    pub fn priority(mut self, place: &str, high: &str, low: &str) -> Self {
        self.routes.push((place.to_string(), RouteDecl::Priority(high.to_string(), low.to_string())));
        self
    }

    pub fn build(self) -> Result<PetriNet, NetError> {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for id in self.places.iter().map(|p| p.id.as_str()).chain(self.transitions.iter().map(String::as_str)) {
            if seen.insert(id, ()).is_some() {
                return Err(NetError::Duplicate(id.to_string()));
            }
        }
        for p in &self.places {
            if !p.tau.is_positive() {
                return Err(NetError::NonPositiveTau(p.id.clone()));
            }
            if p.m0.is_negative() || p.w0.is_negative() {
                return Err(NetError::NegativeMarking(p.id.clone()));
            }
        }
        let place_ix = |id: &str| self.places.iter().position(|p| p.id == id);
        let trans_ix = |id: &str| self.transitions.iter().position(|t| t == id);
        let np = self.places.len();
        let nq = self.transitions.len();
        let mut pre = vec![vec![0u64; np]; nq];
        let mut post = vec![vec![0u64; np]; nq];
        for (src, dst, w) in &self.arcs {
            if *w == 0 {
                return Err(NetError::ZeroWeight);
            }
            match (place_ix(src), trans_ix(src), place_ix(dst), trans_ix(dst)) {
                (Some(p), _, _, Some(q)) => pre[q][p] += w,
                (_, Some(q), Some(p), _) => post[q][p] += w,
                (None, None, _, _) => return Err(NetError::UnknownNode(src.clone())),
                (_, _, None, None) => return Err(NetError::UnknownNode(dst.clone())),
                _ => return Err(NetError::ArcEndpoints(src.clone(), dst.clone())),
            }
        }
        let mut routing = vec![RoutingSpec::Plain; np];
        for (place, decl) in &self.routes {
            let p = place_ix(place).ok_or_else(|| NetError::UnknownPlace(place.clone()))?;
            if routing[p] != RoutingSpec::Plain {
                return Err(NetError::DuplicateRoute(place.clone()));
            }
            routing[p] = match decl {
                RouteDecl::Conflict(ws) => {
                    let mut out = Vec::new();
                    let mut sum = Rat::zero();
                    for (q, w) in ws {
                        let qi = trans_ix(q).ok_or_else(|| NetError::UnknownTransition(q.clone()))?;
                        if !w.is_positive() {
                            return Err(NetError::NonPositiveWeight(place.clone()));
                        }
                        if out.iter().any(|(t, _)| *t == qi) {
                            return Err(NetError::Duplicate(q.clone()));
                        }
                        sum += w;
                        out.push((qi, w.clone()));
                    }
                    if !sum.is_one() {
                        return Err(NetError::WeightSum(place.clone(), format_exact(&sum)));
                    }
                    RoutingSpec::Conflict(out)
                }
                RouteDecl::Priority(h, l) => {
                    let hi = trans_ix(h).ok_or_else(|| NetError::UnknownTransition(h.clone()))?;
                    let lo = trans_ix(l).ok_or_else(|| NetError::UnknownTransition(l.clone()))?;
                    if hi == lo {
                        return Err(NetError::PriorityPair(place.clone()));
                    }
                    RoutingSpec::Priority { high: hi, low: lo }
                }
            };
        }
        Ok(PetriNet { name: self.name, places: self.places, transitions: self.transitions, pre, post, routing })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Purity,
    NoUpstreamPlace,
    StrongConnectivity,
    PriorityFanOut,
    PriorityTargets,
    MultiplePriorityInputs,
    FreeChoice,
    ConflictCoverage,
    UnroutedChoice,
}

impl Rule {
    pub fn describe(self) -> &'static str {
        match self {
            Rule::Purity => "not pure",
            Rule::NoUpstreamPlace => "transition without upstream place",
            Rule::StrongConnectivity => "not strongly connected",
            Rule::PriorityFanOut => "priority fan-out ≠ 2",
            Rule::PriorityTargets => "priority transitions must be the place's outputs",
            Rule::MultiplePriorityInputs => "more than one upstream priority place",
            Rule::FreeChoice => "conflict place is not free choice",
            Rule::ConflictCoverage => "conflict weights must cover exactly the output transitions",
            Rule::UnroutedChoice => "place with several outputs has no routing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.subject, self.rule.describe(), self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Strong connectivity failures land here: simulation still works.
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_strongly_connected(&self) -> bool {
        !self.warnings.iter().any(|w| w.rule == Rule::StrongConnectivity)
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().chain(&self.warnings).any(|v| v.rule == rule)
    }
}

pub fn validate(net: &PetriNet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut flag = |rule: Rule, subject: &str, detail: String| {
        report.violations.push(Violation { rule, subject: subject.to_string(), detail });
    };
    let np = net.n_places();
    let nq = net.n_transitions();

    for q in 0..nq {
        for p in 0..np {
            if net.pre(q, p) > 0 && net.post(q, p) > 0 {
                flag(
                    Rule::Purity,
                    &net.place(p).id,
                    format!("arcs in both directions with `{}`", net.transitions()[q]),
                );
            }
        }
        if net.upstream(q).is_empty() {
            flag(Rule::NoUpstreamPlace, &net.transitions()[q], "no input arc".into());
        }
        let prio: Vec<usize> = net.upstream(q).into_iter().filter(|&p| net.is_priority_place(p)).collect();
        if prio.len() > 1 {
            let names: Vec<&str> = prio.iter().map(|&p| net.place(p).id.as_str()).collect();
            flag(Rule::MultiplePriorityInputs, &net.transitions()[q], names.join(", "));
        }
    }

    for p in 0..np {
        let outs = net.outputs(p);
        let id = &net.place(p).id;
        match net.routing(p) {
            RoutingSpec::Priority { high, low } => {
                if outs.len() != 2 {
                    flag(Rule::PriorityFanOut, id, format!("{} output transitions", outs.len()));
                }
                if !outs.contains(high) || !outs.contains(low) {
                    flag(Rule::PriorityTargets, id, "high/low must be output transitions".into());
                }
            }
            RoutingSpec::Conflict(ws) => {
                let mut routed: Vec<usize> = ws.iter().map(|(q, _)| *q).collect();
                routed.sort_unstable();
                if routed != outs {
                    flag(Rule::ConflictCoverage, id, format!("{} weights for {} outputs", ws.len(), outs.len()));
                }
                if outs.len() < 2 {
                    flag(Rule::ConflictCoverage, id, "conflict route on a place with fewer than two outputs".into());
                }
                for &q in &outs {
                    if net.upstream(q) != vec![p] {
                        flag(
                            Rule::FreeChoice,
                            id,
                            format!("output `{}` has other upstream places", net.transitions()[q]),
                        );
                    }
                }
            }
            RoutingSpec::Plain => {
                if outs.len() >= 2 {
                    flag(Rule::UnroutedChoice, id, format!("{} output transitions", outs.len()));
                }
            }
        }
    }

    if !strongly_connected(net) {
        report.warnings.push(Violation {
            rule: Rule::StrongConnectivity,
            subject: net.name.clone(),
            detail: "some node cannot reach every other node".into(),
        });
    }
    report
}

/// Strong connectivity of the bipartite place/transition graph.
pub fn strongly_connected(net: &PetriNet) -> bool {
    let np = net.n_places();
    let n = np + net.n_transitions();
    if n == 0 {
        return true;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for (p, q, _, p_to_q) in net.arcs() {
        let (a, b) = if p_to_q { (p, np + q) } else { (np + q, p) };
        fwd[a].push(b);
        bwd[b].push(a);
    }
    let reach = |adj: &Vec<Vec<usize>>| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(&fwd) && reach(&bwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    pub(crate) fn cycle2() -> PetriNet {
        NetBuilder::new("cycle2")
            .place("p1", rat(1), rat(2))
            .place("p2", rat(2), rat(0))
            .transition("q1")
            .transition("q2")
            .arc("p1", "q1", 1)
            .arc("q1", "p2", 1)
            .arc("p2", "q2", 1)
            .arc("q2", "p1", 1)
            .build()
            .unwrap()
    }

    #[test]
    fn cycle_is_valid() {
        let r = validate(&cycle2());
        assert!(r.is_ok(), "{:?}", r);
        assert!(r.is_strongly_connected());
    }

    #[test]
    fn cycle_matrices() {
        let m = cycle2().matrices();
        assert_eq!(m.c, RatMatrix::from_ints(&[&[-1, 1], &[1, -1]]));
        assert_eq!(m.c_plus, RatMatrix::from_ints(&[&[0, 1], &[1, 0]]));
        assert_eq!(m.c_minus, RatMatrix::from_ints(&[&[1, 0], &[0, 1]]));
        assert_eq!(m.a, m.c.transpose());
    }

    #[test]
    fn self_loop_is_not_pure() {
        let net = NetBuilder::new("loop")
            .place("p", rat(1), rat(1))
            .transition("q")
            .arc("p", "q", 1)
            .arc("q", "p", 1)
            .build()
            .unwrap();
        let r = validate(&net);
        assert!(r.has(Rule::Purity));
        assert_eq!(r.violations[0].rule.describe(), "not pure");
    }

    #[test]
    fn priority_with_three_outputs() {
        let net = NetBuilder::new("fan")
            .place("p", rat(1), rat(1))
            .place("a", rat(1), rat(0))
            .transition("q1")
            .transition("q2")
            .transition("q3")
            .arc("p", "q1", 1)
            .arc("p", "q2", 1)
            .arc("p", "q3", 1)
            .arc("q1", "a", 1)
            .arc("q2", "a", 1)
            .arc("q3", "a", 1)
            .priority("p", "q1", "q2")
            .build()
            .unwrap();
        let r = validate(&net);
        assert!(r.has(Rule::PriorityFanOut));
        assert_eq!(Rule::PriorityFanOut.describe(), "priority fan-out ≠ 2");
    }

    #[test]
    fn conflict_must_be_free_choice() {
        let net = NetBuilder::new("fc")
            .place("p", rat(1), rat(1))
            .place("r", rat(1), rat(1))
            .transition("a")
            .transition("b")
            .arc("p", "a", 1)
            .arc("p", "b", 1)
            .arc("r", "b", 1)
            .arc("a", "r", 1)
            .arc("b", "p", 1)
            .conflict("p", &[("a", ratio(1, 2)), ("b", ratio(1, 2))])
            .build();
        // b consumes from r as well as p, and b -> p makes it impure too.
        let r = validate(&net.unwrap());
        assert!(r.has(Rule::FreeChoice));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = NetBuilder::new("w")
            .place("p", rat(1), rat(1))
            .transition("a")
            .transition("b")
            .arc("p", "a", 1)
            .arc("p", "b", 1)
            .conflict("p", &[("a", ratio(1, 2)), ("b", ratio(2, 5))])
            .build()
            .unwrap_err();
        assert_eq!(err, NetError::WeightSum("p".into(), "9/10".into()));
    }

    #[test]
    fn unrouted_choice_and_missing_input() {
        let net = NetBuilder::new("u")
            .place("p", rat(1), rat(1))
            .transition("a")
            .transition("b")
            .transition("src")
            .arc("p", "a", 1)
            .arc("p", "b", 1)
            .arc("src", "p", 1)
            .build()
            .unwrap();
        let r = validate(&net);
        assert!(r.has(Rule::UnroutedChoice));
        assert!(r.has(Rule::NoUpstreamPlace));
        assert!(!r.is_strongly_connected());
    }

    #[test]
    fn classification_partitions_transitions() {
        let net = cycle2();
        let c = net.classification();
        assert_eq!(c.sync, vec![0, 1]);
        assert!(c.conflict_out.is_empty() && c.priority_out.is_empty());
    }
}
