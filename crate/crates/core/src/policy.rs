use num_traits::{One, Zero};

use crate::linalg::RatMatrix;
use crate::net::{PetriNet, RoutingSpec};
use crate::rational::{rat, Rat};

pub const DEFAULT_POLICY_CAP: u128 = 1_000_000;

/// For each transition, the upstream place whose constraint is active.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    pub choice: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("{count} policies exceed the cap of {cap}")]
    Explosion { count: u128, cap: u128 },
    #[error("policy has {got} entries, net has {expected} transitions")]
    Length { got: usize, expected: usize },
    #[error("place `{place}` is not upstream of `{transition}`")]
    NotUpstream { transition: String, place: String },
}

/// A policy together with S_π, C⁻_π and D_π.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySystem {
    pub policy: Policy,
    pub selection: RatMatrix,
    pub c_minus: RatMatrix,
    pub holding: RatMatrix,
}

impl Policy {
    pub fn new(net: &PetriNet, choice: Vec<usize>) -> Result<Policy, PolicyError> {
        if choice.len() != net.n_transitions() {
            return Err(PolicyError::Length { got: choice.len(), expected: net.n_transitions() });
        }
        for (q, &p) in choice.iter().enumerate() {
            if p >= net.n_places() || net.pre(q, p) == 0 {
                return Err(PolicyError::NotUpstream {
                    transition: net.transitions()[q].clone(),
                    place: net.places().get(p).map(|pl| pl.id.clone()).unwrap_or_else(|| format!("#{p}")),
                });
            }
        }
        Ok(Policy { choice })
    }

    pub fn system(&self, net: &PetriNet) -> PolicySystem {
        let nq = net.n_transitions();
        let np = net.n_places();
        let mut selection = RatMatrix::zeros(nq, np);
        let mut c_minus = RatMatrix::zeros(nq, nq);
        let mut holding = RatMatrix::zeros(nq, nq);
        for (q, &p) in self.choice.iter().enumerate() {
            selection[(q, p)] = Rat::one();
            holding[(q, q)] = net.place(p).tau.clone();
            let a = rat(net.pre(q, p) as i64);
            match net.routing(p) {
                RoutingSpec::Plain => c_minus[(q, q)] = a,
                RoutingSpec::Conflict(_) => {
                    let mu = net.conflict_weight(p, q).cloned().unwrap_or_else(Rat::one);
                    c_minus[(q, q)] = a / mu;
                }
                RoutingSpec::Priority { high, low } => {
                    c_minus[(q, q)] = a;
                    if q == *low {
                        c_minus[(q, *high)] = rat(net.pre(*high, p) as i64);
                    }
                }
            }
        }
        PolicySystem { policy: self.clone(), selection, c_minus, holding }
    }

    pub fn describe(&self, net: &PetriNet) -> String {
        self.choice
            .iter()
            .enumerate()
            .map(|(q, &p)| format!("{}->{}", net.transitions()[q], net.place(p).id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl PolicySystem {
    /// S_π C⁺ − C⁻_π.
    pub fn balance(&self, c_plus: &RatMatrix) -> RatMatrix {
        self.selection.mul(c_plus).sub(&self.c_minus)
    }
}

pub fn policy_count(net: &PetriNet) -> u128 {
    (0..net.n_transitions())
        .map(|q| net.upstream(q).len() as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

pub fn enumerate_policies(net: &PetriNet) -> Result<Vec<PolicySystem>, PolicyError> {
    enumerate_policies_capped(net, DEFAULT_POLICY_CAP)
}

/// All policies in lexicographic order of their place choices, the last
/// transition varying fastest.
pub fn enumerate_policies_capped(net: &PetriNet, cap: u128) -> Result<Vec<PolicySystem>, PolicyError> {
    let count = policy_count(net);
    if count > cap {
        return Err(PolicyError::Explosion { count, cap });
    }
    let options: Vec<Vec<usize>> = (0..net.n_transitions()).map(|q| net.upstream(q)).collect();
    if options.iter().any(Vec::is_empty) {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; options.len()];
    loop {
        let choice = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        out.push(Policy { choice }.system(net));
        let mut k = options.len();
        loop {
            if k == 0 {
                return Ok(dedup(out));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn dedup(systems: Vec<PolicySystem>) -> Vec<PolicySystem> {
    let mut out: Vec<PolicySystem> = Vec::with_capacity(systems.len());
    for s in systems {
        if !out.iter().any(|o| o.selection == s.selection && o.c_minus == s.c_minus) {
            out.push(s);
        }
    }
    out
}

/// Nonnegative y with yᵀC = 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PInvariant {
    pub y: Vec<Rat>,
}

impl PInvariant {
    pub fn support(&self) -> Vec<usize> {
        self.y.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, _)| i).collect()
    }
}

pub fn p_invariants(net: &PetriNet) -> Result<Vec<PInvariant>, crate::linalg::LinalgError> {
    let ct = net.matrices().c.transpose();
    let cone = crate::cone::nonneg_solutions(&ct, None)?;
    Ok(cone.rays.into_iter().map(|y| PInvariant { y }).collect())
}
