#![allow(dead_code)]

use fluidnet::net::{strongly_connected, validate, NetBuilder, PetriNet};
use fluidnet::rational::{ratio, Rat};
use rand::seq::SliceRandom;
use rand::Rng;

const TAUS: [(i64, i64); 5] = [(1, 2), (1, 1), (3, 2), (2, 1), (3, 1)];

/// One attempt at a random net over `np` places and `nq` transitions laid on a
/// ring, with extra arcs, routed where a place has several outputs. Returns
/// `None` when the draw breaks a structural rule.
fn attempt<R: Rng>(rng: &mut R, np: usize, nq: usize) -> Option<PetriNet> {
    // pre[q][p] and post[q][p] weights.
    let mut pre = vec![vec![0u64; np]; nq];
    let mut post = vec![vec![0u64; np]; nq];
    let ring = np.max(nq);
    for i in 0..ring {
        let (p, q) = (i % np, i % nq);
        pre[q][p] = 1;
        let next = (i + 1) % np;
        if pre[q][next] == 0 {
            post[q][next] = 1;
        }
    }
    for _ in 0..rng.gen_range(0..=np) {
        let (p, q) = (rng.gen_range(0..np), rng.gen_range(0..nq));
        let w = if rng.gen_bool(0.2) { 2 } else { 1 };
        if rng.gen_bool(0.5) {
            if post[q][p] == 0 {
                pre[q][p] = w;
            }
        } else if pre[q][p] == 0 {
            post[q][p] = w;
        }
    }
    let pname = |p: usize| format!("p{}", p + 1);
    let qname = |q: usize| format!("q{}", q + 1);
    let mut b = NetBuilder::new("random");
    for p in 0..np {
        let (n, d) = *TAUS.choose(rng).unwrap();
        b = b.place(&pname(p), ratio(n, d), ratio(rng.gen_range(0..4), 1));
    }
    for q in 0..nq {
        b = b.transition(&qname(q));
    }
    for q in 0..nq {
        for p in 0..np {
            if pre[q][p] > 0 {
                b = b.arc(&pname(p), &qname(q), pre[q][p]);
            }
            if post[q][p] > 0 {
                b = b.arc(&qname(q), &pname(p), post[q][p]);
            }
        }
    }
    let mut has_priority_input = vec![false; nq];
    for p in 0..np {
        let outs: Vec<usize> = (0..nq).filter(|&q| pre[q][p] > 0).collect();
        if outs.len() < 2 {
            continue;
        }
        let free = outs.iter().all(|&q| (0..np).all(|r| r == p || pre[q][r] == 0));
        if free && (outs.len() > 2 || rng.gen_bool(0.5)) {
            let parts: Vec<i64> = outs.iter().map(|_| rng.gen_range(1..4)).collect();
            let total: i64 = parts.iter().sum();
            let names: Vec<String> = outs.iter().map(|&q| qname(q)).collect();
            let weights: Vec<(&str, Rat)> =
                names.iter().zip(&parts).map(|(n, &k)| (n.as_str(), ratio(k, total))).collect();
            b = b.conflict(&pname(p), &weights);
        } else if outs.len() == 2 && !has_priority_input[outs[0]] && !has_priority_input[outs[1]] {
            let (hi, lo) = if rng.gen_bool(0.5) { (outs[0], outs[1]) } else { (outs[1], outs[0]) };
            has_priority_input[hi] = true;
            has_priority_input[lo] = true;
            b = b.priority(&pname(p), &qname(hi), &qname(lo));
        } else {
            return None;
        }
    }
    let net = b.build().ok()?;
    (validate(&net).is_ok() && strongly_connected(&net)).then_some(net)
}

/// A valid, strongly connected net with at most `max_places` places.
pub fn random_net<R: Rng>(rng: &mut R, max_places: usize) -> PetriNet {
    loop {
        let np = rng.gen_range(2..=max_places);
        let nq = rng.gen_range(2..=max_places);
        if let Some(net) = attempt(rng, np, nq) {
            return net;
        }
    }
}
