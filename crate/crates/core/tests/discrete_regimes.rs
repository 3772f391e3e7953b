use fluidnet::bundled;
use fluidnet::continuous::{simulate, ContinuousState, SimOptions};
use fluidnet::discrete::{asymptotic_behavior, simulate_counters_with, time_grid, CounterOptions};
use fluidnet::net::PetriNet;
use fluidnet::rational::{parse_rat, ratio, Rat};
use fluidnet::stationary::flow_from_marking;

fn with_tau(net: PetriNet, id: &str, tau: &str) -> PetriNet {
    let p = net.place_index(id).unwrap();
    net.place_mut_copy(p, |place| place.tau = parse_rat(tau).unwrap())
}

/// With equal level-1 branch delays and a level-2 cycle of twice that delay,
/// bursts of urgent calls make the level-2 counters periodic at a slope the
/// stationary regime does not predict.
#[test]
fn bursty_call_center_settles_off_the_stationary_flow() {
    let base = bundled::load("callcenter");
    let m1 = base.place(0).m0.clone();
    let net = base.place_mut_copy(1, |p| p.m0 = &m1 * ratio(3, 5));
    let net = with_tau(with_tau(with_tau(net, "p4", "3"), "p9", "5.03"), "p10", "6.03");

    let traj = simulate(&net, &ContinuousState::from_net(&net), 500.0, &SimOptions::default()).unwrap();
    assert!(traj.converged);
    let rho = flow_from_marking(&net, traj.final_policy(), &net.initial_marking()).unwrap();

    let steps = 12_000;
    let grid = time_grid(&net).unwrap().with_steps(steps);
    let counters = simulate_counters_with(&net, &grid, &CounterOptions { record_from: steps / 2, stride: 1 }).unwrap();
    let asy = asymptotic_behavior(&counters, 1.0);
    let q5 = net.transition_index("q5").unwrap();
    let q6 = net.transition_index("q6").unwrap();
    assert_eq!(asy.period_z[q5], Some(ratio(151, 25)));
    assert_eq!(asy.period_z[q6], Some(ratio(151, 25)));
    let slope5: Rat = parse_rat("30063341865/3634394236").unwrap();
    assert_eq!(asy.exact_slope_z[q5], Some(slope5.clone()));
    assert!(slope5 < &rho[q5] * ratio(99, 100));
    assert!(asy.exact_slope_z[q6].clone().unwrap() > rho[q6]);
}
