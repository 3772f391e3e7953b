//! Fluid dynamics of place-timed nets.
//!
//! Between events the active policy and the zero-waiting set are frozen, so
//! the flows are linear in `m` and a fixed-step RK4 integrates the system
//! essentially exactly. Events are localized by bisection.

use std::collections::VecDeque;

use num_traits::Zero;

use crate::net::{PetriNet, TransitionKind};
use crate::policy::Policy;
use crate::rational::{to_f64, Rat};

const TIE_REL: f64 = 1e-12;
const ZENO_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousState {
    pub t: f64,
    pub m: Vec<f64>,
    pub w: Vec<f64>,
}

impl ContinuousState {
    /// m(0) = M⁰ and w(0) = the per-place override (zero by default).
    pub fn from_net(net: &PetriNet) -> Self {
        ContinuousState {
            t: 0.0,
            m: net.places().iter().map(|p| to_f64(&p.m0)).collect(),
            w: net.places().iter().map(|p| to_f64(&p.w0)).collect(),
        }
    }

    pub fn with_marking(m: Vec<f64>) -> Self {
        let w = vec![0.0; m.len()];
        ContinuousState { t: 0.0, m, w }
    }

    /// Total tokens M_p = m_p + w_p.
    pub fn tokens(&self) -> Vec<f64> {
        self.m.iter().zip(&self.w).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector {
    pub f: Vec<f64>,
    pub f_place: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: ContinuousState,
    pub flows: FlowVector,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Switch {
    pub t: f64,
    pub from: Policy,
    pub to: Policy,
    pub place: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Defaults to min τ / 20.
    pub dt: Option<f64>,
    pub eps_w: f64,
    pub eps_t: f64,
    /// Defaults to 10 · max τ.
    pub convergence_window: Option<f64>,
    pub convergence_tol: f64,
    pub stop_on_convergence: bool,
    /// Record a sample at most this often; every step when absent.
    pub sample_interval: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: None,
            eps_w: 1e-9,
            eps_t: 1e-9,
            convergence_window: None,
            convergence_tol: 1e-6,
            stop_on_convergence: true,
            sample_interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub switches: Vec<Switch>,
    pub converged: bool,
    pub converged_at: Option<f64>,
    /// Options with defaults resolved against the simulated net.
    pub opts: SimOptions,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid state: transition `{0}` has no upstream place without waiting tokens")]
    InvalidState(String),
    #[error("non-finite state at t = {0}")]
    NonfiniteState(f64),
    #[error("state has {got} places, net has {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("{0}")]
    BadOption(String),
    #[error("kernel shift vector is not in the kernel of C")]
    KernelViolation,
}

#[derive(Debug, Clone)]
enum Kind {
    Min,
    Conflict { place: usize, mu: f64 },
    Low { place: usize, high: usize, ratio: f64 },
}

/// Floating-point view of a net used in the integration loop.
#[derive(Debug, Clone)]
struct Model {
    tau: Vec<f64>,
    up: Vec<Vec<usize>>,
    /// `coef[q][p]` = 1 / (a⁻_qp τ_p).
    coef: Vec<Vec<f64>>,
    pre: Vec<Vec<(usize, f64)>>,
    post: Vec<Vec<(usize, f64)>>,
    kind: Vec<Kind>,
    order: Vec<usize>,
    names: Vec<String>,
}

impl Model {
    fn new(net: &PetriNet) -> Model {
        let np = net.n_places();
        let nq = net.n_transitions();
        let tau: Vec<f64> = net.places().iter().map(|p| to_f64(&p.tau)).collect();
        let mut coef = vec![vec![0.0; np]; nq];
        let mut pre = vec![Vec::new(); nq];
        let mut post = vec![Vec::new(); nq];
        let mut kind = Vec::with_capacity(nq);
        for q in 0..nq {
            for p in 0..np {
                let a = net.pre(q, p);
                if a > 0 {
                    coef[q][p] = 1.0 / (a as f64 * tau[p]);
                    pre[q].push((p, a as f64));
                }
                let b = net.post(q, p);
                if b > 0 {
                    post[q].push((p, b as f64));
                }
            }
            kind.push(match net.transition_kind(q) {
                TransitionKind::Conflict { place, weight } => Kind::Conflict { place, mu: to_f64(&weight) },
                TransitionKind::PriorityLow { place, high } => Kind::Low {
                    place,
                    high,
                    ratio: net.pre(high, place) as f64 / net.pre(q, place) as f64,
                },
                _ => Kind::Min,
            });
        }
        let mut order: Vec<usize> = (0..nq).filter(|&q| !matches!(kind[q], Kind::Low { .. })).collect();
        order.extend((0..nq).filter(|&q| matches!(kind[q], Kind::Low { .. })));
        Model {
            tau,
            up: (0..nq).map(|q| net.upstream(q)).collect(),
            coef,
            pre,
            post,
            kind,
            order,
            names: net.transitions().to_vec(),
        }
    }

    fn np(&self) -> usize {
        self.tau.len()
    }

    fn nq(&self) -> usize {
        self.kind.len()
    }

    /// Flows under a frozen policy: linear in m.
    fn mode_flows(&self, m: &[f64], choice: &[usize], f: &mut [f64]) {
        for &q in &self.order {
            let p = choice[q];
            f[q] = match self.kind[q] {
                Kind::Conflict { mu, .. } => mu * m[p] * self.coef[q][p],
                Kind::Low { place, high, ratio } if place == p => m[p] * self.coef[q][p] - ratio * f[high],
                _ => m[p] * self.coef[q][p],
            };
        }
    }

    /// Evaluates the minimum rules. A candidate within `tol` (relative) of
    /// the minimum counts as tied; ties go to `prefer` when it is among them,
    /// otherwise to the first place in declaration order.
    fn select(
        &self,
        m: &[f64],
        zero: &[bool],
        prefer: Option<&[usize]>,
        tol: f64,
        f: &mut [f64],
        choice: &mut [usize],
    ) -> Result<(), usize> {
        let mut cands: Vec<(usize, f64)> = Vec::with_capacity(4);
        for &q in &self.order {
            if let Kind::Conflict { place, mu } = self.kind[q] {
                f[q] = mu * m[place] * self.coef[q][place];
                choice[q] = place;
                continue;
            }
            cands.clear();
            for &r in &self.up[q] {
                if !zero[r] {
                    continue;
                }
                let v = match self.kind[q] {
                    Kind::Low { place, high, ratio } if place == r => {
                        (m[r] * self.coef[q][r] - ratio * f[high]).max(0.0)
                    }
                    _ => m[r] * self.coef[q][r],
                };
                cands.push((r, v));
            }
            let best = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if !best.is_finite() {
                return Err(q);
            }
            let bound = best + tol * best.abs().max(1.0);
            let preferred = prefer.and_then(|pr| cands.iter().find(|c| c.0 == pr[q] && c.1 <= bound));
            let (r, v) = *preferred.or_else(|| cands.iter().find(|c| c.1 <= bound)).unwrap();
            choice[q] = r;
            f[q] = v;
        }
        Ok(())
    }

    fn derivatives(&self, m: &[f64], f: &[f64], dm: &mut [f64], dw: &mut [f64]) {
        for p in 0..self.np() {
            let out = m[p] / self.tau[p];
            dm[p] = -out;
            dw[p] = out;
        }
        for q in 0..self.nq() {
            for &(p, b) in &self.post[q] {
                dm[p] += b * f[q];
            }
            for &(p, a) in &self.pre[q] {
                dw[p] -= a * f[q];
            }
        }
    }
}

fn zero_set(w: &[f64], eps_w: f64) -> Vec<bool> {
    w.iter().map(|&x| x <= eps_w).collect()
}

fn place_flows(model: &Model, m: &[f64]) -> Vec<f64> {
    m.iter().zip(&model.tau).map(|(a, t)| a / t).collect()
}

/// Flows at a state, with the bottleneck policy.
pub fn compute_flows(net: &PetriNet, state: &ContinuousState, eps_w: f64) -> Result<(FlowVector, Policy), SimError> {
    let model = Model::new(net);
    check_dims(&model, state)?;
    let zero = zero_set(&state.w, eps_w);
    let mut f = vec![0.0; model.nq()];
    let mut choice = vec![0; model.nq()];
    model
        .select(&state.m, &zero, None, TIE_REL, &mut f, &mut choice)
        .map_err(|q| SimError::InvalidState(model.names[q].clone()))?;
    Ok((FlowVector { f, f_place: place_flows(&model, &state.m) }, Policy { choice }))
}

fn check_dims(model: &Model, state: &ContinuousState) -> Result<(), SimError> {
    if state.m.len() != model.np() || state.w.len() != model.np() {
        return Err(SimError::Dimension { got: state.m.len().min(state.w.len()), expected: model.np() });
    }
    Ok(())
}

pub fn resolve_options(net: &PetriNet, opts: &SimOptions) -> SimOptions {
    let taus: Vec<f64> = net.places().iter().map(|p| to_f64(&p.tau)).collect();
    let min_tau = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_tau = taus.iter().cloned().fold(0.0, f64::max);
    SimOptions {
        dt: Some(opts.dt.unwrap_or(if min_tau.is_finite() { min_tau / 20.0 } else { 0.05 })),
        convergence_window: Some(opts.convergence_window.unwrap_or(10.0 * max_tau.max(f64::MIN_POSITIVE))),
        ..opts.clone()
    }
}

struct Stepper<'a> {
    model: &'a Model,
    f: Vec<f64>,
    k: [Vec<f64>; 8],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a Model) -> Self {
        let np = model.np();
        Stepper {
            model,
            f: vec![0.0; model.nq()],
            k: std::array::from_fn(|_| vec![0.0; np]),
            tmp: vec![0.0; np],
        }
    }

    /// One RK4 step of size h under a frozen policy.
    fn step(&mut self, m: &[f64], w: &[f64], choice: &[usize], h: f64, m_out: &mut [f64], w_out: &mut [f64]) {
        let n = m.len();
        let model = self.model;
        let [k1m, k1w, k2m, k2w, k3m, k3w, k4m, k4w] = &mut self.k;
        model.mode_flows(m, choice, &mut self.f);
        model.derivatives(m, &self.f, k1m, k1w);
        for i in 0..n {
            self.tmp[i] = m[i] + 0.5 * h * k1m[i];
        }
        model.mode_flows(&self.tmp, choice, &mut self.f);
        model.derivatives(&self.tmp, &self.f, k2m, k2w);
        for i in 0..n {
            self.tmp[i] = m[i] + 0.5 * h * k2m[i];
        }
        model.mode_flows(&self.tmp, choice, &mut self.f);
        model.derivatives(&self.tmp, &self.f, k3m, k3w);
        for i in 0..n {
            self.tmp[i] = m[i] + h * k3m[i];
        }
        model.mode_flows(&self.tmp, choice, &mut self.f);
        model.derivatives(&self.tmp, &self.f, k4m, k4w);
        for i in 0..n {
            m_out[i] = m[i] + h / 6.0 * (k1m[i] + 2.0 * k2m[i] + 2.0 * k3m[i] + k4m[i]);
            w_out[i] = w[i] + h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
    }
}

struct ConvergenceWatch {
    window: f64,
    tol: f64,
    cadence: f64,
    next: f64,
    start: f64,
    history: VecDeque<(f64, Vec<f64>)>,
}

impl ConvergenceWatch {
    fn new(start: f64, window: f64, tol: f64) -> Self {
        ConvergenceWatch { window, tol, cadence: window / 100.0, next: start, start, history: VecDeque::new() }
    }

    fn observe(&mut self, t: f64, f: &[f64]) -> bool {
        if t < self.next {
            return false;
        }
        self.next = t + self.cadence;
        while self.history.front().is_some_and(|(s, _)| *s < t - self.window) {
            self.history.pop_front();
        }
        self.history.push_back((t, f.to_vec()));
        if t - self.start < self.window || self.history.len() < 2 {
            return false;
        }
        let scale = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let change = self
            .history
            .iter()
            .map(|(_, g)| g.iter().zip(f).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())))
            .fold(0.0f64, f64::max);
        change <= self.tol * scale
    }
}

pub fn simulate(
    net: &PetriNet,
    initial: &ContinuousState,
    horizon: f64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(SimError::BadOption(format!("horizon must be positive, got {horizon}")));
    }
    let opts = resolve_options(net, opts);
    let dt = opts.dt.unwrap();
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::BadOption(format!("time step must be positive, got {dt}")));
    }
    let model = Model::new(net);
    check_dims(&model, initial)?;
    let np = model.np();
    let nq = model.nq();
    let eps_w = opts.eps_w;
    let invalid = |q: usize| SimError::InvalidState(model.names[q].clone());

    let mut t = initial.t;
    let end = initial.t + horizon;
    let mut m = initial.m.clone();
    let mut w = initial.w.clone();
    for x in w.iter_mut() {
        if *x < eps_w {
            *x = x.max(0.0);
        }
    }
    let mut zero = zero_set(&w, eps_w);
    let mut f = vec![0.0; nq];
    let mut choice = vec![0; nq];
    model.select(&m, &zero, None, TIE_REL, &mut f, &mut choice).map_err(invalid)?;

    let mut traj = Trajectory { samples: Vec::new(), switches: Vec::new(), converged: false, converged_at: None, opts };
    let push_sample = |traj: &mut Trajectory, t: f64, m: &[f64], w: &[f64], f: &[f64], choice: &[usize]| {
        traj.samples.push(Sample {
            state: ContinuousState { t, m: m.to_vec(), w: w.to_vec() },
            flows: FlowVector { f: f.to_vec(), f_place: place_flows(&model, m) },
            policy: Policy { choice: choice.to_vec() },
        });
    };
    push_sample(&mut traj, t, &m, &w, &f, &choice);
    let mut next_sample = t + traj.opts.sample_interval.unwrap_or(0.0);

    let mut watch = ConvergenceWatch::new(t, traj.opts.convergence_window.unwrap(), traj.opts.convergence_tol);
    let mut stepper = Stepper::new(&model);
    let mut m_new = vec![0.0; np];
    let mut w_new = vec![0.0; np];
    let mut f_probe = vec![0.0; nq];
    let mut c_probe = vec![0; nq];
    let mut tiny_events = 0usize;

    while end - t > 1e-12 * end.abs().max(1.0) {
        let h_full = dt.min(end - t);
        stepper.step(&m, &w, &choice, h_full, &mut m_new, &mut w_new);
        let mut is_event = |mm: &[f64], ww: &[f64]| {
            (0..np).any(|p| !zero[p] && ww[p] <= eps_w)
                || match model.select(mm, &zero, Some(&choice), TIE_REL, &mut f_probe, &mut c_probe) {
                    Ok(()) => c_probe != choice,
                    Err(_) => true,
                }
        };
        let mut h = h_full;
        let mut evented = false;
        if is_event(&m_new, &w_new) {
            evented = true;
            if tiny_events < ZENO_LIMIT {
                let (mut lo, mut hi) = (0.0, h_full);
                let mut mb = vec![0.0; np];
                let mut wb = vec![0.0; np];
                while hi - lo > traj.opts.eps_t {
                    let mid = 0.5 * (lo + hi);
                    stepper.step(&m, &w, &choice, mid, &mut mb, &mut wb);
                    if is_event(&mb, &wb) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                h = hi;
                if h < h_full {
                    stepper.step(&m, &w, &choice, h, &mut m_new, &mut w_new);
                }
                if h <= 2.0 * traj.opts.eps_t {
                    tiny_events += 1;
                } else {
                    tiny_events = 0;
                }
            } else {
                tiny_events = 0;
            }
        } else {
            tiny_events = 0;
        }

        t += h;
        std::mem::swap(&mut m, &mut m_new);
        std::mem::swap(&mut w, &mut w_new);
        if m.iter().chain(&w).any(|x| !x.is_finite()) {
            return Err(SimError::NonfiniteState(t));
        }
        let mut entered = None;
        for p in 0..np {
            if w[p] < 0.0 {
                w[p] = 0.0;
            }
            if !zero[p] && w[p] <= eps_w {
                w[p] = 0.0;
                entered.get_or_insert(p);
            }
            if m[p] < 0.0 {
                m[p] = 0.0;
            }
        }
        zero = zero_set(&w, eps_w);
        let tol = if evented { 0.0 } else { TIE_REL };
        let old = choice.clone();
        model.select(&m, &zero, Some(&old), tol, &mut f, &mut choice).map_err(invalid)?;
        if choice != old {
            let changed = (0..nq).find(|&q| choice[q] != old[q]).unwrap();
            traj.switches.push(Switch {
                t,
                from: Policy { choice: old },
                to: Policy { choice: choice.clone() },
                place: entered.unwrap_or(choice[changed]),
            });
        }

        if traj.opts.sample_interval.is_none() || t >= next_sample {
            push_sample(&mut traj, t, &m, &w, &f, &choice);
            if let Some(iv) = traj.opts.sample_interval {
                next_sample = t + iv;
            }
        }
        if !traj.converged && watch.observe(t, &f) {
            traj.converged = true;
            traj.converged_at = Some(t);
            if traj.opts.stop_on_convergence {
                break;
            }
        }
    }
    if traj.samples.last().map(|s| s.state.t) != Some(t) {
        push_sample(&mut traj, t, &m, &w, &f, &choice);
    }
    Ok(traj)
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].state.t
    }

    pub fn end_time(&self) -> f64 {
        self.last().state.t
    }

    /// Tail policy: the active policy at the last sample.
    pub fn final_policy(&self) -> &Policy {
        &self.last().policy
    }

    /// State at time `t`, re-integrated from the closest earlier sample.
    pub fn state_at(&self, net: &PetriNet, t: f64) -> Result<ContinuousState, SimError> {
        let idx = match self.samples.partition_point(|s| s.state.t <= t) {
            0 => 0,
            k => k - 1,
        };
        let base = &self.samples[idx].state;
        let gap = t - base.t;
        if gap <= 1e-12 * t.abs().max(1.0) {
            return Ok(base.clone());
        }
        let opts = SimOptions { stop_on_convergence: false, sample_interval: Some(f64::INFINITY), ..self.opts.clone() };
        let run = simulate(net, base, gap, &opts)?;
        let mut s = run.last().state.clone();
        s.t = t;
        Ok(s)
    }
}

/// Time-averaged flows over the trailing `tail_fraction` of the simulated span.
pub fn throughput_estimate(traj: &Trajectory, tail_fraction: f64) -> Vec<f64> {
    let samples = &traj.samples;
    let nq = samples[0].flows.f.len();
    let t0 = traj.start_time();
    let t1 = traj.end_time();
    if samples.len() == 1 || t1 <= t0 {
        return samples[0].flows.f.clone();
    }
    let frac = tail_fraction.clamp(f64::MIN_POSITIVE, 1.0);
    let from = t1 - frac * (t1 - t0);
    let mut acc = vec![0.0; nq];
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ta, tb) = (a.state.t, b.state.t);
        if tb <= from || tb <= ta {
            continue;
        }
        let lo = ta.max(from);
        let s = (lo - ta) / (tb - ta);
        for q in 0..nq {
            let fa = a.flows.f[q] + s * (b.flows.f[q] - a.flows.f[q]);
            acc[q] += 0.5 * (fa + b.flows.f[q]) * (tb - lo);
        }
    }
    acc.into_iter().map(|x| x / (t1 - from)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Homogeneity {
    ScaleMarking(f64),
    ScaleTime(Rat),
    KernelShift { x: Vec<Rat>, alpha: f64 },
}

/// Image of a trajectory under one of the homogeneity maps, together with
/// the net it solves (only time scaling changes the net).
pub fn homogeneity_transform(
    net: &PetriNet,
    traj: &Trajectory,
    kind: &Homogeneity,
) -> Result<(PetriNet, Trajectory), SimError> {
    let mut out = traj.clone();
    match kind {
        Homogeneity::ScaleMarking(alpha) => {
            positive(*alpha)?;
            for s in &mut out.samples {
                scale(&mut s.state.m, *alpha);
                scale(&mut s.state.w, *alpha);
                scale(&mut s.flows.f, *alpha);
                scale(&mut s.flows.f_place, *alpha);
            }
            Ok((net.clone(), out))
        }
        Homogeneity::ScaleTime(alpha) => {
            if alpha <= &Rat::zero() {
                return Err(SimError::BadOption("scaling factor must be positive".into()));
            }
            let a = to_f64(alpha);
            let places = net
                .places()
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p.tau = &p.tau * alpha;
                    p
                })
                .collect();
            for s in &mut out.samples {
                s.state.t *= a;
                scale(&mut s.flows.f, 1.0 / a);
                scale(&mut s.flows.f_place, 1.0 / a);
            }
            for sw in &mut out.switches {
                sw.t *= a;
            }
            out.converged_at = out.converged_at.map(|t| t * a);
            out.opts.dt = out.opts.dt.map(|d| d * a);
            out.opts.convergence_window = out.opts.convergence_window.map(|d| d * a);
            out.opts.sample_interval = out.opts.sample_interval.map(|d| d * a);
            Ok((net.with_places(places), out))
        }
        Homogeneity::KernelShift { x, alpha } => {
            positive(*alpha)?;
            let mats = net.matrices();
            if x.len() != net.n_transitions() || mats.c.mul_vec(x).iter().any(|v| !v.is_zero()) {
                return Err(SimError::KernelViolation);
            }
            let produced: Vec<f64> = mats.c_plus.mul_vec(x).iter().map(to_f64).collect();
            let xf: Vec<f64> = x.iter().map(to_f64).collect();
            for s in &mut out.samples {
                for p in 0..net.n_places() {
                    s.state.m[p] += alpha * to_f64(&net.place(p).tau) * produced[p];
                    s.flows.f_place[p] += alpha * produced[p];
                }
                for (fq, xq) in s.flows.f.iter_mut().zip(&xf) {
                    *fq += alpha * xq;
                }
            }
            Ok((net.clone(), out))
        }
    }
}

fn positive(alpha: f64) -> Result<(), SimError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(SimError::BadOption("scaling factor must be positive".into()))
    }
}

fn scale(v: &mut [f64], a: f64) {
    for x in v {
        *x *= a;
    }
}
