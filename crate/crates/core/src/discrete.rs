//! Counter dynamics on the δ-grid in exact rational arithmetic.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::net::{PetriNet, TransitionKind};
use crate::rational::{lcm_of_denominators, rat, rational_gcd, to_f64, Rat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    pub delta: Rat,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("net has no places")]
    Empty,
    #[error("holding time of `{0}` is not positive")]
    NonPositive(String),
    #[error("holding time of `{0}` is not a multiple of the grid step")]
    Incommensurable(String),
}

impl TimeGrid {
    pub fn with_steps(&self, steps: usize) -> TimeGrid {
        TimeGrid { delta: self.delta.clone(), steps }
    }

    /// Enough steps to reach `horizon` time units.
    pub fn with_horizon(&self, horizon: &Rat) -> TimeGrid {
        let n = (horizon / &self.delta).ceil().to_integer();
        self.with_steps(n.try_into().unwrap_or(usize::MAX))
    }

    pub fn time(&self, k: usize) -> Rat {
        &self.delta * rat(k as i64)
    }
}

/// Largest δ with every τ_p an integer multiple of δ.
pub fn time_grid(net: &PetriNet) -> Result<TimeGrid, GridError> {
    for p in net.places() {
        if !p.tau.is_positive() {
            return Err(GridError::NonPositive(p.id.clone()));
        }
    }
    let delta = rational_gcd(net.places().iter().map(|p| &p.tau)).ok_or(GridError::Empty)?;
    Ok(TimeGrid { delta, steps: 0 })
}

fn delays(net: &PetriNet, grid: &TimeGrid) -> Result<Vec<usize>, GridError> {
    net.places()
        .iter()
        .map(|p| {
            let d = &p.tau / &grid.delta;
            if d.is_integer() && d.is_positive() {
                Ok(d.to_integer().try_into().unwrap_or(usize::MAX))
            } else {
                Err(GridError::Incommensurable(p.id.clone()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterOptions {
    /// First grid index kept in the trajectory.
    pub record_from: usize,
    pub stride: usize,
}

impl Default for CounterOptions {
    fn default() -> Self {
        CounterOptions { record_from: 0, stride: 1 }
    }
}

/// Recorded counters at grid indices `first, first + stride, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterTrajectory {
    pub delta: Rat,
    pub first: usize,
    pub stride: usize,
    pub x: Vec<Vec<Rat>>,
    pub z: Vec<Vec<Rat>>,
}

impl CounterTrajectory {
    pub fn len(&self) -> usize {
        self.x.first().or(self.z.first()).map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize) -> usize {
        self.first + i * self.stride
    }

    pub fn time(&self, i: usize) -> Rat {
        &self.delta * rat(self.index(i) as i64)
    }
}

enum Rule {
    Min,
    Conflict { place: usize, factor: Fixed },
    High { place: usize, low: usize },
    Low { place: usize, high: usize },
}

/// `n / D^e` for a base D shared by every value of a run. All arc
/// weights, conflict factors and initial markings live in Z[1/D], so the
/// recurrence never needs a gcd; rationals are formed only when recording.
#[derive(Debug, Clone)]
struct Fixed {
    n: BigInt,
    e: usize,
}

struct Base {
    d: BigInt,
    powers: Vec<BigInt>,
    /// Prime factorization of D when it is small enough to factor.
    primes: Option<Vec<(u64, usize)>>,
}

impl Base {
    fn new(d: BigInt) -> Base {
        let primes = u64::try_from(&d).ok().map(factorize);
        Base { powers: vec![BigInt::one(), d.clone()], d, primes }
    }

    fn pow(&mut self, e: usize) -> &BigInt {
        while self.powers.len() <= e {
            let next = self.powers.last().unwrap() * &self.d;
            self.powers.push(next);
        }
        &self.powers[e]
    }

    fn from_rat(&mut self, r: &Rat) -> Fixed {
        let mut e = 0;
        loop {
            let scaled = r * Rat::from_integer(self.pow(e).clone());
            if scaled.is_integer() {
                return Fixed { n: scaled.to_integer(), e };
            }
            e += 1;
            assert!(e < 64, "value outside Z[1/D]");
        }
    }

    /// Reduces by stripping the primes of D instead of taking a gcd.
    fn to_rat(&mut self, x: &Fixed) -> Rat {
        let Some(primes) = &self.primes else {
            return Rat::new(x.n.clone(), self.pow(x.e).clone());
        };
        if x.n.is_zero() {
            return Rat::zero();
        }
        let mut n = x.n.clone();
        let mut removed = BigInt::one();
        for &(p, mult) in primes {
            let bp = BigInt::from(p);
            for _ in 0..mult * x.e {
                let (quot, rem) = n.div_rem(&bp);
                if !rem.is_zero() {
                    break;
                }
                n = quot;
                removed *= &bp;
            }
        }
        let den = self.pow(x.e) / removed;
        Rat::new_raw(n, den)
    }

    fn lift(&mut self, x: &Fixed, e: usize) -> BigInt {
        if x.e == e {
            x.n.clone()
        } else {
            &x.n * self.pow(e - x.e)
        }
    }

    fn add_assign(&mut self, acc: &mut Fixed, x: &Fixed) {
        if acc.e >= x.e {
            let v = self.lift(x, acc.e);
            acc.n += v;
        } else {
            acc.n = self.lift(acc, x.e) + &x.n;
            acc.e = x.e;
        }
    }

    fn sub(&mut self, a: &Fixed, b: &Fixed) -> Fixed {
        let e = a.e.max(b.e);
        Fixed { n: self.lift(a, e) - self.lift(b, e), e }
    }

    fn mul(&self, a: &Fixed, b: &Fixed) -> Fixed {
        Fixed { n: &a.n * &b.n, e: a.e + b.e }
    }

    fn less(&mut self, a: &Fixed, b: &Fixed) -> bool {
        match a.e.cmp(&b.e) {
            std::cmp::Ordering::Equal => a.n < b.n,
            std::cmp::Ordering::Less => self.lift(a, b.e) < b.n,
            std::cmp::Ordering::Greater => a.n < self.lift(b, a.e),
        }
    }

    fn min(&mut self, a: Fixed, b: Option<Fixed>) -> Fixed {
        match b {
            Some(b) if self.less(&b, &a) => b,
            _ => a,
        }
    }
}

fn factorize(mut n: u64) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut k = 0;
        while n % p == 0 {
            n /= p;
            k += 1;
        }
        if k > 0 {
            out.push((p, k));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn simulate_counters(net: &PetriNet, grid: &TimeGrid) -> Result<CounterTrajectory, GridError> {
    simulate_counters_with(net, grid, &CounterOptions::default())
}

pub fn simulate_counters_with(
    net: &PetriNet,
    grid: &TimeGrid,
    opts: &CounterOptions,
) -> Result<CounterTrajectory, GridError> {
    let d = delays(net, grid)?;
    let np = net.n_places();
    let nq = net.n_transitions();
    let stride = opts.stride.max(1);

    let m0_rat = net.initial_marking();
    let mut denominators: Vec<Rat> = m0_rat.clone();
    for q in 0..nq {
        for p in net.upstream(q) {
            denominators.push(Rat::new(BigInt::one(), BigInt::from(net.pre(q, p))));
        }
        if let TransitionKind::Conflict { weight, .. } = net.transition_kind(q) {
            denominators.push(weight);
        }
    }
    let mut base = Base::new(lcm_of_denominators(&denominators));
    let m0: Vec<Fixed> = m0_rat.iter().map(|r| base.from_rat(r)).collect();
    let inv = |base: &mut Base, a: u64| base.from_rat(&Rat::new(BigInt::one(), BigInt::from(a)));
    let int = |a: u64| Fixed { n: BigInt::from(a), e: 0 };

    let mut up: Vec<Vec<(usize, Fixed)>> = Vec::with_capacity(nq);
    for q in 0..nq {
        let row = net.upstream(q).into_iter().map(|p| (p, inv(&mut base, net.pre(q, p)))).collect();
        up.push(row);
    }
    let down: Vec<Vec<(usize, BigInt)>> = (0..nq)
        .map(|q| net.downstream(q).into_iter().map(|p| (p, BigInt::from(net.post(q, p)))).collect())
        .collect();
    let mut rules = Vec::with_capacity(nq);
    for q in 0..nq {
        rules.push(match net.transition_kind(q) {
            TransitionKind::Sync => Rule::Min,
            TransitionKind::Conflict { place, weight } => {
                let factor = base.from_rat(&(weight / rat(net.pre(q, place) as i64)));
                Rule::Conflict { place, factor }
            }
            TransitionKind::PriorityHigh { place, low } => Rule::High { place, low },
            TransitionKind::PriorityLow { place, high } => Rule::Low { place, high },
        });
    }
    let mut order: Vec<usize> = (0..nq).filter(|&q| !matches!(rules[q], Rule::Low { .. })).collect();
    order.extend((0..nq).filter(|&q| matches!(rules[q], Rule::Low { .. })));

    // history[k % depth] holds x(k); indices before 0 read the initial marking.
    let depth = d.iter().copied().max().unwrap_or(0) + 1;
    let mut history: Vec<Vec<Fixed>> = vec![m0.clone(); depth];
    let zero = Fixed { n: BigInt::zero(), e: 0 };
    let mut z_prev = vec![zero.clone(); nq];
    let mut z = vec![zero; nq];
    let mut out = CounterTrajectory {
        delta: grid.delta.clone(),
        first: opts.record_from,
        stride,
        x: vec![Vec::new(); np],
        z: vec![Vec::new(); nq],
    };

    for k in 0..=grid.steps {
        let past = |p: usize| -> &Fixed {
            if k >= d[p] {
                &history[(k - d[p]) % depth][p]
            } else {
                &m0[p]
            }
        };
        for &q in &order {
            let others = |base: &mut Base, skip: Option<usize>| -> Option<Fixed> {
                let mut best: Option<Fixed> = None;
                for (p, inv_a) in &up[q] {
                    if Some(*p) == skip {
                        continue;
                    }
                    let v = base.mul(past(*p), inv_a);
                    best = Some(match best {
                        Some(b) if !base.less(&v, &b) => b,
                        _ => v,
                    });
                }
                best
            };
            let value = match &rules[q] {
                Rule::Min => others(&mut base, None).expect("transition has an upstream place"),
                Rule::Conflict { place, factor } => base.mul(factor, past(*place)),
                Rule::High { place, low } => {
                    let taken = base.mul(&int(net.pre(*low, *place)), &z_prev[*low]);
                    let rest = base.sub(past(*place), &taken);
                    let scale = inv(&mut base, net.pre(q, *place));
                    let own = base.mul(&rest, &scale);
                    let alt = others(&mut base, Some(*place));
                    base.min(own, alt)
                }
                Rule::Low { place, high } => {
                    let taken = base.mul(&int(net.pre(*high, *place)), &z[*high]);
                    let rest = base.sub(past(*place), &taken);
                    let scale = inv(&mut base, net.pre(q, *place));
                    let own = base.mul(&rest, &scale);
                    let alt = others(&mut base, Some(*place));
                    base.min(own, alt)
                }
            };
            z[q] = value;
        }
        let slot = k % depth;
        let mut row = m0.clone();
        for q in 0..nq {
            for (p, b) in &down[q] {
                let term = Fixed { n: &z[q].n * b, e: z[q].e };
                base.add_assign(&mut row[*p], &term);
            }
        }
        history[slot] = row;
        if k >= opts.record_from && (k - opts.record_from) % stride == 0 {
            for p in 0..np {
                let v = base.to_rat(&history[slot][p]);
                out.x[p].push(v);
            }
            for q in 0..nq {
                let v = base.to_rat(&z[q]);
                out.z[q].push(v);
            }
        }
        std::mem::swap(&mut z_prev, &mut z);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Asymptotics {
    /// Least-squares slopes per time unit.
    pub slope_x: Vec<f64>,
    pub slope_z: Vec<f64>,
    /// All counters jointly have periodic tail increments.
    pub periodic: bool,
    /// Smallest joint period, in time units.
    pub period: Option<Rat>,
    pub period_x: Vec<Option<Rat>>,
    pub period_z: Vec<Option<Rat>>,
    /// Average slope over one period, exact, for counters with periodic increments.
    pub exact_slope_x: Vec<Option<Rat>>,
    pub exact_slope_z: Vec<Option<Rat>>,
}

pub fn asymptotic_behavior(traj: &CounterTrajectory, tail_fraction: f64) -> Asymptotics {
    let len = traj.len();
    let tail = ((len as f64) * tail_fraction.clamp(0.0, 1.0)).ceil() as usize;
    let tail = tail.clamp(len.min(2), len);
    let start = len - tail;
    let step_time = to_f64(&traj.delta) * traj.stride as f64;
    let step = &traj.delta * rat(traj.stride as i64);

    let series: Vec<&[Rat]> = traj.x.iter().chain(&traj.z).map(|s| &s[start..]).collect();
    let slopes: Vec<f64> = series.iter().map(|s| least_squares(s, step_time)).collect();

    // Candidate periods come from modular fingerprints of the increments and
    // are then confirmed exactly.
    let prints: Vec<Vec<(u64, u64)>> = series.iter().map(|s| increment_prints(s)).collect();
    let mut interner: HashMap<(u64, u64), u32> = HashMap::new();
    let mut intern = |key: (u64, u64)| {
        let next = interner.len() as u32;
        *interner.entry(key).or_insert(next)
    };
    let ids: Vec<Vec<u32>> = prints.iter().map(|seq| seq.iter().map(|&k| intern(k)).collect()).collect();
    let periods: Vec<Option<usize>> = series
        .iter()
        .zip(&ids)
        .map(|(s, seq)| smallest_period(seq).filter(|&p| exactly_periodic(s, p)))
        .collect();
    let mut joint_ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let joint: Vec<u32> = (0..tail.saturating_sub(1))
        .map(|i| {
            let key: Vec<u32> = ids.iter().map(|s| s[i]).collect();
            let next = joint_ids.len() as u32;
            *joint_ids.entry(key).or_insert(next)
        })
        .collect();
    let joint_period = if series.is_empty() || periods.iter().any(Option::is_none) {
        None
    } else {
        smallest_period(&joint).filter(|&p| series.iter().all(|s| exactly_periodic(s, p)))
    };

    let exact: Vec<Option<Rat>> = series
        .iter()
        .zip(&periods)
        .map(|(s, p)| p.map(|p| (&s[s.len() - 1] - &s[s.len() - 1 - p]) / (&step * rat(p as i64))))
        .collect();
    let to_time = |p: &Option<usize>| p.map(|p| &step * rat(p as i64));
    let np = traj.x.len();
    Asymptotics {
        slope_x: slopes[..np].to_vec(),
        slope_z: slopes[np..].to_vec(),
        periodic: joint_period.is_some(),
        period: to_time(&joint_period),
        period_x: periods[..np].iter().map(to_time).collect(),
        period_z: periods[np..].iter().map(to_time).collect(),
        exact_slope_x: exact[..np].to_vec(),
        exact_slope_z: exact[np..].to_vec(),
    }
}

const PRIMES: (u64, u64) = ((1 << 61) - 1, 4_294_967_291);

fn residue(r: &Rat, m: u64) -> u64 {
    let bm = BigInt::from(m);
    let n = r.numer().mod_floor(&bm);
    let d = r.denom().mod_floor(&bm);
    let (n, d) = (u64::try_from(n).unwrap(), u64::try_from(d).unwrap());
    mul_mod(n, pow_mod(d, m - 2, m), m)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

fn increment_prints(s: &[Rat]) -> Vec<(u64, u64)> {
    let (p1, p2) = PRIMES;
    let r: Vec<(u64, u64)> = s.iter().map(|v| (residue(v, p1), residue(v, p2))).collect();
    r.windows(2).map(|w| ((w[1].0 + p1 - w[0].0) % p1, (w[1].1 + p2 - w[0].1) % p2)).collect()
}

/// s[i+1] − s[i] = s[i+P+1] − s[i+P] for every i, checked as
/// s[i+1] + s[i+P] = s[i] + s[i+P+1] over a common denominator.
fn exactly_periodic(s: &[Rat], p: usize) -> bool {
    let sum = |a: &Rat, b: &Rat| (a.numer() * b.denom() + b.numer() * a.denom(), a.denom() * b.denom());
    (0..s.len().saturating_sub(p + 1)).all(|i| {
        let (ln, ld) = sum(&s[i + 1], &s[i + p]);
        let (rn, rd) = sum(&s[i], &s[i + p + 1]);
        ln * rd == rn * ld
    })
}

fn least_squares(values: &[Rat], step: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let base = to_f64(&values[0]);
    let ys: Vec<f64> = values.iter().map(|v| to_f64(v) - base).collect();
    let mean_i = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (y - mean_y);
        den += di * di;
    }
    num / den / step
}

/// Smallest P ≤ len/2 with s[i] = s[i + P] throughout, via the prefix function.
fn smallest_period(s: &[u32]) -> Option<usize> {
    let n = s.len();
    if n < 2 {
        return None;
    }
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut j = pi[i - 1];
        while j > 0 && s[i] != s[j] {
            j = pi[j - 1];
        }
        if s[i] == s[j] {
            j += 1;
        }
        pi[i] = j;
    }
    let p = n - pi[n - 1];
    (p <= n / 2).then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetBuilder;
    use crate::rational::{parse_rat, ratio};

    fn grid_of(taus: &[&str]) -> Rat {
        let mut b = NetBuilder::new("g");
        for (i, t) in taus.iter().enumerate() {
            b = b.place(&format!("p{i}"), parse_rat(t).unwrap(), rat(0));
        }
        time_grid(&b.build().unwrap()).unwrap().delta
    }

    #[test]
    fn grid_steps() {
        assert_eq!(grid_of(&["1", "2"]), rat(1));
        assert_eq!(grid_of(&["2/3", "1/2"]), ratio(1, 6));
        assert_eq!(grid_of(&["0.01", "0.01", "0.01", "4", "3", "3", "1", "0.01", "6", "7"]), ratio(1, 100));
    }

    #[test]
    fn single_loop_unrolls() {
        // A self-loop fails validation but the recurrence is still defined.
        let net = NetBuilder::new("loop")
            .place("p", rat(1), rat(1))
            .transition("q")
            .arc("p", "q", 1)
            .arc("q", "p", 1)
            .build()
            .unwrap();
        let grid = time_grid(&net).unwrap().with_steps(5);
        let traj = simulate_counters(&net, &grid).unwrap();
        for k in 0..=5i64 {
            assert_eq!(traj.z[0][k as usize], rat(k + 1));
            assert_eq!(traj.x[0][k as usize], rat(k + 2));
        }
        let a = asymptotic_behavior(&traj, 1.0);
        assert!((a.slope_z[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conflict_slopes() {
        let net = NetBuilder::new("c")
            .place("p", rat(1), rat(1))
            .place("a", rat(1), rat(0))
            .place("b", rat(1), rat(0))
            .transition("x")
            .transition("y")
            .transition("ra")
            .transition("rb")
            .arc("p", "x", 1)
            .arc("p", "y", 1)
            .arc("x", "a", 1)
            .arc("y", "b", 1)
            .arc("a", "ra", 1)
            .arc("b", "rb", 1)
            .arc("ra", "p", 1)
            .arc("rb", "p", 1)
            .conflict("p", &[("x", ratio(1, 3)), ("y", ratio(2, 3))])
            .build()
            .unwrap();
        let grid = time_grid(&net).unwrap().with_steps(40);
        let traj = simulate_counters(&net, &grid).unwrap();
        assert_eq!(traj.z[0][0], ratio(1, 3));
        let a = asymptotic_behavior(&traj, 0.5);
        assert!((a.slope_z[0] - 1.0 / 6.0).abs() < 1e-9, "{:?}", a.slope_z);
        assert!((a.slope_z[1] - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(a.exact_slope_z[0], Some(ratio(1, 6)));
    }

    fn synthetic(z: Vec<Rat>) -> CounterTrajectory {
        CounterTrajectory { delta: rat(1), first: 0, stride: 1, x: vec![], z: vec![z] }
    }

    #[test]
    fn constant_increments() {
        let a = asymptotic_behavior(&synthetic((0..20).map(|k| rat(k + 1)).collect()), 1.0);
        assert!((a.slope_z[0] - 1.0).abs() < 1e-12);
        assert!(a.periodic);
        assert_eq!(a.period, Some(rat(1)));
    }

    #[test]
    fn alternating_increments() {
        let z: Vec<Rat> = (0..21).map(|k| rat(2 * ((k + 1) / 2))).collect();
        let a = asymptotic_behavior(&synthetic(z), 1.0);
        assert!((a.slope_z[0] - 1.0).abs() < 0.06);
        assert_eq!(a.period, Some(rat(2)));
        assert_eq!(a.exact_slope_z[0], Some(rat(1)));
    }

    #[test]
    fn aperiodic_tail() {
        let z: Vec<Rat> = (0..20).map(|k| rat(k * k)).collect();
        let a = asymptotic_behavior(&synthetic(z), 1.0);
        assert!(!a.periodic);
        assert_eq!(a.period_z[0], None);
    }
}
