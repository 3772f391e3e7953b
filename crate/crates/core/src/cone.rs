//! Extreme rays of `{x >= 0 : Mx = 0, Gx >= 0}` by the double description
//! method, starting from the nonnegative orthant.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::linalg::{LinalgError, RatMatrix};
use crate::rational::{to_primitive_integer, Rat};

pub const DEFAULT_RAY_CAP: usize = 100_000;

/// Generators of a pointed polyhedral cone, each scaled to coprime integers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeGenerators {
    pub rays: Vec<Vec<Rat>>,
}

impl ConeGenerators {
    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    /// Dimension of the linear span of the rays.
    pub fn dimension(&self) -> usize {
        match self.rays.first() {
            None => 0,
            Some(first) => RatMatrix::from_rows_with_cols(self.rays.clone(), first.len()).rank(),
        }
    }
}

#[derive(Clone)]
struct Ray {
    coords: Vec<BigInt>,
    zeros: Bits,
}

#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn contains(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == *b)
    }
}

pub fn nonneg_solutions(m: &RatMatrix, ineq: Option<&RatMatrix>) -> Result<ConeGenerators, LinalgError> {
    nonneg_solutions_capped(m, ineq, DEFAULT_RAY_CAP)
}

pub fn nonneg_solutions_capped(
    m: &RatMatrix,
    ineq: Option<&RatMatrix>,
    cap: usize,
) -> Result<ConeGenerators, LinalgError> {
    let n = m.cols();
    if let Some(g) = ineq {
        if g.cols() != n {
            return Err(LinalgError::Dimension(format!(
                "equality matrix has {n} columns, inequality matrix has {}",
                g.cols()
            )));
        }
    }
    let mut constraints: Vec<(Vec<BigInt>, bool)> = Vec::new();
    for i in 0..m.rows() {
        constraints.push((to_primitive_integer(m.row(i)), true));
    }
    if let Some(g) = ineq {
        for i in 0..g.rows() {
            constraints.push((to_primitive_integer(g.row(i)), false));
        }
    }
    let width = n + constraints.len();

    let mut rays: Vec<Ray> = (0..n)
        .map(|i| {
            let mut coords = vec![BigInt::zero(); n];
            coords[i] = BigInt::from(1);
            let mut zeros = Bits::new(width);
            for j in (0..n).filter(|&j| j != i) {
                zeros.set(j);
            }
            Ray { coords, zeros }
        })
        .collect();

    for (idx, (row, is_eq)) in constraints.iter().enumerate() {
        if row.iter().all(Zero::is_zero) {
            continue;
        }
        let bit = n + idx;
        let values: Vec<BigInt> = rays
            .iter()
            .map(|r| r.coords.iter().zip(row).fold(BigInt::zero(), |acc, (x, a)| acc + x * a))
            .collect();
        let mut next: Vec<Ray> = Vec::new();
        for (r, v) in rays.iter().zip(&values) {
            if v.is_zero() {
                let mut kept = r.clone();
                kept.zeros.set(bit);
                next.push(kept);
            } else if v.is_positive() && !is_eq {
                next.push(r.clone());
            }
        }
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| values[i].is_positive()).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| values[i].is_negative()).collect();
        for &p in &pos {
            for &q in &neg {
                let common = rays[p].zeros.and(&rays[q].zeros);
                let blocked = rays
                    .iter()
                    .enumerate()
                    .any(|(k, r)| k != p && k != q && r.zeros.contains(&common));
                if blocked {
                    continue;
                }
                let vp = &values[p];
                let vq = -&values[q];
                let coords: Vec<BigInt> =
                    rays[p].coords.iter().zip(&rays[q].coords).map(|(a, b)| a * &vq + b * vp).collect();
                let mut zeros = common;
                zeros.set(bit);
                next.push(Ray { coords: primitive(coords), zeros });
                if next.len() > cap {
                    return Err(LinalgError::RayCap { cap });
                }
            }
        }
        if next.len() > cap {
            return Err(LinalgError::RayCap { cap });
        }
        rays = next;
    }

    let mut out: Vec<Vec<BigInt>> = rays.into_iter().map(|r| r.coords).collect();
    out.sort();
    out.dedup();
    out.reverse();
    Ok(ConeGenerators {
        rays: out.into_iter().map(|r| r.into_iter().map(Rat::from_integer).collect()).collect(),
    })
}

fn primitive(v: Vec<BigInt>) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() || g == BigInt::from(1) {
        return v;
    }
    v.into_iter().map(|x| x / &g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn ints(r: &[Rat]) -> Vec<i64> {
        r.iter().map(|x| x.to_integer().try_into().unwrap()).collect()
    }

    #[test]
    fn equal_coordinates() {
        let g = nonneg_solutions(&RatMatrix::from_ints(&[&[1, -1]]), None).unwrap();
        assert_eq!(g.rays.iter().map(|r| ints(r)).collect::<Vec<_>>(), vec![vec![1, 1]]);
    }

    #[test]
    fn positive_sum_has_no_rays() {
        let g = nonneg_solutions(&RatMatrix::from_ints(&[&[1, 1]]), None).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn two_rays_in_three_dimensions() {
        let g = nonneg_solutions(&RatMatrix::from_ints(&[&[1, 1, -2]]), None).unwrap();
        let mut rays: Vec<Vec<i64>> = g.rays.iter().map(|r| ints(r)).collect();
        rays.sort();
        assert_eq!(rays, vec![vec![0, 2, 1], vec![2, 0, 1]]);
    }

    #[test]
    fn inequalities_cut_the_orthant() {
        // x1 - x2 >= 0 over the orthant of R^2: rays (1,0) and (1,1).
        let empty = RatMatrix::from_rows_with_cols(vec![], 2);
        let g = nonneg_solutions(&empty, Some(&RatMatrix::from_ints(&[&[1, -1]]))).unwrap();
        let mut rays: Vec<Vec<i64>> = g.rays.iter().map(|r| ints(r)).collect();
        rays.sort();
        assert_eq!(rays, vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(g.dimension(), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let err = nonneg_solutions_capped(&RatMatrix::from_ints(&[&[1, 1, -2]]), None, 1).unwrap_err();
        assert_eq!(err, LinalgError::RayCap { cap: 1 });
    }

    #[test]
    fn rays_are_primitive_integers() {
        let m = RatMatrix::from_rows(vec![vec![rat(2), rat(-4)]]);
        let g = nonneg_solutions(&m, None).unwrap();
        assert_eq!(ints(&g.rays[0]), vec![2, 1]);
    }
}
