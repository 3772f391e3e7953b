//! Exact linear algebra over the rationals.
//!
//! Everything here works on small dense matrices. Elimination always picks
//! the first nonzero entry of a column as pivot so results do not depend on
//! magnitudes and are reproducible bit for bit.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_traits::{One, Zero};

use crate::rational::{format_exact, rat, Rat};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular")]
    Singular,
    #[error("cone enumeration exceeded {cap} intermediate rays")]
    RayCap { cap: usize },
}

#[derive(Clone, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix { rows, cols, data: vec![Rat::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rat::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        RatMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    /// Builds a matrix with an explicit shape, useful when `rows` is empty.
    pub fn from_rows_with_cols(rows: Vec<Vec<Rat>>, cols: usize) -> Self {
        assert!(rows.iter().all(|row| row.len() == cols), "ragged matrix");
        RatMatrix { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_ints(rows: &[&[i64]]) -> Self {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&v| rat(v)).collect()).collect())
    }

    pub fn diagonal(values: &[Rat]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[Rat] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Rat> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<Rat>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .fold(Rat::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn sub(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (RatMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m[(i, c)].is_zero()) else {
                continue;
            };
            m.swap_rows(r, p);
            let inv = m[(r, c)].recip();
            for j in c..m.cols {
                let v = &m[(r, j)] * &inv;
                m[(r, j)] = v;
            }
            for i in 0..m.rows {
                if i == r || m[(i, c)].is_zero() {
                    continue;
                }
                let factor = m[(i, c)].clone();
                for j in c..m.cols {
                    if m[(r, j)].is_zero() {
                        continue;
                    }
                    let v = &m[(r, j)] * &factor;
                    m[(i, j)] -= v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn inverse(&self) -> Result<RatMatrix, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut aug = Self::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, n + i)] = Rat::one();
        }
        let (red, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return Err(LinalgError::Singular);
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = red[(i, n + j)].clone();
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for RatMatrix {
    type Output = Rat;
    fn index(&self, (i, j): (usize, usize)) -> &Rat {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RatMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rat {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            let cells: Vec<String> = self.row(i).iter().map(format_exact).collect();
            write!(f, "[{}]", cells.join(", "))?;
        }
        write!(f, "]")
    }
}

/// Basis of `{x : Mx = 0}`, one vector per free column of the echelon form.
pub fn kernel_basis(m: &RatMatrix) -> Vec<Vec<Rat>> {
    let (red, pivots) = m.rref();
    let free: Vec<usize> = (0..m.cols()).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rat::zero(); m.cols()];
            v[f] = Rat::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -red[(row, f)].clone();
            }
            v
        })
        .collect()
}

/// Some solution of `Mx = b`, with every free variable set to zero.
pub fn solve(m: &RatMatrix, b: &[Rat]) -> Result<Option<Vec<Rat>>, LinalgError> {
    if b.len() != m.rows() {
        return Err(LinalgError::Dimension(format!("rhs has {} entries, matrix has {} rows", b.len(), m.rows())));
    }
    let n = m.cols();
    let mut aug = RatMatrix::zeros(m.rows(), n + 1);
    for i in 0..m.rows() {
        for j in 0..n {
            aug[(i, j)] = m[(i, j)].clone();
        }
        aug[(i, n)] = b[i].clone();
    }
    let (red, pivots) = aug.rref();
    if pivots.last() == Some(&n) {
        return Ok(None);
    }
    let mut x = vec![Rat::zero(); n];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = red[(row, n)].clone();
    }
    Ok(Some(x))
}

/// Result of splitting `R^n = ker B ⊕ range B`.
#[derive(Debug, Clone)]
pub struct SpectralProjection {
    pub semisimple: bool,
    /// Projector onto `ker B` along `range B`, present when `semisimple`.
    pub projector: Option<RatMatrix>,
}

/// Decides whether 0 is a semi-simple eigenvalue of `B` (tested as
/// `rank B² = rank B`) and, when it is, returns the projector onto the
/// kernel along the range.
pub fn spectral_projection_at_zero(b: &RatMatrix) -> Result<SpectralProjection, LinalgError> {
    if !b.is_square() {
        return Err(LinalgError::NotSquare { rows: b.rows(), cols: b.cols() });
    }
    let n = b.rows();
    let (_, pivots) = b.rref();
    let rank = pivots.len();
    if b.mul(b).rank() != rank {
        return Ok(SpectralProjection { semisimple: false, projector: None });
    }
    let kernel = kernel_basis(b);
    debug_assert_eq!(kernel.len() + rank, n);
    // Columns of V: kernel basis first, then a basis of the range.
    let mut basis: Vec<Vec<Rat>> = kernel.clone();
    basis.extend(pivots.iter().map(|&c| b.column(c)));
    let v = RatMatrix::from_rows_with_cols(basis, n).transpose();
    let v_inv = v.inverse().map_err(|_| LinalgError::Singular)?;
    let mut keep = vec![Rat::zero(); n];
    for k in keep.iter_mut().take(kernel.len()) {
        *k = Rat::one();
    }
    let q = v.mul(&RatMatrix::diagonal(&keep)).mul(&v_inv);
    Ok(SpectralProjection { semisimple: true, projector: Some(q) })
}

pub fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).fold(Rat::zero(), |acc, (x, y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn v(xs: &[i64]) -> Vec<Rat> {
        xs.iter().map(|&x| rat(x)).collect()
    }

    #[test]
    fn kernel_of_identity_is_trivial() {
        assert!(kernel_basis(&RatMatrix::identity(2)).is_empty());
    }

    #[test]
    fn kernel_of_difference_row() {
        let k = kernel_basis(&RatMatrix::from_ints(&[&[1, -1]]));
        assert_eq!(k, vec![v(&[1, 1])]);
    }

    #[test]
    fn kernel_of_cycle_policy_matrix() {
        let k = kernel_basis(&RatMatrix::from_ints(&[&[-1, 1], &[1, -1]]));
        assert_eq!(k, vec![v(&[1, 1])]);
    }

    #[test]
    fn solve_examples() {
        let x = solve(&RatMatrix::identity(2), &v(&[3, 4])).unwrap();
        assert_eq!(x, Some(v(&[3, 4])));
        let x = solve(&RatMatrix::from_ints(&[&[1, 1]]), &v(&[2])).unwrap();
        assert_eq!(x, Some(v(&[2, 0])));
        let x = solve(&RatMatrix::from_ints(&[&[1], &[1]]), &v(&[1, 2])).unwrap();
        assert_eq!(x, None);
    }

    #[test]
    fn projection_of_zero_matrix_is_identity() {
        let p = spectral_projection_at_zero(&RatMatrix::zeros(2, 2)).unwrap();
        assert!(p.semisimple);
        assert_eq!(p.projector.unwrap(), RatMatrix::identity(2));
    }

    #[test]
    fn jordan_block_is_not_semisimple() {
        let p = spectral_projection_at_zero(&RatMatrix::from_ints(&[&[0, 1], &[0, 0]])).unwrap();
        assert!(!p.semisimple);
        assert!(p.projector.is_none());
    }

    #[test]
    fn diagonal_projection() {
        let p = spectral_projection_at_zero(&RatMatrix::from_ints(&[&[0, 0], &[0, -1]])).unwrap();
        assert!(p.semisimple);
        assert_eq!(p.projector.unwrap(), RatMatrix::from_ints(&[&[1, 0], &[0, 0]]));
    }

    #[test]
    fn projection_for_cycle_policy() {
        let b = RatMatrix::from_rows(vec![vec![rat(-1), ratio(1, 2)], vec![rat(1), ratio(-1, 2)]]);
        let p = spectral_projection_at_zero(&b).unwrap().projector.unwrap();
        assert_eq!(p.mul_vec(&v(&[2, 0])), vec![ratio(2, 3), ratio(4, 3)]);
        assert_eq!(p.mul(&p), p);
        assert!(p.mul(&b).is_zero());
    }

    #[test]
    fn non_square_is_rejected() {
        let err = spectral_projection_at_zero(&RatMatrix::zeros(2, 3)).unwrap_err();
        assert_eq!(err, LinalgError::NotSquare { rows: 2, cols: 3 });
    }

    #[test]
    fn inverse_roundtrip() {
        let m = RatMatrix::from_ints(&[&[2, 1], &[1, 1]]);
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), RatMatrix::identity(2));
        assert_eq!(RatMatrix::from_ints(&[&[1, 1], &[1, 1]]).inverse().unwrap_err(), LinalgError::Singular);
    }
}
