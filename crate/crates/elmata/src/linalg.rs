//! Minimal dense matrices. Automata in this library have a handful of
//! states, so nothing here tries to be fast — it tries to be obviously
//! correct over exact scalars.

use crate::numerics::Scalar;

/// A row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Matrix {
            rows: n_rows,
            cols: n_cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}

/// m · v for a column vector v.
pub fn matvec<S: Scalar>(m: &Matrix<S>, v: &[S]) -> Vec<S> {
    assert_eq!(m.cols, v.len(), "dimension mismatch");
    (0..m.rows)
        .map(|r| {
            m.row(r)
                .iter()
                .zip(v)
                .fold(S::zero(), |acc, (a, b)| acc.add(&a.mul(b)))
        })
        .collect()
}

/// vᵀ · m for a row vector v.
pub fn vecmat<S: Scalar>(v: &[S], m: &Matrix<S>) -> Vec<S> {
    assert_eq!(m.rows, v.len(), "dimension mismatch");
    (0..m.cols)
        .map(|c| {
            (0..m.rows).fold(S::zero(), |acc, r| acc.add(&v[r].mul(m.get(r, c))))
        })
        .collect()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc.add(&x.mul(y)))
}

/// Σ |v_d|.
pub fn l1_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, x| acc.add(&x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rational;

    #[test]
    fn exact_matvec_and_vecmat() {
        let m = Matrix::from_rows(vec![
            vec![Rational::ratio(1, 2), Rational::zero()],
            vec![Rational::one(), Rational::ratio(1, 3)],
        ]);
        let v = vec![Rational::from_integer(2), Rational::from_integer(3)];
        assert_eq!(
            matvec(&m, &v),
            vec![Rational::one(), Rational::from_integer(3)]
        );
        assert_eq!(
            vecmat(&v, &m),
            vec![Rational::from_integer(4), Rational::one()]
        );
        assert_eq!(dot(&v, &v), Rational::from_integer(13));
    }
}
