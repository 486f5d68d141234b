use crate::scalar::Scalar;

/// Cholesky factor of a symmetric positive semi-definite matrix in which
/// columns that are (numerically) linear combinations of earlier ones are
/// marked aliased and dropped from the factor.
pub(crate) struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
    pub aliased: Vec<bool>,
}

impl<T: Scalar> Cholesky<T> {
    /// `a` is row-major `n x n`. A pivot below `tol * max(diag)` is aliased.
    pub fn factor(a: &[T], n: usize, tol: T) -> Self {
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max);
        let floor = tol * max_diag;
        let mut lower = vec![T::zero(); n * n];
        let mut aliased = vec![false; n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= lower[j * n + k] * lower[j * n + k];
            }
            if max_diag == T::zero() || d <= floor {
                aliased[j] = true;
                continue;
            }
            let root = d.sqrt();
            lower[j * n + j] = root;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / root;
            }
        }
        Cholesky { n, lower, aliased }
    }

    pub fn rank(&self) -> usize {
        self.aliased.iter().filter(|a| !**a).count()
    }

    /// Solves the reduced system; aliased components of the solution are zero.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            if self.aliased[i] {
                continue;
            }
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            if self.aliased[i] {
                continue;
            }
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// Diagonal of the (reduced) inverse; aliased entries are NaN.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|j| {
                if self.aliased[j] {
                    return T::nan();
                }
                let mut e = vec![T::zero(); self.n];
                e[j] = T::one();
                self.solve(&e)[j]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let c = Cholesky::factor(&a, 2, 1e-12);
        let x = c.solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0f64).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0f64).abs() < 1e-14);
        let inv = c.inverse_diagonal();
        assert!((inv[0] - 3.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_is_aliased() {
        // [[1,1,0],[1,1,0],[0,0,2]]
        let a = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let c = Cholesky::factor(&a, 3, 1e-9);
        assert_eq!(c.aliased, [false, true, false]);
        assert_eq!(c.rank(), 2);
        let x = c.solve(&[1.0, 1.0, 4.0]);
        assert!((x[0] - 1.0f64).abs() < 1e-14 && x[1] == 0.0 && (x[2] - 2.0f64).abs() < 1e-14);
    }
}
