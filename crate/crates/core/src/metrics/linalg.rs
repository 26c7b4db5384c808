//! Small dense symmetric linear algebra in 64-bit, enough for covariance
//! matrices of a few hundred dimensions.

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub d: usize,
    pub a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(d: usize) -> Self {
        Self { d, a: vec![0.0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.a[i * diag.len() + i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.len();
        assert!(rows.iter().all(|r| r.len() == d), "matrix must be square");
        Self {
            d,
            a: rows.concat(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn transpose(&self) -> Self {
        let d = self.d;
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                t.a[j * d + i] = self.a[i * d + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let v = self.a[i * d + k];
                if v == 0.0 {
                    continue;
                }
                let row = &other.a[k * d..(k + 1) * d];
                for (o, r) in out.a[i * d..(i + 1) * d].iter_mut().zip(row) {
                    *o += v * r;
                }
            }
        }
        out
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let d = self.d;
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (self.a[i * d + j] + self.a[j * d + i]);
                out.a[i * d + j] = v;
                out.a[j * d + i] = v;
            }
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                worst = worst.max((self.a[i * d + j] - self.a[j * d + i]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            d: self.d,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
        }
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and a matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let d = m.d;
    let mut a = m.symmetrized().a;
    let mut v = Matrix::identity(d).a;
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; d], Matrix::identity(d));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let (app, aqq) = (a[p * d + p], a[q * d + q]);
                // stable rotation angle
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k * d + p], a[k * d + q]);
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p * d + k], a[q * d + k]);
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..d).map(|i| a[i * d + i]).collect();
    (vals, Matrix { d, a: v })
}

/// `V diag(f(λ)) Vᵀ`.
pub fn reconstruct(vals: &[f64], vecs: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let d = vecs.d;
    let fv: Vec<f64> = vals.iter().map(|&l| f(l)).collect();
    let mut out = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..d).map(|k| vecs.a[i * d + k] * fv[k] * vecs.a[j * d + k]).sum();
            out.a[i * d + j] = s;
            out.a[j * d + i] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_two_by_two() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (mut vals, vecs) = symmetric_eigen(&m);
        let back = reconstruct(&vals, &vecs, |l| l);
        assert!(back.sub(&m).max_abs() < 1e-14);
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64 + if i == j { 4.0 } else { 0.0 }).collect())
            .collect();
        let m = Matrix::from_rows(&rows).symmetrized();
        let (_, v) = symmetric_eigen(&m);
        let vtv = v.transpose().matmul(&v);
        assert!(vtv.sub(&Matrix::identity(6)).max_abs() < 1e-12);
    }
}
