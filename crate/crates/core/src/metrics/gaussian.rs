use super::linalg::{reconstruct, symmetric_eigen, Matrix};
use super::MetricsError;

/// Mean and covariance of a feature cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and unbiased covariance of `rows` (n × d), symmetrized.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<GaussianStats, MetricsError> {
    let n = rows.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(MetricsError::Shape("feature rows must share a positive dimension".into()));
    }
    let mut mu = vec![0.0; d];
    for r in rows {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut sigma = Matrix::zeros(d);
    let mut centred = vec![0.0; d];
    for r in rows {
        for ((c, v), m) in centred.iter_mut().zip(r).zip(&mu) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            for j in 0..=i {
                sigma.a[i * d + j] += ci * centred[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = sigma.a[i * d + j] / denom;
            sigma.a[i * d + j] = v;
            sigma.a[j * d + i] = v;
        }
    }
    if d > n {
        log::warn!("covariance from {n} samples in {d} dimensions is rank deficient; eigenvalues will be clamped");
    }
    Ok(GaussianStats { mu, sigma, n })
}

/// Allowed asymmetry and negative-eigenvalue magnitude, relative to the
/// matrix scale (never below an absolute 1e-6).
const PSD_TOL: f64 = 1e-6;

/// Symmetric PSD square root through an eigen-decomposition, with tiny
/// negative eigenvalues clamped to zero.
pub fn matrix_sqrt_psd(m: &Matrix) -> Result<Matrix, MetricsError> {
    let (vals, vecs) = psd_eigen(m)?;
    Ok(reconstruct(&vals, &vecs, f64::sqrt))
}

fn psd_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix), MetricsError> {
    let tol = PSD_TOL * m.max_abs().max(1.0);
    let asym = m.max_asymmetry();
    if asym > tol {
        return Err(MetricsError::NotSymmetric(asym));
    }
    let (mut vals, vecs) = symmetric_eigen(m);
    // Eigenvalues under the numerical-rank floor are rounding noise; their
    // square roots would add up to a visible bias on rank-deficient input.
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v));
    let floor = m.d as f64 * f64::EPSILON * top;
    for v in &mut vals {
        if *v < -tol {
            return Err(MetricsError::NotPsd(*v));
        }
        if *v <= floor {
            *v = 0.0;
        }
    }
    Ok((vals, vecs))
}

/// Fréchet distance between two Gaussians:
/// `‖μx − μg‖² + tr Σx + tr Σg − 2 tr (Σx^½ Σg Σx^½)^½`.
///
/// The cross term uses the symmetric sandwich so every intermediate stays
/// real and PSD; its trace equals that of `(Σx Σg)^½`.
pub fn fid(x: &GaussianStats, g: &GaussianStats) -> Result<f64, MetricsError> {
    if x.dim() != g.dim() || x.sigma.d != x.dim() || g.sigma.d != g.dim() {
        return Err(MetricsError::Shape(format!(
            "FID between {}-d and {}-d statistics",
            x.dim(),
            g.dim()
        )));
    }
    let mean_term: f64 = x.mu.iter().zip(&g.mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let sx = matrix_sqrt_psd(&x.sigma)?;
    let sandwich = sx.matmul(&g.sigma).matmul(&sx).symmetrized();
    let (vals, _) = psd_eigen(&sandwich)?;
    let cross: f64 = vals.iter().map(|v| v.sqrt()).sum();
    let total = mean_term + x.sigma.trace() + g.sigma.trace() - 2.0 * cross;
    let slack = 1e-8 * (x.sigma.trace() + g.sigma.trace()).max(1.0);
    Ok(if total < 0.0 && total >= -slack { 0.0 } else { total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu: Vec<f64>, sigma: Matrix) -> GaussianStats {
        GaussianStats { mu, sigma, n: 10 }
    }

    #[test]
    fn two_point_fit() {
        let s = fit_gaussian(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(s.mu, vec![1.0, 0.0]);
        assert_eq!(s.sigma, Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]));
        assert!(fit_gaussian(&[vec![1.0]]).is_err());
        let same = fit_gaussian(&vec![vec![1.0, 2.0]; 4]).unwrap();
        assert!(same.sigma.a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = matrix_sqrt_psd(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(s.sub(&Matrix::from_diag(&[2.0, 3.0])).max_abs() < 1e-12);
        assert_eq!(matrix_sqrt_psd(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(matrix_sqrt_psd(&asym), Err(MetricsError::NotSymmetric(_))));
        let neg = Matrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(matrix_sqrt_psd(&neg), Err(MetricsError::NotPsd(_))));
    }

    #[test]
    fn closed_form_cases() {
        let a = stats(vec![0.0], Matrix::from_diag(&[1.0]));
        let b = stats(vec![3.0], Matrix::from_diag(&[4.0]));
        assert!((fid(&a, &b).unwrap() - 10.0).abs() < 1e-12);
        assert!(fid(&a, &a).unwrap().abs() < 1e-12);
        let d = 5;
        let x = stats(vec![0.5; d], Matrix::identity(d));
        let g = stats(vec![0.5; d], Matrix::from_diag(&vec![4.0; d]));
        assert!((fid(&x, &g).unwrap() - d as f64).abs() < 1e-12);
        let short = stats(vec![0.0; 2], Matrix::identity(2));
        assert!(fid(&x, &short).is_err());
    }
}
