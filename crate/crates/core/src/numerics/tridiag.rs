//! Lowest eigenpairs of a symmetric tridiagonal pencil `A v = λ W v` with a
//! positive diagonal weight `W`, by Sturm-sequence bisection and inverse
//! iteration.

use super::NumericsError;

/// `A` symmetric tridiagonal (`diag`, `offdiag`), `W = diag(weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Normalized to unit max-norm, with the largest-magnitude entry positive.
    pub vector: Vec<f64>,
}

const MAX_INVERSE_ITERATIONS: usize = 8;

impl TridiagonalSystem {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>, weight: Vec<f64>) -> Result<Self, NumericsError> {
        let sys = Self { diag, offdiag, weight };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<(), NumericsError> {
        let n = self.diag.len();
        if n == 0 || self.offdiag.len() + 1 != n || self.weight.len() != n {
            return Err(NumericsError::InvalidConfig(format!(
                "tridiagonal shape mismatch: diag {n}, offdiag {}, weight {}",
                self.offdiag.len(),
                self.weight.len()
            )));
        }
        if self.weight.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(NumericsError::InvalidConfig("weights must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    /// Infinity norm of `A`.
    pub fn norm_inf(&self) -> f64 {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.offdiag[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.offdiag[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// `‖A v − λ W v‖∞`.
    pub fn residual(&self, value: f64, v: &[f64]) -> f64 {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut av = self.diag[i] * v[i];
                if i > 0 {
                    av += self.offdiag[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    av += self.offdiag[i] * v[i + 1];
                }
                (av - value * self.weight[i] * v[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn symmetrized(&self) -> (Vec<f64>, Vec<f64>) {
        let s: Vec<f64> = self.weight.iter().map(|w| w.sqrt().recip()).collect();
        let d = self.diag.iter().zip(&s).map(|(d, si)| d * si * si).collect();
        let e = self.offdiag.iter().enumerate().map(|(i, e)| e * s[i] * s[i + 1]).collect();
        (d, e)
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` strictly below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q.abs() < tiny { tiny.copysign(q) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += e[i - 1].abs();
        }
        if i + 1 < n {
            r += e[i].abs();
        }
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let pad = 1e-12 * (hi - lo).abs().max(1.0);
    (lo - pad, hi + pad)
}

/// `j`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
fn bisect_eigenvalue(d: &[f64], e: &[f64], j: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solve `(T − shift I) x = b` for tridiagonal `T` with partial pivoting.
fn solve_shifted(d: &[f64], e: &[f64], shift: f64, b: &[f64]) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        let p = d[0] - shift;
        let p = if p == 0.0 { f64::EPSILON } else { p };
        return vec![b[0] / p];
    }
    // Rows of U carry up to two superdiagonals after pivoting.
    let mut u0: Vec<f64> = d.iter().map(|x| x - shift).collect();
    let mut u1: Vec<f64> = e.to_vec();
    u1.push(0.0);
    let mut u2 = vec![0.0; n];
    let mut sub: Vec<f64> = e.to_vec();
    let mut rhs = b.to_vec();
    let scale = d.iter().chain(e).fold(0.0f64, |m, v| m.max(v.abs())).max(shift.abs()).max(1.0);
    let tiny = f64::EPSILON * scale;
    for i in 0..n - 1 {
        if sub[i].abs() > u0[i].abs() {
            // Swap rows i and i+1.
            let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
            u0[i] = sub[i];
            u1[i] = u0[i + 1];
            u2[i] = u1[i + 1];
            let m = a0 / u0[i];
            u0[i + 1] = a1 - m * u1[i];
            u1[i + 1] = a2 - m * u2[i];
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
        } else {
            if u0[i] == 0.0 {
                u0[i] = tiny;
            }
            let m = sub[i] / u0[i];
            u0[i + 1] -= m * u1[i];
            u1[i + 1] -= m * u2[i];
            rhs[i + 1] -= m * rhs[i];
        }
        sub[i] = 0.0;
    }
    if u0[n - 1] == 0.0 {
        u0[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}

fn normalize(v: &mut [f64]) {
    let n2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n2 > 0.0 {
        v.iter_mut().for_each(|x| *x /= n2);
    }
}

/// Lowest `count` eigenpairs of `A v = λ W v`, ascending.
pub fn eig_sym_tridiag(sys: &TridiagonalSystem, count: usize) -> Result<Vec<Eigenpair>, NumericsError> {
    sys.validate()?;
    let n = sys.order();
    if count == 0 || count > n {
        return Err(NumericsError::InvalidConfig(format!("count {count} outside 1..={n}")));
    }
    let (d, e) = sys.symmetrized();
    let norm_a = sys.norm_inf();
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut pairs = Vec::with_capacity(count);
    for j in 0..count {
        let value = bisect_eigenvalue(&d, &e, j);
        let shift = value + 4.0 * f64::EPSILON * value.abs().max(1.0);
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 + j * 104_729) % 97) as f64 / 97.0).collect();
        normalize(&mut v);
        let mut converged = false;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let mut w = solve_shifted(&d, &e, shift, &v);
            for prev in &found {
                let dot: f64 = w.iter().zip(prev).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
            normalize(&mut w);
            let change = w
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs().min((a + b).abs()))
                .fold(0.0, f64::max);
            v = w;
            if change < 1e-13 {
                converged = true;
                break;
            }
        }
        let mut vector: Vec<f64> = v.iter().zip(&sys.weight).map(|(x, w)| x / w.sqrt()).collect();
        let (imax, _) = vector
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        let scale = vector[imax];
        vector.iter_mut().for_each(|x| *x /= scale);
        let res = sys.residual(value, &vector);
        if !converged && res > 1e-10 * norm_a {
            return Err(NumericsError::EigensolverFailure(format!(
                "inverse iteration for eigenvalue {j} did not converge (residual {res:e})"
            )));
        }
        found.push(v);
        pairs.push(Eigenpair { value, vector });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn laplacian(n_interior: usize, len: f64) -> TridiagonalSystem {
        let h = len / (n_interior + 1) as f64;
        TridiagonalSystem::new(
            vec![2.0 / (h * h); n_interior],
            vec![-1.0 / (h * h); n_interior - 1],
            vec![1.0; n_interior],
        )
        .unwrap()
    }

    #[test]
    fn dirichlet_laplacian_first_eigenvalue() {
        let sys = laplacian(999, 1.0);
        let pairs = eig_sym_tridiag(&sys, 2).unwrap();
        assert!((pairs[0].value - PI * PI).abs() / (PI * PI) < 1e-4);
        assert!(pairs[0].value < pairs[1].value);
        for p in &pairs {
            assert!(sys.residual(p.value, &p.vector) <= 1e-10 * sys.norm_inf());
        }
    }

    #[test]
    fn sine_eigenvectors() {
        let m = 50;
        let sys = laplacian(m, 1.0);
        let h = 1.0 / (m + 1) as f64;
        let pairs = eig_sym_tridiag(&sys, 3).unwrap();
        for (j, p) in pairs.iter().enumerate() {
            let kpi = (j + 1) as f64 * PI;
            let exact = 4.0 / (h * h) * (0.5 * kpi * h).sin().powi(2);
            assert!((p.value - exact).abs() < 1e-9 * exact);
            let s: Vec<f64> = (1..=m).map(|i| (kpi * i as f64 * h).sin()).collect();
            let smax = s.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let sign = (p.vector.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()).signum();
            for (a, b) in p.vector.iter().zip(&s) {
                assert!((a - sign * b / smax).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn count_above_order_is_rejected() {
        let sys = laplacian(10, 1.0);
        assert!(eig_sym_tridiag(&sys, 11).is_err());
        assert!(eig_sym_tridiag(&sys, 0).is_err());
    }

    #[test]
    fn rejects_nonpositive_weight() {
        assert!(TridiagonalSystem::new(vec![1.0, 1.0], vec![0.0], vec![1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn random_pencils_have_small_residuals(
            diag in proptest::collection::vec(1.0..10.0f64, 20),
            off in proptest::collection::vec(-1.0..1.0f64, 19),
            weight in proptest::collection::vec(0.5..2.0f64, 20),
        ) {
            let sys = TridiagonalSystem::new(diag, off, weight).unwrap();
            let pairs = eig_sym_tridiag(&sys, 3).unwrap();
            prop_assert!(pairs[0].value <= pairs[1].value && pairs[1].value <= pairs[2].value);
            for p in &pairs {
                prop_assert!(sys.residual(p.value, &p.vector) <= 1e-10 * sys.norm_inf());
            }
        }
    }
}
