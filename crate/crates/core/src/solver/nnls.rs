//! Lawson–Hanson active-set solver for `min ‖Ex − f‖` subject to `x ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlpError};

pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = e.shape();
    if m != f.len() {
        return Err(SlpError::Dimension(format!("NNLS: E has {m} rows, f has {}", f.len())));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let norm1 = e.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * norm1 * m.max(n) as f64;

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let grad = e.tr_mul(&(f - e * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        let Some(j) = candidate else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;

        let mut inner = 0;
        loop {
            inner += 1;
            if inner > 3 * n + 10 {
                return Err(SlpError::NonConvergence {
                    steps: inner,
                    lower: 0.0,
                    upper: 0.0,
                    value: grad[j],
                });
            }
            let s = passive_lstsq(e, f, &passive);
            let infeasible: Vec<usize> = (0..n).filter(|&k| passive[k] && s[k] <= tol).collect();
            if infeasible.is_empty() {
                x = s;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += (&s - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
        if passive[j] {
            blocked.fill(false);
        } else {
            // Rejected right away: its positive gradient was rounding noise.
            blocked[j] = true;
        }
    }
    Ok(x)
}

fn passive_lstsq(e: &DMatrix<f64>, f: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&k| passive[k]).collect();
    let sub = e.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(f, 1e-14)
        .expect("SVD computed with both factors");
    let mut full = DVector::zeros(passive.len());
    for (i, &k) in cols.iter().enumerate() {
        full[k] = sol[i];
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive active-set enumeration: the optimum is the unconstrained
    /// least-squares solution on some support, so try them all.
    fn brute_force(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
        let n = e.ncols();
        let mut best = (f.norm_squared(), DVector::zeros(n));
        for mask in 1u32..(1 << n) {
            let support: Vec<bool> = (0..n).map(|k| mask & (1 << k) != 0).collect();
            let s = passive_lstsq(e, f, &support);
            if s.iter().all(|&v| v >= 0.0) {
                let r = (f - e * &s).norm_squared();
                if r < best.0 {
                    best = (r, s);
                }
            }
        }
        best.1
    }

    #[test]
    fn matches_enumeration_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..7);
            let m = n + rng.random_range(0..4);
            let e = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let f = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let x = nnls(&e, &f).unwrap();
            let oracle = brute_force(&e, &f);
            assert!((x - oracle).amax() < 1e-9);
        }
    }

    #[test]
    fn trivial_cases() {
        let e = DMatrix::identity(3, 3);
        let f = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = nnls(&e, &f).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 0.0, 3.0])).amax() < 1e-14);
        let f = DVector::from_vec(vec![-1.0, -2.0, -3.0]);
        assert_eq!(nnls(&e, &f).unwrap().as_slice(), &[0.0, 0.0, 0.0]);
        assert!(nnls(&e, &DVector::zeros(2)).is_err());
    }
}
