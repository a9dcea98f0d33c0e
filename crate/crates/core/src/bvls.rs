//! Box-constrained convex quadratic programs, `min ½wᵀHw − cᵀw` with
//! `lo ≤ w ≤ hi`, solved by a primal active-set method. Sized for the small
//! dense systems of ensemble weighting (N ≲ 100).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSolution {
    pub w: Vec<f64>,
    pub iterations: usize,
}

/// Objective value `½wᵀHw − cᵀw`.
pub fn objective(h: &DMatrix<f64>, c: &DVector<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    0.5 * w.dot(&(h * &w)) - c.dot(&w)
}

/// `h` must be symmetric positive definite.
pub fn solve_box_qp(h: &DMatrix<f64>, c: &DVector<f64>, lo: f64, hi: f64) -> Result<BoxSolution> {
    let n = c.len();
    if h.nrows() != n || h.ncols() != n {
        let actual = if h.nrows() != n { h.nrows() } else { h.ncols() };
        return Err(Error::Shape { expected: n, actual });
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::InvalidConfig(format!("empty box [{lo}, {hi}]")));
    }
    let scale = c.amax().max(h.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut state = vec![Bound::Lower; n];
    let mut w = vec![lo; n];
    let max_iter = 20 * n + 100;

    for iteration in 1..=max_iter {
        // subproblem on the free set with bound variables held fixed
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let candidate = free_solution(h, c, &w, &free)?;
        let feasible = free.iter().zip(&candidate).all(|(_, &v)| v >= lo && v <= hi);
        if feasible {
            for (&i, &v) in free.iter().zip(&candidate) {
                w[i] = v;
            }
            // release the bound variable whose multiplier has the wrong sign
            let g = gradient(h, c, &w);
            let worst = (0..n)
                .filter_map(|i| match state[i] {
                    Bound::Lower if g[i] < -tol => Some((i, -g[i])),
                    Bound::Upper if g[i] > tol => Some((i, g[i])),
                    _ => None,
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, _)) => state[i] = Bound::Free,
                None => return Ok(BoxSolution { w, iterations: iteration }),
            }
        } else {
            // walk towards the candidate until the first bound is hit
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (&i, &v) in free.iter().zip(&candidate) {
                let target = if v < lo { lo } else if v > hi { hi } else { continue };
                let limit = ((target - w[i]) / (v - w[i])).clamp(0.0, 1.0);
                if blocking.is_none() || limit < alpha {
                    alpha = limit;
                    blocking = Some(i);
                }
            }
            for (&i, &v) in free.iter().zip(&candidate) {
                w[i] += alpha * (v - w[i]);
            }
            for (&i, &v) in free.iter().zip(&candidate) {
                let at_lo = v < lo && (Some(i) == blocking || w[i] <= lo);
                let at_hi = v > hi && (Some(i) == blocking || w[i] >= hi);
                if at_lo {
                    w[i] = lo;
                    state[i] = Bound::Lower;
                } else if at_hi {
                    w[i] = hi;
                    state[i] = Bound::Upper;
                }
            }
        }
    }
    Err(Error::DegenerateData(format!("box QP did not converge in {max_iter} iterations")))
}

fn gradient(h: &DMatrix<f64>, c: &DVector<f64>, w: &[f64]) -> Vec<f64> {
    let wv = DVector::from_column_slice(w);
    (h * wv - c).iter().copied().collect()
}

fn free_solution(h: &DMatrix<f64>, c: &DVector<f64>, w: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let m = free.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let n = c.len();
    let mut hff = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (a, &i) in free.iter().enumerate() {
        let mut r = c[i];
        for j in 0..n {
            if !free.contains(&j) {
                r -= h[(i, j)] * w[j];
            }
        }
        rhs[a] = r;
        for (b, &j) in free.iter().enumerate() {
            hff[(a, b)] = h[(i, j)];
        }
    }
    let chol = hff
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("quadratic term is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}
