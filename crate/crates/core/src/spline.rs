//! Uniform-knot B-spline bases evaluated with the Cox–de Boor triangle.
//!
//! A grid over `[lo, hi]` with `G` intervals and degree `r` carries
//! `G + 2r + 1` knots: the `G + 1` interior knots plus `r` extension knots
//! on either side that continue the uniform spacing. It defines `G + r`
//! basis functions, which sum to one on `[lo, hi]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spline degree.
pub const MAX_DEGREE: usize = 7;

/// Immutable knot vector for one family of spline edge functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    domain_lo: f64,
    domain_hi: f64,
    grid_size: usize,
    degree: usize,
    knots: Vec<f64>,
}

/// Dense basis values and first derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// The (at most `r + 1`) nonzero basis functions at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Index of the basis function stored at `values[0]`.
    pub first: usize,
    pub len: usize,
    pub values: [f64; MAX_DEGREE + 1],
    pub derivs: [f64; MAX_DEGREE + 1],
}

impl LocalBasis {
    /// `(basis index, value, derivative)` for each stored entry.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.len).map(move |i| (self.first + i, self.values[i], self.derivs[i]))
    }
}

/// Builds a uniform grid. Convenience wrapper over [`SplineGrid::new`].
pub fn make_grid(
    domain_lo: f64,
    domain_hi: f64,
    grid_size: usize,
    degree: usize,
) -> Result<SplineGrid> {
    SplineGrid::new(domain_lo, domain_hi, grid_size, degree)
}

impl SplineGrid {
    pub fn new(domain_lo: f64, domain_hi: f64, grid_size: usize, degree: usize) -> Result<Self> {
        if !(domain_lo.is_finite() && domain_hi.is_finite()) || domain_lo >= domain_hi {
            return Err(Error::InvalidBounds {
                lo: domain_lo,
                hi: domain_hi,
            });
        }
        if grid_size < 1 {
            return Err(Error::InvalidSize(format!(
                "grid_size must be >= 1, got {grid_size}"
            )));
        }
        if degree > MAX_DEGREE {
            return Err(Error::InvalidSize(format!(
                "degree must be <= {MAX_DEGREE}, got {degree}"
            )));
        }
        let h = (domain_hi - domain_lo) / grid_size as f64;
        let mut knots = Vec::with_capacity(grid_size + 2 * degree + 1);
        for j in (1..=degree).rev() {
            knots.push(domain_lo - j as f64 * h);
        }
        for i in 0..=grid_size {
            // interior knots hit both endpoints exactly
            knots.push(domain_lo + (domain_hi - domain_lo) * i as f64 / grid_size as f64);
        }
        for j in 1..=degree {
            knots.push(domain_hi + j as f64 * h);
        }
        Ok(Self {
            domain_lo,
            domain_hi,
            grid_size,
            degree,
            knots,
        })
    }

    pub fn domain_lo(&self) -> f64 {
        self.domain_lo
    }

    pub fn domain_hi(&self) -> f64 {
        self.domain_hi
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn spacing(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / self.grid_size as f64
    }

    pub fn basis_count(&self) -> usize {
        self.grid_size + self.degree
    }

    /// Knot `k` of the infinitely extended uniform sequence (k may be negative
    /// or past the stored knots).
    fn knot(&self, k: isize) -> f64 {
        let n = self.knots.len() as isize;
        if (0..n).contains(&k) {
            self.knots[k as usize]
        } else if k < 0 {
            self.knots[0] + k as f64 * self.spacing()
        } else {
            self.knots[(n - 1) as usize] + (k - n + 1) as f64 * self.spacing()
        }
    }

    /// Index `s` with `knot(s) <= x < knot(s + 1)`; the last stored knot
    /// closes the final interval.
    fn span(&self, x: f64) -> isize {
        let last = self.knots.len() - 1;
        if x == self.knots[last] {
            return last as isize - 1;
        }
        let mut s = ((x - self.knots[0]) / self.spacing()).floor() as isize;
        while x < self.knot(s) {
            s -= 1;
        }
        while x >= self.knot(s + 1) {
            s += 1;
        }
        s
    }

    /// Nonzero basis values and derivatives at `x`.
    pub fn eval_local(&self, x: f64) -> Result<LocalBasis> {
        if !x.is_finite() {
            return Err(Error::NonFiniteInput(x));
        }
        let p = self.degree;
        let s = self.span(x);

        // Cox–de Boor triangle; `lower` keeps the degree p-1 row for derivatives.
        let mut n = [0.0; MAX_DEGREE + 1];
        let mut lower = [0.0; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=p {
            if j == p {
                lower = n;
            }
            left[j] = x - self.knot(s + 1 - j as isize);
            right[j] = self.knot(s + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }

        // n[i] belongs to basis index s - p + i; lower[i] to s - p + 1 + i.
        let mut derivs = [0.0; MAX_DEGREE + 1];
        if p > 0 {
            for (i, d) in derivs.iter_mut().enumerate().take(p + 1) {
                let idx = s - p as isize + i as isize;
                let a = if i >= 1 { lower[i - 1] } else { 0.0 };
                let b = if i < p { lower[i] } else { 0.0 };
                let da = self.knot(idx + p as isize) - self.knot(idx);
                let db = self.knot(idx + p as isize + 1) - self.knot(idx + 1);
                *d = p as f64 * (a / da - b / db);
            }
        }

        let count = self.basis_count() as isize;
        let lo_idx = (s - p as isize).max(0);
        let hi_idx = s.min(count - 1);
        let mut out = LocalBasis {
            first: lo_idx.max(0) as usize,
            len: 0,
            values: [0.0; MAX_DEGREE + 1],
            derivs: [0.0; MAX_DEGREE + 1],
        };
        if hi_idx < lo_idx {
            return Ok(out);
        }
        for idx in lo_idx..=hi_idx {
            let i = (idx - (s - p as isize)) as usize;
            out.values[out.len] = n[i];
            out.derivs[out.len] = derivs[i];
            out.len += 1;
        }
        Ok(out)
    }

    /// Dense basis values and derivatives, each of length `G + r`.
    pub fn eval_basis(&self, x: f64) -> Result<BasisEval> {
        let local = self.eval_local(x)?;
        let mut values = vec![0.0; self.basis_count()];
        let mut derivs = vec![0.0; self.basis_count()];
        for (idx, v, d) in local.iter() {
            values[idx] = v;
            derivs[idx] = d;
        }
        Ok(BasisEval { values, derivs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook recursive definition over the stored knots.
    fn naive(knots: &[f64], i: usize, r: usize, x: f64) -> f64 {
        if r == 0 {
            let last = knots.len() - 1;
            let closes = x == knots[last] && i + 1 == last;
            return if (knots[i] <= x && x < knots[i + 1]) || closes {
                1.0
            } else {
                0.0
            };
        }
        let mut v = 0.0;
        let d1 = knots[i + r] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * naive(knots, i, r - 1, x);
        }
        let d2 = knots[i + r + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + r + 1] - x) / d2 * naive(knots, i + 1, r - 1, x);
        }
        v
    }

    #[test]
    fn grid_counts() {
        let g = make_grid(-1.0, 1.0, 5, 3).unwrap();
        assert_eq!(g.knots().len(), 12);
        assert_eq!(g.basis_count(), 8);

        let g = make_grid(-1.0, 1.0, 1, 0).unwrap();
        assert_eq!(g.knots(), &[-1.0, 1.0]);
        assert_eq!(g.basis_count(), 1);

        let g = make_grid(0.0, 2.0, 2, 1).unwrap();
        assert_eq!(g.knots(), &[-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.basis_count(), 3);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            make_grid(1.0, 1.0, 3, 3),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(matches!(
            make_grid(2.0, 1.0, 3, 3),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(matches!(
            make_grid(-1.0, 1.0, 0, 3),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn hat_function_peak() {
        let g = make_grid(0.0, 2.0, 2, 1).unwrap();
        let b = g.eval_basis(1.0).unwrap();
        assert_eq!(b.values, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cubic_partition_of_unity() {
        let g = make_grid(-1.0, 1.0, 5, 3).unwrap();
        let s: f64 = g.eval_basis(0.3).unwrap().values.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_at_interior_knot_matches_recursion() {
        // spacing 1: domain [0, 4] with G = 4
        let g = make_grid(0.0, 4.0, 4, 3).unwrap();
        let b = g.eval_basis(2.0).unwrap();
        for (i, v) in b.values.iter().enumerate() {
            assert!((v - naive(g.knots(), i, 3, 2.0)).abs() < 1e-15);
        }
        let nz: Vec<f64> = b.values.iter().copied().filter(|v| *v > 0.0).collect();
        assert_eq!(nz.len(), 3);
        for (a, e) in nz.iter().zip([1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let g = make_grid(-1.0, 1.0, 5, 3).unwrap();
        assert!(matches!(
            g.eval_basis(f64::NAN),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            g.eval_basis(f64::INFINITY),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn far_outside_decays_to_zero() {
        let g = make_grid(-1.0, 1.0, 5, 3).unwrap();
        for x in [-5.0, -1.0 - 3.0 * 0.4, 1.0 + 3.0 * 0.4, 9.0] {
            let b = g.eval_basis(x).unwrap();
            assert!(b.values.iter().all(|v| *v == 0.0), "x = {x}");
        }
    }

    #[test]
    fn degree_zero_closes_right_end() {
        let g = make_grid(-1.0, 1.0, 1, 0).unwrap();
        assert_eq!(g.eval_basis(1.0).unwrap().values, vec![1.0]);
        assert_eq!(g.eval_basis(-1.0).unwrap().values, vec![1.0]);
        assert_eq!(g.eval_basis(1.5).unwrap().values, vec![0.0]);
    }

    proptest! {
        #[test]
        fn matches_recursion_everywhere(
            g in 1usize..8, r in 0usize..6, t in -0.5f64..1.5,
        ) {
            let grid = make_grid(-1.0, 1.0, g, r).unwrap();
            let k = grid.knots();
            let x = k[0] + t * (k[k.len() - 1] - k[0]);
            let b = grid.eval_basis(x).unwrap();
            for i in 0..grid.basis_count() {
                prop_assert!((b.values[i] - naive(k, i, r, x)).abs() < 1e-12);
                prop_assert!(b.values[i] >= 0.0);
            }
        }

        #[test]
        fn local_support(g in 1usize..8, r in 0usize..6, t in 0.0f64..1.0) {
            let grid = make_grid(-2.0, 3.0, g, r).unwrap();
            let k = grid.knots();
            let x = k[0] + t * (k[k.len() - 1] - k[0]);
            let b = grid.eval_basis(x).unwrap();
            for i in 0..grid.basis_count() {
                if x < k[i] || x > k[i + r + 1] {
                    prop_assert_eq!(b.values[i], 0.0);
                }
            }
        }

        #[test]
        fn derivative_matches_central_difference(g in 1usize..8, r in 1usize..6, t in 0.0f64..1.0) {
            let grid = make_grid(-1.0, 1.0, g, r).unwrap();
            let x = -1.0 + 2.0 * t;
            let h = grid.spacing();
            let frac = ((x + 1.0) / h).fract();
            prop_assume!(frac > 1e-3 && frac < 1.0 - 1e-3);
            let eps = 1e-6;
            let b = grid.eval_basis(x).unwrap();
            let p = grid.eval_basis(x + eps).unwrap();
            let m = grid.eval_basis(x - eps).unwrap();
            for i in 0..grid.basis_count() {
                let fd = (p.values[i] - m.values[i]) / (2.0 * eps);
                prop_assert!((fd - b.derivs[i]).abs() < 1e-6, "i={} fd={} an={}", i, fd, b.derivs[i]);
            }
        }
    }
}
