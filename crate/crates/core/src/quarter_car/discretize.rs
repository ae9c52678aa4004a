//! Exact zero-hold/first-order-hold discretization of the quarter-car ODE.
//!
//! With the road elevation linear inside each profile interval, the state
//! `x = [zs, zs', zu, zu']` and input `[p, p']` form an autonomous 6-state
//! system whose matrix exponential gives the exact interval update
//! `x+ = Phi x + g_p p + g_r p'`.

#![allow(clippy::needless_range_loop)]

use super::GoldenCarParams;
use crate::scalar::Real;

pub(crate) type Mat6<T> = [[T; 6]; 6];

fn zero6<T: Real>() -> Mat6<T> {
    [[T::zero(); 6]; 6]
}

fn identity6<T: Real>() -> Mat6<T> {
    let mut m = zero6();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

fn mul6<T: Real>(a: &Mat6<T>, b: &Mat6<T>) -> Mat6<T> {
    let mut out = zero6();
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..6 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn inf_norm<T: Real>(a: &Mat6<T>) -> T {
    a.iter()
        .map(|row| row.iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), T::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub(crate) fn expm6<T: Real>(a: &Mat6<T>) -> Mat6<T> {
    let norm = inf_norm(a).as_f64();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = T::lit(0.5f64.powi(squarings));
    let mut scaled = *a;
    for row in scaled.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let mut result = identity6();
    let mut term = identity6();
    for k in 1..=20 {
        term = mul6(&term, &scaled);
        let inv_k = T::one() / T::of_usize(k);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv_k;
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul6(&result, &result);
    }
    result
}

/// Continuous-time system matrix of the augmented state `[zs, zs', zu, zu', p, p']`.
pub(crate) fn system_matrix<T: Real>(p: &GoldenCarParams<T>) -> Mat6<T> {
    let mut m = zero6();
    m[0][1] = T::one();
    m[1][0] = -p.k2;
    m[1][1] = -p.c;
    m[1][2] = p.k2;
    m[1][3] = p.c;
    m[2][3] = T::one();
    m[3][0] = p.k2 / p.mu;
    m[3][1] = p.c / p.mu;
    m[3][2] = -(p.k1 + p.k2) / p.mu;
    m[3][3] = -p.c / p.mu;
    m[3][4] = p.k1 / p.mu;
    m[4][5] = T::one();
    m
}

/// Interval update for one time step.
///
/// Any constant elevation is an equilibrium, so the update is applied to the
/// state relative to the interval's starting elevation. That drops the
/// elevation input term and keeps a level road exactly at rest.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepMap<T> {
    pub dt: T,
    pub phi: [[T; 4]; 4],
    pub g_r: [T; 4],
}

impl<T: Real> StepMap<T> {
    pub fn new(params: &GoldenCarParams<T>, dt: T) -> Self {
        let mut a = system_matrix(params);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= dt;
            }
        }
        let e = expm6(&a);
        let mut phi = [[T::zero(); 4]; 4];
        let mut g_r = [T::zero(); 4];
        for i in 0..4 {
            phi[i].copy_from_slice(&e[i][..4]);
            g_r[i] = e[i][5];
        }
        Self { dt, phi, g_r }
    }

    /// Advance `x` over one interval whose road starts at `p` and climbs at `rate`.
    #[inline]
    pub fn apply(&self, x: [T; 4], p: T, rate: T) -> [T; 4] {
        let u = [x[0] - p, x[1], x[2] - p, x[3]];
        let mut out = [T::zero(); 4];
        for i in 0..4 {
            out[i] = self.phi[i][0] * u[0]
                + self.phi[i][1] * u[1]
                + self.phi[i][2] * u[2]
                + self.phi[i][3] * u[3]
                + self.g_r[i] * rate;
        }
        out[0] += p;
        out[2] += p;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm6::<f64>(&zero6());
        assert_eq!(e, identity6::<f64>());
    }

    #[test]
    fn expm_matches_scalar_exponential_on_diagonal() {
        let mut a = zero6::<f64>();
        for i in 0..6 {
            a[i][i] = -(i as f64) * 1.7;
        }
        let e = expm6(&a);
        for i in 0..6 {
            assert!((e[i][i] - (-(i as f64) * 1.7).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn level_offset_is_an_equilibrium_of_the_full_map() {
        // Phi [1,0,1,0] + (elevation column) == [1,0,1,0], the identity the step relies on
        let params = GoldenCarParams::<f64>::golden();
        let mut a = system_matrix(&params);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= 0.00225;
            }
        }
        let e = expm6(&a);
        let rest = [1.0, 0.0, 1.0, 0.0];
        for i in 0..4 {
            let v = e[i][0] + e[i][2] + e[i][4];
            assert!((v - rest[i]).abs() < 1e-12, "row {i}: {v}");
        }
        let map = StepMap::new(&params, 0.00225);
        assert_eq!(map.apply([0.37, 0.0, 0.37, 0.0], 0.37, 0.0), [0.37, 0.0, 0.37, 0.0]);
    }

    #[test]
    fn expm_rotation_block() {
        // [[0, w], [-w, 0]] -> rotation by w
        let mut a = zero6::<f64>();
        a[0][1] = 3.0;
        a[1][0] = -3.0;
        let e = expm6(&a);
        assert!((e[0][0] - 3.0f64.cos()).abs() < 1e-13);
        assert!((e[0][1] - 3.0f64.sin()).abs() < 1e-13);
    }
}
