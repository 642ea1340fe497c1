//! Derivative-free Nelder–Mead minimisation used by the likelihood fits.

use crate::num::{lit, Real};

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions<T> {
    pub max_iter: usize,
    /// Relative spread of objective values across the simplex that counts as
    /// converged; never tighter than 16 machine epsilons.
    pub ftol: T,
    /// Initial edge length along each coordinate.
    pub step: T,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl<T: Real> Default for SimplexOptions<T> {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 500,
            ftol: lit(1e-8),
            step: lit(0.25),
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<T: Real, F: FnMut(&[T]) -> T>(f: &mut F, x: &[T]) -> T {
    let v = f(x);
    if v.is_nan() {
        T::infinity()
    } else {
        v
    }
}

/// Minimise `f` starting at `x0`.
///
/// The start point is always a vertex of the first simplex, so the returned
/// value never exceeds `f(x0)`.
pub fn nelder_mead<T, F>(mut f: F, x0: &[T], opts: &SimplexOptions<T>) -> Minimum<T>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let mut best_x = x0.to_vec();
    let mut best_v = eval(&mut f, x0);
    let mut total_iter = 0;
    let mut converged = false;

    for round in 0..=opts.restarts {
        let budget = opts.max_iter.saturating_sub(total_iter);
        if budget == 0 {
            break;
        }
        let step = if round == 0 {
            opts.step
        } else {
            opts.step * lit(0.5)
        };
        let (x, v, iters, ok) = run_simplex(&mut f, &best_x, best_v, step, opts.ftol, budget);
        total_iter += iters;
        let improved = v < best_v;
        if v <= best_v {
            best_x = x;
            best_v = v;
        }
        converged = ok;
        if !ok || (round > 0 && !improved) {
            break;
        }
    }

    Minimum {
        x: best_x,
        value: best_v,
        iterations: total_iter,
        converged,
    }
}

fn run_simplex<T, F>(
    f: &mut F,
    x0: &[T],
    f0: T,
    step: T,
    ftol: T,
    max_iter: usize,
) -> (Vec<T>, T, usize, bool)
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);

    let mut pts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<T> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    vals.push(f0);
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] = p[i] + step;
        vals.push(eval(f, &p));
        pts.push(p);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    for iter in 0..max_iter {
        // Stable ordering keeps ties deterministic.
        order.sort_by(|&a, &b| {
            vals[a]
                .partial_cmp(&vals[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let fb = vals[best];
        let fw = vals[worst];
        if fb.is_finite() && fw.is_finite() {
            let spread = (fw - fb).abs();
            let scale = fb.abs() + lit(1e-30);
            // A tolerance below the type's resolution can never be met.
            if spread <= ftol.max(T::epsilon() * lit(16.0)) * scale {
                return (pts[best].clone(), fb, iter, true);
            }
        }

        let mut centroid = vec![T::zero(); n];
        for &k in order.iter().take(n) {
            for (c, &p) in centroid.iter_mut().zip(&pts[k]) {
                *c = *c + p;
            }
        }
        let inv = T::one() / lit::<T>(n as f64);
        for c in centroid.iter_mut() {
            *c = *c * inv;
        }

        let along = |t: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&pts[worst])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let xr = along(T::one());
        let fr = eval(f, &xr);
        if fr < fb {
            let xe = along(two);
            let fe = eval(f, &xe);
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = along(half);
            let fc = eval(f, &xc);
            (xc, fc)
        } else {
            let xc = along(-half);
            let fc = eval(f, &xc);
            (xc, fc)
        };
        if fc < fw.min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &k in order.iter().skip(1) {
            let p: Vec<T> = anchor
                .iter()
                .zip(&pts[k])
                .map(|(&a, &q)| a + half * (q - a))
                .collect();
            vals[k] = eval(f, &p);
            pts[k] = p;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| {
            vals[a]
                .partial_cmp(&vals[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    (pts[best].clone(), vals[best], max_iter, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_quadratic() {
        let m = nelder_mead(
            |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 1.0,
            &[0.0, 0.0],
            &SimplexOptions {
                ftol: 1e-14,
                ..Default::default()
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-4, "{:?}", m.x);
        assert!((m.x[1] + 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock_in_f32() {
        let m = nelder_mead(
            |x: &[f32]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2) + 1.0,
            &[-1.2f32, 1.0],
            &SimplexOptions {
                max_iter: 2000,
                ftol: 1e-7,
                step: 0.5,
                restarts: 2,
            },
        );
        assert!((m.x[0] - 1.0).abs() < 0.05, "{:?}", m.x);
    }

    #[test]
    fn never_worse_than_start_even_with_infeasible_region() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 0.1).powi(2)
            }
        };
        let start = [0.0];
        let m = nelder_mead(f, &start, &SimplexOptions::default());
        assert!(m.value <= f(&start));
    }
}
