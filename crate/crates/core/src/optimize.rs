//! Derivative-free minimisers with simple lower bounds.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Linear models fitted on a simplex, steepest step inside a shrinking trust region.
    LinearTrustRegion,
    NelderMead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evals: usize,
    /// Stop when the best value changes by less than this (relative) over a full radius reduction.
    pub ftol_rel: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            rho_begin: 0.05,
            rho_end: 1e-7,
            max_evals: 20000,
            ftol_rel: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub final_radius: f64,
    pub converged: bool,
    pub method: Method,
}

fn project(x: &mut [f64], lower: &[Option<f64>]) {
    for (v, lo) in x.iter_mut().zip(lower) {
        if let Some(lo) = lo {
            if *v < *lo {
                *v = *lo;
            }
        }
    }
}

struct Counter<'a, F: FnMut(&[f64]) -> f64> {
    f: &'a mut F,
    evals: usize,
    lower: &'a [Option<f64>],
}

impl<F: FnMut(&[f64]) -> f64> Counter<'_, F> {
    fn eval(&mut self, x: &mut [f64]) -> f64 {
        project(x, self.lower);
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Solve the square system a x = b by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|x, y| a[*x][c].abs().partial_cmp(&a[*y][c].abs()).unwrap())?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            if m != 0.0 {
                for k in c..n {
                    a[r][k] -= m * a[c][k];
                }
                b[r] -= m * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(
    method: Method,
    f: &mut F,
    x0: &[f64],
    lower: &[Option<f64>],
    opts: &MinimizeOptions,
) -> MinimizeResult {
    match method {
        Method::LinearTrustRegion => linear_trust_region(f, x0, lower, opts),
        Method::NelderMead => nelder_mead(f, x0, lower, opts),
    }
}

fn linear_trust_region<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    lower: &[Option<f64>],
    opts: &MinimizeOptions,
) -> MinimizeResult {
    let n = x0.len();
    let mut c = Counter { f, evals: 0, lower };
    let mut rho = opts.rho_begin;
    let mut best = x0.to_vec();
    let mut fbest = c.eval(&mut best);
    let mut last_level = fbest;
    let mut converged = false;
    'outer: while rho >= opts.rho_end && c.evals < opts.max_evals {
        // Simplex around the incumbent; directions that hit a bound are flipped.
        let mut pts = Vec::with_capacity(n);
        let mut vals = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = best.clone();
            p[k] += rho;
            let mut v = c.eval(&mut p);
            if (p[k] - best[k]).abs() < 0.5 * rho {
                p = best.clone();
                p[k] -= rho;
                v = c.eval(&mut p);
            }
            pts.push(p);
            vals.push(v);
        }
        let mut improved_any = false;
        loop {
            if c.evals >= opts.max_evals {
                break 'outer;
            }
            // Linear model through the n + 1 points.
            let a: Vec<Vec<f64>> = pts.iter().map(|p| (0..n).map(|k| p[k] - best[k]).collect()).collect();
            let b: Vec<f64> = vals.iter().map(|v| v - fbest).collect();
            let grad = if b.iter().all(|v| v.is_finite()) { solve(a, b) } else { None };
            let Some(mut g) = grad else { break };
            // Projected gradient: drop components pushing into an active bound.
            for (k, lo) in lower.iter().enumerate() {
                if let Some(lo) = lo {
                    if best[k] <= lo + 1e-12 * lo.abs().max(1.0) && g[k] > 0.0 {
                        g[k] = 0.0;
                    }
                }
            }
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn == 0.0 || !gn.is_finite() {
                break;
            }
            let mut trial: Vec<f64> = best.iter().zip(&g).map(|(x, gi)| x - rho * gi / gn).collect();
            let ft = c.eval(&mut trial);
            let predicted = rho * gn;
            if ft < fbest - 1e-4 * predicted.min(fbest.abs().max(1e-300)) {
                // Replace the vertex farthest from the new incumbent.
                let far = (0..n)
                    .max_by(|x, y| {
                        let dx: f64 = pts[*x].iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum();
                        let dy: f64 = pts[*y].iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum();
                        dx.partial_cmp(&dy).unwrap()
                    })
                    .unwrap();
                pts[far] = std::mem::replace(&mut best, trial);
                vals[far] = fbest;
                fbest = ft;
                improved_any = true;
                // Keep the simplex from collapsing: rebuild when it became too flat.
                let spread = pts
                    .iter()
                    .map(|p| p.iter().zip(&best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                if spread < 0.1 * rho || spread > 4.0 * rho {
                    continue 'outer;
                }
            } else {
                break;
            }
        }
        if !improved_any {
            let rel = (last_level - fbest).abs() / fbest.abs().max(1e-300);
            rho *= 0.5;
            if rel < opts.ftol_rel && rho < opts.rho_begin * 1e-3 {
                converged = true;
                break;
            }
            last_level = fbest;
        }
    }
    if rho < opts.rho_end {
        converged = true;
    }
    MinimizeResult {
        x: best,
        fx: fbest,
        evals: c.evals,
        final_radius: rho,
        converged,
        method: Method::LinearTrustRegion,
    }
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    lower: &[Option<f64>],
    opts: &MinimizeOptions,
) -> MinimizeResult {
    let n = x0.len();
    let mut c = Counter { f, evals: 0, lower };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut p = x0.to_vec();
        p[k] += opts.rho_begin;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter_mut().map(|p| c.eval(p)).collect();
    let mut converged = false;
    while c.evals < opts.max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|a, b| vals[*a].partial_cmp(&vals[*b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = idx.iter().map(|i| simplex[*i].clone()).collect();
        vals = idx.iter().map(|i| vals[*i]).collect();
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = (vals[n] - vals[0]).abs() / vals[0].abs().max(1e-300);
        if size < opts.rho_end || (spread < opts.ftol_rel && size < opts.rho_begin * 1e-3) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };
        let mut xr = along(-1.0);
        let fr = c.eval(&mut xr);
        if fr < vals[0] {
            let mut xe = along(-2.0);
            let fe = c.eval(&mut xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (mut xc, inside) = if fr < vals[n] { (along(-0.5), false) } else { (along(0.5), true) };
            let fc = c.eval(&mut xc);
            if fc < if inside { vals[n] } else { fr } {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let mut p: Vec<f64> = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = c.eval(&mut p);
                    simplex[i] = p;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|a, b| vals[*a].partial_cmp(&vals[*b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let size = simplex
        .iter()
        .map(|p| p.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    MinimizeResult {
        x: simplex[best].clone(),
        fx: vals[best],
        evals: c.evals,
        final_radius: size,
        converged,
        method: Method::NelderMead,
    }
}
