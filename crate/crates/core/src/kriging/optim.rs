//! Box-constrained L-BFGS with projected Armijo backtracking.

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
}

/// Minimize `f` over `[lo, hi]` starting at `x0`. `fg` returns the value
/// and gradient; non-finite values are treated as +∞.
pub(crate) fn minimize_box<F>(mut fg: F, x0: Vec<f64>, lo: &[f64], hi: &[f64], max_iter: usize) -> Outcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 6;
    let n = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut x = x0;
    clamp(&mut x);
    let (mut f, mut g) = fg(&x);
    if !f.is_finite() {
        return Outcome { x, f: f64::INFINITY };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for _ in 0..max_iter {
        // projected gradient norm
        let pg = (0..n)
            .map(|i| {
                if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                    0.0
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max);
        if pg < 1e-7 * (1.0 + f.abs()) {
            break;
        }

        let mut d = two_loop(&g, &s_hist, &y_hist);
        for v in d.iter_mut() {
            *v = -*v;
        }
        for i in 0..n {
            if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            for i in 0..n {
                d[i] = -g[i];
                if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                    d[i] = 0.0;
                }
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        // keep the first trial step inside a unit-ish trust region in log space
        let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut step = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };

        let mut accepted = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            clamp(&mut xn);
            let dec: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            let (fnew, gnew) = fg(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * dec.min(0.0) {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let change = f - fnew;
        x = xn;
        f = fnew;
        g = gnew;
        if change.abs() <= 1e-12 * (1.0 + f.abs()) {
            break;
        }
    }
    Outcome { x, f }
}

/// `H g` for the implicit inverse-Hessian approximation.
fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut q = g.to_vec();
    let m = s_hist.len();
    let mut alpha = vec![0.0; m];
    for i in (0..m).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if m > 0 {
        let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for i in 0..m {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q
}
