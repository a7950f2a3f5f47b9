//! Box-constrained convex QP with hinge penalties, solved by a primal-dual
//! interior-point method (Mehrotra predictor-corrector).
//!
//! ```text
//! minimize   1/2 x'Hx + c'x + sum_i w_i * max(0, a_i'x + b_i)
//! subject to l <= x <= u
//! ```
//!
//! `H` is symmetric banded and every hinge row must fit inside the band, so
//! each Newton system is a banded Cholesky solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// One penalty term `weight * max(0, coeffs . x + offset)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeRow {
    /// Sparse coefficients, sorted by index.
    pub coeffs: Vec<(usize, f64)>,
    pub offset: f64,
    pub weight: f64,
}

impl HingeRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.coeffs.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct BandedQp {
    n: usize,
    bandwidth: usize,
    /// Lower band, `band[i * (bw + 1) + k] = H[i][i - k]`.
    band: Vec<f64>,
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub hinges: Vec<HingeRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { max_iterations: 80, tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration stalled and `x` is the best feasible iterate
    /// seen; it is still inside the box, so it is a usable descent step.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpError {
    /// The Newton system lost positive definiteness.
    Factorization,
    /// The iteration limit was reached before the tolerances were met.
    NotConverged,
    /// Inconsistent bounds or a hinge row wider than the band.
    BadInput,
}

impl BandedQp {
    pub fn new(n: usize, bandwidth: usize) -> Self {
        let bw = bandwidth.min(n.saturating_sub(1));
        BandedQp {
            n,
            bandwidth: bw,
            band: vec![0.0; n * (bw + 1)],
            linear: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            hinges: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Adds `v` to `H[i][j]` (and `H[j][i]`).
    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bandwidth, "entry ({i}, {j}) outside the band");
        self.band[i * (self.bandwidth + 1) + (i - j)] += v;
    }

    pub fn hessian(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.band[i * (self.bandwidth + 1) + (i - j)]
        }
    }

    pub fn add_hinge(&mut self, mut coeffs: Vec<(usize, f64)>, offset: f64, weight: f64) {
        coeffs.sort_by_key(|c| c.0);
        self.hinges.push(HingeRow { coeffs, offset, weight });
    }

    /// `weight * |coeffs . x + offset|`, as two hinges.
    pub fn add_abs(&mut self, coeffs: Vec<(usize, f64)>, offset: f64, weight: f64) {
        let neg = coeffs.iter().map(|&(i, a)| (i, -a)).collect();
        self.add_hinge(coeffs, offset, weight);
        self.add_hinge(neg, -offset, weight);
    }

    fn h_mul(&self, x: &[f64], out: &mut [f64]) {
        let bw = self.bandwidth;
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let row = &self.band[i * (bw + 1)..(i + 1) * (bw + 1)];
            out[i] += row[0] * x[i];
            for k in 1..=bw.min(i) {
                let j = i - k;
                out[i] += row[k] * x[j];
                out[j] += row[k] * x[i];
            }
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.n];
        self.h_mul(x, &mut hx);
        let quad: f64 = x.iter().zip(&hx).map(|(a, b)| 0.5 * a * b).sum();
        let lin: f64 = x.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        let pen: f64 = self.hinges.iter().map(|h| h.weight * h.value(x).max(0.0)).sum();
        quad + lin + pen
    }

    pub fn solve(&self, opts: &QpOptions) -> Result<QpSolution, QpError> {
        let ipm = Ipm::new(self)?;
        let x0 = ipm.x.clone();
        let start = self.objective(&x0);
        let mut best = (start, x0);
        match ipm.run(opts, &mut best) {
            Ok(sol) => Ok(sol),
            Err(QpError::BadInput) => Err(QpError::BadInput),
            Err(e) => {
                let (objective, x) = best;
                if objective < start {
                    Ok(QpSolution { x, objective, iterations: opts.max_iterations, converged: false })
                } else {
                    Err(e)
                }
            }
        }
    }
}

struct Ipm<'a> {
    qp: &'a BandedQp,
    rows: Vec<usize>,
    x: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

struct Step {
    dx: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
    ds: Vec<f64>,
    dt: Vec<f64>,
    dy0: Vec<f64>,
    dy1: Vec<f64>,
}

impl<'a> Ipm<'a> {
    fn new(qp: &'a BandedQp) -> Result<Self, QpError> {
        let n = qp.n;
        for i in 0..n {
            let (l, u) = (qp.lower[i], qp.upper[i]);
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(QpError::BadInput);
            }
        }
        for h in &qp.hinges {
            if let (Some(a), Some(b)) = (h.coeffs.first(), h.coeffs.last()) {
                if b.0 - a.0 > qp.bandwidth || b.0 >= n {
                    return Err(QpError::BadInput);
                }
            }
        }
        let rows: Vec<usize> = (0..qp.hinges.len()).filter(|&r| qp.hinges[r].weight > 0.0).collect();
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let (l, u) = (qp.lower[i], qp.upper[i]);
                let m = 0.05 * (u - l);
                0.0f64.clamp(l + m, u - m)
            })
            .collect();
        let mut s = Vec::with_capacity(rows.len());
        let mut t = Vec::with_capacity(rows.len());
        let mut y0 = Vec::with_capacity(rows.len());
        let mut y1 = Vec::with_capacity(rows.len());
        for &r in &rows {
            let h = &qp.hinges[r];
            let v = h.value(&x);
            let si = v.max(0.0) + 1.0;
            s.push(si);
            t.push(si - v);
            y0.push(0.5 * h.weight);
            y1.push(0.5 * h.weight);
        }
        Ok(Ipm { qp, rows, x, zl: vec![1.0; n], zu: vec![1.0; n], s, t, y0, y1 })
    }

    fn mu(&self) -> f64 {
        let n = self.qp.n;
        let mut acc = 0.0;
        for i in 0..n {
            acc += (self.x[i] - self.qp.lower[i]) * self.zl[i] + (self.qp.upper[i] - self.x[i]) * self.zu[i];
        }
        for r in 0..self.rows.len() {
            acc += self.s[r] * self.y0[r] + self.t[r] * self.y1[r];
        }
        acc / (2 * n + 2 * self.rows.len()).max(1) as f64
    }

    fn row(&self, r: usize) -> &HingeRow {
        &self.qp.hinges[self.rows[r]]
    }

    fn run(mut self, opts: &QpOptions, best: &mut (f64, Vec<f64>)) -> Result<QpSolution, QpError> {
        let n = self.qp.n;
        let m = self.rows.len();
        let scale = 1.0
            + self.qp.linear.iter().fold(0.0f64, |a, b| a.max(b.abs()))
            + self.rows.iter().fold(0.0f64, |a, &r| a.max(self.qp.hinges[r].weight));
        let mut hx = vec![0.0; n];
        for iter in 0..opts.max_iterations {
            // residuals
            self.qp.h_mul(&self.x, &mut hx);
            let mut rx: Vec<f64> = (0..n).map(|i| hx[i] + self.qp.linear[i] - self.zl[i] + self.zu[i]).collect();
            let mut rs = vec![0.0; m];
            let mut rt = vec![0.0; m];
            for r in 0..m {
                let h = self.row(r);
                for &(i, a) in &h.coeffs {
                    rx[i] += a * self.y1[r];
                }
                rs[r] = h.weight - self.y0[r] - self.y1[r];
                rt[r] = self.t[r] - self.s[r] + h.value(&self.x);
            }
            let obj = self.qp.objective(&self.x);
            if obj < best.0 {
                *best = (obj, self.x.clone());
            }
            let mu = self.mu();
            let dual_inf = rx.iter().chain(rs.iter()).fold(0.0f64, |a, b| a.max(b.abs()));
            let primal_inf = rt.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if mu < opts.tolerance * scale
                && dual_inf < opts.tolerance * scale
                && primal_inf < opts.tolerance * (1.0 + primal_scale(self.qp))
            {
                let objective = self.qp.objective(&self.x);
                return Ok(QpSolution { x: self.x, objective, iterations: iter, converged: true });
            }

            let gl: Vec<f64> = (0..n).map(|i| self.x[i] - self.qp.lower[i]).collect();
            let gu: Vec<f64> = (0..n).map(|i| self.qp.upper[i] - self.x[i]).collect();
            let factor = match self.factor(&gl, &gu) {
                Ok(f) => f,
                Err(e) if mu < 1e-6 * scale && dual_inf < 1e-6 * scale && primal_inf < 1e-6 * (1.0 + primal_scale(self.qp)) => {
                    let _ = e;
                    let objective = self.qp.objective(&self.x);
                    return Ok(QpSolution { x: self.x, objective, iterations: iter, converged: true });
                }
                Err(e) => return Err(e),
            };

            // predictor
            let rzl: Vec<f64> = (0..n).map(|i| gl[i] * self.zl[i]).collect();
            let rzu: Vec<f64> = (0..n).map(|i| gu[i] * self.zu[i]).collect();
            let r0: Vec<f64> = (0..m).map(|r| self.s[r] * self.y0[r]).collect();
            let r1: Vec<f64> = (0..m).map(|r| self.t[r] * self.y1[r]).collect();
            let aff = self.direction(&factor, &gl, &gu, &rx, &rs, &rt, &rzl, &rzu, &r0, &r1);
            let (ap, ad) = self.step_lengths(&gl, &gu, &aff, 1.0);
            let mut mu_aff = 0.0;
            for i in 0..n {
                mu_aff += (gl[i] + ap * aff.dx[i]) * (self.zl[i] + ad * aff.dzl[i]);
                mu_aff += (gu[i] - ap * aff.dx[i]) * (self.zu[i] + ad * aff.dzu[i]);
            }
            for r in 0..m {
                mu_aff += (self.s[r] + ap * aff.ds[r]) * (self.y0[r] + ad * aff.dy0[r]);
                mu_aff += (self.t[r] + ap * aff.dt[r]) * (self.y1[r] + ad * aff.dy1[r]);
            }
            mu_aff /= (2 * n + 2 * m).max(1) as f64;
            let ratio = (mu_aff / mu).clamp(0.0, 1.0);
            let sigma = ratio * ratio * ratio;
            let target = sigma * mu;

            // corrector
            let rzl: Vec<f64> = (0..n).map(|i| rzl[i] - target + aff.dx[i] * aff.dzl[i]).collect();
            let rzu: Vec<f64> = (0..n).map(|i| rzu[i] - target - aff.dx[i] * aff.dzu[i]).collect();
            let r0: Vec<f64> = (0..m).map(|r| r0[r] - target + aff.ds[r] * aff.dy0[r]).collect();
            let r1: Vec<f64> = (0..m).map(|r| r1[r] - target + aff.dt[r] * aff.dy1[r]).collect();
            let step = self.direction(&factor, &gl, &gu, &rx, &rs, &rt, &rzl, &rzu, &r0, &r1);
            let (ap, ad) = self.step_lengths(&gl, &gu, &step, 0.995);
            for i in 0..n {
                self.x[i] += ap * step.dx[i];
                self.zl[i] += ad * step.dzl[i];
                self.zu[i] += ad * step.dzu[i];
            }
            for r in 0..m {
                self.s[r] += ap * step.ds[r];
                self.t[r] += ap * step.dt[r];
                self.y0[r] += ad * step.dy0[r];
                self.y1[r] += ad * step.dy1[r];
            }
        }
        Err(QpError::NotConverged)
    }

    fn theta(&self, r: usize) -> f64 {
        self.t[r] / self.y1[r] + self.s[r] / self.y0[r]
    }

    fn factor(&self, gl: &[f64], gu: &[f64]) -> Result<BandCholesky, QpError> {
        let n = self.qp.n;
        let bw = self.qp.bandwidth;
        let mut band = self.qp.band.clone();
        for i in 0..n {
            band[i * (bw + 1)] += self.zl[i] / gl[i] + self.zu[i] / gu[i];
        }
        for r in 0..self.rows.len() {
            let w = 1.0 / self.theta(r);
            let c = &self.row(r).coeffs;
            for (p, &(i, ai)) in c.iter().enumerate() {
                for &(j, aj) in &c[..=p] {
                    band[i * (bw + 1) + (i - j)] += w * ai * aj;
                }
            }
        }
        if let Some(f) = BandCholesky::factor(band.clone(), n, bw) {
            return Ok(f);
        }
        // Near convergence some barrier weights reach 1e15 and cancellation
        // breaks the factorization; a relative diagonal shift keeps the
        // direction usable.
        let maxd = (0..n).map(|i| band[i * (bw + 1)]).fold(0.0f64, f64::max);
        for delta in [1e-12, 1e-9, 1e-6] {
            let mut b = band.clone();
            for i in 0..n {
                b[i * (bw + 1)] += delta * maxd;
            }
            if let Some(f) = BandCholesky::factor(b, n, bw) {
                return Ok(f);
            }
        }
        Err(QpError::Factorization)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        factor: &BandCholesky,
        gl: &[f64],
        gu: &[f64],
        rx: &[f64],
        rs: &[f64],
        rt: &[f64],
        rzl: &[f64],
        rzu: &[f64],
        r0: &[f64],
        r1: &[f64],
    ) -> Step {
        let n = self.qp.n;
        let m = self.rows.len();
        let mut rhs: Vec<f64> = (0..n).map(|i| -rx[i] - rzl[i] / gl[i] + rzu[i] / gu[i]).collect();
        let rho: Vec<f64> = (0..m).map(|r| rt[r] - r1[r] / self.y1[r] + (r0[r] + self.s[r] * rs[r]) / self.y0[r]).collect();
        for r in 0..m {
            let f = rho[r] / self.theta(r);
            for &(i, a) in &self.row(r).coeffs {
                rhs[i] -= a * f;
            }
        }
        let dx = factor.solve(rhs);
        let mut dy1 = vec![0.0; m];
        let mut ds = vec![0.0; m];
        let mut dy0 = vec![0.0; m];
        let mut dt = vec![0.0; m];
        for r in 0..m {
            let adx: f64 = self.row(r).coeffs.iter().map(|&(i, a)| a * dx[i]).sum();
            dy1[r] = (adx + rho[r]) / self.theta(r);
            ds[r] = (-r0[r] - self.s[r] * rs[r] + self.s[r] * dy1[r]) / self.y0[r];
            dy0[r] = rs[r] - dy1[r];
            dt[r] = (-r1[r] - self.t[r] * dy1[r]) / self.y1[r];
        }
        let dzl = (0..n).map(|i| (-rzl[i] - self.zl[i] * dx[i]) / gl[i]).collect();
        let dzu = (0..n).map(|i| (-rzu[i] + self.zu[i] * dx[i]) / gu[i]).collect();
        Step { dx, dzl, dzu, ds, dt, dy0, dy1 }
    }

    fn step_lengths(&self, gl: &[f64], gu: &[f64], d: &Step, eta: f64) -> (f64, f64) {
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        let limit = |a: &mut f64, v: f64, dv: f64| {
            if dv < 0.0 {
                *a = a.min(-eta * v / dv);
            }
        };
        for i in 0..self.qp.n {
            limit(&mut ap, gl[i], d.dx[i]);
            limit(&mut ap, gu[i], -d.dx[i]);
            limit(&mut ad, self.zl[i], d.dzl[i]);
            limit(&mut ad, self.zu[i], d.dzu[i]);
        }
        for r in 0..self.rows.len() {
            limit(&mut ap, self.s[r], d.ds[r]);
            limit(&mut ap, self.t[r], d.dt[r]);
            limit(&mut ad, self.y0[r], d.dy0[r]);
            limit(&mut ad, self.y1[r], d.dy1[r]);
        }
        (ap, ad)
    }
}

fn primal_scale(qp: &BandedQp) -> f64 {
    qp.hinges.iter().fold(0.0f64, |a, h| a.max(h.offset.abs()))
}

/// Cholesky factor of a symmetric positive definite banded matrix.
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors the lower band in place; `None` if the matrix is not positive definite.
    pub fn factor(mut l: Vec<f64>, n: usize, bw: usize) -> Option<Self> {
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = l[i * w + (i - j)];
                for k in k0..j {
                    sum -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * w] = sqrt(sum);
                } else {
                    l[i * w + (i - j)] = sum / l[j * w];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }

    pub fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut sum = b[i];
            for k in i.saturating_sub(self.bw)..i {
                sum -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = sum / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..(i + w).min(self.n) {
                sum -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = sum / self.l[i * w];
        }
        b
    }
}
