//! Adaptive scheduling: calibration sampling, the cross-term-free quadratic
//! performance model, exhaustive thread selection, and the closed-form
//! row-boundary split.
//!
//! The order of operations is: calibrate → [`fit_perf_model`] →
//! [`select_threads`] → [`solve_row_boundary`] for the chosen thread split.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::format::convert_csr_to_loops;
use crate::kernels::{flop_count, spmm_loops, KernelConfig, KernelElement};
use crate::precision::Precision;
use crate::sparse::{CsrMatrix, DenseMatrix};

/// `perf(x, y) = a0 + a1·x + a2·y + a3·x² + a4·y²`, with `x` vector-path
/// threads and `y` matrix-path threads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl PerfModel {
    pub fn new(a: [f64; 5]) -> Self {
        PerfModel { a0: a[0], a1: a[1], a2: a[2], a3: a[3], a4: a[4] }
    }

    pub fn coefficients(&self) -> [f64; 5] {
        [self.a0, self.a1, self.a2, self.a3, self.a4]
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|c| c.is_finite())
    }
}

/// One measured configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub x: usize,
    pub y: usize,
    /// Measured GFLOPS.
    pub perf: f64,
}

/// Per-thread GFLOPS of each path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputEstimate {
    pub tp_neon: f64,
    pub tp_sme: f64,
}

/// Thread split plus row boundary: everything needed to run a hybrid SpMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub t_neon: usize,
    pub t_sme: usize,
    pub r_boundary: usize,
}

/// Monomials of the model, in coefficient order.
pub const BASIS: [&str; 5] = ["1", "x", "y", "x^2", "y^2"];

fn basis_row(x: f64, y: f64) -> [f64; 5] {
    [1.0, x, y, x * x, y * y]
}

/// Exact polynomial evaluation of the model.
pub fn predict(m: &PerfModel, x: usize, y: usize) -> f64 {
    let (x, y) = (x as f64, y as f64);
    m.a0 + m.a1 * x + m.a2 * y + m.a3 * x * x + m.a4 * y * y
}

/// Relative size below which a Householder pivot counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of the five coefficients by Householder QR.
///
/// Fails with [`Error::RankDeficient`] naming the first basis column that
/// is linearly dependent on the ones before it.
pub fn fit_perf_model(samples: &[CalibrationSample]) -> Result<PerfModel> {
    const P: usize = 5;
    let m = samples.len();
    if m < P {
        return Err(Error::TooFewSamples(m));
    }
    // Column-major design matrix.
    let mut a = vec![[0.0f64; P]; m];
    let mut rhs = Vec::with_capacity(m);
    for (row, s) in a.iter_mut().zip(samples) {
        *row = basis_row(s.x as f64, s.y as f64);
        rhs.push(s.perf);
    }
    let col_norm: Vec<f64> = (0..P).map(|k| a.iter().map(|r| r[k] * r[k]).sum::<f64>().sqrt()).collect();

    let mut diag = [0.0f64; P];
    for k in 0..P {
        let norm = a[k..].iter().map(|r| r[k] * r[k]).sum::<f64>().sqrt();
        if col_norm[k] == 0.0 || norm <= RANK_TOL * col_norm[k] {
            return Err(Error::RankDeficient { column: BASIS[k] });
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        // v = x - alpha·e1, stored in place of column k.
        a[k][k] -= alpha;
        let vnorm2: f64 = a[k..].iter().map(|r| r[k] * r[k]).sum();
        for j in k + 1..P {
            let dot: f64 = a[k..].iter().map(|r| r[k] * r[j]).sum();
            let f = 2.0 * dot / vnorm2;
            for r in a[k..].iter_mut() {
                r[j] -= f * r[k];
            }
        }
        let dot: f64 = a[k..].iter().zip(&rhs[k..]).map(|(r, b)| r[k] * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (r, b) in a[k..].iter().zip(rhs[k..].iter_mut()) {
            *b -= f * r[k];
        }
        diag[k] = alpha;
    }

    let mut coef = [0.0f64; P];
    for k in (0..P).rev() {
        let mut s = rhs[k];
        for j in k + 1..P {
            s -= a[k][j] * coef[j];
        }
        coef[k] = s / diag[k];
    }
    let model = PerfModel::new(coef);
    if !model.is_finite() {
        return Err(Error::Calibration("fitted coefficients are not finite".into()));
    }
    Ok(model)
}

/// Exhaustive argmax of the model over `x + y ≤ total`, `(x, y) ≠ (0, 0)`.
/// Ties prefer the larger `x + y`, then the larger `x`.
pub fn select_threads(m: &PerfModel, total: usize) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut best_perf = f64::NEG_INFINITY;
    for x in 0..=total {
        for y in 0..=total - x {
            if x == 0 && y == 0 {
                continue;
            }
            let p = predict(m, x, y);
            let better = p > best_perf
                || (p == best_perf && (x + y, x) > (best.0 + best.1, best.0));
            if better {
                best = (x, y);
                best_perf = p;
            }
        }
    }
    if best == (0, 0) {
        // Only reachable with total = 0.
        best = (1, 0);
    }
    best
}

/// Row boundary equalizing work over capability:
/// `r_b·TP_neon·t_neon = (r_total − r_b)·TP_sme·t_sme`, rounded half-up and
/// clamped to `[0, r_total]`.
pub fn solve_row_boundary(r_total: usize, tp: ThroughputEstimate, t_neon: usize, t_sme: usize) -> Result<usize> {
    if r_total == 0 {
        return Ok(0);
    }
    match (t_neon, t_sme) {
        (0, 0) => return Err(Error::Calibration("both thread counts are zero".into())),
        (0, _) => return Ok(0),
        (_, 0) => return Ok(r_total),
        _ => {}
    }
    if !(tp.tp_neon > 0.0 && tp.tp_sme > 0.0 && tp.tp_neon.is_finite() && tp.tp_sme.is_finite()) {
        return Err(Error::Calibration(format!("throughputs must be positive and finite, got {tp:?}")));
    }
    let neon = tp.tp_neon * t_neon as f64;
    let sme = tp.tp_sme * t_sme as f64;
    let rb = (r_total as f64 * sme / (neon + sme) + 0.5).floor();
    Ok((rb.max(0.0) as usize).min(r_total))
}

/// Default calibration candidates for a budget of `total` threads: both
/// axes and the budget frontier over powers of two up to `total`.
pub fn default_candidates(total: usize) -> Vec<(usize, usize)> {
    let mut steps: Vec<usize> = std::iter::successors(Some(1usize), |s| s.checked_mul(2))
        .take_while(|&s| s <= total)
        .collect();
    if total > 0 && steps.last() != Some(&total) {
        steps.push(total);
    }
    let mut out = Vec::new();
    let mut push = |c: (usize, usize)| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    for &s in &steps {
        push((s, 0));
        push((0, s));
    }
    for &s in &steps {
        if s < total {
            push((s, total - s));
            push((total - s, s));
        }
    }
    out
}

/// Source of timing measurements used by calibration.
pub trait Machine {
    /// Total cores available.
    fn core_budget(&self) -> usize;
    /// Rows of the matrix being scheduled.
    fn nrows(&self) -> usize;
    /// Single-threaded per-path throughput.
    fn path_throughput(&mut self) -> Result<ThroughputEstimate>;
    /// Measured GFLOPS of one hybrid execution.
    fn measure(&mut self, decision: &ScheduleDecision) -> Result<f64>;
}

/// Measures every candidate in order (duplicates are measured again).
pub fn calibrate_on<M: Machine>(machine: &mut M, candidates: &[(usize, usize)]) -> Result<Vec<CalibrationSample>> {
    if candidates.is_empty() {
        return Err(Error::Calibration("no candidate configurations".into()));
    }
    let budget = machine.core_budget();
    for &(x, y) in candidates {
        if x + y > budget {
            return Err(Error::Calibration(format!("candidate ({x}, {y}) exceeds the core budget {budget}")));
        }
        if x + y == 0 {
            return Err(Error::Calibration("candidate (0, 0) runs nothing".into()));
        }
    }
    let tp = machine.path_throughput()?;
    let nrows = machine.nrows();
    candidates
        .iter()
        .map(|&(x, y)| {
            let r_boundary = solve_row_boundary(nrows, tp, x, y)?;
            let perf = machine.measure(&ScheduleDecision { t_neon: x, t_sme: y, r_boundary })?;
            Ok(CalibrationSample { x, y, perf })
        })
        .collect()
}

/// Repetition counts for wall-clock calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalibrationOptions {
    pub threads_total: usize,
    pub warmup: usize,
    pub reps: usize,
    /// Rows timed for the per-path throughput probe.
    pub probe_rows: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { threads_total: 1, warmup: 1, reps: 3, probe_rows: 1024 }
    }
}

/// Runs real SpMMs and times them with the wall clock.
pub struct WallClockMachine<'a, T: KernelElement> {
    a: &'a CsrMatrix<T>,
    b: &'a DenseMatrix<T>,
    cfg: KernelConfig,
    opts: CalibrationOptions,
}

impl<'a, T: KernelElement> WallClockMachine<'a, T> {
    pub fn new(a: &'a CsrMatrix<T>, b: &'a DenseMatrix<T>, cfg: KernelConfig, opts: CalibrationOptions) -> Self {
        WallClockMachine { a, b, cfg, opts }
    }

    /// Median GFLOPS of `reps` timed runs after `warmup` untimed ones.
    fn time_split(&self, a: &CsrMatrix<T>, d: &ScheduleDecision) -> Result<f64> {
        let lanes = self.cfg.engine.lanes(T::PRECISION);
        let m = convert_csr_to_loops(a, d.r_boundary, lanes)?;
        let flops = flop_count(&m, self.b.ncols()) as f64;
        for _ in 0..self.opts.warmup {
            spmm_loops(&m, self.b, d, &self.cfg)?;
        }
        let mut gflops = Vec::with_capacity(self.opts.reps.max(1));
        for _ in 0..self.opts.reps.max(1) {
            let t = Instant::now();
            let c = spmm_loops(&m, self.b, d, &self.cfg)?;
            let secs = t.elapsed().as_secs_f64().max(1e-9);
            std::hint::black_box(c);
            gflops.push(flops / secs / 1e9);
        }
        Ok(median(&mut gflops))
    }
}

impl<T: KernelElement> Machine for WallClockMachine<'_, T> {
    fn core_budget(&self) -> usize {
        self.opts.threads_total
    }

    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn path_throughput(&mut self) -> Result<ThroughputEstimate> {
        let n = self.a.nrows();
        let rows = self.opts.probe_rows.clamp(1, n.max(1)).min(n);
        let start = (n - rows) / 2;
        let probe = self.a.slice_rows(start..start + rows)?;
        if probe.nnz() == 0 {
            return Ok(ThroughputEstimate { tp_neon: 1.0, tp_sme: 1.0 });
        }
        let tp_neon = self.time_split(&probe, &ScheduleDecision { t_neon: 1, t_sme: 0, r_boundary: rows })?;
        let tp_sme = self.time_split(&probe, &ScheduleDecision { t_neon: 0, t_sme: 1, r_boundary: 0 })?;
        Ok(ThroughputEstimate { tp_neon, tp_sme })
    }

    fn measure(&mut self, d: &ScheduleDecision) -> Result<f64> {
        // An empty part needs no workers.
        let mut d = *d;
        if d.r_boundary == 0 {
            d.t_neon = 0;
        }
        if d.r_boundary == self.a.nrows() {
            d.t_sme = 0;
        }
        if d.t_neon == 0 && d.t_sme == 0 {
            d.t_neon = 1;
        }
        self.time_split(self.a, &d)
    }
}

/// Wall-clock calibration of `a · b` over `candidates`.
pub fn calibrate<T: KernelElement>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    candidates: &[(usize, usize)],
    cfg: &KernelConfig,
    opts: CalibrationOptions,
) -> Result<Vec<CalibrationSample>> {
    calibrate_on(&mut WallClockMachine::new(a, b, *cfg, opts), candidates)
}

/// Result of the full scheduling flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePlan {
    pub model: PerfModel,
    pub decision: ScheduleDecision,
    pub samples: Vec<CalibrationSample>,
    pub throughput: ThroughputEstimate,
    /// False when the samples could not support a full fit and the best
    /// measured candidate was used directly.
    pub fitted: bool,
}

/// Calibrate, fit, select threads, then split rows for the chosen threads.
///
/// When the candidate set cannot determine all five coefficients (budgets
/// of one thread, for instance), the best measured candidate is selected
/// and the model degenerates to the constant `a0 = best perf`.
pub fn plan_schedule<M: Machine>(machine: &mut M, candidates: &[(usize, usize)]) -> Result<SchedulePlan> {
    let samples = calibrate_on(machine, candidates)?;
    let total = machine.core_budget();
    let (model, (t_neon, t_sme), fitted) = match fit_perf_model(&samples) {
        Ok(model) => (model, select_threads(&model, total), true),
        Err(Error::RankDeficient { .. }) | Err(Error::TooFewSamples(_)) => {
            let best = samples
                .iter()
                .copied()
                .reduce(|a, b| if b.perf > a.perf { b } else { a })
                .expect("calibrate_on rejects empty candidate lists");
            (PerfModel::new([best.perf, 0.0, 0.0, 0.0, 0.0]), (best.x, best.y), false)
        }
        Err(e) => return Err(e),
    };
    let throughput = machine.path_throughput()?;
    let r_boundary = solve_row_boundary(machine.nrows(), throughput, t_neon, t_sme)?;
    Ok(SchedulePlan { model, decision: ScheduleDecision { t_neon, t_sme, r_boundary }, samples, throughput, fitted })
}

/// Cached schedule: the JSON document persisted per matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDocument {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub t_neon: usize,
    pub t_sme: usize,
    pub r_boundary: usize,
    pub svl_bits: usize,
    pub precision: Precision,
}

impl ScheduleDocument {
    pub fn new(model: &PerfModel, decision: &ScheduleDecision, engine: &EngineConfig, precision: Precision) -> Self {
        ScheduleDocument {
            a0: model.a0,
            a1: model.a1,
            a2: model.a2,
            a3: model.a3,
            a4: model.a4,
            t_neon: decision.t_neon,
            t_sme: decision.t_sme,
            r_boundary: decision.r_boundary,
            svl_bits: engine.svl_bits(),
            precision,
        }
    }

    pub fn model(&self) -> PerfModel {
        PerfModel::new([self.a0, self.a1, self.a2, self.a3, self.a4])
    }

    pub fn decision(&self) -> ScheduleDecision {
        ScheduleDecision { t_neon: self.t_neon, t_sme: self.t_sme, r_boundary: self.r_boundary }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScheduleDocument = serde_json::from_str(text).map_err(|e| Error::Schedule(e.to_string()))?;
        if !doc.model().is_finite() {
            return Err(Error::Schedule("coefficients must be finite".into()));
        }
        EngineConfig::new(doc.svl_bits).map_err(|e| Error::Schedule(e.to_string()))?;
        Ok(doc)
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
