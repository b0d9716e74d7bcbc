//! Benchmark harness with GFLOPS accounting.
//!
//! Only kernel execution is timed; conversion to the hybrid layout is
//! measured separately and reported as `convert_time`.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::format::{block_density, convert_csr_to_loops};
use crate::kernels::{flop_count, spmm_loops, KernelConfig, KernelElement};
use crate::precision::Precision;
use crate::scheduler::{median, ScheduleDecision};
use crate::sparse::{CsrMatrix, DenseMatrix};

/// Untimed runs before measurement.
pub const DEFAULT_WARMUP: usize = 5;
/// Timed runs.
pub const DEFAULT_REPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub matrix_id: String,
    pub precision: Precision,
    pub nnz: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub decision: ScheduleDecision,
    pub flops: u64,
    pub gflops_median: f64,
    pub gflops_mean: f64,
    pub gflops_all: Vec<f64>,
    /// Mean nonzeros per BCSR tile; `None` when the BCSR part is empty.
    pub block_density: Option<f64>,
    /// Seconds.
    pub convert_time: f64,
    /// Seconds.
    pub exec_time_median: f64,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "matrix_id,precision,nnz,N,t_neon,t_sme,r_boundary,flops,gflops_median,\
gflops_mean,block_density,convert_time,exec_time_median,gflops_all";

    /// One CSV record matching [`Self::CSV_HEADER`]; `gflops_all` is
    /// `;`-separated.
    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let id = if self.matrix_id.contains([',', '"', '\n']) {
            format!("\"{}\"", self.matrix_id.replace('"', "\"\""))
        } else {
            self.matrix_id.clone()
        };
        let density = self.block_density.map(|d| d.to_string()).unwrap_or_default();
        let all: Vec<String> = self.gflops_all.iter().map(|g| g.to_string()).collect();
        let _ = write!(
            s,
            "{id},{},{},{},{},{},{},{},{},{},{density},{},{},{}",
            self.precision,
            self.nnz,
            self.n,
            self.decision.t_neon,
            self.decision.t_sme,
            self.decision.r_boundary,
            self.flops,
            self.gflops_median,
            self.gflops_mean,
            self.convert_time,
            self.exec_time_median,
            all.join(";"),
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub reps: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { warmup: DEFAULT_WARMUP, reps: DEFAULT_REPS }
    }
}

/// Converts `a` under `decision`, then times `reps` hybrid SpMMs.
pub fn run_bench<T: KernelElement>(
    matrix_id: &str,
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    decision: &ScheduleDecision,
    cfg: &KernelConfig,
    opts: BenchOptions,
) -> Result<BenchReport> {
    let lanes = cfg.engine.lanes(T::PRECISION);
    let t = Instant::now();
    let m = convert_csr_to_loops(a, decision.r_boundary, lanes)?;
    let convert_time = t.elapsed().as_secs_f64();

    let n = b.ncols();
    let flops = flop_count(&m, n);
    for _ in 0..opts.warmup {
        std::hint::black_box(spmm_loops(&m, b, decision, cfg)?);
    }
    let reps = opts.reps.max(1);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        let c = spmm_loops(&m, b, decision, cfg)?;
        times.push(t.elapsed().as_secs_f64().max(1e-9));
        std::hint::black_box(c);
    }
    let gflops_all: Vec<f64> = times.iter().map(|&s| flops as f64 / s / 1e9).collect();
    let gflops_mean = gflops_all.iter().sum::<f64>() / reps as f64;
    let exec_time_median = median(&mut times.clone());
    Ok(BenchReport {
        matrix_id: matrix_id.to_string(),
        precision: T::PRECISION,
        nnz: m.nnz(),
        n,
        decision: *decision,
        flops,
        gflops_median: flops as f64 / exec_time_median / 1e9,
        gflops_mean,
        gflops_all,
        block_density: block_density(m.bcsr_part()).ok(),
        convert_time,
        exec_time_median,
    })
}
