use half::f16;
use loops_spmm::engine::{EngineConfig, LaneVector, TileAccumulator};
use loops_spmm::format::{convert_csr_to_loops, decode_loops, encode_loops, loops_to_csr};
use loops_spmm::kernels::{spmm_loops, KernelConfig};
use loops_spmm::scheduler::{
    fit_perf_model, predict, select_threads, solve_row_boundary, CalibrationSample, PerfModel, ThroughputEstimate,
};
use loops_spmm::sparse::{parse_matrix_market, random_dense, reference_spmm, write_matrix_market, CooEntry, CsrMatrix};
use loops_spmm::verify::{max_scaled_error, threads_for_split, tolerance};
use loops_spmm::Precision;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn csr_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = CsrMatrix<f64>> {
    (0..=max_rows, 1..=max_cols).prop_flat_map(|(nr, nc)| {
        let entry = (0..nr.max(1), 0..nc, -16i32..=16).prop_filter("nonzero", |e| e.2 != 0);
        proptest::collection::vec(entry, 0..=(nr * nc).min(200)).prop_map(move |es| {
            let coo: Vec<_> = if nr == 0 {
                Vec::new()
            } else {
                es.into_iter().map(|(row, col, v)| CooEntry { row, col, val: v as f64 / 4.0 }).collect()
            };
            CsrMatrix::from_coo(nr, nc, &coo).unwrap()
        })
    })
}

fn lanes_strategy() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 3, 4, 8, 16, 32, 64])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conversion_is_lossless(a in csr_strategy(40, 30), lanes in lanes_strategy(), frac in 0.0f64..=1.0) {
        let rb = (frac * a.nrows() as f64) as usize;
        let m = convert_csr_to_loops(&a, rb, lanes).unwrap();
        prop_assert_eq!(m.nnz(), a.nnz());
        prop_assert_eq!(loops_to_csr(&m), a);
    }

    #[test]
    fn every_tile_holds_a_nonzero(a in csr_strategy(40, 30), lanes in lanes_strategy(), frac in 0.0f64..=1.0) {
        let rb = (frac * a.nrows() as f64) as usize;
        let m = convert_csr_to_loops(&a, rb, lanes).unwrap();
        let p = m.bcsr_part();
        prop_assert!(p.ntiles() <= p.nnz());
        prop_assert!(p.ntiles() * lanes - p.nnz() <= p.ntiles() * (lanes - 1));
        prop_assert_eq!(m.csr_part().nnz() + p.nnz(), a.nnz());
    }

    #[test]
    fn csr_share_grows_with_boundary(a in csr_strategy(40, 30), lanes in lanes_strategy()) {
        let mut last = 0;
        for rb in 0..=a.nrows() {
            let m = convert_csr_to_loops(&a, rb, lanes).unwrap();
            prop_assert!(m.csr_part().nnz() >= last);
            last = m.csr_part().nnz();
        }
        prop_assert_eq!(last, a.nnz());
    }

    #[test]
    fn matrix_market_round_trips(a in csr_strategy(30, 30)) {
        let text = write_matrix_market(&a);
        prop_assert_eq!(parse_matrix_market(text.as_bytes()).unwrap(), a);
    }

    #[test]
    fn dump_round_trips(a in csr_strategy(30, 30), lanes in lanes_strategy(), frac in 0.0f64..=1.0,
                        sched in proptest::option::of((0usize..8, 0usize..8))) {
        let rb = (frac * a.nrows() as f64) as usize;
        let m = convert_csr_to_loops(&a.cast::<f32>(), rb, lanes).unwrap();
        let bytes = encode_loops(&m, sched);
        let (back, d) = decode_loops::<f32>(&bytes).unwrap();
        prop_assert_eq!(back, m);
        prop_assert_eq!(d, sched);
        prop_assert!(decode_loops::<f64>(&bytes).is_err());
    }

    #[test]
    fn hybrid_product_matches_reference(a in csr_strategy(48, 24), frac in 0.0f64..=1.0,
                                        tn in 1usize..4, ts in 1usize..4, tif in 1usize..=8, svl_idx in 0usize..4) {
        let engine = EngineConfig::new(EngineConfig::SUPPORTED_SVL[svl_idx]).unwrap();
        let rb = (frac * a.nrows() as f64) as usize;
        let b = random_dense::<f64>(a.ncols(), 13, a.nnz() as u64);
        let m = convert_csr_to_loops(&a, rb, engine.cntd()).unwrap();
        let cfg = KernelConfig::new(engine, tif, 13);
        let c = spmm_loops(&m, &b, &threads_for_split(a.nrows(), rb, tn, ts), &cfg).unwrap();
        let err = max_scaled_error(&a, &b, &c, &reference_spmm(&a, &b).unwrap()).unwrap();
        prop_assert!(err <= tolerance(Precision::Fp64), "error {}", err);
    }

    #[test]
    fn fp16_product_is_thread_and_window_invariant(a in csr_strategy(48, 24), frac in 0.0f64..=1.0,
                                                   tn in 1usize..4, ts in 1usize..4, tif in 1usize..=4) {
        let a = a.cast::<f16>();
        let engine = EngineConfig::new(128).unwrap();
        let rb = (frac * a.nrows() as f64) as usize;
        let b = random_dense::<f16>(a.ncols(), 20, 5);
        let m = convert_csr_to_loops(&a, rb, engine.cnth()).unwrap();
        let seq = spmm_loops(&m, &b, &threads_for_split(a.nrows(), rb, 1, 1), &KernelConfig::new(engine, 1, 20)).unwrap();
        let par = spmm_loops(&m, &b, &threads_for_split(a.nrows(), rb, tn, ts), &KernelConfig::new(engine, tif, 20)).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn fmopa_matches_scalar_update(seed in any::<u64>(), dim in 1usize..=16) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c0: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut acc = TileAccumulator::from_cells(dim, c0.clone()).unwrap();
        acc.fmopa(&LaneVector::new(a.clone()), &LaneVector::new(b.clone())).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                prop_assert_eq!(acc.get(i, j).to_bits(), (c0[i * dim + j] + a[i] * b[j]).to_bits());
            }
        }
    }

    #[test]
    fn fit_matches_pseudo_inverse(coeffs in proptest::array::uniform5(-20.0f64..20.0),
                                  noise in proptest::collection::vec(-0.5f64..0.5, 36)) {
        let grid = [0usize, 1, 2, 4, 6, 8];
        let mut samples = Vec::new();
        for &x in &grid {
            for &y in &grid {
                let perf = predict(&PerfModel::new(coeffs), x, y) + noise[samples.len()];
                samples.push(CalibrationSample { x, y, perf });
            }
        }
        let fit = fit_perf_model(&samples).unwrap().coefficients();
        let design = DMatrix::from_fn(samples.len(), 5, |r, c| {
            let (x, y) = (samples[r].x as f64, samples[r].y as f64);
            [1.0, x, y, x * x, y * y][c]
        });
        let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.perf));
        let oracle = design.svd(true, true).pseudo_inverse(1e-12).unwrap() * rhs;
        let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (g, w) in fit.iter().zip(oracle.iter()) {
            prop_assert!((g - w).abs() <= 1e-9 * scale, "{} vs {}", g, w);
        }
    }

    #[test]
    fn argmax_is_scale_invariant(coeffs in proptest::array::uniform5(-5.0f64..5.0), exp in -20i32..20, total in 1usize..=12) {
        let m = PerfModel::new(coeffs);
        let s = 2f64.powi(exp);
        let scaled = PerfModel::new(coeffs.map(|c| c * s));
        let got = select_threads(&m, total);
        prop_assert_eq!(select_threads(&scaled, total), got);
        prop_assert!(got != (0, 0) && got.0 + got.1 <= total);
    }

    #[test]
    fn boundary_balances_work(r_total in 0usize..1_000_000, tpn in 0.001f64..1e3, tps in 0.001f64..1e3,
                              tn in 1usize..64, ts in 1usize..64) {
        let tp = ThroughputEstimate { tp_neon: tpn, tp_sme: tps };
        let rb = solve_row_boundary(r_total, tp, tn, ts).unwrap();
        prop_assert!(rb <= r_total);
        let (wn, ws) = (tpn * tn as f64, tps * ts as f64);
        let residual = (rb as f64 * wn - (r_total - rb) as f64 * ws).abs();
        prop_assert!(residual <= wn.max(ws) * (1.0 + 1e-12));
    }
}
