//! Brute-force reference computations used by several test targets.
#![allow(dead_code)]

use pooltest_core::{DilutionModel, ProcedureConfig, ProcedureKind};

/// Expected per-subject (tests, false negatives, false positives) obtained by
/// walking every subject-status vector, every pool-test outcome sequence and
/// every vector of individual-test outcomes, weighting each leaf by its
/// probability.
pub fn enumerate_metrics(model: &DilutionModel, p: f64, config: &ProcedureConfig) -> (f64, f64, f64) {
    let kit = model.kit;
    let (n, r) = match config.kind {
        ProcedureKind::Individual => (1usize, 0u32),
        _ => (config.n as usize, config.r),
    };
    let mut tests = 0.0;
    let mut fns = 0.0;
    let mut fps = 0.0;
    for mask in 0u32..(1 << n) {
        let status: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let k = status.iter().filter(|&&s| s).count();
        let w_status: f64 = status.iter().map(|&s| if s { p } else { 1.0 - p }).product();

        // (probability, pool tests used, declared positive)
        let mut pool_paths: Vec<(f64, u32, bool)> = Vec::new();
        if r == 0 {
            pool_paths.push((1.0, 0, true));
        } else {
            let detect = if k == 0 {
                1.0 - kit.sp
            } else {
                model.sensitivity(n as u32, k as u32).unwrap()
            };
            let mut reach = 1.0;
            for round in 1..=r {
                pool_paths.push((reach * detect, round, true));
                reach *= 1.0 - detect;
                if round == r {
                    pool_paths.push((reach, round, false));
                }
            }
        }

        for (w_pool, pool_tests, positive) in pool_paths {
            let w = w_status * w_pool;
            if !positive {
                tests += w * f64::from(pool_tests);
                fns += w * k as f64;
                continue;
            }
            for outcome in 0u32..(1 << n) {
                let mut w_ind = 1.0;
                let mut f_n = 0.0;
                let mut f_p = 0.0;
                for (i, &s) in status.iter().enumerate() {
                    let says_positive = outcome >> i & 1 == 1;
                    w_ind *= match (s, says_positive) {
                        (true, true) => kit.se_i,
                        (true, false) => 1.0 - kit.se_i,
                        (false, true) => 1.0 - kit.sp,
                        (false, false) => kit.sp,
                    };
                    if s && !says_positive {
                        f_n += 1.0;
                    }
                    if !s && says_positive {
                        f_p += 1.0;
                    }
                }
                let ww = w * w_ind;
                tests += ww * f64::from(pool_tests + n as u32);
                fns += ww * f_n;
                fps += ww * f_p;
            }
        }
    }
    let n = n as f64;
    (tests / n, fns / n, fps / n)
}

/// O(m^2) dominance check on (tests, fn) pairs.
pub fn brute_force_front(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|a| {
            !points
                .iter()
                .any(|b| b.0 <= a.0 && b.1 <= a.1 && (b.0 < a.0 || b.1 < a.1))
        })
        .collect()
}
