//! Least-squares fit of the dilution parameters `(alpha, beta)`.
//!
//! Minimisation is a plain Nelder-Mead simplex search with restarts, run
//! from a fixed starting point so results are reproducible bit for bit.

use crate::dilution::{DilutionModel, LinearTerm, RatioOrientation, SensitivityObservation, TestKit};
use crate::error::{domain, BestSoFar, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub start: (f64, f64),
    /// Initial simplex edge lengths along alpha and beta.
    pub initial_step: (f64, f64),
    pub max_iterations: usize,
    /// Converged once every simplex vertex lies within this distance of the best one.
    pub step_tolerance: f64,
    pub orientation: RatioOrientation,
    pub linear_term: LinearTerm,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            start: (0.05, 0.0),
            initial_step: (0.01, 0.001),
            max_iterations: 100_000,
            step_tolerance: 1e-10,
            orientation: RatioOrientation::default(),
            linear_term: LinearTerm::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub model: DilutionModel,
    pub mse: f64,
    pub iterations: usize,
}

/// Mean squared error of the unclamped model against the observations.
pub fn mse(model: &DilutionModel, observations: &[SensitivityObservation]) -> f64 {
    let sum: f64 = observations
        .iter()
        .map(|o| {
            let d = model.raw_sensitivity(o.n, o.k) - o.se_observed;
            d * d
        })
        .sum();
    sum / observations.len() as f64
}

pub fn fit_dilution_model(observations: &[SensitivityObservation], kit: TestKit) -> Result<FitOutcome> {
    fit_dilution_model_with(observations, kit, &FitOptions::default())
}

pub fn fit_dilution_model_with(
    observations: &[SensitivityObservation],
    kit: TestKit,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    if observations.len() < 2 {
        return domain(format!("need at least 2 observations, got {}", observations.len()));
    }
    let build = |x: [f64; 2]| {
        DilutionModel::new(kit, x[0], x[1])
            .with_orientation(opts.orientation)
            .with_linear_term(opts.linear_term)
    };
    let objective = |x: [f64; 2]| {
        let v = mse(&build(x), observations);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut start = [opts.start.0, opts.start.1];
    let mut used = 0;
    let mut best_value = objective(start);
    // Restart from the incumbent until a fresh simplex cannot improve it.
    loop {
        let budget = opts.max_iterations - used;
        let run = nelder_mead(
            &objective,
            start,
            [opts.initial_step.0, opts.initial_step.1],
            budget,
            opts.step_tolerance,
        );
        used += run.iterations;
        if !run.converged {
            let model = build(run.best);
            return Err(Error::NonConvergence {
                iterations: used,
                best: BestSoFar {
                    alpha: model.alpha,
                    beta: model.beta,
                    mse: run.value,
                },
            });
        }
        let improved = run.value < best_value;
        let moved = dist(run.best, start) > opts.step_tolerance;
        start = run.best;
        best_value = best_value.min(run.value);
        if !(improved && moved) || used >= opts.max_iterations {
            break;
        }
    }
    Ok(FitOutcome {
        model: build(start),
        mse: objective(start),
        iterations: used,
    })
}

struct SimplexRun {
    best: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: &F,
    start: [f64; 2],
    step: [f64; 2],
    max_iterations: usize,
    tol: f64,
) -> SimplexRun {
    let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut values = simplex.map(f);
    let mut iterations = 0;

    loop {
        // Stable sort keeps the vertex order deterministic on ties.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let spread = dist(simplex[0], simplex[1]).max(dist(simplex[0], simplex[2]));
        if spread < tol {
            return SimplexRun {
                best: simplex[0],
                value: values[0],
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iterations {
            return SimplexRun {
                best: simplex[0],
                value: values[0],
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let worst = simplex[2];
        let reflected = lerp(centroid, worst, -1.0);
        let f_r = f(reflected);

        if f_r < values[0] {
            let expanded = lerp(centroid, worst, -2.0);
            let f_e = f(expanded);
            if f_e < f_r {
                simplex[2] = expanded;
                values[2] = f_e;
            } else {
                simplex[2] = reflected;
                values[2] = f_r;
            }
        } else if f_r < values[1] {
            simplex[2] = reflected;
            values[2] = f_r;
        } else {
            let (contracted, f_c) = if f_r < values[2] {
                let c = lerp(centroid, reflected, 0.5);
                (c, f(c))
            } else {
                let c = lerp(centroid, worst, 0.5);
                (c, f(c))
            };
            if f_c < values[2].min(f_r) {
                simplex[2] = contracted;
                values[2] = f_c;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
}
