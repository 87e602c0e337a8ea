//! Bounded Nelder–Mead simplex minimiser.
//!
//! Uses the dimension-adaptive coefficients of Gao & Han (2012), which keep
//! the simplex from collapsing prematurely above ~10 parameters. Box bounds
//! are enforced by projecting every trial point onto the box.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex is within this distance (per coordinate) of
    /// the best one.
    pub x_tol: f64,
    /// Relative size of the initial simplex edges.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 20_000,
            f_tol: 1e-14,
            x_tol: 1e-9,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    fn project(&self, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = v.clamp(self.lower, self.upper);
        }
    }
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: Bounds, opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Minimum {
            x: Vec::new(),
            f: f(&[]),
            evals: 1,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    bounds.project(&mut start);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let step = if v[i].abs() > 0.0 {
            opts.initial_step * v[i].abs()
        } else {
            opts.initial_step
        };
        v[i] += step;
        if v[i] > bounds.upper {
            v[i] = start[i] - step;
        }
        bounds.project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let spread = values[worst] - values[best];
        let size = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if evals >= opts.max_evals || (spread.abs() <= opts.f_tol && size <= opts.x_tol.max(1e-300))
            || size <= opts.x_tol
        {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &idx in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += v / nf;
            }
        }

        for j in 0..n {
            trial[j] = centroid[j] + alpha * (centroid[j] - simplex[worst][j]);
        }
        bounds.project(&mut trial);
        let fr = eval(&trial, &mut evals);

        if fr < values[best] {
            for j in 0..n {
                trial2[j] = centroid[j] + beta * (trial[j] - centroid[j]);
            }
            bounds.project(&mut trial2);
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        // Contraction: outside if the reflection improved on the worst point.
        let outside = fr < values[worst];
        for j in 0..n {
            trial2[j] = if outside {
                centroid[j] + gamma * (trial[j] - centroid[j])
            } else {
                centroid[j] - gamma * (centroid[j] - simplex[worst][j])
            };
        }
        bounds.project(&mut trial2);
        let fc = eval(&trial2, &mut evals);
        if fc < fr.min(values[worst]) {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let anchor = simplex[best].clone();
        for &idx in &order[1..] {
            for j in 0..n {
                simplex[idx][j] = anchor[j] + delta * (simplex[idx][j] - anchor[j]);
            }
            bounds.project(&mut simplex[idx]);
            values[idx] = eval(&simplex[idx], &mut evals);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evals,
    }
}

/// Repeats Nelder–Mead from its own optimum until a restart stops improving;
/// a cheap guard against a prematurely degenerate simplex.
pub fn nelder_mead_polished<F>(
    mut f: F,
    x0: &[f64],
    bounds: Bounds,
    opts: &NelderMeadOptions,
    max_restarts: usize,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead(&mut f, x0, bounds, opts);
    let mut total = best.evals;
    for _ in 0..max_restarts {
        let next = nelder_mead(&mut f, &best.x, bounds, opts);
        total += next.evals;
        let improved = next.f < best.f - 1e-15;
        if next.f <= best.f {
            best = next;
        }
        if !improved {
            break;
        }
    }
    best.evals = total;
    best
}
