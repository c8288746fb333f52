//! Derivative-free minimization (Nelder–Mead with restarts).

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub initial_step: f64,
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_evaluations: usize,
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { initial_step: 0.1, x_tol: 1e-13, f_tol: 1e-15, max_evaluations: 4000, restarts: 6 }
    }
}

impl NelderMead {
    /// Minimizes `f` from `start`; each restart rebuilds an axis simplex around
    /// the incumbent with a step tied to the previous simplex size.
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, start: &[f64]) -> Minimum {
        let mut best = Minimum { value: f(start), x: start.to_vec(), evaluations: 1 };
        let mut step = self.initial_step;
        for _ in 0..=self.restarts {
            let (x, value, evals, size) = self.run(&f, &best.x, step);
            best.evaluations += evals;
            let improved = value < best.value - self.f_tol * best.value.abs().max(1e-300);
            if value <= best.value {
                best.x = x;
                best.value = value;
            }
            if !improved || best.evaluations >= self.max_evaluations {
                break;
            }
            step = (10.0 * size).clamp(self.x_tol * 10.0, self.initial_step);
        }
        best
    }

    fn run(&self, f: &impl Fn(&[f64]) -> f64, start: &[f64], step: f64) -> (Vec<f64>, f64, usize, f64) {
        let m = start.len();
        let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
        for i in 0..m {
            let mut v = start.to_vec();
            v[i] += step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
        let mut evals = m + 1;
        loop {
            let mut order: Vec<usize> = (0..=m).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let size = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            let spread = values[m] - values[0];
            if (size <= self.x_tol && spread <= self.f_tol * values[0].abs().max(1e-300))
                || size <= self.x_tol * 1e-3
                || evals >= self.max_evaluations
            {
                return (simplex[0].clone(), values[0], evals, size);
            }

            let centroid: Vec<f64> =
                (0..m).map(|i| simplex[..m].iter().map(|v| v[i]).sum::<f64>() / m as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[m]).map(|(c, w)| c + t * (c - w)).collect() };
            let reflected = along(1.0);
            let fr = f(&reflected);
            evals += 1;
            if fr < values[0] {
                let expanded = along(2.0);
                let fe = f(&expanded);
                evals += 1;
                if fe < fr {
                    simplex[m] = expanded;
                    values[m] = fe;
                } else {
                    simplex[m] = reflected;
                    values[m] = fr;
                }
                continue;
            }
            if fr < values[m - 1] {
                simplex[m] = reflected;
                values[m] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[m] {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            };
            evals += 1;
            if fc < values[m].min(fr) {
                simplex[m] = contracted;
                values[m] = fc;
                continue;
            }
            let best = simplex[0].clone();
            for i in 1..=m {
                simplex[i] = simplex[i].iter().zip(&best).map(|(v, b)| b + 0.5 * (v - b)).collect();
                values[i] = f(&simplex[i]);
            }
            evals += m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let nm = NelderMead { max_evaluations: 20000, ..Default::default() };
        let m = nm.minimize(f, &[-1.2, 1.0]);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn minimizes_kinked_objective() {
        let f = |x: &[f64]| (x[0] - 0.3).abs().max((x[0] + 0.1).abs() * 0.5);
        let m = NelderMead::default().minimize(f, &[0.0]);
        // Kink where x − 0.3 = −(x + 0.1)/2, i.e. x = 1/6.
        assert!((m.x[0] - 1.0 / 6.0).abs() < 1e-10);
    }
}
