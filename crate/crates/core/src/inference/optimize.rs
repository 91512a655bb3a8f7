//! Nelder-Mead simplex minimization.

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Edge length of the initial simplex around the start point.
    pub step: f64,
    pub max_evals: usize,
    /// Stop once the spread of objective values across the simplex falls
    /// below `f_tol * (1 + |f_best|)` and its diameter below `x_tol`.
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { step: 0.3, max_evals: 4000, f_tol: 1e-12, x_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f`; non-finite values are treated as `+inf`.
    pub fn minimize(&self, f: impl Fn(&[f64]) -> f64, start: &[f64]) -> Minimum {
        let dim = start.len();
        let counter = std::cell::Cell::new(0usize);
        let eval = |x: &[f64]| {
            counter.set(counter.get() + 1);
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if dim == 0 {
            let value = eval(start);
            return Minimum { x: vec![], value, evals: counter.get(), converged: true };
        }

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(start.to_vec());
        for i in 0..dim {
            let mut v = start.to_vec();
            v[i] += self.step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut converged = false;

        while counter.get() < self.max_evals {
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let (best, worst) = (values[0], values[dim]);
            let diameter = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if best.is_finite() && (worst - best) <= self.f_tol * (1.0 + best.abs()) && diameter <= self.x_tol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> =
                (0..dim).map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (c - w)).collect() };

            let reflected = along(alpha);
            let fr = eval(&reflected);
            if fr < best {
                let expanded = along(gamma);
                let fe = eval(&expanded);
                if fe < fr {
                    simplex[dim] = expanded;
                    values[dim] = fe;
                } else {
                    simplex[dim] = reflected;
                    values[dim] = fr;
                }
                continue;
            }
            if fr < values[dim - 1] {
                simplex[dim] = reflected;
                values[dim] = fr;
                continue;
            }
            let (contracted, fc) = if fr < worst {
                let c = along(rho);
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = along(-rho);
                let fc = eval(&c);
                (c, fc)
            };
            if fc < worst.min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
                continue;
            }
            let anchor = simplex[0].clone();
            for i in 1..=dim {
                simplex[i] = anchor.iter().zip(&simplex[i]).map(|(a, v)| a + sigma * (v - a)).collect();
                values[i] = eval(&simplex[i]);
            }
        }

        let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        Minimum { x: simplex[best].clone(), value: values[best], evals: counter.get(), converged }
    }
}
