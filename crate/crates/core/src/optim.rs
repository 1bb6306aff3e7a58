//! Nelder–Mead simplex minimization.

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// Stop once the largest vertex-to-vertex distance falls below this.
    pub xtol: f64,
    /// Evaluation cap per unit of dimension.
    pub evals_per_dim: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { initial_step: 0.1, xtol: 1e-4, evals_per_dim: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`, so
/// infeasible regions simply repel the simplex.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], options: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let max_evals = options.evals_per_dim * n.max(1);
    let mut evaluations = 0;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    if n == 0 {
        let value = eval(x0, &mut evaluations);
        return Minimum { x: Vec::new(), value, evaluations, converged: true };
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += options.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();

    let mut converged = false;
    loop {
        // Stable sort keeps earlier vertices first on ties.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < options.xtol {
            converged = true;
            break;
        }
        if evaluations >= max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (w - c))
                .collect()
        };

        let reflected = toward(-alpha);
        let f_r = eval(&reflected, &mut evaluations);
        if f_r < values[0] {
            let expanded = toward(-gamma);
            let f_e = eval(&expanded, &mut evaluations);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = toward(-rho);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        } else {
            let c = toward(rho);
            let fc = eval(&c, &mut evaluations);
            (c, fc)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            values[i] = eval(&shrunk, &mut evaluations);
            simplex[i] = shrunk;
        }
    }

    Minimum { x: simplex[0].clone(), value: values[0], evaluations, converged }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d = 0.0_f64;
    for (i, a) in simplex.iter().enumerate() {
        for b in &simplex[i + 1..] {
            let dist = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    d
}
