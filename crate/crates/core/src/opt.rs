//! Small derivative-free optimizer used for GP hyperparameter fitting and
//! MAP polishing.

use nalgebra::DVector;

/// Nelder-Mead minimisation. Deterministic given the starting point.
/// Returns the best vertex found and its objective value.
pub fn nelder_mead<F>(
    f: &F,
    x0: &DVector<f64>,
    initial_step: f64,
    max_evals: usize,
) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..d {
        let mut x = x0.clone();
        x[i] += initial_step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = d + 1;

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = DVector::zeros(d);
        for v in simplex.iter().take(d) {
            centroid += &v.0;
        }
        centroid /= d as f64;

        let reflected = &centroid + (&centroid - &simplex[d].0) * alpha;
        let fr = f(&reflected);
        evals += 1;

        if fr < simplex[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * gamma;
            let fe = f(&expanded);
            evals += 1;
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = &centroid + (&simplex[d].0 - &centroid) * rho;
            let fc = f(&contracted);
            evals += 1;
            if fc < simplex[d].1 {
                simplex[d] = (contracted, fc);
            } else {
                let best_point = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = &best_point + (&v.0 - &best_point) * sigma;
                    v.1 = f(&v.0);
                }
                evals += d;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex[0].clone()
}
