//! Small dense two-phase simplex with Bland's rule.
//!
//! Sized for the decoy feasibility problem (tens of variables, under a
//! hundred rows); no attempt is made at sparse or revised updates.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 50_000;

/// Minimise `objective · x` subject to `constraints` and `x ≥ 0`.
///
/// Rows are rescaled to unit max-norm before solving, so coefficients of
/// very different magnitude (Poisson weights next to unit bounds) are fine.
pub fn minimize(objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = objective.len();
    let m = constraints.len();

    // Normalise: unit max-norm rows, non-negative right-hand sides.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
    for c in constraints {
        assert_eq!(c.coefficients.len(), n, "constraint width");
        let norm = c
            .coefficients
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(c.rhs.abs());
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        let mut a: Vec<f64> = c.coefficients.iter().map(|v| v * s).collect();
        let mut b = c.rhs * s;
        let mut rel = c.relation;
        if b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            b = -b;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push((a, rel, b));
    }

    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let width = n + n_slack + n_art;
    let rhs_col = width;
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack = n;
    let mut art = n + n_slack;
    for (i, (a, rel, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][rhs_col] = *b;
        match rel {
            Relation::Le => {
                t[i][slack] = 1.0;
                basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                t[i][slack] = -1.0;
                slack += 1;
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                t[i][art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
    }
    let is_art = |j: usize| j >= n + n_slack && j < width;

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        phase1[n + n_slack..width].fill(1.0);
        if run(&mut t, &mut basis, &phase1, width, &|_| true) == Step::Unbounded {
            return LpOutcome::Infeasible;
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| is_art(j))
            .map(|(i, _)| t[i][rhs_col])
            .sum();
        if infeas > 1e-8 {
            return LpOutcome::Infeasible;
        }
        // Pivot zero-level artificials out where possible.
        for i in 0..m {
            if is_art(basis[i]) {
                if let Some(j) = (0..n + n_slack).find(|&j| t[i][j].abs() > EPS) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(objective);
    let allowed = |j: usize| !is_art(j);
    match run(&mut t, &mut basis, &cost, width, &allowed) {
        Step::Unbounded => LpOutcome::Unbounded,
        Step::Optimal => {
            let mut x = vec![0.0; n];
            for (i, &j) in basis.iter().enumerate() {
                if j < n {
                    x[j] = t[i][rhs_col];
                }
            }
            let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            LpOutcome::Optimal { value, x }
        }
    }
}

#[derive(PartialEq)]
enum Step {
    Optimal,
    Unbounded,
}

fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], width: usize, allowed: &dyn Fn(usize) -> bool) -> Step {
    // Reduced-cost row, updated alongside the tableau by each pivot.
    let mut reduced: Vec<f64> = (0..=width)
        .map(|j| {
            let c = if j < width { cost[j] } else { 0.0 };
            c - basis.iter().enumerate().map(|(i, &b)| cost[b] * t[i][j]).sum::<f64>()
        })
        .collect();
    for _ in 0..MAX_PIVOTS {
        let entering = (0..width).find(|&j| allowed(j) && reduced[j] < -EPS);
        let Some(j) = entering else {
            return Step::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][j] > EPS {
                let ratio = t[i][width] / t[i][j];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - EPS || ((ratio - best).abs() <= EPS && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let Some((i, _)) = leave else {
            return Step::Unbounded;
        };
        pivot(t, basis, i, j);
        let f = reduced[j];
        for (v, pv) in reduced.iter_mut().zip(&t[i]) {
            *v -= f * pv;
        }
    }
    // Bland's rule cannot cycle; hitting the cap means numerical trouble.
    Step::Optimal
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}
