//! Slow reference implementations used to cross-check the solvers.

use crate::error::Result;
use crate::fse::StageGame;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::netmodel::{
    attacker_strategy_set, defender_strategy_set, full_defender_set, restricted_attacker_set, transition, Action,
    GameConfig, NetworkState,
};
use crate::payoffs::{attacker_payoff, defender_payoff};

const TOL: f64 = 1e-9;

/// Solves `a x = b` for square `a` by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Best objective over the vertices of `{rows, x >= 0}`, or `None` when
/// there is no vertex.
fn best_vertex(objective: &[f64], rows: &[(Vec<f64>, Relation, f64)]) -> Option<(f64, Vec<f64>)> {
    let n = objective.len();
    let mut all: Vec<(Vec<f64>, Relation, f64)> = rows.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        all.push((e, Relation::Le, 0.0));
    }
    let forced: Vec<usize> = (0..all.len()).filter(|&i| all[i].1 == Relation::Eq).collect();
    let free: Vec<usize> = (0..all.len()).filter(|&i| all[i].1 == Relation::Le).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let take = n.saturating_sub(forced.len().min(n));
    let mut visit = |active: Vec<usize>| {
        let a: Vec<Vec<f64>> = active.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<f64> = active.iter().map(|&i| all[i].2).collect();
        let Some(x) = solve_square(a, b) else { return };
        let feasible = all.iter().all(|(row, rel, rhs)| {
            let lhs: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
            let scale = 1.0 + rhs.abs();
            match rel {
                Relation::Le => lhs <= rhs + TOL * scale,
                Relation::Eq => (lhs - rhs).abs() <= TOL * scale,
            }
        });
        if feasible {
            let v: f64 = objective.iter().zip(&x).map(|(c, y)| c * y).sum();
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, x));
            }
        }
    };
    if forced.len() >= n {
        combinations(forced.len(), n, |pick| visit(pick.iter().map(|&p| forced[p]).collect()));
    } else {
        combinations(free.len(), take, |pick| {
            let mut active = forced.clone();
            active.extend(pick.iter().map(|&p| free[p]));
            visit(active)
        });
    }
    best
}

/// Reference optimum of `lp` by enumerating every basic solution.
pub fn vertex_enumeration(lp: &LinearProgram) -> (LpStatus, f64) {
    let rows: Vec<(Vec<f64>, Relation, f64)> =
        lp.rows.iter().map(|r| (r.coeffs.clone(), r.relation, r.rhs)).collect();
    let Some((value, _)) = best_vertex(&lp.objective, &rows) else {
        return (LpStatus::Infeasible, 0.0);
    };
    // unbounded iff some normalised recession direction improves the objective
    let n = lp.vars();
    let mut cone: Vec<(Vec<f64>, Relation, f64)> =
        lp.rows.iter().map(|r| (r.coeffs.clone(), r.relation, 0.0)).collect();
    cone.push((vec![1.0; n], Relation::Eq, 1.0));
    match best_vertex(&lp.objective, &cone) {
        Some((slope, _)) if slope > TOL => (LpStatus::Unbounded, f64::INFINITY),
        _ => (LpStatus::Optimal, value),
    }
}

/// Leader value found by committing to every point of a grid on the
/// attacker's simplex, with the follower breaking ties in the leader's
/// favour. `steps` is the grid resolution per unit mass.
pub fn grid_commitment(game: &StageGame, steps: usize) -> Option<f64> {
    let m = game.attack_count();
    let n = game.response_count();
    let mut best: Option<f64> = None;
    let mut counts = vec![0usize; m];
    let mut q = vec![0.0; m];
    let mut follower = vec![0.0; n];
    grid_points(&mut counts, 0, steps, &mut |c| {
        for (qi, &ci) in q.iter_mut().zip(c) {
            *qi = ci as f64 / steps as f64;
        }
        for (k, v) in follower.iter_mut().enumerate() {
            *v = (0..m).filter(|&i| game.supported(i, k)).map(|i| q[i] * game.defender_payoff(i, k)).sum();
        }
        let top = follower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..n {
            let inside = (0..m).all(|i| c[i] == 0 || game.supported(i, j));
            if inside && follower[j] >= top - 1e-12 {
                let v: f64 = (0..m).map(|i| q[i] * game.attacker_payoff(i, j)).sum();
                if best.is_none_or(|b| v > b) {
                    best = Some(v);
                }
            }
        }
    });
    best
}

fn grid_points(counts: &mut Vec<usize>, i: usize, left: usize, f: &mut impl FnMut(&[usize])) {
    if i + 1 == counts.len() {
        counts[i] = left;
        f(counts);
        return;
    }
    for c in 0..=left {
        counts[i] = c;
        grid_points(counts, i + 1, left - c, f);
    }
}

/// Full stage game of `psi` for `stages` remaining stages, built from the
/// public strategy sets and payoffs with child values from plain recursion.
pub fn tree_stage_game(psi: &NetworkState, cfg: &GameConfig, stages: usize) -> Result<StageGame> {
    let mut attacks = attacker_strategy_set(psi);
    attacks.sort();
    let mut responses = full_defender_set(psi, cfg);
    responses.sort();
    let (m, n) = (attacks.len(), responses.len());
    let mut fa = vec![0.0; m * n];
    let mut fd = vec![0.0; m * n];
    let mut support = vec![false; m * n];
    let allowed: Vec<Vec<Action>> =
        attacks.iter().map(|a| defender_strategy_set(psi, cfg, a)).collect::<Result<_>>()?;
    for (j, b) in responses.iter().enumerate() {
        let restricted = restricted_attacker_set(psi, cfg, b);
        for (i, a) in attacks.iter().enumerate() {
            if !restricted.contains(a) || !allowed[i].contains(b) {
                continue;
            }
            support[i * n + j] = true;
            let (mut va, mut vd) = (attacker_payoff(a, b, psi, cfg)?, defender_payoff(a, b, psi, cfg)?);
            if stages > 1 {
                let child = transition(psi, cfg, a, b)?;
                let (ca, cd) = tree_values(&child, cfg, stages - 1)?;
                va += ca;
                vd += cd;
            }
            fa[i * n + j] = va;
            fd[i * n + j] = vd;
        }
    }
    Ok(StageGame::new(attacks, responses, fa, fd, support))
}

/// (Ω_a, Ω_d) by exhaustive recursion: every candidate answer's leader
/// program is solved and the best kept, with no caching or pruning.
pub fn tree_values(psi: &NetworkState, cfg: &GameConfig, stages: usize) -> Result<(f64, f64)> {
    if stages == 0 {
        return Ok((0.0, 0.0));
    }
    let game = tree_stage_game(psi, cfg, stages)?;
    // the literal programs first; if none is feasible, illegal answers are
    // priced below every payoff
    let (va, j, illegal) = [0.0, game.illegal_answer_value()]
        .into_iter()
        .find_map(|illegal| {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..game.response_count() {
                let vars = game.support_of(j);
                if vars.is_empty() {
                    continue;
                }
                let sol = solve_lp(&game.program(j, illegal));
                if sol.status != LpStatus::Optimal {
                    continue;
                }
                let va: f64 = vars.iter().zip(&sol.x).map(|(&i, q)| q * game.attacker_payoff(i, j)).sum();
                if best.is_none_or(|(ba, _)| va > ba + TOL) {
                    best = Some((va, j));
                }
            }
            best.map(|(va, j)| (va, j, illegal))
        })
        .expect("some answer admits a leader program");
    // leader ties inside the winning program go to the defender
    let lp = game.program(j, illegal);
    let vars = game.support_of(j);
    let mut second = lp.clone();
    second.objective = vars.iter().map(|&i| game.defender_payoff(i, j)).collect();
    second.add_le(lp.objective.iter().map(|c| -c).collect(), -va);
    let sol = solve_lp(&second);
    assert_eq!(sol.status, LpStatus::Optimal, "refinement keeps the leader optimum");
    let va: f64 = vars.iter().zip(&sol.x).map(|(&i, q)| q * game.attacker_payoff(i, j)).sum();
    let vd: f64 = vars.iter().zip(&sol.x).map(|(&i, q)| q * game.defender_payoff(i, j)).sum();
    Ok((va, vd))
}

/// Random bounded-or-not program with `vars` variables and `rows` rows,
/// small integer-ish coefficients so degenerate vertices are common.
pub fn random_lp(rng: &mut impl rand::Rng, vars: usize, rows: usize) -> LinearProgram {
    let coef = |rng: &mut dyn rand::RngCore| (rand::Rng::gen_range(rng, -4i32..=4)) as f64 * 0.5;
    let mut lp = LinearProgram::new((0..vars).map(|_| coef(rng)).collect());
    for _ in 0..rows {
        let row: Vec<f64> = (0..vars).map(|_| coef(rng)).collect();
        let rhs = rng.gen_range(-2i32..=6) as f64;
        if rng.gen_bool(0.2) {
            lp.add_eq(row, rhs);
        } else {
            lp.add_le(row, rhs);
        }
    }
    lp
}

/// Random `attacks x responses` stage game. With `coupled`, a random proper
/// subset of attacks (those that would leave a cluster short) is illegal
/// against a random proper subset of answers (those that restore nothing),
/// the shape of coupling that thresholds create.
pub fn random_game(rng: &mut impl rand::Rng, attacks: usize, responses: usize, coupled: bool) -> StageGame {
    let mut fa = vec![vec![0.0; responses]; attacks];
    let mut fd = vec![vec![0.0; responses]; attacks];
    for i in 0..attacks {
        for j in 0..responses {
            fa[i][j] = rng.gen_range(-10i32..=10) as f64 / 10.0;
            fd[i][j] = rng.gen_range(-10i32..=10) as f64 / 10.0;
        }
    }
    let mut support = vec![vec![true; responses]; attacks];
    if coupled && attacks > 1 && responses > 1 {
        let tight: Vec<bool> = (0..attacks).map(|i| i > 0 && rng.gen_bool(0.5)).collect();
        let plain: Vec<bool> = (0..responses).map(|j| j > 0 && rng.gen_bool(0.6)).collect();
        for i in 0..attacks {
            for j in 0..responses {
                support[i][j] = !(tight[i] && plain[j]);
            }
        }
    }
    StageGame::from_tables(&fa, &fd, coupled.then_some(&support[..]))
}
