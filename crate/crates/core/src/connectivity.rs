//! Attacks that sever part of the hierarchy, and a sufficient check that the
//! equilibrium mix never plays them.

use serde::{Deserialize, Serialize};

use crate::fse::{StageGame, StageSolution};
use crate::lp::dominance;
use crate::netmodel::{defender_action_allowed, restricted_attacker_set, Action, GameConfig, NetworkState};

/// Attacks in S'_a(b') that disconnect a cluster or an area when the
/// defender answers `response`.
pub fn disconnecting_actions(response: &Action, psi: &NetworkState, cfg: &GameConfig) -> Vec<Action> {
    let mut heads: Vec<(usize, usize, u32)> = Vec::new();
    for h in 0..psi.areas() {
        for j in 0..psi.info_types() {
            let f = psi.head(j, h);
            if f != 0 {
                heads.push((j, h, f));
            }
        }
    }
    let mut out: Vec<Action> = Vec::new();
    // naming the node already in the role changes nothing
    let spare_head = |j: usize, h: usize, f: u32| match *response {
        Action::SetHead { device, info, area } => !(info == j && area == h && device != f),
        _ => true,
    };
    for &(j, h, f) in &heads {
        if spare_head(j, h, f) {
            out.push(Action::AttackDevice { device: f });
        }
    }
    for h in 0..psi.areas() {
        let s = psi.active_sink(h);
        let spared = matches!(*response, Action::ActivateSink { sink, area } if area == h && sink != s);
        if s != 0 && !spared {
            out.push(Action::AttackSink { sink: s, area: h });
        }
    }
    // a device heading several clusters appears once
    out.sort();
    out.dedup();
    let allowed = restricted_attacker_set(psi, cfg, response);
    out.retain(|a| allowed.contains(a));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Guaranteed,
    NotGuaranteed,
}

/// Sign classes of one candidate pair (a_d, a_n) over the shared answers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub b1: Vec<usize>,
    pub b2: Vec<usize>,
    pub b3: Vec<usize>,
    pub ratio: Option<f64>,
    pub pivot: Option<usize>,
    /// Numbers (1 to 5) of the listed conditions that hold, in order.
    pub conditions: Vec<u8>,
}

/// Evaluates the five conditions for one pair.
///
/// `diffs[k] = (F_d(a_n, b_k) - F_d(a_n, b*), F_d(a_d, b_k) - F_d(a_d, b*))`
/// over the shared answers b_k; ratios with a zero denominator are left out.
pub fn analyse_pair(diffs: &[(f64, f64)], witness_gain: f64, disconnect_gain: f64) -> PairAnalysis {
    let mut p = PairAnalysis::default();
    for (k, &(dn, dd)) in diffs.iter().enumerate() {
        if dn >= 0.0 && dd >= 0.0 {
            p.b1.push(k);
        }
        if dn < 0.0 && dd <= 0.0 {
            p.b2.push(k);
        }
        if dn >= 0.0 && dd < 0.0 {
            p.b3.push(k);
        }
    }
    let ratio = |k: usize| diffs[k].1 / diffs[k].0;
    let pick = |set: &[usize], lowest: bool| {
        set.iter()
            .copied()
            .filter(|&k| diffs[k].0 != 0.0)
            .reduce(|x, y| {
                let better = if lowest { ratio(y) < ratio(x) } else { ratio(y) > ratio(x) };
                if better { y } else { x }
            })
    };
    let min1 = pick(&p.b1, true);
    let max2 = pick(&p.b2, false);
    p.pivot = min1.or(max2);
    p.ratio = p.pivot.map(ratio);
    let any12 = !p.b1.is_empty() || !p.b2.is_empty();
    let both = !p.b1.is_empty() && !p.b2.is_empty();
    if p.b3.is_empty() {
        p.conditions.push(1);
    }
    if any12 && p.ratio.is_some_and(|w| w * witness_gain > disconnect_gain) {
        p.conditions.push(2);
    }
    if let (true, Some(a), Some(b)) = (both, min1, max2) {
        if ratio(a) < 1.0 && ratio(a) <= ratio(b) {
            p.conditions.push(3);
        }
        if ratio(a) >= 1.0 && ratio(b) >= 1.0 {
            p.conditions.push(4);
        }
    }
    if !any12 && witness_gain > 0.0 {
        p.conditions.push(5);
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisconnectionCheck {
    pub attack: Action,
    pub witness: Option<Action>,
    /// First listed condition that holds for the witness.
    pub condition: Option<u8>,
    pub b1: Vec<Action>,
    pub b2: Vec<Action>,
    pub b3: Vec<Action>,
    pub ratio: Option<f64>,
    pub pivot: Option<Action>,
    /// Whether the witness dominates the attack in the answer's leader program.
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub stage: usize,
    pub response: Action,
    pub checks: Vec<DisconnectionCheck>,
    /// Disconnecting attacks that the answer's program cannot mix at all.
    pub excluded: Vec<Action>,
    pub verdict: Verdict,
}

/// Checks every disconnecting attack of the chosen answer for a witness
/// that both satisfies one of the listed conditions and dominates it in
/// the leader program, which forces its probability to zero.
pub fn check_prop1(
    psi: &NetworkState,
    cfg: &GameConfig,
    t: usize,
    game: &StageGame,
    solution: &StageSolution,
) -> ConnectivityReport {
    let j = solution.response;
    let star = game.responses[j];
    let vars = game.support_of(j);
    let lp = game.program(j, solution.unsupported_value);
    let var_of = |a: &Action| {
        let i = game.attacks.iter().position(|x| x == a)?;
        vars.iter().position(|&v| v == i)
    };
    let cut = disconnecting_actions(&star, psi, cfg);
    let (active, excluded): (Vec<Action>, Vec<Action>) = cut.iter().partition(|a| var_of(a).is_some());
    let candidates: Vec<Action> =
        vars.iter().map(|&i| game.attacks[i]).filter(|a| !cut.contains(a)).collect();
    let fd = |a: &Action, k: usize| {
        let i = game.attacks.iter().position(|x| x == a).expect("attack in game");
        game.defender_payoff(i, k)
    };
    let fa = |a: &Action| {
        let i = game.attacks.iter().position(|x| x == a).expect("attack in game");
        game.attacker_payoff(i, j)
    };

    let mut checks = Vec::new();
    for ad in active {
        let r = var_of(&ad).expect("active attack");
        let mut first: Option<DisconnectionCheck> = None;
        let mut found: Option<DisconnectionCheck> = None;
        for an in &candidates {
            let shared: Vec<usize> = (0..game.response_count())
                .filter(|&k| k != j)
                .filter(|&k| {
                    let b = game.responses[k];
                    defender_action_allowed(psi, cfg, &ad, &b) && defender_action_allowed(psi, cfg, an, &b)
                })
                .collect();
            let diffs: Vec<(f64, f64)> =
                shared.iter().map(|&k| (fd(an, k) - fd(an, j), fd(&ad, k) - fd(&ad, j))).collect();
            let pa = analyse_pair(&diffs, fa(an), fa(&ad));
            let q = var_of(an).expect("candidate in program");
            let dominated = dominance(&lp, q, r).dominated;
            let names = |set: &[usize]| set.iter().map(|&k| game.responses[shared[k]]).collect::<Vec<_>>();
            let check = DisconnectionCheck {
                attack: ad,
                witness: Some(*an),
                condition: pa.conditions.first().copied(),
                b1: names(&pa.b1),
                b2: names(&pa.b2),
                b3: names(&pa.b3),
                ratio: pa.ratio,
                pivot: pa.pivot.map(|k| game.responses[shared[k]]),
                dominated,
            };
            if dominated && check.condition.is_some() {
                found = Some(check);
                break;
            }
            if first.is_none() {
                first = Some(DisconnectionCheck { witness: None, condition: None, ..check });
            }
        }
        checks.push(found.or(first).unwrap_or(DisconnectionCheck {
            attack: ad,
            witness: None,
            condition: None,
            b1: vec![],
            b2: vec![],
            b3: vec![],
            ratio: None,
            pivot: None,
            dominated: false,
        }));
    }
    let verdict = if checks.iter().all(|c| c.witness.is_some()) { Verdict::Guaranteed } else { Verdict::NotGuaranteed };
    ConnectivityReport { stage: t, response: star, checks, excluded, verdict }
}
