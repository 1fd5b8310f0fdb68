//! Stage Stackelberg games solved with one linear program per candidate
//! defender move, feedback backward induction, and the two baselines.

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, EPS};
use crate::netmodel::{
    advance, attacker_strategy_set, canonical_key, full_defender_set, is_restoring_deployment,
    restricted_attacker_set, threshold_deficit, Action, GameConfig, NetworkState, StateKey,
};
use crate::payoffs::StageContext;

/// Multiply-rotate hasher for the solver's internal tables.
#[derive(Default, Clone, Copy)]
struct FastHasher(u64);

impl Hasher for FastHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(word));
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = (self.0.rotate_left(5) ^ x).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }

    fn write_u32(&mut self, x: u32) {
        self.write_u64(x as u64);
    }

    fn write_u8(&mut self, x: u8) {
        self.write_u64(x as u64);
    }

    fn write_usize(&mut self, x: usize) {
        self.write_u64(x as u64);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

type FastMap<K, V> = HashMap<K, V, BuildHasherDefault<FastHasher>>;
type FastSet<K> = HashSet<K, BuildHasherDefault<FastHasher>>;

/// A single stage in normal form. Tables are row-major, attacks by responses.
#[derive(Debug, Clone)]
pub struct StageGame {
    pub attacks: Vec<Action>,
    pub responses: Vec<Action>,
    pub attacker: Vec<f64>,
    pub defender: Vec<f64>,
    /// `support[i * responses + j]`: attack i may be mixed when the defender answers j.
    pub support: Vec<bool>,
    symmetry: Option<Symmetry>,
}

impl StageGame {
    /// A game with explicit tables and no symmetry information.
    pub fn new(
        attacks: Vec<Action>,
        responses: Vec<Action>,
        attacker: Vec<f64>,
        defender: Vec<f64>,
        support: Vec<bool>,
    ) -> Self {
        let cells = attacks.len() * responses.len();
        assert!(attacker.len() == cells && defender.len() == cells && support.len() == cells);
        StageGame { attacks, responses, attacker, defender, support, symmetry: None }
    }

    /// Builds a game from dense `[attack][response]` tables.
    pub fn from_tables(attacker: &[Vec<f64>], defender: &[Vec<f64>], support: Option<&[Vec<bool>]>) -> Self {
        let m = attacker.len();
        let n = attacker.first().map_or(0, Vec::len);
        let attacks = (0..m as u32).map(|d| Action::AttackDevice { device: d + 1 }).collect();
        let responses = (0..n).map(|kind| Action::DeployDevice { kind, area: 0 }).collect();
        let flat = |t: &[Vec<f64>]| t.iter().flat_map(|r| r.iter().copied()).collect::<Vec<_>>();
        let support = match support {
            Some(s) => s.iter().flat_map(|r| r.iter().copied()).collect(),
            None => vec![true; m * n],
        };
        StageGame::new(attacks, responses, flat(attacker), flat(defender), support)
    }

    pub fn attack_count(&self) -> usize {
        self.attacks.len()
    }

    pub fn response_count(&self) -> usize {
        self.responses.len()
    }

    pub fn attacker_payoff(&self, i: usize, j: usize) -> f64 {
        self.attacker[i * self.responses.len() + j]
    }

    pub fn defender_payoff(&self, i: usize, j: usize) -> f64 {
        self.defender[i * self.responses.len() + j]
    }

    pub fn supported(&self, i: usize, j: usize) -> bool {
        self.support[i * self.responses.len() + j]
    }

    /// Attacks that may be mixed when the defender answers `j`.
    pub fn support_of(&self, j: usize) -> Vec<usize> {
        (0..self.attacks.len()).filter(|&i| self.supported(i, j)).collect()
    }

    /// Drops the symmetry information so every candidate program is solved in full.
    pub fn without_symmetry(mut self) -> Self {
        self.symmetry = None;
        self
    }

    /// The full leader program for answer `j`: one variable per supported
    /// attack, in the order of [`StageGame::support_of`].
    pub fn leader_program(&self, j: usize) -> LinearProgram {
        self.program(j, 0.0)
    }

    /// Leader program for answer `j` in which the defender values an answer
    /// that is illegal against an attack at `unsupported_value`.
    pub fn program(&self, j: usize, unsupported_value: f64) -> LinearProgram {
        let vars: Vec<Vec<usize>> = self.support_of(j).into_iter().map(|i| vec![i]).collect();
        let rows: Vec<usize> = (0..self.responses.len()).filter(|&k| k != j).collect();
        self.grouped_program(j, &vars, &rows, unsupported_value)
    }

    /// Value below every defender payoff, used when no leader program is feasible.
    pub fn illegal_answer_value(&self) -> f64 {
        let top = self.defender.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        -(2.0 * top + 1.0)
    }

    /// Program whose variable `g` spreads its mass evenly over `groups[g]`.
    fn grouped_program(&self, j: usize, groups: &[Vec<usize>], rows: &[usize], unsupported_value: f64) -> LinearProgram {
        let n = self.responses.len();
        let mean = |g: &Vec<usize>, f: &dyn Fn(usize) -> f64| g.iter().map(|&i| f(i)).sum::<f64>() / g.len() as f64;
        let objective = groups.iter().map(|g| mean(g, &|i| self.attacker[i * n + j])).collect();
        let current: Vec<f64> = groups.iter().map(|g| mean(g, &|i| self.defender[i * n + j])).collect();
        let mut lp = LinearProgram::new(objective);
        let mut coeffs = vec![0.0; groups.len()];
        for &k in rows {
            let mut informative = false;
            for (c, (g, cur)) in coeffs.iter_mut().zip(groups.iter().zip(&current)) {
                let alt = mean(g, &|i| if self.support[i * n + k] { self.defender[i * n + k] } else { unsupported_value });
                *c = alt - cur;
                informative |= *c > 0.0;
            }
            // rows that no nonnegative mix can violate carry no information
            if informative {
                lp.add_le(coeffs.clone(), 0.0);
            }
        }
        lp.add_eq(vec![1.0; groups.len()], 1.0);
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Target {
    None,
    Device(u32),
    Sink(u32),
}

/// Orbit data for one action under relabellings that fix the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct ActionClass {
    area: usize,
    area_class: u32,
    variant: u8,
    detail: u64,
    target: Target,
}

impl ActionClass {
    fn kind(&self) -> (u32, u8, u64) {
        (self.area_class, self.variant, self.detail)
    }

    /// Orbit of `self` under the relabellings that also fix `pivot`.
    fn relative(&self, pivot: &ActionClass) -> (u32, u8, u64, bool, bool) {
        let same_target = self.target != Target::None && self.target == pivot.target;
        (self.area_class, self.variant, self.detail, self.area == pivot.area, same_target)
    }
}

#[derive(Debug, Clone)]
struct Symmetry {
    attacks: Vec<ActionClass>,
    responses: Vec<ActionClass>,
}

fn area_classes(psi: &NetworkState, cfg: &GameConfig) -> Vec<u32> {
    let sigs: Vec<Vec<u64>> = (0..psi.areas())
        .map(|h| {
            let mut devs: Vec<u64> = psi
                .devices()
                .filter(|d| d.area == h)
                .map(|d| ((d.kind as u64) << 32) | psi.head_mask(d) as u64)
                .collect();
            devs.sort_unstable();
            let mut sig: Vec<u64> = (0..cfg.info_types).map(|j| cfg.threshold(j, h) as u64).collect();
            sig.push(psi.sinks(h).len() as u64);
            sig.push((psi.active_sink(h) != 0) as u64);
            sig.extend(devs);
            sig
        })
        .collect();
    let mut unique = sigs.clone();
    unique.sort();
    unique.dedup();
    sigs.iter().map(|s| unique.binary_search(s).unwrap() as u32).collect()
}

fn classify(psi: &NetworkState, area_class: &[u32], a: &Action) -> ActionClass {
    let device_code = |id: u32| {
        let d = psi.device(id).expect("action names a live device");
        ((d.kind as u64) << 32) | psi.head_mask(d) as u64
    };
    let active = |area: usize, sink: u32| (psi.active_sink(area) == sink) as u64;
    let (area, variant, detail, target) = match *a {
        Action::AttackDevice { device } => {
            let area = psi.device(device).expect("live device").area;
            (area, 0, device_code(device), Target::Device(device))
        }
        Action::AttackSink { sink, area } => (area, 1, active(area, sink), Target::Sink(sink)),
        Action::SetHead { device, info, area } => {
            (area, 2, ((info as u64) << 48) ^ device_code(device), Target::Device(device))
        }
        Action::DeployDevice { kind, area } => (area, 3, kind as u64, Target::None),
        Action::ActivateSink { sink, area } => (area, 4, active(area, sink), Target::Sink(sink)),
        Action::DeploySink { area } => (area, 5, 0, Target::None),
    };
    ActionClass { area, area_class: area_class[area], variant, detail, target }
}

/// Optimal commitment of one stage game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    /// Probability per attack, aligned with `StageGame::attacks`.
    pub mix: Vec<f64>,
    /// Index of the defender's answer in `StageGame::responses`.
    pub response: usize,
    pub attacker_value: f64,
    pub defender_value: f64,
    pub programs_solved: usize,
    /// Defender value of an illegal answer in the programs that were
    /// solved: zero, or [`StageGame::illegal_answer_value`] when no program
    /// was feasible with zero.
    pub unsupported_value: f64,
}

/// Solves a stage game by the multiple-programs method: one leader program
/// per defender answer, keeping the best. Ties go to the smaller answer.
pub fn solve_stackelberg(game: &StageGame) -> Result<StageSolution> {
    if game.attacks.is_empty() {
        return Err(GameError::NoAttackerAction);
    }
    let (found, solved) = best_program(game, 0.0);
    match found {
        Some(best) => Ok(refine(game, best, solved)),
        None => {
            let (found, more) = best_program(game, game.illegal_answer_value());
            found.map(|best| refine(game, best, solved + more)).ok_or(GameError::NoFeasibleStage)
        }
    }
}

fn best_program(game: &StageGame, unsupported_value: f64) -> (Option<StageSolution>, usize) {
    let n = game.responses.len();
    let candidates: Vec<usize> = match &game.symmetry {
        None => (0..n).collect(),
        Some(sym) => {
            let mut seen = FastSet::default();
            (0..n).filter(|&j| seen.insert(sym.responses[j].kind())).collect()
        }
    };
    let mut ranked: Vec<(f64, usize)> = candidates
        .into_iter()
        .filter_map(|j| {
            (0..game.attacks.len())
                .filter(|&i| game.supported(i, j))
                .map(|i| game.attacker_payoff(i, j))
                .reduce(f64::max)
                .map(|bound| (bound, j))
        })
        .collect();
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut best: Option<StageSolution> = None;
    let mut solved = 0;
    for (bound, j) in ranked {
        if let Some(b) = &best {
            if bound < b.attacker_value - EPS {
                break;
            }
        }
        let (groups, rows) = program_layout(game, j);
        let lp = game.grouped_program(j, &groups, &rows, unsupported_value);
        let sol = solve_lp(&lp);
        solved += 1;
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let mut mix = vec![0.0; game.attacks.len()];
        for (g, &x) in groups.iter().zip(&sol.x) {
            for &i in g {
                mix[i] = x / g.len() as f64;
            }
        }
        let attacker_value: f64 = mix.iter().enumerate().map(|(i, q)| q * game.attacker_payoff(i, j)).sum();
        let defender_value: f64 = mix.iter().enumerate().map(|(i, q)| q * game.defender_payoff(i, j)).sum();
        let better = match &best {
            None => true,
            Some(b) => {
                attacker_value > b.attacker_value + EPS
                    || (attacker_value >= b.attacker_value - EPS && j < b.response)
            }
        };
        if better {
            best = Some(StageSolution { mix, response: j, attacker_value, defender_value, programs_solved: 0, unsupported_value });
        }
    }
    (best, solved)
}

/// Among the optimal commitments for the chosen answer, the one best for the defender.
fn refine(game: &StageGame, mut best: StageSolution, mut solved: usize) -> StageSolution {
    let j = best.response;
    let (groups, rows) = program_layout(game, j);
    let lp = game.grouped_program(j, &groups, &rows, best.unsupported_value);
    let defender_objective: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| game.defender_payoff(i, j)).sum::<f64>() / g.len() as f64)
        .collect();
    if let Some(x) = favour_defender(&lp, defender_objective, best.attacker_value) {
        solved += 1;
        let mut mix = vec![0.0; game.attacks.len()];
        for (g, &x) in groups.iter().zip(&x) {
            for &i in g {
                mix[i] = x / g.len() as f64;
            }
        }
        best.attacker_value = mix.iter().enumerate().map(|(i, q)| q * game.attacker_payoff(i, j)).sum();
        best.defender_value = mix.iter().enumerate().map(|(i, q)| q * game.defender_payoff(i, j)).sum();
        best.mix = mix;
    }
    best.programs_solved = solved;
    best
}

/// Among the optimal points of `lp`, one that maximises `defender_objective`.
pub fn favour_defender(lp: &LinearProgram, defender_objective: Vec<f64>, leader_value: f64) -> Option<Vec<f64>> {
    let mut second = lp.clone();
    second.objective = defender_objective;
    second.add_le(lp.objective.iter().map(|c| -c).collect(), -leader_value);
    let sol = solve_lp(&second);
    (sol.status == LpStatus::Optimal).then_some(sol.x)
}

/// Variable groups and constraint rows of the leader program for answer `j`.
/// With symmetry, mixes are restricted to those invariant under the
/// relabellings fixing `j`, which leaves the optimum unchanged.
fn program_layout(game: &StageGame, j: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let support = game.support_of(j);
    match &game.symmetry {
        None => (support.into_iter().map(|i| vec![i]).collect(), (0..game.responses.len()).filter(|&k| k != j).collect()),
        Some(sym) => {
            let pivot = sym.responses[j];
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut index = FastMap::default();
            for i in support {
                let key = sym.attacks[i].relative(&pivot);
                let g = *index.entry(key).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].push(i);
            }
            let own = sym.responses[j].relative(&pivot);
            let mut seen = FastSet::default();
            seen.insert(own);
            let rows = (0..game.responses.len())
                .filter(|&k| k != j && seen.insert(sym.responses[k].relative(&pivot)))
                .collect();
            (groups, rows)
        }
    }
}

/// Attacker mixed strategy over named actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub support: Vec<(Action, f64)>,
}

impl MixedStrategy {
    pub fn probability(&self, a: &Action) -> f64 {
        self.support.iter().filter(|(x, _)| x == a).map(|(_, p)| p).sum()
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// Draws an action with inverse-CDF sampling.
    pub fn sample(&self, rng: &mut impl Rng) -> Action {
        let u: f64 = rng.gen::<f64>() * self.total();
        let mut acc = 0.0;
        for (a, p) in &self.support {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        self.support.last().expect("nonempty mixed strategy").0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    pub mix: MixedStrategy,
    pub response: Action,
    pub attacker_value: f64,
    pub defender_value: f64,
}

impl StagePolicy {
    fn from_solution(game: &StageGame, sol: &StageSolution) -> Self {
        let support = game
            .attacks
            .iter()
            .zip(&sol.mix)
            .filter(|(_, &q)| q > EPS)
            .map(|(a, &q)| (*a, q))
            .collect();
        StagePolicy {
            mix: MixedStrategy { support },
            response: game.responses[sol.response],
            attacker_value: sol.attacker_value,
            defender_value: sol.defender_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fse,
    Nfse,
    EqualProbability,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Fse => "fse",
            Mode::Nfse => "nfse",
            Mode::EqualProbability => "equal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub memoize: bool,
    pub symmetry: bool,
    /// Most stages looked at from any decision; deeper stages count as zero.
    pub lookahead: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { memoize: true, symmetry: true, lookahead: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub stages_solved: usize,
    pub cache_hits: usize,
    pub programs_solved: usize,
}

/// Values keyed by (stages left, state); valid for any horizon under fixed costs.
#[derive(Debug, Clone, Default)]
pub struct ValueCache(FastMap<(usize, StateKey), (f64, f64)>);

/// Backward-induction solver with a value cache keyed by (stages left, state).
pub struct Solver<'a> {
    cfg: &'a GameConfig,
    opts: SolverOptions,
    cache: FastMap<(usize, StateKey), (f64, f64)>,
    pub stats: SolverStats,
}

impl<'a> Solver<'a> {
    pub fn new(cfg: &'a GameConfig) -> Self {
        Self::with_options(cfg, SolverOptions::default())
    }

    pub fn with_options(cfg: &'a GameConfig, opts: SolverOptions) -> Self {
        Solver { cfg, opts, cache: FastMap::default(), stats: SolverStats::default() }
    }

    pub fn config(&self) -> &GameConfig {
        self.cfg
    }

    /// Hands over the value cache, e.g. to a solver for a longer horizon
    /// with the same costs.
    pub fn take_cache(&mut self) -> ValueCache {
        ValueCache(std::mem::take(&mut self.cache))
    }

    pub fn restore_cache(&mut self, cache: ValueCache) {
        self.cache = cache.0;
    }

    /// Stages that the decision at stage `t` takes into account.
    pub fn depth_at(&self, t: usize) -> usize {
        let left = (self.cfg.horizon + 1).saturating_sub(t);
        self.opts.lookahead.map_or(left, |l| left.min(l))
    }

    /// (Ω_a, Ω_d) at stage `t`; zero past the horizon.
    pub fn continuation_values(&mut self, psi: &NetworkState, t: usize) -> Result<(f64, f64)> {
        let depth = self.depth_at(t);
        self.values(psi, depth)
    }

    fn values(&mut self, psi: &NetworkState, depth: usize) -> Result<(f64, f64)> {
        if depth == 0 {
            return Ok((0.0, 0.0));
        }
        let key = self.opts.memoize.then(|| (depth, canonical_key(psi, self.cfg)));
        if let Some(k) = &key {
            if let Some(&v) = self.cache.get(k) {
                self.stats.cache_hits += 1;
                return Ok(v);
            }
        }
        let game = self.stage_game(psi, depth)?;
        let sol = solve_stackelberg(&game)?;
        self.stats.stages_solved += 1;
        self.stats.programs_solved += sol.programs_solved;
        let v = (sol.attacker_value, sol.defender_value);
        if let Some(k) = key {
            self.cache.insert(k, v);
        }
        Ok(v)
    }

    /// Stage game whose entries add the continuation values of `depth - 1`
    /// further stages to the stage payoffs.
    pub fn stage_game(&mut self, psi: &NetworkState, depth: usize) -> Result<StageGame> {
        let cfg = self.cfg;
        let mut attacks = attacker_strategy_set(psi);
        attacks.sort();
        if attacks.is_empty() {
            return Err(GameError::NoAttackerAction);
        }
        let mut responses = full_defender_set(psi, cfg);
        responses.sort();
        let (m, n) = (attacks.len(), responses.len());

        // attacks still available when the answer is not a restoring deployment
        let unrestricted: FastSet<Action> =
            restricted_attacker_set(psi, cfg, &Action::DeploySink { area: 0 }).into_iter().collect();
        let restoring: Vec<bool> = responses.iter().map(|b| is_restoring_deployment(psi, cfg, b)).collect();
        let forced: Vec<Option<(usize, Vec<usize>)>> = attacks
            .iter()
            .map(|a| match *a {
                Action::AttackDevice { device } => threshold_deficit(psi, cfg, device),
                _ => None,
            })
            .collect();

        let symmetric = self.opts.symmetry && cfg.link.is_uniform();
        let symmetry = symmetric.then(|| {
            let ac = area_classes(psi, cfg);
            Symmetry {
                attacks: attacks.iter().map(|a| classify(psi, &ac, a)).collect(),
                responses: responses.iter().map(|b| classify(psi, &ac, b)).collect(),
            }
        });

        let ctx = StageContext::new(psi, cfg);
        let mut attacker = vec![0.0; m * n];
        let mut defender = vec![0.0; m * n];
        let mut support = vec![false; m * n];
        let mut shared: FastMap<(ActionClass, ActionClass, bool), (f64, f64)> = FastMap::default();
        for (i, a) in attacks.iter().enumerate() {
            for (j, b) in responses.iter().enumerate() {
                let allowed = match &forced[i] {
                    Some((area, deficient)) => match *b {
                        Action::DeployDevice { kind, area: h } => {
                            h == *area && deficient.iter().all(|&x| cfg.types[kind].senses(x))
                        }
                        _ => false,
                    },
                    None => true,
                };
                if !allowed || !(restoring[j] || unrestricted.contains(a)) {
                    continue;
                }
                support[i * n + j] = true;
                let pair_key = symmetry.as_ref().map(|s| {
                    let (ca, cb) = (s.attacks[i], s.responses[j]);
                    let same_target = ca.target != Target::None && ca.target == cb.target;
                    let strip = |c: ActionClass| ActionClass { area: 0, target: Target::None, ..c };
                    (strip(ca), ActionClass { area: (ca.area == cb.area) as usize, ..strip(cb) }, same_target)
                });
                if let Some(k) = &pair_key {
                    if let Some(&(fa, fd)) = shared.get(k) {
                        attacker[i * n + j] = fa;
                        defender[i * n + j] = fd;
                        continue;
                    }
                }
                let terms = ctx.terms(a, b)?;
                let (mut fa, mut fd) = (terms.attacker(cfg), terms.defender(cfg));
                if depth > 1 {
                    let child = advance(psi, cfg, a, b);
                    let (ca, cd) = self.values(&child, depth - 1)?;
                    fa += ca;
                    fd += cd;
                }
                attacker[i * n + j] = fa;
                defender[i * n + j] = fd;
                if let Some(k) = pair_key {
                    shared.insert(k, (fa, fd));
                }
            }
        }
        Ok(StageGame { attacks, responses, attacker, defender, support, symmetry })
    }

    /// Feedback Stackelberg policy at stage `t`.
    pub fn solve_stage(&mut self, psi: &NetworkState, t: usize) -> Result<StagePolicy> {
        Ok(self.solve_stage_full(psi, t)?.0)
    }

    /// The policy together with the stage game and solution it came from.
    pub fn solve_stage_full(&mut self, psi: &NetworkState, t: usize) -> Result<(StagePolicy, StageGame, StageSolution)> {
        let depth = self.depth_at(t).max(1);
        self.solve_depth(psi, depth)
    }

    fn solve_depth(&mut self, psi: &NetworkState, depth: usize) -> Result<(StagePolicy, StageGame, StageSolution)> {
        let game = self.stage_game(psi, depth)?;
        let sol = solve_stackelberg(&game)?;
        self.stats.stages_solved += 1;
        self.stats.programs_solved += sol.programs_solved;
        Ok((StagePolicy::from_solution(&game, &sol), game, sol))
    }

    /// Stackelberg policy of the one-stage game, ignoring the future.
    pub fn solve_nfse(&mut self, psi: &NetworkState) -> Result<StagePolicy> {
        Ok(self.solve_depth(psi, 1)?.0)
    }

    /// Policy used by `mode` at stage `t`.
    pub fn policy(&mut self, psi: &NetworkState, t: usize, mode: Mode) -> Result<StagePolicy> {
        match mode {
            Mode::Fse => self.solve_stage(psi, t),
            Mode::Nfse => self.solve_nfse(psi),
            Mode::EqualProbability => {
                let mix = equal_probability_policy(psi)?;
                let (response, defender_value) = best_response(psi, self.cfg, &mix)?;
                let ctx = StageContext::new(psi, self.cfg);
                let mut attacker_value = 0.0;
                for (a, q) in &mix.support {
                    attacker_value += q * ctx.terms(a, &response)?.attacker(self.cfg);
                }
                Ok(StagePolicy { mix, response, attacker_value, defender_value })
            }
        }
    }
}

/// Convenience wrapper: one-stage policy for `psi`.
pub fn solve_nfse(psi: &NetworkState, cfg: &GameConfig) -> Result<StagePolicy> {
    Solver::new(cfg).solve_nfse(psi)
}

/// Uniform mix over attacks on the activated local sinks.
pub fn equal_probability_policy(psi: &NetworkState) -> Result<MixedStrategy> {
    let targets: Vec<Action> = (0..psi.areas())
        .filter(|&h| psi.active_sink(h) != 0)
        .map(|h| Action::AttackSink { sink: psi.active_sink(h), area: h })
        .collect();
    if targets.is_empty() {
        return Err(GameError::NoActivatedSink);
    }
    let p = 1.0 / targets.len() as f64;
    Ok(MixedStrategy { support: targets.into_iter().map(|a| (a, p)).collect() })
}

/// Defender's stage-payoff best answer to a fixed mix, restricted to moves
/// legal against every supported attack. Ties go to the smaller action.
pub fn best_response(psi: &NetworkState, cfg: &GameConfig, mix: &MixedStrategy) -> Result<(Action, f64)> {
    let ctx = StageContext::new(psi, cfg);
    let mut candidates = full_defender_set(psi, cfg);
    candidates.sort();
    let mut best: Option<(Action, f64)> = None;
    for b in candidates {
        if !mix.support.iter().all(|(a, _)| crate::netmodel::defender_action_allowed(psi, cfg, a, &b)) {
            continue;
        }
        let mut v = 0.0;
        for (a, q) in &mix.support {
            v += q * ctx.terms(a, &b)?.defender(cfg);
        }
        if best.is_none_or(|(_, bv)| v > bv + EPS) {
            best = Some((b, v));
        }
    }
    best.ok_or(GameError::NoFeasibleStage)
}

/// One stage of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub run: usize,
    pub stage: usize,
    pub policy: StagePolicy,
    pub expected_disconnected: f64,
    pub sampled_attack: Action,
    pub sampled_disconnected: f64,
    /// Mass on the activated sink of the heaviest area.
    pub heaviest_sink_mass: f64,
    /// Mass on the head of the largest cluster.
    pub largest_head_mass: f64,
}

/// Index of the area with the largest weight; ties to the lowest index.
pub fn heaviest_area(psi: &NetworkState, cfg: &GameConfig) -> usize {
    let weight = |h: usize| -> f64 {
        psi.devices().filter(|d| d.area == h).map(|d| cfg.device_weight(d.kind)).sum::<f64>()
            + if psi.sinks(h).is_empty() { 0.0 } else { cfg.sink_weight }
    };
    let mut best = 0;
    for h in 1..psi.areas() {
        if weight(h) > weight(best) {
            best = h;
        }
    }
    best
}

/// (info type, area) of the cluster with the most sensors; ties to the
/// lowest area, then the lowest info type.
pub fn largest_cluster(psi: &NetworkState) -> (usize, usize) {
    let mut best = (0, 0);
    for h in 0..psi.areas() {
        for j in 0..psi.info_types() {
            if psi.cluster_size(j, h) > psi.cluster_size(best.0, best.1) {
                best = (j, h);
            }
        }
    }
    best
}

fn record_stage(
    psi: &NetworkState,
    cfg: &GameConfig,
    run: usize,
    t: usize,
    policy: StagePolicy,
    attack: Action,
) -> StageRecord {
    let ctx = StageContext::new(psi, cfg);
    let b = policy.response;
    let expected_disconnected = policy.mix.support.iter().map(|(a, q)| q * ctx.disconnected_sensors(a, &b)).sum();
    let h = heaviest_area(psi, cfg);
    let heaviest_sink_mass = match psi.active_sink(h) {
        0 => 0.0,
        s => policy.mix.probability(&Action::AttackSink { sink: s, area: h }),
    };
    let (j, ch) = largest_cluster(psi);
    let largest_head_mass = match psi.head(j, ch) {
        0 => 0.0,
        d => policy.mix.probability(&Action::AttackDevice { device: d }),
    };
    StageRecord {
        run,
        stage: t,
        expected_disconnected,
        sampled_disconnected: ctx.disconnected_sensors(&attack, &b),
        sampled_attack: attack,
        heaviest_sink_mass,
        largest_head_mass,
        policy,
    }
}

/// Plays `runs` trajectories of the horizon from `start` under `mode`.
/// Run `r` draws from stream `r` of a generator seeded with `seed`.
pub fn simulate(
    solver: &mut Solver<'_>,
    start: &NetworkState,
    mode: Mode,
    seed: u64,
    runs: usize,
) -> Result<Vec<StageRecord>> {
    let cfg = solver.config().clone();
    let mut out = Vec::with_capacity(runs * cfg.horizon);
    // policies depend only on the state and depth, so repeated visits reuse them
    let mut policies: FastMap<(usize, NetworkState), StagePolicy> = FastMap::default();
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let mut psi = start.clone();
        for t in 1..=cfg.horizon {
            let key = (solver.depth_at(t), psi.clone());
            let policy = match policies.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = solver.policy(&psi, t, mode)?;
                    policies.insert(key, p.clone());
                    p
                }
            };
            let attack = policy.mix.sample(&mut rng);
            let next = crate::netmodel::transition(&psi, &cfg, &attack, &policy.response)?;
            out.push(record_stage(&psi, &cfg, run, t, policy, attack));
            psi = next;
        }
    }
    Ok(out)
}
