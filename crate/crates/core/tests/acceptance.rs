//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use std::collections::HashSet;
use std::time::Instant;

use iobt_core::connectivity::{check_prop1, disconnecting_actions, Verdict};
use iobt_core::fse::{solve_nfse, MixedStrategy};
use iobt_core::harness::{point_config, run_scenario, write_csv, ExperimentConfig, MetricsRow, RunOptions, Scenario};
use iobt_core::lp::{solve_lp, zero_variable_test, LinearProgram, LpStatus};
use iobt_core::netmodel::{transition, Costs, DeviceType, GameConfig, NetworkState, Normalizers};
use iobt_core::oracles::{grid_commitment, random_game, random_lp, tree_values, vertex_enumeration};
use iobt_core::payoffs::{DisconnectionFlags, LinkModel};
use iobt_core::{simulate, solve_stackelberg, Mode, Solver, StageGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u8, ok: bool, detail: String) {
    println!("criterion {n} {}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn small_types() -> Vec<DeviceType> {
    vec![
        DeviceType { name: "a".into(), info: vec![0] },
        DeviceType { name: "b".into(), info: vec![1] },
        DeviceType { name: "ab".into(), info: vec![0, 1] },
    ]
}

fn small_config(areas: usize, rng: &mut ChaCha8Rng) -> GameConfig {
    let pick = |rng: &mut ChaCha8Rng, opts: &[f64]| opts[rng.gen_range(0..opts.len())];
    GameConfig {
        areas,
        info_types: 2,
        types: small_types(),
        thresholds: vec![0; areas * 2],
        costs: Costs {
            attack_device: vec![0.5, 0.5, 1.0],
            attack_sink: pick(rng, &[0.0, 5.0, 20.0, 50.0]),
            head_discovery: pick(rng, &[0.0, 2.0, 10.0, 20.0]),
            active_discovery: pick(rng, &[0.0, 10.0, 100.0]),
            deploy_device: vec![0.5, 0.5, 1.0],
            deploy_sink: pick(rng, &[1.0, 5.0, 50.0]),
        },
        normalizers: Normalizers::default(),
        sink_weight: 5.0,
        ls_target: 3,
        horizon: 1,
        link: LinkModel::default(),
    }
}

/// Random small network: per area up to three of each single type and two
/// dual devices, random heads, one to three sinks with the lowest active.
fn fuzzed_instance(areas: usize, rng: &mut ChaCha8Rng) -> (GameConfig, NetworkState) {
    let mut cfg = small_config(areas, rng);
    let mut psi = NetworkState::empty(areas, 2);
    for h in 0..areas {
        loop {
            let counts = [rng.gen_range(0..=3), rng.gen_range(0..=3), rng.gen_range(0..=2)];
            if counts[0] + counts[2] > 0 && counts[1] + counts[2] > 0 {
                for (kind, &c) in counts.iter().enumerate() {
                    for _ in 0..c {
                        psi.add_device(&cfg, kind, h);
                    }
                }
                break;
            }
        }
        for j in 0..2 {
            let members = psi.cluster(j, h).to_vec();
            psi.set_head(j, h, members[rng.gen_range(0..members.len())]);
            cfg.thresholds[h * 2 + j] = rng.gen_range(0..=members.len() as u32);
        }
        let first = psi.add_sink(h);
        for _ in 0..rng.gen_range(0..=2) {
            psi.add_sink(h);
        }
        psi.activate(h, first);
    }
    (cfg, psi)
}

#[test]
fn criterion_1_lp_matches_vertex_enumeration() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut bad = Vec::new();
    let mut optimal = 0;
    for case in 0..500 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=10));
        let lp = random_lp(&mut rng, n, m);
        let (status, value) = vertex_enumeration(&lp);
        let got = solve_lp(&lp);
        optimal += (status == LpStatus::Optimal) as usize;
        let ok = got.status == status && (status != LpStatus::Optimal || (got.value - value).abs() <= 1e-7);
        if !ok {
            bad.push((case, status, value, got.status, got.value));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = bad.is_empty() && secs < 30.0;
    report(1, ok, format!("500 programs ({optimal} optimal), {} mismatches, {secs:.1}s", bad.len()));
    assert!(ok, "{bad:?}");
}

/// Best leader value over the vertices of every best-response region,
/// each region written out as a program of its own.
fn region_vertex_value(game: &StageGame) -> f64 {
    let (m, n) = (game.attack_count(), game.response_count());
    let mut best = f64::NEG_INFINITY;
    for j in 0..n {
        let mut lp = LinearProgram::new((0..m).map(|i| game.attacker_payoff(i, j)).collect());
        let value_of = |k: usize, i: usize| if game.supported(i, k) { game.defender_payoff(i, k) } else { 0.0 };
        for k in (0..n).filter(|&k| k != j) {
            lp.add_le((0..m).map(|i| value_of(k, i) - value_of(j, i)).collect(), 0.0);
        }
        for i in (0..m).filter(|&i| !game.supported(i, j)) {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            lp.add_eq(e, 0.0);
        }
        lp.add_eq(vec![1.0; m], 1.0);
        let (status, v) = vertex_enumeration(&lp);
        if status == LpStatus::Optimal {
            best = best.max(v);
        }
    }
    best
}

#[test]
fn criterion_2_stage_solver_matches_commitment_search() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bad = Vec::new();
    let (mut gridded, mut enumerated) = (0, 0);
    for case in 0..200 {
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let sparse = rng.gen_bool(0.5);
        let game = random_game(&mut rng, m, n, sparse);
        let got = solve_stackelberg(&game).expect("solvable").attacker_value;
        let want = if m <= 3 {
            gridded += 1;
            grid_commitment(&game, 1000).expect("grid point")
        } else {
            enumerated += 1;
            region_vertex_value(&game)
        };
        if (got - want).abs() > 2e-3 {
            bad.push((case, m, n, got, want));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = bad.is_empty() && secs < 300.0;
    report(
        2,
        ok,
        format!("200 games ({gridded} on the 1e-3 grid, {enumerated} by region vertices), {} mismatches, {secs:.1}s", bad.len()),
    );
    assert!(ok, "{bad:?}");
}

#[test]
fn criterion_3_continuation_values_match_game_tree() {
    let clock = Instant::now();
    let mut cfg = small_config(1, &mut ChaCha8Rng::seed_from_u64(0));
    cfg.types.truncate(2);
    cfg.costs = Costs {
        attack_device: vec![0.5, 0.5],
        attack_sink: 5.0,
        head_discovery: 2.0,
        active_discovery: 0.0,
        deploy_device: vec![0.5, 0.5],
        deploy_sink: 5.0,
    };
    cfg.thresholds = vec![2, 2];
    cfg.horizon = 2;
    let mut psi = NetworkState::empty(1, 2);
    for kind in [0, 0, 0, 1, 1, 1] {
        psi.add_device(&cfg, kind, 0);
    }
    psi.set_head(0, 0, 1);
    psi.set_head(1, 0, 4);
    let s = psi.add_sink(0);
    psi.add_sink(0);
    psi.activate(0, s);

    let want = tree_values(&psi, &cfg, 2).expect("tree");
    let got = Solver::new(&cfg).continuation_values(&psi, 1).expect("solver");
    let gap = (got.0 - want.0).abs().max((got.1 - want.1).abs());
    let secs = clock.elapsed().as_secs_f64();
    let ok = gap <= 1e-6 && secs < 60.0;
    report(3, ok, format!("solver {got:?}, tree {want:?}, gap {gap:.2e}, {secs:.1}s"));
    assert!(ok);
}

fn support_set(mix: &MixedStrategy) -> Vec<iobt_core::Action> {
    let mut s: Vec<_> = mix.support.iter().filter(|(_, q)| *q > 0.0).map(|(a, _)| *a).collect();
    s.sort();
    s
}

#[test]
fn criterion_4_one_stage_fse_is_nfse() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut bad = Vec::new();
    for case in 0..50 {
        let (cfg, psi) = fuzzed_instance(rng.gen_range(1..=2), &mut rng);
        let fse = Solver::new(&cfg).solve_stage(&psi, 1).expect("fse");
        let nfse = solve_nfse(&psi, &cfg).expect("nfse");
        let same = fse.response == nfse.response
            && support_set(&fse.mix) == support_set(&nfse.mix)
            && (fse.attacker_value - nfse.attacker_value).abs() <= 1e-9
            && (fse.defender_value - nfse.defender_value).abs() <= 1e-9
            && fse.mix.support.iter().all(|(a, q)| (q - nfse.mix.probability(a)).abs() <= 1e-9);
        if !same {
            bad.push(case);
        }
    }
    report(4, bad.is_empty(), format!("50 instances, {} differ", bad.len()));
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn criterion_5_guarantee_and_zero_variable_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut counterexamples = Vec::new();
    let mut guaranteed = 0;
    for case in 0..300 {
        let areas = rng.gen_range(1..=2);
        let (mut cfg, psi) = fuzzed_instance(areas, &mut rng);
        cfg.horizon = rng.gen_range(1..=3 - areas + 1);
        let mut solver = Solver::new(&cfg);
        let (_, game, sol) = solver.solve_stage_full(&psi, 1).expect("stage");
        let rep = check_prop1(&psi, &cfg, 1, &game, &sol);
        if rep.verdict == Verdict::Guaranteed {
            guaranteed += 1;
            let cut = disconnecting_actions(&game.responses[sol.response], &psi, &cfg);
            let mass: f64 = game.attacks.iter().zip(&sol.mix).filter(|(a, _)| cut.contains(a)).map(|(_, q)| q).sum();
            if mass > 1e-9 {
                counterexamples.push((case, mass));
            }
        }
    }

    // every optimum of a program flagged by the test has x_r = 0
    let mut lp_bad = Vec::new();
    let (mut programs, mut flagged) = (0, 0);
    while programs < 200 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=5);
        let mut lp = random_lp(&mut rng, n, m);
        lp.add_eq(vec![1.0; n], 1.0);
        let (status, best) = vertex_enumeration(&lp);
        if status != LpStatus::Optimal {
            continue;
        }
        programs += 1;
        for r in 0..n {
            if !zero_variable_test(&lp, r) {
                continue;
            }
            flagged += 1;
            let mut probe = lp.clone();
            probe.add_le(lp.objective.iter().map(|c| -c).collect(), -best + 1e-9);
            let mut e = vec![0.0; n];
            e[r] = 1.0;
            probe.objective = e;
            let (st, xr) = vertex_enumeration(&probe);
            if st == LpStatus::Optimal && xr > 1e-7 {
                lp_bad.push((programs, r, xr));
            }
        }
    }
    let ok = counterexamples.is_empty() && lp_bad.is_empty();
    report(
        5,
        ok,
        format!(
            "{guaranteed}/300 guaranteed, {} with mass on cuts; {flagged} zero-variable flags over 200 programs, {} unsound",
            counterexamples.len(),
            lp_bad.len()
        ),
    );
    assert!(ok, "{counterexamples:?} {lp_bad:?}");
}

fn rows_of<'a>(rows: &'a [MetricsRow], mode: Mode, t: usize) -> Vec<&'a MetricsRow> {
    rows.iter().filter(|r| r.mode == mode && r.horizon == t).collect()
}

fn desk_options() -> RunOptions {
    let exp = ExperimentConfig::paper();
    RunOptions { seed: 7, runs: 10, lookahead: exp.scenario.lookahead, timings: false }
}

fn desk_scenario(id: u8) -> (Vec<MetricsRow>, Vec<u8>) {
    let exp = ExperimentConfig::paper().scaled(0.1).expect("scaled");
    let rows = run_scenario(&exp, &Scenario::paper(id).expect("scenario"), &desk_options()).expect("runs");
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).expect("csv");
    (rows, csv)
}

#[test]
fn criterion_6_and_7_desk_scale_trends_and_determinism() {
    const SLACK: f64 = 1e-6;
    let clock = Instant::now();
    let (s1, csv1) = desk_scenario(1);
    let (s2, _) = desk_scenario(2);
    let (s3, _) = desk_scenario(3);
    let secs = clock.elapsed().as_secs_f64();

    let mut checks: Vec<(&str, bool)> = Vec::new();

    // (a) myopic p_H per c_L at the longest horizon
    let nfse: Vec<f64> = rows_of(&s1, Mode::Nfse, 3).iter().map(|r| r.p_h).collect();
    let flat = (nfse[0] - nfse[1]).abs() <= SLACK;
    let falling = nfse[1..].windows(2).all(|w| w[1] < w[0] - SLACK);
    checks.push(("6a nfse p_H flat then falling to 0", flat && falling && nfse[4].abs() <= SLACK));

    // (b) horizon ordering at c_L = 0 and its reversal at 200
    let ph = |mode, t: usize, k: usize| rows_of(&s1, mode, t)[k].p_h;
    let low = ph(Mode::Fse, 3, 0) < ph(Mode::Fse, 2, 0) - SLACK && ph(Mode::Fse, 2, 0) < ph(Mode::Nfse, 3, 0) - SLACK;
    let high = ph(Mode::Fse, 3, 4) > ph(Mode::Fse, 2, 4) + SLACK && ph(Mode::Fse, 2, 4) > ph(Mode::Nfse, 3, 4) + SLACK;
    checks.push(("6b fse horizon ordering reverses", low && high));

    // (c) myopic p_c,max falls from its maximum at c_CH = 0 to 0 at 100
    let pc: Vec<f64> = rows_of(&s2, Mode::Nfse, 3).iter().map(|r| r.p_c_max).collect();
    let top = pc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let decreasing = pc.windows(2).all(|w| w[1] <= w[0] + SLACK);
    checks.push(("6c nfse p_c,max falls to 0", pc[0] >= top - SLACK && pc[0] > SLACK && decreasing && pc[5].abs() <= SLACK));

    // (d) cumulative N_D over T stages
    let cumulative = |swept: f64, mode: Mode, t: usize| {
        s3.iter().find(|r| r.swept == swept && r.mode == mode && r.horizon == t).expect("row").n_d * t as f64
    };
    let mut cheap_ok = true;
    let mut gain = f64::NEG_INFINITY;
    for t in 2..=5 {
        let f = cumulative(0.0, Mode::Fse, t);
        let n = cumulative(0.0, Mode::Nfse, t);
        let e = cumulative(0.0, Mode::EqualProbability, t);
        cheap_ok &= f < n - SLACK && f < e - SLACK;
        let adv = n.min(e) - f;
        cheap_ok &= adv > gain + SLACK || t == 2;
        gain = adv;
    }
    checks.push(("6d fse below both baselines with growing gap at c_aL=0", cheap_ok));
    let costly_ok = (1..=5).all(|t| {
        let f = cumulative(150.0, Mode::Fse, t);
        f >= cumulative(150.0, Mode::Nfse, t) - SLACK && f < cumulative(150.0, Mode::EqualProbability, t) - SLACK
    });
    checks.push(("6d fse between baselines at c_aL=150", costly_ok));

    for (name, ok) in &checks {
        println!("  {name}: {}", if *ok { "ok" } else { "violated" });
    }
    println!("  nfse p_H at T=3: {nfse:?}");
    println!("  nfse p_c,max at T=3: {pc:?}");
    let all = checks.iter().all(|c| c.1) && secs < 900.0;
    report(6, all, format!("{} of {} trend checks hold, {secs:.0}s", checks.iter().filter(|c| c.1).count(), checks.len()));

    let (_, again) = desk_scenario(1);
    let same = again == csv1;
    report(7, same, format!("scenario 1 CSV of {} bytes reproduced {}", csv1.len(), if same { "exactly" } else { "with differences" }));
    assert!(same);
    assert!(all, "trend checks failed");
}

#[test]
fn criterion_8_guaranteed_play_never_disconnects() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut qualified, mut tried, mut flagged) = (0, 0, 0);
    while qualified < 50 && tried < 5000 {
        tried += 1;
        let areas = rng.gen_range(1..=2);
        let (mut cfg, start) = fuzzed_instance(areas, &mut rng);
        cfg.horizon = rng.gen_range(1..=3 - areas + 1);
        let mut solver = Solver::new(&cfg);
        // every state reachable with positive probability must be guaranteed
        let mut frontier = vec![(start.clone(), 1usize)];
        let mut seen = HashSet::new();
        let mut all_guaranteed = true;
        while let Some((psi, t)) = frontier.pop() {
            if t > cfg.horizon || !seen.insert((psi.clone(), t)) {
                continue;
            }
            let (_, game, sol) = solver.solve_stage_full(&psi, t).expect("stage");
            if check_prop1(&psi, &cfg, t, &game, &sol).verdict != Verdict::Guaranteed {
                all_guaranteed = false;
                break;
            }
            let b = game.responses[sol.response];
            for (a, q) in game.attacks.iter().zip(&sol.mix) {
                if *q > 0.0 {
                    frontier.push((transition(&psi, &cfg, a, &b).expect("transition"), t + 1));
                }
            }
        }
        if !all_guaranteed {
            continue;
        }
        qualified += 1;
        let records = simulate(&mut solver, &start, Mode::Fse, tried as u64, 1000).expect("simulate");
        for run in records.chunks(cfg.horizon) {
            let mut psi = start.clone();
            for r in run {
                psi = transition(&psi, &cfg, &r.sampled_attack, &r.policy.response).expect("transition");
                if DisconnectionFlags::of(&psi).any() {
                    flagged += 1;
                    break;
                }
            }
        }
    }
    let ok = qualified == 50 && flagged == 0;
    report(8, ok, format!("{qualified} guaranteed instances of {tried} tried, {flagged} trajectories disconnected"));
    assert!(ok);
}

#[test]
fn scenario_points_use_unscaled_sweeps() {
    let exp = ExperimentConfig::paper().scaled(0.1).unwrap();
    let sc = Scenario::paper(1).unwrap();
    let cfg = point_config(&exp, &sc.points[4], 2).unwrap();
    assert!((cfg.costs.attack_sink - 20.0).abs() < 1e-12);
    assert_eq!(sc.points[4].swept, 200.0);
}

