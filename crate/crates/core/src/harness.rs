//! Experiment configuration, instance generation, the three scenarios,
//! metric extraction and CSV / gnuplot output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::fse::{simulate, Mode, Solver, SolverOptions, StageRecord};
use crate::netmodel::{Costs, DeviceType, GameConfig, NetworkState, Normalizers};
use crate::payoffs::LinkModel;

/// The shipped default configuration.
pub const PAPER_CONFIG: &str = include_str!("../../../configs/paper.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub areas: usize,
    pub info_types: usize,
    /// Devices of each type in every area.
    pub devices_per_area: Vec<u32>,
    /// Per-area replacements for `devices_per_area`.
    #[serde(default)]
    pub area_overrides: BTreeMap<usize, Vec<u32>>,
    pub sinks_per_area: u32,
    pub threshold: u32,
    pub sink_weight: f64,
    pub ls_target: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    /// Stages each decision looks ahead; unset means the full horizon.
    #[serde(default)]
    pub lookahead: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub types: Vec<DeviceType>,
    pub costs: Costs,
    #[serde(default)]
    pub normalizers: Normalizers,
    #[serde(default)]
    pub link: LinkModel,
    pub scenario: ScenarioSpec,
    /// Factor applied to the sink, head and sink-deployment costs; set by
    /// [`ExperimentConfig::scaled`].
    #[serde(default = "unit")]
    pub cost_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        serde_json::from_str(PAPER_CONFIG).expect("shipped config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let exp: ExperimentConfig = serde_json::from_str(text).map_err(|e| GameError::Config(e.to_string()))?;
        exp.game_config()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GameError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn devices_in(&self, area: usize) -> &[u32] {
        self.network.area_overrides.get(&area).unwrap_or(&self.network.devices_per_area)
    }

    /// Validated game parameters.
    pub fn game_config(&self) -> Result<GameConfig> {
        let n = &self.network;
        let cfg = GameConfig {
            areas: n.areas,
            info_types: n.info_types,
            types: self.types.clone(),
            thresholds: vec![n.threshold; n.areas * n.info_types],
            costs: self.costs.clone(),
            normalizers: self.normalizers,
            sink_weight: n.sink_weight,
            ls_target: n.ls_target,
            horizon: self.scenario.horizon,
            link: self.link.clone(),
        };
        cfg.validate()?;
        if n.devices_per_area.len() != self.types.len()
            || n.area_overrides.iter().any(|(&h, v)| h >= n.areas || v.len() != self.types.len())
        {
            return Err(GameError::Config("device counts must list one entry per type".into()));
        }
        Ok(cfg)
    }

    /// Desk-scale copy: device counts, thresholds and the aggregate costs
    /// shrink by `fraction`; the sink weight shrinks too but stays above
    /// every device weight.
    pub fn scaled(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction.is_finite()) {
            return Err(GameError::Config(format!("scale must be positive, got {fraction}")));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let shrink = |c: u32| ((c as f64 * fraction).round() as u32).max((c > 0) as u32);
        let mut out = self.clone();
        out.network.devices_per_area = self.network.devices_per_area.iter().map(|&c| shrink(c)).collect();
        for v in out.network.area_overrides.values_mut() {
            *v = v.iter().map(|&c| shrink(c)).collect();
        }
        out.network.threshold = shrink(self.network.threshold);
        let heaviest = self.types.iter().map(|t| t.sensor_count()).max().unwrap_or(1) as f64;
        out.network.sink_weight = (self.network.sink_weight * fraction).max(heaviest + 1.0);
        out.costs.attack_sink *= fraction;
        out.costs.head_discovery *= fraction;
        out.costs.active_discovery *= fraction;
        out.costs.deploy_sink *= fraction;
        out.cost_scale = self.cost_scale * fraction;
        out.game_config()?;
        Ok(out)
    }
}

/// Builds the starting network: each area's devices in a seeded order,
/// the lowest device id of every cluster as its head and the lowest sink
/// of each area activated.
///
/// Every area draws the same permutation when its counts match, so equal
/// areas come out identical up to ids.
pub fn generate_instance(exp: &ExperimentConfig, seed: u64) -> Result<NetworkState> {
    let cfg = exp.game_config()?;
    let mut psi = NetworkState::empty(cfg.areas, cfg.info_types);
    for h in 0..cfg.areas {
        let mut order: Vec<usize> = Vec::new();
        for (kind, &count) in exp.devices_in(h).iter().enumerate() {
            order.extend(std::iter::repeat_n(kind, count as usize));
        }
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for kind in order {
            psi.add_device(&cfg, kind, h);
        }
    }
    for h in 0..cfg.areas {
        for j in 0..cfg.info_types {
            let n = psi.cluster_size(j, h);
            if n < cfg.threshold(j, h).max(1) {
                return Err(GameError::InfeasibleInstance(format!(
                    "cluster of information type {j} in area {h} has {n} sensors, needs {}",
                    cfg.threshold(j, h).max(1)
                )));
            }
            let head = psi.cluster(j, h).iter().copied().min().expect("nonempty cluster");
            psi.set_head(j, h, head);
        }
        if exp.network.sinks_per_area == 0 {
            return Err(GameError::InfeasibleInstance(format!("area {h} has no local sink")));
        }
        let first = psi.add_sink(h);
        for _ in 1..exp.network.sinks_per_area {
            psi.add_sink(h);
        }
        psi.activate(h, first);
    }
    Ok(psi)
}

/// One swept point: the three costs that the scenarios vary, in unscaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub swept: f64,
    pub sink_cost: f64,
    pub active_cost: f64,
    pub head_cost: f64,
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u8,
    /// Name of the quantity in the `swept` column.
    pub parameter: String,
    pub points: Vec<SweepPoint>,
    pub modes: Vec<Mode>,
}

impl Scenario {
    pub fn paper(id: u8) -> Result<Self> {
        let modes = vec![Mode::Fse, Mode::Nfse, Mode::EqualProbability];
        let point = |swept, sink_cost, active_cost, head_cost, horizons: &[usize]| SweepPoint {
            swept,
            sink_cost,
            active_cost,
            head_cost,
            horizons: horizons.to_vec(),
        };
        let (parameter, points) = match id {
            1 => ("c_L", (0..=4).map(|k| point(50.0 * k as f64, 50.0 * k as f64, 0.0, 20.0, &[1, 2, 3])).collect()),
            2 => ("c_CH", (0..=5).map(|k| point(20.0 * k as f64, 50.0, 100.0, 20.0 * k as f64, &[1, 2, 3])).collect()),
            3 => ("c_aL", [0.0, 150.0].iter().map(|&a| point(a, 50.0, a, 20.0, &[1, 2, 3, 4, 5])).collect()),
            _ => return Err(GameError::Config(format!("unknown scenario {id}; expected 1, 2 or 3"))),
        };
        Ok(Scenario { id, parameter: parameter.into(), points, modes })
    }
}

/// Aggregated metrics of one (point, mode, horizon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: u8,
    pub mode: Mode,
    pub swept: f64,
    pub horizon: usize,
    pub p_h: f64,
    pub p_c_max: f64,
    /// Expected disconnected sensors per stage.
    pub n_d: f64,
    pub runtime: f64,
    pub seed: u64,
}

/// (p_H, p_c,max, N_D): means over all records.
pub fn extract_metrics(records: &[StageRecord]) -> (f64, f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = records.len() as f64;
    let mean = |f: fn(&StageRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    (mean(|r| r.heaviest_sink_mass), mean(|r| r.largest_head_mass), mean(|r| r.expected_disconnected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub runs: usize,
    pub lookahead: Option<usize>,
    /// Record wall-clock seconds; otherwise the column is zero so output
    /// stays byte-identical across runs.
    pub timings: bool,
}

/// Game parameters of one swept point with horizon `t`.
pub fn point_config(exp: &ExperimentConfig, p: &SweepPoint, t: usize) -> Result<GameConfig> {
    let mut cfg = exp.game_config()?;
    cfg.costs.attack_sink = p.sink_cost * exp.cost_scale;
    cfg.costs.active_discovery = p.active_cost * exp.cost_scale;
    cfg.costs.head_discovery = p.head_cost * exp.cost_scale;
    cfg.horizon = t;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every point, horizon and mode of `scenario` on one seeded instance.
pub fn run_scenario(exp: &ExperimentConfig, scenario: &Scenario, opts: &RunOptions) -> Result<Vec<MetricsRow>> {
    let start = generate_instance(exp, opts.seed)?;
    let mut rows = Vec::new();
    for p in &scenario.points {
        let mut cache = None;
        for &t in &p.horizons {
            let cfg = point_config(exp, p, t)?;
            let solver_opts = SolverOptions { lookahead: opts.lookahead, ..SolverOptions::default() };
            let mut solver = Solver::with_options(&cfg, solver_opts);
            if let Some(c) = cache.take() {
                solver.restore_cache(c);
            }
            for &mode in &scenario.modes {
                let clock = Instant::now();
                let records = simulate(&mut solver, &start, mode, opts.seed, opts.runs)?;
                let (p_h, p_c_max, n_d) = extract_metrics(&records);
                rows.push(MetricsRow {
                    scenario: scenario.id,
                    mode,
                    swept: p.swept,
                    horizon: t,
                    p_h,
                    p_c_max,
                    n_d,
                    runtime: if opts.timings { clock.elapsed().as_secs_f64() } else { 0.0 },
                    seed: opts.seed,
                });
            }
            cache = Some(solver.take_cache());
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 9] = ["scenario", "mode", "swept", "horizon", "p_h", "p_c_max", "n_d", "runtime", "seed"];

/// Six decimals, with rounding noise below zero printed as zero.
fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

pub fn write_csv(rows: &[MetricsRow], out: impl Write) -> Result<()> {
    let io = |e: csv::Error| GameError::Config(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario.to_string(),
            r.mode.to_string(),
            format!("{}", r.swept),
            r.horizon.to_string(),
            fixed6(r.p_h),
            fixed6(r.p_c_max),
            fixed6(r.n_d),
            format!("{:.3}", r.runtime),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| GameError::Config(e.to_string()))
}

/// gnuplot data: one indexed block per (mode, horizon), swept value first.
pub fn write_dat(rows: &[MetricsRow], parameter: &str, mut out: impl Write) -> std::io::Result<()> {
    let mut blocks: BTreeMap<(String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        blocks.entry((r.mode.to_string(), r.horizon)).or_default().push(r);
    }
    for (i, ((mode, t), block)) in blocks.iter().enumerate() {
        if i > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# mode={mode} horizon={t}")?;
        writeln!(out, "# {parameter} p_h p_c_max n_d")?;
        for r in block {
            writeln!(out, "{} {} {} {}", r.swept, fixed6(r.p_h), fixed6(r.p_c_max), fixed6(r.n_d))?;
        }
    }
    Ok(())
}

/// Outcome of one oracle comparison suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Quick oracle sweep behind the `check` subcommand.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    use crate::fse::solve_stackelberg;
    use crate::lp::{solve_lp, LpStatus};
    use crate::oracles::{grid_commitment, random_game, random_lp, vertex_enumeration};
    use rand::Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut failures = 0;
    for _ in 0..200 {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let lp = random_lp(&mut rng, n, m);
        let got = solve_lp(&lp);
        let (status, value) = vertex_enumeration(&lp);
        let agree = got.status == status && (status != LpStatus::Optimal || (got.value - value).abs() <= 1e-7);
        failures += !agree as usize;
    }
    out.push(CheckOutcome { name: "simplex vs vertex enumeration".into(), cases: 200, failures });

    let mut failures = 0;
    for _ in 0..50 {
        let (m, n) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
        let sparse = rng.gen_bool(0.5);
        let game = random_game(&mut rng, m, n, sparse);
        let sol = solve_stackelberg(&game)?;
        let grid = grid_commitment(&game, 200).unwrap_or(f64::NEG_INFINITY);
        failures += (sol.attacker_value + 1e-9 < grid || sol.attacker_value - grid > 0.2) as usize;
    }
    out.push(CheckOutcome { name: "stage solver vs commitment grid".into(), cases: 50, failures });

    let mut failures = 0;
    let exp = ExperimentConfig::paper().scaled(0.05)?;
    for k in 0..5 {
        let psi = generate_instance(&exp, seed + k)?;
        let mut cfg = exp.game_config()?;
        cfg.horizon = 1;
        let mut solver = Solver::new(&cfg);
        let fse = solver.solve_stage(&psi, 1)?;
        let nfse = crate::fse::solve_nfse(&psi, &cfg)?;
        failures += ((fse.attacker_value - nfse.attacker_value).abs() > 1e-9) as usize;
    }
    out.push(CheckOutcome { name: "one-stage FSE equals NFSE".into(), cases: 5, failures });
    Ok(out)
}
