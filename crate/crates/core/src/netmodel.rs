//! Network state, strategy sets and the deterministic state transition.
//!
//! Areas, information types and device types are zero-based indices. Device
//! and sink identifiers start at 1; the value 0 stands for "no cluster head"
//! or "no activated sink".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::payoffs::LinkModel;

pub type DeviceId = u32;
pub type SinkId = u32;

/// Sentinel for a compromised or missing cluster head / activated sink.
pub const NONE: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceType {
    pub name: String,
    /// Information types sensed by this device, one sensor each.
    pub info: Vec<usize>,
}

impl DeviceType {
    pub fn sensor_count(&self) -> usize {
        self.info.len()
    }

    pub fn senses(&self, info: usize) -> bool {
        self.info.contains(&info)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub kind: usize,
    pub area: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalSink {
    pub id: SinkId,
    pub area: usize,
}

/// One stage move of either player.
///
/// The derived ordering puts attacker moves first and then the defender
/// moves in the order used for deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    AttackDevice { device: DeviceId },
    AttackSink { sink: SinkId, area: usize },
    SetHead { device: DeviceId, info: usize, area: usize },
    DeployDevice { kind: usize, area: usize },
    ActivateSink { sink: SinkId, area: usize },
    DeploySink { area: usize },
}

impl Action {
    pub fn is_attacker(&self) -> bool {
        matches!(self, Action::AttackDevice { .. } | Action::AttackSink { .. })
    }

    pub fn is_defender(&self) -> bool {
        !self.is_attacker()
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Action::AttackDevice { device } => write!(f, "attack-device({device})"),
            Action::AttackSink { sink, area } => write!(f, "attack-sink({sink}@{area})"),
            Action::SetHead { device, info, area } => write!(f, "set-head({device},{info}@{area})"),
            Action::DeployDevice { kind, area } => write!(f, "deploy-device({kind}@{area})"),
            Action::ActivateSink { sink, area } => write!(f, "activate-sink({sink}@{area})"),
            Action::DeploySink { area } => write!(f, "deploy-sink(@{area})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    /// Cost of compromising a device, per device type.
    pub attack_device: Vec<f64>,
    pub attack_sink: f64,
    /// Extra cost paid per cluster the attacked device heads.
    pub head_discovery: f64,
    /// Extra cost paid when the attacked sink is the activated one.
    pub active_discovery: f64,
    /// Cost of deploying a device, per device type.
    pub deploy_device: Vec<f64>,
    pub deploy_sink: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub nu: f64,
    pub eta: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Default for Normalizers {
    fn default() -> Self {
        Normalizers { nu: 1.0, eta: 1.0, mu: 100.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub areas: usize,
    pub info_types: usize,
    pub types: Vec<DeviceType>,
    /// Minimum cluster sizes, indexed `area * info_types + info`.
    pub thresholds: Vec<u32>,
    pub costs: Costs,
    pub normalizers: Normalizers,
    pub sink_weight: f64,
    /// Recommended number of sinks per area.
    pub ls_target: u32,
    pub horizon: usize,
    #[serde(default)]
    pub link: LinkModel,
}

impl GameConfig {
    pub fn threshold(&self, info: usize, area: usize) -> u32 {
        self.thresholds[area * self.info_types + info]
    }

    pub fn device_weight(&self, kind: usize) -> f64 {
        self.types[kind].sensor_count() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(GameError::Config(m));
        if self.areas == 0 || self.info_types == 0 || self.types.is_empty() {
            return err("areas, info types and device types must be nonempty".into());
        }
        if self.info_types > 32 {
            return err("at most 32 information types are supported".into());
        }
        if self.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        if self.ls_target == 0 {
            return err("recommended sink count must be at least 1".into());
        }
        if self.thresholds.len() != self.areas * self.info_types {
            return err(format!(
                "expected {} thresholds, found {}",
                self.areas * self.info_types,
                self.thresholds.len()
            ));
        }
        for (k, t) in self.types.iter().enumerate() {
            if t.info.is_empty() {
                return err(format!("device type {k} senses nothing"));
            }
            let mut seen = t.info.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != t.info.len() || seen.iter().any(|&j| j >= self.info_types) {
                return err(format!("device type {k} has an invalid information set"));
            }
        }
        let k = self.types.len();
        if self.costs.attack_device.len() != k || self.costs.deploy_device.len() != k {
            return err("per-type cost vectors must match the type catalog".into());
        }
        let c = &self.costs;
        let scalars = [c.attack_sink, c.head_discovery, c.active_discovery, c.deploy_sink];
        if scalars.iter().chain(&c.attack_device).chain(&c.deploy_device).any(|&x| !(x >= 0.0)) {
            return err("costs must be nonnegative".into());
        }
        let n = &self.normalizers;
        if [n.nu, n.eta, n.mu, n.lambda].iter().any(|&x| !(x >= 0.0)) {
            return err("normalizers must be nonnegative".into());
        }
        let max_weight = self.types.iter().map(|t| t.sensor_count()).max().unwrap_or(0) as f64;
        if !(self.sink_weight > max_weight) {
            return err(format!("sink weight {} must exceed every device weight", self.sink_weight));
        }
        self.link.validate()?;
        // A cluster that can fall below threshold must be restorable by a single
        // deployment, otherwise the coupled defender set can become empty.
        for j in 0..self.info_types {
            if !self.types.iter().any(|t| t.senses(j)) {
                return err(format!("no device type senses information type {j}"));
            }
        }
        for (a, ta) in self.types.iter().enumerate() {
            let covered = self.types.iter().any(|t| ta.info.iter().all(|j| t.senses(*j)));
            if !covered {
                return err(format!("losing a device of type {a} may be unrecoverable"));
            }
        }
        Ok(())
    }
}

/// Ground-truth network at one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    areas: usize,
    info_types: usize,
    devices: BTreeMap<DeviceId, Device>,
    clusters: Vec<Vec<DeviceId>>,
    heads: Vec<DeviceId>,
    sinks: Vec<Vec<SinkId>>,
    active: Vec<SinkId>,
    deployed: u32,
    sink_counter: u32,
}

impl NetworkState {
    pub fn empty(areas: usize, info_types: usize) -> Self {
        NetworkState {
            areas,
            info_types,
            devices: BTreeMap::new(),
            clusters: vec![Vec::new(); areas * info_types],
            heads: vec![NONE; areas * info_types],
            sinks: vec![Vec::new(); areas],
            active: vec![NONE; areas],
            deployed: 0,
            sink_counter: 0,
        }
    }

    fn slot(&self, info: usize, area: usize) -> usize {
        area * self.info_types + info
    }

    pub fn areas(&self) -> usize {
        self.areas
    }

    pub fn info_types(&self) -> usize {
        self.info_types
    }

    /// Adds a device with the next fresh id and returns that id.
    pub fn add_device(&mut self, cfg: &GameConfig, kind: usize, area: usize) -> DeviceId {
        self.deployed += 1;
        let id = self.deployed;
        self.devices.insert(id, Device { id, kind, area });
        for &j in &cfg.types[kind].info {
            let s = self.slot(j, area);
            // fresh ids are the largest, so push keeps the cluster sorted
            self.clusters[s].push(id);
        }
        id
    }

    pub fn add_sink(&mut self, area: usize) -> SinkId {
        self.sink_counter += 1;
        self.sinks[area].push(self.sink_counter);
        self.sink_counter
    }

    pub fn set_head(&mut self, info: usize, area: usize, device: DeviceId) {
        let s = self.slot(info, area);
        self.heads[s] = device;
    }

    pub fn activate(&mut self, area: usize, sink: SinkId) {
        self.active[area] = sink;
    }

    pub fn devices(&self) -> impl Iterator<Item = &Device> + '_ {
        self.devices.values()
    }

    pub fn device(&self, id: DeviceId) -> Option<&Device> {
        self.devices.get(&id)
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn cluster(&self, info: usize, area: usize) -> &[DeviceId] {
        &self.clusters[self.slot(info, area)]
    }

    pub fn cluster_size(&self, info: usize, area: usize) -> u32 {
        self.cluster(info, area).len() as u32
    }

    pub fn head(&self, info: usize, area: usize) -> DeviceId {
        self.heads[self.slot(info, area)]
    }

    pub fn sinks(&self, area: usize) -> &[SinkId] {
        &self.sinks[area]
    }

    pub fn sink_count(&self) -> usize {
        self.sinks.iter().map(Vec::len).sum()
    }

    pub fn active_sink(&self, area: usize) -> SinkId {
        self.active[area]
    }

    pub fn sink_area(&self, sink: SinkId) -> Option<usize> {
        self.sinks.iter().position(|s| s.contains(&sink))
    }

    /// N(t), the highest device id handed out so far.
    pub fn total_deployed(&self) -> u32 {
        self.deployed
    }

    pub fn next_sink_id(&self) -> SinkId {
        self.sink_counter + 1
    }

    /// Bit `j` is set when the device heads cluster `(j, area)`.
    pub fn head_mask(&self, device: &Device) -> u32 {
        (0..self.info_types)
            .filter(|&j| self.head(j, device.area) == device.id)
            .fold(0, |m, j| m | (1 << j))
    }

    pub fn is_head(&self, id: DeviceId) -> bool {
        id != NONE && self.heads.contains(&id)
    }

    /// Re-derives every structural invariant; returns the first violation.
    pub fn check_invariants(&self, cfg: &GameConfig) -> std::result::Result<(), String> {
        for h in 0..self.areas {
            for j in 0..self.info_types {
                let mut expect: Vec<DeviceId> = self
                    .devices
                    .values()
                    .filter(|d| d.area == h && cfg.types[d.kind].senses(j))
                    .map(|d| d.id)
                    .collect();
                expect.sort_unstable();
                if expect != self.cluster(j, h) {
                    return Err(format!("cluster ({j},{h}) membership drifted"));
                }
                let f = self.head(j, h);
                if f != NONE && !self.cluster(j, h).contains(&f) {
                    return Err(format!("head {f} of ({j},{h}) is not a member"));
                }
            }
            let s = self.active[h];
            if s != NONE && !self.sinks[h].contains(&s) {
                return Err(format!("activated sink {s} missing from area {h}"));
            }
        }
        if self.devices.keys().any(|&id| id > self.deployed) {
            return Err("device id above the deployment counter".into());
        }
        let mut ids: Vec<SinkId> = self.sinks.iter().flatten().copied().collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n || ids.last().is_some_and(|&m| m > self.sink_counter) {
            return Err("sink ids are not unique".into());
        }
        Ok(())
    }

    /// Removes whatever `attack` targets, without any defender reaction.
    fn remove_target(&mut self, attack: &Action) {
        match *attack {
            Action::AttackDevice { device } => {
                if let Some(d) = self.devices.remove(&device) {
                    for j in 0..self.info_types {
                        let s = self.slot(j, d.area);
                        self.clusters[s].retain(|&x| x != device);
                        if self.heads[s] == device {
                            self.heads[s] = NONE;
                        }
                    }
                }
            }
            Action::AttackSink { sink, area } => {
                self.sinks[area].retain(|&x| x != sink);
                if self.active[area] == sink {
                    self.active[area] = NONE;
                }
            }
            _ => {}
        }
    }

    /// Applies a defender move to the post-attack network.
    fn apply_response(&mut self, cfg: &GameConfig, response: &Action) {
        match *response {
            Action::SetHead { device, info, area } => {
                if self.cluster(info, area).contains(&device) {
                    self.set_head(info, area, device);
                }
            }
            Action::DeployDevice { kind, area } => {
                self.add_device(cfg, kind, area);
            }
            Action::ActivateSink { sink, area } => {
                if self.sinks[area].contains(&sink) {
                    self.active[area] = sink;
                }
            }
            Action::DeploySink { area } => {
                self.add_sink(area);
            }
            _ => {}
        }
    }
}

/// S_a(ψ): every alive device and sink.
pub fn attacker_strategy_set(psi: &NetworkState) -> Vec<Action> {
    let mut out: Vec<Action> = psi.devices().map(|d| Action::AttackDevice { device: d.id }).collect();
    for h in 0..psi.areas() {
        out.extend(psi.sinks(h).iter().map(|&sink| Action::AttackSink { sink, area: h }));
    }
    out
}

/// Q_d: every defender move available in ψ regardless of the attack.
pub fn full_defender_set(psi: &NetworkState, cfg: &GameConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for h in 0..psi.areas() {
        for j in 0..psi.info_types() {
            out.extend(psi.cluster(j, h).iter().map(|&device| Action::SetHead { device, info: j, area: h }));
        }
    }
    for h in 0..psi.areas() {
        out.extend((0..cfg.types.len()).map(|kind| Action::DeployDevice { kind, area: h }));
    }
    for h in 0..psi.areas() {
        out.extend(psi.sinks(h).iter().map(|&sink| Action::ActivateSink { sink, area: h }));
    }
    out.extend((0..psi.areas()).map(|area| Action::DeploySink { area }));
    out
}

/// When destroying `device` triggers the threshold condition, returns its
/// area and the information types that drop below threshold.
pub fn threshold_deficit(psi: &NetworkState, cfg: &GameConfig, device: DeviceId) -> Option<(usize, Vec<usize>)> {
    let d = psi.device(device)?;
    let mut triggered = false;
    let mut deficient = Vec::new();
    for &j in &cfg.types[d.kind].info {
        let n = psi.cluster_size(j, d.area);
        let th = cfg.threshold(j, d.area);
        if n <= th {
            triggered = true;
        }
        // the defender observes the attack, so its count is one lower
        if n.saturating_sub(1) < th {
            deficient.push(j);
        }
    }
    triggered.then_some((d.area, deficient))
}

fn covering_types(cfg: &GameConfig, deficient: &[usize]) -> Vec<usize> {
    (0..cfg.types.len())
        .filter(|&k| deficient.iter().all(|&j| cfg.types[k].senses(j)))
        .collect()
}

/// S_d(ψ, a): the defender's moves coupled to the attacker's move.
pub fn defender_strategy_set(psi: &NetworkState, cfg: &GameConfig, attack: &Action) -> Result<Vec<Action>> {
    if let Action::AttackDevice { device } = *attack {
        if let Some((area, deficient)) = threshold_deficit(psi, cfg, device) {
            let kinds = covering_types(cfg, &deficient);
            if kinds.is_empty() {
                return Err(GameError::EmptyFeasibleSet { area, deficient });
            }
            return Ok(kinds.into_iter().map(|kind| Action::DeployDevice { kind, area }).collect());
        }
    }
    Ok(full_defender_set(psi, cfg))
}

/// Whether `response` is legal after `attack`, without building the set.
pub fn defender_action_allowed(psi: &NetworkState, cfg: &GameConfig, attack: &Action, response: &Action) -> bool {
    if let Action::AttackDevice { device } = *attack {
        if let Some((area, deficient)) = threshold_deficit(psi, cfg, device) {
            return match *response {
                Action::DeployDevice { kind, area: h } => {
                    h == area && deficient.iter().all(|&j| cfg.types[kind].senses(j))
                }
                _ => false,
            };
        }
    }
    in_full_defender_set(psi, cfg, response)
}

fn in_full_defender_set(psi: &NetworkState, cfg: &GameConfig, b: &Action) -> bool {
    match *b {
        Action::SetHead { device, info, area } => {
            area < psi.areas() && info < psi.info_types() && psi.cluster(info, area).contains(&device)
        }
        Action::DeployDevice { kind, area } => kind < cfg.types.len() && area < psi.areas(),
        Action::ActivateSink { sink, area } => area < psi.areas() && psi.sinks(area).contains(&sink),
        Action::DeploySink { area } => area < psi.areas(),
        _ => false,
    }
}

/// True when `b` is a deployment that restores some cluster pushed below
/// threshold, i.e. `b` lies outside the set V_t.
pub fn is_restoring_deployment(psi: &NetworkState, cfg: &GameConfig, b: &Action) -> bool {
    let Action::DeployDevice { kind, area } = *b else {
        return false;
    };
    psi.devices().filter(|d| d.area == area).any(|d| {
        threshold_deficit(psi, cfg, d.id)
            .is_some_and(|(_, def)| !def.is_empty() && def.iter().all(|&j| cfg.types[kind].senses(j)))
    })
}

/// S'_a(b', ψ): attacker moves consistent with the defender answering `b`.
pub fn restricted_attacker_set(psi: &NetworkState, cfg: &GameConfig, b: &Action) -> Vec<Action> {
    let all = attacker_strategy_set(psi);
    let mut at_threshold = Vec::new();
    for h in 0..psi.areas() {
        for j in 0..psi.info_types() {
            if psi.cluster_size(j, h) == cfg.threshold(j, h) {
                at_threshold.push((j, h));
            }
        }
    }
    if at_threshold.is_empty() || is_restoring_deployment(psi, cfg, b) {
        return all;
    }
    all.into_iter()
        .filter(|a| match *a {
            Action::AttackDevice { device } => {
                !at_threshold.iter().any(|&(j, h)| psi.cluster(j, h).contains(&device))
            }
            _ => true,
        })
        .collect()
}

fn attack_is_legal(psi: &NetworkState, a: &Action) -> bool {
    match *a {
        Action::AttackDevice { device } => psi.device(device).is_some(),
        Action::AttackSink { sink, area } => area < psi.areas() && psi.sinks(area).contains(&sink),
        _ => false,
    }
}

/// ψ_{t+1}(a, b). Fails with `InvalidAction` for an illegal pair.
pub fn transition(psi: &NetworkState, cfg: &GameConfig, attack: &Action, response: &Action) -> Result<NetworkState> {
    if !attack_is_legal(psi, attack) || !defender_action_allowed(psi, cfg, attack, response) {
        return Err(GameError::InvalidAction { attacker: *attack, defender: *response });
    }
    Ok(advance(psi, cfg, attack, response))
}

/// Transition without legality checks, for callers that enumerated the pair
/// from the strategy sets themselves.
pub(crate) fn advance(psi: &NetworkState, cfg: &GameConfig, attack: &Action, response: &Action) -> NetworkState {
    let mut next = psi.clone();
    next.remove_target(attack);
    next.apply_response(cfg, response);
    next
}

/// The attacker's and the defender's observation of the network.
///
/// The defender's view runs one half-step ahead: it already reflects the
/// next attack, which the defender observes before answering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub attacker_view: NetworkState,
    pub defender_view: NetworkState,
}

impl ViewPair {
    pub fn new(psi: NetworkState) -> Self {
        ViewPair { defender_view: psi.clone(), attacker_view: psi }
    }
}

pub fn apply_transition(
    views: &ViewPair,
    cfg: &GameConfig,
    attack: &Action,
    response: &Action,
    next_attack: Option<&Action>,
) -> Result<ViewPair> {
    let ground = transition(&views.attacker_view, cfg, attack, response)?;
    let mut defender_view = ground.clone();
    if let Some(next) = next_attack {
        if !attack_is_legal(&ground, next) {
            return Err(GameError::InvalidAction { attacker: *next, defender: *response });
        }
        defender_view.remove_target(next);
    }
    Ok(ViewPair { attacker_view: ground, defender_view })
}

/// Hashable canonical form of a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(Vec<u64>);

/// Canonical form up to relabelling of exchangeable devices and sinks.
///
/// Devices are described by (type, headed clusters) and sinks by whether
/// they are activated. When every area has the same thresholds, areas are
/// exchangeable too. Non-uniform link models pin identities, so the key
/// then falls back to the raw ids.
pub fn canonical_key(psi: &NetworkState, cfg: &GameConfig) -> StateKey {
    let pinned = !cfg.link.is_uniform();
    let mut per_area: Vec<Vec<u64>> = (0..psi.areas())
        .map(|h| {
            let mut sig: Vec<u64> = psi
                .devices()
                .filter(|d| d.area == h)
                .map(|d| {
                    let base = ((d.kind as u64) << 32) | psi.head_mask(d) as u64;
                    if pinned {
                        (base << 20) ^ d.id as u64
                    } else {
                        base
                    }
                })
                .collect();
            sig.sort_unstable();
            let active = psi.active_sink(h);
            let mut out = vec![psi.sinks(h).len() as u64, (active != NONE) as u64];
            if pinned {
                out.push(active as u64);
                out.extend(psi.sinks(h).iter().map(|&s| s as u64));
            }
            out.push(sig.len() as u64);
            out.extend(sig);
            out
        })
        .collect();
    let symmetric_areas = !pinned
        && (1..cfg.areas).all(|h| {
            (0..cfg.info_types).all(|j| cfg.threshold(j, h) == cfg.threshold(j, 0))
        });
    if symmetric_areas {
        per_area.sort();
    }
    let mut key = Vec::new();
    for area in per_area {
        key.push(u64::MAX);
        key.extend(area);
    }
    StateKey(key)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two info types, three device types (single, single, both), one area.
    pub fn small_config(areas: usize, threshold: u32) -> GameConfig {
        GameConfig {
            areas,
            info_types: 2,
            types: vec![
                DeviceType { name: "a".into(), info: vec![0] },
                DeviceType { name: "b".into(), info: vec![1] },
                DeviceType { name: "ab".into(), info: vec![0, 1] },
            ],
            thresholds: vec![threshold; areas * 2],
            costs: Costs {
                attack_device: vec![0.5, 0.5, 1.0],
                attack_sink: 50.0,
                head_discovery: 20.0,
                active_discovery: 0.0,
                deploy_device: vec![0.5, 0.5, 1.0],
                deploy_sink: 50.0,
            },
            normalizers: Normalizers::default(),
            sink_weight: 15.0,
            ls_target: 3,
            horizon: 1,
            link: LinkModel::default(),
        }
    }

    /// Area 0: devices 1,2 type a; 3 type b; 4,5 type ab; heads lowest ids.
    pub fn five_device_state(cfg: &GameConfig) -> NetworkState {
        let mut psi = NetworkState::empty(cfg.areas, cfg.info_types);
        for kind in [0, 0, 1, 2, 2] {
            psi.add_device(cfg, kind, 0);
        }
        psi.set_head(0, 0, 1);
        psi.set_head(1, 0, 3);
        let s = psi.add_sink(0);
        psi.add_sink(0);
        psi.activate(0, s);
        psi
    }

    #[test]
    fn attacker_set_enumerates_alive_nodes() {
        let cfg = small_config(1, 1);
        let mut psi = NetworkState::empty(1, 2);
        psi.add_device(&cfg, 0, 0);
        psi.add_device(&cfg, 1, 0);
        for _ in 0..4 {
            psi.add_sink(0);
        }
        psi.sinks[0].retain(|&s| s == 4);
        let set = attacker_strategy_set(&psi);
        assert_eq!(
            set,
            vec![
                Action::AttackDevice { device: 1 },
                Action::AttackDevice { device: 2 },
                Action::AttackSink { sink: 4, area: 0 }
            ]
        );
        psi.remove_target(&Action::AttackDevice { device: 1 });
        psi.remove_target(&Action::AttackDevice { device: 2 });
        assert_eq!(attacker_strategy_set(&psi), vec![Action::AttackSink { sink: 4, area: 0 }]);
    }

    #[test]
    fn defender_set_full_when_cluster_has_slack() {
        let cfg = small_config(1, 0);
        let psi = five_device_state(&cfg);
        let set = defender_strategy_set(&psi, &cfg, &Action::AttackDevice { device: 2 }).unwrap();
        assert_eq!(set, full_defender_set(&psi, &cfg));
    }

    #[test]
    fn defender_set_coupled_at_threshold() {
        // cluster 0 = {1,2,4,5} (size 4), cluster 1 = {3,4,5} (size 3)
        let mut cfg = small_config(1, 0);
        cfg.thresholds = vec![4, 0];
        let psi = five_device_state(&cfg);
        let set = defender_strategy_set(&psi, &cfg, &Action::AttackDevice { device: 1 }).unwrap();
        assert_eq!(
            set,
            vec![Action::DeployDevice { kind: 0, area: 0 }, Action::DeployDevice { kind: 2, area: 0 }]
        );
        let lone = defender_strategy_set(&psi, &cfg, &Action::AttackDevice { device: 3 }).unwrap();
        assert_eq!(lone, full_defender_set(&psi, &cfg));
        let sink = defender_strategy_set(&psi, &cfg, &Action::AttackSink { sink: 1, area: 0 }).unwrap();
        assert_eq!(sink, full_defender_set(&psi, &cfg));
    }

    #[test]
    fn validation_rejects_uncoverable_information() {
        let mut cfg = small_config(1, 1);
        assert!(cfg.validate().is_ok());
        cfg.types[1].info = vec![0];
        cfg.types[2].info = vec![0];
        assert!(matches!(cfg.validate(), Err(GameError::Config(_))));
    }

    #[test]
    fn restricted_set_drops_threshold_attacks_for_non_restoring_moves() {
        let mut cfg = small_config(1, 0);
        cfg.thresholds = vec![0, 3];
        let psi = five_device_state(&cfg);
        let all = attacker_strategy_set(&psi);
        // no cluster at threshold other than (1,0)
        let act = Action::ActivateSink { sink: 2, area: 0 };
        let restricted = restricted_attacker_set(&psi, &cfg, &act);
        let removed: Vec<_> = all.iter().filter(|a| !restricted.contains(a)).copied().collect();
        assert_eq!(
            removed,
            vec![
                Action::AttackDevice { device: 3 },
                Action::AttackDevice { device: 4 },
                Action::AttackDevice { device: 5 }
            ]
        );
        let restore = Action::DeployDevice { kind: 1, area: 0 };
        assert_eq!(restricted_attacker_set(&psi, &cfg, &restore), all);
        cfg.thresholds = vec![0, 0];
        assert_eq!(restricted_attacker_set(&psi, &cfg, &act), all);
    }

    #[test]
    fn transition_replaces_destroyed_device() {
        let cfg = small_config(1, 0);
        let psi = five_device_state(&cfg);
        let next = transition(
            &psi,
            &cfg,
            &Action::AttackDevice { device: 3 },
            &Action::DeployDevice { kind: 2, area: 0 },
        )
        .unwrap();
        assert!(next.device(3).is_none());
        assert_eq!(next.device(6).map(|d| d.kind), Some(2));
        assert_eq!(next.cluster(0, 0), &[1, 2, 4, 5, 6]);
        assert_eq!(next.cluster(1, 0), &[4, 5, 6]);
        assert_eq!(next.head(1, 0), NONE);
        assert_eq!(next.device_count(), psi.device_count());
        next.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn transition_sink_replacement_and_activation() {
        let cfg = small_config(1, 0);
        let psi = five_device_state(&cfg);
        let next = transition(&psi, &cfg, &Action::AttackSink { sink: 1, area: 0 }, &Action::DeploySink { area: 0 })
            .unwrap();
        assert_eq!(next.sinks(0), &[2, 3]);
        assert_eq!(next.active_sink(0), NONE);

        let next = transition(
            &psi,
            &cfg,
            &Action::AttackDevice { device: 2 },
            &Action::ActivateSink { sink: 2, area: 0 },
        )
        .unwrap();
        assert_eq!(next.cluster_size(0, 0), 3);
        assert_eq!(next.active_sink(0), 2);
        assert_eq!(next.head(0, 0), 1);
    }

    #[test]
    fn illegal_pairs_are_rejected() {
        let mut cfg = small_config(1, 0);
        cfg.thresholds = vec![4, 0];
        let psi = five_device_state(&cfg);
        let err = transition(&psi, &cfg, &Action::AttackDevice { device: 1 }, &Action::DeploySink { area: 0 });
        assert!(matches!(err, Err(GameError::InvalidAction { .. })));
        let err = transition(&psi, &cfg, &Action::AttackDevice { device: 99 }, &Action::DeploySink { area: 0 });
        assert!(err.is_err());
    }

    #[test]
    fn views_agree_after_full_stage() {
        let cfg = small_config(1, 0);
        let psi = five_device_state(&cfg);
        let views = ViewPair::new(psi);
        let a = Action::AttackDevice { device: 2 };
        let b = Action::DeploySink { area: 0 };
        let next = Action::AttackDevice { device: 5 };
        let v = apply_transition(&views, &cfg, &a, &b, Some(&next)).unwrap();
        assert_eq!(v.attacker_view.device_count(), 4);
        assert_eq!(v.defender_view.device_count(), 3);
        let v2 = apply_transition(&v, &cfg, &next, &Action::DeploySink { area: 0 }, None).unwrap();
        assert_eq!(v2.attacker_view.cluster(0, 0), v.defender_view.cluster(0, 0));
        assert_eq!(v2.attacker_view, v2.defender_view);
    }

    #[test]
    fn canonical_key_ignores_exchangeable_labels() {
        let cfg = small_config(1, 0);
        let psi = five_device_state(&cfg);
        // devices 1 and 2 are both type a, but 1 heads cluster 0
        let a1 = advance(&psi, &cfg, &Action::AttackDevice { device: 4 }, &Action::DeploySink { area: 0 });
        let a2 = advance(&psi, &cfg, &Action::AttackDevice { device: 5 }, &Action::DeploySink { area: 0 });
        assert_eq!(canonical_key(&a1, &cfg), canonical_key(&a2, &cfg));
        let mut moved = psi.clone();
        moved.set_head(0, 0, 2);
        assert_eq!(canonical_key(&moved, &cfg), canonical_key(&psi, &cfg));
        moved.set_head(0, 0, 4);
        assert_ne!(canonical_key(&moved, &cfg), canonical_key(&psi, &cfg));
        let b1 = advance(&psi, &cfg, &Action::AttackDevice { device: 1 }, &Action::DeploySink { area: 0 });
        let b2 = advance(&psi, &cfg, &Action::AttackDevice { device: 2 }, &Action::DeploySink { area: 0 });
        assert_ne!(canonical_key(&b1, &cfg), canonical_key(&b2, &cfg));
    }
}
