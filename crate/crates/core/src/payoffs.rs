//! Stage payoffs: disconnected weight, delivery latency, attack and
//! deployment costs and the defender's deployment utility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::netmodel::{Action, DeviceId, GameConfig, NetworkState, SinkId, NONE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "node", content = "id", rename_all = "snake_case")]
pub enum Node {
    Device(DeviceId),
    Sink(SinkId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityOverride {
    pub from: DeviceId,
    pub to: Node,
    pub capacity: f64,
}

/// Single-hop delay model `m_i / R_ij` plus a per-sink delay to the global sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub packet_size: f64,
    pub capacity: f64,
    pub gs_delay: f64,
    #[serde(default)]
    pub packet_overrides: BTreeMap<DeviceId, f64>,
    #[serde(default)]
    pub capacity_overrides: Vec<CapacityOverride>,
    #[serde(default)]
    pub gs_delay_overrides: BTreeMap<SinkId, f64>,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            packet_size: 1.0,
            capacity: 100.0,
            gs_delay: 0.01,
            packet_overrides: BTreeMap::new(),
            capacity_overrides: Vec::new(),
            gs_delay_overrides: BTreeMap::new(),
        }
    }
}

impl LinkModel {
    pub fn uniform(packet_size: f64, capacity: f64, gs_delay: f64) -> Self {
        LinkModel { packet_size, capacity, gs_delay, ..LinkModel::default() }
    }

    pub fn is_uniform(&self) -> bool {
        self.packet_overrides.is_empty() && self.capacity_overrides.is_empty() && self.gs_delay_overrides.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.packet_size, self.capacity]
            .into_iter()
            .chain(self.packet_overrides.values().copied())
            .chain(self.capacity_overrides.iter().map(|o| o.capacity))
            .all(|x| x > 0.0 && x.is_finite());
        let delays = std::iter::once(self.gs_delay)
            .chain(self.gs_delay_overrides.values().copied())
            .all(|x| x >= 0.0 && x.is_finite());
        if positive && delays {
            Ok(())
        } else {
            Err(GameError::Config("link parameters must be positive and finite".into()))
        }
    }

    /// Λ(i, j) = m_i / R_ij.
    pub fn hop(&self, from: DeviceId, to: Node) -> f64 {
        let m = self.packet_overrides.get(&from).copied().unwrap_or(self.packet_size);
        let r = self
            .capacity_overrides
            .iter()
            .find(|o| o.from == from && o.to == to)
            .map_or(self.capacity, |o| o.capacity);
        m / r
    }

    pub fn gs(&self, sink: SinkId) -> f64 {
        self.gs_delay_overrides.get(&sink).copied().unwrap_or(self.gs_delay)
    }

    /// Λ_jh(f, s, D) = Λ(f, s) + max over members of Λ(n, f).
    pub fn cluster_delay(&self, head: DeviceId, sink: SinkId, members: impl IntoIterator<Item = DeviceId>) -> f64 {
        let spread = members
            .into_iter()
            .filter(|&n| n != head)
            .map(|n| self.hop(n, Node::Device(head)))
            .fold(0.0, f64::max);
        self.hop(head, Node::Sink(sink)) + spread
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayoffTerms {
    pub s_d: f64,
    pub latency: f64,
    pub c_a: f64,
    pub c_d: f64,
    pub u_d: f64,
}

impl PayoffTerms {
    pub fn attacker(&self, cfg: &GameConfig) -> f64 {
        self.s_d - cfg.normalizers.nu * self.c_a
    }

    pub fn defender(&self, cfg: &GameConfig) -> f64 {
        let n = &cfg.normalizers;
        self.u_d - n.eta * self.s_d - n.mu * self.latency - n.lambda * self.c_d
    }
}

/// z_h and z_jh: which areas and clusters are already cut off.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisconnectionFlags {
    pub area: Vec<bool>,
    /// Indexed `area * info_types + info`.
    pub cluster: Vec<bool>,
    info_types: usize,
}

impl DisconnectionFlags {
    pub fn of(psi: &NetworkState) -> Self {
        let m = psi.info_types();
        let area: Vec<bool> = (0..psi.areas()).map(|h| psi.active_sink(h) == NONE).collect();
        let cluster = (0..psi.areas())
            .flat_map(|h| (0..m).map(move |j| (j, h)))
            .map(|(j, h)| psi.head(j, h) == NONE || area[h])
            .collect();
        DisconnectionFlags { area, cluster, info_types: m }
    }

    pub fn cluster(&self, info: usize, area: usize) -> bool {
        self.cluster[area * self.info_types + info]
    }

    pub fn any(&self) -> bool {
        self.area.iter().chain(&self.cluster).any(|&z| z)
    }
}

/// C_a: base cost plus the discovery surcharges.
pub fn attack_cost(attack: &Action, psi: &NetworkState, cfg: &GameConfig) -> f64 {
    let c = &cfg.costs;
    match *attack {
        Action::AttackDevice { device } => psi.device(device).map_or(0.0, |d| {
            let heads = psi.head_mask(d).count_ones() as f64;
            c.attack_device[d.kind] + heads * c.head_discovery
        }),
        Action::AttackSink { sink, area } => {
            let active = (psi.active_sink(area) == sink) as u8 as f64;
            c.attack_sink + active * c.active_discovery
        }
        _ => 0.0,
    }
}

/// (C_d, U_d) of a defender move, evaluated on the network the defender sees.
pub fn deploy_cost_and_utility(response: &Action, psi: &NetworkState, cfg: &GameConfig) -> (f64, f64) {
    match *response {
        Action::DeployDevice { kind, area } => {
            let restored = cfg.types[kind]
                .info
                .iter()
                .filter(|&&j| psi.cluster_size(j, area) < cfg.threshold(j, area))
                .count();
            (cfg.costs.deploy_device[kind], restored as f64)
        }
        Action::DeploySink { area } => {
            let missing = cfg.ls_target.saturating_sub(psi.sinks(area).len() as u32);
            (cfg.costs.deploy_sink, missing as f64)
        }
        _ => (0.0, 0.0),
    }
}

/// Per-state quantities shared by every payoff cell of one stage.
pub struct StageContext<'a> {
    psi: &'a NetworkState,
    cfg: &'a GameConfig,
    flags: DisconnectionFlags,
    /// Σ w_i over the devices of each area.
    area_device_weight: Vec<f64>,
    /// Latency contribution of each area as it stands, `None` if cut off.
    area_latency: Vec<Option<f64>>,
}

#[derive(Default, Clone, Copy)]
struct Mods {
    removed_device: Option<DeviceId>,
    removed_sink: Option<SinkId>,
    new_head: Option<(usize, usize, DeviceId)>,
    new_device: Option<(usize, usize)>,
    activate: Option<(usize, SinkId)>,
}

fn check_pair(attack: &Action, response: &Action) -> Result<()> {
    if attack.is_attacker() && response.is_defender() {
        Ok(())
    } else {
        Err(GameError::UnhandledCase { attacker: *attack, defender: *response })
    }
}

impl<'a> StageContext<'a> {
    pub fn new(psi: &'a NetworkState, cfg: &'a GameConfig) -> Self {
        let flags = DisconnectionFlags::of(psi);
        let mut area_device_weight = vec![0.0; psi.areas()];
        for d in psi.devices() {
            area_device_weight[d.area] += cfg.device_weight(d.kind);
        }
        let mut ctx = StageContext { psi, cfg, flags, area_device_weight, area_latency: Vec::new() };
        ctx.area_latency = (0..psi.areas()).map(|h| ctx.area_delay(h, &Mods::default())).collect();
        ctx
    }

    pub fn flags(&self) -> &DisconnectionFlags {
        &self.flags
    }

    fn w_h(&self, area: usize) -> f64 {
        self.area_device_weight[area] + self.cfg.sink_weight
    }

    fn w_jh(&self, info: usize, area: usize) -> f64 {
        self.psi.cluster_size(info, area) as f64
    }

    fn kind_senses(&self, kind: usize, info: usize) -> bool {
        self.cfg.types[kind].senses(info)
    }

    /// Loss from destroying device `i`: the whole cluster for every cluster it
    /// heads, one unit for every other cluster it belongs to. A deployment of
    /// `deployed` in the same area adds the new device to headless clusters.
    fn device_loss(&self, device: DeviceId, deployed: Option<usize>) -> f64 {
        let Some(d) = self.psi.device(device) else { return 0.0 };
        self.cfg.types[d.kind]
            .info
            .iter()
            .map(|&j| {
                if self.psi.head(j, d.area) == device {
                    let extra = deployed.is_some_and(|k| self.kind_senses(k, j)) as u8 as f64;
                    self.w_jh(j, d.area) + extra
                } else {
                    1.0
                }
            })
            .sum()
    }

    fn sink_loss(&self, sink: SinkId, area: usize, deployed: Option<usize>) -> f64 {
        if self.psi.active_sink(area) == sink {
            let extra = deployed.map_or(0.0, |k| self.cfg.device_weight(k));
            self.w_h(area) + extra
        } else {
            self.cfg.sink_weight
        }
    }

    /// S_D for one pure-strategy pair.
    pub fn disconnected_weight(&self, attack: &Action, response: &Action) -> Result<f64> {
        check_pair(attack, response)?;
        let psi = self.psi;
        let s = match (*attack, *response) {
            (Action::AttackDevice { device }, Action::SetHead { device: k, info, area }) => {
                let credit = if k != device && self.flags.cluster(info, area) {
                    self.w_jh(info, area)
                } else {
                    0.0
                };
                self.device_loss(device, None) - credit
            }
            (Action::AttackDevice { device }, Action::DeployDevice { kind, area }) => {
                let same = psi.device(device).is_some_and(|d| d.area == area);
                self.device_loss(device, same.then_some(kind))
            }
            (Action::AttackDevice { device }, Action::ActivateSink { area, .. }) => {
                let credit = if self.flags.area[area] { self.w_h(area) } else { 0.0 };
                self.device_loss(device, None) - credit
            }
            (Action::AttackDevice { device }, Action::DeploySink { .. }) => self.device_loss(device, None),
            (Action::AttackSink { sink, area }, Action::ActivateSink { sink: k, area: h2 }) => {
                let credit = if self.flags.area[h2] { self.w_h(h2) } else { 0.0 };
                if h2 == area && k != sink {
                    -credit
                } else {
                    self.sink_loss(sink, area, None) - credit
                }
            }
            (Action::AttackSink { sink, area }, Action::DeployDevice { kind, area: h2 }) => {
                self.sink_loss(sink, area, (h2 == area).then_some(kind))
            }
            (Action::AttackSink { sink, area }, Action::DeploySink { .. } | Action::SetHead { .. }) => {
                self.sink_loss(sink, area, None)
            }
            _ => return Err(GameError::UnhandledCase { attacker: *attack, defender: *response }),
        };
        Ok(s)
    }

    /// Sensors cut off by the pair: S_D without sink weights or credits.
    pub fn disconnected_sensors(&self, attack: &Action, response: &Action) -> f64 {
        match (*attack, *response) {
            (Action::AttackDevice { device }, b) => {
                let deployed = match b {
                    Action::DeployDevice { kind, area } if self.psi.device(device).is_some_and(|d| d.area == area) => {
                        Some(kind)
                    }
                    _ => None,
                };
                self.device_loss(device, deployed)
            }
            (Action::AttackSink { sink, area }, b) => {
                if self.psi.active_sink(area) != sink {
                    return 0.0;
                }
                match b {
                    Action::ActivateSink { sink: k, area: h2 } if h2 == area && k != sink => 0.0,
                    Action::DeployDevice { kind, area: h2 } if h2 == area => {
                        self.area_device_weight[area] + self.cfg.device_weight(kind)
                    }
                    _ => self.area_device_weight[area],
                }
            }
            _ => 0.0,
        }
    }

    fn mods(&self, attack: &Action, response: &Action) -> Mods {
        let mut m = Mods::default();
        match *attack {
            Action::AttackDevice { device } => m.removed_device = Some(device),
            Action::AttackSink { sink, .. } => m.removed_sink = Some(sink),
            _ => {}
        }
        match *response {
            Action::SetHead { device, info, area } => m.new_head = Some((info, area, device)),
            Action::DeployDevice { kind, area } => m.new_device = Some((kind, area)),
            Action::ActivateSink { sink, area } => m.activate = Some((area, sink)),
            _ => {}
        }
        m
    }

    /// Delay through area `h` after the modifications, `None` when the area
    /// has no activated sink.
    fn area_delay(&self, h: usize, m: &Mods) -> Option<f64> {
        let psi = self.psi;
        let link = &self.cfg.link;
        let current = psi.active_sink(h);
        let sink = match m.activate {
            Some((area, k)) if area == h && Some(k) != m.removed_sink && psi.sinks(h).contains(&k) => k,
            _ if Some(current) == m.removed_sink => NONE,
            _ => current,
        };
        if sink == NONE {
            return None;
        }
        let newcomer = m
            .new_device
            .filter(|&(_, area)| area == h)
            .map(|(kind, _)| (kind, psi.total_deployed() + 1));
        let mut worst: f64 = 0.0;
        for j in 0..psi.info_types() {
            let members = psi.cluster(j, h);
            let old = psi.head(j, h);
            let head = match m.new_head {
                Some((info, area, k)) if info == j && area == h && Some(k) != m.removed_device && members.contains(&k) => k,
                _ if Some(old) == m.removed_device => NONE,
                _ => old,
            };
            if head == NONE {
                continue;
            }
            let extra = newcomer.filter(|&(kind, _)| self.kind_senses(kind, j)).map(|(_, id)| id);
            let alive = members.iter().copied().filter(|&n| Some(n) != m.removed_device).chain(extra);
            worst = worst.max(link.cluster_delay(head, sink, alive));
        }
        Some(link.gs(sink) + worst)
    }

    /// Λ_t for one pure-strategy pair: the slowest connected area, including
    /// its hop to the global sink. Zero when nothing stays connected.
    pub fn latency(&self, attack: &Action, response: &Action) -> Result<f64> {
        check_pair(attack, response)?;
        let m = self.mods(attack, response);
        let mut touched = Vec::with_capacity(2);
        let psi = self.psi;
        match *attack {
            Action::AttackDevice { device } => touched.extend(psi.device(device).map(|d| d.area)),
            Action::AttackSink { area, .. } => touched.push(area),
            _ => {}
        }
        match *response {
            Action::SetHead { area, .. } | Action::DeployDevice { area, .. } | Action::ActivateSink { area, .. } => {
                touched.push(area)
            }
            _ => {}
        }
        let mut best: f64 = 0.0;
        for h in 0..psi.areas() {
            let v = if touched.contains(&h) { self.area_delay(h, &m) } else { self.area_latency[h] };
            if let Some(v) = v {
                best = best.max(v);
            }
        }
        Ok(best)
    }

    pub fn terms(&self, attack: &Action, response: &Action) -> Result<PayoffTerms> {
        let s_d = self.disconnected_weight(attack, response)?;
        let latency = self.latency(attack, response)?;
        let c_a = attack_cost(attack, self.psi, self.cfg);
        let (c_d, u_d) = self.defender_utility(attack, response);
        Ok(PayoffTerms { s_d, latency, c_a, c_d, u_d })
    }

    /// Deployment cost and utility as the defender sees them, after the attack.
    fn defender_utility(&self, attack: &Action, response: &Action) -> (f64, f64) {
        let cfg = self.cfg;
        match *response {
            Action::DeployDevice { kind, area } => {
                let hit = match *attack {
                    Action::AttackDevice { device } => self.psi.device(device).filter(|d| d.area == area),
                    _ => None,
                };
                let restored = cfg.types[kind]
                    .info
                    .iter()
                    .filter(|&&j| {
                        let lost = hit.is_some_and(|d| cfg.types[d.kind].senses(j)) as u32;
                        self.psi.cluster_size(j, area).saturating_sub(lost) < cfg.threshold(j, area)
                    })
                    .count();
                (cfg.costs.deploy_device[kind], restored as f64)
            }
            Action::DeploySink { area } => {
                let lost = matches!(*attack, Action::AttackSink { area: h, .. } if h == area) as u32;
                let have = (self.psi.sinks(area).len() as u32).saturating_sub(lost);
                (cfg.costs.deploy_sink, cfg.ls_target.saturating_sub(have) as f64)
            }
            _ => (0.0, 0.0),
        }
    }
}

pub fn disconnected_weight(
    attack: &Action,
    response: &Action,
    psi: &NetworkState,
    cfg: &GameConfig,
) -> Result<f64> {
    StageContext::new(psi, cfg).disconnected_weight(attack, response)
}

pub fn latency(attack: &Action, response: &Action, psi: &NetworkState, cfg: &GameConfig) -> Result<f64> {
    StageContext::new(psi, cfg).latency(attack, response)
}

/// P_a = S_D − ν C_a.
pub fn attacker_payoff(attack: &Action, response: &Action, psi: &NetworkState, cfg: &GameConfig) -> Result<f64> {
    Ok(StageContext::new(psi, cfg).terms(attack, response)?.attacker(cfg))
}

/// P_d = U_d − η S_D − μ Λ − λ C_d.
pub fn defender_payoff(attack: &Action, response: &Action, psi: &NetworkState, cfg: &GameConfig) -> Result<f64> {
    Ok(StageContext::new(psi, cfg).terms(attack, response)?.defender(cfg))
}
