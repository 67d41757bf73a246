//! Classical-model transient simulator on the generator-internal reduced
//! network.
//!
//! Each machine is a constant emf behind X'd, loads are constant admittances
//! `(P - jQ)/|V|²` from the solved operating point, and the network is Kron
//! reduced to the internal nodes for every topology the scenario visits.
//! With `δ` in radians and `ω` the speed deviation in per unit,
//!
//! ```text
//! dδ/dt = ω_s ω
//! (2H/ω_s) d²δ/dt² = P_m - P_e(δ) - D dδ/dt
//! ```
//!
//! integrated by classical RK4.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BranchKey, BusId, NetworkCase, PmuRecord, PmuRecordSet, Samples};

/// Shunt admittance of a bolted fault, per unit.
pub const FAULT_ADMITTANCE: Complex64 = Complex64::new(0.0, -1e6);

fn default_dt() -> f64 {
    1e-3
}
fn default_rate() -> f64 {
    60.0
}
fn default_damping() -> f64 {
    0.05
}
fn default_circuit() -> u32 {
    1
}
fn default_stability_limit() -> f64 {
    PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Bolted fault on a branch, `location` measured from `from` (0 and 1
    /// put the fault on the terminal buses).
    ThreePhaseFault {
        from: BusId,
        to: BusId,
        #[serde(default = "default_circuit")]
        circuit: u32,
        location: f64,
    },
    /// Remove the active fault; with `trip` the faulted branch opens too.
    ClearFault {
        #[serde(default)]
        trip: bool,
    },
    TripBranch {
        from: BusId,
        to: BusId,
        #[serde(default = "default_circuit")]
        circuit: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_rate")]
    pub output_rate: f64,
    /// Per-unit damping applied to every machine.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Largest COI-relative angle spread still reported as stable, rad.
    #[serde(default = "default_stability_limit")]
    pub stability_limit: f64,
    pub events: Vec<TimedEvent>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if self.output_rate.is_nan() || self.output_rate <= 0.0 || self.dt.is_nan() || self.dt <= 0.0 {
            return bad("dt and output_rate must be positive".into());
        }
        if self.dt > 1.0 / (2.0 * self.output_rate) + 1e-15 {
            return bad(format!(
                "dt {} exceeds half the output period {}",
                self.dt,
                0.5 / self.output_rate
            ));
        }
        if self.damping < 0.0 {
            return bad("damping must be non-negative".into());
        }
        let mut last = f64::NEG_INFINITY;
        let mut fault_open = false;
        for e in &self.events {
            if !(e.t >= 0.0 && e.t <= self.duration) {
                return bad(format!("event time {} outside [0, {}]", e.t, self.duration));
            }
            if e.t <= last {
                return bad(format!("event times must increase strictly (t = {})", e.t));
            }
            last = e.t;
            match &e.event {
                Event::ThreePhaseFault { location, .. } => {
                    if fault_open {
                        return bad(format!("fault at t = {} while another is active", e.t));
                    }
                    if !(0.0..=1.0).contains(location) {
                        return bad(format!("fault location {location} outside [0, 1]"));
                    }
                    fault_open = true;
                }
                Event::ClearFault { .. } => {
                    if !fault_open {
                        return bad(format!("clear at t = {} without an active fault", e.t));
                    }
                    fault_open = false;
                }
                Event::TripBranch { .. } => {}
            }
        }
        if fault_open {
            return bad("fault without a matching clear event".into());
        }
        Ok(())
    }

    /// Branches open at time `t` (inclusive), in event order.
    pub fn tripped_by(&self, t: f64) -> Vec<BranchKey> {
        let mut out = Vec::new();
        let mut faulted = None;
        for e in self.events.iter().filter(|e| e.t <= t) {
            match e.event {
                Event::ThreePhaseFault {
                    from, to, circuit, ..
                } => faulted = Some(BranchKey::new(from, to, circuit)),
                Event::ClearFault { trip } => {
                    if let (true, Some(k)) = (trip, faulted.take()) {
                        out.push(k);
                    }
                }
                Event::TripBranch { from, to, circuit } => {
                    out.push(BranchKey::new(from, to, circuit))
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub gen_ids: Vec<String>,
    /// Absolute rotor angle per generator, rad.
    pub angles: Vec<Vec<f64>>,
    /// Speed deviation per generator, pu.
    pub speeds: Vec<Vec<f64>>,
    pub bus_ids: Vec<BusId>,
    /// Bus voltage magnitude per bus, pu.
    pub bus_vm: Vec<Vec<f64>>,
    pub stable: bool,
    /// COI-relative angle spread at the last sample, rad.
    pub final_spread_rad: f64,
    pub damping: f64,
    pub dt: f64,
    pub output_rate: f64,
}

impl SimResult {
    pub fn to_pmu_records(&self) -> PmuRecordSet {
        PmuRecordSet {
            records: self
                .gen_ids
                .iter()
                .zip(&self.angles)
                .map(|(id, a)| PmuRecord {
                    gen_id: id.clone(),
                    times: self.times.clone(),
                    samples: Samples::Angles(a.clone()),
                })
                .collect(),
        }
    }

    /// `time_s,bus,vm_pu` rows, time-major.
    pub fn voltages_csv(&self) -> String {
        let mut s = String::from("time_s,bus,vm_pu\n");
        for (m, t) in self.times.iter().enumerate() {
            for (b, v) in self.bus_ids.iter().zip(&self.bus_vm) {
                let _ = writeln!(s, "{t},{b},{}", v[m]);
            }
        }
        s
    }
}

/// Drop the leading `loss_fraction` of samples for the named generators.
pub fn apply_data_loss(
    result: &SimResult,
    gens: &[&str],
    loss_fraction: f64,
) -> Result<PmuRecordSet> {
    result.to_pmu_records().drop_leading(gens, loss_fraction)
}

#[derive(Debug, Clone)]
struct Piece {
    i: usize,
    j: usize,
    y_series: Complex64,
    b_half: f64,
    tap: f64,
}

/// Network data in per unit, ready for admittance assembly.
#[derive(Debug, Clone)]
pub struct SystemModel {
    n: usize,
    bus_ids: Vec<BusId>,
    pieces: Vec<(BranchKey, Piece)>,
    load_y: Vec<Complex64>,
    gen_bus: Vec<usize>,
    xd: Vec<f64>,
    pub gen_ids: Vec<String>,
    pub h: Vec<f64>,
    pub e: Vec<Complex64>,
    pub omega_s: f64,
}

/// Reduced network for one topology plus the map from internal emfs to
/// bus voltages.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub yr: DMatrix<Complex64>,
    vmap: DMatrix<Complex64>,
}

impl SystemModel {
    pub fn new(case: &NetworkCase) -> Result<SystemModel> {
        let n = case.n_buses();
        let index = case.bus_index();
        if case.voltages.len() != n {
            return Err(Error::invalid(format!(
                "simulation needs #BUS_V for all {n} buses, found {}",
                case.voltages.len()
            )));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for bv in &case.voltages {
            v[index[&bv.id]] = bv.phasor();
        }
        let z: HashMap<(BusId, BusId, u32), &crate::ingest::BranchImpedance> = case
            .impedances
            .iter()
            .map(|z| (z.key().unordered(), z))
            .collect();
        let mut pieces = Vec::new();
        for br in case.branches.iter().filter(|b| b.breaker) {
            let zr = z.get(&br.key().unordered()).ok_or_else(|| {
                Error::invalid(format!("no #BRANCH_Z row for closed branch {}", br.key()))
            })?;
            // impedance rows carry their own orientation for the tap side
            let (i, j) = (index[&zr.from], index[&zr.to]);
            let zs = Complex64::new(zr.r_pu, zr.x_pu);
            if zs.norm() == 0.0 {
                return Err(Error::invalid(format!("branch {} has zero impedance", br.key())));
            }
            pieces.push((
                br.key(),
                Piece {
                    i,
                    j,
                    y_series: zs.inv(),
                    b_half: zr.b_pu / 2.0,
                    tap: zr.tap,
                },
            ));
        }
        let base = case.base_mva;
        let load_y: Vec<Complex64> = case
            .buses
            .iter()
            .zip(&v)
            .map(|(b, vb)| Complex64::new(b.load_p_mw, -b.load_q_mvar) / base / vb.norm_sqr())
            .collect();

        let mut model = SystemModel {
            n,
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            pieces,
            load_y,
            gen_bus: Vec::new(),
            xd: Vec::new(),
            gen_ids: Vec::new(),
            h: Vec::new(),
            e: Vec::new(),
            omega_s: 2.0 * PI * case.freq_hz,
        };

        // generator complex output from the network solution at its bus
        let y0 = model.ybus(&model.pieces.iter().map(|p| p.1.clone()).collect::<Vec<_>>(), n);
        let inj = &y0 * DMatrix::from_column_slice(n, 1, &v);
        let mut cap_at: HashMap<usize, f64> = HashMap::new();
        let mut count_at: HashMap<usize, usize> = HashMap::new();
        for g in &case.generators {
            *cap_at.entry(index[&g.bus]).or_default() += g.p_capacity_mw;
            *count_at.entry(index[&g.bus]).or_default() += 1;
        }
        for g in &case.generators {
            if g.xd_prime_pu.is_nan() || g.xd_prime_pu <= 0.0 || g.inertia_h_s.is_nan() || g.inertia_h_s <= 0.0 {
                return Err(Error::invalid(format!(
                    "generator {} needs positive h_s and xdp_pu for simulation",
                    g.gen_id
                )));
            }
            let b = index[&g.bus];
            let s_bus = v[b] * inj[(b, 0)].conj()
                + Complex64::new(case.buses[b].load_p_mw, case.buses[b].load_q_mvar) / base;
            let share = if cap_at[&b] > 0.0 {
                g.p_capacity_mw / cap_at[&b]
            } else {
                1.0 / count_at[&b] as f64
            };
            let s = s_bus * share;
            let i = (s / v[b]).conj();
            model.e.push(v[b] + Complex64::new(0.0, g.xd_prime_pu) * i);
            model.gen_bus.push(b);
            model.xd.push(g.xd_prime_pu);
            model.h.push(g.inertia_h_s);
            model.gen_ids.push(g.gen_id.clone());
        }
        if model.e.is_empty() {
            return Err(Error::invalid("simulation needs at least one generator"));
        }
        Ok(model)
    }

    pub fn n_gen(&self) -> usize {
        self.e.len()
    }

    fn ybus(&self, pieces: &[Piece], size: usize) -> DMatrix<Complex64> {
        let mut y = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
        for p in pieces {
            let sh = Complex64::new(0.0, p.b_half);
            y[(p.i, p.i)] += (p.y_series + sh) / (p.tap * p.tap);
            y[(p.j, p.j)] += p.y_series + sh;
            y[(p.i, p.j)] -= p.y_series / p.tap;
            y[(p.j, p.i)] -= p.y_series / p.tap;
        }
        y
    }

    /// Reduce the network with `tripped` branches removed and an optional
    /// fault `(branch, location from branch.from)`.
    pub fn reduce(&self, tripped: &[BranchKey], fault: Option<(BranchKey, f64)>) -> Result<Reduced> {
        let mut pieces: Vec<Piece> = Vec::with_capacity(self.pieces.len() + 1);
        let mut fault_bus = None;
        let mut size = self.n;
        for (key, p) in &self.pieces {
            if tripped.iter().any(|t| t.same_circuit(*key)) {
                continue;
            }
            match fault {
                Some((fk, loc)) if fk.same_circuit(*key) => {
                    // location is measured from fk.from; pieces are oriented by impedance row
                    let from_idx = self.bus_ids.iter().position(|&b| b == fk.from);
                    let a = if from_idx == Some(p.i) { loc } else { 1.0 - loc };
                    if a <= 0.0 {
                        fault_bus = Some(p.i);
                        pieces.push(p.clone());
                    } else if a >= 1.0 {
                        fault_bus = Some(p.j);
                        pieces.push(p.clone());
                    } else {
                        let f = self.n;
                        size = self.n + 1;
                        fault_bus = Some(f);
                        pieces.push(Piece {
                            i: p.i,
                            j: f,
                            y_series: p.y_series / a,
                            b_half: p.b_half * a,
                            tap: p.tap,
                        });
                        pieces.push(Piece {
                            i: f,
                            j: p.j,
                            y_series: p.y_series / (1.0 - a),
                            b_half: p.b_half * (1.0 - a),
                            tap: 1.0,
                        });
                    }
                }
                _ => pieces.push(p.clone()),
            }
        }
        if let Some((fk, _)) = fault {
            if fault_bus.is_none() {
                return Err(Error::invalid(format!("faulted branch {fk} is not in service")));
            }
        }
        let mut y = self.ybus(&pieces, size);
        for (i, yl) in self.load_y.iter().enumerate() {
            y[(i, i)] += yl;
        }
        let ng = self.n_gen();
        let mut yinj = DMatrix::from_element(size, ng, Complex64::new(0.0, 0.0));
        for k in 0..ng {
            let yg = Complex64::new(0.0, -1.0 / self.xd[k]);
            y[(self.gen_bus[k], self.gen_bus[k])] += yg;
            yinj[(self.gen_bus[k], k)] = yg;
        }
        if let Some(f) = fault_bus {
            y[(f, f)] += FAULT_ADMITTANCE;
        }
        self.check_islands(&pieces, size)?;
        let vmap = y.lu().solve(&yinj).ok_or_else(|| {
            Error::SingularReduction("bus admittance matrix is singular".into())
        })?;
        let mut yr = -(yinj.transpose() * &vmap);
        for k in 0..ng {
            yr[(k, k)] += Complex64::new(0.0, -1.0 / self.xd[k]);
        }
        let vmap = vmap.rows(0, self.n).into_owned();
        Ok(Reduced { yr, vmap })
    }

    /// Every bus must reach a generator, and every generator must reach
    /// something other than its own terminal.
    fn check_islands(&self, pieces: &[Piece], size: usize) -> Result<()> {
        let mut parent: Vec<usize> = (0..size).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for p in pieces {
            let (a, b) = (find(&mut parent, p.i), find(&mut parent, p.j));
            parent[a] = b;
        }
        let mut size_of: HashMap<usize, usize> = HashMap::new();
        for x in 0..self.n {
            *size_of.entry(find(&mut parent, x)).or_default() += 1;
        }
        let roots_with_gen: BTreeSet<usize> =
            self.gen_bus.iter().map(|&b| find(&mut parent, b)).collect();
        for k in 0..self.n_gen() {
            let r = find(&mut parent, self.gen_bus[k]);
            if size_of[&r] == 1 && self.load_y[self.gen_bus[k]].norm() == 0.0 {
                return Err(Error::SingularReduction(format!(
                    "generator {} is islanded with no path to any load or machine",
                    self.gen_ids[k]
                )));
            }
        }
        for x in 0..self.n {
            if !roots_with_gen.contains(&find(&mut parent, x)) && self.load_y[x].norm() == 0.0 {
                return Err(Error::SingularReduction(format!(
                    "bus {} has no path to any generator",
                    self.bus_ids[x]
                )));
            }
        }
        Ok(())
    }

    pub fn initial_angles(&self) -> Vec<f64> {
        self.e.iter().map(|e| e.arg()).collect()
    }

    /// Electrical power of every machine for rotor angles `delta`.
    pub fn electrical_power(&self, red: &Reduced, delta: &[f64]) -> Vec<f64> {
        let ec: Vec<Complex64> = self
            .e
            .iter()
            .zip(delta)
            .map(|(e, &d)| Complex64::from_polar(e.norm(), d))
            .collect();
        let ng = ec.len();
        (0..ng)
            .map(|i| {
                let mut cur = Complex64::new(0.0, 0.0);
                for (j, e) in ec.iter().enumerate() {
                    cur += red.yr[(i, j)] * e;
                }
                (ec[i] * cur.conj()).re
            })
            .collect()
    }

    pub fn bus_voltages(&self, red: &Reduced, delta: &[f64]) -> Vec<f64> {
        let ec = DMatrix::from_iterator(
            self.n_gen(),
            1,
            self.e.iter().zip(delta).map(|(e, &d)| Complex64::from_polar(e.norm(), d)),
        );
        (&red.vmap * ec).iter().map(|v| v.norm()).collect()
    }
}

/// Swing dynamics for one reduced network.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    pub model: &'a SystemModel,
    pub red: &'a Reduced,
    pub pm: &'a [f64],
    pub damping: f64,
}

impl Dynamics<'_> {
    /// `(dδ/dt, dω/dt)`
    pub fn derivative(&self, delta: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ws = self.model.omega_s;
        let pe = self.model.electrical_power(self.red, delta);
        let dd = omega.iter().map(|w| ws * w).collect();
        let dw = (0..delta.len())
            .map(|i| (self.pm[i] - pe[i] - self.damping * ws * omega[i]) / (2.0 * self.model.h[i]))
            .collect();
        (dd, dw)
    }

    pub fn rk4(&self, delta: &mut [f64], omega: &mut [f64], h: f64) {
        let n = delta.len();
        let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> {
            x.iter().zip(k).map(|(a, b)| a + s * b).collect()
        };
        let (k1d, k1w) = self.derivative(delta, omega);
        let (k2d, k2w) = self.derivative(&axpy(delta, &k1d, h / 2.0), &axpy(omega, &k1w, h / 2.0));
        let (k3d, k3w) = self.derivative(&axpy(delta, &k2d, h / 2.0), &axpy(omega, &k2w, h / 2.0));
        let (k4d, k4w) = self.derivative(&axpy(delta, &k3d, h), &axpy(omega, &k3w, h));
        for i in 0..n {
            delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
            omega[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
    }

    /// Inertia-weighted mean acceleration, rad/s².
    pub fn coi_acceleration(&self, delta: &[f64], omega: &[f64]) -> f64 {
        let (_, dw) = self.derivative(delta, omega);
        let hs: f64 = self.model.h.iter().sum();
        self.model.omega_s * self.model.h.iter().zip(&dw).map(|(h, a)| h * a).sum::<f64>() / hs
    }

    /// Transient energy of a lossless reduced network: kinetic plus
    /// potential `-Σ P_m δ_i - Σ_{i<j} E_i E_j B_ij cos(δ_i - δ_j)`.
    pub fn energy(&self, delta: &[f64], omega: &[f64]) -> f64 {
        let ws = self.model.omega_s;
        let n = delta.len();
        let mut e = 0.0;
        for i in 0..n {
            e += self.model.h[i] * ws * omega[i] * omega[i];
            e -= self.pm[i] * delta[i];
            for j in i + 1..n {
                let b = self.red.yr[(i, j)].im;
                e -= self.model.e[i].norm() * self.model.e[j].norm() * b * (delta[i] - delta[j]).cos();
            }
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Topology {
    Fault(BranchKey, f64),
    Healthy,
}

/// Run `scenario` from the solved operating point in `case`.
pub fn simulate(case: &NetworkCase, scenario: &Scenario) -> Result<SimResult> {
    scenario.validate()?;
    let model = SystemModel::new(case)?;
    let base = model.reduce(&[], None)?;
    let mut delta = model.initial_angles();
    let mut omega = vec![0.0; model.n_gen()];
    // mechanical power equals the pre-event electrical power exactly
    let pm = model.electrical_power(&base, &delta);

    let mut tripped: Vec<BranchKey> = Vec::new();
    let mut topology = Topology::Healthy;
    let mut red = base;

    let rate = scenario.output_rate;
    let n_out = (scenario.duration * rate + 1e-9).floor() as usize;
    let mut targets: Vec<f64> = (1..=n_out).map(|m| m as f64 / rate).collect();
    targets.extend(scenario.events.iter().map(|e| e.t));
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let ng = model.n_gen();
    let mut times = vec![0.0];
    let mut angles: Vec<Vec<f64>> = delta.iter().map(|&d| vec![d]).collect();
    let mut speeds: Vec<Vec<f64>> = vec![vec![0.0]; ng];
    let mut bus_vm: Vec<Vec<f64>> = model
        .bus_voltages(&red, &delta)
        .into_iter()
        .map(|v| vec![v])
        .collect();

    let mut next_event = 0;
    let mut t = 0.0;
    let apply_events = |t: f64,
                            next_event: &mut usize,
                            tripped: &mut Vec<BranchKey>,
                            topology: &mut Topology|
     -> bool {
        let mut changed = false;
        while *next_event < scenario.events.len() && scenario.events[*next_event].t <= t + 1e-12 {
            match scenario.events[*next_event].event {
                Event::ThreePhaseFault {
                    from,
                    to,
                    circuit,
                    location,
                } => *topology = Topology::Fault(BranchKey::new(from, to, circuit), location),
                Event::ClearFault { trip } => {
                    if let (true, Topology::Fault(k, _)) = (trip, *topology) {
                        tripped.push(k);
                    }
                    *topology = Topology::Healthy;
                }
                Event::TripBranch { from, to, circuit } => {
                    tripped.push(BranchKey::new(from, to, circuit))
                }
            }
            *next_event += 1;
            changed = true;
        }
        changed
    };
    if apply_events(t, &mut next_event, &mut tripped, &mut topology) {
        red = reduce_for(&model, &tripped, topology)?;
    }
    for &tg in &targets {
        if tg <= t {
            continue;
        }
        let steps = ((tg - t) / scenario.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (tg - t) / steps as f64;
        let dyn_ = Dynamics {
            model: &model,
            red: &red,
            pm: &pm,
            damping: scenario.damping,
        };
        for _ in 0..steps {
            dyn_.rk4(&mut delta, &mut omega, h);
        }
        t = tg;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numerical(format!("rotor angles diverged at t = {t}")));
        }
        if apply_events(t, &mut next_event, &mut tripped, &mut topology) {
            red = reduce_for(&model, &tripped, topology)?;
        }
        let m = (t * rate).round();
        if (t * rate - m).abs() < 1e-6 {
            times.push(m / rate);
            for k in 0..ng {
                angles[k].push(delta[k]);
                speeds[k].push(omega[k]);
            }
            for (b, v) in model.bus_voltages(&red, &delta).into_iter().enumerate() {
                bus_vm[b].push(v);
            }
        }
    }

    let hs: f64 = model.h.iter().sum();
    let coi: f64 = model.h.iter().zip(&delta).map(|(h, d)| h * d).sum::<f64>() / hs;
    let rel: Vec<f64> = delta.iter().map(|d| d - coi).collect();
    let spread = rel.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - rel.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SimResult {
        times,
        gen_ids: model.gen_ids.clone(),
        angles,
        speeds,
        bus_ids: model.bus_ids.clone(),
        bus_vm,
        stable: spread < scenario.stability_limit,
        final_spread_rad: spread,
        damping: scenario.damping,
        dt: scenario.dt,
        output_rate: rate,
    })
}

fn reduce_for(model: &SystemModel, tripped: &[BranchKey], topology: Topology) -> Result<Reduced> {
    match topology {
        Topology::Healthy => model.reduce(tripped, None),
        Topology::Fault(k, loc) => model.reduce(tripped, Some((k, loc))),
    }
}
