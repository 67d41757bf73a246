//! Readers and writers for the sectioned network CSV and the PMU CSV.
//!
//! `network.csv` is a sequence of sections, each introduced by a header line
//! of the form `#NAME col,col,...`:
//!
//! ```text
//! #BUS id,load_p_mw,load_q_mvar
//! #BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker
//! #GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu
//! ```
//!
//! Three optional sections carry what the transient simulator needs:
//! `#SYSTEM base_mva,freq_hz`, `#BUS_V id,vm_pu,va_deg` (solved voltages) and
//! `#BRANCH_Z from,to,circuit,r_pu,x_pu,b_pu,tap`.
//!
//! Angles are degrees on disk and radians in memory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub load_p_mw: f64,
    pub load_q_mvar: f64,
}

/// Identifies one circuit between two buses. Orientation is significant for
/// flows but not for identity: `(4,3,1)` and `(3,4,1)` name the same circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchKey {
    pub from: BusId,
    pub to: BusId,
    pub circuit: u32,
}

impl BranchKey {
    pub fn new(from: BusId, to: BusId, circuit: u32) -> Self {
        Self { from, to, circuit }
    }

    /// Orientation-free form used for lookups.
    pub fn unordered(self) -> (BusId, BusId, u32) {
        (self.from.min(self.to), self.from.max(self.to), self.circuit)
    }

    pub fn same_circuit(self, other: BranchKey) -> bool {
        self.unordered() == other.unordered()
    }
}

impl std::fmt::Display for BranchKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.circuit == 1 {
            write!(f, "{}-{}", self.from, self.to)
        } else {
            write!(f, "{}-{}#{}", self.from, self.to, self.circuit)
        }
    }
}

/// Parses the `Display` form, `3-4` or `3-4#2`.
impl std::str::FromStr for BranchKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("branch '{s}' (expected FROM-TO or FROM-TO#CIRCUIT)"));
        let (ends, circuit) = match s.trim().split_once('#') {
            Some((e, c)) => (e, c.parse().map_err(|_| bad())?),
            None => (s.trim(), 1),
        };
        let (from, to) = ends.split_once('-').ok_or_else(bad)?;
        Ok(BranchKey {
            from: from.trim().parse().map_err(|_| bad())?,
            to: to.trim().parse().map_err(|_| bad())?,
            circuit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub circuit: u32,
    /// Signed active flow measured at the from-side terminal.
    pub p_from_mw: f64,
    /// Signed active flow measured at the to-side terminal.
    pub p_to_mw: f64,
    /// Breaker closed.
    pub breaker: bool,
}

impl Branch {
    pub fn key(&self) -> BranchKey {
        BranchKey::new(self.from, self.to, self.circuit)
    }

    /// Loss-averaged absolute flow, `(|P_ij| + |P_ji|) / 2`.
    pub fn mean_abs_flow(&self) -> f64 {
        (self.p_from_mw.abs() + self.p_to_mw.abs()) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub gen_id: String,
    pub bus: BusId,
    pub p_capacity_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    pub inertia_h_s: f64,
    pub xd_prime_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchImpedance {
    pub from: BusId,
    pub to: BusId,
    pub circuit: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    pub b_pu: f64,
    /// Off-nominal turns ratio on the from side; 1.0 for lines.
    pub tap: f64,
}

impl BranchImpedance {
    pub fn key(&self) -> BranchKey {
        BranchKey::new(self.from, self.to, self.circuit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltage {
    pub id: BusId,
    pub vm_pu: f64,
    pub va_rad: f64,
}

impl BusVoltage {
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.vm_pu, self.va_rad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub freq_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub voltages: Vec<BusVoltage>,
    pub impedances: Vec<BranchImpedance>,
}

impl Default for NetworkCase {
    fn default() -> Self {
        Self {
            base_mva: 100.0,
            freq_hz: 60.0,
            buses: Vec::new(),
            branches: Vec::new(),
            generators: Vec::new(),
            voltages: Vec::new(),
            impedances: Vec::new(),
        }
    }
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn generator(&self, gen_id: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.gen_id == gen_id)
    }

    pub fn find_branch(&self, key: BranchKey) -> Option<usize> {
        self.branches.iter().position(|b| b.key().same_circuit(key))
    }

    /// Copy of the case with the listed circuits' breakers opened.
    pub fn with_open_branches(&self, keys: &[BranchKey]) -> Result<NetworkCase> {
        let mut out = self.clone();
        for &key in keys {
            let idx = out
                .find_branch(key)
                .ok_or_else(|| Error::invalid(format!("branch {key} not in case")))?;
            out.branches[idx].breaker = false;
        }
        Ok(out)
    }

    /// Generator active output per bus implied by the solved flows:
    /// load plus the sum of flows leaving the bus over every branch in the
    /// flow solution, open or closed.
    pub fn injected_dispatch_mw(&self) -> BTreeMap<BusId, f64> {
        let mut inj: BTreeMap<BusId, f64> =
            self.buses.iter().map(|b| (b.id, b.load_p_mw)).collect();
        for br in &self.branches {
            *inj.entry(br.from).or_default() += br.p_from_mw;
            *inj.entry(br.to).or_default() += br.p_to_mw;
        }
        inj
    }

    /// Pre-fault dispatch per generator: the bus injection split across the
    /// bus's generators in proportion to capacity.
    pub fn generator_dispatch_mw(&self) -> Vec<f64> {
        let inj = self.injected_dispatch_mw();
        self.generators
            .iter()
            .map(|g| {
                let same_bus: Vec<&Generator> =
                    self.generators.iter().filter(|o| o.bus == g.bus).collect();
                let total_cap: f64 = same_bus.iter().map(|o| o.p_capacity_mw).sum();
                let share = if total_cap > 0.0 {
                    g.p_capacity_mw / total_cap
                } else {
                    1.0 / same_bus.len() as f64
                };
                inj.get(&g.bus).copied().unwrap_or(0.0) * share
            })
            .collect()
    }

    /// Check referential integrity and uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(Error::Duplicate(format!("bus id {}", b.id)));
            }
        }
        let mut keys = HashSet::new();
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return Err(Error::UnknownBus {
                        what: format!("branch {}", br.key()),
                        bus: end,
                    });
                }
            }
            if br.from == br.to {
                return Err(Error::invalid(format!("branch {} is a self-loop", br.key())));
            }
            if !keys.insert(br.key().unordered()) {
                return Err(Error::Duplicate(format!("branch {}", br.key())));
            }
        }
        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return Err(Error::UnknownBus {
                    what: format!("generator {}", g.gen_id),
                    bus: g.bus,
                });
            }
            if !gen_ids.insert(g.gen_id.as_str()) {
                return Err(Error::Duplicate(format!("generator {}", g.gen_id)));
            }
        }
        let mut vids = HashSet::new();
        for v in &self.voltages {
            if !ids.contains(&v.id) {
                return Err(Error::UnknownBus {
                    what: "bus voltage".into(),
                    bus: v.id,
                });
            }
            if !vids.insert(v.id) {
                return Err(Error::Duplicate(format!("voltage for bus {}", v.id)));
            }
        }
        let mut zkeys = HashSet::new();
        for z in &self.impedances {
            if !keys.contains(&z.key().unordered()) {
                return Err(Error::invalid(format!(
                    "impedance row {} has no matching #BRANCH row",
                    z.key()
                )));
            }
            if !zkeys.insert(z.key().unordered()) {
                return Err(Error::Duplicate(format!("impedance for branch {}", z.key())));
            }
        }
        Ok(())
    }
}

/// A row the loader could not turn into a record.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// Outcome of a lenient parse: every data row is either in `value` or in
/// `errors`.
#[derive(Debug, Clone)]
pub struct ParseReport<T> {
    pub value: T,
    pub data_rows: usize,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    System,
    Bus,
    BusV,
    Branch,
    BranchZ,
    Gen,
}

impl Section {
    fn from_header(name: &str) -> Option<(Section, &'static str)> {
        Some(match name {
            "SYSTEM" => (Section::System, "base_mva,freq_hz"),
            "BUS" => (Section::Bus, "id,load_p_mw,load_q_mvar"),
            "BUS_V" => (Section::BusV, "id,vm_pu,va_deg"),
            "BRANCH" => (Section::Branch, "from,to,circuit,p_from_mw,p_to_mw,breaker"),
            "BRANCH_Z" => (Section::BranchZ, "from,to,circuit,r_pu,x_pu,b_pu,tap"),
            "GEN" => (Section::Gen, "gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu"),
            _ => return None,
        })
    }

    fn width(self) -> usize {
        match self {
            Section::System => 2,
            Section::Bus | Section::BusV => 3,
            Section::Branch => 6,
            Section::BranchZ | Section::Gen => 7,
        }
    }
}

fn num(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .parse()
        .map_err(|_| format!("{name}: '{field}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{name}: '{field}' is not finite"));
    }
    Ok(v)
}

fn uint(field: &str, name: &str) -> std::result::Result<u32, String> {
    field
        .parse()
        .map_err(|_| format!("{name}: '{field}' is not a non-negative integer"))
}

fn boolean(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field.to_ascii_lowercase().as_str() {
        "1" | "true" | "closed" => Ok(true),
        "0" | "false" | "open" => Ok(false),
        _ => Err(format!("{name}: '{field}' is not a boolean")),
    }
}

fn parse_row(case: &mut NetworkCase, section: Section, f: &[&str]) -> std::result::Result<(), String> {
    if f.len() != section.width() {
        return Err(format!(
            "expected {} fields, found {}",
            section.width(),
            f.len()
        ));
    }
    match section {
        Section::System => {
            case.base_mva = num(f[0], "base_mva")?;
            case.freq_hz = num(f[1], "freq_hz")?;
            if case.base_mva <= 0.0 || case.freq_hz <= 0.0 {
                return Err("base_mva and freq_hz must be positive".into());
            }
        }
        Section::Bus => case.buses.push(Bus {
            id: uint(f[0], "id")?,
            load_p_mw: num(f[1], "load_p_mw")?,
            load_q_mvar: num(f[2], "load_q_mvar")?,
        }),
        Section::BusV => case.voltages.push(BusVoltage {
            id: uint(f[0], "id")?,
            vm_pu: num(f[1], "vm_pu")?,
            va_rad: num(f[2], "va_deg")?.to_radians(),
        }),
        Section::Branch => case.branches.push(Branch {
            from: uint(f[0], "from")?,
            to: uint(f[1], "to")?,
            circuit: uint(f[2], "circuit")?,
            p_from_mw: num(f[3], "p_from_mw")?,
            p_to_mw: num(f[4], "p_to_mw")?,
            breaker: boolean(f[5], "breaker")?,
        }),
        Section::BranchZ => {
            let tap = num(f[6], "tap")?;
            if tap <= 0.0 {
                return Err("tap must be positive".into());
            }
            case.impedances.push(BranchImpedance {
                from: uint(f[0], "from")?,
                to: uint(f[1], "to")?,
                circuit: uint(f[2], "circuit")?,
                r_pu: num(f[3], "r_pu")?,
                x_pu: num(f[4], "x_pu")?,
                b_pu: num(f[5], "b_pu")?,
                tap,
            })
        }
        Section::Gen => {
            if f[0].is_empty() {
                return Err("gen_id is empty".into());
            }
            let xd = num(f[6], "xdp_pu")?;
            let h = num(f[5], "h_s")?;
            if xd < 0.0 || h < 0.0 {
                return Err("h_s and xdp_pu must be non-negative".into());
            }
            case.generators.push(Generator {
                gen_id: f[0].to_string(),
                bus: uint(f[1], "bus")?,
                p_capacity_mw: num(f[2], "p_cap_mw")?,
                q_min_mvar: num(f[3], "q_min_mvar")?,
                q_max_mvar: num(f[4], "q_max_mvar")?,
                inertia_h_s: h,
                xd_prime_pu: xd,
            })
        }
    }
    Ok(())
}

/// Parse every row, collecting row-level failures instead of stopping.
/// Structural problems (unknown section, wrong column header, data before a
/// header) are reported as row errors too.
pub fn parse_network_lenient(text: &str) -> ParseReport<NetworkCase> {
    let mut case = NetworkCase::default();
    let mut errors = Vec::new();
    let mut data_rows = 0;
    let mut section: Option<Section> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let mut parts = header.splitn(2, char::is_whitespace);
            let name = parts.next().unwrap_or("");
            let cols: String = parts
                .next()
                .unwrap_or("")
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
            match Section::from_header(name) {
                Some((s, expected)) if cols == expected => section = Some(s),
                Some((_, expected)) => {
                    section = None;
                    errors.push(RowError {
                        line: line_no,
                        message: format!("section #{name} must have columns {expected}"),
                    });
                }
                None => {
                    section = None;
                    errors.push(RowError {
                        line: line_no,
                        message: format!("unknown section #{name}"),
                    });
                }
            }
            continue;
        }
        data_rows += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let outcome = match section {
            Some(s) => parse_row(&mut case, s, &fields),
            None => Err("data row outside a valid section".to_string()),
        };
        if let Err(message) = outcome {
            errors.push(RowError {
                line: line_no,
                message,
            });
        }
    }
    ParseReport {
        value: case,
        data_rows,
        errors,
    }
}

/// Strict parse: any row error fails, then referential integrity is checked.
pub fn parse_network_case(text: &str) -> Result<NetworkCase> {
    let report = parse_network_lenient(text);
    if let Some(first) = report.errors.first() {
        let extra = report.errors.len() - 1;
        let message = if extra > 0 {
            format!("{} ({extra} more row errors)", first.message)
        } else {
            first.message.clone()
        };
        return Err(Error::parse(first.line, message));
    }
    report.value.validate()?;
    Ok(report.value)
}

pub fn load_network_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_network_case(&text)
}

/// Serialize in the sectioned format. Optional sections are written only
/// when non-empty. Floats use the shortest round-trip representation.
pub fn write_network_case(case: &NetworkCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "#SYSTEM base_mva,freq_hz");
    let _ = writeln!(s, "{},{}", case.base_mva, case.freq_hz);
    let _ = writeln!(s, "#BUS id,load_p_mw,load_q_mvar");
    for b in &case.buses {
        let _ = writeln!(s, "{},{},{}", b.id, b.load_p_mw, b.load_q_mvar);
    }
    if !case.voltages.is_empty() {
        let _ = writeln!(s, "#BUS_V id,vm_pu,va_deg");
        for v in &case.voltages {
            let _ = writeln!(s, "{},{},{}", v.id, v.vm_pu, v.va_rad.to_degrees());
        }
    }
    let _ = writeln!(s, "#BRANCH from,to,circuit,p_from_mw,p_to_mw,breaker");
    for b in &case.branches {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            b.from,
            b.to,
            b.circuit,
            b.p_from_mw,
            b.p_to_mw,
            u8::from(b.breaker)
        );
    }
    if !case.impedances.is_empty() {
        let _ = writeln!(s, "#BRANCH_Z from,to,circuit,r_pu,x_pu,b_pu,tap");
        for z in &case.impedances {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                z.from, z.to, z.circuit, z.r_pu, z.x_pu, z.b_pu, z.tap
            );
        }
    }
    let _ = writeln!(s, "#GEN gen_id,bus,p_cap_mw,q_min_mvar,q_max_mvar,h_s,xdp_pu");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            g.gen_id,
            g.bus,
            g.p_capacity_mw,
            g.q_min_mvar,
            g.q_max_mvar,
            g.inertia_h_s,
            g.xd_prime_pu
        );
    }
    s
}

// ---------------------------------------------------------------------------
// PMU records

/// Terminal phasor sample, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasorSample {
    pub vm_pu: f64,
    pub va_rad: f64,
    pub im_pu: f64,
    pub ia_rad: f64,
}

impl PhasorSample {
    pub fn voltage(&self) -> Complex64 {
        Complex64::from_polar(self.vm_pu, self.va_rad)
    }

    pub fn current(&self) -> Complex64 {
        Complex64::from_polar(self.im_pu, self.ia_rad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Samples {
    /// Rotor angles in radians.
    Angles(Vec<f64>),
    Phasors(Vec<PhasorSample>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Angles(v) => v.len(),
            Samples::Phasors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Samples {
        match self {
            Samples::Angles(v) => Samples::Angles(idx.iter().map(|&i| v[i]).collect()),
            Samples::Phasors(v) => Samples::Phasors(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmuRecord {
    pub gen_id: String,
    /// Strictly increasing sample times, seconds.
    pub times: Vec<f64>,
    pub samples: Samples,
}

impl PmuRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PmuRecordSet {
    pub records: Vec<PmuRecord>,
}

impl PmuRecordSet {
    pub fn get(&self, gen_id: &str) -> Option<&PmuRecord> {
        self.records.iter().find(|r| r.gen_id == gen_id)
    }

    /// Keep samples with `t_start <= t <= t_end` (1e-9 s slack on both ends).
    pub fn window(&self, t_start: f64, t_end: f64) -> PmuRecordSet {
        const SLACK: f64 = 1e-9;
        let records = self
            .records
            .iter()
            .map(|r| {
                let idx: Vec<usize> = r
                    .times
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t >= t_start - SLACK && t <= t_end + SLACK)
                    .map(|(i, _)| i)
                    .collect();
                PmuRecord {
                    gen_id: r.gen_id.clone(),
                    times: idx.iter().map(|&i| r.times[i]).collect(),
                    samples: r.samples.select(&idx),
                }
            })
            .collect();
        PmuRecordSet { records }
    }

    /// Remove the leading `fraction` of samples from the named records,
    /// emulating lost PMU data. Other records are untouched.
    pub fn drop_leading(&self, gen_ids: &[&str], fraction: f64) -> Result<PmuRecordSet> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "loss fraction {fraction} outside [0, 1)"
            )));
        }
        for id in gen_ids {
            if self.get(id).is_none() {
                return Err(Error::UnknownGenerator((*id).to_string()));
            }
        }
        let records = self
            .records
            .iter()
            .map(|r| {
                if !gen_ids.contains(&r.gen_id.as_str()) {
                    return r.clone();
                }
                let drop = (fraction * r.len() as f64).round() as usize;
                let idx: Vec<usize> = (drop..r.len()).collect();
                PmuRecord {
                    gen_id: r.gen_id.clone(),
                    times: idx.iter().map(|&i| r.times[i]).collect(),
                    samples: r.samples.select(&idx),
                }
            })
            .collect();
        Ok(PmuRecordSet { records })
    }
}

enum PmuLayout {
    Angle,
    Phasor,
}

/// Parse `pmu.csv`. Rows may be interleaved across generators in any order;
/// each record comes back sorted by time. Records keep the order in which
/// their generator first appears.
pub fn parse_pmu_records<R: std::io::Read>(reader: R) -> Result<PmuRecordSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let layout = match cols.as_slice() {
        ["time_s", "gen_id", "angle_deg"] => PmuLayout::Angle,
        ["time_s", "gen_id", "vm_pu", "va_deg", "im_pu", "ia_deg"] => PmuLayout::Phasor,
        _ => {
            return Err(Error::parse(
                1,
                "header must be time_s,gen_id,angle_deg or time_s,gen_id,vm_pu,va_deg,im_pu,ia_deg",
            ))
        }
    };

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, PhasorSample, usize)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<f64> {
            num(rec.get(i).unwrap_or(""), name).map_err(|m| Error::parse(line, m))
        };
        let t = field(0, "time_s")?;
        let gen_id = rec.get(1).unwrap_or("").to_string();
        if gen_id.is_empty() {
            return Err(Error::parse(line, "gen_id is empty"));
        }
        let sample = match layout {
            PmuLayout::Angle => PhasorSample {
                vm_pu: f64::NAN,
                va_rad: field(2, "angle_deg")?.to_radians(),
                im_pu: f64::NAN,
                ia_rad: f64::NAN,
            },
            PmuLayout::Phasor => PhasorSample {
                vm_pu: field(2, "vm_pu")?,
                va_rad: field(3, "va_deg")?.to_radians(),
                im_pu: field(4, "im_pu")?,
                ia_rad: field(5, "ia_deg")?.to_radians(),
            },
        };
        let entry = rows.entry(gen_id.clone()).or_insert_with(|| {
            order.push(gen_id.clone());
            Vec::new()
        });
        entry.push((t, sample, line));
    }

    let mut records = Vec::with_capacity(order.len());
    for gen_id in order {
        let mut r = rows.remove(&gen_id).unwrap_or_default();
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in r.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Duplicate(format!(
                    "sample ({gen_id}, t={}) on lines {} and {}",
                    w[1].0, w[0].2, w[1].2
                )));
            }
        }
        let times = r.iter().map(|x| x.0).collect();
        let samples = match layout {
            PmuLayout::Angle => Samples::Angles(r.iter().map(|x| x.1.va_rad).collect()),
            PmuLayout::Phasor => Samples::Phasors(r.iter().map(|x| x.1).collect()),
        };
        records.push(PmuRecord {
            gen_id,
            times,
            samples,
        });
    }
    Ok(PmuRecordSet { records })
}

pub fn load_pmu_records(path: impl AsRef<Path>) -> Result<PmuRecordSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pmu_records(std::io::BufReader::new(file))
}

/// Write records in time-major order. All records must share one sample kind.
pub fn write_pmu_records(set: &PmuRecordSet) -> Result<String> {
    let phasor = matches!(
        set.records.first().map(|r| &r.samples),
        Some(Samples::Phasors(_))
    );
    if set
        .records
        .iter()
        .any(|r| matches!(r.samples, Samples::Phasors(_)) != phasor)
    {
        return Err(Error::invalid("mixed angle and phasor records"));
    }
    let mut rows: Vec<(f64, usize, usize)> = set
        .records
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| r.times.iter().enumerate().map(move |(si, &t)| (t, ri, si)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut s = String::new();
    if phasor {
        let _ = writeln!(s, "time_s,gen_id,vm_pu,va_deg,im_pu,ia_deg");
    } else {
        let _ = writeln!(s, "time_s,gen_id,angle_deg");
    }
    for (t, ri, si) in rows {
        let r = &set.records[ri];
        match &r.samples {
            Samples::Angles(a) => {
                let _ = writeln!(s, "{t},{},{}", r.gen_id, a[si].to_degrees());
            }
            Samples::Phasors(p) => {
                let p = p[si];
                let _ = writeln!(
                    s,
                    "{t},{},{},{},{},{}",
                    r.gen_id,
                    p.vm_pu,
                    p.va_rad.to_degrees(),
                    p.im_pu,
                    p.ia_rad.to_degrees()
                );
            }
        }
    }
    Ok(s)
}
