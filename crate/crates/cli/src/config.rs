//! Run configuration: TOML file merged with command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use islanding_core::{AngleMode, BranchKey, PipelineOptions, Scenario};
use serde::Deserialize;

use crate::CliError;

/// Number of islands: chosen from the dendrogram or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KArg::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(KArg::Fixed(k)),
            Ok(k) => Err(format!("k = {k}: at least 2 islands are required")),
            Err(_) => Err(format!("'{s}' is neither 'auto' nor an integer")),
        }
    }
}

impl<'de> Deserialize<'de> for KArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(i) => i.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// `7,9` or `7:9`.
pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once([',', ':'])
        .ok_or_else(|| format!("window '{s}' (expected START,END)"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("window start '{a}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("window end '{b}'"))?;
    if a.is_nan() || b.is_nan() || b <= a {
        return Err(format!("window [{a}, {b}] is empty"));
    }
    Ok((a, b))
}

/// Coherent groups given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec(pub Vec<Vec<String>>);

impl FromStr for GroupSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_groups(s).map(GroupSpec)
    }
}

/// `G1,G8,G9;G2,G3` into groups.
pub fn parse_groups(s: &str) -> Result<Vec<Vec<String>>, String> {
    let groups: Vec<Vec<String>> = s
        .split(';')
        .map(|g| {
            g.split(',')
                .map(|x| x.trim().to_string())
                .filter(|x| !x.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect();
    if groups.len() < 2 {
        return Err(format!("'{s}' defines {} group(s), at least 2 are required", groups.len()));
    }
    Ok(groups)
}

fn parse_branch(s: &str) -> Result<BranchKey, String> {
    s.parse().map_err(|e: islanding_core::Error| e.to_string())
}

/// Flags shared by every subcommand. Each has a same-named key in the
/// TOML config (dashes become underscores); flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML file with any of the keys below; relative paths in it resolve
    /// against the file's directory
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Network case CSV
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,

    /// PMU measurement CSV
    #[arg(long, global = true)]
    pub pmu: Option<PathBuf>,

    /// Event scenario JSON; simulated when no PMU file is given
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,

    /// Rotor-angle reference frame
    #[arg(long, global = true, value_parser = AngleMode::from_str)]
    pub angle_mode: Option<AngleMode>,

    /// Resampling step in seconds (default: the PMU rate)
    #[arg(long, global = true)]
    pub dt: Option<f64>,

    /// Analysis window in seconds, START,END
    #[arg(long, global = true, value_parser = parse_window)]
    pub window: Option<(f64, f64)>,

    /// Sakoe-Chiba band half-width in samples (default: unconstrained)
    #[arg(long, global = true)]
    pub band: Option<usize>,

    /// Number of islands, `auto` or an integer >= 2
    #[arg(long, global = true)]
    pub k: Option<KArg>,

    /// Largest k considered by `--k auto` (default: generators - 1)
    #[arg(long, global = true)]
    pub k_max: Option<usize>,

    /// Constraint threshold β (default: alpha * vol * eigenvalue of Q_N)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<f64>,

    /// Scale factor alpha for the default β
    #[arg(long, global = true)]
    pub beta_alpha: Option<f64>,

    /// Fixed coherent groups, e.g. `G1,G8,G9;G2,G3,G4`; skips identification
    #[arg(long, global = true)]
    pub groups: Option<GroupSpec>,

    /// Groups from a previous `identify` run (groups.json)
    #[arg(long, global = true, conflicts_with = "groups")]
    pub groups_file: Option<PathBuf>,

    /// Extra branches open at islanding time, e.g. `1-2,16-17#2`
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_branch)]
    pub open: Option<Vec<BranchKey>>,

    /// Islanding time in seconds; branches the scenario has tripped by then
    /// are open (default: window end)
    #[arg(long, global = true)]
    pub islanding_time: Option<f64>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    network: Option<PathBuf>,
    pmu: Option<PathBuf>,
    scenario: Option<PathBuf>,
    angle_mode: Option<AngleMode>,
    dt: Option<f64>,
    window: Option<[f64; 2]>,
    band: Option<usize>,
    k: Option<KArg>,
    k_max: Option<usize>,
    beta: Option<f64>,
    beta_alpha: Option<f64>,
    groups: Option<Vec<Vec<String>>>,
    groups_file: Option<PathBuf>,
    open: Option<Vec<String>>,
    islanding_time: Option<f64>,
    out: Option<PathBuf>,
}

/// Fully merged configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    pub pmu: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub angle_mode: AngleMode,
    pub dt: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub band: Option<usize>,
    pub k: KArg,
    pub k_max: Option<usize>,
    pub beta: Option<f64>,
    pub beta_alpha: Option<f64>,
    pub groups: Option<Vec<Vec<String>>>,
    pub groups_file: Option<PathBuf>,
    pub open: Vec<BranchKey>,
    pub islanding_time: Option<f64>,
    pub out: PathBuf,
}

fn rebase(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    pub fn resolve(flags: &RunFlags) -> Result<RunConfig, CliError> {
        let (file, base) = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let file: FileConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (file, base)
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let window = match (flags.window, file.window) {
            (Some(w), _) => Some(w),
            (None, Some([a, b])) => Some(parse_window(&format!("{a},{b}")).map_err(CliError::Usage)?),
            (None, None) => None,
        };
        let groups = match (&flags.groups, &flags.groups_file) {
            (Some(g), _) => Some(g.0.clone()),
            (None, Some(_)) => None,
            (None, None) => match file.groups {
                Some(g) if g.len() < 2 => {
                    return Err(CliError::Usage("config groups: at least 2 are required".into()))
                }
                g => g,
            },
        };
        let groups_file = match (&flags.groups, &flags.groups_file) {
            (Some(_), _) => None,
            (None, Some(f)) => Some(f.clone()),
            (None, None) if groups.is_some() => None,
            (None, None) => rebase(&base, file.groups_file),
        };
        let open = match &flags.open {
            Some(o) => o.clone(),
            None => file
                .open
                .unwrap_or_default()
                .iter()
                .map(|s| parse_branch(s))
                .collect::<Result<_, _>>()
                .map_err(CliError::Usage)?,
        };
        let cfg = RunConfig {
            network: flags.network.clone().or(rebase(&base, file.network)),
            pmu: flags.pmu.clone().or(rebase(&base, file.pmu)),
            scenario: flags.scenario.clone().or(rebase(&base, file.scenario)),
            angle_mode: flags.angle_mode.or(file.angle_mode).unwrap_or_default(),
            dt: flags.dt.or(file.dt),
            window,
            band: flags.band.or(file.band),
            k: flags.k.or(file.k).unwrap_or(KArg::Auto),
            k_max: flags.k_max.or(file.k_max),
            beta: flags.beta.or(file.beta),
            beta_alpha: flags.beta_alpha.or(file.beta_alpha),
            groups,
            groups_file,
            open,
            islanding_time: flags.islanding_time.or(file.islanding_time),
            out: flags
                .out
                .clone()
                .or(rebase(&base, file.out))
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<(), CliError> {
        let named = [
            ("network", &self.network),
            ("pmu", &self.pmu),
            ("scenario", &self.scenario),
            ("groups-file", &self.groups_file),
        ];
        for (what, p) in named {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::Usage(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn network(&self) -> Result<&Path, CliError> {
        self.network
            .as_deref()
            .ok_or_else(|| CliError::Usage("--network (or `network` in --config) is required".into()))
    }

    /// Branches open when the islands form: the explicit list plus those the
    /// scenario has tripped by the islanding time.
    pub fn open_branches(&self, scenario: Option<&Scenario>) -> Vec<BranchKey> {
        let mut open = self.open.clone();
        let t = self.islanding_time.or(self.window.map(|w| w.1));
        if let (Some(s), Some(t)) = (scenario, t) {
            for k in s.tripped_by(t) {
                if !open.iter().any(|o| o.same_circuit(k)) {
                    open.push(k);
                }
            }
        }
        open
    }

    pub fn pipeline_options(&self, scenario: Option<&Scenario>) -> PipelineOptions {
        let mut opts = PipelineOptions {
            angle_mode: self.angle_mode,
            dt: self.dt,
            window: self.window,
            band: self.band,
            k: match self.k {
                KArg::Auto => None,
                KArg::Fixed(k) => Some(k),
            },
            k_max: self.k_max,
            beta: self.beta,
            groups: self.groups.clone(),
            open_branches: self.open_branches(scenario),
            ..Default::default()
        };
        if let Some(a) = self.beta_alpha {
            opts.beta_alpha = a;
        }
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_argument() {
        assert_eq!("auto".parse::<KArg>(), Ok(KArg::Auto));
        assert_eq!("3".parse::<KArg>(), Ok(KArg::Fixed(3)));
        assert!("1".parse::<KArg>().is_err());
        assert!("x".parse::<KArg>().is_err());
    }

    #[test]
    fn window_and_groups() {
        assert_eq!(parse_window("7,9"), Ok((7.0, 9.0)));
        assert_eq!(parse_window("7:9.5"), Ok((7.0, 9.5)));
        assert!(parse_window("9,7").is_err());
        assert_eq!(
            parse_groups("G1, G8;G2").unwrap(),
            vec![vec!["G1".to_string(), "G8".into()], vec!["G2".into()]]
        );
        assert!(parse_groups("G1,G2").is_err());
    }

    #[test]
    fn file_values_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("net.csv"), "").unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            "network = \"net.csv\"\nk = 3\nwindow = [7.0, 9.0]\nopen = [\"1-2\"]\nangle_mode = \"coi\"\n",
        )
        .unwrap();
        let flags = RunFlags {
            config: Some(cfg_path),
            band: Some(4),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.network.unwrap(), dir.path().join("net.csv"));
        assert_eq!(cfg.k, KArg::Fixed(3));
        assert_eq!(cfg.window, Some((7.0, 9.0)));
        assert_eq!(cfg.open, vec![BranchKey::new(1, 2, 1)]);
        assert_eq!(cfg.angle_mode, AngleMode::Coi);
        assert_eq!(cfg.band, Some(4));
    }

    #[test]
    fn unknown_keys_and_missing_paths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.toml");
        std::fs::write(&p, "netwrk = \"x\"\n").unwrap();
        let flags = RunFlags {
            config: Some(p.clone()),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&flags), Err(CliError::Usage(_))));
        std::fs::write(&p, "network = \"missing.csv\"\n").unwrap();
        assert!(matches!(RunConfig::resolve(&flags), Err(CliError::Usage(_))));
    }
}
