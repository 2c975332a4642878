//! Scenario files and result persistence.
//!
//! Numbers are written with 17 significant digits so a dumped plan re-reads
//! to the same doubles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    db_to_linear, dbm_to_watts, propulsion_power, PlanReport, Scenario, Trajectory, Vec2,
    DEFAULT_C1, DEFAULT_C2, GRAVITY,
};
use crate::planners::Plan;

/// On-disk scenario. Power quantities are in dB/dBm here and linear in
/// [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub gn_positions: Vec<[f64; 2]>,
    pub altitude_m: f64,
    pub period_s: f64,
    pub slots: usize,
    pub ref_snr_db: f64,
    pub peak_power_dbm: f64,
    /// `null` or absent leaves the average propulsion power unconstrained.
    #[serde(default)]
    pub prop_limit_w: Option<f64>,
    pub bandwidth_hz: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
}

fn default_c1() -> f64 {
    DEFAULT_C1
}

fn default_c2() -> f64 {
    DEFAULT_C2
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        Scenario {
            gn_positions: self.gn_positions.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            altitude: self.altitude_m,
            period: self.period_s,
            slots: self.slots,
            ref_snr: db_to_linear(self.ref_snr_db),
            peak_power: dbm_to_watts(self.peak_power_dbm),
            prop_limit: self.prop_limit_w,
            bandwidth: self.bandwidth_hz,
            v_min: self.v_min,
            v_max: self.v_max,
            a_max: self.a_max,
            c1: self.c1,
            c2: self.c2,
            g: GRAVITY,
        }
        .validated()
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        Self {
            gn_positions: s.gn_positions.iter().map(|p| [p.x, p.y]).collect(),
            altitude_m: s.altitude,
            period_s: s.period,
            slots: s.slots,
            ref_snr_db: 10.0 * s.ref_snr.log10(),
            peak_power_dbm: 10.0 * s.peak_power.log10() + 30.0,
            prop_limit_w: s.prop_limit,
            bandwidth_hz: s.bandwidth,
            v_min: s.v_min,
            v_max: s.v_max,
            a_max: s.a_max,
            c1: s.c1,
            c2: s.c2,
        }
    }
}

pub fn parse_scenario(json: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(json).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::InvalidScenario(msg) => Error::InvalidScenario(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&ScenarioFile::from(scenario))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the trajectory table. Row `n` holds index `n` of the kinematics;
/// the transmit powers of slot 0 repeat slot N, which it equals by
/// periodicity.
pub fn write_trajectory_csv(scenario: &Scenario, plan: &Plan, path: &Path) -> Result<()> {
    let k = scenario.num_gns();
    let n = plan.traj.slots();
    let dt = scenario.slot_len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["n", "t", "qx", "qy", "vx", "vy", "ax", "ay", "speed", "p_prop_w"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("p_{j}")));
    w.write_record(&header)?;
    for i in 0..=n {
        let (q, v, a) = (plan.traj.q[i], plan.traj.v[i], plan.traj.a[i]);
        let prop = propulsion_power(scenario, &v, &a).unwrap_or(f64::INFINITY);
        let mut row = vec![i.to_string(), num(i as f64 * dt)];
        row.extend([q.x, q.y, v.x, v.y, a.x, a.y, v.norm(), prop].map(num));
        let slot = if i == 0 { n } else { i };
        row.extend((0..k).map(|j| num(plan.link.p[j][slot - 1])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `n,p_1..p_K` for slots `1..=N`.
pub fn write_powers_csv(plan: &Plan, path: &Path) -> Result<()> {
    let k = plan.link.p.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["n".to_string()];
    header.extend((1..=k).map(|j| format!("p_{j}")));
    w.write_record(&header)?;
    for i in 1..=plan.traj.slots() {
        let mut row = vec![i.to_string()];
        row.extend((0..k).map(|j| num(plan.link.p[j][i - 1])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `iteration,objective` and, for energy-efficiency runs, the
/// Dinkelbach parameter of each round.
pub fn write_trace_csv(report: &PlanReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_lambda = !report.lambda_trace.is_empty();
    if with_lambda {
        w.write_record(["iteration", "objective", "lambda"])?;
    } else {
        w.write_record(["iteration", "objective"])?;
    }
    for (i, obj) in report.objective_trace.iter().enumerate() {
        let mut row = vec![i.to_string(), num(*obj)];
        if with_lambda {
            row.push(report.lambda_trace.get(i).map_or(String::new(), |l| num(*l)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_json(report: &PlanReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Paths of the files written by [`dump_results`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub trajectory: PathBuf,
    pub powers: PathBuf,
    pub metrics: PathBuf,
    pub trace: PathBuf,
}

impl OutputFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trajectory: dir.join("trajectory.csv"),
            powers: dir.join("powers.csv"),
            metrics: dir.join("metrics.json"),
            trace: dir.join("trace.csv"),
        }
    }
}

pub fn dump_results(scenario: &Scenario, plan: &Plan, report: &PlanReport, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let files = OutputFiles::in_dir(dir);
    write_trajectory_csv(scenario, plan, &files.trajectory)?;
    write_powers_csv(plan, &files.powers)?;
    write_metrics_json(report, &files.metrics)?;
    write_trace_csv(report, &files.trace)?;
    Ok(files)
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::PlanFormat(format!("{}: row {}: bad number {f:?}", path.display(), line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str, path: &Path) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::PlanFormat(format!("{}: missing column {name}", path.display())))
    }
}

/// Reads a trajectory table with at least the columns `n,qx,qy,vx,vy,ax,ay`
/// and rows for indices `0..=N`.
pub fn read_trajectory_csv(scenario: &Scenario, path: &Path) -> Result<Trajectory> {
    let table = Table::read(path)?;
    let cols = ["n", "qx", "qy", "vx", "vy", "ax", "ay"]
        .iter()
        .map(|c| table.column(c, path))
        .collect::<Result<Vec<usize>>>()?;
    let n = scenario.slots;
    if table.rows.len() != n + 1 {
        return Err(Error::PlanFormat(format!(
            "{}: expected {} rows for {n} slots, found {}",
            path.display(),
            n + 1,
            table.rows.len()
        )));
    }
    let mut traj = Trajectory {
        q: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
        a: Vec::with_capacity(n + 1),
    };
    for (i, row) in table.rows.iter().enumerate() {
        if row[cols[0]] != i as f64 {
            return Err(Error::PlanFormat(format!("{}: row {i} has n = {}", path.display(), row[cols[0]])));
        }
        traj.q.push(Vec2::new(row[cols[1]], row[cols[2]]));
        traj.v.push(Vec2::new(row[cols[3]], row[cols[4]]));
        traj.a.push(Vec2::new(row[cols[5]], row[cols[6]]));
    }
    Ok(traj)
}

/// Reads transmit powers from a table with columns `n,p_1..p_K`. Rows with
/// `n = 1..=N` are used; a row for `n = 0` is ignored, so a trajectory
/// table is accepted as well.
pub fn read_powers_csv(scenario: &Scenario, path: &Path) -> Result<Vec<Vec<f64>>> {
    let table = Table::read(path)?;
    let k = scenario.num_gns();
    let n = scenario.slots;
    let idx = table.column("n", path)?;
    let cols = (1..=k)
        .map(|j| table.column(&format!("p_{j}"), path))
        .collect::<Result<Vec<usize>>>()?;
    let mut p = vec![vec![f64::NAN; n]; k];
    let mut seen = vec![false; n];
    for row in &table.rows {
        let i = row[idx];
        if i == 0.0 {
            continue;
        }
        if i.fract() != 0.0 || i < 1.0 || i > n as f64 {
            return Err(Error::PlanFormat(format!("{}: slot index {i} outside 1..={n}", path.display())));
        }
        let i = i as usize;
        seen[i - 1] = true;
        for (j, c) in cols.iter().enumerate() {
            p[j][i - 1] = row[*c];
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::PlanFormat(format!("{}: no powers for slot {}", path.display(), missing + 1)));
    }
    Ok(p)
}

/// Re-evaluates a plan stored on disk.
pub fn evaluate_files(scenario: &Scenario, trajectory: &Path, powers: &Path) -> Result<(Plan, PlanReport)> {
    let traj = read_trajectory_csv(scenario, trajectory)?;
    let p = read_powers_csv(scenario, powers)?;
    let plan = Plan::from_powers(scenario, traj, p);
    let report = PlanReport::evaluate(scenario, &plan.traj, &plan.link);
    Ok((plan, report))
}
