//! Per-tick CSV log and the run summary derived from it.

use std::io::{Read, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::TickRecord;

pub const STEPS_SCHEMA: &str = "steps-v1";
pub const SUMMARY_SCHEMA: &str = "summary-v1";
/// Steps after the last obstructed touchdown still counted in the disturbance window.
pub const WINDOW_TAIL: usize = 10;
/// Obstruction errors below this are treated as clean touchdowns [m].
pub const OBSTRUCTION_EPS: f64 = 1e-6;

const FIXED_COLUMNS: &[&str] = &[
    "tick", "time", "base_x", "base_y", "base_vx", "base_vy", "phi_x", "phi_y", "phi_vx", "phi_vy", "u_plan_x",
    "u_plan_y", "delta", "v_des_x", "v_des_y", "step_event", "step_index", "step_cmd_x", "step_cmd_y",
    "step_real_x", "step_real_y", "place_err_x", "place_err_y", "obstr_err_x", "obstr_err_y", "dob_x", "dob_y",
    "vel_err_x", "vel_err_y", "h1", "h2", "h1_base", "h2_base", "f_hat_x", "f_hat_y", "f_true_x", "f_true_y",
    "contact", "swing_x", "swing_y", "primary_ok", "secondary_ok", "fallen", "mode", "fallback",
];

/// Column names for a world with `n_boxes` boxes.
pub fn header(n_boxes: usize) -> Vec<String> {
    let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..n_boxes {
        h.push(format!("box{i}_x"));
        h.push(format!("box{i}_y"));
        h.push(format!("mass{i}_est"));
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub record: TickRecord,
    pub mode: String,
    pub fallback: bool,
    pub mass_estimates: Vec<Option<f64>>,
}

impl LogRow {
    pub fn from_record(record: TickRecord, mode: &str, fallback: bool, masses: &[Option<f64>]) -> Self {
        Self {
            record,
            mode: mode.into(),
            fallback,
            mass_estimates: masses.to_vec(),
        }
    }

    fn cells(&self) -> Vec<String> {
        let r = &self.record;
        let mut c: Vec<String> = Vec::with_capacity(FIXED_COLUMNS.len() + 3 * r.boxes.len());
        let f = |x: f64| x.to_string();
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let b = |x: bool| if x { "1".to_string() } else { "0".to_string() };
        let v = |c: &mut Vec<String>, x: &Vector2<f64>| {
            c.push(f(x.x));
            c.push(f(x.y));
        };
        c.push(r.tick.to_string());
        c.push(f(r.time));
        v(&mut c, &r.base);
        v(&mut c, &r.base_vel);
        v(&mut c, &r.phi);
        v(&mut c, &r.phi_dot);
        v(&mut c, &r.u_plan);
        c.push(f(r.delta));
        v(&mut c, &r.v_des);
        c.push(b(r.step_event));
        c.push(r.step_index.to_string());
        v(&mut c, &r.step_cmd);
        v(&mut c, &r.step_real);
        v(&mut c, &r.placement_error);
        v(&mut c, &r.obstruction_error);
        v(&mut c, &r.dob_offset);
        v(&mut c, &r.vel_err);
        c.push(opt(r.h[0]));
        c.push(opt(r.h[1]));
        c.push(opt(r.h_base[0]));
        c.push(opt(r.h_base[1]));
        v(&mut c, &r.f_hat);
        v(&mut c, &r.f_true);
        c.push(r.contact.map(|i| i.to_string()).unwrap_or_default());
        v(&mut c, &r.swing_foot);
        c.push(b(r.primary_feasible));
        c.push(b(r.secondary_feasible));
        c.push(b(r.fallen));
        c.push(self.mode.clone());
        c.push(b(self.fallback));
        for (i, p) in r.boxes.iter().enumerate() {
            v(&mut c, p);
            c.push(opt(self.mass_estimates.get(i).copied().flatten()));
        }
        c
    }

    fn parse(cells: &csv::StringRecord, n_boxes: usize, line: usize) -> Result<Self> {
        let mut c = Cells { it: cells.iter(), line };
        let tick = c.num("tick")? as u64;
        let time = c.num("time")?;
        let base = c.vec2("base")?;
        let base_vel = c.vec2("base_v")?;
        let phi = c.vec2("phi")?;
        let phi_dot = c.vec2("phi_v")?;
        let u_plan = c.vec2("u_plan")?;
        let delta = c.num("delta")?;
        let v_des = c.vec2("v_des")?;
        let step_event = c.flag("step_event")?;
        let step_index = c.num("step_index")? as usize;
        let step_cmd = c.vec2("step_cmd")?;
        let step_real = c.vec2("step_real")?;
        let placement_error = c.vec2("place_err")?;
        let obstruction_error = c.vec2("obstr_err")?;
        let dob_offset = c.vec2("dob")?;
        let vel_err = c.vec2("vel_err")?;
        let h = [c.opt("h1")?, c.opt("h2")?];
        let h_base = [c.opt("h1_base")?, c.opt("h2_base")?];
        let f_hat = c.vec2("f_hat")?;
        let f_true = c.vec2("f_true")?;
        let contact = c.opt("contact")?.map(|i| i as usize);
        let swing_foot = c.vec2("swing")?;
        let primary_feasible = c.flag("primary_ok")?;
        let secondary_feasible = c.flag("secondary_ok")?;
        let fallen = c.flag("fallen")?;
        let mode = c.raw("mode")?.to_string();
        let fallback = c.flag("fallback")?;
        let mut boxes = Vec::with_capacity(n_boxes);
        let mut masses = Vec::with_capacity(n_boxes);
        for _ in 0..n_boxes {
            boxes.push(c.vec2("box")?);
            masses.push(c.opt("mass")?);
        }
        Ok(Self {
            record: TickRecord {
                tick,
                time,
                base,
                base_vel,
                phi,
                phi_dot,
                u_plan,
                delta,
                v_des,
                step_event,
                step_index,
                step_cmd,
                step_real,
                placement_error,
                obstruction_error,
                dob_offset,
                vel_err,
                h,
                h_base,
                f_hat,
                f_true,
                contact,
                boxes,
                swing_foot,
                primary_feasible,
                secondary_feasible,
                fallen,
            },
            mode,
            fallback,
            mass_estimates: masses,
        })
    }
}

// Sequential reader over one CSV record.
struct Cells<'a> {
    it: csv::StringRecordIter<'a>,
    line: usize,
}

impl<'a> Cells<'a> {
    fn bad(&self, what: &str) -> Error {
        Error::Config(format!("steps.csv line {}: bad {what}", self.line))
    }

    fn raw(&mut self, what: &str) -> Result<&'a str> {
        match self.it.next() {
            Some(s) => Ok(s),
            None => Err(self.bad(what)),
        }
    }

    fn num(&mut self, what: &str) -> Result<f64> {
        let s = self.raw(what)?;
        s.parse().map_err(|_| self.bad(what))
    }

    fn opt(&mut self, what: &str) -> Result<Option<f64>> {
        let s = self.raw(what)?;
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| self.bad(what))
        }
    }

    fn vec2(&mut self, what: &str) -> Result<Vector2<f64>> {
        Ok(Vector2::new(self.num(what)?, self.num(what)?))
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.raw(what)? {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.bad(what)),
        }
    }
}

/// Writes the schema comment line, the header and one row per tick.
pub fn write_steps<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let n_boxes = rows.first().map_or(0, |r| r.record.boxes.len());
    let mut out = out;
    writeln!(out, "# {STEPS_SCHEMA}").map_err(|e| Error::io("steps.csv", e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Config(format!("steps.csv: {e}"));
    w.write_record(header(n_boxes)).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.cells()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("steps.csv", e))?;
    Ok(())
}

pub fn read_steps<R: Read>(input: R) -> Result<Vec<LogRow>> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text).map_err(|e| Error::io("steps.csv", e))?;
    let body = text
        .strip_prefix(&format!("# {STEPS_SCHEMA}\n"))
        .ok_or_else(|| Error::Config(format!("steps.csv: missing `# {STEPS_SCHEMA}` schema line")))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let head: Vec<String> = r
        .headers()
        .map_err(|e| Error::Config(format!("steps.csv: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let extra = head.len().checked_sub(FIXED_COLUMNS.len()).filter(|n| n % 3 == 0);
    let n_boxes = extra.ok_or_else(|| Error::Config("steps.csv: unexpected column count".into()))? / 3;
    if head != header(n_boxes) {
        return Err(Error::Config("steps.csv: header does not match the schema".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("steps.csv: {e}")))?;
        rows.push(LogRow::parse(&rec, n_boxes, i + 3)?);
    }
    Ok(rows)
}

/// Scenario facts the summary needs beyond the log itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryInputs {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub goal: [f64; 2],
    pub goal_tolerance: f64,
    pub true_masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub inputs: SummaryInputs,
    pub ticks: usize,
    pub sim_time: f64,
    pub steps: usize,
    pub final_base: [f64; 2],
    pub goal_distance: f64,
    pub goal_reached: bool,
    /// The robot fell.
    pub failure: bool,
    pub min_h1: Option<f64>,
    pub min_h2: Option<f64>,
    pub min_h1_base: Option<f64>,
    pub min_h2_base: Option<f64>,
    pub max_abs_step_x: f64,
    pub max_abs_step_y: f64,
    pub rms_vel_err: f64,
    /// Step range from the first obstructed touchdown to `WINDOW_TAIL` steps after the last.
    pub disturbance_window: Option<[usize; 2]>,
    pub rms_vel_err_window: Option<f64>,
    /// Largest commanded step norm inside the disturbance window.
    pub max_step_window: Option<f64>,
    /// Both logged barriers went negative at some tick.
    pub barriers_violated: bool,
    pub mass_estimates: Vec<Option<f64>>,
    pub fallback: bool,
    pub ordering_correct: Option<bool>,
    pub contact_ticks: usize,
    pub primary_infeasible_ticks: usize,
    pub secondary_infeasible_ticks: usize,
}

fn min_opt(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    it.flatten().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
}

fn rms<'a>(it: impl Iterator<Item = &'a Vector2<f64>>) -> Option<f64> {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v.norm_squared(), n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn argmax(v: &[f64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &x)| match best {
            Some((_, b)) if b >= x => best,
            _ => Some((i, x)),
        })
        .map(|(i, _)| i)
}

/// Derives the summary from log rows alone, so it can be recomputed from `steps.csv`.
pub fn summarize(inputs: &SummaryInputs, rows: &[LogRow]) -> Result<Summary> {
    let last = rows.last().ok_or_else(|| Error::Config("empty log".into()))?;
    let lr = &last.record;
    let goal = Vector2::new(inputs.goal[0], inputs.goal[1]);
    let goal_distance = (lr.base - goal).norm();
    let failure = lr.fallen;
    let events: Vec<&TickRecord> = rows.iter().map(|r| &r.record).filter(|r| r.step_event).collect();
    let scored: Vec<&TickRecord> = events.iter().copied().filter(|r| r.step_index >= 1).collect();
    let obstructed: Vec<usize> = scored
        .iter()
        .filter(|r| r.obstruction_error.norm() > OBSTRUCTION_EPS)
        .map(|r| r.step_index)
        .collect();
    let window = match (obstructed.first(), obstructed.last()) {
        (Some(&a), Some(&b)) => Some([a, b + WINDOW_TAIL]),
        _ => None,
    };
    let rms_window = window.and_then(|[a, b]| {
        rms(scored
            .iter()
            .filter(|r| r.step_index >= a && r.step_index <= b)
            .map(|r| &r.vel_err))
    });
    let max_step_window = window.and_then(|[a, b]| {
        events
            .iter()
            .filter(|r| r.step_index >= a && r.step_index <= b)
            .map(|r| r.step_cmd.norm())
            .reduce(f64::max)
    });
    let masses = last.mass_estimates.clone();
    let ordering_correct = if !masses.is_empty() && masses.iter().all(|m| m.is_some()) && masses.len() == inputs.true_masses.len() {
        let est: Vec<f64> = masses.iter().map(|m| m.unwrap()).collect();
        Some(argmax(&est) == argmax(&inputs.true_masses))
    } else {
        None
    };
    let recs = rows.iter().map(|r| &r.record);
    let min_h1 = min_opt(recs.clone().map(|r| r.h[0]));
    let min_h2 = min_opt(recs.clone().map(|r| r.h[1]));
    Ok(Summary {
        schema: SUMMARY_SCHEMA.into(),
        inputs: inputs.clone(),
        ticks: rows.len(),
        sim_time: lr.time,
        steps: lr.step_index,
        final_base: [lr.base.x, lr.base.y],
        goal_distance,
        goal_reached: !failure && goal_distance <= inputs.goal_tolerance,
        failure,
        min_h1,
        min_h2,
        min_h1_base: min_opt(recs.clone().map(|r| r.h_base[0])),
        min_h2_base: min_opt(recs.clone().map(|r| r.h_base[1])),
        max_abs_step_x: events.iter().map(|r| r.step_cmd.x.abs()).fold(0.0, f64::max),
        max_abs_step_y: events.iter().map(|r| r.step_cmd.y.abs()).fold(0.0, f64::max),
        rms_vel_err: rms(scored.iter().map(|r| &r.vel_err)).unwrap_or(0.0),
        disturbance_window: window,
        rms_vel_err_window: rms_window,
        max_step_window,
        barriers_violated: matches!((min_h1, min_h2), (Some(a), Some(b)) if a < 0.0 && b < 0.0),
        mass_estimates: masses,
        fallback: last.fallback,
        ordering_correct,
        contact_ticks: recs.clone().filter(|r| r.contact.is_some()).count(),
        primary_infeasible_ticks: recs.clone().filter(|r| !r.primary_feasible).count(),
        secondary_infeasible_ticks: recs.filter(|r| !r.secondary_feasible).count(),
    })
}
