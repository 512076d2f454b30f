//! Trace CSV files: one row per (epoch, configuration) observation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config_space::Configuration;
use crate::error::{Error, Result};
use crate::workload::{CounterVector, EpochObservation, Plant};

pub const TRACE_HEADER: &str = "epoch_id,n_big,n_little,f_big,f_little,instructions,cycles,branch_miss,l2_miss,dmem_access,noncache_req,little_util,big_util0,big_util1,big_util2,big_util3,power_w,time_s";

/// A workload whose plant answers come from recorded rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceWorkload {
    pub name: String,
    n_epochs: usize,
    rows: BTreeMap<(usize, Configuration), EpochObservation>,
}

impl TraceWorkload {
    pub fn new(name: impl Into<String>) -> Self {
        TraceWorkload { name: name.into(), ..Default::default() }
    }

    pub fn insert(&mut self, obs: EpochObservation) -> Result<()> {
        let key = (obs.epoch_id, obs.config);
        if self.rows.contains_key(&key) {
            return Err(Error::Format(format!(
                "duplicate observation for epoch {} at {}",
                obs.epoch_id, obs.config
            )));
        }
        self.n_epochs = self.n_epochs.max(obs.epoch_id + 1);
        self.rows.insert(key, obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = &EpochObservation> {
        self.rows.values()
    }
}

impl Plant for TraceWorkload {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    fn execute(&self, epoch: usize, c: &Configuration) -> Result<EpochObservation> {
        self.rows
            .get(&(epoch, *c))
            .copied()
            .ok_or(Error::Lookup { epoch, config: c.to_string() })
    }
}

/// Writes every (epoch, config) pair, epoch-major and in the given config order.
pub fn save_trace(plant: &dyn Plant, configs: &[Configuration], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{TRACE_HEADER}").map_err(io)?;
    for epoch in 0..plant.n_epochs() {
        for c in configs {
            let o = plant.execute(epoch, c)?;
            let h = &o.counters;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                o.epoch_id,
                c.n_big,
                c.n_little,
                c.f_big,
                c.f_little,
                h.instructions_retired,
                h.cpu_cycles,
                h.branch_mispredictions,
                h.l2_misses,
                h.data_memory_accesses,
                h.noncache_mem_requests,
                h.little_cluster_util,
                h.big_core_utils[0],
                h.big_core_utils[1],
                h.big_core_utils[2],
                h.big_core_utils[3],
                o.power,
                o.exec_time
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_trace(path: &Path) -> Result<TraceWorkload> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_trace(&text, name, path)
}

fn parse_trace(text: &str, name: String, path: &Path) -> Result<TraceWorkload> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == TRACE_HEADER => {}
        Some((_, h)) => return Err(perr(1, format!("unexpected header {h:?}"))),
        None => return Err(perr(1, "missing header".into())),
    }
    let mut tw = TraceWorkload::new(name);
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 18 {
            return Err(perr(line_no, format!("expected 18 fields, found {}", fields.len())));
        }
        let int = |k: usize| -> Result<u32> {
            fields[k].parse().map_err(|_| perr(line_no, format!("bad integer {:?}", fields[k])))
        };
        let num = |k: usize| -> Result<f64> {
            let v: f64 = fields[k].parse().map_err(|_| perr(line_no, format!("bad number {:?}", fields[k])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(perr(line_no, format!("field {k} must be finite and non-negative, got {v}")));
            }
            Ok(v)
        };
        let util = |k: usize| -> Result<f64> {
            let v = num(k)?;
            if v > 1.0 {
                return Err(perr(line_no, format!("utilization {v} above 1")));
            }
            Ok(v)
        };
        let epoch_id: usize = fields[0]
            .parse()
            .map_err(|_| perr(line_no, format!("bad epoch id {:?}", fields[0])))?;
        let config = Configuration::new(int(1)?, int(2)?, int(3)?, int(4)?);
        let power = num(16)?;
        let exec_time = num(17)?;
        if power <= 0.0 || exec_time <= 0.0 {
            return Err(perr(line_no, "power and time must be positive".into()));
        }
        let counters = CounterVector {
            instructions_retired: num(5)?,
            cpu_cycles: num(6)?,
            branch_mispredictions: num(7)?,
            l2_misses: num(8)?,
            data_memory_accesses: num(9)?,
            noncache_mem_requests: num(10)?,
            little_cluster_util: util(11)?,
            big_core_utils: [util(12)?, util(13)?, util(14)?, util(15)?],
            total_power: power,
        };
        tw.insert(EpochObservation { epoch_id, config, counters, power, exec_time })
            .map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("{}:{line_no}: {msg}", path.display())),
                other => other,
            })?;
    }
    Ok(tw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::ConfigSpace;
    use crate::workload::generate_workload;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = generate_workload("mixed", 2, 9).unwrap();
        let configs = ConfigSpace::default().enumerate();
        save_trace(&w, &configs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER);
        assert_eq!(text.lines().count(), 1 + 1280);
        let t = load_trace(&path).unwrap();
        assert_eq!(t.n_epochs(), 2);
        for e in 0..2 {
            for c in &configs {
                assert_eq!(t.execute(e, c).unwrap(), w.execute(e, c).unwrap());
            }
        }
    }

    #[test]
    fn header_only_is_empty() {
        let t = parse_trace(&format!("{TRACE_HEADER}\n"), "x".into(), Path::new("x.csv")).unwrap();
        assert_eq!(t.n_epochs(), 0);
        assert!(t.is_empty());
    }

    #[test]
    fn negative_power_names_line() {
        let row = "0,1,1,600,600,1,1,1,1,1,1,0.5,0.5,0,0,0,-1.0,0.1";
        let err = parse_trace(&format!("{TRACE_HEADER}\n{row}\n"), "x".into(), Path::new("x.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_is_format_error() {
        let row = "0,1,1,600,600,1,1,1,1,1,1,0.5,0.5,0,0,0,1.0,0.1";
        let err = parse_trace(&format!("{TRACE_HEADER}\n{row}\n{row}\n"), "x".into(), Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn missing_pair_is_lookup_error() {
        let row = "0,1,1,600,600,1,1,1,1,1,1,0.5,0.5,0,0,0,1.0,0.1";
        let t = parse_trace(&format!("{TRACE_HEADER}\n{row}\n"), "x".into(), Path::new("x.csv")).unwrap();
        let err = t.execute(0, &Configuration::new(2, 1, 600, 600)).unwrap_err();
        assert!(matches!(err, Error::Lookup { epoch: 0, .. }));
    }
}
