//! Recorded simulation output shared by the chain and SDE simulators.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::FrequencyState;

/// A thinned sequence of frequency states with timestamps in diffusion time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FrequencyState>,
    /// Coordinates clamped back onto the simplex by the SDE integrator
    /// (always zero for chain output).
    pub clamp_events: u64,
}

/// 17 significant digits, enough to reproduce any f64 exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// CSV with header `t,x1_1,...,x1_M1,x2_1,...`; full coordinates, one
    /// row per record.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let shape = match self.states.first() {
            Some(s) => s.shape(),
            None => return Ok(()),
        };
        let mut header = String::from("t");
        for (i, &m) in shape.iter().enumerate() {
            for k in 0..m {
                header.push_str(&format!(",x{}_{}", i + 1, k + 1));
            }
        }
        writeln!(w, "{header}")?;
        for (t, state) in self.times.iter().zip(&self.states) {
            let mut row = format_f64(*t);
            for locus in state.per_locus() {
                for &v in locus {
                    row.push(',');
                    row.push_str(&format_f64(v));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses CSV produced by [`Trajectory::write_csv`]; the per-locus shape
    /// is recovered from the header names.
    pub fn from_csv_str(text: &str) -> Result<Trajectory> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("trajectory CSV has no header".into()))?;
        let mut shape: Vec<usize> = Vec::new();
        for name in header.split(',').skip(1) {
            let rest = name
                .strip_prefix('x')
                .ok_or_else(|| Error::Domain(format!("unexpected column name {name}")))?;
            let (locus, allele) = rest
                .split_once('_')
                .ok_or_else(|| Error::Domain(format!("unexpected column name {name}")))?;
            let locus: usize = locus
                .parse()
                .map_err(|_| Error::Domain(format!("unexpected column name {name}")))?;
            let allele: usize = allele
                .parse()
                .map_err(|_| Error::Domain(format!("unexpected column name {name}")))?;
            if locus == shape.len() + 1 && allele == 1 {
                shape.push(1);
            } else if locus == shape.len() && allele == shape[locus - 1] + 1 {
                shape[locus - 1] += 1;
            } else {
                return Err(Error::Domain(format!(
                    "column {name} out of order in trajectory header"
                )));
            }
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let width: usize = shape.iter().sum::<usize>() + 1;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::Domain(format!(
                    "trajectory row has {} fields, expected {width}",
                    fields.len()
                )));
            }
            let mut vals = fields.iter().map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Domain(format!("bad float {f} in trajectory")))
            });
            times.push(vals.next().unwrap()?);
            let mut per_locus = Vec::with_capacity(shape.len());
            for &m in &shape {
                let mut locus = Vec::with_capacity(m);
                for _ in 0..m {
                    locus.push(vals.next().unwrap()?);
                }
                per_locus.push(locus);
            }
            states.push(FrequencyState::new(per_locus)?);
        }
        Ok(Trajectory {
            times,
            states,
            clamp_events: 0,
        })
    }
}
