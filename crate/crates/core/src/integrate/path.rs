use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSource {
    Slow,
    Fast,
}

/// One applied jump. `pre` is the full state row immediately before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
    pub source: JumpSource,
    /// Row of [`PathSample::states`] holding the post-jump state.
    pub row: usize,
    pub pre: Vec<f64>,
}

/// A trajectory on its jump-augmented grid.
///
/// Rows hold the slow components first, then the fast ones. Frozen paths
/// have no slow components and remember the frozen value in `frozen_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub slow_dim: usize,
    pub fast_dim: usize,
    pub states: Vec<f64>,
    pub events: Vec<JumpEvent>,
    pub frozen_x: Option<Vec<f64>>,
    /// Number of averaged-coefficient queries that fell outside the table.
    pub extrapolated: usize,
}

/// A logged jump whose replay does not reproduce the recorded discontinuity.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMismatch {
    pub event: usize,
    pub expected: Vec<f64>,
    pub recorded: Vec<f64>,
}

impl PathSample {
    pub(crate) fn empty(slow_dim: usize, fast_dim: usize, frozen_x: Option<Vec<f64>>) -> Self {
        Self {
            times: Vec::new(),
            slow_dim,
            fast_dim,
            states: Vec::new(),
            events: Vec::new(),
            frozen_x,
            extrapolated: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.slow_dim + self.fast_dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.states[i * w..(i + 1) * w]
    }

    pub fn slow(&self, i: usize) -> &[f64] {
        &self.state(i)[..self.slow_dim]
    }

    pub fn fast(&self, i: usize) -> &[f64] {
        &self.state(i)[self.slow_dim..]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Replays every logged jump through the coefficient maps and checks the
    /// recorded discontinuity bit for bit.
    pub fn verify_jumps(&self, spec: &ModelSpec) -> Result<(), JumpMismatch> {
        let (n, w) = (self.slow_dim, self.width());
        let mut buf = vec![0.0; w.max(1)];
        for (k, ev) in self.events.iter().enumerate() {
            let mut expected = ev.pre.clone();
            match ev.source {
                JumpSource::Slow => {
                    spec.h1(&ev.pre[..n], ev.mark, &mut buf[..n]);
                    expected[..n].iter_mut().zip(&buf[..n]).for_each(|(e, d)| *e += d);
                }
                JumpSource::Fast => {
                    let x = self.frozen_x.as_deref().unwrap_or(&ev.pre[..n]);
                    let m = self.fast_dim;
                    spec.h2(x, &ev.pre[n..], ev.mark, &mut buf[..m]);
                    expected[n..].iter_mut().zip(&buf[..m]).for_each(|(e, d)| *e += d);
                }
            }
            // a second jump at the same instant starts from this one's result
            let recorded = match self.events.get(k + 1) {
                Some(next) if next.row == ev.row => next.pre.clone(),
                _ => self.state(ev.row).to_vec(),
            };
            if expected != recorded {
                return Err(JumpMismatch { event: k, expected, recorded });
            }
        }
        Ok(())
    }

    /// CSV with columns `time, x0.., y0.., event, mark`. `event` is 0 for a
    /// plain grid row, 1 for a slow jump and 2 for a fast jump.
    pub fn write_trace_csv(&self, mut out: impl Write) -> io::Result<()> {
        let mut header = vec!["time".to_string()];
        header.extend((0..self.slow_dim).map(|i| format!("x{i}")));
        header.extend((0..self.fast_dim).map(|i| format!("y{i}")));
        header.push("event".into());
        header.push("mark".into());
        writeln!(out, "{}", header.join(","))?;
        let mut ev = self.events.iter().peekable();
        for i in 0..self.len() {
            let mut flag = 0;
            let mut mark = String::new();
            while let Some(e) = ev.next_if(|e| e.row == i) {
                flag = match e.source {
                    JumpSource::Slow => 1,
                    JumpSource::Fast => 2,
                };
                mark = format!("{:.16e}", e.mark);
            }
            write!(out, "{:.16e}", self.times[i])?;
            for v in self.state(i) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out, ",{flag},{mark}")?;
        }
        Ok(())
    }
}
