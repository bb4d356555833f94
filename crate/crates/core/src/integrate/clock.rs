//! Merged time grid: micro steps, jump times and checkpoints.

/// One segment end produced by [`Clock`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tick {
    pub t: f64,
    pub grid: bool,
    pub checkpoint: Option<usize>,
    pub slow_jump: Option<usize>,
    pub fast_jump: Option<usize>,
}

pub(crate) struct Clock<'a> {
    horizon: f64,
    delta: f64,
    n_grid: usize,
    next_grid: usize,
    slow: &'a [f64],
    fast: &'a [f64],
    /// `(time, checkpoint index)`, sorted by time.
    checkpoints: Vec<(f64, usize)>,
    i_slow: usize,
    i_fast: usize,
    i_check: usize,
}

/// Number of micro steps covering `[0, horizon]`; the last one may be partial.
pub(crate) fn grid_steps(horizon: f64, delta: f64) -> usize {
    ((horizon / delta) - 1e-9).ceil().max(1.0) as usize
}

impl<'a> Clock<'a> {
    pub fn new(horizon: f64, delta: f64, slow: &'a [f64], fast: &'a [f64], checkpoints: &[f64]) -> Self {
        let n_grid = grid_steps(horizon, delta);
        let mut cps: Vec<(f64, usize)> = checkpoints
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                // snap checkpoints that sit on the micro grid onto it exactly
                let k = (c / delta).round();
                let snapped = if k as usize >= n_grid { horizon } else { k * delta };
                if (snapped - c).abs() <= 1e-9 * delta {
                    (snapped, i)
                } else {
                    (c, i)
                }
            })
            .collect();
        cps.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            horizon,
            delta,
            n_grid,
            next_grid: 1,
            slow,
            fast,
            checkpoints: cps,
            i_slow: 0,
            i_fast: 0,
            i_check: 0,
        }
    }

    pub fn grid_time(&self, k: usize) -> f64 {
        if k >= self.n_grid {
            self.horizon
        } else {
            k as f64 * self.delta
        }
    }
}

impl Iterator for Clock<'_> {
    type Item = Tick;

    fn next(&mut self) -> Option<Tick> {
        let inf = f64::INFINITY;
        let tg = if self.next_grid <= self.n_grid { self.grid_time(self.next_grid) } else { inf };
        let ts = self.slow.get(self.i_slow).copied().unwrap_or(inf);
        let tf = self.fast.get(self.i_fast).copied().unwrap_or(inf);
        let tc = self.checkpoints.get(self.i_check).map_or(inf, |c| c.0);
        let t = tg.min(ts).min(tf).min(tc);
        if t == inf {
            return None;
        }
        let mut tick = Tick { t, grid: false, checkpoint: None, slow_jump: None, fast_jump: None };
        if tg == t {
            tick.grid = true;
            self.next_grid += 1;
        }
        if ts == t {
            tick.slow_jump = Some(self.i_slow);
            self.i_slow += 1;
        }
        if tf == t {
            tick.fast_jump = Some(self.i_fast);
            self.i_fast += 1;
        }
        if tc == t {
            tick.checkpoint = Some(self.checkpoints[self.i_check].1);
            self.i_check += 1;
            // duplicated checkpoint times collapse onto one tick
            while self.checkpoints.get(self.i_check).is_some_and(|c| c.0 == t) {
                self.i_check += 1;
            }
        }
        Some(tick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let c = Clock::new(1.0, 0.3, &[], &[], &[]);
        let ts: Vec<f64> = c.map(|t| t.t).collect();
        assert_eq!(ts.len(), 4);
        assert_eq!(*ts.last().unwrap(), 1.0);
        assert!((ts[2] - 0.9).abs() < 1e-15);
        assert_eq!(grid_steps(1.0, 0.25), 4);
        assert_eq!(grid_steps(1.0, 2f64.powi(-13)), 8192);
    }

    #[test]
    fn merges_jumps_and_checkpoints() {
        let slow = [0.1, 0.5];
        let fast = [0.3];
        let c = Clock::new(1.0, 0.25, &slow, &fast, &[0.5, 0.6, 1.0]);
        let ticks: Vec<Tick> = c.collect();
        let ts: Vec<f64> = ticks.iter().map(|t| t.t).collect();
        assert_eq!(ts, vec![0.1, 0.25, 0.3, 0.5, 0.6, 0.75, 1.0]);
        let half = ticks[3];
        assert!(half.grid && half.slow_jump == Some(1) && half.checkpoint == Some(0));
        assert_eq!(ticks[4].checkpoint, Some(1));
        assert!(!ticks[4].grid);
        assert_eq!(ticks[6].checkpoint, Some(2));
    }
}
