use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::spectral::{Grid1D, RealField};

/// Snapshots of a solution recorded every `stride` steps, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid1D,
    dt: f64,
    stride: usize,
    n_steps: usize,
    times: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
}

impl Trajectory {
    pub(crate) fn start(initial: &RealField, dt: f64, stride: usize, n_steps: usize) -> Self {
        let mut snapshots = Vec::with_capacity(n_steps / stride + 1);
        snapshots.push(initial.values().to_vec());
        Self {
            grid: *initial.grid(),
            dt,
            stride,
            n_steps,
            times: vec![0.0],
            snapshots,
        }
    }

    pub(crate) fn record(&mut self, step: usize, values: &[f64]) {
        if step.is_multiple_of(self.stride) {
            self.times.push(step as f64 * self.dt);
            self.snapshots.push(values.to_vec());
        }
    }

    /// Assembles a trajectory from explicit snapshots at `k * stride * dt`.
    pub fn from_snapshots(
        grid: Grid1D,
        dt: f64,
        stride: usize,
        n_steps: usize,
        snapshots: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        if snapshots.len() != n_steps / stride + 1 {
            return Err(Error::invalid(format!(
                "expected {} snapshots for {n_steps} steps at stride {stride}, got {}",
                n_steps / stride + 1,
                snapshots.len()
            )));
        }
        for s in &snapshots {
            RealField::new(grid, s.clone())?;
        }
        let times = (0..snapshots.len())
            .map(|k| (k * stride) as f64 * dt)
            .collect();
        Ok(Self {
            grid,
            dt,
            stride,
            n_steps,
            times,
            snapshots,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self, k: usize) -> &[f64] {
        &self.snapshots[k]
    }

    pub fn snapshot(&self, k: usize) -> RealField {
        RealField::from_raw(self.grid, self.snapshots[k].clone())
    }

    pub fn last(&self) -> RealField {
        self.snapshot(self.len() - 1)
    }

    /// Solver step index of snapshot `k`.
    pub fn step_of(&self, k: usize) -> usize {
        k * self.stride
    }

    /// Every `factor`-th snapshot.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("downsample factor must be positive"));
        }
        let stride = self.stride * factor;
        let keep = self.n_steps / stride + 1;
        Ok(Self {
            grid: self.grid,
            dt: self.dt,
            stride,
            n_steps: self.n_steps,
            times: self
                .times
                .iter()
                .step_by(factor)
                .take(keep)
                .copied()
                .collect(),
            snapshots: self
                .snapshots
                .iter()
                .step_by(factor)
                .take(keep)
                .cloned()
                .collect(),
        })
    }

    pub fn same_schedule(&self, other: &Trajectory) -> Result<()> {
        if !self.grid.is_compatible(&other.grid) {
            return Err(Error::GridMismatch(
                "trajectories live on different grids".into(),
            ));
        }
        if self.times != other.times {
            return Err(Error::ScheduleMismatch(format!(
                "{} snapshots at stride {} dt {} vs {} at stride {} dt {}",
                self.len(),
                self.stride,
                self.dt,
                other.len(),
                other.stride,
                other.dt
            )));
        }
        Ok(())
    }

    /// `t,xi,value` rows, one per node per snapshot.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,xi,value")?;
        let nodes = self.grid.nodes();
        for (t, snap) in self.times.iter().zip(&self.snapshots) {
            for (x, v) in nodes.iter().zip(snap) {
                writeln!(w, "{t:e},{x:e},{v:e}")?;
            }
        }
        Ok(())
    }

    /// Little-endian block: `n_snapshots`, `n_points`, `n_steps`, `stride` (u64),
    /// `L`, `dt` (f64), then the snapshot times and the values row by row (f64).
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        for v in [self.len(), self.grid.len(), self.n_steps, self.stride] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.grid.half_length().to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for s in &self.snapshots {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let count = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_points = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let stride = u64::from_le_bytes(next(&mut r)?) as usize;
        let l = f64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let grid = Grid1D::new(l, n_points)?;
        for _ in 0..count {
            next(&mut r)?;
        }
        let mut snapshots = Vec::with_capacity(count);
        for _ in 0..count {
            let mut s = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                s.push(f64::from_le_bytes(next(&mut r)?));
            }
            snapshots.push(s);
        }
        Self::from_snapshots(grid, dt, stride, n_steps, snapshots)
    }
}
