//! Lossy window compression: every `R`-th observation feeds a natural cubic
//! spline per numeric channel; actions and timestamps travel verbatim.

use crate::error::{Error, Result};
use crate::learner::{LocalState, Observation, LOAD_BUCKETS};
use crate::tasknet::LocalAction;
use crate::transport::spline::NaturalSpline;

/// Knot values of one numeric channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKnots {
    /// Every knot holds this value.
    Constant(f32),
    /// Small non-negative integers, one per knot.
    Levels(Vec<u8>),
    Values(Vec<f32>),
}

impl ChannelKnots {
    fn from_values(values: &[f32]) -> Self {
        if values.windows(2).all(|w| w[0] == w[1]) {
            ChannelKnots::Constant(values[0])
        } else if values.iter().all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0) {
            ChannelKnots::Levels(values.iter().map(|&v| v as u8).collect())
        } else {
            ChannelKnots::Values(values.to_vec())
        }
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        match self {
            ChannelKnots::Constant(_) => 1,
            ChannelKnots::Levels(v) => v.len(),
            ChannelKnots::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn expand(&self, knots: usize) -> Result<Vec<f64>> {
        match self {
            ChannelKnots::Constant(v) => Ok(vec![f64::from(*v); knots]),
            ChannelKnots::Levels(v) if v.len() == knots => Ok(v.iter().map(|&x| f64::from(x)).collect()),
            ChannelKnots::Values(v) if v.len() == knots => Ok(v.iter().map(|&x| f64::from(x)).collect()),
            other => Err(Error::CorruptSeries(format!(
                "channel carries {} coefficients for {knots} knots",
                other.len()
            ))),
        }
    }
}

/// Compressed form of one agent's observation window.
///
/// Numeric channels, in order: state components (own, then neighbors),
/// next-state components, reward. Knots sit at observation positions
/// `0, R, 2R, ...` plus the final position.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSeries {
    pub degree: u32,
    pub neighbor_count: u8,
    /// Set when `R` reached the window length and only the end points were kept.
    pub degenerate: bool,
    pub actions: Vec<(u64, LocalAction)>,
    pub channels: Vec<ChannelKnots>,
}

pub fn channel_count(neighbor_count: usize) -> usize {
    2 * (neighbor_count + 1) + 1
}

/// Observation positions used as knots for a window of `len` observations.
pub fn knot_positions(len: usize, degree: u32, degenerate: bool) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let stride = if degenerate { len.max(1) } else { degree.max(1) as usize };
    let mut pos: Vec<usize> = (0..len).step_by(stride).collect();
    if *pos.last().unwrap() != len - 1 {
        pos.push(len - 1);
    }
    pos
}

impl CompressedSeries {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Total stored numeric coefficients across channels.
    pub fn coefficient_count(&self) -> usize {
        self.channels.iter().map(ChannelKnots::len).sum()
    }
}

/// Compresses a window with compression degree `degree`.
///
/// A degree at or beyond the window length keeps only the two end points and
/// sets [`CompressedSeries::degenerate`].
pub fn compress_lossy(obs: &[Observation], degree: u32) -> Result<CompressedSeries> {
    if degree == 0 {
        return Err(Error::InvalidConfiguration("compression degree must be at least 1".into()));
    }
    let neighbor_count = obs.first().map_or(0, |o| o.state.neighbor_count());
    if obs
        .iter()
        .any(|o| o.state.neighbor_count() != neighbor_count || o.next_state.neighbor_count() != neighbor_count)
    {
        return Err(Error::MalformedWindow("observations mix action spaces".into()));
    }
    if obs.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::MalformedWindow("timestamps must strictly increase".into()));
    }
    let degenerate = obs.len() > 1 && degree as usize >= obs.len();
    let positions = knot_positions(obs.len(), degree, degenerate);
    let channels = if obs.is_empty() {
        Vec::new()
    } else {
        let mut rows: Vec<Vec<f32>> = vec![Vec::with_capacity(positions.len()); channel_count(neighbor_count)];
        for &p in &positions {
            let o = &obs[p];
            let values = o
                .state
                .components()
                .chain(o.next_state.components())
                .map(f32::from)
                .chain(std::iter::once(o.reward));
            for (row, v) in rows.iter_mut().zip(values) {
                row.push(v);
            }
        }
        rows.iter().map(|r| ChannelKnots::from_values(r)).collect()
    };
    Ok(CompressedSeries {
        degree,
        neighbor_count: neighbor_count as u8,
        degenerate,
        actions: obs.iter().map(|o| (o.t, o.action)).collect(),
        channels,
    })
}

/// Reconstructs observations by evaluating each channel's spline at the
/// recorded timestamps and snapping state components to valid buckets.
pub fn decompress_lossy(series: &CompressedSeries, window: usize) -> Result<Vec<Observation>> {
    let n = series.len();
    if n > window {
        return Err(Error::CorruptSeries(format!("{n} observations exceed window of {window}")));
    }
    if n == 0 {
        return if series.channels.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::CorruptSeries("channels without observations".into()))
        };
    }
    let nc = series.neighbor_count as usize;
    if nc > crate::learner::MAX_NEIGHBORS || series.channels.len() != channel_count(nc) {
        return Err(Error::CorruptSeries(format!(
            "expected {} channels, found {}",
            channel_count(nc),
            series.channels.len()
        )));
    }
    if series.actions.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::CorruptSeries("timestamps must strictly increase".into()));
    }
    if series.actions.iter().any(|(_, a)| a.index() > nc) {
        return Err(Error::CorruptSeries("action outside the action space".into()));
    }
    let positions = knot_positions(n, series.degree, series.degenerate);
    let xs: Vec<f64> = positions.iter().map(|&p| series.actions[p].0 as f64).collect();
    let mut evaluated: Vec<Vec<f64>> = Vec::with_capacity(series.channels.len());
    for channel in &series.channels {
        let ys = channel.expand(positions.len())?;
        let spline = NaturalSpline::fit(&xs, &ys)?;
        evaluated.push(series.actions.iter().map(|(t, _)| spline.eval(*t as f64)).collect());
    }
    let width = nc + 1;
    let max_bucket = f64::from(LOAD_BUCKETS - 1);
    Ok(series
        .actions
        .iter()
        .enumerate()
        .map(|(i, &(t, action))| {
            let comp = |c: usize| evaluated[c][i].clamp(0.0, max_bucket);
            let state: Vec<f64> = (0..width).map(comp).collect();
            let next: Vec<f64> = (width..2 * width).map(comp).collect();
            Observation {
                state: LocalState::quantized(&state),
                action,
                next_state: LocalState::quantized(&next),
                reward: evaluated[2 * width][i] as f32,
                t,
            }
        })
        .collect())
}
