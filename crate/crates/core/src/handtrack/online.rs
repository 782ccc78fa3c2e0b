//! Incremental generator fed one hand sample at a time.

use super::{
    check_rate, is_trough, smoothed_at, Calibration, GridCursor, HandtrackError, KeyframeParams,
    TimedPose,
};

/// Emits TCP samples as soon as the keyframes bounding them are settled.
///
/// A trough at speed index `j` depends on smoothed speeds up to `j + 1`,
/// which are final once raw speed `j + 1 + window / 2` exists. Concatenating
/// every `push` result and the `finish` result reproduces the offline
/// pipeline exactly.
#[derive(Debug, Clone)]
pub struct OnlineGenerator {
    calib: Calibration,
    params: KeyframeParams,
    rate: f64,
    samples: Vec<TimedPose>,
    raw: Vec<f64>,
    next_candidate: usize,
    last_trough: Option<usize>,
    last_key: Option<TimedPose>,
    cursor: Option<GridCursor>,
    keyframes: Vec<usize>,
}

impl OnlineGenerator {
    pub fn new(
        calib: Calibration,
        params: KeyframeParams,
        rate: f64,
    ) -> Result<Self, HandtrackError> {
        params.validate()?;
        check_rate(rate)?;
        Ok(Self {
            calib,
            params,
            rate,
            samples: Vec::new(),
            raw: Vec::new(),
            next_candidate: 1,
            last_trough: None,
            last_key: None,
            cursor: None,
            keyframes: Vec::new(),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Keyframe indices settled so far.
    pub fn keyframes(&self) -> &[usize] {
        &self.keyframes
    }

    pub fn push(&mut self, sample: TimedPose) -> Result<Vec<TimedPose>, HandtrackError> {
        if !sample.t.is_finite() || self.samples.last().is_some_and(|p| sample.t <= p.t) {
            return Err(HandtrackError::NonIncreasingTime(self.samples.len()));
        }
        let mut out = Vec::new();
        if let Some(prev) = self.samples.last() {
            let d = sample.pose.position() - prev.pose.position();
            self.raw.push(d.norm() / (sample.t - prev.t));
        } else {
            self.keyframes.push(0);
            self.last_key = Some(self.key_at(&sample));
            self.cursor = Some(GridCursor::new(sample.t, self.rate));
        }
        self.samples.push(sample);
        let half = self.params.window / 2;
        while self.next_candidate + half + 2 <= self.raw.len() {
            self.decide(self.next_candidate, &mut out);
            self.next_candidate += 1;
        }
        Ok(out)
    }

    /// Settles the remaining keyframes and closes on the final sample.
    pub fn finish(mut self) -> Result<(Vec<TimedPose>, Vec<usize>), HandtrackError> {
        if self.samples.len() < 2 {
            return Err(HandtrackError::TooFewSamples(self.samples.len()));
        }
        let mut out = Vec::new();
        while self.next_candidate + 1 < self.raw.len() {
            self.decide(self.next_candidate, &mut out);
            self.next_candidate += 1;
        }
        let last = self.key_at(self.samples.last().expect("non-empty"));
        let prev = self.last_key.expect("first sample seen");
        self.cursor
            .as_mut()
            .expect("first sample seen")
            .finish(&prev, &last, &mut out);
        self.keyframes.push(self.samples.len() - 1);
        Ok((out, self.keyframes))
    }

    fn key_at(&self, s: &TimedPose) -> TimedPose {
        TimedPose::new(s.t, self.calib.apply(&s.pose))
    }

    fn decide(&mut self, j: usize, out: &mut Vec<TimedPose>) {
        let half = self.params.window / 2;
        let s = |i| smoothed_at(&self.raw, i, half);
        if !is_trough(s(j - 1), s(j), s(j + 1), self.params.threshold) {
            return;
        }
        if self
            .last_trough
            .is_some_and(|k| j - k < self.params.min_separation)
        {
            return;
        }
        self.last_trough = Some(j);
        self.keyframes.push(j);
        let key = self.key_at(&self.samples[j]);
        let prev = self.last_key.replace(key).expect("first sample seen");
        self.cursor
            .as_mut()
            .expect("first sample seen")
            .emit_segment(&prev, &key, out);
    }
}
