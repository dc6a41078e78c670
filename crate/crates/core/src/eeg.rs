//! EEG recording I/O, electrode montages and the synthetic generator.
//!
//! Recordings live in a plain-text `.b2deeg` format (header + one line per
//! time sample) chosen so fixtures can be authored and diffed by hand.
//! Montages (`.b2dloc`) map electrode labels to 2D polar head coordinates
//! with radius 1.0 at the head rim.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::spectral::BAND_CENTER_HZ;

/// Cognitive state label of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Expert,
    NonExpert,
    Control,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Expert, Condition::NonExpert, Condition::Control];

    /// Fixed label mapping used everywhere (manifests, datasets, reports).
    pub fn class_index(self) -> usize {
        match self {
            Condition::Expert => 0,
            Condition::NonExpert => 1,
            Condition::Control => 2,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Condition> {
        Condition::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Expert => "expert",
            Condition::NonExpert => "nonexpert",
            Condition::Control => "control",
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        match s {
            "expert" => Some(Condition::Expert),
            "nonexpert" => Some(Condition::NonExpert),
            "control" => Some(Condition::Control),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A multichannel EEG recording in microvolts.
///
/// `data` is `[n_channels][n_samples]`; channel order matches `channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub subject_id: String,
    pub condition: Condition,
    pub sampling_rate_hz: f64,
    pub channels: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl EegRecording {
    pub fn new(
        subject_id: impl Into<String>,
        condition: Condition,
        sampling_rate_hz: f64,
        channels: Vec<String>,
        data: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rec = EegRecording {
            subject_id: subject_id.into(),
            condition,
            sampling_rate_hz,
            channels,
            data,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::validation("recording must have at least one channel"));
        }
        if self.data.len() != self.channels.len() {
            return Err(Error::validation(format!(
                "data has {} rows but {} channel labels",
                self.data.len(),
                self.channels.len()
            )));
        }
        if !(self.sampling_rate_hz > 0.0) {
            return Err(Error::validation("sampling_rate_hz must be positive"));
        }
        let n = self.n_samples();
        for (ch, row) in self.channels.iter().zip(&self.data) {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "channel {ch} has {} samples, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("channel {ch} contains non-finite values")));
            }
        }
        Ok(())
    }
}

/// Reads a `.b2deeg` recording file.
pub fn read_recording(path: impl AsRef<Path>) -> Result<EegRecording> {
    let text = std::fs::read_to_string(path)?;
    parse_recording(&text)
}

pub fn parse_recording(text: &str) -> Result<EegRecording> {
    // Comment lines keep their line numbers for error reporting.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty recording file"))?;
    if magic != "B2DEEG 1" {
        return Err(Error::parse(ln, format!("bad magic line {magic:?}, expected \"B2DEEG 1\"")));
    }

    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(ln, "missing header line"))?;
    let mut subject = None;
    let mut condition = None;
    let mut fs = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(ln, format!("malformed header field {field:?}")))?;
        match key {
            "subject" => subject = Some(value.to_string()),
            "condition" => {
                condition = Some(Condition::parse(value).ok_or_else(|| {
                    Error::parse(ln, format!("unknown condition label {value:?}"))
                })?)
            }
            "fs" => {
                fs = Some(value.parse::<f64>().map_err(|_| {
                    Error::parse(ln, format!("bad sampling rate {value:?}"))
                })?)
            }
            other => return Err(Error::parse(ln, format!("unknown header key {other:?}"))),
        }
    }
    let subject = subject.ok_or_else(|| Error::parse(ln, "header missing subject="))?;
    let condition = condition.ok_or_else(|| Error::parse(ln, "header missing condition="))?;
    let fs = fs.ok_or_else(|| Error::parse(ln, "header missing fs="))?;

    let (ln, chan_line) = lines
        .next()
        .ok_or_else(|| Error::parse(ln, "missing channel label line"))?;
    let channels: Vec<String> = chan_line.split(',').map(|c| c.trim().to_string()).collect();
    if channels.iter().any(String::is_empty) {
        return Err(Error::parse(ln, "empty channel label"));
    }

    let n_channels = channels.len();
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); n_channels];
    for (ln, row) in lines {
        let values: Vec<&str> = row.split(',').collect();
        if values.len() != n_channels {
            return Err(Error::parse(
                ln,
                format!("expected {n_channels} values, found {}", values.len()),
            ));
        }
        for (ch, v) in values.iter().enumerate() {
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(ln, format!("bad value {v:?}")))?;
            data[ch].push(v);
        }
    }

    EegRecording::new(subject, condition, fs, channels, data)
}

/// Writes a recording; `read_recording` reconstructs it exactly
/// (values are printed in shortest round-trip decimal form).
pub fn write_recording(rec: &EegRecording, path: impl AsRef<Path>) -> Result<()> {
    rec.validate()?;
    let mut out = String::new();
    out.push_str("B2DEEG 1\n");
    out.push_str(&format!(
        "subject={} condition={} fs={}\n",
        rec.subject_id, rec.condition, rec.sampling_rate_hz
    ));
    out.push_str(&rec.channels.join(","));
    out.push('\n');
    for s in 0..rec.n_samples() {
        for (ch, row) in rec.data.iter().enumerate() {
            if ch > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", row[s]));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// One electrode position in polar head coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MontageEntry {
    pub label: String,
    /// Degrees clockwise from the nose (top of the head plot), in `[0, 360)`.
    pub angle_deg: f64,
    /// 0 = vertex, 1 = head-circle rim.
    pub radius: f64,
}

/// Electrode label -> 2D polar position map.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    pub entries: Vec<MontageEntry>,
}

impl Montage {
    pub fn new(entries: Vec<MontageEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::validation(format!("duplicate montage label {:?}", e.label)));
            }
            if !(0.0..360.0).contains(&e.angle_deg) {
                return Err(Error::validation(format!(
                    "electrode {}: angle {} outside [0, 360)",
                    e.label, e.angle_deg
                )));
            }
            if !(0.0..=1.0).contains(&e.radius) {
                return Err(Error::validation(format!(
                    "electrode {}: radius {} outside [0, 1]",
                    e.label, e.radius
                )));
            }
        }
        Ok(Montage { entries })
    }

    /// Bundled 64-channel cap layout (10-10 subset).
    pub fn standard_64() -> Montage {
        parse_montage(include_str!("../data/standard64.b2dloc"))
            .expect("bundled montage is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&MontageEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Resolves recording channel labels to montage entries, preserving order.
    pub fn resolve<'a>(&'a self, channels: &[String]) -> Result<Vec<&'a MontageEntry>> {
        channels
            .iter()
            .map(|ch| {
                self.get(ch)
                    .ok_or_else(|| Error::validation(format!("channel {ch:?} not found in montage")))
            })
            .collect()
    }
}

pub fn load_montage(path: impl AsRef<Path>) -> Result<Montage> {
    let text = std::fs::read_to_string(path)?;
    parse_montage(&text)
}

pub fn parse_montage(text: &str) -> Result<Montage> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::parse(i + 1, format!("expected label,angle_deg,radius, got {line:?}")));
        }
        let angle_deg: f64 = parts[1]
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad angle {:?}", parts[1])))?;
        let radius: f64 = parts[2]
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad radius {:?}", parts[2])))?;
        entries.push(MontageEntry {
            label: parts[0].to_string(),
            angle_deg,
            radius,
        });
    }
    Montage::new(entries)
}

/// Per-condition spatial emphasis used by the synthetic generator.
///
/// Each condition amplifies the band sinusoids around one scalp location,
/// giving its topographic images a class-specific blob that survives the
/// per-image min-max normalization in rendering. `strength` 0 disables the
/// effect (all channels carry identical amplitudes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTopography {
    /// Peak amplitude multiplier at the class focus (1.0 = no emphasis).
    pub strength: f64,
    /// Gaussian footprint of the focus in head-coordinate units.
    pub sigma: f64,
}

impl ClassTopography {
    /// Focus of each class on the head disk (x right, y nose).
    pub fn focus(condition: Condition) -> (f64, f64) {
        match condition {
            Condition::Expert => (0.0, 0.55),
            Condition::NonExpert => (0.0, -0.55),
            Condition::Control => (-0.55, 0.0),
        }
    }
}

/// Parameters of the synthetic EEG generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_subjects_per_condition: usize,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    /// Standard deviation of the additive white noise, in microvolts.
    pub noise_sigma: f64,
    /// Base sinusoid amplitude in microvolts.
    pub base_amplitude_uv: f64,
    /// Per-condition amplitude multipliers for the four bands
    /// (theta1, theta2, alpha1, alpha2), indexed by `Condition::class_index`.
    pub class_band_gains: [[f64; 4]; 3],
    /// Optional class-specific scalp emphasis; `None` keeps amplitudes
    /// uniform across channels.
    pub topography: Option<ClassTopography>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_subjects_per_condition: 12,
            duration_s: 24.0,
            sampling_rate_hz: 256.0,
            noise_sigma: 1.0,
            base_amplitude_uv: 10.0,
            class_band_gains: [[1.0; 4]; 3],
            topography: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects_per_condition == 0 {
            return Err(Error::validation("n_subjects_per_condition must be >= 1"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::validation("duration_s must be positive"));
        }
        if !(self.sampling_rate_hz > 0.0) {
            return Err(Error::validation("sampling_rate_hz must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::validation("noise_sigma must be >= 0"));
        }
        if !(self.base_amplitude_uv >= 0.0) {
            return Err(Error::validation("base_amplitude_uv must be >= 0"));
        }
        for gains in &self.class_band_gains {
            if gains.iter().any(|g| !(*g >= 0.0)) {
                return Err(Error::validation("class_band_gains must be >= 0"));
            }
        }
        if let Some(t) = &self.topography {
            if !(t.strength >= 0.0) || !(t.sigma > 0.0) {
                return Err(Error::validation("topography strength must be >= 0 and sigma > 0"));
            }
        }
        Ok(())
    }
}

/// Generates a deterministic synthetic cohort: per condition, each channel
/// carries sinusoids at the four band-center frequencies (5.5, 7.5, 9.5,
/// 11.5 Hz) scaled by the class band gains, plus white noise.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    montage: &Montage,
    seed: u64,
) -> Result<Vec<EegRecording>> {
    spec.validate()?;
    if montage.is_empty() {
        return Err(Error::validation("montage has no electrodes"));
    }
    let n_samples = (spec.duration_s * spec.sampling_rate_hz).round() as usize;
    let channels: Vec<String> = montage.entries.iter().map(|e| e.label.clone()).collect();
    let positions: Vec<(f64, f64)> = montage
        .entries
        .iter()
        .map(|e| {
            let a = e.angle_deg.to_radians();
            (e.radius * a.sin(), e.radius * a.cos())
        })
        .collect();

    let mut recordings = Vec::new();
    for condition in Condition::ALL {
        let gains = spec.class_band_gains[condition.class_index()];
        for subj in 0..spec.n_subjects_per_condition {
            // Independent stream per (condition, subject) so recordings do
            // not change when the cohort size does.
            let stream = (condition.class_index() as u64) << 32 | subj as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
                .expect("valid noise distribution");

            let mut data = Vec::with_capacity(channels.len());
            for &(x, y) in &positions {
                let spatial = match &spec.topography {
                    Some(t) => {
                        let (fx, fy) = ClassTopography::focus(condition);
                        let d2 = (x - fx).powi(2) + (y - fy).powi(2);
                        1.0 + (t.strength - 1.0) * (-d2 / (2.0 * t.sigma * t.sigma)).exp()
                    }
                    None => 1.0,
                };
                let phases: [f64; 4] =
                    std::array::from_fn(|_| rng.gen::<f64>() * std::f64::consts::TAU);
                let mut row = Vec::with_capacity(n_samples);
                for s in 0..n_samples {
                    let t = s as f64 / spec.sampling_rate_hz;
                    let mut v = 0.0;
                    for (b, &f_hz) in BAND_CENTER_HZ.iter().enumerate() {
                        let amp = spec.base_amplitude_uv * gains[b] * spatial;
                        v += amp * (std::f64::consts::TAU * f_hz * t + phases[b]).sin();
                    }
                    if spec.noise_sigma > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    row.push(v);
                }
                data.push(row);
            }

            let subject_id = format!("{}{:02}", condition, subj + 1);
            recordings.push(EegRecording::new(
                subject_id,
                condition,
                spec.sampling_rate_hz,
                channels.clone(),
                data,
            )?);
        }
    }
    Ok(recordings)
}
