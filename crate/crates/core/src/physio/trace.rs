use std::io::{BufRead, Write};
use std::path::Path;

use super::{PhysioError, Result};

/// A uniformly sampled respiratory-belt waveform.
///
/// `start_offset_s` is the trace time at which the first fMRI volume starts.
#[derive(Debug, Clone, PartialEq)]
pub struct RespiratoryTrace {
    pub scan_id: String,
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub start_offset_s: f64,
}

impl RespiratoryTrace {
    pub fn new(scan_id: impl Into<String>, samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        let trace = Self {
            scan_id: scan_id.into(),
            samples,
            sample_rate_hz,
            start_offset_s: 0.0,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn with_offset(mut self, start_offset_s: f64) -> Self {
        self.start_offset_s = start_offset_s;
        self
    }

    /// Same metadata, different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            scan_id: self.scan_id.clone(),
            samples,
            sample_rate_hz: self.sample_rate_hz,
            start_offset_s: self.start_offset_s,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(PhysioError::InvalidSampleRate(self.sample_rate_hz));
        }
        if self.samples.is_empty() {
            return Err(PhysioError::EmptyTrace);
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(PhysioError::NonFiniteSample(i));
        }
        Ok(())
    }

    /// Extraction needs at least two seconds of data.
    pub(crate) fn require_extractable(&self) -> Result<()> {
        self.validate()?;
        if (self.samples.len() as f64) < 2.0 * self.sample_rate_hz {
            return Err(PhysioError::TraceTooShort {
                needed_s: 2.0,
                have_s: self.duration_s(),
            });
        }
        Ok(())
    }

    /// Parses the `# key=value` header plus one-sample-per-line text format.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut scan_id = String::new();
        let mut rate = None;
        let mut offset = 0.0;
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(h) = t.strip_prefix('#') {
                let Some((k, v)) = h.split_once('=') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                let num = |v: &str| {
                    v.parse::<f64>().map_err(|e| PhysioError::Parse {
                        line: lineno,
                        msg: format!("bad value for {k}: {e}"),
                    })
                };
                match k {
                    "sample_rate_hz" => rate = Some(num(v)?),
                    "start_offset_s" => offset = num(v)?,
                    "scan_id" => scan_id = v.to_string(),
                    _ => {}
                }
                continue;
            }
            let x = t.parse::<f64>().map_err(|e| PhysioError::Parse {
                line: lineno,
                msg: format!("bad sample `{t}`: {e}"),
            })?;
            samples.push(x);
        }
        let rate = rate.ok_or(PhysioError::MissingMetadata("sample_rate_hz"))?;
        Ok(Self::new(scan_id, samples, rate)?.with_offset(offset))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# scan_id={}", self.scan_id)?;
        writeln!(w, "# sample_rate_hz={}", self.sample_rate_hz)?;
        writeln!(w, "# start_offset_s={}", self.start_offset_s)?;
        for x in &self.samples {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }
}
