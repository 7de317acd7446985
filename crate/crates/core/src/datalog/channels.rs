//! Synthesized fixed-rate signal channels for skill log records.
//!
//! Channels carry integer milli-units (milliradians, millinewtons,
//! milli-velocity) so files compare exactly. The profiles are smooth,
//! verb-shaped placeholders for log-schema fidelity, not simulated
//! dynamics.

use std::collections::BTreeMap;

use crate::ids::DurationMs;
use crate::skill::types::Verb;
use crate::datalog::LogError;

pub const DEFAULT_RATE_HZ: u32 = 100;

/// Named fixed-rate integer signals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelSet {
    pub rate_hz: u32,
    pub channels: BTreeMap<String, Vec<i64>>,
}

impl ChannelSet {
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<i64>)> {
        self.channels.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// One text block per record:
    /// a `# record <id> rate_hz=<r> samples=<n> channels=<a,b,c>` header
    /// followed by `n` tab-separated sample rows.
    pub fn to_text_block(&self, record_id: usize) -> String {
        let names: Vec<&str> = self.channels.keys().map(|s| s.as_str()).collect();
        let samples = self.channels.values().map(|v| v.len()).max().unwrap_or(0);
        let mut out = format!(
            "# record {record_id} rate_hz={} samples={samples} channels={}\n",
            self.rate_hz,
            names.join(",")
        );
        for i in 0..samples {
            let row: Vec<String> = self
                .channels
                .values()
                .map(|v| v.get(i).copied().unwrap_or(0).to_string())
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Parse a channel file into per-record channel sets.
pub fn parse_text_blocks(body: &str) -> Result<BTreeMap<usize, ChannelSet>, LogError> {
    let mut out = BTreeMap::new();
    let mut current: Option<(usize, ChannelSet, Vec<String>, usize)> = None;
    for (ln, line) in body.lines().enumerate() {
        let bad = |m: &str| LogError::Format(format!("channels line {}: {m}", ln + 1));
        if let Some(rest) = line.strip_prefix("# record ") {
            if let Some((id, set, names, _)) = current.take() {
                let _ = names;
                out.insert(id, set);
            }
            let mut id = None;
            let mut rate = DEFAULT_RATE_HZ;
            let mut samples = 0usize;
            let mut names: Vec<String> = Vec::new();
            for (i, tok) in rest.split_whitespace().enumerate() {
                if i == 0 {
                    id = tok.parse::<usize>().ok();
                    continue;
                }
                if let Some(v) = tok.strip_prefix("rate_hz=") {
                    rate = v.parse().map_err(|_| bad("bad rate"))?;
                } else if let Some(v) = tok.strip_prefix("samples=") {
                    samples = v.parse().map_err(|_| bad("bad sample count"))?;
                } else if let Some(v) = tok.strip_prefix("channels=") {
                    names = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
                }
            }
            let id = id.ok_or_else(|| bad("missing record id"))?;
            let mut set = ChannelSet {
                rate_hz: rate,
                channels: BTreeMap::new(),
            };
            for n in &names {
                set.channels.insert(n.clone(), Vec::new());
            }
            current = Some((id, set, names, samples));
        } else if !line.trim().is_empty() {
            let (_, set, names, _) = current.as_mut().ok_or_else(|| bad("row before header"))?;
            let values: Vec<i64> = line
                .split('\t')
                .map(|v| v.parse::<i64>().map_err(|_| bad("bad sample value")))
                .collect::<Result<_, _>>()?;
            if values.len() != names.len() {
                return Err(bad("row width does not match channel count"));
            }
            for (name, v) in names.iter().zip(values) {
                set.channels.get_mut(name).expect("declared channel").push(v);
            }
        }
    }
    if let Some((id, set, _, _)) = current.take() {
        out.insert(id, set);
    }
    Ok(out)
}

/// Deterministic verb-shaped profiles: a smooth joint ramp, a contact-style
/// force trace, and a trapezoidal command velocity. Sample count is
/// `duration * rate` within one sample.
pub fn synthesize_channels(verb: &Verb, duration_ms: DurationMs, rate_hz: u32) -> ChannelSet {
    let n = ((duration_ms * rate_hz as u64) / 1000) as usize;
    let mut joints = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    let mut command = Vec::with_capacity(n);
    let (joint_amp, contact_n, vibration) = match verb {
        Verb::Pick => (800.0, 5000.0, 120.0),
        Verb::PlaceDown => (700.0, 8000.0, 120.0),
        Verb::PlaceUp => (700.0, 9000.0, 150.0),
        Verb::Transit => (1500.0, 300.0, 250.0),
        Verb::SupportUp | Verb::SupportDown => (400.0, 3000.0, 80.0),
        Verb::Handover => (600.0, 2500.0, 100.0),
        Verb::Detect => (50.0, 0.0, 20.0),
        Verb::Custom(_) => (100.0, 0.0, 40.0),
    };
    for i in 0..n {
        let t = if n <= 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        // smoothstep ramp for the joint trace
        let s = t * t * (3.0 - 2.0 * t);
        joints.push((joint_amp * s).round() as i64);
        // contact spike in the final fifth plus a small travel vibration
        let spike = if t > 0.8 { (t - 0.8) / 0.2 } else { 0.0 };
        let vib = vibration * (t * 12.0).sin();
        force.push((contact_n * spike * spike + vib).round() as i64);
        // trapezoidal velocity command
        let v = if t < 0.25 {
            t / 0.25
        } else if t > 0.75 {
            (1.0 - t) / 0.25
        } else {
            1.0
        };
        command.push((1000.0 * v).round() as i64);
    }
    let mut channels = BTreeMap::new();
    channels.insert("joint_position_mrad".to_string(), joints);
    channels.insert("force_mN".to_string(), force);
    channels.insert("command_mv".to_string(), command);
    ChannelSet {
        rate_hz,
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_tracks_duration_and_rate() {
        let c = synthesize_channels(&Verb::Pick, 3000, 100);
        for (_, v) in c.iter() {
            assert_eq!(v.len(), 300);
        }
        let short = synthesize_channels(&Verb::Detect, 25, 100);
        for (_, v) in short.iter() {
            assert_eq!(v.len(), 2);
        }
    }

    #[test]
    fn text_block_round_trips() {
        let c = synthesize_channels(&Verb::PlaceDown, 1500, 100);
        let block = c.to_text_block(42);
        let parsed = parse_text_blocks(&block).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[&42], c);
    }

    #[test]
    fn multiple_blocks_parse() {
        let a = synthesize_channels(&Verb::Pick, 500, 100);
        let b = synthesize_channels(&Verb::Transit, 800, 100);
        let body = format!("{}{}", a.to_text_block(0), b.to_text_block(1));
        let parsed = parse_text_blocks(&body).unwrap();
        assert_eq!(parsed[&0], a);
        assert_eq!(parsed[&1], b);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(parse_text_blocks("1\t2\t3\n").is_err());
        let bad = "# record 0 rate_hz=100 samples=1 channels=a,b\n1\n";
        assert!(parse_text_blocks(bad).is_err());
    }
}
