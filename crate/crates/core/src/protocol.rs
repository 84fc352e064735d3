//! Bit-exact codec for the actuator's command and telemetry frames on the
//! CAN 2.0 link, plus the bus-budget arithmetic.
//!
//! Frame layout, MSB first in an 8-byte big-endian payload:
//!
//! ```text
//! command:   position(16) | velocity(12) | torque(12) | kp(12) | kd(12)
//! telemetry: position(16) | velocity(12) | torque(12) | 24 zero bits
//! ```
//!
//! Each field is linearly quantized onto its bit width: code 0 is the range
//! minimum, the all-ones code is the range maximum, and values round to the
//! nearest code with half-step ties resolved downward. The layout is
//! representative of common quasi-direct-drive interfaces, not a vendor
//! protocol.

use thiserror::Error;

/// Worst-case CAN 2.0 standard-frame overhead, bits, including a stuffing
/// margin on top of the 64-bit payload.
pub const CAN_FRAME_OVERHEAD_BITS: u32 = 64;

/// CAN 2.0 bit rate used for budgeting, bits per second.
pub const CAN_BITRATE_BPS: f64 = 1e6;

/// Command plus telemetry per control tick.
pub const FRAMES_PER_CONTROL_TICK: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("field {field} value {value} outside [{min}, {max}]")]
    FieldOutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("payload must be exactly 8 bytes, got {0}")]
    WrongLength(usize),
    #[error("bad hex dump line {line}: {reason}")]
    BadHexLine { line: usize, reason: String },
    #[error("invalid codec range for {0}: min must be below max")]
    InvalidRange(&'static str),
}

/// Linear quantization range of one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRange {
    pub min: f64,
    pub max: f64,
    pub bits: u32,
}

impl FieldRange {
    fn max_code(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    /// One quantization step: span / (2^bits - 1).
    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.max_code() as f64
    }

    fn quantize(&self, field: &'static str, value: f64) -> Result<u64, CodecError> {
        if !value.is_finite() || value < self.min || value > self.max {
            return Err(CodecError::FieldOutOfRange {
                field,
                value,
                min: self.min,
                max: self.max,
            });
        }
        let x = (value - self.min) / (self.max - self.min) * self.max_code() as f64;
        // Round to nearest, ties toward the lower code.
        let code = (x - 0.5).ceil();
        Ok((code.max(0.0) as u64).min(self.max_code()))
    }

    fn dequantize(&self, code: u64) -> f64 {
        self.min + code as f64 * self.step()
    }
}

/// Field ranges of the codec; the defaults cover the plant extremes
/// (|torque| <= 3 Nm, theta within 1.1 rad of travel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecRanges {
    pub position: FieldRange,
    pub velocity: FieldRange,
    pub torque: FieldRange,
    pub kp: FieldRange,
    pub kd: FieldRange,
}

impl CodecRanges {
    pub fn standard() -> Self {
        Self {
            position: FieldRange {
                min: -12.5,
                max: 12.5,
                bits: 16,
            },
            velocity: FieldRange {
                min: -65.0,
                max: 65.0,
                bits: 12,
            },
            torque: FieldRange {
                min: -6.0,
                max: 6.0,
                bits: 12,
            },
            kp: FieldRange {
                min: 0.0,
                max: 500.0,
                bits: 12,
            },
            kd: FieldRange {
                min: 0.0,
                max: 5.0,
                bits: 12,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        for (name, r) in [
            ("position", self.position),
            ("velocity", self.velocity),
            ("torque", self.torque),
            ("kp", self.kp),
            ("kd", self.kd),
        ] {
            if !(r.min < r.max) || r.bits == 0 || r.bits > 32 {
                return Err(CodecError::InvalidRange(name));
            }
        }
        Ok(())
    }
}

impl Default for CodecRanges {
    fn default() -> Self {
        Self::standard()
    }
}

/// Drive-side setpoint frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommandFrame {
    pub torque_setpoint: f64,
    pub position_setpoint: f64,
    pub velocity_setpoint: f64,
    pub kp_field: f64,
    pub kd_field: f64,
}

/// Drive-side feedback frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TelemetryFrame {
    pub position: f64,
    pub velocity: f64,
    pub torque_estimate: f64,
}

pub fn encode_command(frame: &CommandFrame, ranges: &CodecRanges) -> Result<[u8; 8], CodecError> {
    let pos = ranges
        .position
        .quantize("position", frame.position_setpoint)?;
    let vel = ranges
        .velocity
        .quantize("velocity", frame.velocity_setpoint)?;
    let tau = ranges.torque.quantize("torque", frame.torque_setpoint)?;
    let kp = ranges.kp.quantize("kp", frame.kp_field)?;
    let kd = ranges.kd.quantize("kd", frame.kd_field)?;
    let word = (pos << 48) | (vel << 36) | (tau << 24) | (kp << 12) | kd;
    Ok(word.to_be_bytes())
}

pub fn decode_command(payload: &[u8], ranges: &CodecRanges) -> Result<CommandFrame, CodecError> {
    let word = payload_word(payload)?;
    Ok(CommandFrame {
        position_setpoint: ranges.position.dequantize((word >> 48) & 0xFFFF),
        velocity_setpoint: ranges.velocity.dequantize((word >> 36) & 0xFFF),
        torque_setpoint: ranges.torque.dequantize((word >> 24) & 0xFFF),
        kp_field: ranges.kp.dequantize((word >> 12) & 0xFFF),
        kd_field: ranges.kd.dequantize(word & 0xFFF),
    })
}

pub fn encode_telemetry(
    frame: &TelemetryFrame,
    ranges: &CodecRanges,
) -> Result<[u8; 8], CodecError> {
    let pos = ranges.position.quantize("position", frame.position)?;
    let vel = ranges.velocity.quantize("velocity", frame.velocity)?;
    let tau = ranges.torque.quantize("torque", frame.torque_estimate)?;
    let word = (pos << 48) | (vel << 36) | (tau << 24);
    Ok(word.to_be_bytes())
}

pub fn decode_telemetry(
    payload: &[u8],
    ranges: &CodecRanges,
) -> Result<TelemetryFrame, CodecError> {
    let word = payload_word(payload)?;
    Ok(TelemetryFrame {
        position: ranges.position.dequantize((word >> 48) & 0xFFFF),
        velocity: ranges.velocity.dequantize((word >> 36) & 0xFFF),
        torque_estimate: ranges.torque.dequantize((word >> 24) & 0xFFF),
    })
}

fn payload_word(payload: &[u8]) -> Result<u64, CodecError> {
    let bytes: [u8; 8] = payload
        .try_into()
        .map_err(|_| CodecError::WrongLength(payload.len()))?;
    Ok(u64::from_be_bytes(bytes))
}

/// Bus utilization fraction at the given control rate: two frames per tick,
/// 64 payload bits plus the stated per-frame overhead, on a 1 Mbps bus.
pub fn bus_budget(control_rate: f64, frame_overhead_bits: u32) -> f64 {
    control_rate * FRAMES_PER_CONTROL_TICK as f64 * (64 + frame_overhead_bits) as f64
        / CAN_BITRATE_BPS
}

/// One payload as a hex-dump test-vector line: 16 lowercase hex digits,
/// optionally followed by ` # comment`.
pub fn format_hex_line(payload: &[u8; 8], comment: Option<&str>) -> String {
    let hex: String = payload.iter().map(|b| format!("{b:02x}")).collect();
    match comment {
        Some(c) => format!("{hex} # {c}"),
        None => hex,
    }
}

/// Parse a hex-dump document: one frame per line, `#` starts a comment,
/// blank lines ignored.
pub fn parse_hex_dump(text: &str) -> Result<Vec<[u8; 8]>, CodecError> {
    let mut frames = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.len() != 16 || !body.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(CodecError::BadHexLine {
                line,
                reason: format!("expected 16 hex digits, got {body:?}"),
            });
        }
        let mut payload = [0u8; 8];
        for (i, chunk) in payload.iter_mut().enumerate() {
            *chunk = u8::from_str_radix(&body[2 * i..2 * i + 2], 16).map_err(|e| {
                CodecError::BadHexLine {
                    line,
                    reason: e.to_string(),
                }
            })?;
        }
        frames.push(payload);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn all_minimum_fields_encode_to_zero_payload() {
        let ranges = CodecRanges::standard();
        let frame = CommandFrame {
            position_setpoint: -12.5,
            velocity_setpoint: -65.0,
            torque_setpoint: -6.0,
            kp_field: 0.0,
            kd_field: 0.0,
        };
        assert_eq!(encode_command(&frame, &ranges).unwrap(), [0u8; 8]);
    }

    #[test]
    fn zero_payload_decodes_to_range_minima() {
        let ranges = CodecRanges::standard();
        let t = decode_telemetry(&[0u8; 8], &ranges).unwrap();
        assert_eq!(t.position, -12.5);
        assert_eq!(t.velocity, -65.0);
        assert_eq!(t.torque_estimate, -6.0);
    }

    #[test]
    fn max_codes_decode_to_range_maxima() {
        let ranges = CodecRanges::standard();
        let frame = TelemetryFrame {
            position: 12.5,
            velocity: 65.0,
            torque_estimate: 6.0,
        };
        let payload = encode_telemetry(&frame, &ranges).unwrap();
        let back = decode_telemetry(&payload, &ranges).unwrap();
        assert_eq!(back.position, 12.5);
        assert_eq!(back.velocity, 65.0);
        assert_eq!(back.torque_estimate, 6.0);
    }

    #[test]
    fn zero_torque_quantizes_to_floor_of_midpoint_tie() {
        let ranges = CodecRanges::standard();
        // (0 - (-6)) / 12 * 4095 = 2047.5: the tie resolves downward.
        let code = ranges.torque.quantize("torque", 0.0).unwrap();
        assert_eq!(code, 2047);
        // Step size 12 / 4095.
        assert!((ranges.torque.step() - 12.0 / 4095.0).abs() < 1e-15);
        assert!((ranges.torque.step() - 0.00293).abs() < 2e-6);
    }

    #[test]
    fn out_of_range_field_is_named() {
        let ranges = CodecRanges::standard();
        let frame = CommandFrame {
            torque_setpoint: 7.0,
            ..CommandFrame::default()
        };
        match encode_command(&frame, &ranges) {
            Err(CodecError::FieldOutOfRange { field, .. }) => assert_eq!(field, "torque"),
            other => panic!("expected out-of-range torque, got {other:?}"),
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let ranges = CodecRanges::standard();
        assert_eq!(
            decode_telemetry(&[0u8; 7], &ranges),
            Err(CodecError::WrongLength(7))
        );
        assert!(decode_telemetry(&[0u8; 9], &ranges).is_err());
    }

    #[test]
    fn twelve_bit_round_trip_is_exhaustive_within_one_step() {
        let ranges = CodecRanges::standard();
        for field in [ranges.velocity, ranges.torque, ranges.kp, ranges.kd] {
            let step = field.step();
            for code in 0..=field.max_code() {
                let v = field.dequantize(code);
                let back = field.quantize("x", v).unwrap();
                assert_eq!(back, code, "code {code} did not survive the round trip");
                // Perturbed values stay within one step after a round trip.
                let v2 = (v + 0.4 * step).min(field.max);
                let q = field.dequantize(field.quantize("x", v2).unwrap());
                assert!((q - v2).abs() <= step);
            }
        }
    }

    #[test]
    fn random_frames_round_trip_within_one_step() {
        let ranges = CodecRanges::standard();
        let mut rng = SplitMix64::new(0xC0DEC);
        for _ in 0..100_000 {
            let lerp = |r: FieldRange, u: f64| r.min + u * (r.max - r.min);
            let frame = CommandFrame {
                position_setpoint: lerp(ranges.position, rng.next_f64()),
                velocity_setpoint: lerp(ranges.velocity, rng.next_f64()),
                torque_setpoint: lerp(ranges.torque, rng.next_f64()),
                kp_field: lerp(ranges.kp, rng.next_f64()),
                kd_field: lerp(ranges.kd, rng.next_f64()),
            };
            let payload = encode_command(&frame, &ranges).unwrap();
            let back = decode_command(&payload, &ranges).unwrap();
            assert!(
                (back.position_setpoint - frame.position_setpoint).abs() <= ranges.position.step()
            );
            assert!(
                (back.velocity_setpoint - frame.velocity_setpoint).abs() <= ranges.velocity.step()
            );
            assert!((back.torque_setpoint - frame.torque_setpoint).abs() <= ranges.torque.step());
            assert!((back.kp_field - frame.kp_field).abs() <= ranges.kp.step());
            assert!((back.kd_field - frame.kd_field).abs() <= ranges.kd.step());
        }
    }

    #[test]
    fn encoding_is_monotone() {
        let ranges = CodecRanges::standard();
        let field = ranges.torque;
        let mut prev = 0;
        let n = 5000;
        for i in 0..=n {
            let v = field.min + (field.max - field.min) * i as f64 / n as f64;
            let code = field.quantize("torque", v).unwrap();
            assert!(code >= prev, "code decreased at value {v}");
            prev = code;
        }
    }

    #[test]
    fn bus_budget_numbers() {
        // 100 Hz, 2 frames, 128 bits per frame: 2.56%.
        assert!((bus_budget(100.0, CAN_FRAME_OVERHEAD_BITS) - 0.0256).abs() < 1e-12);
        // Payload only: 1.28%.
        assert!((bus_budget(100.0, 0) - 0.0128).abs() < 1e-12);
        // A 1 kHz loop still fits with headroom.
        let util = bus_budget(1000.0, CAN_FRAME_OVERHEAD_BITS);
        assert!((util - 0.256).abs() < 1e-12);
        assert!(util < 1.0);
    }

    #[test]
    fn hex_dump_round_trip() {
        let ranges = CodecRanges::standard();
        let frame = CommandFrame {
            torque_setpoint: 0.24,
            position_setpoint: 0.35,
            velocity_setpoint: -0.8,
            kp_field: 0.0,
            kd_field: 1.0,
        };
        let payload = encode_command(&frame, &ranges).unwrap();
        let doc = format!(
            "# command vectors\n{}\n\n{}\n",
            format_hex_line(&payload, Some("torque hold")),
            format_hex_line(&[0u8; 8], None),
        );
        let frames = parse_hex_dump(&doc).unwrap();
        assert_eq!(frames, vec![payload, [0u8; 8]]);

        assert!(parse_hex_dump("123\n").is_err());
        assert!(parse_hex_dump("zzzzzzzzzzzzzzzz\n").is_err());
    }
}
