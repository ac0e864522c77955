//! Quantities with explicit units.
//!
//! Frequencies normalize to angular frequency in rad/s. A value in Hz is a
//! cyclic frequency, so "100 MHz" and "2pi*100 MHz" both mean 2 pi x 1e8 rad/s;
//! the prefix is accepted because that is how the values are usually quoted.
//! "rad/s" (with k/M/G prefixes) is taken as is. Times normalize to seconds.

use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
}

impl Dimension {
    pub fn expected(self) -> &'static str {
        match self {
            Dimension::Frequency => "a frequency such as \"100 MHz\", \"2pi*100 MHz\" or \"6.3e8 rad/s\"",
            Dimension::Time => "a time such as \"0.1 s\", \"25 ms\", \"20 us\" or \"5 ns\"",
        }
    }
}

fn frequency_unit(u: &str) -> Option<(f64, bool)> {
    // (scale, cyclic)
    Some(match u {
        "Hz" => (1.0, true),
        "kHz" => (1e3, true),
        "MHz" => (1e6, true),
        "GHz" => (1e9, true),
        "THz" => (1e12, true),
        "rad/s" => (1.0, false),
        "krad/s" => (1e3, false),
        "Mrad/s" => (1e6, false),
        "Grad/s" => (1e9, false),
        _ => return None,
    })
}

/// Divisor to seconds; dividing by 1e6 is correctly rounded where
/// multiplying by 1e-6 is not.
fn time_unit(u: &str) -> Option<f64> {
    Some(match u {
        "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" | "μs" => 1e6,
        "ns" => 1e9,
        "ps" => 1e12,
        _ => return None,
    })
}

/// Parse "number unit" into SI (rad/s or s).
pub fn parse(text: &str, dim: Dimension) -> Result<f64, String> {
    let t = text.trim();
    let (two_pi, rest) = match t.strip_prefix("2pi*").or_else(|| t.strip_prefix("2*pi*")) {
        Some(r) => (true, r.trim()),
        None => (false, t),
    };
    let mut parts = rest.split_whitespace();
    let (Some(num), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("cannot read {text:?}; expected {}", dim.expected()));
    };
    let x: f64 = num.parse().map_err(|_| format!("{num:?} is not a number"))?;
    if !x.is_finite() {
        return Err(format!("{num:?} is not finite"));
    }
    match dim {
        Dimension::Frequency => {
            let (scale, cyclic) = frequency_unit(unit)
                .ok_or_else(|| format!("unit {unit:?} is not a frequency; expected {}", dim.expected()))?;
            if two_pi && !cyclic {
                return Err(format!("2pi* prefix on {unit:?}, which is already angular"));
            }
            Ok(if cyclic { TAU * x * scale } else { x * scale })
        }
        Dimension::Time => {
            if two_pi {
                return Err("2pi* prefix on a time".into());
            }
            let scale =
                time_unit(unit).ok_or_else(|| format!("unit {unit:?} is not a time; expected {}", dim.expected()))?;
            Ok(x / scale)
        }
    }
}

/// Canonical text of an SI value, which parses back to the same bits.
#[cfg(test)]
pub fn format(value: f64, dim: Dimension) -> String {
    match dim {
        Dimension::Frequency => format!("{value:e} rad/s"),
        Dimension::Time => format!("{value:e} s"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_spellings_agree() {
        let a = parse("100 MHz", Dimension::Frequency).unwrap();
        let b = parse("2pi*100 MHz", Dimension::Frequency).unwrap();
        assert_eq!(a, b);
        assert!((a - TAU * 1e8).abs() < 1e-3);
        assert_eq!(parse("6.5e8 rad/s", Dimension::Frequency).unwrap(), 6.5e8);
    }

    #[test]
    fn times() {
        assert_eq!(parse("25 ms", Dimension::Time).unwrap(), 25e-3);
        assert_eq!(parse("20 us", Dimension::Time).unwrap(), 20e-6);
        assert_eq!(parse("1 s", Dimension::Time).unwrap(), 1.0);
    }

    #[test]
    fn rejects_missing_or_wrong_units() {
        assert!(parse("100", Dimension::Frequency).is_err());
        assert!(parse("100 ms", Dimension::Frequency).is_err());
        assert!(parse("3 MHz", Dimension::Time).is_err());
        assert!(parse("2pi*5 rad/s", Dimension::Frequency).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        for v in [0.1, 6.283185307179586e8, 1.0 / 3.0, 2.5e-17] {
            for d in [Dimension::Frequency, Dimension::Time] {
                assert_eq!(parse(&format(v, d), d).unwrap(), v);
            }
        }
    }
}
