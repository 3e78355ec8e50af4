use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

/// Independent source waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Dc {
        amplitude: f64,
    },
    Sin {
        amplitude: f64,
        omega: f64,
    },
    Cos {
        amplitude: f64,
        omega: f64,
    },
    /// `amplitude * sign(sin(omega * t))`, with `sign(0) = 0`.
    Square {
        amplitude: f64,
        omega: f64,
    },
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc { amplitude } => amplitude,
            Waveform::Sin { amplitude, omega } => amplitude * libm::sin(omega * t),
            Waveform::Cos { amplitude, omega } => amplitude * libm::cos(omega * t),
            Waveform::Square { amplitude, omega } => amplitude * square_sign(omega, t),
        }
    }

    /// Time derivative. The square wave is treated as piecewise constant, so
    /// its derivative is zero away from the jumps.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc { .. } | Waveform::Square { .. } => 0.0,
            Waveform::Sin { amplitude, omega } => amplitude * omega * libm::cos(omega * t),
            Waveform::Cos { amplitude, omega } => -amplitude * omega * libm::sin(omega * t),
        }
    }

    /// Jump locations in `(t0, t1]`.
    pub fn discontinuities(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if let Waveform::Square { amplitude, omega } = *self {
            if amplitude == 0.0 || omega == 0.0 || t1 <= t0 {
                return out;
            }
            let period = PI / libm::fabs(omega);
            let mut k = libm::floor(t0 / period) as i64;
            loop {
                let tk = k as f64 * period;
                if tk > t1 + 1e-12 * period {
                    break;
                }
                if tk > t0 + 1e-12 * period {
                    out.push(tk);
                }
                k += 1;
            }
        }
        out
    }
}

/// `sign(sin(omega t))`, exactly zero on the zero crossings `omega t = k pi`
/// even when `sin` of the rounded argument is a few ulps away from zero.
fn square_sign(omega: f64, t: f64) -> f64 {
    let phase = omega * t / PI;
    let nearest = libm::round(phase);
    if libm::fabs(phase - nearest) <= 1e-12 * libm::fmax(1.0, libm::fabs(phase)) {
        return 0.0;
    }
    let s = libm::sin(omega * t);
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Waveform::Dc { amplitude } => write!(f, "dc {amplitude}"),
            Waveform::Sin { amplitude, omega } => write!(f, "sin {amplitude} {omega}"),
            Waveform::Cos { amplitude, omega } => write!(f, "cos {amplitude} {omega}"),
            Waveform::Square { amplitude, omega } => write!(f, "square {amplitude} {omega}"),
        }
    }
}
