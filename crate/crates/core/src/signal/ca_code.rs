//! GPS L1 C/A Gold codes.
//!
//! Two 10-stage maximal-length registers: G1 with feedback `1 + x^3 + x^10`,
//! G2 with `1 + x^2 + x^3 + x^6 + x^8 + x^9 + x^10`. Each PRN picks two G2
//! stages (the phase selector) whose XOR delays G2 by a PRN-specific amount.

use crate::error::{Error, Result};

pub const CODE_LENGTH: usize = 1023;
pub const CHIP_RATE_HZ: f64 = 1.023e6;
pub const L1_FREQUENCY_HZ: f64 = 1575.42e6;
pub const CODE_PERIOD_S: f64 = 1e-3;

/// G2 phase selector stages (1-based) for PRN 1..=32.
const PHASE_SELECTOR: [(usize, usize); 32] = [
    (2, 6),
    (3, 7),
    (4, 8),
    (5, 9),
    (1, 9),
    (2, 10),
    (1, 8),
    (2, 9),
    (3, 10),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (1, 4),
    (2, 5),
    (3, 6),
    (4, 7),
    (5, 8),
    (6, 9),
    (1, 3),
    (4, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 6),
    (2, 7),
    (3, 8),
    (4, 9),
];

/// One PRN's spreading code as +1/-1 chips (logical 0 is +1, logical 1 is -1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaCode {
    prn: u8,
    chips: Vec<i8>,
}

impl CaCode {
    pub fn prn(&self) -> u8 {
        self.prn
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    /// Logical chip values (0 or 1).
    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        self.chips.iter().map(|&c| u8::from(c < 0))
    }

    /// Circular correlation of two codes at `lag`: `sum_n a[n] * b[(n + lag) mod 1023]`.
    pub fn correlation(&self, other: &CaCode, lag: usize) -> i32 {
        (0..CODE_LENGTH)
            .map(|n| i32::from(self.chips[n]) * i32::from(other.chips[(n + lag) % CODE_LENGTH]))
            .sum()
    }
}

pub fn generate_ca_code(prn: u8) -> Result<CaCode> {
    if !(1..=32).contains(&prn) {
        return Err(Error::invalid(format!("PRN must be in 1..=32, got {prn}")));
    }
    let (s1, s2) = PHASE_SELECTOR[usize::from(prn) - 1];
    // index 0 is stage 1
    let mut g1 = [1u8; 10];
    let mut g2 = [1u8; 10];
    let mut chips = Vec::with_capacity(CODE_LENGTH);
    for _ in 0..CODE_LENGTH {
        let g2i = g2[s1 - 1] ^ g2[s2 - 1];
        let bit = g1[9] ^ g2i;
        chips.push(if bit == 0 { 1 } else { -1 });

        let f1 = g1[2] ^ g1[9];
        let f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
        g1.rotate_right(1);
        g2.rotate_right(1);
        g1[0] = f1;
        g2[0] = f2;
    }
    Ok(CaCode { prn, chips })
}
