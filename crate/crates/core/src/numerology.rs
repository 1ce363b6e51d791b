//! System constants and the candidate numerology set.
//!
//! A numerology is an (IDFT size, CP ratio) pair. All members of one set run
//! on the same sample clock `B`, so the subcarrier spacing is `B / N` and the
//! CP holds `mu * N` samples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const LIGHT_SPEED: f64 = 2.997_924_58e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
}

impl SystemConfig {
    pub fn new(bandwidth_hz: f64, carrier_hz: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth_hz}")));
        }
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(Error::Config(format!("carrier must be positive, got {carrier_hz}")));
        }
        Ok(Self {
            bandwidth_hz,
            carrier_hz,
        })
    }

    /// 5 MHz bandwidth at a 2 GHz carrier.
    pub fn standard() -> Self {
        Self {
            bandwidth_hz: 5e6,
            carrier_hz: 2e9,
        }
    }

    pub fn sample_time(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn light_speed(&self) -> f64 {
        LIGHT_SPEED
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Exact CP ratio `num / den`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CpRatio {
    num: u32,
    den: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl CpRatio {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidNumerology("cp ratio with zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numer(&self) -> u32 {
        self.num
    }

    pub fn denom(&self) -> u32 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// CP length in samples for an IDFT of size `n`, if integral.
    pub fn cp_len(&self, n: usize) -> Option<usize> {
        let prod = n as u64 * self.num as u64;
        prod.is_multiple_of(self.den as u64).then(|| (prod / self.den as u64) as usize)
    }
}

impl fmt::Display for CpRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for CpRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cp ratio `{s}` is not of the form <num>/<den>"));
        let (a, b) = s.split_once('/').ok_or_else(bad)?;
        let num = a.trim().parse().map_err(|_| bad())?;
        let den = b.trim().parse().map_err(|_| bad())?;
        CpRatio::new(num, den)
    }
}

impl Serialize for CpRatio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CpRatio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerology {
    /// 1-based position in its set.
    pub index: usize,
    pub idft_size: usize,
    pub cp_ratio: CpRatio,
    pub cp_len: usize,
    pub subcarrier_spacing: f64,
    /// `log2(N / N_base)` when the set was built from a power-of-two family.
    pub scale_exponent: Option<i32>,
}

impl Numerology {
    pub fn mu(&self) -> f64 {
        self.cp_ratio.as_f64()
    }

    /// Samples per OFDM symbol including the CP.
    pub fn symbol_len(&self) -> usize {
        self.idft_size + self.cp_len
    }

    pub fn symbol_duration(&self, cfg: &SystemConfig) -> f64 {
        self.symbol_len() as f64 * cfg.sample_time()
    }
}

pub fn derive_numerology(idft_size: usize, cp_ratio: CpRatio, cfg: &SystemConfig) -> Result<Numerology> {
    if idft_size == 0 {
        return Err(Error::InvalidNumerology("idft size must be positive".into()));
    }
    let cp_len = cp_ratio.cp_len(idft_size).ok_or(Error::NonIntegralCp {
        n: idft_size,
        num: cp_ratio.numer(),
        den: cp_ratio.denom(),
    })?;
    Ok(Numerology {
        index: 1,
        idft_size,
        cp_ratio,
        cp_len,
        subcarrier_spacing: cfg.bandwidth_hz / idft_size as f64,
        scale_exponent: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumerologySpec {
    pub n: usize,
    pub cp: CpRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumerologySet {
    members: Vec<Numerology>,
}

impl NumerologySet {
    /// Builds a set from `(N, mu)` pairs in the given order. Indices are
    /// assigned 1..=M; the scaling exponent is filled in when every size is
    /// a power-of-two multiple of the smallest one.
    pub fn from_pairs(pairs: &[(usize, CpRatio)], cfg: &SystemConfig) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidNumerology("empty numerology set".into()));
        }
        let mut members = Vec::with_capacity(pairs.len());
        for (i, &(n, mu)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|&(m, nu)| m == n && nu == mu) {
                return Err(Error::InvalidNumerology(format!("duplicate member ({n}, {mu})")));
            }
            let mut num = derive_numerology(n, mu, cfg)?;
            num.index = i + 1;
            members.push(num);
        }
        let base = members.iter().map(|m| m.idft_size).min().unwrap();
        let family = members
            .iter()
            .all(|m| m.idft_size % base == 0 && (m.idft_size / base).is_power_of_two());
        if family {
            for m in &mut members {
                m.scale_exponent = Some((m.idft_size / base).trailing_zeros() as i32);
            }
        }
        Ok(Self { members })
    }

    pub fn from_specs(specs: &[NumerologySpec], cfg: &SystemConfig) -> Result<Self> {
        let pairs: Vec<_> = specs.iter().map(|s| (s.n, s.cp)).collect();
        Self::from_pairs(&pairs, cfg)
    }

    pub fn specs(&self) -> Vec<NumerologySpec> {
        self.members
            .iter()
            .map(|m| NumerologySpec {
                n: m.idft_size,
                cp: m.cp_ratio,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Numerology] {
        &self.members
    }

    /// Member by 1-based index.
    pub fn get(&self, index: usize) -> Result<&Numerology> {
        index
            .checked_sub(1)
            .and_then(|i| self.members.get(i))
            .ok_or(Error::BadIndex {
                index,
                size: self.members.len(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Numerology> {
        self.members.iter()
    }
}

/// Default candidate set: N in {240, 480, 960} with CP ratios 1/4, then 1/10.
pub fn default_pairs() -> Vec<(usize, CpRatio)> {
    let quarter = CpRatio { num: 1, den: 4 };
    let tenth = CpRatio { num: 1, den: 10 };
    vec![
        (240, quarter),
        (480, quarter),
        (960, quarter),
        (240, tenth),
        (480, tenth),
        (960, tenth),
    ]
}

pub fn default_candidate_set(cfg: &SystemConfig) -> NumerologySet {
    NumerologySet::from_pairs(&default_pairs(), cfg).expect("default set is valid")
}
