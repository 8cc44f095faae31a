use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A finitely supported 1D filter: `taps[t]` sits at integer position `offset + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub offset: i64,
    pub taps: Vec<f64>,
}

impl Filter {
    pub fn new(offset: i64, taps: Vec<f64>) -> Self {
        Filter { offset, taps }
    }

    /// Centered filter of odd length.
    pub fn centered(taps: Vec<f64>) -> Self {
        let offset = -((taps.len() as i64 - 1) / 2);
        Filter { offset, taps }
    }

    pub fn at(&self, pos: i64) -> f64 {
        let t = pos - self.offset;
        if t < 0 || t >= self.taps.len() as i64 {
            0.0
        } else {
            self.taps[t as usize]
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// À-trous upsampling: insert `factor - 1` zeros between taps.
    pub fn dilate(&self, factor: usize) -> Filter {
        if factor == 1 {
            return self.clone();
        }
        let mut taps = vec![0.0; (self.taps.len() - 1) * factor + 1];
        for (t, &q) in self.taps.iter().enumerate() {
            taps[t * factor] = q;
        }
        Filter {
            offset: self.offset * factor as i64,
            taps,
        }
    }
}

/// Filters `q_1..q_m` of a 1D framelet system; filter 0 is the low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub filters: Vec<Filter>,
    pub levels: usize,
}

/// Outcome of a UEP check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UepReport {
    pub holds: bool,
    pub max_deviation: f64,
    pub worst_shift: i64,
}

pub const UEP_TOL: f64 = 1e-12;

impl FilterBank {
    pub fn new(filters: Vec<Filter>, levels: usize) -> Result<Self> {
        if filters.is_empty() || filters.iter().any(|f| f.is_empty()) {
            return Err(Error::InvalidInput("filter bank needs at least one non-empty filter".into()));
        }
        if levels == 0 {
            return Err(Error::InvalidInput("levels must be >= 1".into()));
        }
        Ok(FilterBank { filters, levels })
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn with_levels(mut self, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidInput("levels must be >= 1".into()));
        }
        self.levels = levels;
        Ok(self)
    }

    pub fn dilate(&self, factor: usize) -> FilterBank {
        FilterBank {
            filters: self.filters.iter().map(|f| f.dilate(factor)).collect(),
            levels: self.levels,
        }
    }

    /// The r*r separable 2D filters `q_a ⊗ q_b`, row-major over (a, b).
    pub fn tensor_filters(&self) -> Vec<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.len() * self.len());
        for fa in &self.filters {
            for fb in &self.filters {
                out.push(
                    fa.taps
                        .iter()
                        .map(|&x| fb.taps.iter().map(|&y| x * y).collect())
                        .collect(),
                );
            }
        }
        out
    }
}

/// Evaluate `max_n |Σ_l Σ_k q_l[n+k] q_l[k] − δ_n|` over every shift where
/// the autocorrelation can be nonzero.
pub fn verify_uep(bank: &FilterBank) -> Result<UepReport> {
    if bank.filters.is_empty() || bank.filters.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidInput("empty filter bank".into()));
    }
    let span = bank.filters.iter().map(|f| f.len() as i64).max().unwrap();
    let mut report = UepReport {
        holds: true,
        max_deviation: 0.0,
        worst_shift: 0,
    };
    for n in -(span - 1)..=(span - 1) {
        let mut s = 0.0;
        for f in &bank.filters {
            for (t, &q) in f.taps.iter().enumerate() {
                s += f.at(f.offset + t as i64 + n) * q;
            }
        }
        let dev = (s - if n == 0 { 1.0 } else { 0.0 }).abs();
        if dev > report.max_deviation {
            report.max_deviation = dev;
            report.worst_shift = n;
        }
    }
    report.holds = report.max_deviation <= UEP_TOL;
    Ok(report)
}

/// Piecewise cubic B-spline framelets from the UEP construction: one low-pass
/// and four high-pass filters of length 5.
pub fn cubic_bspline_bank() -> FilterBank {
    let s6 = 6f64.sqrt();
    let filters = vec![
        [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0],
        [-1.0 / 8.0, -2.0 / 8.0, 0.0, 2.0 / 8.0, 1.0 / 8.0],
        [s6 / 16.0, 0.0, -2.0 * s6 / 16.0, 0.0, s6 / 16.0],
        [-1.0 / 8.0, 2.0 / 8.0, 0.0, -2.0 / 8.0, 1.0 / 8.0],
        [1.0 / 16.0, -4.0 / 16.0, 6.0 / 16.0, -4.0 / 16.0, 1.0 / 16.0],
    ]
    .into_iter()
    .map(|t| Filter::centered(t.to_vec()))
    .collect();
    FilterBank { filters, levels: 1 }
}

/// Haar framelets `{[1/2, 1/2], [1/2, −1/2]}`.
pub fn haar_bank() -> FilterBank {
    FilterBank {
        filters: vec![Filter::new(0, vec![0.5, 0.5]), Filter::new(0, vec![0.5, -0.5])],
        levels: 1,
    }
}

/// Orthonormal DCT-II basis vector `k` of length `r`.
pub fn dct_vector(r: usize, k: usize) -> Vec<f64> {
    let scale = if k == 0 { (1.0 / r as f64).sqrt() } else { (2.0 / r as f64).sqrt() };
    (0..r)
        .map(|n| scale * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * r) as f64).cos())
        .collect()
}

/// Undecimated DCT bank: the `r` DCT-II vectors scaled by `1/sqrt(r)`.
/// Its tensor product gives `r*r` patch filters carrying the overall `1/r`
/// factor that makes the undecimated system tight.
pub fn dct_bank(r: usize) -> Result<FilterBank> {
    if r < 2 {
        return Err(Error::InvalidInput(format!("dct_bank needs r >= 2, got {r}")));
    }
    let s = 1.0 / (r as f64).sqrt();
    let filters = (0..r)
        .map(|k| Filter::new(0, dct_vector(r, k).into_iter().map(|x| x * s).collect()))
        .collect();
    Ok(FilterBank { filters, levels: 1 })
}

fn parse_tap(tok: &str) -> std::result::Result<f64, String> {
    if let Some((p, q)) = tok.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in {tok:?}"))?;
        let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in {tok:?}"))?;
        if q == 0.0 {
            return Err(format!("zero denominator in {tok:?}"));
        }
        Ok(p / q)
    } else {
        tok.parse().map_err(|_| format!("bad tap {tok:?}"))
    }
}

impl fmt::Display for FilterBank {
    /// One `offset: tap tap ...` line per filter, taps in shortest
    /// round-trip decimal form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "levels {}", self.levels)?;
        for filt in &self.filters {
            write!(f, "{}:", filt.offset)?;
            for t in &filt.taps {
                write!(f, " {t:?}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for FilterBank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut levels = 1;
        let mut filters = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::InvalidInput(format!("filter bank line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("levels") {
                levels = rest.trim().parse().map_err(|_| bad(format!("bad levels {rest:?}")))?;
                continue;
            }
            let (off, taps) = line.split_once(':').ok_or_else(|| bad("missing ':'".into()))?;
            let offset = off.trim().parse().map_err(|_| bad(format!("bad offset {off:?}")))?;
            let taps = taps
                .split_whitespace()
                .map(parse_tap)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(bad)?;
            filters.push(Filter::new(offset, taps));
        }
        FilterBank::new(filters, levels)
    }
}
