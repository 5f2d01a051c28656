//! Measured super-resolution quality/cost model.
//!
//! The receiver-side network is represented only through its externally
//! observable behaviour: output PSNR/SSIM for every (compression rate, depth)
//! pair, and the CPU cycles one chunk costs at a given depth. Depth 0 means
//! plain bicubic upscaling with no work.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// Table that ships with the crate.
pub const DEFAULT_TABLE_CSV: &str = include_str!("../data/quality_table.csv");

const TABLE_HEADER: [&str; 6] = ["r", "d", "psnr_db", "ssim", "cycles", "delta"];

/// Transcoding (downscaling) factor applied at the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(transparent)]
pub struct Rate(pub u32);

/// Number of residual blocks used by the super-resolution network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(transparent)]
pub struct Depth(pub u32);

impl Depth {
    pub const NONE: Depth = Depth(0);

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read quality table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("quality table header must be `{}`, found `{found}`", TABLE_HEADER.join(","))]
    Header { found: String },
    #[error("row {row}: malformed row: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("row {row}: duplicate (r,d) key ({r},{d})")]
    Duplicate { row: usize, r: u32, d: u32 },
    #[error("row {row}: monotonicity violation: {reason}")]
    Monotonicity { row: usize, reason: String },
    #[error("missing (r,d) cell ({r},{d})")]
    MissingCell { r: u32, d: u32 },
    #[error("quality table is empty")]
    Empty,
}

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("compression rate {0} is not in the quality table")]
    UnknownRate(Rate),
    #[error("depth {0} is not in the quality table")]
    UnknownDepth(Depth),
    #[error("depth {0} requires at least one core")]
    NoCores(Depth),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub psnr_db: f64,
    pub ssim: f64,
    /// Cycles needed to enhance one chunk; zero at depth 0.
    pub cycles: f64,
    pub delta: Option<f64>,
}

/// Validated quality/cost lookup over `rates × depths`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityTable {
    rates: Vec<Rate>,
    depths: Vec<Depth>,
    cells: Vec<Cell>,
    // source row of every cell, kept for diagnostics on validation
    rows: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    r: String,
    d: String,
    psnr_db: String,
    ssim: String,
    cycles: String,
    delta: String,
}

fn parse_field<T: std::str::FromStr>(row: usize, name: &str, raw: &str) -> Result<T, TableError> {
    raw.trim().parse().map_err(|_| TableError::Malformed {
        row,
        reason: format!("cannot parse {name} from `{raw}`"),
    })
}

fn parse_optional(row: usize, name: &str, raw: &str) -> Result<Option<f64>, TableError> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(row, name, raw).map(Some)
    }
}

impl QualityTable {
    /// Table with the measured values bundled with the crate.
    pub fn default_table() -> Self {
        Self::from_csv_str(DEFAULT_TABLE_CSV).expect("bundled quality table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }

    /// Parses and validates a table. Row numbers in errors count the header
    /// as row 1.
    pub fn from_csv_str(text: &str) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| TableError::Malformed {
                row: 1,
                reason: e.to_string(),
            })?
            .clone();
        if header.iter().ne(TABLE_HEADER.iter().copied()) {
            return Err(TableError::Header {
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }

        let mut entries: BTreeMap<(u32, u32), (usize, Cell)> = BTreeMap::new();
        for (i, record) in reader.deserialize::<RawRow>().enumerate() {
            let row = i + 2;
            let raw = record.map_err(|e| TableError::Malformed {
                row,
                reason: e.to_string(),
            })?;
            let r: u32 = parse_field(row, "r", &raw.r)?;
            let d: u32 = parse_field(row, "d", &raw.d)?;
            let psnr_db: f64 = parse_field(row, "psnr_db", &raw.psnr_db)?;
            let ssim: f64 = parse_field(row, "ssim", &raw.ssim)?;
            let cycles = parse_optional(row, "cycles", &raw.cycles)?;
            let delta = parse_optional(row, "delta", &raw.delta)?;

            if r == 0 {
                return Err(TableError::Malformed {
                    row,
                    reason: "compression rate must be a positive integer".into(),
                });
            }
            if !psnr_db.is_finite() {
                return Err(TableError::Malformed {
                    row,
                    reason: "psnr_db must be finite".into(),
                });
            }
            if !(0.0..=1.0).contains(&ssim) {
                return Err(TableError::Malformed {
                    row,
                    reason: format!("ssim {ssim} outside [0,1]"),
                });
            }
            let cycles = match (d, cycles) {
                (0, None | Some(0.0)) => 0.0,
                (0, Some(c)) => {
                    return Err(TableError::Malformed {
                        row,
                        reason: format!("depth 0 must cost 0 cycles, found {c}"),
                    })
                }
                (_, None) => {
                    return Err(TableError::Malformed {
                        row,
                        reason: format!("depth {d} needs a cycle count"),
                    })
                }
                (_, Some(c)) if !(c.is_finite() && c > 0.0) => {
                    return Err(TableError::Malformed {
                        row,
                        reason: format!("cycle count {c} must be positive"),
                    })
                }
                (_, Some(c)) => c,
            };
            let cell = Cell {
                psnr_db,
                ssim,
                cycles,
                delta,
            };
            if entries.insert((r, d), (row, cell)).is_some() {
                return Err(TableError::Duplicate { row, r, d });
            }
        }
        if entries.is_empty() {
            return Err(TableError::Empty);
        }

        let mut rates: Vec<Rate> = entries.keys().map(|&(r, _)| Rate(r)).collect();
        rates.dedup();
        let mut depths: Vec<Depth> = entries.keys().map(|&(_, d)| Depth(d)).collect();
        depths.sort_unstable();
        depths.dedup();

        let mut cells = Vec::with_capacity(rates.len() * depths.len());
        let mut rows = Vec::with_capacity(rates.len() * depths.len());
        for r in &rates {
            for d in &depths {
                let (row, cell) = entries
                    .get(&(r.0, d.0))
                    .ok_or(TableError::MissingCell { r: r.0, d: d.0 })?;
                cells.push(*cell);
                rows.push(*row);
            }
        }
        let table = QualityTable {
            rates,
            depths,
            cells,
            rows,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), TableError> {
        let nd = self.depths.len();
        for ri in 0..self.rates.len() {
            for di in 1..nd {
                let (prev, cur) = (self.cell_at(ri, di - 1), self.cell_at(ri, di));
                if cur.psnr_db <= prev.psnr_db {
                    return Err(TableError::Monotonicity {
                        row: self.rows[ri * nd + di],
                        reason: format!(
                            "psnr must increase with depth at r={}: d={} has {} <= {} at d={}",
                            self.rates[ri],
                            self.depths[di],
                            cur.psnr_db,
                            prev.psnr_db,
                            self.depths[di - 1]
                        ),
                    });
                }
                if self.depths[di - 1].0 > 0 && cur.cycles <= prev.cycles {
                    return Err(TableError::Monotonicity {
                        row: self.rows[ri * nd + di],
                        reason: format!(
                            "cycles must increase with depth at r={}: d={} has {} <= {}",
                            self.rates[ri], self.depths[di], cur.cycles, prev.cycles
                        ),
                    });
                }
            }
        }
        for ri in 1..self.rates.len() {
            for di in 0..nd {
                if self.cell_at(ri, di).psnr_db >= self.cell_at(ri - 1, di).psnr_db {
                    return Err(TableError::Monotonicity {
                        row: self.rows[ri * nd + di],
                        reason: format!(
                            "psnr must decrease with rate at d={}: r={} is not below r={}",
                            self.depths[di],
                            self.rates[ri],
                            self.rates[ri - 1]
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy of the table keeping only the given rates.
    pub fn restricted_to_rates(&self, keep: &[Rate]) -> Result<Self, QualityError> {
        let nd = self.depths.len();
        let mut rates = Vec::new();
        let mut cells = Vec::new();
        let mut rows = Vec::new();
        for &r in keep {
            let ri = self.rate_index(r).ok_or(QualityError::UnknownRate(r))?;
            rates.push(r);
            cells.extend_from_slice(&self.cells[ri * nd..(ri + 1) * nd]);
            rows.extend_from_slice(&self.rows[ri * nd..(ri + 1) * nd]);
        }
        Ok(QualityTable {
            rates,
            depths: self.depths.clone(),
            cells,
            rows,
        })
    }

    pub fn rates(&self) -> &[Rate] {
        &self.rates
    }

    pub fn depths(&self) -> &[Depth] {
        &self.depths
    }

    pub fn rate_index(&self, r: Rate) -> Option<usize> {
        self.rates.binary_search(&r).ok()
    }

    pub fn depth_index(&self, d: Depth) -> Option<usize> {
        self.depths.binary_search(&d).ok()
    }

    pub fn cell_at(&self, ri: usize, di: usize) -> &Cell {
        &self.cells[ri * self.depths.len() + di]
    }

    pub fn cell(&self, r: Rate, d: Depth) -> Result<&Cell, QualityError> {
        let ri = self.rate_index(r).ok_or(QualityError::UnknownRate(r))?;
        let di = self.depth_index(d).ok_or(QualityError::UnknownDepth(d))?;
        Ok(self.cell_at(ri, di))
    }

    pub fn psnr(&self, r: Rate, d: Depth) -> Result<f64, QualityError> {
        self.cell(r, d).map(|c| c.psnr_db)
    }

    pub fn ssim(&self, r: Rate, d: Depth) -> Result<f64, QualityError> {
        self.cell(r, d).map(|c| c.ssim)
    }

    pub fn cycles(&self, r: Rate, d: Depth) -> Result<f64, QualityError> {
        self.cell(r, d).map(|c| c.cycles)
    }

    pub fn max_depth(&self) -> Depth {
        *self.depths.last().expect("table is non-empty")
    }

    /// Largest PSNR entry of the table.
    pub fn max_psnr(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.psnr_db)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Chunk size as a function of compression rate: `base / r^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkSizeModel {
    pub base_size_bits: f64,
    pub exponent: f64,
}

impl Default for ChunkSizeModel {
    fn default() -> Self {
        ChunkSizeModel {
            base_size_bits: 3.0e6,
            exponent: 2.0,
        }
    }
}

impl ChunkSizeModel {
    pub fn bits(&self, r: Rate) -> f64 {
        self.base_size_bits / f64::from(r.0).powf(self.exponent)
    }
}

/// Receiver CPU: effective per-core clock and a calibration multiplier on
/// per-chunk work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeModel {
    pub core_rate_hz: f64,
    pub calibration: f64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel {
            core_rate_hz: 1.171e9,
            calibration: 1.0,
        }
    }
}

impl ComputeModel {
    pub fn single_core_seconds(&self, cycles: f64) -> f64 {
        self.calibration * cycles / self.core_rate_hz
    }
}

/// Table plus the size and compute models; everything the controller needs
/// to know about the content.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel {
    pub table: QualityTable,
    pub sizes: ChunkSizeModel,
    pub compute: ComputeModel,
}

impl QualityModel {
    pub fn new(table: QualityTable, sizes: ChunkSizeModel, compute: ComputeModel) -> Self {
        QualityModel {
            table,
            sizes,
            compute,
        }
    }

    pub fn chunk_size(&self, r: Rate) -> Result<f64, QualityError> {
        self.table
            .rate_index(r)
            .map(|_| self.sizes.bits(r))
            .ok_or(QualityError::UnknownRate(r))
    }

    /// Single-core processing time of one chunk, `T₁(r, d)`.
    pub fn single_core_time(&self, r: Rate, d: Depth) -> Result<f64, QualityError> {
        let cycles = self.table.cycles(r, d)?;
        Ok(self.compute.single_core_seconds(cycles))
    }

    pub fn single_core_time_at(&self, ri: usize, di: usize) -> f64 {
        self.compute
            .single_core_seconds(self.table.cell_at(ri, di).cycles)
    }

    /// Seconds to enhance one chunk with `cores` cores.
    pub fn processing_time(&self, r: Rate, d: Depth, cores: u32) -> Result<f64, QualityError> {
        let t1 = self.single_core_time(r, d)?;
        if d.is_none() {
            return Ok(0.0);
        }
        if cores == 0 {
            return Err(QualityError::NoCores(d));
        }
        Ok(t1 / f64::from(cores))
    }

    /// Quality ceiling used in the degradation penalty.
    pub fn max_quality(&self, override_db: Option<f64>) -> f64 {
        override_db.unwrap_or_else(|| self.table.max_psnr())
    }
}

impl Default for QualityModel {
    fn default() -> Self {
        QualityModel::new(
            QualityTable::default_table(),
            ChunkSizeModel::default(),
            ComputeModel::default(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn edit_default(from: &str, to: &str) -> String {
        assert!(DEFAULT_TABLE_CSV.contains(from));
        DEFAULT_TABLE_CSV.replacen(from, to, 1)
    }

    #[test]
    fn default_table_lookups() {
        let t = QualityTable::default_table();
        assert_eq!(t.psnr(Rate(2), Depth(25)).unwrap(), 32.26);
        assert_eq!(t.psnr(Rate(5), Depth(0)).unwrap(), 24.81);
        assert_eq!(t.ssim(Rate(5), Depth(25)).unwrap(), 0.702);
        assert_eq!(t.cycles(Rate(3), Depth(25)).unwrap(), 2.669e9);
        assert_eq!(t.cycles(Rate(3), Depth(0)).unwrap(), 0.0);
        assert_eq!(t.rates(), &[Rate(2), Rate(3), Rate(4), Rate(5)]);
        assert_eq!(t.max_depth(), Depth(25));
    }

    #[test]
    fn rejects_psnr_dip_in_depth() {
        let text = edit_default("2,10,31.01", "2,10,30.61");
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(matches!(err, TableError::Monotonicity { row: 4, .. }), "{err}");
        assert!(err.to_string().contains("monotonicity violation"));
    }

    #[test]
    fn rejects_psnr_rise_in_rate() {
        let text = edit_default("3,0,27.45", "3,0,30.65");
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(matches!(err, TableError::Monotonicity { .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_key_with_row() {
        let text = format!("{DEFAULT_TABLE_CSV}2,5,30.66,0.866,1007000000,0.0165\n");
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(
            matches!(err, TableError::Duplicate { row: 26, r: 2, d: 5 }),
            "{err}"
        );
    }

    #[test]
    fn rejects_malformed_and_missing() {
        let text = edit_default("4,15,27.49", "4,15,abc");
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(matches!(err, TableError::Malformed { row: 17, .. }), "{err}");

        let text: String = DEFAULT_TABLE_CSV
            .lines()
            .filter(|l| !l.starts_with("4,15,"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(matches!(err, TableError::MissingCell { r: 4, d: 15 }), "{err}");

        let err = QualityTable::from_csv_str("r,d,psnr\n2,0,30\n").unwrap_err();
        assert!(matches!(err, TableError::Header { .. }));

        let err = QualityTable::load("/nonexistent/table.csv").unwrap_err();
        assert!(matches!(err, TableError::Io { .. }));
    }

    #[test]
    fn rejects_non_increasing_cycles() {
        let text = edit_default("1441000000", "1000000000");
        let err = QualityTable::from_csv_str(&text).unwrap_err();
        assert!(matches!(err, TableError::Monotonicity { .. }), "{err}");
    }

    #[test]
    fn chunk_sizes() {
        let m = QualityModel::default();
        assert_relative_eq!(m.chunk_size(Rate(2)).unwrap(), 7.5e5);
        assert_relative_eq!(m.chunk_size(Rate(5)).unwrap(), 1.2e5);
        assert_eq!(
            m.chunk_size(Rate(7)),
            Err(QualityError::UnknownRate(Rate(7)))
        );
    }

    #[test]
    fn processing_times() {
        let m = QualityModel::default();
        assert_eq!(m.processing_time(Rate(2), Depth(0), 0).unwrap(), 0.0);
        let one = m.processing_time(Rate(2), Depth(25), 1).unwrap();
        assert_relative_eq!(one, 2.669e9 / 1.171e9);
        assert!((one - 2.2792).abs() < 1e-4);
        let two = m.processing_time(Rate(2), Depth(25), 2).unwrap();
        assert_relative_eq!(two, one / 2.0);
        assert_eq!(
            m.processing_time(Rate(2), Depth(5), 0),
            Err(QualityError::NoCores(Depth(5)))
        );
    }

    #[test]
    fn max_quality_variants() {
        let m = QualityModel::default();
        assert_eq!(m.max_quality(None), 32.26);
        assert_eq!(m.max_quality(Some(35.0)), 35.0);
        let only5 = m.table.restricted_to_rates(&[Rate(5)]).unwrap();
        assert_eq!(only5.max_psnr(), 26.54);
    }

    #[test]
    fn degradation_is_zero_at_exactly_one_cell() {
        let t = QualityTable::default_table();
        let top = t.max_psnr();
        let mut zeros = 0;
        for &r in t.rates() {
            for &d in t.depths() {
                let gap = top - t.psnr(r, d).unwrap();
                assert!(gap >= 0.0);
                zeros += usize::from(gap == 0.0);
            }
        }
        assert_eq!(zeros, 1);
    }

    proptest::proptest! {
        #[test]
        fn cores_times_time_is_constant(di in 1usize..6, ri in 0usize..4, u in 1u32..=16) {
            let m = QualityModel::default();
            let (r, d) = (m.table.rates()[ri], m.table.depths()[di]);
            let base = m.processing_time(r, d, 1).unwrap();
            let scaled = m.processing_time(r, d, u).unwrap() * f64::from(u);
            proptest::prop_assert!((scaled - base).abs() <= 1e-12 * base);
        }

        #[test]
        fn size_times_rate_power_is_base(base in 1.0e3f64..1.0e8, exp in 0.5f64..3.0, r in 1u32..20) {
            let sizes = ChunkSizeModel { base_size_bits: base, exponent: exp };
            let back = sizes.bits(Rate(r)) * f64::from(r).powf(exp);
            proptest::prop_assert!((back - base).abs() <= 1e-12 * base);
        }
    }
}
