//! CSI containers, polar conversion, feature-tensor assembly, and the binary
//! dataset format.
//!
//! A [`CsiSymbol`] is one OFDM-symbol channel snapshot: an `n_rx x n_sc`
//! complex matrix of linear channel gains. A [`FingerprintRecord`] is a burst
//! of symbols captured at one ground-truth location, together with the label
//! the record trains against (equal to the true location except for
//! perturbation-augmented records).
//!
//! Symbols hold `f64` entries in memory; the on-disk format stores `f32`
//! pairs, so values already representable in `f32` (everything loaded from a
//! file) round-trip bit-identically.

use crate::byteio::CountingReader;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scalar::Scalar;
use num_complex::Complex64;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// One OFDM-symbol CSI snapshot, row-major `[n_rx x n_sc]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSymbol {
    pub n_rx: usize,
    pub n_sc: usize,
    pub entries: Vec<Complex64>,
    pub timestamp: f64,
    pub packet_index: u32,
}

impl CsiSymbol {
    pub fn new(n_rx: usize, n_sc: usize, entries: Vec<Complex64>, timestamp: f64, packet_index: u32) -> Result<Self> {
        if entries.len() != n_rx * n_sc {
            return Err(Error::shape(format!(
                "csi symbol: {} entries for {n_rx}x{n_sc}",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
            return Err(Error::domain("csi symbol: non-finite entry".to_string()));
        }
        Ok(CsiSymbol { n_rx, n_sc, entries, timestamp, packet_index })
    }

    pub fn entry(&self, rx: usize, sc: usize) -> Complex64 {
        self.entries[rx * self.n_sc + sc]
    }
}

/// A labeled burst of CSI symbols at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRecord {
    /// Ground-truth location the burst was captured at.
    pub location: Point2,
    /// Training label; differs from `location` only for augmented records.
    pub label_location: Point2,
    pub symbols: Vec<CsiSymbol>,
}

impl FingerprintRecord {
    pub fn validate(&self) -> Result<()> {
        let first = self.symbols.first().ok_or_else(|| Error::domain("record has no symbols"))?;
        let (n_rx, n_sc) = (first.n_rx, first.n_sc);
        if self.symbols.iter().any(|s| s.n_rx != n_rx || s.n_sc != n_sc) {
            return Err(Error::shape("record symbols have mixed dimensions".to_string()));
        }
        Ok(())
    }

    /// Augmented records carry a label different from the capture location.
    pub fn is_augmented(&self) -> bool {
        self.location != self.label_location
    }
}

/// A full dataset: shared dimensions plus records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_rx: usize,
    pub n_sc: usize,
    pub records: Vec<FingerprintRecord>,
}

impl Dataset {
    pub fn new(n_rx: usize, n_sc: usize, records: Vec<FingerprintRecord>) -> Result<Self> {
        for rec in &records {
            rec.validate()?;
            if rec.symbols[0].n_rx != n_rx || rec.symbols[0].n_sc != n_sc {
                return Err(Error::shape(format!(
                    "record dimensions {}x{} do not match dataset header {n_rx}x{n_sc}",
                    rec.symbols[0].n_rx, rec.symbols[0].n_sc
                )));
            }
        }
        Ok(Dataset { n_rx, n_sc, records })
    }
}

/// Amplitude/phase view of one symbol, `[n_rx x n_sc]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCsi<S: Scalar> {
    pub n_rx: usize,
    pub n_sc: usize,
    pub amplitude: Vec<S>,
    pub phase: Vec<S>,
}

impl<S: Scalar> PolarCsi<S> {
    pub fn amplitude_at(&self, rx: usize, sc: usize) -> S {
        self.amplitude[rx * self.n_sc + sc]
    }

    pub fn phase_at(&self, rx: usize, sc: usize) -> S {
        self.phase[rx * self.n_sc + sc]
    }
}

/// Converts a symbol to polar form: amplitude = modulus, phase = principal
/// argument in `[-pi, pi)`. A zero entry maps to amplitude 0, phase 0.
pub fn to_polar<S: Scalar>(symbol: &CsiSymbol) -> PolarCsi<S> {
    let mut amplitude = Vec::with_capacity(symbol.entries.len());
    let mut phase = Vec::with_capacity(symbol.entries.len());
    for e in &symbol.entries {
        let (re, im) = (e.re, e.im);
        let a = (re * re + im * im).sqrt();
        let p = if a == 0.0 {
            0.0
        } else {
            let raw = im.atan2(re);
            // atan2 returns +pi for the negative real axis; fold to -pi so the
            // principal range is [-pi, pi).
            if raw >= std::f64::consts::PI { -std::f64::consts::PI } else { raw }
        };
        amplitude.push(S::from_f64_lossy(a));
        phase.push(S::from_f64_lossy(p));
    }
    PolarCsi { n_rx: symbol.n_rx, n_sc: symbol.n_sc, amplitude, phase }
}

/// Feature-tensor layouts accepted by the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureLayout {
    /// `n_rx * n_sc` amplitudes, antenna-major.
    Flat90,
    /// Amplitudes then calibrated phases, 180 values.
    Flat180,
    /// `channels(n_rx) x subcarriers x packets` amplitude block.
    Block3x30x30,
}

/// Model-ready real tensor derived from calibrated CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<S: Scalar> {
    pub layout: FeatureLayout,
    pub values: Vec<S>,
}

impl<S: Scalar> FeatureTensor<S> {
    pub fn validate(&self) -> Result<()> {
        let expect = match self.layout {
            FeatureLayout::Flat90 => 90,
            FeatureLayout::Flat180 => 180,
            FeatureLayout::Block3x30x30 => 3 * 30 * 30,
        };
        if self.values.len() != expect {
            return Err(Error::shape(format!(
                "feature tensor: {} values for {:?}",
                self.values.len(),
                self.layout
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("feature tensor: non-finite value"));
        }
        Ok(())
    }
}

/// Flattens one polar symbol to a feature vector, antenna-major: flat index
/// `rx * n_sc + sc`. With `use_phase`, the phase matrix is appended after the
/// 90 amplitudes, giving the 180-value layout.
pub fn assemble_flat<S: Scalar>(polar: &PolarCsi<S>, use_phase: bool) -> Result<FeatureTensor<S>> {
    if polar.n_rx != 3 || polar.n_sc != 30 {
        return Err(Error::shape(format!(
            "flat features expect 3x30 input, got {}x{}",
            polar.n_rx, polar.n_sc
        )));
    }
    let mut values = polar.amplitude.clone();
    let layout = if use_phase {
        values.extend_from_slice(&polar.phase);
        FeatureLayout::Flat180
    } else {
        FeatureLayout::Flat90
    };
    Ok(FeatureTensor { layout, values })
}

/// Number of packets stacked along the third axis of a block tensor.
pub const BLOCK_PACKETS: usize = 30;

/// Stacks 30 consecutive polar symbols into an amplitude block tensor with
/// index order `[channel(rx)][subcarrier][packet]`.
pub fn assemble_block<S: Scalar>(polars: &[PolarCsi<S>]) -> Result<FeatureTensor<S>> {
    if polars.len() != BLOCK_PACKETS {
        return Err(Error::shape(format!(
            "block features expect exactly {BLOCK_PACKETS} packets, got {}",
            polars.len()
        )));
    }
    for p in polars {
        if p.n_rx != 3 || p.n_sc != 30 {
            return Err(Error::shape(format!(
                "block features expect 3x30 packets, got {}x{}",
                p.n_rx, p.n_sc
            )));
        }
    }
    let (n_rx, n_sc) = (3, 30);
    let mut values = vec![S::zero(); n_rx * n_sc * BLOCK_PACKETS];
    for (pkt, polar) in polars.iter().enumerate() {
        for rx in 0..n_rx {
            for sc in 0..n_sc {
                values[(rx * n_sc + sc) * BLOCK_PACKETS + pkt] = polar.amplitude_at(rx, sc);
            }
        }
    }
    Ok(FeatureTensor { layout: FeatureLayout::Block3x30x30, values })
}

// ---------------------------------------------------------------------------
// Binary dataset format (CSF1)
//
// magic "CSF1" | u16 version=1 | u8 n_rx | u8 n_sc | u32 record count |
// 2 reserved zero bytes | records. Per record: f64 loc_x, loc_y, label_x,
// label_y | u32 symbol count | symbols. Per symbol: f64 timestamp |
// u32 packet_index | n_rx*n_sc (f32 re, f32 im) pairs row-major.
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 4] = b"CSF1";
const DATASET_VERSION: u16 = 1;

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&[dataset.n_rx as u8, dataset.n_sc as u8])?;
    w.write_all(&(dataset.records.len() as u32).to_le_bytes())?;
    w.write_all(&[0u8, 0u8])?;
    for rec in &dataset.records {
        for v in [rec.location.x, rec.location.y, rec.label_location.x, rec.label_location.y] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(rec.symbols.len() as u32).to_le_bytes())?;
        for sym in &rec.symbols {
            w.write_all(&sym.timestamp.to_le_bytes())?;
            w.write_all(&sym.packet_index.to_le_bytes())?;
            for e in &sym.entries {
                w.write_all(&(e.re as f32).to_le_bytes())?;
                w.write_all(&(e.im as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut r = CountingReader::new(BufReader::new(file));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(Error::parse(0, format!("bad magic {magic:?}, expected \"CSF1\"")));
    }
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let mut dims = [0u8; 2];
    r.read_exact(&mut dims, "dimensions")?;
    let (n_rx, n_sc) = (dims[0] as usize, dims[1] as usize);
    if n_rx == 0 || n_sc == 0 {
        return Err(Error::parse(6, format!("invalid dimensions {n_rx}x{n_sc}")));
    }
    let n_records = r.u32("record count")?;
    let mut pad = [0u8; 2];
    r.read_exact(&mut pad, "reserved bytes")?;

    let mut records = Vec::with_capacity(n_records as usize);
    for rec_i in 0..n_records {
        let what = |f: &str| format!("record {rec_i} {f}");
        let loc_x = r.f64(&what("loc_x"))?;
        let loc_y = r.f64(&what("loc_y"))?;
        let label_x = r.f64(&what("label_x"))?;
        let label_y = r.f64(&what("label_y"))?;
        let n_symbols = r.u32(&what("symbol count"))?;
        let mut symbols = Vec::with_capacity(n_symbols as usize);
        for sym_i in 0..n_symbols {
            let what = |f: &str| format!("record {rec_i} symbol {sym_i} {f}");
            let timestamp = r.f64(&what("timestamp"))?;
            let packet_index = r.u32(&what("packet_index"))?;
            let mut entries = Vec::with_capacity(n_rx * n_sc);
            for k in 0..n_rx * n_sc {
                let re = r.f32(&what(&format!("entry {k} re")))?;
                let im = r.f32(&what(&format!("entry {k} im")))?;
                entries.push(Complex64::new(re as f64, im as f64));
            }
            symbols.push(CsiSymbol { n_rx, n_sc, entries, timestamp, packet_index });
        }
        records.push(FingerprintRecord {
            location: Point2::new(loc_x, loc_y),
            label_location: Point2::new(label_x, label_y),
            symbols,
        });
    }
    Dataset::new(n_rx, n_sc, records)
}

/// JSON-lines export for debugging interchange: one record per line with
/// location, label, and nested `[re, im]` entry arrays.
pub fn write_dataset_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for rec in &dataset.records {
        let symbols: Vec<serde_json::Value> = rec
            .symbols
            .iter()
            .map(|s| {
                let rows: Vec<serde_json::Value> = (0..s.n_rx)
                    .map(|rx| {
                        let row: Vec<serde_json::Value> = (0..s.n_sc)
                            .map(|sc| {
                                let e = s.entry(rx, sc);
                                serde_json::json!([e.re, e.im])
                            })
                            .collect();
                        serde_json::Value::Array(row)
                    })
                    .collect();
                serde_json::json!({
                    "timestamp": s.timestamp,
                    "packet_index": s.packet_index,
                    "entries": rows,
                })
            })
            .collect();
        let line = serde_json::json!({
            "location": [rec.location.x, rec.location.y],
            "label": [rec.label_location.x, rec.label_location.y],
            "symbols": symbols,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
