//! CSV matrices, 0/1 mask files and the JSON model envelope.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, Standardizer};
use crate::dimv::{DimvModel, ImputationConfig};
use crate::dper::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::missing::MissingMask;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvConvention {
    pub na_token: String,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvConvention {
    fn default() -> Self {
        Self {
            na_token: "NA".into(),
            has_header: true,
            delimiter: b',',
        }
    }
}

impl CsvConvention {
    pub fn validate(&self) -> Result<()> {
        if self.na_token.is_empty() {
            return Err(Error::Config("missing-value token must not be empty".into()));
        }
        let d = self.delimiter;
        if d.is_ascii_digit() || d == b'.' || d == b'-' || !d.is_ascii() {
            return Err(Error::Config(format!("invalid delimiter {:?}", d as char)));
        }
        Ok(())
    }

    fn reader<R: std::io::Read>(&self, r: R) -> csv::Reader<R> {
        csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r)
    }

    fn writer<W: std::io::Write>(&self, w: W) -> csv::Writer<W> {
        csv::WriterBuilder::new().delimiter(self.delimiter).from_writer(w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub data: MaskedMatrix,
    pub header: Option<Vec<String>>,
}

fn read_records<R: std::io::Read>(
    reader: R,
    conv: &CsvConvention,
) -> Result<(Vec<csv::StringRecord>, Option<Vec<String>>, usize)> {
    conv.validate()?;
    let mut rdr = conv.reader(reader);
    let mut records = rdr.records();
    let mut header = None;
    let mut first_data_line = 1;
    if conv.has_header {
        match records.next() {
            Some(h) => {
                header = Some(h?.iter().map(str::to_string).collect::<Vec<_>>());
                first_data_line = 2;
            }
            None => return Err(Error::Validation("empty file".into())),
        }
    }
    let rows = records.collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((rows, header, first_data_line))
}

/// Parse a numeric table; `na_token` cells become missing.
///
/// Parse errors carry 1-based row and column numbers, counted over data rows.
pub fn parse_csv<R: std::io::Read>(reader: R, conv: &CsvConvention) -> Result<CsvTable> {
    let (records, header, _) = read_records(reader, conv)?;
    let p = match (&header, records.first()) {
        (Some(h), _) => h.len(),
        (None, Some(r)) => r.len(),
        (None, None) => return Err(Error::Validation("no data rows".into())),
    };
    let n = records.len();
    let mut values = DMatrix::from_element(n, p, f64::NAN);
    let mut mask = DMatrix::from_element(n, p, false);
    for (i, rec) in records.iter().enumerate() {
        if rec.len() != p {
            return Err(Error::Parse {
                row: i + 1,
                column: rec.len().min(p) + 1,
                message: format!("expected {p} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell == conv.na_token {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values[(i, j)] = v;
            mask[(i, j)] = true;
        }
    }
    Ok(CsvTable {
        data: MaskedMatrix::new(values, mask)?,
        header,
    })
}

pub fn read_csv(path: &Path, conv: &CsvConvention) -> Result<CsvTable> {
    parse_csv(std::fs::File::open(path)?, conv)
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_value(v: f64) -> String {
    format!("{v:?}")
}

fn default_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Emit a masked matrix; missing cells are written as `na_token`.
pub fn format_csv<W: std::io::Write>(
    writer: W,
    x: &MaskedMatrix,
    header: Option<&[String]>,
    conv: &CsvConvention,
) -> Result<()> {
    conv.validate()?;
    let mut w = conv.writer(writer);
    if conv.has_header {
        let h = header.map(<[String]>::to_vec).unwrap_or_else(|| default_header(x.ncols()));
        if h.len() != x.ncols() {
            return Err(Error::Dimension(format!("{} header names for {} columns", h.len(), x.ncols())));
        }
        w.write_record(&h)?;
    }
    for i in 0..x.nrows() {
        w.write_record((0..x.ncols()).map(|j| match x.get(i, j) {
            Some(v) => fmt_value(v),
            None => conv.na_token.clone(),
        }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(
    path: &Path,
    x: &DMatrix<f64>,
    header: Option<&[String]>,
    conv: &CsvConvention,
) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix to write has non-finite entries".into()));
    }
    write_masked_csv(path, &MaskedMatrix::complete(x.clone())?, header, conv)
}

pub fn write_masked_csv(
    path: &Path,
    x: &MaskedMatrix,
    header: Option<&[String]>,
    conv: &CsvConvention,
) -> Result<()> {
    format_csv(std::fs::File::create(path)?, x, header, conv)
}

/// Mask file: one row per sample, `1` where the entry is missing.
pub fn write_mask_csv(path: &Path, mask: &MissingMask, conv: &CsvConvention) -> Result<()> {
    conv.validate()?;
    let mut w = conv.writer(std::fs::File::create(path)?);
    if conv.has_header {
        w.write_record(default_header(mask.ncols()))?;
    }
    for i in 0..mask.nrows() {
        w.write_record((0..mask.ncols()).map(|j| if mask.is_missing(i, j) { "1" } else { "0" }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask_csv(path: &Path, conv: &CsvConvention) -> Result<MissingMask> {
    let (records, header, _) = read_records(std::fs::File::open(path)?, conv)?;
    let p = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| records.first().map(|r| r.len()))
        .unwrap_or(0);
    let mut bits = DMatrix::from_element(records.len(), p, false);
    for (i, rec) in records.iter().enumerate() {
        if rec.len() != p {
            return Err(Error::Parse {
                row: i + 1,
                column: rec.len().min(p) + 1,
                message: format!("expected {p} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            bits[(i, j)] = match cell {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: j + 1,
                        message: format!("mask cells must be 0 or 1, found {other:?}"),
                    })
                }
            };
        }
    }
    Ok(MissingMask::new(bits))
}

pub const MODEL_FORMAT: &str = "dimv-model";
pub const MODEL_VERSION: u32 = 1;

/// Persisted model: metadata as JSON, numbers as base64 little-endian `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub means: String,
    pub scales: String,
    /// Standardized-scale covariance, row-major.
    pub covariance: String,
    pub config: ImputationConfig,
}

fn encode(values: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    B64.encode(bytes)
}

fn decode(field: &str, s: &str, len: usize) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Validation(format!("{field}: invalid base64: {e}")))?;
    if bytes.len() != 8 * len {
        return Err(Error::Validation(format!(
            "{field}: expected {len} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl ModelFile {
    pub fn from_model(model: &DimvModel) -> Self {
        let s = model.sigma().as_matrix();
        let p = model.n_features();
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            p,
            means: encode(model.standardizer().means().iter().copied()),
            scales: encode(model.standardizer().scales().iter().copied()),
            covariance: encode((0..p).flat_map(|i| (0..p).map(move |j| s[(i, j)]))),
            config: model.config().clone(),
        }
    }

    pub fn into_model(self) -> Result<DimvModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Version(format!("unknown model format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Version(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        let p = self.p;
        let means = decode("means", &self.means, p)?;
        let scales = decode("scales", &self.scales, p)?;
        let cov = decode("covariance", &self.covariance, p * p)?;
        let sigma = CovarianceMatrix::new(DMatrix::from_row_slice(p, p, &cov))?;
        DimvModel::from_parts(Standardizer::new(means, scales)?, sigma, self.config)
    }
}

pub fn write_model(path: &Path, model: &DimvModel) -> Result<()> {
    let json = serde_json::to_string_pretty(&ModelFile::from_model(model))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<DimvModel> {
    let file: ModelFile = serde_json::from_slice(&std::fs::read(path)?)?;
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_header() -> CsvConvention {
        CsvConvention {
            has_header: false,
            ..CsvConvention::default()
        }
    }

    #[test]
    fn na_cell_is_missing() {
        let t = parse_csv("1.0,NA,3.0\n".as_bytes(), &no_header()).unwrap();
        assert_eq!(t.data.nrows(), 1);
        assert_eq!(t.data.get(0, 0), Some(1.0));
        assert_eq!(t.data.get(0, 1), None);
        assert_eq!(t.data.get(0, 2), Some(3.0));
    }

    #[test]
    fn all_na_row_is_legal() {
        let t = parse_csv("a,b\n1,2\nNA,NA\n".as_bytes(), &CsvConvention::default()).unwrap();
        assert_eq!(t.header.unwrap(), vec!["a", "b"]);
        assert_eq!(t.data.get(1, 0), None);
        assert_eq!(t.data.get(1, 1), None);
    }

    #[test]
    fn parse_error_location() {
        match parse_csv("1.0,abc\n".as_bytes(), &no_header()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (1, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_fail() {
        assert!(matches!(
            parse_csv("1,2\n3\n".as_bytes(), &no_header()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn convention_validation() {
        for d in [b'1', b'.', b'-'] {
            let c = CsvConvention {
                delimiter: d,
                ..CsvConvention::default()
            };
            assert!(c.validate().is_err());
        }
        let c = CsvConvention {
            na_token: String::new(),
            ..CsvConvention::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn custom_token_and_delimiter() {
        let c = CsvConvention {
            na_token: "?".into(),
            has_header: false,
            delimiter: b';',
        };
        let t = parse_csv("1;?\n".as_bytes(), &c).unwrap();
        assert_eq!(t.data.get(0, 1), None);
        let mut out = Vec::new();
        format_csv(&mut out, &t.data, None, &c).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1.0;?\n");
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let rows: Vec<Vec<Option<f64>>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![Some((t * 0.31).sin()), Some((t * 0.77).cos() / 3.0), if i % 3 == 0 { None } else { Some(t.sqrt()) }]
            })
            .collect();
        let model = DimvModel::fit(&MaskedMatrix::from_rows(&rows, 3).unwrap(), &ImputationConfig::default()).unwrap();
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        let a: Vec<u64> = model.sigma().as_matrix().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.sigma().as_matrix().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(model, back);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let s = CovarianceMatrix::new(DMatrix::identity(1, 1)).unwrap();
        let m = DimvModel::from_parts(Standardizer::identity(1), s, ImputationConfig::default()).unwrap();
        let mut f = ModelFile::from_model(&m);
        f.version = 2;
        assert!(matches!(f.into_model(), Err(Error::Version(_))));
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        let s = CovarianceMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let m = DimvModel::from_parts(Standardizer::identity(2), s, ImputationConfig::default()).unwrap();
        let mut f = ModelFile::from_model(&m);
        f.covariance = encode([1.0, 0.5, 0.5 + 1e-16 * 4.0, 1.0]);
        assert!(f.into_model().is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        let mask = MissingMask::new(DMatrix::from_row_slice(2, 3, &[true, false, false, false, true, true]));
        write_mask_csv(&path, &mask, &CsvConvention::default()).unwrap();
        assert_eq!(read_mask_csv(&path, &CsvConvention::default()).unwrap(), mask);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            n in 1usize..6,
            p in 1usize..5,
            seed in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 30),
            holes in proptest::collection::vec(any::<bool>(), 30),
        ) {
            let values = DMatrix::from_fn(n, p, |i, j| seed[i * p + j]);
            let mask = DMatrix::from_fn(n, p, |i, j| !holes[i * p + j]);
            let x = MaskedMatrix::new(values, mask).unwrap();
            let mut buf = Vec::new();
            format_csv(&mut buf, &x, None, &CsvConvention::default()).unwrap();
            let back = parse_csv(buf.as_slice(), &CsvConvention::default()).unwrap().data;
            prop_assert_eq!(back.mask(), x.mask());
            for i in 0..n {
                for j in 0..p {
                    prop_assert_eq!(back.get(i, j).map(f64::to_bits), x.get(i, j).map(f64::to_bits));
                }
            }
        }
    }
}
