//! On-disk formats.
//!
//! Tensor file (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "STDL"
//! version  u16      1
//! order    u16      M
//! dims     M × u64
//! payload  Π dims × f64 (IEEE-754 LE), row-major
//! ```
//!
//! Model file: a manifest followed by named tensor records, each a complete
//! tensor file as above.
//!
//! ```text
//! magic    4 bytes  "STDM"
//! version  u16      1
//! count    u32      number of entries
//! manifest count × { name_len u16, name (UTF-8), offset u64, length u64 }
//! records  concatenated tensor files; offsets are from the start of the file
//! ```
//!
//! Label files hold one 1-based class id per line. Prediction files are CSV
//! with header `index,label,confidence` and 1-based sample indices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, FormatError, Result};
use crate::pseudo_label::PseudoLabels;
use crate::solver::{ClassUpdateRule, HistoryRow, Hyperparams, MeanPairing, SdtdlModel};
use crate::tensor::{DenseTensor, FactorMatrix, TensorDictionary};

pub const TENSOR_MAGIC: [u8; 4] = *b"STDL";
pub const MODEL_MAGIC: [u8; 4] = *b"STDM";
pub const FORMAT_VERSION: u16 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }.into()
}

fn invalid(path: &Path, msg: impl Into<String>) -> Error {
    FormatError::Invalid { path: path.to_path_buf(), msg: msg.into() }.into()
}

pub fn encode_tensor(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.order() as u16).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses one tensor record; `path` only labels errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<DenseTensor> {
    let header = |_| -> Error { FormatError::TruncatedHeader { path: path.to_path_buf() }.into() };
    if bytes.len() < 4 {
        return Err(header(()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != TENSOR_MAGIC {
        return Err(FormatError::BadMagic { path: path.to_path_buf(), found: magic }.into());
    }
    if bytes.len() < 8 {
        return Err(header(()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch { path: path.to_path_buf(), found: version }.into());
    }
    let order = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if order == 0 {
        return Err(invalid(path, "tensor order is zero"));
    }
    let dims_end = 8 + 8 * order;
    if bytes.len() < dims_end {
        return Err(header(()));
    }
    let dims: Vec<u64> = bytes[8..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| invalid(path, "dims overflow"))?;
    let found = (bytes.len() - dims_end) as u64;
    if found < count {
        return Err(FormatError::TruncatedPayload { path: path.to_path_buf(), expected: count, found }.into());
    }
    if found > count {
        return Err(invalid(path, format!("{} trailing bytes after payload", found - count)));
    }
    let values = bytes[dims_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(dims.into_iter().map(|d| d as usize).collect(), values)
        .map_err(|e| invalid(path, e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(io_err(path))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_tensor(&bytes, path)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a label file; blank lines are not allowed and ids must be ≥ 1.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let parse_err = |msg: String| -> Error {
                FormatError::Parse { path: path.to_path_buf(), line: i + 1, msg }.into()
            };
            let id: usize = line
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("expected a class id, found {:?}", line)))?;
            if id == 0 {
                return Err(parse_err("class ids are 1-based".into()));
            }
            Ok(id)
        })
        .collect()
}

pub fn write_predictions(path: impl AsRef<Path>, pl: &PseudoLabels) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("index,label,confidence\n");
    for (j, (l, c)) in pl.labels.iter().zip(&pl.combined_conf).enumerate() {
        text.push_str(&format!("{},{},{}\n", j + 1, l, c));
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Reads `(label, confidence)` pairs in sample order.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "index,label,confidence")) => {}
        _ => {
            return Err(FormatError::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "expected header `index,label,confidence`".into(),
            }
            .into())
        }
    }
    lines
        .map(|(i, line)| {
            let err = |msg: &str| -> Error {
                FormatError::Parse { path: path.to_path_buf(), line: i + 1, msg: msg.into() }.into()
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(err("expected three comma-separated fields"));
            }
            let index: usize = fields[0].parse().map_err(|_| err("bad index"))?;
            if index != i {
                return Err(err("indices must be consecutive from 1"));
            }
            let label = fields[1].parse().map_err(|_| err("bad label"))?;
            let conf = fields[2].parse().map_err(|_| err("bad confidence"))?;
            Ok((label, conf))
        })
        .collect()
}

/// `history.csv`: `iter,objective,n_selected,accuracy` (accuracy empty
/// without ground truth).
pub fn write_history(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("iter,objective,n_selected,accuracy\n");
    for r in rows {
        let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{}\n", r.iter, r.objective, r.n_selected, acc));
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn matrix_to_tensor(m: &DMatrix<f64>) -> DenseTensor {
    DenseTensor::from_fn(vec![m.nrows(), m.ncols()], |i| m[(i[0], i[1])])
}

pub fn tensor_to_matrix(t: &DenseTensor) -> Result<DMatrix<f64>> {
    if t.order() != 2 {
        return Err(Error::shape(format!("expected an order-2 tensor, got dims {:?}", t.dims())));
    }
    let (r, c) = (t.dims()[0], t.dims()[1]);
    Ok(DMatrix::from_row_slice(r, c, t.values()))
}

fn vector(values: Vec<f64>) -> DenseTensor {
    let n = values.len();
    DenseTensor::new(vec![n], values).expect("finite values")
}

fn dictionary_entries(prefix: &str, dict: &TensorDictionary, out: &mut Vec<(String, DenseTensor)>) {
    for (m, f) in dict.factors().iter().enumerate() {
        out.push((format!("{prefix}/{m}"), matrix_to_tensor(f.matrix())));
    }
}

fn model_entries(model: &SdtdlModel) -> Vec<(String, DenseTensor)> {
    let h = &model.hyper;
    let mut entries = vec![
        (
            "hyper".to_string(),
            vector(vec![
                h.theta,
                h.lambda,
                h.gamma,
                h.delta,
                h.max_outer_iters as f64,
                h.inner_sweeps as f64,
                h.tol,
                match h.pairing {
                    MeanPairing::Cross => 0.0,
                    MeanPairing::SameDomain => 1.0,
                },
                match h.class_rule {
                    ClassUpdateRule::Phi => 0.0,
                    ClassUpdateRule::ExactQuadratic => 1.0,
                },
                if model.use_target_dictionary { 1.0 } else { 0.0 },
            ]),
        ),
        ("ranks".to_string(), vector(h.ranks.iter().map(|&r| r as f64).collect())),
        ("sample_dims".to_string(), vector(model.sample_dims().iter().map(|&d| d as f64).collect())),
        ("class_count".to_string(), vector(vec![model.class_count() as f64])),
    ];
    dictionary_entries("u_source", &model.u_source, &mut entries);
    dictionary_entries("u_target", &model.u_target, &mut entries);
    for (c, w) in model.w_class.iter().enumerate() {
        dictionary_entries(&format!("w_class/{}", c + 1), w, &mut entries);
    }
    for (c, m) in model.class_means_source.iter().enumerate() {
        entries.push((format!("mean_source/{}", c + 1), m.clone()));
    }
    for (c, m) in model.class_means_target.iter().enumerate() {
        entries.push((format!("mean_target/{}", c + 1), m.clone()));
    }
    entries
}

pub fn encode_model(model: &SdtdlModel) -> Vec<u8> {
    let entries: Vec<(String, Vec<u8>)> = model_entries(model)
        .into_iter()
        .map(|(name, t)| (name, encode_tensor(&t)))
        .collect();
    let manifest_len: usize = entries.iter().map(|(n, _)| 2 + n.len() + 16).sum();
    let mut offset = (10 + manifest_len) as u64;
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, bytes) in &entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        offset += bytes.len() as u64;
    }
    for (_, bytes) in &entries {
        out.extend_from_slice(bytes);
    }
    out
}

pub fn save_model(path: impl AsRef<Path>, model: &SdtdlModel) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&encode_model(model)).map_err(io_err(path))
}

struct Manifest<'a> {
    path: PathBuf,
    bytes: &'a [u8],
    entries: Vec<(String, usize, usize)>,
}

impl Manifest<'_> {
    fn get(&self, name: &str) -> Result<DenseTensor> {
        let (_, start, len) = self
            .entries
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| invalid(&self.path, format!("missing entry {name:?}")))?;
        let end = start.checked_add(*len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::from(FormatError::TruncatedPayload {
                path: self.path.clone(),
                expected: (*start + *len) as u64,
                found: self.bytes.len() as u64,
            })
        })?;
        decode_tensor(&self.bytes[*start..end], &self.path)
    }

    fn scalars(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.into_values())
    }

    fn counts(&self, name: &str) -> Result<Vec<usize>> {
        self.scalars(name)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(invalid(&self.path, format!("entry {name:?} holds non-integer {v}")))
                }
            })
            .collect()
    }

    fn dictionary(&self, prefix: &str, modes: usize) -> Result<TensorDictionary> {
        let factors = (0..modes)
            .map(|m| FactorMatrix::new(tensor_to_matrix(&self.get(&format!("{prefix}/{m}"))?)?))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| invalid(&self.path, format!("{prefix}: {e}")))?;
        Ok(TensorDictionary::new(factors))
    }
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<SdtdlModel> {
    let header = || -> Error { FormatError::TruncatedHeader { path: path.to_path_buf() }.into() };
    if bytes.len() < 10 {
        return Err(header());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(FormatError::BadMagic { path: path.to_path_buf(), found: magic }.into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch { path: path.to_path_buf(), found: version }.into());
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let mut pos = 10;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = bytes.get(pos..pos + 2).ok_or_else(header)?;
        let name_len = u16::from_le_bytes([name_len[0], name_len[1]]) as usize;
        pos += 2;
        let name = bytes.get(pos..pos + name_len).ok_or_else(header)?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| invalid(path, "entry name is not UTF-8"))?;
        pos += name_len;
        let nums = bytes.get(pos..pos + 16).ok_or_else(header)?;
        let offset = u64::from_le_bytes(nums[..8].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(nums[8..].try_into().unwrap()) as usize;
        pos += 16;
        entries.push((name, offset, len));
    }
    let manifest = Manifest { path: path.to_path_buf(), bytes, entries };

    let h = manifest.scalars("hyper")?;
    if h.len() != 10 {
        return Err(invalid(path, format!("hyper entry has {} values, expected 10", h.len())));
    }
    let ranks = manifest.counts("ranks")?;
    let sample_dims = manifest.counts("sample_dims")?;
    let class_count = *manifest
        .counts("class_count")?
        .first()
        .ok_or_else(|| invalid(path, "empty class_count"))?;
    if ranks.len() != sample_dims.len() {
        return Err(invalid(path, "ranks and sample_dims disagree"));
    }
    let hyper = Hyperparams {
        theta: h[0],
        lambda: h[1],
        gamma: h[2],
        delta: h[3],
        max_outer_iters: h[4] as usize,
        inner_sweeps: h[5] as usize,
        tol: h[6],
        pairing: if h[7] == 0.0 { MeanPairing::Cross } else { MeanPairing::SameDomain },
        class_rule: if h[8] == 0.0 { ClassUpdateRule::Phi } else { ClassUpdateRule::ExactQuadratic },
        ranks: ranks.clone(),
    };
    hyper.validate(&sample_dims).map_err(|e| invalid(path, e.to_string()))?;
    let modes = ranks.len();
    let u_source = manifest.dictionary("u_source", modes)?;
    let u_target = manifest.dictionary("u_target", modes)?;
    let w_class = (1..=class_count)
        .map(|c| manifest.dictionary(&format!("w_class/{c}"), modes))
        .collect::<Result<Vec<_>>>()?;
    for dict in [&u_source, &u_target].into_iter().chain(&w_class) {
        if dict.extents() != sample_dims || dict.ranks() != ranks {
            return Err(invalid(path, "dictionary shapes disagree with sample_dims/ranks"));
        }
    }
    let means = |kind: &str| -> Result<Vec<DenseTensor>> {
        (1..=class_count)
            .map(|c| {
                let m = manifest.get(&format!("{kind}/{c}"))?;
                if m.dims() != ranks.as_slice() {
                    return Err(invalid(path, format!("{kind}/{c} has dims {:?}", m.dims())));
                }
                Ok(m)
            })
            .collect()
    };
    Ok(SdtdlModel {
        u_source,
        u_target,
        w_class,
        class_means_source: means("mean_source")?,
        class_means_target: means("mean_target")?,
        hyper,
        use_target_dictionary: h[9] != 0.0,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SdtdlModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_model(&bytes, path)
}
