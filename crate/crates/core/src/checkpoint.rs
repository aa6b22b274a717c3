//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "ABSACKPT" | version u32 | metadata length u64 | metadata JSON
//! tensor count u32 | per tensor: name length u32, name, ndim u32,
//!                    dims u64 * ndim, f32 values (row-major)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::training::suite::SingleSentenceSuite;
use crate::training::{Head, HeadKind, Model};

pub const MAGIC: &[u8; 8] = b"ABSACKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Encoder,
    Model,
    Suite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteInfo {
    pub categories: Vec<String>,
    /// Categories with a sentiment model, in tensor order.
    pub sentiment: Vec<String>,
    pub skipped: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ArtifactKind,
    pub encoder: EncoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Metadata,
    pub tensors: Vec<(String, ArrayD<f32>)>,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Checkpoint(what.into())
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    metadata: &Metadata,
    tensors: &[(String, ArrayViewD<'_, f64>)],
) -> Result<()> {
    let meta = serde_json::to_vec(metadata).map_err(|e| corrupt(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for &v in t.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| corrupt(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_bytes<R: Read>(r: &mut R, n: u64) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n)
        .read_to_end(&mut buf)
        .map_err(|e| corrupt(format!("truncated checkpoint: {e}")))?;
    if buf.len() as u64 != n {
        return Err(corrupt("truncated checkpoint"));
    }
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    if &read_array::<8, _>(&mut r)? != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}, expected {VERSION}")));
    }
    let meta_len = read_u64(&mut r)?;
    let metadata: Metadata = serde_json::from_slice(&read_bytes(&mut r, meta_len)?)
        .map_err(|e| corrupt(format!("bad metadata: {e}")))?;
    let count = read_u32(&mut r)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r)?;
        let name = String::from_utf8(read_bytes(&mut r, u64::from(name_len))?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let ndim = read_u32(&mut r)?;
        let dims = (0..ndim)
            .map(|_| Ok(read_u64(&mut r)? as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let raw = read_bytes(&mut r, len as u64 * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let array = ArrayD::from_shape_vec(IxDyn(&dims), values).map_err(|e| corrupt(e.to_string()))?;
        tensors.push((name, array));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last tensor"));
    }
    Ok(Checkpoint { metadata, tensors })
}

/// Copies stored tensors into `targets`, requiring an exact name and shape
/// match in both directions.
fn fill(stored: &[(String, ArrayD<f32>)], targets: Vec<(String, ArrayViewMutD<'_, f64>)>) -> Result<()> {
    let mut by_name: BTreeMap<&str, &ArrayD<f32>> = stored.iter().map(|(n, t)| (n.as_str(), t)).collect();
    for (name, mut target) in targets {
        let source = by_name
            .remove(name.as_str())
            .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if source.shape() != target.shape() {
            return Err(corrupt(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                source.shape(),
                target.shape()
            )));
        }
        target.zip_mut_with(source, |t, &s| *t = f64::from(s));
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(corrupt(format!("unexpected tensor {extra}")));
    }
    Ok(())
}

fn prefixed<T>(prefix: &str, tensors: Vec<(String, T)>) -> Vec<(String, T)> {
    tensors.into_iter().map(|(n, t)| (format!("{prefix}{n}"), t)).collect()
}

fn save(path: &Path, metadata: &Metadata, tensors: &[(String, ArrayViewD<'_, f64>)]) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, metadata, tensors)?;
    fs::write(path, buf)?;
    Ok(())
}

fn load(path: &Path, expected: ArtifactKind) -> Result<Checkpoint> {
    let ckpt = read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))?;
    if ckpt.metadata.kind != expected {
        return Err(corrupt(format!(
            "{} holds a {:?} checkpoint, expected {:?}",
            path.display(),
            ckpt.metadata.kind,
            expected
        )));
    }
    ckpt.metadata.encoder.validate()?;
    Ok(ckpt)
}

pub fn save_encoder(path: impl AsRef<Path>, config: &EncoderConfig, params: &EncoderParams) -> Result<()> {
    let metadata = Metadata {
        kind: ArtifactKind::Encoder,
        encoder: config.clone(),
        head: None,
        suite: None,
    };
    save(path.as_ref(), &metadata, &params.tensors())
}

pub fn load_encoder(path: impl AsRef<Path>) -> Result<(EncoderConfig, EncoderParams)> {
    let ckpt = load(path.as_ref(), ArtifactKind::Encoder)?;
    let config = ckpt.metadata.encoder;
    let mut params = EncoderParams::zeros(&config);
    fill(&ckpt.tensors, params.tensors_mut())?;
    Ok((config, params))
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let metadata = Metadata {
        kind: ArtifactKind::Model,
        encoder: model.config.clone(),
        head: Some(model.head.kind),
        suite: None,
    };
    save(path.as_ref(), &metadata, &model.tensors())
}

fn empty_model(config: &EncoderConfig, kind: HeadKind) -> Model {
    Model {
        config: config.clone(),
        encoder: EncoderParams::zeros(config),
        head: Head::zeros(kind, config.hidden),
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let ckpt = load(path.as_ref(), ArtifactKind::Model)?;
    let kind = ckpt
        .metadata
        .head
        .ok_or_else(|| corrupt("model checkpoint without head metadata"))?;
    let mut model = empty_model(&ckpt.metadata.encoder, kind);
    fill(&ckpt.tensors, model.tensors_mut())?;
    Ok(model)
}

/// Stores the aspect model under `aspect.` and each sentiment model under
/// `sentiment.<category>.`.
pub fn save_suite(path: impl AsRef<Path>, suite: &SingleSentenceSuite) -> Result<()> {
    let metadata = Metadata {
        kind: ArtifactKind::Suite,
        encoder: suite.aspect.config.clone(),
        head: None,
        suite: Some(SuiteInfo {
            categories: suite.categories.clone(),
            sentiment: suite.sentiment.keys().cloned().collect(),
            skipped: suite.skipped.clone(),
            threshold: suite.threshold,
        }),
    };
    let mut tensors = prefixed("aspect.", suite.aspect.tensors());
    for (category, model) in &suite.sentiment {
        tensors.extend(prefixed(&format!("sentiment.{category}."), model.tensors()));
    }
    save(path.as_ref(), &metadata, &tensors)
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<SingleSentenceSuite> {
    let ckpt = load(path.as_ref(), ArtifactKind::Suite)?;
    let info = ckpt
        .metadata
        .suite
        .clone()
        .ok_or_else(|| corrupt("suite checkpoint without suite metadata"))?;
    let config = &ckpt.metadata.encoder;
    let mut aspect = empty_model(
        config,
        HeadKind::MultilabelAspect {
            categories: info.categories.len(),
        },
    );
    let mut sentiment: BTreeMap<String, Model> = info
        .sentiment
        .iter()
        .map(|c| (c.clone(), empty_model(config, HeadKind::PerCategorySentiment)))
        .collect();
    {
        let mut targets = prefixed("aspect.", aspect.tensors_mut());
        for (category, model) in sentiment.iter_mut() {
            targets.extend(prefixed(&format!("sentiment.{category}."), model.tensors_mut()));
        }
        fill(&ckpt.tensors, targets)?;
    }
    Ok(SingleSentenceSuite {
        categories: info.categories,
        aspect,
        sentiment,
        skipped: info.skipped,
        threshold: info.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny() -> (EncoderConfig, EncoderParams) {
        let config = EncoderConfig::new(1, 8, 2, 12, 10);
        let params = EncoderParams::init(&config, &mut rng::stream(3, rng::INIT)).unwrap();
        (config, params)
    }

    #[test]
    fn encoder_round_trip_is_f32_exact() {
        let dir = tempdir();
        let (config, params) = tiny();
        let path = dir.join("enc.ckpt");
        save_encoder(&path, &config, &params).unwrap();
        let (c2, p2) = load_encoder(&path).unwrap();
        assert_eq!(c2, config);
        for ((_, a), (_, b)) in params.tensors().iter().zip(p2.tensors()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert_eq!(f64::from(x as f32), y);
            }
        }
        // a second save of the loaded params is byte-identical
        let again = dir.join("enc2.ckpt");
        save_encoder(&again, &c2, &p2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn rejects_version_and_shape_mismatch() {
        let (config, params) = tiny();
        let mut buf = Vec::new();
        let meta = Metadata {
            kind: ArtifactKind::Encoder,
            encoder: config.clone(),
            head: None,
            suite: None,
        };
        write_checkpoint(&mut buf, &meta, &params.tensors()).unwrap();
        let mut bad = buf.clone();
        bad[8] = 2;
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());

        let ckpt = read_checkpoint(&buf[..]).unwrap();
        let mut wider = EncoderParams::zeros(&EncoderConfig::new(1, 8, 2, 13, 10));
        assert!(matches!(fill(&ckpt.tensors, wider.tensors_mut()), Err(Error::Checkpoint(m)) if m.contains("shape")));
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("absa-ckpt-{}-{:?}", std::process::id(), std::thread::current().id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }
}
