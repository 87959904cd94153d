//! On-disk formats.
//!
//! Embedding file, little-endian:
//!
//! ```text
//! "HSRE" | u32 version=1 | u64 N | u32 D_raw | u32 P
//! N x D_raw f32 global features, row-major
//! P blocks of N x (D_raw / P) f32 part features
//! ```
//!
//! Metadata is a CSV with header `index,camera,gt_id` (gt_id may be empty) and the
//! evaluation split a CSV with header `index,role`, role being `query` or `gallery`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::EmbeddingSet;
use crate::error::{HsrError, Result};
use crate::eval::EvalSplit;
use crate::matrix::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"HSRE";
pub const EMBEDDING_VERSION: u32 = 1;

pub const EMBEDDINGS_FILE: &str = "embeddings.hsre";
pub const METADATA_FILE: &str = "metadata.csv";
pub const SPLIT_FILE: &str = "split.csv";

pub(crate) fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            HsrError::Format("file truncated".into())
        } else {
            e.into()
        }
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_embeddings<W: Write>(w: &mut W, set: &EmbeddingSet) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    w.write_all(&(set.raw_global().cols() as u32).to_le_bytes())?;
    w.write_all(&(set.num_parts() as u32).to_le_bytes())?;
    write_f32s(w, set.raw_global().as_slice())?;
    for p in set.raw_parts() {
        write_f32s(w, p.as_slice())?;
    }
    Ok(())
}

/// Reads the global matrix and part blocks of an embedding file.
pub fn read_embeddings<R: Read>(r: &mut R) -> Result<(Matrix, Vec<Matrix>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(HsrError::Format("missing HSRE magic".into()));
    }
    let version = read_u32(r)?;
    if version != EMBEDDING_VERSION {
        return Err(HsrError::Format(format!("unsupported version {version}")));
    }
    let n = read_u64(r)? as usize;
    let d_raw = read_u32(r)? as usize;
    let p = read_u32(r)? as usize;
    if p == 0 || !d_raw.is_multiple_of(p) {
        return Err(HsrError::Format(format!(
            "D_raw={d_raw} not divisible by P={p}"
        )));
    }
    let d_part = d_raw / p;
    let global = Matrix::new(n, d_raw, read_f32s(r, n * d_raw)?)?;
    let parts = (0..p)
        .map(|_| Matrix::new(n, d_part, read_f32s(r, n * d_part)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((global, parts))
}

pub fn write_metadata<W: Write>(w: W, set: &EmbeddingSet) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["index", "camera", "gt_id"])?;
    for (i, &c) in set.cameras().iter().enumerate() {
        let gt = set.gt_ids().map(|g| g[i].to_string()).unwrap_or_default();
        out.write_record([i.to_string(), c.to_string(), gt])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `(cameras, gt_ids)`; gt ids are `Some` only when every row carries one.
pub fn read_metadata<R: Read>(r: R) -> Result<(Vec<u32>, Option<Vec<u32>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "camera", "gt_id"] {
        return Err(HsrError::Format(
            "metadata header must be `index,camera,gt_id`".into(),
        ));
    }
    let mut cameras = Vec::new();
    let mut gt = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let index: usize = field(0)
            .parse()
            .map_err(|_| HsrError::Format(format!("metadata row {row}: bad index")))?;
        if index != row {
            return Err(HsrError::Format(format!(
                "metadata row {row}: index {index} out of order"
            )));
        }
        cameras.push(
            field(1)
                .parse()
                .map_err(|_| HsrError::Format(format!("metadata row {row}: bad camera")))?,
        );
        gt.push(match field(2) {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| HsrError::Format(format!("metadata row {row}: bad gt_id")))?,
            ),
        });
    }
    let gt_ids = gt
        .iter()
        .all(Option::is_some)
        .then(|| gt.into_iter().flatten().collect());
    Ok((cameras, gt_ids))
}

pub fn write_split<W: Write>(w: W, split: &EvalSplit, n: usize) -> Result<()> {
    let mut role = vec![None; n];
    for &q in &split.query {
        role[q] = Some("query");
    }
    for &g in &split.gallery {
        role[g] = Some("gallery");
    }
    let mut out = csv_writer(w);
    out.write_record(["index", "role"])?;
    for (i, r) in role.iter().enumerate() {
        if let Some(r) = r {
            out.write_record([i.to_string().as_str(), r])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_split<R: Read>(r: R) -> Result<EvalSplit> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut split = EvalSplit::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let index: usize = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| HsrError::Format(format!("split row {row}: bad index")))?;
        match rec.get(1).map(str::trim) {
            Some("query") => split.query.push(index),
            Some("gallery") => split.gallery.push(index),
            other => {
                return Err(HsrError::Format(format!(
                    "split row {row}: bad role {other:?}"
                )));
            }
        }
    }
    Ok(split)
}

/// Writes `embeddings.hsre`, `metadata.csv` and (if given) `split.csv` into `dir`.
pub fn save_dataset(dir: &Path, set: &EmbeddingSet, split: Option<&EvalSplit>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(EMBEDDINGS_FILE))?);
    write_embeddings(&mut w, set)?;
    w.flush()?;
    write_metadata(BufWriter::new(File::create(dir.join(METADATA_FILE))?), set)?;
    if let Some(split) = split {
        write_split(
            BufWriter::new(File::create(dir.join(SPLIT_FILE))?),
            split,
            set.len(),
        )?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(EmbeddingSet, Option<EvalSplit>)> {
    let open = |name: &str| {
        File::open(dir.join(name)).map_err(|e| {
            HsrError::Dataset(format!("cannot open {}: {e}", dir.join(name).display()))
        })
    };
    let (global, parts) = read_embeddings(&mut BufReader::new(open(EMBEDDINGS_FILE)?))?;
    let (cameras, gt_ids) = read_metadata(BufReader::new(open(METADATA_FILE)?))?;
    if cameras.len() != global.rows() {
        return Err(HsrError::Dataset(format!(
            "embedding file has {} samples but metadata has {}",
            global.rows(),
            cameras.len()
        )));
    }
    let set = EmbeddingSet::new(global, parts, cameras, gt_ids)?;
    let split = match File::open(dir.join(SPLIT_FILE)) {
        Ok(f) => {
            let split = read_split(BufReader::new(f))?;
            if split
                .query
                .iter()
                .chain(&split.gallery)
                .any(|&i| i >= set.len())
            {
                return Err(HsrError::Dataset("split index out of range".into()));
            }
            Some(split)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok((set, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set(gt: bool) -> EmbeddingSet {
        let parts = vec![
            Matrix::from_rows(&[[1.0f32, -2.0], [0.5, 4.0], [9.0, 1.5]]).unwrap(),
            Matrix::from_rows(&[[0.25f32, 6.0], [7.0, -8.0], [3.0, 3.0]]).unwrap(),
        ];
        EmbeddingSet::from_parts(parts, vec![0, 2, 1], gt.then(|| vec![4, 4, 9])).unwrap()
    }

    #[test]
    fn embedding_header_layout() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &small_set(false)).unwrap();
        assert_eq!(&buf[..4], b"HSRE");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 24 + 3 * 4 * 4 + 2 * 3 * 2 * 4);
        assert_eq!(f32::from_le_bytes(buf[24..28].try_into().unwrap()), 1.0);
    }

    #[test]
    fn metadata_with_missing_gt() {
        let mut buf = Vec::new();
        write_metadata(&mut buf, &small_set(false)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "index,camera,gt_id\n0,0,\n1,2,\n2,1,\n"
        );
        let (cams, gt) = read_metadata(buf.as_slice()).unwrap();
        assert_eq!(cams, vec![0, 2, 1]);
        assert!(gt.is_none());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &small_set(true)).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_embeddings(&mut buf.as_slice()),
            Err(HsrError::Format(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &small_set(true)).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_embeddings(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn mismatched_sample_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &small_set(true), None).unwrap();
        fs::write(
            dir.path().join(METADATA_FILE),
            "index,camera,gt_id\n0,0,1\n1,1,1\n",
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("3 samples"), "{err}");
    }
}
