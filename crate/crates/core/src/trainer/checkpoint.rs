//! Model checkpoints: a short text header, then the weights in little-endian binary.
//!
//! ```text
//! hsr-checkpoint v1\n
//! d_in=<D_in> d_out=<D_out>\n
//! \n
//! "HSRM" | u32 version=1 | u32 D_out | u32 D_in
//! D_out x D_in f32 weights, row-major
//! D_out f32 bias
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{HsrError, Result};
use crate::io::{read_f32s, read_u32, write_f32s};
use crate::matrix::Matrix;
use crate::trainer::ProjectorModel;

const HEADER: &str = "hsr-checkpoint v1";
const MAGIC: &[u8; 4] = b"HSRM";

pub fn write_checkpoint<W: Write>(w: &mut W, model: &ProjectorModel) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    writeln!(w, "d_in={} d_out={}", model.d_in(), model.d_out())?;
    writeln!(w)?;
    w.write_all(MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(model.d_out() as u32).to_le_bytes())?;
    w.write_all(&(model.d_in() as u32).to_le_bytes())?;
    write_f32s(w, model.weights().as_slice())?;
    write_f32s(w, model.bias())?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<ProjectorModel> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != HEADER {
        return Err(HsrError::Format("not an hsr checkpoint".into()));
    }
    // skip the informational header up to the blank separator line
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(HsrError::Format("checkpoint header not terminated".into()));
        }
        if line.trim_end().is_empty() {
            break;
        }
    }
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HsrError::Format("missing HSRM magic".into()));
    }
    if read_u32(r)? != 1 {
        return Err(HsrError::Format("unsupported checkpoint version".into()));
    }
    let d_out = read_u32(r)? as usize;
    let d_in = read_u32(r)? as usize;
    let weights = Matrix::new(d_out, d_in, read_f32s(r, d_out * d_in)?)?;
    let bias = read_f32s(r, d_out)?;
    ProjectorModel::from_parts(weights, bias)
}

pub fn save_checkpoint(path: &Path, model: &ProjectorModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ProjectorModel> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
