//! Versioned binary checkpoints.
//!
//! A checkpoint holds every trainable tensor and every batch-norm running
//! statistic, in store order, together with the hash of the emitting graph's
//! description. Loading verifies the magic, version, dtype, graph hash, and
//! every name and shape, so parameters can never silently land in a
//! different architecture.

use super::{Executor, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Dtype, Element, Tensor};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"BSCKPT\x00\x01";

fn write_tensor<T: Element, W: Write>(w: &mut W, name: &str, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_u16::<LittleEndian>(name.len() as u16)?;
    w.write_all(name.as_bytes())?;
    w.write_u8(t.shape().len() as u8)?;
    for &d in t.shape() {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    match T::DTYPE {
        Dtype::F32 => {
            for &v in t.data() {
                w.write_f32::<LittleEndian>(v.as_f64() as f32)?;
            }
        }
        Dtype::F64 => {
            for &v in t.data() {
                w.write_f64::<LittleEndian>(v.as_f64())?;
            }
        }
    }
    Ok(())
}

fn read_tensor<T: Element, R: Read>(r: &mut R, expect_name: &str, expect_shape: &[usize]) -> Result<Tensor<T>> {
    let fail = |msg: String| Error::Data(format!("checkpoint: {msg}"));
    let name_len = r.read_u16::<LittleEndian>().map_err(|e| fail(format!("truncated name length: {e}")))?;
    let mut name = vec![0u8; name_len as usize];
    r.read_exact(&mut name).map_err(|e| fail(format!("truncated name: {e}")))?;
    let name = String::from_utf8(name).map_err(|_| fail("tensor name is not UTF-8".into()))?;
    if name != expect_name {
        return Err(fail(format!("expected tensor \"{expect_name}\", found \"{name}\"")));
    }
    let ndims = r.read_u8().map_err(|e| fail(format!("truncated rank: {e}")))?;
    let mut shape = Vec::with_capacity(ndims as usize);
    for _ in 0..ndims {
        shape.push(r.read_u64::<LittleEndian>().map_err(|e| fail(format!("truncated shape: {e}")))? as usize);
    }
    if shape != expect_shape {
        return Err(fail(format!(
            "tensor \"{name}\" has shape {shape:?}, expected {expect_shape:?}"
        )));
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    match T::DTYPE {
        Dtype::F32 => {
            for _ in 0..count {
                let v = r.read_f32::<LittleEndian>().map_err(|e| fail(format!("truncated data in \"{name}\": {e}")))?;
                data.push(T::from_f64(v as f64));
            }
        }
        Dtype::F64 => {
            for _ in 0..count {
                let v = r.read_f64::<LittleEndian>().map_err(|e| fail(format!("truncated data in \"{name}\": {e}")))?;
                data.push(T::from_f64(v));
            }
        }
    }
    Tensor::new(shape, data)
}

/// Writes parameters and running stats with the graph's description hash.
pub fn save<T: Element>(store: &ParamStore<T>, graph_hash: &str, path: &Path) -> Result<()> {
    let ctx = |e: std::io::Error| Error::io(format!("writing checkpoint {}", path.display()), e);
    let file = File::create(path).map_err(ctx)?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u8(T::DTYPE.tag())?;
        w.write_u16::<LittleEndian>(graph_hash.len() as u16)?;
        w.write_all(graph_hash.as_bytes())?;
        w.write_u32::<LittleEndian>(store.entries().len() as u32)?;
        for e in store.entries() {
            write_tensor(&mut w, &e.name, &e.value)?;
        }
        w.write_u32::<LittleEndian>(store.bn_states().len() as u32)?;
        for s in store.bn_states() {
            write_tensor(&mut w, &format!("{}.run_mean", s.name), &s.run_mean)?;
            write_tensor(&mut w, &format!("{}.run_var", s.name), &s.run_var)?;
        }
        w.flush()
    })()
    .map_err(ctx)
}

/// Loads a checkpoint into an executor built for the same graph.
pub fn load<T: Element>(exec: &mut Executor<T>, path: &Path) -> Result<()> {
    let fail = |msg: String| Error::Data(format!("checkpoint {}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| Error::io(format!("opening checkpoint {}", path.display()), e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| fail(format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(fail("not a checkpoint file (bad magic)".into()));
    }
    let dtype = Dtype::from_tag(r.read_u8().map_err(|e| fail(format!("truncated dtype: {e}")))?)?;
    if dtype != T::DTYPE {
        return Err(fail(format!("stored dtype {dtype:?} does not match executor dtype {:?}", T::DTYPE)));
    }
    let hash_len = r.read_u16::<LittleEndian>().map_err(|e| fail(format!("truncated hash: {e}")))?;
    let mut hash = vec![0u8; hash_len as usize];
    r.read_exact(&mut hash).map_err(|e| fail(format!("truncated hash: {e}")))?;
    let hash = String::from_utf8(hash).map_err(|_| fail("graph hash is not UTF-8".into()))?;
    let expected = exec.graph().description_hash();
    if hash != expected {
        return Err(Error::State(format!(
            "checkpoint {} was written for a different architecture (graph hash {} vs {})",
            path.display(),
            &hash[..hash.len().min(12)],
            &expected[..12]
        )));
    }

    let entry_count = r.read_u32::<LittleEndian>().map_err(|e| fail(format!("truncated entry count: {e}")))? as usize;
    if entry_count != exec.store().entries().len() {
        return Err(fail(format!(
            "{entry_count} parameter tensors stored, executor has {}",
            exec.store().entries().len()
        )));
    }
    let mut values = Vec::with_capacity(entry_count);
    for e in exec.store().entries() {
        values.push(read_tensor::<T, _>(&mut r, &e.name, e.value.shape())?);
    }
    let bn_count = r.read_u32::<LittleEndian>().map_err(|e| fail(format!("truncated bn count: {e}")))? as usize;
    if bn_count != exec.store().bn_states().len() {
        return Err(fail(format!(
            "{bn_count} batch-norm states stored, executor has {}",
            exec.store().bn_states().len()
        )));
    }
    let mut stats = Vec::with_capacity(bn_count);
    for s in exec.store().bn_states() {
        let mean = read_tensor::<T, _>(&mut r, &format!("{}.run_mean", s.name), s.run_mean.shape())?;
        let var = read_tensor::<T, _>(&mut r, &format!("{}.run_var", s.name), s.run_var.shape())?;
        if var.data().iter().any(|v| *v < T::zero()) {
            return Err(fail(format!("negative running variance in {}", s.name)));
        }
        stats.push((mean, var));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| fail(format!("read error: {e}")))? != 0 {
        return Err(fail("trailing bytes after the last tensor".into()));
    }

    for (e, v) in exec.store_mut().entries_mut().iter_mut().zip(values) {
        e.value = v;
    }
    for (s, (mean, var)) in exec.store_mut().bn_states_mut().iter_mut().zip(stats) {
        s.run_mean = mean;
        s.run_var = var;
    }
    Ok(())
}
