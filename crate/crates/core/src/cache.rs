//! Columnar binary cache.
//!
//! Layout (little endian): the 7-byte magic `LSCOPE1`, a one-byte payload tag
//! (`T` table, `M` matrix), then the payload.
//!
//! Table payload: region dictionary, occupation dictionary (each a `u32`
//! count followed by `(code, name)` string pairs), `u64` record count, then
//! four columns: region index `u32`, occupation index `u32`, year `i32`,
//! employment `f64`.
//!
//! Matrix payload: kind byte (0 raw, 1 tfidf), region and occupation
//! dictionaries, then `R*O` row-major `f64` values.
//!
//! Strings are a `u32` byte length followed by UTF-8 bytes.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{EmploymentRecord, EmploymentTable};
use crate::matrix::{MatrixKind, RegionOccupationMatrix};

pub const MAGIC: &[u8; 7] = b"LSCOPE1";
const TAG_TABLE: u8 = b'T';
const TAG_MATRIX: u8 = b'M';

fn io_err(e: std::io::Error) -> Error {
    Error::io("<cache>", e)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32).map_err(io_err)?;
    w.write_all(s.as_bytes()).map_err(io_err)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("cache string not UTF-8: {e}")))
}

fn write_dict<W: Write>(w: &mut W, codes: &[String], names: &[String]) -> Result<()> {
    w.write_u32::<LittleEndian>(codes.len() as u32).map_err(io_err)?;
    for (c, n) in codes.iter().zip(names) {
        write_str(w, c)?;
        write_str(w, n)?;
    }
    Ok(())
}

fn read_dict<R: Read>(r: &mut R) -> Result<(Vec<String>, Vec<String>)> {
    let n = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut codes = Vec::with_capacity(n);
    let mut names = Vec::with_capacity(n);
    for _ in 0..n {
        codes.push(read_str(r)?);
        names.push(read_str(r)?);
    }
    Ok((codes, names))
}

fn read_header<R: Read>(r: &mut R, expected: u8) -> Result<()> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an LSCOPE1 cache".into()));
    }
    let tag = r.read_u8().map_err(io_err)?;
    if tag != expected {
        return Err(Error::Format(format!(
            "cache holds payload `{}`, expected `{}`",
            tag as char, expected as char
        )));
    }
    Ok(())
}

pub fn write_table<W: Write>(w: &mut W, table: &EmploymentTable) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u8(TAG_TABLE).map_err(io_err)?;
    let rnames = table.region_names();
    let onames = table.occupation_names();
    let region_names: Vec<String> = table.regions().iter().map(|c| rnames[c.as_str()].to_string()).collect();
    let occ_names: Vec<String> = table
        .occupations()
        .iter()
        .map(|c| onames[c.as_str()].to_string())
        .collect();
    write_dict(w, table.regions(), &region_names)?;
    write_dict(w, table.occupations(), &occ_names)?;
    let recs = table.records();
    w.write_u64::<LittleEndian>(recs.len() as u64).map_err(io_err)?;
    for r in recs {
        let i = table.regions().binary_search(&r.region_code).expect("indexed");
        w.write_u32::<LittleEndian>(i as u32).map_err(io_err)?;
    }
    for r in recs {
        let j = table.occupations().binary_search(&r.occupation_code).expect("indexed");
        w.write_u32::<LittleEndian>(j as u32).map_err(io_err)?;
    }
    for r in recs {
        w.write_i32::<LittleEndian>(r.year).map_err(io_err)?;
    }
    for r in recs {
        w.write_f64::<LittleEndian>(r.employment).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_table<R: Read>(r: &mut R) -> Result<EmploymentTable> {
    read_header(r, TAG_TABLE)?;
    let (regions, region_names) = read_dict(r)?;
    let (occs, occ_names) = read_dict(r)?;
    let n = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let read_idx = |r: &mut R, bound: usize| -> Result<Vec<usize>> {
        (0..n)
            .map(|_| {
                let i = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
                if i >= bound {
                    return Err(Error::Format(format!("cache index {i} out of range")));
                }
                Ok(i)
            })
            .collect()
    };
    let ri = read_idx(r, regions.len())?;
    let oi = read_idx(r, occs.len())?;
    let years: Vec<i32> = (0..n)
        .map(|_| r.read_i32::<LittleEndian>().map_err(io_err))
        .collect::<Result<_>>()?;
    let emp: Vec<f64> = (0..n)
        .map(|_| r.read_f64::<LittleEndian>().map_err(io_err))
        .collect::<Result<_>>()?;
    EmploymentTable::from_records((0..n).map(|k| EmploymentRecord {
        region_code: regions[ri[k]].clone(),
        region_name: region_names[ri[k]].clone(),
        occupation_code: occs[oi[k]].clone(),
        occupation_name: occ_names[oi[k]].clone(),
        year: years[k],
        employment: emp[k],
    }))
}

pub fn write_matrix<W: Write>(w: &mut W, m: &RegionOccupationMatrix) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u8(TAG_MATRIX).map_err(io_err)?;
    w.write_u8(match m.kind {
        MatrixKind::Raw => 0,
        MatrixKind::Tfidf => 1,
    })
    .map_err(io_err)?;
    write_dict(w, &m.region_labels, &m.region_names)?;
    write_dict(w, &m.occupation_labels, &m.occupation_names)?;
    for v in m.values.iter() {
        w.write_f64::<LittleEndian>(*v).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<RegionOccupationMatrix> {
    read_header(r, TAG_MATRIX)?;
    let kind = match r.read_u8().map_err(io_err)? {
        0 => MatrixKind::Raw,
        1 => MatrixKind::Tfidf,
        k => return Err(Error::Format(format!("unknown matrix kind {k}"))),
    };
    let (rl, rn) = read_dict(r)?;
    let (ol, on) = read_dict(r)?;
    let flat: Vec<f64> = (0..rl.len() * ol.len())
        .map(|_| r.read_f64::<LittleEndian>().map_err(io_err))
        .collect::<Result<_>>()?;
    let values =
        Array2::from_shape_vec((rl.len(), ol.len()), flat).map_err(|e| Error::Shape(e.to_string()))?;
    RegionOccupationMatrix::with_names(values, rl, ol, rn, on, kind)
}
