//! Training sample files ("IKPS").
//!
//! Header after magic and version: `u32` sample count, `u32` surface
//! count, `u32` flags (bit 0 normals, bit 1 UDF), `u32` channel count K.
//! Each record is `f32` x, y, z, sdf, then nx, ny, nz when bit 0 is set
//! (NaN for samples without a normal), then K UDF values when bit 1 is set.

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::sampling::TrainingSample;

const MAGIC: &[u8; 4] = b"IKPS";
const VERSION: u32 = 1;
const HAS_NORMALS: u32 = 1;
const HAS_UDF: u32 = 2;

pub fn encode_samples(samples: &[TrainingSample]) -> Result<Vec<u8>> {
    let has_normals = samples.iter().any(|s| s.normal.is_some());
    let k = samples.iter().find_map(|s| s.udf.as_ref().map(Vec::len));
    if let Some(k) = k {
        if samples.iter().any(|s| s.udf.as_ref().map(Vec::len) != Some(k)) {
            return Err(Error::ShapeMismatch("samples disagree on UDF channels".into()));
        }
    }
    let mut w = Writer::new(MAGIC, VERSION);
    w.len_u32(samples.len(), "sample count")?;
    w.len_u32(samples.iter().filter(|s| s.normal.is_some()).count(), "surface count")?;
    w.u32(if has_normals { HAS_NORMALS } else { 0 } | if k.is_some() { HAS_UDF } else { 0 });
    w.len_u32(k.unwrap_or(0), "channel count")?;
    for s in samples {
        for v in s.point.to_array() {
            w.f32(v as f32);
        }
        w.f32(s.sdf as f32);
        if has_normals {
            let n = s.normal.map(Point3::to_array).unwrap_or([f64::NAN; 3]);
            n.into_iter().for_each(|v| w.f32(v as f32));
        }
        if let Some(u) = &s.udf {
            u.iter().for_each(|&v| w.f32(v as f32));
        }
    }
    Ok(w.buf)
}

pub fn decode_samples(data: &[u8]) -> Result<Vec<TrainingSample>> {
    let mut r = Reader::open(data, MAGIC, VERSION, "samples")?;
    let n = r.usize()?;
    let n_surface = r.usize()?;
    let flags = r.u32()?;
    let k = r.usize()?;
    if flags & !(HAS_NORMALS | HAS_UDF) != 0 {
        return Err(Error::Format(format!("samples: unknown flags {flags:#x}")));
    }
    let has_normals = flags & HAS_NORMALS != 0;
    let has_udf = flags & HAS_UDF != 0;
    let record = 4 + if has_normals { 3 } else { 0 } + if has_udf { k } else { 0 };
    r.expect_remaining(n * record * 4)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut f = || r.f32().map(f64::from);
        let point = Point3::new(f()?, f()?, f()?);
        let sdf = f()?;
        let normal = if has_normals {
            let v = Point3::new(f()?, f()?, f()?);
            (!v.x.is_nan()).then_some(v)
        } else {
            None
        };
        let udf = if has_udf {
            Some((0..k).map(|_| f()).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        out.push(TrainingSample {
            point,
            sdf,
            normal,
            udf,
        });
    }
    if out.iter().filter(|s| s.normal.is_some()).count() != n_surface {
        return Err(Error::Format("samples: surface count does not match records".into()));
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[TrainingSample]) -> Result<()> {
    super::write_file(path, &encode_samples(samples)?)
}

pub fn read_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    decode_samples(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{KeypointSet, SphereField};
    use crate::sampling::{make_training_set, make_udf_training_set, SampleConfig};

    fn field() -> SphereField {
        let kp = KeypointSet::with_labels(
            vec![Point3::new(0.1, 0.2, 0.3), Point3::new(-0.4, 0.0, 0.1)],
            vec![0, 2],
            3,
        )
        .unwrap();
        SphereField::new(kp, 0.08).unwrap()
    }

    fn cfg() -> SampleConfig {
        SampleConfig {
            n_volume: 50,
            n_surface: 40,
            icosphere_level: 1,
            ..SampleConfig::default()
        }
    }

    #[test]
    fn sdf_samples_round_trip() {
        let s = make_training_set(&field(), &cfg()).unwrap();
        let bytes = encode_samples(&s).unwrap();
        let back = decode_samples(&bytes).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in back.iter().zip(&s) {
            assert_eq!(a.point.x, b.point.x as f32 as f64);
            assert_eq!(a.sdf, b.sdf as f32 as f64);
            assert_eq!(a.normal.is_some(), b.normal.is_some());
        }
        assert_eq!(encode_samples(&back).unwrap(), bytes);
    }

    #[test]
    fn udf_samples_round_trip() {
        let s = make_udf_training_set(&field(), &cfg()).unwrap();
        let bytes = encode_samples(&s).unwrap();
        let back = decode_samples(&bytes).unwrap();
        assert_eq!(back[0].udf.as_ref().unwrap().len(), 3);
        assert_eq!(encode_samples(&back).unwrap(), bytes);
        assert!(decode_samples(&bytes[..bytes.len() - 4]).is_err());
    }
}
