//! PLY reading and writing for point clouds and triangle meshes.
//!
//! Clouds are written with `x y z` as 32-bit floats and, when confidence is
//! present, a `confidence` float plus `red green blue` bytes from
//! [`confidence_color`]. The reader accepts ASCII and binary little-endian
//! files with arbitrary extra properties and elements.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Point3, PointCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

/// Maps a confidence in `[0, 1]` to a "hot" colormap: black, red, yellow, white.
pub fn confidence_color(c: f64) -> [u8; 3] {
    let c = c.clamp(0.0, 1.0);
    let ch = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * c), ch(3.0 * c - 1.0), ch(3.0 * c - 2.0)]
}

pub fn write_ply<W: Write>(out: W, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(out);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    let conf = cloud.confidence();
    if conf.is_some() {
        writeln!(w, "property float confidence")?;
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        let xyz = [p.x as f32, p.y as f32, p.z as f32];
        match format {
            PlyFormat::Ascii => {
                write!(w, "{} {} {}", xyz[0], xyz[1], xyz[2])?;
                if let Some(c) = conf {
                    let [r, g, b] = confidence_color(c[i]);
                    write!(w, " {} {r} {g} {b}", c[i] as f32)?;
                }
                writeln!(w)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in xyz {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = conf {
                    w.write_all(&(c[i] as f32).to_le_bytes())?;
                    w.write_all(&confidence_color(c[i]))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ply_file(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_ply(File::create(path)?, cloud, format)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Format(format!("unknown PLY scalar type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, r: &mut impl Read) -> Result<f64> {
        let mut buf = [0u8; 8];
        let b = &mut buf[..self.size()];
        r.read_exact(b).map_err(|e| Error::Format(format!("truncated PLY body: {e}")))?;
        Ok(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn parse_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<bool> {
        line.clear();
        Ok(r.read_line(line)? > 0)
    };
    if !next(&mut line)? || line.trim() != "ply" {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next(&mut line)? {
            return Err(Error::Format("header ended without end_header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::Format(format!("unsupported PLY format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Format(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, _name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("property before element".into()))?
                .props
                .push(Property::List {
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("property before element".into()))?
                .props
                .push(Property::Scalar { name: name.to_string(), ty: Scalar::parse(ty)? }),
            _ => return Err(Error::Format(format!("unrecognized header line {:?}", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::Format("missing format line".into()))?;
    Ok(Header { format, elements })
}

/// One decoded element record: scalar properties by position, lists separately.
struct Record {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

fn read_records(
    r: &mut impl BufRead,
    header: &Header,
    mut visit: impl FnMut(&Element, Record) -> Result<()>,
) -> Result<()> {
    let mut line = String::new();
    for el in &header.elements {
        for _ in 0..el.count {
            let mut rec = Record { scalars: Vec::new(), lists: Vec::new() };
            match header.format {
                PlyFormat::Ascii => {
                    line.clear();
                    if r.read_line(&mut line)? == 0 {
                        return Err(Error::Format(format!("truncated {} element", el.name)));
                    }
                    let mut toks = line.split_whitespace().map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad PLY value {t:?}")))
                    });
                    let mut take = || -> Result<f64> {
                        toks.next()
                            .unwrap_or_else(|| Err(Error::Format("short PLY record".into())))
                    };
                    for p in &el.props {
                        match p {
                            Property::Scalar { .. } => rec.scalars.push(take()?),
                            Property::List { .. } => {
                                let n = take()? as usize;
                                let items = (0..n).map(|_| take()).collect::<Result<Vec<_>>>()?;
                                rec.lists.push(items);
                            }
                        }
                    }
                }
                PlyFormat::BinaryLittleEndian => {
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => rec.scalars.push(ty.read_le(r)?),
                            Property::List { count, item, .. } => {
                                let n = count.read_le(r)? as usize;
                                let items =
                                    (0..n).map(|_| item.read_le(r)).collect::<Result<Vec<_>>>()?;
                                rec.lists.push(items);
                            }
                        }
                    }
                }
            }
            visit(el, rec)?;
        }
    }
    Ok(())
}

fn scalar_index(el: &Element, name: &str) -> Option<usize> {
    el.props
        .iter()
        .filter(|p| matches!(p, Property::Scalar { .. }))
        .position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
}

fn xyz_indices(el: &Element) -> Result<[usize; 3]> {
    let get = |n: &str| {
        scalar_index(el, n).ok_or_else(|| Error::Format(format!("vertex element lacks {n}")))
    };
    Ok([get("x")?, get("y")?, get("z")?])
}

/// Reads the `vertex` element of a PLY stream, with `confidence` if present.
pub fn read_ply<R: Read>(input: R) -> Result<PointCloud> {
    let mut r = BufReader::new(input);
    let header = parse_header(&mut r)?;
    let mut points = Vec::new();
    let mut confidence = Vec::new();
    let mut has_conf = false;
    read_records(&mut r, &header, |el, rec| {
        if el.name == "vertex" {
            let [ix, iy, iz] = xyz_indices(el)?;
            points.push(Point3::new(rec.scalars[ix], rec.scalars[iy], rec.scalars[iz]));
            if let Some(ic) = scalar_index(el, "confidence") {
                has_conf = true;
                confidence.push(rec.scalars[ic]);
            }
        }
        Ok(())
    })?;
    if has_conf {
        PointCloud::with_confidence(points, confidence)
    } else {
        Ok(PointCloud::new(points))
    }
}

pub fn read_ply_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_ply(File::open(path)?)
}

/// Triangle soup: vertices plus index triples. Polygons are fan-triangulated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

pub fn read_ply_mesh<R: Read>(input: R) -> Result<TriangleMesh> {
    let mut r = BufReader::new(input);
    let header = parse_header(&mut r)?;
    let mut mesh = TriangleMesh::default();
    read_records(&mut r, &header, |el, rec| {
        match el.name.as_str() {
            "vertex" => {
                let [ix, iy, iz] = xyz_indices(el)?;
                mesh.vertices.push(Point3::new(rec.scalars[ix], rec.scalars[iy], rec.scalars[iz]));
            }
            "face" => {
                let poly = rec
                    .lists
                    .first()
                    .ok_or_else(|| Error::Format("face element without index list".into()))?;
                let idx: Vec<usize> = poly.iter().map(|&v| v as usize).collect();
                for t in 1..idx.len().saturating_sub(1) {
                    mesh.triangles.push([idx[0], idx[t], idx[t + 1]]);
                }
            }
            _ => {}
        }
        Ok(())
    })?;
    let n = mesh.vertices.len();
    if mesh.triangles.iter().flatten().any(|&i| i >= n) {
        return Err(Error::Format("face index out of range".into()));
    }
    Ok(mesh)
}
