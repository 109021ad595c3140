use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{Addable, ElementDef, Encoding, Ply, Property, PropertyAccess, PropertyDef, PropertyType, ScalarType};
use ply_rs::writer::Writer;

use super::write_atomic;
use crate::error::{LpfError, Result};
use crate::geom::{PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    /// `.ply` is PLY; `.xyz`, `.txt`, `.pts` and `.asc` are whitespace text.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "ply" => Ok(CloudFormat::Ply),
            "xyz" | "txt" | "pts" | "asc" => Ok(CloudFormat::Xyz),
            _ => Err(LpfError::InvalidArgument(format!(
                "cannot tell the point format of {} (use .xyz or .ply)",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path)?;
    let file = File::open(path)
        .map_err(|e| LpfError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut r = BufReader::new(file);
    match format {
        CloudFormat::Xyz => read_xyz(r),
        CloudFormat::Ply => read_ply(&mut r),
    }
}

/// Writes positions only; PLY output is little-endian binary.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let format = CloudFormat::from_path(path)?;
    write_atomic(path, |w| match format {
        CloudFormat::Xyz => write_xyz(w, cloud),
        CloudFormat::Ply => write_ply(w, cloud, PlyEncoding::BinaryLittleEndian),
    })
}

/// One point per line, the first three numbers of the line. Columns may be
/// separated by whitespace or commas; extra columns are ignored. Blank
/// lines and `#` comments are skipped.
pub fn read_xyz<R: BufRead>(r: R) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut fields = body.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let mut xyz = [0.0; 3];
        for (k, slot) in xyz.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| {
                LpfError::Parse(format!("line {}: expected 3 coordinates, found {k}", n + 1))
            })?;
            *slot = tok
                .parse()
                .map_err(|_| LpfError::Parse(format!("line {}: {tok:?} is not a number", n + 1)))?;
        }
        pts.push(Vec3::from(xyz));
    }
    PointCloud::new(pts)
}

pub fn write_xyz(w: &mut dyn Write, cloud: &PointCloud) -> Result<()> {
    for p in cloud.points() {
        // `Display` for f64 is the shortest text that reads back exactly
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Vertex element keeping only `x`, `y`, `z` of any numeric type.
#[derive(Default)]
struct Vertex([Option<f64>; 3]);

impl PropertyAccess for Vertex {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, name: String, property: Property) {
        let slot = match name.as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => return,
        };
        self.0[slot] = match property {
            Property::Char(v) => Some(v as f64),
            Property::UChar(v) => Some(v as f64),
            Property::Short(v) => Some(v as f64),
            Property::UShort(v) => Some(v as f64),
            Property::Int(v) => Some(v as f64),
            Property::UInt(v) => Some(v as f64),
            Property::Float(v) => Some(v as f64),
            Property::Double(v) => Some(v),
            _ => None,
        };
    }

    fn get_double(&self, name: &String) -> Option<f64> {
        match name.as_str() {
            "x" => self.0[0],
            "y" => self.0[1],
            "z" => self.0[2],
            _ => None,
        }
    }
}

/// Reads the `vertex` element of an ASCII or binary PLY file. Other
/// elements and properties are parsed and dropped.
pub fn read_ply<R: Read>(r: &mut R) -> Result<PointCloud> {
    let ply = Parser::<Vertex>::new()
        .read_ply(r)
        .map_err(|e| LpfError::Parse(format!("PLY: {e}")))?;
    let def = ply
        .header
        .elements
        .get("vertex")
        .ok_or_else(|| LpfError::Parse("PLY has no vertex element".into()))?;
    for axis in ["x", "y", "z"] {
        if !def.properties.contains_key(axis) {
            return Err(LpfError::Parse(format!("PLY vertex element has no {axis} property")));
        }
    }
    let verts = ply.payload.get("vertex").map(Vec::as_slice).unwrap_or(&[]);
    let mut pts = Vec::with_capacity(verts.len());
    for (i, v) in verts.iter().enumerate() {
        match v.0 {
            [Some(x), Some(y), Some(z)] => pts.push(Vec3::new(x, y, z)),
            _ => return Err(LpfError::Parse(format!("PLY vertex {i}: x, y and z must be scalars"))),
        }
    }
    PointCloud::new(pts)
}

pub fn write_ply(w: &mut dyn Write, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let mut ply = Ply::<Vertex>::new();
    ply.header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::BinaryLittleEndian => Encoding::BinaryLittleEndian,
    };
    let mut vertex = ElementDef::new("vertex".to_string());
    for axis in ["x", "y", "z"] {
        vertex.properties.add(PropertyDef::new(axis.to_string(), PropertyType::Scalar(ScalarType::Double)));
    }
    ply.header.elements.add(vertex);
    let verts = cloud.points().iter().map(|p| Vertex([Some(p.x), Some(p.y), Some(p.z)])).collect();
    ply.payload.insert("vertex".to_string(), verts);
    Writer::new()
        .write_ply(&mut WriteAdapter(w), &mut ply)
        .map_err(LpfError::Io)?;
    Ok(())
}

// the PLY writer wants a sized `Write`
struct WriteAdapter<'a>(&'a mut dyn Write);

impl Write for WriteAdapter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}
