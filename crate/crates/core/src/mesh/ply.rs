//! PLY reading and writing.
//!
//! Reads ascii, binary little-endian and binary big-endian files with any
//! scalar property types; only `x`, `y`, `z`, optional `red`, `green`, `blue`
//! and the face index list are kept. Writes `float` coordinates and `uchar`
//! colors.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::TriangleMesh;
use crate::{Error, Point3, Result, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    LittleEndian,
    BigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], ctx: &str) -> Result<Header> {
    let mut pos = 0;
    let mut next_line = || -> Result<String> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(ctx, "unterminated header"))?;
        pos += end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(ctx, "header is not UTF-8"))?;
        Ok(line.trim_end_matches('\r').to_string())
    };

    if next_line()?.trim() != "ply" {
        return Err(Error::parse(ctx, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::LittleEndian,
                    "binary_big_endian" => Encoding::BigEndian,
                    other => return Err(Error::parse(ctx, format!("unknown format '{other}'"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(ctx, format!("bad count for element '{name}'")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ctx, "property before any element"))?;
                let count = ScalarType::parse(count)
                    .ok_or_else(|| Error::parse(ctx, format!("unknown type '{count}'")))?;
                let item =
                    ScalarType::parse(item).ok_or_else(|| Error::parse(ctx, format!("unknown type '{item}'")))?;
                element.properties.push(Property { name: name.to_string(), kind: PropertyKind::List { count, item } });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ctx, "property before any element"))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| Error::parse(ctx, format!("unknown type '{ty}'")))?;
                element.properties.push(Property { name: name.to_string(), kind: PropertyKind::Scalar(ty) });
            }
            _ => return Err(Error::parse(ctx, format!("malformed header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(ctx, "missing format line"))?;
    Ok(Header { encoding, elements, body_offset: pos })
}

/// Sequential value source over the body of a PLY file.
struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: Encoding,
    ctx: &'a str,
}

impl Body<'_> {
    fn read(&mut self, ty: ScalarType) -> Result<f64> {
        match self.encoding {
            Encoding::Ascii if ty == ScalarType::F32 => Ok(self.read_ascii()? as f32 as f64),
            Encoding::Ascii => self.read_ascii(),
            Encoding::LittleEndian | Encoding::BigEndian => self.read_binary(ty),
        }
    }

    fn read_ascii(&mut self) -> Result<f64> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(self.ctx, "unexpected end of data"));
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        token
            .parse()
            .map_err(|_| Error::parse(self.ctx, format!("invalid number '{token}'")))
    }

    fn read_binary(&mut self, ty: ScalarType) -> Result<f64> {
        let n = ty.size();
        let raw = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::parse(self.ctx, "unexpected end of data"))?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if self.encoding == Encoding::BigEndian {
            buf[..n].reverse();
        }
        Ok(match ty {
            ScalarType::I8 => buf[0] as i8 as f64,
            ScalarType::U8 => buf[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(buf),
        })
    }
}

/// Parses a PLY document held in memory. `ctx` names the source in errors.
pub fn parse_ply(bytes: &[u8], ctx: &str) -> Result<TriangleMesh> {
    let header = parse_header(bytes, ctx)?;
    let mut body = Body { bytes, pos: header.body_offset, encoding: header.encoding, ctx };

    let mut vertices = Vec::new();
    let mut colors: Option<Vec<Rgb>> = None;
    let mut triangles = Vec::new();
    let mut saw_vertex = false;

    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let find = |name: &str| element.properties.iter().position(|p| p.name == name);
                let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => return Err(Error::parse(ctx, "vertex element lacks x/y/z")),
                };
                let color_idx = match (find("red"), find("green"), find("blue")) {
                    (Some(r), Some(g), Some(b)) => Some([r, g, b]),
                    _ => None,
                };
                let color_scale: Vec<f64> = element
                    .properties
                    .iter()
                    .map(|p| match p.kind {
                        PropertyKind::Scalar(ScalarType::U8) => 255.0,
                        PropertyKind::Scalar(ScalarType::U16) => 65535.0,
                        _ => 1.0,
                    })
                    .collect();
                vertices.reserve(element.count);
                let mut cols = Vec::with_capacity(if color_idx.is_some() { element.count } else { 0 });
                let mut row = vec![0.0; element.properties.len()];
                for v in 0..element.count {
                    for (k, prop) in element.properties.iter().enumerate() {
                        row[k] = match prop.kind {
                            PropertyKind::Scalar(ty) => body.read(ty)?,
                            PropertyKind::List { count, item } => {
                                let len = body.read(count)? as usize;
                                for _ in 0..len {
                                    body.read(item)?;
                                }
                                0.0
                            }
                        };
                    }
                    let p = Point3::new(row[xi], row[yi], row[zi]);
                    if !p.coords.iter().all(|c| c.is_finite()) {
                        return Err(Error::parse(ctx, format!("vertex {v}: non-finite coordinate")));
                    }
                    vertices.push(p);
                    if let Some(ci) = color_idx {
                        cols.push(ci.map(|k| (row[k] / color_scale[k]).clamp(0.0, 1.0)));
                    }
                }
                if color_idx.is_some() {
                    colors = Some(cols);
                }
            }
            "face" => {
                let list_idx = element
                    .properties
                    .iter()
                    .position(|p| {
                        matches!(p.kind, PropertyKind::List { .. })
                            && (p.name == "vertex_indices" || p.name == "vertex_index")
                    })
                    .ok_or_else(|| Error::parse(ctx, "face element lacks vertex_indices list"))?;
                triangles.reserve(element.count);
                for f in 0..element.count {
                    let mut tri = None;
                    for (k, prop) in element.properties.iter().enumerate() {
                        match prop.kind {
                            PropertyKind::Scalar(ty) => {
                                body.read(ty)?;
                            }
                            PropertyKind::List { count, item } => {
                                let len = body.read(count)? as usize;
                                let mut idx = Vec::with_capacity(len);
                                for _ in 0..len {
                                    idx.push(body.read(item)?);
                                }
                                if k == list_idx {
                                    if len != 3 {
                                        return Err(Error::parse(
                                            ctx,
                                            format!("face {f}: {len} vertices, only triangles are supported"),
                                        ));
                                    }
                                    let mut t = [0usize; 3];
                                    for (slot, &value) in t.iter_mut().zip(&idx) {
                                        if value < 0.0 || value.fract() != 0.0 {
                                            return Err(Error::parse(ctx, format!("face {f}: invalid index {value}")));
                                        }
                                        *slot = value as usize;
                                    }
                                    tri = Some(t);
                                }
                            }
                        }
                    }
                    let t = tri.expect("list property index is valid");
                    if let Some(&bad) = t.iter().find(|&&i| i >= vertices.len()) {
                        return Err(Error::parse(
                            ctx,
                            format!("face {f}: vertex index {bad} out of range ({} vertices)", vertices.len()),
                        ));
                    }
                    triangles.push(t);
                }
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop.kind {
                            PropertyKind::Scalar(ty) => {
                                body.read(ty)?;
                            }
                            PropertyKind::List { count, item } => {
                                let len = body.read(count)? as usize;
                                for _ in 0..len {
                                    body.read(item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if !saw_vertex {
        return Err(Error::parse(ctx, "no vertex element"));
    }
    TriangleMesh::new(vertices, triangles, colors).map_err(|e| match e {
        Error::InvalidMesh(msg) => Error::parse(ctx, msg),
        other => other,
    })
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, &path.display().to_string())
}

fn color_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Serializes a mesh. Comments must not contain newlines.
pub fn write_ply(mesh: &TriangleMesh, out: &mut impl Write, format: PlyFormat, comments: &[String]) -> std::io::Result<()> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\n");
    for c in comments {
        header.push_str(&format!("comment {}\n", c.replace('\n', " ")));
    }
    header.push_str(&format!(
        "element vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        mesh.vertex_count()
    ));
    if mesh.colors().is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.triangle_count()
    ));
    let mut buf = header.into_bytes();

    match format {
        PlyFormat::Ascii => {
            use std::fmt::Write as _;
            let mut s = String::new();
            for (i, p) in mesh.vertices().iter().enumerate() {
                let _ = write!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                if let Some(c) = mesh.colors() {
                    let _ = write!(s, " {} {} {}", color_byte(c[i][0]), color_byte(c[i][1]), color_byte(c[i][2]));
                }
                s.push('\n');
            }
            for t in mesh.triangles() {
                let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
            }
            buf.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in mesh.vertices().iter().enumerate() {
                for c in [p.x, p.y, p.z] {
                    buf.extend_from_slice(&(c as f32).to_le_bytes());
                }
                if let Some(c) = mesh.colors() {
                    buf.extend(c[i].iter().map(|&v| color_byte(v)));
                }
            }
            for t in mesh.triangles() {
                buf.push(3);
                for &i in t {
                    buf.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out.write_all(&buf)
}

pub fn ply_bytes(mesh: &TriangleMesh, format: PlyFormat, comments: &[String]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_ply(mesh, &mut buf, format, comments).expect("writing to a Vec cannot fail");
    buf
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: PlyFormat, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ply_bytes(mesh, format, comments)).map_err(|e| Error::io(path, e))
}
