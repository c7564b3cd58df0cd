//! Protobuf wire-format decoding of the ONNX messages the interpreter
//! reads. Unknown fields are skipped.

use crate::error::{Error, Result};

fn err(msg: impl Into<String>) -> Error {
    Error::Backend(format!("malformed ONNX protobuf: {}", msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

enum Field<'a> {
    Varint(u64),
    Fixed64(u64),
    Bytes(&'a [u8]),
    Fixed32(u32),
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn varint(&mut self) -> Result<u64> {
        let mut out = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.buf.get(self.pos).ok_or_else(|| err("truncated varint"))?;
            self.pos += 1;
            out |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(out);
            }
        }
        Err(err("varint too long"))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| err("truncated field"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn next(&mut self) -> Result<Option<(u32, Field<'a>)>> {
        if self.pos >= self.buf.len() {
            return Ok(None);
        }
        let key = self.varint()?;
        let number = (key >> 3) as u32;
        let field = match key & 7 {
            0 => Field::Varint(self.varint()?),
            1 => Field::Fixed64(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"))),
            2 => {
                let n = self.varint()? as usize;
                Field::Bytes(self.take(n)?)
            }
            5 => Field::Fixed32(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"))),
            w => return Err(err(format!("unsupported wire type {w}"))),
        };
        Ok(Some((number, field)))
    }
}

fn string(b: &[u8]) -> Result<String> {
    String::from_utf8(b.to_vec()).map_err(|_| err("invalid UTF-8 string"))
}

/// Repeated int64, packed or not.
fn push_ints(out: &mut Vec<i64>, f: Field) -> Result<()> {
    match f {
        Field::Varint(v) => out.push(v as i64),
        Field::Bytes(b) => {
            let mut r = Reader::new(b);
            while r.pos < b.len() {
                out.push(r.varint()? as i64);
            }
        }
        _ => return Err(err("bad repeated int encoding")),
    }
    Ok(())
}

/// Repeated float, packed or not.
fn push_floats(out: &mut Vec<f32>, f: Field) -> Result<()> {
    match f {
        Field::Fixed32(v) => out.push(f32::from_bits(v)),
        Field::Bytes(b) => {
            if b.len() % 4 != 0 {
                return Err(err("packed float length"));
            }
            out.extend(
                b.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
            );
        }
        _ => return Err(err("bad repeated float encoding")),
    }
    Ok(())
}

fn push_doubles(out: &mut Vec<f64>, f: Field) -> Result<()> {
    match f {
        Field::Fixed64(v) => out.push(f64::from_bits(v)),
        Field::Bytes(b) => {
            if b.len() % 8 != 0 {
                return Err(err("packed double length"));
            }
            out.extend(
                b.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))),
            );
        }
        _ => return Err(err("bad repeated double encoding")),
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct TensorProto {
    pub name: String,
    pub dims: Vec<i64>,
    pub data_type: i32,
    pub float_data: Vec<f32>,
    pub int32_data: Vec<i64>,
    pub int64_data: Vec<i64>,
    pub double_data: Vec<f64>,
    pub raw_data: Vec<u8>,
    pub external: bool,
}

impl TensorProto {
    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut t = TensorProto::default();
        let mut r = Reader::new(buf);
        while let Some((n, f)) = r.next()? {
            match (n, f) {
                (1, f) => push_ints(&mut t.dims, f)?,
                (2, Field::Varint(v)) => t.data_type = v as i32,
                (4, f) => push_floats(&mut t.float_data, f)?,
                (5, f) => push_ints(&mut t.int32_data, f)?,
                (7, f) => push_ints(&mut t.int64_data, f)?,
                (8, Field::Bytes(b)) => t.name = string(b)?,
                (9, Field::Bytes(b)) => t.raw_data = b.to_vec(),
                (10, f) => push_doubles(&mut t.double_data, f)?,
                (14, Field::Varint(v)) => t.external = v == 1,
                _ => {}
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AttributeProto {
    pub name: String,
    pub f: Option<f32>,
    pub i: Option<i64>,
    pub s: Option<Vec<u8>>,
    pub t: Option<TensorProto>,
    pub floats: Vec<f32>,
    pub ints: Vec<i64>,
}

impl AttributeProto {
    fn decode(buf: &[u8]) -> Result<Self> {
        let mut a = AttributeProto::default();
        let mut r = Reader::new(buf);
        while let Some((n, f)) = r.next()? {
            match (n, f) {
                (1, Field::Bytes(b)) => a.name = string(b)?,
                (2, Field::Fixed32(v)) => a.f = Some(f32::from_bits(v)),
                (3, Field::Varint(v)) => a.i = Some(v as i64),
                (4, Field::Bytes(b)) => a.s = Some(b.to_vec()),
                (5, Field::Bytes(b)) => a.t = Some(TensorProto::decode(b)?),
                (7, f) => push_floats(&mut a.floats, f)?,
                (8, f) => push_ints(&mut a.ints, f)?,
                _ => {}
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NodeProto {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub name: String,
    pub op_type: String,
    pub domain: String,
    pub attributes: Vec<AttributeProto>,
}

impl NodeProto {
    fn decode(buf: &[u8]) -> Result<Self> {
        let mut node = NodeProto::default();
        let mut r = Reader::new(buf);
        while let Some((n, f)) = r.next()? {
            match (n, f) {
                (1, Field::Bytes(b)) => node.inputs.push(string(b)?),
                (2, Field::Bytes(b)) => node.outputs.push(string(b)?),
                (3, Field::Bytes(b)) => node.name = string(b)?,
                (4, Field::Bytes(b)) => node.op_type = string(b)?,
                (5, Field::Bytes(b)) => node.attributes.push(AttributeProto::decode(b)?),
                (7, Field::Bytes(b)) => node.domain = string(b)?,
                _ => {}
            }
        }
        Ok(node)
    }

    pub fn attr(&self, name: &str) -> Option<&AttributeProto> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GraphProto {
    pub nodes: Vec<NodeProto>,
    pub initializers: Vec<TensorProto>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

fn value_info_name(buf: &[u8]) -> Result<String> {
    let mut r = Reader::new(buf);
    while let Some((n, f)) = r.next()? {
        if let (1, Field::Bytes(b)) = (n, f) {
            return string(b);
        }
    }
    Err(err("value info without a name"))
}

impl GraphProto {
    fn decode(buf: &[u8]) -> Result<Self> {
        let mut g = GraphProto::default();
        let mut r = Reader::new(buf);
        while let Some((n, f)) = r.next()? {
            match (n, f) {
                (1, Field::Bytes(b)) => g.nodes.push(NodeProto::decode(b)?),
                (5, Field::Bytes(b)) => g.initializers.push(TensorProto::decode(b)?),
                (11, Field::Bytes(b)) => g.inputs.push(value_info_name(b)?),
                (12, Field::Bytes(b)) => g.outputs.push(value_info_name(b)?),
                _ => {}
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelProto {
    pub graph: GraphProto,
    /// Default-domain opset version.
    pub opset: i64,
}

impl ModelProto {
    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut m = ModelProto::default();
        let mut graph = None;
        let mut r = Reader::new(buf);
        while let Some((n, f)) = r.next()? {
            match (n, f) {
                (7, Field::Bytes(b)) => graph = Some(GraphProto::decode(b)?),
                (8, Field::Bytes(b)) => {
                    let (mut domain, mut version) = (String::new(), 0);
                    let mut or = Reader::new(b);
                    while let Some((n, f)) = or.next()? {
                        match (n, f) {
                            (1, Field::Bytes(d)) => domain = string(d)?,
                            (2, Field::Varint(v)) => version = v as i64,
                            _ => {}
                        }
                    }
                    if domain.is_empty() || domain == "ai.onnx" {
                        m.opset = version;
                    }
                }
                _ => {}
            }
        }
        m.graph = graph.ok_or_else(|| err("model has no graph"))?;
        Ok(m)
    }
}
