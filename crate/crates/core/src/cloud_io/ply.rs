//! PLY header parsing (ASCII and binary little-endian vertex data).

use super::{Attribute, AttributeBinding, Scalar};
use crate::error::{Error, Result};

const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PlyEncoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    scalar: Option<Scalar>,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: u64,
    props: Vec<Property>,
}

impl Element {
    fn fixed_size(&self) -> Option<usize> {
        self.props
            .iter()
            .map(|p| p.scalar.map(Scalar::size))
            .sum()
    }
}

/// Everything needed to locate and decode the vertex element.
#[derive(Debug, Clone)]
pub(crate) struct PlyHeader {
    pub encoding: PlyEncoding,
    pub vertex_count: u64,
    /// Binary: byte offset of the first vertex. ASCII: byte offset just
    /// past `end_header`.
    pub data_start: u64,
    /// Binary: bytes per vertex. ASCII: number of columns per vertex line.
    pub stride: usize,
    /// ASCII only: lines belonging to elements declared before `vertex`.
    pub lines_before_vertex: u64,
    pub bindings: Vec<AttributeBinding>,
}

fn parse_scalar(s: &str) -> Option<Scalar> {
    Some(match s {
        "char" | "int8" => Scalar::I8,
        "uchar" | "uint8" => Scalar::U8,
        "short" | "int16" => Scalar::I16,
        "ushort" | "uint16" => Scalar::U16,
        "int" | "int32" => Scalar::I32,
        "uint" | "uint32" => Scalar::U32,
        "float" | "float32" => Scalar::F32,
        "double" | "float64" => Scalar::F64,
        _ => return None,
    })
}

fn canonical(name: &str) -> Option<Attribute> {
    Some(match name {
        "x" => Attribute::X,
        "y" => Attribute::Y,
        "z" => Attribute::Z,
        "red" | "r" | "diffuse_red" => Attribute::Red,
        "green" | "g" | "diffuse_green" => Attribute::Green,
        "blue" | "b" | "diffuse_blue" => Attribute::Blue,
        _ => return None,
    })
}

/// Returns `true` when `bytes` starts like a PLY file.
pub(crate) fn sniff(bytes: &[u8]) -> bool {
    bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n")
}

/// Parses the header at the start of `bytes`; `bytes` must include `end_header`.
pub(crate) fn parse_header(bytes: &[u8]) -> Result<PlyHeader> {
    let end = find_end_header(bytes)?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("PLY header is not valid text".into()))?;

    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::UnsupportedFormat("missing `ply` magic".into()));
    }

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    Some("binary_big_endian") => {
                        return Err(Error::UnsupportedFormat(
                            "big-endian PLY is not supported".into(),
                        ))
                    }
                    other => {
                        return Err(Error::MalformedHeader(format!(
                            "unknown PLY format {other:?}"
                        )))
                    }
                });
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::MalformedHeader("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<u64>().ok())
                    .ok_or_else(|| Error::MalformedHeader(format!("bad count for {name}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::MalformedHeader("property before element".into()))?;
                let ty = tok
                    .next()
                    .ok_or_else(|| Error::MalformedHeader("property without type".into()))?;
                let prop = if ty == "list" {
                    let (count_ty, item_ty) = (tok.next(), tok.next());
                    if count_ty.and_then(parse_scalar).is_none()
                        || item_ty.and_then(parse_scalar).is_none()
                    {
                        return Err(Error::MalformedHeader("bad list property".into()));
                    }
                    Property {
                        name: tok.next().unwrap_or_default().to_string(),
                        scalar: None,
                    }
                } else {
                    let scalar = parse_scalar(ty).ok_or_else(|| {
                        Error::MalformedHeader(format!("unknown property type {ty}"))
                    })?;
                    Property {
                        name: tok
                            .next()
                            .ok_or_else(|| Error::MalformedHeader("property without name".into()))?
                            .to_string(),
                        scalar: Some(scalar),
                    }
                };
                el.props.push(prop);
            }
            Some("comment") | Some("obj_info") | Some("end_header") | None => {}
            Some(other) => {
                return Err(Error::MalformedHeader(format!("unexpected keyword {other}")));
            }
        }
    }

    let encoding = encoding.ok_or_else(|| Error::MalformedHeader("missing format line".into()))?;
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::MalformedHeader("no vertex element".into()))?;
    let vertex = &elements[vi];

    let mut bindings = Vec::new();
    let mut offset = 0usize;
    for (column, p) in vertex.props.iter().enumerate() {
        let Some(scalar) = p.scalar else {
            return Err(Error::UnsupportedFormat(format!(
                "list property {} on vertex element",
                p.name
            )));
        };
        if let Some(attribute) = canonical(&p.name) {
            if bindings.iter().all(|b: &AttributeBinding| b.attribute != attribute) {
                bindings.push(AttributeBinding {
                    source: p.name.clone(),
                    attribute,
                    offset: if encoding == PlyEncoding::Ascii { column } else { offset },
                    scalar,
                });
            }
        }
        offset += scalar.size();
    }
    for a in [Attribute::X, Attribute::Y, Attribute::Z] {
        if !bindings.iter().any(|b| b.attribute == a) {
            return Err(Error::UnsupportedFormat(format!(
                "vertex element lacks {a:?} position property"
            )));
        }
    }

    let header_len = end as u64;
    let (data_start, stride, lines_before) = match encoding {
        PlyEncoding::BinaryLe => {
            let mut skip = 0u64;
            for e in &elements[..vi] {
                let size = e.fixed_size().ok_or_else(|| {
                    Error::UnsupportedFormat(format!(
                        "variable-size element {} precedes vertex data",
                        e.name
                    ))
                })?;
                skip += size as u64 * e.count;
            }
            (header_len + skip, offset, 0)
        }
        PlyEncoding::Ascii => {
            let lines = elements[..vi].iter().map(|e| e.count).sum();
            (header_len, vertex.props.len(), lines)
        }
    };

    Ok(PlyHeader {
        encoding,
        vertex_count: vertex.count,
        data_start,
        stride,
        lines_before_vertex: lines_before,
        bindings,
    })
}

fn find_end_header(bytes: &[u8]) -> Result<usize> {
    const MARK: &[u8] = b"end_header";
    let limit = bytes.len().min(MAX_HEADER_BYTES);
    let hay = &bytes[..limit];
    let pos = hay
        .windows(MARK.len())
        .position(|w| w == MARK)
        .ok_or_else(|| Error::MalformedHeader("PLY header truncated (no end_header)".into()))?;
    let mut end = pos + MARK.len();
    if hay.get(end) == Some(&b'\r') {
        end += 1;
    }
    if hay.get(end) != Some(&b'\n') {
        return Err(Error::MalformedHeader("end_header not followed by newline".into()));
    }
    Ok(end + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(body: &str) -> Result<PlyHeader> {
        parse_header(body.as_bytes())
    }

    #[test]
    fn binary_layout_offsets() {
        let text = "ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 51161407\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        let text_len = text.len() as u64;
        let h = header(text).unwrap();
        assert_eq!(h.vertex_count, 51_161_407);
        assert_eq!(h.stride, 15);
        let red = h.bindings.iter().find(|b| b.attribute == Attribute::Red).unwrap();
        assert_eq!(red.offset, 12);
        assert_eq!(h.data_start, text_len);
    }

    #[test]
    fn big_endian_rejected() {
        let err = header("ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n");
        assert!(matches!(err, Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn truncated_header() {
        let err = header("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n");
        assert!(matches!(err, Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn missing_positions() {
        let err = header("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n");
        assert!(matches!(err, Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn fixed_elements_before_vertex_are_skipped() {
        let text = "ply\nformat binary_little_endian 1.0\nelement camera 2\nproperty double k\n\
             element vertex 3\nproperty double x\nproperty double y\nproperty double z\n\
             element face 1\nproperty list uchar int vertex_indices\nend_header\n";
        let text_len = text.len() as u64;
        let h = header(text).unwrap();
        assert_eq!(h.data_start, text_len + 16);
        assert_eq!(h.stride, 24);
    }

    #[test]
    fn crlf_header() {
        let h = header("ply\r\nformat ascii 1.0\r\nelement vertex 0\r\nproperty float x\r\nproperty float y\r\nproperty float z\r\nend_header\r\n").unwrap();
        assert_eq!(h.vertex_count, 0);
        assert_eq!(h.stride, 3);
    }
}
