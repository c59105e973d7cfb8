//! MetaImage (`.mhd` header + `.raw` payload) reader and writer.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::{voxel_count, Role, Shape, Spacing, Volume};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    Float,
    UInt,
}

impl ElementType {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_FLOAT" => Ok(ElementType::Float),
            "MET_UINT" => Ok(ElementType::UInt),
            other => Err(Error::UnsupportedElementType(other.to_string())),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float | ElementType::UInt => 4,
        }
    }

    /// Storage type used when writing a volume of `role`.
    pub fn for_role(role: Role) -> Self {
        match role {
            Role::Binary => ElementType::UChar,
            Role::Label => ElementType::UInt,
            Role::Probability | Role::Intensity => ElementType::Float,
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
            ElementType::UInt => "MET_UINT",
        })
    }
}

/// Parsed header. All `key = value` pairs are kept in file order, including
/// keys this crate does not interpret.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaHeader {
    pub entries: Vec<(String, String)>,
}

impl MetaHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|line| {
                let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidHeader {
                    key: line.to_string(),
                    value: "missing `=`".to_string(),
                })?;
                Ok((k.trim().to_string(), v.trim().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaHeader { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::MissingHeaderKey(key.to_string()))
    }

    fn triple<T: std::str::FromStr>(&self, key: &str) -> Result<[T; 3]> {
        let raw = self.require(key)?;
        let bad = || Error::InvalidHeader {
            key: key.to_string(),
            value: raw.to_string(),
        };
        let parts = raw
            .split_whitespace()
            .map(|p| p.parse::<T>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let [a, b, c]: [T; 3] = parts.try_into().map_err(|_| bad())?;
        Ok([a, b, c])
    }

    pub fn ndims(&self) -> Result<usize> {
        let raw = self.require("NDims")?;
        raw.parse().map_err(|_| Error::InvalidHeader {
            key: "NDims".into(),
            value: raw.into(),
        })
    }

    /// `(nz, ny, nx)`; the header stores `nx ny nz`.
    pub fn shape(&self) -> Result<Shape> {
        let [nx, ny, nz] = self.triple::<usize>("DimSize")?;
        Ok([nz, ny, nx])
    }

    /// `(sz, sy, sx)`; the header stores `sx sy sz`.
    pub fn spacing(&self) -> Result<Spacing> {
        let [sx, sy, sz] = self.triple::<f64>("ElementSpacing")?;
        Ok([sz, sy, sx])
    }

    pub fn element_type(&self) -> Result<ElementType> {
        ElementType::parse(self.require("ElementType")?)
    }

    pub fn data_file(&self) -> Result<&str> {
        self.require("ElementDataFile")
    }

    fn big_endian(&self) -> bool {
        ["BinaryDataByteOrderMSB", "ElementByteOrderMSB"]
            .iter()
            .any(|k| self.get(k).is_some_and(|v| v.eq_ignore_ascii_case("true")))
    }
}

pub fn read_header(path: &Path) -> Result<MetaHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetaHeader::parse(&text)
}

/// Reads a `.mhd`/`.raw` pair.
///
/// With `hint = None` the role is inferred: `MET_UCHAR` is binary when every
/// value is 0/1 and a label map otherwise, `MET_FLOAT` is a probability map
/// when every value lies in `[0, 1]` and an intensity image otherwise,
/// `MET_SHORT` is intensity and `MET_UINT` is a label map.
pub fn load_volume(path: &Path, hint: Option<Role>) -> Result<Volume> {
    let header = read_header(path)?;
    let ndims = header.ndims()?;
    if ndims != 3 {
        return Err(Error::InvalidHeader {
            key: "NDims".into(),
            value: ndims.to_string(),
        });
    }
    if header
        .get("CompressedData")
        .is_some_and(|v| v.eq_ignore_ascii_case("true"))
    {
        return Err(Error::InvalidHeader {
            key: "CompressedData".into(),
            value: "True".into(),
        });
    }
    let shape = header.shape()?;
    let spacing = header.spacing()?;
    let etype = header.element_type()?;
    let data_file = header.data_file()?;
    if data_file.eq_ignore_ascii_case("LOCAL") {
        return Err(Error::InvalidHeader {
            key: "ElementDataFile".into(),
            value: data_file.into(),
        });
    }
    let raw_path = path.parent().unwrap_or(Path::new(".")).join(data_file);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;

    let n = voxel_count(shape);
    let expected = n * etype.size();
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let data = decode(&bytes, etype, header.big_endian());

    let role = hint.unwrap_or_else(|| infer_role(etype, &data));
    Volume::new(shape, spacing, data, role)
}

fn decode(bytes: &[u8], etype: ElementType, big_endian: bool) -> Vec<f32> {
    macro_rules! words {
        ($ty:ty, $n:literal) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let w: [u8; $n] = c.try_into().unwrap();
                    if big_endian {
                        <$ty>::from_be_bytes(w) as f32
                    } else {
                        <$ty>::from_le_bytes(w) as f32
                    }
                })
                .collect()
        };
    }
    match etype {
        ElementType::UChar => bytes.iter().map(|b| *b as f32).collect(),
        ElementType::Short => words!(i16, 2),
        ElementType::Float => words!(f32, 4),
        ElementType::UInt => words!(u32, 4),
    }
}

fn infer_role(etype: ElementType, data: &[f32]) -> Role {
    match etype {
        ElementType::UChar if data.iter().all(|v| Role::Binary.admits(*v)) => Role::Binary,
        ElementType::UChar | ElementType::UInt => Role::Label,
        ElementType::Float if data.iter().all(|v| Role::Probability.admits(*v)) => Role::Probability,
        ElementType::Float | ElementType::Short => Role::Intensity,
    }
}

fn raw_path_for(path: &Path) -> PathBuf {
    path.with_extension("raw")
}

/// Writes `path` (header) and a sibling `.raw` payload.
pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    let etype = ElementType::for_role(v.role());
    let raw_path = raw_path_for(path);
    let raw_name = raw_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?
        .to_string();

    let [nz, ny, nx] = v.shape();
    let [sz, sy, sx] = v.spacing();
    let header = format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         DimSize = {nx} {ny} {nz}\n\
         ElementSpacing = {sx} {sy} {sz}\n\
         ElementType = {etype}\n\
         ElementDataFile = {raw_name}\n"
    );

    let mut bytes = Vec::with_capacity(v.len() * etype.size());
    match etype {
        ElementType::UChar => bytes.extend(v.data().iter().map(|x| *x as u8)),
        ElementType::Short => v.data().iter().for_each(|x| bytes.extend((*x as i16).to_le_bytes())),
        ElementType::Float => v.data().iter().for_each(|x| bytes.extend(x.to_le_bytes())),
        ElementType::UInt => v.data().iter().for_each(|x| bytes.extend((*x as u32).to_le_bytes())),
    }

    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(dir: &Path, header: &str, raw: &[u8]) -> PathBuf {
        let p = dir.join("case.mhd");
        fs::write(&p, header).unwrap();
        fs::write(dir.join("case.raw"), raw).unwrap();
        p
    }

    const HDR_2: &str = "NDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\n\
                         ElementSpacing = 1 1 1\nElementDataFile = case.raw\n";

    #[test]
    fn zeros_uchar() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), HDR_2, &[0u8; 8]);
        let v = load_volume(&p, None).unwrap();
        assert_eq!(v.shape(), [2, 2, 2]);
        assert_eq!(v.role(), Role::Binary);
        assert!(v.data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = HDR_2.replace("2 2 2", "4 4 4");
        let p = write_pair(dir.path(), &hdr, &[0u8; 63]);
        assert!(matches!(
            load_volume(&p, None),
            Err(Error::SizeMismatch {
                expected: 64,
                actual: 63
            })
        ));
    }

    #[test]
    fn missing_key_and_bad_type() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), &HDR_2.replace("ElementSpacing = 1 1 1\n", ""), &[0u8; 8]);
        assert!(matches!(load_volume(&p, None), Err(Error::MissingHeaderKey(k)) if k == "ElementSpacing"));

        let p = write_pair(dir.path(), &HDR_2.replace("MET_UCHAR", "MET_DOUBLE"), &[0u8; 8]);
        assert!(matches!(load_volume(&p, None), Err(Error::UnsupportedElementType(_))));
    }

    #[test]
    fn unknown_keys_are_kept() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = format!("{HDR_2}AnatomicalOrientation = RAI\n");
        let p = write_pair(dir.path(), &hdr, &[1u8; 8]);
        assert_eq!(read_header(&p).unwrap().get("AnatomicalOrientation"), Some("RAI"));
        assert_eq!(load_volume(&p, None).unwrap().foreground_count(), 8);
    }

    #[test]
    fn axis_order_on_disk() {
        // DimSize is nx ny nz; x varies fastest in the payload.
        let dir = tempfile::tempdir().unwrap();
        let hdr = "NDims = 3\nDimSize = 3 2 1\nElementType = MET_UCHAR\n\
                   ElementSpacing = 0.5 0.7 2.5\nElementDataFile = case.raw\n";
        let p = write_pair(dir.path(), hdr, &[0, 1, 2, 3, 4, 5]);
        let v = load_volume(&p, None).unwrap();
        assert_eq!(v.shape(), [1, 2, 3]);
        assert_eq!(v.spacing(), [2.5, 0.7, 0.5]);
        assert_eq!(v.get([0, 1, 0]), 3.0);
        assert_eq!(v.role(), Role::Label);
    }

    #[test]
    fn element_type_per_role() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            (Role::Probability, "MET_FLOAT"),
            (Role::Binary, "MET_UCHAR"),
            (Role::Label, "MET_UINT"),
            (Role::Intensity, "MET_FLOAT"),
        ];
        for (role, et) in cases {
            let v = Volume::zeros([2, 3, 4], [0.5, 0.75, 1.25], role);
            let p = dir.path().join(format!("{role}.mhd"));
            save_volume(&v, &p).unwrap();
            assert_eq!(read_header(&p).unwrap().get("ElementType"), Some(et));
            assert_eq!(load_volume(&p, Some(role)).unwrap(), v);
        }
    }

    #[test]
    fn big_endian_short() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = "NDims = 3\nDimSize = 2 1 1\nElementType = MET_SHORT\nBinaryDataByteOrderMSB = True\n\
                   ElementSpacing = 1 1 1\nElementDataFile = case.raw\n";
        let p = write_pair(dir.path(), hdr, &[0xFF, 0x38, 0x00, 0x10]);
        let v = load_volume(&p, None).unwrap();
        assert_eq!(v.data(), &[-200.0, 16.0]);
        assert_eq!(v.role(), Role::Intensity);
    }
}
