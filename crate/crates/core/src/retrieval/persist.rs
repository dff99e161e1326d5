use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::index::{IndexError, IndexedChunk, VectorIndex};

pub const MAGIC: &[u8; 5] = b"IKGX1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io { path: path.display().to_string(), source }
}

impl VectorIndex {
    /// Layout: magic, D as u32 LE, count as u64 LE, then per entry a u32 LE
    /// byte length, the UTF-8 chunk id, and D f32 LE components.
    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let entries = self.entries();
        out.write_all(MAGIC)?;
        out.write_all(&(self.dimension() as u32).to_le_bytes())?;
        out.write_all(&(entries.len() as u64).to_le_bytes())?;
        for e in &entries {
            out.write_all(&(e.chunk_id.len() as u32).to_le_bytes())?;
            out.write_all(e.chunk_id.as_bytes())?;
            for c in &e.vector {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from(input: &mut impl Read) -> Result<VectorIndex, IndexError> {
        let fmt = |what: &str| IndexError::Format(what.to_string());
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic).map_err(|_| fmt("missing header"))?;
        if &magic != MAGIC {
            return Err(fmt("bad magic bytes"));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        input.read_exact(&mut u32b).map_err(|_| fmt("missing dimension"))?;
        let dimension = u32::from_le_bytes(u32b) as usize;
        if dimension == 0 {
            return Err(fmt("dimension is zero"));
        }
        input.read_exact(&mut u64b).map_err(|_| fmt("missing count"))?;
        let count = u64::from_le_bytes(u64b);
        let index = VectorIndex::new(dimension);
        for n in 0..count {
            let truncated = |_| IndexError::Format(format!("record {n} truncated"));
            input.read_exact(&mut u32b).map_err(truncated)?;
            let mut id = vec![0u8; u32::from_le_bytes(u32b) as usize];
            input.read_exact(&mut id).map_err(truncated)?;
            let chunk_id = String::from_utf8(id).map_err(|_| IndexError::Format(format!("record {n}: id is not UTF-8")))?;
            let mut vector = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                input.read_exact(&mut u32b).map_err(truncated)?;
                vector.push(f32::from_le_bytes(u32b));
            }
            let doc_id = IndexedChunk::doc_of(&chunk_id).to_string();
            index.insert(IndexedChunk { chunk_id, doc_id, vector })?;
        }
        if input.read(&mut [0u8; 1]).map_err(|e| IndexError::Format(e.to_string()))? != 0 {
            return Err(fmt("trailing bytes after last record"));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<VectorIndex, IndexError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;

    fn sample() -> VectorIndex {
        let e = HashingEmbedder::new(16);
        let idx = VectorIndex::new(16);
        for (i, t) in ["alpha beta", "gamma", "delta epsilon zeta", "\u{b5}g/L"].iter().enumerate() {
            idx.add(&format!("doc-\u{e9}#{i:04}"), &e.embed_text(t)).unwrap();
        }
        idx
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let idx = sample();
        let mut bytes = Vec::new();
        idx.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..5], b"IKGX1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 4);
        let back = VectorIndex::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.entries(), idx.entries());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.ikgx");
        let idx = sample();
        idx.save(&path).unwrap();
        let back = VectorIndex::load(&path).unwrap();
        let q = HashingEmbedder::new(16).embed_text("gamma");
        assert_eq!(back.search(&q, 4).unwrap(), idx.search(&q, 4).unwrap());
    }

    #[test]
    fn corrupt_inputs() {
        let mut bytes = Vec::new();
        sample().write_to(&mut bytes).unwrap();
        assert!(matches!(VectorIndex::read_from(&mut &b"IKGX2"[..]), Err(IndexError::Format(_))));
        assert!(matches!(VectorIndex::read_from(&mut &bytes[..bytes.len() - 1]), Err(IndexError::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(VectorIndex::read_from(&mut extra.as_slice()), Err(IndexError::Format(_))));
    }

    #[test]
    fn empty_index_round_trips() {
        let mut bytes = Vec::new();
        VectorIndex::new(8).write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 17);
        assert!(VectorIndex::read_from(&mut bytes.as_slice()).unwrap().is_empty());
    }
}
