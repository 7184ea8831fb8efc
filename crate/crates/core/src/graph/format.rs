//! Binary graph artifacts and text edge-list import.
//!
//! ```text
//! graph     "TMAG" version:u16 |V|:u64 2|E|:u64 offsets:[u64; |V|+1] neighbors:[u32; 2|E|]
//! features  "TMAF" |V|:u64 F:u32 values:[f32; |V|*F]             (row-major)
//! labels    "TMAL" |V|:u64 k:u16 labels:[u16; |V|]
//! splits    "TMAS" train val test negatives
//!           where each edge section is  count:u64 pairs:[(u32, u32); count]
//!           and negatives is            K:u32 val:[u32; |val|*K] test:[u32; |test|*K]
//! ```
//!
//! All integers are little-endian.

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{EdgeSplits, FeatureMatrix, Graph, GraphError, NodeId, NodeLabels};
use crate::io::{invalid, read_file, write_file, FormatError, Reader, Writer};

const GRAPH_MAGIC: &[u8; 4] = b"TMAG";
const GRAPH_VERSION: u16 = 1;
const FEATURE_MAGIC: &[u8; 4] = b"TMAF";
const LABEL_MAGIC: &[u8; 4] = b"TMAL";
const SPLIT_MAGIC: &[u8; 4] = b"TMAS";

pub(crate) fn encode_graph(g: &Graph) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(GRAPH_MAGIC);
    w.u16(GRAPH_VERSION);
    w.u64(g.num_nodes() as u64);
    w.u64(g.neighbor_array().len() as u64);
    for &o in g.offsets() {
        w.u64(o as u64);
    }
    for &v in g.neighbor_array() {
        w.u32(v);
    }
    w.buf
}

pub(crate) fn decode_graph(buf: &[u8]) -> Result<Graph, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(GRAPH_MAGIC)?;
    let version = r.u16()?;
    if version != GRAPH_VERSION {
        return Err(FormatError::UnsupportedVersion {
            format: "graph",
            version,
        });
    }
    let at = r.offset();
    let n = r.u64()? as usize;
    let nnz = r.u64()? as usize;
    let need = n
        .checked_add(1)
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(nnz.checked_mul(4)?))
        .ok_or_else(|| invalid(at, "header sizes overflow"))?;
    if need > r.remaining() {
        return Err(FormatError::Truncated {
            offset: buf.len(),
            needed: need - r.remaining(),
        });
    }
    let offsets_at = r.offset();
    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(r.u64()? as usize);
    }
    let neighbors_at = r.offset();
    let mut neighbors = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        neighbors.push(r.u32()?);
    }
    r.finish()?;
    if offsets.last() != Some(&nnz) {
        return Err(invalid(offsets_at + 8 * n, "last offset does not equal 2|E|"));
    }
    if let Some(v) = (0..n).find(|&v| offsets[v + 1] < offsets[v]) {
        return Err(invalid(offsets_at + 8 * (v + 1), format!("node {v}: offsets decrease")));
    }
    Graph::from_csr(offsets.clone(), neighbors).map_err(|reason| {
        // Point at the first neighbor entry of the offending node when the
        // message names one.
        let at = reason
            .strip_prefix("node ")
            .and_then(|s| s.split(':').next())
            .and_then(|s| s.parse::<usize>().ok())
            .map(|v| neighbors_at + 4 * offsets[v])
            .unwrap_or(neighbors_at);
        invalid(at, reason)
    })
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<(), GraphError> {
    Ok(write_file(path, &encode_graph(g))?)
}

pub fn load_graph(path: &Path) -> Result<Graph, GraphError> {
    Ok(decode_graph(&read_file(path)?)?)
}

pub fn save_features(x: &FeatureMatrix, path: &Path) -> Result<(), GraphError> {
    let mut w = Writer::default();
    w.bytes(FEATURE_MAGIC);
    w.u64(x.rows() as u64);
    w.u32(x.cols() as u32);
    for &v in x.values() {
        w.f32(v);
    }
    Ok(write_file(path, &w.buf)?)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix, GraphError> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf);
    r.magic(FEATURE_MAGIC)?;
    let rows = r.u64()? as usize;
    let cols = r.u32()? as usize;
    let at = r.offset();
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(at, "feature shape overflows"))?;
    if count.saturating_mul(4) > r.remaining() {
        return Err(FormatError::Truncated {
            offset: buf.len(),
            needed: count * 4 - r.remaining(),
        }
        .into());
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(r.f32()?);
    }
    r.finish()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(at + 4 * i, "non-finite feature value").into());
    }
    FeatureMatrix::new(rows, cols, values)
}

pub fn save_labels(y: &NodeLabels, path: &Path) -> Result<(), GraphError> {
    let mut w = Writer::default();
    w.bytes(LABEL_MAGIC);
    w.u64(y.len() as u64);
    w.u16(y.num_classes() as u16);
    for &l in y.as_slice() {
        w.u16(l);
    }
    Ok(write_file(path, &w.buf)?)
}

pub fn load_labels(path: &Path) -> Result<NodeLabels, GraphError> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf);
    r.magic(LABEL_MAGIC)?;
    let n = r.u64()? as usize;
    let k = r.u16()?;
    let at = r.offset();
    let mut labels = Vec::with_capacity(n.min(r.remaining() / 2));
    for _ in 0..n {
        labels.push(r.u16()?);
    }
    r.finish()?;
    if let Some(v) = labels.iter().position(|&y| y >= k) {
        return Err(invalid(at + 2 * v, format!("node {v}: label not below {k}")).into());
    }
    NodeLabels::new(labels, k)
}

fn write_edges(w: &mut Writer, edges: &[(NodeId, NodeId)]) {
    w.u64(edges.len() as u64);
    for &(u, v) in edges {
        w.u32(u);
        w.u32(v);
    }
}

fn read_edges(r: &mut Reader<'_>) -> Result<Vec<(NodeId, NodeId)>, FormatError> {
    let len = r.len_prefix(8)?;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push((r.u32()?, r.u32()?));
    }
    Ok(out)
}

pub(crate) fn encode_splits(s: &EdgeSplits) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(SPLIT_MAGIC);
    write_edges(&mut w, &s.train);
    write_edges(&mut w, &s.val);
    write_edges(&mut w, &s.test);
    w.u32(s.k as u32);
    for &v in s.val_negatives.iter().chain(&s.test_negatives) {
        w.u32(v);
    }
    w.buf
}

pub(crate) fn decode_splits(buf: &[u8]) -> Result<EdgeSplits, FormatError> {
    let mut r = Reader::new(buf);
    r.magic(SPLIT_MAGIC)?;
    let train = read_edges(&mut r)?;
    let val = read_edges(&mut r)?;
    let test = read_edges(&mut r)?;
    let k = r.u32()? as usize;
    let mut read_negs = |count: usize| -> Result<Vec<NodeId>, FormatError> {
        let mut out = Vec::with_capacity(count.min(r.remaining() / 4));
        for _ in 0..count {
            out.push(r.u32()?);
        }
        Ok(out)
    };
    let val_negatives = read_negs(val.len() * k)?;
    let test_negatives = read_negs(test.len() * k)?;
    r.finish()?;
    Ok(EdgeSplits {
        train,
        val,
        test,
        k,
        val_negatives,
        test_negatives,
    })
}

pub fn save_splits(s: &EdgeSplits, path: &Path) -> Result<(), GraphError> {
    Ok(write_file(path, &encode_splits(s))?)
}

pub fn load_splits(path: &Path) -> Result<EdgeSplits, GraphError> {
    Ok(decode_splits(&read_file(path)?)?)
}

/// Reads a whitespace-separated `u v` edge list. Blank lines and lines
/// starting with `#` are skipped. When `num_nodes` is `None` the node count
/// is one past the largest id seen.
pub fn read_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Graph, GraphError> {
    let file = std::fs::File::open(path).map_err(FormatError::from)?;
    let mut edges = Vec::new();
    let mut max_id = None::<NodeId>;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(FormatError::from)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let text_err = |reason: String| FormatError::Text { line: i + 1, reason };
        let mut parts = line.split_whitespace();
        let mut id = || -> Result<NodeId, FormatError> {
            let tok = parts
                .next()
                .ok_or_else(|| text_err("expected two node ids".into()))?;
            tok.parse::<NodeId>()
                .map_err(|e| text_err(format!("bad node id {tok:?}: {e}")))
        };
        let (u, v) = (id()?, id()?);
        if parts.next().is_some() {
            return Err(text_err("trailing tokens".into()).into());
        }
        if u == v {
            return Err(text_err(format!("self-loop on node {u}")).into());
        }
        max_id = max_id.max(Some(u.max(v)));
        edges.push((u, v));
    }
    let n = num_nodes.unwrap_or(max_id.map_or(0, |m| m as usize + 1));
    Graph::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_splits, generate_synthetic, SplitSpec, SyntheticSpec};

    fn sample() -> crate::graph::SyntheticGraph {
        generate_synthetic(&SyntheticSpec {
            num_nodes: 200,
            mean_degree: 5.0,
            homophily: 0.7,
            classes: 2,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn graph_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        let p = dir.path().join("g.tmag");
        save_graph(&g.graph, &p).unwrap();
        assert_eq!(load_graph(&p).unwrap(), g.graph);

        save_features(&g.features, &dir.path().join("x")).unwrap();
        assert_eq!(load_features(&dir.path().join("x")).unwrap(), g.features);
        save_labels(&g.labels, &dir.path().join("y")).unwrap();
        assert_eq!(load_labels(&dir.path().join("y")).unwrap(), g.labels);

        let (_, splits) = build_splits(
            &g.graph,
            &SplitSpec {
                val_frac: 0.1,
                test_frac: 0.1,
                negatives: 7,
                seed: 0,
            },
        )
        .unwrap();
        save_splits(&splits, &dir.path().join("s")).unwrap();
        assert_eq!(load_splits(&dir.path().join("s")).unwrap(), splits);
    }

    #[test]
    fn empty_edge_set() {
        let g = Graph::empty(5);
        let back = decode_graph(&encode_graph(&g)).unwrap();
        assert_eq!(back.num_nodes(), 5);
        assert_eq!(back.num_edges(), 0);
    }

    #[test]
    fn header_layout_is_fixed() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let bytes = encode_graph(&g);
        let mut expected = b"TMAG".to_vec();
        expected.extend(1u16.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        for o in [0u64, 1, 2] {
            expected.extend(o.to_le_bytes());
        }
        expected.extend(1u32.to_le_bytes());
        expected.extend(0u32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let bytes = encode_graph(&sample().graph);
        let cut = &bytes[..bytes.len() - 3];
        match decode_graph(cut) {
            Err(FormatError::Truncated { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("unexpected {other:?}"),
        }
        match decode_graph(&bytes[..10]) {
            Err(FormatError::Truncated { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_and_unsorted_rejected() {
        // 0 -> 1 stored without 1 -> 0.
        let mut w = Writer::default();
        w.bytes(b"TMAG");
        w.u16(1);
        w.u64(2);
        w.u64(1);
        for o in [0u64, 1, 1] {
            w.u64(o);
        }
        w.u32(1);
        let err = decode_graph(&w.buf).unwrap_err();
        assert!(err.to_string().contains("node 0"), "{err}");

        let mut w = Writer::default();
        w.bytes(b"TMAG");
        w.u16(1);
        w.u64(3);
        w.u64(4);
        for o in [0u64, 2, 3, 4] {
            w.u64(o);
        }
        for v in [2u32, 1, 0, 0] {
            w.u32(v);
        }
        let err = decode_graph(&w.buf).unwrap_err();
        assert!(err.to_string().contains("not sorted"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_graph(&Graph::empty(1));
        bytes[3] = b'X';
        assert!(matches!(decode_graph(&bytes), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn edge_list_import() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "# comment\n0 1\n1 2\n\n2 0\n1 0\n").unwrap();
        let g = read_edge_list(&p, None).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 3);
        std::fs::write(&p, "0 1\n1 x\n").unwrap();
        let err = read_edge_list(&p, None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
