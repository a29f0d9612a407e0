//! Binary model archive.
//!
//! All integers and floats are little-endian with fixed widths. Layout:
//!
//! ```text
//! magic          8 bytes  "KFMODEL\0"
//! schema_version u32      currently 1
//! sections, in this order, each `tag[4] | payload_len u64 | payload`:
//!   META  n u64, p u64, seed u64, tree_count u32, max_depth u32 (0xFFFFFFFF = unlimited),
//!         mtry u32, min_node_size u32, bootstrap u8, default_bandwidth f64
//!   TREE  tree_count u32, then per tree: node_count c u32 followed by the
//!         column arrays depth u32[c], feature i32[c] (-1 for leaves),
//!         threshold f64[c], left u32[c], right u32[c],
//!         leaf_id u32[c] (0xFFFFFFFF for splits), leaf_mean f64[c], sample_count u32[c]
//!   LEAF  rows u64, trees u64, leaf ids u32[rows * trees] in row-major order
//!   RESP  n u64, responses f64[n]
//!   ORDR  n u64, ascending-response permutation u32[n]
//!   END.  empty
//! ```
//!
//! Path tables and MRCA lookups are rebuilt on load.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams, LeafMatrix, NodeKind, Tree, TreeNode};
use crate::predictor::{FittedModel, ResponseTable};
use crate::rng::SeedSpec;

pub const MAGIC: &[u8; 8] = b"KFMODEL\0";
pub const SCHEMA_VERSION: u32 = 1;
const SECTIONS: [&str; 6] = ["META", "TREE", "LEAF", "RESP", "ORDR", "END."];
const NONE_U32: u32 = u32::MAX;

pub fn save(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<FittedModel> {
    from_bytes(&std::fs::read(path)?)
}

pub fn to_bytes(model: &FittedModel) -> Vec<u8> {
    let forest = model.forest();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());

    let mut meta = Writer::default();
    meta.u64(model.n_train() as u64);
    meta.u64(forest.n_features as u64);
    meta.u64(forest.seed.master());
    meta.u32(forest.tree_count() as u32);
    meta.u32(forest.params.max_depth.unwrap_or(NONE_U32));
    meta.u32(forest.params.mtry.map_or(NONE_U32, |m| m as u32));
    meta.u32(forest.params.min_node_size as u32);
    meta.buf.push(forest.params.bootstrap as u8);
    meta.f64(model.default_bandwidth());
    section(&mut out, "META", &meta.buf);

    let mut trees = Writer::default();
    trees.u32(forest.tree_count() as u32);
    for tree in &forest.trees {
        let nodes = tree.nodes();
        trees.u32(nodes.len() as u32);
        for n in nodes {
            trees.u32(n.depth);
        }
        for n in nodes {
            let f = match n.kind {
                NodeKind::Split { feature, .. } => feature as i32,
                NodeKind::Leaf { .. } => -1,
            };
            trees.buf.extend_from_slice(&f.to_le_bytes());
        }
        for n in nodes {
            trees.f64(match n.kind {
                NodeKind::Split { threshold, .. } => threshold,
                NodeKind::Leaf { .. } => 0.0,
            });
        }
        for n in nodes {
            trees.u32(match n.kind {
                NodeKind::Split { left, .. } => left,
                NodeKind::Leaf { .. } => 0,
            });
        }
        for n in nodes {
            trees.u32(match n.kind {
                NodeKind::Split { right, .. } => right,
                NodeKind::Leaf { .. } => 0,
            });
        }
        for n in nodes {
            trees.u32(match n.kind {
                NodeKind::Leaf { leaf_id, .. } => leaf_id,
                NodeKind::Split { .. } => NONE_U32,
            });
        }
        for n in nodes {
            trees.f64(match n.kind {
                NodeKind::Leaf { mean_response, .. } => mean_response,
                NodeKind::Split { .. } => 0.0,
            });
        }
        for n in nodes {
            trees.u32(match n.kind {
                NodeKind::Leaf { sample_count, .. } => sample_count,
                NodeKind::Split { .. } => 0,
            });
        }
    }
    section(&mut out, "TREE", &trees.buf);

    let lm = model.leaf_matrix();
    let mut leaf = Writer::default();
    leaf.u64(lm.rows() as u64);
    leaf.u64(lm.trees() as u64);
    for v in lm.to_row_major() {
        leaf.u32(v);
    }
    section(&mut out, "LEAF", &leaf.buf);

    let resp = model.responses();
    let mut y = Writer::default();
    y.u64(resp.len() as u64);
    for &v in resp.values() {
        y.f64(v);
    }
    section(&mut out, "RESP", &y.buf);

    let mut ord = Writer::default();
    ord.u64(resp.len() as u64);
    for &o in resp.order() {
        ord.u32(o);
    }
    section(&mut out, "ORDR", &ord.buf);
    section(&mut out, "END.", &[]);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<FittedModel> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut head = Reader::new(&bytes[8..], "header");
    let version = head.u32()?;
    if version != SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    let mut rest = &bytes[12..];
    let mut payloads = Vec::with_capacity(SECTIONS.len());
    for name in SECTIONS {
        let corrupt = |reason: &str| Error::CorruptSection {
            section: name.to_string(),
            reason: reason.to_string(),
        };
        if rest.len() < 12 {
            return Err(corrupt("truncated section header"));
        }
        if &rest[..4] != name.as_bytes() {
            return Err(corrupt("unexpected section tag"));
        }
        let len = u64::from_le_bytes(rest[4..12].try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| corrupt("length overflow"))?;
        if rest.len() - 12 < len {
            return Err(corrupt("truncated payload"));
        }
        payloads.push(&rest[12..12 + len]);
        rest = &rest[12 + len..];
    }
    if !rest.is_empty() {
        return Err(Error::CorruptSection {
            section: "END.".into(),
            reason: "trailing bytes".into(),
        });
    }

    let mut meta = Reader::new(payloads[0], "META");
    let n = meta.len_u64()?;
    let p = meta.len_u64()?;
    let seed = SeedSpec(meta.u64()?);
    let tree_count = meta.u32()? as usize;
    let max_depth = Some(meta.u32()?).filter(|&d| d != NONE_U32);
    let mtry = Some(meta.u32()?).filter(|&m| m != NONE_U32).map(|m| m as usize);
    let min_node_size = meta.u32()? as usize;
    let bootstrap = match meta.u8()? {
        0 => false,
        1 => true,
        _ => return Err(meta.corrupt("bootstrap flag is not 0/1")),
    };
    let bandwidth = meta.f64()?;
    meta.finish()?;
    let params = ForestParams {
        tree_count,
        max_depth,
        mtry,
        min_node_size,
        bootstrap,
    };
    params.validate().map_err(|e| meta.corrupt(&e.to_string()))?;

    let mut tr = Reader::new(payloads[1], "TREE");
    if tr.u32()? as usize != tree_count {
        return Err(tr.corrupt("tree count disagrees with META"));
    }
    let mut trees = Vec::with_capacity(tree_count);
    for _ in 0..tree_count {
        let c = tr.u32()? as usize;
        let depth = tr.many(c, Reader::u32)?;
        let feature = tr.many(c, Reader::i32)?;
        let threshold = tr.many(c, Reader::f64)?;
        let left = tr.many(c, Reader::u32)?;
        let right = tr.many(c, Reader::u32)?;
        let leaf_id = tr.many(c, Reader::u32)?;
        let leaf_mean = tr.many(c, Reader::f64)?;
        let count = tr.many(c, Reader::u32)?;
        let nodes = (0..c)
            .map(|i| TreeNode {
                depth: depth[i],
                kind: if feature[i] < 0 {
                    NodeKind::Leaf {
                        leaf_id: leaf_id[i],
                        mean_response: leaf_mean[i],
                        sample_count: count[i],
                    }
                } else {
                    NodeKind::Split {
                        feature: feature[i] as u32,
                        threshold: threshold[i],
                        left: left[i],
                        right: right[i],
                    }
                },
            })
            .collect();
        let tree = Tree::from_nodes(nodes, p).map_err(|e| tr.corrupt(&e.to_string()))?;
        if let Some(d) = max_depth {
            if tree.depth() > d {
                return Err(tr.corrupt("tree deeper than max_depth"));
            }
        }
        trees.push(tree);
    }
    tr.finish()?;

    let mut lr = Reader::new(payloads[2], "LEAF");
    let rows = lr.len_u64()?;
    let cols = lr.len_u64()?;
    if rows != n || cols != tree_count {
        return Err(lr.corrupt("shape disagrees with META"));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| lr.corrupt("shape overflow"))?;
    let entries = lr.many(count, Reader::u32)?;
    lr.finish()?;
    let leaves = LeafMatrix::from_row_major(rows, cols, &entries).map_err(|e| lr.corrupt(&e.to_string()))?;

    let mut yr = Reader::new(payloads[3], "RESP");
    if yr.len_u64()? != n {
        return Err(yr.corrupt("length disagrees with META"));
    }
    let y = yr.many(n, Reader::f64)?;
    yr.finish()?;

    let mut or = Reader::new(payloads[4], "ORDR");
    if or.len_u64()? != n {
        return Err(or.corrupt("length disagrees with META"));
    }
    let order = or.many(n, Reader::u32)?;
    or.finish()?;
    let responses = ResponseTable::with_order(y, order).map_err(|e| or.corrupt(&e.to_string()))?;

    let forest = Forest {
        trees,
        params,
        n_features: p,
        seed,
    };
    FittedModel::from_parts(forest, leaves, responses, bandwidth).map_err(|e| Error::CorruptSection {
        section: "LEAF".into(),
        reason: e.to_string(),
    })
}

/// `(tag, payload length)` for every section of an archive.
pub fn sections(bytes: &[u8]) -> Result<Vec<(String, u64)>> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut rest = &bytes[12..];
    let mut out = Vec::new();
    while rest.len() >= 12 {
        let tag = String::from_utf8_lossy(&rest[..4]).into_owned();
        let len = u64::from_le_bytes(rest[4..12].try_into().unwrap());
        out.push((tag.clone(), len));
        let skip = 12usize.saturating_add(len as usize);
        if skip > rest.len() {
            return Err(Error::CorruptSection {
                section: tag,
                reason: "truncated payload".into(),
            });
        }
        rest = &rest[skip..];
    }
    Ok(out)
}

/// Human-readable dump of a model, for debugging.
pub fn dump_text(model: &FittedModel) -> String {
    let f = model.forest();
    let mut s = String::new();
    let _ = writeln!(s, "schema_version {SCHEMA_VERSION}");
    let _ = writeln!(
        s,
        "n {} p {} seed {} trees {} max_depth {} mtry {} min_node_size {} bootstrap {} bandwidth {}",
        model.n_train(),
        f.n_features,
        f.seed.master(),
        f.tree_count(),
        f.params
            .max_depth
            .map_or("unlimited".to_string(), |d| d.to_string()),
        f.params.mtry.map_or("auto".to_string(), |m| m.to_string()),
        f.params.min_node_size,
        f.params.bootstrap,
        model.default_bandwidth()
    );
    for (b, t) in f.trees.iter().enumerate() {
        let _ = writeln!(s, "tree {b} nodes {} leaves {}", t.nodes().len(), t.leaf_count());
        for (i, n) in t.nodes().iter().enumerate() {
            let indent = "  ".repeat(n.depth as usize + 1);
            match n.kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        s,
                        "{indent}#{i} x{} <= {threshold} ? #{left} : #{right}",
                        feature + 1
                    );
                }
                NodeKind::Leaf {
                    leaf_id,
                    mean_response,
                    sample_count,
                } => {
                    let _ = writeln!(
                        s,
                        "{indent}#{i} leaf {leaf_id} mean {mean_response} count {sample_count}"
                    );
                }
            }
        }
    }
    let lm = model.leaf_matrix();
    for i in 0..lm.rows() {
        let row: Vec<String> = lm.row(i).iter().map(u32::to_string).collect();
        let _ = writeln!(
            s,
            "row {i} y {} leaves {}",
            model.responses().values()[i],
            row.join(" ")
        );
    }
    s
}

fn section(out: &mut Vec<u8>, tag: &str, payload: &[u8]) {
    out.extend_from_slice(tag.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], section: &'static str) -> Self {
        Reader {
            data,
            pos: 0,
            section,
        }
    }

    fn corrupt(&self, reason: &str) -> Error {
        Error::CorruptSection {
            section: self.section.to_string(),
            reason: reason.to_string(),
        }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.data.len() {
            return Err(self.corrupt("truncated"));
        }
        let out = self.data[self.pos..end].try_into().unwrap();
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn len_u64(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt("length overflow"))
    }

    fn many<T>(&mut self, count: usize, f: fn(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        // cheap bound so a corrupt count cannot trigger a huge allocation
        if count > self.data.len() - self.pos {
            return Err(self.corrupt("truncated"));
        }
        (0..count).map(|_| f(self)).collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(self.corrupt("unexpected trailing bytes"))
        }
    }
}
