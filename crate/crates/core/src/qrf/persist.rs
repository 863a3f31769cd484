//! Versioned plain-text model file.
//!
//! ```text
//! safespeed-qrf 1
//! scalar f64
//! n_estimators 200
//! min_samples_leaf 10
//! max_depth none
//! mtry auto
//! bootstrap true
//! master_seed 42
//! n_features 34
//! targets <n>
//! <one target per line>
//! tree <t> <node count>
//! S <feature> <threshold>           split, pre-order
//! L <in_bag> <k> <member>...        leaf
//! end
//! ```
//!
//! Numbers use shortest round-trip formatting, so a reloaded forest predicts
//! bit-identically.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Forest, ForestParams, Tree, TreeNode};

pub const FORMAT_MAGIC: &str = "safespeed-qrf";
const VERSION: u32 = 1;

fn scalar_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn write_forest<T: Scalar, W: Write>(forest: &Forest<T>, out: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let p = forest.params();
    writeln!(w, "{FORMAT_MAGIC} {VERSION}")?;
    writeln!(w, "scalar {}", scalar_name::<T>())?;
    writeln!(w, "n_estimators {}", p.n_estimators)?;
    writeln!(w, "min_samples_leaf {}", p.min_samples_leaf)?;
    match p.max_depth {
        Some(d) => writeln!(w, "max_depth {d}")?,
        None => writeln!(w, "max_depth none")?,
    }
    match p.mtry {
        Some(m) => writeln!(w, "mtry {m}")?,
        None => writeln!(w, "mtry auto")?,
    }
    writeln!(w, "bootstrap {}", p.bootstrap)?;
    writeln!(w, "master_seed {}", forest.master_seed())?;
    writeln!(w, "n_features {}", forest.n_features())?;
    writeln!(w, "targets {}", forest.targets().len())?;
    for t in forest.targets() {
        writeln!(w, "{t}")?;
    }
    for (i, tree) in forest.trees().iter().enumerate() {
        writeln!(w, "tree {i} {}", tree.nodes().len())?;
        for node in tree.nodes() {
            match node {
                TreeNode::Split {
                    feature, threshold, ..
                } => writeln!(w, "S {feature} {threshold}")?,
                TreeNode::Leaf { in_bag, members } => {
                    write!(w, "L {in_bag} {}", members.len())?;
                    for m in members {
                        write!(w, " {m}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
    }
    writeln!(w, "end")?;
    w.flush()
}

struct Lines<R> {
    inner: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<&str> {
        self.buf.clear();
        self.line_no += 1;
        let n = self
            .inner
            .read_line(&mut self.buf)
            .map_err(|e| Error::io("<model>", e))?;
        if n == 0 {
            return Err(self.err("unexpected end of file"));
        }
        Ok(self.buf.trim_end())
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::format("model", format!("line {}: {msg}", self.line_no))
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let line = self.next()?.to_string();
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(self.err(format!("expected `{key} <value>`, found {line:?}"))),
        }
    }

    fn keyed_parse<V: std::str::FromStr>(&mut self, key: &str) -> Result<V> {
        let v = self.keyed(key)?;
        v.parse()
            .map_err(|_| self.err(format!("bad value for {key}: {v:?}")))
    }

    fn optional(&mut self, key: &str, none: &str) -> Result<Option<usize>> {
        let v = self.keyed(key)?;
        if v == none {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|_| self.err(format!("bad value for {key}: {v:?}")))
    }
}

pub fn read_forest<T: Scalar, R: BufRead>(input: R) -> Result<Forest<T>> {
    let mut r = Lines {
        inner: input,
        line_no: 0,
        buf: String::new(),
    };
    let header = r.next()?.to_string();
    if header != format!("{FORMAT_MAGIC} {VERSION}") {
        return Err(r.err(format!("unsupported model header {header:?}")));
    }
    let scalar = r.keyed("scalar")?;
    if scalar != scalar_name::<T>() {
        return Err(r.err(format!(
            "model stores {scalar}, requested {}",
            scalar_name::<T>()
        )));
    }
    let params = ForestParams {
        n_estimators: r.keyed_parse("n_estimators")?,
        min_samples_leaf: r.keyed_parse("min_samples_leaf")?,
        max_depth: r.optional("max_depth", "none")?,
        mtry: r.optional("mtry", "auto")?,
        bootstrap: r.keyed_parse("bootstrap")?,
    };
    params.validate()?;
    let master_seed: u64 = r.keyed_parse("master_seed")?;
    let n_features: usize = r.keyed_parse("n_features")?;
    let n: usize = r.keyed_parse("targets")?;
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let line = r.next()?;
        let v: T = line
            .parse()
            .map_err(|_| Error::format("model", format!("bad target {line:?}")))?;
        targets.push(v);
    }
    if targets.is_empty() {
        return Err(r.err("model has no training targets"));
    }

    let mut trees = Vec::with_capacity(params.n_estimators);
    for t in 0..params.n_estimators {
        let head = r.next()?.to_string();
        let parts: Vec<&str> = head.split(' ').collect();
        let count = match parts.as_slice() {
            ["tree", i, c] if i.parse() == Ok(t) => {
                c.parse::<usize>().map_err(|_| r.err("bad node count"))?
            }
            _ => return Err(r.err(format!("expected `tree {t} <nodes>`, found {head:?}"))),
        };
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let line = r.next()?.to_string();
            let mut it = line.split(' ');
            let node = match it.next() {
                Some("S") => {
                    let feature: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| r.err("bad split feature"))?;
                    let threshold: T = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| r.err("bad split threshold"))?;
                    if feature >= n_features {
                        return Err(r.err(format!("split feature {feature} out of range")));
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        right: usize::MAX,
                    }
                }
                Some("L") => {
                    let nums: Vec<usize> = it
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| r.err("bad leaf"))?;
                    if nums.len() < 2 || nums.len() != nums[1] + 2 {
                        return Err(r.err("leaf member count mismatch"));
                    }
                    if nums[2..].iter().any(|&m| m >= n) {
                        return Err(r.err("leaf member out of range"));
                    }
                    TreeNode::Leaf {
                        in_bag: nums[0],
                        members: nums[2..].iter().map(|&m| m as u32).collect(),
                    }
                }
                _ => return Err(r.err(format!("bad node line {line:?}"))),
            };
            nodes.push(node);
        }
        link_preorder(&mut nodes).map_err(|m| r.err(format!("tree {t}: {m}")))?;
        trees.push(Tree { nodes });
    }
    let tail = r.next()?.to_string();
    if tail != "end" {
        return Err(r.err(format!("expected `end`, found {tail:?}")));
    }
    Ok(Forest::assemble(
        trees,
        targets,
        n_features,
        params,
        master_seed,
    ))
}

/// Recomputes right-child links of a pre-order node list.
fn link_preorder<T>(nodes: &mut [TreeNode<T>]) -> std::result::Result<(), &'static str> {
    fn walk<T>(nodes: &mut [TreeNode<T>], i: usize) -> std::result::Result<usize, &'static str> {
        if i >= nodes.len() {
            return Err("truncated subtree");
        }
        match nodes[i] {
            TreeNode::Leaf { .. } => Ok(i + 1),
            TreeNode::Split { .. } => {
                let right_at = walk(nodes, i + 1)?;
                if let TreeNode::Split { right, .. } = &mut nodes[i] {
                    *right = right_at;
                }
                walk(nodes, right_at)
            }
        }
    }
    if walk(nodes, 0)? != nodes.len() {
        return Err("trailing nodes after the root subtree");
    }
    Ok(())
}
