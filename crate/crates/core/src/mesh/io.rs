//! Plain-text mesh format.
//!
//! ```text
//! $Nodes
//! <count>
//! <id> <x> <y>
//! $Elements
//! <count>
//! <id> <kind> <n1> <n2> ...
//! $NodeSets
//! <count>
//! <name> <n> <id1> ... <idn>
//! $ElementSets
//! <count>
//! <name> <n> <id1> ... <idn>
//! $PeriodicPairs
//! <count>
//! <master> <slave> <axis>
//! ```
//!
//! Ids are 0-based and sequential. Kind codes: 1 = Tri3, 2 = Tri6, 3 = Quad4.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ElementKind, Mesh, PeriodicPair};
use crate::error::{Error, Result};

pub fn render_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "$Nodes\n{}", mesh.n_nodes());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{i} {:.16e} {:.16e}", p[0], p[1]);
    }
    let _ = writeln!(s, "$Elements\n{}", mesh.n_elements());
    for (e, conn) in mesh.elements.iter().enumerate() {
        let _ = write!(s, "{e} {}", mesh.kind.code());
        for n in conn {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
    }
    for (header, sets) in [("$NodeSets", &mesh.node_sets), ("$ElementSets", &mesh.element_sets)] {
        let _ = writeln!(s, "{header}\n{}", sets.len());
        for (name, ids) in sets {
            let _ = write!(s, "{name} {}", ids.len());
            for id in ids {
                let _ = write!(s, " {id}");
            }
            s.push('\n');
        }
    }
    let _ = writeln!(s, "$PeriodicPairs\n{}", mesh.periodic_pairs.len());
    for p in &mesh.periodic_pairs {
        let _ = writeln!(s, "{} {} {}", p.master, p.slave, p.axis);
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if !t.is_empty() {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        match self.next() {
            Some((_, l)) if l == header => Ok(()),
            Some((n, l)) => Err(Error::parse(n, format!("expected section {header}, found `{l}`"))),
            None => Err(Error::parse(self.last + 1, format!("missing section {header}"))),
        }
    }

    fn count(&mut self, section: &str) -> Result<usize> {
        let (n, l) = self
            .next()
            .ok_or_else(|| Error::parse(self.last + 1, format!("missing count for {section}")))?;
        l.parse()
            .map_err(|_| Error::parse(n, format!("invalid count `{l}` in {section}")))
    }

    fn record(&mut self, section: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next().ok_or_else(|| {
            Error::parse(self.last + 1, format!("{section} ends before its declared count"))
        })?;
        if l.starts_with('$') {
            return Err(Error::parse(n, format!("{section} ends before its declared count")));
        }
        Ok((n, l.split_whitespace().collect()))
    }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{tok}`")))
}

fn sequential(line: usize, tok: &str, expected: usize) -> Result<()> {
    let id: usize = num(line, tok, "id")?;
    if id != expected {
        return Err(Error::parse(line, format!("expected id {expected}, found {id}")));
    }
    Ok(())
}

fn parse_sets(lines: &mut Lines, section: &str, bound: usize) -> Result<BTreeMap<String, Vec<usize>>> {
    let count = lines.count(section)?;
    let mut sets = BTreeMap::new();
    for _ in 0..count {
        let (n, toks) = lines.record(section)?;
        if toks.len() < 2 {
            return Err(Error::parse(n, "set record needs a name and a size"));
        }
        let size: usize = num(n, toks[1], "set size")?;
        if toks.len() != size + 2 {
            return Err(Error::parse(
                n,
                format!("set {} declares {size} ids but lists {}", toks[0], toks.len() - 2),
            ));
        }
        let ids = toks[2..]
            .iter()
            .map(|t| {
                let id: usize = num(n, t, "id")?;
                if id >= bound {
                    return Err(Error::parse(n, format!("dangling reference {id}")));
                }
                Ok(id)
            })
            .collect::<Result<Vec<_>>>()?;
        if sets.insert(toks[0].to_string(), ids).is_some() {
            return Err(Error::parse(n, format!("duplicate set {}", toks[0])));
        }
    }
    Ok(sets)
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(text);

    lines.expect_header("$Nodes")?;
    let n_nodes = lines.count("$Nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
    for i in 0..n_nodes {
        let (n, toks) = lines.record("$Nodes")?;
        if toks.len() != 3 {
            return Err(Error::parse(n, "node record needs `id x y`"));
        }
        sequential(n, toks[0], i)?;
        let x: f64 = num(n, toks[1], "coordinate")?;
        let y: f64 = num(n, toks[2], "coordinate")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::parse(n, "non-finite coordinate"));
        }
        nodes.push([x, y]);
    }

    lines.expect_header("$Elements")?;
    let n_elems = lines.count("$Elements")?;
    let mut kind = None;
    let mut elements = Vec::with_capacity(n_elems.min(1 << 20));
    for e in 0..n_elems {
        let (n, toks) = lines.record("$Elements")?;
        if toks.len() < 2 {
            return Err(Error::parse(n, "element record needs `id kind nodes...`"));
        }
        sequential(n, toks[0], e)?;
        let code: u32 = num(n, toks[1], "element kind")?;
        let k = ElementKind::from_code(code)
            .ok_or_else(|| Error::parse(n, format!("unknown element kind {code}")))?;
        if *kind.get_or_insert(k) != k {
            return Err(Error::parse(n, "mixed element kinds are not supported"));
        }
        if toks.len() != 2 + k.nodes_per_element() {
            return Err(Error::parse(
                n,
                format!("element kind {code} needs {} nodes", k.nodes_per_element()),
            ));
        }
        let conn = toks[2..]
            .iter()
            .map(|t| {
                let id: usize = num(n, t, "node id")?;
                if id >= n_nodes {
                    return Err(Error::parse(n, format!("dangling node reference {id}")));
                }
                Ok(id)
            })
            .collect::<Result<Vec<_>>>()?;
        elements.push(conn);
    }

    lines.expect_header("$NodeSets")?;
    let node_sets = parse_sets(&mut lines, "$NodeSets", n_nodes)?;
    lines.expect_header("$ElementSets")?;
    let element_sets = parse_sets(&mut lines, "$ElementSets", n_elems)?;

    lines.expect_header("$PeriodicPairs")?;
    let n_pairs = lines.count("$PeriodicPairs")?;
    let mut periodic_pairs = Vec::with_capacity(n_pairs.min(1 << 20));
    for _ in 0..n_pairs {
        let (n, toks) = lines.record("$PeriodicPairs")?;
        if toks.len() != 3 {
            return Err(Error::parse(n, "periodic pair needs `master slave axis`"));
        }
        let master: usize = num(n, toks[0], "node id")?;
        let slave: usize = num(n, toks[1], "node id")?;
        let axis: u8 = num(n, toks[2], "axis")?;
        if master >= n_nodes || slave >= n_nodes {
            return Err(Error::parse(n, "dangling node reference in periodic pair"));
        }
        if axis > 1 {
            return Err(Error::parse(n, format!("axis must be 0 or 1, got {axis}")));
        }
        periodic_pairs.push(PeriodicPair { master, slave, axis });
    }
    if let Some((n, l)) = lines.next() {
        return Err(Error::parse(n, format!("unexpected trailing content `{l}`")));
    }

    Ok(Mesh {
        nodes,
        kind: kind.unwrap_or(ElementKind::Tri3),
        elements,
        node_sets,
        element_sets,
        periodic_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_parent_disk_mesh;

    fn square() -> Mesh {
        let mut node_sets = BTreeMap::new();
        node_sets.insert("left".to_string(), vec![0, 3]);
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            kind: ElementKind::Tri3,
            elements: vec![vec![0, 1, 2], vec![0, 2, 3]],
            node_sets,
            element_sets: BTreeMap::new(),
            periodic_pairs: vec![PeriodicPair {
                master: 0,
                slave: 1,
                axis: 0,
            }],
        }
    }

    #[test]
    fn square_round_trip() {
        let m = square();
        assert_eq!(parse_mesh(&render_mesh(&m)).unwrap(), m);
    }

    #[test]
    fn missing_nodes_section_is_named() {
        let err = parse_mesh("$Elements\n0\n").unwrap_err().to_string();
        assert!(err.contains("$Nodes"), "{err}");
        let err = parse_mesh("").unwrap_err().to_string();
        assert!(err.contains("$Nodes"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = render_mesh(&square()).replace("1 1 0 2 3", "1 1 0 2 9");
        match parse_mesh(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 10);
                assert!(msg.contains("dangling"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let short = render_mesh(&square()).replace("$Nodes\n4", "$Nodes\n5");
        assert!(matches!(parse_mesh(&short), Err(Error::Parse { .. })));
    }

    #[test]
    fn generated_mesh_round_trips_bitwise() {
        let m = build_parent_disk_mesh(0.225, 6).unwrap();
        let back = parse_mesh(&render_mesh(&m)).unwrap();
        for (a, b) in m.nodes.iter().zip(&back.nodes) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
        assert_eq!(back, m);
    }
}
