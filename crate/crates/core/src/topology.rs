//! Device lattice and elimination-pattern trees.
//!
//! A [`PatternTree`] is a spanning tree over physical lattice sites whose
//! edges point from child to parent, i.e. along the direction in which
//! amplitude flows during elimination. The spine of the tree is the *main
//! path* (start point to end point); every other site hangs off it as a
//! branch.
//!
//! Node `i` of a tree always carries label `i + 1`. [`bfs_label`] reorders
//! nodes so that labels follow breadth-first order from the start point,
//! which is the order the decomposer assigns matrix columns in.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice site, `r` is the row and `c` the column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub r: usize,
    pub c: usize,
}

impl Coord {
    pub fn new(r: usize, c: usize) -> Self {
        Self { r, c }
    }

    pub fn is_adjacent(self, other: Coord) -> bool {
        self.r.abs_diff(other.r) + self.c.abs_diff(other.c) == 1
    }
}

/// Rectangular nearest-neighbour coupling lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub rows: usize,
    pub cols: usize,
}

impl Lattice {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDevice(format!("{rows}x{cols} has no sites")));
        }
        Ok(Self { rows, cols })
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, p: Coord) -> bool {
        p.r < self.rows && p.c < self.cols
    }

    pub fn neighbors(&self, p: Coord) -> impl Iterator<Item = Coord> + '_ {
        let cand = [
            p.r.checked_sub(1).map(|r| Coord::new(r, p.c)),
            Some(Coord::new(p.r + 1, p.c)),
            p.c.checked_sub(1).map(|c| Coord::new(p.r, c)),
            Some(Coord::new(p.r, p.c + 1)),
        ];
        cand.into_iter().flatten().filter(move |q| self.contains(*q))
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Lattice {
    type Err = Error;

    /// Parses `"RxC"`, e.g. `"6x6"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidDevice(format!("expected RxC, got {s:?}"));
        let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        Self::new(rows, cols)
    }
}

/// Elimination pattern over lattice sites. See the module docs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternTree {
    coords: Vec<Coord>,
    parent: Vec<Option<usize>>,
    main_path: Vec<usize>,
}

impl PatternTree {
    fn from_parts(coords: Vec<Coord>, parent: Vec<Option<usize>>, main_path: Vec<usize>) -> Self {
        debug_assert_eq!(coords.len(), parent.len());
        Self { coords, parent, main_path }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, node: usize) -> Coord {
        self.coords[node]
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn label(&self, node: usize) -> usize {
        node + 1
    }

    /// Node ids from start point to end point.
    pub fn main_path(&self) -> &[usize] {
        &self.main_path
    }

    pub fn start(&self) -> usize {
        self.main_path[0]
    }

    /// The root: every edge is oriented toward it.
    pub fn end(&self) -> usize {
        *self.main_path.last().expect("main path is never empty")
    }

    pub fn is_main(&self, node: usize) -> bool {
        self.main_mask()[node]
    }

    pub fn main_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &v in &self.main_path {
            mask[v] = true;
        }
        mask
    }

    /// `(child, parent)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent.iter().enumerate().filter_map(|(c, p)| p.map(|p| (c, p)))
    }

    /// Undirected adjacency lists, ascending by node id.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (c, p) in self.edges() {
            adj[c].push(p);
            adj[p].push(c);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges().filter(|&(_, p)| p == node).map(|(c, _)| c).collect()
    }

    /// For every node, the main-path node its branch hangs off (itself for
    /// main-path nodes).
    pub fn attachment(&self) -> Vec<usize> {
        let main = self.main_mask();
        let mut out = vec![usize::MAX; self.len()];
        for (v, slot) in out.iter_mut().enumerate() {
            let mut w = v;
            while !main[w] {
                w = self.parent[w].expect("branch nodes have parents");
            }
            *slot = w;
        }
        out
    }

    /// Checks the structural invariants: spanning tree rooted at the end
    /// point, lattice-adjacent edges, tree degree at most 4, a well-formed
    /// main path, and connectivity of every label prefix.
    pub fn validate(&self, device: Option<&Lattice>) -> Result<()> {
        let n = self.len();
        let bad = |msg: String| Err(Error::InvalidPattern(msg));
        if n == 0 || self.main_path.is_empty() {
            return bad("empty pattern".into());
        }
        if let Some(dev) = device {
            if let Some(p) = self.coords.iter().find(|p| !dev.contains(**p)) {
                return bad(format!("site {p:?} outside {dev}"));
            }
        }
        let mut sorted = self.coords.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate sites".into());
        }
        if self.parent.iter().filter(|p| p.is_none()).count() != 1 || self.parent[self.end()].is_some() {
            return bad("the end point must be the unique root".into());
        }
        for (c, p) in self.edges() {
            if !self.coords[c].is_adjacent(self.coords[p]) {
                return bad(format!("edge {:?} -> {:?} is not lattice-adjacent", self.coords[c], self.coords[p]));
            }
        }
        // Every node must reach the root within n steps (no cycles).
        for v in 0..n {
            let mut w = v;
            let mut steps = 0;
            while let Some(p) = self.parent[w] {
                w = p;
                steps += 1;
                if steps > n {
                    return bad(format!("cycle through node {v}"));
                }
            }
        }
        let adj = self.adjacency();
        if let Some(v) = (0..n).find(|&v| adj[v].len() > 4) {
            return bad(format!("node {v} has tree degree {}", adj[v].len()));
        }
        for w in self.main_path.windows(2) {
            if self.parent[w[0]] != Some(w[1]) {
                return bad(format!("main path {} -> {} is not a tree edge", w[0], w[1]));
            }
        }
        for (v, nbrs) in adj.iter().enumerate().skip(1) {
            if !nbrs.iter().any(|&u| u < v) {
                return bad(format!("label prefix {{1..{}}} is disconnected", v + 1));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = PatternFile {
            nodes: self
                .coords
                .iter()
                .enumerate()
                .map(|(i, p)| PatternNode { r: p.r, c: p.c, label: i + 1 })
                .collect(),
            edges: self.edges().map(|(c, p)| [c + 1, p + 1]).collect(),
            main_path: self.main_path.iter().map(|v| v + 1).collect(),
        };
        serde_json::to_string(&file).expect("plain struct serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct PatternNode {
    r: usize,
    c: usize,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct PatternFile {
    nodes: Vec<PatternNode>,
    edges: Vec<[usize; 2]>,
    main_path: Vec<usize>,
}

fn chain_through(coords: Vec<Coord>) -> PatternTree {
    let n = coords.len();
    let parent = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    PatternTree::from_parts(coords, parent, (0..n).collect())
}

/// Baseline chain `1 -> 2 -> ... -> n` laid out on a `1 x n` strip.
pub fn build_chain_pattern(n: usize) -> Result<PatternTree> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("chain needs n >= 2, got {n}")));
    }
    Ok(chain_through((0..n).map(|c| Coord::new(0, c)).collect()))
}

/// Chain of `n` sites snaking back and forth along the long side of `device`.
pub fn snake_chain(device: &Lattice, n: usize) -> Result<PatternTree> {
    if n < 2 || n > device.node_count() {
        return Err(Error::InvalidDimension(format!("cannot place a {n}-site chain on {device}")));
    }
    let (short, long) = (device.rows.min(device.cols), device.rows.max(device.cols));
    let transposed = device.cols < device.rows;
    let coords = (0..short)
        .flat_map(|band| {
            let cols: Box<dyn Iterator<Item = usize>> =
                if band % 2 == 0 { Box::new(0..long) } else { Box::new((0..long).rev()) };
            cols.map(move |c| (band, c))
        })
        .take(n)
        .map(|(r, c)| if transposed { Coord::new(c, r) } else { Coord::new(r, c) })
        .collect();
    Ok(chain_through(coords))
}

/// Zigzag embedding of the main-path-with-branches template into `device`.
///
/// The main path runs along the long side through the middle row of each
/// three-row band, starting at the left end of the first band and climbing
/// the lattice edge column to the next band's middle row at each turn. With
/// `rows mod 3 == 2` the final band keeps one branch row; with
/// `rows mod 3 == 1` the final main row has no branch row of its own. Every
/// other site attaches to the adjacent main-path node closest to the start
/// that still has fewer than two branches; sites that cannot do so hang off
/// an adjacent branch node instead. A single-row device reduces to the chain.
pub fn zigzag_embed(device: &Lattice) -> Result<PatternTree> {
    if device.node_count() < 2 {
        return Err(Error::InvalidDevice(format!("{device} is too small")));
    }
    let transposed = device.cols < device.rows;
    let (short, long) = (device.rows.min(device.cols), device.rows.max(device.cols));
    let to_device = |r: usize, c: usize| if transposed { Coord::new(c, r) } else { Coord::new(r, c) };

    if short == 1 {
        return Ok(chain_through((0..long).map(|c| to_device(0, c)).collect()));
    }

    let mut main_rows: Vec<usize> = (0..short / 3).map(|b| 3 * b + 1).collect();
    match short % 3 {
        1 | 2 => main_rows.push(short - 1),
        _ => {}
    }

    // Main path in internal (band-row, long-axis) coordinates.
    let mut path: Vec<(usize, usize)> = Vec::new();
    for (i, &row) in main_rows.iter().enumerate() {
        let forward = i % 2 == 0;
        let cols: Vec<usize> = if forward { (0..long).collect() } else { (0..long).rev().collect() };
        if let Some(&(prev_row, prev_col)) = path.last() {
            for r in prev_row + 1..row {
                path.push((r, prev_col));
            }
        }
        path.extend(cols.into_iter().map(|c| (row, c)));
    }

    let index_of = |r: usize, c: usize| r * long + c;
    let total = short * long;
    let mut coords_internal: Vec<(usize, usize)> = Vec::with_capacity(total);
    let mut node_of = vec![usize::MAX; total];
    for &(r, c) in &path {
        node_of[index_of(r, c)] = coords_internal.len();
        coords_internal.push((r, c));
    }
    let main_len = path.len();
    let mut parent: Vec<Option<usize>> = (0..main_len).map(|i| (i + 1 < main_len).then_some(i + 1)).collect();
    let mut depth = vec![0usize; main_len];
    let mut branch_count = vec![0usize; main_len];

    let neighbors = |r: usize, c: usize| {
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push((r - 1, c));
        }
        if r + 1 < short {
            out.push((r + 1, c));
        }
        if c > 0 {
            out.push((r, c - 1));
        }
        if c + 1 < long {
            out.push((r, c + 1));
        }
        out
    };

    // Sites in the order their earliest main-path neighbour appears.
    let mut pending: Vec<(usize, usize)> = (0..short)
        .flat_map(|r| (0..long).map(move |c| (r, c)))
        .filter(|&(r, c)| node_of[index_of(r, c)] == usize::MAX)
        .collect();
    let earliest_main = |site: (usize, usize), node_of: &[usize]| {
        neighbors(site.0, site.1)
            .into_iter()
            .map(|(r, c)| node_of[index_of(r, c)])
            .filter(|&v| v < main_len)
            .min()
            .unwrap_or(usize::MAX)
    };
    pending.sort_by_key(|&s| (earliest_main(s, &node_of), s));

    // Attach in rounds: depth 1 where a main node has room, else depth 2 via
    // a branch node, else (only when nothing else is possible) extend from
    // any attached neighbour.
    while !pending.is_empty() {
        let mut progressed = false;
        for pass in 0..3 {
            let mut still = Vec::new();
            for &(r, c) in &pending {
                let mut candidates: Vec<usize> = neighbors(r, c)
                    .into_iter()
                    .map(|(nr, nc)| node_of[index_of(nr, nc)])
                    .filter(|&v| v != usize::MAX)
                    .collect();
                candidates.sort_unstable();
                let chosen = match pass {
                    0 => candidates.iter().copied().find(|&v| v < main_len && branch_count[v] < 2),
                    1 => candidates.iter().copied().find(|&v| depth[v] == 1),
                    _ => candidates.iter().copied().find(|&v| v < main_len).or(candidates.first().copied()),
                };
                match chosen {
                    Some(p) => {
                        let id = coords_internal.len();
                        node_of[index_of(r, c)] = id;
                        coords_internal.push((r, c));
                        parent.push(Some(p));
                        depth.push(depth[p] + 1);
                        if p < main_len {
                            branch_count[p] += 1;
                        }
                        progressed = true;
                    }
                    None => still.push((r, c)),
                }
            }
            pending = still;
            if progressed {
                break;
            }
        }
        if !progressed {
            return Err(Error::InvalidPattern(format!("could not attach all sites of {device}")));
        }
    }

    let coords = coords_internal.into_iter().map(|(r, c)| to_device(r, c)).collect();
    Ok(PatternTree::from_parts(coords, parent, (0..main_len).collect()))
}

/// Relabels nodes in breadth-first order from the start point.
///
/// When a node is expanded its children are queued short branches first,
/// then longer branches, then the main-path successor, so branches near the
/// start receive low labels.
pub fn bfs_label(tree: &PatternTree) -> PatternTree {
    let n = tree.len();
    let adj = tree.adjacency();
    let main = tree.main_mask();
    let start = tree.start();

    // Subtree sizes with the tree rooted at the start point.
    let mut order = Vec::with_capacity(n);
    let mut from = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                from[w] = v;
                stack.push(w);
            }
        }
    }
    let mut size = vec![1usize; n];
    for &v in order.iter().rev() {
        if from[v] != usize::MAX {
            size[from[v]] += size[v];
        }
    }

    let mut new_of_old = vec![usize::MAX; n];
    let mut old_of_new = Vec::with_capacity(n);
    let mut queue = VecDeque::from([start]);
    new_of_old[start] = 0;
    while let Some(v) = queue.pop_front() {
        old_of_new.push(v);
        let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| new_of_old[w] == usize::MAX).collect();
        next.sort_by_key(|&w| (main[w], size[w], w));
        for w in next {
            new_of_old[w] = usize::MAX - 1;
            queue.push_back(w);
        }
    }
    for (new, &old) in old_of_new.iter().enumerate() {
        new_of_old[old] = new;
    }

    let coords = old_of_new.iter().map(|&old| tree.coords[old]).collect();
    let parent = old_of_new.iter().map(|&old| tree.parent[old].map(|p| new_of_old[p])).collect();
    let main_path = tree.main_path.iter().map(|&v| new_of_old[v]).collect();
    PatternTree::from_parts(coords, parent, main_path)
}

/// Restricts a BFS-labelled tree to labels `1..=n`. The highest-labelled
/// retained main-path node becomes the new end point.
pub fn select_subpattern(tree: &PatternTree, n: usize) -> Result<PatternTree> {
    if n == 0 || n > tree.len() {
        return Err(Error::InvalidDimension(format!("cannot select {n} of {} nodes", tree.len())));
    }
    let main_path: Vec<usize> = tree.main_path.iter().copied().take_while(|&v| v < n).collect();
    if main_path.len() != tree.main_path.iter().filter(|&&v| v < n).count() || main_path.is_empty() {
        return Err(Error::InvalidPattern("tree is not BFS-labelled from its start point".into()));
    }
    let end = *main_path.last().unwrap();
    let parent = (0..n)
        .map(|v| if v == end { None } else { tree.parent[v] })
        .collect::<Vec<_>>();
    if let Some(v) = (0..n).find(|&v| parent[v].is_some_and(|p| p >= n)) {
        return Err(Error::InvalidPattern(format!("node {} loses its parent", v + 1)));
    }
    Ok(PatternTree::from_parts(tree.coords[..n].to_vec(), parent, main_path))
}

/// BFS-labelled zigzag pattern on `device` restricted to `n` sites.
pub fn device_pattern(device: &Lattice, n: usize) -> Result<PatternTree> {
    if n > device.node_count() {
        return Err(Error::InvalidDevice(format!("{n} qumodes do not fit on {device}")));
    }
    select_subpattern(&bfs_label(&zigzag_embed(device)?), n)
}
