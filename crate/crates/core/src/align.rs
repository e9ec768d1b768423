//! Token-level Levenshtein machinery.
//!
//! [`lev_matrix`] computes the classic edit-distance matrix over two token
//! sequences. [`shortest_path_cells`] restricts it to the cells lying on at
//! least one minimal edit path, and [`build_lattice`] turns those cells
//! into a weighted DAG whose edges are atomic edit operations plus
//! transitive edges merging short runs of consecutive operations. Every
//! atomic part carries a unit cost, so a transitive edge costs the number
//! of operations it merges.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

/// A Levenshtein-matrix cell `(i, j)`: `i` source tokens and `j` target
/// tokens consumed.
pub type Cell = (usize, usize);

/// Token-level Levenshtein distance matrix. Cell `(i, j)` holds the edit
/// distance between the first `i` source tokens and the first `j` target
/// tokens; the bottom-right cell is the full distance.
#[derive(Debug, Clone)]
pub struct LevMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<u32>,
    /// Token equality for each `(i, j)` of the underlying sequences,
    /// kept so path reconstruction does not need the tokens again.
    eq: Vec<bool>,
}

impl LevMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.cells[i * self.cols + j]
    }

    /// Edit distance between the full sequences.
    pub fn distance(&self) -> u32 {
        self.get(self.rows - 1, self.cols - 1)
    }

    fn tokens_equal(&self, i: usize, j: usize) -> bool {
        self.eq[i * (self.cols - 1) + j]
    }
}

/// Builds the Levenshtein matrix for two token sequences. Empty sequences
/// are allowed; row 0 and column 0 hold the gap costs.
pub fn lev_matrix(source: &[&str], target: &[&str]) -> LevMatrix {
    let rows = source.len() + 1;
    let cols = target.len() + 1;
    let mut cells = vec![0u32; rows * cols];
    let mut eq = vec![false; source.len() * target.len()];
    for (j, cell) in cells.iter_mut().enumerate().take(cols) {
        *cell = j as u32;
    }
    for i in 1..rows {
        cells[i * cols] = i as u32;
        for j in 1..cols {
            let equal = source[i - 1] == target[j - 1];
            eq[(i - 1) * target.len() + (j - 1)] = equal;
            let diag = cells[(i - 1) * cols + (j - 1)] + u32::from(!equal);
            let up = cells[(i - 1) * cols + j] + 1;
            let left = cells[i * cols + (j - 1)] + 1;
            cells[i * cols + j] = diag.min(up).min(left);
        }
    }
    LevMatrix {
        rows,
        cols,
        cells,
        eq,
    }
}

/// Cells lying on at least one minimal edit path from `(0, 0)` to the
/// bottom-right corner. A cell qualifies when its forward distance plus
/// the remaining suffix distance equals the total distance.
pub fn shortest_path_cells(m: &LevMatrix) -> BTreeSet<Cell> {
    let rows = m.rows;
    let cols = m.cols;
    // Suffix distances by the mirrored recurrence.
    let mut back = vec![0u32; rows * cols];
    for j in (0..cols).rev() {
        back[(rows - 1) * cols + j] = (cols - 1 - j) as u32;
    }
    for i in (0..rows - 1).rev() {
        back[i * cols + (cols - 1)] = (rows - 1 - i) as u32;
        for j in (0..cols - 1).rev() {
            let equal = m.tokens_equal(i, j);
            let diag = back[(i + 1) * cols + (j + 1)] + u32::from(!equal);
            let down = back[(i + 1) * cols + j] + 1;
            let right = back[i * cols + (j + 1)] + 1;
            back[i * cols + j] = diag.min(down).min(right);
        }
    }
    let total = m.distance();
    let mut cells = BTreeSet::new();
    for i in 0..rows {
        for j in 0..cols {
            if m.get(i, j) + back[i * cols + j] == total {
                cells.insert((i, j));
            }
        }
    }
    cells
}

/// Kind of a single edit operation between matrix cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// An atomic operation: one step between adjacent matrix cells.
/// Match/Substitute consume one source and one target token, Insert
/// consumes only a target token, Delete only a source token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomicOp {
    pub kind: OpKind,
    pub src_span: (usize, usize),
    pub tgt_span: (usize, usize),
}

/// One lattice edge: a phrase-level edit between two matrix cells.
/// `cost` is the number of merged atomic parts (unit cost each) until
/// reweighting makes it negative for gold-matching edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeEdge {
    pub from: Cell,
    pub to: Cell,
    pub src_phrase: String,
    pub tgt_phrase: String,
    pub cost: i64,
}

impl LatticeEdge {
    /// Source span in token offsets, implied by the lattice position.
    pub fn src_span(&self) -> (usize, usize) {
        (self.from.0, self.to.0)
    }

    /// An edge is a change when it rewrites its source phrase.
    pub fn is_change(&self) -> bool {
        self.src_phrase != self.tgt_phrase
    }
}

/// Weighted DAG over the shortest-path cells of a Levenshtein matrix.
/// Every edge strictly increases `i + j`, so a topological order always
/// exists. Paths from `(0, 0)` to the terminal cell spell out exactly the
/// minimal edit sequences transforming source into target.
#[derive(Debug, Clone)]
pub struct EditLattice {
    vertices: Vec<Cell>,
    edges: Vec<LatticeEdge>,
    /// Outgoing edge indices per vertex.
    out: HashMap<Cell, Vec<usize>>,
    terminal: Cell,
}

impl EditLattice {
    /// Vertices in topological order (by `i + j`, then `i`).
    pub fn vertices(&self) -> &[Cell] {
        &self.vertices
    }

    pub fn edges(&self) -> &[LatticeEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn terminal(&self) -> Cell {
        self.terminal
    }

    pub fn outgoing(&self, v: Cell) -> &[usize] {
        self.out.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find_edge(&self, from: Cell, to: Cell) -> Option<&LatticeEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Text dump, one `i,j -> k,l : "src / tgt" (cost)` line per edge.
    /// Empty phrases print as the empty-set sign.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let src = if e.src_phrase.is_empty() {
                "\u{2205}"
            } else {
                &e.src_phrase
            };
            let tgt = if e.tgt_phrase.is_empty() {
                "\u{2205}"
            } else {
                &e.tgt_phrase
            };
            let _ = writeln!(
                out,
                "{},{} -> {},{} : \"{} / {}\" ({})",
                e.from.0, e.from.1, e.to.0, e.to.1, src, tgt, e.cost
            );
        }
        out
    }
}

/// Builds the edit lattice for a source/target pair.
///
/// Vertices are the shortest-path cells. Single-operation edges connect
/// adjacent cells along minimal paths; transitive edges merge runs of 2 to
/// `u + 1` consecutive operations containing at least one change (pure
/// match runs are never merged). Parallel routes between the same pair of
/// cells collapse into one edge with the minimal part count.
pub fn build_lattice(source: &[&str], target: &[&str], u: usize) -> EditLattice {
    let matrix = lev_matrix(source, target);
    let cells = shortest_path_cells(&matrix);
    let terminal = (matrix.rows() - 1, matrix.cols() - 1);

    // Atomic steps between shortest-path cells that stay on a minimal path.
    let mut atomic: BTreeMap<Cell, Vec<AtomicOp>> = BTreeMap::new();
    for &(i, j) in &cells {
        let mut steps = Vec::new();
        if i < source.len() && j < target.len() && cells.contains(&(i + 1, j + 1)) {
            let equal = source[i] == target[j];
            let step_cost = u32::from(!equal);
            if matrix.get(i + 1, j + 1) == matrix.get(i, j) + step_cost {
                steps.push(AtomicOp {
                    kind: if equal {
                        OpKind::Match
                    } else {
                        OpKind::Substitute
                    },
                    src_span: (i, i + 1),
                    tgt_span: (j, j + 1),
                });
            }
        }
        if j < target.len()
            && cells.contains(&(i, j + 1))
            && matrix.get(i, j + 1) == matrix.get(i, j) + 1
        {
            steps.push(AtomicOp {
                kind: OpKind::Insert,
                src_span: (i, i),
                tgt_span: (j, j + 1),
            });
        }
        if i < source.len()
            && cells.contains(&(i + 1, j))
            && matrix.get(i + 1, j) == matrix.get(i, j) + 1
        {
            steps.push(AtomicOp {
                kind: OpKind::Delete,
                src_span: (i, i + 1),
                tgt_span: (j, j),
            });
        }
        if !steps.is_empty() {
            atomic.insert((i, j), steps);
        }
    }

    // Edge map keyed by (from, to); value = minimal part count.
    let mut edge_costs: BTreeMap<(Cell, Cell), i64> = BTreeMap::new();
    for (&from, steps) in &atomic {
        for op in steps {
            let to = (op.src_span.1, op.tgt_span.1);
            merge_min(&mut edge_costs, from, to, 1);
        }
    }

    // Transitive edges: walk every run of at most u + 1 consecutive atomic
    // operations; keep runs of length >= 2 containing at least one change.
    if u >= 1 {
        for &start in atomic.keys() {
            let mut stack = vec![(start, 0usize, 0usize)];
            while let Some((at, ops, changes)) = stack.pop() {
                if ops > u {
                    continue;
                }
                if let Some(steps) = atomic.get(&at) {
                    for op in steps {
                        let next = (op.src_span.1, op.tgt_span.1);
                        let changed = usize::from(op.kind != OpKind::Match);
                        let (ops, changes) = (ops + 1, changes + changed);
                        if ops >= 2 && changes >= 1 {
                            merge_min(&mut edge_costs, start, next, ops as i64);
                        }
                        stack.push((next, ops, changes));
                    }
                }
            }
        }
    }

    let edges: Vec<LatticeEdge> = edge_costs
        .into_iter()
        .map(|((from, to), cost)| LatticeEdge {
            src_phrase: source[from.0..to.0].join(" "),
            tgt_phrase: target[from.1..to.1].join(" "),
            from,
            to,
            cost,
        })
        .collect();

    let mut vertices: Vec<Cell> = cells.into_iter().collect();
    vertices.sort_by_key(|&(i, j)| (i + j, i));
    let mut out: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (idx, e) in edges.iter().enumerate() {
        out.entry(e.from).or_default().push(idx);
    }
    EditLattice {
        vertices,
        edges,
        out,
        terminal,
    }
}

fn merge_min(map: &mut BTreeMap<(Cell, Cell), i64>, from: Cell, to: Cell, cost: i64) {
    map.entry((from, to))
        .and_modify(|c| *c = (*c).min(cost))
        .or_insert(cost);
}
