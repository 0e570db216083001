//! Data-flow graph extraction.
//!
//! Nodes are variable occurrences in source order. An edge `⟨i, j⟩` means
//! the value of occurrence `j` comes from occurrence `i`:
//!
//! 1. `x = expr` adds an edge from every variable in `expr` to `x`.
//! 2. Every use receives edges from all definitions of the same name that
//!    reach it. Branches merge by union; loops iterate to a fixed point so
//!    in-body definitions reach the loop header and later uses.
//! 3. `x op= e` is `x = x op e`: the single `x` occurrence is fed by the
//!    reaching definitions of `x` and by `e`, then becomes the definition.
//! 4. Parameters are definitions without incoming edges.
//! 5. Call targets are not variables; call arguments are uses.
//!
//! A `return` ends its path: definitions do not flow past it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::frontend::{Ast, Expr, Ident, Stmt, StmtKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Definition,
    Use,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableNode {
    pub id: usize,
    pub name: String,
    pub token_index: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DataFlowGraph {
    pub nodes: Vec<VariableNode>,
    /// `(src, dst)` node ids, never `src == dst`.
    pub edges: BTreeSet<(usize, usize)>,
    /// `(node id, token index)`, one per node.
    pub alignment: BTreeSet<(usize, usize)>,
}

impl DataFlowGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |&&(_, d)| d == node).map(|&(s, _)| s)
    }
}

/// Builds the data-flow graph of a parsed program.
pub fn build_dfg(ast: &Ast) -> DataFlowGraph {
    let mut sites = Vec::new();
    collect_sites(&ast.body, &mut sites);
    sites.sort_by_key(|s| s.0);

    let nodes: Vec<VariableNode> = sites
        .into_iter()
        .enumerate()
        .map(|(id, (token_index, name, role))| VariableNode { id, name, token_index, role })
        .collect();
    let by_token: HashMap<usize, usize> = nodes.iter().map(|n| (n.token_index, n.id)).collect();

    let mut flow = Flow { by_token: &by_token, edges: BTreeSet::new() };
    flow.block(&ast.body, Some(Env::default()));

    let alignment = nodes.iter().map(|n| (n.id, n.token_index)).collect();
    DataFlowGraph { nodes, edges: flow.edges, alignment }
}

/// The node/token pairs linking each variable to the code token it came from.
pub fn align_to_tokens(dfg: &DataFlowGraph) -> BTreeSet<(usize, usize)> {
    dfg.nodes.iter().map(|n| (n.id, n.token_index)).collect()
}

fn collect_sites(body: &[Stmt], out: &mut Vec<(usize, String, Role)>) {
    let def = |id: &Ident, out: &mut Vec<_>| out.push((id.token, id.name.clone(), Role::Definition));
    let uses = |e: &Expr, out: &mut Vec<_>| e.for_each_name(&mut |id: &Ident| out.push((id.token, id.name.clone(), Role::Use)));
    for stmt in body {
        match &stmt.kind {
            StmtKind::FunctionDef { params, body, .. } => {
                params.iter().for_each(|p| def(p, out));
                collect_sites(body, out);
            }
            StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
                def(target, out);
                uses(value, out);
            }
            StmtKind::If { branches, orelse } => {
                for (test, b) in branches {
                    uses(test, out);
                    collect_sites(b, out);
                }
                if let Some(b) = orelse {
                    collect_sites(b, out);
                }
            }
            StmtKind::While { test, body } => {
                uses(test, out);
                collect_sites(body, out);
            }
            StmtKind::For { target, iter, body } => {
                def(target, out);
                uses(iter, out);
                collect_sites(body, out);
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    uses(e, out);
                }
            }
            StmtKind::Expr(e) => uses(e, out),
        }
    }
}

/// Reaching definitions: variable name → defining node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Env(BTreeMap<String, BTreeSet<usize>>);

impl Env {
    fn union(&mut self, other: &Env) {
        for (k, v) in &other.0 {
            self.0.entry(k.clone()).or_default().extend(v.iter().copied());
        }
    }
}

/// `None` marks an unreachable program point (after `return`).
type State = Option<Env>;

fn join(a: State, b: &State) -> State {
    match (a, b) {
        (None, None) => None,
        (None, Some(b)) => Some(b.clone()),
        (Some(a), None) => Some(a),
        (Some(mut a), Some(b)) => {
            a.union(b);
            Some(a)
        }
    }
}

struct Flow<'a> {
    by_token: &'a HashMap<usize, usize>,
    edges: BTreeSet<(usize, usize)>,
}

impl Flow<'_> {
    fn node(&self, id: &Ident) -> usize {
        self.by_token[&id.token]
    }

    fn edge(&mut self, src: usize, dst: usize) {
        if src != dst {
            self.edges.insert((src, dst));
        }
    }

    /// Resolves every use in `expr` against `state`; returns the use nodes.
    fn uses(&mut self, expr: &Expr, state: &State) -> Vec<usize> {
        let mut ids = Vec::new();
        expr.for_each_name(&mut |id: &Ident| ids.push((id.name.clone(), self.node(id))));
        for (name, node) in &ids {
            if let Some(defs) = state.as_ref().and_then(|env| env.0.get(name)) {
                for &d in defs {
                    self.edge(d, *node);
                }
            }
        }
        ids.into_iter().map(|(_, n)| n).collect()
    }

    fn define(&mut self, target: &Ident, sources: &[usize], state: &mut State) {
        let node = self.node(target);
        for &s in sources {
            self.edge(s, node);
        }
        if let Some(env) = state {
            env.0.insert(target.name.clone(), BTreeSet::from([node]));
        }
    }

    fn block(&mut self, body: &[Stmt], mut state: State) -> State {
        for stmt in body {
            state = self.stmt(stmt, state);
        }
        state
    }

    fn stmt(&mut self, stmt: &Stmt, mut state: State) -> State {
        match &stmt.kind {
            StmtKind::FunctionDef { params, body, .. } => {
                let mut inner = Some(state.clone().unwrap_or_default());
                for p in params {
                    self.define(p, &[], &mut inner);
                }
                self.block(body, inner);
                state
            }
            StmtKind::Assign { target, value } => {
                let srcs = self.uses(value, &state);
                self.define(target, &srcs, &mut state);
                state
            }
            StmtKind::AugAssign { target, value, .. } => {
                let node = self.node(target);
                if let Some(defs) = state.as_ref().and_then(|env| env.0.get(&target.name)).cloned() {
                    for d in defs {
                        self.edge(d, node);
                    }
                }
                let srcs = self.uses(value, &state);
                self.define(target, &srcs, &mut state);
                state
            }
            StmtKind::If { branches, orelse } => {
                let mut merged: State = None;
                let mut fallthrough = state;
                for (test, body) in branches {
                    self.uses(test, &fallthrough);
                    let out = self.block(body, fallthrough.clone());
                    merged = join(merged, &out);
                }
                if let Some(body) = orelse {
                    fallthrough = self.block(body, fallthrough);
                }
                join(merged, &fallthrough)
            }
            StmtKind::While { test, body } => {
                let mut header = state;
                loop {
                    self.uses(test, &header);
                    let out = self.block(body, header.clone());
                    let next = join(header.clone(), &out);
                    if next == header {
                        break header;
                    }
                    header = next;
                }
            }
            StmtKind::For { target, iter, body } => {
                let srcs = self.uses(iter, &state);
                let mut header = state;
                loop {
                    let mut entry = header.clone();
                    self.define(target, &srcs, &mut entry);
                    let out = self.block(body, entry);
                    let next = join(header.clone(), &out);
                    if next == header {
                        break header;
                    }
                    header = next;
                }
            }
            StmtKind::Return(e) => {
                if let Some(e) = e {
                    self.uses(e, &state);
                }
                None
            }
            StmtKind::Expr(e) => {
                self.uses(e, &state);
                state
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfgJsonNode {
    pub id: usize,
    pub name: String,
    pub token: usize,
}

/// Interchange form: `{"nodes":[{"id","name","token"}...],"edges":[[src,dst]...]}`
/// with edges sorted lexicographically. Roles are not part of the format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfgJson {
    pub nodes: Vec<DfgJsonNode>,
    pub edges: Vec<[usize; 2]>,
}

impl From<&DataFlowGraph> for DfgJson {
    fn from(g: &DataFlowGraph) -> Self {
        DfgJson {
            nodes: g
                .nodes
                .iter()
                .map(|n| DfgJsonNode { id: n.id, name: n.name.clone(), token: n.token_index })
                .collect(),
            edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
        }
    }
}

impl DfgJson {
    pub fn alignment(&self) -> BTreeSet<(usize, usize)> {
        self.nodes.iter().map(|n| (n.id, n.token)).collect()
    }
}

pub fn serialize_dfg(dfg: &DataFlowGraph) -> String {
    serde_json::to_string(&DfgJson::from(dfg)).expect("plain data always serializes")
}

pub fn deserialize_dfg(text: &str) -> serde_json::Result<DfgJson> {
    serde_json::from_str(text)
}
