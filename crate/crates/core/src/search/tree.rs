use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{Evaluator, SearchConfig};
use crate::board::{Action, ActionMask, Board, EpisodeOutcome, RewardParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub action: Action,
    pub prior: f64,
    pub visits: u32,
    pub value_sum: f64,
    pub child: Option<u32>,
}

impl Edge {
    /// Mean backed-up value, 0 while unvisited.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub board: Board,
    pub mask: ActionMask,
    pub terminal: Option<EpisodeOutcome>,
    pub expanded: bool,
    /// Evaluator value at expansion.
    pub value: f64,
    pub visits: u32,
    /// Simulations that ended at this node rather than passing through it.
    pub leaf_visits: u32,
    /// One edge per legal action, in increasing action index.
    pub edges: Vec<Edge>,
}

impl Node {
    fn new(board: Board, cfg: &SearchConfig) -> Self {
        let mask = cfg.mask(&board);
        let terminal = terminal_outcome(&board, &mask, &cfg.reward);
        Self {
            board,
            mask,
            terminal,
            expanded: false,
            value: 0.0,
            visits: 0,
            leaf_visits: 0,
            edges: Vec::new(),
        }
    }
}

/// Terminal status of a board, counting a conflicted board without legal
/// actions as a failure.
pub(crate) fn terminal_outcome(board: &Board, mask: &ActionMask, reward: &RewardParams) -> Option<EpisodeOutcome> {
    board
        .evaluate(reward)
        .or_else(|| (!mask.any()).then(|| board.dead_end_outcome(reward)))
}

fn select_edge(node: &Node, c_puct: f64) -> Option<usize> {
    let total: u32 = node.edges.iter().map(|e| e.visits).sum();
    let sqrt_total = (total.max(1) as f64).sqrt();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in node.edges.iter().enumerate() {
        let score = e.q() + c_puct * e.prior * sqrt_total / (1.0 + e.visits as f64);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

/// PUCT choice at an expanded node; ties go to the lowest action index.
pub fn select(node: &Node, c_puct: f64) -> Option<Action> {
    select_edge(node, c_puct).map(|i| node.edges[i].action)
}

fn argmax_legal(priors: &[f64], mask: &ActionMask) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in mask.legal_indices() {
        if best.map_or(true, |(_, p)| priors[i] > p) {
            best = Some((i, priors[i]));
        }
    }
    best.map(|(i, _)| i)
}

/// Arena-allocated search tree rooted at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(board: Board, cfg: &SearchConfig) -> Self {
        Self {
            nodes: vec![Node::new(board, cfg)],
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the child reached through `action`, if it was ever created.
    pub fn child(&self, index: usize, action: Action) -> Option<usize> {
        self.nodes[index]
            .edges
            .iter()
            .find(|e| e.action == action)
            .and_then(|e| e.child.map(|c| c as usize))
    }

    /// Every node's visits equal its leaf visits plus its edge visits.
    pub fn visits_conserved(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.visits == n.leaf_visits + n.edges.iter().map(|e| e.visits).sum::<u32>())
    }

    /// One selection, expansion, evaluation and backup. Returns the value
    /// that was backed up.
    pub fn simulate_once<E: Evaluator + ?Sized>(&mut self, eval: &E, cfg: &SearchConfig) -> Result<f64> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut cur = 0usize;
        let value = loop {
            let node = &self.nodes[cur];
            if let Some(outcome) = node.terminal {
                break outcome.reward;
            }
            if !node.expanded {
                break self.expand(cur, path.len() as u32, eval, cfg)?;
            }
            if node.edges.is_empty() {
                // Depth-capped leaf.
                break node.value;
            }
            let e = select_edge(node, cfg.c_puct).expect("expanded node has edges");
            let child = match node.edges[e].child {
                Some(c) => c as usize,
                None => {
                    let board = node.board.apply(node.edges[e].action)?;
                    let idx = self.nodes.len();
                    self.nodes.push(Node::new(board, cfg));
                    self.nodes[cur].edges[e].child = Some(idx as u32);
                    idx
                }
            };
            path.push((cur, e));
            cur = child;
        };
        let leaf = &mut self.nodes[cur];
        leaf.visits += 1;
        leaf.leaf_visits += 1;
        for &(n, e) in &path {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.edges[e].visits += 1;
            node.edges[e].value_sum += value;
        }
        Ok(value)
    }

    fn expand<E: Evaluator + ?Sized>(&mut self, index: usize, depth: u32, eval: &E, cfg: &SearchConfig) -> Result<f64> {
        let node = &self.nodes[index];
        let (priors, value) = eval.evaluate(&node.board, &node.mask)?;
        if priors.len() != node.mask.as_slice().len() {
            return Err(Error::Dimension(format!("evaluator returned {} priors", priors.len())));
        }
        let capped = depth >= cfg.max_depth;
        let leaf_value = if capped || cfg.rollout_depth == 0 {
            value
        } else {
            rollout(&node.board, &node.mask, &priors, value, eval, cfg)?
        };
        let edges = if capped {
            Vec::new()
        } else {
            node.mask
                .legal_indices()
                .map(|i| Edge {
                    action: Action::from_index(i),
                    prior: priors[i],
                    visits: 0,
                    value_sum: 0.0,
                    child: None,
                })
                .collect()
        };
        let node = &mut self.nodes[index];
        node.edges = edges;
        node.value = value;
        node.expanded = true;
        Ok(leaf_value)
    }

    /// Mixes Dirichlet noise into the root priors.
    pub fn add_root_noise<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: &SearchConfig) {
        let root = &mut self.nodes[0];
        if root.edges.is_empty() || cfg.dirichlet_fraction <= 0.0 {
            return;
        }
        let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).expect("alpha validated positive");
        let noise: Vec<f64> = root.edges.iter().map(|_| gamma.sample(rng)).collect();
        let total: f64 = noise.iter().sum();
        if !(total > 0.0) {
            return;
        }
        let f = cfg.dirichlet_fraction;
        for (e, n) in root.edges.iter_mut().zip(noise) {
            e.prior = (1.0 - f) * e.prior + f * n / total;
        }
    }

    /// Root action with the most visits; ties go to the higher mean value,
    /// then to the lowest index.
    pub fn most_visited(&self) -> Option<Action> {
        let mut best: Option<&Edge> = None;
        for e in &self.root().edges {
            if best.map_or(true, |b| e.visits > b.visits || (e.visits == b.visits && e.q() > b.q())) {
                best = Some(e);
            }
        }
        best.map(|e| e.action)
    }

    /// The subtree below `action` as a new tree. Statistics of the kept
    /// nodes are preserved; depth-capped leaves are reopened for expansion.
    pub fn advance(self, action: Action, cfg: &SearchConfig) -> Result<Tree> {
        let Some(start) = self.child(0, action) else {
            let board = self.nodes[0].board.apply(action)?;
            return Ok(Tree::new(board, cfg));
        };
        let mut old = self.nodes;
        let mut remap = vec![u32::MAX; old.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            remap[i] = order.len() as u32;
            order.push(i);
            queue.extend(old[i].edges.iter().filter_map(|e| e.child.map(|c| c as usize)));
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &i in &order {
            let mut n = std::mem::replace(&mut old[i], placeholder());
            for e in &mut n.edges {
                e.child = e.child.map(|c| remap[c as usize]);
            }
            if n.expanded && n.edges.is_empty() && n.terminal.is_none() {
                n.expanded = false;
            }
            nodes.push(n);
        }
        Ok(Tree { nodes })
    }
}

fn placeholder() -> Node {
    Node {
        board: Board::empty(0),
        mask: ActionMask::none(),
        terminal: None,
        expanded: false,
        value: 0.0,
        visits: 0,
        leaf_visits: 0,
        edges: Vec::new(),
    }
}

/// Greedy policy steps from a freshly expanded leaf. Returns the terminal
/// reward if one is reached, else the evaluator value at the endpoint.
fn rollout<E: Evaluator + ?Sized>(
    board: &Board,
    mask: &ActionMask,
    priors: &[f64],
    value: f64,
    eval: &E,
    cfg: &SearchConfig,
) -> Result<f64> {
    let mut board = board.clone();
    let mut mask = mask.clone();
    let mut priors = priors.to_vec();
    let mut value = value;
    for _ in 0..cfg.rollout_depth {
        let a = argmax_legal(&priors, &mask).ok_or(Error::NoLegalAction)?;
        board = board.apply(Action::from_index(a))?;
        mask = cfg.mask(&board);
        if let Some(outcome) = terminal_outcome(&board, &mask, &cfg.reward) {
            return Ok(outcome.reward);
        }
        (priors, value) = eval.evaluate(&board, &mask)?;
    }
    Ok(value)
}
