//! Depth-limited minimax with alpha-beta pruning over candidate trees.

use std::cmp::Ordering;

use crate::scalar::Scalar;

/// A leaf score with a deterministic tie-break: on equal values the larger
/// `tie` ranks higher.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score<T> {
    pub value: T,
    pub tie: u64,
}

impl<T: Scalar> Score<T> {
    pub fn new(value: T) -> Self {
        Self { value, tie: 0 }
    }

    pub fn with_tie(value: T, tie: u64) -> Self {
        Self { value, tie }
    }

    pub fn neg_inf() -> Self {
        Self::with_tie(T::neg_infinity(), 0)
    }

    pub fn pos_inf() -> Self {
        Self::with_tie(T::infinity(), u64::MAX)
    }
}

impl<T: Scalar> PartialOrd for Score<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match self.value.partial_cmp(&o.value)? {
            Ordering::Equal => Some(self.tie.cmp(&o.tie)),
            ord => Some(ord),
        }
    }
}

/// `id` is the candidate index at leaves and `-1` at unresolved internal
/// nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GameTreeNode<T> {
    pub id: i64,
    pub score: Score<T>,
    pub children: Vec<GameTreeNode<T>>,
}

impl<T: Scalar> GameTreeNode<T> {
    pub fn leaf(id: usize) -> Self {
        Self {
            id: id as i64,
            score: Score::neg_inf(),
            children: Vec::new(),
        }
    }

    pub fn internal(maximizing: bool, children: Vec<GameTreeNode<T>>) -> Self {
        Self {
            id: -1,
            score: if maximizing { Score::neg_inf() } else { Score::pos_inf() },
            children,
        }
    }

    fn resolved(&self) -> Self {
        Self {
            id: self.id,
            score: self.score,
            children: Vec::new(),
        }
    }
}

/// Shuffled leaves grouped left to right under `⌈√n⌉` min nodes beneath a
/// max root.
pub fn build_tree<T: Scalar>(leaves: &[usize]) -> GameTreeNode<T> {
    let n = leaves.len();
    let groups = (n as f64).sqrt().ceil().max(1.0) as usize;
    let per = n.div_ceil(groups).max(1);
    let children = leaves
        .chunks(per)
        .map(|c| GameTreeNode::internal(false, c.iter().map(|&i| GameTreeNode::leaf(i)).collect()))
        .collect();
    GameTreeNode::internal(true, children)
}

/// Returns the node carrying the minimax value, with `id` identifying the
/// chosen leaf. Leaves are scored by `evaluate`.
pub fn minimax_alpha_beta<T: Scalar>(
    depth: usize,
    maximizing: bool,
    node: &GameTreeNode<T>,
    mut alpha: Score<T>,
    mut beta: Score<T>,
    evaluate: &mut impl FnMut(&GameTreeNode<T>) -> Score<T>,
) -> GameTreeNode<T> {
    if depth == 0 || node.children.is_empty() {
        let mut leaf = node.resolved();
        leaf.score = evaluate(node);
        return leaf;
    }
    let mut best = GameTreeNode::internal(maximizing, Vec::new());
    for child in &node.children {
        let v = minimax_alpha_beta(depth - 1, !maximizing, child, alpha, beta, evaluate);
        if maximizing {
            if v.score > best.score {
                best = v;
            }
            if best.score > alpha {
                alpha = best.score;
            }
        } else {
            if v.score < best.score {
                best = v;
            }
            if best.score < beta {
                beta = best.score;
            }
        }
        if beta <= alpha {
            break;
        }
    }
    best
}

/// Plain minimax without pruning.
pub fn minimax<T: Scalar>(
    depth: usize,
    maximizing: bool,
    node: &GameTreeNode<T>,
    evaluate: &mut impl FnMut(&GameTreeNode<T>) -> Score<T>,
) -> GameTreeNode<T> {
    if depth == 0 || node.children.is_empty() {
        let mut leaf = node.resolved();
        leaf.score = evaluate(node);
        return leaf;
    }
    let mut best = GameTreeNode::internal(maximizing, Vec::new());
    for child in &node.children {
        let v = minimax(depth - 1, !maximizing, child, evaluate);
        if (maximizing && v.score > best.score) || (!maximizing && v.score < best.score) {
            best = v;
        }
    }
    best
}
