//! Seeded random trees and prediction perturbations for property tests,
//! acceptance runs and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tree::{Label, Node, Tree};

const PHRASE_LABELS: &[&str] = &[
    "S", "SBAR", "NP", "VP", "PP", "ADJP", "ADVP", "QP", "WHNP", "PRN", "FRAG",
];
const WORD_TAGS: &[&str] = &[
    "DT", "NN", "NNS", "NNP", "VB", "VBD", "VBZ", "IN", "JJ", "RB", "CC", "PRP", "CD", "TO",
];
const VOCAB: &[&str] = &[
    "the", "a", "cat", "dog", "Asia", "Singapore", "is", "located", "in", "by", "and", "of",
    "runs", "big", "small", "84", "81", "it", "to", "see", "market", "orders", "China", "with",
    "themselves", "not", "very", "house", "old", "new",
];

/// Size limits for generated trees.
#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    /// Maximum number of nodes on a root-to-preterminal path.
    pub max_depth: usize,
    pub max_tokens: usize,
    /// Probability of inserting a unary phrase above a generated phrase.
    pub unary_rate: f64,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            max_depth: 8,
            max_tokens: 25,
            unary_rate: 0.1,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick<R: Rng>(rng: &mut R, pool: &[&str]) -> Label {
    Label::new(*pool.choose(rng).expect("non-empty pool")).expect("valid label")
}

/// A random valid tree within `shape`.
pub fn random_tree<R: Rng>(rng: &mut R, shape: &TreeShape) -> Tree {
    assert!(shape.max_depth >= 2 && shape.max_tokens >= 1);
    let n = rng.gen_range(1..=shape.max_tokens);
    let root = random_phrase(rng, n, shape.max_depth, shape.unary_rate);
    Tree::new(root).expect("generator builds valid trees")
}

/// Same as [`random_tree`] but with words drawn from `vocab`.
pub fn random_tree_with_vocab<R: Rng>(rng: &mut R, shape: &TreeShape, vocab: &[&str]) -> Tree {
    let tree = random_tree(rng, shape);
    let words: Vec<String> = (0..tree.len())
        .map(|_| vocab.choose(rng).expect("non-empty vocab").to_string())
        .collect();
    let mut i = 0;
    let mut next = || {
        i += 1;
        words[i - 1].clone()
    };
    relabel_words(tree.root(), &mut next)
}

fn relabel_words(root: &Node, next: &mut dyn FnMut() -> String) -> Tree {
    fn go(node: &Node, next: &mut dyn FnMut() -> String) -> Node {
        match node {
            Node::Word { tag, .. } => Node::word(tag.clone(), next()),
            Node::Phrase { label, children } => {
                Node::phrase(label.clone(), children.iter().map(|c| go(c, next)).collect())
            }
        }
    }
    Tree::new(go(root, next)).expect("structure unchanged")
}

fn random_word<R: Rng>(rng: &mut R) -> Node {
    Node::word(
        pick(rng, WORD_TAGS),
        *VOCAB.choose(rng).expect("non-empty vocab"),
    )
}

/// A phrase over exactly `n` leaves whose subtree depth is at most `depth`.
fn random_phrase<R: Rng>(rng: &mut R, n: usize, depth: usize, unary_rate: f64) -> Node {
    let label = pick(rng, PHRASE_LABELS);
    if depth <= 2 {
        return Node::phrase(label, (0..n).map(|_| random_word(rng)).collect());
    }
    if rng.gen_bool(unary_rate) {
        let inner = random_phrase(rng, n, depth - 1, unary_rate);
        return Node::phrase(label, vec![inner]);
    }
    let k = rng.gen_range(1..=n.min(4));
    let mut sizes = vec![1usize; k];
    for _ in k..n {
        let i = rng.gen_range(0..k);
        sizes[i] += 1;
    }
    let children = sizes
        .into_iter()
        .map(|m| {
            if m == 1 && rng.gen_bool(0.6) {
                random_word(rng)
            } else {
                random_phrase(rng, m, depth - 1, unary_rate)
            }
        })
        .collect();
    Node::phrase(label, children)
}

/// A structurally valid prediction derived from `gold` by relabeling some
/// phrases and flattening or regrouping some subtrees. Yield is unchanged.
pub fn perturb<R: Rng>(rng: &mut R, gold: &Tree, rate: f64) -> Tree {
    fn go<R: Rng>(rng: &mut R, node: &Node, rate: f64) -> Node {
        match node {
            Node::Word { .. } => node.clone(),
            Node::Phrase { label, children } => {
                let label = if rng.gen_bool(rate) {
                    pick(rng, PHRASE_LABELS)
                } else {
                    label.clone()
                };
                let mut kids: Vec<Node> = Vec::new();
                for child in children {
                    let child = go(rng, child, rate);
                    match child {
                        // flatten: splice grandchildren into this node
                        Node::Phrase { children: grand, .. } if rng.gen_bool(rate / 2.0) => {
                            kids.extend(grand)
                        }
                        other => kids.push(other),
                    }
                }
                // regroup two adjacent children under a new phrase
                if kids.len() >= 3 && rng.gen_bool(rate / 2.0) {
                    let i = rng.gen_range(0..kids.len() - 1);
                    let pair: Vec<Node> = kids.drain(i..i + 2).collect();
                    kids.insert(i, Node::phrase(pick(rng, PHRASE_LABELS), pair));
                }
                Node::phrase(label, kids)
            }
        }
    }
    Tree::new(go(rng, gold.root(), rate)).expect("perturbation keeps validity")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_trees_respect_shape() {
        let mut r = rng(1);
        let shape = TreeShape::default();
        for _ in 0..500 {
            let t = random_tree(&mut r, &shape);
            assert!(t.len() <= shape.max_tokens);
            assert!(t.root().depth() <= shape.max_depth);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let shape = TreeShape::default();
        let a = random_tree(&mut rng(42), &shape);
        let b = random_tree(&mut rng(42), &shape);
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_keeps_yield() {
        let mut r = rng(3);
        for _ in 0..200 {
            let g = random_tree(&mut r, &TreeShape::default());
            let p = perturb(&mut r, &g, 0.3);
            assert_eq!(g.words(), p.words());
        }
    }
}
