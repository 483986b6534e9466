//! Leaf order of an average-linkage dendrogram.

use ndarray::Array2;

use crate::math::sum::NeumaierSum;

enum Node {
    Leaf(usize),
    Merge(Box<Node>, Box<Node>),
}

impl Node {
    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Node::Leaf(i) => out.push(*i),
            Node::Merge(l, r) => {
                l.leaves(out);
                r.leaves(out);
            }
        }
    }
}

struct Cluster {
    /// Sorted ascending, so `members[0]` is the minimal index.
    members: Vec<usize>,
    node: Node,
}

fn linkage(a: &Cluster, b: &Cluster, dist: &Array2<f64>) -> f64 {
    let mut acc = NeumaierSum::new();
    for &i in &a.members {
        for &j in &b.members {
            acc.add(dist[[i, j]]);
        }
    }
    acc.value() / (a.members.len() * b.members.len()) as f64
}

/// Model permutation from agglomerative clustering of `similarity` with
/// average linkage on `1 - similarity`.
///
/// Equal linkage distances are resolved towards the pair whose minimal
/// member indices are smallest, compared lexicographically. In every merge
/// the cluster holding the smaller index becomes the left child.
pub fn hierarchical_order(similarity: &Array2<f64>) -> Vec<usize> {
    let m = similarity.nrows();
    // symmetrize so the result does not depend on which triangle is read
    let dist = Array2::from_shape_fn((m, m), |(i, j)| {
        1.0 - 0.5 * (similarity[[i, j]] + similarity[[j, i]])
    });
    // kept sorted by minimal member index
    let mut clusters: Vec<Cluster> = (0..m)
        .map(|i| Cluster {
            members: vec![i],
            node: Node::Leaf(i),
        })
        .collect();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = linkage(&clusters[a], &clusters[b], &dist);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        let mut members = left.members;
        members.extend(right.members);
        members.sort_unstable();
        let merged = Cluster {
            members,
            node: Node::Merge(Box::new(left.node), Box::new(right.node)),
        };
        let pos = clusters
            .iter()
            .position(|c| c.members[0] > merged.members[0])
            .unwrap_or(clusters.len());
        clusters.insert(pos, merged);
    }
    let mut order = Vec::with_capacity(m);
    if let Some(root) = clusters.pop() {
        root.node.leaves(&mut order);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_blocks_are_contiguous() {
        let s = array![
            [1.0, 0.1, 0.9, 0.1],
            [0.1, 1.0, 0.1, 0.9],
            [0.9, 0.1, 1.0, 0.1],
            [0.1, 0.9, 0.1, 1.0],
        ];
        assert_eq!(hierarchical_order(&s), vec![0, 2, 1, 3]);
    }

    #[test]
    fn two_models_identity() {
        assert_eq!(hierarchical_order(&array![[1.0, 0.3], [0.3, 1.0]]), vec![0, 1]);
        assert_eq!(hierarchical_order(&array![[1.0]]), vec![0]);
    }

    #[test]
    fn five_model_manual_trace() {
        // distances:
        //   d01 .1  d23 .2  d14 .3  d04 .5  d13 .6  d12 .7  d03 .8  d34 .85  d02 .9  d24 .95
        // merges: {0,1} at .1; {2,3} at .2; {0,1}+4 at (.5+.3)/2 = .4
        //   (vs {0,1}-{2,3} = .75 and {2,3}-4 = .9); then the two remaining.
        // leaf order: ((0 1) 4) (2 3)
        let d = [
            [0.0, 0.1, 0.9, 0.8, 0.5],
            [0.1, 0.0, 0.7, 0.6, 0.3],
            [0.9, 0.7, 0.0, 0.2, 0.95],
            [0.8, 0.6, 0.2, 0.0, 0.85],
            [0.5, 0.3, 0.95, 0.85, 0.0],
        ];
        let s = Array2::from_shape_fn((5, 5), |(i, j)| 1.0 - d[i][j]);
        assert_eq!(hierarchical_order(&s), vec![0, 1, 4, 2, 3]);
    }

    #[test]
    fn ties_prefer_smallest_indices() {
        // all distances equal: merges (0,1), then ({0,1},2), ... -> identity
        let s = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 1.0 } else { 0.5 });
        assert_eq!(hierarchical_order(&s), vec![0, 1, 2, 3]);
    }

    #[test]
    fn output_is_permutation() {
        let s = Array2::from_shape_fn((7, 7), |(i, j)| {
            if i == j {
                1.0
            } else {
                ((i * 7 + j * 3 + i * j) % 11) as f64 / 11.0 * 0.5 + ((j * 7 + i * 3 + i * j) % 11) as f64 / 22.0
            }
        });
        let mut o = hierarchical_order(&s);
        o.sort();
        assert_eq!(o, (0..7).collect::<Vec<_>>());
    }
}
