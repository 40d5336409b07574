use std::collections::HashMap;

use super::{CorpusError, InteractionLog};

/// Keeps only events whose user and item both retain at least `k` events
/// after iterated removal. Surviving events keep their file order.
///
/// The result is the unique maximal sub-log with that property, so it equals
/// what repeated simultaneous scan-and-remove passes reach. Here it is found
/// by peeling: counts are decremented as events are dropped and newly
/// violating users or items are queued.
pub fn kcore_filter(log: &InteractionLog, k: usize) -> Result<InteractionLog, CorpusError> {
    if k == 0 {
        return Err(CorpusError::Config("k-core requires k >= 1".into()));
    }
    let mut user_ix: HashMap<&str, usize> = HashMap::new();
    let mut item_ix: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::with_capacity(log.len());
    for e in &log.events {
        let n = user_ix.len();
        let u = *user_ix.entry(e.user_id.as_str()).or_insert(n);
        let n = item_ix.len();
        let i = *item_ix.entry(e.item_id.as_str()).or_insert(n);
        edges.push((u, i));
    }

    let mut user_edges = vec![Vec::new(); user_ix.len()];
    let mut item_edges = vec![Vec::new(); item_ix.len()];
    for (ix, &(u, i)) in edges.iter().enumerate() {
        user_edges[u].push(ix);
        item_edges[i].push(ix);
    }
    let mut user_deg: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut alive = vec![true; edges.len()];
    let mut user_gone = vec![false; user_deg.len()];
    let mut item_gone = vec![false; item_deg.len()];

    enum Node {
        User(usize),
        Item(usize),
    }
    let mut queue: Vec<Node> = user_deg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d < k)
        .map(|(u, _)| Node::User(u))
        .chain(
            item_deg
                .iter()
                .enumerate()
                .filter(|(_, &d)| d < k)
                .map(|(i, _)| Node::Item(i)),
        )
        .collect();

    while let Some(node) = queue.pop() {
        let incident = match node {
            Node::User(u) if !user_gone[u] => {
                user_gone[u] = true;
                &user_edges[u]
            }
            Node::Item(i) if !item_gone[i] => {
                item_gone[i] = true;
                &item_edges[i]
            }
            _ => continue,
        };
        for &ix in incident {
            if !alive[ix] {
                continue;
            }
            alive[ix] = false;
            let (u, i) = edges[ix];
            user_deg[u] -= 1;
            item_deg[i] -= 1;
            if !user_gone[u] && user_deg[u] < k {
                queue.push(Node::User(u));
            }
            if !item_gone[i] && item_deg[i] < k {
                queue.push(Node::Item(i));
            }
        }
    }

    Ok(InteractionLog::new(
        log.events
            .iter()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(e, _)| e.clone())
            .collect(),
    ))
}
