use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::ClientId;

/// Undirected neighbor relation without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adjacency: Vec<BTreeSet<ClientId>>,
}

impl Topology {
    pub fn complete(n: usize) -> Self {
        let adjacency = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| ClientId(j as u32)).collect())
            .collect();
        Self { adjacency }
    }

    /// No edges at all.
    pub fn isolated(n: usize) -> Self {
        Self {
            adjacency: vec![BTreeSet::new(); n],
        }
    }

    pub fn ring(n: usize) -> Self {
        let mut t = Self::isolated(n);
        if n > 1 {
            for i in 0..n {
                t.connect(ClientId(i as u32), ClientId(((i + 1) % n) as u32))
                    .expect("ids in range");
            }
        }
        t
    }

    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut t = Self::isolated(n);
        for &(a, b) in edges {
            t.connect(ClientId(a), ClientId(b))?;
        }
        Ok(t)
    }

    fn connect(&mut self, a: ClientId, b: ClientId) -> Result<()> {
        let n = self.adjacency.len();
        if a.0 as usize >= n || b.0 as usize >= n {
            return Err(Error::Config(format!("edge ({a}, {b}) outside {n} clients")));
        }
        if a == b {
            return Err(Error::Config(format!("self-loop on client {a}")));
        }
        self.adjacency[a.0 as usize].insert(b);
        self.adjacency[b.0 as usize].insert(a);
        Ok(())
    }

    pub fn n_clients(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, id: ClientId) -> impl Iterator<Item = ClientId> + '_ {
        self.adjacency
            .get(id.0 as usize)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, id: ClientId) -> usize {
        self.adjacency.get(id.0 as usize).map_or(0, BTreeSet::len)
    }

    /// Drops every edge touching `id`.
    pub fn detach(&mut self, id: ClientId) {
        if let Some(own) = self.adjacency.get_mut(id.0 as usize) {
            own.clear();
        }
        for s in &mut self.adjacency {
            s.remove(&id);
        }
    }

    /// Symmetric and loop-free.
    pub fn is_valid(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, s)| {
            let me = ClientId(i as u32);
            !s.contains(&me)
                && s.iter().all(|j| {
                    self.adjacency
                        .get(j.0 as usize)
                        .is_some_and(|o| o.contains(&me))
                })
        })
    }
}
