use indexmap::IndexMap;

use pcn_core::{index_claims, ClaimIndex, ClaimLookup, ClaimSet};

pub const DEFAULT_SESSION_CAPACITY: usize = 256;

/// Claims gathered per conversation, bounded with least-recently-used
/// eviction. A later claim with the same id replaces the earlier one, as
/// when a retriever is queried again within one conversation.
#[derive(Debug)]
pub struct SessionStore {
    capacity: usize,
    sessions: IndexMap<String, ClaimIndex>,
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        SessionStore {
            capacity: capacity.max(1),
            sessions: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn contains(&self, session_id: &str) -> bool {
        self.sessions.contains_key(session_id)
    }

    /// Merges `claims` into the session (creating it) and returns its index.
    pub fn register(&mut self, session_id: &str, claims: Option<ClaimSet>) -> ClaimIndex {
        let mut index = self
            .sessions
            .shift_remove(session_id)
            .unwrap_or_else(|| index_claims(ClaimSet::new(format!("session {session_id}"))));
        if let Some(new) = claims.filter(|c| !c.is_empty()) {
            let mut merged: Vec<_> = index
                .iter()
                .filter(|c| new.claims().iter().all(|n| n.claim_id != c.claim_id))
                .cloned()
                .collect();
            merged.extend(new.into_claims());
            let set = ClaimSet::from_claims(format!("session {session_id}"), merged)
                .expect("ids are unique after replacement");
            index = index_claims(set);
        }
        self.sessions.insert(session_id.to_string(), index.clone());
        while self.sessions.len() > self.capacity {
            self.sessions.shift_remove_index(0);
        }
        index
    }

    /// Looks a claim up in one session, marking the session as used.
    pub fn lookup(&mut self, session_id: &str, claim_id: &str) -> Option<pcn_core::Claim> {
        let at = self.sessions.get_index_of(session_id)?;
        let last = self.sessions.len() - 1;
        self.sessions.move_index(at, last);
        self.sessions[last].lookup(claim_id).cloned()
    }
}
