use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{tree_sum, ReductionGroup, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};

type RoundResult = std::result::Result<Arc<Vec<f64>>, String>;

#[derive(Debug)]
struct Rendezvous {
    slots: Vec<Option<Vec<f64>>>,
    arrived: usize,
    generation: u64,
    result: Option<RoundResult>,
}

#[derive(Debug)]
struct Shared {
    size: usize,
    state: Mutex<Rendezvous>,
    done: Condvar,
}

/// In-process transport: `M` members sharing one rendezvous cell. The last
/// member to arrive computes the tree-order sum for everyone.
#[derive(Debug)]
pub struct LocalGroup;

impl LocalGroup {
    pub fn new(size: usize) -> Vec<LocalMember> {
        Self::with_timeout(size, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(size: usize, timeout: Duration) -> Vec<LocalMember> {
        assert!(size > 0, "group needs at least one member");
        let shared = Arc::new(Shared {
            size,
            state: Mutex::new(Rendezvous {
                slots: vec![None; size],
                arrived: 0,
                generation: 0,
                result: None,
            }),
            done: Condvar::new(),
        });
        (0..size)
            .map(|rank| LocalMember {
                rank,
                shared: Arc::clone(&shared),
                timeout,
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct LocalMember {
    rank: usize,
    shared: Arc<Shared>,
    timeout: Duration,
}

impl LocalMember {
    fn collective(&mut self, local: &[f64]) -> Result<Arc<Vec<f64>>> {
        let shared = &*self.shared;
        let mut st = shared.state.lock().expect("rendezvous lock poisoned");
        let generation = st.generation;
        if st.slots[self.rank].is_some() {
            return Err(Error::Protocol(format!(
                "rank {} entered the same collective twice",
                self.rank
            )));
        }
        st.slots[self.rank] = Some(local.to_vec());
        st.arrived += 1;

        if st.arrived == shared.size {
            let slots: Vec<Vec<f64>> = st.slots.iter_mut().map(|s| s.take().unwrap()).collect();
            let len = slots[0].len();
            let result = match slots.iter().position(|s| s.len() != len) {
                Some(r) => Err(format!(
                    "vector length mismatch: rank 0 sent {len}, rank {r} sent {}",
                    slots[r].len()
                )),
                None => {
                    let views: Vec<&[f64]> = slots.iter().map(Vec::as_slice).collect();
                    Ok(Arc::new(tree_sum(&views)))
                }
            };
            st.result = Some(result.clone());
            st.arrived = 0;
            st.generation += 1;
            shared.done.notify_all();
            return result.map_err(Error::Protocol);
        }

        let deadline = Instant::now() + self.timeout;
        while st.generation == generation {
            let now = Instant::now();
            if now >= deadline {
                let missing = st
                    .slots
                    .iter()
                    .position(Option::is_none)
                    .unwrap_or(self.rank);
                return Err(Error::ReductionFailed {
                    rank: missing,
                    reason: format!("timed out after {:?} waiting for rank {missing}", self.timeout),
                });
            }
            st = shared
                .done
                .wait_timeout(st, deadline - now)
                .expect("rendezvous lock poisoned")
                .0;
        }
        // A later round cannot complete before this member has rejoined, so
        // the stored result belongs to our round.
        st.result
            .clone()
            .expect("completed round leaves a result")
            .map_err(Error::Protocol)
    }
}

impl ReductionGroup for LocalMember {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.shared.size
    }

    fn allreduce_sum(&mut self, local: &[f64]) -> Result<Vec<f64>> {
        if self.shared.size == 1 {
            return Ok(local.to_vec());
        }
        let out = self.collective(local)?;
        Ok(out.as_ref().clone())
    }

    fn barrier(&mut self) -> Result<()> {
        if self.shared.size == 1 {
            return Ok(());
        }
        self.collective(&[]).map(|_| ())
    }
}
