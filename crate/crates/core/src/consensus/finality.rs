use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Finality {
    Final,
    NotFinal,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum FinalityError {
    #[error("{votes} votes exceed {nodes} nodes")]
    VotesExceedNodes { votes: u64, nodes: u64 },
    #[error("node count must be at least 1")]
    NoNodes,
}

/// Final iff `votes > 2n/3`, strictly, so at most a third of the nodes can be
/// faulty at the boundary.
pub fn finality_check(votes: u64, nodes: u64) -> Result<Finality, FinalityError> {
    if nodes == 0 {
        return Err(FinalityError::NoNodes);
    }
    if votes > nodes {
        return Err(FinalityError::VotesExceedNodes { votes, nodes });
    }
    if 3 * votes as u128 > 2 * nodes as u128 {
        Ok(Finality::Final)
    } else {
        Ok(Finality::NotFinal)
    }
}
