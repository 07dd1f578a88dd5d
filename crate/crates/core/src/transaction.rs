//! Nested savepoints over the full handler state (goal, store, status).
//!
//! Listeners, breakpoints and the goal limit are not part of a savepoint.

use crate::engine::{Handler, Status};
use crate::error::EngineError;
use crate::events::EventKind;

impl Handler {
    /// Number of open transactions.
    pub fn depth(&self) -> usize {
        self.savepoints.len()
    }

    /// Saves the current state and opens a nested transaction.
    pub fn begin(&mut self) -> Result<usize, EngineError> {
        if self.state.status == Status::Running {
            return Err(EngineError::BeginDuringRun);
        }
        self.savepoints.push(self.state.clone());
        let depth = self.depth();
        self.emit(EventKind::TxBegin { depth })?;
        Ok(depth)
    }

    /// Closes the innermost transaction, keeping the current state.
    pub fn commit(&mut self) -> Result<usize, EngineError> {
        self.check_open()?;
        self.savepoints.pop();
        let depth = self.depth();
        self.emit(EventKind::TxCommit { depth })?;
        Ok(depth)
    }

    /// Makes the current state the innermost savepoint; the transaction stays open.
    pub fn partial_commit(&mut self) -> Result<usize, EngineError> {
        self.check_open()?;
        let top = self.savepoints.last_mut().expect("checked");
        *top = self.state.clone();
        let depth = self.depth();
        self.emit(EventKind::TxPartialCommit { depth })?;
        Ok(depth)
    }

    /// Restores the innermost savepoint and closes its transaction.
    pub fn rollback(&mut self) -> Result<usize, EngineError> {
        self.check_open()?;
        self.state = self.savepoints.pop().expect("checked");
        let depth = self.depth();
        self.emit(EventKind::TxRollback { depth })?;
        Ok(depth)
    }

    fn check_open(&self) -> Result<(), EngineError> {
        if self.savepoints.is_empty() {
            Err(EngineError::NoOpenTransaction)
        } else if self.state.status == Status::Running {
            Err(EngineError::BeginDuringRun)
        } else {
            Ok(())
        }
    }
}
