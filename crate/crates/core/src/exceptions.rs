//! Exceptions: `throw` and `try ... catch ... end`.
//!
//! Typing (enforced by the validator when [`Features::exceptions`] is set):
//!
//! * `throw` pops an `i32` payload and never falls through.
//! * `try (result r)? body catch handler end` checks `body` in a fresh frame
//!   ending with `r`; `handler` is checked in a fresh frame whose stack
//!   starts with exactly the `i32` payload, also ending with `r`. A branch
//!   out of either arm targets the `try` label and carries `|r|` values.
//!
//! At run time a throw unwinds dynamically: control entries of the current
//! frame are discarded until the nearest `try`, and whole frames are
//! discarded when none is found. This is the contrast with `br`, whose
//! target is fixed statically by its depth. Traps are never caught.
//!
//! [`Features::exceptions`]: crate::validator::Features::exceptions

use crate::interp::{Config, ControlEntry, EntryKind, InternalError, Outcome, Step, Value};

/// The single value carried by a thrown exception.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExceptionPayload {
    pub value: Value,
}

/// Transfers control to the nearest enclosing handler, possibly in a
/// calling frame. The payload has already been popped.
pub fn unwind(config: &mut Config<'_>, payload: ExceptionPayload) -> Result<Step, InternalError> {
    while let Some(frame) = config.frames.last_mut() {
        while let Some(entry) = frame.ctrl.pop() {
            let EntryKind::Try { catch_body } = entry.kind else {
                continue;
            };
            if frame.values.len() < entry.entry_height {
                return Err(config.internal("value stack below try entry height"));
            }
            frame.values.truncate(entry.entry_height);
            frame.values.push(payload.value);
            frame.ctrl.push(ControlEntry {
                remaining: catch_body,
                kind: EntryKind::Catch,
                ..entry
            });
            return Ok(Step::Continue);
        }
        config.frames.pop();
    }
    Ok(Step::Done(Outcome::UncaughtException(payload.value)))
}
