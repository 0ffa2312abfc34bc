//! Correlation of replies with outstanding requests.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use floorctl_wire::{BfcpMessage, Primitive};

/// What an incoming message turned out to be.
#[derive(Debug, PartialEq, Eq)]
pub enum Incoming<T> {
    /// The reply to an outstanding transaction, with the value stored for it.
    Reply(T),
    /// Anything else: notifications, server-initiated requests, strays.
    Unsolicited,
}

#[derive(Debug)]
struct Pending<T> {
    expect: Vec<Primitive>,
    value: T,
}

/// Outstanding client transactions keyed by transaction id. Client ids are odd
/// and never zero, so they cannot collide with server-initiated ones.
#[derive(Debug)]
pub struct TransactionTable<T> {
    next: u16,
    pending: HashMap<u16, Pending<T>>,
}

impl<T> Default for TransactionTable<T> {
    fn default() -> Self {
        TransactionTable::new()
    }
}

impl<T> TransactionTable<T> {
    pub fn new() -> TransactionTable<T> {
        TransactionTable { next: 1, pending: HashMap::new() }
    }

    /// Opens a transaction answered by one of `expect` (or by Error) and
    /// returns its id. None when every odd id is in use.
    pub fn begin(&mut self, expect: &[Primitive], value: T) -> Option<u16> {
        if self.pending.len() > usize::from(u16::MAX / 2) {
            return None;
        }
        loop {
            let tx = self.next;
            self.next = self.next.wrapping_add(2);
            if let Entry::Vacant(e) = self.pending.entry(tx) {
                e.insert(Pending { expect: expect.to_vec(), value });
                return Some(tx);
            }
        }
    }

    /// Matches `msg` against the open transactions. A message with a known id
    /// but an unexpected primitive does not close the transaction.
    pub fn resolve(&mut self, msg: &BfcpMessage) -> Incoming<T> {
        let tx = msg.header.transaction_id;
        let matches = self
            .pending
            .get(&tx)
            .is_some_and(|p| msg.primitive() == Primitive::Error || p.expect.contains(&msg.primitive()));
        match matches.then(|| self.pending.remove(&tx)).flatten() {
            Some(p) => Incoming::Reply(p.value),
            None => Incoming::Unsolicited,
        }
    }

    /// Gives up on a transaction, e.g. after a timeout.
    pub fn abandon(&mut self, tx: u16) -> Option<T> {
        self.pending.remove(&tx).map(|p| p.value)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Drops every open transaction, returning their values.
    pub fn clear(&mut self) -> Vec<T> {
        self.pending.drain().map(|(_, p)| p.value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(p: Primitive, tx: u16) -> BfcpMessage {
        BfcpMessage::new(p, 1, tx, 2)
    }

    #[test]
    fn ids_are_odd_and_distinct() {
        let mut t = TransactionTable::new();
        let a = t.begin(&[Primitive::HelloAck], "a").unwrap();
        let b = t.begin(&[Primitive::HelloAck], "b").unwrap();
        assert!(a % 2 == 1 && b % 2 == 1 && a != b);
    }

    #[test]
    fn wrong_primitive_does_not_consume() {
        let mut t = TransactionTable::new();
        let tx = t.begin(&[Primitive::FloorRequestStatus], ()).unwrap();
        assert_eq!(t.resolve(&msg(Primitive::FloorStatus, tx)), Incoming::Unsolicited);
        assert_eq!(t.len(), 1);
        assert_eq!(t.resolve(&msg(Primitive::FloorRequestStatus, tx)), Incoming::Reply(()));
        assert!(t.is_empty());
    }

    #[test]
    fn error_answers_any_transaction() {
        let mut t = TransactionTable::new();
        let tx = t.begin(&[Primitive::HelloAck], 7).unwrap();
        assert_eq!(t.resolve(&msg(Primitive::Error, tx)), Incoming::Reply(7));
    }

    #[test]
    fn wrap_skips_ids_still_open() {
        let mut t = TransactionTable::new();
        t.next = u16::MAX;
        let a = t.begin(&[], 'a').unwrap();
        assert_eq!(a, u16::MAX);
        let b = t.begin(&[], 'b').unwrap();
        assert_eq!(b, 1);
        t.next = u16::MAX;
        let c = t.begin(&[], 'c').unwrap();
        assert_eq!(c, 3, "65535 and 1 are taken");
    }
}
