//! Byte-limited FIFO output queue.

use std::collections::VecDeque;

use crate::packet::Packet;
use crate::time::SimTime;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EnqueueOutcome {
    Accepted,
    TailDropped,
}

#[derive(Clone, Debug)]
pub struct OutputQueue {
    buffer_limit: u64,
    occupancy: u64,
    fifo: VecDeque<Packet>,
    drops: u64,
}

impl OutputQueue {
    pub fn new(buffer_limit: u64) -> Self {
        OutputQueue {
            buffer_limit,
            occupancy: 0,
            fifo: VecDeque::new(),
            drops: 0,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn buffer_limit(&self) -> u64 {
        self.buffer_limit
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.fifo.iter()
    }

    /// Accepts the packet iff it fits in the remaining buffer budget; a
    /// rejected packet is counted and destroyed (drop is a result, not an
    /// error).
    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime) -> EnqueueOutcome {
        assert!(pkt.size > 0, "zero-size packet");
        if self.occupancy + pkt.size > self.buffer_limit {
            self.drops += 1;
            return EnqueueOutcome::TailDropped;
        }
        pkt.enqueue_time = now;
        self.occupancy += pkt.size;
        self.fifo.push_back(pkt);
        EnqueueOutcome::Accepted
    }

    /// Removes the head packet and returns it with its sojourn time.
    /// Dequeueing an empty queue is an engine bug.
    pub fn dequeue(&mut self, now: SimTime) -> (Packet, SimTime) {
        let pkt = self
            .fifo
            .pop_front()
            .expect("dequeue on empty queue (engine bug)");
        self.occupancy -= pkt.size;
        let sojourn = now - pkt.enqueue_time;
        (pkt, sojourn)
    }
}
