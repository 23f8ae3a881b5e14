//! Point coordination: superframe layout, round-robin polling and the
//! poll-response rules. The point coordinator's timers are driven by
//! [`crate::station`].

use crate::dcf::{Timing, CF_ACK_BYTES};
use crate::engine::Micros;
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameKind, NodeIdx, Packet, Role};

#[derive(Debug, Clone, PartialEq)]
pub struct SuperframeConfig {
    pub superframe_period: Micros,
    pub cfp_max: Micros,
    pub pollable: Vec<NodeIdx>,
    pub cp_min: Micros,
}

impl SuperframeConfig {
    /// `max_exchange` is the airtime of the longest DCF exchange the
    /// contention period must be able to hold.
    pub fn validate(&self, max_exchange: Micros) -> Result<()> {
        if self.cp_min < max_exchange {
            return Err(Error::Config(format!(
                "cp_min {} us cannot hold one DCF exchange of {} us",
                self.cp_min, max_exchange
            )));
        }
        if self.cfp_max + self.cp_min > self.superframe_period {
            return Err(Error::Config(format!(
                "cfp_max {} + cp_min {} exceeds the superframe period {}",
                self.cfp_max, self.cp_min, self.superframe_period
            )));
        }
        Ok(())
    }
}

/// What the coordinator heard in reply to its last poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollResponse {
    DataCfAck,
    CfAck,
    None,
}

/// Gap before the next coordinator frame.
pub fn poll_gap(last: PollResponse, timing: &Timing) -> Micros {
    match last {
        PollResponse::None => timing.pifs,
        _ => timing.sifs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollDecision {
    Poll(NodeIdx),
    End,
}

/// Round-robin position that persists across superframes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PollCursor {
    pub position: usize,
    polled_this_cfp: usize,
}

impl PollCursor {
    pub fn begin_cfp(&mut self) {
        self.polled_this_cfp = 0;
    }

    /// Next node to poll, or `End` if the list completed a cycle in this CFP
    /// or the next poll would not fit before `cfp_end`.
    pub fn next(&mut self, pollable: &[NodeIdx], fits: bool) -> PollDecision {
        if pollable.is_empty() || self.polled_this_cfp >= pollable.len() || !fits {
            return PollDecision::End;
        }
        let node = pollable[self.position % pollable.len()];
        self.position = (self.position + 1) % pollable.len();
        self.polled_this_cfp += 1;
        PollDecision::Poll(node)
    }
}

/// Reply of a polled node: DATA+CF-ACK carrying (a piece of) its head packet,
/// or a bare CF-ACK. Never preceded by RTS/CTS.
pub fn handle_poll(me: NodeIdx, pc: NodeIdx, head: Option<&Packet>, frag_threshold: u64) -> Frame {
    match head {
        Some(p) => {
            let size = p.remaining().min(frag_threshold);
            let mut f = Frame::new(FrameKind::DataCfAck, me, Some(p.dst), size)
                .with_role(Role::ContentionFree);
            f.packet = Some(p.as_ref_at(p.acked));
            f.cf_ack = true;
            f.more_fragments = size < p.remaining();
            f
        }
        None => {
            let mut f = Frame::new(FrameKind::CfAck, me, Some(pc), CF_ACK_BYTES)
                .with_role(Role::ContentionFree);
            f.cf_ack = true;
            f
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps() {
        let t = Timing::default();
        assert_eq!(poll_gap(PollResponse::None, &t), 30);
        assert_eq!(poll_gap(PollResponse::DataCfAck, &t), 10);
        assert_eq!(poll_gap(PollResponse::CfAck, &t), 10);
    }

    #[test]
    fn empty_list_ends_immediately() {
        let mut c = PollCursor::default();
        c.begin_cfp();
        assert_eq!(c.next(&[], true), PollDecision::End);
    }

    #[test]
    fn round_robin_resumes_position() {
        let list = [3, 4, 5];
        let mut c = PollCursor::default();
        c.begin_cfp();
        assert_eq!(c.next(&list, true), PollDecision::Poll(3));
        assert_eq!(c.next(&list, true), PollDecision::Poll(4));
        assert_eq!(c.next(&list, false), PollDecision::End);
        c.begin_cfp();
        assert_eq!(c.next(&list, true), PollDecision::Poll(5));
        assert_eq!(c.next(&list, true), PollDecision::Poll(3));
        assert_eq!(c.next(&list, true), PollDecision::Poll(4));
        assert_eq!(c.next(&list, true), PollDecision::End);
    }

    #[test]
    fn poll_replies() {
        let p = Packet::new(7, 0, 0, 400, 0);
        let f = handle_poll(2, 0, Some(&p), 1500);
        assert_eq!(f.kind, FrameKind::DataCfAck);
        assert_eq!(f.payload_bytes, 400);
        assert_eq!(f.packet.unwrap().id, 7);
        let f = handle_poll(2, 0, None, 1500);
        assert_eq!(f.kind, FrameKind::CfAck);
        assert_eq!(f.dst, Some(0));
    }

    #[test]
    fn superframe_bounds() {
        let t = Timing::default();
        let max = t.max_exchange(256, crate::phy::airtime(1500, crate::phy::Rate::R1));
        let ok = SuperframeConfig {
            superframe_period: 100_000,
            cfp_max: 40_000,
            pollable: vec![1],
            cp_min: max,
        };
        ok.validate(max).unwrap();
        assert!(SuperframeConfig {
            cp_min: max - 1,
            ..ok.clone()
        }
        .validate(max)
        .is_err());
        assert!(SuperframeConfig {
            cfp_max: 95_000,
            ..ok
        }
        .validate(max)
        .is_err());
    }
}
