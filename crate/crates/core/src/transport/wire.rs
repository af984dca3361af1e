//! Byte layout.
//!
//! Header, 14 bytes, never compressed:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 2 | magic `CX` |
//! | 2 | 1 | version |
//! | 3 | 1 | class (1 report, 2 share) |
//! | 4 | 1 | neighbor count |
//! | 5 | 1 | flags (bit 0: report carries features) |
//! | 6 | 4 | agent id, u32 LE (sender of a report, recipient of a share) |
//! | 10 | 4 | window index, u32 LE |
//!
//! The body follows as a raw DEFLATE stream and is omitted entirely when the
//! message carries nothing. Integers in the body are LEB128 varints, timestamps
//! are delta coded, states travel as mixed-radix codes and floats as f32 LE.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{ChannelKnots, CompressedSeries, DonorPayload, Message, Payload, ReportMessage, ShareMessage};
use crate::context::{feature_dimension, ContextFeatureVector};
use crate::error::{Error, Result};
use crate::learner::{LocalState, Observation, MAX_NEIGHBORS};
use crate::tasknet::{AgentId, LocalAction};

pub const MAGIC: [u8; 2] = *b"CX";
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

const FLAG_FEATURES: u8 = 1;

pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&MAGIC);
    out.push(WIRE_VERSION);
    out.push(msg.class().code());
    let mut body = Vec::new();
    match msg {
        Message::Report(r) => {
            out.push(r.neighbor_count);
            out.push(if r.features.is_some() { FLAG_FEATURES } else { 0 });
            out.extend_from_slice(&r.agent.0.to_le_bytes());
            out.extend_from_slice(&r.window.to_le_bytes());
            let features = r.features.as_deref().unwrap_or(&[]);
            if !r.observations.is_empty() || !features.is_empty() {
                put_observations(&mut body, &r.observations, r.neighbor_count)?;
                put_varint(&mut body, features.len() as u64);
                let d = feature_dimension(r.neighbor_count as usize);
                let mut prev = 0;
                for f in features {
                    if f.dimension() != d {
                        return Err(Error::MalformedWindow(format!(
                            "feature dimension {} for {} neighbors",
                            f.dimension(),
                            r.neighbor_count
                        )));
                    }
                    put_delta(&mut body, &mut prev, f.t)?;
                    for v in f.values() {
                        body.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        Message::Share(s) => {
            out.push(s.neighbor_count);
            out.push(0);
            out.extend_from_slice(&s.recipient.0.to_le_bytes());
            out.extend_from_slice(&s.window.to_le_bytes());
            if !s.donors.is_empty() {
                put_varint(&mut body, s.donors.len() as u64);
                for d in &s.donors {
                    put_varint(&mut body, u64::from(d.donor.0));
                    match &d.payload {
                        Payload::Raw(obs) => {
                            body.push(0);
                            put_observations(&mut body, obs, s.neighbor_count)?;
                        }
                        Payload::Compressed(series) => {
                            body.push(1);
                            put_series(&mut body, series, s.neighbor_count)?;
                        }
                    }
                }
            }
        }
    }
    if !body.is_empty() {
        let mut enc = DeflateEncoder::new(out, Compression::best());
        enc.write_all(&body)?;
        out = enc.finish()?;
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode(format!("{} bytes is shorter than a header", bytes.len())));
    }
    if bytes[0..2] != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    if bytes[2] != WIRE_VERSION {
        return Err(Error::Decode(format!("unsupported version {}", bytes[2])));
    }
    let class = bytes[3];
    let neighbor_count = bytes[4];
    if neighbor_count as usize > MAX_NEIGHBORS {
        return Err(Error::Decode(format!("neighbor count {neighbor_count}")));
    }
    let flags = bytes[5];
    let id = AgentId(u32::from_le_bytes(bytes[6..10].try_into().unwrap()));
    let window = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
    let mut body = Vec::new();
    if bytes.len() > HEADER_LEN {
        DeflateDecoder::new(&bytes[HEADER_LEN..])
            .read_to_end(&mut body)
            .map_err(|e| Error::Decode(format!("body: {e}")))?;
        if body.is_empty() {
            return Err(Error::Decode("empty body stream".into()));
        }
    }
    let mut cur = Cursor { buf: &body, pos: 0 };
    let msg = match class {
        1 => {
            let has_features = flags & FLAG_FEATURES != 0;
            let mut observations = Vec::new();
            let mut features = Vec::new();
            if !body.is_empty() {
                observations = cur.observations(neighbor_count)?;
                let count = cur.len()?;
                let d = feature_dimension(neighbor_count as usize);
                let mut prev = 0;
                for _ in 0..count {
                    let t = cur.delta(&mut prev)?;
                    let values = (0..d).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
                    features.push(ContextFeatureVector::from_values(t, values).expect("odd dimension"));
                }
                if !has_features && count > 0 {
                    return Err(Error::Decode("features present without flag".into()));
                }
            }
            Message::Report(ReportMessage {
                agent: id,
                window,
                neighbor_count,
                observations,
                features: has_features.then_some(features),
            })
        }
        2 => {
            let mut donors = Vec::new();
            if !body.is_empty() {
                let count = cur.len()?;
                for _ in 0..count {
                    let donor = AgentId(
                        u32::try_from(cur.varint()?).map_err(|_| Error::Decode("donor id overflow".into()))?,
                    );
                    let payload = match cur.u8()? {
                        0 => Payload::Raw(cur.observations(neighbor_count)?),
                        1 => Payload::Compressed(cur.series(neighbor_count)?),
                        k => return Err(Error::Decode(format!("payload kind {k}"))),
                    };
                    donors.push(DonorPayload { donor, payload });
                }
            }
            Message::Share(ShareMessage {
                recipient: id,
                window,
                neighbor_count,
                donors,
            })
        }
        c => return Err(Error::Decode(format!("unknown class {c}"))),
    };
    if cur.pos != body.len() {
        return Err(Error::Decode(format!("{} trailing body bytes", body.len() - cur.pos)));
    }
    Ok(msg)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_delta(out: &mut Vec<u8>, prev: &mut u64, t: u64) -> Result<()> {
    let delta = t
        .checked_sub(*prev)
        .ok_or_else(|| Error::MalformedWindow("timestamps must not decrease".into()))?;
    put_varint(out, delta);
    *prev = t;
    Ok(())
}

fn check_state(s: &LocalState, neighbor_count: u8) -> Result<()> {
    if s.neighbor_count() != neighbor_count as usize {
        return Err(Error::IncompatibleExperience {
            expected: neighbor_count as usize,
            found: s.neighbor_count(),
        });
    }
    Ok(())
}

fn put_observations(out: &mut Vec<u8>, obs: &[Observation], neighbor_count: u8) -> Result<()> {
    put_varint(out, obs.len() as u64);
    let mut prev = 0;
    for o in obs {
        check_state(&o.state, neighbor_count)?;
        check_state(&o.next_state, neighbor_count)?;
        put_delta(out, &mut prev, o.t)?;
        put_varint(out, u64::from(o.state.code()));
        out.push(o.action.index() as u8);
        put_varint(out, u64::from(o.next_state.code()));
        out.extend_from_slice(&o.reward.to_le_bytes());
    }
    Ok(())
}

fn put_series(out: &mut Vec<u8>, s: &CompressedSeries, neighbor_count: u8) -> Result<()> {
    if s.neighbor_count != neighbor_count {
        return Err(Error::IncompatibleExperience {
            expected: neighbor_count as usize,
            found: s.neighbor_count as usize,
        });
    }
    put_varint(out, u64::from(s.degree));
    out.push(u8::from(s.degenerate));
    put_varint(out, s.actions.len() as u64);
    let mut prev = 0;
    for &(t, a) in &s.actions {
        put_delta(out, &mut prev, t)?;
        out.push(a.index() as u8);
    }
    put_varint(out, s.channels.len() as u64);
    for c in &s.channels {
        match c {
            ChannelKnots::Constant(v) => {
                out.push(0);
                out.extend_from_slice(&v.to_le_bytes());
            }
            ChannelKnots::Levels(v) => {
                out.push(1);
                put_varint(out, v.len() as u64);
                out.extend_from_slice(v);
            }
            ChannelKnots::Values(v) => {
                out.push(2);
                put_varint(out, v.len() as u64);
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Decode("truncated body".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Decode("varint overflow".into()))
    }

    /// A count, bounded by the remaining body so corrupt input cannot force huge allocations.
    fn len(&mut self) -> Result<usize> {
        let n = self.varint()?;
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::Decode(format!("count {n} exceeds remaining body")));
        }
        Ok(n as usize)
    }

    fn delta(&mut self, prev: &mut u64) -> Result<u64> {
        let t = prev
            .checked_add(self.varint()?)
            .ok_or_else(|| Error::Decode("timestamp overflow".into()))?;
        *prev = t;
        Ok(t)
    }

    fn state(&mut self, neighbor_count: u8) -> Result<LocalState> {
        let code = u32::try_from(self.varint()?).map_err(|_| Error::Decode("state code overflow".into()))?;
        LocalState::from_code(code, neighbor_count as usize)
            .ok_or_else(|| Error::Decode(format!("state code {code} out of range")))
    }

    fn action(&mut self, neighbor_count: u8) -> Result<LocalAction> {
        let a = self.u8()?;
        if a > neighbor_count {
            return Err(Error::Decode(format!("action {a} with {neighbor_count} neighbors")));
        }
        Ok(LocalAction::from_index(a as usize))
    }

    fn observations(&mut self, neighbor_count: u8) -> Result<Vec<Observation>> {
        let count = self.len()?;
        let mut prev = 0;
        let mut obs = Vec::with_capacity(count);
        for _ in 0..count {
            let t = self.delta(&mut prev)?;
            let state = self.state(neighbor_count)?;
            let action = self.action(neighbor_count)?;
            let next_state = self.state(neighbor_count)?;
            let reward = self.f32()?;
            obs.push(Observation {
                state,
                action,
                next_state,
                reward,
                t,
            });
        }
        Ok(obs)
    }

    fn series(&mut self, neighbor_count: u8) -> Result<CompressedSeries> {
        let degree = u32::try_from(self.varint()?).map_err(|_| Error::Decode("degree overflow".into()))?;
        let degenerate = match self.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Decode(format!("degenerate flag {b}"))),
        };
        let count = self.len()?;
        let mut prev = 0;
        let mut actions = Vec::with_capacity(count);
        for _ in 0..count {
            let t = self.delta(&mut prev)?;
            actions.push((t, self.action(neighbor_count)?));
        }
        let channel_count = self.len()?;
        let mut channels = Vec::with_capacity(channel_count);
        for _ in 0..channel_count {
            channels.push(match self.u8()? {
                0 => ChannelKnots::Constant(self.f32()?),
                1 => {
                    let n = self.len()?;
                    ChannelKnots::Levels(self.take(n)?.to_vec())
                }
                2 => {
                    let n = self.len()?;
                    ChannelKnots::Values((0..n).map(|_| self.f32()).collect::<Result<_>>()?)
                }
                k => return Err(Error::Decode(format!("channel kind {k}"))),
            });
        }
        Ok(CompressedSeries {
            degree,
            neighbor_count,
            degenerate,
            actions,
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::compress_lossy;

    fn obs(n: usize) -> Vec<Observation> {
        (0..n)
            .map(|i| Observation {
                state: LocalState::new((i % 5) as u8, &[1, (i % 3) as u8, 4]),
                action: LocalAction::from_index(i % 4),
                next_state: LocalState::new(((i + 2) % 5) as u8, &[1, 0, 4]),
                reward: 1.0 / (1.0 + i as f32),
                t: 7 + 3 * i as u64,
            })
            .collect()
    }

    #[test]
    fn empty_messages_are_header_only() {
        let r = Message::Report(ReportMessage {
            agent: AgentId(5),
            window: 3,
            neighbor_count: 3,
            observations: vec![],
            features: Some(vec![]),
        });
        let bytes = encode(&r).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode(&bytes).unwrap(), r);
        let s = Message::Share(ShareMessage {
            recipient: AgentId(9),
            window: 1,
            neighbor_count: 2,
            donors: vec![],
        });
        let bytes = encode(&s).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode(&bytes).unwrap(), s);
    }

    #[test]
    fn report_round_trip() {
        let features = (0..10)
            .map(|t| ContextFeatureVector::new(100 + t, 0.5 * t as f32, &[0.1, 0.2, 0.3], &[0.0, 1.5, 2.0]))
            .collect();
        let r = Message::Report(ReportMessage {
            agent: AgentId(42),
            window: 17,
            neighbor_count: 3,
            observations: obs(30),
            features: Some(features),
        });
        assert_eq!(decode(&encode(&r).unwrap()).unwrap(), r);
    }

    #[test]
    fn share_round_trip_mixed_payloads() {
        let o = obs(40);
        let s = Message::Share(ShareMessage {
            recipient: AgentId(1),
            window: 2,
            neighbor_count: 3,
            donors: vec![
                DonorPayload {
                    donor: AgentId(77),
                    payload: Payload::Raw(o.clone()),
                },
                DonorPayload {
                    donor: AgentId(3),
                    payload: Payload::Compressed(compress_lossy(&o, 7).unwrap()),
                },
            ],
        });
        assert_eq!(decode(&encode(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn mismatched_states_rejected() {
        let s = Message::Share(ShareMessage {
            recipient: AgentId(1),
            window: 2,
            neighbor_count: 2,
            donors: vec![DonorPayload {
                donor: AgentId(0),
                payload: Payload::Raw(obs(3)),
            }],
        });
        assert!(matches!(encode(&s), Err(Error::IncompatibleExperience { .. })));
    }

    #[test]
    fn corrupt_input_rejected() {
        let r = Message::Report(ReportMessage {
            agent: AgentId(42),
            window: 17,
            neighbor_count: 3,
            observations: obs(30),
            features: None,
        });
        let bytes = encode(&r).unwrap();
        assert!(decode(&bytes[..HEADER_LEN - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[3] = 9;
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn varint_edges() {
        for v in [0u64, 1, 127, 128, 16383, 16384, u64::from(u32::MAX), u64::MAX] {
            let mut buf = Vec::new();
            put_varint(&mut buf, v);
            let mut c = Cursor { buf: &buf, pos: 0 };
            assert_eq!(c.varint().unwrap(), v);
            assert_eq!(c.pos, buf.len());
        }
    }
}
