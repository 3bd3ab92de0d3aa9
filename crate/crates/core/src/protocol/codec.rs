//! Canonical byte encoding.
//!
//! Fields appear in declaration order. Integers are big-endian and fixed
//! width; text and byte strings carry a 4-byte big-endian length prefix;
//! lists carry a 4-byte count. Top-level records start with a 1-byte type
//! tag. There is exactly one encoding per value, so decode then encode
//! reproduces the input bytes.

use thiserror::Error;

use super::*;
use crate::crypto::{KEY_LEN, NONCE_LEN, TAG_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("wrong message type: expected tag {expected:#04x}, found {found:#04x}")]
    WrongType { expected: u8, found: u8 },
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

impl DecodeError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            DecodeError::WrongType { .. } => ErrorKind::WrongType,
            DecodeError::Malformed(_) => ErrorKind::MalformedEncoding,
        }
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Malformed("truncated input"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        self.bytes()?
            .try_into()
            .map_err(|_| DecodeError::Malformed("fixed-size field has wrong length"))
    }

    pub fn text(&mut self) -> Result<String, DecodeError> {
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::Malformed("text is not utf-8"))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Malformed("trailing bytes"))
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(
        out,
        u32::try_from(b.len()).expect("field longer than u32::MAX"),
    );
    out.extend_from_slice(b);
}

/// A value that can appear as a field inside a record.
pub trait WireField: Sized {
    fn put(&self, out: &mut Vec<u8>);
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError>;
}

/// A top-level record with its own type tag.
pub trait Message: WireField {
    const TAG: u8;
}

pub fn encode<M: Message>(msg: &M) -> Vec<u8> {
    let mut out = vec![M::TAG];
    msg.put(&mut out);
    out
}

pub fn decode<M: Message>(bytes: &[u8]) -> Result<M, DecodeError> {
    let mut r = Reader::new(bytes);
    let found = r.u8()?;
    if found != M::TAG {
        return Err(DecodeError::WrongType {
            expected: M::TAG,
            found,
        });
    }
    let msg = M::get(&mut r)?;
    r.finish()?;
    Ok(msg)
}

pub fn peek_tag(bytes: &[u8]) -> Option<u8> {
    bytes.first().copied()
}

impl WireField for u32 {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, *self);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.u32()
    }
}

impl WireField for String {
    fn put(&self, out: &mut Vec<u8>) {
        put_bytes(out, self.as_bytes());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.text()
    }
}

impl WireField for Principal {
    fn put(&self, out: &mut Vec<u8>) {
        put_bytes(out, self.name.as_bytes());
        put_bytes(out, self.realm.as_bytes());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let name = r.text()?;
        let realm = r.text()?;
        Principal::new(name, realm).map_err(|_| DecodeError::Malformed("invalid principal"))
    }
}

impl WireField for NetAddress {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, self.0);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(NetAddress(r.u32()?))
    }
}

impl WireField for SecretKey {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, self.key_id());
        put_bytes(out, self.bytes());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let key_id = r.u32()?;
        let bytes = r.fixed::<KEY_LEN>()?;
        Ok(SecretKey::new(key_id, bytes))
    }
}

impl WireField for SealedBlob {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, self.key_id);
        put_bytes(out, &self.nonce);
        put_bytes(out, &self.ciphertext);
        put_bytes(out, &self.tag);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SealedBlob {
            key_id: r.u32()?,
            nonce: r.fixed::<NONCE_LEN>()?,
            ciphertext: r.bytes()?.to_vec(),
            tag: r.fixed::<TAG_LEN>()?,
        })
    }
}

impl WireField for Ticket {
    fn put(&self, out: &mut Vec<u8>) {
        self.client.put(out);
        self.client_addr.put(out);
        self.service.put(out);
        self.session_key.put(out);
        put_u64(out, self.issued_at);
        put_u64(out, self.lifetime);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let ticket = Ticket {
            client: Principal::get(r)?,
            client_addr: NetAddress::get(r)?,
            service: Principal::get(r)?,
            session_key: SecretKey::get(r)?,
            issued_at: r.u64()?,
            lifetime: r.u64()?,
        };
        if ticket.lifetime == 0 {
            return Err(DecodeError::Malformed("ticket lifetime must be positive"));
        }
        Ok(ticket)
    }
}

impl Message for Ticket {
    const TAG: u8 = tag::TICKET;
}

impl WireField for Authenticator {
    fn put(&self, out: &mut Vec<u8>) {
        self.client.put(out);
        self.client_addr.put(out);
        put_u64(out, self.timestamp);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Authenticator {
            client: Principal::get(r)?,
            client_addr: NetAddress::get(r)?,
            timestamp: r.u64()?,
        })
    }
}

impl Message for Authenticator {
    const TAG: u8 = tag::AUTHENTICATOR;
}

impl WireField for ReplyPart {
    fn put(&self, out: &mut Vec<u8>) {
        self.session_key.put(out);
        self.service.put(out);
        put_u64(out, self.issued_at);
        put_u64(out, self.lifetime);
        self.ticket.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ReplyPart {
            session_key: SecretKey::get(r)?,
            service: Principal::get(r)?,
            issued_at: r.u64()?,
            lifetime: r.u64()?,
            ticket: SealedBlob::get(r)?,
        })
    }
}

impl Message for ReplyPart {
    const TAG: u8 = tag::REPLY_PART;
}

impl WireField for AsRequest {
    fn put(&self, out: &mut Vec<u8>) {
        self.user.put(out);
        self.tgs.put(out);
        put_u64(out, self.requested_at);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AsRequest {
            user: Principal::get(r)?,
            tgs: Principal::get(r)?,
            requested_at: r.u64()?,
        })
    }
}

impl Message for AsRequest {
    const TAG: u8 = tag::AS_REQUEST;
}

impl WireField for AsReply {
    fn put(&self, out: &mut Vec<u8>) {
        self.sealed_for_client.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AsReply {
            sealed_for_client: SealedBlob::get(r)?,
        })
    }
}

impl Message for AsReply {
    const TAG: u8 = tag::AS_REPLY;
}

impl WireField for TgsRequest {
    fn put(&self, out: &mut Vec<u8>) {
        self.user.put(out);
        self.service.put(out);
        self.tgt.put(out);
        self.authenticator.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(TgsRequest {
            user: Principal::get(r)?,
            service: Principal::get(r)?,
            tgt: SealedBlob::get(r)?,
            authenticator: SealedBlob::get(r)?,
        })
    }
}

impl Message for TgsRequest {
    const TAG: u8 = tag::TGS_REQUEST;
}

impl WireField for TgsReply {
    fn put(&self, out: &mut Vec<u8>) {
        self.sealed_for_client.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(TgsReply {
            sealed_for_client: SealedBlob::get(r)?,
        })
    }
}

impl Message for TgsReply {
    const TAG: u8 = tag::TGS_REPLY;
}

impl WireField for SensorQuery {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, self.query_id);
        self.attribute.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SensorQuery {
            query_id: r.u32()?,
            attribute: r.text()?,
        })
    }
}

impl WireField for ApRequest {
    fn put(&self, out: &mut Vec<u8>) {
        self.user.put(out);
        self.service_ticket.put(out);
        self.authenticator.put(out);
        self.query.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ApRequest {
            user: Principal::get(r)?,
            service_ticket: SealedBlob::get(r)?,
            authenticator: SealedBlob::get(r)?,
            query: SensorQuery::get(r)?,
        })
    }
}

impl Message for ApRequest {
    const TAG: u8 = tag::AP_REQUEST;
}

impl WireField for RawQuery {
    fn put(&self, out: &mut Vec<u8>) {
        self.claimed_user.put(out);
        self.query.put(out);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RawQuery {
            claimed_user: Principal::get(r)?,
            query: SensorQuery::get(r)?,
        })
    }
}

impl Message for RawQuery {
    const TAG: u8 = tag::RAW_QUERY;
}

impl WireField for SensorResponse {
    fn put(&self, out: &mut Vec<u8>) {
        put_u32(out, self.query_id);
        put_u32(
            out,
            u32::try_from(self.readings.len()).expect("too many readings"),
        );
        for reading in &self.readings {
            put_u32(out, reading.node);
            out.extend_from_slice(&reading.value.to_be_bytes());
        }
        out.extend_from_slice(&self.aggregate.to_be_bytes());
    }
    fn get(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let query_id = r.u32()?;
        let count = r.u32()? as usize;
        // Cap the preallocation by what the buffer could actually hold.
        let mut readings = Vec::with_capacity(count.min(r.buf.len() / 12));
        for _ in 0..count {
            readings.push(Reading {
                node: r.u32()?,
                value: r.i64()?,
            });
        }
        Ok(SensorResponse {
            query_id,
            readings,
            aggregate: r.i64()?,
        })
    }
}

impl Message for SensorResponse {
    const TAG: u8 = tag::SENSOR_RESPONSE;
}
