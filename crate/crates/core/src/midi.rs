//! Standard MIDI File reading and writing, plus quantization onto a
//! beat-relative step grid.
//!
//! Only the note content of a file is retained. Tempo, key, and other meta
//! events are skipped because every downstream representation is measured
//! in steps per beat, not seconds.

use std::collections::HashMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Velocity used when synthesizing notes from binary representations.
pub const DEFAULT_VELOCITY: u8 = 80;

/// Zero-based channel index of General MIDI percussion.
const PERCUSSION_CHANNEL: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("unsupported timing division 0x{0:04x} (SMPTE timing is not supported)")]
    UnsupportedTiming(u16),
    #[error("truncated chunk: {0}")]
    TruncatedChunk(String),
    #[error("malformed event at byte {offset} of track {track}: {reason}")]
    MalformedEvent {
        track: usize,
        offset: usize,
        reason: String,
    },
}

/// A single sounding note. Times are in ticks for parsed songs and in grid
/// steps after [`quantize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: u64,
    pub duration: u64,
    pub velocity: u8,
    pub track: usize,
}

impl NoteEvent {
    pub fn new(pitch: u8, onset: u64, duration: u64) -> Self {
        Self {
            pitch,
            onset,
            duration,
            velocity: DEFAULT_VELOCITY,
            track: 0,
        }
    }

    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }

    fn sort_key(&self) -> (u64, u8, usize, u64, u8) {
        (self.onset, self.pitch, self.track, self.duration, self.velocity)
    }
}

/// Sorts notes into the canonical `(onset, pitch)` order used everywhere.
pub fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by_key(NoteEvent::sort_key);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiSong {
    pub ticks_per_beat: u16,
    pub format: u16,
    pub notes: Vec<NoteEvent>,
}

impl MidiSong {
    /// Builds a format-1 song, sorting the notes.
    pub fn new(ticks_per_beat: u16, mut notes: Vec<NoteEvent>) -> Self {
        sort_notes(&mut notes);
        Self {
            ticks_per_beat,
            format: 1,
            notes,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn u32_be(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity: at most four bytes, seven bits each.
    fn vlq(&mut self) -> Option<Result<u32, ()>> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let byte = self.u8()?;
            value = (value << 7) | u32::from(byte & 0x7f);
            if byte & 0x80 == 0 {
                return Some(Ok(value));
            }
        }
        Some(Err(()))
    }
}

/// Parses a Standard MIDI File (format 0 or 1) into its note list.
///
/// Note-on/note-off pairs are resolved per track, channel and pitch. A
/// note-on with velocity 0 is a note-off. Overlapping notes of the same pitch
/// on the same track and channel merge into one note spanning their union.
/// Note-offs without a sounding note are logged and dropped, and notes still
/// sounding at end of track are closed there. Notes on the General MIDI
/// percussion channel (10) are skipped.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiSong, MidiError> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .take(4)
        .ok_or_else(|| MidiError::MalformedHeader("file shorter than chunk id".into()))?;
    if magic != b"MThd" {
        return Err(MidiError::MalformedHeader(format!(
            "expected \"MThd\" magic, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let header_len = cur
        .u32_be()
        .ok_or_else(|| MidiError::MalformedHeader("missing header length".into()))?;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader(format!(
            "header length {header_len} < 6"
        )));
    }
    let header = cur
        .take(header_len as usize)
        .ok_or_else(|| MidiError::TruncatedChunk("MThd".into()))?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        other => return Err(MidiError::UnsupportedFormat(other)),
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedTiming(division));
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("ticks per beat is zero".into()));
    }

    let mut notes = Vec::new();
    let mut track_index = 0usize;
    while cur.remaining() > 0 && track_index < usize::from(ntracks) {
        let id = cur
            .take(4)
            .ok_or_else(|| MidiError::TruncatedChunk("chunk id".into()))?;
        let len = cur
            .u32_be()
            .ok_or_else(|| MidiError::TruncatedChunk("chunk length".into()))?;
        let body = cur.take(len as usize).ok_or_else(|| {
            MidiError::TruncatedChunk(format!(
                "{} declares {len} bytes, {} available",
                String::from_utf8_lossy(id),
                bytes.len().saturating_sub(cur.pos)
            ))
        })?;
        if id != b"MTrk" {
            debug!("skipping unknown chunk {:?}", String::from_utf8_lossy(id));
            continue;
        }
        parse_track(body, track_index, &mut notes)?;
        track_index += 1;
    }
    if track_index < usize::from(ntracks) {
        warn!("header declares {ntracks} tracks, found {track_index}");
    }

    sort_notes(&mut notes);
    Ok(MidiSong {
        ticks_per_beat: division,
        format,
        notes,
    })
}

fn parse_track(body: &[u8], track: usize, notes: &mut Vec<NoteEvent>) -> Result<(), MidiError> {
    let mut cur = Cursor::new(body);
    let mut now: u64 = 0;
    let mut running: Option<u8> = None;
    // (channel, pitch) -> (start tick, velocity, nesting depth)
    let mut sounding: HashMap<(u8, u8), (u64, u8, u32)> = HashMap::new();

    let bad = |offset: usize, reason: &str| MidiError::MalformedEvent {
        track,
        offset,
        reason: reason.to_string(),
    };
    let truncated = || MidiError::TruncatedChunk(format!("event data in track {track}"));

    while cur.remaining() > 0 {
        let delta = match cur.vlq() {
            None => return Err(truncated()),
            Some(Err(())) => return Err(bad(cur.pos, "delta time longer than four bytes")),
            Some(Ok(d)) => d,
        };
        now += u64::from(delta);
        let offset = cur.pos;
        let first = cur.peek().ok_or_else(truncated)?;
        let status = if first & 0x80 != 0 {
            cur.pos += 1;
            first
        } else {
            running.ok_or_else(|| bad(offset, "data byte without running status"))?
        };

        match status {
            0xff => {
                let kind = cur.u8().ok_or_else(truncated)?;
                let len = match cur.vlq() {
                    None => return Err(truncated()),
                    Some(Err(())) => return Err(bad(cur.pos, "meta length too long")),
                    Some(Ok(l)) => l,
                };
                cur.take(len as usize).ok_or_else(truncated)?;
                if kind == 0x2f {
                    break;
                }
            }
            0xf0 | 0xf7 => {
                let len = match cur.vlq() {
                    None => return Err(truncated()),
                    Some(Err(())) => return Err(bad(cur.pos, "sysex length too long")),
                    Some(Ok(l)) => l,
                };
                cur.take(len as usize).ok_or_else(truncated)?;
                running = None;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data_len = match status >> 4 {
                    0xc | 0xd => 1,
                    _ => 2,
                };
                let data = cur.take(data_len).ok_or_else(truncated)?;
                if data.iter().any(|b| b & 0x80 != 0) {
                    return Err(bad(offset, "status byte inside channel message data"));
                }
                let kind = status >> 4;
                let (pitch, velocity) = (data[0], data.get(1).copied().unwrap_or(0));
                if channel == PERCUSSION_CHANNEL && (kind == 0x8 || kind == 0x9) {
                    continue;
                }
                let is_on = kind == 0x9 && velocity > 0;
                let is_off = kind == 0x8 || (kind == 0x9 && velocity == 0);
                if is_on {
                    sounding
                        .entry((channel, pitch))
                        .and_modify(|e| e.2 += 1)
                        .or_insert((now, velocity, 1));
                } else if is_off {
                    match sounding.get_mut(&(channel, pitch)) {
                        None => warn!(
                            "dropping unmatched note-off pitch {pitch} channel {channel} at tick {now} in track {track}"
                        ),
                        Some(entry) => {
                            entry.2 -= 1;
                            if entry.2 == 0 {
                                let (start, vel, _) = sounding.remove(&(channel, pitch)).unwrap();
                                push_note(notes, pitch, start, now, vel, track);
                            }
                        }
                    }
                }
            }
            _ => return Err(bad(offset, "system message inside track")),
        }
    }

    let mut dangling: Vec<_> = sounding.into_iter().collect();
    dangling.sort();
    for ((_, pitch), (start, vel, _)) in dangling {
        warn!("closing note pitch {pitch} left sounding at end of track {track}");
        push_note(notes, pitch, start, now, vel, track);
    }
    Ok(())
}

fn push_note(notes: &mut Vec<NoteEvent>, pitch: u8, start: u64, end: u64, velocity: u8, track: usize) {
    if end <= start {
        debug!("dropping zero-length note pitch {pitch} at tick {start}");
        return;
    }
    notes.push(NoteEvent {
        pitch,
        onset: start,
        duration: end - start,
        velocity,
        track,
    });
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a song as a format-1 SMF with one track chunk per track index
/// (tracks with no notes are written empty so indices survive a reparse).
///
/// Note-offs are written as explicit `0x8n` events and precede note-ons at
/// the same tick, so abutting notes of one pitch stay distinct.
pub fn write_midi(song: &MidiSong) -> Vec<u8> {
    let ntracks = song.notes.iter().map(|n| n.track + 1).max().unwrap_or(1);
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(ntracks as u16).to_be_bytes());
    out.extend_from_slice(&song.ticks_per_beat.to_be_bytes());

    for track in 0..ntracks {
        // (tick, order, status, pitch, velocity); order 0 sorts offs first
        let mut events: Vec<(u64, u8, u8, u8, u8)> = Vec::new();
        for n in song.notes.iter().filter(|n| n.track == track) {
            events.push((n.onset, 1, 0x90, n.pitch, n.velocity.max(1)));
            events.push((n.end(), 0, 0x80, n.pitch, 0x40));
        }
        events.sort();
        let mut body = Vec::new();
        let mut now = 0u64;
        for (tick, _, status, pitch, velocity) in events {
            write_vlq(&mut body, (tick - now) as u32);
            body.extend_from_slice(&[status, pitch & 0x7f, velocity & 0x7f]);
            now = tick;
        }
        write_vlq(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x2f, 0x00]);

        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// `round(numer / denom)` with ties going to the even neighbour.
fn div_round_half_even(numer: u128, denom: u128) -> u128 {
    let q = numer / denom;
    let r = numer % denom;
    match (2 * r).cmp(&denom) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Maps tick times onto a grid of `steps_per_beat` steps per beat.
///
/// Onsets and durations are rounded half-to-even, and durations are clamped
/// to at least one step.
pub fn quantize(song: &MidiSong, steps_per_beat: u32) -> Vec<NoteEvent> {
    assert!(steps_per_beat >= 1, "steps_per_beat must be at least 1");
    let tpb = u128::from(song.ticks_per_beat);
    let spb = u128::from(steps_per_beat);
    song.notes
        .iter()
        .map(|n| NoteEvent {
            onset: div_round_half_even(u128::from(n.onset) * spb, tpb) as u64,
            duration: div_round_half_even(u128::from(n.duration) * spb, tpb).max(1) as u64,
            ..*n
        })
        .collect()
}
