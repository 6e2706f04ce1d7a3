use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::LspId;

/// Half-open frequency-slot range `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRange {
    pub start: u32,
    pub width: u32,
}

impl SlotRange {
    pub fn new(start: u32, width: u32) -> Self {
        Self { start, width }
    }

    pub fn end(&self) -> u32 {
        self.start + self.width
    }

    pub fn slots(&self) -> std::ops::Range<u32> {
        self.start..self.end()
    }

    pub fn overlaps(&self, other: &SlotRange) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

impl fmt::Display for SlotRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("range {range} exceeds grid of {slot_count} slots")]
    OutOfRange { range: SlotRange, slot_count: u32 },
    #[error("slot {slot} already owned by {owner}")]
    Occupied { slot: u32, owner: LspId },
    #[error("slot {slot} not owned by {lsp}")]
    NotOwner { slot: u32, lsp: LspId },
}

/// Flexi-grid spectrum of one optical link.
///
/// The occupancy bits and the owner map are kept in lockstep: a slot is
/// occupied iff it has exactly one owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    slot_count: u32,
    occupied: Vec<bool>,
    owner: BTreeMap<u32, LspId>,
}

impl SpectrumGrid {
    pub fn new(slot_count: u32) -> Self {
        Self {
            slot_count,
            occupied: vec![false; slot_count as usize],
            owner: BTreeMap::new(),
        }
    }

    pub fn slot_count(&self) -> u32 {
        self.slot_count
    }

    pub fn is_occupied(&self, slot: u32) -> bool {
        self.occupied.get(slot as usize).copied().unwrap_or(false)
    }

    pub fn owner_of(&self, slot: u32) -> Option<&LspId> {
        self.owner.get(&slot)
    }

    pub fn owners(&self) -> &BTreeMap<u32, LspId> {
        &self.owner
    }

    pub fn occupied_count(&self) -> u32 {
        self.owner.len() as u32
    }

    pub fn fits(&self, range: SlotRange) -> bool {
        range.width > 0 && range.end() <= self.slot_count
    }

    /// True when every slot of `range` lies inside the grid and is free.
    pub fn is_free(&self, range: SlotRange) -> bool {
        self.fits(range) && range.slots().all(|s| !self.occupied[s as usize])
    }

    /// Free-slot mask (true = free).
    pub fn free_mask(&self) -> Vec<bool> {
        self.occupied.iter().map(|o| !o).collect()
    }

    /// Occupancy as a `0`/`1` string, slot 0 first.
    pub fn bits(&self) -> String {
        self.occupied.iter().map(|&o| if o { '1' } else { '0' }).collect()
    }

    pub fn claim(&mut self, range: SlotRange, lsp: &LspId) -> Result<(), GridError> {
        if !self.fits(range) {
            return Err(GridError::OutOfRange { range, slot_count: self.slot_count });
        }
        if let Some(slot) = range.slots().find(|&s| self.occupied[s as usize]) {
            return Err(GridError::Occupied { slot, owner: self.owner[&slot].clone() });
        }
        for s in range.slots() {
            self.occupied[s as usize] = true;
            self.owner.insert(s, lsp.clone());
        }
        Ok(())
    }

    /// Frees the slots of `range` owned by `lsp`. All-or-nothing.
    pub fn release(&mut self, range: SlotRange, lsp: &LspId) -> Result<(), GridError> {
        if !self.fits(range) {
            return Err(GridError::OutOfRange { range, slot_count: self.slot_count });
        }
        if let Some(slot) = range.slots().find(|s| self.owner.get(s) != Some(lsp)) {
            return Err(GridError::NotOwner { slot, lsp: lsp.clone() });
        }
        for s in range.slots() {
            self.occupied[s as usize] = false;
            self.owner.remove(&s);
        }
        Ok(())
    }

    /// Frees every slot whose owner fails `keep`. Returns the number freed.
    pub fn release_where(&mut self, mut keep: impl FnMut(&LspId) -> bool) -> u32 {
        let stale: Vec<u32> = self
            .owner
            .iter()
            .filter(|(_, o)| !keep(o))
            .map(|(&s, _)| s)
            .collect();
        for s in &stale {
            self.occupied[*s as usize] = false;
            self.owner.remove(s);
        }
        stale.len() as u32
    }

    /// Checks that the bit-vector and owner map agree.
    pub fn is_consistent(&self) -> bool {
        self.occupied.len() == self.slot_count as usize
            && self
                .occupied
                .iter()
                .enumerate()
                .all(|(i, &o)| o == self.owner.contains_key(&(i as u32)))
            && self.owner.keys().all(|&s| s < self.slot_count)
    }
}
