//! Accurate / approximate address pools and the critical-bit page mapping.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::characterization::{ErrorMap, SortedAddressList};
use crate::device::WORD_BITS;
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 32;
const WORD_BYTES: usize = (WORD_BITS / 8) as usize;

/// Partition of the address space built from a characterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddressPool {
    pub capacity_words: usize,
    /// Addresses never observed wrong, ascending.
    pub accurate: Vec<u32>,
    /// Erroneous addresses, least severe first.
    pub approximate: SortedAddressList,
    /// Tracking granularity in bytes.
    pub block_size: usize,
}

/// Splits `0..capacity` into the addresses absent from `error_map` and the
/// strategy-2 ordered erroneous addresses.
pub fn build_pool(
    error_map: &ErrorMap,
    capacity: usize,
    sorted: &SortedAddressList,
) -> Result<AddressPool> {
    if error_map.capacity_words != capacity {
        return Err(Error::Mismatch(format!(
            "error map covers {} words, pool capacity is {capacity}",
            error_map.capacity_words
        )));
    }
    let mut listed: Vec<u32> = sorted.addresses().collect();
    listed.sort_unstable();
    if !listed.iter().copied().eq(error_map.addresses()) {
        return Err(Error::Mismatch(
            "sorted address list does not match the error map".into(),
        ));
    }
    let accurate = (0..capacity as u32)
        .filter(|a| !error_map.contains(*a))
        .collect();
    Ok(AddressPool {
        capacity_words: capacity,
        accurate,
        approximate: sorted.clone(),
        block_size: DEFAULT_BLOCK_SIZE,
    })
}

impl AddressPool {
    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size;
        self
    }

    pub fn accurate_fraction(&self) -> f64 {
        self.accurate.len() as f64 / self.capacity_words as f64
    }

    /// One bit per `block_size`-byte block, set when the block holds an
    /// erroneous word. A trailing partial block gets its own bit.
    pub fn erroneous_blocks(&self) -> Result<Vec<bool>> {
        let words_per_block = words_per_block(self.block_size)?;
        let mut bits = vec![false; self.capacity_words.div_ceil(words_per_block)];
        for a in self.approximate.addresses() {
            bits[a as usize / words_per_block] = true;
        }
        Ok(bits)
    }

    /// Summary row: capacity, accurate and approximate counts, accurate
    /// percentage, block size, erroneous blocks and tracking bits.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let blocks = self.erroneous_blocks()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "capacity_words",
            "accurate_words",
            "approximate_words",
            "accurate_pct",
            "block_size_bytes",
            "erroneous_blocks",
            "tracking_bits",
        ])?;
        w.write_record([
            self.capacity_words.to_string(),
            self.accurate.len().to_string(),
            self.approximate.len().to_string(),
            format!("{:.4}", 100.0 * self.accurate_fraction()),
            self.block_size.to_string(),
            blocks.iter().filter(|&&b| b).count().to_string(),
            blocks.len().to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

fn words_per_block(block_size: usize) -> Result<usize> {
    if block_size == 0 || !block_size.is_multiple_of(WORD_BYTES) {
        return Err(Error::InvalidArgument(format!(
            "block size {block_size} is not a whole number of words"
        )));
    }
    Ok(block_size / WORD_BYTES)
}

/// Bits needed to flag every `block_size`-byte block of `memory_bytes`.
pub fn tracking_overhead(memory_bytes: u64, block_size: u64) -> Result<u64> {
    if block_size == 0 || !memory_bytes.is_multiple_of(block_size) {
        return Err(Error::InvalidArgument(format!(
            "block size {block_size} does not divide {memory_bytes} bytes"
        )));
    }
    Ok(memory_bytes / block_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRequest {
    pub words: usize,
    pub critical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub paddr: u32,
    pub critical: bool,
}

/// Virtual-to-physical word mapping with a critical flag per entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationTable {
    pub mappings: BTreeMap<u64, Mapping>,
    pub tracking_structure_bits: u64,
}

impl AllocationTable {
    pub fn translate(&self, vaddr: u64) -> Result<(u32, bool)> {
        self.mappings
            .get(&vaddr)
            .map(|m| (m.paddr, m.critical))
            .ok_or(Error::Unmapped(vaddr))
    }

    pub fn len(&self) -> usize {
        self.mappings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mappings.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            vaddr: u64,
            paddr: u32,
            critical: bool,
        }
        #[derive(Serialize)]
        struct Doc {
            tracking_structure_bits: u64,
            mappings: Vec<Row>,
        }
        let doc = Doc {
            tracking_structure_bits: self.tracking_structure_bits,
            mappings: self
                .mappings
                .iter()
                .map(|(&vaddr, m)| Row {
                    vaddr,
                    paddr: m.paddr,
                    critical: m.critical,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Pure lookup of a recorded mapping.
pub fn translate(table: &AllocationTable, vaddr: u64) -> Result<(u32, bool)> {
    table.translate(vaddr)
}

/// First-fit allocator over an [`AddressPool`].
///
/// Critical data only ever lands in the accurate pool. Approximate data uses
/// accurate addresses first when `approx_uses_accurate` is set, then the
/// erroneous addresses in strategy-2 order. Nothing is ever freed.
#[derive(Debug, Clone)]
pub struct Allocator {
    pool: AddressPool,
    erroneous: Vec<bool>,
    taken: Vec<bool>,
    accurate_cursor: usize,
    approximate_cursor: usize,
    approx_uses_accurate: bool,
    table: AllocationTable,
    next_vaddr: u64,
}

impl Allocator {
    pub fn new(pool: AddressPool) -> Result<Self> {
        let tracking = pool
            .capacity_words
            .div_ceil(words_per_block(pool.block_size)?) as u64;
        let mut erroneous = vec![false; pool.capacity_words];
        for a in pool.approximate.addresses() {
            erroneous[a as usize] = true;
        }
        Ok(Allocator {
            taken: vec![false; pool.capacity_words],
            erroneous,
            pool,
            accurate_cursor: 0,
            approximate_cursor: 0,
            approx_uses_accurate: true,
            table: AllocationTable {
                mappings: BTreeMap::new(),
                tracking_structure_bits: tracking,
            },
            next_vaddr: 0,
        })
    }

    pub fn approx_uses_accurate(mut self, yes: bool) -> Self {
        self.approx_uses_accurate = yes;
        self
    }

    pub fn pool(&self) -> &AddressPool {
        &self.pool
    }

    pub fn table(&self) -> &AllocationTable {
        &self.table
    }

    pub fn into_table(self) -> AllocationTable {
        self.table
    }

    pub fn accurate_free(&self) -> usize {
        self.pool.accurate[self.accurate_cursor..]
            .iter()
            .filter(|&&a| !self.taken[a as usize])
            .count()
    }

    pub fn approximate_free(&self) -> usize {
        self.pool.approximate.entries[self.approximate_cursor..]
            .iter()
            .filter(|e| !self.taken[e.addr as usize])
            .count()
    }

    fn take_accurate(&mut self, n: usize, out: &mut Vec<u32>) {
        while out.len() < n {
            let a = self.pool.accurate[self.accurate_cursor];
            self.accurate_cursor += 1;
            if !self.taken[a as usize] {
                self.taken[a as usize] = true;
                out.push(a);
            }
        }
    }

    fn take_approximate(&mut self, n: usize, out: &mut Vec<u32>) {
        let target = out.len() + n;
        while out.len() < target {
            let a = self.pool.approximate.entries[self.approximate_cursor].addr;
            self.approximate_cursor += 1;
            if !self.taken[a as usize] {
                self.taken[a as usize] = true;
                out.push(a);
            }
        }
    }

    /// Reserves `request.words` physical words, maps them at consecutive
    /// virtual addresses and returns them in mapping order.
    pub fn allocate(&mut self, request: AllocationRequest) -> Result<Vec<u32>> {
        let n = request.words;
        if n == 0 {
            return Err(Error::InvalidArgument("allocation of zero words".into()));
        }
        let accurate_free = self.accurate_free();
        let mut out = Vec::with_capacity(n);
        if request.critical {
            if n > accurate_free {
                return Err(Error::AllocationFailed {
                    pool: "accurate",
                    requested: n,
                    available: accurate_free,
                });
            }
            self.take_accurate(n, &mut out);
        } else {
            let from_accurate = if self.approx_uses_accurate {
                n.min(accurate_free)
            } else {
                0
            };
            let approximate_free = self.approximate_free();
            if n - from_accurate > approximate_free {
                return Err(Error::AllocationFailed {
                    pool: "approximate",
                    requested: n,
                    available: from_accurate + approximate_free,
                });
            }
            self.take_accurate(from_accurate, &mut out);
            self.take_approximate(n - from_accurate, &mut out);
        }
        for &paddr in &out {
            self.table.mappings.insert(
                self.next_vaddr,
                Mapping {
                    paddr,
                    critical: request.critical,
                },
            );
            self.next_vaddr += 1;
        }
        Ok(out)
    }

    /// Records an explicit mapping. Critical data must sit on an accurate
    /// address and no physical word is mapped twice.
    pub fn map(&mut self, vaddr: u64, paddr: u32, critical: bool) -> Result<()> {
        let p = paddr as usize;
        if p >= self.pool.capacity_words {
            return Err(Error::AddressOutOfRange {
                addr: p,
                capacity: self.pool.capacity_words,
            });
        }
        if critical && self.erroneous[p] {
            return Err(Error::InvalidArgument(format!(
                "critical data cannot be mapped to erroneous address {paddr:#06x}"
            )));
        }
        if self.taken[p] {
            return Err(Error::InvalidArgument(format!(
                "address {paddr:#06x} already allocated"
            )));
        }
        if self.table.mappings.contains_key(&vaddr) {
            return Err(Error::InvalidArgument(format!(
                "virtual address {vaddr:#x} already mapped"
            )));
        }
        self.taken[p] = true;
        self.table
            .mappings
            .insert(vaddr, Mapping { paddr, critical });
        self.next_vaddr = self.next_vaddr.max(vaddr + 1);
        Ok(())
    }
}
