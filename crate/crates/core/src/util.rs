/// SplitMix64 finalizer; derives independent per-stream seeds from one seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Equal split of `d` into `m` contiguous ranges; `None` when `m` does not divide `d`.
pub fn equal_split(d: usize, m: usize) -> Option<Vec<usize>> {
    if m == 0 || !d.is_multiple_of(m) {
        return None;
    }
    Some(vec![d / m; m])
}

pub(crate) fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    off.push(0);
    for &d in dims {
        acc += d;
        off.push(acc);
    }
    off
}

/// Bits needed to address `k` codewords.
pub fn index_bits(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}
