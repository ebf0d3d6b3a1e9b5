"""Constellation shaping codecs: sphere shaping, CCDM, Maxwell-Boltzmann, PAS.

The amplitude alphabet is the 64-QAM half-axis set {1, 3, 5, 7} (energies
{1, 9, 25, 49}).  Two invertible distribution matchers are provided:

* :class:`EssCodec` -- enumerative sphere shaping: lexicographic indexing of
  all length-n amplitude sequences with total energy <= e_max.
* :class:`CcdmCodec` -- constant-composition matching: lexicographic indexing
  of the permutations of a fixed amplitude multiset.

Both map k-bit blocks to amplitude blocks and back exactly; counts are kept
as arbitrary-precision integers (they overflow 64 bits far below the
block length 256 used in the experiments).  Amplitude energies are all
congruent to 1 mod 8, so energy tables live on a stride-8 grid, which keeps
the sphere-shaping trellis small.

PAS framing: per 4D symbol, four amplitudes (round-robin over the real
dimensions XI, XQ, YI, YQ) combine with four uniform sign bits; a frame's
net rate is 4 + 4 k_bits / block_len bits per 4D symbol.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._seeds import derive_rng
from .signals import Constellation

__all__ = [
    "AMPLITUDES",
    "ENERGIES",
    "DmConfig",
    "ShapingFrame",
    "EssCodec",
    "CcdmCodec",
    "ess_codec",
    "ess_min_emax",
    "mb_probs",
    "mb_fit_nu",
    "mb_sample",
    "pas_map",
    "pas_demap_hard",
    "bits_to_int",
    "int_to_bits",
    "build_pas_frame",
    "frame_bit_budget",
    "shaped_qam64",
]

AMPLITUDES = (1, 3, 5, 7)
ENERGIES = (1, 9, 25, 49)
_SHIFTS = tuple((e - 1) // 8 for e in ENERGIES)  # stride-8 trellis offsets


@dataclass(frozen=True)
class DmConfig:
    """Distribution-matcher selection for one amplitude stream."""

    kind: str = "ess"
    block_len: int = 256
    k_bits: int = 332
    e_max: int | None = None
    composition: tuple[int, int, int, int] | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("ess", "ccdm", "mb_iid"):
            raise ValueError(f"unknown DM kind {self.kind!r}")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if self.kind == "ccdm":
            if self.composition is None:
                raise ValueError("ccdm requires a composition")
            if sum(self.composition) != self.block_len:
                raise ValueError("composition must sum to block_len")


@dataclass(frozen=True)
class ShapingFrame:
    """One encoded PAS frame: bits in, 4D symbols out."""

    info_bits: np.ndarray
    amplitude_blocks: np.ndarray  # (n_blocks, block_len) ints
    sign_bits: np.ndarray
    symbols_4d: np.ndarray  # (2, n) complex, unit mean energy scale
    net_rate_bits_per_4d: float


def bits_to_int(bits: np.ndarray) -> int:
    """MSB-first bit vector to arbitrary-precision integer."""
    value = 0
    for b in np.asarray(bits):
        value = (value << 1) | (int(b) & 1)  # keep pure-Python bigints
    return value


def int_to_bits(value: int, n_bits: int) -> np.ndarray:
    if value < 0 or value >= (1 << n_bits):
        raise ValueError(f"value does not fit in {n_bits} bits")
    return np.array([(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)],
                    dtype=np.uint8)


class EssCodec:
    """Enumerative sphere shaping over {1,3,5,7}^block_len with energy <= e_max.

    Sequences are indexed lexicographically (amplitude 1 < 3 < 5 < 7).  The
    suffix-count trellis T[m][j] = number of length-m sequences with energy
    <= m + 8 j is built once;  encode/decode walk it position by position.
    """

    def __init__(self, block_len: int, e_max: int, _table=None):
        if e_max < block_len:
            raise ValueError("e_max below minimum block energy")
        if (e_max - block_len) % 8:
            # Only energies congruent to block_len mod 8 are attainable.
            e_max = block_len + 8 * ((e_max - block_len) // 8)
        self.block_len = block_len
        self.e_max = e_max
        self._jmax = (e_max - block_len) // 8
        self._table = self._build_table() if _table is None else _table
        self.n_sequences = int(self._table[block_len][self._jmax])
        self.k_bits_max = self.n_sequences.bit_length() - 1

    def _build_table(self):
        jmax = self._jmax
        table = [[1] * (jmax + 1)]
        for m in range(1, self.block_len + 1):
            prev = table[m - 1]
            row = [0] * (jmax + 1)
            for j in range(jmax + 1):
                acc = 0
                for s in _SHIFTS:
                    if j - s >= 0:
                        acc += prev[j - s]
                row[j] = acc
            table.append(row)
        return table

    def _count(self, m: int, budget: int) -> int:
        """Number of length-m sequences with energy <= budget."""
        if budget < m:
            return 0
        j = min((budget - m) // 8, self._jmax)
        return self._table[m][j]

    def encode(self, bits: np.ndarray) -> np.ndarray:
        index = bits_to_int(bits)
        return self.encode_index(index, len(np.atleast_1d(bits)))

    def encode_index(self, index: int, k_bits: int | None = None) -> np.ndarray:
        if index < 0 or index >= self.n_sequences:
            raise ValueError("index out of range for this sphere")
        out = np.empty(self.block_len, dtype=np.int64)
        budget = self.e_max
        for pos in range(self.block_len):
            m = self.block_len - pos - 1
            for a, e in zip(AMPLITUDES, ENERGIES):
                c = self._count(m, budget - e) if m else (1 if budget >= e else 0)
                if index < c:
                    out[pos] = a
                    budget -= e
                    break
                index -= c
            else:
                raise AssertionError("enumeration walked off the sphere")
        return out

    def decode(self, amplitudes: np.ndarray) -> np.ndarray:
        return int_to_bits(self.decode_index(amplitudes), self.k_bits_max)

    def decode_index(self, amplitudes: np.ndarray) -> int:
        amps = np.asarray(amplitudes, dtype=np.int64)
        if amps.shape != (self.block_len,):
            raise ValueError("amplitude block has the wrong length")
        if int(np.sum(amps ** 2)) > self.e_max:
            raise ValueError("amplitude block violates the energy bound")
        index = 0
        budget = self.e_max
        for pos in range(self.block_len):
            m = self.block_len - pos - 1
            a_here = int(amps[pos])
            if a_here not in AMPLITUDES:
                raise ValueError(f"amplitude {a_here} outside the alphabet")
            for a, e in zip(AMPLITUDES, ENERGIES):
                if a == a_here:
                    budget -= e
                    break
                index += self._count(m, budget - e) if m else (1 if budget >= e else 0)
        return index

    def mean_energy_per_amplitude(self) -> float:
        """Exact mean energy per amplitude over all admissible sequences."""
        row = self._table[self.block_len]
        total = row[self._jmax]
        acc = 0
        prev = 0
        for j in range(self._jmax + 1):
            exact = row[j] - prev
            prev = row[j]
            acc += exact * (self.block_len + 8 * j)
        return acc / total / self.block_len

    def codebook_mean_energy(self, k_bits: int | None = None) -> float:
        """Mean energy per amplitude over the first 2^k_bits sequences."""
        k = self.k_bits_max if k_bits is None else k_bits
        n = 1 << k
        if n > self.n_sequences:
            raise ValueError("codebook larger than the sphere")
        # Walk the trellis accumulating (count, energy) of all sequences with
        # index < n: at each branch not taken, add its whole subtree.
        total_e = 0
        budget = self.e_max
        index = n - 1  # follow the path of the last codeword
        prefix_e = 0
        for pos in range(self.block_len):
            m = self.block_len - pos - 1
            for a, e in zip(AMPLITUDES, ENERGIES):
                c = self._count(m, budget - e) if m else (1 if budget >= e else 0)
                if index < c:
                    budget -= e
                    prefix_e += e
                    break
                # whole subtree below amplitude a is in the codebook
                total_e += c * (prefix_e + e) + self._subtree_energy(m, budget - e)
                index -= c
        total_e += prefix_e  # the last codeword itself
        return total_e / n / self.block_len

    def _subtree_energy(self, m: int, budget: int) -> int:
        """Sum of suffix energies over all length-m sequences within budget."""
        if m == 0 or budget < m:
            return 0
        if not hasattr(self, "_energy_table"):
            self._energy_table = self._build_energy_table()
        j = min((budget - m) // 8, self._jmax)
        return self._energy_table[m][j]

    def _build_energy_table(self):
        jmax = self._jmax
        etab = [[0] * (jmax + 1)]
        for m in range(1, self.block_len + 1):
            prev_e = etab[m - 1]
            prev_c = self._table[m - 1]
            row = [0] * (jmax + 1)
            for j in range(jmax + 1):
                acc = 0
                for s, e in zip(_SHIFTS, ENERGIES):
                    if j - s >= 0:
                        acc += prev_e[j - s] + e * prev_c[j - s]
                row[j] = acc
            etab.append(row)
        return etab


def ess_min_emax(block_len: int, k_bits: int) -> int:
    """Smallest energy bound admitting at least 2^k_bits sequences.

    Runs the suffix-count recursion once on the full energy range and scans
    the cumulative counts; raises if the rate is infeasible for the alphabet.
    """
    if k_bits < 0:
        raise ValueError("k_bits must be >= 0")
    if k_bits > 2 * block_len:
        raise ValueError("rate infeasible: alphabet supports 2 bits/amplitude")
    full = EssCodec(block_len, 49 * block_len)
    need = 1 << k_bits
    row = full._table[block_len]
    for j, count in enumerate(row):
        if count >= need:
            return block_len + 8 * j
    raise AssertionError("unreachable: full sphere holds 4^block_len sequences")


_ESS_CACHE: dict[tuple[int, int], EssCodec] = {}


def ess_codec(block_len: int, e_max: int, cache_dir: str | Path | None = None) -> EssCodec:
    """Build (or load) an ESS codec, memoizing the trellis.

    With ``cache_dir`` the suffix-count table is persisted to disk keyed by
    (alphabet, block_len, e_max) and verified with a SHA-256 integrity hash.
    """
    key = (block_len, e_max)
    if key in _ESS_CACHE:
        return _ESS_CACHE[key]
    codec = None
    path = None
    if cache_dir is not None:
        tag = f"ess_{'-'.join(map(str, AMPLITUDES))}_{block_len}_{e_max}"
        path = Path(cache_dir) / f"{tag}.pkl"
        if path.exists():
            blob = path.read_bytes()
            digest, payload = blob[:32], blob[32:]
            if hashlib.sha256(payload).digest() == digest:
                table = pickle.loads(payload)
                codec = EssCodec(block_len, e_max, _table=table)
    if codec is None:
        codec = EssCodec(block_len, e_max)
        if path is not None:
            payload = pickle.dumps(codec._table, protocol=4)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(hashlib.sha256(payload).digest() + payload)
            tmp.replace(path)
    _ESS_CACHE[key] = codec
    return codec


class CcdmCodec:
    """Constant-composition distribution matcher (exact lexicographic ranking).

    ``composition[i]`` is the number of occurrences of amplitude
    ``AMPLITUDES[i]`` in every output block.  Encoding maps a k-bit index to
    the index-th multiset permutation in lexicographic order; this is the
    integer-exact form of the usual arithmetic-coding matcher.
    """

    def __init__(self, composition: tuple[int, int, int, int]):
        if len(composition) != 4 or any(c < 0 for c in composition):
            raise ValueError("composition must be four non-negative counts")
        self.composition = tuple(int(c) for c in composition)
        self.block_len = sum(self.composition)
        if self.block_len < 1:
            raise ValueError("empty composition")
        self.n_sequences = _multinomial(self.composition)
        self.k_bits_max = self.n_sequences.bit_length() - 1

    def encode(self, bits: np.ndarray) -> np.ndarray:
        return self.encode_index(bits_to_int(bits))

    def encode_index(self, index: int) -> np.ndarray:
        if index < 0 or index >= self.n_sequences:
            raise ValueError("index out of range for this composition")
        counts = list(self.composition)
        remaining = self.n_sequences
        n_left = self.block_len
        out = np.empty(self.block_len, dtype=np.int64)
        for pos in range(self.block_len):
            for i, a in enumerate(AMPLITUDES):
                if counts[i] == 0:
                    continue
                c = remaining * counts[i] // n_left  # exact integer division
                if index < c:
                    out[pos] = a
                    counts[i] -= 1
                    remaining = c
                    n_left -= 1
                    break
                index -= c
            else:
                raise AssertionError("composition exhausted early")
        return out

    def decode(self, amplitudes: np.ndarray) -> np.ndarray:
        return int_to_bits(self.decode_index(amplitudes), self.k_bits_max)

    def decode_index(self, amplitudes: np.ndarray) -> int:
        amps = np.asarray(amplitudes, dtype=np.int64)
        if amps.shape != (self.block_len,):
            raise ValueError("amplitude block has the wrong length")
        counts = list(self.composition)
        remaining = self.n_sequences
        n_left = self.block_len
        index = 0
        for pos in range(self.block_len):
            a_here = int(amps[pos])
            matched = False
            for i, a in enumerate(AMPLITUDES):
                if counts[i] == 0:
                    continue
                c = remaining * counts[i] // n_left
                if a == a_here:
                    counts[i] -= 1
                    remaining = c
                    n_left -= 1
                    matched = True
                    break
                index += c
            if not matched:
                raise ValueError("block does not match the composition")
        return index

    def mean_energy_per_amplitude(self) -> float:
        return sum(c * e for c, e in zip(self.composition, ENERGIES)) / self.block_len


def _multinomial(counts) -> int:
    total = 1
    n = 0
    for c in counts:
        for i in range(1, c + 1):
            n += 1
            total = total * n // i
    return total


def mb_probs(nu: float) -> np.ndarray:
    """Maxwell-Boltzmann amplitude distribution P(a) proportional to exp(-nu a^2)."""
    w = np.exp(-nu * np.asarray(ENERGIES, dtype=float))
    return w / w.sum()


def _mb_entropy(nu: float) -> float:
    p = mb_probs(nu)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def mb_fit_nu(target_entropy_bits: float, tol: float = 1e-9) -> float:
    """Bisect nu so that H(P(nu)) equals the target entropy (bits/amplitude)."""
    if not 0.0 <= target_entropy_bits <= 2.0:
        raise ValueError("target entropy must lie in [0, 2] bits")
    if target_entropy_bits == 2.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while _mb_entropy(hi) > target_entropy_bits:
        hi *= 2.0
        if hi > 1e6:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _mb_entropy(mid) > target_entropy_bits:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    nu = 0.5 * (lo + hi)
    return nu


def mb_sample(nu: float, n: int, rng_seed: int) -> np.ndarray:
    """Draw n i.i.d. Maxwell-Boltzmann amplitudes (sampler only, no inverse)."""
    rng = derive_rng(rng_seed, "mb-sample")
    return rng.choice(np.asarray(AMPLITUDES), size=n, p=mb_probs(nu))


def pas_map(amplitudes: np.ndarray, sign_bits: np.ndarray,
            energy_per_2d: float = 42.0) -> np.ndarray:
    """Combine amplitudes and sign bits into dual-polarization 64-QAM symbols.

    Four amplitudes and four sign bits per 4D symbol, in dimension order
    (XI, XQ, YI, YQ); sign bit 0 maps to +, 1 to -.  Points are scaled by
    1/sqrt(energy_per_2d) so the constellation has the stated mean 2D energy.
    """
    amps = np.asarray(amplitudes, dtype=float)
    bits = np.asarray(sign_bits)
    if amps.size != bits.size or amps.size % 4:
        raise ValueError("need four amplitudes and four sign bits per 4D symbol")
    a = amps.reshape(-1, 4)
    s = 1.0 - 2.0 * bits.reshape(-1, 4).astype(float)
    scale = 1.0 / np.sqrt(energy_per_2d)
    x = (s[:, 0] * a[:, 0] + 1j * s[:, 1] * a[:, 1]) * scale
    y = (s[:, 2] * a[:, 2] + 1j * s[:, 3] * a[:, 3]) * scale
    return np.vstack([x, y])


def pas_demap_hard(symbols: np.ndarray,
                   energy_per_2d: float = 42.0) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-grid inverse of :func:`pas_map` (exact on noiseless input)."""
    sym = np.asarray(symbols, dtype=np.complex128) * np.sqrt(energy_per_2d)
    comps = np.stack([sym[0].real, sym[0].imag, sym[1].real, sym[1].imag], axis=1)
    signs = (comps < 0).astype(np.uint8)
    levels = np.asarray(AMPLITUDES, dtype=float)
    idx = np.argmin(np.abs(np.abs(comps)[..., None] - levels[None, None, :]), axis=-1)
    amps = np.asarray(AMPLITUDES)[idx]
    return amps.reshape(-1), signs.reshape(-1)


def frame_bit_budget(n_4d: int, dm) -> int:
    """Gross bits carried by n_4d PAS symbols: 4 sign bits + DM payload."""
    n_amps = 4 * n_4d
    if n_amps % dm.block_len:
        raise ValueError("4 * n_4d must be a multiple of the DM block length")
    n_blocks = n_amps // dm.block_len
    return 4 * n_4d + n_blocks * dm.k_bits


def build_pas_frame(info_bits: np.ndarray, codec, k_bits: int, n_4d: int,
                    energy_per_2d: float) -> ShapingFrame:
    """Encode a gross-budget bit vector into one PAS frame.

    Layout: the first 4*n_4d bits are sign bits, the rest feed the DM in
    k_bits chunks (one per amplitude block).  Amplitude blocks are
    concatenated and assigned round-robin to the four real dimensions.
    """
    bits = np.asarray(info_bits, dtype=np.uint8)
    n_amps = 4 * n_4d
    n_blocks = n_amps // codec.block_len
    expected = 4 * n_4d + n_blocks * k_bits
    if bits.size != expected:
        raise ValueError(f"frame needs {expected} bits, got {bits.size}")
    sign_bits = bits[: 4 * n_4d]
    dm_bits = bits[4 * n_4d:].reshape(n_blocks, k_bits)
    blocks = np.stack([codec.encode_index(bits_to_int(row)) for row in dm_bits])
    symbols = pas_map(blocks.reshape(-1), sign_bits, energy_per_2d)
    net_rate = 4.0 + 4.0 * k_bits / codec.block_len
    return ShapingFrame(info_bits=bits, amplitude_blocks=blocks,
                        sign_bits=sign_bits, symbols_4d=symbols,
                        net_rate_bits_per_4d=net_rate)


def shaped_qam64(amp_probs: np.ndarray) -> Constellation:
    """64-QAM constellation with product priors from one amplitude law.

    Signs are uniform; the grid is scaled to unit mean 2D energy under the
    given amplitude distribution.
    """
    p_amp = np.asarray(amp_probs, dtype=float)
    if p_amp.shape != (4,):
        raise ValueError("need one probability per amplitude {1,3,5,7}")
    p_level = {}
    for a, p in zip(AMPLITUDES, p_amp):
        p_level[a] = p / 2.0
        p_level[-a] = p / 2.0
    e2d = 2.0 * float(np.sum(p_amp * np.asarray(ENERGIES)))
    levels = np.array([-7, -5, -3, -1, 1, 3, 5, 7], dtype=float)
    pts, pri = [], []
    for re in levels:
        for im in levels:
            pts.append((re + 1j * im) / np.sqrt(e2d))
            pri.append(p_level[int(re)] * p_level[int(im)])
    return Constellation(np.asarray(pts), np.arange(64), np.asarray(pri))
