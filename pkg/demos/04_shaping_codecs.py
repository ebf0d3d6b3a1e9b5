"""Distribution matchers: sphere shaping vs CCDM vs Maxwell-Boltzmann.

Shows the trellis enumeration on a toy sphere, the headline 256-amplitude
codec, rate accounting, and energy statistics of the three amplitude laws.
Run:  python demos/04_shaping_codecs.py
"""

import itertools

import numpy as np

from fiberlab.shaping import (AMPLITUDES, CcdmCodec, EssCodec, ess_codec,
                              ess_min_emax, mb_fit_nu, mb_probs)

print("== toy sphere: block 3, energy <= 27 ==")
codec = EssCodec(3, 27)
seqs = [s for s in itertools.product(AMPLITUDES, repeat=3)
        if sum(a * a for a in s) <= 27]
print(f"{codec.n_sequences} admissible sequences, {codec.k_bits_max} bits")
for i in range(min(8, codec.n_sequences)):
    print(f"  index {i} -> {tuple(codec.encode_index(i))}")
assert [tuple(codec.encode_index(i)) for i in range(codec.n_sequences)] \
    == sorted(seqs)

print("\n== headline codec: 332 bits over 256 amplitudes ==")
e_max = ess_min_emax(256, 332)
big = ess_codec(256, e_max)
print(f"minimum energy bound: {e_max} (vs 12544 unconstrained)")
print(f"sphere holds 2^{big.n_sequences.bit_length() - 1} sequences")
print(f"net PAS rate: 4 + 4*332/256 = {4 + 4 * 332 / 256} bits/4D")
rng = np.random.default_rng(4)
bits = rng.integers(0, 2, size=332)
amps = big.encode(bits)
assert np.array_equal(big.decode(amps), bits)
print(f"one block: energy {int(np.sum(amps**2))} <= {e_max}, roundtrip exact")

print("\n== mean energy per amplitude at ~1.3 bits/amplitude ==")
p_mb = mb_probs(mb_fit_nu(332 / 256))
print(f"MB (i.i.d. ideal): {np.sum(p_mb * np.square(AMPLITUDES)):.4f}")
print(f"sphere shaping (block 256): {big.codebook_mean_energy(332):.4f}")
comp = tuple(int(c) for c in np.round(p_mb * 256))  # MB-quantized composition
cc = CcdmCodec(comp)
print(f"CCDM with composition {comp}: {cc.mean_energy_per_amplitude():.4f} "
      f"at {cc.k_bits_max} bits ({cc.k_bits_max / 256:.4f} bits/amplitude; "
      f"finite-block rate loss vs the 332-bit sphere)")
